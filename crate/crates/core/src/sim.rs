//! Seeded time-domain simulation of the plant, the two-side filters and the
//! unknown-input observers.
//!
//! The plant state `x` is shared; each category contributes a block
//! `ζ = [z_c; z_p; z]`. The joint system `[x; ζ]` is block lower-triangular,
//! so each block is discretized together with `x` and only its lower rows
//! are kept. Inputs are held over each step:
//! `v = [u, a_u, a_y, a_c, f_1, f_2, ω]`.

use std::io::Write;
use std::ops::ControlFlow;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{Category, DetectorBank};
use crate::error::{Error, Result};
use crate::model::AugmentedModel;
use crate::numerics::{discretize, hstack, vstack, Integrator, RealMatrix};
use crate::scenario::{anomaly_timeline, Anomaly, AnomalyParams};
use crate::threat::{Channel, SignalContext, SignalGenerator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordLevel {
    /// Residual norms only.
    Norms,
    /// Residual vectors and norms, `y_p`, `y*`.
    #[default]
    Residuals,
    /// Every state and signal.
    Full,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Overrides the timeline's duration when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub noise_on: bool,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub record: RecordLevel,
    /// Initial plant state; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Initial observer state `z(0)` for every category; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Vec<f64>>,
    /// Categories to simulate; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<Category>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            t_end: None,
            seed: 0,
            noise_on: true,
            integrator: Integrator::Exact,
            record: RecordLevel::Residuals,
            x0: None,
            z0: None,
            categories: None,
        }
    }
}

impl SimConfig {
    pub fn noise_free() -> Self {
        Self { noise_on: false, ..Self::default() }
    }
}

/// Named set of signal generators and the run length.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTimeline {
    pub name: String,
    pub t_end: f64,
    pub signals: Vec<SignalGenerator>,
}

impl ScenarioTimeline {
    pub fn new(name: impl Into<String>, t_end: f64) -> Self {
        Self { name: name.into(), t_end, signals: Vec::new() }
    }

    pub fn with(mut self, g: SignalGenerator) -> Self {
        self.signals.push(g);
        self
    }

    /// Earliest onset on `channel`, if any generator drives it.
    pub fn onset(&self, channel: Channel) -> Option<f64> {
        self.signals.iter().filter(|g| g.channel == channel).map(|g| g.t0).min_by(f64::total_cmp)
    }
}

/// Row-major time series of fixed dimension.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Series {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Series {
    fn new(dim: usize, cap: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * cap) }
    }

    fn push(&mut self, v: &DVector<f64>) {
        self.data.extend_from_slice(v.as_slice());
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.row(k))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryTrace {
    /// `‖res(t_k)‖₂`.
    pub norm: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub res: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_c: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_p: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_hat: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_p: Option<Series>,
}

impl CategoryTrace {
    pub fn max_norm(&self) -> f64 {
        self.norm.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub t: Vec<f64>,
    /// Set when a non-finite state ended the run early.
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_p: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_star: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_star: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_u: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_y: Option<Series>,
    pub categories: [Option<CategoryTrace>; 4],
    /// Plant state dimension, to split `x` into `x^s` and `x^a`.
    pub n_plant: usize,
}

impl SimulationTrace {
    pub fn category(&self, c: Category) -> Option<&CategoryTrace> {
        self.categories[c.index()].as_ref()
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Physical plant state `x^s(t_k)`.
    pub fn x_s(&self, k: usize) -> Option<&[f64]> {
        self.x.as_ref().map(|x| &x.row(k)[..self.n_plant])
    }

    /// Auxiliary sensor state `x^a(t_k)`.
    pub fn x_a(&self, k: usize) -> Option<&[f64]> {
        self.x.as_ref().map(|x| &x.row(k)[self.n_plant..])
    }

    /// CSV with `t`, residual norms `res_ℓ`, normalized norms `nres_ℓ = ‖res_ℓ‖/η_ℓ`
    /// (empty without thresholds), then every recorded vector series.
    pub fn write_csv<W: Write>(&self, mut w: W, thresholds: Option<&[f64; 4]>) -> Result<()> {
        let mut header: Vec<String> = vec!["t".into()];
        header.extend(Category::ALL.iter().map(|c| format!("res_{c}")));
        header.extend(Category::ALL.iter().map(|c| format!("nres_{c}")));
        let mut extra: Vec<(String, &Series)> = Vec::new();
        for (name, s) in [
            ("x", &self.x),
            ("y_p", &self.y_p),
            ("y_star", &self.y_star),
            ("u", &self.u),
            ("u_star", &self.u_star),
            ("a_u", &self.a_u),
            ("a_y", &self.a_y),
        ] {
            if let Some(s) = s {
                extra.push((name.into(), s));
            }
        }
        for c in Category::ALL {
            if let Some(ct) = self.category(c) {
                for (name, s) in [
                    ("res", &ct.res),
                    ("z_c", &ct.z_c),
                    ("z_p", &ct.z_p),
                    ("z", &ct.z),
                    ("x_hat", &ct.x_hat),
                    ("e_p", &ct.e_p),
                ] {
                    if let Some(s) = s {
                        extra.push((format!("{name}_{c}"), s));
                    }
                }
            }
        }
        for (name, s) in &extra {
            header.extend((0..s.dim).map(|i| format!("{name}_{i}")));
        }
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for k in 0..self.t.len() {
            line.clear();
            line.push_str(&format!("{}", self.t[k]));
            for c in Category::ALL {
                line.push(',');
                if let Some(ct) = self.category(c) {
                    line.push_str(&format!("{}", ct.norm[k]));
                }
            }
            for c in Category::ALL {
                line.push(',');
                if let (Some(ct), Some(th)) = (self.category(c), thresholds) {
                    line.push_str(&format!("{}", ct.norm[k] / th[c.index()]));
                }
            }
            for (_, s) in &extra {
                for v in s.row(k) {
                    line.push(',');
                    line.push_str(&format!("{v}"));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// View of one sample, passed to observers.
pub struct StepData<'a> {
    pub k: usize,
    pub t: f64,
    pub x: &'a DVector<f64>,
    pub y_p: &'a DVector<f64>,
    pub y_star: &'a DVector<f64>,
    pub v: &'a InputVector,
    pub blocks: &'a [BlockState],
}

/// The stacked input `[u, a_u, a_y, a_c, f_1, f_2, ω]` with named views.
#[derive(Debug, Clone)]
pub struct InputVector {
    pub data: DVector<f64>,
    offsets: [usize; 8],
}

impl InputVector {
    fn new(dims: [usize; 7]) -> Self {
        let mut offsets = [0; 8];
        for i in 0..7 {
            offsets[i + 1] = offsets[i] + dims[i];
        }
        Self { data: DVector::zeros(offsets[7]), offsets }
    }

    fn slot(c: Channel) -> usize {
        match c {
            Channel::U => 0,
            Channel::Au => 1,
            Channel::Ay => 2,
            Channel::Ac => 3,
            Channel::F1 => 4,
            Channel::F2 => 5,
        }
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        let i = Self::slot(c);
        &self.data.as_slice()[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn noise(&self) -> &[f64] {
        &self.data.as_slice()[self.offsets[6]..self.offsets[7]]
    }

    fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

/// Per-category filter and observer state with its discretization.
#[derive(Debug, Clone)]
pub struct BlockState {
    pub category: Category,
    /// `[z_c; z_p; z]`.
    pub zeta: DVector<f64>,
    pub x_hat: DVector<f64>,
    pub res: DVector<f64>,
    pub norm: f64,
    phi_zx: RealMatrix,
    phi_zz: RealMatrix,
    gamma_z: RealMatrix,
    h: RealMatrix,
    n: usize,
    scratch: DVector<f64>,
}

impl BlockState {
    pub fn z_c(&self) -> nalgebra::DVectorView<'_, f64> {
        self.zeta.rows(0, self.n)
    }

    pub fn z_p(&self) -> nalgebra::DVectorView<'_, f64> {
        self.zeta.rows(self.n, self.n)
    }

    pub fn z(&self) -> nalgebra::DVectorView<'_, f64> {
        let nx = self.zeta.len() - 2 * self.n;
        self.zeta.rows(2 * self.n, nx)
    }

    pub fn e_p(&self) -> DVector<f64> {
        self.z_p() - self.z_c()
    }
}

/// Stepping engine behind [`simulate`].
pub struct Simulator<'a> {
    aug: &'a AugmentedModel,
    bank: &'a DetectorBank,
    cfg: SimConfig,
    signals: Vec<SignalGenerator>,
    phi_x: RealMatrix,
    gamma_x: RealMatrix,
    blocks: Vec<BlockState>,
    x: DVector<f64>,
    v: InputVector,
    noise_sqrt: RealMatrix,
    rng: ChaCha8Rng,
    n_steps: usize,
    slots: Vec<usize>,
}

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Symmetric square root of a PSD covariance.
fn psd_sqrt(w: &RealMatrix) -> RealMatrix {
    if w.is_empty() {
        return w.clone();
    }
    let sym = (w + w.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * RealMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

impl<'a> Simulator<'a> {
    pub fn new(aug: &'a AugmentedModel, bank: &'a DetectorBank, timeline: &ScenarioTimeline, cfg: &SimConfig) -> Result<Self> {
        bank.check_dims(aug)?;
        let dt = cfg.dt;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let t_end = cfg.t_end.unwrap_or(timeline.t_end);
        if !(t_end >= dt && t_end.is_finite()) {
            return Err(Error::InvalidInput(format!("t_end must be at least dt, got {t_end}")));
        }
        let d = &aug.dims;
        let (nx, n) = (d.nx(), d.n);
        let n_c = bank.d_ac.ncols();
        let dims = [d.m, d.m_a, d.p_a, n_c, d.m_f, d.p_f, d.q];
        for g in &timeline.signals {
            let want = g.channel.dim(aug, n_c);
            if g.dim != want {
                return Err(Error::dim(format!("signal on {:?}", g.channel), want, g.dim));
            }
            if let Some(gdt) = g.bound_dt() {
                if (gdt - dt).abs() > 1e-12 * dt {
                    return Err(Error::InvalidInput(format!("generator bound to dt = {gdt} but the simulation uses {dt}")));
                }
            }
        }
        let g_x = hstack(&[
            &aug.b,
            &aug.b_a,
            &RealMatrix::zeros(nx, d.p_a),
            &RealMatrix::zeros(nx, n_c),
            &aug.f1,
            &aug.f2,
            &aug.n_mat,
        ]);
        let (phi_x, gamma_x) = discretize(&aug.a, &g_x, dt, cfg.integrator)?;
        let wanted: Vec<Category> = cfg.categories.clone().unwrap_or_else(|| Category::ALL.to_vec());
        let z0 = match &cfg.z0 {
            Some(z) if z.len() != nx => return Err(Error::dim("sim.z0", nx, z.len())),
            Some(z) => DVector::from_column_slice(z),
            None => DVector::zeros(nx),
        };
        let x = match &cfg.x0 {
            Some(v) if v.len() != nx => return Err(Error::dim("sim.x0", nx, v.len())),
            Some(v) => DVector::from_column_slice(v),
            None => DVector::zeros(nx),
        };
        let mut blocks = Vec::new();
        for c in Category::ALL.into_iter().filter(|c| wanted.contains(c)) {
            let e = bank.entry(c);
            let (fl, u) = (&e.filter, &e.uio);
            let b_s = &aug.plant.b_s;
            let b_a_s = aug.plant.b_a_s();
            let zn = RealMatrix::zeros(n, n);
            let a_zx = vstack(&[&(&fl.k_p * &aug.c), &(&fl.k_p * &aug.c), &(&u.k * &aug.c)]);
            let a_zz = vstack(&[
                &hstack(&[&fl.f_p, &zn, &RealMatrix::zeros(n, nx)]),
                &hstack(&[&(-&fl.l_p), &fl.error_dynamics(), &RealMatrix::zeros(n, nx)]),
                &hstack(&[&(-&u.l), &u.l, &u.f]),
            ]);
            let row = |blocks: [RealMatrix; 7]| hstack(&blocks.iter().collect::<Vec<_>>());
            let zr = |r: usize, c: usize| RealMatrix::zeros(r, c);
            let g_z = vstack(&[
                &row([&fl.t_p * b_s, zr(n, d.m_a), &fl.k_p * &aug.d_a, zr(n, n_c), zr(n, d.m_f), zr(n, d.p_f), zr(n, d.q)]),
                &row([
                    &fl.t_p * b_s,
                    &fl.t_p * &b_a_s,
                    zr(n, d.p_a),
                    -(&fl.l_p * &bank.d_ac),
                    zr(n, d.m_f),
                    zr(n, d.p_f),
                    zr(n, d.q),
                ]),
                &row([
                    &u.t * &aug.b,
                    &u.t * &aug.b_a,
                    zr(nx, d.p_a),
                    -(&u.l * &bank.d_ac),
                    zr(nx, d.m_f),
                    zr(nx, d.p_f),
                    zr(nx, d.q),
                ]),
            ]);
            let nz = 2 * n + nx;
            let big_a = vstack(&[&hstack(&[&aug.a, &RealMatrix::zeros(nx, nz)]), &hstack(&[&a_zx, &a_zz])]);
            let big_g = vstack(&[&g_x, &g_z]);
            let (phi, gamma) = discretize(&big_a, &big_g, dt, cfg.integrator)?;
            let mut zeta = DVector::zeros(nz);
            zeta.rows_mut(2 * n, nx).copy_from(&z0);
            blocks.push(BlockState {
                category: c,
                zeta,
                x_hat: DVector::zeros(nx),
                res: DVector::zeros(d.p),
                norm: 0.0,
                phi_zx: phi.view((nx, 0), (nz, nx)).into_owned(),
                phi_zz: phi.view((nx, nx), (nz, nz)).into_owned(),
                gamma_z: gamma.rows(nx, nz).into_owned(),
                h: u.h.clone(),
                n,
                scratch: DVector::zeros(nz),
            });
        }
        let n_steps = (t_end / dt).round() as usize;
        let slots = timeline.signals.iter().map(|g| InputVector::slot(g.channel)).collect();
        Ok(Self {
            aug,
            bank,
            cfg: cfg.clone(),
            signals: timeline.signals.clone(),
            phi_x,
            gamma_x,
            blocks,
            x,
            v: InputVector::new(dims),
            noise_sqrt: psd_sqrt(&aug.w_cov) / dt.sqrt(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            n_steps,
            slots,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn categories(&self) -> Vec<Category> {
        self.blocks.iter().map(|b| b.category).collect()
    }

    /// Run to the end or until `observer` breaks. Returns `true` if a
    /// non-finite state cut the run short.
    pub fn run<F>(&mut self, mut observer: F) -> bool
    where
        F: FnMut(&StepData<'_>) -> ControlFlow<()>,
    {
        let aug = self.aug;
        let dt = self.cfg.dt;
        let q = aug.dims.q;
        let zero_e = DVector::zeros(aug.dims.n);
        let mut y_p = DVector::zeros(aug.dims.p);
        let mut y_star = DVector::zeros(aug.dims.p);
        let mut xi = DVector::zeros(q);
        let mut x_next = DVector::zeros(self.x.len());
        let mut buf: Vec<DVector<f64>> = self.signals.iter().map(|g| DVector::zeros(g.dim)).collect();
        for k in 0..=self.n_steps {
            let t = k as f64 * dt;
            y_p.gemv(1.0, &aug.c, &self.x, 0.0);
            let mut e_p: [DVector<f64>; 4] = std::array::from_fn(|_| zero_e.clone());
            for b in &self.blocks {
                e_p[b.category.index()] = b.e_p();
            }
            {
                let ctx = SignalContext { t, dt, y_p: &y_p, e_p: [&e_p[0], &e_p[1], &e_p[2], &e_p[3]] };
                self.v.data.fill(0.0);
                for ((g, out), &slot) in self.signals.iter_mut().zip(buf.iter_mut()).zip(&self.slots) {
                    g.sample_into(&ctx, out);
                    let r = self.v.range(slot);
                    let mut dst = self.v.data.rows_range_mut(r);
                    dst += &*out;
                }
            }
            if self.cfg.noise_on && q > 0 {
                for e in xi.iter_mut() {
                    *e = StandardNormal.sample(&mut self.rng);
                }
                let r = self.v.range(6);
                self.v.data.rows_range_mut(r).gemv(1.0, &self.noise_sqrt, &xi, 0.0);
            }
            y_star.copy_from(&y_p);
            {
                let a_y = DVector::from_column_slice(self.v.channel(Channel::Ay));
                y_star.gemv(1.0, &aug.d_a, &a_y, 1.0);
            }
            let nx = self.x.len();
            for b in &mut self.blocks {
                let z = b.zeta.rows(2 * b.n, nx);
                b.x_hat.copy_from(&z);
                b.x_hat.gemv(1.0, &b.h, &y_p, 1.0);
                b.res.copy_from(&y_p);
                b.res.gemv(-1.0, &aug.c, &b.x_hat, 1.0);
                b.norm = b.res.norm();
            }
            if !finite(&self.v.data) || !finite(&y_star) || self.blocks.iter().any(|b| !b.norm.is_finite()) {
                return true;
            }
            let data = StepData { k, t, x: &self.x, y_p: &y_p, y_star: &y_star, v: &self.v, blocks: &self.blocks };
            if observer(&data).is_break() || k == self.n_steps {
                return false;
            }
            x_next.gemv(1.0, &self.phi_x, &self.x, 0.0);
            x_next.gemv(1.0, &self.gamma_x, &self.v.data, 1.0);
            for b in &mut self.blocks {
                b.scratch.gemv(1.0, &b.phi_zx, &self.x, 0.0);
                b.scratch.gemv(1.0, &b.phi_zz, &b.zeta, 1.0);
                b.scratch.gemv(1.0, &b.gamma_z, &self.v.data, 1.0);
                std::mem::swap(&mut b.zeta, &mut b.scratch);
            }
            std::mem::swap(&mut self.x, &mut x_next);
            if !finite(&self.x) || self.blocks.iter().any(|b| !finite(&b.zeta)) {
                return true;
            }
        }
        false
    }

    pub fn bank(&self) -> &DetectorBank {
        self.bank
    }
}

/// Simulate `timeline` and record at `cfg.record`.
pub fn simulate(aug: &AugmentedModel, bank: &DetectorBank, timeline: &ScenarioTimeline, cfg: &SimConfig) -> Result<SimulationTrace> {
    let mut sim = Simulator::new(aug, bank, timeline, cfg)?;
    let cap = sim.n_steps() + 1;
    let level = cfg.record;
    let d = aug.dims;
    let nx = d.nx();
    let vec_series = |dim: usize| Some(Series::new(dim, cap));
    let mut trace = SimulationTrace {
        scenario: timeline.name.clone(),
        seed: cfg.seed,
        dt: cfg.dt,
        t: Vec::with_capacity(cap),
        truncated: false,
        x: None,
        y_p: None,
        y_star: None,
        u: None,
        u_star: None,
        a_u: None,
        a_y: None,
        categories: Default::default(),
        n_plant: d.n,
    };
    if level != RecordLevel::Norms {
        trace.y_p = vec_series(d.p);
        trace.y_star = vec_series(d.p);
    }
    if level == RecordLevel::Full {
        trace.x = vec_series(nx);
        trace.u = vec_series(d.m);
        trace.u_star = vec_series(d.m);
        trace.a_u = vec_series(d.m_a);
        trace.a_y = vec_series(d.p_a);
    }
    for c in sim.categories() {
        let mut ct = CategoryTrace { norm: Vec::with_capacity(cap), ..Default::default() };
        if level != RecordLevel::Norms {
            ct.res = vec_series(d.p);
        }
        if level == RecordLevel::Full {
            ct.z_c = vec_series(d.n);
            ct.z_p = vec_series(d.n);
            ct.z = vec_series(nx);
            ct.x_hat = vec_series(nx);
            ct.e_p = vec_series(d.n);
        }
        trace.categories[c.index()] = Some(ct);
    }
    let s_a = &aug.plant.s_a;
    let truncated = sim.run(|s| {
        trace.t.push(s.t);
        if let Some(y) = trace.y_p.as_mut() {
            y.push(s.y_p);
        }
        if let Some(y) = trace.y_star.as_mut() {
            y.push(s.y_star);
        }
        if level == RecordLevel::Full {
            let u = DVector::from_column_slice(s.v.channel(Channel::U));
            let a_u = DVector::from_column_slice(s.v.channel(Channel::Au));
            let u_star = &u + s_a * &a_u;
            trace.x.as_mut().unwrap().push(s.x);
            trace.u.as_mut().unwrap().push(&u);
            trace.u_star.as_mut().unwrap().push(&u_star);
            trace.a_u.as_mut().unwrap().push(&a_u);
            trace.a_y.as_mut().unwrap().push(&DVector::from_column_slice(s.v.channel(Channel::Ay)));
        }
        for b in s.blocks {
            let ct = trace.categories[b.category.index()].as_mut().unwrap();
            ct.norm.push(b.norm);
            if let Some(r) = ct.res.as_mut() {
                r.push(&b.res);
            }
            if level == RecordLevel::Full {
                ct.z_c.as_mut().unwrap().push(&b.z_c().into_owned());
                ct.z_p.as_mut().unwrap().push(&b.z_p().into_owned());
                ct.z.as_mut().unwrap().push(&b.z().into_owned());
                ct.x_hat.as_mut().unwrap().push(&b.x_hat);
                ct.e_p.as_mut().unwrap().push(&b.e_p());
            }
        }
        ControlFlow::Continue(())
    });
    trace.truncated = truncated;
    Ok(trace)
}

/// Noise-free `max_t ‖res_ℓ(t)‖₂` with only the anomalies in `active`.
pub fn decoupling_probe(
    aug: &AugmentedModel,
    bank: &DetectorBank,
    category: Category,
    active: &[Anomaly],
    params: &AnomalyParams,
    cfg: &SimConfig,
) -> Result<f64> {
    let cfg = SimConfig { noise_on: false, record: RecordLevel::Norms, categories: Some(vec![category]), ..cfg.clone() };
    let timeline = anomaly_timeline(aug, active, params, &cfg)?;
    let trace = simulate(aug, bank, &timeline, &cfg)?;
    Ok(trace.category(category).map(CategoryTrace::max_norm).unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_bank, DesignOptions};
    use crate::preset;
    use crate::threat::{covert_attack, Term};

    fn setup() -> (AugmentedModel, DetectorBank) {
        let aug = preset::augmented();
        let opts = DesignOptions { fixed_aa: Some(preset::actuator_design()), ..Default::default() };
        let bank = design_bank(&aug, &preset::d_ac(), &opts).unwrap();
        (aug, bank)
    }

    fn cfg(dt: f64) -> SimConfig {
        SimConfig { dt, noise_on: false, ..SimConfig::default() }
    }

    #[test]
    fn unforced_errors_decay() {
        let (aug, bank) = setup();
        let c = SimConfig { z0: Some(vec![1.0, -1.0, 0.5, 0.0, 2.0, 0.0, -1.0]), ..cfg(0.01) };
        let tr = simulate(&aug, &bank, &ScenarioTimeline::new("idle", 30.0), &c).unwrap();
        for cat in Category::ALL {
            let n = &tr.category(cat).unwrap().norm;
            assert!(n[0] > 1e-3, "{cat}");
            assert!(*n.last().unwrap() <= 1e-9, "{cat}: {}", n.last().unwrap());
        }
    }

    #[test]
    fn residual_identity_holds_bitwise() {
        let (aug, bank) = setup();
        let tl = ScenarioTimeline::new("f", 2.0).with(SignalGenerator::step(Channel::F1, 0.5, vec![3.0]).unwrap());
        let c = SimConfig { record: RecordLevel::Full, noise_on: true, ..cfg(0.01) };
        let tr = simulate(&aug, &bank, &tl, &c).unwrap();
        let y = tr.y_p.as_ref().unwrap();
        for cat in Category::ALL {
            let ct = tr.category(cat).unwrap();
            for k in [0, 50, 150, 200] {
                let mut want = y.vector(k);
                want.gemv(-1.0, &aug.c, &ct.x_hat.as_ref().unwrap().vector(k), 1.0);
                assert_eq!(want.as_slice(), ct.res.as_ref().unwrap().row(k));
            }
        }
    }

    #[test]
    fn equal_seeds_give_identical_traces() {
        let (aug, bank) = setup();
        let tl = ScenarioTimeline::new("n", 1.0);
        let c = SimConfig { seed: 9, dt: 0.01, ..SimConfig::default() };
        let a = simulate(&aug, &bank, &tl, &c).unwrap();
        let b = simulate(&aug, &bank, &tl, &c).unwrap();
        assert_eq!(a, b);
        let d = simulate(&aug, &bank, &tl, &SimConfig { seed: 10, ..c }).unwrap();
        assert_ne!(a.category(Category::SF).unwrap().norm, d.category(Category::SF).unwrap().norm);
    }

    #[test]
    fn control_command_leaves_residuals_alone() {
        let (aug, bank) = setup();
        let u = SignalGenerator::waveform(
            Channel::U,
            0.0,
            vec![Term::Sine { amplitude: vec![3.0, -2.0], omega: 1.3, phase: 0.2 }, Term::Step { value: vec![1.0, 1.0] }],
        )
        .unwrap();
        let tl = ScenarioTimeline::new("u", 5.0).with(u);
        let tr = simulate(&aug, &bank, &tl, &cfg(0.01)).unwrap();
        for cat in Category::ALL {
            assert!(tr.category(cat).unwrap().max_norm() < 1e-9, "{cat}");
        }
    }

    #[test]
    fn superposition_holds() {
        let (aug, bank) = setup();
        let s1 = SignalGenerator::step(Channel::Au, 0.3, vec![1.0, -2.0]).unwrap();
        let s2 = SignalGenerator::waveform(Channel::Ac, 0.1, vec![Term::Sine { amplitude: vec![1.0, 0.0, 2.0, -1.0], omega: 2.0, phase: 0.0 }]).unwrap();
        let s3 = SignalGenerator::step(Channel::F2, 0.2, vec![5.0]).unwrap();
        let c = SimConfig { record: RecordLevel::Full, ..cfg(0.01) };
        let run = |sig: Vec<SignalGenerator>| {
            let mut tl = ScenarioTimeline::new("s", 3.0);
            tl.signals = sig;
            simulate(&aug, &bank, &tl, &c).unwrap()
        };
        let a = run(vec![s1.clone()]);
        let b = run(vec![s2.clone(), s3.clone()]);
        let ab = run(vec![s1, s2, s3]);
        let zero = run(vec![]);
        for cat in Category::ALL {
            let [ra, rb, rab, r0] = [&a, &b, &ab, &zero].map(|t| t.category(cat).unwrap().res.as_ref().unwrap().data.clone());
            for i in 0..rab.len() {
                assert!((rab[i] - (ra[i] + rb[i] - r0[i])).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn covert_pair_is_invisible_at_cc_output() {
        let (aug, bank) = setup();
        let dt = 0.01;
        let au = SignalGenerator::step(Channel::Au, 1.0, vec![2.0, 1.0]).unwrap();
        let ay = covert_attack(&aug, &au, dt, Integrator::Exact).unwrap();
        let tl = ScenarioTimeline::new("c", 10.0).with(au).with(ay);
        let att = simulate(&aug, &bank, &tl, &cfg(dt)).unwrap();
        let nom = simulate(&aug, &bank, &ScenarioTimeline::new("n", 10.0), &cfg(dt)).unwrap();
        let (ya, yn) = (&att.y_star.as_ref().unwrap().data, &nom.y_star.as_ref().unwrap().data);
        let gap = ya.iter().zip(yn).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-9, "{gap}");
        let (pa, pn) = (&att.y_p.as_ref().unwrap().data, &nom.y_p.as_ref().unwrap().data);
        let dev = pa.iter().zip(pn).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev > 0.5);
    }

    #[test]
    fn covert_generator_dt_must_match() {
        let (aug, bank) = setup();
        let au = SignalGenerator::step(Channel::Au, 1.0, vec![2.0, 1.0]).unwrap();
        let ay = covert_attack(&aug, &au, 0.02, Integrator::Exact).unwrap();
        let tl = ScenarioTimeline::new("c", 1.0).with(au).with(ay);
        assert!(matches!(simulate(&aug, &bank, &tl, &cfg(0.01)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rk4_agrees_with_exact() {
        let (aug, bank) = setup();
        let tl = ScenarioTimeline::new("f", 3.0)
            .with(SignalGenerator::step(Channel::F1, 0.5, vec![4.0]).unwrap())
            .with(SignalGenerator::step(Channel::Au, 0.2, vec![1.0, 1.0]).unwrap());
        let a = simulate(&aug, &bank, &tl, &cfg(0.001)).unwrap();
        let b = simulate(&aug, &bank, &tl, &SimConfig { integrator: Integrator::Rk4, ..cfg(0.001) }).unwrap();
        for cat in Category::ALL {
            let (x, y) = (&a.category(cat).unwrap().norm, &b.category(cat).unwrap().norm);
            let d = x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(d < 1e-6, "{cat}: {d}");
        }
    }

    #[test]
    fn blow_up_is_truncated() {
        let (aug, bank) = setup();
        let g = SignalGenerator::waveform(Channel::Au, 0.0, vec![Term::Exp { value: vec![1.0, 1.0], rate: 800.0 }]).unwrap();
        let tl = ScenarioTimeline::new("boom", 5.0).with(g);
        let tr = simulate(&aug, &bank, &tl, &cfg(0.01)).unwrap();
        assert!(tr.truncated);
        assert!(tr.len() < 501);
        assert!(tr.category(Category::AA).unwrap().norm.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn category_subset_and_record_levels() {
        let (aug, bank) = setup();
        let c = SimConfig { categories: Some(vec![Category::SF]), record: RecordLevel::Norms, ..cfg(0.01) };
        let tr = simulate(&aug, &bank, &ScenarioTimeline::new("x", 1.0), &c).unwrap();
        assert!(tr.category(Category::AA).is_none());
        assert!(tr.category(Category::SF).unwrap().res.is_none());
        assert!(tr.y_p.is_none());
        assert_eq!(tr.len(), 101);
    }

    #[test]
    fn rejects_bad_config() {
        let (aug, bank) = setup();
        let tl = ScenarioTimeline::new("x", 1.0);
        assert!(simulate(&aug, &bank, &tl, &SimConfig { dt: 0.0, ..cfg(0.01) }).is_err());
        assert!(simulate(&aug, &bank, &tl, &SimConfig { t_end: Some(0.001), ..cfg(0.01) }).is_err());
        let bad = ScenarioTimeline::new("x", 1.0).with(SignalGenerator::step(Channel::F1, 0.0, vec![1.0, 2.0]).unwrap());
        assert!(matches!(simulate(&aug, &bank, &bad, &cfg(0.01)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn csv_has_expected_header() {
        let (aug, bank) = setup();
        let tr = simulate(&aug, &bank, &ScenarioTimeline::new("x", 0.05), &cfg(0.01)).unwrap();
        let mut out = Vec::new();
        tr.write_csv(&mut out, Some(&[1.0; 4])).unwrap();
        let text = String::from_utf8(out).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("t,res_AA,res_SA,res_AF,res_SF,nres_AA,nres_SA,nres_AF,nres_SF,y_p_0"));
        assert_eq!(text.lines().count(), 7);
    }
}
