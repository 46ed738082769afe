//! Attack and fault signal generators.
//!
//! Every generator is sampled once per simulation step, in step order, with a
//! [`SignalContext`] carrying the measured plant output and the plant-filter
//! errors at that instant. Stateless kinds ignore the context.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::design::{controllability_subspace, Category, SideFilter};
use crate::error::{Error, Result};
use crate::model::{AugmentedModel, PlantModel};
use crate::numerics::subspace::preimage;
use crate::numerics::{
    discretize, invariant_zeros, pinv, rank, right_svd, subspace::SubspaceBasis, zero_direction, Integrator,
    RealMatrix,
};

/// Where a generator's output enters the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Nominal control command `u`.
    U,
    /// Actuator attack `a_u`.
    Au,
    /// Sensor attack `a_y`.
    Ay,
    /// Attack on the inter-filter link `a_c`.
    Ac,
    /// Actuator fault `f_1`.
    F1,
    /// Sensor fault `f_2` (pseudo actuator fault of the auxiliary dynamics).
    F2,
}

impl Channel {
    pub fn dim(self, aug: &AugmentedModel, n_c: usize) -> usize {
        match self {
            Channel::U => aug.dims.m,
            Channel::Au => aug.dims.m_a,
            Channel::Ay => aug.dims.p_a,
            Channel::Ac => n_c,
            Channel::F1 => aug.dims.m_f,
            Channel::F2 => aug.dims.p_f,
        }
    }
}

/// One additive term of a deterministic waveform, evaluated at `τ = t − t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    Step { value: Vec<f64> },
    Exp { value: Vec<f64>, rate: f64 },
    Sine { amplitude: Vec<f64>, omega: f64, phase: f64 },
}

impl Term {
    fn dim(&self) -> usize {
        match self {
            Term::Step { value } | Term::Exp { value, .. } => value.len(),
            Term::Sine { amplitude, .. } => amplitude.len(),
        }
    }

    fn add_to(&self, tau: f64, out: &mut DVector<f64>) {
        match self {
            Term::Step { value } => out.iter_mut().zip(value).for_each(|(o, v)| *o += v),
            Term::Exp { value, rate } => {
                let g = (rate * tau).exp();
                out.iter_mut().zip(value).for_each(|(o, v)| *o += v * g);
            }
            Term::Sine { amplitude, omega, phase } => {
                let g = (omega * tau + phase).sin();
                out.iter_mut().zip(amplitude).for_each(|(o, v)| *o += v * g);
            }
        }
    }
}

/// Measurements available to stateful generators at one step.
#[derive(Debug, Clone, Copy)]
pub struct SignalContext<'a> {
    pub t: f64,
    pub dt: f64,
    /// Plant-side measurement `y_p(t)`.
    pub y_p: &'a DVector<f64>,
    /// `z_p − z_c` per category, indexed by [`Category::index`].
    pub e_p: [&'a DVector<f64>; 4],
}

/// Recorded output time series on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedOutput {
    pub t_start: f64,
    pub dt: f64,
    pub samples: Vec<Vec<f64>>,
}

impl RecordedOutput {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.dt * self.samples.len().saturating_sub(1) as f64
    }

    /// Linear interpolation; `None` outside the recording.
    pub fn at(&self, t: f64) -> Option<DVector<f64>> {
        let n = self.samples.len();
        if n == 0 {
            return None;
        }
        let s = (t - self.t_start) / self.dt;
        let eps = 1e-9;
        if s < -eps || s > (n - 1) as f64 + eps {
            return None;
        }
        let s = s.clamp(0.0, (n - 1) as f64);
        let k = (s.floor() as usize).min(n - 1);
        let w = s - k as f64;
        let a = DVector::from_column_slice(&self.samples[k]);
        if k + 1 >= n || w <= eps {
            return Some(a);
        }
        if w >= 1.0 - eps {
            return Some(DVector::from_column_slice(&self.samples[k + 1]));
        }
        let b = DVector::from_column_slice(&self.samples[k + 1]);
        Some(a * (1.0 - w) + b * w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplaySource {
    /// Externally supplied recording.
    Recorded(RecordedOutput),
    /// Record `y_p` online during `[t_a − Δ, t_a)`.
    Online { buffer: Vec<Vec<f64>>, dt: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalKind {
    /// Sum of deterministic terms.
    Waveform(Vec<Term>),
    /// Scaled exponential along an invariant-zero input direction.
    ZeroDynamics { z: f64, x0: Vec<f64>, u0: Vec<f64>, scale: f64 },
    /// `a_y = −D_a⁺ C x_cov`, with `x_cov` driven by `source` through `B_a`.
    Covert {
        source: Box<SignalGenerator>,
        phi: RealMatrix,
        gamma: RealMatrix,
        readout: RealMatrix,
        x_cov: DVector<f64>,
        dt: f64,
    },
    /// `a_y = D_a⁺ (y_rec(t − Δ) − y_p(t))` on `[t_a, t_b]`.
    Replay { source: ReplaySource, t_a: f64, t_b: f64, d_a_pinv: RealMatrix },
    /// `a_u = scale·(G e_p + w e^{σ(t−t0)})`, keeping `e_p` inside ℛ*.
    UndetectableControllable { category: Category, feedback: RealMatrix, w: Vec<f64>, rate: f64, scale: f64 },
}

/// A signal with an onset time and a fixed output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalGenerator {
    pub channel: Channel,
    pub t0: f64,
    pub dim: usize,
    pub kind: SignalKind,
}

impl SignalGenerator {
    pub fn waveform(channel: Channel, t0: f64, terms: Vec<Term>) -> Result<Self> {
        let dim = terms.first().map(Term::dim).ok_or_else(|| Error::InvalidInput("waveform has no terms".into()))?;
        if let Some(t) = terms.iter().find(|t| t.dim() != dim) {
            return Err(Error::dim("waveform term", dim, t.dim()));
        }
        check_t0(t0)?;
        Ok(Self { channel, t0, dim, kind: SignalKind::Waveform(terms) })
    }

    pub fn step(channel: Channel, t0: f64, value: Vec<f64>) -> Result<Self> {
        Self::waveform(channel, t0, vec![Term::Step { value }])
    }

    pub fn zero(channel: Channel, dim: usize) -> Self {
        Self { channel, t0: 0.0, dim, kind: SignalKind::Waveform(vec![Term::Step { value: vec![0.0; dim] }]) }
    }

    /// `(z, x0, u0)` of a zero-dynamics attack.
    pub fn zero_direction(&self) -> Option<(f64, &[f64], &[f64])> {
        match &self.kind {
            SignalKind::ZeroDynamics { z, x0, u0, .. } => Some((*z, x0, u0)),
            _ => None,
        }
    }

    /// Value at `ctx.t`, advancing internal state by one step. Call exactly
    /// once per step, in time order.
    pub fn sample(&mut self, ctx: &SignalContext<'_>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.sample_into(ctx, &mut out);
        out
    }

    pub fn sample_into(&mut self, ctx: &SignalContext<'_>, out: &mut DVector<f64>) {
        out.fill(0.0);
        let t = ctx.t;
        let active = t >= self.t0 - 1e-12;
        let tau = t - self.t0;
        match &mut self.kind {
            SignalKind::Waveform(terms) => {
                if active {
                    terms.iter().for_each(|term| term.add_to(tau, out));
                }
            }
            SignalKind::ZeroDynamics { z, u0, scale, .. } => {
                if active {
                    let g = *scale * (*z * tau).exp();
                    out.iter_mut().zip(u0.iter()).for_each(|(o, v)| *o = v * g);
                }
            }
            SignalKind::Covert { source, phi, gamma, readout, x_cov, .. } => {
                let a_u = source.sample(ctx);
                if active {
                    out.gemv(-1.0, readout, x_cov, 0.0);
                }
                let next = &*phi * &*x_cov + &*gamma * a_u;
                *x_cov = next;
            }
            SignalKind::Replay { source, t_a, t_b, d_a_pinv } => {
                let delta = *t_b - *t_a;
                if let ReplaySource::Online { buffer, dt } = source {
                    if t >= *t_a - delta - 1e-12 && t < *t_a - 1e-12 {
                        buffer.push(ctx.y_p.iter().copied().collect());
                        dt.get_or_insert(ctx.dt);
                    }
                }
                if t >= *t_a - 1e-12 && t <= *t_b + 1e-12 {
                    let rec = match source {
                        ReplaySource::Recorded(r) => r.at(t - delta),
                        ReplaySource::Online { buffer, dt } => {
                            let r = RecordedOutput { t_start: *t_a - delta, dt: dt.unwrap_or(ctx.dt), samples: buffer.clone() };
                            r.at(t - delta).or_else(|| buffer.last().map(|v| DVector::from_column_slice(v)))
                        }
                    };
                    if let Some(rec) = rec {
                        out.gemv(1.0, d_a_pinv, &(rec - ctx.y_p), 0.0);
                    }
                }
            }
            SignalKind::UndetectableControllable { category, feedback, w, rate, scale } => {
                if active {
                    let g = (*rate * tau).exp();
                    out.gemv(1.0, feedback, ctx.e_p[category.index()], 0.0);
                    out.iter_mut().zip(w.iter()).for_each(|(o, v)| *o += v * g);
                    *out *= *scale;
                }
            }
        }
    }

    /// Step size this generator is bound to, if any.
    pub fn bound_dt(&self) -> Option<f64> {
        match &self.kind {
            SignalKind::Covert { dt, .. } => Some(*dt),
            _ => None,
        }
    }
}

fn check_t0(t0: f64) -> Result<()> {
    if !t0.is_finite() {
        return Err(Error::InvalidInput(format!("onset time {t0} is not finite")));
    }
    Ok(())
}

/// Exponential actuator attack along the real non-minimum-phase zero of
/// `(A^s, B^s S_a, C^s)` with the largest real part.
pub fn zero_dynamics_attack(plant: &PlantModel, scale: f64, t0: f64) -> Result<SignalGenerator> {
    check_t0(t0)?;
    let b = plant.b_a_s();
    let d = RealMatrix::zeros(plant.c_s.nrows(), b.ncols());
    let zs = invariant_zeros(&plant.a_s, &b, &plant.c_s, &d)?;
    let z = zs
        .real_nonminimum_phase()
        .into_iter()
        .max_by(f64::total_cmp)
        .ok_or_else(|| Error::UnsupportedAttack("the plant has no real non-minimum-phase invariant zero".into()))?;
    let dir = zero_direction(&plant.a_s, &b, &plant.c_s, &d, z)?;
    Ok(SignalGenerator {
        channel: Channel::Au,
        t0,
        dim: b.ncols(),
        kind: SignalKind::ZeroDynamics { z: dir.z, x0: dir.x0, u0: dir.u0, scale },
    })
}

/// Sensor attack that cancels `a_u`'s effect on the C&C-side output at the
/// sample instants of a simulation with step `dt` and `integrator`.
pub fn covert_attack(aug: &AugmentedModel, a_u: &SignalGenerator, dt: f64, integrator: Integrator) -> Result<SignalGenerator> {
    if a_u.channel != Channel::Au || a_u.dim != aug.dims.m_a {
        return Err(Error::dim("covert source (a_u)", aug.dims.m_a, a_u.dim));
    }
    let d_a = &aug.d_a;
    let d_pinv = pinv(d_a);
    let leak = d_a * &d_pinv * &aug.c - &aug.c;
    let scale = aug.c.abs().max().max(1.0);
    if rank(d_a) < d_a.ncols().min(d_a.nrows()) || leak.abs().max() > 1e-9 * scale {
        return Err(Error::CovertnessInfeasible(format!(
            "D_a (rank {} of {}x{}) cannot reproduce -C x_cov on every output",
            rank(d_a),
            d_a.nrows(),
            d_a.ncols()
        )));
    }
    let (phi, gamma) = discretize(&aug.a, &aug.b_a, dt, integrator)?;
    let readout = &d_pinv * &aug.c;
    Ok(SignalGenerator {
        channel: Channel::Ay,
        t0: a_u.t0,
        dim: aug.dims.p_a,
        kind: SignalKind::Covert {
            source: Box::new(a_u.clone()),
            phi,
            gamma,
            readout,
            x_cov: DVector::zeros(aug.dims.nx()),
            dt,
        },
    })
}

/// Replay of `recorded` over `[t_a, t_b]`, delayed by `Δ = t_b − t_a`.
///
/// With `recorded = None` the generator records `y_p` online during
/// `[t_a − Δ, t_a)` of the same run.
pub fn replay_attack(
    aug: &AugmentedModel,
    recorded: Option<RecordedOutput>,
    window: (f64, f64),
    a_u: SignalGenerator,
) -> Result<(SignalGenerator, SignalGenerator)> {
    let (t_a, t_b) = window;
    if !(t_a.is_finite() && t_b.is_finite() && t_b > t_a) {
        return Err(Error::InvalidWindow(format!("[{t_a}, {t_b}] is empty or not finite")));
    }
    let delta = t_b - t_a;
    let d_a = &aug.d_a;
    if rank(d_a) < d_a.ncols() {
        return Err(Error::CovertnessInfeasible("replay needs a full-column-rank D_a".into()));
    }
    if a_u.channel != Channel::Au || a_u.dim != aug.dims.m_a {
        return Err(Error::dim("replay a_u", aug.dims.m_a, a_u.dim));
    }
    let source = match recorded {
        Some(r) => {
            let eps = 1e-9 * (1.0 + t_b.abs());
            if r.samples.is_empty() || r.t_start > t_a - delta + eps || r.t_end() < t_a - eps {
                return Err(Error::InvalidWindow(format!(
                    "recording [{}, {}] does not cover [{}, {}]",
                    r.t_start,
                    r.t_end(),
                    t_a - delta,
                    t_a
                )));
            }
            if let Some(s) = r.samples.iter().find(|s| s.len() != aug.dims.p) {
                return Err(Error::dim("recorded sample", aug.dims.p, s.len()));
            }
            ReplaySource::Recorded(r)
        }
        None => {
            if t_a - delta < -1e-12 {
                return Err(Error::InvalidWindow(format!("online recording would start at {} < 0", t_a - delta)));
            }
            ReplaySource::Online { buffer: Vec::new(), dt: None }
        }
    };
    let a_y = SignalGenerator {
        channel: Channel::Ay,
        t0: t_a,
        dim: aug.dims.p_a,
        kind: SignalKind::Replay { source, t_a, t_b, d_a_pinv: pinv(d_a) },
    };
    Ok((a_y, a_u))
}

/// Actuator attack confined to ℛ* of `(l, F_p + L_p, T_p B_a)`.
///
/// The friend `G` keeps ℛ* invariant under `F_p + L_p + T_p B_a G`, and `w`
/// is an input direction with `T_p B_a w ∈ ℛ*`, so `l·e_p ≡ 0` whenever
/// `e_p(t0) ∈ ℛ*` and no other signal drives `e_p`.
pub fn undetectable_controllable_attack(
    filter: &SideFilter,
    l: &RealMatrix,
    b_a: &RealMatrix,
    scale: f64,
    rate: f64,
    t0: f64,
) -> Result<SignalGenerator> {
    check_t0(t0)?;
    let fe = filter.error_dynamics();
    let x = &filter.t_p * b_a;
    let r = controllability_subspace(&fe, &x, l)?;
    if r.is_zero() {
        return Err(Error::AttackInfeasible("the controllability subspace inside Ker L is zero".into()));
    }
    let feedback = friend(&fe, &x, &r);
    let pre = preimage(&x, &r)?;
    let img = &x * pre.basis();
    let (sv, v) = right_svd(&img);
    if sv.first().is_none_or(|s| *s <= 1e-12) {
        return Err(Error::AttackInfeasible("no input reaches the controllability subspace".into()));
    }
    let w = pre.basis() * v.column(0);
    let w = &w / w.norm();
    Ok(SignalGenerator {
        channel: Channel::Au,
        t0,
        dim: b_a.ncols(),
        kind: SignalKind::UndetectableControllable {
            category: filter.category,
            feedback,
            w: w.iter().copied().collect(),
            rate,
            scale,
        },
    })
}

/// `G` with `(f + x G) ℛ ⊆ ℛ`, zero when ℛ is already `f`-invariant.
fn friend(f: &RealMatrix, x: &RealMatrix, r: &SubspaceBasis) -> RealMatrix {
    let n = f.nrows();
    let q = RealMatrix::identity(n, n) - r.projector();
    let leak = &q * f * r.basis();
    if leak.abs().max() <= 1e-12 * f.abs().max().max(1.0) {
        return RealMatrix::zeros(x.ncols(), n);
    }
    let y = -pinv(&(&q * x)) * leak;
    y * r.basis().transpose()
}

/// Step fault on `f_1` or `f_2`.
pub fn bias_fault(channel: Channel, magnitude: Vec<f64>, t0: f64) -> Result<SignalGenerator> {
    if !matches!(channel, Channel::F1 | Channel::F2) {
        return Err(Error::InvalidInput(format!("bias faults act on f1 or f2, not {channel:?}")));
    }
    if magnitude.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("fault magnitude must be finite".into()));
    }
    SignalGenerator::step(channel, t0, magnitude)
}

/// Inter-filter link attack; the simulator injects `D_ac·a_c`.
pub fn comm_link_attack(d_ac: &RealMatrix, waveform: SignalGenerator) -> Result<SignalGenerator> {
    if waveform.dim != d_ac.ncols() {
        return Err(Error::dim("a_c waveform", d_ac.ncols(), waveform.dim));
    }
    Ok(SignalGenerator { channel: Channel::Ac, ..waveform })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{degrade_condition9, design_bank, DesignOptions};
    use crate::numerics::mat;
    use crate::preset;

    fn ctx<'a>(t: f64, y: &'a DVector<f64>, e: &'a DVector<f64>) -> SignalContext<'a> {
        SignalContext { t, dt: 0.01, y_p: y, e_p: [e, e, e, e] }
    }

    #[test]
    fn zero_dynamics_direction_matches_fixture() {
        let g = zero_dynamics_attack(&preset::plant(), 1.0, 0.0).unwrap();
        let (z, x0, u0) = g.zero_direction().unwrap();
        assert!((z - 0.302_775_6).abs() < 1e-6);
        let want_x = [0.0, 0.0, -0.6514, 1.0];
        let want_u = [-0.5757, 0.5];
        for (a, b) in x0.iter().zip(want_x) {
            assert!((a - b).abs() < 5e-4, "{x0:?}");
        }
        for (a, b) in u0.iter().zip(want_u) {
            assert!((a - b).abs() < 5e-4, "{u0:?}");
        }
        let p = preset::plant();
        let xv = DVector::from_column_slice(x0);
        let uv = DVector::from_column_slice(u0);
        let lhs = (RealMatrix::identity(4, 4) * z - &p.a_s) * &xv - p.b_a_s() * &uv;
        assert!(lhs.norm() + (&p.c_s * &xv).norm() <= 1e-6 * (xv.norm() + uv.norm()));
    }

    #[test]
    fn zero_dynamics_scale_zero_is_silent() {
        let mut g = zero_dynamics_attack(&preset::plant(), 0.0, 0.0).unwrap();
        let y = DVector::zeros(2);
        let e = DVector::zeros(4);
        assert_eq!(g.sample(&ctx(3.0, &y, &e)).norm(), 0.0);
    }

    #[test]
    fn minimum_phase_plant_has_no_zero_attack() {
        let mut p = preset::plant();
        p.a_s = -RealMatrix::identity(4, 4);
        p.b_s = RealMatrix::identity(4, 2);
        p.c_s = RealMatrix::identity(2, 4);
        assert!(matches!(zero_dynamics_attack(&p, 1.0, 0.0), Err(Error::UnsupportedAttack(_))));
    }

    #[test]
    fn generators_are_zero_before_onset() {
        let aug = preset::augmented();
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let e = DVector::from_vec(vec![1.0; 4]);
        let au = SignalGenerator::step(Channel::Au, 10.0, vec![2.0, 1.0]).unwrap();
        let mut gens = vec![
            au.clone(),
            covert_attack(&aug, &au, 0.01, Integrator::Exact).unwrap(),
            bias_fault(Channel::F1, vec![40.0], 5.0).unwrap(),
            zero_dynamics_attack(&aug.plant, 1.0, 2.0).unwrap(),
        ];
        for k in 0..100 {
            let t = k as f64 * 0.01;
            for g in &mut gens {
                assert_eq!(g.sample(&ctx(t, &y, &e)).norm(), 0.0);
            }
        }
    }

    #[test]
    fn covert_rejects_deficient_d_a() {
        let mut aug = preset::augmented();
        aug.d_a = mat(2, 2, &[1., 0., 0., 0.]);
        let au = SignalGenerator::step(Channel::Au, 0.0, vec![1.0, 1.0]).unwrap();
        assert!(matches!(covert_attack(&aug, &au, 0.01, Integrator::Exact), Err(Error::CovertnessInfeasible(_))));
    }

    #[test]
    fn covert_of_zero_is_zero() {
        let aug = preset::augmented();
        let au = SignalGenerator::zero(Channel::Au, 2);
        let mut g = covert_attack(&aug, &au, 0.01, Integrator::Exact).unwrap();
        let y = DVector::zeros(2);
        let e = DVector::zeros(4);
        for k in 0..50 {
            assert_eq!(g.sample(&ctx(k as f64 * 0.01, &y, &e)).norm(), 0.0);
        }
    }

    #[test]
    fn covert_steady_state_cancels_dc_output() {
        let aug = preset::augmented();
        let au = SignalGenerator::step(Channel::Au, 0.0, vec![2.0, 1.0]).unwrap();
        let mut g = covert_attack(&aug, &au, 0.01, Integrator::Exact).unwrap();
        let y = DVector::zeros(2);
        let e = DVector::zeros(4);
        let mut last = DVector::zeros(2);
        for k in 0..3000 {
            last = g.sample(&ctx(k as f64 * 0.01, &y, &e));
        }
        // D_a a_y = -C x_cov → a_y = [1.3, 0.4] / 0.2.
        assert!((last[0] - 6.5).abs() < 1e-6 && (last[1] - 2.0).abs() < 1e-6, "{last}");
    }

    #[test]
    fn replay_window_checks() {
        let aug = preset::augmented();
        let au = SignalGenerator::zero(Channel::Au, 2);
        let rec = RecordedOutput { t_start: 5.0, dt: 0.1, samples: vec![vec![0.0, 0.0]; 51] };
        assert!(matches!(
            replay_attack(&aug, Some(rec.clone()), (6.0, 8.0), au.clone()),
            Err(Error::InvalidWindow(_))
        ));
        assert!(replay_attack(&aug, Some(rec.clone()), (8.0, 11.0), au.clone()).is_ok());
        assert!(replay_attack(&aug, Some(rec), (12.0, 17.0), au.clone()).is_err());
        assert!(matches!(replay_attack(&aug, None, (2.0, 5.0), au.clone()), Err(Error::InvalidWindow(_))));
        assert!(matches!(replay_attack(&aug, None, (3.0, 3.0), au), Err(Error::InvalidWindow(_))));
    }

    #[test]
    fn replay_presents_recording() {
        let aug = preset::augmented();
        let rec = RecordedOutput { t_start: 0.0, dt: 1.0, samples: vec![vec![1.0, 2.0], vec![3.0, 4.0]] };
        let (mut ay, _) = replay_attack(&aug, Some(rec), (1.0, 2.0), SignalGenerator::zero(Channel::Au, 2)).unwrap();
        let y = DVector::from_vec(vec![0.5, 0.5]);
        let e = DVector::zeros(4);
        let v = ay.sample(&ctx(1.5, &y, &e));
        // y* = y_p + D_a a_y = recording at t − Δ = 0.5 → [2, 3].
        let ystar = &y + &aug.d_a * v;
        assert!((ystar[0] - 2.0).abs() < 1e-12 && (ystar[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn compliant_design_admits_no_hidden_attack() {
        let fx = preset::actuator_design();
        let bank = design_bank(
            &preset::augmented(),
            &preset::d_ac(),
            &DesignOptions { fixed_aa: Some(fx), ..Default::default() },
        )
        .unwrap();
        let r = undetectable_controllable_attack(&bank.aa.filter, &bank.aa.uio.l, &preset::plant().b_a_s(), 1.0, 0.1, 0.0);
        assert!(matches!(r, Err(Error::AttackInfeasible(_))));
    }

    #[test]
    fn degraded_design_admits_hidden_attack() {
        let aug = preset::augmented();
        let bank = design_bank(
            &aug,
            &preset::d_ac(),
            &DesignOptions { fixed_aa: Some(preset::actuator_design()), ..Default::default() },
        )
        .unwrap();
        let bad = degrade_condition9(&bank).unwrap();
        let g = undetectable_controllable_attack(&bad.aa.filter, &bad.aa.uio.l, &aug.plant.b_a_s(), 1.0, 0.1, 0.0).unwrap();
        let SignalKind::UndetectableControllable { w, feedback, .. } = &g.kind else { panic!() };
        let x = &bad.aa.filter.t_p * aug.plant.b_a_s();
        let dir = &x * DVector::from_column_slice(w);
        assert!(dir.norm() > 1e-6);
        assert!((&bad.aa.uio.l * dir).norm() < 1e-9);
        assert!(feedback.abs().max() < 1e-9);
    }

    #[test]
    fn friend_makes_subspace_invariant() {
        // ℛ* = span{e3}, but f·e3 = e1 leaves it.
        let f = mat(3, 3, &[0., 0., 1., 0., 0., 0., 0., 1., 0.]);
        let x = mat(3, 2, &[0., 1., 0., 0., 1., 0.]);
        let l = mat(1, 3, &[1., 0., 0.]);
        let r = controllability_subspace(&f, &x, &l).unwrap();
        assert_eq!(r.dim(), 1);
        let g = friend(&f, &x, &r);
        assert!(g.abs().max() > 0.5);
        let closed = &f + &x * &g;
        let q = RealMatrix::identity(3, 3) - r.projector();
        assert!((q * closed * r.basis()).abs().max() < 1e-10);
    }

    #[test]
    fn comm_link_checks_dimension() {
        let w = SignalGenerator::step(Channel::Ac, 0.0, vec![1.0; 3]).unwrap();
        assert!(comm_link_attack(&preset::d_ac(), w).is_err());
        let w = SignalGenerator::step(Channel::U, 0.0, vec![1.0; 4]).unwrap();
        assert_eq!(comm_link_attack(&preset::d_ac(), w).unwrap().channel, Channel::Ac);
    }

    #[test]
    fn bias_fault_is_a_step() {
        let mut g = bias_fault(Channel::F2, vec![20.0], 10.0).unwrap();
        let y = DVector::zeros(2);
        let e = DVector::zeros(4);
        assert_eq!(g.sample(&ctx(9.99, &y, &e))[0], 0.0);
        assert_eq!(g.sample(&ctx(10.0, &y, &e))[0], 20.0);
        assert!(bias_fault(Channel::Au, vec![1.0], 0.0).is_err());
        let mut z = bias_fault(Channel::F1, vec![0.0], 0.0).unwrap();
        assert_eq!(z.sample(&ctx(1.0, &y, &e))[0], 0.0);
    }

    #[test]
    fn recorded_output_interpolates() {
        let r = RecordedOutput { t_start: 1.0, dt: 0.5, samples: vec![vec![0.0], vec![1.0], vec![3.0]] };
        assert_eq!(r.at(1.25).unwrap()[0], 0.5);
        assert_eq!(r.at(2.0).unwrap()[0], 3.0);
        assert!(r.at(0.9).is_none() && r.at(2.1).is_none());
    }
}
