//! Filter-bank and unknown-input-observer synthesis, and the condition checks
//! that certify each residual's sensitivity and decoupling.

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AugmentedModel;
use crate::numerics::place::unobservable_subspace;
use crate::numerics::subspace::{image, kernel, preimage, subspace_intersect, subspace_sum};
use crate::numerics::zeros::normal_rank;
use crate::numerics::{
    hstack, invariant_zeros, max_abs, max_singular_value, pinv, place_observer_gain, rank, rank_scaled,
    spectral_abscissa, vstack, RealMatrix, SubspaceBasis, DEFAULT_TOL,
};

/// Zeros with real part above this count as non-minimum phase.
pub const MIN_PHASE_MARGIN: f64 = 1e-8;

/// Relative tolerance for the exact-zero identities (decoupling, links).
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    AA,
    SA,
    AF,
    SF,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::AA, Category::SA, Category::AF, Category::SF];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::AA => "AA",
            Category::SA => "SA",
            Category::AF => "AF",
            Category::SF => "SF",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_attack(self) -> bool {
        matches!(self, Category::AA | Category::SA)
    }

    /// Fault signatures the category's detector must be blind to.
    pub fn decoupled_signatures(self) -> &'static [Signature] {
        match self {
            Category::AA | Category::SA => &[Signature::F1, Signature::F2],
            Category::AF => &[Signature::F2],
            Category::SF => &[Signature::F1],
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown category `{s}` (expected AA, SA, AF or SF)")))
    }
}

/// Fault signature in the augmented model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signature {
    F1,
    F2,
}

impl Signature {
    fn matrix(self, aug: &AugmentedModel) -> &RealMatrix {
        match self {
            Signature::F1 => &aug.f1,
            Signature::F2 => &aug.f2,
        }
    }
}

/// Filter parameters shared by the C&C-side and plant-side filters of one
/// category. `t_p` acts on the physical input matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideFilter {
    pub category: Category,
    #[serde(with = "crate::serde_util::matrix")]
    pub f_p: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub t_p: RealMatrix,
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub k_p: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub l_p: RealMatrix,
}

impl SideFilter {
    /// `F_p + L_p`, the inter-filter error dynamics.
    pub fn error_dynamics(&self) -> RealMatrix {
        &self.f_p + &self.l_p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UIODetector {
    pub category: Category,
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub h: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub t: RealMatrix,
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub k1: RealMatrix,
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub k2: RealMatrix,
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub k: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub f: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub l: RealMatrix,
}

impl UIODetector {
    /// Complete the gain chain `T = I − HC`, `F = TA − K1 C`, `K2 = FH`, `K = K1 + K2`.
    pub fn from_gains(aug: &AugmentedModel, category: Category, h: RealMatrix, k1: RealMatrix, l: RealMatrix) -> Result<Self> {
        let nx = aug.dims.nx();
        let p = aug.dims.p;
        if h.shape() != (nx, p) {
            return Err(Error::dim("h", format!("{nx}x{p}"), format!("{}x{}", h.nrows(), h.ncols())));
        }
        if k1.shape() != (nx, p) {
            return Err(Error::dim("k1", format!("{nx}x{p}"), format!("{}x{}", k1.nrows(), k1.ncols())));
        }
        if l.shape() != (nx, aug.dims.n) {
            return Err(Error::dim("l", format!("{nx}x{}", aug.dims.n), format!("{}x{}", l.nrows(), l.ncols())));
        }
        let t = RealMatrix::identity(nx, nx) - &h * &aug.c;
        let f = &t * &aug.a - &k1 * &aug.c;
        let k2 = &f * &h;
        let k = &k1 + &k2;
        Ok(Self { category, h, t, k1, k2, k, f, l })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorEntry {
    pub filter: SideFilter,
    pub uio: UIODetector,
}

impl DetectorEntry {
    /// Augmented error matrix `[[F, −L], [0, F_p + L_p]]`.
    pub fn error_matrix(&self) -> RealMatrix {
        let nx = self.uio.f.nrows();
        let n = self.filter.f_p.nrows();
        vstack(&[
            &hstack(&[&self.uio.f, &(-&self.uio.l)]),
            &hstack(&[&RealMatrix::zeros(n, nx), &self.filter.error_dynamics()]),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorBank {
    pub aa: DetectorEntry,
    pub sa: DetectorEntry,
    pub af: DetectorEntry,
    pub sf: DetectorEntry,
    #[serde(with = "crate::serde_util::matrix")]
    pub d_ac: RealMatrix,
}

impl DetectorBank {
    pub fn entry(&self, c: Category) -> &DetectorEntry {
        match c {
            Category::AA => &self.aa,
            Category::SA => &self.sa,
            Category::AF => &self.af,
            Category::SF => &self.sf,
        }
    }

    pub fn entry_mut(&mut self, c: Category) -> &mut DetectorEntry {
        match c {
            Category::AA => &mut self.aa,
            Category::SA => &mut self.sa,
            Category::AF => &mut self.af,
            Category::SF => &mut self.sf,
        }
    }

    pub fn check_dims(&self, aug: &AugmentedModel) -> Result<()> {
        let (n, nx, p, m) = (aug.dims.n, aug.dims.nx(), aug.dims.p, aug.dims.m);
        if self.d_ac.nrows() != n {
            return Err(Error::dim("d_ac", format!("{n} rows"), self.d_ac.nrows()));
        }
        for c in Category::ALL {
            let e = self.entry(c);
            let fl = &e.filter;
            let tag = |s: &str| format!("bank.{}.{s}", c.as_str().to_lowercase());
            for (name, mtx, r, k) in [
                ("f_p", &fl.f_p, n, n),
                ("t_p", &fl.t_p, n, n),
                ("k_p", &fl.k_p, n, p),
                ("l_p", &fl.l_p, n, n),
                ("h", &e.uio.h, nx, p),
                ("t", &e.uio.t, nx, nx),
                ("k", &e.uio.k, nx, p),
                ("f", &e.uio.f, nx, nx),
                ("l", &e.uio.l, nx, n),
            ] {
                if mtx.shape() != (r, k) {
                    return Err(Error::dim(tag(name), format!("{r}x{k}"), format!("{}x{}", mtx.nrows(), mtx.ncols())));
                }
            }
            let _ = m;
        }
        Ok(())
    }
}

/// Fixed matrices for one attack category, completed by
/// [`UIODetector::from_gains`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedDesign {
    #[serde(with = "crate::serde_util::matrix")]
    pub f_p: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub t_p: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub l_p: RealMatrix,
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub k_p: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub h: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub k1: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub l: RealMatrix,
}

fn default_retries() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignOptions {
    /// Seed for the randomized retry search.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    /// Observer poles; empty means `-2, -3, ...`.
    #[serde(default, with = "crate::serde_util::complex_vec", skip_serializing_if = "Vec::is_empty")]
    pub poles: Vec<Complex64>,
    /// Fixed actuator-attack matrices, used instead of searching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_aa: Option<FixedDesign>,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { seed: 0, max_retries: default_retries(), poles: Vec::new(), fixed_aa: None }
    }
}

impl DesignOptions {
    pub fn poles_for(&self, nx: usize) -> Vec<Complex64> {
        if self.poles.is_empty() {
            (0..nx).map(|k| Complex64::new(-2.0 - k as f64, 0.0)).collect()
        } else {
            self.poles.clone()
        }
    }
}

/// `H = F (CF)⁺ + Y (I − CF (CF)⁺)` with `F` the stacked targets.
pub fn solve_decoupling_gain(aug: &AugmentedModel, targets: &[&RealMatrix], y: Option<&RealMatrix>) -> Result<RealMatrix> {
    let nx = aug.dims.nx();
    let p = aug.dims.p;
    let cols: usize = targets.iter().map(|t| t.ncols()).sum();
    if cols == 0 {
        return Ok(y.cloned().unwrap_or_else(|| RealMatrix::zeros(nx, p)));
    }
    for t in targets {
        if t.nrows() != nx {
            return Err(Error::dim("decoupling target rows", nx, t.nrows()));
        }
    }
    let f = hstack(targets);
    let cf = &aug.c * &f;
    let (rcf, rf) = (rank(&cf), rank(&f));
    if rcf != rf {
        return Err(Error::infeasible("rank(CF)=rank(F)", format!("rank(CF) = {rcf} but rank(F) = {rf}")));
    }
    let cfp = pinv(&cf);
    let mut h = &f * &cfp;
    if let Some(y) = y {
        if y.shape() != (nx, p) {
            return Err(Error::dim("y", format!("{nx}x{p}"), format!("{}x{}", y.nrows(), y.ncols())));
        }
        h += y * (RealMatrix::identity(p, p) - &cf * &cfp);
    }
    Ok(h)
}

/// Orthonormal or, when the zero rows of `d_ac` span it, axis-aligned basis
/// of the left null space of `d_ac` (columns).
fn link_free_basis(d_ac: &RealMatrix) -> RealMatrix {
    let n = d_ac.nrows();
    let left_null = kernel(&d_ac.transpose());
    let zero_rows: Vec<usize> = (0..n).filter(|&i| d_ac.row(i).iter().all(|v| *v == 0.0)).collect();
    if zero_rows.len() == left_null.dim() {
        let mut b = RealMatrix::zeros(n, zero_rows.len());
        for (j, &i) in zero_rows.iter().enumerate() {
            b[(i, j)] = 1.0;
        }
        return b;
    }
    left_null.basis().clone()
}

fn random_int_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: i32, hi: i32) -> RealMatrix {
    RealMatrix::from_fn(r, c, |_, _| f64::from(rng.random_range(lo..=hi)))
}

fn category_rng(seed: u64, c: Category, stage: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(1 + c.index() as u64 * 16 + stage)))
}

/// Left-invertibility of `(C, F, L)`: the pencil `[sI − F, L; C, 0]`
/// reaches `nx + rank(L)`, and `L` is nonzero.
pub fn left_invertible(aug: &AugmentedModel, f: &RealMatrix, l: &RealMatrix) -> (bool, usize, usize) {
    let rl = rank(l);
    let d = RealMatrix::zeros(aug.dims.p, l.ncols());
    let nr = normal_rank(f, l, &aug.c, &d, &[]);
    let want = f.nrows() + rl;
    (rl >= 1 && nr == want, nr, want)
}

fn check_link_rank(d_ac: &RealMatrix, n: usize) -> Result<()> {
    if d_ac.nrows() != n {
        return Err(Error::dim("d_ac", format!("{n} rows"), d_ac.nrows()));
    }
    let r = rank(d_ac);
    if r >= n {
        return Err(Error::infeasible(
            "BANK.DAC",
            format!("rank(D_ac) < n is required so that some filter link stays secure; got rank {r} with n = {n}"),
        ));
    }
    Ok(())
}

/// Unknown-input observer for `category`, blind to `decouple`.
///
/// Attack categories draw `L = M·Nᵀ` over the link-free directions `N` of
/// `d_ac` with seeded integer `M` of rank at most `p`, retrying until `(C, F, L)` is left-invertible.
/// Fault categories use `L = 0`.
pub fn design_uio(
    aug: &AugmentedModel,
    decouple: &[Signature],
    d_ac: &RealMatrix,
    poles: &[Complex64],
    category: Category,
    opts: &DesignOptions,
) -> Result<UIODetector> {
    let n = aug.dims.n;
    let nx = aug.dims.nx();
    let targets: Vec<&RealMatrix> = decouple.iter().map(|s| s.matrix(aug)).collect();
    let h = solve_decoupling_gain(aug, &targets, None)?;
    let t = RealMatrix::identity(nx, nx) - &h * &aug.c;
    let k1 = place_observer_gain(&(&t * &aug.a), &aug.c, poles)?;
    if !category.is_attack() {
        return UIODetector::from_gains(aug, category, h, k1, RealMatrix::zeros(nx, n));
    }
    check_link_rank(d_ac, n)?;
    let basis = link_free_basis(d_ac);
    let f = &t * &aug.a - &k1 * &aug.c;
    // Left-invertibility caps rank(L) at the number of outputs.
    let r = basis.ncols().min(aug.dims.p);
    let mut rng = category_rng(opts.seed, category, 1);
    for _ in 0..opts.max_retries.max(1) {
        let m = random_int_matrix(&mut rng, nx, r, -5, 5) * random_int_matrix(&mut rng, r, basis.ncols(), -2, 2);
        let l = &m * basis.transpose();
        if rank(&l) == r && left_invertible(aug, &f, &l).0 {
            return UIODetector::from_gains(aug, category, h, k1, l);
        }
    }
    Err(Error::infeasible(
        format!("{}.C7", prop_prefix(category)),
        format!("no left-invertible (C, F, L) found in {} draws", opts.max_retries),
    ))
}

fn prop_prefix(c: Category) -> &'static str {
    match c {
        Category::AA => "P1",
        Category::SA => "P2.P1",
        Category::AF => "P3",
        Category::SF => "P4",
    }
}

/// Plant-filter search hints.
#[derive(Debug, Clone, Default)]
pub struct FilterSpec {
    /// Fixed diagonal for `F_p`; otherwise drawn from `{-6..-1}`.
    pub f_p_diag: Option<Vec<f64>>,
    /// Fixed `K_p`; otherwise `0` for AA and searched for SA.
    pub k_p: Option<RealMatrix>,
}

fn rel_zero(m: &RealMatrix, scale: f64) -> (bool, f64) {
    let r = max_abs(m);
    (r <= IDENTITY_TOL * scale.max(1.0), r)
}

/// `rank(L·X) = rank(X)` with ranks of the product measured against `‖L‖·‖X‖`.
pub fn rank_preserved(l: &RealMatrix, x: &RealMatrix) -> (bool, usize, usize) {
    let rx = rank(x);
    let scale = max_singular_value(l) * max_singular_value(x);
    let rlx = rank_scaled(&(l * x), scale, DEFAULT_TOL);
    (rlx == rx, rlx, rx)
}

fn min_phase(a: &RealMatrix, b: &RealMatrix, c: &RealMatrix) -> Result<(bool, Vec<Complex64>)> {
    let d = RealMatrix::zeros(c.nrows(), b.ncols());
    let zs = invariant_zeros(a, b, c, &d)?;
    Ok((zs.unstable(MIN_PHASE_MARGIN).is_empty(), zs.zeros))
}

/// Plant/C&C filter pair for an attack category.
pub fn design_plant_filter(
    aug: &AugmentedModel,
    uio: &UIODetector,
    d_ac: &RealMatrix,
    category: Category,
    spec: &FilterSpec,
    opts: &DesignOptions,
) -> Result<SideFilter> {
    let n = aug.dims.n;
    let p = aug.dims.p;
    if !category.is_attack() {
        return Ok(passive_filter(aug, category));
    }
    check_link_rank(d_ac, n)?;
    let link = link_free_basis(d_ac);
    let b_a_s = aug.plant.b_a_s();
    let d_a = &aug.d_a;
    let mut rng = category_rng(opts.seed, category, 2);
    let mut last = String::from("no draws");
    let left_null_ba = kernel(&b_a_s.transpose());
    let left_null_da = kernel(&d_a.transpose());
    for _ in 0..opts.max_retries.max(1) {
        let f_p = match &spec.f_p_diag {
            Some(d) => RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone())),
            None => RealMatrix::from_fn(n, n, |i, j| if i == j { f64::from(rng.random_range(-6..=-1)) } else { 0.0 }),
        };
        let l_p = random_int_matrix(&mut rng, n, link.ncols(), -5, 5) * link.transpose();
        let fe = &f_p + &l_p;
        if spectral_abscissa(&fe) >= -MIN_PHASE_MARGIN {
            last = format!("{}.C10: F_p + L_p not Hurwitz", prop_prefix(category));
            continue;
        }
        match category {
            Category::AA => {
                let k_p = match &spec.k_p {
                    Some(k) => k.clone(),
                    None => {
                        let m = random_int_matrix(&mut rng, n, left_null_da.dim(), 0, 0);
                        m * left_null_da.basis().transpose()
                    }
                };
                let t_p = random_int_matrix(&mut rng, n, n, -5, 5);
                let x = &t_p * &b_a_s;
                if rank(&x) != rank(&b_a_s) {
                    last = "T_p B_a^s loses attack directions".into();
                    continue;
                }
                if !rank_preserved(&uio.l, &x).0 {
                    last = "P1.C9: rank(L T_p B_a) < rank(T_p B_a)".into();
                    continue;
                }
                let (ok, zs) = min_phase(&fe, &x, &uio.l)?;
                if !ok {
                    last = format!("P1.C8: non-minimum-phase zeros {zs:?}");
                    continue;
                }
                return Ok(SideFilter { category, f_p, t_p, k_p, l_p });
            }
            Category::SA => {
                let t_p = if left_null_ba.is_zero() {
                    RealMatrix::zeros(n, n)
                } else {
                    random_int_matrix(&mut rng, n, left_null_ba.dim(), -5, 5) * left_null_ba.basis().transpose()
                };
                let k_p = match &spec.k_p {
                    Some(k) => k.clone(),
                    None => random_int_matrix(&mut rng, n, p, -5, 5),
                };
                let x = &k_p * d_a;
                if rank(&x) != rank(d_a) {
                    last = "K_p D_a loses sensor-attack directions".into();
                    continue;
                }
                if !rank_preserved(&uio.l, &x).0 {
                    last = "P2.C3: rank(L K_p D_a) < rank(K_p D_a)".into();
                    continue;
                }
                let (ok, zs) = min_phase(&fe, &(-&x), &uio.l)?;
                if !ok {
                    last = format!("P2.C2: non-minimum-phase zeros {zs:?}");
                    continue;
                }
                return Ok(SideFilter { category, f_p, t_p, k_p, l_p });
            }
            _ => unreachable!(),
        }
    }
    let cond = last.split(':').next().unwrap_or("search").to_string();
    Err(Error::infeasible(cond, format!("search budget of {} exhausted; last failure: {last}", opts.max_retries)))
}

/// Filters for fault categories carry no information (`L = 0` in the
/// detector), so a fixed stable diagonal pair is used.
fn passive_filter(aug: &AugmentedModel, category: Category) -> SideFilter {
    let n = aug.dims.n;
    SideFilter {
        category,
        f_p: RealMatrix::from_fn(n, n, |i, j| if i == j { -2.0 - i as f64 } else { 0.0 }),
        t_p: RealMatrix::identity(n, n),
        k_p: RealMatrix::zeros(n, aug.dims.p),
        l_p: RealMatrix::zeros(n, n),
    }
}

/// Entry built from fixed matrices.
pub fn fixed_entry(aug: &AugmentedModel, category: Category, fx: &FixedDesign) -> Result<DetectorEntry> {
    let uio = UIODetector::from_gains(aug, category, fx.h.clone(), fx.k1.clone(), fx.l.clone())?;
    let filter = SideFilter { category, f_p: fx.f_p.clone(), t_p: fx.t_p.clone(), k_p: fx.k_p.clone(), l_p: fx.l_p.clone() };
    Ok(DetectorEntry { filter, uio })
}

/// Design all four categories.
pub fn design_bank(aug: &AugmentedModel, d_ac: &RealMatrix, opts: &DesignOptions) -> Result<DetectorBank> {
    let n = aug.dims.n;
    let nx = aug.dims.nx();
    check_link_rank(d_ac, n)?;
    let poles = opts.poles_for(nx);
    if poles.len() != nx {
        return Err(Error::dim("design.poles", nx, poles.len()));
    }
    let aa = match &opts.fixed_aa {
        Some(fx) => fixed_entry(aug, Category::AA, fx)?,
        None => {
            let uio = design_uio(aug, Category::AA.decoupled_signatures(), d_ac, &poles, Category::AA, opts)?;
            let filter = design_plant_filter(aug, &uio, d_ac, Category::AA, &FilterSpec::default(), opts)?;
            DetectorEntry { filter, uio }
        }
    };
    let sa_uio = UIODetector { category: Category::SA, ..aa.uio.clone() };
    let sa_filter = design_plant_filter(aug, &sa_uio, d_ac, Category::SA, &FilterSpec::default(), opts)?;
    let mut fault = Vec::new();
    for c in [Category::AF, Category::SF] {
        let uio = design_uio(aug, c.decoupled_signatures(), d_ac, &poles, c, opts)?;
        fault.push(DetectorEntry { filter: passive_filter(aug, c), uio });
    }
    let sf = fault.pop().expect("two fault entries");
    let af = fault.pop().expect("two fault entries");
    Ok(DetectorBank { aa, sa: DetectorEntry { filter: sa_filter, uio: sa_uio }, af, sf, d_ac: d_ac.clone() })
}

/// ℛ* of `(l, f, b)`: the intersection of the weakly unobservable limit of
/// `V_k = V_0 ∩ f⁻¹(V_{k−1} + Im b)`, `V_0 = Ker l`, and the conditioned
/// invariant limit of `W_k = Im b + f(W_{k−1} ∩ Ker l)`.
pub fn controllability_subspace(f: &RealMatrix, b: &RealMatrix, l: &RealMatrix) -> Result<SubspaceBasis> {
    let n = f.nrows();
    if !f.is_square() {
        return Err(Error::dim("f", format!("{n}x{n}"), format!("{}x{}", f.nrows(), f.ncols())));
    }
    if b.nrows() != n {
        return Err(Error::dim("b rows", n, b.nrows()));
    }
    if l.ncols() != n {
        return Err(Error::dim("l cols", n, l.ncols()));
    }
    let ker_l = kernel(l);
    let im_b = SubspaceBasis::span(b);
    let mut v = ker_l.clone();
    let mut converged = false;
    for _ in 0..=n {
        let next = subspace_intersect(&ker_l, &preimage(f, &subspace_sum(&v, &im_b)?)?)?;
        let done = next.dim() == v.dim();
        v = next;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { steps: n });
    }
    let mut w = im_b.clone();
    converged = false;
    for _ in 0..=n {
        let next = subspace_sum(&im_b, &image(f, &subspace_intersect(&w, &ker_l)?)?)?;
        let done = next.dim() == w.dim();
        w = next;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { steps: n });
    }
    subspace_intersect(&v, &w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub id: String,
    pub description: String,
    pub residual: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_zeros")]
    pub zeros: Option<Vec<Complex64>>,
}

mod opt_zeros {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<Complex64>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|z| z.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Complex64>>, D::Error> {
        Ok(Option::<Vec<[f64; 2]>>::deserialize(d)?.map(|v| v.into_iter().map(|[a, b]| Complex64::new(a, b)).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub conditions: Vec<ConditionEntry>,
}

impl ConditionReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn get(&self, id: &str) -> Option<&ConditionEntry> {
        self.conditions.iter().find(|c| c.id == id)
    }

    pub fn failing(&self) -> Vec<&ConditionEntry> {
        self.conditions.iter().filter(|c| !c.passed).collect()
    }
}

struct Report(Vec<ConditionEntry>);

impl Report {
    fn push(&mut self, id: impl Into<String>, desc: &str, passed: bool, residual: f64) {
        self.0.push(ConditionEntry { id: id.into(), description: desc.into(), residual, passed, zeros: None });
    }

    fn push_zeros(&mut self, id: impl Into<String>, desc: &str, passed: bool, residual: f64, zeros: Vec<Complex64>) {
        self.0.push(ConditionEntry { id: id.into(), description: desc.into(), residual, passed, zeros: Some(zeros) });
    }
}

fn common_uio(r: &mut Report, pre: &str, aug: &AugmentedModel, e: &DetectorEntry) {
    let nx = aug.dims.nx();
    let u = &e.uio;
    let t_ref = RealMatrix::identity(nx, nx) - &u.h * &aug.c;
    let d = max_abs(&(&u.t - &t_ref));
    r.push(format!("{pre}.C1"), "T = I - HC", d <= 1e-10, d);
    let d2 = max_abs(&(&u.k2 - &u.f * &u.h));
    r.push(format!("{pre}.K2"), "K2 = F H", d2 <= 1e-10 * (1.0 + max_abs(&u.f) * max_abs(&u.h)), d2);
}

fn decoupled(r: &mut Report, id: String, what: &str, aug: &AugmentedModel, u: &UIODetector, f: &RealMatrix) {
    let nx = aug.dims.nx();
    let m = (RealMatrix::identity(nx, nx) - &u.h * &aug.c) * f;
    let (ok, res) = rel_zero(&m, max_abs(f));
    r.push(id, what, ok, res);
}

fn hurwitz_entry(r: &mut Report, id: String, e: &DetectorEntry) {
    let sa = spectral_abscissa(&e.error_matrix());
    r.push(id, "augmented error matrix Hurwitz", sa < 0.0, sa);
}

fn attack_common(r: &mut Report, pre: &str, aug: &AugmentedModel, bank: &DetectorBank, e: &DetectorEntry) {
    common_uio(r, pre, aug, e);
    decoupled(r, format!("{pre}.C2"), "(I - HC) F1 = 0", aug, &e.uio, &aug.f1);
    decoupled(r, format!("{pre}.C3"), "(I - HC) F2 = 0", aug, &e.uio, &aug.f2);
    let (ok, res) = rel_zero(&(&e.uio.l * &bank.d_ac), max_abs(&e.uio.l) * max_abs(&bank.d_ac));
    r.push(format!("{pre}.C4"), "L D_ac = 0", ok, res);
    let (ok, res) = rel_zero(&(&e.filter.l_p * &bank.d_ac), max_abs(&e.filter.l_p) * max_abs(&bank.d_ac));
    r.push(format!("{pre}.C5"), "L_p D_ac = 0", ok, res);
    let (ok, nr, want) = left_invertible(aug, &e.uio.f, &e.uio.l);
    r.push(format!("{pre}.C7"), "(C, F, L) left-invertible", ok, want.abs_diff(nr) as f64);
    hurwitz_entry(r, format!("{pre}.C10"), e);
}

/// Evaluate every condition for the four categories.
pub fn verify_conditions(bank: &DetectorBank, aug: &AugmentedModel) -> ConditionReport {
    let mut r = Report(Vec::new());
    let n = aug.dims.n;
    let rd = rank(&bank.d_ac);
    r.push("BANK.DAC", "rank(D_ac) < n", rd < n, rd as f64);
    if let Err(e) = bank.check_dims(aug) {
        r.push("BANK.DIMS", &e.to_string(), false, f64::NAN);
        return ConditionReport { conditions: r.0 };
    }
    let b_a_s = aug.plant.b_a_s();

    // Actuator attacks.
    let e = &bank.aa;
    attack_common(&mut r, "P1", aug, bank, e);
    let (ok, res) = rel_zero(&(&e.filter.k_p * &aug.d_a), max_abs(&e.filter.k_p) * max_abs(&aug.d_a));
    r.push("P1.C6", "K_p D_a = 0", ok, res);
    let fe = e.filter.error_dynamics();
    let x = &e.filter.t_p * &b_a_s;
    match min_phase(&fe, &x, &e.uio.l) {
        Ok((ok, zs)) => {
            let worst = zs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            r.push_zeros("P1.C8", "P_Su has no non-minimum-phase zeros", ok, worst, zs);
        }
        Err(err) => r.push("P1.C8", &err.to_string(), false, f64::NAN),
    }
    let (ok, rlx, rx) = rank_preserved(&e.uio.l, &x);
    r.push("P1.C9", "rank(L T_p B_a) = rank(T_p B_a)", ok, rx.abs_diff(rlx) as f64);

    // Sensor attacks.
    let e = &bank.sa;
    attack_common(&mut r, "P2.P1", aug, bank, e);
    let tb = &e.filter.t_p * &b_a_s;
    let (ok, res) = rel_zero(&tb, max_abs(&e.filter.t_p) * max_abs(&b_a_s));
    r.push("P2.C1", "T_p B_a = 0", ok, res);
    let fe = e.filter.error_dynamics();
    let x = &e.filter.k_p * &aug.d_a;
    match min_phase(&fe, &(-&x), &e.uio.l) {
        Ok((ok, zs)) => {
            let worst = zs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            r.push_zeros("P2.C2", "P_Sy has no non-minimum-phase zeros", ok, worst, zs);
        }
        Err(err) => r.push("P2.C2", &err.to_string(), false, f64::NAN),
    }
    let (ok, rlx, rx) = rank_preserved(&e.uio.l, &x);
    r.push("P2.C3", "rank(L K_p D_a) = rank(K_p D_a)", ok && rx > 0, rx.abs_diff(rlx) as f64);

    // Faults.
    for (pre, e, blind, seen) in [("P3", &bank.af, &aug.f2, &aug.f1), ("P4", &bank.sf, &aug.f1, &aug.f2)] {
        let lmax = max_abs(&e.uio.l);
        r.push(format!("{pre}.L0"), "L = 0", lmax == 0.0, lmax);
        common_uio(&mut r, pre, aug, e);
        decoupled(&mut r, format!("{pre}.C2"), "(I - HC) F_other = 0", aug, &e.uio, blind);
        hurwitz_entry(&mut r, format!("{pre}.C3"), e);
        let nx = aug.dims.nx();
        let vis = max_abs(&((RealMatrix::identity(nx, nx) - &e.uio.h * &aug.c) * seen));
        let need = seen.ncols() > 0;
        r.push(format!("{pre}.S"), "target fault reaches the detector error", !need || vis > IDENTITY_TOL * max_abs(seen), vis);
    }
    ConditionReport { conditions: r.0 }
}

/// Confine `T_p^AA` to the largest `(F_p + L_p)`-invariant subspace inside
/// `Ker L`, so that `L e_p ≡ 0` for every actuator attack.
pub fn degrade_condition9(bank: &DetectorBank) -> Result<DetectorBank> {
    let e = &bank.aa;
    let v = unobservable_subspace(&e.filter.error_dynamics(), &e.uio.l)?;
    if v.is_zero() {
        return Err(Error::infeasible("P1.C9", "Ker L contains no invariant subspace of F_p + L_p"));
    }
    let mut out = bank.clone();
    out.aa.filter.t_p = v.projector() * &e.filter.t_p;
    Ok(out)
}
