//! Invariant zeros of `P(s) = [sI − A, −B; C, D]`.
//!
//! Candidates come from a staircase deflation of the system matrix down to a
//! square, invertible feedthrough, on the primal and then the dual system.
//! Every candidate is then confirmed by a rank drop of the complex pencil.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{eigenvalues, hstack, max_singular_value, right_svd, vstack, RealMatrix, DEFAULT_TOL};
use crate::error::{Error, Result};

/// Relative threshold on the smallest relevant singular value of `P(z)` for
/// a candidate `z` to be accepted as a zero.
pub const ZERO_ACCEPT_TOL: f64 = 1e-6;

const NORMAL_RANK_POINTS: usize = 5;
const NORMAL_RANK_SEED: u64 = 0x5EED_2E70;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet {
    #[serde(with = "crate::serde_util::complex_vec")]
    pub zeros: Vec<Complex64>,
    pub normal_rank: usize,
    /// Pencil shape `(n + p, n + m)`.
    pub rows: usize,
    pub cols: usize,
}

impl ZeroSet {
    /// The pencil is rank deficient at every `s`.
    pub fn degenerate(&self) -> bool {
        self.normal_rank < self.rows.min(self.cols)
    }

    /// Zeros with `Re(z) > -margin`.
    pub fn unstable(&self, margin: f64) -> Vec<Complex64> {
        self.zeros.iter().copied().filter(|z| z.re > -margin).collect()
    }

    /// Real zeros in the closed right half plane, largest first.
    pub fn real_nonminimum_phase(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .zeros
            .iter()
            .filter(|z| z.im.abs() <= 1e-9 * (1.0 + z.re.abs()) && z.re >= 0.0)
            .map(|z| z.re)
            .collect();
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }
}

/// A real zero with its state and input directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroDirection {
    pub z: f64,
    pub x0: Vec<f64>,
    pub u0: Vec<f64>,
}

struct Sys {
    a: RealMatrix,
    b: RealMatrix,
    c: RealMatrix,
    d: RealMatrix,
}

impl Sys {
    fn dual(self) -> Sys {
        Sys { a: self.a.transpose(), b: self.c.transpose(), c: self.b.transpose(), d: self.d.transpose() }
    }
}

fn check_conformable(a: &RealMatrix, b: &RealMatrix, c: &RealMatrix, d: &RealMatrix) -> Result<()> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::dim("a", format!("{n}x{n}"), format!("{}x{}", a.nrows(), a.ncols())));
    }
    if b.nrows() != n {
        return Err(Error::dim("b rows", n, b.nrows()));
    }
    if c.ncols() != n {
        return Err(Error::dim("c cols", n, c.ncols()));
    }
    if d.shape() != (c.nrows(), b.ncols()) {
        return Err(Error::dim(
            "d",
            format!("{}x{}", c.nrows(), b.ncols()),
            format!("{}x{}", d.nrows(), d.ncols()),
        ));
    }
    for (m, name) in [(a, "a"), (b, "b"), (c, "c"), (d, "d")] {
        super::check_finite(m, name)?;
    }
    Ok(())
}

/// Deflate until `d` has full row rank, preserving the finite zeros.
fn reduce(mut s: Sys, thresh: f64) -> Sys {
    loop {
        let p = s.c.nrows();
        let n = s.a.nrows();
        if p == 0 {
            return s;
        }
        let (sv, u) = right_svd(&s.d.transpose());
        let sigma = sv.iter().filter(|&&x| x > thresh).count();
        if sigma == p {
            return s;
        }
        let ut = u.transpose();
        let cc = &ut * &s.c;
        let dd = &ut * &s.d;
        let c1 = cc.rows(0, sigma).into_owned();
        let d1 = dd.rows(0, sigma).into_owned();
        let c2 = cc.rows(sigma, p - sigma).into_owned();
        let (sc, v) = right_svd(&c2);
        let rho = sc.iter().filter(|&&x| x > thresh).count();
        if rho == 0 {
            return Sys { a: s.a, b: s.b, c: c1, d: d1 };
        }
        let k = n - rho;
        let w = hstack(&[&v.columns(rho, k).into_owned(), &v.columns(0, rho).into_owned()]);
        let at = w.transpose() * &s.a * &w;
        let bt = w.transpose() * &s.b;
        let c1w = &c1 * &w;
        s = Sys {
            a: at.view((0, 0), (k, k)).into_owned(),
            b: bt.rows(0, k).into_owned(),
            c: vstack(&[&at.view((k, 0), (rho, k)).into_owned(), &c1w.columns(0, k).into_owned()]),
            d: vstack(&[&bt.rows(k, rho).into_owned(), &d1]),
        };
    }
}

fn candidates(a: &RealMatrix, b: &RealMatrix, c: &RealMatrix, d: &RealMatrix) -> Vec<Complex64> {
    let sys_norm = max_singular_value(&vstack(&[&hstack(&[a, b]), &hstack(&[c, d])])).max(1.0);
    let thresh = DEFAULT_TOL * sys_norm;
    let s = Sys { a: a.clone(), b: b.clone(), c: c.clone(), d: d.clone() };
    let s = reduce(reduce(s, thresh).dual(), thresh);
    let n = s.a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let (p, m) = s.d.shape();
    if p == 0 && m == 0 {
        return eigenvalues(&s.a);
    }
    if p != m {
        // Deflation left a rectangular feedthrough; fall back on a
        // least-squares closure and let the rank test arbitrate.
        let dp = super::pinv(&s.d);
        return eigenvalues(&(&s.a - &s.b * dp * &s.c));
    }
    match s.d.clone().lu().solve(&s.c) {
        Some(dc) => eigenvalues(&(&s.a - &s.b * dc)),
        None => Vec::new(),
    }
}

/// Complex Rosenbrock matrix `[zI − A, −B; C, D]`.
pub fn rosenbrock(a: &RealMatrix, b: &RealMatrix, c: &RealMatrix, d: &RealMatrix, z: Complex64) -> DMatrix<Complex64> {
    let n = a.nrows();
    let (p, m) = d.shape();
    let mut out = DMatrix::<Complex64>::zeros(n + p, n + m);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = Complex64::new(-a[(i, j)], 0.0);
        }
        out[(i, i)] += z;
        for j in 0..m {
            out[(i, n + j)] = Complex64::new(-b[(i, j)], 0.0);
        }
    }
    for i in 0..p {
        for j in 0..n {
            out[(n + i, j)] = Complex64::new(c[(i, j)], 0.0);
        }
        for j in 0..m {
            out[(n + i, n + j)] = Complex64::new(d[(i, j)], 0.0);
        }
    }
    out
}

/// Real Rosenbrock matrix at a real point.
pub fn rosenbrock_real(a: &RealMatrix, b: &RealMatrix, c: &RealMatrix, d: &RealMatrix, s: f64) -> RealMatrix {
    let n = a.nrows();
    let top = hstack(&[&(RealMatrix::identity(n, n) * s - a), &(-b)]);
    vstack(&[&top, &hstack(&[c, d])])
}

fn complex_singular_values(m: &DMatrix<Complex64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Normal rank of the pencil, as the largest rank seen at a few seeded real
/// points kept away from `avoid`.
pub fn normal_rank(a: &RealMatrix, b: &RealMatrix, c: &RealMatrix, d: &RealMatrix, avoid: &[Complex64]) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(NORMAL_RANK_SEED);
    let mut best = 0;
    let mut found = 0;
    let mut tries = 0;
    while found < NORMAL_RANK_POINTS && tries < 200 {
        tries += 1;
        let s: f64 = rng.random_range(-10.0..10.0);
        if avoid.iter().any(|z| (Complex64::new(s, 0.0) - z).norm() < 0.25) {
            continue;
        }
        found += 1;
        let r = super::rank(&rosenbrock_real(a, b, c, d, s));
        best = best.max(r);
    }
    best
}

/// Finite invariant zeros and the normal rank of the Rosenbrock pencil.
pub fn invariant_zeros(a: &RealMatrix, b: &RealMatrix, c: &RealMatrix, d: &RealMatrix) -> Result<ZeroSet> {
    check_conformable(a, b, c, d)?;
    let n = a.nrows();
    let (p, m) = d.shape();
    let cand = candidates(a, b, c, d);
    let nr = normal_rank(a, b, c, d, &cand);
    let mut zeros: Vec<Complex64> = Vec::new();
    if nr > 0 {
        for z in cand {
            if !z.re.is_finite() || !z.im.is_finite() {
                continue;
            }
            let sv = complex_singular_values(&rosenbrock(a, b, c, d, z));
            let smax = sv[0].max(f64::MIN_POSITIVE);
            if sv.get(nr - 1).is_none_or(|&s| s <= ZERO_ACCEPT_TOL * smax) {
                zeros.push(z);
            }
        }
    }
    symmetrize(&mut zeros);
    zeros.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(ZeroSet { zeros, normal_rank: nr, rows: n + p, cols: n + m })
}

/// Snap near-real values onto the axis and pair the rest exactly.
fn symmetrize(zs: &mut [Complex64]) {
    for z in zs.iter_mut() {
        if z.im.abs() <= 1e-10 * (1.0 + z.norm()) {
            z.im = 0.0;
        }
    }
}

/// State and input directions of a real zero, scaled so that the largest
/// state component is `+1` (or the largest input component if `x0 = 0`).
pub fn zero_direction(a: &RealMatrix, b: &RealMatrix, c: &RealMatrix, d: &RealMatrix, z: f64) -> Result<ZeroDirection> {
    check_conformable(a, b, c, d)?;
    let n = a.nrows();
    let p = rosenbrock_real(a, b, c, d, z);
    let (_, v) = right_svd(&p);
    let k = v.ncols();
    if k == 0 {
        return Err(Error::InvalidInput("pencil has no columns".into()));
    }
    let mut w = v.column(k - 1).into_owned();
    let lead = if n > 0 { &w.as_slice()[..n] } else { w.as_slice() };
    let lead = if lead.iter().all(|x| x.abs() < 1e-12) { w.as_slice() } else { lead };
    let pivot = lead.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if pivot == 0.0 {
        return Err(Error::InvalidInput("null direction vanished".into()));
    }
    w /= pivot;
    Ok(ZeroDirection { z, x0: w.as_slice()[..n].to_vec(), u0: w.as_slice()[n..].to_vec() })
}
