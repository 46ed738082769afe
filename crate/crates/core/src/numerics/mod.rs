//! Tolerance-aware dense linear algebra used by every other module.

use nalgebra::{DMatrix, Schur, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub mod discretize;
pub mod place;
pub mod subspace;
pub mod zeros;

pub use discretize::{discretize, Integrator};
pub use place::place_observer_gain;
pub use subspace::{image, preimage, subspace_intersect, subspace_sum, SubspaceBasis};
pub use zeros::{invariant_zeros, rosenbrock, zero_direction, ZeroDirection, ZeroSet};

pub type RealMatrix = DMatrix<f64>;

/// Relative rank and subspace tolerance used when none is given.
pub const DEFAULT_TOL: f64 = 1e-9;

const SVD_MAX_ITER: usize = 10_000;

pub(crate) fn check_finite(m: &RealMatrix, name: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("`{name}` has non-finite entries")))
    }
}

type Svd = SVD<f64, nalgebra::Dyn, nalgebra::Dyn>;

/// Largest of `‖M − U Σ Vᵀ‖ / ‖M‖` and the orthogonality defects of `U`, `V`.
fn svd_defect(m: &RealMatrix, d: &Svd) -> f64 {
    let (Some(u), Some(vt)) = (&d.u, &d.v_t) else { return f64::INFINITY };
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let rebuilt = u * RealMatrix::from_diagonal(&d.singular_values) * vt;
    let ortho = |q: &RealMatrix| (q - RealMatrix::identity(q.nrows(), q.ncols())).norm();
    ((m - rebuilt).norm() / scale).max(ortho(&(u.transpose() * u))).max(ortho(&(vt * vt.transpose())))
}

/// One-sided Jacobi SVD (unsorted). Slow but accurate to working precision
/// on the small, nearly rank-deficient matrices where the bidiagonal
/// iteration goes wrong.
fn jacobi_svd(m: &RealMatrix) -> Svd {
    let (r, c) = m.shape();
    if r < c {
        let t = jacobi_svd(&m.transpose());
        return SVD { u: t.v_t.map(|x| x.transpose()), v_t: t.u.map(|x| x.transpose()), singular_values: t.singular_values };
    }
    let mut a = m.clone();
    let mut v = RealMatrix::identity(c, c);
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = cs * x - sn * y;
                        mat[(i, q)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = a.column_iter().map(|col| col.norm()).collect();
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let mut u = RealMatrix::zeros(r, c);
    let mut missing = Vec::new();
    for (j, &sj) in sigma.iter().enumerate() {
        if sj > smax * f64::EPSILON * r as f64 && sj > 0.0 {
            u.set_column(j, &(a.column(j) / sj));
        } else {
            missing.push(j);
        }
    }
    // Complete U with unit vectors orthogonalized against the filled columns.
    let mut e = 0;
    for j in missing {
        while e < r {
            let mut w = nalgebra::DVector::zeros(r);
            w[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for k in 0..c {
                    let uk = u.column(k).into_owned();
                    w -= &uk * uk.dot(&w);
                }
            }
            let n = w.norm();
            if n > 1e-8 {
                u.set_column(j, &(w / n));
                break;
            }
        }
    }
    SVD { u: Some(u), v_t: Some(v.transpose()), singular_values: nalgebra::DVector::from_vec(sigma) }
}

/// Thin SVD that is checked against its reconstruction. nalgebra's
/// bidiagonal iteration occasionally settles on wrong singular values for
/// nearly rank-deficient inputs; a Jacobi factorization is the fallback.
fn svd(m: &RealMatrix, want_u: bool, want_v: bool) -> Svd {
    const ACCEPT: f64 = 1e-10;
    let candidates: [&dyn Fn() -> Option<Svd>; 3] = [
        &|| SVD::try_new(m.clone(), true, true, f64::EPSILON, SVD_MAX_ITER),
        &|| Some(SVD::new(m.clone(), true, true)),
        &|| Some(jacobi_svd(m)),
    ];
    let mut best: Option<(f64, Svd)> = None;
    for make in candidates {
        if let Some(d) = make() {
            let e = svd_defect(m, &d);
            if best.as_ref().is_none_or(|(b, _)| e < *b) {
                best = Some((e, d));
            }
        }
        if best.as_ref().is_some_and(|(e, _)| *e <= ACCEPT) {
            break;
        }
    }
    let (_, mut d) = best.expect("SVD::new always returns a factorization");
    if !want_u {
        d.u = None;
    }
    if !want_v {
        d.v_t = None;
    }
    d
}

/// Singular values in descending order.
pub fn singular_values(m: &RealMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = svd(m, false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn max_singular_value(m: &RealMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Number of singular values above `tol` times the largest one.
pub fn rank_tol(m: &RealMatrix, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("rank tolerance must be positive, got {tol}")));
    }
    check_finite(m, "m")?;
    let s = singular_values(m);
    Ok(count_above(&s, tol * s.first().copied().unwrap_or(0.0)))
}

/// Rank with the default tolerance. Non-finite input has rank 0.
pub fn rank(m: &RealMatrix) -> usize {
    rank_tol(m, DEFAULT_TOL).unwrap_or(0)
}

/// Rank counted against an externally supplied scale instead of `‖m‖`.
///
/// Used where `m` is a product whose smallness is itself meaningful,
/// e.g. `L·X` being nearly zero relative to `‖L‖·‖X‖`.
pub fn rank_scaled(m: &RealMatrix, scale: f64, tol: f64) -> usize {
    if !(scale > 0.0) {
        return 0;
    }
    count_above(&singular_values(m), tol * scale)
}

fn count_above(s: &[f64], thresh: f64) -> usize {
    if s.first().is_none_or(|&s0| s0 == 0.0) {
        return 0;
    }
    s.iter().filter(|&&v| v > thresh).count()
}

/// Full right singular basis `V` (cols × cols) with matching descending
/// singular values (padded with zeros to `cols`).
pub(crate) fn right_svd(m: &RealMatrix) -> (Vec<f64>, RealMatrix) {
    let (r, c) = m.shape();
    if c == 0 {
        return (Vec::new(), RealMatrix::zeros(0, 0));
    }
    if r == 0 {
        return (vec![0.0; c], RealMatrix::identity(c, c));
    }
    let padded = if r < c {
        let mut p = RealMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let d = svd(&padded, false, true);
    let vt = d.v_t.expect("v_t requested");
    let mut idx: Vec<usize> = (0..c).collect();
    let sv = &d.singular_values;
    idx.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let mut v = RealMatrix::zeros(c, c);
    let mut s = Vec::with_capacity(c);
    for (j, &k) in idx.iter().enumerate() {
        v.set_column(j, &vt.row(k).transpose());
        s.push(sv[k]);
    }
    (s, v)
}

/// Left singular vectors for the nonzero singular values, descending.
pub(crate) fn left_svd(m: &RealMatrix) -> (Vec<f64>, RealMatrix) {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return (Vec::new(), RealMatrix::zeros(r, 0));
    }
    let d = svd(m, true, false);
    let u = d.u.expect("u requested");
    let sv = &d.singular_values;
    let mut idx: Vec<usize> = (0..sv.len()).collect();
    idx.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let mut out = RealMatrix::zeros(r, idx.len());
    let mut s = Vec::with_capacity(idx.len());
    for (j, &k) in idx.iter().enumerate() {
        out.set_column(j, &u.column(k));
        s.push(sv[k]);
    }
    (s, out)
}

/// Orthonormal basis of `{x : m·x = 0}`.
pub fn null_space_basis(m: &RealMatrix, tol: f64) -> Result<SubspaceBasis> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("null-space tolerance must be positive, got {tol}")));
    }
    check_finite(m, "m")?;
    Ok(null_space_scaled(m, max_singular_value(m), tol))
}

/// Null space where "zero" means below `tol * scale`.
pub(crate) fn null_space_scaled(m: &RealMatrix, scale: f64, tol: f64) -> SubspaceBasis {
    let c = m.ncols();
    let (s, v) = right_svd(m);
    let r = if scale > 0.0 { s.iter().filter(|&&x| x > tol * scale).count() } else { 0 };
    SubspaceBasis::from_orthonormal(v.columns(r, c - r).into_owned())
}

/// Orthonormal basis of the column space of `m`.
pub fn range_basis(m: &RealMatrix, tol: f64) -> SubspaceBasis {
    range_scaled(m, max_singular_value(m), tol)
}

pub(crate) fn range_scaled(m: &RealMatrix, scale: f64, tol: f64) -> SubspaceBasis {
    let (s, u) = left_svd(m);
    let r = if scale > 0.0 { s.iter().filter(|&&x| x > tol * scale).count() } else { 0 };
    let mut b = u.columns(0, r).into_owned();
    if r == 0 {
        b = RealMatrix::zeros(m.nrows(), 0);
    }
    SubspaceBasis::from_orthonormal(b)
}

/// Moore–Penrose pseudo-inverse with relative cutoff `tol`.
pub fn pinv_tol(m: &RealMatrix, tol: f64) -> RealMatrix {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return RealMatrix::zeros(c, r);
    }
    let d = svd(m, true, true);
    let smax = d.singular_values.max();
    let cut = tol * smax;
    let u = d.u.as_ref().expect("u");
    let vt = d.v_t.as_ref().expect("v_t");
    let mut out = RealMatrix::zeros(c, r);
    if smax == 0.0 {
        return out;
    }
    for (k, &s) in d.singular_values.iter().enumerate() {
        if s > cut {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

pub fn pinv(m: &RealMatrix) -> RealMatrix {
    pinv_tol(m, DEFAULT_TOL)
}

/// Eigenvalues of a square matrix, unordered.
pub fn eigenvalues(a: &RealMatrix) -> Vec<Complex64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, SVD_MAX_ITER).unwrap_or_else(|| Schur::new(a.clone()));
    schur.complex_eigenvalues().iter().map(|z| Complex64::new(z.re, z.im)).collect()
}

/// Largest real part of the spectrum (−∞ for the empty matrix).
pub fn spectral_abscissa(a: &RealMatrix) -> f64 {
    eigenvalues(a).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// True iff every eigenvalue has real part below `-margin`.
pub fn is_hurwitz(a: &RealMatrix, margin: f64) -> bool {
    a.is_square() && a.iter().all(|v| v.is_finite()) && spectral_abscissa(a) < -margin
}

pub fn vstack(blocks: &[&RealMatrix]) -> RealMatrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = RealMatrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r0, 0), b.shape()).copy_from(*b);
        r0 += b.nrows();
    }
    out
}

pub fn hstack(blocks: &[&RealMatrix]) -> RealMatrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = RealMatrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c0), b.shape()).copy_from(*b);
        c0 += b.ncols();
    }
    out
}

pub fn block_diag(blocks: &[&RealMatrix]) -> RealMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = RealMatrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(*b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Row-major constructor used by fixtures and tests.
pub fn mat(rows: usize, cols: usize, data: &[f64]) -> RealMatrix {
    RealMatrix::from_row_slice(rows, cols, data)
}

pub fn max_abs(m: &RealMatrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tp_ba() -> RealMatrix {
        mat(4, 2, &[-6., -6., -6., -14., 12., -2., 0., -2.])
    }

    #[test]
    fn rank_of_identity_and_zero() {
        assert_eq!(rank_tol(&RealMatrix::identity(4, 4), 1e-9).unwrap(), 4);
        assert_eq!(rank_tol(&RealMatrix::zeros(3, 2), 1e-9).unwrap(), 0);
    }

    #[test]
    fn rank_of_filtered_attack_map() {
        let tp = mat(4, 4, &[1., 1., 1., 1., 1., 2., 3., 1., 2., 0., 0., -4., 0., 1., 0., 0.]);
        let ba = mat(4, 2, &[-2., -1., 0., -2., 0., -3., -4., 0.]);
        let prod = &tp * &ba;
        assert!((&prod - tp_ba()).abs().max() < 1e-14);
        assert_eq!(rank_tol(&prod, 1e-9).unwrap(), 2);
    }

    #[test]
    fn nearly_antiparallel_columns_keep_their_span() {
        let m = RealMatrix::from_column_slice(
            2,
            2,
            &[-0.7353288782716164, 0.6777104402175063, 0.7353288782716165, -0.6777104402175059],
        );
        let s = singular_values(&m);
        assert!((s[0] - 2f64.sqrt()).abs() < 1e-12, "{s:?}");
        let r = range_basis(&m, DEFAULT_TOL);
        assert_eq!(r.dim(), 1);
        assert!(r.distance(&m.column(0).into_owned()) < 1e-12);
        let m = RealMatrix::from_column_slice(
            3,
            2,
            &[
                -0.8464543694538262,
                -0.11288406348289333,
                -0.5203577506332694,
                0.8464543694538276,
                0.1128840634828944,
                0.5203577506332673,
            ],
        );
        let r = range_basis(&m, DEFAULT_TOL);
        assert_eq!(r.dim(), 1);
        assert!(r.distance(&m.column(0).into_owned()) < 1e-12);
    }

    #[test]
    fn jacobi_matches_on_wide_and_zero_input() {
        let m = mat(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let d = jacobi_svd(&m);
        assert!(svd_defect(&m, &d) < 1e-13);
        let z = RealMatrix::zeros(3, 2);
        assert!(svd_defect(&z, &jacobi_svd(&z)) < 1e-13);
    }

    #[test]
    fn rank_rejects_bad_input() {
        assert!(rank_tol(&RealMatrix::identity(2, 2), 0.0).is_err());
        let mut m = RealMatrix::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(rank_tol(&m, 1e-9), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn null_space_examples() {
        assert_eq!(null_space_basis(&RealMatrix::identity(3, 3), 1e-9).unwrap().dim(), 0);
        let z = null_space_basis(&RealMatrix::zeros(2, 4), 1e-9).unwrap();
        assert_eq!((z.dim(), z.ambient_dim()), (4, 4));
        let k = null_space_basis(&mat(1, 2, &[1., 1.]), 1e-9).unwrap();
        assert_eq!(k.dim(), 1);
        let v = k.basis().column(0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0].abs() - s).abs() < 1e-12 && (v[0] + v[1]).abs() < 1e-12);
    }

    #[test]
    fn pinv_of_rank_deficient() {
        let m = mat(2, 2, &[1., 1., 1., 1.]);
        let p = pinv(&m);
        assert!((&m * &p * &m - &m).abs().max() < 1e-12);
        assert!((p[(0, 0)] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn hurwitz_examples() {
        assert!(is_hurwitz(&(-RealMatrix::identity(3, 3)), 0.0));
        assert!(!is_hurwitz(&mat(2, 2, &[0., 1., 0., 0.]), 0.0));
        let fp = RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3., -2., -4., -5.]));
        let lp = mat(4, 4, &[0., 0., 4., -1., 0., 0., 3., -2., 0., 0., 2., -3., 0., 0., 5., -1.]);
        let m = fp + lp;
        assert!(is_hurwitz(&m, 0.0));
        let mut ev = eigenvalues(&m);
        ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let r11 = 11f64.sqrt();
        let want = [(-4., -r11), (-4., r11), (-3., 0.), (-2., 0.)];
        for (z, (re, im)) in ev.iter().zip(want) {
            assert!((z.re - re).abs() < 1e-9 && (z.im - im).abs() < 1e-9, "{z}");
        }
    }

    #[test]
    fn stacking_helpers() {
        let a = mat(1, 2, &[1., 2.]);
        let b = mat(1, 2, &[3., 4.]);
        assert_eq!(vstack(&[&a, &b]), mat(2, 2, &[1., 2., 3., 4.]));
        assert_eq!(hstack(&[&a, &b]), mat(1, 4, &[1., 2., 3., 4.]));
        assert_eq!(block_diag(&[&a, &b]).shape(), (2, 4));
    }

    fn small_matrix() -> impl Strategy<Value = RealMatrix> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            (prop::collection::vec(-3i32..=3, r * c), Just((r, c))).prop_map(move |(v, (r, c))| {
                RealMatrix::from_iterator(r, c, v.into_iter().map(f64::from))
            })
        })
    }

    proptest! {
        #[test]
        fn checked_svd_reconstructs_rank_deficient_products(
            a in proptest::collection::vec(-3.0f64..3.0, 8),
            b in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let m = RealMatrix::from_vec(4, 2, a) * RealMatrix::from_vec(2, 3, b);
            let d = svd(&m, true, true);
            prop_assert!(svd_defect(&m, &d) < 1e-10);
            prop_assert!(rank(&m) <= 2);
        }

        #[test]
        fn rank_is_transpose_invariant(m in small_matrix()) {
            prop_assert_eq!(rank_tol(&m, 1e-9).unwrap(), rank_tol(&m.transpose(), 1e-9).unwrap());
        }

        #[test]
        fn null_space_is_orthonormal_and_annihilated(m in small_matrix()) {
            let k = null_space_basis(&m, 1e-9).unwrap();
            let b = k.basis();
            let gram = b.transpose() * b;
            prop_assert!((gram - RealMatrix::identity(k.dim(), k.dim())).abs().max() <= 1e-10);
            prop_assert!((&m * b).abs().max() <= 1e-8 * (1.0 + m.abs().max()));
            prop_assert_eq!(k.dim() + rank(&m), m.ncols());
        }
    }
}
