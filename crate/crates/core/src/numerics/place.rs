//! Observer gain placement on the observable part of `(c, a)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::subspace::{kernel, preimage, subspace_intersect, SubspaceBasis};
use super::{eigenvalues, hstack, RealMatrix};
use crate::error::{Error, Result};

const PLACE_SEED: u64 = 0x00B5_E12E;
const PLACE_DRAWS: usize = 12;

/// Largest `a`-invariant subspace contained in `Ker c`.
pub fn unobservable_subspace(a: &RealMatrix, c: &RealMatrix) -> Result<SubspaceBasis> {
    let n = a.nrows();
    let mut v = kernel(c);
    for _ in 0..=n {
        if v.is_zero() {
            return Ok(v);
        }
        let next = subspace_intersect(&v, &preimage(a, &v)?)?;
        if next.dim() == v.dim() {
            return Ok(next);
        }
        v = next;
    }
    Err(Error::NonConvergence { steps: n })
}

/// Greedy nearest matching; returns the worst distance.
pub fn pole_mismatch(got: &[Complex64], want: &[Complex64]) -> f64 {
    let mut pool: Vec<Complex64> = got.to_vec();
    let mut worst: f64 = 0.0;
    for w in want {
        let Some((k, d)) = pool
            .iter()
            .enumerate()
            .map(|(k, g)| (k, (g - w).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
        else {
            return f64::INFINITY;
        };
        worst = worst.max(d);
        pool.swap_remove(k);
    }
    worst
}

/// Real block-diagonal matrix carrying the requested spectrum, with Jordan
/// coupling between repeated entries.
fn real_spectrum_matrix(poles: &[Complex64]) -> Result<RealMatrix> {
    let n = poles.len();
    let tol = 1e-9;
    let mut reals: Vec<f64> = Vec::new();
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] {
            continue;
        }
        let p = poles[i];
        used[i] = true;
        if p.im.abs() <= tol * (1.0 + p.norm()) {
            reals.push(p.re);
            continue;
        }
        let j = (0..n).find(|&j| !used[j] && (poles[j] - p.conj()).norm() <= tol * (1.0 + p.norm()));
        match j {
            Some(j) => {
                used[j] = true;
                pairs.push((p.re, p.im.abs()));
            }
            None => return Err(Error::InvalidInput(format!("pole {p} has no conjugate partner"))),
        }
    }
    reals.sort_by(|a, b| a.total_cmp(b));
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut lam = RealMatrix::zeros(n, n);
    let mut k = 0;
    let mut prev: Option<f64> = None;
    for r in reals {
        lam[(k, k)] = r;
        if prev.is_some_and(|q| (q - r).abs() <= tol * (1.0 + r.abs())) {
            lam[(k - 1, k)] = 1.0;
        }
        prev = Some(r);
        k += 1;
    }
    let mut prevc: Option<(f64, f64)> = None;
    for (re, im) in pairs {
        lam[(k, k)] = re;
        lam[(k + 1, k + 1)] = re;
        lam[(k, k + 1)] = im;
        lam[(k + 1, k)] = -im;
        if prevc.is_some_and(|(r0, i0)| (r0 - re).abs() + (i0 - im).abs() <= tol * (1.0 + re.abs() + im)) {
            lam[(k - 2, k)] = 1.0;
            lam[(k - 1, k + 1)] = 1.0;
        }
        prevc = Some((re, im));
        k += 2;
    }
    Ok(lam)
}

/// Solve `a·x − x·lam = rhs` through the Kronecker form.
fn sylvester(a: &RealMatrix, lam: &RealMatrix, rhs: &RealMatrix) -> Option<RealMatrix> {
    let n = a.nrows();
    let k = lam.nrows();
    let mut big = RealMatrix::zeros(n * k, n * k);
    for j in 0..k {
        for i in 0..k {
            let l = lam[(i, j)];
            for r in 0..n {
                big[(j * n + r, i * n + r)] -= l;
            }
        }
        for r in 0..n {
            for cc in 0..n {
                big[(j * n + r, j * n + cc)] += a[(r, cc)];
            }
        }
    }
    let v = DMatrix::from_column_slice(n * k, 1, rhs.as_slice());
    let sol = big.lu().solve(&v)?;
    Some(RealMatrix::from_column_slice(n, k, sol.as_slice()))
}


#[derive(Debug, Clone, Copy)]
enum PoleBlock {
    Real(f64),
    Pair(f64, f64),
}

fn pole_blocks(poles: &[Complex64]) -> Result<Vec<PoleBlock>> {
    let tol = 1e-9;
    let mut used = vec![false; poles.len()];
    let mut out = Vec::new();
    for i in 0..poles.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let p = poles[i];
        if p.im.abs() <= tol * (1.0 + p.norm()) {
            out.push(PoleBlock::Real(p.re));
            continue;
        }
        let j = (0..poles.len()).find(|&j| !used[j] && (poles[j] - p.conj()).norm() <= tol * (1.0 + p.norm()));
        let Some(j) = j else {
            return Err(Error::InvalidInput(format!("pole {p} has no conjugate partner")));
        };
        used[j] = true;
        out.push(PoleBlock::Pair(p.re, p.im.abs()));
    }
    Ok(out)
}

/// Columns `x` admissible for one block: `(a − λ)x ∈ Im b` in real form.
fn admissible(a: &RealMatrix, b: &RealMatrix, blk: PoleBlock) -> Result<SubspaceBasis> {
    let n = a.nrows();
    match blk {
        PoleBlock::Real(l) => preimage(&(a - RealMatrix::identity(n, n) * l), &SubspaceBasis::span(b)),
        PoleBlock::Pair(s, w) => {
            let shifted = a - RealMatrix::identity(n, n) * s;
            let iw = RealMatrix::identity(n, n) * w;
            let op = super::vstack(&[&hstack(&[&shifted, &iw]), &hstack(&[&(-&iw), &shifted])]);
            preimage(&op, &SubspaceBasis::span(&super::block_diag(&[b, b])))
        }
    }
}

fn block_width(blk: PoleBlock) -> usize {
    match blk {
        PoleBlock::Real(_) => 1,
        PoleBlock::Pair(..) => 2,
    }
}

/// Eigenvector assignment: each closed-loop eigenvector is drawn from its
/// admissible subspace, then the columns are swept towards orthogonality.
/// Handles open-loop/closed-loop overlap; fails on multiplicities above `m`.
fn place_eigvectors(a: &RealMatrix, b: &RealMatrix, poles: &[Complex64]) -> Result<RealMatrix> {
    let n = a.nrows();
    let blocks = pole_blocks(poles)?;
    let spaces: Vec<SubspaceBasis> = blocks.iter().map(|&blk| admissible(a, b, blk)).collect::<Result<_>>()?;
    if spaces.iter().zip(&blocks).any(|(s, &blk)| s.dim() < block_width(blk)) {
        return Err(Error::infeasible("pole-placement", "an admissible eigenvector subspace is too small"));
    }
    let bp = super::pinv(b);
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut k = 0;
    for &blk in &blocks {
        offsets.push(k);
        k += block_width(blk);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PLACE_SEED ^ 0x5EED);
    let mut best: Option<(f64, RealMatrix)> = None;
    for _ in 0..4 {
        let mut x = RealMatrix::zeros(n, n);
        for (bi, (&blk, s)) in blocks.iter().zip(&spaces).enumerate() {
            let coeff = RealMatrix::from_fn(s.dim(), 1, |_, _| StandardNormal.sample(&mut rng));
            let v = s.basis() * coeff;
            set_block(&mut x, offsets[bi], blk, &v, n);
        }
        for _ in 0..6 {
            for (bi, (&blk, s)) in blocks.iter().zip(&spaces).enumerate() {
                let w = block_width(blk);
                let others: Vec<usize> = (0..n).filter(|&c| c < offsets[bi] || c >= offsets[bi] + w).collect();
                let q = RealMatrix::from_fn(n, others.len(), |r, c| x[(r, others[c])]);
                let perp = kernel(&q.transpose());
                if perp.dim() < w {
                    continue;
                }
                let target = match blk {
                    PoleBlock::Real(_) => perp.basis().column(0).into_owned(),
                    PoleBlock::Pair(..) => {
                        let y = perp.basis();
                        super::vstack(&[&y.columns(0, 1).into_owned(), &y.columns(1, 1).into_owned()]).column(0).into_owned()
                    }
                };
                let v = s.projector() * target;
                if v.norm() > 1e-12 {
                    set_block(&mut x, offsets[bi], blk, &RealMatrix::from_column_slice(v.len(), 1, v.as_slice()), n);
                }
            }
        }
        let sv = super::singular_values(&x);
        let score = sv[n - 1] / sv[0];
        if !(score > 1e-12) {
            continue;
        }
        let mut g = RealMatrix::zeros(b.ncols(), n);
        for (bi, &blk) in blocks.iter().enumerate() {
            let o = offsets[bi];
            match blk {
                PoleBlock::Real(l) => {
                    let xc = x.column(o).into_owned();
                    g.set_column(o, &(&bp * (a * &xc - xc * l)));
                }
                PoleBlock::Pair(s, w) => {
                    let (xr, xi) = (x.column(o).into_owned(), x.column(o + 1).into_owned());
                    g.set_column(o, &(&bp * (a * &xr - &xr * s + &xi * w)));
                    g.set_column(o + 1, &(&bp * (a * &xi - &xi * s - &xr * w)));
                }
            }
        }
        let Some(xi) = x.clone().try_inverse() else { continue };
        let f = g * xi;
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, f));
        }
    }
    let (_, f) = best.ok_or_else(|| Error::infeasible("pole-placement", "eigenvector matrix is singular"))?;
    let resid = pole_mismatch(&eigenvalues(&(a - b * &f)), poles);
    if resid > 1e-6 * (1.0 + poles.iter().map(|p| p.norm()).fold(0.0, f64::max)) {
        return Err(Error::infeasible("pole-placement", format!("eigenvector assignment missed by {resid:.3e}")));
    }
    Ok(f)
}

fn set_block(x: &mut RealMatrix, o: usize, blk: PoleBlock, v: &RealMatrix, n: usize) {
    match blk {
        PoleBlock::Real(_) => {
            let nv = v.norm();
            x.set_column(o, &(v.column(0) / nv));
        }
        PoleBlock::Pair(..) => {
            let nv = v.norm();
            let col = v.column(0);
            x.set_column(o, &(col.rows(0, n) / nv));
            x.set_column(o + 1, &(col.rows(n, n) / nv));
        }
    }
}

/// State feedback `f` with `eig(a − b·f) = poles` for controllable `(a, b)`.
fn place_controllable(a: &RealMatrix, b: &RealMatrix, poles: &[Complex64]) -> Result<RealMatrix> {
    if let Ok(f) = place_eigvectors(a, b, poles) {
        return Ok(f);
    }
    place_sylvester(a, b, poles)
}

/// Sylvester-based fallback; carries Jordan structure for repeated poles.
fn place_sylvester(a: &RealMatrix, b: &RealMatrix, poles: &[Complex64]) -> Result<RealMatrix> {
    let n = a.nrows();
    let m = b.ncols();
    let lam = real_spectrum_matrix(poles)?;
    let open = eigenvalues(a);
    let overlap = open.iter().any(|e| poles.iter().any(|p| (e - p).norm() < 1e-6 * (1.0 + p.norm())));
    if overlap {
        let lo = open.iter().chain(poles).map(|z| z.re).fold(0.0f64, f64::min);
        let temp: Vec<Complex64> = (0..n).map(|k| Complex64::new(lo - 1.0 - 0.731 * k as f64, 0.0)).collect();
        let f1 = place_sylvester(a, b, &temp)?;
        let f2 = place_sylvester(&(a - b * &f1), b, poles)?;
        return Ok(f1 + f2);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PLACE_SEED);
    let mut best: Option<(f64, RealMatrix)> = None;
    for _ in 0..PLACE_DRAWS {
        let g = RealMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
        let Some(x) = sylvester(a, &lam, &(b * &g)) else { continue };
        let sv = super::singular_values(&x);
        let (smax, smin) = (sv[0], *sv.last().unwrap());
        if !(smin > 0.0) {
            continue;
        }
        let Some(xi) = x.clone().try_inverse() else { continue };
        let f = &g * xi;
        // Similarity residual rather than an eigen-solve: repeated poles are
        // only resolved to about sqrt(eps) by the latter.
        let closed = a - b * &f;
        let resid = (&closed * &x - &x * &lam).norm() / (x.norm() * (closed.norm() + lam.norm()).max(1.0));
        let score = if resid < 1e-10 { smin / smax } else { -resid };
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, f));
        }
    }
    match best {
        Some((s, f)) if s > 0.0 => Ok(f),
        _ => Err(Error::infeasible("pole-placement", "no well-conditioned Sylvester solution found")),
    }
}

/// Observer gain `K` so that `a − K·c` carries the requested poles on the
/// observable part; stable unobservable modes are left in place.
///
/// If `(c, a)` has an `n_o`-dimensional observable part, the first `n_o`
/// poles are assigned. An unstable unobservable mode is an error.
pub fn place_observer_gain(a: &RealMatrix, c: &RealMatrix, poles: &[Complex64]) -> Result<RealMatrix> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::dim("a", format!("{n}x{n}"), format!("{}x{}", a.nrows(), a.ncols())));
    }
    if c.ncols() != n {
        return Err(Error::dim("c cols", n, c.ncols()));
    }
    if poles.len() != n {
        return Err(Error::dim("poles", n, poles.len()));
    }
    let p = c.nrows();
    let unobs = unobservable_subspace(a, c)?;
    let nu = unobs.dim();
    let no = n - nu;
    let q = hstack(&[unobs.complement().basis(), unobs.basis()]);
    let abar = q.transpose() * a * &q;
    if nu > 0 {
        let auu = abar.view((no, no), (nu, nu)).into_owned();
        if let Some(mode) = eigenvalues(&auu).into_iter().find(|z| z.re >= 0.0) {
            return Err(Error::infeasible(
                "observer-detectability",
                format!("unobservable mode at {:.6}{:+.6}i is not stable", mode.re, mode.im),
            ));
        }
    }
    if no == 0 {
        return Ok(RealMatrix::zeros(n, p));
    }
    let aoo = abar.view((0, 0), (no, no)).into_owned();
    let co = (c * &q).columns(0, no).into_owned();
    let f = place_controllable(&aoo.transpose(), &co.transpose(), &poles[..no])?;
    let mut kbar = RealMatrix::zeros(n, p);
    kbar.view_mut((0, 0), (no, p)).copy_from(&f.transpose());
    Ok(q * kbar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{is_hurwitz, mat};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_integrator() {
        let k = place_observer_gain(&RealMatrix::zeros(1, 1), &RealMatrix::identity(1, 1), &[c(-2., 0.)]).unwrap();
        assert!((k[(0, 0)] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn partially_observable_pair() {
        let a = mat(2, 2, &[1., 0., 0., -1.]);
        let cm = mat(1, 2, &[1., 0.]);
        let k = place_observer_gain(&a, &cm, &[c(-2., 0.), c(-1., 0.)]).unwrap();
        let ev = eigenvalues(&(&a - &k * &cm));
        assert!(pole_mismatch(&ev, &[c(-2., 0.), c(-1., 0.)]) < 1e-6);
    }

    #[test]
    fn unstable_unobservable_mode_is_reported() {
        let a = mat(2, 2, &[-1., 0., 0., 1.]);
        let cm = mat(1, 2, &[1., 0.]);
        let r = place_observer_gain(&a, &cm, &[c(-2., 0.), c(-3., 0.)]);
        match r {
            Err(Error::DesignInfeasible { detail, .. }) => assert!(detail.contains("1.000000")),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn complex_and_repeated_poles() {
        let a = mat(3, 3, &[0., 1., 0., 0., 0., 1., 1., -2., 3.]);
        let cm = mat(1, 3, &[1., 0., 0.]);
        let want = [c(-1., 2.), c(-1., -2.), c(-4., 0.)];
        let k = place_observer_gain(&a, &cm, &want).unwrap();
        assert!(pole_mismatch(&eigenvalues(&(&a - &k * &cm)), &want) < 1e-6);
        // A defective double pole is only resolved to about sqrt(eps).
        let want = [c(-2., 0.), c(-2., 0.), c(-3., 0.)];
        let k = place_observer_gain(&a, &cm, &want).unwrap();
        assert!(pole_mismatch(&eigenvalues(&(&a - &k * &cm)), &want) < 1e-5);
    }

    #[test]
    fn overlapping_open_loop_spectrum() {
        let a = mat(2, 2, &[-2., 1., 0., -3.]);
        let cm = mat(1, 2, &[1., 0.]);
        let want = [c(-2., 0.), c(-5., 0.)];
        let k = place_observer_gain(&a, &cm, &want).unwrap();
        assert!(pole_mismatch(&eigenvalues(&(&a - &k * &cm)), &want) < 1e-6);
    }

    #[test]
    fn unpaired_complex_pole_rejected() {
        let r = place_observer_gain(&RealMatrix::zeros(2, 2), &RealMatrix::identity(2, 2), &[c(-1., 1.), c(-2., 0.)]);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn unobservable_subspace_of_diagonal() {
        let a = mat(3, 3, &[-1., 0., 0., 0., -2., 0., 0., 0., -3.]);
        let cm = mat(1, 3, &[1., 0., 0.]);
        let u = unobservable_subspace(&a, &cm).unwrap();
        assert_eq!(u.dim(), 2);
        let k = place_observer_gain(&a, &cm, &[c(-5., 0.), c(-6., 0.), c(-7., 0.)]).unwrap();
        assert!(is_hurwitz(&(&a - &k * &cm), 0.0));
    }
}
