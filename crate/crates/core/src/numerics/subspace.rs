use serde::{Deserialize, Serialize};

use super::{max_singular_value, null_space_scaled, range_scaled, RealMatrix, DEFAULT_TOL};
use crate::error::{Error, Result};

/// A linear subspace of `R^ambient_dim`, stored as orthonormal columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBasis {
    ambient_dim: usize,
    #[serde(with = "crate::serde_util::shaped_matrix")]
    basis: RealMatrix,
}

impl SubspaceBasis {
    /// Wraps columns the caller guarantees to be orthonormal.
    pub(crate) fn from_orthonormal(basis: RealMatrix) -> Self {
        Self { ambient_dim: basis.nrows(), basis }
    }

    /// Span of the columns of `m`.
    pub fn span(m: &RealMatrix) -> Self {
        range_scaled(m, max_singular_value(m), DEFAULT_TOL)
    }

    pub fn zero(ambient_dim: usize) -> Self {
        Self { ambient_dim, basis: RealMatrix::zeros(ambient_dim, 0) }
    }

    pub fn full(ambient_dim: usize) -> Self {
        Self { ambient_dim, basis: RealMatrix::identity(ambient_dim, ambient_dim) }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn basis(&self) -> &RealMatrix {
        &self.basis
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> RealMatrix {
        &self.basis * self.basis.transpose()
    }

    /// Orthonormal basis of the orthogonal complement.
    pub fn complement(&self) -> SubspaceBasis {
        if self.is_zero() {
            return Self::full(self.ambient_dim);
        }
        let mut c = null_space_scaled(&self.basis.transpose(), 1.0, DEFAULT_TOL);
        c.ambient_dim = self.ambient_dim;
        c
    }

    /// Euclidean distance from `v` to the subspace.
    pub fn distance(&self, v: &nalgebra::DVector<f64>) -> f64 {
        (v - &self.basis * (self.basis.transpose() * v)).norm()
    }

    /// True when every basis vector of `other` lies in `self`.
    pub fn contains(&self, other: &SubspaceBasis, tol: f64) -> bool {
        other.ambient_dim == self.ambient_dim
            && other.basis.column_iter().all(|c| self.distance(&c.into_owned()) <= tol)
    }

    pub fn same_as(&self, other: &SubspaceBasis, tol: f64) -> bool {
        self.dim() == other.dim() && self.contains(other, tol) && other.contains(self, tol)
    }
}

fn check_ambient(a: &SubspaceBasis, b: &SubspaceBasis, what: &str) -> Result<()> {
    if a.ambient_dim != b.ambient_dim {
        return Err(Error::dim(what, a.ambient_dim, b.ambient_dim));
    }
    Ok(())
}

/// `span(a) ∩ span(b)`: the vectors orthogonal to both complements.
pub fn subspace_intersect(a: &SubspaceBasis, b: &SubspaceBasis) -> Result<SubspaceBasis> {
    check_ambient(a, b, "subspace_intersect")?;
    let n = a.ambient_dim;
    if a.is_zero() || b.is_zero() {
        return Ok(SubspaceBasis::zero(n));
    }
    let ca = a.complement();
    let cb = b.complement();
    let stacked = super::vstack(&[&ca.basis.transpose(), &cb.basis.transpose()]);
    let mut out = null_space_scaled(&stacked, 1.0, DEFAULT_TOL);
    out.ambient_dim = n;
    Ok(out)
}

pub fn subspace_sum(a: &SubspaceBasis, b: &SubspaceBasis) -> Result<SubspaceBasis> {
    check_ambient(a, b, "subspace_sum")?;
    let n = a.ambient_dim;
    let mut out = range_scaled(&super::hstack(&[&a.basis, &b.basis]), 1.0, DEFAULT_TOL);
    out.ambient_dim = n;
    Ok(out)
}

/// `{x : f·x ∈ span(s)}`, the null space of the complement projection of `f`.
pub fn preimage(f: &RealMatrix, s: &SubspaceBasis) -> Result<SubspaceBasis> {
    if f.nrows() != s.ambient_dim {
        return Err(Error::dim("preimage: rows(f)", s.ambient_dim, f.nrows()));
    }
    let n = f.ncols();
    let comp = s.complement();
    if comp.is_zero() {
        return Ok(SubspaceBasis::full(n));
    }
    let m = comp.basis.transpose() * f;
    let mut out = null_space_scaled(&m, max_singular_value(f), DEFAULT_TOL);
    out.ambient_dim = n;
    Ok(out)
}

/// `f · span(s)`.
pub fn image(f: &RealMatrix, s: &SubspaceBasis) -> Result<SubspaceBasis> {
    if f.ncols() != s.ambient_dim {
        return Err(Error::dim("image: cols(f)", s.ambient_dim, f.ncols()));
    }
    let mut out = range_scaled(&(f * &s.basis), max_singular_value(f), DEFAULT_TOL);
    out.ambient_dim = f.nrows();
    Ok(out)
}

/// `Ker(m)` with the default tolerance.
pub fn kernel(m: &RealMatrix) -> SubspaceBasis {
    let mut out = null_space_scaled(m, max_singular_value(m), DEFAULT_TOL);
    out.ambient_dim = m.ncols();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mat;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn e(n: usize, i: usize) -> RealMatrix {
        let mut m = RealMatrix::zeros(n, 1);
        m[(i, 0)] = 1.0;
        m
    }

    #[test]
    fn intersect_coordinate_planes() {
        let a = SubspaceBasis::span(&super::super::hstack(&[&e(3, 0), &e(3, 1)]));
        let b = SubspaceBasis::span(&super::super::hstack(&[&e(3, 1), &e(3, 2)]));
        let i = subspace_intersect(&a, &b).unwrap();
        assert!(i.same_as(&SubspaceBasis::span(&e(3, 1)), 1e-10));
        assert!(subspace_intersect(&a, &a).unwrap().same_as(&a, 1e-10));
    }

    #[test]
    fn intersect_rejects_mismatch() {
        let r = subspace_intersect(&SubspaceBasis::full(2), &SubspaceBasis::full(3));
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn kernel_of_detector_gain_misses_attack_image() {
        let l = mat(
            7,
            4,
            &[
                0., 0., 4., -1., 0., 0., 3., -2., 0., 0., 2., -3., 0., 0., 5., -1., 0., 0., 3., -2., 0., 0., 2., -3.,
                0., 0., 5., -1.,
            ],
        );
        let tpba = mat(4, 2, &[-6., -6., -6., -14., 12., -2., 0., -2.]);
        let k = kernel(&l);
        assert_eq!(k.dim(), 2);
        let i = subspace_intersect(&k, &SubspaceBasis::span(&tpba)).unwrap();
        assert!(i.is_zero());
    }

    #[test]
    fn preimage_examples() {
        let s = SubspaceBasis::span(&mat(3, 2, &[1., 0., 1., 1., 0., 2.]));
        assert!(preimage(&RealMatrix::identity(3, 3), &s).unwrap().same_as(&s, 1e-10));
        assert_eq!(preimage(&RealMatrix::zeros(3, 4), &s).unwrap().dim(), 4);
        let d = preimage(&mat(2, 2, &[1., 0., 0., 2.]), &SubspaceBasis::span(&e(2, 0))).unwrap();
        assert!(d.same_as(&SubspaceBasis::span(&e(2, 0)), 1e-10));
    }

    #[test]
    fn image_and_sum() {
        let f = mat(2, 2, &[0., 1., 0., 0.]);
        let im = image(&f, &SubspaceBasis::full(2)).unwrap();
        assert!(im.same_as(&SubspaceBasis::span(&e(2, 0)), 1e-12));
        let s = subspace_sum(&im, &SubspaceBasis::span(&e(2, 1))).unwrap();
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn complement_dims() {
        let s = SubspaceBasis::span(&e(4, 2));
        assert_eq!(s.complement().dim(), 3);
        assert_eq!(SubspaceBasis::zero(4).complement().dim(), 4);
        assert_eq!(SubspaceBasis::full(4).complement().dim(), 0);
    }

    fn int_matrix(r: usize, c: usize) -> impl Strategy<Value = RealMatrix> {
        prop::collection::vec(-3i32..=3, r * c)
            .prop_map(move |v| RealMatrix::from_iterator(r, c, v.into_iter().map(f64::from)))
    }

    proptest! {
        #[test]
        fn preimage_maps_into_target(f in int_matrix(4, 4), s in int_matrix(4, 2), w in prop::collection::vec(-1.0f64..1.0, 4)) {
            let span = SubspaceBasis::span(&s);
            let p = preimage(&f, &span).unwrap();
            let b = p.basis();
            prop_assert!((b.transpose() * b - RealMatrix::identity(p.dim(), p.dim())).abs().max() <= 1e-10);
            if p.dim() > 0 {
                let coeffs = DVector::from_iterator(p.dim(), w.into_iter().take(p.dim()));
                let x = b * coeffs;
                let fx = &f * &x;
                prop_assert!(span.distance(&fx) <= 1e-8 * fx.norm().max(1e-300) + 1e-12);
            }
        }

        #[test]
        fn intersection_lies_in_both(a in int_matrix(5, 3), b in int_matrix(5, 3)) {
            let sa = SubspaceBasis::span(&a);
            let sb = SubspaceBasis::span(&b);
            let i = subspace_intersect(&sa, &sb).unwrap();
            prop_assert!(sa.contains(&i, 1e-8) && sb.contains(&i, 1e-8));
            prop_assert_eq!(i.dim() + subspace_sum(&sa, &sb).unwrap().dim(), sa.dim() + sb.dim());
        }
    }
}
