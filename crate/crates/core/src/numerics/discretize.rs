use serde::{Deserialize, Serialize};

use super::RealMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Zero-order hold through the matrix exponential.
    #[default]
    Exact,
    /// Classical RK4 with inputs held over the step.
    Rk4,
}

/// Step maps `(Φ, Γ)` with `x⁺ = Φ x + Γ u` for `ẋ = a x + g u`, `u` held.
pub fn discretize(a: &RealMatrix, g: &RealMatrix, dt: f64, integrator: Integrator) -> Result<(RealMatrix, RealMatrix)> {
    let n = a.nrows();
    if !a.is_square() || g.nrows() != n {
        return Err(Error::dim("discretize", n, g.nrows()));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("step must be positive, got {dt}")));
    }
    let m = g.ncols();
    let mut aug = RealMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(g * dt));
    let e = match integrator {
        Integrator::Exact => aug.exp(),
        Integrator::Rk4 => {
            let id = RealMatrix::identity(n + m, n + m);
            let m2 = &aug * &aug;
            let m3 = &m2 * &aug;
            let m4 = &m3 * &aug;
            id + &aug + m2 / 2.0 + m3 / 6.0 + m4 / 24.0
        }
    };
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mat;

    #[test]
    fn scalar_decay_matches_closed_form() {
        let a = mat(1, 1, &[-2.0]);
        let g = mat(1, 1, &[1.0]);
        let (phi, gam) = discretize(&a, &g, 0.1, Integrator::Exact).unwrap();
        let e = (-0.2f64).exp();
        assert!((phi[(0, 0)] - e).abs() < 1e-14);
        assert!((gam[(0, 0)] - (1.0 - e) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn rk4_agrees_to_fifth_order() {
        let a = mat(2, 2, &[0., 1., -4., -0.4]);
        let g = mat(2, 1, &[0., 1.]);
        let (p1, g1) = discretize(&a, &g, 1e-3, Integrator::Exact).unwrap();
        let (p2, g2) = discretize(&a, &g, 1e-3, Integrator::Rk4).unwrap();
        assert!((p1 - p2).abs().max() < 1e-14);
        assert!((g1 - g2).abs().max() < 1e-15);
    }

    #[test]
    fn double_integrator_is_exact() {
        let a = mat(2, 2, &[0., 1., 0., 0.]);
        let g = mat(2, 1, &[0., 1.]);
        let (phi, gam) = discretize(&a, &g, 0.5, Integrator::Exact).unwrap();
        assert!((phi - mat(2, 2, &[1., 0.5, 0., 1.])).abs().max() < 1e-14);
        assert!((gam - mat(2, 1, &[0.125, 0.5])).abs().max() < 1e-14);
    }

    #[test]
    fn rejects_bad_step() {
        let a = RealMatrix::zeros(1, 1);
        assert!(discretize(&a, &a, 0.0, Integrator::Exact).is_err());
        assert!(discretize(&a, &RealMatrix::zeros(2, 1), 0.1, Integrator::Exact).is_err());
    }
}
