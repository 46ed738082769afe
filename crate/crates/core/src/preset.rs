//! The built-in four-state benchmark (`paper-siv`): plant, auxiliary sensor
//! dynamics, communication-attack signature and the fixed actuator-attack
//! filter and detector matrices.

use crate::design::FixedDesign;
use crate::model::{build_augmented, AugmentedModel, AuxiliarySensorModel, PlantModel};
use crate::numerics::{mat, RealMatrix};

pub const NAME: &str = "paper-siv";

/// Thresholds reported for the benchmark with its original noise realization
/// (attack residuals, fault residuals). Kept for comparison only.
pub const REFERENCE_THRESHOLDS: (f64, f64) = (3.3, 0.6);

pub fn plant() -> PlantModel {
    PlantModel {
        a_s: mat(4, 4, &[-1., 0., 1., 0., 0., -3., 0., 1., 0., 0., -2., 0., 0., 0., 0., -2.]),
        b_s: mat(4, 2, &[-2., -1., 0., -2., 0., -3., -4., 0.]),
        c_s: mat(2, 4, &[0.2, 0., 0., 0., 0., 0.2, 0., 0.]),
        n_s: mat(4, 1, &[1., 1., 1., 1.]),
        l1: mat(4, 1, &[-2., 0., 0., -4.]),
        l2: mat(2, 1, &[1., 1.]),
        s_a: RealMatrix::identity(2, 2),
        d_a: mat(2, 2, &[0.2, 0., 0., 0.2]),
        q_cov: mat(1, 1, &[0.01]),
    }
}

pub fn aux() -> AuxiliarySensorModel {
    AuxiliarySensorModel {
        a_a: mat(3, 3, &[-1., 0., 0., 0., -2., 0., 0., 0., -3.]),
        l2_a: mat(3, 1, &[1., 0., 0.]),
        n_a: mat(3, 1, &[0., 1., 1.]),
        c_a: mat(2, 3, &[1., 1., 1., 1., 1., 1.]),
        r_cov: mat(1, 1, &[0.02]),
    }
}

pub fn d_ac() -> RealMatrix {
    mat(4, 4, &[1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.])
}

pub fn augmented() -> AugmentedModel {
    build_augmented(&plant(), &aux()).expect("built-in fixture is consistent")
}

/// Fixed actuator-attack filter and detector matrices.
pub fn actuator_design() -> FixedDesign {
    FixedDesign {
        f_p: RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3., -2., -4., -5.])),
        t_p: mat(4, 4, &[1., 1., 1., 1., 1., 2., 3., 1., 2., 0., 0., -4., 0., 1., 0., 0.]),
        l_p: mat(4, 4, &[0., 0., 4., -1., 0., 0., 3., -2., 0., 0., 2., -3., 0., 0., 5., -1.]),
        k_p: RealMatrix::zeros(4, 2),
        h: mat(7, 2, &[5., -5., 0., 0., 0., 0., 10., -10., 0., 1., 0., 0., 0., 0.]),
        k1: mat(7, 2, &[6., -2., -3., 1., 6., 2., 3., 1., 3., 1., 6., 2., 3., 1.]),
        l: mat(
            7,
            4,
            &[
                0., 0., 4., -1., 0., 0., 3., -2., 0., 0., 2., -3., 0., 0., 5., -1., 0., 0., 3., -2., 0., 0., 2., -3., 0.,
                0., 5., -1.,
            ],
        ),
    }
}
