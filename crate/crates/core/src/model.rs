//! Plant, auxiliary sensor dynamics and the augmented system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{block_diag, hstack, is_hurwitz, max_abs, rank, vstack, RealMatrix};

/// Physical plant with attack and fault signatures.
///
/// Noise covariances are sized by the noise inputs they drive:
/// `q_cov` is `cols(n_s)` square and the auxiliary `r_cov` is `cols(n_a)` square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantModel {
    #[serde(with = "crate::serde_util::matrix")]
    pub a_s: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub b_s: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub c_s: RealMatrix,
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub n_s: RealMatrix,
    /// Actuator-fault signature.
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub l1: RealMatrix,
    /// Sensor-fault signature.
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub l2: RealMatrix,
    /// Attacked input channels.
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub s_a: RealMatrix,
    /// Sensor-attack signature.
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub d_a: RealMatrix,
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub q_cov: RealMatrix,
}

impl PlantModel {
    pub fn n(&self) -> usize {
        self.a_s.nrows()
    }

    /// `B_a^s = B^s S_a`.
    pub fn b_a_s(&self) -> RealMatrix {
        &self.b_s * &self.s_a
    }

    pub fn check(&self) -> Result<()> {
        let n = self.a_s.nrows();
        let m = self.b_s.ncols();
        let p = self.c_s.nrows();
        expect_shape("a_s", &self.a_s, n, n)?;
        expect_shape("b_s", &self.b_s, n, m)?;
        expect_shape("c_s", &self.c_s, p, n)?;
        expect_rows("n_s", &self.n_s, n)?;
        expect_rows("l1", &self.l1, n)?;
        expect_rows("l2", &self.l2, p)?;
        expect_rows("s_a", &self.s_a, m)?;
        expect_rows("d_a", &self.d_a, p)?;
        let q = self.n_s.ncols();
        expect_shape("q_cov", &self.q_cov, q, q)?;
        Ok(())
    }
}

/// Auxiliary dynamics that turn sensor faults and measurement noise into
/// pseudo actuator faults and pseudo process noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxiliarySensorModel {
    #[serde(with = "crate::serde_util::matrix")]
    pub a_a: RealMatrix,
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub l2_a: RealMatrix,
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub n_a: RealMatrix,
    #[serde(with = "crate::serde_util::matrix")]
    pub c_a: RealMatrix,
    #[serde(with = "crate::serde_util::shaped_matrix")]
    pub r_cov: RealMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Physical state dimension.
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub m_f: usize,
    pub p_f: usize,
    pub m_a: usize,
    pub p_a: usize,
    /// Total noise inputs, `q_s + q_a`.
    pub q: usize,
    pub q_s: usize,
}

impl Dims {
    /// Augmented state dimension `n + p_f + p`.
    pub fn nx(&self) -> usize {
        self.n + self.p_f + self.p
    }
}

/// The extended system with block structure
/// `A = diag(A^s, A^a)`, `B = [B^s; 0]`, `B_a = [B^s S_a; 0]`,
/// `F_1 = [L_1; 0]`, `F_2 = [0; L_2^a]`, `N = diag(N^s, N^a)`, `C = [C^s C^a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a: RealMatrix,
    pub b: RealMatrix,
    pub b_a: RealMatrix,
    pub f1: RealMatrix,
    pub f2: RealMatrix,
    pub n_mat: RealMatrix,
    pub c: RealMatrix,
    pub d_a: RealMatrix,
    /// `diag(Q, R^a)`, the covariance of the stacked noise.
    pub w_cov: RealMatrix,
    pub dims: Dims,
    pub plant: PlantModel,
    pub aux: AuxiliarySensorModel,
}

fn shape(m: &RealMatrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

fn expect_shape(field: &str, m: &RealMatrix, r: usize, c: usize) -> Result<()> {
    if m.shape() != (r, c) {
        return Err(Error::dim(field, format!("{r}x{c}"), shape(m)));
    }
    Ok(())
}

fn expect_rows(field: &str, m: &RealMatrix, r: usize) -> Result<()> {
    if m.nrows() != r {
        return Err(Error::dim(field, format!("{r} rows"), shape(m)));
    }
    Ok(())
}

/// Assemble the augmented system.
pub fn build_augmented(plant: &PlantModel, aux: &AuxiliarySensorModel) -> Result<AugmentedModel> {
    plant.check()?;
    let n = plant.n();
    let m = plant.b_s.ncols();
    let p = plant.c_s.nrows();
    let p_f = aux.l2_a.ncols();
    let na = p_f + p;
    expect_shape("a_a", &aux.a_a, na, na)?;
    expect_rows("l2_a", &aux.l2_a, na)?;
    expect_rows("n_a", &aux.n_a, na)?;
    expect_shape("c_a", &aux.c_a, p, na)?;
    let q_a = aux.n_a.ncols();
    expect_shape("r_cov", &aux.r_cov, q_a, q_a)?;
    if plant.l2.ncols() != p_f {
        return Err(Error::dim("l2", format!("{p}x{p_f}"), shape(&plant.l2)));
    }
    let m_f = plant.l1.ncols();
    let m_a = plant.s_a.ncols();
    let q_s = plant.n_s.ncols();
    let za = RealMatrix::zeros(na, m);
    let b_a_s = plant.b_a_s();
    let aug = AugmentedModel {
        a: block_diag(&[&plant.a_s, &aux.a_a]),
        b: vstack(&[&plant.b_s, &za]),
        b_a: vstack(&[&b_a_s, &RealMatrix::zeros(na, m_a)]),
        f1: vstack(&[&plant.l1, &RealMatrix::zeros(na, m_f)]),
        f2: vstack(&[&RealMatrix::zeros(n, p_f), &aux.l2_a]),
        n_mat: block_diag(&[&plant.n_s, &aux.n_a]),
        c: hstack(&[&plant.c_s, &aux.c_a]),
        d_a: plant.d_a.clone(),
        w_cov: block_diag(&[&plant.q_cov, &aux.r_cov]),
        dims: Dims { n, m, p, m_f, p_f, m_a, p_a: plant.d_a.ncols(), q: q_s + q_a, q_s },
        plant: plant.clone(),
        aux: aux.clone(),
    };
    Ok(aug)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn rank_check(name: &str, cf: &RealMatrix, f: &RealMatrix) -> Check {
    let (rc, rf) = (rank(cf), rank(f));
    Check {
        name: name.into(),
        passed: rc == rf,
        residual: rf.abs_diff(rc) as f64,
        detail: format!("rank {rc} vs {rf}"),
    }
}

fn is_psd(m: &RealMatrix) -> (bool, f64) {
    if m.is_empty() {
        return (true, 0.0);
    }
    let asym = max_abs(&(m - m.transpose()));
    let sym = (m + m.transpose()) / 2.0;
    let min_eig = nalgebra::SymmetricEigen::new(sym).eigenvalues.min();
    let scale = max_abs(m).max(1.0);
    (asym <= 1e-12 * scale && min_eig >= -1e-12 * scale, asym.max((-min_eig).max(0.0)))
}

/// Solvability and isolability preconditions. Failures are reported, never thrown.
pub fn validate(aug: &AugmentedModel) -> ValidationReport {
    let mut checks = vec![
        rank_check("rank(CF1)=rank(F1)", &(&aug.c * &aug.f1), &aug.f1),
        rank_check("rank(CF2)=rank(F2)", &(&aug.c * &aug.f2), &aug.f2),
    ];
    let cross = aug.f1.transpose() * &aug.f2;
    let r = max_abs(&cross);
    checks.push(Check {
        name: "F1'F2=0".into(),
        passed: r <= 1e-12 * (1.0 + max_abs(&aug.f1) * max_abs(&aug.f2)),
        residual: r,
        detail: "isolability of actuator and pseudo actuator faults".into(),
    });
    let aa_ok = is_hurwitz(&aug.aux.a_a, 0.0);
    checks.push(Check {
        name: "A^a Hurwitz".into(),
        passed: aa_ok,
        residual: crate::numerics::spectral_abscissa(&aug.aux.a_a),
        detail: "auxiliary sensor dynamics must be stable".into(),
    });
    let rs = rank(&aug.plant.s_a);
    let rb = rank(&aug.plant.b_a_s());
    checks.push(Check {
        name: "rank(B_a^s)=rank(S_a)".into(),
        passed: rs == rb,
        residual: rs.abs_diff(rb) as f64,
        detail: format!("rank {rb} vs {rs}"),
    });
    for (name, m) in [("Q PSD", &aug.plant.q_cov), ("R^a PSD", &aug.aux.r_cov)] {
        let (ok, res) = is_psd(m);
        checks.push(Check { name: name.into(), passed: ok, residual: res, detail: "symmetric positive semidefinite".into() });
    }
    if aa_ok && aug.dims.p_f > 0 {
        let gain = aug.aux.a_a.clone().try_inverse().map(|inv| -(&aug.aux.c_a * inv * &aug.aux.l2_a));
        let (ok, res) = match gain {
            Some(g) => {
                let d = max_abs(&(&g - &aug.plant.l2));
                (d <= 1e-9 * (1.0 + max_abs(&aug.plant.l2)), d)
            }
            None => (false, f64::INFINITY),
        };
        checks.push(Check {
            name: "aux DC gain = L2".into(),
            passed: ok,
            residual: res,
            detail: "steady-state C^a x^a reproduces the sensor-fault signature".into(),
        });
    }
    ValidationReport { checks }
}
