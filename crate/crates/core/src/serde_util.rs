//! Serde adapters: matrices as nested row arrays, complex numbers as `[re, im]`.

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::numerics::RealMatrix;

fn to_rows(m: &RealMatrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows<E: serde::de::Error>(rows: Vec<Vec<f64>>) -> Result<RealMatrix, E> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some((i, bad)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(E::custom(format!("ragged matrix: row {i} has {} entries, expected {c}", bad.len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(E::custom("matrix entries must be finite"));
    }
    Ok(RealMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &RealMatrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RealMatrix, D::Error> {
        from_rows(Vec::<Vec<f64>>::deserialize(d)?)
    }
}

/// A matrix that may be written with an explicit shape when it has no rows
/// or no columns: `{"rows": 4, "cols": 0}`.
pub mod shaped_matrix {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Rows(Vec<Vec<f64>>),
        Empty { rows: usize, cols: usize },
    }

    pub fn serialize<S: Serializer>(m: &RealMatrix, s: S) -> Result<S::Ok, S::Error> {
        if m.is_empty() {
            Repr::Empty { rows: m.nrows(), cols: m.ncols() }.serialize(s)
        } else {
            Repr::Rows(to_rows(m)).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RealMatrix, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Rows(rows) => from_rows(rows),
            Repr::Empty { rows, cols } if rows == 0 || cols == 0 => Ok(RealMatrix::zeros(rows, cols)),
            Repr::Empty { .. } => Err(D::Error::custom("explicit shape is only allowed for empty matrices")),
        }
    }
}

pub mod opt_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<RealMatrix>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<RealMatrix>, D::Error> {
        Option::<Vec<Vec<f64>>>::deserialize(d)?.map(from_rows).transpose()
    }
}

pub mod complex_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        Ok(Vec::<[f64; 2]>::deserialize(d)?.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Holder {
        #[serde(with = "matrix")]
        m: RealMatrix,
        #[serde(with = "shaped_matrix")]
        e: RealMatrix,
        #[serde(with = "complex_vec")]
        z: Vec<Complex64>,
    }

    #[test]
    fn round_trip() {
        let h = Holder {
            m: RealMatrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]),
            e: RealMatrix::zeros(4, 0),
            z: vec![Complex64::new(-1.0, 2.0)],
        };
        let s = serde_json::to_string(&h).unwrap();
        assert!(s.contains("[[1.0,2.0,3.0],[4.0,5.0,6.0]]"));
        assert_eq!(serde_json::from_str::<Holder>(&s).unwrap(), h);
    }

    #[test]
    fn ragged_rows_rejected() {
        let r: Result<Holder, _> = serde_json::from_str(r#"{"m":[[1,2],[3]],"e":[[1]],"z":[]}"#);
        assert!(r.unwrap_err().to_string().contains("ragged"));
    }
}
