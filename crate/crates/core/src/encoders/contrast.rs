// SPDX-License-Identifier: Apache-2.0

//! Ordinal contrast codings.
//!
//! A contrast matrix has one row per level and `k - 1` columns, every column
//! summing to zero. The three supported kinds:
//!
//! * backward difference: the coding whose regression coefficients are the
//!   differences between adjacent levels. Column `j` holds `-(k-j)/k` for
//!   levels `1..=j` and `j/k` above.
//! * Helmert: level `j` against the mean of all later levels. Column `j`
//!   holds `0` below `j`, `(k-j)/(k-j+1)` at `j` and `-1/(k-j+1)` above.
//! * orthogonal polynomial: Gram-Schmidt over `1, x, .., x^(k-1)` at
//!   `x = 1..=k`, normalized to unit length, constant column dropped.
//!
//! Backward difference and Helmert are both the pseudo-inverse of their
//! contrast-coefficient rows, so a fitted coefficient reads directly as the
//! named comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::Encoding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    Helmert,
    BackwardDifference,
    OrthogonalPolynomial,
}

impl TryFrom<Encoding> for ContrastKind {
    type Error = Error;

    fn try_from(encoding: Encoding) -> Result<Self> {
        match encoding {
            Encoding::Helmert => Ok(ContrastKind::Helmert),
            Encoding::BackwardDifference => Ok(ContrastKind::BackwardDifference),
            Encoding::OrthogonalPolynomial => Ok(ContrastKind::OrthogonalPolynomial),
            other => Err(Error::InvalidArgument(format!("{other} is not a contrast coding"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMatrix {
    pub kind: ContrastKind,
    pub k: usize,
    /// `k` rows of `k - 1` entries; row `i` codes level `i`.
    pub rows: Vec<Vec<f64>>,
}

impl ContrastMatrix {
    pub fn row(&self, level: usize) -> Option<&[f64]> {
        self.rows.get(level).map(Vec::as_slice)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

pub fn contrast_matrix(kind: ContrastKind, k: usize) -> Result<ContrastMatrix> {
    if k < 2 {
        return Err(Error::KTooSmall(k));
    }
    let rows = match kind {
        ContrastKind::BackwardDifference => backward_difference(k),
        ContrastKind::Helmert => helmert(k),
        ContrastKind::OrthogonalPolynomial => orthogonal_polynomial(k),
    };
    Ok(ContrastMatrix { kind, k, rows })
}

pub fn contrast_encode(level_index: usize, matrix: &ContrastMatrix) -> Result<Vec<f64>> {
    matrix
        .row(level_index)
        .map(<[f64]>::to_vec)
        .ok_or(Error::IndexOutOfRange {
            index: level_index,
            k: matrix.k,
        })
}

fn backward_difference(k: usize) -> Vec<Vec<f64>> {
    let kf = k as f64;
    (1..=k)
        .map(|i| {
            (1..k)
                .map(|j| if i <= j { -((k - j) as f64) / kf } else { j as f64 / kf })
                .collect()
        })
        .collect()
}

fn helmert(k: usize) -> Vec<Vec<f64>> {
    (1..=k)
        .map(|i| {
            (1..k)
                .map(|j| {
                    let denom = (k - j + 1) as f64;
                    match i.cmp(&j) {
                        std::cmp::Ordering::Less => 0.0,
                        std::cmp::Ordering::Equal => (k - j) as f64 / denom,
                        std::cmp::Ordering::Greater => -1.0 / denom,
                    }
                })
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonal_polynomial(k: usize) -> Vec<Vec<f64>> {
    // Powers of the centered level index span the same nested subspaces as
    // powers of the raw index and condition better.
    let mid = (k as f64 + 1.0) / 2.0;
    let xs: Vec<f64> = (1..=k).map(|i| i as f64 - mid).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    for degree in 0..k {
        let mut v: Vec<f64> = xs.iter().map(|x| x.powi(degree as i32)).collect();
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= proj * qi);
            }
        }
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|vi| *vi /= norm);
        basis.push(v);
    }
    (0..k).map(|i| basis[1..].iter().map(|col| col[i]).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_rows(m: &ContrastMatrix, expected: &[&[f64]]) {
        for (row, want) in m.rows.iter().zip(expected) {
            for (a, b) in row.iter().zip(*want) {
                assert!((a - b).abs() < 1e-12, "{:?} vs {:?}", m.rows, expected);
            }
        }
    }

    #[test]
    fn backward_difference_three_levels() {
        let m = contrast_matrix(ContrastKind::BackwardDifference, 3).unwrap();
        assert_rows(
            &m,
            &[
                &[-2.0 / 3.0, -1.0 / 3.0],
                &[1.0 / 3.0, -1.0 / 3.0],
                &[1.0 / 3.0, 2.0 / 3.0],
            ],
        );
        assert_eq!(contrast_encode(0, &m).unwrap(), m.rows[0]);
        assert_eq!(contrast_encode(2, &m).unwrap(), m.rows[2]);
        assert_eq!(contrast_encode(3, &m).unwrap_err().code(), "INDEX_OUT_OF_RANGE");
    }

    #[test]
    fn helmert_two_levels() {
        let m = contrast_matrix(ContrastKind::Helmert, 2).unwrap();
        // pinned convention
        assert_rows(&m, &[&[0.5], &[-0.5]]);
    }

    #[test]
    fn orthogonal_polynomial_three_levels() {
        let m = contrast_matrix(ContrastKind::OrthogonalPolynomial, 3).unwrap();
        let s2 = 2f64.sqrt();
        let s6 = 6f64.sqrt();
        assert_rows(&m, &[&[-1.0 / s2, 1.0 / s6], &[0.0, -2.0 / s6], &[1.0 / s2, 1.0 / s6]]);
    }

    #[test]
    fn too_few_levels() {
        for kind in [
            ContrastKind::Helmert,
            ContrastKind::BackwardDifference,
            ContrastKind::OrthogonalPolynomial,
        ] {
            assert_eq!(contrast_matrix(kind, 1).unwrap_err().code(), "K_TOO_SMALL");
        }
    }
}
