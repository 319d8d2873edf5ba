// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use mlog_core::encoders::{contrast_encode, contrast_matrix, ContrastKind, ContrastMatrix};
use nalgebra::DMatrix;

const KINDS: [ContrastKind; 3] = [
    ContrastKind::BackwardDifference,
    ContrastKind::Helmert,
    ContrastKind::OrthogonalPolynomial,
];

fn to_dmatrix(m: &ContrastMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.k, m.k - 1, |i, j| m.rows[i][j])
}

fn pinv(coefficients: DMatrix<f64>) -> DMatrix<f64> {
    coefficients.pseudo_inverse(1e-14).expect("svd converges")
}

/// Rows are the comparisons the coding should expose: level `j + 1` minus
/// level `j`.
fn backward_difference_oracle(k: usize) -> DMatrix<f64> {
    pinv(DMatrix::from_fn(k - 1, k, |j, i| {
        if i == j + 1 {
            1.0
        } else if i == j {
            -1.0
        } else {
            0.0
        }
    }))
}

/// Rows compare level `j` with the mean of the levels after it.
fn helmert_oracle(k: usize) -> DMatrix<f64> {
    pinv(DMatrix::from_fn(k - 1, k, |j, i| match i.cmp(&j) {
        std::cmp::Ordering::Less => 0.0,
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => -1.0 / (k - j - 1) as f64,
    }))
}

/// Orthonormal basis of the polynomials of degree `1..k` on `x = 1..=k`,
/// orthogonal to the constant, via QR of the Vandermonde matrix. Signs are
/// fixed so that the last level is positive.
fn orthogonal_polynomial_oracle(k: usize) -> DMatrix<f64> {
    let v = DMatrix::from_fn(k, k, |i, p| ((i + 1) as f64).powi(p as i32));
    let q = v.qr().q();
    let mut out = q.columns(1, k - 1).into_owned();
    for mut col in out.column_iter_mut() {
        if col[k - 1] < 0.0 {
            col.neg_mut();
        }
    }
    out
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).abs().max()
}

#[test]
fn backward_difference_matches_pseudo_inverse() {
    for k in 2..=8 {
        let ours = to_dmatrix(&contrast_matrix(ContrastKind::BackwardDifference, k).unwrap());
        let d = max_abs_diff(&ours, &backward_difference_oracle(k));
        assert!(d < 1e-12, "k={k}: {d}");
    }
}

#[test]
fn helmert_matches_pseudo_inverse() {
    for k in 2..=8 {
        let ours = to_dmatrix(&contrast_matrix(ContrastKind::Helmert, k).unwrap());
        let d = max_abs_diff(&ours, &helmert_oracle(k));
        assert!(d < 1e-12, "k={k}: {d}");
    }
}

#[test]
fn orthogonal_polynomial_matches_qr() {
    for k in 2..=8 {
        let ours = to_dmatrix(&contrast_matrix(ContrastKind::OrthogonalPolynomial, k).unwrap());
        let d = max_abs_diff(&ours, &orthogonal_polynomial_oracle(k));
        assert!(d < 1e-12, "k={k}: {d}");
    }
}

#[test]
fn coefficients_are_recovered_by_regression() {
    // Fitting level means through the coding recovers the named comparisons.
    let means = [1.0, 4.0, 2.0, 7.0, 3.5];
    let k = means.len();
    let y = DMatrix::from_fn(k, 1, |i, _| means[i]);
    let design = |m: &ContrastMatrix| {
        let c = to_dmatrix(m);
        DMatrix::from_fn(k, k, |i, j| if j == 0 { 1.0 } else { c[(i, j - 1)] })
    };
    let beta = |m: &ContrastMatrix| design(m).lu().solve(&y).unwrap();

    let b = beta(&contrast_matrix(ContrastKind::BackwardDifference, k).unwrap());
    for j in 0..k - 1 {
        assert!((b[j + 1] - (means[j + 1] - means[j])).abs() < 1e-12);
    }
    let b = beta(&contrast_matrix(ContrastKind::Helmert, k).unwrap());
    for j in 0..k - 1 {
        let later = means[j + 1..].iter().sum::<f64>() / (k - j - 1) as f64;
        assert!((b[j + 1] - (means[j] - later)).abs() < 1e-12);
    }
}

#[test]
fn pinned_fixtures() {
    let fixtures: HashMap<String, HashMap<String, Vec<Vec<f64>>>> =
        serde_json::from_str(include_str!("fixtures/contrasts.json")).unwrap();
    for k in 2..=6 {
        for kind in KINDS {
            let name = serde_json::to_value(kind).unwrap();
            let expected = &fixtures[&k.to_string()][name.as_str().unwrap()];
            let ours = contrast_matrix(kind, k).unwrap();
            for (row, exp) in ours.rows.iter().zip(expected) {
                for (a, b) in row.iter().zip(exp) {
                    assert!((a - b).abs() < 1e-12, "{kind:?} k={k}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn worked_examples() {
    let bd = contrast_matrix(ContrastKind::BackwardDifference, 3).unwrap();
    let third = 1.0 / 3.0;
    assert_eq!(contrast_encode(0, &bd).unwrap(), [-2.0 * third, -third]);
    assert_eq!(contrast_encode(2, &bd).unwrap(), [third, 2.0 * third]);
    assert_eq!(contrast_encode(3, &bd).unwrap_err().code(), "INDEX_OUT_OF_RANGE");

    let op = contrast_matrix(ContrastKind::OrthogonalPolynomial, 3).unwrap();
    let s2 = 2f64.sqrt();
    let s6 = 6f64.sqrt();
    let expected = [[-1.0 / s2, 1.0 / s6], [0.0, -2.0 / s6], [1.0 / s2, 1.0 / s6]];
    for (row, exp) in op.rows.iter().zip(expected) {
        for (a, b) in row.iter().zip(exp) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    let h = contrast_matrix(ContrastKind::Helmert, 2).unwrap();
    assert_eq!(h.rows, [[0.5], [-0.5]]);
    assert_eq!(
        contrast_matrix(ContrastKind::Helmert, 1).unwrap_err().code(),
        "K_TOO_SMALL"
    );
}
