// SPDX-License-Identifier: Apache-2.0

//! Pure encoding and normalization functions.
//!
//! Categorical values become bit vectors (one-hot, single bit) or rows of an
//! ordinal contrast matrix; numeric values are squashed into a fixed range by
//! min-max, sigmoid or tanh scaling, or mapped onto a standard normal through
//! their empirical quantile.

mod contrast;
mod normal;
mod quantile;

pub use contrast::{contrast_encode, contrast_matrix, ContrastKind, ContrastMatrix};
pub use normal::inverse_normal_cdf;
pub use quantile::{gaussian_map, QuantileState, DEFAULT_RESERVOIR};

use crate::error::{Error, Result};

fn unknown(token: &str) -> Error {
    Error::UnknownToken {
        field: "vocabulary".into(),
        token: token.to_string(),
    }
}

pub(crate) fn vocab_index<S: AsRef<str>>(value: &str, vocabulary: &[S]) -> Option<usize> {
    vocabulary.iter().position(|t| t.as_ref() == value)
}

pub fn one_hot_encode<S: AsRef<str>>(value: &str, vocabulary: &[S]) -> Result<Vec<u8>> {
    let index = vocab_index(value, vocabulary).ok_or_else(|| unknown(value))?;
    let mut bits = vec![0u8; vocabulary.len()];
    bits[index] = 1;
    Ok(bits)
}

pub fn one_hot_decode<'v, S: AsRef<str>>(bits: &[u8], vocabulary: &'v [S]) -> Result<&'v str> {
    let ones = bits.iter().filter(|b| **b != 0).count();
    if ones != 1 || bits.len() != vocabulary.len() || bits.iter().any(|b| *b > 1) {
        return Err(Error::MalformedOneHot {
            ones,
            width: bits.len(),
        });
    }
    let index = bits.iter().position(|b| *b == 1).expect("one set bit");
    Ok(vocabulary[index].as_ref())
}

/// Dichotomous encoding: the first token of the pair maps to 0, the second to 1.
pub fn bit_encode<S: AsRef<str>>(value: &str, pair: &[S]) -> Result<u8> {
    match vocab_index(value, pair) {
        Some(i) if pair.len() == 2 => Ok(i as u8),
        Some(_) => Err(Error::ArityMismatch {
            what: "dichotomous vocabulary".into(),
            expected: 2,
            found: pair.len(),
        }),
        None => Err(unknown(value)),
    }
}

fn check_bounds(min: f64, max: f64) -> Result<()> {
    if min < max {
        Ok(())
    } else {
        Err(Error::BoundsOrder { min, max })
    }
}

/// `(x - min) / (max - min)` for `x` in `[min, max]`.
pub fn minmax_normalize(x: f64, min: f64, max: f64) -> Result<f64> {
    check_bounds(min, max)?;
    if !(x >= min && x <= max) {
        return Err(Error::OutOfRange { value: x, min, max });
    }
    Ok((x - min) / (max - min))
}

pub fn minmax_denormalize(y: f64, min: f64, max: f64) -> Result<f64> {
    check_bounds(min, max)?;
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::OutOfRange {
            value: y,
            min: 0.0,
            max: 1.0,
        });
    }
    Ok(min + y * (max - min))
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 {
        Ok(())
    } else {
        Err(Error::NonpositiveScale(scale))
    }
}

/// Logistic squashing into `(0, 1)`.
pub fn sigmoid_normalize(x: f64, center: f64, scale: f64) -> Result<f64> {
    check_scale(scale)?;
    let z = (x - center) / scale;
    // Evaluated on the side that cannot overflow.
    Ok(if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    })
}

pub fn tanh_normalize(x: f64, center: f64, scale: f64) -> Result<f64> {
    check_scale(scale)?;
    Ok(((x - center) / scale).tanh())
}
