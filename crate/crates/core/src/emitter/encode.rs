// SPDX-License-Identifier: Apache-2.0

use crate::encoders::{
    contrast_matrix, gaussian_map, minmax_normalize, one_hot_encode, sigmoid_normalize, tanh_normalize, vocab_index,
    ContrastKind, ContrastMatrix, QuantileState,
};
use crate::error::{Error, Result};
use crate::record::RawValue;
use crate::schema::{Bounds, CategoryIndex, CenterScale, Encoding, LogSchema, ParameterSpec};

/// A parameter specification compiled for repeated encoding.
#[derive(Debug, Clone)]
pub(crate) enum ParamEncoder {
    OneHot(Vec<String>),
    Bit(Vec<String>),
    Contrast(Vec<String>, ContrastMatrix),
    Minmax(Bounds),
    Sigmoid(CenterScale),
    Tanh(CenterScale),
    Quantile,
}

impl ParamEncoder {
    pub fn from_spec(spec: &ParameterSpec) -> Result<Self> {
        let vocab = || spec.vocab().to_vec();
        let missing = |what: &str| Error::InvalidArgument(format!("parameter `{}` lacks {what}", spec.name));
        Ok(match spec.encoding {
            Encoding::OneHot => ParamEncoder::OneHot(vocab()),
            Encoding::Bit => ParamEncoder::Bit(vocab()),
            Encoding::Helmert | Encoding::BackwardDifference | Encoding::OrthogonalPolynomial => {
                let kind = ContrastKind::try_from(spec.encoding)?;
                ParamEncoder::Contrast(vocab(), contrast_matrix(kind, spec.vocab().len())?)
            }
            Encoding::Minmax => ParamEncoder::Minmax(spec.bounds.ok_or_else(|| missing("bounds"))?),
            Encoding::Sigmoid => ParamEncoder::Sigmoid(spec.center_scale.ok_or_else(|| missing("center_scale"))?),
            Encoding::Tanh => ParamEncoder::Tanh(spec.center_scale.ok_or_else(|| missing("center_scale"))?),
            Encoding::QuantileGaussian => ParamEncoder::Quantile,
        })
    }

    pub fn is_categorical(&self) -> bool {
        matches!(
            self,
            ParamEncoder::OneHot(_) | ParamEncoder::Bit(_) | ParamEncoder::Contrast(..)
        )
    }

    /// Checks and canonicalizes an input value: categorical parameters take
    /// vocabulary tokens (numbers are matched by their decimal text), numeric
    /// parameters take finite numbers (tokens are parsed).
    pub fn raw_value(&self, name: &str, value: &RawValue) -> Result<RawValue> {
        if self.is_categorical() {
            let token = match value {
                RawValue::Token(t) => t.clone(),
                RawValue::Number(x) => x.to_string(),
                RawValue::Missing => return Err(missing_raw(name)),
            };
            let vocab = match self {
                ParamEncoder::OneHot(v) | ParamEncoder::Bit(v) | ParamEncoder::Contrast(v, _) => v,
                _ => unreachable!(),
            };
            if vocab_index(&token, vocab).is_none() {
                return Err(Error::UnknownToken {
                    field: name.to_string(),
                    token,
                });
            }
            Ok(RawValue::Token(token))
        } else {
            let x = match value {
                RawValue::Number(x) => *x,
                RawValue::Token(t) => t.trim().parse::<f64>().map_err(|_| Error::Parse {
                    context: format!("parameter `{name}`"),
                    message: format!("`{t}` is not a number"),
                })?,
                RawValue::Missing => return Err(missing_raw(name)),
            };
            if !x.is_finite() {
                return Err(Error::NonfiniteValue(x));
            }
            Ok(RawValue::Number(x))
        }
    }

    /// Appends the encoding of a canonical raw value to `out`.
    pub fn encode(
        &self,
        name: &str,
        raw: &RawValue,
        quantiles: Option<&QuantileState>,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        match (self, raw) {
            (ParamEncoder::OneHot(vocab), RawValue::Token(t)) => {
                let bits = one_hot_encode(t, vocab).map_err(|_| unknown(name, t))?;
                out.extend(bits.into_iter().map(f64::from));
            }
            (ParamEncoder::Bit(vocab), RawValue::Token(t)) => {
                let i = vocab_index(t, vocab).ok_or_else(|| unknown(name, t))?;
                out.push(i as f64);
            }
            (ParamEncoder::Contrast(vocab, matrix), RawValue::Token(t)) => {
                let i = vocab_index(t, vocab).ok_or_else(|| unknown(name, t))?;
                out.extend_from_slice(&matrix.rows[i]);
            }
            (ParamEncoder::Minmax(b), RawValue::Number(x)) => out.push(minmax_normalize(*x, b.min, b.max)?),
            (ParamEncoder::Sigmoid(cs), RawValue::Number(x)) => out.push(sigmoid_normalize(*x, cs.center, cs.scale)?),
            (ParamEncoder::Tanh(cs), RawValue::Number(x)) => out.push(tanh_normalize(*x, cs.center, cs.scale)?),
            (ParamEncoder::Quantile, RawValue::Number(x)) => {
                let state = quantiles.ok_or(Error::InsufficientState(0))?;
                out.push(gaussian_map(*x, state)?);
            }
            (_, RawValue::Missing) => return Err(missing_raw(name)),
            (_, other) => {
                return Err(Error::InvalidArgument(format!(
                    "value {other:?} does not fit the encoding of `{name}`"
                )))
            }
        }
        Ok(())
    }
}

fn unknown(name: &str, token: &str) -> Error {
    Error::UnknownToken {
        field: name.to_string(),
        token: token.to_string(),
    }
}

fn missing_raw(name: &str) -> Error {
    Error::RawValueMissing {
        param: name.to_string(),
        line: 0,
    }
}

/// One-hot encodes the identifying tokens (one per schema field, in order).
pub(crate) fn encode_identifying<S: AsRef<str>>(
    schema: &LogSchema,
    identifying: &[S],
    out: &mut Vec<f64>,
    raw: &mut Vec<RawValue>,
) -> Result<()> {
    if identifying.len() != schema.identifying_fields.len() {
        return Err(Error::ArityMismatch {
            what: "identifying fields".into(),
            expected: schema.identifying_fields.len(),
            found: identifying.len(),
        });
    }
    for (field, token) in schema.identifying_fields.iter().zip(identifying) {
        let token = token.as_ref();
        let bits = one_hot_encode(token, &field.vocabulary).map_err(|_| unknown(&field.name, token))?;
        out.extend(bits.into_iter().map(f64::from));
        raw.push(RawValue::Token(token.to_string()));
    }
    Ok(())
}

/// Encoded and raw sections of one entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedEntry {
    pub category: CategoryIndex,
    pub encoded: Vec<f64>,
    pub raw: Vec<RawValue>,
}

/// Stateless encoding of one entry with the schema's static constants.
/// Parameters using `quantile_gaussian` need writer state and are rejected
/// here with `INSUFFICIENT_STATE`.
pub fn encode_entry<S: AsRef<str>>(
    schema: &LogSchema,
    type_name: &str,
    category: &str,
    identifying: &[S],
    params: &[RawValue],
) -> Result<EncodedEntry> {
    let (index, cat) = schema.category(type_name, category)?;
    if params.len() != cat.params.len() {
        return Err(Error::ArityMismatch {
            what: format!("parameters of {type_name}.{category}"),
            expected: cat.params.len(),
            found: params.len(),
        });
    }
    let mut encoded = Vec::new();
    let mut raw = Vec::with_capacity(identifying.len() + params.len());
    encode_identifying(schema, identifying, &mut encoded, &mut raw)?;
    for (spec, value) in cat.params.iter().zip(params) {
        let encoder = ParamEncoder::from_spec(spec)?;
        let value = encoder.raw_value(&spec.name, value)?;
        encoder.encode(&spec.name, &value, None, &mut encoded)?;
        raw.push(value);
    }
    Ok(EncodedEntry {
        category: index,
        encoded,
        raw,
    })
}

/// Re-encodes a retained raw value under `spec`.
pub(crate) fn encode_raw(spec: &ParameterSpec, raw: &RawValue) -> Result<Vec<f64>> {
    let encoder = ParamEncoder::from_spec(spec)?;
    let value = encoder.raw_value(&spec.name, raw)?;
    let mut out = Vec::with_capacity(spec.width());
    encoder.encode(&spec.name, &value, None, &mut out)?;
    Ok(out)
}
