//! Exponential-family and special-function primitives shared by all
//! message computations: the digamma function, log-space normalization,
//! and Dirichlet expected sufficient statistics.
//!
//! All categorical arithmetic elsewhere in the crate is carried in log
//! space; probabilities materialize only through [`log_normalize`]. The
//! tolerance constants below are the single source of numeric truth for
//! the whole crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute error bound met by [`digamma`] on `[1e-3, 1e6]`.
pub const DIGAMMA_TOL: f64 = 1e-10;

/// Probability vectors must sum to one within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Arguments below this are shifted up by the recurrence ψ(x) = ψ(x+1) − 1/x
/// before the asymptotic series is applied.
const DIGAMMA_SERIES_THRESHOLD: f64 = 6.0;

/// A vector of finite natural-log values (expected log probabilities,
/// unnormalized log messages). Entries must be finite: NaN and both
/// infinities are rejected at construction, so downstream arithmetic
/// never has to re-check.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbVector {
    entries: Vec<f64>,
}

impl LogProbVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("log-probability vector".into()));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::Domain(
                "log-probability vector entries must be finite".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A probability vector: entries in `[0, 1]` summing to one within
/// [`NORMALIZATION_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector {
    entries: Vec<f64>,
}

impl ProbVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("probability vector".into()));
        }
        if entries.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::Domain(
                "probability vector entries must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Domain(format!(
                "probability vector sums to {sum}, expected 1"
            )));
        }
        Ok(Self { entries })
    }

    /// The uniform distribution over `len` outcomes.
    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Empty("probability vector".into()));
        }
        Ok(Self {
            entries: vec![1.0 / len as f64; len],
        })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.entries.clone()
    }

    /// Internal constructor for values already normalized by construction.
    pub(crate) fn from_normalized(entries: Vec<f64>) -> Self {
        debug_assert!(!entries.is_empty());
        debug_assert!(
            (entries.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL,
            "normalized entries drifted from unit mass"
        );
        Self { entries }
    }
}

/// Dirichlet pseudocounts: a vector of strictly positive finite reals.
/// The distribution's natural parameters are these values minus one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DirichletParams {
    pseudocounts: Vec<f64>,
}

impl DirichletParams {
    pub fn new(pseudocounts: Vec<f64>) -> Result<Self> {
        if pseudocounts.is_empty() {
            return Err(Error::Empty("Dirichlet pseudocounts".into()));
        }
        if pseudocounts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::Domain(
                "Dirichlet pseudocounts must be finite and > 0".into(),
            ));
        }
        Ok(Self { pseudocounts })
    }

    /// All `len` pseudocounts set to the same `value`.
    pub fn symmetric(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn pseudocounts(&self) -> &[f64] {
        &self.pseudocounts
    }

    pub fn len(&self) -> usize {
        self.pseudocounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pseudocounts.is_empty()
    }

    /// Sum of all pseudocounts.
    pub fn total(&self) -> f64 {
        self.pseudocounts.iter().sum()
    }
}

/// Digamma function ψ(x) for x > 0, the derivative of log-gamma.
///
/// Absolute error is at most [`DIGAMMA_TOL`] on `[1e-3, 1e6]`. The
/// argument is shifted above 6 by the recurrence ψ(x+1) = ψ(x) + 1/x,
/// then the asymptotic series in 1/x² is evaluated.
pub fn digamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!(
            "digamma requires a finite argument > 0, got {x}"
        )));
    }
    Ok(digamma_unchecked(x))
}

/// Digamma for arguments already known to be finite and positive.
pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    debug_assert!(x.is_finite() && x > 0.0);
    let mut shift = 0.0;
    while x < DIGAMMA_SERIES_THRESHOLD {
        shift -= 1.0 / x;
        x += 1.0;
    }
    // ψ(x) ~ ln x − 1/(2x) − Σ_{n≥1} B_{2n} / (2n x^{2n}), truncated after
    // the x^{-14} term; at x ≥ 6 the first omitted term is below 2e-13.
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 * inv - tail
}

/// Turns a vector of log weights into the probability vector
/// exp(v_i − logsumexp(v)).
///
/// The maximum entry is subtracted before exponentiation, so inputs of
/// any magnitude normalize without overflow and adding one constant to
/// every entry leaves the output unchanged.
pub fn log_normalize(log_weights: &[f64]) -> Result<ProbVector> {
    if log_weights.is_empty() {
        return Err(Error::Empty("log weights".into()));
    }
    if log_weights.iter().any(|w| w.is_nan()) {
        return Err(Error::Domain("log weights contain NaN".into()));
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Degenerate(
            "all log weights are negative infinity".into(),
        ));
    }
    if max == f64::INFINITY {
        return Err(Error::Domain("log weights contain +infinity".into()));
    }
    let exps: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(ProbVector::from_normalized(
        exps.into_iter().map(|e| e / sum).collect(),
    ))
}

/// Expected sufficient statistics ⟨ln θ_k⟩ of a Dirichlet distribution:
/// ψ(α_k) − ψ(Σ_j α_j) per entry.
pub fn dirichlet_expected_log(d: &DirichletParams) -> LogProbVector {
    let psi_total = digamma_unchecked(d.total());
    LogProbVector {
        entries: d
            .pseudocounts()
            .iter()
            .map(|&a| digamma_unchecked(a) - psi_total)
            .collect(),
    }
}
