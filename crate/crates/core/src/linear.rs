//! Linear FIR self-interference canceller.
//!
//! Models the received self-interference as a convolution of the known
//! transmit signal with a short channel estimate:
//!
//! `yhat[n] = sum_{l=0}^{L-1} h[l] * x[n - l]`
//!
//! The taps are fitted by least squares over a training range. This is both
//! a canceller in its own right and the first stage of the two-step
//! pipeline in [`crate::csid`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::solve_least_squares;
use crate::signal::ComplexSignal;

/// Estimated FIR channel; `taps[l]` multiplies `x[n - l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    taps: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct LinearModelRepr {
    memory_len: usize,
    taps: Vec<[f64; 2]>,
}

impl LinearModel {
    pub fn new(taps: Vec<Complex64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidConfig("memory length must be at least 1".into()));
        }
        if let Some(i) = taps.iter().position(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(Self { taps })
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn memory_len(&self) -> usize {
        self.taps.len()
    }

    pub fn to_json(&self) -> String {
        let repr = LinearModelRepr {
            memory_len: self.taps.len(),
            taps: crate::util::pairs_from_complex(&self.taps),
        };
        serde_json::to_string_pretty(&repr).expect("plain struct serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: LinearModelRepr = serde_json::from_str(text)?;
        if repr.taps.len() != repr.memory_len {
            return Err(Error::InvalidConfig(format!(
                "memory_len {} disagrees with {} taps",
                repr.memory_len,
                repr.taps.len()
            )));
        }
        LinearModel::new(crate::util::complex_from_pairs(&repr.taps))
    }

    /// Single-sample prediction; lags before the signal start read zero.
    pub fn predict_one(&self, tx: &ComplexSignal, n: usize) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (l, h) in self.taps.iter().enumerate() {
            acc += h * tx.lagged(n, l);
        }
        acc
    }
}

/// Checks a fit/evaluation range against the signals backing it.
pub(crate) fn check_range(
    tx: &ComplexSignal,
    rx: &ComplexSignal,
    range: &std::ops::Range<usize>,
) -> Result<()> {
    if tx.len() != rx.len() {
        return Err(Error::MismatchedLengths {
            left: tx.len(),
            right: rx.len(),
        });
    }
    if range.is_empty() {
        return Err(Error::EmptyRange);
    }
    if range.end > tx.len() {
        return Err(Error::RangeOutOfBounds {
            start: range.start,
            end: range.end,
            len: tx.len(),
        });
    }
    Ok(())
}

/// Target indices used when fitting over `range` with memory `L`: the first
/// `L - 1` samples are dropped so every regression row's lag window stays
/// inside the range.
pub(crate) fn fit_targets(range: &std::ops::Range<usize>, memory_len: usize) -> std::ops::Range<usize> {
    (range.start + memory_len - 1)..range.end
}

/// Fits FIR taps by least squares over `range`.
///
/// Requires `|range| >= 10 * memory_len` so the system is comfortably
/// overdetermined. A rank-deficient regressor (e.g. a constant-zero lag) is
/// an error naming the degenerate lags; the widely linear fit in
/// [`crate::poly`] is the one that degrades gracefully instead.
pub fn fit_linear(
    tx: &ComplexSignal,
    rx: &ComplexSignal,
    range: std::ops::Range<usize>,
    memory_len: usize,
) -> Result<LinearModel> {
    if memory_len == 0 {
        return Err(Error::InvalidConfig("memory length must be at least 1".into()));
    }
    check_range(tx, rx, &range)?;
    let need = 10 * memory_len;
    if range.len() < need {
        return Err(Error::FitRangeTooSmall {
            have: range.len(),
            need,
        });
    }

    let targets = fit_targets(&range, memory_len);
    let rows = targets.len();
    let a = DMatrix::<Complex64>::from_fn(rows, memory_len, |m, l| {
        tx.lagged(targets.start + m, l)
    });
    let b = DVector::<Complex64>::from_fn(rows, |m, _| rx[targets.start + m]);

    let out = solve_least_squares(&a, &b);
    if out.rank < memory_len {
        return Err(Error::RankDeficient {
            columns: out
                .degenerate_columns
                .iter()
                .map(|&l| format!("lag {l}"))
                .collect(),
        });
    }
    LinearModel::new(out.coefficients)
}

/// Predicts over `range`; element `i` of the output corresponds to sample
/// `range.start + i`. Lags reaching before the signal start read zero, and
/// lags reaching before `range.start` read the actual earlier samples.
pub fn predict_linear(
    model: &LinearModel,
    tx: &ComplexSignal,
    range: std::ops::Range<usize>,
) -> Result<ComplexSignal> {
    if range.is_empty() {
        return Err(Error::EmptyRange);
    }
    if range.end > tx.len() {
        return Err(Error::RangeOutOfBounds {
            start: range.start,
            end: range.end,
            len: tx.len(),
        });
    }
    Ok(ComplexSignal::from_computed(
        range.map(|n| model.predict_one(tx, n)).collect(),
    ))
}
