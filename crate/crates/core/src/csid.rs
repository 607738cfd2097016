//! Two-step self-interference canceller: linear FIR stage followed by a
//! low-rank tensor model of whatever the linear stage leaves behind.
//!
//! The second stage treats the non-linear residual as a function of the
//! quantized lagged transmit samples. Each sample's input vector
//! `(Re x[n], Im x[n], ..., Re x[n-L+1], Im x[n-L+1])` is quantized
//! per dimension by a [`crate::quantize::QuantizerBank`], the resulting
//! `2L` levels index a rank-`F` CPD tensor ([`crate::cpd`]), and the tensor
//! value is the non-linear cancellation estimate. Training fills the tensor
//! from the visited cells only; regularization and level smoothness extend
//! it to cells the training data never reached.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cpd::{self, AlsOptions, FactorMatrix, TrainReport};
use crate::error::{Error, Result};
use crate::linear::{check_range, fit_targets, LinearModel};
use crate::quantize::{Codebook, QuantizerBank};
use crate::signal::{cancellation_db, ComplexSignal};

/// Hyperparameters for [`train_csid`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// CPD rank `F`.
    pub rank: usize,
    /// Quantization levels `I`, shared by every lag.
    pub levels: usize,
    /// Smoothness weight `mu` across adjacent levels.
    pub mu: f64,
    /// Ridge weight `rho` on factor entries.
    pub rho: f64,
    pub max_sweeps: usize,
    /// Relative objective-change stopping threshold.
    pub tol: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(rank: usize, levels: usize) -> Self {
        Self {
            rank,
            levels,
            mu: 1e-4,
            rho: 1e-3,
            max_sweeps: 50,
            tol: 1e-6,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidConfig("rank must be at least 1".into()));
        }
        if self.levels < 2 {
            return Err(Error::TooFewLevels(self.levels));
        }
        if !(self.mu.is_finite() && self.rho.is_finite()) || self.mu < 0.0 || self.rho < 0.0 {
            return Err(Error::InvalidConfig(
                "regularization weights must be finite and non-negative".into(),
            ));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidConfig(
                "stopping tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The full two-step canceller.
#[derive(Debug, Clone)]
pub struct CsidModel {
    linear: LinearModel,
    bank: QuantizerBank,
    factors: Vec<FactorMatrix>,
}

#[derive(Serialize, Deserialize)]
struct CsidModelRepr {
    rank: usize,
    memory_len: usize,
    /// Level count per tensor dimension (`2 * memory_len` entries).
    levels: Vec<usize>,
    /// Linear-stage taps as `[re, im]` pairs.
    linear_taps: Vec<[f64; 2]>,
    /// Centroids per dimension, same order as `levels`.
    codebooks: Vec<Vec<f64>>,
    /// Per dimension: `levels[n]` rows of `rank` `[re, im]` pairs.
    factors: Vec<Vec<Vec<[f64; 2]>>>,
}

impl CsidModel {
    pub fn new(
        linear: LinearModel,
        bank: QuantizerBank,
        factors: Vec<FactorMatrix>,
    ) -> Result<Self> {
        if bank.memory_len() != linear.memory_len() {
            return Err(Error::InvalidConfig(format!(
                "quantizer bank covers {} lags, linear stage {}",
                bank.memory_len(),
                linear.memory_len()
            )));
        }
        if factors.len() != bank.dims() {
            return Err(Error::InvalidConfig(format!(
                "{} factor matrices for {} quantized dimensions",
                factors.len(),
                bank.dims()
            )));
        }
        let rank = factors[0].rank();
        for (dim, a) in factors.iter().enumerate() {
            if a.rank() != rank {
                return Err(Error::InvalidConfig("factor ranks disagree".into()));
            }
            let levels = bank.codebook(dim).levels();
            if a.levels() != levels {
                return Err(Error::InvalidConfig(format!(
                    "factor {dim} has {} rows for a {levels}-level codebook",
                    a.levels()
                )));
            }
        }
        Ok(Self {
            linear,
            bank,
            factors,
        })
    }

    pub fn linear(&self) -> &LinearModel {
        &self.linear
    }

    pub fn bank(&self) -> &QuantizerBank {
        &self.bank
    }

    pub fn factors(&self) -> &[FactorMatrix] {
        &self.factors
    }

    pub fn rank(&self) -> usize {
        self.factors[0].rank()
    }

    pub fn memory_len(&self) -> usize {
        self.linear.memory_len()
    }

    /// Tensor value at a tuple of 1-based quantization levels.
    pub fn eval_levels(&self, levels: &[usize]) -> Result<Complex64> {
        cpd::cpd_eval(&self.factors, levels)
    }

    /// Non-linear estimate for one sample: quantize the lagged input
    /// vector, then evaluate the tensor.
    pub fn predict_nl_one(&self, tx: &ComplexSignal, n: usize) -> Complex64 {
        let rows: Vec<usize> = (0..self.factors.len())
            .map(|dim| {
                let v = tx.lagged(n, dim / 2);
                let value = if dim % 2 == 0 { v.re } else { v.im };
                self.bank.codebook(dim).quantize(value) - 1
            })
            .collect();
        cpd::eval_rows(&self.factors, &rows)
    }

    pub fn to_json(&self) -> String {
        let repr = CsidModelRepr {
            rank: self.rank(),
            memory_len: self.memory_len(),
            levels: (0..self.bank.dims())
                .map(|d| self.bank.codebook(d).levels())
                .collect(),
            linear_taps: crate::util::pairs_from_complex(self.linear.taps()),
            codebooks: (0..self.bank.dims())
                .map(|d| self.bank.codebook(d).centroids().to_vec())
                .collect(),
            factors: self
                .factors
                .iter()
                .map(|a| {
                    (0..a.levels())
                        .map(|i| crate::util::pairs_from_complex(a.row(i)))
                        .collect()
                })
                .collect(),
        };
        serde_json::to_string_pretty(&repr).expect("plain struct serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: CsidModelRepr = serde_json::from_str(text)?;
        if repr.linear_taps.len() != repr.memory_len {
            return Err(Error::InvalidConfig(format!(
                "memory_len {} disagrees with {} linear taps",
                repr.memory_len,
                repr.linear_taps.len()
            )));
        }
        if repr.levels.len() != 2 * repr.memory_len
            || repr.codebooks.len() != 2 * repr.memory_len
            || repr.factors.len() != 2 * repr.memory_len
        {
            return Err(Error::InvalidConfig(
                "levels, codebooks, and factors must all cover 2 * memory_len dimensions".into(),
            ));
        }
        let linear = LinearModel::new(crate::util::complex_from_pairs(&repr.linear_taps))?;
        let mut codebooks = Vec::with_capacity(repr.codebooks.len());
        for (dim, centroids) in repr.codebooks.into_iter().enumerate() {
            if centroids.len() != repr.levels[dim] {
                return Err(Error::InvalidConfig(format!(
                    "dimension {dim}: {} centroids for {} declared levels",
                    centroids.len(),
                    repr.levels[dim]
                )));
            }
            codebooks.push(Codebook::from_centroids(centroids)?);
        }
        let bank = QuantizerBank::from_codebooks(codebooks)?;
        let mut factors = Vec::with_capacity(repr.factors.len());
        for (dim, rows) in repr.factors.into_iter().enumerate() {
            let a = FactorMatrix::from_rows(
                rows.iter()
                    .map(|r| crate::util::complex_from_pairs(r))
                    .collect(),
            )?;
            if a.rank() != repr.rank {
                return Err(Error::InvalidConfig(format!(
                    "dimension {dim}: factor rank {} disagrees with declared rank {}",
                    a.rank(),
                    repr.rank
                )));
            }
            factors.push(a);
        }
        Self::new(linear, bank, factors)
    }
}

/// Trains the second stage on the residuals the fitted linear stage leaves
/// over `range`: quantizer bank first (then fixed), factor matrices by
/// regularized ALS on the quantized samples.
///
/// The linear model must come from the same training range for the
/// residual targets to mean anything; this is not checked.
pub fn train_csid(
    tx: &ComplexSignal,
    rx: &ComplexSignal,
    range: std::ops::Range<usize>,
    linear: &LinearModel,
    config: &TrainConfig,
) -> Result<(CsidModel, TrainReport)> {
    config.validate()?;
    check_range(tx, rx, &range)?;
    let memory_len = linear.memory_len();
    if range.len() < memory_len {
        return Err(Error::FitRangeTooSmall {
            have: range.len(),
            need: memory_len,
        });
    }
    let targets = fit_targets(&range, memory_len);

    let bank = QuantizerBank::train(tx, targets.clone(), memory_len, &vec![config.levels; memory_len])?;
    let samples: Vec<(Vec<usize>, Complex64)> = targets
        .clone()
        .map(|m| {
            let residual = rx[m] - linear.predict_one(tx, m);
            (bank.input_indices(tx, m), residual)
        })
        .collect();
    let level_counts: Vec<usize> = (0..bank.dims()).map(|d| bank.codebook(d).levels()).collect();

    let opts = AlsOptions {
        rank: config.rank,
        rho: config.rho,
        mu: config.mu,
        max_sweeps: config.max_sweeps,
        tol: config.tol,
        seed: config.seed,
    };
    let (factors, report) = cpd::fit_factors(&level_counts, &samples, &opts, None)?;
    let model = CsidModel::new(linear.clone(), bank, factors)?;
    Ok((model, report))
}

/// Non-linear stage estimate over `range` (the prediction of what remains
/// after linear cancellation). Output index `j` corresponds to sample
/// `range.start + j`.
pub fn predict_csid(
    model: &CsidModel,
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
    let samples: Vec<Complex64> = range.map(|n| model.predict_nl_one(tx, n)).collect();
    Ok(ComplexSignal::from_computed(samples))
}

/// Both stages applied and scored over `range`.
#[derive(Debug, Clone)]
pub struct CancelOutcome {
    /// What is left after subtracting both stages.
    pub residual: ComplexSignal,
    /// Cancellation of the post-linear residual by the tensor stage alone.
    pub nl_db: f64,
    /// Cancellation of the received signal by both stages together.
    pub total_db: f64,
}

pub fn cancel_full(
    model: &CsidModel,
    tx: &ComplexSignal,
    rx: &ComplexSignal,
    range: std::ops::Range<usize>,
) -> Result<CancelOutcome> {
    check_range(tx, rx, &range)?;
    let received = &rx[range.clone()];
    let linear_est: Vec<Complex64> = range
        .clone()
        .map(|n| model.linear.predict_one(tx, n))
        .collect();
    let nl_est: Vec<Complex64> = range.clone().map(|n| model.predict_nl_one(tx, n)).collect();

    let post_linear: Vec<Complex64> = received
        .iter()
        .zip(&linear_est)
        .map(|(y, l)| y - l)
        .collect();
    let nl_db = cancellation_db(&post_linear, &nl_est)?;

    let total_est: Vec<Complex64> = linear_est.iter().zip(&nl_est).map(|(l, n)| l + n).collect();
    let total_db = cancellation_db(received, &total_est)?;

    let residual: Vec<Complex64> = post_linear
        .iter()
        .zip(&nl_est)
        .map(|(p, n)| p - n)
        .collect();
    Ok(CancelOutcome {
        residual: ComplexSignal::from_computed(residual),
        nl_db,
        total_db,
    })
}
