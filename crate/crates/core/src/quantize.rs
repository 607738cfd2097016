//! Scalar quantization of lagged inputs.
//!
//! The tensor canceller in [`crate::csid`] does not see raw samples; it sees
//! the real and imaginary parts of the lagged transmit signal, each mapped
//! to a discrete level by a 1-D k-means codebook. A bank holds one codebook
//! per dimension, ordered `Re x[n], Im x[n], Re x[n-1], Im x[n-1], ...`, so
//! a sample becomes the index vector that addresses the factor matrices.
//!
//! Levels are 1-based (`1..=I`) to match the tensor index convention used
//! throughout; factor matrices subtract one internally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ComplexSignal;

const MAX_LLOYD_ITERS: usize = 1000;

/// A trained 1-D codebook: strictly ascending centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    centroids: Vec<f64>,
}

impl Codebook {
    /// Builds a codebook from explicit centroids (must be finite, strictly
    /// ascending, at least two).
    pub fn from_centroids(centroids: Vec<f64>) -> Result<Self> {
        if centroids.len() < 2 {
            return Err(Error::TooFewLevels(centroids.len()));
        }
        if let Some(i) = centroids.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        if centroids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "centroids must be strictly ascending".into(),
            ));
        }
        Ok(Self { centroids })
    }

    /// Trains `levels` centroids on `values` by Lloyd's algorithm.
    ///
    /// Initialization is deterministic: centroid `j` (1-based) starts at the
    /// `(j - 1/2) / levels` quantile of the training values, so repeated
    /// runs need no seed and no restarts. Iteration stops at an assignment
    /// fixed point: one more Lloyd step would move nothing. A cluster that
    /// empties out is re-seeded at the value currently worst represented by
    /// the remaining centroids (first such value on ties).
    ///
    /// Requires at least `levels` distinct values.
    pub fn train(values: &[f64], levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::TooFewLevels(levels));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let distinct = 1 + sorted.windows(2).filter(|w| w[0] < w[1]).count();
        if distinct < levels {
            return Err(Error::TooFewDistinctValues {
                need: levels,
                have: distinct,
            });
        }

        let n = sorted.len();
        let quantile = |t: f64| -> f64 {
            let pos = t * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if lo + 1 < n {
                sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
            } else {
                sorted[n - 1]
            }
        };
        let mut centroids: Vec<f64> = (1..=levels)
            .map(|j| quantile((j as f64 - 0.5) / levels as f64))
            .collect();

        // Lloyd on sorted data: cluster j owns the interval up to the
        // midpoint boundary; a value exactly on a boundary goes to the
        // lower cluster, matching the quantize tie-break.
        let mut prev_bounds: Option<Vec<usize>> = None;
        for _ in 0..MAX_LLOYD_ITERS {
            centroids.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // split[j] = first index belonging to cluster j+1
            let bounds: Vec<usize> = (0..levels - 1)
                .map(|j| {
                    let mid = 0.5 * (centroids[j] + centroids[j + 1]);
                    sorted.partition_point(|&v| v <= mid)
                })
                .collect();

            let mut empty = None;
            let mut next = centroids.clone();
            for j in 0..levels {
                let start = if j == 0 { 0 } else { bounds[j - 1] };
                let end = if j == levels - 1 { n } else { bounds[j] };
                if start == end {
                    empty = Some(j);
                    break;
                }
                next[j] = sorted[start..end].iter().sum::<f64>() / (end - start) as f64;
            }

            if let Some(j) = empty {
                // Re-seed at the value farthest from its nearest centroid.
                let worst = sorted
                    .iter()
                    .map(|&v| {
                        centroids
                            .iter()
                            .map(|&c| (v - c).abs())
                            .fold(f64::INFINITY, f64::min)
                    })
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .map(|(i, _)| i)
                    .expect("values nonempty");
                centroids[j] = sorted[worst];
                prev_bounds = None;
                continue;
            }

            let converged = prev_bounds.as_deref() == Some(&bounds) && next == centroids;
            centroids = next;
            if converged {
                return Codebook::from_centroids(centroids);
            }
            prev_bounds = Some(bounds);
        }
        Err(Error::InvalidConfig(format!(
            "k-means failed to reach a fixed point within {MAX_LLOYD_ITERS} iterations"
        )))
    }

    pub fn levels(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    /// 1-based index of the nearest centroid. Equidistant values take the
    /// lower index; values outside the centroid span clamp to the ends.
    pub fn quantize(&self, value: f64) -> usize {
        // insertion point, then compare the two neighbours
        let i = self.centroids.partition_point(|&c| c < value);
        if i == 0 {
            return 1;
        }
        if i == self.centroids.len() {
            return self.centroids.len();
        }
        let below = value - self.centroids[i - 1];
        let above = self.centroids[i] - value;
        if below <= above {
            i
        } else {
            i + 1
        }
    }

    /// Centroid for a 1-based level.
    pub fn centroid(&self, level: usize) -> f64 {
        self.centroids[level - 1]
    }

    /// Mean squared quantization error over `values`.
    pub fn distortion(&self, values: &[f64]) -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        values
            .iter()
            .map(|&v| {
                let c = self.centroid(self.quantize(v));
                (v - c) * (v - c)
            })
            .sum::<f64>()
            / values.len() as f64
    }
}

/// One codebook per input dimension, ordered
/// `Re x[n], Im x[n], Re x[n-1], Im x[n-1], ...`.
///
/// The two dimensions of each lag share a level count but are trained
/// separately on their own values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerBank {
    codebooks: Vec<Codebook>,
}

impl QuantizerBank {
    /// Trains `2 * memory_len` codebooks on the lagged components of `tx`
    /// at the given target indices. `levels_per_lag[l]` gives the level
    /// count shared by the Re and Im dimensions of lag `l`.
    pub fn train(
        tx: &ComplexSignal,
        targets: std::ops::Range<usize>,
        memory_len: usize,
        levels_per_lag: &[usize],
        ) -> Result<Self> {
        if memory_len == 0 {
            return Err(Error::InvalidConfig("memory length must be at least 1".into()));
        }
        if levels_per_lag.len() != memory_len {
            return Err(Error::InvalidConfig(format!(
                "expected {memory_len} per-lag level counts, got {}",
                levels_per_lag.len()
            )));
        }
        if targets.is_empty() {
            return Err(Error::EmptyRange);
        }
        if targets.end > tx.len() {
            return Err(Error::RangeOutOfBounds {
                start: targets.start,
                end: targets.end,
                len: tx.len(),
            });
        }
        let mut codebooks = Vec::with_capacity(2 * memory_len);
        for dim in 0..2 * memory_len {
            let lag = dim / 2;
            let values: Vec<f64> = targets
                .clone()
                .map(|m| {
                    let v = tx.lagged(m, lag);
                    if dim % 2 == 0 {
                        v.re
                    } else {
                        v.im
                    }
                })
                .collect();
            codebooks.push(Codebook::train(&values, levels_per_lag[lag])?);
        }
        Ok(Self { codebooks })
    }

    pub fn from_codebooks(codebooks: Vec<Codebook>) -> Result<Self> {
        if codebooks.is_empty() || codebooks.len() % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "a bank needs an even, positive number of codebooks, got {}",
                codebooks.len()
            )));
        }
        for pair in codebooks.chunks(2) {
            if pair[0].levels() != pair[1].levels() {
                return Err(Error::InvalidConfig(
                    "the Re and Im codebooks of a lag must share a level count".into(),
                ));
            }
        }
        Ok(Self { codebooks })
    }

    pub fn dims(&self) -> usize {
        self.codebooks.len()
    }

    pub fn memory_len(&self) -> usize {
        self.codebooks.len() / 2
    }

    pub fn codebook(&self, dim: usize) -> &Codebook {
        &self.codebooks[dim]
    }

    /// Level count per lag (`I_1, ..., I_L`).
    pub fn levels_per_lag(&self) -> Vec<usize> {
        self.codebooks.chunks(2).map(|c| c[0].levels()).collect()
    }

    /// Quantizes the lagged input vector at sample `n` into 1-based levels,
    /// one per dimension. Lags before the signal start read zero and are
    /// quantized like any other value.
    pub fn input_indices(&self, tx: &ComplexSignal, n: usize) -> Vec<usize> {
        self.codebooks
            .iter()
            .enumerate()
            .map(|(dim, cb)| {
                let v = tx.lagged(n, dim / 2);
                cb.quantize(if dim % 2 == 0 { v.re } else { v.im })
            })
            .collect()
    }
}
