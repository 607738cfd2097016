//! Canonical polyadic (CPD) model over discrete index tuples, trained by
//! regularized alternating least squares.
//!
//! A rank-`F` model over `N` dimensions stores one factor matrix per
//! dimension, `A_n` of shape `levels_n x F`, and evaluates an index tuple
//! `(i_1, ..., i_N)` as
//!
//! `X(i_1, ..., i_N) = sum_{f=1}^{F} prod_{n=1}^{N} A_n(i_n, f)`
//!
//! Training sees only the observed tuples (the tensor is never
//! materialized), which is what makes the model usable when the index
//! space dwarfs the sample count.
//!
//! # Objective and row update
//!
//! The trainer minimizes, over all factor entries,
//!
//! `J = sum_m |y_m - X(i_m)|^2 + rho * sum_n ||A_n||_F^2
//!      + mu * sum_n ||D_n A_n||_F^2`
//!
//! where `D_n` is the first-difference operator over the rows of `A_n`
//! padded with a zero row at both ends, so adjacent quantization levels are
//! encouraged to carry similar loadings. Setting the Wirtinger gradient of
//! `J` with respect to one row `a_i` of dimension `k` to zero, with
//! everything else held fixed, gives the exact block minimizer
//!
//! `(Q^H Q + (rho + 2 mu) I) a_i = Q^H y + mu (a_{i-1} + a_{i+1})`
//!
//! with `Q` stacking the Hadamard products of the other factors' selected
//! rows for the samples whose `k`-th index is `i`, and missing neighbor
//! rows read as zero while the `2 mu` stays on the diagonal. Note the
//! neighbor coupling enters with a positive sign: that is what the penalty
//! `||D_n A_n||^2` differentiates to, and it is what makes each row update
//! an exact coordinate minimizer, so `J` cannot increase across updates.
//! Rows are swept in ascending level order using freshly updated lower
//! neighbors (Gauss-Seidel), dimensions in ascending order.
//!
//! A level with no training samples keeps the same update with the data
//! term absent: its row becomes the smoothness interpolation of its
//! neighbors, which is how unobserved quantization cells get filled.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One factor matrix: `levels` rows by `rank` columns, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    levels: usize,
    rank: usize,
    entries: Vec<Complex64>,
}

impl FactorMatrix {
    pub fn zeros(levels: usize, rank: usize) -> Self {
        Self {
            levels,
            rank,
            entries: vec![Complex64::new(0.0, 0.0); levels * rank],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidConfig(
                "factor matrix needs at least one row and one column".into(),
            ));
        }
        let rank = rows[0].len();
        if rows.iter().any(|r| r.len() != rank) {
            return Err(Error::InvalidConfig("ragged factor matrix".into()));
        }
        let levels = rows.len();
        let entries: Vec<Complex64> = rows.into_iter().flatten().collect();
        if let Some(i) = entries
            .iter()
            .position(|e| !e.re.is_finite() || !e.im.is_finite())
        {
            return Err(Error::NonFinite { index: i });
        }
        Ok(Self {
            levels,
            rank,
            entries,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Row for a 0-based level index.
    pub fn row(&self, row: usize) -> &[Complex64] {
        &self.entries[row * self.rank..(row + 1) * self.rank]
    }

    fn row_mut(&mut self, row: usize) -> &mut [Complex64] {
        &mut self.entries[row * self.rank..(row + 1) * self.rank]
    }

    pub fn scale(&mut self, by: Complex64) {
        for e in &mut self.entries {
            *e *= by;
        }
    }

    fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|e| e.norm_sqr()).sum()
    }

    /// `||D A||_F^2` for the zero-padded first-difference operator `D`.
    fn smoothness(&self) -> f64 {
        let mut acc = 0.0;
        for f in 0..self.rank {
            let mut prev = Complex64::new(0.0, 0.0);
            for i in 0..self.levels {
                let cur = self.entries[i * self.rank + f];
                acc += (cur - prev).norm_sqr();
                prev = cur;
            }
            acc += prev.norm_sqr(); // trailing zero row
        }
        acc
    }
}

/// Evaluates the model at a tuple of 1-based levels, one per dimension.
///
/// The level convention matches [`crate::quantize::Codebook::quantize`]:
/// dimension `n`'s level must lie in `1..=factors[n].levels()`.
pub fn cpd_eval(factors: &[FactorMatrix], levels: &[usize]) -> Result<Complex64> {
    if factors.is_empty() {
        return Err(Error::InvalidConfig("no factor matrices".into()));
    }
    let rank = factors[0].rank;
    if factors.iter().any(|a| a.rank != rank) {
        return Err(Error::InvalidConfig("factor ranks disagree".into()));
    }
    if levels.len() != factors.len() {
        return Err(Error::InvalidConfig(format!(
            "{} levels given for {} dimensions",
            levels.len(),
            factors.len()
        )));
    }
    for (dim, (&level, a)) in levels.iter().zip(factors).enumerate() {
        if level < 1 || level > a.levels {
            return Err(Error::LevelOutOfRange {
                dim,
                index: level,
                levels: a.levels,
            });
        }
    }
    let zero_based: Vec<usize> = levels.iter().map(|&i| i - 1).collect();
    Ok(eval_rows(factors, &zero_based))
}

/// Hot-path evaluation with pre-validated 0-based rows: for each rank-one
/// component, the chain of row entries is multiplied left to right, then
/// components are summed. `F * (N - 1)` complex multiplies, `F - 1`
/// complex adds.
pub(crate) fn eval_rows(factors: &[FactorMatrix], rows: &[usize]) -> Complex64 {
    let rank = factors[0].rank;
    let mut acc = Complex64::new(0.0, 0.0);
    for f in 0..rank {
        let mut prod = factors[0].row(rows[0])[f];
        for (a, &r) in factors[1..].iter().zip(&rows[1..]) {
            prod *= a.row(r)[f];
        }
        if f == 0 {
            acc = prod;
        } else {
            acc += prod;
        }
    }
    acc
}

/// Settings for [`fit_factors`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlsOptions {
    pub rank: usize,
    /// Ridge weight `rho` on every factor entry.
    pub rho: f64,
    /// Smoothness weight `mu` coupling adjacent rows.
    pub mu: f64,
    pub max_sweeps: usize,
    /// Relative objective-change threshold for early stopping.
    pub tol: f64,
    pub seed: u64,
}

impl AlsOptions {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            rho: 1e-3,
            mu: 1e-4,
            max_sweeps: 50,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// What training did: the regularized objective after initialization
/// (entry 0) and after each sweep, the data term alone as a mean square,
/// and whether the relative-change tolerance was reached.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub objective: Vec<f64>,
    pub data_mse: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

struct Problem {
    dims: Vec<usize>,
    /// 0-based index tuples, flattened `[m * n_dims + dim]`.
    indices: Vec<u32>,
    targets: Vec<Complex64>,
    /// Per dimension, per level: sample ids.
    groups: Vec<Vec<Vec<u32>>>,
}

impl Problem {
    fn idx(&self, m: usize, dim: usize) -> usize {
        self.indices[m * self.dims.len() + dim] as usize
    }
}

/// Fits CPD factors to observed `(levels, value)` samples (1-based levels).
///
/// `init` supplies starting factors (e.g. a lower-rank solution padded with
/// a fresh column); otherwise entries are drawn from a circularly symmetric
/// complex Gaussian whose standard deviation `(rms(y) / rank)^(1/N)` makes
/// a product of `N` entries, summed over `rank` components, land at the
/// scale of the targets. `max_sweeps = 0` returns the starting point with
/// its objective, which is how callers probe an initialization.
pub fn fit_factors(
    level_counts: &[usize],
    samples: &[(Vec<usize>, Complex64)],
    opts: &AlsOptions,
    init: Option<Vec<FactorMatrix>>,
) -> Result<(Vec<FactorMatrix>, TrainReport)> {
    let n_dims = level_counts.len();
    if n_dims == 0 {
        return Err(Error::InvalidConfig("at least one dimension required".into()));
    }
    if level_counts.iter().any(|&c| c == 0) {
        return Err(Error::InvalidConfig("every dimension needs at least one level".into()));
    }
    if opts.rank == 0 {
        return Err(Error::InvalidConfig("rank must be at least 1".into()));
    }
    if !(opts.rho.is_finite() && opts.mu.is_finite()) || opts.rho < 0.0 || opts.mu < 0.0 {
        return Err(Error::InvalidConfig(
            "regularization weights must be finite and non-negative".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::EmptyRange);
    }

    let mut indices = Vec::with_capacity(samples.len() * n_dims);
    let mut targets = Vec::with_capacity(samples.len());
    for (m, (levels, y)) in samples.iter().enumerate() {
        if levels.len() != n_dims {
            return Err(Error::InvalidConfig(format!(
                "sample {m} has {} levels for {n_dims} dimensions",
                levels.len()
            )));
        }
        for (dim, (&level, &count)) in levels.iter().zip(level_counts).enumerate() {
            if level < 1 || level > count {
                return Err(Error::LevelOutOfRange {
                    dim,
                    index: level,
                    levels: count,
                });
            }
            indices.push((level - 1) as u32);
        }
        if !y.re.is_finite() || !y.im.is_finite() {
            return Err(Error::NonFinite { index: m });
        }
        targets.push(*y);
    }

    let mut groups: Vec<Vec<Vec<u32>>> = level_counts
        .iter()
        .map(|&count| vec![Vec::new(); count])
        .collect();
    for m in 0..targets.len() {
        for dim in 0..n_dims {
            let level = indices[m * n_dims + dim] as usize;
            groups[dim][level].push(m as u32);
        }
    }
    let problem = Problem {
        dims: level_counts.to_vec(),
        indices,
        targets,
        groups,
    };

    let mut factors = match init {
        Some(given) => {
            if given.len() != n_dims {
                return Err(Error::InvalidConfig(format!(
                    "{} initial factors for {n_dims} dimensions",
                    given.len()
                )));
            }
            for (dim, (a, &count)) in given.iter().zip(level_counts).enumerate() {
                if a.levels != count || a.rank != opts.rank {
                    return Err(Error::InvalidConfig(format!(
                        "initial factor {dim} is {}x{}, expected {count}x{}",
                        a.levels, a.rank, opts.rank
                    )));
                }
            }
            given
        }
        None => init_factors(level_counts, &problem.targets, opts),
    };

    let mut objective = Vec::with_capacity(opts.max_sweeps + 1);
    let mut data_mse = Vec::with_capacity(opts.max_sweeps + 1);
    let (j0, mse0) = evaluate_objective(&factors, &problem, opts);
    objective.push(j0);
    data_mse.push(mse0);

    let mut converged = false;
    let mut sweeps = 0;
    for _ in 0..opts.max_sweeps {
        for dim in 0..n_dims {
            sweep_dimension(&mut factors, &problem, dim, opts)?;
        }
        sweeps += 1;
        let (j, mse) = evaluate_objective(&factors, &problem, opts);
        let j_prev = *objective.last().unwrap();
        objective.push(j);
        data_mse.push(mse);
        if (j_prev - j).abs() <= opts.tol * j_prev.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    Ok((
        factors,
        TrainReport {
            objective,
            data_mse,
            sweeps,
            converged,
        },
    ))
}

fn init_factors(level_counts: &[usize], targets: &[Complex64], opts: &AlsOptions) -> Vec<FactorMatrix> {
    let rms = (targets.iter().map(|y| y.norm_sqr()).sum::<f64>() / targets.len() as f64).sqrt();
    let sigma = (rms / opts.rank as f64).powf(1.0 / level_counts.len() as f64);
    let component_std = sigma / std::f64::consts::SQRT_2;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    level_counts
        .iter()
        .map(|&count| {
            let mut a = FactorMatrix::zeros(count, opts.rank);
            for e in &mut a.entries {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *e = Complex64::new(re * component_std, im * component_std);
            }
            a
        })
        .collect()
}

/// One Gauss-Seidel pass over the rows of dimension `dim`.
fn sweep_dimension(
    factors: &mut [FactorMatrix],
    problem: &Problem,
    dim: usize,
    opts: &AlsOptions,
) -> Result<()> {
    let rank = opts.rank;
    let n_dims = problem.dims.len();
    let m_total = problem.targets.len();

    // Hadamard products of the other dimensions' selected rows, per sample.
    let mut qs = vec![Complex64::new(1.0, 0.0); m_total * rank];
    for m in 0..m_total {
        let q = &mut qs[m * rank..(m + 1) * rank];
        for other in 0..n_dims {
            if other == dim {
                continue;
            }
            let row = factors[other].row(problem.idx(m, other));
            for (qf, rf) in q.iter_mut().zip(row) {
                *qf *= rf;
            }
        }
    }

    let diag = opts.rho + 2.0 * opts.mu;
    let levels = problem.dims[dim];
    for i in 0..levels {
        let mut gram = DMatrix::<Complex64>::zeros(rank, rank);
        let mut rhs = DVector::<Complex64>::zeros(rank);
        for &m in &problem.groups[dim][i] {
            let m = m as usize;
            let q = &qs[m * rank..(m + 1) * rank];
            let y = problem.targets[m];
            for r in 0..rank {
                let qr_conj = q[r].conj();
                rhs[r] += qr_conj * y;
                for c in 0..rank {
                    gram[(r, c)] += qr_conj * q[c];
                }
            }
        }
        for r in 0..rank {
            gram[(r, r)] += Complex64::new(diag, 0.0);
        }
        // Freshly updated lower neighbor, not-yet-updated upper neighbor;
        // missing neighbors are zero rows.
        if opts.mu > 0.0 {
            let mu = Complex64::new(opts.mu, 0.0);
            if i > 0 {
                let prev = factors[dim].row(i - 1).to_vec();
                for r in 0..rank {
                    rhs[r] += mu * prev[r];
                }
            }
            if i + 1 < levels {
                let next = factors[dim].row(i + 1).to_vec();
                for r in 0..rank {
                    rhs[r] += mu * next[r];
                }
            }
        }

        let solution = match Cholesky::new(gram.clone()) {
            Some(chol) => chol.solve(&rhs),
            None => gram
                .lu()
                .solve(&rhs)
                .ok_or(Error::SingularRowUpdate)?,
        };
        factors[dim]
            .row_mut(i)
            .copy_from_slice(solution.as_slice());
    }
    Ok(())
}

fn evaluate_objective(
    factors: &[FactorMatrix],
    problem: &Problem,
    opts: &AlsOptions,
) -> (f64, f64) {
    let n_dims = problem.dims.len();
    let mut rows = vec![0usize; n_dims];
    let mut data = 0.0;
    for m in 0..problem.targets.len() {
        for dim in 0..n_dims {
            rows[dim] = problem.idx(m, dim);
        }
        data += (problem.targets[m] - eval_rows(factors, &rows)).norm_sqr();
    }
    let ridge: f64 = factors.iter().map(FactorMatrix::norm_sqr).sum();
    let smooth: f64 = factors.iter().map(FactorMatrix::smoothness).sum();
    let objective = data + opts.rho * ridge + opts.mu * smooth;
    (objective, data / problem.targets.len() as f64)
}
