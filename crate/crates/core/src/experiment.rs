//! Grid-search experiment harness.
//!
//! An experiment loads (or synthesizes) a dataset, trains one canceller
//! family over a parameter grid, and writes a CSV of results. The grid has
//! two tiers: *report axes* that each get their own output row (memory
//! length for the linear canceller, order × memory for the polynomial,
//! rank × levels × memory for the tensor canceller), and *nuisance axes*
//! (`mu`, `rho`) that are selected away per report cell by validation-set
//! non-linear cancellation. Test data is only touched once per cell, after
//! selection; every evaluation site records which split it read so tests
//! can assert that ordering.
//!
//! Non-linear cancellation is reported against the linear canceller at the
//! same memory length: for the two-stage tensor canceller this is the
//! cancellation of the post-linear residual, and for the polynomial it is
//! the total-cancellation gain over the plain linear fit. Both reduce to
//! `total_db - linear_total_db` over the same range.

use std::ops::Range;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::{
    csid_cost, linear_cost, poly_cost, CancellerKind, CostReport, NN_REFERENCE_ADDITIONS,
    NN_REFERENCE_CANCELLATION_DB, NN_REFERENCE_MEMORY, NN_REFERENCE_MULTIPLICATIONS,
};
use crate::csid::{cancel_full, train_csid, TrainConfig};
use crate::error::{Error, Result};
use crate::linear::{fit_linear, predict_linear};
use crate::poly::{fit_poly, predict_poly};
use crate::signal::{cancellation_db, format_db, DatasetFormat, SiDataset};
use crate::synth::{generate_dataset, SynthConfig};
use crate::util::derive_seed;

/// Where the tx/rx pair comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// On-disk dataset; format chosen by extension (`.csv` or raw f64).
    File { path: PathBuf },
    /// Generated on the fly; determinism comes from the synth seed.
    Synth(SynthConfig),
}

/// Loads or generates the dataset behind a source.
pub fn load_source(source: &DataSource) -> Result<SiDataset> {
    match source {
        DataSource::File { path } => SiDataset::load(path, DatasetFormat::from_path(path)),
        DataSource::Synth(config) => {
            let (tx, rx) = generate_dataset(config)?;
            SiDataset::new(tx, rx)
        }
    }
}

/// Parameter grid. Only the axes relevant to the chosen canceller are
/// consulted: `memory` for linear; `order` × `memory` for poly; `rank` ×
/// `levels` × `memory` plus the `mu` × `rho` selection grid for csid.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GridSpec {
    /// CPD rank values (F).
    #[serde(default)]
    pub rank: Vec<usize>,
    /// Quantization level counts (I).
    #[serde(default)]
    pub levels: Vec<usize>,
    /// Smoothness weights, selected on validation.
    #[serde(default)]
    pub mu: Vec<f64>,
    /// Ridge weights, selected on validation.
    #[serde(default)]
    pub rho: Vec<f64>,
    /// Polynomial orders (P), odd.
    #[serde(default)]
    pub order: Vec<usize>,
    /// Memory lengths (L).
    #[serde(default)]
    pub memory: Vec<usize>,
}

impl GridSpec {
    /// The reference sweep for the tensor canceller: F 1..5, I 4..128,
    /// mu 1e-6..1e-3, rho 1e-4..1e-1, two memory taps.
    pub fn default_csid_sweep() -> Self {
        Self {
            rank: vec![1, 2, 3, 4, 5],
            levels: vec![4, 8, 16, 32, 64, 128],
            mu: vec![1e-6, 1e-5, 1e-4, 1e-3],
            rho: vec![1e-4, 1e-3, 1e-2, 1e-1],
            order: vec![],
            memory: vec![2],
        }
    }
}

fn default_max_sweeps() -> usize {
    50
}

fn default_tol() -> f64 {
    1e-6
}

/// One experiment: dataset, canceller family, grid, training knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DataSource,
    pub canceller: CancellerKind,
    #[serde(default)]
    pub grid: GridSpec,
    /// Base seed for tensor-factor initialization; each report cell trains
    /// from a seed derived from this and the cell's position, shared by all
    /// of the cell's (mu, rho) candidates so selection compares
    /// regularizers, not initializations.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Where the CLI writes the result CSV; unused by [`run_grid`] itself.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let grid = &self.grid;
        let need = |name: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{} grid must be non-empty for the {} canceller",
                    name, self.canceller
                )))
            }
        };
        need("memory", !grid.memory.is_empty())?;
        if grid.memory.iter().any(|&l| l == 0) {
            return Err(Error::InvalidConfig("memory lengths must be at least 1".into()));
        }
        match self.canceller {
            CancellerKind::Linear => {}
            CancellerKind::Poly => {
                need("order", !grid.order.is_empty())?;
                if let Some(&p) = grid.order.iter().find(|&&p| p % 2 == 0 || p == 0) {
                    return Err(Error::InvalidConfig(format!(
                        "polynomial orders must be odd and positive, got {p}"
                    )));
                }
            }
            CancellerKind::Csid => {
                need("rank", !grid.rank.is_empty())?;
                need("levels", !grid.levels.is_empty())?;
                need("mu", !grid.mu.is_empty())?;
                need("rho", !grid.rho.is_empty())?;
                if grid.rank.iter().any(|&f| f == 0) {
                    return Err(Error::InvalidConfig("ranks must be at least 1".into()));
                }
                if let Some(&i) = grid.levels.iter().find(|&&i| i < 2) {
                    return Err(Error::InvalidConfig(format!(
                        "level counts must be at least 2, got {i}"
                    )));
                }
                for (name, values) in [("mu", &grid.mu), ("rho", &grid.rho)] {
                    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "{name} values must be finite and non-negative"
                        )));
                    }
                }
            }
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidConfig("stopping tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Which split an evaluation or fit read. Recorded per row, in order, so
/// tests can assert the test split is only read once, last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitUse {
    Train,
    Validation,
    Test,
}

/// One output row. Fields that do not apply to the row's canceller stay
/// `None` and serialize as empty CSV cells; fields that were attempted but
/// failed hold `NaN` and serialize as `"nan"`.
#[derive(Debug, Clone)]
pub struct GridRow {
    pub canceller: CancellerKind,
    pub rank: Option<usize>,
    pub levels: Option<usize>,
    pub order: Option<usize>,
    pub memory_len: Option<usize>,
    pub mu: Option<f64>,
    pub rho: Option<f64>,
    pub val_nl_db: Option<f64>,
    pub test_nl_db: Option<f64>,
    pub test_total_db: Option<f64>,
    pub additions: Option<u64>,
    pub multiplications: Option<u64>,
    pub memory_words: Option<u64>,
    pub seed: Option<u64>,
    /// Split-access log for this row, in execution order.
    pub accesses: Vec<SplitUse>,
}

pub const GRID_CSV_HEADER: &str =
    "canceller,F,I,P,L,mu,rho,val_nl_db,test_nl_db,test_total_db,adds,mults,memory,seed";

fn opt_plain<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_exp(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn opt_db(v: Option<f64>) -> String {
    v.map(format_db).unwrap_or_default()
}

impl GridRow {
    fn blank(canceller: CancellerKind) -> Self {
        Self {
            canceller,
            rank: None,
            levels: None,
            order: None,
            memory_len: None,
            mu: None,
            rho: None,
            val_nl_db: None,
            test_nl_db: None,
            test_total_db: None,
            additions: None,
            multiplications: None,
            memory_words: None,
            seed: None,
            accesses: Vec::new(),
        }
    }

    fn set_cost(&mut self, cost: &CostReport) {
        self.additions = Some(cost.additions);
        self.multiplications = Some(cost.multiplications);
        self.memory_words = Some(cost.memory);
    }

    pub fn csv_row(&self) -> String {
        [
            self.canceller.to_string(),
            opt_plain(self.rank),
            opt_plain(self.levels),
            opt_plain(self.order),
            opt_plain(self.memory_len),
            opt_exp(self.mu),
            opt_exp(self.rho),
            opt_db(self.val_nl_db),
            opt_db(self.test_nl_db),
            opt_db(self.test_total_db),
            opt_plain(self.additions),
            opt_plain(self.multiplications),
            opt_plain(self.memory_words),
            opt_plain(self.seed),
        ]
        .join(",")
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
}

impl GridResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(GRID_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_row());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum Cell {
    Linear { l: usize },
    Poly { p: usize, l: usize },
    Csid { f: usize, i: usize, l: usize },
}

fn sorted_unique_usize(values: &[usize]) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn sorted_unique_f64(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    v.dedup();
    v
}

/// Runs the whole grid. Report cells execute in parallel; the returned
/// rows are ordered by grid coordinates (ascending, duplicates removed),
/// never by completion time, so repeated runs produce byte-identical CSV.
/// A cell whose training fails is kept as a row with `NaN` metrics and the
/// run continues.
pub fn run_grid(spec: &ExperimentSpec) -> Result<GridResult> {
    spec.validate()?;
    let ds = load_source(&spec.dataset)?;

    let memory = sorted_unique_usize(&spec.grid.memory);
    let mut cells = Vec::new();
    match spec.canceller {
        CancellerKind::Linear => {
            for &l in &memory {
                cells.push(Cell::Linear { l });
            }
        }
        CancellerKind::Poly => {
            for &p in &sorted_unique_usize(&spec.grid.order) {
                for &l in &memory {
                    cells.push(Cell::Poly { p, l });
                }
            }
        }
        CancellerKind::Csid => {
            for &f in &sorted_unique_usize(&spec.grid.rank) {
                for &i in &sorted_unique_usize(&spec.grid.levels) {
                    for &l in &memory {
                        cells.push(Cell::Csid { f, i, l });
                    }
                }
            }
        }
    }

    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(idx, cell)| run_cell(spec, &ds, idx, *cell))
        .collect();
    Ok(GridResult { rows })
}

fn run_cell(spec: &ExperimentSpec, ds: &SiDataset, idx: usize, cell: Cell) -> GridRow {
    match cell {
        Cell::Linear { l } => run_linear_cell(ds, l),
        Cell::Poly { p, l } => run_poly_cell(ds, p, l),
        Cell::Csid { f, i, l } => {
            let seed = derive_seed(spec.seed, idx as u64);
            run_csid_cell(spec, ds, f, i, l, seed)
        }
    }
}

/// Cancellation of `rx` by `estimate` over `range`, with the read logged.
fn score_split(
    ds: &SiDataset,
    estimate: &[num_complex::Complex64],
    range: &Range<usize>,
    split: SplitUse,
    accesses: &mut Vec<SplitUse>,
) -> Result<f64> {
    accesses.push(split);
    cancellation_db(&ds.rx[range.clone()], estimate)
}

fn run_linear_cell(ds: &SiDataset, l: usize) -> GridRow {
    let mut row = GridRow::blank(CancellerKind::Linear);
    row.memory_len = Some(l);
    if let Ok(cost) = linear_cost(l) {
        row.set_cost(&cost);
    }

    row.accesses.push(SplitUse::Train);
    let model = match fit_linear(&ds.tx, &ds.rx, ds.split.train.clone(), l) {
        Ok(m) => m,
        Err(e) => {
            log::warn!("linear L={l}: training failed: {e}");
            row.test_total_db = Some(f64::NAN);
            return row;
        }
    };
    let test = ds.split.test.clone();
    let total = predict_linear(&model, &ds.tx, test.clone())
        .and_then(|est| score_split(ds, &est, &test, SplitUse::Test, &mut row.accesses));
    match total {
        Ok(db) => row.test_total_db = Some(db),
        Err(e) => {
            log::warn!("linear L={l}: test evaluation failed: {e}");
            row.test_total_db = Some(f64::NAN);
        }
    }
    row
}

fn run_poly_cell(ds: &SiDataset, p: usize, l: usize) -> GridRow {
    let mut row = GridRow::blank(CancellerKind::Poly);
    row.order = Some(p);
    row.memory_len = Some(l);
    if let Ok(cost) = poly_cost(p, l) {
        row.set_cost(&cost);
    }

    let train = ds.split.train.clone();
    row.accesses.push(SplitUse::Train);
    let linear = fit_linear(&ds.tx, &ds.rx, train.clone(), l);
    row.accesses.push(SplitUse::Train);
    let poly = fit_poly(&ds.tx, &ds.rx, train, p, l);
    let (linear, poly) = match (linear, poly) {
        (Ok(lin), Ok(poly)) => (lin, poly),
        (lin, poly) => {
            let e = lin.err().or(poly.err()).expect("one side failed");
            log::warn!("poly P={p} L={l}: training failed: {e}");
            row.val_nl_db = Some(f64::NAN);
            row.test_nl_db = Some(f64::NAN);
            row.test_total_db = Some(f64::NAN);
            return row;
        }
    };

    // Gain over the same-memory linear fit, on each of the two held-out
    // splits: validation for the record, test for the report.
    let eval = |range: Range<usize>, split: SplitUse, row: &mut GridRow| -> Result<(f64, f64)> {
        let poly_est = predict_poly(&poly, &ds.tx, range.clone())?;
        let poly_db = score_split(ds, &poly_est, &range, split, &mut row.accesses)?;
        let lin_est = predict_linear(&linear, &ds.tx, range.clone())?;
        let lin_db = score_split(ds, &lin_est, &range, split, &mut row.accesses)?;
        Ok((poly_db, poly_db - lin_db))
    };

    match eval(ds.split.validation.clone(), SplitUse::Validation, &mut row) {
        Ok((_, nl)) => row.val_nl_db = Some(nl),
        Err(e) => {
            log::warn!("poly P={p} L={l}: validation evaluation failed: {e}");
            row.val_nl_db = Some(f64::NAN);
        }
    }
    match eval(ds.split.test.clone(), SplitUse::Test, &mut row) {
        Ok((total, nl)) => {
            row.test_total_db = Some(total);
            row.test_nl_db = Some(nl);
        }
        Err(e) => {
            log::warn!("poly P={p} L={l}: test evaluation failed: {e}");
            row.test_total_db = Some(f64::NAN);
            row.test_nl_db = Some(f64::NAN);
        }
    }
    row
}

fn run_csid_cell(
    spec: &ExperimentSpec,
    ds: &SiDataset,
    f: usize,
    i: usize,
    l: usize,
    seed: u64,
) -> GridRow {
    let mut row = GridRow::blank(CancellerKind::Csid);
    row.rank = Some(f);
    row.levels = Some(i);
    row.memory_len = Some(l);
    row.seed = Some(seed);
    if let Ok(cost) = csid_cost(f, l, &vec![i; l]) {
        row.set_cost(&cost);
    }

    let train = ds.split.train.clone();
    row.accesses.push(SplitUse::Train);
    let linear = match fit_linear(&ds.tx, &ds.rx, train.clone(), l) {
        Ok(m) => m,
        Err(e) => {
            log::warn!("csid F={f} I={i} L={l}: linear stage failed: {e}");
            row.val_nl_db = Some(f64::NAN);
            row.test_nl_db = Some(f64::NAN);
            row.test_total_db = Some(f64::NAN);
            return row;
        }
    };

    // All (mu, rho) candidates share the cell seed, so the winner is the
    // best regularizer for one fixed initialization. Ties keep the first
    // candidate in ascending (mu, rho) order.
    let mut best: Option<(f64, f64, f64, crate::csid::CsidModel)> = None;
    for &mu in &sorted_unique_f64(&spec.grid.mu) {
        for &rho in &sorted_unique_f64(&spec.grid.rho) {
            let config = TrainConfig {
                rank: f,
                levels: i,
                mu,
                rho,
                max_sweeps: spec.max_sweeps,
                tol: spec.tol,
                seed,
            };
            row.accesses.push(SplitUse::Train);
            let model = match train_csid(&ds.tx, &ds.rx, train.clone(), &linear, &config) {
                Ok((model, _)) => model,
                Err(e) => {
                    log::warn!("csid F={f} I={i} L={l} mu={mu:e} rho={rho:e}: training failed: {e}");
                    continue;
                }
            };
            row.accesses.push(SplitUse::Validation);
            let outcome = match cancel_full(&model, &ds.tx, &ds.rx, ds.split.validation.clone()) {
                Ok(o) => o,
                Err(e) => {
                    log::warn!(
                        "csid F={f} I={i} L={l} mu={mu:e} rho={rho:e}: validation failed: {e}"
                    );
                    continue;
                }
            };
            if outcome.nl_db.is_nan() {
                continue;
            }
            if best.as_ref().map_or(true, |(val, ..)| outcome.nl_db > *val) {
                best = Some((outcome.nl_db, mu, rho, model));
            }
        }
    }

    let Some((val_nl, mu, rho, model)) = best else {
        log::warn!("csid F={f} I={i} L={l}: every (mu, rho) candidate failed");
        row.val_nl_db = Some(f64::NAN);
        row.test_nl_db = Some(f64::NAN);
        row.test_total_db = Some(f64::NAN);
        return row;
    };
    row.val_nl_db = Some(val_nl);
    row.mu = Some(mu);
    row.rho = Some(rho);

    row.accesses.push(SplitUse::Test);
    match cancel_full(&model, &ds.tx, &ds.rx, ds.split.test.clone()) {
        Ok(outcome) => {
            row.test_nl_db = Some(outcome.nl_db);
            row.test_total_db = Some(outcome.total_db);
        }
        Err(e) => {
            log::warn!("csid F={f} I={i} L={l}: test evaluation failed: {e}");
            row.test_nl_db = Some(f64::NAN);
            row.test_total_db = Some(f64::NAN);
        }
    }
    row
}

/// Side-by-side table for one polynomial row and one tensor row, with the
/// stored neural-network reference figures between them and integer-percent
/// savings lines for additions and multiplications (memory is left out of
/// the savings lines: the tensor canceller trades memory for arithmetic,
/// and a percentage there would misleadingly suggest a win).
pub fn report_comparison(poly: &GridRow, csid: &GridRow) -> Result<String> {
    if poly.canceller != CancellerKind::Poly {
        return Err(Error::InvalidConfig(format!(
            "comparison needs a poly row first, got {}",
            poly.canceller
        )));
    }
    if csid.canceller != CancellerKind::Csid {
        return Err(Error::InvalidConfig(format!(
            "comparison needs a csid row second, got {}",
            csid.canceller
        )));
    }
    let cost = |row: &GridRow, what: &str| -> Result<(u64, u64, u64)> {
        match (row.additions, row.multiplications, row.memory_words) {
            (Some(a), Some(m), Some(w)) => Ok((a, m, w)),
            _ => Err(Error::InvalidConfig(format!("{what} row is missing cost columns"))),
        }
    };
    let nl = |row: &GridRow, what: &str| -> Result<f64> {
        row.test_nl_db
            .ok_or_else(|| Error::InvalidConfig(format!("{what} row has no test result")))
    };
    let (poly_adds, poly_mults, poly_mem) = cost(poly, "poly")?;
    let (csid_adds, csid_mults, csid_mem) = cost(csid, "csid")?;
    let poly_nl = nl(poly, "poly")?;
    let csid_nl = nl(csid, "csid")?;

    let saving = |ours: u64, theirs: u64| -> i64 {
        (100.0 * (1.0 - ours as f64 / theirs as f64)).round() as i64
    };
    let mut out = String::from("canceller,nl_db,additions,multiplications,memory\n");
    out.push_str(&format!(
        "poly,{},{poly_adds},{poly_mults},{poly_mem}\n",
        format_db(poly_nl)
    ));
    out.push_str(&format!(
        "nn,{},{NN_REFERENCE_ADDITIONS},{NN_REFERENCE_MULTIPLICATIONS},{NN_REFERENCE_MEMORY}\n",
        format_db(NN_REFERENCE_CANCELLATION_DB)
    ));
    out.push_str(&format!(
        "csid,{},{csid_adds},{csid_mults},{csid_mem}\n",
        format_db(csid_nl)
    ));
    out.push_str(&format!(
        "savings_vs_poly_pct,,{},{},\n",
        saving(csid_adds, poly_adds),
        saving(csid_mults, poly_mults)
    ));
    out.push_str(&format!(
        "savings_vs_nn_pct,,{},{},\n",
        saving(csid_adds, NN_REFERENCE_ADDITIONS),
        saving(csid_mults, NN_REFERENCE_MULTIPLICATIONS)
    ));
    Ok(out)
}
