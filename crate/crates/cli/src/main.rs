//! `sicancel` — dataset generation, canceller training, grid sweeps, and
//! cost tables from the command line.
//!
//! Output files land where `--output` points unless `SICANCEL_OUT_DIR` is
//! set, in which case only the directory is overridden (the file name is
//! kept). Tabular results go to stdout when no output path is given, so
//! everything pipes.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use sicancel::complexity::{csid_cost, linear_cost, poly_cost, CancellerKind, CostReport};
use sicancel::csid::{train_csid, TrainConfig};
use sicancel::experiment::{
    load_source, report_comparison, run_grid, DataSource, ExperimentSpec, GridSpec,
    GRID_CSV_HEADER,
};
use sicancel::linear::fit_linear;
use sicancel::poly::fit_poly;
use sicancel::signal::{DatasetFormat, SiDataset};
use sicancel::synth::{generate_dataset, SynthConfig};

#[derive(Parser)]
#[command(name = "sicancel", version, about = "Digital self-interference cancellation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as tx/rx CSV (or raw f64).
    Synth(SynthArgs),
    /// Train one canceller configuration and print its result row.
    Fit(FitArgs),
    /// Run a parameter grid with validation-based selection.
    Grid(GridArgs),
    /// Train the polynomial and tensor cancellers and emit the side-by-side
    /// cost/cancellation table.
    Compare(CompareArgs),
    /// Closed-form per-sample cost of a canceller configuration.
    Cost {
        #[command(subcommand)]
        which: CostCommand,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// SynthConfig as JSON or TOML; defaults to the built-in ground truth.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    carriers: Option<usize>,
    #[arg(long)]
    oversampling: Option<usize>,
    #[arg(long)]
    symbols: Option<usize>,
    /// Noise level in dB relative to the clean channel output.
    #[arg(long, allow_negative_numbers = true)]
    noise_db: Option<f64>,
    /// Disable noise entirely.
    #[arg(long)]
    noiseless: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Destination file; `.csv` for text, anything else for raw f64.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CancellerArg {
    Linear,
    Poly,
    Csid,
}

impl From<CancellerArg> for CancellerKind {
    fn from(value: CancellerArg) -> Self {
        match value {
            CancellerArg::Linear => CancellerKind::Linear,
            CancellerArg::Poly => CancellerKind::Poly,
            CancellerArg::Csid => CancellerKind::Csid,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Dataset file (`.csv` or raw f64), split 80/10/10 on load.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    canceller: CancellerArg,
    /// Memory length L.
    #[arg(long, default_value_t = 2)]
    memory: usize,
    /// Polynomial order P (poly only).
    #[arg(long, default_value_t = 7)]
    order: usize,
    /// CPD rank F (csid only).
    #[arg(long, default_value_t = 4)]
    rank: usize,
    /// Quantization levels I (csid only).
    #[arg(long, default_value_t = 32)]
    levels: usize,
    #[arg(long, default_value_t = 1e-4)]
    mu: f64,
    #[arg(long, default_value_t = 1e-3)]
    rho: f64,
    #[arg(long, default_value_t = 50)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also save the trained model as JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Full experiment spec as JSON or TOML; flags below override fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Dataset file, overriding the spec's source.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Use the built-in synthetic ground truth as the dataset.
    #[arg(long)]
    synth_default: bool,
    #[arg(long, value_enum)]
    canceller: Option<CancellerArg>,
    /// Start from the reference tensor sweep (F 1..5, I 4..128, the
    /// standard mu/rho selection grids, L=2).
    #[arg(long)]
    default_sweep: bool,
    #[arg(long, value_delimiter = ',')]
    rank: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    memory: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Result CSV destination; stdout when neither this nor the spec
    /// names one.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Polynomial order for the poly column.
    #[arg(long, default_value_t = 7)]
    order: usize,
    /// Polynomial memory length.
    #[arg(long, default_value_t = 3)]
    poly_memory: usize,
    /// Tensor rank F.
    #[arg(long, default_value_t = 4)]
    rank: usize,
    /// Quantization levels I.
    #[arg(long, default_value_t = 32)]
    levels: usize,
    /// Tensor memory length.
    #[arg(long, default_value_t = 2)]
    memory: usize,
    /// Smoothness candidates for the tensor's validation selection.
    #[arg(long, value_delimiter = ',', default_value = "1e-6,1e-5,1e-4,1e-3")]
    mu: Vec<f64>,
    /// Ridge candidates for the tensor's validation selection.
    #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-3,1e-2,1e-1")]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    max_sweeps: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CostCommand {
    Linear {
        #[arg(long, default_value_t = 2)]
        memory: usize,
    },
    Poly {
        #[arg(long, default_value_t = 7)]
        order: usize,
        #[arg(long, default_value_t = 3)]
        memory: usize,
    },
    Csid {
        #[arg(long, default_value_t = 4)]
        rank: usize,
        #[arg(long, default_value_t = 2)]
        memory: usize,
        /// One value shared by every lag, or one value per lag.
        #[arg(long, value_delimiter = ',', default_value = "32")]
        levels: Vec<usize>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Synth(args) => cmd_synth(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Cost { which } => cmd_cost(which),
    }
}

/// `SICANCEL_OUT_DIR` redirects output files into one directory, keeping
/// file names; it never renames anything.
fn resolve_output(path: &Path) -> Result<PathBuf> {
    match std::env::var_os("SICANCEL_OUT_DIR") {
        Some(dir) if !dir.is_empty() => {
            let dir = PathBuf::from(dir);
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("creating output directory {}", dir.display()))?;
            let name = path
                .file_name()
                .with_context(|| format!("output path {} has no file name", path.display()))?;
            Ok(dir.join(name))
        }
        _ => Ok(path.to_path_buf()),
    }
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => serde_json::from_str(&text)
            .with_context(|| format!("parsing {} as JSON", path.display())),
        Some(ext) if ext.eq_ignore_ascii_case("toml") => toml::from_str(&text)
            .with_context(|| format!("parsing {} as TOML", path.display())),
        _ => bail!(
            "config {} needs a .json or .toml extension",
            path.display()
        ),
    }
}

fn write_or_print(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => {
            let path = resolve_output(path)?;
            std::fs::write(&path, text)
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut config: SynthConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => SynthConfig::default_truth(),
    };
    if let Some(n) = args.carriers {
        config.n_carriers = n;
    }
    if let Some(o) = args.oversampling {
        config.oversampling = o;
    }
    if let Some(s) = args.symbols {
        config.n_symbols = s;
    }
    if args.noiseless {
        config.noise_power_db = None;
    } else if let Some(db) = args.noise_db {
        config.noise_power_db = Some(db);
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }

    let (tx, rx) = generate_dataset(&config)?;
    let n = tx.len();
    let ds = SiDataset::new(tx, rx)?;
    let path = resolve_output(&args.output)?;
    ds.save(&path, DatasetFormat::from_path(&path))?;
    println!("wrote {n} samples to {}", path.display());
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let kind: CancellerKind = args.canceller.into();
    let grid = match kind {
        CancellerKind::Linear => GridSpec {
            memory: vec![args.memory],
            ..GridSpec::default()
        },
        CancellerKind::Poly => GridSpec {
            order: vec![args.order],
            memory: vec![args.memory],
            ..GridSpec::default()
        },
        CancellerKind::Csid => GridSpec {
            rank: vec![args.rank],
            levels: vec![args.levels],
            mu: vec![args.mu],
            rho: vec![args.rho],
            memory: vec![args.memory],
            ..GridSpec::default()
        },
    };
    let spec = ExperimentSpec {
        dataset: DataSource::File {
            path: args.dataset.clone(),
        },
        canceller: kind,
        grid,
        seed: args.seed,
        max_sweeps: args.max_sweeps,
        tol: args.tol,
        output: None,
    };
    let result = run_grid(&spec)?;
    let row = &result.rows[0];
    println!("{GRID_CSV_HEADER}");
    println!("{}", row.csv_row());

    if let Some(model_path) = &args.model_out {
        if row.test_total_db.map_or(true, f64::is_nan) {
            bail!("training failed; no model to save");
        }
        let ds = load_source(&spec.dataset)?;
        let train = ds.split.train.clone();
        let json = match kind {
            CancellerKind::Linear => fit_linear(&ds.tx, &ds.rx, train, args.memory)?.to_json(),
            CancellerKind::Poly => {
                fit_poly(&ds.tx, &ds.rx, train, args.order, args.memory)?.to_json()
            }
            CancellerKind::Csid => {
                let linear = fit_linear(&ds.tx, &ds.rx, train.clone(), args.memory)?;
                // Reproduce exactly the model behind the printed row: same
                // derived seed, same selected regularizers.
                let config = TrainConfig {
                    rank: args.rank,
                    levels: args.levels,
                    mu: row.mu.context("row has no selected mu")?,
                    rho: row.rho.context("row has no selected rho")?,
                    max_sweeps: args.max_sweeps,
                    tol: args.tol,
                    seed: row.seed.context("row has no seed")?,
                };
                let (model, _) = train_csid(&ds.tx, &ds.rx, train, &linear, &config)?;
                model.to_json()
            }
        };
        let path = resolve_output(model_path)?;
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote model to {}", path.display());
    }
    Ok(())
}

fn cmd_grid(args: GridArgs) -> Result<()> {
    let mut spec: ExperimentSpec = match &args.spec {
        Some(path) => load_config(path)?,
        None => {
            let canceller = args
                .canceller
                .context("without --spec, --canceller is required")?;
            let dataset = if args.synth_default {
                DataSource::Synth(SynthConfig::default_truth())
            } else {
                DataSource::File {
                    path: args
                        .dataset
                        .clone()
                        .context("without --spec, --dataset or --synth-default is required")?,
                }
            };
            ExperimentSpec {
                dataset,
                canceller: canceller.into(),
                grid: GridSpec::default(),
                seed: 0,
                max_sweeps: 50,
                tol: 1e-6,
                output: None,
            }
        }
    };
    if args.spec.is_some() {
        if let Some(path) = &args.dataset {
            spec.dataset = DataSource::File { path: path.clone() };
        } else if args.synth_default {
            spec.dataset = DataSource::Synth(SynthConfig::default_truth());
        }
        if let Some(c) = args.canceller {
            spec.canceller = c.into();
        }
    }
    if args.default_sweep {
        spec.grid = GridSpec::default_csid_sweep();
    }
    if let Some(v) = args.rank {
        spec.grid.rank = v;
    }
    if let Some(v) = args.levels {
        spec.grid.levels = v;
    }
    if let Some(v) = args.mu {
        spec.grid.mu = v;
    }
    if let Some(v) = args.rho {
        spec.grid.rho = v;
    }
    if let Some(v) = args.order {
        spec.grid.order = v;
    }
    if let Some(v) = args.memory {
        spec.grid.memory = v;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(s) = args.max_sweeps {
        spec.max_sweeps = s;
    }
    if let Some(t) = args.tol {
        spec.tol = t;
    }
    if let Some(path) = args.output {
        spec.output = Some(path);
    }

    let result = run_grid(&spec)?;
    write_or_print(&result.to_csv(), spec.output.as_deref())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let dataset = DataSource::File {
        path: args.dataset.clone(),
    };
    let poly_spec = ExperimentSpec {
        dataset: dataset.clone(),
        canceller: CancellerKind::Poly,
        grid: GridSpec {
            order: vec![args.order],
            memory: vec![args.poly_memory],
            ..GridSpec::default()
        },
        seed: args.seed,
        max_sweeps: args.max_sweeps,
        tol: 1e-6,
        output: None,
    };
    let csid_spec = ExperimentSpec {
        dataset,
        canceller: CancellerKind::Csid,
        grid: GridSpec {
            rank: vec![args.rank],
            levels: vec![args.levels],
            mu: args.mu.clone(),
            rho: args.rho.clone(),
            memory: vec![args.memory],
            ..GridSpec::default()
        },
        seed: args.seed,
        max_sweeps: args.max_sweeps,
        tol: 1e-6,
        output: None,
    };
    let poly_row = run_grid(&poly_spec)?.rows.remove(0);
    let csid_row = run_grid(&csid_spec)?.rows.remove(0);
    let table = report_comparison(&poly_row, &csid_row)?;
    write_or_print(&table, args.output.as_deref())
}

fn cmd_cost(which: CostCommand) -> Result<()> {
    let report: CostReport = match which {
        CostCommand::Linear { memory } => linear_cost(memory)?,
        CostCommand::Poly { order, memory } => poly_cost(order, memory)?,
        CostCommand::Csid {
            rank,
            memory,
            levels,
        } => {
            let per_lag = if levels.len() == memory {
                levels
            } else if levels.len() == 1 {
                vec![levels[0]; memory]
            } else {
                bail!(
                    "--levels needs one value or one per lag ({} given for L={})",
                    levels.len(),
                    memory
                );
            };
            csid_cost(rank, memory, &per_lag)?
        }
    };
    println!("{}", CostReport::CSV_HEADER);
    println!("{}", report.csv_row());
    Ok(())
}
