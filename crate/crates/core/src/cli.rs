//! The `ssc` command line.
//!
//! Every run-shaped subcommand starts from `--config` (or the defaults) and
//! applies flag overrides on top. Exit codes: 0 ok, 1 runtime error, 2 usage
//! error (bad flags, missing input files or checkpoints, invalid parameters).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{FeatureMatrix, Split};
use crate::error::{Result, SscError};
use crate::eval::{evaluate, MetricsReport, DEFAULT_CUTOFFS};
use crate::filters::{FilterKind, FilterSpec};
use crate::graph::{GraphStats, SideMode, Similarity};
use crate::pipeline::{
    build_adjacency, final_embeddings_with, grid_search, load_checkpoint, load_inputs, noise_experiment, run,
    save_checkpoint, write_file, write_grid_csv, write_noise_csv, CheckpointMeta, FactorMode, GridSpec, NoiseKind,
    Provenance, RunConfig,
};
use crate::sparse::SparseMatrix;
use crate::spectral::{estimate_factors, spectrum_shift_report, write_spectrum_csv, DEFAULT_DENSE_CAP, DEFAULT_POWER_SEED};
use crate::synthetic::{generate, SyntheticConfig};
use crate::train::write_history_csv;

#[derive(Debug, Parser)]
#[command(name = "ssc", version, about = "Spectral collaborative filtering with spectrum shift correction")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and split the data, build the normalized augmented graph, and persist both.
    Prepare(RunArgs),
    /// Estimate the shifting and scaling factors by power iteration.
    EstimateFactors {
        #[command(flatten)]
        run: RunArgs,
        /// Store the estimates as `mu`/`delta` in the `--config` file.
        #[arg(long)]
        write: bool,
    },
    /// Train, keep the best validation snapshot, and report validation and test metrics.
    Train(RunArgs),
    /// Evaluate a checkpoint on a split.
    Evaluate(EvaluateArgs),
    /// Sweep κ, μ, Δ and select by validation NDCG@20.
    GridSearch {
        #[command(flatten)]
        run: RunArgs,
        /// Restrict μ and Δ to ±0.1 of the estimates for each κ.
        #[arg(long)]
        around_estimate: bool,
        #[arg(long, value_delimiter = ',')]
        kappas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        mus: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
    },
    /// Eigenvalues and test-graph importance for a κ sweep, as CSV.
    Spectrum {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        kappas: Option<Vec<f64>>,
        /// Largest graph decomposed densely.
        #[arg(long, default_value_t = DEFAULT_DENSE_CAP)]
        cap: usize,
    },
    /// Retrain under increasing side-information noise.
    NoiseExp {
        #[command(flatten)]
        run: RunArgs,
        /// `feature` or `edge`.
        #[arg(long, default_value = "feature")]
        noise: NoiseKind,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        /// Number of seeds per level, starting at the training seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Graph utilities.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Write a generated two-community dataset (interactions, social edges, features).
    Synth(SynthArgs),
}

#[derive(Debug, Subcommand)]
pub enum GraphCommand {
    /// Print size and degree statistics of a saved or freshly built graph.
    Info {
        /// A CSR container written by `prepare`.
        #[arg(long)]
        adjacency: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Also write the full JSON report here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub users: usize,
    #[arg(long, default_value_t = 300)]
    pub items: usize,
    #[arg(long, default_value_t = 15)]
    pub per_user: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

/// Flags mirroring [`RunConfig`]; each one overrides the config file.
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// JSON run config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub interactions: Option<PathBuf>,
    /// Directory with `train.tsv`, `val.tsv`, `test.tsv`, `id_map.json`.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long)]
    pub social: Option<PathBuf>,
    /// Feature binaries (JSON sidecar next to each); repeatable.
    #[arg(long = "features")]
    pub features: Vec<PathBuf>,
    #[arg(long)]
    pub min_interactions: Option<usize>,
    #[arg(long)]
    pub rating_threshold: Option<f64>,
    /// none | social | multimodal | both
    #[arg(long)]
    pub side_mode: Option<SideMode>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// κNN neighbours when the side mode is `both`.
    #[arg(long)]
    pub item_kappa: Option<usize>,
    /// inner-product | cosine
    #[arg(long)]
    pub similarity: Option<Similarity>,
    #[arg(long, value_delimiter = ',')]
    pub modality_weights: Option<Vec<f64>>,
    /// manual | estimated
    #[arg(long)]
    pub factor_mode: Option<FactorMode>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub power_iterations: Option<usize>,
    /// lightgcn | jgcf
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub jacobi_a: Option<f64>,
    #[arg(long)]
    pub jacobi_b: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// Split seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl RunArgs {
    /// The config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        if let Some(p) = &self.interactions {
            cfg.data.interactions = Some(p.clone());
            cfg.data.splits = None;
        }
        if self.splits.is_some() {
            cfg.data.splits = self.splits.clone();
        }
        if self.social.is_some() {
            cfg.data.social = self.social.clone();
        }
        if !self.features.is_empty() {
            cfg.data.features = self.features.clone();
        }
        if self.min_interactions.is_some() {
            cfg.data.min_interactions = self.min_interactions;
        }
        if self.rating_threshold.is_some() {
            cfg.data.rating_threshold = self.rating_threshold;
        }
        set(&mut cfg.side.mode, &self.side_mode);
        set(&mut cfg.side.kappa, &self.kappa);
        if self.item_kappa.is_some() {
            cfg.side.item_kappa = self.item_kappa;
        }
        set(&mut cfg.side.similarity, &self.similarity);
        set(&mut cfg.side.modality_weights, &self.modality_weights);
        set(&mut cfg.factor_mode, &self.factor_mode);
        if self.mu.is_some() {
            cfg.mu = self.mu;
        }
        if self.delta.is_some() {
            cfg.delta = self.delta;
        }
        set(&mut cfg.power_iterations, &self.power_iterations);

        let layers = self.layers.unwrap_or(cfg.filter.num_layers);
        let (old_a, old_b) = match cfg.filter.kind {
            FilterKind::Jgcf { a, b } => (a, b),
            FilterKind::LightGcn => (1.0, 1.0),
        };
        let kind = match self.filter.as_deref() {
            None => cfg.filter.kind,
            Some("lightgcn") => FilterKind::LightGcn,
            Some("jgcf") => FilterKind::Jgcf { a: old_a, b: old_b },
            Some(other) => return Err(SscError::InvalidParameter(format!("unknown filter `{other}`"))),
        };
        cfg.filter = match kind {
            FilterKind::LightGcn => FilterSpec::lightgcn(layers),
            FilterKind::Jgcf { a, b } => FilterSpec::jgcf(layers, self.jacobi_a.unwrap_or(a), self.jacobi_b.unwrap_or(b)),
        };

        set(&mut cfg.train.learning_rate, &self.lr);
        set(&mut cfg.train.batch_size, &self.batch_size);
        set(&mut cfg.train.dim, &self.dim);
        set(&mut cfg.train.epochs, &self.epochs);
        set(&mut cfg.train.patience, &self.patience);
        set(&mut cfg.train.l2, &self.l2);
        set(&mut cfg.seed, &self.seed);
        set(&mut cfg.train.seed, &self.train_seed);
        set(&mut cfg.output_dir, &self.output);
        Ok(())
    }
}

/// Parses `args` (program name first), runs the command, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    let mut stdout = std::io::stdout().lock();
    match execute(cli.command, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &SscError) -> i32 {
    match e {
        SscError::MissingFile(_) | SscError::InvalidParameter(_) => 2,
        _ => 1,
    }
}

fn json_line(out: &mut impl Write, value: &impl Serialize) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Metrics without the per-user breakdown.
#[derive(Serialize)]
struct Summary<'a> {
    split: Split,
    cutoffs: &'a [usize],
    recall: &'a [f64],
    ndcg: &'a [f64],
    num_users: usize,
}

impl<'a> From<&'a MetricsReport> for Summary<'a> {
    fn from(r: &'a MetricsReport) -> Self {
        Self {
            split: r.split,
            cutoffs: &r.cutoffs,
            recall: &r.recall,
            ndcg: &r.ndcg,
            num_users: r.num_users,
        }
    }
}

/// Persists the splits under `<output>/splits` and points the config at them.
fn pin_splits(cfg: &mut RunConfig, dataset: &crate::data::InteractionDataset) -> Result<()> {
    if cfg.data.splits.is_none() {
        let dir = cfg.output_dir.join("splits");
        dataset.save_splits(&dir)?;
        cfg.data.splits = Some(dir);
        cfg.data.interactions = None;
    }
    Ok(())
}

pub fn execute(command: Command, out: &mut impl Write) -> Result<()> {
    match command {
        Command::Prepare(args) => cmd_prepare(&args, out),
        Command::EstimateFactors { run, write } => cmd_estimate_factors(&run, write, out),
        Command::Train(args) => cmd_train(&args, out),
        Command::Evaluate(args) => cmd_evaluate(&args, out),
        Command::GridSearch {
            run,
            around_estimate,
            kappas,
            mus,
            deltas,
        } => {
            let cfg = run.resolve()?;
            let mut grid = GridSpec::for_mode(cfg.side.mode);
            if let Some(k) = kappas {
                grid.kappas = k;
            }
            if let Some(m) = mus {
                grid.mus = m;
            }
            if let Some(d) = deltas {
                grid.deltas = d;
            }
            cmd_grid_search(cfg, &grid, around_estimate, out)
        }
        Command::Spectrum { run, kappas, cap } => {
            let cfg = run.resolve()?;
            let kappas = kappas.unwrap_or_else(|| GridSpec::for_mode(cfg.side.mode).kappas);
            cmd_spectrum(&cfg, &kappas, cap, out)
        }
        Command::NoiseExp {
            run,
            noise,
            levels,
            seeds,
        } => {
            let cfg = run.resolve()?;
            let levels = levels.unwrap_or_else(|| noise.default_levels());
            let seeds: Vec<u64> = (0..seeds).map(|k| cfg.train.seed + k).collect();
            cmd_noise_exp(&cfg, noise, &levels, &seeds, out)
        }
        Command::Graph {
            command: GraphCommand::Info { adjacency, run },
        } => cmd_graph_info(adjacency.as_deref(), &run, out),
        Command::Synth(args) => cmd_synth(&args, out),
    }
}

pub fn cmd_prepare(args: &RunArgs, out: &mut impl Write) -> Result<()> {
    let mut cfg = args.resolve()?;
    let inputs = load_inputs(&cfg)?;
    let adj = build_adjacency(&inputs.dataset, &inputs.side, &cfg.side)?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let splits = dir.join("splits");
    inputs.dataset.save_splits(&splits)?;
    cfg.data.splits = Some(splits);
    cfg.data.interactions = None;
    adj.matrix.save(dir.join("adjacency.csr"))?;
    cfg.save(dir.join("run_config.json"))?;
    fs::write(dir.join("provenance.json"), serde_json::to_string_pretty(&Provenance::of(&cfg)?)? + "\n")?;
    let stats = GraphStats::of(&adj.matrix);
    writeln!(
        out,
        "users {} items {} train {} val {} test {}",
        inputs.dataset.num_users,
        inputs.dataset.num_items,
        inputs.dataset.train.len(),
        inputs.dataset.val.len(),
        inputs.dataset.test.len()
    )?;
    writeln!(out, "{stats}")?;
    Ok(())
}

pub fn cmd_estimate_factors(args: &RunArgs, write: bool, out: &mut impl Write) -> Result<()> {
    let mut cfg = args.resolve()?;
    let inputs = load_inputs(&cfg)?;
    let adj = build_adjacency(&inputs.dataset, &inputs.side, &cfg.side)?;
    let factors = estimate_factors(&adj, cfg.power_iterations, DEFAULT_POWER_SEED);
    json_line(out, &factors)?;
    if write {
        let Some(path) = &args.config else {
            return Err(SscError::InvalidParameter("--write needs --config".into()));
        };
        cfg.mu = Some(factors.mu);
        cfg.delta = Some(factors.delta);
        cfg.save(path)?;
    }
    Ok(())
}

pub fn cmd_train(args: &RunArgs, out: &mut impl Write) -> Result<()> {
    let mut cfg = args.resolve()?;
    let inputs = load_inputs(&cfg)?;
    pin_splits(&mut cfg, &inputs.dataset)?;
    let result = run(&inputs.dataset, &inputs.side, &cfg)?;
    let dir = cfg.output_dir.clone();
    let meta = CheckpointMeta {
        num_nodes: inputs.dataset.num_nodes(),
        dim: cfg.train.dim,
        epoch: result.outcome.best_epoch,
        val_ndcg20: result.outcome.best_val_ndcg20,
        factors: result.factors,
        provenance: Provenance::of(&cfg)?,
        config: cfg,
    };
    save_checkpoint(dir.join("checkpoint"), &result.outcome.table, &meta)?;
    write_file(dir.join("history.csv"), |w| write_history_csv(&result.outcome.history, w))?;
    let metrics = serde_json::json!({
        "val": Summary::from(&result.val),
        "test": Summary::from(&result.test),
        "factors": result.factors,
        "best_epoch": result.outcome.best_epoch,
        "provenance": meta.provenance,
    });
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)? + "\n")?;
    let tsv = format!(
        "{}\n{}\n{}\n",
        result.val.tsv_header(),
        result.val.tsv_line(),
        result.test.tsv_line()
    );
    fs::write(dir.join("metrics.tsv"), &tsv)?;
    write!(out, "{tsv}")?;
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut impl Write) -> Result<()> {
    let (table, meta) = load_checkpoint(&args.checkpoint)?;
    let inputs = load_inputs(&meta.config)?;
    if inputs.dataset.num_nodes() != meta.num_nodes {
        return Err(SscError::DimensionMismatch(format!(
            "checkpoint has {} nodes, dataset has {}",
            meta.num_nodes,
            inputs.dataset.num_nodes()
        )));
    }
    let adj = build_adjacency(&inputs.dataset, &inputs.side, &meta.config.side)?;
    let h = final_embeddings_with(&adj, &meta.factors, &meta.config.filter, &table)?;
    let report = evaluate(h.view(), &inputs.dataset, args.split, &DEFAULT_CUTOFFS)?;
    if let Some(path) = &args.output {
        write_file(path, |w| Ok(serde_json::to_writer_pretty(w, &report)?))?;
    }
    writeln!(out, "{}\n{}", report.tsv_header(), report.tsv_line())?;
    Ok(())
}

pub fn cmd_grid_search(cfg: RunConfig, grid: &GridSpec, around_estimate: bool, out: &mut impl Write) -> Result<()> {
    let inputs = load_inputs(&cfg)?;
    let result = grid_search(&inputs.dataset, &inputs.side, &cfg, grid, around_estimate)?;
    let dir = &cfg.output_dir;
    write_file(dir.join("grid.csv"), |w| write_grid_csv(&result.rows, w))?;
    let best = &result.rows[result.best];
    let summary = serde_json::json!({
        "best": best,
        "test": Summary::from(&result.test),
        "cells": result.rows.len(),
        "around_estimate": around_estimate,
        "provenance": Provenance::of(&cfg)?,
    });
    fs::write(dir.join("grid_best.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    json_line(out, &summary)
}

pub fn cmd_spectrum(cfg: &RunConfig, kappas: &[f64], cap: usize, out: &mut impl Write) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let reports = spectrum_shift_report(&inputs.dataset, &inputs.side, &cfg.side, kappas, cap)?;
    let path = cfg.output_dir.join("spectrum.csv");
    write_file(&path, |w| write_spectrum_csv(&reports, w))?;
    for r in &reports {
        writeln!(out, "kappa {}: lambda_min {:.6}", r.kappa, r.lambda_min())?;
    }
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

pub fn cmd_noise_exp(cfg: &RunConfig, kind: NoiseKind, levels: &[f64], seeds: &[u64], out: &mut impl Write) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let records = noise_experiment(&inputs.dataset, &inputs.side, cfg, kind, levels, seeds)?;
    let path = cfg.output_dir.join("noise.csv");
    write_file(&path, |w| write_noise_csv(&records, w))?;
    write_noise_csv(&records, out)
}

pub fn cmd_graph_info(adjacency: Option<&Path>, args: &RunArgs, out: &mut impl Write) -> Result<()> {
    let matrix = match adjacency {
        Some(path) => SparseMatrix::load(path)?,
        None => {
            let cfg = args.resolve()?;
            let inputs = load_inputs(&cfg)?;
            build_adjacency(&inputs.dataset, &inputs.side, &cfg.side)?.matrix
        }
    };
    writeln!(out, "{}", GraphStats::of(&matrix))?;
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs, out: &mut impl Write) -> Result<()> {
    let cfg = SyntheticConfig {
        num_users: args.users,
        num_items: args.items,
        interactions_per_user: args.per_user,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    let data = generate(&cfg)?;
    fs::create_dir_all(&args.out)?;
    let pairs = data.dataset.all_pairs();
    write_file(args.out.join("interactions.tsv"), |w| {
        for (u, i) in &pairs {
            writeln!(w, "u{u}\ti{i}")?;
        }
        Ok(())
    })?;
    // Feature rows follow the loader's first-appearance item order.
    let mut order = Vec::with_capacity(data.features.num_items);
    let mut seen = vec![false; data.features.num_items];
    for &(_, i) in &pairs {
        if !std::mem::replace(&mut seen[i], true) {
            order.push(i);
        }
    }
    let values = order.iter().flat_map(|&i| data.features.row(i).to_vec()).collect();
    let features = FeatureMatrix::new(data.features.modality.clone(), order.len(), data.features.dim, values)?;
    write_file(args.out.join("social.tsv"), |w| {
        for (a, b, _) in data.social.undirected() {
            writeln!(w, "u{a}\tu{b}")?;
        }
        Ok(())
    })?;
    features.save(args.out.join("features.bin"))?;
    let sidecar = FeatureMatrix::sidecar_path(&args.out.join("features.bin"));
    writeln!(
        out,
        "wrote {} interactions, {} social edges, features {}x{} ({})",
        pairs.len(),
        data.social.num_undirected(),
        features.num_items,
        features.dim,
        sidecar.display()
    )?;
    Ok(())
}
