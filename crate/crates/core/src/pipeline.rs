//! End-to-end runs: inputs → augmented graph → factors → training → metrics,
//! plus the grid-search and noise-robustness protocols built on top.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    inject_edge_noise, inject_feature_noise, load_interactions, load_social_edges, split_dataset,
    FeatureMatrix, InteractionDataset, LoadOptions, Split, SplitRatios,
};
use crate::error::{Result, SscError};
use crate::eval::{evaluate, MetricsReport, DEFAULT_CUTOFFS};
use crate::filters::FilterSpec;
use crate::graph::{build_augmented_adjacency, sym_normalize, NormalizedAdjacency, SideConfig, SideInformation, SideMode};
use crate::spectral::{estimate_factors, make_shifted_operator, SscFactors, DEFAULT_POWER_ITERATIONS, DEFAULT_POWER_SEED};
use crate::train::{final_embeddings, train_loop, EmbeddingTable, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorMode {
    #[default]
    Manual,
    Estimated,
}

impl std::str::FromStr for FactorMode {
    type Err = SscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual" => Ok(FactorMode::Manual),
            "estimated" => Ok(FactorMode::Estimated),
            other => Err(SscError::InvalidParameter(format!("unknown factor mode `{other}`"))),
        }
    }
}

/// Input files. `splits` (a directory written by `prepare`) takes precedence
/// over `interactions`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interactions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splits: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub social: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_interactions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rating_threshold: Option<f64>,
}

/// Everything a run depends on. Serialized as the JSON run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataPaths,
    pub side: SideConfig,
    pub factor_mode: FactorMode,
    pub mu: Option<f64>,
    pub delta: Option<f64>,
    pub power_iterations: usize,
    pub filter: FilterSpec,
    pub train: TrainConfig,
    /// Split seed; training uses `train.seed`.
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            side: SideConfig::default(),
            factor_mode: FactorMode::Manual,
            mu: Some(0.0),
            delta: Some(1.0),
            power_iterations: DEFAULT_POWER_ITERATIONS,
            filter: FilterSpec::lightgcn(3),
            train: TrainConfig::default(),
            seed: 2024,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|_| SscError::MissingFile(path.to_path_buf()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.train.validate()?;
        if self.factor_mode == FactorMode::Manual && (self.mu.is_none() || self.delta.is_none()) {
            return Err(SscError::InvalidParameter("manual factor mode needs both mu and delta".into()));
        }
        if self.side.mode != SideMode::None && !(self.side.kappa >= 0.0) {
            return Err(SscError::InvalidParameter("kappa must be >= 0".into()));
        }
        Ok(())
    }

    pub fn load_options(&self) -> LoadOptions {
        let base = match self.side.mode {
            SideMode::Social => LoadOptions::social(),
            _ => LoadOptions::default(),
        };
        LoadOptions {
            min_interactions: self.data.min_interactions.unwrap_or(base.min_interactions),
            rating_threshold: self.data.rating_threshold.or(base.rating_threshold),
        }
    }

    /// Manual factors, or power-iteration estimates on `adj`.
    pub fn resolve_factors(&self, adj: &NormalizedAdjacency) -> Result<SscFactors> {
        match self.factor_mode {
            FactorMode::Manual => {
                let (Some(mu), Some(delta)) = (self.mu, self.delta) else {
                    return Err(SscError::InvalidParameter("manual factor mode needs both mu and delta".into()));
                };
                Ok(SscFactors::manual(mu, delta))
            }
            FactorMode::Estimated => Ok(estimate_factors(adj, self.power_iterations, DEFAULT_POWER_SEED)),
        }
    }
}

/// Loaded dataset and side information.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub dataset: InteractionDataset,
    pub side: SideInformation,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let dataset = if let Some(dir) = &cfg.data.splits {
        InteractionDataset::load_splits(dir)?
    } else if let Some(path) = &cfg.data.interactions {
        let raw = load_interactions(path, &cfg.load_options())?;
        split_dataset(&raw, SplitRatios::default(), cfg.seed)?
    } else {
        return Err(SscError::InvalidParameter("no interactions file or splits directory given".into()));
    };
    let social = match &cfg.data.social {
        Some(path) => Some(load_social_edges(path, &dataset)?.edges),
        None => None,
    };
    let features = cfg
        .data
        .features
        .iter()
        .map(FeatureMatrix::load)
        .collect::<Result<Vec<_>>>()?;
    Ok(Inputs {
        dataset,
        side: SideInformation { social, features },
    })
}

/// Normalized `Ã₊` over the training pairs.
pub fn build_adjacency(dataset: &InteractionDataset, side: &SideInformation, cfg: &SideConfig) -> Result<NormalizedAdjacency> {
    let plus = build_augmented_adjacency(&dataset.train, dataset.num_users, dataset.num_items, side, cfg)?;
    sym_normalize(&plus, dataset.num_users)
}

pub fn train_with_factors(
    dataset: &InteractionDataset,
    adj: &NormalizedAdjacency,
    factors: &SscFactors,
    filter: &FilterSpec,
    train: &TrainConfig,
) -> Result<TrainOutcome> {
    let op = make_shifted_operator(adj, factors.mu, factors.delta)?;
    train_loop(dataset, &op, filter, train)
}

pub fn final_embeddings_with(
    adj: &NormalizedAdjacency,
    factors: &SscFactors,
    filter: &FilterSpec,
    table: &EmbeddingTable,
) -> Result<ndarray::Array2<f64>> {
    let op = make_shifted_operator(adj, factors.mu, factors.delta)?;
    final_embeddings(&op, filter, table)
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub factors: SscFactors,
    pub outcome: TrainOutcome,
    pub val: MetricsReport,
    pub test: MetricsReport,
}

/// Builds the graph, resolves factors, trains, and evaluates the best
/// snapshot on validation and test.
pub fn run(dataset: &InteractionDataset, side: &SideInformation, cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let adj = build_adjacency(dataset, side, &cfg.side)?;
    let factors = cfg.resolve_factors(&adj)?;
    let outcome = train_with_factors(dataset, &adj, &factors, &cfg.filter, &cfg.train)?;
    let h = final_embeddings_with(&adj, &factors, &cfg.filter, &outcome.table)?;
    let val = evaluate(h.view(), dataset, Split::Val, &DEFAULT_CUTOFFS)?;
    let test = evaluate(h.view(), dataset, Split::Test, &DEFAULT_CUTOFFS)?;
    Ok(RunResult {
        factors,
        outcome,
        val,
        test,
    })
}

/// SHA-256 fingerprints of every input file and of the config itself.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub inputs: Vec<InputHash>,
    pub config_sha256: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|_| SscError::MissingFile(path.to_path_buf()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Result<Self> {
        let mut paths: Vec<PathBuf> = Vec::new();
        if let Some(dir) = &cfg.data.splits {
            paths.extend(["train.tsv", "val.tsv", "test.tsv", "id_map.json"].map(|f| dir.join(f)));
        } else if let Some(p) = &cfg.data.interactions {
            paths.push(p.clone());
        }
        paths.extend(cfg.data.social.iter().cloned());
        for f in &cfg.data.features {
            paths.push(f.clone());
            paths.push(FeatureMatrix::sidecar_path(f));
        }
        let inputs = paths
            .into_iter()
            .map(|path| Ok(InputHash { sha256: sha256_file(&path)?, path }))
            .collect::<Result<Vec<_>>>()?;
        let config_sha256 = hex::encode(Sha256::digest(serde_json::to_vec(cfg)?));
        Ok(Self {
            inputs,
            config_sha256,
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }
}

/// Trained embeddings with the metadata needed to rebuild the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub num_nodes: usize,
    pub dim: usize,
    pub epoch: usize,
    pub val_ndcg20: f64,
    pub factors: SscFactors,
    pub config: RunConfig,
    pub provenance: Provenance,
}

pub const CHECKPOINT_EMBEDDINGS: &str = "embeddings.bin";
pub const CHECKPOINT_META: &str = "checkpoint.json";

pub fn save_checkpoint(dir: impl AsRef<Path>, table: &EmbeddingTable, meta: &CheckpointMeta) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CHECKPOINT_EMBEDDINGS), table.to_bytes())?;
    fs::write(dir.join(CHECKPOINT_META), serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(EmbeddingTable, CheckpointMeta)> {
    let dir = dir.as_ref();
    let meta_path = dir.join(CHECKPOINT_META);
    let bin_path = dir.join(CHECKPOINT_EMBEDDINGS);
    let text = fs::read_to_string(&meta_path).map_err(|_| SscError::MissingFile(meta_path.clone()))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    let bytes = fs::read(&bin_path).map_err(|_| SscError::MissingFile(bin_path.clone()))?;
    let table = EmbeddingTable::from_bytes(meta.num_nodes, meta.dim, &bytes)?;
    Ok((table, meta))
}

/// `lo, lo + step, …, hi`, each value rounded to 9 decimals so grid
/// endpoints come out exact.
pub fn grid_range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kappas: Vec<f64>,
    pub mus: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl GridSpec {
    /// κ grid for the side mode, `μ ∈ [0, 0.4]` and `Δ ∈ [0.4, 1]` in steps of 0.05.
    pub fn for_mode(mode: SideMode) -> Self {
        let kappas = match mode {
            SideMode::Social => grid_range(0.0, 1.5, 0.25),
            SideMode::Multimodal | SideMode::Both => vec![0.0, 5.0, 10.0, 15.0, 20.0],
            SideMode::None => vec![0.0],
        };
        Self {
            kappas,
            mus: grid_range(0.0, 0.4, 0.05),
            deltas: grid_range(0.4, 1.0, 0.05),
        }
    }

    pub fn num_cells(&self) -> usize {
        self.kappas.len() * self.mus.len() * self.deltas.len()
    }

    /// The `(μ, Δ)` cells within `radius` of the estimate.
    pub fn around(&self, estimate: &SscFactors, radius: f64) -> Vec<(f64, f64)> {
        let near = |v: f64, c: f64| (v - c).abs() <= radius + 1e-9;
        let mus: Vec<f64> = self.mus.iter().copied().filter(|&m| near(m, estimate.mu)).collect();
        let deltas: Vec<f64> = self.deltas.iter().copied().filter(|&d| near(d, estimate.delta)).collect();
        mus.iter().flat_map(|&m| deltas.iter().map(move |&d| (m, d))).collect()
    }

    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.mus
            .iter()
            .flat_map(|&m| self.deltas.iter().map(move |&d| (m, d)))
            .collect()
    }
}

pub const AROUND_ESTIMATE_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub kappa: f64,
    pub mu: f64,
    pub delta: f64,
    pub best_epoch: usize,
    pub val_recall20: f64,
    pub val_ndcg20: f64,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    /// Index into `rows` of the selected cell.
    pub best: usize,
    /// Test metrics of the selected cell, computed once after the sweep.
    pub test: MetricsReport,
}

/// Trains every cell and selects by validation NDCG@20 (first cell wins ties).
/// Test metrics are computed only for the winner.
pub fn grid_search(
    dataset: &InteractionDataset,
    side: &SideInformation,
    cfg: &RunConfig,
    grid: &GridSpec,
    around_estimate: bool,
) -> Result<GridResult> {
    cfg.validate()?;
    let mut rows: Vec<GridRow> = Vec::new();
    let mut best: Option<(usize, EmbeddingTable)> = None;
    for &kappa in &grid.kappas {
        let side_cfg = cfg.side.with_kappa(kappa);
        let adj = build_adjacency(dataset, side, &side_cfg)?;
        let cells = if around_estimate {
            let estimate = estimate_factors(&adj, cfg.power_iterations, DEFAULT_POWER_SEED);
            let cells = grid.around(&estimate, AROUND_ESTIMATE_RADIUS);
            log::info!(
                "kappa {kappa}: estimated mu {:.4} delta {:.4}, {} cells",
                estimate.mu,
                estimate.delta,
                cells.len()
            );
            cells
        } else {
            grid.cells()
        };
        for (mu, delta) in cells {
            let factors = SscFactors::manual(mu, delta);
            let outcome = train_with_factors(dataset, &adj, &factors, &cfg.filter, &cfg.train)?;
            let h = final_embeddings_with(&adj, &factors, &cfg.filter, &outcome.table)?;
            let val = evaluate(h.view(), dataset, Split::Val, &DEFAULT_CUTOFFS)?;
            let row = GridRow {
                kappa,
                mu,
                delta,
                best_epoch: outcome.best_epoch,
                val_recall20: val.recall_at(20),
                val_ndcg20: val.ndcg_at(20),
            };
            log::debug!("{row:?}");
            if best.as_ref().is_none_or(|(b, _)| row.val_ndcg20 > rows[*b].val_ndcg20) {
                best = Some((rows.len(), outcome.table));
            }
            rows.push(row);
        }
    }
    let Some((best, table)) = best else {
        return Err(SscError::InvalidParameter("grid search has no cells".into()));
    };
    let winner = &rows[best];
    let adj = build_adjacency(dataset, side, &cfg.side.with_kappa(winner.kappa))?;
    let h = final_embeddings_with(&adj, &SscFactors::manual(winner.mu, winner.delta), &cfg.filter, &table)?;
    let test = evaluate(h.view(), dataset, Split::Test, &DEFAULT_CUTOFFS)?;
    Ok(GridResult { rows, best, test })
}

pub fn write_grid_csv(rows: &[GridRow], w: &mut impl Write) -> Result<()> {
    writeln!(w, "kappa,mu,delta,best_epoch,val_recall@20,val_ndcg@20")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.8},{:.8}",
            r.kappa, r.mu, r.delta, r.best_epoch, r.val_recall20, r.val_ndcg20
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// Gaussian noise on every modal feature matrix.
    Feature,
    /// Fake-edge replacement in the social graph.
    Edge,
}

impl std::str::FromStr for NoiseKind {
    type Err = SscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature" => Ok(NoiseKind::Feature),
            "edge" => Ok(NoiseKind::Edge),
            other => Err(SscError::InvalidParameter(format!("unknown noise kind `{other}`"))),
        }
    }
}

impl NoiseKind {
    /// `{0, 0.1, …, 0.5}` for features, `{0, 0.2, …, 1}` for edges.
    pub fn default_levels(self) -> Vec<f64> {
        match self {
            NoiseKind::Feature => grid_range(0.0, 0.5, 0.1),
            NoiseKind::Edge => grid_range(0.0, 1.0, 0.2),
        }
    }
}

pub fn perturb_side(side: &SideInformation, kind: NoiseKind, level: f64, seed: u64) -> Result<SideInformation> {
    match kind {
        NoiseKind::Feature => {
            if side.features.is_empty() {
                return Err(SscError::InvalidParameter("feature noise needs feature matrices".into()));
            }
            Ok(SideInformation {
                social: side.social.clone(),
                features: side
                    .features
                    .iter()
                    .enumerate()
                    .map(|(m, f)| inject_feature_noise(f, level, seed.wrapping_add(m as u64)))
                    .collect::<Result<_>>()?,
            })
        }
        NoiseKind::Edge => {
            let social = side
                .social
                .as_ref()
                .ok_or_else(|| SscError::InvalidParameter("edge noise needs a social graph".into()))?;
            Ok(SideInformation {
                social: Some(inject_edge_noise(social, level, seed)?),
                features: side.features.clone(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub level: f64,
    pub seed: u64,
    pub mu: f64,
    pub delta: f64,
    pub test: MetricsReport,
}

/// For every noise level and seed: perturb the side information, rebuild the
/// graph, retrain with the seed, and evaluate on test.
pub fn noise_experiment(
    dataset: &InteractionDataset,
    side: &SideInformation,
    cfg: &RunConfig,
    kind: NoiseKind,
    levels: &[f64],
    seeds: &[u64],
) -> Result<Vec<NoiseRecord>> {
    let mut records = Vec::new();
    for &level in levels {
        for &seed in seeds {
            let noisy = perturb_side(side, kind, level, seed)?;
            let mut run_cfg = cfg.clone();
            run_cfg.train.seed = seed;
            let result = run(dataset, &noisy, &run_cfg)?;
            log::info!("noise {level} seed {seed}: test ndcg@20 {:.5}", result.test.ndcg_at(20));
            records.push(NoiseRecord {
                level,
                seed,
                mu: result.factors.mu,
                delta: result.factors.delta,
                test: result.test,
            });
        }
    }
    Ok(records)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// One row per `(level, seed)`, then `mean` and `std` rows per level.
pub fn write_noise_csv(records: &[NoiseRecord], w: &mut impl Write) -> Result<()> {
    writeln!(w, "noise,seed,mu,delta,recall@10,recall@20,ndcg@10,ndcg@20")?;
    let metrics = |r: &NoiseRecord| [r.test.recall_at(10), r.test.recall_at(20), r.test.ndcg_at(10), r.test.ndcg_at(20)];
    for r in records {
        let m = metrics(r);
        writeln!(
            w,
            "{},{},{},{},{:.8},{:.8},{:.8},{:.8}",
            r.level, r.seed, r.mu, r.delta, m[0], m[1], m[2], m[3]
        )?;
    }
    let mut levels: Vec<f64> = records.iter().map(|r| r.level).collect();
    levels.dedup();
    for level in levels {
        let group: Vec<[f64; 4]> = records.iter().filter(|r| r.level == level).map(metrics).collect();
        let stats: Vec<(f64, f64)> = (0..4)
            .map(|k| mean_std(&group.iter().map(|m| m[k]).collect::<Vec<_>>()))
            .collect();
        for (label, pick) in [("mean", 0usize), ("std", 1)] {
            let v: Vec<f64> = stats.iter().map(|s| if pick == 0 { s.0 } else { s.1 }).collect();
            writeln!(w, "{level},{label},,,{:.8},{:.8},{:.8},{:.8}", v[0], v[1], v[2], v[3])?;
        }
    }
    Ok(())
}

/// Writes `contents` through a buffered file, creating parent directories.
pub fn write_file(path: impl AsRef<Path>, contents: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    contents(&mut w)?;
    w.flush()?;
    Ok(())
}
