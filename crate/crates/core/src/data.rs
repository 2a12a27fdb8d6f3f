//! Loading, splitting, and perturbing interaction data and side information.
//!
//! On-disk formats:
//! - interactions: TSV `user \t item [\t rating]`, `#` comments ignored;
//! - social edges: TSV `user \t user`;
//! - modal features: raw little-endian f32 row-major binary with a JSON
//!   sidecar `{"rows": R, "cols": C, "modality": name}` next to it;
//! - splits: `train.tsv`, `val.tsv`, `test.tsv` of dense indices plus `id_map.json`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};

/// A `(user, item)` pair of dense indices.
pub type Pair = (usize, usize);

/// Implicit-feedback interactions with dense ids and a train/val/test split.
///
/// An unsplit dataset keeps every pair in `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub train: Vec<Pair>,
    pub val: Vec<Pair>,
    pub test: Vec<Pair>,
    /// External id of each dense user index.
    pub user_ids: Vec<String>,
    /// External id of each dense item index.
    pub item_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = SscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(SscError::InvalidParameter(format!("unknown split `{other}`"))),
        }
    }
}

impl InteractionDataset {
    /// Builds a dataset with anonymous ids `u0…`, `i0…` and every pair in train.
    pub fn from_pairs(num_users: usize, num_items: usize, pairs: Vec<Pair>) -> Result<Self> {
        let ds = Self {
            num_users,
            num_items,
            train: pairs,
            val: Vec::new(),
            test: Vec::new(),
            user_ids: (0..num_users).map(|u| format!("u{u}")).collect(),
            item_ids: (0..num_items).map(|i| format!("i{i}")).collect(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn split(&self, split: Split) -> &[Pair] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn all_pairs(&self) -> Vec<Pair> {
        let mut all: Vec<Pair> = self
            .train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .copied()
            .collect();
        all.sort_unstable();
        all
    }

    /// Items of each user in the given split, sorted ascending.
    pub fn items_by_user(&self, split: Split) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_users];
        for &(u, i) in self.split(split) {
            out[u].push(i);
        }
        out.iter_mut().for_each(|items| items.sort_unstable());
        out
    }

    pub fn user_index(&self) -> HashMap<&str, usize> {
        self.user_ids
            .iter()
            .enumerate()
            .map(|(k, id)| (id.as_str(), k))
            .collect()
    }

    /// Checks index bounds, duplicate pairs, and split disjointness.
    pub fn validate(&self) -> Result<()> {
        if self.user_ids.len() != self.num_users || self.item_ids.len() != self.num_items {
            return Err(SscError::DimensionMismatch(
                "id maps disagree with node counts".into(),
            ));
        }
        let mut seen = HashSet::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            for &(u, i) in self.split(split) {
                if u >= self.num_users || i >= self.num_items {
                    return Err(SscError::InvalidParameter(format!(
                        "pair ({u}, {i}) in {split} is out of range"
                    )));
                }
                if !seen.insert((u, i)) {
                    return Err(SscError::InvalidParameter(format!(
                        "pair ({u}, {i}) appears more than once"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes `train.tsv`, `val.tsv`, `test.tsv` and `id_map.json` into `dir`.
    pub fn save_splits(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for split in [Split::Train, Split::Val, Split::Test] {
            let mut w = BufWriter::new(File::create(dir.join(format!("{split}.tsv")))?);
            for &(u, i) in self.split(split) {
                writeln!(w, "{u}\t{i}")?;
            }
            w.flush()?;
        }
        let map = IdMap {
            num_users: self.num_users,
            num_items: self.num_items,
            users: self.user_ids.clone(),
            items: self.item_ids.clone(),
        };
        fs::write(dir.join("id_map.json"), serde_json::to_string_pretty(&map)?)?;
        Ok(())
    }

    pub fn load_splits(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let map_path = dir.join("id_map.json");
        if !map_path.exists() {
            return Err(SscError::MissingFile(map_path));
        }
        let map: IdMap = serde_json::from_str(&fs::read_to_string(&map_path)?)?;
        let read = |split: Split| -> Result<Vec<Pair>> {
            let path = dir.join(format!("{split}.tsv"));
            let file = File::open(&path).map_err(|_| SscError::MissingFile(path.clone()))?;
            let mut pairs = Vec::new();
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parse_err = |message: String| SscError::Parse {
                    path: path.display().to_string(),
                    line: n + 1,
                    message,
                };
                let mut fields = line.split('\t');
                let (Some(u), Some(i), None) = (fields.next(), fields.next(), fields.next()) else {
                    return Err(parse_err("expected `user \\t item`".into()));
                };
                let u = u.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
                let i = i.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
                pairs.push((u, i));
            }
            Ok(pairs)
        };
        let ds = Self {
            num_users: map.num_users,
            num_items: map.num_items,
            train: read(Split::Train)?,
            val: read(Split::Val)?,
            test: read(Split::Test)?,
            user_ids: map.users,
            item_ids: map.items,
        };
        ds.validate()?;
        Ok(ds)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IdMap {
    num_users: usize,
    num_items: usize,
    users: Vec<String>,
    items: Vec<String>,
}

/// Filtering applied while reading interactions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Users and items with fewer interactions are removed until none remain.
    pub min_interactions: usize,
    /// When a rating column is present, rows rated below this are dropped.
    pub rating_threshold: Option<f64>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            min_interactions: 5,
            rating_threshold: Some(4.0),
        }
    }
}

impl LoadOptions {
    /// Preprocessing for social datasets: 3-core, no rating column.
    pub fn social() -> Self {
        Self {
            min_interactions: 3,
            rating_threshold: None,
        }
    }
}

pub fn load_interactions(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<InteractionDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|_| SscError::MissingFile(path.to_path_buf()))?;
    parse_interactions(BufReader::new(file), &path.display().to_string(), opts)
}

/// Parses interaction TSV from any reader. `source` names the input in errors.
pub fn parse_interactions(
    reader: impl BufRead,
    source: &str,
    opts: &LoadOptions,
) -> Result<InteractionDataset> {
    let mut users = Interner::default();
    let mut items = Interner::default();
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();

    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| SscError::Parse {
            path: source.to_string(),
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) || fields[..2].iter().any(|f| f.is_empty()) {
            return Err(parse_err(format!(
                "expected `user \\t item [\\t rating]`, found {} fields",
                fields.len()
            )));
        }
        if let Some(raw) = fields.get(2) {
            let rating: f64 = raw
                .parse()
                .map_err(|_| parse_err(format!("rating `{raw}` is not a number")))?;
            if opts.rating_threshold.is_some_and(|t| rating < t) {
                continue;
            }
        }
        let pair = (users.intern(fields[0]), items.intern(fields[1]));
        if seen.insert(pair) {
            pairs.push(pair);
        }
    }

    let pairs = kcore_filter(pairs, opts.min_interactions);
    if pairs.is_empty() {
        return Err(SscError::EmptyDataset);
    }

    // Re-index survivors densely, keeping first-appearance order.
    let mut user_remap = vec![usize::MAX; users.names.len()];
    let mut item_remap = vec![usize::MAX; items.names.len()];
    let (mut user_ids, mut item_ids) = (Vec::new(), Vec::new());
    let mut train = Vec::with_capacity(pairs.len());
    for (u, i) in pairs {
        if user_remap[u] == usize::MAX {
            user_remap[u] = user_ids.len();
            user_ids.push(users.names[u].clone());
        }
        if item_remap[i] == usize::MAX {
            item_remap[i] = item_ids.len();
            item_ids.push(items.names[i].clone());
        }
        train.push((user_remap[u], item_remap[i]));
    }
    Ok(InteractionDataset {
        num_users: user_ids.len(),
        num_items: item_ids.len(),
        train,
        val: Vec::new(),
        test: Vec::new(),
        user_ids,
        item_ids,
    })
}

#[derive(Default)]
struct Interner {
    index: HashMap<String, usize>,
    names: Vec<String>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> usize {
        if let Some(&k) = self.index.get(name) {
            return k;
        }
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }
}

/// Repeatedly drops pairs whose user or item has fewer than `min` pairs,
/// until every remaining user and item has at least `min`. Order is preserved.
pub fn kcore_filter(mut pairs: Vec<Pair>, min: usize) -> Vec<Pair> {
    if min <= 1 {
        return pairs;
    }
    loop {
        let mut user_deg: HashMap<usize, usize> = HashMap::new();
        let mut item_deg: HashMap<usize, usize> = HashMap::new();
        for &(u, i) in &pairs {
            *user_deg.entry(u).or_default() += 1;
            *item_deg.entry(i).or_default() += 1;
        }
        let before = pairs.len();
        pairs.retain(|(u, i)| user_deg[u] >= min && item_deg[i] >= min);
        if pairs.len() == before {
            return pairs;
        }
    }
}

/// Fractions of each user's interactions assigned to train/val/test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// Per-user random split.
///
/// Each user's interactions are shuffled with a generator seeded by `seed`;
/// `⌊val·n⌋` go to validation, `⌊test·n⌋` to test, the remainder (at least
/// one) to train. Afterwards any item left without a training pair gets one
/// of its evaluation pairs moved back into train.
pub fn split_dataset(
    dataset: &InteractionDataset,
    ratios: SplitRatios,
    seed: u64,
) -> Result<InteractionDataset> {
    if [ratios.train, ratios.val, ratios.test].iter().any(|r| !(0.0..=1.0).contains(r))
        || (ratios.train + ratios.val + ratios.test - 1.0).abs() > 1e-9
    {
        return Err(SscError::InvalidParameter(format!(
            "split ratios {ratios:?} must be in [0, 1] and sum to 1"
        )));
    }
    let mut by_user = vec![Vec::new(); dataset.num_users];
    for (u, i) in dataset.all_pairs() {
        by_user[u].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (u, items) in by_user.iter_mut().enumerate() {
        let n = items.len();
        if n == 0 {
            continue;
        }
        items.shuffle(&mut rng);
        let (_, n_val, n_test) = split_sizes(n, ratios);
        val.extend(items[..n_val].iter().map(|&i| (u, i)));
        test.extend(items[n_val..n_val + n_test].iter().map(|&i| (u, i)));
        train.extend(items[n_val + n_test..].iter().map(|&i| (u, i)));
    }

    let mut covered = vec![false; dataset.num_items];
    train.iter().for_each(|&(_, i)| covered[i] = true);
    for held_out in [&mut val, &mut test] {
        held_out.retain(|&(u, i)| {
            if covered[i] {
                true
            } else {
                covered[i] = true;
                train.push((u, i));
                false
            }
        });
    }

    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(InteractionDataset {
        train,
        val,
        test,
        ..dataset.clone()
    })
}

/// `(train, val, test)` counts for a user with `n` interactions: val and
/// test get `⌊ratio · n⌋` each, train keeps the rest and at least one.
pub fn split_sizes(n: usize, ratios: SplitRatios) -> (usize, usize, usize) {
    if n == 0 {
        return (0, 0, 0);
    }
    let mut n_val = (ratios.val * n as f64 + 1e-9).floor() as usize;
    let mut n_test = (ratios.test * n as f64 + 1e-9).floor() as usize;
    while n_val + n_test > n - 1 {
        if n_val >= n_test {
            n_val -= 1;
        } else {
            n_test -= 1;
        }
    }
    (n - n_val - n_test, n_val, n_test)
}

/// A symmetric weighted graph stored as directed entries in both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeList {
    pub num_nodes: usize,
    /// `(i, j, w)` with `i ≠ j`, sorted, and `(j, i, w)` also present.
    pub edges: Vec<(usize, usize, f64)>,
}

impl EdgeList {
    /// Symmetrizes unit-weight pairs, dropping self-loops and duplicates.
    pub fn from_pairs(num_nodes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let undirected: BTreeSet<(usize, usize)> = pairs
            .into_iter()
            .filter(|(i, j)| i != j)
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
        Self::from_undirected(num_nodes, undirected.into_iter().map(|(i, j)| (i, j, 1.0)))
    }

    fn from_undirected(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut directed: Vec<_> = edges
            .into_iter()
            .flat_map(|(i, j, w)| [(i, j, w), (j, i, w)])
            .collect();
        directed.sort_by_key(|e| (e.0, e.1));
        Self {
            num_nodes,
            edges: directed,
        }
    }

    /// Edges with `i < j`.
    pub fn undirected(&self) -> Vec<(usize, usize, f64)> {
        self.edges.iter().copied().filter(|(i, j, _)| i < j).collect()
    }

    pub fn num_undirected(&self) -> usize {
        self.edges.iter().filter(|(i, j, _)| i < j).count()
    }

    pub fn is_symmetric(&self) -> bool {
        let set: HashMap<(usize, usize), f64> =
            self.edges.iter().map(|&(i, j, w)| ((i, j), w)).collect();
        set.len() == self.edges.len()
            && self
                .edges
                .iter()
                .all(|&(i, j, w)| i != j && w > 0.0 && set.get(&(j, i)) == Some(&w))
    }
}

/// Social edges resolved against a dataset's user map.
#[derive(Debug, Clone)]
pub struct SocialEdges {
    pub edges: EdgeList,
    /// Lines referring to users absent from the dataset.
    pub skipped: usize,
}

/// Reads `user \t user` lines, resolving ids through `dataset`'s user map.
/// Unknown users are skipped and counted.
pub fn load_social_edges(path: impl AsRef<Path>, dataset: &InteractionDataset) -> Result<SocialEdges> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|_| SscError::MissingFile(path.to_path_buf()))?;
    parse_social_edges(BufReader::new(file), &path.display().to_string(), dataset)
}

pub fn parse_social_edges(
    reader: impl BufRead,
    source: &str,
    dataset: &InteractionDataset,
) -> Result<SocialEdges> {
    let index = dataset.user_index();
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(SscError::Parse {
                path: source.to_string(),
                line: n + 1,
                message: "expected `user \\t user`".into(),
            });
        }
        match (index.get(fields[0]), index.get(fields[1])) {
            (Some(&a), Some(&b)) => pairs.push((a, b)),
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{source}: skipped {skipped} social edges with unknown users");
    }
    Ok(SocialEdges {
        edges: EdgeList::from_pairs(dataset.num_users, pairs),
        skipped,
    })
}

/// Dense per-item modal features, one row per item.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub modality: String,
    pub num_items: usize,
    pub dim: usize,
    pub values: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureSidecar {
    rows: usize,
    cols: usize,
    modality: String,
}

impl FeatureMatrix {
    pub fn new(modality: impl Into<String>, num_items: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != num_items * dim {
            return Err(SscError::DimensionMismatch(format!(
                "{} values for a {num_items}x{dim} feature matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SscError::InvalidParameter("non-finite feature value".into()));
        }
        Ok(Self {
            modality: modality.into(),
            num_items,
            dim,
            values,
        })
    }

    pub fn row(&self, item: usize) -> &[f32] {
        &self.values[item * self.dim..(item + 1) * self.dim]
    }

    /// Path of the JSON sidecar for a binary feature file.
    pub fn sidecar_path(bin: &Path) -> PathBuf {
        bin.with_extension("json")
    }

    pub fn save(&self, bin: impl AsRef<Path>) -> Result<()> {
        let bin = bin.as_ref();
        let mut w = BufWriter::new(File::create(bin)?);
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let sidecar = FeatureSidecar {
            rows: self.num_items,
            cols: self.dim,
            modality: self.modality.clone(),
        };
        fs::write(Self::sidecar_path(bin), serde_json::to_string(&sidecar)?)?;
        Ok(())
    }

    pub fn load(bin: impl AsRef<Path>) -> Result<Self> {
        let bin = bin.as_ref();
        let sidecar_path = Self::sidecar_path(bin);
        if !sidecar_path.exists() {
            return Err(SscError::MissingFile(sidecar_path));
        }
        let meta: FeatureSidecar = serde_json::from_str(&fs::read_to_string(&sidecar_path)?)?;
        let bytes = fs::read(bin).map_err(|_| SscError::MissingFile(bin.to_path_buf()))?;
        if bytes.len() != meta.rows * meta.cols * 4 {
            return Err(SscError::Format {
                path: bin.to_path_buf(),
                message: format!(
                    "{} bytes, expected {} for {}x{} f32",
                    bytes.len(),
                    meta.rows * meta.cols * 4,
                    meta.rows,
                    meta.cols
                ),
            });
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(meta.modality, meta.rows, meta.cols, values)
    }
}

/// Adds independent `N(0, delta²)` noise to every feature entry.
pub fn inject_feature_noise(features: &FeatureMatrix, delta: f64, seed: u64) -> Result<FeatureMatrix> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(SscError::InvalidParameter(format!("noise std {delta} must be >= 0")));
    }
    if delta == 0.0 {
        return Ok(features.clone());
    }
    let normal = Normal::new(0.0, delta).expect("validated std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = features
        .values
        .iter()
        .map(|&v| (v as f64 + normal.sample(&mut rng)) as f32)
        .collect();
    Ok(FeatureMatrix {
        values,
        ..features.clone()
    })
}

/// Replaces `⌊delta · m⌋` of the `m` undirected edges with uniformly drawn
/// fake edges (no self-loops, none coinciding with an original edge).
pub fn inject_edge_noise(graph: &EdgeList, delta: f64, seed: u64) -> Result<EdgeList> {
    inject_edge_noise_with(graph, delta, seed, true)
}

/// As [`inject_edge_noise`]; with `replace_originals = false` the selected
/// originals are kept and the fakes are added on top.
pub fn inject_edge_noise_with(
    graph: &EdgeList,
    delta: f64,
    seed: u64,
    replace_originals: bool,
) -> Result<EdgeList> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(SscError::InvalidParameter(format!("edge noise ratio {delta} outside [0, 1]")));
    }
    let originals = graph.undirected();
    let m = originals.len();
    let k = (delta * m as f64 + 1e-9).floor() as usize;
    if k == 0 {
        return Ok(graph.clone());
    }
    let n = graph.num_nodes;
    let total = n * n.saturating_sub(1) / 2;
    let available = total - m;
    if k > available {
        return Err(SscError::TooDense {
            requested: k,
            available,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut removed = index::sample(&mut rng, m, k).into_vec();
    removed.sort_unstable();
    let existing: HashSet<(usize, usize)> = originals.iter().map(|&(i, j, _)| (i, j)).collect();

    let fakes: Vec<(usize, usize)> = if available <= 8 * k || total <= 1 << 22 {
        let free: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|p| !existing.contains(p))
            .collect();
        index::sample(&mut rng, free.len(), k)
            .into_iter()
            .map(|t| free[t])
            .collect()
    } else {
        let mut chosen = Vec::with_capacity(k);
        let mut taken = HashSet::new();
        while chosen.len() < k {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let p = (a.min(b), a.max(b));
            if a != b && !existing.contains(&p) && taken.insert(p) {
                chosen.push(p);
            }
        }
        chosen
    };

    let mut kept: Vec<(usize, usize, f64)> = if replace_originals {
        let mut drop = removed.iter().peekable();
        originals
            .iter()
            .enumerate()
            .filter(|(t, _)| {
                if drop.peek() == Some(&t) {
                    drop.next();
                    false
                } else {
                    true
                }
            })
            .map(|(_, &e)| e)
            .collect()
    } else {
        originals.clone()
    };
    // Each fake inherits the weight of the edge it replaces.
    kept.extend(
        fakes
            .iter()
            .zip(&removed)
            .map(|(&(i, j), &t)| (i, j, originals[t].2)),
    );
    Ok(EdgeList::from_undirected(n, kept))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, min: usize) -> Result<InteractionDataset> {
        parse_interactions(
            text.as_bytes(),
            "test",
            &LoadOptions {
                min_interactions: min,
                rating_threshold: Some(4.0),
            },
        )
    }

    #[test]
    fn reads_three_pairs() {
        let ds = parse("a\tx\na\ty\nb\tx\n", 1).unwrap();
        assert_eq!((ds.num_users, ds.num_items), (2, 2));
        assert_eq!(ds.train, vec![(0, 0), (0, 1), (1, 0)]);
        assert_eq!(ds.user_ids, vec!["a", "b"]);
    }

    #[test]
    fn duplicates_collapse() {
        let ds = parse("a\tx\na\tx\n", 1).unwrap();
        assert_eq!(ds.train, vec![(0, 0)]);
    }

    #[test]
    fn comments_and_ratings() {
        let ds = parse("# header\na\tx\t5\na\ty\t3.5\nb\ty\t4.0\n", 1).unwrap();
        assert_eq!(ds.item_ids, vec!["x", "y"]);
        assert_eq!(ds.train, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse("a\tx\nbroken\n", 1) {
            Err(SscError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("a\tx\tfive\n", 1), Err(SscError::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_after_filter_is_an_error() {
        assert!(matches!(parse("a\tx\n", 3), Err(SscError::EmptyDataset)));
        assert!(matches!(parse("# nothing\n", 1), Err(SscError::EmptyDataset)));
    }

    /// Hand trace: users a,b each rate x,y,z; c rates x,w; d rates w.
    /// Round 1 (min 3): c (2) and d (1) go, and w (2 pairs) goes.
    /// Round 2: x,y,z have 2 pairs each from a,b -> all removed.
    /// With a third full user e the 3-core {a,b,e}×{x,y,z} survives.
    #[test]
    fn iterative_kcore_trace() {
        let base = "a\tx\na\ty\na\tz\nb\tx\nb\ty\nb\tz\nc\tx\nc\tw\nd\tw\n";
        assert!(matches!(parse(base, 3), Err(SscError::EmptyDataset)));

        let with_e = format!("{base}e\tx\ne\ty\ne\tz\n");
        let ds = parse(&with_e, 3).unwrap();
        assert_eq!(ds.user_ids, vec!["a", "b", "e"]);
        assert_eq!(ds.item_ids, vec!["x", "y", "z"]);
        assert_eq!(ds.train.len(), 9);
    }

    #[test]
    fn kcore_cascade_needs_several_rounds() {
        // Round 1 drops user 2 (2 pairs) and items 2, 3 (2 pairs each); every
        // surviving user is then left with 2 pairs, so round 2 empties the set.
        let pairs = vec![(0, 0), (0, 1), (0, 3), (1, 0), (1, 1), (1, 2), (2, 0), (2, 3), (3, 0), (3, 1), (3, 2)];
        assert!(kcore_filter(pairs.clone(), 3).is_empty());
        assert_eq!(kcore_filter(pairs.clone(), 2).len(), pairs.len());
    }

    fn dataset_with_counts(counts: &[usize], num_items: usize) -> InteractionDataset {
        let pairs = counts
            .iter()
            .enumerate()
            .flat_map(|(u, &c)| (0..c).map(move |i| (u, i)))
            .collect();
        InteractionDataset::from_pairs(counts.len(), num_items, pairs).unwrap()
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let r = SplitRatios::default();
        assert_eq!(split_sizes(10, r), (8, 1, 1));
        assert_eq!(split_sizes(1, r), (1, 0, 0));
        assert_eq!(split_sizes(9, r), (9, 0, 0));
        assert_eq!(split_sizes(25, r), (21, 2, 2));
        assert_eq!(split_sizes(2, SplitRatios { train: 0.0, val: 0.5, test: 0.5 }), (1, 0, 1));
    }

    #[test]
    fn split_ten_interactions_eight_one_one() {
        // Three users share the same ten items, so every item stays covered
        // by train and no held-out pair is moved back.
        let ds = dataset_with_counts(&[10, 10, 10], 10);
        let s = split_dataset(&ds, SplitRatios::default(), 1).unwrap();
        let count = |split: &[Pair], u| split.iter().filter(|p| p.0 == u).count();
        for u in 0..3 {
            assert_eq!((count(&s.train, u), count(&s.val, u), count(&s.test, u)), (8, 1, 1));
        }
    }

    #[test]
    fn split_single_interaction_goes_to_train() {
        let ds = dataset_with_counts(&[1, 10], 10);
        let s = split_dataset(&ds, SplitRatios::default(), 3).unwrap();
        assert!(s.train.contains(&(0, 0)));
        assert!(s.val.iter().chain(&s.test).all(|p| p.0 != 0));
    }

    #[test]
    fn split_is_deterministic_and_covers_items() {
        let ds = dataset_with_counts(&[10, 12, 7, 30], 30);
        let a = split_dataset(&ds, SplitRatios::default(), 99).unwrap();
        let b = split_dataset(&ds, SplitRatios::default(), 99).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let mut covered = vec![false; 30];
        a.train.iter().for_each(|&(_, i)| covered[i] = true);
        assert!(covered.iter().all(|&c| c));
        assert_eq!(a.all_pairs(), ds.all_pairs());
    }

    #[test]
    fn split_files_round_trip() {
        let ds = dataset_with_counts(&[10, 12, 7], 12);
        let s = split_dataset(&ds, SplitRatios::default(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.save_splits(dir.path()).unwrap();
        assert_eq!(InteractionDataset::load_splits(dir.path()).unwrap(), s);
    }

    fn social(text: &str) -> SocialEdges {
        let ds = parse("a\tx\nb\tx\nc\tx\n", 1).unwrap();
        parse_social_edges(text.as_bytes(), "social", &ds).unwrap()
    }

    #[test]
    fn social_edges_symmetrize() {
        let s = social("a\tb\n");
        assert_eq!(s.edges.edges, vec![(0, 1, 1.0), (1, 0, 1.0)]);
    }

    #[test]
    fn social_self_loops_dropped() {
        assert!(social("a\ta\n").edges.edges.is_empty());
    }

    #[test]
    fn social_duplicates_collapse() {
        assert_eq!(social("a\tb\nb\ta\na\tb\n").edges.edges.len(), 2);
    }

    #[test]
    fn social_unknown_users_are_counted() {
        let s = social("a\tzz\nb\tc\n");
        assert_eq!(s.skipped, 1);
        assert_eq!(s.edges.num_undirected(), 1);
    }

    fn features(n: usize, d: usize) -> FeatureMatrix {
        FeatureMatrix::new("visual", n, d, (0..n * d).map(|v| v as f32 * 0.5).collect()).unwrap()
    }

    #[test]
    fn feature_file_round_trip() {
        let f = features(4, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("visual.bin");
        f.save(&path).unwrap();
        let sidecar = fs::read_to_string(dir.path().join("visual.json")).unwrap();
        assert_eq!(sidecar, r#"{"rows":4,"cols":3,"modality":"visual"}"#);
        assert_eq!(FeatureMatrix::load(&path).unwrap(), f);
    }

    #[test]
    fn feature_file_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        features(4, 3).save(&path).unwrap();
        fs::write(&path, [0u8; 10]).unwrap();
        assert!(matches!(FeatureMatrix::load(&path), Err(SscError::Format { .. })));
    }

    #[test]
    fn zero_feature_noise_is_identity() {
        let f = features(5, 4);
        assert_eq!(inject_feature_noise(&f, 0.0, 1).unwrap(), f);
        assert!(inject_feature_noise(&f, -1.0, 1).is_err());
    }

    #[test]
    fn feature_noise_has_requested_std() {
        let f = FeatureMatrix::new("t", 1000, 1000, vec![0.25; 1_000_000]).unwrap();
        let noisy = inject_feature_noise(&f, 0.5, 11).unwrap();
        let diffs: Vec<f64> = noisy.values.iter().map(|&v| v as f64 - 0.25).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        assert!((var.sqrt() - 0.5).abs() < 0.005, "std {}", var.sqrt());
        assert_eq!(inject_feature_noise(&f, 0.5, 11).unwrap(), noisy);
    }

    fn path4() -> EdgeList {
        EdgeList::from_pairs(4, [(0, 1), (1, 2), (2, 3)])
    }

    #[test]
    fn zero_edge_noise_is_identity() {
        assert_eq!(inject_edge_noise(&path4(), 0.0, 3).unwrap(), path4());
    }

    #[test]
    fn full_edge_noise_on_path_replaces_every_edge() {
        // The 4-node path leaves exactly 3 free pairs: (0,2), (0,3), (1,3).
        let noisy = inject_edge_noise(&path4(), 1.0, 3).unwrap();
        assert!(noisy.is_symmetric());
        let mut got: Vec<_> = noisy.undirected().iter().map(|&(i, j, _)| (i, j)).collect();
        got.sort_unstable();
        assert_eq!(got, vec![(0, 2), (0, 3), (1, 3)]);
    }

    #[test]
    fn edge_noise_too_dense() {
        let complete = EdgeList::from_pairs(3, [(0, 1), (1, 2), (0, 2)]);
        assert!(matches!(
            inject_edge_noise(&complete, 1.0, 0),
            Err(SscError::TooDense { .. })
        ));
    }

    #[test]
    fn edge_noise_keep_originals_adds() {
        let g = EdgeList::from_pairs(10, [(0, 1), (2, 3), (4, 5), (6, 7)]);
        let noisy = inject_edge_noise_with(&g, 0.5, 1, false).unwrap();
        assert_eq!(noisy.num_undirected(), 6);
        assert!(g.undirected().iter().all(|e| noisy.undirected().contains(e)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn edge_noise_conserves_count_and_symmetry(
                pairs in proptest::collection::vec((0usize..30, 0usize..30), 0..80),
                delta in 0.0f64..=1.0,
                seed in any::<u64>(),
            ) {
                let g = EdgeList::from_pairs(30, pairs);
                let noisy = inject_edge_noise(&g, delta, seed).unwrap();
                prop_assert_eq!(noisy.num_undirected(), g.num_undirected());
                prop_assert!(noisy.is_symmetric());
            }

            #[test]
            fn split_partitions_pairs(
                counts in proptest::collection::vec(1usize..25, 1..12),
                seed in any::<u64>(),
            ) {
                let ds = dataset_with_counts(&counts, 25);
                let s = split_dataset(&ds, SplitRatios::default(), seed).unwrap();
                s.validate().unwrap();
                prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), ds.train.len());
                prop_assert_eq!(s.all_pairs(), ds.all_pairs());
                let train_users: HashSet<usize> = s.train.iter().map(|p| p.0).collect();
                prop_assert_eq!(train_users.len(), counts.len());
            }

            #[test]
            fn kcore_is_a_fixed_point(
                pairs in proptest::collection::vec((0usize..15, 0usize..15), 0..120),
                min in 1usize..5,
            ) {
                let mut pairs = pairs;
                pairs.sort_unstable();
                pairs.dedup();
                let once = kcore_filter(pairs, min);
                prop_assert_eq!(kcore_filter(once.clone(), min), once);
            }
        }
    }
}
