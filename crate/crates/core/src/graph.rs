//! Bipartite, side, and augmented graph assembly plus symmetric normalization.
//!
//! Node layout is always users first (`0..num_users`) then items
//! (`num_users..num_users + num_items`).

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{EdgeList, FeatureMatrix, Pair};
use crate::error::{Result, SscError};
use crate::operator::LinearOperator;
use crate::sparse::SparseMatrix;

/// The `(|U|+|I|)²` bipartite adjacency with `R` and `Rᵀ` in the off-diagonal blocks.
pub fn build_bipartite(train: &[Pair], num_users: usize, num_items: usize) -> Result<SparseMatrix> {
    let n = num_users + num_items;
    let mut triplets = Vec::with_capacity(2 * train.len());
    for &(u, i) in train {
        if u >= num_users || i >= num_items {
            return Err(SscError::InvalidParameter(format!(
                "pair ({u}, {i}) outside {num_users} users x {num_items} items"
            )));
        }
        triplets.push((u, num_users + i, 1.0));
        triplets.push((num_users + i, u, 1.0));
    }
    // Duplicate pairs would be summed; the dataset invariants exclude them.
    SparseMatrix::from_triplets(n, n, triplets)
}

/// `S_U(κ) = κ · S_U`. `κ = 0` gives a matrix with no stored entries.
pub fn rescale_social(edges: &EdgeList, kappa: f64) -> Result<SparseMatrix> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(SscError::InvalidParameter(format!("kappa {kappa} must be >= 0")));
    }
    let n = edges.num_nodes;
    if kappa == 0.0 {
        return Ok(SparseMatrix::zeros(n, n));
    }
    SparseMatrix::from_triplets(n, n, edges.edges.iter().map(|&(i, j, w)| (i, j, kappa * w)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    InnerProduct,
    Cosine,
}

impl std::str::FromStr for Similarity {
    type Err = SscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inner-product" | "inner_product" | "ip" => Ok(Similarity::InnerProduct),
            "cosine" => Ok(Similarity::Cosine),
            other => Err(SscError::InvalidParameter(format!("unknown similarity `{other}`"))),
        }
    }
}

/// κNN item–item graph construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    /// Neighbors kept per item.
    pub kappa: usize,
    /// One weight per modality; empty means uniform weights of 1.
    #[serde(default)]
    pub modality_weights: Vec<f64>,
    #[serde(default)]
    pub similarity: Similarity,
}

impl KnnConfig {
    pub fn new(kappa: usize) -> Self {
        Self {
            kappa,
            modality_weights: Vec::new(),
            similarity: Similarity::InnerProduct,
        }
    }
}

/// `S_I(κ) = (1/|M|) Σ_m w_m · S_m(κ)` where `S_m(κ)` links each item to
/// its κ most similar other items (ties by ascending index), symmetrized by
/// element-wise max.
pub fn build_knn_graph(features: &[FeatureMatrix], config: &KnnConfig) -> Result<SparseMatrix> {
    let Some(first) = features.first() else {
        return Err(SscError::InvalidParameter("no feature matrices given".into()));
    };
    let n = first.num_items;
    if features.iter().any(|f| f.num_items != n) {
        return Err(SscError::DimensionMismatch(
            "feature matrices disagree on item count".into(),
        ));
    }
    let weights = if config.modality_weights.is_empty() {
        vec![1.0; features.len()]
    } else {
        config.modality_weights.clone()
    };
    if weights.len() != features.len() {
        return Err(SscError::DimensionMismatch(format!(
            "{} modality weights for {} modalities",
            weights.len(),
            features.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(SscError::InvalidParameter("modality weights must be finite and >= 0".into()));
    }
    if config.kappa == 0 {
        return Ok(SparseMatrix::zeros(n, n));
    }
    if config.kappa >= n {
        return Err(SscError::InvalidParameter(format!(
            "kappa {} must be below the item count {n}",
            config.kappa
        )));
    }

    let scale = 1.0 / features.len() as f64;
    let mut triplets = Vec::new();
    for (f, &w) in features.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        let neighbors = top_k_neighbors(f, config.kappa, config.similarity)?;
        let mut directed: Vec<(usize, usize)> = neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().flat_map(move |&j| [(i, j), (j, i)]))
            .collect();
        directed.sort_unstable();
        directed.dedup();
        triplets.extend(directed.into_iter().map(|(i, j)| (i, j, scale * w)));
    }
    SparseMatrix::from_triplets(n, n, triplets)
}

/// Indices of the `k` most similar items to each item, excluding itself.
fn top_k_neighbors(f: &FeatureMatrix, k: usize, similarity: Similarity) -> Result<Vec<Vec<usize>>> {
    let n = f.num_items;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| f.row(i).iter().map(|&v| v as f64).collect())
        .collect();
    let norms: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();

    let mut out = Vec::with_capacity(n);
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        scored.clear();
        for j in (0..n).filter(|&j| j != i) {
            let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            let s = match similarity {
                Similarity::InnerProduct => dot,
                Similarity::Cosine => {
                    let denom = norms[i] * norms[j];
                    if denom > 0.0 {
                        dot / denom
                    } else {
                        0.0
                    }
                }
            };
            if s.is_nan() {
                return Err(SscError::NanSimilarity(i, j));
            }
            scored.push((s, j));
        }
        // Descending similarity, ascending index on ties.
        let order = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        let mut row: Vec<usize> = scored.iter().map(|&(_, j)| j).collect();
        row.sort_unstable();
        out.push(row);
    }
    Ok(out)
}

/// Places optional side graphs in the diagonal blocks of the bipartite adjacency:
/// `A₊ = [[S_U, R], [Rᵀ, S_I]]`.
pub fn assemble_augmented(
    bipartite: &SparseMatrix,
    num_users: usize,
    user_side: Option<&SparseMatrix>,
    item_side: Option<&SparseMatrix>,
) -> Result<SparseMatrix> {
    let n = bipartite.rows();
    if bipartite.cols() != n || num_users > n {
        return Err(SscError::DimensionMismatch(format!(
            "bipartite adjacency is {}x{} with {num_users} users",
            bipartite.rows(),
            bipartite.cols()
        )));
    }
    let num_items = n - num_users;
    let check = |m: &SparseMatrix, expected: usize, name: &str| {
        if m.rows() != expected || m.cols() != expected {
            Err(SscError::DimensionMismatch(format!(
                "{name} block is {}x{}, expected {expected}x{expected}",
                m.rows(),
                m.cols()
            )))
        } else {
            Ok(())
        }
    };
    if let Some(su) = user_side {
        check(su, num_users, "user-user")?;
    }
    if let Some(si) = item_side {
        check(si, num_items, "item-item")?;
    }
    if user_side.is_none_or(|m| m.nnz() == 0) && item_side.is_none_or(|m| m.nnz() == 0) {
        return Ok(bipartite.clone());
    }

    let mut triplets: Vec<(usize, usize, f64)> = bipartite.iter().collect();
    if let Some(su) = user_side {
        triplets.extend(su.iter());
    }
    if let Some(si) = item_side {
        triplets.extend(si.iter().map(|(r, c, v)| (r + num_users, c + num_users, v)));
    }
    SparseMatrix::from_triplets(n, n, triplets)
}

/// `D^{-1/2} A₊ D^{-1/2}` together with the degrees `D = diag(A₊ 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub matrix: SparseMatrix,
    pub degrees: Vec<f64>,
    pub num_users: usize,
    pub num_items: usize,
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.matrix.rows()
    }

    /// Nonzero degrees `D^{1/2} 1`, the eigenvector of eigenvalue 1.
    pub fn sqrt_degree_vector(&self) -> Vec<f64> {
        self.degrees.iter().map(|d| d.sqrt()).collect()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.matrix.to_dense()
    }
}

impl LinearOperator for NormalizedAdjacency {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec(x, y)
    }

    fn apply_block(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.matrix.spmm(x).expect("operator block dimension")
    }
}

/// Which side graphs enter the augmented adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideMode {
    #[default]
    None,
    Social,
    Multimodal,
    Both,
}

impl std::str::FromStr for SideMode {
    type Err = SscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SideMode::None),
            "social" => Ok(SideMode::Social),
            "multimodal" => Ok(SideMode::Multimodal),
            "both" => Ok(SideMode::Both),
            other => Err(SscError::InvalidParameter(format!("unknown side mode `{other}`"))),
        }
    }
}

/// Side-information settings: mode, intensity κ, and κNN options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideConfig {
    pub mode: SideMode,
    /// Social rescaling factor, or the κNN neighbor count in multimodal mode.
    pub kappa: f64,
    /// κNN neighbor count in `both` mode (defaults to `kappa`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_kappa: Option<usize>,
    #[serde(default)]
    pub similarity: Similarity,
    #[serde(default)]
    pub modality_weights: Vec<f64>,
}

impl Default for SideConfig {
    fn default() -> Self {
        Self {
            mode: SideMode::None,
            kappa: 0.0,
            item_kappa: None,
            similarity: Similarity::InnerProduct,
            modality_weights: Vec::new(),
        }
    }
}

impl SideConfig {
    pub fn new(mode: SideMode, kappa: f64) -> Self {
        Self {
            mode,
            kappa,
            ..Self::default()
        }
    }

    pub fn with_kappa(&self, kappa: f64) -> Self {
        Self {
            kappa,
            ..self.clone()
        }
    }

    fn knn_kappa(&self) -> Result<usize> {
        if let (SideMode::Both, Some(k)) = (self.mode, self.item_kappa) {
            return Ok(k);
        }
        if self.kappa < 0.0 || self.kappa.fract() != 0.0 {
            return Err(SscError::InvalidParameter(format!(
                "kNN kappa must be a nonnegative integer, got {}",
                self.kappa
            )));
        }
        Ok(self.kappa as usize)
    }

    fn knn_config(&self) -> Result<KnnConfig> {
        Ok(KnnConfig {
            kappa: self.knn_kappa()?,
            modality_weights: self.modality_weights.clone(),
            similarity: self.similarity,
        })
    }
}

/// Raw side information available to the graph builder.
#[derive(Debug, Clone, Default)]
pub struct SideInformation {
    pub social: Option<EdgeList>,
    pub features: Vec<FeatureMatrix>,
}

/// Builds `A₊` for the configured side mode and intensity. No side graph is
/// constructed when the mode is `none`.
pub fn build_augmented_adjacency(
    train: &[Pair],
    num_users: usize,
    num_items: usize,
    side: &SideInformation,
    config: &SideConfig,
) -> Result<SparseMatrix> {
    let bipartite = build_bipartite(train, num_users, num_items)?;
    let uses_social = matches!(config.mode, SideMode::Social | SideMode::Both);
    let uses_items = matches!(config.mode, SideMode::Multimodal | SideMode::Both);

    let user_side = if uses_social {
        let edges = side.social.as_ref().ok_or_else(|| {
            SscError::InvalidParameter("social side mode requires a social edge list".into())
        })?;
        if edges.num_nodes != num_users {
            return Err(SscError::DimensionMismatch(format!(
                "social graph has {} nodes for {num_users} users",
                edges.num_nodes
            )));
        }
        Some(rescale_social(edges, config.kappa)?)
    } else {
        None
    };
    let item_side = if uses_items {
        if side.features.is_empty() {
            return Err(SscError::InvalidParameter(
                "multimodal side mode requires feature matrices".into(),
            ));
        }
        if side.features[0].num_items != num_items {
            return Err(SscError::DimensionMismatch(format!(
                "features cover {} items, dataset has {num_items}",
                side.features[0].num_items
            )));
        }
        Some(build_knn_graph(&side.features, &config.knn_config()?)?)
    } else {
        None
    };
    assemble_augmented(&bipartite, num_users, user_side.as_ref(), item_side.as_ref())
}

/// Symmetric sqrt normalization. Zero-degree nodes keep all-zero rows and columns.
pub fn sym_normalize(adjacency: &SparseMatrix, num_users: usize) -> Result<NormalizedAdjacency> {
    let n = adjacency.rows();
    if adjacency.cols() != n || num_users > n {
        return Err(SscError::DimensionMismatch(format!(
            "cannot normalize a {}x{} matrix with {num_users} users",
            adjacency.rows(),
            adjacency.cols()
        )));
    }
    if let Some((row, col, value)) = adjacency.iter().find(|&(_, _, v)| v < 0.0) {
        return Err(SscError::NegativeWeight { row, col, value });
    }
    let degrees = adjacency.row_sums();
    let matrix = adjacency.map_values(|r, c, v| {
        let d = degrees[r] * degrees[c];
        if d > 0.0 {
            v / d.sqrt()
        } else {
            0.0
        }
    });
    Ok(NormalizedAdjacency {
        matrix,
        degrees,
        num_users,
        num_items: n - num_users,
    })
}

/// Summary statistics printed by `graph info` and `prepare`.
#[derive(Debug, Clone, Serialize)]
pub struct GraphStats {
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    pub min_degree: f64,
    pub max_degree: f64,
    pub mean_degree: f64,
    pub isolated_nodes: usize,
}

impl GraphStats {
    pub fn of(m: &SparseMatrix) -> Self {
        let degrees = m.row_sums();
        let n = degrees.len().max(1) as f64;
        Self {
            rows: m.rows(),
            cols: m.cols(),
            nnz: m.nnz(),
            min_degree: degrees.iter().copied().fold(f64::INFINITY, f64::min),
            max_degree: degrees.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_degree: degrees.iter().sum::<f64>() / n,
            isolated_nodes: (0..m.rows()).filter(|&r| m.row(r).0.is_empty()).count(),
        }
    }
}

impl std::fmt::Display for GraphStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{} nnz={} degree[min={:.4} max={:.4} mean={:.4}] isolated={}",
            self.rows,
            self.cols,
            self.nnz,
            self.min_degree,
            self.max_degree,
            self.mean_degree,
            self.isolated_nodes
        )
    }
}
