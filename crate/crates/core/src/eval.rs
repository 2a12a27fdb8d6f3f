//! Full-ranking Recall@N and NDCG@N with training items masked out.

use std::cmp::Ordering;

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{InteractionDataset, Split};
use crate::error::{Result, SscError};

pub const DEFAULT_CUTOFFS: [usize; 2] = [10, 20];

const USER_CHUNK: usize = 256;

/// Inner-product scores `h_uᵀ h_i` for the given users against every item.
/// Training items of each user are set to `−∞`.
///
/// `embeddings` holds users first, then items.
pub fn score_users(
    embeddings: ArrayView2<'_, f64>,
    num_users: usize,
    users: &[usize],
    train_items: &[Vec<usize>],
) -> Array2<f64> {
    let items = embeddings.slice(s![num_users.., ..]);
    let user_rows = Array2::from_shape_fn((users.len(), embeddings.ncols()), |(r, c)| {
        embeddings[[users[r], c]]
    });
    let mut scores = user_rows.dot(&items.t());
    for (r, &u) in users.iter().enumerate() {
        for &i in &train_items[u] {
            scores[[r, i]] = f64::NEG_INFINITY;
        }
    }
    scores
}

/// Indices of the `n` highest scores, best first; ties go to the smaller index.
pub fn rank_top_n(scores: ArrayView1<'_, f64>, n: usize) -> Vec<usize> {
    let order = |a: &usize, b: &usize| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let n = n.min(idx.len());
    if n == 0 {
        return Vec::new();
    }
    if n < idx.len() {
        idx.select_nth_unstable_by(n - 1, order);
        idx.truncate(n);
    }
    idx.sort_by(order);
    idx
}

/// `|top-N ∩ relevant| / |relevant|`. `relevant` must be sorted.
pub fn recall_at_n(ranked: &[usize], relevant: &[usize], n: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(n)
        .filter(|i| relevant.binary_search(i).is_ok())
        .count();
    hits as f64 / relevant.len() as f64
}

/// Binary-relevance NDCG with `1/log₂(rank+1)` discounts. `relevant` must be sorted.
pub fn ndcg_at_n(ranked: &[usize], relevant: &[usize], n: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..n.min(relevant.len()))
        .map(|r| 1.0 / ((r + 2) as f64).log2())
        .sum();
    dcg / idcg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user: usize,
    /// One entry per cutoff.
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
}

/// Macro-averaged metrics over users with a nonempty evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: Split,
    pub cutoffs: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub num_users: usize,
    pub per_user: Vec<UserMetrics>,
}

impl MetricsReport {
    fn position(&self, n: usize) -> usize {
        self.cutoffs
            .iter()
            .position(|&c| c == n)
            .unwrap_or_else(|| panic!("cutoff {n} was not evaluated"))
    }

    pub fn recall_at(&self, n: usize) -> f64 {
        self.recall[self.position(n)]
    }

    pub fn ndcg_at(&self, n: usize) -> f64 {
        self.ndcg[self.position(n)]
    }

    /// Header matching [`tsv_line`](Self::tsv_line).
    pub fn tsv_header(&self) -> String {
        let mut cols = vec!["split".to_string()];
        cols.extend(self.cutoffs.iter().map(|n| format!("recall@{n}")));
        cols.extend(self.cutoffs.iter().map(|n| format!("ndcg@{n}")));
        cols.join("\t")
    }

    pub fn tsv_line(&self) -> String {
        let mut cols = vec![self.split.to_string()];
        cols.extend(self.recall.iter().map(|v| format!("{v:.6}")));
        cols.extend(self.ndcg.iter().map(|v| format!("{v:.6}")));
        cols.join("\t")
    }
}

/// Ranks every item for every user holding pairs in `split` and averages
/// Recall@N and NDCG@N across those users.
pub fn evaluate(
    embeddings: ArrayView2<'_, f64>,
    dataset: &InteractionDataset,
    split: Split,
    cutoffs: &[usize],
) -> Result<MetricsReport> {
    if split == Split::Train {
        return Err(SscError::InvalidParameter(
            "training pairs are masked; evaluate on val or test".into(),
        ));
    }
    if dataset.split(split).is_empty() {
        return Err(SscError::EmptySplit(split.to_string()));
    }
    if embeddings.nrows() != dataset.num_nodes() {
        return Err(SscError::DimensionMismatch(format!(
            "{} embedding rows for {} nodes",
            embeddings.nrows(),
            dataset.num_nodes()
        )));
    }
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(SscError::InvalidParameter("cutoffs must be >= 1".into()));
    }
    let max_n = *cutoffs.iter().max().unwrap();
    let train_items = dataset.items_by_user(Split::Train);
    let relevant = dataset.items_by_user(split);
    let users: Vec<usize> = (0..dataset.num_users).filter(|&u| !relevant[u].is_empty()).collect();

    let mut per_user = Vec::with_capacity(users.len());
    for chunk in users.chunks(USER_CHUNK) {
        let scores = score_users(embeddings, dataset.num_users, chunk, &train_items);
        for (r, &u) in chunk.iter().enumerate() {
            let ranked = rank_top_n(scores.row(r), max_n);
            per_user.push(UserMetrics {
                user: u,
                recall: cutoffs.iter().map(|&n| recall_at_n(&ranked, &relevant[u], n)).collect(),
                ndcg: cutoffs.iter().map(|&n| ndcg_at_n(&ranked, &relevant[u], n)).collect(),
            });
        }
    }

    let count = per_user.len() as f64;
    let mean = |pick: fn(&UserMetrics) -> &Vec<f64>, k: usize| {
        per_user.iter().map(|m| pick(m)[k]).sum::<f64>() / count
    };
    Ok(MetricsReport {
        split,
        cutoffs: cutoffs.to_vec(),
        recall: (0..cutoffs.len()).map(|k| mean(|m| &m.recall, k)).collect(),
        ndcg: (0..cutoffs.len()).map(|k| mean(|m| &m.ndcg, k)).collect(),
        num_users: per_user.len(),
        per_user,
    })
}
