//! BPR training of the embedding table through a fixed polynomial filter.
//!
//! The filter is linear in the embeddings, so for a symmetric operator the
//! gradient with respect to `E` is `g(op) · ∂L/∂H`: backpropagation costs one
//! more propagation.

use std::collections::HashSet;
use std::io::Write;

use ndarray::{Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{InteractionDataset, Pair, Split};
use crate::error::{Result, SscError};
use crate::eval::{evaluate, MetricsReport, DEFAULT_CUTOFFS};
use crate::filters::FilterSpec;
use crate::operator::LinearOperator;

pub const INIT_STD: f64 = 0.01;
pub const NEGATIVE_ATTEMPTS: usize = 1000;

/// Trainable `(|U|+|I|) × d` embeddings, users first.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub values: Array2<f32>,
}

impl EmbeddingTable {
    pub fn num_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.values.mapv(f64::from)
    }

    /// Raw little-endian f32 values, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_bytes(num_nodes: usize, dim: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != num_nodes * dim * 4 {
            return Err(SscError::DimensionMismatch(format!(
                "{} bytes for a {num_nodes}x{dim} f32 table",
                bytes.len()
            )));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            values: Array2::from_shape_vec((num_nodes, dim), values).expect("checked length"),
        })
    }
}

/// Gaussian initialization with standard deviation 0.01.
pub fn init_embeddings(num_nodes: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddingTable {
        values: Array2::from_shape_simple_fn((num_nodes, dim), || normal.sample(&mut rng) as f32),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Array2<f32>,
    pub second_moment: Array2<f32>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(shape: (usize, usize), learning_rate: f64) -> Self {
        Self {
            first_moment: Array2::zeros(shape),
            second_moment: Array2::zeros(shape),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected Adam update of `params` along `grad`.
    pub fn update(&mut self, params: &mut Array2<f32>, grad: &Array2<f64>) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.learning_rate;
        Zip::from(params)
            .and(&mut self.first_moment)
            .and(&mut self.second_moment)
            .and(grad)
            .for_each(|p, m, v, &g| {
                let m_new = b1 * f64::from(*m) + (1.0 - b1) * g;
                let v_new = b2 * f64::from(*v) + (1.0 - b2) * g * g;
                *m = m_new as f32;
                *v = v_new as f32;
                let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + eps);
                *p = (f64::from(*p) - update) as f32;
            });
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dim: usize,
    /// Upper bound on epochs.
    pub epochs: usize,
    /// Epochs without validation NDCG@20 improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 2048,
            dim: 64,
            epochs: 500,
            patience: 20,
            seed: 2024,
            l2: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.dim == 0 || self.epochs == 0 {
            return Err(SscError::InvalidParameter(
                "learning rate, batch size, dim and epochs must be positive".into(),
            ));
        }
        if !(self.l2 >= 0.0) {
            return Err(SscError::InvalidParameter("l2 weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// A BPR training example: user, observed item, sampled unobserved item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// Uniform positive-pair sampler with uniform rejection-sampled negatives.
#[derive(Debug, Clone)]
pub struct BprSampler {
    train: Vec<Pair>,
    positives: HashSet<Pair>,
    num_items: usize,
    rng: ChaCha8Rng,
}

impl BprSampler {
    pub fn new(dataset: &InteractionDataset, seed: u64) -> Result<Self> {
        if dataset.train.is_empty() {
            return Err(SscError::EmptySplit("train".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self {
            train: dataset.train.clone(),
            positives: dataset.train.iter().copied().collect(),
            num_items: dataset.num_items,
            rng,
        })
    }

    pub fn sample(&mut self, batch_size: usize) -> Result<Vec<Triple>> {
        (0..batch_size)
            .map(|_| {
                let (user, pos) = self.train[self.rng.gen_range(0..self.train.len())];
                for _ in 0..NEGATIVE_ATTEMPTS {
                    let neg = self.rng.gen_range(0..self.num_items);
                    if !self.positives.contains(&(user, neg)) {
                        return Ok(Triple { user, pos, neg });
                    }
                }
                Err(SscError::NegativeSamplingExhausted {
                    user,
                    attempts: NEGATIVE_ATTEMPTS,
                })
            })
            .collect()
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean BPR loss over `batch` and its gradient with respect to `embeddings`.
///
/// `loss = −mean log σ(h_uᵀh_{i⁺} − h_uᵀh_{i⁻}) + l2 · mean(‖e_u‖² + ‖e_{i⁺}‖² + ‖e_{i⁻}‖²)`
/// where `H = g(op) E`.
pub fn bpr_loss_and_gradient(
    op: &impl LinearOperator,
    filter: &FilterSpec,
    embeddings: ArrayView2<'_, f64>,
    batch: &[Triple],
    num_users: usize,
    l2: f64,
) -> Result<(f64, Array2<f64>)> {
    if batch.is_empty() {
        return Err(SscError::InvalidParameter("empty batch".into()));
    }
    let h = filter.propagate(op, embeddings)?;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad_h = Array2::<f64>::zeros(h.raw_dim());
    for t in batch {
        let (u, p, n) = (t.user, num_users + t.pos, num_users + t.neg);
        let hu = h.row(u);
        let (hp, hn) = (h.row(p), h.row(n));
        let margin = hu.dot(&hp) - hu.dot(&hn);
        loss += softplus(-margin);
        // d softplus(−x)/dx = −σ(−x)
        let g = -sigmoid(-margin) * scale;
        let diff = &hp - &hn;
        grad_h.row_mut(u).scaled_add(g, &diff);
        grad_h.row_mut(p).scaled_add(g, &hu);
        grad_h.row_mut(n).scaled_add(-g, &hu);
    }
    loss *= scale;

    let mut grad = filter.propagate(op, grad_h.view())?;
    if l2 > 0.0 {
        for t in batch {
            for node in [t.user, num_users + t.pos, num_users + t.neg] {
                let e = embeddings.row(node);
                loss += l2 * scale * e.dot(&e);
                grad.row_mut(node).scaled_add(2.0 * l2 * scale, &e);
            }
        }
    }
    Ok((loss, grad))
}

/// Computes the loss and gradient for `batch` and applies one Adam update.
pub fn bpr_step(
    table: &mut EmbeddingTable,
    adam: &mut AdamState,
    op: &impl LinearOperator,
    filter: &FilterSpec,
    batch: &[Triple],
    num_users: usize,
    l2: f64,
) -> Result<f64> {
    let e = table.to_f64();
    let (loss, grad) = bpr_loss_and_gradient(op, filter, e.view(), batch, num_users, l2)?;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(SscError::NonFiniteLoss {
            loss,
            step: adam.step + 1,
        });
    }
    adam.update(&mut table.values, &grad);
    Ok(loss)
}

/// Per-epoch record of the training loss and validation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub recall_10: f64,
    pub recall_20: f64,
    pub ndcg_10: f64,
    pub ndcg_20: f64,
}

impl EpochRecord {
    fn new(epoch: usize, loss: f64, report: &MetricsReport) -> Self {
        Self {
            epoch,
            loss,
            recall_10: report.recall_at(10),
            recall_20: report.recall_at(20),
            ndcg_10: report.ndcg_at(10),
            ndcg_20: report.ndcg_at(20),
        }
    }
}

pub fn write_history_csv(history: &[EpochRecord], w: &mut impl Write) -> Result<()> {
    writeln!(w, "epoch,loss,recall@10,recall@20,ndcg@10,ndcg@20")?;
    for r in history {
        writeln!(
            w,
            "{},{:.8},{:.8},{:.8},{:.8},{:.8}",
            r.epoch, r.loss, r.recall_10, r.recall_20, r.ndcg_10, r.ndcg_20
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the best validation NDCG@20.
    pub table: EmbeddingTable,
    pub best_epoch: usize,
    pub best_val_ndcg20: f64,
    pub history: Vec<EpochRecord>,
}

/// Final embeddings `H = g(op) E` for a table.
pub fn final_embeddings(
    op: &impl LinearOperator,
    filter: &FilterSpec,
    table: &EmbeddingTable,
) -> Result<Array2<f64>> {
    filter.propagate(op, table.to_f64().view())
}

/// Epochs of `⌈|train| / batch_size⌉` BPR steps with validation NDCG@20 early stopping.
pub fn train_loop(
    dataset: &InteractionDataset,
    op: &impl LinearOperator,
    filter: &FilterSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    filter.validate()?;
    if op.dim() != dataset.num_nodes() {
        return Err(SscError::DimensionMismatch(format!(
            "operator dimension {} for {} nodes",
            op.dim(),
            dataset.num_nodes()
        )));
    }
    let mut table = init_embeddings(dataset.num_nodes(), config.dim, config.seed);
    let mut adam = AdamState::new(table.values.dim(), config.learning_rate);
    let mut sampler = BprSampler::new(dataset, config.seed)?;
    let steps = dataset.train.len().div_ceil(config.batch_size);

    let mut history = Vec::new();
    let mut best = (table.clone(), 0usize, f64::NEG_INFINITY);
    let mut since_best = 0;
    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        for _ in 0..steps {
            let batch = sampler.sample(config.batch_size)?;
            loss_sum += bpr_step(&mut table, &mut adam, op, filter, &batch, dataset.num_users, config.l2)?;
        }
        let h = final_embeddings(op, filter, &table)?;
        let report = evaluate(h.view(), dataset, Split::Val, &DEFAULT_CUTOFFS)?;
        let record = EpochRecord::new(epoch, loss_sum / steps as f64, &report);
        log::debug!(
            "epoch {epoch}: loss {:.5} val ndcg@20 {:.5}",
            record.loss,
            record.ndcg_20
        );
        if record.ndcg_20 > best.2 {
            best = (table.clone(), epoch, record.ndcg_20);
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.push(record);
        if since_best >= config.patience {
            break;
        }
    }
    let (table, best_epoch, best_val_ndcg20) = best;
    Ok(TrainOutcome {
        table,
        best_epoch,
        best_val_ndcg20,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_bipartite, sym_normalize};

    #[test]
    fn init_is_deterministic_with_small_std() {
        let a = init_embeddings(100, 64, 9);
        assert_eq!(a, init_embeddings(100, 64, 9));
        assert_eq!(a.values.dim(), (100, 64));
        assert_ne!(a, init_embeddings(100, 64, 10));
        let big = init_embeddings(2000, 64, 1);
        let n = big.values.len() as f64;
        let mean = big.values.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = big.values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - INIT_STD).abs() < 0.1 * INIT_STD);
    }

    #[test]
    fn table_bytes_round_trip() {
        let t = init_embeddings(5, 3, 1);
        assert_eq!(EmbeddingTable::from_bytes(5, 3, &t.to_bytes()).unwrap(), t);
        assert!(EmbeddingTable::from_bytes(5, 4, &t.to_bytes()).is_err());
    }

    #[test]
    fn forced_negative() {
        let ds = InteractionDataset::from_pairs(1, 2, vec![(0, 0)]).unwrap();
        let mut s = BprSampler::new(&ds, 0).unwrap();
        assert!(s.sample(50).unwrap().iter().all(|t| *t == Triple { user: 0, pos: 0, neg: 1 }));
    }

    #[test]
    fn user_with_every_item_exhausts_negatives() {
        let ds = InteractionDataset::from_pairs(1, 2, vec![(0, 0), (0, 1)]).unwrap();
        let mut s = BprSampler::new(&ds, 0).unwrap();
        assert!(matches!(s.sample(1), Err(SscError::NegativeSamplingExhausted { .. })));
    }

    #[test]
    fn negatives_are_unobserved() {
        let pairs: Vec<Pair> = (0..20).flat_map(|u| (0..5).map(move |k| (u, (u * 3 + k) % 17))).collect();
        let ds = InteractionDataset::from_pairs(20, 17, pairs).unwrap();
        let train: HashSet<Pair> = ds.train.iter().copied().collect();
        let mut s = BprSampler::new(&ds, 4).unwrap();
        for t in s.sample(5000).unwrap() {
            assert!(train.contains(&(t.user, t.pos)));
            assert!(!train.contains(&(t.user, t.neg)));
        }
    }

    #[test]
    fn positive_pairs_are_uniform() {
        let pairs: Vec<Pair> = (0..10).map(|k| (k % 3, k)).collect();
        let ds = InteractionDataset::from_pairs(3, 12, pairs.clone()).unwrap();
        let mut s = BprSampler::new(&ds, 77).unwrap();
        let draws = 1_000_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..(draws / 10_000) {
            for t in s.sample(10_000).unwrap() {
                *counts.entry((t.user, t.pos)).or_insert(0usize) += 1;
            }
        }
        let expected = draws as f64 / 10.0;
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        for p in pairs {
            let c = counts[&p] as f64;
            assert!((c - expected).abs() < 3.0 * sigma, "{p:?}: {c}");
        }
    }

    fn toy() -> (InteractionDataset, crate::graph::NormalizedAdjacency) {
        let ds = InteractionDataset::from_pairs(3, 3, vec![(0, 0), (0, 1), (1, 1), (2, 2), (1, 2)]).unwrap();
        let adj = sym_normalize(&build_bipartite(&ds.train, 3, 3).unwrap(), 3).unwrap();
        (ds, adj)
    }

    #[test]
    fn zero_embeddings_give_log_two() {
        let (_, adj) = toy();
        let e = Array2::<f64>::zeros((6, 4));
        let batch = [Triple { user: 0, pos: 0, neg: 2 }, Triple { user: 1, pos: 1, neg: 0 }];
        let (loss, grad) =
            bpr_loss_and_gradient(&adj, &FilterSpec::lightgcn(2), e.view(), &batch, 3, 0.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicated_batch_keeps_mean_loss() {
        let (_, adj) = toy();
        let e = init_embeddings(6, 4, 3).to_f64() * 50.0;
        let batch = vec![Triple { user: 0, pos: 0, neg: 2 }, Triple { user: 2, pos: 2, neg: 1 }];
        let doubled: Vec<Triple> = batch.iter().chain(&batch).copied().collect();
        let f = FilterSpec::jgcf(2, 1.0, 1.0);
        let (a, ga) = bpr_loss_and_gradient(&adj, &f, e.view(), &batch, 3, 0.1).unwrap();
        let (b, gb) = bpr_loss_and_gradient(&adj, &f, e.view(), &doubled, 3, 0.1).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!((&ga - &gb).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = Array2::<f32>::zeros((1, 2));
        let mut adam = AdamState::new((1, 2), 0.01);
        adam.update(&mut p, &ndarray::array![[2.0, -0.5]]);
        assert!((p[[0, 0]] + 0.01).abs() < 1e-6);
        assert!((p[[0, 1]] - 0.01).abs() < 1e-6);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let (ds, adj) = toy();
        let mut table = init_embeddings(6, 2, 0);
        table.values[[0, 0]] = f32::INFINITY;
        let mut adam = AdamState::new((6, 2), 1e-3);
        let batch = [Triple { user: 0, pos: 0, neg: 2 }];
        let err = bpr_step(&mut table, &mut adam, &adj, &FilterSpec::lightgcn(1), &batch, ds.num_users, 0.0);
        assert!(matches!(err, Err(SscError::NonFiniteLoss { .. })));
    }

    #[test]
    fn history_csv_header() {
        let mut out = Vec::new();
        write_history_csv(&[], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "epoch,loss,recall@10,recall@20,ndcg@10,ndcg@20\n");
    }
}
