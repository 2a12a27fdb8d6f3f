//! Fixture builders and oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssc::data::{EdgeList, InteractionDataset, Pair, Split};
use ssc::filters::{jacobi_values, FilterSpec};
use ssc::operator::LinearOperator;
use ssc::train::{bpr_loss_and_gradient, Triple};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A connected bipartite pair set: a random spanning tree plus `extra` random pairs.
pub fn connected_bipartite(num_users: usize, num_items: usize, extra: usize, rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let mut pairs = BTreeSet::from([(0, 0)]);
    let mut nodes: Vec<(bool, usize)> = (1..num_users)
        .map(|u| (true, u))
        .chain((1..num_items).map(|i| (false, i)))
        .collect();
    nodes.shuffle(rng);
    let (mut users, mut items) = (vec![0], vec![0]);
    for (is_user, k) in nodes {
        if is_user {
            pairs.insert((k, items[rng.gen_range(0..items.len())]));
            users.push(k);
        } else {
            pairs.insert((users[rng.gen_range(0..users.len())], k));
            items.push(k);
        }
    }
    for _ in 0..extra {
        pairs.insert((rng.gen_range(0..num_users), rng.gen_range(0..num_items)));
    }
    pairs.into_iter().collect()
}

/// A social graph in which every user has at least one neighbour.
pub fn covering_social(num_users: usize, extra: usize, rng: &mut ChaCha8Rng) -> EdgeList {
    let mut pairs: Vec<Pair> = (0..num_users).map(|u| (u, (u + 1) % num_users)).collect();
    for _ in 0..extra {
        pairs.push((rng.gen_range(0..num_users), rng.gen_range(0..num_users)));
    }
    EdgeList::from_pairs(num_users, pairs)
}

/// A split dataset over `pairs` that puts roughly a fifth of each user's
/// pairs into val and test.
pub fn toy_split(num_users: usize, num_items: usize, pairs: Vec<Pair>, seed: u64) -> InteractionDataset {
    let ds = InteractionDataset::from_pairs(num_users, num_items, pairs).unwrap();
    ssc::data::split_dataset(
        &ds,
        ssc::data::SplitRatios {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        },
        seed,
    )
    .unwrap()
}

/// Recall@N and NDCG@N by sorting every unseen item of every user.
pub fn brute_force_metrics(h: ArrayView2<'_, f64>, ds: &InteractionDataset, split: Split, n: usize) -> (f64, f64) {
    let train = ds.items_by_user(Split::Train);
    let relevant = ds.items_by_user(split);
    let (mut recall, mut ndcg, mut users) = (0.0, 0.0, 0usize);
    for u in 0..ds.num_users {
        if relevant[u].is_empty() {
            continue;
        }
        let mut ranked: Vec<(f64, usize)> = (0..ds.num_items)
            .filter(|i| !train[u].contains(i))
            .map(|i| (h.row(u).dot(&h.row(ds.num_users + i)), i))
            .collect();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let top: Vec<usize> = ranked.iter().take(n).map(|&(_, i)| i).collect();
        let hits = top.iter().filter(|i| relevant[u].contains(i)).count();
        recall += hits as f64 / relevant[u].len() as f64;
        let mut dcg = 0.0;
        for (rank, i) in top.iter().enumerate() {
            if relevant[u].contains(i) {
                dcg += 1.0 / (rank as f64 + 2.0).log2();
            }
        }
        let ideal: f64 = (0..relevant[u].len().min(n)).map(|r| 1.0 / (r as f64 + 2.0).log2()).sum();
        ndcg += dcg / ideal;
        users += 1;
    }
    (recall / users as f64, ndcg / users as f64)
}

/// Largest entrywise relative error between the analytic BPR gradient and
/// central finite differences with step `h`.
pub fn gradient_check(
    op: &impl LinearOperator,
    filter: &FilterSpec,
    e: &Array2<f64>,
    batch: &[Triple],
    num_users: usize,
    l2: f64,
    h: f64,
) -> f64 {
    let (_, grad) = bpr_loss_and_gradient(op, filter, e.view(), batch, num_users, l2).unwrap();
    let mut worst: f64 = 0.0;
    for idx in ndarray::indices(e.dim()) {
        let mut plus = e.clone();
        plus[idx] += h;
        let mut minus = e.clone();
        minus[idx] -= h;
        let lp = bpr_loss_and_gradient(op, filter, plus.view(), batch, num_users, l2).unwrap().0;
        let lm = bpr_loss_and_gradient(op, filter, minus.view(), batch, num_users, l2).unwrap().0;
        let fd = (lp - lm) / (2.0 * h);
        let a = grad[idx];
        let scale = a.abs().max(fd.abs()).max(1e-6);
        worst = worst.max((a - fd).abs() / scale);
    }
    worst
}

/// Nodes and weights of n-point Gauss–Legendre quadrature via Newton on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|k| {
            let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let jf = j as f64;
                    let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// `∫₋₁¹ P_j P_k (1−λ)^a (1+λ)^b dλ` with `λ = cos θ`, which turns the
/// weight into `2^{a+b+1} sin^{2a+1}(θ/2) cos^{2b+1}(θ/2)`, smooth on `[0, π]`.
pub fn jacobi_inner(a: f64, b: f64, j: usize, k: usize) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    gauss_legendre(64)
        .into_iter()
        .map(|(t, w)| {
            let theta = half_pi * (t + 1.0);
            let p = jacobi_values(a, b, j.max(k), theta.cos());
            let weight = 2f64.powf(a + b + 1.0)
                * (theta / 2.0).sin().powf(2.0 * a + 1.0)
                * (theta / 2.0).cos().powf(2.0 * b + 1.0);
            half_pi * w * weight * p[j] * p[k]
        })
        .sum()
}

