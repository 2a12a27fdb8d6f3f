//! Generated two-community datasets with informative item features and a
//! community-aligned social graph.
//!
//! Users and items carry latent vectors drawn around one of two community
//! centroids. Each user picks items by a Gumbel-top-n draw over
//! `β · w_uᵀ z_i`; item features are the latent vectors plus Gaussian noise,
//! padded with pure-noise dimensions.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{split_dataset, EdgeList, FeatureMatrix, InteractionDataset, Pair, SplitRatios};
use crate::error::{Result, SscError};
use crate::graph::SideInformation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub interactions_per_user: usize,
    pub latent_dim: usize,
    /// Distance of each community centroid from the origin.
    pub separation: f64,
    /// Spread of latent vectors around their centroid.
    pub spread: f64,
    /// Inverse temperature of item choice.
    pub sharpness: f64,
    /// Noise added to the latent part of the features.
    pub feature_noise: f64,
    /// Extra feature dimensions holding pure noise.
    pub noise_dims: usize,
    /// Social neighbours per user.
    pub social_degree: usize,
    /// Probability that a social edge stays inside the community.
    pub social_homophily: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_users: 200,
            num_items: 300,
            interactions_per_user: 15,
            latent_dim: 8,
            separation: 1.0,
            spread: 1.0,
            sharpness: 2.0,
            feature_noise: 0.5,
            noise_dims: 8,
            social_degree: 4,
            social_homophily: 0.9,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Split 8:1:1 with the config seed.
    pub dataset: InteractionDataset,
    pub features: FeatureMatrix,
    pub social: EdgeList,
    pub user_community: Vec<usize>,
    pub item_community: Vec<usize>,
}

impl SyntheticData {
    pub fn side_information(&self) -> SideInformation {
        SideInformation {
            social: Some(self.social.clone()),
            features: vec![self.features.clone()],
        }
    }
}

fn latent(rng: &mut ChaCha8Rng, community: usize, cfg: &SyntheticConfig) -> Vec<f64> {
    let normal = Normal::new(0.0, cfg.spread).expect("spread validated");
    let sign = if community == 0 { 1.0 } else { -1.0 };
    (0..cfg.latent_dim)
        .map(|k| normal.sample(rng) + if k == 0 { sign * cfg.separation } else { 0.0 })
        .collect()
}

fn gumbel(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    if cfg.num_users < 2 || cfg.num_items < 2 || cfg.latent_dim == 0 {
        return Err(SscError::InvalidParameter(
            "synthetic data needs at least 2 users, 2 items and 1 latent dimension".into(),
        ));
    }
    if cfg.interactions_per_user == 0 || cfg.interactions_per_user > cfg.num_items {
        return Err(SscError::InvalidParameter(format!(
            "interactions per user must lie in 1..={}",
            cfg.num_items
        )));
    }
    if !(cfg.spread > 0.0) || !(cfg.feature_noise >= 0.0) || !(0.0..=1.0).contains(&cfg.social_homophily) {
        return Err(SscError::InvalidParameter("invalid synthetic noise settings".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let user_community: Vec<usize> = (0..cfg.num_users).map(|u| u % 2).collect();
    let item_community: Vec<usize> = (0..cfg.num_items).map(|i| i % 2).collect();
    let users: Vec<Vec<f64>> = user_community.iter().map(|&c| latent(&mut rng, c, cfg)).collect();
    let items: Vec<Vec<f64>> = item_community.iter().map(|&c| latent(&mut rng, c, cfg)).collect();

    let mut pairs = BTreeSet::new();
    for (u, w) in users.iter().enumerate() {
        let mut keyed: Vec<(f64, usize)> = items
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let affinity: f64 = w.iter().zip(z).map(|(a, b)| a * b).sum();
                (cfg.sharpness * affinity + gumbel(&mut rng), i)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        pairs.extend(keyed[..cfg.interactions_per_user].iter().map(|&(_, i)| (u, i)));
    }
    let mut covered = vec![false; cfg.num_items];
    pairs.iter().for_each(|&(_, i)| covered[i] = true);
    for (i, _) in covered.iter().enumerate().filter(|(_, c)| !**c) {
        let same: Vec<usize> = (0..cfg.num_users).filter(|&u| user_community[u] == item_community[i]).collect();
        pairs.insert((same[rng.gen_range(0..same.len())], i));
    }

    let noise = Normal::new(0.0, cfg.feature_noise.max(f64::MIN_POSITIVE)).expect("validated");
    let dim = cfg.latent_dim + cfg.noise_dims;
    let mut values = Vec::with_capacity(cfg.num_items * dim);
    for z in &items {
        for k in 0..dim {
            let base = z.get(k).copied().unwrap_or(0.0);
            let eps = if cfg.feature_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            values.push((base + eps) as f32);
        }
    }
    let features = FeatureMatrix::new("latent", cfg.num_items, dim, values)?;

    let mut social_pairs: Vec<Pair> = Vec::new();
    for u in 0..cfg.num_users {
        for _ in 0..cfg.social_degree {
            let same = rng.gen_bool(cfg.social_homophily);
            let v = loop {
                let v = rng.gen_range(0..cfg.num_users);
                if v != u && (user_community[v] == user_community[u]) == same {
                    break v;
                }
            };
            social_pairs.push((u, v));
        }
    }
    let social = EdgeList::from_pairs(cfg.num_users, social_pairs);

    let unsplit = InteractionDataset::from_pairs(cfg.num_users, cfg.num_items, pairs.into_iter().collect())?;
    let dataset = split_dataset(&unsplit, SplitRatios::default(), cfg.seed)?;
    Ok(SyntheticData {
        dataset,
        features,
        social,
        user_community,
        item_community,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.features, b.features);
        assert_eq!(a.features.num_items, cfg.num_items);
        assert_eq!(a.features.dim, cfg.latent_dim + cfg.noise_dims);
        a.dataset.validate().unwrap();
        assert!(a.social.is_symmetric());
        assert_eq!(a.dataset.all_pairs().len(), a.dataset.train.len() + a.dataset.val.len() + a.dataset.test.len());
    }

    #[test]
    fn interactions_follow_communities() {
        let data = generate(&SyntheticConfig::default()).unwrap();
        let pairs = data.dataset.all_pairs();
        let inside = pairs
            .iter()
            .filter(|&&(u, i)| data.user_community[u] == data.item_community[i])
            .count();
        assert!(inside as f64 > 0.7 * pairs.len() as f64, "{inside}/{}", pairs.len());
    }

    #[test]
    fn rejects_impossible_density() {
        let cfg = SyntheticConfig {
            interactions_per_user: 1000,
            ..SyntheticConfig::default()
        };
        assert!(generate(&cfg).is_err());
    }
}
