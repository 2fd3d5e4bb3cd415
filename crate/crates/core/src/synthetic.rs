//! Clustered synthetic catalogue where co-interacted items share content.
//!
//! Item `i` belongs to cluster `i % clusters` and user `u` to cluster
//! `u % clusters`. Each user picks distinct items, each pick landing in the
//! user's own cluster with probability 0.9 and anywhere else otherwise.
//! Item features are the cluster centroid (standard normal per coordinate)
//! plus isotropic Gaussian noise, rounded to `f32` precision so they
//! survive a trip through the feature file format unchanged.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::eval::Dataset;
use crate::features::{FeatureBundle, ModalityFeatureSet};
use crate::graph::InteractionMatrix;
use crate::rng;

/// Share of each user's interactions that fall inside the user's cluster.
pub const IN_CLUSTER_PROBABILITY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub num_clusters: usize,
    pub interactions_per_user: usize,
    /// `(label, dimension)` per modality.
    pub modalities: Vec<(String, usize)>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Labels `visual`, `textual`, `audio`, then `modality<k>`.
    pub fn default_labels(dims: &[usize]) -> Vec<(String, usize)> {
        const NAMES: [&str; 3] = ["visual", "textual", "audio"];
        dims.iter()
            .enumerate()
            .map(|(k, &d)| {
                let label = NAMES
                    .get(k)
                    .map_or_else(|| format!("modality{k}"), |s| s.to_string());
                (label, d)
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.num_items == 0 || self.num_users == 0 {
            return Err(Error::param("size", "need at least one user and one item"));
        }
        if self.num_clusters == 0 || self.num_clusters > self.num_items {
            return Err(Error::param(
                "clusters",
                format!(
                    "{} clusters for {} items",
                    self.num_clusters, self.num_items
                ),
            ));
        }
        if self.interactions_per_user == 0 || self.interactions_per_user > self.num_items {
            return Err(Error::param(
                "interactions_per_user",
                format!("must be in 1..={}", self.num_items),
            ));
        }
        if self.modalities.is_empty() || self.modalities.iter().any(|(_, d)| *d == 0) {
            return Err(Error::param(
                "dims",
                "need at least one modality of positive dimension",
            ));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::param(
                "noise_sigma",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let clusters = spec.num_clusters;
    let members: Vec<Vec<usize>> = (0..clusters)
        .map(|c| (c..spec.num_items).step_by(clusters).collect())
        .collect();

    let mut rng = rng::seeded(spec.seed);
    let mut histories = Vec::with_capacity(spec.num_users);
    for u in 0..spec.num_users {
        let own = &members[u % clusters];
        let mut chosen = vec![false; spec.num_items];
        let mut items = Vec::with_capacity(spec.interactions_per_user);
        while items.len() < spec.interactions_per_user {
            let own_free = own.iter().filter(|&&i| !chosen[i]).count();
            let chosen_own = own.len() - own_free;
            let other_free = (spec.num_items - own.len()) - (items.len() - chosen_own);
            let (own_left, other_left) = (own_free > 0, other_free > 0);
            let inside = if own_left && other_left {
                rng.random_bool(IN_CLUSTER_PROBABILITY)
            } else {
                own_left
            };
            let item = loop {
                let candidate = if inside {
                    own[rng.random_range(0..own.len())]
                } else {
                    rng.random_range(0..spec.num_items)
                };
                let in_own = candidate % clusters == u % clusters;
                if !chosen[candidate] && in_own == inside {
                    break candidate;
                }
            };
            chosen[item] = true;
            items.push(item);
        }
        histories.push(items);
    }
    let interactions = InteractionMatrix::from_user_lists(spec.num_items, histories);

    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::param("noise_sigma", e.to_string()))?;
    let mut sets = Vec::with_capacity(spec.modalities.len());
    for (label, dim) in &spec.modalities {
        let centroids: Vec<Vec<f64>> = (0..clusters)
            .map(|_| (0..*dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let mut values = DenseMatrix::zeros(spec.num_items, *dim);
        for i in 0..spec.num_items {
            let centroid = &centroids[i % clusters];
            for (v, c) in values.row_mut(i).iter_mut().zip(centroid) {
                let x = if spec.noise_sigma > 0.0 {
                    c + noise.sample(&mut rng)
                } else {
                    *c
                };
                *v = x as f32 as f64;
            }
        }
        sets.push(ModalityFeatureSet::new(label.clone(), values)?);
    }
    Ok(Dataset {
        interactions,
        features: FeatureBundle::new(sets)?,
    })
}
