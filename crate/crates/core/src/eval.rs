//! Downstream evaluation: per-user interaction splits, a content-based
//! item-kNN recommender used as imputation probe, Recall@K, reconstruction
//! cosine and the seeded method x rate x seed sweep.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    blank_bundle, sample_missing, FeatureBundle, MissingMask, ModalityFeatureSet,
};
use crate::graph::{build_normalized_graph, InteractionMatrix, ItemItemGraph};
use crate::impute::{
    featprop_with_graph, impute_mean, impute_random, impute_zeros, ImputationResult, Method,
    PropagationConfig,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::param(
                "ratios",
                format!("{parts:?} must all lie in (0, 1)"),
            ));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param(
                "ratios",
                format!("{parts:?} sum to {sum}, not 1"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSplit {
    pub train: InteractionMatrix,
    pub valid: InteractionMatrix,
    pub test: InteractionMatrix,
}

/// Users with fewer than this many interactions go entirely to train.
pub const MIN_SPLIT_INTERACTIONS: usize = 3;

/// Per-user random partition. Users with at least three interactions get at
/// least one validation and one test item and keep at least one train item;
/// shorter histories stay in train.
pub fn split_interactions(
    r: &InteractionMatrix,
    ratios: SplitRatios,
    seed: u64,
) -> Result<InteractionSplit> {
    ratios.validate()?;
    let mut rng = rng::seeded(seed);
    let users = r.num_users();
    let mut train = Vec::with_capacity(users);
    let mut valid = Vec::with_capacity(users);
    let mut test = Vec::with_capacity(users);
    for u in 0..users {
        let mut items = r.user_items(u).to_vec();
        let n = items.len();
        if n < MIN_SPLIT_INTERACTIONS {
            train.push(items);
            valid.push(Vec::new());
            test.push(Vec::new());
            continue;
        }
        items.shuffle(&mut rng);
        let mut n_test = round_half_up(n as f64 * ratios.test).max(1);
        let mut n_valid = round_half_up(n as f64 * ratios.valid).max(1);
        while n_test + n_valid > n - 1 {
            if n_valid >= n_test && n_valid > 1 {
                n_valid -= 1;
            } else {
                n_test -= 1;
            }
        }
        let mut rest = items.split_off(n_test);
        test.push(items);
        train.push(rest.split_off(n_valid));
        valid.push(rest);
    }
    let n = r.num_items();
    Ok(InteractionSplit {
        train: InteractionMatrix::from_user_lists(n, train),
        valid: InteractionMatrix::from_user_lists(n, valid),
        test: InteractionMatrix::from_user_lists(n, test),
    })
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Cosine similarity, 0 when either vector is all zeros.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// For every item, its `k` most cosine-similar other items (ties to the
/// lower index) with their similarities.
pub fn nearest_neighbors(set: &ModalityFeatureSet, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = set.num_items();
    let unit: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row = set.row(i);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                vec![0.0; row.len()]
            } else {
                row.iter().map(|v| v / norm).collect()
            }
        })
        .collect();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sims: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let dot: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
                    (j, dot.clamp(-1.0, 1.0))
                })
                .collect();
            let by_rank =
                |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
            if sims.len() > k {
                if k > 0 {
                    sims.select_nth_unstable_by(k - 1, by_rank);
                }
                sims.truncate(k);
            }
            sims.sort_by(by_rank);
            sims
        })
        .collect()
}

/// Content-only item-kNN recommender.
///
/// `score(u, i)` is the mean over modalities of
/// `sum_{j in train(u) ∩ N_k(i)} cos(f_i, f_j) / |train(u)|`, where `N_k(i)`
/// holds the `k_items` items most similar to `i` in that modality. Items in
/// the user's train profile are never returned; equal scores rank by
/// ascending item index. Users without train items get an empty list.
pub fn knn_recommend(
    train: &InteractionMatrix,
    bundle: &FeatureBundle,
    k_items: usize,
    top_k: usize,
) -> Result<Vec<Vec<usize>>> {
    let n = train.num_items();
    if bundle.num_items() != n {
        return Err(Error::Shape(format!(
            "features cover {} items, interactions {n}",
            bundle.num_items()
        )));
    }
    // reverse[m][j] lists (i, cos) for every i that has j among its neighbors
    let reverse: Vec<Vec<Vec<(usize, f64)>>> = bundle
        .modalities()
        .iter()
        .map(|set| {
            let mut rev = vec![Vec::new(); n];
            for (i, list) in nearest_neighbors(set, k_items).into_iter().enumerate() {
                for (j, s) in list {
                    rev[j].push((i, s));
                }
            }
            rev
        })
        .collect();
    let modal = reverse.len() as f64;

    let lists = (0..train.num_users())
        .into_par_iter()
        .map(|u| {
            let history = train.user_items(u);
            if history.is_empty() {
                return Vec::new();
            }
            let norm = history.len() as f64 * modal;
            let mut scores = vec![0.0_f64; n];
            for rev in &reverse {
                for &j in history {
                    for &(i, s) in &rev[j] {
                        scores[i] += s / norm;
                    }
                }
            }
            let mut ranked: Vec<usize> = (0..n)
                .filter(|i| history.binary_search(i).is_err())
                .collect();
            ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            ranked.truncate(top_k);
            ranked
        })
        .collect();
    Ok(lists)
}

/// Mean over users with test items of `|top-k ∩ test(u)| / |test(u)|`.
pub fn recall_at_k(ranked: &[Vec<usize>], test: &InteractionMatrix, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if ranked.len() != test.num_users() {
        return Err(Error::Shape(format!(
            "{} ranked lists for {} users",
            ranked.len(),
            test.num_users()
        )));
    }
    let mut total = 0.0;
    let mut users = 0usize;
    for (u, list) in ranked.iter().enumerate() {
        let truth = test.user_items(u);
        if truth.is_empty() {
            continue;
        }
        let top: HashSet<usize> = list.iter().take(k).copied().collect();
        let hits = truth.iter().filter(|i| top.contains(i)).count();
        total += hits as f64 / truth.len() as f64;
        users += 1;
    }
    if users == 0 {
        return Err(Error::NoTestUsers);
    }
    Ok(total / users as f64)
}

/// Mean cosine between imputed and true rows over missing items.
pub fn reconstruction_cosine(
    imputed: &ModalityFeatureSet,
    truth: &ModalityFeatureSet,
    mask: &MissingMask,
) -> Result<f64> {
    if imputed.num_items() != truth.num_items()
        || imputed.dim() != truth.dim()
        || mask.num_items() != truth.num_items()
    {
        return Err(Error::Shape(format!(
            "imputed {}x{}, truth {}x{}, mask {}",
            imputed.num_items(),
            imputed.dim(),
            truth.num_items(),
            truth.dim(),
            mask.num_items()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in mask.missing_items() {
        sum += cosine(imputed.row(i), truth.row(i));
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoMissingItems);
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    /// Recall cutoff.
    pub k: usize,
    /// Neighbors per item in the kNN probe.
    pub k_items: usize,
    pub split: SplitRatios,
    pub split_seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            k: 20,
            k_items: 50,
            split: SplitRatios::default(),
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityCosine {
    pub modality: String,
    pub cosine: f64,
}

/// Recall@k of the kNN probe on the test split and per-modality
/// reconstruction cosine of the imputed features.
pub fn evaluate_imputation(
    split: &InteractionSplit,
    truth: &FeatureBundle,
    imputed: &FeatureBundle,
    mask: &MissingMask,
    cfg: &EvaluationConfig,
) -> Result<(f64, Vec<ModalityCosine>)> {
    if truth.labels() != imputed.labels() {
        return Err(Error::Features(format!(
            "imputed modalities {:?} differ from truth {:?}",
            imputed.labels(),
            truth.labels()
        )));
    }
    let ranked = knn_recommend(&split.train, imputed, cfg.k_items, cfg.k)?;
    let recall = recall_at_k(&ranked, &split.test, cfg.k)?;
    let cosines = imputed
        .modalities()
        .iter()
        .zip(truth.modalities())
        .map(|(im, tr)| {
            Ok(ModalityCosine {
                modality: tr.modality().to_string(),
                cosine: reconstruction_cosine(im, tr, mask)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((recall, cosines))
}

/// Interactions with the full ground-truth features of every item.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub interactions: InteractionMatrix,
    pub features: FeatureBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub propagation: PropagationConfig,
    pub evaluation: EvaluationConfig,
    pub random_low: f64,
    pub random_high: f64,
    /// Concurrent cells; `None` uses all cores.
    pub jobs: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            propagation: PropagationConfig::default(),
            evaluation: EvaluationConfig::default(),
            random_low: 0.0,
            random_high: 1.0,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: Method,
    pub missing_rate: f64,
    pub seed: u64,
    pub k: usize,
    pub recall_at_k: f64,
    pub cosine: Vec<ModalityCosine>,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub modalities: Vec<String>,
    pub rows: Vec<MetricReport>,
}

impl SweepReport {
    pub fn rows_for(&self, method: Method, rate: f64) -> impl Iterator<Item = &MetricReport> {
        self.rows
            .iter()
            .filter(move |r| r.method == method && r.missing_rate == rate)
    }
}

/// Seed of the random-fill stream of one cell.
pub fn cell_seed(seed: u64, rate: f64, method: Method) -> u64 {
    rng::derive_seed(seed, &[rate.to_bits(), method as u64])
}

/// Runs one imputation method on features already blanked by `mask`.
pub fn impute_with(
    method: Method,
    blanked: &FeatureBundle,
    mask: &MissingMask,
    graph: Option<&ItemItemGraph>,
    cfg: &SweepConfig,
    stream_seed: u64,
) -> Result<ImputationResult> {
    match method {
        Method::Zeros => impute_zeros(blanked, mask),
        Method::Mean => impute_mean(blanked, mask),
        Method::Random => {
            impute_random(blanked, mask, stream_seed, cfg.random_low, cfg.random_high)
        }
        Method::FeatProp => {
            let graph = graph.ok_or_else(|| Error::param("graph", "featprop needs a graph"))?;
            featprop_with_graph(blanked, mask, graph, &cfg.propagation)
        }
    }
}

/// Evaluates every `(method, rate, seed)` cell.
///
/// The interactions are split once with `cfg.evaluation.split_seed`; the
/// propagation graph is built from the train split only. The mask of a cell
/// depends on `(rate, seed)` alone so all methods see the same missing items.
/// Rows come out method-major, then rate, then seed, whatever `jobs` is.
pub fn run_sweep(
    dataset: &Dataset,
    methods: &[Method],
    rates: &[f64],
    seeds: &[u64],
    cfg: &SweepConfig,
) -> Result<SweepReport> {
    if methods.is_empty() || rates.is_empty() || seeds.is_empty() {
        return Err(Error::param(
            "sweep",
            "methods, rates and seeds must be non-empty",
        ));
    }
    cfg.propagation.validate()?;
    if dataset.interactions.num_items() != dataset.features.num_items() {
        return Err(Error::Shape(format!(
            "interactions cover {} items, features {}",
            dataset.interactions.num_items(),
            dataset.features.num_items()
        )));
    }
    let split = split_interactions(
        &dataset.interactions,
        cfg.evaluation.split,
        cfg.evaluation.split_seed,
    )?;
    let graph = if methods.contains(&Method::FeatProp) {
        Some(build_normalized_graph(
            &split.train,
            cfg.propagation.sparsification_n,
            cfg.propagation.exclude_diagonal,
        )?)
    } else {
        None
    };

    let cells: Vec<(Method, f64, u64)> = methods
        .iter()
        .flat_map(|&m| {
            rates
                .iter()
                .flat_map(move |&r| seeds.iter().map(move |&s| (m, r, s)))
        })
        .collect();

    let run_cell = |&(method, rate, seed): &(Method, f64, u64)| -> Result<MetricReport> {
        let started = Instant::now();
        let outcome = (|| {
            let mask = sample_missing(dataset.features.num_items(), rate, seed)?;
            let blanked = blank_bundle(&dataset.features, &mask)?;
            let imputed = impute_with(
                method,
                &blanked,
                &mask,
                graph.as_ref(),
                cfg,
                cell_seed(seed, rate, method),
            )?;
            evaluate_imputation(
                &split,
                &dataset.features,
                &imputed.features,
                &mask,
                &cfg.evaluation,
            )
        })();
        let (recall, cosine) = outcome.map_err(|e| Error::Cell {
            method: method.to_string(),
            rate,
            seed,
            source: Box::new(e),
        })?;
        log::debug!("cell {method} rate={rate} seed={seed}: recall={recall:.4}");
        Ok(MetricReport {
            method,
            missing_rate: rate,
            seed,
            k: cfg.evaluation.k,
            recall_at_k: recall,
            cosine,
            runtime_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cfg.jobs {
        pool = pool.num_threads(jobs.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| Error::param("jobs", e.to_string()))?;
    let rows = pool.install(|| cells.par_iter().map(run_cell).collect::<Result<Vec<_>>>())?;
    Ok(SweepReport {
        modalities: dataset.features.labels(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;

    fn bundle(rows: &[&[f64]]) -> FeatureBundle {
        let set = ModalityFeatureSet::new("visual", DenseMatrix::from_rows(rows).unwrap()).unwrap();
        FeatureBundle::new(vec![set]).unwrap()
    }

    #[test]
    fn split_ten_items() {
        let r = InteractionMatrix::from_pairs(1, 10, (0..10).map(|i| (0, i))).unwrap();
        let s = split_interactions(&r, SplitRatios::default(), 5).unwrap();
        assert_eq!(s.train.user_items(0).len(), 8);
        assert_eq!(s.valid.user_items(0).len(), 1);
        assert_eq!(s.test.user_items(0).len(), 1);
        let mut all: Vec<usize> = s
            .train
            .pairs()
            .chain(s.valid.pairs())
            .chain(s.test.pairs())
            .map(|p| p.1)
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(
            s,
            split_interactions(&r, SplitRatios::default(), 5).unwrap()
        );
    }

    #[test]
    fn split_short_histories_stay_in_train() {
        let r = InteractionMatrix::from_pairs(2, 4, [(0, 1), (1, 0), (1, 3)]).unwrap();
        let s = split_interactions(&r, SplitRatios::default(), 1).unwrap();
        assert_eq!(s.train.user_items(0), &[1]);
        assert_eq!(s.train.user_items(1), &[0, 3]);
        assert_eq!(s.test.num_interactions(), 0);
    }

    #[test]
    fn split_three_items_keeps_one_each() {
        let r = InteractionMatrix::from_pairs(1, 3, [(0, 0), (0, 1), (0, 2)]).unwrap();
        let s = split_interactions(&r, SplitRatios::default(), 2).unwrap();
        assert_eq!(
            (
                s.train.num_interactions(),
                s.valid.num_interactions(),
                s.test.num_interactions()
            ),
            (1, 1, 1)
        );
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let r = InteractionMatrix::from_pairs(1, 3, [(0, 0)]).unwrap();
        for bad in [(0.8, 0.1, 0.2), (1.0, 0.0, 0.0), (0.9, -0.05, 0.15)] {
            let ratios = SplitRatios {
                train: bad.0,
                valid: bad.1,
                test: bad.2,
            };
            assert!(split_interactions(&r, ratios, 0).is_err());
        }
    }

    #[test]
    fn knn_prefers_own_cluster() {
        let b = bundle(&[
            &[1.0, 0.0],
            &[0.9, 0.1],
            &[1.0, 0.05],
            &[0.0, 1.0],
            &[0.1, 0.9],
            &[0.02, 1.0],
        ]);
        let train = InteractionMatrix::from_pairs(1, 6, [(0, 0)]).unwrap();
        let lists = knn_recommend(&train, &b, 5, 2).unwrap();
        let mut top = lists[0].clone();
        top.sort_unstable();
        assert_eq!(top, vec![1, 2]);
    }

    #[test]
    fn knn_identical_features_rank_by_index() {
        let b = bundle(&[&[1.0, 2.0] as &[f64]; 6]);
        let train = InteractionMatrix::from_pairs(2, 6, [(0, 2), (1, 0), (1, 5)]).unwrap();
        let lists = knn_recommend(&train, &b, 10, 10).unwrap();
        assert_eq!(lists[0], vec![0, 1, 3, 4, 5]);
        assert_eq!(lists[1], vec![1, 2, 3, 4]);
    }

    #[test]
    fn knn_single_candidate_and_empty_profile() {
        let b = bundle(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let train = InteractionMatrix::from_pairs(3, 2, [(0, 0), (2, 0), (2, 1)]).unwrap();
        let lists = knn_recommend(&train, &b, 1, 5).unwrap();
        assert_eq!(lists[0], vec![1]);
        assert!(lists[1].is_empty());
        assert!(lists[2].is_empty());
    }

    #[test]
    fn recall_examples() {
        let test = InteractionMatrix::from_pairs(2, 5, [(0, 1), (0, 2), (1, 4)]).unwrap();
        let perfect = vec![vec![2, 1], vec![4]];
        assert_eq!(recall_at_k(&perfect, &test, 20).unwrap(), 1.0);
        let miss = vec![vec![0, 3], vec![0]];
        assert_eq!(recall_at_k(&miss, &test, 20).unwrap(), 0.0);

        let one = InteractionMatrix::from_pairs(1, 5, [(0, 1), (0, 2)]).unwrap();
        assert_eq!(recall_at_k(&[vec![1, 0, 3]], &one, 3).unwrap(), 0.5);
        // the cutoff applies
        assert_eq!(recall_at_k(&[vec![0, 3, 1]], &one, 2).unwrap(), 0.0);

        let empty = InteractionMatrix::from_pairs(1, 5, []).unwrap();
        assert!(matches!(
            recall_at_k(&[vec![1]], &empty, 1),
            Err(Error::NoTestUsers)
        ));
        assert!(recall_at_k(&[vec![1]], &one, 0).is_err());
    }

    #[test]
    fn cosine_examples() {
        let truth = bundle(&[&[1.0, 2.0], &[3.0, -1.0], &[0.5, 0.5]]);
        let t = &truth.modalities()[0];
        let mask = MissingMask::from_missing(3, &[0, 1]).unwrap();
        assert!((reconstruction_cosine(t, t, &mask).unwrap() - 1.0).abs() < 1e-15);

        let zeros = t.with_values(DenseMatrix::zeros(3, 2)).unwrap();
        assert_eq!(reconstruction_cosine(&zeros, t, &mask).unwrap(), 0.0);

        let neg = t.with_values(t.values().scaled(-1.0)).unwrap();
        assert!((reconstruction_cosine(&neg, t, &mask).unwrap() + 1.0).abs() < 1e-15);

        let none = MissingMask::all_known(3);
        assert!(matches!(
            reconstruction_cosine(t, t, &none),
            Err(Error::NoMissingItems)
        ));
    }
}
