//! Imputation strategies for missing item features: feature propagation
//! over the normalized item-item graph, plus the zeros, mean and random
//! baselines.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::features::{known_mean, FeatureBundle, MissingMask, ModalityFeatureSet};
use crate::graph::{build_normalized_graph, GraphStage, InteractionMatrix, ItemItemGraph};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Zeros,
    Mean,
    Random,
    FeatProp,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Zeros,
        Method::Mean,
        Method::Random,
        Method::FeatProp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Zeros => "zeros",
            Method::Mean => "mean",
            Method::Random => "random",
            Method::FeatProp => "featprop",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zeros" => Ok(Method::Zeros),
            "mean" => Ok(Method::Mean),
            "random" => Ok(Method::Random),
            "featprop" => Ok(Method::FeatProp),
            other => Err(Error::param("method", format!("unknown method `{other}`"))),
        }
    }
}

/// What to do with missing items that no known item can reach.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    /// Leave them at their zero initialization.
    #[default]
    None,
    /// Fill them with the known-item mean of each modality.
    Mean,
}

impl FromStr for Fallback {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Fallback::None),
            "mean" => Ok(Fallback::Mean),
            other => Err(Error::param(
                "fallback",
                format!("unknown fallback `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fallback::None => "none",
            Fallback::Mean => "mean",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Upper bound on diffusion layers.
    pub max_layers: usize,
    /// Stop once the largest change of a layer is below
    /// `tolerance * (1 + max |F|)`. Zero always runs `max_layers`.
    pub tolerance: f64,
    /// Neighbors kept per item by top-n sparsification.
    pub sparsification_n: usize,
    /// Whether an item's own popularity is excluded from its top-n.
    pub exclude_diagonal: bool,
    pub fallback: Fallback,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            max_layers: 20,
            tolerance: 1e-6,
            sparsification_n: 20,
            exclude_diagonal: true,
            fallback: Fallback::None,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_layers == 0 {
            return Err(Error::param("max_layers", "must be at least 1"));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::param("tolerance", "must be a non-negative number"));
        }
        if self.sparsification_n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityDiagnostics {
    pub modality: String,
    pub layers_run: usize,
    /// Largest absolute change of the last layer.
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationResult {
    pub features: FeatureBundle,
    pub diagnostics: Vec<ModalityDiagnostics>,
    /// Missing items with no path to a known item, ascending.
    pub unreachable_items: Vec<usize>,
}

impl ImputationResult {
    fn without_propagation(features: FeatureBundle) -> Self {
        let diagnostics = features
            .modalities()
            .iter()
            .map(|m| ModalityDiagnostics {
                modality: m.modality().to_string(),
                layers_run: 0,
                final_residual: 0.0,
            })
            .collect();
        Self {
            features,
            diagnostics,
            unreachable_items: Vec::new(),
        }
    }
}

fn fill_missing(
    bundle: &FeatureBundle,
    mask: &MissingMask,
    mut fill: impl FnMut(usize, &ModalityFeatureSet, &mut [f64]) -> Result<()>,
) -> Result<FeatureBundle> {
    bundle.check_mask(mask)?;
    bundle.check_finite(mask)?;
    let mut out = Vec::with_capacity(bundle.modalities().len());
    for (m, set) in bundle.modalities().iter().enumerate() {
        let mut values = set.values().clone();
        for i in mask.missing_items() {
            fill(m, set, values.row_mut(i))?;
        }
        out.push(set.with_values(values)?);
    }
    FeatureBundle::new(out)
}

pub fn impute_zeros(bundle: &FeatureBundle, mask: &MissingMask) -> Result<ImputationResult> {
    let features = fill_missing(bundle, mask, |_, _, row| {
        row.fill(0.0);
        Ok(())
    })?;
    Ok(ImputationResult::without_propagation(features))
}

pub fn impute_mean(bundle: &FeatureBundle, mask: &MissingMask) -> Result<ImputationResult> {
    bundle.check_mask(mask)?;
    let means = bundle
        .modalities()
        .iter()
        .map(|m| known_mean(m, mask))
        .collect::<Result<Vec<_>>>()?;
    let features = fill_missing(bundle, mask, |m, _, row| {
        row.copy_from_slice(&means[m]);
        Ok(())
    })?;
    Ok(ImputationResult::without_propagation(features))
}

/// Fills missing entries i.i.d. uniform on `[low, high)`. One ChaCha8
/// stream seeded with `seed` is consumed modality by modality, item by item.
pub fn impute_random(
    bundle: &FeatureBundle,
    mask: &MissingMask,
    seed: u64,
    low: f64,
    high: f64,
) -> Result<ImputationResult> {
    if !low.is_finite() || !high.is_finite() || low >= high {
        return Err(Error::param(
            "low/high",
            format!("need finite low < high, got [{low}, {high})"),
        ));
    }
    let mut rng = rng::seeded(seed);
    let features = fill_missing(bundle, mask, |_, _, row| {
        for v in row.iter_mut() {
            *v = rng.random_range(low..high);
        }
        Ok(())
    })?;
    Ok(ImputationResult::without_propagation(features))
}

/// Feature propagation from raw interactions: builds the normalized
/// item-item graph then diffuses each modality.
pub fn featprop_impute(
    bundle: &FeatureBundle,
    mask: &MissingMask,
    interactions: &InteractionMatrix,
    cfg: &PropagationConfig,
) -> Result<ImputationResult> {
    cfg.validate()?;
    if interactions.num_items() != bundle.num_items() {
        return Err(Error::Shape(format!(
            "interactions cover {} items, features cover {}",
            interactions.num_items(),
            bundle.num_items()
        )));
    }
    let graph = build_normalized_graph(interactions, cfg.sparsification_n, cfg.exclude_diagonal)?;
    featprop_with_graph(bundle, mask, &graph, cfg)
}

/// Feature propagation over an already normalized graph. Modalities are
/// diffused independently and concurrently.
pub fn featprop_with_graph(
    bundle: &FeatureBundle,
    mask: &MissingMask,
    graph: &ItemItemGraph,
    cfg: &PropagationConfig,
) -> Result<ImputationResult> {
    cfg.validate()?;
    require_normalized(graph)?;
    bundle.check_mask(mask)?;
    bundle.check_finite(mask)?;
    if graph.num_items() != bundle.num_items() {
        return Err(Error::Shape(format!(
            "graph has {} items, features cover {}",
            graph.num_items(),
            bundle.num_items()
        )));
    }
    if mask.num_known() == 0 {
        return Err(Error::NoKnownItems);
    }
    let unreachable = graph.unreached_from(mask.known());

    let outcomes = bundle
        .modalities()
        .par_iter()
        .map(|set| {
            let mut out = propagate_modality(
                graph,
                set.values(),
                mask,
                None,
                cfg.max_layers,
                cfg.tolerance,
            )?;
            if cfg.fallback == Fallback::Mean && !unreachable.is_empty() {
                let mean = known_mean(set, mask)?;
                for &i in &unreachable {
                    out.values.row_mut(i).copy_from_slice(&mean);
                }
            }
            Ok((
                set.with_values(out.values)?,
                out.layers_run,
                out.final_residual,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sets = Vec::with_capacity(outcomes.len());
    let mut diagnostics = Vec::with_capacity(outcomes.len());
    for (set, layers_run, final_residual) in outcomes {
        diagnostics.push(ModalityDiagnostics {
            modality: set.modality().to_string(),
            layers_run,
            final_residual,
        });
        sets.push(set);
    }
    Ok(ImputationResult {
        features: FeatureBundle::new(sets)?,
        diagnostics,
        unreachable_items: unreachable,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOutcome {
    pub values: DenseMatrix,
    pub layers_run: usize,
    pub final_residual: f64,
}

/// Diffuses one modality: repeat `F <- Ã F`, then restore known rows, until
/// the layer change drops below the tolerance or `max_layers` is reached.
///
/// Missing rows start from `init` (zeros when `None`). Known rows of the
/// result are copied from `observed` and never recomputed, and only
/// missing rows are multiplied since the reset would discard the rest.
pub fn propagate_modality(
    graph: &ItemItemGraph,
    observed: &DenseMatrix,
    mask: &MissingMask,
    init: Option<&DenseMatrix>,
    max_layers: usize,
    tolerance: f64,
) -> Result<PropagationOutcome> {
    require_normalized(graph)?;
    let n = graph.num_items();
    if observed.rows() != n || mask.num_items() != n {
        return Err(Error::Shape(format!(
            "graph has {n} items, features {}, mask {}",
            observed.rows(),
            mask.num_items()
        )));
    }
    if let Some(init) = init {
        if init.rows() != n || init.cols() != observed.cols() {
            return Err(Error::Shape(
                "initialization shape differs from features".into(),
            ));
        }
    }
    if max_layers == 0 {
        return Err(Error::param("max_layers", "must be at least 1"));
    }

    let width = observed.cols();
    let mut current = observed.clone();
    for i in mask.missing_items() {
        match init {
            Some(init) => current.row_mut(i).copy_from_slice(init.row(i)),
            None => current.row_mut(i).fill(0.0),
        }
    }
    if width == 0 {
        return Ok(PropagationOutcome {
            values: current,
            layers_run: 0,
            final_residual: 0.0,
        });
    }
    let mut next = current.clone();
    let adjacency = graph.adjacency();
    let known = mask.known();

    let mut layers_run = 0;
    let mut change = 0.0;
    while layers_run < max_layers {
        change = next
            .as_mut_slice()
            .par_chunks_mut(width)
            .enumerate()
            .filter(|(i, _)| !known[*i])
            .map(|(i, dst)| {
                adjacency.accumulate_row(i, &current, dst);
                dst.iter()
                    .zip(current.row(i))
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .reduce(|| 0.0, f64::max);
        std::mem::swap(&mut current, &mut next);
        layers_run += 1;
        if change < tolerance * (1.0 + current.max_abs()) {
            break;
        }
    }
    Ok(PropagationOutcome {
        values: current,
        layers_run,
        final_residual: change,
    })
}

/// Dirichlet energy of `f` over the binary graph underlying `g`:
///
/// `E(f) = 1/2 * sum over undirected edges {i, j} of w_ij * |f_i/sqrt(d_i) - f_j/sqrt(d_j)|^2`
///
/// with `w_ij = 1` the sparsified edge weight and `d` the binary degrees.
/// Each undirected edge is counted once; self-loops contribute nothing.
pub fn dirichlet_energy(g: &ItemItemGraph, f: &DenseMatrix) -> Result<f64> {
    require_normalized(g)?;
    if f.rows() != g.num_items() {
        return Err(Error::Shape(format!(
            "feature matrix has {} rows, graph has {} items",
            f.rows(),
            g.num_items()
        )));
    }
    let degree = g.binary_degree().expect("normalized graphs carry degrees");
    let adjacency = g.adjacency();
    let mut energy = 0.0;
    for i in 0..g.num_items() {
        let si = degree[i].sqrt();
        for &j in adjacency.row(i).0.iter().filter(|&&j| j > i) {
            let sj = degree[j].sqrt();
            energy += f
                .row(i)
                .iter()
                .zip(f.row(j))
                .map(|(a, b)| {
                    let d = a / si - b / sj;
                    d * d
                })
                .sum::<f64>();
        }
    }
    Ok(0.5 * energy)
}

/// Largest deviation of a missing row from its propagated value,
/// `max_i |f_i - (Ã f)_i|_inf` over missing items; 0 if nothing is missing.
pub fn harmonic_residual(g: &ItemItemGraph, f: &DenseMatrix, mask: &MissingMask) -> Result<f64> {
    require_normalized(g)?;
    if f.rows() != g.num_items() || mask.num_items() != g.num_items() {
        return Err(Error::Shape(format!(
            "graph has {} items, features {}, mask {}",
            g.num_items(),
            f.rows(),
            mask.num_items()
        )));
    }
    let mut row = vec![0.0; f.cols()];
    let mut worst = 0.0_f64;
    for i in mask.missing_items() {
        g.adjacency().accumulate_row(i, f, &mut row);
        for (a, b) in f.row(i).iter().zip(&row) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

fn require_normalized(g: &ItemItemGraph) -> Result<()> {
    if g.stage() != GraphStage::Normalized {
        return Err(Error::Stage {
            expected: GraphStage::Normalized.name(),
            actual: g.stage().name(),
        });
    }
    Ok(())
}
