//! `featprop` command line.
//!
//! Every setting can come from a flag, from a JSON file passed with
//! `--config`, or from the built-in default, in that order of precedence.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use featprop::eval::{
    evaluate_imputation, impute_with, EvaluationConfig, SplitRatios, SweepConfig,
};
use featprop::graph::top_n_rows;
use featprop::io::{self, InteractionData};
use featprop::{
    build_normalized_graph, generate_synthetic, harmonic_residual, project_item_item, run_sweep,
    sample_missing, split_interactions, Dataset, Error, Fallback, FeatureBundle, GraphStage,
    ItemItemGraph, Method, MissingMask, PropagationConfig, Result, SyntheticSpec,
};

const DEFAULT_RATES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Parser)]
#[command(
    name = "featprop",
    version,
    about = "Impute missing multimodal item features by propagation over the item-item co-interaction graph"
)]
struct Cli {
    /// JSON file with default values for any flag (flags take precedence)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the sparsified, normalized item-item graph and write it as Matrix Market
    Project(ProjectArgs),
    /// Impute missing item features with one method
    Impute(ImputeArgs),
    /// Score imputed features with Recall@k and reconstruction cosine
    Evaluate(EvaluateArgs),
    /// Run the method x missing-rate x seed grid and write CSV and JSON reports
    Sweep(SweepArgs),
    /// Generate a clustered synthetic dataset
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Interactions TSV (`user<TAB>item` per line)
    #[arg(long, value_name = "PATH")]
    interactions: Option<PathBuf>,

    /// Item vocabulary (`index<TAB>token`) fixing the item order of feature rows
    #[arg(long, value_name = "PATH")]
    items: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PropagationArgs {
    /// Neighbors kept per item by top-n sparsification
    #[arg(long, default_value_t = 20)]
    n: usize,

    /// Maximum propagation layers
    #[arg(long, default_value_t = 20)]
    layers: usize,

    /// Convergence tolerance on the per-layer change (0 runs every layer)
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,

    /// Let an item's own popularity compete in its top-n (off by default)
    #[arg(long, default_value_t = false)]
    include_diagonal: bool,

    /// Treatment of missing items no known item can reach: none | mean
    #[arg(long, default_value = "none")]
    fallback: String,
}

#[derive(Debug, Args)]
struct EvaluationArgs {
    /// Recall cutoff
    #[arg(long, default_value_t = 20)]
    k: usize,

    /// Neighbors per item in the kNN recommender
    #[arg(long, default_value_t = 50)]
    k_items: usize,

    /// Seed of the per-user train/valid/test split (0.8/0.1/0.1)
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Neighbors kept per item by top-n sparsification
    #[arg(long, default_value_t = 20)]
    n: usize,

    /// Let an item's own popularity compete in its top-n (off by default)
    #[arg(long, default_value_t = false)]
    include_diagonal: bool,

    /// Output graph file
    #[arg(long, default_value = "graph.mtx", value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ImputeArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Normalized graph written by `project` (instead of --interactions)
    #[arg(long, value_name = "PATH")]
    graph: Option<PathBuf>,

    /// Feature file, one per modality (repeatable)
    #[arg(long = "features", value_name = "PATH")]
    features: Vec<PathBuf>,

    /// Mask file (`1` known / `0` missing per line); otherwise sampled with --rate
    #[arg(long, value_name = "PATH")]
    mask: Option<PathBuf>,

    /// Fraction of items to hide when no mask file is given
    #[arg(long)]
    rate: Option<f64>,

    /// Seed for mask sampling and random fills
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Imputation method: zeros | mean | random | featprop
    #[arg(long, default_value = "featprop")]
    method: String,

    #[command(flatten)]
    propagation: PropagationArgs,

    /// Lower bound of random fills
    #[arg(long, default_value_t = 0.0)]
    low: f64,

    /// Upper bound (exclusive) of random fills
    #[arg(long, default_value_t = 1.0)]
    high: f64,

    /// Output directory
    #[arg(long, default_value = "imputed", value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Ground-truth feature file per modality (repeatable)
    #[arg(long = "truth", value_name = "PATH")]
    truth: Vec<PathBuf>,

    /// Imputed feature file per modality, same order as --truth (repeatable)
    #[arg(long = "imputed", value_name = "PATH")]
    imputed: Vec<PathBuf>,

    /// Mask file used for the imputation
    #[arg(long, value_name = "PATH")]
    mask: Option<PathBuf>,

    #[command(flatten)]
    evaluation: EvaluationArgs,

    /// Also write the metrics JSON to this file
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Ground-truth feature file per modality (repeatable)
    #[arg(long = "features", value_name = "PATH")]
    features: Vec<PathBuf>,

    /// Methods to compare
    #[arg(long, value_delimiter = ',', default_values_t = Method::ALL.map(|m| m.to_string()))]
    methods: Vec<String>,

    /// Missing-item rates
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RATES)]
    rates: Vec<f64>,

    /// Mask sampling seeds
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
    seeds: Vec<u64>,

    #[command(flatten)]
    propagation: PropagationArgs,

    #[command(flatten)]
    evaluation: EvaluationArgs,

    /// Lower bound of random fills
    #[arg(long, default_value_t = 0.0)]
    low: f64,

    /// Upper bound (exclusive) of random fills
    #[arg(long, default_value_t = 1.0)]
    high: f64,

    /// Concurrent sweep cells (0 uses every core)
    #[arg(long, default_value_t = 0)]
    jobs: usize,

    /// Output directory for sweep.csv and sweep.json
    #[arg(long, default_value = "sweep", value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of users
    #[arg(long, default_value_t = 2000)]
    num_users: usize,

    /// Number of items
    #[arg(long, default_value_t = 500)]
    num_items: usize,

    /// Number of item/user clusters
    #[arg(long, default_value_t = 10)]
    clusters: usize,

    /// Distinct interactions per user
    #[arg(long, default_value_t = 20)]
    per_user: usize,

    /// Feature dimension per modality
    #[arg(long, value_delimiter = ',', default_values_t = [32usize, 16])]
    dims: Vec<usize>,

    /// Standard deviation of the per-item feature noise
    #[arg(long, default_value_t = 0.1)]
    noise: f64,

    /// Generator seed
    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Output directory
    #[arg(long, default_value = "synthetic", value_name = "DIR")]
    out: PathBuf,
}

/// Keys accepted in a `--config` JSON file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    interactions: Option<PathBuf>,
    items: Option<PathBuf>,
    graph: Option<PathBuf>,
    features: Option<Vec<PathBuf>>,
    truth: Option<Vec<PathBuf>>,
    imputed: Option<Vec<PathBuf>>,
    mask: Option<PathBuf>,
    out: Option<PathBuf>,
    n: Option<usize>,
    layers: Option<usize>,
    tolerance: Option<f64>,
    include_diagonal: Option<bool>,
    fallback: Option<String>,
    method: Option<String>,
    methods: Option<Vec<String>>,
    rate: Option<f64>,
    rates: Option<Vec<f64>>,
    seed: Option<u64>,
    seeds: Option<Vec<u64>>,
    k: Option<usize>,
    k_items: Option<usize>,
    split_seed: Option<u64>,
    low: Option<f64>,
    high: Option<f64>,
    jobs: Option<usize>,
    num_users: Option<usize>,
    num_items: Option<usize>,
    clusters: Option<usize>,
    per_user: Option<usize>,
    dims: Option<Vec<usize>>,
    noise: Option<f64>,
}

impl ConfigFile {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line(),
            reason: e.to_string(),
        })
    }
}

/// Flag value if given on the command line, else the config file value,
/// else the flag's default.
struct Layers<'a> {
    matches: &'a ArgMatches,
    file: &'a ConfigFile,
}

impl Layers<'_> {
    fn on_cli(&self, id: &str) -> bool {
        self.matches.value_source(id) == Some(ValueSource::CommandLine)
    }

    fn pick<T>(&self, id: &str, flag: T, file: &Option<T>) -> T
    where
        T: Clone,
    {
        match file {
            Some(v) if !self.on_cli(id) => v.clone(),
            _ => flag,
        }
    }

    fn list<T: Clone>(&self, flag: Vec<T>, file: &Option<Vec<T>>) -> Vec<T> {
        if flag.is_empty() {
            file.clone().unwrap_or_default()
        } else {
            flag
        }
    }

    fn path(&self, flag: Option<PathBuf>, file: &Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| file.clone())
    }
}

pub fn run() -> Result<()> {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    let layers = Layers {
        matches: sub,
        file: &file,
    };
    match cli.command {
        Command::Project(a) => cmd_project(a, &layers),
        Command::Impute(a) => cmd_impute(a, &layers),
        Command::Evaluate(a) => cmd_evaluate(a, &layers),
        Command::Sweep(a) => cmd_sweep(a, &layers),
        Command::Synth(a) => cmd_synth(a, &layers),
    }
}

fn load_interactions(input: &InputArgs, l: &Layers) -> Result<Option<InteractionData>> {
    let Some(path) = l.path(input.interactions.clone(), &l.file.interactions) else {
        return Ok(None);
    };
    let vocabulary = l
        .path(input.items.clone(), &l.file.items)
        .map(io::load_token_map)
        .transpose()?;
    let data = io::load_interactions_with_items(&path, vocabulary.as_deref())?;
    log::info!(
        "{}: {} users, {} items, {} interactions",
        path.display(),
        data.matrix.num_users(),
        data.matrix.num_items(),
        data.matrix.num_interactions()
    );
    Ok(Some(data))
}

fn require_interactions(input: &InputArgs, l: &Layers) -> Result<InteractionData> {
    load_interactions(input, l)?
        .ok_or_else(|| Error::param("interactions", "an interactions file is required"))
}

fn load_bundle(paths: &[PathBuf], what: &'static str) -> Result<FeatureBundle> {
    if paths.is_empty() {
        return Err(Error::param(what, "at least one feature file is required"));
    }
    let sets = paths
        .iter()
        .map(io::load_features)
        .collect::<Result<Vec<_>>>()?;
    FeatureBundle::new(sets)
}

fn check_items(interactions: &InteractionData, bundle: &FeatureBundle) -> Result<()> {
    if interactions.matrix.num_items() != bundle.num_items() {
        return Err(Error::Shape(format!(
            "interactions name {} items, feature files have {} rows",
            interactions.matrix.num_items(),
            bundle.num_items()
        )));
    }
    Ok(())
}

fn propagation_config(a: &PropagationArgs, l: &Layers) -> Result<PropagationConfig> {
    let fallback: Fallback = l
        .pick("fallback", a.fallback.clone(), &l.file.fallback)
        .parse()?;
    let cfg = PropagationConfig {
        max_layers: l.pick("layers", a.layers, &l.file.layers),
        tolerance: l.pick("tolerance", a.tolerance, &l.file.tolerance),
        sparsification_n: l.pick("n", a.n, &l.file.n),
        exclude_diagonal: !l.pick(
            "include_diagonal",
            a.include_diagonal,
            &l.file.include_diagonal,
        ),
        fallback,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn evaluation_config(a: &EvaluationArgs, l: &Layers) -> EvaluationConfig {
    EvaluationConfig {
        k: l.pick("k", a.k, &l.file.k),
        k_items: l.pick("k_items", a.k_items, &l.file.k_items),
        split: SplitRatios::default(),
        split_seed: l.pick("split_seed", a.split_seed, &l.file.split_seed),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn cmd_project(a: ProjectArgs, l: &Layers) -> Result<()> {
    let data = require_interactions(&a.input, l)?;
    let n = l.pick("n", a.n, &l.file.n);
    let exclude_diagonal = !l.pick(
        "include_diagonal",
        a.include_diagonal,
        &l.file.include_diagonal,
    );
    let out = l.pick("out", a.out, &l.file.out);

    let raw = project_item_item(&data.matrix)?;
    let selected = top_n_rows(raw.adjacency(), n.max(1), exclude_diagonal)
        .iter()
        .map(Vec::len)
        .max()
        .unwrap_or(0);
    let graph = build_normalized_graph(&data.matrix, n, exclude_diagonal)?;
    io::save_graph(&out, &graph)?;
    let vocab = PathBuf::from(format!("{}.items.tsv", out.display()));
    io::save_token_map(&vocab, &data.item_tokens)?;
    println!(
        "nodes={} edges={} isolated={} max_selected={}",
        graph.num_items(),
        graph.num_edges(),
        graph.isolated_items().len(),
        selected
    );
    Ok(())
}

fn cmd_impute(a: ImputeArgs, l: &Layers) -> Result<()> {
    let method: Method = l.pick("method", a.method.clone(), &l.file.method).parse()?;
    let features = l.list(a.features.clone(), &l.file.features);
    let bundle = load_bundle(&features, "features")?;
    let cfg = propagation_config(&a.propagation, l)?;
    let seed = l.pick("seed", a.seed, &l.file.seed);
    let out = l.pick("out", a.out.clone(), &l.file.out);

    let mask = match l.path(a.mask.clone(), &l.file.mask) {
        Some(p) => io::load_mask(p)?,
        None => {
            let rate = a
                .rate
                .or(l.file.rate)
                .ok_or_else(|| Error::param("rate", "either --mask or --rate must be given"))?;
            sample_missing(bundle.num_items(), rate, seed)?
        }
    };
    let graph: Option<ItemItemGraph> = if method == Method::FeatProp {
        match l.path(a.graph.clone(), &l.file.graph) {
            Some(p) => Some(io::load_graph(p, GraphStage::Normalized)?),
            None => {
                let data = require_interactions(&a.input, l)?;
                check_items(&data, &bundle)?;
                Some(build_normalized_graph(
                    &data.matrix,
                    cfg.sparsification_n,
                    cfg.exclude_diagonal,
                )?)
            }
        }
    } else {
        None
    };

    let sweep_cfg = SweepConfig {
        propagation: cfg,
        random_low: l.pick("low", a.low, &l.file.low),
        random_high: l.pick("high", a.high, &l.file.high),
        ..SweepConfig::default()
    };
    let started = Instant::now();
    let blanked = featprop::blank_bundle(&bundle, &mask)?;
    let result = impute_with(method, &blanked, &mask, graph.as_ref(), &sweep_cfg, seed)?;
    let runtime_ms = started.elapsed().as_secs_f64() * 1e3;

    let mut modalities = Vec::new();
    for (set, diag) in result.features.modalities().iter().zip(&result.diagnostics) {
        let path = out.join(format!("{}.fpmm", set.modality()));
        io::save_features(&path, set)?;
        let harmonic = graph
            .as_ref()
            .map(|g| harmonic_residual(g, set.values(), &mask))
            .transpose()?;
        modalities.push(json!({
            "modality": set.modality(),
            "layers_run": diag.layers_run,
            "final_residual": diag.final_residual,
            "harmonic_residual": harmonic,
            "output": path,
        }));
    }
    io::save_mask(out.join("mask.txt"), &mask)?;
    let diagnostics = json!({
        "method": method.as_str(),
        "num_items": mask.num_items(),
        "num_missing": mask.num_missing(),
        "imputed_fraction": mask.num_missing() as f64 / mask.num_items() as f64,
        "seed": seed,
        "modalities": modalities,
        "unreachable_count": result.unreachable_items.len(),
        "unreachable_items": result.unreachable_items,
        "runtime_ms": runtime_ms,
    });
    write_json(&out.join("diagnostics.json"), &diagnostics)?;
    println!(
        "method={} items={} missing={} unreachable={}",
        method,
        mask.num_items(),
        mask.num_missing(),
        result.unreachable_items.len()
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, l: &Layers) -> Result<()> {
    let data = require_interactions(&a.input, l)?;
    let truth = load_bundle(&l.list(a.truth.clone(), &l.file.truth), "truth")?;
    let imputed = load_bundle(&l.list(a.imputed.clone(), &l.file.imputed), "imputed")?;
    check_items(&data, &truth)?;
    let mask: MissingMask = match l.path(a.mask.clone(), &l.file.mask) {
        Some(p) => io::load_mask(p)?,
        None => return Err(Error::param("mask", "a mask file is required")),
    };
    let cfg = evaluation_config(&a.evaluation, l);
    let split = split_interactions(&data.matrix, cfg.split, cfg.split_seed)?;
    let (recall, cosines) = evaluate_imputation(&split, &truth, &imputed, &mask, &cfg)?;
    let mut report = serde_json::Map::new();
    report.insert("k".into(), json!(cfg.k));
    report.insert("recall_at_k".into(), json!(recall));
    for c in &cosines {
        report.insert(format!("cosine_{}", c.modality), json!(c.cosine));
    }
    let report = serde_json::Value::Object(report);
    if let Some(path) = a.out.clone().or_else(|| l.file.out.clone()) {
        write_json(&path, &report)?;
    }
    println!("{report}");
    Ok(())
}

fn cmd_sweep(a: SweepArgs, l: &Layers) -> Result<()> {
    let data = require_interactions(&a.input, l)?;
    let features = load_bundle(&l.list(a.features.clone(), &l.file.features), "features")?;
    check_items(&data, &features)?;
    let methods = l
        .pick("methods", a.methods.clone(), &l.file.methods)
        .iter()
        .map(|m| m.parse())
        .collect::<Result<Vec<Method>>>()?;
    let rates = l.pick("rates", a.rates.clone(), &l.file.rates);
    let seeds = l.pick("seeds", a.seeds.clone(), &l.file.seeds);
    let jobs = l.pick("jobs", a.jobs, &l.file.jobs);
    let cfg = SweepConfig {
        propagation: propagation_config(&a.propagation, l)?,
        evaluation: evaluation_config(&a.evaluation, l),
        random_low: l.pick("low", a.low, &l.file.low),
        random_high: l.pick("high", a.high, &l.file.high),
        jobs: (jobs > 0).then_some(jobs),
    };
    let out = l.pick("out", a.out.clone(), &l.file.out);
    let dataset = Dataset {
        interactions: data.matrix,
        features,
    };
    log::info!(
        "sweep: {} methods x {} rates x {} seeds",
        methods.len(),
        rates.len(),
        seeds.len()
    );
    let report = run_sweep(&dataset, &methods, &rates, &seeds, &cfg)?;
    io::save_report(&out, &report)?;
    println!("rows={} out={}", report.rows.len(), out.display());
    Ok(())
}

fn cmd_synth(a: SynthArgs, l: &Layers) -> Result<()> {
    let f = l.file;
    let dims = l.pick("dims", a.dims.clone(), &f.dims);
    let spec = SyntheticSpec {
        num_users: l.pick("num_users", a.num_users, &f.num_users),
        num_items: l.pick("num_items", a.num_items, &f.num_items),
        num_clusters: l.pick("clusters", a.clusters, &f.clusters),
        interactions_per_user: l.pick("per_user", a.per_user, &f.per_user),
        modalities: SyntheticSpec::default_labels(&dims),
        noise_sigma: l.pick("noise", a.noise, &f.noise),
        seed: l.pick("seed", a.seed, &f.seed),
    };
    let out = l.pick("out", a.out.clone(), &f.out);
    let dataset = generate_synthetic(&spec)?;
    let data = InteractionData {
        user_tokens: (0..spec.num_users).map(|u| format!("u{u}")).collect(),
        item_tokens: (0..spec.num_items).map(|i| format!("i{i}")).collect(),
        matrix: dataset.interactions,
    };
    io::save_interactions(out.join("interactions.tsv"), &data)?;
    io::save_token_map(out.join("items.tsv"), &data.item_tokens)?;
    for set in dataset.features.modalities() {
        io::save_features(out.join(format!("{}.fpmm", set.modality())), set)?;
    }
    println!(
        "users={} items={} interactions={} modalities={} out={}",
        data.matrix.num_users(),
        data.matrix.num_items(),
        data.matrix.num_interactions(),
        dataset.features.labels().join(","),
        out.display()
    );
    Ok(())
}
