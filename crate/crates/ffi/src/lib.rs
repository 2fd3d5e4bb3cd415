//! C ABI over the `featprop` library.
//!
//! Objects cross the boundary as opaque handles created by `fp_*_new`,
//! `fp_*_load` or `fp_*_build` functions and released with the matching
//! `fp_*_free`. Every fallible function returns an [`FpStatus`]; on failure
//! [`fp_last_error`] describes the problem for the calling thread. Feature
//! matrices are row-major `double` buffers of `num_items * dim` values.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use featprop::impute::propagate_modality;
use featprop::{
    build_normalized_graph, dirichlet_energy, harmonic_residual, impute_mean, impute_random,
    impute_zeros, known_mean, sample_missing, DenseMatrix, Error, FeatureBundle, GraphStage,
    InteractionMatrix, ItemItemGraph, MissingMask, ModalityFeatureSet,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpStatus {
    Ok = 0,
    Parameter = 1,
    Shape = 2,
    EmptyGraph = 3,
    Stage = 4,
    NoKnownItems = 5,
    NoMissingItems = 6,
    NoTestUsers = 7,
    Features = 8,
    Parse = 9,
    Format = 10,
    Io = 11,
    Serialize = 12,
    NullPointer = 13,
    Panic = 14,
}

impl From<&Error> for FpStatus {
    fn from(e: &Error) -> Self {
        match e.category() {
            "parameter" => FpStatus::Parameter,
            "shape" => FpStatus::Shape,
            "empty-graph" => FpStatus::EmptyGraph,
            "stage" => FpStatus::Stage,
            "no-known-items" => FpStatus::NoKnownItems,
            "no-missing-items" => FpStatus::NoMissingItems,
            "no-test-users" => FpStatus::NoTestUsers,
            "features" => FpStatus::Features,
            "parse" => FpStatus::Parse,
            "format" => FpStatus::Format,
            "io" => FpStatus::Io,
            _ => FpStatus::Serialize,
        }
    }
}

/// Baseline imputation strategies.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpBaseline {
    Zeros = 0,
    Mean = 1,
    Random = 2,
}

/// Propagation settings. Obtain defaults from
/// [`fp_propagation_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpPropagationConfig {
    pub max_layers: usize,
    pub tolerance: f64,
    /// Fill unreachable missing items with the known mean instead of zeros.
    pub fallback_mean: bool,
}

/// Diagnostics of one propagation run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FpPropagationReport {
    pub layers_run: usize,
    pub final_residual: f64,
    pub num_unreachable: usize,
}

/// Opaque user-item interaction matrix.
pub struct FpInteractions(InteractionMatrix);

/// Opaque normalized item-item graph.
pub struct FpGraph(ItemItemGraph);

/// Opaque item-level missing mask.
pub struct FpMask(MissingMask);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(FpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(FpStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FpStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `body` behind a panic guard and records any failure.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> FpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FpStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {message}"));
            FpStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(FpStatus::Parameter, "path is not valid UTF-8".into()))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn len_of(num_items: usize, dim: usize) -> Result<usize, Failure> {
    num_items
        .checked_mul(dim)
        .ok_or_else(|| Failure(FpStatus::Parameter, "num_items * dim overflows".into()))
}

unsafe fn feature_set(
    values: *const f64,
    num_items: usize,
    dim: usize,
) -> Result<ModalityFeatureSet, Failure> {
    let data = slice(values, len_of(num_items, dim)?, "features")?.to_vec();
    Ok(ModalityFeatureSet::new(
        "features",
        DenseMatrix::from_vec(num_items, dim, data)?,
    )?)
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next `fp_*` call on the same thread.
#[no_mangle]
pub extern "C" fn fp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an interaction matrix from `len` parallel `(user, item)` pairs.
/// Duplicate pairs collapse.
///
/// # Safety
/// `users` and `items` must point to `len` readable values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fp_interactions_new(
    num_users: usize,
    num_items: usize,
    users: *const usize,
    items: *const usize,
    len: usize,
    out: *mut *mut FpInteractions,
) -> FpStatus {
    guard(|| {
        let users = slice(users, len, "users")?;
        let items = slice(items, len, "items")?;
        let m = InteractionMatrix::from_pairs(
            num_users,
            num_items,
            users.iter().copied().zip(items.iter().copied()),
        )?;
        store(out, FpInteractions(m))
    })
}

/// Loads a `user<TAB>item` file; tokens are indexed by first appearance.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fp_interactions_load(
    path: *const c_char,
    out: *mut *mut FpInteractions,
) -> FpStatus {
    guard(|| {
        let data = featprop::io::load_interactions(path_arg(path)?)?;
        store(out, FpInteractions(data.matrix))
    })
}

/// # Safety
/// `r` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn fp_interactions_num_users(r: *const FpInteractions) -> usize {
    r.as_ref().map_or(0, |r| r.0.num_users())
}

/// # Safety
/// `r` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn fp_interactions_num_items(r: *const FpInteractions) -> usize {
    r.as_ref().map_or(0, |r| r.0.num_items())
}

/// # Safety
/// `r` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn fp_interactions_count(r: *const FpInteractions) -> usize {
    r.as_ref().map_or(0, |r| r.0.num_interactions())
}

/// # Safety
/// `r` must come from this library and not be used afterwards. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn fp_interactions_free(r: *mut FpInteractions) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Projects, keeps the top `n` neighbors per item and normalizes.
///
/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fp_graph_build(
    r: *const FpInteractions,
    n: usize,
    exclude_diagonal: bool,
    out: *mut *mut FpGraph,
) -> FpStatus {
    guard(|| {
        let r = borrow(r, "interactions")?;
        store(
            out,
            FpGraph(build_normalized_graph(&r.0, n, exclude_diagonal)?),
        )
    })
}

/// Loads a normalized graph written by `fp_graph_save` or the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fp_graph_load(path: *const c_char, out: *mut *mut FpGraph) -> FpStatus {
    guard(|| {
        let g = featprop::io::load_graph(path_arg(path)?, GraphStage::Normalized)?;
        store(out, FpGraph(g))
    })
}

/// # Safety
/// `g` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fp_graph_save(g: *const FpGraph, path: *const c_char) -> FpStatus {
    guard(|| {
        let g = borrow(g, "graph")?;
        featprop::io::save_graph(path_arg(path)?, &g.0)?;
        Ok(())
    })
}

/// # Safety
/// `g` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn fp_graph_num_items(g: *const FpGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.num_items())
}

/// Undirected edge count.
///
/// # Safety
/// `g` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn fp_graph_num_edges(g: *const FpGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.num_edges())
}

/// # Safety
/// `g` must come from this library and not be used afterwards. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn fp_graph_free(g: *mut FpGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Hides `round(rate * num_items)` items chosen by a seeded generator.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fp_mask_sample(
    num_items: usize,
    rate: f64,
    seed: u64,
    out: *mut *mut FpMask,
) -> FpStatus {
    guard(|| store(out, FpMask(sample_missing(num_items, rate, seed)?)))
}

/// Mask from `num_items` flags, nonzero meaning known.
///
/// # Safety
/// `known` must point to `num_items` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fp_mask_new(
    known: *const u8,
    num_items: usize,
    out: *mut *mut FpMask,
) -> FpStatus {
    guard(|| {
        let known = slice(known, num_items, "known")?;
        store(
            out,
            FpMask(MissingMask::from_known(
                known.iter().map(|&k| k != 0).collect(),
            )),
        )
    })
}

/// # Safety
/// `m` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn fp_mask_num_items(m: *const FpMask) -> usize {
    m.as_ref().map_or(0, |m| m.0.num_items())
}

/// # Safety
/// `m` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn fp_mask_num_missing(m: *const FpMask) -> usize {
    m.as_ref().map_or(0, |m| m.0.num_missing())
}

/// False for out-of-range items and NULL masks.
///
/// # Safety
/// `m` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn fp_mask_is_known(m: *const FpMask, item: usize) -> bool {
    m.as_ref()
        .is_some_and(|m| item < m.0.num_items() && m.0.is_known(item))
}

/// # Safety
/// `m` must come from this library and not be used afterwards. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn fp_mask_free(m: *mut FpMask) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// 20 layers, tolerance 1e-6, unreachable items left at zero.
#[no_mangle]
pub extern "C" fn fp_propagation_config_default() -> FpPropagationConfig {
    let d = featprop::PropagationConfig::default();
    FpPropagationConfig {
        max_layers: d.max_layers,
        tolerance: d.tolerance,
        fallback_mean: false,
    }
}

/// Feature propagation of one modality. `features` holds the observed
/// values (missing rows are ignored); the imputed matrix is written to
/// `out`, which may alias `features`. `report` may be NULL.
///
/// # Safety
/// Buffers must hold `num_items * dim` doubles; handles must be live.
#[no_mangle]
pub unsafe extern "C" fn fp_featprop(
    graph: *const FpGraph,
    mask: *const FpMask,
    features: *const f64,
    num_items: usize,
    dim: usize,
    config: *const FpPropagationConfig,
    out: *mut f64,
    report: *mut FpPropagationReport,
) -> FpStatus {
    guard(|| {
        let graph = &borrow(graph, "graph")?.0;
        let mask = &borrow(mask, "mask")?.0;
        let cfg = match config.as_ref() {
            Some(c) => *c,
            None => fp_propagation_config_default(),
        };
        let set = feature_set(features, num_items, dim)?;
        if graph.num_items() != num_items || mask.num_items() != num_items {
            return Err(Failure(
                FpStatus::Shape,
                format!(
                    "graph has {} items, mask {}, features {num_items}",
                    graph.num_items(),
                    mask.num_items()
                ),
            ));
        }
        set.check_finite(mask)?;
        if mask.num_known() == 0 {
            return Err(Error::NoKnownItems.into());
        }
        let outcome = propagate_modality(
            graph,
            set.values(),
            mask,
            None,
            cfg.max_layers,
            cfg.tolerance,
        )?;
        let mut values = outcome.values;
        let unreachable = graph.unreached_from(mask.known());
        if cfg.fallback_mean && !unreachable.is_empty() {
            let mean = known_mean(&set, mask)?;
            for &i in &unreachable {
                values.row_mut(i).copy_from_slice(&mean);
            }
        }
        slice_mut(out, len_of(num_items, dim)?, "out")?.copy_from_slice(values.as_slice());
        if let Some(r) = report.as_mut() {
            *r = FpPropagationReport {
                layers_run: outcome.layers_run,
                final_residual: outcome.final_residual,
                num_unreachable: unreachable.len(),
            };
        }
        Ok(())
    })
}

/// Zeros, mean or uniform random `[low, high)` fill of the missing rows.
/// `seed`, `low` and `high` only matter for the random baseline.
///
/// # Safety
/// Buffers must hold `num_items * dim` doubles; `mask` must be live.
#[no_mangle]
pub unsafe extern "C" fn fp_impute_baseline(
    method: FpBaseline,
    mask: *const FpMask,
    features: *const f64,
    num_items: usize,
    dim: usize,
    seed: u64,
    low: f64,
    high: f64,
    out: *mut f64,
) -> FpStatus {
    guard(|| {
        let mask = &borrow(mask, "mask")?.0;
        let bundle = FeatureBundle::new(vec![feature_set(features, num_items, dim)?])?;
        let result = match method {
            FpBaseline::Zeros => impute_zeros(&bundle, mask)?,
            FpBaseline::Mean => impute_mean(&bundle, mask)?,
            FpBaseline::Random => impute_random(&bundle, mask, seed, low, high)?,
        };
        let values = result.features.modalities()[0].values().as_slice();
        slice_mut(out, len_of(num_items, dim)?, "out")?.copy_from_slice(values);
        Ok(())
    })
}

/// Largest deviation of a missing row from its propagated neighborhood.
///
/// # Safety
/// `features` must hold `num_items * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fp_harmonic_residual(
    graph: *const FpGraph,
    mask: *const FpMask,
    features: *const f64,
    num_items: usize,
    dim: usize,
    out: *mut f64,
) -> FpStatus {
    guard(|| {
        let graph = &borrow(graph, "graph")?.0;
        let mask = &borrow(mask, "mask")?.0;
        let data = slice(features, len_of(num_items, dim)?, "features")?.to_vec();
        let f = DenseMatrix::from_vec(num_items, dim, data)?;
        let r = harmonic_residual(graph, &f, mask)?;
        *out.as_mut().ok_or_else(|| null("out"))? = r;
        Ok(())
    })
}

/// Dirichlet energy of `features` over the graph.
///
/// # Safety
/// `features` must hold `num_items * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fp_dirichlet_energy(
    graph: *const FpGraph,
    features: *const f64,
    num_items: usize,
    dim: usize,
    out: *mut f64,
) -> FpStatus {
    guard(|| {
        let graph = &borrow(graph, "graph")?.0;
        let data = slice(features, len_of(num_items, dim)?, "features")?.to_vec();
        let f = DenseMatrix::from_vec(num_items, dim, data)?;
        *out.as_mut().ok_or_else(|| null("out"))? = dirichlet_energy(graph, &f)?;
        Ok(())
    })
}
