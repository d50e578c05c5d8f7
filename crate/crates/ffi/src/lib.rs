//! C ABI over the `fairlink` library.
//!
//! Datasets and models are opaque handles created by `fl_*_load`/`fl_train`
//! style calls and released with the matching `*_free`. Every fallible call
//! returns an [`FlStatus`]; on failure `fl_last_error()` describes the error
//! for the calling thread. Strings returned through `char **` out-parameters
//! are owned by the caller and must be released with `fl_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fairlink::eval::{evaluate, EvalOptions};
use fairlink::graph::{split, Dataset, PairUniverse};
use fairlink::iprojection::{project, ProjectionOptions};
use fairlink::models::{logits, Checkpoint, DyadicModel, Model};
use fairlink::synth::{sbm, SbmParams};
use fairlink::training::build_constraints;
use fairlink::{load_edge_list, train, Criterion, Error, TrainConfig};

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidGraph = 5,
    Split = 6,
    Projection = 7,
    Training = 8,
    Metric = 9,
    Config = 10,
    Json = 11,
    Panic = 12,
}

/// Graph plus sensitive attribute partition.
pub struct FlDataset {
    inner: Dataset,
}

/// A trained link-prediction model.
pub struct FlModel {
    inner: Model,
    config: TrainConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> FlStatus {
    match err {
        Error::Io { .. } => FlStatus::Io,
        Error::Parse { .. } | Error::MissingAttribute(_) | Error::Csv(_) => FlStatus::Parse,
        Error::InvalidGraph(_) => FlStatus::InvalidGraph,
        Error::Split(_) => FlStatus::Split,
        Error::InfeasibleTarget { .. } | Error::ProjectionNotConverged { .. } => FlStatus::Projection,
        Error::NonFiniteGradient { .. } | Error::Training { .. } => FlStatus::Training,
        Error::Metric(_) => FlStatus::Metric,
        Error::Config(_) => FlStatus::Config,
        Error::Json(_) => FlStatus::Json,
    }
}

struct Failure(FlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(FlStatus::Json, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FlStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FlStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(FlStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FlStatus::InvalidArgument, format!("`{name}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(FlStatus::NullPointer, format!("`{name}` is null")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(FlStatus::NullPointer, format!("output `{name}` is null")))
    } else {
        Ok(())
    }
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(FlStatus::InvalidArgument, "string contains a nul byte".into()))
}

/// Parses an optional JSON training config (null means model defaults).
unsafe fn config_arg(p: *const c_char) -> Result<TrainConfig, Failure> {
    let value = if p.is_null() {
        serde_json::json!({})
    } else {
        serde_json::from_str(str_arg(p, "config_json")?)?
    };
    Ok(TrainConfig::from_partial_json(value)?)
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads an edge list (`u v` per line) and a `node_id,label` CSV.
///
/// # Safety
/// Paths must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_load(
    edges_path: *const c_char,
    attrs_path: *const c_char,
    bipartite: bool,
    out: *mut *mut FlDataset,
) -> FlStatus {
    guard(|| {
        out_arg(out, "out")?;
        let edges = str_arg(edges_path, "edges_path")?;
        let attrs = str_arg(attrs_path, "attrs_path")?;
        let inner = load_edge_list(Path::new(edges), Path::new(attrs), bipartite)?;
        *out = Box::into_raw(Box::new(FlDataset { inner }));
        Ok(())
    })
}

/// Samples a stochastic block model with `groups` equal-size groups.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_synth(
    nodes: usize,
    groups: usize,
    p_intra: f64,
    p_inter: f64,
    seed: u64,
    out: *mut *mut FlDataset,
) -> FlStatus {
    guard(|| {
        out_arg(out, "out")?;
        let inner = sbm(&SbmParams {
            nodes,
            groups,
            p_intra,
            p_inter,
            seed,
        })?;
        *out = Box::into_raw(Box::new(FlDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_node_count(ds: *const FlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.graph.node_count())
}

/// # Safety
/// `ds` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_edge_count(ds: *const FlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.graph.edge_count())
}

/// # Safety
/// `ds` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_group_count(ds: *const FlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.partition.group_count())
}

/// # Safety
/// `ds` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_free(ds: *mut FlDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains a model on the whole dataset. `config_json` is a JSON object
/// setting any training fields (e.g. `{"model":"dot","criterion":"dp"}`);
/// null uses the defaults.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_train(
    ds: *const FlDataset,
    config_json: *const c_char,
    out: *mut *mut FlModel,
) -> FlStatus {
    guard(|| {
        out_arg(out, "out")?;
        let ds = ref_arg(ds, "ds")?;
        let config = config_arg(config_json)?;
        let outcome = train(&ds.inner.graph, &ds.inner.partition, &config)?;
        *out = Box::into_raw(Box::new(FlModel {
            inner: outcome.model,
            config,
        }));
        Ok(())
    })
}

/// Edge probability of the pair `(i, j)`.
///
/// # Safety
/// `model` must be a live model handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_probability(model: *const FlModel, i: usize, j: usize, out: *mut f64) -> FlStatus {
    guard(|| {
        out_arg(out, "out")?;
        let m = ref_arg(model, "model")?;
        let n = m.inner.node_count();
        if i >= n || j >= n || i == j {
            return Err(Failure(
                FlStatus::InvalidArgument,
                format!("pair ({i}, {j}) invalid for {n} nodes"),
            ));
        }
        *out = m.inner.probability(i, j);
        Ok(())
    })
}

/// # Safety
/// `model` must be a live model handle or null.
#[no_mangle]
pub unsafe extern "C" fn fl_model_node_count(model: *const FlModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.node_count())
}

/// Serializes the model and its training config as a JSON checkpoint.
///
/// # Safety
/// `model` must be a live model handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_to_json(model: *const FlModel, out_json: *mut *mut c_char) -> FlStatus {
    guard(|| {
        out_arg(out_json, "out_json")?;
        let m = ref_arg(model, "model")?;
        let ckpt = Checkpoint {
            model: m.inner.clone(),
            seed: m.config.seed,
            config: serde_json::to_value(&m.config)?,
        };
        *out_json = to_c_string(ckpt.to_json()?)?;
        Ok(())
    })
}

/// Restores a model from a checkpoint written by `fl_model_to_json`.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_from_json(json: *const c_char, out: *mut *mut FlModel) -> FlStatus {
    guard(|| {
        out_arg(out, "out")?;
        let ckpt = Checkpoint::from_json(str_arg(json, "json")?)?;
        let config: TrainConfig = serde_json::from_value(ckpt.config)?;
        *out = Box::into_raw(Box::new(FlModel {
            inner: ckpt.model,
            config,
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn fl_model_free(model: *mut FlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Projects the model onto the fair set for `criterion` (`"dp"` or `"eo"`)
/// and writes a JSON object with the KL divergence, multipliers and
/// per-constraint values and targets.
///
/// # Safety
/// Handles must be live; `criterion` nul-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_projection(
    model: *const FlModel,
    ds: *const FlDataset,
    criterion: *const c_char,
    out_json: *mut *mut c_char,
) -> FlStatus {
    guard(|| {
        out_arg(out_json, "out_json")?;
        let m = ref_arg(model, "model")?;
        let ds = ref_arg(ds, "ds")?;
        let criterion: Criterion = str_arg(criterion, "criterion")?.parse()?;
        if m.inner.node_count() != ds.inner.graph.node_count() {
            return Err(Failure(
                FlStatus::InvalidArgument,
                "model and dataset have different node counts".into(),
            ));
        }
        let universe = PairUniverse::new(&ds.inner.graph, &ds.inner.partition);
        let system = build_constraints(criterion, &universe, &ds.inner.graph)?
            .ok_or_else(|| Failure(FlStatus::InvalidArgument, "criterion `none` has no projection".into()))?;
        let targets = system.constraint_targets(&m.inner, &universe);
        let z = logits(&m.inner, &universe);
        let proj = project(&z, &system, &targets.values, None, &ProjectionOptions::default())?;
        let marginals: Vec<f64> = z.iter().map(|&v| fairlink::numeric::sigmoid(v)).collect();
        let report = serde_json::json!({
            "kl": proj.kl,
            "lambda": proj.lambda,
            "dual_residual": proj.dual_residual,
            "iterations": proj.iterations,
            "converged": proj.converged,
            "report": system.report(&marginals, &targets),
        });
        *out_json = to_c_string(report.to_string())?;
        Ok(())
    })
}

/// Holds out `test_frac` of the edges (seeded), trains on the rest and writes
/// the evaluation report (AUC, DP, EO, RDP, RB) as JSON.
///
/// # Safety
/// `ds` must be a live handle; `config_json` null or nul-terminated;
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_evaluate(
    ds: *const FlDataset,
    config_json: *const c_char,
    test_frac: f64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> FlStatus {
    guard(|| {
        out_arg(out_json, "out_json")?;
        let ds = ref_arg(ds, "ds")?;
        let mut config = config_arg(config_json)?;
        config.seed = seed;
        let data_split = split(&ds.inner.graph, test_frac, seed)?;
        let outcome = train(&data_split.train_graph, &ds.inner.partition, &config)?;
        let report = evaluate(
            &outcome.model,
            &data_split,
            &ds.inner.graph,
            &ds.inner.partition,
            &EvalOptions { seed, eo_threshold: None },
        )?;
        *out_json = to_c_string(serde_json::to_string(&report)?)?;
        Ok(())
    })
}
