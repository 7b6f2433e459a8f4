//! C ABI for amlgraph.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns an
//! [`AmlStatus`]; on failure, [`aml_last_error_message`] describes the error
//! on the calling thread. Strings returned by the library must be released
//! with [`aml_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use amlgraph::louvain::{self, CommunityState, LouvainConfig, Mode, WeightedDigraph};
use amlgraph::pipeline::{self, PipelineOutput};
use amlgraph::{Error, PipelineConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Config = 4,
    Io = 5,
    Format = 6,
    Structural = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

/// Pipeline configuration.
pub struct AmlConfig(PipelineConfig);

/// Result of a pipeline run.
pub struct AmlReport(PipelineOutput);

/// Weighted digraph for direct community detection.
pub struct AmlDigraph(WeightedDigraph);

/// One scored community, by value.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AmlCommunity {
    pub community: u32,
    pub mcs_id: u32,
    pub node_count: usize,
    pub edge_count: usize,
    pub money: f64,
    pub avg_degree: f64,
    pub entropy: f64,
    pub psi: f64,
    /// Risk level 1..=3, or 0 when unranked.
    pub level: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(e: &Error) -> AmlStatus {
    match e {
        Error::Io { .. } => AmlStatus::Io,
        Error::Format(_) | Error::Csv(_) | Error::Json(_) => AmlStatus::Format,
        Error::Config(_) => AmlStatus::Config,
        Error::Structural(_) => AmlStatus::Structural,
        Error::InvalidInput(_) => AmlStatus::InvalidInput,
        Error::Stage { source, .. } => status_of(source),
    }
}

struct Failure(AmlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AmlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            AmlStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| payload.downcast_ref::<&str>().copied())
                .unwrap_or("panic");
            set_last_error(&format!("internal error: {msg}"));
            AmlStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(AmlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(AmlStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(AmlStatus::Internal, "string contains NUL".into()))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn aml_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aml_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn aml_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration. Never null.
#[no_mangle]
pub extern "C" fn aml_config_default() -> *mut AmlConfig {
    Box::into_raw(Box::new(AmlConfig(PipelineConfig::default())))
}

/// Parses a JSON configuration; absent keys take their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn aml_config_from_json(json: *const c_char, out: *mut *mut AmlConfig) -> AmlStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let cfg = PipelineConfig::from_json(text)?;
        cfg.validate()?;
        write_out(out, Box::into_raw(Box::new(AmlConfig(cfg))), "out")
    })
}

/// Serializes a configuration as JSON into a new string.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn aml_config_to_json(cfg: *const AmlConfig, out: *mut *mut c_char) -> AmlStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        write_out(out, into_c_string(cfg.0.to_json()?)?, "out")
    })
}

/// Sets the worker count; 0 means all cores.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn aml_config_set_workers(cfg: *mut AmlConfig, workers: usize) -> AmlStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        cfg.0.worker_count = (workers > 0).then_some(workers);
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn aml_config_free(cfg: *mut AmlConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the whole pipeline on a transaction CSV.
///
/// # Safety
/// `input_path` must be a NUL-terminated string, `cfg` a live handle and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn aml_run_pipeline(
    input_path: *const c_char,
    cfg: *const AmlConfig,
    out: *mut *mut AmlReport,
) -> AmlStatus {
    guard(|| {
        let path = str_arg(input_path, "input_path")?;
        let cfg = &borrow(cfg, "cfg")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let output = pipeline::with_workers(cfg.worker_count, || pipeline::run_pipeline(Path::new(path), cfg))??;
        write_out(out, Box::into_raw(Box::new(AmlReport(output))), "out")
    })
}

/// Number of scored communities, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aml_report_community_count(report: *const AmlReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.report.communities.len())
}

/// Modularity of the final partition, or NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aml_report_modularity(report: *const AmlReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.report.modularity)
}

/// Community at `index` in descending risk order.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn aml_report_community(
    report: *const AmlReport,
    index: usize,
    out: *mut AmlCommunity,
) -> AmlStatus {
    guard(|| {
        let r = &borrow(report, "report")?.0.report;
        let c = r.communities.get(index).ok_or_else(|| {
            Failure(
                AmlStatus::InvalidInput,
                format!("community index {index} out of range 0..{}", r.communities.len()),
            )
        })?;
        let m = &c.metrics;
        let value = AmlCommunity {
            community: m.community,
            mcs_id: m.mcs_id,
            node_count: m.node_count,
            edge_count: m.edge_count,
            money: m.money,
            avg_degree: m.avg_degree,
            entropy: m.entropy,
            psi: c.psi,
            level: c.level.unwrap_or(0),
        };
        write_out(out, value, "out")
    })
}

/// Serializes the risk report as JSON into a new string.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn aml_report_to_json(report: *const AmlReport, out: *mut *mut c_char) -> AmlStatus {
    guard(|| {
        let r = borrow(report, "report")?;
        write_out(out, into_c_string(r.0.report.to_json()?)?, "out")
    })
}

/// # Safety
/// `report` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn aml_report_free(report: *mut AmlReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Shannon entropy (bits) of binned deviations from the mean time.
///
/// # Safety
/// `times` must point to `len` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn aml_temporal_entropy(times: *const i64, len: usize, bins: usize, out: *mut f64) -> AmlStatus {
    guard(|| {
        let times = slice_arg(times, len, "times")?;
        write_out(out, amlgraph::risk::temporal_entropy(times, bins)?, "out")
    })
}

/// Z-scores of `values` into `out` (population standard deviation).
///
/// # Safety
/// `values` and `out` must each hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn aml_standardize(values: *const f64, len: usize, out: *mut f64) -> AmlStatus {
    guard(|| {
        let values = slice_arg(values, len, "values")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let z = amlgraph::stats::standardize(values)?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&z);
        Ok(())
    })
}

/// Builds a digraph on `n` nodes from `arc_count` weighted arcs. Every node
/// needs positive total weight.
///
/// # Safety
/// `src`, `dst` and `weight` must each hold `arc_count` values and `out` be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn aml_digraph_new(
    n: usize,
    src: *const u32,
    dst: *const u32,
    weight: *const f64,
    arc_count: usize,
    out: *mut *mut AmlDigraph,
) -> AmlStatus {
    guard(|| {
        let (src, dst, weight) = (
            slice_arg(src, arc_count, "src")?,
            slice_arg(dst, arc_count, "dst")?,
            slice_arg(weight, arc_count, "weight")?,
        );
        let arcs: Vec<(u32, u32, f64)> = (0..arc_count).map(|k| (src[k], dst[k], weight[k])).collect();
        let g = WeightedDigraph::from_arcs(n, &arcs)?;
        write_out(out, Box::into_raw(Box::new(AmlDigraph(g))), "out")
    })
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aml_digraph_node_count(g: *const AmlDigraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.node_count())
}

/// Detects communities. `parallel` selects the synchronous engine.
/// `assignment` receives one community id per node, numbered densely by
/// smallest member; `modularity` may be null.
///
/// # Safety
/// `g` must be a live handle and `assignment` hold `aml_digraph_node_count(g)`
/// values.
#[no_mangle]
pub unsafe extern "C" fn aml_digraph_louvain(
    g: *const AmlDigraph,
    parallel: bool,
    assignment: *mut u32,
    modularity: *mut f64,
) -> AmlStatus {
    guard(|| {
        let g = &borrow(g, "g")?.0;
        if assignment.is_null() && g.node_count() > 0 {
            return Err(null("assignment"));
        }
        let cfg = LouvainConfig {
            mode: if parallel { Mode::Parallel } else { Mode::Serial },
            ..Default::default()
        };
        let r = louvain::run_louvain(g, &cfg)?;
        if g.node_count() > 0 {
            std::slice::from_raw_parts_mut(assignment, g.node_count()).copy_from_slice(&r.assignment);
        }
        if !modularity.is_null() {
            modularity.write(r.modularity);
        }
        Ok(())
    })
}

/// Modularity of a given assignment. Tags must lie in `0..n`.
///
/// # Safety
/// `g` must be a live handle, `assignment` hold `n` values and `out` be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn aml_digraph_modularity(
    g: *const AmlDigraph,
    assignment: *const u32,
    n: usize,
    out: *mut f64,
) -> AmlStatus {
    guard(|| {
        let g = &borrow(g, "g")?.0;
        let labels = slice_arg(assignment, n, "assignment")?;
        let s = CommunityState::from_assignment(g, labels.to_vec())?;
        write_out(out, s.modularity(g), "out")
    })
}

/// # Safety
/// `g` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn aml_digraph_free(g: *mut AmlDigraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}
