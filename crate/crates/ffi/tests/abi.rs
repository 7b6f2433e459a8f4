use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use amlgraph_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(aml_last_error_message()) }.to_string_lossy().into_owned()
}

fn synth_csv(dir: &tempfile::TempDir) -> CString {
    let data = amlgraph::synth::generate(&amlgraph::synth::SynthConfig::default()).unwrap();
    let path = dir.path().join("t.csv");
    data.write_transactions(&path).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn pipeline_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth_csv(&dir);
    unsafe {
        let cfg = aml_config_default();
        assert_eq!(aml_config_set_workers(cfg, 2), AmlStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(aml_run_pipeline(input.as_ptr(), cfg, &mut report), AmlStatus::Ok, "{}", last_error());
        let n = aml_report_community_count(report);
        assert!(n > 0);
        assert!(aml_report_modularity(report).is_finite());

        let mut prev_psi = f64::INFINITY;
        for i in 0..n {
            let mut c = AmlCommunity::default();
            assert_eq!(aml_report_community(report, i, &mut c), AmlStatus::Ok);
            assert!(c.psi <= prev_psi);
            assert!(c.level <= 3);
            prev_psi = c.psi;
        }
        let mut c = AmlCommunity::default();
        assert_eq!(aml_report_community(report, n, &mut c), AmlStatus::InvalidInput);

        // the JSON matches what the library itself writes
        let mut json = ptr::null_mut();
        assert_eq!(aml_report_to_json(report, &mut json), AmlStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        aml_string_free(json);
        let direct = amlgraph::pipeline::run_pipeline(
            std::path::Path::new(input.to_str().unwrap()),
            &amlgraph::PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(text, direct.report.to_json().unwrap());

        aml_report_free(report);
        aml_config_free(cfg);
    }
}

#[test]
fn missing_input_is_an_io_error() {
    let path = CString::new("/nonexistent/t.csv").unwrap();
    unsafe {
        let cfg = aml_config_default();
        let mut report = ptr::null_mut();
        assert_eq!(aml_run_pipeline(path.as_ptr(), cfg, &mut report), AmlStatus::Io);
        assert!(report.is_null());
        assert!(last_error().contains("ingest"));
        aml_config_free(cfg);
    }
}

#[test]
fn null_and_invalid_arguments_are_reported() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(aml_config_from_json(ptr::null(), &mut out), AmlStatus::NullPointer);
        let bad_utf8 = [0xffu8, 0];
        assert_eq!(aml_config_from_json(bad_utf8.as_ptr().cast(), &mut out), AmlStatus::InvalidUtf8);
        let bad_ratio = CString::new(r#"{"risk_weights": {"nodes": 0.9}}"#).unwrap();
        assert_eq!(aml_config_from_json(bad_ratio.as_ptr(), &mut out), AmlStatus::Config);
        assert!(!last_error().is_empty());
        assert_eq!(aml_report_community_count(ptr::null()), 0);
        assert!(aml_report_modularity(ptr::null()).is_nan());
        aml_report_free(ptr::null_mut());
        aml_config_free(ptr::null_mut());
        aml_digraph_free(ptr::null_mut());
        aml_string_free(ptr::null_mut());
    }
}

#[test]
fn standardize_matches_the_library() {
    let xs = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
    let mut z = [0.0; 6];
    unsafe {
        assert_eq!(aml_standardize(xs.as_ptr(), xs.len(), z.as_mut_ptr()), AmlStatus::Ok);
        assert_eq!(aml_standardize(ptr::null(), 0, z.as_mut_ptr()), AmlStatus::InvalidInput);
    }
    assert_eq!(z.to_vec(), amlgraph::stats::standardize(&xs).unwrap());
}

#[test]
fn digraph_louvain_matches_the_library() {
    let arcs = [(0u32, 1u32, 2.0), (1, 2, 1.0), (2, 0, 1.5), (3, 4, 1.0), (4, 3, 2.0), (2, 3, 0.2)];
    let src: Vec<u32> = arcs.iter().map(|a| a.0).collect();
    let dst: Vec<u32> = arcs.iter().map(|a| a.1).collect();
    let w: Vec<f64> = arcs.iter().map(|a| a.2).collect();
    let g = amlgraph::louvain::WeightedDigraph::from_arcs(5, &arcs).unwrap();
    let expected = amlgraph::louvain::run_louvain(&g, &Default::default()).unwrap();
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(
            aml_digraph_new(5, src.as_ptr(), dst.as_ptr(), w.as_ptr(), arcs.len(), &mut h),
            AmlStatus::Ok
        );
        let mut labels = [0u32; 5];
        let mut q = 0.0;
        assert_eq!(aml_digraph_louvain(h, true, labels.as_mut_ptr(), &mut q), AmlStatus::Ok);
        assert_eq!(labels.to_vec(), expected.assignment);
        assert_eq!(q, expected.modularity);
        let mut q2 = 0.0;
        assert_eq!(aml_digraph_modularity(h, labels.as_ptr(), 5, &mut q2), AmlStatus::Ok);
        assert!((q - q2).abs() < 1e-12);
        assert_eq!(aml_digraph_modularity(h, labels.as_ptr(), 4, &mut q2), AmlStatus::InvalidInput);
        aml_digraph_free(h);
    }
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_against_header() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = crate_dir.join("include");
    assert!(header_dir.join("amlgraph.h").exists(), "header not generated");
    // target/<profile>/deps/<this test> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libamlgraph_ffi.a");
    if !lib.exists() {
        panic!("static library missing at {}", lib.display());
    }
    let out_dir = tempfile::tempdir().unwrap();
    let bin = out_dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header_dir)
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap_or_else(|e| panic!("cannot run {cc}: {e}"));
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
