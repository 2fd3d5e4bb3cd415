use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use featprop_ffi::*;

fn last_error() -> String {
    let p = fp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

/// Path 0 - 1 - 2 from two users.
unsafe fn chain() -> (*mut FpInteractions, *mut FpGraph) {
    let users = [0usize, 0, 1, 1];
    let items = [0usize, 1, 1, 2];
    let mut r = ptr::null_mut();
    assert_eq!(
        fp_interactions_new(2, 3, users.as_ptr(), items.as_ptr(), 4, &mut r),
        FpStatus::Ok
    );
    let mut g = ptr::null_mut();
    assert_eq!(fp_graph_build(r, 20, true, &mut g), FpStatus::Ok);
    (r, g)
}

#[test]
fn handles_report_sizes() {
    unsafe {
        let (r, g) = chain();
        assert_eq!(fp_interactions_num_users(r), 2);
        assert_eq!(fp_interactions_num_items(r), 3);
        assert_eq!(fp_interactions_count(r), 4);
        assert_eq!(fp_graph_num_items(g), 3);
        assert_eq!(fp_graph_num_edges(g), 2);
        fp_graph_free(g);
        fp_interactions_free(r);
        fp_graph_free(ptr::null_mut());
        assert_eq!(fp_graph_num_items(ptr::null()), 0);
    }
}

#[test]
fn featprop_fills_two_item_graph() {
    unsafe {
        let users = [0usize, 0];
        let items = [0usize, 1];
        let mut r = ptr::null_mut();
        assert_eq!(
            fp_interactions_new(1, 2, users.as_ptr(), items.as_ptr(), 2, &mut r),
            FpStatus::Ok
        );
        let mut g = ptr::null_mut();
        assert_eq!(fp_graph_build(r, 20, true, &mut g), FpStatus::Ok);
        let known = [1u8, 0];
        let mut m = ptr::null_mut();
        assert_eq!(fp_mask_new(known.as_ptr(), 2, &mut m), FpStatus::Ok);
        assert!(fp_mask_is_known(m, 0) && !fp_mask_is_known(m, 1) && !fp_mask_is_known(m, 9));

        let features = [4.0, 123.0];
        let mut out = [0.0; 2];
        let mut report = FpPropagationReport::default();
        let cfg = fp_propagation_config_default();
        assert_eq!(
            (cfg.max_layers, cfg.tolerance, cfg.fallback_mean),
            (20, 1e-6, false)
        );
        let status = fp_featprop(
            g,
            m,
            features.as_ptr(),
            2,
            1,
            &cfg,
            out.as_mut_ptr(),
            &mut report,
        );
        assert_eq!(status, FpStatus::Ok);
        assert_eq!(out, [4.0, 4.0]);
        assert_eq!(report.num_unreachable, 0);
        assert_eq!(report.final_residual, 0.0);

        let mut residual = -1.0;
        assert_eq!(
            fp_harmonic_residual(g, m, out.as_ptr(), 2, 1, &mut residual),
            FpStatus::Ok
        );
        assert!(residual < 1e-12);
        let mut energy = -1.0;
        assert_eq!(
            fp_dirichlet_energy(g, [0.0, 2.0].as_ptr(), 2, 1, &mut energy),
            FpStatus::Ok
        );
        assert_eq!(energy, 2.0);

        fp_mask_free(m);
        fp_graph_free(g);
        fp_interactions_free(r);
    }
}

#[test]
fn output_may_alias_input() {
    unsafe {
        let (r, g) = chain();
        let mut m = ptr::null_mut();
        assert_eq!(fp_mask_new([1u8, 0, 1].as_ptr(), 3, &mut m), FpStatus::Ok);
        let mut f = [1.0, 0.0, 3.0];
        let p = f.as_mut_ptr();
        assert_eq!(
            fp_featprop(g, m, p, 3, 1, ptr::null(), p, ptr::null_mut()),
            FpStatus::Ok
        );
        // item 1 has degree 2, its neighbors degree 1: (1 + 3) / sqrt(2)
        assert!((f[1] - 4.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!((f[0], f[2]), (1.0, 3.0));
        fp_mask_free(m);
        fp_graph_free(g);
        fp_interactions_free(r);
    }
}

#[test]
fn baselines_fill_missing_rows() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(fp_mask_new([1u8, 1, 0].as_ptr(), 3, &mut m), FpStatus::Ok);
        let f = [1.0, 3.0, 3.0, 5.0, 100.0, 100.0];
        let mut out = [0.0; 6];
        let run = |method, out: &mut [f64; 6]| {
            fp_impute_baseline(method, m, f.as_ptr(), 3, 2, 9, 0.0, 1.0, out.as_mut_ptr())
        };
        assert_eq!(run(FpBaseline::Mean, &mut out), FpStatus::Ok);
        assert_eq!(out, [1.0, 3.0, 3.0, 5.0, 2.0, 4.0]);
        assert_eq!(run(FpBaseline::Zeros, &mut out), FpStatus::Ok);
        assert_eq!(&out[4..], &[0.0, 0.0]);
        assert_eq!(run(FpBaseline::Random, &mut out), FpStatus::Ok);
        assert!(out[4..].iter().all(|v| (0.0..1.0).contains(v)));
        let first = out;
        assert_eq!(run(FpBaseline::Random, &mut out), FpStatus::Ok);
        assert_eq!(out, first);
        assert_eq!(
            fp_impute_baseline(
                FpBaseline::Random,
                m,
                f.as_ptr(),
                3,
                2,
                9,
                1.0,
                1.0,
                out.as_mut_ptr()
            ),
            FpStatus::Parameter
        );
        fp_mask_free(m);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(fp_mask_sample(10, 1.5, 0, &mut m), FpStatus::Parameter);
        assert!(last_error().contains("rate"));
        assert!(m.is_null());

        assert_eq!(fp_mask_sample(10, 0.5, 0, &mut m), FpStatus::Ok);
        assert!(fp_last_error().is_null());
        assert_eq!(fp_mask_num_missing(m), 5);

        let (r, g) = chain();
        let f = [0.0; 10];
        let mut out = [0.0; 10];
        let status = fp_featprop(
            g,
            m,
            f.as_ptr(),
            10,
            1,
            ptr::null(),
            out.as_mut_ptr(),
            ptr::null_mut(),
        );
        assert_eq!(status, FpStatus::Shape);

        let status = fp_featprop(
            ptr::null(),
            m,
            f.as_ptr(),
            10,
            1,
            ptr::null(),
            out.as_mut_ptr(),
            ptr::null_mut(),
        );
        assert_eq!(status, FpStatus::NullPointer);
        assert!(last_error().contains("graph"));

        let mut all_missing = ptr::null_mut();
        assert_eq!(
            fp_mask_new([0u8; 3].as_ptr(), 3, &mut all_missing),
            FpStatus::Ok
        );
        let status = fp_featprop(
            g,
            all_missing,
            f.as_ptr(),
            3,
            1,
            ptr::null(),
            out.as_mut_ptr(),
            ptr::null_mut(),
        );
        assert_eq!(status, FpStatus::NoKnownItems);

        let path = CString::new("/no/such/interactions.tsv").unwrap();
        let mut loaded = ptr::null_mut();
        assert_eq!(
            fp_interactions_load(path.as_ptr(), &mut loaded),
            FpStatus::Io
        );
        assert!(last_error().contains("/no/such/interactions.tsv"));

        fp_mask_free(all_missing);
        fp_mask_free(m);
        fp_graph_free(g);
        fp_interactions_free(r);
    }
}

#[test]
fn graph_round_trips_through_file() {
    unsafe {
        let (r, g) = chain();
        let dir = std::env::temp_dir().join(format!("featprop-ffi-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = CString::new(dir.join("g.mtx").to_str().unwrap()).unwrap();
        assert_eq!(fp_graph_save(g, path.as_ptr()), FpStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(fp_graph_load(path.as_ptr(), &mut back), FpStatus::Ok);
        assert_eq!(fp_graph_num_edges(back), 2);
        fp_graph_free(back);
        fp_graph_free(g);
        fp_interactions_free(r);
        std::fs::remove_dir_all(dir).unwrap();
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/featprop.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    let source =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20);
    for name in exports {
        assert!(text.contains(&format!("{name}(")), "header lacks {name}");
    }
    for ty in [
        "typedef struct FpGraph FpGraph;",
        "typedef enum FpStatus",
        "FP_STATUS_NULL_POINTER = 13",
    ] {
        assert!(text.contains(ty), "header lacks {ty}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(header())
        .status()
    else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(status.success());
}

#[test]
fn c_program_links_against_static_library() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    // integration tests live in target/<profile>/deps next to the library
    let exe = std::env::current_exe().unwrap();
    let lib = exe
        .parent()
        .and_then(Path::parent)
        .unwrap()
        .join("libfeatprop_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("static library or C compiler unavailable, skipping");
        return;
    }
    let out_dir = std::env::temp_dir().join(format!("featprop-c-{}", std::process::id()));
    std::fs::create_dir_all(&out_dir).unwrap();
    let bin = out_dir.join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C smoke program failed to build");
    let run = Command::new(&bin).output().unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8(run.stdout)
        .unwrap()
        .starts_with("featprop 0.1.0 ok 2.828427"));
    std::fs::remove_dir_all(out_dir).unwrap();
}
