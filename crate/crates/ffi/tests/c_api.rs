use std::ffi::{CStr, CString};
use std::ptr;

use esc_ffi::*;

const SHORT: &str = r#"
[scenarios.short]
initial_position = [2.0, 2.0]
duration = 5.0
seed = 3
noise_std = 0.05

[scenarios.short.field]
kind = "quadratic"
peak = 10.0
center = [1.0, 1.0]
weights = [0.5, 1.5]

[scenarios.short.esc]
variant = "gekf-adaptive"
omega = 30.0
c = 0.3
lambda = [0.015, 0.0995]
a0 = [1.0, 1.0]
filter_corners = [1.0, 1.0]

[scenarios.short.gekf]
t_out = 0.1
substeps = 10
q = 0.05
r = 0.5
p0 = [4.0, 4.0, 4.0, 4.0, 4.0]
"#;

fn last_error() -> String {
    let p = esc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(text: &str, force: bool) -> *mut EscConfig {
    let text = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    let st = unsafe { esc_config_from_str(text.as_ptr(), force, &mut cfg) };
    assert_eq!(st, EscStatus::Ok);
    cfg
}

fn run(cfg: *const EscConfig, name: &str) -> (EscStatus, *mut EscRecord) {
    let name = CString::new(name).unwrap();
    let mut rec = ptr::null_mut();
    let st = unsafe { esc_run(cfg, name.as_ptr(), &mut rec) };
    (st, rec)
}

fn column(rec: *const EscRecord, c: usize) -> Vec<f64> {
    let n = unsafe { esc_record_len(rec) };
    let mut v = vec![0.0; n];
    assert_eq!(unsafe { esc_record_column(rec, c, v.as_mut_ptr(), n) }, EscStatus::Ok);
    v
}

#[test]
fn run_and_read_back() {
    let cfg = config(SHORT, false);
    unsafe {
        assert_eq!(esc_config_scenario_count(cfg), 1);
        assert_eq!(CStr::from_ptr(esc_config_scenario_name(cfg, 0)).to_str(), Ok("short"));
        assert!(esc_config_scenario_name(cfg, 1).is_null());
    }
    let (st, rec) = run(cfg, "short");
    assert_eq!(st, EscStatus::Ok);
    let n = unsafe { esc_record_len(rec) };
    assert_eq!(n, 501);

    let t = column(rec, 0);
    assert_eq!(t[0], 0.0);
    assert!((t[n - 1] - 5.0).abs() < 1e-9);
    let mut row = [0.0; ESC_COLUMNS];
    unsafe {
        assert_eq!(esc_record_row(rec, n - 1, row.as_mut_ptr(), ESC_COLUMNS), EscStatus::Ok);
    }
    assert_eq!(row[0], t[n - 1]);
    assert_eq!(row[1], column(rec, 1)[n - 1]);

    let mut json = ptr::null_mut();
    unsafe {
        assert_eq!(esc_record_metrics_json(rec, &mut json), EscStatus::Ok);
        let v: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert!(v["final_distance"].as_f64().unwrap() < 1.5);
        esc_string_free(json);
        esc_record_free(rec);
        esc_config_free(cfg);
    }
}

#[test]
fn seed_override_changes_noise_only() {
    let cfg = config(SHORT, false);
    let (_, a) = run(cfg, "short");
    unsafe { esc_config_set_seed(cfg, 4) };
    let (_, b) = run(cfg, "short");
    let f = |r| column(r, 3)[0];
    assert_eq!(f(a), f(b));
    assert_ne!(column(a, 4), column(b, 4));
    unsafe {
        esc_record_free(a);
        esc_record_free(b);
        esc_config_free(cfg);
    }
}

#[test]
fn config_errors() {
    let bad = CString::new(SHORT.replace("omega = 30.0", "omega = -1.0")).unwrap();
    let mut cfg = ptr::null_mut();
    let st = unsafe { esc_config_from_str(bad.as_ptr(), false, &mut cfg) };
    assert_eq!(st, EscStatus::ConfigError);
    assert!(cfg.is_null());
    assert!(last_error().contains("omega"));

    let st = unsafe { esc_config_from_str(ptr::null(), false, &mut cfg) };
    assert_eq!(st, EscStatus::InvalidArgument);

    let missing = CString::new("/nonexistent/cfg.toml").unwrap();
    let st = unsafe { esc_config_from_path(missing.as_ptr(), false, &mut cfg) };
    assert_eq!(st, EscStatus::IoError);

    let cfg = config(SHORT, false);
    let (st, rec) = run(cfg, "nope");
    assert_eq!(st, EscStatus::ConfigError);
    assert!(rec.is_null());
    assert!(last_error().contains("nope"));
    unsafe { esc_config_free(cfg) };
}

#[test]
fn abort_returns_partial_record() {
    let text = SHORT.replace("lambda = [0.015, 0.0995]", "lambda = [-100.0, -100.0]");
    let cfg = config(&text, true);
    let (st, rec) = run(cfg, "short");
    assert_eq!(st, EscStatus::NumericalAbort);
    assert!(!rec.is_null());
    let n = unsafe { esc_record_len(rec) };
    assert!(n > 0 && n < 501);
    assert!(last_error().contains("non-finite"));
    unsafe {
        esc_record_free(rec);
        esc_config_free(cfg);
    }
}

#[test]
fn presets_and_bounds() {
    let name = CString::new("known_objective").unwrap();
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(esc_config_from_preset(name.as_ptr(), &mut cfg), EscStatus::Ok);
        assert_eq!(esc_config_scenario_count(cfg), 2);
        assert_eq!(
            esc_config_set_measurement_model(cfg, EscMeasurementModel::PaperLiteral),
            EscStatus::Ok
        );
        esc_config_free(cfg);
    }
    let cfg = config(SHORT, false);
    let (_, rec) = run(cfg, "short");
    let mut buf = [0.0; 4];
    unsafe {
        assert_eq!(esc_record_row(rec, 0, buf.as_mut_ptr(), 4), EscStatus::InvalidArgument);
        let mut row = [0.0; ESC_COLUMNS];
        assert_eq!(
            esc_record_row(rec, 10_000, row.as_mut_ptr(), ESC_COLUMNS),
            EscStatus::InvalidArgument
        );
        assert_eq!(esc_record_column(rec, ESC_COLUMNS, buf.as_mut_ptr(), 4), EscStatus::InvalidArgument);
        assert_eq!(CStr::from_ptr(esc_column_name(7)).to_str(), Ok("J_x"));
        assert!(esc_column_name(ESC_COLUMNS).is_null());
        esc_record_free(rec);
        esc_config_free(cfg);
        esc_record_free(ptr::null_mut());
        esc_config_free(ptr::null_mut());
        esc_string_free(ptr::null_mut());
    }
}

#[test]
fn csv_export_matches_core() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.csv");
    let cfg = config(SHORT, false);
    let (_, rec) = run(cfg, "short");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe { assert_eq!(esc_record_write_csv(rec, cpath.as_ptr()), EscStatus::Ok) };
    let back = esc_core::io::read_csv(&path).unwrap();
    assert_eq!(back.samples.len(), unsafe { esc_record_len(rec) });
    assert_eq!(back.samples[100].position[0], column(rec, 1)[100]);
    unsafe {
        esc_record_free(rec);
        esc_config_free(cfg);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/esc_ffi.h");
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("ESC_STATUS_NUMERICAL_ABORT = 2"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", "-std=c99"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/esc_ffi.h"))
        .output()
    else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn c_program_links_and_runs() {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = deps.join("libesc_ffi.a");
    if !lib.exists() {
        eprintln!("no static library next to the test binary, skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("run_preset");
    let manifest = env!("CARGO_MANIFEST_DIR");
    let Ok(status) = std::process::Command::new("cc")
        .arg(format!("{manifest}/examples/run_preset.c"))
        .arg(format!("-I{manifest}/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
    else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(status.success());
    let out = std::process::Command::new(&exe)
        .args(["known_objective", "sim_known_objective"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("rows 10001"), "{text}");
    assert!(text.contains("\"final_distance\""), "{text}");

    let out = std::process::Command::new(&exe).args(["nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no bundled preset"));
}
