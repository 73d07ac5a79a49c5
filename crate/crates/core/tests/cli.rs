use std::path::Path;
use std::process::Command;

use covinterp::data::load_raster;
use covinterp::synthetic::write_field_fixture;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_covinterp"))
}

fn run(args: &[&str], config: &Path, out: &Path) -> std::process::Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--output")
        .arg(out)
        .output()
        .unwrap()
}

fn fixture(dir: &Path) -> std::path::PathBuf {
    let f = write_field_fixture(&dir.join("data"), 60, 17).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "manifest = {}\ntemplate = {}\ngrid_n = 20\nn_splits = 100\nseed = 42\n",
            f.manifest.display(),
            f.template.display()
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn predict_produces_complete_rasters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let out = dir.path().join("out");
    let o = run(&["predict"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pred = load_raster(out.join("prediction.asc")).unwrap();
    let unc = load_raster(out.join("uncertainty.asc")).unwrap();
    assert!(pred.same_geometry(&unc));
    assert_eq!((pred.ncols, pred.nrows), (20, 20));
    for (p, u) in pred.values.iter().zip(&unc.values) {
        assert!(p.is_finite() && !pred.is_nodata(*p));
        assert!(*u >= 0.0 && !unc.is_nodata(*u));
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run_metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 42);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    assert!(meta["outputs"].as_array().unwrap().iter().any(|v| v == "prediction.asc"));
}

#[test]
fn select_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["select"], &cfg, &a).status.success());
    assert!(run(&["select", "--threads", "1"], &cfg, &b).status.success());
    for f in ["ensemble_report.csv", "frequency.csv", "size_histogram.csv", "vsepe_summary.csv", "drop_log.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let summary = std::fs::read_to_string(a.join("vsepe_summary.csv")).unwrap();
    assert!(summary.starts_with("method,mccm,min,q1,median,mean,q3,max,r2\nlasso_lar,0.95,"));
}

#[test]
fn realign_expand_and_sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let out = dir.path().join("out");
    assert!(run(&["realign"], &cfg, &out).status.success());
    let t = std::fs::read_to_string(out.join("realigned.csv")).unwrap();
    assert!(t.starts_with("easting,northing,response,ECa,Elev,Green\n"));
    assert_eq!(t.lines().count(), 61);
    assert!(run(&["expand"], &cfg, &out).status.success());
    let log = std::fs::read_to_string(out.join("drop_log.csv")).unwrap();
    assert!(log.starts_with("dropped_term,kept_term,abs_r,rule"));
    let o = run(
        &["sweep", "--sweep_train_sizes", "30,40", "--sweep_mccm", "0.8,0.95", "--n_splits", "20"],
        &cfg,
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(s.lines().count(), 5);
    assert!(s.starts_with("method,train_size,mccm,"));
}

#[test]
fn invalid_mccm_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let o = run(&["select", "--mccm", "1.5"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("mccm: must lie in (0, 1], got 1.5"), "{err}");
    assert_eq!(err.matches("mccm").count(), 1);
}

#[test]
fn missing_seed_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "manifest = nothing.csv\n").unwrap();
    let o = run(&["predict"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}
