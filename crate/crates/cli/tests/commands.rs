use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use pondwatch::pipeline::{ExperimentConfig, Method};
use pondwatch::raster::{
    read_labels, read_labels_with_revision, write_labels, LabelKind, LabelRaster, NODATA,
};
use pondwatch_cli::{run, Cli};
use serde_json::json;

fn cli(args: &[&str]) -> anyhow::Result<ExitCode> {
    run(Cli::try_parse_from(
        std::iter::once("pondwatch").chain(args.iter().copied()),
    )?)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two small synthetic regions and a one-trial experiment config over them.
fn synth_root(root: &Path) -> std::path::PathBuf {
    let synth_cfg = root.join("synth.json");
    fs::write(
        &synth_cfg,
        json!({"width": 48, "height": 48, "ponds": 5, "radius_min": 3.0, "radius_max": 5.0, "sand_patches": 2})
            .to_string(),
    )
    .unwrap();
    let regions = root.join("regions");
    let code = cli(&[
        "synth",
        "--out",
        path(&regions),
        "--count",
        "2",
        "--seed",
        "3",
        "--config",
        path(&synth_cfg),
    ])
    .unwrap();
    assert_eq!(code, ExitCode::SUCCESS);

    let cfg_path = regions.join("experiment.json");
    let mut cfg = ExperimentConfig::load(&cfg_path).unwrap();
    cfg.methods = vec![Method::NuSvm, Method::SvmStv];
    cfg.label_sizes = vec![5];
    cfg.trials.n_trials = 2;
    cfg.params.stv.epsilon = 0.05;
    let mut text = serde_json::to_value(&cfg).unwrap();
    text["regions"] =
        json!([{"id": "synth-000", "dir": "synth-000"}, {"id": "synth-001", "dir": "synth-001"}]);
    fs::write(&cfg_path, text.to_string()).unwrap();
    cfg_path
}

#[test]
fn synth_writes_regions_and_a_runnable_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = synth_root(dir.path());
    let regions = cfg_path.parent().unwrap();
    for id in ["synth-000", "synth-001"] {
        for f in [
            "region.json",
            "t1.json",
            "t2.json",
            "truth_change.json",
            "labels_t1.json",
            "labels_change.json",
        ] {
            assert!(regions.join(id).join(f).is_file(), "{id}/{f}");
        }
    }
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.regions.len(), 2);
    assert!(cfg.output_dir.is_absolute());
}

#[test]
fn synth_is_deterministic_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        cli(&[
            "synth",
            "--out",
            path(d.path()),
            "--count",
            "1",
            "--seed",
            "11",
        ])
        .unwrap();
    }
    for f in ["t1.bin", "t2.bin", "truth_change.bin"] {
        let x = fs::read(a.path().join("synth-000").join(f)).unwrap();
        let y = fs::read(b.path().join("synth-000").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn run_eval_and_heatmap_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = synth_root(dir.path());
    let out = dir.path().join("results");
    let args = ["--config", path(&cfg_path), "--out", path(&out)];
    assert_eq!(
        cli(&[&["run"], &args[..]].concat()).unwrap(),
        ExitCode::SUCCESS
    );

    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    // 2 regions × 2 methods × 1 size × 2 trials, plus the header.
    assert_eq!(csv.lines().count(), 1 + 8);
    assert!(out.join("summary.json").is_file());

    assert_eq!(
        cli(&[&["eval"], &args[..]].concat()).unwrap(),
        ExitCode::SUCCESS
    );
    assert_eq!(
        fs::read_to_string(out.join("metrics_recomputed.csv")).unwrap(),
        csv
    );

    let png = out.join("heatmaps/synth-000/svm_stv_n5.png");
    let before = fs::read(&png).unwrap();
    fs::remove_dir_all(out.join("heatmaps")).unwrap();
    assert_eq!(
        cli(&[&["heatmap"], &args[..]].concat()).unwrap(),
        ExitCode::SUCCESS
    );
    assert_eq!(fs::read(&png).unwrap(), before);
}

#[test]
fn seed_flag_changes_the_training_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = synth_root(dir.path());
    let mut csvs = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(format!("out{seed}"));
        cli(&[
            "run",
            "--config",
            path(&cfg_path),
            "--out",
            path(&out),
            "--seed",
            seed,
        ])
        .unwrap();
        csvs.push(fs::read_to_string(out.join("metrics.csv")).unwrap());
    }
    assert_ne!(csvs[0], csvs[1]);
}

#[test]
fn run_exits_nonzero_when_a_cell_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = synth_root(dir.path());
    // One labeled pixel per class cannot train a classifier.
    let truth = read_labels(
        cfg_path
            .parent()
            .unwrap()
            .join("synth-000/truth_change.json"),
    )
    .unwrap();
    let mut values = vec![NODATA; truth.values.len()];
    for (i, v) in values.iter_mut().take(4).enumerate() {
        *v = i as u8;
    }
    let sparse = dir.path().join("sparse.json");
    write_labels(
        &LabelRaster::new(truth.width, truth.height, LabelKind::Change, values).unwrap(),
        &sparse,
    )
    .unwrap();
    let mut cfg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&cfg_path).unwrap()).unwrap();
    cfg["regions"][0]["truth"] = json!(sparse);
    fs::write(&cfg_path, cfg.to_string()).unwrap();

    let out = dir.path().join("results");
    let code = cli(&["run", "--config", path(&cfg_path), "--out", path(&out)]).unwrap();
    assert_eq!(code, ExitCode::FAILURE);
    // The healthy region still reports.
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("synth-001,")));
}

#[test]
fn invalid_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        json!({"regions": [{"id": "x", "dir": "missing"}]}).to_string(),
    )
    .unwrap();
    assert!(cli(&["run", "--config", path(&cfg)]).is_err());
    assert!(cli(&["run"]).is_err());
}

#[test]
fn ingest_copies_a_region_and_checks_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = synth_root(dir.path());
    let src = cfg_path.parent().unwrap().join("synth-000");
    let root = dir.path().join("ingested");
    let code = cli(&[
        "ingest",
        "--t1",
        path(&src.join("t1.json")),
        "--t2",
        path(&src.join("t2.json")),
        "--id",
        "field-a",
        "--out",
        path(&root),
        "--truth",
        path(&src.join("truth_change.json")),
        "--autolabel",
    ])
    .unwrap();
    assert_eq!(code, ExitCode::SUCCESS);
    let region = root.join("field-a");
    assert_eq!(
        fs::read(region.join("t2.bin")).unwrap(),
        fs::read(src.join("t2.bin")).unwrap()
    );
    assert_eq!(
        read_labels(region.join("truth_change.json")).unwrap(),
        read_labels(src.join("truth_change.json")).unwrap()
    );
    assert_eq!(
        read_labels(region.join("labels_change.json")).unwrap(),
        read_labels(src.join("labels_change.json")).unwrap()
    );

    // A state map is not a change map.
    let err = cli(&[
        "ingest",
        "--t1",
        path(&src.join("t1.json")),
        "--t2",
        path(&src.join("t2.json")),
        "--id",
        "field-b",
        "--out",
        path(&root),
        "--truth",
        path(&src.join("truth_t1.json")),
    ]);
    assert!(err.is_err());
}

#[test]
fn autolabel_rewrites_layers_with_a_new_revision() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = synth_root(dir.path());
    let region = cfg_path.parent().unwrap().join("synth-001");
    let (before, rev) = read_labels_with_revision(region.join("labels_t2.json")).unwrap();
    assert_eq!(rev, Some(0));
    assert_eq!(
        cli(&["autolabel", path(&region)]).unwrap(),
        ExitCode::SUCCESS
    );
    let (after, rev) = read_labels_with_revision(region.join("labels_t2.json")).unwrap();
    assert_eq!(rev, Some(1));
    assert_eq!(after, before);

    let strict = dir.path().join("autolabel.json");
    fs::write(&strict, json!({"ci_low": -0.5, "ci_high": 0.5}).to_string()).unwrap();
    cli(&["autolabel", path(&region), "--config", path(&strict)]).unwrap();
    let (relabelled, rev) = read_labels_with_revision(region.join("labels_t2.json")).unwrap();
    assert_eq!(rev, Some(2));
    assert_ne!(relabelled, before);
}
