mod common;

use common::*;

fn synth_workspace(extra_top: &str, n_shots: usize) -> Workspace {
    let ws = Workspace::new(&small_config(extra_top, n_shots));
    ok(ws.path(), "synth", &[]);
    ws
}

/// Replace field `idx` of data row `row` (1-based, after the header).
fn edit_csv(text: &str, row: usize, idx: usize, value: &str) -> String {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            if i == row {
                let mut f: Vec<&str> = line.split(',').collect();
                if idx == usize::MAX {
                    *f.last_mut().unwrap() = value;
                } else {
                    f[idx] = value;
                }
                f.join(",")
            } else {
                line.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

#[test]
fn ingest_partitions_crafted_violations() {
    let ws = synth_workspace("", 60);
    let path = ws.file("data/alpha_shots.csv");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text = edit_csv(&text, 2, 5, "0");
    text = edit_csv(&text, 5, 6, "1");
    text = edit_csv(&text, 9, usize::MAX, "12.5");
    std::fs::write(&path, text).unwrap();
    ok(ws.path(), "ingest", &[]);

    let drop_log = String::from_utf8(ws.read("out/ingest/alpha_drop_log.csv")).unwrap();
    assert_eq!(
        drop_log,
        "shot_id,reason\nalpha-000001,quality\nalpha-000004,degrade\nalpha-000008,rh100\n"
    );
    let kept = String::from_utf8(ws.read("out/ingest/alpha_kept.csv")).unwrap();
    assert_eq!(kept.lines().count(), 1 + 57);
    for id in ["alpha-000001,", "alpha-000004,", "alpha-000008,"] {
        assert!(!kept.contains(id));
    }
    let summary = ws.json("out/ingest/alpha_ingest.json");
    assert_eq!(summary["n_input"], 60);
    assert_eq!(summary["n_kept"], 57);
    assert_eq!(summary["drop_fractions"]["rh100"], 1.0 / 60.0);
    assert_eq!(summary["total_drop_fraction"], 3.0 / 60.0);
    assert_eq!(summary["config"]["master_seed"], 7);
    assert!(ws.file("out/ingest/alpha_kept.csv.run.json").exists());
}

#[test]
fn empty_shot_file_gives_empty_outputs() {
    let ws = synth_workspace("", 30);
    let header = std::fs::read_to_string(ws.file("data/alpha_shots.csv")).unwrap();
    let header = header.lines().next().unwrap().to_string() + "\n";
    std::fs::write(ws.file("data/alpha_shots.csv"), &header).unwrap();
    ok(ws.path(), "ingest", &[]);
    assert_eq!(ws.read("out/ingest/alpha_kept.csv"), header.as_bytes());
    assert_eq!(
        ws.read("out/ingest/alpha_drop_log.csv"),
        b"shot_id,reason\n"
    );
    let summary = ws.json("out/ingest/alpha_ingest.json");
    assert_eq!(summary["n_input"], 0);
    assert_eq!(summary["total_drop_fraction"], 0.0);
}

#[test]
fn config_errors_exit_2() {
    let ws = Workspace::new("master_seed = 1\nbogus_key = 3\n");
    let out = run(ws.path(), &["ingest", "--config", "run.toml"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("bogus_key"));

    let ws = Workspace::new("master_seed = 1\n");
    assert_eq!(
        code(&run(ws.path(), &["experiment", "--config", "missing.toml"])),
        2
    );
    assert_eq!(code(&run(ws.path(), &["experiment"])), 2);
    assert_eq!(
        code(&run(
            ws.path(),
            &["experiment", "--config", "run.toml", "--months", "5"]
        )),
        2
    );
    assert_eq!(
        code(&run(
            ws.path(),
            &["experiment", "--config", "run.toml", "--regime", "nope"]
        )),
        2
    );
    assert_eq!(code(&run(ws.path(), &["frobnicate"])), 2);
    assert_eq!(code(&run(ws.path(), &["--help"])), 0);
}

#[test]
fn malformed_input_exits_3() {
    let ws = synth_workspace("", 30);
    let path = ws.file("data/alpha_shots.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, edit_csv(&text, 3, 2, "not-a-number")).unwrap();
    let out = run(ws.path(), &["ingest", "--config", "run.toml"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn missing_model_is_runtime_error() {
    let ws = synth_workspace("", 30);
    let out = run(ws.path(), &["map", "--config", "run.toml"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("beta_s2.tcrf"));
}

#[test]
fn experiment_writes_all_runs_and_reference() {
    let ws = synth_workspace("regime = \"gedi_local\"", 300);
    ok(ws.path(), "experiment", &[]);
    let report = ws.json("out/experiments/gedi_local_beta_beta_m789.json");
    let runs = report["report"]["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 11);
    assert_eq!(report["report"]["feature_kind"], "RH11");
    assert!(report["report"]["reference"].is_object());
    assert!(report["report"]["mean_accuracy"].as_f64().unwrap() > 0.9);
    let csv = String::from_utf8(ws.read("out/experiments/summary_alpha_beta_m789.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    // Flag overrides take precedence over the file.
    ok(ws.path(), "experiment", &["--months", "8", "--seed", "9"]);
    let report = ws.json("out/experiments/gedi_local_beta_beta_m8.json");
    assert_eq!(report["master_seed"], 9);
    assert_eq!(report["report"]["months"], serde_json::json!([8]));
}

#[test]
fn transfer_with_wrong_model_kind_is_config_error() {
    let mut cfg = small_config("regime = \"s2_transfer\"", 200);
    cfg = cfg.replace(
        "mode = \"pseudo_label\"",
        "mode = \"direct\"\nkind = \"RH11\"",
    );
    cfg = cfg.replace(
        "test_region = \"beta\"\n",
        "test_region = \"beta\"\nmodel = \"out/models/beta_s2.tcrf\"\n",
    );
    let ws = Workspace::new(&cfg);
    ok(ws.path(), "synth", &[]);
    ok(ws.path(), "train", &[]);
    let out = run(ws.path(), &["experiment", "--config", "run.toml"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("kind mismatch"));

    // The same model drives the lidar transfer regime.
    ok(ws.path(), "experiment", &["--regime", "gedi_transfer"]);
}

#[test]
fn rerun_is_byte_identical() {
    let ws = synth_workspace("regime = \"all\"\n[split]\nn_runs = 2", 200);
    let artifacts = [
        "out/experiments/s2_local_beta_beta_m789.json",
        "out/experiments/gedi_s2_transfer_alpha_beta_m789.json",
        "out/experiments/summary_alpha_beta_m789.csv",
        "out/models/beta_s2.tcrf",
        "out/maps/beta_classes.asc",
        "out/maps/beta_confidence.asc",
        "out/maps/beta_map_report.json",
        "out/features/alpha_harm20.csv",
    ];
    let pass = |ws: &Workspace| {
        for cmd in ["features", "experiment", "train", "map"] {
            ok(ws.path(), cmd, &[]);
        }
        artifacts.iter().map(|a| ws.read(a)).collect::<Vec<_>>()
    };
    let first = pass(&ws);
    let second = pass(&ws);
    for (a, (x, y)) in artifacts.iter().zip(first.iter().zip(&second)) {
        assert!(x == y, "{a} differs between runs");
    }
    // A different worker count gives the same bytes.
    ok(ws.path(), "map", &["--workers", "2"]);
    assert_eq!(ws.read("out/maps/beta_classes.asc"), first[4]);
}
