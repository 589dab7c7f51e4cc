//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! measured values and runtime; the process fails if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tallcrop::experiments::{
    run_gedi_s2_transfer, run_local, run_transfer, ExperimentSettings, Regime, RegionData, Side,
    SplitConfig, TransferSource,
};
use tallcrop::features::{
    build_s2_features, fit_harmonics, FeatureKind, HarmonicCoeffs, HarmonicConfig,
};
use tallcrop::forest::{serialize_forest, train_forest, ForestConfig};
use tallcrop::ingest::{qc_filter, DropReason, GediShot, QcConfig};
use tallcrop::mapgen::{map_report, predict_map, MapOptions, SynthCells, MAIZE_CODE};
use tallcrop::synth::{default_benchmark, gen_region, SynthRegion};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    let within = budget.is_none_or(|b| took < b);
    out.pass &= within;
    let limit = budget.map_or(String::new(), |b| {
        format!(" / limit {:.0} s", b.as_secs_f64())
    });
    out.detail = format!("{} [{:.2} s{limit}]", out.detail, took.as_secs_f64());
    out
}

fn harmonic_recovery() -> Outcome {
    let cfg = HarmonicConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_coef: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    for _ in 0..200 {
        let truth = HarmonicCoeffs {
            c: rng.random_range(-2.0..2.0),
            a: (0..2).map(|_| rng.random_range(-2.0..2.0)).collect(),
            b: (0..2).map(|_| rng.random_range(-2.0..2.0)).collect(),
        };
        let times: Vec<f64> = (0..12)
            .map(|i| (i as f64 + rng.random_range(0.1..0.9)) / 12.0)
            .collect();
        // Basis written out independently of the library.
        let basis = |t: f64| -> [f64; 5] {
            let w = 2.0 * PI * 1.5 * t;
            [1.0, w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin()]
        };
        let flat = [truth.c, truth.a[0], truth.b[0], truth.a[1], truth.b[1]];
        let exact: Vec<(f64, f64)> = times
            .iter()
            .map(|&t| (t, basis(t).iter().zip(&flat).map(|(x, c)| x * c).sum()))
            .collect();
        let fit = fit_harmonics(&exact, &cfg).unwrap().to_vec();
        let norm = flat.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = fit
            .iter()
            .zip(&flat)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
            / norm;
        worst_coef = worst_coef.max(err);

        let noisy: Vec<(f64, f64)> = exact
            .iter()
            .map(|&(t, v)| (t, v + rng.random_range(-0.3..0.3)))
            .collect();
        let fit = fit_harmonics(&noisy, &cfg).unwrap().to_vec();
        for j in 0..5 {
            let dot: f64 = noisy
                .iter()
                .map(|&(t, v)| {
                    let row = basis(t);
                    let r = v - row.iter().zip(&fit).map(|(x, c)| x * c).sum::<f64>();
                    r * row[j]
                })
                .sum();
            worst_orth = worst_orth.max(dot.abs());
        }
    }
    check(
        worst_coef <= 1e-9 && worst_orth <= 1e-6,
        format!("max relative coefficient error {worst_coef:.2e} (<= 1e-9), max |X^T r| {worst_orth:.2e} (<= 1e-6)"),
    )
}

fn split_leakage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let points: Vec<(f64, f64)> = (0..10_000)
        .map(|_| (rng.random_range(-95.0..-90.0), rng.random_range(40.0..44.0)))
        .collect();
    let mut leaked = 0;
    let mut bad_fraction = 0;
    for seed in 0..11u64 {
        let split = tallcrop::experiments::grid_split(&points, 0.5, 0.8, seed).unwrap();
        let (train, test) = split.partition(&points);
        let mut sides: BTreeMap<(i64, i64), BTreeSet<bool>> = BTreeMap::new();
        for (idx, is_train) in train
            .iter()
            .map(|&i| (i, true))
            .chain(test.iter().map(|&i| (i, false)))
        {
            let (lon, lat) = points[idx];
            sides
                .entry(((lon / 0.5).floor() as i64, (lat / 0.5).floor() as i64))
                .or_default()
                .insert(is_train);
        }
        leaked += sides.values().filter(|s| s.len() > 1).count();
        let n = sides.len();
        let n_train = split
            .assignment
            .values()
            .filter(|&&s| s == Side::Train)
            .count();
        if n_train != (0.8 * n as f64).round() as usize || train.len() + test.len() != points.len()
        {
            bad_fraction += 1;
        }
    }
    check(
        leaked == 0 && bad_fraction == 0,
        format!("cells on both sides: {leaked}, splits with wrong train-cell count: {bad_fraction} (of 11)"),
    )
}

fn forest_determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<Vec<f64>> = (0..400)
        .map(|_| (0..11).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let y: Vec<bool> = x.iter().map(|r| r[0] + 0.3 * r[1] > 0.6).collect();
    let cfg = ForestConfig {
        n_trees: 10,
        seed: 42,
        ..ForestConfig::default()
    };
    let a = serialize_forest(&train_forest(&x, &y, FeatureKind::Rh11, &cfg).unwrap());
    let b = serialize_forest(&train_forest(&x, &y, FeatureKind::Rh11, &cfg).unwrap());
    let identical = a == b;

    let sep_x: Vec<Vec<f64>> = (0..200)
        .map(|i| {
            let mut r = vec![0.5; 11];
            r[0] = i as f64;
            r
        })
        .collect();
    let sep_y: Vec<bool> = (0..200).map(|i| i >= 93).collect();
    let sep = train_forest(&sep_x, &sep_y, FeatureKind::Rh11, &ForestConfig::default()).unwrap();
    let sep_acc = sep
        .predict(&sep_x)
        .unwrap()
        .iter()
        .zip(&sep_y)
        .filter(|(p, t)| p == t)
        .count() as f64
        / 200.0;

    let forest = train_forest(&x, &y, FeatureKind::Rh11, &cfg).unwrap();
    let mut inconsistent = 0;
    let mut ties = 0;
    for _ in 0..1000 {
        let s: Vec<f64> = (0..11).map(|_| rng.random_range(0.0..1.0)).collect();
        let votes = forest.trees.iter().filter(|t| t.vote(&s)).count();
        let n = forest.trees.len();
        let proba = forest.proba_one(&s).unwrap();
        let pred = forest.predict_one(&s).unwrap();
        ties += (2 * votes == n) as usize;
        // Tie rule: an even split goes to non-maize.
        let expected = 2 * votes > n;
        if proba != votes as f64 / n as f64 || pred != expected || pred != (proba > 0.5) {
            inconsistent += 1;
        }
    }
    check(
        identical && sep_acc == 1.0 && inconsistent == 0,
        format!(
            "byte-identical models: {identical}, separable training accuracy {sep_acc:.3}, \
             vote/proba inconsistencies {inconsistent} of 1000 ({ties} ties)"
        ),
    )
}

struct Benchmark {
    regions: Vec<SynthRegion>,
    data: Vec<RegionData>,
    means: BTreeMap<(Regime, usize, usize), f64>,
}

fn run_benchmark() -> Benchmark {
    let specs = default_benchmark();
    let regions: Vec<SynthRegion> = specs.iter().map(|s| gen_region(s).unwrap()).collect();
    let cfg = HarmonicConfig::default();
    let data: Vec<RegionData> = regions
        .iter()
        .map(|r| {
            RegionData::from_synth(r, &QcConfig::default(), &cfg)
                .unwrap()
                .0
        })
        .collect();
    let settings = ExperimentSettings {
        master_seed: 2024,
        split: SplitConfig::default(),
        forest: ForestConfig::default(),
    };
    let months: BTreeSet<u32> = [7, 8, 9].into();
    let mut means = BTreeMap::new();
    for (src, tgt) in [(0, 1), (1, 0)] {
        let (s, t) = (&data[src], &data[tgt]);
        for regime in Regime::ALL {
            let report = match regime {
                Regime::S2Local | Regime::GediLocal => {
                    run_local(t, regime.feature_kind(), &months, &settings)
                }
                Regime::S2Transfer | Regime::GediTransfer => run_transfer(
                    TransferSource::TrainingSet(s),
                    t,
                    regime.feature_kind(),
                    &months,
                    &settings,
                ),
                Regime::GediS2Transfer => {
                    run_gedi_s2_transfer(TransferSource::TrainingSet(s), t, &months, &settings)
                }
            }
            .unwrap();
            assert_eq!(report.runs.len(), 11);
            means.insert((regime, src, tgt), report.mean_accuracy);
        }
    }
    Benchmark {
        regions,
        data,
        means,
    }
}

fn regime_ordering(b: &Benchmark) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (src, tgt) in [(0, 1), (1, 0)] {
        let m = |r| b.means[&(r, src, tgt)];
        let (local, gs2, s2t) = (
            m(Regime::S2Local),
            m(Regime::GediS2Transfer),
            m(Regime::S2Transfer),
        );
        pass &= local >= gs2 && gs2 >= s2t && local - s2t >= 0.15 && local - gs2 <= 0.05;
        parts.push(format!(
            "{}->{}: S2 Local {local:.3} >= GEDI-S2 Transfer {gs2:.3} >= S2 Transfer {s2t:.3}, \
             gaps {:.1} pp (>= 15), {:.1} pp (<= 5)",
            b.data[src].name,
            b.data[tgt].name,
            100.0 * (local - s2t),
            100.0 * (local - gs2)
        ));
    }
    check(pass, parts.join("; "))
}

fn gedi_transfer(b: &Benchmark) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (src, tgt) in [(0, 1), (1, 0)] {
        let local = b.means[&(Regime::GediLocal, src, tgt)];
        let transfer = b.means[&(Regime::GediTransfer, src, tgt)];
        pass &= (local - transfer).abs() <= 0.05;
        parts.push(format!(
            "{}->{}: GEDI Local {local:.3}, GEDI Transfer {transfer:.3} ({:+.1} pp)",
            b.data[src].name,
            b.data[tgt].name,
            100.0 * (transfer - local)
        ));
    }
    check(pass, parts.join("; "))
}

fn end_to_end_map(b: &Benchmark) -> Outcome {
    let (source, target) = (&b.data[0], &b.data[1]);
    let region = &b.regions[1];
    let months: BTreeSet<u32> = [7, 8, 9].into();
    let cfg = ForestConfig::default().with_seed(99);
    // Lidar model from the source region labels the target's shots; the
    // optical model learns from those labels and maps the target.
    let src: Vec<_> = source.in_months(&months);
    let rh: Vec<Vec<f64>> = src.iter().map(|s| s.rh.clone()).collect();
    let y: Vec<bool> = src.iter().map(|s| s.is_maize).collect();
    let lidar = train_forest(&rh, &y, FeatureKind::Rh11, &cfg).unwrap();
    let tgt: Vec<_> = target.in_months(&months);
    let pseudo = lidar
        .predict(&tgt.iter().map(|s| s.rh.clone()).collect::<Vec<_>>())
        .unwrap();
    let harm: Vec<Vec<f64>> = tgt.iter().map(|s| s.harm.clone()).collect();
    let optical = train_forest(&harm, &pseudo, FeatureKind::Harm20, &cfg).unwrap();

    let h = region.truth.header;
    let source_cells = SynthCells {
        spec: &region.spec,
        truth: &region.truth,
        cfg: HarmonicConfig::default(),
    };
    let start = Instant::now();
    let out = predict_map(
        &optical,
        &source_cells,
        &region.truth,
        &MapOptions::default(),
    )
    .unwrap();
    let map_time = start.elapsed();
    let maize = region.truth.code_for("maize").unwrap();
    let report = map_report(&out.classes, &region.truth, maize).unwrap();

    let mut checked = 0;
    let mut disagree = 0;
    for (shot, series) in region.shots.iter().zip(&region.optical) {
        let (r, c) = h.cell_of(shot.lon, shot.lat).unwrap();
        if !region.truth.is_crop(region.truth.get(r, c)) {
            continue;
        }
        let Ok(f) = build_s2_features(series, &HarmonicConfig::default()) else {
            continue;
        };
        checked += 1;
        let expected = optical.predict(&[f.values]).unwrap()[0];
        disagree += ((out.classes.get(r, c) == MAIZE_CODE) != expected) as usize;
    }
    check(
        report.accuracy >= 0.95
            && disagree == 0
            && checked > 0
            && map_time < Duration::from_secs(60),
        format!(
            "{}x{} grid, cellwise accuracy {:.4} (>= 0.95) over {} cells, \
             shot-cell disagreements {disagree} of {checked}, predict_map {:.1} s (< 60)",
            h.n_cols,
            h.n_rows,
            report.accuracy,
            report.n_compared,
            map_time.as_secs_f64()
        ),
    )
}

fn qc_accounting() -> Outcome {
    let date = NaiveDate::from_ymd_opt(2019, 8, 1).unwrap();
    let ramp = |top: f64| -> Vec<f64> {
        (0..=100)
            .map(|i| -0.5 + (top + 0.5) * i as f64 / 100.0)
            .collect()
    };
    let mk = |id: usize, q: u8, d: u32, top: f64, orbit: &str| GediShot {
        shot_id: format!("s{id:02}"),
        orbit_id: orbit.into(),
        lon: 0.0,
        lat: 0.0,
        date,
        quality_flag: q,
        degrade_flag: d,
        rh: ramp(top),
    };
    // Known violations: quality at 1, 7; degrade at 3; rh100 at 4, 9; orbit
    // at 6; shot 8 fails both quality and rh100 and counts once, as quality.
    let shots = vec![
        mk(0, 1, 0, 2.0, "A"),
        mk(1, 0, 0, 2.0, "A"),
        mk(2, 1, 0, 9.99, "A"),
        mk(3, 1, 5, 2.0, "A"),
        mk(4, 1, 0, 10.01, "A"),
        mk(5, 1, 0, 10.0, "B"),
        mk(6, 1, 0, 2.0, "BAD"),
        mk(7, 2, 0, 2.0, "A"),
        mk(8, 0, 0, 30.0, "A"),
        mk(9, 1, 0, f64::NAN, "A"),
    ];
    let cfg = QcConfig {
        dropped_orbits: ["BAD".to_string()].into(),
        ..QcConfig::default()
    };
    let out = qc_filter(&shots, &cfg);
    let kept: Vec<&str> = out.kept.iter().map(|s| s.shot_id.as_str()).collect();
    let dropped: Vec<(&str, DropReason)> = out
        .drop_log
        .iter()
        .map(|d| (d.shot_id.as_str(), d.reason))
        .collect();
    let expected_dropped = vec![
        ("s01", DropReason::Quality),
        ("s03", DropReason::Degrade),
        ("s04", DropReason::Rh100),
        ("s06", DropReason::Orbit),
        ("s07", DropReason::Quality),
        ("s08", DropReason::Quality),
        ("s09", DropReason::Rh100),
    ];
    let (fractions, total) = out.drop_fractions();
    let fractions: BTreeMap<DropReason, f64> = fractions.into_iter().collect();
    let fractions_ok = fractions[&DropReason::Quality] == 0.3
        && fractions[&DropReason::Degrade] == 0.1
        && fractions[&DropReason::Rh100] == 0.2
        && fractions[&DropReason::Orbit] == 0.1
        && total == 0.7;
    let again = qc_filter(&out.kept, &cfg);
    let idempotent = again.drop_log.is_empty() && again.kept == out.kept;
    let partition_ok = kept == ["s00", "s02", "s05"] && dropped == expected_dropped;
    check(
        partition_ok && fractions_ok && idempotent,
        format!(
            "kept {kept:?}, dropped {} (partition exact: {partition_ok}), fractions exact: {fractions_ok} \
             (total {total}), idempotent: {idempotent}",
            dropped.len()
        ),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn reproducibility() -> Outcome {
    let ws = common::Workspace::new(&common::small_config(
        "regime = \"all\"\n[split]\nn_runs = 3",
        400,
    ));
    let pass_once = || {
        for cmd in ["synth", "ingest", "features", "experiment", "train", "map"] {
            common::ok(ws.path(), cmd, &[]);
        }
        snapshot(ws.path())
    };
    let first = pass_once();
    let second = pass_once();
    let differing: Vec<&String> = first
        .keys()
        .filter(|k| second.get(*k) != first.get(*k))
        .collect();
    let json = first.keys().filter(|k| k.ends_with(".json")).count();
    let rasters = first.keys().filter(|k| k.ends_with(".asc")).count();
    check(
        differing.is_empty() && first.len() == second.len() && json > 0 && rasters > 0,
        format!(
            "{} artifacts compared ({json} JSON, {rasters} rasters) across two full CLI passes, {} differ {:?}",
            first.len(),
            differing.len(),
            differing
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((name, o));
    };
    report(
        "1 harmonic recovery",
        timed(Some(Duration::from_secs(1)), harmonic_recovery),
    );
    report(
        "2 split leakage",
        timed(Some(Duration::from_secs(5)), split_leakage),
    );
    report(
        "3 forest determinism",
        timed(Some(Duration::from_secs(30)), forest_determinism),
    );

    let start = Instant::now();
    let bench = run_benchmark();
    let bench_time = start.elapsed();
    let within = bench_time < Duration::from_secs(300);
    let budget = format!(
        " [benchmark {:.1} s / limit 300 s, shared by 4 and 5]",
        bench_time.as_secs_f64()
    );
    let mut o4 = regime_ordering(&bench);
    o4.pass &= within;
    o4.detail += &budget;
    report("4 regime ordering", o4);
    let mut o5 = gedi_transfer(&bench);
    o5.pass &= within;
    o5.detail += &budget;
    report("5 GEDI transferability", o5);
    report("6 end-to-end map", timed(None, || end_to_end_map(&bench)));
    report(
        "7 QC accounting",
        timed(Some(Duration::from_secs(1)), qc_accounting),
    );
    report("8 reproducibility", timed(None, reproducibility));

    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(n, _)| *n)
        .collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
