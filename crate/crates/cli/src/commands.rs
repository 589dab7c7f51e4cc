use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tallcrop::experiments::{
    run_gedi_s2_transfer, run_local, run_transfer, write_summary_csv, BuildStats, ExperimentReport,
    ExperimentSettings, Regime, RegionData, TransferSource,
};
use tallcrop::features::{write_feature_matrix, FeatureKind, FeatureRow};
use tallcrop::forest::{deserialize_forest, serialize_forest, train_forest, Forest};
use tallcrop::ingest::{
    attach_labels, parse_optical_series, parse_shot_records, qc_filter, read_label_raster,
    write_float_raster, write_label_raster, write_legend, write_shot_records, GediShot,
    LabelRaster, LabeledShot, OpticalSeries, ShotFormat,
};
use tallcrop::mapgen::{
    map_report, predict_map, FeatureRaster, FeatureSource, MapReport, SynthCells,
};
use tallcrop::synth::{gen_region, write_region, RegionFiles, RegionSpec};
use tallcrop::Error;

use crate::config::{Loaded, MapSource, RegionPaths, TrainMode};
use crate::output::{envelope, to_json, write_atomic, write_sidecar, write_with};

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

struct RegionInputs {
    shots: Vec<GediShot>,
    labels: LabelRaster,
    maize_code: i32,
}

fn load_labels(l: &Loaded, r: &RegionPaths) -> Result<(LabelRaster, i32)> {
    let grid = l.resolve(&r.labels);
    let legend = l.resolve(&r.legend);
    let labels = read_label_raster(open(&grid)?, open(&legend)?).with_context(|| {
        format!(
            "reading label raster {} with legend {}",
            grid.display(),
            legend.display()
        )
    })?;
    let maize_code = labels.code_for(&r.maize_class).ok_or_else(|| {
        Error::Config(format!(
            "maize class '{}' not found in legend {}",
            r.maize_class,
            legend.display()
        ))
    })?;
    Ok((labels, maize_code))
}

fn load_region(l: &Loaded, r: &RegionPaths) -> Result<RegionInputs> {
    let path = l.resolve(&r.shots);
    let shots = parse_shot_records(open(&path)?, ShotFormat::from_path(&path))
        .with_context(|| format!("parsing shots {}", path.display()))?;
    let (labels, maize_code) = load_labels(l, r)?;
    Ok(RegionInputs {
        shots,
        labels,
        maize_code,
    })
}

fn load_optical(
    l: &Loaded,
    r: &RegionPaths,
    explicit: Option<&PathBuf>,
) -> Result<Vec<OpticalSeries>> {
    let rel = explicit
        .or(r.optical.as_ref())
        .ok_or_else(|| Error::Config(format!("region '{}' has no optical file", r.name)))?;
    let path = l.resolve(rel);
    parse_optical_series(open(&path)?)
        .with_context(|| format!("parsing optical series {}", path.display()))
}

fn labeled_shots(l: &Loaded, inputs: &RegionInputs) -> Result<Vec<LabeledShot>> {
    let kept = qc_filter(&inputs.shots, &l.config.qc).kept;
    Ok(attach_labels(&kept, &inputs.labels, inputs.maize_code)?)
}

fn region_data(l: &Loaded, name: &str) -> Result<(RegionData, BuildStats)> {
    let paths = l.region(name)?;
    let inputs = load_region(l, paths)?;
    let labeled = labeled_shots(l, &inputs)?;
    let optical = load_optical(l, paths, None)?;
    Ok(RegionData::build(
        name,
        &labeled,
        &optical,
        &l.config.harmonics,
    )?)
}

fn say(msg: impl AsRef<str>) {
    eprintln!("{}", msg.as_ref());
}

pub fn cmd_synth(l: &Loaded) -> Result<()> {
    let Some(section) = &l.config.synth else {
        bail!(Error::Config(
            "the synth command needs a [synth] section".into()
        ));
    };
    let dir = l.resolve(&section.dir);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written: BTreeMap<String, RegionFiles> = BTreeMap::new();
    for spec in &section.regions {
        let region = gen_region(spec)?;
        // Write to a scratch directory, then move each file into place.
        let scratch = dir.join(format!(".{}.tmp{}", spec.name, std::process::id()));
        std::fs::create_dir_all(&scratch)?;
        let tmp = write_region(&scratch, &region)?;
        let files = RegionFiles::in_dir(&dir, &spec.name);
        for (from, to) in [
            (&tmp.shots, &files.shots),
            (&tmp.optical, &files.optical),
            (&tmp.labels, &files.labels),
            (&tmp.legend, &files.legend),
        ] {
            std::fs::rename(from, to)
                .with_context(|| format!("moving {} into place", to.display()))?;
            write_sidecar(to, "synth", &l.config)?;
        }
        std::fs::remove_dir(&scratch)?;
        say(format!(
            "synth: region '{}' with {} shots -> {}",
            spec.name,
            region.shots.len(),
            dir.display()
        ));
        written.insert(spec.name.clone(), files);
    }
    #[derive(Serialize)]
    struct Payload<'a> {
        regions: &'a BTreeMap<String, RegionFiles>,
    }
    let manifest = dir.join("synth_manifest.json");
    write_atomic(
        &manifest,
        &to_json(&envelope("synth", &l.config, Payload { regions: &written }))?,
    )
}

#[derive(Serialize)]
struct IngestSummary {
    region: String,
    n_input: usize,
    n_kept: usize,
    n_dropped: usize,
    drop_fractions: BTreeMap<String, f64>,
    total_drop_fraction: f64,
    n_labeled: usize,
    n_optical_series: Option<usize>,
}

pub fn cmd_ingest(l: &Loaded) -> Result<()> {
    if l.config.regions.is_empty() {
        bail!(Error::Config("no [[regions]] configured".into()));
    }
    let out = l.output_dir().join("ingest");
    for paths in &l.config.regions {
        let inputs = load_region(l, paths)?;
        let qc = qc_filter(&inputs.shots, &l.config.qc);
        let labeled = attach_labels(&qc.kept, &inputs.labels, inputs.maize_code)?;
        let n_optical = match &paths.optical {
            Some(_) => Some(load_optical(l, paths, None)?.len()),
            None => None,
        };

        let kept_path = out.join(format!("{}_kept.csv", paths.name));
        write_with(&kept_path, |w| {
            write_shot_records(w, &qc.kept, ShotFormat::Csv)
        })?;

        let mut drop_csv = String::from("shot_id,reason\n");
        for d in &qc.drop_log {
            drop_csv.push_str(&format!("{},{}\n", d.shot_id, d.reason.as_str()));
        }
        let drop_path = out.join(format!("{}_drop_log.csv", paths.name));
        write_atomic(&drop_path, drop_csv.as_bytes())?;

        let mut label_csv = String::from("shot_id,crop_code,crop_name,is_maize\n");
        for s in &labeled {
            label_csv.push_str(&format!(
                "{},{},{},{}\n",
                s.shot.shot_id, s.crop_code, s.crop_name, s.is_maize as u8
            ));
        }
        let labels_path = out.join(format!("{}_labels.csv", paths.name));
        write_atomic(&labels_path, label_csv.as_bytes())?;
        for p in [&kept_path, &drop_path, &labels_path] {
            write_sidecar(p, "ingest", &l.config)?;
        }

        let (fractions, total) = qc.drop_fractions();
        let summary = IngestSummary {
            region: paths.name.clone(),
            n_input: inputs.shots.len(),
            n_kept: qc.kept.len(),
            n_dropped: qc.drop_log.len(),
            drop_fractions: fractions
                .into_iter()
                .map(|(r, f)| (r.as_str().to_string(), f))
                .collect(),
            total_drop_fraction: total,
            n_labeled: labeled.len(),
            n_optical_series: n_optical,
        };
        write_atomic(
            &out.join(format!("{}_ingest.json", paths.name)),
            &to_json(&envelope("ingest", &l.config, &summary))?,
        )?;
        say(format!(
            "ingest: region '{}': {} shots, {} dropped, {} labeled",
            paths.name, summary.n_input, summary.n_dropped, summary.n_labeled
        ));
    }
    Ok(())
}

pub fn cmd_features(l: &Loaded) -> Result<()> {
    if l.config.regions.is_empty() {
        bail!(Error::Config("no [[regions]] configured".into()));
    }
    let out = l.output_dir().join("features");
    for paths in &l.config.regions {
        let (data, stats) = region_data(l, &paths.name)?;
        for kind in [FeatureKind::Rh11, FeatureKind::Harm20] {
            let rows: Vec<FeatureRow> = data
                .samples
                .iter()
                .map(|s| FeatureRow {
                    location_id: s.id.clone(),
                    values: s.features(kind).to_vec(),
                })
                .collect();
            let path = out.join(format!(
                "{}_{}.csv",
                paths.name,
                kind.as_str().to_ascii_lowercase()
            ));
            write_with(&path, |w| write_feature_matrix(w, kind, &rows))?;
            write_sidecar(&path, "features", &l.config)?;
        }
        #[derive(Serialize)]
        struct Payload<'a> {
            region: &'a str,
            stats: BuildStats,
        }
        write_atomic(
            &out.join(format!("{}_features.json", paths.name)),
            &to_json(&envelope(
                "features",
                &l.config,
                Payload {
                    region: &paths.name,
                    stats,
                },
            ))?,
        )?;
        say(format!(
            "features: region '{}': {} samples ({} without optical, {} with too few clear observations)",
            paths.name, stats.kept, stats.missing_optical, stats.insufficient_optical
        ));
    }
    Ok(())
}

fn fit_all(data: &RegionData, kind: FeatureKind, l: &Loaded) -> Result<Forest> {
    let samples = data.in_months(&l.config.month_set());
    let x: Vec<Vec<f64>> = samples.iter().map(|s| s.features(kind).to_vec()).collect();
    let y: Vec<bool> = samples.iter().map(|s| s.is_maize).collect();
    train_forest(
        &x,
        &y,
        kind,
        &l.config.forest.with_seed(l.config.master_seed),
    )
    .with_context(|| format!("training {kind} model on region '{}'", data.name))
}

pub fn cmd_train(l: &Loaded) -> Result<()> {
    let Some(t) = &l.config.train else {
        bail!(Error::Config(
            "the train command needs a [train] section".into()
        ));
    };
    let forest = match t.mode {
        TrainMode::Direct => fit_all(&region_data(l, &t.region)?.0, t.kind, l)?,
        TrainMode::PseudoLabel => {
            if t.kind != FeatureKind::Harm20 {
                bail!(Error::KindMismatch {
                    expected: FeatureKind::Harm20.to_string(),
                    got: t.kind.to_string(),
                });
            }
            let target_name = t
                .target_region
                .as_deref()
                .ok_or_else(|| Error::Config("pseudo_label mode needs target_region".into()))?;
            let lidar = fit_all(&region_data(l, &t.region)?.0, FeatureKind::Rh11, l)?;
            let (target, _) = region_data(l, target_name)?;
            let samples = target.in_months(&l.config.month_set());
            let rh: Vec<Vec<f64>> = samples.iter().map(|s| s.rh.clone()).collect();
            let harm: Vec<Vec<f64>> = samples.iter().map(|s| s.harm.clone()).collect();
            let pseudo = lidar.predict(&rh)?;
            train_forest(
                &harm,
                &pseudo,
                FeatureKind::Harm20,
                &l.config.forest.with_seed(l.config.master_seed),
            )
            .context("training optical model on pseudo-labels")?
        }
    };
    let path = l.output_dir().join(&t.model);
    write_atomic(&path, &serialize_forest(&forest))?;
    write_sidecar(&path, "train", &l.config)?;
    say(format!(
        "train: {} model with {} trees -> {}",
        forest.feature_kind,
        forest.trees.len(),
        path.display()
    ));
    Ok(())
}

fn load_model(path: &Path) -> Result<Forest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
    deserialize_forest(&bytes).with_context(|| format!("decoding model {}", path.display()))
}

fn months_tag(months: &[u32]) -> String {
    months
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join("")
}

pub fn cmd_experiment(l: &Loaded) -> Result<()> {
    let cfg = &l.config;
    let regimes = cfg.regimes()?;
    let train_name = cfg
        .experiment
        .train_region
        .clone()
        .or_else(|| cfg.regions.first().map(|r| r.name.clone()))
        .ok_or_else(|| Error::Config("no train_region and no [[regions]] configured".into()))?;
    let test_name = cfg
        .experiment
        .test_region
        .clone()
        .unwrap_or_else(|| train_name.clone());
    let months = cfg.month_set();
    let settings = ExperimentSettings {
        master_seed: cfg.master_seed,
        split: cfg.split.clone(),
        forest: cfg.forest.clone(),
    };
    let model = match &cfg.experiment.model {
        Some(p) => Some(load_model(&l.resolve(p))?),
        None => None,
    };
    let needs_source = regimes.iter().any(|r| !r.is_local()) && model.is_none();
    let source = if needs_source {
        Some(region_data(l, &train_name)?.0)
    } else {
        None
    };
    let target = region_data(l, &test_name)?.0;

    let out = l.output_dir().join("experiments");
    let m_tag = months_tag(cfg.months.as_slice());
    let mut reports: Vec<ExperimentReport> = Vec::new();
    for regime in regimes {
        let transfer_source = || -> TransferSource<'_> {
            match (&model, &source) {
                (Some(m), _) => TransferSource::Models {
                    region: &train_name,
                    models: std::slice::from_ref(m),
                },
                (None, Some(s)) => TransferSource::TrainingSet(s),
                (None, None) => unreachable!("source data is loaded for transfer regimes"),
            }
        };
        let report = match regime {
            Regime::S2Local | Regime::GediLocal => {
                run_local(&target, regime.feature_kind(), &months, &settings)
            }
            Regime::S2Transfer | Regime::GediTransfer => run_transfer(
                transfer_source(),
                &target,
                regime.feature_kind(),
                &months,
                &settings,
            ),
            Regime::GediS2Transfer => {
                run_gedi_s2_transfer(transfer_source(), &target, &months, &settings)
            }
        }
        .with_context(|| format!("running regime {regime}"))?;
        #[derive(Serialize)]
        struct Payload<'a> {
            report: &'a ExperimentReport,
        }
        let path = out.join(format!(
            "{regime}_{}_{}_m{m_tag}.json",
            report.train_region, report.test_region
        ));
        write_atomic(
            &path,
            &to_json(&envelope("experiment", cfg, Payload { report: &report }))?,
        )?;
        say(format!(
            "experiment: {regime} {} -> {}: mean accuracy {:.4} (std {:.4}, {} runs)",
            report.train_region,
            report.test_region,
            report.mean_accuracy,
            report.std_accuracy,
            report.runs.len()
        ));
        reports.push(report);
    }
    let summary = out.join(format!("summary_{train_name}_{test_name}_m{m_tag}.csv"));
    write_with(&summary, |w| write_summary_csv(w, &reports))?;
    write_sidecar(&summary, "experiment", cfg)?;
    Ok(())
}

fn synth_spec<'a>(l: &'a Loaded, name: &str) -> Result<&'a RegionSpec> {
    l.config
        .synth
        .as_ref()
        .and_then(|s| s.regions.iter().find(|r| r.name == name))
        .ok_or_else(|| {
            Error::Config(format!(
                "map source 'synth' needs a [synth] region named '{name}'"
            ))
            .into()
        })
}

pub fn cmd_map(l: &Loaded) -> Result<()> {
    let Some(m) = &l.config.map else {
        bail!(Error::Config(
            "the map command needs a [map] section".into()
        ));
    };
    let forest = load_model(&l.output_dir().join(&m.model))?;
    let paths = l.region(&m.region)?;
    let (cropland, maize_code) = load_labels(l, paths)?;

    let output = match m.source {
        MapSource::Optical => {
            let series = load_optical(l, paths, m.optical.as_ref())?;
            let (features, outside) =
                FeatureRaster::from_optical(cropland.header, &series, &l.config.harmonics)?;
            if outside > 0 {
                say(format!(
                    "map: {outside} optical series fall outside the grid and were ignored"
                ));
            }
            predict_map(&forest, &features, &cropland, &m.options)?
        }
        MapSource::Synth => {
            let spec = RegionSpec {
                n_shots: 0,
                ..synth_spec(l, &m.region)?.clone()
            };
            let truth = gen_region(&spec)?.truth;
            let source = SynthCells {
                spec: &spec,
                truth: &truth,
                cfg: l.config.harmonics,
            };
            if !source.header().aligned_with(&cropland.header) {
                bail!(Error::Misaligned {
                    left: source.header().describe(),
                    right: cropland.header.describe(),
                });
            }
            predict_map(&forest, &source, &cropland, &m.options)?
        }
    };
    let report = map_report(&output.classes, &cropland, maize_code)?;

    let out = l.output_dir().join("maps");
    let classes = out.join(format!("{}_classes.asc", m.region));
    let legend = out.join(format!("{}_classes_legend.csv", m.region));
    let confidence = out.join(format!("{}_confidence.asc", m.region));
    write_with(&classes, |w| write_label_raster(w, &output.classes))?;
    write_with(&legend, |w| write_legend(w, &output.classes.legend))?;
    write_with(&confidence, |w| write_float_raster(w, &output.confidence))?;
    for p in [&classes, &legend, &confidence] {
        write_sidecar(p, "map", &l.config)?;
    }
    #[derive(Serialize)]
    struct Payload<'a> {
        region: &'a str,
        report: &'a MapReport,
    }
    write_atomic(
        &out.join(format!("{}_map_report.json", m.region)),
        &to_json(&envelope(
            "map",
            &l.config,
            Payload {
                region: &m.region,
                report: &report,
            },
        ))?,
    )?;
    say(format!(
        "map: region '{}': cellwise accuracy {:.4} over {} cells, predicted maize {:.1} km2",
        m.region, report.accuracy, report.n_compared, report.predicted_maize_km2
    ));
    Ok(())
}
