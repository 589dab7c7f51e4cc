//! Classification regimes over spatially blocked splits.
//!
//! Every regime repeats a train/test cycle `n_runs` times. Run `i` uses seed
//! `master_seed + i` both for the grid split and for the forest, so reports
//! are reproducible and the local and transfer regimes share splits.

mod data;
mod metrics;
mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use data::{BuildStats, RegionData, Sample};
pub use metrics::{aggregate, compute_metrics, Aggregate, CropCounts, RunMetrics};
pub use split::{cell_key, grid_split, train_cell_count, GridSplit, Side};

use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::forest::{train_forest, Forest, ForestConfig};

/// Note stored in every report about where metrics come from.
pub const EVALUATION_NOTE: &str =
    "metrics are computed on the test side of the target region's grid split; \
     transfer regimes reuse the split the local regime draws for the same run seed";
pub const CLASS_WEIGHTING: &str = "none";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    S2Local,
    GediLocal,
    S2Transfer,
    GediTransfer,
    GediS2Transfer,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::S2Local,
        Regime::GediLocal,
        Regime::S2Transfer,
        Regime::GediTransfer,
        Regime::GediS2Transfer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::S2Local => "s2_local",
            Regime::GediLocal => "gedi_local",
            Regime::S2Transfer => "s2_transfer",
            Regime::GediTransfer => "gedi_transfer",
            Regime::GediS2Transfer => "gedi_s2_transfer",
        }
    }

    /// Features the evaluated model consumes.
    pub fn feature_kind(&self) -> FeatureKind {
        match self {
            Regime::GediLocal | Regime::GediTransfer => FeatureKind::Rh11,
            Regime::S2Local | Regime::S2Transfer | Regime::GediS2Transfer => FeatureKind::Harm20,
        }
    }

    /// Features of the model trained on the source region.
    pub fn source_kind(&self) -> FeatureKind {
        match self {
            Regime::GediS2Transfer => FeatureKind::Rh11,
            other => other.feature_kind(),
        }
    }

    pub fn is_local(&self) -> bool {
        matches!(self, Regime::S2Local | Regime::GediLocal)
    }

    /// Reference accuracies reported for real data.
    pub fn reference(&self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            Regime::S2Local => &[
                ("s2_local_china", 0.93),
                ("s2_local_france", 0.95),
                ("s2_local_us", 0.95),
            ],
            Regime::GediLocal => &[
                ("gedi_local_best_china_sep", 0.88),
                ("gedi_local_best_france_jul", 0.85),
                ("gedi_local_best_us_aug", 0.91),
            ],
            Regime::S2Transfer => &[("s2_transfer_mean", 0.64)],
            Regime::GediTransfer => &[],
            Regime::GediS2Transfer => &[("gedi_s2_transfer_min", 0.82)],
        };
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown regime '{s}', expected one of s2_local, gedi_local, s2_transfer, gedi_transfer, gedi_s2_transfer"
                ))
            })
    }
}

/// Month subsets used for training: a single month or the whole season.
pub fn validate_month_set(months: &BTreeSet<u32>) -> Result<()> {
    crate::ingest::validate_months(months)?;
    if months.len() == 1 || months.len() == 3 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "month set {months:?} is not a single month or all of 7, 8, 9"
        )))
    }
}

fn default_cell_size() -> f64 {
    0.5
}
fn default_train_frac() -> f64 {
    0.8
}
fn default_n_runs() -> usize {
    11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_cell_size")]
    pub cell_size_deg: f64,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            cell_size_deg: default_cell_size(),
            train_frac: default_train_frac(),
            n_runs: default_n_runs(),
        }
    }
}

/// Everything besides the data that determines an experiment's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub master_seed: u64,
    pub split: SplitConfig,
    pub forest: ForestConfig,
}

impl ExperimentSettings {
    fn validate(&self, kind: FeatureKind) -> Result<()> {
        if self.split.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if !(self.split.train_frac > 0.0 && self.split.train_frac < 1.0) {
            return Err(Error::Config(format!(
                "train_frac must lie in (0, 1), got {}",
                self.split.train_frac
            )));
        }
        self.forest.validate(kind.dim())
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.master_seed.wrapping_add(run as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub regime: Regime,
    pub feature_kind: FeatureKind,
    pub train_region: String,
    pub test_region: String,
    pub months: Vec<u32>,
    pub runs: Vec<RunMetrics>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub median_run: usize,
    pub settings: ExperimentSettings,
    pub evaluation: String,
    pub class_weighting: String,
    pub reference: BTreeMap<String, f64>,
}

impl ExperimentReport {
    fn assemble(
        regime: Regime,
        train_region: &str,
        test_region: &str,
        months: &BTreeSet<u32>,
        runs: Vec<RunMetrics>,
        settings: &ExperimentSettings,
    ) -> Result<Self> {
        let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        let agg = aggregate(&accs)?;
        Ok(ExperimentReport {
            regime,
            feature_kind: regime.feature_kind(),
            train_region: train_region.to_string(),
            test_region: test_region.to_string(),
            months: months.iter().copied().collect(),
            runs,
            mean_accuracy: agg.mean,
            std_accuracy: agg.std,
            median_run: agg.median_run,
            settings: settings.clone(),
            evaluation: EVALUATION_NOTE.to_string(),
            class_weighting: CLASS_WEIGHTING.to_string(),
            reference: regime.reference(),
        })
    }

    pub fn median(&self) -> &RunMetrics {
        &self.runs[self.median_run]
    }
}

fn months_label(months: &[u32]) -> String {
    months
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join("+")
}

/// One summary row per report, as plotted in bar charts of mean accuracy.
pub fn write_summary_csv<W: Write>(writer: W, reports: &[ExperimentReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "regime",
        "train_region",
        "test_region",
        "months",
        "feature_kind",
        "n_runs",
        "mean_accuracy",
        "std_accuracy",
        "median_run",
        "median_accuracy",
    ])
    .map_err(crate::ingest::shots::csv_io)?;
    for r in reports {
        w.write_record([
            r.regime.as_str().to_string(),
            r.train_region.clone(),
            r.test_region.clone(),
            months_label(&r.months),
            r.feature_kind.as_str().to_string(),
            r.runs.len().to_string(),
            format!("{:.6}", r.mean_accuracy),
            format!("{:.6}", r.std_accuracy),
            r.median_run.to_string(),
            format!("{:.6}", r.median().accuracy),
        ])
        .map_err(crate::ingest::shots::csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Where a transferred model comes from.
#[derive(Debug, Clone, Copy)]
pub enum TransferSource<'a> {
    /// Train one model per run on the source region's training side.
    TrainingSet(&'a RegionData),
    /// Pre-trained models, used round-robin across runs.
    Models {
        region: &'a str,
        models: &'a [Forest],
    },
}

impl TransferSource<'_> {
    fn region_name(&self) -> &str {
        match self {
            TransferSource::TrainingSet(d) => &d.name,
            TransferSource::Models { region, .. } => region,
        }
    }
}

fn collapse(months: &BTreeSet<u32>, message: String) -> Error {
    Error::Run {
        months: months.iter().copied().collect(),
        message,
    }
}

fn check_classes(samples: &[&Sample], months: &BTreeSet<u32>, region: &str) -> Result<()> {
    let maize = samples.iter().filter(|s| s.is_maize).count();
    if maize == 0 || maize == samples.len() {
        return Err(collapse(
            months,
            format!(
                "region '{region}' has {} samples of which {maize} are maize; both classes are required",
                samples.len()
            ),
        ));
    }
    Ok(())
}

fn split_samples(
    samples: &[&Sample],
    settings: &ExperimentSettings,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let points: Vec<(f64, f64)> = samples.iter().map(|s| (s.lon, s.lat)).collect();
    let split = grid_split(
        &points,
        settings.split.cell_size_deg,
        settings.split.train_frac,
        seed,
    )?;
    Ok(split.partition(&points))
}

fn gather(samples: &[&Sample], idx: &[usize], kind: FeatureKind) -> Vec<Vec<f64>> {
    idx.iter()
        .map(|&i| samples[i].features(kind).to_vec())
        .collect()
}

fn fit(
    x: &[Vec<f64>],
    y: &[bool],
    kind: FeatureKind,
    settings: &ExperimentSettings,
    seed: u64,
    months: &BTreeSet<u32>,
    what: &str,
) -> Result<Forest> {
    let maize = y.iter().filter(|&&v| v).count();
    if maize == 0 || maize == y.len() {
        return Err(collapse(
            months,
            format!(
                "{what}: training side of run seed {seed} holds a single class ({} samples)",
                y.len()
            ),
        ));
    }
    train_forest(x, y, kind, &settings.forest.with_seed(seed))
}

/// Compare predictions with the hidden truth of the test samples.
fn evaluate(pred: &[bool], test: &[&Sample]) -> Result<RunMetrics> {
    let truth: Vec<bool> = test.iter().map(|s| s.is_maize).collect();
    let names: Vec<String> = test.iter().map(|s| s.crop_name.clone()).collect();
    compute_metrics(pred, &truth, &names)
}

fn pick<'s>(samples: &[&'s Sample], idx: &[usize]) -> Vec<&'s Sample> {
    idx.iter().map(|&i| samples[i]).collect()
}

/// Source-region model for one run.
fn source_model(
    source: TransferSource<'_>,
    kind: FeatureKind,
    months: &BTreeSet<u32>,
    settings: &ExperimentSettings,
    run: usize,
) -> Result<(Forest, usize)> {
    match source {
        TransferSource::TrainingSet(data) => {
            let samples = data.in_months(months);
            check_classes(&samples, months, &data.name)?;
            let seed = settings.run_seed(run);
            let (train, _) = split_samples(&samples, settings, seed)?;
            let x = gather(&samples, &train, kind);
            let y: Vec<bool> = train.iter().map(|&i| samples[i].is_maize).collect();
            Ok((
                fit(&x, &y, kind, settings, seed, months, &data.name)?,
                train.len(),
            ))
        }
        TransferSource::Models { models, .. } => {
            if models.is_empty() {
                return Err(Error::Config("no transfer models supplied".into()));
            }
            let m = &models[run % models.len()];
            if m.feature_kind != kind {
                return Err(Error::KindMismatch {
                    expected: kind.to_string(),
                    got: m.feature_kind.to_string(),
                });
            }
            Ok((m.clone(), 0))
        }
    }
}

fn run_all<F>(settings: &ExperimentSettings, f: F) -> Result<Vec<RunMetrics>>
where
    F: Fn(usize, u64) -> Result<RunMetrics> + Sync,
{
    (0..settings.split.n_runs)
        .into_par_iter()
        .map(|i| {
            let seed = settings.run_seed(i);
            f(i, seed).map(|mut m| {
                m.run_index = i;
                m.seed = seed;
                m
            })
        })
        .collect()
}

/// Train and test within one region.
pub fn run_local(
    data: &RegionData,
    kind: FeatureKind,
    months: &BTreeSet<u32>,
    settings: &ExperimentSettings,
) -> Result<ExperimentReport> {
    validate_month_set(months)?;
    settings.validate(kind)?;
    let samples = data.in_months(months);
    check_classes(&samples, months, &data.name)?;
    let runs = run_all(settings, |_, seed| {
        let (train, test) = split_samples(&samples, settings, seed)?;
        let x = gather(&samples, &train, kind);
        let y: Vec<bool> = train.iter().map(|&i| samples[i].is_maize).collect();
        let forest = fit(&x, &y, kind, settings, seed, months, &data.name)?;
        let pred = forest.predict(&gather(&samples, &test, kind))?;
        let mut m = evaluate(&pred, &pick(&samples, &test))?;
        m.n_train = train.len();
        Ok(m)
    })?;
    let regime = match kind {
        FeatureKind::Rh11 => Regime::GediLocal,
        FeatureKind::Harm20 => Regime::S2Local,
    };
    ExperimentReport::assemble(regime, &data.name, &data.name, months, runs, settings)
}

/// Apply source-region models unchanged to the target region's test side.
pub fn run_transfer(
    source: TransferSource<'_>,
    target: &RegionData,
    kind: FeatureKind,
    months: &BTreeSet<u32>,
    settings: &ExperimentSettings,
) -> Result<ExperimentReport> {
    validate_month_set(months)?;
    settings.validate(kind)?;
    let samples = target.in_months(months);
    let runs = run_all(settings, |i, seed| {
        let (model, n_train) = source_model(source, kind, months, settings, i)?;
        let (_, test) = split_samples(&samples, settings, seed)?;
        let pred = model.predict(&gather(&samples, &test, kind))?;
        let mut m = evaluate(&pred, &pick(&samples, &test))?;
        m.n_train = n_train;
        Ok(m)
    })?;
    let regime = match kind {
        FeatureKind::Rh11 => Regime::GediTransfer,
        FeatureKind::Harm20 => Regime::S2Transfer,
    };
    ExperimentReport::assemble(
        regime,
        source.region_name(),
        &target.name,
        months,
        runs,
        settings,
    )
}

/// Stage 1: the source lidar model labels target training-side shots.
/// Stage 2: an optical model is trained on those labels.
///
/// Only feature vectors enter either stage; target truth is read solely by
/// the evaluator.
fn pseudo_label_stage(
    rh_model: &Forest,
    train_rh: &[Vec<f64>],
    train_harm: &[Vec<f64>],
    settings: &ExperimentSettings,
    seed: u64,
    months: &BTreeSet<u32>,
) -> Result<(Forest, Vec<bool>)> {
    let pseudo = rh_model.predict(train_rh)?;
    let forest = fit(
        train_harm,
        &pseudo,
        FeatureKind::Harm20,
        settings,
        seed,
        months,
        "pseudo-labels",
    )?;
    Ok((forest, pseudo))
}

/// Two-stage transfer: lidar predictions supervise a local optical model.
pub fn run_gedi_s2_transfer(
    source: TransferSource<'_>,
    target: &RegionData,
    months: &BTreeSet<u32>,
    settings: &ExperimentSettings,
) -> Result<ExperimentReport> {
    validate_month_set(months)?;
    settings.validate(FeatureKind::Rh11)?;
    settings.validate(FeatureKind::Harm20)?;
    let samples = target.in_months(months);
    let runs = run_all(settings, |i, seed| {
        let (rh_model, _) = source_model(source, FeatureKind::Rh11, months, settings, i)?;
        let (train, test) = split_samples(&samples, settings, seed)?;
        let (forest, pseudo) = pseudo_label_stage(
            &rh_model,
            &gather(&samples, &train, FeatureKind::Rh11),
            &gather(&samples, &train, FeatureKind::Harm20),
            settings,
            seed,
            months,
        )?;
        let pred = forest.predict(&gather(&samples, &test, FeatureKind::Harm20))?;
        let mut m = evaluate(&pred, &pick(&samples, &test))?;
        m.n_train = train.len();
        let agree = evaluate(&pseudo, &pick(&samples, &train))?;
        m.pseudo_label_accuracy = Some(agree.accuracy);
        Ok(m)
    })?;
    ExperimentReport::assemble(
        Regime::GediS2Transfer,
        source.region_name(),
        &target.name,
        months,
        runs,
        settings,
    )
}

/// Dispatch a regime. Local regimes use `source` only.
pub fn run_regime(
    regime: Regime,
    source: &RegionData,
    target: &RegionData,
    months: &BTreeSet<u32>,
    settings: &ExperimentSettings,
) -> Result<ExperimentReport> {
    match regime {
        Regime::S2Local | Regime::GediLocal => {
            run_local(source, regime.feature_kind(), months, settings)
        }
        Regime::S2Transfer | Regime::GediTransfer => run_transfer(
            TransferSource::TrainingSet(source),
            target,
            regime.feature_kind(),
            months,
            settings,
        ),
        Regime::GediS2Transfer => run_gedi_s2_transfer(
            TransferSource::TrainingSet(source),
            target,
            months,
            settings,
        ),
    }
}
