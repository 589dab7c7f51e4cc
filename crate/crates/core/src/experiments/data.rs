use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_s2_features, subsample_rh, FeatureKind, HarmonicConfig};
use crate::ingest::{LabeledShot, OpticalSeries};

/// A labeled location with both feature sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    pub month: u32,
    pub crop_name: String,
    pub is_maize: bool,
    pub rh: Vec<f64>,
    pub harm: Vec<f64>,
}

impl Sample {
    pub fn features(&self, kind: FeatureKind) -> &[f64] {
        match kind {
            FeatureKind::Rh11 => &self.rh,
            FeatureKind::Harm20 => &self.harm,
        }
    }
}

/// Counts from assembling a region's samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub labeled: usize,
    pub kept: usize,
    pub missing_optical: usize,
    pub insufficient_optical: usize,
}

/// All samples of one region. Only shots with a usable optical series at
/// their location are kept, so both feature kinds cover the same locations.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionData {
    pub name: String,
    pub samples: Vec<Sample>,
}

impl RegionData {
    pub fn build(
        name: &str,
        labeled: &[LabeledShot],
        optical: &[OpticalSeries],
        cfg: &HarmonicConfig,
    ) -> Result<(RegionData, BuildStats)> {
        cfg.validate()?;
        let mut by_id: BTreeMap<&str, &OpticalSeries> = BTreeMap::new();
        for s in optical {
            if by_id.insert(&s.location_id, s).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate optical location_id '{}'",
                    s.location_id
                )));
            }
        }
        let built: Vec<Result<Option<Sample>>> = labeled
            .par_iter()
            .map(|l| {
                let Some(series) = by_id.get(l.shot.shot_id.as_str()) else {
                    return Ok(None);
                };
                let harm = match build_s2_features(series, cfg) {
                    Ok(f) => f.values,
                    Err(
                        Error::InsufficientObservations { .. }
                        | Error::Rank(_)
                        | Error::TooFewPoints { .. },
                    ) => return Ok(None),
                    Err(e) => return Err(e),
                };
                Ok(Some(Sample {
                    id: l.shot.shot_id.clone(),
                    lon: l.shot.lon,
                    lat: l.shot.lat,
                    month: l.shot.month(),
                    crop_name: l.crop_name.clone(),
                    is_maize: l.is_maize,
                    rh: subsample_rh(&l.shot).values.to_vec(),
                    harm,
                }))
            })
            .collect();

        let mut stats = BuildStats {
            labeled: labeled.len(),
            ..BuildStats::default()
        };
        let mut samples = Vec::with_capacity(labeled.len());
        for (l, r) in labeled.iter().zip(built) {
            match r? {
                Some(s) => samples.push(s),
                None if by_id.contains_key(l.shot.shot_id.as_str()) => {
                    stats.insufficient_optical += 1
                }
                None => stats.missing_optical += 1,
            }
        }
        stats.kept = samples.len();
        Ok((
            RegionData {
                name: name.to_string(),
                samples,
            },
            stats,
        ))
    }

    /// Run a generated region through QC, label attachment and feature
    /// extraction, exactly as for ingested files.
    pub fn from_synth(
        region: &crate::synth::SynthRegion,
        qc: &crate::ingest::QcConfig,
        cfg: &HarmonicConfig,
    ) -> Result<(RegionData, BuildStats)> {
        let kept = crate::ingest::qc_filter(&region.shots, qc).kept;
        let maize = region.truth.code_for("maize").ok_or_else(|| {
            Error::Config(format!("region '{}' has no maize class", region.spec.name))
        })?;
        let labeled = crate::ingest::attach_labels(&kept, &region.truth, maize)?;
        RegionData::build(&region.spec.name, &labeled, &region.optical, cfg)
    }

    /// Samples observed in one of the given months.
    pub fn in_months(&self, months: &BTreeSet<u32>) -> Vec<&Sample> {
        self.samples
            .iter()
            .filter(|s| months.contains(&s.month))
            .collect()
    }
}
