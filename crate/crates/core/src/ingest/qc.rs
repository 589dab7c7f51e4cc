use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::shots::GediShot;

/// Default upper bound on RH100 for field crops, in meters.
pub const DEFAULT_MAX_RH100_M: f64 = 10.0;

/// Quality-control rules, checked in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropReason {
    Quality,
    Degrade,
    Rh100,
    Orbit,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::Quality => "quality",
            DropReason::Degrade => "degrade",
            DropReason::Rh100 => "rh100",
            DropReason::Orbit => "orbit",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QcConfig {
    pub max_rh100_m: f64,
    pub dropped_orbits: BTreeSet<String>,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig {
            max_rh100_m: DEFAULT_MAX_RH100_M,
            dropped_orbits: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropEntry {
    pub shot_id: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default)]
pub struct QcOutcome {
    pub kept: Vec<GediShot>,
    pub drop_log: Vec<DropEntry>,
}

impl QcOutcome {
    /// Fraction of input shots dropped for each reason, plus the total.
    pub fn drop_fractions(&self) -> (Vec<(DropReason, f64)>, f64) {
        let total = self.kept.len() + self.drop_log.len();
        if total == 0 {
            return (Vec::new(), 0.0);
        }
        let per = [
            DropReason::Quality,
            DropReason::Degrade,
            DropReason::Rh100,
            DropReason::Orbit,
        ]
        .into_iter()
        .map(|r| {
            let n = self.drop_log.iter().filter(|d| d.reason == r).count();
            (r, n as f64 / total as f64)
        })
        .collect();
        (per, self.drop_log.len() as f64 / total as f64)
    }
}

/// First failing rule for a shot, or `None` if it passes every rule.
pub fn first_failure(shot: &GediShot, cfg: &QcConfig) -> Option<DropReason> {
    if shot.quality_flag != 1 {
        Some(DropReason::Quality)
    } else if shot.degrade_flag != 0 {
        Some(DropReason::Degrade)
    } else if !(shot.rh100() <= cfg.max_rh100_m) {
        Some(DropReason::Rh100)
    } else if cfg.dropped_orbits.contains(&shot.orbit_id) {
        Some(DropReason::Orbit)
    } else {
        None
    }
}

/// Split shots into those passing quality control and a log of the rest.
pub fn qc_filter(shots: &[GediShot], cfg: &QcConfig) -> QcOutcome {
    let mut out = QcOutcome::default();
    for shot in shots {
        match first_failure(shot, cfg) {
            None => out.kept.push(shot.clone()),
            Some(reason) => out.drop_log.push(DropEntry {
                shot_id: shot.shot_id.clone(),
                reason,
            }),
        }
    }
    out
}
