use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::raster::LabelRaster;
use super::shots::GediShot;
use crate::error::{Error, Result};

/// Months covered by the lidar acquisition window (July to September).
pub const STUDY_MONTHS: [u32; 3] = [7, 8, 9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledShot {
    pub shot: GediShot,
    pub crop_code: i32,
    pub crop_name: String,
    pub is_maize: bool,
}

/// Label each shot with the class at its footprint centroid. Shots on nodata
/// or non-crop cells are dropped.
pub fn attach_labels(
    shots: &[GediShot],
    raster: &LabelRaster,
    maize_code: i32,
) -> Result<Vec<LabeledShot>> {
    if !raster.legend.contains_key(&maize_code) {
        return Err(Error::Config(format!(
            "maize code {maize_code} is not in the raster legend"
        )));
    }
    Ok(shots
        .iter()
        .filter_map(|shot| {
            let code = raster.sample_label(shot.lon, shot.lat);
            raster.is_crop(code).then(|| LabeledShot {
                shot: shot.clone(),
                crop_code: code,
                crop_name: raster.legend[&code].clone(),
                is_maize: code == maize_code,
            })
        })
        .collect())
}

/// Validate a month subset against the study window.
pub fn validate_months(months: &BTreeSet<u32>) -> Result<()> {
    if months.is_empty() {
        return Err(Error::Config("month set must not be empty".into()));
    }
    if let Some(m) = months.iter().find(|m| !STUDY_MONTHS.contains(m)) {
        return Err(Error::Config(format!(
            "month {m} is outside the July-September study window"
        )));
    }
    Ok(())
}

/// Keep shots acquired in one of `months`, preserving order.
pub fn month_filter(shots: &[GediShot], months: &BTreeSet<u32>) -> Result<Vec<GediShot>> {
    validate_months(months)?;
    Ok(shots
        .iter()
        .filter(|s| months.contains(&s.month()))
        .cloned()
        .collect())
}
