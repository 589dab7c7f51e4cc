//! Optical feature extraction: cloud screening, GCVI and per-band harmonics.

use serde::{Deserialize, Serialize};

use super::harmonic::{HarmonicConfig, HarmonicDesign};
use crate::error::{Error, Result};
use crate::ingest::{OpticalObservation, OpticalSeries};

/// Number of harmonic features per location at the default order.
pub const HARM_DIM: usize = 20;

/// Bands in feature order.
pub const BANDS: [&str; 4] = ["nir", "swir1", "swir2", "gcvi"];

/// Green chlorophyll vegetation index, `nir / green - 1`.
pub fn gcvi(nir: f64, green: f64) -> Result<f64> {
    if !(green > 0.0) {
        return Err(Error::UndefinedIndex { green });
    }
    Ok(nir / green - 1.0)
}

/// Observations whose cloud probability does not exceed the threshold.
pub fn clear_observations(series: &OpticalSeries, cfg: &HarmonicConfig) -> Vec<OpticalObservation> {
    series
        .observations
        .iter()
        .filter(|o| o.cloud_prob <= cfg.cloud_prob_max)
        .copied()
        .collect()
}

/// Harmonic coefficients for NIR, SWIR1, SWIR2 and GCVI, each laid out as
/// (c, a1, b1, ..., an, bn), concatenated in that band order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S2Features {
    pub values: Vec<f64>,
}

impl S2Features {
    pub fn band(&self, index: usize) -> &[f64] {
        let per = self.values.len() / BANDS.len();
        &self.values[index * per..(index + 1) * per]
    }
}

fn obs_key_cmp(a: &OpticalObservation, b: &OpticalObservation) -> std::cmp::Ordering {
    a.t.total_cmp(&b.t)
        .then(a.green.total_cmp(&b.green))
        .then(a.nir.total_cmp(&b.nir))
        .then(a.swir1.total_cmp(&b.swir1))
        .then(a.swir2.total_cmp(&b.swir2))
        .then(a.cloud_prob.total_cmp(&b.cloud_prob))
}

/// Fit harmonics to every band of a location's clear observations.
///
/// Observations are put in a canonical order first, so the result does not
/// depend on input order. Observations with non-positive green reflectance
/// are left out of the GCVI fit only.
pub fn build_s2_features(series: &OpticalSeries, cfg: &HarmonicConfig) -> Result<S2Features> {
    let mut clear = clear_observations(series, cfg);
    clear.sort_by(obs_key_cmp);

    let required = cfg.min_obs.max(cfg.n_coeffs());
    if clear.len() < required {
        return Err(Error::InsufficientObservations {
            band: BANDS[0],
            count: clear.len(),
            required,
        });
    }

    let times: Vec<f64> = clear.iter().map(|o| o.t).collect();
    let design = HarmonicDesign::new(&times, cfg)?;
    let mut values = Vec::with_capacity(4 * cfg.n_coeffs());
    for band in [
        |o: &OpticalObservation| o.nir,
        |o: &OpticalObservation| o.swir1,
        |o: &OpticalObservation| o.swir2,
    ] {
        let ys: Vec<f64> = clear.iter().map(band).collect();
        values.extend(design.fit(&ys)?.to_vec());
    }

    let green_ok: Vec<(f64, f64)> = clear
        .iter()
        .filter_map(|o| gcvi(o.nir, o.green).ok().map(|g| (o.t, g)))
        .collect();
    let gcvi_coeffs = if green_ok.len() == clear.len() {
        let ys: Vec<f64> = green_ok.iter().map(|p| p.1).collect();
        design.fit(&ys)?
    } else {
        if green_ok.len() < required {
            return Err(Error::InsufficientObservations {
                band: BANDS[3],
                count: green_ok.len(),
                required,
            });
        }
        let t: Vec<f64> = green_ok.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = green_ok.iter().map(|p| p.1).collect();
        HarmonicDesign::new(&t, cfg)?.fit(&ys)?
    };
    values.extend(gcvi_coeffs.to_vec());
    Ok(S2Features { values })
}
