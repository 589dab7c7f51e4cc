use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::CropProfile;
use crate::ingest::{OpticalObservation, OpticalSeries};

const BASE_GCVI: f64 = 0.6;
const GREEN_BASE: f64 = 0.06;
const GREEN_PER_GCVI: f64 = 0.004;
const SWIR1_BASE: f64 = 0.26;
const SWIR1_PER_GCVI: f64 = 0.018;
const SWIR2_BASE: f64 = 0.19;
const SWIR2_PER_GCVI: f64 = 0.022;
const MIN_REFLECTANCE: f64 = 0.001;
/// Cloud probabilities of clear scenes stay at or below this value, cloudy
/// scenes start at twice it.
pub const CLEAR_CLOUD_MAX: f64 = 0.25;

/// Acquisition, cloud and noise parameters shared by every location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalModel {
    pub n_acquisitions: usize,
    /// Standard deviation of additive reflectance noise.
    pub noise_sd: f64,
    /// Probability that an acquisition is cloudy.
    pub cloud_frac: f64,
    /// Minimum number of clear acquisitions per series.
    pub min_clear: usize,
    /// Standard deviation of the seasonal pulse, as a fraction of the year.
    pub pulse_width: f64,
}

impl Default for OpticalModel {
    fn default() -> Self {
        OpticalModel {
            n_acquisitions: 36,
            noise_sd: 0.004,
            cloud_frac: 0.3,
            min_clear: 12,
            pulse_width: 0.08,
        }
    }
}

impl OpticalModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_acquisitions == 0 || self.min_clear > self.n_acquisitions {
            return Err(format!(
                "need 0 < min_clear ({}) <= n_acquisitions ({})",
                self.min_clear, self.n_acquisitions
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(format!(
                "noise_sd must be finite and >= 0, got {}",
                self.noise_sd
            ));
        }
        if !(0.0..=1.0).contains(&self.cloud_frac) {
            return Err(format!(
                "cloud_frac must lie in [0, 1], got {}",
                self.cloud_frac
            ));
        }
        if !(self.pulse_width > 0.0 && self.pulse_width.is_finite()) {
            return Err(format!(
                "pulse_width must be positive, got {}",
                self.pulse_width
            ));
        }
        Ok(())
    }
}

/// Noise-free reflectances at time `t` for a pulse of the given amplitude.
/// Returns (green, nir, swir1, swir2).
pub fn pulse_reflectance(t: f64, peak_t: f64, amplitude: f64, width: f64) -> [f64; 4] {
    let pulse = (-0.5 * ((t - peak_t) / width).powi(2)).exp();
    let g = amplitude * pulse;
    let green = GREEN_BASE + GREEN_PER_GCVI * g;
    let nir = green * (1.0 + BASE_GCVI + g);
    [
        green,
        nir,
        SWIR1_BASE - SWIR1_PER_GCVI * g,
        SWIR2_BASE - SWIR2_PER_GCVI * g,
    ]
}

/// Observations for one location with its seasonal peak at `peak_t`.
pub fn gen_observations<R: Rng + ?Sized>(
    peak_t: f64,
    amplitude: f64,
    model: &OpticalModel,
    rng: &mut R,
) -> Vec<OpticalObservation> {
    let n = model.n_acquisitions;
    let mut obs: Vec<OpticalObservation> = (0..n)
        .map(|k| {
            let t = (k as f64 + rng.random_range(0.1..0.9)) / n as f64;
            let clean = pulse_reflectance(t, peak_t, amplitude, model.pulse_width);
            let mut noisy = [0.0; 4];
            for (out, v) in noisy.iter_mut().zip(clean) {
                let e: f64 = rng.sample(StandardNormal);
                *out = (v + model.noise_sd * e).max(MIN_REFLECTANCE);
            }
            let cloud_prob = if rng.random::<f64>() < model.cloud_frac {
                rng.random_range(2.0 * CLEAR_CLOUD_MAX..=1.0)
            } else {
                rng.random_range(0.0..=CLEAR_CLOUD_MAX)
            };
            OpticalObservation {
                t,
                green: noisy[0],
                nir: noisy[1],
                swir1: noisy[2],
                swir2: noisy[3],
                cloud_prob,
            }
        })
        .collect();

    let clear = obs
        .iter()
        .filter(|o| o.cloud_prob <= CLEAR_CLOUD_MAX)
        .count();
    if clear < model.min_clear {
        let cloudy: Vec<usize> = (0..n)
            .filter(|&i| obs[i].cloud_prob > CLEAR_CLOUD_MAX)
            .collect();
        let need = model.min_clear - clear;
        for j in 0..need {
            let i = cloudy[j * cloudy.len() / need];
            obs[i].cloud_prob *= CLEAR_CLOUD_MAX / 2.0;
        }
    }
    obs
}

/// A full optical series for a location planted with `profile` in a region
/// whose phenology is shifted by `shift`.
pub fn gen_optical_series<R: Rng + ?Sized>(
    location_id: &str,
    lon: f64,
    lat: f64,
    profile: &CropProfile,
    shift: f64,
    model: &OpticalModel,
    rng: &mut R,
) -> OpticalSeries {
    let jitter: f64 = rng.sample(StandardNormal);
    let peak_t = profile.peak_t_mean + shift + profile.peak_t_sd * jitter;
    OpticalSeries {
        location_id: location_id.to_string(),
        lon,
        lat,
        observations: gen_observations(peak_t, profile.peak_gcvi, model, rng),
    }
}
