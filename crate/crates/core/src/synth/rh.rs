use rand::Rng;
use rand_distr::StandardNormal;

use crate::ingest::RH_LEN;

/// Largest value any generated RH curve may reach, in meters.
pub const RH_CAP_M: f64 = 9.9;

const GROUND_SIGMA_M: f64 = 0.12;
const SIGMA_PER_M: f64 = 0.15;
const CANOPY_EXPONENT: i32 = 4;
const INCREMENT_NOISE: f64 = 0.15;
const OFFSET_NOISE_M: f64 = 0.03;
// Scales a logistic quantile to roughly unit variance.
const LOGISTIC_SCALE: f64 = 0.55;

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Noise-free shape: a ground-centered spread plus a canopy term that only
/// lifts the upper percentiles.
fn base_curve(height_m: f64, sigma: f64) -> [f64; RH_LEN] {
    let mut out = [0.0; RH_LEN];
    for (p, v) in out.iter_mut().enumerate() {
        let q = (p as f64 + 0.5) / RH_LEN as f64;
        let spread = LOGISTIC_SCALE * (q / (1.0 - q)).ln();
        let canopy = height_m * (p as f64 / 100.0).powi(CANOPY_EXPONENT);
        *v = sigma * spread + canopy;
    }
    out
}

/// A 101-percentile relative-height curve for a footprint over a canopy of
/// the given height.
///
/// The curve is the cumulative sum of non-negative increments, so it is
/// monotone non-decreasing for every draw.
pub fn gen_rh_curve<R: Rng + ?Sized>(height_m: f64, rng: &mut R) -> Vec<f64> {
    let height = height_m.max(0.0);
    let sigma = (GROUND_SIGMA_M + SIGMA_PER_M * height) * (0.05 * standard_normal(rng)).exp();
    let canopy = (height * (1.0 + 0.05 * standard_normal(rng))).max(0.0);
    let base = base_curve(canopy, sigma);

    let mut rh = Vec::with_capacity(RH_LEN);
    let mut level = base[0] + OFFSET_NOISE_M * standard_normal(rng);
    rh.push(level.min(RH_CAP_M));
    for p in 1..RH_LEN {
        let step = (base[p] - base[p - 1]).max(0.0);
        let factor = (1.0 + INCREMENT_NOISE * standard_normal(rng)).max(0.0);
        level += step * factor;
        rh.push(level.min(RH_CAP_M));
    }
    rh
}
