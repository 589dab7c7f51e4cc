//! Harmonic regression of seasonal series:
//! `f(t) = c + sum_k a_k cos(2 pi omega k t) + b_k sin(2 pi omega k t)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::lstsq::QrFactor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarmonicConfig {
    /// Number of harmonic terms.
    pub n: usize,
    /// Base frequency multiplier.
    pub omega: f64,
    /// Minimum number of clear observations a fit requires.
    pub min_obs: usize,
    /// Observations with a larger cloud probability are discarded.
    pub cloud_prob_max: f64,
}

impl Default for HarmonicConfig {
    fn default() -> Self {
        HarmonicConfig {
            n: 2,
            omega: 1.5,
            min_obs: 5,
            cloud_prob_max: 0.3,
        }
    }
}

impl HarmonicConfig {
    pub fn n_coeffs(&self) -> usize {
        2 * self.n + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Config("harmonic order n must be at least 1".into()));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::Config(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        if self.min_obs < self.n_coeffs() {
            return Err(Error::Config(format!(
                "min_obs = {} is below the {} free coefficients",
                self.min_obs,
                self.n_coeffs()
            )));
        }
        if !(0.0..=1.0).contains(&self.cloud_prob_max) {
            return Err(Error::Config(format!(
                "cloud_prob_max = {} outside [0, 1]",
                self.cloud_prob_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicCoeffs {
    pub c: f64,
    /// Cosine coefficients a_1..a_n.
    pub a: Vec<f64>,
    /// Sine coefficients b_1..b_n.
    pub b: Vec<f64>,
}

impl HarmonicCoeffs {
    pub fn zeros(n: usize) -> Self {
        HarmonicCoeffs {
            c: 0.0,
            a: vec![0.0; n],
            b: vec![0.0; n],
        }
    }

    pub fn order(&self) -> usize {
        self.a.len()
    }

    /// Flatten as (c, a1, b1, a2, b2, ...).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + 2 * self.order());
        v.push(self.c);
        for (a, b) in self.a.iter().zip(&self.b) {
            v.push(*a);
            v.push(*b);
        }
        v
    }

    fn from_flat(x: &[f64]) -> Self {
        let n = (x.len() - 1) / 2;
        HarmonicCoeffs {
            c: x[0],
            a: (0..n).map(|k| x[1 + 2 * k]).collect(),
            b: (0..n).map(|k| x[2 + 2 * k]).collect(),
        }
    }

    pub fn evaluate(&self, omega: f64, t: f64) -> f64 {
        evaluate_harmonic(self, omega, t)
    }

    /// Time in [0, 1] at which the fitted curve peaks, found by a dense grid
    /// scan refined by golden-section search.
    ///
    /// The curve repeats every `1 / omega`, so on [0, 1] the maximum can occur
    /// more than once; [`Self::peak_time_in`] narrows the search.
    pub fn peak_time(&self, omega: f64) -> f64 {
        self.peak_time_in(omega, 0.0, 1.0)
    }

    /// Peak time restricted to `[from, to]`.
    pub fn peak_time_in(&self, omega: f64, from: f64, to: f64) -> f64 {
        const GRID: usize = 2000;
        let step = (to - from) / GRID as f64;
        let best = (0..=GRID)
            .map(|i| from + i as f64 * step)
            .max_by(|&x, &y| self.evaluate(omega, x).total_cmp(&self.evaluate(omega, y)))
            .unwrap_or(from);
        let (mut lo, mut hi) = ((best - step).max(from), (best + step).min(to));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..60 {
            let x1 = hi - g * (hi - lo);
            let x2 = lo + g * (hi - lo);
            if self.evaluate(omega, x1) < self.evaluate(omega, x2) {
                lo = x1;
            } else {
                hi = x2;
            }
        }
        (lo + hi) / 2.0
    }
}

/// Value of the harmonic model at time `t`.
pub fn evaluate_harmonic(coeffs: &HarmonicCoeffs, omega: f64, t: f64) -> f64 {
    let mut v = coeffs.c;
    for (k, (a, b)) in coeffs.a.iter().zip(&coeffs.b).enumerate() {
        let arg = 2.0 * PI * omega * (k + 1) as f64 * t;
        v += a * arg.cos() + b * arg.sin();
    }
    v
}

fn design_row(t: f64, n: usize, omega: f64, row: &mut [f64]) {
    row[0] = 1.0;
    for k in 1..=n {
        let arg = 2.0 * PI * omega * k as f64 * t;
        row[2 * k - 1] = arg.cos();
        row[2 * k] = arg.sin();
    }
}

/// A factored harmonic design for a fixed set of sample times, reusable
/// across several series observed at those times.
#[derive(Debug, Clone)]
pub struct HarmonicDesign {
    n: usize,
    qr: QrFactor,
}

impl HarmonicDesign {
    pub fn new(times: &[f64], cfg: &HarmonicConfig) -> Result<Self> {
        if times.len() < cfg.min_obs.max(cfg.n_coeffs()) {
            return Err(Error::TooFewPoints {
                count: times.len(),
                required: cfg.min_obs.max(cfg.n_coeffs()),
            });
        }
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::Validation(format!("non-finite time {t}")));
        }
        if times.iter().all(|&t| t == times[0]) {
            return Err(Error::Rank(format!(
                "all {} sample times equal {}",
                times.len(),
                times[0]
            )));
        }
        let p = cfg.n_coeffs();
        let mut a = vec![0.0; times.len() * p];
        for (row, &t) in a.chunks_mut(p).zip(times) {
            design_row(t, cfg.n, cfg.omega, row);
        }
        Ok(HarmonicDesign {
            n: cfg.n,
            qr: QrFactor::new(&a, times.len(), p),
        })
    }

    pub fn rank(&self) -> usize {
        self.qr.rank()
    }

    pub fn fit(&self, values: &[f64]) -> Result<HarmonicCoeffs> {
        if values.len() != self.qr.rows() {
            return Err(Error::Length(values.len(), self.qr.rows()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite series value {v}")));
        }
        let x = self.qr.solve(values);
        debug_assert_eq!(x.len(), 2 * self.n + 1);
        Ok(HarmonicCoeffs::from_flat(&x))
    }
}

/// Least-squares harmonic fit of `(t, value)` pairs.
pub fn fit_harmonics(ts: &[(f64, f64)], cfg: &HarmonicConfig) -> Result<HarmonicCoeffs> {
    let times: Vec<f64> = ts.iter().map(|p| p.0).collect();
    let values: Vec<f64> = ts.iter().map(|p| p.1).collect();
    HarmonicDesign::new(&times, cfg)?.fit(&values)
}
