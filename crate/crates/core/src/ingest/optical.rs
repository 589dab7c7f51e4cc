//! Optical reflectance time series, one per location, stored as NDJSON.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalObservation {
    /// Fraction of the year, 0 = January 1, 1 = December 31.
    pub t: f64,
    pub green: f64,
    pub nir: f64,
    pub swir1: f64,
    pub swir2: f64,
    pub cloud_prob: f64,
}

impl OpticalObservation {
    fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.t) {
            return Err(format!("t = {} outside [0, 1]", self.t));
        }
        for (name, v) in [
            ("green", self.green),
            ("nir", self.nir),
            ("swir1", self.swir1),
            ("swir2", self.swir2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!(
                    "{name} = {v} must be a finite non-negative reflectance"
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.cloud_prob) {
            return Err(format!("cloud_prob = {} outside [0, 1]", self.cloud_prob));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalSeries {
    pub location_id: String,
    pub lon: f64,
    pub lat: f64,
    #[serde(rename = "obs")]
    pub observations: Vec<OpticalObservation>,
}

/// Parse NDJSON optical series. Observations are validated and sorted by `t`.
pub fn parse_optical_series<R: Read>(reader: R) -> Result<Vec<OpticalSeries>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut series: OpticalSeries = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            field: "record".into(),
            message: e.to_string(),
        })?;
        for obs in &series.observations {
            obs.validate().map_err(|message| Error::Parse {
                line: line_no,
                field: "obs".into(),
                message,
            })?;
        }
        series.observations.sort_by(|a, b| a.t.total_cmp(&b.t));
        out.push(series);
    }
    Ok(out)
}

pub fn write_optical_series<W: Write>(writer: W, series: &[OpticalSeries]) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    for s in series {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
