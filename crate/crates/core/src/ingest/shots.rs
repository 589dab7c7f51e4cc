//! Lidar shot records and their CSV / NDJSON encodings.

use std::io::{BufRead, BufReader, Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of relative-height percentiles carried by a shot (RH0..RH100).
pub const RH_LEN: usize = 101;

/// One lidar footprint with its relative-height curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GediShot {
    pub shot_id: String,
    pub orbit_id: String,
    pub lon: f64,
    pub lat: f64,
    pub date: NaiveDate,
    pub quality_flag: u8,
    pub degrade_flag: u32,
    /// Heights in meters indexed by percentile 0..=100.
    pub rh: Vec<f64>,
}

impl GediShot {
    pub fn month(&self) -> u32 {
        self.date.month()
    }

    pub fn rh100(&self) -> f64 {
        self.rh[RH_LEN - 1]
    }

    /// Returns true when every consecutive RH pair is non-decreasing.
    pub fn rh_is_monotone(&self) -> bool {
        self.rh.windows(2).all(|w| w[0] <= w[1])
    }

    fn check_ranges(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(("lon", format!("{} outside [-180, 180]", self.lon)));
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(("lat", format!("{} outside [-90, 90]", self.lat)));
        }
        if self.quality_flag > 1 {
            return Err((
                "quality_flag",
                format!("{} not in {{0,1}}", self.quality_flag),
            ));
        }
        if self.rh.len() != RH_LEN {
            return Err((
                "rh",
                format!("expected {RH_LEN} values, got {}", self.rh.len()),
            ));
        }
        if let Some(i) = self.rh.iter().position(|v| !v.is_finite()) {
            return Err(("rh", format!("rh{i:03} is not finite")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotFormat {
    Csv,
    Ndjson,
}

impl ShotFormat {
    /// Guess the format from a file extension; anything but `.ndjson`/`.jsonl` is CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ndjson") | Some("jsonl") => ShotFormat::Ndjson,
            _ => ShotFormat::Csv,
        }
    }
}

fn rh_column(i: usize) -> String {
    format!("rh{i:03}")
}

/// CSV header for shot files.
pub fn csv_header() -> Vec<String> {
    let mut cols: Vec<String> = [
        "shot_id",
        "orbit_id",
        "lon",
        "lat",
        "date",
        "quality_flag",
        "degrade_flag",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((0..RH_LEN).map(rh_column));
    cols
}

/// Parse a stream of shot records. Record order is preserved. All records are
/// parsed before monotonicity is checked so that the error lists every
/// offending shot.
pub fn parse_shot_records<R: Read>(reader: R, format: ShotFormat) -> Result<Vec<GediShot>> {
    let shots = match format {
        ShotFormat::Csv => parse_csv(reader)?,
        ShotFormat::Ndjson => parse_ndjson(reader)?,
    };
    let bad: Vec<String> = shots
        .iter()
        .filter(|s| !s.rh_is_monotone())
        .map(|s| s.shot_id.clone())
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonMonotoneRh(bad));
    }
    Ok(shots)
}

fn parse_err(line: u64, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_csv<R: Read>(reader: R) -> Result<Vec<GediShot>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(parse_err(1, "header", e.to_string())),
    };
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let expected = csv_header();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, name, "missing column"))
    };
    let idx_shot = col("shot_id")?;
    let idx_orbit = col("orbit_id")?;
    let idx_lon = col("lon")?;
    let idx_lat = col("lat")?;
    let idx_date = col("date")?;
    let idx_q = col("quality_flag")?;
    let idx_d = col("degrade_flag")?;
    let idx_rh: Vec<usize> = expected[7..]
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;

    let mut shots = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, "record", e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize, name: &str| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| parse_err(line, name, "missing value"))
        };
        let float = |i: usize, name: &str| -> Result<f64> {
            let raw = get(i, name)?;
            raw.parse::<f64>()
                .map_err(|_| parse_err(line, name, format!("invalid number `{raw}`")))
        };
        let date_raw = get(idx_date, "date")?;
        let date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d")
            .map_err(|_| parse_err(line, "date", format!("invalid date `{date_raw}`")))?;
        let q_raw = get(idx_q, "quality_flag")?;
        let quality_flag = q_raw
            .parse::<u8>()
            .map_err(|_| parse_err(line, "quality_flag", format!("invalid flag `{q_raw}`")))?;
        let d_raw = get(idx_d, "degrade_flag")?;
        let degrade_flag = d_raw
            .parse::<u32>()
            .map_err(|_| parse_err(line, "degrade_flag", format!("invalid flag `{d_raw}`")))?;
        let mut rh = Vec::with_capacity(RH_LEN);
        for (k, &i) in idx_rh.iter().enumerate() {
            rh.push(float(i, &expected[7 + k])?);
        }
        let shot = GediShot {
            shot_id: get(idx_shot, "shot_id")?.to_string(),
            orbit_id: get(idx_orbit, "orbit_id")?.to_string(),
            lon: float(idx_lon, "lon")?,
            lat: float(idx_lat, "lat")?,
            date,
            quality_flag,
            degrade_flag,
            rh,
        };
        shot.check_ranges()
            .map_err(|(field, msg)| parse_err(line, field, msg))?;
        shots.push(shot);
    }
    Ok(shots)
}

fn parse_ndjson<R: Read>(reader: R) -> Result<Vec<GediShot>> {
    let mut shots = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let shot: GediShot =
            serde_json::from_str(&line).map_err(|e| parse_err(line_no, "record", e.to_string()))?;
        shot.check_ranges()
            .map_err(|(field, msg)| parse_err(line_no, field, msg))?;
        shots.push(shot);
    }
    Ok(shots)
}

/// Write shots in the given format. Floats use the shortest representation
/// that parses back to the same value.
pub fn write_shot_records<W: Write>(
    writer: W,
    shots: &[GediShot],
    format: ShotFormat,
) -> Result<()> {
    match format {
        ShotFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(writer);
            wtr.write_record(csv_header()).map_err(csv_io)?;
            for s in shots {
                let mut row = vec![
                    s.shot_id.clone(),
                    s.orbit_id.clone(),
                    s.lon.to_string(),
                    s.lat.to_string(),
                    s.date.format("%Y-%m-%d").to_string(),
                    s.quality_flag.to_string(),
                    s.degrade_flag.to_string(),
                ];
                row.extend(s.rh.iter().map(|v| v.to_string()));
                wtr.write_record(&row).map_err(csv_io)?;
            }
            wtr.flush()?;
        }
        ShotFormat::Ndjson => {
            let mut w = std::io::BufWriter::new(writer);
            for s in shots {
                serde_json::to_writer(&mut w, s)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
