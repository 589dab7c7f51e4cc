//! Fixed-length feature vectors: 11 relative heights per shot and 20
//! harmonic coefficients per optical location.

pub mod harmonic;
pub mod lstsq;
pub mod optical;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{GediShot, RH_LEN};

pub use harmonic::{
    evaluate_harmonic, fit_harmonics, HarmonicCoeffs, HarmonicConfig, HarmonicDesign,
};
pub use optical::{build_s2_features, clear_observations, gcvi, S2Features, BANDS, HARM_DIM};

/// Number of relative heights kept per shot (every 10th percentile).
pub const RH_DIM: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKind {
    #[serde(rename = "RH11")]
    Rh11,
    #[serde(rename = "HARM20")]
    Harm20,
}

impl FeatureKind {
    pub fn dim(&self) -> usize {
        match self {
            FeatureKind::Rh11 => RH_DIM,
            FeatureKind::Harm20 => HARM_DIM,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Rh11 => "RH11",
            FeatureKind::Harm20 => "HARM20",
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            FeatureKind::Rh11 => 1,
            FeatureKind::Harm20 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(FeatureKind::Rh11),
            2 => Some(FeatureKind::Harm20),
            _ => None,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RH11" => Ok(FeatureKind::Rh11),
            "HARM20" => Ok(FeatureKind::Harm20),
            _ => Err(Error::Config(format!("unknown feature kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhFeatures {
    pub values: [f64; RH_DIM],
}

/// RH0, RH10, ..., RH100 of a shot.
pub fn subsample_rh(shot: &GediShot) -> RhFeatures {
    debug_assert_eq!(shot.rh.len(), RH_LEN);
    let mut values = [0.0; RH_DIM];
    for (i, v) in values.iter_mut().enumerate() {
        *v = shot.rh[i * 10];
    }
    RhFeatures { values }
}

/// One row of a feature matrix file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub location_id: String,
    pub values: Vec<f64>,
}

fn feature_header(kind: FeatureKind) -> Vec<String> {
    let mut h = vec!["location_id".to_string(), "kind".to_string()];
    h.extend((0..kind.dim()).map(|i| format!("f{i:02}")));
    h
}

/// Write a feature matrix CSV: `location_id,kind,f00,...`.
pub fn write_feature_matrix<W: Write>(
    writer: W,
    kind: FeatureKind,
    rows: &[FeatureRow],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(feature_header(kind))
        .map_err(crate::ingest::shots::csv_io)?;
    for row in rows {
        if row.values.len() != kind.dim() {
            return Err(Error::Dimension {
                expected: kind.dim(),
                got: row.values.len(),
            });
        }
        let mut rec = vec![row.location_id.clone(), kind.to_string()];
        rec.extend(row.values.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)
            .map_err(crate::ingest::shots::csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a feature matrix CSV. The kind is taken from the header width and
/// checked on every row.
pub fn read_feature_matrix<R: Read>(reader: R) -> Result<(FeatureKind, Vec<FeatureRow>)> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            field: "header".into(),
            message: e.to_string(),
        })?
        .clone();
    let kind = match headers.len().checked_sub(2) {
        Some(RH_DIM) => FeatureKind::Rh11,
        Some(HARM_DIM) => FeatureKind::Harm20,
        _ => {
            return Err(Error::Parse {
                line: 1,
                field: "header".into(),
                message: format!("unexpected column count {}", headers.len()),
            })
        }
    };
    if headers.iter().collect::<Vec<_>>() != feature_header(kind) {
        return Err(Error::Parse {
            line: 1,
            field: "header".into(),
            message: "column names do not match the feature matrix layout".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            field: "record".into(),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row_kind: FeatureKind = rec[1].parse().map_err(|_| Error::Parse {
            line,
            field: "kind".into(),
            message: format!("unknown kind `{}`", &rec[1]),
        })?;
        if row_kind != kind {
            return Err(Error::Parse {
                line,
                field: "kind".into(),
                message: format!("row kind {row_kind} in a {kind} file"),
            });
        }
        let values = (2..rec.len())
            .map(|i| {
                rec[i].parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    field: format!("f{:02}", i - 2),
                    message: format!("invalid number `{}`", &rec[i]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow {
            location_id: rec[0].to_string(),
            values,
        });
    }
    Ok((kind, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::shots::tests::shot_with_rh;
    use proptest::prelude::*;

    #[test]
    fn linear_curve_subsample() {
        let shot = shot_with_rh("lin", (0..RH_LEN).map(|i| i as f64 / 100.0).collect());
        let f = subsample_rh(&shot);
        for (i, v) in f.values.iter().enumerate() {
            assert_eq!(*v, (i * 10) as f64 / 100.0);
        }
        let flat = shot_with_rh("flat", vec![0.0; RH_LEN]);
        assert_eq!(subsample_rh(&flat).values, [0.0; RH_DIM]);
    }

    proptest! {
        #[test]
        fn subsample_is_monotone_subsequence(incs in proptest::collection::vec(0.0f64..0.2, RH_LEN)) {
            let mut acc = -1.5;
            let rh: Vec<f64> = incs.iter().map(|d| { acc += d; acc }).collect();
            let shot = shot_with_rh("p", rh.clone());
            let f = subsample_rh(&shot);
            for i in 0..RH_DIM {
                prop_assert_eq!(f.values[i], rh[i * 10]);
            }
            prop_assert!(f.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn feature_matrix_round_trip() {
        let rows = vec![
            FeatureRow {
                location_id: "a".into(),
                values: (0..11).map(|i| i as f64 * 0.1 - 0.3).collect(),
            },
            FeatureRow {
                location_id: "b".into(),
                values: vec![1.0 / 3.0; 11],
            },
        ];
        let mut buf = Vec::new();
        write_feature_matrix(&mut buf, FeatureKind::Rh11, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("location_id,kind,f00,f01"));
        let (kind, back) = read_feature_matrix(&buf[..]).unwrap();
        assert_eq!(kind, FeatureKind::Rh11);
        assert_eq!(back, rows);
    }

    #[test]
    fn feature_matrix_rejects_wrong_width_and_kind() {
        let bad = FeatureRow {
            location_id: "a".into(),
            values: vec![0.0; 3],
        };
        assert!(write_feature_matrix(Vec::new(), FeatureKind::Harm20, &[bad]).is_err());
        let mut buf = Vec::new();
        let row = FeatureRow {
            location_id: "a".into(),
            values: vec![0.0; 11],
        };
        write_feature_matrix(&mut buf, FeatureKind::Rh11, &[row]).unwrap();
        let text = String::from_utf8(buf)
            .unwrap()
            .replace(",RH11,", ",HARM20,");
        assert!(read_feature_matrix(text.as_bytes()).is_err());
    }

    #[test]
    fn kind_names() {
        assert_eq!("rh11".parse::<FeatureKind>().unwrap(), FeatureKind::Rh11);
        assert_eq!(FeatureKind::Harm20.to_string(), "HARM20");
        assert_eq!(
            FeatureKind::from_code(FeatureKind::Harm20.code()),
            Some(FeatureKind::Harm20)
        );
        assert!("ndvi".parse::<FeatureKind>().is_err());
    }
}
