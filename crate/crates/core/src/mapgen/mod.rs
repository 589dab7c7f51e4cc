//! Wall-to-wall maize maps from an optical-feature forest.
//!
//! Features come from a [`FeatureSource`], which may hold precomputed
//! vectors or derive them per cell on demand. The grid is processed in
//! square tiles in parallel and assembled in row-major order, so output is
//! identical for any thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{compute_metrics, RunMetrics};
use crate::features::{build_s2_features, FeatureKind, HarmonicConfig};
use crate::forest::Forest;
use crate::ingest::{FloatRaster, GridHeader, LabelRaster, OpticalSeries};
use crate::synth::{cell_series, RegionSpec};

pub const MAIZE_CODE: i32 = 1;
pub const NON_MAIZE_CODE: i32 = 0;
pub const MAP_NODATA: i32 = -9999;
pub const CONFIDENCE_NODATA: f64 = -9999.0;
const KM_PER_DEGREE: f64 = 111.32;

/// Per-cell optical features on a grid.
pub trait FeatureSource: Sync {
    fn header(&self) -> &GridHeader;
    /// Features of a cell, or `None` when the cell has no usable series.
    fn cell_features(&self, row: usize, col: usize) -> Result<Option<Vec<f64>>>;
}

fn usable(result: Result<crate::features::S2Features>) -> Result<Option<Vec<f64>>> {
    match result {
        Ok(f) => Ok(Some(f.values)),
        Err(
            Error::InsufficientObservations { .. } | Error::TooFewPoints { .. } | Error::Rank(_),
        ) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Precomputed features, one optional vector per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRaster {
    pub header: GridHeader,
    pub cells: Vec<Option<Vec<f64>>>,
}

impl FeatureRaster {
    pub fn empty(header: GridHeader) -> Self {
        FeatureRaster {
            cells: vec![None; header.len()],
            header,
        }
    }

    pub fn set(&mut self, row: usize, col: usize, values: Option<Vec<f64>>) {
        self.cells[row * self.header.n_cols + col] = values;
    }

    /// Place each series in the cell holding its coordinates and fit its
    /// features. Series outside the grid are counted and skipped; two series
    /// in one cell are an error.
    pub fn from_optical(
        header: GridHeader,
        series: &[OpticalSeries],
        cfg: &HarmonicConfig,
    ) -> Result<(Self, usize)> {
        let mut owner: BTreeMap<usize, &str> = BTreeMap::new();
        let mut placed = Vec::new();
        let mut outside = 0;
        for s in series {
            match header.cell_of(s.lon, s.lat) {
                Some((r, c)) => {
                    let idx = r * header.n_cols + c;
                    if let Some(prev) = owner.insert(idx, &s.location_id) {
                        return Err(Error::Validation(format!(
                            "series '{prev}' and '{}' fall in the same cell ({r}, {c})",
                            s.location_id
                        )));
                    }
                    placed.push((idx, s));
                }
                None => outside += 1,
            }
        }
        let fitted: Vec<(usize, Option<Vec<f64>>)> = placed
            .par_iter()
            .map(|&(idx, s)| Ok((idx, usable(build_s2_features(s, cfg))?)))
            .collect::<Result<_>>()?;
        let mut raster = FeatureRaster::empty(header);
        for (idx, f) in fitted {
            raster.cells[idx] = f;
        }
        Ok((raster, outside))
    }
}

impl FeatureSource for FeatureRaster {
    fn header(&self) -> &GridHeader {
        &self.header
    }

    fn cell_features(&self, row: usize, col: usize) -> Result<Option<Vec<f64>>> {
        Ok(self.cells[row * self.header.n_cols + col].clone())
    }
}

/// Features of a synthetic region computed cell by cell, without holding
/// the series in memory.
pub struct SynthCells<'a> {
    pub spec: &'a RegionSpec,
    pub truth: &'a LabelRaster,
    pub cfg: HarmonicConfig,
}

impl FeatureSource for SynthCells<'_> {
    fn header(&self) -> &GridHeader {
        &self.truth.header
    }

    fn cell_features(&self, row: usize, col: usize) -> Result<Option<Vec<f64>>> {
        let (lon, lat) = self.truth.header.cell_center(row, col);
        let series = cell_series(self.spec, self.truth, row, col, "", lon, lat);
        usable(build_s2_features(&series, &self.cfg))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapOptions {
    /// Edge of the square tiles processed in parallel, in cells.
    pub tile_edge: usize,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions { tile_edge: 512 }
    }
}

/// Class raster plus maize vote fractions on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MapOutput {
    pub classes: LabelRaster,
    pub confidence: FloatRaster,
}

pub fn map_legend() -> BTreeMap<i32, String> {
    BTreeMap::from([
        (NON_MAIZE_CODE, "non-maize".to_string()),
        (MAIZE_CODE, "maize".to_string()),
    ])
}

fn misaligned(a: &GridHeader, b: &GridHeader) -> Error {
    Error::Misaligned {
        left: a.describe(),
        right: b.describe(),
    }
}

/// Classify every cropland cell. Non-cropland cells and cells without
/// features become nodata in both outputs.
pub fn predict_map(
    forest: &Forest,
    features: &dyn FeatureSource,
    cropland: &LabelRaster,
    opts: &MapOptions,
) -> Result<MapOutput> {
    if forest.feature_kind != FeatureKind::Harm20 {
        return Err(Error::KindMismatch {
            expected: FeatureKind::Harm20.to_string(),
            got: forest.feature_kind.to_string(),
        });
    }
    let header = *features.header();
    if !header.aligned_with(&cropland.header) {
        return Err(misaligned(&header, &cropland.header));
    }
    if opts.tile_edge == 0 {
        return Err(Error::Config("tile_edge must be at least 1".into()));
    }
    let edge = opts.tile_edge;
    let tiles: Vec<(usize, usize)> = (0..header.n_rows)
        .step_by(edge)
        .flat_map(|r| (0..header.n_cols).step_by(edge).map(move |c| (r, c)))
        .collect();

    let done: Vec<Vec<(i32, f64)>> = tiles
        .par_iter()
        .map(|&(r0, c0)| {
            let r1 = (r0 + edge).min(header.n_rows);
            let c1 = (c0 + edge).min(header.n_cols);
            let mut out = Vec::with_capacity((r1 - r0) * (c1 - c0));
            for r in r0..r1 {
                for c in c0..c1 {
                    if !cropland.is_crop(cropland.get(r, c)) {
                        out.push((MAP_NODATA, CONFIDENCE_NODATA));
                        continue;
                    }
                    match features.cell_features(r, c)? {
                        Some(x) => {
                            let (maize, proba) = forest.classify_one(&x)?;
                            out.push((if maize { MAIZE_CODE } else { NON_MAIZE_CODE }, proba));
                        }
                        None => out.push((MAP_NODATA, CONFIDENCE_NODATA)),
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut classes = vec![MAP_NODATA; header.len()];
    let mut confidence = vec![CONFIDENCE_NODATA; header.len()];
    for (&(r0, c0), tile) in tiles.iter().zip(&done) {
        let width = (c0 + edge).min(header.n_cols) - c0;
        for (k, &(code, p)) in tile.iter().enumerate() {
            let idx = (r0 + k / width) * header.n_cols + c0 + k % width;
            classes[idx] = code;
            confidence[idx] = p;
        }
    }
    Ok(MapOutput {
        classes: LabelRaster::new(header, MAP_NODATA, classes, map_legend())?,
        confidence: FloatRaster {
            header,
            nodata: CONFIDENCE_NODATA,
            cells: confidence,
        },
    })
}

/// Agreement and area summary of a predicted map against a truth raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    /// Cells where both rasters hold data.
    pub n_compared: usize,
    pub accuracy: f64,
    /// `confusion[predicted][actual]`, index 1 = maize.
    pub confusion: [[u64; 2]; 2],
    pub predicted_maize_cells: u64,
    pub truth_maize_cells: u64,
    /// Area of one cell in square degrees.
    pub cell_area_deg2: f64,
    /// Areas use a spherical approximation scaled by the cosine of each
    /// row's center latitude.
    pub predicted_maize_km2: f64,
    pub truth_maize_km2: f64,
}

fn row_cell_km2(h: &GridHeader, row: usize) -> f64 {
    let (_, lat) = h.cell_center(row, 0);
    let side = h.cell_size * KM_PER_DEGREE;
    side * side * lat.to_radians().cos()
}

/// Cellwise comparison over the cells where neither raster is nodata.
pub fn map_report(
    predicted: &LabelRaster,
    truth: &LabelRaster,
    truth_maize_code: i32,
) -> Result<MapReport> {
    if !predicted.header.aligned_with(&truth.header) {
        return Err(misaligned(&predicted.header, &truth.header));
    }
    let h = &predicted.header;
    let mut confusion = [[0u64; 2]; 2];
    let (mut pred_cells, mut truth_cells) = (0u64, 0u64);
    let (mut pred_km2, mut truth_km2) = (0.0, 0.0);
    for r in 0..h.n_rows {
        let area = row_cell_km2(h, r);
        for c in 0..h.n_cols {
            let p = predicted.get(r, c);
            let t = truth.get(r, c);
            let p_maize = p == MAIZE_CODE;
            let t_maize = t == truth_maize_code;
            if p != predicted.nodata_code && p_maize {
                pred_cells += 1;
                pred_km2 += area;
            }
            if t != truth.nodata_code && t_maize {
                truth_cells += 1;
                truth_km2 += area;
            }
            if p != predicted.nodata_code && t != truth.nodata_code {
                confusion[p_maize as usize][t_maize as usize] += 1;
            }
        }
    }
    let n: u64 = confusion.iter().flatten().sum();
    Ok(MapReport {
        n_compared: n as usize,
        accuracy: if n == 0 {
            0.0
        } else {
            (confusion[0][0] + confusion[1][1]) as f64 / n as f64
        },
        confusion,
        predicted_maize_cells: pred_cells,
        truth_maize_cells: truth_cells,
        cell_area_deg2: h.cell_size * h.cell_size,
        predicted_maize_km2: pred_km2,
        truth_maize_km2: truth_km2,
    })
}

/// The same comparison expressed as run metrics over flattened cells.
pub fn flattened_metrics(
    predicted: &LabelRaster,
    truth: &LabelRaster,
    truth_maize_code: i32,
) -> Result<RunMetrics> {
    if !predicted.header.aligned_with(&truth.header) {
        return Err(misaligned(&predicted.header, &truth.header));
    }
    let mut pred = Vec::new();
    let mut actual = Vec::new();
    let mut names = Vec::new();
    for (&p, &t) in predicted.cells.iter().zip(&truth.cells) {
        if p == predicted.nodata_code || t == truth.nodata_code {
            continue;
        }
        pred.push(p == MAIZE_CODE);
        actual.push(t == truth_maize_code);
        names.push(truth.class_name(t).unwrap_or("unknown").to_string());
    }
    compute_metrics(&pred, &actual, &names)
}
