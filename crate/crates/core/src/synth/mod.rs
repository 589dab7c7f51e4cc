//! Synthetic multi-region datasets with known ground truth.
//!
//! Crop height alone drives the lidar curves, with the same generator in
//! every region. Optical series follow a seasonal greenness pulse whose
//! timing moves with a per-region phenology shift. Crops are laid out in
//! square field blocks on a label raster, and everything is a pure function
//! of the region seed.

mod optical;
mod rh;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use optical::{
    gen_observations, gen_optical_series, pulse_reflectance, OpticalModel, CLEAR_CLOUD_MAX,
};
pub use rh::{gen_rh_curve, RH_CAP_M};

use crate::error::{Error, Result};
use crate::ingest::{
    write_label_raster, write_legend, write_optical_series, write_shot_records, GediShot,
    GridHeader, LabelRaster, OpticalSeries, ShotFormat, NON_CROP,
};

/// Raster code of non-crop cells. Crops take codes 1, 2, ... in mix order.
pub const NON_CROP_CODE: i32 = 0;
pub const NODATA_CODE: i32 = -9999;
/// Growth factor applied to crop height in July, August and September.
pub const MONTH_GROWTH: [f64; 3] = [0.8, 1.0, 0.95];
const SPLIT_CELL_DEG: f64 = 0.5;

const STREAM_FIELD: u64 = 1;
const STREAM_SHOT: u64 = 2;
const STREAM_CELL: u64 = 3;
const STREAM_DEVELOPMENT: u64 = 4;

/// Independent generator for one (domain, index) pair under a seed.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 56) | index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropProfile {
    pub name: String,
    pub height_mean_m: f64,
    pub height_sd_m: f64,
    /// Seasonal peak as a fraction of the year.
    pub peak_t_mean: f64,
    pub peak_t_sd: f64,
    /// GCVI rise of the seasonal pulse above the bare-soil level.
    pub peak_gcvi: f64,
    pub is_tall: bool,
}

impl CropProfile {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("crop '{}': {what}", self.name)));
        if self.name.trim().is_empty() {
            return Err(Error::Config("crop name is empty".into()));
        }
        if !(self.height_mean_m >= 0.0 && self.height_mean_m.is_finite()) {
            return bad("height_mean_m must be finite and >= 0");
        }
        if !(self.height_sd_m >= 0.0 && self.height_sd_m.is_finite()) {
            return bad("height_sd_m must be finite and >= 0");
        }
        if !(self.peak_t_mean > 0.0 && self.peak_t_mean < 1.0) {
            return bad("peak_t_mean must lie in (0, 1)");
        }
        if !(self.peak_t_sd >= 0.0 && self.peak_t_sd.is_finite()) {
            return bad("peak_t_sd must be finite and >= 0");
        }
        if !(self.peak_gcvi >= 0.0 && self.peak_gcvi.is_finite()) {
            return bad("peak_gcvi must be finite and >= 0");
        }
        Ok(())
    }
}

/// Default tall and short crops.
pub fn default_crops() -> Vec<CropProfile> {
    vec![
        CropProfile {
            name: "maize".into(),
            height_mean_m: 2.4,
            height_sd_m: 0.45,
            peak_t_mean: 0.60,
            peak_t_sd: 0.015,
            peak_gcvi: 5.5,
            is_tall: true,
        },
        CropProfile {
            name: "soybean".into(),
            height_mean_m: 0.9,
            height_sd_m: 0.35,
            peak_t_mean: 0.68,
            peak_t_sd: 0.015,
            peak_gcvi: 4.5,
            is_tall: false,
        },
    ]
}

/// Profile used for shots that land on non-crop cells.
pub fn bare_profile() -> CropProfile {
    CropProfile {
        name: NON_CROP.into(),
        height_mean_m: 0.1,
        height_sd_m: 0.05,
        peak_t_mean: 0.5,
        peak_t_sd: 0.05,
        peak_gcvi: 1.0,
        is_tall: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropShare {
    /// A full profile, or the name of one of [`default_crops`].
    #[serde(deserialize_with = "crop_or_name")]
    pub crop: CropProfile,
    pub fraction: f64,
}

fn crop_or_name<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<CropProfile, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Spec {
        Name(String),
        Profile(CropProfile),
    }
    match Spec::deserialize(d)? {
        Spec::Profile(p) => Ok(p),
        Spec::Name(name) => default_crops()
            .into_iter()
            .find(|c| c.name == name)
            .ok_or_else(|| {
                serde::de::Error::custom(format!(
                    "unknown crop '{name}'; give a full profile or one of: maize, soybean"
                ))
            }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BBox {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl BBox {
    /// Number of 0.5 degree world-grid cells the box overlaps.
    pub fn split_cells(&self) -> usize {
        let span = |lo: f64, hi: f64| {
            let first = (lo / SPLIT_CELL_DEG).floor();
            let last = (hi / SPLIT_CELL_DEG).ceil() - 1.0;
            (last - first + 1.0).max(0.0) as usize
        };
        span(self.lon_min, self.lon_max) * span(self.lat_min, self.lat_max)
    }
}

fn default_non_crop() -> f64 {
    0.1
}
fn default_cell_size() -> f64 {
    0.002
}
fn default_field_block() -> usize {
    10
}
fn default_year() -> i32 {
    2019
}

/// Per-field crop development. Each field draws a standard normal stage `z`
/// (planting date, stress); advanced fields are taller and green up earlier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Development {
    /// Correlation between `z` and the height draw, in [0, 1].
    pub height_coupling: f64,
    /// Peak advance per unit of `z`, as a fraction of the year.
    pub peak_lag: f64,
}

impl Default for Development {
    fn default() -> Self {
        Development {
            height_coupling: 0.9,
            peak_lag: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub name: String,
    pub bbox: BBox,
    pub mix: Vec<CropShare>,
    /// Share of field blocks that are not cropland.
    #[serde(default = "default_non_crop")]
    pub non_crop_fraction: f64,
    /// Offset added to every crop's seasonal peak.
    pub phenology_shift: f64,
    pub n_shots: usize,
    pub seed: u64,
    #[serde(default = "default_cell_size")]
    pub cell_size_deg: f64,
    /// Edge of a square same-crop field, in raster cells.
    #[serde(default = "default_field_block")]
    pub field_block: usize,
    #[serde(default = "default_year")]
    pub year: i32,
    #[serde(default)]
    pub optical: OpticalModel,
    #[serde(default)]
    pub development: Development,
}

impl RegionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::Config(format!(
                "region name '{}' must be non-empty ASCII letters, digits, '_' or '-'",
                self.name
            )));
        }
        if self.mix.is_empty() {
            return Err(Error::Config(format!(
                "region '{}' has an empty crop mix",
                self.name
            )));
        }
        let mut names = std::collections::BTreeSet::new();
        for share in &self.mix {
            share.crop.validate()?;
            if crate::ingest::raster::is_non_crop_name(&share.crop.name) {
                return Err(Error::Config(format!("'{}' is reserved", share.crop.name)));
            }
            if !names.insert(share.crop.name.to_ascii_lowercase()) {
                return Err(Error::Config(format!(
                    "crop '{}' listed twice",
                    share.crop.name
                )));
            }
            if !(share.fraction >= 0.0 && share.fraction.is_finite()) {
                return Err(Error::Config(format!(
                    "crop '{}' has invalid fraction {}",
                    share.crop.name, share.fraction
                )));
            }
        }
        let total: f64 = self.mix.iter().map(|s| s.fraction).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "region '{}' mix fractions sum to {total}, expected 1",
                self.name
            )));
        }
        if !(0.0..1.0).contains(&self.non_crop_fraction) {
            return Err(Error::Config(format!(
                "non_crop_fraction must lie in [0, 1), got {}",
                self.non_crop_fraction
            )));
        }
        let b = &self.bbox;
        if !(b.lon_min < b.lon_max && b.lat_min < b.lat_max)
            || !(-180.0..=180.0).contains(&b.lon_min)
            || !(-180.0..=180.0).contains(&b.lon_max)
            || !(-90.0..=90.0).contains(&b.lat_min)
            || !(-90.0..=90.0).contains(&b.lat_max)
        {
            return Err(Error::Config(format!(
                "region '{}' has an invalid bbox",
                self.name
            )));
        }
        if b.split_cells() < 2 {
            return Err(Error::Config(format!(
                "region '{}' bbox must span at least two 0.5 degree cells",
                self.name
            )));
        }
        if !self.phenology_shift.is_finite() {
            return Err(Error::Config("phenology_shift must be finite".into()));
        }
        if !(self.cell_size_deg > 0.0 && self.cell_size_deg.is_finite()) {
            return Err(Error::Config(format!(
                "cell_size_deg must be positive, got {}",
                self.cell_size_deg
            )));
        }
        if self.field_block == 0 {
            return Err(Error::Config("field_block must be at least 1".into()));
        }
        NaiveDate::from_ymd_opt(self.year, 7, 1)
            .ok_or_else(|| Error::Config(format!("invalid year {}", self.year)))?;
        self.optical.validate().map_err(Error::Config)?;
        let d = &self.development;
        if !(0.0..=1.0).contains(&d.height_coupling) || !d.peak_lag.is_finite() {
            return Err(Error::Config(
                "development.height_coupling must lie in [0, 1] and peak_lag must be finite".into(),
            ));
        }
        self.grid_header().map(|_| ())
    }

    pub fn grid_header(&self) -> Result<GridHeader> {
        let cols = ((self.bbox.lon_max - self.bbox.lon_min) / self.cell_size_deg).round();
        let rows = ((self.bbox.lat_max - self.bbox.lat_min) / self.cell_size_deg).round();
        if cols < 1.0 || rows < 1.0 || cols * rows > 1e9 {
            return Err(Error::Config(format!(
                "region '{}' grid of {cols} x {rows} cells is out of range",
                self.name
            )));
        }
        GridHeader::new(
            cols as usize,
            rows as usize,
            self.bbox.lon_min,
            self.bbox.lat_min,
            self.cell_size_deg,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn legend(&self) -> BTreeMap<i32, String> {
        let mut legend = BTreeMap::new();
        legend.insert(NON_CROP_CODE, NON_CROP.to_string());
        for (i, share) in self.mix.iter().enumerate() {
            legend.insert(i as i32 + 1, share.crop.name.clone());
        }
        legend
    }

    /// Class code of a field block.
    fn field_code(&self, block: u64) -> i32 {
        let u: f64 = substream(self.seed, STREAM_FIELD, block).random();
        if u < self.non_crop_fraction {
            return NON_CROP_CODE;
        }
        let v = (u - self.non_crop_fraction) / (1.0 - self.non_crop_fraction);
        let mut acc = 0.0;
        for (i, share) in self.mix.iter().enumerate() {
            acc += share.fraction;
            if v < acc {
                return i as i32 + 1;
            }
        }
        // Rounding in the cumulative sum: take the last crop with a share.
        self.mix.iter().rposition(|s| s.fraction > 0.0).unwrap_or(0) as i32 + 1
    }

    /// Profile behind a raster code.
    pub fn profile_for(&self, code: i32) -> CropProfile {
        if code >= 1 && (code as usize) <= self.mix.len() {
            self.mix[code as usize - 1].crop.clone()
        } else {
            bare_profile()
        }
    }

    /// Development stage of the field holding cell (row, col).
    fn development_stage(&self, header: &GridHeader, row: usize, col: usize) -> f64 {
        let block_cols = header.n_cols.div_ceil(self.field_block);
        let block = (row / self.field_block) * block_cols + col / self.field_block;
        substream(self.seed, STREAM_DEVELOPMENT, block as u64).sample(StandardNormal)
    }

    fn profile_ref<'a>(&'a self, code: i32, bare: &'a CropProfile) -> &'a CropProfile {
        if code >= 1 && (code as usize) <= self.mix.len() {
            &self.mix[code as usize - 1].crop
        } else {
            bare
        }
    }
}

/// The default two-region benchmark: identical crops, the second region's
/// phenology shifted later by 0.12 of a year.
pub fn default_benchmark() -> Vec<RegionSpec> {
    let mix = |crops: Vec<CropProfile>| {
        crops
            .into_iter()
            .map(|crop| CropShare {
                crop,
                fraction: 0.5,
            })
            .collect::<Vec<_>>()
    };
    vec![
        RegionSpec {
            name: "alpha".into(),
            bbox: BBox {
                lon_min: 100.0,
                lon_max: 102.0,
                lat_min: 44.0,
                lat_max: 46.0,
            },
            mix: mix(default_crops()),
            non_crop_fraction: default_non_crop(),
            phenology_shift: 0.0,
            n_shots: 3000,
            seed: 11,
            cell_size_deg: default_cell_size(),
            field_block: default_field_block(),
            year: default_year(),
            optical: OpticalModel::default(),
            development: Development::default(),
        },
        RegionSpec {
            name: "beta".into(),
            bbox: BBox {
                lon_min: -94.0,
                lon_max: -92.0,
                lat_min: 41.0,
                lat_max: 43.0,
            },
            mix: mix(default_crops()),
            non_crop_fraction: default_non_crop(),
            phenology_shift: 0.12,
            n_shots: 3000,
            seed: 22,
            cell_size_deg: default_cell_size(),
            field_block: default_field_block(),
            year: default_year(),
            optical: OpticalModel::default(),
            development: Development::default(),
        },
    ]
}

/// Generated shots, optical series at the shot locations, and the truth raster.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRegion {
    pub spec: RegionSpec,
    pub shots: Vec<GediShot>,
    pub optical: Vec<OpticalSeries>,
    pub truth: LabelRaster,
}

fn truth_raster(spec: &RegionSpec) -> Result<LabelRaster> {
    let header = spec.grid_header()?;
    let fb = spec.field_block;
    let block_cols = header.n_cols.div_ceil(fb);
    let block_rows = header.n_rows.div_ceil(fb);
    let codes: Vec<i32> = (0..block_rows * block_cols)
        .map(|b| spec.field_code(b as u64))
        .collect();
    let mut cells = Vec::with_capacity(header.len());
    for r in 0..header.n_rows {
        for c in 0..header.n_cols {
            cells.push(codes[(r / fb) * block_cols + c / fb]);
        }
    }
    LabelRaster::new(header, NODATA_CODE, cells, spec.legend())
}

/// Optical series of raster cell (row, col), reported at (lon, lat).
///
/// The series depends only on the cell, so shots sharing a cell see the same
/// observations as a wall-to-wall map does.
pub fn cell_series(
    spec: &RegionSpec,
    truth: &LabelRaster,
    row: usize,
    col: usize,
    location_id: &str,
    lon: f64,
    lat: f64,
) -> OpticalSeries {
    let bare = bare_profile();
    let profile = spec.profile_ref(truth.get(row, col), &bare);
    let index = (row * truth.header.n_cols + col) as u64;
    let mut rng = substream(spec.seed, STREAM_CELL, index);
    let z = spec.development_stage(&truth.header, row, col);
    let shift = spec.phenology_shift - spec.development.peak_lag * z;
    gen_optical_series(
        location_id,
        lon,
        lat,
        profile,
        shift,
        &spec.optical,
        &mut rng,
    )
}

fn gen_shot(
    spec: &RegionSpec,
    truth: &LabelRaster,
    index: usize,
    start: NaiveDate,
) -> (GediShot, (usize, usize)) {
    let mut rng = substream(spec.seed, STREAM_SHOT, index as u64);
    let h = &truth.header;
    let width = h.n_cols as f64 * h.cell_size;
    let height = h.n_rows as f64 * h.cell_size;
    let (lon, lat, cell) = loop {
        let lon = h.xll + rng.random::<f64>() * width;
        let lat = h.yll + rng.random::<f64>() * height;
        if let Some(cell) = h.cell_of(lon, lat) {
            break (lon, lat, cell);
        }
    };
    let date = start + Days::new(rng.random_range(0..92));
    let month = date.month();
    let bare = bare_profile();
    let profile = spec.profile_ref(truth.get(cell.0, cell.1), &bare);
    let z = spec.development_stage(h, cell.0, cell.1);
    let rho = spec.development.height_coupling;
    let draw = rho * z + (1.0 - rho * rho).sqrt() * rng.sample::<f64, _>(StandardNormal);
    let height_m = (profile.height_mean_m + profile.height_sd_m * draw).max(0.0)
        * MONTH_GROWTH[(month - 7) as usize];
    let rh = gen_rh_curve(height_m, &mut rng);
    let shot = GediShot {
        shot_id: format!("{}-{index:06}", spec.name),
        orbit_id: format!("O{:04}", rng.random_range(0..400u32)),
        lon,
        lat,
        date,
        quality_flag: 1,
        degrade_flag: 0,
        rh,
    };
    (shot, cell)
}

/// Generate a region. Output is fully determined by `spec`.
pub fn gen_region(spec: &RegionSpec) -> Result<SynthRegion> {
    spec.validate()?;
    let truth = truth_raster(spec)?;
    let start = NaiveDate::from_ymd_opt(spec.year, 7, 1).expect("validated year");
    let mut shots = Vec::with_capacity(spec.n_shots);
    let mut optical = Vec::with_capacity(spec.n_shots);
    for i in 0..spec.n_shots {
        let (shot, (row, col)) = gen_shot(spec, &truth, i, start);
        optical.push(cell_series(
            spec,
            &truth,
            row,
            col,
            &shot.shot_id,
            shot.lon,
            shot.lat,
        ));
        shots.push(shot);
    }
    Ok(SynthRegion {
        spec: spec.clone(),
        shots,
        optical,
        truth,
    })
}

/// Paths of the files written for one region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionFiles {
    pub shots: PathBuf,
    pub optical: PathBuf,
    pub labels: PathBuf,
    pub legend: PathBuf,
}

impl RegionFiles {
    pub fn in_dir(dir: &Path, name: &str) -> Self {
        RegionFiles {
            shots: dir.join(format!("{name}_shots.csv")),
            optical: dir.join(format!("{name}_optical.ndjson")),
            labels: dir.join(format!("{name}_labels.asc")),
            legend: dir.join(format!("{name}_legend.csv")),
        }
    }
}

/// Write a region in the ingest formats: shots CSV, optical NDJSON, label
/// grid and legend.
pub fn write_region(dir: &Path, region: &SynthRegion) -> Result<RegionFiles> {
    let files = RegionFiles::in_dir(dir, &region.spec.name);
    write_shot_records(
        BufWriter::new(File::create(&files.shots)?),
        &region.shots,
        ShotFormat::Csv,
    )?;
    write_optical_series(
        BufWriter::new(File::create(&files.optical)?),
        &region.optical,
    )?;
    write_label_raster(BufWriter::new(File::create(&files.labels)?), &region.truth)?;
    write_legend(
        BufWriter::new(File::create(&files.legend)?),
        &region.truth.legend,
    )?;
    Ok(files)
}
