//! Input parsing, quality control and ground-truth labeling.

pub mod labels;
pub mod optical;
pub mod qc;
pub mod raster;
pub mod shots;

pub use labels::{attach_labels, month_filter, validate_months, LabeledShot, STUDY_MONTHS};
pub use optical::{parse_optical_series, write_optical_series, OpticalObservation, OpticalSeries};
pub use qc::{qc_filter, DropEntry, DropReason, QcConfig, QcOutcome};
pub use raster::{
    read_float_raster, read_label_raster, read_legend, write_float_raster, write_label_raster,
    write_legend, FloatRaster, GridHeader, LabelRaster, NON_CROP,
};
pub use shots::{parse_shot_records, write_shot_records, GediShot, ShotFormat, RH_LEN};
