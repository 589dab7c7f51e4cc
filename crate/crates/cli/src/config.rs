//! Run configuration: a TOML file plus command-line overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tallcrop::experiments::{validate_month_set, Regime, SplitConfig};
use tallcrop::features::{FeatureKind, HarmonicConfig};
use tallcrop::forest::ForestConfig;
use tallcrop::ingest::{QcConfig, STUDY_MONTHS};
use tallcrop::mapgen::MapOptions;
use tallcrop::synth::{default_benchmark, RegionSpec};
use tallcrop::Error;

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_months() -> Vec<u32> {
    STUDY_MONTHS.to_vec()
}

fn default_maize_class() -> String {
    "maize".into()
}

/// Input files of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionPaths {
    pub name: String,
    pub shots: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optical: Option<PathBuf>,
    pub labels: PathBuf,
    pub legend: PathBuf,
    /// Legend name of the maize class.
    #[serde(default = "default_maize_class")]
    pub maize_class: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub train_region: Option<String>,
    pub test_region: Option<String>,
    /// Pretrained source model for transfer regimes, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Fit on the region's own labels.
    Direct,
    /// Label the target region's shots with a lidar model from the source
    /// region, then fit an optical model on those labels.
    PseudoLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub region: String,
    #[serde(default = "default_kind")]
    pub kind: FeatureKind,
    #[serde(default = "default_mode")]
    pub mode: TrainMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_region: Option<String>,
    /// Output model path, relative to the output directory.
    pub model: PathBuf,
}

fn default_kind() -> FeatureKind {
    FeatureKind::Harm20
}

fn default_mode() -> TrainMode {
    TrainMode::Direct
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSource {
    /// Optical series file with one series per cell.
    Optical,
    /// Series generated per cell from the matching synthetic region spec.
    Synth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    /// Model path, relative to the output directory.
    pub model: PathBuf,
    pub region: String,
    pub source: MapSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optical: Option<PathBuf>,
    #[serde(default)]
    pub options: MapOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    /// Directory for generated files, relative to the config file.
    pub dir: PathBuf,
    #[serde(default = "default_benchmark")]
    pub regions: Vec<RegionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_months")]
    pub months: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
    #[serde(default)]
    pub qc: QcConfig,
    #[serde(default)]
    pub harmonics: HarmonicConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub regions: Vec<RegionPaths>,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSection>,
}

/// Flag values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub months: Option<Vec<u32>>,
    pub regime: Option<String>,
}

/// A loaded configuration and the directory its relative paths start from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(seed) = overrides.seed {
            config.master_seed = seed;
        }
        if let Some(w) = overrides.workers {
            config.workers = w;
        }
        if let Some(m) = &overrides.months {
            config.months = m.clone();
        }
        if let Some(r) = &overrides.regime {
            config.regime = Some(r.clone());
        }
        config.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Loaded { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    pub fn region(&self, name: &str) -> Result<&RegionPaths, Error> {
        self.config
            .regions
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Config(format!("no [[regions]] entry named '{name}'")))
    }
}

impl RunConfig {
    pub fn month_set(&self) -> BTreeSet<u32> {
        self.months.iter().copied().collect()
    }

    fn validate(&self) -> Result<(), Error> {
        validate_month_set(&self.month_set())?;
        self.harmonics.validate()?;
        if let Some(r) = &self.regime {
            if r != "all" {
                r.parse::<Regime>()?;
            }
        }
        let mut names = BTreeSet::new();
        for r in &self.regions {
            if !names.insert(r.name.as_str()) {
                return Err(Error::Config(format!(
                    "region '{}' is listed twice",
                    r.name
                )));
            }
        }
        if let Some(s) = &self.synth {
            for spec in &s.regions {
                spec.validate()?;
            }
        }
        Ok(())
    }

    /// Regimes selected by the `regime` entry; "all" selects every regime.
    pub fn regimes(&self) -> Result<Vec<Regime>, Error> {
        match self.regime.as_deref() {
            None => Err(Error::Config(
                "no regime given (config `regime` or --regime)".into(),
            )),
            Some("all") => Ok(Regime::ALL.to_vec()),
            Some(r) => Ok(vec![r.parse()?]),
        }
    }
}

pub fn parse_months(s: &str) -> Result<Vec<u32>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u32>()
                .map_err(|e| format!("bad month '{p}': {e}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, toml::de::Error> {
        toml::from_str(text)
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse("master_seed = 3").unwrap();
        assert_eq!(c.months, vec![7, 8, 9]);
        assert_eq!(c.split.n_runs, 11);
        assert_eq!(c.harmonics.omega, 1.5);
        assert_eq!(c.forest.n_trees, 100);
        assert_eq!(c.qc.max_rh100_m, 10.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse("master_seed = 3\nbogus = 1").is_err());
        assert!(parse("master_seed = 3\n[forest]\nn_tree = 5").is_err());
        assert!(parse("master_seed = 3\n[split]\ncell = 0.5").is_err());
        assert!(parse("master_seed = 3\n[qc]\nmax_rh = 5").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = parse(
            "master_seed = 3\nregime = \"gedi_local\"\n[[regions]]\nname = \"a\"\nshots = \"s.csv\"\nlabels = \"l.asc\"\nlegend = \"g.csv\"\n[synth]\ndir = \"data\"",
        )
        .unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(parse(&text).unwrap(), c);
        assert_eq!(c.synth.unwrap().regions.len(), 2);
    }

    #[test]
    fn months_flag() {
        assert_eq!(parse_months("7,8, 9").unwrap(), vec![7, 8, 9]);
        assert!(parse_months("7,x").is_err());
    }
}
