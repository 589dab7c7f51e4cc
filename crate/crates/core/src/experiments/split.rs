use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Train,
    Test,
}

/// Key of the world-grid cell containing a point.
pub fn cell_key(lon: f64, lat: f64, cell_size: f64) -> (i64, i64) {
    (
        (lon / cell_size).floor() as i64,
        (lat / cell_size).floor() as i64,
    )
}

/// Assignment of populated grid cells to the training or test side.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSplit {
    pub cell_size_deg: f64,
    pub train_frac: f64,
    pub seed: u64,
    pub assignment: BTreeMap<(i64, i64), Side>,
}

impl GridSplit {
    /// Side of the cell holding the point, if that cell was populated.
    pub fn side_of(&self, lon: f64, lat: f64) -> Option<Side> {
        self.assignment
            .get(&cell_key(lon, lat, self.cell_size_deg))
            .copied()
    }

    pub fn n_train_cells(&self) -> usize {
        self.assignment
            .values()
            .filter(|&&s| s == Side::Train)
            .count()
    }

    /// Indices of points on each side; points in unknown cells are skipped.
    pub fn partition(&self, points: &[(f64, f64)]) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &(lon, lat)) in points.iter().enumerate() {
            match self.side_of(lon, lat) {
                Some(Side::Train) => train.push(i),
                Some(Side::Test) => test.push(i),
                None => {}
            }
        }
        (train, test)
    }
}

/// Number of training cells for `n` populated cells.
pub fn train_cell_count(n: usize, train_frac: f64) -> usize {
    ((train_frac * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Assign whole grid cells to train or test with a seeded shuffle.
pub fn grid_split(
    points: &[(f64, f64)],
    cell_size: f64,
    train_frac: f64,
    seed: u64,
) -> Result<GridSplit> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::Config(format!(
            "cell size must be positive, got {cell_size}"
        )));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!(
            "train_frac must lie in (0, 1), got {train_frac}"
        )));
    }
    if let Some(p) = points
        .iter()
        .find(|p| !(p.0.is_finite() && p.1.is_finite()))
    {
        return Err(Error::Validation(format!("non-finite point {p:?}")));
    }
    let cells: BTreeSet<(i64, i64)> = points
        .iter()
        .map(|&(lon, lat)| cell_key(lon, lat, cell_size))
        .collect();
    if cells.len() < 2 {
        return Err(Error::Split(format!(
            "need at least 2 populated cells, found {}",
            cells.len()
        )));
    }
    let mut order: Vec<(i64, i64)> = cells.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = train_cell_count(order.len(), train_frac);
    let assignment = order
        .into_iter()
        .enumerate()
        .map(|(i, key)| (key, if i < n_train { Side::Train } else { Side::Test }))
        .collect();
    Ok(GridSplit {
        cell_size_deg: cell_size,
        train_frac,
        seed,
        assignment,
    })
}
