//! Georeferenced grids in ESRI ASCII format.
//!
//! Grids are north-up and row-major: row 0 is the northern edge. A point
//! belongs to the cell whose west/north edges are at or before it (floor
//! convention), so a point on a shared edge falls in the cell to the east or
//! to the south.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Legend name marking cells that are not cropland.
pub const NON_CROP: &str = "non-crop";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub n_cols: usize,
    pub n_rows: usize,
    /// Longitude of the western edge.
    pub xll: f64,
    /// Latitude of the southern edge.
    pub yll: f64,
    /// Degrees per cell.
    pub cell_size: f64,
}

impl GridHeader {
    pub fn new(n_cols: usize, n_rows: usize, xll: f64, yll: f64, cell_size: f64) -> Result<Self> {
        let h = GridHeader {
            n_cols,
            n_rows,
            xll,
            yll,
            cell_size,
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        if self.n_cols == 0 || self.n_rows == 0 {
            return Err(Error::Validation(
                "grid must have at least one row and column".into(),
            ));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::Validation(format!(
                "cell size must be positive, got {}",
                self.cell_size
            )));
        }
        Ok(())
    }

    pub fn origin_lon(&self) -> f64 {
        self.xll
    }

    /// Latitude of the northern edge.
    pub fn origin_lat(&self) -> f64 {
        self.yll + self.n_rows as f64 * self.cell_size
    }

    pub fn len(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn col_west(&self, col: i64) -> f64 {
        self.xll + col as f64 * self.cell_size
    }

    fn row_north(&self, row: i64) -> f64 {
        self.origin_lat() - row as f64 * self.cell_size
    }

    /// Row and column of the cell containing the point, if it lies inside the grid.
    pub fn cell_of(&self, lon: f64, lat: f64) -> Option<(usize, usize)> {
        if !lon.is_finite() || !lat.is_finite() {
            return None;
        }
        let mut col = ((lon - self.xll) / self.cell_size).floor() as i64;
        // Correct for rounding in the division so that the edge tests below
        // are authoritative.
        if lon < self.col_west(col) {
            col -= 1;
        } else if lon >= self.col_west(col + 1) {
            col += 1;
        }
        let mut row = ((self.origin_lat() - lat) / self.cell_size).floor() as i64;
        if lat > self.row_north(row) {
            row -= 1;
        } else if lat <= self.row_north(row + 1) {
            row += 1;
        }
        if col < 0 || row < 0 || col >= self.n_cols as i64 || row >= self.n_rows as i64 {
            return None;
        }
        Some((row as usize, col as usize))
    }

    /// Center coordinates of a cell.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.xll + (col as f64 + 0.5) * self.cell_size,
            self.origin_lat() - (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Field-for-field equality, used to check grid alignment.
    pub fn aligned_with(&self, other: &GridHeader) -> bool {
        self == other
    }

    pub fn describe(&self) -> String {
        format!(
            "ncols={} nrows={} xll={} yll={} cellsize={}",
            self.n_cols, self.n_rows, self.xll, self.yll, self.cell_size
        )
    }
}

/// Integer class grid with a code legend.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRaster {
    pub header: GridHeader,
    pub nodata_code: i32,
    pub cells: Vec<i32>,
    pub legend: BTreeMap<i32, String>,
}

impl LabelRaster {
    pub fn new(
        header: GridHeader,
        nodata_code: i32,
        cells: Vec<i32>,
        legend: BTreeMap<i32, String>,
    ) -> Result<Self> {
        let r = LabelRaster {
            header,
            nodata_code,
            cells,
            legend,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        self.header.validate()?;
        if self.cells.len() != self.header.len() {
            return Err(Error::Validation(format!(
                "raster has {} cells, header implies {}",
                self.cells.len(),
                self.header.len()
            )));
        }
        if let Some(code) = self
            .cells
            .iter()
            .find(|&&c| c != self.nodata_code && !self.legend.contains_key(&c))
        {
            return Err(Error::Validation(format!(
                "class code {code} missing from legend"
            )));
        }
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> i32 {
        self.cells[row * self.header.n_cols + col]
    }

    /// Class code of the cell containing the point; nodata outside the extent.
    pub fn sample_label(&self, lon: f64, lat: f64) -> i32 {
        match self.header.cell_of(lon, lat) {
            Some((r, c)) => self.get(r, c),
            None => self.nodata_code,
        }
    }

    pub fn code_for(&self, name: &str) -> Option<i32> {
        self.legend
            .iter()
            .find(|(_, n)| n.eq_ignore_ascii_case(name))
            .map(|(&c, _)| c)
    }

    pub fn class_name(&self, code: i32) -> Option<&str> {
        self.legend.get(&code).map(String::as_str)
    }

    /// True for codes holding a crop class (not nodata, not non-crop).
    pub fn is_crop(&self, code: i32) -> bool {
        code != self.nodata_code
            && self
                .legend
                .get(&code)
                .is_some_and(|name| !is_non_crop_name(name))
    }
}

pub(crate) fn is_non_crop_name(name: &str) -> bool {
    let norm: String = name
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    norm == "noncrop"
}

/// Floating-point grid, used for confidence output.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatRaster {
    pub header: GridHeader,
    pub nodata: f64,
    pub cells: Vec<f64>,
}

struct AsciiGrid {
    header: GridHeader,
    nodata: String,
    values: Vec<String>,
}

fn read_ascii_grid<R: Read>(reader: R) -> Result<AsciiGrid> {
    let mut lines = BufReader::new(reader).lines();
    let mut keys: BTreeMap<String, String> = BTreeMap::new();
    let mut values: Vec<String> = Vec::new();
    let mut line_no = 0u64;
    let perr = |line: u64, field: &str, message: String| Error::Parse {
        line,
        field: field.to_string(),
        message,
    };

    // Header: keyword/value pairs until the first line starting with a number.
    for line in lines.by_ref() {
        line_no += 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let first = trimmed.split_whitespace().next().unwrap_or("");
        if first
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic())
        {
            let mut it = trimmed.split_whitespace();
            let key = it.next().unwrap_or("").to_ascii_lowercase();
            let val = it
                .next()
                .ok_or_else(|| perr(line_no, &key, "missing value".into()))?;
            keys.insert(key, val.to_string());
        } else {
            values.extend(trimmed.split_whitespace().map(String::from));
            break;
        }
    }
    for line in lines {
        let line = line?;
        values.extend(line.split_whitespace().map(String::from));
    }

    let need = |k: &str| -> Result<&String> {
        keys.get(k)
            .ok_or_else(|| perr(0, k, "missing header keyword".into()))
    };
    let uint = |k: &str| -> Result<usize> {
        let v = need(k)?;
        v.parse()
            .map_err(|_| perr(0, k, format!("invalid integer `{v}`")))
    };
    let float = |k: &str| -> Result<f64> {
        let v = keys
            .get(k)
            .ok_or_else(|| perr(0, k, "missing header keyword".into()))?;
        v.parse()
            .map_err(|_| perr(0, k, format!("invalid number `{v}`")))
    };
    let n_cols = uint("ncols")?;
    let n_rows = uint("nrows")?;
    let cell_size = float("cellsize")?;
    let xll = if keys.contains_key("xllcorner") {
        float("xllcorner")?
    } else {
        float("xllcenter")? - cell_size / 2.0
    };
    let yll = if keys.contains_key("yllcorner") {
        float("yllcorner")?
    } else {
        float("yllcenter")? - cell_size / 2.0
    };
    let nodata = keys
        .get("nodata_value")
        .cloned()
        .unwrap_or_else(|| "-9999".to_string());
    let header = GridHeader::new(n_cols, n_rows, xll, yll, cell_size)?;
    if values.len() != header.len() {
        return Err(Error::Validation(format!(
            "grid body has {} values, header implies {}",
            values.len(),
            header.len()
        )));
    }
    Ok(AsciiGrid {
        header,
        nodata,
        values,
    })
}

fn write_header<W: Write>(w: &mut W, h: &GridHeader, nodata: &str) -> std::io::Result<()> {
    writeln!(w, "ncols {}", h.n_cols)?;
    writeln!(w, "nrows {}", h.n_rows)?;
    writeln!(w, "xllcorner {}", h.xll)?;
    writeln!(w, "yllcorner {}", h.yll)?;
    writeln!(w, "cellsize {}", h.cell_size)?;
    writeln!(w, "NODATA_value {}", nodata)
}

/// Read an integer ASCII grid plus its `code,name` legend.
pub fn read_label_raster<R: Read, L: Read>(grid: R, legend: L) -> Result<LabelRaster> {
    let g = read_ascii_grid(grid)?;
    let nodata_code: i32 = g.nodata.parse().map_err(|_| Error::Parse {
        line: 0,
        field: "NODATA_value".into(),
        message: format!("invalid integer `{}`", g.nodata),
    })?;
    let cells = g
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.parse::<i32>().map_err(|_| Error::Parse {
                line: 0,
                field: format!("cell {i}"),
                message: format!("invalid class code `{v}`"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabelRaster::new(g.header, nodata_code, cells, read_legend(legend)?)
}

pub fn read_float_raster<R: Read>(grid: R) -> Result<FloatRaster> {
    let g = read_ascii_grid(grid)?;
    let nodata: f64 = g.nodata.parse().map_err(|_| Error::Parse {
        line: 0,
        field: "NODATA_value".into(),
        message: format!("invalid number `{}`", g.nodata),
    })?;
    let cells = g
        .values
        .iter()
        .map(|v| {
            v.parse::<f64>().map_err(|_| Error::Parse {
                line: 0,
                field: "cell".into(),
                message: format!("invalid number `{v}`"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FloatRaster {
        header: g.header,
        nodata,
        cells,
    })
}

/// Parse `code,name` lines. A leading `code,name` header line is skipped.
pub fn read_legend<R: Read>(reader: R) -> Result<BTreeMap<i32, String>> {
    let mut legend = BTreeMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (code, name) = trimmed.split_once(',').ok_or_else(|| Error::Parse {
            line: i as u64 + 1,
            field: "legend".into(),
            message: format!("expected `code,name`, got `{trimmed}`"),
        })?;
        if i == 0 && code.trim().eq_ignore_ascii_case("code") {
            continue;
        }
        let code: i32 = code.trim().parse().map_err(|_| Error::Parse {
            line: i as u64 + 1,
            field: "code".into(),
            message: format!("invalid class code `{code}`"),
        })?;
        legend.insert(code, name.trim().to_string());
    }
    Ok(legend)
}

pub fn write_legend<W: Write>(mut w: W, legend: &BTreeMap<i32, String>) -> Result<()> {
    for (code, name) in legend {
        writeln!(w, "{code},{name}")?;
    }
    Ok(())
}

pub fn write_label_raster<W: Write>(writer: W, raster: &LabelRaster) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    write_header(&mut w, &raster.header, &raster.nodata_code.to_string())?;
    let mut line = String::new();
    for row in raster.cells.chunks(raster.header.n_cols) {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&v.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_float_raster<W: Write>(writer: W, raster: &FloatRaster) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    write_header(&mut w, &raster.header, &raster.nodata.to_string())?;
    let mut line = String::new();
    for row in raster.cells.chunks(raster.header.n_cols) {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&v.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}
