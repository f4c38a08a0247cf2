use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_to_string, write_string, IngestError};
use crate::geo::GeoPoint;

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Geographic raster with square pixels of `cell_deg` degrees.
///
/// `values` is row-major with row 0 the southernmost row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    /// Lower-left corner of the lower-left pixel.
    pub origin: GeoPoint,
    pub cell_deg: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    pub values: Vec<f64>,
    pub nodata: f64,
}

impl RasterGrid {
    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || !v.is_finite()
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> GeoPoint {
        GeoPoint {
            lat: self.origin.lat + (row as f64 + 0.5) * self.cell_deg,
            lon: self.origin.lon + (col as f64 + 0.5) * self.cell_deg,
        }
    }

    /// Valid (non-nodata) pixels as `(centre, value)`.
    pub fn valid_pixels(&self) -> impl Iterator<Item = (GeoPoint, f64)> + '_ {
        (0..self.n_rows).flat_map(move |row| {
            (0..self.n_cols).filter_map(move |col| {
                let v = self.value(col, row);
                (!self.is_nodata(v)).then(|| (self.pixel_center(col, row), v))
            })
        })
    }
}

pub fn parse_raster(path: impl AsRef<Path>) -> Result<RasterGrid, IngestError> {
    parse_raster_str(&read_to_string(path.as_ref())?)
}

pub fn parse_raster_str(text: &str) -> Result<RasterGrid, IngestError> {
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut centered = false;
    let mut cellsize = None;
    let mut nodata = None;

    let mut lines = text.lines().enumerate().peekable();
    while let Some((i, line)) = lines.peek() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let line_no = *i as u64 + 1;
        let raw = parts
            .next()
            .ok_or_else(|| IngestError::parse(line_no, key, "header key without value"))?;
        let num: f64 = raw
            .parse()
            .map_err(|_| IngestError::parse(line_no, key, format!("'{raw}' is not a number")))?;
        let count = |v: f64| -> Result<usize, IngestError> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(IngestError::parse(line_no, key, format!("{raw} is not a positive integer")))
            }
        };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => ncols = Some(count(num)?),
            "nrows" => nrows = Some(count(num)?),
            "xllcorner" => xll = Some(num),
            "yllcorner" => yll = Some(num),
            "xllcenter" => {
                xll = Some(num);
                centered = true;
            }
            "yllcenter" => {
                yll = Some(num);
                centered = true;
            }
            "cellsize" => cellsize = Some(num),
            "nodata_value" => nodata = Some(num),
            other => return Err(IngestError::parse(line_no, other, "unknown header key")),
        }
        lines.next();
    }

    let missing = |k: &str| IngestError::parse(1, k, "missing header key");
    let n_cols = ncols.ok_or_else(|| missing("ncols"))?;
    let n_rows = nrows.ok_or_else(|| missing("nrows"))?;
    let mut lon = xll.ok_or_else(|| missing("xllcorner"))?;
    let mut lat = yll.ok_or_else(|| missing("yllcorner"))?;
    let cell_deg = cellsize.ok_or_else(|| missing("cellsize"))?;
    if !(cell_deg.is_finite() && cell_deg > 0.0) {
        return Err(IngestError::parse(1, "cellsize", "cell size must be positive"));
    }
    if centered {
        lon -= cell_deg / 2.0;
        lat -= cell_deg / 2.0;
    }
    let origin = GeoPoint::new(lat, lon)
        .map_err(|e| IngestError::parse(1, "xllcorner", e.to_string()))?;
    let nodata = nodata.unwrap_or(DEFAULT_NODATA);

    let mut north_up = Vec::with_capacity(n_cols * n_rows);
    for (i, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| IngestError::parse(i as u64 + 1, "value", format!("'{tok}' is not a number")))?;
            north_up.push(v);
        }
    }
    if north_up.len() != n_cols * n_rows {
        return Err(IngestError::parse(
            text.lines().count() as u64,
            "value",
            format!("expected {} values ({n_cols}x{n_rows}), found {}", n_cols * n_rows, north_up.len()),
        ));
    }
    let values: Vec<f64> = north_up.chunks(n_cols).rev().flatten().copied().collect();
    Ok(RasterGrid {
        origin,
        cell_deg,
        n_cols,
        n_rows,
        values,
        nodata,
    })
}

pub fn raster_to_string(r: &RasterGrid) -> String {
    let mut out = format!(
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        r.n_cols, r.n_rows, r.origin.lon, r.origin.lat, r.cell_deg, r.nodata
    );
    for row in (0..r.n_rows).rev() {
        let line: Vec<String> = (0..r.n_cols).map(|c| r.value(c, row).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_raster(path: impl AsRef<Path>, raster: &RasterGrid) -> Result<(), IngestError> {
    write_string(path.as_ref(), &raster_to_string(raster))
}
