//! Local metric projection, the uniform analysis grid, and point/segment to
//! cell assignment.
//!
//! All planar work happens in a local equirectangular frame:
//!
//! ```text
//! x = R (lon - lon0) pi/180 cos(lat0 pi/180)
//! y = R (lat - lat0) pi/180,        R = 6 371 000 m
//! ```
//!
//! A grid is anchored at its south-west corner and its projection origin is
//! the centre of the grid extent, so the five serialized fields
//! `{origin_lat, origin_lon, cell_size_m, n_cols, n_rows}` determine the
//! whole `GridSpec`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const DEFAULT_CELL_SIZE_M: f64 = 1500.0;

// Counts within this relative slack of an integer are not rounded up.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate lat={lat} lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("bounding box has zero area or is not ordered south-west to north-east")]
    DegenerateBBox,
    #[error("cell size must be positive and finite, got {0}")]
    InvalidCellSize(f64),
    #[error("cell ({col}, {row}) is outside the {n_cols}x{n_rows} grid")]
    CellOutOfBounds {
        col: usize,
        row: usize,
        n_cols: usize,
        n_rows: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(lat.is_finite() && lon.is_finite())
            || !(-90.0..=90.0).contains(&lat)
            || !(-180.0..=180.0).contains(&lon)
        {
            return Err(GeoError::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
}

impl ProjectedPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &ProjectedPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

pub fn project(p: GeoPoint, origin: GeoPoint) -> ProjectedPoint {
    let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    ProjectedPoint {
        x: k * (p.lon - origin.lon) * origin.lat.to_radians().cos(),
        y: k * (p.lat - origin.lat),
    }
}

pub fn unproject(p: ProjectedPoint, origin: GeoPoint) -> GeoPoint {
    let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    GeoPoint {
        lat: origin.lat + p.y / k,
        lon: origin.lon + p.x / (k * origin.lat.to_radians().cos()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub col: usize,
    pub row: usize,
}

impl CellId {
    pub fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "GridSpecRecord", into = "GridSpecRecord")]
pub struct GridSpec {
    /// South-west corner in the projected frame.
    pub origin: ProjectedPoint,
    pub cell_size_m: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    pub projection_origin: GeoPoint,
    /// South-west corner in geographic coordinates.
    pub anchor: GeoPoint,
}

#[derive(Serialize, Deserialize)]
struct GridSpecRecord {
    origin_lat: f64,
    origin_lon: f64,
    cell_size_m: f64,
    n_cols: usize,
    n_rows: usize,
}

impl From<GridSpecRecord> for GridSpec {
    fn from(r: GridSpecRecord) -> Self {
        GridSpec::anchored(
            GeoPoint {
                lat: r.origin_lat,
                lon: r.origin_lon,
            },
            r.cell_size_m,
            r.n_cols,
            r.n_rows,
        )
    }
}

impl From<GridSpec> for GridSpecRecord {
    fn from(g: GridSpec) -> Self {
        GridSpecRecord {
            origin_lat: g.anchor.lat,
            origin_lon: g.anchor.lon,
            cell_size_m: g.cell_size_m,
            n_cols: g.n_cols,
            n_rows: g.n_rows,
        }
    }
}

fn ceil_count(extent: f64, cell: f64) -> usize {
    let ratio = extent / cell;
    ((ratio - CEIL_SLACK * ratio.max(1.0)).ceil() as usize).max(1)
}

/// Builds the grid covering `[bbox_min, bbox_max]` with square cells.
pub fn make_grid(bbox_min: GeoPoint, bbox_max: GeoPoint, cell_size_m: f64) -> Result<GridSpec, GeoError> {
    if !(cell_size_m.is_finite() && cell_size_m > 0.0) {
        return Err(GeoError::InvalidCellSize(cell_size_m));
    }
    if bbox_max.lat <= bbox_min.lat || bbox_max.lon <= bbox_min.lon {
        return Err(GeoError::DegenerateBBox);
    }
    let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    let height = k * (bbox_max.lat - bbox_min.lat);
    let n_rows = ceil_count(height, cell_size_m);
    let center_lat = bbox_min.lat + (n_rows as f64 * cell_size_m / 2.0) / k;
    let width = k * (bbox_max.lon - bbox_min.lon) * center_lat.to_radians().cos();
    if !(width > 0.0 && height > 0.0) {
        return Err(GeoError::DegenerateBBox);
    }
    let n_cols = ceil_count(width, cell_size_m);
    Ok(GridSpec::anchored(bbox_min, cell_size_m, n_cols, n_rows))
}

impl GridSpec {
    /// Grid with its south-west corner at `anchor`, projected about the extent centre.
    pub fn anchored(anchor: GeoPoint, cell_size_m: f64, n_cols: usize, n_rows: usize) -> Self {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let lat0 = anchor.lat + (n_rows as f64 * cell_size_m / 2.0) / k;
        let lon0 = anchor.lon + (n_cols as f64 * cell_size_m / 2.0) / (k * lat0.to_radians().cos());
        let projection_origin = GeoPoint { lat: lat0, lon: lon0 };
        GridSpec {
            origin: project(anchor, projection_origin),
            cell_size_m,
            n_cols,
            n_rows,
            projection_origin,
            anchor,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn contains(&self, c: CellId) -> bool {
        c.col < self.n_cols && c.row < self.n_rows
    }

    pub fn check(&self, c: CellId) -> Result<(), GeoError> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(GeoError::CellOutOfBounds {
                col: c.col,
                row: c.row,
                n_cols: self.n_cols,
                n_rows: self.n_rows,
            })
        }
    }

    pub fn project(&self, p: GeoPoint) -> ProjectedPoint {
        project(p, self.projection_origin)
    }

    pub fn unproject(&self, p: ProjectedPoint) -> GeoPoint {
        unproject(p, self.projection_origin)
    }

    /// Row-major iteration, row 0 (south) first.
    pub fn cells(&self) -> impl Iterator<Item = CellId> + '_ {
        (0..self.n_rows).flat_map(move |row| (0..self.n_cols).map(move |col| CellId { col, row }))
    }

    /// `[min_x, min_y, max_x, max_y]` of the cell in the projected frame.
    pub fn cell_bounds(&self, c: CellId) -> [f64; 4] {
        let x0 = self.origin.x + c.col as f64 * self.cell_size_m;
        let y0 = self.origin.y + c.row as f64 * self.cell_size_m;
        [x0, y0, x0 + self.cell_size_m, y0 + self.cell_size_m]
    }

    pub fn cell_center(&self, c: CellId) -> ProjectedPoint {
        ProjectedPoint {
            x: self.origin.x + (c.col as f64 + 0.5) * self.cell_size_m,
            y: self.origin.y + (c.row as f64 + 0.5) * self.cell_size_m,
        }
    }

    /// Projected extent `[min_x, min_y, max_x, max_y]` of the whole grid.
    pub fn extent(&self) -> [f64; 4] {
        [
            self.origin.x,
            self.origin.y,
            self.origin.x + self.n_cols as f64 * self.cell_size_m,
            self.origin.y + self.n_rows as f64 * self.cell_size_m,
        ]
    }

    pub fn locate(&self, p: GeoPoint) -> Option<CellId> {
        self.locate_projected(self.project(p))
    }

    /// Half-open cells: `[min, max)` on both axes.
    pub fn locate_projected(&self, p: ProjectedPoint) -> Option<CellId> {
        let fc = ((p.x - self.origin.x) / self.cell_size_m).floor();
        let fr = ((p.y - self.origin.y) / self.cell_size_m).floor();
        if !(fc.is_finite() && fr.is_finite()) || fc < 0.0 || fr < 0.0 {
            return None;
        }
        let (col, row) = (fc as usize, fr as usize);
        (col < self.n_cols && row < self.n_rows).then_some(CellId { col, row })
    }

    /// Inclusive cell index range overlapping a projected box, clamped to the grid.
    pub fn cell_range(&self, min: ProjectedPoint, max: ProjectedPoint) -> Option<(CellId, CellId)> {
        let [gx0, gy0, gx1, gy1] = self.extent();
        if max.x < gx0 || max.y < gy0 || min.x >= gx1 || min.y >= gy1 {
            return None;
        }
        let clamp = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        let c0 = clamp((min.x - self.origin.x) / self.cell_size_m, self.n_cols);
        let r0 = clamp((min.y - self.origin.y) / self.cell_size_m, self.n_rows);
        let c1 = clamp((max.x - self.origin.x) / self.cell_size_m, self.n_cols);
        let r1 = clamp((max.y - self.origin.y) / self.cell_size_m, self.n_rows);
        Some((CellId::new(c0, r0), CellId::new(c1, r1)))
    }

    /// Projected square corners, counter-clockwise from the south-west.
    pub fn cell_square(&self, c: CellId) -> Result<[ProjectedPoint; 4], GeoError> {
        self.check(c)?;
        let [x0, y0, x1, y1] = self.cell_bounds(c);
        Ok([
            ProjectedPoint::new(x0, y0),
            ProjectedPoint::new(x1, y0),
            ProjectedPoint::new(x1, y1),
            ProjectedPoint::new(x0, y1),
        ])
    }

    /// Closed counter-clockwise ring (first corner repeated at the end).
    pub fn cell_polygon(&self, c: CellId) -> Result<[GeoPoint; 5], GeoError> {
        let sq = self.cell_square(c)?;
        let g = sq.map(|p| self.unproject(p));
        Ok([g[0], g[1], g[2], g[3], g[0]])
    }

    pub fn segment_length_in_cell(&self, a: ProjectedPoint, b: ProjectedPoint, c: CellId) -> f64 {
        if !self.contains(c) {
            return 0.0;
        }
        clipped_length(a, b, self.cell_bounds(c))
    }
}

/// Liang-Barsky clip of segment `ab` against an axis-aligned box; returns the clipped length.
pub fn clipped_length(a: ProjectedPoint, b: ProjectedPoint, [x0, y0, x1, y1]: [f64; 4]) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    // a segment parallel to an edge lies inside only on the half-open side
    for (i, (p, q)) in [(-dx, a.x - x0), (dx, x1 - a.x), (-dy, a.y - y0), (dy, y1 - a.y)]
        .into_iter()
        .enumerate()
    {
        if p == 0.0 {
            let is_max_side = i % 2 == 1;
            if q < 0.0 || (is_max_side && q == 0.0) {
                return 0.0;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t1 <= t0 {
        return 0.0;
    }
    (t1 - t0) * dx.hypot(dy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn square_bbox(lat: f64, lon: f64, w_m: f64, h_m: f64) -> (GeoPoint, GeoPoint) {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let dlat = h_m / k;
        let center_lat = lat + dlat / 2.0;
        let dlon = w_m / (k * center_lat.to_radians().cos());
        (GeoPoint::new(lat, lon).unwrap(), GeoPoint::new(lat + dlat, lon + dlon).unwrap())
    }

    #[test]
    fn project_identity_and_meridian() {
        let o = GeoPoint::new(45.0, -75.0).unwrap();
        let p = project(o, o);
        assert_eq!((p.x, p.y), (0.0, 0.0));

        let north = project(GeoPoint::new(45.009, -75.0).unwrap(), o);
        let expected = 6_371_000.0 * 0.009 * std::f64::consts::PI / 180.0;
        assert_abs_diff_eq!(north.y, expected, epsilon = 1e-6);
        assert_abs_diff_eq!(north.y, 1000.75, epsilon = 0.01);
        assert_eq!(north.x, 0.0);

        let east = project(GeoPoint::new(0.0, 0.009).unwrap(), GeoPoint::new(0.0, 0.0).unwrap());
        assert_abs_diff_eq!(east.x, expected, epsilon = 1e-6);
        assert_eq!(east.y, 0.0);
    }

    #[test]
    fn invalid_coordinates_rejected() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -181.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn grid_sizes() {
        let (a, b) = square_bbox(45.0, -75.0, 3000.0, 3000.0);
        let g = make_grid(a, b, 1500.0).unwrap();
        assert_eq!((g.n_cols, g.n_rows), (2, 2));

        let (a, b) = square_bbox(45.0, -75.0, 3100.0, 3000.0);
        let g = make_grid(a, b, 1500.0).unwrap();
        assert_eq!((g.n_cols, g.n_rows), (3, 2));

        let (a, b) = square_bbox(45.0, -75.0, 100_000.0, 100_000.0);
        let g = make_grid(a, b, 1500.0).unwrap();
        assert_eq!((g.n_cols, g.n_rows), (67, 67));
    }

    #[test]
    fn degenerate_inputs() {
        let a = GeoPoint::new(45.0, -75.0).unwrap();
        assert_eq!(make_grid(a, a, 1500.0), Err(GeoError::DegenerateBBox));
        let b = GeoPoint::new(45.1, -74.9).unwrap();
        assert_eq!(make_grid(b, a, 1500.0), Err(GeoError::DegenerateBBox));
        assert!(matches!(make_grid(a, b, 0.0), Err(GeoError::InvalidCellSize(_))));
    }

    #[test]
    fn grid_origin_is_projected_sw_corner() {
        let (a, b) = square_bbox(45.0, -75.0, 4500.0, 3000.0);
        let g = make_grid(a, b, 1500.0).unwrap();
        assert_abs_diff_eq!(g.origin.x, -2250.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g.origin.y, -1500.0, epsilon = 1e-6);
        assert_eq!(g.locate(a), Some(CellId::new(0, 0)));
    }

    #[test]
    fn locate_boundaries() {
        let (a, b) = square_bbox(45.0, -75.0, 4500.0, 4500.0);
        let g = make_grid(a, b, 1500.0).unwrap();
        let o = g.origin;
        assert_eq!(g.locate_projected(o), Some(CellId::new(0, 0)));
        assert_eq!(g.locate_projected(ProjectedPoint::new(o.x + 1500.0, o.y)), Some(CellId::new(1, 0)));
        assert_eq!(g.locate_projected(ProjectedPoint::new(o.x - 1.0, o.y)), None);
        assert_eq!(g.locate_projected(ProjectedPoint::new(o.x + 4500.0, o.y)), None);
        let west = GeoPoint::new(a.lat, a.lon - 0.0001).unwrap();
        assert_eq!(g.locate(west), None);
    }

    #[test]
    fn cell_polygon_shape() {
        let (a, b) = square_bbox(45.0, -75.0, 4500.0, 4500.0);
        let g = make_grid(a, b, 1500.0).unwrap();
        let sq = g.cell_square(CellId::new(0, 0)).unwrap();
        let rel: Vec<(f64, f64)> = sq.iter().map(|p| (p.x - g.origin.x, p.y - g.origin.y)).collect();
        for ((x, y), (ex, ey)) in rel.iter().zip([(0.0, 0.0), (1500.0, 0.0), (1500.0, 1500.0), (0.0, 1500.0)]) {
            assert_abs_diff_eq!(*x, ex, epsilon = 1e-9);
            assert_abs_diff_eq!(*y, ey, epsilon = 1e-9);
        }
        // shoelace area, positive for CCW
        let area: f64 = (0..4)
            .map(|i| {
                let (p, q) = (sq[i], sq[(i + 1) % 4]);
                p.x * q.y - q.x * p.y
            })
            .sum::<f64>()
            / 2.0;
        assert_abs_diff_eq!(area, 1500.0 * 1500.0, epsilon = 1e-6);

        let ring = g.cell_polygon(CellId::new(1, 1)).unwrap();
        assert_eq!(ring[0], ring[4]);
        let right = g.cell_square(CellId::new(1, 0)).unwrap();
        assert_eq!(sq[1], right[0]);
        assert_eq!(sq[2], right[3]);

        assert!(matches!(g.cell_polygon(CellId::new(3, 0)), Err(GeoError::CellOutOfBounds { .. })));
    }

    #[test]
    fn segment_clipping() {
        let (a, b) = square_bbox(45.0, -75.0, 4500.0, 4500.0);
        let g = make_grid(a, b, 1500.0).unwrap();
        let o = g.origin;
        let p = |x: f64, y: f64| ProjectedPoint::new(o.x + x, o.y + y);
        assert_abs_diff_eq!(g.segment_length_in_cell(p(100.0, 100.0), p(400.0, 100.0), CellId::new(0, 0)), 300.0, epsilon = 1e-9);
        assert_eq!(g.segment_length_in_cell(p(100.0, 100.0), p(400.0, 100.0), CellId::new(2, 2)), 0.0);
        assert_abs_diff_eq!(g.segment_length_in_cell(p(750.0, 700.0), p(2250.0, 700.0), CellId::new(0, 0)), 750.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g.segment_length_in_cell(p(750.0, 700.0), p(2250.0, 700.0), CellId::new(1, 0)), 750.0, epsilon = 1e-9);
    }

    #[test]
    fn grid_json_schema_and_round_trip() {
        let (a, b) = square_bbox(49.2, -123.2, 20_000.0, 15_000.0);
        let g = make_grid(a, b, 1500.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(g).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["cell_size_m", "n_cols", "n_rows", "origin_lat", "origin_lon"]);
        let back: GridSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, g);
        assert_eq!(make_grid(a, b, 1500.0).unwrap(), g);
    }

    proptest! {
        #[test]
        fn project_round_trip(lat0 in -60.0..60.0f64, lon0 in -170.0..170.0f64,
                              dx in -200_000.0..200_000.0f64, dy in -200_000.0..200_000.0f64) {
            let o = GeoPoint::new(lat0, lon0).unwrap();
            let g = unproject(ProjectedPoint::new(dx, dy), o);
            let p = project(g, o);
            let back = unproject(p, o);
            prop_assert!((back.lat - g.lat).abs() < 1e-9);
            prop_assert!((back.lon - g.lon).abs() < 1e-9);
        }

        #[test]
        fn centroid_locates_own_cell(w in 1_600.0..40_000.0f64, h in 1_600.0..40_000.0f64, cs in 300.0..3_000.0f64) {
            let (a, b) = square_bbox(43.0, -79.0, w, h);
            let g = make_grid(a, b, cs).unwrap();
            for c in g.cells() {
                prop_assert_eq!(g.locate_projected(g.cell_center(c)), Some(c));
                let ring = g.cell_polygon(c).unwrap();
                let lat = ring[..4].iter().map(|p| p.lat).sum::<f64>() / 4.0;
                let lon = ring[..4].iter().map(|p| p.lon).sum::<f64>() / 4.0;
                prop_assert_eq!(g.locate(GeoPoint { lat, lon }), Some(c));
            }
        }

        #[test]
        fn clipped_lengths_sum_to_total(x0 in 0.0..9_000.0f64, y0 in 0.0..9_000.0f64,
                                        x1 in 0.0..9_000.0f64, y1 in 0.0..9_000.0f64) {
            let (a, b) = square_bbox(45.0, -75.0, 9_000.0, 9_000.0);
            let g = make_grid(a, b, 1500.0).unwrap();
            let o = g.origin;
            let pa = ProjectedPoint::new(o.x + x0, o.y + y0);
            let pb = ProjectedPoint::new(o.x + x1, o.y + y1);
            let total: f64 = g.cells().map(|c| g.segment_length_in_cell(pa, pb, c)).sum();
            prop_assert!((total - pa.distance(&pb)).abs() < 1e-3);
        }
    }
}
