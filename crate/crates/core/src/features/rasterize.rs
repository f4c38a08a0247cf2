use log::warn;

use super::FeatureError;
use crate::demand::CellSeries;
use crate::geo::{clipped_length, CellId, GridSpec, ProjectedPoint};
use crate::ingest::{Allocation, FeatureSource, SourceGeometry, ValuedPolygon};

/// A rasterized feature column plus the number of input items that fell
/// entirely outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Rasterized {
    pub column: CellSeries,
    pub dropped: usize,
}

pub fn rasterize_source(src: &FeatureSource, grid: &GridSpec) -> Result<Rasterized, FeatureError> {
    match &src.geometry {
        SourceGeometry::PolygonValue { allocation, polygons } => {
            rasterize_polygon_value(&src.name, polygons, *allocation, grid)
        }
        SourceGeometry::Point(points) => Ok(rasterize_points(&src.name, points, grid)),
        SourceGeometry::Line(lines) => Ok(rasterize_lines(&src.name, lines, grid)),
    }
}

/// Signed shoelace area; positive for counter-clockwise rings.
fn signed_area(ring: &[ProjectedPoint]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Absolute area of an open ring (no repeated closing vertex).
pub fn polygon_area(ring: &[ProjectedPoint]) -> f64 {
    signed_area(ring).abs()
}

fn orient(a: ProjectedPoint, b: ProjectedPoint, c: ProjectedPoint) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: ProjectedPoint, b: ProjectedPoint, p: ProjectedPoint) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_touch(p1: ProjectedPoint, p2: ProjectedPoint, q1: ProjectedPoint, q2: ProjectedPoint) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// First pair of non-adjacent edges that touch, if any.
fn self_intersection(ring: &[ProjectedPoint]) -> Option<(usize, usize)> {
    let n = ring.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_touch(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Sutherland-Hodgman clip of `subject` against an axis-aligned box.
fn clip_to_box(subject: &[ProjectedPoint], [x0, y0, x1, y1]: [f64; 4]) -> Vec<ProjectedPoint> {
    #[derive(Clone, Copy)]
    enum Edge {
        Left(f64),
        Right(f64),
        Bottom(f64),
        Top(f64),
    }
    let inside = |e: Edge, p: ProjectedPoint| match e {
        Edge::Left(v) => p.x >= v,
        Edge::Right(v) => p.x <= v,
        Edge::Bottom(v) => p.y >= v,
        Edge::Top(v) => p.y <= v,
    };
    let cross = |e: Edge, a: ProjectedPoint, b: ProjectedPoint| match e {
        Edge::Left(v) | Edge::Right(v) => {
            let t = (v - a.x) / (b.x - a.x);
            ProjectedPoint::new(v, a.y + t * (b.y - a.y))
        }
        Edge::Bottom(v) | Edge::Top(v) => {
            let t = (v - a.y) / (b.y - a.y);
            ProjectedPoint::new(a.x + t * (b.x - a.x), v)
        }
    };
    let mut poly = subject.to_vec();
    for e in [Edge::Left(x0), Edge::Right(x1), Edge::Bottom(y0), Edge::Top(y1)] {
        if poly.is_empty() {
            break;
        }
        let input = std::mem::take(&mut poly);
        let mut prev = *input.last().expect("non-empty");
        for &cur in &input {
            match (inside(e, cur), inside(e, prev)) {
                (true, true) => poly.push(cur),
                (true, false) => {
                    poly.push(cross(e, prev, cur));
                    poly.push(cur);
                }
                (false, true) => poly.push(cross(e, prev, cur)),
                (false, false) => {}
            }
            prev = cur;
        }
    }
    poly
}

fn projected_ring(grid: &GridSpec, p: &ValuedPolygon) -> Vec<ProjectedPoint> {
    let mut ring: Vec<ProjectedPoint> = p.ring.iter().map(|g| grid.project(*g)).collect();
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

fn bbox(points: &[ProjectedPoint]) -> (ProjectedPoint, ProjectedPoint) {
    let mut lo = ProjectedPoint::new(f64::INFINITY, f64::INFINITY);
    let mut hi = ProjectedPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

fn cells_in(grid: &GridSpec, lo: ProjectedPoint, hi: ProjectedPoint) -> impl Iterator<Item = CellId> {
    let range = grid.cell_range(lo, hi);
    range
        .into_iter()
        .flat_map(|(a, b)| (a.row..=b.row).flat_map(move |row| (a.col..=b.col).map(move |col| CellId::new(col, row))))
}

/// Area-weighted allocation of polygon values to cells.
///
/// Extensive values are split in proportion to the share of the polygon's
/// area inside each cell; intensive values become the overlap-weighted mean
/// of all polygons touching the cell.
pub fn rasterize_polygon_value(
    name: &str,
    polygons: &[ValuedPolygon],
    allocation: Allocation,
    grid: &GridSpec,
) -> Result<Rasterized, FeatureError> {
    let mut column = CellSeries::new(*grid, name, "");
    let mut weight = std::collections::BTreeMap::<CellId, f64>::new();
    let mut dropped = 0;
    for (index, poly) in polygons.iter().enumerate() {
        let ring = projected_ring(grid, poly);
        let geometry_error = |reason: String| FeatureError::Geometry {
            source_name: name.to_string(),
            index,
            reason,
        };
        if ring.len() < 3 {
            return Err(geometry_error("ring has fewer than 3 distinct vertices".into()));
        }
        if let Some((i, j)) = self_intersection(&ring) {
            return Err(geometry_error(format!("ring edges {i} and {j} intersect")));
        }
        let area = polygon_area(&ring);
        if !(area > 0.0) {
            return Err(geometry_error("ring has zero area".into()));
        }
        let (lo, hi) = bbox(&ring);
        let mut touched = false;
        // slivers from projection round-off on shared edges are ignored
        let min_overlap = 1e-9 * grid.cell_size_m * grid.cell_size_m;
        for cell in cells_in(grid, lo, hi) {
            let overlap = polygon_area(&clip_to_box(&ring, grid.cell_bounds(cell)));
            if overlap <= min_overlap {
                continue;
            }
            touched = true;
            match allocation {
                Allocation::Extensive => *column.values.entry(cell).or_insert(0.0) += poly.value * overlap / area,
                Allocation::Intensive => {
                    *column.values.entry(cell).or_insert(0.0) += poly.value * overlap;
                    *weight.entry(cell).or_insert(0.0) += overlap;
                }
            }
        }
        dropped += usize::from(!touched);
    }
    if allocation == Allocation::Intensive {
        for (cell, v) in column.values.iter_mut() {
            *v /= weight[cell];
        }
    }
    if dropped > 0 {
        warn!("{name}: {dropped} polygon(s) outside the grid");
    }
    Ok(Rasterized { column, dropped })
}

/// Number of points per cell; points outside the grid are counted in `dropped`.
pub fn rasterize_points(name: &str, points: &[crate::geo::GeoPoint], grid: &GridSpec) -> Rasterized {
    let mut column = CellSeries::new(*grid, name, "count");
    let mut dropped = 0;
    for p in points {
        match grid.locate(*p) {
            Some(c) => *column.values.entry(c).or_insert(0.0) += 1.0,
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        warn!("{name}: {dropped} point(s) outside the grid");
    }
    Rasterized { column, dropped }
}

/// Total clipped polyline length (metres) per cell.
pub fn rasterize_lines(name: &str, lines: &[Vec<crate::geo::GeoPoint>], grid: &GridSpec) -> Rasterized {
    let mut column = CellSeries::new(*grid, name, "m");
    let mut dropped = 0;
    for line in lines {
        let pts: Vec<ProjectedPoint> = line.iter().map(|g| grid.project(*g)).collect();
        let mut inside = 0.0;
        for seg in pts.windows(2) {
            let (lo, hi) = bbox(seg);
            for cell in cells_in(grid, lo, hi) {
                let len = clipped_length(seg[0], seg[1], grid.cell_bounds(cell));
                if len > 0.0 {
                    *column.values.entry(cell).or_insert(0.0) += len;
                    inside += len;
                }
            }
        }
        dropped += usize::from(inside == 0.0);
    }
    if dropped > 0 {
        warn!("{name}: {dropped} line(s) outside the grid");
    }
    Rasterized { column, dropped }
}

/// Converts a per-cell quantity into a density per square kilometre.
pub fn per_km2(series: &CellSeries) -> CellSeries {
    let km2 = series.grid.cell_size_m * series.grid.cell_size_m / 1e6;
    let mut out = series.scaled(1.0 / km2);
    out.name = format!("{}_per_km2", series.name);
    out.units = if series.units.is_empty() {
        "per km2".into()
    } else {
        format!("{}/km2", series.units)
    };
    out
}
