use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{read_to_string, write_string, IngestError};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    PolygonValue,
    Point,
    Line,
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "polygon_value" => Ok(SourceKind::PolygonValue),
            "point" => Ok(SourceKind::Point),
            "line" => Ok(SourceKind::Line),
            other => Err(format!("unknown source kind '{other}'")),
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::PolygonValue => "polygon_value",
            SourceKind::Point => "point",
            SourceKind::Line => "line",
        })
    }
}

/// How a polygon-attached value is spread over grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Averaged by overlap area (rates, medians, shares).
    Intensive,
    /// Split by overlap area so totals are conserved (counts).
    Extensive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuedPolygon {
    /// Closed exterior ring (first vertex repeated last).
    pub ring: Vec<GeoPoint>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SourceGeometry {
    PolygonValue {
        allocation: Allocation,
        polygons: Vec<ValuedPolygon>,
    },
    Point(Vec<GeoPoint>),
    Line(Vec<Vec<GeoPoint>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSource {
    pub name: String,
    pub geometry: SourceGeometry,
}

impl FeatureSource {
    pub fn kind(&self) -> SourceKind {
        match self.geometry {
            SourceGeometry::PolygonValue { .. } => SourceKind::PolygonValue,
            SourceGeometry::Point(_) => SourceKind::Point,
            SourceGeometry::Line(_) => SourceKind::Line,
        }
    }

    pub fn len(&self) -> usize {
        match &self.geometry {
            SourceGeometry::PolygonValue { polygons, .. } => polygons.len(),
            SourceGeometry::Point(p) => p.len(),
            SourceGeometry::Line(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Straight segments of every line string.
    pub fn segments(&self) -> Vec<(GeoPoint, GeoPoint)> {
        match &self.geometry {
            SourceGeometry::Line(lines) => lines.iter().flat_map(|l| l.windows(2).map(|w| (w[0], w[1]))).collect(),
            _ => Vec::new(),
        }
    }
}

fn position(v: &Value, feature: usize) -> Result<GeoPoint, IngestError> {
    let bad = || IngestError::parse(0, format!("features[{feature}].geometry"), "position must be [lon, lat]");
    let arr = v.as_array().ok_or_else(bad)?;
    if arr.len() < 2 {
        return Err(bad());
    }
    let lon = arr[0].as_f64().ok_or_else(bad)?;
    let lat = arr[1].as_f64().ok_or_else(bad)?;
    GeoPoint::new(lat, lon).map_err(|e| IngestError::parse(0, format!("features[{feature}].geometry"), e.to_string()))
}

fn positions(v: &Value, feature: usize) -> Result<Vec<GeoPoint>, IngestError> {
    v.as_array()
        .ok_or_else(|| IngestError::parse(0, format!("features[{feature}].geometry"), "expected array of positions"))?
        .iter()
        .map(|p| position(p, feature))
        .collect()
}

pub fn parse_feature_source(
    path: impl AsRef<Path>,
    kind: SourceKind,
    name: &str,
    allocation: Option<Allocation>,
) -> Result<FeatureSource, IngestError> {
    parse_feature_source_str(&read_to_string(path.as_ref())?, kind, name, allocation)
}

pub fn parse_feature_source_str(
    text: &str,
    kind: SourceKind,
    name: &str,
    allocation: Option<Allocation>,
) -> Result<FeatureSource, IngestError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| IngestError::parse(e.line() as u64, "json", e.to_string()))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(IngestError::parse(0, "type", "expected a GeoJSON FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| IngestError::parse(0, "features", "missing features array"))?;

    let allocation = match kind {
        SourceKind::PolygonValue => Some(allocation.ok_or_else(|| {
            IngestError::parse(0, "allocation", "polygon_value sources need an intensive/extensive allocation")
        })?),
        _ => None,
    };

    let mut points = Vec::new();
    let mut lines = Vec::new();
    let mut polygons = Vec::new();
    for (i, f) in features.iter().enumerate() {
        let geom = f
            .get("geometry")
            .filter(|g| !g.is_null())
            .ok_or_else(|| IngestError::parse(0, format!("features[{i}]"), "missing geometry"))?;
        let gtype = geom.get("type").and_then(Value::as_str).unwrap_or("");
        let coords = geom
            .get("coordinates")
            .ok_or_else(|| IngestError::parse(0, format!("features[{i}].geometry"), "missing coordinates"))?;
        if gtype.starts_with("Multi") || gtype == "GeometryCollection" {
            return Err(IngestError::UnsupportedGeometry {
                feature: i,
                reason: format!("{gtype} is not supported; split it into single geometries"),
            });
        }
        let expected = match kind {
            SourceKind::Point => "Point",
            SourceKind::Line => "LineString",
            SourceKind::PolygonValue => "Polygon",
        };
        if gtype != expected {
            return Err(IngestError::UnsupportedGeometry {
                feature: i,
                reason: format!("{gtype} in a {kind} source (expected {expected})"),
            });
        }
        match kind {
            SourceKind::Point => points.push(position(coords, i)?),
            SourceKind::Line => {
                let line = positions(coords, i)?;
                if line.len() < 2 {
                    return Err(IngestError::parse(0, format!("features[{i}].geometry"), "line needs at least 2 vertices"));
                }
                lines.push(line);
            }
            SourceKind::PolygonValue => {
                let rings = coords.as_array().ok_or_else(|| {
                    IngestError::parse(0, format!("features[{i}].geometry"), "polygon coordinates must be an array of rings")
                })?;
                if rings.len() != 1 {
                    return Err(IngestError::UnsupportedGeometry {
                        feature: i,
                        reason: "polygons with holes are not supported".into(),
                    });
                }
                let ring = positions(&rings[0], i)?;
                if ring.len() < 4 || ring.first() != ring.last() {
                    return Err(IngestError::parse(
                        0,
                        format!("features[{i}].geometry"),
                        "polygon ring must be closed with at least 4 positions",
                    ));
                }
                let value = f
                    .get("properties")
                    .and_then(|p| p.get("value"))
                    .and_then(Value::as_f64)
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        IngestError::parse(0, format!("features[{i}].properties.value"), "missing numeric property \"value\"")
                    })?;
                if allocation == Some(Allocation::Extensive) && value < 0.0 {
                    return Err(IngestError::parse(
                        0,
                        format!("features[{i}].properties.value"),
                        "extensive values must be >= 0",
                    ));
                }
                polygons.push(ValuedPolygon { ring, value });
            }
        }
    }

    let geometry = match kind {
        SourceKind::Point => SourceGeometry::Point(points),
        SourceKind::Line => SourceGeometry::Line(lines),
        SourceKind::PolygonValue => SourceGeometry::PolygonValue {
            allocation: allocation.expect("checked above"),
            polygons,
        },
    };
    Ok(FeatureSource {
        name: name.to_string(),
        geometry,
    })
}

fn coord(p: &GeoPoint) -> Value {
    json!([p.lon, p.lat])
}

pub fn feature_source_to_geojson(src: &FeatureSource) -> Value {
    let features: Vec<Value> = match &src.geometry {
        SourceGeometry::Point(points) => points
            .iter()
            .map(|p| json!({"type": "Feature", "properties": {}, "geometry": {"type": "Point", "coordinates": coord(p)}}))
            .collect(),
        SourceGeometry::Line(lines) => lines
            .iter()
            .map(|l| {
                let c: Vec<Value> = l.iter().map(coord).collect();
                json!({"type": "Feature", "properties": {}, "geometry": {"type": "LineString", "coordinates": c}})
            })
            .collect(),
        SourceGeometry::PolygonValue { polygons, .. } => polygons
            .iter()
            .map(|poly| {
                let c: Vec<Value> = poly.ring.iter().map(coord).collect();
                json!({"type": "Feature", "properties": {"value": poly.value},
                       "geometry": {"type": "Polygon", "coordinates": [c]}})
            })
            .collect(),
    };
    json!({"type": "FeatureCollection", "name": src.name, "features": features})
}

pub fn write_feature_source(path: impl AsRef<Path>, src: &FeatureSource) -> Result<(), IngestError> {
    let text = serde_json::to_string(&feature_source_to_geojson(src)).expect("json values serialize");
    write_string(path.as_ref(), &text)
}
