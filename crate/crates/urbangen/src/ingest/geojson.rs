//! GeoJSON interchange loading.
//!
//! One file per layer, standard `FeatureCollection` documents. Only the
//! geometry kinds a layer accepts survive; rings are closed when possible
//! and degenerate pieces are dropped, all with counted reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::{Crs, Feature, FeatureCollection, Geometry, Layer, LoadReport};
use crate::error::{Error, Result};
use crate::geom::PolySet;

#[derive(Deserialize)]
struct RawCollection {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    features: Vec<RawFeature>,
}

#[derive(Deserialize)]
struct RawFeature {
    geometry: Option<RawGeometry>,
    #[serde(default)]
    properties: Option<BTreeMap<String, Value>>,
}

#[derive(Deserialize)]
struct RawGeometry {
    #[serde(rename = "type")]
    kind: String,
    coordinates: Value,
}

pub fn load_layer(path: &Path, layer: Layer) -> Result<FeatureCollection> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_layer(&text, path, layer)
}

pub fn parse_layer(text: &str, source: &Path, layer: Layer) -> Result<FeatureCollection> {
    let raw: RawCollection =
        serde_json::from_str(text).map_err(|e| Error::parse(source, e.to_string()))?;
    if raw.kind != "FeatureCollection" {
        return Err(Error::parse(
            source,
            format!("expected FeatureCollection, found {:?}", raw.kind),
        ));
    }

    let mut report = LoadReport {
        parsed: raw.features.len(),
        ..LoadReport::default()
    };
    let mut features = Vec::new();
    for rf in raw.features {
        let Some(rg) = rf.geometry else {
            report.dropped_geometry_kind += 1;
            continue;
        };
        let geometry = match convert_geometry(&rg, &mut report) {
            Some(g) => g,
            None => continue,
        };
        if !layer.accepts(&geometry) {
            report.dropped_geometry_kind += 1;
            continue;
        }
        let tags = flatten_tags(rf.properties.unwrap_or_default());
        let keys = layer.required_tag_keys();
        if !keys.iter().any(|k| tags.contains_key(*k)) {
            report.dropped_missing_tags += 1;
            continue;
        }
        features.push(Feature { geometry, tags });
    }
    report.kept = features.len();
    Ok(FeatureCollection {
        layer,
        crs: Crs::Wgs84,
        features,
        report,
    })
}

fn flatten_tags(props: BTreeMap<String, Value>) -> BTreeMap<String, String> {
    let mut tags = BTreeMap::new();
    for (k, v) in props {
        let s = match v {
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
            _ => continue,
        };
        tags.insert(k, s);
    }
    tags
}

fn convert_geometry(rg: &RawGeometry, report: &mut LoadReport) -> Option<Geometry> {
    match rg.kind.as_str() {
        "Polygon" => {
            let rings = parse_rings(&rg.coordinates, report)?;
            Some(Geometry::Polygons(PolySet { rings }))
        }
        "MultiPolygon" => {
            let polys = rg.coordinates.as_array()?;
            let mut rings = Vec::new();
            for p in polys {
                if let Some(r) = parse_rings(p, report) {
                    rings.extend(r);
                }
            }
            if rings.is_empty() {
                report.dropped_degenerate += 1;
                return None;
            }
            Some(Geometry::Polygons(PolySet { rings }))
        }
        "LineString" => {
            let line = parse_positions(&rg.coordinates)?;
            if line.len() < 2 {
                report.dropped_degenerate += 1;
                return None;
            }
            Some(Geometry::Lines(vec![line]))
        }
        "MultiLineString" => {
            let parts = rg.coordinates.as_array()?;
            let lines: Vec<_> = parts
                .iter()
                .filter_map(parse_positions)
                .filter(|l| l.len() >= 2)
                .collect();
            if lines.is_empty() {
                report.dropped_degenerate += 1;
                return None;
            }
            Some(Geometry::Lines(lines))
        }
        "Point" => {
            let p = parse_position(&rg.coordinates)?;
            Some(Geometry::Point(p))
        }
        _ => {
            report.dropped_geometry_kind += 1;
            None
        }
    }
}

/// Parses polygon rings, closing open rings (counted as repaired) and
/// dropping rings with fewer than three distinct vertices.
fn parse_rings(coords: &Value, report: &mut LoadReport) -> Option<Vec<Vec<(f64, f64)>>> {
    let raw_rings = coords.as_array()?;
    let mut rings = Vec::new();
    for r in raw_rings {
        let mut pts = parse_positions(r)?;
        if pts.len() >= 2 && pts.first() == pts.last() {
            pts.pop();
        } else if pts.len() >= 3 {
            report.repaired_rings += 1;
        }
        pts.dedup();
        if pts.len() < 3 {
            report.dropped_degenerate += 1;
            continue;
        }
        rings.push(pts);
    }
    if rings.is_empty() {
        None
    } else {
        Some(rings)
    }
}

fn parse_positions(v: &Value) -> Option<Vec<(f64, f64)>> {
    v.as_array()?.iter().map(parse_position).collect()
}

fn parse_position(v: &Value) -> Option<(f64, f64)> {
    let arr = v.as_array()?;
    if arr.len() < 2 {
        return None;
    }
    Some((arr[0].as_f64()?, arr[1].as_f64()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str, layer: Layer) -> FeatureCollection {
        parse_layer(json, Path::new("test.geojson"), layer).unwrap()
    }

    fn polygon_feature(tag: &str, ring: &str) -> String {
        let (k, v) = tag.split_once('=').unwrap();
        format!(
            r#"{{"type":"Feature","geometry":{{"type":"Polygon","coordinates":[{ring}]}},"properties":{{"{k}":"{v}"}}}}"#
        )
    }

    fn collection(features: &[String]) -> String {
        format!(
            r#"{{"type":"FeatureCollection","features":[{}]}}"#,
            features.join(",")
        )
    }

    const CLOSED: &str = "[[0.0,0.0],[0.01,0.0],[0.01,0.01],[0.0,0.01],[0.0,0.0]]";

    #[test]
    fn valid_landuse_passthrough() {
        let doc = collection(&[
            polygon_feature("landuse=residential", CLOSED),
            polygon_feature("landuse=commercial", CLOSED),
            polygon_feature("leisure=park", CLOSED),
        ]);
        let fc = parse(&doc, Layer::Landuse);
        assert_eq!(fc.len(), 3);
        assert_eq!(fc.report.kept, 3);
        assert_eq!(fc.report.parsed, 3);
    }

    #[test]
    fn unclosed_ring_is_repaired_and_kept() {
        let open = "[[0.0,0.0],[0.01,0.0],[0.01,0.01],[0.0,0.01]]";
        let doc = collection(&[polygon_feature("landuse=residential", open)]);
        let fc = parse(&doc, Layer::Landuse);
        assert_eq!(fc.len(), 1);
        assert_eq!(fc.report.repaired_rings, 1);
    }

    #[test]
    fn degenerate_ring_dropped_with_report() {
        let two_points = "[[0.0,0.0],[0.01,0.0],[0.0,0.0]]";
        let doc = collection(&[
            polygon_feature("landuse=residential", CLOSED),
            polygon_feature("landuse=commercial", CLOSED),
            polygon_feature("landuse=forest", two_points),
        ]);
        let fc = parse(&doc, Layer::Landuse);
        assert_eq!(fc.len(), 2);
        assert_eq!(fc.report.dropped_degenerate, 1);
    }

    #[test]
    fn wrong_geometry_kind_dropped_and_counted() {
        let point = r#"{"type":"Feature","geometry":{"type":"Point","coordinates":[0.0,0.0]},"properties":{"landuse":"residential"}}"#;
        let doc = collection(&[polygon_feature("landuse=residential", CLOSED), point.to_string()]);
        let fc = parse(&doc, Layer::Landuse);
        assert_eq!(fc.len(), 1);
        assert_eq!(fc.report.dropped_geometry_kind, 1);
    }

    #[test]
    fn missing_required_tag_dropped_and_counted() {
        let untagged = format!(
            r#"{{"type":"Feature","geometry":{{"type":"Polygon","coordinates":[{CLOSED}]}},"properties":{{"name":"x"}}}}"#
        );
        let doc = collection(&[polygon_feature("landuse=residential", CLOSED), untagged]);
        let fc = parse(&doc, Layer::Landuse);
        assert_eq!(fc.len(), 1);
        assert_eq!(fc.report.dropped_missing_tags, 1);
    }

    #[test]
    fn malformed_document_reports_position() {
        let err = parse_layer("{\"type\": \"FeatureCollection\",\n  broken", Path::new("bad.geojson"), Layer::Landuse)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.geojson"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn empty_collection_allowed() {
        let fc = parse(r#"{"type":"FeatureCollection","features":[]}"#, Layer::Roads);
        assert!(fc.is_empty());
        assert_eq!(fc.report.parsed, 0);
    }

    #[test]
    fn waterways_accept_both_kinds() {
        let line = r#"{"type":"Feature","geometry":{"type":"LineString","coordinates":[[0.0,0.0],[0.01,0.01]]},"properties":{"waterway":"river"}}"#;
        let doc = collection(&[polygon_feature("natural=water", CLOSED), line.to_string()]);
        let fc = parse(&doc, Layer::Waterways);
        assert_eq!(fc.len(), 2);
    }

    #[test]
    fn multipolygon_flattens_rings() {
        let mp = r#"{"type":"Feature","geometry":{"type":"MultiPolygon","coordinates":[[[[0.0,0.0],[0.01,0.0],[0.01,0.01],[0.0,0.0]]],[[[0.02,0.02],[0.03,0.02],[0.03,0.03],[0.02,0.02]]]]},"properties":{"landuse":"forest"}}"#;
        let fc = parse(&collection(&[mp.to_string()]), Layer::Landuse);
        assert_eq!(fc.len(), 1);
        match &fc.features[0].geometry {
            Geometry::Polygons(p) => assert_eq!(p.rings.len(), 2),
            _ => panic!("expected polygons"),
        }
    }
}
