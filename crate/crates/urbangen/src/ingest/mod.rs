//! Vector-layer ingestion: GeoJSON loading, clipping, and the per-tile
//! semantics (land-use composition, building metrics, settlement types,
//! designation regions) that feed prompts and control images.

pub mod features;
pub mod geojson;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, MercBox, PolySet};
use crate::tiles::{mercator_xy, GeoBBox};

pub use features::{
    assemble_tile_features, building_metrics, designation_candidate, landuse_composition,
    landuse_fallback_from_buildings, settlement_type, AssembleOptions, BuildingMetrics,
    Category, CompositionTable, DensityBin, DesignationRegion, HorizontalBucket,
    ResidentialType, Settlement, SettlementKind, TagMap, TileFeatures, VerticalBucket,
};
pub use geojson::load_layer;

/// The seven vector layers a city directory provides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Landuse,
    Roads,
    Railways,
    Waterways,
    Buildings,
    Places,
    Traffic,
}

impl Layer {
    pub const ALL: [Layer; 7] = [
        Layer::Landuse,
        Layer::Roads,
        Layer::Railways,
        Layer::Waterways,
        Layer::Buildings,
        Layer::Places,
        Layer::Traffic,
    ];

    pub fn file_name(&self) -> &'static str {
        match self {
            Layer::Landuse => "landuse.geojson",
            Layer::Roads => "roads.geojson",
            Layer::Railways => "railways.geojson",
            Layer::Waterways => "waterways.geojson",
            Layer::Buildings => "buildings.geojson",
            Layer::Places => "places.geojson",
            Layer::Traffic => "traffic.geojson",
        }
    }

    /// Geometry kinds this layer accepts; anything else is dropped.
    fn accepts(&self, g: &Geometry) -> bool {
        match self {
            Layer::Landuse | Layer::Buildings | Layer::Places | Layer::Traffic => {
                matches!(g, Geometry::Polygons(_))
            }
            Layer::Roads | Layer::Railways => matches!(g, Geometry::Lines(_)),
            Layer::Waterways => matches!(g, Geometry::Polygons(_) | Geometry::Lines(_)),
        }
    }

    /// A feature must carry at least one of these tag keys to be usable.
    fn required_tag_keys(&self) -> &'static [&'static str] {
        match self {
            Layer::Landuse => &["landuse", "leisure", "natural"],
            Layer::Roads => &["highway"],
            Layer::Railways => &["railway"],
            Layer::Waterways => &["waterway", "natural", "water"],
            Layer::Buildings => &["building"],
            Layer::Places => &["place"],
            Layer::Traffic => &["amenity", "parking"],
        }
    }
}

/// Coordinate reference of a collection's geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crs {
    /// Longitude/latitude degrees, as loaded from GeoJSON.
    Wgs84,
    /// Projected spherical-Mercator meters, as produced by clipping.
    Mercator,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Polygons(PolySet),
    Lines(Vec<Vec<(f64, f64)>>),
    Point((f64, f64)),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub geometry: Geometry,
    pub tags: BTreeMap<String, String>,
}

impl Feature {
    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(|s| s.as_str())
    }
}

/// Load-time accounting: what was kept, dropped, or repaired.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub parsed: usize,
    pub kept: usize,
    pub dropped_missing_tags: usize,
    pub dropped_geometry_kind: usize,
    pub dropped_degenerate: usize,
    pub repaired_rings: usize,
}

#[derive(Debug, Clone)]
pub struct FeatureCollection {
    pub layer: Layer,
    pub crs: Crs,
    pub features: Vec<Feature>,
    pub report: LoadReport,
}

impl FeatureCollection {
    pub fn empty(layer: Layer) -> Self {
        FeatureCollection {
            layer,
            crs: Crs::Wgs84,
            features: Vec::new(),
            report: LoadReport::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Projected footprint of a geographic bbox.
pub fn bbox_to_merc(bbox: &GeoBBox) -> MercBox {
    let (x0, y0) = mercator_xy(bbox.west, bbox.south);
    let (x1, y1) = mercator_xy(bbox.east, bbox.north);
    MercBox { x0, y0, x1, y1 }
}

/// Minimum clipped-polygon area, as a fraction of the clip window, below
/// which the piece is discarded as a sliver.
pub const SLIVER_FRACTION: f64 = 1e-6;

/// Intersects every feature with `bbox`, dropping empty results and slivers.
///
/// Output geometry is in Mercator meters; clipping a collection that is
/// already in Mercator space is exact and idempotent.
pub fn clip_to_bbox(fc: &FeatureCollection, bbox: &GeoBBox) -> FeatureCollection {
    let window = bbox_to_merc(bbox);
    let min_area = SLIVER_FRACTION * window.area();
    let mut out = Vec::new();
    for f in &fc.features {
        let geometry = match &f.geometry {
            Geometry::Polygons(p) => {
                let mut clipped = PolySet::default();
                for ring in &p.rings {
                    let ring = project_ring(ring, fc.crs);
                    if let Some(c) = geom::clip_ring(&ring, &window) {
                        clipped.rings.push(c);
                    }
                }
                if clipped.rings.is_empty() || clipped.area() < min_area {
                    continue;
                }
                Geometry::Polygons(clipped)
            }
            Geometry::Lines(lines) => {
                let mut kept = Vec::new();
                for line in lines {
                    let line = project_line(line, fc.crs);
                    kept.extend(geom::clip_polyline(&line, &window));
                }
                if kept.is_empty() {
                    continue;
                }
                Geometry::Lines(kept)
            }
            Geometry::Point(p) => {
                let p = project_point(*p, fc.crs);
                if !window.contains(p) {
                    continue;
                }
                Geometry::Point(p)
            }
        };
        out.push(Feature {
            geometry,
            tags: f.tags.clone(),
        });
    }
    FeatureCollection {
        layer: fc.layer,
        crs: Crs::Mercator,
        features: out,
        report: fc.report.clone(),
    }
}

fn project_point(p: (f64, f64), crs: Crs) -> (f64, f64) {
    match crs {
        Crs::Wgs84 => mercator_xy(p.0, p.1),
        Crs::Mercator => p,
    }
}

fn project_ring(ring: &[(f64, f64)], crs: Crs) -> Vec<(f64, f64)> {
    ring.iter().map(|&p| project_point(p, crs)).collect()
}

fn project_line(line: &[(f64, f64)], crs: Crs) -> Vec<(f64, f64)> {
    line.iter().map(|&p| project_point(p, crs)).collect()
}

/// All seven layers of one city directory.
#[derive(Debug, Clone)]
pub struct LayerSet {
    pub landuse: FeatureCollection,
    pub roads: FeatureCollection,
    pub railways: FeatureCollection,
    pub waterways: FeatureCollection,
    pub buildings: FeatureCollection,
    pub places: FeatureCollection,
    pub traffic: FeatureCollection,
}

impl LayerSet {
    /// Loads `landuse.geojson` .. `traffic.geojson` from a city directory.
    pub fn load_dir(dir: &std::path::Path) -> Result<LayerSet> {
        let load = |layer: Layer| -> Result<FeatureCollection> {
            let path = dir.join(layer.file_name());
            if !path.is_file() {
                return Err(Error::MissingInput(path));
            }
            geojson::load_layer(&path, layer)
        };
        Ok(LayerSet {
            landuse: load(Layer::Landuse)?,
            roads: load(Layer::Roads)?,
            railways: load(Layer::Railways)?,
            waterways: load(Layer::Waterways)?,
            buildings: load(Layer::Buildings)?,
            places: load(Layer::Places)?,
            traffic: load(Layer::Traffic)?,
        })
    }

    pub fn clip(&self, bbox: &GeoBBox) -> LayerSet {
        LayerSet {
            landuse: clip_to_bbox(&self.landuse, bbox),
            roads: clip_to_bbox(&self.roads, bbox),
            railways: clip_to_bbox(&self.railways, bbox),
            waterways: clip_to_bbox(&self.waterways, bbox),
            buildings: clip_to_bbox(&self.buildings, bbox),
            places: clip_to_bbox(&self.places, bbox),
            traffic: clip_to_bbox(&self.traffic, bbox),
        }
    }
}
