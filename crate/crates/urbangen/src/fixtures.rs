//! Synthetic micro-city fixtures.
//!
//! Generates a deterministic city directory (seven GeoJSON layers plus
//! imagery tiles) whose areas are exact fractions of each tile, so derived
//! compositions have known values. Used by the test suites, the guide
//! examples, and anyone who wants to run the pipeline end to end without
//! real map extracts.

use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ingest::{
    Category, CompositionTable, DensityBin, ResidentialType, SettlementKind, TileFeatures,
};
use crate::rng::{derive_seed, Pcg32};
use crate::tiles::{mercator_to_lonlat, mercator_xy, tile_to_bbox, GeoBBox, TileId};

/// Corner positions (lon/lat) of a rectangle spanning the given Mercator
/// fractions of `bbox`; `fy` is measured from the south edge.
pub fn rect_frac_ring(bbox: &GeoBBox, fx0: f64, fy0: f64, fx1: f64, fy1: f64) -> Vec<[f64; 2]> {
    let (x0, y0) = mercator_xy(bbox.west, bbox.south);
    let (x1, y1) = mercator_xy(bbox.east, bbox.north);
    let (w, h) = (x1 - x0, y1 - y0);
    let corner = |fx: f64, fy: f64| -> [f64; 2] {
        let (lon, lat) = mercator_to_lonlat(x0 + fx * w, y0 + fy * h);
        [lon, lat]
    };
    vec![
        corner(fx0, fy0),
        corner(fx1, fy0),
        corner(fx1, fy1),
        corner(fx0, fy1),
        corner(fx0, fy0),
    ]
}

fn polygon_feature(ring: Vec<[f64; 2]>, tags: &[(&str, &str)]) -> Value {
    let props: serde_json::Map<String, Value> = tags
        .iter()
        .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
        .collect();
    json!({
        "type": "Feature",
        "geometry": {"type": "Polygon", "coordinates": [ring]},
        "properties": props,
    })
}

fn line_feature(points: Vec<[f64; 2]>, tags: &[(&str, &str)]) -> Value {
    let props: serde_json::Map<String, Value> = tags
        .iter()
        .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
        .collect();
    json!({
        "type": "Feature",
        "geometry": {"type": "LineString", "coordinates": points},
        "properties": props,
    })
}

fn line_frac(bbox: &GeoBBox, pts: &[(f64, f64)]) -> Vec<[f64; 2]> {
    let (x0, y0) = mercator_xy(bbox.west, bbox.south);
    let (x1, y1) = mercator_xy(bbox.east, bbox.north);
    let (w, h) = (x1 - x0, y1 - y0);
    pts.iter()
        .map(|&(fx, fy)| {
            let (lon, lat) = mercator_to_lonlat(x0 + fx * w, y0 + fy * h);
            [lon, lat]
        })
        .collect()
}

/// Specification of a synthetic city fixture.
#[derive(Debug, Clone)]
pub struct MicroCity {
    pub city: String,
    pub zoom: u8,
    pub x0: u32,
    pub y0: u32,
    pub nx: u32,
    pub ny: u32,
    pub seed: u64,
    /// Side length of the square imagery tiles, in pixels.
    pub imagery_px: u32,
    /// Tiles deliberately generated below the coverage filter.
    pub low_coverage: Vec<(u32, u32)>,
}

impl MicroCity {
    pub fn new(city: &str, nx: u32, ny: u32) -> MicroCity {
        MicroCity {
            city: city.to_string(),
            zoom: 16,
            x0: 16815,
            y0: 24357,
            nx,
            ny,
            seed: 1,
            imagery_px: 32,
            low_coverage: Vec::new(),
        }
    }

    pub fn tiles(&self) -> Vec<TileId> {
        let mut out = Vec::new();
        for x in self.x0..self.x0 + self.nx {
            for y in self.y0..self.y0 + self.ny {
                out.push(TileId { zoom: self.zoom, x, y });
            }
        }
        out
    }
}

/// Writes the seven layer files plus `imagery/{z}/{x}/{y}.png`, covering the
/// requested grid and a one-tile margin ring (so half-tile shifted windows
/// always see data and neighboring imagery).
pub fn write_micro_city(dir: &Path, spec: &MicroCity) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut landuse = Vec::new();
    let mut roads = Vec::new();
    let mut railways = Vec::new();
    let mut waterways = Vec::new();
    let mut buildings = Vec::new();
    let mut places = Vec::new();
    let mut traffic = Vec::new();

    for x in spec.x0.saturating_sub(1)..spec.x0 + spec.nx + 1 {
        for y in spec.y0.saturating_sub(1)..spec.y0 + spec.ny + 1 {
            let tile = TileId { zoom: spec.zoom, x, y };
            let b = tile_to_bbox(tile);
            let tag = ((x as u64) << 32) | y as u64;
            let mut rng = Pcg32::new(derive_seed(spec.seed, "fixture-tile", tag));
            let low = spec.low_coverage.contains(&(x, y));

            if low {
                // Half the tile recognized: fails the 70% filter.
                landuse.push(polygon_feature(
                    rect_frac_ring(&b, 0.0, 0.5, 1.0, 1.0),
                    &[("landuse", "residential")],
                ));
            } else {
                let r1 = 0.40 + 0.05 * rng.gen_range(3) as f64;
                // Residential band along the south edge.
                landuse.push(polygon_feature(
                    rect_frac_ring(&b, 0.0, 0.0, 1.0, r1),
                    &[("landuse", "residential")],
                ));
                // Middle band: commercial, a concentrated industrial block,
                // and a park.
                landuse.push(polygon_feature(
                    rect_frac_ring(&b, 0.0, r1, 0.30, r1 + 0.30),
                    &[("landuse", "commercial")],
                ));
                landuse.push(polygon_feature(
                    rect_frac_ring(&b, 0.30, r1, 0.75, r1 + 0.30),
                    &[("landuse", "industrial")],
                ));
                landuse.push(polygon_feature(
                    rect_frac_ring(&b, 0.75, r1, 1.0, r1 + 0.30),
                    &[("leisure", "park")],
                ));
                // Top band: a water pocket and farmland.
                landuse.push(polygon_feature(
                    rect_frac_ring(&b, 0.0, r1 + 0.30, 0.30, r1 + 0.40),
                    &[("natural", "water")],
                ));
                landuse.push(polygon_feature(
                    rect_frac_ring(&b, 0.30, r1 + 0.30, 1.0, r1 + 0.40),
                    &[("landuse", "farmland")],
                ));

                // Buildings inside the residential band.
                let big = rng.gen_range(2) == 0;
                let apt = if big {
                    rect_frac_ring(&b, 0.05, 0.05, 0.35, 0.30)
                } else {
                    rect_frac_ring(&b, 0.05, 0.05, 0.25, 0.25)
                };
                buildings.push(polygon_feature(apt, &[("building", "apartments")]));
                buildings.push(polygon_feature(
                    rect_frac_ring(&b, 0.40, 0.05, 0.55, 0.20),
                    &[("building", "house")],
                ));
                if rng.gen_range(2) == 0 {
                    buildings.push(polygon_feature(
                        rect_frac_ring(&b, 0.60, 0.05, 0.70, 0.18),
                        &[("building", "terrace")],
                    ));
                }

                // Parking pocket in the top-east corner (traffic layer).
                traffic.push(polygon_feature(
                    rect_frac_ring(&b, 0.80, 0.82, 0.97, 0.97),
                    &[("amenity", "parking")],
                ));
            }

            // A primary road across the tile and a residential street.
            roads.push(line_feature(
                line_frac(&b, &[(0.0, 0.5), (1.0, 0.5)]),
                &[("highway", "primary")],
            ));
            roads.push(line_feature(
                line_frac(&b, &[(0.35, 0.0), (0.35, 1.0)]),
                &[("highway", "residential")],
            ));
            if (x + y) % 3 == 0 {
                railways.push(line_feature(
                    line_frac(&b, &[(0.0, 0.1), (1.0, 0.35)]),
                    &[("railway", "rail")],
                ));
            }
            if x % 2 == 0 {
                waterways.push(line_feature(
                    line_frac(&b, &[(0.9, 0.0), (0.85, 1.0)]),
                    &[("waterway", "river")],
                ));
            }

            // Places: the whole tile is city; some tiles blend in a town.
            places.push(polygon_feature(
                rect_frac_ring(&b, 0.0, 0.0, 1.0, 1.0),
                &[("place", "city")],
            ));
            if (x + y) % 4 == 0 {
                places.push(polygon_feature(
                    rect_frac_ring(&b, 0.0, 0.0, 1.0, 0.40),
                    &[("place", "town")],
                ));
            }

            write_imagery_tile(dir, spec, tile)?;
        }
    }

    let write_layer = |name: &str, features: Vec<Value>| -> Result<()> {
        let doc = json!({"type": "FeatureCollection", "features": features});
        let path = dir.join(name);
        std::fs::write(&path, serde_json::to_string(&doc).unwrap())
            .map_err(|e| Error::io(&path, e))
    };
    write_layer("landuse.geojson", landuse)?;
    write_layer("roads.geojson", roads)?;
    write_layer("railways.geojson", railways)?;
    write_layer("waterways.geojson", waterways)?;
    write_layer("buildings.geojson", buildings)?;
    write_layer("places.geojson", places)?;
    write_layer("traffic.geojson", traffic)?;
    Ok(())
}

/// Deterministic imagery tile: a smooth color field keyed by tile address.
fn write_imagery_tile(dir: &Path, spec: &MicroCity, tile: TileId) -> Result<()> {
    let p = spec.imagery_px;
    let img_dir = dir
        .join("imagery")
        .join(tile.zoom.to_string())
        .join(tile.x.to_string());
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let path = img_dir.join(format!("{}.png", tile.y));
    let mut rgb = vec![0u8; (p * p * 3) as usize];
    for py in 0..p {
        for px in 0..p {
            let i = ((py * p + px) * 3) as usize;
            rgb[i] = ((tile.x.wrapping_mul(37) + px * 3) % 256) as u8;
            rgb[i + 1] = ((tile.y.wrapping_mul(53) + py * 5) % 256) as u8;
            rgb[i + 2] = ((tile.x ^ tile.y).wrapping_add(px + py) % 256) as u8;
        }
    }
    crate::imgio::save_rgb(&path, p, p, &rgb)
}

fn example_features(
    city: &str,
    comp: &[(Category, f64)],
    building_coverage: f64,
    types: &[ResidentialType],
) -> TileFeatures {
    let mut table = CompositionTable::default();
    for &(c, v) in comp {
        table.proportions.insert(c, v);
    }
    TileFeatures {
        tile: TileId { zoom: 16, x: 16815, y: 24357 },
        city: city.to_string(),
        coverage: comp.iter().map(|(_, v)| v).sum::<f64>().min(1.0),
        composition: table,
        building_coverage,
        density_bin: DensityBin::from_coverage(building_coverage),
        residential_types: types.to_vec(),
        settlement_primary: SettlementKind::City,
        settlement_secondary: vec![],
        settlement_fallback: false,
        designation: None,
    }
}

/// Demo features: a Los Angeles tile that is 85% residential with 10%
/// commercial, medium building density, single-family housing.
pub fn la_example_features() -> TileFeatures {
    example_features(
        "la",
        &[(Category::Residential, 0.85), (Category::Commercial, 0.10)],
        0.20,
        &[ResidentialType::SingleFamilyHomes],
    )
}

/// Demo features: a Dallas tile, 45/20/15 residential/commercial/forest,
/// medium density, apartments with townhouses.
pub fn dallas_example_features() -> TileFeatures {
    example_features(
        "dallas",
        &[
            (Category::Residential, 0.45),
            (Category::Commercial, 0.20),
            (Category::Forest, 0.15),
        ],
        0.20,
        &[ResidentialType::ApartmentComplexes, ResidentialType::Townhouses],
    )
}

/// Demo features: a Chicago tile, 35/15/10/10/5 across residential,
/// parking, recreational, commercial, and forest, high density.
pub fn chicago_example_features() -> TileFeatures {
    example_features(
        "chicago",
        &[
            (Category::Residential, 0.35),
            (Category::Parking, 0.15),
            (Category::Recreational, 0.10),
            (Category::Commercial, 0.10),
            (Category::Forest, 0.05),
        ],
        0.32,
        &[
            ResidentialType::ApartmentComplexes,
            ResidentialType::SingleFamilyHomes,
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{assemble_tile_features, AssembleOptions, LayerSet, TagMap};

    #[test]
    fn micro_city_layers_load_and_derive() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MicroCity::new("alpha", 2, 2);
        write_micro_city(dir.path(), &spec).unwrap();
        let layers = LayerSet::load_dir(dir.path()).unwrap();
        assert!(!layers.landuse.is_empty());
        let tags = TagMap::builtin();
        let tile = spec.tiles()[0];
        let (f, _) = assemble_tile_features(
            &layers,
            tile,
            &tile_to_bbox(tile),
            &spec.city,
            &AssembleOptions { seed: 9, include_designation: true, tags: &tags },
        );
        assert!(f.coverage > 0.70, "coverage {}", f.coverage);
        assert!(f.composition.share(Category::Residential) >= 0.39);
        assert_eq!(f.settlement_primary, SettlementKind::City);
    }

    #[test]
    fn low_coverage_tiles_fail_the_filter() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = MicroCity::new("alpha", 2, 1);
        spec.low_coverage = vec![(spec.x0, spec.y0)];
        write_micro_city(dir.path(), &spec).unwrap();
        let layers = LayerSet::load_dir(dir.path()).unwrap();
        let tags = TagMap::builtin();
        let t_low = TileId { zoom: spec.zoom, x: spec.x0, y: spec.y0 };
        let (f_low, _) = assemble_tile_features(
            &layers,
            t_low,
            &tile_to_bbox(t_low),
            &spec.city,
            &AssembleOptions { seed: 9, include_designation: false, tags: &tags },
        );
        assert!(f_low.coverage <= 0.70, "coverage {}", f_low.coverage);
        let t_ok = TileId { zoom: spec.zoom, x: spec.x0 + 1, y: spec.y0 };
        let (f_ok, _) = assemble_tile_features(
            &layers,
            t_ok,
            &tile_to_bbox(t_ok),
            &spec.city,
            &AssembleOptions { seed: 9, include_designation: false, tags: &tags },
        );
        assert!(f_ok.coverage > 0.70);
    }

    #[test]
    fn generation_is_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let spec = MicroCity::new("alpha", 1, 1);
        write_micro_city(d1.path(), &spec).unwrap();
        write_micro_city(d2.path(), &spec).unwrap();
        for name in ["landuse.geojson", "buildings.geojson", "places.geojson"] {
            assert_eq!(
                std::fs::read(d1.path().join(name)).unwrap(),
                std::fs::read(d2.path().join(name)).unwrap(),
                "{name} differs"
            );
        }
    }

    #[test]
    fn imagery_tiles_exist_with_margin() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MicroCity::new("alpha", 1, 1);
        write_micro_city(dir.path(), &spec).unwrap();
        for (dx, dy) in [(-1i64, 0i64), (0, 0), (1, 0), (0, -1), (0, 1), (1, 1)] {
            let x = (spec.x0 as i64 + dx) as u32;
            let y = (spec.y0 as i64 + dy) as u32;
            let p = dir
                .path()
                .join("imagery")
                .join(spec.zoom.to_string())
                .join(x.to_string())
                .join(format!("{y}.png"));
            assert!(p.is_file(), "missing {p:?}");
        }
    }
}
