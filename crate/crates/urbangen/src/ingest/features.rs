//! Per-tile semantics derived from clipped vector layers.
//!
//! All fractions are areas in Web-Mercator meters relative to the tile
//! window; at tile scale the projection distortion is uniform, so the
//! ratios are faithful.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Feature, FeatureCollection, Geometry, LayerSet};
use crate::error::{Error, Result};
use crate::geom::{mask_components, rasterize_mask, union_area, MercBox, PolySet, Ring};
use crate::rng::Pcg32;
use crate::tiles::{GeoBBox, TileId};

/// Building coverage at or above this fraction is high density.
pub const DENSITY_HIGH: f64 = 0.30;
/// ... medium density.
pub const DENSITY_MEDIUM: f64 = 0.15;
/// ... low density; below it the density sentence is omitted.
pub const DENSITY_LOW: f64 = 0.03;

/// Secondary settlement types must cover strictly more than this fraction.
pub const SECONDARY_SETTLEMENT_MIN: f64 = 0.35;

/// Designation-region share bounds (inclusive).
pub const DESIGNATION_MIN_SHARE: f64 = 0.10;
pub const DESIGNATION_MAX_SHARE: f64 = 0.40;

/// A category is "spatially concentrated" when its largest 4-connected
/// raster component holds at least this fraction of the category's area.
pub const CONCENTRATION_MIN: f64 = 0.60;

/// Raster resolution used for the concentration test and centroids.
pub const CONCENTRATION_RES: usize = 256;

/// Canonical land-use categories.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Residential,
    Commercial,
    Industrial,
    Recreational,
    Farmland,
    Forest,
    Water,
    Parking,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Residential,
        Category::Commercial,
        Category::Industrial,
        Category::Recreational,
        Category::Farmland,
        Category::Forest,
        Category::Water,
        Category::Parking,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Category::Residential => "residential",
            Category::Commercial => "commercial",
            Category::Industrial => "industrial",
            Category::Recreational => "recreational",
            Category::Farmland => "farmland",
            Category::Forest => "forest",
            Category::Water => "water",
            Category::Parking => "parking",
        }
    }

    pub fn from_name(name: &str) -> Option<Category> {
        Category::ALL.iter().copied().find(|c| c.name() == name)
    }

    /// Human-readable name of this category's shading color, used in
    /// designation prompts. Water has no fill: it is rendered as a natural
    /// constraint, never shaded as a designation.
    pub fn fill_color_name(&self) -> Option<&'static str> {
        match self {
            Category::Residential => Some("red"),
            Category::Commercial => Some("blue"),
            Category::Industrial => Some("purple"),
            Category::Recreational => Some("green"),
            Category::Farmland => Some("tan"),
            Category::Forest => Some("dark green"),
            Category::Parking => Some("olive"),
            Category::Water => None,
        }
    }
}

/// Residential building types, in prompt vocabulary.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ResidentialType {
    ApartmentComplexes,
    SingleFamilyHomes,
    Townhouses,
}

impl ResidentialType {
    pub fn name(&self) -> &'static str {
        match self {
            ResidentialType::ApartmentComplexes => "apartment complexes",
            ResidentialType::SingleFamilyHomes => "single-family homes",
            ResidentialType::Townhouses => "townhouses",
        }
    }

    pub fn from_name(name: &str) -> Option<ResidentialType> {
        [
            ResidentialType::ApartmentComplexes,
            ResidentialType::SingleFamilyHomes,
            ResidentialType::Townhouses,
        ]
        .into_iter()
        .find(|t| t.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SettlementKind {
    City,
    Town,
    Village,
}

impl SettlementKind {
    pub const ALL: [SettlementKind; 3] =
        [SettlementKind::City, SettlementKind::Town, SettlementKind::Village];

    pub fn name(&self) -> &'static str {
        match self {
            SettlementKind::City => "city",
            SettlementKind::Town => "town",
            SettlementKind::Village => "village",
        }
    }

    fn from_tag(tag: &str) -> Option<SettlementKind> {
        SettlementKind::ALL.iter().copied().find(|k| k.name() == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityBin {
    High,
    Medium,
    Low,
    None,
}

impl DensityBin {
    /// Pure threshold function of building coverage; bounds are inclusive.
    pub fn from_coverage(coverage: f64) -> DensityBin {
        if coverage >= DENSITY_HIGH {
            DensityBin::High
        } else if coverage >= DENSITY_MEDIUM {
            DensityBin::Medium
        } else if coverage >= DENSITY_LOW {
            DensityBin::Low
        } else {
            DensityBin::None
        }
    }

    pub fn word(&self) -> Option<&'static str> {
        match self {
            DensityBin::High => Some("high"),
            DensityBin::Medium => Some("medium"),
            DensityBin::Low => Some("low"),
            DensityBin::None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HorizontalBucket {
    Left,
    Central,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerticalBucket {
    Upper,
    Mid,
    Lower,
}

/// Per-category area fractions of a tile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompositionTable {
    pub proportions: BTreeMap<Category, f64>,
}

impl CompositionTable {
    pub fn share(&self, cat: Category) -> f64 {
        self.proportions.get(&cat).copied().unwrap_or(0.0)
    }

    fn bump(&mut self, cat: Category, extra: f64) {
        if extra > 0.0 {
            *self.proportions.entry(cat).or_insert(0.0) += extra;
        }
    }

    /// Categories at or above `threshold`, largest first; ties broken by
    /// category name for determinism.
    pub fn ranked(&self, threshold: f64) -> Vec<(Category, f64)> {
        let mut out: Vec<(Category, f64)> = self
            .proportions
            .iter()
            .filter(|(_, &v)| v >= threshold)
            .map(|(&c, &v)| (c, v))
            .collect();
        out.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then_with(|| a.0.name().cmp(b.0.name()))
        });
        out
    }
}

/// A spatially concentrated land-use block eligible for shading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignationRegion {
    pub category: Category,
    pub share: f64,
    pub centroid_h: HorizontalBucket,
    pub centroid_v: VerticalBucket,
    /// Mercator rings of the category's polygons, for shading.
    pub rings: Vec<Ring>,
    /// Palette color name, spoken in prompts.
    pub color: String,
}

impl DesignationRegion {
    /// Prompt wording of the centroid position, e.g. "upper right".
    pub fn position(&self) -> String {
        let v = match self.centroid_v {
            VerticalBucket::Upper => "upper",
            VerticalBucket::Mid => "mid",
            VerticalBucket::Lower => "lower",
        };
        let h = match self.centroid_h {
            HorizontalBucket::Left => "left",
            HorizontalBucket::Central => "central",
            HorizontalBucket::Right => "right",
        };
        format!("{v} {h}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub primary: SettlementKind,
    pub secondary: Vec<SettlementKind>,
    /// True when no places data was available and the default applied.
    pub fallback: bool,
}

/// Everything the prompt and dataset stages need to know about one tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileFeatures {
    pub tile: TileId,
    pub city: String,
    pub composition: CompositionTable,
    /// Fraction of the tile covered by recognized land use (union across
    /// categories, parking, and classified building footprints).
    pub coverage: f64,
    pub building_coverage: f64,
    pub density_bin: DensityBin,
    pub residential_types: Vec<ResidentialType>,
    pub settlement_primary: SettlementKind,
    pub settlement_secondary: Vec<SettlementKind>,
    pub settlement_fallback: bool,
    pub designation: Option<DesignationRegion>,
}

/// Tag classification map, loaded from a versioned TOML document.
#[derive(Debug, Clone)]
pub struct TagMap {
    pub version: u32,
    landuse: BTreeMap<String, Category>,
    traffic: BTreeMap<String, Category>,
    building_category: BTreeMap<String, Category>,
    building_residential: BTreeMap<String, ResidentialType>,
    roads: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RawTagMap {
    version: u32,
    landuse: BTreeMap<String, String>,
    traffic: BTreeMap<String, String>,
    building_category: BTreeMap<String, String>,
    building_residential: BTreeMap<String, String>,
    roads: BTreeMap<String, String>,
}

impl TagMap {
    /// The map shipped with the repository.
    pub fn builtin() -> TagMap {
        TagMap::from_toml(include_str!("../../../../config/tagmap.toml"))
            .expect("builtin tag map parses")
    }

    pub fn from_toml(text: &str) -> Result<TagMap> {
        let raw: RawTagMap =
            toml::from_str(text).map_err(|e| Error::Invalid(format!("tag map: {e}")))?;
        let cat = |m: BTreeMap<String, String>, ctx: &str| -> Result<BTreeMap<String, Category>> {
            m.into_iter()
                .map(|(k, v)| {
                    Category::from_name(&v)
                        .map(|c| (k, c))
                        .ok_or_else(|| Error::Invalid(format!("{ctx}: unknown category {v:?}")))
                })
                .collect()
        };
        let residential = raw
            .building_residential
            .into_iter()
            .map(|(k, v)| {
                ResidentialType::from_name(&v)
                    .map(|t| (k, t))
                    .ok_or_else(|| {
                        Error::Invalid(format!("building_residential: unknown type {v:?}"))
                    })
            })
            .collect::<Result<_>>()?;
        Ok(TagMap {
            version: raw.version,
            landuse: cat(raw.landuse, "landuse")?,
            traffic: cat(raw.traffic, "traffic")?,
            building_category: cat(raw.building_category, "building_category")?,
            building_residential: residential,
            roads: raw.roads,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<TagMap> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TagMap::from_toml(&text)
    }

    /// Category of a land-use-layer feature, if its tags are recognized.
    pub fn landuse_category(&self, f: &Feature) -> Option<Category> {
        for key in ["landuse", "leisure", "natural"] {
            if let Some(v) = f.tag(key) {
                if let Some(&c) = self.landuse.get(&format!("{key}={v}")) {
                    return Some(c);
                }
            }
        }
        None
    }

    /// Category of a traffic-layer feature (parking areas).
    pub fn traffic_category(&self, f: &Feature) -> Option<Category> {
        for key in ["amenity", "parking"] {
            if let Some(v) = f.tag(key) {
                if let Some(&c) = self.traffic.get(&format!("{key}={v}")) {
                    return Some(c);
                }
            }
        }
        None
    }

    pub fn building_category(&self, f: &Feature) -> Option<Category> {
        f.tag("building")
            .and_then(|v| self.building_category.get(v).copied())
    }

    pub fn building_residential_type(&self, f: &Feature) -> Option<ResidentialType> {
        f.tag("building")
            .and_then(|v| self.building_residential.get(v).copied())
    }

    /// Render class name for a road feature ("primary", "secondary", ...).
    pub fn road_class(&self, f: &Feature) -> Option<&str> {
        f.tag("highway")
            .and_then(|v| self.roads.get(v))
            .map(|s| s.as_str())
    }
}

fn polygons(f: &Feature) -> Option<&PolySet> {
    match &f.geometry {
        Geometry::Polygons(p) => Some(p),
        _ => None,
    }
}

fn category_polys<'a>(
    fc: &'a FeatureCollection,
    classify: impl Fn(&Feature) -> Option<Category> + 'a,
    cat: Category,
) -> Vec<PolySet> {
    fc.features
        .iter()
        .filter(|f| classify(f) == Some(cat))
        .filter_map(polygons)
        .cloned()
        .collect()
}

/// Land-use composition of a tile: per-category area fractions, with
/// overlap inside a category counted once. Parking derives from the traffic
/// layer. Returns the table and the number of features whose classifying
/// tag value was unknown.
pub fn landuse_composition(
    landuse: &FeatureCollection,
    traffic: &FeatureCollection,
    window: &MercBox,
    tags: &TagMap,
) -> (CompositionTable, usize) {
    let tile_area = window.area();
    let mut table = CompositionTable::default();
    let mut unknown = 0;
    for cat in Category::ALL {
        if cat == Category::Parking {
            continue;
        }
        let polys = category_polys(landuse, |f| tags.landuse_category(f), cat);
        if !polys.is_empty() {
            table.bump(cat, (union_area(&polys) / tile_area).min(1.0));
        }
    }
    unknown += landuse
        .features
        .iter()
        .filter(|f| tags.landuse_category(f).is_none())
        .count();

    let parking = category_polys(traffic, |f| tags.traffic_category(f), Category::Parking);
    if !parking.is_empty() {
        table.bump(Category::Parking, (union_area(&parking) / tile_area).min(1.0));
    }
    unknown += traffic
        .features
        .iter()
        .filter(|f| tags.traffic_category(f).is_none())
        .count();

    (table, unknown)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildingMetrics {
    pub coverage: f64,
    pub density_bin: DensityBin,
    pub residential_types: Vec<ResidentialType>,
}

/// Building coverage (union of footprints over tile area), its density bin,
/// and residential building types ranked by footprint area.
pub fn building_metrics(
    buildings: &FeatureCollection,
    window: &MercBox,
    tags: &TagMap,
) -> BuildingMetrics {
    let tile_area = window.area();
    let footprints: Vec<PolySet> = buildings
        .features
        .iter()
        .filter_map(polygons)
        .cloned()
        .collect();
    let coverage = if footprints.is_empty() {
        0.0
    } else {
        (union_area(&footprints) / tile_area).min(1.0)
    };

    let mut by_type: BTreeMap<ResidentialType, f64> = BTreeMap::new();
    for f in &buildings.features {
        if let (Some(t), Some(p)) = (tags.building_residential_type(f), polygons(f)) {
            *by_type.entry(t).or_insert(0.0) += p.area();
        }
    }
    let mut ranked: Vec<(ResidentialType, f64)> = by_type
        .into_iter()
        .filter(|(_, a)| *a > 0.0)
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.name().cmp(b.0.name()))
    });

    BuildingMetrics {
        coverage,
        density_bin: DensityBin::from_coverage(coverage),
        residential_types: ranked.into_iter().map(|(t, _)| t).collect(),
    }
}

/// Primary settlement type by area coverage, plus secondary types covering
/// strictly more than 35% of the tile. Falls back to "city" when no places
/// data intersects the tile.
pub fn settlement_type(places: &FeatureCollection, window: &MercBox) -> Settlement {
    let tile_area = window.area();
    let mut coverage: Vec<(SettlementKind, f64)> = Vec::new();
    for kind in SettlementKind::ALL {
        let polys: Vec<PolySet> = places
            .features
            .iter()
            .filter(|f| f.tag("place").and_then(SettlementKind::from_tag) == Some(kind))
            .filter_map(polygons)
            .cloned()
            .collect();
        if !polys.is_empty() {
            coverage.push((kind, union_area(&polys) / tile_area));
        }
    }
    if coverage.is_empty() {
        return Settlement {
            primary: SettlementKind::City,
            secondary: Vec::new(),
            fallback: true,
        };
    }
    coverage.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.name().cmp(b.0.name()))
    });
    let primary = coverage[0].0;
    let secondary = coverage[1..]
        .iter()
        .filter(|(_, c)| *c > SECONDARY_SETTLEMENT_MIN)
        .map(|(k, _)| *k)
        .collect();
    Settlement {
        primary,
        secondary,
        fallback: false,
    }
}

/// Completes the composition with building classes: classified footprints
/// standing on land with no recognized land-use tag contribute their
/// category's area. Never decreases any category.
pub fn landuse_fallback_from_buildings(
    composition: &CompositionTable,
    landuse: &FeatureCollection,
    buildings: &FeatureCollection,
    window: &MercBox,
    tags: &TagMap,
) -> CompositionTable {
    let tile_area = window.area();
    let recognized: Vec<PolySet> = landuse
        .features
        .iter()
        .filter(|f| tags.landuse_category(f).is_some())
        .filter_map(polygons)
        .cloned()
        .collect();
    let base_area = union_area(&recognized);

    let mut out = composition.clone();
    for cat in Category::ALL {
        let class_polys = category_polys(buildings, |f| tags.building_category(f), cat);
        if class_polys.is_empty() {
            continue;
        }
        // area(B_cat \ recognized) = area(recognized U B_cat) - area(recognized)
        let mut combined = recognized.clone();
        combined.extend(class_polys);
        let extra = (union_area(&combined) - base_area).max(0.0);
        out.bump(cat, extra / tile_area);
    }
    out
}

/// Categories that may be shaded as a designation region.
const DESIGNATABLE: [Category; 7] = [
    Category::Residential,
    Category::Commercial,
    Category::Industrial,
    Category::Recreational,
    Category::Farmland,
    Category::Forest,
    Category::Parking,
];

/// Picks one spatially concentrated land-use block with a moderate share
/// (10%-40% of the tile), or `None` when no category qualifies.
///
/// Concentration is tested on a rasterized category mask: the largest
/// 4-connected component must hold at least 60% of the category's pixels.
/// The centroid of that component is bucketed into thirds on each axis,
/// with "upper" at the geographic north. Among qualifying categories one is
/// picked uniformly by the seeded generator.
pub fn designation_candidate(
    composition: &CompositionTable,
    landuse: &FeatureCollection,
    window: &MercBox,
    tags: &TagMap,
    seed: u64,
) -> Option<DesignationRegion> {
    let mut candidates = Vec::new();
    for cat in DESIGNATABLE {
        let share = composition.share(cat);
        if !(DESIGNATION_MIN_SHARE..=DESIGNATION_MAX_SHARE).contains(&share) {
            continue;
        }
        let polys = category_polys(landuse, |f| tags.landuse_category(f), cat);
        if polys.is_empty() {
            continue;
        }
        let mask = rasterize_mask(&polys, window, CONCENTRATION_RES);
        let Some(comps) = mask_components(&mask, CONCENTRATION_RES) else {
            continue;
        };
        if (comps.largest as f64) < CONCENTRATION_MIN * comps.total as f64 {
            continue;
        }
        let (cx, cy) = comps.largest_centroid;
        let centroid_h = if cx < 1.0 / 3.0 {
            HorizontalBucket::Left
        } else if cx < 2.0 / 3.0 {
            HorizontalBucket::Central
        } else {
            HorizontalBucket::Right
        };
        let centroid_v = if cy < 1.0 / 3.0 {
            VerticalBucket::Upper
        } else if cy < 2.0 / 3.0 {
            VerticalBucket::Mid
        } else {
            VerticalBucket::Lower
        };
        candidates.push(DesignationRegion {
            category: cat,
            share,
            centroid_h,
            centroid_v,
            rings: polys.into_iter().flat_map(|p| p.rings).collect(),
            color: cat.fill_color_name()?.to_string(),
        });
    }
    if candidates.is_empty() {
        return None;
    }
    let mut rng = Pcg32::new(seed);
    let idx = rng.gen_range(candidates.len());
    Some(candidates.swap_remove(idx))
}

#[derive(Debug, Clone, Copy)]
pub struct AssembleOptions<'a> {
    pub seed: u64,
    /// When false (the base conditioning variant) no designation is computed.
    pub include_designation: bool,
    pub tags: &'a TagMap,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AssembleReport {
    pub unknown_tag_features: usize,
}

/// Computes all tile semantics from unclipped layers over an explicit
/// window (the tile bbox, or a shifted window during augmentation).
pub fn assemble_tile_features(
    layers: &LayerSet,
    tile: TileId,
    bbox: &GeoBBox,
    city: &str,
    opts: &AssembleOptions,
) -> (TileFeatures, AssembleReport) {
    let clipped = layers.clip(bbox);
    let window = super::bbox_to_merc(bbox);

    let (raw_composition, unknown) =
        landuse_composition(&clipped.landuse, &clipped.traffic, &window, opts.tags);
    let composition = landuse_fallback_from_buildings(
        &raw_composition,
        &clipped.landuse,
        &clipped.buildings,
        &window,
        opts.tags,
    );
    let buildings = building_metrics(&clipped.buildings, &window, opts.tags);
    let settlement = settlement_type(&clipped.places, &window);

    // Recognized coverage: categorized land use, parking, and classified
    // building footprints, as one union.
    let mut covered: Vec<PolySet> = clipped
        .landuse
        .features
        .iter()
        .filter(|f| opts.tags.landuse_category(f).is_some())
        .filter_map(polygons)
        .cloned()
        .collect();
    covered.extend(category_polys(
        &clipped.traffic,
        |f| opts.tags.traffic_category(f),
        Category::Parking,
    ));
    covered.extend(
        clipped
            .buildings
            .features
            .iter()
            .filter(|f| opts.tags.building_category(f).is_some())
            .filter_map(polygons)
            .cloned(),
    );
    let coverage = if covered.is_empty() {
        0.0
    } else {
        (union_area(&covered) / window.area()).min(1.0)
    };

    let designation = if opts.include_designation {
        designation_candidate(&composition, &clipped.landuse, &window, opts.tags, opts.seed)
    } else {
        None
    };

    let features = TileFeatures {
        tile,
        city: city.to_string(),
        composition,
        coverage,
        building_coverage: buildings.coverage,
        density_bin: buildings.density_bin,
        residential_types: buildings.residential_types,
        settlement_primary: settlement.primary,
        settlement_secondary: settlement.secondary,
        settlement_fallback: settlement.fallback,
        designation,
    };
    (features, AssembleReport { unknown_tag_features: unknown })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Crs, Layer};

    const WINDOW: MercBox = MercBox {
        x0: 0.0,
        y0: 0.0,
        x1: 100.0,
        y1: 100.0,
    };

    fn rect(fx0: f64, fy0: f64, fx1: f64, fy1: f64) -> PolySet {
        PolySet {
            rings: vec![vec![
                (fx0 * 100.0, fy0 * 100.0),
                (fx1 * 100.0, fy0 * 100.0),
                (fx1 * 100.0, fy1 * 100.0),
                (fx0 * 100.0, fy1 * 100.0),
            ]],
        }
    }

    fn feature(tag: (&str, &str), poly: PolySet) -> Feature {
        Feature {
            geometry: Geometry::Polygons(poly),
            tags: [(tag.0.to_string(), tag.1.to_string())].into_iter().collect(),
        }
    }

    fn collection(layer: Layer, features: Vec<Feature>) -> FeatureCollection {
        FeatureCollection {
            layer,
            crs: Crs::Mercator,
            features,
            report: Default::default(),
        }
    }

    fn tagmap() -> TagMap {
        TagMap::builtin()
    }

    #[test]
    fn composition_matches_rect_fractions() {
        let landuse = collection(
            Layer::Landuse,
            vec![
                feature(("landuse", "residential"), rect(0.0, 0.0, 0.85, 1.0)),
                feature(("landuse", "commercial"), rect(0.85, 0.0, 0.95, 1.0)),
            ],
        );
        let traffic = collection(Layer::Traffic, vec![]);
        let (table, unknown) = landuse_composition(&landuse, &traffic, &WINDOW, &tagmap());
        assert!((table.share(Category::Residential) - 0.85).abs() < 1e-9);
        assert!((table.share(Category::Commercial) - 0.10).abs() < 1e-9);
        assert_eq!(unknown, 0);
    }

    #[test]
    fn empty_collections_give_zero_table() {
        let (table, _) = landuse_composition(
            &collection(Layer::Landuse, vec![]),
            &collection(Layer::Traffic, vec![]),
            &WINDOW,
            &tagmap(),
        );
        assert!(table.proportions.is_empty());
    }

    #[test]
    fn overlapping_same_category_counts_union() {
        // Two 60%-wide strips overlapping in a 20% band: union 1.0 of area.
        let landuse = collection(
            Layer::Landuse,
            vec![
                feature(("landuse", "residential"), rect(0.0, 0.0, 0.6, 1.0)),
                feature(("landuse", "residential"), rect(0.4, 0.0, 1.0, 1.0)),
            ],
        );
        let traffic = collection(Layer::Traffic, vec![]);
        let (table, _) = landuse_composition(&landuse, &traffic, &WINDOW, &tagmap());
        assert!((table.share(Category::Residential) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_tags_ignored_and_counted() {
        let landuse = collection(
            Layer::Landuse,
            vec![
                feature(("landuse", "residential"), rect(0.0, 0.0, 0.5, 1.0)),
                feature(("landuse", "quarry"), rect(0.5, 0.0, 1.0, 1.0)),
            ],
        );
        let traffic = collection(Layer::Traffic, vec![]);
        let (table, unknown) = landuse_composition(&landuse, &traffic, &WINDOW, &tagmap());
        assert_eq!(unknown, 1);
        assert!((table.share(Category::Residential) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn parking_comes_from_traffic_layer() {
        let traffic = collection(
            Layer::Traffic,
            vec![feature(("amenity", "parking"), rect(0.0, 0.0, 0.2, 1.0))],
        );
        let (table, _) = landuse_composition(
            &collection(Layer::Landuse, vec![]),
            &traffic,
            &WINDOW,
            &tagmap(),
        );
        assert!((table.share(Category::Parking) - 0.2).abs() < 1e-9);
    }

    #[test]
    fn density_bins_have_inclusive_thresholds() {
        assert_eq!(DensityBin::from_coverage(0.32), DensityBin::High);
        assert_eq!(DensityBin::from_coverage(0.30), DensityBin::High);
        assert_eq!(DensityBin::from_coverage(0.15), DensityBin::Medium);
        assert_eq!(DensityBin::from_coverage(0.03), DensityBin::Low);
        assert_eq!(DensityBin::from_coverage(0.02), DensityBin::None);
    }

    #[test]
    fn building_metrics_rank_residential_types() {
        let buildings = collection(
            Layer::Buildings,
            vec![
                feature(("building", "apartments"), rect(0.0, 0.0, 0.2, 0.5)),
                feature(("building", "house"), rect(0.3, 0.0, 0.4, 0.5)),
                feature(("building", "terrace"), rect(0.5, 0.0, 0.55, 0.5)),
            ],
        );
        let m = building_metrics(&buildings, &WINDOW, &tagmap());
        assert!((m.coverage - 0.175).abs() < 1e-9);
        assert_eq!(m.density_bin, DensityBin::Medium);
        assert_eq!(
            m.residential_types,
            vec![
                ResidentialType::ApartmentComplexes,
                ResidentialType::SingleFamilyHomes,
                ResidentialType::Townhouses
            ]
        );
    }

    #[test]
    fn settlement_primary_and_secondary() {
        let places = collection(
            Layer::Places,
            vec![
                feature(("place", "city"), rect(0.0, 0.0, 0.8, 1.0)),
                feature(("place", "town"), rect(0.6, 0.0, 1.0, 1.0)),
            ],
        );
        let s = settlement_type(&places, &WINDOW);
        assert_eq!(s.primary, SettlementKind::City);
        assert_eq!(s.secondary, vec![SettlementKind::Town]);
        assert!(!s.fallback);
    }

    #[test]
    fn settlement_secondary_threshold_is_strict() {
        let places = collection(
            Layer::Places,
            vec![
                feature(("place", "city"), rect(0.0, 0.0, 0.8, 1.0)),
                feature(("place", "town"), rect(0.65, 0.0, 1.0, 1.0)),
            ],
        );
        let s = settlement_type(&places, &WINDOW);
        // town covers exactly 0.35: excluded under strict >.
        assert!(s.secondary.is_empty());
    }

    #[test]
    fn settlement_fallback_when_no_places() {
        let s = settlement_type(&collection(Layer::Places, vec![]), &WINDOW);
        assert_eq!(s.primary, SettlementKind::City);
        assert!(s.fallback);
    }

    #[test]
    fn village_only_has_no_secondary() {
        let places = collection(
            Layer::Places,
            vec![feature(("place", "village"), rect(0.0, 0.0, 1.0, 1.0))],
        );
        let s = settlement_type(&places, &WINDOW);
        assert_eq!(s.primary, SettlementKind::Village);
        assert!(s.secondary.is_empty());
    }

    #[test]
    fn fallback_adds_classified_footprints_on_untagged_land() {
        // Recognized land use covers the left half; residential-tagged
        // buildings cover 20% of the tile, entirely on the untagged right half.
        let landuse = collection(
            Layer::Landuse,
            vec![feature(("landuse", "commercial"), rect(0.0, 0.0, 0.5, 1.0))],
        );
        let buildings = collection(
            Layer::Buildings,
            vec![feature(("building", "house"), rect(0.6, 0.0, 0.8, 1.0))],
        );
        let (comp, _) = landuse_composition(
            &landuse,
            &collection(Layer::Traffic, vec![]),
            &WINDOW,
            &tagmap(),
        );
        assert!((comp.share(Category::Residential) - 0.0).abs() < 1e-12);
        let out =
            landuse_fallback_from_buildings(&comp, &landuse, &buildings, &WINDOW, &tagmap());
        assert!((out.share(Category::Residential) - 0.2).abs() < 1e-9);
        assert!((out.share(Category::Commercial) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn fallback_ignores_footprints_on_recognized_land() {
        let landuse = collection(
            Layer::Landuse,
            vec![feature(("landuse", "commercial"), rect(0.0, 0.0, 0.5, 1.0))],
        );
        // Building entirely inside the recognized commercial area.
        let buildings = collection(
            Layer::Buildings,
            vec![feature(("building", "house"), rect(0.1, 0.1, 0.3, 0.5))],
        );
        let (comp, _) = landuse_composition(
            &landuse,
            &collection(Layer::Traffic, vec![]),
            &WINDOW,
            &tagmap(),
        );
        let out =
            landuse_fallback_from_buildings(&comp, &landuse, &buildings, &WINDOW, &tagmap());
        assert_eq!(out.share(Category::Residential), 0.0);
    }

    #[test]
    fn fallback_without_class_tags_is_identity() {
        let landuse = collection(
            Layer::Landuse,
            vec![feature(("landuse", "commercial"), rect(0.0, 0.0, 0.5, 1.0))],
        );
        let buildings = collection(
            Layer::Buildings,
            vec![feature(("building", "yes"), rect(0.6, 0.0, 0.8, 1.0))],
        );
        let (comp, _) = landuse_composition(
            &landuse,
            &collection(Layer::Traffic, vec![]),
            &WINDOW,
            &tagmap(),
        );
        let out =
            landuse_fallback_from_buildings(&comp, &landuse, &buildings, &WINDOW, &tagmap());
        assert_eq!(out, comp);
    }

    #[test]
    fn designation_picks_concentrated_moderate_block() {
        // Industrial 25% in one blob in the north-east corner.
        let landuse = collection(
            Layer::Landuse,
            vec![
                feature(("landuse", "industrial"), rect(0.5, 0.5, 1.0, 1.0)),
                feature(("landuse", "residential"), rect(0.0, 0.0, 1.0, 0.45)),
            ],
        );
        let traffic = collection(Layer::Traffic, vec![]);
        let (comp, _) = landuse_composition(&landuse, &traffic, &WINDOW, &tagmap());
        let d = designation_candidate(&comp, &landuse, &WINDOW, &tagmap(), 1).unwrap();
        assert_eq!(d.category, Category::Industrial);
        assert_eq!(d.centroid_h, HorizontalBucket::Right);
        // Mercator y1 is north; the blob occupies fy in [0.5, 1.0] = upper.
        assert_eq!(d.centroid_v, VerticalBucket::Upper);
        assert_eq!(d.color, "purple");
    }

    #[test]
    fn designation_excludes_dominant_share() {
        let landuse = collection(
            Layer::Landuse,
            vec![feature(("landuse", "residential"), rect(0.0, 0.0, 0.85, 1.0))],
        );
        let traffic = collection(Layer::Traffic, vec![]);
        let (comp, _) = landuse_composition(&landuse, &traffic, &WINDOW, &tagmap());
        assert!(designation_candidate(&comp, &landuse, &WINDOW, &tagmap(), 1).is_none());
    }

    #[test]
    fn designation_requires_concentration() {
        // Park split into two far blobs of 6% each: share qualifies (12%)
        // but no component holds 60% of the area.
        let landuse = collection(
            Layer::Landuse,
            vec![
                feature(("leisure", "park"), rect(0.0, 0.0, 0.2, 0.3)),
                feature(("leisure", "park"), rect(0.8, 0.7, 1.0, 1.0)),
            ],
        );
        let traffic = collection(Layer::Traffic, vec![]);
        let (comp, _) = landuse_composition(&landuse, &traffic, &WINDOW, &tagmap());
        assert!((comp.share(Category::Recreational) - 0.12).abs() < 1e-9);
        assert!(designation_candidate(&comp, &landuse, &WINDOW, &tagmap(), 1).is_none());
    }

    #[test]
    fn designation_is_deterministic_under_seed() {
        let landuse = collection(
            Layer::Landuse,
            vec![
                feature(("landuse", "industrial"), rect(0.0, 0.0, 0.3, 0.5)),
                feature(("landuse", "forest"), rect(0.6, 0.5, 1.0, 1.0)),
            ],
        );
        let traffic = collection(Layer::Traffic, vec![]);
        let (comp, _) = landuse_composition(&landuse, &traffic, &WINDOW, &tagmap());
        let a = designation_candidate(&comp, &landuse, &WINDOW, &tagmap(), 42);
        let b = designation_candidate(&comp, &landuse, &WINDOW, &tagmap(), 42);
        assert_eq!(a, b);
    }

    #[test]
    fn ranked_filters_and_orders() {
        let mut table = CompositionTable::default();
        table.bump(Category::Residential, 0.45);
        table.bump(Category::Commercial, 0.20);
        table.bump(Category::Forest, 0.15);
        table.bump(Category::Water, 0.03);
        let ranked = table.ranked(0.05);
        assert_eq!(
            ranked.iter().map(|(c, _)| *c).collect::<Vec<_>>(),
            vec![Category::Residential, Category::Commercial, Category::Forest]
        );
    }
}
