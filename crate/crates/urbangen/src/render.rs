//! Constraint-image rasterization.
//!
//! Renders the fixed site elements of a tile (waterways, railways, roads by
//! class, and optionally one shaded land-use designation) into a square RGB
//! raster on a black background. No anti-aliasing: every pixel is either
//! background or an exact palette color, and identical inputs produce
//! byte-identical images.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{rasterize_mask, MercBox, PolySet};
use crate::imgio;
use crate::ingest::{bbox_to_merc, Category, DesignationRegion, Geometry, LayerSet, TagMap};
use crate::tensor::ImageTensor;
use crate::tiles::{GeoBBox, TileId};

pub const BACKGROUND: [u8; 3] = [0, 0, 0];
pub const WATER_COLOR: [u8; 3] = [74, 144, 217];
pub const RAILWAY_COLOR: [u8; 3] = [128, 128, 128];
pub const ROAD_PRIMARY_COLOR: [u8; 3] = [255, 140, 0];
pub const ROAD_SECONDARY_COLOR: [u8; 3] = [255, 200, 0];
pub const ROAD_TERTIARY_COLOR: [u8; 3] = [200, 200, 0];
pub const ROAD_RESIDENTIAL_COLOR: [u8; 3] = [150, 150, 150];

/// Conditioning variant: `Base` carries only roads, rail, and water;
/// `Landuse` additionally shades one designated land-use block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    Landuse,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Landuse => "landuse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RoadClass {
    Residential,
    Tertiary,
    Secondary,
    Primary,
}

impl RoadClass {
    fn from_name(name: &str) -> Option<RoadClass> {
        match name {
            "primary" => Some(RoadClass::Primary),
            "secondary" => Some(RoadClass::Secondary),
            "tertiary" => Some(RoadClass::Tertiary),
            "residential" => Some(RoadClass::Residential),
            _ => None,
        }
    }

    fn color(&self) -> [u8; 3] {
        match self {
            RoadClass::Primary => ROAD_PRIMARY_COLOR,
            RoadClass::Secondary => ROAD_SECONDARY_COLOR,
            RoadClass::Tertiary => ROAD_TERTIARY_COLOR,
            RoadClass::Residential => ROAD_RESIDENTIAL_COLOR,
        }
    }

    /// Stroke width in pixels at the 512 reference size.
    fn base_width(&self) -> u32 {
        match self {
            RoadClass::Primary => 5,
            RoadClass::Secondary => 4,
            RoadClass::Tertiary => 3,
            RoadClass::Residential => 2,
        }
    }
}

const RAILWAY_BASE_WIDTH: u32 = 2;
const WATER_LINE_BASE_WIDTH: u32 = 3;

/// Fill color of a land-use category, if it can be shaded.
pub fn fill_color(cat: Category) -> Option<[u8; 3]> {
    match cat {
        Category::Residential => Some([220, 60, 60]),
        Category::Commercial => Some([60, 60, 220]),
        Category::Industrial => Some([150, 60, 150]),
        Category::Recreational => Some([60, 180, 60]),
        Category::Parking => Some([110, 110, 60]),
        Category::Farmland => Some([180, 140, 60]),
        Category::Forest => Some([20, 120, 20]),
        Category::Water => None,
    }
}

const PALETTE_KEYS: [&str; 13] = [
    "waterway",
    "railway",
    "primary",
    "secondary",
    "tertiary",
    "residential-road",
    "residential",
    "commercial",
    "industrial",
    "park",
    "parking",
    "farmland",
    "forest",
];

/// Stable color of a named layer or class.
pub fn palette_lookup(key: &str) -> Result<[u8; 3]> {
    let rgb = match key {
        "waterway" => WATER_COLOR,
        "railway" => RAILWAY_COLOR,
        "primary" => ROAD_PRIMARY_COLOR,
        "secondary" => ROAD_SECONDARY_COLOR,
        "tertiary" => ROAD_TERTIARY_COLOR,
        "residential-road" => ROAD_RESIDENTIAL_COLOR,
        "residential" => fill_color(Category::Residential).unwrap(),
        "commercial" => fill_color(Category::Commercial).unwrap(),
        "industrial" => fill_color(Category::Industrial).unwrap(),
        "park" => fill_color(Category::Recreational).unwrap(),
        "parking" => fill_color(Category::Parking).unwrap(),
        "farmland" => fill_color(Category::Farmland).unwrap(),
        "forest" => fill_color(Category::Forest).unwrap(),
        _ => {
            return Err(Error::Invalid(format!(
                "unknown palette key {key:?}; known keys: {}",
                PALETTE_KEYS.join(", ")
            )))
        }
    };
    Ok(rgb)
}

/// One layer pass, drawn back to front.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawPass {
    DesignationFill,
    Waterways,
    Railways,
    Roads,
}

#[derive(Debug, Clone)]
pub struct RenderSpec {
    pub raster_size: u32,
    pub draw_order: Vec<DrawPass>,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec::with_size(512)
    }
}

impl RenderSpec {
    pub fn with_size(raster_size: u32) -> Self {
        RenderSpec {
            raster_size,
            draw_order: vec![
                DrawPass::DesignationFill,
                DrawPass::Waterways,
                DrawPass::Railways,
                DrawPass::Roads,
            ],
        }
    }

    /// Stroke widths scale linearly with raster size from the 512 reference.
    fn scaled_width(&self, base: u32) -> u32 {
        (((base * self.raster_size) as f64 / 512.0).round() as u32).max(1)
    }
}

/// A rendered constraint image.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlImage {
    pub size: u32,
    pub variant: Variant,
    pub tile: TileId,
    /// Row-major RGB, row 0 at the north edge.
    pub pixels: Vec<u8>,
}

impl ControlImage {
    fn blank(size: u32, variant: Variant, tile: TileId) -> Self {
        ControlImage {
            size,
            variant,
            tile,
            pixels: vec![0u8; (size * size * 3) as usize],
        }
    }

    fn put(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        let s = self.size as i64;
        if x < 0 || y < 0 || x >= s || y >= s {
            return;
        }
        let i = ((y * s + x) * 3) as usize;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Number of pixels of an exact color.
    pub fn count_color(&self, rgb: [u8; 3]) -> usize {
        self.pixels.chunks_exact(3).filter(|p| *p == rgb).count()
    }

    /// The distinct colors present.
    pub fn colors(&self) -> Vec<[u8; 3]> {
        let mut seen: Vec<[u8; 3]> = Vec::new();
        for p in self.pixels.chunks_exact(3) {
            let c = [p[0], p[1], p[2]];
            if !seen.contains(&c) {
                seen.push(c);
            }
        }
        seen
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        imgio::save_rgb(path, self.size, self.size, &self.pixels)
    }

    /// Control tensor: RGB normalized to [0, 1], nearest-neighbor resampled
    /// to the model resolution.
    pub fn to_tensor(&self, height: usize, width: usize) -> ImageTensor {
        let mut t = ImageTensor::zeros(3, height, width);
        let s = self.size as usize;
        for y in 0..height {
            for x in 0..width {
                let sy = y * s / height;
                let sx = x * s / width;
                let base = (sy * s + sx) * 3;
                for c in 0..3 {
                    *t.at_mut(c, y, x) = self.pixels[base + c] as f64 / 255.0;
                }
            }
        }
        t
    }
}

/// PNG name for a control image: `{city}_{z}_{x}_{y}_{variant}[_{shift}].png`.
pub fn control_filename(city: &str, tile: TileId, variant: Variant, shift: (f64, f64)) -> String {
    let mut name = format!(
        "{}_{}_{}_{}_{}",
        city,
        tile.zoom,
        tile.x,
        tile.y,
        variant.name()
    );
    if shift != (0.0, 0.0) {
        name.push_str(&format!("_sx{:+.2}sy{:+.2}", shift.0, shift.1));
    }
    name.push_str(".png");
    name
}

/// Renders the constraint image for one window.
///
/// Layers must already be clipped to `bbox` (Mercator space); geometry
/// escaping the window is a pipeline bug and asserts. Passes draw back to
/// front: designation fill (Landuse variant only), waterways, railways,
/// then roads minor to major.
pub fn render_control(
    clipped: &LayerSet,
    bbox: &GeoBBox,
    spec: &RenderSpec,
    tags: &TagMap,
    variant: Variant,
    designation: Option<&DesignationRegion>,
    tile: TileId,
) -> ControlImage {
    let window = bbox_to_merc(bbox);
    let mut img = ControlImage::blank(spec.raster_size, variant, tile);
    for pass in &spec.draw_order {
        match pass {
            DrawPass::DesignationFill => {
                if variant == Variant::Landuse {
                    if let Some(d) = designation {
                        let polys = PolySet { rings: d.rings.clone() };
                        let color = fill_color(d.category)
                            .expect("designation categories always have a fill");
                        fill_polygons(&mut img, std::slice::from_ref(&polys), &window, color);
                    }
                }
            }
            DrawPass::Waterways => {
                let width = spec.scaled_width(WATER_LINE_BASE_WIDTH);
                for f in &clipped.waterways.features {
                    match &f.geometry {
                        Geometry::Polygons(p) => fill_polygons(
                            &mut img,
                            std::slice::from_ref(p),
                            &window,
                            WATER_COLOR,
                        ),
                        Geometry::Lines(lines) => {
                            for line in lines {
                                stroke_line(&mut img, line, &window, WATER_COLOR, width);
                            }
                        }
                        Geometry::Point(_) => {}
                    }
                }
            }
            DrawPass::Railways => {
                let width = spec.scaled_width(RAILWAY_BASE_WIDTH);
                for f in &clipped.railways.features {
                    if let Geometry::Lines(lines) = &f.geometry {
                        for line in lines {
                            stroke_line(&mut img, line, &window, RAILWAY_COLOR, width);
                        }
                    }
                }
            }
            DrawPass::Roads => {
                for class in [
                    RoadClass::Residential,
                    RoadClass::Tertiary,
                    RoadClass::Secondary,
                    RoadClass::Primary,
                ] {
                    let width = spec.scaled_width(class.base_width());
                    for f in &clipped.roads.features {
                        let matches = tags
                            .road_class(f)
                            .and_then(RoadClass::from_name)
                            == Some(class);
                        if !matches {
                            continue;
                        }
                        if let Geometry::Lines(lines) = &f.geometry {
                            for line in lines {
                                stroke_line(&mut img, line, &window, class.color(), width);
                            }
                        }
                    }
                }
            }
        }
    }
    img
}

fn fill_polygons(img: &mut ControlImage, polys: &[PolySet], window: &MercBox, rgb: [u8; 3]) {
    let res = img.size as usize;
    let mask = rasterize_mask(polys, window, res);
    for (i, &on) in mask.iter().enumerate() {
        if on {
            let y = (i / res) as i64;
            let x = (i % res) as i64;
            img.put(x, y, rgb);
        }
    }
}

/// Bresenham stroke with a square stamp of the given width.
fn stroke_line(
    img: &mut ControlImage,
    line: &[(f64, f64)],
    window: &MercBox,
    rgb: [u8; 3],
    width: u32,
) {
    let size = img.size as f64;
    let to_px = |p: (f64, f64)| -> (i64, i64) {
        let fx = (p.0 - window.x0) / window.width();
        let fy = (window.y1 - p.1) / window.height();
        assert!(
            (-1e-6..=1.0 + 1e-6).contains(&fx) && (-1e-6..=1.0 + 1e-6).contains(&fy),
            "geometry escaped the render window after clipping: {p:?}"
        );
        (
            (fx * size - 0.5).round() as i64,
            (fy * size - 0.5).round() as i64,
        )
    };
    let lo = (width as i64 - 1) / 2;
    let hi = width as i64 / 2;
    let mut stamp = |x: i64, y: i64| {
        for dy in -lo..=hi {
            for dx in -lo..=hi {
                img.put(x + dx, y + dy, rgb);
            }
        }
    };
    for w in line.windows(2) {
        let (x0, y0) = to_px(w[0]);
        let (x1, y1) = to_px(w[1]);
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        let (mut x, mut y) = (x0, y0);
        loop {
            stamp(x, y);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Crs, Feature, FeatureCollection, Layer};
    use std::collections::BTreeMap;

    fn tile() -> TileId {
        TileId { zoom: 16, x: 16815, y: 24357 }
    }

    fn bbox() -> GeoBBox {
        crate::tiles::tile_to_bbox(tile())
    }

    fn empty_layers() -> LayerSet {
        LayerSet {
            landuse: FeatureCollection::empty(Layer::Landuse),
            roads: FeatureCollection::empty(Layer::Roads),
            railways: FeatureCollection::empty(Layer::Railways),
            waterways: FeatureCollection::empty(Layer::Waterways),
            buildings: FeatureCollection::empty(Layer::Buildings),
            places: FeatureCollection::empty(Layer::Places),
            traffic: FeatureCollection::empty(Layer::Traffic),
        }
    }

    fn merc_feature(geometry: Geometry, tags: &[(&str, &str)]) -> Feature {
        Feature {
            geometry,
            tags: tags
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    fn window() -> MercBox {
        bbox_to_merc(&bbox())
    }

    #[test]
    fn empty_layers_render_black() {
        let spec = RenderSpec::with_size(64);
        let img = render_control(
            &empty_layers(),
            &bbox(),
            &spec,
            &TagMap::builtin(),
            Variant::Base,
            None,
            tile(),
        );
        assert!(img.pixels.iter().all(|&b| b == 0));
    }

    #[test]
    fn horizontal_road_paints_band_of_class_width() {
        let w = window();
        let ymid = (w.y0 + w.y1) / 2.0;
        let road = merc_feature(
            Geometry::Lines(vec![vec![(w.x0, ymid), (w.x1, ymid)]]),
            &[("highway", "primary")],
        );
        let mut layers = empty_layers();
        layers.roads = FeatureCollection {
            layer: Layer::Roads,
            crs: Crs::Mercator,
            features: vec![road],
            report: Default::default(),
        };
        let spec = RenderSpec::with_size(512);
        let img = render_control(
            &layers,
            &bbox(),
            &spec,
            &TagMap::builtin(),
            Variant::Base,
            None,
            tile(),
        );
        let painted = img.count_color(ROAD_PRIMARY_COLOR);
        // 5 px wide, 512 long.
        assert_eq!(painted, 5 * 512, "painted {painted}");
        let others: Vec<_> = img
            .colors()
            .into_iter()
            .filter(|&c| c != BACKGROUND && c != ROAD_PRIMARY_COLOR)
            .collect();
        assert!(others.is_empty(), "unexpected colors {others:?}");
    }

    #[test]
    fn polyline_pixel_count_at_least_pixel_length() {
        let w = window();
        let line = vec![
            (w.x0 + 0.1 * w.width(), w.y0 + 0.2 * w.height()),
            (w.x0 + 0.9 * w.width(), w.y0 + 0.7 * w.height()),
        ];
        let rail = merc_feature(Geometry::Lines(vec![line]), &[("railway", "rail")]);
        let mut layers = empty_layers();
        layers.railways = FeatureCollection {
            layer: Layer::Railways,
            crs: Crs::Mercator,
            features: vec![rail],
            report: Default::default(),
        };
        let spec = RenderSpec::with_size(256);
        let img = render_control(
            &layers,
            &bbox(),
            &spec,
            &TagMap::builtin(),
            Variant::Base,
            None,
            tile(),
        );
        // Pixel length of the segment: max(|dx|, |dy|) in pixels.
        let len_px = (0.8f64 * 256.0).max(0.5 * 256.0);
        assert!(img.count_color(RAILWAY_COLOR) as f64 >= len_px);
    }

    #[test]
    fn designation_shading_matches_vector_share() {
        let w = window();
        // A block covering exactly 25% of the window.
        let ring = vec![
            (w.x0 + 0.25 * w.width(), w.y0 + 0.25 * w.height()),
            (w.x0 + 0.75 * w.width(), w.y0 + 0.25 * w.height()),
            (w.x0 + 0.75 * w.width(), w.y0 + 0.75 * w.height()),
            (w.x0 + 0.25 * w.width(), w.y0 + 0.75 * w.height()),
        ];
        let d = DesignationRegion {
            category: Category::Industrial,
            share: 0.25,
            centroid_h: crate::ingest::HorizontalBucket::Central,
            centroid_v: crate::ingest::VerticalBucket::Mid,
            rings: vec![ring],
            color: "purple".into(),
        };
        let spec = RenderSpec::with_size(512);
        let img = render_control(
            &empty_layers(),
            &bbox(),
            &spec,
            &TagMap::builtin(),
            Variant::Landuse,
            Some(&d),
            tile(),
        );
        let frac = img.count_color(fill_color(Category::Industrial).unwrap()) as f64
            / (512.0 * 512.0);
        assert!((frac - 0.25).abs() <= 0.02, "fraction {frac}");
    }

    #[test]
    fn base_variant_ignores_designation() {
        let w = window();
        let ring = vec![
            (w.x0, w.y0),
            (w.x1, w.y0),
            (w.x1, w.y1),
            (w.x0, w.y1),
        ];
        let d = DesignationRegion {
            category: Category::Residential,
            share: 0.3,
            centroid_h: crate::ingest::HorizontalBucket::Central,
            centroid_v: crate::ingest::VerticalBucket::Mid,
            rings: vec![ring],
            color: "red".into(),
        };
        let img = render_control(
            &empty_layers(),
            &bbox(),
            &RenderSpec::with_size(64),
            &TagMap::builtin(),
            Variant::Base,
            Some(&d),
            tile(),
        );
        assert!(img.pixels.iter().all(|&b| b == 0));
    }

    #[test]
    fn rendering_is_deterministic() {
        let w = window();
        let road = merc_feature(
            Geometry::Lines(vec![vec![
                (w.x0 + 0.1 * w.width(), w.y0 + 0.4 * w.height()),
                (w.x0 + 0.8 * w.width(), w.y0 + 0.9 * w.height()),
            ]]),
            &[("highway", "residential")],
        );
        let mut layers = empty_layers();
        layers.roads = FeatureCollection {
            layer: Layer::Roads,
            crs: Crs::Mercator,
            features: vec![road],
            report: Default::default(),
        };
        let spec = RenderSpec::with_size(128);
        let render = || {
            render_control(
                &layers,
                &bbox(),
                &spec,
                &TagMap::builtin(),
                Variant::Base,
                None,
                tile(),
            )
        };
        assert_eq!(render().pixels, render().pixels);
    }

    #[test]
    fn palette_lookup_known_values() {
        assert_eq!(palette_lookup("waterway").unwrap(), [74, 144, 217]);
        assert_eq!(palette_lookup("primary").unwrap(), [255, 140, 0]);
        assert_eq!(palette_lookup("railway").unwrap(), [128, 128, 128]);
    }

    #[test]
    fn palette_lookup_unknown_lists_keys() {
        let err = palette_lookup("motorway").unwrap_err().to_string();
        assert!(err.contains("railway"), "{err}");
        assert!(err.contains("park"), "{err}");
    }

    #[test]
    fn palette_colors_pairwise_distinct() {
        let mut colors: Vec<[u8; 3]> = PALETTE_KEYS
            .iter()
            .map(|k| palette_lookup(k).unwrap())
            .collect();
        colors.push(BACKGROUND);
        let n = colors.len();
        colors.sort();
        colors.dedup();
        assert_eq!(colors.len(), n);
    }

    #[test]
    fn color_names_align_with_fills() {
        // Every designatable category exposes both a fill and a name.
        for cat in Category::ALL {
            assert_eq!(fill_color(cat).is_some(), cat.fill_color_name().is_some());
        }
    }

    #[test]
    fn filename_encodes_variant_and_shift() {
        let t = tile();
        assert_eq!(
            control_filename("chicago", t, Variant::Base, (0.0, 0.0)),
            "chicago_16_16815_24357_base.png"
        );
        assert_eq!(
            control_filename("chicago", t, Variant::Landuse, (0.5, -0.5)),
            "chicago_16_16815_24357_landuse_sx+0.50sy-0.50.png"
        );
    }

    #[test]
    fn tensor_is_normalized_and_resized() {
        let mut img = ControlImage::blank(64, Variant::Base, tile());
        for y in 0..64 {
            img.put(10, y, WATER_COLOR);
        }
        let t = img.to_tensor(32, 32);
        assert_eq!((t.channels, t.height, t.width), (3, 32, 32));
        let max = t.data.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - 217.0 / 255.0).abs() < 1e-12);
    }
}
