//! Web-Mercator slippy-tile arithmetic.
//!
//! Tiles are addressed by `(zoom, x, y)` with the origin at the top-left
//! (north-west) corner of the projected world, so `y` grows southward. All
//! functions here are pure and safe to call from any number of threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latitude bound of the Web-Mercator projection, `atan(sinh(pi))` degrees.
pub const MERCATOR_LAT_LIMIT: f64 = 85.05112878;

/// Earth circumference along the equator in meters (WGS84).
pub const EARTH_CIRCUMFERENCE_M: f64 = 40_075_016.686;

/// WGS84 semi-major axis in meters; the spherical-Mercator radius.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

pub const MAX_ZOOM: u8 = 22;

/// A slippy-map tile address.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct TileId {
    pub zoom: u8,
    pub x: u32,
    pub y: u32,
}

impl TileId {
    pub fn new(zoom: u8, x: u32, y: u32) -> Result<TileId> {
        if zoom > MAX_ZOOM {
            return Err(Error::Range(format!("zoom {zoom} exceeds {MAX_ZOOM}")));
        }
        let n = 1u32 << zoom;
        if x >= n || y >= n {
            return Err(Error::Range(format!(
                "tile ({x}, {y}) outside 0..{n} at zoom {zoom}"
            )));
        }
        Ok(TileId { zoom, x, y })
    }

    /// Number of tiles per axis at this zoom.
    pub fn per_axis(&self) -> u32 {
        1u32 << self.zoom
    }
}

impl std::fmt::Display for TileId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.zoom, self.x, self.y)
    }
}

/// Geographic bounding box in WGS84 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBBox {
    pub west: f64,
    pub south: f64,
    pub east: f64,
    pub north: f64,
}

impl GeoBBox {
    pub fn new(west: f64, south: f64, east: f64, north: f64) -> Result<GeoBBox> {
        if !(west < east) || !(south < north) {
            return Err(Error::Range(format!(
                "degenerate bbox ({west}, {south}, {east}, {north})"
            )));
        }
        if south < -MERCATOR_LAT_LIMIT - 1e-9 || north > MERCATOR_LAT_LIMIT + 1e-9 {
            return Err(Error::Range(format!(
                "latitude outside Mercator bounds: [{south}, {north}]"
            )));
        }
        Ok(GeoBBox {
            west,
            south,
            east,
            north,
        })
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.west + self.east) / 2.0, (self.south + self.north) / 2.0)
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.west && lon <= self.east && lat >= self.south && lat <= self.north
    }
}

/// Forward spherical-Mercator projection, meters.
pub fn mercator_xy(lon: f64, lat: f64) -> (f64, f64) {
    let x = EARTH_RADIUS_M * lon.to_radians();
    let y = EARTH_RADIUS_M * lat.to_radians().tan().asinh();
    (x, y)
}

/// Inverse spherical-Mercator projection, degrees.
pub fn mercator_to_lonlat(x: f64, y: f64) -> (f64, f64) {
    let lon = (x / EARTH_RADIUS_M).to_degrees();
    let lat = (y / EARTH_RADIUS_M).sinh().atan().to_degrees();
    (lon, lat)
}

/// Converts a WGS84 coordinate to the tile containing it.
///
/// Longitude exactly +180 is normalized to -180 before conversion. Latitudes
/// beyond the Mercator limit are rejected.
pub fn lonlat_to_tile(lon: f64, lat: f64, zoom: u8) -> Result<TileId> {
    if zoom > MAX_ZOOM {
        return Err(Error::Range(format!("zoom {zoom} exceeds {MAX_ZOOM}")));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(Error::Range(format!("longitude {lon} outside [-180, 180]")));
    }
    if lat.abs() > MERCATOR_LAT_LIMIT {
        return Err(Error::Range(format!(
            "latitude {lat} outside Mercator limit +-{MERCATOR_LAT_LIMIT}"
        )));
    }
    let lon = if lon == 180.0 { -180.0 } else { lon };
    let n = (1u32 << zoom) as f64;
    let x = ((lon + 180.0) / 360.0 * n).floor();
    let y = ((1.0 - lat.to_radians().tan().asinh() / std::f64::consts::PI) / 2.0 * n).floor();
    let clamp = |v: f64| -> u32 { (v.max(0.0) as u32).min((n as u32) - 1) };
    Ok(TileId {
        zoom,
        x: clamp(x),
        y: clamp(y),
    })
}

/// Geographic footprint of a tile.
pub fn tile_to_bbox(t: TileId) -> GeoBBox {
    let n = (1u32 << t.zoom) as f64;
    let lon = |x: f64| x / n * 360.0 - 180.0;
    let lat = |y: f64| {
        (std::f64::consts::PI * (1.0 - 2.0 * y / n))
            .sinh()
            .atan()
            .to_degrees()
    };
    GeoBBox {
        west: lon(t.x as f64),
        east: lon(t.x as f64 + 1.0),
        north: lat(t.y as f64),
        south: lat(t.y as f64 + 1.0),
    }
}

/// Tile footprint in Mercator meters, `(x0, y0, x1, y1)` with `y0` south.
pub fn tile_merc_rect(t: TileId) -> (f64, f64, f64, f64) {
    let b = tile_to_bbox(t);
    let (x0, y0) = mercator_xy(b.west, b.south);
    let (x1, y1) = mercator_xy(b.east, b.north);
    (x0, y0, x1, y1)
}

/// East-west ground span of a tile in meters, evaluated at the latitude of
/// the tile's Mercator-space center.
pub fn tile_span_meters(t: TileId) -> f64 {
    let n = (1u32 << t.zoom) as f64;
    let center_lat = (std::f64::consts::PI * (1.0 - 2.0 * (t.y as f64 + 0.5) / n))
        .sinh()
        .atan();
    EARTH_CIRCUMFERENCE_M / n * center_lat.cos()
}

/// Tile bbox translated by `(fx, fy)` tile-spans in Mercator space.
///
/// Positive `fx` moves east; positive `fy` moves **south** (toward larger
/// tile rows), matching raster row order. Shape is preserved exactly in the
/// projected plane. Fractions must lie strictly inside (-1, 1) and the
/// shifted window must stay within world bounds.
pub fn shifted_bbox(t: TileId, fx: f64, fy: f64) -> Result<GeoBBox> {
    if fx.abs() >= 1.0 || fy.abs() >= 1.0 {
        return Err(Error::Range(format!(
            "shift fractions ({fx}, {fy}) must lie strictly inside (-1, 1)"
        )));
    }
    let (x0, y0, x1, y1) = tile_merc_rect(t);
    let w = x1 - x0;
    let h = y1 - y0;
    let nx0 = x0 + fx * w;
    let nx1 = x1 + fx * w;
    // Mercator y grows northward; a southward shift subtracts.
    let ny0 = y0 - fy * h;
    let ny1 = y1 - fy * h;
    let world = std::f64::consts::PI * EARTH_RADIUS_M;
    if nx0 < -world - 1e-6 || nx1 > world + 1e-6 || ny0 < -world - 1e-6 || ny1 > world + 1e-6 {
        return Err(Error::Range(format!(
            "shifted window ({fx}, {fy}) of tile {t} escapes world bounds"
        )));
    }
    let (west, south) = mercator_to_lonlat(nx0, ny0);
    let (east, north) = mercator_to_lonlat(nx1, ny1);
    GeoBBox::new(west, south, east, north)
}
