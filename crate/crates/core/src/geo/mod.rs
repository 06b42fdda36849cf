//! Web-mercator tile math, quadkeys and aerial-image window planning.
//!
//! Pixel coordinates follow the Bing tile system: the world at zoom `z` is a
//! square of `256 · 2^z` pixels with the origin at the north-west corner.

mod tiles;

pub use tiles::{
    fetch_and_stitch, AerialImage, CachedTileClient, DirTileClient, RetryPolicy, TileClient,
    TileError, AERIAL_SIZE,
};
#[cfg(feature = "http")]
pub use tiles::HttpTileClient;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Latitude limit of the square mercator map, in degrees.
pub const MAX_LATITUDE: f64 = 85.05112878;
/// Edge length of one map tile in pixels.
pub const TILE_SIZE: u32 = 256;
pub const MIN_ZOOM: u8 = 1;
pub const MAX_ZOOM: u8 = 23;

/// Zoom level of the aerial photographs.
pub const AERIAL_ZOOM: u8 = 20;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-{MAX_LATITUDE}, {MAX_LATITUDE}]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("zoom {0} outside {MIN_ZOOM}..={MAX_ZOOM}")]
    Zoom(u8),
    #[error("tile ({x}, {y}) outside the zoom-{zoom} grid")]
    Tile { x: u32, y: u32, zoom: u8 },
    #[error("invalid quadkey {0:?}")]
    Quadkey(String),
    #[error("window of {size} px does not fit a zoom-{zoom} map")]
    WindowTooLarge { size: u32, zoom: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileCoord {
    pub x: u32,
    pub y: u32,
    pub zoom: u8,
}

impl TileCoord {
    pub fn new(x: u32, y: u32, zoom: u8) -> Result<Self, GeoError> {
        check_zoom(zoom)?;
        let n = 1u64 << zoom;
        if u64::from(x) >= n || u64::from(y) >= n {
            return Err(GeoError::Tile { x, y, zoom });
        }
        Ok(Self { x, y, zoom })
    }

    pub fn quadkey(&self) -> String {
        tile_to_quadkey(*self)
    }

    /// Global pixel of the tile's north-west corner.
    pub fn pixel_origin(&self) -> (u64, u64) {
        (
            u64::from(self.x) * u64::from(TILE_SIZE),
            u64::from(self.y) * u64::from(TILE_SIZE),
        )
    }
}

fn check_zoom(zoom: u8) -> Result<(), GeoError> {
    if (MIN_ZOOM..=MAX_ZOOM).contains(&zoom) {
        Ok(())
    } else {
        Err(GeoError::Zoom(zoom))
    }
}

/// Width (and height) of the whole map in pixels.
pub fn map_size(zoom: u8) -> u64 {
    u64::from(TILE_SIZE) << zoom
}

/// Global pixel position of a WGS84 coordinate, clipped to the map.
pub fn latlon_to_global_pixel(lat: f64, lon: f64, zoom: u8) -> Result<(f64, f64), GeoError> {
    check_zoom(zoom)?;
    if !(-MAX_LATITUDE..=MAX_LATITUDE).contains(&lat) {
        return Err(GeoError::Latitude(lat));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(GeoError::Longitude(lon));
    }
    let size = map_size(zoom) as f64;
    let sin = lat.to_radians().sin();
    let x = (lon + 180.0) / 360.0;
    let y = 0.5 - ((1.0 + sin) / (1.0 - sin)).ln() / (4.0 * PI);
    Ok(((x * size).clamp(0.0, size), (y * size).clamp(0.0, size)))
}

/// Inverse of [`latlon_to_global_pixel`].
pub fn global_pixel_to_latlon(px: f64, py: f64, zoom: u8) -> Result<(f64, f64), GeoError> {
    check_zoom(zoom)?;
    let size = map_size(zoom) as f64;
    let x = px.clamp(0.0, size) / size - 0.5;
    let y = 0.5 - py.clamp(0.0, size) / size;
    let lat = 90.0 - 360.0 * (-y * 2.0 * PI).exp().atan() / PI;
    Ok((lat, 360.0 * x))
}

/// Interleaves the tile bits, most significant first: digit = 2·y_bit + x_bit.
pub fn tile_to_quadkey(t: TileCoord) -> String {
    (1..=t.zoom)
        .rev()
        .map(|i| {
            let mask = 1u32 << (i - 1);
            let mut digit = b'0';
            if t.x & mask != 0 {
                digit += 1;
            }
            if t.y & mask != 0 {
                digit += 2;
            }
            digit as char
        })
        .collect()
}

pub fn quadkey_to_tile(quadkey: &str) -> Result<TileCoord, GeoError> {
    let zoom = u8::try_from(quadkey.len()).map_err(|_| GeoError::Quadkey(quadkey.into()))?;
    check_zoom(zoom).map_err(|_| GeoError::Quadkey(quadkey.into()))?;
    let (mut x, mut y) = (0u32, 0u32);
    for c in quadkey.bytes() {
        x <<= 1;
        y <<= 1;
        match c {
            b'0' => {}
            b'1' => x |= 1,
            b'2' => y |= 1,
            b'3' => {
                x |= 1;
                y |= 1;
            }
            _ => return Err(GeoError::Quadkey(quadkey.into())),
        }
    }
    Ok(TileCoord { x, y, zoom })
}

/// Tile containing a coordinate.
pub fn latlon_to_tile(lat: f64, lon: f64, zoom: u8) -> Result<TileCoord, GeoError> {
    let (px, py) = latlon_to_global_pixel(lat, lon, zoom)?;
    let last = (1u64 << zoom) - 1;
    let tx = ((px / f64::from(TILE_SIZE)) as u64).min(last);
    let ty = ((py / f64::from(TILE_SIZE)) as u64).min(last);
    Ok(TileCoord {
        x: tx as u32,
        y: ty as u32,
        zoom,
    })
}

pub fn latlon_to_quadkey(lat: f64, lon: f64, zoom: u8) -> Result<String, GeoError> {
    latlon_to_tile(lat, lon, zoom).map(tile_to_quadkey)
}

/// Square pixel window centered on a location and the tiles it touches.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowPlan {
    /// Row-major (north to south, then west to east).
    pub tiles: Vec<TileCoord>,
    /// Global pixel of the window's north-west corner.
    pub crop_origin: (u64, u64),
    pub size: u32,
    pub zoom: u8,
    /// Set when the centered window ran past the map edge and was shifted inside.
    pub clamped: bool,
}

impl WindowPlan {
    /// Tile grid extent as (first column, first row, columns, rows).
    pub fn grid(&self) -> (u32, u32, u32, u32) {
        let x0 = self.tiles.iter().map(|t| t.x).min().unwrap_or(0);
        let y0 = self.tiles.iter().map(|t| t.y).min().unwrap_or(0);
        let x1 = self.tiles.iter().map(|t| t.x).max().unwrap_or(0);
        let y1 = self.tiles.iter().map(|t| t.y).max().unwrap_or(0);
        (x0, y0, x1 - x0 + 1, y1 - y0 + 1)
    }

    /// Stable key identifying the window; equal plans produce the same image.
    pub fn key(&self) -> String {
        format!(
            "z{}_{}_{}_{}",
            self.zoom, self.crop_origin.0, self.crop_origin.1, self.size
        )
    }
}

/// Plans a `size`-pixel window centered on the location.
pub fn plan_window(lat: f64, lon: f64, zoom: u8, size: u32) -> Result<WindowPlan, GeoError> {
    let (px, py) = latlon_to_global_pixel(lat, lon, zoom)?;
    let world = map_size(zoom);
    if u64::from(size) > world || size == 0 {
        return Err(GeoError::WindowTooLarge { size, zoom });
    }
    let half = f64::from(size) / 2.0;
    let max_origin = (world - u64::from(size)) as f64;
    let ox = (px - half).round();
    let oy = (py - half).round();
    let clamped = ox < 0.0 || oy < 0.0 || ox > max_origin || oy > max_origin;
    let ox = ox.clamp(0.0, max_origin) as u64;
    let oy = oy.clamp(0.0, max_origin) as u64;

    let ts = u64::from(TILE_SIZE);
    let last = u64::from(size) - 1;
    let mut tiles = Vec::with_capacity(4);
    for ty in oy / ts..=(oy + last) / ts {
        for tx in ox / ts..=(ox + last) / ts {
            tiles.push(TileCoord {
                x: tx as u32,
                y: ty as u32,
                zoom,
            });
        }
    }
    Ok(WindowPlan {
        tiles,
        crop_origin: (ox, oy),
        size,
        zoom,
        clamped,
    })
}

/// Plans the default aerial window (224 px at zoom 20).
pub fn plan_aerial_window(lat: f64, lon: f64) -> Result<WindowPlan, GeoError> {
    plan_window(lat, lon, AERIAL_ZOOM, AERIAL_SIZE)
}

/// Groups locations by identical window plan. Returns the distinct plans and,
/// per input, the index of its plan.
pub fn dedup_plans(plans: &[WindowPlan]) -> (Vec<WindowPlan>, Vec<usize>) {
    let mut unique: Vec<WindowPlan> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let assignment = plans
        .iter()
        .map(|p| {
            *index.entry(p.key()).or_insert_with(|| {
                unique.push(p.clone());
                unique.len() - 1
            })
        })
        .collect();
    (unique, assignment)
}
