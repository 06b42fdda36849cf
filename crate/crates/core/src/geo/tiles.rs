use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

use super::{TileCoord, WindowPlan, TILE_SIZE};

/// Edge length of an aerial photograph in pixels.
pub const AERIAL_SIZE: u32 = 224;

#[derive(Debug, Error)]
pub enum TileError {
    #[error("network error fetching {quadkey}: {message}")]
    Network { quadkey: String, message: String },
    #[error("tile {quadkey} not available")]
    NotFound { quadkey: String },
    #[error("malformed tile {quadkey}: {message}")]
    Malformed { quadkey: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image has {0} bytes, expected 224x224x3")]
    BadImage(usize),
}

/// Source of encoded (PNG/JPEG) tile images.
pub trait TileClient: Send + Sync {
    fn fetch(&self, tile: TileCoord) -> Result<Vec<u8>, TileError>;
}

/// Serves tiles from a directory laid out as `<root>/<zoom>/<quadkey>.png`.
#[derive(Debug)]
pub struct DirTileClient {
    root: PathBuf,
    requests: AtomicUsize,
}

impl DirTileClient {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            requests: AtomicUsize::new(0),
        }
    }

    /// Number of `fetch` calls served so far.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl TileClient for DirTileClient {
    fn fetch(&self, tile: TileCoord) -> Result<Vec<u8>, TileError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let path = cache_path(&self.root, tile);
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => TileError::NotFound {
                quadkey: tile.quadkey(),
            },
            _ => TileError::Io { path, source: e },
        })
    }
}

/// Fetches tiles over HTTP from a URL template.
///
/// The template may contain `{quadkey}`, `{x}`, `{y}` and `{z}`.
#[cfg(feature = "http")]
pub struct HttpTileClient {
    template: String,
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl HttpTileClient {
    pub fn new(template: impl Into<String>) -> Self {
        Self {
            template: template.into(),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(30))
                .build(),
        }
    }

    pub fn url(&self, tile: TileCoord) -> String {
        self.template
            .replace("{quadkey}", &tile.quadkey())
            .replace("{x}", &tile.x.to_string())
            .replace("{y}", &tile.y.to_string())
            .replace("{z}", &tile.zoom.to_string())
    }
}

#[cfg(feature = "http")]
impl TileClient for HttpTileClient {
    fn fetch(&self, tile: TileCoord) -> Result<Vec<u8>, TileError> {
        use std::io::Read;
        let quadkey = tile.quadkey();
        let resp = match self.agent.get(&self.url(tile)).call() {
            Ok(r) => r,
            Err(ureq::Error::Status(404, _)) => return Err(TileError::NotFound { quadkey }),
            Err(e) => {
                return Err(TileError::Network {
                    quadkey,
                    message: e.to_string(),
                })
            }
        };
        let mut body = Vec::new();
        resp.into_reader()
            .read_to_end(&mut body)
            .map_err(|e| TileError::Network {
                quadkey,
                message: e.to_string(),
            })?;
        Ok(body)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

fn cache_path(root: &Path, tile: TileCoord) -> PathBuf {
    root.join(tile.zoom.to_string())
        .join(format!("{}.png", tile.quadkey()))
}

/// Disk cache in front of another client, keyed by quadkey.
///
/// Tiles are cached indefinitely under `<dir>/<zoom>/<quadkey>.png`. Concurrent
/// requests for one quadkey are serialized so a tile is fetched and written once.
pub struct CachedTileClient<C> {
    inner: C,
    dir: PathBuf,
    retry: RetryPolicy,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    upstream: AtomicUsize,
}

impl<C: TileClient> CachedTileClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Self {
        Self::with_retry(inner, dir, RetryPolicy::default())
    }

    pub fn with_retry(inner: C, dir: impl Into<PathBuf>, retry: RetryPolicy) -> Self {
        Self {
            inner,
            dir: dir.into(),
            retry,
            locks: Mutex::new(HashMap::new()),
            upstream: AtomicUsize::new(0),
        }
    }

    /// Number of requests that went past the cache.
    pub fn upstream_requests(&self) -> usize {
        self.upstream.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock table poisoned");
        locks.entry(key.to_string()).or_default().clone()
    }

    fn fetch_with_retry(&self, tile: TileCoord) -> Result<Vec<u8>, TileError> {
        let mut attempt = 0;
        loop {
            self.upstream.fetch_add(1, Ordering::SeqCst);
            match self.inner.fetch(tile) {
                Err(TileError::Network { .. }) if attempt + 1 < self.retry.attempts => {
                    let delay = self.retry.base_delay * 2u32.pow(attempt);
                    log::warn!("tile {} failed, retrying in {delay:?}", tile.quadkey());
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

impl<C: TileClient> TileClient for CachedTileClient<C> {
    fn fetch(&self, tile: TileCoord) -> Result<Vec<u8>, TileError> {
        let path = cache_path(&self.dir, tile);
        let lock = self.key_lock(&tile.quadkey());
        let _guard = lock.lock().expect("tile lock poisoned");
        if let Ok(bytes) = fs::read(&path) {
            return Ok(bytes);
        }
        let bytes = self.fetch_with_retry(tile)?;
        let io = |source| TileError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let tmp = path.with_extension("png.part");
        fs::write(&tmp, &bytes).map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)?;
        Ok(bytes)
    }
}

/// 224×224 RGB aerial photograph.
#[derive(Debug, Clone, PartialEq)]
pub struct AerialImage {
    /// Row-major RGB bytes, `AERIAL_SIZE² · 3` long.
    pub pixels: Vec<u8>,
    pub source_quadkeys: Vec<String>,
}

impl AerialImage {
    pub fn new(pixels: Vec<u8>, source_quadkeys: Vec<String>) -> Result<Self, TileError> {
        let expected = (AERIAL_SIZE * AERIAL_SIZE * 3) as usize;
        if pixels.len() != expected {
            return Err(TileError::BadImage(pixels.len()));
        }
        Ok(Self {
            pixels,
            source_quadkeys,
        })
    }

    /// Image filled with one colour.
    pub fn solid(rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take((AERIAL_SIZE * AERIAL_SIZE * 3) as usize)
            .collect();
        Self {
            pixels,
            source_quadkeys: Vec::new(),
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * AERIAL_SIZE + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn save_png(&self, path: &Path) -> Result<(), TileError> {
        let img = RgbImage::from_raw(AERIAL_SIZE, AERIAL_SIZE, self.pixels.clone())
            .ok_or(TileError::BadImage(self.pixels.len()))?;
        img.save_with_format(path, ImageFormat::Png)
            .map_err(|e| TileError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e.to_string()),
            })
    }

    pub fn load_png(path: &Path) -> Result<Self, TileError> {
        let img = image::open(path)
            .map_err(|e| TileError::Malformed {
                quadkey: path.display().to_string(),
                message: e.to_string(),
            })?
            .to_rgb8();
        if img.dimensions() != (AERIAL_SIZE, AERIAL_SIZE) {
            return Err(TileError::BadImage(img.as_raw().len()));
        }
        Self::new(img.into_raw(), Vec::new())
    }
}

fn decode_tile(tile: TileCoord, bytes: &[u8]) -> Result<RgbImage, TileError> {
    let malformed = |message: String| TileError::Malformed {
        quadkey: tile.quadkey(),
        message,
    };
    let img = image::load_from_memory(bytes)
        .map_err(|e| malformed(e.to_string()))?
        .to_rgb8();
    if img.dimensions() != (TILE_SIZE, TILE_SIZE) {
        return Err(malformed(format!("size {:?}", img.dimensions())));
    }
    Ok(img)
}

/// Fetches every tile of the plan, pastes them into one canvas and crops the window.
pub fn fetch_and_stitch<C: TileClient + ?Sized>(
    client: &C,
    plan: &WindowPlan,
) -> Result<AerialImage, TileError> {
    let (gx0, gy0, cols, rows) = plan.grid();
    let ts = TILE_SIZE;
    let mut canvas = RgbImage::new(cols * ts, rows * ts);
    for tile in &plan.tiles {
        let img = decode_tile(*tile, &client.fetch(*tile)?)?;
        let ox = (tile.x - gx0) * ts;
        let oy = (tile.y - gy0) * ts;
        for (x, y, px) in img.enumerate_pixels() {
            canvas.put_pixel(ox + x, oy + y, *px);
        }
    }
    let (canvas_x, canvas_y) = (
        u64::from(gx0) * u64::from(ts),
        u64::from(gy0) * u64::from(ts),
    );
    let cx = (plan.crop_origin.0 - canvas_x) as u32;
    let cy = (plan.crop_origin.1 - canvas_y) as u32;
    let size = plan.size;
    let mut pixels = Vec::with_capacity((size * size * 3) as usize);
    for y in 0..size {
        for x in 0..size {
            pixels.extend_from_slice(&canvas.get_pixel(cx + x, cy + y).0);
        }
    }
    Ok(AerialImage {
        pixels,
        source_quadkeys: plan.tiles.iter().map(TileCoord::quadkey).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::{plan_window, TileCoord};
    use super::*;

    fn write_tile(root: &Path, tile: TileCoord, f: impl Fn(u32, u32) -> [u8; 3]) {
        let img = RgbImage::from_fn(TILE_SIZE, TILE_SIZE, |x, y| image::Rgb(f(x, y)));
        let path = cache_path(root, tile);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        img.save_with_format(&path, ImageFormat::Png).unwrap();
    }

    #[test]
    fn solid_tiles_stitch_to_solid_image() {
        let dir = tempfile::tempdir().unwrap();
        let plan = plan_window(0.0, 0.0, 2, AERIAL_SIZE).unwrap();
        assert_eq!(plan.tiles.len(), 4);
        for t in &plan.tiles {
            write_tile(dir.path(), *t, |_, _| [255, 0, 0]);
        }
        let img = fetch_and_stitch(&DirTileClient::new(dir.path()), &plan).unwrap();
        assert_eq!(img, AerialImage {
            source_quadkeys: img.source_quadkeys.clone(),
            ..AerialImage::solid([255, 0, 0])
        });
        assert_eq!(img.source_quadkeys.len(), 4);
    }

    #[test]
    fn crop_matches_global_pixel_pattern() {
        // Each tile encodes its global pixel coordinates, so the crop can be
        // checked analytically pixel by pixel.
        let dir = tempfile::tempdir().unwrap();
        let plan = plan_window(10.0, 20.0, 5, AERIAL_SIZE).unwrap();
        for t in &plan.tiles {
            let (ox, oy) = t.pixel_origin();
            write_tile(dir.path(), *t, move |x, y| {
                let gx = ox + u64::from(x);
                let gy = oy + u64::from(y);
                [(gx % 251) as u8, (gy % 241) as u8, ((gx / 7 + gy / 5) % 2 * 255) as u8]
            });
        }
        let img = fetch_and_stitch(&DirTileClient::new(dir.path()), &plan).unwrap();
        let (ox, oy) = plan.crop_origin;
        for y in 0..AERIAL_SIZE {
            for x in 0..AERIAL_SIZE {
                let gx = ox + u64::from(x);
                let gy = oy + u64::from(y);
                let want = [(gx % 251) as u8, (gy % 241) as u8, ((gx / 7 + gy / 5) % 2 * 255) as u8];
                assert_eq!(img.pixel(x, y), want, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn cache_hit_makes_no_requests() {
        let source = tempfile::tempdir().unwrap();
        let cache = tempfile::tempdir().unwrap();
        let plan = plan_window(0.0, 0.0, 3, AERIAL_SIZE).unwrap();
        for t in &plan.tiles {
            write_tile(source.path(), *t, |_, _| [1, 2, 3]);
        }
        let client = CachedTileClient::new(DirTileClient::new(source.path()), cache.path());
        let first = fetch_and_stitch(&client, &plan).unwrap();
        assert_eq!(client.inner().requests(), 4);
        let second = fetch_and_stitch(&client, &plan).unwrap();
        assert_eq!(client.inner().requests(), 4);
        assert_eq!(first, second);
        assert!(cache_path(cache.path(), plan.tiles[0]).is_file());
    }

    struct Flaky {
        failures: AtomicUsize,
        inner: DirTileClient,
    }

    impl TileClient for Flaky {
        fn fetch(&self, tile: TileCoord) -> Result<Vec<u8>, TileError> {
            if self.failures.load(Ordering::SeqCst) > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                return Err(TileError::Network {
                    quadkey: tile.quadkey(),
                    message: "timeout".into(),
                });
            }
            self.inner.fetch(tile)
        }
    }

    #[test]
    fn retries_then_gives_up() {
        let source = tempfile::tempdir().unwrap();
        let tile = TileCoord::new(1, 1, 2).unwrap();
        write_tile(source.path(), tile, |_, _| [0, 0, 0]);
        let retry = RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(1),
        };
        let flaky = Flaky {
            failures: AtomicUsize::new(2),
            inner: DirTileClient::new(source.path()),
        };
        let cache = tempfile::tempdir().unwrap();
        let client = CachedTileClient::with_retry(flaky, cache.path(), retry);
        assert!(client.fetch(tile).is_ok());
        assert_eq!(client.upstream_requests(), 3);

        let flaky = Flaky {
            failures: AtomicUsize::new(5),
            inner: DirTileClient::new(source.path()),
        };
        let cache = tempfile::tempdir().unwrap();
        let client = CachedTileClient::with_retry(flaky, cache.path(), retry);
        assert!(matches!(client.fetch(tile), Err(TileError::Network { .. })));
        assert_eq!(client.upstream_requests(), 3);
    }

    #[test]
    fn malformed_tile_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let tile = TileCoord::new(0, 0, 1).unwrap();
        let path = cache_path(dir.path(), tile);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, b"not a png").unwrap();
        let plan = WindowPlan {
            tiles: vec![tile],
            crop_origin: (0, 0),
            size: AERIAL_SIZE,
            zoom: 1,
            clamped: false,
        };
        assert!(matches!(
            fetch_and_stitch(&DirTileClient::new(dir.path()), &plan),
            Err(TileError::Malformed { .. })
        ));
    }

    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = AerialImage::solid([10, 20, 30]);
        img.pixels[5] = 99;
        let p = dir.path().join("a.png");
        img.save_png(&p).unwrap();
        assert_eq!(AerialImage::load_png(&p).unwrap().pixels, img.pixels);
    }

    #[cfg(feature = "http")]
    #[test]
    fn url_template() {
        let c = HttpTileClient::new("https://t.example/{z}/{x}/{y}?q={quadkey}");
        let t = TileCoord::new(3, 5, 3).unwrap();
        assert_eq!(c.url(t), "https://t.example/3/3/5?q=213");
    }
}
