//! Deterministic procedural renderer for the partially-visible-platform
//! observation. The scene frame is centred on the peg: a gripper at `(0, 0)`
//! hovers exactly over the peg, and the rendered scene translates opposite to
//! gripper motion. Environments convert map coordinates by subtracting the
//! map target before calling in.
//!
//! Every feature is a smooth function of position (value noise with
//! smoothstep interpolation, sine rings, smoothstep edges) so sub-millimetre
//! gripper motion produces continuous image changes. The in-hand gear is a
//! static image-space overlay that fully hides the peg region.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{GridIndex, GridMap, Vec2Mm};

pub const OBS_CHANNELS: usize = 3;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("image encoding for {path}: {source}")]
    Encode { path: PathBuf, source: image::ImageError },
    #[error("manifest error: {0}")]
    Manifest(String),
}

/// RGB observation, row-major `[y][x][channel]`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl ObsImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![0.0; width * height * OBS_CHANNELS] }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, OBS_CHANNELS]
    }

    /// Mean per-pixel-channel absolute difference.
    pub fn mean_abs_diff(&self, other: &Self) -> f32 {
        assert_eq!(self.pixels.len(), other.pixels.len());
        let sum: f32 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .sum();
        sum / self.pixels.len() as f32
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, data: &[u8]) -> Self {
        assert_eq!(data.len(), width * height * OBS_CHANNELS);
        Self {
            width,
            height,
            pixels: data.iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }
}

/// Geometry and texture of the simulated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub platform_radius_mm: f64,
    pub peg_radius_mm: f64,
    /// Radius of the in-hand gear footprint that occludes the peg.
    pub occluder_radius_mm: f64,
    pub texture_seed: u64,
    /// Side length of the top-down square crop.
    pub view_window_mm: f64,
    pub mounted_gear_offset_mm: Vec2Mm,
    pub mounted_gear_teeth: u32,
    pub obs_width: usize,
    pub obs_height: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            platform_radius_mm: 30.0,
            peg_radius_mm: 3.0,
            occluder_radius_mm: 10.0,
            texture_seed: 0x5ee_d,
            view_window_mm: 40.0,
            mounted_gear_offset_mm: Vec2Mm::new(13.0, 10.0),
            mounted_gear_teeth: 20,
            obs_width: 64,
            obs_height: 64,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<(), RenderError> {
        let ok = self.platform_radius_mm > 0.0
            && self.peg_radius_mm > 0.0
            && self.occluder_radius_mm > 0.0
            && self.view_window_mm > 0.0
            && self.obs_width > 0
            && self.obs_height > 0;
        if ok {
            Ok(())
        } else {
            Err(RenderError::Manifest("scene radii, window and size must be positive".into()))
        }
    }
}

fn hash2(ix: i64, iy: i64, seed: u64) -> f32 {
    let mut h = seed
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 31;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 29;
    (h >> 40) as f32 / (1u64 << 24) as f32
}

fn smooth(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

/// Seeded value noise on an integer lattice, C1-smooth.
fn vnoise(x: f32, y: f32, seed: u64) -> f32 {
    let fx = x.floor();
    let fy = y.floor();
    let (ix, iy) = (fx as i64, fy as i64);
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let a = hash2(ix, iy, seed);
    let b = hash2(ix + 1, iy, seed);
    let c = hash2(ix, iy + 1, seed);
    let d = hash2(ix + 1, iy + 1, seed);
    let top = a + (b - a) * tx;
    let bot = c + (d - c) * tx;
    top + (bot - top) * ty
}

/// 0 below `edge0`, 1 above `edge1`, smooth in between.
fn smoothstep(edge0: f32, edge1: f32, x: f32) -> f32 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    smooth(t)
}

/// Renderer with the static in-hand-gear overlay precomputed.
#[derive(Debug, Clone)]
pub struct Renderer {
    scene: SceneParams,
    /// Per pixel: occluder colour and coverage in [0,1]; coverage is exactly
    /// 1 for every pixel within `occluder_radius_mm` of the image centre.
    overlay: Vec<([f32; 3], f32)>,
}

impl Renderer {
    pub fn new(scene: SceneParams) -> Self {
        let (w, h) = (scene.obs_width, scene.obs_height);
        let mm_per_px = scene.view_window_mm as f32 / w as f32;
        let teeth = scene.mounted_gear_teeth.max(1) as f32;
        let mut overlay = Vec::with_capacity(w * h);
        for py in 0..h {
            for px in 0..w {
                // pixel offset from the image centre, mm
                let dx = (px as f32 + 0.5 - w as f32 / 2.0) * mm_per_px;
                let dy = (py as f32 + 0.5 - h as f32 / 2.0) * mm_per_px;
                let r = (dx * dx + dy * dy).sqrt();
                let radius = scene.occluder_radius_mm as f32;
                // full coverage inside the radius, fading over 0.6 mm outside
                let cover = 1.0 - smoothstep(radius, radius + 0.6, r);
                let theta = dy.atan2(dx);
                let tooth = 0.5 + 0.5 * (theta * teeth).sin();
                let rim = smoothstep(radius - 1.6, radius - 1.2, r + 1.4 * tooth);
                let bore = 1.0 - smoothstep(2.2, 2.6, r);
                let base = 0.16 + 0.05 * (r / radius.max(1e-3));
                let g = base + 0.10 * rim + 0.08 * bore;
                overlay.push(([g, g * 0.95, g * 1.05], cover));
            }
        }
        Self { scene, overlay }
    }

    pub fn scene(&self) -> &SceneParams {
        &self.scene
    }

    /// Scene colour at a point `p` in the peg-centred platform frame.
    fn scene_color(&self, px_mm: f32, py_mm: f32) -> [f32; 3] {
        let s = &self.scene;
        let seed = s.texture_seed;
        // high-frequency background texture, fixed in the platform frame
        let n1 = vnoise(px_mm / 5.6, py_mm / 5.6, seed);
        let n2 = vnoise(px_mm / 2.3 + 17.0, py_mm / 2.3 - 9.0, seed ^ 0xA5A5);
        let n3 = vnoise(px_mm / 11.0 - 31.0, py_mm / 11.0 + 23.0, seed ^ 0x3C3C);
        let mut rgb = [
            0.30 + 0.26 * n1 + 0.18 * n2 + 0.10 * n3,
            0.28 + 0.20 * n1 + 0.24 * n2 + 0.12 * n3,
            0.26 + 0.14 * n1 + 0.20 * n2 + 0.24 * n3,
        ];

        let r = (px_mm * px_mm + py_mm * py_mm).sqrt();
        let platform = 1.0 - smoothstep(
            s.platform_radius_mm as f32 - 0.8,
            s.platform_radius_mm as f32,
            r,
        );
        if platform > 0.0 {
            // brushed disc with radial rings and angular spokes centred on the peg
            let ring = 0.5 + 0.5 * (r * (core::f32::consts::TAU / 4.0)).sin();
            let theta = py_mm.atan2(px_mm);
            let spokes = 0.5 + 0.5 * (theta * 12.0).sin();
            let metal = 0.52 + 0.16 * ring + 0.07 * spokes + 0.12 * n2;
            let plat_rgb = [metal, metal * 0.98, metal * 0.93];
            for (v, p) in rgb.iter_mut().zip(plat_rgb) {
                *v += (p - *v) * platform;
            }
        }

        // mounted gear: toothed annulus offset from the peg
        let gx = px_mm - s.mounted_gear_offset_mm.x as f32;
        let gy = py_mm - s.mounted_gear_offset_mm.y as f32;
        let gr = (gx * gx + gy * gy).sqrt();
        if gr < 12.0 {
            let gtheta = gy.atan2(gx);
            let tooth = 0.5 + 0.5 * (gtheta * s.mounted_gear_teeth.max(1) as f32).sin();
            let outer = 8.0 + 1.2 * tooth;
            let body = smoothstep(2.4, 2.8, gr) * (1.0 - smoothstep(outer - 0.4, outer, gr));
            if body > 0.0 {
                let shade = 0.20 + 0.06 * tooth + 0.06 * n1;
                let gear_rgb = [shade, shade * 1.04, shade * 0.96];
                for (v, p) in rgb.iter_mut().zip(gear_rgb) {
                    *v += (p - *v) * body;
                }
            }
        }

        // the peg itself (visible only outside the occluder footprint)
        let peg = 1.0 - smoothstep(
            s.peg_radius_mm as f32 - 0.4,
            s.peg_radius_mm as f32,
            r,
        );
        if peg > 0.0 {
            let rim = smoothstep(s.peg_radius_mm as f32 - 1.2, s.peg_radius_mm as f32 - 0.4, r);
            let steel = 0.78 - 0.28 * rim;
            for (v, p) in rgb.iter_mut().zip([steel, steel, steel * 1.02]) {
                *v += (p - *v) * peg;
            }
        }

        [rgb[0].clamp(0.0, 1.0), rgb[1].clamp(0.0, 1.0), rgb[2].clamp(0.0, 1.0)]
    }

    /// Top-down crop of `view_window_mm` centred at `gripper_pos`
    /// (peg-centred frame), with the in-hand gear composited on top.
    pub fn observation(&self, gripper_pos: Vec2Mm) -> ObsImage {
        let s = &self.scene;
        let (w, h) = (s.obs_width, s.obs_height);
        let mm_per_px = (s.view_window_mm / w as f64) as f32;
        let (gx, gy) = (gripper_pos.x as f32, gripper_pos.y as f32);
        let mut img = ObsImage::new(w, h);
        let mut idx = 0;
        for py in 0..h {
            // image y is down, world y is up
            let wy = gy - (py as f32 + 0.5 - h as f32 / 2.0) * mm_per_px;
            for px in 0..w {
                let wx = gx + (px as f32 + 0.5 - w as f32 / 2.0) * mm_per_px;
                let (over_rgb, cover) = self.overlay[py * w + px];
                let rgb = if cover >= 1.0 {
                    over_rgb
                } else {
                    let scene = self.scene_color(wx, wy);
                    [
                        scene[0] + (over_rgb[0] - scene[0]) * cover,
                        scene[1] + (over_rgb[1] - scene[1]) * cover,
                        scene[2] + (over_rgb[2] - scene[2]) * cover,
                    ]
                };
                img.pixels[idx..idx + 3].copy_from_slice(&rgb);
                idx += 3;
            }
        }
        img
    }
}

/// One-shot render; prefer holding a [`Renderer`] in loops.
pub fn render_observation(gripper_pos: Vec2Mm, scene: &SceneParams) -> ObsImage {
    Renderer::new(scene.clone()).observation(gripper_pos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub row: usize,
    pub col: usize,
    pub x_mm: f64,
    pub y_mm: f64,
    pub file: String,
}

/// Index of a rendered grid dataset, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub n_rows: usize,
    pub n_cols: usize,
    pub cell_mm: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub texture_seed: u64,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

fn io_err(path: &Path, source: std::io::Error) -> RenderError {
    RenderError::Io { path: path.to_path_buf(), source }
}

fn encode_png(img: &ObsImage, path: &Path) -> Result<(), RenderError> {
    let mut bytes = Cursor::new(Vec::new());
    image::RgbImage::from_raw(img.width as u32, img.height as u32, img.to_rgb8())
        .expect("buffer sized for dimensions")
        .write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|source| RenderError::Encode { path: path.to_path_buf(), source })?;
    fs::write(path, bytes.into_inner()).map_err(|e| io_err(path, e))
}

/// Render one PNG per grid point (row-major) plus the manifest.
pub fn render_grid_dataset(
    map: &GridMap,
    scene: &SceneParams,
    out_dir: &Path,
) -> Result<DatasetManifest, RenderError> {
    scene.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let renderer = Renderer::new(scene.clone());
    let mut entries = Vec::with_capacity(map.n_points());
    for row in 0..map.n_rows {
        for col in 0..map.n_cols {
            let pos = map.grid_coords(GridIndex::new(col, row));
            let img = renderer.observation(pos - map.target);
            let file = format!("r{row}_c{col}.png");
            encode_png(&img, &out_dir.join(&file))?;
            entries.push(ManifestEntry { row, col, x_mm: pos.x, y_mm: pos.y, file });
        }
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        n_rows: map.n_rows,
        n_cols: map.n_cols,
        cell_mm: map.cell_mm,
        image_width: scene.obs_width,
        image_height: scene.obs_height,
        texture_seed: scene.texture_seed,
        entries,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

/// Load a dataset directory back into memory (row-major image order).
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<ObsImage>), RenderError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| RenderError::Manifest(e.to_string()))?;
    if manifest.entries.len() != manifest.n_rows * manifest.n_cols {
        return Err(RenderError::Manifest(format!(
            "expected {} entries, manifest has {}",
            manifest.n_rows * manifest.n_cols,
            manifest.entries.len()
        )));
    }
    let mut images = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let img_path = dir.join(&entry.file);
        let bytes = fs::read(&img_path).map_err(|e| io_err(&img_path, e))?;
        let decoded = image::load_from_memory(&bytes)
            .map_err(|source| RenderError::Encode { path: img_path.clone(), source })?
            .into_rgb8();
        if (decoded.width() as usize, decoded.height() as usize)
            != (manifest.image_width, manifest.image_height)
        {
            return Err(RenderError::Manifest(format!(
                "{}: image size mismatch with manifest",
                entry.file
            )));
        }
        images.push(ObsImage::from_rgb8(
            manifest.image_width,
            manifest.image_height,
            decoded.as_raw(),
        ));
    }
    Ok((manifest, images))
}
