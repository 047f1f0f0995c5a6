//! Planar geometry, grid indexing and the pinhole camera model shared by the
//! localization stage, the environments and the evaluation harness.
//!
//! Grid convention: grid point `(col, row)` sits at `(col * cell_mm, row * cell_mm)`
//! with the origin at the lower-left corner of the sampled map.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("depth must be positive, got {0}")]
    InvalidDepth(f64),
    #[error("invalid grid map: {0}")]
    InvalidMap(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Planar position in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2Mm {
    pub x: f64,
    pub y: f64,
}

impl Vec2Mm {
    pub fn new(x: f64, y: f64) -> Self {
        assert!(x.is_finite() && y.is_finite(), "Vec2Mm must be finite");
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise rotation by `deg` degrees.
    pub fn rotated_deg(self, deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn clamp_each(self, min: f64, max: f64) -> Self {
        Self::new(self.x.clamp(min, max), self.y.clamp(min, max))
    }
}

impl std::ops::Add for Vec2Mm {
    type Output = Vec2Mm;
    fn add(self, rhs: Vec2Mm) -> Vec2Mm {
        Vec2Mm::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2Mm {
    type Output = Vec2Mm;
    fn sub(self, rhs: Vec2Mm) -> Vec2Mm {
        Vec2Mm::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Vec2Mm {
    type Output = Vec2Mm;
    fn mul(self, rhs: f64) -> Vec2Mm {
        Vec2Mm::new(self.x * rhs, self.y * rhs)
    }
}

/// 3D point in metres (camera/world frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3M {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3M {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

impl std::ops::Sub for Vec3M {
    type Output = Vec3M;
    fn sub(self, rhs: Vec3M) -> Vec3M {
        Vec3M::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Add for Vec3M {
    type Output = Vec3M;
    fn add(self, rhs: Vec3M) -> Vec3M {
        Vec3M::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

/// Index of a sampled grid point, `col` in `[0, n_cols)`, `row` in `[0, n_rows)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridIndex {
    pub col: usize,
    pub row: usize,
}

impl GridIndex {
    pub fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

/// The sampled map: `n_cols` x `n_rows` grid points spaced `cell_mm` apart,
/// with the peg target at `(n_cols/2, n_rows/2)` grid units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub n_cols: usize,
    pub n_rows: usize,
    pub cell_mm: f64,
    pub target: Vec2Mm,
}

impl GridMap {
    pub fn new(n_cols: usize, n_rows: usize, cell_mm: f64, target: Vec2Mm) -> Result<Self, GeomError> {
        if n_cols < 2 || n_rows < 2 {
            return Err(GeomError::InvalidMap(format!(
                "need at least 2x2 grid points, got {n_cols}x{n_rows}"
            )));
        }
        if !(cell_mm > 0.0) {
            return Err(GeomError::InvalidMap(format!("cell_mm must be > 0, got {cell_mm}")));
        }
        let map = Self { n_cols, n_rows, cell_mm, target };
        let (w, h) = (map.width_mm(), map.height_mm());
        if !(target.x > 0.0 && target.x < w && target.y > 0.0 && target.y < h) {
            return Err(GeomError::InvalidMap(format!(
                "target ({}, {}) must lie strictly inside the {w}x{h} mm rectangle",
                target.x, target.y
            )));
        }
        Ok(map)
    }

    /// Map with the target centred at `(n_cols/2, n_rows/2)` grid units.
    pub fn centered(n_cols: usize, n_rows: usize, cell_mm: f64) -> Result<Self, GeomError> {
        let target = Vec2Mm::new(n_cols as f64 / 2.0 * cell_mm, n_rows as f64 / 2.0 * cell_mm);
        Self::new(n_cols, n_rows, cell_mm, target)
    }

    /// The 35 x 30 map sampled at 1 mm.
    pub fn default_map() -> Self {
        Self::centered(35, 30, 1.0).expect("default map is valid")
    }

    /// Horizontal extent (distance between first and last column), mm.
    pub fn width_mm(&self) -> f64 {
        (self.n_cols - 1) as f64 * self.cell_mm
    }

    /// Vertical extent, mm.
    pub fn height_mm(&self) -> f64 {
        (self.n_rows - 1) as f64 * self.cell_mm
    }

    pub fn n_points(&self) -> usize {
        self.n_cols * self.n_rows
    }

    /// Millimetre coordinates of a grid point.
    pub fn grid_coords(&self, idx: GridIndex) -> Vec2Mm {
        Vec2Mm::new(idx.col as f64 * self.cell_mm, idx.row as f64 * self.cell_mm)
    }

    /// Normalized Manhattan distance of a grid point to the map centre,
    /// `(|col - n_cols/2| / n_cols + |row - n_rows/2| / n_rows) / 2`.
    pub fn center_distance(&self, idx: GridIndex) -> f64 {
        let dx = (idx.col as f64 - self.n_cols as f64 / 2.0).abs() / self.n_cols as f64;
        let dy = (idx.row as f64 - self.n_rows as f64 / 2.0).abs() / self.n_rows as f64;
        (dx + dy) / 2.0
    }

    /// The grid points minimizing `center_distance`; reaching any of them
    /// counts as success in the offline environment.
    pub fn target_cells(&self) -> Vec<GridIndex> {
        let mut best = f64::INFINITY;
        let mut cells = Vec::new();
        for row in 0..self.n_rows {
            for col in 0..self.n_cols {
                let d = self.center_distance(GridIndex::new(col, row));
                if d < best - 1e-12 {
                    best = d;
                    cells.clear();
                    cells.push(GridIndex::new(col, row));
                } else if (d - best).abs() <= 1e-12 {
                    cells.push(GridIndex::new(col, row));
                }
            }
        }
        cells
    }

    pub fn clamp(&self, p: Vec2Mm) -> Vec2Mm {
        Vec2Mm::new(p.x.clamp(0.0, self.width_mm()), p.y.clamp(0.0, self.height_mm()))
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeomError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeomError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }
}

/// Nearest grid point to `p` after clamping `p` into the map rectangle.
/// Ties round toward the lower index on each axis.
pub fn snap_to_grid(p: Vec2Mm, map: &GridMap) -> GridIndex {
    let clamped = map.clamp(p);
    GridIndex::new(
        round_half_down(clamped.x / map.cell_mm),
        round_half_down(clamped.y / map.cell_mm),
    )
}

fn round_half_down(v: f64) -> usize {
    let floor = v.floor();
    let idx = if v - floor > 0.5 { floor + 1.0 } else { floor };
    idx as usize
}

/// True iff `p` lies inside the sampled rectangle (grid-point extents inclusive).
pub fn in_bounds(p: Vec2Mm, map: &GridMap) -> bool {
    p.x >= 0.0 && p.x <= map.width_mm() && p.y >= 0.0 && p.y <= map.height_mm()
}

/// Pinhole back-projection of pixel `(u, v)` at `depth` metres.
pub fn deproject(u: f64, v: f64, depth: f64, k: &CameraIntrinsics) -> Result<Vec3M, GeomError> {
    if !(depth > 0.0) {
        return Err(GeomError::InvalidDepth(depth));
    }
    Ok(Vec3M::new((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth))
}

/// Forward pinhole projection, the inverse of [`deproject`].
pub fn project(p: Vec3M, k: &CameraIntrinsics) -> Result<(f64, f64), GeomError> {
    if !(p.z > 0.0) {
        return Err(GeomError::InvalidDepth(p.z));
    }
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// Peg centre from the detected platform centre and the known relative offset.
pub fn peg_from_platform(platform_center: Vec3M, relative_offset: Vec3M) -> Vec3M {
    platform_center - relative_offset
}
