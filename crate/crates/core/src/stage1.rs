//! Simulated coarse localization: a noisy bounding-box oracle stands in for
//! the object detector. The true platform centre is projected to pixels,
//! perturbed, back-projected, and offset by the known platform-to-peg
//! distance; a force-threshold descent then hands over to stage 2.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{deproject, peg_from_platform, project, CameraIntrinsics, GeomError, GridMap, Vec2Mm, Vec3M};

#[derive(Debug, Error)]
pub enum Stage1Error {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("descent must start above the surface (start {start_z} <= surface {surface_z})")]
    StartBelowSurface { start_z: f64, surface_z: f64 },
    #[error("no contact within {max_travel_mm} mm of travel")]
    NoContact { max_travel_mm: f64 },
}

/// Detected bounding-box centre and depth sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBoxObservation {
    pub center_u: f64,
    pub center_v: f64,
    pub depth: f64,
}

/// Gaussian perturbation of the detected box centre and depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma_px: f64,
    pub sigma_depth: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { sigma_px: 4.0, sigma_depth: 0.003 }
    }
}

/// Linear-spring contact model for the z descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    pub f_z_threshold: f64,
    pub surface_z: f64,
    pub stiffness: f64,
    pub descent_step: f64,
    pub max_travel_mm: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            f_z_threshold: 2.0,
            surface_z: 0.0,
            stiffness: 1.0,
            descent_step: 0.5,
            max_travel_mm: 50.0,
        }
    }
}

/// Project the true platform centre and perturb the detection.
pub fn observe_bbox(
    true_platform: Vec3M,
    k: &CameraIntrinsics,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> Result<BBoxObservation, Stage1Error> {
    let (u, v) = project(true_platform, k)?;
    let nu: f64 = rng.sample(StandardNormal);
    let nv: f64 = rng.sample(StandardNormal);
    let nd: f64 = rng.sample(StandardNormal);
    Ok(BBoxObservation {
        center_u: u + noise.sigma_px * nu,
        center_v: v + noise.sigma_px * nv,
        depth: true_platform.z + noise.sigma_depth * nd,
    })
}

/// Back-project a detection and subtract the known platform-to-peg offset.
pub fn peg_estimate(
    bbox: BBoxObservation,
    k: &CameraIntrinsics,
    platform_to_peg: Vec3M,
) -> Result<Vec3M, Stage1Error> {
    let platform = deproject(bbox.center_u, bbox.center_v, bbox.depth, k)?;
    Ok(peg_from_platform(platform, platform_to_peg))
}

/// Full localization: noisy detection of the platform, then peg estimate.
/// `platform_to_peg` is the known relative offset (platform - peg).
pub fn localize_peg(
    true_peg: Vec3M,
    platform_to_peg: Vec3M,
    k: &CameraIntrinsics,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> Result<Vec3M, Stage1Error> {
    let true_platform = true_peg + platform_to_peg;
    let bbox = observe_bbox(true_platform, k, noise, rng)?;
    peg_estimate(bbox, k, platform_to_peg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactResult {
    pub final_z: f64,
    pub f_z: f64,
    pub steps: u32,
}

/// Lower in `descent_step` increments until the spring force
/// `stiffness * max(0, surface_z - z)` exceeds the threshold.
pub fn descend_until_contact(start_z: f64, contact: &ContactParams) -> Result<ContactResult, Stage1Error> {
    if start_z <= contact.surface_z {
        return Err(Stage1Error::StartBelowSurface { start_z, surface_z: contact.surface_z });
    }
    let mut z = start_z;
    let mut steps = 0;
    loop {
        z -= contact.descent_step;
        steps += 1;
        let f_z = contact.stiffness * (contact.surface_z - z).max(0.0);
        if f_z > contact.f_z_threshold {
            return Ok(ContactResult { final_z: z, f_z, steps });
        }
        if start_z - z > contact.max_travel_mm {
            return Err(Stage1Error::NoContact { max_travel_mm: contact.max_travel_mm });
        }
    }
}

/// Stage-2 start position in the map frame: the estimate error lands the
/// gripper at `target + (estimate - true_peg)`, clamped into the map.
pub fn stage2_start(true_peg_xy: Vec2Mm, estimate_xy: Vec2Mm, map: &GridMap) -> Vec2Mm {
    map.clamp(map.target + (estimate_xy - true_peg_xy))
}
