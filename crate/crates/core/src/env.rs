//! The insertion environments: an offline grid world reconstructed from
//! rendered observations with a dense shaped reward, and a continuous-plane
//! "real" environment with a fixed calibration mismatch applied to commanded
//! actions and a sparse success reward.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{in_bounds, snap_to_grid, GridIndex, GridMap, Vec2Mm};
use crate::render::{ObsImage, Renderer, SceneParams};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called on a terminal episode (t={t}); reset first")]
    TerminalState { t: u32 },
    #[error("descend_and_mesh requires a seated gear")]
    NotSeated,
    #[error("dataset-backed mode: {0}")]
    Dataset(String),
}

/// Single-axis discrete move: ids 0..4 are x steps {-5, -1, +1, +5} mm,
/// ids 4..8 the same steps on y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDiscrete {
    id: u8,
}

pub const DISCRETE_STEPS_MM: [f64; 4] = [-5.0, -1.0, 1.0, 5.0];
pub const N_DISCRETE_ACTIONS: usize = 8;

impl ActionDiscrete {
    pub fn new(id: usize) -> Self {
        assert!(id < N_DISCRETE_ACTIONS, "discrete action id {id} out of range");
        Self { id: id as u8 }
    }

    pub fn id(self) -> usize {
        self.id as usize
    }

    pub fn all() -> impl Iterator<Item = ActionDiscrete> {
        (0..N_DISCRETE_ACTIONS).map(ActionDiscrete::new)
    }

    pub fn offset(self) -> Vec2Mm {
        let step = DISCRETE_STEPS_MM[self.id as usize % 4];
        if self.id < 4 {
            Vec2Mm::new(step, 0.0)
        } else {
            Vec2Mm::new(0.0, step)
        }
    }
}

/// Continuous planar offset, clamped componentwise to [-5, +5] mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionContinuous {
    dx: f64,
    dy: f64,
}

pub const CONTINUOUS_LIMIT_MM: f64 = 5.0;

impl ActionContinuous {
    pub fn new(dx: f64, dy: f64) -> Self {
        Self {
            dx: dx.clamp(-CONTINUOUS_LIMIT_MM, CONTINUOUS_LIMIT_MM),
            dy: dy.clamp(-CONTINUOUS_LIMIT_MM, CONTINUOUS_LIMIT_MM),
        }
    }

    pub fn offset(self) -> Vec2Mm {
        Vec2Mm::new(self.dx, self.dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Discrete(ActionDiscrete),
    Continuous(ActionContinuous),
}

impl Action {
    pub fn commanded_offset(self) -> Vec2Mm {
        match self {
            Action::Discrete(a) => a.offset(),
            Action::Continuous(a) => a.offset(),
        }
    }

    pub fn is_continuous(self) -> bool {
        matches!(self, Action::Continuous(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub beta: f64,
    pub success_reward: f64,
    pub out_of_bounds_terminates: bool,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self { beta: 10.0, success_reward: 1.0, out_of_bounds_terminates: true }
    }
}

/// Fixed rigid offset applied to commanded actions in the real environment:
/// the executed displacement is `rot(rot_deg) * commanded + trans`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calibration {
    pub rot_deg: f64,
    pub trans: Vec2Mm,
}

impl Calibration {
    pub fn identity() -> Self {
        Self { rot_deg: 0.0, trans: Vec2Mm::new(0.0, 0.0) }
    }

    /// Mismatch used for the fine-tuning experiments.
    pub fn default_mismatch() -> Self {
        Self { rot_deg: 5.0, trans: Vec2Mm::new(2.0, 1.0) }
    }

    pub fn is_identity(&self) -> bool {
        self.rot_deg == 0.0 && self.trans.x == 0.0 && self.trans.y == 0.0
    }

    pub fn apply(&self, commanded: Vec2Mm) -> Vec2Mm {
        if self.is_identity() {
            commanded
        } else {
            commanded.rotated_deg(self.rot_deg) + self.trans
        }
    }
}

impl Default for Calibration {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvMode {
    OfflineGrid,
    RealContinuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub map: GridMap,
    pub scene: SceneParams,
    pub reward: RewardParams,
    pub max_steps: u32,
    pub tolerance_mm: f64,
    pub mode: EnvMode,
    pub calibration: Calibration,
    pub sparse_reward: bool,
    /// Height threshold the gear is lowered to once seated.
    pub mesh_height_mm: f64,
}

impl EnvConfig {
    pub fn offline(map: GridMap, scene: SceneParams) -> Self {
        Self {
            map,
            scene,
            reward: RewardParams::default(),
            max_steps: 64,
            tolerance_mm: 0.3,
            mode: EnvMode::OfflineGrid,
            calibration: Calibration::identity(),
            sparse_reward: false,
            mesh_height_mm: 2.0,
        }
    }

    pub fn real(map: GridMap, scene: SceneParams, calibration: Calibration) -> Self {
        Self {
            mode: EnvMode::RealContinuous,
            calibration,
            sparse_reward: true,
            ..Self::offline(map, scene)
        }
    }

    pub fn with_max_steps(mut self, max_steps: u32) -> Self {
        self.max_steps = max_steps;
        self
    }
}

/// POMDP state: gripper centre in the map frame, gear bottom height, step
/// counter and whether the gear has dropped onto the peg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub pos: Vec2Mm,
    pub z: f64,
    pub t: u32,
    pub seated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub snapped: GridIndex,
    pub out_of_bounds: bool,
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Arc<ObsImage>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOutcome {
    pub final_z_mm: f64,
    pub max_rotation_deg: f64,
    pub success: bool,
}

/// Dense shaped reward: `success_reward` on success, otherwise the negative
/// normalized Manhattan distance of the snapped grid point to the map centre,
/// minus `beta` when the move left the sampled rectangle.
pub fn reward_fn(
    snapped: GridIndex,
    map: &GridMap,
    params: &RewardParams,
    out_of_bounds: bool,
    success: bool,
) -> f64 {
    if success {
        return params.success_reward;
    }
    let mut r = -map.center_distance(snapped);
    if out_of_bounds {
        r -= params.beta;
    }
    r
}

/// One environment instance. Single-threaded; run several instances with
/// independent seed streams for parallel collection.
pub struct InsertionEnv {
    cfg: EnvConfig,
    renderer: Renderer,
    target_cells: Vec<GridIndex>,
    /// Lazily rendered observation per grid point (offline mode).
    grid_cache: Vec<Option<Arc<ObsImage>>>,
    /// Observations substituted from a rendered dataset, if configured.
    dataset: Option<Vec<Arc<ObsImage>>>,
    rng: ChaCha8Rng,
    state: EnvState,
    current_obs: Arc<ObsImage>,
    terminal: bool,
}

impl InsertionEnv {
    pub fn new(cfg: EnvConfig, seed_stream: ChaCha8Rng) -> Self {
        let renderer = Renderer::new(cfg.scene.clone());
        let target_cells = cfg.map.target_cells();
        let n = cfg.map.n_points();
        let start = Vec2Mm::new(0.0, 0.0);
        let obs = Arc::new(renderer.observation(start - cfg.map.target));
        Self {
            cfg,
            renderer,
            target_cells,
            grid_cache: vec![None; n],
            dataset: None,
            rng: seed_stream,
            state: EnvState { pos: start, z: 0.0, t: 0, seated: false },
            current_obs: obs,
            terminal: true,
        }
    }

    /// Serve offline observations from pre-rendered dataset images
    /// (row-major grid order) instead of the in-memory renderer.
    pub fn with_dataset(mut self, images: Vec<ObsImage>) -> Result<Self, EnvError> {
        if images.len() != self.cfg.map.n_points() {
            return Err(EnvError::Dataset(format!(
                "expected {} images, got {}",
                self.cfg.map.n_points(),
                images.len()
            )));
        }
        self.dataset = Some(images.into_iter().map(Arc::new).collect());
        Ok(self)
    }

    pub fn cfg(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn map(&self) -> &GridMap {
        &self.cfg.map
    }

    pub fn state(&self) -> EnvState {
        self.state
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn target_cells(&self) -> &[GridIndex] {
        &self.target_cells
    }

    pub fn current_obs(&self) -> Arc<ObsImage> {
        Arc::clone(&self.current_obs)
    }

    pub fn obs_shape(&self) -> [usize; 3] {
        [self.cfg.scene.obs_height, self.cfg.scene.obs_width, crate::render::OBS_CHANNELS]
    }

    fn observe(&mut self, pos: Vec2Mm) -> Arc<ObsImage> {
        if self.cfg.mode == EnvMode::OfflineGrid {
            let idx = snap_to_grid(pos, &self.cfg.map);
            let flat = idx.row * self.cfg.map.n_cols + idx.col;
            if let Some(images) = &self.dataset {
                return Arc::clone(&images[flat]);
            }
            if let Some(img) = &self.grid_cache[flat] {
                return Arc::clone(img);
            }
            let img = Arc::new(self.renderer.observation(pos - self.cfg.map.target));
            self.grid_cache[flat] = Some(Arc::clone(&img));
            img
        } else {
            Arc::new(self.renderer.observation(pos - self.cfg.map.target))
        }
    }

    fn in_success_region(&self, pos: Vec2Mm) -> bool {
        match self.cfg.mode {
            EnvMode::OfflineGrid => {
                let snapped = snap_to_grid(pos, &self.cfg.map);
                self.target_cells.contains(&snapped)
            }
            EnvMode::RealContinuous => pos.distance(self.cfg.map.target) <= self.cfg.tolerance_mm,
        }
    }

    /// Start a new episode from a uniformly drawn position outside the
    /// success region: over grid points in offline mode, over the continuous
    /// rectangle in real mode.
    pub fn reset(&mut self) -> Arc<ObsImage> {
        let mut rng = self.rng.clone();
        let obs = self.reset_with(&mut rng);
        self.rng = rng;
        obs
    }

    /// Like [`Self::reset`], drawing the start from a caller-held stream so
    /// several environments can be evaluated from paired starts.
    pub fn reset_with(&mut self, rng: &mut ChaCha8Rng) -> Arc<ObsImage> {
        let map = self.cfg.map.clone();
        let pos = loop {
            let candidate = match self.cfg.mode {
                EnvMode::OfflineGrid => {
                    let col = rng.random_range(0..map.n_cols);
                    let row = rng.random_range(0..map.n_rows);
                    map.grid_coords(GridIndex::new(col, row))
                }
                EnvMode::RealContinuous => Vec2Mm::new(
                    rng.random_range(0.0..=map.width_mm()),
                    rng.random_range(0.0..=map.height_mm()),
                ),
            };
            if !self.in_success_region(candidate) {
                break candidate;
            }
        };
        self.reset_at(pos)
    }

    /// Start a new episode from a fixed position (clamped into the map).
    pub fn reset_at(&mut self, pos: Vec2Mm) -> Arc<ObsImage> {
        let clamped = self.cfg.map.clamp(pos);
        self.state = EnvState { pos: clamped, z: 0.0, t: 0, seated: false };
        self.terminal = false;
        self.current_obs = self.observe(clamped);
        Arc::clone(&self.current_obs)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        match self.cfg.mode {
            EnvMode::OfflineGrid => self.step_offline(action),
            EnvMode::RealContinuous => self.step_real(action),
        }
    }

    /// Offline grid-world transition: the candidate position is the current
    /// position plus the commanded offset; continuous commands land on the
    /// nearest grid point. Leaving the sampled rectangle ends the episode
    /// with the boundary penalty.
    pub fn step_offline(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.terminal {
            return Err(EnvError::TerminalState { t: self.state.t });
        }
        let map = self.cfg.map.clone();
        let candidate = self.state.pos + action.commanded_offset();
        let out_of_bounds = !in_bounds(candidate, &map);
        let snapped = snap_to_grid(candidate, &map);
        let new_pos = map.grid_coords(snapped);
        let success = !out_of_bounds && self.target_cells.contains(&snapped);
        let reward = if self.cfg.sparse_reward {
            if success {
                self.cfg.reward.success_reward
            } else {
                0.0
            }
        } else {
            reward_fn(snapped, &map, &self.cfg.reward, out_of_bounds, success)
        };
        self.advance(new_pos, snapped, out_of_bounds, success, reward)
    }

    /// Real-world transition: the commanded offset is transformed by the
    /// fixed calibration (rotation then translation) before being applied;
    /// the position stays continuous and the reward is sparse {0, 1}.
    pub fn step_real(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.terminal {
            return Err(EnvError::TerminalState { t: self.state.t });
        }
        let map = self.cfg.map.clone();
        let applied = self.cfg.calibration.apply(action.commanded_offset());
        let candidate = self.state.pos + applied;
        let out_of_bounds = !in_bounds(candidate, &map);
        let new_pos = map.clamp(candidate);
        let success =
            !out_of_bounds && new_pos.distance(map.target) <= self.cfg.tolerance_mm;
        let reward = if success { 1.0 } else { 0.0 };
        let snapped = snap_to_grid(new_pos, &map);
        self.advance(new_pos, snapped, out_of_bounds, success, reward)
    }

    fn advance(
        &mut self,
        new_pos: Vec2Mm,
        snapped: GridIndex,
        out_of_bounds: bool,
        success: bool,
        reward: f64,
    ) -> Result<StepResult, EnvError> {
        self.state.pos = new_pos;
        self.state.t += 1;
        self.state.seated = success;
        let boundary_ends = match self.cfg.mode {
            EnvMode::OfflineGrid => self.cfg.reward.out_of_bounds_terminates,
            EnvMode::RealContinuous => true,
        };
        let done = success || (out_of_bounds && boundary_ends) || self.state.t >= self.cfg.max_steps;
        self.terminal = done;
        self.current_obs = self.observe(new_pos);
        Ok(StepResult {
            obs: Arc::clone(&self.current_obs),
            reward,
            done,
            info: StepInfo { snapped, out_of_bounds, success },
        })
    }

    /// Final insertion once the gear is seated: lower to the height threshold
    /// and rotate by at most half the mounted gear's tooth pitch.
    pub fn descend_and_mesh(&mut self) -> Result<AssemblyOutcome, EnvError> {
        if !self.state.seated {
            return Err(EnvError::NotSeated);
        }
        self.state.z = self.cfg.mesh_height_mm;
        let teeth = self.cfg.scene.mounted_gear_teeth.max(1) as f64;
        Ok(AssemblyOutcome {
            final_z_mm: self.cfg.mesh_height_mm,
            max_rotation_deg: 360.0 / (2.0 * teeth),
            success: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSpec;

    fn small_scene() -> SceneParams {
        SceneParams { obs_width: 16, obs_height: 16, ..SceneParams::default() }
    }

    fn offline_env(seed: u64) -> InsertionEnv {
        let cfg = EnvConfig::offline(GridMap::default_map(), small_scene());
        InsertionEnv::new(cfg, SeedSpec::new(seed).stream("env", 0))
    }

    fn real_env(seed: u64, calibration: Calibration) -> InsertionEnv {
        let cfg = EnvConfig::real(GridMap::default_map(), small_scene(), calibration);
        InsertionEnv::new(cfg, SeedSpec::new(seed).stream("env", 0))
    }

    #[test]
    fn reward_fn_hand_values() {
        let map = GridMap::default_map();
        let params = RewardParams::default();
        assert_eq!(reward_fn(GridIndex::new(0, 0), &map, &params, false, true), 1.0);
        assert!((reward_fn(GridIndex::new(0, 0), &map, &params, false, false) + 0.5).abs() < 1e-15);
        let near = reward_fn(GridIndex::new(17, 15), &map, &params, false, false);
        assert!((near + 1.0 / 140.0).abs() < 1e-15, "got {near}");
        let oob = reward_fn(GridIndex::new(0, 0), &map, &params, true, false);
        assert!((oob + 10.5).abs() < 1e-15);
    }

    #[test]
    fn reward_bounds_and_unique_minimum() {
        // over all cells the non-success reward sits in [-0.5, 0); the
        // minimum -0.5 is attained exactly at the (0,0) corner because the
        // centre n/2 is not equidistant from both ends of a 0-indexed grid
        let map = GridMap::default_map();
        let params = RewardParams::default();
        let mut min = f64::INFINITY;
        let mut argmin = Vec::new();
        for row in 0..map.n_rows {
            for col in 0..map.n_cols {
                let r = reward_fn(GridIndex::new(col, row), &map, &params, false, false);
                assert!((-1.0..0.0).contains(&r), "r={r} at ({col},{row})");
                if r < min - 1e-12 {
                    min = r;
                    argmin = vec![(col, row)];
                } else if (r - min).abs() <= 1e-12 {
                    argmin.push((col, row));
                }
            }
        }
        assert!((min + 0.5).abs() < 1e-15);
        assert_eq!(argmin, vec![(0, 0)]);
    }

    #[test]
    fn reward_monotone_in_axis_distance() {
        let map = GridMap::default_map();
        let params = RewardParams::default();
        for row in 0..map.n_rows {
            for col in 0..map.n_cols.saturating_sub(1) {
                let a = GridIndex::new(col, row);
                let b = GridIndex::new(col + 1, row);
                let (da, db) = (map.center_distance(a), map.center_distance(b));
                let (ra, rb) = (
                    reward_fn(a, &map, &params, false, false),
                    reward_fn(b, &map, &params, false, false),
                );
                if db >= da {
                    assert!(rb <= ra + 1e-15);
                } else {
                    assert!(rb >= ra - 1e-15);
                }
            }
        }
    }

    #[test]
    fn offline_step_to_target_cell_succeeds() {
        let mut env = offline_env(1);
        env.reset_at(Vec2Mm::new(17.0, 14.0));
        let r = env.step(Action::Discrete(ActionDiscrete::new(6))).unwrap(); // y +1
        assert!(r.info.success);
        assert_eq!(r.reward, 1.0);
        assert!(r.done);
        assert_eq!(r.info.snapped, GridIndex::new(17, 15));
        assert!(env.state().seated);
    }

    #[test]
    fn offline_out_of_bounds_pays_beta() {
        let mut env = offline_env(1);
        env.reset_at(Vec2Mm::new(0.0, 0.0));
        let r = env.step(Action::Discrete(ActionDiscrete::new(0))).unwrap(); // x -5
        assert!(r.info.out_of_bounds);
        assert!(r.done);
        assert!((r.reward + 10.5).abs() < 1e-12);
    }

    #[test]
    fn offline_continuous_actions_snap_to_grid() {
        let mut env = offline_env(1);
        env.reset_at(Vec2Mm::new(10.0, 10.0));
        let r = env.step(Action::Continuous(ActionContinuous::new(2.4, 0.0))).unwrap();
        assert_eq!(r.info.snapped, GridIndex::new(12, 10));
        assert_eq!(env.state().pos, Vec2Mm::new(12.0, 10.0));
    }

    #[test]
    fn stepping_terminal_episode_is_an_error() {
        let mut env = offline_env(1);
        env.reset_at(Vec2Mm::new(17.0, 14.0));
        env.step(Action::Discrete(ActionDiscrete::new(6))).unwrap();
        let err = env.step(Action::Discrete(ActionDiscrete::new(0)));
        assert!(matches!(err, Err(EnvError::TerminalState { .. })));
    }

    #[test]
    fn real_success_within_tolerance() {
        let mut env = real_env(1, Calibration::identity());
        let target = env.map().target;
        env.reset_at(target + Vec2Mm::new(0.2, 0.0));
        let r = env.step(Action::Continuous(ActionContinuous::new(-0.2, 0.0))).unwrap();
        assert!(r.info.success);
        assert_eq!(r.reward, 1.0);
        assert!(env.state().seated);
    }

    #[test]
    fn real_nonsuccess_reward_is_zero() {
        let mut env = real_env(1, Calibration::identity());
        env.reset_at(Vec2Mm::new(3.0, 3.0));
        let r = env.step(Action::Continuous(ActionContinuous::new(1.0, 1.0))).unwrap();
        assert!(!r.info.success);
        assert_eq!(r.reward, 0.0);
        assert!(!r.done);
    }

    #[test]
    fn calibration_rotates_commanded_offset() {
        let cal = Calibration { rot_deg: 90.0, trans: Vec2Mm::new(0.0, 0.0) };
        let applied = cal.apply(Vec2Mm::new(1.0, 0.0));
        assert!(applied.x.abs() < 1e-12);
        assert!((applied.y - 1.0).abs() < 1e-12);

        let mut env = real_env(1, cal);
        env.reset_at(Vec2Mm::new(10.0, 10.0));
        env.step(Action::Continuous(ActionContinuous::new(1.0, 0.0))).unwrap();
        let p = env.state().pos;
        assert!((p.x - 10.0).abs() < 1e-12 && (p.y - 11.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_translation_adds_per_command() {
        let cal = Calibration { rot_deg: 0.0, trans: Vec2Mm::new(2.0, 1.0) };
        let applied = cal.apply(Vec2Mm::new(1.0, 0.0));
        assert!((applied.x - 3.0).abs() < 1e-12 && (applied.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_seed_resets_are_identical() {
        let mut a = offline_env(9);
        let mut b = offline_env(9);
        for _ in 0..5 {
            a.reset();
            b.reset();
            assert_eq!(a.state().pos, b.state().pos);
        }
    }

    #[test]
    fn resets_never_start_in_success_region_and_are_uniform() {
        let mut env = offline_env(4);
        let map = env.map().clone();
        let mut counts = vec![0u32; map.n_points()];
        let n_draws = 10_000;
        for _ in 0..n_draws {
            env.reset();
            let idx = snap_to_grid(env.state().pos, &map);
            assert!(!env.target_cells().contains(&idx), "start in success region");
            counts[idx.row * map.n_cols + idx.col] += 1;
        }
        // chi-square uniformity over the 1048 admissible cells
        let cells = map.n_points() - env.target_cells().len();
        let expected = n_draws as f64 / cells as f64;
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let idx = GridIndex::new(i % map.n_cols, i / map.n_cols);
                !env.target_cells().contains(&idx)
            })
            .map(|(_, &c)| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        let df = (cells - 1) as f64;
        let threshold = df + 5.0 * (2.0 * df).sqrt();
        assert!(chi2 < threshold, "chi2={chi2:.1} threshold={threshold:.1}");
    }

    #[test]
    fn real_resets_are_continuous_and_outside_tolerance() {
        let mut env = real_env(5, Calibration::identity());
        let target = env.map().target;
        let mut fractional = 0;
        for _ in 0..200 {
            env.reset();
            let p = env.state().pos;
            assert!(p.distance(target) > env.cfg().tolerance_mm);
            if p.x.fract() != 0.0 || p.y.fract() != 0.0 {
                fractional += 1;
            }
        }
        assert!(fractional > 190, "continuous starts expected, got {fractional} fractional");
    }

    #[test]
    fn offline_transitions_are_bit_reproducible() {
        let run = |seed: u64| {
            let mut env = offline_env(seed);
            let mut log = Vec::new();
            for ep in 0..3 {
                env.reset();
                for i in 0..20 {
                    let a = ActionDiscrete::new(((ep + i) * 3) % 8);
                    match env.step(Action::Discrete(a)) {
                        Ok(r) => {
                            log.push((env.state().pos.x, env.state().pos.y, r.reward, r.done));
                            if r.done {
                                break;
                            }
                        }
                        Err(_) => break,
                    }
                }
            }
            log
        };
        assert_eq!(run(7), run(7));
    }

    #[test]
    fn real_identity_matches_offline_positions_for_snapped_actions() {
        let mut off = offline_env(2);
        let mut real = real_env(2, Calibration::identity());
        let start = Vec2Mm::new(5.0, 7.0);
        off.reset_at(start);
        real.reset_at(start);
        let actions = [3, 3, 7, 1, 6, 2, 7, 3];
        for &id in &actions {
            let a = Action::Discrete(ActionDiscrete::new(id));
            let ro = off.step(a).unwrap();
            let rr = real.step(a).unwrap();
            assert_eq!(off.state().pos, real.state().pos);
            assert_eq!(ro.info.out_of_bounds, rr.info.out_of_bounds);
            if ro.done || rr.done {
                break;
            }
        }
    }

    #[test]
    fn descend_and_mesh_contract() {
        let mut env = real_env(1, Calibration::identity());
        env.reset_at(env.map().target + Vec2Mm::new(0.2, 0.0));
        assert!(matches!(env.descend_and_mesh(), Err(EnvError::NotSeated)));
        env.step(Action::Continuous(ActionContinuous::new(-0.2, 0.0))).unwrap();
        let outcome = env.descend_and_mesh().unwrap();
        assert!(outcome.success);
        assert_eq!(outcome.final_z_mm, env.cfg().mesh_height_mm);
        assert!((outcome.max_rotation_deg - 9.0).abs() < 1e-12); // 360 / (2 * 20)
        assert_eq!(env.state().z, env.cfg().mesh_height_mm);
    }

    #[test]
    fn episode_truncates_at_max_steps() {
        let cfg = EnvConfig::offline(GridMap::default_map(), small_scene()).with_max_steps(3);
        let mut env = InsertionEnv::new(cfg, SeedSpec::new(0).stream("env", 0));
        env.reset_at(Vec2Mm::new(5.0, 20.0));
        // alternate +1/-1 on x, never reaching the target or the boundary
        let mut done = false;
        for i in 0..3 {
            let id = if i % 2 == 0 { 2 } else { 1 };
            done = env.step(Action::Discrete(ActionDiscrete::new(id))).unwrap().done;
        }
        assert!(done);
    }
}
