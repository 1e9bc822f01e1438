//! 2D planar world: double-integrator dynamics, named rectangular regions,
//! atomic-predicate margins, and initial-state sampling.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_FORMAT_VERSION: u32 = 1;

/// Axis-aligned rectangle, `x = [xlo, xhi]`, `y = [ylo, yhi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Rect {
    pub fn new(xlo: f64, xhi: f64, ylo: f64, yhi: f64) -> Self {
        Rect { x: [xlo, xhi], y: [ylo, yhi] }
    }

    /// Signed margin of `(px, py)` w.r.t. this rectangle: the minimum of the
    /// four signed face distances. Positive strictly inside, zero on the
    /// boundary, negative outside.
    pub fn margin(&self, px: f64, py: f64) -> f64 {
        let dx_lo = px - self.x[0];
        let dx_hi = self.x[1] - px;
        let dy_lo = py - self.y[0];
        let dy_hi = self.y[1] - py;
        dx_lo.min(dx_hi).min(dy_lo).min(dy_hi)
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        self.margin(px, py) > 0.0
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x[0] + self.x[1]) / 2.0, (self.y[0] + self.y[1]) / 2.0)
    }

    pub fn area(&self) -> f64 {
        (self.x[1] - self.x[0]) * (self.y[1] - self.y[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionRole {
    Goal,
    Obstacle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub role: RegionRole,
}

impl Region {
    pub fn rect(&self) -> Rect {
        Rect { x: self.x, y: self.y }
    }
}

/// Polarity of a region predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Inside,
    Outside,
}

/// Workspace, regions, and actuation limits. Immutable after load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub format_version: u32,
    /// Step duration in seconds.
    pub dt: f64,
    /// Per-axis acceleration bound (m/s^2).
    pub a_max: f64,
    /// Per-axis speed clamp (m/s).
    pub v_max: f64,
    pub workspace: Rect,
    /// Named regions, ordered by name.
    pub regions: BTreeMap<String, Region>,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("environment file `{path}`: {message}")]
    File { path: String, message: String },
    #[error("environment format_version {found} unsupported (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error("non-finite input to step: state {state:?}, action {action:?}")]
    NonFinite { state: State, action: Action },
    #[error("initial-state sampling exhausted {0} rejection attempts; obstacle covers workspace?")]
    RejectionBudget(usize),
}

/// Point-mass state: position (m), velocity (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
}

impl State {
    pub fn new(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        State { px, py, vx, vy }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.px, self.py, self.vx, self.vy]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        State { px: a[0], py: a[1], vx: a[2], vy: a[3] }
    }

    pub fn is_finite(&self) -> bool {
        self.px.is_finite() && self.py.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }
}

/// Acceleration command (m/s^2 per axis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub ax: f64,
    pub ay: f64,
}

impl Action {
    pub fn new(ax: f64, ay: f64) -> Self {
        Action { ax, ay }
    }

    pub fn to_array(&self) -> [f64; 2] {
        [self.ax, self.ay]
    }

    pub fn is_finite(&self) -> bool {
        self.ax.is_finite() && self.ay.is_finite()
    }
}

/// A planned or rolled-out trajectory: `states.len() == actions.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub spec_id: String,
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub robustness_at_generation: f64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// True when every consecutive state pair reproduces `step` exactly.
    pub fn dynamics_consistent(&self, env: &EnvironmentSpec) -> bool {
        if self.states.len() != self.actions.len() + 1 {
            return false;
        }
        self.actions.iter().enumerate().all(|(t, a)| match step(&self.states[t], a, env) {
            Ok(next) => next == self.states[t + 1],
            Err(_) => false,
        })
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// One step of the double integrator.
///
/// The action is clamped to `±a_max` per axis, positions integrate the clamped
/// acceleration over `dt`, and velocities are clamped to `±v_max`.
pub fn step(x: &State, a: &Action, env: &EnvironmentSpec) -> Result<State, EnvError> {
    if !x.is_finite() || !a.is_finite() {
        return Err(EnvError::NonFinite { state: *x, action: *a });
    }
    let (dt, am, vm) = (env.dt, env.a_max, env.v_max);
    let ax = clamp(a.ax, -am, am);
    let ay = clamp(a.ay, -am, am);
    Ok(State {
        px: x.px + x.vx * dt + 0.5 * ax * dt * dt,
        py: x.py + x.vy * dt + 0.5 * ay * dt * dt,
        vx: clamp(x.vx + ax * dt, -vm, vm),
        vy: clamp(x.vy + ay * dt, -vm, vm),
    })
}

/// Folds `step` over an action sequence.
pub fn rollout(x0: &State, actions: &[Action], env: &EnvironmentSpec) -> Result<Vec<State>, EnvError> {
    let mut states = Vec::with_capacity(actions.len() + 1);
    states.push(*x0);
    for a in actions {
        let next = step(states.last().unwrap(), a, env)?;
        states.push(next);
    }
    Ok(states)
}

/// Signed membership margin of a state in a named region.
///
/// `Inside` polarity: positive iff the position is strictly inside the
/// rectangle. `Outside` negates.
pub fn atom_margin(
    region_name: &str,
    polarity: Polarity,
    x: &State,
    env: &EnvironmentSpec,
) -> Result<f64, EnvError> {
    let region = env
        .regions
        .get(region_name)
        .ok_or_else(|| EnvError::UnknownRegion(region_name.to_string()))?;
    let m = region.rect().margin(x.px, x.py);
    Ok(match polarity {
        Polarity::Inside => m,
        Polarity::Outside => -m,
    })
}

const SAMPLE_REJECTION_BUDGET: usize = 100_000;
const SAMPLE_V_RANGE: f64 = 0.5;

/// Samples an initial state: position uniform over the workspace excluding
/// obstacle interiors (rejection sampling), velocity uniform in
/// `[-0.5, 0.5]` per axis. Deterministic for a fixed seed.
pub fn sample_initial_state(rng_seed: u64, env: &EnvironmentSpec) -> Result<State, EnvError> {
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let ws = env.workspace;
    for _ in 0..SAMPLE_REJECTION_BUDGET {
        let px = rng.gen_range(ws.x[0]..ws.x[1]);
        let py = rng.gen_range(ws.y[0]..ws.y[1]);
        let blocked = env
            .regions
            .values()
            .any(|r| r.role == RegionRole::Obstacle && r.rect().contains(px, py));
        if blocked {
            continue;
        }
        let vx = rng.gen_range(-SAMPLE_V_RANGE..SAMPLE_V_RANGE);
        let vy = rng.gen_range(-SAMPLE_V_RANGE..SAMPLE_V_RANGE);
        return Ok(State { px, py, vx, vy });
    }
    Err(EnvError::RejectionBudget(SAMPLE_REJECTION_BUDGET))
}

impl EnvironmentSpec {
    /// The default world: 10 m square workspace, three goal regions, one
    /// central obstacle, unit step, `a_max = 1`, `v_max = 2`.
    pub fn default_world() -> Self {
        let mut regions = BTreeMap::new();
        regions.insert(
            "R1".to_string(),
            Region { x: [6.0, 8.0], y: [6.0, 8.0], role: RegionRole::Goal },
        );
        regions.insert(
            "R2".to_string(),
            Region { x: [1.0, 3.0], y: [6.0, 8.0], role: RegionRole::Goal },
        );
        regions.insert(
            "R3".to_string(),
            Region { x: [6.0, 8.0], y: [1.0, 3.0], role: RegionRole::Goal },
        );
        regions.insert(
            "O1".to_string(),
            Region { x: [4.0, 6.0], y: [4.0, 6.0], role: RegionRole::Obstacle },
        );
        EnvironmentSpec {
            format_version: ENV_FORMAT_VERSION,
            dt: 1.0,
            a_max: 1.0,
            v_max: 2.0,
            workspace: Rect::new(0.0, 10.0, 0.0, 10.0),
            regions,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.format_version != ENV_FORMAT_VERSION {
            return Err(EnvError::FormatVersion {
                found: self.format_version,
                expected: ENV_FORMAT_VERSION,
            });
        }
        if !(self.a_max > 0.0) {
            return Err(EnvError::Invalid("a_max must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(EnvError::Invalid("dt must be positive".into()));
        }
        if !(self.v_max > 0.0) {
            return Err(EnvError::Invalid("v_max must be positive".into()));
        }
        let ws = self.workspace;
        if !(ws.x[0] < ws.x[1] && ws.y[0] < ws.y[1]) {
            return Err(EnvError::Invalid("workspace must have positive extent".into()));
        }
        for (name, r) in &self.regions {
            if r.x[0] >= r.x[1] || r.y[0] >= r.y[1] {
                return Err(EnvError::Invalid(format!("region {name} has non-positive extent")));
            }
            if r.x[0] < ws.x[0] || r.x[1] > ws.x[1] || r.y[0] < ws.y[0] || r.y[1] > ws.y[1] {
                return Err(EnvError::Invalid(format!("region {name} exceeds the workspace")));
            }
        }
        Ok(())
    }

    pub fn region_names(&self) -> Vec<String> {
        self.regions.keys().cloned().collect()
    }

    /// Area-weighted centroid of the free space (workspace minus obstacle
    /// interiors; assumes obstacles do not overlap each other).
    pub fn free_space_centroid(&self) -> (f64, f64) {
        let ws = self.workspace;
        let (mut area, mut mx, mut my) = {
            let a = ws.area();
            let c = ws.center();
            (a, a * c.0, a * c.1)
        };
        for r in self.regions.values() {
            if r.role == RegionRole::Obstacle {
                let rect = r.rect();
                let a = rect.area();
                let c = rect.center();
                area -= a;
                mx -= a * c.0;
                my -= a * c.1;
            }
        }
        (mx / area, my / area)
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, EnvError> {
        let spec: EnvironmentSpec = toml::from_str(text).map_err(|e| EnvError::File {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path).map_err(|e| EnvError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("environment serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_integrates_the_update_rule() {
        let env = EnvironmentSpec::default_world();
        let x = State::new(0.0, 0.0, 1.0, 0.0);
        let next = step(&x, &Action::new(0.0, 1.0), &env).unwrap();
        assert_eq!(next, State::new(1.0, 0.5, 1.0, 1.0));
    }

    #[test]
    fn step_fixed_point_at_rest() {
        let env = EnvironmentSpec::default_world();
        let x = State::new(0.0, 0.0, 0.0, 0.0);
        let next = step(&x, &Action::new(0.0, 0.0), &env).unwrap();
        assert_eq!(next, x);
    }

    #[test]
    fn step_clamps_actions() {
        let mut env = EnvironmentSpec::default_world();
        env.a_max = 2.0;
        let x = State::new(0.0, 0.0, 0.0, 0.0);
        let big = step(&x, &Action::new(10.0, 0.0), &env).unwrap();
        let clamped = step(&x, &Action::new(2.0, 0.0), &env).unwrap();
        assert_eq!(big, clamped);
    }

    #[test]
    fn step_rejects_non_finite() {
        let env = EnvironmentSpec::default_world();
        let x = State::new(f64::NAN, 0.0, 0.0, 0.0);
        assert!(step(&x, &Action::new(0.0, 0.0), &env).is_err());
    }

    #[test]
    fn atom_margin_examples() {
        let mut env = EnvironmentSpec::default_world();
        env.regions.insert(
            "Q".into(),
            Region { x: [4.0, 6.0], y: [4.0, 6.0], role: RegionRole::Goal },
        );
        let center = State::new(5.0, 5.0, 0.0, 0.0);
        assert_eq!(atom_margin("Q", Polarity::Inside, &center, &env).unwrap(), 1.0);
        assert_eq!(atom_margin("Q", Polarity::Outside, &center, &env).unwrap(), -1.0);
        let boundary = State::new(4.0, 5.0, 0.0, 0.0);
        assert_eq!(atom_margin("Q", Polarity::Inside, &boundary, &env).unwrap(), 0.0);
        assert!(!env.regions["Q"].rect().contains(4.0, 5.0));
        assert!(atom_margin("nope", Polarity::Inside, &center, &env).is_err());
    }

    #[test]
    fn margin_sign_matches_interval_test_on_grid() {
        let rect = Rect::new(4.0, 6.0, 4.0, 6.0);
        for i in 0..100 {
            for j in 0..100 {
                let px = 10.0 * (i as f64) / 99.0;
                let py = 10.0 * (j as f64) / 99.0;
                let inside = px > 4.0 && px < 6.0 && py > 4.0 && py < 6.0;
                assert_eq!(rect.margin(px, py) > 0.0, inside, "at ({px}, {py})");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_avoids_obstacle() {
        let env = EnvironmentSpec::default_world();
        let a = sample_initial_state(42, &env).unwrap();
        let b = sample_initial_state(42, &env).unwrap();
        assert_eq!(a, b);

        let obstacle = env.regions["O1"].rect();
        for i in 0..10_000u64 {
            let s = sample_initial_state(i, &env).unwrap();
            assert!(!obstacle.contains(s.px, s.py), "sample {i} inside obstacle");
            assert!(s.vx.abs() <= 0.5 && s.vy.abs() <= 0.5);
        }
    }

    #[test]
    fn sample_mean_approaches_free_space_centroid() {
        let env = EnvironmentSpec::default_world();
        let n = 10_000u64;
        let (mut sx, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let s = sample_initial_state(crate::derive_seed(1234, &[i]), &env).unwrap();
            sx += s.px;
            sy += s.py;
        }
        let mean = (sx / n as f64, sy / n as f64);
        let centroid = env.free_space_centroid();
        assert_eq!(centroid, (5.0, 5.0));
        let tol = 0.05 * (env.workspace.x[1] - env.workspace.x[0]);
        assert!((mean.0 - centroid.0).abs() < tol, "mean {mean:?}");
        assert!((mean.1 - centroid.1).abs() < tol, "mean {mean:?}");
    }

    #[test]
    fn rollout_respects_velocity_clamp() {
        let env = EnvironmentSpec::default_world();
        let x0 = State::new(0.0, 0.0, 0.0, 0.0);
        let actions: Vec<Action> = (0..20).map(|_| Action::new(5.0, -3.0)).collect();
        let states = rollout(&x0, &actions, &env).unwrap();
        for s in &states {
            assert!(s.vx.abs() <= env.v_max + 1e-12);
            assert!(s.vy.abs() <= env.v_max + 1e-12);
        }
    }

    #[test]
    fn env_file_round_trips() {
        let env = EnvironmentSpec::default_world();
        let text = env.to_toml_string();
        let back = EnvironmentSpec::from_toml_str(&text, "inline").unwrap();
        assert_eq!(env, back);
    }

    #[test]
    fn env_validation_rejects_bad_version_and_geometry() {
        let mut env = EnvironmentSpec::default_world();
        env.format_version = 99;
        assert!(matches!(env.validate(), Err(EnvError::FormatVersion { .. })));

        let mut env = EnvironmentSpec::default_world();
        env.regions.insert(
            "bad".into(),
            Region { x: [9.0, 12.0], y: [0.0, 1.0], role: RegionRole::Goal },
        );
        assert!(env.validate().is_err());
    }
}
