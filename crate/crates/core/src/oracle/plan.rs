//! Single-trajectory planning by smoothed-robustness ascent.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Shape, Tape};
use crate::derive_seed;
use crate::env::{self, Action, EnvironmentSpec, State, Trajectory};
use crate::stl::{robustness, satisfies, EvalError, Formula, Signal};
use crate::train::optim::{Adam, AdamConfig};

use super::stl_tape::smooth_robustness_graph;

/// Optimizer settings for the planning oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Smoothing temperatures, coarse to fine.
    pub beta_schedule: Vec<f64>,
    /// Adam step size per beta stage (same length as `beta_schedule`).
    pub step_sizes: Vec<f64>,
    /// Iterations per beta stage; one restart runs
    /// `beta_schedule.len() * iters_per_stage` iterations at most.
    pub iters_per_stage: usize,
    /// Random restarts per initial state.
    pub restarts: usize,
    /// Action regularization weight.
    pub action_reg: f64,
    /// Exact robustness must exceed this margin for acceptance.
    pub accept_margin: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            beta_schedule: vec![2.0, 10.0, 50.0],
            step_sizes: vec![0.2, 0.1, 0.05],
            iters_per_stage: 60,
            restarts: 4,
            action_reg: 1e-3,
            accept_margin: 0.05,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.beta_schedule.is_empty() {
            return Err(OracleError::BadConfig("beta_schedule must be non-empty".into()));
        }
        if self.step_sizes.len() != self.beta_schedule.len() {
            return Err(OracleError::BadConfig(
                "step_sizes must match beta_schedule length".into(),
            ));
        }
        if self.beta_schedule.iter().any(|b| !(*b > 0.0)) {
            return Err(OracleError::BadConfig("beta values must be positive".into()));
        }
        if self.restarts < 1 {
            return Err(OracleError::BadConfig("restarts must be >= 1".into()));
        }
        if self.accept_margin < 0.0 {
            return Err(OracleError::BadConfig("accept_margin must be >= 0".into()));
        }
        if self.iters_per_stage == 0 {
            return Err(OracleError::BadConfig("iters_per_stage must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle config invalid: {0}")]
    BadConfig(String),
    #[error("formula has zero horizon; nothing to plan")]
    ZeroHorizon,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Env(#[from] env::EnvError),
}

/// Planning result: a verified trajectory, or the best robustness achieved.
#[derive(Debug, Clone)]
pub enum PlanOutcome {
    Planned(Trajectory),
    Infeasible { best_robustness: f64, restarts: usize },
}

impl PlanOutcome {
    pub fn trajectory(self) -> Option<Trajectory> {
        match self {
            PlanOutcome::Planned(t) => Some(t),
            PlanOutcome::Infeasible { .. } => None,
        }
    }
}

/// Plans actions for `f` from `x0`. Decision variables are pre-squash
/// actions `u`; the applied actions are `a_max * tanh(u)`, so bounds hold by
/// construction. Every candidate is re-folded through the exact dynamics and
/// accepted only if the exact boolean monitor passes with
/// `robustness > accept_margin`.
pub fn plan(
    f: &Formula,
    x0: &State,
    env: &EnvironmentSpec,
    cfg: &OracleConfig,
    seed: u64,
) -> Result<PlanOutcome, OracleError> {
    cfg.validate()?;
    let n = f.horizon();
    if n == 0 {
        return Err(OracleError::ZeroHorizon);
    }
    let mut best_rho = f64::NEG_INFINITY;
    for restart in 0..cfg.restarts {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, &[restart as u64]));
        let mut u: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut adam = Adam::new(u.len(), AdamConfig::default());
        for (&beta, &lr) in cfg.beta_schedule.iter().zip(&cfg.step_sizes) {
            for _ in 0..cfg.iters_per_stage {
                let grads = objective_grad(f, x0, env, cfg, &u, beta)?;
                // Ascend: Adam descends, so feed the negated gradient.
                let neg: Vec<f64> = grads.iter().map(|g| -g).collect();
                adam.step(&mut u, &neg, lr);
            }
            // Exact verification after each stage allows early acceptance.
            if let Some(traj) = verify(f, x0, env, cfg, &u)? {
                return Ok(PlanOutcome::Planned(traj));
            }
            best_rho = best_rho.max(exact_rho(f, x0, env, &u)?);
        }
    }
    Ok(PlanOutcome::Infeasible { best_robustness: best_rho, restarts: cfg.restarts })
}

fn actions_from(u: &[f64], a_max: f64) -> Vec<Action> {
    u.chunks(2).map(|c| Action::new(a_max * c[0].tanh(), a_max * c[1].tanh())).collect()
}

fn exact_rho(f: &Formula, x0: &State, env: &EnvironmentSpec, u: &[f64]) -> Result<f64, OracleError> {
    let actions = actions_from(u, env.a_max);
    let states = env::rollout(x0, &actions, env)?;
    Ok(robustness(f, &Signal::from_states(&states), 0, env)?)
}

fn verify(
    f: &Formula,
    x0: &State,
    env: &EnvironmentSpec,
    cfg: &OracleConfig,
    u: &[f64],
) -> Result<Option<Trajectory>, OracleError> {
    let actions = actions_from(u, env.a_max);
    let states = env::rollout(x0, &actions, env)?;
    let signal = Signal::from_states(&states);
    let rho = robustness(f, &signal, 0, env)?;
    if rho > cfg.accept_margin && satisfies(f, &signal, 0, env)? {
        Ok(Some(Trajectory {
            spec_id: String::new(),
            states,
            actions,
            robustness_at_generation: rho,
        }))
    } else {
        Ok(None)
    }
}

// Gradient of smooth_robustness(rollout(u)) - action_reg * sum(a^2) w.r.t. u.
fn objective_grad(
    f: &Formula,
    x0: &State,
    env: &EnvironmentSpec,
    cfg: &OracleConfig,
    u: &[f64],
    beta: f64,
) -> Result<Vec<f64>, OracleError> {
    let n = u.len() / 2;
    let mut tape: Tape<f64> = Tape::new();
    let u_id = tape.leaf(Shape(n, 2), u.to_vec());
    let squashed = tape.tanh(u_id);
    let actions = tape.scale(squashed, env.a_max);

    let dt = env.dt;
    let x0_row = tape.constant(Shape(1, 4), x0.to_array().to_vec());
    let mut state_rows = Vec::with_capacity(n + 1);
    state_rows.push(x0_row);
    // Positions and velocities as separate [1,2] rows; state rows are
    // reassembled via transpose + concat for the monitor graph.
    let mut p = tape.slice_cols(x0_row, 0..2);
    let mut v = tape.slice_cols(x0_row, 2..4);
    for t in 0..n {
        let a_t = tape.slice_rows(actions, t..t + 1);
        let v_dt = tape.scale(v, dt);
        let a_half = tape.scale(a_t, 0.5 * dt * dt);
        let p_next = {
            let s = tape.add(p, v_dt);
            tape.add(s, a_half)
        };
        let v_next = {
            let a_dt = tape.scale(a_t, dt);
            let raw = tape.add(v, a_dt);
            tape.clamp(raw, -env.v_max, env.v_max)
        };
        let row = tape.concat_cols(&[p_next, v_next]);
        state_rows.push(row);
        p = p_next;
        v = v_next;
    }

    let rho = smooth_robustness_graph(&mut tape, f, env, &state_rows, beta)?;
    let sq = tape.mul(actions, actions);
    let reg = tape.sum(sq);
    let penalty = tape.scale(reg, -cfg.action_reg);
    let objective = tape.add(rho, penalty);
    tape.backward(objective);
    Ok(tape.grad(u_id))
}
