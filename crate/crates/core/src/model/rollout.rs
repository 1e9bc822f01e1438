//! Autoregressive trajectory generation from a trained model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Real, Tape};
use crate::env::{self, Action, EnvironmentSpec, State, Trajectory};
use crate::stl::{robustness, Formula, Signal};

use super::{Model, ModelError, Phase, SampleInput, SpecConditioning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    /// Predicted actions are fed through the true dynamics (default).
    DynamicsConsistent,
    /// Predicted next states are trusted directly.
    OpenLoop,
}

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Env(#[from] env::EnvError),
    #[error("non-finite prediction at step {step}")]
    NonFinite { step: usize },
    #[error("monitor error after rollout: {0}")]
    Monitor(#[from] crate::stl::EvalError),
}

/// Rolls the model out for `horizon(f)` steps from `x0`, conditioned on the
/// formula's token stream (ignored by the PACT ablation). Deterministic: the
/// heads are regression outputs, nothing is sampled.
///
/// Returned actions are the raw head outputs (pre-clamp), so actuation audits
/// can inspect them; in dynamics-consistent mode the states are exactly
/// `step`-folded.
pub fn rollout<T: Real>(
    model: &Model<T>,
    f: &Formula,
    x0: &State,
    env: &EnvironmentSpec,
    mode: RolloutMode,
) -> Result<Trajectory, RolloutError> {
    let n = f.horizon();
    let token_ids = model.tokenize(f)?;
    let spec = if model.cfg.ablation {
        SpecConditioning::Null
    } else {
        SpecConditioning::Tokens(token_ids)
    };

    let mut states: Vec<State> = vec![*x0];
    let mut actions: Vec<Action> = Vec::with_capacity(n);
    for t in 0..n {
        let input = SampleInput {
            spec: spec.clone(),
            states: states.iter().map(|s| s.to_array()).collect(),
            actions: actions.iter().map(|a| a.to_array()).collect(),
        };
        let mut tape: Tape<T> = Tape::new();
        let bound = model.bind(&mut tape);
        let out = model.forward(&mut tape, &bound, &input, &mut Phase::Eval, false)?;
        let hat = tape.value(out.actions_hat);
        let a_t = Action::new(hat[t * 2].as_f64(), hat[t * 2 + 1].as_f64());
        if !a_t.is_finite() {
            return Err(RolloutError::NonFinite { step: t });
        }
        actions.push(a_t);

        let next = match mode {
            RolloutMode::DynamicsConsistent => env::step(&states[t], &a_t, env)?,
            RolloutMode::OpenLoop => {
                // Second pass with the predicted action appended; the state
                // head at ACTION_t emits s_{t+1}.
                let input = SampleInput {
                    spec: spec.clone(),
                    states: states.iter().map(|s| s.to_array()).collect(),
                    actions: actions.iter().map(|a| a.to_array()).collect(),
                };
                let mut tape: Tape<T> = Tape::new();
                let bound = model.bind(&mut tape);
                let out = model.forward(&mut tape, &bound, &input, &mut Phase::Eval, false)?;
                let rows = tape.value(out.states_hat);
                let s = State::new(
                    rows[t * 4].as_f64(),
                    rows[t * 4 + 1].as_f64(),
                    rows[t * 4 + 2].as_f64(),
                    rows[t * 4 + 3].as_f64(),
                );
                if !s.is_finite() {
                    return Err(RolloutError::NonFinite { step: t });
                }
                s
            }
        };
        states.push(next);
    }

    let signal = Signal::from_states(&states);
    let rho = robustness(f, &signal, 0, env)?;
    Ok(Trajectory {
        spec_id: String::new(),
        states,
        actions,
        robustness_at_generation: rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::stl::{parse, Vocab};

    fn setup() -> (Model<f64>, EnvironmentSpec, Formula) {
        let env = EnvironmentSpec::default_world();
        let vocab = Vocab::build(32, &env.region_names());
        let cfg = ModelConfig { d_model: 16, n_heads: 2, n_layers: 1, d_tok: 8, h_max: 32, max_spec_tokens: 64, dropout: 0.0, ablation: false };
        let model = Model::new(cfg, vocab, 4).unwrap();
        let f = parse("F[0,6](R1)").unwrap();
        (model, env, f)
    }

    #[test]
    fn rollout_has_horizon_plus_one_states() {
        let (model, env, f) = setup();
        let x0 = State::new(2.0, 2.0, 0.0, 0.0);
        let traj = rollout(&model, &f, &x0, &env, RolloutMode::DynamicsConsistent).unwrap();
        assert_eq!(traj.states.len(), 7);
        assert_eq!(traj.actions.len(), 6);
    }

    #[test]
    fn dynamics_consistent_mode_folds_step_exactly() {
        let (model, env, f) = setup();
        let x0 = State::new(3.0, 1.0, 0.1, -0.1);
        let traj = rollout(&model, &f, &x0, &env, RolloutMode::DynamicsConsistent).unwrap();
        assert!(traj.dynamics_consistent(&env));
    }

    #[test]
    fn rollout_is_deterministic() {
        let (model, env, f) = setup();
        let x0 = State::new(1.0, 8.0, 0.0, 0.2);
        let a = rollout(&model, &f, &x0, &env, RolloutMode::DynamicsConsistent).unwrap();
        let b = rollout(&model, &f, &x0, &env, RolloutMode::DynamicsConsistent).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn open_loop_mode_runs() {
        let (model, env, f) = setup();
        let x0 = State::new(5.0, 2.0, 0.0, 0.0);
        let traj = rollout(&model, &f, &x0, &env, RolloutMode::OpenLoop).unwrap();
        assert_eq!(traj.states.len(), 7);
        // Open-loop states are head outputs, not dynamics folds, so
        // consistency is not expected from an untrained model.
    }
}
