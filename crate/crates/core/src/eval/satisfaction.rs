use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Real;
use crate::env::{sample_initial_state, EnvironmentSpec, Trajectory};
use crate::model::{rollout, Model, RolloutError, RolloutMode};
use crate::stl::{render_canonical, satisfies, Formula, Signal};
use crate::{derive_seed, label_hash};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Monitor(#[from] crate::stl::EvalError),
    #[error("n_samples must be >= 1")]
    NoSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRow {
    pub index: usize,
    pub satisfied: bool,
    pub rho: f64,
}

/// Pre-clamp actuation-bound violations across a set of trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuationAudit {
    pub violations: usize,
    pub actions_checked: usize,
    pub max_abs_action: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spec_id: String,
    pub formula: String,
    pub n_samples: usize,
    pub seed: u64,
    pub mode: RolloutMode,
    pub checkpoint_fingerprint: String,
    pub satisfaction_pct: f64,
    pub rho_min: f64,
    pub rho_median: f64,
    pub rho_max: f64,
    pub actuation: ActuationAudit,
    pub per_rollout: Vec<RolloutRow>,
}

/// Rolls the model out from `n_samples` seeded initial states and scores
/// exact satisfaction of `f`. Read-only on the model.
#[allow(clippy::too_many_arguments)]
pub fn satisfaction_rate<T: Real>(
    model: &Model<T>,
    spec_id: &str,
    f: &Formula,
    n_samples: usize,
    seed: u64,
    env: &EnvironmentSpec,
    mode: RolloutMode,
    fingerprint: &str,
    jobs: Option<usize>,
) -> Result<EvalReport, EvalError> {
    let trajectories = rollout_many(model, f, n_samples, seed, env, mode, jobs)?;
    report_from(spec_id, f, &trajectories, n_samples, seed, env, mode, fingerprint)
}

/// Shared rollout fan-out: one trajectory per seeded initial state.
pub(crate) fn rollout_many<T: Real>(
    model: &Model<T>,
    f: &Formula,
    n_samples: usize,
    seed: u64,
    env: &EnvironmentSpec,
    mode: RolloutMode,
    jobs: Option<usize>,
) -> Result<Vec<Trajectory>, EvalError> {
    if n_samples == 0 {
        return Err(EvalError::NoSamples);
    }
    let items: Vec<u64> = (0..n_samples as u64).collect();
    let results = crate::par::map_indexed(items, jobs, |_, i| {
        let x0_seed = derive_seed(seed, &[label_hash("eval-x0"), i]);
        let x0 = sample_initial_state(x0_seed, env)?;
        rollout(model, f, &x0, env, mode).map_err(EvalError::from)
    });
    results.into_iter().collect()
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn report_from(
    spec_id: &str,
    f: &Formula,
    trajectories: &[Trajectory],
    n_samples: usize,
    seed: u64,
    env: &EnvironmentSpec,
    mode: RolloutMode,
    fingerprint: &str,
) -> Result<EvalReport, EvalError> {
    let mut rows = Vec::with_capacity(trajectories.len());
    for (index, traj) in trajectories.iter().enumerate() {
        let signal = Signal::from_states(&traj.states);
        let satisfied = satisfies(f, &signal, 0, env)?;
        let rho = crate::stl::robustness(f, &signal, 0, env)?;
        rows.push(RolloutRow { index, satisfied, rho });
    }
    let satisfied = rows.iter().filter(|r| r.satisfied).count();
    let mut rhos: Vec<f64> = rows.iter().map(|r| r.rho).collect();
    rhos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(EvalReport {
        spec_id: spec_id.to_string(),
        formula: render_canonical(f),
        n_samples,
        seed,
        mode,
        checkpoint_fingerprint: fingerprint.to_string(),
        satisfaction_pct: 100.0 * satisfied as f64 / n_samples as f64,
        rho_min: rhos.first().copied().unwrap_or(f64::NAN),
        rho_median: rhos[rhos.len() / 2],
        rho_max: rhos.last().copied().unwrap_or(f64::NAN),
        actuation: actuation_audit(trajectories, env),
        per_rollout: rows,
    })
}

/// Counts model actions whose pre-clamp magnitude exceeds `a_max` on either
/// axis, and reports the largest magnitude seen.
pub fn actuation_audit(trajectories: &[Trajectory], env: &EnvironmentSpec) -> ActuationAudit {
    let mut violations = 0;
    let mut checked = 0;
    let mut max_abs: f64 = 0.0;
    for traj in trajectories {
        for a in &traj.actions {
            checked += 1;
            let m = a.ax.abs().max(a.ay.abs());
            max_abs = max_abs.max(m);
            if m > env.a_max {
                violations += 1;
            }
        }
    }
    ActuationAudit { violations, actions_checked: checked, max_abs_action: max_abs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, State};
    use crate::model::ModelConfig;
    use crate::stl::{parse, Vocab};

    fn tiny_model() -> Model<f64> {
        let env = EnvironmentSpec::default_world();
        let vocab = Vocab::build(32, &env.region_names());
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            d_tok: 8,
            h_max: 32,
            max_spec_tokens: 64,
            dropout: 0.0,
            ablation: false,
        };
        Model::new(cfg, vocab, 9).unwrap()
    }

    #[test]
    fn untrained_model_reports_without_error() {
        let env = EnvironmentSpec::default_world();
        let model = tiny_model();
        let f = parse("F[0,5](R1)").unwrap();
        let report = satisfaction_rate(
            &model,
            "reach",
            &f,
            8,
            17,
            &env,
            RolloutMode::DynamicsConsistent,
            "test",
            None,
        )
        .unwrap();
        assert_eq!(report.per_rollout.len(), 8);
        assert!((0.0..=100.0).contains(&report.satisfaction_pct));
        // Recount contract: the percentage is exactly the boolean column.
        let recount = report.per_rollout.iter().filter(|r| r.satisfied).count();
        assert_eq!(report.satisfaction_pct, 100.0 * recount as f64 / 8.0);
    }

    #[test]
    fn identical_seeds_give_identical_reports() {
        let env = EnvironmentSpec::default_world();
        let model = tiny_model();
        let f = parse("F[0,4](R3)").unwrap();
        let a = satisfaction_rate(&model, "s", &f, 5, 3, &env, RolloutMode::DynamicsConsistent, "fp", None)
            .unwrap();
        let b = satisfaction_rate(&model, "s", &f, 5, 3, &env, RolloutMode::DynamicsConsistent, "fp", None)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn audit_counts_out_of_bound_actions() {
        let env = EnvironmentSpec::default_world();
        let traj = Trajectory {
            spec_id: "t".into(),
            states: vec![State::new(0.0, 0.0, 0.0, 0.0); 3],
            actions: vec![Action::new(2.0 * env.a_max, 0.0), Action::new(0.3, -0.2)],
            robustness_at_generation: 0.0,
        };
        let audit = actuation_audit(&[traj], &env);
        assert_eq!(audit.violations, 1);
        assert_eq!(audit.actions_checked, 2);
        assert_eq!(audit.max_abs_action, 2.0 * env.a_max);
    }
}
