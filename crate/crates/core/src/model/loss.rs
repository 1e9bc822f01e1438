//! Training losses: MSE + MAE on states and actions, and the specification
//! relevance term `1 - cos(T_emb, C)` over batch-pooled embeddings.

use crate::autodiff::{Real, Tape, TensorId};

use super::ForwardOutput;

/// Reference value computation: `MSE(pred, target) + MAE(pred, target)` with
/// means over all elements.
pub fn state_action_error(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len());
    assert!(!pred.is_empty());
    let n = pred.len() as f64;
    let mse: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let mae: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    mse + mae
}

/// `1 - cos(t_emb, c)`, with an epsilon-guarded denominator. The flag reports
/// a degenerate (near zero-norm) input.
pub fn spec_relevance(t_emb: &[f64], c: &[f64]) -> (f64, bool) {
    let (loss, _, _, degenerate) = cosine_grads(t_emb, c);
    (loss, degenerate)
}

/// Loss value plus gradients of `1 - cos(u, v)` w.r.t. both vectors.
///
/// Degenerate norms (<= 1e-12) zero the gradients and report the condition
/// instead of dividing by ~0.
pub fn cosine_grads(u: &[f64], v: &[f64]) -> (f64, Vec<f64>, Vec<f64>, bool) {
    assert_eq!(u.len(), v.len());
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu <= 1e-12 || nv <= 1e-12 {
        return (1.0, vec![0.0; u.len()], vec![0.0; v.len()], true);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let cos = dot / (nu * nv);
    let du: Vec<f64> =
        u.iter().zip(v).map(|(ui, vi)| -(vi / (nu * nv) - cos * ui / (nu * nu))).collect();
    let dv: Vec<f64> =
        v.iter().zip(u).map(|(vi, ui)| -(ui / (nu * nv) - cos * vi / (nv * nv))).collect();
    (1.0 - cos, du, dv, false)
}

/// Per-sample loss nodes: `MSE + MAE` scalars for states and actions.
pub struct SampleLoss {
    pub l_state: TensorId,
    pub l_action: TensorId,
}

/// Builds the per-sample state/action loss graph against teacher targets.
pub fn sample_loss_graph<T: Real>(
    tape: &mut Tape<T>,
    out: &ForwardOutput,
    target_states: &[[f64; 4]],
    target_actions: &[[f64; 2]],
) -> SampleLoss {
    let n = target_actions.len();
    assert_eq!(target_states.len(), n, "one next-state target per action step");
    let ts: Vec<T> = target_states.iter().flatten().map(|v| T::from_f64(*v)).collect();
    let ta: Vec<T> = target_actions.iter().flatten().map(|v| T::from_f64(*v)).collect();
    let ts = tape.constant(crate::autodiff::Shape(n, 4), ts);
    let ta = tape.constant(crate::autodiff::Shape(n, 2), ta);

    let l_state = mse_mae(tape, out.states_hat, ts);
    let l_action = mse_mae(tape, out.actions_hat, ta);
    SampleLoss { l_state, l_action }
}

fn mse_mae<T: Real>(tape: &mut Tape<T>, pred: TensorId, target: TensorId) -> TensorId {
    let err = tape.sub(pred, target);
    let sq = tape.mul(err, err);
    let mse = tape.mean(sq);
    let ab = tape.abs(err);
    let mae = tape.mean(ab);
    tape.add(mse, mae)
}
