//! Smoothed robustness as a differentiable graph.
//!
//! Mirrors `stl::smooth_robustness` exactly: atoms keep their hard margins
//! (rectangle face minima route subgradients to the active face), every
//! min/max aggregation becomes a temperature-beta log-sum-exp.

use crate::autodiff::{Real, Shape, Tape, TensorId};
use crate::env::{EnvironmentSpec, Polarity};
use crate::stl::{EvalError, Formula, Interval, Predicate};

/// Builds the smooth robustness of `f` at time 0 over a signal given as
/// per-step state rows (`[1, dim]` tensors), returning a scalar node.
pub fn smooth_robustness_graph<T: Real>(
    tape: &mut Tape<T>,
    f: &Formula,
    env: &EnvironmentSpec,
    state_rows: &[TensorId],
    beta: f64,
) -> Result<TensorId, EvalError> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(EvalError::BadBeta(beta));
    }
    let available = state_rows.len();
    let required = f.horizon() + 1;
    if required > available {
        return Err(EvalError::SignalTooShort { required, available });
    }
    let dim = tape.shape(state_rows[0]).1;
    let signal = tape.concat_rows(state_rows);
    let b = T::from_f64(beta);
    let values = eval(tape, f, env, signal, available, dim, b)?;
    Ok(values[0])
}

// Robustness scalars for t = 0 ..= (len - 1 - horizon(f)).
fn eval<T: Real>(
    tape: &mut Tape<T>,
    f: &Formula,
    env: &EnvironmentSpec,
    signal: TensorId,
    len: usize,
    dim: usize,
    beta: T,
) -> Result<Vec<TensorId>, EvalError> {
    let count = len - f.horizon();
    match f {
        Formula::Atom(p) => {
            let margins = atom_margins(tape, p, env, signal, dim)?;
            Ok((0..len).map(|t| tape.slice_rows(margins, t..t + 1)).collect())
        }
        Formula::Not(g) => {
            let child = eval(tape, g, env, signal, len, dim, beta)?;
            Ok(child.into_iter().take(count).map(|id| tape.scale(id, -T::one())).collect())
        }
        Formula::And(a, b) | Formula::Or(a, b) => {
            let left = eval(tape, a, env, signal, len, dim, beta)?;
            let right = eval(tape, b, env, signal, len, dim, beta)?;
            let soft_min = matches!(f, Formula::And(..));
            (0..count)
                .map(|t| {
                    let pair = tape.concat_rows(&[left[t], right[t]]);
                    Ok(if soft_min { tape.soft_min(pair, beta) } else { tape.soft_max(pair, beta) })
                })
                .collect()
        }
        Formula::Finally(i, g) | Formula::Globally(i, g) => {
            let child = eval(tape, g, env, signal, len, dim, beta)?;
            let soft_min = matches!(f, Formula::Globally(..));
            (0..count)
                .map(|t| {
                    let win = window_ids(&child, i, t);
                    let stacked = tape.concat_rows(&win);
                    Ok(if soft_min {
                        tape.soft_min(stacked, beta)
                    } else {
                        tape.soft_max(stacked, beta)
                    })
                })
                .collect()
        }
        Formula::Until(i, a, b) => {
            let left = eval(tape, a, env, signal, len, dim, beta)?;
            let right = eval(tape, b, env, signal, len, dim, beta)?;
            (0..count)
                .map(|t| {
                    let mut candidates = Vec::with_capacity(i.width());
                    for tp in (t + i.lo)..=(t + i.hi) {
                        let mut xs = vec![right[tp]];
                        xs.extend_from_slice(&left[t..=tp]);
                        let stacked = tape.concat_rows(&xs);
                        candidates.push(tape.soft_min(stacked, beta));
                    }
                    let stacked = tape.concat_rows(&candidates);
                    Ok(tape.soft_max(stacked, beta))
                })
                .collect()
        }
    }
}

fn window_ids(values: &[TensorId], i: &Interval, t: usize) -> Vec<TensorId> {
    values[(t + i.lo)..=(t + i.hi)].to_vec()
}

// Margin column `[len, 1]` for an atom over the whole signal.
fn atom_margins<T: Real>(
    tape: &mut Tape<T>,
    p: &Predicate,
    env: &EnvironmentSpec,
    signal: TensorId,
    dim: usize,
) -> Result<TensorId, EvalError> {
    match p {
        Predicate::Region { name, polarity } => {
            if dim < 2 {
                return Err(EvalError::DimensionMismatch { expected: 2, found: dim });
            }
            let region =
                env.regions.get(name).ok_or_else(|| EvalError::UnknownRegion(name.clone()))?;
            let rect = region.rect();
            // Four signed face distances as affine columns of the signal:
            // [px - xlo, xhi - px, py - ylo, yhi - py]
            let mut weights = vec![T::zero(); dim * 4];
            weights[0] = T::one(); // px -> face 0
            weights[1] = -T::one(); // px -> face 1
            weights[dim + 2] = T::one(); // py -> face 2
            weights[dim + 3] = -T::one(); // py -> face 3
            let w = tape.constant(Shape(dim, 4), weights);
            let bias = tape.constant(
                Shape(1, 4),
                vec![
                    T::from_f64(-rect.x[0]),
                    T::from_f64(rect.x[1]),
                    T::from_f64(-rect.y[0]),
                    T::from_f64(rect.y[1]),
                ],
            );
            let faces = tape.matmul(signal, w);
            let faces = tape.add_bias(faces, bias);
            let margins = tape.row_min(faces);
            Ok(match polarity {
                Polarity::Inside => margins,
                Polarity::Outside => tape.scale(margins, -T::one()),
            })
        }
        Predicate::Affine { weights, offset } => {
            if weights.len() != dim {
                return Err(EvalError::DimensionMismatch { expected: weights.len(), found: dim });
            }
            let w = tape.constant(Shape(dim, 1), weights.iter().map(|v| T::from_f64(*v)).collect());
            let col = tape.matmul(signal, w);
            let bias = tape.constant(Shape(1, 1), vec![T::from_f64(*offset)]);
            Ok(tape.add_bias(col, bias))
        }
    }
}
