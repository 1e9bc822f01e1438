//! Boolean, quantitative, and smoothed semantics.
//!
//! `satisfies` and `robustness` are independent recursions: the boolean
//! monitor evaluates the satisfaction clauses directly with short-circuit
//! quantifiers, while robustness runs the min/max recursion. Their agreement
//! (sign consistency) is a checked property, not a definition.

use thiserror::Error;

use crate::env::{EnvironmentSpec, Polarity};
use crate::stl::{Formula, Interval, Predicate, Signal};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("signal too short for horizon: required {required} samples, available {available}")]
    SignalTooShort { required: usize, available: usize },
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("predicate dimension mismatch: predicate expects {expected}, signal has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("smoothing temperature must be positive, got {0}")]
    BadBeta(f64),
}

fn check_length(f: &Formula, s: &Signal, t: usize) -> Result<(), EvalError> {
    let required = t + f.horizon() + 1;
    if required > s.len() {
        return Err(EvalError::SignalTooShort { required, available: s.len() });
    }
    Ok(())
}

fn atom_value(p: &Predicate, row: &[f64], env: &EnvironmentSpec) -> Result<f64, EvalError> {
    match p {
        Predicate::Region { name, polarity } => {
            if row.len() < 2 {
                return Err(EvalError::DimensionMismatch { expected: 2, found: row.len() });
            }
            let region = env
                .regions
                .get(name)
                .ok_or_else(|| EvalError::UnknownRegion(name.clone()))?;
            let m = region.rect().margin(row[0], row[1]);
            Ok(match polarity {
                Polarity::Inside => m,
                Polarity::Outside => -m,
            })
        }
        Predicate::Affine { weights, offset } => {
            if weights.len() != row.len() {
                return Err(EvalError::DimensionMismatch {
                    expected: weights.len(),
                    found: row.len(),
                });
            }
            Ok(weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + offset)
        }
    }
}

fn window(i: &Interval, t: usize) -> std::ops::RangeInclusive<usize> {
    (t + i.lo)..=(t + i.hi)
}

/// Boolean satisfaction of `f` by the signal suffix starting at `t`.
pub fn satisfies(f: &Formula, s: &Signal, t: usize, env: &EnvironmentSpec) -> Result<bool, EvalError> {
    check_length(f, s, t)?;
    eval_bool(f, s, t, env)
}

fn eval_bool(f: &Formula, s: &Signal, t: usize, env: &EnvironmentSpec) -> Result<bool, EvalError> {
    match f {
        Formula::Atom(p) => Ok(atom_value(p, s.row(t), env)? > 0.0),
        Formula::Not(g) => Ok(!eval_bool(g, s, t, env)?),
        Formula::And(a, b) => Ok(eval_bool(a, s, t, env)? && eval_bool(b, s, t, env)?),
        Formula::Or(a, b) => Ok(eval_bool(a, s, t, env)? || eval_bool(b, s, t, env)?),
        Formula::Finally(i, g) => {
            for tp in window(i, t) {
                if eval_bool(g, s, tp, env)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Formula::Globally(i, g) => {
            for tp in window(i, t) {
                if !eval_bool(g, s, tp, env)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Until(i, a, b) => {
            for tp in window(i, t) {
                if eval_bool(b, s, tp, env)? {
                    let mut held = true;
                    for tq in t..=tp {
                        if !eval_bool(a, s, tq, env)? {
                            held = false;
                            break;
                        }
                    }
                    if held {
                        return Ok(true);
                    }
                }
            }
            Ok(false)
        }
    }
}

/// Quantitative robustness: positive iff the formula holds with slack.
pub fn robustness(f: &Formula, s: &Signal, t: usize, env: &EnvironmentSpec) -> Result<f64, EvalError> {
    check_length(f, s, t)?;
    eval_rho(f, s, t, env)
}

fn eval_rho(f: &Formula, s: &Signal, t: usize, env: &EnvironmentSpec) -> Result<f64, EvalError> {
    match f {
        Formula::Atom(p) => atom_value(p, s.row(t), env),
        Formula::Not(g) => Ok(-eval_rho(g, s, t, env)?),
        Formula::And(a, b) => Ok(eval_rho(a, s, t, env)?.min(eval_rho(b, s, t, env)?)),
        Formula::Or(a, b) => Ok(eval_rho(a, s, t, env)?.max(eval_rho(b, s, t, env)?)),
        Formula::Finally(i, g) => {
            let mut best = f64::NEG_INFINITY;
            for tp in window(i, t) {
                best = best.max(eval_rho(g, s, tp, env)?);
            }
            Ok(best)
        }
        Formula::Globally(i, g) => {
            let mut worst = f64::INFINITY;
            for tp in window(i, t) {
                worst = worst.min(eval_rho(g, s, tp, env)?);
            }
            Ok(worst)
        }
        Formula::Until(i, a, b) => {
            let mut best = f64::NEG_INFINITY;
            let mut prefix_min = f64::INFINITY;
            for tq in t..t + i.lo {
                prefix_min = prefix_min.min(eval_rho(a, s, tq, env)?);
            }
            for tp in window(i, t) {
                prefix_min = prefix_min.min(eval_rho(a, s, tp, env)?);
                let candidate = eval_rho(b, s, tp, env)?.min(prefix_min);
                best = best.max(candidate);
            }
            Ok(best)
        }
    }
}

/// Differentiable surrogate: min/max aggregations replaced by temperature-beta
/// log-sum-exp. Atom margins stay exact, so
/// `|smooth - exact| <= f.smooth_log_width() / beta`.
pub fn smooth_robustness(
    f: &Formula,
    s: &Signal,
    t: usize,
    env: &EnvironmentSpec,
    beta: f64,
) -> Result<f64, EvalError> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(EvalError::BadBeta(beta));
    }
    check_length(f, s, t)?;
    eval_smooth(f, s, t, env, beta)
}

/// Max-shifted log-sum-exp soft maximum.
pub(crate) fn soft_max(xs: &[f64], beta: f64) -> f64 {
    debug_assert!(!xs.is_empty());
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| ((x - m) * beta).exp()).sum::<f64>().ln() / beta
}

pub(crate) fn soft_min(xs: &[f64], beta: f64) -> f64 {
    let negated: Vec<f64> = xs.iter().map(|x| -x).collect();
    -soft_max(&negated, beta)
}

fn eval_smooth(
    f: &Formula,
    s: &Signal,
    t: usize,
    env: &EnvironmentSpec,
    beta: f64,
) -> Result<f64, EvalError> {
    match f {
        Formula::Atom(p) => atom_value(p, s.row(t), env),
        Formula::Not(g) => Ok(-eval_smooth(g, s, t, env, beta)?),
        Formula::And(a, b) => {
            let xs = [eval_smooth(a, s, t, env, beta)?, eval_smooth(b, s, t, env, beta)?];
            Ok(soft_min(&xs, beta))
        }
        Formula::Or(a, b) => {
            let xs = [eval_smooth(a, s, t, env, beta)?, eval_smooth(b, s, t, env, beta)?];
            Ok(soft_max(&xs, beta))
        }
        Formula::Finally(i, g) => {
            let mut xs = Vec::with_capacity(i.width());
            for tp in window(i, t) {
                xs.push(eval_smooth(g, s, tp, env, beta)?);
            }
            Ok(soft_max(&xs, beta))
        }
        Formula::Globally(i, g) => {
            let mut xs = Vec::with_capacity(i.width());
            for tp in window(i, t) {
                xs.push(eval_smooth(g, s, tp, env, beta)?);
            }
            Ok(soft_min(&xs, beta))
        }
        Formula::Until(i, a, b) => {
            // One flattened soft-min per candidate t', then a soft-max.
            let mut left = Vec::with_capacity(i.hi + 1);
            for tq in t..=t + i.hi {
                left.push(eval_smooth(a, s, tq, env, beta)?);
            }
            let mut candidates = Vec::with_capacity(i.width());
            for tp in window(i, t) {
                let mut xs = Vec::with_capacity(tp - t + 2);
                xs.push(eval_smooth(b, s, tp, env, beta)?);
                xs.extend_from_slice(&left[..=tp - t]);
                candidates.push(soft_min(&xs, beta));
            }
            Ok(soft_max(&candidates, beta))
        }
    }
}
