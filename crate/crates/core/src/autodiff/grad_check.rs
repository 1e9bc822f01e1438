//! Finite-difference validation of tape gradients.

use super::{Shape, Tape, TensorId};

/// Compares tape gradients against central finite differences.
///
/// `build` must construct the same scalar-valued graph each call from the
/// provided leaves. Returns the maximum relative error over all input
/// elements, with denominator `max(|analytic|, |numeric|, 1e-8)`.
///
/// Panics if `build` returns a non-scalar output.
pub fn grad_check<F>(inputs: &[(Shape, Vec<f64>)], eps: f64, build: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[TensorId]) -> TensorId,
{
    let eval = |values: &[Vec<f64>], want_grads: bool| -> (f64, Vec<Vec<f64>>) {
        let mut tape: Tape<f64> = Tape::new();
        let ids: Vec<TensorId> = inputs
            .iter()
            .zip(values)
            .map(|((shape, _), v)| tape.leaf(*shape, v.clone()))
            .collect();
        let out = build(&mut tape, &ids);
        assert_eq!(tape.shape(out), Shape::scalar(), "grad_check output must be scalar");
        let y = tape.value_scalar(out);
        if !want_grads {
            return (y, Vec::new());
        }
        tape.backward(out);
        let grads = ids.iter().map(|id| tape.grad(*id)).collect();
        (y, grads)
    };

    let base_values: Vec<Vec<f64>> = inputs.iter().map(|(_, v)| v.clone()).collect();
    let (_, grads) = eval(&base_values, true);

    let mut max_rel = 0.0f64;
    for (i, (_, base)) in inputs.iter().enumerate() {
        for j in 0..base.len() {
            let mut plus = base_values.clone();
            plus[i][j] += eps;
            let mut minus = base_values.clone();
            minus[i][j] -= eps;
            let (yp, _) = eval(&plus, false);
            let (ym, _) = eval(&minus, false);
            let numeric = (yp - ym) / (2.0 * eps);
            let analytic = grads[i][j];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_matches_finite_differences() {
        let err = grad_check(&[(Shape(1, 1), vec![3.0])], 1e-5, |tape, ids| {
            let sq = tape.mul(ids[0], ids[0]);
            tape.sum(sq)
        });
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn mean_is_linear() {
        let err = grad_check(&[(Shape(2, 3), vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0])], 1e-5, |tape, ids| {
            tape.mean(ids[0])
        });
        assert!(err < 1e-9, "rel err {err}");
    }

    #[test]
    #[should_panic(expected = "must be scalar")]
    fn non_scalar_output_is_rejected() {
        grad_check(&[(Shape(1, 2), vec![1.0, 2.0])], 1e-5, |tape, ids| tape.abs(ids[0]));
    }
}
