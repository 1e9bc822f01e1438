//! Finite-difference validation of every tape op on randomized shapes.

use pastel_core::autodiff::{grad_check, Shape, Tape, TensorId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

const TOL: f64 = 1e-6;
const EPS: f64 = 1e-5;

fn random_data(rng: &mut ChaCha12Rng, shape: Shape) -> Vec<f64> {
    (0..shape.numel()).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

fn random_shape(rng: &mut ChaCha12Rng) -> Shape {
    Shape(rng.gen_range(1..=8), rng.gen_range(1..=8))
}

// Reduce any tensor to a scalar through a fixed weighted sum so the check
// exercises full Jacobians, not just sum-of-output gradients.
fn weighted_scalar(tape: &mut Tape<f64>, x: TensorId) -> TensorId {
    let shape = tape.shape(x);
    let weights: Vec<f64> = (0..shape.numel()).map(|i| 0.3 + 0.1 * i as f64).collect();
    let w = tape.constant(shape, weights);
    let prod = tape.mul(x, w);
    tape.sum(prod)
}

fn check_unary(name: &str, rng: &mut ChaCha12Rng, f: impl Fn(&mut Tape<f64>, TensorId) -> TensorId) {
    for _ in 0..5 {
        let shape = random_shape(rng);
        let data = random_data(rng, shape);
        let err = grad_check(&[(shape, data)], EPS, |tape, ids| {
            let y = f(tape, ids[0]);
            weighted_scalar(tape, y)
        });
        assert!(err < TOL, "{name}: rel err {err}");
    }
}

#[test]
fn matmul_grad() {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    for _ in 0..5 {
        let (m, k, n) = (rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=6));
        let a = random_data(&mut rng, Shape(m, k));
        let b = random_data(&mut rng, Shape(k, n));
        let err = grad_check(&[(Shape(m, k), a), (Shape(k, n), b)], EPS, |tape, ids| {
            let c = tape.matmul(ids[0], ids[1]);
            weighted_scalar(tape, c)
        });
        assert!(err < TOL, "matmul: rel err {err}");
    }
}

#[test]
fn add_sub_mul_scale_grad() {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    for _ in 0..5 {
        let shape = random_shape(&mut rng);
        let a = random_data(&mut rng, shape);
        let b = random_data(&mut rng, shape);
        let err = grad_check(&[(shape, a.clone()), (shape, b.clone())], EPS, |tape, ids| {
            let s = tape.add(ids[0], ids[1]);
            let d = tape.sub(s, ids[1]);
            let p = tape.mul(d, ids[1]);
            let k = tape.scale(p, -1.7);
            weighted_scalar(tape, k)
        });
        assert!(err < TOL, "add/sub/mul/scale: rel err {err}");
    }
}

#[test]
fn add_bias_and_mul_rows_grad() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    for _ in 0..5 {
        let shape = random_shape(&mut rng);
        let a = random_data(&mut rng, shape);
        let bias = random_data(&mut rng, Shape(1, shape.1));
        let gain = random_data(&mut rng, Shape(1, shape.1));
        let err = grad_check(
            &[(shape, a), (Shape(1, shape.1), bias), (Shape(1, shape.1), gain)],
            EPS,
            |tape, ids| {
                let b = tape.add_bias(ids[0], ids[1]);
                let g = tape.mul_rows(b, ids[2]);
                weighted_scalar(tape, g)
            },
        );
        assert!(err < TOL, "add_bias/mul_rows: rel err {err}");
    }
}

#[test]
fn transpose_grad() {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    check_unary("transpose", &mut rng, |tape, x| tape.transpose(x));
}

#[test]
fn concat_slice_gather_grad() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    for _ in 0..5 {
        let cols = rng.gen_range(1..=6);
        let ra = rng.gen_range(1..=5);
        let rb = rng.gen_range(1..=5);
        let a = random_data(&mut rng, Shape(ra, cols));
        let b = random_data(&mut rng, Shape(rb, cols));
        let lo = rng.gen_range(0..ra + rb);
        let hi = rng.gen_range(lo + 1..=ra + rb);
        let indices: Vec<usize> = (0..6).map(|_| rng.gen_range(0..ra + rb)).collect();
        let err = grad_check(&[(Shape(ra, cols), a), (Shape(rb, cols), b)], EPS, {
            let indices = indices.clone();
            move |tape, ids| {
                let cat = tape.concat_rows(&[ids[0], ids[1]]);
                let sliced = tape.slice_rows(cat, lo..hi);
                let gathered = tape.gather_rows(cat, &indices);
                let s1 = weighted_scalar(tape, sliced);
                let s2 = weighted_scalar(tape, gathered);
                tape.add(s1, s2)
            }
        });
        assert!(err < TOL, "concat/slice/gather: rel err {err}");
    }
}

#[test]
fn softmax_grad() {
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    check_unary("softmax", &mut rng, |tape, x| tape.softmax_rows(x));
}

#[test]
fn layer_norm_grad() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    // Rows of width >= 2 so variance is informative; asymmetric readout
    // weights keep gradient components away from exact cancellation, where
    // central differences carry no signal.
    for _ in 0..5 {
        let shape = Shape(rng.gen_range(1..=6), rng.gen_range(2..=5));
        let data = random_data(&mut rng, shape);
        let err = grad_check(&[(shape, data)], EPS, |tape, ids| {
            let y = tape.layer_norm_rows(ids[0], 1e-5);
            let sq = tape.mul(y, y);
            let weighted = weighted_scalar(tape, sq);
            let lin = weighted_scalar(tape, y);
            tape.add(weighted, lin)
        });
        assert!(err < TOL, "layer_norm: rel err {err}");
    }
}

#[test]
fn gelu_tanh_abs_sqrt_grad() {
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    check_unary("gelu", &mut rng, |tape, x| tape.gelu(x));
    check_unary("tanh", &mut rng, |tape, x| tape.tanh(x));
    // abs: keep inputs away from the kink at 0.
    for _ in 0..5 {
        let shape = random_shape(&mut rng);
        let data: Vec<f64> = (0..shape.numel())
            .map(|_| {
                let v: f64 = rng.gen_range(0.2..2.0);
                if rng.gen_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect();
        let err = grad_check(&[(shape, data)], EPS, |tape, ids| {
            let y = tape.abs(ids[0]);
            weighted_scalar(tape, y)
        });
        assert!(err < TOL, "abs: rel err {err}");
    }
    // sqrt: strictly positive inputs.
    for _ in 0..5 {
        let shape = random_shape(&mut rng);
        let data: Vec<f64> = (0..shape.numel()).map(|_| rng.gen_range(0.3..3.0)).collect();
        let err = grad_check(&[(shape, data)], EPS, |tape, ids| {
            let y = tape.sqrt(ids[0]);
            weighted_scalar(tape, y)
        });
        assert!(err < TOL, "sqrt: rel err {err}");
    }
}

#[test]
fn clamp_grad_away_from_bounds() {
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    for _ in 0..5 {
        let shape = random_shape(&mut rng);
        // Stay > eps away from the clamp bounds at +-1.
        let data: Vec<f64> = (0..shape.numel())
            .map(|_| {
                let v: f64 = rng.gen_range(-2.0..2.0);
                if v.abs() > 0.9 && v.abs() < 1.1 {
                    v.signum() * 1.5
                } else {
                    v
                }
            })
            .collect();
        let err = grad_check(&[(shape, data)], EPS, |tape, ids| {
            let y = tape.clamp(ids[0], -1.0, 1.0);
            weighted_scalar(tape, y)
        });
        assert!(err < TOL, "clamp: rel err {err}");
    }
}

#[test]
fn row_min_grad_without_ties() {
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    for _ in 0..5 {
        let shape = random_shape(&mut rng);
        // Separate values so the argmin is stable under +-eps.
        let mut pool: Vec<f64> = (0..shape.numel()).map(|i| i as f64 * 0.37).collect();
        use rand::seq::SliceRandom;
        pool.shuffle(&mut rng);
        let err = grad_check(&[(shape, pool)], EPS, |tape, ids| {
            let y = tape.row_min(ids[0]);
            weighted_scalar(tape, y)
        });
        assert!(err < TOL, "row_min: rel err {err}");
    }
}

#[test]
fn reductions_grad() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    check_unary("mean", &mut rng, |tape, x| tape.mean(x));
    check_unary("sum", &mut rng, |tape, x| tape.sum(x));
    check_unary("log_sum_exp", &mut rng, |tape, x| tape.log_sum_exp(x));
    // Moderate temperature on compact inputs keeps every softmax weight
    // large enough for finite differences to resolve.
    for _ in 0..5 {
        let shape = Shape(rng.gen_range(1..=4), rng.gen_range(1..=4));
        let data: Vec<f64> = (0..shape.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let err = grad_check(&[(shape, data.clone())], EPS, |tape, ids| tape.soft_max(ids[0], 2.0));
        assert!(err < TOL, "soft_max: rel err {err}");
        let err = grad_check(&[(shape, data)], EPS, |tape, ids| tape.soft_min(ids[0], 2.0));
        assert!(err < TOL, "soft_min: rel err {err}");
    }
}
