//! Gradient checks for every differentiable tape op, shared with the
//! workspace acceptance suite.

#![allow(dead_code)]

use gamed_tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-3;
pub const TOL: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, 1)`: relative for gradients of magnitude ≥ 1,
/// absolute below that, so vanishing coordinates do not divide by ~0.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let v = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::new(shape.to_vec(), v).unwrap()
}

type Graph = dyn Fn(&Tape<f64>, &[Tensor<f64>]) -> Tensor<f64>;

/// Reduces an op output to a scalar with fixed random weights so every
/// output coordinate contributes to the checked Jacobian.
fn weighted_sum(tape: &Tape<f64>, y: &Tensor<f64>, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, y.shape());
    let prod = tape.mul(y, &w).unwrap();
    tape.sum(&prod)
}

/// Worst error over every input coordinate of the scalar graph `f`.
fn check(out: &mut Vec<(String, f64)>, name: &str, inputs: Vec<Tensor<f64>>, f: &Graph) {
    let tape = Tape::new();
    let leaves: Vec<_> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = f(&tape, &leaves);
    let grads = tape.backward(&loss).unwrap();

    let eval = |xs: &[Tensor<f64>]| {
        let t = Tape::new();
        f(&t, xs).item()
    };
    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let g = grads.wrt(&leaves[k]);
        for i in 0..input.numel() {
            let mut plus = inputs.clone();
            plus[k].values_mut()[i] += H;
            let mut minus = inputs.clone();
            minus[k].values_mut()[i] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            worst = worst.max(rel_err(g.values()[i], numeric));
        }
    }
    out.push((name.to_string(), worst));
}

fn matmul_gradient(out: &mut Vec<(String, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&mut rng, &[3, 4]);
    let b = random(&mut rng, &[4, 2]);
    check(out, "matmul", vec![a, b], &|t, x| {
        let y = t.matmul(&x[0], &x[1]).unwrap();
        weighted_sum(t, &y, 11)
    });
}

fn elementwise_gradients_with_broadcast(out: &mut Vec<(String, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random(&mut rng, &[3, 4]);
    let row = random(&mut rng, &[1, 4]);
    let s = random(&mut rng, &[1]);
    // keep divisors away from zero
    let mut den = random(&mut rng, &[3, 4]);
    for v in den.values_mut() {
        *v = v.signum() * (v.abs() + 0.5);
    }
    check(out, "add/sub/mul", vec![a.clone(), row.clone(), s.clone()], &|t, x| {
        let y = t.add(&x[0], &x[1]).unwrap();
        let y = t.mul(&y, &x[2]).unwrap();
        let y = t.sub(&y, &x[1]).unwrap();
        let y = t.mul(&y, &x[0]).unwrap();
        weighted_sum(t, &y, 12)
    });
    check(out, "div", vec![a, den], &|t, x| {
        let y = t.div(&x[0], &x[1]).unwrap();
        weighted_sum(t, &y, 13)
    });
}

fn scale_and_shift_gradients(out: &mut Vec<(String, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    check(out, "scale/shift", vec![random(&mut rng, &[5])], &|t, x| {
        let y = t.scale(&x[0], -1.7);
        let y = t.shift(&y, 0.3);
        let y = t.mul(&y, &y).unwrap();
        weighted_sum(t, &y, 14)
    });
}

fn activation_gradients(out: &mut Vec<(String, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&mut rng, &[2, 5]);
    check(out, "sigmoid", vec![x.clone()], &|t, x| weighted_sum(t, &t.sigmoid(&x[0]), 15));
    check(out, "silu", vec![x.clone()], &|t, x| weighted_sum(t, &t.silu(&x[0]), 16));
    check(out, "softplus", vec![x.clone()], &|t, x| weighted_sum(t, &t.softplus(&x[0]), 17));
    check(out, "softmax", vec![x], &|t, x| weighted_sum(t, &t.softmax(&x[0]), 18));
}

fn reduction_gradients(out: &mut Vec<(String, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&mut rng, &[3, 4]);
    for axis in 0..2 {
        check(out, "mean_axis", vec![x.clone()], &move |t, x| {
            weighted_sum(t, &t.mean_axis(&x[0], axis).unwrap(), 19)
        });
        check(out, "reduce_stats", vec![x.clone()], &move |t, x| {
            let (m, s) = t.reduce_stats(&x[0], axis).unwrap();
            let a = weighted_sum(t, &m, 20);
            let b = weighted_sum(t, &s, 21);
            t.add(&a, &b).unwrap()
        });
    }
    check(out, "sum", vec![x], &|t, x| {
        let y = t.sum(&x[0]);
        t.mul(&y, &y).unwrap()
    });
}

fn structural_gradients(out: &mut Vec<(String, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = random(&mut rng, &[2, 3]);
    let b = random(&mut rng, &[2, 2]);
    let table = random(&mut rng, &[4, 3]);
    check(out, "transpose", vec![a.clone()], &|t, x| {
        weighted_sum(t, &t.transpose(&x[0]).unwrap(), 22)
    });
    check(out, "concat", vec![a.clone(), b], &|t, x| {
        weighted_sum(t, &t.concat(&[&x[0], &x[1]], 1).unwrap(), 23)
    });
    check(out, "concat rows", vec![a.clone(), a], &|t, x| {
        weighted_sum(t, &t.concat(&[&x[0], &x[1]], 0).unwrap(), 24)
    });
    check(out, "gather", vec![table], &|t, x| {
        let g = t.gather_rows(&x[0], &[3, 1, 3, 0]).unwrap();
        let g = t.reshape(&g, vec![2, 6]).unwrap();
        weighted_sum(t, &g, 25)
    });
}

fn bce_gradient(out: &mut Vec<(String, f64)>) {
    for (logit, target) in [(-1.3, 0.0), (0.7, 1.0), (1.9, 0.0), (-0.2, 1.0)] {
        check(out, "bce", vec![Tensor::scalar(logit)], &move |t, x| {
            t.bce_with_logits(&x[0], target).unwrap()
        });
    }
}

fn composite_graph_gradient(out: &mut Vec<(String, f64)>) {
    // A small two-layer network with normalization, mirroring the model's building blocks.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&mut rng, &[4, 3]);
    let w1 = random(&mut rng, &[3, 5]);
    let b1 = random(&mut rng, &[1, 5]);
    let w2 = random(&mut rng, &[5, 1]);
    check(out, "composite", vec![x, w1, b1, w2], &|t, p| {
        let h = t.matmul(&p[0], &p[1]).unwrap();
        let h = t.add(&h, &p[2]).unwrap();
        let h = t.silu(&h);
        let (m, s) = t.reduce_stats(&h, 0).unwrap();
        let c = t.sub(&h, &m).unwrap();
        let n = t.div(&c, &s).unwrap();
        let score = t.matmul(&n, &p[3]).unwrap();
        let beta = t.softplus(&score);
        let z = t.sum(&beta);
        let beta = t.div(&beta, &z).unwrap();
        let bt = t.transpose(&beta).unwrap();
        let pooled = t.matmul(&bt, &p[0]).unwrap();
        let o = t.sum(&pooled);
        t.bce_with_logits(&o, 1.0).unwrap()
    });
}

/// `(case, worst error)` for every op case.
pub fn op_cases() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    matmul_gradient(&mut out);
    elementwise_gradients_with_broadcast(&mut out);
    scale_and_shift_gradients(&mut out);
    activation_gradients(&mut out);
    reduction_gradients(&mut out);
    structural_gradients(&mut out);
    bce_gradient(&mut out);
    composite_graph_gradient(&mut out);
    out
}
