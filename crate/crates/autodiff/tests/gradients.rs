//! Every differentiable primitive against central differences on random
//! small shapes, plus the structural invariants of the tape.

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stgat_autodiff::{
    batch_norm, grad_check, CoordinateError, GradCheckConfig, Init, Mode, ParamStore, Result,
    RunningStats, Tape, Tensor, Var,
};

const TOL: f64 = 1e-6;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.5..1.5))
}

/// Builds `Σ op(inputs) ⊙ R` for a fixed random `R` and grad-checks every
/// input coordinate.
fn check_op(seed: u64, inputs: Vec<Tensor>, op: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let mut store = ParamStore::new();
    let ids: Vec<_> = inputs
        .into_iter()
        .enumerate()
        .map(|(i, t)| store.insert(format!("in{i}"), t, Init::Zeros).unwrap())
        .collect();
    let report = grad_check(
        &mut store,
        |tape, store| {
            let vars: Vec<Var> = ids.iter().map(|&id| tape.param(store, id)).collect();
            let out = op(tape, &vars)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let r = random(tape.shape(out), &mut rng);
            let rv = tape.constant(r);
            let weighted = tape.mul(out, rv)?;
            Ok(tape.sum_all(weighted))
        },
        &GradCheckConfig {
            samples: usize::MAX,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(!report.non_finite);
    // Gradients below 1e-3 are compared absolutely (TOL * 1e-3): central
    // differences at eps 1e-5 carry round-off of ~1e-10 for losses of
    // magnitude ~10, which dominates the relative error of tiny gradients.
    let err = |c: &&CoordinateError| {
        (c.analytic - c.numeric).abs() / c.analytic.abs().max(c.numeric.abs()).max(1e-3)
    };
    let worst = report
        .coordinates
        .iter()
        .max_by(|a, b| err(a).total_cmp(&err(b)))
        .expect("at least one coordinate");
    if err(&worst) >= TOL {
        eprintln!("worst coordinate {worst:?}");
    }
    err(&worst)
}

fn dims(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(1..=4)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matmul_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, m, k, n) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..4));
        let (ta, tb) = (rng.random_bool(0.5), rng.random_bool(0.5));
        let sa = if ta { vec![b, k, m] } else { vec![b, m, k] };
        let sb = if tb { vec![b, n, k] } else { vec![b, k, n] };
        let inputs = vec![random(&sa, &mut rng), random(&sb, &mut rng)];
        let err = check_op(seed, inputs, |t, v| t.matmul_t(v[0], v[1], ta, tb));
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn broadcast_binary_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let full = dims(&mut rng, 3);
        let small: Vec<usize> = full.iter().map(|&d| if rng.random_bool(0.5) { 1 } else { d }).collect();
        let inputs = vec![random(&full, &mut rng), random(&small[1..], &mut rng)];
        let which = rng.random_range(0..3);
        let err = check_op(seed, inputs, |t, v| match which {
            0 => t.add(v[0], v[1]),
            1 => t.sub(v[1], v[0]),
            _ => t.mul(v[0], v[1]),
        });
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn activation_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = dims(&mut rng, 2);
        // keep away from the ReLU kink
        let x = random(&shape, &mut rng).map(|v| if v.abs() < 1e-3 { v + 0.01 } else { v });
        let which = rng.random_range(0..4);
        let err = check_op(seed, vec![x], |t, v| Ok(match which {
            0 => t.relu(v[0]),
            1 => t.leaky_relu(v[0], 0.2),
            2 => t.sigmoid(v[0]),
            _ => t.scale(v[0], -1.75),
        }));
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn softmax_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = dims(&mut rng, 3);
        let axis = rng.random_range(0..3);
        let err = check_op(seed, vec![random(&shape, &mut rng)], |t, v| t.softmax(v[0], axis));
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn masked_softmax_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, r, l) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..5));
        let admissible: Vec<bool> = (0..r * l).map(|_| rng.random_bool(0.6)).collect();
        let mask = Tensor::from_fn([r, l], |i| if admissible[i[0] * l + i[1]] { 1.0 } else { 0.0 });
        let err = check_op(seed, vec![random(&[b, r, l], &mut rng)], |t, v| t.masked_softmax(v[0], &mask, &admissible));
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn temporal_conv_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, cin, t, n, cout) = (rng.random_range(1..3), rng.random_range(1..3), rng.random_range(3..7), rng.random_range(1..4), rng.random_range(1..3));
        let k = [1usize, 3, 5][rng.random_range(0..3)];
        let stride = rng.random_range(1..3);
        let pad = (k - 1) / 2;
        let inputs = vec![random(&[b, cin, t, n], &mut rng), random(&[cout, cin, k], &mut rng)];
        let err = check_op(seed, inputs, |tp, v| tp.temporal_conv(v[0], v[1], stride, pad));
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn batch_norm_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, c, inner) = (rng.random_range(2..4), rng.random_range(1..3), rng.random_range(2..4));
        let train = rng.random_bool(0.5);
        let inputs = vec![random(&[b, c, inner], &mut rng), random(&[c], &mut rng), random(&[c], &mut rng)];
        let err = check_op(seed, inputs, |t, v| {
            let mut stats = RunningStats { mean: vec![0.1; c], var: vec![1.3; c] };
            batch_norm(t, v[0], v[1], v[2], &mut stats, if train { Mode::Train } else { Mode::Eval })
        });
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn shape_suite_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = dims(&mut rng, 3);
        let axis = rng.random_range(0..3);
        let len = shape[axis];
        let idx: Vec<usize> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..len)).collect();
        let other = { let mut s = shape.clone(); s[axis] = rng.random_range(1..3); s };
        let start = rng.random_range(0..len);
        let which = rng.random_range(0..8);
        let inputs = vec![random(&shape, &mut rng), random(&other, &mut rng)];
        let err = check_op(seed, inputs, |t, v| match which {
            0 => t.concat(&[v[0], v[1]], axis),
            1 => t.gather(v[0], axis, Arc::new(idx.clone())),
            2 => t.pad(v[0], axis, 1, 2),
            3 => t.mean_axis(v[0], axis),
            4 => t.slice(v[0], axis, start, len - start),
            5 => t.permute(v[0], &[2, 0, 1]),
            6 => { let n = t.value(v[0]).numel(); t.reshape(v[0], &[n]) }
            _ => Ok(t.mean_all(v[0])),
        });
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn cross_entropy_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, k) = (rng.random_range(1..4), rng.random_range(2..6));
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
        let err = check_op(seed, vec![random(&[b, k], &mut rng)], |t, v| t.cross_entropy(v[0], &labels));
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn softmax_is_a_distribution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = dims(&mut rng, 3);
        let axis = rng.random_range(0..3);
        let x = random(&shape, &mut rng).map(|v| v * 20.0);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let s = tape.softmax(xv, axis).unwrap();
        let y = tape.value(s);
        prop_assert!(y.data().iter().all(|&v| v >= 0.0));
        let sums = {
            let ys = tape.constant(y.clone());
            let m = tape.mean_axis(ys, axis).unwrap();
            tape.value(m).map(|v| v * shape[axis] as f64)
        };
        prop_assert!(sums.data().iter().all(|s| (s - 1.0).abs() < 1e-9));
    }

    #[test]
    fn gather_backward_conserves_flow(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = dims(&mut rng, 2);
        let idx: Vec<usize> = (0..rng.random_range(1..8)).map(|_| rng.random_range(0..shape[1])).collect();
        let mut tape = Tape::new();
        let x = tape.input(random(&shape, &mut rng));
        let g = tape.gather(x, 1, Arc::new(idx)).unwrap();
        let r = tape.constant(random(tape.shape(g), &mut rng));
        let w = tape.mul(g, r).unwrap();
        let loss = tape.sum_all(w);
        let grads = tape.gradients(loss).unwrap();
        let din: f64 = grads.get(x).unwrap().data().iter().sum();
        let dout: f64 = grads.get(g).unwrap().data().iter().sum();
        prop_assert!((din - dout).abs() < 1e-12);
    }
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut store = ParamStore::<f64>::new();
        let w = store
            .add("w", &[3, 4, 3], Init::Normal { std: 0.5 }, &mut rng)
            .unwrap();
        let x = random(&[2, 4, 6, 5], &mut rng);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let wv = tape.param(&store, w);
        let y = tape.temporal_conv(xv, wv, 1, 1).unwrap();
        let y = tape.softmax(y, 3).unwrap();
        let loss = tape.mean_all(y);
        tape.backward(loss, &mut store).unwrap();
        (
            tape.value(loss).item().to_bits(),
            store
                .grad(w)
                .unwrap()
                .data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(), run());
}
