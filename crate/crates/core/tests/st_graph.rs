mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stgat_autodiff::{Tape, Tensor};
use stgat_core::skeleton::SkeletonGraph;
use stgat_core::stgraph::*;

use common::{hop_table, random_tensor, window_frame};

fn spec(tau: usize, dilation: usize) -> WindowSpec {
    WindowSpec::new(tau, dilation).unwrap()
}

#[test]
fn window_examples() {
    assert_eq!(window_indices(4, 10, &spec(3, 2)), [2, 4, 6]);
    assert_eq!(window_indices(0, 5, &spec(3, 1)), [0, 0, 1]);
    for t in 0..6 {
        assert_eq!(window_indices(t, 6, &spec(1, 3)), [t]);
    }
}

#[test]
fn even_tau_rejected_with_key() {
    let err = WindowSpec::new(4, 1).unwrap_err();
    assert_eq!(err.kind(), "config");
    assert!(err.to_string().contains("window.tau"));
    assert!(WindowSpec::new(3, 0).is_err());
}

fn gathered(x: &Tensor, s: &WindowSpec) -> Tensor {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let g = gather_window(&mut tape, v, s).unwrap();
    tape.value(g).clone()
}

#[test]
fn gather_tau_one_is_identity() {
    let x = random_tensor(&[2, 3, 5, 4], &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(gathered(&x, &spec(1, 1)), x);
}

#[test]
fn gather_constant_in_time_repeats_frame() {
    let x = Tensor::from_fn([1, 2, 4, 3], |ix| (ix[1] * 10 + ix[3]) as f64);
    let g = gathered(&x, &spec(5, 2));
    for t in 0..4 {
        for k in 0..5 {
            for n in 0..3 {
                assert_eq!(g.at(&[0, 1, t, k * 3 + n]), (10 + n) as f64);
            }
        }
    }
}

#[test]
fn gather_matches_index_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in [1, 2] {
        let x = random_tensor(&[2, 3, 7, 5], &mut rng);
        let g = gathered(&x, &spec(3, d));
        for b in 0..2 {
            for c in 0..3 {
                for t in 0..7 {
                    for k in 0..3 {
                        for n in 0..5 {
                            let src = window_frame(t, k, 7, 3, d);
                            assert_eq!(g.at(&[b, c, t, k * 5 + n]), x.at(&[b, c, src, n]));
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn normalize_empty_graph_is_identity() {
    let a = normalize_adjacency(&Tensor::zeros([4, 4])).unwrap();
    assert_eq!(a, Tensor::eye(4));
}

#[test]
fn normalize_single_edge() {
    let a = Tensor::new([2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let n = normalize_adjacency(&a).unwrap();
    for v in n.data() {
        assert!((v - 0.5).abs() < 1e-15);
    }
}

#[test]
fn normalize_star_matches_dense_oracle() {
    let mut a = vec![0.0; 25];
    for leaf in 1..5 {
        a[leaf] = 1.0;
        a[leaf * 5] = 1.0;
    }
    let got = normalize_adjacency(&Tensor::new([5, 5], a.clone()).unwrap()).unwrap();
    // Degrees of A + I: hub 5, leaves 2.
    let deg: Vec<f64> = (0..5)
        .map(|i| 1.0 + (0..5).map(|j| a[i * 5 + j]).sum::<f64>())
        .collect();
    for i in 0..5 {
        for j in 0..5 {
            let aij = a[i * 5 + j] + if i == j { 1.0 } else { 0.0 };
            let want = aij / (deg[i].sqrt() * deg[j].sqrt());
            assert!((got.at(&[i, j]) - want).abs() < 1e-15);
        }
    }
}

fn conv(x: &Tensor, a: &Tensor, w: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let (xv, av, wv) = (
        tape.constant(x.clone()),
        tape.constant(a.clone()),
        tape.constant(w.clone()),
    );
    let y = graph_conv(&mut tape, xv, av, wv).unwrap();
    tape.value(y).clone()
}

fn eye_weight(c: usize) -> Tensor {
    Tensor::from_fn([c, c, 1], |ix| if ix[0] == ix[1] { 1.0 } else { 0.0 })
}

#[test]
fn graph_conv_identity() {
    let x = random_tensor(&[1, 3, 4, 5], &mut ChaCha8Rng::seed_from_u64(2));
    assert_eq!(conv(&x, &Tensor::eye(5), &eye_weight(3)), x);
}

#[test]
fn graph_conv_two_node_average() {
    let x = random_tensor(&[1, 2, 3, 2], &mut ChaCha8Rng::seed_from_u64(3));
    let a = normalize_adjacency(&Tensor::new([2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap()).unwrap();
    let y = conv(&x, &a, &eye_weight(2));
    for c in 0..2 {
        for t in 0..3 {
            let mean = 0.5 * (x.at(&[0, c, t, 0]) + x.at(&[0, c, t, 1]));
            assert!((y.at(&[0, c, t, 0]) - mean).abs() < 1e-15);
            assert!((y.at(&[0, c, t, 1]) - mean).abs() < 1e-15);
        }
    }
}

#[test]
fn graph_conv_matches_dense_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_tensor(&[2, 3, 4, 6], &mut rng);
    let a = random_tensor(&[6, 6], &mut rng);
    let w = random_tensor(&[5, 3, 1], &mut rng);
    let y = conv(&x, &a, &w);
    assert_eq!(y.shape(), [2, 5, 4, 6]);
    for b in 0..2 {
        for o in 0..5 {
            for t in 0..4 {
                for j in 0..6 {
                    let mut s = 0.0;
                    for c in 0..3 {
                        for i in 0..6 {
                            s += w.at(&[o, c, 0]) * x.at(&[b, c, t, i]) * a.at(&[i, j]);
                        }
                    }
                    assert!((y.at(&[b, o, t, j]) - s).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn partition_three_joint_chain() {
    let g = SkeletonGraph::from_parents("abc", vec![0, 0, 1]).unwrap();
    let p = partition_groups(&g, &spec(1, 1), 2).unwrap();
    assert_eq!(
        [p.group_of(0, 0), p.group_of(0, 1), p.group_of(0, 2)],
        [0, 1, 1]
    );
    assert_eq!(p.group_of(1, 1), 0);
}

#[test]
fn partition_own_slots_are_group_zero() {
    let g = SkeletonGraph::ntu();
    let p = partition_groups(&g, &spec(3, 1), 8).unwrap();
    for i in 0..25 {
        for k in 0..3 {
            assert_eq!(p.group_of(i, k * 25 + i), 0);
        }
    }
}

#[test]
fn disconnected_graph_rejected() {
    let g = SkeletonGraph::from_edges("split", 3, vec![(0, 1)], vec![0, 0, 2]);
    assert_eq!(
        partition_groups(&g, &spec(1, 1), 2).unwrap_err().kind(),
        "data"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn window_interior_is_shift_consistent(half in 0usize..4, d in 1usize..4, frames in 1usize..60, t in 0usize..60) {
        let s = spec(2 * half + 1, d);
        let t = t % frames;
        let idx = window_indices(t, frames, &s);
        prop_assert_eq!(idx.len(), s.tau);
        prop_assert_eq!(idx[s.center()], t);
        prop_assert!(idx.iter().all(|&i| i < frames));
        if t >= half * d && t + half * d < frames {
            let want: Vec<usize> = (0..s.tau).map(|k| t + k * d - half * d).collect();
            prop_assert_eq!(idx, want);
        }
    }

    #[test]
    fn gather_center_block_is_input(seed: u64, half in 0usize..3, d in 1usize..3, t in 1usize..6, n in 1usize..5) {
        let x = random_tensor(&[2, 2, t, n], &mut ChaCha8Rng::seed_from_u64(seed));
        let s = spec(2 * half + 1, d);
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let g = gather_window(&mut tape, v, &s).unwrap();
        let c = tape.slice(g, 3, s.center() * n, n).unwrap();
        prop_assert_eq!(tape.value(c), &x);
    }

    #[test]
    fn normalized_adjacency_is_symmetric(n in 1usize..9, edges in proptest::collection::vec((0usize..9, 0usize..9), 0..20)) {
        let mut a = vec![0.0; n * n];
        for (i, j) in edges {
            if i < n && j < n && i != j {
                a[i * n + j] = 1.0;
                a[j * n + i] = 1.0;
            }
        }
        let na = normalize_adjacency(&Tensor::new([n, n], a).unwrap()).unwrap();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| na.at(&[i, j])).sum();
            let col: f64 = (0..n).map(|j| na.at(&[j, i])).sum();
            prop_assert!((row - col).abs() < 1e-12);
            for j in 0..n {
                prop_assert_eq!(na.at(&[i, j]), na.at(&[j, i]));
            }
        }
    }

    /// Groups partition the window, match a BFS oracle and do not depend on
    /// the window frame.
    #[test]
    fn groups_partition_window(groups in 1usize..6, half in 0usize..3, which in 0usize..3) {
        let g = [SkeletonGraph::desk(), SkeletonGraph::kinetics(), SkeletonGraph::ntu()][which].clone();
        let n = g.num_joints();
        let tau = 2 * half + 1;
        let p = partition_groups(&g, &spec(tau, 1), groups).unwrap();
        let hops = hop_table(&g);
        let masks: Vec<Vec<bool>> = (0..groups).map(|s| p.admissible(s)).collect();
        for i in 0..n {
            for slot in 0..tau * n {
                let hits = masks.iter().filter(|m| m[i * tau * n + slot]).count();
                prop_assert_eq!(hits, 1);
                let grp = p.group_of(i, slot);
                prop_assert_eq!(grp, hops[i][slot % n].min(groups - 1));
                prop_assert_eq!(grp, p.group_of(i, slot % n));
            }
        }
    }
}
