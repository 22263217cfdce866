use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stgat_core::skeleton::*;

fn joint_line(x: f64, y: f64, z: f64) -> String {
    format!("{x} {y} {z} 1 2 3 4 0 0 0 1 2")
}

type Body = (u64, Vec<[f64; 3]>);

/// `.skeleton` text from per-frame lists of `(body id, 25 coordinates)`.
fn ntu_text(frames: &[Vec<Body>]) -> String {
    let mut out = vec![frames.len().to_string()];
    for bodies in frames {
        out.push(bodies.len().to_string());
        for (id, coords) in bodies {
            out.push(format!("{id} 0 0 0 0 0 0 0 0 2"));
            out.push("25".into());
            out.extend(coords.iter().map(|c| joint_line(c[0], c[1], c[2])));
        }
    }
    out.join("\n")
}

fn constant_body(v: f64) -> Vec<[f64; 3]> {
    vec![[v, v, v]; 25]
}

#[test]
fn ntu_single_frame_shape_and_values() {
    let coords: Vec<[f64; 3]> = (0..25).map(|j| [j as f64 * 0.5, -0.25, 3.125]).collect();
    let seq = parse_ntu_skeleton(&ntu_text(&[vec![(7, coords.clone())]])).unwrap();
    assert_eq!(seq.dims(), [1, 3, 1, 25]);
    for (j, c) in coords.iter().enumerate() {
        for (k, &v) in c.iter().enumerate() {
            assert_eq!(seq.at(0, k, 0, j), v);
        }
    }
    assert_eq!(seq.source, SourceFormat::Ntu);
}

#[test]
fn ntu_three_bodies_keeps_two_by_motion() {
    // Displacement sums (25 joints · |Δ|·√3 per step):
    // body 1 moves 0.1 per frame twice, body 2 moves 1.0 once, body 3 is still.
    let still = constant_body(0.0);
    let frames = vec![
        vec![
            (1, constant_body(0.0)),
            (2, constant_body(5.0)),
            (3, still.clone()),
        ],
        vec![
            (1, constant_body(0.1)),
            (2, constant_body(6.0)),
            (3, still.clone()),
        ],
        vec![(1, constant_body(0.2)), (2, constant_body(6.0)), (3, still)],
    ];
    let seq = parse_ntu_skeleton(&ntu_text(&frames)).unwrap();
    assert_eq!(seq.dims(), [2, 3, 3, 25]);
    // Body 2 (total 25·√3) first, body 1 (25·0.2·√3) second.
    assert_eq!(seq.at(0, 0, 0, 0), 5.0);
    assert_eq!(seq.at(1, 0, 2, 0), 0.2);
}

#[test]
fn ntu_missing_body_is_zero_filled() {
    let frames = vec![
        vec![(1, constant_body(1.0)), (2, constant_body(2.0))],
        vec![(1, constant_body(1.5))],
    ];
    let seq = parse_ntu_skeleton(&ntu_text(&frames)).unwrap();
    assert_eq!(seq.persons(), 2);
    let absent = if seq.at(0, 0, 1, 0) == 0.0 { 0 } else { 1 };
    assert!((0..25).all(|j| seq.at(absent, 1, 1, j) == 0.0));
}

#[test]
fn ntu_zero_frames_is_empty_sequence() {
    let err = parse_ntu_skeleton("0\n").unwrap_err();
    assert_eq!(err.kind(), "data");
    assert!(err.to_string().contains("empty sequence"));
}

#[test]
fn ntu_short_joint_line_names_line() {
    let mut text = ntu_text(&[vec![(1, constant_body(0.0))]]);
    text = text.replacen("0 0 0 1 2 3 4 0 0 0 1 2", "0 0 0 1 2", 1);
    let err = parse_ntu_skeleton(&text).unwrap_err();
    assert_eq!(err.kind(), "parse");
    assert!(err.to_string().contains("line 5"), "{err}");
}

fn kinetics_person(v: f64) -> serde_json::Value {
    serde_json::json!({"pose": vec![v; 36], "score": vec![0.5; 18]})
}

#[test]
fn kinetics_single_frame_shape() {
    let text =
        serde_json::json!({"data": [{"frame_index": 1, "skeleton": [kinetics_person(0.25)]}]})
            .to_string();
    let seq = parse_kinetics_json(&text).unwrap();
    assert_eq!(seq.dims(), [1, 3, 1, 18]);
    assert_eq!(seq.at(0, 0, 0, 3), 0.25);
    assert_eq!(seq.at(0, 2, 0, 3), 0.5);
}

#[test]
fn kinetics_absent_person_is_zero() {
    let text = serde_json::json!({"data": [
        {"frame_index": 1, "skeleton": [kinetics_person(0.1), kinetics_person(0.2)]},
        {"frame_index": 2, "skeleton": [kinetics_person(0.3)]},
    ]})
    .to_string();
    let seq = parse_kinetics_json(&text).unwrap();
    assert_eq!(seq.dims(), [2, 3, 2, 18]);
    assert!((0..3).all(|c| (0..18).all(|j| seq.at(1, c, 1, j) == 0.0)));
    assert_eq!(seq.at(1, 0, 0, 0), 0.2);
}

#[test]
fn kinetics_17_joints_names_frame() {
    let text = serde_json::json!({"data": [
        {"frame_index": 1, "skeleton": [kinetics_person(0.1)]},
        {"frame_index": 2, "skeleton": [{"pose": vec![0.1; 34], "score": vec![0.5; 17]}]},
    ]})
    .to_string();
    let err = parse_kinetics_json(&text).unwrap_err();
    assert_eq!(err.kind(), "parse");
    assert!(err.to_string().contains("frame 2"), "{err}");
}

#[test]
fn crop_length_is_exact() {
    let sampling = FrameSampling::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for frames in [1, 7, 128, 149, 150, 151, 300] {
        for mode in [SplitMode::Train, SplitMode::Test] {
            assert_eq!(sampling.indices(frames, mode, &mut rng).len(), 128);
        }
    }
}

#[test]
fn test_mode_150_frames_is_central_crop() {
    let idx =
        FrameSampling::default().indices(150, SplitMode::Test, &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(idx, (11..139).collect::<Vec<_>>());
}

#[test]
fn train_sampling_is_seed_deterministic() {
    let s = FrameSampling::default();
    let a = s.indices(200, SplitMode::Train, &mut ChaCha8Rng::seed_from_u64(5));
    let b = s.indices(200, SplitMode::Train, &mut ChaCha8Rng::seed_from_u64(5));
    assert_eq!(a, b);
}

#[test]
fn preprocess_selects_frames() {
    let mut seq =
        SkeletonSequence::zeros([1, 3, 150, 7], Some(0), SourceFormat::Synthetic).unwrap();
    for t in 0..150 {
        seq.set(0, 0, t, 0, t as f64);
    }
    let out = preprocess(
        &seq,
        &FrameSampling::default(),
        SplitMode::Test,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert_eq!(out.dims(), [1, 3, 128, 7]);
    assert_eq!(out.at(0, 0, 0, 0), 11.0);
    assert_eq!(out.label, Some(0));
}

fn chain(n: usize) -> SkeletonGraph {
    let parents = (0..n).map(|j| j.saturating_sub(1)).collect();
    SkeletonGraph::from_parents("chain", parents).unwrap()
}

#[test]
fn bone_of_two_joint_chain() {
    let seq = SkeletonSequence::new(
        [1, 3, 1, 2],
        vec![0.0, 1.0, 0.0, 2.0, 0.0, 3.0],
        None,
        SourceFormat::Internal,
    )
    .unwrap();
    let bone = derive_stream(&seq, StreamKind::Bone, &chain(2)).unwrap();
    assert_eq!(
        [
            bone.at(0, 0, 0, 1),
            bone.at(0, 1, 0, 1),
            bone.at(0, 2, 0, 1)
        ],
        [1.0, 2.0, 3.0]
    );
    assert_eq!(
        [
            bone.at(0, 0, 0, 0),
            bone.at(0, 1, 0, 0),
            bone.at(0, 2, 0, 0)
        ],
        [0.0; 3]
    );
}

#[test]
fn static_sequence_has_no_motion() {
    let g = SkeletonGraph::desk();
    let data = synth_dataset(&SynthSpec::four_class(1, 1, 0.0), 0).unwrap();
    let still = data[0].select_frames(&[0; 6]).unwrap();
    for kind in [StreamKind::JointMotion, StreamKind::BoneMotion] {
        let m = derive_stream(&still, kind, &g).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn stream_rejects_joint_mismatch() {
    let seq = SkeletonSequence::zeros([1, 3, 2, 5], None, SourceFormat::Internal).unwrap();
    assert_eq!(
        derive_stream(&seq, StreamKind::Bone, &SkeletonGraph::desk())
            .unwrap_err()
            .kind(),
        "data"
    );
}

#[test]
fn synth_is_reproducible_and_balanced() {
    let spec = SynthSpec::four_class(3, 20, 0.0);
    let a = synth_dataset(&SynthSpec::four_class(1, 20, 0.0), 4).unwrap();
    let b = synth_dataset(&SynthSpec::four_class(1, 20, 0.0), 4).unwrap();
    assert_eq!(a, b);
    let full = synth_dataset(&spec, 1).unwrap();
    for c in 0..4 {
        assert_eq!(full.iter().filter(|s| s.label == Some(c)).count(), 3);
    }
}

#[test]
fn similar_pair_differs_only_by_micro_gesture() {
    let spec = SynthSpec::similar_pair(1, 30, 0.0, SIMILAR_PAIR_AMPLITUDE);
    let mut r1 = ChaCha8Rng::seed_from_u64(8);
    let mut r2 = ChaCha8Rng::seed_from_u64(8);
    let eat = synth_sample(&spec, 0, true, &mut r1).unwrap();
    let bare = synth_sample(&spec, 1, false, &mut r2).unwrap();
    assert_eq!(eat.data(), bare.data());

    let mut r3 = ChaCha8Rng::seed_from_u64(8);
    let brush = synth_sample(&spec, 1, true, &mut r3).unwrap();
    let changed: std::collections::BTreeSet<usize> = (0..30)
        .filter(|&t| (0..7).any(|j| (0..3).any(|c| brush.at(0, c, t, j) != bare.at(0, c, t, j))))
        .collect();
    assert!(changed.len() <= 5 && !changed.is_empty(), "{changed:?}");
}

#[test]
fn bad_synth_spec_is_config_error() {
    let spec = SynthSpec::four_class(0, 10, 0.0);
    assert_eq!(synth_dataset(&spec, 0).unwrap_err().kind(), "config");
}

#[test]
fn bundled_graphs_are_well_formed() {
    for (g, n, root) in [
        (SkeletonGraph::ntu(), 25, 20),
        (SkeletonGraph::kinetics(), 18, 0),
        (SkeletonGraph::desk(), 7, 0),
    ] {
        assert_eq!(g.num_joints(), n);
        assert_eq!(g.root(), root);
        assert_eq!(g.parent(root), root);
        assert!(g.is_connected());
        for i in 0..n {
            assert_eq!(g.hop(i, i), Some(0));
            for j in 0..n {
                assert_eq!(g.hop(i, j), g.hop(j, i));
            }
        }
    }
}

#[test]
fn dataset_rejects_bad_magic() {
    let mut buf = Vec::new();
    write_dataset(
        &mut buf,
        &synth_dataset(&SynthSpec::four_class(1, 4, 0.0), 0).unwrap(),
    )
    .unwrap();
    buf[0] ^= 0xff;
    assert!(read_dataset(buf.as_slice()).is_err());
}

fn arb_sequence() -> impl Strategy<Value = SkeletonSequence> {
    (
        1usize..3,
        1usize..4,
        1usize..6,
        1usize..5,
        proptest::option::of(0usize..50),
    )
        .prop_flat_map(|(m, c, t, n, label)| {
            proptest::collection::vec(-1e6f64..1e6, m * c * t * n).prop_map(move |data| {
                SkeletonSequence::new([m, c, t, n], data, label, SourceFormat::Synthetic).unwrap()
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn internal_format_round_trips(samples in proptest::collection::vec(arb_sequence(), 0..4)) {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &samples).unwrap();
        prop_assert_eq!(read_dataset(buf.as_slice()).unwrap(), samples);
    }

    #[test]
    fn sampled_indices_sorted_in_range(frames in 1usize..400, seed: u64, train: bool, crop in 1usize..40, extra in 0usize..20) {
        let s = FrameSampling { sample_len: crop + extra, crop_len: crop };
        let mode = if train { SplitMode::Train } else { SplitMode::Test };
        let idx = s.indices(frames, mode, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(idx.len(), crop);
        prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(idx.iter().all(|&i| i < frames));
    }

    #[test]
    fn joint_stream_is_identity(seq in arb_sequence()) {
        let g = chain(seq.joints());
        prop_assert_eq!(derive_stream(&seq, StreamKind::Joint, &g).unwrap(), seq);
    }

    /// Summing bones along the parent chain recovers every joint relative to
    /// the root.
    #[test]
    fn bones_reconstruct_joints(seq in arb_sequence()) {
        let n = seq.joints();
        let g = chain(n);
        let b = derive_stream(&seq, StreamKind::Bone, &g).unwrap();
        let [m, c, t, _] = seq.dims();
        for p in 0..m { for ch in 0..c { for f in 0..t {
            let mut acc = seq.at(p, ch, f, g.root());
            for j in 1..n {
                acc += b.at(p, ch, f, j);
                let want = seq.at(p, ch, f, j);
                prop_assert!((acc - want).abs() <= 1e-9 * want.abs().max(1.0) * n as f64);
            }
        }}}
    }
}
