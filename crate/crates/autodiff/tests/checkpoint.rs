use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stgat_autodiff::{Checkpoint, Init, ParamStore, Tensor, TensorError, CHECKPOINT_MAGIC};

fn store() -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = ParamStore::new();
    s.add(
        "block0.attn.theta",
        &[4, 8],
        Init::Normal { std: 1.0 },
        &mut rng,
    )
    .unwrap();
    s.add(
        "fc.bias",
        &[5],
        Init::Uniform {
            low: -1.0,
            high: 1.0,
        },
        &mut rng,
    )
    .unwrap();
    s.set_buffer(
        "block0.bn.running_var",
        Tensor::from_f64([2], &[0.5, 2.25]).unwrap(),
    )
    .unwrap();
    s
}

#[test]
fn file_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let original = store();
    Checkpoint::from_store(&original, "[model]\nheads = 2\n")
        .save(&path)
        .unwrap();

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);

    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.config, "[model]\nheads = 2\n");
    let mut fresh = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    fresh
        .add("block0.attn.theta", &[4, 8], Init::Zeros, &mut rng)
        .unwrap();
    fresh.add("fc.bias", &[5], Init::Zeros, &mut rng).unwrap();
    fresh
        .set_buffer("block0.bn.running_var", Tensor::zeros([2]))
        .unwrap();
    loaded.restore_into(&mut fresh).unwrap();

    for (id, p) in original.iter() {
        let got = fresh.value(id);
        let a: Vec<u64> = p.value.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = got.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b, "{}", p.name);
    }
    assert_eq!(
        fresh.buffer("block0.bn.running_var").unwrap().data(),
        &[0.5, 2.25]
    );
}

#[test]
fn shape_mismatch_is_rejected() {
    let ckpt = Checkpoint::from_store(&store(), "");
    let mut other = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    other
        .add("block0.attn.theta", &[8, 4], Init::Zeros, &mut rng)
        .unwrap();
    other.add("fc.bias", &[5], Init::Zeros, &mut rng).unwrap();
    assert!(matches!(
        ckpt.restore_into(&mut other),
        Err(TensorError::Checkpoint(_))
    ));
    other
        .set_buffer("block0.bn.running_var", Tensor::zeros([2]))
        .unwrap();
    assert!(matches!(
        ckpt.restore_into(&mut other),
        Err(TensorError::Shape { .. })
    ));
}

#[test]
fn corrupt_magic_is_rejected() {
    let mut bytes = Vec::new();
    Checkpoint::from_store(&store(), "")
        .write_to(&mut bytes)
        .unwrap();
    bytes[0] = b'X';
    assert!(Checkpoint::read_from(&bytes[..]).is_err());
    let mut bytes = Vec::new();
    Checkpoint::from_store(&store(), "")
        .write_to(&mut bytes)
        .unwrap();
    bytes.truncate(bytes.len() - 3);
    assert!(Checkpoint::read_from(&bytes[..]).is_err());
}
