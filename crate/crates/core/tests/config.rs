use proptest::prelude::*;
use stgat_core::attention::{AffinityKind, HeadFusion};
use stgat_core::config::Config;

fn set(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn empty_file_gives_full_defaults() {
    let cfg = Config::parse("", &[]).unwrap();
    assert_eq!(cfg.model.preset, "full");
    assert_eq!((cfg.window.tau, cfg.window.dilation), (3, 1));
    let a = cfg.attention_config().unwrap();
    assert_eq!(a.heads, 8);
    assert_eq!(a.kind, AffinityKind::EmbeddedGaussian);
    assert_eq!(a.fusion, HeadFusion::Concat);
    assert!(a.grouping);
    let m = cfg.model_config().unwrap();
    assert_eq!(m.channels, [64, 64, 128, 128, 256, 256, 256, 256]);
    assert_eq!(m.temporal_kernel, 7);
    let t = cfg.train_config();
    assert_eq!(
        (t.lr, t.lr_decay, t.weight_decay, t.momentum),
        (0.1, 0.1, 5e-4, 0.9)
    );
    assert_eq!((cfg.data.sample_frames, cfg.data.crop_frames), (150, 128));
}

#[test]
fn desk_preset_exercises_every_module() {
    let cfg = Config::parse("[model]\npreset = \"desk\"\n", &[]).unwrap();
    let m = cfg.model_config().unwrap();
    assert!(m.emm && m.dtw && m.atw && m.attention.grouping);
    assert_eq!(cfg.graph().unwrap().num_joints(), 7);
    assert_eq!(cfg.train_config().epochs, 60);
}

#[test]
fn user_values_merge_over_preset() {
    let text = "[model]\npreset = \"desk\"\nnum_classes = 7\n[train]\nlr = 1\n";
    let cfg = Config::parse(text, &[]).unwrap();
    assert_eq!(cfg.model.num_classes, 7);
    assert_eq!(cfg.model.channels, [8, 16]);
    assert_eq!(cfg.train.lr, 1.0);
}

#[test]
fn even_tau_is_rejected_naming_key() {
    let err = Config::parse("[window]\ntau = 4\n", &[]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("window.tau"), "{err}");
}

#[test]
fn override_beats_file() {
    let cfg = Config::parse(
        "[window]\ntau = 5\n",
        &set(&["window.tau=7", "attention.kind=dot-product"]),
    )
    .unwrap();
    assert_eq!(cfg.window.tau, 7);
    assert_eq!(
        cfg.attention_config().unwrap().kind,
        AffinityKind::DotProduct
    );
}

#[test]
fn override_can_switch_preset() {
    let cfg = Config::parse("", &set(&["model.preset=desk"])).unwrap();
    assert_eq!(cfg.model.channels, [8, 16]);
}

#[test]
fn unknown_key_lists_accepted_keys() {
    let err = Config::parse("[window]\ntaux = 3\n", &[]).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("window.taux") && msg.contains("dilation"),
        "{msg}"
    );
    let err = Config::parse("[extra]\na = 1\n", &[]).unwrap_err();
    assert!(err.to_string().contains("extra"));
}

#[test]
fn type_errors_name_key() {
    let err = Config::parse("[attention]\nheads = \"eight\"\n", &[]).unwrap_err();
    assert!(err.to_string().contains("attention.heads"), "{err}");
    let err = Config::parse("[train]\nbatch_size = -4\n", &[]).unwrap_err();
    assert!(err.to_string().contains("train.batch_size"), "{err}");
    let err = Config::parse("[model]\nchannels = [8, \"x\"]\n", &[]).unwrap_err();
    assert!(err.to_string().contains("model.channels[1]"), "{err}");
}

#[test]
fn bad_enum_value_is_config_error() {
    let err = Config::parse("[attention]\nfusion = \"sum\"\n", &[]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("attention.fusion"), "{err}");
}

#[test]
fn malformed_toml_is_config_error_with_line() {
    let err = Config::parse("[train]\nlr = 0.1\nepochs = = 3\n", &[]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("line 3"), "{err}");
}

#[test]
fn malformed_override_is_rejected() {
    assert!(Config::parse("", &set(&["window.tau"])).is_err());
    assert!(Config::parse("", &set(&["tau=3"])).is_err());
}

#[test]
fn heads_must_divide_widths_in_concat_mode() {
    let err = Config::parse("", &set(&["attention.heads=3"])).unwrap_err();
    assert!(err.to_string().contains("attention.heads"), "{err}");
    Config::parse("", &set(&["attention.heads=3", "attention.fusion=average"])).unwrap();
}

#[test]
fn crop_longer_than_sample_is_rejected() {
    assert!(Config::parse("", &set(&["data.crop_frames=200"])).is_err());
}

#[test]
fn load_reports_missing_file() {
    let err = Config::load(std::path::Path::new("/nonexistent/stgat.toml"), &[]).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// The effective config echo parses back to the same config.
    #[test]
    fn echo_round_trips(
        desk: bool,
        tau in prop::sample::select(vec![1usize, 3, 5, 7]),
        dilation in 1usize..3,
        heads in prop::sample::select(vec![1usize, 2]),
        lr in 0.0f64..1.0,
        seed: u32,
    ) {
        let overrides = vec![
            format!("model.preset={}", if desk { "desk" } else { "full" }),
            format!("window.tau={tau}"),
            format!("window.dilation={dilation}"),
            format!("attention.heads={heads}"),
            format!("train.lr={lr:?}"),
            format!("train.seed={seed}"),
        ];
        let cfg = Config::parse("", &overrides).unwrap();
        prop_assert_eq!(Config::parse(&cfg.to_toml(), &[]).unwrap(), cfg);
    }
}
