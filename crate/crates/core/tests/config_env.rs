//! Kept in its own binary: it mutates the process environment.

use stgat_core::config::{Config, OUTPUT_DIR_ENV};

#[test]
fn output_dir_comes_from_env_unless_configured() {
    std::env::set_var(OUTPUT_DIR_ENV, "/tmp/stgat-env-runs");
    let cfg = Config::parse("", &[]).unwrap();
    assert_eq!(
        cfg.output_dir(),
        std::path::Path::new("/tmp/stgat-env-runs")
    );
    let cfg = Config::parse("[output]\ndir = \"mine\"\n", &[]).unwrap();
    assert_eq!(cfg.output.dir, "mine");
    std::env::remove_var(OUTPUT_DIR_ENV);
    assert_eq!(Config::parse("", &[]).unwrap().output.dir, "runs");
}
