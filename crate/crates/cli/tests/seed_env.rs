use gmlf_cli::{run, RunManifest, MANIFEST_FILE};

#[test]
fn environment_seed_is_used_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let (from_env, explicit, flag_wins) = (dir.path().join("e"), dir.path().join("x"), dir.path().join("f"));
    std::env::set_var(gmlf_cli::SEED_ENV, "42");
    run(["gmlf", "synth-data", "--n", "3", "--out", from_env.to_str().unwrap()]).unwrap();
    run(["gmlf", "synth-data", "--n", "3", "--seed", "7", "--out", flag_wins.to_str().unwrap()]).unwrap();
    std::env::remove_var(gmlf_cli::SEED_ENV);
    run(["gmlf", "synth-data", "--n", "3", "--seed", "42", "--out", explicit.to_str().unwrap()]).unwrap();

    let m = RunManifest::load(&from_env.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.seeds["global"], 42);
    assert!(m.args.ends_with(&["--seed".to_string(), "42".to_string()]));
    let x = RunManifest::load(&explicit.join(MANIFEST_FILE)).unwrap();
    for (a, b) in m.outputs.iter().zip(&x.outputs) {
        assert_eq!(a.sha256, b.sha256);
    }
    assert_eq!(RunManifest::load(&flag_wins.join(MANIFEST_FILE)).unwrap().seeds["global"], 7);

    // replay does not depend on the variable any more
    run(["gmlf", "--manifest", from_env.join(MANIFEST_FILE).to_str().unwrap()]).unwrap();
}
