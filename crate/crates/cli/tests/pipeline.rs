use std::fs;
use std::path::{Path, PathBuf};

use gmlf_cli::{run, CliError, LabelRow, RunManifest, RunStatus, MANIFEST_FILE};

fn gmlf(args: &[&str]) -> Result<gmlf_cli::RunOutcome, CliError> {
    run(std::iter::once("gmlf").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    /// Small dataset plus a classifier trained for a few epochs.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let train = root.join("train");
        let test = root.join("test");
        let clf = root.join("clf");
        gmlf(&["synth-data", "--n", "45", "--seed", "1", "--out", s(&train)]).unwrap();
        gmlf(&["synth-data", "--n", "9", "--seed", "2", "--out", s(&test)]).unwrap();
        gmlf(&[
            "train-classifier", "--data", s(&train), "--test", s(&test), "--epochs", "4", "--hidden", "16",
            "--out", s(&clf),
        ])
        .unwrap();
        Self { _dir: dir, root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

fn manifest(dir: &Path) -> RunManifest {
    RunManifest::load(&dir.join(MANIFEST_FILE)).unwrap()
}

#[test]
fn synth_data_is_balanced_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        gmlf(&["synth-data", "--n", "30", "--noise", "0", "--seed", "5", "--out", s(out)]).unwrap();
    }
    let rows: Vec<LabelRow> = csv::Reader::from_path(a.join("labels.csv"))
        .unwrap()
        .deserialize()
        .map(Result::unwrap)
        .collect();
    assert_eq!(rows.len(), 30);
    for label in 0..3 {
        assert_eq!(rows.iter().filter(|r| r.label == label).count(), 10);
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma.outputs.len(), 31);
    for (x, y) in ma.outputs.iter().zip(&mb.outputs) {
        assert_eq!(x.sha256, y.sha256);
    }
    let img = gmlf_cli::read_image(&a.join(&rows[0].file)).unwrap();
    assert_eq!(img.shape(), &[16, 16, 1]);
}

#[test]
fn full_pipeline_writes_every_artifact_and_replays() {
    let fx = Fixture::new();
    let image = fx.path("test/images/img_0000.pgm");
    let model = fx.path("clf/model.json");
    let vae = fx.path("vae");
    gmlf(&[
        "train-vae", "--data", s(&fx.path("train")), "--epochs", "2", "--hidden", "16", "--latent", "4",
        "--beta", "0.1", "--out", s(&vae),
    ])
    .unwrap();
    let vae_model = vae.join("vae.json");

    gmlf(&["segment", "--image", s(&image), "--levels", "3", "--out", s(&fx.path("seg"))]).unwrap();
    for k in 0..3 {
        assert!(fx.path(&format!("seg/level_{k}.pgm")).is_file());
    }
    let hierarchy = fx.path("seg/hierarchy.json");

    let cases: [(&str, Vec<&str>, &[&str]); 3] = [
        ("flat", vec![], &["overlay.ppm", "overlay.svg", "legend.json"]),
        ("hier", vec!["--hierarchy", s(&hierarchy)], &["overlay.ppm", "drilldown.ppm", "drilldown.json"]),
        ("vae", vec!["--vae", s(&vae_model)], &["traversal.ppm", "traversal.json"]),
    ];
    for (kind, extra, expected) in &cases {
        let out = fx.path(&format!("explain_{kind}"));
        let mut args = vec!["explain", "--kind", kind, "--model", s(&model), "--image", s(&image)];
        args.extend(extra);
        args.extend(["--out", s(&out)]);
        gmlf(&args).unwrap();
        for f in expected.iter().chain(&["report.json", "heatmap.ppm"]) {
            assert!(out.join(f).is_file(), "{kind}: missing {f}");
        }
        let m = manifest(&out);
        assert_eq!(m.status, RunStatus::Ok);
        assert!(m.inputs.iter().any(|f| f.path == image));
        gmlf(&["--manifest", s(&out.join(MANIFEST_FILE))]).unwrap();
    }

    let traversal = gmlf_cli::read_image(&fx.path("explain_vae/traversal.ppm")).unwrap();
    // 2 rows x 7 columns of 16x16 cells upscaled 8x with 2-pixel gutters
    assert_eq!(traversal.shape(), &[2 * 128 + 3 * 2, 7 * 128 + 8 * 2, 3]);

    let ev = fx.path("eval");
    gmlf(&[
        "evaluate", "--explainer", "gmlf-flat,gmlf-hier,lime,random,gmlf-vae,random-latent", "--images",
        s(&fx.path("test/images")), "--model", s(&model), "--vae", s(&vae_model), "--steps", "4", "--trials", "3",
        "--lime-samples", "60", "--limit", "4", "--out", s(&ev),
    ])
    .unwrap();
    for f in ["per_image.csv", "aopc.csv", "summary.csv", "summary.json", "morf.svg", "aopc.svg"] {
        assert!(ev.join(f).is_file(), "missing {f}");
    }
    let per_image = fs::read_to_string(ev.join("per_image.csv")).unwrap();
    assert!(per_image.starts_with("explainer,image,step,score\n"));
    // at most 5 points per curve, 4 images, 6 explainers
    assert!(per_image.lines().count() <= 1 + 6 * 4 * 5);
    gmlf(&["--manifest", s(&ev.join(MANIFEST_FILE))]).unwrap();

    let rendered = fx.path("render");
    gmlf(&[
        "render", "--image", s(&image), "--report", s(&fx.path("explain_hier/report.json")), "--hierarchy",
        s(&hierarchy), "--top", "1", "--out", s(&rendered),
    ])
    .unwrap();
    let legend: Vec<serde_json::Value> =
        serde_json::from_slice(&fs::read(rendered.join("legend.json")).unwrap()).unwrap();
    assert_eq!(legend.len(), 1);

    let rep = fx.path("report");
    gmlf(&["report", "--eval", s(&ev), "--out", s(&rep)]).unwrap();
    let md = fs::read_to_string(rep.join("report.md")).unwrap();
    assert!(md.contains("| gmlf-vae |") && md.contains("random-latent"));
}

#[test]
fn validation_errors_leave_no_output() {
    let fx = Fixture::new();
    let out = fx.path("never");
    let image = fx.path("test/images/img_0000.pgm");
    let missing_model = gmlf(&[
        "explain", "--kind", "flat", "--model", s(&fx.path("nope.json")), "--image", s(&image), "--out", s(&out),
    ])
    .unwrap_err();
    assert_eq!(missing_model.exit_code(), 2);
    let missing_vae = gmlf(&[
        "explain", "--kind", "vae", "--model", s(&fx.path("clf/model.json")), "--image", s(&image), "--out",
        s(&out),
    ])
    .unwrap_err();
    assert_eq!(missing_vae.exit_code(), 2);
    let no_vae_for_latents = gmlf(&[
        "evaluate", "--explainer", "gmlf-vae", "--images", s(&fx.path("test/images")), "--model",
        s(&fx.path("clf/model.json")), "--out", s(&out),
    ])
    .unwrap_err();
    assert_eq!(no_vae_for_latents.exit_code(), 2);
    assert!(matches!(gmlf(&["synth-data", "--n", "2", "--out", s(&out)]), Err(CliError::Core(_))));
    assert!(!out.exists());
}

#[test]
fn divergence_exits_with_the_numeric_code() {
    let fx = Fixture::new();
    let err = gmlf(&[
        "train-classifier", "--data", s(&fx.path("train")), "--epochs", "2", "--lr", "1e200", "--clip", "0",
        "--out", s(&fx.path("diverged")),
    ])
    .unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn failure_after_writing_is_marked_in_the_manifest() {
    let fx = Fixture::new();
    let image = fx.path("test/images/img_0000.pgm");
    let hier_out = fx.path("explain_hier");
    gmlf(&[
        "explain", "--kind", "hier", "--model", s(&fx.path("clf/model.json")), "--image", s(&image), "--out",
        s(&hier_out),
    ])
    .unwrap();
    // a hierarchy of another image has the same size but other regions
    let other = fx.path("other_seg");
    gmlf(&["segment", "--image", s(&fx.path("test/images/img_0001.pgm")), "--levels", "2", "--out", s(&other)])
        .unwrap();
    let out = fx.path("render_bad");
    let err = gmlf(&[
        "render", "--image", s(&image), "--report", s(&hier_out.join("report.json")), "--hierarchy",
        s(&other.join("hierarchy.json")), "--out", s(&out),
    ])
    .unwrap_err();
    let m = manifest(&out);
    assert_eq!(m.status, RunStatus::Failed);
    assert_eq!(m.error.as_deref(), Some(err.to_string().as_str()));
    assert!(m.outputs.iter().any(|f| f.path.ends_with("heatmap.ppm")));
    assert!(matches!(gmlf(&["--manifest", s(&out.join(MANIFEST_FILE))]), Err(CliError::Validation(_))));
}

#[test]
fn replay_rejects_changed_inputs_and_detects_drift() {
    let fx = Fixture::new();
    let src = fx.path("seg_src.pgm");
    fs::copy(fx.path("test/images/img_0002.pgm"), &src).unwrap();
    let out = fx.path("seg");
    gmlf(&["segment", "--image", s(&src), "--out", s(&out)]).unwrap();
    let path = out.join(MANIFEST_FILE);

    let mut tampered = manifest(&out);
    tampered.outputs[0].sha256 = "0".repeat(64);
    let fake = fx.path("tampered.json");
    tampered.save(&fake).unwrap();
    let drift = gmlf(&["--manifest", s(&fake)]).unwrap_err();
    assert!(matches!(drift, CliError::ReplayMismatch(_)));
    assert_eq!(drift.exit_code(), 1);

    fs::copy(fx.path("test/images/img_0003.pgm"), &src).unwrap();
    let changed = gmlf(&["--manifest", s(&path)]).unwrap_err();
    assert!(matches!(changed, CliError::Validation(ref m) if m.contains("seg_src.pgm")), "{changed}");
}

#[test]
fn seeded_commands_record_their_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    gmlf(&["synth-data", "--n", "3", "--seed", "11", "--out", s(&out)]).unwrap();
    let m = manifest(&out);
    assert_eq!(m.seeds.get("global"), Some(&11));
    assert_eq!(m.config["synth-data"]["seed"], 11);
    assert_eq!(m.command, "synth-data");
}
