//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any of them fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use gmlf::eval::{
    aopc, lime_fit, paired_t_test_greater, segment_image, EvalConfig, Evaluator, Explainer, MaskSampling,
    SegmentationConfig,
};
use gmlf::explain::{aggregate_oracle, explain, stack_composite};
use gmlf::lrp::{lrp_propagate, LrpConfig};
use gmlf::mlf::{build_flat_autoencoder, build_segmentation_autoencoder, build_vae_autoencoder, MlfAutoencoder};
use gmlf::nn::{classifier_loss_and_gradient, train_classifier, Activation, LayeredNetwork, Readout, TrainConfig};
use gmlf::segmentation::{check_refinement, flat_segment, hierarchical_segment, SegmentOptions};
use gmlf::synth::{synth_images, to_dataset, to_model_input, SynthConfig};
use gmlf::vae::{standard_normal, train_vae, vae_loss_and_gradient, VaeArch, VaeModel};
use gmlf::Tensor;
use gmlf_cli::{run, FileHash, RunManifest, MANIFEST_FILE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn mlp(sizes: &[usize], seed: u64) -> LayeredNetwork {
    LayeredNetwork::random(sizes, Activation::Relu, Activation::Identity, Readout::Logits, seed).unwrap()
}

fn uniform_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..h * w * c).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::image(h, w, c, data).unwrap()
}

/// Half synthetic shapes, half uniform noise (every fourth one RGB), as model inputs.
fn mixed_images(n: usize, seed: u64) -> Vec<Tensor> {
    let shapes = synth_images(&SynthConfig { n: n.div_ceil(2).max(3), seed, ..Default::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            if i % 2 == 0 {
                to_model_input(&shapes[i / 2].image)
            } else {
                let c = if i % 4 == 1 { 3 } else { 1 };
                uniform_image(&mut rng, 12, 12, c, -0.5, 0.5)
            }
        })
        .collect()
}

/// 1 to 4 strictly decreasing positive thresholds.
fn random_thresholds(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = rng.random_range(1..=4);
    let mut t: Vec<f64> = (0..k).map(|_| rng.random_range(0.005..1.2)).collect();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

fn composite_fidelity() -> Check {
    let start = Instant::now();
    let images = mixed_images(50, 101);
    let mut worst: f64 = 0.0;
    let mut kinds = 0;
    for (i, img) in images.iter().enumerate() {
        let x = img.data();
        let d = x.len();
        let clf = mlp(&[d, 32, 16, 3], i as u64);
        let hierarchy = segment_image(img, &SegmentationConfig::default()).map_err(|e| e.to_string())?;
        let vae = VaeModel::random(d, &VaeArch { hidden: vec![32], latent_dim: 10 }, 4.0, i as u64).unwrap();
        let aes: [MlfAutoencoder; 3] = [
            build_flat_autoencoder(img, hierarchy.finest()).unwrap(),
            build_segmentation_autoencoder(img, &hierarchy).unwrap(),
            build_vae_autoencoder(&vae, x).unwrap(),
        ];
        let expected = clf.logits(x).unwrap();
        for ae in &aes {
            let got = stack_composite(ae, &clf).unwrap().logits(&ae.encoding).unwrap();
            for (a, b) in got.iter().zip(&expected) {
                worst = worst.max((a - b).abs());
            }
            kinds += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(
        worst <= 1e-12 && elapsed < Duration::from_secs(30),
        format!("{kinds} composites, max |f(g(h)) - f(x)| = {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn segmentation_decoder_exact() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_x: f64 = 0.0;
    let mut worst_r: f64 = 0.0;
    for img in mixed_images(100, 202) {
        let thresholds = random_thresholds(&mut rng);
        let opts = SegmentOptions::with_min_region(rng.random_range(1..10));
        let h = hierarchical_segment(&img, &thresholds, &opts).unwrap();
        let ae = build_segmentation_autoencoder(&img, &h).unwrap();
        let decoded = ae.decode(&ae.encoding).unwrap();
        for (a, b) in decoded.iter().zip(img.data()) {
            worst_x = worst_x.max((a - b).abs());
        }
        worst_r = ae.residual.iter().fold(worst_r, |m, r| m.max(r.abs()));
    }
    ensure(
        worst_x <= 1e-12 && worst_r <= 1e-12,
        format!("100 images, max |g(1) - x| = {worst_x:.2e}, max |residual| = {worst_r:.2e}"),
    )
}

fn conservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for net_id in 0..20u64 {
        let depth = rng.random_range(1..=4);
        let sizes: Vec<usize> = (0..=depth)
            .map(|k| if k == depth { 3 } else { rng.random_range(2..12) })
            .collect();
        let net = mlp(&sizes, net_id);
        for (alpha, beta) in [(1.0, 0.0), (2.0, 1.0)] {
            let cfg = LrpConfig::new(alpha, beta, 1e-18).unwrap();
            for _ in 0..5 {
                let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(0.0..1.0)).collect();
                let trace = lrp_propagate(&net, &x, &cfg, None).unwrap();
                let top: f64 = trace.output.iter().sum();
                if top.abs() < 1e-6 {
                    continue;
                }
                for layer in &trace.layers {
                    let sum: f64 = layer.iter().sum();
                    worst = worst.max((sum - top).abs() / top.abs());
                }
                checked += 1;
            }
        }
    }
    ensure(
        worst <= 1e-9 && checked > 0,
        format!("{checked} propagations over 20 networks, max relative drift {worst:.2e}"),
    )
}

fn flat_matches_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let cfg = LrpConfig::new(1.0, 0.0, 1e-12).unwrap();
    let mut worst: f64 = 0.0;
    for net_id in 0..20u64 {
        let clf = mlp(&[100, 24, 12, 3], 1000 + net_id);
        for _ in 0..20 {
            let img = uniform_image(&mut rng, 10, 10, 1, 0.01, 1.0);
            let partition = flat_segment(&img, 0.3, &SegmentOptions::with_min_region(4)).unwrap();
            let ae = build_flat_autoencoder(&img, &partition).unwrap();
            let report = explain(&clf, img.data(), &ae, &cfg).unwrap();
            let oracle = aggregate_oracle(&clf, img.data(), &partition, &cfg).unwrap();
            for (u, o) in report.finest().iter().zip(&oracle) {
                worst = worst.max((u - o).abs() / o.abs().max(1e-12));
            }
        }
    }
    ensure(worst <= 1e-6, format!("400 pairs, max relative deviation {worst:.2e}"))
}

fn refinement() -> Check {
    let configs: [&[f64]; 5] = [&[0.5], &[0.6, 0.2], &[0.4, 0.2, 0.1], &[1.0, 0.3, 0.1, 0.03], &[0.25, 0.05]];
    let mut runs = 0;
    for (i, img) in mixed_images(100, 505).iter().enumerate() {
        for (c, t) in configs.iter().enumerate() {
            let opts = SegmentOptions::with_min_region((i + c) % 12);
            let h = hierarchical_segment(img, t, &opts).unwrap();
            check_refinement(&h).map_err(|v| format!("image {i}, config {c}: {v:?}"))?;
            runs += 1;
        }
    }
    Ok(format!("{runs} hierarchies nest"))
}

struct Trained {
    classifier: LayeredNetwork,
    vae: VaeModel,
    images: Vec<Tensor>,
    accuracy: f64,
    setup: Duration,
}

fn train_models() -> Trained {
    let start = Instant::now();
    let train = synth_images(&SynthConfig { n: 600, seed: 1, ..Default::default() }).unwrap();
    let test = synth_images(&SynthConfig { n: 150, seed: 2, ..Default::default() }).unwrap();
    let train_set = to_dataset(&train, 3).unwrap();
    let test_set = to_dataset(&test, 3).unwrap();
    let classifier = train_classifier(&train_set, &[256, 128, 64, 3], &TrainConfig::classifier_default())
        .unwrap()
        .network;
    let accuracy = test_set.accuracy(&classifier).unwrap();
    let vae = train_vae(&train_set.inputs, &VaeArch::default(), 0.1, &TrainConfig::vae_default())
        .unwrap()
        .model;
    Trained {
        classifier,
        vae,
        images: test.iter().take(60).map(|l| to_model_input(&l.image)).collect(),
        accuracy,
        setup: start.elapsed(),
    }
}

fn aopcs(t: &Trained, cfg: &EvalConfig, explainer: Explainer) -> Vec<f64> {
    let ev = Evaluator { classifier: &t.classifier, vae: Some(&t.vae), config: cfg };
    t.images
        .iter()
        .enumerate()
        .map(|(i, img)| ev.evaluate(explainer, img, i as u64).unwrap().aopc)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct Scores {
    by: Vec<(Explainer, Vec<f64>)>,
}

impl Scores {
    fn of(&self, e: Explainer) -> &[f64] {
        &self.by.iter().find(|(x, _)| *x == e).unwrap().1
    }

    fn beats(&self, a: Explainer, b: Explainer) -> (bool, String) {
        let t = paired_t_test_greater(self.of(a), self.of(b)).unwrap();
        let ok = t.p_value < 0.05;
        (ok, format!("{} {:.3} vs {} {:.3} (p={:.1e})", a.name(), mean(self.of(a)), b.name(), mean(self.of(b)), t.p_value))
    }
}

fn score_all(t: &Trained, cfg: &EvalConfig, explainers: &[Explainer]) -> (Scores, Duration) {
    let start = Instant::now();
    let by = explainers.iter().map(|&e| (e, aopcs(t, cfg, e))).collect();
    (Scores { by }, start.elapsed())
}

fn accuracy_gate(t: &Trained) -> Check {
    ensure(t.accuracy >= 0.95, format!("held-out accuracy {:.3}", t.accuracy))
}

fn segmentation_beats_random(t: &Trained, s: &Scores, took: Duration) -> Check {
    accuracy_gate(t)?;
    let (flat_ok, flat) = s.beats(Explainer::GmlfFlat, Explainer::Random);
    let (hier_ok, hier) = s.beats(Explainer::GmlfHier, Explainer::Random);
    let budget = t.setup + took;
    ensure(
        flat_ok && hier_ok && budget < Duration::from_secs(300),
        format!("{} images: {flat}; {hier}; {:.0}s with training", t.images.len(), budget.as_secs_f64()),
    )
}

fn lime_comparison(t: &Trained, s: &Scores) -> Check {
    accuracy_gate(t)?;
    let (flat_ok, flat) = s.beats(Explainer::GmlfFlat, Explainer::Random);
    let (lime_ok, lime) = s.beats(Explainer::Lime, Explainer::Random);
    let (gm, lm) = (mean(s.of(Explainer::GmlfFlat)), mean(s.of(Explainer::Lime)));
    let order = if gm >= lm { "gmlf-flat >= lime" } else { "lime > gmlf-flat" };
    ensure(flat_ok && lime_ok, format!("{flat}; {lime}; {order}"))
}

fn latent_beats_random(s: &Scores) -> Check {
    let (ok, detail) = s.beats(Explainer::GmlfVae, Explainer::RandomLatent);
    ensure(ok, format!("beta=0.1, 10 latents: {detail}"))
}

fn lime_recovers_linear_models() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst: f64 = 1.0;
    for m in 2..=6 {
        for _ in 0..20 {
            let coef: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = rng.random_range(-0.5..0.5);
            let e = lime_fit(m, MaskSampling::Exhaustive, 0.25, 1e-6, |mask| {
                Ok(b + coef.iter().zip(mask).filter(|(_, &on)| on).map(|(c, _)| c).sum::<f64>())
            })
            .map_err(|e| e.to_string())?;
            worst = worst.min(pearson(&e.weights, &coef));
        }
    }
    ensure(worst > 0.99, format!("100 models, m = 2..6, min Pearson r = {worst:.6}"))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn central_difference(params: &[f64], i: usize, h: f64, mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut p = params.to_vec();
    p[i] += h;
    let up = loss(&p);
    p[i] -= 2.0 * h;
    (up - loss(&p)) / (2.0 * h)
}

fn gradients_match() -> Check {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst: f64 = 0.0;
    let mut count = 0;

    let net = mlp(&[6, 8, 5, 3], 7);
    let inputs: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let labels: Vec<usize> = (0..5).map(|i| i % 3).collect();
    let analytic = classifier_loss_and_gradient(&net, &inputs, &labels).unwrap().1.flatten();
    let params = net.parameters();
    for (i, &a) in analytic.iter().enumerate() {
        let fd = central_difference(&params, i, h, |p| {
            let mut probe = net.clone();
            probe.set_parameters(p).unwrap();
            classifier_loss_and_gradient(&probe, &inputs, &labels).unwrap().0
        });
        worst = worst.max(rel_err(a, fd));
        count += 1;
    }

    let vae = VaeModel::random(5, &VaeArch { hidden: vec![6], latent_dim: 2 }, 0.1, 3).unwrap();
    let batch: Vec<Vec<f64>> = (0..3).map(|_| (0..5).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
    let eps: Vec<Vec<f64>> = (0..3).map(|i| standard_normal(2, 40 + i)).collect();
    let (_, g_enc, g_dec) = vae_loss_and_gradient(&vae, &batch, &eps).unwrap();
    for (is_enc, analytic) in [(true, g_enc.flatten()), (false, g_dec.flatten())] {
        let base = if is_enc { vae.encoder() } else { vae.decoder() };
        let params = base.parameters();
        for (i, &a) in analytic.iter().enumerate() {
            let fd = central_difference(&params, i, h, |p| {
                let mut probe = base.clone();
                probe.set_parameters(p).unwrap();
                let v = if is_enc {
                    VaeModel::new(probe, vae.decoder().clone(), vae.beta())
                } else {
                    VaeModel::new(vae.encoder().clone(), probe, vae.beta())
                };
                vae_loss_and_gradient(&v.unwrap(), &batch, &eps).unwrap().0
            });
            worst = worst.max(rel_err(a, fd));
            count += 1;
        }
    }
    ensure(worst < 1e-4, format!("{count} parameters, max relative error {worst:.2e}"))
}

fn aopc_values() -> Check {
    let v = aopc(&[1.0, 0.5, 0.25]).unwrap();
    let zero = aopc(&[0.7]).unwrap();
    ensure(
        (v - 5.0 / 12.0).abs() <= 1e-12 && zero == 0.0,
        format!("AOPC([1, 0.5, 0.25]) = {v:.15}, single score gives {zero}"),
    )
}

fn gmlf(args: &[&str]) -> Result<(), String> {
    run(std::iter::once("gmlf").chain(args.iter().copied()))
        .map(|_| ())
        .map_err(|e| format!("{args:?}: {e}"))
}

fn output_hashes(dir: &Path) -> Result<Vec<FileHash>, String> {
    let m = RunManifest::load(&dir.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    m.outputs.iter().map(|f| FileHash::of(&f.path).map_err(|e| e.to_string())).collect()
}

fn cli_replays() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |rel: &str| dir.path().join(rel).to_str().unwrap().to_string();
    gmlf(&["synth-data", "--n", "60", "--seed", "1", "--out", &p("train")])?;
    gmlf(&["synth-data", "--n", "9", "--seed", "2", "--out", &p("test")])?;
    gmlf(&["train-classifier", "--data", &p("train"), "--epochs", "5", "--hidden", "32", "--out", &p("clf")])?;
    gmlf(&["train-vae", "--data", &p("train"), "--epochs", "3", "--hidden", "32", "--latent", "4", "--out", &p("vae")])?;
    let (model, vae, image) = (p("clf/model.json"), p("vae/vae.json"), p("test/images/img_0000.pgm"));
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("explain_flat", vec!["explain", "--kind", "flat", "--model", &model, "--image", &image]),
        ("explain_hier", vec!["explain", "--kind", "hier", "--model", &model, "--image", &image]),
        ("explain_vae", vec!["explain", "--kind", "vae", "--model", &model, "--vae", &vae, "--image", &image]),
        (
            "evaluate",
            vec![
                "evaluate", "--explainer", "gmlf-flat,gmlf-hier,lime,random,gmlf-vae,random-latent", "--images",
                "", "--model", &model, "--vae", &vae, "--steps", "5", "--trials", "3", "--lime-samples", "100",
                "--limit", "4",
            ],
        ),
    ];
    let images = p("test/images");
    let mut files = 0;
    for (name, mut args) in runs {
        if let Some(slot) = args.iter_mut().find(|a| a.is_empty()) {
            *slot = &images;
        }
        let out = p(name);
        args.extend(["--out", &out]);
        gmlf(&args)?;
        let before = output_hashes(Path::new(&out))?;
        gmlf(&["--manifest", &format!("{out}/{MANIFEST_FILE}")])?;
        let after = output_hashes(Path::new(&out))?;
        if before != after {
            return Err(format!("{name}: replay changed its outputs"));
        }
        files += before.len();
    }
    Ok(format!("3 explain runs and 1 evaluate run replayed, {files} output files bit-identical"))
}

fn main() {
    let start = Instant::now();
    let mut failures = 0;
    let mut report = |id: usize, name: &str, check: Check| {
        let (tag, detail) = match check {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] criterion {id:>2}: {name}: {detail}");
    };
    let guarded = |f: &dyn Fn() -> Check| -> Check {
        catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        })
    };

    report(1, "composite equals classifier", guarded(&composite_fidelity));
    report(2, "segmentation decoder reconstructs", guarded(&segmentation_decoder_exact));
    report(3, "relevance conservation", guarded(&conservation));
    report(4, "flat relevance matches pixel oracle", guarded(&flat_matches_oracle));
    report(5, "hierarchies refine", guarded(&refinement));

    let trained = catch_unwind(train_models);
    match &trained {
        Ok(t) => {
            let cfg = EvalConfig::default();
            let all = [
                Explainer::GmlfFlat,
                Explainer::GmlfHier,
                Explainer::Random,
                Explainer::Lime,
                Explainer::GmlfVae,
                Explainer::RandomLatent,
            ];
            let (scores, took) = score_all(t, &cfg, &all[..3]);
            report(6, "segment relevance beats random", segmentation_beats_random(t, &scores, took));
            let (rest, _) = score_all(t, &cfg, &all[3..]);
            let mut scores = scores;
            scores.by.extend(rest.by);
            report(7, "gmlf and lime beat random", lime_comparison(t, &scores));
            report(8, "latent relevance beats random", latent_beats_random(&scores));

            let alt = EvalConfig { lrp: LrpConfig::new(1.0, 0.0, 1e-9).unwrap(), ..EvalConfig::default() };
            let (a1, _) = score_all(t, &alt, &[Explainer::GmlfFlat, Explainer::GmlfHier, Explainer::GmlfVae]);
            let info: Vec<String> = a1.by.iter().map(|(e, v)| format!("{} {:.3}", e.name(), mean(v))).collect();
            println!("       info: alpha=1 beta=0 mean AOPC: {}", info.join(", "));
        }
        Err(_) => {
            for (id, name) in [(6, "segment relevance beats random"), (7, "gmlf and lime beat random"), (8, "latent relevance beats random")] {
                report(id, name, Err("model training failed".into()));
            }
        }
    }

    report(9, "lime recovers linear models", guarded(&lime_recovers_linear_models));
    report(10, "gradients match finite differences", guarded(&gradients_match));
    report(11, "aopc values", guarded(&aopc_values));
    report(12, "cli runs replay bit-identically", guarded(&cli_replays));

    let total = start.elapsed();
    println!("total {:.0}s", total.as_secs_f64());
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
