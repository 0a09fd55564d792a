use std::fmt::Write as _;
use std::path::Path;

use gmlf::eval::{
    aopc_mean, paired_t_test_greater, segment_image, EvalConfig, Evaluator, Explainer, MeanCurve, MorfResult,
    SegmentationConfig, TTest,
};
use gmlf::explain::{explain_class, hierarchical_drilldown, RelevanceReport};
use gmlf::lrp::LrpConfig;
use gmlf::mlf::{build_flat_autoencoder, build_segmentation_autoencoder, build_vae_autoencoder, MlfKind};
use gmlf::nn::{train_classifier, LossKind, ModelFile, Optimizer, TrainConfig};
use gmlf::render::{
    drilldown_panels, grid, latent_traversal, line_plot_svg, overlay_svg, pixel_heatmap, segment_overlay, RgbImage,
};
use gmlf::segmentation::{auto_thresholds, hierarchical_segment, level_quantiles, SegmentOptions, SegmentationHierarchy};
use gmlf::synth::{from_model_input, synth_images, to_model_input, SynthConfig};
use gmlf::vae::{train_vae, vae_encode, VaeArch, VaeModel};
use gmlf::Tensor;
use serde::{Deserialize, Serialize};

use crate::files::{list_images, LabelRow, RunRecord, LABELS_FILE};
use crate::{
    CliError, Command, EvaluateArgs, ExplainArgs, KindArg, OptimizerArg, RenderArgs, ReportArgs, SegmentArgs,
    SynthArgs, TrainClassifierArgs, TrainVaeArgs, ViewArgs,
};

pub const SUMMARY_FILE: &str = "summary.json";

type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn dispatch(command: &Command, rec: &mut RunRecord) -> Result<String> {
    match command {
        Command::SynthData(a) => synth(a, rec),
        Command::TrainClassifier(a) => train_classifier_cmd(a, rec),
        Command::TrainVae(a) => train_vae_cmd(a, rec),
        Command::Segment(a) => segment(a, rec),
        Command::Explain(a) => explain_cmd(a, rec),
        Command::Evaluate(a) => evaluate(a, rec),
        Command::Render(a) => render(a, rec),
        Command::Report(a) => report(a, rec),
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn synth(a: &SynthArgs, rec: &mut RunRecord) -> Result<String> {
    let cfg = SynthConfig {
        n: a.n,
        classes: a.classes.clone(),
        size: a.size,
        channels: a.channels,
        noise: a.noise,
        seed: a.seed.seed,
    };
    let images = synth_images(&cfg)?;
    rec.open_output(&a.out)?;
    let ext = if a.channels == 1 { "pgm" } else { "ppm" };
    let mut rows = Vec::with_capacity(images.len());
    for (i, li) in images.iter().enumerate() {
        let file = format!("images/img_{i:04}.{ext}");
        rec.write_image(&file, &li.image)?;
        rows.push(LabelRow {
            file,
            label: li.label,
            class: cfg.classes[li.label].name().into(),
        });
    }
    rec.write_csv(LABELS_FILE, &rows)?;
    Ok(format!(
        "wrote {} images in {} classes to {}",
        images.len(),
        cfg.classes.len(),
        a.out.display()
    ))
}

fn train_config(
    lr: f64,
    batch_size: usize,
    epochs: usize,
    seed: u64,
    optimizer: OptimizerArg,
    clip: f64,
    loss: LossKind,
) -> Result<TrainConfig> {
    if clip < 0.0 || !clip.is_finite() {
        return Err(invalid("--clip must be nonnegative (0 disables clipping)"));
    }
    let cfg = TrainConfig {
        learning_rate: lr,
        batch_size,
        epochs,
        seed,
        optimizer: match optimizer {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::SgdMomentum => Optimizer::SgdMomentum,
        },
        loss,
        clip_norm: (clip > 0.0).then_some(clip),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn check_hidden(hidden: &[usize]) -> Result<()> {
    if hidden.contains(&0) {
        return Err(invalid("hidden layer widths must be positive"));
    }
    Ok(())
}

fn save_model(rec: &mut RunRecord, stem: &str, file: &ModelFile) -> Result<()> {
    let json = rec.output(&format!("{stem}.json"))?;
    rec.output(&format!("{stem}.bin"))?;
    file.save(&json)?;
    Ok(())
}

#[derive(Serialize)]
struct LossRow {
    epoch: usize,
    loss: f64,
}

#[derive(Serialize)]
struct ClassifierMetrics<'a> {
    architecture: &'a [usize],
    class_names: &'a [String],
    train_images: usize,
    train_accuracy: f64,
    test_images: Option<usize>,
    test_accuracy: Option<f64>,
    final_loss: f64,
}

fn train_classifier_cmd(a: &TrainClassifierArgs, rec: &mut RunRecord) -> Result<String> {
    check_hidden(&a.hidden)?;
    let cfg = train_config(
        a.lr,
        a.batch_size,
        a.epochs,
        a.seed.seed,
        a.optimizer,
        a.clip,
        LossKind::CrossEntropy,
    )?;
    let train = rec.read_dataset(&a.data)?;
    let test = a.test.as_deref().map(|d| rec.read_dataset(d)).transpose()?;
    if let Some(t) = &test {
        if t.data.dim() != train.data.dim() || t.data.classes > train.data.classes {
            return Err(invalid("test set does not match the training images or classes"));
        }
    }
    let mut arch = vec![train.data.dim()];
    arch.extend(&a.hidden);
    arch.push(train.data.classes);

    let outcome = train_classifier(&train.data, &arch, &cfg)?;
    let net = outcome.network;
    let train_accuracy = train.data.accuracy(&net)?;
    let test_accuracy = test.as_ref().map(|t| t.data.accuracy(&net)).transpose()?;

    rec.open_output(&a.out)?;
    save_model(rec, "model", &ModelFile::single("classifier", net))?;
    let losses: Vec<LossRow> = std::iter::once(outcome.initial_loss)
        .chain(outcome.epoch_losses.iter().copied())
        .enumerate()
        .map(|(epoch, loss)| LossRow { epoch, loss })
        .collect();
    rec.write_csv("training.csv", &losses)?;
    rec.write_json(
        "metrics.json",
        &ClassifierMetrics {
            architecture: &arch,
            class_names: &train.class_names,
            train_images: train.data.len(),
            train_accuracy,
            test_images: test.as_ref().map(|t| t.data.len()),
            test_accuracy,
            final_loss: losses.last().map_or(f64::NAN, |r| r.loss),
        },
    )?;
    let mut msg = format!("train accuracy {:.4}", train_accuracy);
    if let Some(acc) = test_accuracy {
        let _ = write!(msg, ", test accuracy {acc:.4}");
    }
    Ok(msg)
}

#[derive(Serialize)]
struct VaeRow {
    epoch: usize,
    loss: Option<f64>,
    reconstruction: f64,
}

fn train_vae_cmd(a: &TrainVaeArgs, rec: &mut RunRecord) -> Result<String> {
    check_hidden(&a.hidden)?;
    if a.latent == 0 {
        return Err(invalid("--latent must be positive"));
    }
    if !(a.beta >= 0.0 && a.beta.is_finite()) {
        return Err(invalid("--beta must be nonnegative"));
    }
    let cfg = train_config(a.lr, a.batch_size, a.epochs, a.seed.seed, a.optimizer, a.clip, LossKind::VaeElbo)?;
    let data = rec.read_dataset(&a.data)?;
    let arch = VaeArch {
        hidden: a.hidden.clone(),
        latent_dim: a.latent,
    };
    let outcome = train_vae(&data.data.inputs, &arch, a.beta, &cfg)?;

    rec.open_output(&a.out)?;
    save_model(rec, "vae", &outcome.model.to_model_file())?;
    let rows: Vec<VaeRow> = std::iter::once(VaeRow {
        epoch: 0,
        loss: None,
        reconstruction: outcome.initial_reconstruction,
    })
    .chain(
        outcome
            .epoch_losses
            .iter()
            .zip(&outcome.epoch_reconstruction)
            .enumerate()
            .map(|(i, (&loss, &reconstruction))| VaeRow {
                epoch: i + 1,
                loss: Some(loss),
                reconstruction,
            }),
    )
    .collect();
    rec.write_csv("training.csv", &rows)?;
    Ok(format!(
        "reconstruction error {:.4} -> {:.4} per image",
        outcome.initial_reconstruction,
        outcome.final_reconstruction()
    ))
}

/// `levels` quantiles evenly spread from 0.9 (coarse) down to 0.3 (fine).
fn segment(a: &SegmentArgs, rec: &mut RunRecord) -> Result<String> {
    if a.levels == 0 {
        return Err(invalid("--levels must be at least 1"));
    }
    let raw = rec.read_image(&a.image)?;
    let x = to_model_input(&raw);
    let thresholds = match (&a.thresholds, &a.auto_quantiles) {
        (Some(t), _) => t.clone(),
        (None, Some(q)) => auto_thresholds(&x, q)?,
        (None, None) => auto_thresholds(&x, &level_quantiles(a.levels))?,
    };
    let hierarchy = hierarchical_segment(&x, &thresholds, &SegmentOptions::with_min_region(a.min_region))?;
    rec.open_output(&a.out)?;
    rec.write_json("hierarchy.json", &hierarchy)?;
    for (k, level) in hierarchy.levels.iter().enumerate() {
        rec.write_labels(&format!("level_{k}.pgm"), level.width, level.height, &level.labels)?;
    }
    Ok(format!("regions per level (coarse to fine): {:?}", hierarchy.region_counts()))
}

fn load_hierarchy(rec: &mut RunRecord, path: &Path, raw: &Tensor) -> Result<SegmentationHierarchy> {
    let h: SegmentationHierarchy = rec.read_json(path)?;
    let (height, width, _) = raw.image_dims()?;
    if h.height() != height || h.width() != width {
        return Err(invalid(format!(
            "{}: hierarchy is {}x{} but the image is {height}x{width}",
            path.display(),
            h.height(),
            h.width()
        )));
    }
    // round-trip through the constructor so hand-edited files are checked
    Ok(SegmentationHierarchy::from_parts(h.levels, h.parents)?)
}

fn explain_cmd(a: &ExplainArgs, rec: &mut RunRecord) -> Result<String> {
    let lrp = LrpConfig::new(a.lrp.alpha, a.lrp.beta, a.lrp.epsilon)?;
    if a.kind != KindArg::Vae && a.vae.is_some() {
        return Err(invalid("--vae only applies to --kind vae"));
    }
    if a.kind == KindArg::Vae && a.vae.is_none() {
        return Err(invalid("--kind vae needs --vae"));
    }
    let classifier = rec.load_classifier(&a.model)?;
    let raw = rec.read_image(&a.image)?;
    let x = to_model_input(&raw);
    if classifier.input_dim() != x.len() {
        return Err(invalid(format!(
            "classifier expects {} inputs but the image has {}",
            classifier.input_dim(),
            x.len()
        )));
    }
    let (ae, hierarchy, vae) = match a.kind {
        KindArg::Flat | KindArg::Hier => {
            let h = match &a.hierarchy {
                Some(p) => load_hierarchy(rec, p, &raw)?,
                None => segment_image(&x, &SegmentationConfig::default())?,
            };
            let ae = if a.kind == KindArg::Flat {
                build_flat_autoencoder(&x, h.finest())?
            } else {
                build_segmentation_autoencoder(&x, &h)?
            };
            (ae, Some(h), None)
        }
        KindArg::Vae => {
            let vae = rec.load_vae(a.vae.as_deref().expect("checked above"))?;
            (build_vae_autoencoder(&vae, x.data())?, None, Some(vae))
        }
    };
    let report = explain_class(&classifier, x.data(), &ae, &lrp, a.target_class)?;

    rec.open_output(&a.out)?;
    rec.write_json("report.json", &report)?;
    if let Some(h) = &hierarchy {
        rec.write_json("hierarchy.json", h)?;
    }
    render_views(rec, &raw, &report, hierarchy.as_ref(), vae.as_ref(), &a.view)?;
    let top: Vec<String> = gmlf::explain::descending_order(report.finest())
        .into_iter()
        .take(a.view.top)
        .map(|i| format!("{i} ({:.4})", report.finest()[i]))
        .collect();
    Ok(format!(
        "class {} logit {:.4}; most relevant units: {}",
        report.predicted_class,
        report.logit,
        top.join(", ")
    ))
}

#[derive(Serialize)]
struct TraversalRow {
    latent: usize,
    relevance: f64,
    low: f64,
    high: f64,
}

/// Heatmap, segment overlays, drill-down panels or latent traversals for a report.
fn render_views(
    rec: &mut RunRecord,
    raw: &Tensor,
    report: &RelevanceReport,
    hierarchy: Option<&SegmentationHierarchy>,
    vae: Option<&VaeModel>,
    view: &ViewArgs,
) -> Result<()> {
    let (h, w, c) = raw.image_dims()?;
    let scale = view.scale.max(1);
    rec.write_rgb("heatmap.ppm", &pixel_heatmap(h, w, &report.pixel_relevance)?.scaled(scale))?;
    match report.kind {
        MlfKind::FlatSeg | MlfKind::HierSeg => {
            let hier = hierarchy.ok_or_else(|| invalid("segment reports need --hierarchy"))?;
            let finest = hier.finest();
            let overlay = segment_overlay(raw, finest, report.finest(), view.top.min(finest.regions))?;
            rec.write_rgb("overlay.ppm", &overlay.image.scaled(scale))?;
            rec.write_text("overlay.svg", &overlay_svg(&overlay, scale))?;
            rec.write_json("legend.json", &overlay.legend)?;
            if report.kind == MlfKind::HierSeg {
                let n = view.top.min(report.levels[0].len());
                let chains = hierarchical_drilldown(report, hier, n)?;
                let panels = drilldown_panels(raw, &chains, hier, &report.levels)?;
                let rows: Vec<Vec<RgbImage>> = panels
                    .iter()
                    .map(|row| row.iter().map(|o| o.image.scaled(scale)).collect())
                    .collect();
                rec.write_rgb("drilldown.ppm", &grid(&rows, 2)?)?;
                rec.write_json("drilldown.json", &chains)?;
            }
        }
        MlfKind::Vae => {
            let vae = vae.ok_or_else(|| invalid("vae reports need --vae"))?;
            let x = to_model_input(raw);
            let (mu, _) = vae_encode(vae, x.data())?;
            let ranges: Vec<(f64, f64)> = vae
                .latent_mean()
                .iter()
                .zip(vae.latent_std())
                .map(|(m, s)| (m - 3.0 * s, m + 3.0 * s))
                .collect();
            let rows = latent_traversal(
                vae.decoder(),
                &mu,
                report.finest(),
                view.latents.min(mu.len()),
                view.traversal_steps,
                &ranges,
            )?;
            let mut cells = Vec::with_capacity(rows.len());
            for (_, decoded) in &rows {
                let row = decoded
                    .iter()
                    .map(|d| {
                        let img = from_model_input(&Tensor::image(h, w, c, d.clone())?);
                        Ok(RgbImage::from_tensor(&img)?.scaled(scale))
                    })
                    .collect::<Result<Vec<_>>>()?;
                cells.push(row);
            }
            if !cells.is_empty() {
                rec.write_rgb("traversal.ppm", &grid(&cells, 2)?)?;
            }
            let meta: Vec<TraversalRow> = rows
                .iter()
                .map(|(i, _)| TraversalRow {
                    latent: *i,
                    relevance: report.finest()[*i],
                    low: ranges[*i].0,
                    high: ranges[*i].1,
                })
                .collect();
            rec.write_json("traversal.json", &meta)?;
        }
    }
    Ok(())
}

fn render(a: &RenderArgs, rec: &mut RunRecord) -> Result<String> {
    let raw = rec.read_image(&a.image)?;
    let report: RelevanceReport = rec.read_json(&a.report)?;
    let hierarchy = a.hierarchy.as_deref().map(|p| load_hierarchy(rec, p, &raw)).transpose()?;
    let vae = a.vae.as_deref().map(|p| rec.load_vae(p)).transpose()?;
    match report.kind {
        MlfKind::Vae if vae.is_none() => return Err(invalid("vae reports need --vae")),
        MlfKind::FlatSeg | MlfKind::HierSeg if hierarchy.is_none() => {
            return Err(invalid("segment reports need --hierarchy"))
        }
        _ => {}
    }
    if report.pixel_relevance.len() != raw.len() {
        return Err(invalid("report and image sizes differ"));
    }
    rec.open_output(&a.out)?;
    render_views(rec, &raw, &report, hierarchy.as_ref(), vae.as_ref(), &a.view)?;
    Ok(format!("rendered {} report to {}", kind_name(report.kind), a.out.display()))
}

fn kind_name(kind: MlfKind) -> &'static str {
    match kind {
        MlfKind::FlatSeg => "flat",
        MlfKind::HierSeg => "hierarchical",
        MlfKind::Vae => "vae",
    }
}

#[derive(Serialize)]
struct CurveRow<'a> {
    explainer: &'a str,
    image: &'a str,
    step: usize,
    score: f64,
}

#[derive(Serialize)]
struct AopcRow<'a> {
    explainer: &'a str,
    image: &'a str,
    steps: usize,
    aopc: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    explainer: &'a str,
    step: usize,
    mean_score: f64,
    mean_aopc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainerSummary {
    pub explainer: Explainer,
    /// Mean of the per-image AOPC values.
    pub mean_aopc: f64,
    /// Mean curve over images, shorter curves padded with their last score.
    pub curve: MeanCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub explainer: Explainer,
    pub baseline: Explainer,
    /// Paired one-sided test of per-image AOPC, explainer > baseline.
    pub test: TTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub config: EvalConfig,
    pub images: usize,
    pub explainers: Vec<ExplainerSummary>,
    pub comparisons: Vec<Comparison>,
}

pub(crate) fn baseline_of(e: Explainer) -> Option<Explainer> {
    match e {
        Explainer::GmlfFlat | Explainer::GmlfHier | Explainer::Lime => Some(Explainer::Random),
        Explainer::GmlfVae => Some(Explainer::RandomLatent),
        Explainer::Random | Explainer::RandomLatent => None,
    }
}

fn evaluate(a: &EvaluateArgs, rec: &mut RunRecord) -> Result<String> {
    let mut explainers: Vec<Explainer> = Vec::new();
    for e in &a.explainer {
        if !explainers.contains(e) {
            explainers.push(*e);
        }
    }
    if explainers.is_empty() {
        return Err(invalid("no explainers given"));
    }
    if a.steps == 0 || a.trials == 0 {
        return Err(invalid("--steps and --trials must be at least 1"));
    }
    if a.vae.is_none() {
        if let Some(e) = explainers.iter().find(|e| e.needs_vae()) {
            return Err(invalid(format!("{} needs --vae", e.name())));
        }
    }
    let config = EvalConfig {
        steps: a.steps,
        trials: a.trials,
        seed: a.seed.seed,
        lrp: LrpConfig::new(a.alpha, a.beta, a.epsilon)?,
        lime_samples: a.lime_samples,
        ..EvalConfig::default()
    };
    let classifier = rec.load_classifier(&a.model)?;
    let vae = a.vae.as_deref().map(|p| rec.load_vae(p)).transpose()?;
    let mut files = list_images(&a.images)?;
    if let Some(n) = a.limit {
        files.truncate(n);
    }
    if files.is_empty() {
        return Err(invalid(format!("{}: no PGM/PPM images", a.images.display())));
    }
    let mut images = Vec::with_capacity(files.len());
    let mut names = Vec::with_capacity(files.len());
    for f in &files {
        let x = to_model_input(&rec.read_image(f)?);
        if x.len() != classifier.input_dim() {
            return Err(invalid(format!(
                "{}: {} values but the classifier expects {}",
                f.display(),
                x.len(),
                classifier.input_dim()
            )));
        }
        names.push(f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
        images.push(x);
    }

    let evaluator = Evaluator {
        classifier: &classifier,
        vae: vae.as_ref(),
        config: &config,
    };
    let mut results: Vec<(Explainer, Vec<MorfResult>)> = Vec::with_capacity(explainers.len());
    for &e in &explainers {
        let per_image = images
            .iter()
            .enumerate()
            .map(|(id, x)| evaluator.evaluate(e, x, id as u64))
            .collect::<gmlf::Result<Vec<_>>>()?;
        results.push((e, per_image));
    }

    let mut summaries = Vec::with_capacity(results.len());
    for (e, per_image) in &results {
        let longest = per_image.iter().map(|r| r.steps).max().unwrap_or(0);
        let padded: Vec<MorfResult> = per_image.iter().map(|r| r.padded(longest)).collect();
        summaries.push(ExplainerSummary {
            explainer: *e,
            mean_aopc: per_image.iter().map(|r| r.aopc).sum::<f64>() / per_image.len() as f64,
            curve: aopc_mean(&padded)?,
        });
    }
    let aopcs = |e: Explainer| -> Option<Vec<f64>> {
        results
            .iter()
            .find(|(x, _)| *x == e)
            .map(|(_, r)| r.iter().map(|m| m.aopc).collect())
    };
    let mut comparisons = Vec::new();
    for &e in &explainers {
        if let Some(b) = baseline_of(e) {
            if let (Some(x), Some(y)) = (aopcs(e), aopcs(b)) {
                if x.len() >= 2 {
                    comparisons.push(Comparison {
                        explainer: e,
                        baseline: b,
                        test: paired_t_test_greater(&x, &y)?,
                    });
                }
            }
        }
    }

    rec.open_output(&a.out)?;
    let mut curve_rows = Vec::new();
    let mut aopc_rows = Vec::new();
    for (e, per_image) in &results {
        for (name, r) in names.iter().zip(per_image) {
            for (step, &score) in r.scores.iter().enumerate() {
                curve_rows.push(CurveRow {
                    explainer: e.name(),
                    image: name,
                    step,
                    score,
                });
            }
            aopc_rows.push(AopcRow {
                explainer: e.name(),
                image: name,
                steps: r.steps,
                aopc: r.aopc,
            });
        }
    }
    rec.write_csv("per_image.csv", &curve_rows)?;
    rec.write_csv("aopc.csv", &aopc_rows)?;
    let summary_rows: Vec<SummaryRow> = summaries
        .iter()
        .flat_map(|s| {
            s.curve
                .mean_scores
                .iter()
                .zip(&s.curve.aopc_per_step)
                .enumerate()
                .map(|(step, (&mean_score, &mean_aopc))| SummaryRow {
                    explainer: s.explainer.name(),
                    step,
                    mean_score,
                    mean_aopc,
                })
        })
        .collect();
    rec.write_csv("summary.csv", &summary_rows)?;
    let morf: Vec<(String, Vec<f64>)> = summaries
        .iter()
        .map(|s| (s.explainer.name().to_string(), s.curve.mean_scores.clone()))
        .collect();
    let aopc: Vec<(String, Vec<f64>)> = summaries
        .iter()
        .map(|s| (s.explainer.name().to_string(), s.curve.aopc_per_step.clone()))
        .collect();
    rec.write_text("morf.svg", &line_plot_svg("MoRF", "class probability", &morf))?;
    rec.write_text("aopc.svg", &line_plot_svg("AOPC", "AOPC", &aopc))?;
    let summary = EvalSummary {
        config,
        images: images.len(),
        explainers: summaries,
        comparisons,
    };
    rec.write_json(SUMMARY_FILE, &summary)?;
    Ok(summary_table(&summary))
}

fn summary_table(s: &EvalSummary) -> String {
    let mut out = format!("{} images\n", s.images);
    for e in &s.explainers {
        let _ = write!(out, "{:<14} mean AOPC {:.4}", e.explainer.name(), e.mean_aopc);
        if let Some(c) = s.comparisons.iter().find(|c| c.explainer == e.explainer) {
            let _ = write!(out, "  vs {} p = {:.3e}", c.baseline.name(), c.test.p_value);
        }
        out.push('\n');
    }
    out
}

fn report(a: &ReportArgs, rec: &mut RunRecord) -> Result<String> {
    let mut loaded = Vec::with_capacity(a.evals.len());
    for dir in &a.evals {
        let summary: EvalSummary = rec.read_json(&dir.join(SUMMARY_FILE))?;
        loaded.push((dir, summary));
    }
    rec.open_output(&a.out)?;
    let mut md = String::from("# Evaluation report\n");
    let mut series = Vec::new();
    for (dir, s) in &loaded {
        let c = &s.config;
        let _ = write!(
            md,
            "\n## {}\n\n{} images, up to {} steps, {} random trials, seed {}, alpha {}, beta {}.\n\n",
            dir.display(),
            s.images,
            c.steps,
            c.trials,
            c.seed,
            c.lrp.alpha,
            c.lrp.beta
        );
        md.push_str("| explainer | mean AOPC | baseline | mean difference | t | p (one-sided) |\n");
        md.push_str("|---|---|---|---|---|---|\n");
        for e in &s.explainers {
            let _ = write!(md, "| {} | {:.4} |", e.explainer.name(), e.mean_aopc);
            match s.comparisons.iter().find(|c| c.explainer == e.explainer) {
                Some(cmp) => {
                    let _ = writeln!(
                        md,
                        " {} | {:.4} | {:.3} | {:.3e} |",
                        cmp.baseline.name(),
                        cmp.test.mean_difference,
                        cmp.test.t,
                        cmp.test.p_value
                    );
                }
                None => md.push_str(" | | | |\n"),
            }
            let label = if loaded.len() > 1 {
                format!("{}: {}", dir.display(), e.explainer.name())
            } else {
                e.explainer.name().to_string()
            };
            series.push((label, e.curve.aopc_per_step.clone()));
        }
    }
    rec.write_text("report.md", &md)?;
    rec.write_text("aopc.svg", &line_plot_svg("AOPC", "AOPC", &series))?;
    Ok(format!("summarized {} evaluation runs", loaded.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baselines() {
        assert_eq!(baseline_of(Explainer::Lime), Some(Explainer::Random));
        assert_eq!(baseline_of(Explainer::GmlfVae), Some(Explainer::RandomLatent));
        assert_eq!(baseline_of(Explainer::Random), None);
    }
}
