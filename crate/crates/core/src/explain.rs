//! Middle-level-feature explanations: decoder and residual are stacked under
//! the classifier and relevance is propagated from the predicted logit down
//! to the encoding.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrp::{lrp_linear, lrp_propagate, LrpConfig};
use crate::mlf::{residual_layer, MlfAutoencoder, MlfCatalog, MlfKind};
use crate::nn::{argmax, LayeredNetwork};
use crate::segmentation::{Partition, SegmentationHierarchy};

/// `h ↦ classifier(decoder(h) + residual)`.
#[derive(Clone, Debug)]
pub struct CompositeModel {
    pub decoder: LayeredNetwork,
    pub residual: Vec<f64>,
    pub classifier: LayeredNetwork,
}

pub fn stack_composite(ae: &MlfAutoencoder, classifier: &LayeredNetwork) -> Result<CompositeModel> {
    if ae.decoder.output_dim() != classifier.input_dim() {
        return Err(Error::dims(
            "decoder output vs classifier input",
            classifier.input_dim(),
            ae.decoder.output_dim(),
        ));
    }
    Ok(CompositeModel {
        decoder: ae.decoder.clone(),
        residual: ae.residual.clone(),
        classifier: classifier.clone(),
    })
}

impl CompositeModel {
    /// The classifier input reached from `h`.
    pub fn classifier_input(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.decoder.logits(h)?;
        for (v, r) in x.iter_mut().zip(&self.residual) {
            *v += r;
        }
        Ok(x)
    }

    pub fn logits(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.network()?.logits(h)
    }

    /// One layered network with the residual folded into the last decoder bias.
    pub fn network(&self) -> Result<LayeredNetwork> {
        let mut layers = self.decoder.layers().to_vec();
        let last = layers.pop().expect("decoder has at least one layer");
        layers.push(last.with_bias_offset(&self.residual)?);
        LayeredNetwork::new(layers, self.decoder.readout())?.then(&self.classifier)
    }

    pub fn decoder_depth(&self) -> usize {
        self.decoder.depth()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub kind: MlfKind,
    /// Coarse to fine for hierarchies; a single vector for flat and VAE kinds.
    pub levels: Vec<Vec<f64>>,
    /// Class whose logit was explained; the prediction unless overridden.
    pub predicted_class: usize,
    pub logit: f64,
    pub config: LrpConfig,
    /// Unit count per level of the explained encoding.
    pub level_sizes: Vec<usize>,
    /// Relevance arriving at the classifier input.
    pub pixel_relevance: Vec<f64>,
    /// Total relevance taken by the zero-weight residual branch.
    pub residual_relevance: f64,
    pub dropped_units: usize,
}

impl RelevanceReport {
    /// The finest (or only) relevance vector.
    pub fn finest(&self) -> &[f64] {
        self.levels.last().expect("report has at least one level")
    }
}

pub fn explain(
    classifier: &LayeredNetwork,
    x: &[f64],
    ae: &MlfAutoencoder,
    cfg: &LrpConfig,
) -> Result<RelevanceReport> {
    explain_class(classifier, x, ae, cfg, None)
}

/// Like [`explain`], but for the logit of `target` when given.
pub fn explain_class(
    classifier: &LayeredNetwork,
    x: &[f64],
    ae: &MlfAutoencoder,
    cfg: &LrpConfig,
    target: Option<usize>,
) -> Result<RelevanceReport> {
    if x.len() != ae.input_dim() {
        return Err(Error::dims("image vs autoencoder", ae.input_dim(), x.len()));
    }
    let composite = stack_composite(ae, classifier)?;
    let logits = classifier.logits(x)?;
    let target = match target {
        Some(t) if t >= logits.len() => {
            return Err(Error::InvalidInput(format!(
                "target class {t} out of range for {} classes",
                logits.len()
            )))
        }
        Some(t) => t,
        None => argmax(&logits),
    };
    let h = &ae.encoding;
    let trace = lrp_propagate(&composite.network()?, h, cfg, Some(target))?;

    let level_sizes = ae.catalog.level_sizes();
    let levels: Vec<Vec<f64>> = (0..level_sizes.len())
        .map(|k| trace.layers[k].clone())
        .collect();
    let pixel_relevance = trace.layers[composite.decoder_depth()].clone();

    let residual_branch = residual_layer(h.len(), &ae.residual);
    let residual = lrp_linear(&residual_branch, h, &pixel_relevance, cfg)?;

    Ok(RelevanceReport {
        kind: ae.kind,
        levels,
        predicted_class: target,
        logit: trace.activations.logits[target],
        config: *cfg,
        level_sizes,
        pixel_relevance,
        residual_relevance: residual.relevance.iter().sum(),
        dropped_units: trace.dropped_units,
    })
}

/// Pixel-level LRP on the classifier alone, summed per segment.
pub fn aggregate_oracle(
    classifier: &LayeredNetwork,
    x: &[f64],
    partition: &Partition,
    cfg: &LrpConfig,
) -> Result<Vec<f64>> {
    let n = partition.pixel_count();
    if n == 0 || !x.len().is_multiple_of(n) {
        return Err(Error::dims("image vs partition", n, x.len()));
    }
    let channels = x.len() / n;
    let trace = lrp_propagate(classifier, x, cfg, None)?;
    let mut out = vec![0.0; partition.regions];
    for (i, r) in trace.input().iter().enumerate() {
        out[partition.labels[i / channels]] += r;
    }
    Ok(out)
}

/// Indices sorted by descending value; ties go to the lower index.
pub fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| match values[b].total_cmp(&values[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    idx
}

fn check_report_matches(report: &RelevanceReport, hierarchy: &SegmentationHierarchy) -> Result<()> {
    if !report.kind.is_segmentation() {
        return Err(Error::InvalidInput("report does not explain a segmentation".into()));
    }
    let sizes: Vec<usize> = report.levels.iter().map(Vec::len).collect();
    if sizes != hierarchy.region_counts() {
        return Err(Error::InvalidInput(format!(
            "report levels {sizes:?} do not match hierarchy regions {:?}",
            hierarchy.region_counts()
        )));
    }
    Ok(())
}

/// For each of the top `n` coarsest segments, the chain of most relevant
/// children down to the finest level.
pub fn hierarchical_drilldown(
    report: &RelevanceReport,
    hierarchy: &SegmentationHierarchy,
    n: usize,
) -> Result<Vec<Vec<usize>>> {
    check_report_matches(report, hierarchy)?;
    let coarse = &report.levels[0];
    if n > coarse.len() {
        return Err(Error::InvalidInput(format!(
            "asked for {n} chains but the coarsest level has {} segments",
            coarse.len()
        )));
    }
    let mut chains = Vec::with_capacity(n);
    for &start in descending_order(coarse).iter().take(n) {
        let mut chain = vec![start];
        let mut current = start;
        for k in 0..hierarchy.depth() - 1 {
            let children = hierarchy.children(k, current);
            let u = &report.levels[k + 1];
            let slice: Vec<f64> = children.iter().map(|&c| u[c]).collect();
            current = children[descending_order(&slice)[0]];
            chain.push(current);
        }
        chains.push(chain);
    }
    Ok(chains)
}

/// Depth-first walk from the coarsest level visiting children by descending
/// relevance; returns finest-level segments in visit order.
pub fn flip_order_hierarchical(
    hierarchy: &SegmentationHierarchy,
    report: &RelevanceReport,
) -> Result<Vec<usize>> {
    check_report_matches(report, hierarchy)?;
    let depth = hierarchy.depth();
    let mut order = Vec::with_capacity(hierarchy.finest().regions);
    let mut stack: Vec<(usize, usize)> = descending_order(&report.levels[0])
        .into_iter()
        .rev()
        .map(|r| (0, r))
        .collect();
    while let Some((level, region)) = stack.pop() {
        if level + 1 == depth {
            order.push(region);
            continue;
        }
        let children = hierarchy.children(level, region);
        let u = &report.levels[level + 1];
        let slice: Vec<f64> = children.iter().map(|&c| u[c]).collect();
        for i in descending_order(&slice).into_iter().rev() {
            stack.push((level + 1, children[i]));
        }
    }
    Ok(order)
}

/// Segment hierarchy behind a segmentation autoencoder.
pub fn hierarchy_of(ae: &MlfAutoencoder) -> Option<&SegmentationHierarchy> {
    match &ae.catalog {
        MlfCatalog::Segments(h) => Some(h),
        MlfCatalog::Latents(_) => None,
    }
}
