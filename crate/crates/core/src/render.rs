//! Raster overlays and SVG plots.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::explain::descending_order;
use crate::nn::LayeredNetwork;
use crate::segmentation::{Partition, SegmentationHierarchy};
use crate::tensor::Tensor;

/// Tint colors by relevance rank; ranks past the end wrap around.
pub const RANK_COLORS: [[u8; 3]; 8] = [
    [230, 25, 25],
    [245, 130, 30],
    [255, 225, 25],
    [60, 180, 75],
    [70, 240, 240],
    [0, 100, 220],
    [145, 30, 180],
    [240, 50, 230],
];

pub fn rank_color(rank: usize) -> [u8; 3] {
    RANK_COLORS[rank % RANK_COLORS.len()]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    /// Gray or RGB tensor with values in [0, 1]; other channel counts use the channel mean.
    pub fn from_tensor(image: &Tensor) -> Result<Self> {
        let (h, w, c) = image.image_dims()?;
        let data = image.data();
        let pixels = (0..h * w)
            .map(|p| {
                let px = &data[p * c..(p + 1) * c];
                if c == 3 {
                    [to_byte(px[0]), to_byte(px[1]), to_byte(px[2])]
                } else {
                    let g = to_byte(px.iter().sum::<f64>() / c as f64);
                    [g, g, g]
                }
            })
            .collect();
        Ok(Self {
            width: w,
            height: h,
            pixels,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn to_raw(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }

    /// Nearest-neighbour upscale by an integer factor.
    pub fn scaled(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let (w, h) = (self.width * factor, self.height * factor);
        let pixels = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| self.get(x / factor, y / factor))
            .collect();
        Self {
            width: w,
            height: h,
            pixels,
        }
    }
}

fn blend(base: [u8; 3], tint: [u8; 3]) -> [u8; 3] {
    let mix = |a: u8, b: u8| ((a as u16 + b as u16) / 2) as u8;
    [mix(base[0], tint[0]), mix(base[1], tint[1]), mix(base[2], tint[2])]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LegendEntry {
    pub segment: usize,
    pub relevance: f64,
    pub color: [u8; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Overlay {
    pub image: RgbImage,
    /// Tinted segments, most relevant first.
    pub legend: Vec<LegendEntry>,
}

impl Overlay {
    pub fn tinted_segments(&self) -> Vec<usize> {
        self.legend.iter().map(|e| e.segment).collect()
    }
}

/// Tints the `top_n` most relevant segments, one color per rank.
pub fn segment_overlay(
    image: &Tensor,
    partition: &Partition,
    relevance: &[f64],
    top_n: usize,
) -> Result<Overlay> {
    if relevance.len() != partition.regions {
        return Err(Error::dims("segment relevance", partition.regions, relevance.len()));
    }
    let ranked: Vec<usize> = descending_order(relevance).into_iter().take(top_n).collect();
    tint_segments(image, partition, &ranked, relevance, rank_color)
}

fn tint_segments(
    image: &Tensor,
    partition: &Partition,
    segments: &[usize],
    relevance: &[f64],
    color: impl Fn(usize) -> [u8; 3],
) -> Result<Overlay> {
    let mut out = RgbImage::from_tensor(image)?;
    if out.width != partition.width || out.height != partition.height {
        return Err(Error::InvalidInput("partition and image sizes differ".into()));
    }
    let mut tint = vec![None; partition.regions];
    let mut legend = Vec::with_capacity(segments.len());
    for (rank, &s) in segments.iter().enumerate() {
        let c = color(rank);
        tint[s] = Some(c);
        legend.push(LegendEntry {
            segment: s,
            relevance: relevance[s],
            color: c,
        });
    }
    for (px, &label) in out.pixels.iter_mut().zip(&partition.labels) {
        if let Some(c) = tint[label] {
            *px = blend(*px, c);
        }
    }
    Ok(Overlay { image: out, legend })
}

/// Diverging blue-white-red map of per-pixel relevance (channels summed),
/// scaled by the largest magnitude.
pub fn pixel_heatmap(height: usize, width: usize, pixel_relevance: &[f64]) -> Result<RgbImage> {
    let n = height * width;
    if n == 0 || !pixel_relevance.len().is_multiple_of(n) {
        return Err(Error::dims("pixel relevance", n, pixel_relevance.len()));
    }
    let c = pixel_relevance.len() / n;
    let per_pixel: Vec<f64> = (0..n)
        .map(|p| pixel_relevance[p * c..(p + 1) * c].iter().sum())
        .collect();
    let scale = per_pixel.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pixels = per_pixel
        .iter()
        .map(|&v| {
            let t = if scale > 0.0 { v / scale } else { 0.0 };
            let fade = to_byte(1.0 - t.abs());
            if t >= 0.0 {
                [255, fade, fade]
            } else {
                [fade, fade, 255]
            }
        })
        .collect();
    Ok(RgbImage {
        width,
        height,
        pixels,
    })
}

/// One overlay per (chain, level), tinting only the chain's segment at that level.
pub fn drilldown_panels(
    image: &Tensor,
    chains: &[Vec<usize>],
    hierarchy: &SegmentationHierarchy,
    relevance: &[Vec<f64>],
) -> Result<Vec<Vec<Overlay>>> {
    if relevance.len() != hierarchy.depth() {
        return Err(Error::dims("relevance levels", hierarchy.depth(), relevance.len()));
    }
    chains
        .iter()
        .enumerate()
        .map(|(i, chain)| {
            if chain.len() != hierarchy.depth() {
                return Err(Error::dims("drill-down chain", hierarchy.depth(), chain.len()));
            }
            chain
                .iter()
                .enumerate()
                .map(|(level, &s)| {
                    tint_segments(image, &hierarchy.levels[level], &[s], &relevance[level], |_| {
                        rank_color(i)
                    })
                })
                .collect()
        })
        .collect()
}

/// Decodes `h` with each of the `latents` most relevant units (by |u|) swept
/// over its range; rows are latents, columns sweep steps. One step decodes
/// `h` unchanged.
pub fn latent_traversal(
    decoder: &LayeredNetwork,
    h: &[f64],
    relevance: &[f64],
    latents: usize,
    steps: usize,
    ranges: &[(f64, f64)],
) -> Result<Vec<(usize, Vec<Vec<f64>>)>> {
    if relevance.len() != h.len() || ranges.len() != h.len() {
        return Err(Error::dims("latent relevance", h.len(), relevance.len()));
    }
    if steps == 0 {
        return Err(Error::InvalidInput("traversal needs at least one step".into()));
    }
    let magnitude: Vec<f64> = relevance.iter().map(|v| v.abs()).collect();
    descending_order(&magnitude)
        .into_iter()
        .take(latents)
        .map(|i| {
            let (lo, hi) = ranges[i];
            let row = (0..steps)
                .map(|s| {
                    let mut code = h.to_vec();
                    if steps > 1 {
                        code[i] = lo + (hi - lo) * s as f64 / (steps - 1) as f64;
                    }
                    decoder.logits(&code)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((i, row))
        })
        .collect()
}

/// Tiles equally sized images into rows with `pad` pixels of white between them.
pub fn grid(rows: &[Vec<RgbImage>], pad: usize) -> Result<RgbImage> {
    let first = rows
        .iter()
        .flatten()
        .next()
        .ok_or_else(|| Error::InvalidInput("nothing to tile".into()))?;
    let (cw, ch) = (first.width, first.height);
    if rows.iter().flatten().any(|im| im.width != cw || im.height != ch) {
        return Err(Error::InvalidInput("grid cells differ in size".into()));
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width = cols * cw + (cols + 1) * pad;
    let height = rows.len() * ch + (rows.len() + 1) * pad;
    let mut out = RgbImage::filled(width, height, [255, 255, 255]);
    for (r, row) in rows.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let (ox, oy) = (pad + c * (cw + pad), pad + r * (ch + pad));
            for y in 0..ch {
                for x in 0..cw {
                    out.pixels[(oy + y) * width + ox + x] = cell.get(x, y);
                }
            }
        }
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line plot of one or more series against the step index.
pub fn line_plot_svg(title: &str, y_label: &str, series: &[(String, Vec<f64>)]) -> String {
    let (w, h, margin) = (640.0, 400.0, 60.0);
    let longest = series.iter().map(|(_, s)| s.len()).max().unwrap_or(1).max(2);
    let values = series.iter().flat_map(|(_, s)| s.iter().copied());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let px = |i: usize| margin + (w - 2.0 * margin) * i as f64 / (longest - 1) as f64;
    let py = |v: f64| h - margin - (h - 2.0 * margin) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{margin}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{margin}" y1="{margin}" x2="{margin}" y2="{b}" stroke="black"/>"#,
        b = h - margin,
        r = w - margin
    );
    for (v, y) in [(lo, py(lo)), (hi, py(hi))] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            margin - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#,
        w / 2.0,
        h - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (k, (name, s)) in series.iter().enumerate() {
        let [r, g, b] = rank_color(k);
        let points: Vec<String> = s
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", px(i), py(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="rgb({r},{g},{b})" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = margin + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="rgb({r},{g},{b})"/><text x="{}" y="{}">{}</text>"#,
            w - margin - 140.0,
            ly - 10.0,
            w - margin - 122.0,
            ly,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// The overlay as pixel rectangles plus a legend of segment relevances.
pub fn overlay_svg(overlay: &Overlay, cell: usize) -> String {
    let img = &overlay.image;
    let cell = cell.max(1);
    let (w, h) = (img.width * cell, img.height * cell);
    let total_w = w + 180;
    let total_h = h.max(20 + 18 * overlay.legend.len());
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" font-family="sans-serif" font-size="12" shape-rendering="crispEdges">"#
    );
    let _ = writeln!(svg, r#"<rect width="{total_w}" height="{total_h}" fill="white"/>"#);
    for y in 0..img.height {
        for x in 0..img.width {
            let [r, g, b] = img.get(x, y);
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="rgb({r},{g},{b})"/>"#,
                x * cell,
                y * cell
            );
        }
    }
    for (i, e) in overlay.legend.iter().enumerate() {
        let [r, g, b] = e.color;
        let y = 8 + 18 * i;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{y}" width="12" height="12" fill="rgb({r},{g},{b})"/><text x="{}" y="{}">segment {}: {:.4}</text>"#,
            w + 10,
            w + 28,
            y + 10,
            e.segment,
            e.relevance
        );
    }
    svg.push_str("</svg>\n");
    svg
}
