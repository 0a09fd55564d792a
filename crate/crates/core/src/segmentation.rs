//! Flat and hierarchical image partitions from single-linkage thresholding.
//!
//! Pixels form a 4-neighborhood graph weighted by the Euclidean distance
//! between neighboring color vectors. Level `k` of a hierarchy is the set of
//! connected components over edges lighter than `λ_k`; with `λ_1 > … > λ_K`,
//! each level's components are unions of the next level's, so contours at a
//! coarse level persist at every finer one.
//!
//! Levels are built finest first on a single union-find, which only ever
//! merges. The optional small-region merge runs on the same structure at each
//! level, so it cannot break nesting either.

use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Undirected edge between pixel indices `a < b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

impl Edge {
    /// Total order on (weight, smaller endpoint, larger endpoint).
    fn order(&self, other: &Edge) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

#[derive(Clone, Debug)]
pub struct EdgeGraph {
    pub height: usize,
    pub width: usize,
    pub edges: Vec<Edge>,
}

impl EdgeGraph {
    pub fn node_count(&self) -> usize {
        self.height * self.width
    }

    fn sorted_edges(&self) -> Vec<Edge> {
        let mut edges = self.edges.clone();
        edges.sort_by(Edge::order);
        edges
    }

    /// Weights of a minimum spanning forest (Kruskal), ascending.
    pub fn mst_weights(&self) -> Vec<f64> {
        let mut uf = UnionFind::new(self.node_count());
        self.sorted_edges()
            .into_iter()
            .filter(|e| uf.union(e.a, e.b))
            .map(|e| e.weight)
            .collect()
    }
}

pub fn build_edge_graph(image: &Tensor) -> Result<EdgeGraph> {
    let (h, w, c) = image.image_dims()?;
    let data = image.data();
    let px = |p: usize| &data[p * c..(p + 1) * c];
    let dist = |p: usize, q: usize| {
        px(p)
            .iter()
            .zip(px(q))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut edges = Vec::with_capacity(2 * h * w);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                edges.push(Edge {
                    a: p,
                    b: p + 1,
                    weight: dist(p, p + 1),
                });
            }
            if y + 1 < h {
                edges.push(Edge {
                    a: p,
                    b: p + w,
                    weight: dist(p, p + w),
                });
            }
        }
    }
    Ok(EdgeGraph {
        height: h,
        width: w,
        edges,
    })
}

#[derive(Clone, Debug)]
struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] || (self.size[ra] == self.size[rb] && rb < ra) {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    /// Dense labels numbered in order of first appearance.
    fn labels(&mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut id_of_root = vec![usize::MAX; n];
        let mut next = 0;
        let labels = (0..n)
            .map(|p| {
                let r = self.find(p);
                if id_of_root[r] == usize::MAX {
                    id_of_root[r] = next;
                    next += 1;
                }
                id_of_root[r]
            })
            .collect();
        (labels, next)
    }
}

/// Pixel labelling with dense region ids `0..regions`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<usize>,
    pub regions: usize,
}

impl Partition {
    pub fn new(height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != height * width || labels.is_empty() {
            return Err(Error::dims("partition labels", height * width, labels.len()));
        }
        let regions = labels.iter().max().map_or(0, |&m| m + 1);
        let mut used = vec![false; regions];
        for &l in &labels {
            used[l] = true;
        }
        if let Some(missing) = used.iter().position(|u| !u) {
            return Err(Error::InvalidInput(format!(
                "region ids must be dense; id {missing} is unused"
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
            regions,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.labels.len()
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.regions];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Pixel indices of each region.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.regions];
        for (p, &l) in self.labels.iter().enumerate() {
            out[l].push(p);
        }
        out
    }

    pub fn mask(&self, region: usize) -> Vec<bool> {
        self.labels.iter().map(|&l| l == region).collect()
    }

    /// Every region forms one 4-connected component.
    pub fn is_four_connected(&self) -> bool {
        let (h, w) = (self.height, self.width);
        let mut seen = vec![false; self.labels.len()];
        let mut seen_region = vec![false; self.regions];
        for start in 0..self.labels.len() {
            if seen[start] {
                continue;
            }
            let region = self.labels[start];
            if seen_region[region] {
                return false;
            }
            seen_region[region] = true;
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(p) = queue.pop_front() {
                let (y, x) = (p / w, p % w);
                let mut visit = |q: usize| {
                    if !seen[q] && self.labels[q] == region {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                };
                if x > 0 {
                    visit(p - 1);
                }
                if x + 1 < w {
                    visit(p + 1);
                }
                if y > 0 {
                    visit(p - w);
                }
                if y + 1 < h {
                    visit(p + w);
                }
            }
        }
        true
    }
}

/// Nested partitions ordered coarse to fine. `parents[k][c]` is the region of
/// level `k` containing region `c` of level `k + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationHierarchy {
    pub levels: Vec<Partition>,
    pub parents: Vec<Vec<usize>>,
}

impl SegmentationHierarchy {
    /// Derives parent maps from the levels (each child's first pixel decides).
    pub fn from_levels(levels: Vec<Partition>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidInput("hierarchy needs at least one level".into()));
        }
        let parents = levels
            .windows(2)
            .map(|pair| {
                let (coarse, fine) = (&pair[0], &pair[1]);
                let mut parent = vec![usize::MAX; fine.regions];
                for (p, &c) in fine.labels.iter().enumerate() {
                    if parent[c] == usize::MAX {
                        parent[c] = coarse.labels[p];
                    }
                }
                parent
            })
            .collect();
        Self::from_parts(levels, parents)
    }

    /// Assembles a hierarchy without checking containment; see [`check_refinement`].
    pub fn from_parts(levels: Vec<Partition>, parents: Vec<Vec<usize>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidInput("hierarchy needs at least one level".into()));
        }
        let (h, w) = (levels[0].height, levels[0].width);
        if levels.iter().any(|l| l.height != h || l.width != w) {
            return Err(Error::InvalidInput("hierarchy levels differ in size".into()));
        }
        if parents.len() + 1 != levels.len() {
            return Err(Error::dims("parent maps", levels.len() - 1, parents.len()));
        }
        for (k, map) in parents.iter().enumerate() {
            if map.len() != levels[k + 1].regions {
                return Err(Error::dims("parent map", levels[k + 1].regions, map.len()));
            }
            if map.iter().any(|&p| p >= levels[k].regions) {
                return Err(Error::InvalidInput(format!("parent map {k} names a missing region")));
            }
        }
        Ok(Self { levels, parents })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn height(&self) -> usize {
        self.levels[0].height
    }

    pub fn width(&self) -> usize {
        self.levels[0].width
    }

    pub fn finest(&self) -> &Partition {
        self.levels.last().expect("nonempty")
    }

    pub fn region_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.regions).collect()
    }

    /// Children (at level `k + 1`) of `region` at level `k`, ascending ids.
    pub fn children(&self, level: usize, region: usize) -> Vec<usize> {
        self.parents
            .get(level)
            .map(|map| {
                map.iter()
                    .enumerate()
                    .filter(|(_, &p)| p == region)
                    .map(|(c, _)| c)
                    .collect()
            })
            .unwrap_or_default()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentOptions {
    /// Regions smaller than this many pixels are merged into a neighbor
    /// across their cheapest edge. 0 or 1 disables merging.
    pub min_region: usize,
}

impl SegmentOptions {
    pub const DEFAULT_MIN_REGION: usize = 16;

    pub fn with_min_region(min_region: usize) -> Self {
        Self { min_region }
    }
}

pub const DEFAULT_QUANTILES: [f64; 3] = [0.9, 0.6, 0.3];

/// Edge-weight quantiles for `levels` thresholds, evenly spaced from 0.9
/// down to 0.3; three levels give [`DEFAULT_QUANTILES`].
pub fn level_quantiles(levels: usize) -> Vec<f64> {
    match levels {
        0 => vec![],
        1 => vec![0.3],
        k => (0..k)
            .map(|i| (0.9 * (k - 1 - i) as f64 + 0.3 * i as f64) / (k - 1) as f64)
            .collect(),
    }
}

fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::InvalidInput("at least one threshold is required".into()));
    }
    if thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidInput("thresholds must be finite and nonnegative".into()));
    }
    if thresholds.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(format!(
            "thresholds must be strictly decreasing, got {thresholds:?}"
        )));
    }
    Ok(())
}

pub fn hierarchical_segment(
    image: &Tensor,
    thresholds: &[f64],
    opts: &SegmentOptions,
) -> Result<SegmentationHierarchy> {
    validate_thresholds(thresholds)?;
    segment_graph(&build_edge_graph(image)?, thresholds, opts)
}

fn segment_graph(
    graph: &EdgeGraph,
    thresholds: &[f64],
    opts: &SegmentOptions,
) -> Result<SegmentationHierarchy> {
    let edges = graph.sorted_edges();
    let mut uf = UnionFind::new(graph.node_count());
    let mut next = 0;
    let mut levels = Vec::with_capacity(thresholds.len());
    for &lambda in thresholds.iter().rev() {
        while next < edges.len() && edges[next].weight < lambda {
            uf.union(edges[next].a, edges[next].b);
            next += 1;
        }
        if opts.min_region > 1 {
            for e in &edges {
                let (ra, rb) = (uf.find(e.a), uf.find(e.b));
                if ra != rb && (uf.size[ra] < opts.min_region || uf.size[rb] < opts.min_region) {
                    uf.union(ra, rb);
                }
            }
        }
        let (labels, regions) = uf.labels();
        levels.push(Partition {
            height: graph.height,
            width: graph.width,
            labels,
            regions,
        });
    }
    levels.reverse();
    SegmentationHierarchy::from_levels(levels)
}

pub fn flat_segment(image: &Tensor, threshold: f64, opts: &SegmentOptions) -> Result<Partition> {
    let mut h = hierarchical_segment(image, &[threshold], opts)?;
    Ok(h.levels.swap_remove(0))
}

/// Thresholds at the given quantiles of the image's MST edge weights,
/// nudged where needed so the list is strictly decreasing and positive.
pub fn auto_thresholds(image: &Tensor, quantiles: &[f64]) -> Result<Vec<f64>> {
    if quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::InvalidInput("quantiles must lie in [0, 1]".into()));
    }
    let weights = build_edge_graph(image)?.mst_weights();
    let mut out: Vec<f64> = Vec::with_capacity(quantiles.len());
    for &q in quantiles {
        let mut t = quantile(&weights, q).max(f64::MIN_POSITIVE * 1e6);
        if let Some(&prev) = out.last() {
            if t >= prev {
                t = prev.next_down();
            }
        }
        out.push(t);
    }
    validate_thresholds(&out)?;
    Ok(out)
}

/// Linear-interpolation quantile of ascending `sorted`; 0 when empty.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementViolation {
    /// The finer level containing the offending region.
    pub level: usize,
    pub child: usize,
}

/// `Ok(())` when every child region lies wholly inside its recorded parent.
pub fn check_refinement(h: &SegmentationHierarchy) -> std::result::Result<(), RefinementViolation> {
    for (k, map) in h.parents.iter().enumerate() {
        let (coarse, fine) = (&h.levels[k], &h.levels[k + 1]);
        let mut violated: Option<usize> = None;
        for (p, &c) in fine.labels.iter().enumerate() {
            if coarse.labels[p] != map[c] {
                violated = Some(violated.map_or(c, |v| v.min(c)));
            }
        }
        if let Some(child) = violated {
            return Err(RefinementViolation { level: k + 1, child });
        }
    }
    Ok(())
}
