//! Histogram CART growth shared by the single tree, random forest and
//! extra-trees learners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, HyperParams};

/// Smallest impurity decrease that justifies a split.
const MIN_DECREASE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    /// Best threshold over histogram bins of every candidate feature.
    Exhaustive,
    /// One uniform random threshold per candidate feature.
    RandomThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// `None` marks a leaf.
    pub feature: Option<u32>,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Weighted positive fraction of training rows reaching the node.
    pub value: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TreeArrays", from = "TreeArrays")]
pub struct Tree {
    pub nodes: Vec<Node>,
}

/// Column layout used on disk; `feature = -1` marks a leaf.
#[derive(Serialize, Deserialize)]
struct TreeArrays {
    feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
    value: Vec<f64>,
    weight: Vec<f64>,
}

impl From<Tree> for TreeArrays {
    fn from(t: Tree) -> Self {
        let n = &t.nodes;
        Self {
            feature: n.iter().map(|x| x.feature.map_or(-1, i64::from)).collect(),
            threshold: n.iter().map(|x| x.threshold).collect(),
            left: n.iter().map(|x| x.left).collect(),
            right: n.iter().map(|x| x.right).collect(),
            value: n.iter().map(|x| x.value).collect(),
            weight: n.iter().map(|x| x.weight).collect(),
        }
    }
}

impl From<TreeArrays> for Tree {
    fn from(a: TreeArrays) -> Self {
        Tree {
            nodes: (0..a.feature.len())
                .map(|i| Node {
                    feature: u32::try_from(a.feature[i]).ok(),
                    threshold: a.threshold[i],
                    left: a.left[i],
                    right: a.right[i],
                    value: a.value[i],
                    weight: a.weight[i],
                })
                .collect(),
        }
    }
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            match n.feature {
                None => return n.value,
                Some(f) => {
                    i = if row[f as usize] <= n.threshold {
                        n.left as usize
                    } else {
                        n.right as usize
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            match n.feature {
                None => 0,
                Some(_) => 1 + walk(t, n.left as usize).max(walk(t, n.right as usize)),
            }
        }
        walk(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature.is_none()).count()
    }

    /// Root split as `(feature, threshold)`, if any.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        let r = &self.nodes[0];
        r.feature.map(|f| (f as usize, r.threshold))
    }
}

/// Gini impurity of a node with `pos` positive weight out of `total`.
pub fn gini(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Per-feature cut points; `bin(x)` counts the cuts strictly below `x`.
#[derive(Debug, Clone)]
pub struct Binner {
    pub cuts: Vec<Vec<f64>>,
}

impl Binner {
    /// With at most `max_bins` distinct values every gap between
    /// neighbouring values becomes a cut, so the search is exact.
    pub fn fit(cols: &[Vec<f64>], max_bins: usize) -> Self {
        let cuts = cols
            .iter()
            .map(|col| {
                let mut sorted = col.clone();
                sorted.sort_by(f64::total_cmp);
                let mut distinct = sorted.clone();
                distinct.dedup();
                if distinct.len() <= max_bins {
                    return distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
                }
                let n = sorted.len();
                let mut cuts: Vec<f64> = Vec::with_capacity(max_bins);
                for q in 1..max_bins {
                    let a = sorted[(q * n / max_bins).max(1) - 1];
                    let k = distinct.partition_point(|&v| v <= a);
                    if k < distinct.len() {
                        let c = midpoint(a, distinct[k]);
                        if cuts.last().is_none_or(|&l| l < c) {
                            cuts.push(c);
                        }
                    }
                }
                cuts
            })
            .collect();
        Self { cuts }
    }

    pub fn bin(&self, f: usize, x: f64) -> u16 {
        self.cuts[f].partition_point(|&c| c < x) as u16
    }

    pub fn n_bins(&self, f: usize) -> usize {
        self.cuts[f].len() + 1
    }
}

struct Ctx {
    n_rows: usize,
    n_cols: usize,
    /// Column-major raw values.
    cols: Vec<Vec<f64>>,
    y: Vec<bool>,
    /// Column-major bin codes (exhaustive mode only).
    codes: Vec<Vec<u16>>,
    binner: Option<Binner>,
}

impl Ctx {
    fn new(data: &Dataset, mode: Mode, max_bins: usize) -> Self {
        let (n_rows, n_cols) = (data.n_rows(), data.n_cols);
        let cols: Vec<Vec<f64>> = (0..n_cols)
            .map(|f| (0..n_rows).map(|i| data.x[i * n_cols + f]).collect())
            .collect();
        let (codes, binner) = match mode {
            Mode::Exhaustive => {
                let b = Binner::fit(&cols, max_bins);
                let codes = cols
                    .iter()
                    .enumerate()
                    .map(|(f, c)| c.iter().map(|&x| b.bin(f, x)).collect())
                    .collect();
                (codes, Some(b))
            }
            Mode::RandomThreshold => (Vec::new(), None),
        };
        Self {
            n_rows,
            n_cols,
            cols,
            y: data.y.clone(),
            codes,
            binner,
        }
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    decrease: f64,
    /// Bin boundary in exhaustive mode.
    bin: u16,
}

impl Split {
    fn better_than(&self, other: &Option<Split>) -> bool {
        match other {
            None => true,
            Some(o) => self.decrease > o.decrease || (self.decrease == o.decrease && self.feature < o.feature),
        }
    }
}

struct Grower<'a> {
    ctx: &'a Ctx,
    mode: Mode,
    max_depth: usize,
    min_samples_split: f64,
    max_features: usize,
    weights: Vec<f64>,
    rng: ChaCha8Rng,
    perm: Vec<usize>,
    hist_w: Vec<f64>,
    hist_p: Vec<f64>,
}

impl Grower<'_> {
    fn totals(&self, rows: &[u32]) -> (f64, f64) {
        let mut w = 0.0;
        let mut p = 0.0;
        for &r in rows {
            let wi = self.weights[r as usize];
            w += wi;
            if self.ctx.y[r as usize] {
                p += wi;
            }
        }
        (w, p)
    }

    /// Visits features in random order until `max_features` non-constant
    /// ones were evaluated; the full set is scanned in index order.
    fn candidate_order(&mut self) -> Vec<usize> {
        let n = self.ctx.n_cols;
        if self.max_features >= n {
            return (0..n).collect();
        }
        for i in 0..n {
            let j = self.rng.random_range(i..n);
            self.perm.swap(i, j);
        }
        self.perm.clone()
    }

    fn find_split(&mut self, rows: &[u32], total: f64, pos: f64) -> Option<Split> {
        let parent = gini(pos, total);
        let order = self.candidate_order();
        let mut best: Option<Split> = None;
        let mut evaluated = 0usize;
        for f in order {
            if evaluated >= self.max_features {
                break;
            }
            let cand = match self.mode {
                Mode::Exhaustive => self.best_bin_split(f, rows, total, pos, parent),
                Mode::RandomThreshold => self.random_split(f, rows, total, pos, parent),
            };
            let Some(cand) = cand else { continue };
            evaluated += 1;
            if cand.decrease > MIN_DECREASE && cand.better_than(&best) {
                best = Some(cand);
            }
        }
        let mut best = best?;
        if self.mode == Mode::Exhaustive {
            // Midpoint between the neighbouring values present in this node.
            let col = &self.ctx.cols[best.feature];
            let codes = &self.ctx.codes[best.feature];
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for &r in rows {
                let x = col[r as usize];
                if codes[r as usize] <= best.bin {
                    lo = lo.max(x);
                } else {
                    hi = hi.min(x);
                }
            }
            best.threshold = midpoint(lo, hi);
        }
        Some(best)
    }

    /// `None` when the feature is constant within the node.
    fn best_bin_split(&mut self, f: usize, rows: &[u32], total: f64, pos: f64, parent: f64) -> Option<Split> {
        let nb = self.ctx.binner.as_ref().expect("binned").n_bins(f);
        let codes = &self.ctx.codes[f];
        self.hist_w.clear();
        self.hist_w.resize(nb, 0.0);
        self.hist_p.clear();
        self.hist_p.resize(nb, 0.0);
        let (mut min_b, mut max_b) = (u16::MAX, 0u16);
        for &r in rows {
            let b = codes[r as usize];
            let w = self.weights[r as usize];
            self.hist_w[b as usize] += w;
            if self.ctx.y[r as usize] {
                self.hist_p[b as usize] += w;
            }
            min_b = min_b.min(b);
            max_b = max_b.max(b);
        }
        if min_b == max_b {
            return None;
        }
        let mut best: Option<(f64, u16)> = None;
        let (mut wl, mut pl) = (0.0, 0.0);
        for b in min_b..max_b {
            wl += self.hist_w[b as usize];
            pl += self.hist_p[b as usize];
            if self.hist_w[b as usize] == 0.0 {
                continue;
            }
            let dec = decrease(parent, total, pos, wl, pl);
            if best.is_none_or(|(d, _)| dec > d) {
                best = Some((dec, b));
            }
        }
        let (decrease, bin) = best?;
        Some(Split {
            feature: f,
            threshold: f64::NAN,
            decrease,
            bin,
        })
    }

    fn random_split(&mut self, f: usize, rows: &[u32], total: f64, pos: f64, parent: f64) -> Option<Split> {
        let col = &self.ctx.cols[f];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in rows {
            let x = col[r as usize];
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if lo >= hi {
            return None;
        }
        let thr = self.rng.random_range(lo..hi);
        let (mut wl, mut pl) = (0.0, 0.0);
        for &r in rows {
            if col[r as usize] <= thr {
                let w = self.weights[r as usize];
                wl += w;
                if self.ctx.y[r as usize] {
                    pl += w;
                }
            }
        }
        Some(Split {
            feature: f,
            threshold: thr,
            decrease: decrease(parent, total, pos, wl, pl),
            bin: 0,
        })
    }

    fn goes_left(&self, s: &Split, r: u32) -> bool {
        match self.mode {
            Mode::Exhaustive => self.ctx.codes[s.feature][r as usize] <= s.bin,
            Mode::RandomThreshold => self.ctx.cols[s.feature][r as usize] <= s.threshold,
        }
    }

    fn grow(mut self, mut rows: Vec<u32>) -> Tree {
        let mut nodes: Vec<Node> = Vec::new();
        let mut scratch: Vec<u32> = Vec::with_capacity(rows.len());
        // (node index, start, end, depth)
        let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
        nodes.push(leaf(0.0, 0.0));
        while let Some((id, start, end, depth)) = stack.pop() {
            let (total, pos) = self.totals(&rows[start..end]);
            nodes[id] = leaf(if total > 0.0 { pos / total } else { 0.0 }, total);
            if depth >= self.max_depth || total < self.min_samples_split || pos == 0.0 || pos == total {
                continue;
            }
            let Some(split) = self.find_split(&rows[start..end], total, pos) else {
                continue;
            };
            // Stable partition keeps row order, and with it memory locality.
            scratch.clear();
            let mut k = start;
            for i in start..end {
                let r = rows[i];
                if self.goes_left(&split, r) {
                    rows[k] = r;
                    k += 1;
                } else {
                    scratch.push(r);
                }
            }
            rows[k..end].copy_from_slice(&scratch);
            let left = nodes.len();
            nodes.push(leaf(0.0, 0.0));
            nodes.push(leaf(0.0, 0.0));
            let n = &mut nodes[id];
            n.feature = Some(split.feature as u32);
            n.threshold = split.threshold;
            n.left = left as u32;
            n.right = left as u32 + 1;
            stack.push((left + 1, k, end, depth + 1));
            stack.push((left, start, k, depth + 1));
        }
        Tree { nodes }
    }
}

fn leaf(value: f64, weight: f64) -> Node {
    Node {
        feature: None,
        threshold: 0.0,
        left: 0,
        right: 0,
        value,
        weight,
    }
}

fn decrease(parent: f64, total: f64, pos: f64, wl: f64, pl: f64) -> f64 {
    let wr = total - wl;
    let pr = pos - pl;
    parent - (wl / total) * gini(pl, wl) - (wr / total) * gini(pr, wr)
}

/// Grows `params.n_estimators` trees; tree `t` draws from stream `t` of the
/// seeded generator so results do not depend on thread scheduling.
pub(crate) fn grow_ensemble(data: &Dataset, params: &HyperParams, mode: Mode, bootstrap: bool) -> Vec<Tree> {
    let ctx = Ctx::new(data, mode, params.max_bins as usize);
    let max_features = params.max_features.resolve(ctx.n_cols);
    let max_depth = params.max_depth.map_or(usize::MAX, |d| d as usize);
    (0..params.n_estimators as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t);
            let n = ctx.n_rows;
            let mut weights = vec![0.0; n];
            if bootstrap {
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weights.iter_mut().for_each(|w| *w = 1.0);
            }
            let rows: Vec<u32> = (0..n as u32).filter(|&r| weights[r as usize] > 0.0).collect();
            let g = Grower {
                ctx: &ctx,
                mode,
                max_depth,
                min_samples_split: params.min_samples_split as f64,
                max_features,
                weights,
                rng,
                perm: (0..ctx.n_cols).collect(),
                hist_w: Vec::new(),
                hist_p: Vec::new(),
            };
            g.grow(rows)
        })
        .collect()
}
