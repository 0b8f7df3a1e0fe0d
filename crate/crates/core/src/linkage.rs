//! Consignee deduplication over character trigrams.
//!
//! Names are compared only within blocks sharing a normalized first character;
//! pairs at or above the threshold become graph edges and connected components
//! become resolved entities.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

pub const DEFAULT_THRESHOLD: f64 = 0.8;

const START: char = '\u{2}';
const END: char = '\u{3}';

/// Uppercase, trim, collapse whitespace runs to one space.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_uppercase()
}

fn pack(a: char, b: char, c: char) -> u64 {
    ((a as u64) << 42) | ((b as u64) << 21) | c as u64
}

fn unpack(t: u64) -> String {
    let ch = |v: u64| char::from_u32((v & 0x1F_FFFF) as u32).unwrap_or('?');
    [ch(t >> 42), ch(t >> 21), ch(t)].iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrigramProfile {
    pub source_text: String,
    /// Packed trigrams, sorted and deduplicated.
    trigrams: Vec<u64>,
}

impl TrigramProfile {
    pub fn new(source_text: &str) -> Self {
        let norm = normalize(source_text);
        let mut trigrams = Vec::new();
        if !norm.is_empty() {
            let chars: Vec<char> = [START, START]
                .into_iter()
                .chain(norm.chars())
                .chain([END, END])
                .collect();
            trigrams = chars.windows(3).map(|w| pack(w[0], w[1], w[2])).collect();
            trigrams.sort_unstable();
            trigrams.dedup();
        }
        Self {
            source_text: source_text.to_string(),
            trigrams,
        }
    }

    pub fn len(&self) -> usize {
        self.trigrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trigrams.is_empty()
    }

    /// Trigrams as strings; sentinels appear as U+0002 (start) and U+0003 (end).
    pub fn trigram_strings(&self) -> Vec<String> {
        self.trigrams.iter().map(|&t| unpack(t)).collect()
    }
}

fn jaccard(a: &[u64], b: &[u64]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn profile_similarity(a: &TrigramProfile, b: &TrigramProfile) -> f64 {
    if a.is_empty() && b.is_empty() {
        return if a.source_text == b.source_text { 1.0 } else { 0.0 };
    }
    jaccard(&a.trigrams, &b.trigrams)
}

/// Jaccard coefficient of the padded trigram sets.
pub fn trigram_similarity(a: &str, b: &str) -> f64 {
    profile_similarity(&TrigramProfile::new(a), &TrigramProfile::new(b))
}

fn block_key(name: &str) -> Option<char> {
    normalize(name).chars().next()
}

fn blocks(names: &[String]) -> Vec<Vec<usize>> {
    let mut by_key: HashMap<char, Vec<usize>> = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        if let Some(k) = block_key(n) {
            by_key.entry(k).or_default().push(i);
        }
    }
    let mut out: Vec<(char, Vec<usize>)> = by_key.into_iter().collect();
    out.sort_by_key(|(k, _)| *k);
    out.into_iter().map(|(_, v)| v).collect()
}

/// All pairs `(i, j)`, `i < j`, whose normalized first characters match.
pub fn block_candidates(names: &[String]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for block in blocks(names) {
        for (x, &i) in block.iter().enumerate() {
            for &j in &block[x + 1..] {
                pairs.push((i.min(j), i.max(j)));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkageGraph {
    pub nodes: usize,
    /// `(i, j, score)` with `i < j` and `score >= threshold`.
    pub edges: Vec<(usize, usize, f64)>,
    pub threshold: f64,
}

/// Thresholded similarity graph over blocked pairs.
pub fn build_graph(names: &[String], threshold: f64) -> LinkageGraph {
    let profiles: Vec<TrigramProfile> = names.par_iter().map(|n| TrigramProfile::new(n)).collect();
    let edges_per_block: Vec<Vec<(usize, usize, f64)>> = blocks(names)
        .into_par_iter()
        .map(|mut block| {
            block.sort_by_key(|&i| (profiles[i].len(), i));
            let mut edges = Vec::new();
            for (x, &i) in block.iter().enumerate() {
                let li = profiles[i].len() as f64;
                for &j in &block[x + 1..] {
                    // Jaccard is bounded by the size ratio; the block is size-sorted.
                    if li < threshold * profiles[j].len() as f64 - 1e-9 {
                        break;
                    }
                    let s = profile_similarity(&profiles[i], &profiles[j]);
                    if s >= threshold {
                        edges.push((i.min(j), i.max(j), s));
                    }
                }
            }
            edges
        })
        .collect();
    let mut edges: Vec<_> = edges_per_block.into_iter().flatten().collect();
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    LinkageGraph {
        nodes: names.len(),
        edges,
        threshold,
    }
}

/// Connected components by iterative depth-first search; labels are
/// arbitrary but consistent within the call.
pub fn connected_components(graph: &LinkageGraph) -> Vec<usize> {
    let mut adj = vec![Vec::new(); graph.nodes];
    for &(i, j, _) in &graph.edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut label = vec![usize::MAX; graph.nodes];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..graph.nodes {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if label[w] == usize::MAX {
                    label[w] = next;
                    stack.push(w);
                }
            }
        }
        next += 1;
    }
    label
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedName {
    pub raw_name: String,
    pub component_id: u32,
    pub max_edge_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsigneeResolution {
    /// Distinct input names, sorted.
    pub names: Vec<ResolvedName>,
    /// Representative text per component id.
    pub canonical_names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ConsigneeResolution {
    pub fn component_of(&self, raw_name: &str) -> Option<u32> {
        self.index.get(raw_name).map(|&i| self.names[i].component_id)
    }

    pub fn component_count(&self) -> usize {
        self.canonical_names.len()
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["raw_name", "component_id", "canonical_name", "max_edge_score"])?;
        for n in &self.names {
            w.write_record([
                n.raw_name.as_str(),
                &n.component_id.to_string(),
                &self.canonical_names[n.component_id as usize],
                &format!("{:.6}", n.max_edge_score),
            ])?;
        }
        w.flush()
    }

    pub fn write_to<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["raw_name", "component_id", "canonical_name", "max_edge_score"])?;
        for n in &self.names {
            w.write_record([
                n.raw_name.as_str(),
                &n.component_id.to_string(),
                &self.canonical_names[n.component_id as usize],
                &format!("{:.6}", n.max_edge_score),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn longer_then_smaller(a: &str, b: &str) -> bool {
    let (la, lb) = (a.chars().count(), b.chars().count());
    la > lb || (la == lb && a < b)
}

/// Deduplicates `names` into entities. Output (membership, ids and order)
/// does not depend on input order.
pub fn resolve_consignees(names: &[String], threshold: f64) -> ConsigneeResolution {
    assert!(threshold > 0.0 && threshold <= 1.0, "threshold must lie in (0, 1]");
    let mut distinct: Vec<String> = names.to_vec();
    distinct.sort_unstable();
    distinct.dedup();

    let graph = build_graph(&distinct, threshold);
    let labels = connected_components(&graph);
    let mut max_edge = vec![0.0f64; distinct.len()];
    for &(i, j, s) in &graph.edges {
        max_edge[i] = max_edge[i].max(s);
        max_edge[j] = max_edge[j].max(s);
    }

    let n_comp = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rep: Vec<Option<usize>> = vec![None; n_comp];
    for (i, &l) in labels.iter().enumerate() {
        match rep[l] {
            Some(r) if !longer_then_smaller(&distinct[i], &distinct[r]) => {}
            _ => rep[l] = Some(i),
        }
    }
    let mut order: Vec<usize> = (0..n_comp).collect();
    order.sort_by(|&a, &b| distinct[rep[a].unwrap()].cmp(&distinct[rep[b].unwrap()]));
    let mut id_of = vec![0u32; n_comp];
    for (id, &l) in order.iter().enumerate() {
        id_of[l] = id as u32;
    }
    let canonical_names = order.iter().map(|&l| distinct[rep[l].unwrap()].clone()).collect();

    let index = distinct.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let names = distinct
        .into_iter()
        .enumerate()
        .map(|(i, raw_name)| ResolvedName {
            raw_name,
            component_id: id_of[labels[i]],
            max_edge_score: max_edge[i],
        })
        .collect();
    ConsigneeResolution {
        names,
        canonical_names,
        index,
    }
}
