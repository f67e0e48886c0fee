use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng as _;

use super::corpus::RelationCounts;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;

/// Default edge threshold: a relation must occur more than this many times.
pub const DEFAULT_THRESHOLD: u64 = 3;

/// Category graph with binary symmetric adjacency and its normalized form
/// `D̃^(-1/2)(A+I)D̃^(-1/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeGraph {
    vocab: Vocabulary,
    adjacency: Matrix,
    normalized: Arc<Matrix>,
}

/// Structural stand-ins used by the graph ablations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VariantKind {
    FullyConnected,
    Random { edge_probability: f64 },
}

/// Symmetric normalization with self-loops.
pub fn normalize_adjacency(adjacency: &Matrix) -> Matrix {
    let n = adjacency.rows();
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| 1.0 / (adjacency.row(i).iter().sum::<f64>() + 1.0).sqrt())
        .collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a = adjacency.get(i, j) + if i == j { 1.0 } else { 0.0 };
            if a != 0.0 {
                out.set(i, j, a * inv_sqrt_deg[i] * inv_sqrt_deg[j]);
            }
        }
    }
    out
}

fn floor_count(fraction: f64, total: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Value(format!("fraction {fraction} outside [0,1]")));
    }
    Ok((fraction * total as f64 + 1e-9).floor() as usize)
}

impl KnowledgeGraph {
    /// Validates a binary symmetric zero-diagonal adjacency and normalizes it.
    pub fn from_adjacency(vocab: Vocabulary, adjacency: Matrix) -> Result<Self> {
        let n = vocab.len();
        if adjacency.shape() != (n, n) {
            return Err(Error::shape(
                "knowledge_graph",
                format!("adjacency {:?} for {} categories", adjacency.shape(), n),
            ));
        }
        for i in 0..n {
            if adjacency.get(i, i) != 0.0 {
                return Err(Error::Contract(format!("self-loop on node {i}")));
            }
            for j in 0..n {
                let a = adjacency.get(i, j);
                if (a != 0.0 && a != 1.0) || a != adjacency.get(j, i) {
                    return Err(Error::Contract(format!(
                        "adjacency must be binary and symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let normalized = Arc::new(normalize_adjacency(&adjacency));
        Ok(Self {
            vocab,
            adjacency,
            normalized,
        })
    }

    /// Connects `i ≠ j` iff some single relation label between them, in
    /// either direction, has a count strictly above `threshold`.
    pub fn build(counts: &RelationCounts, vocab: &Vocabulary, threshold: u64) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::Contract("empty vocabulary".into()));
        }
        let n = vocab.len();
        let mut adjacency = Matrix::zeros(n, n);
        for (s, _, o, c) in counts.iter() {
            if s >= n || o >= n {
                return Err(Error::Contract(format!("relation references category {}", s.max(o))));
            }
            if s != o && c > threshold {
                adjacency.set(s, o, 1.0);
                adjacency.set(o, s, 1.0);
            }
        }
        Self::from_adjacency(vocab.clone(), adjacency)
    }

    pub fn edgeless(vocab: &Vocabulary) -> Self {
        let n = vocab.len();
        Self::from_adjacency(vocab.clone(), Matrix::zeros(n, n)).expect("edgeless graph is valid")
    }

    pub fn fully_connected(vocab: &Vocabulary) -> Self {
        let n = vocab.len();
        let mut a = Matrix::filled(n, n, 1.0);
        for i in 0..n {
            a.set(i, i, 0.0);
        }
        Self::from_adjacency(vocab.clone(), a).expect("complete graph is valid")
    }

    /// Erdős–Rényi graph: each unordered pair independently with `p`.
    pub fn random(vocab: &Vocabulary, edge_probability: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&edge_probability) {
            return Err(Error::Value(format!(
                "edge probability {edge_probability} outside [0,1]"
            )));
        }
        let n = vocab.len();
        let mut rng = rng::rng_from(seed, &[rng::name_tag("random-graph")]);
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(edge_probability) {
                    a.set(i, j, 1.0);
                    a.set(j, i, 1.0);
                }
            }
        }
        Self::from_adjacency(vocab.clone(), a)
    }

    pub fn variant(kind: VariantKind, vocab: &Vocabulary, seed: u64) -> Result<Self> {
        match kind {
            VariantKind::FullyConnected => Ok(Self::fully_connected(vocab)),
            VariantKind::Random { edge_probability } => Self::random(vocab, edge_probability, seed),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn normalized(&self) -> &Matrix {
        &self.normalized
    }

    pub fn normalized_shared(&self) -> Arc<Matrix> {
        Arc::clone(&self.normalized)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency.get(i, j) != 0.0
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency.row(i).iter().filter(|&&a| a != 0.0).count()
    }

    /// Edges as `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.edges().len()
    }

    /// Fraction of unordered pairs that are connected.
    pub fn density(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        self.num_edges() as f64 / (n * (n - 1) / 2) as f64
    }

    /// Isolates `⌊fraction·|V|⌋` nodes sampled uniformly from those not in
    /// `protected`. Isolated nodes stay in the vocabulary. If fewer
    /// unprotected nodes exist, all of them are isolated. Returns the new
    /// graph and the isolated node indices.
    pub fn drop_nodes(
        &self,
        fraction: f64,
        seed: u64,
        protected: &[usize],
    ) -> Result<(Self, Vec<usize>)> {
        let n = self.len();
        let wanted = floor_count(fraction, n)?;
        let candidates: Vec<usize> = (0..n).filter(|i| !protected.contains(i)).collect();
        let k = wanted.min(candidates.len());
        let mut rng = rng::rng_from(seed, &[rng::name_tag("drop-nodes")]);
        let mut dropped: Vec<usize> = sample(&mut rng, candidates.len(), k)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        dropped.sort_unstable();
        let mut a = self.adjacency.clone();
        for &d in &dropped {
            for j in 0..n {
                a.set(d, j, 0.0);
                a.set(j, d, 0.0);
            }
        }
        Ok((Self::from_adjacency(self.vocab.clone(), a)?, dropped))
    }

    /// Deletes `⌊fraction·|E|⌋` undirected edges sampled uniformly.
    pub fn drop_edges(&self, fraction: f64, seed: u64) -> Result<Self> {
        let edges = self.edges();
        let k = floor_count(fraction, edges.len())?;
        let mut rng = rng::rng_from(seed, &[rng::name_tag("drop-edges")]);
        let mut a = self.adjacency.clone();
        for idx in sample(&mut rng, edges.len(), k) {
            let (i, j) = edges[idx];
            a.set(i, j, 0.0);
            a.set(j, i, 0.0);
        }
        Self::from_adjacency(self.vocab.clone(), a)
    }

    /// Human-readable dump: vocabulary with degrees, then the edge list.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# vocabulary ({} nodes)", self.len()).unwrap();
        for (i, c) in self.vocab.categories().iter().enumerate() {
            writeln!(
                out,
                "{i}\t{}\t{}\t{}\tdegree={}",
                c.name,
                c.group,
                c.split.as_str(),
                self.degree(i)
            )
            .unwrap();
        }
        writeln!(out, "# edges ({})", self.num_edges()).unwrap();
        for (i, j) in self.edges() {
            writeln!(out, "{}\t{}", self.vocab.name(i), self.vocab.name(j)).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::vocab::{Category, ObjectSplit};

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::new(
            (0..n)
                .map(|i| Category::new(&format!("c{i}"), "g", ObjectSplit::Known))
                .collect(),
        )
        .unwrap()
    }

    fn named() -> Vocabulary {
        Vocabulary::new(
            ["mug", "table", "apple"]
                .iter()
                .map(|n| Category::new(n, "g", ObjectSplit::Known))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn threshold_is_strict() {
        let v = named();
        let mut c = RelationCounts::new();
        c.add(0, "on", 1, 4);
        assert!(KnowledgeGraph::build(&c, &v, 3).unwrap().has_edge(0, 1));
        let mut c = RelationCounts::new();
        c.add(0, "on", 1, 3);
        assert!(!KnowledgeGraph::build(&c, &v, 3).unwrap().has_edge(0, 1));
    }

    #[test]
    fn labels_are_not_summed() {
        let v = named();
        let mut c = RelationCounts::new();
        c.add(0, "on", 1, 2);
        c.add(1, "next to", 0, 2);
        let g = KnowledgeGraph::build(&c, &v, 3).unwrap();
        // brute-force re-scan: no single label exceeds the threshold
        let any_label = c.iter().any(|(_, _, _, n)| n > 3);
        assert_eq!(g.has_edge(0, 1), any_label);
        assert!(!g.has_edge(0, 1));
    }

    #[test]
    fn reverse_direction_counts_and_symmetrizes() {
        let v = named();
        let mut c = RelationCounts::new();
        c.add(2, "in", 0, 9);
        let g = KnowledgeGraph::build(&c, &v, 3).unwrap();
        assert!(g.has_edge(0, 2) && g.has_edge(2, 0));
    }

    #[test]
    fn normalization_cases() {
        assert_eq!(normalize_adjacency(&Matrix::zeros(1, 1)).data(), &[1.0]);
        let tri = KnowledgeGraph::fully_connected(&vocab(3));
        for &v in tri.normalized().data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let path = normalize_adjacency(&Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]));
        for &v in path.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_invalid_adjacency() {
        let v = vocab(2);
        assert!(KnowledgeGraph::from_adjacency(v.clone(), Matrix::identity(2)).is_err());
        let asym = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        assert!(KnowledgeGraph::from_adjacency(v, asym).is_err());
    }

    #[test]
    fn node_drop_counts_and_determinism() {
        let g = KnowledgeGraph::fully_connected(&vocab(10));
        let (same, none) = g.drop_nodes(0.0, 1, &[]).unwrap();
        assert_eq!(same, g);
        assert!(none.is_empty());
        let (d, dropped) = g.drop_nodes(0.8, 1, &[]).unwrap();
        assert_eq!(dropped.len(), 8);
        let isolated = (0..10).filter(|&i| d.degree(i) == 0).count();
        assert_eq!(isolated, 8);
        assert_eq!(d.len(), 10);
        assert_eq!(g.drop_nodes(0.8, 1, &[]).unwrap().0, d);
        let (_, kept_targets) = g.drop_nodes(0.8, 2, &[0, 1, 2]).unwrap();
        assert!(kept_targets.iter().all(|i| *i > 2));
        assert_eq!(kept_targets.len(), 7);
        assert!(matches!(g.drop_nodes(1.5, 1, &[]), Err(Error::Value(_))));
    }

    #[test]
    fn edge_drop_counts() {
        let v = vocab(5);
        let mut a = Matrix::zeros(5, 5);
        for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 4)] {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        let g = KnowledgeGraph::from_adjacency(v, a).unwrap();
        assert_eq!(g.drop_edges(0.5, 3).unwrap().num_edges(), 2);
        let empty = g.drop_edges(1.0, 3).unwrap();
        assert_eq!(empty.num_edges(), 0);
        assert_eq!(*empty.normalized(), Matrix::identity(5));
        assert_eq!(g.drop_edges(0.5, 3).unwrap(), g.drop_edges(0.5, 3).unwrap());
        assert!(g.drop_edges(-0.1, 3).is_err());
    }

    #[test]
    fn variants() {
        let v = vocab(3);
        let dense = KnowledgeGraph::variant(VariantKind::FullyConnected, &v, 0).unwrap();
        assert_eq!(dense.num_edges(), 3);
        let none = KnowledgeGraph::random(&v, 0.0, 4).unwrap();
        assert_eq!(none.num_edges(), 0);
        assert_eq!(KnowledgeGraph::random(&v, 1.0, 4).unwrap(), dense);
        assert!(KnowledgeGraph::random(&v, 1.5, 4).is_err());
    }
}
