//! Category embeddings and the graph convolutional branch.
//!
//! Node `i` starts from `relu(e_i·W_word) ⊕ relu(s_i·w_score)`, where `e_i`
//! is its category embedding and `s_i` its current visibility score. Three
//! layers follow: `H¹ = relu(Â X W⁰)`, `H² = relu(Â H¹ W¹)`, `z = Â H² W²`.
//! All functions taking a [`Tape`] work on a batch of `T` observations at
//! once: inputs are stacked in `|V|`-row blocks, one block per observation.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::graph::Vocabulary;
use crate::rng::{self, Rng};
use crate::tensor::{Axis, Matrix, Tape, Var};

/// Fixed `|V|×d_w` word vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryEmbeddings {
    matrix: Arc<Matrix>,
}

/// Spread of a category around its group centroid, relative to the
/// centroid's unit norm.
pub const EMBEDDING_OFFSET: f64 = 0.3;

impl CategoryEmbeddings {
    /// Group centroid (unit norm) plus a small Gaussian offset per
    /// category. Vectors depend only on `seed`, the group name and the
    /// category name, so extending the vocabulary leaves old rows intact.
    pub fn generate(vocab: &Vocabulary, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Contract("embedding dimension must be positive".into()));
        }
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let offset_std = EMBEDDING_OFFSET / (dim as f64).sqrt();
        let mut m = Matrix::zeros(vocab.len(), dim);
        for (i, cat) in vocab.categories().iter().enumerate() {
            let mut g = rng::rng_from(seed, &[rng::name_tag("group"), rng::name_tag(&cat.group)]);
            let centroid: Vec<f64> = (0..dim).map(|_| normal.sample(&mut g)).collect();
            let norm = centroid.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut c = rng::rng_from(seed, &[rng::name_tag("word"), rng::name_tag(&cat.name)]);
            let row = m.row_mut(i);
            for (r, cv) in row.iter_mut().zip(&centroid) {
                *r = cv / norm + offset_std * normal.sample(&mut c);
            }
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let k = n.clamp(0.5, 2.0) / n;
            row.iter_mut().for_each(|v| *v *= k);
        }
        Ok(Self { matrix: Arc::new(m) })
    }

    pub fn from_matrix(matrix: Matrix) -> Self {
        Self {
            matrix: Arc::new(matrix),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn shared(&self) -> Arc<Matrix> {
        Arc::clone(&self.matrix)
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row(i), self.row(j));
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GcnDims {
    pub word_dim: usize,
    /// Width `h` of each half of a node's input feature.
    pub hidden: usize,
    /// Width `h₁` of the first two layers.
    pub layer_width: usize,
}

/// Weights of the graph branch.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnParameters {
    pub w_word: Matrix,
    pub w_score: Matrix,
    pub w0: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
}

impl GcnParameters {
    pub const NAMES: [&'static str; 5] = ["w_word", "w_score", "w0", "w1", "w2"];

    pub fn zeros(d: GcnDims) -> Self {
        Self {
            w_word: Matrix::zeros(d.word_dim, d.hidden),
            w_score: Matrix::zeros(1, d.hidden),
            w0: Matrix::zeros(2 * d.hidden, d.layer_width),
            w1: Matrix::zeros(d.layer_width, d.layer_width),
            w2: Matrix::zeros(d.layer_width, 1),
        }
    }

    /// He-uniform for the ReLU layers, variance `1/fan_in` for the
    /// linear output layer.
    pub fn init(d: GcnDims, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(d);
        let [w_word, w_score, w0, w1, w2] = p.matrices_mut();
        for m in [w_word, w_score, w0, w1] {
            fill_uniform(m, RELU_GAIN, rng);
        }
        fill_uniform(w2, 1.0, rng);
        p
    }

    pub fn matrices(&self) -> [&Matrix; 5] {
        [&self.w_word, &self.w_score, &self.w0, &self.w1, &self.w2]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix; 5] {
        [
            &mut self.w_word,
            &mut self.w_score,
            &mut self.w0,
            &mut self.w1,
            &mut self.w2,
        ]
    }

    pub fn dims(&self) -> GcnDims {
        GcnDims {
            word_dim: self.w_word.rows(),
            hidden: self.w_word.cols(),
            layer_width: self.w0.cols(),
        }
    }

    pub fn check(&self) -> Result<()> {
        let d = self.dims();
        let expected = Self::zeros(d);
        for ((name, m), e) in Self::NAMES.iter().zip(self.matrices()).zip(expected.matrices()) {
            if m.shape() != e.shape() {
                return Err(Error::shape(
                    "gcn parameters",
                    format!("{name} is {:?}, expected {:?}", m.shape(), e.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// Gain for weights feeding a ReLU.
pub(crate) const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

/// Uniform with variance `gain²/fan_in`, where fan_in is the row count.
pub(crate) fn fill_uniform(m: &mut Matrix, gain: f64, rng: &mut Rng) {
    let bound = gain * (3.0 / m.rows().max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    m.data_mut().iter_mut().for_each(|v| *v = dist.sample(rng));
}

/// Graph weights bound to tape leaves.
#[derive(Clone, Copy, Debug)]
pub struct GcnVars {
    pub w_word: Var,
    pub w_score: Var,
    pub w0: Var,
    pub w1: Var,
    pub w2: Var,
}

impl GcnVars {
    pub fn bind(tape: &mut Tape, p: &GcnParameters) -> Self {
        Self {
            w_word: tape.leaf(p.w_word.clone()),
            w_score: tape.leaf(p.w_score.clone()),
            w0: tape.leaf(p.w0.clone()),
            w1: tape.leaf(p.w1.clone()),
            w2: tape.leaf(p.w2.clone()),
        }
    }

    pub fn vars(&self) -> [Var; 5] {
        [self.w_word, self.w_score, self.w0, self.w1, self.w2]
    }
}

/// Node features for a batch: `scores` is a `(T·|V|)×1` column holding
/// each observation's score vector in turn; `embeddings` is `|V|×d_w`.
/// Returns the `(T·|V|)×2h` matrix `X`.
pub fn node_inputs_batch(tape: &mut Tape, scores: Var, embeddings: Var, p: &GcnVars) -> Result<Var> {
    let (n, _) = tape.value(embeddings).shape();
    let (sr, sc) = tape.value(scores).shape();
    if sc != 1 || n == 0 || sr % n != 0 {
        return Err(Error::shape(
            "node_inputs",
            format!("scores [{sr}x{sc}] for {n} nodes"),
        ));
    }
    let word = tape.matmul(embeddings, p.w_word)?;
    let word = tape.relu(word);
    let word = if sr == n {
        word
    } else {
        tape.concat(&vec![word; sr / n], Axis::Rows)?
    };
    let score = tape.matmul(scores, p.w_score)?;
    let score = tape.relu(score);
    tape.concat(&[word, score], Axis::Cols)
}

/// Three graph convolutions over `adjacency` (`|V|×|V|`) applied to each
/// block of `x`. Returns `T×|V|`, one row of node outputs per observation.
pub fn gcn_forward_batch(tape: &mut Tape, x: Var, adjacency: Var, p: &GcnVars) -> Result<Var> {
    let n = tape.value(adjacency).rows();
    let h0 = tape.matmul(x, p.w0)?;
    let h0 = tape.block_matmul(adjacency, h0)?;
    let h1 = tape.relu(h0);
    let h1 = tape.matmul(h1, p.w1)?;
    let h1 = tape.block_matmul(adjacency, h1)?;
    let h2 = tape.relu(h1);
    let z = tape.matmul(h2, p.w2)?;
    let z = tape.block_matmul(adjacency, z)?;
    let rows = tape.value(z).rows();
    tape.reshape(z, rows / n, n)
}

/// Node features for a single observation; `|V|×2h`.
pub fn node_inputs(scores: &[f64], embeddings: &CategoryEmbeddings, params: &GcnParameters) -> Result<Matrix> {
    if scores.len() != embeddings.len() {
        return Err(Error::shape(
            "node_inputs",
            format!("{} scores for {} nodes", scores.len(), embeddings.len()),
        ));
    }
    params.check()?;
    let mut tape = Tape::new();
    let vars = GcnVars::bind(&mut tape, params);
    let s = tape.constant(Matrix::column_vector(scores.to_vec()));
    let e = tape.constant_shared(embeddings.shared());
    let x = node_inputs_batch(&mut tape, s, e, &vars)?;
    Ok(tape.value(x).clone())
}

/// Graph output `z` (length `|V|`) for a single observation's features.
pub fn gcn_forward(x: &Matrix, adjacency: &Matrix, params: &GcnParameters) -> Result<Vec<f64>> {
    let n = adjacency.rows();
    if adjacency.cols() != n || x.rows() != n || x.cols() != params.w0.rows() {
        return Err(Error::shape(
            "gcn_forward",
            format!(
                "X [{}x{}], adjacency [{}x{}], W0 [{}x{}]",
                x.rows(),
                x.cols(),
                n,
                adjacency.cols(),
                params.w0.rows(),
                params.w0.cols()
            ),
        ));
    }
    params.check()?;
    let mut tape = Tape::new();
    let vars = GcnVars::bind(&mut tape, params);
    let xv = tape.constant(x.clone());
    let a = tape.constant(adjacency.clone());
    let z = gcn_forward_batch(&mut tape, xv, a, &vars)?;
    Ok(tape.value(z).data().to_vec())
}

/// Random `n×d` matrix with entries in `[-1, 1]`, for probes.
pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("consistent shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_adjacency, KnowledgeGraph};
    use nalgebra::DMatrix;

    const DIMS: GcnDims = GcnDims {
        word_dim: 5,
        hidden: 4,
        layer_width: 6,
    };

    fn dm(m: &Matrix) -> DMatrix<f64> {
        DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
    }

    fn oracle(scores: &[f64], e: &Matrix, a: &Matrix, p: &GcnParameters) -> Vec<f64> {
        let relu = |m: DMatrix<f64>| m.map(|v| v.max(0.0));
        let word = relu(dm(e) * dm(&p.w_word));
        let s = DMatrix::from_column_slice(scores.len(), 1, scores);
        let score = relu(s * dm(&p.w_score));
        let mut x = DMatrix::zeros(scores.len(), 2 * DIMS.hidden);
        x.columns_mut(0, DIMS.hidden).copy_from(&word);
        x.columns_mut(DIMS.hidden, DIMS.hidden).copy_from(&score);
        let a = dm(a);
        let h1 = relu(&a * x * dm(&p.w0));
        let h2 = relu(&a * h1 * dm(&p.w1));
        (&a * h2 * dm(&p.w2)).iter().copied().collect()
    }

    fn random_adjacency(n: usize, rng: &mut Rng) -> Matrix {
        let mut adj = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.4) {
                    adj.set(i, j, 1.0);
                    adj.set(j, i, 1.0);
                }
            }
        }
        normalize_adjacency(&adj)
    }

    #[test]
    fn desk_embeddings_cluster_by_group() {
        let vocab = Vocabulary::desk();
        let e = CategoryEmbeddings::generate(&vocab, 16, 7).unwrap();
        let (mut within, mut across) = (Vec::new(), Vec::new());
        for i in 0..vocab.len() {
            let n = e.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((0.5..=2.0).contains(&n));
            for j in i + 1..vocab.len() {
                let c = e.cosine(i, j);
                if vocab.category(i).group == vocab.category(j).group {
                    within.push(c);
                } else {
                    across.push(c);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&within) > mean(&across) + 0.3);
    }

    #[test]
    fn zero_inputs_give_zero_features() {
        let mut rng = rng::rng_from(1, &[]);
        let p = GcnParameters::init(DIMS, &mut rng);
        let e = CategoryEmbeddings::from_matrix(Matrix::zeros(3, DIMS.word_dim));
        let x = node_inputs(&[0.0; 3], &e, &p).unwrap();
        assert_eq!(x.shape(), (3, 2 * DIMS.hidden));
        assert_eq!(x.sum(), 0.0);
        assert!(node_inputs(&[0.0; 2], &e, &p).is_err());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let p = GcnParameters::zeros(DIMS);
        let x = Matrix::filled(4, 2 * DIMS.hidden, 1.0);
        let z = gcn_forward(&x, &Matrix::identity(4), &p).unwrap();
        assert_eq!(z, vec![0.0; 4]);
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = rng::rng_from(2, &[]);
        for n in 6..=9 {
            let p = GcnParameters::init(DIMS, &mut rng);
            let e = random_matrix(n, DIMS.word_dim, &mut rng);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let a = random_adjacency(n, &mut rng);
            let x = node_inputs(&scores, &CategoryEmbeddings::from_matrix(e.clone()), &p).unwrap();
            let z = gcn_forward(&x, &a, &p).unwrap();
            let want = oracle(&scores, &e, &a, &p);
            for (a, b) in z.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn edgeless_graph_is_local() {
        let mut rng = rng::rng_from(3, &[]);
        let p = GcnParameters::init(DIMS, &mut rng);
        let a = KnowledgeGraph::edgeless(&Vocabulary::desk()).normalized().clone();
        let mut x = random_matrix(12, 2 * DIMS.hidden, &mut rng);
        let before = gcn_forward(&x, &a, &p).unwrap();
        x.row_mut(5).iter_mut().for_each(|v| *v += 0.7);
        let after = gcn_forward(&x, &a, &p).unwrap();
        for i in 0..12 {
            if i != 5 {
                assert_eq!(before[i], after[i]);
            }
        }
    }

    #[test]
    fn batch_equals_per_observation() {
        let mut rng = rng::rng_from(4, &[]);
        let p = GcnParameters::init(DIMS, &mut rng);
        let n = 6;
        let e = random_matrix(n, DIMS.word_dim, &mut rng);
        let a = random_adjacency(n, &mut rng);
        let batch: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let mut tape = Tape::new();
        let vars = GcnVars::bind(&mut tape, &p);
        let s = tape.constant(Matrix::column_vector(batch.concat()));
        let ev = tape.constant(e.clone());
        let av = tape.constant(a.clone());
        let x = node_inputs_batch(&mut tape, s, ev, &vars).unwrap();
        let z = gcn_forward_batch(&mut tape, x, av, &vars).unwrap();
        assert_eq!(tape.value(z).shape(), (3, n));
        for (t, scores) in batch.iter().enumerate() {
            let want = oracle(scores, &e, &a, &p);
            for (i, w) in want.iter().enumerate() {
                assert!((tape.value(z).get(t, i) - w).abs() < 1e-12);
            }
        }
    }
}
