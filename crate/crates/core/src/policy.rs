//! Actor-critic network: visual, semantic and graph branches fused into
//! policy logits and a state value.

use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;

use crate::env::{Action, Observation, FRAME_STACK};
use crate::error::{Error, Result};
use crate::gcn::{self, CategoryEmbeddings, GcnDims, GcnParameters, GcnVars};
use crate::graph::KnowledgeGraph;
use crate::rng::{self, Rng};
use crate::tensor::{self, Axis, Checkpoint, Matrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub word_dim: usize,
    /// Width `h` of each branch output.
    pub hidden: usize,
    /// Width `h₁` of the first two graph layers.
    pub layer_width: usize,
    /// Width `h_p` of the fused hidden layer.
    pub fusion: usize,
}

impl ModelDims {
    pub fn desk() -> Self {
        Self {
            word_dim: 16,
            hidden: 32,
            layer_width: 64,
            fusion: 64,
        }
    }

    pub fn gcn(self) -> GcnDims {
        GcnDims {
            word_dim: self.word_dim,
            hidden: self.hidden,
            layer_width: self.layer_width,
        }
    }
}

/// Fixed structure shared by every copy of a network: sizes, embeddings
/// and the normalized adjacency of the graph it was built for.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub dims: ModelDims,
    pub num_categories: usize,
    pub num_actions: usize,
    /// Without the graph branch the network is the plain actor-critic
    /// baseline.
    pub use_graph: bool,
    embeddings: CategoryEmbeddings,
    adjacency: Arc<Matrix>,
}

impl Architecture {
    pub fn new(
        dims: ModelDims,
        embeddings: CategoryEmbeddings,
        graph: &KnowledgeGraph,
        with_stop: bool,
        use_graph: bool,
    ) -> Result<Self> {
        Self::from_parts(
            dims,
            embeddings,
            graph.normalized_shared(),
            Action::count(with_stop),
            use_graph,
        )
    }

    pub fn from_parts(
        dims: ModelDims,
        embeddings: CategoryEmbeddings,
        adjacency: Arc<Matrix>,
        num_actions: usize,
        use_graph: bool,
    ) -> Result<Self> {
        let n = embeddings.len();
        if embeddings.dim() != dims.word_dim {
            return Err(Error::shape(
                "architecture",
                format!("embeddings have dim {}, expected {}", embeddings.dim(), dims.word_dim),
            ));
        }
        if adjacency.shape() != (n, n) {
            return Err(Error::shape(
                "architecture",
                format!("adjacency {:?} for {n} categories", adjacency.shape()),
            ));
        }
        if !(4..=5).contains(&num_actions) {
            return Err(Error::Contract(format!("{num_actions} actions")));
        }
        Ok(Self {
            dims,
            num_categories: n,
            num_actions,
            use_graph,
            embeddings,
            adjacency,
        })
    }

    pub fn embeddings(&self) -> &CategoryEmbeddings {
        &self.embeddings
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn with_stop(&self) -> bool {
        self.num_actions == 5
    }
}

/// Every trainable matrix of the network. The graph group is absent for
/// the no-graph baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParameters {
    pub visual_w: Matrix,
    pub visual_b: Matrix,
    pub semantic_w: Matrix,
    pub semantic_b: Matrix,
    pub graph: Option<GraphBranch>,
    pub fusion_w: Matrix,
    pub fusion_b: Matrix,
    pub policy_w: Matrix,
    pub policy_b: Matrix,
    pub value_w: Matrix,
    pub value_b: Matrix,
}

/// Graph convolution weights plus the projection of `z` to `h` features.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBranch {
    pub gcn: GcnParameters,
    pub proj_w: Matrix,
    pub proj_b: Matrix,
}

/// Scale applied to the initial policy head so the starting policy is
/// close to uniform.
const POLICY_HEAD_SCALE: f64 = 0.01;

impl PolicyParameters {
    pub fn zeros(arch: &Architecture) -> Self {
        let d = arch.dims;
        let n = arch.num_categories;
        let branches = if arch.use_graph { 3 } else { 2 };
        Self {
            visual_w: Matrix::zeros(FRAME_STACK * n, d.hidden),
            visual_b: Matrix::zeros(1, d.hidden),
            semantic_w: Matrix::zeros(d.word_dim, d.hidden),
            semantic_b: Matrix::zeros(1, d.hidden),
            graph: arch.use_graph.then(|| GraphBranch {
                gcn: GcnParameters::zeros(d.gcn()),
                proj_w: Matrix::zeros(n, d.hidden),
                proj_b: Matrix::zeros(1, d.hidden),
            }),
            fusion_w: Matrix::zeros(branches * d.hidden, d.fusion),
            fusion_b: Matrix::zeros(1, d.fusion),
            policy_w: Matrix::zeros(d.fusion, arch.num_actions),
            policy_b: Matrix::zeros(1, arch.num_actions),
            value_w: Matrix::zeros(d.fusion, 1),
            value_b: Matrix::zeros(1, 1),
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero, policy head scaled
    /// down.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = rng::rng_from(seed, &[rng::name_tag("init")]);
        let mut p = Self::zeros(arch);
        for (name, m) in p.named_mut() {
            if name.ends_with("_b") {
                continue;
            }
            match name {
                "policy_w" => gcn::fill_uniform(m, POLICY_HEAD_SCALE, &mut rng),
                "value_w" | "gcn_w2" => gcn::fill_uniform(m, 1.0, &mut rng),
                _ => gcn::fill_uniform(m, gcn::RELU_GAIN, &mut rng),
            }
        }
        p
    }

    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out = vec![
            ("visual_w", &self.visual_w),
            ("visual_b", &self.visual_b),
            ("semantic_w", &self.semantic_w),
            ("semantic_b", &self.semantic_b),
        ];
        if let Some(g) = &self.graph {
            for (name, m) in GRAPH_NAMES.iter().zip(g.gcn.matrices()) {
                out.push((name, m));
            }
            out.push(("proj_w", &g.proj_w));
            out.push(("proj_b", &g.proj_b));
        }
        out.extend([
            ("fusion_w", &self.fusion_w),
            ("fusion_b", &self.fusion_b),
            ("policy_w", &self.policy_w),
            ("policy_b", &self.policy_b),
            ("value_w", &self.value_w),
            ("value_b", &self.value_b),
        ]);
        out
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut out = vec![
            ("visual_w", &mut self.visual_w),
            ("visual_b", &mut self.visual_b),
            ("semantic_w", &mut self.semantic_w),
            ("semantic_b", &mut self.semantic_b),
        ];
        if let Some(g) = &mut self.graph {
            for (name, m) in GRAPH_NAMES.iter().zip(g.gcn.matrices_mut()) {
                out.push((name, m));
            }
            out.push(("proj_w", &mut g.proj_w));
            out.push(("proj_b", &mut g.proj_b));
        }
        out.extend([
            ("fusion_w", &mut self.fusion_w),
            ("fusion_b", &mut self.fusion_b),
            ("policy_w", &mut self.policy_w),
            ("policy_b", &mut self.policy_b),
            ("value_w", &mut self.value_w),
            ("value_b", &mut self.value_b),
        ]);
        out
    }

    /// Matrices in [`PolicyParameters::named`] order.
    pub fn to_vec(&self) -> Vec<Matrix> {
        self.named().into_iter().map(|(_, m)| m.clone()).collect()
    }

    /// Inverse of [`PolicyParameters::to_vec`]; shapes must match `arch`.
    pub fn from_vec(arch: &Architecture, values: Vec<Matrix>) -> Result<Self> {
        let mut p = Self::zeros(arch);
        let slots = p.named_mut();
        if slots.len() != values.len() {
            return Err(Error::shape(
                "policy parameters",
                format!("{} matrices, expected {}", values.len(), slots.len()),
            ));
        }
        for ((name, slot), v) in slots.into_iter().zip(values) {
            if slot.shape() != v.shape() {
                return Err(Error::shape(
                    "policy parameters",
                    format!("{name} is {:?}, expected {:?}", v.shape(), slot.shape()),
                ));
            }
            *slot = v;
        }
        Ok(p)
    }

    pub fn num_values(&self) -> usize {
        self.named().iter().map(|(_, m)| m.len()).sum()
    }
}

const GRAPH_NAMES: [&str; 5] = ["gcn_w_word", "gcn_w_score", "gcn_w0", "gcn_w1", "gcn_w2"];

/// Parameter-name prefix for the branch a parameter belongs to.
pub fn parameter_group(name: &str) -> &str {
    name.split('_').next().unwrap_or(name)
}

/// Network parameters and constants bound to one tape.
#[derive(Clone, Debug)]
pub struct PolicyVars {
    pub params: Vec<Var>,
    graph: Option<(GcnVars, Var, Var)>,
    visual: (Var, Var),
    semantic: (Var, Var),
    fusion: (Var, Var),
    policy: (Var, Var),
    value: (Var, Var),
    embeddings: Var,
    adjacency: Var,
}

impl PolicyVars {
    /// Adds the parameters as differentiable leaves and the embeddings and
    /// adjacency as constants.
    pub fn bind(tape: &mut Tape, arch: &Architecture, p: &PolicyParameters) -> Self {
        let params: Vec<Var> = p.named().into_iter().map(|(_, m)| tape.leaf(m.clone())).collect();
        let embeddings = tape.constant_shared(arch.embeddings.shared());
        let adjacency = tape.constant_shared(Arc::clone(&arch.adjacency));
        let mut it = params.iter().copied();
        let mut next = || it.next().expect("parameter count");
        let visual = (next(), next());
        let semantic = (next(), next());
        let graph = p.graph.as_ref().map(|_| {
            let g = GcnVars {
                w_word: next(),
                w_score: next(),
                w0: next(),
                w1: next(),
                w2: next(),
            };
            (g, next(), next())
        });
        let fusion = (next(), next());
        let policy = (next(), next());
        let value = (next(), next());
        Self {
            params,
            graph,
            visual,
            semantic,
            fusion,
            policy,
            value,
            embeddings,
            adjacency,
        }
    }

    /// Gradients of every parameter, in binding order.
    pub fn grads(&self, tape: &Tape) -> Vec<Matrix> {
        self.params.iter().map(|&v| tape.grad(v)).collect()
    }
}

/// One network input: an observation and the target category.
#[derive(Clone, Copy, Debug)]
pub struct Input<'a> {
    pub observation: &'a Observation,
    pub target: usize,
}

fn dense(tape: &mut Tape, x: Var, (w, b): (Var, Var)) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// Batched forward pass. Returns `T×|A|` logits and `T×1` values.
pub fn forward_batch(tape: &mut Tape, arch: &Architecture, vars: &PolicyVars, inputs: &[Input]) -> Result<(Var, Var)> {
    let n = arch.num_categories;
    if inputs.is_empty() {
        return Err(Error::Contract("empty input batch".into()));
    }
    let mut stacks = Vec::with_capacity(inputs.len() * FRAME_STACK * n);
    let mut words = Vec::with_capacity(inputs.len() * arch.dims.word_dim);
    let mut frames = Vec::with_capacity(inputs.len() * n);
    for input in inputs {
        let obs = input.observation;
        if input.target >= n {
            return Err(Error::Contract(format!("target {} outside vocabulary of {n}", input.target)));
        }
        if obs.stack.len() != FRAME_STACK * n || obs.frame.len() != n {
            return Err(Error::shape(
                "policy forward",
                format!("observation with {} stacked scores for {n} categories", obs.stack.len()),
            ));
        }
        stacks.extend_from_slice(&obs.stack);
        frames.extend_from_slice(&obs.frame);
        words.extend_from_slice(arch.embeddings.row(input.target));
    }
    let t = inputs.len();
    let stack = tape.constant(Matrix::from_vec(t, FRAME_STACK * n, stacks)?);
    let visual = dense(tape, stack, vars.visual)?;
    let visual = tape.relu(visual);
    let word = tape.constant(Matrix::from_vec(t, arch.dims.word_dim, words)?);
    let semantic = dense(tape, word, vars.semantic)?;
    let semantic = tape.relu(semantic);
    let mut branches = vec![visual, semantic];
    if let Some((g, proj_w, proj_b)) = &vars.graph {
        let scores = tape.constant(Matrix::column_vector(frames));
        let x = gcn::node_inputs_batch(tape, scores, vars.embeddings, g)?;
        let z = gcn::gcn_forward_batch(tape, x, vars.adjacency, g)?;
        let k = dense(tape, z, (*proj_w, *proj_b))?;
        branches.push(tape.relu(k));
    }
    let fused = tape.concat(&branches, Axis::Cols)?;
    let hidden = dense(tape, fused, vars.fusion)?;
    let hidden = tape.relu(hidden);
    let logits = dense(tape, hidden, vars.policy)?;
    let value = dense(tape, hidden, vars.value)?;
    Ok((logits, value))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Greedy,
}

impl ActionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionMode::Sample => "sample",
            ActionMode::Greedy => "greedy",
        }
    }
}

impl std::fmt::Display for ActionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ActionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(ActionMode::Sample),
            "greedy" => Ok(ActionMode::Greedy),
            _ => Err(Error::Value(format!("unknown action mode '{s}'"))),
        }
    }
}

/// Draws from `softmax(logits)` or takes the argmax (lowest index on ties).
pub fn sample_action(logits: &[f64], mode: ActionMode, rng: &mut Rng) -> Result<usize> {
    if logits.is_empty() {
        return Err(Error::Contract("no logits".into()));
    }
    match mode {
        ActionMode::Greedy => {
            if logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("greedy action"));
            }
            let mut best = 0;
            for (i, &v) in logits.iter().enumerate() {
                if v > logits[best] {
                    best = i;
                }
            }
            Ok(best)
        }
        ActionMode::Sample => {
            let probs = tensor::softmax(logits)?;
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return Ok(i);
                }
            }
            Ok(probs.len() - 1)
        }
    }
}

/// A network with its parameters; the unit stored in checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub arch: Arc<Architecture>,
    pub params: PolicyParameters,
}

const META_NAME: &str = "meta/arch";
const EMBEDDINGS_NAME: &str = "const/embeddings";
const ADJACENCY_NAME: &str = "const/adjacency";
const PARAM_PREFIX: &str = "param/";

impl Policy {
    pub fn new(arch: Arc<Architecture>, seed: u64) -> Self {
        let params = PolicyParameters::init(&arch, seed);
        Self { arch, params }
    }

    /// Logits and value for one observation.
    pub fn forward(&self, observation: &Observation, target: usize) -> Result<(Vec<f64>, f64)> {
        let mut tape = Tape::new();
        let vars = PolicyVars::bind(&mut tape, &self.arch, &self.params);
        let (logits, value) = forward_batch(&mut tape, &self.arch, &vars, &[Input { observation, target }])?;
        Ok((tape.value(logits).data().to_vec(), tape.value(value).item()))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let a = &self.arch;
        let d = a.dims;
        let mut ck = Checkpoint::new();
        let meta = [
            a.num_categories,
            a.num_actions,
            usize::from(a.use_graph),
            d.word_dim,
            d.hidden,
            d.layer_width,
            d.fusion,
        ];
        ck.insert(META_NAME, Matrix::row_vector(meta.iter().map(|&v| v as f64).collect()));
        ck.insert(EMBEDDINGS_NAME, a.embeddings.matrix().clone());
        ck.insert(ADJACENCY_NAME, a.adjacency().clone());
        for (name, m) in self.params.named() {
            ck.insert(format!("{PARAM_PREFIX}{name}"), m.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = ck.require(META_NAME)?;
        if meta.shape() != (1, 7) {
            return Err(Error::Load(format!("{META_NAME} has shape {:?}", meta.shape())));
        }
        let m: Vec<usize> = meta.data().iter().map(|&v| v as usize).collect();
        let dims = ModelDims {
            word_dim: m[3],
            hidden: m[4],
            layer_width: m[5],
            fusion: m[6],
        };
        let embeddings = CategoryEmbeddings::from_matrix(ck.require(EMBEDDINGS_NAME)?.clone());
        let adjacency = Arc::new(ck.require(ADJACENCY_NAME)?.clone());
        let arch = Architecture::from_parts(dims, embeddings, adjacency, m[1], m[2] == 1)
            .map_err(|e| Error::Load(e.to_string()))?;
        if arch.num_categories != m[0] {
            return Err(Error::Load(format!(
                "checkpoint declares {} categories but stores {}",
                m[0], arch.num_categories
            )));
        }
        let names: Vec<&str> = PolicyParameters::zeros(&arch).named().iter().map(|(n, _)| *n).collect();
        let values = names
            .iter()
            .map(|n| ck.require(&format!("{PARAM_PREFIX}{n}")).cloned())
            .collect::<Result<Vec<_>>>()?;
        let params = PolicyParameters::from_vec(&arch, values).map_err(|e| Error::Load(e.to_string()))?;
        Ok(Self {
            arch: Arc::new(arch),
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CooccurrencePrior, Vocabulary};

    fn desk_arch(use_graph: bool, with_stop: bool) -> Arc<Architecture> {
        let vocab = Vocabulary::desk();
        let counts = crate::graph::generate_corpus(&vocab, &CooccurrencePrior::desk(&vocab), 1);
        let graph = KnowledgeGraph::build(&counts, &vocab, 3).unwrap();
        let emb = CategoryEmbeddings::generate(&vocab, 16, 1).unwrap();
        Arc::new(Architecture::new(ModelDims::desk(), emb, &graph, with_stop, use_graph).unwrap())
    }

    fn observation(n: usize, rng: &mut Rng) -> Observation {
        let stack: Vec<f64> = (0..FRAME_STACK * n).map(|_| rng.random_range(0.0..1.0)).collect();
        Observation {
            frame: stack[..n].to_vec(),
            stack,
        }
    }

    #[test]
    fn zero_parameters_give_uniform_policy() {
        let arch = desk_arch(true, true);
        let p = Policy {
            params: PolicyParameters::zeros(&arch),
            arch,
        };
        let mut rng = rng::rng_from(0, &[]);
        let (logits, value) = p.forward(&observation(12, &mut rng), 3).unwrap();
        assert_eq!(logits, vec![0.0; 5]);
        assert_eq!(value, 0.0);
    }

    #[test]
    fn action_count_follows_stop_flag() {
        assert_eq!(desk_arch(true, true).num_actions, 5);
        assert_eq!(desk_arch(true, false).num_actions, 4);
    }

    #[test]
    fn semantic_and_graph_branches_are_live() {
        let arch = desk_arch(true, false);
        let p = Policy::new(Arc::clone(&arch), 5);
        let mut rng = rng::rng_from(1, &[]);
        let obs = observation(12, &mut rng);
        let (base, _) = p.forward(&obs, 0).unwrap();
        let (other, _) = p.forward(&obs, 9).unwrap();
        assert!(base.iter().zip(&other).any(|(a, b)| (a - b).abs() > 1e-9));
        let mut ablated = p.clone();
        let g = ablated.params.graph.as_mut().unwrap();
        g.gcn.w2 = Matrix::zeros(g.gcn.w2.rows(), 1);
        let (no_graph, _) = ablated.forward(&obs, 0).unwrap();
        assert!(base.iter().zip(&no_graph).any(|(a, b)| (a - b).abs() > 1e-12));
    }

    #[test]
    fn unknown_target_is_rejected() {
        let p = Policy::new(desk_arch(true, false), 1);
        let mut rng = rng::rng_from(2, &[]);
        assert!(matches!(p.forward(&observation(12, &mut rng), 12), Err(Error::Contract(_))));
    }

    #[test]
    fn greedy_and_sampling() {
        let mut rng = rng::rng_from(3, &[]);
        assert_eq!(sample_action(&[10.0, 0.0, 0.0, 0.0, 0.0], ActionMode::Greedy, &mut rng).unwrap(), 0);
        assert_eq!(sample_action(&[1.0, 2.0, 2.0], ActionMode::Greedy, &mut rng).unwrap(), 1);
        let mut counts = [0usize; 5];
        for _ in 0..10_000 {
            counts[sample_action(&[0.0; 5], ActionMode::Sample, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.2).abs() <= 0.02, "{counts:?}");
        }
        let draw = |seed| {
            let mut r = rng::rng_from(seed, &[]);
            (0..20)
                .map(|_| sample_action(&[0.3, -0.1, 0.5, 0.0], ActionMode::Sample, &mut r).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn every_group_receives_gradient() {
        let arch = desk_arch(true, false);
        let p = Policy::new(Arc::clone(&arch), 11);
        let mut rng = rng::rng_from(4, &[]);
        let obs: Vec<Observation> = (0..6).map(|_| observation(12, &mut rng)).collect();
        let inputs: Vec<Input> = obs
            .iter()
            .enumerate()
            .map(|(i, o)| Input {
                observation: o,
                target: i % 8,
            })
            .collect();
        let mut tape = Tape::new();
        let vars = PolicyVars::bind(&mut tape, &arch, &p.params);
        let (logits, value) = forward_batch(&mut tape, &arch, &vars, &inputs).unwrap();
        let lp = tape.log_softmax(logits).unwrap();
        let picked = tape.gather(lp, &[0, 1, 2, 3, 0, 1]).unwrap();
        let a = tape.sum(picked);
        let b = tape.square(value);
        let b = tape.sum(b);
        let loss = tape.add(a, b).unwrap();
        tape.backward(loss).unwrap();
        let grads = vars.grads(&tape);
        let mut groups = std::collections::BTreeMap::new();
        for ((name, _), g) in p.params.named().iter().zip(&grads) {
            *groups.entry(parameter_group(name)).or_insert(0.0) += g.norm_sq();
        }
        assert_eq!(groups.len(), 7);
        for (group, norm) in groups {
            assert!(norm > 0.0, "{group} has no gradient");
        }
    }

    #[test]
    fn batch_matches_single_forward() {
        let arch = desk_arch(true, true);
        let p = Policy::new(Arc::clone(&arch), 2);
        let mut rng = rng::rng_from(5, &[]);
        let obs: Vec<Observation> = (0..3).map(|_| observation(12, &mut rng)).collect();
        let inputs: Vec<Input> = obs.iter().map(|o| Input { observation: o, target: 2 }).collect();
        let mut tape = Tape::new();
        let vars = PolicyVars::bind(&mut tape, &arch, &p.params);
        let (logits, _) = forward_batch(&mut tape, &arch, &vars, &inputs).unwrap();
        for (t, o) in obs.iter().enumerate() {
            let (single, _) = p.forward(o, 2).unwrap();
            for (a, b) in single.iter().zip(tape.value(logits).row(t)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for use_graph in [true, false] {
            let p = Policy::new(desk_arch(use_graph, false), 8);
            let path = dir.path().join("p.ckpt");
            p.save(&path).unwrap();
            let q = Policy::load(&path).unwrap();
            assert_eq!(p, q);
        }
        let mut ck = Policy::new(desk_arch(true, false), 8).to_checkpoint();
        ck.insert("param/fusion_w", Matrix::zeros(2, 2));
        assert!(matches!(Policy::from_checkpoint(&ck), Err(Error::Load(_))));
    }
}
