//! Desk-scale experiment data: vocabulary, prior, corpus, knowledge graph,
//! embeddings and per-room scene splits, all derived from one seed.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::env::{generate_scenes, RoomType, Scene, SceneGenParams};
use crate::error::{Error, Result};
use crate::gcn::CategoryEmbeddings;
use crate::graph::{generate_corpus, CooccurrencePrior, KnowledgeGraph, ObjectSplit, RelationCounts, Vocabulary, DEFAULT_THRESHOLD};
use crate::rng;

/// Which graph a model is trained with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GraphSpec {
    Real,
    DroppedObjects(f64),
    DroppedRelations(f64),
    /// Random graph with the real graph's edge density.
    Random,
    /// Fully connected.
    Dense,
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Real => write!(f, "real"),
            GraphSpec::DroppedObjects(x) => write!(f, "dropped:objects:{x}"),
            GraphSpec::DroppedRelations(x) => write!(f, "dropped:relations:{x}"),
            GraphSpec::Random => write!(f, "random"),
            GraphSpec::Dense => write!(f, "dense"),
        }
    }
}

impl FromStr for GraphSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Value(format!("unknown graph '{s}' (real, dropped:objects:F, dropped:relations:F, random, dense)"));
        match s {
            "real" => Ok(GraphSpec::Real),
            "random" => Ok(GraphSpec::Random),
            "dense" => Ok(GraphSpec::Dense),
            _ => {
                let parts: Vec<&str> = s.split(':').collect();
                let [_, what, frac] = parts[..] else { return Err(bad()) };
                if parts[0] != "dropped" {
                    return Err(bad());
                }
                let x: f64 = frac.parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::Value(format!("drop fraction {x} outside [0,1]")));
                }
                match what {
                    "objects" => Ok(GraphSpec::DroppedObjects(x)),
                    "relations" => Ok(GraphSpec::DroppedRelations(x)),
                    _ => Err(bad()),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneSplit {
    /// Training scenes.
    Seen,
    Validation,
    /// Held-out test scenes.
    Unseen,
}

impl SceneSplit {
    pub fn as_str(self) -> &'static str {
        match self {
            SceneSplit::Seen => "seen",
            SceneSplit::Validation => "val",
            SceneSplit::Unseen => "unseen",
        }
    }
}

impl FromStr for SceneSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen" => Ok(SceneSplit::Seen),
            "val" => Ok(SceneSplit::Validation),
            "unseen" => Ok(SceneSplit::Unseen),
            _ => Err(Error::Value(format!("unknown scene split '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DataConfig {
    pub data_seed: u64,
    pub scenes_per_room: usize,
    pub word_dim: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            data_seed: 0,
            scenes_per_room: 12,
            word_dim: 16,
        }
    }
}

/// Scenes of one room type split into train, validation and test.
#[derive(Clone, Debug)]
pub struct RoomScenes {
    pub room: RoomType,
    pub train: Vec<Arc<Scene>>,
    pub val: Vec<Arc<Scene>>,
    pub test: Vec<Arc<Scene>>,
}

impl RoomScenes {
    pub fn split(&self, split: SceneSplit) -> &[Arc<Scene>] {
        match split {
            SceneSplit::Seen => &self.train,
            SceneSplit::Validation => &self.val,
            SceneSplit::Unseen => &self.test,
        }
    }
}

/// `(train, val, test)` counts: one sixth each for validation and test,
/// at least one each once there are three scenes.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    if n < 3 {
        return (n, 0, 0);
    }
    let k = ((n as f64 / 6.0).round() as usize).max(1);
    (n - 2 * k, k, k)
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub config: DataConfig,
    pub vocab: Vocabulary,
    pub prior: CooccurrencePrior,
    pub counts: RelationCounts,
    pub graph: KnowledgeGraph,
    pub embeddings: CategoryEmbeddings,
    pub rooms: Vec<RoomScenes>,
}

impl Dataset {
    /// Built-in vocabulary and prior, a sampled corpus, the thresholded
    /// graph, embeddings and generated scenes for every room type.
    pub fn desk(config: DataConfig) -> Result<Self> {
        let vocab = Vocabulary::desk();
        let prior = CooccurrencePrior::desk(&vocab);
        Self::from_parts(config, vocab, prior)
    }

    pub fn from_parts(config: DataConfig, vocab: Vocabulary, prior: CooccurrencePrior) -> Result<Self> {
        let seed = config.data_seed;
        let counts = generate_corpus(&vocab, &prior, rng::derive_seed(seed, &[rng::name_tag("corpus")]));
        let graph = KnowledgeGraph::build(&counts, &vocab, DEFAULT_THRESHOLD)?;
        let embeddings = CategoryEmbeddings::generate(&vocab, config.word_dim, seed)?;
        let mut rooms = Vec::new();
        for room in RoomType::ALL {
            let scenes = generate_scenes(
                room,
                &SceneGenParams::for_room(room),
                &vocab,
                &prior,
                rng::derive_seed(seed, &[rng::name_tag("scenes")]),
                config.scenes_per_room,
            )?;
            let (tr, va, _) = split_counts(scenes.len());
            let mut scenes: Vec<Arc<Scene>> = scenes.into_iter().map(Arc::new).collect();
            let test = scenes.split_off(tr + va);
            let val = scenes.split_off(tr);
            rooms.push(RoomScenes {
                room,
                train: scenes,
                val,
                test,
            });
        }
        Ok(Self {
            config,
            vocab,
            prior,
            counts,
            graph,
            embeddings,
            rooms,
        })
    }

    pub fn room(&self, room: RoomType) -> &RoomScenes {
        self.rooms.iter().find(|r| r.room == room).expect("every room type is generated")
    }

    /// Categories of `split` that a trained agent may be asked to find in
    /// `room`.
    pub fn targets(&self, room: RoomType, split: ObjectSplit) -> Vec<usize> {
        self.vocab.targets(room, split)
    }

    /// The graph a model is trained with. Object drops never isolate
    /// training targets of `room`.
    pub fn graph_for(&self, spec: GraphSpec, room: RoomType, seed: u64) -> Result<KnowledgeGraph> {
        let seed = rng::derive_seed(seed, &[rng::name_tag("graph")]);
        match spec {
            GraphSpec::Real => Ok(self.graph.clone()),
            GraphSpec::DroppedObjects(f) => {
                let protected = self.targets(room, ObjectSplit::Known);
                Ok(self.graph.drop_nodes(f, seed, &protected)?.0)
            }
            GraphSpec::DroppedRelations(f) => self.graph.drop_edges(f, seed),
            GraphSpec::Random => KnowledgeGraph::random(&self.vocab, self.graph.density(), seed),
            GraphSpec::Dense => Ok(KnowledgeGraph::fully_connected(&self.vocab)),
        }
    }
}

/// Targets from `candidates` with at least one instance in `scene`.
pub fn present_targets(scene: &Scene, candidates: &[usize]) -> Vec<usize> {
    candidates.iter().copied().filter(|&c| scene.has_category(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        assert_eq!(split_counts(30), (20, 5, 5));
        assert_eq!(split_counts(12), (8, 2, 2));
        assert_eq!(split_counts(2), (2, 0, 0));
    }

    #[test]
    fn graph_spec_round_trip() {
        for s in ["real", "random", "dense", "dropped:objects:0.4", "dropped:relations:0.8"] {
            assert_eq!(s.parse::<GraphSpec>().unwrap().to_string(), s);
        }
        for s in ["dropped:nodes:0.2", "dropped:objects:1.5", "sparse", "dropped:objects"] {
            assert!(s.parse::<GraphSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn desk_dataset_is_deterministic_and_consistent() {
        let a = Dataset::desk(DataConfig::default()).unwrap();
        let b = Dataset::desk(DataConfig::default()).unwrap();
        assert_eq!(a.graph, b.graph);
        let k = a.room(RoomType::Kitchen);
        assert_eq!((k.train.len(), k.val.len(), k.test.len()), (8, 2, 2));
        for (x, y) in k.train.iter().zip(&b.room(RoomType::Kitchen).train) {
            assert_eq!(x, y);
        }
        // the prior's anchor-satellite pairs become edges
        let v = &a.vocab;
        assert!(a.graph.has_edge(v.index_of("fridge").unwrap(), v.index_of("apple").unwrap()));
        let dropped = a.graph_for(GraphSpec::DroppedObjects(0.8), RoomType::Kitchen, 3).unwrap();
        for t in a.targets(RoomType::Kitchen, ObjectSplit::Known) {
            for j in 0..v.len() {
                if a.graph.has_edge(t, j) && !dropped.has_edge(t, j) {
                    // only edges to dropped (non-target) nodes may vanish
                    assert!(dropped.degree(j) == 0);
                }
            }
        }
    }
}
