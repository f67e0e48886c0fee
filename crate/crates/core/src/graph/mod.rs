//! Category vocabulary, relationship corpus and the knowledge graph built
//! from it.

mod corpus;
mod knowledge;
mod vocab;

pub use corpus::{generate_corpus, CooccurrencePrior, IngestReport, RelationCounts, RELATION_LABELS};
pub use knowledge::{normalize_adjacency, KnowledgeGraph, VariantKind, DEFAULT_THRESHOLD};
pub use vocab::{Category, ObjectSplit, Vocabulary};
