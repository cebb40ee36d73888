use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// A knowledge graph that violates one of its structural invariants.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KgError {
    #[error("graph id is empty")]
    EmptyGraphId,
    #[error("graph has no products")]
    NoProducts,
    #[error("a product has an empty id")]
    EmptyProductId,
    #[error("a node has an empty id")]
    EmptyNodeId,
    #[error("duplicate product id `{0}`")]
    DuplicateProduct(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("product `{0}` has no features")]
    EmptyProductFeatures(String),
    #[error("node `{0}` has no features")]
    EmptyNodeFeatures(String),
    #[error("node `{0}` has an empty extension")]
    EmptyExtension(String),
    #[error("node `{node}` lists unknown product `{product}`")]
    DanglingProduct { node: String, product: String },
    #[error("node `{node}` has unknown parent `{parent}`")]
    DanglingParent { node: String, parent: String },
    #[error("no root node (every node has a parent)")]
    NoRoot,
    #[error("multiple root nodes: `{0}` and `{1}`")]
    MultipleRoots(String, String),
    #[error("parent relation has a cycle through `{0}`")]
    Cycle(String),
    #[error("product `{product}` is in `{child}` but not in its parent `{parent}`")]
    ExtensionNotNested {
        child: String,
        parent: String,
        product: String,
    },
    #[error("root extension is missing product `{0}`")]
    RootNotComplete(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] KgError),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error("clicked product `{0}` is not in the bundle")]
    ClickOutsideBundle(String),
    #[error("bundle is empty")]
    EmptyBundle,
    #[error("product `{0}` appears twice in the bundle")]
    DuplicateInBundle(String),
    #[error("bundle size {size} is outside 1..={max}")]
    BundleSizeOutOfRange { size: usize, max: usize },
    #[error("{count} candidate bundles exceed the cap of {cap}")]
    TooManyCandidates { count: u128, cap: usize },
    #[error("belief belongs to graph `{belief}`, not `{graph}`")]
    GraphMismatch { belief: String, graph: String },
    #[error("distributions are over different node sets")]
    NodeSetMismatch,
    #[error("reference distribution has zero mass on `{0}` where the other is positive")]
    SupportViolation(String),
    #[error("probabilities do not form a distribution (sum {0})")]
    NotNormalized(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("session is not awaiting feedback")]
    NotAwaitingFeedback,
    #[error("recorded steps are inconsistent: {0}")]
    InvalidReplay(&'static str),
    #[error("every hypothesis has zero likelihood")]
    DegenerateLikelihood,
}
