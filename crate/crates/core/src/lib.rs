//! Human-in-the-loop lexical learning over a product taxonomy.
//!
//! An unknown query word is treated as pointing at one node of a
//! [`KnowledgeGraph`]. Every node is a meaning hypothesis; the engine keeps an
//! exact posterior over them ([`BeliefState`]), shows the user the product
//! [`Bundle`] with the largest expected information gain, and folds the
//! user's click (or refusal to click) back into the posterior.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, persistence,
//! the HTTP surface and the CLI live in the `lexprobe` crate.
//!
//! ```
//! use lexprobe_core::{KnowledgeGraph, Node, Product, SessionConfig, SessionTrace, Feedback, Status};
//!
//! let product = |id: &str, f: &[&str]| Product::new(id, id, f.iter().copied());
//! let node = |id: &str, parent: Option<&str>, f: &[&str], ext: &[&str]| {
//!     Node::new(id, id, parent, f.iter().copied(), ext.iter().copied())
//! };
//! let kg = KnowledgeGraph::new(
//!     "toy",
//!     vec![product("a", &["x"]), product("b", &["y"])],
//!     vec![
//!         node("all", None, &["thing"], &["a", "b"]),
//!         node("left", Some("all"), &["x"], &["a"]),
//!         node("right", Some("all"), &["y"], &["b"]),
//!     ],
//! )
//! .unwrap();
//!
//! let config = SessionConfig { bundle_size: 1, ..SessionConfig::default() };
//! let mut trace = SessionTrace::start(&kg, "s1", "word", config).unwrap();
//! let shown = trace.pending_bundle().unwrap().clone();
//! trace.submit_feedback(&kg, Feedback::Click(shown.products()[0].clone())).unwrap();
//! assert!(matches!(trace.status(), Status::Active | Status::Converged(_)));
//! ```
#![no_std]

extern crate alloc;

pub mod design;
mod error;
pub mod inference;
mod rng;
pub mod session;
pub mod simulator;
pub mod taxonomy;

pub use design::{
    enumerate_bundles, expected_information_gain, kl_divergence, predictive, select_bundle,
    Bundle, EigReport, Selection, DEFAULT_MAX_CANDIDATES, TIE_TOLERANCE,
};
pub use error::{Error, KgError, Result};
pub use inference::{
    click_weight, outcome_likelihood, prior, update, update_batch, BeliefState, Feedback,
    NoiseConfig,
};
pub use session::{Policy, SessionConfig, SessionTrace, Status, Step};
pub use simulator::{
    Comparison, PolicyKind, PolicySummary, Simulation, SimulatedUser, TrialOutcome, TrialResult,
};
pub use taxonomy::{
    jaccard_distance, ontological_distinctiveness, KnowledgeGraph, Node, NodeId, OdConfig,
    Product, ProductId,
};
