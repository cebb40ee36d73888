//! Exact posterior over taxonomy nodes.
//!
//! The prior is proportional to ontological distinctiveness. A click on
//! product `x` has probability `(1 - ε)·[x ∈ ext]/|ext| + ε/N` under a node,
//! where `N` is the catalog size: with probability `ε` the user clicks
//! erratically, otherwise they pick uniformly from the node's extension
//! (the size principle). Shown a bundle, the user clicks their intended
//! product if it is on screen and nothing otherwise; independently they
//! walk away without clicking with probability `epsilon_noclick`.
//!
//! Masses are stored as logs and renormalized with log-sum-exp.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::design::Bundle;
use crate::error::{Error, Result};
use crate::taxonomy::{od_at, KnowledgeGraph, NodeId, OdConfig, ProductId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Probability that a click is erratic (uniform over the catalog).
    pub epsilon: f64,
    /// Probability that the user declines to click at all.
    pub epsilon_noclick: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            epsilon_noclick: 0.05,
        }
    }
}

impl NoiseConfig {
    pub fn new(epsilon: f64, epsilon_noclick: f64) -> Result<Self> {
        let cfg = Self {
            epsilon,
            epsilon_noclick,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Both noise levels set to `epsilon`.
    pub fn with_epsilon(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.epsilon) {
            return Err(Error::InvalidConfig("epsilon must lie in (0, 1)"));
        }
        if !open_unit(self.epsilon_noclick) {
            return Err(Error::InvalidConfig("epsilon_noclick must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// What the user did with a bundle.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feedback {
    Click(ProductId),
    NoClick,
}

impl Feedback {
    pub fn click(id: impl Into<String>) -> Self {
        Feedback::Click(ProductId::new(id))
    }

    pub fn clicked(&self) -> Option<&ProductId> {
        match self {
            Feedback::Click(p) => Some(p),
            Feedback::NoClick => None,
        }
    }
}

impl fmt::Display for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feedback::Click(p) => write!(f, "click {p}"),
            Feedback::NoClick => f.write_str("no click"),
        }
    }
}

/// A normalized distribution over every node of one graph, in graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    kg_id: String,
    nodes: Vec<NodeId>,
    log_mass: Vec<f64>,
}

impl BeliefState {
    /// Builds a belief from linear masses, one per node of `kg`.
    pub fn from_masses<'a>(
        kg: &KnowledgeGraph,
        masses: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self> {
        let mut slots: Vec<Option<f64>> = alloc::vec![None; kg.nodes().len()];
        for (id, m) in masses {
            let i = kg.node_idx(id)?;
            if slots[i].is_some() || m < 0.0 || !m.is_finite() {
                return Err(Error::NodeSetMismatch);
            }
            slots[i] = Some(m);
        }
        let linear: Vec<f64> = slots
            .into_iter()
            .collect::<Option<_>>()
            .ok_or(Error::NodeSetMismatch)?;
        let total: f64 = linear.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self {
            kg_id: kg.id().to_string(),
            nodes: kg.nodes().iter().map(|n| n.id.clone()).collect(),
            log_mass: linear.iter().map(|&m| libm::log(m)).collect(),
        })
    }

    pub fn kg_id(&self) -> &str {
        &self.kg_id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn mass(&self, node: &str) -> Option<f64> {
        self.nodes
            .iter()
            .position(|n| n.as_str() == node)
            .map(|i| libm::exp(self.log_mass[i]))
    }

    pub fn masses(&self) -> Vec<f64> {
        self.log_mass.iter().map(|&l| libm::exp(l)).collect()
    }

    pub fn log_masses(&self) -> &[f64] {
        &self.log_mass
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, f64)> + '_ {
        self.nodes
            .iter()
            .zip(&self.log_mass)
            .map(|(n, &l)| (n, libm::exp(l)))
    }

    /// Most probable node; the first in graph order wins ties.
    pub fn argmax(&self) -> (&NodeId, f64) {
        let mut best = 0;
        for (i, &l) in self.log_mass.iter().enumerate() {
            if l > self.log_mass[best] {
                best = i;
            }
        }
        (&self.nodes[best], libm::exp(self.log_mass[best]))
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.log_mass
            .iter()
            .filter(|l| l.is_finite())
            .map(|&l| -libm::exp(l) * l)
            .sum()
    }

    pub(crate) fn check_graph(&self, kg: &KnowledgeGraph) -> Result<()> {
        if self.kg_id != kg.id() {
            return Err(Error::GraphMismatch {
                belief: self.kg_id.clone(),
                graph: kg.id().to_string(),
            });
        }
        if self.nodes.len() != kg.nodes().len()
            || self.nodes.iter().zip(kg.nodes()).any(|(a, b)| *a != b.id)
        {
            return Err(Error::NodeSetMismatch);
        }
        Ok(())
    }

    /// Same graph, masses proportional to `exp(log_mass + log_lik)`.
    pub(crate) fn reweighted(&self, log_lik: impl Iterator<Item = f64>) -> Result<Self> {
        let mut log_mass: Vec<f64> = self.log_mass.iter().zip(log_lik).map(|(a, b)| a + b).collect();
        let z = log_sum_exp(&log_mass);
        if !z.is_finite() {
            return Err(Error::DegenerateLikelihood);
        }
        for l in &mut log_mass {
            *l -= z;
        }
        Ok(Self {
            kg_id: self.kg_id.clone(),
            nodes: self.nodes.clone(),
            log_mass,
        })
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(xs.iter().map(|&x| libm::exp(x - max)).sum::<f64>())
}

/// Prior proportional to each node's ontological distinctiveness.
pub fn prior(kg: &KnowledgeGraph, od: &OdConfig) -> BeliefState {
    let scores: Vec<f64> = (0..kg.nodes().len()).map(|i| od_at(kg, i, od)).collect();
    let total: f64 = scores.iter().sum();
    BeliefState {
        kg_id: kg.id().to_string(),
        nodes: kg.nodes().iter().map(|n| n.id.clone()).collect(),
        log_mass: scores.iter().map(|s| libm::log(s / total)).collect(),
    }
}

/// Probability that a user who means `node` intends product `x`.
pub fn click_weight(kg: &KnowledgeGraph, node: &str, x: &str, noise: &NoiseConfig) -> Result<f64> {
    let n = kg.node_idx(node)?;
    let p = kg.product_idx(x)?;
    Ok(intent_prob(kg, n, p, noise))
}

fn intent_prob(kg: &KnowledgeGraph, node: usize, product: usize, noise: &NoiseConfig) -> f64 {
    let erratic = noise.epsilon / kg.products().len() as f64;
    if kg.covers(node, product) {
        (1.0 - noise.epsilon) / kg.ext_len(node) as f64 + erratic
    } else {
        erratic
    }
}

/// Outcome distribution for one node and one bundle: one entry per bundle
/// product in bundle order, then the no-click entry.
pub(crate) fn outcome_probs(
    kg: &KnowledgeGraph,
    node: usize,
    bundle: &[usize],
    noise: &NoiseConfig,
) -> Vec<f64> {
    let keep = 1.0 - noise.epsilon_noclick;
    let mut out: Vec<f64> = bundle
        .iter()
        .map(|&p| keep * intent_prob(kg, node, p, noise))
        .collect();
    let shown: f64 = out.iter().sum();
    out.push(noise.epsilon_noclick + (keep - shown).max(0.0));
    out
}

/// Index of `y` among a bundle's outcomes (bundle positions, then no-click).
pub(crate) fn outcome_index(bundle: &Bundle, y: &Feedback) -> Result<usize> {
    match y {
        Feedback::NoClick => Ok(bundle.len()),
        Feedback::Click(x) => bundle
            .products()
            .iter()
            .position(|p| p == x)
            .ok_or_else(|| Error::ClickOutsideBundle(x.to_string())),
    }
}

/// `P(y | node, bundle)` under the intended-product model.
pub fn outcome_likelihood(
    kg: &KnowledgeGraph,
    node: &str,
    bundle: &Bundle,
    y: &Feedback,
    noise: &NoiseConfig,
) -> Result<f64> {
    let n = kg.node_idx(node)?;
    let idx = bundle.resolve(kg)?;
    let k = outcome_index(bundle, y)?;
    Ok(outcome_probs(kg, n, &idx, noise)[k])
}

/// Bayes update on one observation. The input belief is left untouched.
pub fn update(
    belief: &BeliefState,
    kg: &KnowledgeGraph,
    bundle: &Bundle,
    y: &Feedback,
    noise: &NoiseConfig,
) -> Result<BeliefState> {
    belief.check_graph(kg)?;
    let idx = bundle.resolve(kg)?;
    let k = outcome_index(bundle, y)?;
    belief.reweighted((0..kg.nodes().len()).map(|n| libm::log(outcome_probs(kg, n, &idx, noise)[k])))
}

/// Folds [`update`] over `observations` in order.
pub fn update_batch(
    belief: &BeliefState,
    kg: &KnowledgeGraph,
    observations: &[(Bundle, Feedback)],
    noise: &NoiseConfig,
) -> Result<BeliefState> {
    belief.check_graph(kg)?;
    observations
        .iter()
        .try_fold(belief.clone(), |b, (bundle, y)| update(&b, kg, bundle, y, noise))
}
