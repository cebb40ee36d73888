//! Synthetic users and batch trials.
//!
//! A [`SimulatedUser`] knows the true meaning of the query word and answers
//! bundles by sampling from the same outcome model the engine assumes
//! (optionally with a different noise level). Trials are fully determined by
//! their seed; policy comparisons run both policies on the same seeds.

use alloc::string::String;
use alloc::vec::Vec;

use crate::design::Bundle;
use crate::error::{Error, Result};
use crate::inference::{outcome_probs, Feedback, NoiseConfig};
use crate::rng;
use crate::session::{Policy, SessionConfig, SessionTrace, Status};
use crate::taxonomy::{KnowledgeGraph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyKind {
    Eig,
    Random,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Eig => "eig",
            PolicyKind::Random => "random",
        }
    }

    fn with_seed(self, seed: u64) -> Policy {
        match self {
            PolicyKind::Eig => Policy::Eig,
            PolicyKind::Random => Policy::Random { seed },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedUser {
    pub true_node: NodeId,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl SimulatedUser {
    pub fn new(kg: &KnowledgeGraph, true_node: &str, noise: NoiseConfig, seed: u64) -> Result<Self> {
        kg.node_idx(true_node)?;
        noise.validate()?;
        Ok(Self {
            true_node: NodeId::from(true_node),
            noise,
            seed,
        })
    }

    /// Samples the user's answer to `bundle`. The draw depends only on the
    /// seed and `call_index`.
    pub fn simulate_click(&self, kg: &KnowledgeGraph, bundle: &Bundle, call_index: u64) -> Result<Feedback> {
        let node = kg.node_idx(self.true_node.as_str())?;
        let idx = bundle.resolve(kg)?;
        let probs = outcome_probs(kg, node, &idx, &self.noise);
        let k = rng::categorical(&mut rng::stream(self.seed, call_index), &probs);
        Ok(bundle.outcomes().nth(k).unwrap_or(Feedback::NoClick))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub policy: PolicyKind,
    /// Answered bundles before the session ended.
    pub steps: usize,
    pub status: Status,
    pub true_node_mass: f64,
    pub trace: SessionTrace,
}

/// A trial without its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub policy: PolicyKind,
    pub steps: usize,
    pub status: Status,
    pub true_node_mass: f64,
}

impl From<&TrialResult> for TrialOutcome {
    fn from(r: &TrialResult) -> Self {
        Self {
            seed: r.seed,
            policy: r.policy,
            steps: r.steps,
            status: r.status.clone(),
            true_node_mass: r.true_node_mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub trials: usize,
    pub mean_steps: f64,
    pub median_steps: f64,
    /// Share of trials that ended converged, on any node.
    pub convergence_rate: f64,
    /// Share of trials that converged on the true node.
    pub correct_rate: f64,
    pub mean_true_node_mass: f64,
    pub outcomes: Vec<TrialOutcome>,
}

impl PolicySummary {
    fn from_outcomes(policy: PolicyKind, outcomes: Vec<TrialOutcome>, true_node: &NodeId) -> Self {
        let n = outcomes.len() as f64;
        let mut steps: Vec<usize> = outcomes.iter().map(|o| o.steps).collect();
        steps.sort_unstable();
        let mid = steps.len() / 2;
        let median_steps = if steps.len() % 2 == 1 {
            steps[mid] as f64
        } else {
            (steps[mid - 1] + steps[mid]) as f64 / 2.0
        };
        let converged = outcomes
            .iter()
            .filter(|o| matches!(o.status, Status::Converged(_)))
            .count();
        let correct = outcomes
            .iter()
            .filter(|o| matches!(&o.status, Status::Converged(node) if node == true_node))
            .count();
        Self {
            policy,
            trials: outcomes.len(),
            mean_steps: steps.iter().sum::<usize>() as f64 / n,
            median_steps,
            convergence_rate: converged as f64 / n,
            correct_rate: correct as f64 / n,
            mean_true_node_mass: outcomes.iter().map(|o| o.true_node_mass).sum::<f64>() / n,
            outcomes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub eig: PolicySummary,
    pub random: PolicySummary,
}

/// A repeatable experiment: one graph, one word, one true meaning.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    kg: &'a KnowledgeGraph,
    query: String,
    true_node: NodeId,
    config: SessionConfig,
    user_noise: Option<NoiseConfig>,
}

impl<'a> Simulation<'a> {
    /// The policy in `config` is ignored; each run names its own.
    pub fn new(
        kg: &'a KnowledgeGraph,
        query: impl Into<String>,
        true_node: &str,
        config: SessionConfig,
    ) -> Result<Self> {
        kg.node_idx(true_node)?;
        config.validate()?;
        Ok(Self {
            kg,
            query: query.into(),
            true_node: NodeId::from(true_node),
            config,
            user_noise: None,
        })
    }

    /// Lets the simulated user be noisier or cleaner than the engine assumes.
    pub fn with_user_noise(mut self, noise: NoiseConfig) -> Result<Self> {
        noise.validate()?;
        self.user_noise = Some(noise);
        Ok(self)
    }

    pub fn run_trial(&self, policy: PolicyKind, seed: u64) -> Result<TrialResult> {
        let config = SessionConfig {
            policy: policy.with_seed(seed),
            ..self.config
        };
        let user = SimulatedUser {
            true_node: self.true_node.clone(),
            noise: self.user_noise.unwrap_or(config.noise),
            seed,
        };
        let session_id = alloc::format!("{}-{seed}", policy.name());
        let mut trace = SessionTrace::start(self.kg, session_id, self.query.clone(), config)?;
        let mut calls = 0;
        while let Some(bundle) = trace.pending_bundle() {
            let y = user.simulate_click(self.kg, bundle, calls)?;
            calls += 1;
            trace.submit_feedback(self.kg, y)?;
        }
        if !trace.status().is_terminal() {
            return Err(Error::InvalidReplay("session stopped without a pending step"));
        }
        Ok(TrialResult {
            seed,
            policy,
            steps: trace.answered(),
            status: trace.status().clone(),
            true_node_mass: trace.belief().mass(self.true_node.as_str()).unwrap_or(0.0),
            trace,
        })
    }

    /// Runs trials with seeds `base_seed, base_seed + 1, …`.
    pub fn summarize(&self, policy: PolicyKind, n_trials: usize, base_seed: u64) -> Result<PolicySummary> {
        if n_trials == 0 {
            return Err(Error::InvalidConfig("n_trials must be at least 1"));
        }
        let outcomes = (0..n_trials as u64)
            .map(|i| {
                self.run_trial(policy, base_seed.wrapping_add(i))
                    .map(|r| TrialOutcome::from(&r))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PolicySummary::from_outcomes(policy, outcomes, &self.true_node))
    }

    /// Both policies over the same seeds.
    pub fn compare_policies(&self, n_trials: usize, base_seed: u64) -> Result<Comparison> {
        Ok(Comparison {
            eig: self.summarize(PolicyKind::Eig, n_trials, base_seed)?,
            random: self.summarize(PolicyKind::Random, n_trials, base_seed)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{Node, Product};
    use alloc::vec;

    fn kg() -> KnowledgeGraph {
        KnowledgeGraph::new(
            "t",
            vec![
                Product::new("a", "a", ["f"]),
                Product::new("b", "b", ["f"]),
                Product::new("c", "c", ["f"]),
            ],
            vec![
                Node::new("root", "root", None, ["r"], ["a", "b", "c"]),
                Node::new("x", "x", Some("root"), ["x"], ["a"]),
                Node::new("yz", "yz", Some("root"), ["y"], ["b", "c"]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn near_noiseless_user_clicks_its_only_product() {
        let g = kg();
        let noise = NoiseConfig::with_epsilon(1e-9).unwrap();
        let user = SimulatedUser::new(&g, "x", noise, 3).unwrap();
        let b = Bundle::new(["a", "b"]).unwrap();
        for call in 0..200 {
            assert_eq!(user.simulate_click(&g, &b, call).unwrap(), Feedback::click("a"));
        }
        let disjoint = Bundle::new(["b", "c"]).unwrap();
        for call in 0..200 {
            assert_eq!(user.simulate_click(&g, &disjoint, call).unwrap(), Feedback::NoClick);
        }
    }

    #[test]
    fn single_trial_summary_matches_trial() {
        let g = kg();
        let sim = Simulation::new(&g, "w", "x", SessionConfig::default()).unwrap();
        let trial = sim.run_trial(PolicyKind::Eig, 11).unwrap();
        let summary = sim.summarize(PolicyKind::Eig, 1, 11).unwrap();
        assert_eq!(summary.mean_steps, trial.steps as f64);
        assert_eq!(summary.median_steps, trial.steps as f64);
        assert_eq!(summary.mean_true_node_mass, trial.true_node_mass);
        assert_eq!(summary.outcomes, vec![TrialOutcome::from(&trial)]);
        assert!(sim.summarize(PolicyKind::Eig, 0, 1).is_err());
    }

    #[test]
    fn trials_are_deterministic() {
        let g = kg();
        let sim = Simulation::new(&g, "w", "yz", SessionConfig::default()).unwrap();
        assert_eq!(sim.compare_policies(20, 5).unwrap(), sim.compare_policies(20, 5).unwrap());
        assert!(Simulation::new(&g, "w", "nope", SessionConfig::default()).is_err());
    }
}
