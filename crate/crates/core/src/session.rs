//! One learning session for one unknown word.
//!
//! A session alternates between showing a bundle and absorbing the user's
//! feedback. It ends `Converged` once a single node holds at least the
//! configured share of the belief, or `Exhausted` after `max_steps` answered
//! bundles. Both end states are final.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::design::{enumerate_bundles, select_bundle, Bundle, EigReport, DEFAULT_MAX_CANDIDATES};
use crate::error::{Error, Result};
use crate::inference::{prior, update, BeliefState, Feedback, NoiseConfig};
use crate::rng;
use crate::taxonomy::{KnowledgeGraph, NodeId, OdConfig};

/// How the next bundle is picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Maximize expected information gain.
    Eig,
    /// Uniform over all bundles; step `k` uses stream `k` of the seeded generator.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    pub bundle_size: usize,
    pub noise: NoiseConfig,
    pub convergence_threshold: f64,
    pub max_steps: usize,
    pub policy: Policy,
    pub od: OdConfig,
    pub max_candidates: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            bundle_size: 2,
            noise: NoiseConfig::default(),
            convergence_threshold: 0.95,
            max_steps: 20,
            policy: Policy::Eig,
            od: OdConfig::default(),
            max_candidates: DEFAULT_MAX_CANDIDATES,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.od.validate()?;
        if self.bundle_size == 0 {
            return Err(Error::InvalidConfig("bundle_size must be at least 1"));
        }
        // above one half, a converged belief has a unique argmax
        if !(self.convergence_threshold > 0.5 && self.convergence_threshold <= 1.0) {
            return Err(Error::InvalidConfig("convergence_threshold must lie in (0.5, 1]"));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1"));
        }
        if self.max_candidates == 0 {
            return Err(Error::InvalidConfig("max_candidates must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Active,
    Converged(NodeId),
    Exhausted,
}

impl Status {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Status::Active)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub index: usize,
    pub bundle: Bundle,
    /// `None` while the bundle awaits an answer.
    pub feedback: Option<Feedback>,
    /// Belief after absorbing `feedback`; `None` while pending.
    pub belief: Option<BeliefState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    session_id: String,
    kg_id: String,
    query: String,
    config: SessionConfig,
    prior: BeliefState,
    steps: Vec<Step>,
    status: Status,
}

impl SessionTrace {
    /// Builds the prior and, unless it is already concentrated enough,
    /// opens the first pending step.
    pub fn start(
        kg: &KnowledgeGraph,
        session_id: impl Into<String>,
        query: impl Into<String>,
        config: SessionConfig,
    ) -> Result<Self> {
        let mut trace = Self::empty(kg, session_id.into(), query.into(), config)?;
        if !trace.status.is_terminal() {
            let step = trace.open_step(kg)?;
            trace.steps.push(step);
        }
        Ok(trace)
    }

    /// Rebuilds a session from its recorded steps, recomputing every belief
    /// from the prior. Only the last step may be unanswered. If the record
    /// ends on an answered step of a still-active session, the next pending
    /// step is opened by the policy; the flag reports whether that happened.
    pub fn replay(
        kg: &KnowledgeGraph,
        session_id: impl Into<String>,
        query: impl Into<String>,
        config: SessionConfig,
        recorded: &[(Bundle, Option<Feedback>)],
    ) -> Result<(Self, bool)> {
        let mut trace = Self::empty(kg, session_id.into(), query.into(), config)?;
        for (i, (bundle, feedback)) in recorded.iter().enumerate() {
            if trace.status.is_terminal() {
                return Err(Error::InvalidReplay("step recorded after the session ended"));
            }
            if bundle.len() != config.bundle_size {
                return Err(Error::InvalidReplay("bundle size differs from the session's"));
            }
            bundle.resolve(kg)?;
            trace.steps.push(Step {
                index: i,
                bundle: bundle.clone(),
                feedback: None,
                belief: None,
            });
            match feedback {
                Some(y) => trace.submit_feedback_inner(kg, y.clone(), false)?,
                None if i + 1 != recorded.len() => {
                    return Err(Error::InvalidReplay("unanswered step before the last"));
                }
                None => {}
            }
        }
        let opened = !trace.status.is_terminal() && trace.pending_bundle().is_none();
        if opened {
            let step = trace.open_step(kg)?;
            trace.steps.push(step);
        }
        Ok((trace, opened))
    }

    fn empty(kg: &KnowledgeGraph, session_id: String, query: String, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        if query.is_empty() {
            return Err(Error::InvalidConfig("query word must not be empty"));
        }
        if config.bundle_size > kg.products().len() {
            return Err(Error::BundleSizeOutOfRange {
                size: config.bundle_size,
                max: kg.products().len(),
            });
        }
        let prior = prior(kg, &config.od);
        let status = classify(&prior, &config, 0);
        Ok(Self {
            session_id,
            kg_id: kg.id().to_string(),
            query,
            config,
            prior,
            steps: Vec::new(),
            status,
        })
    }

    /// Absorbs the answer to the pending bundle. On error the trace is unchanged.
    pub fn submit_feedback(&mut self, kg: &KnowledgeGraph, y: Feedback) -> Result<&Status> {
        self.submit_feedback_inner(kg, y, true)?;
        Ok(&self.status)
    }

    fn submit_feedback_inner(&mut self, kg: &KnowledgeGraph, y: Feedback, open_next: bool) -> Result<()> {
        if kg.id() != self.kg_id {
            return Err(Error::GraphMismatch {
                belief: self.kg_id.clone(),
                graph: kg.id().to_string(),
            });
        }
        if self.status.is_terminal() {
            return Err(Error::NotAwaitingFeedback);
        }
        let bundle = self.pending_bundle().ok_or(Error::NotAwaitingFeedback)?.clone();
        let belief = update(self.belief(), kg, &bundle, &y, &self.config.noise)?;
        let status = classify(&belief, &self.config, self.steps.len());

        let last = self.steps.len() - 1;
        let committed = {
            let mut next = self.clone();
            next.steps[last].feedback = Some(y);
            next.steps[last].belief = Some(belief);
            next.status = status;
            if open_next && !next.status.is_terminal() {
                let step = next.open_step(kg)?;
                next.steps.push(step);
            }
            next
        };
        *self = committed;
        Ok(())
    }

    fn open_step(&self, kg: &KnowledgeGraph) -> Result<Step> {
        let index = self.steps.len();
        let n = self.config.bundle_size;
        let bundle = match self.config.policy {
            Policy::Eig => {
                select_bundle(self.belief(), kg, n, &self.config.noise, self.config.max_candidates)?.bundle
            }
            Policy::Random { seed } => {
                let mut all = enumerate_bundles(kg, n, self.config.max_candidates)?;
                let mut g = rng::stream(seed ^ rng::POLICY_SALT, index as u64);
                all.swap_remove(rng::index(&mut g, all.len()))
            }
        };
        Ok(Step {
            index,
            bundle,
            feedback: None,
            belief: None,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn kg_id(&self) -> &str {
        &self.kg_id
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn prior(&self) -> &BeliefState {
        &self.prior
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    /// Belief after the last answered step (the prior before any answer).
    pub fn belief(&self) -> &BeliefState {
        self.steps
            .iter()
            .rev()
            .find_map(|s| s.belief.as_ref())
            .unwrap_or(&self.prior)
    }

    pub fn pending_bundle(&self) -> Option<&Bundle> {
        self.steps
            .last()
            .filter(|s| s.feedback.is_none())
            .map(|s| &s.bundle)
    }

    /// Number of answered steps.
    pub fn answered(&self) -> usize {
        self.steps.iter().filter(|s| s.feedback.is_some()).count()
    }

    /// Answered `(bundle, feedback)` pairs in order.
    pub fn observations(&self) -> Vec<(Bundle, Feedback)> {
        self.steps
            .iter()
            .filter_map(|s| s.feedback.clone().map(|y| (s.bundle.clone(), y)))
            .collect()
    }

    /// The learned meaning, present only once the session has converged.
    pub fn lexicon_entry(&self) -> Option<(&NodeId, f64)> {
        match &self.status {
            Status::Converged(node) => Some((node, self.belief().mass(node.as_str()).unwrap_or(0.0))),
            _ => None,
        }
    }

    /// Full gain table for the current belief.
    pub fn eig_table(&self, kg: &KnowledgeGraph) -> Result<Vec<EigReport>> {
        Ok(select_bundle(
            self.belief(),
            kg,
            self.config.bundle_size,
            &self.config.noise,
            self.config.max_candidates,
        )?
        .table)
    }
}

fn classify(belief: &BeliefState, config: &SessionConfig, answered: usize) -> Status {
    let (node, mass) = belief.argmax();
    if mass >= config.convergence_threshold {
        Status::Converged(node.clone())
    } else if answered >= config.max_steps {
        Status::Exhausted
    } else {
        Status::Active
    }
}
