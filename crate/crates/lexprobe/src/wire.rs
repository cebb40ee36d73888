//! JSON shapes shared by the HTTP API, the session log and the CLI.

use std::collections::BTreeMap;

use lexprobe_core::{
    BeliefState, Bundle, EigReport, Feedback, NoiseConfig, OdConfig, Policy, SessionConfig, SessionTrace, Status,
};
use serde::{Deserialize, Serialize};

/// Outcome key used for "clicked nothing" in predictive tables.
pub const NOCLICK_KEY: &str = "__noclick__";

/// Node id → probability, in linear space.
pub type BeliefJson = BTreeMap<String, f64>;

pub fn belief_json(belief: &BeliefState) -> BeliefJson {
    belief.iter().map(|(id, p)| (id.to_string(), p)).collect()
}

pub fn bundle_json(bundle: &Bundle) -> Vec<String> {
    bundle.products().iter().map(ToString::to_string).collect()
}

pub fn parse_bundle(ids: &[String]) -> lexprobe_core::Result<Bundle> {
    Bundle::new(ids.iter().map(String::as_str))
}

pub fn outcome_key(y: &Feedback) -> &str {
    match y {
        Feedback::Click(p) => p.as_str(),
        Feedback::NoClick => NOCLICK_KEY,
    }
}

/// The answer to one bundle; `clicked: null` means no click.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackJson {
    pub clicked: Option<String>,
}

impl From<&Feedback> for FeedbackJson {
    fn from(y: &Feedback) -> Self {
        Self {
            clicked: y.clicked().map(ToString::to_string),
        }
    }
}

impl From<FeedbackJson> for Feedback {
    fn from(f: FeedbackJson) -> Self {
        match f.clicked {
            Some(p) => Feedback::click(p),
            None => Feedback::NoClick,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigRow {
    pub bundle: Vec<String>,
    pub eig: f64,
    pub predictive: BTreeMap<String, f64>,
}

impl From<&EigReport> for EigRow {
    fn from(r: &EigReport) -> Self {
        Self {
            bundle: bundle_json(&r.bundle),
            eig: r.eig,
            predictive: r
                .predictive
                .iter()
                .map(|(y, p)| (outcome_key(y).to_string(), *p))
                .collect(),
        }
    }
}

pub fn eig_rows(table: &[EigReport]) -> Vec<EigRow> {
    table.iter().map(EigRow::from).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    Eig,
    Random,
}

/// Flat, self-describing form of [`SessionConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigJson {
    pub bundle_size: usize,
    pub epsilon: f64,
    pub epsilon_noclick: f64,
    pub threshold: f64,
    pub max_steps: usize,
    pub policy: PolicyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub od_min: f64,
    pub max_candidates: usize,
}

impl From<&SessionConfig> for ConfigJson {
    fn from(c: &SessionConfig) -> Self {
        let (policy, seed) = match c.policy {
            Policy::Eig => (PolicyName::Eig, None),
            Policy::Random { seed } => (PolicyName::Random, Some(seed)),
        };
        Self {
            bundle_size: c.bundle_size,
            epsilon: c.noise.epsilon,
            epsilon_noclick: c.noise.epsilon_noclick,
            threshold: c.convergence_threshold,
            max_steps: c.max_steps,
            policy,
            seed,
            od_min: c.od.od_min,
            max_candidates: c.max_candidates,
        }
    }
}

impl TryFrom<&ConfigJson> for SessionConfig {
    type Error = lexprobe_core::Error;

    fn try_from(c: &ConfigJson) -> Result<Self, Self::Error> {
        let policy = match (c.policy, c.seed) {
            (PolicyName::Eig, None) => Policy::Eig,
            (PolicyName::Random, Some(seed)) => Policy::Random { seed },
            (PolicyName::Eig, Some(_)) => {
                return Err(lexprobe_core::Error::InvalidConfig("the eig policy takes no seed"))
            }
            (PolicyName::Random, None) => {
                return Err(lexprobe_core::Error::InvalidConfig("the random policy needs a seed"))
            }
        };
        let config = SessionConfig {
            bundle_size: c.bundle_size,
            noise: NoiseConfig {
                epsilon: c.epsilon,
                epsilon_noclick: c.epsilon_noclick,
            },
            convergence_threshold: c.threshold,
            max_steps: c.max_steps,
            policy,
            od: OdConfig { od_min: c.od_min },
            max_candidates: c.max_candidates,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusName {
    Active,
    Converged,
    Exhausted,
}

impl From<&Status> for StatusName {
    fn from(s: &Status) -> Self {
        match s {
            Status::Active => StatusName::Active,
            Status::Converged(_) => StatusName::Converged,
            Status::Exhausted => StatusName::Exhausted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntryJson {
    pub node: String,
    pub confidence: f64,
}

pub fn lexicon_entry_json(trace: &SessionTrace) -> Option<LexiconEntryJson> {
    trace.lexicon_entry().map(|(node, confidence)| LexiconEntryJson {
        node: node.to_string(),
        confidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepJson {
    pub index: usize,
    pub bundle: Vec<String>,
    /// Absent while the bundle is still waiting for an answer.
    pub feedback: Option<FeedbackJson>,
    pub belief: Option<BeliefJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceJson {
    pub session_id: String,
    pub kg: String,
    pub query: String,
    pub config: ConfigJson,
    pub status: StatusName,
    pub lexicon_entry: Option<LexiconEntryJson>,
    pub prior: BeliefJson,
    pub belief: BeliefJson,
    pub steps: Vec<StepJson>,
}

impl From<&SessionTrace> for TraceJson {
    fn from(t: &SessionTrace) -> Self {
        Self {
            session_id: t.session_id().to_string(),
            kg: t.kg_id().to_string(),
            query: t.query().to_string(),
            config: ConfigJson::from(t.config()),
            status: StatusName::from(t.status()),
            lexicon_entry: lexicon_entry_json(t),
            prior: belief_json(t.prior()),
            belief: belief_json(t.belief()),
            steps: t
                .steps()
                .iter()
                .map(|s| StepJson {
                    index: s.index,
                    bundle: bundle_json(&s.bundle),
                    feedback: s.feedback.as_ref().map(FeedbackJson::from),
                    belief: s.belief.as_ref().map(belief_json),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        for policy in [Policy::Eig, Policy::Random { seed: 9 }] {
            let c = SessionConfig {
                policy,
                ..SessionConfig::default()
            };
            let json = serde_json::to_string(&ConfigJson::from(&c)).unwrap();
            let back: ConfigJson = serde_json::from_str(&json).unwrap();
            assert_eq!(SessionConfig::try_from(&back).unwrap(), c);
        }
        let mut bad = ConfigJson::from(&SessionConfig::default());
        bad.seed = Some(1);
        assert!(SessionConfig::try_from(&bad).is_err());
        bad.seed = None;
        bad.threshold = 0.2;
        assert!(SessionConfig::try_from(&bad).is_err());
    }

    #[test]
    fn feedback_null_is_no_click() {
        let y: FeedbackJson = serde_json::from_str(r#"{"clicked": null}"#).unwrap();
        assert_eq!(Feedback::from(y), Feedback::NoClick);
        let y: FeedbackJson = serde_json::from_str(r#"{"clicked": "P4"}"#).unwrap();
        assert_eq!(Feedback::from(y), Feedback::click("P4"));
        assert_eq!(serde_json::to_string(&FeedbackJson::from(&Feedback::NoClick)).unwrap(), r#"{"clicked":null}"#);
    }
}
