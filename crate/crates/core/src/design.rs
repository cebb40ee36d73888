//! Choosing which products to show next.
//!
//! Every size-`n` bundle is scored by its expected information gain: the
//! KL divergence from the current belief to the posterior each outcome would
//! produce, averaged over the predictive distribution of outcomes. The
//! bundle with the highest score wins; ties go to the bundle that comes
//! first in canonical (lexicographic) order.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::inference::{outcome_probs, BeliefState, Feedback, NoiseConfig};
use crate::taxonomy::{KnowledgeGraph, ProductId};

pub const DEFAULT_MAX_CANDIDATES: usize = 100_000;

/// A set of distinct products shown in one turn, kept sorted by id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bundle {
    products: Vec<ProductId>,
}

impl Bundle {
    pub fn new<I, P>(products: I) -> Result<Self>
    where
        I: IntoIterator<Item = P>,
        P: Into<ProductId>,
    {
        let mut products: Vec<ProductId> = products.into_iter().map(Into::into).collect();
        if products.is_empty() {
            return Err(Error::EmptyBundle);
        }
        products.sort();
        if let Some(w) = products.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateInBundle(w[0].to_string()));
        }
        Ok(Self { products })
    }

    pub fn products(&self) -> &[ProductId] {
        &self.products
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn contains(&self, product: &str) -> bool {
        self.products.iter().any(|p| p.as_str() == product)
    }

    /// Feedback outcomes for this bundle: a click on each product, then no-click.
    pub fn outcomes(&self) -> impl Iterator<Item = Feedback> + '_ {
        self.products
            .iter()
            .cloned()
            .map(Feedback::Click)
            .chain(core::iter::once(Feedback::NoClick))
    }

    pub(crate) fn resolve(&self, kg: &KnowledgeGraph) -> Result<Vec<usize>> {
        self.products.iter().map(|p| kg.product_idx(p.as_str())).collect()
    }
}

impl fmt::Display for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, p) in self.products.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(p.as_str())?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigReport {
    pub bundle: Bundle,
    /// Expected information gain in nats.
    pub eig: f64,
    /// Predictive probability of each outcome, in [`Bundle::outcomes`] order.
    pub predictive: Vec<(Feedback, f64)>,
}

/// The winning bundle plus the full table, sorted by descending gain.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub bundle: Bundle,
    pub table: Vec<EigReport>,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All size-`n` bundles in canonical order. Errors instead of sampling when
/// there are more than `max_candidates`.
pub fn enumerate_bundles(kg: &KnowledgeGraph, n: usize, max_candidates: usize) -> Result<Vec<Bundle>> {
    let total = kg.products().len();
    if n == 0 || n > total {
        return Err(Error::BundleSizeOutOfRange { size: n, max: total });
    }
    let count = binomial(total, n);
    if count > max_candidates as u128 {
        return Err(Error::TooManyCandidates {
            count,
            cap: max_candidates,
        });
    }

    let mut ids: Vec<&ProductId> = kg.products().iter().map(|p| &p.id).collect();
    ids.sort();

    let mut out = Vec::with_capacity(count as usize);
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        out.push(Bundle {
            products: pick.iter().map(|&i| ids[i].clone()).collect(),
        });
        // advance to the next combination in lexicographic order
        let Some(slot) = (0..n).rev().find(|&s| pick[s] < total - n + s) else {
            break;
        };
        pick[slot] += 1;
        for s in slot + 1..n {
            pick[s] = pick[s - 1] + 1;
        }
    }
    Ok(out)
}

/// `KL(p ‖ q)` in nats, with `0·ln(0/q) = 0`.
pub fn kl_divergence(p: &BeliefState, q: &BeliefState) -> Result<f64> {
    if p.kg_id() != q.kg_id() || p.node_ids() != q.node_ids() {
        return Err(Error::NodeSetMismatch);
    }
    let mut kl = 0.0;
    for ((node, &lp), &lq) in p.node_ids().iter().zip(p.log_masses()).zip(q.log_masses()) {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        if lq == f64::NEG_INFINITY {
            return Err(Error::SupportViolation(node.to_string()));
        }
        kl += libm::exp(lp) * (lp - lq);
    }
    Ok(kl.max(0.0))
}

// [outcome][node]
struct LikelihoodTable {
    rows: Vec<Vec<f64>>,
}

impl LikelihoodTable {
    fn build(kg: &KnowledgeGraph, bundle: &Bundle, noise: &NoiseConfig) -> Result<Self> {
        let idx = bundle.resolve(kg)?;
        let per_node: Vec<Vec<f64>> = (0..kg.nodes().len())
            .map(|n| outcome_probs(kg, n, &idx, noise))
            .collect();
        let rows = (0..=bundle.len())
            .map(|k| per_node.iter().map(|probs| probs[k]).collect())
            .collect();
        Ok(Self { rows })
    }

    fn predictive(&self, masses: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(masses).map(|(l, m)| l * m).sum())
            .collect()
    }
}

/// Predictive distribution of feedback on `bundle` under `belief`.
pub fn predictive(
    belief: &BeliefState,
    kg: &KnowledgeGraph,
    bundle: &Bundle,
    noise: &NoiseConfig,
) -> Result<Vec<(Feedback, f64)>> {
    belief.check_graph(kg)?;
    let table = LikelihoodTable::build(kg, bundle, noise)?;
    Ok(bundle.outcomes().zip(table.predictive(&belief.masses())).collect())
}

pub fn expected_information_gain(
    belief: &BeliefState,
    kg: &KnowledgeGraph,
    bundle: &Bundle,
    noise: &NoiseConfig,
) -> Result<EigReport> {
    belief.check_graph(kg)?;
    let table = LikelihoodTable::build(kg, bundle, noise)?;
    eig_from_table(belief, bundle, &table)
}

fn eig_from_table(belief: &BeliefState, bundle: &Bundle, table: &LikelihoodTable) -> Result<EigReport> {
    let pred = table.predictive(&belief.masses());
    let mut eig = 0.0;
    for (row, &py) in table.rows.iter().zip(&pred) {
        let posterior = belief.reweighted(row.iter().map(|&l| libm::log(l)))?;
        eig += py * kl_divergence(&posterior, belief)?;
    }
    Ok(EigReport {
        bundle: bundle.clone(),
        eig: eig.max(0.0),
        predictive: bundle.outcomes().zip(pred).collect(),
    })
}

/// Gains closer than this to a group's leader count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Scores every size-`n` bundle and returns the argmax with the full table.
/// Tied bundles (see [`TIE_TOLERANCE`]) are listed in canonical order.
pub fn select_bundle(
    belief: &BeliefState,
    kg: &KnowledgeGraph,
    n: usize,
    noise: &NoiseConfig,
    max_candidates: usize,
) -> Result<Selection> {
    belief.check_graph(kg)?;
    let mut table = enumerate_bundles(kg, n, max_candidates)?
        .into_iter()
        .map(|b| {
            let lik = LikelihoodTable::build(kg, &b, noise)?;
            eig_from_table(belief, &b, &lik)
        })
        .collect::<Result<Vec<_>>>()?;
    table.sort_by(|a, b| b.eig.total_cmp(&a.eig));
    // Mirror-image bundles can differ in the last bits; regroup near-equal
    // gains and order each group canonically so row 0 is the tie winner.
    let mut start = 0;
    while start < table.len() {
        let lead = table[start].eig;
        let end = start + table[start..].iter().take_while(|r| lead - r.eig <= TIE_TOLERANCE).count();
        table[start..end].sort_by(|a, b| a.bundle.cmp(&b.bundle));
        start = end;
    }
    Ok(Selection {
        bundle: table[0].bundle.clone(),
        table,
    })
}
