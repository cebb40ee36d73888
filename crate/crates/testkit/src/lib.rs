//! Test support: the figure2 toy world, random taxonomies, and brute-force
//! oracles that recompute the engine's quantities in plain linear space
//! straight from the graph's public data.

use std::collections::BTreeSet;

use lexprobe_core::{Bundle, Feedback, KnowledgeGraph, Node, NoiseConfig, Product};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Path of the shipped fixture, relative to the workspace root.
pub const FIGURE2_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/figure2.json");

/// The 4-product, 5-node fashion toy world.
pub fn figure2() -> KnowledgeGraph {
    KnowledgeGraph::new(
        "figure2",
        vec![
            Product::new("P1", "Black peplum dress", ["dress", "peplum", "black", "fitted"]),
            Product::new("P2", "Floral ruffle dress", ["dress", "ruffle", "floral"]),
            Product::new("P3", "White running sneaker", ["shoe", "sneaker", "running", "white"]),
            Product::new("P4", "Leather ankle boot", ["shoe", "boot", "leather"]),
        ],
        vec![
            Node::new("fashion", "Fashion", None, ["apparel", "fashion"], ["P1", "P2", "P3", "P4"]),
            Node::new(
                "dresses",
                "Dresses",
                Some("fashion"),
                ["apparel", "dress", "skirt", "feminine"],
                ["P1", "P2"],
            ),
            Node::new("shoes", "Shoes", Some("fashion"), ["footwear", "sole", "laces"], ["P3", "P4"]),
            Node::new(
                "peplum",
                "Peplum dresses",
                Some("dresses"),
                ["apparel", "dress", "skirt", "feminine", "peplum"],
                ["P1"],
            ),
            Node::new(
                "sneakers",
                "Sneakers",
                Some("shoes"),
                ["footwear", "sole", "laces", "rubber", "sporty"],
                ["P3"],
            ),
        ],
    )
    .expect("figure2 is valid")
}

const VOCAB: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

fn random_features(rng: &mut impl Rng) -> Vec<&'static str> {
    let k = rng.random_range(1..=4);
    let mut picked: Vec<&str> = VOCAB.choose_multiple(rng, k).copied().collect();
    picked.sort();
    picked
}

/// A random valid taxonomy with 1..=`max_nodes` nodes and 1..=`max_products` products.
pub fn random_kg(seed: u64, max_nodes: usize, max_products: usize) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_products = rng.random_range(1..=max_products);
    let n_nodes = rng.random_range(1..=max_nodes);
    let pids: Vec<String> = (0..n_products).map(|i| format!("p{i}")).collect();
    let products = pids
        .iter()
        .map(|id| {
            let f = random_features(&mut rng);
            Product::new(id.as_str(), id.as_str(), f)
        })
        .collect();

    let mut exts: Vec<Vec<String>> = vec![pids.clone()];
    let mut nodes = vec![Node::new(
        "n0",
        "n0",
        None,
        random_features(&mut rng),
        pids.iter().map(String::as_str),
    )];
    for i in 1..n_nodes {
        let parent = rng.random_range(0..i);
        let pool = exts[parent].clone();
        let k = rng.random_range(1..=pool.len());
        let ext: Vec<String> = pool.choose_multiple(&mut rng, k).cloned().collect();
        let id = format!("n{i}");
        let parent_id = format!("n{parent}");
        nodes.push(Node::new(
            id.as_str(),
            id.as_str(),
            Some(parent_id.as_str()),
            random_features(&mut rng),
            ext.iter().map(String::as_str),
        ));
        exts.push(ext);
    }
    KnowledgeGraph::new(format!("rand-{seed}"), products, nodes).expect("generated graph is valid")
}

/// A random bundle of `kg`'s products with 1..=`max_len` entries.
pub fn random_bundle(rng: &mut impl Rng, kg: &KnowledgeGraph, max_len: usize) -> Bundle {
    let ids: Vec<&str> = kg.products().iter().map(|p| p.id.as_str()).collect();
    let k = rng.random_range(1..=max_len.min(ids.len()));
    Bundle::new(ids.choose_multiple(rng, k).copied()).unwrap()
}

/// A random valid answer to `bundle`.
pub fn random_feedback(rng: &mut impl Rng, bundle: &Bundle) -> Feedback {
    let k = rng.random_range(0..=bundle.len());
    bundle.outcomes().nth(k).unwrap()
}

pub fn random_noise(rng: &mut impl Rng) -> NoiseConfig {
    NoiseConfig::new(rng.random_range(0.001..0.5), rng.random_range(0.001..0.5)).unwrap()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.iter().filter(|x| b.contains(*x)).count() as f64;
    let union = a.iter().chain(b.iter()).collect::<BTreeSet<_>>().len() as f64;
    1.0 - inter / union
}

/// Prior recomputed from the node list alone (siblings found by scanning parents).
pub fn oracle_prior(kg: &KnowledgeGraph, od_min: f64) -> Vec<f64> {
    let nodes = kg.nodes();
    let scores: Vec<f64> = nodes
        .iter()
        .map(|n| {
            let raw = match &n.parent {
                None => od_min,
                Some(parent) => {
                    let sibs: Vec<&Node> = nodes
                        .iter()
                        .filter(|s| s.parent.as_ref() == Some(parent) && s.id != n.id)
                        .collect();
                    if sibs.is_empty() {
                        let p = nodes.iter().find(|p| &p.id == parent).unwrap();
                        jaccard(&n.features, &p.features)
                    } else {
                        sibs.iter().map(|s| jaccard(&n.features, &s.features)).sum::<f64>()
                            / sibs.len() as f64
                    }
                }
            };
            raw.max(od_min)
        })
        .collect();
    let total: f64 = scores.iter().sum();
    scores.iter().map(|s| s / total).collect()
}

/// `P(y | node, bundle)` evaluated directly from the extension sets.
pub fn oracle_likelihood(kg: &KnowledgeGraph, node: &Node, bundle: &Bundle, y: &Feedback, noise: &NoiseConfig) -> f64 {
    let n = kg.products().len() as f64;
    let intent = |x: &str| {
        let inside = node.extension.iter().any(|p| p.as_str() == x);
        let focused = if inside { 1.0 / node.extension.len() as f64 } else { 0.0 };
        (1.0 - noise.epsilon) * focused + noise.epsilon / n
    };
    match y {
        Feedback::Click(x) => (1.0 - noise.epsilon_noclick) * intent(x.as_str()),
        Feedback::NoClick => {
            let shown: f64 = bundle.products().iter().map(|p| intent(p.as_str())).sum();
            noise.epsilon_noclick + (1.0 - noise.epsilon_noclick) * (1.0 - shown)
        }
    }
}

/// Posterior by joint enumeration: `prior · Π likelihoods`, normalized once.
pub fn oracle_posterior(
    kg: &KnowledgeGraph,
    prior: &[f64],
    observations: &[(Bundle, Feedback)],
    noise: &NoiseConfig,
) -> Vec<f64> {
    let joint: Vec<f64> = kg
        .nodes()
        .iter()
        .zip(prior)
        .map(|(node, p)| {
            observations
                .iter()
                .map(|(b, y)| oracle_likelihood(kg, node, b, y, noise))
                .product::<f64>()
                * p
        })
        .collect();
    let z: f64 = joint.iter().sum();
    joint.iter().map(|j| j / z).collect()
}

/// Joint table `P(node) · P(y | node)`, rows = outcomes in bundle order then no-click.
pub fn oracle_joint(kg: &KnowledgeGraph, prior: &[f64], bundle: &Bundle, noise: &NoiseConfig) -> Vec<Vec<f64>> {
    bundle
        .outcomes()
        .map(|y| {
            kg.nodes()
                .iter()
                .zip(prior)
                .map(|(node, p)| p * oracle_likelihood(kg, node, bundle, &y, noise))
                .collect()
        })
        .collect()
}

/// Mutual information `I(node; y)` from the joint table.
pub fn oracle_mutual_information(kg: &KnowledgeGraph, prior: &[f64], bundle: &Bundle, noise: &NoiseConfig) -> f64 {
    let joint = oracle_joint(kg, prior, bundle, noise);
    let mut mi = 0.0;
    for row in &joint {
        let py: f64 = row.iter().sum();
        for (pxy, px) in row.iter().zip(prior) {
            if *pxy > 0.0 {
                mi += pxy * (pxy / (px * py)).ln();
            }
        }
    }
    mi
}

/// Expected KL recomputed from the joint table: `Σ_y p(y) Σ_n post ln(post/prior)`.
pub fn oracle_expected_kl(kg: &KnowledgeGraph, prior: &[f64], bundle: &Bundle, noise: &NoiseConfig) -> f64 {
    let joint = oracle_joint(kg, prior, bundle, noise);
    joint
        .iter()
        .map(|row| {
            let py: f64 = row.iter().sum();
            py * row
                .iter()
                .zip(prior)
                .filter(|(j, _)| **j > 0.0)
                .map(|(j, p)| {
                    let post = j / py;
                    post * (post / p).ln()
                })
                .sum::<f64>()
        })
        .sum()
}

pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|x| -x * x.ln()).sum()
}

/// Upper critical value of the chi-square distribution.
pub fn chi_square_critical(df: usize, alpha: f64) -> f64 {
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - alpha)
}

/// Pearson statistic for observed counts against expected probabilities.
pub fn chi_square_statistic(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
