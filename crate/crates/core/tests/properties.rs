use std::collections::BTreeSet;

use lexprobe_core::*;
use lexprobe_testkit::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn feature_set() -> impl Strategy<Value = BTreeSet<String>> {
    prop::collection::btree_set("[a-f]", 1..5)
}

/// Renames every node and product and shuffles both lists.
fn relabel(kg: &KnowledgeGraph, seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pmap = |p: &str| format!("prod-{p}");
    let nmap = |n: &str| format!("node-{n}");
    let mut products: Vec<Product> = kg
        .products()
        .iter()
        .map(|p| Product {
            id: ProductId::new(pmap(p.id.as_str())),
            ..p.clone()
        })
        .collect();
    let mut nodes: Vec<Node> = kg
        .nodes()
        .iter()
        .map(|n| Node {
            id: NodeId::new(nmap(n.id.as_str())),
            parent: n.parent.as_ref().map(|p| NodeId::new(nmap(p.as_str()))),
            extension: n.extension.iter().map(|p| ProductId::new(pmap(p.as_str()))).collect(),
            ..n.clone()
        })
        .collect();
    products.shuffle(&mut rng);
    nodes.shuffle(&mut rng);
    KnowledgeGraph::new(format!("{}-relabeled", kg.id()), products, nodes).unwrap()
}

fn relabel_bundle(b: &Bundle) -> Bundle {
    Bundle::new(b.products().iter().map(|p| format!("prod-{p}"))).unwrap()
}

fn random_obs(rng: &mut ChaCha8Rng, kg: &KnowledgeGraph, count: usize) -> Vec<(Bundle, Feedback)> {
    (0..count)
        .map(|_| {
            let b = random_bundle(rng, kg, 3);
            let y = random_feedback(rng, &b);
            (b, y)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn jaccard_is_a_metric(a in feature_set(), b in feature_set(), c in feature_set()) {
        let ab = jaccard_distance(&a, &b);
        prop_assert_eq!(ab, jaccard_distance(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab == 0.0, a == b);
        let ac = jaccard_distance(&a, &c);
        let cb = jaccard_distance(&c, &b);
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn od_is_label_and_order_invariant(seed in any::<u64>()) {
        let kg = random_kg(seed, 6, 5);
        let cfg = OdConfig::default();
        // rename feature tokens and shuffle node order
        let renamed: Vec<Node> = kg.nodes().iter().rev().map(|n| Node {
            features: n.features.iter().map(|f| format!("tok-{f}")).collect(),
            ..n.clone()
        }).collect();
        let other = KnowledgeGraph::new(kg.id(), kg.products().to_vec(), renamed).unwrap();
        let mut total = 0.0;
        for n in kg.nodes() {
            let a = ontological_distinctiveness(&kg, n.id.as_str(), &cfg).unwrap();
            let b = ontological_distinctiveness(&other, n.id.as_str(), &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-15);
            prop_assert!(a >= cfg.od_min && a <= 1.0);
            total += a;
        }
        prop_assert!(total > 0.0);
    }

    #[test]
    fn beliefs_stay_normalized(seed in any::<u64>()) {
        let kg = random_kg(seed, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = random_noise(&mut rng);
        let mut b = prior(&kg, &OdConfig::default());
        prop_assert!((b.masses().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (bundle, y) in random_obs(&mut rng, &kg, 6) {
            let before = b.clone();
            b = update(&b, &kg, &bundle, &y, &noise).unwrap();
            prop_assert!((b.masses().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(b.masses().iter().all(|&m| m > 0.0));
            let pred = predictive(&before, &kg, &bundle, &noise).unwrap();
            prop_assert!((pred.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_nonnegative_and_zero_iff_equal(seed in any::<u64>()) {
        let kg = random_kg(seed, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = random_noise(&mut rng);
        let p = prior(&kg, &OdConfig::default());
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let obs = random_obs(&mut rng, &kg, 2);
        let q = update_batch(&p, &kg, &obs, &noise).unwrap();
        let kl = kl_divergence(&q, &p).unwrap();
        prop_assert!(kl >= 0.0);
        if max_abs_diff(&q.masses(), &p.masses()) > 1e-6 {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn eig_is_mutual_information(seed in any::<u64>()) {
        let kg = random_kg(seed, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = random_noise(&mut rng);
        let belief = update_batch(&prior(&kg, &OdConfig::default()), &kg, &random_obs(&mut rng, &kg, 2), &noise).unwrap();
        let bundle = random_bundle(&mut rng, &kg, 3);
        let report = expected_information_gain(&belief, &kg, &bundle, &noise).unwrap();
        let mi = oracle_mutual_information(&kg, &belief.masses(), &bundle, &noise);
        prop_assert!((report.eig - mi).abs() < 1e-9, "eig {} mi {}", report.eig, mi);
        prop_assert!(report.eig >= 0.0);
        let pred: Vec<f64> = report.predictive.iter().map(|(_, p)| *p).collect();
        prop_assert!((pred.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let cap = entropy(&belief.masses()).min(entropy(&pred));
        prop_assert!(report.eig <= cap + 1e-9);
    }

    #[test]
    fn sequential_equals_batch_and_joint(seed in any::<u64>()) {
        let kg = random_kg(seed, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = random_noise(&mut rng);
        let p = prior(&kg, &OdConfig::default());
        let obs = random_obs(&mut rng, &kg, 2);
        let seq = update(&update(&p, &kg, &obs[0].0, &obs[0].1, &noise).unwrap(), &kg, &obs[1].0, &obs[1].1, &noise).unwrap();
        let batch = update_batch(&p, &kg, &obs, &noise).unwrap();
        let swapped = update_batch(&p, &kg, &[obs[1].clone(), obs[0].clone()], &noise).unwrap();
        let joint = oracle_posterior(&kg, &p.masses(), &obs, &noise);
        prop_assert!(max_abs_diff(&seq.masses(), &batch.masses()) < 1e-9);
        prop_assert!(max_abs_diff(&batch.masses(), &swapped.masses()) < 1e-9);
        prop_assert!(max_abs_diff(&batch.masses(), &joint) < 1e-9);
        let single = update_batch(&p, &kg, &obs[..1], &noise).unwrap();
        prop_assert_eq!(single, update(&p, &kg, &obs[0].0, &obs[0].1, &noise).unwrap());
    }

    #[test]
    fn posterior_matches_joint_enumeration(seed in any::<u64>()) {
        let kg = random_kg(seed, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = random_noise(&mut rng);
        let p = prior(&kg, &OdConfig::default());
        let oracle_p = oracle_prior(&kg, 0.01);
        prop_assert!(max_abs_diff(&p.masses(), &oracle_p) < 1e-12);
        let n_obs = rng.random_range(0..6);
        let obs = random_obs(&mut rng, &kg, n_obs);
        let post = update_batch(&p, &kg, &obs, &noise).unwrap();
        let brute = oracle_posterior(&kg, &oracle_p, &obs, &noise);
        prop_assert!(max_abs_diff(&post.masses(), &brute) < 1e-12);
    }

    #[test]
    fn update_does_not_mutate_input(seed in any::<u64>()) {
        let kg = random_kg(seed, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = prior(&kg, &OdConfig::default());
        let snapshot = p.clone();
        let (b, y) = random_obs(&mut rng, &kg, 1).remove(0);
        let _ = update(&p, &kg, &b, &y, &NoiseConfig::default()).unwrap();
        prop_assert_eq!(p, snapshot);
    }

    #[test]
    fn size_principle(eps in 0.0001f64..0.9, small in 1usize..4, extra in 1usize..4) {
        // two sibling hypotheses with identical features (equal prior) that
        // both contain product "x", one strictly larger than the other
        let big = small + extra;
        let ids: Vec<String> = (0..big).map(|i| if i == 0 { "x".into() } else { format!("q{i}") }).collect();
        let all: Vec<&str> = ids.iter().map(String::as_str).collect();
        let kg = KnowledgeGraph::new(
            "sp",
            ids.iter().map(|i| Product::new(i.as_str(), i.as_str(), ["f"])).collect(),
            vec![
                Node::new("root", "root", None, ["r"], all.iter().copied()),
                Node::new("g", "g", Some("root"), ["s"], all[..small].iter().copied()),
                Node::new("h", "h", Some("root"), ["s"], all.iter().copied()),
            ],
        ).unwrap();
        let noise = NoiseConfig::with_epsilon(eps).unwrap();
        let p = prior(&kg, &OdConfig::default());
        prop_assert_eq!(p.mass("g"), p.mass("h"));
        let post = update(&p, &kg, &Bundle::new(["x"]).unwrap(), &Feedback::click("x"), &noise).unwrap();
        prop_assert!(post.mass("g").unwrap() > post.mass("h").unwrap());
    }

    #[test]
    fn heavy_noise_leaves_prior(seed in any::<u64>()) {
        let kg = random_kg(seed, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = NoiseConfig::new(1.0 - 1e-9, 0.05).unwrap();
        let p = prior(&kg, &OdConfig::default());
        let obs = random_obs(&mut rng, &kg, 3);
        let post = update_batch(&p, &kg, &obs, &noise).unwrap();
        prop_assert!(max_abs_diff(&post.masses(), &p.masses()) < 1e-3);
    }

    #[test]
    fn eig_invariant_under_relabeling(seed in any::<u64>()) {
        let kg = random_kg(seed, 6, 5);
        let other = relabel(&kg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = random_noise(&mut rng);
        let bundle = random_bundle(&mut rng, &kg, 3);
        let a = expected_information_gain(&prior(&kg, &OdConfig::default()), &kg, &bundle, &noise).unwrap();
        let b = expected_information_gain(&prior(&other, &OdConfig::default()), &other, &relabel_bundle(&bundle), &noise).unwrap();
        prop_assert!((a.eig - b.eig).abs() < 1e-12);
    }

    #[test]
    fn selection_is_exhaustive_and_deterministic(seed in any::<u64>()) {
        let kg = random_kg(seed, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = random_noise(&mut rng);
        let n = rng.random_range(1..=kg.products().len());
        let p = prior(&kg, &OdConfig::default());
        let a = select_bundle(&p, &kg, n, &noise, DEFAULT_MAX_CANDIDATES).unwrap();
        let b = select_bundle(&p, &kg, n, &noise, DEFAULT_MAX_CANDIDATES).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.table.len(), enumerate_bundles(&kg, n, DEFAULT_MAX_CANDIDATES).unwrap().len());
        prop_assert_eq!(&a.table[0].bundle, &a.bundle);
        for w in a.table.windows(2) {
            prop_assert!(w[0].eig >= w[1].eig - TIE_TOLERANCE);
            if (w[0].eig - w[1].eig).abs() <= TIE_TOLERANCE / 2.0 {
                prop_assert!(w[0].bundle < w[1].bundle);
            }
        }
        let best = a.table.iter().map(|r| r.eig).fold(f64::MIN, f64::max);
        let winner = a.table.iter().filter(|r| best - r.eig <= TIE_TOLERANCE).map(|r| &r.bundle).min();
        prop_assert_eq!(winner, Some(&a.bundle));
    }

    #[test]
    fn replay_reproduces_every_belief(seed in any::<u64>()) {
        let kg = random_kg(seed, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = SessionConfig {
            bundle_size: 1,
            noise: random_noise(&mut rng),
            convergence_threshold: 0.99,
            max_steps: 8,
            policy: Policy::Random { seed },
            ..SessionConfig::default()
        };
        let mut trace = SessionTrace::start(&kg, "s", "w", config).unwrap();
        while let Some(b) = trace.pending_bundle() {
            let y = random_feedback(&mut rng, b);
            trace.submit_feedback(&kg, y).unwrap();
        }
        let obs = trace.observations();
        for (k, step) in trace.steps().iter().enumerate() {
            let replayed = update_batch(trace.prior(), &kg, &obs[..=k], &config.noise).unwrap();
            let recorded = step.belief.as_ref().unwrap();
            prop_assert!(max_abs_diff(&replayed.masses(), &recorded.masses()) < 1e-12);
        }
        let recorded: Vec<_> = trace.steps().iter().map(|s| (s.bundle.clone(), s.feedback.clone())).collect();
        let (rebuilt, opened) = SessionTrace::replay(&kg, "s", "w", config, &recorded).unwrap();
        prop_assert!(!opened);
        prop_assert_eq!(rebuilt, trace);
    }

    #[test]
    fn policy_changes_bundles_not_scoring(seed in any::<u64>()) {
        let kg = random_kg(seed, 6, 5);
        let base = SessionConfig { bundle_size: 1, convergence_threshold: 1.0, max_steps: 4, ..SessionConfig::default() };
        let mut eig = SessionTrace::start(&kg, "a", "w", base).unwrap();
        let mut rnd = SessionTrace::start(&kg, "b", "w", SessionConfig { policy: Policy::Random { seed }, ..base }).unwrap();
        if eig.status().is_terminal() {
            return Ok(());
        }
        // answer both with NoClick: same observation content, whatever the bundle
        for _ in 0..3 {
            let pe = eig.belief().clone();
            let pr = rnd.belief().clone();
            let be = eig.pending_bundle().unwrap().clone();
            let br = rnd.pending_bundle().unwrap().clone();
            eig.submit_feedback(&kg, Feedback::NoClick).unwrap();
            rnd.submit_feedback(&kg, Feedback::NoClick).unwrap();
            let noise = base.noise;
            prop_assert_eq!(eig.belief(), &update(&pe, &kg, &be, &Feedback::NoClick, &noise).unwrap());
            prop_assert_eq!(rnd.belief(), &update(&pr, &kg, &br, &Feedback::NoClick, &noise).unwrap());
            if be == br {
                prop_assert_eq!(eig.belief().masses(), update(&pe, &kg, &br, &Feedback::NoClick, &noise).unwrap().masses());
            }
        }
    }
}

#[test]
fn kl_closed_forms() {
    let kg = KnowledgeGraph::new(
        "two",
        vec![Product::new("a", "a", ["f"]), Product::new("b", "b", ["f"])],
        vec![
            Node::new("x", "x", None, ["f"], ["a", "b"]),
            Node::new("y", "y", Some("x"), ["g"], ["a"]),
        ],
    )
    .unwrap();
    let b = |m: [f64; 2]| BeliefState::from_masses(&kg, [("x", m[0]), ("y", m[1])]).unwrap();
    let half = b([0.5, 0.5]);
    assert!((kl_divergence(&b([1.0, 0.0]), &half).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    let expect = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
    assert!((kl_divergence(&b([0.75, 0.25]), &half).unwrap() - expect).abs() < 1e-15);
    assert!((expect - 0.130812).abs() < 1e-6);
    assert_eq!(
        kl_divergence(&half, &b([1.0, 0.0])),
        Err(Error::SupportViolation("y".into()))
    );
}

#[test]
fn symmetric_bundles_tie() {
    // two mirror-image subtrees: {a,b} and {c,d} are images under a<->c, b<->d
    let kg = KnowledgeGraph::new(
        "sym",
        ["a", "b", "c", "d"].iter().map(|p| Product::new(*p, *p, ["f"])).collect(),
        vec![
            Node::new("root", "root", None, ["r"], ["a", "b", "c", "d"]),
            Node::new("l", "l", Some("root"), ["x"], ["a", "b"]),
            Node::new("r", "r", Some("root"), ["y"], ["c", "d"]),
        ],
    )
    .unwrap();
    let p = prior(&kg, &OdConfig::default());
    let noise = NoiseConfig::default();
    let ab = expected_information_gain(&p, &kg, &Bundle::new(["a", "b"]).unwrap(), &noise).unwrap();
    let cd = expected_information_gain(&p, &kg, &Bundle::new(["c", "d"]).unwrap(), &noise).unwrap();
    assert!((ab.eig - cd.eig).abs() < 1e-12);
    // the four singletons are all images of each other
    let sel = select_bundle(&p, &kg, 1, &noise, DEFAULT_MAX_CANDIDATES).unwrap();
    let order: Vec<String> = sel.table.iter().map(|r| r.bundle.to_string()).collect();
    assert_eq!(order, ["{a}", "{b}", "{c}", "{d}"]);
}

#[test]
fn uninformative_bundle_has_zero_gain() {
    // every node covers every product: likelihoods identical across nodes
    let kg = KnowledgeGraph::new(
        "flat",
        vec![Product::new("a", "a", ["f"]), Product::new("b", "b", ["f"])],
        vec![
            Node::new("root", "root", None, ["r"], ["a", "b"]),
            Node::new("c1", "c1", Some("root"), ["x"], ["a", "b"]),
            Node::new("c2", "c2", Some("root"), ["y"], ["a", "b"]),
        ],
    )
    .unwrap();
    let p = prior(&kg, &OdConfig::default());
    let r = expected_information_gain(&p, &kg, &Bundle::new(["a"]).unwrap(), &NoiseConfig::default()).unwrap();
    assert!(r.eig.abs() < 1e-12);
    let post = update(&p, &kg, &Bundle::new(["a"]).unwrap(), &Feedback::click("a"), &NoiseConfig::default()).unwrap();
    assert!(max_abs_diff(&post.masses(), &p.masses()) < 1e-15);
}

#[test]
fn point_mass_selects_first_bundle() {
    let kg = figure2();
    let masses = [("fashion", 0.0), ("dresses", 0.0), ("shoes", 1.0), ("peplum", 0.0), ("sneakers", 0.0)];
    let b = BeliefState::from_masses(&kg, masses).unwrap();
    let sel = select_bundle(&b, &kg, 2, &NoiseConfig::default(), DEFAULT_MAX_CANDIDATES).unwrap();
    assert!(sel.table.iter().all(|r| r.eig == 0.0));
    assert_eq!(sel.bundle, Bundle::new(["P1", "P2"]).unwrap());
}

#[test]
fn simulated_clicks_fit_the_model() {
    let kg = figure2();
    let noise = NoiseConfig::default();
    let bundle = Bundle::new(["P3", "P4"]).unwrap();
    for true_node in ["shoes", "dresses", "fashion"] {
        let user = SimulatedUser::new(&kg, true_node, noise, 99).unwrap();
        let outcomes: Vec<Feedback> = bundle.outcomes().collect();
        let mut counts = vec![0u64; outcomes.len()];
        for call in 0..100_000 {
            let y = user.simulate_click(&kg, &bundle, call).unwrap();
            counts[outcomes.iter().position(|o| *o == y).unwrap()] += 1;
        }
        let probs: Vec<f64> = outcomes
            .iter()
            .map(|y| outcome_likelihood(&kg, true_node, &bundle, y, &noise).unwrap())
            .collect();
        let stat = chi_square_statistic(&counts, &probs);
        assert!(stat < chi_square_critical(outcomes.len() - 1, 0.01), "{true_node}: {stat}");
        // per-outcome check at 3 standard errors
        for (c, p) in counts.iter().zip(&probs) {
            let se = (p * (1.0 - p) / 100_000.0).sqrt();
            assert!((*c as f64 / 100_000.0 - p).abs() < 3.0 * se + 1e-12);
        }
    }
}

#[test]
fn relabel_helper_keeps_graph_valid() {
    let kg = figure2();
    let other = relabel(&kg, 3);
    assert_eq!(other.nodes().len(), 5);
    assert_eq!(other.root().id.as_str(), "node-fashion");
}
