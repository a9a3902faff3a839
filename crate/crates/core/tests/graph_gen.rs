use graphnet::graph::{
    make_clustering_instance, make_matching_instance, make_pattern, read_instance, sbm_generate, validate_sbm_stats,
    write_instance, Graph, SbmParams, Task, TaskInstance,
};
use proptest::prelude::*;

fn serialize(inst: &TaskInstance) -> Vec<u8> {
    let mut buf = Vec::new();
    write_instance(inst, &mut buf).unwrap();
    buf
}

#[test]
fn sbm_edge_count_matches_binomial_mean() {
    let params = SbmParams {
        p: 0.5,
        q: 0.0,
        community_sizes: vec![25],
    };
    // C(25, 2) = 300 pairs, mean 150, sd sqrt(300 * 0.25)
    let sd = (300.0f64 * 0.25).sqrt();
    let counts: Vec<f64> = (0..1000)
        .map(|s| sbm_generate(&params, s).unwrap().n_edges() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    assert!((mean - 150.0).abs() < 3.0 * sd / (1000f64).sqrt(), "mean {mean}");
    let within = counts.iter().filter(|&&c| (c - 150.0).abs() <= 3.0 * sd).count();
    assert!(within >= 990, "{within} of 1000 within 3 sd");
}

#[test]
fn sbm_stats_validator() {
    let params = SbmParams {
        p: 0.5,
        q: 0.1,
        community_sizes: vec![6, 8, 5],
    };
    let graphs: Vec<Graph> = (0..1000).map(|s| sbm_generate(&params, s).unwrap()).collect();
    let report = validate_sbm_stats(&graphs, &params).unwrap();
    assert!((0.48..=0.52).contains(&report.intra_density), "{report:?}");
    assert!(!report.flagged, "{report:?}");

    let exact = SbmParams {
        p: 1.0,
        q: 0.0,
        community_sizes: vec![4, 3],
    };
    let graphs: Vec<Graph> = (0..100).map(|s| sbm_generate(&exact, s).unwrap()).collect();
    let report = validate_sbm_stats(&graphs, &exact).unwrap();
    assert_eq!(report.intra_density, 1.0);
    assert_eq!(report.inter_edges, 0);
    assert!(!report.flagged);

    // graphs drawn at p = 0.5 tested against a claimed p = 0.9 must be flagged
    let claimed = SbmParams { p: 0.9, ..params.clone() };
    let graphs: Vec<Graph> = (0..100).map(|s| sbm_generate(&params, s).unwrap()).collect();
    assert!(validate_sbm_stats(&graphs, &claimed).unwrap().flagged);
}

#[test]
fn matching_instance_shape() {
    let pattern = make_pattern(7);
    assert_eq!(pattern.n_nodes(), 20);
    for seed in 0..50 {
        let inst = make_matching_instance(&pattern, 0.1, seed).unwrap();
        inst.validate().unwrap();
        assert!((170..=270).contains(&inst.n_nodes()));
        assert_eq!(inst.targets.iter().filter(|&&t| t == 1).count(), 20);
        assert!(inst.seed_mask.iter().all(|&s| !s));
    }
}

fn pattern_nodes(inst: &TaskInstance) -> Vec<usize> {
    (0..inst.n_nodes()).filter(|&i| inst.targets[i] == 1).collect()
}

#[test]
fn pattern_is_embedded_edge_exact() {
    let pattern = make_pattern(11);
    for (seed, q) in [(0, 0.0), (1, 0.1), (2, 0.35), (3, 0.5)] {
        let inst = make_matching_instance(&pattern, q, seed).unwrap();
        let nodes = pattern_nodes(&inst);
        let adj = &inst.graph.adjacency;
        for a in 0..20 {
            assert_eq!(inst.graph.signal[nodes[a]], pattern.signal[a]);
            for b in 0..20 {
                if a == b {
                    continue;
                }
                let in_host = adj.edge_index(nodes[a], nodes[b]).is_some();
                let in_pattern = pattern.adjacency.edge_index(a, b).is_some();
                assert_eq!(in_host, in_pattern, "pair ({a}, {b}) at q={q}");
            }
        }
    }
}

#[test]
fn zero_noise_isolates_pattern() {
    let pattern = make_pattern(5);
    let inst = make_matching_instance(&pattern, 0.0, 9).unwrap();
    let adj = &inst.graph.adjacency;
    for (&s, &t) in adj.sources().iter().zip(adj.targets()) {
        assert_eq!(inst.targets[s], inst.targets[t], "edge {s}-{t} crosses the pattern boundary");
        assert_eq!(inst.graph.community[s], inst.graph.community[t]);
    }
}

#[test]
fn clustering_instance_shape() {
    for seed in 0..50 {
        let inst = make_clustering_instance(0.1, seed).unwrap();
        inst.validate().unwrap();
        assert_eq!(inst.task, Task::Clustering);
        assert!((50..=250).contains(&inst.n_nodes()));
        assert_eq!(inst.seed_mask.iter().filter(|&&s| s).count(), 10);
        let mut per_comm = [0usize; 10];
        for (i, _) in inst.seeds() {
            per_comm[inst.graph.community[i]] += 1;
        }
        assert_eq!(per_comm, [1; 10]);
        assert_eq!(inst.targets, inst.graph.community);
        let mut sizes = [0usize; 10];
        for &c in &inst.graph.community {
            sizes[c] += 1;
        }
        assert!(sizes.iter().all(|s| (5..=25).contains(s)));
    }
}

#[test]
fn same_seed_same_bytes() {
    let a = make_clustering_instance(0.2, 42).unwrap();
    let b = make_clustering_instance(0.2, 42).unwrap();
    assert_eq!(serialize(&a), serialize(&b));
    let c = make_clustering_instance(0.2, 43).unwrap();
    assert_ne!(serialize(&a), serialize(&c));
    let pattern = make_pattern(1);
    assert_eq!(
        serialize(&make_matching_instance(&pattern, 0.1, 3).unwrap()),
        serialize(&make_matching_instance(&pattern, 0.1, 3).unwrap())
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn serialization_round_trips(seed in any::<u64>(), q in 0.0f64..=1.0, matching in any::<bool>()) {
        let inst = if matching {
            make_matching_instance(&make_pattern(seed ^ 0x5555), q, seed).unwrap()
        } else {
            make_clustering_instance(q, seed).unwrap()
        };
        let bytes = serialize(&inst);
        let back = read_instance(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &inst);
        prop_assert_eq!(serialize(&back), bytes);
    }

    #[test]
    fn generated_graphs_are_simple(seed in any::<u64>(), q in 0.0f64..=0.5) {
        let inst = make_clustering_instance(q, seed).unwrap();
        prop_assert!(inst.graph.validate().is_ok());
        let pairs = inst.graph.adjacency.undirected_pairs();
        let mut dedup = pairs.clone();
        dedup.dedup();
        prop_assert_eq!(pairs.len(), dedup.len());
    }
}
