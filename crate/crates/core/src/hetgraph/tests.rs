use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn node(name: &str, ty: &str) -> NodeSpec {
    NodeSpec { name: name.into(), node_type: ty.into(), label: None, features: None }
}

fn rel(name: &str, src: &str, dst: &str, rev: &str) -> RelationSpec {
    RelationSpec { name: name.into(), src_type: src.into(), dst_type: dst.into(), reverse: rev.into() }
}

fn edge(src: &str, dst: &str, r: &str) -> EdgeSpec {
    EdgeSpec { src: src.into(), dst: dst.into(), relation: r.into() }
}

/// `n` nodes spread over three types with random typed edges drawn from
/// four relations (one paired A-B, one paired B-B, one symmetric C-C, one
/// paired C-A).
fn random_spec(seed: u64, n: usize, m: usize) -> GraphSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types = ["A", "B", "C"];
    let mut spec = GraphSpec { node_types: types.iter().map(|s| s.to_string()).collect(), ..Default::default() };
    let mut by_type: Vec<Vec<String>> = vec![Vec::new(); 3];
    for i in 0..n {
        let t = rng.random_range(0..3);
        let name = format!("n{i}");
        by_type[t].push(name.clone());
        spec.nodes.push(node(&name, types[t]));
    }
    spec.relations = vec![
        rel("ab", "A", "B", "ba"),
        rel("cites", "B", "B", "cited"),
        rel("peer", "C", "C", "peer"),
        rel("ca", "C", "A", "ac"),
    ];
    let pairs = [(0, 1, "ab"), (1, 1, "cites"), (2, 2, "peer"), (2, 0, "ca"), (1, 0, "ba")];
    for _ in 0..m {
        let (s, d, r) = pairs[rng.random_range(0..pairs.len())];
        if by_type[s].is_empty() || by_type[d].is_empty() {
            continue;
        }
        let a = &by_type[s][rng.random_range(0..by_type[s].len())];
        let b = &by_type[d][rng.random_range(0..by_type[d].len())];
        spec.edges.push(edge(a, b, r));
    }
    spec
}

#[test]
fn single_node_without_edges() {
    let spec = GraphSpec { node_types: vec!["A".into()], nodes: vec![node("x", "A")], ..Default::default() };
    let g = spec.build(ColdStart::OneHot).unwrap();
    assert_eq!(g.num_edges(), 0);
    let g = g.add_self_loops().unwrap();
    assert_eq!(g.num_edges(), 1);
    assert_eq!(g.in_edges(0).unwrap(), vec![EdgeTriplet { src: 0, dst: 0, rel: 0 }]);
}

#[test]
fn imdb_shaped_reverse_materialization() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let counts = [("movie", 5043), ("actor", 2357), ("director", 894)];
    let mut spec = GraphSpec::default();
    for (t, c) in counts {
        spec.node_types.push(t.into());
        for i in 0..c {
            spec.nodes.push(node(&format!("{t}{i}"), t));
        }
    }
    spec.relations = vec![rel("stars", "movie", "actor", "starred_in"), rel("directed_by", "movie", "director", "directs")];
    let mut add = |other: &str, n_other: usize, r: &str, want: usize| {
        let mut seen = HashSet::new();
        while seen.len() < want {
            let pair = (rng.random_range(0..5043), rng.random_range(0..n_other));
            if seen.insert(pair) {
                spec.edges.push(edge(&format!("movie{}", pair.0), &format!("{other}{}", pair.1), r));
            }
        }
    };
    add("actor", 2357, "stars", 11188);
    add("director", 894, "directed_by", 3435);
    let g = spec.build(ColdStart::OneHot).unwrap();
    assert_eq!(g.num_edges(), 2 * (11188 + 3435));
    assert_eq!(g.num_nodes(), 5043 + 2357 + 894);
}

#[test]
fn in_edge_index_matches_brute_force_scan() {
    let g = random_spec(3, 50, 200).build(ColdStart::OneHot).unwrap();
    let total: usize = (0..g.num_nodes()).map(|j| g.in_edge_ids(j).unwrap().len()).sum();
    assert_eq!(total, g.num_edges());
    for j in 0..g.num_nodes() {
        let brute: Vec<EdgeTriplet> = g.edges().iter().copied().filter(|e| e.dst == j).collect();
        assert_eq!(g.in_edges(j).unwrap(), brute);
    }
}

#[test]
fn self_loop_counts() {
    let mut spec = GraphSpec { node_types: vec!["A".into(), "B".into(), "C".into()], ..Default::default() };
    for (t, c) in [("A", 2), ("B", 3), ("C", 4)] {
        for i in 0..c {
            spec.nodes.push(node(&format!("{t}{i}"), t));
        }
    }
    let g = spec.build(ColdStart::OneHot).unwrap();
    let looped = g.add_self_loops().unwrap();
    assert_eq!(looped.num_edges() - g.num_edges(), 9);
    assert_eq!(looped.relations().len() - g.relations().len(), 3);
    for p in 0..3 {
        let r = looped.relation(looped.self_loop_relation(p).unwrap());
        assert!(r.is_self_loop && r.is_self_reverse());
        assert_eq!((r.src_type, r.dst_type), (p, p));
    }
}

#[test]
fn self_loops_on_empty_graph() {
    let spec = GraphSpec { node_types: vec!["A".into(), "B".into()], ..Default::default() };
    let g = spec.build(ColdStart::OneHot).unwrap().add_self_loops().unwrap();
    assert_eq!(g.num_edges(), 0);
    assert_eq!(g.relations().len(), 2);
}

#[test]
fn self_loops_twice_is_an_error() {
    let g = random_spec(1, 10, 10).build(ColdStart::OneHot).unwrap().add_self_loops().unwrap();
    assert!(matches!(g.add_self_loops(), Err(GraphError::SelfLoopsAlreadyAdded)));
}

#[test]
fn exactly_one_self_loop_per_node() {
    let g = random_spec(11, 50, 200).build(ColdStart::OneHot).unwrap();
    let before = g.edges().to_vec();
    let g = g.add_self_loops().unwrap();
    assert_eq!(&g.edges()[..before.len()], &before[..]);
    for j in 0..g.num_nodes() {
        let loops: Vec<_> = g
            .in_edges(j)
            .unwrap()
            .into_iter()
            .filter(|e| g.relation(e.rel).is_self_loop)
            .collect();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].src, j);
        assert_eq!(loops[0].rel, g.self_loop_relation(g.type_of(j)).unwrap());
    }
}

#[test]
fn isolated_node_sees_only_its_self_loop() {
    let spec = GraphSpec {
        node_types: vec!["A".into()],
        nodes: vec![node("a", "A"), node("b", "A"), node("lonely", "A")],
        relations: vec![rel("knows", "A", "A", "known_by")],
        edges: vec![edge("a", "b", "knows")],
    };
    let g = spec.build(ColdStart::OneHot).unwrap().add_self_loops().unwrap();
    let lonely = g.node_by_name("lonely").unwrap();
    let e = g.in_edges(lonely).unwrap();
    assert_eq!(e.len(), 1);
    assert!(g.relation(e[0].rel).is_self_loop);
}

#[test]
fn parallel_relations_are_kept_distinct() {
    let spec = GraphSpec {
        node_types: vec!["author".into()],
        nodes: vec![node("i", "author"), node("j", "author")],
        relations: vec![rel("cite", "author", "author", "cited"), rel("write", "author", "author", "written")],
        edges: vec![edge("i", "j", "cite"), edge("i", "j", "write")],
    };
    let g = spec.build(ColdStart::OneHot).unwrap();
    let (i, j) = (g.node_by_name("i").unwrap(), g.node_by_name("j").unwrap());
    let mut rels: Vec<&str> = g
        .in_edges(j)
        .unwrap()
        .iter()
        .filter(|e| e.src == i)
        .map(|e| g.relation(e.rel).name.as_str())
        .collect();
    rels.sort();
    assert_eq!(rels, vec!["cite", "write"]);
}

#[test]
fn invalid_node_id() {
    let g = random_spec(1, 5, 3).build(ColdStart::OneHot).unwrap();
    assert!(matches!(g.in_edges(99), Err(GraphError::InvalidNode(99))));
}

#[test]
fn duplicate_triplets_are_dropped() {
    let spec = GraphSpec {
        node_types: vec!["A".into(), "P".into()],
        nodes: vec![node("a", "A"), node("p", "P")],
        relations: vec![rel("writes", "A", "P", "written")],
        edges: vec![edge("a", "p", "writes"), edge("a", "p", "writes"), edge("p", "a", "written")],
    };
    let g = spec.build(ColdStart::OneHot).unwrap();
    assert_eq!(g.num_edges(), 2);
}

#[test]
fn symmetric_relation_materializes_both_directions() {
    let spec = GraphSpec {
        node_types: vec!["A".into()],
        nodes: vec![node("x", "A"), node("y", "A")],
        relations: vec![rel("coauthor", "A", "A", "coauthor")],
        edges: vec![edge("y", "x", "coauthor"), edge("x", "y", "coauthor")],
    };
    let g = spec.build(ColdStart::OneHot).unwrap();
    assert_eq!(g.num_edges(), 2);
    assert!(g.relation(0).is_self_reverse());
}

#[test]
fn build_errors() {
    let base = GraphSpec {
        node_types: vec!["A".into(), "P".into()],
        nodes: vec![node("a", "A"), node("p", "P")],
        relations: vec![rel("writes", "A", "P", "written")],
        edges: vec![],
    };
    let with_edge = |e: EdgeSpec| GraphSpec { edges: vec![e], ..base.clone() };
    assert!(matches!(with_edge(edge("a", "zz", "writes")).build(ColdStart::OneHot), Err(GraphError::UnknownNode(_))));
    assert!(matches!(with_edge(edge("a", "p", "reads")).build(ColdStart::OneHot), Err(GraphError::UnknownRelation(_))));
    assert!(matches!(
        with_edge(edge("p", "a", "writes")).build(ColdStart::OneHot),
        Err(GraphError::EdgeTypeMismatch { .. })
    ));
    let bad = GraphSpec { relations: vec![rel("writes", "A", "P", "writes")], ..base.clone() };
    assert!(matches!(bad.build(ColdStart::OneHot), Err(GraphError::SelfReverseTypeMismatch(_))));
    let bad = GraphSpec { nodes: vec![node("a", "Q")], ..base.clone() };
    assert!(matches!(bad.build(ColdStart::OneHot), Err(GraphError::UnknownNodeType(_))));
    let bad = GraphSpec {
        relations: vec![rel("writes", "A", "P", "written"), rel("written", "P", "A", "edits")],
        ..base.clone()
    };
    assert!(matches!(bad.build(ColdStart::OneHot), Err(GraphError::InconsistentReverse { .. })));
}

#[test]
fn cold_start_policies() {
    let spec = GraphSpec {
        node_types: vec!["A".into()],
        nodes: vec![node("x", "A"), node("y", "A"), node("z", "A")],
        ..Default::default()
    };
    let g = spec.build(ColdStart::OneHot).unwrap();
    assert_eq!(g.features(0), &Tensor::eye(3, 3));
    assert!(g.is_cold_start(0));
    let g = spec.build(ColdStart::Zeros).unwrap();
    assert_eq!(g.features(0), &Tensor::zeros(3, 1));
}

#[test]
fn mixed_feature_presence_is_rejected() {
    let mut a = node("x", "A");
    a.features = Some(vec![1.0, 2.0]);
    let spec = GraphSpec { node_types: vec!["A".into()], nodes: vec![a, node("y", "A")], ..Default::default() };
    assert!(matches!(spec.build(ColdStart::OneHot), Err(GraphError::FeatureDimMismatch { .. })));
}

#[test]
fn node_ids_are_type_major() {
    let spec = GraphSpec {
        node_types: vec!["A".into(), "B".into()],
        nodes: vec![node("b0", "B"), node("a0", "A"), node("b1", "B"), node("a1", "A")],
        ..Default::default()
    };
    let g = spec.build(ColdStart::OneHot).unwrap();
    let names: Vec<&str> = (0..4).map(|i| g.node_name(i)).collect();
    assert_eq!(names, vec!["a0", "a1", "b0", "b1"]);
    assert_eq!(g.global_id(1, 1), 3);
    assert_eq!(g.local_index(3), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn graph_invariants(seed in any::<u64>(), n in 1usize..60, m in 0usize..150, loops in any::<bool>()) {
        let mut g = random_spec(seed, n, m).build(ColdStart::OneHot).unwrap();
        if loops {
            g = g.add_self_loops().unwrap();
        }
        let edge_set: HashSet<EdgeTriplet> = g.edges().iter().copied().collect();
        prop_assert_eq!(edge_set.len(), g.num_edges());
        for r in g.relations() {
            let rev = g.relation(r.reverse);
            prop_assert_eq!(rev.reverse, r.id);
            prop_assert_eq!((rev.src_type, rev.dst_type), (r.dst_type, r.src_type));
            if r.is_self_loop {
                prop_assert!(r.is_self_reverse() && r.src_type == r.dst_type);
            }
        }
        let mut seen = vec![0usize; g.num_edges()];
        for j in 0..g.num_nodes() {
            for &e in g.in_edge_ids(j).unwrap() {
                prop_assert_eq!(g.edges()[e].dst, j);
                seen[e] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        for e in g.edges() {
            let r = g.relation(e.rel);
            prop_assert_eq!(g.type_of(e.src), r.src_type);
            prop_assert_eq!(g.type_of(e.dst), r.dst_type);
            if !r.is_self_loop {
                let back = EdgeTriplet { src: e.dst, dst: e.src, rel: r.reverse };
                prop_assert!(edge_set.contains(&back));
            }
        }
    }
}

mod files {
    use super::*;
    use std::fs;

    fn write(dir: &std::path::Path, nodes: &str, edges: &str, relations: &str) -> TsvPaths {
        let paths = TsvPaths::in_dir(dir);
        fs::write(&paths.nodes, nodes).unwrap();
        fs::write(&paths.edges, edges).unwrap();
        fs::write(&paths.relations, relations).unwrap();
        paths
    }

    #[test]
    fn three_line_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write(
            dir.path(),
            "a1\tauthor\t0\t1.0,2.0\np1\tpaper\t-\n",
            "a1\tp1\twrites\n",
            "writes\tauthor\tpaper\twritten\n",
        );
        let g = load_tsv(&paths, ColdStart::OneHot).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.features(0).data(), &[1.0, 2.0]);
        assert_eq!(g.labels(0).unwrap().values, vec![Some(0)]);
        assert!(g.labels(1).is_none());
        assert!(g.is_cold_start(1));
    }

    #[test]
    fn feature_dim_mismatch_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = "# header\n\
                     a1\tauthor\t0\t1,2\n\
                     a2\tauthor\t1\t1,2\n\
                     \n\
                     a3\tauthor\t0\t3,4\n\
                     a4\tauthor\t-\t5,6\n\
                     a5\tauthor\t1\t7,8,9\n";
        let paths = write(dir.path(), nodes, "", "");
        let err = load_tsv(&paths, ColdStart::OneHot).unwrap_err();
        match &err {
            GraphError::Parse { line, .. } => assert_eq!(*line, 7),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains(":7:"), "{err}");
    }

    #[test]
    fn malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write(dir.path(), "a1\tauthor\n", "", "");
        assert!(matches!(load_tsv(&paths, ColdStart::OneHot), Err(GraphError::Parse { line: 1, .. })));

        let paths = write(dir.path(), "a1\tauthor\tdrama\n", "", "");
        let err = load_tsv(&paths, ColdStart::OneHot).unwrap_err();
        assert!(err.to_string().contains("unknown label class"), "{err}");

        let paths = write(dir.path(), "a1\tauthor\t0\n", "a1\tp9\twrites\n", "writes\tauthor\tauthor\twritten\n");
        assert!(matches!(load_tsv(&paths, ColdStart::OneHot), Err(GraphError::Parse { line: 1, .. })));

        let paths = write(dir.path(), "a1\tauthor\t0\n", "", "writes\tauthor\tvenue\twritten\n");
        assert!(matches!(load_tsv(&paths, ColdStart::OneHot), Err(GraphError::Parse { line: 1, .. })));
    }

    #[test]
    fn missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let paths = TsvPaths::in_dir(dir.path());
        assert!(matches!(load_tsv(&paths, ColdStart::OneHot), Err(GraphError::Io { .. })));
    }

    fn edge_names(g: &HetGraph) -> HashSet<(String, String, String)> {
        g.edges()
            .iter()
            .map(|e| (g.node_name(e.src).into(), g.node_name(e.dst).into(), g.relation(e.rel).name.clone()))
            .collect()
    }

    #[test]
    fn save_then_load_is_isomorphic() {
        let mut spec = random_spec(5, 40, 120);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in spec.nodes.iter_mut() {
            if n.node_type != "C" {
                n.features = Some((0..3).map(|_| rng.random_range(-2.0..2.0)).collect());
            }
            if n.node_type == "A" && rng.random_bool(0.7) {
                n.label = Some(rng.random_range(0..4));
            }
        }
        let g = spec.build(ColdStart::OneHot).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = TsvPaths::in_dir(dir.path());
        save_tsv(&g, &paths).unwrap();
        let h = load_tsv(&paths, ColdStart::OneHot).unwrap();

        assert_eq!(g.num_nodes(), h.num_nodes());
        for v in 0..g.num_nodes() {
            let w = h.node_by_name(g.node_name(v)).unwrap();
            let (p, q) = (g.type_of(v), h.type_of(w));
            assert_eq!(g.node_types()[p].name, h.node_types()[q].name);
            assert_eq!(
                g.features(p).row_slice(g.local_index(v)),
                h.features(q).row_slice(h.local_index(w))
            );
            let lg = g.labels(p).and_then(|l| l.values[g.local_index(v)]);
            let lh = h.labels(q).and_then(|l| l.values[h.local_index(w)]);
            assert_eq!(lg, lh);
        }
        assert_eq!(edge_names(&g), edge_names(&h));
    }
}
