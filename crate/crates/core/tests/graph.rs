use mpcut::graph::{self, generate_random_regular, treelike_report};
use mpcut::{Error, RegularGraph};

fn edge_set(g: &RegularGraph) -> Vec<(usize, usize)> {
    let mut e: Vec<_> = g.edges().collect();
    e.sort_unstable();
    e
}

#[test]
fn four_vertex_cubic_graph_is_k4() {
    let g = generate_random_regular(4, 3, 1).unwrap();
    assert_eq!(edge_set(&g), edge_set(&RegularGraph::complete(4).unwrap()));
}

#[test]
fn same_seed_same_tables() {
    let a = generate_random_regular(10, 3, 7).unwrap();
    let b = generate_random_regular(10, 3, 7).unwrap();
    for i in 0..10 {
        assert_eq!(a.neighbors(i), b.neighbors(i));
    }
}

#[test]
fn degree_is_a_point_mass() {
    for (n, k) in [(50, 3), (200, 10), (1000, 100)] {
        let g = generate_random_regular(n, k, 2).unwrap();
        for i in 0..n {
            let nb = g.neighbors(i);
            assert_eq!(nb.len(), k);
            assert!(!nb.contains(&(i as u32)));
            let mut s = nb.to_vec();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), k, "repeated neighbour at {i}");
        }
    }
}

#[test]
fn degree_ten_graphs_are_treelike_only_at_radius_one() {
    let g = generate_random_regular(10_000, 10, 4).unwrap();
    assert!(treelike_report(&g, 0).epsilon < 0.05);
    // A radius-4 ball would hold most of the graph.
    assert_eq!(treelike_report(&g, 3).epsilon, 1.0);
}

#[test]
fn sparse_graphs_are_treelike_at_radius_three() {
    let g = generate_random_regular(10_000, 3, 4).unwrap();
    let eps: Vec<f64> = (0..4).map(|l| treelike_report(&g, l).epsilon).collect();
    assert!(eps.windows(2).all(|w| w[0] <= w[1]));
    assert!(eps[2] < 0.05, "{eps:?}");
}

#[test]
fn store_load_and_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.txt");
    let g = generate_random_regular(30, 4, 9).unwrap();
    g.store(&p).unwrap();
    assert_eq!(edge_set(&RegularGraph::load(&p).unwrap()), edge_set(&g));

    // Vertex 3 has degree 2 and vertex 0 degree 4.
    let bad = "4 3\n0 1\n0 2\n0 3\n1 2\n1 3\n2 0\n";
    assert!(matches!(RegularGraph::parse(bad.as_bytes()), Err(Error::Format { .. })));
    let good = "4 3\n0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n";
    assert_eq!(RegularGraph::parse(good.as_bytes()).unwrap().k(), 3);
}

#[test]
fn relabelled_graph_keeps_girth_and_tree_fraction() {
    let g = generate_random_regular(500, 3, 5).unwrap();
    let perm: Vec<usize> = (0..500).map(|i| (i * 7 + 3) % 500).collect();
    let h = g.relabel(&perm).unwrap();
    assert_eq!(graph::girth(&g), graph::girth(&h));
    assert_eq!(treelike_report(&g, 2), treelike_report(&h, 2));
}
