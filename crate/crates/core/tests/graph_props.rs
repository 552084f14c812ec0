use gadforge::graph::{build_graph, degree_sequence};
use gadforge::ingest::{clean, minmax_normalize};
use gadforge::io;
use ndarray::Array2;
use proptest::prelude::*;

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(u32, u32)>)> {
    (1usize..40).prop_flat_map(|n| {
        let e = prop::collection::vec((0..n as u32, 0..n as u32), 0..120);
        (Just(n), e)
    })
}

proptest! {
    #[test]
    fn csr_round_trip((n, edges) in arb_graph()) {
        let (g, _) = build_graph(&edges, n, Array2::zeros((n, 1)), vec![0; n]).unwrap();
        g.check_invariants().unwrap();
        let emitted: Vec<(u32, u32)> = g.edges().collect();
        let (h, _) = build_graph(&emitted, n, Array2::zeros((n, 1)), vec![0; n]).unwrap();
        prop_assert_eq!(g.row_offsets(), h.row_offsets());
        prop_assert_eq!(g.col_indices(), h.col_indices());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.tsv");
        io::write_edge_list(&path, &g).unwrap();
        let read = io::read_edge_list(&path).unwrap();
        prop_assert_eq!(read, emitted);
    }

    #[test]
    fn degrees_match_adjacency((n, edges) in arb_graph()) {
        let (g, _) = build_graph(&edges, n, Array2::zeros((n, 1)), vec![0; n]).unwrap();
        let deg = degree_sequence(&g);
        let mut scanned = vec![0usize; n];
        for i in 0..n {
            scanned[i] = g.col_indices()[g.row_offsets()[i]..g.row_offsets()[i + 1]].len();
        }
        prop_assert_eq!(&deg, &scanned);
        prop_assert_eq!(deg.iter().sum::<usize>(), 2 * g.edge_count());

        // independent count of distinct non-loop pairs
        let mut pairs: Vec<(u32, u32)> = edges
            .iter()
            .filter(|(u, v)| u != v)
            .map(|&(u, v)| (u.min(v), u.max(v)))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        prop_assert_eq!(g.edge_count(), pairs.len());
    }

    #[test]
    fn cleaning_is_idempotent(
        (n, edges) in arb_graph(),
        vals in prop::collection::vec(-5.0f32..5.0, 120),
        flags in prop::collection::vec(0u8..2, 40),
    ) {
        let d = 3;
        let features = Array2::from_shape_fn((n, d), |(i, j)| vals[(i * d + j) % vals.len()]);
        let labels = flags[..n].to_vec();
        let (g, l, _) = clean(&edges, features, labels).unwrap();
        g.check_invariants().unwrap();
        prop_assert!(g.features().iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((0..g.node_count()).all(|i| g.degree(i) > 0));

        let edges2: Vec<(u32, u32)> = g.edges().collect();
        let (g2, l2, stats) = clean(&edges2, g.features().clone(), l.as_slice().to_vec()).unwrap();
        prop_assert_eq!(stats.isolated_removed, 0);
        prop_assert_eq!(g2.row_offsets(), g.row_offsets());
        prop_assert_eq!(g2.col_indices(), g.col_indices());
        prop_assert_eq!(l2.as_slice(), l.as_slice());
        let bits = |a: &Array2<f32>| a.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(g2.features()), bits(g.features()));
    }

    #[test]
    fn feature_file_round_trip(n in 0usize..20, d in 0usize..6, seed in any::<u32>()) {
        let a = Array2::from_shape_fn((n, d), |(i, j)| (seed as f32) * 1e-6 + i as f32 - j as f32 * 0.5);
        let b = io::decode_features(&io::encode_features(&a)).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn normalized_columns_span_unit_interval() {
    let x = ndarray::array![[1.0f32, 7.0, 3.0], [3.0, 7.0, -1.0], [2.0, 7.0, 1.0]];
    let y = minmax_normalize(&x).unwrap();
    assert_eq!(y.column(0).to_vec(), vec![0.0, 1.0, 0.5]);
    assert_eq!(y.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
    assert_eq!(y.column(2).to_vec(), vec![1.0, 0.0, 0.5]);
}
