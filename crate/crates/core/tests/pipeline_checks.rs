mod common;

use std::path::Path;

use gadforge::dataset::{verify_checksums, Dataset};
use gadforge::expand::{expand, validate_expansion};
use gadforge::missing::{generate_mask, impute, ImputeStrategy};
use gadforge::pipeline::{self, GRID_GAMMAS};
use gadforge::ratio::{adjust_ratio, RetentionKind, RetentionStrategy};
use gadforge::stats::gmm::DEFAULT_K_CANDIDATES;
use gadforge::synthetic::{write_raw, SyntheticConfig};

use common::{demotion_error, f32_bits, imputation_error, seed_graph, small_graph, with_threads};

#[test]
fn expansion_keeps_original_and_targets() {
    let (g, l) = small_graph(300, 5);
    let ex = expand(&g, &l, 1500, &DEFAULT_K_CANDIDATES, 20).unwrap();
    let h = &ex.graph;
    assert_eq!(h.node_count(), 1500);
    h.check_invariants().unwrap();

    // induced subgraph on original ids
    let induced: Vec<(u32, u32)> = h.edges().filter(|&(u, v)| u < 300 && v < 300).collect();
    assert_eq!(induced, g.edges().collect::<Vec<_>>());
    for i in 0..300 {
        assert_eq!(f32_bits(h.features().row(i).as_slice().unwrap()),
                   f32_bits(g.features().row(i).as_slice().unwrap()));
        assert_eq!(ex.labels.as_slice()[i], l.as_slice()[i]);
    }
    let target = ex.plan.target_edges as f64;
    assert!((h.edge_count() as f64 - target).abs() <= 0.01 * target);
    assert_eq!(ex.plan.target_edges * 300, g.edge_count() * 1500);
    let r0 = l.anomaly_ratio();
    let r1 = ex.labels.anomaly_ratio();
    assert!((r1 - r0).abs() <= 1.0 / 1500.0);
    assert!(h.features().iter().all(|&x| (0.0..=1.0).contains(&x)));
}

#[test]
fn expansion_is_independent_of_worker_count() {
    let (g, l) = small_graph(300, 6);
    let a = with_threads(1, || expand(&g, &l, 1200, &DEFAULT_K_CANDIDATES, 20).unwrap());
    let b = with_threads(4, || expand(&g, &l, 1200, &DEFAULT_K_CANDIDATES, 20).unwrap());
    assert_eq!(a.graph.col_indices(), b.graph.col_indices());
    assert_eq!(f32_bits(a.graph.features().as_slice().unwrap()),
               f32_bits(b.graph.features().as_slice().unwrap()));
    assert_eq!(a.labels, b.labels);
}

#[test]
fn seed_expansion_passes_validation() {
    let (g, l) = seed_graph();
    let ex = expand(&g, &l, 20_000, &DEFAULT_K_CANDIDATES, 20).unwrap();
    assert!(ex.validation.passed, "{:?}", ex.validation);
    let again = validate_expansion(&g, &l, &ex.graph, &ex.labels).unwrap();
    assert_eq!(again, ex.validation);
}

#[test]
fn ratio_adjustment_matches_oracle() {
    let (g, l) = seed_graph();
    for kind in [RetentionKind::CoreCluster, RetentionKind::EdgeCluster, RetentionKind::Random] {
        let adj = adjust_ratio(&g, &l, 0.005, RetentionStrategy::new(kind), 20).unwrap();
        assert_eq!(adj.labels.anomaly_count(), 10);
        assert_eq!(adj.retained.len() + adj.demoted.len(), l.anomaly_count());
        for i in 0..g.node_count() {
            let keep = !l.is_anomaly(i) || adj.retained.contains(&(i as u32));
            if keep {
                assert_eq!(f32_bits(adj.features.row(i).as_slice().unwrap()),
                           f32_bits(g.features().row(i).as_slice().unwrap()));
            }
            assert_eq!(adj.labels.is_anomaly(i), adj.retained.contains(&(i as u32)));
        }
        let err = demotion_error(&g, &l, &adj.features, &adj.demoted);
        assert!(err <= 1e-6, "{kind:?}: {err}");
        let again = with_threads(1, || adjust_ratio(&g, &l, 0.005, RetentionStrategy::new(kind), 20).unwrap());
        assert_eq!(again.retained, adj.retained);
    }
}

#[test]
fn missingness_grid_matches_oracle() {
    let (g, l) = small_graph(500, 7);
    let d = g.dim();
    for gamma in GRID_GAMMAS {
        let mask = generate_mask(&l, gamma, gamma, d, 20).unwrap();
        for c in [0u8, 1] {
            let size = if c == 0 { l.normal_count() } else { l.anomaly_count() };
            let expect = (gamma * (size * d) as f64).round() as usize;
            let got = mask.cells().iter().filter(|&&(i, _)| l.as_slice()[i as usize] == c).count();
            assert_eq!(got, expect);
        }
        assert_eq!(mask.gamma0, (gamma * (l.normal_count() * d) as f64).round() / (l.normal_count() * d) as f64);
        let dense = mask.dense(g.node_count(), d);
        for s in ImputeStrategy::ALL {
            let out = impute(g.features(), &mask, &l, &g, s).unwrap();
            for (k, (a, b)) in out.iter().zip(g.features().iter()).enumerate() {
                if !dense[k] {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
            let err = imputation_error(&g, &l, &mask, &out, s);
            assert!(err <= 1e-7, "gamma {gamma} {s:?}: {err}");
        }
    }
}

fn file_bytes(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn pipeline_artifacts_replay_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let raw = write_raw(&SyntheticConfig { n: 400, d: 5, ..Default::default() }, "synthetic", &root.join("raw")).unwrap();
    let seed_dir = root.join("seed");
    pipeline::save_variant(&pipeline::ingest(&raw).unwrap(), &seed_dir).unwrap();

    let exp_dir = root.join("expanded");
    let (exp, _) = pipeline::expand_variant(&seed_dir, 1600, &DEFAULT_K_CANDIDATES, 20).unwrap();
    pipeline::save_variant(&exp, &exp_dir).unwrap();

    let adj_dir = root.join("adjusted");
    let strategy = RetentionStrategy::new(RetentionKind::CoreCluster);
    pipeline::save_variant(&pipeline::adjust_variant(&exp_dir, 0.01, strategy, 20).unwrap(), &adj_dir).unwrap();

    let masked_dir = root.join("masked");
    pipeline::save_variant(&pipeline::inject_variant(&adj_dir, 0.3, 0.3, None, 20).unwrap(), &masked_dir).unwrap();
    let imputed_dir = root.join("imputed");
    pipeline::save_variant(&pipeline::impute_variant(&masked_dir, ImputeStrategy::Neighbor).unwrap(), &imputed_dir).unwrap();

    let grid = pipeline::inject_grid(&adj_dir, &root.join("grid"), &GRID_GAMMAS, None, &ImputeStrategy::ALL, 20).unwrap();
    assert_eq!(grid.len(), 15);
    // masking then imputing equals the one-step grid cell
    let cell = root.join("grid").join("gamma0.30_neighbor");
    assert_eq!(file_bytes(&cell, "features.bin"), file_bytes(&imputed_dir, "features.bin"));
    assert_eq!(file_bytes(&cell, "mask.bin"), file_bytes(&imputed_dir, "mask.bin"));

    for dir in [&seed_dir, &exp_dir, &adj_dir, &masked_dir, &imputed_dir, &cell] {
        assert!(verify_checksums(dir).unwrap().is_empty());
        let scratch = root.join("scratch");
        let differing = pipeline::replay(dir, &scratch).unwrap();
        assert!(differing.is_empty(), "{}: {differing:?}", dir.display());
        let _ = std::fs::remove_dir_all(&scratch);
    }

    // a second full run in a fresh location reproduces every artifact
    let again = with_threads(1, || pipeline::expand_variant(&seed_dir, 1600, &DEFAULT_K_CANDIDATES, 20).unwrap().0);
    let again_dir = root.join("expanded-again");
    pipeline::save_variant(&again, &again_dir).unwrap();
    for f in ["edges.tsv", "features.bin", "labels.tsv", "manifest.json"] {
        assert_eq!(file_bytes(&exp_dir, f), file_bytes(&again_dir, f), "{f}");
    }

    let loaded = Dataset::load(&imputed_dir).unwrap();
    assert!(loaded.mask.is_some());
    assert!(pipeline::validate_variant(&exp_dir).unwrap().degree_passed);
}
