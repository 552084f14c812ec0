mod common;

use gadforge::detectors::MlpaeConfig;
use gadforge::eval::{parse_bytes, run_benchmark, Budgets, DetectorSpec, RunStatus};
use gadforge::metrics::split_nodes;

#[test]
fn benchmark_reports_metrics_and_resources() {
    let (g, l) = common::small_graph(600, 9);
    let split = split_nodes(600, &l, (0.7, 0.1, 0.2), true, 20).unwrap();
    let detectors = [
        DetectorSpec::Degree,
        DetectorSpec::Knn { k: 5 },
        DetectorSpec::Mlpae(MlpaeConfig { epochs: 5, hidden_dims: vec![8, 4], ..Default::default() }),
    ];
    for det in &detectors {
        let budgets = Budgets { memory_bytes: Some(parse_bytes("8GB").unwrap()) };
        let a = run_benchmark(&g, &l, "small", "ref", det, &split, &budgets);
        assert_eq!(a.status, RunStatus::Ok, "{a:?}");
        assert!(a.runtime_seconds > 0.0);
        assert!(a.peak_memory_bytes > 0);
        for m in [a.auc_roc, a.auc_pr, a.recall_at_k] {
            assert!((0.0..=1.0).contains(&m.unwrap()));
        }
        assert_eq!(a.k_used, Some(split.test_ids.iter().filter(|&&i| l.is_anomaly(i as usize)).count()));
        let b = run_benchmark(&g, &l, "small", "ref", det, &split, &budgets);
        assert_eq!((a.auc_roc, a.auc_pr, a.recall_at_k), (b.auc_roc, b.auc_pr, b.recall_at_k));
    }
}

#[test]
fn tiny_budget_yields_oom_status() {
    let (g, l) = common::small_graph(300, 10);
    let split = split_nodes(300, &l, (0.7, 0.1, 0.2), true, 20).unwrap();
    let budgets = Budgets { memory_bytes: Some(parse_bytes("1MB").unwrap()) };
    for det in [DetectorSpec::Degree, DetectorSpec::Mlpae(MlpaeConfig::default())] {
        let r = run_benchmark(&g, &l, "small", "ref", &det, &split, &budgets);
        assert_eq!(r.status, RunStatus::OomBudgetExceeded);
        assert!(r.auc_roc.is_none() && r.auc_pr.is_none() && r.recall_at_k.is_none());
        assert!(r.peak_memory_bytes > 1 << 20);
        assert!(r.runtime_seconds >= 0.0);
    }
}
