use cz_fidelity::estimators::{monte_carlo_fidelity, Sigma0Expansion};
use cz_fidelity::gate_model::model_choi;
use cz_fidelity::io::{format_counts, format_references, parse_counts, parse_references, SimulationConfig};
use cz_fidelity::pipeline::{estimate, run_sweep, simulate, EstimateOptions, SweepSpec};
use cz_fidelity::simulator::{simulate_counts, DriftProfile, ExperimentConfig};
use std::path::Path;

#[test]
fn simulate_estimate_round_trip() {
    let cfg = SimulationConfig {
        pair_rate: 2e4,
        visibility: Some(0.5),
        seed: Some(11),
        ..SimulationConfig::default()
    };
    let resolved = cfg.resolve(Path::new(".")).unwrap();
    let (counts, refs, meta) = simulate(&resolved).unwrap();
    let (table, meta_back) = parse_counts(&format_counts(&counts.to_table(), &meta)).unwrap();
    let refs_back = parse_references(&format_references(&refs)).unwrap();
    assert_eq!(meta_back, meta);
    let opts = EstimateOptions {
        expansions: Sigma0Expansion::ALL.to_vec(),
        renormalize: true,
        bootstrap_runs: 10,
        ..EstimateOptions::default()
    };
    let report = estimate(&table, Some(&refs_back), &meta_back, &opts).unwrap();
    assert!(report.tomography.converged);
    let sigma = report.tomography.sigma.unwrap();
    assert!((report.tomography.f_chi - 0.625).abs() < 3.0 * sigma.max(2e-3));
    let f_h = report.hofmann.f_h.unwrap();
    assert!((f_h.value - 0.5).abs() < 3.0 * f_h.uncertainty);
    assert_eq!(report.monte_carlo.len(), 3);
    assert_eq!(report.provenance.seed, 11);
}

#[test]
fn identical_seeds_give_identical_reports() {
    let cfg = ExperimentConfig::new(5e3, 3).with_drift(DriftProfile::random_walk(0.01));
    let chi = model_choi(0.8).unwrap();
    let a = simulate_counts(&cfg, &chi).unwrap();
    let b = simulate_counts(&cfg, &chi).unwrap();
    assert_eq!(a, b);
    let opts = EstimateOptions {
        bootstrap_runs: 4,
        seed: Some(5),
        ..EstimateOptions::default()
    };
    let meta = Default::default();
    let ra = estimate(&a.0.to_table(), None, &meta, &opts)
        .unwrap()
        .to_json()
        .unwrap();
    let rb = estimate(&b.0.to_table(), None, &meta, &opts)
        .unwrap()
        .to_json()
        .unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn uncertainty_scales_with_rate() {
    let chi = model_choi(0.953).unwrap();
    let mean_unc = |n: f64| {
        (0..10)
            .map(|s| {
                let (c, _) = simulate_counts(&ExperimentConfig::new(n, s), &chi).unwrap();
                monte_carlo_fidelity(&c.to_table(), Sigma0Expansion::Hv)
                    .unwrap()
                    .uncertainty
            })
            .sum::<f64>()
            / 10.0
    };
    let ratio = mean_unc(1e3) / mean_unc(1e5);
    assert!((ratio - 10.0).abs() < 0.5, "{ratio}");
}

#[test]
fn simulated_sweep_is_monotone_within_noise() {
    let spec: SweepSpec = serde_json::from_str(
        r#"{"start": 0.0, "stop": 1.0, "points": 5, "seed": 21, "experiment": {"pair_rate": 1e4}}"#,
    )
    .unwrap();
    let rows = run_sweep(&spec).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].f_chi >= w[0].f_chi - 0.01, "{:?}", w);
    }
    for r in &rows {
        assert!((r.f_chi - (1.0 + 3.0 * r.v) / 4.0).abs() < 0.02, "{r:?}");
    }
}
