//! End-to-end drivers: simulate, estimate, report and visibility sweeps.

use std::fmt::Write as _;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::estimators::{
    hofmann_bounds, monte_carlo_fidelity, monte_carlo_fidelity_renormalized, Estimate, HofmannData,
    RenormalizedEstimate, Sigma0Expansion,
};
use crate::gate_model::{model_choi, model_fidelity, model_hofmann_curves, validate_visibility};
use crate::io::{CountsMetadata, ResolvedConfig};
use crate::quantum::{cz_choi, process_fidelity, ChoiMatrix};
use crate::simulator::{
    simulate_counts, CoincidenceTable, CountTable, DriftProfile, ExperimentConfig, ReferenceCounts,
};
use crate::tomography::{bootstrap_fidelity_uncertainty, maxlik_reconstruct, MaxLikSettings};

/// Runs the simulator for a resolved config and returns the counts metadata.
pub fn simulate(config: &ResolvedConfig) -> Result<(CoincidenceTable, ReferenceCounts, CountsMetadata)> {
    let (counts, refs) = simulate_counts(&config.experiment, &config.chi)?;
    let meta = CountsMetadata {
        seed: Some(config.experiment.seed),
        pair_rate: Some(config.experiment.pair_rate),
        visibility: config.echo.visibility,
    };
    Ok((counts, refs, meta))
}

/// Options of [`estimate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub expansions: Vec<Sigma0Expansion>,
    /// Also report `F̃_MC` from reference-renormalized counts.
    pub renormalize: bool,
    /// Number of bootstrap reconstructions for `σ(F_χ)`; 0 disables it.
    pub bootstrap_runs: usize,
    /// Bootstrap seed; falls back to the counts-file seed, then to 0.
    pub seed: Option<u64>,
    pub maxlik: MaxLikSettings,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            expansions: vec![Sigma0Expansion::Hv],
            renormalize: false,
            bootstrap_runs: 0,
            seed: None,
            maxlik: MaxLikSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographySummary {
    pub f_chi: f64,
    /// Bootstrap standard deviation, when requested.
    pub sigma: Option<f64>,
    pub bootstrap_runs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub log_likelihood: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEntry {
    pub expansion: Sigma0Expansion,
    pub label: String,
    pub f_mc: Estimate,
    pub f_mc_renormalized: Option<RenormalizedEstimate>,
}

/// Hofmann section of a report; `valid = false` when a row sum vanishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HofmannSummary {
    pub valid: bool,
    pub reason: Option<String>,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub f_h: Option<Estimate>,
    pub f_d: Option<Estimate>,
    pub min_f1_f2: Option<Estimate>,
    pub data: Option<HofmannData>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 over the estimation options and the count data.
    pub config_hash: String,
    pub seed: u64,
    pub expansions: Vec<String>,
    pub visibility: Option<f64>,
    pub pair_rate: Option<f64>,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub total_counts: f64,
    pub tomography: TomographySummary,
    pub monte_carlo: Vec<MonteCarloEntry>,
    pub hofmann: HofmannSummary,
    pub provenance: Provenance,
}

impl FidelityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn config_hash(options: &EstimateOptions, counts: &CountTable, refs: Option<&ReferenceCounts>) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(options)?);
    for v in counts.values() {
        h.update(v.to_le_bytes());
    }
    if let Some(r) = refs {
        for d in r.counts() {
            h.update(d.to_le_bytes());
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Evaluates every estimator on one count table.
pub fn estimate(
    counts: &CountTable,
    refs: Option<&ReferenceCounts>,
    meta: &CountsMetadata,
    options: &EstimateOptions,
) -> Result<FidelityReport> {
    if options.expansions.is_empty() {
        return Err(invalid("at least one σ0 expansion is required"));
    }
    if options.renormalize && refs.is_none() {
        return Err(invalid("renormalization needs reference counts"));
    }
    if options.bootstrap_runs == 1 {
        return Err(invalid("bootstrap needs at least two runs"));
    }
    let total = counts.total();
    if !(total > 0.0) {
        return Err(Error::DegenerateData("all coincidence counts are zero".into()));
    }
    let seed = options.seed.or(meta.seed).unwrap_or(0);

    let mut monte_carlo = Vec::with_capacity(options.expansions.len());
    for &e in &options.expansions {
        let f_mc_renormalized = match (options.renormalize, refs) {
            (true, Some(r)) => Some(monte_carlo_fidelity_renormalized(counts, r, e)?),
            _ => None,
        };
        monte_carlo.push(MonteCarloEntry {
            expansion: e,
            label: e.label(),
            f_mc: monte_carlo_fidelity(counts, e)?,
            f_mc_renormalized,
        });
    }

    let hofmann = match hofmann_bounds(counts) {
        Ok(b) => HofmannSummary {
            valid: true,
            reason: None,
            f1: Some(b.f1),
            f2: Some(b.f2),
            f_h: Some(b.f_h),
            f_d: Some(b.f_d),
            min_f1_f2: Some(b.min_f1_f2),
            data: Some(b.data),
        },
        Err(e) if e.is_degenerate() => HofmannSummary {
            valid: false,
            reason: Some(e.to_string()),
            f1: None,
            f2: None,
            f_h: None,
            f_d: None,
            min_f1_f2: None,
            data: None,
        },
        Err(e) => return Err(e),
    };

    let rec = maxlik_reconstruct(counts, options.maxlik)?;
    let f_chi = process_fidelity(&rec.chi, &cz_choi())?;
    info!("maximum likelihood: {} iterations, F_chi = {f_chi:.6}", rec.iterations);
    let sigma = if options.bootstrap_runs >= 2 {
        Some(bootstrap_fidelity_uncertainty(
            &rec.chi,
            total,
            options.bootstrap_runs,
            seed,
            options.maxlik,
        )?)
    } else {
        None
    };

    Ok(FidelityReport {
        total_counts: total,
        tomography: TomographySummary {
            f_chi,
            sigma,
            bootstrap_runs: options.bootstrap_runs,
            iterations: rec.iterations,
            converged: rec.converged,
            final_residual: rec.final_residual,
            log_likelihood: rec.log_likelihood,
        },
        monte_carlo,
        hofmann,
        provenance: Provenance {
            config_hash: config_hash(options, counts, refs)?,
            seed,
            expansions: options.expansions.iter().map(|e| e.label()).collect(),
            visibility: meta.visibility,
            pair_rate: meta.pair_rate,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

/// Formats `value` with three decimals and the uncertainty in units of the
/// last digit, e.g. `0.871(2)`.
pub fn format_uncertain(value: f64, uncertainty: Option<f64>) -> String {
    match uncertainty {
        Some(u) if u.is_finite() => format!("{value:.3}({})", (u * 1e3).round().max(1.0) as u64),
        _ => format!("{value:.3}"),
    }
}

/// Human-readable summary: one fidelity row and one block per expansion.
pub fn render_table(report: &FidelityReport) -> String {
    let mut out = String::new();
    let h = &report.hofmann;
    let cell = |e: Option<Estimate>| e.map_or("n/a".to_string(), |e| format_uncertain(e.value, Some(e.uncertainty)));
    let v = report
        .provenance
        .visibility
        .map_or("-".to_string(), |v| format!("{v:.3}"));
    let f_mc = report.monte_carlo.first().map_or("-".to_string(), |m| {
        format_uncertain(m.f_mc.value, Some(m.f_mc.uncertainty))
    });
    let _ = writeln!(
        out,
        "{:>7} {:>10} {:>10} {:>10} {:>10} {:>11}",
        "V", "F_D", "F_H", "F_chi", "F_MC", "min(F1,F2)"
    );
    let _ = writeln!(
        out,
        "{:>7} {:>10} {:>10} {:>10} {:>10} {:>11}",
        v,
        cell(h.f_d),
        cell(h.f_h),
        format_uncertain(report.tomography.f_chi, report.tomography.sigma),
        f_mc,
        cell(h.min_f1_f2)
    );
    if let Some(reason) = &h.reason {
        let _ = writeln!(out, "Hofmann bounds unavailable: {reason}");
    }
    out.push('\n');
    let _ = writeln!(out, "{:>7} {:>6} {:>10} {:>10}", "V", "sigma0", "F_MC", "F~_MC");
    for m in &report.monte_carlo {
        let tilde = m
            .f_mc_renormalized
            .map_or("-".to_string(), |r| format_uncertain(r.value, Some(r.uncertainty)));
        let _ = writeln!(
            out,
            "{:>7} {:>6} {:>10} {:>10}",
            v,
            m.label,
            format_uncertain(m.f_mc.value, Some(m.f_mc.uncertainty)),
            tilde
        );
    }
    out
}

/// Experiment settings shared by all points of a simulated sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOverrides {
    pub pair_rate: f64,
    pub drift: DriftProfile,
    pub noise_admixture: f64,
}

impl Default for SweepOverrides {
    fn default() -> Self {
        SweepOverrides {
            pair_rate: 1e4,
            drift: DriftProfile::default(),
            noise_admixture: 0.0,
        }
    }
}

/// Visibility grid `start..=stop` with `points` evenly spaced values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    /// Evaluate the closed-form model instead of simulating.
    #[serde(default)]
    pub analytic: bool,
    /// Master seed; point `i` uses a seed derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub experiment: SweepOverrides,
}

impl SweepSpec {
    pub fn analytic(start: f64, stop: f64, points: usize) -> Self {
        SweepSpec {
            start,
            stop,
            points,
            analytic: true,
            seed: 0,
            experiment: SweepOverrides::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(invalid("a sweep needs at least two points"));
        }
        for v in [self.start, self.stop] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("sweep visibility {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.points - 1;
        (0..self.points)
            .map(|i| {
                if i == n {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * i as f64 / n as f64
                }
            })
            .collect()
    }
}

/// Sub-seed for grid point `index`: the first eight bytes of
/// `SHA-256(master ‖ index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub v: f64,
    pub f_chi: f64,
    pub f_h: f64,
    pub f_d: f64,
}

fn sweep_point(spec: &SweepSpec, index: usize, v: f64) -> Result<SweepRow> {
    if spec.analytic {
        let c = model_hofmann_curves(v)?;
        return Ok(SweepRow {
            v,
            f_chi: model_fidelity(v)?,
            f_h: c.f_h,
            f_d: c.f_d,
        });
    }
    let v = validate_visibility(v)?;
    let experiment = ExperimentConfig {
        pair_rate: spec.experiment.pair_rate,
        drift: spec.experiment.drift.clone(),
        seed: derive_seed(spec.seed, index as u64),
        noise_admixture: spec.experiment.noise_admixture,
    };
    let (counts, _) = simulate_counts(&experiment, &model_choi(v)?)?;
    let counts = counts.to_table();
    let rec = maxlik_reconstruct(&counts, MaxLikSettings::default())?;
    let bounds = hofmann_bounds(&counts)?;
    Ok(SweepRow {
        v,
        f_chi: process_fidelity(&rec.chi, &cz_choi())?,
        f_h: bounds.f_h.value,
        f_d: bounds.f_d.value,
    })
}

/// Evaluates every grid point (in parallel) and returns rows in grid order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    spec.grid()
        .into_par_iter()
        .enumerate()
        .map(|(i, v)| sweep_point(spec, i, v))
        .collect()
}

/// CSV with columns `V,F_chi,F_H,F_D`.
pub fn format_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("V,F_chi,F_H,F_D\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.v, r.f_chi, r.f_h, r.f_d);
    }
    out
}

/// Maximum-likelihood reconstruction used by the `reconstruct` command.
pub fn reconstruct(counts: &CountTable, settings: MaxLikSettings) -> Result<(ChoiMatrix, f64)> {
    let rec = maxlik_reconstruct(counts, settings)?;
    let f = process_fidelity(&rec.chi, &cz_choi())?;
    Ok((rec.chi, f))
}
