//! Maximum-likelihood process tomography.
//!
//! The Poissonian log-likelihood `Σ C ln p − λ Tr[χ]` is maximized by the
//! symmetrized fixed-point iteration `χ ← RχR / Tr[RχR]` started from the
//! maximally mixed operator, with `R = Σ (C/p) Π`. The trace of `χ` is a free
//! parameter and is pinned to `trace_target` (1 by default).

use std::sync::LazyLock;

use log::{debug, warn};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantum::{
    cz_choi, min_eigenvalue, process_fidelity, trace_re, ChoiMatrix, Operator, ProbePair, CHOI_DIM, PSD_TOL,
};
use crate::simulator::{outcome_probabilities, poisson_draw, CountTable};

/// Relative probability floor: `p_floor = P_FLOOR_REL · Tr[χ]`.
pub const P_FLOOR_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxLikSettings {
    /// Stop when `|Rχ − λχ|₁ / C_tot` drops below this value.
    pub stop_threshold: f64,
    pub max_iterations: usize,
    pub trace_target: f64,
}

impl Default for MaxLikSettings {
    fn default() -> Self {
        MaxLikSettings {
            stop_threshold: 1e-5,
            max_iterations: 100_000,
            trace_target: 1.0,
        }
    }
}

impl MaxLikSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.stop_threshold > 0.0) {
            return Err(invalid("stop threshold must be positive"));
        }
        if !(self.trace_target > 0.0 && self.trace_target.is_finite()) {
            return Err(invalid("trace target must be positive"));
        }
        Ok(())
    }
}

/// Diagnostics for one evaluation of the extremal equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub log_likelihood: f64,
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub chi: ChoiMatrix,
    /// Number of `RχR` updates applied.
    pub iterations: usize,
    pub final_residual: f64,
    pub log_likelihood: f64,
    /// False when `max_iterations` was reached before the stopping rule.
    pub converged: bool,
    pub trajectory: Vec<IterationRecord>,
}

/// Evaluation of `R`, residual and log-likelihood at the current iterate.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub r: Operator,
    pub residual: f64,
    pub log_likelihood: f64,
    /// Number of terms where the probability floor was applied.
    pub floored: usize,
}

type Block = [[Complex64; 4]; 4];

/// Input projectors `Ψ_jk` and output kets `|Ψ_lm⟩` of the 36×36 settings.
struct Frame {
    inputs: Vec<Block>,
    outputs: Vec<[Complex64; 4]>,
}

fn frame() -> &'static Frame {
    static FRAME: LazyLock<Frame> = LazyLock::new(|| {
        let to_block = |m: &Operator| {
            let mut b = [[Complex64::new(0.0, 0.0); 4]; 4];
            for (i, row) in b.iter_mut().enumerate() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = m[(i, j)];
                }
            }
            b
        };
        Frame {
            inputs: ProbePair::all().map(|p| to_block(&p.projector())).collect(),
            outputs: ProbePair::all()
                .map(|p| {
                    let k = p.ket();
                    [k.0[0], k.0[1], k.0[2], k.0[3]]
                })
                .collect(),
        }
    });
    &FRAME
}

/// Stepwise driver for the `RχR` iteration.
///
/// Probabilities are evaluated block by block: for each input `Ψ_jk` the
/// unnormalized output `Tr_in[(Ψ_jkᵀ ⊗ I) χ]` is formed once and projected on
/// the 36 output kets, and `R = Σ_jk Ψ_jkᵀ ⊗ (Σ_lm (C/p) Ψ_lm)`. Settings
/// with zero counts contribute neither to `R` nor to the likelihood.
pub struct MaxLikSolver {
    counts: Vec<f64>,
    c_tot: f64,
    chi: Operator,
    settings: MaxLikSettings,
    iteration: usize,
}

impl MaxLikSolver {
    pub fn new(counts: &CountTable, settings: MaxLikSettings) -> Result<Self> {
        settings.validate()?;
        let c_tot = counts.total();
        if !(c_tot > 0.0) {
            return Err(Error::DegenerateData("all coincidence counts are zero".into()));
        }
        Ok(MaxLikSolver {
            counts: counts.values().to_vec(),
            c_tot,
            chi: ChoiMatrix::maximally_mixed(settings.trace_target).into_matrix(),
            settings,
            iteration: 0,
        })
    }

    /// Replaces the current iterate (e.g. to warm-start).
    pub fn with_start(mut self, chi: &ChoiMatrix) -> Result<Self> {
        self.chi = chi.with_trace(self.settings.trace_target)?.into_matrix();
        Ok(self)
    }

    pub fn chi(&self) -> &Operator {
        &self.chi
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn total_counts(&self) -> f64 {
        self.c_tot
    }

    pub fn evaluate(&self) -> Evaluation {
        evaluate(&self.counts, self.c_tot, &self.chi)
    }

    /// Applies `χ ← RχR / Tr[RχR] · trace_target`.
    pub fn step(&mut self, r: &Operator) -> Result<()> {
        let next = r * &self.chi * r;
        let tr = trace_re(&next);
        if !(tr > 0.0 && tr.is_finite()) {
            return Err(Error::Numerical(format!(
                "Tr[RχR] = {tr} at iteration {}",
                self.iteration
            )));
        }
        let next = next.scale(self.settings.trace_target / tr);
        self.chi = (&next + next.adjoint()).scale(0.5);
        self.iteration += 1;
        Ok(())
    }

    pub fn run(mut self) -> Result<ReconstructionResult> {
        let mut trajectory = Vec::new();
        loop {
            let eval = self.evaluate();
            if eval.floored > 0 {
                debug!(
                    "iteration {}: probability floor applied to {} terms",
                    self.iteration, eval.floored
                );
            }
            trajectory.push(IterationRecord {
                iteration: self.iteration,
                residual: eval.residual,
                log_likelihood: eval.log_likelihood,
            });
            let converged = eval.residual < self.settings.stop_threshold;
            if converged || self.iteration >= self.settings.max_iterations {
                if !converged {
                    warn!(
                        "maximum-likelihood iteration stopped at max_iterations = {} with residual {:.3e}",
                        self.settings.max_iterations, eval.residual
                    );
                }
                let chi = ChoiMatrix::from_computed(self.chi)?;
                return Ok(ReconstructionResult {
                    chi,
                    iterations: self.iteration,
                    final_residual: eval.residual,
                    log_likelihood: eval.log_likelihood,
                    converged,
                    trajectory,
                });
            }
            self.step(&eval.r)?;
        }
    }
}

fn evaluate(counts: &[f64], c_tot: f64, chi: &Operator) -> Evaluation {
    let zero = Complex64::new(0.0, 0.0);
    let frame = frame();
    let tr = trace_re(chi);
    let floor = P_FLOOR_REL * tr;
    let mut r = Operator::zeros(CHOI_DIM, CHOI_DIM);
    let mut log_likelihood = 0.0;
    let mut floored = 0;
    for (jk, psi) in frame.inputs.iter().enumerate() {
        let block = &counts[36 * jk..36 * jk + 36];
        if block.iter().all(|&c| c == 0.0) {
            continue;
        }
        // ρ_out[o][o'] = Σ_{c,a} Ψ[c][a] χ[4c+o][4a+o']
        let mut rho = [[zero; 4]; 4];
        for (c, psi_row) in psi.iter().enumerate() {
            for (a, &w) in psi_row.iter().enumerate() {
                if w == zero {
                    continue;
                }
                for (o, rho_row) in rho.iter_mut().enumerate() {
                    for (o2, x) in rho_row.iter_mut().enumerate() {
                        *x += w * chi[(4 * c + o, 4 * a + o2)];
                    }
                }
            }
        }
        let mut m = [[zero; 4]; 4];
        for (lm, &cnt) in block.iter().enumerate() {
            if cnt == 0.0 {
                continue;
            }
            let v = &frame.outputs[lm];
            let mut p = 0.0;
            for o in 0..4 {
                let mut acc = zero;
                for o2 in 0..4 {
                    acc += rho[o][o2] * v[o2];
                }
                p += (v[o].conj() * acc).re;
            }
            if p < floor {
                p = floor;
                floored += 1;
            }
            log_likelihood += cnt * p.ln();
            let g = cnt / p;
            for o in 0..4 {
                for o2 in 0..4 {
                    m[o][o2] += v[o] * v[o2].conj() * g;
                }
            }
        }
        // R += Ψᵀ ⊗ M
        for a in 0..4 {
            for b in 0..4 {
                let w = psi[b][a];
                if w == zero {
                    continue;
                }
                for o in 0..4 {
                    for o2 in 0..4 {
                        r[(4 * a + o, 4 * b + o2)] += w * m[o][o2];
                    }
                }
            }
        }
    }
    let r = (&r + r.adjoint()).scale(0.5);
    let lambda = c_tot / tr;
    log_likelihood -= lambda * tr;
    let residual = (&r * chi - chi.scale(lambda)).iter().map(|z| z.norm()).sum::<f64>() / c_tot;
    Evaluation {
        r,
        residual,
        log_likelihood,
        floored,
    }
}

/// `R = Σ (C_{jk,lm}/p_{jk,lm}) Π_{jk,lm}` for the given process and counts.
pub fn r_operator(chi: &ChoiMatrix, counts: &CountTable) -> Result<Operator> {
    if !(chi.trace() > 0.0) {
        return Err(invalid("R operator needs a Choi matrix with positive trace"));
    }
    let c_tot = counts.total();
    if c_tot == 0.0 {
        return Ok(Operator::zeros(CHOI_DIM, CHOI_DIM));
    }
    let eval = evaluate(counts.values(), c_tot, chi.matrix());
    if eval.floored > 0 {
        debug!("R operator: probability floor applied to {} terms", eval.floored);
    }
    Ok(eval.r)
}

/// `ln ℒ = Σ C ln p − λ Tr[χ]` with `λ = C_tot / Tr[χ]`.
pub fn log_likelihood(chi: &ChoiMatrix, counts: &CountTable) -> Result<f64> {
    let c_tot = counts.total();
    if !(c_tot > 0.0) {
        return Err(Error::DegenerateData("all coincidence counts are zero".into()));
    }
    Ok(evaluate(counts.values(), c_tot, chi.matrix()).log_likelihood)
}

/// Maximum-likelihood estimate of `χ` from (possibly real-valued) counts.
pub fn maxlik_reconstruct(counts: &CountTable, settings: MaxLikSettings) -> Result<ReconstructionResult> {
    MaxLikSolver::new(counts, settings)?.run()
}

/// Ensemble of process fidelities (against the ideal CZ) from parametric
/// bootstrap: Poisson resamples with means `C_tot p(χ̂) / (81 Tr[χ̂])`,
/// each reconstructed by maximum likelihood. Run `i` draws from stream
/// `i + 1` of a ChaCha generator seeded with `seed`.
pub fn bootstrap_fidelities(
    chi_hat: &ChoiMatrix,
    c_tot: f64,
    n_runs: usize,
    seed: u64,
    settings: MaxLikSettings,
) -> Result<Vec<f64>> {
    if n_runs < 2 {
        return Err(invalid("bootstrap needs at least two runs"));
    }
    if !(c_tot > 0.0) {
        return Err(invalid("bootstrap needs a positive total count"));
    }
    if chi_hat.min_eigenvalue() < -PSD_TOL * chi_hat.trace().max(1.0) {
        return Err(invalid("bootstrap centre is not PSD"));
    }
    let probs = outcome_probabilities(chi_hat)?;
    let means = probs.scaled(c_tot / (81.0 * chi_hat.trace()));
    let reference = cz_choi();
    (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let values = means
                .values()
                .iter()
                .map(|&m| poisson_draw(m, &mut rng) as f64)
                .collect();
            let resample = CountTable::from_values(values)?;
            let rec = maxlik_reconstruct(&resample, settings)?;
            process_fidelity(&rec.chi, &reference)
        })
        .collect()
}

/// One standard deviation of the bootstrap fidelity ensemble.
pub fn bootstrap_fidelity_uncertainty(
    chi_hat: &ChoiMatrix,
    c_tot: f64,
    n_runs: usize,
    seed: u64,
    settings: MaxLikSettings,
) -> Result<f64> {
    let f = bootstrap_fidelities(chi_hat, c_tot, n_runs, seed, settings)?;
    Ok(sample_std(&f))
}

pub(crate) fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Checks that an iterate is PSD within tolerance.
pub fn is_psd(chi: &Operator) -> bool {
    min_eigenvalue(chi) >= -PSD_TOL
}
