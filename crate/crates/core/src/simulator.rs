//! Synthetic coincidence data for the 36×36 tomographic measurement.
//!
//! Each of the 36 input probes is measured in a row: 36 projection settings
//! (ordered by measurement-basis pair) followed by one reference window
//! (input `HH`, projection `HH`). Every setting occupies one abstract
//! acquisition window, and the source rate is multiplied by a drift factor
//! evaluated at that window.

use std::f64::consts::PI;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantum::{measurement_matrix, ChoiMatrix, Probe, ProbePair, Setting, SETTINGS};

/// Number of input blocks (and reference measurements).
pub const BLOCKS: usize = 36;
/// Windows per block: 36 settings plus the reference.
pub const WINDOWS_PER_BLOCK: usize = 37;
/// Total number of acquisition windows in one run.
pub const TOTAL_WINDOWS: usize = BLOCKS * WINDOWS_PER_BLOCK;
/// Nominal acquisition time per window; metadata only.
pub const WINDOW_SECONDS: f64 = 30.0;

const CLAMP_WARN: f64 = 1e-10;

/// Real-valued table over the 36×36 settings, indexed by [`Setting::index`].
///
/// Holds probabilities, expected counts, raw counts converted to reals, or
/// renormalized counts.
#[derive(Clone, Debug, PartialEq)]
pub struct CountTable {
    values: Vec<f64>,
}

/// Outcome probabilities `p_{jk,lm}` share the count-table layout.
pub type ProbabilityTable = CountTable;

impl CountTable {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != SETTINGS {
            return Err(invalid(format!(
                "table must have {SETTINGS} entries, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!(
                "table entries must be finite and nonnegative, found {bad}"
            )));
        }
        Ok(CountTable { values })
    }

    pub fn zeros() -> Self {
        CountTable {
            values: vec![0.0; SETTINGS],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, setting: Setting) -> f64 {
        self.values[setting.index()]
    }

    pub fn set(&mut self, setting: Setting, value: f64) {
        self.values[setting.index()] = value;
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sum over the 36 outcomes of one input block.
    pub fn block_total(&self, input: ProbePair) -> f64 {
        let start = 36 * input.index();
        self.values[start..start + 36].iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        CountTable {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// Integer coincidence counts `C_{jk,lm}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoincidenceTable {
    counts: Vec<u64>,
}

impl CoincidenceTable {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.len() != SETTINGS {
            return Err(invalid(format!(
                "table must have {SETTINGS} entries, got {}",
                counts.len()
            )));
        }
        Ok(CoincidenceTable { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, setting: Setting) -> u64 {
        self.counts[setting.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_table(&self) -> CountTable {
        CountTable {
            values: self.counts.iter().map(|&c| c as f64).collect(),
        }
    }
}

/// Reference coincidences `D_{jk}`, one per input block, with the window
/// in which each was recorded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReferenceCounts {
    counts: Vec<u64>,
    windows: Vec<usize>,
}

impl ReferenceCounts {
    pub fn new(counts: Vec<u64>, windows: Vec<usize>) -> Result<Self> {
        if counts.len() != BLOCKS || windows.len() != BLOCKS {
            return Err(invalid(format!("need {BLOCKS} reference counts and windows")));
        }
        Ok(ReferenceCounts { counts, windows })
    }

    /// All blocks get the same reference value `d`, at the nominal windows.
    pub fn uniform(d: u64) -> Self {
        ReferenceCounts {
            counts: vec![d; BLOCKS],
            windows: (0..BLOCKS).map(reference_window).collect(),
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn windows(&self) -> &[usize] {
        &self.windows
    }

    pub fn get(&self, input: ProbePair) -> u64 {
        self.counts[input.index()]
    }
}

/// Window index of the reference measurement that closes block `block`.
pub fn reference_window(block: usize) -> usize {
    block * WINDOWS_PER_BLOCK + BLOCKS
}

/// The 36 projections of one block in acquisition order: grouped by the
/// pair of measurement bases (H/V, D/A, R/L) of the two analyzers.
pub fn projection_order() -> [ProbePair; 36] {
    let mut order = [ProbePair(Probe::H, Probe::H); 36];
    let mut n = 0;
    for bl in 0..3 {
        for bm in 0..3 {
            for sl in 0..2 {
                for sm in 0..2 {
                    order[n] = ProbePair(Probe::ALL[2 * bl + sl], Probe::ALL[2 * bm + sm]);
                    n += 1;
                }
            }
        }
    }
    order
}

/// `(setting, window)` for every coincidence measurement in acquisition order.
pub fn acquisition_schedule() -> Vec<(Setting, usize)> {
    let order = projection_order();
    ProbePair::all()
        .enumerate()
        .flat_map(|(block, input)| {
            order
                .iter()
                .enumerate()
                .map(move |(pos, &output)| (Setting { input, output }, block * WINDOWS_PER_BLOCK + pos))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftKind {
    #[default]
    Constant,
    Linear,
    Sinusoidal,
    RandomWalk,
}

/// Slow source-rate variation over the acquisition windows.
///
/// * `linear`: `1 + amplitude (2t/(T-1) - 1)`; the sign of `amplitude`
///   sets the direction of the trend.
/// * `sinusoidal`: `1 + amplitude sin(2π t / period)`.
/// * `random-walk`: Gaussian increments of width `step` per window, from 1.
///
/// Multipliers are clamped to `[0.5, 1.5]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftProfile {
    pub kind: DriftKind,
    pub amplitude: f64,
    pub period: f64,
    pub step: f64,
}

impl Default for DriftProfile {
    fn default() -> Self {
        DriftProfile {
            kind: DriftKind::Constant,
            amplitude: 0.0,
            period: TOTAL_WINDOWS as f64,
            step: 0.0,
        }
    }
}

impl DriftProfile {
    pub fn constant() -> Self {
        Self::default()
    }

    pub fn linear(amplitude: f64) -> Self {
        DriftProfile {
            kind: DriftKind::Linear,
            amplitude,
            ..Self::default()
        }
    }

    pub fn sinusoidal(amplitude: f64, period: f64) -> Self {
        DriftProfile {
            kind: DriftKind::Sinusoidal,
            amplitude,
            period,
            ..Self::default()
        }
    }

    pub fn random_walk(step: f64) -> Self {
        DriftProfile {
            kind: DriftKind::RandomWalk,
            step,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() || !self.step.is_finite() || self.step < 0.0 {
            return Err(invalid("drift amplitude/step must be finite, step nonnegative"));
        }
        if self.kind == DriftKind::Sinusoidal && !(self.period > 0.0) {
            return Err(invalid("sinusoidal drift needs a positive period"));
        }
        Ok(())
    }

    /// Rate multiplier for each of `windows` windows.
    pub fn multipliers<R: Rng>(&self, windows: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        let raw: Vec<f64> = match self.kind {
            DriftKind::Constant => vec![1.0; windows],
            DriftKind::Linear => {
                let span = windows.saturating_sub(1).max(1) as f64;
                (0..windows)
                    .map(|t| 1.0 + self.amplitude * (2.0 * t as f64 / span - 1.0))
                    .collect()
            }
            DriftKind::Sinusoidal => (0..windows)
                .map(|t| 1.0 + self.amplitude * (2.0 * PI * t as f64 / self.period).sin())
                .collect(),
            DriftKind::RandomWalk => {
                let normal = Normal::new(0.0, self.step).map_err(|e| invalid(e.to_string()))?;
                let mut m = 1.0;
                (0..windows)
                    .map(|_| {
                        let current = m;
                        m = (m + normal.sample(rng)).clamp(0.5, 1.5);
                        current
                    })
                    .collect()
            }
        };
        Ok(raw.into_iter().map(|m| m.clamp(0.5, 1.5)).collect())
    }
}

/// Parameters of one simulated acquisition run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Mean number of detected pairs per window, `N`.
    pub pair_rate: f64,
    pub drift: DriftProfile,
    pub seed: u64,
    /// Weight of white noise `Tr[χ] I/16` mixed into the simulated process.
    pub noise_admixture: f64,
}

impl ExperimentConfig {
    pub fn new(pair_rate: f64, seed: u64) -> Self {
        ExperimentConfig {
            pair_rate,
            drift: DriftProfile::default(),
            seed,
            noise_admixture: 0.0,
        }
    }

    pub fn with_drift(mut self, drift: DriftProfile) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_noise(mut self, noise_admixture: f64) -> Self {
        self.noise_admixture = noise_admixture;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pair_rate > 0.0 && self.pair_rate.is_finite()) {
            return Err(invalid(format!("pair rate {} must be positive", self.pair_rate)));
        }
        if !(0.0..1.0).contains(&self.noise_admixture) {
            return Err(invalid(format!(
                "noise admixture {} outside [0, 1)",
                self.noise_admixture
            )));
        }
        self.drift.validate()
    }
}

/// `p_{jk,lm} = Tr[Ψ_jkᵀ ⊗ Ψ_lm χ]` for all 36×36 settings.
///
/// Round-off negatives are clamped to zero; their sum equals `81 Tr[χ]`.
pub fn outcome_probabilities(chi: &ChoiMatrix) -> Result<ProbabilityTable> {
    let w = measurement_matrix();
    let m = w * chi.matrix();
    let mut worst_clamp: f64 = 0.0;
    let values = (0..SETTINGS)
        .map(|n| {
            let p: f64 = (0..16).map(|c| (m[(n, c)] * w[(n, c)].conj()).re).sum();
            if p < 0.0 {
                worst_clamp = worst_clamp.max(-p);
                0.0
            } else {
                p
            }
        })
        .collect();
    if worst_clamp > 0.0 {
        debug!("clamped negative outcome probabilities, largest magnitude {worst_clamp:.3e}");
    }
    if worst_clamp > CLAMP_WARN * chi.trace().max(1.0) {
        return Err(Error::Numerical(format!(
            "outcome probability of {:.3e} below zero for a PSD process",
            -worst_clamp
        )));
    }
    Ok(CountTable { values })
}

/// Noise-free counts `N p_{jk,lm}`.
pub fn expected_counts(chi: &ChoiMatrix, pair_rate: f64) -> Result<CountTable> {
    Ok(outcome_probabilities(chi)?.scaled(pair_rate))
}

/// Mixes white noise of weight `eps` into `chi`, preserving its trace.
pub fn admix_white_noise(chi: &ChoiMatrix, eps: f64) -> Result<ChoiMatrix> {
    if eps == 0.0 {
        return Ok(chi.clone());
    }
    chi.mix(&ChoiMatrix::maximally_mixed(chi.trace()), eps)
}

pub(crate) fn poisson_draw<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive Poisson mean").sample(rng) as u64
}

/// Simulates one full acquisition run with Poissonian counts.
///
/// Output is a deterministic function of `config` and `chi`.
pub fn simulate_counts(config: &ExperimentConfig, chi: &ChoiMatrix) -> Result<(CoincidenceTable, ReferenceCounts)> {
    config.validate()?;
    let chi = admix_white_noise(chi, config.noise_admixture)?;
    let probs = outcome_probabilities(&chi)?;
    let reference_p = probs.get(Setting {
        input: ProbePair(Probe::H, Probe::H),
        output: ProbePair(Probe::H, Probe::H),
    });

    let mut drift_rng = ChaCha8Rng::seed_from_u64(config.seed);
    drift_rng.set_stream(1);
    let drift = config.drift.multipliers(TOTAL_WINDOWS, &mut drift_rng)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut counts = vec![0u64; SETTINGS];
    let mut refs = Vec::with_capacity(BLOCKS);
    let mut ref_windows = Vec::with_capacity(BLOCKS);
    let schedule = acquisition_schedule();
    for block in schedule.chunks(BLOCKS) {
        for &(setting, window) in block {
            let mean = config.pair_rate * drift[window] * probs.get(setting);
            counts[setting.index()] = poisson_draw(mean, &mut rng);
        }
        let window = reference_window(block[0].0.input.index());
        refs.push(poisson_draw(config.pair_rate * drift[window] * reference_p, &mut rng));
        ref_windows.push(window);
    }
    Ok((CoincidenceTable { counts }, ReferenceCounts::new(refs, ref_windows)?))
}

/// `C̃_{jk,lm} = C_{jk,lm} / D_{jk}`.
pub fn renormalize_counts(counts: &CountTable, refs: &ReferenceCounts) -> Result<CountTable> {
    check_references(refs)?;
    let values = (0..SETTINGS)
        .map(|n| counts.values[n] / refs.counts[n / 36] as f64)
        .collect();
    Ok(CountTable { values })
}

pub(crate) fn check_references(refs: &ReferenceCounts) -> Result<()> {
    if let Some(block) = refs.counts.iter().position(|&d| d == 0) {
        return Err(Error::DegenerateReference {
            block: ProbePair::from_index(block).to_string(),
        });
    }
    Ok(())
}
