//! Linear fidelity estimators computed directly from coincidence tables.
//!
//! * Monte-Carlo (direct) estimation: `F_MC = (81/4) Σ u C / Σ C`, with the
//!   `u` table assembled from the Pauli coefficients of `χ_CZ` and a chosen
//!   projector decomposition of the single-qubit identity.
//! * Weighted (`F_H`) and unweighted (`F_D`) Hofmann bounds from two mutually
//!   unbiased product bases.
//!
//! All functions are pure and may be called concurrently.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantum::{
    cz_choi, cz_unitary, identity, min_eigenvalue, HofmannBasis, Operator, Probe, ProbePair, Setting, CHOI_DIM,
    SETTINGS,
};
use crate::simulator::{check_references, renormalize_counts, CountTable, ReferenceCounts};

/// Prefactor of the linear estimator.
pub const MC_PREFACTOR: f64 = 81.0 / 4.0;

/// Nonzero Pauli coefficients `s_abcd` of `χ_CZ`, indexed `(a, b, c, d)` over
/// the slots (input 1, input 2, output 1, output 2).
pub const CZ_PAULI_COEFFICIENTS: [([usize; 4], f64); 16] = [
    ([0, 0, 0, 0], 0.25),
    ([0, 1, 3, 1], 0.25),
    ([0, 2, 3, 2], -0.25),
    ([0, 3, 0, 3], 0.25),
    ([1, 0, 1, 3], 0.25),
    ([1, 1, 2, 2], 0.25),
    ([1, 2, 2, 1], 0.25),
    ([1, 3, 1, 0], 0.25),
    ([2, 0, 2, 3], -0.25),
    ([2, 1, 1, 2], 0.25),
    ([2, 2, 1, 1], 0.25),
    ([2, 3, 2, 0], -0.25),
    ([3, 0, 3, 0], 0.25),
    ([3, 1, 0, 1], 0.25),
    ([3, 2, 0, 2], -0.25),
    ([3, 3, 3, 3], 0.25),
];

/// Decomposition of `σ₀` into a pair of orthogonal probe projectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sigma0Expansion {
    /// `σ₀ = |H⟩⟨H| + |V⟩⟨V|`
    Hv,
    /// `σ₀ = |D⟩⟨D| + |A⟩⟨A|`
    Da,
    /// `σ₀ = |R⟩⟨R| + |L⟩⟨L|`
    Rl,
}

impl Sigma0Expansion {
    pub const ALL: [Sigma0Expansion; 3] = [Sigma0Expansion::Hv, Sigma0Expansion::Da, Sigma0Expansion::Rl];

    pub fn projectors(self) -> [Probe; 2] {
        match self {
            Sigma0Expansion::Hv => [Probe::H, Probe::V],
            Sigma0Expansion::Da => [Probe::D, Probe::A],
            Sigma0Expansion::Rl => [Probe::R, Probe::L],
        }
    }

    /// Short lowercase name (`hv`, `da`, `rl`).
    pub fn name(self) -> &'static str {
        match self {
            Sigma0Expansion::Hv => "hv",
            Sigma0Expansion::Da => "da",
            Sigma0Expansion::Rl => "rl",
        }
    }

    /// Table label such as `H/V`.
    pub fn label(self) -> String {
        let [a, b] = self.projectors();
        format!("{a}/{b}")
    }

    /// `Σ` of the two projectors; equals the 2×2 identity.
    pub fn resum(self) -> Operator {
        let [a, b] = self.projectors();
        a.projector() + b.projector()
    }

    /// Weights `d_a[j]` with `σ_a = Σ_j d_a[j] |ψ_j⟩⟨ψ_j|`.
    ///
    /// On an input slot the measured operator is the transpose of the probe
    /// projector; since `|R⟩⟨R|ᵀ = |L⟩⟨L|` the `σ₂` weights change sign there
    /// (and the `R/L` expansion of `σ₀` is unaffected).
    fn slot_weights(self, pauli: usize, input_slot: bool) -> [f64; 6] {
        let mut w = [0.0; 6];
        match pauli {
            0 => {
                for p in self.projectors() {
                    w[p.index()] = 1.0;
                }
            }
            1 => {
                w[Probe::D.index()] = 1.0;
                w[Probe::A.index()] = -1.0;
            }
            2 => {
                let s = if input_slot { -1.0 } else { 1.0 };
                w[Probe::R.index()] = s;
                w[Probe::L.index()] = -s;
            }
            _ => {
                w[Probe::H.index()] = 1.0;
                w[Probe::V.index()] = -1.0;
            }
        }
        w
    }
}

impl fmt::Display for Sigma0Expansion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Sigma0Expansion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hv" | "h/v" => Ok(Sigma0Expansion::Hv),
            "da" | "d/a" => Ok(Sigma0Expansion::Da),
            "rl" | "r/l" => Ok(Sigma0Expansion::Rl),
            _ => Err(invalid(format!("unknown σ0 expansion {s:?} (expected hv, da or rl)"))),
        }
    }
}

/// Coefficients `u_{jk,lm}` over the 36×36 settings, flat-indexed like
/// [`Setting::index`].
#[derive(Clone, Debug, PartialEq)]
pub struct UCoefficients {
    expansion: Sigma0Expansion,
    values: Vec<f64>,
}

impl UCoefficients {
    pub fn expansion(&self) -> Sigma0Expansion {
        self.expansion
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, setting: Setting) -> f64 {
        self.values[setting.index()]
    }

    /// `Σ u_n x_n`.
    pub fn contract(&self, x: &[f64]) -> f64 {
        self.values.iter().zip(x).map(|(u, x)| u * x).sum()
    }
}

fn build_u(expansion: Sigma0Expansion) -> UCoefficients {
    let mut values = vec![0.0; SETTINGS];
    for ([a, b, c, d], s) in CZ_PAULI_COEFFICIENTS {
        let wa = expansion.slot_weights(a, true);
        let wb = expansion.slot_weights(b, true);
        let wc = expansion.slot_weights(c, false);
        let wd = expansion.slot_weights(d, false);
        for (n, u) in values.iter_mut().enumerate() {
            let st = Setting::from_index(n);
            let w = wa[st.input.0.index()] * wb[st.input.1.index()] * wc[st.output.0.index()] * wd[st.output.1.index()];
            if w != 0.0 {
                *u += s * w;
            }
        }
    }
    UCoefficients { expansion, values }
}

/// The `u` table for one `σ₀` expansion, satisfying `Σ u p(χ) = Tr[χ χ_CZ]`
/// for every Hermitian `χ`.
pub fn u_coefficients(expansion: Sigma0Expansion) -> &'static UCoefficients {
    static TABLES: LazyLock<[UCoefficients; 3]> = LazyLock::new(|| Sigma0Expansion::ALL.map(build_u));
    &TABLES[expansion as usize]
}

/// A point estimate with its standard uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub uncertainty: f64,
}

/// `F_MC` and `ΔF_MC` with
/// `ΔF_MC² = (1/C_tot) Σ (C/C_tot) ((81/4) u − F_MC)²`.
pub fn monte_carlo_fidelity(counts: &CountTable, expansion: Sigma0Expansion) -> Result<Estimate> {
    let c_tot = counts.total();
    if !(c_tot > 0.0) {
        return Err(Error::DegenerateData("all coincidence counts are zero".into()));
    }
    let u = u_coefficients(expansion);
    let value = MC_PREFACTOR * u.contract(counts.values()) / c_tot;
    let var = counts
        .values()
        .iter()
        .zip(u.values())
        .map(|(&c, &u)| c * (MC_PREFACTOR * u - value).powi(2))
        .sum::<f64>()
        / (c_tot * c_tot);
    Ok(Estimate {
        value,
        uncertainty: var.max(0.0).sqrt(),
    })
}

/// `F̃_MC` from the drift-corrected counts `C̃ = C / D` and its uncertainty,
/// split into the contribution of the coincidences and of the reference counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedEstimate {
    pub value: f64,
    pub uncertainty: f64,
    /// Standard deviation from Poisson fluctuations of `C`.
    pub c_term: f64,
    /// Standard deviation from Poisson fluctuations of `D`.
    pub d_term: f64,
}

pub fn monte_carlo_fidelity_renormalized(
    counts: &CountTable,
    refs: &ReferenceCounts,
    expansion: Sigma0Expansion,
) -> Result<RenormalizedEstimate> {
    check_references(refs)?;
    let tilde = renormalize_counts(counts, refs)?;
    let ct_tot = tilde.total();
    if !(ct_tot > 0.0) {
        return Err(Error::DegenerateData("all coincidence counts are zero".into()));
    }
    let u = u_coefficients(expansion);
    let value = MC_PREFACTOR * u.contract(tilde.values()) / ct_tot;
    let mut c_var = 0.0;
    let mut d_var = 0.0;
    for input in ProbePair::all() {
        let d = refs.get(input) as f64;
        let mut block = 0.0;
        for output in ProbePair::all() {
            let st = Setting { input, output };
            let ct = tilde.get(st);
            let g = MC_PREFACTOR * u.get(st) - value;
            c_var += ct / d * g * g;
            block += ct * g;
        }
        d_var += block * block / d;
    }
    let norm = ct_tot * ct_tot;
    let (c_var, d_var) = (c_var / norm, d_var / norm);
    Ok(RenormalizedEstimate {
        value,
        uncertainty: (c_var + d_var).max(0.0).sqrt(),
        c_term: c_var.max(0.0).sqrt(),
        d_term: d_var.max(0.0).sqrt(),
    })
}

/// Counts and derived quantities for one Hofmann basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HofmannBasisData {
    pub basis: HofmannBasis,
    /// `C_{j,j'}`: input `ω_j`, projection onto `U_CZ |ω_j'⟩`.
    pub counts: [[f64; 4]; 4],
    /// `S_j = Σ_j' C_{j,j'}`.
    pub row_sums: [f64; 4],
    /// `f_j = C_{j,j} / S_j`.
    pub state_fidelities: [f64; 4],
    /// `P_j = S_j / Σ S`.
    pub relative_probabilities: [f64; 4],
    /// `F_k = Σ C_{j,j} / Σ S`.
    pub weighted_fidelity: f64,
    /// `F̄_k = Σ f_j / 4`.
    pub mean_fidelity: f64,
}

impl HofmannBasisData {
    pub fn from_counts(counts: &CountTable, basis: HofmannBasis) -> Result<Self> {
        let states = basis.states();
        let outputs = basis.ideal_outputs();
        let mut c = [[0.0; 4]; 4];
        for (j, &input) in states.iter().enumerate() {
            for (jp, &output) in outputs.iter().enumerate() {
                c[j][jp] = counts.get(Setting { input, output });
            }
        }
        let row_sums = c.map(|row| row.iter().sum::<f64>());
        if let Some(j) = row_sums.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::DegenerateData(format!(
                "Hofmann row sum for input {} is zero",
                states[j]
            )));
        }
        let total: f64 = row_sums.iter().sum();
        let state_fidelities: [f64; 4] = std::array::from_fn(|j| c[j][j] / row_sums[j]);
        let relative_probabilities = row_sums.map(|s| s / total);
        let good: f64 = (0..4).map(|j| c[j][j]).sum();
        Ok(HofmannBasisData {
            basis,
            counts: c,
            row_sums,
            state_fidelities,
            relative_probabilities,
            weighted_fidelity: good / total,
            mean_fidelity: state_fidelities.iter().sum::<f64>() / 4.0,
        })
    }

    pub fn total(&self) -> f64 {
        self.row_sums.iter().sum()
    }

    /// `ΔP_j = P_j − 1/4`.
    pub fn probability_deviations(&self) -> [f64; 4] {
        self.relative_probabilities.map(|p| p - 0.25)
    }

    /// `Δf_j = f_j − F̄_k`.
    pub fn fidelity_deviations(&self) -> [f64; 4] {
        self.state_fidelities.map(|f| f - self.mean_fidelity)
    }
}

/// Both Hofmann bases extracted from one 36×36 table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HofmannData {
    pub bases: [HofmannBasisData; 2],
}

impl HofmannData {
    pub fn from_counts(counts: &CountTable) -> Result<Self> {
        Ok(HofmannData {
            bases: [
                HofmannBasisData::from_counts(counts, HofmannBasis::First)?,
                HofmannBasisData::from_counts(counts, HofmannBasis::Second)?,
            ],
        })
    }

    pub fn f1(&self) -> f64 {
        self.bases[0].weighted_fidelity
    }

    pub fn f2(&self) -> f64 {
        self.bases[1].weighted_fidelity
    }
}

/// Weighted and unweighted Hofmann bounds with their uncertainties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HofmannBounds {
    pub data: HofmannData,
    pub f1: f64,
    pub f2: f64,
    /// `F_H = F₁ + F₂ − 1`; may be negative.
    pub f_h: Estimate,
    /// `F_D = F̄₁ + F̄₂ − 1`.
    pub f_d: Estimate,
    /// Upper bound `min(F₁, F₂)` with the binomial uncertainty
    /// `√(F_k(1−F_k)/Σ_j S_j^k)` of the smaller one.
    pub min_f1_f2: Estimate,
}

/// `ΔF_H² = Σ_k F_k(1−F_k) / Σ_j S_j^k` and
/// `ΔF_D² = (1/16) Σ_k Σ_j f(1−f) / S_j^k`.
pub fn hofmann_bounds(counts: &CountTable) -> Result<HofmannBounds> {
    let data = HofmannData::from_counts(counts)?;
    let (f1, f2) = (data.f1(), data.f2());
    let var_h: f64 = data
        .bases
        .iter()
        .map(|b| b.weighted_fidelity * (1.0 - b.weighted_fidelity) / b.total())
        .sum();
    let var_d: f64 = data
        .bases
        .iter()
        .flat_map(|b| (0..4).map(move |j| b.state_fidelities[j] * (1.0 - b.state_fidelities[j]) / b.row_sums[j]))
        .sum::<f64>()
        / 16.0;
    let f_d = data.bases[0].mean_fidelity + data.bases[1].mean_fidelity - 1.0;
    let low = if f1 <= f2 { &data.bases[0] } else { &data.bases[1] };
    let min_f1_f2 = Estimate {
        value: low.weighted_fidelity,
        uncertainty: (low.weighted_fidelity * (1.0 - low.weighted_fidelity) / low.total())
            .max(0.0)
            .sqrt(),
    };
    Ok(HofmannBounds {
        f1,
        f2,
        f_h: Estimate {
            value: f1 + f2 - 1.0,
            uncertainty: var_h.max(0.0).sqrt(),
        },
        f_d: Estimate {
            value: f_d,
            uncertainty: var_d.max(0.0).sqrt(),
        },
        min_f1_f2,
        data,
    })
}

/// Correlation term `Σ_k Σ_j ΔP_{j,k} Δf_{j,k}`, equal to
/// `(F₁ + F₂) − (F̄₁ + F̄₂) = F_H − F_D`.
pub fn bound_gap_decomposition(data: &HofmannData) -> f64 {
    data.bases
        .iter()
        .map(|b| {
            let dp = b.probability_deviations();
            let df = b.fidelity_deviations();
            (0..4).map(|j| dp[j] * df[j]).sum::<f64>()
        })
        .sum()
}

/// `Q_k = Σ_j ω_jᵀ ⊗ (U_CZ ω_j U_CZ†)`, so that `F_k = Tr[Q_k χ] / Tr[χ]`.
pub fn q_basis_operator(basis: HofmannBasis) -> Operator {
    let u = cz_unitary();
    basis
        .states()
        .iter()
        .fold(Operator::zeros(CHOI_DIM, CHOI_DIM), |acc, w| {
            let proj = w.projector();
            acc + proj.transpose().kronecker(&(&u * &proj * u.adjoint()))
        })
}

/// `Q = χ_CZ/4 − Q₁ − Q₂ + I`.
pub fn q_operator() -> Operator {
    cz_choi().matrix().scale(0.25) - q_basis_operator(HofmannBasis::First) - q_basis_operator(HofmannBasis::Second)
        + identity(CHOI_DIM)
}

pub fn q_operator_min_eigenvalue() -> f64 {
    min_eigenvalue(&q_operator())
}
