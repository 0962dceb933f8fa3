//! Closed-form model of the linear-optical CZ gate as a function of the
//! two-photon (Hong-Ou-Mandel) interference visibility.
//!
//! The photons interfere with probability `q = 2V/(1+V)`; otherwise they act
//! as distinguishable particles and the gate applies the incoherent map
//! `χ_inc = |Φ⁺⟩⟨Φ⁺|/9 + 4|VVVV⟩⟨VVVV|/9`. The full Choi matrix is
//! `χ(q) = (q/9) χ_CZ + (1-q) χ_inc`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quantum::{cz_choi, identity_choi, ChoiMatrix, HofmannBasis, Operator, Probe, ProbePair};

/// Overshoot of a visibility beyond `[0, 1]` that is clamped instead of rejected.
pub const VISIBILITY_CLAMP_TOL: f64 = 1e-3;

/// Checks `v ∈ [0, 1]`, clamping small calibration overshoots.
pub fn validate_visibility(v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(invalid(format!("visibility {v} is not finite")));
    }
    if (0.0..=1.0).contains(&v) {
        return Ok(v);
    }
    if v > -VISIBILITY_CLAMP_TOL && v < 1.0 + VISIBILITY_CLAMP_TOL {
        let clamped = v.clamp(0.0, 1.0);
        warn!("visibility {v} outside [0, 1]; clamped to {clamped}");
        return Ok(clamped);
    }
    Err(invalid(format!("visibility {v} outside [0, 1]")))
}

/// Interference probability `q = 2V/(1+V)`.
pub fn q_from_visibility(v: f64) -> Result<f64> {
    let v = validate_visibility(v)?;
    Ok(2.0 * v / (1.0 + v))
}

/// HOM visibility `(C_∞ - C)/(C_∞ + C)` from the dip and out-of-dip rates.
pub fn hom_visibility(c_dip: f64, c_inf: f64) -> Result<f64> {
    if !(c_inf > 0.0) {
        return Err(invalid(format!("out-of-dip rate {c_inf} must be positive")));
    }
    if !(c_dip >= 0.0) {
        return Err(invalid(format!("dip rate {c_dip} must be nonnegative")));
    }
    Ok((c_inf - c_dip) / (c_inf + c_dip))
}

/// Visibility together with the matching interference probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityModel {
    visibility: f64,
    q: f64,
}

impl VisibilityModel {
    pub fn new(visibility: f64) -> Result<Self> {
        let visibility = validate_visibility(visibility)?;
        Ok(VisibilityModel {
            visibility,
            q: 2.0 * visibility / (1.0 + visibility),
        })
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Choi matrix of the incoherent (distinguishable-photon) operation.
    pub fn incoherent_choi() -> ChoiMatrix {
        let mut m = identity_choi().into_matrix().scale(1.0 / 9.0);
        m[(15, 15)] += num_complex::Complex64::new(4.0 / 9.0, 0.0);
        ChoiMatrix::new(m).expect("incoherent Choi matrix is PSD")
    }

    pub fn choi(&self) -> ChoiMatrix {
        let m = cz_choi().into_matrix().scale(self.q / 9.0) + Self::incoherent_choi().into_matrix().scale(1.0 - self.q);
        ChoiMatrix::new(m).expect("model mixture is PSD")
    }

    /// Process fidelity `(1 + 3V)/4`.
    pub fn fidelity(&self) -> f64 {
        (1.0 + 3.0 * self.visibility) / 4.0
    }

    /// Input-space operator `X = Tr_out[χ] = I/9 + 4(1-q)|VV⟩⟨VV|/9`.
    pub fn success_operator(&self) -> Operator {
        let mut x = crate::quantum::identity(4).scale(1.0 / 9.0);
        x[(3, 3)] += num_complex::Complex64::new(4.0 * (1.0 - self.q) / 9.0, 0.0);
        x
    }
}

/// Model Choi matrix at visibility `v`, with `Tr[χ] = (8 - 4q)/9`.
pub fn model_choi(v: f64) -> Result<ChoiMatrix> {
    Ok(VisibilityModel::new(v)?.choi())
}

/// Model process fidelity `(1 + 3V)/4`.
pub fn model_fidelity(v: f64) -> Result<f64> {
    Ok(VisibilityModel::new(v)?.fidelity())
}

/// Success probability and output-state fidelity of one Hofmann probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateBehavior {
    pub success_probability: f64,
    pub state_fidelity: f64,
}

/// `(p, f)` for one of the eight Hofmann probes.
///
/// Probes with an `H` photon are untouched by the distinguishability error
/// (`p = 1/9`, `f = 1`); the ones with a `V` photon get
/// `p = (3-2q)/9`, `f = 1/(3-2q)`.
pub fn model_state_behavior(probe: ProbePair, v: f64) -> Result<StateBehavior> {
    if HofmannBasis::containing(probe).is_none() {
        return Err(invalid(format!("{probe} is not one of the eight Hofmann probe states")));
    }
    let q = q_from_visibility(v)?;
    let behavior = if probe.0 == Probe::H || probe.1 == Probe::H {
        StateBehavior {
            success_probability: 1.0 / 9.0,
            state_fidelity: 1.0,
        }
    } else {
        StateBehavior {
            success_probability: (3.0 - 2.0 * q) / 9.0,
            state_fidelity: 1.0 / (3.0 - 2.0 * q),
        }
    };
    Ok(behavior)
}

/// Analytic Hofmann quantities of the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HofmannCurves {
    pub f1: f64,
    pub f2: f64,
    /// Weighted bound `F₁ + F₂ - 1`, equal to `V`.
    pub f_h: f64,
    /// Unweighted bound `F̄₁ + F̄₂ - 1 = (1+V)/(3-V)`.
    pub f_d: f64,
}

pub fn model_hofmann_curves(v: f64) -> Result<HofmannCurves> {
    let v = validate_visibility(v)?;
    let f = (1.0 + v) / 2.0;
    Ok(HofmannCurves {
        f1: f,
        f2: f,
        f_h: v,
        f_d: (1.0 + v) / (3.0 - v),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{apply_channel, process_fidelity, trace_re};
    use approx::assert_abs_diff_eq;

    fn grid() -> impl Iterator<Item = f64> {
        (0..=100).map(|i| i as f64 / 100.0)
    }

    #[test]
    fn q_relation() {
        assert_eq!(q_from_visibility(0.0).unwrap(), 0.0);
        assert_eq!(q_from_visibility(1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(q_from_visibility(0.5).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert!(q_from_visibility(1.2).is_err());
        assert!(q_from_visibility(-0.1).is_err());
        assert_eq!(q_from_visibility(1.0000003).unwrap(), 1.0);
    }

    #[test]
    fn hom_visibility_examples() {
        assert_eq!(hom_visibility(0.0, 100.0).unwrap(), 1.0);
        assert_eq!(hom_visibility(37.0, 37.0).unwrap(), 0.0);
        let c_inf = 1234.0;
        let v = hom_visibility(c_inf * (1.0 - 2.0 / 3.0), c_inf).unwrap();
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-14);
        assert!(hom_visibility(1.0, 0.0).is_err());
    }

    #[test]
    fn model_choi_endpoints() {
        let perfect = model_choi(1.0).unwrap();
        let ninth = cz_choi().scaled(1.0 / 9.0).unwrap();
        assert!((perfect.matrix() - ninth.matrix()).camax() < 1e-15);

        let incoherent = model_choi(0.0).unwrap();
        let mut expected = identity_choi().into_matrix().scale(1.0 / 9.0);
        expected[(15, 15)] += num_complex::Complex64::new(4.0 / 9.0, 0.0);
        assert!((incoherent.matrix() - expected).camax() < 1e-15);

        assert_abs_diff_eq!(model_choi(0.5).unwrap().trace(), 16.0 / 27.0, epsilon = 1e-14);
    }

    #[test]
    fn trace_and_success_operator() {
        for v in grid() {
            let m = VisibilityModel::new(v).unwrap();
            let chi = m.choi();
            assert_abs_diff_eq!(chi.trace(), (8.0 - 4.0 * m.q()) / 9.0, epsilon = 1e-13);
            assert!((chi.trace_output() - m.success_operator()).camax() < 1e-14);
        }
    }

    #[test]
    fn vv_success_probability_out_of_dip() {
        let vv = ProbePair(Probe::V, Probe::V).projector();
        let (_, p) = apply_channel(&model_choi(0.0).unwrap(), &vv).unwrap();
        assert_abs_diff_eq!(p, 5.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn fidelity_formula_matches_choi_overlap() {
        assert_eq!(model_fidelity(1.0).unwrap(), 1.0);
        assert_eq!(model_fidelity(0.0).unwrap(), 0.25);
        assert_abs_diff_eq!(model_fidelity(0.953).unwrap(), 0.96475, epsilon = 1e-15);
        for v in grid() {
            let f = process_fidelity(&model_choi(v).unwrap(), &cz_choi()).unwrap();
            assert_abs_diff_eq!(f, model_fidelity(v).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn state_behavior_examples() {
        use Probe::*;
        for v in [0.0, 0.3, 1.0] {
            let b = model_state_behavior(ProbePair(D, H), v).unwrap();
            assert_eq!(b.success_probability, 1.0 / 9.0);
            assert_eq!(b.state_fidelity, 1.0);
        }
        let b = model_state_behavior(ProbePair(D, V), 0.5).unwrap();
        assert_abs_diff_eq!(b.success_probability, 5.0 / 27.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.state_fidelity, 0.6, epsilon = 1e-15);
        let b = model_state_behavior(ProbePair(A, V), 1.0).unwrap();
        assert_abs_diff_eq!(b.success_probability, 1.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.state_fidelity, 1.0, epsilon = 1e-15);
        assert!(model_state_behavior(ProbePair(H, H), 0.5).is_err());
    }

    #[test]
    fn state_behavior_matches_channel_numerics() {
        let u = crate::quantum::cz_unitary();
        for v in grid() {
            let chi = model_choi(v).unwrap();
            for basis in HofmannBasis::BOTH {
                let mut psum = 0.0;
                for w in basis.states() {
                    let (out, p) = apply_channel(&chi, &w.projector()).unwrap();
                    let ideal = crate::quantum::Ket(&u * w.ket().0);
                    let f = (ideal.0.adjoint() * &out * &ideal.0)[(0, 0)].re / p;
                    let b = model_state_behavior(w, v).unwrap();
                    assert_abs_diff_eq!(p, b.success_probability, epsilon = 1e-12);
                    assert_abs_diff_eq!(f, b.state_fidelity, epsilon = 1e-12);
                    psum += p;
                }
                assert_abs_diff_eq!(psum, trace_re(chi.matrix()), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hofmann_curve_examples() {
        let c = model_hofmann_curves(1.0).unwrap();
        assert_eq!((c.f1, c.f2, c.f_h, c.f_d), (1.0, 1.0, 1.0, 1.0));
        let c = model_hofmann_curves(0.5).unwrap();
        assert_abs_diff_eq!(c.f1, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(c.f_h, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.f_d, 0.6, epsilon = 1e-15);
        let c = model_hofmann_curves(0.2).unwrap();
        assert_abs_diff_eq!(c.f_d, 1.2 / 2.8, epsilon = 1e-15);
        assert!(c.f_d > model_fidelity(0.2).unwrap());
    }

    #[test]
    fn sandwich_and_crossover_on_grid() {
        for v in grid() {
            let f = model_fidelity(v).unwrap();
            let c = model_hofmann_curves(v).unwrap();
            assert!(v <= f + 1e-15 && f <= (1.0 + v) / 2.0 + 1e-15, "V = {v}");
            if (v - 1.0 / 3.0).abs() > 1e-9 {
                assert_eq!(c.f_d > f, v < 1.0 / 3.0, "V = {v}");
            }
        }
    }
}
