use approx::assert_abs_diff_eq;
use cz_fidelity::estimators::{
    hofmann_bounds, monte_carlo_fidelity, monte_carlo_fidelity_renormalized, Sigma0Expansion,
};
use cz_fidelity::gate_model::{model_choi, model_fidelity, model_hofmann_curves};
use cz_fidelity::quantum::{cz_choi, process_fidelity, ChoiMatrix, Operator};
use cz_fidelity::simulator::{admix_white_noise, expected_counts, ReferenceCounts};
use cz_fidelity::tomography::{maxlik_reconstruct, MaxLikSettings};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_channel(seed: u64) -> ChoiMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rank = rng.random_range(1..=16);
    let g: Operator = DMatrix::from_fn(16, rank, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let chi = ChoiMatrix::new(&g * g.adjoint()).unwrap().with_trace(1.0).unwrap();
    // full rank after a 1e-6 admixture of I/16
    admix_white_noise(&chi, 1e-6).unwrap()
}

fn check_agreement(chi: &ChoiMatrix, settings: MaxLikSettings) {
    let target = process_fidelity(chi, &cz_choi()).unwrap();
    let counts = expected_counts(chi, 1e5).unwrap();
    for e in Sigma0Expansion::ALL {
        let f = monte_carlo_fidelity(&counts, e).unwrap().value;
        assert_abs_diff_eq!(f, target, epsilon = 1e-10);
        let t = monte_carlo_fidelity_renormalized(&counts, &ReferenceCounts::uniform(250), e).unwrap();
        assert_abs_diff_eq!(t.value, target, epsilon = 1e-10);
    }
    let rec = maxlik_reconstruct(&counts, settings).unwrap();
    assert!(rec.converged);
    let f_chi = process_fidelity(&rec.chi, &cz_choi()).unwrap();
    assert!((f_chi - target).abs() < 1e-4, "F_chi {f_chi} vs {target}");
}

#[test]
fn estimators_agree_on_model_counts() {
    for v in [0.0, 0.022, 0.25, 0.5, 0.953, 1.0] {
        check_agreement(&model_choi(v).unwrap(), MaxLikSettings::default());
    }
}

#[test]
fn estimators_agree_on_random_channels() {
    let strict = MaxLikSettings {
        stop_threshold: 1e-7,
        ..MaxLikSettings::default()
    };
    for seed in 0..3 {
        check_agreement(&random_channel(seed), strict);
    }
}

#[test]
fn hofmann_sandwich_on_model_grid() {
    for i in 0..=100 {
        let v = i as f64 / 100.0;
        let chi = model_choi(v).unwrap();
        let b = hofmann_bounds(&expected_counts(&chi, 1e4).unwrap()).unwrap();
        let f = model_fidelity(v).unwrap();
        assert!(b.f_h.value <= f + 1e-10 && f <= b.min_f1_f2.value + 1e-10, "V={v}");
        assert_abs_diff_eq!(b.min_f1_f2.value, (1.0 + v) / 2.0, epsilon = 1e-10);
        let c = model_hofmann_curves(v).unwrap();
        assert_abs_diff_eq!(b.f_d.value, c.f_d, epsilon = 1e-10);
        if v < 1.0 / 3.0 - 1e-9 {
            assert!(b.f_d.value > f, "F_D should exceed F_chi at V={v}");
        }
    }
}

#[test]
fn weighted_bound_holds_for_random_channels() {
    for seed in 10..40 {
        let chi = random_channel(seed);
        let b = hofmann_bounds(&expected_counts(&chi, 1e4).unwrap()).unwrap();
        let f = process_fidelity(&chi, &cz_choi()).unwrap();
        assert!(b.f_h.value <= f + 1e-10, "seed {seed}: F_H {} > F {f}", b.f_h.value);
        assert!(f <= b.f1.max(b.f2) + 1e-10);
    }
}
