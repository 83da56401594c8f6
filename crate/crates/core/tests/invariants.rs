use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qvp_core::hilbert::{fidelity, gaussian_state, make_grid};
use qvp_core::qvp::{gaussian_binomial, resolution_threshold};
use qvp_core::{build_weyl_pair, Direction, GeneratorPair};

fn pair(lambda: f64) -> GeneratorPair {
    build_weyl_pair(&make_grid(256, 64.0).unwrap(), lambda).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn evolution_is_unitary_and_invertible(
        lambda in 1.0f64..12.0,
        center in -4.0f64..4.0,
        width in 0.5f64..2.0,
        tau in 0.0f64..0.5,
        forward in any::<bool>(),
    ) {
        let p = pair(lambda);
        let dir = if forward { Direction::Forward } else { Direction::Backward };
        let psi = gaussian_state(p.space(), center, width).unwrap();
        let out = p.evolve(&psi, tau, dir).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        let back = p.unwind(&out, tau, dir).unwrap();
        prop_assert!(back.distance(&psi).unwrap() < 1e-10);
    }

    #[test]
    fn time_reversal_is_an_involution(lambda in 1.0f64..12.0, center in -4.0f64..4.0, width in 0.5f64..2.0) {
        let p = pair(lambda);
        let psi = gaussian_state(p.space(), center, width).unwrap();
        let twice = p.time_reversal(&p.time_reversal(&psi));
        prop_assert!(twice.distance(&psi).unwrap() < 1e-14);
    }

    #[test]
    fn fidelity_is_bounded_and_symmetric(a in -4.0f64..4.0, b in -4.0f64..4.0, w in 0.5f64..2.0) {
        let g = make_grid(256, 64.0).unwrap();
        let (x, y) = (gaussian_state(&g, a, w).unwrap(), gaussian_state(&g, b, w).unwrap());
        let f = fidelity(&x, &y).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        prop_assert!((f - fidelity(&y, &x).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn gaussian_binomial_is_symmetric(n in 0usize..40, k_frac in 0.0f64..=1.0, angle in 0.0f64..(2.0 * PI)) {
        let k = (k_frac * n as f64).round() as usize;
        let q = Complex64::from_polar(1.0, angle);
        let (lhs, rhs) = (gaussian_binomial(n, k, q), gaussian_binomial(n, n - k, q));
        prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + lhs.norm()));
    }

    #[test]
    fn resolution_threshold_is_minimal(sigma in 0.1f64..10.0, ratio in 1.5f64..60.0) {
        let dw = sigma / ratio;
        let n = resolution_threshold(sigma, dw).unwrap().n_min;
        prop_assert!(sigma / (n as f64).sqrt() < dw);
        prop_assert!(n == 1 || sigma / ((n - 1) as f64).sqrt() >= dw);
    }
}
