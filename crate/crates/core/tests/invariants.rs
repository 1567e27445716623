//! Property tests of the structural invariants: bilinearity and reality of
//! the quadratic terms, radius equivariance and growth under the linear
//! flow, the θ inequalities, convolution homogeneity and time grids.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nskq_core::analyticity::{estimate_radius, estimate_radius_field, theta_offset, theta_weight, weight_gap, BootstrapConfig};
use nskq_core::duhamel::time_grid;
use nskq_core::harness::experiments::random_state;
use nskq_core::harness::{generate_initial_data, measure_decay, DataSpec};
use nskq_core::linear::evolve_state;
use nskq_core::nonlinear::{bilinear_f, bilinear_g1, bilinear_g2, bilinear_g3, DuContraction, Method, ProductEngine};
use nskq_core::oracles::{riesz_convolution, QuadratureSpec};
use nskq_core::spectral::{FrequencyLattice, LatticeSpec, SpectralField};
use nskq_core::{GridSpec, ModelParams};

fn small_lattice() -> Arc<FrequencyLattice> {
    static LAT: OnceLock<Arc<FrequencyLattice>> = OnceLock::new();
    LAT.get_or_init(|| LatticeSpec::new(2, 12, 2.0 * PI).build().unwrap()).clone()
}

fn rel_diff(x: &[SpectralField], y: &[SpectralField]) -> f64 {
    let scale = y.iter().map(SpectralField::max_abs).fold(0.0, f64::max).max(1e-300);
    x.iter().zip(y).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max) / scale
}

fn scaled(fs: &[SpectralField], s: f64) -> Vec<SpectralField> {
    fs.iter().map(|f| f.scaled(s)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quadratic_terms_are_bilinear(seed in any::<u64>(), l in -3.0f64..3.0, m in -3.0f64..3.0) {
        let lat = small_lattice();
        let params = ModelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_state(&lat, &mut rng);
        let y = random_state(&lat, &mut rng);
        for method in [Method::Fast, Method::Oracle] {
            let e = ProductEngine::new(&lat, method).unwrap();
            let lm = l * m;
            let f = bilinear_f(&e, &scaled(&x.u, l), &y.a.scaled(m)).unwrap();
            prop_assert!(rel_diff(&[f], &[bilinear_f(&e, &x.u, &y.a).unwrap().scaled(lm)]) < 1e-12);
            let g1 = bilinear_g1(&e, &scaled(&x.u, l), &scaled(&y.u, m)).unwrap();
            prop_assert!(rel_diff(&g1, &scaled(&bilinear_g1(&e, &x.u, &y.u).unwrap(), lm)) < 1e-12);
            for c in [DuContraction::Transpose, DuContraction::Direct] {
                let g2 = bilinear_g2(&e, &x.a.scaled(l), &scaled(&y.u, m), &params, c).unwrap();
                prop_assert!(rel_diff(&g2, &scaled(&bilinear_g2(&e, &x.a, &y.u, &params, c).unwrap(), lm)) < 1e-12);
            }
            let g3 = bilinear_g3(&e, &x.a.scaled(l), &y.a.scaled(m), params.kappa).unwrap();
            prop_assert!(rel_diff(&g3, &scaled(&bilinear_g3(&e, &x.a, &y.a, params.kappa).unwrap(), lm)) < 1e-12);
        }
    }

    #[test]
    fn real_inputs_give_conjugate_symmetric_outputs(seed in any::<u64>()) {
        let lat = small_lattice();
        let params = ModelParams::default();
        let x = random_state(&lat, &mut ChaCha8Rng::seed_from_u64(seed));
        let e = ProductEngine::new(&lat, Method::Fast).unwrap();
        let mut out = vec![bilinear_f(&e, &x.u, &x.a).unwrap()];
        out.extend(bilinear_g1(&e, &x.u, &x.u).unwrap());
        out.extend(bilinear_g2(&e, &x.a, &x.u, &params, DuContraction::Transpose).unwrap());
        out.extend(bilinear_g3(&e, &x.a, &x.a, params.kappa).unwrap());
        let scale = out.iter().map(SpectralField::max_abs).fold(0.0, f64::max);
        for f in &out {
            prop_assert!(f.conjugate_asymmetry() <= 1e-14 * scale.max(1.0));
        }
    }

    #[test]
    fn radius_scales_inversely_with_dilation(rate in 0.3f64..2.0, lambda in 0.5f64..4.0) {
        let base = LatticeSpec::new(2, 64, 2.0 * PI).build().unwrap();
        let mags = base.magnitudes().to_vec();
        let f = SpectralField::from_fn(&base, true, |idx| {
            let s = mags[idx];
            num_complex::Complex64::new(if s == 0.0 { 0.0 } else { s.powf(-1.5) * (-rate * s).exp() }, 0.0)
        });
        let wide = LatticeSpec::new(2, 64, 2.0 * PI * lambda).build().unwrap();
        let g = SpectralField::from_coeffs(&wide, f.coeffs().to_vec(), true).unwrap();
        let a = estimate_radius_field(&f, 0.0, 0.0).sigma_hat.unwrap();
        let b = estimate_radius_field(&g, 0.0, 0.0).sigma_hat.unwrap();
        prop_assert!(a >= 0.0 && b >= 0.0);
        prop_assert!((b / a - lambda).abs() < 1e-9 * lambda, "{a} {b} {lambda}");
    }

    #[test]
    fn theta_inequalities_hold_pointwise(
        horizon in 1e-3f64..10.0,
        tf in 0.0f64..=1.0,
        sf in 0.0f64..=1.0,
        eps in 0.01f64..0.99,
        lambda in 0.01f64..10.0,
        c0 in 0.05f64..2.0,
        xi in prop::array::uniform2(-50.0f64..50.0),
        eta in prop::array::uniform2(-50.0f64..50.0),
    ) {
        let t = horizon * tf;
        let norm = |v: [f64; 2]| v[0].hypot(v[1]);
        let th = |t: f64, m: f64| theta_weight(t, m, eps, lambda, horizon, c0);
        let x = norm(xi);
        let heat = c0 * t * x * x;
        let tol = 1e-10 * (1.0 + heat + th(t, x).abs());
        prop_assert!(th(t, x) - heat <= eps * heat + tol);
        let rhs = th(t, norm([xi[0] - eta[0], xi[1] - eta[1]])) + th(t, norm(eta)) + theta_offset(t, eps, lambda, horizon, c0);
        prop_assert!(th(t, x) <= rhs + tol + 1e-10 * rhs.abs());
        let s = t * sf;
        prop_assert!(weight_gap(t, s, x) <= 2.0);
    }

    #[test]
    fn bootstrap_constants_follow_their_formulas(c in 0.01f64..100.0, c_eps in 0.01f64..100.0) {
        let cfg = BootstrapConfig { c, c_eps, ..Default::default() };
        let mu = 0.5 / (2.0 * c + 4.0);
        prop_assert!((cfg.mu_boot() - mu).abs() <= 1e-15 * mu);
        let d = 1.0 / (c_eps * 4.0 * mu * c);
        prop_assert!((cfg.d_eps() - d).abs() <= 1e-12 * d);
    }

    #[test]
    fn time_grids_are_strictly_increasing(
        nodes in 2usize..64,
        ratio in 0.3f64..0.95,
        horizon in 1e-3f64..10.0,
        cap in prop::option::of(0.01f64..1.0),
        extra in prop::collection::vec(0.0f64..=1.0, 0..6),
    ) {
        let extra: Vec<f64> = extra.into_iter().map(|x| x * horizon).filter(|&x| x > 0.0).collect();
        let max_step = cap.map(|c| c * horizon);
        let g = time_grid(&GridSpec { nodes, ratio, max_step, extra: extra.clone() }, horizon).unwrap();
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(*g.last().unwrap(), horizon);
        prop_assert!(g[0] > 0.0);
        for x in extra {
            prop_assert!(g.iter().any(|&t| (t - x).abs() <= 1e-12 * horizon));
        }
        if let Some(h) = max_step {
            prop_assert!(g.windows(2).all(|w| w[1] - w[0] <= h * (1.0 + 1e-12)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn convolution_is_homogeneous(alpha in 1.1f64..1.9, beta in 0.4f64..1.9, angle in 0.0f64..(2.0 * PI), m in 0.3f64..3.0) {
        prop_assume!(alpha + beta > 2.1);
        let xi = vec![m * angle.cos(), m * angle.sin()];
        let one = riesz_convolution(&QuadratureSpec::new(2, alpha, beta, xi.clone())).unwrap().value;
        let two = riesz_convolution(&QuadratureSpec::new(2, alpha, beta, xi.iter().map(|x| 2.0 * x).collect())).unwrap().value;
        let want = 2f64.powf(2.0 - alpha - beta);
        prop_assert!((two / one / want - 1.0).abs() < 1e-6, "{} vs {want}", two / one);
    }

    #[test]
    fn linear_flow_grows_the_radius(sigma0 in 0.3f64..1.0, t in 0.01f64..0.5, seed in any::<u64>()) {
        static C0: OnceLock<f64> = OnceLock::new();
        let lat = LatticeSpec::new(2, 64, 2.0 * PI).build().unwrap();
        let params = ModelParams::default();
        let c0 = *C0.get_or_init(|| measure_decay(&params, &lat, 100.0).unwrap().c0_measured);
        let spec = DataSpec::ExpTail { sigma0, a: 1.0, u: 1.0, cutoff: None, dealiased: false, random_phase: true };
        let data = generate_initial_data(&spec, &lat, seed).unwrap();
        let e = estimate_radius(&evolve_state(t, &data, &params), 0.0);
        let s = e.sigma_hat.unwrap();
        prop_assert!(s - sigma0 >= 0.8 * c0 * t.sqrt(), "sigma {s} at t {t} from {sigma0}");
    }
}
