use nler_core::evaluation::{chi_squared_cdf, chi_squared_quantile};
use nler_core::models::{build_covariance, GpModel, Grid, Observation, SisConfig, SisModel, StochasticModel};
use nler_core::nn::{LayerSpec, RatioModel};
use nler_core::numerics::{matrix_exponential, CholeskyFactor, DenseMatrix};
use nler_core::rng::{self, streams};
use nler_core::space::Case;
use nler_core::training::{bce_loss, bce_term, gradient_norm_ratio, score_loss, AlphaController, Reduction};
use proptest::prelude::*;

fn generator(n: usize, rates: &[f64]) -> DenseMatrix {
    let mut q = DenseMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rates[i * n + j] });
    for i in 0..n {
        let off: f64 = q.row(i).iter().sum();
        q[(i, i)] = -off;
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_matrices_are_stochastic(
        n in 2usize..9,
        rates in prop::collection::vec(0.0f64..2.0, 64),
        dt in 0.0f64..3.0,
    ) {
        let p = matrix_exponential(&generator(n, &rates).scale(dt)).unwrap();
        for i in 0..n {
            prop_assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            prop_assert!(p.row(i).iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn covariance_is_symmetric_positive_definite(
        lx in -1.0f64..1.0,
        ly in -1.0f64..1.0,
        le in -4.0f64..-1.0,
    ) {
        let grid = Grid::new(6).unwrap();
        let sigma = build_covariance(&grid, lx.exp(), ly.exp(), le.exp());
        prop_assert!(sigma.is_symmetric(0.0));
        prop_assert!(CholeskyFactor::new(&sigma).is_ok());
    }

    #[test]
    fn working_coordinates_round_trip(u in prop::collection::vec(0.0f64..1.0, 3)) {
        for case in [Case::Gp, Case::Stp] {
            let space = case.space();
            let theta = space.base().from_unit(&u);
            prop_assert!(space.base().contains(&theta));
            let back = space.to_working(&space.to_raw(&theta));
            for (a, b) in theta.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn bce_terms_differ_by_the_logit(h in -30.0f64..30.0) {
        prop_assert!(bce_term(h, 1.0) >= 0.0 && bce_term(h, 0.0) >= 0.0);
        prop_assert!((bce_term(h, 0.0) - bce_term(h, 1.0) - h).abs() <= 1e-12 * (1.0 + h.abs()));
    }

    #[test]
    fn score_term_only_adds_loss(
        logits in prop::collection::vec(-5.0f64..5.0, 8),
        est in prop::collection::vec(-3.0f64..3.0, 8),
        target in prop::collection::vec(-3.0f64..3.0, 8),
        alpha in 0.0f64..10.0,
    ) {
        let labels: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
        let bce = bce_loss(&logits, &labels, Reduction::Mean);
        prop_assert!(bce + score_loss(&est, &target, alpha) >= bce);
    }

    #[test]
    fn norm_ratio_is_scale_free(
        a in prop::collection::vec(-5.0f64..5.0, 6),
        b in prop::collection::vec(0.1f64..5.0, 6),
        c in 0.01f64..100.0,
    ) {
        let r = gradient_norm_ratio(&a, &b).unwrap();
        let sa: Vec<f64> = a.iter().map(|v| v * c).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * c).collect();
        prop_assert!((gradient_norm_ratio(&sa, &sb).unwrap() - r).abs() <= 1e-12 * (1.0 + r));
    }

    #[test]
    fn recency_average_stays_within_history(values in prop::collection::vec(0.01f64..50.0, 1..40)) {
        let mut c = AlphaController::new(64, 64);
        for (i, v) in values.iter().enumerate() {
            c.record(*v, 64 * i as u64);
        }
        let t0 = 64 * (values.len() as u64 - 1);
        let avg = c.weighted_average(t0).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(0.0, f64::max);
        prop_assert!(avg >= lo * (1.0 - 1e-12) && avg <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn chi_squared_quantile_inverts_the_cdf(p in 0.01f64..0.99, dof in 1usize..4) {
        let q = chi_squared_quantile(p, dof).unwrap();
        prop_assert!((chi_squared_cdf(q, dof).unwrap() - p).abs() <= 1e-9);
    }

    #[test]
    fn batched_forward_matches_single(seed in 0u64..1000) {
        use LayerSpec::*;
        let specs = [Flatten, ConcatTheta, Dense { outputs: 6 }, Activation(nler_core::nn::Activation::Silu), Dense { outputs: 1 }];
        let m = RatioModel::new(&[2, 3], 2, &specs, seed).unwrap();
        let xs: Vec<f64> = (0..24).map(|i| ((i as f64 + seed as f64) * 0.37).sin()).collect();
        let thetas: Vec<f64> = (0..8).map(|i| ((i as f64 - seed as f64) * 0.61).cos()).collect();
        let batch = m.forward_batch(&xs, &thetas).unwrap();
        for i in 0..4 {
            let one = m.forward(&xs[i * 6..(i + 1) * 6], &thetas[i * 2..(i + 1) * 2]).unwrap();
            prop_assert_eq!(batch[i], one);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sis_paths_have_nonpositive_log_likelihood(u in prop::collection::vec(0.0f64..1.0, 2), seed in 0u64..500) {
        let model = SisModel::new(SisConfig::unit_square()).unwrap();
        let theta = Case::Sis.space().base().from_unit(&u);
        let mut r = rng::stream(seed, streams::SIMULATION_BASE);
        let x = model.simulate(&theta, &mut r).unwrap();
        let states = x.as_states().unwrap();
        prop_assert!(states.iter().all(|&s| (s as usize) < model.states()));
        prop_assert!(model.log_likelihood(&theta, &x).unwrap() <= 0.0);
    }

    #[test]
    fn group_likelihood_is_the_sum(u in prop::collection::vec(0.0f64..1.0, 3), seed in 0u64..500) {
        let gp = GpModel::new(Grid::new(4).unwrap());
        let theta = Case::Gp.space().base().from_unit(&u);
        let mut r = rng::stream(seed, streams::SIMULATION_BASE);
        let group: Vec<Observation> = (0..3).map(|_| gp.simulate(&theta, &mut r).unwrap()).collect();
        let sum: f64 = group.iter().map(|x| gp.log_likelihood(&theta, x).unwrap()).sum();
        let joint = gp.group_log_likelihood(&theta, &group).unwrap();
        prop_assert!((joint - sum).abs() <= 1e-9 * (1.0 + sum.abs()));
    }
}
