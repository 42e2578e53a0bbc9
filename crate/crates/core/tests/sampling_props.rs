use approx::assert_abs_diff_eq;
use exgrad::linalg::gaussian_vec;
use exgrad::problems::{make_quadratic_game, QuadraticGameSpec};
use exgrad::sampling::{er_constants, importance_probabilities, SamplingScheme};
use exgrad::{eval_sampled, FiniteSumOperator, Point, Rng};
use proptest::prelude::*;

fn small_game(n: usize, seed: u64) -> exgrad::problems::AffineOperator {
    make_quadratic_game(&QuadraticGameSpec { n, d: 2, seed, ..Default::default() }).unwrap()
}

fn schemes(n: usize, tau: usize, weights: &[f64]) -> Vec<SamplingScheme> {
    let total: f64 = weights.iter().sum();
    vec![
        SamplingScheme::full(n),
        SamplingScheme::minibatch(n, tau).unwrap(),
        SamplingScheme::uniform_single(n).unwrap(),
        SamplingScheme::single_element(weights.iter().map(|w| w / total).collect()).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_support_average_is_unbiased(
        n in 1usize..=6,
        tau_frac in 0.0f64..1.0,
        weights in prop::collection::vec(0.05f64..1.0, 6),
        seed in 0u64..1000,
    ) {
        let tau = 1 + ((n - 1) as f64 * tau_frac) as usize;
        let op = small_game(n, seed);
        let x = gaussian_vec(op.dim(), &mut Rng::new(seed).child("x"));
        let f = op.mean(&x);
        for s in schemes(n, tau, &weights[..n]) {
            let support = s.support();
            let total: f64 = support.iter().map(|(p, _)| p).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let mut avg = Point::zeros(op.dim());
            for (p, v) in &support {
                avg += eval_sampled(&op, v, &x).unwrap() * *p;
            }
            prop_assert!((avg - &f).norm() < 1e-12, "scheme {:?}", s);
        }
    }

    #[test]
    fn draws_come_from_support(n in 2usize..=6, tau in 1usize..=6, seed in 0u64..1000) {
        let tau = tau.min(n);
        let s = SamplingScheme::minibatch(n, tau).unwrap();
        let support = s.support();
        let mut rng = Rng::new(seed);
        for _ in 0..20 {
            let v = s.draw(&mut rng);
            prop_assert_eq!(v.nnz(), tau);
            prop_assert!(support.iter().any(|(_, u)| u.to_dense(n) == v.to_dense(n)));
        }
    }

    #[test]
    fn er_bound_holds_by_monte_carlo(seed in 0u64..50, tau_frac in 0.0f64..1.0) {
        let n = 12;
        let tau = 1 + (11.0 * tau_frac) as usize;
        let op = small_game(n, seed);
        let xs = op.meta().x_star.clone().unwrap();
        let l = op.meta().component_lipschitz.clone().unwrap();
        let mut rng = Rng::new(seed).child("mc");
        let x = &xs + gaussian_vec(op.dim(), &mut rng);
        let cases = [
            SamplingScheme::minibatch(n, tau).unwrap(),
            SamplingScheme::single_element(importance_probabilities(&l).unwrap()).unwrap(),
        ];
        for s in cases {
            let delta = er_constants(&op, &s).unwrap().delta;
            let mean = op.mean(&x) - op.mean(&xs);
            let draws = 10_000;
            let mut second = 0.0;
            for _ in 0..draws {
                let v = s.draw(&mut rng);
                let g = eval_sampled(&op, &v, &x).unwrap() - eval_sampled(&op, &v, &xs).unwrap();
                second += (g - &mean).norm_squared();
            }
            second /= draws as f64;
            prop_assert!(second <= delta / 2.0 * (&x - &xs).norm_squared() * 1.03);
        }
    }
}

#[test]
fn minibatch_delta_closed_form() {
    // n = 3, τ = 2: 2/(nτ)·(n−τ)/(n−1) = 1/6.
    let op = small_game(3, 4);
    let l = op.meta().component_lipschitz.clone().unwrap();
    let sum_sq: f64 = l.iter().map(|v| v * v).sum();
    let s = SamplingScheme::minibatch(3, 2).unwrap();
    let delta = er_constants(&op, &s).unwrap().delta;
    assert_abs_diff_eq!(delta, sum_sq / 6.0, epsilon = 1e-12);
    assert_eq!(er_constants(&op, &SamplingScheme::full(3)).unwrap().delta, 0.0);
}

#[test]
fn single_element_delta_matches_minibatch_one_when_uniform() {
    let op = small_game(7, 9);
    let a = er_constants(&op, &SamplingScheme::minibatch(7, 1).unwrap()).unwrap();
    let b = er_constants(&op, &SamplingScheme::uniform_single(7).unwrap()).unwrap();
    assert_abs_diff_eq!(a.delta, b.delta, epsilon = 1e-12);
    assert_abs_diff_eq!(a.sigma_star_sq.unwrap(), b.sigma_star_sq.unwrap(), epsilon = 1e-12);
}

#[test]
fn importance_sampling_never_worse_than_uniform() {
    for seed in 0..10 {
        let op = small_game(15, seed);
        let l = op.meta().component_lipschitz.clone().unwrap();
        let u = er_constants(&op, &SamplingScheme::uniform_single(15).unwrap()).unwrap().delta;
        let i = er_constants(&op, &SamplingScheme::single_element(importance_probabilities(&l).unwrap()).unwrap())
            .unwrap()
            .delta;
        assert!(i <= u * (1.0 + 1e-12));
    }
}
