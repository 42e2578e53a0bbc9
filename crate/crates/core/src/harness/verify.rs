//! Executable theory checks. Each suite returns one or more pass/fail checks
//! with the measured quantities in `detail`.

use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fl::{
    local_values_at, lyapunov_v, network_constants, theoretical_params, Estimator, Network, NetworkConfig,
    ParamMode,
};
use crate::linalg::{gaussian_mat, gaussian_vec, spectral_norm};
use crate::operator::{FiniteSumOperator, Matrix, OperatorMeta, Oracle, Point, RunLimits};
use crate::par::{map_ordered, Execution};
use crate::problems::{
    game_matrix, make_cubic_minmax, make_federated_quadratic_game, make_global_forsaken, make_linear_game,
    make_quadratic_game, make_sinh_gradient, make_weak_minty_scalar, AffineOperator, QuadraticGameSpec,
};
use crate::rng::Rng;
use crate::sampling::{er_constants, importance_probabilities, SamplingScheme};
use crate::solvers_eg::{eg_step, omega_bar, run_speg, speg_step, SpegOptions, SpegState, StepPolicy, WeakMintyConfig};
use crate::solvers_l0l1::{
    fit_l0l1, nu_table, run_eg_l0l1, solve_nu, square_grid, strong_contraction_factor, L0L1Config, NuEquation,
    Regime,
};
use crate::solvers_polyak::{
    polyak_eg_step, run_polyak, while_loop_budget, GammaMode, PolyakState, PolyakVariant,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(suite: &str, name: &str, passed: bool, detail: String) -> Self {
        Check { suite: suite.into(), name: name.into(), passed, detail }
    }
}

pub struct Suite {
    pub name: &'static str,
    /// Acceptance criterion number, when the suite implements one.
    pub criterion: Option<u8>,
    pub summary: &'static str,
    run: fn(&str) -> Result<Vec<Check>>,
}

impl Suite {
    /// Runs the suite; an internal error becomes a single failed check.
    pub fn run(&self) -> Vec<Check> {
        match (self.run)(self.name) {
            Ok(c) => c,
            Err(e) => vec![Check::new(self.name, "run", false, format!("error: {e}"))],
        }
    }
}

pub const SUITES: &[Suite] = &[
    Suite { name: "eg-strong", criterion: Some(1), summary: "EG strong-monotone contraction", run: eg_strong },
    Suite { name: "eg-monotone", criterion: Some(2), summary: "EG monotone best-iterate rate", run: eg_monotone },
    Suite {
        name: "speg-interpolated",
        criterion: Some(3),
        summary: "SPEG linear convergence under interpolation",
        run: speg_interpolated,
    },
    Suite { name: "speg-switching", criterion: Some(4), summary: "SPEG switching vs constant", run: speg_switching },
    Suite { name: "er-constants", criterion: Some(5), summary: "ER constants by Monte Carlo", run: er_validity },
    Suite { name: "speg-weak-minty", criterion: Some(6), summary: "SPEG on weak Minty family", run: speg_weak_minty },
    Suite { name: "ls-budget", criterion: Some(7), summary: "PolyakEG-LS while-loop budget", run: ls_budget },
    Suite {
        name: "polyak-contraction",
        criterion: Some(8),
        summary: "PolyakEG per-step contraction",
        run: polyak_contraction,
    },
    Suite { name: "dec-polyak", criterion: Some(9), summary: "DecPolyakSEG schedule invariants", run: dec_polyak },
    Suite { name: "nu-roots", criterion: Some(10), summary: "step-size constants by bisection", run: nu_roots },
    Suite {
        name: "l0l1-contraction",
        criterion: Some(11),
        summary: "(L0,L1) strong-monotone contraction",
        run: l0l1_contraction,
    },
    Suite {
        name: "l0l1-convergence",
        criterion: Some(12),
        summary: "cubic and GlobalForsaken convergence",
        run: l0l1_convergence,
    },
    Suite { name: "jacobian-fit", criterion: Some(13), summary: "Jacobian bound fit", run: jacobian_fit },
    Suite {
        name: "proxskip-lyapunov",
        criterion: Some(14),
        summary: "ProxSkip deterministic Lyapunov and communication",
        run: proxskip_lyapunov,
    },
    Suite { name: "proxskip-svrg", criterion: Some(15), summary: "ProxSkip-L-SVRGDA-FL exactness", run: proxskip_svrg },
    Suite { name: "comm-frequency", criterion: Some(16), summary: "communication frequency", run: comm_frequency },
    Suite {
        name: "proxskip-lyapunov-expectation",
        criterion: None,
        summary: "ProxSkip Lyapunov contraction in expectation over the coin",
        run: proxskip_lyapunov_expectation,
    },
];

pub fn find_suite(name: &str) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.name == name)
}

pub fn suite_for_criterion(n: u8) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.criterion == Some(n))
}

/// Runs the selected suite, or every suite for `"all"`.
pub fn verify_theory(selector: &str) -> Result<Vec<Check>> {
    if selector == "all" {
        return Ok(SUITES.iter().flat_map(|s| s.run()).collect());
    }
    let s = find_suite(selector).ok_or_else(|| {
        let names: Vec<&str> = SUITES.iter().map(|s| s.name).collect();
        Error::config("suite", format!("unknown suite `{selector}`; expected `all` or one of {names:?}"))
    })?;
    Ok(s.run())
}

fn exec() -> Execution {
    Execution::best()
}

fn x_star(op: &dyn FiniteSumOperator) -> Result<Point> {
    op.meta().x_star.clone().ok_or_else(|| Error::Contract("test instance without x*".into()))
}

fn eg_strong(suite: &str) -> Result<Vec<Check>> {
    let spec = QuadraticGameSpec { n: 100, d: 30, seed: 0, ..Default::default() };
    let op = make_quadratic_game(&spec)?;
    let (l, mu) = (1.0, 0.1);
    let true_l = op.meta().lipschitz.unwrap_or(f64::INFINITY);
    let xs = x_star(&op)?;
    let gamma = 1.0 / (4.0 * l);
    let factor = 1.0 - mu / (4.0 * l);
    let scheme = SamplingScheme::full(op.n());
    let mut oracle = Oracle::new(&op);
    let mut rng = Rng::new(0);
    let mut x = Point::from_element(op.dim(), 1.0);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for _ in 0..2000 {
        let before = (&x - &xs).norm_squared();
        x = eg_step(&mut oracle, &x, gamma, gamma, &scheme, true, &mut rng)?;
        let after = (&x - &xs).norm_squared();
        worst = worst.max(after - factor * before);
        if after > factor * before + 1e-10 {
            violations += 1;
        }
    }
    Ok(vec![
        Check::new(suite, "lipschitz-bound", true_l <= l, format!("L(F) = {true_l:.6} <= {l}")),
        Check::new(
            suite,
            "per-step-contraction",
            violations == 0,
            format!("2000 steps, violations = {violations}, max(after - factor*before) = {worst:.3e}"),
        ),
    ])
}

fn eg_monotone(suite: &str) -> Result<Vec<Check>> {
    let mut rng = Rng::new(2).child("bilinear");
    let a = gaussian_mat(10, 10, &mut rng);
    let m = crate::problems::bilinear_game_matrix(&a);
    let b = gaussian_vec(20, &mut rng);
    let op = AffineOperator::new(vec![m], vec![b], OperatorMeta { monotone: true, ..Default::default() });
    let xs = op.solve_root().ok_or_else(|| Error::Infeasible("singular bilinear game".into()))?;
    let l = op.meta().lipschitz.unwrap_or(f64::NAN);
    let gamma = 1.0 / (2f64.sqrt() * l);
    let x0 = Point::zeros(20);
    let r0 = (&x0 - &xs).norm_squared();
    let scheme = SamplingScheme::full(1);
    let mut oracle = Oracle::new(&op);
    let mut x = x0;
    let mut best = op.mean(&x).norm_squared();
    let mut worst_ratio: f64 = 0.0;
    let mut violations = 0;
    for k in 0..=5000u64 {
        let bound = 4.0 * l * l * r0 / (k as f64 + 1.0);
        worst_ratio = worst_ratio.max(best / bound);
        if best > bound {
            violations += 1;
        }
        x = eg_step(&mut oracle, &x, gamma, gamma, &scheme, true, &mut rng)?;
        best = best.min(op.mean(&x).norm_squared());
    }
    Ok(vec![Check::new(
        suite,
        "best-iterate-rate",
        violations == 0,
        format!("K <= 5000, violations = {violations}, max ratio to bound = {worst_ratio:.3e}"),
    )])
}

fn speg_interpolated(suite: &str) -> Result<Vec<Check>> {
    let spec = QuadraticGameSpec { interpolated: true, seed: 0, ..Default::default() };
    let op = make_quadratic_game(&spec)?;
    let tau = 10;
    let scheme = SamplingScheme::minibatch(op.n(), tau)?;
    let er = er_constants(&op, &scheme)?;
    let mu = op.meta().mu.unwrap_or(f64::NAN);
    let l = op.meta().lipschitz.unwrap_or(f64::NAN);
    let w = omega_bar(mu, er.delta, l);
    let xs = x_star(&op)?;
    let x0 = Point::from_element(op.dim(), 1.0);
    let r0 = (&x0 - &xs).norm_squared();
    let eps = 1e-8;
    let budget = ((8.0 * l / mu).max(36.0 * er.delta / (mu * mu)) * (2.0 * r0 / eps).ln()).ceil() as u64;
    let seeds: Vec<u64> = (0..50).collect();
    let mut states: Vec<(Oracle, SpegState, Rng)> = seeds
        .iter()
        .map(|&s| {
            let mut rng = Rng::new(s).child("speg");
            let mut oracle = Oracle::new(&op);
            let st = SpegState::init(&mut oracle, &x0, &scheme, &mut rng).expect("valid instance");
            (oracle, st, rng)
        })
        .collect();
    let rate = 1.0 - w * mu / 2.0;
    let mut envelope_worst: f64 = 0.0;
    let mut hit = None;
    let mut avg = r0;
    for k in 0..=budget {
        envelope_worst = envelope_worst.max(avg / (rate.powi(k.min(i32::MAX as u64) as i32) * r0));
        if avg < eps {
            hit = Some(k);
            break;
        }
        let mut sum = 0.0;
        for (oracle, st, rng) in states.iter_mut() {
            speg_step(oracle, st, w, w, &scheme, rng)?;
            sum += (&st.x - &xs).norm_squared() + (&st.x - &st.xhat_prev).norm_squared();
        }
        avg = sum / seeds.len() as f64;
    }
    let geo = hit.map(|k| (avg / r0).powf(1.0 / k as f64));
    Ok(vec![
        Check::new(
            suite,
            "reaches-1e-8-within-budget",
            hit.is_some(),
            format!("tau = {tau}, delta = {:.4}, omega = {w:.4e}, budget = {budget}, hit = {hit:?}", er.delta),
        ),
        Check::new(
            suite,
            "averaged-contraction",
            envelope_worst <= 1.1 && geo.is_some_and(|g| g <= 1.0 - 0.9 * w * mu / 2.0),
            format!(
                "max avg R_k^2 / ((1 - omega mu/2)^k R_0^2) = {envelope_worst:.4} (<= 1.1), geometric mean factor = {geo:?} vs 1 - omega mu/2 = {rate:.6}"
            ),
        ),
    ])
}

fn speg_switching(suite: &str) -> Result<Vec<Check>> {
    let seeds: Vec<u64> = (0..50).collect();
    let per_seed = map_ordered(&seeds, exec(), |&seed| -> Result<(f64, f64)> {
        let op = make_quadratic_game(&QuadraticGameSpec { seed, ..Default::default() })?;
        let scheme = SamplingScheme::minibatch(op.n(), 1)?;
        let er = er_constants(&op, &scheme)?;
        let mu = op.meta().mu.unwrap_or(f64::NAN);
        let wb = omega_bar(mu, er.delta, op.meta().lipschitz.unwrap_or(f64::NAN));
        let x0 = Point::zeros(op.dim());
        let lim = RunLimits::iters(u64::MAX).oracle_budget(100_000).every(u64::MAX);
        let run = |p: StepPolicy| -> Result<f64> {
            let mut rng = Rng::new(seed).child("speg");
            let (tr, _) = run_speg(&op, &x0, &p, &scheme, lim, SpegOptions::default(), &mut rng)?;
            let last = tr.records.last().ok_or_else(|| Error::Contract("empty trace".into()))?;
            if last.oracle_calls < 100_000 {
                return Err(Error::Contract(format!("run stopped at {} oracle calls", last.oracle_calls)));
            }
            tr.series("relative_error").last().copied().ok_or_else(|| Error::Contract("no relative error".into()))
        };
        Ok((run(StepPolicy::Constant { gamma: wb, omega: wb })?, run(StepPolicy::Switching { omega_bar: wb, mu })?))
    });
    let (mut c, mut s) = (0.0, 0.0);
    for r in per_seed {
        let (a, b) = r?;
        c += a / seeds.len() as f64;
        s += b / seeds.len() as f64;
    }
    Ok(vec![Check::new(
        suite,
        "switching-halves-constant",
        s <= 0.5 * c,
        format!("at 1e5 oracle calls: switching {s:.4e}, constant {c:.4e}, ratio {:.3}", s / c),
    )])
}

fn er_validity(suite: &str) -> Result<Vec<Check>> {
    let op = make_quadratic_game(&QuadraticGameSpec { n: 100, d: 3, seed: 5, ..Default::default() })?;
    let n = op.n();
    let xs = x_star(&op)?;
    let l = op.meta().component_lipschitz.clone().unwrap_or_default();
    let schemes = vec![
        ("minibatch-1", SamplingScheme::minibatch(n, 1)?),
        ("minibatch-n/10", SamplingScheme::minibatch(n, n / 10)?),
        ("minibatch-n/2", SamplingScheme::minibatch(n, n / 2)?),
        ("single-uniform", SamplingScheme::uniform_single(n)?),
        ("single-importance", SamplingScheme::single_element(importance_probabilities(&l)?)?),
    ];
    let mut rng = Rng::new(5).child("points");
    let points: Vec<Point> = (0..100)
        .map(|_| {
            let scale = 10f64.powf(rng.random_range(-2.0..1.0));
            &xs + gaussian_vec(op.dim(), &mut rng) * scale
        })
        .collect();
    let mut checks = Vec::new();
    for (name, scheme) in &schemes {
        let delta = er_constants(&op, scheme)?.delta;
        let mut worst: f64 = 0.0;
        let mut draw_rng = Rng::new(5).child(name);
        for x in &points {
            let c: Vec<Point> = (0..n).map(|i| op.component(i, x) - op.component(i, &xs)).collect();
            let mean: Point = c.iter().fold(Point::zeros(op.dim()), |acc, v| acc + v) / n as f64;
            let mut second = 0.0;
            for _ in 0..10_000 {
                let v = scheme.draw(&mut draw_rng);
                let mut g = Point::zeros(op.dim());
                for &(i, w) in &v.entries {
                    g.axpy(w / n as f64, &c[i], 1.0);
                }
                second += (g - &mean).norm_squared();
            }
            second /= 10_000.0;
            worst = worst.max(second / (delta / 2.0 * (x - &xs).norm_squared()));
        }
        checks.push(Check::new(
            suite,
            name,
            worst <= 1.03,
            format!("delta = {delta:.4}, max MC second moment / (delta/2 |x-x*|^2) = {worst:.4} (<= 1.03)"),
        ));
    }
    Ok(checks)
}

fn speg_weak_minty(suite: &str) -> Result<Vec<Check>> {
    let seeds: Vec<u64> = (0..50).collect();
    let series = map_ordered(&seeds, exec(), |&seed| -> Result<(Vec<f64>, f64, f64)> {
        let op = make_weak_minty_scalar(100, seed)?;
        let norm = spectral_norm(op.mean_matrix());
        let scheme = SamplingScheme::minibatch(100, 6)?;
        let policy = StepPolicy::WeakMinty(WeakMintyConfig { gamma: 0.08, omega: 0.01, tau: 6 });
        let opts = SpegOptions { track_hat: true, track_lyapunov: false };
        let x0 = Point::from_column_slice(&[1.0, 1.0]);
        let mut rng = Rng::new(seed).child("speg");
        let (tr, _) = run_speg(&op, &x0, &policy, &scheme, RunLimits::iters(10_000), opts, &mut rng)?;
        Ok((tr.series("min_sq_operator_norm_hat"), norm, op.meta().rho.unwrap_or(f64::NAN)))
    });
    let mut avg = vec![0.0; 10_000];
    let mut worst_norm: f64 = 0.0;
    for r in series {
        let (s, norm, rho) = r?;
        if s.len() != avg.len() || rho != 1.0 / 32.0 {
            return Err(Error::Contract("unexpected weak Minty trace".into()));
        }
        worst_norm = worst_norm.max((norm - 8.0).abs());
        for (a, v) in avg.iter_mut().zip(s) {
            *a += v / seeds.len() as f64;
        }
    }
    let hit = avg.iter().position(|v| *v < 1e-3 * avg[0]);
    Ok(vec![
        Check::new(suite, "lipschitz-8", worst_norm < 1e-9, format!("max |L - 8| = {worst_norm:.2e}")),
        Check::new(
            suite,
            "min-hat-norm-below-1e-3",
            hit.is_some(),
            format!("first iteration below 1e-3 of initial = {:?}, final ratio = {:.3e}", hit.map(|k| k + 1), avg[9999] / avg[0]),
        ),
    ])
}

fn scaled_quadratic(l: f64, d: usize, rng: &mut Rng) -> AffineOperator {
    let m = game_matrix(
        &(gaussian_mat(d, d, rng) * 0.2 + Matrix::identity(d, d)),
        &gaussian_mat(d, d, rng),
        &(gaussian_mat(d, d, rng) * 0.2 + Matrix::identity(d, d)),
    );
    let m = &m * (l / spectral_norm(&m));
    AffineOperator::new(vec![m], vec![gaussian_vec(2 * d, rng)], OperatorMeta::default())
}

fn ls_budget(suite: &str) -> Result<Vec<Check>> {
    let mut rng = Rng::new(7).child("configs");
    let (mut loop_fail, mut gamma_fail, mut total_loops, mut nonzero) = (0, 0, 0u64, 0);
    for _ in 0..100 {
        let l = 10f64.powf(rng.random_range(-0.5..1.5));
        let g0 = 10f64.powf(rng.random_range(-3.0..1.0));
        let a = rng.random_range(0.1..1.0);
        let beta = rng.random_range(0.2..0.9);
        let op = scaled_quadratic(l, 4, &mut rng);
        let x0 = gaussian_vec(8, &mut rng);
        let mode = GammaMode::LineSearch { beta, a, grow: false };
        let scheme = SamplingScheme::full(1);
        let (tr, st) = run_polyak(&op, &x0, PolyakVariant::Deterministic, &scheme, mode, g0, RunLimits::iters(1000), &mut rng)?;
        let budget = while_loop_budget(l, g0, a, beta);
        total_loops += st.loops;
        if st.loops > 0 {
            nonzero += 1;
        }
        if st.loops > budget {
            loop_fail += 1;
        }
        let floor = (beta * a / l).min(g0);
        if tr.series("gamma").iter().any(|g| *g < floor) {
            gamma_fail += 1;
        }
    }
    Ok(vec![
        Check::new(
            suite,
            "cumulative-loops-within-budget",
            loop_fail == 0,
            format!("100 configs, violations = {loop_fail}, configs with shrinks = {nonzero}, total shrinks = {total_loops}"),
        ),
        Check::new(suite, "gamma-lower-bound", gamma_fail == 0, format!("violating configs = {gamma_fail}")),
    ])
}

fn polyak_contraction(suite: &str) -> Result<Vec<Check>> {
    let op = make_quadratic_game(&QuadraticGameSpec { n: 50, d: 10, seed: 8, ..Default::default() })?;
    let l = op.meta().lipschitz.unwrap_or(f64::NAN);
    let mu = op.meta().mu.unwrap_or(f64::NAN);
    let xs = x_star(&op)?;
    let factor = 1.0 - mu / (4.0 * l);
    let mut oracle = Oracle::new(&op);
    let mut st = PolyakState::new(Point::from_element(op.dim(), 1.0), 1.0 / (3.0 * l));
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut steps = 0;
    for _ in 0..2000 {
        let before = (&st.x - &xs).norm_squared();
        polyak_eg_step(&mut oracle, &mut st, GammaMode::Constant(1.0 / (3.0 * l)))?;
        if st.converged {
            break;
        }
        steps += 1;
        let after = (&st.x - &xs).norm_squared();
        worst = worst.max(after - factor * before);
        if after > factor * before + 1e-10 {
            violations += 1;
        }
    }
    Ok(vec![Check::new(
        suite,
        "per-step-contraction",
        violations == 0,
        format!("{steps} steps, violations = {violations}, max(after - factor*before) = {worst:.3e}"),
    )])
}

fn dec_polyak(suite: &str) -> Result<Vec<Check>> {
    let op = make_quadratic_game(&QuadraticGameSpec { n: 20, d: 5, seed: 9, ..Default::default() })?;
    let l = op.meta().component_lipschitz.as_ref().map_or(f64::NAN, |v| v.iter().cloned().fold(0.0, f64::max));
    let (beta, a) = (0.5, 0.5);
    let scheme = SamplingScheme::minibatch(op.n(), 1)?;
    let mode = GammaMode::LineSearch { beta, a, grow: false };
    let mut rng = Rng::new(9).child("dec");
    let x0 = Point::from_element(op.dim(), 1.0);
    let (tr, _) = run_polyak(&op, &x0, PolyakVariant::Decreasing, &scheme, mode, 1.0, RunLimits::iters(10_000), &mut rng)?;
    let recs: Vec<_> = tr.records.iter().filter(|r| r.iteration >= 1).collect();
    let gamma: Vec<(u64, f64)> = recs.iter().map(|r| (r.iteration - 1, r.metrics["gamma"])).collect();
    let omega: Vec<f64> = recs.iter().filter_map(|r| r.metrics.get("omega").copied()).collect();
    let omega_ok = omega.windows(2).all(|w| w[1] <= w[0]);
    let scaled: Vec<f64> = recs.iter().map(|r| r.metrics["gamma_scaled"]).collect();
    let drift = gamma
        .iter()
        .zip(&scaled)
        .map(|((k, g), s)| (g * ((k + 1) as f64).sqrt() - s).abs() / s)
        .fold(0.0, f64::max);
    let scaled_bad = scaled.windows(2).filter(|w| w[1] > w[0]).count();
    let floor_bad = gamma.iter().filter(|(k, g)| *g < beta * a / (l * ((k + 1) as f64).sqrt())).count();
    Ok(vec![
        Check::new(suite, "omega-nonincreasing", omega_ok && omega.len() == 10_000, format!("{} steps", omega.len())),
        Check::new(
            suite,
            "scaled-gamma-nonincreasing",
            scaled_bad == 0 && drift < 1e-14,
            format!("violations = {scaled_bad}, max |gamma sqrt(k+1) - s_k| / s_k = {drift:.1e}"),
        ),
        Check::new(suite, "gamma-lower-bound", floor_bad == 0, format!("violations = {floor_bad}, L_max = {l:.4}")),
    ])
}

fn nu_roots(suite: &str) -> Result<Vec<Check>> {
    let cases = [
        ("nu-A", NuEquation::A, 0.363),
        ("nu-B", NuEquation::B, 0.21),
        ("nu-C", NuEquation::C, 0.45),
        ("nu-D", NuEquation::D, 0.567),
    ];
    let mut out = Vec::new();
    for (name, eq, target) in cases {
        let v = solve_nu(eq, 1e-13)?;
        let r = eq.residual(v).abs();
        let cached = nu_table().get(eq);
        out.push(Check::new(
            suite,
            name,
            r < 1e-12 && (v - target).abs() <= 0.005 && (cached - v).abs() < 1e-12,
            format!("nu = {v:.12}, |residual| = {r:.2e}, target {target} +- 0.005"),
        ));
    }
    Ok(out)
}

fn l0l1_contraction(suite: &str) -> Result<Vec<Check>> {
    let op = make_sinh_gradient(10, 0)?;
    let meta = op.meta().clone();
    let c = meta.l0l1.ok_or_else(|| Error::Contract("missing (L0,L1)".into()))?;
    let mu = meta.mu.unwrap_or(f64::NAN);
    let x0 = Point::from_element(10, 1.0);
    let r = x0.norm();
    let nu = nu_table().a;
    let factor = strong_contraction_factor(mu, c.l0, c.l1, r);
    let cfg = L0L1Config::user(1.0, c.l0 / nu, c.l1 / nu, Regime::StronglyMonotone);
    let mut oracle = Oracle::new(&op);
    let mut x = x0;
    let (mut violations, mut worst) = (0, f64::NEG_INFINITY);
    for _ in 0..3000 {
        let before = x.norm_squared();
        x = crate::solvers_l0l1::eg_l0l1_step(&mut oracle, &x, &cfg)?.0;
        let after = x.norm_squared();
        worst = worst.max(after - factor * before);
        if after > factor * before + 1e-8 {
            violations += 1;
        }
    }
    Ok(vec![Check::new(
        suite,
        "per-step-contraction",
        violations == 0,
        format!(
            "mu = {mu:.4}, L0 = {:.4}, L1 = {:.4}, factor = {factor:.6}, violations = {violations}, max excess = {worst:.3e}, final |x| = {:.2e}",
            c.l0,
            c.l1,
            x.norm()
        ),
    )])
}

fn gamma_growth(gammas: &[f64]) -> Option<usize> {
    (10..gammas.len().saturating_sub(1)).find(|&k| gammas[k + 1] < gammas[k])
}

fn l0l1_convergence(suite: &str) -> Result<Vec<Check>> {
    let cubic = make_cubic_minmax(2, 0)?;
    let cfg = L0L1Config::user(1.0, 10.0, 10.0, Regime::Monotone);
    let (tr, _) = run_eg_l0l1(&cubic, &Point::from_element(4, 1.0), &cfg, RunLimits::iters(100_000), 0)?;
    let re = tr.series("relative_error");
    let hit = re.iter().position(|v| *v < 1e-6);
    let g = tr.series("gamma");
    let cubic_dec = gamma_growth(&g[..hit.unwrap_or(g.len()).min(g.len())]);

    let gf = make_global_forsaken();
    let cfg = L0L1Config::user(1.0, 1.0, 1.0, Regime::Monotone);
    let (tr, _) = run_eg_l0l1(&gf, &Point::from_column_slice(&[1.0, 1.0]), &cfg, RunLimits::iters(100_000), 0)?;
    let norms: Vec<f64> = tr.series("relative_error").iter().map(|v| (v * 2.0).sqrt()).collect();
    let gf_hit = norms.iter().position(|v| *v < 1e-4);
    let g = tr.series("gamma");
    let gf_dec = gamma_growth(&g[..gf_hit.unwrap_or(g.len()).min(g.len())]);
    Ok(vec![
        Check::new(suite, "cubic-relative-error", hit.is_some(), format!("first iteration below 1e-6: {hit:?}")),
        Check::new(suite, "cubic-gamma-growth", cubic_dec.is_none(), format!("first decrease after k=10: {cubic_dec:?}")),
        Check::new(suite, "forsaken-norm", gf_hit.is_some(), format!("first iteration with |x| < 1e-4: {gf_hit:?}")),
        Check::new(suite, "forsaken-gamma-growth", gf_dec.is_none(), format!("first decrease after k=10: {gf_dec:?}")),
    ])
}

fn jacobian_fit(suite: &str) -> Result<Vec<Check>> {
    let cubic = make_cubic_minmax(1, 0)?;
    let grid = square_grid(100, 2.0);
    let fit = fit_l0l1(&cubic, &grid, 1.0)?;
    let violations = grid
        .iter()
        .filter(|x| {
            let j = cubic.jacobian(x).expect("analytic Jacobian");
            spectral_norm(&j) > fit.l0 + fit.l1 * cubic.mean(x).norm() + 1e-6
        })
        .count();
    let lin = make_linear_game();
    let lfit = fit_l0l1(&lin, &square_grid(20, 3.0), 1.0)?;
    Ok(vec![
        Check::new(
            suite,
            "cubic-no-violations",
            violations == 0,
            format!("{} points, L0 = {:.5}, L1 = {:.5}, violations = {violations}", grid.len(), fit.l0, fit.l1),
        ),
        Check::new(
            suite,
            "linear-game-constants",
            lfit.l1 < 1e-6 && (lfit.l0 - 2f64.sqrt()).abs() <= 1e-3,
            format!("L0 = {:.8}, L1 = {:.2e}", lfit.l0, lfit.l1),
        ),
    ])
}

/// Heterogeneous 20-client federated game with its exact constants and theoretical GDA parameters.
fn fl_instance(seed: u64) -> Result<(Vec<AffineOperator>, crate::fl::NetworkConstants, NetworkConfig)> {
    let ops = make_federated_quadratic_game(20, 100, 20, (0.01, 1.0), (0.0, 1.0), seed)?;
    let c = network_constants(&ops)?;
    let (cfg, _) = theoretical_params(ParamMode::Gda { ell: c.ell, mu: c.mu })?;
    Ok((ops, c, cfg))
}

fn proxskip_lyapunov(suite: &str) -> Result<Vec<Check>> {
    let (ops, c, cfg) = fl_instance(0)?;
    let z = &c.z_star;
    let fs = local_values_at(&ops, z);
    let rate = 1.0 - (cfg.gamma * c.mu).min(cfg.p * cfg.p);
    let x0 = Point::zeros(ops[0].dim());
    let d0 = (&x0 - z).norm_squared();
    let mut net = Network::new(&ops, &x0, &Rng::new(0).child("proxskip"))?;
    let mut v = lyapunov_v(&net.clients, z, &fs, cfg.gamma, cfg.p, 0.0, 0.0)?;
    let (mut violations, mut worst, mut rounds_seen) = (0, 0.0f64, 0u64);
    let mut hit = None;
    while rounds_seen < 100_000 {
        net.proxskip_vip_round(&cfg, Estimator::Deterministic);
        rounds_seen += 1;
        let vn = lyapunov_v(&net.clients, z, &fs, cfg.gamma, cfg.p, 0.0, 0.0)?;
        worst = worst.max(vn / v);
        if vn > rate * v + 1e-10 {
            violations += 1;
        }
        v = vn;
        if (net.mean_x() - z).norm_squared() / d0 < 1e-6 {
            hit = Some(net.log.rounds);
            break;
        }
    }
    let h = (1.0 / cfg.p).ceil() as u64;
    let cap = 10_000u64;
    let mut local = Network::new(&ops, &x0, &Rng::new(0).child("local"))?;
    let mut local_hit = None;
    let mut local_best = f64::INFINITY;
    for _ in 0..cap {
        local.local_gda_round(h, cfg.gamma, Estimator::Deterministic);
        let re = (local.mean_x() - z).norm_squared() / d0;
        local_best = local_best.min(re);
        if re < 1e-6 {
            local_hit = Some(local.log.rounds);
            break;
        }
    }
    let comm_ok = match (hit, local_hit) {
        (Some(a), Some(b)) => a as f64 <= 0.5 * b as f64,
        (Some(a), None) => a as f64 <= 0.5 * cap as f64,
        _ => false,
    };
    Ok(vec![
        Check::new(
            suite,
            "pathwise-contraction",
            violations == 0,
            format!(
                "gamma = {:.4}, p = {:.4}, rate = {rate:.4}, {rounds_seen} rounds, violations = {violations}, max V_k+1/V_k = {worst:.4}",
                cfg.gamma, cfg.p
            ),
        ),
        Check::new(
            suite,
            "communication-vs-local-gda",
            comm_ok,
            format!(
                "ProxSkip rounds to 1e-6: {hit:?}; Local GDA (H = {h}) rounds: {local_hit:?} (cap {cap}, best {local_best:.3e})"
            ),
        ),
    ])
}

fn proxskip_lyapunov_expectation(suite: &str) -> Result<Vec<Check>> {
    let (ops, c, cfg) = fl_instance(0)?;
    let z = &c.z_star;
    let fs = local_values_at(&ops, z);
    let rate = 1.0 - (cfg.gamma * c.mu).min(cfg.p * cfg.p);
    let x0 = Point::zeros(ops[0].dim());
    let mut net = Network::new(&ops, &x0, &Rng::new(0).child("proxskip"))?;
    let lv = |cl: &[crate::fl::ClientState]| lyapunov_v(cl, z, &fs, cfg.gamma, cfg.p, 0.0, 0.0);
    let (mut violations, mut worst) = (0, 0.0f64);
    for _ in 0..200 {
        let v = lv(&net.clients)?;
        if v < 1e-24 {
            break;
        }
        let (b0, b1) = net.proxskip_branches(&cfg);
        let ev = cfg.p * lv(&b1)? + (1.0 - cfg.p) * lv(&b0)?;
        worst = worst.max(ev / v);
        if ev > rate * v + 1e-10 {
            violations += 1;
        }
        net.proxskip_vip_round(&cfg, Estimator::Deterministic);
    }
    Ok(vec![Check::new(
        suite,
        "conditional-expectation-contraction",
        violations == 0,
        format!("max E[V_k+1 | state]/V_k = {worst:.4} vs rate {rate:.4}, violations = {violations}"),
    )])
}

fn proxskip_svrg(suite: &str) -> Result<Vec<Check>> {
    const RUN: usize = 8000;
    let seeds: Vec<u64> = (0..50).collect();
    let runs = map_ordered(&seeds, exec(), |&seed| -> Result<(Vec<f64>, Vec<f64>, u64)> {
        let ops = make_federated_quadratic_game(20, 100, 20, (0.01, 1.0), (0.0, 1.0), seed)?;
        let c = network_constants(&ops)?;
        let (cfg, _) = theoretical_params(ParamMode::Svrg { ell_hat: c.ell_hat, mu: c.mu })?;
        let budget = (20.0 * c.ell_hat / c.mu * 1e6f64.ln()).ceil() as u64;
        let x0 = Point::zeros(ops[0].dim());
        let d0 = (&x0 - &c.z_star).norm_squared();
        let rng = Rng::new(seed).child("svrg");
        let mut vr = Network::new(&ops, &x0, &rng)?;
        let mut plain = Network::new(&ops, &x0, &rng)?;
        let (mut a, mut b) = (Vec::with_capacity(RUN), Vec::with_capacity(RUN));
        for _ in 0..RUN {
            vr.proxskip_l_svrgda_round(&cfg);
            plain.proxskip_vip_round(&cfg, Estimator::Stochastic(1));
            a.push((vr.mean_x() - &c.z_star).norm_squared() / d0);
            b.push((plain.mean_x() - &c.z_star).norm_squared() / d0);
        }
        Ok((a, b, budget))
    });
    let mut avg_vr = vec![0.0; RUN];
    let mut avg_plain = vec![0.0; RUN];
    let mut budget = u64::MAX;
    for r in runs {
        let (a, b, k) = r?;
        budget = budget.min(k);
        for i in 0..RUN {
            avg_vr[i] += a[i] / seeds.len() as f64;
            avg_plain[i] += b[i] / seeds.len() as f64;
        }
    }
    let hit = avg_vr.iter().position(|v| *v < 1e-6);
    let within = hit.is_some_and(|k| (k as u64 + 1) <= budget);
    let (plain_at, vr_at) = hit.map_or((f64::NAN, f64::NAN), |k| (avg_plain[k], avg_vr[k]));
    Ok(vec![
        Check::new(
            suite,
            "variance-reduced-reaches-1e-6",
            within,
            format!("iterations to averaged 1e-6: {:?}, smallest seed budget {budget}", hit.map(|k| k + 1)),
        ),
        Check::new(
            suite,
            "plain-plateaus-higher",
            plain_at >= 10.0 * 1e-6 && plain_at >= 10.0 * vr_at,
            format!("at matched iterations: plain {plain_at:.3e}, variance-reduced {vr_at:.3e}"),
        ),
    ])
}

fn comm_frequency(suite: &str) -> Result<Vec<Check>> {
    let m = Matrix::identity(2, 2);
    let ops = vec![
        AffineOperator::new(vec![m.clone()], vec![Point::from_column_slice(&[1.0, 0.0])], OperatorMeta::default()),
        AffineOperator::new(vec![m], vec![Point::from_column_slice(&[-1.0, 0.5])], OperatorMeta::default()),
    ];
    let p = 0.05;
    let cfg = NetworkConfig { gamma: 0.1, p, q: 1.0 };
    let mut net = Network::new(&ops, &Point::zeros(2), &Rng::new(16).child("coins"))?;
    let rounds = 100_000u64;
    for _ in 0..rounds {
        net.proxskip_vip_round(&cfg, Estimator::Deterministic);
    }
    let freq = net.log.rounds as f64 / net.log.iterations as f64;
    let se = (p * (1.0 - p) / rounds as f64).sqrt();
    Ok(vec![Check::new(
        suite,
        "rounds-over-iterations",
        (freq - p).abs() <= 4.0 * se && net.log.round_iters.len() as u64 == net.log.rounds,
        format!("observed {freq:.5}, p = {p}, 4 standard errors = {:.5}", 4.0 * se),
    )])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_unique_and_criteria_complete() {
        let mut names: Vec<&str> = SUITES.iter().map(|s| s.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), SUITES.len());
        for n in 1..=16 {
            assert!(suite_for_criterion(n).is_some(), "criterion {n}");
        }
    }

    #[test]
    fn nu_roots_four_checks() {
        let c = verify_theory("nu-roots").unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|c| c.passed));
    }

    #[test]
    fn unknown_suite_is_config_error() {
        assert!(matches!(verify_theory("nope"), Err(Error::Config { .. })));
    }
}
