//! GDA, EG and the single-call stochastic past-extragradient family.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::operator::{base_metrics, diverged, Oracle, Point, RunLimits, RunStatus, Trace, TraceRecord};
use crate::problems::constrain;
use crate::rng::Rng;
use crate::sampling::SamplingScheme;

fn estimate(oracle: &mut Oracle, scheme: &SamplingScheme, x: &Point, rng: &mut Rng) -> Result<Point> {
    if scheme.is_full() {
        oracle.full(x)
    } else {
        let v = scheme.draw(rng);
        oracle.sampled(&v, x)
    }
}

/// x − ω g(x).
pub fn gda_step(oracle: &mut Oracle, x: &Point, omega: f64, scheme: &SamplingScheme, rng: &mut Rng) -> Result<Point> {
    let g = estimate(oracle, scheme, x, rng)?;
    Ok(constrain(oracle.op(), x - g * omega))
}

/// x̂ = x − γ g₁(x), x' = x − ω g₂(x̂). With `same_sample`, g₂ reuses g₁'s sampling vector.
pub fn eg_step(
    oracle: &mut Oracle,
    x: &Point,
    gamma: f64,
    omega: f64,
    scheme: &SamplingScheme,
    same_sample: bool,
    rng: &mut Rng,
) -> Result<Point> {
    let op = oracle.op();
    if scheme.is_full() {
        let xh = constrain(op, x - oracle.full(x)? * gamma);
        return Ok(constrain(op, x - oracle.full(&xh)? * omega));
    }
    let v1 = scheme.draw(rng);
    let xh = constrain(op, x - oracle.sampled(&v1, x)? * gamma);
    let v2 = if same_sample { v1 } else { scheme.draw(rng) };
    Ok(constrain(op, x - oracle.sampled(&v2, &xh)? * omega))
}

/// State of the stochastic past-extragradient method.
#[derive(Clone, Debug, PartialEq)]
pub struct SpegState {
    pub x: Point,
    pub xhat_prev: Point,
    /// Most recent extrapolation-point evaluation F_{v_{k−1}}(x̂_{k−1}).
    pub g_prev: Point,
    pub k: u64,
}

impl SpegState {
    /// x̂_{−1} = x_0, with one bootstrap evaluation g = F_{v_{−1}}(x_0).
    pub fn init(oracle: &mut Oracle, x0: &Point, scheme: &SamplingScheme, rng: &mut Rng) -> Result<Self> {
        let g = estimate(oracle, scheme, x0, rng)?;
        Ok(SpegState { x: x0.clone(), xhat_prev: x0.clone(), g_prev: g, k: 0 })
    }
}

/// x̂_k = x_k − γ_k g_prev, x_{k+1} = x_k − ω_k F_{v_k}(x̂_k).
pub fn speg_step(
    oracle: &mut Oracle,
    st: &mut SpegState,
    gamma: f64,
    omega: f64,
    scheme: &SamplingScheme,
    rng: &mut Rng,
) -> Result<()> {
    let op = oracle.op();
    let xh = constrain(op, &st.x - &st.g_prev * gamma);
    let g = estimate(oracle, scheme, &xh, rng)?;
    st.x = constrain(op, &st.x - &g * omega);
    st.xhat_prev = xh;
    st.g_prev = g;
    st.k += 1;
    Ok(())
}

/// ω = min{μ/(18δ), 1/(4L), εμ/(48σ*²)}; terms with zero denominator are dropped.
pub fn policy_constant(mu: f64, delta: f64, l: f64, sigma2: f64, eps: f64) -> f64 {
    let mut w = 1.0 / (4.0 * l);
    if delta > 0.0 {
        w = w.min(mu / (18.0 * delta));
    }
    if sigma2 > 0.0 {
        w = w.min(eps * mu / (48.0 * sigma2));
    }
    w
}

/// Iterations sufficient for E R_K² ≤ ε under the constant step.
pub fn constant_iteration_budget(mu: f64, delta: f64, l: f64, sigma2: f64, eps: f64, r0_sq: f64) -> f64 {
    let a = (8.0 * l / mu).max(36.0 * delta / (mu * mu));
    let b = if sigma2 > 0.0 { 96.0 * sigma2 / (eps * mu * mu) } else { 0.0 };
    a.max(b) * (2.0 * r0_sq / eps).ln()
}

/// ω̄ = min{1/(4L), μ/(18δ)}.
pub fn omega_bar(mu: f64, delta: f64, l: f64) -> f64 {
    policy_constant(mu, delta, l, 0.0, 1.0)
}

/// k* = ⌈4/(μω̄)⌉.
pub fn switching_index(mu: f64, omega_bar: f64) -> u64 {
    (4.0 / (mu * omega_bar)).ceil() as u64
}

/// Constant ω̄ for k ≤ k*, then (2k+1)/(k+1)² · 2/μ.
pub fn policy_switching(k: u64, mu: f64, delta: f64, l: f64) -> f64 {
    switching_from(k, mu, omega_bar(mu, delta, l))
}

fn switching_from(k: u64, mu: f64, wb: f64) -> f64 {
    if k <= switching_index(mu, wb) {
        wb
    } else {
        let kf = k as f64;
        (2.0 * kf + 1.0) / ((kf + 1.0) * (kf + 1.0)) * 2.0 / mu
    }
}

/// Horizon-aware schedule with k₀ = ⌈K/2⌉.
pub fn policy_horizon(k: u64, horizon: u64, mu: f64, delta: f64, l: f64) -> f64 {
    horizon_from(k, horizon, mu, omega_bar(mu, delta, l))
}

fn horizon_from(k: u64, horizon: u64, mu: f64, wb: f64) -> f64 {
    let k0 = horizon.div_ceil(2);
    if (horizon as f64) <= 2.0 / (mu * wb) || k <= k0 {
        wb
    } else {
        2.0 / (2.0 / wb + 0.5 * mu * (k - k0) as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakMintyConfig {
    pub gamma: f64,
    pub omega: f64,
    pub tau: u64,
}

/// Step sizes and batch size for weak Minty problems.
pub fn config_weak_minty(l: f64, rho: f64, delta: f64, sigma2: f64, r0_sq: f64, horizon: u64) -> Result<WeakMintyConfig> {
    if !(l > 0.0) || rho < 0.0 {
        return Err(Error::config("policy.weak_minty", "need L > 0 and rho >= 0"));
    }
    if rho >= 1.0 / (2.0 * l) {
        return Err(Error::Infeasible(format!("rho = {rho} >= 1/(2L) = {}", 1.0 / (2.0 * l))));
    }
    let lo = (2.0 * rho).max(1.0 / (2.0 * l));
    let gamma = 0.5 * (lo + 1.0 / l);
    let omega = 0.9 * (gamma - 2.0 * rho).min(1.0 / (4.0 * l) - gamma / 4.0);
    Ok(WeakMintyConfig { gamma, omega, tau: weak_minty_batch(l, delta, sigma2, r0_sq, horizon, gamma, omega) })
}

/// τ ≥ max{1, 32δ/((1−Lγ)L³ω), 48ωγδ(K−1)/(1−Lγ)², 2ωγσ*²(K−1)/((1−Lγ)R0²)}.
pub fn weak_minty_batch(l: f64, delta: f64, sigma2: f64, r0_sq: f64, horizon: u64, gamma: f64, omega: f64) -> u64 {
    let s = 1.0 - l * gamma;
    let km1 = horizon.saturating_sub(1) as f64;
    let mut t = 1.0f64;
    t = t.max(32.0 * delta / (s * l.powi(3) * omega));
    t = t.max(48.0 * omega * gamma * delta * km1 / (s * s));
    if r0_sq > 0.0 {
        t = t.max(2.0 * omega * gamma * sigma2 * km1 / (s * r0_sq));
    }
    t.ceil() as u64
}

/// Step-size schedule for EG-type and SPEG runs, returning (γ_k, ω_k).
#[derive(Clone, Debug, PartialEq)]
pub enum StepPolicy {
    Constant { gamma: f64, omega: f64 },
    Switching { omega_bar: f64, mu: f64 },
    Horizon { omega_bar: f64, mu: f64, horizon: u64 },
    WeakMinty(WeakMintyConfig),
    Custom(Vec<(f64, f64)>),
}

impl StepPolicy {
    pub fn steps(&self, k: u64) -> (f64, f64) {
        match self {
            StepPolicy::Constant { gamma, omega } => (*gamma, *omega),
            StepPolicy::Switching { omega_bar, mu } => {
                let w = switching_from(k, *mu, *omega_bar);
                (w, w)
            }
            StepPolicy::Horizon { omega_bar, mu, horizon } => {
                let w = horizon_from(k, *horizon, *mu, *omega_bar);
                (w, w)
            }
            StepPolicy::WeakMinty(c) => (c.gamma, c.omega),
            StepPolicy::Custom(v) => *v.get(k as usize).or(v.last()).expect("empty custom schedule"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |g: f64, w: f64| g > 0.0 && w > 0.0 && g.is_finite() && w.is_finite();
        let good = match self {
            StepPolicy::Constant { gamma, omega } => ok(*gamma, *omega),
            StepPolicy::Switching { omega_bar, mu } | StepPolicy::Horizon { omega_bar, mu, .. } => ok(*omega_bar, *mu),
            StepPolicy::WeakMinty(c) => ok(c.gamma, c.omega) && c.omega < c.gamma,
            StepPolicy::Custom(v) => !v.is_empty() && v.iter().all(|(g, w)| ok(*g, *w)),
        };
        if good {
            Ok(())
        } else {
            Err(Error::config("policy", "step sizes must be positive (and omega < gamma for weak Minty)"))
        }
    }
}

/// Optional per-run extras for [`run_speg`].
#[derive(Clone, Copy, Debug, Default)]
pub struct SpegOptions {
    /// Track min_j ‖F(x̂_j)‖² (one uncounted full evaluation per iteration).
    pub track_hat: bool,
    /// Track R_k² = ‖x_k − x*‖² + ‖x_k − x̂_{k−1}‖².
    pub track_lyapunov: bool,
}

fn record(trace: &mut Trace, k: u64, calls: u64, seed: u64, metrics: BTreeMap<String, f64>) {
    trace.push(TraceRecord { iteration: k, oracle_calls: calls, comm_rounds: 0, metrics, seed });
}

/// Runs SPEG from `x0` under `policy`, recording every `limits.record_every` iterations.
pub fn run_speg(
    op: &dyn crate::operator::FiniteSumOperator,
    x0: &Point,
    policy: &StepPolicy,
    scheme: &SamplingScheme,
    limits: RunLimits,
    opts: SpegOptions,
    rng: &mut Rng,
) -> Result<(Trace, Point)> {
    policy.validate()?;
    let seed = rng.seed();
    let mut oracle = Oracle::new(op);
    let mut st = SpegState::init(&mut oracle, x0, scheme, rng)?;
    let mut trace = Trace::new();
    let mut min_hat = f64::INFINITY;
    let snapshot = |st: &SpegState, min_hat: f64, k: u64| {
        let mut m = base_metrics(op, &st.x, x0);
        let (g, w) = policy.steps(k);
        m.insert("gamma".into(), g);
        m.insert("omega".into(), w);
        if opts.track_hat && min_hat.is_finite() {
            m.insert("min_sq_operator_norm_hat".into(), min_hat);
        }
        if opts.track_lyapunov {
            if let Some(xs) = &op.meta().x_star {
                let r = (&st.x - xs).norm_squared() + (&st.x - &st.xhat_prev).norm_squared();
                m.insert("lyapunov_R2".into(), r);
            }
        }
        m
    };
    record(&mut trace, 0, oracle.calls(), seed, snapshot(&st, min_hat, 0));
    let mut k = 0;
    while !limits.exhausted(k, oracle.calls()) {
        let (g, w) = policy.steps(k);
        speg_step(&mut oracle, &mut st, g, w, scheme, rng)?;
        k += 1;
        if opts.track_hat {
            min_hat = min_hat.min(op.mean(&st.xhat_prev).norm_squared());
        }
        if diverged(&st.x) {
            trace.status = RunStatus::Diverged;
            break;
        }
        if limits.due(k) || limits.exhausted(k, oracle.calls()) {
            record(&mut trace, k, oracle.calls(), seed, snapshot(&st, min_hat, k));
        }
    }
    Ok((trace, st.x))
}

/// Runs (stochastic) EG with fixed steps.
#[allow(clippy::too_many_arguments)]
pub fn run_eg(
    op: &dyn crate::operator::FiniteSumOperator,
    x0: &Point,
    gamma: f64,
    omega: f64,
    scheme: &SamplingScheme,
    same_sample: bool,
    limits: RunLimits,
    rng: &mut Rng,
) -> Result<(Trace, Point)> {
    let seed = rng.seed();
    let mut oracle = Oracle::new(op);
    let mut trace = Trace::new();
    let mut x = x0.clone();
    record(&mut trace, 0, 0, seed, base_metrics(op, &x, x0));
    let mut k = 0;
    while !limits.exhausted(k, oracle.calls()) {
        x = eg_step(&mut oracle, &x, gamma, omega, scheme, same_sample, rng)?;
        k += 1;
        if diverged(&x) {
            trace.status = RunStatus::Diverged;
            break;
        }
        if limits.due(k) || limits.exhausted(k, oracle.calls()) {
            record(&mut trace, k, oracle.calls(), seed, base_metrics(op, &x, x0));
        }
    }
    Ok((trace, x))
}

/// Runs (stochastic) GDA with a fixed step.
pub fn run_gda(
    op: &dyn crate::operator::FiniteSumOperator,
    x0: &Point,
    omega: f64,
    scheme: &SamplingScheme,
    limits: RunLimits,
    rng: &mut Rng,
) -> Result<(Trace, Point)> {
    let seed = rng.seed();
    let mut oracle = Oracle::new(op);
    let mut trace = Trace::new();
    let mut x = x0.clone();
    record(&mut trace, 0, 0, seed, base_metrics(op, &x, x0));
    let mut k = 0;
    while !limits.exhausted(k, oracle.calls()) {
        x = gda_step(&mut oracle, &x, omega, scheme, rng)?;
        k += 1;
        if diverged(&x) {
            trace.status = RunStatus::Diverged;
            break;
        }
        if limits.due(k) || limits.exhausted(k, oracle.calls()) {
            record(&mut trace, k, oracle.calls(), seed, base_metrics(op, &x, x0));
        }
    }
    Ok((trace, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{FiniteSumOperator, Matrix, OperatorMeta};
    use crate::problems::{make_quadratic_game, AffineOperator, QuadraticGameSpec};

    fn linear(m: &[f64], d: usize) -> AffineOperator {
        AffineOperator::new(
            vec![Matrix::from_row_slice(d, d, m)],
            vec![Point::zeros(d)],
            OperatorMeta { x_star: Some(Point::zeros(d)), ..Default::default() },
        )
    }

    fn game(seed: u64) -> AffineOperator {
        make_quadratic_game(&QuadraticGameSpec { n: 10, d: 5, seed, ..Default::default() }).unwrap()
    }

    #[test]
    fn gda_examples() {
        let op = linear(&[1.0], 1);
        let mut o = Oracle::new(&op);
        let mut rng = Rng::new(0);
        let full = SamplingScheme::full(1);
        let x = gda_step(&mut o, &Point::from_vec(vec![1.0]), 1.0, &full, &mut rng).unwrap();
        assert_eq!(x[0], 0.0);
        let bil = linear(&[0.0, 1.0, -1.0, 0.0], 2);
        let mut o = Oracle::new(&bil);
        let x = Point::from_vec(vec![0.6, -0.8]);
        let w = 0.3;
        let y = gda_step(&mut o, &x, w, &full, &mut rng).unwrap();
        assert!((y.norm_squared() - (1.0 + w * w) * x.norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn eg_fixed_point() {
        let op = game(1);
        let xs = op.meta().x_star.clone().unwrap();
        let mut o = Oracle::new(&op);
        let mut rng = Rng::new(0);
        let y = eg_step(&mut o, &xs, 0.1, 0.1, &SamplingScheme::full(10), false, &mut rng).unwrap();
        assert!((y - &xs).norm() < 1e-12);
        assert_eq!(o.calls(), 20);
    }

    #[test]
    fn eg_monotone_descent_inequality() {
        let op = linear(&[0.0, 1.0, -1.0, 0.0], 2);
        let l = 1.0;
        let g = 1.0 / (2f64.sqrt() * l);
        let mut o = Oracle::new(&op);
        let mut rng = Rng::new(0);
        let mut x = Point::from_vec(vec![1.0, 2.0]);
        for _ in 0..50 {
            let y = eg_step(&mut o, &x, g, g, &SamplingScheme::full(1), false, &mut rng).unwrap();
            let f = op.mean(&x).norm_squared();
            assert!(y.norm_squared() <= x.norm_squared() - f / (4.0 * l * l) + 1e-12);
            x = y;
        }
    }

    #[test]
    fn oracle_accounting() {
        let op = game(2);
        let sch = SamplingScheme::minibatch(10, 3).unwrap();
        let mut rng = Rng::new(5);
        let mut o = Oracle::new(&op);
        let x0 = Point::zeros(10);
        let mut st = SpegState::init(&mut o, &x0, &sch, &mut rng).unwrap();
        assert_eq!(o.calls(), 3);
        for k in 1..=10 {
            speg_step(&mut o, &mut st, 0.01, 0.01, &sch, &mut rng).unwrap();
            assert_eq!(o.calls(), 3 + 3 * k);
        }
        let before = o.calls();
        eg_step(&mut o, &x0, 0.1, 0.1, &sch, true, &mut rng).unwrap();
        assert_eq!(o.calls() - before, 6);
    }

    #[test]
    fn speg_is_ogda() {
        let op = game(3);
        let full = SamplingScheme::full(10);
        let (g, w) = (0.05, 0.08);
        let mut rng = Rng::new(0);
        let mut o = Oracle::new(&op);
        let x0 = Point::from_fn(10, |i, _| (i as f64 * 0.7).cos());
        let mut st = SpegState::init(&mut o, &x0, &full, &mut rng).unwrap();
        let mut hats = Vec::new();
        for _ in 0..100 {
            speg_step(&mut o, &mut st, g, w, &full, &mut rng).unwrap();
            hats.push(st.xhat_prev.clone());
        }
        let mut prev = x0.clone();
        let mut cur = hats[0].clone();
        for h in hats.iter().skip(1) {
            let next = &cur - op.mean(&cur) * (w + g) + op.mean(&prev) * g;
            assert!((&next - h).norm() < 1e-10);
            prev = cur;
            cur = next;
        }
    }

    #[test]
    fn speg_stays_at_interpolated_solution() {
        let op = make_quadratic_game(&QuadraticGameSpec { n: 8, d: 3, interpolated: true, seed: 4, ..Default::default() })
            .unwrap();
        let xs = op.meta().x_star.clone().unwrap();
        let sch = SamplingScheme::minibatch(8, 2).unwrap();
        let mut rng = Rng::new(1);
        let (_, x) = run_speg(
            &op,
            &xs,
            &StepPolicy::Constant { gamma: 0.1, omega: 0.1 },
            &sch,
            RunLimits::iters(50),
            SpegOptions::default(),
            &mut rng,
        )
        .unwrap();
        assert!((x - xs).norm() < 1e-10);
    }

    #[test]
    fn constant_policy_examples() {
        assert_eq!(policy_constant(1.0, 0.0, 1.0, 0.0, 0.1), 0.25);
        assert_eq!(policy_constant(1.0, 1.0, 1.0, 0.0, 0.1), 1.0 / 18.0);
        assert_eq!(policy_constant(1.0, 0.0, 1.0, 1.0, 0.01), 0.01 / 48.0);
    }

    #[test]
    fn switching_examples() {
        assert_eq!(switching_index(1.0, 0.25), 16);
        assert_eq!(policy_switching(16, 1.0, 0.0, 1.0), 0.25);
        assert!((policy_switching(20, 1.0, 0.0, 1.0) - 41.0 / 441.0 * 2.0).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for k in 17..500 {
            let w = policy_switching(k, 1.0, 0.0, 1.0);
            assert!(w <= prev);
            prev = w;
        }
    }

    #[test]
    fn horizon_examples() {
        for k in 0..10 {
            assert_eq!(policy_horizon(k, 8, 1.0, 0.0, 1.0), 0.25);
        }
        assert_eq!(policy_horizon(50, 100, 1.0, 0.0, 1.0), 0.25);
        assert!((policy_horizon(51, 100, 1.0, 0.0, 1.0) - 2.0 / 8.5).abs() < 1e-15);
    }

    #[test]
    fn weak_minty_examples() {
        let c = config_weak_minty(8.0, 1.0 / 32.0, 0.0, 0.0, 1.0, 100).unwrap();
        assert!(c.gamma > 0.0625 && c.gamma < 0.125);
        assert!(c.omega < (c.gamma - 1.0 / 16.0).min(1.0 / 32.0 - c.gamma / 4.0));
        assert_eq!(c.tau, 1);
        let (g, w) = (0.08f64, 0.01f64);
        let bound = (g - 2.0 / 32.0).min(1.0 / 32.0 - g / 4.0);
        assert!((bound - 0.01125).abs() < 1e-15);
        assert!(w < bound && g > 0.0625 && g < 0.125);
        assert!(matches!(config_weak_minty(8.0, 1.0 / 16.0, 0.0, 0.0, 1.0, 10), Err(Error::Infeasible(_))));
        let c0 = config_weak_minty(1.0, 0.0, 0.0, 0.0, 1.0, 10).unwrap();
        assert_eq!(c0.tau, 1);
    }

    #[test]
    fn policies_validate() {
        assert!(StepPolicy::Constant { gamma: 0.0, omega: 0.1 }.validate().is_err());
        assert!(StepPolicy::WeakMinty(WeakMintyConfig { gamma: 0.01, omega: 0.02, tau: 1 }).validate().is_err());
        assert!(StepPolicy::Custom(vec![]).validate().is_err());
        let p = StepPolicy::Custom(vec![(0.1, 0.2), (0.3, 0.4)]);
        assert_eq!(p.steps(5), (0.3, 0.4));
    }
}
