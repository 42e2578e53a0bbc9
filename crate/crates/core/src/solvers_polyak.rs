//! Extragradient with the Polyak update step, critical-condition line search,
//! and the stochastic and decreasing-step variants.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::operator::{
    base_metrics, diverged, FiniteSumOperator, Oracle, Point, RunLimits, RunStatus, SamplingVector, Trace,
    TraceRecord,
};
use crate::rng::Rng;
use crate::sampling::SamplingScheme;

/// Below this norm the operator value is treated as zero.
pub const CONVERGENCE_TOL: f64 = 1e-14;

/// Cumulative loop cap used when no Lipschitz constant is known.
pub const DEFAULT_LOOP_CAP: u64 = 10_000;

/// ω = ⟨F(x̂), x − x̂⟩ / ‖F(x̂)‖². `None` when F(x̂) vanishes.
pub fn polyak_update_step(f_hat: &Point, x: &Point, x_hat: &Point) -> Option<f64> {
    let nn = f_hat.norm_squared();
    if nn.sqrt() <= CONVERGENCE_TOL {
        return None;
    }
    Some(f_hat.dot(&(x - x_hat)) / nn)
}

/// ‖F(x̂) − F(x)‖ ≤ A‖F(x)‖.
pub fn critical_condition(f_x: &Point, f_hat: &Point, a: f64) -> bool {
    (f_hat - f_x).norm() <= a * f_x.norm()
}

/// ⌊log(Lγ₋₁/A)/log(1/β)⌋ + 1, floored at zero.
pub fn while_loop_budget(l: f64, gamma_start: f64, a: f64, beta: f64) -> u64 {
    let v = ((l * gamma_start / a).ln() / (1.0 / beta).ln()).floor() + 1.0;
    if v > 0.0 {
        v as u64
    } else {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaMode {
    Constant(f64),
    LineSearch { beta: f64, a: f64, grow: bool },
}

impl GammaMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GammaMode::Constant(g) if g > 0.0 && g.is_finite() => Ok(()),
            GammaMode::LineSearch { beta, a, .. } if beta > 0.0 && beta < 1.0 && a > 0.0 && a <= 1.0 => Ok(()),
            _ => Err(Error::config("policy.gamma", "need gamma > 0, beta in (0,1), A in (0,1]")),
        }
    }
}

/// Result of one line search.
#[derive(Clone, Debug)]
pub struct LineSearchOutcome {
    pub gamma: f64,
    pub x_hat: Point,
    pub f_hat: Point,
    pub loops: u64,
}

/// Shrinks γ by β until the critical condition holds. `eval` is the (possibly
/// minibatch) operator; `loops_left` bounds the number of shrinks.
pub fn line_search_gamma(
    eval: &mut dyn FnMut(&Point) -> Result<Point>,
    x: &Point,
    f_x: &Point,
    gamma_start: f64,
    beta: f64,
    a: f64,
    loops_left: u64,
) -> Result<LineSearchOutcome> {
    line_search_scaled(eval, x, f_x, gamma_start, 1.0, beta, a, loops_left).map(|(out, _)| out)
}

/// Line search on the scaled step s = γ·c; the trial step is s/c. Returns the
/// outcome and the final s.
#[allow(clippy::too_many_arguments)]
fn line_search_scaled(
    eval: &mut dyn FnMut(&Point) -> Result<Point>,
    x: &Point,
    f_x: &Point,
    s_start: f64,
    inv_c: f64,
    beta: f64,
    a: f64,
    loops_left: u64,
) -> Result<(LineSearchOutcome, f64)> {
    let mut s = s_start;
    let mut gamma = s * inv_c;
    let mut x_hat = x - f_x * gamma;
    let mut f_hat = eval(&x_hat)?;
    let mut loops = 0;
    while !critical_condition(f_x, &f_hat, a) {
        if loops >= loops_left {
            return Err(Error::LineSearchFailure { cap: loops_left });
        }
        s *= beta;
        gamma = s * inv_c;
        x_hat = x - f_x * gamma;
        f_hat = eval(&x_hat)?;
        loops += 1;
    }
    Ok((LineSearchOutcome { gamma, x_hat, f_hat, loops }, s))
}

/// Enlarges γ by 1/β while the critical condition keeps holding (at most 60 times).
fn grow_gamma(
    eval: &mut dyn FnMut(&Point) -> Result<Point>,
    x: &Point,
    f_x: &Point,
    gamma: f64,
    beta: f64,
    a: f64,
) -> Result<f64> {
    let mut g = gamma;
    for _ in 0..60 {
        let cand = g / beta;
        let f_hat = eval(&(x - f_x * cand))?;
        if !critical_condition(f_x, &f_hat, a) {
            break;
        }
        g = cand;
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyakState {
    pub x: Point,
    pub gamma_prev: f64,
    /// γ_{k−1}·c_{k−1}; drives the decreasing schedule.
    pub gamma_scaled: f64,
    /// +∞ before the first step.
    pub omega_prev: f64,
    pub k: u64,
    /// Cumulative while-loop shrinks.
    pub loops: u64,
    pub loop_cap: u64,
    pub converged: bool,
}

impl PolyakState {
    pub fn new(x0: Point, gamma_start: f64) -> Self {
        PolyakState {
            x: x0,
            gamma_prev: gamma_start,
            gamma_scaled: gamma_start,
            omega_prev: f64::INFINITY,
            k: 0,
            loops: 0,
            loop_cap: DEFAULT_LOOP_CAP,
            converged: false,
        }
    }

    pub fn with_loop_cap(mut self, cap: u64) -> Self {
        self.loop_cap = cap;
        self
    }
}

/// c_{k−1}/c_k with c_k = √(k+1), c_{−1} = 1.
pub fn dec_ratio(k: u64) -> f64 {
    let prev = if k == 0 { 1.0 } else { (k as f64).sqrt() };
    prev / (k as f64 + 1.0).sqrt()
}

fn generic_step(
    st: &mut PolyakState,
    eval: &mut dyn FnMut(&Point) -> Result<Point>,
    mode: GammaMode,
    decreasing: bool,
) -> Result<()> {
    if st.converged {
        return Ok(());
    }
    let f_x = eval(&st.x)?;
    if f_x.norm() <= CONVERGENCE_TOL {
        st.converged = true;
        return Ok(());
    }
    // The decreasing schedule keeps s = γ·√(k+1) and divides on use, so
    // γ_k√(k+1) is non-increasing without rounding drift.
    let inv_c = if decreasing { 1.0 / (st.k as f64 + 1.0).sqrt() } else { 1.0 };
    let (gamma, scaled, x_hat, f_hat) = match mode {
        GammaMode::Constant(g) => {
            let gamma = if decreasing { st.gamma_scaled * inv_c } else { g };
            let x_hat = &st.x - &f_x * gamma;
            let f_hat = eval(&x_hat)?;
            (gamma, st.gamma_scaled, x_hat, f_hat)
        }
        GammaMode::LineSearch { beta, a, grow } => {
            let start = if decreasing {
                st.gamma_scaled
            } else if grow {
                grow_gamma(eval, &st.x, &f_x, st.gamma_prev, beta, a)?
            } else {
                st.gamma_prev
            };
            let left = st.loop_cap.saturating_sub(st.loops);
            let (out, s) = line_search_scaled(eval, &st.x, &f_x, start, inv_c, beta, a, left)?;
            st.loops += out.loops;
            (out.gamma, s, out.x_hat, out.f_hat)
        }
    };
    let Some(mut omega) = polyak_update_step(&f_hat, &st.x, &x_hat) else {
        st.converged = true;
        st.gamma_prev = gamma;
        st.gamma_scaled = scaled;
        return Ok(());
    };
    if decreasing {
        omega = omega.min(st.omega_prev);
    }
    st.x = &st.x - f_hat * omega;
    st.gamma_prev = gamma;
    st.gamma_scaled = scaled;
    st.omega_prev = omega;
    st.k += 1;
    Ok(())
}

/// PolyakEG / PolyakEG-LS step on the full operator.
pub fn polyak_eg_step(oracle: &mut Oracle, st: &mut PolyakState, mode: GammaMode) -> Result<()> {
    generic_step(st, &mut |x: &Point| oracle.full(x), mode, false)
}

fn sampled_step(
    oracle: &mut Oracle,
    st: &mut PolyakState,
    scheme: &SamplingScheme,
    mode: GammaMode,
    rng: &mut Rng,
    decreasing: bool,
) -> Result<()> {
    let v: SamplingVector = scheme.draw(rng);
    if scheme.is_full() {
        return generic_step(st, &mut |x: &Point| oracle.full(x), mode, decreasing);
    }
    generic_step(st, &mut |x: &Point| oracle.sampled(&v, x), mode, decreasing)
}

/// PolyakSEG / PolyakSEG-LS step: one minibatch S_k serves every evaluation.
pub fn polyak_seg_step(
    oracle: &mut Oracle,
    st: &mut PolyakState,
    scheme: &SamplingScheme,
    mode: GammaMode,
    rng: &mut Rng,
) -> Result<()> {
    sampled_step(oracle, st, scheme, mode, rng, false)
}

/// DecPolyakSEG / DecPolyakSEG-LS step.
pub fn dec_polyak_seg_step(
    oracle: &mut Oracle,
    st: &mut PolyakState,
    scheme: &SamplingScheme,
    mode: GammaMode,
    rng: &mut Rng,
) -> Result<()> {
    sampled_step(oracle, st, scheme, mode, rng, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolyakVariant {
    Deterministic,
    Stochastic,
    Decreasing,
}

/// Runs a Polyak-family method, recording γ, ω and the cumulative loop count.
#[allow(clippy::too_many_arguments)]
pub fn run_polyak(
    op: &dyn FiniteSumOperator,
    x0: &Point,
    variant: PolyakVariant,
    scheme: &SamplingScheme,
    mode: GammaMode,
    gamma_start: f64,
    limits: RunLimits,
    rng: &mut Rng,
) -> Result<(Trace, PolyakState)> {
    mode.validate()?;
    let seed = rng.seed();
    let mut st = PolyakState::new(x0.clone(), gamma_start);
    if let (GammaMode::LineSearch { beta, a, .. }, Some(l)) = (mode, op.meta().lipschitz) {
        st.loop_cap = 10 * while_loop_budget(l, gamma_start, a, beta).max(1);
        if variant != PolyakVariant::Deterministic {
            st.loop_cap = DEFAULT_LOOP_CAP.max(st.loop_cap);
        }
    }
    let mut oracle = Oracle::new(op);
    let mut trace = Trace::new();
    let snap = |st: &PolyakState| {
        let mut m: BTreeMap<String, f64> = base_metrics(op, &st.x, x0);
        m.insert("gamma".into(), st.gamma_prev);
        if variant == PolyakVariant::Decreasing {
            m.insert("gamma_scaled".into(), st.gamma_scaled);
        }
        if st.omega_prev.is_finite() {
            m.insert("omega".into(), st.omega_prev);
        }
        m.insert("while_loops".into(), st.loops as f64);
        m
    };
    let push = |trace: &mut Trace, st: &PolyakState, calls: u64| {
        trace.push(TraceRecord { iteration: st.k, oracle_calls: calls, comm_rounds: 0, metrics: snap(st), seed });
    };
    push(&mut trace, &st, 0);
    while !limits.exhausted(st.k, oracle.calls()) {
        let step = match variant {
            PolyakVariant::Deterministic => polyak_eg_step(&mut oracle, &mut st, mode),
            PolyakVariant::Stochastic => polyak_seg_step(&mut oracle, &mut st, scheme, mode, rng),
            PolyakVariant::Decreasing => dec_polyak_seg_step(&mut oracle, &mut st, scheme, mode, rng),
        };
        if let Err(e) = step {
            trace.status = RunStatus::Failed(e.to_string());
            break;
        }
        if st.converged {
            trace.status = RunStatus::Converged;
            push(&mut trace, &st, oracle.calls());
            break;
        }
        if diverged(&st.x) {
            trace.status = RunStatus::Diverged;
            break;
        }
        if limits.due(st.k) || limits.exhausted(st.k, oracle.calls()) {
            push(&mut trace, &st, oracle.calls());
        }
    }
    Ok((trace, st))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{Matrix, OperatorMeta};
    use crate::problems::{make_quadratic_game, AffineOperator, QuadraticGameSpec};

    fn p(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    fn bilinear() -> AffineOperator {
        AffineOperator::new(
            vec![Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])],
            vec![Point::zeros(2)],
            OperatorMeta { x_star: Some(Point::zeros(2)), ..Default::default() },
        )
    }

    #[test]
    fn polyak_step_examples() {
        let f = p(&[1.0, 2.0]);
        let x = p(&[0.0, 0.0]);
        let xh = &x - &f * 0.3;
        assert!((polyak_update_step(&f, &x, &xh).unwrap() - 0.3).abs() < 1e-15);
        let op = bilinear();
        let x = p(&[1.0, 0.0]);
        let xh = &x - op.mean(&x);
        assert_eq!(xh, p(&[1.0, 1.0]));
        let fh = op.mean(&xh);
        assert_eq!(fh, p(&[1.0, -1.0]));
        assert!((polyak_update_step(&fh, &x, &xh).unwrap() - 0.5).abs() < 1e-15);
        assert!(polyak_update_step(&Point::zeros(2), &x, &xh).is_none());
    }

    #[test]
    fn critical_condition_examples() {
        let f = p(&[1.0, 1.0]);
        assert!(critical_condition(&f, &f, 0.01));
        assert!(!critical_condition(&Point::zeros(2), &f, 1.0));
    }

    #[test]
    fn budget_examples() {
        assert_eq!(while_loop_budget(1.0, 1.0, 1.0, 0.5), 1);
        assert_eq!(while_loop_budget(10.0, 1.0, 1.0, 0.5), 4);
        let mut prev = 0;
        for g in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let b = while_loop_budget(3.0, g, 0.5, 0.7);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn no_loops_when_gamma_small() {
        let op = make_quadratic_game(&QuadraticGameSpec { n: 4, d: 3, seed: 2, ..Default::default() }).unwrap();
        let l = op.meta().lipschitz.unwrap();
        let a = 0.5;
        let mut rng = Rng::new(0);
        let x0 = Point::from_element(6, 1.0);
        let (_, st) = run_polyak(
            &op,
            &x0,
            PolyakVariant::Deterministic,
            &SamplingScheme::full(4),
            GammaMode::LineSearch { beta: 0.5, a, grow: false },
            a / l,
            RunLimits::iters(100),
            &mut rng,
        )
        .unwrap();
        assert_eq!(st.loops, 0);
    }

    #[test]
    fn omega_bounds_under_critical_condition() {
        let op = make_quadratic_game(&QuadraticGameSpec { n: 4, d: 3, seed: 5, ..Default::default() }).unwrap();
        let l = op.meta().lipschitz.unwrap();
        let a = 0.6;
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let x = crate::linalg::gaussian_vec(6, &mut rng);
            let fx = op.mean(&x);
            let gamma = a / l * 0.9;
            let xh = &x - &fx * gamma;
            let fh = op.mean(&xh);
            assert!(critical_condition(&fx, &fh, a));
            let w = polyak_update_step(&fh, &x, &xh).unwrap();
            assert!(w >= gamma / (1.0 + a) - 1e-12 && w <= gamma / (1.0 - a) + 1e-12);
            let lhs = fh.dot(&fx);
            let rhs = 0.5 * (fh.norm_squared() + (1.0 - a * a) * fx.norm_squared());
            assert!(lhs >= rhs - 1e-12);
        }
    }

    #[test]
    fn converged_at_solution() {
        let op = bilinear();
        let mut o = Oracle::new(&op);
        let mut st = PolyakState::new(Point::zeros(2), 1.0);
        polyak_eg_step(&mut o, &mut st, GammaMode::Constant(0.5)).unwrap();
        assert!(st.converged);
        assert_eq!(st.x, Point::zeros(2));
    }

    #[test]
    fn full_batch_seg_equals_eg() {
        let op = make_quadratic_game(&QuadraticGameSpec { n: 5, d: 2, seed: 8, ..Default::default() }).unwrap();
        let mode = GammaMode::LineSearch { beta: 0.5, a: 0.5, grow: false };
        let x0 = Point::from_element(4, 2.0);
        let mut a = PolyakState::new(x0.clone(), 3.0);
        let mut b = PolyakState::new(x0, 3.0);
        let mut oa = Oracle::new(&op);
        let mut ob = Oracle::new(&op);
        let mut rng = Rng::new(1);
        for _ in 0..30 {
            polyak_eg_step(&mut oa, &mut a, mode).unwrap();
            polyak_seg_step(&mut ob, &mut b, &SamplingScheme::full(5), mode, &mut rng).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn decreasing_caps() {
        let op = make_quadratic_game(&QuadraticGameSpec { n: 10, d: 3, seed: 9, ..Default::default() }).unwrap();
        let sch = SamplingScheme::minibatch(10, 2).unwrap();
        let mut st = PolyakState::new(Point::from_element(6, 1.0), 1.0);
        let mut o = Oracle::new(&op);
        let mut rng = Rng::new(2);
        let g0 = 1.0;
        let mut prev_w = f64::INFINITY;
        for k in 0..200u64 {
            dec_polyak_seg_step(&mut o, &mut st, &sch, GammaMode::LineSearch { beta: 0.7, a: 0.5, grow: false }, &mut rng)
                .unwrap();
            assert!(st.gamma_prev <= g0 / ((k + 1) as f64).sqrt() * (1.0 + 1e-12));
            assert!(st.omega_prev <= prev_w);
            prev_w = st.omega_prev;
        }
    }

    #[test]
    fn line_search_cap_errors() {
        let mut eval = |x: &Point| Ok(x.map(|v| v.powi(3) * 1e6));
        let x = p(&[1.0]);
        let fx = eval(&x).unwrap();
        let r = line_search_gamma(&mut eval, &x, &fx, 1.0, 0.9, 0.1, 3);
        assert!(matches!(r, Err(Error::LineSearchFailure { cap: 3 })));
    }

    #[test]
    fn dec_ratio_values() {
        assert_eq!(dec_ratio(0), 1.0);
        assert!((dec_ratio(3) - (3f64 / 4.0).sqrt()).abs() < 1e-15);
    }
}
