//! Step sizes for α-symmetric (L0, L1)-Lipschitz operators and the
//! Jacobian-norm fitting utility.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::spectral_norm_power;
use crate::operator::{
    base_metrics, diverged, FiniteSumOperator, Matrix, Oracle, Point, RunLimits, RunStatus, Trace, TraceRecord,
};

/// Defining equations of the step-size constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NuEquation {
    /// 1 − 2ν − ν²e^{2ν} = 0
    A,
    /// 1 − 4ν − 2ν²e^{2ν} = 0
    B,
    /// νe^ν = 1/√2
    C,
    /// νe^ν = 1
    D,
    /// 1 − ν − ν² = 0
    Golden,
}

impl NuEquation {
    pub const ALL: [NuEquation; 5] = [NuEquation::A, NuEquation::B, NuEquation::C, NuEquation::D, NuEquation::Golden];

    /// Residual, decreasing in ν on the bracket.
    pub fn residual(self, v: f64) -> f64 {
        match self {
            NuEquation::A => 1.0 - 2.0 * v - v * v * (2.0 * v).exp(),
            NuEquation::B => 1.0 - 4.0 * v - 2.0 * v * v * (2.0 * v).exp(),
            NuEquation::C => std::f64::consts::FRAC_1_SQRT_2 - v * v.exp(),
            NuEquation::D => 1.0 - v * v.exp(),
            NuEquation::Golden => 1.0 - v - v * v,
        }
    }

    /// Rounded value printed in the step-size table.
    pub fn table_value(self) -> f64 {
        match self {
            NuEquation::A => 0.363,
            NuEquation::B => 0.21,
            NuEquation::C => 0.45,
            NuEquation::D => 0.56,
            NuEquation::Golden => 0.61,
        }
    }
}

/// Bisection on [1e−6, 1] until |residual| < tol.
pub fn solve_nu(eq: NuEquation, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (1e-6, 1.0);
    let (flo, fhi) = (eq.residual(lo), eq.residual(hi));
    if flo.signum() == fhi.signum() {
        return Err(Error::NoBracket { lo, hi });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..400 {
        mid = 0.5 * (lo + hi);
        let f = eq.residual(mid);
        if f.abs() < tol || (hi - lo).abs() < f64::EPSILON {
            break;
        }
        if f.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Roots of all defining equations, solved once per process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NuTable {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub golden: f64,
}

impl NuTable {
    pub fn get(&self, eq: NuEquation) -> f64 {
        match eq {
            NuEquation::A => self.a,
            NuEquation::B => self.b,
            NuEquation::C => self.c,
            NuEquation::D => self.d,
            NuEquation::Golden => self.golden,
        }
    }
}

pub fn nu_table() -> &'static NuTable {
    static TABLE: OnceLock<NuTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let s = |eq| solve_nu(eq, 1e-14).expect("bracketed by construction");
        let t = NuTable {
            a: s(NuEquation::A),
            b: s(NuEquation::B),
            c: s(NuEquation::C),
            d: s(NuEquation::D),
            golden: s(NuEquation::Golden),
        };
        for eq in NuEquation::ALL {
            let v = t.get(eq);
            let tv = eq.table_value();
            if !(v >= tv && v < tv + 0.01) {
                log::warn!("root {v} of {eq:?} does not round down to table value {tv}");
            }
        }
        t
    })
}

/// (K0, K1, K2) for α ∈ (0, 1).
pub fn k_constants(l0: f64, l1: f64, alpha: f64) -> Result<(f64, f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("l0l1.alpha", "K constants need alpha in (0,1)"));
    }
    let e = alpha * alpha / (1.0 - alpha);
    let p = 2f64.powf(e);
    let k0 = l0 * (p + 1.0);
    let k1 = l1 * p;
    let k2 = l1.powf(1.0 / (1.0 - alpha)) * p * 3f64.powf(alpha) * (1.0 - alpha).powf(alpha / (1.0 - alpha));
    Ok((k0, k1, k2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    StronglyMonotone,
    Monotone,
    WeakMinty,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L0L1Config {
    pub alpha: f64,
    pub l0: f64,
    pub l1: f64,
    pub regime: Regime,
    /// γ = 1/(c0 + c1‖F‖^α) instead of the theoretical rule.
    pub user: Option<(f64, f64)>,
}

impl L0L1Config {
    pub fn theory(alpha: f64, l0: f64, l1: f64, regime: Regime) -> Self {
        L0L1Config { alpha, l0, l1, regime, user: None }
    }

    pub fn user(alpha: f64, c0: f64, c1: f64, regime: Regime) -> Self {
        L0L1Config { alpha, l0: 0.0, l1: 0.0, regime, user: Some((c0, c1)) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("l0l1.alpha", "alpha must lie in (0,1]"));
        }
        match self.user {
            Some((c0, c1)) if c0 > 0.0 && c1 >= 0.0 => Ok(()),
            Some(_) => Err(Error::config("l0l1.c0", "need c0 > 0 and c1 >= 0")),
            None if self.l0 > 0.0 && self.l1 >= 0.0 => {
                if self.regime == Regime::WeakMinty && self.alpha < 1.0 {
                    Err(Error::config("l0l1.regime", "weak Minty rule is defined for alpha = 1 only"))
                } else {
                    Ok(())
                }
            }
            None => Err(Error::config("l0l1.l0", "need L0 > 0 and L1 >= 0")),
        }
    }
}

/// (γ, ω) at the current operator norm.
pub fn gamma_adaptive(cfg: &L0L1Config, f_norm: f64) -> Result<(f64, f64)> {
    cfg.validate()?;
    let fa = f_norm.powf(cfg.alpha);
    let nu = nu_table();
    let gamma = if let Some((c0, c1)) = cfg.user {
        1.0 / (c0 + c1 * fa)
    } else if cfg.alpha == 1.0 {
        let v = match cfg.regime {
            Regime::StronglyMonotone => nu.a,
            Regime::Monotone => nu.c,
            Regime::WeakMinty => nu.d,
        };
        v / (cfg.l0 + cfg.l1 * f_norm)
    } else {
        let (k0, k1, k2) = k_constants(cfg.l0, cfg.l1, cfg.alpha)?;
        let a = cfg.alpha;
        let k2p = k2.powf(1.0 - a);
        match cfg.regime {
            Regime::StronglyMonotone => nu.golden / (2.0 * k0 + (2.0 * k1 + 2f64.powf(1.0 - a) * k2p) * fa),
            Regime::Monotone => {
                let s = 2.0 * 2f64.sqrt();
                1.0 / (s * k0 + (s * k1 + 2f64.powf(1.5 * (1.0 - a)) * k2p) * fa)
            }
            Regime::WeakMinty => unreachable!("rejected by validate"),
        }
    };
    let omega = if cfg.regime == Regime::WeakMinty { gamma / 2.0 } else { gamma };
    Ok((gamma, omega))
}

/// One EG step with steps chosen at ‖F(x)‖. Returns (x', γ, ω).
pub fn eg_l0l1_step(oracle: &mut Oracle, x: &Point, cfg: &L0L1Config) -> Result<(Point, f64, f64)> {
    let fx = oracle.full(x)?;
    let (gamma, omega) = gamma_adaptive(cfg, fx.norm())?;
    let xh = x - &fx * gamma;
    let fh = oracle.full(&xh)?;
    Ok((x - fh * omega, gamma, omega))
}

/// 1 − νμ/(L0(1 + L1 e^{L1 R} R)) for the strongly monotone α = 1 rule.
pub fn strong_contraction_factor(mu: f64, l0: f64, l1: f64, r: f64) -> f64 {
    1.0 - nu_table().a * mu / (l0 * (1.0 + l1 * (l1 * r).exp() * r))
}

/// Δ1 = ν/(L0(1 + L1 R e^{L1 R})) − 4ρ; positive means the local theory applies.
pub fn weak_minty_margin(l0: f64, l1: f64, r: f64, rho: f64) -> f64 {
    nu_table().d / (l0 * (1.0 + l1 * r * (l1 * r).exp())) - 4.0 * rho
}

/// Runs EG with adaptive steps, recording γ and ω.
pub fn run_eg_l0l1(
    op: &dyn FiniteSumOperator,
    x0: &Point,
    cfg: &L0L1Config,
    limits: RunLimits,
    seed: u64,
) -> Result<(Trace, Point)> {
    cfg.validate()?;
    if cfg.regime == Regime::WeakMinty && cfg.user.is_none() {
        if let (Some(xs), Some(rho)) = (&op.meta().x_star, op.meta().rho) {
            let m = weak_minty_margin(cfg.l0, cfg.l1, (x0 - xs).norm(), rho);
            if m <= 0.0 {
                log::warn!("weak Minty margin {m} is not positive; local guarantee does not apply");
            }
        }
    }
    let mut oracle = Oracle::new(op);
    let mut trace = Trace::new();
    let mut x = x0.clone();
    let push = |trace: &mut Trace, x: &Point, k: u64, calls: u64, g: Option<(f64, f64)>| {
        let mut m = base_metrics(op, x, x0);
        if let Some((gamma, omega)) = g {
            m.insert("gamma".into(), gamma);
            m.insert("omega".into(), omega);
        }
        trace.push(TraceRecord { iteration: k, oracle_calls: calls, comm_rounds: 0, metrics: m, seed });
    };
    push(&mut trace, &x, 0, 0, None);
    let mut k = 0;
    while !limits.exhausted(k, oracle.calls()) {
        let (next, g, w) = eg_l0l1_step(&mut oracle, &x, cfg)?;
        x = next;
        k += 1;
        if diverged(&x) {
            trace.status = RunStatus::Diverged;
            break;
        }
        if limits.due(k) || limits.exhausted(k, oracle.calls()) {
            push(&mut trace, &x, k, oracle.calls(), Some((g, w)));
        }
    }
    Ok((trace, x))
}

/// Central-difference Jacobian of the mean operator.
pub fn fd_jacobian(op: &dyn FiniteSumOperator, x: &Point, h: f64) -> Matrix {
    let d = op.dim();
    let mut j = Matrix::zeros(d, d);
    for k in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        j.set_column(k, &((op.mean(&xp) - op.mean(&xm)) / (2.0 * h)));
    }
    j
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L0L1Fit {
    pub l0: f64,
    pub l1: f64,
    /// max_j (‖J(x_j)‖ − L0 − L1‖F(x_j)‖^α), clipped below at 0.
    pub max_violation: f64,
    /// Intercept of the least-squares line before lifting it over the samples.
    pub ls_l0: f64,
    pub degenerate: bool,
}

/// Fits ‖J(x)‖ ≤ L0 + L1‖F(x)‖^α over `points`.
///
/// The slope is the least-squares slope clipped at zero; the intercept is
/// lifted from the least-squares value until every sample satisfies the bound.
pub fn fit_l0l1(op: &dyn FiniteSumOperator, points: &[Point], alpha: f64) -> Result<L0L1Fit> {
    if points.len() < 10 {
        return Err(Error::config("fit.points", "need at least 10 sample points"));
    }
    let mut ts = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for x in points {
        let j = op.jacobian(x).unwrap_or_else(|| fd_jacobian(op, x, 1e-6));
        ys.push(spectral_norm_power(&j, 1e-10, 100_000));
        ts.push(op.mean(x).norm().powf(alpha));
    }
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let stt: f64 = ts.iter().map(|t| (t - tm) * (t - tm)).sum();
    let sty: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let degenerate = stt <= 1e-24 * n * (1.0 + tm * tm);
    if degenerate {
        log::warn!("degenerate fit: operator norms are all equal");
    }
    let l1 = if degenerate { 0.0 } else { (sty / stt).max(0.0) };
    let ls_l0 = (ym - l1 * tm).max(0.0);
    let lift = ts.iter().zip(&ys).map(|(t, y)| y - ls_l0 - l1 * t).fold(0.0, f64::max);
    let l0 = ls_l0 + lift;
    let max_violation = ts.iter().zip(&ys).map(|(t, y)| y - l0 - l1 * t).fold(0.0, f64::max);
    Ok(L0L1Fit { l0, l1, max_violation, ls_l0, degenerate })
}

/// Regular grid over [−r, r]^2 with `side × side` points.
pub fn square_grid(side: usize, r: f64) -> Vec<Point> {
    let step = 2.0 * r / (side - 1) as f64;
    let mut out = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            out.push(Point::from_vec(vec![-r + step * i as f64, -r + step * j as f64]));
        }
    }
    out
}
