//! Instance construction, experiment execution and CSV emission.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::config::{ConfigFile, ExperimentConfig};
use crate::error::{Error, Result};
use crate::fl::{
    local_values_at, lyapunov_v, network_constants, theoretical_params, Estimator, Network, NetworkConfig,
    ParamMode,
};
use crate::operator::{FiniteSumOperator, Point, RunLimits, RunStatus, Trace, TraceRecord};
use crate::par::{map_ordered, Execution};
use crate::problems::{self, constrain, AffineOperator, QuadraticGameSpec};
use crate::rng::Rng;
use crate::sampling::{er_constants, importance_probabilities, ErConstants, SamplingScheme};
use crate::solvers_eg::{
    config_weak_minty, omega_bar, run_eg, run_gda, run_speg, SpegOptions, StepPolicy, WeakMintyConfig,
};
use crate::solvers_l0l1::{run_eg_l0l1, L0L1Config, Regime};
use crate::solvers_polyak::{run_polyak, GammaMode, PolyakVariant};

pub const CSV_HEADER: &str = "experiment,seed,iteration,oracle_calls,comm_rounds,metric,value";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub experiment: String,
    pub seed: u64,
    pub iteration: u64,
    pub oracle_calls: u64,
    pub comm_rounds: u64,
    pub metric: String,
    pub value: f64,
}

/// Orders rows by (experiment, seed, iteration, metric).
pub fn sort_rows(rows: &mut [MetricRow]) {
    rows.sort_by(|a, b| {
        (&a.experiment, a.seed, a.iteration, &a.metric).cmp(&(&b.experiment, b.seed, b.iteration, &b.metric))
    });
}

pub fn write_csv<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// A single operator or a client network.
pub enum Instance {
    Single(Box<dyn FiniteSumOperator>),
    Network(Vec<AffineOperator>),
}

fn pair(v: Option<[f64; 2]>, default: (f64, f64)) -> (f64, f64) {
    v.map_or(default, |[a, b]| (a, b))
}

fn rls_problem(cfg: &ExperimentConfig, seed: u64) -> Result<problems::RlsProblem> {
    let data = match &cfg.data {
        Some(path) => problems::read_rls_csv(Path::new(path))?,
        None => problems::synthetic_rls_data(cfg.rows.unwrap_or(200), cfg.cols.unwrap_or(8), seed),
    };
    problems::make_robust_least_squares(&data, cfg.lambda.unwrap_or(50.0), cfg.clients.unwrap_or(20))
}

/// Builds the instance of `cfg` from an instance seed.
pub fn build_instance(cfg: &ExperimentConfig, seed: u64) -> Result<Instance> {
    let single = |op: Box<dyn FiniteSumOperator>| Ok(Instance::Single(op));
    match cfg.problem.as_str() {
        "quadratic_game" => {
            let def = QuadraticGameSpec::default();
            let spec = QuadraticGameSpec {
                n: cfg.n.unwrap_or(def.n),
                d: cfg.d.unwrap_or(def.d),
                eig_a: pair(cfg.eig_a, def.eig_a),
                eig_b: pair(cfg.eig_b, def.eig_b),
                eig_c: pair(cfg.eig_c, def.eig_c),
                interpolated: cfg.interpolated.unwrap_or(false),
                seed,
            };
            spec.validate()?;
            single(Box::new(problems::make_quadratic_game(&spec)?))
        }
        "weak_minty_scalar" => single(Box::new(problems::make_weak_minty_scalar(cfg.n.unwrap_or(100), seed)?)),
        "global_forsaken" => single(Box::new(problems::make_global_forsaken())),
        "cubic_minmax" => single(Box::new(problems::make_cubic_minmax(cfg.d.unwrap_or(2), seed)?)),
        "sign_power" => single(Box::new(problems::make_sign_power_operator(
            cfg.exponent.unwrap_or(problems::SIGN_POWER_Q),
        )?)),
        "sinh_gradient" => single(Box::new(problems::make_sinh_gradient(cfg.d.unwrap_or(10), seed)?)),
        "linear_game" => single(Box::new(problems::make_linear_game())),
        "policeman_burglar" => {
            single(Box::new(problems::make_policeman_burglar(cfg.n.unwrap_or(10), cfg.d.unwrap_or(10), seed)?))
        }
        "robust_least_squares" => {
            let p = rls_problem(cfg, seed)?;
            if cfg.is_network() {
                Ok(Instance::Network(p.nodes))
            } else {
                single(Box::new(p.global))
            }
        }
        "federated_quadratic_game" => Ok(Instance::Network(problems::make_federated_quadratic_game(
            cfg.clients.unwrap_or(20),
            cfg.n.unwrap_or(100),
            cfg.d.unwrap_or(20),
            pair(cfg.eig_a, (0.01, 1.0)),
            pair(cfg.eig_b, (0.0, 1.0)),
            seed,
        )?)),
        other => Err(Error::config("problem", format!("unknown problem `{other}`"))),
    }
}

pub fn build_scheme(cfg: &ExperimentConfig, op: &dyn FiniteSumOperator) -> Result<SamplingScheme> {
    let n = op.n();
    match cfg.scheme.as_deref().unwrap_or("full") {
        "full" => Ok(SamplingScheme::full(n)),
        "minibatch" => SamplingScheme::minibatch(n, cfg.tau.unwrap_or(1)),
        "single_uniform" => SamplingScheme::uniform_single(n),
        "single_importance" => {
            let l = op
                .meta()
                .component_lipschitz
                .clone()
                .ok_or_else(|| Error::config("scheme", "importance sampling needs component Lipschitz constants"))?;
            SamplingScheme::single_element(importance_probabilities(&l)?)
        }
        other => Err(Error::config("scheme", format!("unknown scheme `{other}`"))),
    }
}

fn initial_point(cfg: &ExperimentConfig, dim: usize) -> Result<Point> {
    match &cfg.x0 {
        Some(v) if v.len() != dim => Err(Error::config("x0", format!("expected {dim} entries, got {}", v.len()))),
        Some(v) => Ok(Point::from_column_slice(v)),
        None => Ok(Point::from_element(dim, cfg.x0_fill.unwrap_or(1.0))),
    }
}

fn limits(cfg: &ExperimentConfig) -> RunLimits {
    RunLimits {
        max_iters: cfg.max_iters.unwrap_or(u64::MAX),
        max_oracle_calls: cfg.max_oracle_calls,
        record_every: cfg.record_every.unwrap_or(1),
    }
}

fn need(v: Option<f64>, field: &str, why: &str) -> Result<f64> {
    v.ok_or_else(|| Error::config(field, format!("required {why}")))
}

/// δ and σ*² of the configured problem and scheme on the first seed.
pub fn er_constants_for(name: &str, cfg: &ExperimentConfig) -> Result<ErConstants> {
    let seed = instance_seed(name, cfg, cfg.seeds.first().copied().unwrap_or(0));
    match build_instance(cfg, seed)? {
        Instance::Single(op) => er_constants(op.as_ref(), &build_scheme(cfg, op.as_ref())?),
        Instance::Network(_) => Err(Error::config(format!("{name}.problem"), "ER constants need a single operator")),
    }
}

fn instance_seed(name: &str, cfg: &ExperimentConfig, seed: u64) -> u64 {
    cfg.problem_seed.unwrap_or_else(|| Rng::new(seed).child(name).child("problem").seed())
}

fn speg_policy(cfg: &ExperimentConfig, op: &dyn FiniteSumOperator, scheme: &SamplingScheme, x0: &Point) -> Result<StepPolicy> {
    let meta = op.meta();
    let policy = cfg.policy.as_deref().unwrap_or("constant");
    if policy == "constant" {
        if let Some(g) = cfg.gamma.or(cfg.omega) {
            return Ok(StepPolicy::Constant { gamma: g, omega: cfg.omega.unwrap_or(g) });
        }
    }
    if policy == "weak_minty" {
        if let (Some(gamma), Some(omega)) = (cfg.gamma, cfg.omega) {
            return Ok(StepPolicy::WeakMinty(WeakMintyConfig { gamma, omega, tau: cfg.tau.unwrap_or(1) as u64 }));
        }
    }
    let er = er_constants(op, scheme)?;
    let l = need(meta.lipschitz, "problem", "Lipschitz constant for theoretical steps")?;
    let horizon = cfg.horizon.or(cfg.max_iters).unwrap_or(1);
    if policy == "weak_minty" {
        let rho = need(meta.rho, "problem", "weak Minty constant")?;
        let xs = meta.x_star.as_ref().ok_or_else(|| Error::config("problem", "x* required"))?;
        let c = config_weak_minty(l, rho, er.delta, er.sigma_star_sq.unwrap_or(0.0), (x0 - xs).norm_squared(), horizon)?;
        return Ok(StepPolicy::WeakMinty(c));
    }
    let mu = need(cfg.mu.or(meta.mu), "mu", "for theoretical steps")?;
    let wb = cfg.omega.unwrap_or_else(|| omega_bar(mu, er.delta, l));
    Ok(match policy {
        "switching" => StepPolicy::Switching { omega_bar: wb, mu },
        "horizon" => StepPolicy::Horizon { omega_bar: wb, mu, horizon },
        "constant" | "theory" => StepPolicy::Constant { gamma: wb, omega: wb },
        other => return Err(Error::config("policy", format!("`{other}` does not apply to speg"))),
    })
}

fn l0l1_config(cfg: &ExperimentConfig, op: &dyn FiniteSumOperator) -> Result<L0L1Config> {
    let regime = match cfg.regime.as_deref().unwrap_or("strongly_monotone") {
        "strongly_monotone" => Regime::StronglyMonotone,
        "monotone" => Regime::Monotone,
        _ => Regime::WeakMinty,
    };
    let meta = op.meta().l0l1;
    let alpha = cfg.alpha.or(meta.map(|m| m.alpha)).unwrap_or(1.0);
    let c = match cfg.policy.as_deref().unwrap_or("theory") {
        "user" => L0L1Config::user(alpha, need(cfg.c0, "c0", "for user steps")?, need(cfg.c1, "c1", "for user steps")?, regime),
        _ => L0L1Config::theory(
            alpha,
            need(cfg.l0.or(meta.map(|m| m.l0)), "l0", "for theoretical steps")?,
            need(cfg.l1.or(meta.map(|m| m.l1)), "l1", "for theoretical steps")?,
            regime,
        ),
    };
    c.validate()?;
    Ok(c)
}

fn run_single(cfg: &ExperimentConfig, op: &dyn FiniteSumOperator, rng: &mut Rng) -> Result<Trace> {
    let x0 = constrain(op, initial_point(cfg, op.dim())?);
    let scheme = build_scheme(cfg, op)?;
    let lim = limits(cfg);
    let trace = match cfg.algorithm.as_str() {
        "gda" => run_gda(op, &x0, need(cfg.omega.or(cfg.gamma), "omega", "for gda")?, &scheme, lim, rng)?.0,
        "eg" => {
            let g = need(cfg.gamma, "gamma", "for eg")?;
            run_eg(op, &x0, g, cfg.omega.unwrap_or(g), &scheme, cfg.same_sample.unwrap_or(true), lim, rng)?.0
        }
        "speg" => {
            let policy = speg_policy(cfg, op, &scheme, &x0)?;
            let opts = SpegOptions { track_hat: true, track_lyapunov: op.meta().x_star.is_some() };
            run_speg(op, &x0, &policy, &scheme, lim, opts, rng)?.0
        }
        "polyak_eg" | "polyak_seg" | "dec_polyak_seg" => {
            let variant = match cfg.algorithm.as_str() {
                "polyak_eg" => PolyakVariant::Deterministic,
                "polyak_seg" => PolyakVariant::Stochastic,
                _ => PolyakVariant::Decreasing,
            };
            let mode = match cfg.policy.as_deref().unwrap_or("line_search") {
                "constant" => GammaMode::Constant(need(cfg.gamma, "gamma", "for constant polyak steps")?),
                _ => GammaMode::LineSearch {
                    beta: cfg.beta.unwrap_or(0.5),
                    a: cfg.critical_a.unwrap_or(0.5),
                    grow: cfg.grow.unwrap_or(false),
                },
            };
            let start = cfg.gamma_start.or(cfg.gamma).unwrap_or(1.0);
            run_polyak(op, &x0, variant, &scheme, mode, start, lim, rng)?.0
        }
        "eg_l0l1" => run_eg_l0l1(op, &x0, &l0l1_config(cfg, op)?, lim, rng.seed())?.0,
        other => return Err(Error::config("algorithm", format!("`{other}` needs a network problem"))),
    };
    Ok(trace)
}

fn run_network(cfg: &ExperimentConfig, ops: &[AffineOperator], rng: &Rng) -> Result<Trace> {
    let consts = network_constants(ops)?;
    let x0 = initial_point(cfg, ops[0].dim())?;
    let est = cfg.batch.map_or(Estimator::Deterministic, Estimator::Stochastic);
    let svrg = cfg.algorithm == "proxskip_l_svrgda";
    let mode = if svrg || cfg.batch.is_some() {
        ParamMode::Svrg { ell_hat: consts.ell_hat, mu: consts.mu }
    } else {
        ParamMode::Gda { ell: consts.ell, mu: consts.mu }
    };
    let (theory, m_weight) = theoretical_params(mode)?;
    let default_gamma = match mode {
        ParamMode::Svrg { ell_hat, .. } if !svrg => 1.0 / (2.0 * ell_hat),
        _ => theory.gamma,
    };
    let gamma = cfg.gamma.unwrap_or(default_gamma);
    let mu = consts.mu;
    let p = cfg.p.unwrap_or_else(|| (gamma * mu).sqrt().min(1.0));
    let q = cfg.q.unwrap_or(if svrg { theory.q } else { 1.0 });
    let net_cfg = NetworkConfig { gamma, p, q };
    net_cfg.validate()?;
    let sync_every = cfg.sync_every.unwrap_or_else(|| (1.0 / p).ceil() as u64);
    let lim = limits(cfg);
    let z = &consts.z_star;
    let d0 = (&x0 - z).norm_squared();
    let f_star = local_values_at(ops, z);
    let mut net = Network::new(ops, &x0, rng)?;
    let mut trace = Trace::new();
    let proxskip = cfg.algorithm.starts_with("proxskip");
    let snap = |net: &Network<AffineOperator>| {
        let mut m = BTreeMap::new();
        if d0 > 0.0 {
            m.insert("relative_error".to_string(), (net.mean_x() - z).norm_squared() / d0);
        }
        if proxskip {
            let (mw, s2) = if svrg { (m_weight, net.svrg_sigma2(z)) } else { (0.0, 0.0) };
            if let Ok(v) = lyapunov_v(&net.clients, z, &f_star, gamma, p, mw, s2) {
                m.insert("lyapunov_V".to_string(), v);
            }
        }
        TraceRecord {
            iteration: net.log.iterations,
            oracle_calls: net.oracle_calls,
            comm_rounds: net.log.rounds,
            metrics: m,
            seed: rng.seed(),
        }
    };
    trace.push(snap(&net));
    let mut last_recorded = 0;
    while !lim.exhausted(net.log.iterations, net.oracle_calls) {
        match cfg.algorithm.as_str() {
            "proxskip_vip" => {
                net.proxskip_vip_round(&net_cfg, est);
            }
            "proxskip_l_svrgda" => {
                net.proxskip_l_svrgda_round(&net_cfg);
            }
            "local_gda" => net.local_gda_round(sync_every, gamma, est),
            _ => net.local_eg_round(sync_every, gamma, est),
        }
        let k = net.log.iterations;
        if crate::operator::diverged(&net.mean_x()) {
            trace.status = RunStatus::Diverged;
            break;
        }
        let stride = lim.record_every;
        if k / stride != last_recorded / stride || lim.exhausted(k, net.oracle_calls) {
            trace.push(snap(&net));
            last_recorded = k;
        }
    }
    Ok(trace)
}

fn trace_rows(name: &str, seed: u64, trace: &Trace, keep: &[String]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for r in &trace.records {
        for (metric, value) in &r.metrics {
            if keep.is_empty() || keep.contains(metric) {
                rows.push(MetricRow {
                    experiment: name.to_string(),
                    seed,
                    iteration: r.iteration,
                    oracle_calls: r.oracle_calls,
                    comm_rounds: r.comm_rounds,
                    metric: metric.clone(),
                    value: *value,
                });
            }
        }
    }
    let status = match &trace.status {
        RunStatus::Completed => None,
        RunStatus::Converged => Some("status_converged"),
        RunStatus::Diverged => Some("status_diverged"),
        RunStatus::Failed(msg) => {
            log::warn!("{name} seed {seed}: {msg}");
            Some("status_failed")
        }
    };
    if let Some(s) = status {
        let last = trace.records.last();
        rows.push(MetricRow {
            experiment: name.to_string(),
            seed,
            iteration: last.map_or(0, |r| r.iteration),
            oracle_calls: last.map_or(0, |r| r.oracle_calls),
            comm_rounds: last.map_or(0, |r| r.comm_rounds),
            metric: s.to_string(),
            value: 1.0,
        });
    }
    rows
}

/// Runs one seed. Runtime failures of the method become a status row.
pub fn run_seed(name: &str, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<MetricRow>> {
    let instance = build_instance(cfg, instance_seed(name, cfg, seed))?;
    let mut rng = Rng::new(seed).child(name).child("algorithm");
    let result = match &instance {
        Instance::Single(op) => run_single(cfg, op.as_ref(), &mut rng),
        Instance::Network(ops) => run_network(cfg, ops, &rng),
    };
    let trace = match result {
        Ok(t) => t,
        Err(e @ Error::Config { .. }) => return Err(e),
        Err(e) => Trace { records: Vec::new(), status: RunStatus::Failed(e.to_string()) },
    };
    Ok(trace_rows(name, seed, &trace, &cfg.metrics))
}

pub fn run_experiment(name: &str, cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<MetricRow>> {
    cfg.validate(name)?;
    let per_seed = map_ordered(&cfg.seeds, exec, |&s| run_seed(name, cfg, s));
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Runs every section of a configuration file.
pub fn run_config(cfg: &ConfigFile, exec: Execution) -> Result<BTreeMap<String, Vec<MetricRow>>> {
    let mut out = BTreeMap::new();
    for (name, c) in cfg {
        out.insert(name.clone(), run_experiment(name, c, exec)?);
    }
    Ok(out)
}

/// Writes `<dir>/<experiment>.csv` for each experiment.
pub fn write_results(dir: &Path, results: &BTreeMap<String, Vec<MetricRow>>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, rows) in results {
        let f = std::fs::File::create(dir.join(format!("{name}.csv")))?;
        write_csv(rows, std::io::BufWriter::new(f))?;
    }
    Ok(())
}
