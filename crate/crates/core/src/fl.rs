//! Simulated federated network: ProxSkip-VIP-FL, ProxSkip-L-SVRGDA-FL and
//! Local GDA / Local EG baselines with communication accounting.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::sym_min_eig;
use crate::operator::{FiniteSumOperator, Matrix, Point};
use crate::problems::AffineOperator;
use crate::rng::Rng;
use crate::sampling::SamplingScheme;

#[derive(Clone, Debug, PartialEq)]
pub struct ClientState {
    pub x: Point,
    pub h: Point,
    /// SVRG anchor and its cached local operator value.
    pub w: Point,
    pub f_w: Option<Point>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkConfig {
    pub gamma: f64,
    pub p: f64,
    /// Anchor refresh probability (variance-reduced method only).
    pub q: f64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::config("network.gamma", "gamma must be positive"));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::config("network.p", "p must lie in (0,1]"));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::config("network.q", "q must lie in (0,1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommLog {
    pub rounds: u64,
    pub iterations: u64,
    /// Iteration index at which each averaging happened.
    pub round_iters: Vec<u64>,
}

/// Local operator estimator used by clients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimator {
    Deterministic,
    /// Uniform minibatch of the given size from the client's components.
    Stochastic(usize),
}

/// Every client receives the mean of the inputs.
pub fn consensus_prox(points: &[Point]) -> Result<Vec<Point>> {
    let first = points.first().ok_or_else(|| Error::Contract("consensus of an empty list".into()))?;
    let mut mean = Point::zeros(first.len());
    for p in points {
        if p.len() != first.len() {
            return Err(Error::DimensionMismatch { expected: first.len(), got: p.len() });
        }
        mean += p;
    }
    mean /= points.len() as f64;
    Ok(vec![mean; points.len()])
}

/// Clients, their local finite-sum operators, and the server coin stream.
pub struct Network<'a, O: FiniteSumOperator> {
    pub ops: &'a [O],
    pub clients: Vec<ClientState>,
    pub log: CommLog,
    pub oracle_calls: u64,
    server: Rng,
    client_rngs: Vec<Rng>,
}

impl<'a, O: FiniteSumOperator> Network<'a, O> {
    /// All clients start at `x0` with h = 0 and anchor w = x0.
    pub fn new(ops: &'a [O], x0: &Point, rng: &Rng) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::config("network.clients", "need at least one client"));
        }
        for op in ops {
            if op.dim() != x0.len() {
                return Err(Error::DimensionMismatch { expected: x0.len(), got: op.dim() });
            }
        }
        let clients = ops
            .iter()
            .map(|_| ClientState { x: x0.clone(), h: Point::zeros(x0.len()), w: x0.clone(), f_w: None })
            .collect();
        let client_rngs = (0..ops.len()).map(|i| rng.child_indexed("client", i as u64)).collect();
        Ok(Network { ops, clients, log: CommLog::default(), oracle_calls: 0, server: rng.child("server"), client_rngs })
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn mean_x(&self) -> Point {
        let mut m = Point::zeros(self.clients[0].x.len());
        for c in &self.clients {
            m += &c.x;
        }
        m / self.clients.len() as f64
    }

    fn local_estimate(&mut self, i: usize, x: &Point, est: Estimator) -> Point {
        let op = &self.ops[i];
        match est {
            Estimator::Deterministic => {
                self.oracle_calls += op.n() as u64;
                op.mean(x)
            }
            Estimator::Stochastic(tau) => {
                let tau = tau.clamp(1, op.n());
                let scheme = SamplingScheme::minibatch(op.n(), tau).expect("valid batch");
                let v = scheme.draw(&mut self.client_rngs[i]);
                self.oracle_calls += v.nnz() as u64;
                let mut acc = Point::zeros(x.len());
                for &(j, w) in &v.entries {
                    acc.axpy(w, &op.component(j, x), 1.0);
                }
                acc / op.n() as f64
            }
        }
    }

    fn average(&mut self, pts: Vec<Point>) -> Vec<Point> {
        self.log.rounds += 1;
        self.log.round_iters.push(self.log.iterations);
        consensus_prox(&pts).expect("non-empty network")
    }

    /// Shared-coin ProxSkip update given per-client estimates. Returns whether
    /// the round communicated.
    fn proxskip_update(&mut self, g: Vec<Point>, cfg: &NetworkConfig, theta: bool) -> bool {
        let (gamma, p) = (cfg.gamma, cfg.p);
        let hats: Vec<Point> =
            self.clients.iter().zip(&g).map(|(c, gi)| &c.x - (gi - &c.h) * gamma).collect();
        let next = if theta {
            let shifted: Vec<Point> = hats.iter().zip(&self.clients).map(|(xh, c)| xh - &c.h * (gamma / p)).collect();
            self.average(shifted)
        } else {
            hats.clone()
        };
        for ((c, xh), xn) in self.clients.iter_mut().zip(&hats).zip(next) {
            c.h += (&xn - xh) * (p / gamma);
            c.x = xn;
        }
        self.log.iterations += 1;
        theta
    }

    /// One ProxSkip-VIP-FL round.
    pub fn proxskip_vip_round(&mut self, cfg: &NetworkConfig, est: Estimator) -> bool {
        let theta = self.server.random_bool(cfg.p);
        let g: Vec<Point> = (0..self.n_clients())
            .map(|i| {
                let x = self.clients[i].x.clone();
                self.local_estimate(i, &x, est)
            })
            .collect();
        self.proxskip_update(g, cfg, theta)
    }

    /// Both branches of a deterministic ProxSkip round without advancing the
    /// coin stream: `(state if no communication, state if communication)`.
    pub fn proxskip_branches(&self, cfg: &NetworkConfig) -> (Vec<ClientState>, Vec<ClientState>) {
        let g: Vec<Point> = self.clients.iter().zip(self.ops).map(|(c, op)| op.mean(&c.x)).collect();
        let branch = |theta: bool| {
            let mut sim = Network {
                ops: self.ops,
                clients: self.clients.clone(),
                log: CommLog::default(),
                oracle_calls: 0,
                server: self.server.clone(),
                client_rngs: Vec::new(),
            };
            sim.proxskip_update(g.clone(), cfg, theta);
            sim.clients
        };
        (branch(false), branch(true))
    }

    fn refresh_anchor(&mut self, i: usize) {
        let w = self.clients[i].w.clone();
        self.oracle_calls += self.ops[i].n() as u64;
        self.clients[i].f_w = Some(self.ops[i].mean(&w));
    }

    /// One ProxSkip-L-SVRGDA-FL round.
    pub fn proxskip_l_svrgda_round(&mut self, cfg: &NetworkConfig) -> bool {
        let theta = self.server.random_bool(cfg.p);
        let zeta = self.server.random_bool(cfg.q);
        let n = self.n_clients();
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            if self.clients[i].f_w.is_none() {
                self.refresh_anchor(i);
            }
            let m = self.ops[i].n();
            let j = self.client_rngs[i].random_range(0..m);
            let c = &self.clients[i];
            let est = self.ops[i].component(j, &c.x) - self.ops[i].component(j, &c.w) + c.f_w.as_ref().unwrap();
            self.oracle_calls += 2;
            g.push(est);
        }
        let old: Vec<Point> = self.clients.iter().map(|c| c.x.clone()).collect();
        let comm = self.proxskip_update(g, cfg, theta);
        if zeta {
            for (i, x) in old.into_iter().enumerate() {
                self.clients[i].w = x;
                self.refresh_anchor(i);
            }
        }
        comm
    }

    /// `sync_every` local (S)GDA steps followed by averaging.
    pub fn local_gda_round(&mut self, sync_every: u64, gamma: f64, est: Estimator) {
        for _ in 0..sync_every {
            for i in 0..self.n_clients() {
                let x = self.clients[i].x.clone();
                let g = self.local_estimate(i, &x, est);
                self.clients[i].x = x - g * gamma;
            }
            self.log.iterations += 1;
        }
        self.sync();
    }

    /// `sync_every` local (S)EG steps followed by averaging.
    pub fn local_eg_round(&mut self, sync_every: u64, gamma: f64, est: Estimator) {
        for _ in 0..sync_every {
            for i in 0..self.n_clients() {
                let x = self.clients[i].x.clone();
                let g = self.local_estimate(i, &x, est);
                let xh = &x - g * gamma;
                let gh = self.local_estimate(i, &xh, est);
                self.clients[i].x = x - gh * gamma;
            }
            self.log.iterations += 1;
        }
        self.sync();
    }

    fn sync(&mut self) {
        let pts: Vec<Point> = self.clients.iter().map(|c| c.x.clone()).collect();
        let avg = self.average(pts);
        for (c, x) in self.clients.iter_mut().zip(avg) {
            c.x = x;
        }
    }

    /// Σ_i ‖x_i − z*‖² over the stacked iterate.
    pub fn stacked_sq_dist(&self, z_star: &Point) -> f64 {
        self.clients.iter().map(|c| (&c.x - z_star).norm_squared()).sum()
    }

    /// Σ_i (1/m_i) Σ_j ‖F_ij(z*) − F_ij(w_i)‖².
    pub fn svrg_sigma2(&self, z_star: &Point) -> f64 {
        svrg_sigma2(self.ops, &self.clients, z_star)
    }
}

pub fn svrg_sigma2<O: FiniteSumOperator>(ops: &[O], clients: &[ClientState], z_star: &Point) -> f64 {
    ops.iter()
        .zip(clients)
        .map(|(op, c)| {
            let m = op.n();
            (0..m).map(|j| (op.component(j, z_star) - op.component(j, &c.w)).norm_squared()).sum::<f64>() / m as f64
        })
        .sum()
}

/// Per-client local operator values H_i(z*).
pub fn local_values_at<O: FiniteSumOperator>(ops: &[O], z: &Point) -> Vec<Point> {
    ops.iter().map(|op| op.mean(z)).collect()
}

/// V = ‖x − x*‖² + (γ²/p²)‖h − F(x*)‖² + Mγ²σ² over stacked client states.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_v(
    clients: &[ClientState],
    z_star: &Point,
    f_star: &[Point],
    gamma: f64,
    p: f64,
    m: f64,
    sigma2: f64,
) -> Result<f64> {
    if f_star.len() != clients.len() {
        return Err(Error::DimensionMismatch { expected: clients.len(), got: f_star.len() });
    }
    let dx: f64 = clients.iter().map(|c| (&c.x - z_star).norm_squared()).sum();
    let dh: f64 = clients.iter().zip(f_star).map(|(c, f)| (&c.h - f).norm_squared()).sum();
    Ok(dx + gamma * gamma / (p * p) * dh + m * gamma * gamma * sigma2)
}

/// Theoretical parameter modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamMode {
    /// γ = 1/(2ℓ), p = √(γμ).
    Gda { ell: f64, mu: f64 },
    /// γ = min{1/μ, 1/(6ℓ̂)}, q = 2γμ, p = √(γμ).
    Svrg { ell_hat: f64, mu: f64 },
}

/// Returns the network configuration and the Lyapunov weight M (zero for GDA).
pub fn theoretical_params(mode: ParamMode) -> Result<(NetworkConfig, f64)> {
    match mode {
        ParamMode::Gda { ell, mu } => {
            if !(ell > 0.0 && mu > 0.0) {
                return Err(Error::config("params", "need ell, mu > 0"));
            }
            let gamma = 1.0 / (2.0 * ell);
            Ok((NetworkConfig { gamma, p: (gamma * mu).sqrt().min(1.0), q: 1.0 }, 0.0))
        }
        ParamMode::Svrg { ell_hat, mu } => {
            if !(ell_hat > 0.0 && mu > 0.0) {
                return Err(Error::config("params", "need ell_hat, mu > 0"));
            }
            let gamma = (1.0 / mu).min(1.0 / (6.0 * ell_hat));
            let q = (2.0 * gamma * mu).min(1.0);
            Ok((NetworkConfig { gamma, p: (gamma * mu).sqrt().min(1.0), q }, 4.0 / q))
        }
    }
}

/// Cocoercivity constant of x ↦ Mx: the smallest ℓ with ⟨Mv, v⟩ ≥ ‖Mv‖²/ℓ.
pub fn linear_cocoercivity(m: &Matrix) -> Result<f64> {
    let inv = m.clone().try_inverse().ok_or_else(|| Error::Infeasible("singular operator matrix".into()))?;
    let lam = sym_min_eig(&inv);
    if !(lam > 0.0) {
        return Err(Error::Infeasible("operator is not cocoercive".into()));
    }
    Ok(1.0 / lam)
}

/// Smallest eigenvalue of the symmetric part, the strong monotonicity modulus of x ↦ Mx.
pub fn linear_strong_monotonicity(m: &Matrix) -> f64 {
    sym_min_eig(m)
}

/// Exact constants of an affine network used by the theoretical parameter rules.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConstants {
    /// Root of Σ_i H_i.
    pub z_star: Point,
    /// max_i cocoercivity of H_i.
    pub ell: f64,
    /// max_{i,j} cocoercivity of F_ij.
    pub ell_hat: f64,
    /// min_i strong monotonicity of H_i.
    pub mu: f64,
}

pub fn network_constants(ops: &[AffineOperator]) -> Result<NetworkConstants> {
    let first = ops.first().ok_or_else(|| Error::config("network.clients", "need at least one client"))?;
    let d = first.dim();
    let mut m = Matrix::zeros(d, d);
    let mut b = Point::zeros(d);
    let (mut ell, mut ell_hat, mut mu) = (0.0f64, 0.0f64, f64::INFINITY);
    for op in ops {
        m += op.mean_matrix();
        b += op.mean_offset();
        ell = ell.max(linear_cocoercivity(op.mean_matrix())?);
        for c in op.mats() {
            ell_hat = ell_hat.max(linear_cocoercivity(c)?);
        }
        mu = mu.min(linear_strong_monotonicity(op.mean_matrix()));
    }
    let z_star = m.lu().solve(&(-b)).ok_or_else(|| Error::Infeasible("network operator is singular".into()))?;
    Ok(NetworkConstants { z_star, ell, ell_hat, mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::OperatorMeta;
    use crate::problems::make_federated_quadratic_game;

    fn p(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    fn net_ops() -> Vec<AffineOperator> {
        make_federated_quadratic_game(4, 5, 3, (0.1, 1.0), (0.0, 1.0), 3).unwrap()
    }

    fn global_root(ops: &[AffineOperator]) -> Point {
        let d = ops[0].dim();
        let mut m = Matrix::zeros(d, d);
        let mut b = Point::zeros(d);
        for op in ops {
            m += op.mean_matrix();
            b += op.mean_offset();
        }
        m.lu().solve(&(-b)).unwrap()
    }

    #[test]
    fn consensus_examples() {
        let out = consensus_prox(&[p(&[1.0, 2.0]), p(&[3.0, 4.0])]).unwrap();
        assert_eq!(out, vec![p(&[2.0, 3.0]); 2]);
        let same = vec![p(&[0.5]); 3];
        assert_eq!(consensus_prox(&same).unwrap(), same);
        assert!(consensus_prox(&[]).is_err());
    }

    #[test]
    fn fixed_point_is_preserved() {
        let ops = net_ops();
        let z = global_root(&ops);
        let mut net = Network::new(&ops, &z, &Rng::new(0)).unwrap();
        let fs = local_values_at(&ops, &z);
        for (c, f) in net.clients.iter_mut().zip(&fs) {
            c.h = f.clone();
        }
        let cfg = NetworkConfig { gamma: 0.1, p: 0.5, q: 1.0 };
        for _ in 0..20 {
            net.proxskip_vip_round(&cfg, Estimator::Deterministic);
            for (c, f) in net.clients.iter().zip(&fs) {
                assert!((&c.x - &z).norm() < 1e-12);
                assert!((&c.h - f).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn p_one_is_proximal_gda_on_single_client() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        let ops = vec![AffineOperator::new(vec![m.clone()], vec![p(&[0.2, -0.1])], OperatorMeta::default())];
        let x0 = p(&[1.0, -2.0]);
        let mut net = Network::new(&ops, &x0, &Rng::new(1)).unwrap();
        let cfg = NetworkConfig { gamma: 0.1, p: 1.0, q: 1.0 };
        let mut x = x0;
        for _ in 0..10 {
            assert!(net.proxskip_vip_round(&cfg, Estimator::Deterministic));
            x = &x - ops[0].mean(&x) * 0.1;
            assert!((&net.clients[0].x - &x).norm() < 1e-12);
        }
    }

    #[test]
    fn consensus_after_comm_and_control_variate_identity() {
        let ops = net_ops();
        let mut net = Network::new(&ops, &Point::from_element(6, 1.0), &Rng::new(2)).unwrap();
        let cfg = NetworkConfig { gamma: 0.05, p: 0.3, q: 1.0 };
        for _ in 0..200 {
            let hsum_before: Point = net.clients.iter().map(|c| c.h.clone()).sum();
            let comm = net.proxskip_vip_round(&cfg, Estimator::Stochastic(2));
            let hsum_after: Point = net.clients.iter().map(|c| c.h.clone()).sum();
            if comm {
                let x0 = net.clients[0].x.clone();
                assert!(net.clients.iter().all(|c| c.x == x0));
            } else {
                assert_eq!(hsum_before, hsum_after);
            }
        }
    }

    #[test]
    fn svrg_anchor_at_iterate_is_exact() {
        let ops = net_ops();
        let x0 = Point::from_element(6, 0.3);
        let mut net = Network::new(&ops, &x0, &Rng::new(4)).unwrap();
        let cfg = NetworkConfig { gamma: 0.05, p: 1e-9, q: 1.0 };
        net.proxskip_l_svrgda_round(&cfg);
        for (c, op) in net.clients.iter().zip(&ops) {
            let want = &x0 - op.mean(&x0) * 0.05;
            assert!((&c.x - want).norm() < 1e-12);
        }
    }

    #[test]
    fn local_gda_homogeneous_matches_centralised() {
        let one = net_ops().remove(0);
        let ops = vec![one.clone(), one.clone(), one.clone()];
        let x0 = Point::from_element(6, 1.0);
        let mut net = Network::new(&ops, &x0, &Rng::new(0)).unwrap();
        let mut x = x0.clone();
        for _ in 0..5 {
            net.local_gda_round(3, 0.1, Estimator::Deterministic);
            for _ in 0..3 {
                x = &x - one.mean(&x) * 0.1;
            }
        }
        assert!((net.clients[1].x.clone() - &x).norm() < 1e-12);
        assert_eq!(net.log.rounds, 5);
        let mut net = Network::new(&ops, &x0, &Rng::new(0)).unwrap();
        let mut y = x0;
        net.local_eg_round(4, 0.1, Estimator::Deterministic);
        for _ in 0..4 {
            let yh = &y - one.mean(&y) * 0.1;
            y = &y - one.mean(&yh) * 0.1;
        }
        assert!((net.clients[2].x.clone() - y).norm() < 1e-12);
    }

    #[test]
    fn lyapunov_examples() {
        let c = ClientState { x: p(&[1.0]), h: p(&[0.0]), w: p(&[1.0]), f_w: None };
        let f = vec![p(&[2.0])];
        assert_eq!(lyapunov_v(std::slice::from_ref(&c), &p(&[1.0]), &f, 0.5, 0.25, 0.0, 0.0).unwrap(), 4.0 * 4.0);
        let c = ClientState { h: p(&[2.0]), ..c };
        assert_eq!(lyapunov_v(&[c], &p(&[1.0]), &f, 0.5, 0.25, 3.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn parameter_examples() {
        let (c, m) = theoretical_params(ParamMode::Gda { ell: 10.0, mu: 0.1 }).unwrap();
        assert!((c.gamma - 0.05).abs() < 1e-15);
        assert!((c.p - 0.005f64.sqrt()).abs() < 1e-15);
        assert_eq!(m, 0.0);
        let (c, m) = theoretical_params(ParamMode::Svrg { ell_hat: 6.0, mu: 1.0 }).unwrap();
        assert!((c.gamma - 1.0 / 36.0).abs() < 1e-15);
        assert!((c.q - 2.0 / 36.0).abs() < 1e-15);
        assert!((m - 72.0).abs() < 1e-12);
    }

    #[test]
    fn cocoercivity_of_scaled_strongly_monotone_map() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 3.0, -3.0, 1.0]);
        let ell = linear_cocoercivity(&m).unwrap();
        let (l, mu) = (10f64.sqrt(), 1.0);
        assert!((ell - l * l / mu).abs() < 1e-10);
        let i2 = Matrix::identity(2, 2) * 2.0;
        assert!((linear_cocoercivity(&i2).unwrap() - 2.0).abs() < 1e-14);
        let rot = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(linear_cocoercivity(&rot).is_err());
    }

    #[test]
    fn communication_frequency_tracks_p() {
        let ops = net_ops();
        let mut net = Network::new(&ops, &Point::zeros(6), &Rng::new(9)).unwrap();
        let cfg = NetworkConfig { gamma: 0.01, p: 0.2, q: 1.0 };
        for _ in 0..5000 {
            net.proxskip_vip_round(&cfg, Estimator::Stochastic(1));
        }
        let f = net.log.rounds as f64 / net.log.iterations as f64;
        assert!((f - 0.2).abs() < 4.0 * (0.2 * 0.8 / 5000f64).sqrt());
    }
}
