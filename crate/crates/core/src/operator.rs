//! Finite-sum operators, oracle accounting and run traces.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Point = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Constants of an α-symmetric (L0, L1)-Lipschitz operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L0L1 {
    pub alpha: f64,
    pub l0: f64,
    pub l1: f64,
}

/// Known structural constants attached to an operator. Absent entries are unknown.
#[derive(Clone, Debug, Default)]
pub struct OperatorMeta {
    pub name: String,
    pub x_star: Option<Point>,
    pub lipschitz: Option<f64>,
    pub component_lipschitz: Option<Vec<f64>>,
    pub mu: Option<f64>,
    pub rho: Option<f64>,
    pub l0l1: Option<L0L1>,
    pub monotone: bool,
    /// Block sizes `(d1, d2)` when iterates live on a product of simplices.
    pub simplex_blocks: Option<(usize, usize)>,
}

/// F(x) = (1/n) Σ F_i(x).
pub trait FiniteSumOperator: Send + Sync {
    fn dim(&self) -> usize;
    fn n(&self) -> usize;
    fn component(&self, i: usize, x: &Point) -> Point;
    fn meta(&self) -> &OperatorMeta;

    fn mean(&self, x: &Point) -> Point {
        let mut acc = Point::zeros(self.dim());
        for i in 0..self.n() {
            acc += self.component(i, x);
        }
        acc / self.n() as f64
    }

    fn jacobian(&self, _x: &Point) -> Option<Matrix> {
        None
    }
}

/// Sparse sampling vector: `(index, weight)` pairs with nonzero weight.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingVector {
    pub entries: Vec<(usize, f64)>,
}

impl SamplingVector {
    pub fn ones(n: usize) -> Self {
        SamplingVector { entries: (0..n).map(|i| (i, 1.0)).collect() }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for &(i, w) in &self.entries {
            v[i] += w;
        }
        v
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().filter(|e| e.1 != 0.0).count()
    }
}

fn check_dim(op: &dyn FiniteSumOperator, x: &Point) -> Result<()> {
    if x.len() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: x.len() });
    }
    Ok(())
}

/// Full operator value. Costs `n` oracle calls when run through an [`Oracle`].
pub fn eval_full(op: &dyn FiniteSumOperator, x: &Point) -> Result<Point> {
    check_dim(op, x)?;
    Ok(op.mean(x))
}

/// g(x) = (1/n) Σ v_i F_i(x), touching only the support of `v`.
pub fn eval_sampled(op: &dyn FiniteSumOperator, v: &SamplingVector, x: &Point) -> Result<Point> {
    check_dim(op, x)?;
    let n = op.n();
    let mut acc = Point::zeros(op.dim());
    for &(i, w) in &v.entries {
        if i >= n {
            return Err(Error::Contract(format!("sample index {i} out of range 0..{n}")));
        }
        if w < 0.0 {
            return Err(Error::Contract("negative sampling weight".into()));
        }
        if w != 0.0 {
            acc.axpy(w, &op.component(i, x), 1.0);
        }
    }
    Ok(acc / n as f64)
}

/// Counting wrapper. One call is one component evaluation.
pub struct Oracle<'a> {
    op: &'a dyn FiniteSumOperator,
    calls: u64,
}

impl<'a> Oracle<'a> {
    pub fn new(op: &'a dyn FiniteSumOperator) -> Self {
        Oracle { op, calls: 0 }
    }

    pub fn op(&self) -> &'a dyn FiniteSumOperator {
        self.op
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn full(&mut self, x: &Point) -> Result<Point> {
        let out = eval_full(self.op, x)?;
        self.calls += self.op.n() as u64;
        Ok(out)
    }

    pub fn sampled(&mut self, v: &SamplingVector, x: &Point) -> Result<Point> {
        let out = eval_sampled(self.op, v, x)?;
        self.calls += v.nnz() as u64;
        Ok(out)
    }

    pub fn component(&mut self, i: usize, x: &Point) -> Result<Point> {
        check_dim(self.op, x)?;
        self.calls += 1;
        Ok(self.op.component(i, x))
    }
}

/// ‖x − x*‖² / ‖x0 − x*‖².
pub fn metric_relative_error(x: &Point, x0: &Point, x_star: &Point) -> Result<f64> {
    let den = (x0 - x_star).norm_squared();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("x0 equals x*".into()));
    }
    Ok((x - x_star).norm_squared() / den)
}

/// True when an iterate has left the finite range or exceeded the divergence radius.
pub fn diverged(x: &Point) -> bool {
    x.iter().any(|v| !v.is_finite()) || x.norm() > 1e12
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    pub oracle_calls: u64,
    pub comm_rounds: u64,
    pub metrics: BTreeMap<String, f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    Converged,
    Diverged,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
}

impl Trace {
    pub fn new() -> Self {
        Trace { records: Vec::new(), status: RunStatus::Completed }
    }

    pub fn push(&mut self, rec: TraceRecord) {
        debug_assert!(self
            .records
            .last()
            .is_none_or(|p| p.oracle_calls <= rec.oracle_calls && p.comm_rounds <= rec.comm_rounds));
        self.records.push(rec);
    }

    pub fn series(&self, metric: &str) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.metrics.get(metric).copied()).collect()
    }
}

impl Default for Trace {
    fn default() -> Self {
        Self::new()
    }
}

/// Iteration and oracle limits plus the recording stride of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunLimits {
    pub max_iters: u64,
    pub max_oracle_calls: Option<u64>,
    pub record_every: u64,
}

impl RunLimits {
    pub fn iters(max_iters: u64) -> Self {
        RunLimits { max_iters, max_oracle_calls: None, record_every: 1 }
    }

    pub fn every(mut self, stride: u64) -> Self {
        self.record_every = stride.max(1);
        self
    }

    pub fn oracle_budget(mut self, calls: u64) -> Self {
        self.max_oracle_calls = Some(calls);
        self
    }

    pub fn exhausted(&self, k: u64, calls: u64) -> bool {
        k >= self.max_iters || self.max_oracle_calls.is_some_and(|c| calls >= c)
    }

    pub fn due(&self, k: u64) -> bool {
        k.is_multiple_of(self.record_every)
    }
}

/// relative_error (when x* is known) and sq_operator_norm at `x`.
pub fn base_metrics(op: &dyn FiniteSumOperator, x: &Point, x0: &Point) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    if let Some(xs) = &op.meta().x_star {
        if let Ok(r) = metric_relative_error(x, x0, xs) {
            m.insert("relative_error".to_string(), r);
        }
    }
    m.insert("sq_operator_norm".to_string(), op.mean(x).norm_squared());
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fn2 {
        meta: OperatorMeta,
        f: fn(usize, &Point) -> Point,
        n: usize,
    }

    impl FiniteSumOperator for Fn2 {
        fn dim(&self) -> usize {
            2
        }
        fn n(&self) -> usize {
            self.n
        }
        fn component(&self, i: usize, x: &Point) -> Point {
            (self.f)(i, x)
        }
        fn meta(&self) -> &OperatorMeta {
            &self.meta
        }
    }

    fn bilinear() -> Fn2 {
        Fn2 { meta: OperatorMeta::default(), f: |_, x| Point::from_vec(vec![x[1], -x[0]]), n: 3 }
    }

    #[test]
    fn full_on_identical_components() {
        let op = bilinear();
        let y = eval_full(&op, &Point::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(y, Point::from_vec(vec![0.0, -1.0]));
    }

    #[test]
    fn cancelling_components() {
        let op = Fn2 {
            meta: OperatorMeta::default(),
            f: |i, x| if i == 0 { x.clone() } else { -x },
            n: 2,
        };
        let y = eval_full(&op, &Point::from_vec(vec![3.0, -2.0])).unwrap();
        assert_eq!(y.norm(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let op = bilinear();
        assert!(matches!(
            eval_full(&op, &Point::zeros(3)),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn sampled_ones_equals_full() {
        let op = Fn2 {
            meta: OperatorMeta::default(),
            f: |i, x| x * (i as f64 + 1.0),
            n: 4,
        };
        let x = Point::from_vec(vec![0.3, -1.1]);
        let a = eval_sampled(&op, &SamplingVector::ones(4), &x).unwrap();
        let b = eval_full(&op, &x).unwrap();
        assert!((a - b).norm() < 1e-15);
    }

    #[test]
    fn single_element_uniform_gives_component() {
        let op = Fn2 {
            meta: OperatorMeta::default(),
            f: |i, x| x * (i as f64 + 1.0),
            n: 4,
        };
        let x = Point::from_vec(vec![1.0, 2.0]);
        let v = SamplingVector { entries: vec![(2, 4.0)] };
        let g = eval_sampled(&op, &v, &x).unwrap();
        assert!((g - op.component(2, &x)).norm() < 1e-15);
    }

    #[test]
    fn oracle_counts_support() {
        let op = bilinear();
        let mut o = Oracle::new(&op);
        let x = Point::zeros(2);
        o.full(&x).unwrap();
        assert_eq!(o.calls(), 3);
        o.sampled(&SamplingVector { entries: vec![(0, 3.0), (1, 0.0)] }, &x).unwrap();
        assert_eq!(o.calls(), 4);
    }

    #[test]
    fn relative_error_cases() {
        let x0 = Point::from_vec(vec![2.0, 0.0]);
        let xs = Point::zeros(2);
        assert_eq!(metric_relative_error(&x0, &x0, &xs).unwrap(), 1.0);
        assert_eq!(metric_relative_error(&xs, &x0, &xs).unwrap(), 0.0);
        let x = Point::from_vec(vec![1.0, 0.0]);
        assert_eq!(metric_relative_error(&x, &x0, &xs).unwrap(), 0.25);
        assert!(matches!(metric_relative_error(&x, &xs, &xs), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn divergence_guard() {
        assert!(diverged(&Point::from_vec(vec![f64::NAN])));
        assert!(diverged(&Point::from_vec(vec![2e12])));
        assert!(!diverged(&Point::from_vec(vec![1.0])));
    }
}
