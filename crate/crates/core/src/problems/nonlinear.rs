use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{from_spectrum, random_orthogonal};
use crate::operator::{FiniteSumOperator, L0L1, Matrix, OperatorMeta, Point};
use crate::rng::Rng;

fn psi_prime(w: f64) -> f64 {
    (4.0 / 7.0) * w.powi(5) - (4.0 / 3.0) * w.powi(3) + (2.0 / 3.0) * w
}

fn psi_second(w: f64) -> f64 {
    (20.0 / 7.0) * w.powi(4) - 4.0 * w * w + 2.0 / 3.0
}

/// F(w1, w2) = (w2 + ψ′(w1), −w1 + ψ′(w2)), ψ(w) = 2w⁶/21 − w⁴/3 + w²/3.
#[derive(Clone, Debug)]
pub struct GlobalForsaken {
    meta: OperatorMeta,
}

pub fn make_global_forsaken() -> GlobalForsaken {
    GlobalForsaken {
        meta: OperatorMeta {
            name: "global_forsaken".into(),
            x_star: Some(Point::zeros(2)),
            rho: Some(0.119732),
            ..Default::default()
        },
    }
}

impl FiniteSumOperator for GlobalForsaken {
    fn dim(&self) -> usize {
        2
    }
    fn n(&self) -> usize {
        1
    }
    fn component(&self, _i: usize, x: &Point) -> Point {
        Point::from_vec(vec![x[1] + psi_prime(x[0]), -x[0] + psi_prime(x[1])])
    }
    fn meta(&self) -> &OperatorMeta {
        &self.meta
    }
    fn jacobian(&self, x: &Point) -> Option<Matrix> {
        Some(Matrix::from_row_slice(2, 2, &[psi_second(x[0]), 1.0, -1.0, psi_second(x[1])]))
    }
}

/// F(x) = (√(w1ᵀAw1) A w1 + B w2, √(w2ᵀCw2) C w2 − Bᵀ w1).
#[derive(Clone, Debug)]
pub struct CubicMinMax {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    meta: OperatorMeta,
}

impl CubicMinMax {
    pub fn from_matrices(a: Matrix, b: Matrix, c: Matrix) -> Self {
        let d = a.nrows();
        CubicMinMax {
            a,
            b,
            c,
            meta: OperatorMeta {
                name: "cubic".into(),
                x_star: Some(Point::zeros(2 * d)),
                monotone: true,
                ..Default::default()
            },
        }
    }

    fn half(&self) -> usize {
        self.a.nrows()
    }
}

/// Random PD A, B, C with eigenvalues in [0.5, 1.5].
pub fn make_cubic_minmax(d: usize, seed: u64) -> Result<CubicMinMax> {
    if d == 0 {
        return Err(Error::config("problem.d", "d must be >= 1"));
    }
    let mut rng = Rng::new(seed).child("cubic");
    let draw = |rng: &mut Rng| {
        let q = random_orthogonal(d, rng);
        let lam: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
        from_spectrum(&q, &lam)
    };
    let a = draw(&mut rng);
    let b = draw(&mut rng);
    let c = draw(&mut rng);
    Ok(CubicMinMax::from_matrices(a, b, c))
}

fn scaled_block(m: &Matrix, w: &Point) -> (Point, f64) {
    let mw = m * w;
    let s = w.dot(&mw).max(0.0).sqrt();
    (mw, s)
}

fn block_jacobian(m: &Matrix, w: &Point) -> Matrix {
    let (mw, s) = scaled_block(m, w);
    if s == 0.0 {
        return Matrix::zeros(m.nrows(), m.ncols());
    }
    m * s + &mw * mw.transpose() / s
}

impl FiniteSumOperator for CubicMinMax {
    fn dim(&self) -> usize {
        2 * self.half()
    }
    fn n(&self) -> usize {
        1
    }
    fn component(&self, _i: usize, x: &Point) -> Point {
        let d = self.half();
        let w1 = x.rows(0, d).into_owned();
        let w2 = x.rows(d, d).into_owned();
        let (aw, sa) = scaled_block(&self.a, &w1);
        let (cw, sc) = scaled_block(&self.c, &w2);
        let top = aw * sa + &self.b * &w2;
        let bot = cw * sc - self.b.transpose() * &w1;
        let mut out = Point::zeros(2 * d);
        out.rows_mut(0, d).copy_from(&top);
        out.rows_mut(d, d).copy_from(&bot);
        out
    }
    fn meta(&self) -> &OperatorMeta {
        &self.meta
    }
    fn jacobian(&self, x: &Point) -> Option<Matrix> {
        let d = self.half();
        let w1 = x.rows(0, d).into_owned();
        let w2 = x.rows(d, d).into_owned();
        let mut j = Matrix::zeros(2 * d, 2 * d);
        j.view_mut((0, 0), (d, d)).copy_from(&block_jacobian(&self.a, &w1));
        j.view_mut((0, d), (d, d)).copy_from(&self.b);
        j.view_mut((d, 0), (d, d)).copy_from(&(-self.b.transpose()));
        j.view_mut((d, d), (d, d)).copy_from(&block_jacobian(&self.c, &w2));
        Some(j)
    }
}

/// F(u1, u2) = (sign(u1)|u1|^q + u2, sign(u2)|u2|^q − u1).
#[derive(Clone, Debug)]
pub struct SignPower {
    q: f64,
    meta: OperatorMeta,
}

/// Default exponent for [`make_sign_power_operator`].
pub const SIGN_POWER_Q: f64 = 2.0;

pub fn make_sign_power_operator(q: f64) -> Result<SignPower> {
    if !(q > 1.0) {
        return Err(Error::config("problem.q", "exponent must exceed 1"));
    }
    Ok(SignPower {
        q,
        meta: OperatorMeta {
            name: "sign_power".into(),
            x_star: Some(Point::zeros(2)),
            monotone: true,
            ..Default::default()
        },
    })
}

impl SignPower {
    pub fn exponent(&self) -> f64 {
        self.q
    }
}

fn spow(u: f64, q: f64) -> f64 {
    u.signum() * u.abs().powf(q)
}

impl FiniteSumOperator for SignPower {
    fn dim(&self) -> usize {
        2
    }
    fn n(&self) -> usize {
        1
    }
    fn component(&self, _i: usize, x: &Point) -> Point {
        Point::from_vec(vec![spow(x[0], self.q) + x[1], spow(x[1], self.q) - x[0]])
    }
    fn meta(&self) -> &OperatorMeta {
        &self.meta
    }
    fn jacobian(&self, x: &Point) -> Option<Matrix> {
        let q = self.q;
        Some(Matrix::from_row_slice(
            2,
            2,
            &[q * x[0].abs().powf(q - 1.0), 1.0, -1.0, q * x[1].abs().powf(q - 1.0)],
        ))
    }
}

/// F(x) = Q φ(Qᵀx) with φ_j(u) = μ u + s_j sinh(c_j u).
///
/// Strongly monotone with modulus μ + min s_j c_j and 1-symmetric
/// (L0, L1)-Lipschitz with L0 = μ + max s_j c_j, L1 = max c_j.
#[derive(Clone, Debug)]
pub struct SinhGradient {
    q: Matrix,
    mu0: f64,
    s: Vec<f64>,
    c: Vec<f64>,
    meta: OperatorMeta,
}

pub fn make_sinh_gradient(d: usize, seed: u64) -> Result<SinhGradient> {
    if d == 0 {
        return Err(Error::config("problem.d", "d must be >= 1"));
    }
    let mut rng = Rng::new(seed).child("sinh");
    let q = random_orthogonal(d, &mut rng);
    let mu0 = rng.random_range(0.05..0.2);
    let s: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..1.0)).collect();
    let c: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
    let sc = s.iter().zip(&c).map(|(a, b)| a * b);
    let max_sc = sc.clone().fold(0.0, f64::max);
    let min_sc = sc.fold(f64::INFINITY, f64::min);
    let l1 = c.iter().copied().fold(0.0, f64::max);
    let meta = OperatorMeta {
        name: "sinh_gradient".into(),
        x_star: Some(Point::zeros(d)),
        mu: Some(mu0 + min_sc),
        monotone: true,
        l0l1: Some(L0L1 { alpha: 1.0, l0: mu0 + max_sc, l1 }),
        ..Default::default()
    };
    Ok(SinhGradient { q, mu0, s, c, meta })
}

impl FiniteSumOperator for SinhGradient {
    fn dim(&self) -> usize {
        self.q.nrows()
    }
    fn n(&self) -> usize {
        1
    }
    fn component(&self, _i: usize, x: &Point) -> Point {
        let u = self.q.transpose() * x;
        let phi = Point::from_fn(u.len(), |j, _| self.mu0 * u[j] + self.s[j] * (self.c[j] * u[j]).sinh());
        &self.q * phi
    }
    fn meta(&self) -> &OperatorMeta {
        &self.meta
    }
    fn jacobian(&self, x: &Point) -> Option<Matrix> {
        let u = self.q.transpose() * x;
        let dg = Point::from_fn(u.len(), |j, _| self.mu0 + self.s[j] * self.c[j] * (self.c[j] * u[j]).cosh());
        Some(&self.q * Matrix::from_diagonal(&dg) * self.q.transpose())
    }
}
