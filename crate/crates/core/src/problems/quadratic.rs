use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::affine::AffineOperator;
use crate::error::{Error, Result};
use crate::linalg::{from_spectrum, gaussian_vec, random_orthogonal};
use crate::operator::{Matrix, OperatorMeta, Point};
use crate::rng::Rng;

/// Random quadratic min-max game
/// ½ w1ᵀA_i w1 + w1ᵀB_i w2 − ½ w2ᵀC_i w2 + a_iᵀw1 − c_iᵀw2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticGameSpec {
    pub n: usize,
    /// Block dimension; the iterate has dimension `2 * d`.
    pub d: usize,
    pub eig_a: (f64, f64),
    pub eig_b: (f64, f64),
    pub eig_c: (f64, f64),
    #[serde(default)]
    pub interpolated: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for QuadraticGameSpec {
    fn default() -> Self {
        QuadraticGameSpec {
            n: 100,
            d: 30,
            eig_a: (0.1, 1.0),
            eig_b: (0.0, 1.0),
            eig_c: (0.1, 1.0),
            interpolated: false,
            seed: 0,
        }
    }
}

impl QuadraticGameSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::config("problem.n", "n and d must be positive"));
        }
        for (name, (lo, hi)) in [("eig_a", self.eig_a), ("eig_b", self.eig_b), ("eig_c", self.eig_c)] {
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::config(format!("problem.{name}"), "need 0 <= lo <= hi"));
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn spectrum(d: usize, iv: (f64, f64), rng: &mut Rng) -> Vec<f64> {
    (0..d).map(|_| uniform(rng, iv)).collect()
}

fn sym_block(d: usize, iv: (f64, f64), rng: &mut Rng) -> Matrix {
    let q = random_orthogonal(d, rng);
    let lam = spectrum(d, iv, rng);
    from_spectrum(&q, &lam)
}

fn coupling_block(d: usize, iv: (f64, f64), rng: &mut Rng) -> Matrix {
    let u = random_orthogonal(d, rng);
    let v = random_orthogonal(d, rng);
    let s = Point::from_vec(spectrum(d, iv, rng));
    u * Matrix::from_diagonal(&s) * v.transpose()
}

/// Block operator matrix [[A, B], [−Bᵀ, C]].
pub fn game_matrix(a: &Matrix, b: &Matrix, c: &Matrix) -> Matrix {
    let d = a.nrows();
    let mut m = Matrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(a);
    m.view_mut((0, d), (d, d)).copy_from(b);
    m.view_mut((d, 0), (d, d)).copy_from(&(-b.transpose()));
    m.view_mut((d, d), (d, d)).copy_from(c);
    m
}

pub fn make_quadratic_game(spec: &QuadraticGameSpec) -> Result<AffineOperator> {
    spec.validate()?;
    let d = spec.d;
    let mut rng = Rng::new(spec.seed).child("quadratic-game");
    let x_star_drawn = gaussian_vec(2 * d, &mut rng);
    let mut mats = Vec::with_capacity(spec.n);
    let mut offsets = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let a = sym_block(d, spec.eig_a, &mut rng);
        let b = coupling_block(d, spec.eig_b, &mut rng);
        let c = sym_block(d, spec.eig_c, &mut rng);
        let m = game_matrix(&a, &b, &c);
        let off = if spec.interpolated {
            -(&m * &x_star_drawn)
        } else {
            gaussian_vec(2 * d, &mut rng)
        };
        mats.push(m);
        offsets.push(off);
    }
    let meta = OperatorMeta {
        name: "quadratic_game".into(),
        mu: Some(spec.eig_a.0.min(spec.eig_c.0)),
        monotone: true,
        ..Default::default()
    };
    let mut op = AffineOperator::new(mats, offsets, meta);
    let x_star = if spec.interpolated { Some(x_star_drawn) } else { op.solve_root() };
    op.meta_mut().x_star = x_star;
    Ok(op)
}

/// Heterogeneous federated quadratic game: one independently drawn
/// finite-sum game per client, each with `m` components.
pub fn make_federated_quadratic_game(
    n_clients: usize,
    m: usize,
    d: usize,
    eig: (f64, f64),
    eig_b: (f64, f64),
    seed: u64,
) -> Result<Vec<AffineOperator>> {
    let root = Rng::new(seed);
    (0..n_clients)
        .map(|i| {
            let spec = QuadraticGameSpec {
                n: m,
                d,
                eig_a: eig,
                eig_b,
                eig_c: eig,
                interpolated: false,
                seed: root.child_indexed("client", i as u64).seed(),
            };
            make_quadratic_game(&spec)
        })
        .collect()
}

/// F(w1, w2) = (w1 + w2, w2 − w1), the operator of ½w1² + w1w2 − ½w2².
pub fn make_linear_game() -> AffineOperator {
    let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]);
    let meta = OperatorMeta {
        name: "linear_game".into(),
        x_star: Some(Point::zeros(2)),
        mu: Some(1.0),
        monotone: true,
        l0l1: Some(crate::operator::L0L1 { alpha: 1.0, l0: 2f64.sqrt(), l1: 0.0 }),
        ..Default::default()
    };
    AffineOperator::new(vec![m], vec![Point::zeros(2)], meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::FiniteSumOperator;
    use nalgebra::SymmetricEigen;

    fn small(interp: bool) -> QuadraticGameSpec {
        QuadraticGameSpec { n: 5, d: 4, interpolated: interp, seed: 11, ..Default::default() }
    }

    #[test]
    fn interpolated_components_vanish() {
        let op = make_quadratic_game(&small(true)).unwrap();
        let xs = op.meta().x_star.clone().unwrap();
        for i in 0..op.n() {
            assert!(op.component(i, &xs).norm() <= 1e-10);
        }
    }

    #[test]
    fn root_of_mean_system() {
        let op = make_quadratic_game(&small(false)).unwrap();
        let xs = op.meta().x_star.clone().unwrap();
        assert!(op.mean(&xs).norm() <= 1e-10);
    }

    #[test]
    fn spectra_inside_intervals() {
        let spec = small(false);
        let op = make_quadratic_game(&spec).unwrap();
        let d = spec.d;
        for m in op.mats() {
            let a = m.view((0, 0), (d, d)).into_owned();
            let c = m.view((d, d), (d, d)).into_owned();
            for blk in [a, c] {
                for e in SymmetricEigen::new(blk).eigenvalues.iter() {
                    assert!(*e >= 0.1 - 1e-10 && *e <= 1.0 + 1e-10);
                }
            }
            let b = m.view((0, d), (d, d)).into_owned();
            for s in b.singular_values().iter() {
                assert!(*s >= -1e-10 && *s <= 1.0 + 1e-10);
            }
        }
    }

    #[test]
    fn mean_equals_component_average() {
        let op = make_quadratic_game(&small(false)).unwrap();
        let x = Point::from_fn(8, |i, _| (i as f64).sin());
        let mut acc = Point::zeros(8);
        for i in 0..op.n() {
            acc += op.component(i, &x);
        }
        acc /= op.n() as f64;
        assert!((acc - op.mean(&x)).norm() < 1e-12);
    }

    #[test]
    fn bad_interval_rejected() {
        let mut s = small(false);
        s.eig_a = (0.5, 0.1);
        assert!(make_quadratic_game(&s).is_err());
    }

    #[test]
    fn linear_game_norm() {
        let op = make_linear_game();
        assert!((op.meta().lipschitz.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }
}
