use rand_distr::{Distribution, StandardNormal};

use super::affine::AffineOperator;
use crate::error::{Error, Result};
use crate::operator::{Matrix, OperatorMeta, Point};
use crate::rng::Rng;

/// Policemen–burglar matrix game with payoff A_i(r, s) = w_r (1 − exp(−0.8|r − s|)).
pub fn make_policeman_burglar(n: usize, d: usize, seed: u64) -> Result<AffineOperator> {
    if n == 0 || d == 0 {
        return Err(Error::config("problem", "n and d must be >= 1"));
    }
    let mut rng = Rng::new(seed).child("policeman-burglar");
    let mut mats = Vec::with_capacity(n);
    for _ in 0..n {
        let w: Vec<f64> = (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z.abs()
            })
            .collect();
        let a = Matrix::from_fn(d, d, |r, s| w[r] * (1.0 - (-0.8 * (r as f64 - s as f64).abs()).exp()));
        mats.push(bilinear_game_matrix(&a));
    }
    let meta = OperatorMeta {
        name: "policeman_burglar".into(),
        monotone: true,
        simplex_blocks: Some((d, d)),
        ..Default::default()
    };
    Ok(AffineOperator::new(mats, vec![Point::zeros(2 * d); n], meta))
}

/// [[0, A], [−Aᵀ, 0]].
pub fn bilinear_game_matrix(a: &Matrix) -> Matrix {
    let (r, c) = a.shape();
    let mut m = Matrix::zeros(r + c, r + c);
    m.view_mut((0, r), (r, c)).copy_from(a);
    m.view_mut((r, 0), (c, r)).copy_from(&(-a.transpose()));
    m
}

/// Recovers the payoff block A from a bilinear game operator matrix.
pub fn payoff_block(m: &Matrix, d1: usize, d2: usize) -> Matrix {
    m.view((0, d1), (d1, d2)).into_owned()
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(x: &Point) -> Point {
    let n = x.len();
    if n == 0 {
        return x.clone();
    }
    let mut u: Vec<f64> = x.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        css += uj;
        let t = (css - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            theta = t;
        }
    }
    x.map(|v| (v - theta).max(0.0))
}

/// Projects both blocks of a stacked point onto their simplices.
pub fn project_blocks(x: &Point, (d1, d2): (usize, usize)) -> Point {
    let p1 = project_simplex(&x.rows(0, d1).into_owned());
    let p2 = project_simplex(&x.rows(d1, d2).into_owned());
    let mut out = Point::zeros(d1 + d2);
    out.rows_mut(0, d1).copy_from(&p1);
    out.rows_mut(d1, d2).copy_from(&p2);
    out
}

fn on_simplex(x: &Point) -> bool {
    x.iter().all(|v| *v >= -1e-9) && (x.sum() - 1.0).abs() <= 1e-9
}

/// max_j (x1ᵀA)_j − min_i (A x2)_i.
pub fn duality_gap(a: &Matrix, x1: &Point, x2: &Point) -> Result<f64> {
    if x1.len() != a.nrows() || x2.len() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: x1.len() });
    }
    if !on_simplex(x1) || !on_simplex(x2) {
        return Err(Error::Contract("duality gap needs points on the simplex".into()));
    }
    let row = a.transpose() * x1;
    let col = a * x2;
    Ok(row.max() - col.min())
}
