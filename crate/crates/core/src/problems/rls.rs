use std::path::Path;

use rand_distr::{Distribution, Normal};

use super::affine::AffineOperator;
use crate::error::{Error, Result};
use crate::linalg::gaussian_mat;
use crate::operator::{Matrix, OperatorMeta, Point};
use crate::rng::Rng;

/// Design matrix and observed targets for robust least squares.
#[derive(Clone, Debug)]
pub struct RlsData {
    pub a: Matrix,
    pub y0: Point,
}

/// A ~ N(0,1), β0 ~ N(0, 0.1), ε ~ N(0, 0.01), y0 = Aβ0 + ε.
pub fn synthetic_rls_data(r: usize, s: usize, seed: u64) -> RlsData {
    let mut rng = Rng::new(seed).child("rls");
    let a = gaussian_mat(r, s, &mut rng);
    let nb = Normal::new(0.0, 0.1f64.sqrt()).unwrap();
    let ne = Normal::new(0.0, 0.01f64.sqrt()).unwrap();
    let beta0 = Point::from_fn(s, |_, _| nb.sample(&mut rng));
    let eps = Point::from_fn(r, |_, _| ne.sample(&mut rng));
    RlsData { y0: &a * beta0 + eps, a }
}

/// Reads a CSV with a header row; the last column is y0, the rest form A.
pub fn read_rls_csv(path: &Path) -> Result<RlsData> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::config(format!("csv row {}", k + 1), format!("bad value `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() < 2 {
            return Err(Error::config(format!("csv row {}", k + 1), "need at least two columns"));
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::config(format!("csv row {}", k + 1), "ragged row"));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::config("csv", "no data rows"));
    }
    let r = rows.len();
    let s = rows[0].len() - 1;
    let a = Matrix::from_fn(r, s, |i, j| rows[i][j]);
    let y0 = Point::from_fn(r, |i, _| rows[i][s]);
    Ok(RlsData { a, y0 })
}

/// Robust least squares split across nodes by rows of A.
#[derive(Clone, Debug)]
pub struct RlsProblem {
    /// Whole problem as one finite sum over rows; its mean is ∇G.
    pub global: AffineOperator,
    /// One finite sum per node; the average of node means is ∇G.
    pub nodes: Vec<AffineOperator>,
}

/// Operator of the row term (a_kᵀβ − y_k)² − λ(y_k − y0_k)², scaled by `w`.
fn row_component(data: &RlsData, k: usize, lambda: f64, w: f64) -> (Matrix, Point) {
    let (r, s) = data.a.shape();
    let d = s + r;
    let ak = data.a.row(k).transpose();
    let mut m = Matrix::zeros(d, d);
    m.view_mut((0, 0), (s, s)).copy_from(&(&ak * ak.transpose() * 2.0));
    for j in 0..s {
        m[(j, s + k)] = -2.0 * ak[j];
        m[(s + k, j)] = 2.0 * ak[j];
    }
    m[(s + k, s + k)] = 2.0 * (lambda - 1.0);
    let mut b = Point::zeros(d);
    b[s + k] = -2.0 * lambda * data.y0[k];
    (m * w, b * w)
}

pub fn make_robust_least_squares(data: &RlsData, lambda: f64, n_nodes: usize) -> Result<RlsProblem> {
    if !(lambda > 1.0) {
        return Err(Error::config("problem.lambda", "lambda must exceed 1 for strong monotonicity"));
    }
    let r = data.a.nrows();
    if data.y0.len() != r {
        return Err(Error::DimensionMismatch { expected: r, got: data.y0.len() });
    }
    if n_nodes == 0 || n_nodes > r {
        return Err(Error::config("problem.n_nodes", "need 1 <= n_nodes <= rows"));
    }
    let ata = data.a.transpose() * &data.a;
    let lam_min = nalgebra::SymmetricEigen::new(ata).eigenvalues.min();
    let mu = (2.0 * lam_min).min(2.0 * (lambda - 1.0));
    let meta = |name: &str| OperatorMeta {
        name: name.into(),
        mu: Some(mu),
        monotone: true,
        ..Default::default()
    };

    let (gm, gb): (Vec<_>, Vec<_>) = (0..r).map(|k| row_component(data, k, lambda, r as f64)).unzip();
    let mut global = AffineOperator::new(gm, gb, meta("robust_least_squares"));
    let x_star = global.solve_root();
    global.meta_mut().x_star = x_star.clone();

    let m = r / n_nodes;
    let mut nodes = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let lo = i * m;
        let hi = if i + 1 == n_nodes { r } else { lo + m };
        let w = (n_nodes * (hi - lo)) as f64;
        let (nm, nb): (Vec<_>, Vec<_>) = (lo..hi).map(|k| row_component(data, k, lambda, w)).unzip();
        let mut node = AffineOperator::new(nm, nb, meta("robust_least_squares_node"));
        node.meta_mut().x_star = node.solve_root();
        nodes.push(node);
    }
    Ok(RlsProblem { global, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_vec, sym_min_eig};
    use crate::operator::FiniteSumOperator;

    fn grad(data: &RlsData, lambda: f64, x: &Point) -> Point {
        let s = data.a.ncols();
        let r = data.a.nrows();
        let beta = x.rows(0, s).into_owned();
        let y = x.rows(s, r).into_owned();
        let res = &data.a * &beta - &y;
        let gb = data.a.transpose() * &res * 2.0;
        let gy = &res * 2.0 + (&y - &data.y0) * (2.0 * lambda);
        let mut out = Point::zeros(s + r);
        out.rows_mut(0, s).copy_from(&gb);
        out.rows_mut(s, r).copy_from(&gy);
        out
    }

    #[test]
    fn decomposition_matches_gradient() {
        let data = synthetic_rls_data(12, 3, 5);
        let p = make_robust_least_squares(&data, 50.0, 5).unwrap();
        let mut rng = Rng::new(2);
        for _ in 0..10 {
            let x = gaussian_vec(15, &mut rng);
            let g = grad(&data, 50.0, &x);
            assert!((p.global.mean(&x) - &g).norm() < 1e-10 * (1.0 + g.norm()));
            let mut avg = Point::zeros(15);
            for node in &p.nodes {
                avg += node.mean(&x);
            }
            avg /= p.nodes.len() as f64;
            assert!((avg - &g).norm() < 1e-10 * (1.0 + g.norm()));
        }
    }

    #[test]
    fn scalar_case_jacobian() {
        let data = RlsData { a: Matrix::from_element(1, 1, 1.0), y0: Point::zeros(1) };
        let p = make_robust_least_squares(&data, 2.0, 1).unwrap();
        let j = p.global.mean_matrix();
        let want = Matrix::from_row_slice(2, 2, &[2.0, -2.0, 2.0, 2.0]);
        assert!((j - want).norm() < 1e-14);
        assert!(sym_min_eig(j) >= p.global.meta().mu.unwrap() - 1e-12);
    }

    #[test]
    fn strong_monotonicity_constant() {
        let data = synthetic_rls_data(40, 5, 1);
        let p = make_robust_least_squares(&data, 50.0, 4).unwrap();
        assert!(sym_min_eig(p.global.mean_matrix()) >= p.global.meta().mu.unwrap() - 1e-8);
        let xs = p.global.meta().x_star.clone().unwrap();
        assert!(p.global.mean(&xs).norm() < 1e-8);
    }

    #[test]
    fn lambda_must_exceed_one() {
        let data = synthetic_rls_data(4, 2, 0);
        assert!(make_robust_least_squares(&data, 1.0, 2).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("exgrad-rls-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.csv");
        std::fs::write(&path, "x1,x2,y\n1,2,3\n4,5,6\n").unwrap();
        let d = read_rls_csv(&path).unwrap();
        assert_eq!(d.a, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 5.0]));
        assert_eq!(d.y0, Point::from_vec(vec![3.0, 6.0]));
        std::fs::write(&path, "x,y\n1,nan\n").unwrap();
        assert!(read_rls_csv(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
