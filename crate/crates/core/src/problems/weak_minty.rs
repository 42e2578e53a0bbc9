use super::affine::AffineOperator;
use crate::error::{Error, Result};
use crate::linalg::gaussian_vec;
use crate::operator::{Matrix, OperatorMeta, Point};
use crate::rng::Rng;

/// Components F_i(w1, w2) = (ζ_i w1 + ξ_i w2, −ξ_i w1 + ζ_i w2) with
/// mean(ξ) = √63 and mean(ζ) = −1.
pub fn make_weak_minty_scalar(n: usize, seed: u64) -> Result<AffineOperator> {
    if n < 2 {
        return Err(Error::config("problem.n", "weak Minty family needs n >= 2"));
    }
    let mut rng = Rng::new(seed).child("weak-minty");
    let mut xi = gaussian_vec(n, &mut rng);
    let mut zeta = gaussian_vec(n, &mut rng);
    xi.add_scalar_mut(63f64.sqrt() - xi.mean());
    zeta.add_scalar_mut(-1.0 - zeta.mean());
    let mats: Vec<Matrix> = (0..n)
        .map(|i| Matrix::from_row_slice(2, 2, &[zeta[i], xi[i], -xi[i], zeta[i]]))
        .collect();
    let lips = (0..n).map(|i| xi[i].hypot(zeta[i])).collect();
    let meta = OperatorMeta {
        name: "weak_minty".into(),
        x_star: Some(Point::zeros(2)),
        lipschitz: Some(8.0),
        component_lipschitz: Some(lips),
        rho: Some(1.0 / 32.0),
        ..Default::default()
    };
    Ok(AffineOperator::new(mats, vec![Point::zeros(2); n], meta))
}
