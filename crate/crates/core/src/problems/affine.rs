use crate::linalg::spectral_norm;
use crate::operator::{FiniteSumOperator, Matrix, OperatorMeta, Point};

/// Components F_i(x) = M_i x + b_i.
#[derive(Clone, Debug)]
pub struct AffineOperator {
    mats: Vec<Matrix>,
    offsets: Vec<Point>,
    mean_m: Matrix,
    mean_b: Point,
    meta: OperatorMeta,
}

impl AffineOperator {
    /// Builds the operator and fills in `lipschitz` and `component_lipschitz`
    /// from spectral norms when they are not already set.
    pub fn new(mats: Vec<Matrix>, offsets: Vec<Point>, mut meta: OperatorMeta) -> Self {
        assert!(!mats.is_empty(), "affine operator needs at least one component");
        assert_eq!(mats.len(), offsets.len());
        let d = offsets[0].len();
        let n = mats.len() as f64;
        let mut mean_m = Matrix::zeros(d, d);
        let mut mean_b = Point::zeros(d);
        for (m, b) in mats.iter().zip(&offsets) {
            assert_eq!(m.shape(), (d, d));
            mean_m += m;
            mean_b += b;
        }
        mean_m /= n;
        mean_b /= n;
        if meta.component_lipschitz.is_none() {
            meta.component_lipschitz = Some(mats.iter().map(spectral_norm).collect());
        }
        if meta.lipschitz.is_none() {
            meta.lipschitz = Some(spectral_norm(&mean_m));
        }
        AffineOperator { mats, offsets, mean_m, mean_b, meta }
    }

    pub fn mats(&self) -> &[Matrix] {
        &self.mats
    }

    pub fn offsets(&self) -> &[Point] {
        &self.offsets
    }

    pub fn mean_matrix(&self) -> &Matrix {
        &self.mean_m
    }

    pub fn mean_offset(&self) -> &Point {
        &self.mean_b
    }

    pub fn meta_mut(&mut self) -> &mut OperatorMeta {
        &mut self.meta
    }

    /// Solves M̄ x = −b̄; `None` when M̄ is singular.
    pub fn solve_root(&self) -> Option<Point> {
        self.mean_m.clone().lu().solve(&(-&self.mean_b))
    }
}

impl FiniteSumOperator for AffineOperator {
    fn dim(&self) -> usize {
        self.mean_b.len()
    }
    fn n(&self) -> usize {
        self.mats.len()
    }
    fn component(&self, i: usize, x: &Point) -> Point {
        &self.mats[i] * x + &self.offsets[i]
    }
    fn meta(&self) -> &OperatorMeta {
        &self.meta
    }
    fn mean(&self, x: &Point) -> Point {
        &self.mean_m * x + &self.mean_b
    }
    fn jacobian(&self, _x: &Point) -> Option<Matrix> {
        Some(self.mean_m.clone())
    }
}
