//! Testbed operators.

mod affine;
mod matrix_game;
mod nonlinear;
mod quadratic;
mod rls;
mod weak_minty;

pub use affine::AffineOperator;
pub use matrix_game::{
    bilinear_game_matrix, duality_gap, make_policeman_burglar, payoff_block, project_blocks, project_simplex,
};
pub use nonlinear::{
    make_cubic_minmax, make_global_forsaken, make_sign_power_operator, make_sinh_gradient, CubicMinMax,
    GlobalForsaken, SignPower, SinhGradient, SIGN_POWER_Q,
};
pub use quadratic::{
    game_matrix, make_federated_quadratic_game, make_linear_game, make_quadratic_game, QuadraticGameSpec,
};
pub use rls::{make_robust_least_squares, read_rls_csv, synthetic_rls_data, RlsData, RlsProblem};
pub use weak_minty::make_weak_minty_scalar;

use crate::operator::{FiniteSumOperator, Point};

/// Applies the feasible-set projection of constrained problems; identity otherwise.
pub fn constrain(op: &dyn FiniteSumOperator, x: Point) -> Point {
    match op.meta().simplex_blocks {
        Some(blocks) => project_blocks(&x, blocks),
        None => x,
    }
}
