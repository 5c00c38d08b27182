//! A one-dimensional bouncing point used by the generic unit tests.

use nalgebra::{DMatrix, DVector};

use crate::ocp::{HybridProblem, ManifoldId};

/// `x = [p, v]`, `p' = v`, `v' = u`; a wall at `p = 1` reflects `v` with
/// restitution `e`. `L = w u^2`, `phi = p^2`. Collision times come from the
/// default bisection.
pub(crate) struct Bouncer {
    pub e: f64,
    pub w: f64,
}

impl Default for Bouncer {
    fn default() -> Self {
        Bouncer { e: 1.0, w: 0.1 }
    }
}

impl HybridProblem for Bouncer {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn num_manifolds(&self) -> usize {
        1
    }
    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[1], u[0]])
    }
    fn dynamics_jac_x(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }
    fn dynamics_jac_u(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0])
    }
    fn jump(&self, x: &DVector<f64>, _id: ManifoldId) -> DVector<f64> {
        DVector::from_vec(vec![x[0], -self.e * x[1]])
    }
    fn jump_jacobian(&self, _x: &DVector<f64>, _id: ManifoldId) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -self.e])
    }
    fn detection(&self, x: &DVector<f64>, _id: ManifoldId) -> f64 {
        if x[1] > 0.0 {
            1.0 - x[0]
        } else {
            1.0
        }
    }
    fn detection_gradient(&self, _x: &DVector<f64>, _id: ManifoldId) -> DVector<f64> {
        DVector::from_vec(vec![-1.0, 0.0])
    }
    fn running_cost(&self, _x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.w * u[0] * u[0]
    }
    fn running_cost_grad_x(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn running_cost_grad_u(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![2.0 * self.w * u[0]])
    }
    fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        x[0] * x[0]
    }
    fn terminal_cost_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![2.0 * x[0], 0.0])
    }
    fn hamiltonian_minimizer(&self, _x: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![-lambda[1] / (2.0 * self.w)])
    }
}

pub(crate) fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
