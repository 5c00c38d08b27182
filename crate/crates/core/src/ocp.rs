//! The abstract hybrid optimal control problem.
//!
//! A problem is a smooth flow `x' = f(x, u)` on `[0, T]`, a family of
//! detection functions `psi_i` whose zero sets trigger autonomous jumps
//! `x+ = g_i(x-)`, and a Bolza objective `phi(x(T)) + int L(x, u) dt`. Every
//! derivative the solver needs is supplied analytically by the problem.
//!
//! Row vectors (`psi_x`, `L_x`, `phi_x`, `H_u`) are carried as column
//! [`DVector`]s; matrices follow the usual `rows = outputs` Jacobian layout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Identifier of a detection function / jump map pair.
pub type ManifoldId = usize;

/// A hybrid optimal control problem with autonomous state jumps.
///
/// Implementations must be immutable once built; all methods are pure.
pub trait HybridProblem: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Number of detection/jump pairs, at least one.
    fn num_manifolds(&self) -> usize;

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn dynamics_jac_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    fn dynamics_jac_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;

    fn jump(&self, x: &DVector<f64>, id: ManifoldId) -> DVector<f64>;
    fn jump_jacobian(&self, x: &DVector<f64>, id: ManifoldId) -> DMatrix<f64>;

    /// Detection function; positive away from the jump manifold.
    fn detection(&self, x: &DVector<f64>, id: ManifoldId) -> f64;
    fn detection_gradient(&self, x: &DVector<f64>, id: ManifoldId) -> DVector<f64>;

    fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64;
    fn running_cost_grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn running_cost_grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    fn terminal_cost(&self, x: &DVector<f64>) -> f64;
    fn terminal_cost_grad(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `argmin_{v in U} H(x, lambda, v)`. The admissible set lives here.
    fn hamiltonian_minimizer(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64>;

    /// `H_u = lambda^T f_u + L_u`.
    fn hamiltonian_grad_u(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DVector<f64> {
        self.dynamics_jac_u(x, u).tr_mul(lambda) + self.running_cost_grad_u(x, u)
    }

    /// `H_x^T = f_x^T lambda + L_x^T`.
    fn hamiltonian_grad_x(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DVector<f64> {
        self.dynamics_jac_x(x, u).tr_mul(lambda) + self.running_cost_grad_x(x, u)
    }

    /// Lipschitz constant of `f` in `u`, used by the collision-stability
    /// diagnostic only.
    fn lipschitz_f_u(&self) -> Option<f64> {
        None
    }

    /// Smallest `s > 0` with `psi_id(x + s f(x, u)) = 0`, or `None`.
    ///
    /// The default brackets a sign change on `[0, dt]` and bisects to
    /// `1e-12 * dt`; roots beyond `dt` are not reported. Problems with a
    /// closed-form root override this.
    fn collision_time(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        dt: f64,
        id: ManifoldId,
    ) -> Option<f64> {
        let f = self.dynamics(x, u);
        let psi_at = |s: f64| self.detection(&(x + &f * s), id);
        bisect_first_root(psi_at, dt)
    }
}

/// Scan `[0, dt]` for the first sign change of `psi` and bisect it.
pub(crate) fn bisect_first_root(psi: impl Fn(f64) -> f64, dt: f64) -> Option<f64> {
    const SCAN: usize = 16;
    let mut lo = 0.0;
    if psi(lo) <= 0.0 {
        return None;
    }
    for k in 1..=SCAN {
        let hi = dt * k as f64 / SCAN as f64;
        if psi(hi) <= 0.0 {
            let (mut a, mut b) = (lo, hi);
            while b - a > 1e-12 * dt {
                let mid = 0.5 * (a + b);
                if psi(mid) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return Some(0.5 * (a + b));
        }
        lo = hi;
    }
    None
}

/// `H(x, lambda, u) = lambda^T f(x, u) + L(x, u)`.
pub fn evaluate_hamiltonian<P: HybridProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    check_dim("state", p.state_dim(), x.len())?;
    check_dim("costate", p.state_dim(), lambda.len())?;
    check_dim("control", p.control_dim(), u.len())?;
    Ok(lambda.dot(&p.dynamics(x, u)) + p.running_cost(x, u))
}

/// Collision tendency `psi_x(x) . f(x, u)` for manifold `id`.
///
/// Only meaningful where the detection is in its smooth (approaching)
/// branch.
pub fn transversality<P: HybridProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    u: &DVector<f64>,
    id: ManifoldId,
) -> Result<f64> {
    check_dim("state", p.state_dim(), x.len())?;
    check_dim("control", p.control_dim(), u.len())?;
    Ok(p.detection_gradient(x, id).dot(&p.dynamics(x, u)))
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}

/// Piecewise-constant control on a uniform grid `t_n = n T / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    horizon: f64,
    values: Vec<DVector<f64>>,
}

impl ControlGrid {
    pub fn new(horizon: f64, values: Vec<DVector<f64>>) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if values.is_empty() {
            return Err(Error::Domain("control grid needs at least one step".into()));
        }
        let dim = values[0].len();
        if let Some(bad) = values.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                context: "control grid",
                expected: dim,
                got: bad.len(),
            });
        }
        Ok(ControlGrid { horizon, values })
    }

    /// `steps` copies of `value`.
    pub fn constant(horizon: f64, steps: usize, value: &[f64]) -> Result<Self> {
        Self::new(horizon, vec![DVector::from_column_slice(value); steps])
    }

    /// Sample `u(t)` at the left grid nodes.
    pub fn from_fn(horizon: f64, steps: usize, u: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let dt = horizon / steps as f64;
        Self::new(
            horizon,
            (0..steps)
                .map(|n| DVector::from_vec(u(n as f64 * dt)))
                .collect(),
        )
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.values.len() as f64
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.values
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// `u_n`, with `n` clamped into the grid.
    pub fn at_clamped(&self, n: isize) -> &DVector<f64> {
        let last = self.values.len() as isize - 1;
        &self.values[n.clamp(0, last) as usize]
    }

    pub fn max_abs_diff(&self, other: &ControlGrid) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for ControlGrid {
    type Output = DVector<f64>;
    fn index(&self, n: usize) -> &DVector<f64> {
        &self.values[n]
    }
}
