//! Relaxed method of successive approximations.
//!
//! Each iteration simulates the hybrid dynamics under the current control,
//! integrates the costate backwards through the recorded jumps, and moves
//! the control a fraction `alpha` of the way towards the pointwise
//! Hamiltonian minimizer. `alpha = 1` is the plain (vanilla) scheme.

use nalgebra::DVector;

use crate::backward::{
    integrate_backward, locate_in_window, resolve_jump_controls, CostateGrid, DEFAULT_TAU,
};
use crate::error::{Error, Result};
use crate::forward::{simulate, HybridTrajectory};
use crate::ocp::{transversality, ControlGrid, HybridProblem};

/// When to stop iterating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Discrete `L2` norm of `H_u` below `delta`.
    HamiltonianGradient,
    /// `|J_k - J_{k - window}| < tol`; used for non-smooth running costs.
    CostStagnation { tol: f64, window: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub alpha: f64,
    pub delta: f64,
    pub tau: f64,
    pub max_iters: usize,
    pub record_every: usize,
    pub stop: StopRule,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            alpha: 0.01,
            delta: 1e-3,
            tau: DEFAULT_TAU,
            max_iters: 50_000,
            record_every: 1,
            stop: StopRule::HamiltonianGradient,
        }
    }
}

impl SolverParams {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Domain(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Domain(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if self.record_every == 0 {
            return Err(Error::Domain("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Stable-collision diagnostics for one recorded collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionStability {
    pub collision_index: usize,
    /// Collision tendency `psi_x f` just before the jump.
    pub v_minus: f64,
    /// `max_n |u(gamma-) - u_n|`.
    pub max_jump: f64,
    /// `-v_minus - B_{f,u} M_J`; positive means the stable-collision
    /// condition holds with `K = -v_minus`.
    pub margin: f64,
}

impl CollisionStability {
    pub fn is_stable(&self) -> bool {
        self.margin > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Iteration numbers of the recorded series entries.
    pub iterations_recorded: Vec<usize>,
    pub costs: Vec<f64>,
    pub hu_norms: Vec<f64>,
    pub control: ControlGrid,
    pub trajectory: HybridTrajectory,
    pub costate: CostateGrid,
    /// Cost of the returned control.
    pub cost: f64,
    /// Number of control updates performed.
    pub iterations: usize,
    pub converged: bool,
    pub stability: Vec<CollisionStability>,
}

/// What an observer sees at every iteration, before the control update.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub control: &'a ControlGrid,
    pub trajectory: &'a HybridTrajectory,
    pub costate: &'a CostateGrid,
    pub cost: f64,
    pub hu_norm: f64,
}

/// Pointwise minimizer pulled back by `alpha`:
/// `u_n <- (1 - alpha) u_n + alpha argmin_v H(x_n, lambda_{n+1}, v)`.
pub fn control_update<P: HybridProblem + ?Sized>(
    p: &P,
    traj: &HybridTrajectory,
    costate: &CostateGrid,
    u: &ControlGrid,
    alpha: f64,
) -> ControlGrid {
    let mut next = u.clone();
    for (n, v) in next.values_mut().iter_mut().enumerate() {
        let target = p.hamiltonian_minimizer(&traj.states[n], costate.at(n + 1));
        *v = &*v * (1.0 - alpha) + target * alpha;
    }
    next
}

/// `H_u(x_n, lambda_{n+1}, u_n)` for every node.
pub fn hamiltonian_gradients<P: HybridProblem + ?Sized>(
    p: &P,
    traj: &HybridTrajectory,
    costate: &CostateGrid,
    u: &ControlGrid,
) -> Vec<DVector<f64>> {
    (0..u.steps())
        .map(|n| p.hamiltonian_grad_u(&traj.states[n], costate.at(n + 1), &u[n]))
        .collect()
}

/// `sqrt(sum_n |H_u,n|^2 dt)`.
pub fn hu_norm<P: HybridProblem + ?Sized>(
    p: &P,
    traj: &HybridTrajectory,
    costate: &CostateGrid,
    u: &ControlGrid,
) -> f64 {
    let dt = u.dt();
    hamiltonian_gradients(p, traj, costate, u)
        .iter()
        .map(|g| g.norm_squared() * dt)
        .sum::<f64>()
        .sqrt()
}

pub fn solve<P: HybridProblem + ?Sized>(
    p: &P,
    x0: &DVector<f64>,
    u0: ControlGrid,
    params: &SolverParams,
) -> Result<SolveReport> {
    solve_with_observer(p, x0, u0, params, |_| {})
}

/// [`solve`] with a callback invoked at every iteration.
pub fn solve_with_observer<P, F>(
    p: &P,
    x0: &DVector<f64>,
    u0: ControlGrid,
    params: &SolverParams,
    mut observer: F,
) -> Result<SolveReport>
where
    P: HybridProblem + ?Sized,
    F: FnMut(&IterationView<'_>),
{
    params.validate()?;
    let mut u = u0;
    let mut recorded = Vec::new();
    let mut costs = Vec::new();
    let mut hu_norms = Vec::new();
    let mut cost_history: Vec<f64> = Vec::new();
    let mut last_collisions = None;
    let mut k = 0;
    loop {
        let (traj, cost) = simulate(p, &u, x0).map_err(|e| e.at_iteration(k))?;
        let costate = integrate_backward(p, &traj, &u, params.tau).map_err(|e| e.at_iteration(k))?;
        let hu = hu_norm(p, &traj, &costate, &u);
        if !cost.is_finite() {
            return Err(Error::NonFinite {
                quantity: "cost",
                iteration: k,
            });
        }
        if !hu.is_finite() {
            return Err(Error::NonFinite {
                quantity: "H_u norm",
                iteration: k,
            });
        }
        if last_collisions != Some(traj.collisions.len()) {
            if let Some(prev) = last_collisions {
                log::debug!(
                    "iteration {k}: collision count {prev} -> {}",
                    traj.collisions.len()
                );
            }
            last_collisions = Some(traj.collisions.len());
        }
        observer(&IterationView {
            iteration: k,
            control: &u,
            trajectory: &traj,
            costate: &costate,
            cost,
            hu_norm: hu,
        });
        cost_history.push(cost);

        let converged = match params.stop {
            StopRule::HamiltonianGradient => hu < params.delta,
            StopRule::CostStagnation { tol, window } => {
                k >= window && (cost - cost_history[k - window]).abs() < tol
            }
        };
        let last = converged || k >= params.max_iters;
        if k % params.record_every == 0 || last {
            recorded.push(k);
            costs.push(cost);
            hu_norms.push(hu);
        }
        if last {
            let stability = stability_margin(p, &traj, &u, params.tau);
            return Ok(SolveReport {
                iterations_recorded: recorded,
                costs,
                hu_norms,
                control: u,
                trajectory: traj,
                costate,
                cost,
                iterations: k,
                converged,
                stability,
            });
        }
        u = control_update(p, &traj, &costate, &u, params.alpha);
        k += 1;
    }
}

/// A control grid together with the index `b` of its breakpoint: the jump
/// sits between `u_b` and `u_{b+1}`, so the breakpoint time is `t_{b+1}`.
#[derive(Debug, Clone, Copy)]
pub struct BrokenControl<'a> {
    pub control: &'a ControlGrid,
    pub breakpoint: usize,
}

impl<'a> BrokenControl<'a> {
    /// Breakpoint at the steepest adjacent difference over the whole grid.
    pub fn detect(control: &'a ControlGrid) -> Self {
        let n = control.steps();
        BrokenControl {
            control,
            breakpoint: locate_in_window(control, 0, n + 1),
        }
    }

    fn breakpoint_time(&self) -> f64 {
        (self.breakpoint + 1) as f64 * self.control.dt()
    }
}

/// `max(sup_{t < min beta} |u1 - u2|, sup_{t >= max beta} |u1 - u2|,
/// |beta1 - beta2|)` over the shared grid nodes.
pub fn semimetric(a: BrokenControl<'_>, b: BrokenControl<'_>) -> Result<f64> {
    if a.control.steps() != b.control.steps() {
        return Err(Error::DimensionMismatch {
            context: "semimetric grids",
            expected: a.control.steps(),
            got: b.control.steps(),
        });
    }
    let lo = a.breakpoint.min(b.breakpoint);
    let hi = a.breakpoint.max(b.breakpoint);
    let diff = |n: usize| (&a.control[n] - &b.control[n]).norm();
    let before = (0..=lo).map(diff).fold(0.0, f64::max);
    let after = (hi + 1..a.control.steps()).map(diff).fold(0.0, f64::max);
    let shift = (a.breakpoint_time() - b.breakpoint_time()).abs();
    Ok(before.max(after).max(shift))
}

/// Stable-collision margin `-psi_x f - B_{f,u} M_J(u)` at every collision.
///
/// Empty when the problem supplies no Lipschitz constant.
pub fn stability_margin<P: HybridProblem + ?Sized>(
    p: &P,
    traj: &HybridTrajectory,
    u: &ControlGrid,
    tau: f64,
) -> Vec<CollisionStability> {
    let Some(lip) = p.lipschitz_f_u() else {
        return Vec::new();
    };
    traj.collisions
        .iter()
        .map(|c| {
            let c_star = crate::backward::locate_discontinuity(u, c.index, tau);
            let controls = resolve_jump_controls(u, c_star);
            let v_minus = transversality(p, &c.pre_state, &controls.u_minus, c.manifold_id)
                .unwrap_or(f64::NAN);
            let max_jump = u
                .values()
                .iter()
                .map(|v| (&controls.u_minus - v).norm())
                .fold(0.0, f64::max);
            CollisionStability {
                collision_index: c.index,
                v_minus,
                max_jump,
                margin: -v_minus - lip * max_jump,
            }
        })
        .collect()
}
