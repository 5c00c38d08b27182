//! Gradient descent on the fully discretized problem.
//!
//! The gradient of `J(u_0, ..., u_{N-1})` is obtained by a reverse pass
//! through the exact forward recursion, collision branch included. On a
//! collision step the sub-step `s(x_n, u_n)` is differentiated implicitly
//! through `psi(x_n + s f(x_n, u_n)) = 0`, and the residual's dependence on
//! `u_{n+1}` is propagated to that node.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forward::{estimate_collision_time, simulate, HybridTrajectory};
use crate::ocp::{ControlGrid, HybridProblem};

/// Relative distance of a predicted hit to `0` or `dt` below which a node is
/// reported as sitting on a branch boundary.
const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGradient {
    /// `dJ/du_n` for every node.
    pub gradient: Vec<DVector<f64>>,
    /// Steps whose collision branch toggles under an infinitesimal
    /// perturbation; their gradient is that of the current branch.
    pub boundary_nodes: Vec<usize>,
    pub cost: f64,
    pub trajectory: HybridTrajectory,
}

/// Exact gradient of the discrete objective with respect to every control.
pub fn discrete_gradient<P: HybridProblem + ?Sized>(
    p: &P,
    u: &ControlGrid,
    x0: &DVector<f64>,
) -> Result<DiscreteGradient> {
    let (traj, cost) = simulate(p, u, x0)?;
    let n_steps = u.steps();
    let dt = u.dt();
    let dim = p.state_dim();
    let eye = DMatrix::<f64>::identity(dim, dim);
    let mut grad = vec![DVector::zeros(u.dim()); n_steps];
    let mut boundary_nodes = Vec::new();
    let mut adj = p.terminal_cost_grad(traj.terminal());

    for n in (0..n_steps).rev() {
        let x_n = &traj.states[n];
        let u_n = &u[n];
        let f_n = p.dynamics(x_n, u_n);
        let fx_n = p.dynamics_jac_x(x_n, u_n);
        let fu_n = p.dynamics_jac_u(x_n, u_n);
        grad[n] += p.running_cost_grad_u(x_n, u_n) * dt;
        let running_x = p.running_cost_grad_x(x_n, u_n) * dt;

        match traj.collision_at(n) {
            None => {
                if let Some((s, _)) = estimate_collision_time(p, x_n, u_n, dt) {
                    if (s - dt).abs() <= BOUNDARY_TOL * dt {
                        boundary_nodes.push(n);
                    }
                }
                grad[n] += (&fu_n * dt).tr_mul(&adj);
                adj = (&eye + &fx_n * dt).tr_mul(&adj) + running_x;
            }
            Some(c) => {
                let s = c.substep;
                if s <= BOUNDARY_TOL * dt || (dt - s) <= BOUNDARY_TOL * dt {
                    boundary_nodes.push(n);
                }
                let next_index = (n + 1).min(n_steps - 1);
                let u_next = &u[next_index];
                let residual = dt - s;
                let f_plus = p.dynamics(&c.post_state, u_next);
                let fx_plus = p.dynamics_jac_x(&c.post_state, u_next);
                let fu_plus = p.dynamics_jac_u(&c.post_state, u_next);

                let adj_post = (&eye + &fx_plus * residual).tr_mul(&adj);
                let into_next = (&fu_plus * residual).tr_mul(&adj);
                let mut adj_s = -f_plus.dot(&adj);
                let adj_pre = p.jump_jacobian(&c.pre_state, c.manifold_id).tr_mul(&adj_post);
                adj_s += f_n.dot(&adj_pre);

                let psi_x = p.detection_gradient(&c.pre_state, c.manifold_id);
                let tendency = psi_x.dot(&f_n);
                if tendency == 0.0 {
                    return Err(Error::TransversalityLost {
                        step: n,
                        value: tendency,
                    });
                }
                // s enters through psi(x_n + s f_n) = 0.
                let total = &adj_pre - &psi_x * (adj_s / tendency);
                grad[n] += (&fu_n * s).tr_mul(&total);
                grad[next_index] += into_next;
                adj = (&eye + &fx_n * s).tr_mul(&total) + running_x;
            }
        }
    }
    boundary_nodes.reverse();
    if !boundary_nodes.is_empty() {
        log::warn!(
            "gradient taken on the current branch at {} boundary node(s): {:?}",
            boundary_nodes.len(),
            boundary_nodes
        );
    }
    Ok(DiscreteGradient {
        gradient: grad,
        boundary_nodes,
        cost,
        trajectory: traj,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdReport {
    pub iterations_recorded: Vec<usize>,
    pub costs: Vec<f64>,
    pub control: ControlGrid,
    pub trajectory: HybridTrajectory,
    pub cost: f64,
    pub iterations: usize,
}

/// Step size matched to the relaxed MSA update: for `L = eps |u|^2`,
/// `alpha / (2 eps dt)` makes one descent step move each node by the same
/// amount as one relaxed MSA step.
pub fn matched_learning_rate(alpha: f64, epsilon: f64, dt: f64) -> f64 {
    alpha / (2.0 * epsilon * dt)
}

/// Current state of a descent run, passed to the observer.
pub struct GdView<'a> {
    pub iteration: usize,
    pub control: &'a ControlGrid,
    pub trajectory: &'a HybridTrajectory,
    pub cost: f64,
}

pub fn gd_solve<P: HybridProblem + ?Sized>(
    p: &P,
    x0: &DVector<f64>,
    u0: ControlGrid,
    iters: usize,
    learning_rate: f64,
) -> Result<GdReport> {
    gd_solve_with_observer(p, x0, u0, iters, learning_rate, |_| {})
}

/// Fixed-step descent `u <- u - rate dJ/du` for `iters` updates.
pub fn gd_solve_with_observer<P, F>(
    p: &P,
    x0: &DVector<f64>,
    u0: ControlGrid,
    iters: usize,
    learning_rate: f64,
    mut observer: F,
) -> Result<GdReport>
where
    P: HybridProblem + ?Sized,
    F: FnMut(&GdView<'_>),
{
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::Domain(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    let mut u = u0;
    let mut recorded = Vec::with_capacity(iters + 1);
    let mut costs = Vec::with_capacity(iters + 1);
    let mut k = 0;
    loop {
        let g = discrete_gradient(p, &u, x0).map_err(|e| e.at_iteration(k))?;
        if !g.cost.is_finite() {
            return Err(Error::NonFinite {
                quantity: "cost",
                iteration: k,
            });
        }
        observer(&GdView {
            iteration: k,
            control: &u,
            trajectory: &g.trajectory,
            cost: g.cost,
        });
        recorded.push(k);
        costs.push(g.cost);
        if k >= iters {
            return Ok(GdReport {
                iterations_recorded: recorded,
                costs,
                control: u,
                trajectory: g.trajectory,
                cost: g.cost,
                iterations: k,
            });
        }
        for (v, d) in u.values_mut().iter_mut().zip(&g.gradient) {
            *v -= d * learning_rate;
        }
        if u.values().iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite {
                quantity: "control",
                iteration: k + 1,
            });
        }
        k += 1;
    }
}
