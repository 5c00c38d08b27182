//! Forward Euler with collision-time insertion.
//!
//! At each step the predicted hit time `s_n` of every detection is computed
//! along the Euler ray `x_n + s f(x_n, u_n)`. When the earliest one lands
//! strictly inside the step, an intermediate node is inserted at `t_n + s_n`,
//! the jump map is applied there, and the residual `dt - s_n` is integrated
//! with the next control value.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::ocp::{check_dim, ControlGrid, HybridProblem, ManifoldId};

/// One inserted collision sub-step.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionRecord {
    /// Grid step `c` containing the collision.
    pub index: usize,
    /// Offset `s_c` in `[0, dt)` from `t_c`.
    pub substep: f64,
    pub pre_state: DVector<f64>,
    pub post_state: DVector<f64>,
    pub manifold_id: ManifoldId,
}

impl CollisionRecord {
    /// Absolute collision time `t_c + s_c`.
    pub fn time(&self, dt: f64) -> f64 {
        self.index as f64 * dt + self.substep
    }
}

/// States `x_0..x_N` and the collisions inserted between them.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory {
    pub dt: f64,
    pub states: Vec<DVector<f64>>,
    pub collisions: Vec<CollisionRecord>,
}

impl HybridTrajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least x_0")
    }

    pub fn collision_at(&self, n: usize) -> Option<&CollisionRecord> {
        self.collisions
            .binary_search_by_key(&n, |c| c.index)
            .ok()
            .map(|k| &self.collisions[k])
    }

    pub fn collision_times(&self) -> Vec<f64> {
        self.collisions.iter().map(|c| c.time(self.dt)).collect()
    }

    pub fn manifold_sequence(&self) -> Vec<ManifoldId> {
        self.collisions.iter().map(|c| c.manifold_id).collect()
    }
}

/// Collision payload of a single step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCollision {
    pub substep: f64,
    pub pre_state: DVector<f64>,
    pub post_state: DVector<f64>,
    pub manifold_id: ManifoldId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: DVector<f64>,
    pub collision: Option<StepCollision>,
}

/// Earliest predicted hit over every detection, `None` when no detection has
/// a root. A returned `s` may exceed `dt`; callers act only on `s < dt`.
pub fn estimate_collision_time<P: HybridProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Option<(f64, ManifoldId)> {
    (0..p.num_manifolds())
        .filter_map(|id| p.collision_time(x, u, dt, id).map(|s| (s, id)))
        .filter(|(s, _)| *s > 0.0 && s.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
}

/// One step of the hybrid forward Euler scheme.
///
/// `u_next` plays the role of the post-collision control on the residual of
/// a collision step. `step` is only used to label errors.
pub fn step_forward<P: HybridProblem + ?Sized>(
    p: &P,
    x_n: &DVector<f64>,
    u_n: &DVector<f64>,
    u_next: &DVector<f64>,
    dt: f64,
    step: usize,
) -> Result<StepOutcome> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("step size must be positive, got {dt}")));
    }
    let f_n = p.dynamics(x_n, u_n);
    match estimate_collision_time(p, x_n, u_n, dt) {
        Some((s, id)) if s < dt => {
            let pre = x_n + &f_n * s;
            let post = p.jump(&pre, id);
            let residual = dt - s;
            if let Some((s2, id2)) = estimate_collision_time(p, &post, u_next, residual) {
                if s2 < residual {
                    return Err(Error::IsolationViolation {
                        step,
                        first: id,
                        second: id2,
                    });
                }
            }
            let next = &post + p.dynamics(&post, u_next) * residual;
            Ok(StepOutcome {
                next_state: next,
                collision: Some(StepCollision {
                    substep: s,
                    pre_state: pre,
                    post_state: post,
                    manifold_id: id,
                }),
            })
        }
        _ => Ok(StepOutcome {
            next_state: x_n + f_n * dt,
            collision: None,
        }),
    }
}

/// Roll the scheme over the whole grid.
///
/// Returns the trajectory and the discrete objective
/// `phi(x_N) + sum_n L(x_n, u_n) dt`, with the running cost sampled at the
/// left node even on collision steps.
pub fn simulate<P: HybridProblem + ?Sized>(
    p: &P,
    u: &ControlGrid,
    x0: &DVector<f64>,
) -> Result<(HybridTrajectory, f64)> {
    check_dim("initial state", p.state_dim(), x0.len())?;
    check_dim("control", p.control_dim(), u.dim())?;
    let n_steps = u.steps();
    let dt = u.dt();
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut collisions = Vec::new();
    let mut running = 0.0;
    states.push(x0.clone());
    for n in 0..n_steps {
        let x_n = &states[n];
        let u_n = &u[n];
        let u_next = u.at_clamped(n as isize + 1);
        running += p.running_cost(x_n, u_n) * dt;
        let out = step_forward(p, x_n, u_n, u_next, dt, n)?;
        if let Some(c) = out.collision {
            collisions.push(CollisionRecord {
                index: n,
                substep: c.substep,
                pre_state: c.pre_state,
                post_state: c.post_state,
                manifold_id: c.manifold_id,
            });
        }
        states.push(out.next_state);
    }
    let traj = HybridTrajectory {
        dt,
        states,
        collisions,
    };
    let j = p.terminal_cost(traj.terminal()) + running;
    Ok((traj, j))
}

/// Discrete objective recomputed from a stored trajectory.
pub fn objective<P: HybridProblem + ?Sized>(
    p: &P,
    traj: &HybridTrajectory,
    u: &ControlGrid,
) -> f64 {
    let running: f64 = traj
        .states
        .iter()
        .zip(u.values())
        .map(|(x, v)| p.running_cost(x, v) * traj.dt)
        .sum();
    p.terminal_cost(traj.terminal()) + running
}
