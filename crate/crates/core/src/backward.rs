//! Backward costate recursion with jump conditions.
//!
//! The costate jump at a collision is `lambda-^T = lambda+^T g_x + eta psi_x`
//! with `eta` chosen so that the Hamiltonian is continuous across the jump.
//! The controls entering the jump are not the ones adjacent to the collision
//! step: the steepest control discontinuity near the collision is located
//! first and the controls one node further out on each side are used.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::forward::HybridTrajectory;
use crate::ocp::{ControlGrid, HybridProblem, ManifoldId};

/// Guard on `|psi_x f|` below which the jump multiplier is not solved.
pub const TRANSVERSALITY_GUARD: f64 = 1e-10;

/// Default window fraction for the discontinuity search.
pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct JumpControls {
    pub u_plus: DVector<f64>,
    pub u_minus: DVector<f64>,
    pub located_index: usize,
}

/// Costate jump at one collision.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub collision_index: usize,
    pub lambda_plus: DVector<f64>,
    pub lambda_minus: DVector<f64>,
    pub eta: f64,
    pub controls: JumpControls,
}

/// `lambda_1..lambda_N`; `values[n - 1]` holds `lambda_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateGrid {
    values: Vec<DVector<f64>>,
    pub jumps: Vec<JumpRecord>,
}

impl CostateGrid {
    #[cfg(test)]
    pub(crate) fn from_values(values: Vec<DVector<f64>>) -> Self {
        CostateGrid {
            values,
            jumps: Vec::new(),
        }
    }

    /// `lambda_n` for `n` in `1..=N`.
    pub fn at(&self, n: usize) -> &DVector<f64> {
        &self.values[n - 1]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }
}

/// The state, costate and control values on both sides of a jump.
pub struct JumpSides<'a> {
    pub lambda_plus: &'a DVector<f64>,
    pub x_minus: &'a DVector<f64>,
    pub x_plus: &'a DVector<f64>,
    pub u_minus: &'a DVector<f64>,
    pub u_plus: &'a DVector<f64>,
    pub id: ManifoldId,
}

/// Multiplier `eta` of the costate jump.
///
/// `step` labels a [`Error::TransversalityLost`] error.
pub fn solve_eta<P: HybridProblem + ?Sized>(
    p: &P,
    sides: &JumpSides<'_>,
    step: usize,
) -> Result<f64> {
    let f_minus = p.dynamics(sides.x_minus, sides.u_minus);
    let f_plus = p.dynamics(sides.x_plus, sides.u_plus);
    let denom = p.detection_gradient(sides.x_minus, sides.id).dot(&f_minus);
    if !(denom.abs() > TRANSVERSALITY_GUARD) {
        return Err(Error::TransversalityLost { step, value: denom });
    }
    let g_x = p.jump_jacobian(sides.x_minus, sides.id);
    let lam = sides.lambda_plus;
    let numer = lam.dot(&(&g_x * &f_minus)) - lam.dot(&f_plus)
        + p.running_cost(sides.x_minus, sides.u_minus)
        - p.running_cost(sides.x_plus, sides.u_plus);
    Ok(-numer / denom)
}

/// `lambda-` from `lambda+` across the jump; also returns `eta`.
pub fn costate_jump<P: HybridProblem + ?Sized>(
    p: &P,
    sides: &JumpSides<'_>,
    step: usize,
) -> Result<(DVector<f64>, f64)> {
    let eta = solve_eta(p, sides, step)?;
    let g_x = p.jump_jacobian(sides.x_minus, sides.id);
    let lambda_minus =
        g_x.tr_mul(sides.lambda_plus) + p.detection_gradient(sides.x_minus, sides.id) * eta;
    Ok((lambda_minus, eta))
}

/// Half-width `l = max(1, round(tau N))` of the discontinuity search window.
pub fn window_half_width(steps: usize, tau: f64) -> usize {
    ((tau * steps as f64).round() as usize).max(1)
}

/// Index `c*` of the largest adjacent control jump `|u_n - u_{n+1}|` with
/// `|n - c| < l`, clamped into `[0, N - 2]`; ties go to the smallest index.
pub fn locate_discontinuity(u: &ControlGrid, c: usize, tau: f64) -> usize {
    let l = window_half_width(u.steps(), tau);
    locate_in_window(u, c, l)
}

pub(crate) fn locate_in_window(u: &ControlGrid, c: usize, l: usize) -> usize {
    let n_steps = u.steps();
    if n_steps < 2 {
        return 0;
    }
    let last = n_steps - 2;
    let lo = (c + 1).saturating_sub(l).min(last);
    let hi = (c + l - 1).min(last);
    let mut best = lo;
    let mut best_jump = f64::NEG_INFINITY;
    for n in lo..=hi {
        let jump = (&u[n] - &u[n + 1]).norm();
        if jump > best_jump {
            best = n;
            best_jump = jump;
        }
    }
    best
}

/// `(u[c* + 2], u[c* - 1])`, each clamped into the grid.
pub fn resolve_jump_controls(u: &ControlGrid, c_star: usize) -> JumpControls {
    JumpControls {
        u_plus: u.at_clamped(c_star as isize + 2).clone(),
        u_minus: u.at_clamped(c_star as isize - 1).clone(),
        located_index: c_star,
    }
}

/// Backward sweep from `lambda_N = phi_x(x_N)` down to `lambda_1`.
pub fn integrate_backward<P: HybridProblem + ?Sized>(
    p: &P,
    traj: &HybridTrajectory,
    u: &ControlGrid,
    tau: f64,
) -> Result<CostateGrid> {
    let n_steps = u.steps();
    if traj.steps() != n_steps {
        return Err(Error::DimensionMismatch {
            context: "trajectory vs control grid",
            expected: n_steps,
            got: traj.steps(),
        });
    }
    let dt = traj.dt;
    let mut values = vec![DVector::zeros(0); n_steps];
    let mut jumps = Vec::with_capacity(traj.collisions.len());
    let mut lambda = p.terminal_cost_grad(traj.terminal());
    values[n_steps - 1] = lambda.clone();
    let mut pending = traj.collisions.iter().rev().peekable();
    for n in (0..n_steps).rev() {
        let x_n = &traj.states[n];
        let collision = match pending.peek() {
            Some(c) if c.index == n => pending.next(),
            _ => None,
        };
        match collision {
            None => {
                if n == 0 {
                    break;
                }
                lambda = &lambda + p.hamiltonian_grad_x(x_n, &lambda, &u[n]) * dt;
            }
            Some(c) => {
                let c_star = locate_discontinuity(u, n, tau);
                let controls = resolve_jump_controls(u, c_star);
                let residual = dt - c.substep;
                let lambda_plus = &lambda
                    + p.hamiltonian_grad_x(&c.post_state, &lambda, &controls.u_plus) * residual;
                let sides = JumpSides {
                    lambda_plus: &lambda_plus,
                    x_minus: &c.pre_state,
                    x_plus: &c.post_state,
                    u_minus: &controls.u_minus,
                    u_plus: &controls.u_plus,
                    id: c.manifold_id,
                };
                let (lambda_minus, eta) = costate_jump(p, &sides, n)?;
                lambda = &lambda_minus + p.hamiltonian_grad_x(x_n, &lambda_minus, &u[n]) * c.substep;
                jumps.push(JumpRecord {
                    collision_index: n,
                    lambda_plus,
                    lambda_minus,
                    eta,
                    controls,
                });
                if n == 0 {
                    break;
                }
            }
        }
        values[n - 1] = lambda.clone();
    }
    jumps.reverse();
    Ok(CostateGrid { values, jumps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disc::{DiscWorld, DiscWorldConfig, INTER_DISC};
    use crate::forward::simulate;
    use crate::ocp::evaluate_hamiltonian;
    use crate::testing::{dv, Bouncer};

    fn head_on() -> (DiscWorld, DVector<f64>, DVector<f64>) {
        let w = DiscWorld::new(DiscWorldConfig {
            q1: [-0.6, 0.0],
            q2: [0.0, 0.0],
            v1: [2.0, 0.0],
            ..DiscWorldConfig::default()
        })
        .unwrap();
        let mut pre = w.initial_state();
        pre[0] = -0.4;
        let post = w.jump(&pre, INTER_DISC);
        (w, pre, post)
    }

    fn sides<'a>(
        lam: &'a DVector<f64>,
        pre: &'a DVector<f64>,
        post: &'a DVector<f64>,
        u: &'a DVector<f64>,
    ) -> JumpSides<'a> {
        JumpSides {
            lambda_plus: lam,
            x_minus: pre,
            x_plus: post,
            u_minus: u,
            u_plus: u,
            id: INTER_DISC,
        }
    }

    #[test]
    fn continuous_crossing_needs_no_multiplier() {
        let b = Bouncer { e: -1.0, w: 0.1 };
        let x = dv(&[1.0, 0.5]);
        let lam = dv(&[0.3, -0.7]);
        let u = dv(&[0.2]);
        let s = JumpSides {
            lambda_plus: &lam,
            x_minus: &x,
            x_plus: &x,
            u_minus: &u,
            u_plus: &u,
            id: 0,
        };
        assert_eq!(solve_eta(&b, &s, 0).unwrap(), 0.0);
        let (lm, eta) = costate_jump(&b, &s, 0).unwrap();
        assert_eq!(eta, 0.0);
        assert_eq!(lm, lam);
    }

    #[test]
    fn jump_keeps_hamiltonian_constant() {
        let (w, pre, post) = head_on();
        let mut lam = DVector::zeros(8);
        lam[2] = 1.0;
        let u = DVector::zeros(2);
        let (lm, _) = costate_jump(&w, &sides(&lam, &pre, &post, &u), 0).unwrap();
        let h_minus = evaluate_hamiltonian(&w, &pre, &lm, &u).unwrap();
        let h_plus = evaluate_hamiltonian(&w, &post, &lam, &u).unwrap();
        assert!((h_minus - h_plus).abs() < 1e-10);
    }

    #[test]
    fn multiplier_is_linear_without_running_cost() {
        let (w, pre, post) = head_on();
        let lam = dv(&[0.1, -0.2, 1.0, 0.4, 0.3, 0.0, -0.5, 0.2]);
        let u = DVector::zeros(2);
        let e1 = solve_eta(&w, &sides(&lam, &pre, &post, &u), 0).unwrap();
        let scaled = &lam * 2.5;
        let e2 = solve_eta(&w, &sides(&scaled, &pre, &post, &u), 0).unwrap();
        assert!((e2 - 2.5 * e1).abs() < 1e-12 * (1.0 + e1.abs()));
    }

    #[test]
    fn zero_costate_is_preserved() {
        let (w, pre, post) = head_on();
        let lam = DVector::zeros(8);
        let u = DVector::zeros(2);
        let (lm, eta) = costate_jump(&w, &sides(&lam, &pre, &post, &u), 0).unwrap();
        assert_eq!(eta, 0.0);
        assert!(lm.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grazing_contact_loses_transversality() {
        let b = Bouncer::default();
        let x = dv(&[1.0, 0.0]);
        let lam = dv(&[1.0, 1.0]);
        let u = dv(&[0.0]);
        let s = JumpSides {
            lambda_plus: &lam,
            x_minus: &x,
            x_plus: &x,
            u_minus: &u,
            u_plus: &u,
            id: 0,
        };
        assert!(matches!(
            solve_eta(&b, &s, 12),
            Err(Error::TransversalityLost { step: 12, .. })
        ));
    }

    /// `lambda(0)` through one jump equals the gradient of the frozen-control
    /// cost-to-go.
    #[test]
    fn jump_matches_finite_difference_adjoint() {
        let w = DiscWorld::new(DiscWorldConfig {
            q1: [-0.7, 0.1],
            q2: [0.0, 0.0],
            v1: [1.0, 0.0],
            v2: [0.1, -0.1],
            ..DiscWorldConfig::default()
        })
        .unwrap();
        let u = ControlGrid::constant(1.0, 2, &[0.0, 0.0]).unwrap();
        let x0 = w.initial_state();
        let cost = |x: &DVector<f64>| simulate(&w, &u, x).unwrap().1;
        let (traj, _) = simulate(&w, &u, &x0).unwrap();
        assert_eq!(traj.collisions.len(), 1);
        assert_eq!(traj.collisions[0].index, 0);
        let grid = integrate_backward(&w, &traj, &u, DEFAULT_TAU).unwrap();
        let jump = &grid.jumps[0];
        let s = traj.collisions[0].substep;
        let lambda0 = &jump.lambda_minus
            + w.hamiltonian_grad_x(&x0, &jump.lambda_minus, &u[0]) * s;
        let h = 1e-6;
        for k in 0..8 {
            let mut up = x0.clone();
            up[k] += h;
            let mut dn = x0.clone();
            dn[k] -= h;
            let fd = (cost(&up) - cost(&dn)) / (2.0 * h);
            assert!(
                (fd - lambda0[k]).abs() < 1e-6 * (1.0 + fd.abs()),
                "component {k}: {fd} vs {}",
                lambda0[k]
            );
        }
    }

    fn step_at(n_steps: usize, at: usize) -> ControlGrid {
        ControlGrid::from_fn(1.0, n_steps, |t| {
            let n = (t * n_steps as f64).round() as usize;
            vec![if n <= at { 1.0 } else { 0.0 }, 0.0]
        })
        .unwrap()
    }

    #[test]
    fn locates_single_step() {
        let u = step_at(480, 37);
        assert_eq!(window_half_width(480, 0.05), 24);
        assert_eq!(locate_discontinuity(&u, 35, 0.05), 37);
    }

    #[test]
    fn constant_control_breaks_ties_to_window_start() {
        let u = ControlGrid::constant(1.0, 480, &[1.0, 1.0]).unwrap();
        assert_eq!(locate_discontinuity(&u, 100, 0.05), 100 - 24 + 1);
        assert_eq!(locate_discontinuity(&u, 3, 0.05), 0);
        assert_eq!(locate_discontinuity(&u, 479, 0.05), 479 - 23);
    }

    #[test]
    fn window_is_clamped_at_the_end() {
        let u = step_at(480, 478);
        assert_eq!(locate_discontinuity(&u, 479, 0.05), 478);
        assert_eq!(window_half_width(10, 0.05), 1);
    }

    #[test]
    fn jump_controls_are_extrapolated_and_clamped() {
        let u = ControlGrid::from_fn(1.0, 10, |t| vec![t, 0.0]).unwrap();
        let jc = resolve_jump_controls(&u, 4);
        assert_eq!((&jc.u_plus, &jc.u_minus), (&u[6], &u[3]));
        let jc = resolve_jump_controls(&u, 0);
        assert_eq!((&jc.u_plus, &jc.u_minus), (&u[2], &u[0]));
        let jc = resolve_jump_controls(&u, 8);
        assert_eq!((&jc.u_plus, &jc.u_minus), (&u[9], &u[7]));
    }

    #[test]
    fn free_flight_costate_is_linear_in_time() {
        let w = DiscWorld::new(DiscWorldConfig {
            q1: [-2.0, 0.0],
            q2: [0.3, -0.4],
            ..DiscWorldConfig::default()
        })
        .unwrap();
        let u = ControlGrid::constant(1.0, 50, &[0.0, 0.0]).unwrap();
        let (traj, _) = simulate(&w, &u, &w.initial_state()).unwrap();
        let grid = integrate_backward(&w, &traj, &u, DEFAULT_TAU).unwrap();
        assert_eq!(grid.len(), 50);
        assert!(grid.jumps.is_empty());
        for n in 1..=50 {
            let l = grid.at(n);
            let rest = 1.0 - u.time(n);
            assert!((l[2] - 0.6).abs() < 1e-12 && (l[3] + 0.8).abs() < 1e-12);
            assert!((l[6] - 0.6 * rest).abs() < 1e-12);
            assert!((l[7] + 0.8 * rest).abs() < 1e-12);
            assert!(l[0] == 0.0 && l[1] == 0.0 && l[4] == 0.0 && l[5] == 0.0);
        }
    }

    #[test]
    fn zero_terminal_gradient_gives_zero_costate() {
        let b = Bouncer::default();
        let u = ControlGrid::constant(1.5, 6, &[0.0]).unwrap();
        let (traj, _) = simulate(&b, &u, &dv(&[0.5, 1.0])).unwrap();
        assert_eq!(traj.collisions.len(), 1);
        assert!(traj.terminal()[0].abs() < 1e-12);
        let grid = integrate_backward(&b, &traj, &u, DEFAULT_TAU).unwrap();
        assert_eq!(grid.jumps.len(), 1);
        assert!(grid.values().iter().all(|l| l.norm() < 1e-10));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let b = Bouncer::default();
        let u = ControlGrid::constant(1.0, 6, &[0.0]).unwrap();
        let (traj, _) = simulate(&b, &u, &dv(&[0.0, 0.0])).unwrap();
        let other = ControlGrid::constant(1.0, 5, &[0.0]).unwrap();
        assert!(matches!(
            integrate_backward(&b, &traj, &other, DEFAULT_TAU),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
