//! Two frictionless discs in the plane, optionally bounded by a wall.
//!
//! Disc 1 is pushed by the control force; disc 2 moves only through
//! collisions. The terminal cost pulls disc 2 to the origin.
//!
//! State layout is `[q1, q2, v1, v2]` (each a 2-vector). Manifold ids are
//! fixed: [`INTER_DISC`] always, then [`WALL_DISC1`] and [`WALL_DISC2`] when a
//! wall is configured.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::ocp::{HybridProblem, ManifoldId};

pub const INTER_DISC: ManifoldId = 0;
pub const WALL_DISC1: ManifoldId = 1;
pub const WALL_DISC2: ManifoldId = 2;

const Q1: usize = 0;
const Q2: usize = 2;
const V1: usize = 4;
const V2: usize = 6;

/// Value of an inactive (receding) detection branch.
const FAR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    /// Distance `b` of the wall line from the origin.
    pub distance: f64,
    /// Unit normal pointing from the origin towards the wall.
    pub normal: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostKind {
    /// `L = eps |u|^2`, unconstrained control.
    Quadratic,
    /// `L = eps |u|`, `|u| <= u_max`.
    L1 { u_max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscWorldConfig {
    pub m1: f64,
    pub m2: f64,
    pub r1: f64,
    pub r2: f64,
    pub restitution: f64,
    pub epsilon: f64,
    pub horizon: f64,
    pub q1: [f64; 2],
    pub q2: [f64; 2],
    pub v1: [f64; 2],
    pub v2: [f64; 2],
    /// Point disc 2 should reach; the terminal cost is `|q2(T) - target|^2`.
    pub target: [f64; 2],
    pub wall: Option<Wall>,
    pub cost: CostKind,
}

impl Default for DiscWorldConfig {
    /// Unit masses, radii 0.2, elastic collisions, `T = 1`, discs at rest
    /// at the concentric starting positions.
    fn default() -> Self {
        DiscWorldConfig {
            m1: 1.0,
            m2: 1.0,
            r1: 0.2,
            r2: 0.2,
            restitution: 1.0,
            epsilon: 0.1,
            horizon: 1.0,
            q1: [-2.0, -2.0],
            q2: [-1.0, -1.0],
            v1: [0.0, 0.0],
            v2: [0.0, 0.0],
            target: [0.0, 0.0],
            wall: None,
            cost: CostKind::Quadratic,
        }
    }
}

impl DiscWorldConfig {
    pub fn initial_state(&self) -> DVector<f64> {
        let mut x = DVector::zeros(8);
        for k in 0..2 {
            x[Q1 + k] = self.q1[k];
            x[Q2 + k] = self.q2[k];
            x[V1 + k] = self.v1[k];
            x[V2 + k] = self.v2[k];
        }
        x
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("r1", self.r1),
            ("r2", self.r2),
            ("epsilon", self.epsilon),
            ("T", self.horizon),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(Error::Domain(format!(
                "restitution must lie in [0, 1], got {}",
                self.restitution
            )));
        }
        if let CostKind::L1 { u_max } = self.cost {
            if !(u_max > 0.0) {
                return Err(Error::Domain(format!("u_M must be positive, got {u_max}")));
            }
        }
        let gap = (v2(self.q1) - v2(self.q2)).norm() - self.r1 - self.r2;
        if gap <= 0.0 {
            return Err(Error::Domain("discs overlap initially".into()));
        }
        if let Some(w) = self.wall {
            let n = v2(w.normal);
            if (n.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Domain("wall normal must have unit length".into()));
            }
            for (q, r) in [(self.q1, self.r1), (self.q2, self.r2)] {
                if w.distance - v2(q).dot(&n) - r <= 0.0 {
                    return Err(Error::Domain(
                        "discs must start on the origin side of the wall".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn v2(a: [f64; 2]) -> Vector2<f64> {
    Vector2::new(a[0], a[1])
}

fn block(x: &DVector<f64>, at: usize) -> Vector2<f64> {
    Vector2::new(x[at], x[at + 1])
}

fn set_block(x: &mut DVector<f64>, at: usize, v: &Vector2<f64>) {
    x[at] = v[0];
    x[at + 1] = v[1];
}

fn set_block_mat(m: &mut DMatrix<f64>, r: usize, c: usize, b: &Matrix2<f64>) {
    for i in 0..2 {
        for j in 0..2 {
            m[(r + i, c + j)] = b[(i, j)];
        }
    }
}

/// The two-disc problem with its collision models consolidated into one
/// vector of detections.
#[derive(Debug, Clone)]
pub struct DiscWorld {
    cfg: DiscWorldConfig,
}

impl DiscWorld {
    pub fn new(cfg: DiscWorldConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(DiscWorld { cfg })
    }

    pub fn config(&self) -> &DiscWorldConfig {
        &self.cfg
    }

    pub fn initial_state(&self) -> DVector<f64> {
        self.cfg.initial_state()
    }

    fn wall(&self) -> Option<(f64, Vector2<f64>)> {
        self.cfg.wall.map(|w| (w.distance, v2(w.normal)))
    }

    /// Contact normal `(q1 - q2) / |q1 - q2|`.
    pub fn contact_normal(x: &DVector<f64>) -> Vector2<f64> {
        (block(x, Q1) - block(x, Q2)).normalize()
    }

    /// `[v1, v2, u / m1, 0]`.
    pub fn disc_dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut dx = DVector::zeros(8);
        for k in 0..2 {
            dx[Q1 + k] = x[V1 + k];
            dx[Q2 + k] = x[V2 + k];
            dx[V1 + k] = u[k] / self.cfg.m1;
        }
        dx
    }

    fn impulse_factors(&self) -> (f64, f64) {
        let m = self.cfg.m1 + self.cfg.m2;
        let k = 1.0 + self.cfg.restitution;
        (k * self.cfg.m2 / m, k * self.cfg.m1 / m)
    }

    /// Velocity update of a frictionless disc-disc impact with restitution
    /// about the centre-of-mass velocity. Positions are unchanged.
    pub fn interdisc_jump(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = Self::contact_normal(x);
        let (v1, v2) = (block(x, V1), block(x, V2));
        let m = self.cfg.m1 + self.cfg.m2;
        let c = self.cfg.restitution - 1.0;
        let w = (v1 - v2).dot(&n);
        let v1e = v1 - n * (2.0 * self.cfg.m2 * w / m);
        let v2e = v2 + n * (2.0 * self.cfg.m1 * w / m);
        let com = (v1 * self.cfg.m1 + v2 * self.cfg.m2) / m;
        let v1s = v1e + n * (c * v1e.dot(&n)) - n * (c * com.dot(&n));
        let v2s = v2e + n * (c * v2e.dot(&n)) - n * (c * com.dot(&n));
        let mut y = x.clone();
        set_block(&mut y, V1, &v1s);
        set_block(&mut y, V2, &v2s);
        y
    }

    fn interdisc_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = block(x, Q1) - block(x, Q2);
        let rho = d.norm();
        let n = d / rho;
        let w = block(x, V1) - block(x, V2);
        let wn = w.dot(&n);
        let nn = n * n.transpose();
        let proj = Matrix2::identity() - nn;
        // d[(w.n) n]/dq1
        let dp_dq1 = (Matrix2::identity() * wn + n * w.transpose()) * proj / rho;
        let (mu1, mu2) = self.impulse_factors();
        let mut jac = DMatrix::identity(8, 8);
        set_block_mat(&mut jac, V1, Q1, &(-mu1 * dp_dq1));
        set_block_mat(&mut jac, V1, Q2, &(mu1 * dp_dq1));
        set_block_mat(&mut jac, V1, V1, &(Matrix2::identity() - mu1 * nn));
        set_block_mat(&mut jac, V1, V2, &(mu1 * nn));
        set_block_mat(&mut jac, V2, Q1, &(mu2 * dp_dq1));
        set_block_mat(&mut jac, V2, Q2, &(-mu2 * dp_dq1));
        set_block_mat(&mut jac, V2, V1, &(mu2 * nn));
        set_block_mat(&mut jac, V2, V2, &(Matrix2::identity() - mu2 * nn));
        jac
    }

    /// Scaled gap `(|q1 - q2| - r1 - r2) / sqrt 2` while approaching,
    /// `1 / sqrt 2` otherwise.
    pub fn interdisc_detection(&self, x: &DVector<f64>) -> f64 {
        let d = block(x, Q1) - block(x, Q2);
        let w = block(x, V1) - block(x, V2);
        if d.dot(&w) < 0.0 {
            FRAC_1_SQRT_2 * (d.norm() - self.cfg.r1 - self.cfg.r2)
        } else {
            FRAC_1_SQRT_2 * FAR
        }
    }

    fn disc_slots(&self, disc: usize) -> (usize, usize, f64) {
        match disc {
            1 => (Q1, V1, self.cfg.r1),
            2 => (Q2, V2, self.cfg.r2),
            _ => panic!("disc index must be 1 or 2, got {disc}"),
        }
    }

    /// Gap between disc `disc` and the wall while moving towards it, `1`
    /// otherwise. Returns `1` when no wall is configured.
    pub fn wall_detection(&self, x: &DVector<f64>, disc: usize) -> f64 {
        let Some((b, nw)) = self.wall() else {
            return FAR;
        };
        let (q, v, r) = self.disc_slots(disc);
        if block(x, v).dot(&nw) > 0.0 {
            b - block(x, q).dot(&nw) - r
        } else {
            FAR
        }
    }

    /// Mirror the velocity of disc `disc` across the wall.
    pub fn wall_jump(&self, x: &DVector<f64>, disc: usize) -> DVector<f64> {
        let mut y = x.clone();
        if let Some((_, nw)) = self.wall() {
            let (_, v, _) = self.disc_slots(disc);
            let vel = block(x, v);
            set_block(&mut y, v, &(vel - nw * (2.0 * vel.dot(&nw))));
        }
        y
    }

    /// `-lambda_v1 / (2 eps m1)`.
    pub fn quadratic_minimizer(&self, lambda: &DVector<f64>) -> DVector<f64> {
        let l = block(lambda, V1);
        let u = -l / (2.0 * self.cfg.epsilon * self.cfg.m1);
        DVector::from_column_slice(u.as_slice())
    }

    /// Bang-off minimizer on the disc `|u| <= u_max`: full force against
    /// `lambda_v1` when `|lambda_v1| >= m1 eps`, zero otherwise.
    pub fn l1_minimizer(&self, lambda: &DVector<f64>, u_max: f64) -> DVector<f64> {
        let l = block(lambda, V1);
        let norm = l.norm();
        if norm >= self.cfg.m1 * self.cfg.epsilon && norm > 0.0 {
            DVector::from_column_slice((-l * (u_max / norm)).as_slice())
        } else {
            DVector::zeros(2)
        }
    }
}

impl HybridProblem for DiscWorld {
    fn state_dim(&self) -> usize {
        8
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn num_manifolds(&self) -> usize {
        if self.cfg.wall.is_some() {
            3
        } else {
            1
        }
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.disc_dynamics(x, u)
    }

    fn dynamics_jac_x(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(8, 8);
        for k in 0..4 {
            m[(k, 4 + k)] = 1.0;
        }
        m
    }

    fn dynamics_jac_u(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(8, 2);
        m[(V1, 0)] = 1.0 / self.cfg.m1;
        m[(V1 + 1, 1)] = 1.0 / self.cfg.m1;
        m
    }

    fn jump(&self, x: &DVector<f64>, id: ManifoldId) -> DVector<f64> {
        match id {
            INTER_DISC => self.interdisc_jump(x),
            WALL_DISC1 => self.wall_jump(x, 1),
            WALL_DISC2 => self.wall_jump(x, 2),
            _ => panic!("unknown manifold id {id}"),
        }
    }

    fn jump_jacobian(&self, x: &DVector<f64>, id: ManifoldId) -> DMatrix<f64> {
        match id {
            INTER_DISC => self.interdisc_jacobian(x),
            WALL_DISC1 | WALL_DISC2 => {
                let mut jac = DMatrix::identity(8, 8);
                if let Some((_, nw)) = self.wall() {
                    let (_, v, _) = self.disc_slots(id);
                    let refl = Matrix2::identity() - 2.0 * nw * nw.transpose();
                    set_block_mat(&mut jac, v, v, &refl);
                }
                jac
            }
            _ => panic!("unknown manifold id {id}"),
        }
    }

    fn detection(&self, x: &DVector<f64>, id: ManifoldId) -> f64 {
        match id {
            INTER_DISC => self.interdisc_detection(x),
            WALL_DISC1 => self.wall_detection(x, 1),
            WALL_DISC2 => self.wall_detection(x, 2),
            _ => panic!("unknown manifold id {id}"),
        }
    }

    /// Gradient of the approaching branch.
    fn detection_gradient(&self, x: &DVector<f64>, id: ManifoldId) -> DVector<f64> {
        let mut g = DVector::zeros(8);
        match id {
            INTER_DISC => {
                let n = Self::contact_normal(x) * FRAC_1_SQRT_2;
                set_block(&mut g, Q1, &n);
                set_block(&mut g, Q2, &-n);
            }
            WALL_DISC1 | WALL_DISC2 => {
                if let Some((_, nw)) = self.wall() {
                    let (q, _, _) = self.disc_slots(id);
                    set_block(&mut g, q, &-nw);
                }
            }
            _ => panic!("unknown manifold id {id}"),
        }
        g
    }

    fn running_cost(&self, _x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        match self.cfg.cost {
            CostKind::Quadratic => self.cfg.epsilon * u.norm_squared(),
            CostKind::L1 { .. } => self.cfg.epsilon * u.norm(),
        }
    }

    fn running_cost_grad_x(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(8)
    }

    fn running_cost_grad_u(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self.cfg.cost {
            CostKind::Quadratic => u * (2.0 * self.cfg.epsilon),
            CostKind::L1 { .. } => {
                let norm = u.norm();
                if norm > 0.0 {
                    u * (self.cfg.epsilon / norm)
                } else {
                    DVector::zeros(2)
                }
            }
        }
    }

    fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        (block(x, Q2) - v2(self.cfg.target)).norm_squared()
    }

    fn terminal_cost_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(8);
        set_block(&mut g, Q2, &((block(x, Q2) - v2(self.cfg.target)) * 2.0));
        g
    }

    fn hamiltonian_minimizer(&self, _x: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        match self.cfg.cost {
            CostKind::Quadratic => self.quadratic_minimizer(lambda),
            CostKind::L1 { u_max } => self.l1_minimizer(lambda, u_max),
        }
    }

    fn hamiltonian_grad_u(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DVector<f64> {
        let l = block(lambda, V1) / self.cfg.m1;
        DVector::from_column_slice(l.as_slice()) + self.running_cost_grad_u(x, u)
    }

    fn hamiltonian_grad_x(
        &self,
        _x: &DVector<f64>,
        lambda: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DVector<f64> {
        let mut g = DVector::zeros(8);
        for k in 0..4 {
            g[4 + k] = lambda[k];
        }
        g
    }

    fn lipschitz_f_u(&self) -> Option<f64> {
        Some(1.0 / self.cfg.m1)
    }

    /// Closed-form hit time along the Euler ray: the entry root of
    /// `|q_rel + s v_rel| = r1 + r2` for the disc pair, the linear gap
    /// closure for a wall.
    fn collision_time(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _dt: f64,
        id: ManifoldId,
    ) -> Option<f64> {
        match id {
            INTER_DISC => {
                let q = block(x, Q1) - block(x, Q2);
                let v = block(x, V1) - block(x, V2);
                let rr = self.cfg.r1 + self.cfg.r2;
                let a = v.norm_squared();
                let b = 2.0 * q.dot(&v);
                let c = q.norm_squared() - rr * rr;
                if a == 0.0 || b >= 0.0 || c <= 0.0 {
                    return None;
                }
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                // b < 0: the stable form of the smaller root.
                let s = 2.0 * c / (-b + disc.sqrt());
                (s > 0.0).then_some(s)
            }
            WALL_DISC1 | WALL_DISC2 => {
                let (b, nw) = self.wall()?;
                let (q, v, r) = self.disc_slots(id);
                let speed = block(x, v).dot(&nw);
                if speed <= 0.0 {
                    return None;
                }
                let gap = b - block(x, q).dot(&nw) - r;
                (gap > 0.0).then_some(gap / speed)
            }
            _ => None,
        }
    }
}

/// Root-mean-square of a grid-sampled series over `[0, T]` with the
/// windows `|t - t_c| < omega` around each collision time removed.
///
/// Node `n` sits at `n * dt`. Vector samples contribute the sum of their
/// squared components. The mean is taken over the retained nodes.
pub fn seminorm(
    dt: f64,
    series: &[DVector<f64>],
    collision_times: &[f64],
    omega: f64,
) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("omega must be positive, got {omega}")));
    }
    let excluded = |t: f64| collision_times.iter().any(|&tc| (t - tc).abs() < omega);
    let (sum, count) = series
        .iter()
        .enumerate()
        .filter(|(n, _)| !excluded(*n as f64 * dt))
        .fold((0.0, 0usize), |(s, c), (_, v)| (s + v.norm_squared(), c + 1));
    if count == 0 {
        return Err(Error::DegenerateWindow);
    }
    Ok((sum / count as f64).sqrt())
}
