//! Analytic optimal controls for the quadratic-cost disc experiments.
//!
//! With both discs at rest initially, disc 1 must travel the displacement
//! `d = q2 - q1 - (r1 + r2) N` by the collision time `s`, arriving with
//! velocity `v'`. The cheapest acceleration achieving both moments is affine
//! in `t`, the control after the collision is zero, and disc 2 leaves the
//! impact with velocity `k (v' . N) N`, `k = (1 + C_R) m1 / (m1 + m2)`. The
//! cost is quadratic in `v'`, so `v'` is eliminated in closed form and only
//! `(s, N)` remain.
//!
//! With a wall, disc 2 is steered towards the mirror image of the origin
//! across the line its center reflects on.

mod jet;
mod poly;

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector2;

use crate::disc::{CostKind, DiscWorldConfig};
use crate::error::{Error, Result};

pub use jet::{Jet, Real};
pub use poly::Poly;

/// Which experiment an oracle solution belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Concentric,
    General,
    Wall,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Concentric => "concentric",
            Experiment::General => "general",
            Experiment::Wall => "wall",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "concentric" => Some(Experiment::Concentric),
            "general" => Some(Experiment::General),
            "wall" => Some(Experiment::Wall),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub experiment: Experiment,
    pub collision_time: f64,
    /// Unit normal from disc 1 to disc 2 at impact.
    pub normal: [f64; 2],
    pub theta: f64,
    /// Disc-1 velocity just before the impact.
    pub v_prime: [f64; 2],
    /// Disc-2 velocity just after the impact.
    pub v_post: [f64; 2],
    /// Acceleration `a0 + a1 t` of disc 1 on `[0, s)`.
    pub a0: [f64; 2],
    pub a1: [f64; 2],
    pub cost: f64,
    pub wall_time: Option<f64>,
    pub horizon: f64,
    m1: f64,
}

impl OracleSolution {
    /// Optimal force at time `t`; zero after the collision.
    pub fn control_at(&self, t: f64) -> [f64; 2] {
        if t < self.collision_time {
            [
                self.m1 * (self.a0[0] + self.a1[0] * t),
                self.m1 * (self.a0[1] + self.a1[1] * t),
            ]
        } else {
            [0.0, 0.0]
        }
    }

    /// Every collision time in order, the wall hit included.
    pub fn collision_times(&self) -> Vec<f64> {
        let mut out = vec![self.collision_time];
        out.extend(self.wall_time);
        out
    }
}

/// Coefficients `(a0, a1)` of the minimum-energy `u(t) = a0 + a1 t` on
/// `[0, s]` with `int u = v'` and `int (s - t) u = d`.
pub fn pre_collision_control(
    s: f64,
    v_prime: [f64; 2],
    d: [f64; 2],
) -> Result<([f64; 2], [f64; 2])> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("collision time must be positive, got {s}")));
    }
    let coef = |v: f64, d: f64| (6.0 * d / (s * s) - 2.0 * v / s, 6.0 * v / (s * s) - 12.0 * d / (s * s * s));
    let (x0, x1) = coef(v_prime[0], d[0]);
    let (y0, y1) = coef(v_prime[1], d[1]);
    Ok(([x0, y0], [x1, y1]))
}

/// Problem data entering the reduced objective.
#[derive(Debug, Clone, Copy)]
struct Reduced {
    q1: Vector2<f64>,
    q2: Vector2<f64>,
    target: Vector2<f64>,
    contact: f64,
    /// `eps m1^2`: running-cost weight on the acceleration.
    e: f64,
    /// Normal-velocity transfer factor to disc 2.
    k: f64,
    horizon: f64,
}

/// Stationary `v'` and the reduced cost at `(s, theta)`.
struct Evaluated<T> {
    cost: T,
    vn: T,
    vt: T,
}

impl Reduced {
    fn from_config(cfg: &DiscWorldConfig, use_wall: bool) -> Result<Self> {
        if cfg.cost != CostKind::Quadratic {
            return Err(Error::OracleUnavailable("the L1 running cost".into()));
        }
        if cfg.v1 != [0.0, 0.0] || cfg.v2 != [0.0, 0.0] {
            return Err(Error::OracleUnavailable(
                "discs that are not initially at rest".into(),
            ));
        }
        cfg.validate()?;
        let goal = Vector2::from(cfg.target);
        // With a wall, disc 2 aims at the target mirrored across the line its
        // centre touches.
        let target = match (use_wall, cfg.wall) {
            (true, Some(w)) => {
                let n = Vector2::from(w.normal);
                goal + n * (2.0 * (w.distance - cfg.r2 - goal.dot(&n)))
            }
            (true, None) => return Err(Error::Domain("wall oracle needs a wall".into())),
            (false, _) => goal,
        };
        Ok(Reduced {
            q1: Vector2::from(cfg.q1),
            q2: Vector2::from(cfg.q2),
            target,
            contact: cfg.r1 + cfg.r2,
            e: cfg.epsilon * cfg.m1 * cfg.m1,
            k: (1.0 + cfg.restitution) * cfg.m1 / (cfg.m1 + cfg.m2),
            horizon: cfg.horizon,
        })
    }

    fn evaluate<T: Real>(&self, s: T, theta: T) -> Evaluated<T> {
        let c = |v: f64| T::cst(v);
        let (nx, ny) = (theta.cos(), theta.sin());
        let dx = c(self.q2.x - self.q1.x) - c(self.contact) * nx;
        let dy = c(self.q2.y - self.q1.y) - c(self.contact) * ny;
        let dn = dx * nx + dy * ny;
        let dp = dy * nx - dx * ny;
        let qx = c(self.q2.x - self.target.x);
        let qy = c(self.q2.y - self.target.y);
        let qn = qx * nx + qy * ny;
        let e = c(self.e);
        let kc = c(self.k) * (c(self.horizon) - s);
        let lin = kc * qn - c(6.0) * e * dn / (s * s);
        let quad = kc * kc + c(4.0) * e / s;
        let cost = qx * qx + qy * qy + e * (c(12.0) * dn * dn + c(3.0) * dp * dp) / (s * s * s)
            - lin * lin / quad;
        Evaluated {
            cost,
            vn: -lin / quad,
            vt: c(1.5) * dp / s,
        }
    }

    fn normal(theta: f64) -> Vector2<f64> {
        Vector2::new(theta.cos(), theta.sin())
    }

    fn displacement(&self, n: &Vector2<f64>) -> Vector2<f64> {
        self.q2 - self.q1 - n * self.contact
    }

    /// Explicit objective for a candidate `(s, v', N)`.
    fn objective(&self, s: f64, v: &Vector2<f64>, n: &Vector2<f64>) -> f64 {
        let d = self.displacement(n);
        let q_end = self.q2 - self.target + n * (self.k * (self.horizon - s) * v.dot(n));
        q_end.norm_squared()
            + self.e
                * (12.0 / s.powi(3) * d.norm_squared() + 4.0 / s * v.norm_squared()
                    - 12.0 / (s * s) * v.dot(&d))
    }

    fn solution(&self, experiment: Experiment, s: f64, theta: f64, m1: f64) -> Result<OracleSolution> {
        let ev = self.evaluate(s, theta);
        let n = Self::normal(theta);
        let t = Vector2::new(-n.y, n.x);
        let v = n * ev.vn + t * ev.vt;
        let d = self.displacement(&n);
        let (a0, a1) = pre_collision_control(s, v.into(), d.into())?;
        let v_post = n * (self.k * ev.vn);
        Ok(OracleSolution {
            experiment,
            collision_time: s,
            normal: n.into(),
            theta,
            v_prime: v.into(),
            v_post: v_post.into(),
            a0,
            a1,
            cost: ev.cost,
            wall_time: None,
            horizon: self.horizon,
            m1,
        })
    }

    /// Dense `(s, theta)` scan over approaching candidates, then Newton.
    fn minimize_2d(&self) -> Result<(f64, f64)> {
        const GRID: usize = 1000;
        let t_end = self.horizon;
        let mut best: Option<(f64, f64, f64)> = None;
        for i in 0..GRID {
            let s = t_end * (i as f64 + 0.5) / GRID as f64;
            for j in 0..GRID {
                let theta = -PI + 2.0 * PI * j as f64 / GRID as f64;
                let ev = self.evaluate(s, theta);
                if ev.vn <= 0.0 || !ev.cost.is_finite() {
                    continue;
                }
                if best.is_none_or(|b| ev.cost < b.0) {
                    best = Some((ev.cost, s, theta));
                }
            }
        }
        let (_, s0, th0) = best.ok_or(Error::NoInteriorMinimum)?;
        let (s, theta) = self.newton(s0, th0)?;
        if !(s > 0.0 && s < t_end) || self.evaluate(s, theta).vn <= 0.0 {
            return Err(Error::NoInteriorMinimum);
        }
        Ok((s, wrap_angle(theta)))
    }

    fn newton(&self, mut s: f64, mut theta: f64) -> Result<(f64, f64)> {
        for _ in 0..100 {
            let j = self.evaluate(Jet::var(s, 0), Jet::var(theta, 1)).cost;
            let g = j.g;
            if (g[0] * g[0] + g[1] * g[1]).sqrt() < 1e-12 {
                break;
            }
            let h = j.h;
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let (ds, dth) = if h[0][0] > 0.0 && det > 0.0 {
                (
                    -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                    -(h[0][0] * g[1] - h[1][0] * g[0]) / det,
                )
            } else {
                (-1e-3 * g[0], -1e-3 * g[1])
            };
            // Keep `s` inside the horizon.
            let mut step = 1.0;
            while !(s + step * ds > 0.0 && s + step * ds < self.horizon) && step > 1e-12 {
                step *= 0.5;
            }
            s += step * ds;
            theta += step * dth;
            if (step * ds).abs() + (step * dth).abs() < 1e-16 {
                break;
            }
        }
        if !(s.is_finite() && theta.is_finite()) {
            return Err(Error::NoInteriorMinimum);
        }
        Ok((s, theta))
    }
}

fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI { t + 2.0 * PI } else { t }
}

/// Total cost of a candidate `(s, v', N)`, `N` pointing from disc 1 to
/// disc 2. With a wall in `cfg` the terminal term uses the mirrored target.
pub fn reduced_objective(
    cfg: &DiscWorldConfig,
    s: f64,
    v_prime: [f64; 2],
    normal: [f64; 2],
) -> Result<f64> {
    if !(s > 0.0 && s < cfg.horizon) {
        return Err(Error::Domain(format!(
            "collision time must lie in (0, T), got {s}"
        )));
    }
    let red = Reduced::from_config(cfg, cfg.wall.is_some())?;
    Ok(red.objective(s, &Vector2::from(v_prime), &Vector2::from(normal)))
}

/// Reduced cost with `v'` eliminated, as a function of `(s, theta)`.
pub fn reduced_cost(cfg: &DiscWorldConfig, s: f64, theta: f64) -> Result<f64> {
    let red = Reduced::from_config(cfg, cfg.wall.is_some())?;
    Ok(red.evaluate(s, theta).cost)
}

/// Stationarity residual `|grad_{s, theta}|` of the reduced cost.
pub fn stationarity_residual(cfg: &DiscWorldConfig, sol: &OracleSolution) -> Result<f64> {
    let red = Reduced::from_config(cfg, sol.experiment == Experiment::Wall)?;
    let j = red
        .evaluate(Jet::var(sol.collision_time, 0), Jet::var(sol.theta, 1))
        .cost;
    Ok((j.g[0] * j.g[0] + j.g[1] * j.g[1]).sqrt())
}

/// Symmetric diagonal placement: the normal is fixed along `q2 - q1` and the
/// cost becomes a rational function of `s`, minimized through the real
/// roots of its derivative's numerator.
pub fn solve_concentric(cfg: &DiscWorldConfig) -> Result<OracleSolution> {
    let red = Reduced::from_config(cfg, false)?;
    let axis = red.q2 - red.q1;
    let n = axis.normalize();
    let theta = n.y.atan2(n.x);
    let q = red.q2 - red.target;
    let (qn, dn) = (q.dot(&n), axis.norm() - red.contact);
    let dp = {
        let d = red.displacement(&n);
        d.y * n.x - d.x * n.y
    };
    let (e, k, t_end) = (red.e, red.k, red.horizon);
    // F(s) - |q|^2 = P(s) / D(s) with C(s) = k (T - s):
    // P = A (C^2 s + 4 e) - (C qn s^2 - 6 e dn)^2, D = s^3 (C^2 s + 4 e).
    let a = e * (12.0 * dn * dn + 3.0 * dp * dp);
    let c = Poly::linear(k * t_end, -k);
    let s1 = Poly::linear(0.0, 1.0);
    let c2s = &(&c * &c) * &s1;
    let gate = &c2s + &Poly::constant(4.0 * e);
    let inner = &(&c * &(&s1 * &s1)).scale(qn) - &Poly::constant(6.0 * e * dn);
    let p = &gate.scale(a) - &(&inner * &inner);
    let d = &(&(&s1 * &s1) * &s1) * &gate;
    let numer = &(&p.derivative() * &d) - &(&p * &d.derivative());
    let f = |s: f64| q.norm_squared() + p.eval(s) / d.eval(s);

    let tiny = 1e-9 * t_end;
    let best = numer
        .roots_in(tiny, t_end - tiny)
        .into_iter()
        .filter(|&s| {
            let h = 1e-6 * t_end;
            red.evaluate(s, theta).vn > 0.0 && f(s - h) > f(s) && f(s + h) > f(s)
        })
        .min_by(|&x, &y| f(x).total_cmp(&f(y)))
        .ok_or(Error::NoInteriorMinimum)?;
    red.solution(Experiment::Concentric, best, theta, cfg.m1)
}

/// General placement: minimize the reduced cost over `(s, theta)`.
pub fn solve_general(cfg: &DiscWorldConfig) -> Result<OracleSolution> {
    let red = Reduced::from_config(cfg, false)?;
    let (s, theta) = red.minimize_2d()?;
    red.solution(Experiment::General, s, theta, cfg.m1)
}

/// One inter-disc impact followed by disc 2 bouncing off the wall.
pub fn solve_wall(cfg: &DiscWorldConfig) -> Result<OracleSolution> {
    let wall = cfg
        .wall
        .ok_or_else(|| Error::Domain("wall oracle needs a wall".into()))?;
    let red = Reduced::from_config(cfg, true)?;
    let (s, theta) = red.minimize_2d()?;
    let mut sol = red.solution(Experiment::Wall, s, theta, cfg.m1)?;
    let nw = Vector2::from(wall.normal);
    let speed = Vector2::from(sol.v_post).dot(&nw);
    if speed <= 0.0 {
        return Err(Error::WallNotReached);
    }
    let hit = s + (wall.distance - cfg.r2 - red.q2.dot(&nw)) / speed;
    if !(hit > s && hit < cfg.horizon) {
        return Err(Error::WallNotReached);
    }
    sol.wall_time = Some(hit);
    Ok(sol)
}

pub fn solve(experiment: Experiment, cfg: &DiscWorldConfig) -> Result<OracleSolution> {
    match experiment {
        Experiment::Concentric => solve_concentric(cfg),
        Experiment::General => solve_general(cfg),
        Experiment::Wall => solve_wall(cfg),
    }
}

/// One row of the golden-values file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GoldenRow {
    pub experiment: String,
    pub s_star: f64,
    pub theta_star: f64,
    #[serde(rename = "J_star")]
    pub j_star: f64,
    pub vpx: f64,
    pub vpy: f64,
}

impl From<&OracleSolution> for GoldenRow {
    fn from(s: &OracleSolution) -> Self {
        GoldenRow {
            experiment: s.experiment.name().to_string(),
            s_star: s.collision_time,
            theta_star: s.theta,
            j_star: s.cost,
            vpx: s.v_prime[0],
            vpy: s.v_prime[1],
        }
    }
}

pub fn write_goldens(path: &Path, rows: &[GoldenRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

pub fn read_goldens(path: &Path) -> std::io::Result<Vec<GoldenRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(std::io::Error::other))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(a0: [f64; 2], a1: [f64; 2], s: f64, k: usize) -> ([f64; 2], [f64; 2]) {
        // Simpson on the polynomial integrands is exact.
        let mut v = [0.0; 2];
        let mut d = [0.0; 2];
        let n = 2 * k;
        let h = s / n as f64;
        for i in 0..=n {
            let t = i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            for c in 0..2 {
                let u = a0[c] + a1[c] * t;
                v[c] += w * u * h / 3.0;
                d[c] += w * (s - t) * u * h / 3.0;
            }
        }
        (v, d)
    }

    #[test]
    fn constant_control_case() {
        let (a0, a1) = pre_collision_control(1.0, [1.0, 0.0], [0.5, 0.0]).unwrap();
        assert!((a0[0] - 1.0).abs() < 1e-15 && a1[0].abs() < 1e-15);
        assert!(a0[1].abs() < 1e-15 && a1[1].abs() < 1e-15);
    }

    #[test]
    fn zero_velocity_case() {
        let (a0, a1) = pre_collision_control(1.0, [0.0, 0.0], [1.0, 0.0]).unwrap();
        assert_eq!((a0[0], a1[0]), (6.0, -12.0));
        let (v, d) = integrate(a0, a1, 1.0, 4);
        assert!(v[0].abs() < 1e-14);
        assert!((d[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn moments_hold_and_scale_linearly() {
        let (s, v, d) = (0.37, [0.4, -1.2], [0.9, 0.15]);
        let (a0, a1) = pre_collision_control(s, v, d).unwrap();
        let (vi, di) = integrate(a0, a1, s, 8);
        for c in 0..2 {
            assert!((vi[c] - v[c]).abs() < 1e-12);
            assert!((di[c] - d[c]).abs() < 1e-12);
        }
        let (b0, b1) = pre_collision_control(s, [2.5 * v[0], 2.5 * v[1]], [2.5 * d[0], 2.5 * d[1]]).unwrap();
        for c in 0..2 {
            assert!((b0[c] - 2.5 * a0[c]).abs() < 1e-12);
            assert!((b1[c] - 2.5 * a1[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn nonpositive_time_is_rejected() {
        assert!(matches!(
            pre_collision_control(0.0, [0.0; 2], [1.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn objective_splits_with_zero_weight_and_zero_velocity() {
        let mut cfg = DiscWorldConfig::default();
        let n = [0.6, 0.8];
        let q2 = Vector2::from(cfg.q2);
        let v = [0.3, 0.2];
        cfg.epsilon = 1e-300;
        let with_eps0 = reduced_objective(&cfg, 0.4, v, n).unwrap();
        let vn = 0.3 * 0.6 + 0.2 * 0.8;
        let end = q2 + Vector2::from(n) * (0.6 * vn);
        assert!((with_eps0 - end.norm_squared()).abs() < 1e-12);

        cfg.epsilon = 0.1;
        let got = reduced_objective(&cfg, 0.4, [0.0, 0.0], n).unwrap();
        let d = q2 - Vector2::from(cfg.q1) - Vector2::from(n) * 0.4;
        let want = q2.norm_squared() + 0.1 * 12.0 * d.norm_squared() / 0.4f64.powi(3);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn reduced_objective_rejects_times_outside_horizon() {
        let cfg = DiscWorldConfig::default();
        assert!(reduced_objective(&cfg, 0.0, [0.0; 2], [1.0, 0.0]).is_err());
        assert!(reduced_objective(&cfg, 1.0, [0.0; 2], [1.0, 0.0]).is_err());
    }

    #[test]
    fn eliminated_velocity_is_stationary() {
        let cfg = DiscWorldConfig {
            q1: [-1.0, -2.0],
            epsilon: 0.01,
            ..DiscWorldConfig::default()
        };
        let red = Reduced::from_config(&cfg, false).unwrap();
        let (s, theta) = (0.45, 0.9);
        let ev = red.evaluate(s, theta);
        let n = Reduced::normal(theta);
        let t = Vector2::new(-n.y, n.x);
        let v = n * ev.vn + t * ev.vt;
        let base = red.objective(s, &v, &n);
        assert!((base - ev.cost).abs() < 1e-12);
        let h = 1e-6;
        for dir in [n, t] {
            let up = red.objective(s, &(v + dir * h), &n);
            let dn = red.objective(s, &(v - dir * h), &n);
            assert!(((up - dn) / (2.0 * h)).abs() < 1e-8);
        }
    }

    #[test]
    fn concentric_matches_published_cost() {
        let sol = solve_concentric(&DiscWorldConfig::default()).unwrap();
        assert_eq!(format!("{:.6}", sol.cost), "1.396542");
        assert!((sol.normal[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(sol.collision_time > 0.0 && sol.collision_time < 1.0);
    }

    #[test]
    fn concentric_cost_increases_with_weight() {
        let base = solve_concentric(&DiscWorldConfig::default()).unwrap().cost;
        let cfg = DiscWorldConfig {
            epsilon: 0.2,
            ..DiscWorldConfig::default()
        };
        assert!(solve_concentric(&cfg).unwrap().cost > base);
    }

    #[test]
    fn oracle_refuses_l1_and_moving_starts() {
        let cfg = DiscWorldConfig {
            cost: CostKind::L1 { u_max: 1.0 },
            ..DiscWorldConfig::default()
        };
        assert!(matches!(solve_concentric(&cfg), Err(Error::OracleUnavailable(_))));
        let cfg = DiscWorldConfig {
            v1: [0.1, 0.0],
            ..DiscWorldConfig::default()
        };
        assert!(matches!(solve_general(&cfg), Err(Error::OracleUnavailable(_))));
    }

    #[test]
    fn wall_oracle_needs_a_wall() {
        assert!(matches!(
            solve_wall(&DiscWorldConfig::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rest_state_has_no_interior_minimum_when_already_optimal() {
        // Disc 2 sits on the target: any push only adds cost.
        let cfg = DiscWorldConfig {
            q1: [-1.0, 0.0],
            q2: [0.0, 0.0],
            ..DiscWorldConfig::default()
        };
        assert!(matches!(solve_concentric(&cfg), Err(Error::NoInteriorMinimum)));
    }

    #[test]
    fn angle_wrap() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-15);
    }
}
