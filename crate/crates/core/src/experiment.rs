//! The disc-collision experiments: preset configurations, error measures
//! against the analytic oracle, refinement sweeps and the comparison with
//! gradient descent.

use nalgebra::DVector;

use crate::direct::{gd_solve_with_observer, matched_learning_rate};
use crate::disc::{seminorm, CostKind, DiscWorld, DiscWorldConfig, Wall};
use crate::error::{Error, Result};
use crate::ocp::ControlGrid;
use crate::oracle::{self, Experiment, OracleSolution};
use crate::solver::{solve_with_observer, SolveReport, SolverParams, StopRule};

/// Default exclusion half-width as a fraction of the horizon.
pub const DEFAULT_OMEGA_FRACTION: f64 = 0.05;

/// Default `|J_k - J_{k-100}|` tolerance for the L1 variant.
pub const L1_COST_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Concentric,
    General,
    Wall,
    L1,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Concentric, Preset::General, Preset::Wall, Preset::L1];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Concentric => "concentric",
            Preset::General => "general",
            Preset::Wall => "wall",
            Preset::L1 => "l1",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn config(self) -> DiscWorldConfig {
        let base = DiscWorldConfig::default();
        let general = DiscWorldConfig {
            q1: [-1.0, -2.0],
            q2: [-1.0, -1.0],
            epsilon: 0.01,
            ..base.clone()
        };
        match self {
            Preset::Concentric => base,
            Preset::General => general,
            Preset::Wall => {
                let off = 2f64.sqrt() / 5.0;
                DiscWorldConfig {
                    q1: [-1.5 - off, 0.1 - off],
                    q2: [-1.0, 0.6],
                    epsilon: 0.01,
                    wall: Some(Wall {
                        distance: 1.0,
                        normal: [0.0, 1.0],
                    }),
                    ..base
                }
            }
            Preset::L1 => DiscWorldConfig {
                cost: CostKind::L1 {
                    u_max: 5.0 * 2f64.sqrt(),
                },
                ..general
            },
        }
    }

    /// Constant initial control that triggers the intended collisions.
    pub fn initial_control(self) -> [f64; 2] {
        match self {
            Preset::General | Preset::L1 => [0.0, 3.0],
            Preset::Concentric | Preset::Wall => [3.0, 3.0],
        }
    }

    pub fn oracle(self) -> Option<Experiment> {
        match self {
            Preset::Concentric => Some(Experiment::Concentric),
            Preset::General => Some(Experiment::General),
            Preset::Wall => Some(Experiment::Wall),
            Preset::L1 => None,
        }
    }
}

/// Stop rule suited to the cost kind: `H_u` norm for the quadratic cost,
/// cost stagnation for the non-smooth L1 cost.
pub fn default_stop_rule(cost: CostKind) -> StopRule {
    match cost {
        CostKind::Quadratic => StopRule::HamiltonianGradient,
        CostKind::L1 { .. } => StopRule::CostStagnation {
            tol: L1_COST_TOLERANCE,
            window: 100,
        },
    }
}

/// Oracle for `cfg`, dispatched on its geometry.
pub fn oracle_for(experiment: Option<Experiment>, cfg: &DiscWorldConfig) -> Result<OracleSolution> {
    match experiment {
        Some(e) => oracle::solve(e, cfg),
        None => Err(Error::OracleUnavailable("this experiment".into())),
    }
}

/// The oracle control sampled at the left grid nodes.
pub fn sample_oracle(sol: &OracleSolution, steps: usize) -> Result<ControlGrid> {
    ControlGrid::from_fn(sol.horizon, steps, |t| sol.control_at(t).to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Errors {
    /// Largest `|t_c - t_c_opt|` over collisions matched in order; `NaN` when
    /// the numerical trajectory has fewer collisions.
    pub collision_time: f64,
    /// Windowed `L2` semi-norm of `u - u_opt`.
    pub control: f64,
    pub cost: f64,
}

/// Errors of a numerical solution against the oracle.
pub fn errors_against(
    sol: &OracleSolution,
    control: &ControlGrid,
    collision_times: &[f64],
    cost: f64,
    omega: f64,
) -> Result<Errors> {
    let reference = sample_oracle(sol, control.steps())?;
    let diff: Vec<DVector<f64>> = control
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| a - b)
        .collect();
    let oracle_times = sol.collision_times();
    let control_err = seminorm(control.dt(), &diff, &oracle_times, omega)?;
    let collision_time = if collision_times.len() < oracle_times.len() {
        f64::NAN
    } else {
        oracle_times
            .iter()
            .zip(collision_times)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    Ok(Errors {
        collision_time,
        control: control_err,
        cost: (cost - sol.cost).abs(),
    })
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub config: DiscWorldConfig,
    pub initial_control: [f64; 2],
    pub oracle: Option<Experiment>,
    pub params: SolverParams,
    pub omega_fraction: f64,
}

impl Setup {
    pub fn preset(p: Preset) -> Self {
        let config = p.config();
        let params = SolverParams {
            stop: default_stop_rule(config.cost),
            ..SolverParams::default()
        };
        Setup {
            config,
            initial_control: p.initial_control(),
            oracle: p.oracle(),
            params,
            omega_fraction: DEFAULT_OMEGA_FRACTION,
        }
    }

    pub fn world(&self) -> Result<DiscWorld> {
        DiscWorld::new(self.config.clone())
    }

    pub fn initial_grid(&self, steps: usize) -> Result<ControlGrid> {
        ControlGrid::constant(self.config.horizon, steps, &self.initial_control)
    }

    pub fn omega(&self) -> f64 {
        self.omega_fraction * self.config.horizon
    }

    pub fn oracle_solution(&self) -> Result<OracleSolution> {
        oracle_for(self.oracle, &self.config)
    }
}

/// One iteration of a recorded run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub hu_norm: f64,
    /// `None` without an oracle.
    pub errors: Option<Errors>,
}

/// Solve with per-iteration records, including oracle errors when an oracle
/// solution is supplied.
pub fn solve_recorded(
    setup: &Setup,
    steps: usize,
    oracle: Option<&OracleSolution>,
) -> Result<(SolveReport, Vec<IterationRecord>)> {
    let world = setup.world()?;
    let u0 = setup.initial_grid(steps)?;
    let omega = setup.omega();
    let every = setup.params.record_every;
    let mut records = Vec::new();
    let mut failure = None;
    let report = solve_with_observer(&world, &world.initial_state(), u0, &setup.params, |v| {
        if v.iteration % every != 0 || failure.is_some() {
            return;
        }
        let errors = match oracle {
            Some(sol) => match errors_against(
                sol,
                v.control,
                &v.trajectory.collision_times(),
                v.cost,
                omega,
            ) {
                Ok(e) => Some(e),
                Err(e) => {
                    failure = Some(e);
                    None
                }
            },
            None => None,
        };
        records.push(IterationRecord {
            iteration: v.iteration,
            cost: v.cost,
            hu_norm: v.hu_norm,
            errors,
        });
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    // The final iterate is always recorded.
    if records.last().map(|r| r.iteration) != Some(report.iterations) {
        let errors = oracle
            .map(|sol| {
                errors_against(
                    sol,
                    &report.control,
                    &report.trajectory.collision_times(),
                    report.cost,
                    omega,
                )
            })
            .transpose()?;
        records.push(IterationRecord {
            iteration: report.iterations,
            cost: report.cost,
            hu_norm: *report.hu_norms.last().expect("final iterate recorded"),
            errors,
        });
    }
    Ok((report, records))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub steps: usize,
    pub iterations: usize,
    pub converged: bool,
    pub cost: f64,
    pub errors: Errors,
}

/// Final errors of one converged solve at resolution `steps`.
pub fn sweep_point(setup: &Setup, steps: usize, sol: &OracleSolution) -> Result<SweepRow> {
    let world = setup.world()?;
    let report = crate::solver::solve(
        &world,
        &world.initial_state(),
        setup.initial_grid(steps)?,
        &setup.params,
    )?;
    let errors = errors_against(
        sol,
        &report.control,
        &report.trajectory.collision_times(),
        report.cost,
        setup.omega(),
    )?;
    Ok(SweepRow {
        steps,
        iterations: report.iterations,
        converged: report.converged,
        cost: report.cost,
        errors,
    })
}

/// Least-squares slope of `log y` against `log x`; `None` with fewer than two
/// usable points.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Ratio `sigma` of the least-squares fit `log y_k = log mu + k log sigma`.
pub fn geometric_ratio(iterations: &[usize], ys: &[f64]) -> Option<f64> {
    let xs: Vec<f64> = iterations.iter().map(|&k| k as f64).collect();
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 0.0 && y.is_finite())
        .map(|(x, y)| (*x, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| (sxy / sxx).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub iteration: usize,
    pub cost_msa: f64,
    pub cost_gd: f64,
    pub control_error_msa: f64,
    pub control_error_gd: f64,
}

/// Relaxed MSA and gradient descent with the matched learning rate, both
/// from the same initial control for exactly `iters` updates.
pub fn compare(setup: &Setup, steps: usize, iters: usize) -> Result<Vec<CompareRow>> {
    if setup.config.cost != CostKind::Quadratic {
        return Err(Error::OracleUnavailable("the L1 running cost".into()));
    }
    let sol = setup.oracle_solution()?;
    let world = setup.world()?;
    let x0 = world.initial_state();
    let omega = setup.omega();
    let u0 = setup.initial_grid(steps)?;

    let params = SolverParams {
        delta: f64::MIN_POSITIVE,
        max_iters: iters,
        stop: StopRule::HamiltonianGradient,
        ..setup.params
    };
    let control_error = |u: &ControlGrid| -> Result<f64> {
        let reference = sample_oracle(&sol, steps)?;
        let diff: Vec<DVector<f64>> = u
            .values()
            .iter()
            .zip(reference.values())
            .map(|(a, b)| a - b)
            .collect();
        seminorm(u.dt(), &diff, &sol.collision_times(), omega)
    };

    let mut msa = Vec::with_capacity(iters + 1);
    let mut failure = None;
    solve_with_observer(&world, &x0, u0.clone(), &params, |v| {
        match control_error(v.control) {
            Ok(e) => msa.push((v.cost, e)),
            Err(e) => failure = Some(e),
        }
    })?;
    let mut gd = Vec::with_capacity(iters + 1);
    let rate = matched_learning_rate(setup.params.alpha, setup.config.epsilon, u0.dt());
    gd_solve_with_observer(&world, &x0, u0, iters, rate, |v| {
        match control_error(v.control) {
            Ok(e) => gd.push((v.cost, e)),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(msa
        .iter()
        .zip(&gd)
        .enumerate()
        .map(|(k, (m, g))| CompareRow {
            iteration: k,
            cost_msa: m.0,
            cost_gd: g.0,
            control_error_msa: m.1,
            control_error_gd: g.1,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [60.0, 120.0, 240.0, 480.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
        assert!(loglog_slope(&xs[..1], &ys[..1]).is_none());
    }

    #[test]
    fn ratio_of_geometric_series() {
        let ks = [0, 1, 2, 3, 4];
        let ys: Vec<f64> = ks.iter().map(|&k| 2.0 * 0.99f64.powi(k as i32)).collect();
        assert!((geometric_ratio(&ks, &ys).unwrap() - 0.99).abs() < 1e-12);
    }

    #[test]
    fn presets_round_trip_and_validate() {
        for p in Preset::ALL {
            assert_eq!(Preset::from_name(p.name()), Some(p));
            assert!(p.config().validate().is_ok());
        }
        assert!(Preset::from_name("nope").is_none());
    }

    #[test]
    fn oracle_control_error_vanishes_on_itself() {
        let setup = Setup::preset(Preset::Concentric);
        let sol = setup.oracle_solution().unwrap();
        let grid = sample_oracle(&sol, 480).unwrap();
        let e = errors_against(&sol, &grid, &[sol.collision_time], sol.cost, 0.05).unwrap();
        assert_eq!(e.control, 0.0);
        assert_eq!(e.collision_time, 0.0);
        assert_eq!(e.cost, 0.0);
    }

    #[test]
    fn missing_collision_reports_nan() {
        let setup = Setup::preset(Preset::Concentric);
        let sol = setup.oracle_solution().unwrap();
        let grid = sample_oracle(&sol, 60).unwrap();
        let e = errors_against(&sol, &grid, &[], sol.cost, 0.05).unwrap();
        assert!(e.collision_time.is_nan());
    }

    #[test]
    fn l1_has_no_oracle() {
        let setup = Setup::preset(Preset::L1);
        assert!(matches!(setup.oracle_solution(), Err(Error::OracleUnavailable(_))));
        assert!(matches!(compare(&setup, 60, 1), Err(Error::OracleUnavailable(_))));
    }
}
