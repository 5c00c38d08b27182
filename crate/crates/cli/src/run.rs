//! The subcommands. Each writes its artifacts into an output directory.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use hybrid_msa::experiment::{
    compare, loglog_slope, sample_oracle, solve_recorded, sweep_point, Setup,
};
use hybrid_msa::oracle::{write_goldens, GoldenRow, OracleSolution};
use hybrid_msa::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Experiment;

/// Formats an optional value as an empty CSV cell when absent.
fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    let path = dir.join(name);
    csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))
}

fn optional_oracle(setup: &Setup) -> Option<OracleSolution> {
    match setup.oracle_solution() {
        Ok(s) => Some(s),
        Err(e) => {
            log::info!("no oracle errors reported: {e}");
            None
        }
    }
}

#[derive(Serialize)]
struct Stability {
    collision_index: usize,
    v_minus: f64,
    max_jump: f64,
    margin: f64,
    stable: bool,
}

#[derive(Serialize)]
struct Summary {
    problem: &'static str,
    steps: usize,
    converged: bool,
    iterations: usize,
    cost: f64,
    hu_norm: f64,
    collision_times: Vec<f64>,
    manifold_ids: Vec<usize>,
    stability: Vec<Stability>,
    oracle_cost: Option<f64>,
    oracle_collision_times: Option<Vec<f64>>,
}

pub fn solve(exp: &Experiment, dir: &Path) -> Result<()> {
    let setup = &exp.setup;
    let oracle = optional_oracle(setup);
    let (report, records) = solve_recorded(setup, exp.steps, oracle.as_ref())?;

    let mut w = writer(dir, "convergence.csv")?;
    w.write_record(["iter", "J", "hu_norm", "err_u_seminorm", "err_J"])?;
    for r in &records {
        w.write_record([
            r.iteration.to_string(),
            r.cost.to_string(),
            r.hu_norm.to_string(),
            cell(r.errors.map(|e| e.control)),
            cell(r.errors.map(|e| e.cost)),
        ])?;
    }
    w.flush()?;

    let reference = oracle
        .as_ref()
        .map(|s| sample_oracle(s, exp.steps))
        .transpose()?;
    let mut w = writer(dir, "control.csv")?;
    w.write_record(["t", "ux", "uy", "ux_opt", "uy_opt"])?;
    for (n, u) in report.control.values().iter().enumerate() {
        let opt = reference.as_ref().map(|r| &r[n]);
        w.write_record([
            report.control.time(n).to_string(),
            u[0].to_string(),
            u[1].to_string(),
            cell(opt.map(|v| v[0])),
            cell(opt.map(|v| v[1])),
        ])?;
    }
    w.flush()?;

    let traj = &report.trajectory;
    let mut w = writer(dir, "trajectory.csv")?;
    w.write_record([
        "t", "q1x", "q1y", "q2x", "q2y", "v1x", "v1y", "v2x", "v2y", "collision_id",
        "collision_t",
    ])?;
    for (n, x) in traj.states.iter().enumerate() {
        let mut row = vec![(n as f64 * traj.dt).to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        match traj.collision_at(n) {
            Some(c) => {
                row.push(c.manifold_id.to_string());
                row.push(c.time(traj.dt).to_string());
            }
            None => row.extend([String::new(), String::new()]),
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let summary = Summary {
        problem: exp.preset.name(),
        steps: exp.steps,
        converged: report.converged,
        iterations: report.iterations,
        cost: report.cost,
        hu_norm: *report.hu_norms.last().expect("final iterate recorded"),
        collision_times: traj.collision_times(),
        manifold_ids: traj.manifold_sequence(),
        stability: report
            .stability
            .iter()
            .map(|s| Stability {
                collision_index: s.collision_index,
                v_minus: s.v_minus,
                max_jump: s.max_jump,
                margin: s.margin,
                stable: s.is_stable(),
            })
            .collect(),
        oracle_cost: oracle.as_ref().map(|s| s.cost),
        oracle_collision_times: oracle.as_ref().map(|s| s.collision_times()),
    };
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    log::info!(
        "{}: J = {} after {} iterations (converged: {})",
        exp.preset.name(),
        report.cost,
        report.iterations,
        report.converged
    );
    Ok(())
}

pub fn sweep(exp: &Experiment, steps: &[usize], dir: &Path) -> Result<()> {
    let setup = &exp.setup;
    let sol = setup.oracle_solution()?;
    let mut ns = steps.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let rows = ns
        .par_iter()
        .map(|&n| sweep_point(setup, n, &sol).with_context(|| format!("sweep at N = {n}")))
        .collect::<Result<Vec<_>>>()?;

    let mut w = writer(dir, "sweep.csv")?;
    w.write_record(["N", "iterations", "converged", "J", "err_s", "err_u", "err_J"])?;
    for r in &rows {
        w.write_record([
            r.steps.to_string(),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.cost.to_string(),
            r.errors.collision_time.to_string(),
            r.errors.control.to_string(),
            r.errors.cost.to_string(),
        ])?;
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.steps as f64).collect();
    let slope = |f: fn(&hybrid_msa::experiment::SweepRow) -> f64| {
        let ys: Vec<f64> = rows.iter().map(f).collect();
        cell(loglog_slope(&xs, &ys))
    };
    w.write_record([
        "slope".to_string(),
        String::new(),
        String::new(),
        String::new(),
        slope(|r| r.errors.collision_time),
        slope(|r| r.errors.control),
        slope(|r| r.errors.cost),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn compare_methods(exp: &Experiment, dir: &Path) -> Result<()> {
    let rows = compare(&exp.setup, exp.steps, exp.compare_iters)?;
    let mut w = writer(dir, "compare.csv")?;
    w.write_record(["iter", "J_msa", "J_gd", "err_u_msa", "err_u_gd"])?;
    for r in &rows {
        w.write_record([
            r.iteration.to_string(),
            r.cost_msa.to_string(),
            r.cost_gd.to_string(),
            r.control_error_msa.to_string(),
            r.control_error_gd.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct OracleOut {
    experiment: &'static str,
    collision_time: f64,
    normal: [f64; 2],
    theta: f64,
    v_prime: [f64; 2],
    v_post: [f64; 2],
    a0: [f64; 2],
    a1: [f64; 2],
    cost: f64,
    wall_time: Option<f64>,
}

pub fn oracle(exp: &Experiment, dir: &Path) -> Result<()> {
    let sol = exp.setup.oracle_solution()?;
    let out = OracleOut {
        experiment: sol.experiment.name(),
        collision_time: sol.collision_time,
        normal: sol.normal,
        theta: sol.theta,
        v_prime: sol.v_prime,
        v_post: sol.v_post,
        a0: sol.a0,
        a1: sol.a1,
        cost: sol.cost,
        wall_time: sol.wall_time,
    };
    fs::write(dir.join("oracle.json"), serde_json::to_string_pretty(&out)? + "\n")?;
    write_goldens(&dir.join("oracle_goldens.csv"), &[GoldenRow::from(&sol)])?;
    Ok(())
}

/// Whether `err` stems from a request the configuration cannot satisfy.
pub fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        matches!(
            e.downcast_ref::<Error>().map(Error::root),
            Some(Error::OracleUnavailable(_) | Error::Domain(_))
        )
    })
}
