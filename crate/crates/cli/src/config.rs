//! TOML experiment configuration.

use std::path::Path;

use hybrid_msa::experiment::{Preset, Setup};
use hybrid_msa::{CostKind, Wall};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: Problem,
    pub params: Params,
    pub wall: Option<WallSection>,
    pub init: Option<Init>,
    pub compare: Option<CompareSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub kind: String,
    pub q1: Option<[f64; 2]>,
    pub q2: Option<[f64; 2]>,
    pub v1: Option<[f64; 2]>,
    pub v2: Option<[f64; 2]>,
    pub target: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(rename = "N", default = "default_steps")]
    pub steps: usize,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    pub epsilon: f64,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub tau: Option<f64>,
    pub max_iters: Option<usize>,
    pub omega_fraction: Option<f64>,
    #[serde(rename = "C_R")]
    pub restitution: Option<f64>,
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    #[serde(rename = "u_M")]
    pub u_max: Option<f64>,
}

fn default_steps() -> usize {
    480
}

fn default_horizon() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSection {
    pub b: f64,
    pub normal: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Init {
    pub u0_constant: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub iters: Option<usize>,
    #[serde(rename = "gd_N")]
    pub gd_steps: Option<usize>,
}

/// A validated run description.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub preset: Preset,
    pub setup: Setup,
    pub steps: usize,
    pub compare_iters: usize,
}

pub const DEFAULT_COMPARE_ITERS: usize = 1000;

/// Reads and validates `path`. Every error message is meant for the user.
pub fn load(path: &Path) -> Result<Experiment, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse(text: &str) -> Result<Experiment, String> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| e.to_string())?;
    build(file)
}

fn build(file: ConfigFile) -> Result<Experiment, String> {
    let kind = file.problem.kind.as_str();
    let preset = Preset::from_name(kind).ok_or_else(|| {
        format!("unknown problem.kind `{kind}`; expected concentric, general, wall or l1")
    })?;
    let mut setup = Setup::preset(preset);
    let cfg = &mut setup.config;
    let p = &file.problem;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(cfg.q1, p.q1);
    set!(cfg.q2, p.q2);
    set!(cfg.v1, p.v1);
    set!(cfg.v2, p.v2);
    set!(cfg.target, p.target);

    let pr = &file.params;
    if pr.steps == 0 {
        return Err("params.N must be at least 1".into());
    }
    cfg.horizon = pr.horizon;
    cfg.epsilon = pr.epsilon;
    set!(cfg.restitution, pr.restitution);
    set!(cfg.m1, pr.m1);
    set!(cfg.m2, pr.m2);
    set!(cfg.r1, pr.r1);
    set!(cfg.r2, pr.r2);
    match (&mut cfg.cost, pr.u_max) {
        (CostKind::L1 { u_max }, Some(v)) => *u_max = v,
        (CostKind::Quadratic, Some(_)) => {
            return Err("params.u_M only applies to problem.kind = \"l1\"".into())
        }
        _ => {}
    }
    match (&file.wall, preset) {
        (Some(w), Preset::Wall) => {
            cfg.wall = Some(Wall {
                distance: w.b,
                normal: w.normal,
            })
        }
        (Some(_), _) => return Err("a [wall] section needs problem.kind = \"wall\"".into()),
        (None, _) => {}
    }
    cfg.validate().map_err(|e| e.to_string())?;

    let sp = &mut setup.params;
    set!(sp.alpha, pr.alpha);
    set!(sp.delta, pr.delta);
    set!(sp.tau, pr.tau);
    set!(sp.max_iters, pr.max_iters);
    set!(setup.omega_fraction, pr.omega_fraction);
    if !(setup.omega_fraction > 0.0 && setup.omega_fraction < 0.5) {
        return Err(format!(
            "params.omega_fraction must lie in (0, 0.5), got {}",
            setup.omega_fraction
        ));
    }
    if let Some(init) = &file.init {
        setup.initial_control = init.u0_constant;
    }

    let compare_iters = match &file.compare {
        Some(c) => {
            if let Some(gd) = c.gd_steps {
                if gd != pr.steps {
                    return Err(format!(
                        "compare.gd_N = {gd} differs from params.N = {}; both methods must share the grid",
                        pr.steps
                    ));
                }
            }
            c.iters.unwrap_or(DEFAULT_COMPARE_ITERS)
        }
        None => DEFAULT_COMPARE_ITERS,
    };
    Ok(Experiment {
        preset,
        setup,
        steps: pr.steps,
        compare_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_preset_defaults() {
        let e = parse("[problem]\nkind = \"wall\"\n[params]\nepsilon = 0.01\n").unwrap();
        assert_eq!(e.steps, 480);
        assert_eq!(e.setup, {
            let mut s = Setup::preset(Preset::Wall);
            s.config.epsilon = 0.01;
            s
        });
        assert_eq!(e.compare_iters, DEFAULT_COMPARE_ITERS);
    }

    #[test]
    fn overrides_are_applied() {
        let e = parse(
            "[problem]\nkind = \"l1\"\nq2 = [-0.5, -1.0]\n\
             [params]\nN = 60\nepsilon = 0.02\nalpha = 0.1\nC_R = 0.5\nu_M = 3.0\n\
             [init]\nu0_constant = [1.0, 2.0]\n",
        )
        .unwrap();
        assert_eq!(e.steps, 60);
        assert_eq!(e.setup.config.q2, [-0.5, -1.0]);
        assert_eq!(e.setup.config.restitution, 0.5);
        assert_eq!(e.setup.config.cost, CostKind::L1 { u_max: 3.0 });
        assert_eq!(e.setup.params.alpha, 0.1);
        assert_eq!(e.setup.initial_control, [1.0, 2.0]);
    }

    #[test]
    fn missing_epsilon_is_named() {
        let err = parse("[problem]\nkind = \"concentric\"\n[params]\nN = 60\n").unwrap_err();
        assert!(err.contains("epsilon"), "{err}");
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        let cases = [
            "[problem]\nkind = \"disc\"\n[params]\nepsilon = 0.1\n",
            "[problem]\nkind = \"general\"\n[params]\nepsilon = 0.1\nu_M = 1.0\n",
            "[problem]\nkind = \"general\"\n[params]\nepsilon = 0.1\n[wall]\nb = 1.0\nnormal = [0.0, 1.0]\n",
            "[problem]\nkind = \"general\"\n[params]\nepsilon = 0.1\nN = 60\n[compare]\ngd_N = 120\n",
            "[problem]\nkind = \"general\"\n[params]\nepsilon = -0.1\n",
            "[problem]\nkind = \"general\"\n[params]\nepsilon = 0.1\nomega_fraction = 0.0\n",
            "[problem]\nkind = \"general\"\n[params]\nepsilon = 0.1\nbeta = 2.0\n",
        ];
        for c in cases {
            assert!(parse(c).is_err(), "{c}");
        }
    }

    #[test]
    fn shipped_configs_load() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
        let mut count = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
        assert_eq!(count, 4);
    }
}
