use hybrid_msa::direct::discrete_gradient;
use hybrid_msa::disc::{DiscWorld, DiscWorldConfig};
use hybrid_msa::experiment::{compare, Preset, Setup};
use hybrid_msa::forward::simulate;
use hybrid_msa::ocp::ControlGrid;
use nalgebra::DVector;
use proptest::prelude::*;

/// Central differences of `J` at every node, with the collision index of
/// each perturbed rollout.
fn fd_gradient(w: &DiscWorld, u: &ControlGrid, h: f64) -> Vec<(DVector<f64>, bool)> {
    let x0 = w.initial_state();
    let base: Vec<usize> = simulate(w, u, &x0).unwrap().0.collisions.iter().map(|c| c.index).collect();
    (0..u.steps())
        .map(|n| {
            let mut g = DVector::zeros(2);
            let mut same = true;
            for k in 0..2 {
                let mut up = u.clone();
                up.values_mut()[n][k] += h;
                let mut dn = u.clone();
                dn.values_mut()[n][k] -= h;
                let (tp, jp) = simulate(w, &up, &x0).unwrap();
                let (tm, jm) = simulate(w, &dn, &x0).unwrap();
                let idx = |t: &hybrid_msa::HybridTrajectory| -> Vec<usize> {
                    t.collisions.iter().map(|c| c.index).collect()
                };
                same &= idx(&tp) == base && idx(&tm) == base;
                g[k] = (jp - jm) / (2.0 * h);
            }
            (g, same)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn collision_free_gradient_matches_finite_differences(
        a in prop::array::uniform2(-2.0..2.0f64),
        b in prop::array::uniform2(-2.0..2.0f64),
        q2 in prop::array::uniform2(-1.0..1.0f64),
        v2 in prop::array::uniform2(-1.0..1.0f64),
        eps in 0.01..0.5f64,
    ) {
        let w = DiscWorld::new(DiscWorldConfig {
            q1: [-6.0, 0.0],
            q2,
            v2,
            epsilon: eps,
            ..DiscWorldConfig::default()
        })
        .unwrap();
        let u = ControlGrid::from_fn(1.0, 30, |t| vec![a[0] + b[0] * t, a[1] + b[1] * t]).unwrap();
        let g = discrete_gradient(&w, &u, &w.initial_state()).unwrap();
        prop_assume!(g.trajectory.collisions.is_empty());
        let fd = fd_gradient(&w, &u, 1e-5);
        let scale = fd.iter().map(|(v, _)| v.norm()).fold(0.0, f64::max);
        for (n, (v, _)) in fd.iter().enumerate() {
            prop_assert!((&g.gradient[n] - v).norm() <= 1e-6 * scale, "node {}", n);
        }
    }
}

#[test]
fn one_collision_gradient_matches_away_from_branch_boundaries() {
    for p in [Preset::Concentric, Preset::General] {
        let setup = Setup::preset(p);
        let w = setup.world().unwrap();
        let [a, b] = setup.initial_control;
        let u = ControlGrid::from_fn(1.0, 60, |t| vec![a + 0.4 * t, b - 0.3 * t]).unwrap();
        let g = discrete_gradient(&w, &u, &w.initial_state()).unwrap();
        assert_eq!(g.trajectory.collisions.len(), 1);
        let fd = fd_gradient(&w, &u, 1e-6);
        let mut checked = 0;
        for (n, (v, same)) in fd.iter().enumerate() {
            if !same || g.boundary_nodes.contains(&n) {
                continue;
            }
            let scale = v.norm().max(1e-8);
            assert!(
                (&g.gradient[n] - v).norm() / scale < 1e-4,
                "{} node {n}: {} vs {v}",
                p.name(),
                g.gradient[n]
            );
            checked += 1;
        }
        assert!(checked >= 55);
    }
}

#[test]
fn descent_overlaps_msa_at_first() {
    let rows = compare(&Setup::preset(Preset::Concentric), 480, 50).unwrap();
    assert_eq!(rows.len(), 51);
    assert_eq!(rows[0].cost_msa, rows[0].cost_gd);
    for r in &rows {
        assert!((r.cost_msa - r.cost_gd).abs() <= 0.02 * r.cost_msa, "iteration {}", r.iteration);
    }
}

#[test]
fn single_iteration_comparison_starts_from_the_same_cost() {
    let rows = compare(&Setup::preset(Preset::General), 120, 1).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].cost_msa, rows[0].cost_gd);
    assert!(compare(&Setup::preset(Preset::L1), 120, 1).is_err());
}
