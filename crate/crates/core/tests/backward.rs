use hybrid_msa::backward::integrate_backward;
use hybrid_msa::experiment::{sample_oracle, Preset, Setup};
use hybrid_msa::forward::simulate;

#[test]
fn costate_converges_under_refinement() {
    let setup = Setup::preset(Preset::Concentric);
    let w = setup.world().unwrap();
    let sol = setup.oracle_solution().unwrap();
    // lambda at t = 0.25 and t = 0.875, away from the impact near 0.68.
    let sample = |n: usize| {
        let u = sample_oracle(&sol, n).unwrap();
        let (traj, _) = simulate(&w, &u, &w.initial_state()).unwrap();
        let lam = integrate_backward(&w, &traj, &u, setup.params.tau).unwrap();
        (lam.at(n / 4).clone(), lam.at(7 * n / 8).clone())
    };
    let ns = [120usize, 240, 480, 960];
    let vals: Vec<_> = ns.iter().map(|&n| sample(n)).collect();
    for pair in vals.windows(3) {
        let d1 = (&pair[0].0 - &pair[1].0).norm() + (&pair[0].1 - &pair[1].1).norm();
        let d2 = (&pair[1].0 - &pair[2].0).norm() + (&pair[1].1 - &pair[2].1).norm();
        assert!(d1 > 0.0);
        let ratio = d1 / d2;
        assert!(ratio > 1.6 && ratio < 2.5, "ratio {ratio}");
    }
}

#[test]
fn costate_jump_controls_stay_near_the_impact() {
    let setup = Setup::preset(Preset::Wall);
    let w = setup.world().unwrap();
    let u = setup.initial_grid(480).unwrap();
    let (traj, _) = simulate(&w, &u, &w.initial_state()).unwrap();
    let lam = integrate_backward(&w, &traj, &u, setup.params.tau).unwrap();
    let l = (setup.params.tau * 480.0).round() as usize;
    for (c, j) in traj.collisions.iter().zip(&lam.jumps) {
        assert_eq!(j.collision_index, c.index);
        assert!(j.controls.located_index.abs_diff(c.index) < l);
    }
}
