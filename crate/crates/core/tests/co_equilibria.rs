mod common;

use rand::Rng;
use relay_game::co::{apply_t, solve_nepp, verify_nepp, IterOptions};
use relay_game::{CoNeppSolution, Error, Family, GameConfig, Reward, RewardModel};

fn opts() -> IterOptions {
    IterOptions { tol: 1e-12, ..IterOptions::default() }
}

fn random_instances(seed: u64, count: usize) -> Vec<(RewardModel, GameConfig)> {
    let mut rng = common::rng(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=6);
            let locations = rng.random_range(1..=4);
            (common::located_model(&mut rng, n, locations), common::config(&mut rng))
        })
        .collect()
}

#[test]
fn converged_equilibria_pass_certification() {
    let mut converged = 0;
    for (model, cfg) in random_instances(31, 50) {
        for family in Family::ALL {
            let sol = match solve_nepp(&model, &cfg, family, &opts()) {
                Ok(sol) => sol,
                Err(Error::NoConvergence { .. }) => continue,
                Err(e) => panic!("{family}: {e}"),
            };
            converged += 1;
            for who in relay_game::Forwarder::BOTH {
                assert!(sol.d_costs.get(who) <= sol.cost_pair.get(who) + 1e-9);
            }
            let report = verify_nepp(&sol, &model, &cfg, 1e-6).unwrap_or_else(|e| panic!("{family}: {e}"));
            assert!(report.cost_gap <= 1e-6);
            let again = apply_t(sol.cost_pair, family, &model, sol.d_costs, &cfg).unwrap();
            assert!(again.max_abs_diff(&sol.cost_pair) <= 1e-9);
        }
    }
    assert_eq!(converged, 150, "every random instance should converge");
}

#[test]
fn perturbed_cost_fails_certification() {
    let tol = 1e-6;
    for (model, cfg) in random_instances(32, 20) {
        let sol = solve_nepp(&model, &cfg, Family::Sc, &opts()).unwrap();
        let mut bad = sol.clone();
        bad.cost_pair.c1 += 10.0 * tol;
        assert!(verify_nepp(&bad, &model, &cfg, tol).is_err());
    }
}

/// A model in which every reward pair with positive mass sits outside the
/// middle band of at least one forwarder.
#[test]
fn families_coincide_without_middle_band_mass() {
    let rewards = vec![Reward::Infeasible, Reward::Value(1.0), Reward::Value(10.0)];
    let dense = vec![vec![0.1, 0.2, 0.0], vec![0.2, 0.3, 0.0], vec![0.0, 0.0, 0.2]];
    let model = RewardModel::from_dense(rewards, &dense).unwrap();
    let cfg = GameConfig { mean_interarrival_s: 0.2, tradeoff_1: 1.0, tradeoff_2: 1.0, win_prob_1: 0.4 };
    let sols: Vec<CoNeppSolution> = Family::ALL.iter().map(|&f| solve_nepp(&model, &cfg, f, &opts()).unwrap()).collect();
    let in_band = model.joint().iter().any(|e| sols[0].region(model.reward(e.i), model.reward(e.j)) == relay_game::RegionLabel::R4);
    assert!(!in_band);
    for s in &sols[1..] {
        assert!(s.cost_pair.max_abs_diff(&sols[0].cost_pair) <= 1e-8);
    }
}

#[test]
fn single_atom_symmetric_instance_has_equal_costs() {
    let model = RewardModel::from_dense(vec![Reward::Infeasible, Reward::Value(2.0)], &[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let cfg = GameConfig { mean_interarrival_s: 0.1, tradeoff_1: 1.5, tradeoff_2: 1.5, win_prob_1: 0.5 };
    for family in Family::ALL {
        let sol = solve_nepp(&model, &cfg, family, &opts()).unwrap();
        assert_eq!(sol.cost_pair.c1, sol.cost_pair.c2);
    }
}

#[test]
fn exchanging_forwarders_exchanges_costs() {
    for (model, cfg) in random_instances(33, 20) {
        let swapped = model.swapped();
        let scfg = cfg.swapped();
        for (family, mirror) in [(Family::Sc, Family::Cs), (Family::Cs, Family::Sc), (Family::Mixed, Family::Mixed)] {
            let a = solve_nepp(&model, &cfg, family, &opts()).unwrap();
            let b = solve_nepp(&swapped, &scfg, mirror, &opts()).unwrap();
            assert!(a.cost_pair.swapped().max_abs_diff(&b.cost_pair) <= 1e-9, "{family}: {:?} vs {:?}", a.cost_pair, b.cost_pair);
            assert_eq!(a.d_costs.swapped(), b.d_costs);
        }
    }
}

#[test]
fn equilibrium_values_follow_the_regions() {
    use relay_game::co::State;
    use relay_game::RegionLabel::*;
    for (model, cfg) in random_instances(34, 10) {
        let sol = solve_nepp(&model, &cfg, Family::Sc, &opts()).unwrap();
        let (c, d) = (sol.cost_pair, sol.d_costs);
        for i in 0..model.n() {
            for j in 0..model.n() {
                let (ri, rj) = (model.reward(i), model.reward(j));
                let v = sol.value(&model, State::Both(i, j))[0];
                let s = ri.stop_cost(cfg.tradeoff_1);
                let expect = match sol.region(ri, rj) {
                    R1 => c.c1,
                    R2 | R4 => s.unwrap(),
                    R3 => d.c1,
                    R5 => cfg.win_prob_1 * s.unwrap() + (1.0 - cfg.win_prob_1) * d.c1,
                };
                assert!((v - expect).abs() <= 1e-12, "({i}, {j}): {v} vs {expect}");
            }
        }
    }
}
