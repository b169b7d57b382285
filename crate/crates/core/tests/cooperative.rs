mod common;

use rand::Rng;
use relay_game::co::{evaluate_policy_pair, solve_nepp, IterOptions, PolicyPairCO, State};
use relay_game::coop::{coop_value_iteration, gamma_grid, pareto_sweep};
use relay_game::po::solve_po_nepp;
use relay_game::single::solve_threshold;
use relay_game::{CostPair, Family, Forwarder, GameConfig, RewardModel, Variant};

const TOL: f64 = 1e-12;

fn instances(seed: u64, count: usize) -> Vec<(RewardModel, GameConfig)> {
    let mut rng = common::rng(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=6);
            let locations = rng.random_range(1..=4);
            (common::located_model(&mut rng, n, locations), common::config(&mut rng))
        })
        .collect()
}

/// Cost pairs of every equilibrium and of the simple policy.
fn competitive_points(model: &RewardModel, cfg: &GameConfig) -> Vec<CostPair> {
    let opts = IterOptions { tol: TOL, ..IterOptions::default() };
    let mut out: Vec<CostPair> = Family::ALL.iter().map(|&f| solve_nepp(model, cfg, f, &opts).unwrap().cost_pair).collect();
    for v in Variant::ALL {
        out.push(solve_po_nepp(model, cfg, v, &opts).unwrap().cost_pair);
    }
    let alpha = Forwarder::BOTH.map(|who| solve_threshold(&model.marginal_pmf(who), cfg, who, TOL).unwrap().alpha);
    out.push(evaluate_policy_pair(&PolicyPairCO::Simple { alpha }, model, cfg).unwrap().cost);
    out
}

#[test]
fn joint_optimum_beats_every_competitive_point() {
    for (model, cfg) in instances(51, 20) {
        let points = competitive_points(&model, &cfg);
        for gamma in gamma_grid(9) {
            let sol = coop_value_iteration(&model, &cfg, gamma, TOL).unwrap();
            let best = sol.cost_pair.weighted(gamma);
            for p in &points {
                assert!(best <= p.weighted(gamma) + 1e-6, "gamma {gamma}: {best} vs {}", p.weighted(gamma));
            }
        }
    }
}

#[test]
fn simultaneous_stop_is_never_chosen() {
    for (model, cfg) in instances(52, 20) {
        for gamma in [0.2, 0.5, 0.8] {
            let sol = coop_value_iteration(&model, &cfg, gamma, TOL).unwrap();
            let rule = sol.rule;
            let policy = sol.policy();
            for i in 0..model.n() {
                for j in 0..model.n() {
                    let (ri, rj) = (model.reward(i), model.reward(j));
                    assert_ne!(policy.pair_stop(i, j, ri, rj).unwrap(), [1.0, 1.0]);
                    let [sc, cs, cc] = rule.pair_costs(ri, rj);
                    let (Some(sc), Some(cs)) = (sc, cs) else { continue };
                    let ss = cfg.win_prob_1 * sc + (1.0 - cfg.win_prob_1) * cs;
                    let three = sc.min(cs).min(cc.unwrap());
                    assert_eq!(three.min(ss), three);
                    assert_eq!(sol.value(&model, State::Both(i, j)), three);
                }
            }
        }
    }
}

#[test]
fn lone_stopping_ignores_the_weight() {
    for (model, cfg) in instances(53, 20) {
        let alpha = solve_threshold(&model.marginal_pmf(Forwarder::First), &cfg, Forwarder::First, TOL).unwrap().alpha;
        for gamma in [0.1, 0.5, 0.9] {
            let policy = coop_value_iteration(&model, &cfg, gamma, TOL).unwrap().policy();
            for (i, &r) in model.rewards().iter().enumerate() {
                let expect = r.value().is_some_and(|v| v >= alpha);
                // Rewards within rounding of the threshold may go either way.
                if r.value().is_some_and(|v| (v - alpha).abs() <= 1e-9) {
                    continue;
                }
                assert_eq!(policy.lone_stop(Forwarder::First, i, r) == 1.0, expect, "{r} vs alpha {alpha}");
            }
        }
    }
}

#[test]
fn symmetric_instances_split_evenly() {
    let mut rng = common::rng(54);
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let model = common::symmetric_model(&mut rng, n);
        let cfg = common::symmetric_config(&mut rng);
        let sol = coop_value_iteration(&model, &cfg, 0.5, TOL).unwrap();
        assert!((sol.cost_pair.c1 - sol.cost_pair.c2).abs() <= 1e-9, "{:?}", sol.cost_pair);
    }
}

#[test]
fn frontier_is_a_monotone_trade_off() {
    for (model, cfg) in instances(55, 10) {
        let front = pareto_sweep(&model, &cfg, &gamma_grid(19), TOL).unwrap();
        for (k, (_, a)) in front.iter().enumerate() {
            for (_, b) in &front[k + 1..] {
                let dominates = |x: &CostPair, y: &CostPair| x.c1 < y.c1 - 1e-9 && x.c2 < y.c2 - 1e-9;
                assert!(!dominates(a, b) && !dominates(b, a), "{a:?} vs {b:?}");
            }
        }
        for w in front.windows(2) {
            assert!(w[1].1.c1 <= w[0].1.c1 + 1e-9);
            assert!(w[1].1.c2 >= w[0].1.c2 - 1e-9);
        }
        let points = competitive_points(&model, &cfg);
        for (_, f) in &front {
            for p in &points {
                assert!(!(p.c1 < f.c1 - 1e-6 && p.c2 < f.c2 - 1e-6), "{p:?} dominates frontier point {f:?}");
            }
        }
    }
}
