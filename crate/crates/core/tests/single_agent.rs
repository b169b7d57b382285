mod common;

use std::time::Instant;

use rand::Rng;
use relay_game::single::{implied_threshold, solve_threshold, value_iteration_oracle};
use relay_game::{Forwarder, GameConfig};

#[test]
fn thresholds_agree_with_value_iteration() {
    let mut rng = common::rng(11);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=10);
        let pmf = common::pmf(&mut rng, n);
        let cfg = common::config(&mut rng);
        let who = if rng.random_bool(0.5) { Forwarder::First } else { Forwarder::Second };
        let sol = solve_threshold(&pmf, &cfg, who, 1e-12).unwrap();
        let table = value_iteration_oracle(&pmf, &cfg, who, 5000);
        let oracle = implied_threshold(&pmf, &cfg, who, &table);
        worst = worst.max((sol.alpha - oracle).abs());
        let eta = cfg.eta(who);
        for (v, r) in table.iter().zip(pmf.rewards()) {
            let expect = r.stop_cost(eta).map_or(-eta * sol.alpha, |s| s.min(-eta * sol.alpha));
            assert!((v - expect).abs() <= 1e-8, "value {v} vs {expect}");
        }
    }
    let elapsed = start.elapsed();
    assert!(worst <= 1e-8, "threshold gap {worst:e}");
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
}

#[test]
fn forwarder_roles_are_interchangeable() {
    let mut rng = common::rng(12);
    for _ in 0..50 {
        let n = rng.random_range(2..=8);
        let pmf = common::pmf(&mut rng, n);
        let cfg = common::config(&mut rng);
        let a = solve_threshold(&pmf, &cfg, Forwarder::First, 1e-11).unwrap();
        // The second forwarder with the first's trade-off is the same problem.
        let swapped = GameConfig { tradeoff_2: cfg.tradeoff_1, ..cfg };
        let b = solve_threshold(&pmf, &swapped, Forwarder::Second, 1e-11).unwrap();
        assert!((a.alpha - b.alpha).abs() <= 2e-11);
        let top = pmf.iter().filter(|&(_, p)| p > 0.0).filter_map(|(r, _)| r.value()).last().unwrap();
        assert!(a.alpha <= top);
    }
}

#[test]
fn threshold_rises_with_patience() {
    let mut rng = common::rng(13);
    for _ in 0..30 {
        let n = rng.random_range(3..=8);
        let pmf = common::pmf(&mut rng, n);
        let cfg = common::config(&mut rng);
        let mut last = f64::NEG_INFINITY;
        for eta in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let c = GameConfig { tradeoff_1: eta, ..cfg };
            let alpha = solve_threshold(&pmf, &c, Forwarder::First, 1e-12).unwrap().alpha;
            assert!(alpha >= last - 1e-12);
            last = alpha;
        }
    }
}
