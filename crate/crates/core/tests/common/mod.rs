//! Random instances shared by the integration tests.

#![allow(dead_code)]

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relay_game::{GameConfig, LocationTable, Reward, RewardModel, RewardPmf};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly increasing finite rewards preceded by the infeasible sentinel.
pub fn rewards(rng: &mut impl Rng, feasible: usize) -> Vec<Reward> {
    let mut out = vec![Reward::Infeasible];
    let mut v = rng.random_range(-1.0..3.0);
    for _ in 0..feasible {
        out.push(Reward::Value(v));
        v += rng.random_range(0.05..2.0);
    }
    out
}

/// Positive weights normalized to one, none below a ninth of the largest.
pub fn weights(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub fn config(rng: &mut impl Rng) -> GameConfig {
    GameConfig {
        mean_interarrival_s: rng.random_range(0.05..1.0),
        tradeoff_1: rng.random_range(0.5..2.0),
        tradeoff_2: rng.random_range(0.5..2.0),
        win_prob_1: rng.random_range(0.1..0.9),
    }
}

pub fn pmf(rng: &mut impl Rng, n: usize) -> RewardPmf {
    let r = rewards(rng, n - 1);
    let mut p = weights(rng, n);
    if rng.random_bool(0.3) {
        p[0] = 0.0;
    }
    let total: f64 = p.iter().sum();
    RewardPmf::new(r, p.into_iter().map(|x| x / total).collect()).unwrap()
}

/// Conditional pmf over a random subset of `0..n` that always includes a
/// feasible index.
fn conditional(rng: &mut impl Rng, n: usize) -> Vec<(usize, f64)> {
    let k = rng.random_range(1..=n);
    let mut idx = sample(rng, n, k).into_vec();
    if idx.iter().all(|&i| i == 0) {
        idx.push(rng.random_range(1..n));
    }
    idx.sort_unstable();
    let w = weights(rng, idx.len());
    idx.into_iter().zip(w).collect()
}

/// A model with `n` rewards (sentinel included) mixed over `locations`
/// relay locations, so it carries the independence structure.
pub fn located_model(rng: &mut impl Rng, n: usize, locations: usize) -> RewardModel {
    let r = rewards(rng, n - 1);
    let q = weights(rng, locations);
    let locs = q
        .into_iter()
        .map(|prob| LocationTable { position: None, prob, conditional: [conditional(rng, n), conditional(rng, n)] })
        .collect();
    RewardModel::from_locations(r, locs).unwrap()
}

/// A model whose location conditionals are point masses, as when the reward
/// is a function of the relay location alone.
pub fn deterministic_model(rng: &mut impl Rng, n: usize, locations: usize) -> RewardModel {
    let r = rewards(rng, n - 1);
    let q = weights(rng, locations);
    let locs = q
        .into_iter()
        .enumerate()
        .map(|(k, prob)| {
            // The second forwarder may be out of range, except at the first location.
            let j = rng.random_range(usize::from(k == 0)..n);
            LocationTable { position: None, prob, conditional: [vec![(rng.random_range(1..n), 1.0)], vec![(j, 1.0)]] }
        })
        .collect();
    RewardModel::from_locations(r, locs).unwrap()
}

/// A model invariant under exchanging the forwarders.
pub fn symmetric_model(rng: &mut impl Rng, n: usize) -> RewardModel {
    let r = rewards(rng, n - 1);
    let mut dense = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let p = rng.random_range(0.1..1.0);
            dense[i][j] = p;
            dense[j][i] = p;
        }
    }
    let total: f64 = dense.iter().flatten().sum();
    for row in &mut dense {
        for p in row.iter_mut() {
            *p /= total;
        }
    }
    RewardModel::from_dense(r, &dense).unwrap()
}

pub fn symmetric_config(rng: &mut impl Rng) -> GameConfig {
    let eta = rng.random_range(0.5..2.0);
    GameConfig { mean_interarrival_s: rng.random_range(0.05..1.0), tradeoff_1: eta, tradeoff_2: eta, win_prob_1: 0.5 }
}

/// A located model whose forwarders share every conditional pmf.
pub fn symmetric_located_model(rng: &mut impl Rng, n: usize, locations: usize) -> RewardModel {
    let r = rewards(rng, n - 1);
    let q = weights(rng, locations);
    let locs = q
        .into_iter()
        .map(|prob| {
            let c = conditional(rng, n);
            LocationTable { position: None, prob, conditional: [c.clone(), c] }
        })
        .collect();
    RewardModel::from_locations(r, locs).unwrap()
}
