//! Lone-forwarder optimal stopping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{solve_scalar, Schedule, Sum};
use crate::types::{Forwarder, Reward, RewardPmf};

/// Economic and contention parameters of the game.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    /// Mean time between relay wake-ups, in seconds.
    pub mean_interarrival_s: f64,
    /// Delay/reward trade-off multiplier of the first forwarder.
    pub tradeoff_1: f64,
    /// Delay/reward trade-off multiplier of the second forwarder.
    pub tradeoff_2: f64,
    /// Probability that the first forwarder wins when both stop on a relay.
    pub win_prob_1: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig::telosb()
    }
}

impl GameConfig {
    pub fn telosb() -> Self {
        GameConfig { mean_interarrival_s: 0.01, tradeoff_1: 100.0, tradeoff_2: 100.0, win_prob_1: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_interarrival_s.is_finite() && self.mean_interarrival_s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "mean_interarrival_s must be positive, got {}",
                self.mean_interarrival_s
            )));
        }
        for eta in [self.tradeoff_1, self.tradeoff_2] {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::InvalidConfig(format!("trade-off multipliers must be positive, got {eta}")));
            }
        }
        if !(self.win_prob_1 > 0.0 && self.win_prob_1 < 1.0) {
            return Err(Error::InvalidConfig(format!("win_prob_1 must lie in (0, 1), got {}", self.win_prob_1)));
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.mean_interarrival_s
    }

    pub fn eta(&self, who: Forwarder) -> f64 {
        match who {
            Forwarder::First => self.tradeoff_1,
            Forwarder::Second => self.tradeoff_2,
        }
    }

    pub fn nu(&self, who: Forwarder) -> f64 {
        match who {
            Forwarder::First => self.win_prob_1,
            Forwarder::Second => 1.0 - self.win_prob_1,
        }
    }

    /// The configuration with the forwarders' roles exchanged.
    pub fn swapped(&self) -> Self {
        GameConfig {
            mean_interarrival_s: self.mean_interarrival_s,
            tradeoff_1: self.tradeoff_2,
            tradeoff_2: self.tradeoff_1,
            win_prob_1: 1.0 - self.win_prob_1,
        }
    }
}

/// Optimal lone-forwarder threshold and the matching cost of continuing alone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleAgentSolution {
    pub alpha: f64,
    pub d_cost: f64,
    pub iterations: usize,
    pub residual: f64,
}

pub const DEFAULT_SINGLE_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 1_000_000;

/// `beta(x) - x = E[(R - x)^+] - step`, summed on its own scale, and the
/// slope `P(R <= x)` of `beta(x) = E[max{x, R}] - step`. Infeasible rewards
/// contribute `x` to the expectation.
fn beta_step(pmf: &RewardPmf, x: f64, step: f64) -> (f64, f64) {
    let (mut excess, mut above) = (Sum::new(-step), Sum::default());
    for (r, p) in pmf.iter() {
        if let Reward::Value(v) = r {
            if v > x {
                excess.add(p * (v - x));
                above.add(p);
            }
        }
    }
    (excess.value(), 1.0 - above.value())
}

#[cfg(test)]
fn beta(pmf: &RewardPmf, x: f64, step: f64) -> f64 {
    x + beta_step(pmf, x, step).0
}

/// Solves the lone-forwarder stopping problem for `who`: the threshold
/// `alpha` is the fixed point of `x -> E[max{x, R}] - tau/eta`, iterated from
/// just below the smallest feasible reward until successive iterates differ
/// by at most `tol` and then finished with exact steps on the active piece.
pub fn solve_threshold(pmf: &RewardPmf, config: &GameConfig, who: Forwarder, tol: f64) -> Result<SingleAgentSolution> {
    config.validate()?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    let eta = config.eta(who);
    let step = config.tau() / eta;
    let smallest = pmf
        .iter()
        .filter(|&(_, p)| p > 0.0)
        .find_map(|(r, _)| r.value())
        .ok_or(Error::NoFeasibleRelay(who))?;
    let schedule = Schedule { tol, max_iters: MAX_ITERATIONS, relaxation: 1.0 };
    let fp = solve_scalar("lone-forwarder threshold iteration", smallest - step, schedule, |x| beta_step(pmf, x, step))?;
    let alpha = fp.x[0];
    Ok(SingleAgentSolution { alpha, d_cost: -eta * alpha, iterations: fp.iterations, residual: fp.residual })
}

/// Plain value iteration `J_k(r) = min{-eta r, tau + E[J_{k-1}(R)]}` from
/// `J_0 = 0`, returned after `sweeps` sweeps as one value per pmf entry.
/// Stopping on an infeasible reward is not allowed, so those entries always
/// hold the continuation value.
pub fn value_iteration_oracle(pmf: &RewardPmf, config: &GameConfig, who: Forwarder, sweeps: usize) -> Vec<f64> {
    let eta = config.eta(who);
    let mut j = vec![0.0; pmf.len()];
    for _ in 0..sweeps {
        let cont = config.tau() + pmf.iter().zip(&j).map(|((_, p), v)| p * v).sum::<f64>();
        for (slot, r) in j.iter_mut().zip(pmf.rewards()) {
            *slot = match r.stop_cost(eta) {
                Some(s) => s.min(cont),
                None => cont,
            };
        }
    }
    j
}

/// Threshold implied by a value table: the continuation cost divided by `-eta`.
pub fn implied_threshold(pmf: &RewardPmf, config: &GameConfig, who: Forwarder, values: &[f64]) -> f64 {
    let cont = config.tau() + pmf.probs().iter().zip(values).map(|(p, v)| p * v).sum::<f64>();
    cont / -config.eta(who)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tau: f64, eta: f64) -> GameConfig {
        GameConfig { mean_interarrival_s: tau, tradeoff_1: eta, tradeoff_2: eta, win_prob_1: 0.5 }
    }

    fn pmf(atoms: &[(Option<f64>, f64)]) -> RewardPmf {
        RewardPmf::from_atoms(atoms.iter().map(|&(r, p)| (Reward::from(r), p))).unwrap()
    }

    #[test]
    fn degenerate_pmf_threshold() {
        let s = solve_threshold(&pmf(&[(Some(3.0), 1.0)]), &cfg(0.1, 1.0), Forwarder::First, 1e-12).unwrap();
        assert!((s.alpha - 2.9).abs() < 1e-12);
        assert!((s.d_cost + 2.9).abs() < 1e-12);
    }

    #[test]
    fn two_point_threshold() {
        let s = solve_threshold(&pmf(&[(Some(0.0), 0.5), (Some(1.0), 0.5)]), &cfg(0.1, 1.0), Forwarder::First, 1e-12)
            .unwrap();
        assert!((s.alpha - 0.8).abs() < 1e-11);
        assert!(s.residual <= 1e-12);
    }

    #[test]
    fn infeasible_mass_acts_as_continuation() {
        let p = pmf(&[(None, 0.5), (Some(1.0), 0.5)]);
        let s = solve_threshold(&p, &cfg(0.1, 1.0), Forwarder::Second, 1e-12).unwrap();
        assert!((s.alpha - (1.0 - 0.1 / 0.5)).abs() < 1e-11);
    }

    #[test]
    fn all_infeasible_is_an_error() {
        let p = pmf(&[(None, 1.0)]);
        assert!(matches!(
            solve_threshold(&p, &cfg(0.1, 1.0), Forwarder::First, 1e-10),
            Err(Error::NoFeasibleRelay(Forwarder::First))
        ));
        // The oracle still runs; the continuation branch grows by tau per sweep.
        let j = value_iteration_oracle(&p, &cfg(0.1, 1.0), Forwarder::First, 7);
        assert!((j[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn one_sweep_is_min_with_tau() {
        let p = pmf(&[(Some(-2.0), 0.3), (Some(0.05), 0.3), (Some(4.0), 0.4)]);
        let c = cfg(0.5, 2.0);
        let j = value_iteration_oracle(&p, &c, Forwarder::First, 1);
        for (v, r) in j.iter().zip(p.rewards()) {
            assert_eq!(*v, (-2.0 * r.value().unwrap()).min(0.5));
        }
    }

    #[test]
    fn oracle_table_matches_threshold_form() {
        let p = pmf(&[(None, 0.1), (Some(1.0), 0.2), (Some(2.5), 0.3), (Some(3.0), 0.4)]);
        let c = cfg(0.3, 2.0);
        let s = solve_threshold(&p, &c, Forwarder::First, 1e-12).unwrap();
        let j = value_iteration_oracle(&p, &c, Forwarder::First, 5000);
        for (v, r) in j.iter().zip(p.rewards()) {
            let expect = match r.stop_cost(2.0) {
                Some(st) => st.min(-2.0 * s.alpha),
                None => -2.0 * s.alpha,
            };
            assert!((v - expect).abs() < 1e-9, "{v} vs {expect}");
        }
    }

    #[test]
    fn beta_contracts_below_top_reward() {
        let p = pmf(&[(Some(1.0), 0.2), (Some(2.0), 0.5), (Some(4.0), 0.3)]);
        let pm = 0.3;
        let xs = [-3.0, 0.0, 0.9, 1.7, 2.2, 3.9, 4.0];
        for &a in &xs {
            for &b in &xs {
                let lhs = (beta(&p, a, 0.1) - beta(&p, b, 0.1)).abs();
                assert!(lhs <= (1.0 - pm) * (a - b).abs() + 1e-15);
            }
        }
    }

    #[test]
    fn fixed_point_is_unique() {
        let p = pmf(&[(Some(1.0), 0.2), (Some(2.0), 0.5), (Some(4.0), 0.3)]);
        let s = solve_threshold(&p, &cfg(0.2, 1.0), Forwarder::First, 1e-12).unwrap();
        let mut x = 3.95;
        for _ in 0..10_000 {
            x = beta(&p, x, 0.2);
        }
        assert!((x - s.alpha).abs() <= 2e-12);
    }
}
