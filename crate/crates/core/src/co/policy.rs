use std::fmt;

use serde::{Deserialize, Serialize};

use super::stage::{classify_region, mixed_strategy_probs, CostPair, Family, RegionLabel, Thresholds};
use crate::error::{Error, Result};
use crate::model::RewardModel;
use crate::single::GameConfig;
use crate::types::{Forwarder, Reward};

/// A game state with at least one active forwarder, by reward index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    Both(usize, usize),
    FirstAlone(usize),
    SecondAlone(usize),
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Both(i, j) => write!(f, "(r{i}, r{j})"),
            State::FirstAlone(i) => write!(f, "(r{i}, done)"),
            State::SecondAlone(j) => write!(f, "(done, r{j})"),
        }
    }
}

/// The threshold-region equilibrium rule for one family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeppRule {
    pub family: Family,
    pub c: CostPair,
    pub d: CostPair,
    pub config: GameConfig,
    thresholds: Thresholds,
}

impl NeppRule {
    pub fn new(family: Family, c: CostPair, d: CostPair, config: GameConfig) -> Self {
        let thresholds = Thresholds::from_costs(c, d, &config).ordered();
        NeppRule { family, c, d, config, thresholds }
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn region(&self, r_i: Reward, r_j: Reward) -> RegionLabel {
        classify_region(r_i, r_j, &self.thresholds).expect("ordered thresholds always classify")
    }
}

/// The cooperative argmin rule. `lone_cont` holds the weighted cost of
/// continuing alone for each forwarder and `both_cont` the weighted cost
/// of both continuing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoopRule {
    pub gamma: f64,
    pub eta: [f64; 2],
    pub lone_cont: [f64; 2],
    pub both_cont: f64,
}

impl CoopRule {
    fn weight(&self, who: Forwarder) -> f64 {
        match who {
            Forwarder::First => self.gamma,
            Forwarder::Second => 1.0 - self.gamma,
        }
    }

    /// Weighted cost of `who` stopping alone on `r`.
    pub fn stop_cost(&self, who: Forwarder, r: Reward) -> Option<f64> {
        r.stop_cost(self.weight(who) * self.eta[who.index()])
    }

    /// Weighted costs of (s, c), (c, s) and (c, c) at a two-forwarder state.
    pub fn pair_costs(&self, r_i: Reward, r_j: Reward) -> [Option<f64>; 3] {
        [
            self.stop_cost(Forwarder::First, r_i).map(|s| s + self.lone_cont[1]),
            self.stop_cost(Forwarder::Second, r_j).map(|s| s + self.lone_cont[0]),
            Some(self.both_cont),
        ]
    }

    /// Index of the chosen joint action among (s, c), (c, s), (c, c); the
    /// earliest wins ties.
    pub fn choice(&self, r_i: Reward, r_j: Reward) -> usize {
        let costs = self.pair_costs(r_i, r_j);
        let mut best = 2;
        for k in (0..2).rev() {
            if let Some(v) = costs[k] {
                if v <= costs[best].unwrap() {
                    best = k;
                }
            }
        }
        best
    }

    /// Whether (s, c) and (c, s) are both optimal at a two-forwarder state,
    /// up to a relative `1e-12`. The cooperative policy then splits the
    /// state evenly between them, which keeps symmetric instances symmetric.
    pub fn split(&self, r_i: Reward, r_j: Reward) -> bool {
        let costs = self.pair_costs(r_i, r_j);
        match (costs[0], costs[1]) {
            (Some(a), Some(b)) => (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()).max(1.0) && a.min(b) <= self.both_cont,
            _ => false,
        }
    }
}

const TIE_TOL: f64 = 1e-12;

/// Dense per-state stopping probabilities, for small models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub lone: [Vec<f64>; 2],
    /// Row-major `n x n` table of `[F1, F2]` stopping probabilities.
    pub pair: Vec<[f64; 2]>,
}

/// A stationary policy pair, stored as a rule where possible so that large
/// models never need an `n x n` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyPairCO {
    /// Each forwarder stops iff its reward reaches its lone threshold.
    Simple { alpha: [f64; 2] },
    Nepp(NeppRule),
    Coop(CoopRule),
    Table(PolicyTable),
}

impl PolicyPairCO {
    /// Joint action at a two-forwarder state as a mixture of independent
    /// stopping-probability pairs. Only the cooperative policy ever
    /// returns more than one component.
    pub fn pair_mixture(&self, i: usize, j: usize, r_i: Reward, r_j: Reward) -> Result<Vec<(f64, [f64; 2])>> {
        Ok(match self {
            PolicyPairCO::Coop(rule) if rule.split(r_i, r_j) => vec![(0.5, [1.0, 0.0]), (0.5, [0.0, 1.0])],
            _ => vec![(1.0, self.pair_stop(i, j, r_i, r_j)?)],
        })
    }

    /// Stopping probability of `who` when it is the only active forwarder.
    pub fn lone_stop(&self, who: Forwarder, i: usize, r: Reward) -> f64 {
        let k = who.index();
        match self {
            PolicyPairCO::Simple { alpha } => stop_at(r, alpha[k]),
            PolicyPairCO::Nepp(rule) => stop_at(r, rule.thresholds.alpha[k]),
            PolicyPairCO::Coop(rule) => match rule.stop_cost(who, r) {
                Some(s) if s <= rule.lone_cont[k] => 1.0,
                _ => 0.0,
            },
            PolicyPairCO::Table(t) => t.lone[k][i],
        }
    }

    /// Stopping probabilities `[F1, F2]` at a two-forwarder state.
    pub fn pair_stop(&self, i: usize, j: usize, r_i: Reward, r_j: Reward) -> Result<[f64; 2]> {
        Ok(match self {
            PolicyPairCO::Simple { alpha } => [stop_at(r_i, alpha[0]), stop_at(r_j, alpha[1])],
            PolicyPairCO::Nepp(rule) => match rule.region(r_i, r_j) {
                RegionLabel::R1 => [0.0, 0.0],
                RegionLabel::R2 => [1.0, 0.0],
                RegionLabel::R3 => [0.0, 1.0],
                RegionLabel::R5 => [1.0, 1.0],
                RegionLabel::R4 => match rule.family {
                    Family::Sc => [1.0, 0.0],
                    Family::Cs => [0.0, 1.0],
                    Family::Mixed => {
                        let (g1, g2) = mixed_strategy_probs(r_i, r_j, rule.c, rule.d, &rule.config)?;
                        [g1, g2]
                    }
                },
            },
            PolicyPairCO::Coop(rule) => match rule.choice(r_i, r_j) {
                0 => [1.0, 0.0],
                1 => [0.0, 1.0],
                _ => [0.0, 0.0],
            },
            PolicyPairCO::Table(t) => {
                let n = t.lone[0].len();
                t.pair[i * n + j]
            }
        })
    }
}

fn stop_at(r: Reward, alpha: f64) -> f64 {
    match r {
        Reward::Value(v) if v >= alpha => 1.0,
        _ => 0.0,
    }
}

/// Values of a policy pair. Two-forwarder values are recovered on demand
/// from the two scalar continuation costs, so no `n x n` table is stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyValues {
    /// Expected cost of each forwarder from the moment both continue.
    pub cost: CostPair,
    /// Expected cost of each forwarder from the moment it continues alone.
    pub lone_continue: CostPair,
    /// Lone-forwarder state values per reward index.
    pub lone: [Vec<f64>; 2],
}

impl PolicyValues {
    /// Values `[J1, J2]` at a two-forwarder state played with stopping
    /// probabilities `stop`.
    pub fn pair_value(&self, stop: [f64; 2], r_i: Reward, r_j: Reward, config: &GameConfig) -> [f64; 2] {
        let [x, y] = stop;
        let (cc, cs, sc, ss) = ((1.0 - x) * (1.0 - y), (1.0 - x) * y, x * (1.0 - y), x * y);
        let (nu1, nu2) = (config.win_prob_1, 1.0 - config.win_prob_1);
        let d = self.lone_continue;
        // Stopping terms carry zero weight whenever the reward is infeasible.
        let s1 = r_i.stop_cost(config.tradeoff_1).unwrap_or(0.0);
        let s2 = r_j.stop_cost(config.tradeoff_2).unwrap_or(0.0);
        [
            cc * self.cost.c1 + cs * d.c1 + sc * s1 + ss * (nu1 * s1 + nu2 * d.c1),
            cc * self.cost.c2 + cs * s2 + sc * d.c2 + ss * (nu1 * d.c2 + nu2 * s2),
        ]
    }

    pub fn state_value(&self, policy: &PolicyPairCO, model: &RewardModel, config: &GameConfig, state: State) -> Result<[f64; 2]> {
        Ok(match state {
            State::Both(i, j) => {
                let (ri, rj) = (model.reward(i), model.reward(j));
                let mut out = [0.0; 2];
                for (w, stop) in policy.pair_mixture(i, j, ri, rj)? {
                    let v = self.pair_value(stop, ri, rj, config);
                    out[0] += w * v[0];
                    out[1] += w * v[1];
                }
                out
            }
            State::FirstAlone(i) => [self.lone[0][i], 0.0],
            State::SecondAlone(j) => [0.0, self.lone[1][j]],
        })
    }
}

/// Smallest total stopping mass accepted before a policy is declared to
/// never terminate.
const MIN_STOP_MASS: f64 = 1e-14;

/// Exact evaluation of a stationary policy pair.
///
/// The chain is transient with a simple structure: a forwarder left alone
/// faces i.i.d. rewards, and the two-forwarder states only communicate
/// through the common continuation cost. Each forwarder's value therefore
/// reduces to two scalar linear equations, one for continuing alone and one
/// for both continuing.
pub fn evaluate_policy_pair(policy: &PolicyPairCO, model: &RewardModel, config: &GameConfig) -> Result<PolicyValues> {
    config.validate()?;
    let tau = config.tau();
    let rewards = model.rewards();
    if let PolicyPairCO::Table(t) = policy {
        let n = model.n();
        if t.lone.iter().any(|v| v.len() != n) || t.pair.len() != n * n {
            return Err(Error::InvalidConfig("policy table does not match the model size".into()));
        }
        let bad = t.lone.iter().flatten().chain(t.pair.iter().flatten()).any(|p| !(0.0..=1.0).contains(p));
        if bad {
            return Err(Error::InvalidConfig("policy probabilities must lie in [0, 1]".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let [x, y] = t.pair[i * n + j];
                if (x > 0.0 && !rewards[i].is_feasible()) || (y > 0.0 && !rewards[j].is_feasible()) {
                    return Err(Error::StopsOnInfeasible(State::Both(i, j).to_string()));
                }
            }
        }
    }

    let mut lone_continue = [0.0; 2];
    let mut lone = [Vec::new(), Vec::new()];
    for who in Forwarder::BOTH {
        let eta = config.eta(who);
        let marginal = model.marginal(who);
        let sigma: Vec<f64> = rewards.iter().enumerate().map(|(i, &r)| policy.lone_stop(who, i, r)).collect();
        let (mut mass, mut num) = (0.0, tau);
        for (i, (&r, &s)) in rewards.iter().zip(&sigma).enumerate() {
            if s == 0.0 {
                continue;
            }
            let Some(cost) = r.stop_cost(eta) else {
                let state = if who == Forwarder::First { State::FirstAlone(i) } else { State::SecondAlone(i) };
                return Err(Error::StopsOnInfeasible(state.to_string()));
            };
            mass += marginal[i] * s;
            num += marginal[i] * s * cost;
        }
        if mass <= MIN_STOP_MASS {
            return Err(Error::InfiniteDelay(format!("{who} never stops while alone")));
        }
        let d = num / mass;
        lone_continue[who.index()] = d;
        lone[who.index()] = rewards
            .iter()
            .zip(&sigma)
            .map(|(r, &s)| if s > 0.0 { s * r.stop_cost(eta).unwrap() + (1.0 - s) * d } else { d })
            .collect();
    }

    let partial = PolicyValues {
        cost: CostPair::new(0.0, 0.0),
        lone_continue: CostPair::new(lone_continue[0], lone_continue[1]),
        lone,
    };
    // With the both-continue cost set to zero, pair_value returns exactly
    // the part of each value that does not depend on it.
    let (mut leave, mut acc) = (0.0, [tau, tau]);
    for e in model.joint() {
        let (ri, rj) = (rewards[e.i], rewards[e.j]);
        for (w, stop) in policy.pair_mixture(e.i, e.j, ri, rj)? {
            if (stop[0] > 0.0 && !ri.is_feasible()) || (stop[1] > 0.0 && !rj.is_feasible()) {
                return Err(Error::StopsOnInfeasible(State::Both(e.i, e.j).to_string()));
            }
            let p = w * e.p;
            let v = partial.pair_value(stop, ri, rj, config);
            leave += p * (1.0 - (1.0 - stop[0]) * (1.0 - stop[1]));
            acc[0] += p * v[0];
            acc[1] += p * v[1];
        }
    }
    if leave <= MIN_STOP_MASS {
        return Err(Error::InfiniteDelay("neither forwarder ever stops while both are active".into()));
    }
    Ok(PolicyValues { cost: CostPair::new(acc[0] / leave, acc[1] / leave), ..partial })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::single::solve_threshold;

    fn cfg() -> GameConfig {
        GameConfig { mean_interarrival_s: 0.2, tradeoff_1: 1.5, tradeoff_2: 0.7, win_prob_1: 0.35 }
    }

    fn model() -> RewardModel {
        let rewards = vec![Reward::Infeasible, Reward::Value(1.0), Reward::Value(2.0), Reward::Value(4.0)];
        let dense = vec![
            vec![0.05, 0.05, 0.05, 0.05],
            vec![0.05, 0.10, 0.05, 0.05],
            vec![0.05, 0.05, 0.10, 0.05],
            vec![0.05, 0.05, 0.05, 0.15],
        ];
        RewardModel::from_dense(rewards, &dense).unwrap()
    }

    fn always_stop(n: usize, rewards: &[Reward]) -> PolicyTable {
        let f = |r: Reward| if r.is_feasible() { 1.0 } else { 0.0 };
        let lone: Vec<f64> = rewards.iter().map(|&r| f(r)).collect();
        let mut pair = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pair.push([f(rewards[i]), f(rewards[j])]);
            }
        }
        PolicyTable { lone: [lone.clone(), lone], pair }
    }

    #[test]
    fn always_stopping_matches_one_step_form() {
        let m = model();
        let c = cfg();
        let policy = PolicyPairCO::Table(always_stop(m.n(), m.rewards()));
        let v = evaluate_policy_pair(&policy, &m, &c).unwrap();
        let mean_stop1: f64 = m.marginal(Forwarder::First).iter().zip(m.rewards()).filter_map(|(p, r)| r.value().map(|x| p * -1.5 * x)).sum();
        let lone_mass1: f64 = m.marginal(Forwarder::First)[1..].iter().sum();
        let d1 = (c.tau() + mean_stop1) / lone_mass1;
        assert!((v.lone_continue.c1 - d1).abs() < 1e-12);
        let (ri, rj) = (m.reward(2), m.reward(3));
        let j = v.pair_value([1.0, 1.0], ri, rj, &c);
        assert!((j[0] - (0.35 * -3.0 + 0.65 * d1)).abs() < 1e-12);
    }

    #[test]
    fn simple_policy_lone_values_match_single_agent() {
        let m = model();
        let c = cfg();
        let s: Vec<_> = Forwarder::BOTH
            .iter()
            .map(|&w| solve_threshold(&m.marginal_pmf(w), &c, w, 1e-13).unwrap())
            .collect();
        let policy = PolicyPairCO::Simple { alpha: [s[0].alpha, s[1].alpha] };
        let v = evaluate_policy_pair(&policy, &m, &c).unwrap();
        for who in Forwarder::BOTH {
            let k = who.index();
            for (i, r) in m.rewards().iter().enumerate() {
                let expect = r.stop_cost(c.eta(who)).map_or(s[k].d_cost, |x| x.min(s[k].d_cost));
                assert!((v.lone[k][i] - expect).abs() <= 1e-9, "{who} {i}");
            }
        }
    }

    #[test]
    fn never_stopping_is_an_error() {
        let m = model();
        let policy = PolicyPairCO::Simple { alpha: [100.0, 1.0] };
        assert!(matches!(evaluate_policy_pair(&policy, &m, &cfg()), Err(Error::InfiniteDelay(_))));
    }

    #[test]
    fn stopping_on_infeasible_is_rejected() {
        let m = model();
        let mut t = always_stop(m.n(), m.rewards());
        t.pair[1] = [1.0, 1.0];
        assert!(matches!(evaluate_policy_pair(&PolicyPairCO::Table(t), &m, &cfg()), Err(Error::StopsOnInfeasible(_))));
    }

    #[test]
    fn evaluation_solves_the_linear_system() {
        // Plain fixed-point iteration of the policy equations as an oracle.
        let m = model();
        let c = cfg();
        let policy = PolicyPairCO::Simple { alpha: [1.5, 2.5] };
        let v = evaluate_policy_pair(&policy, &m, &c).unwrap();
        let mut cost = [0.0, 0.0];
        let mut iter = v.clone();
        for _ in 0..20_000 {
            iter.cost = CostPair::new(cost[0], cost[1]);
            let mut next = [c.tau(), c.tau()];
            for e in m.joint() {
                let (ri, rj) = (m.reward(e.i), m.reward(e.j));
                let j = iter.pair_value(policy.pair_stop(e.i, e.j, ri, rj).unwrap(), ri, rj, &c);
                next[0] += e.p * j[0];
                next[1] += e.p * j[1];
            }
            cost = next;
        }
        assert!((cost[0] - v.cost.c1).abs() < 1e-10);
        assert!((cost[1] - v.cost.c2).abs() < 1e-10);
    }
}
