//! Cooperative benchmark: both forwarders minimize a weighted sum of their
//! costs, which turns the game into a single transient MDP.

use serde::{Deserialize, Serialize};

use crate::co::{evaluate_policy_pair, lone_solutions, CoopRule, CostPair, PolicyPairCO, State};
use crate::error::{Error, Result};
use crate::fixed::{solve_scalar, Schedule, Sum};
use crate::model::RewardModel;
use crate::single::{GameConfig, DEFAULT_SINGLE_TOL};
use crate::types::Forwarder;

const MAX_SWEEPS: usize = 10_000_000;

/// Optimal joint policy for one weight `gamma` on the first forwarder's cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoopSolution {
    pub gamma: f64,
    pub rule: CoopRule,
    /// Per-forwarder costs of the joint policy from the moment both continue.
    pub cost_pair: CostPair,
    pub iterations: usize,
    pub residual: f64,
}

impl CoopSolution {
    pub fn policy(&self) -> PolicyPairCO {
        PolicyPairCO::Coop(self.rule)
    }

    /// Optimal weighted value at a state.
    pub fn value(&self, model: &RewardModel, state: State) -> f64 {
        let rule = &self.rule;
        let lone = |who: Forwarder, i: usize| {
            let w = rule.lone_cont[who.index()];
            rule.stop_cost(who, model.reward(i)).map_or(w, |s| s.min(w))
        };
        match state {
            State::Both(i, j) => rule
                .pair_costs(model.reward(i), model.reward(j))
                .into_iter()
                .flatten()
                .fold(f64::INFINITY, f64::min),
            State::FirstAlone(i) => lone(Forwarder::First, i),
            State::SecondAlone(j) => lone(Forwarder::Second, j),
        }
    }
}

/// Value iteration on the weighted MDP.
///
/// Every state value is determined by three scalars: each forwarder's
/// weighted cost of continuing alone and the weighted cost of both
/// continuing, so the sweeps run on those. The lone scalars start from the
/// scaled lone-forwarder optimum, which is already their fixed point; the
/// two-forwarder scalar starts from zero cost.
pub fn coop_value_iteration(model: &RewardModel, config: &GameConfig, gamma: f64, tol: f64) -> Result<CoopSolution> {
    config.validate()?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidConfig(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    let tau = config.tau();
    let lone = lone_solutions(model, config, DEFAULT_SINGLE_TOL.min(tol))?;
    let weights = [gamma, 1.0 - gamma];
    let eta = [config.tradeoff_1, config.tradeoff_2];
    let mut lone_cont = [0.0; 2];
    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    let schedule = Schedule { tol, max_iters: MAX_SWEEPS, relaxation: 1.0 };
    for who in Forwarder::BOTH {
        let k = who.index();
        let weta = weights[k] * eta[k];
        let marginal = model.marginal(who);
        let rewards = model.rewards();
        let fp = solve_scalar("cooperative value iteration", weights[k] * lone[k].d_cost, schedule, |w| {
            let (mut v, mut slope) = (Sum::new(weights[k] * tau), Sum::default());
            for (r, p) in rewards.iter().zip(marginal) {
                match r.stop_cost(weta) {
                    Some(s) if s <= w => v.add(p * (s - w)),
                    _ => slope.add(*p),
                }
            }
            (v.value(), slope.value())
        })?;
        lone_cont[k] = fp.x[0];
        iterations += fp.iterations;
        residual = residual.max(fp.residual);
    }

    // The two-forwarder scalar is iterated relative to the sum of the lone
    // scalars, which keeps rounding at the scale of the difference.
    let base = lone_cont[0] + lone_cont[1];
    let mut rule = CoopRule { gamma, eta, lone_cont, both_cont: 0.0 };
    let support: Vec<(f64, f64)> = model
        .joint()
        .iter()
        .map(|e| {
            let [sc, cs, _] = rule.pair_costs(model.reward(e.i), model.reward(e.j));
            let best = sc.unwrap_or(f64::INFINITY).min(cs.unwrap_or(f64::INFINITY));
            (best - base, e.p)
        })
        .collect();
    let fp = solve_scalar("cooperative value iteration", -base, schedule, |u| {
        let (mut v, mut slope) = (Sum::new(tau), Sum::default());
        for &(stop, p) in &support {
            if stop <= u {
                v.add(p * (stop - u));
            } else {
                slope.add(p);
            }
        }
        (v.value(), slope.value())
    })?;
    rule.both_cont = base + fp.x[0];
    iterations += fp.iterations;
    residual = residual.max(fp.residual);

    let values = evaluate_policy_pair(&PolicyPairCO::Coop(rule), model, config)?;
    Ok(CoopSolution { gamma, rule, cost_pair: values.cost, iterations, residual })
}

/// Cost pairs of the cooperative optimum over a grid of weights, sorted by
/// weight, with repeated cost pairs kept once.
pub fn pareto_sweep(model: &RewardModel, config: &GameConfig, gamma_grid: &[f64], tol: f64) -> Result<Vec<(f64, CostPair)>> {
    if gamma_grid.is_empty() {
        return Err(Error::InvalidConfig("gamma grid is empty".into()));
    }
    let mut grid = gamma_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, CostPair)> = Vec::with_capacity(grid.len());
    for gamma in grid {
        let sol = coop_value_iteration(model, config, gamma, tol)?;
        if out.iter().any(|(_, c)| c.max_abs_diff(&sol.cost_pair) <= 1e-9) {
            continue;
        }
        out.push((gamma, sol.cost_pair));
    }
    Ok(out)
}

/// Evenly spaced weights strictly inside (0, 1).
pub fn gamma_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|k| k as f64 / (points + 1) as f64).collect()
}
