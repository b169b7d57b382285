use serde::{Deserialize, Serialize};

use super::policy::{evaluate_policy_pair, NeppRule, PolicyPairCO, State};
use super::stage::{build_stage_game, classify_region, indifference_prob, CostPair, Family, RegionLabel, Thresholds};
use crate::error::{Error, Result};
use crate::fixed::{solve, solve_scalar, Eval, Schedule, Sum};
use crate::model::RewardModel;
use crate::single::{solve_threshold, GameConfig, SingleAgentSolution, DEFAULT_SINGLE_TOL};
use crate::types::{Forwarder, Reward};

/// Controls for the cost-pair fixed-point iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Step size in (0, 1]; 1 is plain Picard iteration.
    pub relaxation: f64,
    /// Tolerance of the lone-forwarder threshold solves.
    pub single_tol: f64,
}

impl Default for IterOptions {
    fn default() -> Self {
        IterOptions { tol: 1e-9, max_iters: 1_000_000, relaxation: 1.0, single_tol: DEFAULT_SINGLE_TOL }
    }
}

impl IterOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0 && self.single_tol.is_finite() && self.single_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::InvalidConfig(format!("relaxation must lie in (0, 1], got {}", self.relaxation)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Cost to each forwarder of the equilibrium played in `region`, given the
/// continuation costs.
pub fn region_payoffs(
    r_i: Reward,
    r_j: Reward,
    region: RegionLabel,
    family: Family,
    c: CostPair,
    d: CostPair,
    config: &GameConfig,
) -> [f64; 2] {
    let e = [c.c1 - d.c1, c.c2 - d.c2];
    let (v, _) = region_excess(r_i, r_j, region, family, e, d, config);
    [d.c1 + v[0], d.c2 + v[1]]
}

/// Region payoffs measured from the lone costs, together with each
/// forwarder's derivative with respect to its own excess `e = C - D`.
fn region_excess(
    r_i: Reward,
    r_j: Reward,
    region: RegionLabel,
    family: Family,
    e: [f64; 2],
    d: CostPair,
    config: &GameConfig,
) -> ([f64; 2], [f64; 2]) {
    let need = |s: Option<f64>| s.expect("region requires a feasible reward");
    let sigma1 = || need(r_i.stop_cost(config.tradeoff_1)) - d.c1;
    let sigma2 = || need(r_j.stop_cost(config.tradeoff_2)) - d.c2;
    let (nu1, nu2) = (config.win_prob_1, 1.0 - config.win_prob_1);
    match (region, family) {
        (RegionLabel::R1, _) => (e, [1.0, 1.0]),
        (RegionLabel::R2, _) | (RegionLabel::R4, Family::Sc) => ([sigma1(), 0.0], [0.0; 2]),
        (RegionLabel::R3, _) | (RegionLabel::R4, Family::Cs) => ([0.0, sigma2()], [0.0; 2]),
        (RegionLabel::R5, _) => ([nu1 * sigma1(), nu2 * sigma2()], [0.0; 2]),
        (RegionLabel::R4, Family::Mixed) => {
            // Value of the continue action against the opponent's mix.
            let (a1, b1) = mixed_continue(sigma1(), e[0], nu1);
            let (a2, b2) = mixed_continue(sigma2(), e[1], nu2);
            ([a1, a2], [b1, b2])
        }
    }
}

/// Excess value and slope of continuing while the opponent randomizes so as
/// to make this forwarder indifferent; `nu` is this forwarder's win
/// probability and `sigma` its stop cost above the lone cost.
fn mixed_continue(sigma: f64, e: f64, nu: f64) -> (f64, f64) {
    match indifference_prob(sigma - e, nu * sigma) {
        Some(g) => {
            let den = e - (1.0 - nu) * sigma;
            ((1.0 - g) * e, -nu * (1.0 - nu) * sigma * sigma / (den * den))
        }
        None => (e, 1.0),
    }
}

pub(crate) fn t_excess(e: [f64; 2], family: Family, model: &RewardModel, d: CostPair, config: &GameConfig) -> Result<Eval<2>> {
    let c = CostPair::new(d.c1 + e[0], d.c2 + e[1]);
    let th = Thresholds::from_costs(c, d, config).ordered();
    let rewards = model.rewards();
    // The step T(e) - e is summed directly, with the `-e` folded in per term.
    let mut step = [Sum::new(config.tau()), Sum::new(config.tau())];
    let mut slope = [Sum::default(); 2];
    for en in model.joint() {
        let (ri, rj) = (rewards[en.i], rewards[en.j]);
        let region = classify_region(ri, rj, &th)?;
        let (v, s) = region_excess(ri, rj, region, family, e, d, config);
        for k in 0..2 {
            step[k].add(en.p * (v[k] - e[k]));
            slope[k].add(en.p * s[k]);
        }
    }
    Ok(Eval { step: step.map(|s| s.value()), slope: slope.map(|s| s.value()) })
}

/// One application of the cost-pair map: the expected cost of one more
/// relay interval followed by the equilibrium payoff of the region the next
/// reward pair falls in.
///
/// While an iterate has `C < D` its `zeta` thresholds are lowered to the
/// matching `alpha` for classification only; payoffs use the iterate as is.
pub fn apply_t(c: CostPair, family: Family, model: &RewardModel, d: CostPair, config: &GameConfig) -> Result<CostPair> {
    let e = [c.c1 - d.c1, c.c2 - d.c2];
    let t = t_excess(e, family, model, d, config)?;
    Ok(CostPair::new(d.c1 + (e[0] + t.step[0]), d.c2 + (e[1] + t.step[1])))
}

/// Result of a cost-pair fixed-point run shared by the completely and
/// partially observable solvers.
pub(crate) struct CostFixedPoint {
    pub cost: CostPair,
    pub iterations: usize,
    pub residual: f64,
}

/// Runs a cost-pair map given in excess coordinates `C - D` from `D - tau`.
/// Working relative to `D` keeps rounding at the scale of `C - D` rather than
/// of the costs themselves.
pub(crate) fn picard(
    what: &'static str,
    d: CostPair,
    tau: f64,
    opts: &IterOptions,
    map: impl FnMut([f64; 2]) -> Result<Eval<2>>,
) -> Result<CostFixedPoint> {
    let schedule = Schedule { tol: opts.tol, max_iters: opts.max_iters, relaxation: opts.relaxation };
    let fp = solve(what, [-tau, -tau], schedule, map)?;
    Ok(CostFixedPoint {
        cost: CostPair::new(d.c1 + fp.x[0], d.c2 + fp.x[1]),
        iterations: fp.iterations,
        residual: fp.residual,
    })
}

pub(crate) fn lone_solutions(model: &RewardModel, config: &GameConfig, tol: f64) -> Result<[SingleAgentSolution; 2]> {
    Ok([
        solve_threshold(&model.marginal_pmf(Forwarder::First), config, Forwarder::First, tol)?,
        solve_threshold(&model.marginal_pmf(Forwarder::Second), config, Forwarder::Second, tol)?,
    ])
}

pub(crate) fn check_ordering(d: CostPair, c: CostPair) -> Result<()> {
    if d.c1 <= c.c1 + 1e-9 && d.c2 <= c.c2 + 1e-9 {
        Ok(())
    } else {
        Err(Error::OrderingViolated { d: d.as_array(), c: c.as_array() })
    }
}

/// An equilibrium policy pair of the completely observable game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoNeppSolution {
    pub family: Family,
    /// Cost to each forwarder from the moment both continue.
    pub cost_pair: CostPair,
    /// Lone-forwarder continuation costs.
    pub d_costs: CostPair,
    pub thresholds: Thresholds,
    pub lone: [SingleAgentSolution; 2],
    pub iterations: usize,
    pub residual: f64,
    pub config: GameConfig,
}

impl CoNeppSolution {
    pub fn policy(&self) -> PolicyPairCO {
        PolicyPairCO::Nepp(NeppRule::new(self.family, self.cost_pair, self.d_costs, self.config))
    }

    pub fn region(&self, r_i: Reward, r_j: Reward) -> RegionLabel {
        classify_region(r_i, r_j, &self.thresholds.ordered()).expect("ordered thresholds always classify")
    }

    /// Equilibrium values `[J1, J2]` at a state.
    pub fn value(&self, model: &RewardModel, state: State) -> [f64; 2] {
        let cfg = &self.config;
        let lone = |who: Forwarder, r: Reward| {
            let d = self.d_costs.get(who);
            r.stop_cost(cfg.eta(who)).map_or(d, |s| s.min(d))
        };
        match state {
            State::Both(i, j) => {
                let (ri, rj) = (model.reward(i), model.reward(j));
                region_payoffs(ri, rj, self.region(ri, rj), self.family, self.cost_pair, self.d_costs, cfg)
            }
            State::FirstAlone(i) => [lone(Forwarder::First, model.reward(i)), 0.0],
            State::SecondAlone(j) => [0.0, lone(Forwarder::Second, model.reward(j))],
        }
    }

    /// Serializable summary with values on every reachable state.
    pub fn to_record(&self, model: &RewardModel) -> Result<SolutionRecord> {
        let policy = self.policy();
        let n = model.n();
        let lone_values = [
            (0..n).map(|i| self.value(model, State::FirstAlone(i))[0]).collect(),
            (0..n).map(|j| self.value(model, State::SecondAlone(j))[1]).collect(),
        ];
        let mut pairs = Vec::with_capacity(model.joint().len());
        for e in model.joint() {
            let (ri, rj) = (model.reward(e.i), model.reward(e.j));
            pairs.push(PairRecord {
                i: e.i,
                j: e.j,
                p: e.p,
                region: self.region(ri, rj),
                stop: policy.pair_stop(e.i, e.j, ri, rj)?,
                value: self.value(model, State::Both(e.i, e.j)),
            });
        }
        Ok(SolutionRecord {
            family: self.family,
            cost_pair: self.cost_pair,
            d_costs: self.d_costs,
            thresholds: self.thresholds,
            iterations: self.iterations,
            residual: self.residual,
            rewards: model.rewards().to_vec(),
            lone_values,
            pairs,
        })
    }
}

/// Reachable two-forwarder state of a [`SolutionRecord`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub p: f64,
    pub region: RegionLabel,
    pub stop: [f64; 2],
    pub value: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub family: Family,
    pub cost_pair: CostPair,
    pub d_costs: CostPair,
    pub thresholds: Thresholds,
    pub iterations: usize,
    pub residual: f64,
    pub rewards: Vec<Reward>,
    pub lone_values: [Vec<f64>; 2],
    pub pairs: Vec<PairRecord>,
}

/// Iterates the cost-pair map from `D - (tau, tau)` to a fixed point and
/// returns the equilibrium of the requested family.
pub fn solve_nepp(model: &RewardModel, config: &GameConfig, family: Family, opts: &IterOptions) -> Result<CoNeppSolution> {
    config.validate()?;
    opts.validate()?;
    let lone = lone_solutions(model, config, opts.single_tol)?;
    let d = CostPair::new(lone[0].d_cost, lone[1].d_cost);
    let fp = picard("cost-pair iteration", d, config.tau(), opts, |e| t_excess(e, family, model, d, config))?;
    check_ordering(d, fp.cost)?;
    Ok(CoNeppSolution {
        family,
        cost_pair: fp.cost,
        d_costs: d,
        thresholds: Thresholds::from_costs(fp.cost, d, config),
        lone,
        iterations: fp.iterations,
        residual: fp.residual,
        config: *config,
    })
}

/// Outcome of a successful equilibrium check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Largest gain either forwarder gets from a best response, per forwarder.
    pub max_gain: [f64; 2],
    /// Largest one-shot deviation gain in any stage game.
    pub max_stage_gain: f64,
    /// Gap between the claimed cost pair and the evaluated policy's.
    pub cost_gap: f64,
    pub states_checked: usize,
}

/// Step tolerance for the best-response iterations, relative to the size of
/// the values so that it stays above rounding.
fn br_schedule(scale: f64) -> Schedule {
    Schedule { tol: 1e-13 * scale.abs().max(1.0), max_iters: 10_000_000, relaxation: 1.0 }
}

/// Certifies an equilibrium: the claimed cost pair must be the policy's own
/// value, no forwarder may gain more than `tol` from a best response to the
/// other's policy at any state, and the profile played at every reward pair
/// must be an equilibrium of the stage game.
pub fn verify_nepp(solution: &CoNeppSolution, model: &RewardModel, config: &GameConfig, tol: f64) -> Result<VerificationReport> {
    check_ordering(solution.d_costs, solution.cost_pair)?;
    let policy = solution.policy();
    let values = evaluate_policy_pair(&policy, model, config)?;
    let cost_gap = values.cost.max_abs_diff(&solution.cost_pair).max(values.lone_continue.max_abs_diff(&solution.d_costs));
    if cost_gap > tol {
        let who = if (values.cost.c1 - solution.cost_pair.c1).abs() >= (values.cost.c2 - solution.cost_pair.c2).abs() {
            Forwarder::First
        } else {
            Forwarder::Second
        };
        return Err(Error::Deviation { who, state: "claimed continuation cost vs policy value".into(), gain: cost_gap });
    }

    let rewards = model.rewards();
    let n = model.n();
    let tau = config.tau();
    let (nu1, nu2) = (config.win_prob_1, 1.0 - config.win_prob_1);
    let mut max_gain = [f64::NEG_INFINITY; 2];

    for who in Forwarder::BOTH {
        let k = who.index();
        let eta = config.eta(who);
        let nu_win = if who == Forwarder::First { nu1 } else { nu2 };
        let marginal = model.marginal(who);
        let d_star = solve_scalar("best-response value iteration", values.lone_continue.get(who), br_schedule(values.lone_continue.get(who)), |w| {
            let (mut v, mut slope) = (Sum::new(tau), Sum::default());
            for (r, p) in rewards.iter().zip(marginal) {
                match r.stop_cost(eta) {
                    Some(s) if s <= w => v.add(p * (s - w)),
                    _ => slope.add(*p),
                }
            }
            (v.value(), slope.value())
        })?
        .x[0];
        // Costs of continuing and stopping against the opponent's stop probability.
        let q = |own: Reward, opp_stop: f64, w: f64| -> (f64, Option<f64>) {
            let cont = (1.0 - opp_stop) * w + opp_stop * d_star;
            let stop = own.stop_cost(eta).map(|s| (1.0 - opp_stop) * s + opp_stop * (nu_win * s + (1.0 - nu_win) * d_star));
            (cont, stop)
        };
        let support: Vec<(Reward, f64, f64)> = model
            .joint()
            .iter()
            .map(|e| {
                let stop = policy.pair_stop(e.i, e.j, rewards[e.i], rewards[e.j])?;
                let (own, opp) = if who == Forwarder::First { (e.i, stop[1]) } else { (e.j, stop[0]) };
                Ok((rewards[own], opp, e.p))
            })
            .collect::<Result<_>>()?;
        let w_star = solve_scalar("best-response value iteration", values.cost.get(who), br_schedule(values.cost.get(who)), |w| {
            let (mut v, mut slope) = (Sum::new(tau), Sum::default());
            for &(own, opp, p) in &support {
                match q(own, opp, w) {
                    (cont, Some(s)) if s <= cont => v.add(p * (s - w)),
                    (cont, _) => {
                        v.add(p * (cont - w));
                        slope.add(p * (1.0 - opp));
                    }
                }
            }
            (v.value(), slope.value())
        })?
        .x[0];

        let mut worst = (f64::NEG_INFINITY, State::Both(0, 0));
        for (i, &r) in rewards.iter().enumerate() {
            let best = r.stop_cost(eta).map_or(d_star, |s| s.min(d_star));
            let gain = values.lone[k][i] - best;
            let state = if who == Forwarder::First { State::FirstAlone(i) } else { State::SecondAlone(i) };
            if gain > worst.0 {
                worst = (gain, state);
            }
        }
        for i in 0..n {
            for j in 0..n {
                let (ri, rj) = (rewards[i], rewards[j]);
                let stop = policy.pair_stop(i, j, ri, rj)?;
                let played = values.pair_value(stop, ri, rj, config)[k];
                let (own, opp) = if who == Forwarder::First { (ri, stop[1]) } else { (rj, stop[0]) };
                let (cont, st) = q(own, opp, w_star);
                let gain = played - st.map_or(cont, |s| s.min(cont));
                if gain > worst.0 {
                    worst = (gain, State::Both(i, j));
                }
            }
        }
        if worst.0 > tol {
            return Err(Error::Deviation { who, state: worst.1.to_string(), gain: worst.0 });
        }
        max_gain[k] = worst.0;
    }

    let mut max_stage_gain: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (ri, rj) = (rewards[i], rewards[j]);
            let game = build_stage_game(ri, rj, solution.cost_pair, solution.d_costs, config);
            let stop = policy.pair_stop(i, j, ri, rj)?;
            for who in Forwarder::BOTH {
                let gain = game.deviation_gain(who, stop);
                if gain > tol {
                    return Err(Error::Deviation { who, state: format!("stage game at {}", State::Both(i, j)), gain });
                }
                max_stage_gain = max_stage_gain.max(gain);
            }
        }
    }
    Ok(VerificationReport { max_gain, max_stage_gain, cost_gap, states_checked: 2 * n + n * n })
}
