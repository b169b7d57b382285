//! The partially observable game: each forwarder sees only its own reward
//! and the relay's location.
//!
//! Within a location the two rewards are independent, so a forwarder's
//! strategy there is a threshold on its own reward index and the stage game
//! becomes a Bayesian game between two thresholds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::co::{check_ordering, lone_solutions, picard, CostPair, IterOptions};
use crate::error::{Error, Result};
use crate::fixed::{Eval, Sum};
use crate::model::{LocationTable, RewardModel};
use crate::single::{GameConfig, SingleAgentSolution};
use crate::types::{Forwarder, Reward};

/// Which end of the ordered equilibrium set to play at every location.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    /// Lowest threshold for the first forwarder, highest for the second.
    Nabla,
    /// Highest threshold for the first forwarder, lowest for the second.
    Delta,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Nabla, Variant::Delta];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Nabla => "nabla",
            Variant::Delta => "delta",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nabla" => Ok(Variant::Nabla),
            "delta" => Ok(Variant::Delta),
            _ => Err(Error::InvalidConfig(format!("unknown variant {s:?}, expected nabla or delta"))),
        }
    }
}

/// A threshold strategy at one location: stop iff the reward index is at
/// least `threshold` (indices count from 0, the infeasible sentinel).
/// Threshold 0 always stops and `n` never does.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThresholdVector {
    pub location: usize,
    pub threshold: usize,
}

/// Probability that a forwarder playing `threshold` continues, given its
/// conditional reward pmf at the location.
pub fn continue_prob(threshold: usize, conditional: &[(usize, f64)]) -> f64 {
    conditional.iter().take_while(|&&(i, _)| i < threshold).map(|&(_, p)| p).sum()
}

/// Expected costs `(stop, continue)` of `who` holding reward `r` when the
/// other forwarder continues with probability `g`. The stop cost is `None`
/// on an infeasible reward.
pub fn stage_costs(r: Reward, g: f64, c_bar: f64, d: f64, config: &GameConfig, who: Forwarder) -> (Option<f64>, f64) {
    let nu = config.nu(who);
    let stop = r.stop_cost(config.eta(who)).map(|s| g * s + (1.0 - g) * (nu * s + (1.0 - nu) * d));
    (stop, g * c_bar + (1.0 - g) * d)
}

fn prefers_continue(stop: Option<f64>, cont: f64) -> bool {
    stop.is_none_or(|s| s > cont)
}

/// Best-response threshold of `who` at `location` against the other
/// forwarder's threshold: the number of reward indices on which stopping
/// costs strictly more than continuing.
pub fn best_response_threshold(
    opponent_threshold: usize,
    location: usize,
    who: Forwarder,
    model: &RewardModel,
    cost_pair: CostPair,
    d_costs: CostPair,
    config: &GameConfig,
) -> ThresholdVector {
    let loc = &model.locations()[location];
    let g = continue_prob(opponent_threshold, loc.conditional(who.other()));
    ThresholdVector { location, threshold: br_from_prob(g, model.rewards(), who, cost_pair, d_costs, config) }
}

fn br_from_prob(g: f64, rewards: &[Reward], who: Forwarder, c: CostPair, d: CostPair, config: &GameConfig) -> usize {
    rewards
        .iter()
        .filter(|&&r| {
            let (s, cont) = stage_costs(r, g, c.get(who), d.get(who), config, who);
            prefers_continue(s, cont)
        })
        .count()
}

/// Shrinks the strategy sets `A_0 = {0..=n1}` by alternating best-response
/// images until they stop changing, then keeps the mutually best-responding
/// pairs, sorted by the first forwarder's strategy.
fn eliminate(n1: usize, br1: impl Fn(usize) -> usize, br2: impl Fn(usize) -> usize) -> (Vec<usize>, Vec<usize>, Vec<(usize, usize)>) {
    let image = |set: &[usize], f: &dyn Fn(usize) -> usize| {
        let mut out: Vec<usize> = set.iter().map(|&x| f(x)).collect();
        out.sort_unstable();
        out.dedup();
        out
    };
    let mut a: Vec<usize> = (0..=n1).collect();
    let mut b: Vec<usize> = Vec::new();
    loop {
        let nb = image(&a, &br2);
        let na = image(&nb, &br1);
        let done = na == a && nb == b;
        a = na;
        b = nb;
        if done {
            break;
        }
    }
    let pairs = a.iter().map(|&x| (x, br2(x))).filter(|&(x, y)| br1(y) == x).collect();
    (a, b, pairs)
}

/// Class of a threshold: how many of the location's atoms lie below it.
fn class_of(threshold: usize, conditional: &[(usize, f64)]) -> usize {
    conditional.partition_point(|&(i, _)| i < threshold)
}

/// Continue probabilities indexed by class.
fn class_probs(conditional: &[(usize, f64)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(conditional.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for &(_, p) in conditional {
        acc += p;
        out.push(acc);
    }
    out
}

/// The sets `(A, B)` left by inductive elimination at `location`, in
/// threshold space. Pairing `A` ascending with `B` descending lists the
/// equilibria.
pub fn inductive_elimination(
    location: usize,
    model: &RewardModel,
    cost_pair: CostPair,
    d_costs: CostPair,
    config: &GameConfig,
) -> (Vec<usize>, Vec<usize>) {
    let (a, b, _) = threshold_elimination(location, model, cost_pair, d_costs, config);
    (a, b)
}

fn threshold_elimination(
    location: usize,
    model: &RewardModel,
    c: CostPair,
    d: CostPair,
    config: &GameConfig,
) -> (Vec<usize>, Vec<usize>, Vec<(usize, usize)>) {
    let loc = &model.locations()[location];
    let rewards = model.rewards();
    // Best responses only depend on the opponent's class, so cache per class.
    let table = |who: Forwarder| -> Vec<usize> {
        class_probs(loc.conditional(who.other()))
            .into_iter()
            .map(|g| br_from_prob(g, rewards, who, c, d, config))
            .collect()
    };
    let (t1, t2) = (table(Forwarder::First), table(Forwarder::Second));
    let (c1, c2) = (loc.conditional(Forwarder::First), loc.conditional(Forwarder::Second));
    eliminate(model.n(), |psi| t1[class_of(psi, c2)], |phi| t2[class_of(phi, c1)])
}

/// Every threshold pair that is a mutual best response, by enumeration.
pub fn exhaustive_ne_oracle(
    location: usize,
    model: &RewardModel,
    cost_pair: CostPair,
    d_costs: CostPair,
    config: &GameConfig,
) -> Vec<(usize, usize)> {
    let n = model.n();
    let br = |opp, who| best_response_threshold(opp, location, who, model, cost_pair, d_costs, config).threshold;
    let mut out = Vec::new();
    for phi in 0..=n {
        for psi in 0..=n {
            if br(psi, Forwarder::First) == phi && br(phi, Forwarder::Second) == psi {
                out.push((phi, psi));
            }
        }
    }
    out
}

/// Equilibrium class pair at a location, computed over atom classes.
fn select_classes(loc: &LocationTable, variant: Variant, rewards: &[Reward], c: CostPair, d: CostPair, config: &GameConfig) -> Option<(usize, usize)> {
    let atoms = |who: Forwarder| -> Vec<Reward> { loc.conditional(who).iter().map(|&(i, _)| rewards[i]).collect() };
    let (a1, a2) = (atoms(Forwarder::First), atoms(Forwarder::Second));
    let (g1, g2) = (class_probs(loc.conditional(Forwarder::First)), class_probs(loc.conditional(Forwarder::Second)));
    let t1: Vec<usize> = g2.iter().map(|&g| br_from_prob(g, &a1, Forwarder::First, c, d, config)).collect();
    let t2: Vec<usize> = g1.iter().map(|&g| br_from_prob(g, &a2, Forwarder::Second, c, d, config)).collect();
    let (_, _, pairs) = eliminate(a1.len(), |y| t1[y], |x| t2[x]);
    match variant {
        Variant::Nabla => pairs.first().copied(),
        Variant::Delta => pairs.last().copied(),
    }
}

/// Expected cost of `who` at a location measured from its continuation cost
/// `C`, and its slope in the excess `e = C - D`.
fn location_excess(loc: &LocationTable, who: Forwarder, opp_class: usize, rewards: &[Reward], e: f64, d: f64, config: &GameConfig) -> (f64, f64) {
    let g = class_probs(loc.conditional(who.other()))[opp_class];
    let nu = config.nu(who);
    let eta = config.eta(who);
    let cont = g * e;
    let (mut value, mut slope) = (Sum::default(), Sum::default());
    for &(i, p) in loc.conditional(who) {
        match rewards[i].stop_cost(eta).map(|s| (s - d) * (g + (1.0 - g) * nu)) {
            Some(stop) if stop <= cont => value.add(p * (stop - e)),
            _ => {
                value.add(p * (cont - e));
                slope.add(p * g);
            }
        }
    }
    (value.value(), slope.value())
}

pub(crate) fn t_bar_excess(e: [f64; 2], variant: Variant, model: &RewardModel, d: CostPair, config: &GameConfig) -> Result<Eval<2>> {
    let c = CostPair::new(d.c1 + e[0], d.c2 + e[1]);
    let c_sel = c.max(&d);
    let rewards = model.rewards();
    let mut step = [Sum::new(config.tau()), Sum::new(config.tau())];
    let mut slope = [Sum::default(); 2];
    for (k, loc) in model.locations().iter().enumerate() {
        let (x, y) = select_classes(loc, variant, rewards, c_sel, d, config).ok_or(Error::EmptyEquilibriumSet(k))?;
        let (v1, s1) = location_excess(loc, Forwarder::First, y, rewards, e[0], d.c1, config);
        let (v2, s2) = location_excess(loc, Forwarder::Second, x, rewards, e[1], d.c2, config);
        step[0].add(loc.prob * v1);
        step[1].add(loc.prob * v2);
        slope[0].add(loc.prob * s1);
        slope[1].add(loc.prob * s2);
    }
    Ok(Eval { step: step.map(|s| s.value()), slope: slope.map(|s| s.value()) })
}

/// One application of the partially observable cost-pair map.
///
/// While an iterate lies below `D` in some component, best responses are
/// computed against the componentwise maximum of the iterate and `D`.
pub fn apply_t_bar(c: CostPair, variant: Variant, model: &RewardModel, d: CostPair, config: &GameConfig) -> Result<CostPair> {
    let e = [c.c1 - d.c1, c.c2 - d.c2];
    let t = t_bar_excess(e, variant, model, d, config)?;
    Ok(CostPair::new(d.c1 + (e[0] + t.step[0]), d.c2 + (e[1] + t.step[1])))
}

/// Equilibrium thresholds `(phi, psi)` at one location.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub location: usize,
    pub phi: usize,
    pub psi: usize,
}

/// An equilibrium of the partially observable game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoNeppSolution {
    pub variant: Variant,
    pub cost_pair: CostPair,
    pub d_costs: CostPair,
    pub lone: [SingleAgentSolution; 2],
    pub thresholds: Vec<ThresholdPair>,
    pub iterations: usize,
    pub residual: f64,
    pub config: GameConfig,
}

impl PoNeppSolution {
    /// Equilibrium value of `who` holding reward index `i` at `location`
    /// while both forwarders are active.
    pub fn g_value(&self, model: &RewardModel, who: Forwarder, location: usize, i: usize) -> f64 {
        let loc = &model.locations()[location];
        let t = self.thresholds[location];
        let opp_threshold = if who == Forwarder::First { t.psi } else { t.phi };
        let g = continue_prob(opp_threshold, loc.conditional(who.other()));
        let (s, cont) = stage_costs(model.reward(i), g, self.cost_pair.get(who), self.d_costs.get(who), &self.config, who);
        s.map_or(cont, |s| s.min(cont))
    }

    /// Value of `who` alone with reward `r`; partial observation changes
    /// nothing once the other forwarder is gone.
    pub fn lone_value(&self, who: Forwarder, r: Reward) -> f64 {
        let d = self.d_costs.get(who);
        r.stop_cost(self.config.eta(who)).map_or(d, |s| s.min(d))
    }

    pub fn stops(&self, who: Forwarder, location: usize, i: usize) -> bool {
        let t = self.thresholds[location];
        i >= if who == Forwarder::First { t.phi } else { t.psi }
    }
}

fn check_po_model(model: &RewardModel) -> Result<()> {
    if model.locations().is_empty() {
        return Err(Error::NotIndependent("the model carries no location tables".into()));
    }
    let dev = model.independence_deviation();
    if dev > 1e-9 {
        return Err(Error::NotIndependent(format!("joint table departs from the location factorization by {dev:e}")));
    }
    Ok(())
}

/// Iterates the partially observable cost-pair map from `D - (tau, tau)` and
/// assembles per-location equilibrium thresholds at the fixed point.
pub fn solve_po_nepp(model: &RewardModel, config: &GameConfig, variant: Variant, opts: &IterOptions) -> Result<PoNeppSolution> {
    config.validate()?;
    opts.validate()?;
    check_po_model(model)?;
    let lone = lone_solutions(model, config, opts.single_tol)?;
    let d = CostPair::new(lone[0].d_cost, lone[1].d_cost);
    let fp = picard("partially observable cost-pair iteration", d, config.tau(), opts, |e| t_bar_excess(e, variant, model, d, config))?;
    check_ordering(d, fp.cost)?;
    let mut thresholds = Vec::with_capacity(model.locations().len());
    for k in 0..model.locations().len() {
        let (_, _, pairs) = threshold_elimination(k, model, fp.cost, d, config);
        let pick = match variant {
            Variant::Nabla => pairs.first(),
            Variant::Delta => pairs.last(),
        };
        let &(phi, psi) = pick.ok_or(Error::EmptyEquilibriumSet(k))?;
        thresholds.push(ThresholdPair { location: k, phi, psi });
    }
    Ok(PoNeppSolution {
        variant,
        cost_pair: fp.cost,
        d_costs: d,
        lone,
        thresholds,
        iterations: fp.iterations,
        residual: fp.residual,
        config: *config,
    })
}
