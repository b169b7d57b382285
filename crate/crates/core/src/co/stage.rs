use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::single::GameConfig;
use crate::types::{Forwarder, Reward};

/// A pair of per-forwarder costs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostPair {
    pub c1: f64,
    pub c2: f64,
}

impl CostPair {
    pub const fn new(c1: f64, c2: f64) -> Self {
        CostPair { c1, c2 }
    }

    pub fn get(&self, who: Forwarder) -> f64 {
        match who {
            Forwarder::First => self.c1,
            Forwarder::Second => self.c2,
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.c1, self.c2]
    }

    pub fn max_abs_diff(&self, other: &CostPair) -> f64 {
        (self.c1 - other.c1).abs().max((self.c2 - other.c2).abs())
    }

    pub fn swapped(&self) -> CostPair {
        CostPair::new(self.c2, self.c1)
    }

    /// Componentwise maximum.
    pub fn max(&self, other: &CostPair) -> CostPair {
        CostPair::new(self.c1.max(other.c1), self.c2.max(other.c2))
    }

    /// Weighted cost `gamma c1 + (1 - gamma) c2`.
    pub fn weighted(&self, gamma: f64) -> f64 {
        gamma * self.c1 + (1.0 - gamma) * self.c2
    }
}

/// Continue or stop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Continue,
    Stop,
}

impl Action {
    pub const BOTH: [Action; 2] = [Action::Continue, Action::Stop];

    fn index(self) -> usize {
        match self {
            Action::Continue => 0,
            Action::Stop => 1,
        }
    }
}

/// Rule choosing among the equilibria available when both rewards are in their middle bands.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    /// First forwarder stops, second continues.
    Sc,
    /// First forwarder continues, second stops.
    Cs,
    /// Both randomize at the completely mixed equilibrium.
    Mixed,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Sc, Family::Cs, Family::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Family::Sc => "sc",
            Family::Cs => "cs",
            Family::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(Family::Sc),
            "cs" => Ok(Family::Cs),
            "mixed" => Ok(Family::Mixed),
            _ => Err(Error::InvalidConfig(format!("unknown family {s:?}, expected sc, cs or mixed"))),
        }
    }
}

/// The one-shot 2x2 game faced at a two-forwarder state.
///
/// `cost(who, a1, a2)` is `None` for profiles that use a forbidden action
/// (stopping on an infeasible reward); such profiles are outside the game.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageGame {
    costs: [[[Option<f64>; 2]; 2]; 2],
    allowed: [[bool; 2]; 2],
}

impl StageGame {
    pub fn cost(&self, who: Forwarder, a1: Action, a2: Action) -> Option<f64> {
        self.costs[who.index()][a1.index()][a2.index()]
    }

    pub fn allowed(&self, who: Forwarder, a: Action) -> bool {
        self.allowed[who.index()][a.index()]
    }

    /// Expected cost to `who` when the forwarders stop with probabilities
    /// `sigma`; forbidden actions must carry zero probability.
    pub fn expected_cost(&self, who: Forwarder, sigma: [f64; 2]) -> f64 {
        let mut acc = 0.0;
        for a1 in Action::BOTH {
            for a2 in Action::BOTH {
                let w = weight(sigma[0], a1) * weight(sigma[1], a2);
                if w > 0.0 {
                    acc += w * self.cost(who, a1, a2).expect("positive weight on a forbidden action");
                }
            }
        }
        acc
    }

    /// Largest gain `who` can obtain by a pure unilateral deviation from `sigma`.
    pub fn deviation_gain(&self, who: Forwarder, sigma: [f64; 2]) -> f64 {
        let current = self.expected_cost(who, sigma);
        let mut best = current;
        for a in Action::BOTH {
            if !self.allowed(who, a) {
                continue;
            }
            let mut dev = sigma;
            dev[who.index()] = if a == Action::Stop { 1.0 } else { 0.0 };
            best = best.min(self.expected_cost(who, dev));
        }
        current - best
    }
}

fn weight(stop: f64, a: Action) -> f64 {
    match a {
        Action::Stop => stop,
        Action::Continue => 1.0 - stop,
    }
}

/// Builds the stage game at rewards `(r_i, r_j)` given the continuation
/// costs `c` (both continue) and `d` (continue alone).
pub fn build_stage_game(r_i: Reward, r_j: Reward, c: CostPair, d: CostPair, config: &GameConfig) -> StageGame {
    let s1 = r_i.stop_cost(config.tradeoff_1);
    let s2 = r_j.stop_cost(config.tradeoff_2);
    let (nu1, nu2) = (config.win_prob_1, 1.0 - config.win_prob_1);
    let e1 = s1.map(|s| nu1 * s + nu2 * d.c1);
    let e2 = s2.map(|s| nu1 * d.c2 + nu2 * s);
    let allowed = [[true, s1.is_some()], [true, s2.is_some()]];
    let mut costs = [[[None; 2]; 2]; 2];
    let entries = [
        ((0, 0), (Some(c.c1), Some(c.c2))),
        ((0, 1), (Some(d.c1), s2)),
        ((1, 0), (s1, Some(d.c2))),
        ((1, 1), (e1, e2)),
    ];
    for ((a1, a2), (u1, u2)) in entries {
        if allowed[0][a1] && allowed[1][a2] {
            costs[0][a1][a2] = u1;
            costs[1][a1][a2] = u2;
        }
    }
    StageGame { costs, allowed }
}

/// Equilibria of a stage game.
#[derive(Clone, Debug, PartialEq)]
pub struct StageEquilibria {
    /// Pure equilibria as `(action of F1, action of F2)`, sorted.
    pub pure: Vec<(Action, Action)>,
    /// Completely mixed equilibrium as stopping probabilities `(F1, F2)`.
    pub mixed: Option<(f64, f64)>,
    /// Forwarders indifferent between their actions whatever the other does;
    /// every strategy of theirs is a best response.
    pub indifferent: [bool; 2],
}

/// Enumerates pure equilibria from best-response tables, with ties counting
/// as best responses, and finds the completely mixed equilibrium when both
/// forwarders' incentives reverse.
pub fn stage_nash_oracle(game: &StageGame) -> StageEquilibria {
    use Forwarder::{First, Second};
    let mut pure = Vec::new();
    for a1 in Action::BOTH {
        for a2 in Action::BOTH {
            let (Some(u1), Some(u2)) = (game.cost(First, a1, a2), game.cost(Second, a1, a2)) else {
                continue;
            };
            let br1 = Action::BOTH.iter().all(|&b| game.cost(First, b, a2).is_none_or(|v| u1 <= v));
            let br2 = Action::BOTH.iter().all(|&b| game.cost(Second, a1, b).is_none_or(|v| u2 <= v));
            if br1 && br2 {
                pure.push((a1, a2));
            }
        }
    }
    let both_free = game.allowed(First, Action::Stop) && game.allowed(Second, Action::Stop);
    let mut indifferent = [false; 2];
    let mut mixed = None;
    if both_free {
        let c = |w, a1, a2| game.cost(w, a1, a2).unwrap();
        use Action::{Continue as C, Stop as S};
        // Gain from stopping rather than continuing, against each opponent action.
        let a0 = c(First, S, C) - c(First, C, C);
        let a1 = c(First, S, S) - c(First, C, S);
        let b0 = c(Second, C, S) - c(Second, C, C);
        let b1 = c(Second, S, S) - c(Second, S, C);
        indifferent = [a0 == 0.0 && a1 == 0.0, b0 == 0.0 && b1 == 0.0];
        if a0 * a1 < 0.0 && b0 * b1 < 0.0 {
            mixed = Some((b0 / (b0 - b1), a0 / (a0 - a1)));
        }
    }
    StageEquilibria { pure, mixed, indifferent }
}

/// Region thresholds: `zeta` from the cost of both continuing, `alpha` from
/// the lone-forwarder cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub zeta: [f64; 2],
    pub alpha: [f64; 2],
}

impl Thresholds {
    pub fn from_costs(c: CostPair, d: CostPair, config: &GameConfig) -> Self {
        Thresholds {
            zeta: [c.c1 / -config.tradeoff_1, c.c2 / -config.tradeoff_2],
            alpha: [d.c1 / -config.tradeoff_1, d.c2 / -config.tradeoff_2],
        }
    }

    /// The thresholds with each `zeta` lowered to at most its `alpha`.
    pub fn ordered(self) -> Self {
        Thresholds { zeta: [self.zeta[0].min(self.alpha[0]), self.zeta[1].min(self.alpha[1])], alpha: self.alpha }
    }
}

/// Reward-pair regions, each with its own set of stage equilibria.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionLabel {
    R1,
    R2,
    R3,
    R4,
    R5,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Band {
    Low,
    Middle,
    High,
}

fn band(r: Reward, zeta: f64, alpha: f64) -> Band {
    match r {
        Reward::Value(v) if v > alpha => Band::High,
        Reward::Value(v) if v >= zeta => Band::Middle,
        _ => Band::Low,
    }
}

/// Places a reward pair in its region. Middle bands are closed on both ends.
pub fn classify_region(r_i: Reward, r_j: Reward, th: &Thresholds) -> Result<RegionLabel> {
    for who in Forwarder::BOTH {
        let k = who.index();
        if !(th.zeta[k] <= th.alpha[k]) {
            return Err(Error::UnorderedThresholds { who, zeta: th.zeta[k], alpha: th.alpha[k] });
        }
    }
    use Band::*;
    Ok(match (band(r_i, th.zeta[0], th.alpha[0]), band(r_j, th.zeta[1], th.alpha[1])) {
        (Low, Low) => RegionLabel::R1,
        (Middle, Low) | (High, Low) | (High, Middle) => RegionLabel::R2,
        (Low, Middle) | (Low, High) | (Middle, High) => RegionLabel::R3,
        (Middle, Middle) => RegionLabel::R4,
        (High, High) => RegionLabel::R5,
    })
}

/// Stopping probabilities `(Gamma_1, Gamma_2)` of the completely mixed
/// equilibrium at a two-forwarder state. `Gamma_1` makes the second
/// forwarder indifferent and `Gamma_2` the first.
pub fn mixed_strategy_probs(r_i: Reward, r_j: Reward, c: CostPair, d: CostPair, config: &GameConfig) -> Result<(f64, f64)> {
    let (Some(s1), Some(s2)) = (r_i.stop_cost(config.tradeoff_1), r_j.stop_cost(config.tradeoff_2)) else {
        return Err(Error::InvalidConfig("mixed strategies need feasible rewards for both forwarders".into()));
    };
    let gamma1 = indifference_prob(s2 - c.c2, config.nu(Forwarder::Second) * (s2 - d.c2))
        .ok_or(Error::ZeroDenominator(Forwarder::Second))?;
    let gamma2 = indifference_prob(s1 - c.c1, config.nu(Forwarder::First) * (s1 - d.c1))
        .ok_or(Error::ZeroDenominator(Forwarder::First))?;
    Ok((gamma1, gamma2))
}

/// `num / (num - excess)`, where `excess` is the gap `E - D` written in its
/// factored form `nu (s - D)` so the boundary cases come out exactly 0 and 1.
pub(crate) fn indifference_prob(num: f64, excess: f64) -> Option<f64> {
    let den = num - excess;
    (den != 0.0).then(|| num / den)
}

/// Equilibrium set predicted by the region of a reward pair.
pub fn region_equilibria(
    r_i: Reward,
    r_j: Reward,
    c: CostPair,
    d: CostPair,
    config: &GameConfig,
) -> Result<StageEquilibria> {
    use Action::{Continue as C, Stop as S};
    let th = Thresholds::from_costs(c, d, config);
    let (pure, mixed) = match classify_region(r_i, r_j, &th)? {
        RegionLabel::R1 => (vec![(C, C)], None),
        RegionLabel::R2 => (vec![(S, C)], None),
        RegionLabel::R3 => (vec![(C, S)], None),
        RegionLabel::R4 => (vec![(C, S), (S, C)], Some(mixed_strategy_probs(r_i, r_j, c, d, config)?)),
        RegionLabel::R5 => (vec![(S, S)], None),
    };
    Ok(StageEquilibria { pure, mixed, indifferent: [false; 2] })
}
