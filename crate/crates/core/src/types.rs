use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the plane, in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One of the two competing forwarders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Forwarder {
    First,
    Second,
}

impl Forwarder {
    pub const BOTH: [Forwarder; 2] = [Forwarder::First, Forwarder::Second];

    pub fn index(self) -> usize {
        match self {
            Forwarder::First => 0,
            Forwarder::Second => 1,
        }
    }

    pub fn other(self) -> Forwarder {
        match self {
            Forwarder::First => Forwarder::Second,
            Forwarder::Second => Forwarder::First,
        }
    }
}

impl fmt::Display for Forwarder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.index() + 1)
    }
}

/// Merit of a relay as seen by one forwarder.
///
/// `Infeasible` marks a relay that cannot be reached at any allowed power. It
/// orders below every value and is never encoded as an IEEE infinity, so no
/// arithmetic on it can produce NaN. Serialized as `null`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(from = "Option<f64>", into = "Option<f64>")]
pub enum Reward {
    Infeasible,
    Value(f64),
}

impl Reward {
    pub fn value(self) -> Option<f64> {
        match self {
            Reward::Infeasible => None,
            Reward::Value(v) => Some(v),
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, Reward::Value(_))
    }

    /// Cost of stopping on this reward, `-eta * r`; `None` when stopping is forbidden.
    pub fn stop_cost(self, eta: f64) -> Option<f64> {
        self.value().map(|r| -eta * r)
    }
}

impl From<Option<f64>> for Reward {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Reward::Infeasible, Reward::Value)
    }
}

impl From<Reward> for Option<f64> {
    fn from(r: Reward) -> Self {
        r.value()
    }
}

impl fmt::Display for Reward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reward::Infeasible => f.write_str("infeasible"),
            Reward::Value(v) => write!(f, "{v}"),
        }
    }
}

/// A finite reward distribution with strictly increasing support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardPmf {
    rewards: Vec<Reward>,
    probs: Vec<f64>,
}

pub(crate) const PROB_SUM_TOL: f64 = 1e-9;

impl RewardPmf {
    pub fn new(rewards: Vec<Reward>, probs: Vec<f64>) -> Result<Self> {
        if rewards.is_empty() || rewards.len() != probs.len() {
            return Err(Error::InvalidModel(format!(
                "pmf needs matching nonempty supports, got {} rewards and {} probabilities",
                rewards.len(),
                probs.len()
            )));
        }
        check_support(&rewards)?;
        check_probs(&probs, "pmf")?;
        Ok(RewardPmf { rewards, probs })
    }

    /// Builds a pmf from unordered atoms, merging equal rewards.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (Reward, f64)>) -> Result<Self> {
        let mut atoms: Vec<(Reward, f64)> = atoms.into_iter().collect();
        if atoms.iter().any(|(r, _)| matches!(r, Reward::Value(v) if !v.is_finite())) {
            return Err(Error::InvalidModel("non-finite reward value".into()));
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite rewards are ordered"));
        let mut rewards = Vec::with_capacity(atoms.len());
        let mut probs: Vec<f64> = Vec::with_capacity(atoms.len());
        for (r, p) in atoms {
            if rewards.last() == Some(&r) {
                *probs.last_mut().unwrap() += p;
            } else {
                rewards.push(r);
                probs.push(p);
            }
        }
        Self::new(rewards, probs)
    }

    pub fn rewards(&self) -> &[Reward] {
        &self.rewards
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Reward, f64)> + '_ {
        self.rewards.iter().copied().zip(self.probs.iter().copied())
    }

    /// Total probability of feasible rewards.
    pub fn feasible_mass(&self) -> f64 {
        self.iter().filter(|(r, _)| r.is_feasible()).map(|(_, p)| p).sum()
    }
}

pub(crate) fn check_support(rewards: &[Reward]) -> Result<()> {
    for (k, r) in rewards.iter().enumerate() {
        match r {
            Reward::Infeasible if k > 0 => {
                return Err(Error::InvalidModel("infeasible reward must come first".into()))
            }
            Reward::Value(v) if !v.is_finite() => {
                return Err(Error::InvalidModel(format!("non-finite reward {v}")))
            }
            _ => {}
        }
    }
    if rewards.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidModel("rewards must be strictly increasing".into()));
    }
    Ok(())
}

pub(crate) fn check_probs(probs: &[f64], what: &str) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidModel(format!("{what} has a negative or non-finite probability")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {total}, expected 1")));
    }
    Ok(())
}
