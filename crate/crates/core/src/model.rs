use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_probs, check_support, Forwarder, Point, Reward, RewardPmf};

/// Version stamp written into serialized reward models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

const TABLE_TOL: f64 = 1e-12;

/// One nonzero cell `p(i, j)` of the joint reward table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointEntry {
    pub i: usize,
    pub j: usize,
    pub p: f64,
}

/// A relay location with its probability and the per-forwarder conditional
/// reward pmfs, stored sparsely as `(reward index, probability)` pairs in
/// increasing index order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationTable {
    pub position: Option<Point>,
    pub prob: f64,
    pub conditional: [Vec<(usize, f64)>; 2],
}

impl LocationTable {
    pub fn conditional(&self, who: Forwarder) -> &[(usize, f64)] {
        &self.conditional[who.index()]
    }
}

/// Finite reward model shared by every solver.
///
/// Index 0 of `rewards` is always [`Reward::Infeasible`]; the remaining
/// entries are strictly increasing finite values. The joint table is sparse
/// because realistic models have thousands of reward values but only a few
/// thousand reachable pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    rewards: Vec<Reward>,
    joint: Vec<JointEntry>,
    marginals: [Vec<f64>; 2],
    locations: Vec<LocationTable>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: RewardModel,
}

impl RewardModel {
    /// Builds a model from per-location conditionals; the joint table is the
    /// location mixture of independent products.
    pub fn from_locations(rewards: Vec<Reward>, locations: Vec<LocationTable>) -> Result<Self> {
        let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for loc in &locations {
            for &(i, pi) in &loc.conditional[0] {
                for &(j, pj) in &loc.conditional[1] {
                    *cells.entry((i, j)).or_insert(0.0) += loc.prob * pi * pj;
                }
            }
        }
        let joint = cells
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|((i, j), p)| JointEntry { i, j, p })
            .collect();
        Self::assemble(rewards, joint, locations)
    }

    /// Builds a model from a joint table alone. Such a model serves the
    /// completely observable and cooperative solvers but not the partially
    /// observable one, which needs location structure.
    pub fn from_joint(rewards: Vec<Reward>, joint: Vec<JointEntry>) -> Result<Self> {
        let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for e in joint {
            *cells.entry((e.i, e.j)).or_insert(0.0) += e.p;
        }
        let joint = cells
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|((i, j), p)| JointEntry { i, j, p })
            .collect();
        Self::assemble(rewards, joint, Vec::new())
    }

    /// Builds a model from a dense row-major `n x n` joint table.
    pub fn from_dense(rewards: Vec<Reward>, dense: &[Vec<f64>]) -> Result<Self> {
        let mut joint = Vec::new();
        for (i, row) in dense.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                joint.push(JointEntry { i, j, p });
            }
        }
        Self::from_joint(rewards, joint)
    }

    fn assemble(rewards: Vec<Reward>, joint: Vec<JointEntry>, locations: Vec<LocationTable>) -> Result<Self> {
        let n = rewards.len();
        let mut marginals = [vec![0.0; n], vec![0.0; n]];
        for e in &joint {
            if e.i >= n || e.j >= n {
                return Err(Error::InvalidModel(format!("joint cell ({}, {}) outside {n} rewards", e.i, e.j)));
            }
            marginals[0][e.i] += e.p;
            marginals[1][e.j] += e.p;
        }
        let model = RewardModel { rewards, joint, marginals, locations };
        model.validate()?;
        Ok(model)
    }

    /// Checks normalization, marginal consistency and, when location tables
    /// are present, the independence factorization.
    pub fn validate(&self) -> Result<()> {
        let n = self.rewards.len();
        if n < 2 || self.rewards[0] != Reward::Infeasible {
            return Err(Error::InvalidModel(
                "rewards must start with the infeasible sentinel and hold at least one value".into(),
            ));
        }
        check_support(&self.rewards)?;
        if self.joint.iter().any(|e| e.i >= n || e.j >= n || !e.p.is_finite() || e.p < 0.0) {
            return Err(Error::InvalidModel("joint table has an invalid cell".into()));
        }
        let total: f64 = self.joint.iter().map(|e| e.p).sum();
        if (total - 1.0).abs() > TABLE_TOL * (1.0 + self.joint.len() as f64).sqrt() {
            return Err(Error::InvalidModel(format!("joint table sums to {total}")));
        }
        let mut rows = [vec![0.0; n], vec![0.0; n]];
        for e in &self.joint {
            rows[0][e.i] += e.p;
            rows[1][e.j] += e.p;
        }
        for who in 0..2 {
            if self.marginals[who].len() != n
                || rows[who].iter().zip(&self.marginals[who]).any(|(a, b)| (a - b).abs() > TABLE_TOL)
            {
                return Err(Error::InvalidModel("marginals disagree with the joint table".into()));
            }
        }
        if !self.locations.is_empty() {
            let q: Vec<f64> = self.locations.iter().map(|l| l.prob).collect();
            check_probs(&q, "location pmf")?;
            for (k, loc) in self.locations.iter().enumerate() {
                for cond in &loc.conditional {
                    if cond.iter().any(|&(i, _)| i >= n) || cond.windows(2).any(|w| w[0].0 >= w[1].0) {
                        return Err(Error::InvalidModel(format!("location {k} has a malformed conditional")));
                    }
                    let probs: Vec<f64> = cond.iter().map(|&(_, p)| p).collect();
                    check_probs(&probs, "location conditional")?;
                }
            }
            let dev = self.independence_deviation();
            if dev > TABLE_TOL {
                return Err(Error::InvalidModel(format!(
                    "joint table departs from the location factorization by {dev:e}"
                )));
            }
        }
        Ok(())
    }

    /// Largest cellwise gap between the joint table and the location mixture
    /// of conditional products; infinite when the model has no locations.
    pub fn independence_deviation(&self) -> f64 {
        if self.locations.is_empty() {
            return f64::INFINITY;
        }
        let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for loc in &self.locations {
            for &(i, pi) in &loc.conditional[0] {
                for &(j, pj) in &loc.conditional[1] {
                    *cells.entry((i, j)).or_insert(0.0) += loc.prob * pi * pj;
                }
            }
        }
        let mut dev: f64 = 0.0;
        for e in &self.joint {
            let mixed = cells.remove(&(e.i, e.j)).unwrap_or(0.0);
            dev = dev.max((mixed - e.p).abs());
        }
        cells.values().fold(dev, |d, p| d.max(p.abs()))
    }

    /// Number of reward values, counting the infeasible sentinel.
    pub fn n(&self) -> usize {
        self.rewards.len()
    }

    pub fn rewards(&self) -> &[Reward] {
        &self.rewards
    }

    pub fn reward(&self, i: usize) -> Reward {
        self.rewards[i]
    }

    pub fn joint(&self) -> &[JointEntry] {
        &self.joint
    }

    pub fn marginal(&self, who: Forwarder) -> &[f64] {
        &self.marginals[who.index()]
    }

    /// The marginal as a pmf over the full reward grid, zero cells included.
    pub fn marginal_pmf(&self, who: Forwarder) -> RewardPmf {
        RewardPmf::new(self.rewards.clone(), self.marginals[who.index()].clone())
            .expect("validated model has a valid marginal")
    }

    pub fn locations(&self) -> &[LocationTable] {
        &self.locations
    }

    pub fn dense_joint(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut dense = vec![vec![0.0; n]; n];
        for e in &self.joint {
            dense[e.i][e.j] += e.p;
        }
        dense
    }

    /// The same model with the forwarders' roles exchanged.
    pub fn swapped(&self) -> RewardModel {
        let mut joint: Vec<JointEntry> = self.joint.iter().map(|e| JointEntry { i: e.j, j: e.i, p: e.p }).collect();
        joint.sort_by_key(|e| (e.i, e.j));
        RewardModel {
            rewards: self.rewards.clone(),
            joint,
            marginals: [self.marginals[1].clone(), self.marginals[0].clone()],
            locations: self
                .locations
                .iter()
                .map(|l| LocationTable {
                    position: l.position,
                    prob: l.prob,
                    conditional: [l.conditional[1].clone(), l.conditional[0].clone()],
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile { format_version: MODEL_FORMAT_VERSION, model: self.clone() })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion(file.format_version));
        }
        file.model.validate()?;
        Ok(file.model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
