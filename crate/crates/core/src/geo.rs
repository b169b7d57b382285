//! Reward construction from forwarding geometry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LocationTable, RewardModel};
use crate::types::{check_probs, Forwarder, Point, Reward};

/// A channel gain and its probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainAtom {
    pub gain: f64,
    pub prob: f64,
}

/// Radio and reward parameters shared by the one-hop model and the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub range_m: f64,
    pub pathloss_exponent: f64,
    pub reference_distance_m: f64,
    pub receiver_sensitivity_mw: f64,
    pub max_power_mw: f64,
    pub tradeoff_a: f64,
    pub gain_table: Vec<GainAtom>,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams::telosb()
    }
}

impl RadioParams {
    /// TelosB-like defaults: 80 m range, path-loss exponent 2.5, 1 mW cap and
    /// four equiprobable gains.
    pub fn telosb() -> Self {
        RadioParams {
            range_m: 80.0,
            pathloss_exponent: 2.5,
            reference_distance_m: 5.0,
            receiver_sensitivity_mw: 1e-9,
            max_power_mw: 1.0,
            tradeoff_a: 0.5,
            gain_table: [0.4e-3, 0.6e-3, 0.8e-3, 1.0e-3]
                .into_iter()
                .map(|gain| GainAtom { gain, prob: 0.25 })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("range_m", self.range_m),
            ("reference_distance_m", self.reference_distance_m),
            ("receiver_sensitivity_mw", self.receiver_sensitivity_mw),
            ("max_power_mw", self.max_power_mw),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent >= 2.0) {
            return Err(Error::InvalidConfig(format!(
                "pathloss_exponent must be at least 2, got {}",
                self.pathloss_exponent
            )));
        }
        if !(0.0..=1.0).contains(&self.tradeoff_a) {
            return Err(Error::InvalidConfig(format!("tradeoff_a must lie in [0, 1], got {}", self.tradeoff_a)));
        }
        if self.gain_table.is_empty() || self.gain_table.iter().any(|g| !(g.gain.is_finite() && g.gain > 0.0)) {
            return Err(Error::InvalidConfig("gain table must be nonempty with positive gains".into()));
        }
        let probs: Vec<f64> = self.gain_table.iter().map(|g| g.prob).collect();
        check_probs(&probs, "gain table").map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig("gain probabilities must sum to 1 within 1e-12".into()));
        }
        Ok(())
    }
}

/// How relay locations are weighted over the grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationPmf {
    #[default]
    Uniform,
    /// Unnormalized weights, one per grid point in generation order
    /// (x outer, y inner, both ascending).
    Weights(Vec<f64>),
}

/// Geometry of the one-hop forwarding problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeoScenario {
    pub forwarder_positions: [Point; 2],
    pub sink_position: Point,
    pub grid_spacing_m: f64,
    #[serde(flatten)]
    pub radio: RadioParams,
    pub location_pmf: LocationPmf,
}

impl Default for GeoScenario {
    fn default() -> Self {
        GeoScenario::telosb(0.0)
    }
}

impl GeoScenario {
    /// The TelosB scenario with the forwarders `theta` meters apart, placed
    /// symmetrically about the x axis, and the sink 1 km away.
    pub fn telosb(theta: f64) -> Self {
        GeoScenario {
            forwarder_positions: [Point::new(0.0, theta / 2.0), Point::new(0.0, -theta / 2.0)],
            sink_position: Point::new(1000.0, 0.0),
            grid_spacing_m: 5.0,
            radio: RadioParams::telosb(),
            location_pmf: LocationPmf::Uniform,
        }
    }

    /// Moves the forwarders to `(0, ±theta/2)`.
    pub fn with_separation(mut self, theta: f64) -> Self {
        self.forwarder_positions = [Point::new(0.0, theta / 2.0), Point::new(0.0, -theta / 2.0)];
        self
    }

    pub fn forwarder(&self, who: Forwarder) -> Point {
        self.forwarder_positions[who.index()]
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        if !(self.grid_spacing_m.is_finite() && self.grid_spacing_m > 0.0) {
            return Err(Error::InvalidConfig(format!("grid_spacing_m must be positive, got {}", self.grid_spacing_m)));
        }
        let pts = [self.forwarder_positions[0], self.forwarder_positions[1], self.sink_position];
        if pts.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidConfig("positions must be finite".into()));
        }
        if let LocationPmf::Weights(w) = &self.location_pmf {
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidConfig("location weights must be nonnegative with positive total".into()));
            }
        }
        Ok(())
    }

    /// Whether `location` lies in the forwarding region of `who`: within
    /// range and not farther from the sink than the forwarder.
    pub fn in_region(&self, location: Point, who: Forwarder) -> bool {
        self.forwarder(who).distance(location) <= self.radio.range_m && compute_progress(location, who, self) >= 0.0
    }

    /// Grid points of the combined forwarding region, x outer and y inner.
    /// Points closer than the reference distance to either forwarder are
    /// dropped.
    pub fn grid(&self) -> Vec<Point> {
        let s = self.grid_spacing_m;
        let d = self.radio.range_m;
        let [v1, v2] = self.forwarder_positions;
        let (x0, x1) = ((v1.x.min(v2.x) - d) / s, (v1.x.max(v2.x) + d) / s);
        let (y0, y1) = ((v1.y.min(v2.y) - d) / s, (v1.y.max(v2.y) + d) / s);
        let mut points = Vec::new();
        let mut dropped = 0usize;
        for kx in (x0.ceil() as i64)..=(x1.floor() as i64) {
            for ky in (y0.ceil() as i64)..=(y1.floor() as i64) {
                let p = Point::new(kx as f64 * s, ky as f64 * s);
                if !(self.in_region(p, Forwarder::First) || self.in_region(p, Forwarder::Second)) {
                    continue;
                }
                if v1.distance(p) < self.radio.reference_distance_m || v2.distance(p) < self.radio.reference_distance_m {
                    dropped += 1;
                    continue;
                }
                points.push(p);
            }
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} grid points closer than the reference distance to a forwarder");
        }
        points
    }
}

/// Progress toward the sink gained by moving the packet from forwarder `who` to `location`.
pub fn compute_progress(location: Point, who: Forwarder, scenario: &GeoScenario) -> f64 {
    let sink = scenario.sink_position;
    scenario.forwarder(who).distance(sink) - location.distance(sink)
}

/// Transmit power in mW needed to reach a relay at `distance_m` with channel
/// `gain`; `None` when the relay is out of range or needs more than the cap.
pub fn required_power(distance_m: f64, gain: f64, radio: &RadioParams) -> Result<Option<f64>> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(Error::InvalidConfig(format!("gain must be positive, got {gain}")));
    }
    if !(distance_m >= radio.reference_distance_m) {
        return Err(Error::InsideReferenceDistance { distance: distance_m, reference: radio.reference_distance_m });
    }
    if distance_m > radio.range_m {
        return Ok(None);
    }
    let p = radio.receiver_sensitivity_mw / gain * (distance_m / radio.reference_distance_m).powf(radio.pathloss_exponent);
    Ok((p <= radio.max_power_mw).then_some(p))
}

/// Reward `progress^a / power^(1-a)` of a relay.
pub fn reward_value(progress: f64, power: Option<f64>, radio: &RadioParams) -> Result<Reward> {
    let Some(power) = power else {
        return Ok(Reward::Infeasible);
    };
    if progress < 0.0 {
        return Err(Error::NegativeProgress(progress));
    }
    let a = radio.tradeoff_a;
    Ok(Reward::Value(progress.powf(a) / power.powf(1.0 - a)))
}

/// Enumerates every (location, gain, gain) triple of the scenario and
/// collects the resulting reward model. Values closer than
/// `merge_tolerance` to the smallest value of their cluster are merged onto
/// it; zero keeps every distinct value.
pub fn build_reward_model(scenario: &GeoScenario, merge_tolerance: f64) -> Result<RewardModel> {
    scenario.validate()?;
    if !(merge_tolerance.is_finite() && merge_tolerance >= 0.0) {
        return Err(Error::InvalidConfig(format!("merge tolerance must be finite and nonnegative, got {merge_tolerance}")));
    }
    let grid = scenario.grid();
    if grid.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let weights = match &scenario.location_pmf {
        LocationPmf::Uniform => vec![1.0; grid.len()],
        LocationPmf::Weights(w) if w.len() == grid.len() => w.clone(),
        LocationPmf::Weights(w) => {
            return Err(Error::InvalidConfig(format!(
                "{} location weights given for {} grid points",
                w.len(),
                grid.len()
            )))
        }
    };
    let total: f64 = weights.iter().sum();

    // Raw per-location atoms before the reward grid is known.
    let radio = &scenario.radio;
    let mut raw: Vec<[Vec<(Reward, f64)>; 2]> = Vec::with_capacity(grid.len());
    for &loc in &grid {
        let mut per = [Vec::new(), Vec::new()];
        for who in Forwarder::BOTH {
            if !scenario.in_region(loc, who) {
                per[who.index()].push((Reward::Infeasible, 1.0));
                continue;
            }
            let distance = scenario.forwarder(who).distance(loc);
            let progress = compute_progress(loc, who, scenario);
            for g in &radio.gain_table {
                let power = required_power(distance, g.gain, radio)?;
                per[who.index()].push((reward_value(progress, power, radio)?, g.prob));
            }
        }
        raw.push(per);
    }

    let mut values: Vec<f64> = raw
        .iter()
        .flat_map(|per| per.iter().flatten())
        .filter_map(|(r, _)| r.value())
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut reps: Vec<f64> = Vec::new();
    for v in values {
        match reps.last() {
            Some(&start) if v - start <= merge_tolerance => {}
            _ => reps.push(v),
        }
    }
    let index_of = |r: Reward| -> usize {
        match r {
            Reward::Infeasible => 0,
            // Largest representative not above v; every value has one.
            Reward::Value(v) => reps.partition_point(|&x| x <= v),
        }
    };

    let locations = grid
        .iter()
        .zip(&weights)
        .zip(&raw)
        .filter(|((_, &w), _)| w > 0.0)
        .map(|((&position, &w), per)| {
            let conditional = per.clone().map(|atoms| {
                let mut cells: Vec<(usize, f64)> = atoms.into_iter().map(|(r, p)| (index_of(r), p)).collect();
                cells.sort_by_key(|c| c.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(cells.len());
                for (i, p) in cells {
                    match merged.last_mut() {
                        Some(last) if last.0 == i => last.1 += p,
                        _ => merged.push((i, p)),
                    }
                }
                merged.retain(|c| c.1 > 0.0);
                merged
            });
            LocationTable { position: Some(position), prob: w / total, conditional }
        })
        .collect();

    let rewards = std::iter::once(Reward::Infeasible).chain(reps.into_iter().map(Reward::Value)).collect();
    RewardModel::from_locations(rewards, locations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn progress_examples() {
        let mut sc = GeoScenario::telosb(10.0);
        sc.forwarder_positions[0] = Point::new(0.0, 5.0);
        let v1 = sc.forwarder_positions[0];
        assert_eq!(compute_progress(v1, Forwarder::First, &sc), 0.0);
        let at_sink = compute_progress(sc.sink_position, Forwarder::First, &sc);
        assert_eq!(at_sink, v1.distance(sc.sink_position));
        let expected = (1000.0f64.powi(2) + 25.0).sqrt() - (960.0f64.powi(2) + 25.0).sqrt();
        assert!(approx(compute_progress(Point::new(40.0, 5.0), Forwarder::First, &sc), expected, 1e-14));
    }

    #[test]
    fn power_examples() {
        let radio = RadioParams::telosb();
        let p = required_power(5.0, 1e-3, &radio).unwrap().unwrap();
        assert!(approx(p, 1e-6, 1e-14));
        assert_eq!(required_power(80.1, 1e-3, &radio).unwrap(), None);
        let weak = required_power(40.0, 0.4e-3, &radio).unwrap().unwrap();
        let strong = required_power(40.0, 1e-3, &radio).unwrap().unwrap();
        assert!(strong < weak);
        assert!(matches!(required_power(4.0, 1e-3, &radio), Err(Error::InsideReferenceDistance { .. })));
    }

    #[test]
    fn power_above_cap_is_infeasible() {
        let mut radio = RadioParams::telosb();
        radio.max_power_mw = 1e-4;
        // (80/5)^2.5 * 1e-9 / 0.4e-3 = 2.56e-3 mW
        assert_eq!(required_power(80.0, 0.4e-3, &radio).unwrap(), None);
        assert!(required_power(20.0, 1e-3, &radio).unwrap().is_some());
    }

    #[test]
    fn reward_examples() {
        let mut radio = RadioParams::telosb();
        let r = reward_value(40.0, Some(1e-3), &radio).unwrap();
        assert!(approx(r.value().unwrap(), 200.0, 1e-14));
        assert_eq!(reward_value(0.0, Some(1e-3), &radio).unwrap(), Reward::Value(0.0));
        assert_eq!(reward_value(12.0, None, &radio).unwrap(), Reward::Infeasible);
        assert!(matches!(reward_value(-1.0, Some(1e-3), &radio), Err(Error::NegativeProgress(_))));
        radio.tradeoff_a = 1.0;
        assert_eq!(reward_value(17.5, Some(0.3), &radio).unwrap(), Reward::Value(17.5));
    }

    #[test]
    fn unit_progress_gives_degenerate_conditionals() {
        let mut sc = GeoScenario::telosb(5.0);
        sc.radio.tradeoff_a = 1.0;
        let m = build_reward_model(&sc, 0.0).unwrap();
        for loc in m.locations() {
            assert_eq!(loc.conditional[0].len(), 1);
            assert_eq!(loc.conditional[1].len(), 1);
        }
    }

    #[test]
    fn symmetric_placement_gives_symmetric_joint() {
        let m = build_reward_model(&GeoScenario::telosb(0.0), 0.0).unwrap();
        assert_eq!(m.marginal(Forwarder::First), m.marginal(Forwarder::Second));
        for e in m.joint() {
            let mirror = m.joint().iter().find(|f| f.i == e.j && f.j == e.i).unwrap();
            assert!((mirror.p - e.p).abs() <= 1e-15);
        }
    }

    #[test]
    fn merging_collapses_nearby_values() {
        let sc = GeoScenario::telosb(0.0);
        let exact = build_reward_model(&sc, 0.0).unwrap();
        let merged = build_reward_model(&sc, 50.0).unwrap();
        assert!(merged.n() < exact.n());
        merged.validate().unwrap();
        assert!(build_reward_model(&sc, f64::INFINITY).is_err());
    }

    #[test]
    fn grid_respects_reference_distance() {
        let sc = GeoScenario::telosb(5.0);
        for p in sc.grid() {
            for v in sc.forwarder_positions {
                assert!(v.distance(p) >= 5.0);
            }
        }
    }

    #[test]
    fn empty_region_is_an_error() {
        let mut sc = GeoScenario::telosb(0.0);
        sc.radio.range_m = 1.0;
        assert!(matches!(build_reward_model(&sc, 0.0), Err(Error::EmptyRegion)));
    }
}
