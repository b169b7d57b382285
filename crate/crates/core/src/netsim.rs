//! Discrete-event simulation of multi-hop forwarding over duty-cycled relays.
//!
//! Every node wakes once per period at its own random phase. A node holding
//! a packet watches the wake-ups of its forwarding neighbors, stops on the
//! first one whose reward reaches the node's lone-forwarder threshold and
//! otherwise, one period after it got the packet, sends to the best relay it
//! saw. Background packets appear at random nodes and compete for relays.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{required_power, reward_value, RadioParams};
use crate::single::{solve_threshold, GameConfig, DEFAULT_SINGLE_TOL};
use crate::types::{Forwarder, Point, Reward, RewardPmf};

/// How a node converts its neighbor count into the mean time between relay wake-ups.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterWake {
    /// `T / N_i`: the period shared among the node's neighbors.
    #[default]
    PeriodShare,
    /// `1 / N_i` seconds.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSimConfig {
    /// Side of the square deployment area in meters.
    pub area_m: f64,
    pub node_count: usize,
    pub source_position: Point,
    pub sink_position: Point,
    pub duty_period_s: f64,
    /// Rate of background packet generation.
    pub packet_rate_hz: f64,
    pub source_packet_count: usize,
    pub eta: f64,
    pub radio: RadioParams,
    pub rng_seed: u64,
    pub interwake: InterWake,
    /// Periods a packet may wait without any usable relay before it is dropped.
    pub max_fallback_periods: u32,
    /// Simulated-time safety cap in seconds.
    pub horizon_s: f64,
}

impl Default for NetSimConfig {
    fn default() -> Self {
        NetSimConfig {
            area_m: 1000.0,
            node_count: 1000,
            source_position: Point::new(0.0, 1000.0),
            sink_position: Point::new(1000.0, 0.0),
            duty_period_s: 0.1,
            packet_rate_hz: 0.0,
            source_packet_count: 100,
            eta: 100.0,
            radio: RadioParams::telosb(),
            rng_seed: 1,
            interwake: InterWake::PeriodShare,
            max_fallback_periods: 10,
            horizon_s: 1e5,
        }
    }
}

impl NetSimConfig {
    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        if self.node_count == 0 {
            return Err(Error::InvalidConfig("node_count must be positive".into()));
        }
        if self.node_count >= 1 << 27 {
            return Err(Error::InvalidConfig("node_count is too large".into()));
        }
        for (name, v) in [
            ("area_m", self.area_m),
            ("duty_period_s", self.duty_period_s),
            ("eta", self.eta),
            ("horizon_s", self.horizon_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.packet_rate_hz.is_finite() && self.packet_rate_hz >= 0.0) {
            return Err(Error::InvalidConfig(format!("packet_rate_hz must be nonnegative, got {}", self.packet_rate_hz)));
        }
        if self.max_fallback_periods == 0 {
            return Err(Error::InvalidConfig("max_fallback_periods must be positive".into()));
        }
        Ok(())
    }
}

/// A relay candidate of a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u32,
    pub distance: f64,
    pub progress: f64,
}

/// Why a node cannot forward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    /// Forwards through relays with the given threshold.
    Relay { alpha: f64 },
    /// Reaches the sink directly.
    SinkNeighbor,
    /// No neighbor offers progress.
    Void,
    /// Neighbors exist but none is reachable within the power cap.
    Unreachable,
}

/// A placed network: relays `0..node_count`, then the source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub positions: Vec<Point>,
    pub phases: Vec<f64>,
    pub neighbors: Vec<Vec<Neighbor>>,
    pub roles: Vec<NodeRole>,
    pub sink: Point,
}

impl Network {
    pub fn source(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn void_count(&self) -> usize {
        self.roles.iter().filter(|r| matches!(r, NodeRole::Void | NodeRole::Unreachable)).count()
    }

    pub fn mean_neighbors(&self) -> f64 {
        self.neighbors.iter().map(Vec::len).sum::<usize>() as f64 / self.len() as f64
    }
}

const TAG_PLACEMENT: u64 = 0;
const TAG_GAIN: u64 = 1;
const TAG_CONTENTION: u64 = 2;
const TAG_BACKGROUND: u64 = 3;

fn stream(tag: u64, a: usize, b: usize) -> u64 {
    (tag << 56) | ((a as u64) << 28) | b as u64
}

/// Places nodes, draws wake phases and computes neighbor lists and
/// per-node forwarding roles.
pub fn build_network(config: &NetSimConfig) -> Result<Network> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(stream(TAG_PLACEMENT, 0, 0));
    let n = config.node_count;
    let mut positions: Vec<Point> = (0..n)
        .map(|_| Point::new(rng.random::<f64>() * config.area_m, rng.random::<f64>() * config.area_m))
        .collect();
    positions.push(config.source_position);
    let phases: Vec<f64> = (0..positions.len()).map(|_| rng.random::<f64>() * config.duty_period_s).collect();

    let radio = &config.radio;
    let sink = config.sink_position;
    let to_sink: Vec<f64> = positions.iter().map(|p| p.distance(sink)).collect();
    let mut neighbors = vec![Vec::new(); positions.len()];
    for (i, nb) in neighbors.iter_mut().enumerate() {
        for (j, &q) in positions.iter().enumerate() {
            if i == j {
                continue;
            }
            let distance = positions[i].distance(q);
            let progress = to_sink[i] - to_sink[j];
            // Relays inside the reference distance fall outside the channel model.
            if distance <= radio.range_m && distance >= radio.reference_distance_m && progress >= 0.0 {
                nb.push(Neighbor { id: j as u32, distance, progress });
            }
        }
    }
    let mut network = Network { positions, phases, neighbors, roles: Vec::new(), sink };
    let roles = (0..network.len())
        .map(|i| {
            if to_sink[i] <= radio.range_m {
                return Ok(NodeRole::SinkNeighbor);
            }
            if network.neighbors[i].is_empty() {
                return Ok(NodeRole::Void);
            }
            match node_threshold(i, &network, config) {
                Ok(alpha) => Ok(NodeRole::Relay { alpha }),
                Err(Error::NoFeasibleRelay(_)) => Ok(NodeRole::Unreachable),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    network.roles = roles;
    Ok(network)
}

fn neighbor_reward(nb: &Neighbor, gain: f64, radio: &RadioParams) -> Result<(Reward, Option<f64>)> {
    let power = required_power(nb.distance, gain, radio)?;
    Ok((reward_value(nb.progress, power, radio)?, power))
}

/// Lone-forwarder threshold of a node, treating its neighbors as equally
/// likely to wake next and gains as drawn from the gain table.
pub fn node_threshold(node: usize, network: &Network, config: &NetSimConfig) -> Result<f64> {
    let nbrs = &network.neighbors[node];
    if nbrs.is_empty() {
        return Err(Error::Network(format!("node {node} has no forwarding neighbors")));
    }
    let count = nbrs.len() as f64;
    let mut atoms = Vec::with_capacity(nbrs.len() * config.radio.gain_table.len());
    for nb in nbrs {
        for g in &config.radio.gain_table {
            atoms.push((neighbor_reward(nb, g.gain, &config.radio)?.0, g.prob / count));
        }
    }
    let pmf = RewardPmf::from_atoms(atoms)?;
    let tau = match config.interwake {
        InterWake::PeriodShare => config.duty_period_s / count,
        InterWake::Literal => 1.0 / count,
    };
    let game = GameConfig { mean_interarrival_s: tau, tradeoff_1: config.eta, tradeoff_2: config.eta, win_prob_1: 0.5 };
    Ok(solve_threshold(&pmf, &game, Forwarder::First, DEFAULT_SINGLE_TOL)?.alpha)
}

/// Outcome of one source packet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub packet_id: usize,
    /// `None` when delivered, otherwise why the packet was dropped.
    pub drop_reason: Option<String>,
    pub delay_s: f64,
    pub power_mw: f64,
    pub hops: u32,
    pub contentions: u32,
}

impl PacketRecord {
    pub fn delivered(&self) -> bool {
        self.drop_reason.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSimResult {
    pub lambda: f64,
    pub seed: u64,
    pub packets: Vec<PacketRecord>,
    pub background_generated: usize,
    pub background_delivered: usize,
    /// Set when the horizon cut the run short.
    pub partial: bool,
    pub end_time_s: f64,
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl NetSimResult {
    pub fn delivered(&self) -> impl Iterator<Item = &PacketRecord> {
        self.packets.iter().filter(|p| p.delivered())
    }

    /// `(mean delay, se, mean power, se)` over delivered source packets.
    pub fn summary(&self) -> (f64, f64, f64, f64) {
        let delays: Vec<f64> = self.delivered().map(|p| p.delay_s).collect();
        let powers: Vec<f64> = self.delivered().map(|p| p.power_mw).collect();
        let (md, sd) = mean_se(&delays);
        let (mp, sp) = mean_se(&powers);
        (md, sd, mp, sp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Wake,
    Fallback,
    Background,
}

#[derive(Clone, Copy, Debug)]
struct Event {
    time: f64,
    node: u32,
    kind: Kind,
    packet: u32,
    epoch: u32,
    wake: u64,
}

impl Event {
    fn key(&self) -> (u32, Kind, u32) {
        (self.node, self.kind, self.packet)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then_with(|| self.key().cmp(&other.key()))
    }
}

#[derive(Clone, Copy)]
struct Slot {
    time: f64,
    relay: u32,
    wake: u64,
    nbr: u32,
}

struct Observation {
    reward: f64,
    relay: u32,
    power: f64,
}

struct Packet {
    source_id: Option<usize>,
    holder: usize,
    born: f64,
    power: f64,
    hops: u32,
    contentions: u32,
    epoch: u32,
    idle_periods: u32,
    schedule: Vec<Slot>,
    next: usize,
    seen: Vec<Observation>,
}

enum Outcome {
    Delivered,
    Dropped(&'static str),
}

struct Sim<'a> {
    net: &'a Network,
    cfg: &'a NetSimConfig,
    heap: BinaryHeap<Reverse<Event>>,
    packets: Vec<Packet>,
    held: Vec<u32>,
    crn: ChaCha8Rng,
    cum_gain: Vec<f64>,
}

impl<'a> Sim<'a> {
    fn draw(&mut self, tag: u64, a: usize, b: usize, k: u64) -> f64 {
        self.crn.set_stream(stream(tag, a, b));
        self.crn.set_word_pos(k as u128 * 16);
        self.crn.random::<f64>()
    }

    /// Gain offered by `relay` to `holder` at the relay's `wake`-th wake-up.
    fn gain(&mut self, holder: usize, relay: usize, wake: u64) -> f64 {
        let u = self.draw(TAG_GAIN, holder, relay, wake);
        let k = self.cum_gain.partition_point(|&c| c <= u).min(self.cum_gain.len() - 1);
        self.cfg.radio.gain_table[k].gain
    }

    fn push(&mut self, e: Event) {
        self.heap.push(Reverse(e));
    }

    /// Gives packet `id` to `node` at time `t`, then either finishes it or
    /// opens a new forwarding window.
    fn arrive(&mut self, id: usize, node: usize, t: f64) -> Option<Outcome> {
        let p = &mut self.packets[id];
        self.held[p.holder] -= 1;
        p.holder = node;
        self.held[node] += 1;
        p.epoch += 1;
        p.idle_periods = 0;
        self.start(id, t)
    }

    fn start(&mut self, id: usize, t: f64) -> Option<Outcome> {
        let node = self.packets[id].holder;
        match self.net.roles[node] {
            NodeRole::SinkNeighbor => {
                let d = self.net.positions[node].distance(self.net.sink).max(self.cfg.radio.reference_distance_m);
                let sink_nb = Neighbor { id: self.net.len() as u32, distance: d, progress: 0.0 };
                let gain = self.gain(node, self.net.len(), id as u64);
                let power = required_power(sink_nb.distance, gain, &self.cfg.radio).ok().flatten();
                match power {
                    Some(pw) => {
                        let p = &mut self.packets[id];
                        p.power += pw;
                        p.hops += 1;
                        Some(Outcome::Delivered)
                    }
                    None => Some(Outcome::Dropped("sink-unreachable")),
                }
            }
            NodeRole::Void => Some(Outcome::Dropped("void")),
            NodeRole::Unreachable => Some(Outcome::Dropped("no-feasible-relay")),
            NodeRole::Relay { .. } => {
                self.open_window(id, t);
                None
            }
        }
    }

    fn open_window(&mut self, id: usize, t0: f64) {
        let period = self.cfg.duty_period_s;
        let node = self.packets[id].holder;
        let mut schedule: Vec<Slot> = self.net.neighbors[node]
            .iter()
            .enumerate()
            .map(|(k, nb)| {
                let phase = self.net.phases[nb.id as usize];
                let mut wake = ((t0 - phase) / period).floor() + 1.0;
                if phase + wake * period <= t0 {
                    wake += 1.0;
                }
                Slot { time: phase + wake * period, relay: nb.id, wake: wake as u64, nbr: k as u32 }
            })
            .collect();
        schedule.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.relay.cmp(&b.relay)));
        let p = &mut self.packets[id];
        p.schedule = schedule;
        p.next = 0;
        p.seen.clear();
        let epoch = p.epoch;
        self.push(Event { time: t0 + period, node: node as u32, kind: Kind::Fallback, packet: id as u32, epoch, wake: 0 });
        self.schedule_next(id);
    }

    fn schedule_next(&mut self, id: usize) {
        let p = &mut self.packets[id];
        if let Some(&slot) = p.schedule.get(p.next) {
            p.next += 1;
            let e = Event { time: slot.time, node: slot.relay, kind: Kind::Wake, packet: id as u32, epoch: p.epoch, wake: slot.wake };
            self.push(e);
        }
    }

    fn live(&self, e: &Event) -> bool {
        self.packets[e.packet as usize].epoch == e.epoch
    }
}

/// Runs one replication: the source sends its packets one after another
/// while background packets arrive at rate `packet_rate_hz`.
pub fn simulate(network: &Network, config: &NetSimConfig) -> Result<NetSimResult> {
    config.validate()?;
    if network.len() != config.node_count + 1 {
        return Err(Error::Network("network does not match the configured node count".into()));
    }
    let mut cum = 0.0;
    let cum_gain = config.radio.gain_table.iter().map(|g| {
        cum += g.prob;
        cum
    });
    let mut sim = Sim {
        net: network,
        cfg: config,
        heap: BinaryHeap::new(),
        packets: Vec::new(),
        held: vec![0; network.len()],
        crn: ChaCha8Rng::seed_from_u64(config.rng_seed),
        cum_gain: cum_gain.collect(),
    };
    let mut bg_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    bg_rng.set_stream(stream(TAG_BACKGROUND, 0, 0));
    let interarrival = (config.packet_rate_hz > 0.0).then(|| Exp::new(config.packet_rate_hz).expect("positive rate"));

    let mut records: Vec<PacketRecord> = Vec::with_capacity(config.source_packet_count);
    let mut background_generated = 0;
    let mut background_delivered = 0;
    let mut partial = false;
    let mut now = 0.0;

    let new_packet = |sim: &mut Sim, source_id: Option<usize>, node: usize, t: f64| -> usize {
        sim.packets.push(Packet {
            source_id,
            holder: node,
            born: t,
            power: 0.0,
            hops: 0,
            contentions: 0,
            epoch: 0,
            idle_periods: 0,
            schedule: Vec::new(),
            next: 0,
            seen: Vec::new(),
        });
        sim.held[node] += 1;
        sim.packets.len() - 1
    };

    if let Some(exp) = &interarrival {
        let t = exp.sample(&mut bg_rng);
        sim.push(Event { time: t, node: u32::MAX, kind: Kind::Background, packet: 0, epoch: 0, wake: 0 });
    }

    let mut pending: Vec<(usize, Outcome, f64)> = Vec::new();
    let mut next_source = 0;
    if config.source_packet_count > 0 {
        let id = new_packet(&mut sim, Some(0), network.source(), 0.0);
        next_source = 1;
        if let Some(out) = sim.start(id, 0.0) {
            pending.push((id, out, 0.0));
        }
    }

    loop {
        // Settle finished packets; a finished source packet releases the next one.
        while let Some((id, outcome, t)) = pending.pop() {
            let p = &mut sim.packets[id];
            sim.held[p.holder] -= 1;
            p.epoch += 1;
            p.schedule = Vec::new();
            p.seen = Vec::new();
            match p.source_id {
                Some(packet_id) => {
                    records.push(PacketRecord {
                        packet_id,
                        drop_reason: match outcome {
                            Outcome::Delivered => None,
                            Outcome::Dropped(why) => Some(why.to_string()),
                        },
                        delay_s: t - p.born,
                        power_mw: p.power,
                        hops: p.hops,
                        contentions: p.contentions,
                    });
                    if next_source < config.source_packet_count {
                        let id = new_packet(&mut sim, Some(next_source), network.source(), t);
                        next_source += 1;
                        if let Some(out) = sim.start(id, t) {
                            pending.push((id, out, t));
                        }
                    }
                }
                None => {
                    if matches!(outcome, Outcome::Delivered) {
                        background_delivered += 1;
                    }
                }
            }
        }
        if records.len() == config.source_packet_count {
            break;
        }
        let Some(Reverse(e)) = sim.heap.pop() else {
            return Err(Error::Network("event queue ran dry with packets in flight".into()));
        };
        now = e.time;
        if now > config.horizon_s {
            partial = true;
            break;
        }
        match e.kind {
            Kind::Background => {
                let exp = interarrival.as_ref().expect("background events need a rate");
                let node = bg_rng.random_range(0..config.node_count);
                background_generated += 1;
                let id = new_packet(&mut sim, None, node, now);
                if let Some(out) = sim.start(id, now) {
                    pending.push((id, out, now));
                }
                let t = now + exp.sample(&mut bg_rng);
                sim.push(Event { time: t, ..e });
            }
            Kind::Fallback => {
                if !sim.live(&e) {
                    continue;
                }
                let id = e.packet as usize;
                let best = sim.packets[id]
                    .seen
                    .iter()
                    .filter(|o| sim.held[o.relay as usize] == 0)
                    .max_by(|a, b| a.reward.total_cmp(&b.reward).then(b.relay.cmp(&a.relay)))
                    .map(|o| (o.relay, o.power));
                match best {
                    Some((relay, power)) => {
                        let p = &mut sim.packets[id];
                        p.power += power;
                        p.hops += 1;
                        if let Some(out) = sim.arrive(id, relay as usize, now) {
                            pending.push((id, out, now));
                        }
                    }
                    None => {
                        let p = &mut sim.packets[id];
                        p.idle_periods += 1;
                        if p.idle_periods >= config.max_fallback_periods {
                            pending.push((id, Outcome::Dropped("no-relay"), now));
                        } else {
                            p.epoch += 1;
                            sim.open_window(id, now);
                        }
                    }
                }
            }
            Kind::Wake => {
                let mut group = vec![e];
                while let Some(Reverse(top)) = sim.heap.peek() {
                    if top.kind == Kind::Wake && top.node == e.node && top.time == e.time {
                        group.push(sim.heap.pop().unwrap().0);
                    } else {
                        break;
                    }
                }
                group.retain(|g| sim.live(g));
                let relay = e.node as usize;
                let available = sim.held[relay] == 0;
                let mut stoppers: Vec<(usize, f64)> = Vec::new();
                if available {
                    for g in &group {
                        let id = g.packet as usize;
                        let holder = sim.packets[id].holder;
                        let slot = sim.packets[id].schedule[sim.packets[id].next - 1];
                        let nb = network.neighbors[holder][slot.nbr as usize];
                        let gain = sim.gain(holder, relay, g.wake);
                        let (reward, power) = neighbor_reward(&nb, gain, &config.radio)?;
                        let (Reward::Value(r), Some(power)) = (reward, power) else {
                            continue;
                        };
                        sim.packets[id].seen.push(Observation { reward: r, relay: relay as u32, power });
                        let NodeRole::Relay { alpha } = network.roles[holder] else {
                            unreachable!("only relay nodes open windows");
                        };
                        if r >= alpha {
                            stoppers.push((id, power));
                        }
                    }
                }
                let winner = match stoppers.len() {
                    0 => None,
                    1 => Some(stoppers[0]),
                    k => {
                        for &(id, _) in &stoppers {
                            sim.packets[id].contentions += 1;
                        }
                        let u = sim.draw(TAG_CONTENTION, relay, 0, e.wake);
                        Some(stoppers[((u * k as f64) as usize).min(k - 1)])
                    }
                };
                for g in &group {
                    let id = g.packet as usize;
                    if winner.is_some_and(|(w, _)| w == id) {
                        continue;
                    }
                    sim.schedule_next(id);
                }
                if let Some((id, power)) = winner {
                    let p = &mut sim.packets[id];
                    p.power += power;
                    p.hops += 1;
                    if let Some(out) = sim.arrive(id, relay, now) {
                        pending.push((id, out, now));
                    }
                }
            }
        }
    }

    records.sort_by_key(|r| r.packet_id);
    Ok(NetSimResult {
        lambda: config.packet_rate_hz,
        seed: config.rng_seed,
        packets: records,
        background_generated,
        background_delivered,
        partial,
        end_time_s: now,
    })
}
