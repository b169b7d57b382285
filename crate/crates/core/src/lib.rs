//! Equilibrium solvers for the two-forwarder relay selection game.
//!
//! Two forwarders each hold a packet and watch the same stream of waking
//! relays. Every relay offers each forwarder a reward; a forwarder either
//! stops and hands its packet to the relay or keeps waiting. The crate
//! builds reward models from forwarding geometry, solves the lone-forwarder
//! stopping problem, computes equilibrium policy pairs for the completely
//! observable ([`co`]) and partially observable ([`po`]) games, the
//! cooperative benchmark ([`coop`]), and runs a duty-cycled multi-hop
//! forwarding simulation ([`netsim`]).

pub mod co;
pub mod coop;
mod error;
mod fixed;
pub mod geo;
mod model;
pub mod netsim;
pub mod po;
pub mod scenario;
pub mod single;
mod types;

pub use co::{CoNeppSolution, CostPair, Family, PolicyPairCO, RegionLabel, StageGame, Thresholds};
pub use coop::CoopSolution;
pub use error::{Error, Result};
pub use geo::{GainAtom, GeoScenario, LocationPmf, RadioParams};
pub use model::{JointEntry, LocationTable, RewardModel, MODEL_FORMAT_VERSION};
pub use po::{PoNeppSolution, Variant};
pub use single::{GameConfig, SingleAgentSolution};
pub use types::{Forwarder, Point, Reward, RewardPmf};
