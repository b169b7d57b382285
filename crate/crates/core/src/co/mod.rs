//! The completely observable game: each forwarder sees both rewards.

mod nepp;
mod policy;
mod stage;

pub use nepp::{
    apply_t, region_payoffs, solve_nepp, verify_nepp, CoNeppSolution, IterOptions, PairRecord, SolutionRecord,
    VerificationReport,
};
pub(crate) use nepp::{check_ordering, lone_solutions, picard};
pub use policy::{evaluate_policy_pair, CoopRule, NeppRule, PolicyPairCO, PolicyTable, PolicyValues, State};
pub use stage::{
    build_stage_game, classify_region, mixed_strategy_probs, region_equilibria, stage_nash_oracle, Action, CostPair,
    Family, RegionLabel, StageEquilibria, StageGame, Thresholds,
};
