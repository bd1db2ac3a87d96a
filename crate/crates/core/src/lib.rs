//! Exact finite-horizon dynamic programming for attended home delivery
//! time slot pricing.
//!
//! The crate computes the value function of the booking-horizon DP over the
//! full order lattice, the optimal multinomial-logit slot prices at every
//! `(t, x)`, the closed-form infinite-horizon fixed point, and a set of
//! numerical diagnostics (discrete concavity of each value layer, increasing
//! opportunity costs, the arrival-rate bound). A seeded Monte Carlo simulator
//! cross-checks the value function against sampled booking trajectories.
//!
//! Slots are indexed from 0 in the API. CSV and CLI output number them from 1.

pub mod analysis;
pub mod dp;
pub mod error;
pub mod lambertw;
pub mod model;
pub mod pricing;
pub mod report;
pub mod sim;

pub use analysis::{
    check_increasing_opportunity_costs, concavity_report, enumerate_enclosings, epsilon_t,
    lambda_bound, verify_theorem2, ConcavityReport, EnclosingCombination, Enclosings,
    EpsilonWitness, OpportunityCostViolation,
};
pub use dp::{
    bellman_apply, bellman_residual, fixed_point, opportunity_costs, solve_horizon,
    solve_horizon_with, terminal_values, PolicyEntry, PricePolicy, SolveOptions, ValueFunction,
};
pub use error::{Error, Result};
pub use lambertw::{lambert_w0, lambert_w0_derivative};
pub use model::{
    arrival_probabilities, check_assumption1, choice_probabilities, cost, enumerate_states,
    feasible_slots, load_scenario, Assumption1Violation, ChoiceProbabilities, CostSpec, Scenario,
    State, StateLattice, EXAMPLE_SCENARIO,
};
pub use pricing::{
    h_value, phi, psi, solve_stage, stage_objective, unconstrained_prices, OpportunityCosts,
    StageSolution,
};
pub use sim::{policy_from_values, simulate, simulate_with, SimulationOptions, SimulationResult};

/// Per-slot prices; `None` marks a closed slot.
pub type Prices = Vec<Option<f64>>;
