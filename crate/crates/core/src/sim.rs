//! Monte Carlo simulation of the booking horizon under a fixed price policy.
//!
//! Replication `i` draws from a ChaCha20 stream keyed by `(seed, i)`, so
//! results are reproducible for a given seed regardless of how replications
//! are scheduled across threads. Profits are reduced in replication order by
//! pairwise summation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::dp::{bellman_sweep, PricePolicy, ValueFunction};
use crate::error::{Error, Result};
use crate::model::{mnl, ChoiceProbabilities, Scenario};

/// Generator used for every replication stream.
pub const GENERATOR: &str = "rand_chacha-0.9/ChaCha20Rng";

#[derive(Debug, Clone)]
pub struct SimulationOptions {
    pub replications: usize,
    pub seed: u64,
    /// Arrival probability to simulate with instead of the scenario's.
    /// May be zero.
    pub lambda: Option<f64>,
    /// Keep per-replication profits in the result.
    pub record_profits: bool,
}

impl SimulationOptions {
    pub fn new(replications: usize, seed: u64) -> Self {
        SimulationOptions {
            replications,
            seed,
            lambda: None,
            record_profits: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub replications: usize,
    pub mean_profit: f64,
    /// Sample standard deviation over `sqrt(replications)`; zero for one
    /// replication.
    pub std_error: f64,
    pub seed: u64,
    pub generator: &'static str,
    /// Final-state counts, indexed by lattice state.
    pub final_state_histogram: Vec<u64>,
    pub profits: Option<Vec<f64>>,
}

/// Outcome of one booking step.
pub fn draw_step<R: Rng>(rng: &mut R, lambda: f64, choice: &ChoiceProbabilities) -> Option<usize> {
    if rng.random::<f64>() >= lambda {
        return None;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (slot, &p) in choice.per_slot.iter().enumerate() {
        acc += p;
        if u < acc {
            return Some(slot);
        }
    }
    None
}

pub fn simulate(
    s: &Scenario,
    policy: &PricePolicy,
    replications: usize,
    seed: u64,
) -> Result<SimulationResult> {
    simulate_with(s, policy, &SimulationOptions::new(replications, seed))
}

pub fn simulate_with(
    s: &Scenario,
    policy: &PricePolicy,
    opts: &SimulationOptions,
) -> Result<SimulationResult> {
    if opts.replications == 0 {
        return Err(Error::NoReplications);
    }
    let lambda = opts.lambda.unwrap_or(s.lambda);
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::LambdaOverride(lambda));
    }
    let lattice = s.lattice();
    let outcomes: Vec<(f64, usize)> = (0..opts.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
            rng.set_stream(rep as u64);
            let mut x = 0usize;
            let mut revenue = 0.0;
            for t in 1..=s.horizon {
                let prices = policy.prices(t, x).ok_or_else(|| Error::MissingPolicy {
                    t,
                    state: lattice.state(x).to_string(),
                })?;
                let choice = mnl(s, prices);
                if let Some(slot) = draw_step(&mut rng, lambda, &choice) {
                    let price = prices[slot].expect("chosen slot is open");
                    revenue += s.net_revenue + price;
                    x = lattice
                        .successor(x, slot)
                        .expect("policy only opens slots with capacity");
                }
            }
            Ok((revenue - s.cost_at(&lattice, x), x))
        })
        .collect::<Result<_>>()?;

    let profits: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let mut histogram = vec![0u64; lattice.len()];
    for &(_, x) in &outcomes {
        histogram[x] += 1;
    }
    let n = profits.len() as f64;
    let mean = pairwise_sum(&profits) / n;
    let std_error = if profits.len() > 1 {
        let sq: Vec<f64> = profits.iter().map(|p| (p - mean) * (p - mean)).collect();
        (pairwise_sum(&sq) / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Ok(SimulationResult {
        replications: opts.replications,
        mean_profit: mean,
        std_error,
        seed: opts.seed,
        generator: GENERATOR,
        final_state_histogram: histogram,
        profits: opts.record_profits.then_some(profits),
    })
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Greedy policy with respect to a value table: at `(t, x)` the stage
/// optimum against layer `t + 1`.
pub fn policy_from_values(s: &Scenario, vf: &ValueFunction) -> Result<PricePolicy> {
    let lattice = s.lattice();
    let layers = (1..=s.horizon)
        .map(|t| bellman_sweep(s, &lattice, vf.layer(t + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PricePolicy::from_solutions(
        s.horizon,
        lattice.len(),
        layers,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::fixed_point;

    #[test]
    fn closed_policy_is_deterministic() {
        let s = Scenario::example();
        let r = simulate(&s, &PricePolicy::all_closed(&s), 500, 3).unwrap();
        assert_eq!(r.mean_profit, -2.0);
        assert_eq!(r.std_error, 0.0);
        assert_eq!(r.final_state_histogram[0], 500);
    }

    #[test]
    fn single_replication_replays() {
        let s = Scenario::example();
        let policy = PricePolicy::static_price(&s, 1.0).unwrap();
        let a = simulate(&s, &policy, 1, 99).unwrap();
        let b = simulate(&s, &policy, 1, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.std_error, 0.0);
        assert_eq!(a.final_state_histogram.iter().sum::<u64>(), 1);
    }

    #[test]
    fn zero_lambda_override() {
        let s = Scenario::example();
        let policy = PricePolicy::static_price(&s, 1.0).unwrap();
        let opts = SimulationOptions {
            lambda: Some(0.0),
            ..SimulationOptions::new(10, 1)
        };
        let r = simulate_with(&s, &policy, &opts).unwrap();
        assert_eq!(r.mean_profit, -2.0);
        let bad = SimulationOptions {
            lambda: Some(1.0),
            ..SimulationOptions::new(10, 1)
        };
        assert!(simulate_with(&s, &policy, &bad).is_err());
    }

    #[test]
    fn missing_entry_is_reported() {
        let s = Scenario::example();
        let policy = PricePolicy::from_fn(&s, |t, _| (t < 5).then(|| vec![None, None])).unwrap();
        let err = simulate(&s, &policy, 2, 0).unwrap_err();
        assert!(matches!(err, Error::MissingPolicy { t: 5, .. }));
    }

    #[test]
    fn zero_replications_rejected() {
        let s = Scenario::example();
        assert!(matches!(
            simulate(&s, &PricePolicy::all_closed(&s), 0, 0),
            Err(Error::NoReplications)
        ));
    }

    #[test]
    fn fixed_point_policy_charges_max_price() {
        let s = Scenario {
            horizon: 6,
            ..Scenario::example()
        };
        let v = fixed_point(&s);
        let vf = ValueFunction::from_layers(&s, vec![v; 7]).unwrap();
        let policy = policy_from_values(&s, &vf).unwrap();
        let lattice = s.lattice();
        for t in 1..=6 {
            for i in 0..lattice.len() {
                for (slot, p) in policy.prices(t, i).unwrap().iter().enumerate() {
                    let expected = lattice.is_feasible(i, slot).then_some(2.0);
                    assert_eq!(*p, expected);
                }
            }
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 4950.0);
    }
}
