//! Backward induction over the booking horizon.
//!
//! `V_{tbar+1}(x) = -C(x)` and `V_t = T V_{t+1}` for `t = tbar, ..., 1`, where
//! the Bellman operator `T` solves one stage problem per lattice state. States
//! within a layer are independent given the next layer, so each sweep is
//! evaluated in parallel with rayon; results are collected in index order and
//! do not depend on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Scenario, State, StateLattice};
use crate::pricing::{gamma_at, solve_stage_at, OpportunityCosts, StageSolution};
use crate::Prices;

pub const DEFAULT_MAX_STATES: usize = 10_000_000;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Refuse to allocate value tables for lattices larger than this.
    pub max_states: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_states: DEFAULT_MAX_STATES,
        }
    }
}

/// Dense value table `V_t(x)` for `t = 1..=horizon + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    horizon: usize,
    num_states: usize,
    values: Vec<f64>,
    fingerprint: String,
}

impl ValueFunction {
    /// Builds a table from layers ordered `t = 1, ..., horizon + 1`.
    pub fn from_layers(s: &Scenario, layers: Vec<Vec<f64>>) -> Result<Self> {
        let num_states = s.lattice().len();
        assert_eq!(
            layers.len(),
            s.horizon + 1,
            "one layer per t in 1..=horizon+1"
        );
        let mut values = Vec::with_capacity(layers.len() * num_states);
        for layer in layers {
            if layer.len() != num_states {
                return Err(Error::ValueLength {
                    expected: num_states,
                    got: layer.len(),
                });
            }
            values.extend(layer);
        }
        Ok(ValueFunction {
            horizon: s.horizon,
            num_states,
            values,
            fingerprint: s.fingerprint(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Fingerprint of the scenario this table was solved for.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Layer `V_t`, `1 <= t <= horizon + 1`.
    pub fn layer(&self, t: usize) -> &[f64] {
        assert!(
            t >= 1 && t <= self.horizon + 1,
            "t={t} outside 1..={}",
            self.horizon + 1
        );
        let start = (t - 1) * self.num_states;
        &self.values[start..start + self.num_states]
    }

    pub fn layer_mut(&mut self, t: usize) -> &mut [f64] {
        assert!(
            t >= 1 && t <= self.horizon + 1,
            "t={t} outside 1..={}",
            self.horizon + 1
        );
        let start = (t - 1) * self.num_states;
        &mut self.values[start..start + self.num_states]
    }

    pub fn get(&self, t: usize, index: usize) -> f64 {
        self.layer(t)[index]
    }
}

/// One policy decision: prices offered at `(t, x)` and the stage value.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    pub prices: Prices,
    pub value: f64,
}

/// Prices for every `t` in `1..=horizon` and every lattice state. Entries
/// may be missing for hand-built policies that skip unreachable states.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePolicy {
    horizon: usize,
    num_states: usize,
    entries: Vec<Option<PolicyEntry>>,
}

impl PricePolicy {
    /// Builds a policy from a rule `(t, x) -> prices`. Rejects open slots
    /// that are full and prices outside the box.
    pub fn from_fn<F>(s: &Scenario, mut rule: F) -> Result<Self>
    where
        F: FnMut(usize, &State) -> Option<Prices>,
    {
        let lattice = s.lattice();
        let mut entries = Vec::with_capacity(s.horizon * lattice.len());
        for t in 1..=s.horizon {
            for i in 0..lattice.len() {
                let state = lattice.state(i);
                let entry = match rule(t, &state) {
                    Some(prices) => {
                        check_entry(s, &lattice, t, i, &prices)?;
                        Some(PolicyEntry {
                            prices,
                            value: f64::NAN,
                        })
                    }
                    None => None,
                };
                entries.push(entry);
            }
        }
        Ok(PricePolicy {
            horizon: s.horizon,
            num_states: lattice.len(),
            entries,
        })
    }

    /// Every slot closed everywhere.
    pub fn all_closed(s: &Scenario) -> Self {
        let n = s.num_slots();
        Self::from_fn(s, |_, _| Some(vec![None; n])).expect("closed slots are always valid")
    }

    /// The same price on every slot that can take an order.
    pub fn static_price(s: &Scenario, price: f64) -> Result<Self> {
        let lattice = s.lattice();
        Self::from_fn(s, |_, x| {
            let i = lattice.index(x.orders());
            Some(
                (0..lattice.num_slots())
                    .map(|slot| lattice.is_feasible(i, slot).then_some(price))
                    .collect(),
            )
        })
    }

    pub(crate) fn from_solutions(
        horizon: usize,
        num_states: usize,
        layers: Vec<Vec<StageSolution>>,
    ) -> Self {
        let mut entries = Vec::with_capacity(horizon * num_states);
        for layer in layers {
            entries.extend(layer.into_iter().map(|sol| {
                Some(PolicyEntry {
                    prices: sol.prices,
                    value: sol.value,
                })
            }));
        }
        PricePolicy {
            horizon,
            num_states,
            entries,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Decision at `(t, index)`, `1 <= t <= horizon`.
    pub fn entry(&self, t: usize, index: usize) -> Option<&PolicyEntry> {
        assert!(
            t >= 1 && t <= self.horizon,
            "t={t} outside 1..={}",
            self.horizon
        );
        self.entries[(t - 1) * self.num_states + index].as_ref()
    }

    pub fn prices(&self, t: usize, index: usize) -> Option<&[Option<f64>]> {
        self.entry(t, index).map(|e| e.prices.as_slice())
    }
}

fn check_entry(
    s: &Scenario,
    lattice: &StateLattice,
    t: usize,
    index: usize,
    prices: &[Option<f64>],
) -> Result<()> {
    let fail = |message: String| Error::InvalidPolicy {
        t,
        state: lattice.state(index).to_string(),
        message,
    };
    if prices.len() != lattice.num_slots() {
        return Err(fail(format!(
            "expected {} prices, got {}",
            lattice.num_slots(),
            prices.len()
        )));
    }
    for (slot, p) in prices.iter().enumerate() {
        if let Some(d) = *p {
            if !lattice.is_feasible(index, slot) {
                return Err(fail(format!("slot {} is full but open", slot + 1)));
            }
            if !s.in_box(d) {
                return Err(fail(format!(
                    "price {d} for slot {} outside the box",
                    slot + 1
                )));
            }
        }
    }
    Ok(())
}

/// `V_{tbar+1}(x) = -C(x)`.
pub fn terminal_values(s: &Scenario) -> Vec<f64> {
    let lattice = s.lattice();
    (0..lattice.len())
        .map(|i| -s.cost_at(&lattice, i))
        .collect()
}

fn check_len(lattice: &StateLattice, v: &[f64]) -> Result<()> {
    if v.len() == lattice.len() {
        Ok(())
    } else {
        Err(Error::ValueLength {
            expected: lattice.len(),
            got: v.len(),
        })
    }
}

pub(crate) fn bellman_sweep(
    s: &Scenario,
    lattice: &StateLattice,
    v: &[f64],
) -> Result<Vec<StageSolution>> {
    (0..lattice.len())
        .into_par_iter()
        .map(|i| solve_stage_at(s, lattice, i, v))
        .collect()
}

/// One application of the Bellman operator: `(T V)(x)` for every state.
pub fn bellman_apply(s: &Scenario, v: &[f64]) -> Result<Vec<f64>> {
    let lattice = s.lattice();
    check_len(&lattice, v)?;
    Ok(bellman_sweep(s, &lattice, v)?
        .into_iter()
        .map(|sol| sol.value)
        .collect())
}

/// Sup-norm Bellman residual `||T V - V||_inf`.
pub fn bellman_residual(s: &Scenario, v: &[f64]) -> Result<f64> {
    let tv = bellman_apply(s, v)?;
    Ok(tv
        .iter()
        .zip(v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Exact finite-horizon solve with default options.
pub fn solve_horizon(s: &Scenario) -> Result<(ValueFunction, PricePolicy)> {
    solve_horizon_with(s, &SolveOptions::default())
}

pub fn solve_horizon_with(
    s: &Scenario,
    opts: &SolveOptions,
) -> Result<(ValueFunction, PricePolicy)> {
    let lattice = s.lattice();
    if lattice.len() > opts.max_states {
        return Err(Error::StateLimit {
            states: lattice.len(),
            limit: opts.max_states,
        });
    }
    let n = lattice.len();
    let mut values = vec![0.0; (s.horizon + 1) * n];
    values[s.horizon * n..].copy_from_slice(&terminal_values(s));
    let mut stages = Vec::with_capacity(s.horizon);
    for t in (1..=s.horizon).rev() {
        let (head, tail) = values.split_at_mut(t * n);
        let next = &tail[..n];
        let sols = bellman_sweep(s, &lattice, next)?;
        for (slot, sol) in head[(t - 1) * n..].iter_mut().zip(&sols) {
            *slot = sol.value;
        }
        stages.push(sols);
    }
    stages.reverse();
    let vf = ValueFunction {
        horizon: s.horizon,
        num_states: n,
        values,
        fingerprint: s.fingerprint(),
    };
    Ok((vf, PricePolicy::from_solutions(s.horizon, n, stages)))
}

/// Closed-form infinite-horizon fixed point
/// `V*(x) = (price_max + r) * sum_s (cap_s - x_s) - C(full)`.
///
/// Valid when no marginal cost exceeds `price_max + r`
/// (see [`crate::check_assumption1`]); evaluated regardless.
pub fn fixed_point(s: &Scenario) -> Vec<f64> {
    let lattice = s.lattice();
    let full_cost = s.cost_at(&lattice, lattice.full());
    let margin = s.price_max + s.net_revenue;
    (0..lattice.len())
        .map(|i| {
            let remaining: usize = (0..lattice.num_slots())
                .map(|slot| lattice.capacities()[slot] - lattice.coordinate(i, slot))
                .sum();
            margin * remaining as f64 - full_cost
        })
        .collect()
}

/// `gamma_s = V(x) - V(x + 1_s)` for every slot that can take an order.
///
/// Panics if `v` has the wrong length or holds non-finite entries around `x`.
pub fn opportunity_costs(s: &Scenario, v: &[f64], x: &State) -> OpportunityCosts {
    let lattice = s.lattice();
    assert_eq!(v.len(), lattice.len(), "value table length");
    gamma_at(&lattice, lattice.index(x.orders()), v).expect("finite values")
}
