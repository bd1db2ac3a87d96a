//! Single-stage price optimization.
//!
//! For a state `x` and next-layer values `V`, the stage problem maximizes
//!
//! ```text
//! sum_s p_s(d) [r + d_s + V(x + 1_s) - V(x)] + V(x)
//! ```
//!
//! over prices in the box. Without the box the optimum is available in
//! closed form through the Lambert W function; with the box it is found by a
//! scalar root search over the common markup (see [`solve_stage`]).

use crate::error::{Error, Result};
use crate::lambertw::w0;
use crate::model::{mnl, ChoiceProbabilities, Scenario, State, StateLattice};
use crate::Prices;

/// Opportunity costs `gamma_s = V(x) - V(x + 1_s)`, indexed by slot.
/// Slots that cannot take another order carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpportunityCosts(Vec<Option<f64>>);

impl OpportunityCosts {
    pub fn new(gamma: Vec<Option<f64>>) -> Self {
        OpportunityCosts(gamma)
    }

    /// Every slot offered.
    pub fn all(gamma: Vec<f64>) -> Self {
        OpportunityCosts(gamma.into_iter().map(Some).collect())
    }

    pub fn get(&self, slot: usize) -> Option<f64> {
        self.0[slot]
    }

    pub fn num_slots(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[Option<f64>] {
        &self.0
    }

    /// `(slot, gamma)` for every offered slot.
    pub fn offered(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(s, g)| g.map(|g| (s, g)))
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(Option::is_none)
    }
}

/// `psi_s(z) = exp(beta_c + beta_s + beta_d (z - r) - 1)`.
pub fn psi(s: &Scenario, slot: usize, z: f64) -> f64 {
    (s.base_utility(slot) + s.beta_price * (z - s.net_revenue) - 1.0).exp()
}

fn psi_sum(s: &Scenario, gamma: &OpportunityCosts) -> f64 {
    gamma.offered().map(|(slot, g)| psi(s, slot, g)).sum()
}

/// Expected stage gain of the unconstrained optimum,
/// `phi(gamma) = -lambda / beta_d * W(sum_s psi_s(gamma_s))`.
pub fn phi(s: &Scenario, gamma: &OpportunityCosts) -> f64 {
    -s.lambda / s.beta_price * w0(psi_sum(s, gamma))
}

/// Root of `(h - 1) e^h = sum_s exp(beta_c + beta_s + beta_d (gamma_s - r))`,
/// i.e. `1 + W(sum_s psi_s(gamma_s))`.
pub fn h_value(s: &Scenario, gamma: &OpportunityCosts) -> f64 {
    1.0 + w0(psi_sum(s, gamma))
}

/// Maximizers of the stage objective over unrestricted real prices:
/// `d*_s = gamma_s - r - h / beta_d`. Closed slots stay closed.
pub fn unconstrained_prices(s: &Scenario, gamma: &OpportunityCosts) -> Prices {
    let markup = -h_value(s, gamma) / s.beta_price;
    gamma
        .as_slice()
        .iter()
        .map(|g| g.map(|g| g - s.net_revenue + markup))
        .collect()
}

/// The stage objective at `x` for the given prices. Prices are not checked
/// against the box so that unconstrained optima can be evaluated too.
///
/// Panics if an open slot cannot take another order in `x`.
pub fn stage_objective(s: &Scenario, x: &State, prices: &[Option<f64>], v_next: &[f64]) -> f64 {
    let lattice = s.lattice();
    stage_value(s, &lattice, lattice.index(x.orders()), prices, v_next)
}

pub(crate) fn stage_value(
    s: &Scenario,
    lattice: &StateLattice,
    index: usize,
    prices: &[Option<f64>],
    v_next: &[f64],
) -> f64 {
    assert_eq!(prices.len(), lattice.num_slots(), "price vector arity");
    let here = v_next[index];
    let probs = mnl(s, prices);
    let mut gain = 0.0;
    for (slot, price) in prices.iter().enumerate() {
        if let Some(d) = price {
            let next = lattice
                .successor(index, slot)
                .unwrap_or_else(|| panic!("slot {slot} is full in state {}", lattice.state(index)));
            gain += probs.per_slot[slot] * (s.net_revenue + d + v_next[next] - here);
        }
    }
    s.lambda * gain + here
}

/// Optimal prices and value of one stage problem.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSolution {
    pub prices: Prices,
    pub value: f64,
    /// The unconstrained optimum already lies inside the price box.
    pub interior: bool,
}

/// Opportunity costs at `index` against `values`, checking finiteness of
/// every entry read.
pub(crate) fn gamma_at(
    lattice: &StateLattice,
    index: usize,
    values: &[f64],
) -> Result<OpportunityCosts> {
    let here = values[index];
    if !here.is_finite() {
        return Err(Error::NonFiniteValue(index));
    }
    let mut gamma = Vec::with_capacity(lattice.num_slots());
    for slot in 0..lattice.num_slots() {
        gamma.push(match lattice.successor(index, slot) {
            Some(j) if values[j].is_finite() => Some(here - values[j]),
            Some(j) => return Err(Error::NonFiniteValue(j)),
            None => None,
        });
    }
    Ok(OpportunityCosts(gamma))
}

/// Solves the stage problem at `x` against the next layer `v_next`.
///
/// Full states close every slot and keep `V(x)`. Otherwise the closed-form
/// unconstrained optimum is used when it lies in the box. When it does not,
/// the box-constrained optimum satisfies `d_s = clamp(c_s + theta)` with
/// margin `c_s = gamma_s - r` and a common markup
/// `theta = m(d) - 1/beta_d`, where `m(d) = sum_s Pi_s(d) (d_s - c_s)`.
/// Every root of that scalar equation crosses upward with unit slope, so the
/// root (and hence the stage optimum) is unique; bisection finds it.
pub fn solve_stage(s: &Scenario, x: &State, v_next: &[f64]) -> Result<StageSolution> {
    let lattice = s.lattice();
    if v_next.len() != lattice.len() {
        return Err(Error::ValueLength {
            expected: lattice.len(),
            got: v_next.len(),
        });
    }
    solve_stage_at(s, &lattice, lattice.index(x.orders()), v_next)
}

pub(crate) fn solve_stage_at(
    s: &Scenario,
    lattice: &StateLattice,
    index: usize,
    v_next: &[f64],
) -> Result<StageSolution> {
    let gamma = gamma_at(lattice, index, v_next)?;
    if gamma.is_empty() {
        return Ok(StageSolution {
            prices: vec![None; lattice.num_slots()],
            value: v_next[index],
            interior: true,
        });
    }
    let candidate = unconstrained_prices(s, &gamma);
    if candidate.iter().flatten().all(|&d| s.in_box(d)) {
        return Ok(StageSolution {
            prices: candidate,
            value: v_next[index] + phi(s, &gamma),
            interior: true,
        });
    }
    let prices = box_constrained_prices(s, &gamma);
    let value = stage_value(s, lattice, index, &prices, v_next);
    Ok(StageSolution {
        prices,
        value,
        interior: false,
    })
}

fn box_constrained_prices(s: &Scenario, gamma: &OpportunityCosts) -> Prices {
    let (lo, hi) = (s.price_min, s.price_max);
    let margins: Vec<(usize, f64)> = gamma
        .offered()
        .map(|(slot, g)| (slot, g - s.net_revenue))
        .collect();
    let inv_beta = 1.0 / s.beta_price;
    // theta - m(clamp(c + theta)) + 1/beta_d
    let excess = |theta: f64| {
        let (mut num, mut den) = (0.0, 1.0);
        for &(slot, c) in &margins {
            let d = (c + theta).clamp(lo, hi);
            let w = (s.base_utility(slot) + s.beta_price * d).exp();
            num += w * (d - c);
            den += w;
        }
        theta - num / den + inv_beta
    };
    let c_min = margins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let c_max = margins
        .iter()
        .map(|m| m.1)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut theta_lo = lo - c_max - 1.0;
    let mut theta_hi = hi - c_min + 1.0;
    let theta = if excess(theta_lo) >= 0.0 {
        theta_lo
    } else if excess(theta_hi) <= 0.0 {
        theta_hi
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (theta_lo + theta_hi);
            if mid <= theta_lo || mid >= theta_hi {
                break;
            }
            if excess(mid) < 0.0 {
                theta_lo = mid;
            } else {
                theta_hi = mid;
            }
        }
        0.5 * (theta_lo + theta_hi)
    };

    let mut prices = vec![None; gamma.num_slots()];
    for (slot, c) in margins {
        prices[slot] = Some((c + theta).clamp(lo, hi));
    }
    prices
}

/// Inverts the choice model: `d_s = (ln(p_s / p_0) - beta_c - beta_s) / beta_d`.
/// Slots with zero probability map to closed.
pub fn prices_from_probabilities(s: &Scenario, probs: &ChoiceProbabilities) -> Prices {
    probs
        .per_slot
        .iter()
        .enumerate()
        .map(|(slot, &p)| {
            (p > 0.0).then(|| ((p / probs.no_purchase).ln() - s.base_utility(slot)) / s.beta_price)
        })
        .collect()
}

/// Immediate revenue part of the stage objective written in arrival
/// probabilities `p_s` (with `p_0 = lambda - sum_s p_s`):
/// `f(p) = sum_s p_s {r + (ln(p_s / p_0) - beta_c - beta_s) / beta_d}`.
pub fn revenue_in_probabilities(s: &Scenario, p: &[f64]) -> f64 {
    let p0 = s.lambda - p.iter().sum::<f64>();
    p.iter()
        .enumerate()
        .map(|(slot, &ps)| {
            ps * (s.net_revenue + ((ps / p0).ln() - s.base_utility(slot)) / s.beta_price)
        })
        .sum()
}

/// Continuation part `g(x, p) = sum_s p_s [V(x + 1_s) - V(x)] + V(x)`.
pub fn continuation_in_probabilities(s: &Scenario, x: &State, p: &[f64], values: &[f64]) -> f64 {
    let lattice = s.lattice();
    let index = lattice.index(x.orders());
    let here = values[index];
    let mut total = here;
    for (slot, &ps) in p.iter().enumerate() {
        if ps != 0.0 {
            let next = lattice
                .successor(index, slot)
                .expect("positive probability on a full slot");
            total += ps * (values[next] - here);
        }
    }
    total
}
