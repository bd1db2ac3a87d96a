//! Discrete concavity diagnostics for value layers.
//!
//! A lattice function `V` is concave-extensible when no convex combination of
//! its values on other lattice points interpolates above `V(x)`. The measure
//!
//! ```text
//! eps = min_{x, Q, mu} V(x) - sum_{q in Q} mu_q V(q)
//! ```
//!
//! ranges over supports `Q` of lattice points other than `x` whose convex
//! hull contains `x`. By Caratheodory it suffices to consider affinely
//! independent supports of at most `dim + 1` points, for which the weights
//! are unique; `eps >= 0` then certifies concave-extensibility on lattice
//! supports. The geometry depends only on the lattice and is computed once.

use itertools::Itertools;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::dp::{solve_horizon, terminal_values, ValueFunction};
use crate::error::{Error, Result};
use crate::lambertw::w0;
use crate::model::{Scenario, State, StateLattice};
use crate::pricing::psi;

pub const DEFAULT_MAX_ENCLOSING_STATES: usize = 10_000;

/// Opportunity-cost increases at or below this count as violations.
pub const INCREASE_TOLERANCE: f64 = 1e-12;

/// Tolerance used for the summary flag of [`ConcavityReport`].
pub const EPSILON_TOLERANCE: f64 = 1e-9;

/// A convex combination of lattice points that reproduces a target state.
///
/// Weights are exact rationals `numerators[k] / denominator`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnclosingCombination {
    /// State indices of the support.
    pub support: Vec<usize>,
    /// Strictly positive, summing to `denominator`.
    pub numerators: Vec<i64>,
    pub denominator: i64,
    /// `numerators / denominator` as floats.
    pub weights: Vec<f64>,
}

impl EnclosingCombination {
    fn new(support: Vec<usize>, numerators: Vec<i64>, denominator: i64) -> Self {
        let weights = numerators
            .iter()
            .map(|&n| n as f64 / denominator as f64)
            .collect();
        EnclosingCombination {
            support,
            numerators,
            denominator,
            weights,
        }
    }

    pub fn interpolate(&self, values: &[f64]) -> f64 {
        self.scaled_sum(values) / self.denominator as f64
    }

    /// `V(x) - sum mu_q V(q)`, evaluated as a single division of an integer
    /// combination so that it is exact whenever the values are small
    /// integers.
    pub fn margin(&self, target: f64, values: &[f64]) -> f64 {
        (self.denominator as f64 * target - self.scaled_sum(values)) / self.denominator as f64
    }

    fn scaled_sum(&self, values: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.numerators)
            .map(|(&q, &n)| n as f64 * values[q])
            .sum()
    }
}

/// All enclosing combinations of every lattice state.
#[derive(Debug, Clone)]
pub struct Enclosings {
    lattice: StateLattice,
    per_state: Vec<Vec<EnclosingCombination>>,
}

impl Enclosings {
    pub fn lattice(&self) -> &StateLattice {
        &self.lattice
    }

    pub fn of(&self, index: usize) -> &[EnclosingCombination] {
        &self.per_state[index]
    }

    pub fn total(&self) -> usize {
        self.per_state.iter().map(Vec::len).sum()
    }
}

/// Enumerates enclosing combinations with the default state-count limit.
pub fn enumerate_enclosings(s: &Scenario) -> Result<Enclosings> {
    enumerate_enclosings_with_limit(&s.lattice(), DEFAULT_MAX_ENCLOSING_STATES)
}

pub fn enumerate_enclosings_with_limit(lattice: &StateLattice, limit: usize) -> Result<Enclosings> {
    if lattice.len() > limit {
        return Err(Error::StateLimit {
            states: lattice.len(),
            limit,
        });
    }
    let points: Vec<Vec<i64>> = (0..lattice.len())
        .map(|i| lattice.state(i).0.iter().map(|&c| c as i64).collect())
        .collect();
    let max_support = lattice.num_slots() + 1;
    let per_state = (0..lattice.len())
        .into_par_iter()
        .map(|x| {
            let others: Vec<usize> = (0..lattice.len()).filter(|&q| q != x).collect();
            let mut found = Vec::new();
            for k in 2..=max_support {
                for support in others.iter().copied().combinations(k) {
                    if !bounding_box_contains(&points, &support, &points[x]) {
                        continue;
                    }
                    if let Some((num, den)) = barycentric(&points, &support, &points[x]) {
                        found.push(EnclosingCombination::new(support, num, den));
                    }
                }
            }
            found
        })
        .collect();
    Ok(Enclosings {
        lattice: lattice.clone(),
        per_state,
    })
}

fn bounding_box_contains(points: &[Vec<i64>], support: &[usize], x: &[i64]) -> bool {
    x.iter().enumerate().all(|(d, &xd)| {
        let lo = support.iter().map(|&q| points[q][d]).min().unwrap_or(xd);
        let hi = support.iter().map(|&q| points[q][d]).max().unwrap_or(xd);
        lo <= xd && xd <= hi
    })
}

/// Exact weights `mu` with `sum mu_q q = x`, `sum mu = 1`, all strictly
/// positive, as numerators over a common denominator. `None` if the support
/// is affinely dependent or does not enclose `x`.
fn barycentric(points: &[Vec<i64>], support: &[usize], x: &[i64]) -> Option<(Vec<i64>, i64)> {
    let dim = x.len();
    let cols = support.len() - 1;
    let base = &points[support[0]];
    let int = |v: i64| Ratio::from_integer(v as i128);
    // augmented dim x (cols + 1) system: [q_j - q_0 | x - q_0]
    let mut m: Vec<Vec<Ratio<i128>>> = (0..dim)
        .map(|r| {
            let mut row: Vec<_> = support[1..]
                .iter()
                .map(|&q| int(points[q][r] - base[r]))
                .collect();
            row.push(int(x[r] - base[r]));
            row
        })
        .collect();
    let mut pivot_row = 0;
    for c in 0..cols {
        let found = (pivot_row..dim).find(|&r| !m[r][c].is_zero())?;
        m.swap(pivot_row, found);
        let p = m[pivot_row][c];
        for v in m[pivot_row].iter_mut() {
            *v /= p;
        }
        let pivot = m[pivot_row].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != pivot_row && !row[c].is_zero() {
                let f = row[c];
                for (cell, &pv) in row[c..].iter_mut().zip(&pivot[c..]) {
                    *cell -= f * pv;
                }
            }
        }
        pivot_row += 1;
    }
    // inconsistent rows mean x is off the affine hull
    if m[pivot_row..].iter().any(|row| !row[cols].is_zero()) {
        return None;
    }
    let mut weights: Vec<Ratio<i128>> = vec![Ratio::one()];
    for row in m.iter().take(cols) {
        weights[0] -= row[cols];
        weights.push(row[cols]);
    }
    if weights.iter().any(|w| *w <= Ratio::zero()) {
        return None;
    }
    let den = weights.iter().fold(1i128, |l, w| l.lcm(w.denom()));
    let num = weights
        .iter()
        .map(|w| (w.numer() * (den / w.denom())) as i64)
        .collect();
    Some((num, den as i64))
}

/// The state and combination attaining the minimum in [`epsilon_t`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonWitness {
    pub state: usize,
    pub combination: EnclosingCombination,
}

impl EpsilonWitness {
    /// Recomputes `V(x) - sum mu_q V(q)` for this witness.
    pub fn margin(&self, values: &[f64]) -> f64 {
        self.combination.margin(values[self.state], values)
    }
}

/// Worst interpolation margin of `values` over all enclosing combinations.
///
/// Returns `+inf` with no witness when no state has an enclosing
/// combination (every lattice point is extreme). Ties resolve to the lowest
/// state index and the first combination in enumeration order.
pub fn epsilon_t(values: &[f64], enclosings: &Enclosings) -> (f64, Option<EpsilonWitness>) {
    assert_eq!(values.len(), enclosings.lattice.len(), "value table length");
    let per_state: Vec<Option<(f64, usize)>> = enclosings
        .per_state
        .par_iter()
        .enumerate()
        .map(|(x, combos)| {
            let mut best: Option<(f64, usize)> = None;
            for (k, combo) in combos.iter().enumerate() {
                let margin = combo.margin(values[x], values);
                if best.map_or(true, |(b, _)| margin < b) {
                    best = Some((margin, k));
                }
            }
            best
        })
        .collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for (x, entry) in per_state.into_iter().enumerate() {
        if let Some((margin, k)) = entry {
            if best.map_or(true, |(b, _, _)| margin < b) {
                best = Some((margin, x, k));
            }
        }
    }
    match best {
        Some((eps, x, k)) => (
            eps,
            Some(EpsilonWitness {
                state: x,
                combination: enclosings.per_state[x][k].clone(),
            }),
        ),
        None => (f64::INFINITY, None),
    }
}

/// Per-layer concavity measure over the booking horizon.
#[derive(Debug, Clone)]
pub struct ConcavityReport {
    /// `epsilon[t - 1]` for `t = 1..=horizon`.
    pub epsilon: Vec<f64>,
    pub witness: Vec<Option<EpsilonWitness>>,
    /// Measure of the terminal layer `t = horizon + 1`.
    pub terminal_epsilon: f64,
    /// Every `epsilon` is at least `-EPSILON_TOLERANCE`.
    pub all_nonnegative: bool,
}

pub fn concavity_report(vf: &ValueFunction, enclosings: &Enclosings) -> ConcavityReport {
    let (epsilon, witness): (Vec<f64>, Vec<Option<EpsilonWitness>>) = (1..=vf.horizon())
        .map(|t| epsilon_t(vf.layer(t), enclosings))
        .unzip();
    let terminal_epsilon = epsilon_t(vf.layer(vf.horizon() + 1), enclosings).0;
    let all_nonnegative = epsilon.iter().all(|&e| e >= -EPSILON_TOLERANCE);
    ConcavityReport {
        epsilon,
        witness,
        terminal_epsilon,
        all_nonnegative,
    }
}

/// Solves the horizon and measures discrete concavity of every layer.
pub fn verify_theorem2(s: &Scenario) -> Result<ConcavityReport> {
    let enclosings = enumerate_enclosings(s)?;
    let (vf, _) = solve_horizon(s)?;
    Ok(concavity_report(&vf, &enclosings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpportunityCostViolation {
    pub state: State,
    pub slot: usize,
    pub other_slot: usize,
    /// `gamma_slot(x + 1_other) - gamma_slot(x)`.
    pub gap: f64,
}

fn opportunity_cost_gaps(lattice: &StateLattice, v: &[f64]) -> Vec<(usize, usize, usize, f64)> {
    let mut out = Vec::new();
    for x in 0..lattice.len() {
        for s in 0..lattice.num_slots() {
            let Some(xs) = lattice.successor(x, s) else {
                continue;
            };
            for other in 0..lattice.num_slots() {
                if other == s {
                    continue;
                }
                let Some(xo) = lattice.successor(x, other) else {
                    continue;
                };
                let xso = xs + lattice.stride(other);
                let gap = (v[xo] - v[xso]) - (v[x] - v[xs]);
                out.push((x, s, other, gap));
            }
        }
    }
    out
}

/// Triples `(x, s, s')` where `gamma_s(x + 1_s') > gamma_s(x)` fails.
pub fn check_increasing_opportunity_costs(
    s: &Scenario,
    v: &[f64],
) -> Vec<OpportunityCostViolation> {
    let lattice = s.lattice();
    assert_eq!(v.len(), lattice.len(), "value table length");
    opportunity_cost_gaps(&lattice, v)
        .into_iter()
        .filter(|&(.., gap)| gap.is_nan() || gap <= INCREASE_TOLERANCE)
        .map(|(x, slot, other_slot, gap)| OpportunityCostViolation {
            state: lattice.state(x),
            slot,
            other_slot,
            gap,
        })
        .collect()
}

/// Largest arrival probability for which increasing opportunity costs at
/// the terminal layer are guaranteed to survive every backward step:
///
/// ```text
/// min_{x,s,s'} -beta_d * gap_terminal(x,s,s') / (horizon * W(sum_s psi_s(0)))
/// ```
///
/// Zero when some terminal gap is not positive; infinite when there is no
/// pair of distinct slots to compare.
pub fn lambda_bound(s: &Scenario) -> f64 {
    let lattice = s.lattice();
    let gaps = opportunity_cost_gaps(&lattice, &terminal_values(s));
    let Some(min_gap) = gaps.iter().map(|g| g.3).reduce(f64::min) else {
        return f64::INFINITY;
    };
    if min_gap.is_nan() || min_gap <= INCREASE_TOLERANCE {
        return 0.0;
    }
    let w = w0((0..s.num_slots()).map(|k| psi(s, k, 0.0)).sum());
    -s.beta_price * min_gap / (s.horizon as f64 * w)
}
