//! Scenario parameters, the order lattice, delivery cost and the
//! multinomial-logit choice model.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The two-slot example scenario shipped with the CLI (`slotdp example`).
pub const EXAMPLE_SCENARIO: &str = r#"{"lambda":0.5,"horizon":200,"price_min":0.0,"price_max":2.0,"net_revenue":1.0,
 "beta_const":1.0,"beta_price":-1.0,
 "slots":[{"beta":1.0,"capacity":4},{"beta":-1.0,"capacity":4}],
 "cost":{"type":"affine","intercept":2.0,"coefficients":[1.0,2.0]}}
"#;

/// Delivery cost of a lattice state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum CostSpec {
    /// `intercept + sum_s coefficients[s] * x_s`.
    Affine {
        intercept: f64,
        coefficients: Vec<f64>,
    },
    /// One value per lattice state, in mixed-radix state order.
    Table { values: Vec<f64> },
}

/// Model parameters for one delivery sub-area.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Probability that a customer arrives in one booking step.
    pub lambda: f64,
    /// Number of booking steps.
    pub horizon: usize,
    pub price_min: f64,
    pub price_max: f64,
    /// Expected net revenue of an order, before delivery.
    pub net_revenue: f64,
    pub slot_betas: Vec<f64>,
    pub beta_const: f64,
    /// Price sensitivity; strictly negative.
    pub beta_price: f64,
    pub capacities: Vec<usize>,
    pub cost: CostSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    lambda: f64,
    horizon: usize,
    price_min: f64,
    price_max: f64,
    net_revenue: f64,
    beta_const: f64,
    beta_price: f64,
    slots: Vec<SlotFile>,
    cost: CostSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotFile {
    beta: f64,
    capacity: usize,
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let scenario = Scenario {
        lambda: file.lambda,
        horizon: file.horizon,
        price_min: file.price_min,
        price_max: file.price_max,
        net_revenue: file.net_revenue,
        slot_betas: file.slots.iter().map(|s| s.beta).collect(),
        beta_const: file.beta_const,
        beta_price: file.beta_price,
        capacities: file.slots.iter().map(|s| s.capacity).collect(),
        cost: file.cost,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn require_finite(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{field} must be finite")))
    }
}

impl Scenario {
    /// The built-in two-slot example.
    pub fn example() -> Scenario {
        load_scenario(EXAMPLE_SCENARIO).expect("built-in scenario is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::invalid(
                "lambda",
                "lambda must lie strictly between 0 and 1",
            ));
        }
        for (field, value) in [
            ("price_min", self.price_min),
            ("price_max", self.price_max),
            ("net_revenue", self.net_revenue),
            ("beta_const", self.beta_const),
            ("beta_price", self.beta_price),
        ] {
            require_finite(field, value)?;
        }
        if self.price_max < self.price_min {
            return Err(Error::invalid(
                "price_max",
                "price_max must be greater than or equal to price_min",
            ));
        }
        if self.beta_price >= 0.0 {
            return Err(Error::invalid(
                "beta_price",
                "beta_price must be strictly negative",
            ));
        }
        if self.capacities.is_empty() {
            return Err(Error::invalid("slots", "at least one slot is required"));
        }
        if self.slot_betas.len() != self.capacities.len() {
            return Err(Error::invalid(
                "slots",
                "slot betas and capacities must have equal length",
            ));
        }
        if self.slot_betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("slots", "slot betas must be finite"));
        }
        if self.capacities.iter().any(|&c| c < 1) {
            return Err(Error::invalid(
                "slots",
                "every slot capacity must be at least 1",
            ));
        }
        let states = lattice_size(&self.capacities).ok_or_else(|| {
            Error::invalid("slots", "state lattice size overflows the address space")
        })?;
        match &self.cost {
            CostSpec::Affine {
                intercept,
                coefficients,
            } => {
                require_finite("cost", *intercept)?;
                if coefficients.len() != self.capacities.len() {
                    return Err(Error::invalid(
                        "cost",
                        format!(
                            "affine cost needs one coefficient per slot (expected {}, got {})",
                            self.capacities.len(),
                            coefficients.len()
                        ),
                    ));
                }
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("cost", "cost must be finite"));
                }
            }
            CostSpec::Table { values } => {
                if values.len() != states {
                    return Err(Error::invalid(
                        "cost",
                        format!(
                            "cost table needs one value per lattice state (expected {}, got {})",
                            states,
                            values.len()
                        ),
                    ));
                }
                if values.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("cost", "cost must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn num_slots(&self) -> usize {
        self.capacities.len()
    }

    pub fn lattice(&self) -> StateLattice {
        StateLattice::new(&self.capacities)
    }

    /// Copy of the scenario with a different arrival probability.
    pub fn with_lambda(&self, lambda: f64) -> Scenario {
        Scenario {
            lambda,
            ..self.clone()
        }
    }

    /// Serializes back to the scenario document format (compact JSON).
    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            lambda: self.lambda,
            horizon: self.horizon,
            price_min: self.price_min,
            price_max: self.price_max,
            net_revenue: self.net_revenue,
            beta_const: self.beta_const,
            beta_price: self.beta_price,
            slots: self
                .slot_betas
                .iter()
                .zip(&self.capacities)
                .map(|(&beta, &capacity)| SlotFile { beta, capacity })
                .collect(),
            cost: self.cost.clone(),
        };
        serde_json::to_string(&file).expect("scenario serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    /// Deterministic utility `beta_const + beta_s` of slot `s` at price zero.
    pub(crate) fn base_utility(&self, slot: usize) -> f64 {
        self.beta_const + self.slot_betas[slot]
    }

    pub(crate) fn cost_at(&self, lattice: &StateLattice, index: usize) -> f64 {
        match &self.cost {
            CostSpec::Affine {
                intercept,
                coefficients,
            } => {
                let mut total = *intercept;
                for (s, c) in coefficients.iter().enumerate() {
                    total += c * lattice.coordinate(index, s) as f64;
                }
                total
            }
            CostSpec::Table { values } => values[index],
        }
    }

    pub(crate) fn in_box(&self, price: f64) -> bool {
        price >= self.price_min && price <= self.price_max
    }
}

fn lattice_size(capacities: &[usize]) -> Option<usize> {
    capacities
        .iter()
        .try_fold(1usize, |acc, &c| acc.checked_mul(c.checked_add(1)?))
}

/// Order counts per slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(pub Vec<usize>);

impl State {
    pub fn orders(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for State {
    fn from(v: Vec<usize>) -> Self {
        State(v)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// Mixed-radix indexing of `X = prod_s {0..cap_s}`, first slot fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLattice {
    capacities: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl StateLattice {
    pub fn new(capacities: &[usize]) -> Self {
        let mut strides = Vec::with_capacity(capacities.len());
        let mut len = 1usize;
        for &c in capacities {
            strides.push(len);
            len *= c + 1;
        }
        StateLattice {
            capacities: capacities.to_vec(),
            strides,
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_slots(&self) -> usize {
        self.capacities.len()
    }

    pub fn capacities(&self) -> &[usize] {
        &self.capacities
    }

    pub fn stride(&self, slot: usize) -> usize {
        self.strides[slot]
    }

    pub fn contains(&self, orders: &[usize]) -> bool {
        orders.len() == self.capacities.len()
            && orders.iter().zip(&self.capacities).all(|(x, c)| x <= c)
    }

    /// Index of `orders`; panics if the state lies outside the lattice.
    pub fn index(&self, orders: &[usize]) -> usize {
        assert!(
            self.contains(orders),
            "state {orders:?} lies outside the lattice {:?}",
            self.capacities
        );
        orders.iter().zip(&self.strides).map(|(x, s)| x * s).sum()
    }

    pub fn coordinate(&self, index: usize, slot: usize) -> usize {
        (index / self.strides[slot]) % (self.capacities[slot] + 1)
    }

    pub fn state(&self, index: usize) -> State {
        assert!(index < self.len, "state index {index} out of range");
        State(
            (0..self.num_slots())
                .map(|s| self.coordinate(index, s))
                .collect(),
        )
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.len).map(move |i| self.state(i))
    }

    pub fn is_feasible(&self, index: usize, slot: usize) -> bool {
        self.coordinate(index, slot) < self.capacities[slot]
    }

    /// Index of `x + 1_slot`, if that state is in the lattice.
    pub fn successor(&self, index: usize, slot: usize) -> Option<usize> {
        self.is_feasible(index, slot)
            .then(|| index + self.strides[slot])
    }

    pub fn feasible_slots_at(&self, index: usize) -> Vec<usize> {
        (0..self.num_slots())
            .filter(|&s| self.is_feasible(index, s))
            .collect()
    }

    /// Index of the full-capacity state.
    pub fn full(&self) -> usize {
        self.len - 1
    }
}

/// All lattice states in index order.
pub fn enumerate_states(s: &Scenario) -> Vec<State> {
    s.lattice().states().collect()
}

/// Slots that can still take an order in state `x`.
pub fn feasible_slots(s: &Scenario, x: &State) -> Vec<usize> {
    let lattice = s.lattice();
    lattice.feasible_slots_at(lattice.index(x.orders()))
}

/// Delivery cost of `x`. Panics if `x` is outside the lattice.
pub fn cost(s: &Scenario, x: &State) -> f64 {
    let lattice = s.lattice();
    let index = lattice.index(x.orders());
    s.cost_at(&lattice, index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assumption1Violation {
    pub state: State,
    pub slot: usize,
    pub marginal_cost: f64,
}

/// Every `(x, s)` whose marginal cost `C(x + 1_s) - C(x)` exceeds the maximum
/// marginal profit `price_max + net_revenue`. Empty when the fixed point
/// formula applies.
pub fn check_assumption1(s: &Scenario) -> Vec<Assumption1Violation> {
    let lattice = s.lattice();
    let bound = s.price_max + s.net_revenue;
    let mut out = Vec::new();
    for i in 0..lattice.len() {
        for slot in 0..lattice.num_slots() {
            if let Some(j) = lattice.successor(i, slot) {
                let marginal = s.cost_at(&lattice, j) - s.cost_at(&lattice, i);
                if marginal > bound {
                    out.push(Assumption1Violation {
                        state: lattice.state(i),
                        slot,
                        marginal_cost: marginal,
                    });
                }
            }
        }
    }
    out
}

/// MNL choice probabilities given the offered prices.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceProbabilities {
    /// Zero for closed slots.
    pub per_slot: Vec<f64>,
    pub no_purchase: f64,
}

fn check_prices(s: &Scenario, prices: &[Option<f64>]) -> Result<()> {
    if prices.len() != s.num_slots() {
        return Err(Error::PriceArity {
            expected: s.num_slots(),
            got: prices.len(),
        });
    }
    for (slot, p) in prices.iter().enumerate() {
        if let Some(price) = *p {
            if !s.in_box(price) {
                return Err(Error::PriceOutOfBox {
                    slot,
                    price,
                    min: s.price_min,
                    max: s.price_max,
                });
            }
        }
    }
    Ok(())
}

/// MNL evaluation without the price-box check. Closed slots drop out of the
/// denominator.
pub(crate) fn mnl(s: &Scenario, prices: &[Option<f64>]) -> ChoiceProbabilities {
    let weights: Vec<f64> = prices
        .iter()
        .enumerate()
        .map(|(slot, p)| match p {
            Some(d) => (s.base_utility(slot) + s.beta_price * d).exp(),
            None => 0.0,
        })
        .collect();
    let denom = 1.0 + weights.iter().sum::<f64>();
    ChoiceProbabilities {
        per_slot: weights.iter().map(|w| w / denom).collect(),
        no_purchase: 1.0 / denom,
    }
}

/// Probabilities that an arriving customer picks each slot or leaves.
pub fn choice_probabilities(s: &Scenario, prices: &[Option<f64>]) -> Result<ChoiceProbabilities> {
    check_prices(s, prices)?;
    Ok(mnl(s, prices))
}

/// Per-step probabilities `p_s = lambda * Pi_s` and `p_0 = lambda * Pi_0`.
pub fn arrival_probabilities(s: &Scenario, prices: &[Option<f64>]) -> Result<ChoiceProbabilities> {
    let choice = choice_probabilities(s, prices)?;
    Ok(ChoiceProbabilities {
        per_slot: choice.per_slot.iter().map(|p| s.lambda * p).collect(),
        no_purchase: s.lambda * choice.no_purchase,
    })
}
