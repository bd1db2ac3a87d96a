//! CSV emitters. Floats use Rust's shortest round-trip formatting; slots are
//! numbered from 1.

use std::io::Write;

use crate::analysis::{ConcavityReport, EpsilonWitness};
use crate::dp::{PricePolicy, ValueFunction};
use crate::error::Result;
use crate::model::StateLattice;

fn state_columns(lattice: &StateLattice) -> Vec<String> {
    (1..=lattice.num_slots())
        .map(|s| format!("x_{s}"))
        .collect()
}

fn coordinates(lattice: &StateLattice, index: usize) -> impl Iterator<Item = String> + '_ {
    (0..lattice.num_slots()).map(move |s| lattice.coordinate(index, s).to_string())
}

/// `t,x_1,...,x_n,value` for every `t` in `1..=horizon + 1` and state.
pub fn write_values_csv<W: Write>(
    out: W,
    lattice: &StateLattice,
    vf: &ValueFunction,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(state_columns(lattice));
    header.push("value".into());
    w.write_record(&header)?;
    for t in 1..=vf.horizon() + 1 {
        for (i, v) in vf.layer(t).iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(coordinates(lattice, i));
            row.push(v.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,x_1,...,x_n,slot,price`, one row per open slot.
pub fn write_policy_csv<W: Write>(
    out: W,
    lattice: &StateLattice,
    policy: &PricePolicy,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(state_columns(lattice));
    header.extend(["slot".to_string(), "price".to_string()]);
    w.write_record(&header)?;
    for t in 1..=policy.horizon() {
        for i in 0..lattice.len() {
            let Some(prices) = policy.prices(t, i) else {
                continue;
            };
            for (slot, p) in prices.iter().enumerate() {
                if let Some(d) = p {
                    let mut row = vec![t.to_string()];
                    row.extend(coordinates(lattice, i));
                    row.push((slot + 1).to_string());
                    row.push(d.to_string());
                    w.write_record(&row)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `x_1,...,x_n,value` for a single state-indexed table.
pub fn write_state_values_csv<W: Write>(
    out: W,
    lattice: &StateLattice,
    values: &[f64],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = state_columns(lattice);
    header.push("value".into());
    w.write_record(&header)?;
    for (i, v) in values.iter().enumerate() {
        let mut row: Vec<String> = coordinates(lattice, i).collect();
        row.push(v.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A state as space-separated coordinates, e.g. `1 2`.
pub fn format_state(lattice: &StateLattice, index: usize) -> String {
    coordinates(lattice, index).collect::<Vec<_>>().join(" ")
}

fn format_support(lattice: &StateLattice, witness: &EpsilonWitness) -> String {
    witness
        .combination
        .support
        .iter()
        .map(|&q| format_state(lattice, q))
        .collect::<Vec<_>>()
        .join(";")
}

/// `t,epsilon,witness_state,witness_support`, one row per `t` in
/// `1..=horizon`. Support states are separated by `;`.
pub fn write_epsilon_csv<W: Write>(
    out: W,
    lattice: &StateLattice,
    report: &ConcavityReport,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "epsilon", "witness_state", "witness_support"])?;
    for (k, (eps, witness)) in report.epsilon.iter().zip(&report.witness).enumerate() {
        let (state, support) = match witness {
            Some(wit) => (
                format_state(lattice, wit.state),
                format_support(lattice, wit),
            ),
            None => (String::new(), String::new()),
        };
        w.write_record([(k + 1).to_string(), eps.to_string(), state, support])?;
    }
    w.flush()?;
    Ok(())
}

/// `replication,profit`.
pub fn write_profits_csv<W: Write>(out: W, profits: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replication", "profit"])?;
    for (i, p) in profits.iter().enumerate() {
        w.write_record([i.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
