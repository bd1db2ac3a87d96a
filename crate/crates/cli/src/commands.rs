use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};
use slotdp::report::{
    write_epsilon_csv, write_policy_csv, write_profits_csv, write_state_values_csv,
    write_values_csv,
};
use slotdp::{
    bellman_residual, check_assumption1, concavity_report, enumerate_enclosings, load_scenario,
    opportunity_costs, phi, simulate_with, solve_horizon, solve_stage, Scenario, SimulationOptions,
    State, EXAMPLE_SCENARIO,
};

/// What a command read and wrote, for the manifest.
#[derive(Debug, Default)]
pub struct Run {
    pub scenario: Option<ScenarioSource>,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug)]
pub struct ScenarioSource {
    pub path: PathBuf,
    pub sha256: String,
}

/// 2 for anything that failed on the filesystem, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|cause| {
        cause.is::<std::io::Error>()
            || matches!(
                cause.downcast_ref::<slotdp::Error>(),
                Some(slotdp::Error::Io(_) | slotdp::Error::Csv(_))
            )
    });
    if io {
        2
    } else {
        1
    }
}

/// Order counts given on the command line as `1,0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Orders(pub Vec<usize>);

pub fn parse_state(text: &str) -> std::result::Result<Orders, String> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad order count `{part}`: {e}"))
        })
        .collect::<std::result::Result<_, _>>()
        .map(Orders)
}

fn read_scenario(path: &Path) -> Result<(Scenario, ScenarioSource)> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot read scenario file {}", path.display()))?;
    let text =
        std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let scenario =
        load_scenario(text).with_context(|| format!("invalid scenario {}", path.display()))?;
    let source = ScenarioSource {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    Ok((scenario, source))
}

fn write_file<F>(path: &Path, emit: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> slotdp::Result<()>,
{
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    emit(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
    w.flush()
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn default_policy_path(values: &Path) -> PathBuf {
    let stem = values
        .file_stem()
        .map(|s| s.to_string_lossy())
        .unwrap_or_default();
    values.with_file_name(format!("{stem}_policy.csv"))
}

fn lattice_index(s: &Scenario, orders: &[usize]) -> Result<usize> {
    let lattice = s.lattice();
    if orders.len() != lattice.num_slots() {
        bail!(
            "state has {} entries, scenario has {} slots",
            orders.len(),
            lattice.num_slots()
        );
    }
    if !lattice.contains(orders) {
        bail!("state {} exceeds the capacities", State(orders.to_vec()));
    }
    Ok(lattice.index(orders))
}

pub fn example(out: &mut impl Write, path: Option<PathBuf>) -> Result<Run> {
    match path {
        Some(path) => {
            std::fs::write(&path, EXAMPLE_SCENARIO)
                .with_context(|| format!("cannot write {}", path.display()))?;
            Ok(Run {
                outputs: vec![path],
                ..Run::default()
            })
        }
        None => {
            out.write_all(EXAMPLE_SCENARIO.as_bytes())?;
            Ok(Run::default())
        }
    }
}

pub fn solve(
    out: &mut impl Write,
    scenario: &Path,
    values: &Path,
    policy: Option<PathBuf>,
) -> Result<Run> {
    let (s, source) = read_scenario(scenario)?;
    let (vf, pol) = solve_horizon(&s)?;
    let lattice = s.lattice();
    let policy = policy.unwrap_or_else(|| default_policy_path(values));
    write_file(values, |w| write_values_csv(w, &lattice, &vf))?;
    write_file(&policy, |w| write_policy_csv(w, &lattice, &pol))?;
    writeln!(out, "states {}", lattice.len())?;
    writeln!(out, "horizon {}", s.horizon)?;
    writeln!(out, "value_at_origin {}", vf.get(1, 0))?;
    writeln!(out, "value_fingerprint {}", vf.fingerprint())?;
    Ok(Run {
        scenario: Some(source),
        outputs: vec![values.to_path_buf(), policy],
    })
}

pub fn fixed_point(out: &mut impl Write, scenario: &Path, path: &Path) -> Result<Run> {
    let (s, source) = read_scenario(scenario)?;
    let v = slotdp::fixed_point(&s);
    let residual = bellman_residual(&s, &v)?;
    let violations = check_assumption1(&s);
    if !violations.is_empty() {
        writeln!(
            out,
            "warning: marginal cost exceeds price_max + net_revenue at {} (state, slot) pairs",
            violations.len()
        )?;
    }
    write_file(path, |w| write_state_values_csv(w, &s.lattice(), &v))?;
    writeln!(out, "residual {residual}")?;
    Ok(Run {
        scenario: Some(source),
        outputs: vec![path.to_path_buf()],
    })
}

pub fn concavity(
    out: &mut impl Write,
    scenario: &Path,
    path: &Path,
    corruption: Option<(usize, Vec<usize>, f64)>,
) -> Result<Run> {
    let (s, source) = read_scenario(scenario)?;
    let (mut vf, _) = solve_horizon(&s)?;
    if let Some((t, orders, delta)) = corruption {
        if !(1..=s.horizon + 1).contains(&t) {
            bail!("t must lie in 1..={}", s.horizon + 1);
        }
        let i = lattice_index(&s, &orders)?;
        vf.layer_mut(t)[i] += delta;
    }
    let enclosings = enumerate_enclosings(&s)?;
    let report = concavity_report(&vf, &enclosings);
    write_file(path, |w| write_epsilon_csv(w, &s.lattice(), &report))?;
    let min = report.epsilon.iter().copied().fold(f64::INFINITY, f64::min);
    writeln!(out, "min_epsilon {min}")?;
    writeln!(out, "terminal_epsilon {}", report.terminal_epsilon)?;
    writeln!(out, "all_nonnegative {}", report.all_nonnegative)?;
    Ok(Run {
        scenario: Some(source),
        outputs: vec![path.to_path_buf()],
    })
}

pub fn lambda_bound(out: &mut impl Write, scenario: &Path) -> Result<Run> {
    let (s, source) = read_scenario(scenario)?;
    let bound = slotdp::lambda_bound(&s);
    writeln!(out, "lambda_bound {bound}")?;
    writeln!(out, "lambda {}", s.lambda)?;
    writeln!(
        out,
        "{}",
        if s.lambda < bound {
            "certified"
        } else {
            "not certified"
        }
    )?;
    Ok(Run {
        scenario: Some(source),
        ..Run::default()
    })
}

pub fn prices(out: &mut impl Write, scenario: &Path, t: usize, orders: &[usize]) -> Result<Run> {
    let (s, source) = read_scenario(scenario)?;
    if !(1..=s.horizon).contains(&t) {
        bail!("t must lie in 1..={}", s.horizon);
    }
    lattice_index(&s, orders)?;
    let x = State(orders.to_vec());
    let (vf, _) = solve_horizon(&s)?;
    let next = vf.layer(t + 1);
    let gamma = opportunity_costs(&s, next, &x);
    let stage = solve_stage(&s, &x, next)?;
    writeln!(out, "t {t}")?;
    writeln!(out, "state {x}")?;
    if gamma.is_empty() {
        writeln!(out, "all slots closed")?;
    } else {
        for (slot, (g, p)) in gamma.as_slice().iter().zip(&stage.prices).enumerate() {
            match (g, p) {
                (Some(g), Some(p)) => writeln!(out, "slot {} gamma {g} price {p}", slot + 1)?,
                _ => writeln!(out, "slot {} closed", slot + 1)?,
            }
        }
        writeln!(out, "phi {}", phi(&s, &gamma))?;
        writeln!(out, "interior {}", stage.interior)?;
    }
    writeln!(out, "value {}", stage.value)?;
    Ok(Run {
        scenario: Some(source),
        ..Run::default()
    })
}

pub fn simulate(
    out: &mut impl Write,
    scenario: &Path,
    reps: usize,
    seed: u64,
    profits: Option<PathBuf>,
) -> Result<Run> {
    let (s, source) = read_scenario(scenario)?;
    let (vf, policy) = solve_horizon(&s)?;
    let opts = SimulationOptions {
        record_profits: profits.is_some(),
        ..SimulationOptions::new(reps, seed)
    };
    let result = simulate_with(&s, &policy, &opts)?;
    let v1 = vf.get(1, 0);
    let gap = (result.mean_profit - v1).abs();
    let z = if result.std_error > 0.0 {
        gap / result.std_error
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    writeln!(
        out,
        "replications={} seed={} mean={} std_error={} v1={} z={} generator={}",
        result.replications,
        result.seed,
        result.mean_profit,
        result.std_error,
        v1,
        z,
        result.generator
    )?;
    let mut outputs = Vec::new();
    if let (Some(path), Some(values)) = (profits, &result.profits) {
        write_file(&path, |w| write_profits_csv(w, values))?;
        outputs.push(path);
    }
    Ok(Run {
        scenario: Some(source),
        outputs,
    })
}
