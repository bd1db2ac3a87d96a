use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slotdp::sim::draw_step;
use slotdp::{
    bellman_apply, choice_probabilities, enumerate_enclosings, epsilon_t, fixed_point, simulate,
    solve_horizon, solve_stage, terminal_values, CostSpec, PricePolicy, Scenario, State,
    StateLattice,
};

fn det(m: &[Vec<i64>]) -> i64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    (0..n)
        .map(|c| {
            let minor: Vec<Vec<i64>> = m[1..]
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|&(k, _)| k != c)
                        .map(|(_, &v)| v)
                        .collect()
                })
                .collect();
            let sign = if c % 2 == 0 { 1 } else { -1 };
            sign * m[0][c] * det(&minor)
        })
        .sum()
}

/// Full simplices of lattice points other than `x` that contain `x`, with
/// barycentric weights from Cramer's rule.
fn containing_simplices(l: &StateLattice) -> Vec<(usize, Vec<usize>, Vec<f64>)> {
    let n = l.num_slots();
    let point = |i: usize| -> Vec<i64> { (0..n).map(|k| l.coordinate(i, k) as i64).collect() };
    let mut out = Vec::new();
    for x in 0..l.len() {
        let target = point(x);
        let others: Vec<usize> = (0..l.len()).filter(|&q| q != x).collect();
        for simplex in others.into_iter().combinations(n + 1) {
            // rows: coordinates, then the all-ones row
            let matrix = |replace: Option<usize>| -> Vec<Vec<i64>> {
                let mut rows: Vec<Vec<i64>> = (0..=n).map(|_| Vec::with_capacity(n + 1)).collect();
                for (j, &q) in simplex.iter().enumerate() {
                    let col = if replace == Some(j) {
                        target.clone()
                    } else {
                        point(q)
                    };
                    for k in 0..n {
                        rows[k].push(col[k]);
                    }
                    rows[n].push(1);
                }
                rows
            };
            let d = det(&matrix(None));
            if d == 0 {
                continue;
            }
            let weights: Vec<f64> = (0..=n)
                .map(|j| det(&matrix(Some(j))) as f64 / d as f64)
                .collect();
            if weights.iter().all(|&w| w >= 0.0) {
                out.push((x, simplex, weights));
            }
        }
    }
    out
}

fn epsilon_by_simplices(simplices: &[(usize, Vec<usize>, Vec<f64>)], v: &[f64]) -> f64 {
    simplices
        .iter()
        .map(|(x, support, weights)| {
            v[*x]
                - support
                    .iter()
                    .zip(weights)
                    .map(|(&q, w)| w * v[q])
                    .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

fn small(caps: Vec<usize>) -> Scenario {
    let n = caps.len();
    Scenario {
        horizon: 12,
        slot_betas: (0..n).map(|k| 0.5 - 0.4 * k as f64).collect(),
        cost: CostSpec::Affine {
            intercept: 1.0,
            coefficients: vec![1.5; n],
        },
        capacities: caps,
        ..Scenario::example()
    }
}

#[test]
fn epsilon_matches_simplex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for caps in [
        vec![4],
        vec![2, 3],
        vec![3, 3],
        vec![4, 5],
        vec![1, 2, 2],
        vec![2, 2, 2],
    ] {
        let s = small(caps);
        let l = s.lattice();
        assert!(l.len() <= 30);
        let enc = enumerate_enclosings(&s).unwrap();
        let simplices = containing_simplices(&l);
        for _ in 0..5 {
            let v: Vec<f64> = (0..l.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (eps, _) = epsilon_t(&v, &enc);
            let oracle = epsilon_by_simplices(&simplices, &v);
            assert!(
                (eps - oracle).abs() <= 1e-10,
                "{:?}: {eps} vs {oracle}",
                l.capacities()
            );
        }
        // solved layers as well
        let (vf, _) = solve_horizon(&s).unwrap();
        for t in [1, 6, 12] {
            let (eps, _) = epsilon_t(vf.layer(t), &enc);
            assert!((eps - epsilon_by_simplices(&simplices, vf.layer(t))).abs() <= 1e-10);
        }
    }
}

#[test]
fn corrupted_layer_is_flagged_and_witness_reproduces() {
    let s = Scenario::example();
    let l = s.lattice();
    let enc = enumerate_enclosings(&s).unwrap();
    let (vf, _) = solve_horizon(&s).unwrap();
    let mut layer = vf.layer(100).to_vec();
    layer[l.index(&[2, 2])] -= 10.0;
    let (eps, witness) = epsilon_t(&layer, &enc);
    assert!(eps < -1.0);
    let witness = witness.unwrap();
    assert_eq!(witness.state, l.index(&[2, 2]));
    assert!((witness.margin(&layer) - eps).abs() <= 1e-10);

    let mut bumped = vf.layer(100).to_vec();
    bumped[l.index(&[1, 3])] += 10.0;
    let (eps, witness) = epsilon_t(&bumped, &enc);
    assert!(eps < 0.0);
    assert!((witness.unwrap().margin(&bumped) - eps).abs() <= 1e-10);
}

#[test]
fn fixed_point_plus_constant_is_fixed() {
    let s = Scenario::example();
    let v: Vec<f64> = fixed_point(&s).iter().map(|x| x + 3.25).collect();
    let tv = bellman_apply(&s, &v).unwrap();
    let gap = tv
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap <= 1e-10);
}

#[test]
fn more_time_is_worth_more_and_full_state_is_frozen() {
    let s = Scenario::example();
    let l = s.lattice();
    let (vf, _) = solve_horizon(&s).unwrap();
    let full = l.full();
    for t in 1..=s.horizon {
        for i in 0..l.len() {
            assert!(vf.get(t, i) >= vf.get(t + 1, i));
        }
        assert_eq!(vf.get(t, full), -14.0);
    }
}

#[test]
fn distance_to_fixed_point_shrinks_backwards() {
    let s = Scenario::example();
    let (vf, _) = solve_horizon(&s).unwrap();
    let vstar = fixed_point(&s);
    let dist = |t: usize| {
        vf.layer(t)
            .iter()
            .zip(&vstar)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    for t in 1..=s.horizon {
        assert!(dist(t) <= dist(t + 1) + 1e-12, "t={t}");
    }
    assert!(dist(1) < 0.01);
}

#[test]
fn step_sampling_frequencies() {
    let s = Scenario::example();
    let prices = [Some(0.7), Some(1.6)];
    let choice = choice_probabilities(&s, &prices).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1_000_000;
    let mut counts = [0u64; 3];
    for _ in 0..n {
        match draw_step(&mut rng, s.lambda, &choice) {
            Some(k) => counts[k] += 1,
            None => counts[2] += 1,
        }
    }
    let expected = [
        s.lambda * choice.per_slot[0],
        s.lambda * choice.per_slot[1],
        1.0 - s.lambda * (choice.per_slot[0] + choice.per_slot[1]),
    ];
    for (c, p) in counts.iter().zip(expected) {
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (*c as f64 - n as f64 * p).abs() <= 4.0 * sd,
            "{c} vs {}",
            n as f64 * p
        );
    }
}

#[test]
fn optimal_policy_beats_static_max_price() {
    let s = Scenario::example();
    let (vf, policy) = solve_horizon(&s).unwrap();
    let optimal = simulate(&s, &policy, 20_000, 9).unwrap();
    let fixed = simulate(
        &s,
        &PricePolicy::static_price(&s, s.price_max).unwrap(),
        20_000,
        9,
    )
    .unwrap();
    let se = (optimal.std_error.powi(2) + fixed.std_error.powi(2)).sqrt();
    assert!(optimal.mean_profit >= fixed.mean_profit - 3.0 * se);
    assert!(vf.get(1, 0) >= fixed.mean_profit - 3.0 * fixed.std_error);

    let cheap = simulate(&s, &PricePolicy::static_price(&s, 0.0).unwrap(), 20_000, 9).unwrap();
    assert!(vf.get(1, 0) > cheap.mean_profit + 3.0 * cheap.std_error);
}

/// Stage maximum by grid search: step 1e-2 over the box, then 1e-4 and
/// 1e-6 around the incumbent.
fn grid_max(s: &Scenario, x: &State, v: &[f64]) -> f64 {
    let l = s.lattice();
    let xi = l.index(&x.0);
    let open = l.feasible_slots_at(xi);
    let eval = |d: &[f64]| {
        let mut prices = vec![None; l.num_slots()];
        for (j, &k) in open.iter().enumerate() {
            prices[k] = Some(d[j]);
        }
        let c = choice_probabilities(s, &prices).unwrap();
        v[xi]
            + open
                .iter()
                .zip(d)
                .map(|(&k, p)| {
                    s.lambda
                        * c.per_slot[k]
                        * (p + s.net_revenue + v[l.successor(xi, k).unwrap()] - v[xi])
                })
                .sum::<f64>()
    };
    let axis = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| (lo + i as f64 * step).min(hi)).collect()
    };
    let search = |axes: &[Vec<f64>]| -> (f64, Vec<f64>) {
        axes.iter()
            .multi_cartesian_product()
            .map(|pt| {
                let d: Vec<f64> = pt.into_iter().copied().collect();
                (eval(&d), d)
            })
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
    };
    let mut at: Vec<f64> = open
        .iter()
        .map(|_| (s.price_min + s.price_max) / 2.0)
        .collect();
    let mut best = f64::NEG_INFINITY;
    for (half, step) in [
        (s.price_max - s.price_min, 1e-2),
        (2e-2, 1e-4),
        (2e-4, 1e-6),
    ] {
        let axes: Vec<Vec<f64>> = at
            .iter()
            .map(|&c| {
                axis(
                    (c - half).max(s.price_min),
                    (c + half).min(s.price_max),
                    step,
                )
            })
            .collect();
        (best, at) = search(&axes);
    }
    best
}

#[test]
fn interior_and_mixed_stage_optima_match_grid() {
    // wide enough that some unconstrained optima are reachable, narrow
    // enough that others clamp on one slot
    let s = Scenario {
        price_max: 3.0,
        horizon: 40,
        ..Scenario::example()
    };
    let (vf, _) = solve_horizon(&s).unwrap();
    let mut interior = 0;
    for (t, x) in [
        (40, [0, 0]),
        (39, [1, 2]),
        (30, [3, 0]),
        (20, [2, 2]),
        (1, [0, 0]),
        (35, [4, 1]),
    ] {
        let state = State(x.to_vec());
        let sol = solve_stage(&s, &state, vf.layer(t + 1)).unwrap();
        interior += sol.interior as usize;
        let grid = grid_max(&s, &state, vf.layer(t + 1));
        assert!(
            (sol.value - grid).abs() <= 1e-4,
            "t={t} x={state}: {} vs {grid}",
            sol.value
        );
        assert!(sol.value >= grid - 1e-12);
    }
    assert!(interior > 0 && interior < 6);

    // lower bound binds on one slot only
    let tight = Scenario {
        price_min: 1.2,
        price_max: 6.0,
        horizon: 5,
        ..Scenario::example()
    };
    let v = terminal_values(&tight);
    let x = State(vec![0, 0]);
    let sol = solve_stage(&tight, &x, &v).unwrap();
    assert!((sol.value - grid_max(&tight, &x, &v)).abs() <= 1e-4);
}

#[test]
fn pinned_stage_prices_near_the_end() {
    let s = Scenario::example();
    let (vf, policy) = solve_horizon(&s).unwrap();
    let origin = State(vec![0, 0]);
    let last = solve_stage(&s, &origin, vf.layer(201)).unwrap();
    assert_eq!(last.prices, vec![Some(2.0), Some(2.0)]);
    assert_eq!(last.value, -1.5);
    assert_eq!(vf.get(200, 0), -1.5);
    assert_eq!(policy.prices(1, 0).unwrap(), &[Some(2.0), Some(2.0)]);
    // second-to-last step agrees with the grid
    let x = State(vec![1, 3]);
    let sol = solve_stage(&s, &x, vf.layer(200)).unwrap();
    assert!((sol.value - grid_max(&s, &x, vf.layer(200))).abs() <= 1e-4);
}
