//! Random instance generators and independent oracles shared by the
//! integration tests. The oracles deliberately avoid the library's own
//! iteration code: fixed points come from dense linear solves.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use setmdp_core::lp::Relation;
use setmdp_core::{MdpInstance, ParamSet, Policy, StateParams, ValueVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Occasionally sparse rows, to exercise deterministic transitions.
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.0..1.0) })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.gen_range(0..n)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

pub fn random_cost(rng: &mut ChaCha8Rng, a: usize) -> Vec<f64> {
    (0..a).map(|_| rng.gen_range(0.0..10.0)).collect()
}

pub fn random_mdp(rng: &mut ChaCha8Rng, s: usize, a: usize, gamma: f64) -> MdpInstance {
    let cost = (0..s).map(|_| random_cost(rng, a)).collect();
    let trans = (0..s)
        .map(|_| (0..a).map(|_| random_row(rng, s)).collect())
        .collect();
    MdpInstance::new(gamma, cost, trans).unwrap()
}

pub fn random_block(rng: &mut ChaCha8Rng, s: usize, a: usize) -> StateParams {
    StateParams::new(
        random_cost(rng, a),
        (0..a).map(|_| random_row(rng, s)).collect(),
    )
    .unwrap()
}

/// Per-state lists with 1..=max_options random blocks each.
pub fn random_lists(rng: &mut ChaCha8Rng, s: usize, a: usize, max_options: usize) -> Vec<Vec<StateParams>> {
    (0..s)
        .map(|_| {
            let n = rng.gen_range(1..=max_options);
            (0..n).map(|_| random_block(rng, s, a)).collect()
        })
        .collect()
}

pub fn random_finite(rng: &mut ChaCha8Rng, s: usize, a: usize, n: usize, gamma: f64) -> ParamSet {
    ParamSet::finite((0..n).map(|_| random_mdp(rng, s, a, gamma)).collect()).unwrap()
}

pub fn random_values(rng: &mut ChaCha8Rng, s: usize, scale: f64) -> ValueVector {
    ValueVector::new((0..s).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

pub fn random_policy(rng: &mut ChaCha8Rng, s: usize, a: usize) -> Policy {
    Policy::new((0..s).map(|_| random_row(rng, a)).collect()).unwrap()
}

/// Solves `M x = b` by Gaussian elimination with partial pivoting.
pub fn linear_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (b[r] - tail) / m[r][r];
    }
    x
}

/// Exact `V^π = (I - γ P_π)^{-1} c_π`.
pub fn exact_policy_value(m: &MdpInstance, pi: &Policy) -> Vec<f64> {
    let (s_count, a_count, g) = (m.states(), m.actions(), m.discount());
    let mut mat = vec![vec![0.0; s_count]; s_count];
    let mut rhs = vec![0.0; s_count];
    for s in 0..s_count {
        mat[s][s] += 1.0;
        for a in 0..a_count {
            let p = pi.row(s)[a];
            rhs[s] += p * m.cost(s, a);
            for (t, q) in m.transition_row(s, a).iter().enumerate() {
                mat[s][t] -= g * p * q;
            }
        }
    }
    linear_solve(mat, rhs)
}

/// Every deterministic policy of an `s x a` problem, in lexicographic order.
pub fn deterministic_policies(s: usize, a: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..s {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..a).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

/// Optimal value by enumeration: the coordinate-wise minimum over all
/// deterministic policies, plus the first policy attaining it everywhere.
pub fn brute_force_optimum(m: &MdpInstance) -> (Vec<f64>, Vec<usize>) {
    let all: Vec<(Vec<usize>, Vec<f64>)> = deterministic_policies(m.states(), m.actions())
        .into_iter()
        .map(|choice| {
            let pi = Policy::deterministic(&choice, m.actions()).unwrap();
            let v = exact_policy_value(m, &pi);
            (choice, v)
        })
        .collect();
    let values: Vec<Vec<f64>> = all.iter().map(|(_, v)| v.clone()).collect();
    let (lo, _) = coordinate_envelope(&values);
    let best = all
        .iter()
        .find(|(_, v)| sup(v, &lo) <= 1e-9 * (1.0 + lo.iter().fold(0.0f64, |m, x| m.max(x.abs()))))
        .expect("an optimal deterministic policy exists")
        .0
        .clone();
    (lo, best)
}

/// Exact stationary fixed points of the Bellman operator for every member of
/// a finite set.
pub fn member_optima(ps: &ParamSet) -> Vec<Vec<f64>> {
    let finite = ps.to_finite_global(1 << 16).expect("small set");
    match finite.kind() {
        setmdp_core::ParamKind::Finite(ms) => ms.iter().map(|m| brute_force_optimum(m).0).collect(),
        _ => unreachable!(),
    }
}

/// Exact policy values for every member of a finite set.
pub fn member_policy_values(ps: &ParamSet, pi: &Policy) -> Vec<Vec<f64>> {
    let finite = ps.to_finite_global(1 << 16).expect("small set");
    match finite.kind() {
        setmdp_core::ParamKind::Finite(ms) => ms.iter().map(|m| exact_policy_value(m, pi)).collect(),
        _ => unreachable!(),
    }
}

pub fn coordinate_envelope(points: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = points[0].len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for p in points {
        for s in 0..n {
            lo[s] = lo[s].min(p[s]);
            hi[s] = hi[s].max(p[s]);
        }
    }
    (lo, hi)
}

pub fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Optimal value by Howard's policy iteration with exact linear solves.
pub fn policy_iteration(m: &MdpInstance) -> Vec<f64> {
    let (s_count, a_count, g) = (m.states(), m.actions(), m.discount());
    let mut choice = vec![0usize; s_count];
    loop {
        let pi = Policy::deterministic(&choice, a_count).unwrap();
        let v = exact_policy_value(m, &pi);
        let mut changed = false;
        for s in 0..s_count {
            let q = |a: usize| m.cost(s, a) + g * m.transition_row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>();
            let current = q(choice[s]);
            let (best_a, best_q) = (0..a_count)
                .map(|a| (a, q(a)))
                .fold((choice[s], current), |b, c| if c.1 < b.1 - 1e-12 * (1.0 + b.1.abs()) { c } else { b });
            if best_a != choice[s] && best_q < current {
                choice[s] = best_a;
                changed = true;
            }
        }
        if !changed {
            return v;
        }
    }
}

/// Members of a finite (or small s-rectangular) set as explicit MDPs.
pub fn members(ps: &ParamSet) -> Vec<MdpInstance> {
    match ps.to_finite_global(1 << 16).expect("small set").kind() {
        setmdp_core::ParamKind::Finite(ms) => ms.clone(),
        _ => unreachable!(),
    }
}

// Linear programs and matrix games.

pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Minimum over all basic solutions: choose `n` constraints from the rows and
/// the sign bounds, make them tight, and keep the feasible points.
pub fn vertex_oracle(obj: &[f64], rows: &[Row]) -> Option<f64> {
    let n = obj.len();
    let mut all: Vec<(Vec<f64>, f64)> = rows.iter().map(|r| (r.coeffs.clone(), r.rhs)).collect();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        all.push((e, 0.0));
    }
    let feasible = |x: &[f64]| {
        x.iter().all(|&v| v >= -1e-9)
            && rows.iter().all(|r| {
                let lhs: f64 = r.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
                match r.relation {
                    Relation::Le => lhs <= r.rhs + 1e-9,
                    Relation::Ge => lhs >= r.rhs - 1e-9,
                    Relation::Eq => (lhs - r.rhs).abs() <= 1e-9,
                }
            })
    };
    let mut best: Option<f64> = None;
    let m = all.len();
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let a: Vec<Vec<f64>> = pick.iter().map(|&i| all[i].0.clone()).collect();
        let b: Vec<f64> = pick.iter().map(|&i| all[i].1).collect();
        if let Some(x) = try_solve(&a, &b) {
            if feasible(&x) {
                let val: f64 = obj.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(val, |cur: f64| cur.min(val)));
            }
        }
        // Next combination in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < m - n + i {
                pick[i] += 1;
                for j in i + 1..n {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn try_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| {
        let mut r = r.clone();
        r.push(v);
        r
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for k in col..=n {
                    m[r][k] -= f * m[col][k];
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

pub fn random_bounded_lp(seed: u64, n: usize, m: usize) -> (Vec<f64>, Vec<Row>) {
    let mut r = rng(seed);
    let obj: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
    let mut rows: Vec<Row> = (0..m)
        .map(|_| {
            let coeffs: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
            let relation = if r.gen_bool(0.7) { Relation::Le } else { Relation::Ge };
            let rhs = match relation {
                Relation::Le => r.gen_range(0.0..6.0),
                _ => r.gen_range(-6.0..1.0),
            };
            Row { coeffs, relation, rhs }
        })
        .collect();
    // A box keeps every instance bounded.
    rows.push(Row { coeffs: vec![1.0; n], relation: Relation::Le, rhs: 10.0 });
    (obj, rows)
}

pub fn random_payoff(r: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| r.gen_range(-10.0..10.0)).collect()).collect()
}

pub fn worst_column(payoff: &[Vec<f64>], p: &[f64]) -> f64 {
    (0..payoff[0].len())
        .map(|j| payoff.iter().zip(p).map(|(row, w)| row[j] * w).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Minimum of the row player's worst case over a uniform grid of the simplex.
pub fn grid_value(payoff: &[Vec<f64>], steps: usize) -> f64 {
    let mut best = f64::INFINITY;
    match payoff.len() {
        2 => {
            for i in 0..=steps {
                let p = i as f64 / steps as f64;
                best = best.min(worst_column(payoff, &[p, 1.0 - p]));
            }
        }
        3 => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let (a, b) = (i as f64 / steps as f64, j as f64 / steps as f64);
                    best = best.min(worst_column(payoff, &[a, b, (1.0 - a - b).max(0.0)]));
                }
            }
        }
        _ => unreachable!(),
    }
    best
}

