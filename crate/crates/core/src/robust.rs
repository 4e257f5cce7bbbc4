//! Optimistic and robust solutions of s-rectangular uncertain MDPs and the
//! ordering between the three fixed-point sets they bracket.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lp::{lp_solve, LpProblem, LpOutcome, Relation};
use crate::mdp::{Policy, ValueOperator};
use crate::setops::{algorithm1_envelope, iterate_bound, Direction, EnvelopeReport};
use crate::uncertainty::{ParamKind, ParamSet};
use crate::vector::{check_len, ValueVector};

/// Support tolerance for mixed strategies returned by the game solver.
pub const SUPPORT_TOL: f64 = 1e-7;

/// Solution of a zero-sum matrix game where the row player minimizes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GameSolution {
    pub value: f64,
    pub row_strategy: Vec<f64>,
}

fn check_payoff(payoff: &[Vec<f64>]) -> Result<(usize, usize)> {
    let rows = payoff.len();
    if rows == 0 {
        return Err(Error::Empty("game rows"));
    }
    let cols = payoff[0].len();
    if cols == 0 {
        return Err(Error::Empty("game columns"));
    }
    for r in payoff {
        check_len("game columns", cols, r.len())?;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: "payoff".into(),
            });
        }
    }
    Ok((rows, cols))
}

/// Shift making every payoff entry at least one, so the game value is positive
/// and the value variable can live in the non-negative orthant.
fn shift_of(payoff: &[Vec<f64>]) -> f64 {
    let lo = payoff
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    1.0 - lo
}

fn clean_strategy(x: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    p
}

fn solve_optimal(p: &LpProblem) -> Result<Vec<f64>> {
    match lp_solve(p)? {
        LpOutcome::Optimal { x, .. } => Ok(x),
        other => Err(Error::InvalidConfig(alloc::format!(
            "matrix game LP returned {other:?}"
        ))),
    }
}

/// `min_{π ∈ Δ_A} max_j (G^T π)_j` for a payoff `G` with one row per action
/// and one column per parameter.
pub fn matrix_game_value(payoff: &[Vec<f64>]) -> Result<GameSolution> {
    let (rows, cols) = check_payoff(payoff)?;
    if cols == 1 {
        let col = payoff.iter().map(|r| r[0]);
        let best = crate::mdp::argmin_first(col);
        let mut row_strategy = vec![0.0; rows];
        row_strategy[best] = 1.0;
        return Ok(GameSolution {
            value: payoff[best][0],
            row_strategy,
        });
    }
    let shift = shift_of(payoff);
    // Variables: π_0..π_{A-1}, t.  min t  s.t.  Σ_a π_a G'[a][j] - t <= 0.
    let mut objective = vec![0.0; rows + 1];
    objective[rows] = 1.0;
    let mut lp = LpProblem::new(objective);
    for j in 0..cols {
        let mut coeffs: Vec<f64> = payoff.iter().map(|r| r[j] + shift).collect();
        coeffs.push(-1.0);
        lp = lp.with(coeffs, Relation::Le, 0.0);
    }
    let mut simplex = vec![1.0; rows];
    simplex.push(0.0);
    lp = lp.with(simplex, Relation::Eq, 1.0);
    let x = solve_optimal(&lp)?;
    let row_strategy = clean_strategy(&x[..rows]);
    // Report the value attained by the cleaned strategy, not the LP slack.
    let value = (0..cols)
        .map(|j| (0..rows).map(|a| row_strategy[a] * payoff[a][j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GameSolution {
        value,
        row_strategy,
    })
}

/// Optimal strategy of the maximizing column player: `(value, q)`.
pub fn matrix_game_column_strategy(payoff: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let (rows, cols) = check_payoff(payoff)?;
    let shift = shift_of(payoff);
    // Variables: q_0..q_{N-1}, u.  min -u  s.t.  u - Σ_j G'[a][j] q_j <= 0.
    let mut objective = vec![0.0; cols + 1];
    objective[cols] = -1.0;
    let mut lp = LpProblem::new(objective);
    for row in payoff.iter().take(rows) {
        let mut coeffs: Vec<f64> = row.iter().map(|v| -(v + shift)).collect();
        coeffs.push(1.0);
        lp = lp.with(coeffs, Relation::Le, 0.0);
    }
    let mut simplex = vec![1.0; cols];
    simplex.push(0.0);
    lp = lp.with(simplex, Relation::Eq, 1.0);
    let x = solve_optimal(&lp)?;
    let q = clean_strategy(&x[..cols]);
    let value = payoff
        .iter()
        .map(|r| r.iter().zip(&q).map(|(g, p)| g * p).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok((value, q))
}

/// Payoff matrix of the state-`s` game at `V`: rows are actions, columns are
/// the distinct candidate blocks.
pub fn state_payoff(ps: &ParamSet, s: usize, v: &[f64]) -> Vec<Vec<f64>> {
    let gamma = ps.discount();
    let options = ps.options(s);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(options.len());
    for b in options {
        let col: Vec<f64> = (0..ps.actions()).map(|a| b.q_value(a, v, gamma)).collect();
        if !columns.contains(&col) {
            columns.push(col);
        }
    }
    (0..ps.actions())
        .map(|a| columns.iter().map(|c| c[a]).collect())
        .collect()
}

pub(crate) fn state_game(ps: &ParamSet, s: usize, v: &[f64]) -> Result<GameSolution> {
    matrix_game_value(&state_payoff(ps, s, v))
}

/// One application of the robust game operator `V ↦ (val G_s(V))_s`.
pub fn robust_game_apply(v: &ValueVector, ps: &ParamSet) -> Result<ValueVector> {
    require_s_rect(ps)?;
    check_len("states", ps.states(), v.len())?;
    let out = (0..ps.states())
        .map(|s| state_game(ps, s, v).map(|g| g.value))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ValueVector::from_vec_unchecked(out))
}

fn require_s_rect(ps: &ParamSet) -> Result<()> {
    if let ParamKind::Finite(_) = ps.kind() {
        if !crate::uncertainty::is_s_rectangular(ps) {
            return Err(Error::Unsupported(
                "robust policies need an s-rectangular parameter set".into(),
            ));
        }
    }
    Ok(())
}

/// Working representation for the game iteration: finite global sets are
/// replaced by their per-state projection.
fn as_s_rect(ps: &ParamSet) -> Result<ParamSet> {
    require_s_rect(ps)?;
    match ps.kind() {
        ParamKind::Finite(_) => ParamSet::s_rect_finite(ps.discount(), ps.s_rect_lists()?),
        _ => Ok(ps.clone()),
    }
}

fn policy_tolerance(eps: f64) -> f64 {
    (eps * 1e-3).max(1e-11)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct OptimisticSolution {
    pub value: ValueVector,
    pub policy: Policy,
    /// Minimizing block index per state.
    pub parameter: Vec<usize>,
    pub iterations: usize,
}

/// Optimistic value `W^o` (fixed point of the lower Bellman bound) and a
/// greedy policy over jointly minimizing (parameter, action) pairs.
///
/// The policy is extracted from a value computed well below `eps`, so that
/// near-ties do not select an action whose evaluation drifts away from `W^o`.
pub fn solve_optimistic(ps: &ParamSet, eps: f64) -> Result<OptimisticSolution> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidTolerance(eps));
    }
    let zero = ValueVector::zeros(ps.states());
    let tol = policy_tolerance(eps);
    let (value, iterations, _) =
        iterate_bound(ps, &ValueOperator::Bellman, Direction::Lower, &zero, tol)?;
    let gamma = ps.discount();
    let mut choices = Vec::with_capacity(ps.states());
    let mut parameter = Vec::with_capacity(ps.states());
    for s in 0..ps.states() {
        let mut best = (f64::INFINITY, 0, 0);
        for (j, b) in ps.options(s).into_iter().enumerate() {
            for a in 0..ps.actions() {
                let q = b.q_value(a, &value, gamma);
                if q < best.0 {
                    best = (q, j, a);
                }
            }
        }
        parameter.push(best.1);
        choices.push(best.2);
    }
    Ok(OptimisticSolution {
        value,
        policy: Policy::deterministic(&choices, ps.actions())?,
        parameter,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RobustPolicySolution {
    pub value: ValueVector,
    /// Per-state optimal (possibly mixed) strategies at `value`.
    pub policy: Policy,
    pub game_values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Robust value `W^r` by value iteration on the per-state game operator.
pub fn solve_robust(ps: &ParamSet, eps: f64) -> Result<RobustPolicySolution> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidTolerance(eps));
    }
    let work = as_s_rect(ps)?;
    let gamma = work.discount();
    let factor = gamma / (1.0 - gamma);
    let tol = policy_tolerance(eps);
    let mut v = ValueVector::zeros(work.states());
    let mut iterations = 0;
    let residual = loop {
        if iterations == crate::setops::MAX_ENVELOPE_ITERATIONS {
            return Err(Error::NoConvergence { iterations });
        }
        let next = robust_game_apply(&v, &work)?;
        let e = next.sup_distance(&v);
        v = next;
        iterations += 1;
        if factor * e < tol {
            break e;
        }
    };
    let mut probs = Vec::with_capacity(work.states() * work.actions());
    let mut game_values = Vec::with_capacity(work.states());
    for s in 0..work.states() {
        let g = state_game(&work, s, &v)?;
        game_values.push(g.value);
        probs.extend_from_slice(&g.row_strategy);
    }
    Ok(RobustPolicySolution {
        value: v,
        policy: Policy::from_flat_unchecked(work.states(), work.actions(), probs),
        game_values,
        iterations,
        residual,
    })
}

/// Both extremal solutions of an s-rectangular set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RobustSolution {
    pub optimistic: OptimisticSolution,
    pub robust: RobustPolicySolution,
}

impl RobustSolution {
    pub fn solve(ps: &ParamSet, eps: f64) -> Result<Self> {
        Ok(RobustSolution {
            optimistic: solve_optimistic(ps, eps)?,
            robust: solve_robust(ps, eps)?,
        })
    }
}

/// Actions in the support of `strategy` whose expected payoff against the
/// column player's optimal reply misses the game value by more than
/// `SUPPORT_TOL` (scaled by the value's magnitude). Empty for a correct
/// solution.
pub fn support_violations(payoff: &[Vec<f64>], strategy: &[f64]) -> Result<Vec<usize>> {
    let (value, q) = matrix_game_column_strategy(payoff)?;
    let tol = SUPPORT_TOL * value.abs().max(1.0);
    Ok(payoff
        .iter()
        .enumerate()
        .filter(|(a, row)| {
            strategy[*a] > SUPPORT_TOL
                && row.iter().zip(&q).map(|(g, p)| g * p).sum::<f64>() > value + tol
        })
        .map(|(a, _)| a)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RelationVerdict {
    pub relation: &'static str,
    pub holds: bool,
    /// Largest coordinate-wise violation; for equalities the sup-norm gap.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct OrderingReport {
    pub eps: f64,
    pub tolerance: f64,
    pub lower_bellman: ValueVector,
    pub lower_optimistic: ValueVector,
    pub lower_robust: ValueVector,
    pub upper_bellman: ValueVector,
    pub upper_optimistic: ValueVector,
    pub upper_robust: ValueVector,
    pub relations: Vec<RelationVerdict>,
    pub max_violation: f64,
}

impl OrderingReport {
    pub fn all_hold(&self) -> bool {
        self.relations.iter().all(|r| r.holds)
    }
}

fn equality_gap(a: &[f64], b: &[f64]) -> f64 {
    crate::vector::sup_distance(a, b)
}

fn order_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max(x - y))
}

/// Computes the bound envelopes of the Bellman operator and of the policy
/// evaluation operators for the optimistic and robust policies, then checks
///
/// ```text
/// lower_B = lower_o <= lower_r      upper_B = upper_r <= upper_o
/// lower_B <= lower_r                upper_B <= upper_o
/// ```
///
/// with tolerance `2 eps`, since every envelope is `eps`-accurate.
pub fn ordering_check(ps: &ParamSet, eps: f64) -> Result<OrderingReport> {
    let solution = RobustSolution::solve(ps, eps)?;
    let zero = ValueVector::zeros(ps.states());
    let run = |op: ValueOperator| -> Result<EnvelopeReport> { algorithm1_envelope(ps, &op, &zero, eps) };
    let b = run(ValueOperator::Bellman)?;
    let o = run(ValueOperator::Evaluate(solution.optimistic.policy.clone()))?;
    let r = run(ValueOperator::Evaluate(solution.robust.policy.clone()))?;
    let tolerance = 2.0 * eps;
    let checks: [(&'static str, f64); 6] = [
        ("lower_bellman == lower_optimistic", equality_gap(&b.lower, &o.lower)),
        ("lower_optimistic <= lower_robust", order_gap(&o.lower, &r.lower)),
        ("lower_bellman <= lower_robust", order_gap(&b.lower, &r.lower)),
        ("upper_bellman == upper_robust", equality_gap(&b.upper, &r.upper)),
        ("upper_robust <= upper_optimistic", order_gap(&r.upper, &o.upper)),
        ("upper_bellman <= upper_optimistic", order_gap(&b.upper, &o.upper)),
    ];
    let relations: Vec<RelationVerdict> = checks
        .iter()
        .map(|&(relation, violation)| RelationVerdict {
            relation,
            holds: violation <= tolerance,
            violation,
        })
        .collect();
    let max_violation = relations.iter().fold(0.0f64, |m, r| m.max(r.violation));
    Ok(OrderingReport {
        eps,
        tolerance,
        lower_bellman: b.lower,
        lower_optimistic: o.lower,
        lower_robust: r.lower,
        upper_bellman: b.upper,
        upper_optimistic: o.upper,
        upper_robust: r.upper,
        relations,
        max_violation,
    })
}
