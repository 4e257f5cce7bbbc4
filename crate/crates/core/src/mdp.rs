//! Single-parameter MDP machinery.
//!
//! An [`MdpInstance`] fixes one cost matrix and one transition kernel. The two
//! value operators of interest, policy evaluation and the Bellman operator,
//! are exposed both as free functions and through [`ValueOperator`], the
//! handle the set-valued code passes around.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vector::{check_len, sup_distance, ValueVector};
use crate::SIMPLEX_TOL;

/// Rows whose sum is this close to one are kept bit-for-bit; rows further
/// away (but within [`SIMPLEX_TOL`]) are rescaled.
const RENORMALIZE_FLOOR: f64 = 1e-12;

/// Upper bound on sweeps in [`value_iteration`]; a γ-contraction never needs it.
pub const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MdpInstance {
    states: usize,
    actions: usize,
    discount: f64,
    /// Row-major `S x A`.
    cost: Vec<f64>,
    /// Row-major `S x A x S`.
    trans: Vec<f64>,
}

/// Borrowed view of the parameters that state `s` depends on: its cost row
/// `c_s` (length `A`) and its transition block `P_s` (`A x S`).
#[derive(Debug, Clone, Copy)]
pub struct StateBlock<'a> {
    pub cost: &'a [f64],
    pub trans: &'a [f64],
    pub states: usize,
}

impl<'a> StateBlock<'a> {
    pub fn actions(&self) -> usize {
        self.cost.len()
    }

    pub fn row(&self, action: usize) -> &'a [f64] {
        &self.trans[action * self.states..(action + 1) * self.states]
    }

    /// `c_sa + γ p_sa^T V`.
    pub fn q_value(&self, action: usize, values: &[f64], discount: f64) -> f64 {
        self.cost[action] + discount * dot(self.row(action), values)
    }

    /// Sup-norm distance between cost rows plus the induced sup-norm of the
    /// transition-block difference (largest row-wise L1 distance).
    pub fn distance(&self, other: &StateBlock<'_>) -> f64 {
        let dc = sup_distance(self.cost, other.cost);
        let dp = (0..self.actions())
            .map(|a| {
                self.row(a)
                    .iter()
                    .zip(other.row(a))
                    .map(|(x, y)| (x - y).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        dc + dp
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Validates one transition row in place. Rows within [`SIMPLEX_TOL`] of the
/// simplex are rescaled onto it; anything further off is an error naming `field`.
pub(crate) fn validate_simplex_row(row: &mut [f64], field: impl Fn() -> alloc::string::String) -> Result<()> {
    let mut sum = 0.0;
    for p in row.iter() {
        if !p.is_finite() {
            return Err(Error::NonFinite { field: field() });
        }
        if *p < -SIMPLEX_TOL {
            return Err(Error::NegativeEntry {
                field: field(),
                value: *p,
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::NotOnSimplex {
            field: field(),
            sum,
        });
    }
    if row.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > RENORMALIZE_FLOOR {
        let clipped: f64 = row.iter().map(|p| p.max(0.0)).sum();
        for p in row.iter_mut() {
            *p = p.max(0.0) / clipped;
        }
    }
    Ok(())
}

pub(crate) fn validate_discount(discount: f64) -> Result<()> {
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::InvalidDiscount(discount));
    }
    Ok(())
}

impl MdpInstance {
    /// Builds an instance from nested rows: `cost[s][a]` and `trans[s][a][s']`.
    pub fn new(discount: f64, cost: Vec<Vec<f64>>, trans: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let states = cost.len();
        if states == 0 {
            return Err(Error::Empty("state space"));
        }
        let actions = cost[0].len();
        if actions == 0 {
            return Err(Error::Empty("action space"));
        }
        check_len("states", states, trans.len())?;
        let mut flat_cost = Vec::with_capacity(states * actions);
        let mut flat_trans = Vec::with_capacity(states * actions * states);
        for (s, (c_row, p_block)) in cost.into_iter().zip(trans).enumerate() {
            check_len("actions", actions, c_row.len())?;
            check_len("actions", actions, p_block.len())?;
            flat_cost.extend(c_row);
            for (a, p_row) in p_block.into_iter().enumerate() {
                if p_row.len() != states {
                    return Err(Error::DimensionMismatch {
                        axis: if s == 0 && a == 0 { "states" } else { "next_states" },
                        expected: states,
                        found: p_row.len(),
                    });
                }
                flat_trans.extend(p_row);
            }
        }
        Self::from_flat(states, actions, discount, flat_cost, flat_trans)
    }

    /// Builds an instance from row-major flat buffers (`S*A` costs, `S*A*S` transitions).
    pub fn from_flat(
        states: usize,
        actions: usize,
        discount: f64,
        cost: Vec<f64>,
        mut trans: Vec<f64>,
    ) -> Result<Self> {
        if states == 0 {
            return Err(Error::Empty("state space"));
        }
        if actions == 0 {
            return Err(Error::Empty("action space"));
        }
        validate_discount(discount)?;
        check_len("cost", states * actions, cost.len())?;
        check_len("transitions", states * actions * states, trans.len())?;
        for (i, c) in cost.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::NonFinite {
                    field: format!("C[{}][{}]", i / actions, i % actions),
                });
            }
        }
        for (i, row) in trans.chunks_mut(states).enumerate() {
            validate_simplex_row(row, || format!("P[{}][{}]", i / actions, i % actions))?;
        }
        Ok(MdpInstance {
            states,
            actions,
            discount,
            cost,
            trans,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.cost[s * self.actions + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.actions + a) * self.states;
        &self.trans[start..start + self.states]
    }

    pub fn block(&self, s: usize) -> StateBlock<'_> {
        let a = self.actions;
        let n = self.states;
        StateBlock {
            cost: &self.cost[s * a..(s + 1) * a],
            trans: &self.trans[s * a * n..(s + 1) * a * n],
            states: n,
        }
    }

    pub fn cost_flat(&self) -> &[f64] {
        &self.cost
    }

    pub fn trans_flat(&self) -> &[f64] {
        &self.trans
    }

    /// Same parameters, different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        validate_discount(discount)?;
        Ok(MdpInstance {
            discount,
            ..self.clone()
        })
    }

    /// Parameter distance `max_s (||c_s - c'_s||_inf + ||P_s - P'_s||_inf)`,
    /// the norm under which both value operators are `max(1, γ||V||)`-Lipschitz.
    pub fn parameter_distance(&self, other: &MdpInstance) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok((0..self.states)
            .map(|s| self.block(s).distance(&other.block(s)))
            .fold(0.0, f64::max))
    }

    pub(crate) fn check_same_shape(&self, other: &MdpInstance) -> Result<()> {
        check_len("states", self.states, other.states)?;
        check_len("actions", self.actions, other.actions)
    }

    /// Assembles an instance from per-state blocks, all of matching shape.
    pub(crate) fn from_blocks<'a>(
        discount: f64,
        states: usize,
        actions: usize,
        blocks: impl Iterator<Item = StateBlock<'a>>,
    ) -> MdpInstance {
        let mut cost = Vec::with_capacity(states * actions);
        let mut trans = Vec::with_capacity(states * actions * states);
        for b in blocks {
            cost.extend_from_slice(b.cost);
            trans.extend_from_slice(b.trans);
        }
        debug_assert_eq!(cost.len(), states * actions);
        MdpInstance {
            states,
            actions,
            discount,
            cost,
            trans,
        }
    }
}

/// A stationary randomised policy, one distribution over actions per state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    states: usize,
    actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let states = rows.len();
        if states == 0 {
            return Err(Error::Empty("policy"));
        }
        let actions = rows[0].len();
        let mut probs = Vec::with_capacity(states * actions);
        for (s, mut row) in rows.into_iter().enumerate() {
            check_len("actions", actions, row.len())?;
            validate_simplex_row(&mut row, || format!("pi[{s}]"))?;
            probs.extend(row);
        }
        Ok(Policy {
            states,
            actions,
            probs,
        })
    }

    /// Deterministic policy from one action index per state.
    pub fn deterministic(choices: &[usize], actions: usize) -> Result<Self> {
        if choices.is_empty() {
            return Err(Error::Empty("policy"));
        }
        let mut probs = alloc::vec![0.0; choices.len() * actions];
        for (s, &a) in choices.iter().enumerate() {
            if a >= actions {
                return Err(Error::DimensionMismatch {
                    axis: "actions",
                    expected: actions,
                    found: a + 1,
                });
            }
            probs[s * actions + a] = 1.0;
        }
        Ok(Policy {
            states: choices.len(),
            actions,
            probs,
        })
    }

    /// Rows are assumed valid; used for LP strategies that were already projected.
    pub(crate) fn from_flat_unchecked(states: usize, actions: usize, probs: Vec<f64>) -> Self {
        Policy {
            states,
            actions,
            probs,
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.actions..(s + 1) * self.actions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.actions)
    }

    pub fn is_deterministic(&self) -> bool {
        self.rows().all(|r| r.contains(&1.0))
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for Policy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(self.states))?;
        for row in self.rows() {
            seq.serialize_element(row)?;
        }
        seq.end()
    }
}

/// Handle for a value operator `h(V, m)` whose state-`s` component only reads
/// the state-`s` block of `m`.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueOperator {
    /// `f_s(V) = min_a C_sa + γ p_sa^T V`.
    Bellman,
    /// `g^π_s(V) = c_s^T π_s + γ (P_s π_s)^T V`.
    Evaluate(Policy),
}

impl ValueOperator {
    pub fn name(&self) -> &'static str {
        match self {
            ValueOperator::Bellman => "bellman",
            ValueOperator::Evaluate(_) => "policy_evaluation",
        }
    }

    pub fn check_shape(&self, states: usize, actions: usize) -> Result<()> {
        if let ValueOperator::Evaluate(pi) = self {
            check_len("states", states, pi.states())?;
            check_len("actions", actions, pi.actions())?;
        }
        Ok(())
    }

    /// State-`s` component of the operator for one parameter block.
    pub fn apply_state(&self, s: usize, values: &[f64], block: StateBlock<'_>, discount: f64) -> f64 {
        match self {
            ValueOperator::Bellman => bellman_state(values, block, discount),
            ValueOperator::Evaluate(pi) => policy_eval_state(values, pi.row(s), block, discount),
        }
    }

    pub fn apply(&self, values: &ValueVector, m: &MdpInstance) -> Result<ValueVector> {
        match self {
            ValueOperator::Bellman => bellman_apply(values, m),
            ValueOperator::Evaluate(pi) => policy_eval_apply(values, pi, m),
        }
    }
}

fn bellman_state(values: &[f64], block: StateBlock<'_>, discount: f64) -> f64 {
    (0..block.actions())
        .map(|a| block.q_value(a, values, discount))
        .fold(f64::INFINITY, f64::min)
}

fn policy_eval_state(values: &[f64], pi_s: &[f64], block: StateBlock<'_>, discount: f64) -> f64 {
    let immediate: f64 = dot(block.cost, pi_s);
    let mut future = 0.0;
    for (next, v) in values.iter().enumerate() {
        let mut p = 0.0;
        for (a, w) in pi_s.iter().enumerate() {
            p += block.trans[a * block.states + next] * w;
        }
        future += p * v;
    }
    immediate + discount * future
}

/// Policy evaluation operator `g^π(V, C, P)`.
pub fn policy_eval_apply(values: &ValueVector, pi: &Policy, m: &MdpInstance) -> Result<ValueVector> {
    check_len("states", m.states(), values.len())?;
    check_len("states", m.states(), pi.states())?;
    check_len("actions", m.actions(), pi.actions())?;
    let out = (0..m.states())
        .map(|s| policy_eval_state(values, pi.row(s), m.block(s), m.discount()))
        .collect();
    Ok(ValueVector::from_vec_unchecked(out))
}

/// Bellman operator `f(V, C, P)`. The inner minimum over the action simplex is
/// attained at a vertex, so it is evaluated over actions directly.
pub fn bellman_apply(values: &ValueVector, m: &MdpInstance) -> Result<ValueVector> {
    check_len("states", m.states(), values.len())?;
    let out = (0..m.states())
        .map(|s| bellman_state(values, m.block(s), m.discount()))
        .collect();
    Ok(ValueVector::from_vec_unchecked(out))
}

/// Index of the smallest value, lowest index on ties.
pub(crate) fn argmin_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Deterministic policy that is greedy for `V`. Ties go to the lowest action index.
pub fn greedy_policy(values: &ValueVector, m: &MdpInstance) -> Result<Policy> {
    check_len("states", m.states(), values.len())?;
    let choices: Vec<usize> = (0..m.states())
        .map(|s| {
            let block = m.block(s);
            argmin_first((0..m.actions()).map(|a| block.q_value(a, values, m.discount())))
        })
        .collect();
    Policy::deterministic(&choices, m.actions())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub value: ValueVector,
    pub iterations: usize,
    /// Last sup-norm step `||V^k - V^{k-1}||`.
    pub residual: f64,
}

/// Iterates `V^{k+1} = op(V^k, m)` until `γ/(1-γ) ||V^k - V^{k-1}|| < eps`,
/// which certifies `||V^k - V*|| < eps`.
pub fn value_iteration(
    m: &MdpInstance,
    op: &ValueOperator,
    v0: &ValueVector,
    eps: f64,
) -> Result<IterationOutcome> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidTolerance(eps));
    }
    op.check_shape(m.states(), m.actions())?;
    check_len("states", m.states(), v0.len())?;
    let gamma = m.discount();
    let factor = gamma / (1.0 - gamma);
    let mut current = v0.clone();
    for k in 1..=MAX_ITERATIONS {
        let next = op.apply(&current, m)?;
        let residual = next.sup_distance(&current);
        current = next;
        if factor * residual < eps {
            return Ok(IterationOutcome {
                value: current,
                iterations: k,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
    })
}
