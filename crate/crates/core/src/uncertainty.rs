//! Compact parameter uncertainty sets.
//!
//! Three representations are supported:
//!
//! * [`ParamKind::Finite`]: an explicit list of complete parameter pairs
//!   `(C, P)`, possibly coupled across states.
//! * [`ParamKind::SRectFinite`]: an s-rectangular set given as an independent
//!   finite list of `(c_s, P_s)` blocks for every state.
//! * [`ParamKind::SRectMixture`]: an s-rectangular set whose state-`s` factor is
//!   the convex hull of the listed blocks.
//!
//! Whether a value operator's bound problems can be solved exactly depends on
//! the representation; see [`crate::setops::bound_operator_apply`].

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::mdp::{validate_discount, validate_simplex_row, MdpInstance, StateBlock, ValueOperator};
use crate::vector::{check_len, ValueVector};

/// Tolerance for structural set equality in the rectangularity predicates.
pub const STRUCTURAL_TOL: f64 = 1e-9;

/// Default relative slack for argmin/argmax sets in the containment probe.
pub const DEFAULT_PROBE_SLACK: f64 = 1e-7;

/// Owned per-state parameter block `(c_s, P_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateParams {
    states: usize,
    cost: Vec<f64>,
    trans: Vec<f64>,
}

impl StateParams {
    /// `cost[a]` and `trans[a][s']`. Rows are validated against the simplex.
    pub fn new(cost: Vec<f64>, trans: Vec<Vec<f64>>) -> Result<Self> {
        check_len("actions", cost.len(), trans.len())?;
        if cost.is_empty() {
            return Err(Error::Empty("action space"));
        }
        let states = trans[0].len();
        let mut flat = Vec::with_capacity(cost.len() * states);
        for row in trans {
            check_len("next_states", states, row.len())?;
            flat.extend(row);
        }
        Self::from_flat(states, cost, flat, "block")
    }

    pub(crate) fn from_flat(states: usize, cost: Vec<f64>, mut trans: Vec<f64>, label: &str) -> Result<Self> {
        check_len("transitions", cost.len() * states, trans.len())?;
        for (a, c) in cost.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::NonFinite {
                    field: format!("{label}.c[{a}]"),
                });
            }
        }
        for (a, row) in trans.chunks_mut(states).enumerate() {
            validate_simplex_row(row, || format!("{label}.P[{a}]"))?;
        }
        Ok(StateParams { states, cost, trans })
    }

    pub fn from_block(block: StateBlock<'_>) -> Self {
        StateParams {
            states: block.states,
            cost: block.cost.to_vec(),
            trans: block.trans.to_vec(),
        }
    }

    pub fn block(&self) -> StateBlock<'_> {
        StateBlock {
            cost: &self.cost,
            trans: &self.trans,
            states: self.states,
        }
    }

    pub fn actions(&self) -> usize {
        self.cost.len()
    }

    pub fn states(&self) -> usize {
        self.states
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Finite(Vec<MdpInstance>),
    SRectFinite(Vec<Vec<StateParams>>),
    SRectMixture(Vec<Vec<StateParams>>),
}

/// Identifies one member of an enumerable set (or a vertex of a mixture set).
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ParamChoice {
    /// Index into a [`ParamKind::Finite`] list.
    Global(usize),
    /// One block index per state for the s-rectangular variants.
    PerState(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    states: usize,
    actions: usize,
    discount: f64,
    kind: ParamKind,
}

impl ParamSet {
    pub fn finite(members: Vec<MdpInstance>) -> Result<Self> {
        let first = members.first().ok_or(Error::Empty("parameter list"))?;
        let (states, actions, discount) = (first.states(), first.actions(), first.discount());
        for m in &members[1..] {
            first.check_same_shape(m)?;
            if m.discount() != discount {
                return Err(Error::InvalidConfig(format!(
                    "members disagree on the discount factor ({} vs {discount})",
                    m.discount()
                )));
            }
        }
        Ok(ParamSet {
            states,
            actions,
            discount,
            kind: ParamKind::Finite(members),
        })
    }

    pub fn singleton(m: MdpInstance) -> Self {
        ParamSet {
            states: m.states(),
            actions: m.actions(),
            discount: m.discount(),
            kind: ParamKind::Finite(alloc::vec![m]),
        }
    }

    pub fn s_rect_finite(discount: f64, per_state: Vec<Vec<StateParams>>) -> Result<Self> {
        let (states, actions) = Self::check_per_state(discount, &per_state)?;
        Ok(ParamSet {
            states,
            actions,
            discount,
            kind: ParamKind::SRectFinite(per_state),
        })
    }

    pub fn s_rect_mixture(discount: f64, per_state: Vec<Vec<StateParams>>) -> Result<Self> {
        let (states, actions) = Self::check_per_state(discount, &per_state)?;
        Ok(ParamSet {
            states,
            actions,
            discount,
            kind: ParamKind::SRectMixture(per_state),
        })
    }

    fn check_per_state(discount: f64, per_state: &[Vec<StateParams>]) -> Result<(usize, usize)> {
        validate_discount(discount)?;
        let states = per_state.len();
        if states == 0 {
            return Err(Error::Empty("state space"));
        }
        let first = per_state[0].first().ok_or(Error::Empty("per-state parameter list"))?;
        let actions = first.actions();
        for list in per_state {
            if list.is_empty() {
                return Err(Error::Empty("per-state parameter list"));
            }
            for p in list {
                check_len("actions", actions, p.actions())?;
                check_len("states", states, p.states())?;
            }
        }
        Ok((states, actions))
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

    pub fn kind(&self) -> &ParamKind {
        &self.kind
    }

    pub fn variant_name(&self) -> &'static str {
        match self.kind {
            ParamKind::Finite(_) => "finite",
            ParamKind::SRectFinite(_) => "s_rect_finite",
            ParamKind::SRectMixture(_) => "s_rect_mixture",
        }
    }

    pub fn is_mixture(&self) -> bool {
        matches!(self.kind, ParamKind::SRectMixture(_))
    }

    /// Candidate parameter blocks for state `s` (members, list entries, or vertices).
    pub fn options(&self, s: usize) -> Vec<StateBlock<'_>> {
        match &self.kind {
            ParamKind::Finite(ms) => ms.iter().map(|m| m.block(s)).collect(),
            ParamKind::SRectFinite(lists) | ParamKind::SRectMixture(lists) => {
                lists[s].iter().map(StateParams::block).collect()
            }
        }
    }

    pub fn option_count(&self, s: usize) -> usize {
        match &self.kind {
            ParamKind::Finite(ms) => ms.len(),
            ParamKind::SRectFinite(lists) | ParamKind::SRectMixture(lists) => lists[s].len(),
        }
    }

    /// Number of members of the enumerable set, saturating at `u128::MAX`.
    pub fn member_count(&self) -> u128 {
        match &self.kind {
            ParamKind::Finite(ms) => ms.len() as u128,
            ParamKind::SRectFinite(lists) | ParamKind::SRectMixture(lists) => lists
                .iter()
                .fold(1u128, |acc, l| acc.saturating_mul(l.len() as u128)),
        }
    }

    /// Materialises one member (or mixture vertex) as a plain MDP.
    pub fn member(&self, choice: &ParamChoice) -> Result<MdpInstance> {
        match (&self.kind, choice) {
            (ParamKind::Finite(ms), ParamChoice::Global(i)) => ms.get(*i).cloned().ok_or(
                Error::DimensionMismatch {
                    axis: "members",
                    expected: ms.len(),
                    found: *i + 1,
                },
            ),
            (ParamKind::SRectFinite(lists) | ParamKind::SRectMixture(lists), ParamChoice::PerState(idx)) => {
                check_len("states", self.states, idx.len())?;
                for (s, &i) in idx.iter().enumerate() {
                    if i >= lists[s].len() {
                        return Err(Error::DimensionMismatch {
                            axis: "members",
                            expected: lists[s].len(),
                            found: i + 1,
                        });
                    }
                }
                Ok(MdpInstance::from_blocks(
                    self.discount,
                    self.states,
                    self.actions,
                    idx.iter().enumerate().map(|(s, &i)| lists[s][i].block()),
                ))
            }
            _ => Err(Error::Unsupported(format!(
                "{:?} choice for a {} parameter set",
                choice,
                self.variant_name()
            ))),
        }
    }

    /// The first listed member in every state.
    pub fn nominal(&self) -> MdpInstance {
        let choice = match self.kind {
            ParamKind::Finite(_) => ParamChoice::Global(0),
            _ => ParamChoice::PerState(alloc::vec![0; self.states]),
        };
        self.member(&choice).expect("index 0 always exists")
    }

    /// Same set with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        validate_discount(discount)?;
        let kind = match &self.kind {
            ParamKind::Finite(ms) => ParamKind::Finite(
                ms.iter()
                    .map(|m| m.with_discount(discount))
                    .collect::<Result<_>>()?,
            ),
            other => other.clone(),
        };
        Ok(ParamSet {
            discount,
            kind,
            ..*self
        })
    }

    /// Same blocks read as a mixture (convex hull per state). Finite global sets
    /// must be s-rectangular.
    pub fn to_mixture(&self) -> Result<Self> {
        let lists = self.s_rect_lists()?;
        Ok(ParamSet {
            kind: ParamKind::SRectMixture(lists),
            ..*self
        })
    }

    /// Per-state block lists of an s-rectangular set. For finite global sets this
    /// is the per-state projection, accepted only when the set is its product.
    pub fn s_rect_lists(&self) -> Result<Vec<Vec<StateParams>>> {
        match &self.kind {
            ParamKind::SRectFinite(l) | ParamKind::SRectMixture(l) => Ok(l.clone()),
            ParamKind::Finite(ms) => {
                if !is_s_rectangular(self) {
                    return Err(Error::Unsupported(
                        "finite parameter set is not s-rectangular".into(),
                    ));
                }
                Ok((0..self.states)
                    .map(|s| {
                        let blocks: Vec<Vec<f64>> = ms.iter().map(|m| block_key(m.block(s))).collect();
                        let classes = classify(&blocks);
                        let mut seen = Vec::new();
                        let mut out = Vec::new();
                        for (i, c) in classes.iter().enumerate() {
                            if !seen.contains(c) {
                                seen.push(*c);
                                out.push(StateParams::from_block(ms[i].block(s)));
                            }
                        }
                        out
                    })
                    .collect())
            }
        }
    }

    /// Expands an s-rectangular set into the explicit list of its members, in
    /// lexicographic order of the per-state choices (last state varies fastest).
    /// Returns `None` when the set has more than `limit` members.
    pub fn to_finite_global(&self, limit: usize) -> Option<ParamSet> {
        if self.member_count() > limit as u128 {
            return None;
        }
        match &self.kind {
            ParamKind::Finite(_) => Some(self.clone()),
            ParamKind::SRectFinite(lists) | ParamKind::SRectMixture(lists) => {
                let sizes: Vec<usize> = lists.iter().map(Vec::len).collect();
                let members = ProductIter::new(sizes)
                    .map(|idx| self.member(&ParamChoice::PerState(idx)).expect("in range"))
                    .collect();
                Some(ParamSet {
                    kind: ParamKind::Finite(members),
                    ..*self
                })
            }
        }
    }

    pub(crate) fn check_operator(&self, op: &ValueOperator) -> Result<()> {
        op.check_shape(self.states, self.actions)
    }

    /// `h_s(V, m)` for every candidate block of state `s`.
    pub fn state_values(&self, op: &ValueOperator, s: usize, values: &[f64]) -> Vec<f64> {
        self.options(s)
            .into_iter()
            .map(|b| op.apply_state(s, values, b, self.discount))
            .collect()
    }
}

/// Odometer over a mixed-radix index vector.
#[derive(Debug, Clone)]
pub(crate) struct ProductIter {
    sizes: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl ProductIter {
    pub(crate) fn new(sizes: Vec<usize>) -> Self {
        let next = if sizes.contains(&0) {
            None
        } else {
            Some(alloc::vec![0; sizes.len()])
        };
        ProductIter { sizes, next }
    }
}

impl Iterator for ProductIter {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carried = true;
        for i in (0..succ.len()).rev() {
            succ[i] += 1;
            if succ[i] < self.sizes[i] {
                carried = false;
                break;
            }
            succ[i] = 0;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(current)
    }
}

fn block_key(b: StateBlock<'_>) -> Vec<f64> {
    let mut key = b.cost.to_vec();
    key.extend_from_slice(b.trans);
    key
}

fn action_key(b: StateBlock<'_>, a: usize) -> Vec<f64> {
    let mut key = alloc::vec![b.cost[a]];
    key.extend_from_slice(b.row(a));
    key
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Assigns equivalence-class ids (equal within [`STRUCTURAL_TOL`] in sup-norm).
/// Vectors are visited in canonical lexicographic order so ids do not depend on
/// how the input happened to be listed.
fn classify(items: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&i, &j| lex_cmp(&items[i], &items[j]).then(i.cmp(&j)));
    let mut reps: Vec<usize> = Vec::new();
    let mut class = alloc::vec![0; items.len()];
    for &i in &order {
        let found = reps.iter().position(|&r| {
            items[r]
                .iter()
                .zip(&items[i])
                .all(|(x, y)| (x - y).abs() <= STRUCTURAL_TOL)
        });
        class[i] = match found {
            Some(c) => c,
            None => {
                reps.push(i);
                reps.len() - 1
            }
        };
    }
    class
}

fn class_count(classes: &[usize]) -> usize {
    classes.iter().copied().max().map_or(0, |m| m + 1)
}

/// Whether the tuples `rows[i]` (one class id per factor) fill the whole cross
/// product of the per-factor class sets.
fn fills_product(factors: &[Vec<usize>]) -> bool {
    let n = factors.first().map_or(0, Vec::len);
    let mut tuples: Vec<Vec<usize>> = (0..n)
        .map(|i| factors.iter().map(|f| f[i]).collect())
        .collect();
    tuples.sort();
    tuples.dedup();
    let mut product: usize = 1;
    for f in factors {
        product = product.saturating_mul(class_count(f));
        if product > tuples.len() {
            return false;
        }
    }
    product == tuples.len()
}

/// Whether the set factorises over states, `M = X_s M_s`.
pub fn is_s_rectangular(ps: &ParamSet) -> bool {
    match &ps.kind {
        ParamKind::SRectFinite(_) | ParamKind::SRectMixture(_) => true,
        ParamKind::Finite(ms) => {
            let factors: Vec<Vec<usize>> = (0..ps.states)
                .map(|s| classify(&ms.iter().map(|m| block_key(m.block(s))).collect::<Vec<_>>()))
                .collect();
            fills_product(&factors)
        }
    }
}

/// Whether the set factorises over state-action pairs, `M = X_(s,a) M_sa`.
pub fn is_sa_rectangular(ps: &ParamSet) -> bool {
    match &ps.kind {
        ParamKind::SRectFinite(lists) | ParamKind::SRectMixture(lists) => lists.iter().all(|list| {
            let factors: Vec<Vec<usize>> = (0..ps.actions)
                .map(|a| classify(&list.iter().map(|p| action_key(p.block(), a)).collect::<Vec<_>>()))
                .collect();
            fills_product(&factors)
        }),
        ParamKind::Finite(ms) => {
            let mut factors = Vec::with_capacity(ps.states * ps.actions);
            for s in 0..ps.states {
                for a in 0..ps.actions {
                    factors.push(classify(
                        &ms.iter().map(|m| action_key(m.block(s), a)).collect::<Vec<_>>(),
                    ));
                }
            }
            fills_product(&factors)
        }
    }
}

/// Outcome of the containment probe at one value vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ProbeOutcome {
    pub probe: ValueVector,
    /// Intersection over states of the per-state argmin sets is non-empty.
    pub min_nonempty: bool,
    pub max_nonempty: bool,
    pub min_witness: Option<ParamChoice>,
    pub max_witness: Option<ParamChoice>,
}

/// Sampled necessary check of the containment condition. A positive outcome at
/// every probe is evidence, not a proof.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ContainmentProbeReport {
    pub operator: &'static str,
    pub slack: f64,
    /// Set when a mixture set was probed on its vertices only.
    pub vertex_only: bool,
    pub probes: Vec<ProbeOutcome>,
}

impl ContainmentProbeReport {
    pub fn all_nonempty(&self) -> bool {
        self.probes.iter().all(|p| p.min_nonempty && p.max_nonempty)
    }
}

/// Probes the containment condition at each of `probes`.
///
/// For each probe `V` and state `s`, the argmin (argmax) set collects the
/// parameters whose `h_s(V, m)` is within `slack * max(1, |opt_s|)` of the
/// per-state optimum. Mixture sets are rejected; use
/// [`probe_containment_vertices`] to probe them on their vertices.
pub fn probe_containment(
    ps: &ParamSet,
    op: &ValueOperator,
    probes: &[ValueVector],
    slack: f64,
) -> Result<ContainmentProbeReport> {
    if ps.is_mixture() {
        return Err(Error::Unsupported(
            "containment probe on a mixture set without vertex sampling".into(),
        ));
    }
    probe_impl(ps, op, probes, slack)
}

/// Like [`probe_containment`] but accepts mixture sets, probing their vertices
/// and flagging the report as `vertex_only`.
pub fn probe_containment_vertices(
    ps: &ParamSet,
    op: &ValueOperator,
    probes: &[ValueVector],
    slack: f64,
) -> Result<ContainmentProbeReport> {
    probe_impl(ps, op, probes, slack)
}

fn probe_impl(
    ps: &ParamSet,
    op: &ValueOperator,
    probes: &[ValueVector],
    slack: f64,
) -> Result<ContainmentProbeReport> {
    if slack.is_nan() || slack <= 0.0 {
        return Err(Error::InvalidTolerance(slack));
    }
    ps.check_operator(op)?;
    let mut outcomes = Vec::with_capacity(probes.len());
    for v in probes {
        check_len("states", ps.states, v.len())?;
        let per_state: Vec<Vec<f64>> = (0..ps.states).map(|s| ps.state_values(op, s, v)).collect();
        let (min_witness, max_witness) = match ps.kind {
            ParamKind::Finite(ref ms) => (
                common_index(&per_state, ms.len(), slack, true).map(ParamChoice::Global),
                common_index(&per_state, ms.len(), slack, false).map(ParamChoice::Global),
            ),
            _ => (
                Some(ParamChoice::PerState(
                    per_state.iter().map(|vals| first_within(vals, slack, true)).collect(),
                )),
                Some(ParamChoice::PerState(
                    per_state.iter().map(|vals| first_within(vals, slack, false)).collect(),
                )),
            ),
        };
        outcomes.push(ProbeOutcome {
            probe: v.clone(),
            min_nonempty: min_witness.is_some(),
            max_nonempty: max_witness.is_some(),
            min_witness,
            max_witness,
        });
    }
    Ok(ContainmentProbeReport {
        operator: op.name(),
        slack,
        vertex_only: ps.is_mixture(),
        probes: outcomes,
    })
}

fn optimum(vals: &[f64], minimize: bool) -> f64 {
    if minimize {
        vals.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn within(v: f64, opt: f64, slack: f64, minimize: bool) -> bool {
    let tol = slack * opt.abs().max(1.0);
    if minimize {
        v <= opt + tol
    } else {
        v >= opt - tol
    }
}

fn first_within(vals: &[f64], slack: f64, minimize: bool) -> usize {
    let opt = optimum(vals, minimize);
    vals.iter()
        .position(|&v| within(v, opt, slack, minimize))
        .expect("optimum is attained")
}

fn common_index(per_state: &[Vec<f64>], n: usize, slack: f64, minimize: bool) -> Option<usize> {
    let opts: Vec<f64> = per_state.iter().map(|v| optimum(v, minimize)).collect();
    (0..n).find(|&i| {
        per_state
            .iter()
            .zip(&opts)
            .all(|(vals, &opt)| within(vals[i], opt, slack, minimize))
    })
}
