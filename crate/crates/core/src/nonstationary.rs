//! Value iteration under time-varying parameters, `V^{k+1} = h(V^k, m^k)`.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{value_iteration, ValueOperator};
use crate::robust::{solve_optimistic, solve_robust};
use crate::setops::{algorithm1_envelope, Direction, EnvelopeBox};
use crate::uncertainty::{ParamChoice, ParamKind, ParamSet};
use crate::vector::{check_len, ValueVector};

/// Key of the ChaCha8 generator; the schedule seed selects the stream.
pub const SCHEDULE_KEY: u64 = 0x05e7_3d90;

pub const DEFAULT_HORIZON: usize = 50;
pub const DEFAULT_SEEDS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// Independent uniform draws. Finite sets draw a member index; the
    /// s-rectangular variants draw one block per state that has more than one.
    IidUniform { seed: u64 },
    /// Repeats `order` cyclically.
    Cyclic(Vec<ParamChoice>),
    /// Picks the member whose step `h(V, m) - V` has the largest (`Upper`) or
    /// smallest (`Lower`) sup-norm. Per state for the s-rectangular variants.
    GreedyAdversarial(Direction),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSchedule {
    pub kind: ScheduleKind,
    pub horizon: usize,
}

impl ParamSchedule {
    pub fn iid(seed: u64, horizon: usize) -> Self {
        ParamSchedule {
            kind: ScheduleKind::IidUniform { seed },
            horizon,
        }
    }

    pub fn cyclic(order: Vec<ParamChoice>, horizon: usize) -> Self {
        ParamSchedule {
            kind: ScheduleKind::Cyclic(order),
            horizon,
        }
    }

    pub fn greedy(direction: Direction, horizon: usize) -> Self {
        ParamSchedule {
            kind: ScheduleKind::GreedyAdversarial(direction),
            horizon,
        }
    }

    /// Cycles through every member of a finite set, or through the `i`-th
    /// block of every state (clamped to the state's list) for s-rectangular sets.
    pub fn cyclic_members(ps: &ParamSet, horizon: usize) -> Self {
        let order = match ps.kind() {
            ParamKind::Finite(ms) => (0..ms.len()).map(ParamChoice::Global).collect(),
            _ => {
                let widest = (0..ps.states()).map(|s| ps.option_count(s)).max().unwrap_or(1);
                (0..widest)
                    .map(|i| {
                        ParamChoice::PerState(
                            (0..ps.states()).map(|s| i.min(ps.option_count(s) - 1)).collect(),
                        )
                    })
                    .collect()
            }
        };
        Self::cyclic(order, horizon)
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(SCHEDULE_KEY);
    rng.set_stream(seed);
    rng
}

fn check_choice(ps: &ParamSet, choice: &ParamChoice) -> Result<()> {
    let ok = match (ps.kind(), choice) {
        (ParamKind::Finite(ms), ParamChoice::Global(i)) => *i < ms.len(),
        (ParamKind::Finite(_), ParamChoice::PerState(_)) => false,
        (_, ParamChoice::PerState(idx)) => {
            idx.len() == ps.states() && idx.iter().enumerate().all(|(s, &i)| i < ps.option_count(s))
        }
        (_, ParamChoice::Global(_)) => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(alloc::format!(
            "schedule entry {choice:?} does not name a member of the parameter set"
        )))
    }
}

/// `h(V, m)` for the member named by `choice`.
pub fn apply_choice(
    v: &[f64],
    ps: &ParamSet,
    op: &ValueOperator,
    choice: &ParamChoice,
) -> ValueVector {
    let gamma = ps.discount();
    let out = match (ps.kind(), choice) {
        (ParamKind::Finite(ms), ParamChoice::Global(i)) => (0..ps.states())
            .map(|s| op.apply_state(s, v, ms[*i].block(s), gamma))
            .collect(),
        (_, ParamChoice::PerState(idx)) => (0..ps.states())
            .map(|s| op.apply_state(s, v, ps.options(s)[idx[s]], gamma))
            .collect(),
        _ => unreachable!("choices are validated before use"),
    };
    ValueVector::from_vec_unchecked(out)
}

struct Drawer<'a> {
    ps: &'a ParamSet,
    op: &'a ValueOperator,
    kind: &'a ScheduleKind,
    rng: Option<ChaCha8Rng>,
}

impl Drawer<'_> {
    fn draw(&mut self, k: usize, v: &[f64]) -> Result<ParamChoice> {
        let ps = self.ps;
        let choice = match self.kind {
            ScheduleKind::IidUniform { .. } => {
                let rng = self.rng.as_mut().expect("iid schedule has a generator");
                match ps.kind() {
                    ParamKind::Finite(ms) => ParamChoice::Global(rng.gen_range(0..ms.len())),
                    _ => ParamChoice::PerState(
                        (0..ps.states())
                            .map(|s| {
                                let n = ps.option_count(s);
                                if n > 1 { rng.gen_range(0..n) } else { 0 }
                            })
                            .collect(),
                    ),
                }
            }
            ScheduleKind::Cyclic(order) => {
                if order.is_empty() {
                    return Err(Error::Empty("cyclic schedule"));
                }
                order[k % order.len()].clone()
            }
            ScheduleKind::GreedyAdversarial(direction) => self.greedy(*direction, v),
        };
        check_choice(ps, &choice)?;
        Ok(choice)
    }

    fn greedy(&self, direction: Direction, v: &[f64]) -> ParamChoice {
        let better = |cand: f64, best: f64| match direction {
            Direction::Upper => cand > best,
            Direction::Lower => cand < best,
        };
        let ps = self.ps;
        match ps.kind() {
            ParamKind::Finite(ms) => {
                let mut best = (0, f64::NAN);
                for i in 0..ms.len() {
                    let step = apply_choice(v, ps, self.op, &ParamChoice::Global(i));
                    let d = crate::vector::sup_distance(&step, v);
                    if i == 0 || better(d, best.1) {
                        best = (i, d);
                    }
                }
                ParamChoice::Global(best.0)
            }
            _ => ParamChoice::PerState(
                (0..ps.states())
                    .map(|s| {
                        let vals = ps.state_values(self.op, s, v);
                        let mut best = 0;
                        for (i, x) in vals.iter().enumerate().skip(1) {
                            if better((x - v[s]).abs(), (vals[best] - v[s]).abs()) {
                                best = i;
                            }
                        }
                        best
                    })
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TrajectoryStats {
    /// `V^0, ..., V^K`.
    pub trace: Vec<ValueVector>,
    /// Sup-norm distance of each `V^k` to the box ("box distance").
    pub box_distance: Vec<f64>,
    /// Per-coordinate minimum over the trace.
    pub coord_min: ValueVector,
    /// Per-coordinate maximum over the trace.
    pub coord_max: ValueVector,
    pub choices: Vec<ParamChoice>,
}

impl TrajectoryStats {
    pub fn coordinate(&self, s: usize) -> Vec<f64> {
        self.trace.iter().map(|v| v[s]).collect()
    }
}

/// Runs `schedule.horizon` steps of `V^{k+1} = h(V^k, m^k)` from `v0`,
/// recording the distance of every iterate to `bounds`.
pub fn simulate(
    ps: &ParamSet,
    op: &ValueOperator,
    schedule: &ParamSchedule,
    v0: &ValueVector,
    bounds: &EnvelopeBox,
) -> Result<TrajectoryStats> {
    ps.check_operator(op)?;
    check_len("states", ps.states(), v0.len())?;
    check_len("states", ps.states(), bounds.lower.len())?;
    if v0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { field: "V0".into() });
    }
    let mut drawer = Drawer {
        ps,
        op,
        kind: &schedule.kind,
        rng: match schedule.kind {
            ScheduleKind::IidUniform { seed } => Some(rng_for(seed)),
            _ => None,
        },
    };
    let mut trace = Vec::with_capacity(schedule.horizon + 1);
    let mut box_distance = Vec::with_capacity(schedule.horizon + 1);
    let mut choices = Vec::with_capacity(schedule.horizon);
    let mut lo = v0.to_vec();
    let mut hi = v0.to_vec();
    let mut v = v0.clone();
    box_distance.push(bounds.distance(&v));
    for k in 0..schedule.horizon {
        let choice = drawer.draw(k, &v)?;
        let next = apply_choice(&v, ps, op, &choice);
        for s in 0..next.len() {
            lo[s] = lo[s].min(next[s]);
            hi[s] = hi[s].max(next[s]);
        }
        box_distance.push(bounds.distance(&next));
        trace.push(v);
        choices.push(choice);
        v = next;
    }
    trace.push(v);
    Ok(TrajectoryStats {
        trace,
        box_distance,
        coord_min: ValueVector::from_vec_unchecked(lo),
        coord_max: ValueVector::from_vec_unchecked(hi),
        choices,
    })
}

/// Mean and population standard deviation across equally long series.
pub fn mean_and_stdev(series: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let Some(first) = series.first() else {
        return (Vec::new(), Vec::new());
    };
    let n = series.len() as f64;
    let len = first.len();
    let mean: Vec<f64> = (0..len).map(|k| series.iter().map(|s| s[k]).sum::<f64>() / n).collect();
    let stdev = (0..len)
        .map(|k| libm::sqrt(series.iter().map(|s| (s[k] - mean[k]) * (s[k] - mean[k])).sum::<f64>() / n))
        .collect();
    (mean, stdev)
}

/// One deployed operator: its envelope box and starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub name: String,
    pub operator: ValueOperator,
    pub bounds: EnvelopeBox,
    pub start: ValueVector,
}

/// Which policy a deployment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DeploymentKind {
    /// Policy evaluation under the optimistic policy.
    Optimistic,
    /// Policy evaluation under the robust policy.
    Robust,
    /// The Bellman operator itself (re-planning every step).
    Bellman,
}

impl DeploymentKind {
    pub const ALL: [DeploymentKind; 3] = [
        DeploymentKind::Optimistic,
        DeploymentKind::Robust,
        DeploymentKind::Bellman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DeploymentKind::Optimistic => "optimistic",
            DeploymentKind::Robust => "robust",
            DeploymentKind::Bellman => "bellman",
        }
    }
}

/// Everything needed to replay a set of deployments for any schedule.
///
/// Each deployment starts at the stationary fixed point of its operator under
/// the nominal member, so the runs begin inside the certified box.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentSetup {
    pub ps: ParamSet,
    pub eps: f64,
    pub deployments: Vec<Deployment>,
}

impl DeploymentSetup {
    /// Optimistic, robust and Bellman deployments, in that order.
    pub fn new(ps: &ParamSet, eps: f64) -> Result<Self> {
        Self::with_kinds(ps, eps, &DeploymentKind::ALL)
    }

    pub fn with_kinds(ps: &ParamSet, eps: f64, kinds: &[DeploymentKind]) -> Result<Self> {
        let nominal = ps.nominal();
        let zero = ValueVector::zeros(ps.states());
        let mut deployments = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let operator = match kind {
                DeploymentKind::Optimistic => ValueOperator::Evaluate(solve_optimistic(ps, eps)?.policy),
                DeploymentKind::Robust => ValueOperator::Evaluate(solve_robust(ps, eps)?.policy),
                DeploymentKind::Bellman => ValueOperator::Bellman,
            };
            let report = algorithm1_envelope(ps, &operator, &zero, eps)?;
            let start = value_iteration(&nominal, &operator, &zero, eps * 1e-3)?.value;
            deployments.push(Deployment {
                name: kind.name().into(),
                operator,
                bounds: report.inflated_box(),
                start,
            });
        }
        Ok(DeploymentSetup {
            ps: ps.clone(),
            eps,
            deployments,
        })
    }

    /// Starts every deployment at `v0` instead.
    pub fn with_start(mut self, v0: &ValueVector) -> Result<Self> {
        check_len("states", self.ps.states(), v0.len())?;
        for d in &mut self.deployments {
            d.start = v0.clone();
        }
        Ok(self)
    }

    /// One trajectory per deployment under the shared iid schedule `seed`.
    pub fn run_seed(&self, seed: u64, horizon: usize) -> Result<Vec<TrajectoryStats>> {
        self.run(&ParamSchedule::iid(seed, horizon))
    }

    /// One trajectory per deployment under `schedule`.
    pub fn run(&self, schedule: &ParamSchedule) -> Result<Vec<TrajectoryStats>> {
        self.deployments
            .iter()
            .map(|d| simulate(&self.ps, &d.operator, schedule, &d.start, &d.bounds))
            .collect()
    }

    /// Aggregates per-seed runs (outer index: seed, in order) at `coordinate`.
    pub fn aggregate(&self, runs: &[Vec<TrajectoryStats>], coordinate: usize) -> Result<DeploymentComparison> {
        if coordinate >= self.ps.states() {
            return Err(Error::DimensionMismatch {
                axis: "states",
                expected: self.ps.states(),
                found: coordinate + 1,
            });
        }
        let summaries = self
            .deployments
            .iter()
            .enumerate()
            .map(|(d, dep)| {
                let traces: Vec<Vec<f64>> = runs.iter().map(|r| r[d].coordinate(coordinate)).collect();
                let (mean, stdev) = mean_and_stdev(&traces);
                let flat = traces.iter().flatten().copied();
                let min = flat.clone().fold(f64::INFINITY, f64::min);
                let max = flat.fold(f64::NEG_INFINITY, f64::max);
                let final_box_distance = runs
                    .iter()
                    .map(|r| *r[d].box_distance.last().expect("non-empty"))
                    .fold(0.0, f64::max);
                DeploymentSummary {
                    name: dep.name.clone(),
                    box_lower: dep.bounds.lower[coordinate],
                    box_upper: dep.bounds.upper[coordinate],
                    mean,
                    stdev,
                    min,
                    max,
                    spread: max - min,
                    final_box_distance,
                    traces,
                }
            })
            .collect();
        Ok(DeploymentComparison {
            coordinate,
            seeds: runs.len(),
            summaries,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DeploymentSummary {
    pub name: String,
    pub box_lower: f64,
    pub box_upper: f64,
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
    /// Extremes over all seeds and steps.
    pub min: f64,
    pub max: f64,
    pub spread: f64,
    /// Largest box distance at the final step over all seeds.
    pub final_box_distance: f64,
    /// Per-seed trace at the reported coordinate.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub traces: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DeploymentComparison {
    pub coordinate: usize,
    pub seeds: usize,
    pub summaries: Vec<DeploymentSummary>,
}

impl DeploymentComparison {
    pub fn get(&self, name: &str) -> Option<&DeploymentSummary> {
        self.summaries.iter().find(|s| s.name == name)
    }
}

/// Optimistic, robust and Bellman deployments over seeds `0..seeds`.
pub fn deployment_compare(
    ps: &ParamSet,
    seeds: usize,
    horizon: usize,
    eps: f64,
    coordinate: usize,
) -> Result<DeploymentComparison> {
    let setup = DeploymentSetup::new(ps, eps)?;
    let runs = (0..seeds as u64)
        .map(|seed| setup.run_seed(seed, horizon))
        .collect::<Result<Vec<_>>>()?;
    setup.aggregate(&runs, coordinate)
}

/// Number of steps after which a trajectory starting at box distance `d0` is
/// guaranteed within `delta` of the box: `ceil(log(δ(1-γ)/D) / log γ)`.
pub fn absorption_steps(d0: f64, delta: f64, gamma: f64) -> usize {
    if d0 <= 0.0 || delta >= d0 {
        return 0;
    }
    let k = libm::ceil(libm::log(delta * (1.0 - gamma) / d0) / libm::log(gamma));
    if k.is_finite() && k > 0.0 { k as usize } else { 0 }
}
