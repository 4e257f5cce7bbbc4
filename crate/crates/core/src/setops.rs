//! Set-valued value iteration.
//!
//! Compact value sets are carried as finite particle clouds
//! ([`ValueSetParticles`]). For enumerable parameter sets acting on finite
//! clouds the image under the set operator is again finite, so the cloud is
//! exact up to thinning. The coordinate-wise envelope, which is what the bound
//! iteration certifies, never depends on the thinning.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::ValueOperator;
use crate::robust::state_game;
use crate::uncertainty::{probe_containment_vertices, ContainmentProbeReport, ParamKind, ParamSet, ProductIter, DEFAULT_PROBE_SLACK};
use crate::vector::{check_len, sup_distance, ValueVector};

pub const DEFAULT_CAP: usize = 4096;
pub const DEFAULT_EPS: f64 = 1e-6;

/// Hard stop for the bound iteration; a γ-contraction never gets close.
pub const MAX_ENVELOPE_ITERATIONS: usize = 1_000_000;

/// Image points generated per call before switching to sampled combinations,
/// expressed as a multiple of the particle cap.
const ENUMERATION_FACTOR: usize = 8;

/// Finite point-cloud stand-in for a compact set of value vectors, with its
/// cached coordinate-wise envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSetParticles {
    particles: Vec<ValueVector>,
    cap: usize,
    lower: ValueVector,
    upper: ValueVector,
    exact: bool,
}

impl ValueSetParticles {
    /// Clouds larger than `cap` are thinned immediately.
    pub fn new(particles: Vec<ValueVector>, cap: usize) -> Result<Self> {
        let first = particles.first().ok_or(Error::Empty("particle set"))?;
        let n = first.len();
        for p in &particles {
            check_len("states", n, p.len())?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    field: "particle".into(),
                });
            }
        }
        let particles = if particles.len() > cap {
            check_cap(cap, n)?;
            thin(particles, cap)
        } else {
            particles
        };
        Ok(Self::from_points(particles, cap, true))
    }

    pub fn singleton(v: ValueVector, cap: usize) -> Self {
        Self::from_points(vec![v], cap.max(1), true)
    }

    fn from_points(particles: Vec<ValueVector>, cap: usize, exact: bool) -> Self {
        let (lower, upper) = envelope_of(&particles);
        ValueSetParticles {
            particles,
            cap,
            lower,
            upper,
            exact,
        }
    }

    pub fn particles(&self) -> &[ValueVector] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn states(&self) -> usize {
        self.lower.len()
    }

    /// Coordinate-wise `(min, max)` over the particles.
    pub fn envelope(&self) -> (&ValueVector, &ValueVector) {
        (&self.lower, &self.upper)
    }

    /// `false` once a step had to sample the image instead of enumerating it
    /// (mixture vertices, or a product too large to list).
    pub fn is_exact(&self) -> bool {
        self.exact
    }
}

fn check_cap(cap: usize, states: usize) -> Result<()> {
    if cap < 2 * states {
        return Err(Error::CapTooSmall {
            cap,
            required: 2 * states,
        });
    }
    Ok(())
}

fn envelope_of(points: &[ValueVector]) -> (ValueVector, ValueVector) {
    let n = points[0].len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for p in points {
        for s in 0..n {
            lo[s] = lo[s].min(p[s]);
            hi[s] = hi[s].max(p[s]);
        }
    }
    (
        ValueVector::from_vec_unchecked(lo),
        ValueVector::from_vec_unchecked(hi),
    )
}

/// `d(W, V) = min_{V in set} ||W - V||_inf`.
pub fn point_to_set_distance(w: &ValueVector, set: &ValueSetParticles) -> f64 {
    set.particles
        .iter()
        .map(|v| w.sup_distance(v))
        .fold(f64::INFINITY, f64::min)
}

/// Hausdorff distance between two clouds under the sup-norm.
pub fn hausdorff_distance(a: &ValueSetParticles, b: &ValueSetParticles) -> f64 {
    let directed = |x: &ValueSetParticles, y: &ValueSetParticles| {
        x.particles
            .iter()
            .map(|p| point_to_set_distance(p, y))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Keeps at most `cap` points: first the points attaining each coordinate's
/// minimum and maximum (lowest index on ties), then greedy farthest-point
/// selection in the sup-norm. Survivors keep their original order.
pub fn thin(points: Vec<ValueVector>, cap: usize) -> Vec<ValueVector> {
    if points.len() <= cap {
        return points;
    }
    let n = points[0].len();
    let mut chosen = vec![false; points.len()];
    let mut selected: Vec<usize> = Vec::new();
    for s in 0..n {
        let lo = argbest(&points, s, |a, b| a < b);
        let hi = argbest(&points, s, |a, b| a > b);
        for i in [lo, hi] {
            if !chosen[i] {
                chosen[i] = true;
                selected.push(i);
            }
        }
    }
    let mut dist = vec![f64::INFINITY; points.len()];
    for &j in &selected {
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sup_distance(&points[i], &points[j]));
        }
    }
    while selected.len() < cap {
        let mut best = None;
        let mut best_d = 0.0;
        for (i, &d) in dist.iter().enumerate() {
            if !chosen[i] && d > best_d {
                best = Some(i);
                best_d = d;
            }
        }
        let Some(j) = best else { break };
        chosen[j] = true;
        selected.push(j);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sup_distance(&points[i], &points[j]));
        }
    }
    points
        .into_iter()
        .zip(chosen)
        .filter_map(|(p, keep)| keep.then_some(p))
        .collect()
}

fn argbest(points: &[ValueVector], s: usize, better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for i in 1..points.len() {
        if better(points[i][s], points[best][s]) {
            best = i;
        }
    }
    best
}

/// Raw image `{h(V, m) : V in cloud, m in M}` before thinning. The flag is
/// `false` when the image was sampled rather than enumerated.
pub fn image_cloud(
    cloud: &ValueSetParticles,
    ps: &ParamSet,
    op: &ValueOperator,
) -> Result<(Vec<ValueVector>, bool)> {
    ps.check_operator(op)?;
    check_len("states", ps.states(), cloud.states())?;
    let budget = cloud.cap.saturating_mul(ENUMERATION_FACTOR).max(cloud.cap);
    let gamma = ps.discount();
    match ps.kind() {
        ParamKind::Finite(members) => {
            let mut out = Vec::with_capacity(cloud.len() * members.len());
            for v in &cloud.particles {
                for m in members {
                    let img = (0..ps.states())
                        .map(|s| op.apply_state(s, v, m.block(s), gamma))
                        .collect();
                    out.push(ValueVector::from_vec_unchecked(img));
                }
            }
            Ok((out, true))
        }
        ParamKind::SRectFinite(_) | ParamKind::SRectMixture(_) => {
            // The state-s coordinate only depends on the state-s block, so the
            // image of one particle is the product of per-state value lists.
            let per_particle: Vec<Vec<Vec<f64>>> = cloud
                .particles
                .iter()
                .map(|v| {
                    (0..ps.states())
                        .map(|s| {
                            let mut vals = ps.state_values(op, s, v);
                            vals.sort_by(f64::total_cmp);
                            vals.dedup();
                            vals
                        })
                        .collect()
                })
                .collect();
            let total = per_particle.iter().fold(0u128, |acc, lists| {
                acc.saturating_add(lists.iter().fold(1u128, |p, l| p.saturating_mul(l.len() as u128)))
            });
            let mut exact = !ps.is_mixture();
            let mut out = Vec::new();
            if total <= budget as u128 {
                for lists in &per_particle {
                    let sizes = lists.iter().map(Vec::len).collect();
                    for idx in ProductIter::new(sizes) {
                        out.push(pick(lists, &idx));
                    }
                }
            } else {
                exact = false;
                let quota = (budget / cloud.len()).max(2);
                let mut rng = ChaCha8Rng::seed_from_u64(0x5e7_0b5);
                for lists in &per_particle {
                    let n = lists.len();
                    out.push(pick(lists, &vec![0; n]));
                    out.push(pick(lists, &lists.iter().map(|l| l.len() - 1).collect::<Vec<_>>()));
                    for _ in 2..quota {
                        let idx: Vec<usize> = lists
                            .iter()
                            .map(|l| if l.len() > 1 { rng.gen_range(0..l.len()) } else { 0 })
                            .collect();
                        out.push(pick(lists, &idx));
                    }
                }
            }
            Ok((out, exact))
        }
    }
}

fn pick(lists: &[Vec<f64>], idx: &[usize]) -> ValueVector {
    ValueVector::from_vec_unchecked(lists.iter().zip(idx).map(|(l, &i)| l[i]).collect())
}

/// One step of the set-valued operator `H(V) = {h(V, m) : V in V, m in M}`,
/// thinned back to the cloud's cap.
pub fn set_operator_apply(
    cloud: &ValueSetParticles,
    ps: &ParamSet,
    op: &ValueOperator,
) -> Result<ValueSetParticles> {
    check_cap(cloud.cap, ps.states())?;
    let (image, exact) = image_cloud(cloud, ps, op)?;
    let thinned = thin(image, cloud.cap);
    Ok(ValueSetParticles::from_points(
        thinned,
        cloud.cap,
        exact && cloud.exact,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    Lower,
    Upper,
}

/// Bound operator: `inf_m h_s(V, m)` (lower) or `sup_m h_s(V, m)` (upper),
/// per state.
///
/// Finite and s-rectangular finite sets are enumerated. For mixture sets the
/// policy-evaluation operator is linear in the parameters, so both bounds sit
/// at vertices; the Bellman lower bound is a minimum of concave functions and
/// also sits at a vertex, while the Bellman upper bound is a max-min over the
/// hull and is solved exactly as a matrix game.
pub fn bound_operator_apply(
    v: &ValueVector,
    ps: &ParamSet,
    op: &ValueOperator,
    direction: Direction,
) -> Result<ValueVector> {
    ps.check_operator(op)?;
    check_len("states", ps.states(), v.len())?;
    let mut out = Vec::with_capacity(ps.states());
    for s in 0..ps.states() {
        let value = match (ps.kind(), op, direction) {
            (ParamKind::SRectMixture(_), ValueOperator::Bellman, Direction::Upper)
                if ps.option_count(s) > 1 =>
            {
                state_game(ps, s, v)?.value
            }
            (_, _, Direction::Lower) => ps
                .state_values(op, s, v)
                .into_iter()
                .fold(f64::INFINITY, f64::min),
            (_, _, Direction::Upper) => ps
                .state_values(op, s, v)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max),
        };
        out.push(value);
    }
    Ok(ValueVector::from_vec_unchecked(out))
}

/// One row of the envelope iteration trace.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TraceRow {
    pub k: usize,
    pub lower: ValueVector,
    pub upper: ValueVector,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EnvelopeReport {
    pub operator: &'static str,
    pub variant: &'static str,
    /// Approximates the lower bound of the fixed-point set.
    pub lower: ValueVector,
    /// Approximates the upper bound of the fixed-point set.
    pub upper: ValueVector,
    pub iterations: usize,
    /// Last residual `max(||lower^k - lower^{k-1}||, ||upper^k - upper^{k-1}||)`.
    pub residual: f64,
    /// Both returned bounds are within `eps` of the true bounds.
    pub eps: f64,
    pub discount: f64,
    pub trace: Vec<TraceRow>,
    pub containment: ContainmentProbeReport,
}

impl EnvelopeReport {
    /// Over-approximation box `prod_s [lower_s - eps, upper_s + eps]`.
    pub fn inflated_box(&self) -> EnvelopeBox {
        EnvelopeBox {
            lower: ValueVector::from_vec_unchecked(self.lower.iter().map(|v| v - self.eps).collect()),
            upper: ValueVector::from_vec_unchecked(self.upper.iter().map(|v| v + self.eps).collect()),
        }
    }

    /// `e^{k+1} / e^k` for consecutive trace rows (k >= 1); `0/0` reads as 0.
    pub fn residual_ratios(&self) -> Vec<f64> {
        self.trace
            .windows(2)
            .map(|w| {
                if w[0].residual == 0.0 {
                    if w[1].residual == 0.0 { 0.0 } else { f64::INFINITY }
                } else {
                    w[1].residual / w[0].residual
                }
            })
            .collect()
    }
}

/// Axis-aligned box in value space.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EnvelopeBox {
    pub lower: ValueVector,
    pub upper: ValueVector,
}

impl EnvelopeBox {
    /// Sup-norm distance from `v` to the box (zero inside).
    pub fn distance(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .fold(0.0, |m, (x, (lo, hi))| m.max(lo - x).max(x - hi))
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        self.distance(v) == 0.0
    }
}

/// Iterates a single bound operator from `v0` until the contraction
/// certificate `γ/(1-γ) ||V^k - V^{k-1}|| < eps` holds.
pub fn iterate_bound(
    ps: &ParamSet,
    op: &ValueOperator,
    direction: Direction,
    v0: &ValueVector,
    eps: f64,
) -> Result<(ValueVector, usize, f64)> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidTolerance(eps));
    }
    let factor = ps.discount() / (1.0 - ps.discount());
    let mut v = v0.clone();
    for k in 1..=MAX_ENVELOPE_ITERATIONS {
        let next = bound_operator_apply(&v, ps, op, direction)?;
        let e = next.sup_distance(&v);
        v = next;
        if factor * e < eps {
            return Ok((v, k, e));
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ENVELOPE_ITERATIONS,
    })
}

/// Bound approximation of the fixed-point set of `H`.
///
/// Runs the lower and upper bound operators side by side from `v0` and stops
/// once `γ/(1-γ) e^k < eps`, where `e^k` is the larger of the two sup-norm
/// steps. At that point both iterates are within `eps` of the fixed points of
/// the bound operators. The containment condition is probed at the two
/// returned endpoints.
pub fn algorithm1_envelope(
    ps: &ParamSet,
    op: &ValueOperator,
    v0: &ValueVector,
    eps: f64,
) -> Result<EnvelopeReport> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidTolerance(eps));
    }
    ps.check_operator(op)?;
    check_len("states", ps.states(), v0.len())?;
    let gamma = ps.discount();
    let factor = gamma / (1.0 - gamma);
    let mut lower = v0.clone();
    let mut upper = v0.clone();
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut k = 0;
    while factor * residual >= eps {
        if k == MAX_ENVELOPE_ITERATIONS {
            return Err(Error::NoConvergence { iterations: k });
        }
        let next_lower = bound_operator_apply(&lower, ps, op, Direction::Lower)?;
        let next_upper = bound_operator_apply(&upper, ps, op, Direction::Upper)?;
        residual = next_lower
            .sup_distance(&lower)
            .max(next_upper.sup_distance(&upper));
        lower = next_lower;
        upper = next_upper;
        k += 1;
        trace.push(TraceRow {
            k,
            lower: lower.clone(),
            upper: upper.clone(),
            residual,
        });
    }
    let containment = probe_containment_vertices(
        ps,
        op,
        &[lower.clone(), upper.clone()],
        DEFAULT_PROBE_SLACK,
    )?;
    Ok(EnvelopeReport {
        operator: op.name(),
        variant: ps.variant_name(),
        lower,
        upper,
        iterations: k,
        residual,
        eps,
        discount: gamma,
        trace,
        containment,
    })
}
