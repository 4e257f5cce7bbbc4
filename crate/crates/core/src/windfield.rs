//! Path planning for a balloon drifting across a gridded wind field.
//!
//! Cell `(i, j)` has `i` growing to the right and `j` growing upwards; its state
//! index is `i * height + j`. Action 0 holds position; actions 1 to 8 thrust
//! towards the eight neighbours, counter-clockwise starting east.
//!
//! The grid is split into three wind regions:
//!
//! * calm (left and right thirds): a move lands uniformly on the target
//!   neighbour or one of the two neighbours 45 degrees either side;
//! * gusty (centre block): the balloon lands uniformly on any neighbour,
//!   whatever the action;
//! * unreliable (the rest): two wind trends. Under the first the action is
//!   executed exactly; under the second the balloon is pushed up or up-right
//!   with equal probability, whatever the action.
//!
//! Neighbours that fall off the grid are dropped and the remaining ones
//! renormalised; if none remain the balloon stays put.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{validate_discount, value_iteration, MdpInstance, ValueOperator};
use crate::uncertainty::{ParamSet, StateParams};
use crate::vector::ValueVector;

/// Offsets of the nine actions.
pub const ACTIONS: [(i64, i64); 9] = [
    (0, 0),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Region {
    Calm,
    Gusty,
    Unreliable,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WindConfig {
    pub width: usize,
    pub height: usize,
    pub target: (usize, usize),
    pub discount: f64,
    /// Cost per unit of thrust.
    pub fuel_weight: f64,
}

impl Default for WindConfig {
    fn default() -> Self {
        WindConfig {
            width: 9,
            height: 9,
            target: (8, 8),
            discount: 0.9,
            fuel_weight: 0.5,
        }
    }
}

impl WindConfig {
    fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidConfig(alloc::format!(
                "grid must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        if self.target.0 >= self.width || self.target.1 >= self.height {
            return Err(Error::InvalidConfig(alloc::format!(
                "target {:?} lies outside the {}x{} grid",
                self.target, self.width, self.height
            )));
        }
        if !(self.fuel_weight >= 0.0 && self.fuel_weight.is_finite()) {
            return Err(Error::InvalidConfig("fuel weight must be non-negative".into()));
        }
        validate_discount(self.discount)
    }
}

/// Signed grid coordinates, possibly off the grid.
type Cell = (i64, i64);

/// Band `[round(n/3), round(2n/3))` of a side of length `n`.
fn middle_band(n: usize) -> (usize, usize) {
    ((2 * n + 3) / 6, (4 * n + 3) / 6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindScenario {
    pub config: WindConfig,
    regions: Vec<Region>,
    cost: Vec<f64>,
    /// Transition rows under the first and second wind trend, flat `S x A x S`.
    trends: [Vec<f64>; 2],
}

/// Builds the scenario for `config`.
pub fn build_scenario(config: &WindConfig) -> Result<WindScenario> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let s_count = w * h;
    let a_count = ACTIONS.len();
    let (ilo, ihi) = middle_band(w);
    let (jlo, jhi) = middle_band(h);
    let mut regions = Vec::with_capacity(s_count);
    for i in 0..w {
        for j in 0..h {
            let region = if i < ilo || i >= ihi {
                Region::Calm
            } else if (jlo..jhi).contains(&j) {
                Region::Gusty
            } else {
                Region::Unreliable
            };
            regions.push(region);
        }
    }

    let mut cost = vec![0.0; s_count * a_count];
    let mut trends = [vec![0.0; s_count * a_count * s_count], vec![0.0; s_count * a_count * s_count]];
    let (ti, tj) = (config.target.0 as f64, config.target.1 as f64);
    for i in 0..w {
        for j in 0..h {
            let s = i * h + j;
            let here = (i as i64, j as i64);
            let dist = libm::hypot(i as f64 - ti, j as f64 - tj);
            for (a, &(di, dj)) in ACTIONS.iter().enumerate() {
                cost[s * a_count + a] = dist + if a == 0 { 0.0 } else { config.fuel_weight };
                let offset = |(oi, oj): (i64, i64)| (here.0 + oi, here.1 + oj);
                let (first, second): (Vec<Cell>, Vec<Cell>) = match regions[s] {
                    Region::Calm => {
                        let cells = if a == 0 {
                            vec![here]
                        } else {
                            let prev = if a == 1 { 8 } else { a - 1 };
                            let next = if a == 8 { 1 } else { a + 1 };
                            [prev, a, next].iter().map(|&b| offset(ACTIONS[b])).collect()
                        };
                        (cells.clone(), cells)
                    }
                    Region::Gusty => {
                        let cells: Vec<_> = ACTIONS[1..].iter().map(|&d| offset(d)).collect();
                        (cells.clone(), cells)
                    }
                    Region::Unreliable => (
                        vec![offset((di, dj))],
                        vec![offset((0, 1)), offset((1, 1))],
                    ),
                };
                for (t, cells) in [first, second].iter().enumerate() {
                    let base = (s * a_count + a) * s_count;
                    spread_uniform(&mut trends[t][base..base + s_count], cells, here, w, h);
                }
            }
        }
    }
    Ok(WindScenario {
        config: config.clone(),
        regions,
        cost,
        trends,
    })
}

fn spread_uniform(row: &mut [f64], cells: &[Cell], here: Cell, w: usize, h: usize) {
    let inside: Vec<Cell> = cells
        .iter()
        .copied()
        .filter(|&(i, j)| i >= 0 && j >= 0 && (i as usize) < w && (j as usize) < h)
        .collect();
    let targets = if inside.is_empty() { vec![here] } else { inside };
    let p = 1.0 / targets.len() as f64;
    for (i, j) in targets {
        row[i as usize * h + j as usize] += p;
    }
}

/// The scenario on a `width x height` grid with the same layout rules. The
/// target keeps its relative position (rounded).
pub fn shrink(config: &WindConfig, width: usize, height: usize) -> Result<WindScenario> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidConfig(alloc::format!(
            "grid must be at least 2x2, got {width}x{height}"
        )));
    }
    config.validate()?;
    let scale = |t: usize, from: usize, to: usize| {
        if from <= 1 {
            0
        } else {
            (2 * t * (to - 1) + (from - 1)) / (2 * (from - 1))
        }
    };
    let small = WindConfig {
        width,
        height,
        target: (
            scale(config.target.0, config.width, width),
            scale(config.target.1, config.height, height),
        ),
        ..config.clone()
    };
    build_scenario(&small)
}

impl WindScenario {
    pub fn states(&self) -> usize {
        self.config.width * self.config.height
    }

    pub fn actions(&self) -> usize {
        ACTIONS.len()
    }

    pub fn state_index(&self, i: usize, j: usize) -> usize {
        i * self.config.height + j
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s / self.config.height, s % self.config.height)
    }

    pub fn region(&self, s: usize) -> Region {
        self.regions[s]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn unreliable_states(&self) -> Vec<usize> {
        (0..self.states())
            .filter(|&s| self.regions[s] == Region::Unreliable)
            .collect()
    }

    /// The MDP in which every unreliable cell follows wind trend `trend` (0 or 1).
    pub fn vertex_mdp(&self, trend: usize) -> Result<MdpInstance> {
        let trans = self
            .trends
            .get(trend)
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("no wind trend {trend}")))?;
        MdpInstance::from_flat(
            self.states(),
            self.actions(),
            self.config.discount,
            self.cost.clone(),
            trans.clone(),
        )
    }

    fn per_state_lists(&self) -> Result<Vec<Vec<StateParams>>> {
        let (s_count, a_count) = (self.states(), self.actions());
        let block = |t: usize, s: usize| {
            let lo = s * a_count;
            StateParams::from_flat(
                s_count,
                self.cost[lo..lo + a_count].to_vec(),
                self.trends[t][lo * s_count..(lo + a_count) * s_count].to_vec(),
                "windfield",
            )
        };
        (0..s_count)
            .map(|s| {
                if self.regions[s] == Region::Unreliable {
                    Ok(vec![block(0, s)?, block(1, s)?])
                } else {
                    Ok(vec![block(0, s)?])
                }
            })
            .collect()
    }

    /// Each unreliable cell switches between the two trends independently.
    pub fn finite_param_set(&self) -> Result<ParamSet> {
        ParamSet::s_rect_finite(self.config.discount, self.per_state_lists()?)
    }

    /// Each unreliable cell may follow any mixture of the two trends.
    pub fn mixture_param_set(&self) -> Result<ParamSet> {
        ParamSet::s_rect_mixture(self.config.discount, self.per_state_lists()?)
    }
}

/// Empirical MDP from sampled wind vectors.
///
/// For every state and action, `samples` wind vectors are drawn: calm cells get
/// magnitude uniform in `[0, 0.5]` and direction uniform in `[0, 2π)`; gusty
/// cells magnitude 1 and uniform direction; unreliable cells magnitude 0 or 1
/// with equal odds and direction uniform in `[π/4, π/2]`. The balloon moves by
/// the rounded sum of its unit thrust and the wind, one cell at most per axis;
/// moves that leave the grid keep it in place.
pub fn sample_wind_mdp(scenario: &WindScenario, samples: usize, seed: u64) -> Result<MdpInstance> {
    if samples == 0 {
        return Err(Error::InvalidConfig("at least one wind sample is needed".into()));
    }
    let (w, h) = (scenario.config.width, scenario.config.height);
    let (s_count, a_count) = (scenario.states(), scenario.actions());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trans = vec![0.0; s_count * a_count * s_count];
    let unit = 1.0 / samples as f64;
    let pi = core::f64::consts::PI;
    for s in 0..s_count {
        let (i, j) = scenario.coords(s);
        for (a, &(di, dj)) in ACTIONS.iter().enumerate() {
            let norm = libm::hypot(di as f64, dj as f64);
            let (tx, ty) = if a == 0 { (0.0, 0.0) } else { (di as f64 / norm, dj as f64 / norm) };
            let base = (s * a_count + a) * s_count;
            for _ in 0..samples {
                let (mag, dir) = match scenario.regions[s] {
                    Region::Calm => (rng.gen_range(0.0..=0.5), rng.gen_range(0.0..2.0 * pi)),
                    Region::Gusty => (1.0, rng.gen_range(0.0..2.0 * pi)),
                    Region::Unreliable => (
                        if rng.gen_bool(0.5) { 1.0 } else { 0.0 },
                        rng.gen_range(pi / 4.0..=pi / 2.0),
                    ),
                };
                let step = |x: f64| libm::round(x).clamp(-1.0, 1.0) as i64;
                let ni = i as i64 + step(tx + mag * libm::cos(dir));
                let nj = j as i64 + step(ty + mag * libm::sin(dir));
                let dest = if ni >= 0 && nj >= 0 && (ni as usize) < w && (nj as usize) < h {
                    ni as usize * h + nj as usize
                } else {
                    s
                };
                trans[base + dest] += unit;
            }
        }
    }
    MdpInstance::from_flat(s_count, a_count, scenario.config.discount, scenario.cost.clone(), trans)
}

/// Optimal values of `count` independently sampled wind MDPs; sample `n` uses
/// seed `seed + n`.
pub fn sampled_optimal_values(
    scenario: &WindScenario,
    count: usize,
    samples: usize,
    seed: u64,
    eps: f64,
) -> Result<Vec<ValueVector>> {
    (0..count as u64)
        .map(|n| {
            let m = sample_wind_mdp(scenario, samples, seed.wrapping_add(n))?;
            value_iteration(&m, &ValueOperator::Bellman, &ValueVector::zeros(m.states()), eps)
                .map(|o| o.value)
        })
        .collect()
}
