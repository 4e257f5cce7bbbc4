//! Small dense linear programs: `min c^T x` subject to linear constraints and
//! `x >= 0`, solved with a two-phase tableau simplex under Bland's rule.
//!
//! The problems built by this crate have at most a few dozen columns. Reduced
//! costs are recomputed from scratch on every pivot, and Bland's rule prevents
//! cycling on degenerate problems.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vector::check_len;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Constraint {
            coeffs,
            relation,
            rhs,
        }
    }
}

/// `min objective^T x` s.t. `constraints`, `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<(&[f64], f64)> {
        match self {
            LpOutcome::Optimal { x, value } => Some((x, *value)),
            _ => None,
        }
    }
}

impl LpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        LpProblem {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn with(mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        self.constraints.push(Constraint::new(coeffs, relation, rhs));
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if n == 0 {
            return Err(Error::Empty("objective"));
        }
        let finite = |v: &f64| v.is_finite();
        if !self.objective.iter().all(finite) {
            return Err(Error::NonFinite {
                field: "objective".into(),
            });
        }
        for (i, c) in self.constraints.iter().enumerate() {
            check_len("variables", n, c.coeffs.len())?;
            if !c.coeffs.iter().all(finite) || !c.rhs.is_finite() {
                return Err(Error::NonFinite {
                    field: alloc::format!("constraints[{i}]"),
                });
            }
        }
        Ok(())
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let mut d = cost[j];
        for (i, r) in self.rows.iter().enumerate() {
            d -= cost[self.basis[i]] * r[j];
        }
        d
    }

    /// Runs Bland-rule pivots for `cost` over the `allowed` columns.
    /// Returns `false` when the objective is unbounded below.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let entering = (0..self.width).find(|&j| {
                allowed[j] && !self.basis.contains(&j) && self.reduced_cost(cost, j) < -COST_TOL
            });
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(i) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * br.abs().max(1.0);
                        if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            match leave {
                Some((row, _)) => self.pivot(row, col),
                None => return Ok(false),
            }
        }
        Err(Error::NoConvergence {
            iterations: MAX_PIVOTS,
        })
    }
}

/// Solves `p`. Infeasible and unbounded problems are reported as outcomes.
pub fn lp_solve(p: &LpProblem) -> Result<LpOutcome> {
    p.validate()?;
    let n = p.objective.len();
    // Normalise to non-negative right-hand sides.
    let cons: Vec<(Vec<f64>, Relation, f64)> = p
        .constraints
        .iter()
        .map(|c| {
            if c.rhs < 0.0 {
                let flipped = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (c.coeffs.iter().map(|v| -v).collect(), flipped, -c.rhs)
            } else {
                (c.coeffs.clone(), c.relation, c.rhs)
            }
        })
        .collect();
    let m = cons.len();
    let n_slack = cons.iter().filter(|c| c.1 != Relation::Eq).count();
    let n_art = cons.iter().filter(|c| c.1 != Relation::Le).count();
    let width = n + n_slack + n_art;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut next_slack, mut next_art) = (n, n + n_slack);
    for (coeffs, rel, rhs) in &cons {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(coeffs);
        row[width] = *rhs;
        match rel {
            Relation::Le => {
                row[next_slack] = 1.0;
                basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        rows.push(row);
    }
    let mut t = Tableau { rows, basis, width };
    let is_art = |j: usize| j >= n + n_slack;

    if n_art > 0 {
        let mut phase1 = vec![0.0; width];
        for c in phase1.iter_mut().skip(n + n_slack) {
            *c = 1.0;
        }
        let all = vec![true; width];
        t.optimize(&phase1, &all)?;
        let infeas: f64 = (0..t.rows.len())
            .filter(|&i| is_art(t.basis[i]))
            .map(|i| t.rhs(i))
            .sum();
        let scale = cons.iter().fold(1.0f64, |s, c| s.max(c.2.abs()));
        if infeas > FEAS_TOL * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < t.rows.len() {
            if is_art(t.basis[i]) {
                let col = (0..n + n_slack).find(|&j| t.rows[i][j].abs() > 1e-9);
                match col {
                    Some(j) => t.pivot(i, j),
                    None => {
                        t.rows.remove(i);
                        t.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut phase2 = vec![0.0; width];
    phase2[..n].copy_from_slice(&p.objective);
    let allowed: Vec<bool> = (0..width).map(|j| !is_art(j)).collect();
    if !t.optimize(&phase2, &allowed)? {
        return Ok(LpOutcome::Unbounded);
    }
    let mut x = vec![0.0; n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs(i).max(0.0);
        }
    }
    let value = x.iter().zip(&p.objective).map(|(a, b)| a * b).sum();
    Ok(LpOutcome::Optimal { x, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_lower_bound() {
        let p = LpProblem::new(vec![1.0]).with(vec![1.0], Relation::Ge, 3.0);
        let (x, v) = lp_solve(&p).unwrap().optimal().map(|(x, v)| (x.to_vec(), v)).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-12);
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let p = LpProblem::new(vec![1.0])
            .with(vec![1.0], Relation::Ge, 3.0)
            .with(vec![1.0], Relation::Le, 2.0);
        assert_eq!(lp_solve(&p).unwrap(), LpOutcome::Infeasible);
        let p = LpProblem::new(vec![-1.0, 0.0]).with(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(lp_solve(&p).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_redundant_constraints_terminate() {
        // Classic degenerate vertex at the origin with duplicated rows.
        let p = LpProblem::new(vec![-0.75, 150.0, -0.02, 6.0])
            .with(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0)
            .with(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0)
            .with(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0)
            .with(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0)
            .with(vec![1.0, 1.0, 1.0, 1.0], Relation::Eq, 1.0)
            .with(vec![2.0, 2.0, 2.0, 2.0], Relation::Eq, 2.0);
        let out = lp_solve(&p).unwrap();
        let (x, v) = out.optimal().unwrap();
        assert!(x.iter().all(|v| *v >= 0.0));
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(v.is_finite());
    }

    #[test]
    fn negative_rhs_is_normalised() {
        // min x + y s.t. -x - y <= -2  (i.e. x + y >= 2)
        let p = LpProblem::new(vec![1.0, 1.0]).with(vec![-1.0, -1.0], Relation::Le, -2.0);
        let (_, v) = lp_solve(&p).unwrap().optimal().map(|(x, v)| (x.to_vec(), v)).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = LpProblem::new(vec![1.0, 1.0]).with(vec![1.0], Relation::Le, 1.0);
        assert!(matches!(lp_solve(&p), Err(Error::DimensionMismatch { .. })));
    }
}
