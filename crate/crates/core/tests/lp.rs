mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use setmdp_core::lp::{lp_solve, LpOutcome, LpProblem, Relation};

fn build(obj: &[f64], rows: &[Row]) -> LpProblem {
    rows.iter().fold(LpProblem::new(obj.to_vec()), |p, r| p.with(r.coeffs.clone(), r.relation, r.rhs))
}

#[test]
fn textbook_problem() {
    // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  36 at (2, 6)
    let p = LpProblem::new(vec![-3.0, -5.0])
        .with(vec![1.0, 0.0], Relation::Le, 4.0)
        .with(vec![0.0, 2.0], Relation::Le, 12.0)
        .with(vec![3.0, 2.0], Relation::Le, 18.0);
    let (x, value) = match lp_solve(&p).unwrap() {
        LpOutcome::Optimal { x, value } => (x, value),
        other => panic!("{other:?}"),
    };
    assert!((value + 36.0).abs() < 1e-9);
    assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
}

#[test]
fn equality_constraints() {
    // min x + 2y + 3z s.t. x + y + z = 1, y - z = 0.25
    let p = LpProblem::new(vec![1.0, 2.0, 3.0])
        .with(vec![1.0, 1.0, 1.0], Relation::Eq, 1.0)
        .with(vec![0.0, 1.0, -1.0], Relation::Eq, 0.25);
    let (x, value) = lp_solve(&p).unwrap().optimal().map(|(x, v)| (x.to_vec(), v)).unwrap();
    assert!((value - 1.25).abs() < 1e-9, "{value} {x:?}");
}

#[test]
fn infeasible_and_unbounded() {
    let p = LpProblem::new(vec![1.0, 1.0])
        .with(vec![1.0, 1.0], Relation::Le, 1.0)
        .with(vec![1.0, 1.0], Relation::Ge, 2.0);
    assert_eq!(lp_solve(&p).unwrap(), LpOutcome::Infeasible);
    let p = LpProblem::new(vec![-1.0, 0.0]).with(vec![0.0, 1.0], Relation::Le, 1.0);
    assert_eq!(lp_solve(&p).unwrap(), LpOutcome::Unbounded);
    let p = LpProblem::new(vec![1.0]).with(vec![-1.0], Relation::Le, -2.0);
    let (_, v) = lp_solve(&p).unwrap().optimal().map(|(x, v)| (x.to_vec(), v)).unwrap();
    assert!((v - 2.0).abs() < 1e-12);
}

#[test]
fn malformed_problems_are_rejected() {
    let p = LpProblem::new(vec![1.0, 1.0]).with(vec![1.0], Relation::Le, 1.0);
    assert!(lp_solve(&p).is_err());
    let p = LpProblem::new(vec![f64::NAN]);
    assert!(lp_solve(&p).is_err());
}

#[test]
fn degenerate_problem_terminates() {
    // Several constraints tight at the origin.
    let p = LpProblem::new(vec![-0.75, 150.0, -0.02, 6.0])
        .with(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0)
        .with(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0)
        .with(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
    let (_, v) = lp_solve(&p).unwrap().optimal().map(|(x, v)| (x.to_vec(), v)).unwrap();
    assert!((v + 0.05).abs() < 1e-9, "{v}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_vertex_enumeration(seed in any::<u64>(), n in 2usize..5, m in 2usize..5) {
        let (obj, rows) = random_bounded_lp(seed, n, m);
        let oracle = vertex_oracle(&obj, &rows);
        match (lp_solve(&build(&obj, &rows)).unwrap(), oracle) {
            (LpOutcome::Optimal { x, value }, Some(best)) => {
                prop_assert!((value - best).abs() <= 1e-7 * (1.0 + best.abs()), "{value} vs {best}");
                prop_assert!(x.iter().all(|&v| v >= -1e-9));
                for r in &rows {
                    let lhs: f64 = r.coeffs.iter().zip(&x).map(|(a, b)| a * b).sum();
                    match r.relation {
                        Relation::Le => prop_assert!(lhs <= r.rhs + 1e-7),
                        Relation::Ge => prop_assert!(lhs >= r.rhs - 1e-7),
                        Relation::Eq => prop_assert!((lhs - r.rhs).abs() <= 1e-7),
                    }
                }
            }
            (LpOutcome::Infeasible, None) => {}
            (got, want) => prop_assert!(false, "solver {got:?}, oracle {want:?}"),
        }
    }

    #[test]
    fn strong_duality(seed in any::<u64>(), n in 1usize..6, m in 1usize..6) {
        // min c.x s.t. Ax >= b, x >= 0  and  max b.y s.t. A^T y <= c, y >= 0
        let mut r = rng(seed);
        let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| r.gen_range(0.1..4.0)).collect()).collect();
        let b: Vec<f64> = (0..m).map(|_| r.gen_range(0.0..5.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| r.gen_range(0.1..5.0)).collect();
        let primal = a.iter().zip(&b).fold(LpProblem::new(c.clone()), |p, (row, &bi)| p.with(row.clone(), Relation::Ge, bi));
        let dual = (0..n).fold(LpProblem::new(b.iter().map(|v| -v).collect()), |p, j| {
            p.with(a.iter().map(|row| row[j]).collect(), Relation::Le, c[j])
        });
        let pv = lp_solve(&primal).unwrap().optimal().unwrap().1;
        let dv = -lp_solve(&dual).unwrap().optimal().unwrap().1;
        prop_assert!((pv - dv).abs() <= 1e-8 * (1.0 + pv.abs()), "{pv} vs {dv}");
    }
}
