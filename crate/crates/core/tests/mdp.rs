mod common;

use common::*;
use proptest::prelude::*;
use setmdp_core::mdp::{bellman_apply, greedy_policy, policy_eval_apply, value_iteration};
use setmdp_core::{Error, MdpInstance, Policy, ValueOperator, ValueVector};

fn vv(x: &[f64]) -> ValueVector {
    ValueVector::new(x.to_vec()).unwrap()
}

#[test]
fn zero_cost_halves_value() {
    let m = MdpInstance::new(0.5, vec![vec![0.0]], vec![vec![vec![1.0]]]).unwrap();
    let pi = Policy::deterministic(&[0], 1).unwrap();
    assert_eq!(policy_eval_apply(&vv(&[4.0]), &pi, &m).unwrap().as_slice(), &[2.0]);
}

#[test]
fn absorbing_unit_cost_chain() {
    let m = MdpInstance::new(0.9, vec![vec![1.0]], vec![vec![vec![1.0]]]).unwrap();
    let pi = Policy::deterministic(&[0], 1).unwrap();
    let out = policy_eval_apply(&vv(&[10.0]), &pi, &m).unwrap();
    assert!((out[0] - 10.0).abs() < 1e-12);
    let vi = value_iteration(&m, &ValueOperator::Bellman, &ValueVector::zeros(1), 1e-9).unwrap();
    assert!((vi.value[0] - 10.0).abs() < 1e-9);
}

#[test]
fn mixed_policy_matches_straight_line_oracle() {
    let mut r = rng(11);
    for _ in 0..20 {
        let m = random_mdp(&mut r, 2, 2, 0.8);
        let pi = random_policy(&mut r, 2, 2);
        let v = random_values(&mut r, 2, 5.0);
        let out = policy_eval_apply(&v, &pi, &m).unwrap();
        for s in 0..2 {
            let mut expect = 0.0;
            for a in 0..2 {
                let p = pi.row(s)[a];
                let next: f64 = (0..2).map(|t| m.transition_row(s, a)[t] * v[t]).sum();
                expect += p * m.cost(s, a) + 0.8 * p * next;
            }
            assert!((out[s] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn bellman_picks_cheaper_action_and_breaks_ties_low() {
    let m = MdpInstance::new(0.5, vec![vec![3.0, 1.0]], vec![vec![vec![1.0], vec![1.0]]]).unwrap();
    assert_eq!(bellman_apply(&vv(&[0.0]), &m).unwrap().as_slice(), &[1.0]);
    assert_eq!(greedy_policy(&vv(&[0.0]), &m).unwrap().row(0), &[0.0, 1.0]);
    let tie = MdpInstance::new(0.5, vec![vec![1.0, 1.0]], vec![vec![vec![1.0], vec![1.0]]]).unwrap();
    assert_eq!(greedy_policy(&vv(&[0.0]), &tie).unwrap().row(0), &[1.0, 0.0]);
}

#[test]
fn zero_cost_converges_on_first_check() {
    let m = MdpInstance::new(0.9, vec![vec![0.0, 0.0]; 2], vec![vec![vec![0.5, 0.5]; 2]; 2]).unwrap();
    let out = value_iteration(&m, &ValueOperator::Bellman, &ValueVector::zeros(2), 1e-6).unwrap();
    assert_eq!(out.iterations, 1);
    assert_eq!(out.value.as_slice(), &[0.0, 0.0]);
}

#[test]
fn three_state_optimum_matches_policy_enumeration() {
    let mut r = rng(3);
    for _ in 0..25 {
        let m = random_mdp(&mut r, 3, 2, 0.9);
        let (exact, best) = brute_force_optimum(&m);
        let eps = 1e-8;
        let vi = value_iteration(&m, &ValueOperator::Bellman, &ValueVector::zeros(3), eps).unwrap();
        assert!(sup(&vi.value, &exact) < eps, "{:?} vs {:?}", vi.value, exact);
        let pi = greedy_policy(&vi.value, &m).unwrap();
        // The greedy policy is optimal: its exact value equals the optimum.
        let greedy_value = exact_policy_value(&m, &pi);
        assert!(sup(&greedy_value, &exact) < 1e-7);
        let _ = best;
    }
}

#[test]
fn policy_evaluation_converges_to_linear_solve() {
    let mut r = rng(5);
    for _ in 0..20 {
        let m = random_mdp(&mut r, 4, 3, 0.95);
        let pi = random_policy(&mut r, 4, 3);
        let exact = exact_policy_value(&m, &pi);
        let vi = value_iteration(&m, &ValueOperator::Evaluate(pi), &ValueVector::zeros(4), 1e-7).unwrap();
        assert!(sup(&vi.value, &exact) < 1e-7);
    }
}

#[test]
fn malformed_rows_name_the_field() {
    let err = MdpInstance::new(0.9, vec![vec![1.0, 1.0]], vec![vec![vec![1.0], vec![0.8]]]).unwrap_err();
    assert!(err.to_string().contains("P[0][1]"), "{err}");
    let err = MdpInstance::new(
        0.9,
        vec![vec![1.0], vec![1.0]],
        vec![vec![vec![1.2, -0.2]], vec![vec![0.0, 1.0]]],
    )
    .unwrap_err();
    assert!(matches!(err, Error::NegativeEntry { .. }));
    assert!(matches!(
        MdpInstance::new(1.0, vec![vec![1.0]], vec![vec![vec![1.0]]]),
        Err(Error::InvalidDiscount(_))
    ));
    let m = MdpInstance::new(0.9, vec![vec![1.0]], vec![vec![vec![1.0]]]).unwrap();
    assert!(matches!(
        value_iteration(&m, &ValueOperator::Bellman, &ValueVector::zeros(1), 0.0),
        Err(Error::InvalidTolerance(_))
    ));
    assert!(matches!(
        bellman_apply(&ValueVector::zeros(2), &m),
        Err(Error::DimensionMismatch { axis: "states", .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operators_contract(seed in any::<u64>(), gamma in 0.05f64..0.99) {
        let mut r = rng(seed);
        let m = random_mdp(&mut r, 4, 3, gamma);
        let pi = random_policy(&mut r, 4, 3);
        let (x, y) = (random_values(&mut r, 4, 50.0), random_values(&mut r, 4, 50.0));
        let d = x.sup_distance(&y);
        for op in [ValueOperator::Bellman, ValueOperator::Evaluate(pi)] {
            let (fx, fy) = (op.apply(&x, &m).unwrap(), op.apply(&y, &m).unwrap());
            prop_assert!(fx.sup_distance(&fy) <= gamma * d * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn operators_preserve_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = random_mdp(&mut r, 4, 3, 0.9);
        let pi = random_policy(&mut r, 4, 3);
        let x = random_values(&mut r, 4, 50.0);
        let bump = random_values(&mut r, 4, 5.0);
        let y = ValueVector::new(x.iter().zip(bump.iter()).map(|(a, b)| a + b.abs()).collect()).unwrap();
        for op in [ValueOperator::Bellman, ValueOperator::Evaluate(pi)] {
            prop_assert!(op.apply(&x, &m).unwrap().le_within(&op.apply(&y, &m).unwrap(), 0.0));
        }
    }

    #[test]
    fn bellman_lipschitz_in_parameters(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = random_mdp(&mut r, 3, 2, 0.9);
        let n = random_mdp(&mut r, 3, 2, 0.9);
        let v = random_values(&mut r, 3, 30.0);
        let k = (0.9 * v.sup_norm()).max(1.0);
        let d = m.parameter_distance(&n).unwrap();
        let gap = bellman_apply(&v, &m).unwrap().sup_distance(&bellman_apply(&v, &n).unwrap());
        prop_assert!(gap <= k * d + 1e-9);
    }

    #[test]
    fn bellman_below_every_policy(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = random_mdp(&mut r, 4, 3, 0.9);
        let pi = random_policy(&mut r, 4, 3);
        let v = random_values(&mut r, 4, 30.0);
        let f = bellman_apply(&v, &m).unwrap();
        let g = policy_eval_apply(&v, &pi, &m).unwrap();
        prop_assert!(f.le_within(&g, 1e-12));
    }
}
