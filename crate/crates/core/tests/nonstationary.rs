mod common;

use common::*;
use proptest::prelude::*;
use setmdp_core::nonstationary::{
    absorption_steps, apply_choice, mean_and_stdev, simulate, DeploymentKind, DeploymentSetup, ParamSchedule,
};
use setmdp_core::setops::{algorithm1_envelope, Direction, EnvelopeBox};
use setmdp_core::{Error, ParamChoice, ParamKind, ParamSet, ValueOperator, ValueVector};

fn unbounded_box(n: usize) -> EnvelopeBox {
    EnvelopeBox {
        lower: ValueVector::new(vec![-1e300; n]).unwrap(),
        upper: ValueVector::new(vec![1e300; n]).unwrap(),
    }
}

#[test]
fn singleton_trace_is_value_iteration() {
    let mut r = rng(41);
    let m = random_mdp(&mut r, 3, 2, 0.9);
    let ps = ParamSet::singleton(m.clone());
    let v0 = random_values(&mut r, 3, 5.0);
    let stats = simulate(&ps, &ValueOperator::Bellman, &ParamSchedule::iid(3, 20), &v0, &unbounded_box(3)).unwrap();
    let mut v = v0.clone();
    assert_eq!(stats.trace[0], v);
    for k in 1..=20 {
        v = ValueOperator::Bellman.apply(&v, &m).unwrap();
        assert_eq!(stats.trace[k], v);
    }
    assert!(stats.choices.iter().all(|c| *c == ParamChoice::Global(0)));
}

#[test]
fn iid_schedule_is_deterministic_per_seed() {
    let mut r = rng(42);
    let ps = random_finite(&mut r, 3, 2, 4, 0.9);
    let bx = unbounded_box(3);
    let v0 = ValueVector::zeros(3);
    let run = |seed| simulate(&ps, &ValueOperator::Bellman, &ParamSchedule::iid(seed, 30), &v0, &bx).unwrap();
    assert_eq!(run(5), run(5));
    assert_ne!(run(5).choices, run(6).choices);
}

#[test]
fn iid_draws_skip_single_option_states() {
    let mut r = rng(43);
    let mut lists = random_lists(&mut r, 3, 2, 3);
    lists[1].truncate(1);
    lists[2] = vec![random_block(&mut r, 3, 2), random_block(&mut r, 3, 2)];
    let ps = ParamSet::s_rect_finite(0.9, lists).unwrap();
    let stats = simulate(&ps, &ValueOperator::Bellman, &ParamSchedule::iid(1, 200), &ValueVector::zeros(3), &unbounded_box(3)).unwrap();
    let mut seen = [false; 2];
    for c in &stats.choices {
        let ParamChoice::PerState(idx) = c else { panic!("{c:?}") };
        assert_eq!(idx[1], 0);
        seen[idx[2]] = true;
    }
    assert_eq!(seen, [true, true]);
}

#[test]
fn invalid_cyclic_choice_is_rejected() {
    let mut r = rng(44);
    let ps = random_finite(&mut r, 2, 2, 2, 0.9);
    let sched = ParamSchedule::cyclic(vec![ParamChoice::Global(0), ParamChoice::Global(2)], 5);
    let err = simulate(&ps, &ValueOperator::Bellman, &sched, &ValueVector::zeros(2), &unbounded_box(2));
    assert!(matches!(err, Err(Error::InvalidConfig(_))));
    let sched = ParamSchedule::cyclic(vec![], 5);
    assert!(simulate(&ps, &ValueOperator::Bellman, &sched, &ValueVector::zeros(2), &unbounded_box(2)).is_err());
}

#[test]
fn greedy_upper_takes_the_largest_step() {
    let mut r = rng(45);
    let ps = random_finite(&mut r, 3, 2, 3, 0.9);
    let v0 = ValueVector::zeros(3);
    let stats = simulate(&ps, &ValueOperator::Bellman, &ParamSchedule::greedy(Direction::Upper, 10), &v0, &unbounded_box(3)).unwrap();
    for (k, c) in stats.choices.iter().enumerate() {
        let v = &stats.trace[k];
        let step = |i| apply_choice(v, &ps, &ValueOperator::Bellman, &ParamChoice::Global(i)).sup_distance(v);
        let ParamChoice::Global(chosen) = c else { panic!() };
        assert!((0..3).all(|i| step(i) <= step(*chosen)));
    }
}

#[test]
fn cyclic_members_visits_everyone() {
    let mut r = rng(46);
    let ps = random_finite(&mut r, 2, 2, 3, 0.9);
    let stats = simulate(&ps, &ValueOperator::Bellman, &ParamSchedule::cyclic_members(&ps, 6), &ValueVector::zeros(2), &unbounded_box(2)).unwrap();
    let got: Vec<_> = stats.choices.clone();
    let want: Vec<_> = [0, 1, 2, 0, 1, 2].into_iter().map(ParamChoice::Global).collect();
    assert_eq!(got, want);
}

#[test]
fn population_statistics() {
    let (mean, stdev) = mean_and_stdev(&[vec![1.0, 0.0], vec![3.0, 0.0]]);
    assert_eq!(mean, vec![2.0, 0.0]);
    assert_eq!(stdev, vec![1.0, 0.0]);
    assert_eq!(mean_and_stdev(&[]), (vec![], vec![]));
}

#[test]
fn absorption_bound_is_tight() {
    for &(d0, delta, gamma) in &[(10.0, 1e-3, 0.9), (1.0, 1e-6, 0.5), (100.0, 0.5, 0.95)] {
        let k = absorption_steps(d0, delta, gamma);
        let bound = |k: usize| gamma.powi(k as i32) * d0 / (1.0 - gamma);
        assert!(bound(k) <= delta * (1.0 + 1e-12));
        assert!(bound(k - 1) > delta);
    }
    assert_eq!(absorption_steps(0.0, 1e-3, 0.9), 0);
    assert_eq!(absorption_steps(1e-4, 1e-3, 0.9), 0);
}

#[test]
fn singleton_deployments_coincide() {
    let mut r = rng(47);
    let ps = ParamSet::singleton(random_mdp(&mut r, 3, 3, 0.9));
    let setup = DeploymentSetup::new(&ps, 1e-8).unwrap();
    let names: Vec<_> = setup.deployments.iter().map(|d| d.name.as_str()).collect();
    assert_eq!(names, ["optimistic", "robust", "bellman"]);
    let runs = setup.run_seed(0, 20).unwrap();
    for run in &runs[1..] {
        for (a, b) in run.trace.iter().zip(&runs[0].trace) {
            assert!(a.sup_distance(b) < 1e-7);
        }
    }
}

#[test]
fn bellman_deployment_dominated_on_every_short_schedule() {
    let mut r = rng(48);
    let lists = (0..2).map(|_| vec![random_block(&mut r, 2, 2), random_block(&mut r, 2, 2)]).collect();
    let ps = ParamSet::s_rect_finite(0.9, lists).unwrap();
    let setup = DeploymentSetup::with_kinds(&ps, 1e-8, &[DeploymentKind::Robust, DeploymentKind::Bellman]).unwrap();
    let options: Vec<ParamChoice> = (0..4).map(|i| ParamChoice::PerState(vec![i & 1, i >> 1])).collect();
    let horizon = 5;
    let mut runs = Vec::new();
    for code in 0..4usize.pow(horizon as u32) {
        let order: Vec<ParamChoice> = (0..horizon).map(|k| options[(code >> (2 * k)) & 3].clone()).collect();
        let run = setup.run(&ParamSchedule::cyclic(order, horizon)).unwrap();
        for (b, rb) in run[1].trace.iter().zip(&run[0].trace) {
            assert!(b.le_within(rb, 1e-9));
        }
        runs.push(run);
    }
    let cmp = setup.aggregate(&runs, 0).unwrap();
    let (rob, bel) = (cmp.get("robust").unwrap(), cmp.get("bellman").unwrap());
    assert!(bel.mean.iter().zip(&rob.mean).all(|(b, r)| *b <= r + 1e-9));
    assert!(setup.aggregate(&runs, 2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn box_distance_contracts(seed in any::<u64>(), sched_seed in any::<u64>(), rect in any::<bool>()) {
        let mut r = rng(seed);
        let gamma = 0.8;
        let ps = if rect {
            ParamSet::s_rect_finite(gamma, random_lists(&mut r, 3, 2, 3)).unwrap()
        } else {
            random_finite(&mut r, 3, 2, 3, gamma)
        };
        let eps = 1e-8;
        let pi = random_policy(&mut r, 3, 2);
        for op in [ValueOperator::Bellman, ValueOperator::Evaluate(pi)] {
            let bx = algorithm1_envelope(&ps, &op, &ValueVector::zeros(3), eps).unwrap().inflated_box();
            let v0 = random_values(&mut r, 3, 200.0);
            let stats = simulate(&ps, &op, &ParamSchedule::iid(sched_seed, 40), &v0, &bx).unwrap();
            let d0 = stats.box_distance[0];
            for (k, d) in stats.box_distance.iter().enumerate() {
                prop_assert!(*d <= gamma.powi(k as i32) * (d0 + 2.0 * eps) + 1e-9, "k={k} d={d} d0={d0}");
            }
            // A trajectory started inside never leaves.
            let inside = simulate(&ps, &op, &ParamSchedule::iid(sched_seed, 40), &bx.lower, &bx).unwrap();
            prop_assert!(inside.box_distance.iter().all(|d| *d <= 1e-9));
            if let ParamKind::Finite(_) = ps.kind() {
                prop_assert!(inside.choices.iter().all(|c| matches!(c, ParamChoice::Global(_))));
            }
        }
    }
}
