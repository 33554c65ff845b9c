mod common;

use common::*;
use ecomech::mechanism::{
    brute_force_mechanism, first_best_constraint, first_best_incentive, incentive_rule, second_best_constraint,
    second_best_incentive, solve_mechanism, MechanismOptions, Mode, SolveStyle, FEASIBILITY_TOL,
};
use ecomech::{Error, TypeProfile};
use proptest::prelude::*;

fn mode() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::FirstBest), Just(Mode::SecondBest)]
}

fn style() -> impl Strategy<Value = SolveStyle> {
    prop_oneof![Just(SolveStyle::Local), Just(SolveStyle::Global)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn outcomes_are_feasible_and_paid_by_their_rule(
        (s, theta, _a) in instance(4), budget in 0.0f64..8.0, mode in mode(), style in style(),
    ) {
        let o = solve_mechanism(&s, &theta, budget, mode, style, &MechanismOptions::default()).unwrap();
        let exact = match mode {
            Mode::FirstBest => first_best_constraint(&s, &theta, &o.f).unwrap(),
            Mode::SecondBest => second_best_constraint(&s, &o.f).unwrap(),
        };
        prop_assert_eq!(exact, o.constraint_value);
        prop_assert!(o.constraint_value <= budget + FEASIBILITY_TOL);
        prop_assert_eq!(&o.u, &incentive_rule(&s, &theta, &o.f, mode).unwrap());
        prop_assert!(o.total_incentive() <= budget + FEASIBILITY_TOL);
        prop_assert!((o.objective - s.total_emissions(&o.f).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn more_budget_never_hurts(
        (s, theta, _a) in instance(3), b1 in 0.0f64..6.0, extra in 0.0f64..3.0, mode in mode(),
    ) {
        let opts = MechanismOptions::default();
        let lo = solve_mechanism(&s, &theta, b1, mode, SolveStyle::Global, &opts).unwrap();
        let hi = solve_mechanism(&s, &theta, b1 + extra, mode, SolveStyle::Global, &opts).unwrap();
        prop_assert!(hi.objective <= lo.objective + 1e-6, "{} > {}", hi.objective, lo.objective);
    }

    #[test]
    fn first_best_no_worse_than_second_best((s, theta, _a) in instance(3), budget in 0.0f64..6.0) {
        let opts = MechanismOptions::default();
        let fb = solve_mechanism(&s, &theta, budget, Mode::FirstBest, SolveStyle::Global, &opts).unwrap();
        let sb = solve_mechanism(&s, &theta, budget, Mode::SecondBest, SolveStyle::Global, &opts).unwrap();
        prop_assert!(fb.objective <= sb.objective + 1e-6);
    }

    #[test]
    fn second_best_dominates_first_best_incentive((s, theta, a) in instance(5)) {
        let first = first_best_incentive(&s, &theta, &a).unwrap();
        let second = second_best_incentive(&s, &a).unwrap();
        for i in 0..s.n() {
            prop_assert!(second[i] >= first[i]);
        }
    }

    #[test]
    fn second_best_ignores_types(
        (s, theta, _a) in instance(3), other in prop::collection::vec(0.0f64..=1.0, 3), budget in 0.0f64..6.0,
    ) {
        let other = TypeProfile::from_slice(&other[..s.n()]).unwrap();
        let opts = MechanismOptions::default();
        let a = solve_mechanism(&s, &theta, budget, Mode::SecondBest, SolveStyle::Local, &opts).unwrap();
        let b = solve_mechanism(&s, &other, budget, Mode::SecondBest, SolveStyle::Local, &opts).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn single_driver_closed_forms() {
    let s = s1();
    let theta = ty(&[0.2]);
    let opts = MechanismOptions::default();
    let sb = solve_mechanism(&s, &theta, 3.0, Mode::SecondBest, SolveStyle::Local, &opts).unwrap();
    assert!((sb.f[0] - 0.6).abs() < 1e-6);
    assert!((sb.u[0] - 3.0).abs() < 1e-6);

    let fb = solve_mechanism(&s, &theta, 3.0, Mode::FirstBest, SolveStyle::Local, &opts).unwrap();
    assert!((fb.f[0] - 0.803_558_7).abs() < 1e-5);
    assert!(fb.objective <= sb.objective);

    let rich = solve_mechanism(&s, &theta, 6.0, Mode::SecondBest, SolveStyle::Global, &opts).unwrap();
    assert_eq!(rich.f[0], 1.0);
    assert_eq!(rich.u[0], 5.0);
    assert!(rich.full_compliance());
}

#[test]
fn brute_force_agrees_on_pairs() {
    let s = s2();
    let theta = ty(&[0.2, 0.2]);
    let bf = brute_force_mechanism(&s, &theta, 0.0, Mode::SecondBest, 0.01).unwrap();
    assert_eq!(bf.f.as_slice(), &[1.0, 1.0]);
    let sol = solve_mechanism(&s, &theta, 0.0, Mode::SecondBest, SolveStyle::Local, &MechanismOptions::default()).unwrap();
    assert!((sol.objective - bf.objective).abs() < 1e-9);
}

#[test]
fn rejects_negative_budget() {
    let err = solve_mechanism(&s1(), &ty(&[0.2]), -1.0, Mode::FirstBest, SolveStyle::Local, &MechanismOptions::default())
        .unwrap_err();
    assert!(matches!(&err, Error::Invalid { field, .. } if field == "budget"));
}
