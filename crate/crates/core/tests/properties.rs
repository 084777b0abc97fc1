//! Randomised invariants across the public API.

use hjgen::cli::diffcheck;
use hjgen::numerics::{integrate_adaptive, scan_brackets, solve_bracketed};
use hjgen::{Bindings, Expression, HjProblem, PqProblem, SolverConfig};
use proptest::prelude::*;

/// Random expression source over `x` and `q`.
fn source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_owned()),
        Just("q".to_owned()),
        (1u32..9).prop_map(|n| format!("{n}")),
        (1u32..99).prop_map(|n| format!("0.{n}")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} + {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) - {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) * ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) / (2 + ({b})^2)")),
            inner.clone().prop_map(|a| format!("-({a})")),
            inner.clone().prop_map(|a| format!("({a})^2")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("exp(({a}) / 4)")),
            inner.clone().prop_map(|a| format!("sqrt(1 + ({a})^2)")),
            inner.prop_map(|a| format!("atan({a})")),
        ]
    })
}

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printing_round_trips(src in source(), x in -2.0f64..2.0, q in -2.0f64..2.0) {
        let e = Expression::parse(&src).unwrap();
        let printed = e.to_string();
        let again = Expression::parse(&printed).unwrap();
        prop_assert_eq!(again.to_string(), printed);
        let b = Bindings::new().with("x", x).with("q", q);
        let (v1, v2) = (e.evaluate(&b), again.evaluate(&b));
        prop_assert_eq!(v1.map(f64::to_bits).ok(), v2.map(f64::to_bits).ok());
    }

    #[test]
    fn derivatives_match_finite_differences(src in source(), seed in 0u64..1000) {
        let e = Expression::parse(&src).unwrap();
        for var in ["x", "q"] {
            if let Some(r) = diffcheck(&e, var, 10, seed) {
                prop_assert_eq!(r.failures, 0, "d/d{} {}: {:?}", var, src, r);
            }
        }
    }

    #[test]
    fn quadrature_is_additive(a in -2.0f64..0.0, b in 0.0f64..1.0, c in 1.0f64..3.0, k in 0.5f64..3.0) {
        let h = |s: f64| (k * s).sin() + (s / 2.0).exp();
        let tol = 1e-11;
        let whole = integrate_adaptive(h, a, c, tol).unwrap();
        let parts = integrate_adaptive(h, a, b, tol).unwrap() + integrate_adaptive(h, b, c, tol).unwrap();
        let exact = |s: f64| -(k * s).cos() / k + 2.0 * (s / 2.0).exp();
        prop_assert!((whole - parts).abs() <= 1e-9);
        prop_assert!((whole - (exact(c) - exact(a))).abs() <= 1e-9);
        prop_assert_eq!(integrate_adaptive(h, c, a, tol).unwrap(), -whole);
    }

    #[test]
    fn roots_stay_inside_their_brackets(r1 in -3.0f64..3.0, r2 in -3.0f64..3.0, r3 in -3.0f64..3.0) {
        let g = |w: f64| (w - r1) * (w - r2) * (w - r3) + 0.01 * w;
        let c = cfg();
        for br in scan_brackets(|w| Some(g(w)), -5.0, 5.0, 256) {
            let w = solve_bracketed(g, br, &c).unwrap();
            prop_assert!(br.contains(w));
            prop_assert!(g(w).abs() <= 1e-9 || (br.hi - br.lo) <= 1e-9, "{} at {}", g(w), w);
        }
    }

    #[test]
    fn explicit_solution_satisfies_its_branch(x in 0.1f64..2.0, y in -1.0f64..1.0, b in 1.0f64..3.0) {
        // With phi = q^2/2 and f = b q the constraint b x + y - q = 0 is linear.
        let prob = PqProblem::explicit(
            Expression::parse(&format!("{b}*q")).unwrap(),
            Expression::parse("q^2/2").unwrap(),
        ).unwrap();
        let want = b * x + y;
        let r = prob.solve_q(x, y, -10.0, 10.0, &cfg(), None);
        prop_assert!((r.q.unwrap() - want).abs() <= 1e-10 * (1.0 + want.abs()));
    }

    #[test]
    fn momentum_is_odd_in_the_branch(x in 0.0f64..1.0, q in 1.1f64..5.0) {
        let make = |sigma| {
            HjProblem::new(
                Expression::parse("1 + x^2").unwrap(),
                Expression::parse("x^2").unwrap(),
                Expression::parse("q").unwrap(),
            ).unwrap().with_branch(sigma)
        };
        let (up, down) = (make(1.0), make(-1.0));
        prop_assert_eq!(up.momentum(x, q).unwrap(), -down.momentum(x, q).unwrap());
        let (px, pq) = up.momentum_partials(x, q).unwrap();
        let (mx, mq) = down.momentum_partials(x, q).unwrap();
        prop_assert_eq!((px, pq), (-mx, -mq));
    }

    #[test]
    fn free_particle_accumulates_exactly_g(x in 0.0f64..3.0, q in 0.01f64..10.0) {
        let g = Expression::parse("sin(q) + q^3").unwrap();
        let prob = HjProblem::new(
            Expression::parse("2").unwrap(),
            Expression::parse("0").unwrap(),
            g.clone(),
        ).unwrap();
        prop_assert_eq!(prob.hamiltonian_h(x.max(1e-3), q).unwrap(), 0.0);
        let want = g.evaluate(&Bindings::new().with("q", q)).unwrap();
        prop_assert_eq!(prob.accumulated_f(x, q, &cfg()).unwrap(), want);
    }

    #[test]
    fn x0_choice_keeps_the_field_a_solution(x0 in 0.0f64..0.3) {
        let prob = HjProblem::new(
            Expression::parse("1").unwrap(),
            Expression::parse("x^2").unwrap(),
            Expression::parse("q^2/2").unwrap(),
        ).unwrap().with_base_point(x0);
        let xs = hjgen::field::linspace(0.3, 0.6, 7);
        let ts = hjgen::field::linspace(0.2, 0.4, 7);
        let field = prob.solve_field(&xs, &ts, (0.0, 6.0), &cfg()).unwrap();
        let c = hjgen::verify::consistency(hjgen::Model::Hj(&prob), &field);
        prop_assert!(c.points > 0);
        prop_assert!(c.max_d1 < 1e-2 && c.max_d2 < 1e-2, "{:?}", c);
    }
}
