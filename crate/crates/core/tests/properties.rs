use std::sync::Arc;

use preduce_core::dirac::DiracContext;
use preduce_core::expr::{parse, Chart, Expr};
use preduce_core::fixtures;
use preduce_core::sampling::{random_polynomial, rng};
use proptest::prelude::*;

fn chart() -> Chart {
    Chart::new(["x", "y", "z"]).unwrap()
}

/// Smooth expressions over three variables with bounded growth.
fn expr_strategy() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0usize..3).prop_map(Expr::var),
        (-3.0f64..3.0).prop_map(|c| Expr::constant((c * 8.0).round() / 8.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            inner.clone().prop_map(|a| a.sin()),
            inner.clone().prop_map(|a| a.cos()),
            inner.clone().prop_map(|a| (a.sin() * 0.5).exp()),
            (inner.clone(), 0i32..4).prop_map(|(a, k)| a.powi(k)),
            inner.prop_map(|a| -a),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.5f64..1.5, 3)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn derivative_matches_central_difference(e in expr_strategy(), z in point(), i in 0usize..3) {
        let d = e.diff(i).eval(&z).unwrap();
        // Richardson-extrapolated central difference
        let fd = |h: f64| {
            let mut a = z.clone();
            let mut b = z.clone();
            a[i] += h;
            b[i] -= h;
            (e.eval(&a).unwrap() - e.eval(&b).unwrap()) / (2.0 * h)
        };
        let approx = (4.0 * fd(5e-4) - fd(1e-3)) / 3.0;
        let scale = 1.0 + d.abs() + e.eval(&z).unwrap().abs();
        prop_assert!((d - approx).abs() <= 1e-6 * scale, "{} vs {}", d, approx);
    }

    #[test]
    fn render_parse_round_trip(e in expr_strategy(), z in point()) {
        let c = chart();
        let text = c.render(&e);
        let back = parse(&text, &c).unwrap();
        let (a, b) = (e.eval(&z).unwrap(), back.eval(&z).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{}: {} vs {}", text, a, b);
        prop_assert_eq!(c.render(&back), text);
    }

    #[test]
    fn bracket_axioms_on_so3(seed in any::<u64>(), z in point(), alpha in -2.0f64..2.0) {
        let p = fixtures::so3();
        let mut r = rng(seed);
        let (f, g, h) = (
            random_polynomial(&mut r, 3, 2),
            random_polynomial(&mut r, 3, 2),
            random_polynomial(&mut r, 3, 2),
        );
        let b = |a: &Expr, c: &Expr| p.bracket(a, c).unwrap();
        let at = |e: &Expr| e.eval(&z).unwrap();
        prop_assert!((at(&b(&f, &g)) + at(&b(&g, &f))).abs() <= 1e-12);
        let lin = b(&(alpha * &f + &h), &g);
        prop_assert!((at(&lin) - alpha * at(&b(&f, &g)) - at(&b(&h, &g))).abs() <= 1e-11);
        let leibniz = at(&b(&(&f * &g), &h)) - at(&f) * at(&b(&g, &h)) - at(&g) * at(&b(&f, &h));
        prop_assert!(leibniz.abs() <= 1e-11);
        let jacobi = at(&b(&b(&f, &g), &h)) + at(&b(&b(&g, &h), &f)) + at(&b(&b(&h, &f), &g));
        prop_assert!(jacobi.abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn dirac_bracket_ignores_extension(seed in any::<u64>()) {
        let c = fixtures::curved_second_class();
        let samples = c.sample_surface(5, &mut rng(seed)).unwrap();
        let psi = c.constraints().to_vec();
        let d = DiracContext::new(c, &samples).unwrap();
        let mut r = rng(seed ^ 0x5eed);
        let f = random_polynomial(&mut r, 5, 2);
        let g = random_polynomial(&mut r, 5, 2);
        let f2 = &f + Expr::sum(psi.iter().map(|p| random_polynomial(&mut r, 5, 2) * p));
        for s in &samples {
            let a = d.dirac_bracket_value(&f, &g, s).unwrap();
            let b = d.dirac_bracket_value(&f2, &g, s).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{} vs {}", a, b);
            let anti = d.dirac_bracket_value(&g, &f, s).unwrap();
            prop_assert!((a + anti).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn chart_rejects_bad_names() {
    assert!(Chart::new(["x", "x"]).is_err());
    assert!(Chart::new(["sin"]).is_err());
    assert!(Chart::new(Vec::<String>::new()).is_err());
    let _ = Arc::new(chart());
}
