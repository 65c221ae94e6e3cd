use proptest::prelude::*;
use whitney::chart::{ChartPoint, SourceModel};
use whitney::jet::{Jet, JetSpace};

fn vars(x: f64, y: f64) -> (Jet, Jet) {
    let space = JetSpace::get(2, 4);
    (Jet::variable(space, 4, 0, x), Jet::variable(space, 4, 1, y))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

proptest! {
    #[test]
    fn product_rule_up_to_fourth_order(x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let (u, v) = vars(x, y);
        let f = &u.sin() * &v.exp();
        // ∂x²∂y² (sin x e^y) = -sin x e^y
        prop_assert!(close(f.derivative(&[0, 0, 1, 1]), -x.sin() * y.exp(), 1e-12));
        prop_assert!(close(f.derivative(&[0, 0, 0, 1]), -x.cos() * y.exp(), 1e-12));
        prop_assert!(close(f.derivative(&[1]), x.sin() * y.exp(), 1e-12));
    }

    #[test]
    fn reciprocal_and_square_root_invert(x in 0.2..5.0f64, y in -1.0..1.0f64) {
        let (u, v) = vars(x, y);
        let g = &u + &v.square();
        let one = &g * &g.recip();
        prop_assert!(close(one.value(), 1.0, 1e-14));
        prop_assert!(one.coeffs()[1..].iter().all(|c| c.abs() < 1e-11));
        let back = g.sqrt().square();
        for (a, b) in back.coeffs().iter().zip(g.coeffs()) {
            prop_assert!((a - b).abs() < 1e-11 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn partial_commutes_with_mixed_derivative(x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let (u, v) = vars(x, y);
        let f = &(&u * &v).cos() + &u.powi(3);
        let a = f.partial(0).derivative(&[1, 1]);
        let b = f.derivative(&[0, 1, 1]);
        prop_assert!(close(a, b, 1e-12));
    }

    #[test]
    fn sphere_chart_transition_round_trips(u in prop::collection::vec(-1.9..1.9f64, 3)) {
        let s3 = SourceModel::Sphere(3);
        let p = ChartPoint::new(0, u);
        prop_assume!(p.norm() > 0.3);
        let q = s3.transition(&p, 1).unwrap();
        let x = s3.embed(&p).unwrap();
        let y = s3.embed(&q).unwrap();
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() < 1e-14);
        }
        let back = s3.transition(&q, 0).unwrap();
        for (a, b) in back.coords.iter().zip(&p.coords) {
            prop_assert!((a - b).abs() < 1e-13);
        }
    }
}

#[test]
fn univariate_taylor_coefficients() {
    let space = JetSpace::get(1, 4);
    let x = Jet::variable(space, 4, 0, 0.0);
    // e^x = 1 + x + x²/2 + x³/6 + x⁴/24
    let e = x.exp();
    let expect = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
    for (c, t) in e.coeffs().iter().zip(expect) {
        assert!((c - t).abs() < 1e-15);
    }
    assert!((e.derivative(&[0, 0, 0, 0]) - 1.0).abs() < 1e-14);
}
