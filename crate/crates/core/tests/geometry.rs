use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use whitney::chart::{ChartPoint, SourceModel};
use whitney::cpn::cpn_geometry_state;
use whitney::error::Error;
use whitney::geometry::{geometry_state, maslov_one_form, Depth};
use whitney::immersion::{
    make_black_box, make_complexified_plane, make_lagrangian_plane, make_perturbed_whitney, make_product_torus,
    make_rpn, make_whitney_cn, make_whitney_cpn, Ambient,
};

fn sphere_point(u: &[f64]) -> ChartPoint {
    ChartPoint::new(0, u.to_vec())
}

/// `|ĥ|² = (n-1)/(n+2) Σ 1/r_i²` on the product torus.
fn torus_hhat2(radii: &[f64]) -> f64 {
    let n = radii.len() as f64;
    (n - 1.0) / (n + 2.0) * radii.iter().map(|r| r.powi(-2)).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn whitney_sphere_has_vanishing_hhat_and_t(
        r in 0.3..3.0f64,
        a in prop::collection::vec(-1.0..1.0f64, 6),
        u in prop::collection::vec(-1.5..1.5f64, 3),
    ) {
        let center: Vec<[f64; 2]> = a.chunks(2).map(|c| [c[0], c[1]]).collect();
        let imm = make_whitney_cn(r, &center, 3).unwrap();
        let st = geometry_state(&imm, &sphere_point(&u), Depth::WithDerivatives).unwrap();
        prop_assert!(st.hhat.norm2().sqrt() < 1e-10 / r.min(1.0));
        prop_assert!(st.t.unwrap().norm2().sqrt() < 1e-10 / r.min(1.0).powi(2));
        // umbilic: h is carried by H alone, so |h|² = 3n²/(n+2) |H|²
        prop_assert!((st.h.norm2() - 27.0 / 5.0 * st.mean_curvature.norm2()).abs() < 1e-10 * (1.0 + st.h.norm2()));
    }

    #[test]
    fn torus_matches_closed_form(radii in prop::collection::vec(0.5..3.0f64, 2..=4), t in prop::collection::vec(0.0..6.3f64, 4)) {
        let n = radii.len();
        let imm = make_product_torus(&radii).unwrap();
        let st = geometry_state(&imm, &ChartPoint::new(0, t[..n].to_vec()), Depth::WithSecondDerivatives).unwrap();
        prop_assert!((st.hhat.norm2() - torus_hhat2(&radii)).abs() < 1e-12);
        prop_assert!(st.scalar_curvature().abs() < 1e-12);
        prop_assert!(st.grad_h.unwrap().norm2() < 1e-20);
        let h2: f64 = radii.iter().map(|r| r.powi(-2)).sum();
        prop_assert!((st.h.norm2() - h2).abs() < 1e-12);
    }

    #[test]
    fn dilation_rescales_second_fundamental_form(lambda in 0.2..5.0f64, u in prop::collection::vec(-1.0..1.0f64, 2)) {
        let base = make_perturbed_whitney(2, 1.0, 0.05, 1).unwrap();
        let p = sphere_point(&u);
        let a = geometry_state(&base, &p, Depth::Pointwise).unwrap();
        let b = geometry_state(&base.dilated(lambda).unwrap(), &p, Depth::Pointwise).unwrap();
        prop_assert!((b.h.norm2() * lambda * lambda - a.h.norm2()).abs() < 1e-10 * a.h.norm2());
        prop_assert!((b.metric.sqrt_det_g - lambda * lambda * a.metric.sqrt_det_g).abs() < 1e-10 * b.metric.sqrt_det_g);
    }
}

#[test]
fn plane_is_totally_geodesic() {
    let imm = make_lagrangian_plane(3).unwrap();
    let st = geometry_state(&imm, &ChartPoint::new(0, vec![0.3, -2.0, 5.0]), Depth::WithSecondDerivatives).unwrap();
    assert_eq!(st.h.norm2(), 0.0);
    assert!(st.curvature.norm2() < 1e-30);
    assert!((st.metric.sqrt_det_g - 1.0).abs() < 1e-15);
}

#[test]
fn complexified_plane_is_rejected() {
    let imm = make_complexified_plane(2, 1).unwrap();
    match geometry_state(&imm, &ChartPoint::new(0, vec![0.1, 0.2]), Depth::Pointwise) {
        Err(Error::NotLagrangian(v)) => assert!(v > 0.5),
        other => panic!("expected NotLagrangian, got {other:?}"),
    }
}

#[test]
fn unit_torus_values() {
    // radii (1, 1): |h|² = 2, |H|² = 1/2, |ĥ|² = 1/2
    let imm = make_product_torus(&[1.0, 1.0]).unwrap();
    let st = geometry_state(&imm, &ChartPoint::new(0, vec![0.4, 2.2]), Depth::WithDerivatives).unwrap();
    assert!((st.h.norm2() - 2.0).abs() < 1e-14);
    assert!((st.mean_curvature.norm2() - 0.5).abs() < 1e-14);
    assert!((st.hhat.norm2() - 0.5).abs() < 1e-14);
    assert!((maslov_one_form(&st).norm2() - 0.5).abs() < 1e-14);
}

#[test]
fn real_projective_space_is_totally_geodesic_with_unit_curvature() {
    for n in [2, 3, 4] {
        let imm = make_rpn(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        for p in imm.sample_points(5, &mut rng) {
            let st = cpn_geometry_state(&imm, &p, Depth::WithDerivatives).unwrap();
            assert!(st.h.norm2() < 1e-24);
            let nf = n as f64;
            assert!((st.scalar_curvature() - nf * (nf - 1.0)).abs() < 1e-11);
            assert!(st.diagnostics.horizontality.unwrap() < 1e-12);
        }
    }
}

#[test]
fn whitney_cpn_is_umbilic_and_phase_independent() {
    let imm = make_whitney_cpn(0.7, 3).unwrap();
    let twisted = imm.clone().phase_twisted(0.9).unwrap();
    let p = sphere_point(&[0.2, -0.5, 0.8]);
    let a = cpn_geometry_state(&imm, &p, Depth::WithDerivatives).unwrap();
    let b = cpn_geometry_state(&twisted, &p, Depth::WithDerivatives).unwrap();
    assert!(a.hhat.norm2() < 1e-24);
    assert!((a.h.norm2() - b.h.norm2()).abs() < 1e-12);
    assert!((a.scalar_curvature() - b.scalar_curvature()).abs() < 1e-11);
    assert!(cpn_geometry_state(&make_whitney_cn(1.0, &[[0.0, 0.0]; 3], 3).unwrap(), &p, Depth::Pointwise).is_err());
}

#[test]
fn rigid_motion_preserves_invariants() {
    let imm = make_perturbed_whitney(2, 1.0, 0.04, 2).unwrap();
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let unitary = vec![[c, s], [0.0, 0.0], [0.0, 0.0], [0.6, 0.8]];
    let moved = imm.clone().moved(unitary, Some(vec![[1.0, -2.0], [0.5, 0.0]])).unwrap();
    let p = sphere_point(&[0.7, -0.2]);
    let a = geometry_state(&imm, &p, Depth::WithDerivatives).unwrap();
    let b = geometry_state(&moved, &p, Depth::WithDerivatives).unwrap();
    assert!((a.hhat.norm2() - b.hhat.norm2()).abs() < 1e-12);
    assert!((a.grad_hhat_norm2().unwrap() - b.grad_hhat_norm2().unwrap()).abs() < 1e-11);
}

#[test]
fn black_box_agrees_with_built_in_family() {
    let built = make_whitney_cn(1.2, &[[0.0, 0.0]; 2], 2).unwrap();
    let inner = built.clone();
    let boxed = make_black_box(
        "whitney_closure",
        SourceModel::Sphere(2),
        Ambient::ComplexEuclidean(2),
        Arc::new(move |p: &ChartPoint| inner.eval(p).unwrap()),
    );
    let p = sphere_point(&[0.4, 0.3]);
    let a = geometry_state(&built, &p, Depth::WithDerivatives).unwrap();
    let b = geometry_state(&boxed, &p, Depth::WithDerivatives).unwrap();
    assert!((a.h.norm2() - b.h.norm2()).abs() < 1e-6);
    assert!(b.hhat.norm2().sqrt() < 1e-6);
}
