use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use raychan::geometry::Vec3;
use raychan::raytracer::{compute_link, fresnel_coefficient, RadioParams, SPEED_OF_LIGHT};
use raychan::scene::{load_scene, Material, Scene};

fn two_rooms() -> Scene {
    load_scene(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenes/two_rooms/two_rooms.xml"
    ))
    .unwrap()
}

fn point_in(lo: [f64; 3], hi: [f64; 3]) -> impl Strategy<Value = Vec3> {
    (lo[0]..hi[0], lo[1]..hi[1], lo[2]..hi[2]).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn links_are_reciprocal_bit_for_bit(
        a in point_in([0.3, 0.3, 0.3], [9.7, 3.7, 2.7]),
        b in point_in([0.3, 0.3, 0.3], [9.7, 3.7, 2.7]),
    ) {
        let s = two_rooms();
        let p = RadioParams::default();
        prop_assert_eq!(compute_link(&s, a, b, &p), compute_link(&s, b, a, &p));
    }

    #[test]
    fn free_space_is_friis(
        d in 1.0f64..1000.0,
        z in -1.0f64..1.0,
        phi in 0.0f64..std::f64::consts::TAU,
        f in prop::sample::select(vec![2.4e9, 5.0e9]),
    ) {
        let r = (1.0 - z * z).sqrt();
        let a = Vec3::new(3.0, -2.0, 1.0);
        let b = a + Vec3::new(r * phi.cos(), r * phi.sin(), z) * d;
        let p = RadioParams { center_frequency: f, ..RadioParams::default() };
        let link = compute_link(&Scene::empty(), a, b, &p);
        let dist = a.distance(b);
        let friis = 20.0 * (4.0 * PI * dist * f / SPEED_OF_LIGHT).log10();
        prop_assert!((link.path_loss - friis).abs() < 1e-3);
        prop_assert!((link.delay - dist / SPEED_OF_LIGHT).abs() < 1e-12);
    }

    #[test]
    fn reflection_is_passive(
        c in 0.0f64..1.0,
        eps in 1.0f64..100.0,
        sigma in 0.0f64..10.0,
        f in 1e8f64..1e11,
    ) {
        let m = Material::new("m", eps, sigma).unwrap();
        prop_assert!(fresnel_coefficient(c, &m, f).norm() <= 1.0 + 1e-12);
    }
}

#[test]
fn fresnel_matches_textbook_form() {
    // Γ⊥ = (cosθ − √(η − sin²θ)) / (cosθ + √(η − sin²θ)), η = εr − jσ/(ωε0)
    let m = Material::new("concrete", 5.24, 0.163).unwrap();
    let f = 5e9;
    for theta_deg in [0.0f64, 20.0, 45.0, 70.0, 89.0] {
        let th = theta_deg.to_radians();
        let eta = Complex64::new(5.24, -0.163 / (2.0 * PI * f * 8.8541878128e-12));
        let root = (eta - th.sin().powi(2)).sqrt();
        let want = (th.cos() - root) / (th.cos() + root);
        let got = fresnel_coefficient(th.cos(), &m, f);
        assert!((got - want).norm() < 1e-12, "{theta_deg}: {got} vs {want}");
    }
}

#[test]
fn blocked_link_reports_sentinel_loss() {
    let s = two_rooms();
    // outside the building looking in through a wall, far corner of the other room
    let link = compute_link(
        &s,
        Vec3::new(-1.0, 2.0, 1.5),
        Vec3::new(9.0, 3.5, 1.5),
        &RadioParams::default(),
    );
    assert_eq!(link.path_loss, 400.0);
    assert!(link.cfr.values.iter().all(|h| h.norm() == 0.0));
}
