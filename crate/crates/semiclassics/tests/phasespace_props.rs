use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use semiclassics::phasespace::{fourier_hbar_with, integrate, Direction, Scaling, SpatialGrid};
use semiclassics::tf::c_tf;

fn field(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

fn l2(grid: &SpatialGrid, h: f64, v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>() * h.powi(grid.d() as i32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn forward_then_inverse_is_identity(u in field(64), hbar in 0.05f64..1.0) {
        let g = SpatialGrid::new(1, 8.0, 64).unwrap();
        let f = fourier_hbar_with(&u, &g, hbar, Direction::Forward).unwrap();
        let back = fourier_hbar_with(&f, &g, hbar, Direction::Inverse).unwrap();
        let err: f64 = back.iter().zip(&u).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let norm: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-12 * norm);
    }

    #[test]
    fn parseval_in_two_dimensions(u in field(256), hbar in 0.05f64..1.0) {
        let g = SpatialGrid::new(2, 6.0, 16).unwrap();
        let f = fourier_hbar_with(&u, &g, hbar, Direction::Forward).unwrap();
        let h_p = 2.0 * PI * hbar / g.side();
        let lhs = l2(&g, g.h(), &u);
        let rhs = l2(&g, h_p, &f);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn constants_integrate_exactly(c in -10.0f64..10.0, d in 1usize..=3, side in 0.5f64..20.0) {
        let g = SpatialGrid::new(d, side, 8).unwrap();
        let v = vec![c; g.num_points()];
        let exact = c * side.powi(d as i32);
        prop_assert!((integrate(&v, &g) - exact).abs() <= 1e-13 * exact.abs().max(1.0));
    }
}

#[test]
fn fermi_gas_filling_relation() {
    // (2π)^{-d} |B_r| = ρ with r² = c_TF ρ^{2/d}
    let ball = |d: usize, r: f64| match d {
        1 => 2.0 * r,
        2 => PI * r * r,
        _ => 4.0 / 3.0 * PI * r.powi(3),
    };
    for d in 1..=3 {
        for rho in [0.01, 0.5, 1.0, 7.0] {
            let r = (c_tf(d).unwrap() * f64::powf(rho, 2.0 / d as f64)).sqrt();
            let filled = ball(d, r) / (2.0 * PI).powi(d as i32);
            assert!((filled - rho).abs() <= 1e-12 * rho, "d={d} rho={rho}");
        }
    }
}

#[test]
fn hbar_follows_particle_number() {
    for (n, d) in [(8, 1), (64, 2), (27, 3)] {
        let s = Scaling::new(n, d).unwrap();
        assert!((s.hbar().powi(d as i32) * n as f64 - 1.0).abs() < 1e-12);
    }
}
