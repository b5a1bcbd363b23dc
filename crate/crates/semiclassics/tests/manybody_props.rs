use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semiclassics::manybody::{
    lieb_oxford_check, orthonormalize, random_configuration, random_smooth_density, reduced_densities, rhf_minimize,
    ScfOptions, SlaterState,
};
use semiclassics::phasespace::{Scaling, SpatialGrid};
use semiclassics::tf::{ExternalFields, Interaction};

fn slater() -> impl Strategy<Value = SlaterState> {
    (1usize..=6).prop_flat_map(|n| {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64 * n).prop_map(move |v| {
            let g = SpatialGrid::new(1, 5.0, 64).unwrap();
            let mut a = Array2::from_shape_vec((64, n), v.into_iter().map(|(x, y)| Complex64::new(x, y)).collect()).unwrap();
            orthonormalize(&g, &mut a);
            SlaterState::new(g, a, Scaling::new(n, 1).unwrap()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn reduced_density_normalizations(s in slater()) {
        let r = reduced_densities(&s).unwrap();
        let n = s.n() as f64;
        prop_assert!((r.rho1_integral() - n).abs() <= 1e-8);
        prop_assert!((r.rho2_integral() - n * (n - 1.0) / 2.0).abs() <= 1e-8);
        prop_assert!((r.t1_integral() - n).abs() <= 1e-8);
        prop_assert!(r.rho2_min() >= -1e-12);
        // the pair density vanishes on the diagonal
        prop_assert!(r.rho2_diagonal().iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn off_diagonal_kernel_is_dominated_by_densities(s in slater()) {
        let g = s.gamma();
        let rho = g.density_values();
        let m = rho.len();
        for i in 0..m {
            for j in 0..m {
                prop_assert!(g.kernel(i, j).norm_sqr() <= rho[i] * rho[j] * (1.0 + 1e-10) + 1e-14);
            }
        }
    }

    #[test]
    // offsets reach ±8, so wider Gaussians are cut off above round-off and lose ŵ ≥ 0
    fn scf_history_never_rises(amp in 0.0f64..2.0, sigma in 0.3f64..1.0, n in 2usize..=8) {
        let g = SpatialGrid::new(1, 8.0, 128).unwrap();
        let fields = ExternalFields::new(g, g.sample(|x| x[0] * x[0]))
            .unwrap()
            .with_interaction(Arc::new(move |x: &[f64]| amp * (-x[0] * x[0] / (2.0 * sigma * sigma)).exp()))
            .unwrap();
        let sol = rhf_minimize(&fields, &Scaling::new(n, 1).unwrap(), &ScfOptions::default()).unwrap();
        prop_assert!(sol.energy <= sol.initial_energy + 1e-12);
        for w in sol.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{:?}", sol.history);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lieb_oxford_holds_for_random_draws(seed in any::<u64>(), k in 2usize..30) {
        let g = SpatialGrid::new(1, 10.0, 128).unwrap();
        let f = Interaction::new(g, Arc::new(|x: &[f64]| (-x[0] * x[0] / 2.0).exp())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eta = random_smooth_density(&mut rng, &g).unwrap();
        let confs: Vec<_> = (0..50).map(|_| random_configuration(&mut rng, &g, k)).collect();
        let rep = lieb_oxford_check(&confs, &eta, &f).unwrap();
        prop_assert_eq!(rep.violations, 0);
    }
}
