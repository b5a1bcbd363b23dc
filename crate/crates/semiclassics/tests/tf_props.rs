use std::sync::Arc;

use proptest::prelude::*;

use semiclassics::phasespace::{Density, PhaseGrid, SpatialGrid};
use semiclassics::tf::{build_m_rho, c_tf, tf_energy, tf_minimize, ExternalFields, TFProblem};
use semiclassics::vlasov::rho_of_m;

fn grid() -> SpatialGrid {
    SpatialGrid::new(1, 10.0, 512).unwrap()
}

fn interacting() -> TFProblem {
    let g = grid();
    let fields = ExternalFields::new(g, g.sample(|x| x[0] * x[0]))
        .unwrap()
        .with_interaction(Arc::new(|x: &[f64]| 0.5 * (-x[0] * x[0] / 2.0).exp()))
        .unwrap();
    TFProblem::new(fields, 1.0).unwrap()
}

/// A unit-mass combination of up to three Gaussian bumps.
fn bumps() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-2.0f64..2.0, 0.2f64..1.5, 0.1f64..1.0), 1..=3)
}

fn competitor(g: SpatialGrid, b: &[(f64, f64, f64)]) -> Density {
    let v = g.sample(|x| b.iter().map(|(c, s, a)| a * (-(x[0] - c).powi(2) / (2.0 * s * s)).exp()).sum());
    let mass: f64 = v.iter().sum::<f64>() * g.cell_volume();
    Density::new(g, v.into_iter().map(|r| r / mass).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn minimiser_beats_smooth_competitors(b in bumps()) {
        let p = interacting();
        let sol = tf_minimize(&p).unwrap();
        let comp = competitor(*p.fields.grid(), &b);
        prop_assert!(sol.energy <= tf_energy(&comp, &p).unwrap() + 1e-12);
    }
}

#[test]
fn euler_lagrange_residual_at_convergence() {
    let p = interacting();
    let sol = tf_minimize(&p).unwrap();
    let wr = p.fields.w().unwrap().convolve(sol.rho.values());
    let c = c_tf(1).unwrap();
    let worst = sol
        .rho
        .values()
        .iter()
        .zip(p.fields.v())
        .zip(&wr)
        .map(|((r, v), w)| {
            let target = ((sol.mu - v - w).max(0.0) / c).sqrt();
            (r - target).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst <= 1e-7, "{worst}");
}

#[test]
fn indicator_marginal_keeps_the_mass() {
    let g = grid();
    let p = TFProblem::new(ExternalFields::new(g, g.sample(|x| x[0] * x[0])).unwrap(), 1.0).unwrap();
    let rho = tf_minimize(&p).unwrap().rho;
    let mut errors = Vec::new();
    for n_p in [256, 512, 1024] {
        let pg = PhaseGrid::uniform(g, n_p, 2.5).unwrap();
        let m = build_m_rho(&rho, None, &pg).unwrap();
        let err = (rho_of_m(&m).unwrap().mass() - rho.mass()).abs() / rho.mass();
        assert!(err <= 1e-2, "n_p = {n_p}: {err}");
        errors.push(err);
    }
    assert!(errors[2] <= errors[0]);
}
