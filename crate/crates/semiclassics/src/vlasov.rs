//! Vlasov energy on phase space and the bathtub optimality of m_ρ.

use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::phasespace::{Density, MeasureKind, PhaseGrid, PhaseSpaceMeasure};
use crate::tf::{build_m_rho, c_tf, ExternalFields};

/// Largest admissible L¹ distance between a competitor's marginal and the target density.
pub const MARGINAL_TOL: f64 = 1e-2;

/// ρ_m(x) = (2π)^{-d} ∫ m(x, p) dp.
pub fn rho_of_m(m: &PhaseSpaceMeasure) -> Result<Density> {
    let g = m.grid();
    let np = g.num_p_points();
    let scale = g.p_cell_volume() / (2.0 * PI).powi(g.d() as i32);
    let values = m
        .values()
        .chunks_exact(np)
        .map(|row| row.iter().sum::<f64>() * scale)
        .collect();
    Density::new(*g.x(), values)
}

/// (2π)^{-d} ∬ |p + A(x)|² m + ∫ V ρ_m + ½ D_w(ρ_m, ρ_m).
pub fn vlasov_energy(m: &PhaseSpaceMeasure, fields: &ExternalFields) -> Result<f64> {
    let g = m.grid();
    if g.x() != fields.grid() {
        return Err(Error::Config("measure and fields live on different grids".into()));
    }
    let d = g.d();
    let np = g.num_p_points();
    let a = fields.a();
    let mut kinetic = 0.0;
    for (ix, row) in m.values().chunks_exact(np).enumerate() {
        for (ip, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let p = g.p_point(ip);
            let s: f64 = (0..d)
                .map(|k| (p[k] + a.map_or(0.0, |a| a[ix * d + k])).powi(2))
                .sum();
            kinetic += s * v;
        }
    }
    kinetic *= g.cell_volume() / (2.0 * PI).powi(d as i32);
    let rho = rho_of_m(m)?;
    let e = kinetic
        + fields.potential_energy(rho.values())
        + fields.interaction_energy(rho.values());
    if e.is_nan() {
        return Err(Error::NonFinite("Vlasov energy".into()));
    }
    Ok(e)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompetitorRow {
    pub index: usize,
    pub energy: f64,
    /// energy(competitor) - energy(m_ρ)
    pub margin: f64,
    pub marginal_l1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BathtubReport {
    pub reference_energy: f64,
    pub rows: Vec<CompetitorRow>,
    pub tol: f64,
    /// Every margin is ≥ -tol.
    pub optimal: bool,
}

/// Compares the Vlasov energy of m_ρ with competitors sharing the marginal ρ.
pub fn bathtub_optimality_check(
    rho: &Density,
    fields: &ExternalFields,
    pgrid: &PhaseGrid,
    competitors: &[PhaseSpaceMeasure],
) -> Result<BathtubReport> {
    let m_rho = build_m_rho(rho, fields.a(), pgrid)?;
    let reference = vlasov_energy(&m_rho, fields)?;
    let tol = 1e-12 * reference.abs().max(1.0);
    let mut rows = Vec::with_capacity(competitors.len());
    for (index, c) in competitors.iter().enumerate() {
        if c.grid() != pgrid {
            return Err(Error::Precondition(format!("competitor {index} uses another phase grid")));
        }
        let (lo, hi) = c.range();
        if lo < -crate::phasespace::MEASURE_TOL || hi > 1.0 + crate::phasespace::MEASURE_TOL {
            return Err(Error::Precondition(format!(
                "competitor {index} has values outside [0, 1]: [{lo}, {hi}]"
            )));
        }
        let marginal_l1 = rho_of_m(c)?.l1_distance(rho);
        if marginal_l1 > MARGINAL_TOL {
            return Err(Error::Precondition(format!(
                "competitor {index} has marginal off by {marginal_l1:e} in L¹"
            )));
        }
        let energy = vlasov_energy(c, fields)?;
        rows.push(CompetitorRow {
            index,
            energy,
            margin: energy - reference,
            marginal_l1,
        });
    }
    let optimal = rows.iter().all(|r| r.margin >= -tol);
    Ok(BathtubReport {
        reference_energy: reference,
        rows,
        tol,
        optimal,
    })
}

/// s^{-d} 1(|p + A(x)| ≤ s (c ρ(x)^{2/d})^{1/2}): m_ρ stretched in p by `factor ≥ 1`.
pub fn dilated_competitor(
    rho: &Density,
    a: Option<&[f64]>,
    pgrid: &PhaseGrid,
    factor: f64,
) -> Result<PhaseSpaceMeasure> {
    if !(factor >= 1.0 && factor.is_finite()) {
        return Err(Error::Config(format!("dilation factor {factor} must be ≥ 1")));
    }
    let d = pgrid.d();
    let c = c_tf(d)?;
    let np = pgrid.num_p_points();
    let height = factor.powi(-(d as i32));
    let mut values = vec![0.0; pgrid.num_points()];
    for (ix, &r) in rho.values().iter().enumerate() {
        if r <= 0.0 {
            continue;
        }
        let r2 = factor * factor * c * r.powf(2.0 / d as f64);
        for ip in 0..np {
            let p = pgrid.p_point(ip);
            let s: f64 = (0..d)
                .map(|k| (p[k] + a.map_or(0.0, |a| a[ix * d + k])).powi(2))
                .sum();
            if s <= r2 {
                values[ix * np + ip] = height;
            }
        }
    }
    PhaseSpaceMeasure::new(*pgrid, values, MeasureKind::Vlasov)
}

/// Gaussian smoothing of `m` in p (width `sigma`), each x-row rescaled to the marginal of ρ and clipped at 1.
pub fn mollified_competitor(
    m: &PhaseSpaceMeasure,
    rho: &Density,
    sigma: f64,
) -> Result<PhaseSpaceMeasure> {
    let g = *m.grid();
    let d = g.d();
    let n_p = g.n_p();
    let np = g.num_p_points();
    let h_p = g.h_p();
    let radius = ((6.0 * sigma / h_p).ceil() as usize).min(n_p);
    let kernel: Vec<f64> = {
        let raw: Vec<f64> = (0..=2 * radius)
            .map(|k| {
                let q = (k as f64 - radius as f64) * h_p;
                (-q * q / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    };
    let target_scale = (2.0 * PI).powi(d as i32) / g.p_cell_volume();
    let mut values = m.values().to_vec();
    let mut tmp = vec![0.0; np];
    for (ix, row) in values.chunks_exact_mut(np).enumerate() {
        for axis in 0..d {
            let stride = n_p.pow((d - 1 - axis) as u32);
            for (i, t) in tmp.iter_mut().enumerate() {
                let k = (i / stride) % n_p;
                let mut acc = 0.0;
                for (j, w) in kernel.iter().enumerate() {
                    let kk = k as isize + j as isize - radius as isize;
                    if kk >= 0 && (kk as usize) < n_p {
                        acc += w * row[(i as isize + (kk - k as isize) * stride as isize) as usize];
                    }
                }
                *t = acc;
            }
            row.copy_from_slice(&tmp);
        }
        let target = rho.values()[ix] * target_scale;
        let have: f64 = row.iter().sum();
        if have > 0.0 {
            for v in row.iter_mut() {
                *v = (*v * target / have).min(1.0);
            }
        }
    }
    PhaseSpaceMeasure::new(g, values, MeasureKind::Vlasov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasespace::SpatialGrid;

    fn disc(pg: &PhaseGrid, shift: f64) -> PhaseSpaceMeasure {
        let g = pg.x();
        let np = pg.num_p_points();
        let mut v = vec![0.0; pg.num_points()];
        for ix in 0..g.num_points() {
            for ip in 0..np {
                let (x, p) = (g.node(ix), pg.p_node(ip) + shift);
                if x * x + p * p <= 2.0 {
                    v[ix * np + ip] = 1.0;
                }
            }
        }
        PhaseSpaceMeasure::new(*pg, v, MeasureKind::Vlasov).unwrap()
    }

    fn setup() -> (SpatialGrid, PhaseGrid, ExternalFields, Density) {
        let g = SpatialGrid::new(1, 4.0, 512).unwrap();
        let pg = PhaseGrid::uniform(g, 1024, 2.5).unwrap();
        let f = ExternalFields::new(g, g.sample(|x| x[0] * x[0])).unwrap();
        let rho = Density::new(g, g.sample(|x| (2.0 - x[0] * x[0]).max(0.0).sqrt() / PI)).unwrap();
        (g, pg, f, rho)
    }

    #[test]
    fn disc_marginal_and_energy() {
        let (g, pg, f, rho) = setup();
        let m = disc(&pg, 0.0);
        assert!(rho_of_m(&m).unwrap().l1_distance(&rho) < 2e-3);
        assert!((vlasov_energy(&m, &f).unwrap() - 1.0).abs() < 5e-3);
        let zero = PhaseSpaceMeasure::new(pg, vec![0.0; pg.num_points()], MeasureKind::Vlasov).unwrap();
        assert_eq!(vlasov_energy(&zero, &f).unwrap(), 0.0);
        assert!(rho_of_m(&zero).unwrap().values().iter().all(|&v| v == 0.0));
        let _ = g;
    }

    #[test]
    fn constant_vector_potential_is_a_momentum_shift() {
        let (g, pg, f, _) = setup();
        let a = 51.0 * pg.h_p();
        let shifted = disc(&pg, a);
        let fa = f.clone().with_vector_potential(vec![a; g.num_points()]).unwrap();
        let e0 = vlasov_energy(&disc(&pg, 0.0), &f).unwrap();
        let ea = vlasov_energy(&shifted, &fa).unwrap();
        assert!((e0 - ea).abs() < 1e-12);
    }

    #[test]
    fn bathtub_beats_required_competitors() {
        let (_, pg, f, rho) = setup();
        let m_rho = build_m_rho(&rho, None, &pg).unwrap();
        let comps = vec![
            dilated_competitor(&rho, None, &pg, 1.1).unwrap(),
            m_rho.clone(),
            mollified_competitor(&m_rho, &rho, 0.1).unwrap(),
        ];
        let rep = bathtub_optimality_check(&rho, &f, &pg, &comps).unwrap();
        assert!(rep.optimal);
        assert!(rep.rows[0].margin > 0.0);
        assert_eq!(rep.rows[1].margin, 0.0);
        assert!(rep.rows[2].margin >= 0.0);
    }

    #[test]
    fn competitor_with_wrong_marginal_is_rejected() {
        let (_, pg, f, rho) = setup();
        let half = PhaseSpaceMeasure::new(
            pg,
            build_m_rho(&rho, None, &pg).unwrap().values().iter().map(|v| 0.5 * v).collect(),
            MeasureKind::Vlasov,
        )
        .unwrap();
        assert!(matches!(
            bathtub_optimality_check(&rho, &f, &pg, &[half]),
            Err(Error::Precondition(_))
        ));
    }
}
