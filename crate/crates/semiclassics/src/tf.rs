//! Thomas-Fermi functional, its minimiser and the bathtub phase-space measure m_ρ.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::phasespace::{
    check_dim, integrate, Density, Direction, MeasureKind, NdFft, PhaseGrid, PhaseSpaceMeasure,
    SpatialGrid,
};

/// A real function of a point in R^d.
pub type Profile = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Relative tolerance on negative Fourier modes for the convexity flag.
const CONVEX_TOL: f64 = 1e-10;

/// c_TF = 4π² (d/|S^{d-1}|)^{2/d}.
pub fn c_tf(d: usize) -> Result<f64> {
    check_dim(d)?;
    let sphere = match d {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    };
    Ok(4.0 * PI * PI * (d as f64 / sphere).powf(2.0 / d as f64))
}

/// Even two-body potential sampled on the doubled grid, ready for linear convolution.
#[derive(Clone)]
pub struct Interaction {
    grid: SpatialGrid,
    profile: Profile,
    kernel_hat: Vec<Complex64>,
    w_hat: Vec<f64>,
    convex: bool,
}

impl fmt::Debug for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Interaction")
            .field("grid", &self.grid)
            .field("convex", &self.convex)
            .field("min_w_hat", &self.min_w_hat())
            .finish()
    }
}

impl Interaction {
    /// Samples `w` at the offsets x_i - x_j (|offset| < R per axis), symmetrised under x → -x.
    pub fn new(grid: SpatialGrid, profile: Profile) -> Result<Self> {
        let n = grid.n();
        let d = grid.d();
        let m = 2 * n;
        let h = grid.h();
        let total = m.pow(d as u32);
        let mut kernel = vec![Complex64::new(0.0, 0.0); total];
        let mut plus = [0.0; 3];
        let mut minus = [0.0; 3];
        for (idx, slot) in kernel.iter_mut().enumerate() {
            let mut rem = idx;
            let mut skip = false;
            for a in (0..d).rev() {
                let j = rem % m;
                rem /= m;
                if j == n {
                    skip = true;
                }
                let off = if j < n { j as f64 } else { j as f64 - m as f64 };
                plus[a] = off * h;
                minus[a] = -off * h;
            }
            if skip {
                continue;
            }
            let v = 0.5 * (profile(&plus[..d]) + profile(&minus[..d]));
            if !v.is_finite() {
                return Err(Error::NonFinite("interaction profile".into()));
            }
            *slot = Complex64::new(v, 0.0);
        }
        NdFft::new(m, d).process(&mut kernel, Direction::Forward);
        let scale = grid.cell_volume() * (2.0 * PI).powf(-0.5 * d as f64);
        let w_hat: Vec<f64> = kernel.iter().map(|k| k.re * scale).collect();
        let max = w_hat.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let min = w_hat.iter().cloned().fold(f64::INFINITY, f64::min);
        let convex = min >= -CONVEX_TOL * max.max(f64::MIN_POSITIVE);
        Ok(Self {
            grid,
            profile,
            kernel_hat: kernel,
            w_hat,
            convex,
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Evaluates w at an arbitrary point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.profile)(x)
    }

    /// ŵ on the doubled-grid frequencies, scaled as h^d (2π)^{-d/2} times the DFT.
    pub fn w_hat(&self) -> &[f64] {
        &self.w_hat
    }

    pub fn min_w_hat(&self) -> f64 {
        self.w_hat.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Whether ŵ ≥ 0 on the grid up to round-off, i.e. the discrete pair energy is convex.
    pub fn is_convex(&self) -> bool {
        self.convex
    }

    /// (w ∗ u)(x_i) = Σ_j h^d w(x_i - x_j) u_j for complex u.
    pub fn convolve_complex(&self, u: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n();
        let d = self.grid.d();
        let m = 2 * n;
        let total = m.pow(d as u32);
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        for (i, v) in u.iter().enumerate() {
            buf[self.padded_index(i)] = *v;
        }
        let mut fft = NdFft::new(m, d);
        fft.process(&mut buf, Direction::Forward);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        fft.process(&mut buf, Direction::Inverse);
        let scale = self.grid.cell_volume() / total as f64;
        (0..u.len()).map(|i| buf[self.padded_index(i)] * scale).collect()
    }

    /// (w ∗ ρ) for real ρ.
    pub fn convolve(&self, rho: &[f64]) -> Vec<f64> {
        let c: Vec<Complex64> = rho.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.convolve_complex(&c).into_iter().map(|v| v.re).collect()
    }

    /// D_w(ρ, ρ) = ∬ w(x - y) ρ(x) ρ(y).
    pub fn pair_energy(&self, rho: &[f64]) -> f64 {
        let conv = self.convolve(rho);
        let prod: Vec<f64> = rho.iter().zip(&conv).map(|(a, b)| a * b).collect();
        integrate(&prod, &self.grid)
    }

    fn padded_index(&self, i: usize) -> usize {
        let n = self.grid.n();
        let mi = self.grid.multi_index(i);
        mi[..self.grid.d()].iter().fold(0, |acc, &j| acc * 2 * n + j)
    }
}

/// External potential V (possibly +∞ outside a subdomain), vector potential A and interaction w.
#[derive(Debug, Clone)]
pub struct ExternalFields {
    grid: SpatialGrid,
    v: Vec<f64>,
    a: Option<Vec<f64>>,
    w: Option<Interaction>,
}

impl ExternalFields {
    pub fn new(grid: SpatialGrid, v: Vec<f64>) -> Result<Self> {
        if v.len() != grid.num_points() {
            return Err(Error::Config(format!(
                "potential has {} values for {} grid points",
                v.len(),
                grid.num_points()
            )));
        }
        if v.iter().any(|x| x.is_nan() || *x == f64::NEG_INFINITY) {
            return Err(Error::NonFinite("external potential".into()));
        }
        if v.iter().all(|x| x.is_infinite()) {
            return Err(Error::Config("potential is +∞ everywhere".into()));
        }
        Ok(Self {
            grid,
            v,
            a: None,
            w: None,
        })
    }

    /// V = 0 on the whole grid.
    pub fn free(grid: SpatialGrid) -> Self {
        Self::new(grid, vec![0.0; grid.num_points()]).unwrap()
    }

    /// `a` holds d components per node, node-major.
    pub fn with_vector_potential(mut self, a: Vec<f64>) -> Result<Self> {
        if a.len() != self.grid.num_points() * self.grid.d() {
            return Err(Error::Config(format!(
                "vector potential needs {} values, got {}",
                self.grid.num_points() * self.grid.d(),
                a.len()
            )));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector potential".into()));
        }
        self.a = if a.iter().all(|&x| x == 0.0) { None } else { Some(a) };
        Ok(self)
    }

    pub fn with_interaction(mut self, profile: Profile) -> Result<Self> {
        self.w = Some(Interaction::new(self.grid, profile)?);
        Ok(self)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn a(&self) -> Option<&[f64]> {
        self.a.as_deref()
    }

    pub fn w(&self) -> Option<&Interaction> {
        self.w.as_ref()
    }

    /// Nodes where V is finite.
    pub fn active(&self) -> Vec<bool> {
        self.v.iter().map(|x| x.is_finite()).collect()
    }

    /// Same fields with V shifted by a constant.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.v {
            *v += c;
        }
        out
    }

    /// ∫ V ρ with the convention 0 · ∞ = 0.
    pub fn potential_energy(&self, rho: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (v, r) in self.v.iter().zip(rho) {
            if *r == 0.0 {
                continue;
            }
            if v.is_infinite() {
                return f64::INFINITY;
            }
            acc += v * r;
        }
        acc * self.grid.cell_volume()
    }

    /// ½ D_w(ρ, ρ), zero without interaction.
    pub fn interaction_energy(&self, rho: &[f64]) -> f64 {
        self.w.as_ref().map_or(0.0, |w| 0.5 * w.pair_energy(rho))
    }
}

/// Thomas-Fermi problem of mass λ.
#[derive(Debug, Clone)]
pub struct TFProblem {
    pub fields: ExternalFields,
    pub lambda: f64,
    pub c: f64,
}

impl TFProblem {
    pub fn new(fields: ExternalFields, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("mass {lambda} must be non-negative")));
        }
        let c = c_tf(fields.grid().d())?;
        Ok(Self { fields, lambda, c })
    }

    pub fn d(&self) -> usize {
        self.fields.grid().d()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TfOptions {
    pub mixing: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TfOptions {
    fn default() -> Self {
        Self {
            mixing: 0.5,
            max_iter: 10_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TFSolution {
    pub rho: Density,
    pub mu: f64,
    pub energy: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// (d/(d+2)) c ∫ρ^{1+2/d} + ∫Vρ + ½∬w(x-y)ρ(x)ρ(y).
pub fn tf_energy(rho: &Density, problem: &TFProblem) -> Result<f64> {
    if rho.grid() != problem.fields.grid() {
        return Err(Error::Config("density and fields live on different grids".into()));
    }
    let d = problem.d() as f64;
    let expo = 1.0 + 2.0 / d;
    let kin: Vec<f64> = rho.values().iter().map(|r| r.max(0.0).powf(expo)).collect();
    let e = d / (d + 2.0) * problem.c * integrate(&kin, rho.grid())
        + problem.fields.potential_energy(rho.values())
        + problem.fields.interaction_energy(rho.values());
    if e.is_nan() {
        return Err(Error::NonFinite("Thomas-Fermi energy".into()));
    }
    Ok(e)
}

/// ((μ - Φ)_+ / c)^{d/2} at every node; zero where Φ = +∞.
fn profile_at(mu: f64, phi: &[f64], c: f64, d: usize, out: &mut [f64]) {
    for (o, p) in out.iter_mut().zip(phi) {
        let t = (mu - p).max(0.0) / c;
        *o = match d {
            1 => t.sqrt(),
            2 => t,
            _ => t * t.sqrt(),
        };
    }
}

/// Chemical potential with mass(((μ - Φ)_+/c)^{d/2}) = λ, by bisection.
fn solve_mu(phi: &[f64], problem: &TFProblem, out: &mut [f64]) -> f64 {
    let grid = problem.fields.grid();
    let d = problem.d();
    let w = grid.cell_volume();
    let finite = phi.iter().filter(|p| p.is_finite());
    let lo0 = finite.clone().cloned().fold(f64::INFINITY, f64::min);
    let hi0 = finite.cloned().fold(f64::NEG_INFINITY, f64::max)
        + problem.c * (problem.lambda / w).powf(2.0 / d as f64);
    let mass = |mu: f64, buf: &mut [f64]| {
        profile_at(mu, phi, problem.c, d, buf);
        buf.iter().sum::<f64>() * w
    };
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid, out) < problem.lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    profile_at(hi, phi, problem.c, d, out);
    hi
}

/// Minimises the Thomas-Fermi energy at mass λ with default options.
pub fn tf_minimize(problem: &TFProblem) -> Result<TFSolution> {
    tf_minimize_with(problem, &TfOptions::default())
}

/// Damped fixed point ρ ← (1-θ)ρ + θ((μ - V - w∗ρ)_+/c)^{d/2}, μ fixed by the mass constraint.
///
/// θ is halved whenever the Euler-Lagrange residual grows.
pub fn tf_minimize_with(problem: &TFProblem, opts: &TfOptions) -> Result<TFSolution> {
    let grid = *problem.fields.grid();
    if let Some(w) = problem.fields.w() {
        if !w.is_convex() {
            return Err(Error::Precondition(format!(
                "interaction has negative Fourier modes (min ŵ = {:e})",
                w.min_w_hat()
            )));
        }
    }
    if !(opts.mixing > 0.0 && opts.mixing <= 1.0) {
        return Err(Error::Config(format!("mixing {} not in (0, 1]", opts.mixing)));
    }
    let npts = grid.num_points();
    if problem.lambda == 0.0 {
        return Ok(TFSolution {
            rho: Density::zero(grid),
            mu: f64::NEG_INFINITY,
            energy: 0.0,
            iterations: 0,
            residual: 0.0,
        });
    }
    let v = problem.fields.v();
    let mut target = vec![0.0; npts];
    let mu0 = solve_mu(v, problem, &mut target);
    let Some(w) = problem.fields.w() else {
        let rho = Density::new(grid, target)?;
        let energy = tf_energy(&rho, problem)?;
        return Ok(TFSolution {
            rho,
            mu: mu0,
            energy,
            iterations: 1,
            residual: 0.0,
        });
    };
    let mut rho = target.clone();
    let mut theta = opts.mixing;
    let mut prev = f64::INFINITY;
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        let conv = w.convolve(&rho);
        let phi: Vec<f64> = v.iter().zip(&conv).map(|(a, b)| a + b).collect();
        let mu = solve_mu(&phi, problem, &mut target);
        let residual = rho
            .iter()
            .zip(&target)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        history.push(residual);
        if residual <= opts.tol {
            let rho = Density::new(grid, rho)?;
            let energy = tf_energy(&rho, problem)?;
            return Ok(TFSolution {
                rho,
                mu,
                energy,
                iterations: it,
                residual,
            });
        }
        if residual > prev {
            theta *= 0.5;
        }
        prev = residual;
        for (r, t) in rho.iter_mut().zip(&target) {
            *r = (1.0 - theta) * *r + theta * t;
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: prev,
        history,
    })
}

/// m_ρ(x, p) = 1(|p + A(x)|² ≤ c ρ(x)^{2/d}) sampled at phase-grid nodes.
pub fn build_m_rho(rho: &Density, a: Option<&[f64]>, pgrid: &PhaseGrid) -> Result<PhaseSpaceMeasure> {
    let grid = rho.grid();
    if grid != pgrid.x() {
        return Err(Error::Config("density and phase grid disagree".into()));
    }
    let d = grid.d();
    let c = c_tf(d)?;
    let zero = vec![0.0; grid.num_points() * d];
    let a = a.unwrap_or(&zero);
    let np = pgrid.num_p_points();
    let mut values = vec![0.0; pgrid.num_points()];
    for (ix, &r) in rho.values().iter().enumerate() {
        if r <= 0.0 {
            continue;
        }
        let r2 = c * r.powf(2.0 / d as f64);
        let radius = r2.sqrt();
        let ax = &a[ix * d..(ix + 1) * d];
        let reach = ax.iter().fold(0.0f64, |m, &v| m.max(v.abs())) + radius;
        if reach > pgrid.p_max() {
            return Err(Error::Config(format!(
                "momentum grid extent {} does not cover |p + A| ≤ {}",
                pgrid.p_max(),
                reach
            )));
        }
        for ip in 0..np {
            let p = pgrid.p_point(ip);
            let s: f64 = (0..d).map(|k| (p[k] + ax[k]).powi(2)).sum();
            if s <= r2 {
                values[ix * np + ip] = 1.0;
            }
        }
    }
    PhaseSpaceMeasure::new(*pgrid, values, MeasureKind::Vlasov)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SubadditivityRow {
    pub lambda: f64,
    pub e_lambda: f64,
    pub e_complement: f64,
    pub e_one: f64,
    /// Whether e(1) ≤ e(λ) + e(1 - λ) up to round-off.
    pub holds: bool,
}

/// Tabulates e(1) against e(λ) + e(1 - λ) for the given masses.
pub fn subadditivity_check(
    fields: &ExternalFields,
    lambdas: &[f64],
    opts: &TfOptions,
) -> Result<Vec<SubadditivityRow>> {
    let energy = |l: f64| -> Result<f64> {
        Ok(tf_minimize_with(&TFProblem::new(fields.clone(), l)?, opts)?.energy)
    };
    let e_one = energy(1.0)?;
    lambdas
        .iter()
        .map(|&l| {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("λ = {l} outside [0, 1]")));
            }
            let e_lambda = energy(l)?;
            let e_complement = energy(1.0 - l)?;
            let slack = 1e-9 * (e_one.abs() + e_lambda.abs() + e_complement.abs()).max(1.0);
            Ok(SubadditivityRow {
                lambda: l,
                e_lambda,
                e_complement,
                e_one,
                holds: e_one <= e_lambda + e_complement + slack,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, side: f64) -> SpatialGrid {
        SpatialGrid::new(1, side, n).unwrap()
    }

    fn harmonic(g: SpatialGrid) -> ExternalFields {
        ExternalFields::new(g, g.sample(|x| x.iter().map(|v| v * v).sum())).unwrap()
    }

    #[test]
    fn constants() {
        assert!((c_tf(1).unwrap() - PI * PI).abs() < 1e-12 * PI * PI);
        assert!((c_tf(2).unwrap() - 4.0 * PI).abs() < 1e-12 * 4.0 * PI);
        let c3 = (6.0 * PI * PI).powf(2.0 / 3.0);
        assert!((c_tf(3).unwrap() - c3).abs() < 1e-12 * c3);
        assert!(c_tf(4).is_err());
    }

    #[test]
    fn energy_of_closed_form_profiles() {
        let g = line(1024, 8.0);
        let p = TFProblem::new(harmonic(g), 1.0).unwrap();
        let rho = Density::new(g, g.sample(|x| (2.0 - x[0] * x[0]).max(0.0).sqrt() / PI)).unwrap();
        assert!((tf_energy(&rho, &p).unwrap() - 1.0).abs() < 2e-4);
        assert_eq!(tf_energy(&Density::zero(g), &p).unwrap(), 0.0);

        let g = line(1024, 4.0);
        let p = TFProblem::new(ExternalFields::free(g), 1.0).unwrap();
        let rho = Density::new(g, g.sample(|x| if x[0].abs() < 1.0 { 0.5 } else { 0.0 })).unwrap();
        assert!((tf_energy(&rho, &p).unwrap() - PI * PI / 12.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_potential_is_charged_only_where_occupied() {
        let g = line(8, 2.0);
        let v = g.sample(|x| if x[0].abs() < 0.5 { 0.0 } else { f64::INFINITY });
        let f = ExternalFields::new(g, v).unwrap();
        let inside = g.sample(|x| if x[0].abs() < 0.5 { 1.0 } else { 0.0 });
        assert_eq!(f.potential_energy(&inside), 0.0);
        assert_eq!(f.potential_energy(&vec![1.0; 8]), f64::INFINITY);
    }

    #[test]
    fn harmonic_minimiser() {
        let g = line(2048, 8.0);
        for (lambda, mu, e) in [(1.0, 2.0, 1.0), (2.0, 4.0, 4.0)] {
            let sol = tf_minimize(&TFProblem::new(harmonic(g), lambda).unwrap()).unwrap();
            assert!((sol.mu - mu).abs() < 1e-3, "mu {}", sol.mu);
            assert!((sol.energy - e).abs() < 1e-3, "e {}", sol.energy);
            assert!((sol.rho.mass() - lambda).abs() < 1e-8);
        }
    }

    #[test]
    fn dirichlet_box_is_uniform() {
        let g = line(1024, 4.0);
        let v = g.sample(|x| if x[0].abs() < 1.0 { 0.0 } else { f64::INFINITY });
        let sol = tf_minimize(&TFProblem::new(ExternalFields::new(g, v).unwrap(), 1.0).unwrap()).unwrap();
        assert!((sol.energy - PI * PI / 12.0).abs() < 1e-3);
        for (x, r) in g.axis().iter().zip(sol.rho.values()) {
            let expect = if x.abs() < 1.0 { 0.5 } else { 0.0 };
            assert!((r - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn interacting_solution_satisfies_euler_lagrange() {
        let g = line(1024, 8.0);
        let f = harmonic(g)
            .with_interaction(Arc::new(|x: &[f64]| 0.5 * (-x[0] * x[0] / 2.0).exp()))
            .unwrap();
        assert!(f.w().unwrap().is_convex());
        let p = TFProblem::new(f, 1.0).unwrap();
        let sol = tf_minimize(&p).unwrap();
        assert!(sol.residual <= 1e-7);
        assert!((sol.rho.mass() - 1.0).abs() < 1e-8);
        assert!(sol.energy > 1.0);
    }

    #[test]
    fn non_convex_interaction_is_rejected() {
        let g = line(256, 8.0);
        let f = harmonic(g)
            .with_interaction(Arc::new(|x: &[f64]| -(-x[0] * x[0]).exp()))
            .unwrap();
        assert!(!f.w().unwrap().is_convex());
        let err = tf_minimize(&TFProblem::new(f, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn linear_convolution_matches_direct_sum() {
        let g = SpatialGrid::new(2, 3.0, 8).unwrap();
        let w = Interaction::new(g, Arc::new(|x: &[f64]| (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp())).unwrap();
        let rho: Vec<f64> = (0..g.num_points()).map(|i| ((i * 7 % 11) as f64).sqrt()).collect();
        let conv = w.convolve(&rho);
        for i in 0..g.num_points() {
            let xi = g.point(i);
            let direct: f64 = (0..g.num_points())
                .map(|j| {
                    let xj = g.point(j);
                    w.eval(&[xi[0] - xj[0], xi[1] - xj[1]]) * rho[j]
                })
                .sum::<f64>()
                * g.cell_volume();
            assert!((direct - conv[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn m_rho_is_the_phase_space_disc() {
        let g = line(1024, 4.0);
        let rho = Density::new(g, g.sample(|x| (2.0 - x[0] * x[0]).max(0.0).sqrt() / PI)).unwrap();
        let pg = PhaseGrid::uniform(g, 1024, 2.0).unwrap();
        let m = build_m_rho(&rho, None, &pg).unwrap();
        for ix in (0..1024).step_by(37) {
            for ip in (0..1024).step_by(41) {
                let (x, p) = (g.node(ix), pg.p_node(ip));
                let r2 = x * x + p * p;
                if (r2 - 2.0).abs() > 1e-9 {
                    assert_eq!(m.values()[pg.index(ix, ip)], if r2 < 2.0 { 1.0 } else { 0.0 });
                }
            }
        }
        let small = PhaseGrid::uniform(g, 64, 1.0).unwrap();
        assert!(matches!(build_m_rho(&rho, None, &small), Err(Error::Config(_))));
        let zero = build_m_rho(&Density::zero(g), None, &small).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn subadditivity_fails_for_confined_harmonic_problem() {
        let g = line(1024, 8.0);
        let rows = subadditivity_check(&harmonic(g), &[0.0, 0.5, 1.0], &TfOptions::default()).unwrap();
        assert!(rows[0].holds && rows[2].holds);
        assert!(!rows[1].holds);
        assert!((rows[1].e_lambda - 0.25).abs() < 1e-3);
    }
}
