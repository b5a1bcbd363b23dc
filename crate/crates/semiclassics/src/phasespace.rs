//! Grids, quadrature and the ħ-scaled Fourier transform.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Tolerance on the fermionic bound `0 <= m <= 1` for stored measures.
pub const MEASURE_TOL: f64 = 1e-8;

/// Particle number, dimension and the coupled semi-classical parameter ħ = N^{-1/d}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scaling {
    n: usize,
    d: usize,
    hbar: f64,
}

impl Scaling {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("particle number must be positive".into()));
        }
        check_dim(d)?;
        let hbar = match d {
            1 => 1.0 / n as f64,
            2 => 1.0 / (n as f64).sqrt(),
            _ => 1.0 / (n as f64).cbrt(),
        };
        Ok(Self { n, d, hbar })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }
}

pub(crate) fn check_dim(d: usize) -> Result<()> {
    if (1..=3).contains(&d) {
        Ok(())
    } else {
        Err(Error::Config(format!("dimension {d} not in 1..=3")))
    }
}

/// Cell-centred uniform grid on the cube (-R/2, R/2)^d with n nodes per axis.
///
/// Nodes are x_j = -R/2 + (j + 1/2) h with h = R/n. Flat indices are row-major,
/// the last axis varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpatialGrid {
    d: usize,
    side: f64,
    n: usize,
}

impl SpatialGrid {
    pub fn new(d: usize, side: f64, n: usize) -> Result<Self> {
        check_dim(d)?;
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::Config(format!("box side {side} must be positive")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "points per axis must be a power of two, got {n}"
            )));
        }
        Ok(Self { d, side, n })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Side length R of the cube.
    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.side
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn num_points(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn node(&self, j: usize) -> f64 {
        -0.5 * self.side + (j as f64 + 0.5) * self.h()
    }

    pub fn axis(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Per-axis indices of a flat index.
    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for a in (0..self.d).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi[..self.d].iter().fold(0, |acc, &j| acc * self.n + j)
    }

    /// Coordinates of a node; unused trailing components are zero.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let m = self.multi_index(idx);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = self.node(m[a]);
        }
        x
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.num_points())
            .map(|i| f(&self.point(i)[..self.d]))
            .collect()
    }
}

/// Phase space grid: a spatial grid times a uniform momentum grid.
///
/// Momentum nodes are p_k = p_min + k h_p on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseGrid {
    x: SpatialGrid,
    n_p: usize,
    h_p: f64,
    p_min: f64,
    p_max: f64,
}

impl PhaseGrid {
    /// The FFT-dual momentum grid: p_k = (k - n/2) h_p with h_p = 2πħ/R, so P_max = πħ/h.
    pub fn dual(x: SpatialGrid, hbar: f64) -> Self {
        let h_p = 2.0 * PI * hbar / x.side();
        Self {
            x,
            n_p: x.n(),
            h_p,
            p_min: -(x.n() as f64 / 2.0) * h_p,
            p_max: (x.n() as f64 / 2.0) * h_p,
        }
    }

    /// Cell-centred momentum grid on (-p_max, p_max) with `n_p` nodes per axis.
    pub fn uniform(x: SpatialGrid, n_p: usize, p_max: f64) -> Result<Self> {
        if n_p < 2 || !(p_max.is_finite() && p_max > 0.0) {
            return Err(Error::Config(format!(
                "momentum grid needs n_p >= 2 and p_max > 0, got {n_p}, {p_max}"
            )));
        }
        let h_p = 2.0 * p_max / n_p as f64;
        Ok(Self {
            x,
            n_p,
            h_p,
            p_min: -p_max + 0.5 * h_p,
            p_max,
        })
    }

    pub fn x(&self) -> &SpatialGrid {
        &self.x
    }

    pub fn d(&self) -> usize {
        self.x.d()
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn h_p(&self) -> f64 {
        self.h_p
    }

    /// Momentum extent P_max of the grid.
    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    /// Whether the momentum extent reaches the spatial Nyquist limit πħ/h.
    pub fn covers_nyquist(&self, hbar: f64) -> bool {
        self.p_max() >= PI * hbar / self.x.h() * (1.0 - 1e-12)
    }

    pub fn p_node(&self, k: usize) -> f64 {
        self.p_min + k as f64 * self.h_p
    }

    pub fn p_axis(&self) -> Vec<f64> {
        (0..self.n_p).map(|k| self.p_node(k)).collect()
    }

    pub fn num_p_points(&self) -> usize {
        self.n_p.pow(self.d() as u32)
    }

    pub fn num_points(&self) -> usize {
        self.x.num_points() * self.num_p_points()
    }

    /// Quadrature weight (h h_p)^d.
    pub fn cell_volume(&self) -> f64 {
        (self.x.h() * self.h_p).powi(self.d() as i32)
    }

    pub fn p_cell_volume(&self) -> f64 {
        self.h_p.powi(self.d() as i32)
    }

    /// Momentum coordinates of a flat momentum index.
    pub fn p_point(&self, mut ip: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for a in (0..self.d()).rev() {
            out[a] = self.p_node(ip % self.n_p);
            ip /= self.n_p;
        }
        out
    }

    /// Flat phase-space index; x-index major, p-index minor.
    pub fn index(&self, ix: usize, ip: usize) -> usize {
        ix * self.num_p_points() + ip
    }
}

/// Midpoint-rule quadrature weight of a grid.
pub trait Quadrature {
    fn weight(&self) -> f64;
}

impl Quadrature for SpatialGrid {
    fn weight(&self) -> f64 {
        self.cell_volume()
    }
}

impl Quadrature for PhaseGrid {
    fn weight(&self) -> f64 {
        self.cell_volume()
    }
}

/// Midpoint-rule integral of nodal values.
pub fn integrate<G: Quadrature>(values: &[f64], grid: &G) -> f64 {
    values.iter().sum::<f64>() * grid.weight()
}

/// A spatial density ρ ≥ 0 sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl Density {
    /// Values may carry round-off negatives down to -1e-12 times the maximum.
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_points() {
            return Err(Error::Config(format!(
                "density has {} values for {} grid points",
                values.len(),
                grid.num_points()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density".into()));
        }
        let max = values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if values.iter().any(|&v| v < -1e-12 * max.max(1.0)) {
            return Err(Error::Precondition("density has negative values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: SpatialGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.num_points()],
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        integrate(&self.values, &self.grid)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |a: f64, &b| a.max(b))
    }

    /// L¹ distance to another density on the same grid.
    pub fn l1_distance(&self, other: &Density) -> f64 {
        let diff: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .collect();
        integrate(&diff, &self.grid)
    }
}

/// What a phase-space function represents; Wigner functions may be negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MeasureKind {
    Husimi,
    Vlasov,
    Wigner,
}

/// A function m(x, p) on a phase grid, laid out x-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceMeasure {
    grid: PhaseGrid,
    values: Vec<f64>,
    kind: MeasureKind,
}

impl PhaseSpaceMeasure {
    pub fn new(grid: PhaseGrid, values: Vec<f64>, kind: MeasureKind) -> Result<Self> {
        if values.len() != grid.num_points() {
            return Err(Error::Config(format!(
                "measure has {} values for {} phase points",
                values.len(),
                grid.num_points()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phase-space measure".into()));
        }
        let m = Self { grid, values, kind };
        if kind != MeasureKind::Wigner {
            let (lo, hi) = m.range();
            if lo < -MEASURE_TOL || hi > 1.0 + MEASURE_TOL {
                return Err(Error::Precondition(format!(
                    "{kind:?} measure outside [0,1]: range [{lo:e}, {hi}]"
                )));
            }
        }
        Ok(m)
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// ∬ m dx dp.
    pub fn total(&self) -> f64 {
        integrate(&self.values, &self.grid)
    }

    /// (2π)^{-d} ∬ m dx dp.
    pub fn mass(&self) -> f64 {
        self.total() / (2.0 * PI).powi(self.grid.d() as i32)
    }

    /// ∬ |m - other| dx dp.
    pub fn l1_distance(&self, other: &PhaseSpaceMeasure) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum();
        s * self.grid.cell_volume()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// n-dimensional complex FFT on an n^d row-major array.
pub(crate) struct NdFft {
    n: usize,
    d: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl NdFft {
    pub fn new(n: usize, d: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            n,
            d,
            fwd,
            inv,
            line: vec![Complex64::new(0.0, 0.0); n],
            scratch: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Unnormalised transform with kernel e^{∓2πi k j/n}.
    pub fn process(&mut self, data: &mut [Complex64], dir: Direction) {
        let n = self.n;
        let total = n.pow(self.d as u32);
        debug_assert_eq!(data.len(), total);
        let plan = match dir {
            Direction::Forward => &self.fwd,
            Direction::Inverse => &self.inv,
        };
        if self.d == 1 {
            plan.process_with_scratch(data, &mut self.scratch);
            return;
        }
        for axis in 0..self.d {
            let stride = n.pow((self.d - 1 - axis) as u32);
            if stride == 1 {
                for chunk in data.chunks_exact_mut(n) {
                    plan.process_with_scratch(chunk, &mut self.scratch);
                }
                continue;
            }
            let block = stride * n;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for j in 0..n {
                        self.line[j] = data[base + j * stride];
                    }
                    plan.process_with_scratch(&mut self.line, &mut self.scratch);
                    for j in 0..n {
                        data[base + j * stride] = self.line[j];
                    }
                }
            }
        }
    }
}

/// Reusable ħ-Fourier transform between a spatial grid and its dual momentum grid.
pub(crate) struct HbarFourier {
    fft: NdFft,
    sign: Vec<f64>,
    phase: Vec<Complex64>,
    fwd_scale: f64,
    inv_scale: f64,
}

impl HbarFourier {
    pub fn new(grid: SpatialGrid, hbar: f64) -> Self {
        let n = grid.n();
        let d = grid.d();
        let total = grid.num_points();
        let phase1: Vec<Complex64> = (0..n)
            .map(|k| {
                let s = k as f64 - n as f64 / 2.0;
                Complex64::from_polar(1.0, PI * s * (1.0 - 1.0 / n as f64))
            })
            .collect();
        let mut sign = vec![1.0; total];
        let mut phase = vec![Complex64::new(1.0, 0.0); total];
        for i in 0..total {
            let m = grid.multi_index(i);
            for a in 0..d {
                if m[a] % 2 == 1 {
                    sign[i] = -sign[i];
                }
                phase[i] *= phase1[m[a]];
            }
        }
        let h_p = 2.0 * PI * hbar / grid.side();
        let c = (2.0 * PI * hbar).powf(-0.5 * d as f64);
        Self {
            fft: NdFft::new(n, d),
            sign,
            phase,
            fwd_scale: c * grid.cell_volume(),
            inv_scale: c * h_p.powi(d as i32),
        }
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        for (v, s) in data.iter_mut().zip(&self.sign) {
            *v *= *s;
        }
        self.fft.process(data, Direction::Forward);
        for (v, ph) in data.iter_mut().zip(&self.phase) {
            *v *= ph * self.fwd_scale;
        }
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        for (v, ph) in data.iter_mut().zip(&self.phase) {
            *v *= ph.conj();
        }
        self.fft.process(data, Direction::Inverse);
        for (v, s) in data.iter_mut().zip(&self.sign) {
            *v *= *s * self.inv_scale;
        }
    }
}

/// F_ħ[f](p) = (2πħ)^{-d/2} ∫ f(x) e^{-ip·x/ħ} dx on the dual momentum grid, and its inverse.
pub fn fourier_hbar(
    field: &[Complex64],
    grid: &SpatialGrid,
    scaling: &Scaling,
    direction: Direction,
) -> Result<Vec<Complex64>> {
    fourier_hbar_with(field, grid, scaling.hbar(), direction)
}

/// As [`fourier_hbar`] with an explicit ħ.
pub fn fourier_hbar_with(
    field: &[Complex64],
    grid: &SpatialGrid,
    hbar: f64,
    direction: Direction,
) -> Result<Vec<Complex64>> {
    if !grid.n().is_power_of_two() {
        return Err(Error::Config("FFT needs a power-of-two grid".into()));
    }
    if field.len() != grid.num_points() {
        return Err(Error::Config(format!(
            "field has {} values for {} grid points",
            field.len(),
            grid.num_points()
        )));
    }
    let mut out = field.to_vec();
    let mut ft = HbarFourier::new(*grid, hbar);
    match direction {
        Direction::Forward => ft.forward(&mut out),
        Direction::Inverse => ft.inverse(&mut out),
    }
    Ok(out)
}

/// Real-to-complex lift.
pub fn complexify(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_couples_hbar_to_n() {
        for d in 1..=3 {
            for n in [1, 7, 64, 1000] {
                let s = Scaling::new(n, d).unwrap();
                let prod = s.hbar().powi(d as i32) * n as f64;
                assert!((prod - 1.0).abs() < 1e-14);
            }
        }
        assert!(Scaling::new(0, 1).is_err());
        assert!(Scaling::new(4, 4).is_err());
    }

    #[test]
    fn grid_rejects_non_power_of_two() {
        assert!(SpatialGrid::new(1, 2.0, 100).is_err());
        let g = SpatialGrid::new(1, 2.0, 4).unwrap();
        assert_eq!(g.axis(), vec![-0.75, -0.25, 0.25, 0.75]);
    }

    #[test]
    fn multi_index_round_trip() {
        let g = SpatialGrid::new(3, 1.0, 4).unwrap();
        for i in 0..g.num_points() {
            assert_eq!(g.flat_index(&g.multi_index(i)), i);
        }
    }

    #[test]
    fn constants_and_quadratics_integrate() {
        for n in [2, 16, 1024] {
            let g = SpatialGrid::new(1, 2.0, n).unwrap();
            assert!((integrate(&vec![1.0; n], &g) - 2.0).abs() < 1e-14);
        }
        let g = SpatialGrid::new(1, 2.0, 1024).unwrap();
        let x2 = g.sample(|x| x[0] * x[0]);
        assert!((integrate(&x2, &g) - 2.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn dual_grid_reaches_nyquist() {
        let g = SpatialGrid::new(1, 8.0, 256).unwrap();
        let pg = PhaseGrid::dual(g, 0.125);
        assert!(pg.covers_nyquist(0.125));
        assert!((pg.p_max() - PI * 0.125 / g.h()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_is_self_dual() {
        let hbar = 0.1;
        let g = SpatialGrid::new(1, 12.0, 512).unwrap();
        let gauss = |x: f64| (PI * hbar).powf(-0.25) * (-x * x / (2.0 * hbar)).exp();
        let f = complexify(&g.sample(|x| gauss(x[0])));
        let ft = fourier_hbar_with(&f, &g, hbar, Direction::Forward).unwrap();
        let pg = PhaseGrid::dual(g, hbar);
        for (k, v) in ft.iter().enumerate() {
            assert!((v - gauss(pg.p_node(k))).norm() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn forward_matches_direct_quadrature_in_2d() {
        let hbar = 0.7;
        let g = SpatialGrid::new(2, 3.0, 8).unwrap();
        let pg = PhaseGrid::dual(g, hbar);
        let f: Vec<Complex64> = (0..g.num_points())
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let ft = fourier_hbar_with(&f, &g, hbar, Direction::Forward).unwrap();
        for ip in 0..pg.num_p_points() {
            let p = pg.p_point(ip);
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, v) in f.iter().enumerate() {
                let x = g.point(i);
                acc += v * Complex64::from_polar(1.0, -(p[0] * x[0] + p[1] * x[1]) / hbar);
            }
            acc *= g.cell_volume() / (2.0 * PI * hbar);
            assert!((acc - ft[ip]).norm() < 1e-12);
        }
    }

    #[test]
    fn measure_bounds_respect_kind() {
        let g = SpatialGrid::new(1, 2.0, 2).unwrap();
        let pg = PhaseGrid::dual(g, 1.0);
        assert!(PhaseSpaceMeasure::new(pg, vec![-0.5, 0.0, 0.0, 0.0], MeasureKind::Husimi).is_err());
        assert!(PhaseSpaceMeasure::new(pg, vec![-0.5, 0.0, 0.0, 0.0], MeasureKind::Wigner).is_ok());
        assert!(PhaseSpaceMeasure::new(pg, vec![1.5, 0.0, 0.0, 0.0], MeasureKind::Vlasov).is_err());
    }
}
