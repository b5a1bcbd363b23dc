//! Coherent states, Husimi functions of one and two particles, Wigner transforms
//! and the exact phase-space identities relating them to densities and kinetic energy.
//!
//! Coherent states are built from a window table on the cyclic offset lattice of
//! the spatial grid, so that Σ_x h^d |f^ħ(y - x)|² = 1 holds at every node. Every
//! Husimi quantity lives on the FFT-dual phase grid.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::phasespace::{
    Direction, HbarFourier, MeasureKind, NdFft, PhaseGrid, PhaseSpaceMeasure, Scaling, SpatialGrid,
};
use crate::spectral::OneBodyDensityMatrix;
use crate::tf::ExternalFields;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Tolerances used by the identity checks.
pub const NORMALIZATION_TOL: f64 = 1e-6;
pub const MARGINAL_TOL: f64 = 1e-6;
pub const KINETIC_TOL: f64 = 1e-6;
pub const MAGNETIC_KINETIC_TOL: f64 = 1e-5;
pub const BOUND_TOL: f64 = 1e-8;
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Radial profile of the window before normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WindowShape {
    /// e^{-|x|²/2}
    Gaussian,
    /// e^{-|x|⁴/4}
    Quartic,
}

impl WindowShape {
    fn profile(self, r: f64) -> f64 {
        match self {
            WindowShape::Gaussian => (-0.5 * r * r).exp(),
            WindowShape::Quartic => (-0.25 * r.powi(4)).exp(),
        }
    }

    fn derivative(self, r: f64) -> f64 {
        match self {
            WindowShape::Gaussian => -r * (-0.5 * r * r).exp(),
            WindowShape::Quartic => -r.powi(3) * (-0.25 * r.powi(4)).exp(),
        }
    }
}

/// A real, even, L²-normalised window f and its semiclassical rescaling f^ħ = ħ^{-d/4} f(·/√ħ).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoherentWindow {
    shape: WindowShape,
    d: usize,
    hbar: f64,
    norm: f64,
    grad_sq: f64,
}

fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

/// Composite Simpson rule for ∫_0^R g on `n` (even) intervals.
fn simpson(g: impl Fn(f64) -> f64, r: f64, n: usize) -> f64 {
    let h = r / n as f64;
    let mut s = g(0.0) + g(r);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
    }
    s * h / 3.0
}

impl CoherentWindow {
    /// Normalises the profile by radial quadrature on a fine grid.
    pub fn new(shape: WindowShape, d: usize, hbar: f64) -> Result<Self> {
        crate::phasespace::check_dim(d)?;
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::Config(format!("ħ must be positive, got {hbar}")));
        }
        const R: f64 = 12.0;
        const STEPS: usize = 200_000;
        let area = sphere_area(d);
        let dm1 = d as i32 - 1;
        let mass = area * simpson(|r| r.powi(dm1) * shape.profile(r).powi(2), R, STEPS);
        let grad = area * simpson(|r| r.powi(dm1) * shape.derivative(r).powi(2), R, STEPS);
        Ok(Self {
            shape,
            d,
            hbar,
            norm: mass.sqrt().recip(),
            grad_sq: grad / mass,
        })
    }

    pub fn gaussian(d: usize, hbar: f64) -> Result<Self> {
        Self::new(WindowShape::Gaussian, d, hbar)
    }

    pub fn shape(&self) -> WindowShape {
        self.shape
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// f(x).
    pub fn value(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.norm * self.shape.profile(r)
    }

    /// f^ħ(y) = ħ^{-d/4} f(y/√ħ).
    pub fn scaled(&self, y: &[f64]) -> f64 {
        let s = self.hbar.sqrt();
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt() / s;
        self.hbar.powf(-0.25 * self.d as f64) * self.norm * self.shape.profile(r)
    }

    /// ∫ f² by quadrature on a finer grid than the one used for normalisation.
    pub fn l2_norm_sq(&self) -> f64 {
        let dm1 = self.d as i32 - 1;
        sphere_area(self.d)
            * self.norm
            * self.norm
            * simpson(|r| r.powi(dm1) * self.shape.profile(r).powi(2), 12.0, 400_000)
    }

    /// ∫ |∇f|².
    pub fn grad_norm_sq(&self) -> f64 {
        self.grad_sq
    }

    /// Tabulates f^ħ on the cyclic offset lattice of `grid`.
    pub fn lattice(&self, grid: &SpatialGrid) -> Result<LatticeWindow> {
        if grid.d() != self.d {
            return Err(Error::Config("window and grid dimensions differ".into()));
        }
        let n = grid.n();
        let d = self.d;
        let h = grid.h();
        let total = grid.num_points();
        let mut table = vec![0.0; total];
        for (i, t) in table.iter_mut().enumerate() {
            let m = grid.multi_index(i);
            let mut off = [0.0; 3];
            for a in 0..d {
                off[a] = (((m[a] + n / 2) % n) as f64 - (n / 2) as f64) * h;
            }
            *t = self.scaled(&off[..d]);
        }
        let lattice_mass = table.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume();
        let s = lattice_mass.sqrt().recip();
        table.iter_mut().for_each(|v| *v *= s);

        // ĝ(r_k) on the dual grid, offsets taken as multiples of h
        let mut buf = crate::phasespace::complexify(&table);
        NdFft::new(n, d).process(&mut buf, Direction::Forward);
        let c = (2.0 * PI * self.hbar).powf(-0.5 * d as f64) * grid.cell_volume();
        let mut g_abs2 = vec![0.0; total];
        for (k, g) in g_abs2.iter_mut().enumerate() {
            let mk = grid.multi_index(k);
            let mut src = [0usize; 3];
            for a in 0..d {
                src[a] = (mk[a] + n / 2) % n;
            }
            *g = (buf[grid.flat_index(&src[..d])] * c).norm_sqr();
        }
        Ok(LatticeWindow {
            grid: *grid,
            hbar: self.hbar,
            table,
            g_abs2,
            lattice_mass,
        })
    }
}

/// f^ħ sampled at every cyclic lattice offset, renormalised on the lattice.
#[derive(Debug, Clone)]
pub struct LatticeWindow {
    grid: SpatialGrid,
    hbar: f64,
    table: Vec<f64>,
    g_abs2: Vec<f64>,
    lattice_mass: f64,
}

impl LatticeWindow {
    /// f^ħ at offset index m (per-axis cyclic).
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// |g^ħ(r_k)|² on the dual momentum grid.
    pub fn g_abs2(&self) -> &[f64] {
        &self.g_abs2
    }

    /// Σ_m h^d |f^ħ(m h)|² before renormalisation; its distance from 1 is the truncated mass.
    pub fn lattice_mass(&self) -> f64 {
        self.lattice_mass
    }

    /// ħ² ∫|∇f^ħ|² = ħ ∫|∇f|² evaluated spectrally on the lattice.
    pub fn kinetic_correction(&self) -> f64 {
        let pg = PhaseGrid::dual(self.grid, self.hbar);
        let d = self.grid.d();
        self.g_abs2
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let p = pg.p_point(k);
                g * (0..d).map(|a| p[a] * p[a]).sum::<f64>()
            })
            .sum::<f64>()
            * pg.p_cell_volume()
    }

    /// Flat offset index of y - x.
    fn offset_index(&self, y: &[usize; 3], x: &[usize; 3]) -> usize {
        let n = self.grid.n();
        let mut idx = 0;
        for a in 0..self.grid.d() {
            idx = idx * n + (y[a] + n - x[a]) % n;
        }
        idx
    }

    /// (u ∗ |f^ħ|²)(y) = Σ_x h^d u(x) |f^ħ(y - x)|², cyclic.
    pub fn smear(&self, u: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let total = g.num_points();
        let multi: Vec<[usize; 3]> = (0..total).map(|i| g.multi_index(i)).collect();
        let w = g.cell_volume();
        (0..total)
            .map(|iy| {
                (0..total)
                    .map(|ix| u[ix] * self.table[self.offset_index(&multi[iy], &multi[ix])].powi(2))
                    .sum::<f64>()
                    * w
            })
            .collect()
    }

    /// Cyclic coherent state f^ħ(y - x_i) e^{i p_k·y/ħ} on the grid.
    pub fn coherent(&self, ix: usize, ip: usize) -> Vec<Complex64> {
        let g = &self.grid;
        let pg = PhaseGrid::dual(*g, self.hbar);
        let p = pg.p_point(ip);
        let mx = g.multi_index(ix);
        (0..g.num_points())
            .map(|iy| {
                let y = g.point(iy);
                let ph: f64 = (0..g.d()).map(|a| p[a] * y[a]).sum::<f64>() / self.hbar;
                Complex64::from_polar(self.table[self.offset_index(&g.multi_index(iy), &mx)], ph)
            })
            .collect()
    }
}

/// A coherent state sampled on the grid together with the mass lost to the box.
#[derive(Debug, Clone)]
pub struct CoherentState {
    pub values: Vec<Complex64>,
    /// 1 - ‖f^ħ_{x,p}‖² on the grid.
    pub truncated_mass: f64,
}

/// f^ħ_{x,p}(y) = ħ^{-d/4} f((y - x)/√ħ) e^{i p·y/ħ}.
pub fn coherent_state(window: &CoherentWindow, grid: &SpatialGrid, x: &[f64], p: &[f64]) -> Result<CoherentState> {
    let d = grid.d();
    if window.d() != d || x.len() != d || p.len() != d {
        return Err(Error::Config("coherent state dimensions do not match the grid".into()));
    }
    let hbar = window.hbar();
    if x.iter().any(|v| v.abs() > grid.half_width()) || p.iter().any(|v| v.abs() > PI * hbar / grid.h()) {
        return Err(Error::Config("phase-space point outside the grid coverage".into()));
    }
    let values: Vec<Complex64> = (0..grid.num_points())
        .map(|i| {
            let y = grid.point(i);
            let mut off = [0.0; 3];
            let mut ph = 0.0;
            for a in 0..d {
                off[a] = y[a] - x[a];
                ph += p[a] * y[a];
            }
            Complex64::from_polar(window.scaled(&off[..d]), ph / hbar)
        })
        .collect();
    let norm = values.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.cell_volume();
    Ok(CoherentState {
        values,
        truncated_mass: 1.0 - norm,
    })
}

/// L² inner product ⟨u, v⟩ on the grid.
pub fn inner(grid: &SpatialGrid, u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum::<Complex64>() * grid.cell_volume()
}

fn l2_norm(grid: &SpatialGrid, u: &[Complex64]) -> f64 {
    (u.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.cell_volume()).sqrt()
}

fn check_dual(pgrid: &PhaseGrid, hbar: f64) -> Result<()> {
    let dual = PhaseGrid::dual(*pgrid.x(), hbar);
    let same = pgrid.n_p() == dual.n_p()
        && (pgrid.h_p() - dual.h_p()).abs() <= 1e-12 * dual.h_p()
        && (pgrid.p_node(0) - dual.p_node(0)).abs() <= 1e-12 * dual.p_max();
    if same {
        Ok(())
    } else {
        Err(Error::Config(
            "Husimi and Wigner transforms need the FFT-dual momentum grid".into(),
        ))
    }
}

/// One line of an identity report.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub error: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckRow {
    pub fn new(name: impl Into<String>, value: f64, reference: f64, error: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            reference,
            error,
            tol,
            pass: error <= tol,
        }
    }

    /// Relative error |value - reference| / |reference| (absolute when the reference vanishes).
    pub fn relative(name: impl Into<String>, value: f64, reference: f64, tol: f64) -> Self {
        let err = if reference == 0.0 {
            value.abs()
        } else {
            (value - reference).abs() / reference.abs()
        };
        Self::new(name, value, reference, err, tol)
    }
}

/// Σ|a - b| / Σ|b|, or Σ|a| when b vanishes.
pub fn relative_l1(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    let den: f64 = b.iter().map(|y| y.abs()).sum();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolutionRow {
    pub probe: usize,
    pub norm: f64,
    pub rel_error: f64,
}

/// Applies (2πħ)^{-d} ∬ |f^ħ_{x,p}⟩⟨f^ħ_{x,p}| dx dp to each probe by quadrature on the dual phase grid.
pub fn resolution_identity_check(
    window: &CoherentWindow,
    pgrid: &PhaseGrid,
    probes: &[Vec<Complex64>],
) -> Result<Vec<ResolutionRow>> {
    let hbar = window.hbar();
    check_dual(pgrid, hbar)?;
    let grid = *pgrid.x();
    let lw = window.lattice(&grid)?;
    let total = grid.num_points();
    let multi: Vec<[usize; 3]> = (0..total).map(|i| grid.multi_index(i)).collect();
    let mut ft = HbarFourier::new(grid, hbar);
    let scale = (2.0 * PI * hbar).powf(-(grid.d() as f64));
    let hd = (2.0 * PI * hbar).powf(0.5 * grid.d() as f64);
    probes
        .iter()
        .enumerate()
        .map(|(k, u)| {
            if u.len() != total {
                return Err(Error::Config("probe length does not match the grid".into()));
            }
            let mut out = vec![ZERO; total];
            let mut buf = vec![ZERO; total];
            for ix in 0..total {
                for iy in 0..total {
                    buf[iy] = u[iy] * lw.table[lw.offset_index(&multi[iy], &multi[ix])];
                }
                // ⟨f_{x,p}, u⟩ for all p, then Σ_p h_p^d f_{x,p}(y) ⟨f_{x,p}, u⟩
                ft.forward(&mut buf);
                buf.iter_mut().for_each(|v| *v *= hd);
                ft.inverse(&mut buf);
                for iy in 0..total {
                    let f = lw.table[lw.offset_index(&multi[iy], &multi[ix])];
                    out[iy] += buf[iy] * f * hd * grid.cell_volume() * scale;
                }
            }
            let norm = l2_norm(&grid, u);
            let diff: Vec<Complex64> = out.iter().zip(u).map(|(a, b)| a - b).collect();
            let err = l2_norm(&grid, &diff);
            Ok(ResolutionRow {
                probe: k,
                norm,
                rel_error: if norm == 0.0 { err } else { err / norm },
            })
        })
        .collect()
}

/// Coherent-state amplitudes c_i(x,p) = ⟨f^ħ_{x,p}, ψ_i⟩ for every orbital and every dual phase node.
#[derive(Debug, Clone)]
pub struct HusimiAmplitudes {
    grid: PhaseGrid,
    hbar: f64,
    occupations: Vec<f64>,
    amps: Vec<Complex64>,
}

impl HusimiAmplitudes {
    pub fn compute(gamma: &OneBodyDensityMatrix, window: &CoherentWindow, pgrid: &PhaseGrid) -> Result<Self> {
        let hbar = window.hbar();
        check_dual(pgrid, hbar)?;
        let grid = *pgrid.x();
        if gamma.grid() != &grid {
            return Err(Error::Config("density matrix and phase grid differ".into()));
        }
        let lw = window.lattice(&grid)?;
        let total = grid.num_points();
        let multi: Vec<[usize; 3]> = (0..total).map(|i| grid.multi_index(i)).collect();
        let m = pgrid.num_points();
        let mut keep = Vec::new();
        let mut occupations = Vec::new();
        for (i, &o) in gamma.occupations().iter().enumerate() {
            if o > 0.0 {
                keep.push(i);
                occupations.push(o);
            }
        }
        let mut amps = vec![ZERO; keep.len() * m];
        let mut ft = HbarFourier::new(grid, hbar);
        let hd = (2.0 * PI * hbar).powf(0.5 * grid.d() as f64);
        let mut buf = vec![ZERO; total];
        for (slot, &i) in keep.iter().enumerate() {
            let psi = gamma.orbitals().column(i);
            for ix in 0..total {
                for iy in 0..total {
                    buf[iy] = psi[iy] * lw.table[lw.offset_index(&multi[iy], &multi[ix])];
                }
                ft.forward(&mut buf);
                let row = &mut amps[slot * m + ix * total..slot * m + (ix + 1) * total];
                for (r, v) in row.iter_mut().zip(&buf) {
                    *r = v * hd;
                }
            }
        }
        Ok(Self {
            grid: *pgrid,
            hbar,
            occupations,
            amps,
        })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn count(&self) -> usize {
        self.occupations.len()
    }

    pub fn amplitude(&self, i: usize, z: usize) -> Complex64 {
        self.amps[i * self.grid.num_points() + z]
    }

    /// m^{(1)}(z) = Σ_i occ_i |c_i(z)|².
    pub fn m1_values(&self) -> Vec<f64> {
        let m = self.grid.num_points();
        let mut out = vec![0.0; m];
        for (i, o) in self.occupations.iter().enumerate() {
            for (v, c) in out.iter_mut().zip(&self.amps[i * m..(i + 1) * m]) {
                *v += o * c.norm_sqr();
            }
        }
        out
    }

    /// Q_ij = (2π)^{-d} ∬ conj(c_i) c_j.
    pub fn overlap(&self) -> Vec<Complex64> {
        let m = self.grid.num_points();
        let k = self.count();
        let w = self.grid.cell_volume() / (2.0 * PI).powi(self.grid.d() as i32);
        let mut q = vec![ZERO; k * k];
        for i in 0..k {
            for j in i..k {
                let ci = &self.amps[i * m..(i + 1) * m];
                let cj = &self.amps[j * m..(j + 1) * m];
                let s: Complex64 = ci.iter().zip(cj).map(|(a, b)| a.conj() * b).sum::<Complex64>() * w;
                q[i * k + j] = s;
                q[j * k + i] = s.conj();
            }
        }
        q
    }
}

/// m^{(1)}(x,p) = Σ_i occ_i |⟨ψ_i, f^ħ_{x,p}⟩|² on the dual phase grid.
pub fn husimi1(gamma: &OneBodyDensityMatrix, window: &CoherentWindow, pgrid: &PhaseGrid) -> Result<PhaseSpaceMeasure> {
    let amps = HusimiAmplitudes::compute(gamma, window, pgrid)?;
    PhaseSpaceMeasure::new(*pgrid, amps.m1_values(), MeasureKind::Husimi)
}

/// Two-particle Husimi function of a Slater state, m^{(2)}(z₁,z₂) = m^{(1)}(z₁)m^{(1)}(z₂) - |Σ_i c_i(z₁) conj c_i(z₂)|².
///
/// Entries are evaluated on demand; the full table has (n n_p)^{2d} entries.
#[derive(Debug, Clone)]
pub struct Husimi2 {
    amps: HusimiAmplitudes,
    m1: Vec<f64>,
}

/// Largest phase grid for which [`Husimi2::to_dense`] is allowed.
pub const HUSIMI2_DENSE_CAP: usize = 4096;

impl Husimi2 {
    pub fn grid(&self) -> &PhaseGrid {
        self.amps.grid()
    }

    pub fn m1(&self) -> &[f64] {
        &self.m1
    }

    pub fn amplitudes(&self) -> &HusimiAmplitudes {
        &self.amps
    }

    pub fn value(&self, z1: usize, z2: usize) -> f64 {
        let g: Complex64 = (0..self.amps.count())
            .map(|i| self.amps.amplitude(i, z1) * self.amps.amplitude(i, z2).conj())
            .sum();
        self.m1[z1] * self.m1[z2] - g.norm_sqr()
    }

    pub fn to_dense(&self) -> Result<Vec<f64>> {
        let m = self.m1.len();
        if m > HUSIMI2_DENSE_CAP {
            return Err(Error::Capacity(format!("{m} phase points exceed {HUSIMI2_DENSE_CAP}")));
        }
        let mut out = vec![0.0; m * m];
        for z1 in 0..m {
            for z2 in 0..m {
                out[z1 * m + z2] = self.value(z1, z2);
            }
        }
        Ok(out)
    }

    /// (2π)^{-d} ∫ m^{(2)}(z₁, z₂) dz₂, summed exactly through the overlap matrix.
    pub fn marginal(&self) -> Vec<f64> {
        let k = self.amps.count();
        let q = self.amps.overlap();
        let w = self.grid().cell_volume() / (2.0 * PI).powi(self.grid().d() as i32);
        let s: f64 = self.m1.iter().sum::<f64>() * w;
        (0..self.m1.len())
            .map(|z| {
                let mut x = Complex64::new(0.0, 0.0);
                for i in 0..k {
                    let ci = self.amps.amplitude(i, z);
                    for j in 0..k {
                        x += ci * self.amps.amplitude(j, z).conj() * q[i * k + j];
                    }
                }
                self.m1[z] * s - x.re
            })
            .collect()
    }

    /// (2π)^{-2d} ∬ m^{(2)} = (Σ m^{(1)})² - ‖Q‖²_F.
    pub fn normalization(&self) -> f64 {
        let w = self.grid().cell_volume() / (2.0 * PI).powi(self.grid().d() as i32);
        let s: f64 = self.m1.iter().sum::<f64>() * w;
        s * s - self.factorization_defect()
    }

    /// ‖m^{(2)} - m^{(1)}⊗m^{(1)}‖_{L¹} / (2π)^{2d} = ‖Q‖²_F, since the difference is -|G|² ≤ 0.
    pub fn factorization_defect(&self) -> f64 {
        self.amps.overlap().iter().map(|v| v.norm_sqr()).sum()
    }

    fn sample(&self, stride: usize) -> Vec<usize> {
        (0..self.m1.len()).step_by(stride.max(1)).collect()
    }

    /// (min, max) of m^{(2)} over all pairs of a strided subset of phase nodes.
    pub fn bounds(&self, stride: usize) -> (f64, f64) {
        let zs = self.sample(stride);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &z1 in &zs {
            for &z2 in &zs {
                let v = self.value(z1, z2);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// max |m^{(2)}(z₁,z₂) - m^{(2)}(z₂,z₁)| over a strided subset.
    pub fn symmetry_defect(&self, stride: usize) -> f64 {
        let zs = self.sample(stride);
        let mut worst = 0.0f64;
        for (a, &z1) in zs.iter().enumerate() {
            for &z2 in &zs[a + 1..] {
                worst = worst.max((self.value(z1, z2) - self.value(z2, z1)).abs());
            }
        }
        worst
    }
}

pub fn husimi2(slater: &OneBodyDensityMatrix, window: &CoherentWindow, pgrid: &PhaseGrid) -> Result<Husimi2> {
    if !slater.is_pure() {
        return Err(Error::Precondition(
            "the two-particle Husimi function needs a projector (occupations in {0, 1})".into(),
        ));
    }
    let amps = HusimiAmplitudes::compute(slater, window, pgrid)?;
    let m1 = amps.m1_values();
    Ok(Husimi2 { amps, m1 })
}

/// t(p) = Σ_i occ_i |F_ħ ψ_i(p)|² on the dual momentum grid.
pub fn momentum_density(gamma: &OneBodyDensityMatrix, hbar: f64) -> Vec<f64> {
    let grid = *gamma.grid();
    let mut ft = HbarFourier::new(grid, hbar);
    let mut t = vec![0.0; grid.num_points()];
    for (col, o) in gamma.orbitals().columns().into_iter().zip(gamma.occupations()) {
        let mut buf = col.to_vec();
        ft.forward(&mut buf);
        for (a, b) in t.iter_mut().zip(&buf) {
            *a += o * b.norm_sqr();
        }
    }
    t
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginalReport {
    /// (2π)^{-d} ∫ m^{(1)} dp against ħ^d ρ ∗ |f^ħ|²
    pub position: CheckRow,
    /// (2π)^{-d} ∫ m^{(1)} dx against ħ^d t ∗ |g^ħ|²
    pub momentum: CheckRow,
    pub total: CheckRow,
}

/// Position and momentum marginals of m^{(1)}.
pub fn husimi_density_marginals(
    m1: &PhaseSpaceMeasure,
    gamma: &OneBodyDensityMatrix,
    window: &CoherentWindow,
) -> Result<MarginalReport> {
    let pg = *m1.grid();
    let hbar = window.hbar();
    check_dual(&pg, hbar)?;
    let grid = *pg.x();
    if gamma.grid() != &grid {
        return Err(Error::Config("density matrix and measure grids differ".into()));
    }
    let d = grid.d();
    let nx = grid.num_points();
    let np = pg.num_p_points();
    let two_pi_d = (2.0 * PI).powi(d as i32);
    let hd = hbar.powi(d as i32);
    let lw = window.lattice(&grid)?;
    let vals = m1.values();

    let lhs_x: Vec<f64> = (0..nx)
        .map(|ix| vals[ix * np..(ix + 1) * np].iter().sum::<f64>() * pg.p_cell_volume() / two_pi_d)
        .collect();
    let rhs_x: Vec<f64> = lw.smear(&gamma.density_values()).into_iter().map(|v| v * hd).collect();

    let lhs_p: Vec<f64> = (0..np)
        .map(|ip| (0..nx).map(|ix| vals[ix * np + ip]).sum::<f64>() * grid.cell_volume() / two_pi_d)
        .collect();
    let t = momentum_density(gamma, hbar);
    let n = grid.n();
    let rhs_p: Vec<f64> = (0..np)
        .map(|ip| {
            let mp = grid.multi_index(ip);
            (0..np)
                .map(|iq| {
                    let mq = grid.multi_index(iq);
                    let mut r = [0usize; 3];
                    for a in 0..d {
                        r[a] = (mp[a] + n + n / 2 - mq[a]) % n;
                    }
                    t[iq] * lw.g_abs2[grid.flat_index(&r[..d])]
                })
                .sum::<f64>()
                * pg.p_cell_volume()
                * hd
        })
        .collect();

    let total = m1.mass();
    let expected = gamma.trace() * hd;
    Ok(MarginalReport {
        position: CheckRow::new("position marginal", lhs_x.iter().sum(), rhs_x.iter().sum(), relative_l1(&lhs_x, &rhs_x), MARGINAL_TOL),
        momentum: CheckRow::new("momentum marginal", lhs_p.iter().sum(), rhs_p.iter().sum(), relative_l1(&lhs_p, &rhs_p), MARGINAL_TOL),
        total: CheckRow::relative("husimi normalization k=1", total, expected, NORMALIZATION_TOL),
    })
}

/// Spectral derivative -iħ∂_a u on the dual grid.
fn momentum_apply(ft: &mut HbarFourier, pg: &PhaseGrid, u: &[Complex64], axis: usize) -> Vec<Complex64> {
    let mut buf = u.to_vec();
    ft.forward(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= pg.p_point(k)[axis];
    }
    ft.inverse(&mut buf);
    buf
}

#[derive(Debug, Clone, Serialize)]
pub struct KineticReport {
    /// Tr(-iħ∇+A)²γ
    pub lhs: f64,
    /// (2πħ)^{-d} ∬ |p + A(x)|² m^{(1)}
    pub phase_space: f64,
    /// N ħ ∫|∇f|²
    pub correction: f64,
    /// 2 Re Σ ⟨ψ, (A - A∗|f^ħ|²)·(-iħ∇)ψ⟩
    pub cross: f64,
    /// Σ ⟨ψ, (|A|² - |A|²∗|f^ħ|²)ψ⟩
    pub quadratic: f64,
    pub rhs: f64,
    pub row: CheckRow,
}

/// Kinetic energy of γ through its Husimi function, with or without a vector potential.
pub fn kinetic_identity_check(
    gamma: &OneBodyDensityMatrix,
    window: &CoherentWindow,
    fields: &ExternalFields,
) -> Result<KineticReport> {
    let grid = *gamma.grid();
    if fields.grid() != &grid {
        return Err(Error::Config("density matrix and fields live on different grids".into()));
    }
    let d = grid.d();
    let hbar = window.hbar();
    let pg = PhaseGrid::dual(grid, hbar);
    let amps = HusimiAmplitudes::compute(gamma, window, &pg)?;
    let m1 = amps.m1_values();
    let a = fields.a();
    let nx = grid.num_points();
    let np = pg.num_p_points();
    let a_at = |ix: usize, k: usize| a.map_or(0.0, |a| a[ix * d + k]);

    let mut phase_space = 0.0;
    for ix in 0..nx {
        for ip in 0..np {
            let p = pg.p_point(ip);
            let s: f64 = (0..d).map(|k| (p[k] + a_at(ix, k)).powi(2)).sum();
            phase_space += s * m1[ix * np + ip];
        }
    }
    phase_space *= pg.cell_volume() / (2.0 * PI * hbar).powi(d as i32);

    let lw = window.lattice(&grid)?;
    let correction = gamma.trace() * lw.kinetic_correction();

    let mut ft = HbarFourier::new(grid, hbar);
    let w = grid.cell_volume();
    let mut lhs = 0.0;
    let mut cross = 0.0;
    let mut quadratic = 0.0;
    let smeared: Vec<Vec<f64>> = (0..d)
        .map(|k| lw.smear(&(0..nx).map(|ix| a_at(ix, k)).collect::<Vec<_>>()))
        .collect();
    let a2: Vec<f64> = (0..nx).map(|ix| (0..d).map(|k| a_at(ix, k).powi(2)).sum()).collect();
    let a2_smeared = if a.is_some() { lw.smear(&a2) } else { vec![0.0; nx] };
    for (col, &o) in gamma.orbitals().columns().into_iter().zip(gamma.occupations()) {
        if o == 0.0 {
            continue;
        }
        let psi = col.to_vec();
        for k in 0..d {
            let dpsi = momentum_apply(&mut ft, &pg, &psi, k);
            let mut norm = 0.0;
            let mut c = 0.0;
            for ix in 0..nx {
                let ak = a_at(ix, k);
                norm += (dpsi[ix] + psi[ix] * ak).norm_sqr();
                c += (psi[ix].conj() * dpsi[ix]).re * (ak - smeared[k][ix]);
            }
            lhs += o * norm * w;
            cross += o * 2.0 * c * w;
        }
        quadratic += o * (0..nx).map(|ix| psi[ix].norm_sqr() * (a2[ix] - a2_smeared[ix])).sum::<f64>() * w;
    }
    let rhs = phase_space - correction + cross + quadratic;
    let tol = if a.is_some() { MAGNETIC_KINETIC_TOL } else { KINETIC_TOL };
    let name = if a.is_some() { "magnetic kinetic identity" } else { "kinetic identity" };
    Ok(KineticReport {
        lhs,
        phase_space,
        correction,
        cross,
        quadratic,
        rhs,
        row: CheckRow::relative(name, rhs, lhs, tol),
    })
}

/// Trigonometric interpolation of u (given on the grid) at the vertices -R/2 + q h/2, q < 2n.
fn upsample_vertices(ft: &mut HbarFourier, grid: &SpatialGrid, hbar: f64, u: &[Complex64]) -> Vec<Complex64> {
    let n = grid.n();
    let d = grid.d();
    let mut coeff = u.to_vec();
    ft.forward(&mut coeff);
    let h_p = 2.0 * PI * hbar / grid.side();
    let c = (2.0 * PI * hbar).powf(-0.5) * h_p;
    let m = 2 * n;
    let interp: Vec<Complex64> = (0..m)
        .flat_map(|q| {
            let y = -grid.half_width() + q as f64 * grid.h() / 2.0;
            (0..n).map(move |k| Complex64::from_polar(c, (k as f64 - n as f64 / 2.0) * h_p * y / hbar))
        })
        .collect();
    let mut dims = vec![n; d];
    let mut data = coeff;
    for axis in 0..d {
        let mut out_dims = dims.clone();
        out_dims[axis] = m;
        let inner: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let mut out = vec![ZERO; out_dims.iter().product()];
        for o in 0..outer {
            for i in 0..inner {
                for q in 0..m {
                    let row = &interp[q * n..(q + 1) * n];
                    let s: Complex64 = (0..n).map(|k| row[k] * data[(o * n + k) * inner + i]).sum();
                    out[(o * m + q) * inner + i] = s;
                }
            }
        }
        data = out;
        dims = out_dims;
    }
    data
}

/// W(x,p) = (Tr γ)^{-1} ħ^{-d} ∫ e^{-ip·s/ħ} γ(x + s/2, x - s/2) ds on the dual phase grid.
///
/// With this normalisation ∬ W = (2π)^d for every nonzero γ.
pub fn wigner1(gamma: &OneBodyDensityMatrix, scaling: &Scaling, pgrid: &PhaseGrid) -> Result<PhaseSpaceMeasure> {
    let hbar = scaling.hbar();
    check_dual(pgrid, hbar)?;
    let grid = *pgrid.x();
    if gamma.grid() != &grid {
        return Err(Error::Config("density matrix and phase grid differ".into()));
    }
    let d = grid.d();
    let n = grid.n();
    let nx = grid.num_points();
    let trace = gamma.trace();
    if trace == 0.0 {
        return PhaseSpaceMeasure::new(*pgrid, vec![0.0; pgrid.num_points()], MeasureKind::Wigner);
    }
    let mut ft = HbarFourier::new(grid, hbar);
    let fine: Vec<(f64, Vec<Complex64>)> = gamma
        .orbitals()
        .columns()
        .into_iter()
        .zip(gamma.occupations())
        .filter(|(_, &o)| o > 0.0)
        .map(|(c, &o)| (o, upsample_vertices(&mut ft, &grid, hbar, &c.to_vec())))
        .collect();
    let m2 = 2 * n;
    let mut fft = NdFft::new(n, d);
    let scale = grid.cell_volume() / (trace * hbar.powi(d as i32));
    let mut values = vec![0.0; pgrid.num_points()];
    let mut kernel = vec![ZERO; nx];
    for ix in 0..nx {
        let mi = grid.multi_index(ix);
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for a in 0..d {
            let i = mi[a] as i64;
            let n = n as i64;
            lo[a] = (-(2 * i + 1)).max(2 * i + 2 - 2 * n);
            hi[a] = (2 * n - 2 - 2 * i).min(2 * i + 1);
        }
        kernel.iter_mut().for_each(|v| *v = ZERO);
        let mut m = lo;
        'outer: loop {
            let mut qp = 0usize;
            let mut qm = 0usize;
            let mut fold = 0usize;
            let mut odd = false;
            for a in 0..d {
                let c = 2 * mi[a] as i64 + 1;
                qp = qp * m2 + (c + m[a]) as usize;
                qm = qm * m2 + (c - m[a]) as usize;
                fold = fold * n + m[a].rem_euclid(n as i64) as usize;
                odd ^= m[a].rem_euclid(2) == 1;
            }
            let mut s = ZERO;
            for (o, f) in &fine {
                s += f[qp] * f[qm].conj() * *o;
            }
            kernel[fold] += if odd { -s } else { s };
            let mut a = d;
            loop {
                if a == 0 {
                    break 'outer;
                }
                a -= 1;
                if m[a] < hi[a] {
                    m[a] += 1;
                    break;
                }
                m[a] = lo[a];
            }
        }
        fft.process(&mut kernel, Direction::Forward);
        for (ip, v) in kernel.iter().enumerate() {
            values[ix * nx + ip] = v.re * scale;
        }
    }
    PhaseSpaceMeasure::new(*pgrid, values, MeasureKind::Wigner)
}

#[derive(Debug, Clone, Serialize)]
pub struct WignerHusimiReport {
    pub rel_l1: f64,
    pub row: CheckRow,
}

/// Gaussian smoothing ħ^d Tr γ · W ∗ 𝒢^ħ with 𝒢^ħ(x,p) = (πħ)^{-d} e^{-(|x|²+|p|²)/ħ}.
pub fn gaussian_smoothing(w: &PhaseSpaceMeasure, hbar: f64, trace: f64) -> Vec<f64> {
    let pg = w.grid();
    let grid = pg.x();
    let d = grid.d();
    let n = grid.n();
    let np = pg.n_p();
    let mut data = w.values().to_vec();
    let mut dims = vec![n; d];
    dims.extend(std::iter::repeat(np).take(d));
    for (axis, &len) in dims.clone().iter().enumerate() {
        let (step, weight) = if axis < d { (grid.h(), grid.h()) } else { (pg.h_p(), pg.h_p()) };
        let kern: Vec<f64> = (0..2 * len - 1)
            .map(|i| {
                let delta = (i as f64 - (len as f64 - 1.0)) * step;
                (PI * hbar).powf(-0.5) * (-delta * delta / hbar).exp() * weight
            })
            .collect();
        let inner: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let mut out = vec![0.0; data.len()];
        let mut line = vec![0.0; len];
        for o in 0..outer {
            for i in 0..inner {
                for (j, l) in line.iter_mut().enumerate() {
                    *l = data[(o * len + j) * inner + i];
                }
                for j in 0..len {
                    let s: f64 = (0..len).map(|k| kern[j + len - 1 - k] * line[k]).sum();
                    out[(o * len + j) * inner + i] = s;
                }
            }
        }
        data = out;
    }
    let pre = hbar.powi(d as i32) * trace;
    data.iter_mut().for_each(|v| *v *= pre);
    data
}

/// m^{(1)} = ħ^d Tr γ · W^{(1)} ∗ 𝒢^ħ for the Gaussian window.
pub fn wigner_husimi_convolution_check(
    gamma: &OneBodyDensityMatrix,
    scaling: &Scaling,
    window: &CoherentWindow,
) -> Result<WignerHusimiReport> {
    if window.shape() != WindowShape::Gaussian {
        return Err(Error::Precondition(
            "the Wigner-Husimi convolution identity holds for the Gaussian window only".into(),
        ));
    }
    let hbar = scaling.hbar();
    if (window.hbar() - hbar).abs() > 1e-15 * hbar {
        return Err(Error::Config("window and scaling use different ħ".into()));
    }
    let pg = PhaseGrid::dual(*gamma.grid(), hbar);
    let m1 = husimi1(gamma, window, &pg)?;
    let w = wigner1(gamma, scaling, &pg)?;
    let pred = gaussian_smoothing(&w, hbar, gamma.trace());
    let err = relative_l1(m1.values(), &pred);
    Ok(WignerHusimiReport {
        rel_l1: err,
        row: CheckRow::new("wigner-husimi convolution", m1.mass(), integrate_mass(&pred, &pg), err, MARGINAL_TOL),
    })
}

fn integrate_mass(values: &[f64], pg: &PhaseGrid) -> f64 {
    values.iter().sum::<f64>() * pg.cell_volume() / (2.0 * PI).powi(pg.d() as i32)
}

/// Magic number at the start of the binary phase-space format.
pub const BINARY_MAGIC: u64 = u64::from_le_bytes(*b"SCPHASE1");

/// CSV with columns x1..xd, p1..pd, value, one row per phase node in x-major order.
pub fn write_measure_csv<W: Write>(m: &PhaseSpaceMeasure, mut out: W) -> io::Result<()> {
    let pg = m.grid();
    let d = pg.d();
    let names: Vec<String> = (1..=d)
        .map(|a| format!("x{a}"))
        .chain((1..=d).map(|a| format!("p{a}")))
        .chain(std::iter::once("value".to_string()))
        .collect();
    writeln!(out, "{}", names.join(","))?;
    let np = pg.num_p_points();
    for (z, v) in m.values().iter().enumerate() {
        let x = pg.x().point(z / np);
        let p = pg.p_point(z % np);
        let mut line = String::new();
        for c in x[..d].iter().chain(&p[..d]) {
            line.push_str(&format!("{c},"));
        }
        line.push_str(&format!("{v}"));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Header (magic, d, n_x, n_p as u64; h, h_p as f64), then the values as f64, all little-endian.
pub fn write_measure_binary<W: Write>(m: &PhaseSpaceMeasure, mut out: W) -> io::Result<()> {
    let pg = m.grid();
    out.write_all(&BINARY_MAGIC.to_le_bytes())?;
    out.write_all(&(pg.d() as u64).to_le_bytes())?;
    out.write_all(&(pg.x().n() as u64).to_le_bytes())?;
    out.write_all(&(pg.n_p() as u64).to_le_bytes())?;
    out.write_all(&pg.x().h().to_le_bytes())?;
    out.write_all(&pg.h_p().to_le_bytes())?;
    for v in m.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Header fields and values of a binary phase-space file.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMeasure {
    pub d: usize,
    pub n_x: usize,
    pub n_p: usize,
    pub h: f64,
    pub h_p: f64,
    pub values: Vec<f64>,
}

pub fn read_measure_binary<R: Read>(mut input: R) -> io::Result<BinaryMeasure> {
    let mut word = [0u8; 8];
    let mut next = |input: &mut R| -> io::Result<[u8; 8]> {
        input.read_exact(&mut word)?;
        Ok(word)
    };
    if u64::from_le_bytes(next(&mut input)?) != BINARY_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
    }
    let d = u64::from_le_bytes(next(&mut input)?) as usize;
    let n_x = u64::from_le_bytes(next(&mut input)?) as usize;
    let n_p = u64::from_le_bytes(next(&mut input)?) as usize;
    let h = f64::from_le_bytes(next(&mut input)?);
    let h_p = f64::from_le_bytes(next(&mut input)?);
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    let values = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect::<Vec<_>>();
    if values.len() != (n_x * n_p).pow(d as u32) {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated payload"));
    }
    Ok(BinaryMeasure { d, n_x, n_p, h, h_p, values })
}
