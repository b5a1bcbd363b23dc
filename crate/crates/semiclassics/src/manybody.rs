//! Slater determinants, reduced-Hartree-Fock minimisation and the many-body diagnostics
//! built on them.
//!
//! Energies are per particle for the Hamiltonian Σ_i [(-iħ∇_i + A)² + V(x_i)] + N^{-1} Σ_{i<j} w(x_i - x_j)
//! with ħ = N^{-1/d}.

use ndarray::{Array2, ShapeBuilder};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::linalg::{eigh_hermitian, eigh_symmetric, Selection};
use crate::phasespace::{Density, HbarFourier, PhaseGrid, Scaling, SpatialGrid};
use crate::spectral::{build_operator, lowest_n_projector, KineticScheme, OneBodyDensityMatrix, OneBodyOperator};
use crate::tf::{ExternalFields, Interaction};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// N orthonormal orbitals at the semiclassical scale ħ = N^{-1/d}.
#[derive(Debug, Clone)]
pub struct SlaterState {
    gamma: OneBodyDensityMatrix,
    scaling: Scaling,
}

impl SlaterState {
    pub fn new(grid: SpatialGrid, orbitals: Array2<Complex64>, scaling: Scaling) -> Result<Self> {
        if orbitals.ncols() != scaling.n() {
            return Err(Error::Config(format!(
                "{} orbitals for N = {}",
                orbitals.ncols(),
                scaling.n()
            )));
        }
        if grid.d() != scaling.d() {
            return Err(Error::Config("grid and scaling dimensions differ".into()));
        }
        Ok(Self {
            gamma: OneBodyDensityMatrix::projector(grid, orbitals)?,
            scaling,
        })
    }

    /// The N lowest Hermite functions of -ħ²Δ + x² (d = 1), orthonormalised on the grid.
    pub fn oscillator(grid: SpatialGrid, scaling: Scaling) -> Result<Self> {
        let orbitals = oscillator_orbitals(&grid, scaling.hbar(), scaling.n())?;
        Self::new(grid, orbitals, scaling)
    }

    pub fn gamma(&self) -> &OneBodyDensityMatrix {
        &self.gamma
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.gamma.grid()
    }

    pub fn n(&self) -> usize {
        self.scaling.n()
    }
}

/// Hermite functions ψ_k(x) = ħ^{-1/4} φ_k(x/√ħ), k < count, by the three-term recurrence.
pub fn oscillator_orbitals(grid: &SpatialGrid, hbar: f64, count: usize) -> Result<Array2<Complex64>> {
    if grid.d() != 1 {
        return Err(Error::Config("oscillator orbitals are provided for d = 1".into()));
    }
    let npts = grid.num_points();
    if count > npts {
        return Err(Error::Config(format!("{count} orbitals on {npts} nodes")));
    }
    let mut out = Array2::from_elem((npts, count).f(), ZERO);
    let s = hbar.sqrt();
    let pre = hbar.powf(-0.25);
    for i in 0..npts {
        let xi = grid.node(i) / s;
        let mut prev = 0.0;
        let mut cur = PI.powf(-0.25) * (-0.5 * xi * xi).exp();
        for k in 0..count {
            out[[i, k]] = Complex64::new(pre * cur, 0.0);
            let next = (2.0 / (k as f64 + 1.0)).sqrt() * xi * cur - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
            prev = cur;
            cur = next;
        }
    }
    orthonormalize(grid, &mut out);
    Ok(out)
}

/// Modified Gram-Schmidt in the L² inner product of the grid, applied twice.
pub fn orthonormalize(grid: &SpatialGrid, a: &mut Array2<Complex64>) {
    let w = grid.cell_volume();
    for _ in 0..2 {
        for k in 0..a.ncols() {
            for j in 0..k {
                let proj: Complex64 = a
                    .column(j)
                    .iter()
                    .zip(a.column(k).iter())
                    .map(|(u, v)| u.conj() * v)
                    .sum::<Complex64>()
                    * w;
                let cj = a.column(j).to_owned();
                a.column_mut(k).zip_mut_with(&cj, |v, u| *v -= u * proj);
            }
            let norm = (a.column(k).iter().map(|v| v.norm_sqr()).sum::<f64>() * w).sqrt();
            a.column_mut(k).mapv_inplace(|v| v / norm);
        }
    }
}

/// Largest grid for which the pair density ρ^{(2)} is tabulated.
pub const RHO2_CAP: usize = 4096;

#[derive(Debug, Clone)]
pub struct ReducedDensities {
    pub rho1: Density,
    /// ρ^{(2)}(x_i, x_j) at index i * n + j.
    pub rho2: Vec<f64>,
    /// Momentum density on the dual grid.
    pub t1: Vec<f64>,
    grid: SpatialGrid,
    hbar: f64,
}

impl ReducedDensities {
    pub fn rho1_integral(&self) -> f64 {
        self.rho1.mass()
    }

    pub fn rho2_integral(&self) -> f64 {
        self.rho2.iter().sum::<f64>() * self.grid.cell_volume().powi(2)
    }

    pub fn t1_integral(&self) -> f64 {
        self.t1.iter().sum::<f64>() * PhaseGrid::dual(self.grid, self.hbar).p_cell_volume()
    }

    pub fn rho2_min(&self) -> f64 {
        self.rho2.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn rho2_diagonal(&self) -> Vec<f64> {
        let n = self.grid.num_points();
        (0..n).map(|i| self.rho2[i * n + i]).collect()
    }
}

/// ρ^{(1)}, ρ^{(2)}(x,y) = ½[ρ(x)ρ(y) - |γ(x,y)|²] and t^{(1)} of a Slater state.
pub fn reduced_densities(slater: &SlaterState) -> Result<ReducedDensities> {
    let gamma = slater.gamma();
    let grid = *gamma.grid();
    let n = grid.num_points();
    if n > RHO2_CAP {
        return Err(Error::Capacity(format!("pair density on {n} nodes exceeds {RHO2_CAP}")));
    }
    let rho = gamma.density_values();
    let mut rho2 = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (rho[i] * rho[j] - gamma.kernel(i, j).norm_sqr());
            rho2[i * n + j] = v;
            rho2[j * n + i] = v;
        }
    }
    let hbar = slater.scaling().hbar();
    Ok(ReducedDensities {
        rho1: Density::new(grid, rho)?,
        rho2,
        t1: crate::semiclassic::momentum_density(gamma, hbar),
        grid,
        hbar,
    })
}

/// Mean-field one-body operator (-iħ∇+A)² + V + extra on the grid of `fields`.
fn one_body(
    fields: &ExternalFields,
    scaling: &Scaling,
    scheme: KineticScheme,
    extra: Option<&[f64]>,
) -> Result<OneBodyOperator> {
    let mut u = fields.v().to_vec();
    if let Some(e) = extra {
        for (a, b) in u.iter_mut().zip(e) {
            *a += b;
        }
    }
    build_operator(scheme, fields.grid(), scaling, fields.a(), &u)
}

fn check_state(gamma: &OneBodyDensityMatrix, fields: &ExternalFields) -> Result<()> {
    if gamma.grid() != fields.grid() {
        return Err(Error::Config("density matrix and fields live on different grids".into()));
    }
    Ok(())
}

/// N^{-1} Tr((-iħ∇+A)² + V)γ + (2N²)^{-1} D_w(ρ_γ, ρ_γ), finite-difference kinetic energy.
pub fn rhf_energy(gamma: &OneBodyDensityMatrix, fields: &ExternalFields, scaling: &Scaling) -> Result<f64> {
    rhf_energy_with(gamma, fields, scaling, KineticScheme::FiniteDifference)
}

pub fn rhf_energy_with(
    gamma: &OneBodyDensityMatrix,
    fields: &ExternalFields,
    scaling: &Scaling,
    scheme: KineticScheme,
) -> Result<f64> {
    check_state(gamma, fields)?;
    let h = one_body(fields, scaling, scheme, None)?;
    Ok(energy_parts(gamma, &h, fields, scaling.n()).0)
}

/// (total, linear part) of the per-particle rHF energy.
fn energy_parts(gamma: &OneBodyDensityMatrix, h: &OneBodyOperator, fields: &ExternalFields, n: usize) -> (f64, f64) {
    let n = n as f64;
    let lin = gamma.trace_with(h) / n;
    let rho = gamma.density_values();
    let direct = fields.w().map_or(0.0, |w| w.pair_energy(&rho)) / (2.0 * n * n);
    (lin + direct, lin)
}

/// ∬ w(x-y) |γ(x,y)|² = Σ_ij occ_i occ_j ⟨ψ_i conj ψ_j, w ∗ (ψ_i conj ψ_j)⟩.
fn exchange_integral(gamma: &OneBodyDensityMatrix, w: &Interaction) -> f64 {
    let grid = gamma.grid();
    let k = gamma.rank();
    let occ = gamma.occupations();
    let cols: Vec<Vec<Complex64>> = (0..k).map(|i| gamma.orbital(i)).collect();
    let mut acc = 0.0;
    for i in 0..k {
        for j in i..k {
            let pair: Vec<Complex64> = cols[i].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).collect();
            let conv = w.convolve_complex(&pair);
            let v: f64 = pair.iter().zip(&conv).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * grid.cell_volume();
            acc += if i == j { 1.0 } else { 2.0 } * occ[i] * occ[j] * v;
        }
    }
    acc
}

/// Per-particle exchange correction -(2N²)^{-1} ∬ w(x-y)|γ(x,y)|².
pub fn hf_exchange(gamma: &OneBodyDensityMatrix, fields: &ExternalFields, scaling: &Scaling) -> Result<f64> {
    check_state(gamma, fields)?;
    let n = scaling.n() as f64;
    Ok(fields.w().map_or(0.0, |w| -exchange_integral(gamma, w) / (2.0 * n * n)))
}

/// Per-particle Hartree-Fock energy of a Slater state: rHF energy plus exchange.
pub fn hf_energy(slater: &SlaterState, fields: &ExternalFields, scheme: KineticScheme) -> Result<f64> {
    Ok(rhf_energy_with(slater.gamma(), fields, slater.scaling(), scheme)?
        + hf_exchange(slater.gamma(), fields, slater.scaling())?)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScfOptions {
    pub max_iter: usize,
    pub mixing: f64,
    pub energy_tol: f64,
    pub density_tol: f64,
    pub scheme: KineticScheme,
}

impl Default for ScfOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            mixing: 0.5,
            energy_tol: 1e-9,
            density_tol: 1e-7,
            scheme: KineticScheme::FiniteDifference,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RhfSolution {
    /// Aufbau projector of the converged mean field.
    pub gamma: OneBodyDensityMatrix,
    /// Per-particle rHF energy of `gamma`.
    pub energy: f64,
    /// Energy of the first Aufbau iterate.
    pub initial_energy: f64,
    pub iterations: usize,
    /// sup |ρ_out - ρ_in| / N at the last step.
    pub residual: f64,
    /// Energies of the accepted mixed iterates.
    pub history: Vec<f64>,
    /// The Fermi level was degenerate at some step.
    pub degenerate: bool,
}

/// Self-consistent field iteration with Aufbau filling and linear density mixing.
///
/// The iterate is the mixed state (1-θ)γ + θγ_new, whose energy is exact because the
/// one-body part is linear in γ. θ is halved whenever a step would raise the energy.
pub fn rhf_minimize(fields: &ExternalFields, scaling: &Scaling, opts: &ScfOptions) -> Result<RhfSolution> {
    if !(opts.mixing > 0.0 && opts.mixing <= 1.0) {
        return Err(Error::Config(format!("mixing {} outside (0, 1]", opts.mixing)));
    }
    if let Some(w) = fields.w() {
        if !w.is_convex() {
            return Err(Error::Precondition(format!(
                "SCF needs a non-negative ŵ, found min ŵ = {:e}",
                w.min_w_hat()
            )));
        }
    }
    let n = scaling.n();
    let nf = n as f64;
    let pair = |rho: &[f64]| fields.w().map_or(0.0, |w| w.pair_energy(rho)) / (2.0 * nf * nf);

    let h0 = one_body(fields, scaling, opts.scheme, None)?;
    let first = lowest_n_projector(&h0, n)?;
    let mut degenerate = first.degenerate;
    let mut gamma = first.gamma;
    let (initial_energy, mut lin) = energy_parts(&gamma, &h0, fields, n);
    let mut rho = gamma.density_values();
    let mut energy = initial_energy;
    let mut history = vec![energy];
    let mut residual = f64::INFINITY;

    for it in 1..=opts.max_iter {
        let mf = match fields.w() {
            Some(w) => {
                let phi: Vec<f64> = w.convolve(&rho).into_iter().map(|v| v / nf).collect();
                one_body(fields, scaling, opts.scheme, Some(&phi))?
            }
            None => h0.clone(),
        };
        let next = lowest_n_projector(&mf, n)?;
        degenerate |= next.degenerate;
        let rho_new = next.gamma.density_values();
        let lin_new = next.gamma.trace_with(&h0) / nf;
        residual = rho_new
            .iter()
            .zip(&rho)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / nf;
        gamma = next.gamma;

        let mut theta = opts.mixing;
        let (cand_rho, cand_lin, cand_e) = loop {
            let r: Vec<f64> = rho.iter().zip(&rho_new).map(|(a, b)| (1.0 - theta) * a + theta * b).collect();
            let l = (1.0 - theta) * lin + theta * lin_new;
            let e = l + pair(&r);
            if e <= energy + 1e-14 * energy.abs().max(1.0) || theta < 1e-12 {
                break (r, l, e);
            }
            theta *= 0.5;
        };
        let change = (energy - cand_e).abs();
        rho = cand_rho;
        lin = cand_lin;
        energy = cand_e;
        history.push(energy);
        if change <= opts.energy_tol && residual <= opts.density_tol {
            let (e_final, _) = energy_parts(&gamma, &h0, fields, n);
            return Ok(RhfSolution {
                gamma,
                energy: e_final,
                initial_energy,
                iterations: it,
                residual,
                history,
                degenerate,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual,
        history,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LiebOxfordRow {
    pub lhs: f64,
    pub rhs: f64,
    /// lhs - rhs = ½ D_f(Σδ_z - η, Σδ_z - η)
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiebOxfordReport {
    pub rows: Vec<LiebOxfordRow>,
    pub violations: usize,
    pub min_margin: f64,
}

/// Σ_{k<k'} f(z_k - z_k') ≥ -f(0)K/2 + Σ_k f∗η(z_k) - ½D_f(η,η) for each configuration.
pub fn lieb_oxford_check(configurations: &[Vec<Vec<f64>>], eta: &Density, f: &Interaction) -> Result<LiebOxfordReport> {
    let grid = eta.grid();
    if f.grid() != grid {
        return Err(Error::Config("η and the interaction live on different grids".into()));
    }
    if !f.is_convex() {
        return Err(Error::Precondition(format!(
            "the inequality needs ŵ ≥ 0, found min ŵ = {:e}",
            f.min_w_hat()
        )));
    }
    let d = grid.d();
    let zero = vec![0.0; d];
    let f0 = f.eval(&zero);
    let d_eta = f.pair_energy(eta.values());
    let nodes: Vec<[f64; 3]> = (0..grid.num_points()).map(|i| grid.point(i)).collect();
    let w = grid.cell_volume();
    let conv_at = |z: &[f64]| -> f64 {
        let mut diff = vec![0.0; d];
        nodes
            .iter()
            .zip(eta.values())
            .filter(|(_, &e)| e != 0.0)
            .map(|(x, &e)| {
                for a in 0..d {
                    diff[a] = z[a] - x[a];
                }
                f.eval(&diff) * e
            })
            .sum::<f64>()
            * w
    };
    let mut rows = Vec::with_capacity(configurations.len());
    for zs in configurations {
        if zs.iter().any(|z| z.len() != d) {
            return Err(Error::Config("configuration point of wrong dimension".into()));
        }
        let k = zs.len() as f64;
        let mut lhs = 0.0;
        let mut diff = vec![0.0; d];
        for i in 0..zs.len() {
            for j in i + 1..zs.len() {
                for a in 0..d {
                    diff[a] = zs[i][a] - zs[j][a];
                }
                lhs += f.eval(&diff);
            }
        }
        let rhs = -f0 * k / 2.0 + zs.iter().map(|z| conv_at(z)).sum::<f64>() - 0.5 * d_eta;
        rows.push(LiebOxfordRow {
            lhs,
            rhs,
            margin: lhs - rhs,
        });
    }
    let scale = rows.iter().map(|r| r.lhs.abs().max(r.rhs.abs())).fold(1.0, f64::max);
    let violations = rows.iter().filter(|r| r.margin < -1e-10 * scale).count();
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(LiebOxfordReport {
        rows,
        violations,
        min_margin,
    })
}

/// K points drawn uniformly from the box.
pub fn random_configuration<R: Rng>(rng: &mut R, grid: &SpatialGrid, k: usize) -> Vec<Vec<f64>> {
    let r = grid.half_width();
    (0..k)
        .map(|_| (0..grid.d()).map(|_| rng.gen_range(-r..r)).collect())
        .collect()
}

/// A positive combination of 1-4 Gaussian bumps placed in the inner half of the box.
pub fn random_smooth_density<R: Rng>(rng: &mut R, grid: &SpatialGrid) -> Result<Density> {
    let r = grid.half_width();
    let bumps: Vec<(Vec<f64>, f64, f64)> = (0..rng.gen_range(1..=4))
        .map(|_| {
            let c: Vec<f64> = (0..grid.d()).map(|_| rng.gen_range(-r / 2.0..r / 2.0)).collect();
            (c, rng.gen_range(0.2 * r / 4.0..r / 4.0), rng.gen_range(0.1..3.0))
        })
        .collect();
    let values = grid.sample(|x| {
        bumps
            .iter()
            .map(|(c, s, a)| {
                let d2: f64 = x.iter().zip(c).map(|(u, v)| (u - v).powi(2)).sum();
                a * (-d2 / (2.0 * s * s)).exp()
            })
            .sum()
    });
    Density::new(*grid, values)
}

/// ∫ρ^{1+2/d} / Tr(-Δ)γ with the kinetic energy evaluated spectrally.
pub fn lieb_thirring_ratio(slater: &SlaterState) -> Result<f64> {
    let gamma = slater.gamma();
    let grid = *gamma.grid();
    let d = grid.d();
    let pg = PhaseGrid::dual(grid, 1.0);
    let mut ft = HbarFourier::new(grid, 1.0);
    let mut kinetic = 0.0;
    for (col, o) in gamma.orbitals().columns().into_iter().zip(gamma.occupations()) {
        let mut buf = col.to_vec();
        ft.forward(&mut buf);
        kinetic += o
            * buf
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let p = pg.p_point(k);
                    v.norm_sqr() * (0..d).map(|a| p[a] * p[a]).sum::<f64>()
                })
                .sum::<f64>()
            * pg.p_cell_volume();
    }
    if kinetic <= 0.0 {
        return Err(Error::Precondition("zero kinetic energy".into()));
    }
    let expo = 1.0 + 2.0 / d as f64;
    let num: f64 = gamma.density_values().iter().map(|r| r.powf(expo)).sum::<f64>() * grid.cell_volume();
    Ok(num / kinetic)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExperimentRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub hbar: f64,
    pub energy_per_particle: f64,
    pub tf_gap: f64,
    pub exchange: f64,
    pub lt_ratio: f64,
    pub scf_iters: usize,
    pub converged: bool,
}

pub const EXPERIMENT_HEADER: &str = "N,hbar,energy_per_particle,tf_gap,exchange,lt_ratio,scf_iters,converged";

/// E_rHF(N)/N against e_TF(1) on a common grid.
pub fn convergence_experiment(
    fields: &ExternalFields,
    n_list: &[usize],
    e_tf: f64,
    opts: &ScfOptions,
) -> Result<Vec<ExperimentRow>> {
    convergence_experiment_with(|_| Ok(fields.clone()), n_list, e_tf, opts)
}

/// As [`convergence_experiment`] with fields built per N (e.g. a grid refined with N).
pub fn convergence_experiment_with(
    fields_for: impl Fn(usize) -> Result<ExternalFields>,
    n_list: &[usize],
    e_tf: f64,
    opts: &ScfOptions,
) -> Result<Vec<ExperimentRow>> {
    n_list
        .iter()
        .map(|&n| {
            let fields = fields_for(n)?;
            let scaling = Scaling::new(n, fields.grid().d())?;
            match rhf_minimize(&fields, &scaling, opts) {
                Ok(sol) => {
                    let slater = SlaterState::new(*fields.grid(), sol.gamma.orbitals().clone(), scaling)?;
                    Ok(ExperimentRow {
                        n,
                        hbar: scaling.hbar(),
                        energy_per_particle: sol.energy,
                        tf_gap: sol.energy - e_tf,
                        exchange: hf_exchange(&sol.gamma, &fields, &scaling)?,
                        lt_ratio: lieb_thirring_ratio(&slater)?,
                        scf_iters: sol.iterations,
                        converged: true,
                    })
                }
                Err(Error::NoConvergence { iterations, history, .. }) => {
                    let e = history.last().copied().unwrap_or(f64::NAN);
                    Ok(ExperimentRow {
                        n,
                        hbar: scaling.hbar(),
                        energy_per_particle: e,
                        tf_gap: e - e_tf,
                        exchange: f64::NAN,
                        lt_ratio: f64::NAN,
                        scf_iters: iterations,
                        converged: false,
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub fn write_experiment_csv<W: Write>(rows: &[ExperimentRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{EXPERIMENT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.n, r.hbar, r.energy_per_particle, r.tf_gap, r.exchange, r.lt_ratio, r.scf_iters, r.converged
        )?;
    }
    Ok(())
}

/// Largest number of antisymmetrised basis states for exact diagonalisation.
pub const EXACT_DIM_CAP: usize = 4096;
pub const EXACT_BASIS_CAP: usize = 40;

/// Exact ground state of the N-body Hamiltonian in the span of the lowest one-body modes.
#[derive(Debug, Clone)]
pub struct ExactSmall {
    /// Total energy E(N).
    pub energy: f64,
    pub energy_per_particle: f64,
    pub dim: usize,
    pub basis_size: usize,
    /// One-body eigenvalues of the basis modes.
    pub mode_energies: Vec<f64>,
    /// Basis modes as grid functions (columns).
    pub modes: Array2<Complex64>,
    coupling: f64,
    n: usize,
    grid: SpatialGrid,
    eri: Vec<Complex64>,
}

impl ExactSmall {
    fn eri(&self, p: usize, q: usize, r: usize, s: usize) -> Complex64 {
        let m = self.basis_size;
        self.eri[((p * m + q) * m + r) * m + s]
    }

    /// Coefficients of grid orbitals in the basis, then Gram-Schmidt in coefficient space.
    pub fn project(&self, orbitals: &Array2<Complex64>) -> Array2<Complex64> {
        let m = self.basis_size;
        let w = self.grid.cell_volume();
        let k = orbitals.ncols();
        let mut c = Array2::from_elem((m, k), ZERO);
        for j in 0..k {
            for a in 0..m {
                c[[a, j]] = self
                    .modes
                    .column(a)
                    .iter()
                    .zip(orbitals.column(j).iter())
                    .map(|(u, v)| u.conj() * v)
                    .sum::<Complex64>()
                    * w;
            }
        }
        for _ in 0..2 {
            for j in 0..k {
                for i in 0..j {
                    let proj: Complex64 = (0..m).map(|a| c[[a, i]].conj() * c[[a, j]]).sum();
                    for a in 0..m {
                        let v = c[[a, i]];
                        c[[a, j]] -= v * proj;
                    }
                }
                let norm = (0..m).map(|a| c[[a, j]].norm_sqr()).sum::<f64>().sqrt();
                for a in 0..m {
                    c[[a, j]] /= norm;
                }
            }
        }
        c
    }

    /// Total Hartree-Fock energy of the Slater determinant with the given basis coefficients (columns).
    pub fn slater_energy(&self, coeffs: &Array2<Complex64>) -> f64 {
        let m = self.basis_size;
        let k = coeffs.ncols();
        let one: f64 = (0..k)
            .map(|i| (0..m).map(|a| coeffs[[a, i]].norm_sqr() * self.mode_energies[a]).sum::<f64>())
            .sum();
        // density matrix in the basis: P_ab = Σ_i c_ai conj(c_bi)
        let mut pm = vec![ZERO; m * m];
        for a in 0..m {
            for b in 0..m {
                pm[a * m + b] = (0..k).map(|i| coeffs[[a, i]] * coeffs[[b, i]].conj()).sum();
            }
        }
        let mut two = ZERO;
        for p in 0..m {
            for q in 0..m {
                for r in 0..m {
                    for s in 0..m {
                        let v = self.eri(p, q, r, s);
                        if v == ZERO {
                            continue;
                        }
                        // ⟨pq|rs⟩ (P_rp P_sq - P_sp P_rq)
                        two += v * (pm[r * m + p] * pm[s * m + q] - pm[s * m + p] * pm[r * m + q]);
                    }
                }
            }
        }
        one + 0.5 * self.coupling * two.re
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn popcount_below(mask: u64, i: usize) -> u32 {
    (mask & ((1u64 << i) - 1)).count_ones()
}

/// Dense diagonalisation of H_N on antisymmetrised products of the `basis_size` lowest modes.
pub fn exact_ground_state_small(
    fields: &ExternalFields,
    scaling: &Scaling,
    basis_size: usize,
    scheme: KineticScheme,
) -> Result<ExactSmall> {
    let n = scaling.n();
    if !(2..=3).contains(&n) {
        return Err(Error::Config(format!("exact diagonalisation supports N in {{2, 3}}, got {n}")));
    }
    if basis_size < n || basis_size > EXACT_BASIS_CAP {
        return Err(Error::Config(format!("basis size {basis_size} must lie in [{n}, {EXACT_BASIS_CAP}]")));
    }
    let mut dets: Vec<u64> = (0u64..(1u64 << basis_size)).filter(|m| m.count_ones() as usize == n).collect();
    if dets.len() > EXACT_DIM_CAP {
        return Err(Error::Capacity(format!("{} determinants exceed {EXACT_DIM_CAP}", dets.len())));
    }
    dets.sort_unstable();
    let dim = dets.len();
    let index: HashMap<u64, usize> = dets.iter().enumerate().map(|(i, &m)| (m, i)).collect();

    let grid = *fields.grid();
    let h0 = one_body(fields, scaling, scheme, None)?;
    let eig = h0.eigenpairs(Selection::Lowest(basis_size))?;
    if eig.values.len() < basis_size {
        return Err(Error::Config("one-body operator has fewer modes than requested".into()));
    }
    let modes = eig.orbitals;
    let m = basis_size;
    let coupling = 1.0 / n as f64;

    let mut eri = vec![ZERO; m * m * m * m];
    if let Some(w) = fields.w() {
        let wv = grid.cell_volume();
        let cols: Vec<Vec<Complex64>> = (0..m).map(|a| modes.column(a).to_vec()).collect();
        // pair densities conj(φ_q) φ_s and their convolutions with w
        let mut conv = Vec::with_capacity(m * m);
        for q in 0..m {
            for s in 0..m {
                let pair: Vec<Complex64> = cols[q].iter().zip(&cols[s]).map(|(a, b)| a.conj() * b).collect();
                conv.push(w.convolve_complex(&pair));
            }
        }
        for p in 0..m {
            for r in 0..m {
                let pr: Vec<Complex64> = cols[p].iter().zip(&cols[r]).map(|(a, b)| a.conj() * b).collect();
                for q in 0..m {
                    for s in 0..m {
                        let v: Complex64 = pr.iter().zip(&conv[q * m + s]).map(|(a, b)| a * b).sum::<Complex64>() * wv;
                        eri[((p * m + q) * m + r) * m + s] = v;
                    }
                }
            }
        }
    }

    let mut hmat = vec![ZERO; dim * dim];
    for (col, &det) in dets.iter().enumerate() {
        let one: f64 = (0..m).filter(|&a| det >> a & 1 == 1).map(|a| eig.values[a]).sum();
        hmat[col + col * dim] += one;
        if fields.w().is_none() {
            continue;
        }
        let occ: Vec<usize> = (0..m).filter(|&a| det >> a & 1 == 1).collect();
        // ½ c Σ ⟨pq|rs⟩ a†_p a†_q a_s a_r
        for &r in &occ {
            for &s in &occ {
                if r == s {
                    continue;
                }
                let mut sign = if popcount_below(det, r) % 2 == 1 { -1.0 } else { 1.0 };
                let d1 = det & !(1u64 << r);
                if popcount_below(d1, s) % 2 == 1 {
                    sign = -sign;
                }
                let d2 = d1 & !(1u64 << s);
                for q in 0..m {
                    if d2 >> q & 1 == 1 {
                        continue;
                    }
                    let sq = if popcount_below(d2, q) % 2 == 1 { -sign } else { sign };
                    let d3 = d2 | (1u64 << q);
                    for p in 0..m {
                        if d3 >> p & 1 == 1 {
                            continue;
                        }
                        let v = eri[((p * m + q) * m + r) * m + s];
                        if v == ZERO {
                            continue;
                        }
                        let sp = if popcount_below(d3, p) % 2 == 1 { -sq } else { sq };
                        let row = index[&(d3 | (1u64 << p))];
                        hmat[row + col * dim] += v * (0.5 * coupling * sp);
                    }
                }
            }
        }
    }
    let energy = if hmat.iter().all(|v| v.im.abs() <= 1e-14 * v.re.abs().max(1.0)) {
        eigh_symmetric(hmat.iter().map(|v| v.re).collect(), dim, Selection::Lowest(1))?.values[0]
    } else {
        eigh_hermitian(hmat, dim, Selection::Lowest(1))?.values[0]
    };
    Ok(ExactSmall {
        energy,
        energy_per_particle: energy / n as f64,
        dim,
        basis_size,
        mode_energies: eig.values,
        modes,
        coupling,
        n,
        grid,
        eri,
    })
}
