//! Magnetic Schrödinger operators on a box, their spectral projectors and Weyl asymptotics.

use ndarray::{Array2, ShapeBuilder};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{eigh_hermitian, eigh_symmetric, eigh_tridiagonal, Selection};
use crate::phasespace::{Density, Scaling, SpatialGrid};
use crate::tf::c_tf;

/// Largest number of unknowns for a dense operator.
pub const DENSE_CAP: usize = 4096;
/// Largest number of unknowns for the tridiagonal (d = 1 finite-difference) operator.
pub const TRIDIAGONAL_CAP: usize = 1 << 20;
/// Eigenvalues this close to a threshold are flagged as degenerate with it.
pub const DEGENERACY_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Discretisation of (-iħ∇ + A)².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KineticScheme {
    /// Peierls-phase forward differences with zero Dirichlet data outside the active nodes.
    FiniteDifference,
    /// Periodic Fourier pseudo-spectral derivative on the whole box.
    Spectral,
}

#[derive(Debug, Clone)]
enum Repr {
    Tridiagonal { diag: Vec<f64>, off: Vec<Complex64> },
    Dense(Vec<Complex64>),
}

/// Hermitian one-body operator on the active nodes of a grid (nodes where U is finite).
#[derive(Debug, Clone)]
pub struct OneBodyOperator {
    grid: SpatialGrid,
    hbar: f64,
    scheme: KineticScheme,
    active: Vec<usize>,
    potential: Vec<f64>,
    repr: Repr,
}

fn check_fields(grid: &SpatialGrid, a: Option<&[f64]>, u: &[f64]) -> Result<()> {
    if u.len() != grid.num_points() {
        return Err(Error::Config(format!(
            "potential has {} values for {} nodes",
            u.len(),
            grid.num_points()
        )));
    }
    if u.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
        return Err(Error::NonFinite("one-body potential".into()));
    }
    if let Some(a) = a {
        if a.len() != grid.num_points() * grid.d() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("vector potential must hold d finite values per node".into()));
        }
    }
    Ok(())
}

/// (-iħ∇ + A)² + U with Peierls phases e^{i h Ā/ħ} on each link and Dirichlet conditions.
///
/// Nodes where U = +∞ are excluded and act as the Dirichlet exterior.
pub fn build_magnetic_dirichlet(
    grid: &SpatialGrid,
    scaling: &Scaling,
    a: Option<&[f64]>,
    u: &[f64],
) -> Result<OneBodyOperator> {
    check_fields(grid, a, u)?;
    let d = grid.d();
    let n = grid.n();
    let hbar = scaling.hbar();
    let h = grid.h();
    let t = hbar * hbar / (h * h);
    let active: Vec<usize> = (0..u.len()).filter(|&i| u[i].is_finite()).collect();
    let dim = active.len();
    let cap = if d == 1 { TRIDIAGONAL_CAP } else { DENSE_CAP };
    if dim > cap {
        return Err(Error::Capacity(format!("{dim} unknowns exceed the cap {cap} for d = {d}")));
    }
    let mut compressed = vec![usize::MAX; u.len()];
    for (c, &i) in active.iter().enumerate() {
        compressed[i] = c;
    }
    let potential: Vec<f64> = active.iter().map(|&i| u[i]).collect();
    let link = |i: usize, j: usize, axis: usize| -> Complex64 {
        let theta = a.map_or(0.0, |a| 0.5 * (a[i * d + axis] + a[j * d + axis]) * h / hbar);
        -Complex64::from_polar(t, theta)
    };
    let repr = if d == 1 {
        let diag: Vec<f64> = potential.iter().map(|v| 2.0 * t + v).collect();
        let off = (0..dim.saturating_sub(1))
            .map(|c| {
                let (i, j) = (active[c], active[c + 1]);
                if j == i + 1 {
                    link(i, j, 0)
                } else {
                    ZERO
                }
            })
            .collect();
        Repr::Tridiagonal { diag, off }
    } else {
        let mut m = vec![ZERO; dim * dim];
        for (c, &i) in active.iter().enumerate() {
            m[c + c * dim] = Complex64::new(2.0 * d as f64 * t + potential[c], 0.0);
            let mi = grid.multi_index(i);
            for axis in 0..d {
                if mi[axis] + 1 >= n {
                    continue;
                }
                let j = i + n.pow((d - 1 - axis) as u32);
                let cj = compressed[j];
                if cj == usize::MAX {
                    continue;
                }
                let v = link(i, j, axis);
                m[c + cj * dim] = v;
                m[cj + c * dim] = v.conj();
            }
        }
        Repr::Dense(m)
    };
    Ok(OneBodyOperator {
        grid: *grid,
        hbar,
        scheme: KineticScheme::FiniteDifference,
        active,
        potential,
        repr,
    })
}

/// Coefficients c(m) = n^{-1} Σ_k q_k e^{2πi (k - n/2) m / n} for m in (-n, n), index m + n - 1.
fn circulant_symbol(q: &[f64]) -> Vec<Complex64> {
    let n = q.len();
    (0..2 * n - 1)
        .map(|idx| {
            let m = idx as f64 - (n as f64 - 1.0);
            q.iter()
                .enumerate()
                .map(|(k, qk)| {
                    Complex64::from_polar(*qk, 2.0 * PI * (k as f64 - n as f64 / 2.0) * m / n as f64)
                })
                .sum::<Complex64>()
                / n as f64
        })
        .collect()
}

/// (-iħ∇ + A)² + U with Fourier pseudo-spectral derivatives (periodic box).
pub fn build_magnetic_spectral(
    grid: &SpatialGrid,
    scaling: &Scaling,
    a: Option<&[f64]>,
    u: &[f64],
) -> Result<OneBodyOperator> {
    check_fields(grid, a, u)?;
    if u.iter().any(|v| v.is_infinite()) {
        return Err(Error::Config(
            "the spectral scheme needs a finite potential on the whole box".into(),
        ));
    }
    let d = grid.d();
    let n = grid.n();
    let dim = grid.num_points();
    if dim > DENSE_CAP {
        return Err(Error::Capacity(format!("{dim} unknowns exceed the dense cap {DENSE_CAP}")));
    }
    let hbar = scaling.hbar();
    let h_p = 2.0 * PI * hbar / grid.side();
    let p: Vec<f64> = (0..n).map(|k| (k as f64 - n as f64 / 2.0) * h_p).collect();
    let p2: Vec<f64> = p.iter().map(|v| v * v).collect();
    let c1 = circulant_symbol(&p);
    let c2 = circulant_symbol(&p2);
    let mut m = vec![ZERO; dim * dim];
    for i in 0..dim {
        m[i + i * dim] += u[i];
        let mi = grid.multi_index(i);
        for axis in 0..d {
            let stride = n.pow((d - 1 - axis) as u32);
            let base = i - mi[axis] * stride;
            let ai = a.map_or(0.0, |a| a[i * d + axis]);
            m[i + i * dim] += ai * ai;
            for jj in 0..n {
                let j = base + jj * stride;
                let off = mi[axis] + n - 1 - jj;
                let aj = a.map_or(0.0, |a| a[j * d + axis]);
                m[i + j * dim] += c2[off] + c1[off] * (ai + aj);
            }
        }
    }
    Ok(OneBodyOperator {
        grid: *grid,
        hbar,
        scheme: KineticScheme::Spectral,
        active: (0..dim).collect(),
        potential: u.to_vec(),
        repr: Repr::Dense(m),
    })
}

/// Builds the operator for the requested scheme.
pub fn build_operator(
    scheme: KineticScheme,
    grid: &SpatialGrid,
    scaling: &Scaling,
    a: Option<&[f64]>,
    u: &[f64],
) -> Result<OneBodyOperator> {
    match scheme {
        KineticScheme::FiniteDifference => build_magnetic_dirichlet(grid, scaling, a, u),
        KineticScheme::Spectral => build_magnetic_spectral(grid, scaling, a, u),
    }
}

/// Eigenvalues and L²-normalised eigenfunctions on the full grid.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub orbitals: Array2<Complex64>,
}

impl OneBodyOperator {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn scheme(&self) -> KineticScheme {
        self.scheme
    }

    /// Number of unknowns.
    pub fn dim(&self) -> usize {
        self.active.len()
    }

    /// Dense matrix on the active nodes, column-major.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let dim = self.dim();
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Tridiagonal { diag, off } => {
                let mut m = vec![ZERO; dim * dim];
                for i in 0..dim {
                    m[i + i * dim] = Complex64::new(diag[i], 0.0);
                }
                for (i, v) in off.iter().enumerate() {
                    m[i + (i + 1) * dim] = *v;
                    m[i + 1 + i * dim] = v.conj();
                }
                m
            }
        }
    }

    /// ‖H - H*‖_max / ‖H‖_max.
    pub fn hermiticity_defect(&self) -> f64 {
        let Repr::Dense(m) = &self.repr else {
            return 0.0;
        };
        let dim = self.dim();
        let mut defect = 0.0f64;
        let mut norm = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                defect = defect.max((m[i + j * dim] - m[j + i * dim].conj()).norm());
                norm = norm.max(m[i + j * dim].norm());
            }
        }
        defect / norm.max(f64::MIN_POSITIVE)
    }

    /// H v for v on the full grid (values on inactive nodes are ignored).
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let dim = self.dim();
        let x: Vec<Complex64> = self.active.iter().map(|&i| v[i]).collect();
        let mut y = vec![ZERO; dim];
        match &self.repr {
            Repr::Tridiagonal { diag, off } => {
                for i in 0..dim {
                    y[i] = x[i] * diag[i];
                }
                for (i, t) in off.iter().enumerate() {
                    y[i] += t * x[i + 1];
                    y[i + 1] += t.conj() * x[i];
                }
            }
            Repr::Dense(m) => {
                for (j, xj) in x.iter().enumerate() {
                    if *xj == ZERO {
                        continue;
                    }
                    let col = &m[j * dim..(j + 1) * dim];
                    for (yi, mij) in y.iter_mut().zip(col) {
                        *yi += mij * xj;
                    }
                }
            }
        }
        let mut out = vec![ZERO; self.grid.num_points()];
        for (c, &i) in self.active.iter().enumerate() {
            out[i] = y[c];
        }
        out
    }

    /// ⟨v, H v⟩ in L².
    pub fn expectation(&self, v: &[Complex64]) -> f64 {
        let hv = self.apply(v);
        v.iter().zip(&hv).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * self.grid.cell_volume()
    }

    /// ⟨v, U v⟩ in L².
    pub fn potential_expectation(&self, v: &[Complex64]) -> f64 {
        self.active
            .iter()
            .zip(&self.potential)
            .map(|(&i, u)| u * v[i].norm_sqr())
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn eigenpairs(&self, sel: Selection) -> Result<Eigenpairs> {
        let dim = self.dim();
        let npts = self.grid.num_points();
        let norm = self.grid.cell_volume().sqrt().recip();
        let (values, cols): (Vec<f64>, Vec<Vec<Complex64>>) = match &self.repr {
            Repr::Tridiagonal { diag, off } => {
                // Gauge away the link phases so the matrix becomes real symmetric.
                let mut phase = vec![0.0; dim];
                let mut e = Vec::with_capacity(off.len());
                for (i, t) in off.iter().enumerate() {
                    if *t == ZERO {
                        phase[i + 1] = 0.0;
                        e.push(0.0);
                    } else {
                        phase[i + 1] = phase[i] - t.arg() + PI;
                        e.push(-t.norm());
                    }
                }
                let eig = eigh_tridiagonal(diag, &e, sel)?;
                let cols = eig
                    .vectors
                    .columns()
                    .into_iter()
                    .map(|c| {
                        c.iter()
                            .zip(&phase)
                            .map(|(v, ph)| Complex64::from_polar(v * norm, *ph))
                            .collect()
                    })
                    .collect();
                (eig.values, cols)
            }
            Repr::Dense(m) => {
                if m.iter().all(|v| v.im == 0.0) {
                    let eig = eigh_symmetric(m.iter().map(|v| v.re).collect(), dim, sel)?;
                    let cols = eig
                        .vectors
                        .columns()
                        .into_iter()
                        .map(|c| c.iter().map(|v| Complex64::new(v * norm, 0.0)).collect())
                        .collect();
                    (eig.values, cols)
                } else {
                    let eig = eigh_hermitian(m.clone(), dim, sel)?;
                    let cols = eig
                        .vectors
                        .columns()
                        .into_iter()
                        .map(|c| c.iter().map(|v| v * norm).collect())
                        .collect();
                    (eig.values, cols)
                }
            }
        };
        let k = values.len();
        let mut orbitals = Array2::from_elem((npts, k).f(), ZERO);
        for (j, col) in cols.iter().enumerate() {
            for (c, &i) in self.active.iter().enumerate() {
                orbitals[[i, j]] = col[c];
            }
        }
        Ok(Eigenpairs { values, orbitals })
    }
}

/// Finite-rank 0 ≤ γ ≤ 1 given by orthonormal orbitals (columns) and occupations.
#[derive(Debug, Clone)]
pub struct OneBodyDensityMatrix {
    grid: SpatialGrid,
    orbitals: Array2<Complex64>,
    occupations: Vec<f64>,
}

/// Orthonormality tolerance for orbitals.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

impl OneBodyDensityMatrix {
    pub fn new(grid: SpatialGrid, orbitals: Array2<Complex64>, occupations: Vec<f64>) -> Result<Self> {
        if orbitals.nrows() != grid.num_points() || orbitals.ncols() != occupations.len() {
            return Err(Error::Config(format!(
                "orbital array {:?} does not match {} nodes and {} occupations",
                orbitals.dim(),
                grid.num_points(),
                occupations.len()
            )));
        }
        if occupations.iter().any(|o| !(0.0..=1.0).contains(o)) {
            return Err(Error::Precondition("occupations must lie in [0, 1]".into()));
        }
        let g = Self {
            grid,
            orbitals,
            occupations,
        };
        let defect = g.gram_defect();
        if defect > ORTHONORMAL_TOL {
            return Err(Error::Precondition(format!(
                "orbitals are not orthonormal (Gram defect {defect:e})"
            )));
        }
        Ok(g)
    }

    /// Rank-N projector onto the given orthonormal orbitals.
    pub fn projector(grid: SpatialGrid, orbitals: Array2<Complex64>) -> Result<Self> {
        let k = orbitals.ncols();
        Self::new(grid, orbitals, vec![1.0; k])
    }

    pub fn zero(grid: SpatialGrid) -> Self {
        Self {
            grid,
            orbitals: Array2::from_elem((grid.num_points(), 0).f(), ZERO),
            occupations: Vec::new(),
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn orbitals(&self) -> &Array2<Complex64> {
        &self.orbitals
    }

    pub fn orbital(&self, i: usize) -> Vec<Complex64> {
        self.orbitals.column(i).to_vec()
    }

    pub fn occupations(&self) -> &[f64] {
        &self.occupations
    }

    pub fn rank(&self) -> usize {
        self.occupations.len()
    }

    pub fn trace(&self) -> f64 {
        self.occupations.iter().sum()
    }

    /// Occupations all in {0, 1}.
    pub fn is_pure(&self) -> bool {
        self.occupations.iter().all(|&o| o == 0.0 || o == 1.0)
    }

    /// Max-entry distance of the L² Gram matrix from the identity.
    pub fn gram_defect(&self) -> f64 {
        let w = self.grid.cell_volume();
        let k = self.rank();
        let mut defect = 0.0f64;
        for i in 0..k {
            for j in i..k {
                let g: Complex64 = self
                    .orbitals
                    .column(i)
                    .iter()
                    .zip(self.orbitals.column(j).iter())
                    .map(|(a, b)| a.conj() * b)
                    .sum::<Complex64>()
                    * w;
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((g - target).norm());
            }
        }
        defect
    }

    /// ρ_γ(x) = Σ occ_i |u_i(x)|².
    pub fn density_values(&self) -> Vec<f64> {
        let mut rho = vec![0.0; self.grid.num_points()];
        for (col, occ) in self.orbitals.columns().into_iter().zip(&self.occupations) {
            for (r, v) in rho.iter_mut().zip(col.iter()) {
                *r += occ * v.norm_sqr();
            }
        }
        rho
    }

    pub fn density(&self) -> Density {
        Density::new(self.grid, self.density_values()).expect("ρ_γ is non-negative")
    }

    /// Kernel γ(x_i, x_j) = Σ occ u(x_i) conj(u(x_j)).
    pub fn kernel(&self, i: usize, j: usize) -> Complex64 {
        self.orbitals
            .row(i)
            .iter()
            .zip(self.orbitals.row(j).iter())
            .zip(&self.occupations)
            .map(|((a, b), o)| a * b.conj() * *o)
            .sum()
    }

    /// Frobenius norm of γ² - γ computed in the orbital basis.
    pub fn idempotency_defect(&self) -> f64 {
        let w = self.grid.cell_volume();
        let k = self.rank();
        let mut acc = 0.0;
        for i in 0..k {
            for j in 0..k {
                let g: Complex64 = self
                    .orbitals
                    .column(i)
                    .iter()
                    .zip(self.orbitals.column(j).iter())
                    .map(|(a, b)| a.conj() * b)
                    .sum::<Complex64>()
                    * w;
                let oi = self.occupations[i];
                let oj = self.occupations[j];
                let target = if i == j { oi } else { 0.0 };
                acc += (g * oi * oj - target).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Tr(H γ).
    pub fn trace_with(&self, h: &OneBodyOperator) -> f64 {
        self.orbitals
            .columns()
            .into_iter()
            .zip(&self.occupations)
            .map(|(c, o)| o * h.expectation(&c.to_vec()))
            .sum()
    }

    /// Tr((-iħ∇+A)² γ): the expectation of H minus its potential part.
    pub fn kinetic_with(&self, h: &OneBodyOperator) -> f64 {
        self.orbitals
            .columns()
            .into_iter()
            .zip(&self.occupations)
            .map(|(c, o)| {
                let v = c.to_vec();
                o * (h.expectation(&v) - h.potential_expectation(&v))
            })
            .sum()
    }
}

/// A projector together with the eigenvalues it was built from.
#[derive(Debug, Clone)]
pub struct Projector {
    pub gamma: OneBodyDensityMatrix,
    pub eigenvalues: Vec<f64>,
    /// An eigenvalue lies within [`DEGENERACY_TOL`] of the cut.
    pub degenerate: bool,
}

/// 1(H ≤ level), with closed inclusion at the threshold.
pub fn spectral_projector(h: &OneBodyOperator, level: f64) -> Result<Projector> {
    let slack = DEGENERACY_TOL * level.abs().max(1.0);
    let eig = h.eigenpairs(Selection::AtMost(level + slack))?;
    let keep = eig.values.iter().filter(|&&v| v <= level).count();
    let degenerate = eig.values.iter().any(|&v| (v - level).abs() <= slack);
    let orbitals = eig.orbitals.slice(ndarray::s![.., ..keep]).to_owned();
    Ok(Projector {
        gamma: OneBodyDensityMatrix::projector(*h.grid(), orbitals)?,
        eigenvalues: eig.values[..keep].to_vec(),
        degenerate,
    })
}

/// Projector onto the N lowest eigenvectors; ties at the edge are flagged.
pub fn lowest_n_projector(h: &OneBodyOperator, n: usize) -> Result<Projector> {
    if n > h.dim() {
        return Err(Error::Config(format!("{n} states requested from a {}-dimensional operator", h.dim())));
    }
    if n == 0 {
        return Ok(Projector {
            gamma: OneBodyDensityMatrix::zero(*h.grid()),
            eigenvalues: Vec::new(),
            degenerate: false,
        });
    }
    let extra = (n + 1).min(h.dim());
    let eig = h.eigenpairs(Selection::Lowest(extra))?;
    let degenerate = extra > n
        && (eig.values[n] - eig.values[n - 1]).abs() <= DEGENERACY_TOL * eig.values[n].abs().max(1.0);
    let orbitals = eig.orbitals.slice(ndarray::s![.., ..n]).to_owned();
    Ok(Projector {
        gamma: OneBodyDensityMatrix::projector(*h.grid(), orbitals)?,
        eigenvalues: eig.values[..n].to_vec(),
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeylRow {
    pub n: usize,
    pub hbar: f64,
    /// Tr γ_N / N
    pub count_per_particle: f64,
    pub mass: f64,
    pub count_rel_error: f64,
    /// Tr (-iħ∇+A)² γ_N / N
    pub kinetic_per_particle: f64,
    /// (d/(d+2)) c_TF ∫ρ^{1+2/d}
    pub kinetic_target: f64,
    pub kinetic_rel_error: f64,
    /// sup ρ_γ / N divided by ‖ρ‖_∞^{d/2}
    pub c_obs: f64,
    pub degenerate: bool,
}

/// One row of the Weyl table: γ_N = 1((-iħ∇+A)² - c_TF ρ^{2/d} ≤ 0) at ħ = N^{-1/d}.
pub fn weyl_row(rho: &Density, a: Option<&[f64]>, n: usize) -> Result<WeylRow> {
    let grid = rho.grid();
    let d = grid.d();
    let c = c_tf(d)?;
    let scaling = Scaling::new(n, d)?;
    let u: Vec<f64> = rho.values().iter().map(|r| -c * r.max(0.0).powf(2.0 / d as f64)).collect();
    let h = build_magnetic_dirichlet(grid, &scaling, a, &u)?;
    let proj = spectral_projector(&h, 0.0)?;
    let gamma = &proj.gamma;
    let mass = rho.mass();
    let count = gamma.trace() / n as f64;
    let kinetic = gamma.kinetic_with(&h) / n as f64;
    let pow: Vec<f64> = rho.values().iter().map(|r| r.max(0.0).powf(1.0 + 2.0 / d as f64)).collect();
    let target = d as f64 / (d as f64 + 2.0) * c * crate::phasespace::integrate(&pow, grid);
    let sup_gamma = gamma.density_values().into_iter().fold(0.0, f64::max) / n as f64;
    let sup_rho = rho.sup();
    let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { (a - b).abs() / b.abs() };
    Ok(WeylRow {
        n,
        hbar: scaling.hbar(),
        count_per_particle: count,
        mass,
        count_rel_error: rel(count, mass),
        kinetic_per_particle: kinetic,
        kinetic_target: target,
        kinetic_rel_error: rel(kinetic, target),
        c_obs: if sup_rho > 0.0 { sup_gamma / sup_rho.powf(d as f64 / 2.0) } else { 0.0 },
        degenerate: proj.degenerate,
    })
}

/// Weyl table over an N sweep, in the given order.
pub fn weyl_report(rho: &Density, a: Option<&[f64]>, n_list: &[usize]) -> Result<Vec<WeylRow>> {
    n_list.iter().map(|&n| weyl_row(rho, a, n)).collect()
}
