//! Experiment runner: one function per subcommand.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use semiclassics::manybody::{
    convergence_experiment_with, exact_ground_state_small, lieb_oxford_check, random_configuration,
    random_smooth_density, reduced_densities, rhf_minimize, write_experiment_csv, ExperimentRow, ScfOptions,
    SlaterState, RHO2_CAP,
};
use semiclassics::phasespace::{Density, PhaseGrid, PhaseSpaceMeasure, Scaling, SpatialGrid};
use semiclassics::semiclassic::{
    coherent_state, husimi1, husimi2, husimi_density_marginals, kinetic_identity_check, relative_l1,
    resolution_identity_check, wigner1, wigner_husimi_convolution_check, write_measure_binary, write_measure_csv,
    CheckRow, CoherentWindow, WindowShape, BOUND_TOL, MARGINAL_TOL, NORMALIZATION_TOL, SYMMETRY_TOL,
};
use semiclassics::spectral::{build_operator, lowest_n_projector, weyl_row, OneBodyDensityMatrix, WeylRow};
use semiclassics::tf::{build_m_rho, c_tf, subadditivity_check, tf_energy, tf_minimize_with, TFProblem};
use semiclassics::vlasov::{
    bathtub_optimality_check, dilated_competitor, mollified_competitor, rho_of_m, vlasov_energy,
};
use semiclassics::Error;

use crate::config::{SchemaError, Setup};

pub enum Failure {
    Schema(SchemaError),
    Numerical(String),
}

impl From<SchemaError> for Failure {
    fn from(e: SchemaError) -> Self {
        Failure::Schema(e)
    }
}

pub struct RunArgs {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: usize,
}

pub struct Report {
    pub checks: Vec<CheckRow>,
    data: Value,
    files: Vec<(String, Vec<u8>)>,
}

impl Report {
    fn new() -> Self {
        Self { checks: Vec::new(), data: Value::Null, files: Vec::new() }
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

struct Ctx<'a> {
    s: &'a Setup,
    seed: u64,
    threads: usize,
}

impl Ctx<'_> {
    /// Configuration-shaped library errors become schema errors, the rest are numerical.
    fn lib<T>(&self, r: semiclassics::Result<T>) -> Result<T, Failure> {
        r.map_err(|e| match e {
            Error::Config(m) | Error::Capacity(m) => Failure::Schema(self.s.err("grid", m)),
            other => Failure::Numerical(other.to_string()),
        })
    }

    fn monotone(&self) -> bool {
        self.s.cfg.options.assert_monotone.unwrap_or(true)
    }

    fn expected_tol(&self, default: f64) -> f64 {
        self.s.cfg.options.expected_tol.unwrap_or(default)
    }
}

/// Runs the experiment and writes its files; the report says whether every check passed.
pub fn run(s: &Setup, args: &RunArgs) -> Result<Report, Failure> {
    let ctx = Ctx {
        s,
        seed: args.seed.or(s.cfg.seed).unwrap_or(0),
        threads: args.threads.max(1),
    };
    let mut rep = match s.cfg.experiment.as_str() {
        "tf-solve" => tf_solve(&ctx)?,
        "vlasov-check" => vlasov_check(&ctx)?,
        "weyl" => weyl(&ctx)?,
        "husimi" => husimi(&ctx)?,
        "wigner" => wigner(&ctx)?,
        "check-identities" => check_identities(&ctx)?,
        "rhf-converge" => rhf_converge(&ctx)?,
        "lieb-oxford" => lieb_oxford(&ctx)?,
        "exact-small" => exact_small(&ctx)?,
        other => unreachable!("validated experiment {other}"),
    };
    let dir = args
        .out
        .clone()
        .or_else(|| s.cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    if s.wants("json") {
        let summary = json!({
            "experiment": s.cfg.experiment,
            "seed": ctx.seed,
            "pass": rep.pass(),
            "checks": rep.checks,
            "data": rep.data,
        });
        let text = serde_json::to_string_pretty(&summary).expect("serialisable summary") + "\n";
        rep.files.push((format!("{}_summary.json", s.cfg.experiment), text.into_bytes()));
    }
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Numerical(format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in &rep.files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Failure::Numerical(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(rep)
}

/// Maps `f` over `items` on up to `threads` workers, keeping the input order.
fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every slot filled")).collect()
}

fn csv_table(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn measure_files(rep: &mut Report, s: &Setup, stem: &str, m: &PhaseSpaceMeasure) {
    if s.wants("csv") {
        let mut buf = Vec::new();
        write_measure_csv(m, &mut buf).expect("in-memory write");
        rep.files.push((format!("{stem}.csv"), buf));
    }
    if s.wants("bin") {
        let mut buf = Vec::new();
        write_measure_binary(m, &mut buf).expect("in-memory write");
        rep.files.push((format!("{stem}.bin"), buf));
    }
}

/// A check that `later ≤ earlier` (or `<` when `strict`).
fn trend_row(name: String, earlier: f64, later: f64, strict: bool) -> CheckRow {
    let excess = later - earlier;
    let ok = if strict { excess < 0.0 } else { excess <= 0.0 };
    let mut row = CheckRow::new(name, later, earlier, excess.max(0.0), 0.0);
    row.pass = ok;
    row
}

fn bound_rows(name: &str, lo: f64, hi: f64) -> [CheckRow; 2] {
    [
        CheckRow::new(format!("{name} lower bound"), lo, 0.0, (-lo).max(0.0), BOUND_TOL),
        CheckRow::new(format!("{name} upper bound"), hi, 1.0, (hi - 1.0).max(0.0), BOUND_TOL),
    ]
}

fn tf_reference(ctx: &Ctx, grid: SpatialGrid) -> Result<semiclassics::tf::TFSolution, Failure> {
    let fields = ctx.lib(ctx.s.fields_on(grid))?;
    let problem = ctx.lib(TFProblem::new(fields, 1.0))?;
    ctx.lib(tf_minimize_with(&problem, &ctx.s.tf_options()))
}

fn tf_solve(ctx: &Ctx) -> Result<Report, Failure> {
    let s = ctx.s;
    let mut rep = Report::new();
    let opts = s.tf_options();
    let sol = tf_reference(ctx, s.grid)?;
    let mass = sol.rho.mass();
    rep.checks.push(CheckRow::relative("tf mass", mass, 1.0, 1e-6));
    rep.checks.push(CheckRow::new("tf residual", sol.residual, 0.0, sol.residual, opts.tol));
    let tol = ctx.expected_tol(1e-3);
    if let Some(mu) = s.cfg.options.expected_mu {
        rep.checks.push(CheckRow::new("tf chemical potential", sol.mu, mu, (sol.mu - mu).abs(), tol));
    }
    if let Some(e) = s.cfg.options.expected_energy {
        rep.checks.push(CheckRow::new("tf energy", sol.energy, e, (sol.energy - e).abs(), tol));
    }
    let sub = match &s.cfg.options.lambdas {
        Some(l) => ctx.lib(subadditivity_check(&ctx.lib(s.fields())?, l, &opts))?,
        None => Vec::new(),
    };
    let solution = json!({
        "mu": sol.mu,
        "energy": sol.energy,
        "mass": mass,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "subadditivity": sub,
    });
    if s.wants("json") {
        let text = serde_json::to_string_pretty(&solution).expect("serialisable") + "\n";
        rep.files.push(("tf_solution.json".into(), text.into_bytes()));
    }
    if s.wants("csv") {
        let d = s.grid.d();
        let header: Vec<String> = (1..=d).map(|a| format!("x{a}")).chain(["rho".to_string()]).collect();
        let rows = sol.rho.values().iter().enumerate().map(|(i, r)| {
            let x = s.grid.point(i);
            x[..d].iter().map(|v| v.to_string()).chain([r.to_string()]).collect()
        });
        rep.files.push(("tf_density.csv".into(), csv_table(&header.join(","), rows)));
        if !sub.is_empty() {
            let rows = sub.iter().map(|r| {
                vec![r.lambda.to_string(), r.e_lambda.to_string(), r.e_complement.to_string(), r.e_one.to_string(), r.holds.to_string()]
            });
            rep.files.push(("tf_subadditivity.csv".into(), csv_table("lambda,e_lambda,e_complement,e_one,holds", rows)));
        }
    }
    rep.data = solution;
    Ok(rep)
}

fn vlasov_check(ctx: &Ctx) -> Result<Report, Failure> {
    let s = ctx.s;
    let mut rep = Report::new();
    let fields = ctx.lib(s.fields())?;
    let rho = match s.cfg.fields.rho {
        Some(_) => s.rho()?,
        None => tf_reference(ctx, s.grid)?.rho,
    };
    let o = &s.cfg.options;
    let dilations = o.dilations.clone().unwrap_or_else(|| vec![1.1, 1.5]);
    let mollifications = o.mollifications.clone().unwrap_or_else(|| vec![0.05, 0.1]);
    let d = s.grid.d();
    let a_max = fields.a().map_or(0.0, |a| a.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let p_f = (ctx.lib(c_tf(d))? * rho.sup().powf(2.0 / d as f64)).sqrt();
    let widest = dilations.iter().cloned().fold(1.0, f64::max);
    let p_max = s.cfg.grid.pmax.unwrap_or(1.2 * widest * p_f + a_max);
    let n_p = s.cfg.grid.n_p.unwrap_or(s.grid.n());
    let pg = ctx.lib(PhaseGrid::uniform(s.grid, n_p, p_max))?;
    let m_rho = ctx.lib(build_m_rho(&rho, fields.a(), &pg))?;

    let marginal = ctx.lib(rho_of_m(&m_rho))?.l1_distance(&rho);
    rep.checks.push(CheckRow::new("m_rho marginal", marginal, 0.0, marginal, semiclassics::vlasov::MARGINAL_TOL));
    let e_vlasov = ctx.lib(vlasov_energy(&m_rho, &fields))?;
    let e_tf = ctx.lib(tf_energy(&rho, &ctx.lib(TFProblem::new(fields.clone(), rho.mass()))?))?;
    rep.checks.push(CheckRow::relative(
        "vlasov energy of m_rho equals tf energy",
        e_vlasov,
        e_tf,
        semiclassics::vlasov::MARGINAL_TOL,
    ));

    let mut labels = Vec::new();
    let mut competitors = Vec::new();
    for &f in &dilations {
        labels.push(("dilation", f));
        competitors.push(ctx.lib(dilated_competitor(&rho, fields.a(), &pg, f))?);
    }
    for &sigma in &mollifications {
        labels.push(("mollification", sigma));
        competitors.push(ctx.lib(mollified_competitor(&m_rho, &rho, sigma))?);
    }
    let bath = ctx.lib(bathtub_optimality_check(&rho, &fields, &pg, &competitors))?;
    for (row, (kind, param)) in bath.rows.iter().zip(&labels) {
        rep.checks.push(CheckRow::new(
            format!("bathtub vs {kind} {param}"),
            row.energy,
            bath.reference_energy,
            (-row.margin).max(0.0),
            bath.tol,
        ));
    }
    if s.wants("csv") {
        let rows = bath.rows.iter().zip(&labels).map(|(r, (kind, param))| {
            vec![kind.to_string(), param.to_string(), r.energy.to_string(), r.margin.to_string(), r.marginal_l1.to_string()]
        });
        rep.files.push(("vlasov_competitors.csv".into(), csv_table("competitor,parameter,energy,margin,marginal_l1", rows)));
    }
    rep.data = json!({ "reference_energy": bath.reference_energy, "tf_energy": e_tf, "p_max": p_max, "n_p": n_p, "rows": bath.rows });
    Ok(rep)
}

fn weyl(ctx: &Ctx) -> Result<Report, Failure> {
    let s = ctx.s;
    let mut rep = Report::new();
    let rho = s.rho()?;
    let fields = ctx.lib(s.fields())?;
    let n_list = s.n_list()?;
    let rows: Vec<WeylRow> = par_map(&n_list, ctx.threads, |&n| ctx.lib(weyl_row(&rho, fields.a(), n)))
        .into_iter()
        .collect::<Result<_, _>>()?;
    if ctx.monotone() {
        for w in rows.windows(2) {
            rep.checks.push(trend_row(
                format!("weyl count error N={} to N={}", w[0].n, w[1].n),
                w[0].count_rel_error,
                w[1].count_rel_error,
                false,
            ));
            rep.checks.push(trend_row(
                format!("weyl kinetic error N={} to N={}", w[0].n, w[1].n),
                w[0].kinetic_rel_error,
                w[1].kinetic_rel_error,
                false,
            ));
        }
    }
    if let Some(last) = rows.last() {
        let tol = ctx.expected_tol(0.1);
        rep.checks.push(CheckRow::new(format!("weyl count N={}", last.n), last.count_per_particle, last.mass, last.count_rel_error, tol));
        rep.checks.push(CheckRow::new(
            format!("weyl kinetic N={}", last.n),
            last.kinetic_per_particle,
            last.kinetic_target,
            last.kinetic_rel_error,
            tol,
        ));
    }
    if s.wants("csv") {
        let table = rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.hbar.to_string(),
                r.count_per_particle.to_string(),
                r.mass.to_string(),
                r.count_rel_error.to_string(),
                r.kinetic_per_particle.to_string(),
                r.kinetic_target.to_string(),
                r.kinetic_rel_error.to_string(),
                r.c_obs.to_string(),
                r.degenerate.to_string(),
            ]
        });
        rep.files.push((
            "weyl.csv".into(),
            csv_table(
                "N,hbar,count_per_particle,mass,count_rel_error,kinetic_per_particle,kinetic_target,kinetic_rel_error,c_obs,degenerate",
                table,
            ),
        ));
    }
    rep.data = json!({ "rows": rows });
    Ok(rep)
}

/// The N lowest eigenfunctions of the one-body Hamiltonian.
fn ground_state(ctx: &Ctx, scaling: &Scaling) -> Result<OneBodyDensityMatrix, Failure> {
    let s = ctx.s;
    let fields = ctx.lib(s.fields())?;
    let h = ctx.lib(build_operator(s.scheme()?, &s.grid, scaling, fields.a(), fields.v()))?;
    Ok(ctx.lib(lowest_n_projector(&h, scaling.n()))?.gamma)
}

fn default_stride(pg: &PhaseGrid) -> usize {
    (pg.num_points() / 1024).max(1) | 1
}

/// Exact one- and two-particle Husimi identities for a Slater state.
fn husimi_identity_rows(
    gamma: &OneBodyDensityMatrix,
    window: &CoherentWindow,
    pg: &PhaseGrid,
    stride: usize,
    label: &str,
) -> semiclassics::Result<(PhaseSpaceMeasure, semiclassics::semiclassic::Husimi2, Vec<CheckRow>)> {
    let mut rows = Vec::new();
    let hbar = window.hbar();
    let d = pg.d() as i32;
    let n = gamma.trace();
    let m1 = husimi1(gamma, window, pg)?;
    let (lo, hi) = m1.range();
    rows.extend(bound_rows(&format!("{label} m1"), lo, hi));
    let marg = husimi_density_marginals(&m1, gamma, window)?;
    for mut r in [marg.total, marg.position, marg.momentum] {
        r.name = format!("{label} {}", r.name);
        rows.push(r);
    }
    let h2 = husimi2(gamma, window, pg)?;
    let hd = hbar.powi(d);
    rows.push(CheckRow::relative(
        format!("{label} husimi normalization k=2"),
        h2.normalization(),
        n * (n - 1.0) * hd * hd,
        NORMALIZATION_TOL,
    ));
    let expected: Vec<f64> = h2.m1().iter().map(|v| v * (n - 1.0) * hd).collect();
    let marginal = h2.marginal();
    rows.push(CheckRow::new(
        format!("{label} husimi marginal k=2"),
        marginal.iter().sum(),
        expected.iter().sum(),
        relative_l1(&marginal, &expected),
        MARGINAL_TOL,
    ));
    let (lo2, hi2) = h2.bounds(stride);
    rows.extend(bound_rows(&format!("{label} m2"), lo2, hi2));
    let sym = h2.symmetry_defect(stride);
    rows.push(CheckRow::new(format!("{label} m2 symmetry"), sym, 0.0, sym, SYMMETRY_TOL));
    Ok((m1, h2, rows))
}

fn windows(ctx: &Ctx) -> Result<(WindowShape, WindowShape), Failure> {
    let o = &ctx.s.cfg.options;
    let primary = ctx.s.window_shape("window", o.window.as_deref())?;
    let other = match o.compare_window.as_deref() {
        Some(w) => ctx.s.window_shape("compare_window", Some(w))?,
        None if primary == WindowShape::Gaussian => WindowShape::Quartic,
        None => WindowShape::Gaussian,
    };
    Ok((primary, other))
}

#[derive(Serialize)]
struct HusimiRow {
    #[serde(rename = "N")]
    n: usize,
    hbar: f64,
    l1_to_tf: f64,
    factorization_defect: f64,
    window_discrepancy: f64,
    m1_min: f64,
    m1_max: f64,
    m2_min: f64,
    m2_max: f64,
}

fn husimi(ctx: &Ctx) -> Result<Report, Failure> {
    let s = ctx.s;
    let mut rep = Report::new();
    let n_list = s.n_list()?;
    let (primary, other) = windows(ctx)?;
    let tf = tf_reference(ctx, s.grid)?;
    let a = ctx.lib(s.fields())?.a().map(|a| a.to_vec());
    let d = s.grid.d();
    let per_n = par_map(&n_list, ctx.threads, |&n| -> Result<_, Failure> {
        let scaling = ctx.lib(Scaling::new(n, d))?;
        let hbar = scaling.hbar();
        let pg = PhaseGrid::dual(s.grid, hbar);
        let stride = s.cfg.options.stride.unwrap_or_else(|| default_stride(&pg));
        let gamma = ground_state(ctx, &scaling)?;
        let wa = ctx.lib(CoherentWindow::new(primary, d, hbar))?;
        let wb = ctx.lib(CoherentWindow::new(other, d, hbar))?;
        let (m1, h2, mut rows) = ctx.lib(husimi_identity_rows(&gamma, &wa, &pg, stride, &format!("N={n} {primary:?}")))?;
        let (m1b, _, rows_b) = ctx.lib(husimi_identity_rows(&gamma, &wb, &pg, stride, &format!("N={n} {other:?}")))?;
        rows.extend(rows_b);
        let m_tf = ctx.lib(build_m_rho(&tf.rho, a.as_deref(), &pg))?;
        let l1 = relative_l1(m1.values(), m_tf.values());
        let (lo, hi) = m1.range();
        let (lo2, hi2) = h2.bounds(stride);
        let row = HusimiRow {
            n,
            hbar,
            l1_to_tf: l1,
            factorization_defect: h2.factorization_defect(),
            window_discrepancy: relative_l1(m1b.values(), m1.values()),
            m1_min: lo,
            m1_max: hi,
            m2_min: lo2,
            m2_max: hi2,
        };
        Ok((row, rows, m1))
    });
    let mut table = Vec::new();
    for r in per_n {
        let (row, rows, m1) = r?;
        rep.checks.extend(rows);
        measure_files(&mut rep, s, &format!("husimi_m1_N{}", row.n), &m1);
        table.push(row);
    }
    if ctx.monotone() {
        for w in table.windows(2) {
            let span = format!("N={} to N={}", w[0].n, w[1].n);
            rep.checks.push(trend_row(format!("distance to tf indicator {span}"), w[0].l1_to_tf, w[1].l1_to_tf, true));
            rep.checks.push(trend_row(
                format!("factorization defect {span}"),
                w[0].factorization_defect,
                w[1].factorization_defect,
                true,
            ));
            rep.checks.push(trend_row(
                format!("window discrepancy {span}"),
                w[0].window_discrepancy,
                w[1].window_discrepancy,
                true,
            ));
        }
    }
    if let (Some(tol), Some(last)) = (s.cfg.options.expected_tol, table.last()) {
        rep.checks.push(CheckRow::new(format!("distance to tf indicator N={}", last.n), last.l1_to_tf, 0.0, last.l1_to_tf, tol));
    }
    if s.wants("csv") {
        let rows = table.iter().map(|r| {
            [r.n as f64, r.hbar, r.l1_to_tf, r.factorization_defect, r.window_discrepancy, r.m1_min, r.m1_max, r.m2_min, r.m2_max]
                .iter()
                .enumerate()
                .map(|(i, v)| if i == 0 { r.n.to_string() } else { v.to_string() })
                .collect()
        });
        rep.files.push((
            "husimi.csv".into(),
            csv_table("N,hbar,l1_to_tf,factorization_defect,window_discrepancy,m1_min,m1_max,m2_min,m2_max", rows),
        ));
    }
    rep.data = json!({ "rows": table });
    Ok(rep)
}

fn wigner(ctx: &Ctx) -> Result<Report, Failure> {
    let s = ctx.s;
    let mut rep = Report::new();
    let d = s.grid.d();
    let scaling = ctx.lib(Scaling::new(s.n_single()?, d))?;
    let hbar = scaling.hbar();
    let pg = PhaseGrid::dual(s.grid, hbar);
    let window = ctx.lib(CoherentWindow::gaussian(d, hbar))?;
    let two_pi_d = (2.0 * PI).powi(d as i32);

    let x0 = vec![s.cfg.options.x0.unwrap_or(0.0); d];
    let p0 = vec![s.cfg.options.p0.unwrap_or(0.0); d];
    let f = ctx.lib(coherent_state(&window, &s.grid, &x0, &p0))?;
    let orb = ndarray::Array2::from_shape_vec((s.grid.num_points(), 1), f.values).expect("column shape");
    let coherent = ctx.lib(OneBodyDensityMatrix::new(s.grid, orb, vec![1.0]))?;
    let wc = ctx.lib(wigner1(&coherent, &scaling, &pg))?;
    let peak = (2.0 / hbar).powi(d as i32);
    let np = pg.num_p_points();
    let mut worst = 0.0f64;
    for (z, v) in wc.values().iter().enumerate() {
        let x = s.grid.point(z / np);
        let p = pg.p_point(z % np);
        let r2: f64 = (0..d).map(|a| (x[a] - x0[a]).powi(2) + (p[a] - p0[a]).powi(2)).sum();
        worst = worst.max((v - peak * (-r2 / hbar).exp()).abs());
    }
    rep.checks.push(CheckRow::new("coherent wigner pointwise", worst / peak, 0.0, worst / peak, 1e-6));
    rep.checks.push(CheckRow::relative("coherent wigner total", wc.total(), two_pi_d, 1e-6));

    let gamma = ground_state(ctx, &scaling)?;
    let w = ctx.lib(wigner1(&gamma, &scaling, &pg))?;
    rep.checks.push(CheckRow::relative("wigner total", w.total(), two_pi_d, 1e-6));
    let conv = ctx.lib(wigner_husimi_convolution_check(&gamma, &scaling, &window))?;
    rep.checks.push(conv.row);
    let (lo, hi) = w.range();
    measure_files(&mut rep, s, &format!("wigner_N{}", scaling.n()), &w);
    rep.data = json!({ "hbar": hbar, "min": lo, "max": hi, "coherent_sup_error": worst, "convolution_rel_l1": conv.rel_l1 });
    Ok(rep)
}

fn check_identities(ctx: &Ctx) -> Result<Report, Failure> {
    let s = ctx.s;
    let mut rep = Report::new();
    let d = s.grid.d();
    let scaling = ctx.lib(Scaling::new(s.n_single()?, d))?;
    let hbar = scaling.hbar();
    let pg = PhaseGrid::dual(s.grid, hbar);
    let (primary, _) = windows(ctx)?;
    let window = ctx.lib(CoherentWindow::new(primary, d, hbar))?;
    let fields = ctx.lib(s.fields())?;
    let gamma = ground_state(ctx, &scaling)?;

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let probes: Vec<Vec<Complex64>> = (0..s.cfg.options.probes.unwrap_or(3))
        .map(|_| (0..s.grid.num_points()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
        .collect();
    for r in ctx.lib(resolution_identity_check(&window, &pg, &probes))? {
        rep.checks.push(CheckRow::new(format!("resolution of identity probe {}", r.probe), r.norm, r.norm, r.rel_error, NORMALIZATION_TOL));
    }

    let stride = s.cfg.options.stride.unwrap_or_else(|| default_stride(&pg));
    let (_, _, rows) = ctx.lib(husimi_identity_rows(&gamma, &window, &pg, stride, &format!("{primary:?}")))?;
    rep.checks.extend(rows);

    let kin = ctx.lib(kinetic_identity_check(&gamma, &window, &fields))?;
    rep.checks.push(kin.row.clone());

    if primary == WindowShape::Gaussian {
        let w = ctx.lib(wigner1(&gamma, &scaling, &pg))?;
        rep.checks.push(CheckRow::relative("wigner total", w.total(), (2.0 * PI).powi(d as i32), 1e-6));
        rep.checks.push(ctx.lib(wigner_husimi_convolution_check(&gamma, &scaling, &window))?.row);
    }

    if s.grid.num_points() <= RHO2_CAP {
        let slater = ctx.lib(SlaterState::new(s.grid, gamma.orbitals().clone(), scaling))?;
        let rd = ctx.lib(reduced_densities(&slater))?;
        let n = scaling.n() as f64;
        rep.checks.push(CheckRow::relative("rho1 integral", rd.rho1_integral(), n, NORMALIZATION_TOL));
        rep.checks.push(CheckRow::relative("rho2 integral", rd.rho2_integral(), n * (n - 1.0) / 2.0, NORMALIZATION_TOL));
        rep.checks.push(CheckRow::relative("t1 integral", rd.t1_integral(), n, NORMALIZATION_TOL));
        let lo = rd.rho2_min();
        rep.checks.push(CheckRow::new("rho2 lower bound", lo, 0.0, (-lo).max(0.0), BOUND_TOL));
    }

    if s.wants("csv") {
        let rows = rep.checks.iter().map(|c| {
            vec![c.name.clone(), c.value.to_string(), c.reference.to_string(), c.error.to_string(), c.tol.to_string(), c.pass.to_string()]
        });
        rep.files.push(("check_identities.csv".into(), csv_table("name,value,reference,error,tol,pass", rows)));
    }
    rep.data = json!({ "hbar": hbar, "kinetic": kin });
    Ok(rep)
}

fn scf_options(ctx: &Ctx) -> Result<ScfOptions, Failure> {
    let d = ScfOptions::default();
    let sv = &ctx.s.cfg.solver;
    Ok(ScfOptions {
        max_iter: sv.max_iter.unwrap_or(d.max_iter),
        mixing: sv.mixing.unwrap_or(d.mixing),
        energy_tol: sv.tol.unwrap_or(d.energy_tol),
        density_tol: d.density_tol,
        scheme: ctx.s.scheme()?,
    })
}

fn rhf_converge(ctx: &Ctx) -> Result<Report, Failure> {
    let s = ctx.s;
    let mut rep = Report::new();
    let n_list = s.n_list()?;
    let g = &s.cfg.grid;
    let tf_grid = ctx.lib(SpatialGrid::new(g.d, g.r, s.cfg.options.tf_n.unwrap_or(g.n)))?;
    let e_tf = tf_reference(ctx, tf_grid)?.energy;
    let opts = scf_options(ctx)?;
    let per_particle = s.cfg.options.grid_per_particle.unwrap_or(0);
    let results = par_map(&n_list, ctx.threads, |&n| {
        let size = g.n.max(per_particle * n).next_power_of_two();
        let grid = ctx.lib(SpatialGrid::new(g.d, g.r, size))?;
        ctx.lib(convergence_experiment_with(|_| s.fields_on(grid), &[n], e_tf, &opts)).map(|mut r| (size, r.remove(0)))
    });
    let mut rows: Vec<ExperimentRow> = Vec::new();
    let mut sizes = Vec::new();
    for r in results {
        let (size, row) = r?;
        sizes.push(size);
        rows.push(row);
    }
    for r in &rows {
        let mut c = CheckRow::new(format!("scf converged N={}", r.n), r.scf_iters as f64, opts.max_iter as f64, 0.0, 0.0);
        c.pass = r.converged;
        rep.checks.push(c);
    }
    if ctx.monotone() {
        for w in rows.windows(2) {
            rep.checks.push(trend_row(
                format!("tf gap N={} to N={}", w[0].n, w[1].n),
                w[0].tf_gap.abs(),
                w[1].tf_gap.abs(),
                false,
            ));
        }
    }
    if let Some(e) = s.cfg.options.expected_energy {
        let tol = ctx.expected_tol(1e-3);
        for r in &rows {
            rep.checks.push(CheckRow::new(
                format!("energy per particle N={}", r.n),
                r.energy_per_particle,
                e,
                (r.energy_per_particle - e).abs(),
                tol,
            ));
        }
    }
    if s.wants("csv") {
        let mut buf = Vec::new();
        write_experiment_csv(&rows, &mut buf).expect("in-memory write");
        rep.files.push(("rhf_converge.csv".into(), buf));
    }
    rep.data = json!({ "e_tf": e_tf, "tf_n": tf_grid.n(), "grid_sizes": sizes, "rows": rows });
    Ok(rep)
}

fn lieb_oxford(ctx: &Ctx) -> Result<Report, Failure> {
    let s = ctx.s;
    let mut rep = Report::new();
    let fields = ctx.lib(s.fields())?;
    let f = fields.w().ok_or_else(|| s.err("fields", "lieb-oxford needs fields.w"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let eta: Density = ctx.lib(random_smooth_density(&mut rng, &s.grid))?;
    let count = s.cfg.options.configurations.unwrap_or(1000);
    let k = s.cfg.options.k.unwrap_or(20);
    let configs: Vec<_> = (0..count).map(|_| random_configuration(&mut rng, &s.grid, k)).collect();
    let lo = ctx.lib(lieb_oxford_check(&configs, &eta, f))?;
    let v = lo.violations as f64;
    rep.checks.push(CheckRow::new("lieb-oxford violations", v, 0.0, v, 0.0));
    if s.wants("csv") {
        let rows = lo
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| vec![i.to_string(), r.lhs.to_string(), r.rhs.to_string(), r.margin.to_string()]);
        rep.files.push(("lieb_oxford.csv".into(), csv_table("configuration,lhs,rhs,margin", rows)));
    }
    rep.data = json!({ "K": k, "configurations": count, "violations": lo.violations, "min_margin": lo.min_margin, "eta_mass": eta.mass() });
    Ok(rep)
}

fn exact_small(ctx: &Ctx) -> Result<Report, Failure> {
    let s = ctx.s;
    let mut rep = Report::new();
    let fields = ctx.lib(s.fields())?;
    let scaling = ctx.lib(Scaling::new(s.n_single()?, s.grid.d()))?;
    let scheme = s.scheme()?;
    let basis = s.cfg.options.basis_size.unwrap_or(10);
    let ex = ctx.lib(exact_ground_state_small(&fields, &scaling, basis, scheme))?;
    let opts = scf_options(ctx)?;
    let sol = ctx.lib(rhf_minimize(&fields, &scaling, &opts))?;
    let slater = ex.slater_energy(&ex.project(sol.gamma.orbitals()));
    let n = scaling.n() as f64;
    rep.checks.push(CheckRow::new(
        "exact energy below projected slater energy",
        ex.energy,
        slater,
        (ex.energy - slater).max(0.0),
        1e-10 * slater.abs().max(1.0),
    ));
    if let Some(e) = s.cfg.options.expected_energy {
        let tol = ctx.expected_tol(1e-3);
        rep.checks.push(CheckRow::new("exact energy per particle", ex.energy_per_particle, e, (ex.energy_per_particle - e).abs(), tol));
    }
    if s.wants("csv") {
        let mut text = String::from("N,basis_size,dim,energy,energy_per_particle,slater_energy_per_particle,rhf_energy_per_particle\n");
        writeln!(
            text,
            "{},{},{},{},{},{},{}",
            scaling.n(),
            ex.basis_size,
            ex.dim,
            ex.energy,
            ex.energy_per_particle,
            slater / n,
            sol.energy
        )
        .expect("string write");
        rep.files.push(("exact_small.csv".into(), text.into_bytes()));
    }
    rep.data = json!({
        "energy": ex.energy,
        "energy_per_particle": ex.energy_per_particle,
        "dim": ex.dim,
        "basis_size": ex.basis_size,
        "mode_energies": ex.mode_energies,
        "slater_energy": slater,
        "rhf_energy_per_particle": sol.energy,
    });
    Ok(rep)
}
