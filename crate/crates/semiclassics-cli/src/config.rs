//! Experiment configuration files and the field catalog.

use serde::Deserialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use semiclassics::phasespace::{Density, SpatialGrid};
use semiclassics::spectral::KineticScheme;
use semiclassics::tf::{ExternalFields, Profile, TfOptions};
use semiclassics::semiclassic::WindowShape;

pub const EXPERIMENTS: [&str; 9] = [
    "tf-solve",
    "vlasov-check",
    "weyl",
    "husimi",
    "wigner",
    "check-identities",
    "rhf-converge",
    "lieb-oxford",
    "exact-small",
];

/// A schema violation, optionally anchored at a line of the config file.
#[derive(Debug)]
pub struct SchemaError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: String,
    pub grid: GridConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub fields: FieldsConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub d: usize,
    #[serde(rename = "R")]
    pub r: f64,
    pub n: usize,
    #[serde(default)]
    pub pmax: Option<f64>,
    #[serde(default)]
    pub n_p: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    #[serde(rename = "N_list", default)]
    pub n_list: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expr {
    pub id: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsConfig {
    #[serde(rename = "V", default)]
    pub v: Option<Expr>,
    #[serde(rename = "A", default)]
    pub a: Option<Expr>,
    #[serde(default)]
    pub w: Option<Expr>,
    #[serde(default)]
    pub rho: Option<Expr>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub mixing: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub formats: Option<Vec<String>>,
}

/// Experiment-specific knobs.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// "gaussian" or "quartic"
    #[serde(default)]
    pub window: Option<String>,
    /// Second window for the window-independence comparison.
    #[serde(default)]
    pub compare_window: Option<String>,
    /// "fd" or "spectral"
    #[serde(default)]
    pub scheme: Option<String>,
    /// Stride through phase nodes for two-particle bounds.
    #[serde(default)]
    pub stride: Option<usize>,
    #[serde(default)]
    pub configurations: Option<usize>,
    #[serde(rename = "K", default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub basis_size: Option<usize>,
    /// Grid size of the Thomas-Fermi reference.
    #[serde(default)]
    pub tf_n: Option<usize>,
    /// Grid points per particle; the grid is refined to max(n, this * N).
    #[serde(default)]
    pub grid_per_particle: Option<usize>,
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub dilations: Option<Vec<f64>>,
    #[serde(default)]
    pub mollifications: Option<Vec<f64>>,
    #[serde(default)]
    pub x0: Option<f64>,
    #[serde(default)]
    pub p0: Option<f64>,
    /// Number of random probes for the resolution of identity.
    #[serde(default)]
    pub probes: Option<usize>,
    #[serde(default)]
    pub expected_energy: Option<f64>,
    #[serde(default)]
    pub expected_mu: Option<f64>,
    #[serde(default)]
    pub expected_tol: Option<f64>,
    /// Require the error columns of a sweep to be non-increasing in N (default true).
    #[serde(default)]
    pub assert_monotone: Option<bool>,
}

/// Line of the first occurrence of `"key"` in the raw text.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let pat = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&pat)).map(|i| i + 1)
}

pub fn schema(text: &str, key: &str, message: impl Into<String>) -> SchemaError {
    SchemaError {
        line: line_of(text, key),
        message: message.into(),
    }
}

pub fn parse(text: &str, subcommand: &str) -> Result<Config, SchemaError> {
    let cfg: Config = serde_json::from_str(text).map_err(|e| SchemaError {
        line: if e.line() > 0 { Some(e.line()) } else { None },
        message: e.to_string(),
    })?;
    if !EXPERIMENTS.contains(&cfg.experiment.as_str()) {
        return Err(schema(text, "experiment", format!("unknown experiment {:?}", cfg.experiment)));
    }
    if cfg.experiment != subcommand {
        return Err(schema(
            text,
            "experiment",
            format!("config is for {:?} but the subcommand is {subcommand:?}", cfg.experiment),
        ));
    }
    if let Some(formats) = &cfg.output.formats {
        for f in formats {
            if !["csv", "json", "bin"].contains(&f.as_str()) {
                return Err(schema(text, "formats", format!("unknown output format {f:?}")));
            }
        }
    }
    Ok(cfg)
}

/// Catalog entry: allowed parameters with defaults.
fn catalog(id: &str) -> Option<&'static [(&'static str, f64)]> {
    Some(match id {
        "zero" => &[],
        "harmonic" => &[("k", 1.0)],
        "box" => &[("L", f64::NAN)],
        "gaussian_bump" => &[("amp", 1.0), ("sigma", 1.0), ("center", 0.0)],
        "sine_bump" => &[("amp", 1.0), ("k", 1.0), ("sigma", 2.0)],
        "cos2_bump" => &[("L", f64::NAN)],
        "uniform" => &[],
        _ => return None,
    })
}

/// Resolved catalog expression.
#[derive(Debug, Clone)]
pub struct Field {
    pub id: String,
    params: BTreeMap<&'static str, f64>,
}

impl Field {
    fn p(&self, k: &str) -> f64 {
        self.params[k]
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match self.id.as_str() {
            "zero" => 0.0,
            "uniform" => 1.0,
            "harmonic" => self.p("k") * r2,
            "box" => {
                if x.iter().all(|v| v.abs() < self.p("L")) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            "gaussian_bump" => {
                let c = self.p("center");
                let s = self.p("sigma");
                let d2: f64 = x.iter().map(|v| (v - c).powi(2)).sum();
                self.p("amp") * (-d2 / (2.0 * s * s)).exp()
            }
            "sine_bump" => {
                let s = self.p("sigma");
                self.p("amp") * (self.p("k") * x[0]).sin() * (-r2 / (2.0 * s * s)).exp()
            }
            "cos2_bump" => {
                let l = self.p("L");
                x.iter()
                    .map(|v| if v.abs() < l / 2.0 { (PI * v / l).cos().powi(2) } else { 0.0 })
                    .product()
            }
            _ => unreachable!("validated catalog id"),
        }
    }
}

pub fn resolve(text: &str, key: &str, e: &Expr, allowed: &[&str]) -> Result<Field, SchemaError> {
    if !allowed.contains(&e.id.as_str()) {
        return Err(schema(text, key, format!("{key}: expression {:?} not allowed here (allowed: {allowed:?})", e.id)));
    }
    let spec = catalog(&e.id).ok_or_else(|| schema(text, key, format!("unknown expression {:?}", e.id)))?;
    let mut params = BTreeMap::new();
    for (name, default) in spec {
        params.insert(*name, e.params.get(*name).copied().unwrap_or(*default));
    }
    for (name, value) in &e.params {
        if !spec.iter().any(|(n, _)| n == name) {
            return Err(schema(text, name, format!("{key}: unknown parameter {name:?} for {:?}", e.id)));
        }
        if !value.is_finite() {
            return Err(schema(text, name, format!("{key}: parameter {name:?} must be finite")));
        }
    }
    if let Some((name, _)) = params.iter().find(|(_, v)| v.is_nan()) {
        return Err(schema(text, key, format!("{key}: {:?} needs parameter {name:?}", e.id)));
    }
    if e.id == "gaussian_bump" || e.id == "sine_bump" {
        if params["sigma"] <= 0.0 {
            return Err(schema(text, "sigma", format!("{key}: sigma must be positive")));
        }
    }
    if (e.id == "box" || e.id == "cos2_bump") && params["L"] <= 0.0 {
        return Err(schema(text, "L", format!("{key}: L must be positive")));
    }
    Ok(Field { id: e.id.clone(), params })
}

/// Everything an experiment needs, validated.
pub struct Setup {
    pub text: String,
    pub cfg: Config,
    pub grid: SpatialGrid,
    pub v: Field,
    pub a: Option<Field>,
    pub w: Option<Field>,
}

pub fn setup(text: String, cfg: Config) -> Result<Setup, SchemaError> {
    let g = &cfg.grid;
    let grid = SpatialGrid::new(g.d, g.r, g.n).map_err(|e| schema(&text, "grid", e.to_string()))?;
    let zero = Expr { id: "zero".into(), params: BTreeMap::new() };
    let v = resolve(&text, "V", cfg.fields.v.as_ref().unwrap_or(&zero), &["zero", "harmonic", "box", "gaussian_bump", "sine_bump"])?;
    let a = match &cfg.fields.a {
        Some(e) if e.id != "zero" => Some(resolve(&text, "A", e, &["harmonic", "gaussian_bump", "sine_bump"])?),
        _ => None,
    };
    let w = match &cfg.fields.w {
        Some(e) if e.id != "zero" => Some(resolve(&text, "w", e, &["gaussian_bump"])?),
        _ => None,
    };
    Ok(Setup { text, cfg, grid, v, a, w })
}

impl Setup {
    pub fn err(&self, key: &str, message: impl Into<String>) -> SchemaError {
        schema(&self.text, key, message)
    }

    pub fn fields_on(&self, grid: SpatialGrid) -> semiclassics::Result<ExternalFields> {
        let mut f = ExternalFields::new(grid, grid.sample(|x| self.v.eval(x)))?;
        if let Some(a) = &self.a {
            let vals = grid.sample(|x| a.eval(x));
            let d = grid.d();
            f = f.with_vector_potential(vals.iter().flat_map(|v| std::iter::repeat(*v).take(d)).collect())?;
        }
        if let Some(w) = &self.w {
            let w = w.clone();
            let profile: Profile = Arc::new(move |x: &[f64]| w.eval(x));
            f = f.with_interaction(profile)?;
        }
        Ok(f)
    }

    pub fn fields(&self) -> semiclassics::Result<ExternalFields> {
        self.fields_on(self.grid)
    }

    pub fn rho(&self) -> Result<Density, SchemaError> {
        let e = self
            .cfg
            .fields
            .rho
            .as_ref()
            .ok_or_else(|| self.err("fields", "this experiment needs fields.rho"))?;
        let f = resolve(&self.text, "rho", e, &["cos2_bump", "gaussian_bump", "uniform"])?;
        let vals = self.grid.sample(|x| f.eval(x));
        let mass: f64 = vals.iter().sum::<f64>() * self.grid.cell_volume();
        if mass <= 0.0 {
            return Err(self.err("rho", "target density has zero mass on the grid"));
        }
        Density::new(self.grid, vals.into_iter().map(|v| v / mass).collect()).map_err(|e| self.err("rho", e.to_string()))
    }

    pub fn n_single(&self) -> Result<usize, SchemaError> {
        match (&self.cfg.scaling.n, &self.cfg.scaling.n_list) {
            (Some(n), _) => Ok(*n),
            (None, Some(l)) if l.len() == 1 => Ok(l[0]),
            _ => Err(self.err("scaling", "this experiment needs scaling.N")),
        }
    }

    pub fn n_list(&self) -> Result<Vec<usize>, SchemaError> {
        match (&self.cfg.scaling.n, &self.cfg.scaling.n_list) {
            (_, Some(l)) if !l.is_empty() => Ok(l.clone()),
            (Some(n), _) => Ok(vec![*n]),
            _ => Err(self.err("scaling", "this experiment needs scaling.N or scaling.N_list")),
        }
    }

    pub fn tf_options(&self) -> TfOptions {
        let d = TfOptions::default();
        TfOptions {
            mixing: self.cfg.solver.mixing.unwrap_or(d.mixing),
            max_iter: self.cfg.solver.max_iter.unwrap_or(d.max_iter),
            tol: self.cfg.solver.tol.unwrap_or(d.tol),
        }
    }

    pub fn scheme(&self) -> Result<KineticScheme, SchemaError> {
        match self.cfg.options.scheme.as_deref() {
            None => Ok(if self.v.id == "box" || self.grid.num_points() > semiclassics::spectral::DENSE_CAP {
                KineticScheme::FiniteDifference
            } else {
                KineticScheme::Spectral
            }),
            Some("fd") => Ok(KineticScheme::FiniteDifference),
            Some("spectral") => Ok(KineticScheme::Spectral),
            Some(other) => Err(self.err("scheme", format!("unknown scheme {other:?}"))),
        }
    }

    pub fn window_shape(&self, key: &str, value: Option<&str>) -> Result<WindowShape, SchemaError> {
        match value {
            None | Some("gaussian") => Ok(WindowShape::Gaussian),
            Some("quartic") => Ok(WindowShape::Quartic),
            Some(other) => Err(self.err(key, format!("unknown window {other:?}"))),
        }
    }

    pub fn wants(&self, format: &str) -> bool {
        match &self.cfg.output.formats {
            None => format == "csv" || format == "json",
            Some(f) => f.iter().any(|x| x == format),
        }
    }
}
