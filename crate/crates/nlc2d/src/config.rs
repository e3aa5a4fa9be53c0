//! Run configuration: a strict TOML schema with `section.key=value`
//! command-line overrides.

use std::path::{Path, PathBuf};

use nlc2d_core::diagnostics::DEFAULT_DELTA0_SQ;
use nlc2d_core::experiments::{BubbleSpec, DirectorInit, InitialData, SweepPlan, VelocityInit};
use nlc2d_core::flow::default_poisson_tol;
use nlc2d_core::grid::Advection;
use nlc2d_core::{Domain, Grid2D, ManifoldKind, ManifoldSpec, Scheme, SolverConfig, TestFunction};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("override `{0}` is not of the form section.key=value")]
    BadOverride(String),
    #[error("override `{key}`: {message}")]
    Override { key: String, message: String },
    #[error("invalid `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid { key, message: message.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Torus,
    Square,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    #[serde(rename = "type")]
    pub kind: DomainKind,
    pub nx: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifoldName {
    Sphere,
    Biaxial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldBlock {
    pub kind: ManifoldName,
    pub delta_n: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Gl,
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvectionName {
    Centered,
    Upwind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeBlock {
    pub variant: Variant,
    pub eps: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    pub poisson_tol: Option<f64>,
    #[serde(default = "default_poisson_max_iter")]
    pub poisson_max_iter: usize,
    #[serde(default = "default_advection")]
    pub advection: AdvectionName,
    #[serde(default)]
    pub freeze_velocity: bool,
}

fn default_cfl() -> f64 {
    0.5
}

fn default_poisson_max_iter() -> usize {
    10_000
}

fn default_advection() -> AdvectionName {
    AdvectionName::Centered
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectorName {
    Constant,
    Smooth,
    Tilted,
    Bubble,
    RotatingFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityName {
    Zero,
    TaylorGreen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    pub director: DirectorName,
    /// Point of the target for `constant`.
    pub value: Option<Vec<f64>>,
    /// Amplitude for `smooth`.
    pub amplitude: Option<f64>,
    /// Bubble centre, scale and stretch.
    pub center: Option<[f64; 2]>,
    pub scale: Option<f64>,
    pub stretch: Option<f64>,
    /// Winding number for `rotating-frame`.
    pub winding: Option<f64>,
    #[serde(default = "default_velocity")]
    pub velocity: VelocityName,
    pub velocity_amplitude: Option<f64>,
}

fn default_velocity() -> VelocityName {
    VelocityName::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionBlock {
    pub center: [f64; 2],
    pub inner: f64,
    pub outer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsBlock {
    /// Radius of the concentration balls.
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_delta0_sq")]
    pub delta0_sq: f64,
    /// Exponent of the Hopf norm.
    #[serde(default = "default_p")]
    pub p: f64,
    /// Ball for the Hopf norm; the whole domain when absent.
    pub ball_center: Option<[f64; 2]>,
    pub ball_radius: Option<f64>,
    pub test_function: Option<TestFunctionBlock>,
}

fn default_radius() -> f64 {
    0.1
}

fn default_delta0_sq() -> f64 {
    DEFAULT_DELTA0_SQ
}

fn default_p() -> f64 {
    1.5
}

impl Default for DiagnosticsBlock {
    fn default() -> Self {
        Self {
            radius: default_radius(),
            delta0_sq: default_delta0_sq(),
            p: default_p(),
            ball_center: None,
            ball_radius: None,
            test_function: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Steps between snapshots; 0 writes only the final state.
    #[serde(default)]
    pub snapshot_every: usize,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: default_directory(), snapshot_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// Strictly decreasing ε values.
    pub eps: Vec<f64>,
    /// Worker threads; 0 uses the available parallelism.
    #[serde(default)]
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainBlock,
    pub manifold: ManifoldBlock,
    pub scheme: SchemeBlock,
    pub initial: InitialBlock,
    #[serde(default)]
    pub diagnostics: DiagnosticsBlock,
    #[serde(default)]
    pub output: OutputBlock,
    pub sweep: Option<SweepBlock>,
}

/// Everything a run needs, built from a validated configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: Grid2D,
    pub manifold: ManifoldSpec,
    pub solver: SolverConfig,
    pub initial: InitialData,
}

impl RunConfig {
    /// Parse `text`, then apply `overrides` of the form `section.key=value`.
    /// Errors in the text carry its line and column.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if overrides.is_empty() {
            return Ok(cfg);
        }
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let keys = overrides.join(", ");
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Override { key: keys, message: e.message().to_string() })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::parse(&text, overrides)
    }

    /// Canonical TOML with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn manifold_spec(&self) -> Result<ManifoldSpec, ConfigError> {
        let kind = match self.manifold.kind {
            ManifoldName::Sphere => ManifoldKind::Sphere,
            ManifoldName::Biaxial => ManifoldKind::Biaxial,
        };
        ManifoldSpec::new(kind, self.manifold.delta_n.unwrap_or(kind.default_delta()))
            .map_err(|e| invalid("manifold.delta_n", e))
    }

    pub fn grid(&self) -> Result<Grid2D, ConfigError> {
        let domain = match self.domain.kind {
            DomainKind::Torus => Domain::PeriodicTorus,
            DomainKind::Square => Domain::DirichletSquare,
        };
        Grid2D::new(self.domain.nx, domain).map_err(|e| invalid("domain.nx", e))
    }

    fn scheme_for(&self, eps: Option<f64>) -> Result<Scheme, ConfigError> {
        match self.scheme.variant {
            Variant::Projected => Ok(Scheme::Projected),
            Variant::Gl => match eps {
                Some(eps) if eps > 0.0 && eps.is_finite() => Ok(Scheme::GinzburgLandau { eps }),
                Some(eps) => Err(invalid("scheme.eps", format!("{eps} is not positive"))),
                None => Err(invalid("scheme.eps", "required for the gl variant")),
            },
        }
    }

    fn solver_for(&self, grid: &Grid2D, scheme: Scheme) -> Result<SolverConfig, ConfigError> {
        let s = &self.scheme;
        if !(s.t_end >= 0.0 && s.t_end.is_finite()) {
            return Err(invalid("scheme.t_end", "must be a nonnegative number"));
        }
        let mut cfg = SolverConfig::for_grid(grid, scheme, s.t_end);
        cfg.cfl_safety = s.cfl_safety;
        cfg.dt = s.dt.unwrap_or_else(|| cfg.stable_dt(grid));
        cfg.poisson_tol = s.poisson_tol.unwrap_or(default_poisson_tol(grid.domain()));
        cfg.poisson_max_iter = s.poisson_max_iter;
        cfg.freeze_velocity = s.freeze_velocity;
        cfg.advection = match s.advection {
            AdvectionName::Centered => Advection::Centered,
            AdvectionName::Upwind => Advection::Upwind,
        };
        cfg.validate(grid).map_err(|e| invalid("scheme", e))?;
        Ok(cfg)
    }

    pub fn initial_data(&self) -> Result<InitialData, ConfigError> {
        let i = &self.initial;
        let need = |v: Option<f64>, key: &'static str| v.ok_or_else(|| invalid(key, "required by this generator"));
        let director = match i.director {
            DirectorName::Constant => DirectorInit::Constant(
                i.value.clone().ok_or_else(|| invalid("initial.value", "required by the constant generator"))?,
            ),
            DirectorName::Smooth => DirectorInit::Smooth { amplitude: i.amplitude.unwrap_or(0.5) },
            DirectorName::Tilted => DirectorInit::Tilted,
            DirectorName::Bubble => {
                let c = i.center.unwrap_or([0.5, 0.5]);
                let spec = BubbleSpec::new((c[0], c[1]), need(i.scale, "initial.scale")?)
                    .with_stretch(i.stretch.unwrap_or(1.0));
                spec.validate().map_err(|e| invalid("initial.scale", e))?;
                DirectorInit::Bubble(spec)
            }
            DirectorName::RotatingFrame => DirectorInit::RotatingFrame { winding: i.winding.unwrap_or(1.0) },
        };
        let velocity = match i.velocity {
            VelocityName::Zero => VelocityInit::Zero,
            VelocityName::TaylorGreen => VelocityInit::TaylorGreen { amplitude: i.velocity_amplitude.unwrap_or(1.0) },
        };
        Ok(InitialData { director, velocity })
    }

    pub fn test_function(&self) -> Option<TestFunction> {
        self.diagnostics.test_function.as_ref().map(|t| TestFunction {
            center: (t.center[0], t.center[1]),
            inner: t.inner,
            outer: t.outer,
        })
    }

    /// Validate every block and build the single-run objects.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let grid = self.grid()?;
        let manifold = self.manifold_spec()?;
        let solver = self.solver_for(&grid, self.scheme_for(self.scheme.eps)?)?;
        let initial = self.initial_data()?;
        initial.build(&grid, manifold).map_err(|e| invalid("initial", e))?;
        self.check_diagnostics()?;
        if let Some(sweep) = &self.sweep {
            self.sweep_plan_from(sweep)?;
        }
        Ok(Resolved { grid, manifold, solver, initial })
    }

    fn check_diagnostics(&self) -> Result<(), ConfigError> {
        let d = &self.diagnostics;
        if !(d.radius > 0.0) {
            return Err(invalid("diagnostics.radius", "must be positive"));
        }
        if !(d.delta0_sq > 0.0) {
            return Err(invalid("diagnostics.delta0_sq", "must be positive"));
        }
        if !(d.p >= 1.0) {
            return Err(invalid("diagnostics.p", "must be at least 1"));
        }
        if d.ball_center.is_some() != d.ball_radius.is_some() {
            return Err(invalid("diagnostics.ball_radius", "ball_center and ball_radius go together"));
        }
        if let Some(t) = &d.test_function {
            if !(t.inner > 0.0 && t.outer > t.inner) {
                return Err(invalid("diagnostics.test_function", "need 0 < inner < outer"));
            }
        }
        Ok(())
    }

    fn sweep_plan_from(&self, sweep: &SweepBlock) -> Result<SweepPlan, ConfigError> {
        if self.scheme.variant != Variant::Gl {
            return Err(invalid("sweep.eps", "sweeps need the gl variant"));
        }
        let plan = SweepPlan {
            eps: sweep.eps.clone(),
            n: self.domain.nx,
            domain: self.grid()?.domain(),
            manifold: self.manifold_spec()?,
            initial: self.initial_data()?,
            t_end: self.scheme.t_end,
            cfl_safety: self.scheme.cfl_safety,
            dt: self.scheme.dt,
            defects: self.test_function(),
        };
        plan.validate().map_err(|e| invalid("sweep", e))?;
        Ok(plan)
    }

    /// The ε-sweep described by the `[sweep]` block.
    pub fn sweep_plan(&self) -> Result<SweepPlan, ConfigError> {
        let sweep = self.sweep.as_ref().ok_or_else(|| invalid("sweep", "missing [sweep] block"))?;
        self.check_diagnostics()?;
        self.sweep_plan_from(sweep)
    }
}

fn apply_override(table: &mut toml::Table, raw: &str) -> Result<(), ConfigError> {
    let (path, value) = raw.split_once('=').ok_or_else(|| ConfigError::BadOverride(raw.to_string()))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.len() < 2 || keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::BadOverride(raw.to_string()));
    }
    let value = parse_value(value.trim());
    let mut node = table;
    for k in &keys[..keys.len() - 1] {
        let entry = node.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| ConfigError::Override {
            key: path.to_string(),
            message: format!("`{k}` is not a section"),
        })?;
    }
    node.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// A TOML value, or a bare string when the text is not valid TOML.
fn parse_value(text: &str) -> toml::Value {
    let doc = format!("v = {text}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(text.to_string()),
    }
}
