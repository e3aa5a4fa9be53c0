//! JSON reports. Every report carries a `schema` tag; field meanings are
//! listed in the README.

use nlc2d_core::diagnostics::{ConcentrationReport, EnergyReport};
use nlc2d_core::experiments::{BiaxialRun, CompactnessReport, SweepReport};
use nlc2d_core::{DefectEstimate, DiagnosticsReport, Grid2D, Scheme};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyJson {
    pub kinetic: f64,
    pub dirichlet: f64,
    pub penalty: f64,
    pub total: f64,
    pub cumulative_dissipation: f64,
    pub e0: f64,
    pub lambda1: f64,
}

impl From<&EnergyReport> for EnergyJson {
    fn from(e: &EnergyReport) -> Self {
        Self {
            kinetic: e.kinetic,
            dirichlet: e.dirichlet,
            penalty: e.penalty,
            total: e.total(),
            cumulative_dissipation: e.cumulative_dissipation,
            e0: e.e0,
            lambda1: e.lambda1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedNode {
    pub node: usize,
    pub x: f64,
    pub y: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationJson {
    pub radius: f64,
    pub threshold: f64,
    pub flagged: Vec<FlaggedNode>,
}

impl ConcentrationJson {
    pub fn new(grid: &Grid2D, c: &ConcentrationReport) -> Self {
        let flagged = c
            .flagged
            .iter()
            .map(|&(node, energy)| {
                let (x, y) = grid.position(node);
                FlaggedNode { node, x, y, energy }
            })
            .collect();
        Self { radius: c.radius, threshold: c.threshold, flagged }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopfJson {
    pub p: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsJson {
    pub schema: &'static str,
    pub t: f64,
    pub nx: usize,
    pub domain: &'static str,
    pub manifold: &'static str,
    pub eps: Option<f64>,
    pub energy: EnergyJson,
    pub max_distance: f64,
    pub div_max: f64,
    pub hopf: HopfJson,
    pub concentration: ConcentrationJson,
    pub penalty_l1: f64,
    pub degree: Option<f64>,
}

pub fn domain_name(grid: &Grid2D) -> &'static str {
    if grid.is_periodic() {
        "torus"
    } else {
        "square"
    }
}

pub fn manifold_name(kind: nlc2d_core::ManifoldKind) -> &'static str {
    match kind {
        nlc2d_core::ManifoldKind::Sphere => "sphere",
        nlc2d_core::ManifoldKind::Biaxial => "biaxial",
    }
}

impl DiagnosticsJson {
    pub fn new(
        grid: &Grid2D,
        t: f64,
        kind: nlc2d_core::ManifoldKind,
        eps: Option<f64>,
        r: &DiagnosticsReport,
    ) -> Self {
        Self {
            schema: "nlc2d.diagnostics/1",
            t,
            nx: grid.n(),
            domain: domain_name(grid),
            manifold: manifold_name(kind),
            eps,
            energy: EnergyJson::from(&r.energy),
            max_distance: r.max_distance,
            div_max: r.div_max,
            hopf: HopfJson { p: r.hopf_p, norm: r.hopf_lp },
            concentration: ConcentrationJson::new(grid, &r.concentration),
            penalty_l1: r.penalty_l1,
            degree: r.degree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectsJson {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub gamma_raw: f64,
    pub center: [f64; 2],
    pub inner: f64,
    pub outer: f64,
    pub eps: Vec<f64>,
    /// Raw `[α, β, γ]` per member.
    pub members: Vec<[f64; 3]>,
}

impl From<&DefectEstimate> for DefectsJson {
    fn from(d: &DefectEstimate) -> Self {
        let phi = &d.test_function;
        Self {
            alpha: d.alpha,
            beta: d.beta,
            gamma: d.gamma,
            gamma_raw: d.gamma_raw,
            center: [phi.center.0, phi.center.1],
            inner: phi.inner,
            outer: phi.outer,
            eps: d.eps.clone(),
            members: d.members.clone(),
        }
    }
}

/// Rows of `defects.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DefectRow {
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

pub fn defect_rows(d: &DefectEstimate) -> Vec<DefectRow> {
    d.eps
        .iter()
        .zip(&d.members)
        .map(|(&eps, m)| DefectRow { eps, alpha: m[0], beta: m[1], gamma: m[2] })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberJson {
    pub eps: f64,
    pub directory: String,
    pub status: &'static str,
    pub error: Option<String>,
    pub steps: usize,
    pub final_energy: Option<EnergyJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepJson {
    pub schema: &'static str,
    pub members: Vec<MemberJson>,
    pub l2_differences: Vec<f64>,
    pub l2_ratios: Vec<f64>,
    pub l2_strictly_decreasing: bool,
    pub defects: Option<DefectsJson>,
}

impl SweepJson {
    pub fn new(r: &SweepReport, directories: &[String]) -> Self {
        let members = r
            .members
            .iter()
            .zip(directories)
            .map(|(m, dir)| MemberJson {
                eps: m.eps,
                directory: dir.clone(),
                status: if m.failed() { "failed" } else { "ok" },
                error: m.error.as_ref().map(|e| e.to_string()),
                steps: m.rows.len().saturating_sub(1),
                final_energy: m.rows.last().map(|r| EnergyJson::from(&r.energy)),
            })
            .collect();
        Self {
            schema: "nlc2d.sweep/1",
            members,
            l2_differences: r.l2_differences.values.clone(),
            l2_ratios: r.l2_differences.ratios(),
            l2_strictly_decreasing: r.l2_differences.holds,
            defects: r.defects.as_ref().map(DefectsJson::from),
        }
    }
}

/// Rows of `hopf.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HopfRow {
    pub scale: f64,
    pub hopf_norm: f64,
    pub gradient_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompactnessJson {
    pub schema: &'static str,
    pub nx: usize,
    pub stretch: f64,
    pub hopf_radius: f64,
    pub defects: DefectsJson,
    pub hopf: Vec<HopfRow>,
}

impl CompactnessJson {
    pub fn new(grid: &Grid2D, stretch: f64, r: &CompactnessReport) -> Self {
        Self {
            schema: "nlc2d.compactness/1",
            nx: grid.n(),
            stretch,
            hopf_radius: r.hopf_radius,
            defects: DefectsJson::from(&r.defects),
            hopf: hopf_rows(r),
        }
    }
}

pub fn hopf_rows(r: &CompactnessReport) -> Vec<HopfRow> {
    r.defects
        .eps
        .iter()
        .zip(r.hopf_norms.iter().zip(&r.gradient_mass))
        .map(|(&scale, (&hopf_norm, &gradient_mass))| HopfRow { scale, hopf_norm, gradient_mass })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiaxialRunJson {
    pub scheme: String,
    pub steps: usize,
    pub max_orthogonality: f64,
    pub max_norm_defect: f64,
    pub max_trace_free_stress: f64,
    pub penalty_bounded: bool,
    pub error: Option<String>,
    pub final_energy: Option<EnergyJson>,
}

impl From<&BiaxialRun> for BiaxialRunJson {
    fn from(r: &BiaxialRun) -> Self {
        Self {
            scheme: match r.scheme {
                Scheme::Projected => String::from("projected"),
                Scheme::GinzburgLandau { eps } => format!("gl(eps={eps})"),
            },
            steps: r.rows.len().saturating_sub(1),
            max_orthogonality: r.max_orthogonality,
            max_norm_defect: r.max_norm_defect,
            max_trace_free_stress: r.max_trace_free_stress,
            penalty_bounded: r.penalty_bounded,
            error: r.error.as_ref().map(|e| e.to_string()),
            final_energy: r.rows.last().map(|row| EnergyJson::from(&row.energy)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiaxialJson {
    pub schema: &'static str,
    pub projected: BiaxialRunJson,
    pub ginzburg_landau: BiaxialRunJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareJson {
    pub schema: &'static str,
    pub t: [f64; 2],
    pub u_l2: f64,
    pub u_h1_seminorm: f64,
    pub v_l2: f64,
    pub v_h1_seminorm: f64,
    pub p_l2: f64,
}
