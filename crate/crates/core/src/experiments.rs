//! Manufactured data and orchestration: bubbles, smooth initial data,
//! ε-sweeps, refinement studies and the canned demonstrations.

use crate::diagnostics::{
    defect_measures, hopf_differential, hopf_lp_norm, total_energy, DefectEstimate, DiagnosticsError, EnergyLedger,
    EnergyReport, TestFunction,
};
use crate::flow::{FlowSolver, Scheme, SolverConfig, SolverError, State, StepReport};
use crate::grid::{BoundaryData, DirectorField, Domain, Field, Grid2D, GridError, Region};
use crate::manifold::{ManifoldKind, ManifoldSpec};
use crate::prelude::*;
use core::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid bubble: {0}")]
    InvalidBubble(&'static str),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Degree-one bubble: inverse stereographic projection of
/// `w = (a (x₁ − c₁), x₂ − c₂)/λ`, rotated by `orientation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleSpec {
    pub center: (f64, f64),
    pub scale: f64,
    /// Rotation matrix applied to the target.
    pub orientation: [[f64; 3]; 3],
    /// Anisotropy `a ≥ 1`; `a = 1` is conformal.
    pub stretch: f64,
}

impl BubbleSpec {
    pub fn new(center: (f64, f64), scale: f64) -> Self {
        Self { center, scale, orientation: IDENTITY, stretch: 1.0 }
    }

    pub fn with_stretch(mut self, stretch: f64) -> Self {
        self.stretch = stretch;
        self
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(ExperimentError::InvalidBubble("scale must be positive"));
        }
        if !(self.stretch >= 1.0 && self.stretch.is_finite()) {
            return Err(ExperimentError::InvalidBubble("stretch must be at least 1"));
        }
        Ok(())
    }

    /// Whether the core is resolved by at least four grid spacings.
    pub fn is_resolved(&self, grid: &Grid2D) -> bool {
        self.scale >= 4.0 * grid.h()
    }

    /// Value at `(x, y)`.
    pub fn eval(&self, grid: &Grid2D, x: f64, y: f64, out: &mut [f64]) {
        let (dx, dy) = grid.displacement(self.center, (x, y));
        let w1 = self.stretch * dx / self.scale;
        let w2 = dy / self.scale;
        let r2 = w1 * w1 + w2 * w2;
        let d = 1.0 + r2;
        let s = [2.0 * w1 / d, 2.0 * w2 / d, (1.0 - r2) / d];
        for (i, o) in out.iter_mut().take(3).enumerate() {
            let row = self.orientation[i];
            *o = row[0] * s[0] + row[1] * s[1] + row[2] * s[2];
        }
        // exact unit length for every input
        let n = (out[0] * out[0] + out[1] * out[1] + out[2] * out[2]).sqrt();
        out[..3].iter_mut().for_each(|v| *v /= n);
    }
}

/// Sample a bubble on the grid. Logs a warning when the core is
/// under-resolved.
pub fn make_bubble(spec: &BubbleSpec, grid: &Grid2D) -> Result<DirectorField, ExperimentError> {
    spec.validate()?;
    if !spec.is_resolved(grid) {
        log::warn!("bubble scale {} is below 4h = {}; the core is under-resolved", spec.scale, 4.0 * grid.h());
    }
    Ok(DirectorField::from_fn(grid, ManifoldSpec::sphere(), |x, y, o| spec.eval(grid, x, y, o)))
}

/// `½∫_{B_R}|∇S|²` for the conformal bubble of scale `λ`, which is
/// `4π R²/(R² + λ²)`.
pub fn bubble_energy_in_ball(scale: f64, radius: f64) -> f64 {
    4.0 * PI * radius * radius / (radius * radius + scale * scale)
}

/// Named director generators.
#[derive(Debug, Clone, PartialEq)]
pub enum DirectorInit {
    /// The same point at every node (retracted onto the manifold).
    Constant(Vec<f64>),
    /// Sphere: `normalize(a sin 2πx, a sin 2πy, 1)`. Frames: rotating frame
    /// with angle `a sin 2πx sin 2πy`.
    Smooth { amplitude: f64 },
    /// Sphere: `θ = 0.6 + 0.5x`, `φ = y` in spherical angles. Frames:
    /// rotating frame with angle `0.6 + 0.5x + 0.3y`.
    Tilted,
    Bubble(BubbleSpec),
    /// Frames `n = (cos θ, sin θ, 0)`, `m = (−sin θ, cos θ, 0)` with
    /// `θ = 2π k x`.
    RotatingFrame { winding: f64 },
}

fn frame(theta: f64, out: &mut [f64]) {
    let (s, c) = theta.sin_cos();
    out[..6].copy_from_slice(&[c, s, 0.0, -s, c, 0.0]);
}

impl DirectorInit {
    pub fn eval(&self, grid: &Grid2D, spec: &ManifoldSpec, x: f64, y: f64, out: &mut [f64]) {
        let tp = 2.0 * PI;
        let sphere = spec.kind() == ManifoldKind::Sphere;
        match self {
            DirectorInit::Constant(c) => out.copy_from_slice(c),
            DirectorInit::Smooth { amplitude } if sphere => {
                let raw = [amplitude * (tp * x).sin(), amplitude * (tp * y).sin(), 1.0];
                out.copy_from_slice(&raw);
            }
            DirectorInit::Smooth { amplitude } => frame(amplitude * (tp * x).sin() * (tp * y).sin(), out),
            DirectorInit::Tilted if sphere => {
                let (th, ph) = (0.6 + 0.5 * x, y);
                out.copy_from_slice(&[th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
            }
            DirectorInit::Tilted => frame(0.6 + 0.5 * x + 0.3 * y, out),
            DirectorInit::Bubble(b) => b.eval(grid, x, y, out),
            DirectorInit::RotatingFrame { winding } => frame(tp * winding * x, out),
        }
        let dim = spec.ambient_dim();
        let mut tmp = [0.0; 6];
        spec.retract(&out[..dim], &mut tmp[..dim]);
        out[..dim].copy_from_slice(&tmp[..dim]);
    }

    fn check(&self, spec: &ManifoldSpec) -> Result<(), ExperimentError> {
        match self {
            DirectorInit::Constant(c) if c.len() != spec.ambient_dim() => Err(ExperimentError::InvalidPlan(
                alloc::format!("constant director needs {} components", spec.ambient_dim()),
            )),
            DirectorInit::Bubble(b) if spec.kind() != ManifoldKind::Sphere => {
                b.validate()?;
                Err(ExperimentError::InvalidPlan(String::from("bubbles need the sphere target")))
            }
            DirectorInit::Bubble(b) => b.validate(),
            DirectorInit::RotatingFrame { .. } if spec.kind() != ManifoldKind::Biaxial => {
                Err(ExperimentError::InvalidPlan(String::from("rotating frames need the biaxial target")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocityInit {
    Zero,
    /// `A (sin 2πx cos 2πy, −cos 2πx sin 2πy)`.
    TaylorGreen { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub director: DirectorInit,
    pub velocity: VelocityInit,
}

impl InitialData {
    /// Initial state and, on the square, boundary data sampled from the same
    /// generator.
    pub fn build(&self, grid: &Grid2D, spec: ManifoldSpec) -> Result<(State, Option<BoundaryData>), ExperimentError> {
        self.director.check(&spec)?;
        let v = DirectorField::from_fn(grid, spec, |x, y, o| self.director.eval(grid, &spec, x, y, o));
        let u = match self.velocity {
            VelocityInit::Zero => Field::zeros(grid, 2),
            VelocityInit::TaylorGreen { amplitude } => taylor_green(grid, amplitude),
        };
        let bc = (grid.domain() == Domain::DirichletSquare)
            .then(|| BoundaryData::from_fn(grid, &spec, |x, y, o| self.director.eval(grid, &spec, x, y, o)));
        Ok((State::new(grid, u, v)?, bc))
    }
}

pub fn taylor_green(grid: &Grid2D, amplitude: f64) -> Field {
    let tp = 2.0 * PI;
    Field::from_fn(grid, 2, |x, y, o| {
        o[0] = amplitude * (tp * x).sin() * (tp * y).cos();
        o[1] = -amplitude * (tp * x).cos() * (tp * y).sin();
    })
}

/// One row of the energy time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    pub energy: EnergyReport,
    pub div_max: f64,
    pub dist_max: f64,
}

impl EnergyRow {
    pub fn new(grid: &Grid2D, state: &State, energy: EnergyReport) -> Self {
        Self { t: state.t, energy, div_max: grid.divergence(&state.u).max_abs(), dist_max: state.v.max_distance() }
    }
}

/// Outcome of [`simulate`]: the rows recorded so far and the final state or
/// the error that stopped the run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rows: Vec<EnergyRow>,
    pub result: Result<State, SolverError>,
}

/// Run `solver` from `state` to its end time, recording an energy row after
/// preparation and after every step. `observe` sees every accepted state.
pub fn simulate(
    solver: &FlowSolver,
    mut state: State,
    mut observe: impl FnMut(usize, &State, &EnergyRow, Option<&StepReport>),
) -> Trajectory {
    let grid = *solver.grid();
    let eps = solver.config().scheme.eps();
    let bc = solver.boundary();
    if let Err(e) = solver.prepare(&mut state) {
        return Trajectory { rows: Vec::new(), result: Err(e) };
    }
    let mut ledger = EnergyLedger::new(total_energy(&grid, &state, eps, bc));
    let first = EnergyRow::new(&grid, &state, ledger.current());
    observe(0, &state, &first, None);
    let mut rows = vec![first];
    for n in 1..=solver.config().steps() {
        match solver.step(&state) {
            Ok((next, report)) => {
                state = next;
                let e = ledger.record(total_energy(&grid, &state, eps, bc), report.dissipation);
                let row = EnergyRow { div_max: report.div_max, ..EnergyRow::new(&grid, &state, e) };
                observe(n, &state, &row, Some(&report));
                rows.push(row);
            }
            Err(e) => return Trajectory { rows, result: Err(e) },
        }
    }
    Trajectory { rows, result: Ok(state) }
}

/// A family of runs differing only in `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    /// Strictly decreasing.
    pub eps: Vec<f64>,
    pub n: usize,
    pub domain: Domain,
    pub manifold: ManifoldSpec,
    pub initial: InitialData,
    pub t_end: f64,
    pub cfl_safety: f64,
    /// Common time step; defaults to the smallest admissible step over the
    /// family.
    pub dt: Option<f64>,
    /// Test function for defect measures.
    pub defects: Option<TestFunction>,
}

impl SweepPlan {
    pub fn grid(&self) -> Result<Grid2D, ExperimentError> {
        Ok(Grid2D::new(self.n, self.domain)?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let grid = self.grid()?;
        if self.eps.is_empty() {
            return Err(ExperimentError::InvalidPlan(String::from("at least one eps is required")));
        }
        if self.eps.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(ExperimentError::InvalidPlan(String::from("eps values must be strictly decreasing")));
        }
        if let Some(&e) = self.eps.iter().find(|&&e| grid.h() > e / 4.0) {
            return Err(ExperimentError::InvalidPlan(alloc::format!(
                "h = {} does not resolve eps = {e} (need h <= eps/4)",
                grid.h()
            )));
        }
        self.initial.director.check(&self.manifold)?;
        for i in 0..self.eps.len() {
            self.member_config(&grid, i).validate(&grid)?;
        }
        Ok(())
    }

    pub fn common_dt(&self, grid: &Grid2D) -> f64 {
        self.dt.unwrap_or_else(|| {
            self.eps
                .iter()
                .map(|&eps| SolverConfig::for_grid(grid, Scheme::GinzburgLandau { eps }, 0.0))
                .map(|c| SolverConfig { cfl_safety: self.cfl_safety, ..c }.stable_dt(grid))
                .fold(f64::INFINITY, f64::min)
        })
    }

    pub fn member_config(&self, grid: &Grid2D, index: usize) -> SolverConfig {
        let mut cfg = SolverConfig::for_grid(grid, Scheme::GinzburgLandau { eps: self.eps[index] }, self.t_end);
        cfg.cfl_safety = self.cfl_safety;
        cfg.dt = self.common_dt(grid);
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct MemberReport {
    pub eps: f64,
    pub rows: Vec<EnergyRow>,
    pub final_state: Option<State>,
    pub error: Option<SolverError>,
}

impl MemberReport {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Run one member of a validated plan.
pub fn run_member(plan: &SweepPlan, index: usize) -> Result<MemberReport, ExperimentError> {
    let grid = plan.grid()?;
    let (state, bc) = plan.initial.build(&grid, plan.manifold)?;
    let solver = FlowSolver::new(grid, plan.member_config(&grid, index), bc)?;
    let traj = simulate(&solver, state, |_, _, _, _| {});
    let (final_state, error) = match traj.result {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e)),
    };
    Ok(MemberReport { eps: plan.eps[index], rows: traj.rows, final_state, error })
}

/// A claimed monotone decrease together with the measured values.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCheck {
    pub values: Vec<f64>,
    pub holds: bool,
}

impl MonotoneCheck {
    pub fn decreasing(values: Vec<f64>) -> Self {
        let holds = values.windows(2).all(|w| w[1] < w[0]);
        Self { values, holds }
    }

    /// Successive ratios `values[i+1] / values[i]`.
    pub fn ratios(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub members: Vec<MemberReport>,
    /// `‖v^{εᵢ}(T) − v^{εᵢ₊₁}(T)‖_{L²}` over consecutive successful members.
    pub l2_differences: MonotoneCheck,
    pub defects: Option<DefectEstimate>,
}

/// L² distance between two fields on the same grid.
pub fn l2_distance(grid: &Grid2D, a: &Field, b: &Field) -> f64 {
    let d: Vec<f64> = a.iter_nodes().zip(b.iter_nodes()).map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum()).collect();
    grid.integrate(&d, Region::All).sqrt()
}

/// Combine member runs into the sweep report.
pub fn assemble_sweep(plan: &SweepPlan, members: Vec<MemberReport>) -> Result<SweepReport, ExperimentError> {
    let grid = plan.grid()?;
    let finals: Vec<(&DirectorField, f64)> =
        members.iter().filter_map(|m| m.final_state.as_ref().map(|s| (&s.v, m.eps))).collect();
    let diffs = finals.windows(2).map(|w| l2_distance(&grid, &w[0].0.values, &w[1].0.values)).collect();
    let defects = match &plan.defects {
        Some(phi) if !finals.is_empty() => {
            let (state0, _) = plan.initial.build(&grid, plan.manifold)?;
            let reference = &state0.v;
            if finals.len() >= 3 {
                let family: Vec<(DirectorField, f64)> = finals.iter().map(|(v, e)| ((*v).clone(), *e)).collect();
                Some(defect_measures(&grid, &family, phi, reference)?)
            } else {
                Some(unextrapolated_defects(&grid, &finals, phi, reference))
            }
        }
        _ => None,
    };
    Ok(SweepReport { members, l2_differences: MonotoneCheck::decreasing(diffs), defects })
}

/// Defects of a short family: the raw values of its last member.
fn unextrapolated_defects(
    grid: &Grid2D,
    finals: &[(&DirectorField, f64)],
    phi: &TestFunction,
    reference: &DirectorField,
) -> DefectEstimate {
    let weights = phi.sample(grid);
    let r = crate::diagnostics::weighted_moments(grid, reference, None, &weights);
    let members: Vec<[f64; 3]> = finals
        .iter()
        .map(|(v, e)| {
            let m = crate::diagnostics::weighted_moments(grid, v, Some(*e), &weights);
            [m[0] - r[0], m[1] - r[1], m[2] - r[2]]
        })
        .collect();
    let last = *members.last().expect("non-empty");
    DefectEstimate {
        alpha: last[0],
        beta: last[1],
        gamma: last[2].max(0.0),
        gamma_raw: last[2],
        test_function: *phi,
        eps: finals.iter().map(|f| f.1).collect(),
        members,
    }
}

/// Run every member in order and assemble the report. Members that fail are
/// recorded and the rest still run.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepReport, ExperimentError> {
    plan.validate()?;
    let mut members = Vec::with_capacity(plan.eps.len());
    for i in 0..plan.eps.len() {
        members.push(run_member(plan, i)?);
    }
    assemble_sweep(plan, members)
}

/// Self-convergence of the final director across grids `n, 2n, 4n, …` on the
/// torus, comparing coincident nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub n: Vec<usize>,
    /// Differences between consecutive grids.
    pub differences: Vec<f64>,
    /// `log₂` of consecutive difference ratios.
    pub orders: Vec<f64>,
}

/// Run the same smooth problem on nested torus grids with a common time step
/// and measure the observed order.
pub fn refinement_study(
    ns: &[usize],
    scheme: Scheme,
    manifold: ManifoldSpec,
    initial: &InitialData,
    t_end: f64,
    cfl_safety: f64,
) -> Result<RefinementReport, ExperimentError> {
    if ns.len() < 3 || ns.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(ExperimentError::InvalidPlan(String::from("refinement needs at least three nested grids")));
    }
    let finest = Grid2D::torus(*ns.last().expect("non-empty"))?;
    let dt = SolverConfig { cfl_safety, ..SolverConfig::for_grid(&finest, scheme, t_end) }.stable_dt(&finest);
    let mut finals = Vec::new();
    for &n in ns {
        let grid = Grid2D::torus(n)?;
        let (state, _) = initial.build(&grid, manifold)?;
        let mut cfg = SolverConfig::for_grid(&grid, scheme, t_end);
        cfg.cfl_safety = cfl_safety;
        cfg.dt = dt;
        let solver = FlowSolver::new(grid, cfg, None)?;
        let traj = simulate(&solver, state, |_, _, _, _| {});
        finals.push((grid, traj.result?));
    }
    let mut differences = Vec::new();
    for w in finals.windows(2) {
        let (coarse, fine) = (&w[0], &w[1]);
        let mut acc = Vec::with_capacity(coarse.0.nodes());
        for j in 0..coarse.0.n() {
            for i in 0..coarse.0.n() {
                let a = coarse.1.v.values.node(coarse.0.index(i, j));
                let b = fine.1.v.values.node(fine.0.index(2 * i, 2 * j));
                acc.push(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>());
            }
        }
        differences.push(coarse.0.integrate(&acc, Region::All).sqrt());
    }
    let orders = differences.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(RefinementReport { n: ns.to_vec(), differences, orders })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompactnessReport {
    pub defects: DefectEstimate,
    /// `‖H‖_{L^{3/2}(B_r)}` per member.
    pub hopf_norms: Vec<f64>,
    /// `∫_{B_r}|∇v|²` per member.
    pub gradient_mass: Vec<f64>,
    pub hopf_radius: f64,
}

/// Bubble family with scales `λ = ε` centred on the test function, reference
/// equal to the far-field value. Returns defect estimates together with the
/// Hopf norms and gradient mass on `B_{hopf_radius}`.
pub fn compactness_demo(
    grid: &Grid2D,
    eps: &[f64],
    phi: &TestFunction,
    stretch: f64,
    hopf_radius: f64,
) -> Result<CompactnessReport, ExperimentError> {
    let mut family = Vec::with_capacity(eps.len());
    let mut hopf_norms = Vec::with_capacity(eps.len());
    let mut gradient_mass = Vec::with_capacity(eps.len());
    let ball = Region::ball(phi.center, hopf_radius);
    for &e in eps {
        let spec = BubbleSpec::new(phi.center, e).with_stretch(stretch);
        let v = make_bubble(&spec, grid)?;
        let hopf = hopf_differential(grid, &v.values, None);
        hopf_norms.push(hopf_lp_norm(grid, &hopf, 1.5, ball)?);
        let dens = crate::diagnostics::energy_density(grid, &v, None);
        gradient_mass.push(2.0 * grid.integrate(&dens, ball));
        family.push((v, e));
    }
    let reference = DirectorField::constant(grid, ManifoldSpec::sphere(), &[0.0, 0.0, -1.0]);
    let defects = defect_measures(grid, &family, phi, &reference)?;
    Ok(CompactnessReport { defects, hopf_norms, gradient_mass, hopf_radius })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiaxialRun {
    pub scheme: Scheme,
    pub rows: Vec<EnergyRow>,
    /// Max over nodes and steps of `|n·m|`.
    pub max_orthogonality: f64,
    /// Max over nodes and steps of `||n| − 1|` and `||m| − 1|`.
    pub max_norm_defect: f64,
    /// Max over steps of `max |σ̊|`.
    pub max_trace_free_stress: f64,
    /// Whether the penalty stayed below the initial ledger bound.
    pub penalty_bounded: bool,
    pub error: Option<SolverError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiaxialReport {
    pub projected: BiaxialRun,
    pub ginzburg_landau: BiaxialRun,
}

fn frame_defects(v: &DirectorField) -> (f64, f64) {
    let mut orth: f64 = 0.0;
    let mut norm: f64 = 0.0;
    for y in v.values.iter_nodes() {
        let (n, m) = y.split_at(3);
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        orth = orth.max(d(n, m).abs());
        norm = norm.max((d(n, n).sqrt() - 1.0).abs()).max((d(m, m).sqrt() - 1.0).abs());
    }
    (orth, norm)
}

/// Run the rotating-frame problem with both schemes.
pub fn biaxial_demo(
    grid: &Grid2D,
    initial: &InitialData,
    eps: f64,
    t_end: f64,
    cfl_safety: f64,
) -> Result<BiaxialReport, ExperimentError> {
    let spec = ManifoldSpec::biaxial();
    let run = |scheme: Scheme| -> Result<BiaxialRun, ExperimentError> {
        let (state, bc) = initial.build(grid, spec)?;
        let mut cfg = SolverConfig::for_grid(grid, scheme, t_end);
        cfg.cfl_safety = cfl_safety;
        cfg.dt = cfg.stable_dt(grid);
        let solver = FlowSolver::new(*grid, cfg, bc)?;
        let mut orth: f64 = 0.0;
        let mut norm: f64 = 0.0;
        let mut stress: f64 = 0.0;
        let mut bounded = true;
        let traj = simulate(&solver, state, |_, s, row, _| {
            let (o, n) = frame_defects(&s.v);
            orth = orth.max(o);
            norm = norm.max(n);
            let st = crate::diagnostics::ericksen_stress(grid, &s.v.values);
            stress = st.trace_free.iter().fold(stress, |m, t| m.max(t[0].abs()).max(t[1].abs()));
            bounded &= row.energy.penalty <= row.energy.e0;
        });
        Ok(BiaxialRun {
            scheme,
            rows: traj.rows,
            max_orthogonality: orth,
            max_norm_defect: norm,
            max_trace_free_stress: stress,
            penalty_bounded: bounded,
            error: traj.result.err(),
        })
    };
    Ok(BiaxialReport { projected: run(Scheme::Projected)?, ginzburg_landau: run(Scheme::GinzburgLandau { eps })? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::degree_integral;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bubble_centre_maps_to_pole() {
        let grid = Grid2D::torus(32).unwrap();
        let spec = BubbleSpec::new((0.5, 0.5), 0.1);
        let mut out = [0.0; 3];
        spec.eval(&grid, 0.5, 0.5, &mut out);
        assert_eq!(out, [0.0, 0.0, 1.0]);
        let v = make_bubble(&spec, &grid).unwrap();
        for y in v.values.iter_nodes() {
            let n = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
            assert!((n - 1.0).abs() <= 1e-15);
        }
        assert!(make_bubble(&BubbleSpec::new((0.5, 0.5), 0.0), &grid).is_err());
        assert!(make_bubble(&BubbleSpec::new((0.5, 0.5), 0.1).with_stretch(0.5), &grid).is_err());
    }

    #[test]
    fn conformal_bubble_is_conformal() {
        let grid = Grid2D::torus(128).unwrap();
        let v = make_bubble(&BubbleSpec::new((0.5, 0.5), 0.1), &grid).unwrap();
        let (gx, gy) = grid.gradient(&v.values);
        let core = Region::ball((0.5, 0.5), 0.3);
        for k in (0..grid.nodes()).filter(|&k| grid.contains(core, k)) {
            let (a, b) = (gx.node(k), gy.node(k));
            let aa: f64 = a.iter().map(|x| x * x).sum();
            let bb: f64 = b.iter().map(|x| x * x).sum();
            let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            // second-order truncation relative to the local gradient scale 2/λ
            assert!((aa - bb).abs() + ab.abs() <= 0.1 * (aa + bb) + 1e-12);
        }
    }

    /// Resolved bubble: energy and degree on the ball of radius 10λ against
    /// the closed-form radial integral.
    #[test]
    fn bubble_energy_and_degree_in_ball() {
        let grid = Grid2D::torus(256).unwrap();
        let lambda = 0.04;
        let v = make_bubble(&BubbleSpec::new((0.5, 0.5), lambda), &grid).unwrap();
        let ball = Region::ball((0.5, 0.5), 10.0 * lambda);
        let dens = crate::diagnostics::energy_density(&grid, &v, None);
        let e = grid.integrate(&dens, ball);
        let oracle = bubble_energy_in_ball(lambda, 10.0 * lambda);
        assert!((e / oracle - 1.0).abs() <= 0.015, "energy {e} vs {oracle}");
        let deg = degree_integral(&grid, &v, ball).unwrap();
        assert!((deg - oracle / (4.0 * PI)).abs() <= 0.02, "degree {deg}");
    }

    #[test]
    fn single_member_constant_sweep_is_trivial() {
        let plan = SweepPlan {
            eps: vec![0.2],
            n: 32,
            domain: Domain::PeriodicTorus,
            manifold: ManifoldSpec::sphere(),
            initial: InitialData { director: DirectorInit::Constant(vec![0.0, 0.0, 1.0]), velocity: VelocityInit::Zero },
            t_end: 0.01,
            cfl_safety: 0.5,
            dt: None,
            defects: Some(TestFunction { center: (0.5, 0.5), inner: 0.1, outer: 0.3 }),
        };
        let rep = run_sweep(&plan).unwrap();
        assert_eq!(rep.members.len(), 1);
        assert!(!rep.members[0].failed());
        let d = rep.defects.unwrap();
        assert_eq!((d.alpha, d.beta, d.gamma), (0.0, 0.0, 0.0));
        assert!(rep.l2_differences.values.is_empty());
    }

    #[test]
    fn plan_validation() {
        let mut plan = SweepPlan {
            eps: vec![0.2, 0.1, 0.05],
            n: 32,
            domain: Domain::PeriodicTorus,
            manifold: ManifoldSpec::sphere(),
            initial: InitialData { director: DirectorInit::Smooth { amplitude: 0.5 }, velocity: VelocityInit::Zero },
            t_end: 0.01,
            cfl_safety: 0.5,
            dt: None,
            defects: None,
        };
        // h = 1/32 > 0.05/4
        assert!(matches!(plan.validate(), Err(ExperimentError::InvalidPlan(_))));
        plan.n = 128;
        assert!(plan.validate().is_ok());
        assert_abs_diff_eq!(plan.common_dt(&plan.grid().unwrap()), 0.5 * 0.0025 / 4.0);
        plan.eps = vec![0.1, 0.2];
        assert!(plan.validate().is_err());
    }

    #[test]
    fn empty_support_test_function_sees_no_defect() {
        let grid = Grid2D::torus(128).unwrap();
        let phi = TestFunction { center: (0.5, 0.5), inner: 0.05, outer: 0.1 };
        let far = TestFunction { center: (0.0, 0.0), ..phi };
        let mut family = Vec::new();
        for e in [0.04, 0.02, 0.01] {
            family.push((make_bubble(&BubbleSpec::new((0.5, 0.5), e), &grid).unwrap(), e));
        }
        let reference = DirectorField::constant(&grid, ManifoldSpec::sphere(), &[0.0, 0.0, -1.0]);
        let d = defect_measures(&grid, &family, &far, &reference).unwrap();
        assert!(d.alpha.abs() + d.beta.abs() + d.gamma <= 1e-2);
        let near = defect_measures(&grid, &family, &phi, &reference).unwrap();
        assert!(near.gamma > 5.0);
    }

    #[test]
    fn stretch_produces_trace_free_signal() {
        let grid = Grid2D::torus(128).unwrap();
        let phi = TestFunction { center: (0.5, 0.5), inner: 0.2, outer: 0.35 };
        let eps = [0.08, 0.06, 0.04];
        let round = compactness_demo(&grid, &eps, &phi, 1.0, 0.25).unwrap();
        let oval = compactness_demo(&grid, &eps, &phi, 2.0, 0.25).unwrap();
        let a1 = round.defects.members[0][0].abs();
        let a2 = oval.defects.members[0][0].abs();
        assert!(a2 > 10.0 * a1, "{a2} vs {a1}");
    }

    #[test]
    fn rotating_frame_projected_keeps_constraint() {
        let grid = Grid2D::torus(16).unwrap();
        let init = InitialData { director: DirectorInit::RotatingFrame { winding: 1.0 }, velocity: VelocityInit::Zero };
        let rep = biaxial_demo(&grid, &init, 0.1, 0.002, 0.5).unwrap();
        assert!(rep.projected.error.is_none());
        assert!(rep.projected.max_orthogonality <= 1e-12);
        assert!(rep.projected.max_norm_defect <= 1e-12);
        assert!(rep.ginzburg_landau.error.is_none());
        assert!(rep.ginzburg_landau.penalty_bounded);
    }

    #[test]
    fn constant_frame_is_stationary() {
        let grid = Grid2D::torus(16).unwrap();
        let init = InitialData {
            director: DirectorInit::Constant(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            velocity: VelocityInit::Zero,
        };
        let rep = biaxial_demo(&grid, &init, 0.1, 0.001, 0.5).unwrap();
        for run in [&rep.projected, &rep.ginzburg_landau] {
            let last = run.rows.last().unwrap();
            assert!(last.energy.total() <= 1e-20);
        }
    }
}
