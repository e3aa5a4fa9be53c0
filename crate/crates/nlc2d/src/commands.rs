//! The subcommands, independent of argument parsing.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nlc2d_core::diagnostics::{diagnose as core_diagnose, DiagnoseOptions};
use nlc2d_core::experiments::{
    assemble_sweep, biaxial_demo, compactness_demo, l2_distance, run_member, simulate, InitialData, MemberReport,
    SweepPlan, VelocityInit,
};
use nlc2d_core::grid::Closure;
use nlc2d_core::{BoundaryData, Field, FlowSolver, Grid2D, Region, SolverError, TestFunction};

use crate::config::{ConfigError, RunConfig};
use crate::plot::{emit_plot_script, PlotKind};
use crate::report::{
    defect_rows, hopf_rows, BiaxialJson, BiaxialRunJson, CompactnessJson, CompareJson, DiagnosticsJson, SweepJson,
};
use crate::series::{write_energy_csv, write_rows, EnergyCsv};
use crate::snapshot::{read_snapshot, write_snapshot, Snapshot, SnapshotError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("numerical failure at step {step}: {source}")]
    Numerical { step: usize, source: SolverError },
    #[error("{0}")]
    Numerics(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("snapshot error: {0}")]
    Snapshot(#[from] SnapshotError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Numerical { .. } | CliError::Numerics(_) => 3,
            CliError::Io(_) | CliError::Csv(_) | CliError::Snapshot(_) => 1,
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<String, CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    std::fs::write(path, format!("{text}\n"))?;
    Ok(text)
}

/// Resolve the configuration and return its canonical form.
pub fn validate_config(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.resolve()?;
    Ok(cfg.to_toml())
}

/// Where a run wrote its outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutputs {
    pub energy_csv: PathBuf,
    pub final_snapshot: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub steps: usize,
}

/// Advance one simulation, writing `energy.csv`, snapshots at the configured
/// cadence, `final.snap`, the resolved `config.toml` and `energy.gp`.
pub fn run(cfg: &RunConfig) -> Result<RunOutputs, CliError> {
    let r = cfg.resolve()?;
    let dir = &cfg.output.directory;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let (state, bc) = r.initial.build(&r.grid, r.manifold).map_err(|e| CliError::Usage(e.to_string()))?;
    let solver = FlowSolver::new(r.grid, r.solver, bc).map_err(|e| CliError::Usage(e.to_string()))?;
    let energy_csv = dir.join("energy.csv");
    let mut csv = EnergyCsv::create(&energy_csv)?;
    let every = cfg.output.snapshot_every;
    if every > 0 {
        std::fs::create_dir_all(dir.join("snapshots"))?;
    }
    let mut snapshots = Vec::new();
    let mut failure: Option<CliError> = None;
    let traj = simulate(&solver, state, |n, s, row, _| {
        if failure.is_some() {
            return;
        }
        let mut go = || -> Result<(), CliError> {
            csv.push(row)?;
            if every > 0 && n % every == 0 {
                let path = dir.join("snapshots").join(format!("step_{n:06}.snap"));
                write_snapshot(&path, &Snapshot::new(r.grid, s.clone()))?;
                snapshots.push(path);
            }
            Ok(())
        };
        if let Err(e) = go() {
            failure = Some(e);
        }
        if n > 0 && n % 100 == 0 {
            log::info!("step {n}: t = {:.6e}, total = {:.6e}", s.t, row.energy.total());
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    emit_plot_script(PlotKind::Energy, &energy_csv, &dir.join("energy.gp"))?;
    let steps = traj.rows.len().saturating_sub(1);
    let end = traj.result.map_err(|source| CliError::Numerical { step: steps + 1, source })?;
    let final_snapshot = dir.join("final.snap");
    write_snapshot(&final_snapshot, &Snapshot::new(r.grid, end))?;
    Ok(RunOutputs { energy_csv, final_snapshot, snapshots, steps })
}

/// Outcome of a sweep: the JSON report text and whether any member failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutputs {
    pub report: String,
    pub failed_members: usize,
}

fn member_dir(i: usize, eps: f64) -> String {
    format!("member_{i:02}_eps_{eps}")
}

/// Run the members of `plan` on up to `threads` workers. Every member writes
/// to its own subdirectory of `dir`.
pub fn run_sweep_parallel(plan: &SweepPlan, dir: &Path, threads: usize) -> Result<SweepOutputs, CliError> {
    plan.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::create_dir_all(dir)?;
    let count = plan.eps.len();
    let workers = match threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        t => t,
    }
    .min(count)
    .max(1);
    let dirs: Vec<String> = plan.eps.iter().enumerate().map(|(i, &e)| member_dir(i, e)).collect();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<MemberReport, CliError>>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= count {
                    break;
                }
                let out = run_one_member(plan, i, &dir.join(&dirs[i]));
                slots.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    let mut members = Vec::with_capacity(count);
    for slot in slots.into_inner().expect("no worker panicked") {
        members.push(slot.expect("every member ran")?);
    }
    let failed_members = members.iter().filter(|m| m.failed()).count();
    let report = assemble_sweep(plan, members).map_err(|e| CliError::Numerics(e.to_string()))?;
    if let Some(d) = &report.defects {
        write_rows(&dir.join("defects.csv"), &defect_rows(d))?;
        emit_plot_script(PlotKind::Defects, &dir.join("defects.csv"), &dir.join("defects.gp"))?;
    }
    let text = write_json(&dir.join("sweep.json"), &SweepJson::new(&report, &dirs))?;
    Ok(SweepOutputs { report: text, failed_members })
}

fn run_one_member(plan: &SweepPlan, i: usize, dir: &Path) -> Result<MemberReport, CliError> {
    std::fs::create_dir_all(dir)?;
    let m = run_member(plan, i).map_err(|e| CliError::Usage(e.to_string()))?;
    write_energy_csv(&dir.join("energy.csv"), &m.rows)?;
    emit_plot_script(PlotKind::Energy, &dir.join("energy.csv"), &dir.join("energy.gp"))?;
    if let Some(s) = &m.final_state {
        write_snapshot(&dir.join("final.snap"), &Snapshot::new(plan.grid().expect("validated"), s.clone()))?;
    }
    if let Some(e) = &m.error {
        log::warn!("sweep member eps = {} failed: {e}", m.eps);
    }
    Ok(m)
}

pub fn sweep(cfg: &RunConfig) -> Result<SweepOutputs, CliError> {
    let plan = cfg.sweep_plan()?;
    let dir = &cfg.output.directory;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let threads = cfg.sweep.as_ref().map_or(0, |s| s.threads);
    run_sweep_parallel(&plan, dir, threads)
}

/// Diagnostics for a snapshot. On the square the wall trace is
/// extrapolated from the stored field.
pub fn diagnose_snapshot(snap: &Snapshot, eps: Option<f64>, opts: &crate::config::DiagnosticsBlock) -> Result<DiagnosticsJson, CliError> {
    let grid = snap.grid;
    let bc = (!grid.is_periodic()).then(|| BoundaryData::extrapolated(&grid, &snap.state.v));
    let ball = match (opts.ball_center, opts.ball_radius) {
        (Some(c), Some(r)) => Region::ball((c[0], c[1]), r),
        _ => Region::All,
    };
    let o = DiagnoseOptions { eps, radius: opts.radius, delta0_sq: opts.delta0_sq, p: opts.p, ball };
    let r = core_diagnose(&grid, &snap.state, bc.as_ref(), &o).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(DiagnosticsJson::new(&grid, snap.state.t, snap.state.v.spec.kind(), eps, &r))
}

pub fn diagnose(path: &Path, eps: Option<f64>, opts: &crate::config::DiagnosticsBlock) -> Result<String, CliError> {
    let snap = read_snapshot(path)?;
    let report = diagnose_snapshot(&snap, eps, opts)?;
    Ok(serde_json::to_string_pretty(&report).expect("reports serialize"))
}

fn h1_seminorm(grid: &Grid2D, a: &Field, b: &Field) -> f64 {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    (2.0 * grid.dirichlet_integral(&d, Closure::Neumann)).sqrt()
}

/// L² and H¹-seminorm distances between two snapshots on the same grid.
pub fn compare(a: &Snapshot, b: &Snapshot) -> Result<CompareJson, CliError> {
    if a.grid != b.grid || a.state.v.spec.ambient_dim() != b.state.v.spec.ambient_dim() {
        return Err(CliError::Usage(String::from("snapshots live on different grids or targets")));
    }
    let g = &a.grid;
    let (s, t) = (&a.state, &b.state);
    Ok(CompareJson {
        schema: "nlc2d.compare/1",
        t: [s.t, t.t],
        u_l2: l2_distance(g, &s.u, &t.u),
        u_h1_seminorm: h1_seminorm(g, &s.u, &t.u),
        v_l2: l2_distance(g, &s.v.values, &t.v.values),
        v_h1_seminorm: h1_seminorm(g, &s.v.values, &t.v.values),
        p_l2: l2_distance(g, &s.p, &t.p),
    })
}

/// Parameters of the compactness demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactnessArgs {
    pub nx: usize,
    pub eps: Vec<f64>,
    pub stretch: f64,
    pub phi: TestFunction,
    pub hopf_radius: f64,
    pub out: PathBuf,
}

pub fn demo_compactness(a: &CompactnessArgs) -> Result<String, CliError> {
    let grid = Grid2D::torus(a.nx).map_err(|e| CliError::Usage(e.to_string()))?;
    if a.eps.len() < 3 || a.eps.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(CliError::Usage(String::from("need at least three strictly decreasing scales")));
    }
    let rep = compactness_demo(&grid, &a.eps, &a.phi, a.stretch, a.hopf_radius)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::create_dir_all(&a.out)?;
    write_rows(&a.out.join("defects.csv"), &defect_rows(&rep.defects))?;
    write_rows(&a.out.join("hopf.csv"), &hopf_rows(&rep))?;
    emit_plot_script(PlotKind::Defects, &a.out.join("defects.csv"), &a.out.join("defects.gp"))?;
    emit_plot_script(PlotKind::Hopf, &a.out.join("hopf.csv"), &a.out.join("hopf.gp"))?;
    write_json(&a.out.join("compactness.json"), &CompactnessJson::new(&grid, a.stretch, &rep))
}

/// Parameters of the biaxial demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct BiaxialArgs {
    pub nx: usize,
    pub eps: f64,
    pub t_end: f64,
    pub winding: f64,
    pub cfl_safety: f64,
    pub out: PathBuf,
}

pub fn demo_biaxial(a: &BiaxialArgs) -> Result<String, CliError> {
    let grid = Grid2D::torus(a.nx).map_err(|e| CliError::Usage(e.to_string()))?;
    let init = InitialData {
        director: nlc2d_core::experiments::DirectorInit::RotatingFrame { winding: a.winding },
        velocity: VelocityInit::Zero,
    };
    let rep = biaxial_demo(&grid, &init, a.eps, a.t_end, a.cfl_safety).map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::create_dir_all(&a.out)?;
    write_energy_csv(&a.out.join("energy_projected.csv"), &rep.projected.rows)?;
    write_energy_csv(&a.out.join("energy_gl.csv"), &rep.ginzburg_landau.rows)?;
    emit_plot_script(PlotKind::Energy, &a.out.join("energy_projected.csv"), &a.out.join("energy_projected.gp"))?;
    emit_plot_script(PlotKind::Energy, &a.out.join("energy_gl.csv"), &a.out.join("energy_gl.gp"))?;
    let json = BiaxialJson {
        schema: "nlc2d.biaxial/1",
        projected: BiaxialRunJson::from(&rep.projected),
        ginzburg_landau: BiaxialRunJson::from(&rep.ginzburg_landau),
    };
    let text = write_json(&a.out.join("biaxial.json"), &json)?;
    if rep.projected.error.is_some() || rep.ginzburg_landau.error.is_some() {
        return Err(CliError::Numerics(format!("biaxial demo failed; partial report:\n{text}")));
    }
    Ok(text)
}

