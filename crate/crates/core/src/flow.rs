//! Time stepping for the coupled director/velocity system, pressure solves and
//! the stationary Ginzburg-Landau solver.
//!
//! One step advances `(u, v)` as follows (`L` is the five-point Laplacian, `D`
//! the discrete divergence, `S` a stabilisation constant):
//!
//! 1. Director, iterated to a fixed point in the transport velocity `ũ`
//!    (starting from `ũ = uⁿ`):
//!    `(1/dt + S − ½L) w = L vⁿ − f'(vⁿ) − ũ·∇vⁿ`, `vⁿ⁺¹ = vⁿ + w`
//!    (retracted onto the manifold for [`Scheme::Projected`]), then
//!    `G = (vⁿ⁺¹ − vⁿ)/dt + ũ·∇vⁿ` and `ũ = uⁿ − dt (∇vⁿ)ᵀ G`.
//! 2. Momentum by Crank-Nicolson with skew-symmetric transport:
//!    `(u* − ũ)/dt = L ū − B(uⁿ, ū)`, `ū = (u* + ũ)/2`.
//! 3. Projection `uⁿ⁺¹ = u* − Dᵀλ` with `D Dᵀ λ = D u*`, pressure `p = −λ/dt`.
//!
//! On the torus this satisfies the discrete energy law
//! `E(tₙ₊₁) + dt (‖∇ū‖² + ‖G‖²) ≤ E(tₙ)` for the Ginzburg-Landau scheme.

use crate::grid::{Advection, BoundaryData, Closure, DirectorField, Domain, Field, Grid2D, GridError};
use crate::linsolve::{dot, pcg, Stop};
use crate::manifold::{CutoffProfile, ManifoldError, ManifoldSpec};
use crate::prelude::*;
#[cfg(feature = "std")]
use crate::spectral::Spectral2D;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("time step violates the advective limit: courant number {courant:.3e} exceeds {limit:.3e}")]
    CflViolation { courant: f64, limit: f64 },
    #[error("pressure solve did not reach tolerance after {iterations} iterations (residual {residual:.3e})")]
    PoissonDiverged { iterations: usize, residual: f64 },
    #[error("non-finite values in {field} at t = {t}")]
    NumericalBlowup { field: &'static str, t: f64 },
    #[error("{stage} fixed point did not converge after {iterations} iterations (change {change:.3e})")]
    CouplingDiverged { stage: &'static str, iterations: usize, change: f64 },
    #[error("stationary solve stopped at residual {residual:.3e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize, best: Box<DirectorField> },
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Relaxed system with penalty `(1/ε²) χ(dist²(v, N))`.
    GinzburgLandau { eps: f64 },
    /// Constrained system; the director is retracted onto `N` every step.
    Projected,
}

impl Scheme {
    pub fn eps(&self) -> Option<f64> {
        match *self {
            Scheme::GinzburgLandau { eps } => Some(eps),
            Scheme::Projected => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    /// Max-norm bound on `D u` after each projection.
    pub poisson_tol: f64,
    pub poisson_max_iter: usize,
    pub advection: Advection,
    /// Relative change at which the per-step fixed points are accepted.
    pub coupling_tol: f64,
    pub coupling_max_iter: usize,
    /// Keep `u` fixed and skip the momentum update.
    pub freeze_velocity: bool,
}

impl SolverConfig {
    /// Default tolerances for `grid`, with the largest admissible time step.
    pub fn for_grid(grid: &Grid2D, scheme: Scheme, t_end: f64) -> Self {
        let mut cfg = Self {
            scheme,
            dt: 0.0,
            t_end,
            cfl_safety: 0.5,
            poisson_tol: default_poisson_tol(grid.domain()),
            poisson_max_iter: 20_000,
            advection: Advection::Centered,
            coupling_tol: 1e-12,
            coupling_max_iter: 60,
            freeze_velocity: false,
        };
        cfg.dt = cfg.stable_dt(grid);
        cfg
    }

    /// Largest time step allowed by the diffusion or penalty bound.
    pub fn stable_dt(&self, grid: &Grid2D) -> f64 {
        match self.scheme {
            Scheme::GinzburgLandau { eps } => self.cfl_safety * eps * eps / 4.0,
            Scheme::Projected => self.cfl_safety * grid.h() * grid.h() / 4.0,
        }
    }

    pub fn steps(&self) -> usize {
        if self.t_end <= 0.0 {
            0
        } else {
            (self.t_end / self.dt - 1e-9).ceil() as usize
        }
    }

    pub fn validate(&self, grid: &Grid2D) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(String::from(m)));
        if let Scheme::GinzburgLandau { eps } = self.scheme {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad("eps must be positive");
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be non-negative");
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety must lie in (0, 1]");
        }
        if !(self.poisson_tol > 0.0) || self.poisson_max_iter == 0 {
            return bad("poisson_tol and poisson_max_iter must be positive");
        }
        if !(self.coupling_tol > 0.0) || self.coupling_max_iter == 0 {
            return bad("coupling_tol and coupling_max_iter must be positive");
        }
        let limit = self.stable_dt(grid);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(SolverError::InvalidConfig(alloc::format!(
                "dt = {:e} exceeds the stability bound {:e}",
                self.dt, limit
            )));
        }
        Ok(())
    }
}

pub fn default_poisson_tol(domain: Domain) -> f64 {
    match domain {
        Domain::PeriodicTorus => 1e-10,
        Domain::DirichletSquare => 1e-8,
    }
}

/// One time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub v: DirectorField,
    pub p: Field,
}

impl State {
    pub fn new(grid: &Grid2D, u: Field, v: DirectorField) -> Result<Self, GridError> {
        if u.comps() != 2 {
            return Err(GridError::ComponentMismatch { expected: 2, got: u.comps() });
        }
        for nodes in [u.nodes(), v.values.nodes()] {
            if nodes != grid.nodes() {
                return Err(GridError::ShapeMismatch { expected: grid.nodes(), got: nodes });
            }
        }
        Ok(Self { t: 0.0, u, v, p: Field::zeros(grid, 1) })
    }

    /// Zero velocity with the given director.
    pub fn at_rest(grid: &Grid2D, v: DirectorField) -> Self {
        Self { t: 0.0, u: Field::zeros(grid, 2), v, p: Field::zeros(grid, 1) }
    }
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// `dt (∫|∇ū|² + ∫|G|²)` for this step.
    pub dissipation: f64,
    pub div_max: f64,
    pub director_iterations: usize,
    pub momentum_iterations: usize,
    pub poisson_iterations: usize,
}

/// Linear solves shared by the stepper and the stationary solver.
#[derive(Debug)]
struct Solves {
    grid: Grid2D,
    #[cfg(feature = "std")]
    spectral: Option<Spectral2D>,
}

impl Solves {
    fn new(grid: Grid2D) -> Self {
        Self {
            grid,
            #[cfg(feature = "std")]
            spectral: grid.is_periodic().then(|| Spectral2D::new(grid.n())),
        }
    }

    /// `sin²(π k / n)` for each wavenumber.
    #[cfg(feature = "std")]
    fn sin2(&self, stretch: f64) -> Vec<f64> {
        let n = self.grid.n();
        (0..n)
            .map(|k| {
                let s = (stretch * core::f64::consts::PI * k as f64 / n as f64).sin();
                s * s
            })
            .collect()
    }

    /// Solve `(a − b L) w = rhs` with homogeneous closure, componentwise.
    fn helmholtz(&self, a: f64, b: f64, rhs: &Field) -> Result<Field, SolverError> {
        let mut out = Field::zeros(&self.grid, rhs.comps());
        #[cfg(feature = "std")]
        if let Some(sp) = &self.spectral {
            let s = self.sin2(1.0);
            let c = 4.0 / (self.grid.h() * self.grid.h());
            sp.solve(rhs.as_slice(), rhs.comps(), out.as_mut_slice(), |k, l| a + b * c * (s[k] + s[l]));
            return Ok(out);
        }
        let grid = self.grid;
        let comps = rhs.comps();
        let mut tmp = Field::zeros(&grid, comps);
        let rep = pcg(
            |x, y| {
                let xf = Field::from_vec(&grid, comps, x.to_vec()).expect("shape");
                grid.laplacian_into(&xf, Closure::Zero, &mut tmp);
                for ((yi, xi), li) in y.iter_mut().zip(x).zip(tmp.as_slice()) {
                    *yi = a * xi - b * li;
                }
            },
            |i| 1.0 / (a - b * grid.laplacian_diagonal(i / comps, Closure::Zero)),
            rhs.as_slice(),
            out.as_mut_slice(),
            Stop::Relative(1e-13),
            10_000,
        );
        if !rep.converged && rep.residual > 1e-10 * rhs.max_abs().max(1e-300) {
            return Err(SolverError::PoissonDiverged { iterations: rep.iterations, residual: rep.residual });
        }
        Ok(out)
    }

    /// Solve `D Dᵀ λ = s` to max-norm residual `tol`. Returns `λ` and the
    /// iteration count.
    fn div_grad(&self, s: &Field, tol: f64, max_iter: usize) -> Result<(Field, usize), SolverError> {
        let mut out = Field::zeros(&self.grid, 1);
        #[cfg(feature = "std")]
        if let Some(sp) = &self.spectral {
            let q = self.sin2(2.0);
            let ih2 = 1.0 / (self.grid.h() * self.grid.h());
            let n = self.grid.n();
            // D annihilates the modes with 2k ≡ 2l ≡ 0 (mod n)
            let null = |k: usize| (2 * k) % n == 0;
            sp.solve(s.as_slice(), 1, out.as_mut_slice(), |k, l| {
                if null(k) && null(l) {
                    0.0
                } else {
                    ih2 * (q[k] + q[l])
                }
            });
            return Ok((out, 0));
        }
        let grid = self.grid;
        let ih2 = 1.0 / (grid.h() * grid.h());
        let rep = pcg(
            |x, y| {
                let xf = Field::from_vec(&grid, 1, x.to_vec()).expect("shape");
                let r = grid.divergence(&grid.divergence_transpose(&xf));
                y.copy_from_slice(r.as_slice());
            },
            |_| 2.0 / ih2,
            s.as_slice(),
            out.as_mut_slice(),
            Stop::MaxAbs(0.5 * tol),
            max_iter,
        );
        if !rep.converged {
            return Err(SolverError::PoissonDiverged { iterations: rep.iterations, residual: rep.residual });
        }
        Ok((out, rep.iterations))
    }

    /// Solve `L p = rhs` (Neumann closure on the square), zero-mean result.
    fn poisson(&self, rhs: &Field, tol: f64, max_iter: usize) -> Result<Field, SolverError> {
        let grid = self.grid;
        let mean = rhs.mean()[0];
        let mut r = rhs.clone();
        r.as_mut_slice().iter_mut().for_each(|v| *v = mean - *v);
        let mut out = Field::zeros(&grid, 1);
        #[cfg(feature = "std")]
        if let Some(sp) = &self.spectral {
            let s = self.sin2(1.0);
            let c = 4.0 / (grid.h() * grid.h());
            sp.solve(r.as_slice(), 1, out.as_mut_slice(), |k, l| c * (s[k] + s[l]));
            return Ok(out);
        }
        let rep = pcg(
            |x, y| {
                let xf = Field::from_vec(&grid, 1, x.to_vec()).expect("shape");
                let l = grid.laplacian(&xf, Closure::Neumann);
                for (yi, li) in y.iter_mut().zip(l.as_slice()) {
                    *yi = -li;
                }
            },
            |i| -1.0 / grid.laplacian_diagonal(i, Closure::Neumann),
            r.as_slice(),
            out.as_mut_slice(),
            Stop::MaxAbs(tol),
            max_iter,
        );
        if !rep.converged {
            return Err(SolverError::PoissonDiverged { iterations: rep.iterations, residual: rep.residual });
        }
        let m = out.mean()[0];
        out.as_mut_slice().iter_mut().for_each(|v| *v -= m);
        Ok(out)
    }
}

/// Solve `L p = rhs` for the five-point Laplacian: spectrally on the torus,
/// by conjugate gradients with a zero-flux closure on the square. The mean of
/// `rhs` is removed first and the result has zero mean.
pub fn pressure_poisson(rhs: &Field, grid: &Grid2D, tol: f64, max_iter: usize) -> Result<Field, SolverError> {
    Solves::new(*grid).poisson(rhs, tol, max_iter)
}

/// Coupled time stepper for one simulation.
#[derive(Debug)]
pub struct FlowSolver {
    grid: Grid2D,
    cfg: SolverConfig,
    bc: Option<BoundaryData>,
    solves: Solves,
}

impl FlowSolver {
    /// Stabilisation of the explicit penalty, half the largest normal
    /// curvature of `(1/ε²) χ(dist²)`.
    pub fn stabilization(eps: f64) -> f64 {
        0.5 * CutoffProfile::MAX_NORMAL_CURVATURE / (eps * eps)
    }

    pub fn new(grid: Grid2D, cfg: SolverConfig, bc: Option<BoundaryData>) -> Result<Self, SolverError> {
        cfg.validate(&grid)?;
        if grid.domain() == Domain::DirichletSquare && bc.is_none() {
            return Err(SolverError::InvalidConfig(String::from("the square domain needs boundary data")));
        }
        Ok(Self { grid, cfg, bc, solves: Solves::new(grid) })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn boundary(&self) -> Option<&BoundaryData> {
        self.bc.as_ref()
    }

    fn director_closure(&self) -> Closure<'_> {
        match &self.bc {
            Some(bc) if !self.grid.is_periodic() => Closure::Wall(&bc.v),
            _ => Closure::Zero,
        }
    }

    /// Make an initial state admissible: project the velocity onto
    /// divergence-free fields and, for the projected scheme, put the director
    /// on the manifold.
    pub fn prepare(&self, state: &mut State) -> Result<(), SolverError> {
        if self.cfg.scheme == Scheme::Projected {
            state.v.project_all()?;
        }
        if !self.cfg.freeze_velocity {
            let div = self.grid.divergence(&state.u);
            let (lambda, _) = self.solves.div_grad(&div, self.cfg.poisson_tol, self.cfg.poisson_max_iter)?;
            state.u.axpy(-1.0, &self.grid.divergence_transpose(&lambda));
        }
        Ok(())
    }

    /// Solve `(I + dt Aᵀ(I − K/dt)A) x = r` where `A u = u·∇v`,
    /// `K = (a − ½L)⁻¹` and `∇v = (gx, gy)`.
    fn coupling_solve(&self, gx: &Field, gy: &Field, a: f64, dt: f64, r: &Field) -> Result<Field, SolverError> {
        let grid = self.grid;
        let dim = gx.comps();
        let mut failure = None;
        let mut x = Field::zeros(&grid, 2);
        pcg(
            |xs, ys| {
                let mut t = Field::zeros(&grid, dim);
                for k in 0..grid.nodes() {
                    let (ax, ay) = (gx.node(k), gy.node(k));
                    for (q, o) in t.node_mut(k).iter_mut().enumerate() {
                        *o = xs[2 * k] * ax[q] + xs[2 * k + 1] * ay[q];
                    }
                }
                let kt = match self.solves.helmholtz(a, 0.5, &t) {
                    Ok(f) => f,
                    Err(e) => {
                        failure = Some(e);
                        Field::zeros(&grid, dim)
                    }
                };
                t.axpy(-1.0 / dt, &kt);
                for k in 0..grid.nodes() {
                    let (ax, ay, tk) = (gx.node(k), gy.node(k), t.node(k));
                    ys[2 * k] = xs[2 * k] + dt * dot(ax, tk);
                    ys[2 * k + 1] = xs[2 * k + 1] + dt * dot(ay, tk);
                }
            },
            |i| {
                let g = if i % 2 == 0 { gx.node(i / 2) } else { gy.node(i / 2) };
                1.0 / (1.0 + dt * dot(g, g))
            },
            r.as_slice(),
            x.as_mut_slice(),
            Stop::Relative(1e-8),
            500,
        );
        match failure {
            Some(e) => Err(e),
            None => Ok(x),
        }
    }

    /// Advance one step of size `cfg.dt`.
    pub fn step(&self, state: &State) -> Result<(State, StepReport), SolverError> {
        let grid = &self.grid;
        let cfg = &self.cfg;
        let dt = cfg.dt;
        let h = grid.h();
        let spec = state.v.spec;
        let dim = spec.ambient_dim();
        let nodes = grid.nodes();

        let courant = dt * max_speed(&state.u) / h;
        if courant > cfg.cfl_safety {
            return Err(SolverError::CflViolation { courant, limit: cfg.cfl_safety });
        }

        let v0 = &state.v.values;
        let (gx, gy) = grid.gradient(v0);
        let mut base = grid.laplacian(v0, self.director_closure());
        let stab = match cfg.scheme {
            Scheme::GinzburgLandau { eps } => {
                let mut pen = [0.0; 6];
                for k in 0..nodes {
                    spec.penalty_gradient(v0.node(k), eps, &mut pen[..dim]);
                    for (b, p) in base.node_mut(k).iter_mut().zip(&pen[..dim]) {
                        *b -= p;
                    }
                }
                Self::stabilization(eps)
            }
            Scheme::Projected => 0.0,
        };
        let transport_of = |u: &Field| -> Field {
            if cfg.advection == Advection::Upwind {
                return grid.advect(u, v0, Advection::Upwind);
            }
            let mut t = Field::zeros(grid, dim);
            for k in 0..nodes {
                let (ux, uy) = (u.node(k)[0], u.node(k)[1]);
                let (ax, ay) = (gx.node(k), gy.node(k));
                for (q, o) in t.node_mut(k).iter_mut().enumerate() {
                    *o = ux * ax[q] + uy * ay[q];
                }
            }
            t
        };

        // director step and the transport velocity it induces
        let mut u_tilde = state.u.clone();
        let mut director_iterations = 0;
        let (v_new, g) = loop {
            director_iterations += 1;
            let transport = transport_of(&u_tilde);
            let mut rhs = base.clone();
            rhs.axpy(-1.0, &transport);
            let w = self.solves.helmholtz(1.0 / dt + stab, 0.5, &rhs)?;
            let mut v_new = v0.clone();
            v_new.axpy(1.0, &w);
            if cfg.scheme == Scheme::Projected {
                let mut tmp = [0.0; 6];
                for k in 0..nodes {
                    let v = v_new.node_mut(k);
                    spec.retract(v, &mut tmp[..dim]);
                    v.copy_from_slice(&tmp[..dim]);
                }
            }
            let mut g = v_new.clone();
            g.axpy(-1.0, v0);
            g.scale(1.0 / dt);
            g.axpy(1.0, &transport);
            if cfg.freeze_velocity {
                break (v_new, g);
            }
            let mut next = state.u.clone();
            for k in 0..nodes {
                let (ax, ay, gk) = (gx.node(k), gy.node(k), g.node(k));
                let fx: f64 = ax.iter().zip(gk).map(|(a, b)| a * b).sum();
                let fy: f64 = ay.iter().zip(gk).map(|(a, b)| a * b).sum();
                let o = next.node_mut(k);
                o[0] -= dt * fx;
                o[1] -= dt * fy;
            }
            let change = next.max_abs_diff(&u_tilde);
            let scale = 1.0 + next.max_abs();
            if !change.is_finite() {
                return Err(SolverError::NumericalBlowup { field: "u", t: state.t + dt });
            }
            if change <= cfg.coupling_tol * scale {
                u_tilde = next;
                break (v_new, g);
            }
            if director_iterations >= cfg.coupling_max_iter {
                return Err(SolverError::CouplingDiverged { stage: "director", iterations: director_iterations, change });
            }
            // Newton-like update with the linearised coupling operator
            let mut r = next;
            r.axpy(-1.0, &u_tilde);
            u_tilde.axpy(1.0, &self.coupling_solve(&gx, &gy, 1.0 / dt + stab, dt, &r)?);
        };

        let mut report = StepReport { director_iterations, ..Default::default() };
        let area = h * h;
        let g_sq: f64 = g.as_slice().iter().map(|x| x * x).sum::<f64>() * area;

        let (u_new, p_new, grad_sq) = if cfg.freeze_velocity {
            (state.u.clone(), state.p.clone(), 0.0)
        } else {
            // Crank-Nicolson momentum with skew transport by uⁿ
            let a = 1.0 / dt;
            let lap_t = grid.laplacian(&u_tilde, Closure::Zero);
            let mut rhs0 = u_tilde.clone();
            rhs0.scale(a);
            rhs0.axpy(0.5, &lap_t);
            let moving = state.u.max_abs() > 0.0;
            if moving {
                rhs0.axpy(-0.5, &grid.skew_advect(&state.u, &u_tilde));
            }
            let mut u_star = u_tilde.clone();
            let mut momentum_iterations = 0;
            loop {
                momentum_iterations += 1;
                let mut rhs = rhs0.clone();
                if moving {
                    rhs.axpy(-0.5, &grid.skew_advect(&state.u, &u_star));
                }
                let next = self.solves.helmholtz(a, 0.5, &rhs)?;
                let change = next.max_abs_diff(&u_star);
                let scale = 1.0 + next.max_abs();
                u_star = next;
                if !change.is_finite() {
                    return Err(SolverError::NumericalBlowup { field: "u", t: state.t + dt });
                }
                if !moving || change <= cfg.coupling_tol * scale {
                    break;
                }
                if momentum_iterations >= cfg.coupling_max_iter {
                    return Err(SolverError::CouplingDiverged {
                        stage: "momentum",
                        iterations: momentum_iterations,
                        change,
                    });
                }
            }
            report.momentum_iterations = momentum_iterations;

            let mut u_bar = u_star.clone();
            u_bar.axpy(1.0, &u_tilde);
            u_bar.scale(0.5);
            let grad_sq = 2.0 * grid.dirichlet_integral(&u_bar, Closure::Zero);

            let div = grid.divergence(&u_star);
            let (lambda, iters) = self.solves.div_grad(&div, cfg.poisson_tol, cfg.poisson_max_iter)?;
            report.poisson_iterations = iters;
            let mut u_new = u_star;
            u_new.axpy(-1.0, &grid.divergence_transpose(&lambda));
            let mut p = lambda;
            p.scale(-1.0 / dt);
            (u_new, p, grad_sq)
        };

        if !v_new.is_finite() {
            return Err(SolverError::NumericalBlowup { field: "v", t: state.t + dt });
        }
        if !u_new.is_finite() {
            return Err(SolverError::NumericalBlowup { field: "u", t: state.t + dt });
        }
        report.div_max = grid.divergence(&u_new).max_abs();
        if report.div_max > cfg.poisson_tol {
            return Err(SolverError::PoissonDiverged { iterations: report.poisson_iterations, residual: report.div_max });
        }
        report.dissipation = dt * (grad_sq + g_sq);
        let next = State { t: state.t + dt, u: u_new, v: DirectorField { spec, values: v_new }, p: p_new };
        Ok((next, report))
    }

    /// Step until `t_end`, calling `observe` after every step.
    pub fn run(
        &self,
        mut state: State,
        mut observe: impl FnMut(usize, &State, &StepReport),
    ) -> Result<State, SolverError> {
        for n in 0..self.cfg.steps() {
            let (next, report) = self.step(&state)?;
            state = next;
            observe(n + 1, &state, &report);
        }
        Ok(state)
    }
}

/// Single step without keeping a solver around.
pub fn step(grid: &Grid2D, state: &State, cfg: &SolverConfig, bc: Option<&BoundaryData>) -> Result<State, SolverError> {
    FlowSolver::new(*grid, cfg.clone(), bc.cloned())?.step(state).map(|(s, _)| s)
}

fn max_speed(u: &Field) -> f64 {
    u.iter_nodes().fold(0.0, |m, v| m.max((v[0] * v[0] + v[1] * v[1]).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOptions {
    /// Target for `‖L v − f'(v) − τ‖_{L²}`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial pseudo time step.
    pub pseudo_dt: f64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, pseudo_dt: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryOutcome {
    pub v: DirectorField,
    pub residual: f64,
    /// `½∫|∇v|² + ∫(1/ε²) χ(dist²)`.
    pub energy: f64,
    pub iterations: usize,
}

/// Stationary residual `L v − f'(v) − τ` and its `L²` norm.
pub fn stationary_residual(
    grid: &Grid2D,
    v: &DirectorField,
    eps: f64,
    tau: Option<&Field>,
    bc: Option<&BoundaryData>,
) -> (Field, f64) {
    let closure = match bc {
        Some(b) if !grid.is_periodic() => Closure::Wall(&b.v),
        _ => Closure::Zero,
    };
    let dim = v.spec.ambient_dim();
    let mut r = grid.laplacian(&v.values, closure);
    let mut pen = [0.0; 6];
    for k in 0..grid.nodes() {
        v.spec.penalty_gradient(v.values.node(k), eps, &mut pen[..dim]);
        for (ri, p) in r.node_mut(k).iter_mut().zip(&pen[..dim]) {
            *ri -= p;
        }
    }
    if let Some(t) = tau {
        r.axpy(-1.0, t);
    }
    let norm = (r.dot(&r) * grid.h() * grid.h()).sqrt();
    (r, norm)
}

/// Ginzburg-Landau energy `½∫|∇v|² + ∫(1/ε²) χ(dist²)` with the wall trace
/// entering the gradient term on the square.
pub fn gl_energy(grid: &Grid2D, v: &DirectorField, eps: f64, bc: Option<&BoundaryData>) -> f64 {
    let closure = match bc {
        Some(b) if !grid.is_periodic() => Closure::Wall(&b.v),
        _ => Closure::Zero,
    };
    let pen: f64 = v.values.iter_nodes().map(|y| v.spec.penalty_density(y, eps)).sum();
    grid.dirichlet_integral(&v.values, closure) + pen * grid.h() * grid.h()
}

/// Discrete harmonic extension of a wall trace into the square, retracted
/// onto the manifold.
pub fn harmonic_extension(grid: &Grid2D, spec: ManifoldSpec, bc: &BoundaryData) -> Result<DirectorField, SolverError> {
    let dim = spec.ambient_dim();
    let zero = Field::zeros(grid, dim);
    // L_g(f) = L_0 f + L_g(0), so solve −L_0 f = L_g(0)
    let rhs = grid.laplacian(&zero, Closure::Wall(&bc.v));
    let mut f = Field::zeros(grid, dim);
    let g = *grid;
    let rep = pcg(
        |x, y| {
            let xf = Field::from_vec(&g, dim, x.to_vec()).expect("shape");
            let l = g.laplacian(&xf, Closure::Zero);
            for (yi, li) in y.iter_mut().zip(l.as_slice()) {
                *yi = -li;
            }
        },
        |i| -1.0 / g.laplacian_diagonal(i / dim, Closure::Zero),
        rhs.as_slice(),
        f.as_mut_slice(),
        Stop::Relative(1e-12),
        20_000,
    );
    if !rep.converged {
        return Err(SolverError::PoissonDiverged { iterations: rep.iterations, residual: rep.residual });
    }
    let mut v = DirectorField { spec, values: f };
    v.retract_all();
    Ok(v)
}

/// Solve `L v − (1/ε²) χ'(dist²) ∇dist² = τ` by linearly implicit pseudo-time
/// stepping. Each step solves `(1/Δt − L + K) w = R` where `R` is the current
/// residual and `K` the node-local normal stiffness of the penalty, and the
/// pseudo step adapts to the residual history.
///
/// The initial guess defaults to the harmonic extension of the boundary data
/// on the square; the torus requires one.
pub fn stationary_gl_solve(
    grid: &Grid2D,
    spec: ManifoldSpec,
    eps: f64,
    tau: Option<&Field>,
    bc: Option<&BoundaryData>,
    initial: Option<DirectorField>,
    opts: &StationaryOptions,
) -> Result<StationaryOutcome, SolverError> {
    if !(eps > 0.0) {
        return Err(SolverError::InvalidConfig(String::from("eps must be positive")));
    }
    let bc = if grid.is_periodic() { None } else { bc };
    let mut v = match (initial, bc) {
        (Some(v), _) => v,
        (None, Some(b)) => harmonic_extension(grid, spec, b)?,
        (None, None) => {
            return Err(SolverError::InvalidConfig(String::from(
                "an initial guess is required without boundary data",
            )))
        }
    };
    if grid.domain() == Domain::DirichletSquare && bc.is_none() {
        return Err(SolverError::InvalidConfig(String::from("the square domain needs boundary data")));
    }
    let dim = spec.ambient_dim();
    let nodes = grid.nodes();
    let g = *grid;
    let (mut r, mut res) = stationary_residual(grid, &v, eps, tau, bc);
    let mut best = (res, v.clone());
    let mut pdt = opts.pseudo_dt;
    let mut iterations = 0;
    while res > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        // node-local stiffness k ν νᵀ
        let mut stiff = vec![0.0; nodes];
        let mut normal = vec![0.0; nodes * dim];
        let mut p = [0.0; 6];
        for k in 0..nodes {
            let y = v.values.node(k);
            stiff[k] = spec.penalty_normal_stiffness(y, eps);
            spec.retract(y, &mut p[..dim]);
            spec.unit_normal(y, &p[..dim], &mut normal[k * dim..(k + 1) * dim]);
        }
        let a = 1.0 / pdt;
        let mut w = Field::zeros(grid, dim);
        let rep = pcg(
            |x, y| {
                let xf = Field::from_vec(&g, dim, x.to_vec()).expect("shape");
                let l = g.laplacian(&xf, Closure::Zero);
                for k in 0..nodes {
                    let nu = &normal[k * dim..(k + 1) * dim];
                    let xs = &x[k * dim..(k + 1) * dim];
                    let c = stiff[k] * nu.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                    for q in 0..dim {
                        let i = k * dim + q;
                        y[i] = a * x[i] - l.as_slice()[i] + c * nu[q];
                    }
                }
            },
            |i| {
                let k = i / dim;
                let nu = normal[i];
                1.0 / (a - g.laplacian_diagonal(k, Closure::Zero) + stiff[k] * nu * nu)
            },
            r.as_slice(),
            w.as_mut_slice(),
            Stop::Relative(1e-6),
            5_000,
        );
        if !w.is_finite() {
            return Err(SolverError::NumericalBlowup { field: "v", t: iterations as f64 });
        }
        let _ = rep;
        let mut trial = v.clone();
        trial.values.axpy(1.0, &w);
        let (r_new, res_new) = stationary_residual(grid, &trial, eps, tau, bc);
        if res_new < res || pdt < 1e-8 {
            v = trial;
            r = r_new;
            res = res_new;
            if res < best.0 {
                best = (res, v.clone());
            }
            pdt = (pdt * 2.0).min(1e8);
        } else {
            pdt *= 0.5;
        }
    }
    if res > opts.tol {
        return Err(SolverError::NotConverged { residual: best.0, iterations, best: Box::new(best.1) });
    }
    let energy = gl_energy(grid, &v, eps, bc);
    Ok(StationaryOutcome { v, residual: res, energy, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Region;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::PI;

    fn taylor_green(grid: &Grid2D) -> Field {
        Field::from_fn(grid, 2, |x, y, o| {
            o[0] = (2.0 * PI * x).sin() * (2.0 * PI * y).cos();
            o[1] = -(2.0 * PI * x).cos() * (2.0 * PI * y).sin();
        })
    }

    fn kinetic(grid: &Grid2D, u: &Field) -> f64 {
        0.5 * grid.integrate(&u.norm_sq_per_node(), Region::All)
    }

    #[test]
    fn validator_enforces_bounds() {
        let grid = Grid2D::torus(32).unwrap();
        let mut cfg = SolverConfig::for_grid(&grid, Scheme::GinzburgLandau { eps: 0.1 }, 0.01);
        assert_abs_diff_eq!(cfg.dt, 0.5 * 0.01 / 4.0);
        assert!(cfg.validate(&grid).is_ok());
        cfg.dt *= 1.01;
        assert!(matches!(cfg.validate(&grid), Err(SolverError::InvalidConfig(_))));
        let cfg = SolverConfig::for_grid(&grid, Scheme::Projected, 0.01);
        assert_abs_diff_eq!(cfg.dt, 0.5 / (32.0 * 32.0 * 4.0));
        let bad = SolverConfig { scheme: Scheme::GinzburgLandau { eps: -1.0 }, ..cfg };
        assert!(bad.validate(&grid).is_err());
    }

    #[test]
    fn constant_state_is_an_equilibrium() {
        let grid = Grid2D::torus(16).unwrap();
        let spec = ManifoldSpec::sphere();
        let v = DirectorField::constant(&grid, spec, &[0.6, 0.0, 0.8]);
        let u = Field::from_fn(&grid, 2, |_, _, o| o.copy_from_slice(&[0.3, -0.2]));
        for scheme in [Scheme::GinzburgLandau { eps: 0.1 }, Scheme::Projected] {
            let cfg = SolverConfig::for_grid(&grid, scheme, 0.0);
            let solver = FlowSolver::new(grid, cfg.clone(), None).unwrap();
            let s0 = State::new(&grid, u.clone(), v.clone()).unwrap();
            let mut s = s0.clone();
            for _ in 0..20 {
                s = solver.step(&s).unwrap().0;
            }
            assert!(s.u.max_abs_diff(&s0.u) <= 1e-12);
            assert!(s.v.values.max_abs_diff(&s0.v.values) <= 1e-12);
            assert_abs_diff_eq!(s.t, 20.0 * cfg.dt, epsilon = 1e-15);
        }
    }

    #[test]
    fn taylor_green_decays_at_the_viscous_rate() {
        let grid = Grid2D::torus(32).unwrap();
        let spec = ManifoldSpec::sphere();
        let v = DirectorField::constant(&grid, spec, &[0.0, 0.0, 1.0]);
        let mut cfg = SolverConfig::for_grid(&grid, Scheme::GinzburgLandau { eps: 0.1 }, 0.01);
        cfg.dt = 1e-3;
        let solver = FlowSolver::new(grid, cfg, None).unwrap();
        let s0 = State::new(&grid, taylor_green(&grid), v).unwrap();
        let e0 = kinetic(&grid, &s0.u);
        let end = solver.run(s0, |_, _, _| {}).unwrap();
        let ratio = kinetic(&grid, &end.u) / e0;
        assert!((ratio / (-16.0 * PI * PI * end.t).exp() - 1.0).abs() <= 0.02, "ratio {ratio}");
    }

    #[test]
    fn pressure_poisson_examples() {
        let grid = Grid2D::torus(32).unwrap();
        let zero = Field::zeros(&grid, 1);
        assert_eq!(pressure_poisson(&zero, &grid, 1e-10, 100).unwrap().max_abs(), 0.0);
        let target = Field::from_fn(&grid, 1, |x, y, o| o[0] = (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
        let rhs = grid.laplacian(&target, Closure::Zero);
        let p = pressure_poisson(&rhs, &grid, 1e-10, 100).unwrap();
        assert!(p.max_abs_diff(&target) <= 1e-12);
    }

    #[test]
    fn square_poisson_residual() {
        let grid = Grid2D::square(24).unwrap();
        let mut rhs = Field::from_fn(&grid, 1, |x, y, o| o[0] = (7.0 * x * y).sin() + x);
        let m = rhs.mean()[0];
        rhs.as_mut_slice().iter_mut().for_each(|v| *v -= m);
        let p = pressure_poisson(&rhs, &grid, 1e-10, 10_000).unwrap();
        let lap = grid.laplacian(&p, Closure::Neumann);
        assert!(lap.max_abs_diff(&rhs) <= 1e-9);
        assert!(p.mean()[0].abs() <= 1e-12);
    }

    #[test]
    fn square_projection_meets_tolerance() {
        let grid = Grid2D::square(24).unwrap();
        let spec = ManifoldSpec::sphere();
        let bc = BoundaryData::from_fn(&grid, &spec, |_, _, o| o.copy_from_slice(&[0.0, 0.0, 1.0]));
        let v = DirectorField::constant(&grid, spec, &[0.0, 0.0, 1.0]);
        let u = Field::from_fn(&grid, 2, |x, y, o| {
            o[0] = (PI * x).sin() * (PI * y).sin();
            o[1] = x * (1.0 - x) * y;
        });
        let cfg = SolverConfig::for_grid(&grid, Scheme::GinzburgLandau { eps: 0.2 }, 0.0);
        let solver = FlowSolver::new(grid, cfg, Some(bc)).unwrap();
        let mut s = State::new(&grid, u, v).unwrap();
        solver.prepare(&mut s).unwrap();
        assert!(grid.divergence(&s.u).max_abs() <= 1e-8);
        let (next, rep) = solver.step(&s).unwrap();
        assert!(rep.div_max <= 1e-8);
        assert!(next.u.is_finite());
    }

    #[test]
    fn square_requires_boundary_data() {
        let grid = Grid2D::square(16).unwrap();
        let cfg = SolverConfig::for_grid(&grid, Scheme::Projected, 0.0);
        assert!(matches!(FlowSolver::new(grid, cfg, None), Err(SolverError::InvalidConfig(_))));
    }

    #[test]
    fn cfl_violation_is_reported() {
        let grid = Grid2D::torus(16).unwrap();
        let v = DirectorField::constant(&grid, ManifoldSpec::sphere(), &[0.0, 0.0, 1.0]);
        let u = Field::from_fn(&grid, 2, |_, _, o| o.copy_from_slice(&[1e4, 0.0]));
        let cfg = SolverConfig::for_grid(&grid, Scheme::GinzburgLandau { eps: 0.1 }, 0.0);
        let solver = FlowSolver::new(grid, cfg, None).unwrap();
        let s = State::new(&grid, u, v).unwrap();
        assert!(matches!(solver.step(&s), Err(SolverError::CflViolation { .. })));
    }

    #[test]
    fn stationary_constant_boundary_gives_constant() {
        let grid = Grid2D::square(16).unwrap();
        let spec = ManifoldSpec::sphere();
        let c = [0.0, 0.6, 0.8];
        let bc = BoundaryData::from_fn(&grid, &spec, |_, _, o| o.copy_from_slice(&c));
        let out = stationary_gl_solve(&grid, spec, 0.1, None, Some(&bc), None, &StationaryOptions::default()).unwrap();
        assert!(out.residual <= 1e-12);
        for v in out.v.values.iter_nodes() {
            for q in 0..3 {
                assert_abs_diff_eq!(v[q], c[q], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn stationary_solve_lowers_energy_below_boundary_interpolant() {
        let grid = Grid2D::square(24).unwrap();
        let spec = ManifoldSpec::sphere();
        let map = |x: f64, y: f64, o: &mut [f64]| {
            let th = 0.6 + 0.5 * x;
            o.copy_from_slice(&[th.sin() * y.cos(), th.sin() * y.sin(), th.cos()]);
        };
        let bc = BoundaryData::from_fn(&grid, &spec, map);
        let interp = DirectorField::from_fn(&grid, spec, map);
        let e_interp = gl_energy(&grid, &interp, 0.1, Some(&bc));
        let out = stationary_gl_solve(&grid, spec, 0.1, None, Some(&bc), None, &StationaryOptions::default()).unwrap();
        assert!(out.residual <= 1e-8);
        assert!(out.energy < e_interp);
    }
}
