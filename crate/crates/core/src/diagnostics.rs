//! Energies, Ericksen stress, Hopf differential, concentration, Pohozaev
//! residuals and defect measures.

use num_complex::Complex64;

use crate::flow::State;
use crate::grid::{BoundaryData, Closure, DirectorField, Domain, Field, Grid2D, Region};
use crate::manifold::ManifoldKind;
use crate::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("exponent {0} lies outside the open interval (1, 2)")]
    BadExponent(f64),
    #[error("ball radius {radius} is below four grid spacings ({min})")]
    BallTooSmall { radius: f64, min: f64 },
    #[error("ball does not fit inside the domain")]
    BallOutsideDomain,
    #[error("defect extrapolation needs at least three family members, got {0}")]
    FamilyTooShort(usize),
    #[error("radius {0} must be at least two grid spacings")]
    RadiusTooSmall(f64),
    #[error("this diagnostic needs a sphere-valued director")]
    NeedsSphere,
}

/// Energy split of one state together with the running ledger.
///
/// `kinetic = ½∫|u|²`, `dirichlet = ½∫|∇v|²`, `penalty = ∫(1/ε²)χ(dist²)`.
/// `e0` is the ledger bound `2·total(0)`, so that
/// `∫(|u|² + |∇v|² + (1/ε²)χ) + 2·cumulative_dissipation ≤ e0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyReport {
    pub kinetic: f64,
    pub dirichlet: f64,
    pub penalty: f64,
    pub cumulative_dissipation: f64,
    pub e0: f64,
    /// Running maximum of `dirichlet + penalty`.
    pub lambda1: f64,
}

impl EnergyReport {
    pub fn total(&self) -> f64 {
        self.kinetic + self.dirichlet + self.penalty
    }

    /// `∫(|u|² + |∇v|² + (1/ε²)χ)`.
    pub fn ledger_energy(&self) -> f64 {
        2.0 * (self.kinetic + self.dirichlet) + self.penalty
    }

    /// `ledger_energy + 2·dissipation ≤ e0·(1 + rel)`.
    pub fn ledger_holds(&self, rel: f64) -> bool {
        self.ledger_energy() + 2.0 * self.cumulative_dissipation <= self.e0 * (1.0 + rel)
    }

    /// Sharper form `total + dissipation ≤ total(0)·(1 + rel)`.
    pub fn sharp_ledger_holds(&self, rel: f64) -> bool {
        self.total() + self.cumulative_dissipation <= 0.5 * self.e0 * (1.0 + rel)
    }
}

fn director_closure<'a>(grid: &Grid2D, bc: Option<&'a BoundaryData>) -> Closure<'a> {
    match bc {
        Some(b) if grid.domain() == Domain::DirichletSquare => Closure::Wall(&b.v),
        _ => Closure::Zero,
    }
}

/// Energies of `state`. `eps = None` drops the penalty. The Dirichlet term
/// uses the quadratic form of the five-point Laplacian, with the wall trace on
/// the square. The ledger fields start a fresh ledger at this state.
pub fn total_energy(grid: &Grid2D, state: &State, eps: Option<f64>, bc: Option<&BoundaryData>) -> EnergyReport {
    let kinetic = 0.5 * grid.integrate(&state.u.norm_sq_per_node(), Region::All);
    let dirichlet = grid.dirichlet_integral(&state.v.values, director_closure(grid, bc));
    let penalty = match eps {
        Some(e) => penalty_l1(grid, &state.v, e, Region::All),
        None => 0.0,
    };
    let mut r = EnergyReport { kinetic, dirichlet, penalty, ..Default::default() };
    r.e0 = 2.0 * r.total();
    r.lambda1 = dirichlet + penalty;
    r
}

/// Accumulates dissipation and the running maximum along a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    current: EnergyReport,
}

impl EnergyLedger {
    pub fn new(initial: EnergyReport) -> Self {
        Self { current: initial }
    }

    /// Record the energies after one step with the given dissipation
    /// increment.
    pub fn record(&mut self, fresh: EnergyReport, dissipation: f64) -> EnergyReport {
        let prev = self.current;
        self.current = EnergyReport {
            cumulative_dissipation: prev.cumulative_dissipation + dissipation,
            e0: prev.e0,
            lambda1: prev.lambda1.max(fresh.dirichlet + fresh.penalty),
            ..fresh
        };
        self.current
    }

    pub fn current(&self) -> EnergyReport {
        self.current
    }
}

/// `∫_region (1/ε²) χ(dist²(v, N))`.
pub fn penalty_l1(grid: &Grid2D, v: &DirectorField, eps: f64, region: Region) -> f64 {
    let dens: Vec<f64> = v.values.iter_nodes().map(|y| v.spec.penalty_density(y, eps)).collect();
    grid.integrate(&dens, region)
}

/// Per-node `σ = ∇v ⊙ ∇v` and its trace-free part, stored as `[xx, xy, yy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    pub sigma: Vec<[f64; 3]>,
    pub trace_free: Vec<[f64; 3]>,
}

fn stress_entries(gx: &[f64], gy: &[f64]) -> [f64; 3] {
    let xx: f64 = gx.iter().map(|a| a * a).sum();
    let yy: f64 = gy.iter().map(|a| a * a).sum();
    let xy: f64 = gx.iter().zip(gy).map(|(a, b)| a * b).sum();
    [xx, xy, yy]
}

pub fn ericksen_stress(grid: &Grid2D, v: &Field) -> StressField {
    let (gx, gy) = grid.gradient(v);
    let sigma: Vec<[f64; 3]> = gx.iter_nodes().zip(gy.iter_nodes()).map(|(a, b)| stress_entries(a, b)).collect();
    let trace_free = sigma
        .iter()
        .map(|&[xx, xy, yy]| {
            let half = 0.5 * (xx - yy);
            [half, xy, -half]
        })
        .collect();
    StressField { sigma, trace_free }
}

impl StressField {
    /// Divergence `(∂x σxx + ∂y σxy, ∂x σxy + ∂y σyy)` of the full or the
    /// trace-free stress.
    pub fn divergence(&self, grid: &Grid2D, trace_free: bool) -> Field {
        let src = if trace_free { &self.trace_free } else { &self.sigma };
        let row_x = Field::from_vec(grid, 2, src.iter().flat_map(|s| [s[0], s[1]]).collect()).expect("shape");
        let row_y = Field::from_vec(grid, 2, src.iter().flat_map(|s| [s[1], s[2]]).collect()).expect("shape");
        let dx = grid.divergence(&row_x);
        let dy = grid.divergence(&row_y);
        let mut out = Field::zeros(grid, 2);
        for k in 0..grid.nodes() {
            out.node_mut(k).copy_from_slice(&[dx.as_slice()[k], dy.as_slice()[k]]);
        }
        out
    }
}

/// Hopf differential `H = (|∂x v|² − |∂y v|²) + 2i⟨∂x v, ∂y v⟩` and the source
/// `G = 2 g·∂_z v = g·(∂x v − i ∂y v)` of its `∂̄`-equation,
/// `∂̄ H̄ = G` with `∂̄ = ½(∂x + i∂y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HopfField {
    pub h: Vec<Complex64>,
    pub g: Option<Vec<Complex64>>,
}

pub fn hopf_differential(grid: &Grid2D, v: &Field, g: Option<&Field>) -> HopfField {
    let (gx, gy) = grid.gradient(v);
    let h = gx
        .iter_nodes()
        .zip(gy.iter_nodes())
        .map(|(a, b)| {
            let [xx, xy, yy] = stress_entries(a, b);
            Complex64::new(xx - yy, 2.0 * xy)
        })
        .collect();
    let g = g.map(|g| {
        (0..grid.nodes())
            .map(|k| {
                let (a, b, t) = (gx.node(k), gy.node(k), g.node(k));
                let re: f64 = t.iter().zip(a).map(|(p, q)| p * q).sum();
                let im: f64 = t.iter().zip(b).map(|(p, q)| p * q).sum();
                Complex64::new(re, -im)
            })
            .collect()
    });
    HopfField { h, g }
}

/// `‖H‖_{Lᵖ(region)}` for `1 < p < 2`.
pub fn hopf_lp_norm(grid: &Grid2D, hopf: &HopfField, p: f64, region: Region) -> Result<f64, DiagnosticsError> {
    if !(p > 1.0 && p < 2.0) {
        return Err(DiagnosticsError::BadExponent(p));
    }
    let dens: Vec<f64> = hopf.h.iter().map(|z| z.norm().powf(p)).collect();
    Ok(grid.integrate(&dens, region).powf(1.0 / p))
}

/// `‖∂̄ H̄ − G‖_{L¹(region)}` with centred differences for `∂̄`. `g` is the
/// tension or forcing field entering `G`.
pub fn dbar_hopf_residual(grid: &Grid2D, v: &Field, g: &Field, region: Region) -> f64 {
    let hopf = hopf_differential(grid, v, Some(g));
    let re = Field::from_vec(grid, 1, hopf.h.iter().map(|z| z.re).collect()).expect("shape");
    // conjugate: imaginary part flips sign
    let im = Field::from_vec(grid, 1, hopf.h.iter().map(|z| -z.im).collect()).expect("shape");
    let (rx, ry) = grid.gradient(&re);
    let (ix, iy) = grid.gradient(&im);
    let gs = hopf.g.expect("source requested");
    let dens: Vec<f64> = (0..grid.nodes())
        .map(|k| {
            let (rx, ry, ix, iy) = (rx.as_slice()[k], ry.as_slice()[k], ix.as_slice()[k], iy.as_slice()[k]);
            // ½(∂x + i∂y)(a + ib) = ½[(a_x − b_y) + i(b_x + a_y)]
            let dbar = Complex64::new(0.5 * (rx - iy), 0.5 * (ix + ry));
            (dbar - gs[k]).norm()
        })
        .collect();
    grid.integrate(&dens, region)
}

/// Pointwise energy density `½|∇v|² + (1/ε²)χ(dist²)` with centred gradients.
pub fn energy_density(grid: &Grid2D, v: &DirectorField, eps: Option<f64>) -> Vec<f64> {
    let (gx, gy) = grid.gradient(&v.values);
    gx.iter_nodes()
        .zip(gy.iter_nodes())
        .zip(v.values.iter_nodes())
        .map(|((a, b), y)| {
            let [xx, _, yy] = stress_entries(a, b);
            0.5 * (xx + yy) + eps.map_or(0.0, |e| v.spec.penalty_density(y, e))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub radius: f64,
    /// The threshold `δ₀²`.
    pub threshold: f64,
    /// Flagged nodes with their local energies.
    pub flagged: Vec<(usize, f64)>,
}

/// Default concentration threshold `δ₀²`.
pub const DEFAULT_DELTA0_SQ: f64 = 1.0;

/// Local energies `∫_{B_r(x)} e` at every node.
pub fn local_energies(grid: &Grid2D, dens: &[f64], r: f64) -> Vec<f64> {
    let n = grid.n() as isize;
    let h = grid.h();
    let reach = (r / h).floor() as isize;
    let mut offsets = Vec::new();
    for dj in -reach..=reach {
        for di in -reach..=reach {
            let (dx, dy) = (di as f64 * h, dj as f64 * h);
            if dx * dx + dy * dy <= r * r {
                offsets.push((di, dj));
            }
        }
    }
    let area = h * h;
    let periodic = grid.is_periodic();
    (0..grid.nodes())
        .map(|k| {
            let (i, j) = ((k % grid.n()) as isize, (k / grid.n()) as isize);
            let mut acc = 0.0;
            for &(di, dj) in &offsets {
                let (mut ii, mut jj) = (i + di, j + dj);
                if periodic {
                    ii = ii.rem_euclid(n);
                    jj = jj.rem_euclid(n);
                } else if ii < 0 || jj < 0 || ii >= n || jj >= n {
                    continue;
                }
                acc += dens[(jj * n + ii) as usize];
            }
            acc * area
        })
        .collect()
}

/// Nodes whose local energy over `B_r` exceeds `δ₀²`.
pub fn concentration_set(
    grid: &Grid2D,
    v: &DirectorField,
    eps: Option<f64>,
    r: f64,
    delta0_sq: f64,
) -> Result<ConcentrationReport, DiagnosticsError> {
    if r < 2.0 * grid.h() {
        return Err(DiagnosticsError::RadiusTooSmall(r));
    }
    let dens = energy_density(grid, v, eps);
    let local = local_energies(grid, &dens, r);
    let flagged = local.into_iter().enumerate().filter(|&(_, e)| e > delta0_sq).collect();
    Ok(ConcentrationReport { radius: r, threshold: delta0_sq, flagged })
}

/// Multiplier fields for the Pohozaev identity, relative to the ball centre
/// `x₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MultiplierField {
    /// `X = x − x₀`.
    Radial,
    /// `X = ((x − x₀)₁, 0)`.
    XAxis,
    /// `X = (0, (x − x₀)₁)`.
    YAxis,
}

impl MultiplierField {
    fn eval(self, d: (f64, f64)) -> (f64, f64) {
        match self {
            MultiplierField::Radial => d,
            MultiplierField::XAxis => (d.0, 0.0),
            MultiplierField::YAxis => (0.0, d.0),
        }
    }

    /// `(∂₁X¹, ∂₂X¹, ∂₁X², ∂₂X²)`.
    fn jacobian(self) -> [f64; 4] {
        match self {
            MultiplierField::Radial => [1.0, 0.0, 0.0, 1.0],
            MultiplierField::XAxis => [1.0, 0.0, 0.0, 0.0],
            MultiplierField::YAxis => [0.0, 0.0, 1.0, 0.0],
        }
    }
}

/// Both sides of the Pohozaev identity on a ball:
/// `∫_{∂B}(X·∇v)·∂ₙv − ∫_B ∂ⱼXⁱ vⱼ·vᵢ + ∫_B (div X) e − ∫_{∂B} e X·n`
/// and `∫_B (X·∇v)·f`, where `e = ½|∇v|² + (1/ε²)χ(dist²)` and `f` is the
/// forcing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PohozaevTerms {
    pub lhs: f64,
    pub rhs: f64,
}

impl PohozaevTerms {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// Sampled integrand values needed by the Pohozaev identity.
struct Sampler<'a> {
    grid: &'a Grid2D,
    v: &'a DirectorField,
    gx: Field,
    gy: Field,
    eps: Option<f64>,
    forcing: Option<&'a Field>,
    buf: Vec<f64>,
}

impl Sampler<'_> {
    /// Interpolated `(∂x v, ∂y v, F, f)` at a point; slices land in `buf`.
    fn sample(&mut self, x: f64, y: f64) -> f64 {
        let dim = self.v.spec.ambient_dim();
        self.buf.resize(4 * dim, 0.0);
        let (bx, rest) = self.buf.split_at_mut(dim);
        let (by, rest) = rest.split_at_mut(dim);
        let (bv, bf) = rest.split_at_mut(dim);
        self.grid.interpolate(&self.gx, x, y, bx);
        self.grid.interpolate(&self.gy, x, y, by);
        match self.forcing {
            Some(f) => self.grid.interpolate(f, x, y, bf),
            None => bf.fill(0.0),
        }
        match self.eps {
            Some(e) => {
                self.grid.interpolate(&self.v.values, x, y, bv);
                self.v.spec.penalty_density(bv, e)
            }
            None => 0.0,
        }
    }
}

pub fn pohozaev_terms(
    grid: &Grid2D,
    v: &DirectorField,
    eps: Option<f64>,
    forcing: Option<&Field>,
    x_field: MultiplierField,
    center: (f64, f64),
    radius: f64,
) -> Result<PohozaevTerms, DiagnosticsError> {
    let h = grid.h();
    if radius < 4.0 * h {
        return Err(DiagnosticsError::BallTooSmall { radius, min: 4.0 * h });
    }
    if grid.domain() == Domain::DirichletSquare {
        let inside = center.0 - radius >= 0.0
            && center.0 + radius <= 1.0
            && center.1 - radius >= 0.0
            && center.1 + radius <= 1.0;
        if !inside {
            return Err(DiagnosticsError::BallOutsideDomain);
        }
    }
    let dim = v.spec.ambient_dim();
    let (gx, gy) = grid.gradient(&v.values);
    let mut s = Sampler { grid, v, gx, gy, eps, forcing, buf: Vec::new() };
    let jac = x_field.jacobian();
    let div_x = jac[0] + jac[3];
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(p, q)| p * q).sum() };

    let m_theta = 64usize.max((8.0 * radius / h).ceil() as usize);
    let dtheta = 2.0 * core::f64::consts::PI / m_theta as f64;

    // boundary terms
    let mut boundary = 0.0;
    for t in 0..m_theta {
        let (sn, cs) = (t as f64 * dtheta).sin_cos();
        let d = (radius * cs, radius * sn);
        let pen = s.sample(center.0 + d.0, center.1 + d.1);
        let (bx, by) = (&s.buf[..dim], &s.buf[dim..2 * dim]);
        let (xx, xy) = x_field.eval(d);
        let (nx, ny) = (cs, sn);
        let x_grad: f64 = (0..dim).map(|q| (xx * bx[q] + xy * by[q]) * (nx * bx[q] + ny * by[q])).sum();
        let e = 0.5 * (dot(bx, bx) + dot(by, by)) + pen;
        boundary += (x_grad - e * (xx * nx + xy * ny)) * radius * dtheta;
    }

    // interior terms by polar quadrature: 2-point Gauss panels in r
    let m_r = 16usize.max((2.0 * radius / h).ceil() as usize);
    let dr = radius / m_r as f64;
    let gauss = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    let mut interior = 0.0;
    let mut forcing_term = 0.0;
    for panel in 0..m_r {
        for g in gauss {
            let r = (panel as f64 + g) * dr;
            let w_r = 0.5 * dr * r;
            for t in 0..m_theta {
                let (sn, cs) = (t as f64 * dtheta).sin_cos();
                let d = (r * cs, r * sn);
                let pen = s.sample(center.0 + d.0, center.1 + d.1);
                let (bx, by, bf) = (&s.buf[..dim], &s.buf[dim..2 * dim], &s.buf[3 * dim..4 * dim]);
                let (sxx, sxy, syy) = (dot(bx, bx), dot(bx, by), dot(by, by));
                let e = 0.5 * (sxx + syy) + pen;
                // ∂ⱼXⁱ vⱼ·vᵢ with jac = (∂₁X¹, ∂₂X¹, ∂₁X², ∂₂X²)
                let contraction = jac[0] * sxx + (jac[1] + jac[2]) * sxy + jac[3] * syy;
                interior += (div_x * e - contraction) * w_r * dtheta;
                if forcing.is_some() {
                    let (xx, xy) = x_field.eval(d);
                    let xf: f64 = (0..dim).map(|q| (xx * bx[q] + xy * by[q]) * bf[q]).sum();
                    forcing_term += xf * w_r * dtheta;
                }
            }
        }
    }
    Ok(PohozaevTerms { lhs: boundary + interior, rhs: forcing_term })
}

/// `|LHS − RHS|` of the Pohozaev identity on `B_radius(center)`.
pub fn pohozaev_residual(
    grid: &Grid2D,
    v: &DirectorField,
    eps: Option<f64>,
    forcing: Option<&Field>,
    x_field: MultiplierField,
    center: (f64, f64),
    radius: f64,
) -> Result<f64, DiagnosticsError> {
    pohozaev_terms(grid, v, eps, forcing, x_field, center, radius).map(|t| t.residual())
}

/// Radial bump: `1` on `B_inner`, `0` outside `B_outer`, with a smooth
/// `C¹` blend in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub center: (f64, f64),
    pub inner: f64,
    pub outer: f64,
}

impl TestFunction {
    pub fn value(&self, grid: &Grid2D, x: f64, y: f64) -> f64 {
        let (dx, dy) = grid.displacement(self.center, (x, y));
        let r = (dx * dx + dy * dy).sqrt();
        if r <= self.inner {
            1.0
        } else if r >= self.outer {
            0.0
        } else {
            let t = (r - self.inner) / (self.outer - self.inner);
            1.0 - t * t * (3.0 - 2.0 * t)
        }
    }

    pub fn sample(&self, grid: &Grid2D) -> Vec<f64> {
        (0..grid.nodes())
            .map(|k| {
                let (x, y) = grid.position(k);
                self.value(grid, x, y)
            })
            .collect()
    }
}

/// Extrapolated defect triple with the raw per-member values.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectEstimate {
    pub alpha: f64,
    pub beta: f64,
    /// Energy defect, clamped at zero.
    pub gamma: f64,
    /// Extrapolated energy defect before clamping.
    pub gamma_raw: f64,
    pub test_function: TestFunction,
    pub eps: Vec<f64>,
    /// `[α_ε, β_ε, γ_ε]` per member.
    pub members: Vec<[f64; 3]>,
}

/// `φ`-weighted integrals `(∫(|vx|²−|vy|²)φ, ∫⟨vx,vy⟩φ, ∫e_ε φ)`.
pub fn weighted_moments(grid: &Grid2D, v: &DirectorField, eps: Option<f64>, phi: &[f64]) -> [f64; 3] {
    let stress = ericksen_stress(grid, &v.values);
    let dens = energy_density(grid, v, eps);
    let mut a = Vec::with_capacity(grid.nodes());
    let mut b = Vec::with_capacity(grid.nodes());
    let mut c = Vec::with_capacity(grid.nodes());
    for k in 0..grid.nodes() {
        let [xx, xy, yy] = stress.sigma[k];
        a.push((xx - yy) * phi[k]);
        b.push(xy * phi[k]);
        c.push(dens[k] * phi[k]);
    }
    [grid.integrate(&a, Region::All), grid.integrate(&b, Region::All), grid.integrate(&c, Region::All)]
}

/// Intercept at `ε = 0` of the least-squares line through `(ε, y)`.
pub fn linear_intercept(eps: &[f64], y: &[f64]) -> f64 {
    let n = eps.len() as f64;
    let me = eps.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = eps.iter().map(|e| (e - me) * (e - me)).sum();
    if sxx == 0.0 {
        return my;
    }
    let sxy: f64 = eps.iter().zip(y).map(|(e, v)| (e - me) * (v - my)).sum();
    my - (sxy / sxx) * me
}

/// Defect measures of a family `(v^ε, ε)` ordered by decreasing `ε`, relative
/// to `reference`, extrapolated to `ε = 0` through the last three members.
/// Members with `ε ≤ 0` are treated as constrained fields without penalty.
pub fn defect_measures(
    grid: &Grid2D,
    family: &[(DirectorField, f64)],
    phi: &TestFunction,
    reference: &DirectorField,
) -> Result<DefectEstimate, DiagnosticsError> {
    if family.len() < 3 {
        return Err(DiagnosticsError::FamilyTooShort(family.len()));
    }
    let weights = phi.sample(grid);
    let reference = weighted_moments(grid, reference, None, &weights);
    let mut eps = Vec::with_capacity(family.len());
    let mut members = Vec::with_capacity(family.len());
    for (v, e) in family {
        let pen = (*e > 0.0).then_some(*e);
        let m = weighted_moments(grid, v, pen, &weights);
        eps.push(*e);
        members.push([m[0] - reference[0], m[1] - reference[1], m[2] - reference[2]]);
    }
    let tail = family.len() - 3;
    let fit = |c: usize| {
        let ys: Vec<f64> = members[tail..].iter().map(|m| m[c]).collect();
        linear_intercept(&eps[tail..], &ys)
    };
    let gamma_raw = fit(2);
    Ok(DefectEstimate {
        alpha: fit(0),
        beta: fit(1),
        gamma: gamma_raw.max(0.0),
        gamma_raw,
        test_function: *phi,
        eps,
        members,
    })
}

/// Tubular decomposition `v = ω + ζ ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct GLDecomposition {
    pub omega: DirectorField,
    pub zeta: Field,
    pub nu: Field,
    /// Nodes outside the `2δ_N` tube; their entries are not meaningful.
    pub outside: Vec<usize>,
}

pub fn gl_decomposition(grid: &Grid2D, v: &DirectorField) -> GLDecomposition {
    let spec = v.spec;
    let dim = spec.ambient_dim();
    let mut omega = Field::zeros(grid, dim);
    let mut zeta = Field::zeros(grid, 1);
    let mut nu = Field::zeros(grid, dim);
    let mut outside = Vec::new();
    let limit = 2.0 * spec.delta_n();
    for (k, y) in v.values.iter_nodes().enumerate() {
        let d = spec.distance(y);
        if !(d < limit) {
            outside.push(k);
        }
        spec.retract(y, omega.node_mut(k));
        zeta.as_mut_slice()[k] = d;
        let w = omega.node(k).to_vec();
        spec.unit_normal(y, &w, nu.node_mut(k));
    }
    GLDecomposition { omega: DirectorField { spec, values: omega }, zeta, nu, outside }
}

/// `(1/4π) ∫_region v·(∂x v × ∂y v)` for sphere-valued fields.
pub fn degree_integral(grid: &Grid2D, v: &DirectorField, region: Region) -> Result<f64, DiagnosticsError> {
    if v.spec.kind() != ManifoldKind::Sphere {
        return Err(DiagnosticsError::NeedsSphere);
    }
    let (gx, gy) = grid.gradient(&v.values);
    let dens: Vec<f64> = (0..grid.nodes())
        .map(|k| {
            let (a, b, c) = (gx.node(k), gy.node(k), v.values.node(k));
            let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
            c[0] * cross[0] + c[1] * cross[1] + c[2] * cross[2]
        })
        .collect();
    Ok(grid.integrate(&dens, region) / (4.0 * core::f64::consts::PI))
}

/// Snapshot diagnostics bundled for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub energy: EnergyReport,
    pub max_distance: f64,
    pub div_max: f64,
    pub hopf_lp: f64,
    pub hopf_p: f64,
    pub concentration: ConcentrationReport,
    pub penalty_l1: f64,
    pub degree: Option<f64>,
}

/// Options for [`diagnose`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnoseOptions {
    pub eps: Option<f64>,
    pub radius: f64,
    pub delta0_sq: f64,
    pub p: f64,
    pub ball: Region,
}

pub fn diagnose(
    grid: &Grid2D,
    state: &State,
    bc: Option<&BoundaryData>,
    opts: &DiagnoseOptions,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    let energy = total_energy(grid, state, opts.eps, bc);
    let hopf = hopf_differential(grid, &state.v.values, None);
    let hopf_lp = hopf_lp_norm(grid, &hopf, opts.p, opts.ball)?;
    let concentration = concentration_set(grid, &state.v, opts.eps, opts.radius, opts.delta0_sq)?;
    let penalty = opts.eps.map_or(0.0, |e| penalty_l1(grid, &state.v, e, opts.ball));
    let degree = degree_integral(grid, &state.v, Region::All).ok();
    Ok(DiagnosticsReport {
        energy,
        max_distance: state.v.max_distance(),
        div_max: grid.divergence(&state.u).max_abs(),
        hopf_lp,
        hopf_p: opts.p,
        concentration,
        penalty_l1: penalty,
        degree,
    })
}
