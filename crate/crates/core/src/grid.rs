//! Collocated fields on a uniform `n × n` grid and second-order difference
//! operators.
//!
//! Storage is node-major, component-minor: component `c` of node `(i, j)`
//! lives at `(j * n + i) * comps + c`, with `i` the x index. On the periodic
//! torus node `(i, j)` sits at `(i h, j h)`; on the unit square nodes are cell
//! centres `((i + ½) h, (j + ½) h)` and walls sit half a cell outside the
//! outermost nodes.

use crate::manifold::{ManifoldError, ManifoldSpec};
use crate::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    PeriodicTorus,
    DirichletSquare,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("grid needs at least 8 nodes per side, got {0}")]
    TooSmall(usize),
    #[error("field has {got} values, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("field has {got} components, expected {expected}")]
    ComponentMismatch { expected: usize, got: usize },
    #[error("boundary trace lies off the target manifold (distance {0:e})")]
    BoundaryOffManifold(f64),
}

/// Uniform grid over the unit torus or unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    n: usize,
    h: f64,
    domain: Domain,
}

impl Grid2D {
    pub fn new(n: usize, domain: Domain) -> Result<Self, GridError> {
        if n < 8 {
            return Err(GridError::TooSmall(n));
        }
        Ok(Self { n, h: 1.0 / n as f64, domain })
    }

    pub fn torus(n: usize) -> Result<Self, GridError> {
        Self::new(n, Domain::PeriodicTorus)
    }

    pub fn square(n: usize) -> Result<Self, GridError> {
        Self::new(n, Domain::DirichletSquare)
    }

    /// Nodes per side.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn is_periodic(&self) -> bool {
        self.domain == Domain::PeriodicTorus
    }

    pub fn nodes(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    /// Coordinate of the `i`-th node along either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        match self.domain {
            Domain::PeriodicTorus => i as f64 * self.h,
            Domain::DirichletSquare => (i as f64 + 0.5) * self.h,
        }
    }

    pub fn position(&self, node: usize) -> (f64, f64) {
        (self.coord(node % self.n), self.coord(node / self.n))
    }

    /// `b − a`, using the minimum image on the torus.
    pub fn displacement(&self, a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
        let mut dx = b.0 - a.0;
        let mut dy = b.1 - a.1;
        if self.is_periodic() {
            dx -= dx.round();
            dy -= dy.round();
        }
        (dx, dy)
    }

    fn check(&self, f: &Field) {
        assert_eq!(f.nodes(), self.nodes(), "field does not conform to grid");
    }

    /// Stencil of the first-derivative operator along one axis at index `i`,
    /// as `(index, weight)` pairs in units of `1/(2h)`.
    #[inline]
    fn d1_stencil(&self, i: usize) -> [(usize, f64); 3] {
        let n = self.n;
        if self.is_periodic() {
            [((i + n - 1) % n, -1.0), ((i + 1) % n, 1.0), (i, 0.0)]
        } else if i == 0 {
            [(0, -3.0), (1, 4.0), (2, -1.0)]
        } else if i == n - 1 {
            [(n - 1, 3.0), (n - 2, -4.0), (n - 3, 1.0)]
        } else {
            [(i - 1, -1.0), (i + 1, 1.0), (i, 0.0)]
        }
    }

    /// Second-order partial derivatives `(∂x f, ∂y f)`: centred in the
    /// interior and across the periodic seam, one-sided at square walls.
    pub fn gradient(&self, f: &Field) -> (Field, Field) {
        let mut gx = Field::zeros(self, f.comps());
        let mut gy = Field::zeros(self, f.comps());
        self.gradient_into(f, &mut gx, &mut gy);
        (gx, gy)
    }

    pub fn gradient_into(&self, f: &Field, gx: &mut Field, gy: &mut Field) {
        self.check(f);
        let c = f.comps();
        let n = self.n;
        let s = 0.5 / self.h;
        let src = f.as_slice();
        let (ox, oy) = (gx.as_mut_slice(), gy.as_mut_slice());
        for j in 0..n {
            let sy = self.d1_stencil(j);
            for i in 0..n {
                let sx = self.d1_stencil(i);
                let k = self.index(i, j);
                for q in 0..c {
                    let mut ax = 0.0;
                    let mut ay = 0.0;
                    for &(m, w) in &sx {
                        ax += w * src[self.index(m, j) * c + q];
                    }
                    for &(m, w) in &sy {
                        ay += w * src[self.index(i, m) * c + q];
                    }
                    ox[k * c + q] = s * ax;
                    oy[k * c + q] = s * ay;
                }
            }
        }
    }

    /// `∂x w₀ + ∂y w₁` with the stencil of [`Grid2D::gradient`].
    pub fn divergence(&self, w: &Field) -> Field {
        assert_eq!(w.comps(), 2, "divergence needs a 2-vector field");
        self.check(w);
        let n = self.n;
        let s = 0.5 / self.h;
        let src = w.as_slice();
        let mut out = Field::zeros(self, 1);
        let o = out.as_mut_slice();
        for j in 0..n {
            let sy = self.d1_stencil(j);
            for i in 0..n {
                let sx = self.d1_stencil(i);
                let mut acc = 0.0;
                for &(m, c) in &sx {
                    acc += c * src[2 * self.index(m, j)];
                }
                for &(m, c) in &sy {
                    acc += c * src[2 * self.index(i, m) + 1];
                }
                o[self.index(i, j)] = s * acc;
            }
        }
        out
    }

    /// Transpose of [`Grid2D::divergence`] with respect to the plain dot
    /// product. On the torus this is `−∇`.
    pub fn divergence_transpose(&self, s: &Field) -> Field {
        assert_eq!(s.comps(), 1);
        self.check(s);
        let n = self.n;
        let scale = 0.5 / self.h;
        let src = s.as_slice();
        let mut out = Field::zeros(self, 2);
        let o = out.as_mut_slice();
        for j in 0..n {
            let sy = self.d1_stencil(j);
            for i in 0..n {
                let sx = self.d1_stencil(i);
                let v = scale * src[self.index(i, j)];
                for &(m, c) in &sx {
                    o[2 * self.index(m, j)] += c * v;
                }
                for &(m, c) in &sy {
                    o[2 * self.index(i, m) + 1] += c * v;
                }
            }
        }
        out
    }

    /// Five-point Laplacian. On the square the wall closure supplies ghost
    /// values half a cell outside; it is ignored on the torus.
    pub fn laplacian(&self, f: &Field, bc: Closure<'_>) -> Field {
        let mut out = Field::zeros(self, f.comps());
        self.laplacian_into(f, bc, &mut out);
        out
    }

    pub fn laplacian_into(&self, f: &Field, bc: Closure<'_>, out: &mut Field) {
        self.check(f);
        let c = f.comps();
        if let Closure::Wall(t) = bc {
            assert_eq!(t.comps(), c, "wall trace component count");
        }
        let n = self.n;
        let ih2 = 1.0 / (self.h * self.h);
        let src = f.as_slice();
        let o = out.as_mut_slice();
        let periodic = self.is_periodic();
        for j in 0..n {
            for i in 0..n {
                let k = self.index(i, j);
                for q in 0..c {
                    let centre = src[k * c + q];
                    let neighbour = |di: isize, dj: isize| -> f64 {
                        let ii = i as isize + di;
                        let jj = j as isize + dj;
                        let inside = (0..n as isize).contains(&ii) && (0..n as isize).contains(&jj);
                        if inside {
                            return src[self.index(ii as usize, jj as usize) * c + q];
                        }
                        if periodic {
                            let ii = ii.rem_euclid(n as isize) as usize;
                            let jj = jj.rem_euclid(n as isize) as usize;
                            return src[self.index(ii, jj) * c + q];
                        }
                        let wall = match (di, dj) {
                            (-1, _) => Wall::Left,
                            (1, _) => Wall::Right,
                            (_, -1) => Wall::Bottom,
                            _ => Wall::Top,
                        };
                        let along = if matches!(wall, Wall::Left | Wall::Right) { j } else { i };
                        bc.ghost(wall, along, q, centre)
                    };
                    let sum = neighbour(-1, 0) + neighbour(1, 0) + neighbour(0, -1) + neighbour(0, 1);
                    o[k * c + q] = ih2 * (sum - 4.0 * centre);
                }
            }
        }
    }

    /// Diagonal of the five-point Laplacian under a homogeneous closure.
    pub(crate) fn laplacian_diagonal(&self, node: usize, bc: Closure<'_>) -> f64 {
        let ih2 = 1.0 / (self.h * self.h);
        if self.is_periodic() {
            return -4.0 * ih2;
        }
        let (i, j) = (node % self.n, node / self.n);
        let walls = [i == 0, i == self.n - 1, j == 0, j == self.n - 1].iter().filter(|&&b| b).count();
        let per_wall = match bc {
            Closure::Neumann => 0.0,
            _ => -1.0,
        };
        ih2 * (-4.0 + per_wall * walls as f64)
    }

    /// Transport term `(u·∇) f`.
    pub fn advect(&self, u: &Field, f: &Field, scheme: Advection) -> Field {
        assert_eq!(u.comps(), 2);
        self.check(u);
        let c = f.comps();
        let mut out = Field::zeros(self, c);
        match scheme {
            Advection::Centered => {
                let (gx, gy) = self.gradient(f);
                let (ax, ay) = (gx.as_slice(), gy.as_slice());
                let uu = u.as_slice();
                for (k, o) in out.as_mut_slice().chunks_exact_mut(c).enumerate() {
                    let (ux, uy) = (uu[2 * k], uu[2 * k + 1]);
                    for q in 0..c {
                        o[q] = ux * ax[k * c + q] + uy * ay[k * c + q];
                    }
                }
            }
            Advection::Upwind => self.advect_upwind(u, f, &mut out),
        }
        out
    }

    fn advect_upwind(&self, u: &Field, f: &Field, out: &mut Field) {
        let n = self.n;
        let c = f.comps();
        let ih = 1.0 / self.h;
        let (gx, gy) = self.gradient(f);
        let src = f.as_slice();
        let uu = u.as_slice();
        let periodic = self.is_periodic();
        let o = out.as_mut_slice();
        for j in 0..n {
            for i in 0..n {
                let k = self.index(i, j);
                let (ux, uy) = (uu[2 * k], uu[2 * k + 1]);
                for q in 0..c {
                    let fc = src[k * c + q];
                    let dx = if ux > 0.0 && (i > 0 || periodic) {
                        (fc - src[self.index((i + n - 1) % n, j) * c + q]) * ih
                    } else if ux <= 0.0 && (i + 1 < n || periodic) {
                        (src[self.index((i + 1) % n, j) * c + q] - fc) * ih
                    } else {
                        gx.as_slice()[k * c + q]
                    };
                    let dy = if uy > 0.0 && (j > 0 || periodic) {
                        (fc - src[self.index(i, (j + n - 1) % n) * c + q]) * ih
                    } else if uy <= 0.0 && (j + 1 < n || periodic) {
                        (src[self.index(i, (j + 1) % n) * c + q] - fc) * ih
                    } else {
                        gy.as_slice()[k * c + q]
                    };
                    o[k * c + q] = ux * dx + uy * dy;
                }
            }
        }
    }

    /// Skew-symmetric transport `½[(a·∇)b + ∇·(a ⊗ b)]`. On the torus
    /// `Σ b · skew_advect(a, b) = 0` exactly for every `a`.
    pub fn skew_advect(&self, a: &Field, b: &Field) -> Field {
        assert_eq!(a.comps(), 2);
        let c = b.comps();
        let mut out = self.advect(a, b, Advection::Centered);
        let mut flux_x = Field::zeros(self, c);
        let mut flux_y = Field::zeros(self, c);
        {
            let aa = a.as_slice();
            let bb = b.as_slice();
            let (fx, fy) = (flux_x.as_mut_slice(), flux_y.as_mut_slice());
            for k in 0..self.nodes() {
                for q in 0..c {
                    fx[k * c + q] = aa[2 * k] * bb[k * c + q];
                    fy[k * c + q] = aa[2 * k + 1] * bb[k * c + q];
                }
            }
        }
        let (dfx, _) = self.gradient(&flux_x);
        let (_, dfy) = self.gradient(&flux_y);
        for ((o, x), y) in out.as_mut_slice().iter_mut().zip(dfx.as_slice()).zip(dfy.as_slice()) {
            *o = 0.5 * (*o + x + y);
        }
        out
    }

    /// Midpoint-rule integral of nodal values over a region. Ball membership
    /// is decided by node position (minimum image on the torus).
    pub fn integrate(&self, values: &[f64], region: Region) -> f64 {
        assert_eq!(values.len(), self.nodes());
        let area = self.h * self.h;
        match region {
            Region::All => values.iter().sum::<f64>() * area,
            Region::Ball { center, radius } => {
                let r2 = radius * radius;
                let mut acc = 0.0;
                for (k, v) in values.iter().enumerate() {
                    let (dx, dy) = self.displacement(center, self.position(k));
                    if dx * dx + dy * dy <= r2 {
                        acc += v;
                    }
                }
                acc * area
            }
        }
    }

    /// Whether `node` lies in `region`.
    pub fn contains(&self, region: Region, node: usize) -> bool {
        match region {
            Region::All => true,
            Region::Ball { center, radius } => {
                let (dx, dy) = self.displacement(center, self.position(node));
                dx * dx + dy * dy <= radius * radius
            }
        }
    }

    /// `½ ∫ |∇f|²` with forward differences across every cell face. This is
    /// the quadratic form of the five-point Laplacian: its gradient with
    /// respect to nodal values is `−h² Δ_h f` under the same closure.
    pub fn dirichlet_integral(&self, f: &Field, bc: Closure<'_>) -> f64 {
        self.check(f);
        let n = self.n;
        let c = f.comps();
        let src = f.as_slice();
        let mut acc = 0.0;
        let faces = if self.is_periodic() { n } else { n - 1 };
        for j in 0..n {
            for i in 0..n {
                let k = self.index(i, j);
                for q in 0..c {
                    let fc = src[k * c + q];
                    if i < faces {
                        let d = src[self.index((i + 1) % n, j) * c + q] - fc;
                        acc += d * d;
                    }
                    if j < faces {
                        let d = src[self.index(i, (j + 1) % n) * c + q] - fc;
                        acc += d * d;
                    }
                }
            }
        }
        if !self.is_periodic() {
            let mut wall = |w: Wall, along: usize, node: usize| {
                for q in 0..c {
                    let fc = src[node * c + q];
                    let g = bc.ghost(w, along, q, fc);
                    // ghost = 2g_wall − f, so the half-cell face carries 2(f − g_wall)²
                    let d = 0.5 * (fc - g);
                    acc += 2.0 * d * d;
                }
            };
            for t in 0..n {
                wall(Wall::Left, t, self.index(0, t));
                wall(Wall::Right, t, self.index(n - 1, t));
                wall(Wall::Bottom, t, self.index(t, 0));
                wall(Wall::Top, t, self.index(t, n - 1));
            }
        }
        0.5 * acc
    }

    /// Bilinear interpolation of `f` at `(x, y)`. Points in the half cell
    /// between the outermost square nodes and the wall are clamped.
    pub fn interpolate(&self, f: &Field, x: f64, y: f64, out: &mut [f64]) {
        let n = self.n;
        let c = f.comps();
        let locate = |p: f64| -> (usize, usize, f64) {
            if self.is_periodic() {
                let s = num_traits::Euclid::rem_euclid(&(p / self.h), &(n as f64));
                let i0 = (s.floor() as usize).min(n - 1);
                (i0, (i0 + 1) % n, s - i0 as f64)
            } else {
                let s = (p / self.h - 0.5).clamp(0.0, (n - 1) as f64);
                let i0 = (s.floor() as usize).min(n - 2);
                (i0, i0 + 1, s - i0 as f64)
            }
        };
        let (i0, i1, tx) = locate(x);
        let (j0, j1, ty) = locate(y);
        let src = f.as_slice();
        for q in 0..c {
            let v00 = src[self.index(i0, j0) * c + q];
            let v10 = src[self.index(i1, j0) * c + q];
            let v01 = src[self.index(i0, j1) * c + q];
            let v11 = src[self.index(i1, j1) * c + q];
            out[q] = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Advection {
    #[default]
    Centered,
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    All,
    Ball { center: (f64, f64), radius: f64 },
}

impl Region {
    pub fn ball(center: (f64, f64), radius: f64) -> Self {
        Region::Ball { center, radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wall {
    Left,
    Right,
    Bottom,
    Top,
}

/// How the five-point stencil closes at square walls.
#[derive(Debug, Clone, Copy)]
pub enum Closure<'a> {
    /// Dirichlet data given on the walls.
    Wall(&'a WallTrace),
    /// Homogeneous Dirichlet data.
    Zero,
    /// Zero normal flux.
    Neumann,
}

impl Closure<'_> {
    #[inline]
    fn ghost(&self, wall: Wall, along: usize, comp: usize, centre: f64) -> f64 {
        match self {
            Closure::Wall(t) => 2.0 * t.value(wall, along, comp) - centre,
            Closure::Zero => -centre,
            Closure::Neumann => centre,
        }
    }
}

/// Nodal values with a fixed number of components per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    comps: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid2D, comps: usize) -> Self {
        Self { comps, data: vec![0.0; grid.nodes() * comps] }
    }

    pub fn from_fn(grid: &Grid2D, comps: usize, mut f: impl FnMut(f64, f64, &mut [f64])) -> Self {
        let mut out = Self::zeros(grid, comps);
        for (k, chunk) in out.data.chunks_exact_mut(comps).enumerate() {
            let (x, y) = grid.position(k);
            f(x, y, chunk);
        }
        out
    }

    pub fn from_vec(grid: &Grid2D, comps: usize, data: Vec<f64>) -> Result<Self, GridError> {
        let expected = grid.nodes() * comps;
        if data.len() != expected {
            return Err(GridError::ShapeMismatch { expected, got: data.len() });
        }
        Ok(Self { comps, data })
    }

    pub fn comps(&self) -> usize {
        self.comps
    }

    pub fn nodes(&self) -> usize {
        self.data.len() / self.comps
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.data[k * self.comps..(k + 1) * self.comps]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.comps..(k + 1) * self.comps]
    }

    pub fn iter_nodes(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.comps)
    }

    /// Copy of one component as a scalar field.
    pub fn component(&self, q: usize) -> Field {
        Field { comps: 1, data: self.iter_nodes().map(|v| v[q]).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Field) {
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    /// Plain dot product of all stored values.
    pub fn dot(&self, other: &Field) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Per-node squared Euclidean norm.
    pub fn norm_sq_per_node(&self) -> Vec<f64> {
        self.iter_nodes().map(|v| v.iter().map(|x| x * x).sum()).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.comps];
        for v in self.iter_nodes() {
            for (a, b) in m.iter_mut().zip(v) {
                *a += b;
            }
        }
        let nodes = self.nodes() as f64;
        m.iter_mut().for_each(|a| *a /= nodes);
        m
    }
}

/// Director values together with their target manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectorField {
    pub spec: ManifoldSpec,
    pub values: Field,
}

impl DirectorField {
    pub fn new(spec: ManifoldSpec, values: Field) -> Result<Self, GridError> {
        if values.comps() != spec.ambient_dim() {
            return Err(GridError::ComponentMismatch { expected: spec.ambient_dim(), got: values.comps() });
        }
        Ok(Self { spec, values })
    }

    /// Constant field equal to `value` at every node.
    pub fn constant(grid: &Grid2D, spec: ManifoldSpec, value: &[f64]) -> Self {
        let values = Field::from_fn(grid, spec.ambient_dim(), |_, _, out| out.copy_from_slice(value));
        Self { spec, values }
    }

    pub fn from_fn(grid: &Grid2D, spec: ManifoldSpec, f: impl FnMut(f64, f64, &mut [f64])) -> Self {
        Self { spec, values: Field::from_fn(grid, spec.ambient_dim(), f) }
    }

    pub fn max_distance(&self) -> f64 {
        self.values.iter_nodes().fold(0.0, |m, v| m.max(self.spec.distance(v)))
    }

    /// Replace every value by its nearest point on the manifold.
    pub fn retract_all(&mut self) {
        let dim = self.spec.ambient_dim();
        let mut tmp = [0.0; 6];
        for k in 0..self.values.nodes() {
            let v = self.values.node_mut(k);
            self.spec.retract(v, &mut tmp[..dim]);
            v.copy_from_slice(&tmp[..dim]);
        }
    }

    /// Project every value, failing if any lies outside the tube.
    pub fn project_all(&mut self) -> Result<(), ManifoldError> {
        let dim = self.spec.ambient_dim();
        let mut tmp = [0.0; 6];
        for k in 0..self.values.nodes() {
            let v = self.values.node_mut(k);
            self.spec.project(v, &mut tmp[..dim])?;
            v.copy_from_slice(&tmp[..dim]);
        }
        Ok(())
    }
}

/// Values on the four walls of the unit square, sampled at the wall points
/// facing each row or column of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct WallTrace {
    comps: usize,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub bottom: Vec<f64>,
    pub top: Vec<f64>,
}

impl WallTrace {
    pub fn zeros(grid: &Grid2D, comps: usize) -> Self {
        let z = vec![0.0; grid.n() * comps];
        Self { comps, left: z.clone(), right: z.clone(), bottom: z.clone(), top: z }
    }

    pub fn from_fn(grid: &Grid2D, comps: usize, mut f: impl FnMut(f64, f64, &mut [f64])) -> Self {
        let mut t = Self::zeros(grid, comps);
        for s in 0..grid.n() {
            let p = grid.coord(s);
            let r = s * comps..(s + 1) * comps;
            f(0.0, p, &mut t.left[r.clone()]);
            f(1.0, p, &mut t.right[r.clone()]);
            f(p, 0.0, &mut t.bottom[r.clone()]);
            f(p, 1.0, &mut t.top[r]);
        }
        t
    }

    /// Linear extrapolation of nodal values to the walls.
    pub fn extrapolate(grid: &Grid2D, f: &Field) -> Self {
        let n = grid.n();
        let c = f.comps();
        let mut t = Self::zeros(grid, c);
        let ex = |a: &[f64], b: &[f64], out: &mut [f64]| {
            for q in 0..c {
                out[q] = 1.5 * a[q] - 0.5 * b[q];
            }
        };
        for s in 0..n {
            let r = s * c..(s + 1) * c;
            ex(f.node(grid.index(0, s)), f.node(grid.index(1, s)), &mut t.left[r.clone()]);
            ex(f.node(grid.index(n - 1, s)), f.node(grid.index(n - 2, s)), &mut t.right[r.clone()]);
            ex(f.node(grid.index(s, 0)), f.node(grid.index(s, 1)), &mut t.bottom[r.clone()]);
            ex(f.node(grid.index(s, n - 1)), f.node(grid.index(s, n - 2)), &mut t.top[r]);
        }
        t
    }

    pub fn comps(&self) -> usize {
        self.comps
    }

    #[inline]
    pub fn value(&self, wall: Wall, along: usize, comp: usize) -> f64 {
        let side = match wall {
            Wall::Left => &self.left,
            Wall::Right => &self.right,
            Wall::Bottom => &self.bottom,
            Wall::Top => &self.top,
        };
        side[along * self.comps + comp]
    }

    fn points_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        let c = self.comps;
        self.left
            .chunks_exact_mut(c)
            .chain(self.right.chunks_exact_mut(c))
            .chain(self.bottom.chunks_exact_mut(c))
            .chain(self.top.chunks_exact_mut(c))
    }

    fn points(&self) -> impl Iterator<Item = &[f64]> {
        let c = self.comps;
        self.left
            .chunks_exact(c)
            .chain(self.right.chunks_exact(c))
            .chain(self.bottom.chunks_exact(c))
            .chain(self.top.chunks_exact(c))
    }
}

/// Dirichlet data for the square: zero velocity and a director trace on the
/// target manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub u: WallTrace,
    pub v: WallTrace,
}

impl BoundaryData {
    /// Tolerance for the director trace to count as lying on the manifold.
    pub const TRACE_TOL: f64 = 1e-10;

    pub fn new(grid: &Grid2D, spec: &ManifoldSpec, v: WallTrace) -> Result<Self, GridError> {
        if v.comps() != spec.ambient_dim() {
            return Err(GridError::ComponentMismatch { expected: spec.ambient_dim(), got: v.comps() });
        }
        let worst = v.points().fold(0.0, |m: f64, p| m.max(spec.distance(p)));
        if worst > Self::TRACE_TOL {
            return Err(GridError::BoundaryOffManifold(worst));
        }
        Ok(Self { u: WallTrace::zeros(grid, 2), v })
    }

    /// Sample `f` on the walls and retract each sample onto the manifold.
    pub fn from_fn(grid: &Grid2D, spec: &ManifoldSpec, f: impl FnMut(f64, f64, &mut [f64])) -> Self {
        let mut v = WallTrace::from_fn(grid, spec.ambient_dim(), f);
        retract_trace(spec, &mut v);
        Self { u: WallTrace::zeros(grid, 2), v }
    }

    /// Trace obtained by extrapolating a director field to the walls.
    pub fn extrapolated(grid: &Grid2D, v: &DirectorField) -> Self {
        let mut t = WallTrace::extrapolate(grid, &v.values);
        retract_trace(&v.spec, &mut t);
        Self { u: WallTrace::zeros(grid, 2), v: t }
    }
}

fn retract_trace(spec: &ManifoldSpec, t: &mut WallTrace) {
    let dim = spec.ambient_dim();
    let mut tmp = [0.0; 6];
    for p in t.points_mut() {
        spec.retract(p, &mut tmp[..dim]);
        p.copy_from_slice(&tmp[..dim]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::PI;

    fn scalar(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Field {
        Field::from_fn(grid, 1, |x, y, o| o[0] = f(x, y))
    }

    #[test]
    fn rejects_tiny_grids() {
        assert_eq!(Grid2D::torus(4), Err(GridError::TooSmall(4)));
        assert!(Grid2D::square(8).is_ok());
    }

    #[test]
    fn constant_field_has_zero_derivatives() {
        for grid in [Grid2D::torus(16).unwrap(), Grid2D::square(16).unwrap()] {
            let f = scalar(&grid, |_, _| 3.5);
            let (gx, gy) = grid.gradient(&f);
            assert!(gx.max_abs() <= 1e-12 && gy.max_abs() <= 1e-12);
            let trace = WallTrace::from_fn(&grid, 1, |_, _, o| o[0] = 3.5);
            assert!(grid.laplacian(&f, Closure::Wall(&trace)).max_abs() <= 1e-9);
            let u = Field::from_fn(&grid, 2, |x, y, o| o.copy_from_slice(&[x, -y]));
            assert!(grid.advect(&u, &f, Advection::Centered).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn gradient_of_sine_within_taylor_bound() {
        let grid = Grid2D::torus(64).unwrap();
        let f = scalar(&grid, |x, _| (2.0 * PI * x).sin());
        let (gx, gy) = grid.gradient(&f);
        let h = grid.h();
        let bound = (2.0 * PI).powi(3) * h * h / 6.0;
        for k in 0..grid.nodes() {
            let (x, _) = grid.position(k);
            assert!((gx.as_slice()[k] - 2.0 * PI * (2.0 * PI * x).cos()).abs() <= bound);
        }
        assert!(gy.max_abs() <= 1e-12);
    }

    #[test]
    fn square_operators_exact_on_linear_fields() {
        let grid = Grid2D::square(16).unwrap();
        let lin = |x: f64, y: f64| 0.3 + 2.0 * x - 1.5 * y;
        let f = scalar(&grid, lin);
        let (gx, gy) = grid.gradient(&f);
        for k in 0..grid.nodes() {
            assert_abs_diff_eq!(gx.as_slice()[k], 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(gy.as_slice()[k], -1.5, epsilon = 1e-12);
        }
        let w = Field::from_fn(&grid, 2, |x, y, o| o.copy_from_slice(&[x, y]));
        let div = grid.divergence(&w);
        for d in div.as_slice() {
            assert_abs_diff_eq!(*d, 2.0, epsilon = 1e-12);
        }
        let trace = WallTrace::from_fn(&grid, 1, |x, y, o| o[0] = lin(x, y));
        assert!(grid.laplacian(&f, Closure::Wall(&trace)).max_abs() <= 1e-9);
    }

    #[test]
    fn discrete_curl_is_divergence_free() {
        let grid = Grid2D::torus(32).unwrap();
        let psi = scalar(&grid, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
        let (px, py) = grid.gradient(&psi);
        let mut w = Field::zeros(&grid, 2);
        for k in 0..grid.nodes() {
            w.node_mut(k).copy_from_slice(&[py.as_slice()[k], -px.as_slice()[k]]);
        }
        assert!(grid.divergence(&w).max_abs() <= 1e-12);
    }

    #[test]
    fn laplacian_of_eigenfunction() {
        for n in [32, 64] {
            let grid = Grid2D::torus(n).unwrap();
            let f = scalar(&grid, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
            let lap = grid.laplacian(&f, Closure::Neumann);
            let err = lap
                .as_slice()
                .iter()
                .zip(f.as_slice())
                .fold(0.0f64, |m, (l, v)| m.max((l + 8.0 * PI * PI * v).abs()));
            let h = grid.h();
            assert!(err <= 8.0 * PI * PI * (2.0 * PI * h).powi(2) / 12.0 * 1.01);
        }
    }

    #[test]
    fn advection_of_sine() {
        let grid = Grid2D::torus(64).unwrap();
        let f = scalar(&grid, |x, _| (2.0 * PI * x).sin());
        let u = Field::from_fn(&grid, 2, |_, _, o| o.copy_from_slice(&[1.0, 0.0]));
        let a = grid.advect(&u, &f, Advection::Centered);
        let bound = (2.0 * PI).powi(3) * grid.h().powi(2) / 6.0;
        for k in 0..grid.nodes() {
            let (x, _) = grid.position(k);
            assert!((a.as_slice()[k] - 2.0 * PI * (2.0 * PI * x).cos()).abs() <= bound);
        }
        let zero = Field::zeros(&grid, 2);
        assert_eq!(grid.advect(&zero, &f, Advection::Upwind).max_abs(), 0.0);
    }

    #[test]
    fn integrals() {
        let grid = Grid2D::torus(128).unwrap();
        let one = vec![1.0; grid.nodes()];
        assert_abs_diff_eq!(grid.integrate(&one, Region::All), 1.0, epsilon = 1e-14);
        let ball = grid.integrate(&one, Region::ball((0.5, 0.5), 0.25));
        assert!((ball - PI / 16.0).abs() <= 4.0 * 0.25 * PI * grid.h());
        // wraps across the seam
        let seam = grid.integrate(&one, Region::ball((0.0, 0.0), 0.25));
        assert_abs_diff_eq!(seam, ball, epsilon = 1e-14);
        let s = scalar(&grid, |x, _| (2.0 * PI * x).sin());
        assert!(grid.integrate(s.as_slice(), Region::All).abs() <= 1e-12);
    }

    #[test]
    fn dirichlet_integral_is_the_laplacian_quadratic_form() {
        let grid = Grid2D::square(12).unwrap();
        let f = scalar(&grid, |x, y| (3.0 * x).sin() + x * y * y);
        let trace = WallTrace::from_fn(&grid, 1, |x, y, o| o[0] = 0.5 + x - y);
        let e0 = grid.dirichlet_integral(&f, Closure::Wall(&trace));
        let lap = grid.laplacian(&f, Closure::Wall(&trace));
        let h2 = grid.h() * grid.h();
        for k in [0, 5, 13, grid.nodes() - 1] {
            let mut fp = f.clone();
            fp.as_mut_slice()[k] += 1e-6;
            let mut fm = f.clone();
            fm.as_mut_slice()[k] -= 1e-6;
            let fd = (grid.dirichlet_integral(&fp, Closure::Wall(&trace))
                - grid.dirichlet_integral(&fm, Closure::Wall(&trace)))
                / 2e-6;
            assert_abs_diff_eq!(fd, -h2 * lap.as_slice()[k], epsilon = 1e-6);
        }
        assert!(e0 > 0.0);
    }

    #[test]
    fn dirichlet_integral_converges() {
        let grid = Grid2D::torus(128).unwrap();
        let f = scalar(&grid, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        // ½∫|∇f|² = ½ · 4π² · (½·½ + ½·½) = π²
        assert_abs_diff_eq!(grid.dirichlet_integral(&f, Closure::Neumann), PI * PI, epsilon = 1e-2);
    }

    #[test]
    fn bilinear_interpolation_reproduces_bilinear_functions() {
        for grid in [Grid2D::torus(16).unwrap(), Grid2D::square(16).unwrap()] {
            let f = scalar(&grid, |x, y| 1.0 + 2.0 * x + 3.0 * y + 4.0 * x * y);
            let mut out = [0.0];
            grid.interpolate(&f, 0.41, 0.37, &mut out);
            assert_abs_diff_eq!(out[0], 1.0 + 0.82 + 1.11 + 4.0 * 0.41 * 0.37, epsilon = 1e-12);
        }
    }

    #[test]
    fn boundary_data_checks_trace() {
        let grid = Grid2D::square(8).unwrap();
        let s = ManifoldSpec::sphere();
        let good = WallTrace::from_fn(&grid, 3, |_, _, o| o.copy_from_slice(&[0.0, 0.0, 1.0]));
        assert!(BoundaryData::new(&grid, &s, good).is_ok());
        let bad = WallTrace::from_fn(&grid, 3, |_, _, o| o.copy_from_slice(&[0.0, 0.0, 1.1]));
        assert!(matches!(BoundaryData::new(&grid, &s, bad), Err(GridError::BoundaryOffManifold(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_field(n: usize, comps: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-1.0..1.0f64, n * n * comps)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn torus_integration_by_parts(f in random_field(12, 1), w in random_field(12, 2)) {
                let grid = Grid2D::torus(12).unwrap();
                let f = Field::from_vec(&grid, 1, f).unwrap();
                let w = Field::from_vec(&grid, 2, w).unwrap();
                let div = grid.divergence(&w);
                let (gx, gy) = grid.gradient(&f);
                let lhs = grid.integrate(&f.as_slice().iter().zip(div.as_slice()).map(|(a, b)| a * b).collect::<Vec<_>>(), Region::All);
                let mut rhs = 0.0;
                for k in 0..grid.nodes() {
                    rhs += gx.as_slice()[k] * w.as_slice()[2 * k] + gy.as_slice()[k] * w.as_slice()[2 * k + 1];
                }
                rhs *= grid.h() * grid.h();
                let scale = f.dot(&f).sqrt() * w.dot(&w).sqrt();
                prop_assert!((lhs + rhs).abs() <= 1e-12 * scale.max(1.0));
            }

            #[test]
            fn divergence_transpose_is_adjoint(s in random_field(10, 1), w in random_field(10, 2), periodic in any::<bool>()) {
                let grid = if periodic { Grid2D::torus(10) } else { Grid2D::square(10) }.unwrap();
                let s = Field::from_vec(&grid, 1, s).unwrap();
                let w = Field::from_vec(&grid, 2, w).unwrap();
                let lhs = s.dot(&grid.divergence(&w));
                let rhs = grid.divergence_transpose(&s).dot(&w);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            }

            #[test]
            fn operators_are_linear(f in random_field(10, 2), g in random_field(10, 2), a in -2.0..2.0f64, b in -2.0..2.0f64) {
                let grid = Grid2D::square(10).unwrap();
                let f = Field::from_vec(&grid, 2, f).unwrap();
                let g = Field::from_vec(&grid, 2, g).unwrap();
                let mut comb = f.clone();
                comb.scale(a);
                comb.axpy(b, &g);
                let check = |op: &dyn Fn(&Field) -> Field| -> bool {
                    let mut expect = op(&f);
                    expect.scale(a);
                    expect.axpy(b, &op(&g));
                    let got = op(&comb);
                    let scale = expect.max_abs().max(1.0);
                    got.max_abs_diff(&expect) <= 1e-12 * scale
                };
                prop_assert!(check(&|x| grid.gradient(x).0));
                prop_assert!(check(&|x| grid.divergence(x)));
                prop_assert!(check(&|x| grid.laplacian(x, Closure::Zero)));
            }

            #[test]
            fn skew_advection_conserves_energy(a in random_field(10, 2), b in random_field(10, 2)) {
                let grid = Grid2D::torus(10).unwrap();
                let a = Field::from_vec(&grid, 2, a).unwrap();
                let b = Field::from_vec(&grid, 2, b).unwrap();
                let s = grid.skew_advect(&a, &b);
                prop_assert!(s.dot(&b).abs() <= 1e-10 * s.max_abs().max(1.0));
            }
        }
    }

    #[test]
    fn refinement_order_is_two() {
        let err = |n: usize| {
            let grid = Grid2D::square(n).unwrap();
            let exact = |x: f64, y: f64| (1.3 * x).sin() * (0.7 * y).cos();
            let f = scalar(&grid, exact);
            let trace = WallTrace::from_fn(&grid, 1, |x, y, o| o[0] = exact(x, y));
            let lap = grid.laplacian(&f, Closure::Wall(&trace));
            let (gx, _) = grid.gradient(&f);
            let mut e_lap: f64 = 0.0;
            let mut e_grad: f64 = 0.0;
            for k in 0..grid.nodes() {
                let (x, y) = grid.position(k);
                let l = -(1.69 + 0.49) * exact(x, y);
                e_lap = e_lap.max((lap.as_slice()[k] - l).abs());
                e_grad = e_grad.max((gx.as_slice()[k] - 1.3 * (1.3 * x).cos() * (0.7 * y).cos()).abs());
            }
            (e_grad, e_lap)
        };
        let (g1, _) = err(32);
        let (g2, _) = err(64);
        assert!(g1 / g2 >= 3.5, "gradient ratio {}", g1 / g2);
        // the ghost-point closure is first order at the wall nodes only
        let interior = |n: usize| {
            let grid = Grid2D::torus(n).unwrap();
            let f = scalar(&grid, |x, y| (2.0 * PI * x).sin() * (4.0 * PI * y).cos());
            let lap = grid.laplacian(&f, Closure::Neumann);
            lap.as_slice()
                .iter()
                .zip(f.as_slice())
                .fold(0.0f64, |m, (l, v)| m.max((l + 20.0 * PI * PI * v).abs()))
        };
        assert!(interior(32) / interior(64) >= 3.5);
    }
}
