//! Target manifolds for the director field.
//!
//! Two targets are supported: the unit sphere S² ⊂ R³ (uniaxial nematics) and
//! the set of orthonormal pairs `(n, m)` ⊂ R⁶ (biaxial nematics). Ambient
//! points are plain `&[f64]` slices of length [`ManifoldSpec::ambient_dim`];
//! for the biaxial target the layout is `[n0, n1, n2, m0, m1, m2]`.

#[allow(unused_imports)]
use crate::prelude::*;

/// Tolerance used when a caller claims a point lies on the manifold.
pub const ON_MANIFOLD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ManifoldError {
    #[error("tubular radius {0} is outside the admissible range for this target")]
    BadTubularRadius(f64),
    #[error("point at distance {distance} lies outside the projection tube of radius {limit}")]
    OutsideTube { distance: f64, limit: f64 },
    #[error("point at distance {0} from the target is not on the manifold")]
    OffManifold(f64),
    #[error("expected an ambient vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ManifoldKind {
    /// Unit sphere S² in R³.
    Sphere,
    /// Orthonormal pairs `(n, m)` in R⁶.
    Biaxial,
}

impl ManifoldKind {
    pub fn ambient_dim(self) -> usize {
        match self {
            ManifoldKind::Sphere => 3,
            ManifoldKind::Biaxial => 6,
        }
    }

    pub fn default_delta(self) -> f64 {
        match self {
            ManifoldKind::Sphere => 0.25,
            ManifoldKind::Biaxial => 0.1,
        }
    }

    fn max_delta(self) -> f64 {
        self.default_delta()
    }
}

/// A target manifold together with its tubular radius `δ_N`.
///
/// The nearest-point projection is smooth on the tube of radius `2 δ_N`; the
/// penalty of the relaxed system is flat outside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldSpec {
    kind: ManifoldKind,
    delta_n: f64,
}

impl ManifoldSpec {
    pub fn new(kind: ManifoldKind, delta_n: f64) -> Result<Self, ManifoldError> {
        if !(delta_n > 0.0 && delta_n <= kind.max_delta()) {
            return Err(ManifoldError::BadTubularRadius(delta_n));
        }
        Ok(Self { kind, delta_n })
    }

    pub fn sphere() -> Self {
        Self { kind: ManifoldKind::Sphere, delta_n: ManifoldKind::Sphere.default_delta() }
    }

    pub fn biaxial() -> Self {
        Self { kind: ManifoldKind::Biaxial, delta_n: ManifoldKind::Biaxial.default_delta() }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn delta_n(&self) -> f64 {
        self.delta_n
    }

    pub fn ambient_dim(&self) -> usize {
        self.kind.ambient_dim()
    }

    pub fn cutoff(&self) -> CutoffProfile {
        CutoffProfile { delta_n: self.delta_n }
    }

    fn check_dim(&self, y: &[f64]) -> Result<(), ManifoldError> {
        let expected = self.ambient_dim();
        if y.len() != expected {
            return Err(ManifoldError::DimensionMismatch { expected, got: y.len() });
        }
        Ok(())
    }

    /// Euclidean distance from `y` to the manifold.
    pub fn distance(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.ambient_dim());
        match self.kind {
            ManifoldKind::Sphere => (norm(y) - 1.0).abs(),
            ManifoldKind::Biaxial => {
                let (s1, s2) = frame_singular_values(y);
                let d1 = s1 - 1.0;
                let d2 = s2 - 1.0;
                (d1 * d1 + d2 * d2).sqrt()
            }
        }
    }

    /// Nearest-point projection, defined on the tube `dist < 2 δ_N`.
    pub fn project(&self, y: &[f64], out: &mut [f64]) -> Result<(), ManifoldError> {
        self.check_dim(y)?;
        let limit = 2.0 * self.delta_n;
        let distance = self.distance(y);
        if !(distance < limit) {
            return Err(ManifoldError::OutsideTube { distance, limit });
        }
        self.retract(y, out);
        Ok(())
    }

    /// Nearest point on the manifold for any non-degenerate `y`, without the
    /// tube check. Degenerate inputs (zero vector, rank-deficient frame) map to
    /// a fixed reference point.
    pub fn retract(&self, y: &[f64], out: &mut [f64]) {
        match self.kind {
            ManifoldKind::Sphere => {
                let r = norm(y);
                if r > 1e-300 {
                    for (o, &c) in out.iter_mut().zip(y) {
                        *o = c / r;
                    }
                } else {
                    out.copy_from_slice(&[0.0, 0.0, 1.0]);
                }
            }
            ManifoldKind::Biaxial => {
                if !polar_factor(y, out) {
                    out.copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
                }
            }
        }
    }

    /// Orthonormal basis of the normal space at a point `v` on the manifold.
    /// Returns the number of basis vectors written (1 for S², 3 for frames).
    pub fn normal_basis(&self, v: &[f64], basis: &mut [[f64; 6]; 3]) -> usize {
        match self.kind {
            ManifoldKind::Sphere => {
                basis[0] = [v[0], v[1], v[2], 0.0, 0.0, 0.0];
                1
            }
            ManifoldKind::Biaxial => {
                let s = core::f64::consts::FRAC_1_SQRT_2;
                basis[0] = [v[0], v[1], v[2], 0.0, 0.0, 0.0];
                basis[1] = [0.0, 0.0, 0.0, v[3], v[4], v[5]];
                basis[2] = [s * v[3], s * v[4], s * v[5], s * v[0], s * v[1], s * v[2]];
                3
            }
        }
    }

    /// Orthogonal projection of `w` onto the tangent space at `v ∈ N`.
    pub fn tangent_project(&self, v: &[f64], w: &[f64], out: &mut [f64]) -> Result<(), ManifoldError> {
        self.check_dim(v)?;
        self.check_dim(w)?;
        let d = self.distance(v);
        if d > ON_MANIFOLD_TOL {
            return Err(ManifoldError::OffManifold(d));
        }
        let dim = self.ambient_dim();
        let mut basis = [[0.0; 6]; 3];
        let k = self.normal_basis(v, &mut basis);
        out.copy_from_slice(w);
        for b in &basis[..k] {
            let c: f64 = (0..dim).map(|i| b[i] * w[i]).sum();
            for i in 0..dim {
                out[i] -= c * b[i];
            }
        }
        Ok(())
    }

    /// Unit normal `ν` along which `y` leaves the manifold, so that
    /// `y = Π(y) + dist(y)·ν`. At points of the manifold the outward reference
    /// normal is returned.
    pub fn unit_normal(&self, y: &[f64], projected: &[f64], out: &mut [f64]) {
        let dim = self.ambient_dim();
        let mut r = 0.0;
        for i in 0..dim {
            out[i] = y[i] - projected[i];
            r += out[i] * out[i];
        }
        let r = r.sqrt();
        if r > 1e-14 {
            for o in out.iter_mut().take(dim) {
                *o /= r;
            }
        } else {
            let s = match self.kind {
                ManifoldKind::Sphere => 1.0,
                ManifoldKind::Biaxial => core::f64::consts::FRAC_1_SQRT_2,
            };
            for i in 0..dim {
                out[i] = s * projected[i];
            }
        }
    }

    /// `(1/ε²) χ'(dist²) ∇_y dist²`, the gradient of the relaxation penalty.
    /// Zero outside the `2 δ_N` tube where `χ` is constant.
    pub fn penalty_gradient(&self, y: &[f64], eps: f64, out: &mut [f64]) {
        let dim = self.ambient_dim();
        let d = self.distance(y);
        let s = d * d;
        let cutoff = self.cutoff();
        if !(s < cutoff.upper_knot()) {
            out[..dim].fill(0.0);
            return;
        }
        let mut p = [0.0; 6];
        self.retract(y, &mut p[..dim]);
        let c = 2.0 * cutoff.derivative(s) / (eps * eps);
        for i in 0..dim {
            out[i] = c * (y[i] - p[i]);
        }
    }

    /// Pointwise penalty density `(1/ε²) χ(dist²(y, N))`.
    pub fn penalty_density(&self, y: &[f64], eps: f64) -> f64 {
        let d = self.distance(y);
        self.cutoff().value(d * d) / (eps * eps)
    }

    /// Normal-direction curvature of the penalty at `y`, i.e. the second
    /// derivative of `(1/ε²) χ(d²)` along the normal; clamped at zero.
    pub fn penalty_normal_stiffness(&self, y: &[f64], eps: f64) -> f64 {
        let d = self.distance(y);
        let s = d * d;
        let cutoff = self.cutoff();
        let k = 2.0 * cutoff.derivative(s) + 4.0 * s * cutoff.second_derivative(s);
        k.max(0.0) / (eps * eps)
    }

    /// Second fundamental form term `A(v)(∇v, ∇v)` for `v ∈ N` with partial
    /// derivatives `gx`, `gy`.
    pub fn second_fundamental_form_term(
        &self,
        v: &[f64],
        gx: &[f64],
        gy: &[f64],
        out: &mut [f64],
    ) -> Result<(), ManifoldError> {
        self.check_dim(v)?;
        let d = self.distance(v);
        if d > ON_MANIFOLD_TOL {
            return Err(ManifoldError::OffManifold(d));
        }
        match self.kind {
            ManifoldKind::Sphere => {
                let e = dot(gx, gx) + dot(gy, gy);
                for i in 0..3 {
                    out[i] = e * v[i];
                }
            }
            ManifoldKind::Biaxial => {
                let (n, m) = v.split_at(3);
                let (nx, mx) = gx.split_at(3);
                let (ny, my) = gy.split_at(3);
                let en = dot(nx, nx) + dot(ny, ny);
                let em = dot(mx, mx) + dot(my, my);
                let cross = dot(nx, mx) + dot(ny, my);
                for i in 0..3 {
                    out[i] = en * n[i] + cross * m[i];
                    out[3 + i] = em * m[i] + cross * n[i];
                }
            }
        }
        Ok(())
    }
}

/// Smooth monotone cutoff `χ`: the identity on `[0, δ²]`, constant `4δ²` on
/// `[4δ², ∞)`, and a cubic Hermite blend in between with slopes 1 and 0 at
/// the knots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffProfile {
    pub delta_n: f64,
}

impl CutoffProfile {
    /// Upper bound on `2χ'(s) + 4sχ''(s)` over `s ≥ 0`, attained at
    /// `t = 1/15` of the blend interval.
    pub const MAX_NORMAL_CURVATURE: f64 = 4.8;

    pub fn lower_knot(&self) -> f64 {
        self.delta_n * self.delta_n
    }

    pub fn upper_knot(&self) -> f64 {
        4.0 * self.delta_n * self.delta_n
    }

    fn blend_coordinate(&self, s: f64) -> (f64, f64) {
        let a = self.lower_knot();
        let width = 3.0 * a;
        ((s - a) / width, width)
    }

    pub fn value(&self, s: f64) -> f64 {
        let a = self.lower_knot();
        if s <= a {
            s
        } else if s >= self.upper_knot() {
            self.upper_knot()
        } else {
            let (t, width) = self.blend_coordinate(s);
            a + width * t * (1.0 + t - t * t)
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        if s <= self.lower_knot() {
            1.0
        } else if s >= self.upper_knot() {
            0.0
        } else {
            let (t, _) = self.blend_coordinate(s);
            (1.0 - t) * (1.0 + 3.0 * t)
        }
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        if s <= self.lower_knot() || s >= self.upper_knot() {
            0.0
        } else {
            let (t, width) = self.blend_coordinate(s);
            (2.0 - 6.0 * t) / width
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Singular values of the 3×2 matrix `[n | m]`, largest first.
fn frame_singular_values(y: &[f64]) -> (f64, f64) {
    let (n, m) = y.split_at(3);
    let a = dot(n, n);
    let b = dot(n, m);
    let c = dot(m, m);
    let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    let l1 = 0.5 * (a + c + disc);
    let l2 = if l1 > 0.0 { ((a * c - b * b) / l1).max(0.0) } else { 0.0 };
    (l1.sqrt(), l2.sqrt())
}

/// Orthonormal polar factor `M (MᵀM)^{-1/2}` of `M = [n | m]`, followed by
/// two Newton-Schulz sweeps. Returns `false` when `M` is (numerically) rank
/// deficient.
fn polar_factor(y: &[f64], out: &mut [f64]) -> bool {
    let (n, m) = y.split_at(3);
    let a = dot(n, n);
    let b = dot(n, m);
    let c = dot(m, m);
    let det = a * c - b * b;
    if !(det > 1e-24 * (a + c).max(1.0)) {
        return false;
    }
    // sqrt of the 2×2 SPD Gram matrix: (G + √det I)/√(tr G + 2√det)
    let sd = det.sqrt();
    let t = (a + c + 2.0 * sd).sqrt();
    let (ra, rb, rc) = ((a + sd) / t, b / t, (c + sd) / t);
    let rdet = ra * rc - rb * rb;
    let (ia, ib, ic) = (rc / rdet, -rb / rdet, ra / rdet);
    for i in 0..3 {
        out[i] = n[i] * ia + m[i] * ib;
        out[3 + i] = n[i] * ib + m[i] * ic;
    }
    for _ in 0..2 {
        newton_schulz(out);
    }
    true
}

/// One sweep of `X ← X (3I − XᵀX)/2` for a 3×2 frame.
fn newton_schulz(x: &mut [f64]) {
    let (n, m) = x.split_at(3);
    let a = dot(n, n);
    let b = dot(n, m);
    let c = dot(m, m);
    let (ka, kb, kc) = (0.5 * (3.0 - a), -0.5 * b, 0.5 * (3.0 - c));
    let mut tmp = [0.0; 6];
    for i in 0..3 {
        tmp[i] = n[i] * ka + m[i] * kb;
        tmp[3 + i] = n[i] * kb + m[i] * kc;
    }
    x[..6].copy_from_slice(&tmp);
}
