//! Metric-aware primitives on the plane: conformal metrics `g = e^{-2f} δ`,
//! their Christoffel symbols, the velocity frame (N, M), the transverse
//! projector and polar velocity coordinates.
//!
//! Also hosts the finite-difference helpers shared by the other modules.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

/// Below this speed the direction of motion is undefined and frame-based
/// operations refuse to work.
pub const V_MIN: f64 = 1e-9;

/// Rotation by +90 degrees.
#[inline]
pub fn rot90(a: Vec2) -> Vec2 {
    Vec2::new(-a.y, a.x)
}

/// Rotation by -90 degrees.
#[inline]
pub fn rot_minus90(a: Vec2) -> Vec2 {
    Vec2::new(a.y, -a.x)
}

/// Canonical angle in (-π, π].
pub fn canonical_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

// --- finite differences -----------------------------------------------------

/// Step for first derivatives: `max(1e-6, 1e-6 |x|)`.
#[inline]
pub fn fd_step(x: f64) -> f64 {
    (1e-6 * x.abs()).max(1e-6)
}

/// Step for second and mixed derivatives. The smaller first-derivative step
/// would leave roundoff of order eps/h² in the result.
#[inline]
pub fn fd_step2(x: f64) -> f64 {
    (1e-3 * x.abs()).max(1e-3)
}

/// Central difference at steps h and h/2 combined by Richardson extrapolation.
pub fn derivative(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = fd_step(x);
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

pub fn second_derivative(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = fd_step2(x);
    let f0 = f(x);
    let d = |h: f64| (f(x + h) - 2.0 * f0 + f(x - h)) / (h * h);
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

/// ∂²f/∂a∂b from the four-point cross stencil, Richardson extrapolated.
pub fn mixed_derivative(f: impl Fn(f64, f64) -> f64, a: f64, b: f64) -> f64 {
    let ha = fd_step2(a);
    let hb = fd_step2(b);
    let d = |s: f64| {
        let (ha, hb) = (s * ha, s * hb);
        (f(a + ha, b + hb) - f(a + ha, b - hb) - f(a - ha, b + hb) + f(a - ha, b - hb))
            / (4.0 * ha * hb)
    };
    (4.0 * d(0.5) - d(1.0)) / 3.0
}

/// Gradient of a scalar function of a point.
pub fn gradient(f: impl Fn(Vec2) -> f64, p: Vec2) -> Vec2 {
    Vec2::new(
        derivative(|x| f(Vec2::new(x, p.y)), p.x),
        derivative(|y| f(Vec2::new(p.x, y)), p.y),
    )
}

/// Jacobian of a vector function, `J[(j, i)] = ∂f_j/∂p_i`.
pub fn jacobian(f: impl Fn(Vec2) -> Vec2, p: Vec2) -> Mat2 {
    jacobian_with_step(f, p, fd_step)
}

/// Jacobian at the second-derivative step, for functions whose values
/// already carry finite-difference noise.
pub fn jacobian_coarse(f: impl Fn(Vec2) -> Vec2, p: Vec2) -> Mat2 {
    jacobian_with_step(f, p, fd_step2)
}

fn jacobian_with_step(f: impl Fn(Vec2) -> Vec2, p: Vec2, step: fn(f64) -> f64) -> Mat2 {
    let mut jac = Mat2::zeros();
    for i in 0..2 {
        let h = step(p[i]);
        let d = |h: f64| {
            let mut a = p;
            let mut b = p;
            a[i] += h;
            b[i] -= h;
            (f(a) - f(b)) / (2.0 * h)
        };
        let col = (4.0 * d(0.5 * h) - d(h)) / 3.0;
        jac.set_column(i, &col);
    }
    jac
}

// --- conformal metric -------------------------------------------------------

pub type ScalarFn = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Vec2) -> Vec2 + Send + Sync>;

/// Metric `g = e^{-2f} δ` given by its conformal factor f.
#[derive(Clone)]
pub struct ConformalMetric {
    f: ScalarFn,
    grad_f: Option<VectorFn>,
    flat: bool,
}

impl fmt::Debug for ConformalMetric {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.debug_struct("ConformalMetric")
            .field("flat", &self.flat)
            .field("analytic_gradient", &self.grad_f.is_some())
            .finish()
    }
}

impl Default for ConformalMetric {
    fn default() -> Self {
        Self::euclidean()
    }
}

impl ConformalMetric {
    pub fn euclidean() -> Self {
        Self {
            f: Arc::new(|_| 0.0),
            grad_f: Some(Arc::new(|_| Vec2::zeros())),
            flat: true,
        }
    }

    /// Metric whose gradient is taken by finite differences.
    pub fn from_fn(f: impl Fn(Vec2) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), grad_f: None, flat: false }
    }

    pub fn with_gradient(
        f: impl Fn(Vec2) -> f64 + Send + Sync + 'static,
        grad_f: impl Fn(Vec2) -> Vec2 + Send + Sync + 'static,
    ) -> Self {
        Self { f: Arc::new(f), grad_f: Some(Arc::new(grad_f)), flat: false }
    }

    /// True only for the metric built by [`ConformalMetric::euclidean`].
    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn f(&self, p: Vec2) -> f64 {
        (self.f)(p)
    }

    pub fn grad_f(&self, p: Vec2) -> Vec2 {
        match &self.grad_f {
            Some(g) => g(p),
            None => self.fd_grad_f(p),
        }
    }

    pub fn fd_grad_f(&self, p: Vec2) -> Vec2 {
        gradient(|q| (self.f)(q), p)
    }

    /// Drops the analytic gradient, so that `grad_f` falls back to finite differences.
    pub fn without_gradient(&self) -> Self {
        Self { f: self.f.clone(), grad_f: None, flat: self.flat }
    }

    /// Relative mismatch between the supplied gradient and finite differences of f.
    pub fn gradient_mismatch(&self, p: Vec2) -> f64 {
        let a = self.grad_f(p);
        let b = self.fd_grad_f(p);
        (a - b).norm() / (1.0 + b.norm())
    }

    pub fn christoffel(&self, p: Vec2) -> Christoffel {
        christoffel(self, p)
    }

    /// Metric inner product at p.
    pub fn inner(&self, p: Vec2, a: Vec2, b: Vec2) -> f64 {
        (-2.0 * self.f(p)).exp() * a.dot(&b)
    }
}

/// Christoffel symbols stored as `gamma[k][i][j] = Γᵏᵢⱼ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffel(pub [[[f64; 2]; 2]; 2]);

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.0[k][i][j]
    }

    /// The vector `Σᵢⱼ Γᵏᵢⱼ vⁱ vʲ`.
    pub fn contract(&self, v: Vec2) -> Vec2 {
        let mut out = Vec2::zeros();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    out[k] += self.0[k][i][j] * v[i] * v[j];
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().flatten().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// `Γᵏᵢⱼ = f_k δᵢⱼ − fᵢ δ_kⱼ − fⱼ δᵢₖ` for `g = e^{-2f} δ`.
pub fn christoffel(metric: &ConformalMetric, p: Vec2) -> Christoffel {
    let df = metric.grad_f(p);
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut g = [[[0.0; 2]; 2]; 2];
    for (k, gk) in g.iter_mut().enumerate() {
        for (i, gki) in gk.iter_mut().enumerate() {
            for (j, gkij) in gki.iter_mut().enumerate() {
                *gkij = df[k] * delta(i, j) - df[i] * delta(k, j) - df[j] * delta(i, k);
            }
        }
    }
    Christoffel(g)
}

// --- frames ------------------------------------------------------------------

/// Orthonormal frame attached to a velocity: N along v, M = N rotated by +90°.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub n: Vec2,
    pub m: Vec2,
}

impl Frame {
    pub fn det(&self) -> f64 {
        self.n.x * self.m.y - self.n.y * self.m.x
    }
}

pub fn check_speed(v: Vec2) -> Result<f64> {
    let s = v.norm();
    if s.is_finite() && s >= V_MIN {
        Ok(s)
    } else {
        Err(Error::DegenerateVelocity { speed: s })
    }
}

pub fn frame(v: Vec2) -> Result<Frame> {
    let s = check_speed(v)?;
    let n = v / s;
    Ok(Frame { n, m: rot90(n) })
}

/// `P = δ − N Nᵀ`, the projection onto the line orthogonal to v.
pub fn projector(v: Vec2) -> Result<Mat2> {
    let fr = frame(v)?;
    Ok(Mat2::identity() - fr.n * fr.n.transpose())
}

/// Speed and direction angle against the fixed axis m = (1, 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarVelocity {
    pub v: f64,
    pub theta: f64,
}

pub fn polar_from_cartesian(v: Vec2) -> Result<PolarVelocity> {
    let s = check_speed(v)?;
    Ok(PolarVelocity { v: s, theta: canonical_angle(v.y.atan2(v.x)) })
}

pub fn cartesian_from_polar(p: PolarVelocity) -> Vec2 {
    Vec2::new(p.v * p.theta.cos(), p.v * p.theta.sin())
}

/// Length of v in the metric, `e^{-f} |v|_E`.
pub fn conformal_speed(metric: &ConformalMetric, p: Vec2, v: Vec2) -> f64 {
    (-metric.f(p)).exp() * v.norm()
}
