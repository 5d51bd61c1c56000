//! Force fields `F(r, v)` and the ways of building them: the scalar ansatz
//! (real and complex forms), conformal transport between a metric system and
//! its Euclidean twin, and a catalogue of named families addressable from JSON.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{
    self, frame, polar_from_cartesian, ConformalMetric, Frame, Mat2, Vec2,
};
use crate::normality::ProbeBox;

// --- one-variable profiles ---------------------------------------------------

/// Smooth function of one variable with its derivative, as used for A(v),
/// h(W) and the free function of the disc family.
///
/// In JSON a bare number is a constant and a bare array is a list of
/// polynomial coefficients (lowest degree first). Other shapes are tagged
/// objects, e.g. `{"kind": "exp", "scale": 1.0, "rate": 0.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Constant(f64),
    Polynomial(Vec<f64>),
    Tagged(ProfileKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    /// `scale * exp(rate * x)`
    Exp { scale: f64, rate: f64 },
    /// `amp * sin(freq * x + phase)`
    Sine { amp: f64, freq: f64, #[serde(default)] phase: f64 },
    Sum { terms: Vec<Profile> },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Polynomial(c) => c.iter().rev().fold(0.0, |acc, a| acc * x + a),
            Profile::Tagged(ProfileKind::Exp { scale, rate }) => scale * (rate * x).exp(),
            Profile::Tagged(ProfileKind::Sine { amp, freq, phase }) => amp * (freq * x + phase).sin(),
            Profile::Tagged(ProfileKind::Sum { terms }) => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Profile::Constant(_) => 0.0,
            Profile::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, a)| acc * x + k as f64 * a),
            Profile::Tagged(ProfileKind::Exp { scale, rate }) => scale * rate * (rate * x).exp(),
            Profile::Tagged(ProfileKind::Sine { amp, freq, phase }) => {
                amp * freq * (freq * x + phase).cos()
            }
            Profile::Tagged(ProfileKind::Sum { terms }) => terms.iter().map(|t| t.derivative(x)).sum(),
        }
    }
}

// --- force fields ---------------------------------------------------------------

pub type FieldFn = Arc<dyn Fn(Vec2, Vec2) -> Vec2 + Send + Sync>;
/// Jacobian evaluator with `J[(j, i)] = ∂F_j / ∂(r or v)_i`.
pub type JacobianFn = Arc<dyn Fn(Vec2, Vec2) -> Mat2 + Send + Sync>;

/// A force field of a Newtonian system `r̈ = F(r, ṙ)`.
#[derive(Clone)]
pub struct ForceField {
    label: String,
    claims_normality: bool,
    requires_frame: bool,
    eval: FieldFn,
    spatial: Option<JacobianFn>,
    velocity: Option<JacobianFn>,
}

impl fmt::Debug for ForceField {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.debug_struct("ForceField")
            .field("label", &self.label)
            .field("claims_normality", &self.claims_normality)
            .field("requires_frame", &self.requires_frame)
            .field("analytic_jacobians", &self.has_analytic_jacobians())
            .finish()
    }
}

impl ForceField {
    pub fn new(label: impl Into<String>, eval: impl Fn(Vec2, Vec2) -> Vec2 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            claims_normality: false,
            requires_frame: false,
            eval: Arc::new(eval),
            spatial: None,
            velocity: None,
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, _| Vec2::zeros())
            .with_jacobians(|_, _| Mat2::zeros(), |_, _| Mat2::zeros())
            .claiming_normality(true)
    }

    pub fn with_jacobians(
        mut self,
        spatial: impl Fn(Vec2, Vec2) -> Mat2 + Send + Sync + 'static,
        velocity: impl Fn(Vec2, Vec2) -> Mat2 + Send + Sync + 'static,
    ) -> Self {
        self.spatial = Some(Arc::new(spatial));
        self.velocity = Some(Arc::new(velocity));
        self
    }

    pub fn claiming_normality(mut self, claims: bool) -> Self {
        self.claims_normality = claims;
        self
    }

    /// Marks fields that are built from the velocity direction and hence
    /// undefined at rest points.
    pub fn requiring_frame(mut self, requires: bool) -> Self {
        self.requires_frame = requires;
        self
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn claims_normality(&self) -> bool {
        self.claims_normality
    }

    pub fn requires_frame(&self) -> bool {
        self.requires_frame
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.spatial.is_some() && self.velocity.is_some()
    }

    #[inline]
    pub fn eval(&self, r: Vec2, v: Vec2) -> Vec2 {
        (self.eval)(r, v)
    }

    pub fn spatial_jacobian(&self, r: Vec2, v: Vec2) -> Mat2 {
        match &self.spatial {
            Some(j) => j(r, v),
            None => self.fd_spatial_jacobian(r, v),
        }
    }

    pub fn velocity_jacobian(&self, r: Vec2, v: Vec2) -> Mat2 {
        match &self.velocity {
            Some(j) => j(r, v),
            None => self.fd_velocity_jacobian(r, v),
        }
    }

    pub fn fd_spatial_jacobian(&self, r: Vec2, v: Vec2) -> Mat2 {
        geometry::jacobian(|q| self.eval(q, v), r)
    }

    pub fn fd_velocity_jacobian(&self, r: Vec2, v: Vec2) -> Mat2 {
        geometry::jacobian(|w| self.eval(r, w), v)
    }

    /// Both Jacobians by differences at the coarser second-derivative step.
    /// Fields evaluated through finite-difference partials (a scalar ansatz
    /// without closed-form partials) need this for an independent check.
    pub fn coarse_jacobians(&self, r: Vec2, v: Vec2) -> (Mat2, Mat2) {
        (
            geometry::jacobian_coarse(|q| self.eval(q, v), r),
            geometry::jacobian_coarse(|w| self.eval(r, w), v),
        )
    }

    /// Largest deviation of the supplied Jacobians from finite differences
    /// (zero when the field has none).
    pub fn jacobian_mismatch(&self, r: Vec2, v: Vec2) -> f64 {
        if !self.has_analytic_jacobians() {
            return 0.0;
        }
        let (js, jv) = self.coarse_jacobians(r, v);
        let ds = (self.spatial_jacobian(r, v) - js).abs().max();
        let dv = (self.velocity_jacobian(r, v) - jv).abs().max();
        ds.max(dv)
    }
}

/// Components of F along N and M.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ABDecomposition {
    pub a: f64,
    pub b: f64,
}

impl ABDecomposition {
    pub fn reconstruct(&self, fr: &Frame) -> Vec2 {
        self.a * fr.n + self.b * fr.m
    }
}

pub fn ab_decompose(field: &ForceField, r: Vec2, v: Vec2) -> Result<ABDecomposition> {
    let fr = frame(v)?;
    let f = field.eval(r, v);
    Ok(ABDecomposition { a: f.dot(&fr.n), b: f.dot(&fr.m) })
}

// --- scalar ansatz ------------------------------------------------------------

/// A(x, y, v, θ) together with the partials entering the reduced equation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct APartials {
    pub a: f64,
    pub a_x: f64,
    pub a_y: f64,
    pub a_v: f64,
    pub a_th: f64,
    pub a_thth: f64,
    pub a_thv: f64,
    pub a_thx: f64,
    pub a_thy: f64,
}

impl APartials {
    pub fn check_finite(&self) -> Result<()> {
        let named = [
            ("A", self.a),
            ("A_x", self.a_x),
            ("A_y", self.a_y),
            ("A_v", self.a_v),
            ("A_theta", self.a_th),
            ("A_theta_theta", self.a_thth),
            ("A_theta_v", self.a_thv),
            ("A_theta_x", self.a_thx),
            ("A_theta_y", self.a_thy),
        ];
        match named.iter().find(|(_, x)| !x.is_finite()) {
            Some((name, _)) => Err(Error::MissingPartial(name)),
            None => Ok(()),
        }
    }
}

pub type ScalarAFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
pub type APartialsFn = Arc<dyn Fn(f64, f64, f64, f64) -> APartials + Send + Sync>;

/// Scalar function A(x, y, v, θ) of position and polar velocity.
///
/// Without analytic partials every derivative is taken by Richardson
/// extrapolated central differences.
#[derive(Clone)]
pub struct ScalarFieldA {
    label: String,
    a: ScalarAFn,
    partials: Option<APartialsFn>,
}

impl fmt::Debug for ScalarFieldA {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.debug_struct("ScalarFieldA")
            .field("label", &self.label)
            .field("analytic_partials", &self.partials.is_some())
            .finish()
    }
}

impl ScalarFieldA {
    pub fn new(label: impl Into<String>, a: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), a: Arc::new(a), partials: None }
    }

    pub fn with_partials(
        mut self,
        p: impl Fn(f64, f64, f64, f64) -> APartials + Send + Sync + 'static,
    ) -> Self {
        self.partials = Some(Arc::new(p));
        self
    }

    /// Same function with the analytic partials dropped.
    pub fn without_partials(&self) -> Self {
        Self { label: self.label.clone(), a: self.a.clone(), partials: None }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    pub fn value(&self, x: f64, y: f64, v: f64, th: f64) -> f64 {
        (self.a)(x, y, v, th)
    }

    pub fn partials(&self, x: f64, y: f64, v: f64, th: f64) -> APartials {
        match &self.partials {
            Some(p) => p(x, y, v, th),
            None => self.fd_partials(x, y, v, th),
        }
    }

    /// A and A_θ only, which is all the force itself needs.
    pub fn value_and_theta(&self, x: f64, y: f64, v: f64, th: f64) -> (f64, f64) {
        match &self.partials {
            Some(p) => {
                let p = p(x, y, v, th);
                (p.a, p.a_th)
            }
            None => {
                let f = &self.a;
                (f(x, y, v, th), geometry::derivative(|t| f(x, y, v, t), th))
            }
        }
    }

    pub fn fd_partials(&self, x: f64, y: f64, v: f64, th: f64) -> APartials {
        use geometry::{derivative as d1, mixed_derivative as d11, second_derivative as d2};
        let f = &self.a;
        APartials {
            a: f(x, y, v, th),
            a_x: d1(|s| f(s, y, v, th), x),
            a_y: d1(|s| f(x, s, v, th), y),
            a_v: d1(|s| f(x, y, s, th), v),
            a_th: d1(|s| f(x, y, v, s), th),
            a_thth: d2(|s| f(x, y, v, s), th),
            a_thv: d11(|t, s| f(x, y, s, t), th, v),
            a_thx: d11(|t, s| f(s, y, v, t), th, x),
            a_thy: d11(|t, s| f(x, s, v, t), th, y),
        }
    }

    /// Differences between A_θx, A_θy taken as ∂θ∂x and as ∂x∂θ by nested
    /// finite differences.
    pub fn mixed_symmetry_error(&self, x: f64, y: f64, v: f64, th: f64) -> f64 {
        use geometry::derivative as d1;
        let f = &self.a;
        let th_x = d1(|t| d1(|s| f(s, y, v, t), x), th);
        let x_th = d1(|s| d1(|t| f(s, y, v, t), th), x);
        let th_y = d1(|t| d1(|s| f(x, s, v, t), y), th);
        let y_th = d1(|s| d1(|t| f(x, s, v, t), th), y);
        (th_x - x_th).abs().max((th_y - y_th).abs())
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, _, _, _| 0.0).with_partials(|_, _, _, _| APartials::default())
    }

    /// A = A(v): the force is directed along the velocity.
    pub fn speed_only(a: Profile) -> Self {
        let a2 = a.clone();
        Self::new("speed_only", move |_, _, v, _| a.eval(v)).with_partials(move |_, _, v, _| APartials {
            a: a2.eval(v),
            a_v: a2.derivative(v),
            ..APartials::default()
        })
    }

    /// A = A(v) cos θ, the homogeneous anisotropic family.
    pub fn anisotropic(a: Profile) -> Self {
        let a2 = a.clone();
        Self::new("anisotropic", move |_, _, v, th| a.eval(v) * th.cos()).with_partials(
            move |_, _, v, th| {
                let (av, dav) = (a2.eval(v), a2.derivative(v));
                let (c, s) = (th.cos(), th.sin());
                APartials {
                    a: av * c,
                    a_v: dav * c,
                    a_th: -av * s,
                    a_thth: -av * c,
                    a_thv: -dav * s,
                    ..APartials::default()
                }
            },
        )
    }

    /// The solution invariant under the rotations of the disc of radius `radius`:
    /// `A = −2v²(x cosθ + y sinθ)/D + v g(v/D)` with `D = R² − x² − y²`.
    pub fn disc_invariant(radius: f64, g: Profile) -> Self {
        let r2 = radius * radius;
        let g2 = g.clone();
        Self::new("disc_invariant", move |x, y, v, th| {
            let d = r2 - x * x - y * y;
            -2.0 * v * v * (x * th.cos() + y * th.sin()) / d + v * g.eval(v / d)
        })
        .with_partials(move |x, y, v, th| {
            let d = r2 - x * x - y * y;
            let (c, s) = (th.cos(), th.sin());
            let p = x * c + y * s;
            let q = -x * s + y * c;
            let sv = v / d;
            let (gs, dgs) = (g2.eval(sv), g2.derivative(sv));
            let v2 = v * v;
            let d2 = d * d;
            APartials {
                a: -2.0 * v2 * p / d + v * gs,
                a_x: -2.0 * v2 * c / d - 4.0 * v2 * p * x / d2 + 2.0 * x * v2 * dgs / d2,
                a_y: -2.0 * v2 * s / d - 4.0 * v2 * p * y / d2 + 2.0 * y * v2 * dgs / d2,
                a_v: -4.0 * v * p / d + gs + sv * dgs,
                a_th: -2.0 * v2 * q / d,
                a_thth: 2.0 * v2 * p / d,
                a_thv: -4.0 * v * q / d,
                a_thx: 2.0 * v2 * s / d - 4.0 * v2 * q * x / d2,
                a_thy: -2.0 * v2 * c / d - 4.0 * v2 * q * y / d2,
            }
        })
    }

    /// `A(x, y, v, θ) = a(v, θ − γ)/ρ` where (ρ, γ) are polar coordinates of
    /// the position and `a` is read from `profile` at the origin (its x, y
    /// arguments are ignored).
    pub fn gamma_shifted(profile: &ScalarFieldA) -> Self {
        let inner = profile.clone();
        let inner2 = profile.clone();
        Self::new(format!("gamma_shifted:{}", profile.label), move |x, y, v, th| {
            let rho = x.hypot(y);
            inner.value(0.0, 0.0, v, th - y.atan2(x)) / rho
        })
        .with_partials(move |x, y, v, th| {
            let rho = x.hypot(y);
            let phi = th - y.atan2(x);
            let a = inner2.partials(0.0, 0.0, v, phi);
            let r3 = rho * rho * rho;
            APartials {
                a: a.a / rho,
                a_x: (a.a_th * y - a.a * x) / r3,
                a_y: (-a.a_th * x - a.a * y) / r3,
                a_v: a.a_v / rho,
                a_th: a.a_th / rho,
                a_thth: a.a_thth / rho,
                a_thv: a.a_thv / rho,
                a_thx: (a.a_thth * y - a.a_th * x) / r3,
                a_thy: (-a.a_thth * x - a.a_th * y) / r3,
            }
        })
    }
}

fn polar_parts(v: Vec2) -> Result<(f64, f64, Vec2, Vec2)> {
    let p = polar_from_cartesian(v)?;
    let u = Vec2::new(p.theta.cos(), p.theta.sin());
    Ok((p.v, p.theta, u, geometry::rot90(u)))
}

/// Force of the scalar ansatz, `F = A N − A_θ M` in polar form, so that its
/// decomposition is `(A, −A_θ)`.
///
/// The Jacobians are assembled from the second partials of A, which keeps
/// downstream residuals free of nested finite differences.
pub fn from_scalar_ansatz(a: &ScalarFieldA) -> ForceField {
    let ae = a.clone();
    let aj = a.clone();
    let av = a.clone();
    ForceField::new(format!("scalar_ansatz:{}", a.label), move |r, v| {
        match polar_parts(v) {
            Ok((s, th, u, m)) => {
                let (a0, a_th) = ae.value_and_theta(r.x, r.y, s, th);
                a0 * u - a_th * m
            }
            Err(_) => Vec2::repeat(f64::NAN),
        }
    })
    .with_jacobians(
        move |r, v| match polar_parts(v) {
            Ok((s, th, u, m)) => {
                let p = aj.partials(r.x, r.y, s, th);
                Mat2::from_columns(&[p.a_x * u - p.a_thx * m, p.a_y * u - p.a_thy * m])
            }
            Err(_) => Mat2::repeat(f64::NAN),
        },
        move |r, v| match polar_parts(v) {
            Ok((s, th, u, m)) => {
                let p = av.partials(r.x, r.y, s, th);
                let d_v = p.a_v * u - p.a_thv * m;
                let d_th = 2.0 * p.a_th * u + (p.a - p.a_thth) * m;
                Mat2::from_columns(&[u.x * d_v + (m.x / s) * d_th, u.y * d_v + (m.y / s) * d_th])
            }
            Err(_) => Mat2::repeat(f64::NAN),
        },
    )
    .requiring_frame(true)
}

/// Contravariant force of the covariant scalar ansatz for `g = e^{-2f} δ`:
/// `F = e^{f} (A u − A_θ m)` with u the Euclidean direction of v.
pub fn metric_scalar_ansatz(a: &ScalarFieldA, metric: &ConformalMetric) -> ForceField {
    let a = a.clone();
    let metric = metric.clone();
    ForceField::new(format!("metric_scalar_ansatz:{}", a.label), move |r, v| match polar_parts(v) {
        Ok((s, th, u, m)) => {
            let (a0, a_th) = a.value_and_theta(r.x, r.y, s, th);
            metric.f(r).exp() * (a0 * u - a_th * m)
        }
        Err(_) => Vec2::repeat(f64::NAN),
    })
    .requiring_frame(true)
}

/// Complex form of the scalar ansatz, `F = (w/|w|)(A + w A_w − w̄ A_w̄)`,
/// with the Wirtinger partials assembled from the polar partials of A.
pub fn complex_force(a: &ScalarFieldA, z: Complex64, w: Complex64) -> Result<Complex64> {
    let s = w.norm();
    if !(s.is_finite() && s >= geometry::V_MIN) {
        return Err(Error::DegenerateVelocity { speed: s });
    }
    let th = geometry::canonical_angle(w.arg());
    let p = a.partials(z.re, z.im, s, th);
    let i = Complex64::i();
    let e = Complex64::from_polar(1.0, th);
    let a_w = 0.5 * e.conj() * (p.a_v - i * p.a_th / s);
    let a_wbar = 0.5 * e * (p.a_v + i * p.a_th / s);
    Ok((w / s) * (p.a + w * a_w - w.conj() * a_wbar))
}

// --- conformal transport --------------------------------------------------------

/// Maps the scalar A′ of the Euclidean system to the scalar A of the covariant
/// system for `g = e^{-2f} δ`: `A = A′ e^{-f} + Σ Γᵏᵢⱼ vⁱ vʲ N_k`.
///
/// With N lowered by g the Christoffel term collapses to `−e^{-f} v² ⟨∇f, u⟩`.
/// The two systems then share trajectories, their forces being bound by
/// `F′ = F − Γ(v, v)`.
pub fn conformal_transport(a_prime: &ScalarFieldA, metric: &ConformalMetric) -> ScalarFieldA {
    let a_prime = a_prime.clone();
    let metric = metric.clone();
    let label = format!("transported:{}", a_prime.label);
    ScalarFieldA::new(label, move |x, y, v, th| {
        let p = Vec2::new(x, y);
        let u = Vec2::new(th.cos(), th.sin());
        let gamma = christoffel_along(&metric, p, v, u);
        (-metric.f(p)).exp() * (a_prime.value(x, y, v, th) + gamma)
    })
}

/// Inverse of [`conformal_transport`].
pub fn conformal_transport_inverse(a: &ScalarFieldA, metric: &ConformalMetric) -> ScalarFieldA {
    let a = a.clone();
    let metric = metric.clone();
    let label = format!("untransported:{}", a.label);
    ScalarFieldA::new(label, move |x, y, v, th| {
        let p = Vec2::new(x, y);
        let u = Vec2::new(th.cos(), th.sin());
        metric.f(p).exp() * a.value(x, y, v, th) - christoffel_along(&metric, p, v, u)
    })
}

/// `⟨Γ(v, v), u⟩` for v = speed·u, evaluated through the symbols themselves.
fn christoffel_along(metric: &ConformalMetric, p: Vec2, speed: f64, u: Vec2) -> f64 {
    metric.christoffel(p).contract(speed * u).dot(&u)
}

// --- multidimensional-type fields ------------------------------------------------------

/// W(x, y, v) and the partials used by the multidimensional-type family.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WPartials {
    pub w: f64,
    pub w_x: f64,
    pub w_y: f64,
    pub w_v: f64,
    pub w_vv: f64,
    pub w_vx: f64,
    pub w_vy: f64,
}

impl WPartials {
    pub fn grad(&self) -> Vec2 {
        Vec2::new(self.w_x, self.w_y)
    }
}

pub type WFn = Arc<dyn Fn(f64, f64, f64) -> WPartials + Send + Sync>;

/// Data of the field `F = h(W) N / W_v − |v| (2⟨∇W, N⟩ N − ∇W) / W_v`.
#[derive(Clone)]
pub struct MDTypeParams {
    pub w: WFn,
    pub h: Profile,
}

impl fmt::Debug for MDTypeParams {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.debug_struct("MDTypeParams").field("h", &self.h).finish_non_exhaustive()
    }
}

impl MDTypeParams {
    pub fn new(w: impl Fn(f64, f64, f64) -> WPartials + Send + Sync + 'static, h: Profile) -> Self {
        Self { w: Arc::new(w), h }
    }

    pub fn w_at(&self, r: Vec2, v: f64) -> WPartials {
        (self.w)(r.x, r.y, v)
    }

    /// W = v e^{-f}, which turns the family into the metrizable one.
    pub fn conformal(metric: MetricSpec, h: Profile) -> Self {
        Self::perturbed(metric, Perturbation::default(), h)
    }

    /// `W = v e^{-f} + eps sin(a x + b y + c v + d)`.
    pub fn perturbed(metric: MetricSpec, pert: Perturbation, h: Profile) -> Self {
        Self::new(
            move |x, y, v| {
                let p = Vec2::new(x, y);
                let (f, df) = metric.eval(p);
                let e = (-f).exp();
                let Perturbation { eps, a, b, c, d } = pert;
                let arg = a * x + b * y + c * v + d;
                let (sn, cs) = arg.sin_cos();
                WPartials {
                    w: v * e + eps * sn,
                    w_x: -v * e * df.x + eps * a * cs,
                    w_y: -v * e * df.y + eps * b * cs,
                    w_v: e + eps * c * cs,
                    w_vv: -eps * c * c * sn,
                    w_vx: -e * df.x - eps * c * a * sn,
                    w_vy: -e * df.y - eps * c * b * sn,
                }
            },
            h,
        )
    }

    /// Seeded random member: a trigonometric conformal factor plus a small
    /// perturbation, with h a random combination of 1, W and sin W.
    /// `W_v ≥ e^{-0.4} − 0.1` holds everywhere by construction.
    pub fn random(seed: u64) -> Self {
        let (metric, pert, h) = random_mdtype_spec(seed);
        Self::perturbed(metric, pert, h)
    }

    /// Rejects parameters whose W_v changes sign or comes close to zero on
    /// the probe box.
    pub fn check_domain(&self, probes: usize, seed: u64) -> Result<()> {
        let mut sign = 0.0;
        for p in ProbeBox::default().sample(probes, seed) {
            let w = (self.w)(p.x, p.y, p.v);
            if sign == 0.0 {
                sign = w.w_v.signum();
            }
            if !(w.w_v * sign > 1e-6) || !w.w.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "W_v = {} at (x, y, v) = ({}, {}, {})",
                    w.w_v, p.x, p.y, p.v
                )));
            }
        }
        Ok(())
    }

    /// Closed forms `α₄ = −⟨∇W, M⟩ / W_v`, `β₄ = −⟨∇W, N⟩ / W_v`.
    pub fn alpha4_beta4(&self, r: Vec2, v: Vec2) -> Result<(f64, f64)> {
        let fr = frame(v)?;
        let w = self.w_at(r, v.norm());
        Ok((-w.grad().dot(&fr.m) / w.w_v, -w.grad().dot(&fr.n) / w.w_v))
    }

    /// Closed forms `A = (h(W) − ⟨∇W, v⟩)/W_v` and `B = |v| ⟨∇W, M⟩ / W_v`.
    pub fn ab(&self, r: Vec2, v: Vec2) -> Result<ABDecomposition> {
        let fr = frame(v)?;
        let s = v.norm();
        let w = self.w_at(r, s);
        Ok(ABDecomposition {
            a: (self.h.eval(w.w) - w.grad().dot(&v)) / w.w_v,
            b: s * w.grad().dot(&fr.m) / w.w_v,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    pub eps: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

fn random_mdtype_spec(seed: u64) -> (MetricSpec, Perturbation, Profile) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let metric = MetricSpec::SinCos {
        amp: rng.gen_range(-0.4..0.4),
        kx: rng.gen_range(0.5..1.5),
        ky: rng.gen_range(0.5..1.5),
        px: rng.gen_range(-PI..PI),
        py: rng.gen_range(-PI..PI),
    };
    let pert = Perturbation {
        eps: rng.gen_range(0.0..0.1),
        a: rng.gen_range(-1.0..1.0),
        b: rng.gen_range(-1.0..1.0),
        c: rng.gen_range(-1.0..1.0),
        d: rng.gen_range(-PI..PI),
    };
    let h = Profile::Tagged(ProfileKind::Sum {
        terms: vec![
            Profile::Polynomial(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]),
            Profile::Tagged(ProfileKind::Sine { amp: rng.gen_range(-0.5..0.5), freq: 1.0, phase: 0.0 }),
        ],
    });
    (metric, pert, h)
}

pub fn mdtype_field(params: &MDTypeParams) -> ForceField {
    let p = params.clone();
    ForceField::new("mdtype", move |r, v| {
        let s = v.norm();
        if s < geometry::V_MIN {
            return Vec2::repeat(f64::NAN);
        }
        let n = v / s;
        let w = p.w_at(r, s);
        let g = w.grad();
        p.h.eval(w.w) * n / w.w_v - s * (2.0 * g.dot(&n) * n - g) / w.w_v
    })
    .requiring_frame(true)
    .claiming_normality(true)
}

// --- catalogue -------------------------------------------------------------------

/// Conformal factor f of a metric `g = e^{-2f} δ`, as written in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    #[default]
    Flat,
    Constant { c: f64 },
    /// f = a x + b y
    Linear { a: f64, b: f64 },
    /// f = amp sin(kx x + px) cos(ky y + py)
    SinCos {
        amp: f64,
        #[serde(default = "one")]
        kx: f64,
        #[serde(default = "one")]
        ky: f64,
        #[serde(default)]
        px: f64,
        #[serde(default)]
        py: f64,
    },
    /// f = c (x² + y²)
    Quadratic { c: f64 },
}

fn one() -> f64 {
    1.0
}

impl MetricSpec {
    /// f and ∇f at a point.
    pub fn eval(&self, p: Vec2) -> (f64, Vec2) {
        match *self {
            MetricSpec::Flat => (0.0, Vec2::zeros()),
            MetricSpec::Constant { c } => (c, Vec2::zeros()),
            MetricSpec::Linear { a, b } => (a * p.x + b * p.y, Vec2::new(a, b)),
            MetricSpec::SinCos { amp, kx, ky, px, py } => {
                let (sx, cx) = (kx * p.x + px).sin_cos();
                let (sy, cy) = (ky * p.y + py).sin_cos();
                (amp * sx * cy, Vec2::new(amp * kx * cx * cy, -amp * ky * sx * sy))
            }
            MetricSpec::Quadratic { c } => (c * p.norm_squared(), 2.0 * c * p),
        }
    }

    pub fn build(&self) -> ConformalMetric {
        if *self == MetricSpec::Flat {
            return ConformalMetric::euclidean();
        }
        let a = *self;
        let b = *self;
        ConformalMetric::with_gradient(move |p| a.eval(p).0, move |p| b.eval(p).1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GravityParams {
    #[serde(default = "one")]
    g: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OscillatorParams {
    #[serde(default = "one")]
    omega: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpeedProfileParams {
    #[serde(default = "unit_profile")]
    a: Profile,
    #[serde(default)]
    center: [f64; 2],
}

fn unit_profile() -> Profile {
    Profile::Constant(1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricParams {
    #[serde(default)]
    metric: MetricSpec,
    #[serde(default = "zero_profile")]
    h: Profile,
}

fn zero_profile() -> Profile {
    Profile::Constant(0.0)
}

/// How W is given for the multidimensional-type family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WSpec {
    Conformal { #[serde(default)] metric: MetricSpec },
    Perturbed { #[serde(default)] metric: MetricSpec, perturbation: Perturbation },
    Random { seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MDTypeJson {
    w: WSpec,
    #[serde(default)]
    h: Option<Profile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscParams {
    #[serde(default = "one")]
    radius: f64,
    #[serde(default = "zero_profile")]
    g: Profile,
}

impl MDTypeJson {
    fn build(self) -> MDTypeParams {
        match self.w {
            WSpec::Conformal { metric } => {
                MDTypeParams::conformal(metric, self.h.unwrap_or(Profile::Constant(0.0)))
            }
            WSpec::Perturbed { metric, perturbation } => {
                MDTypeParams::perturbed(metric, perturbation, self.h.unwrap_or(Profile::Constant(0.0)))
            }
            WSpec::Random { seed } => {
                let (metric, pert, h) = random_mdtype_spec(seed);
                MDTypeParams::perturbed(metric, pert, self.h.unwrap_or(h))
            }
        }
    }
}

/// One row of the catalogue listing.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogueEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub claims_normality: bool,
    pub example_params: Value,
}

pub fn catalogue_entries() -> Vec<CatalogueEntry> {
    use serde_json::json;
    vec![
        CatalogueEntry {
            name: "zero",
            description: "free motion, F = 0",
            claims_normality: true,
            example_params: json!({}),
        },
        CatalogueEntry {
            name: "gravity",
            description: "homogeneous gravity F = (0, -g)",
            claims_normality: false,
            example_params: json!({"g": 1.0}),
        },
        CatalogueEntry {
            name: "oscillator",
            description: "vertical harmonic oscillator F = (0, -omega^2 y)",
            claims_normality: false,
            example_params: json!({"omega": 1.0}),
        },
        CatalogueEntry {
            name: "anisotropic",
            description: "F = A(|v|)(2<N,m>N - m) with m = (1, 0)",
            claims_normality: true,
            example_params: json!({"a": 1.0}),
        },
        CatalogueEntry {
            name: "marked_point",
            description: "F = A(|v|)(2<N,r>N - r)/|r|^2 about a marked centre",
            claims_normality: true,
            example_params: json!({"a": 1.0, "center": [0.0, 0.0]}),
        },
        CatalogueEntry {
            name: "geodesic",
            description: "geodesic flow of g = exp(-2f) delta, F = -|v|^2 grad f + 2<grad f, v> v",
            claims_normality: true,
            example_params: json!({"metric": {"kind": "sin_cos", "amp": 0.3}}),
        },
        CatalogueEntry {
            name: "metrizable",
            description: "geodesic field plus N H(|v| exp(-f)) exp(f)",
            claims_normality: true,
            example_params: json!({"metric": {"kind": "sin_cos", "amp": 0.3}, "h": [0.0, 1.0]}),
        },
        CatalogueEntry {
            name: "mdtype",
            description: "F = h(W) N / W_v - |v|(2<grad W, N> N - grad W)/W_v",
            claims_normality: true,
            example_params: json!({"w": {"kind": "random", "seed": 1}}),
        },
        CatalogueEntry {
            name: "disc_invariant",
            description: "rotation-invariant scalar ansatz solution on the open disc of radius R",
            claims_normality: true,
            example_params: json!({"radius": 3.0, "g": [0.0, 1.0]}),
        },
    ]
}

fn parse<T: for<'de> Deserialize<'de>>(name: &str, params: &Value) -> Result<T> {
    let params = if params.is_null() { Value::Object(Default::default()) } else { params.clone() };
    serde_json::from_value(params).map_err(|e| Error::InvalidParams(format!("{name}: {e}")))
}

/// Builds a named field from its JSON parameters.
pub fn catalogue(name: &str, params: &Value) -> Result<ForceField> {
    match name {
        "zero" => Ok(ForceField::zero()),
        "gravity" => {
            let p: GravityParams = parse(name, params)?;
            Ok(gravity(p.g))
        }
        "oscillator" => {
            let p: OscillatorParams = parse(name, params)?;
            Ok(oscillator(p.omega))
        }
        "anisotropic" => {
            let p: SpeedProfileParams = parse(name, params)?;
            Ok(anisotropic(p.a))
        }
        "marked_point" => {
            let p: SpeedProfileParams = parse(name, params)?;
            Ok(marked_point(p.a, Vec2::from(p.center)))
        }
        "geodesic" => {
            let p: MetricParams = parse(name, params)?;
            Ok(metrizable(p.metric, None))
        }
        "metrizable" => {
            let p: MetricParams = parse(name, params)?;
            Ok(metrizable(p.metric, Some(p.h)))
        }
        "mdtype" => {
            let p: MDTypeJson = parse(name, params)?;
            let md = p.build();
            md.check_domain(200, 7)?;
            Ok(mdtype_field(&md))
        }
        "disc_invariant" => {
            let p: DiscParams = parse(name, params)?;
            disc_invariant(p.radius, p.g)
        }
        other => Err(Error::UnknownCatalogueEntry(other.to_string())),
    }
}

pub fn gravity(g: f64) -> ForceField {
    ForceField::new("gravity", move |_, _| Vec2::new(0.0, -g))
        .with_jacobians(|_, _| Mat2::zeros(), |_, _| Mat2::zeros())
}

pub fn oscillator(omega: f64) -> ForceField {
    let w2 = omega * omega;
    ForceField::new("oscillator", move |r, _| Vec2::new(0.0, -w2 * r.y))
        .with_jacobians(move |_, _| Mat2::new(0.0, 0.0, 0.0, -w2), |_, _| Mat2::zeros())
}

/// `F = A(|v|)(2⟨N, m⟩ N − m)` with m = (1, 0).
pub fn anisotropic(a: Profile) -> ForceField {
    ForceField::new("anisotropic", move |_, v| {
        let s = v.norm();
        if s < geometry::V_MIN {
            return Vec2::repeat(f64::NAN);
        }
        let n = v / s;
        a.eval(s) * (2.0 * n.x * n - Vec2::new(1.0, 0.0))
    })
    .requiring_frame(true)
    .claiming_normality(true)
}

/// `F = A(|v|)(2⟨N, r⟩ N − r)/|r|²`, r measured from `center`.
pub fn marked_point(a: Profile, center: Vec2) -> ForceField {
    ForceField::new("marked_point", move |r, v| {
        let s = v.norm();
        let d = r - center;
        if s < geometry::V_MIN {
            return Vec2::repeat(f64::NAN);
        }
        let n = v / s;
        a.eval(s) * (2.0 * n.dot(&d) * n - d) / d.norm_squared()
    })
    .requiring_frame(true)
    .claiming_normality(true)
}

/// Geodesic field `−|v|²∇f + 2⟨∇f, v⟩ v`, plus `N H(|v| e^{-f}) e^{f}` when
/// `h` is given.
pub fn metrizable(metric: MetricSpec, h: Option<Profile>) -> ForceField {
    let label = if h.is_some() { "metrizable" } else { "geodesic" };
    let frame_needed = h.is_some();
    ForceField::new(label, move |r, v| {
        let (f, df) = metric.eval(r);
        let mut out = -v.norm_squared() * df + 2.0 * df.dot(&v) * v;
        if let Some(h) = &h {
            let s = v.norm();
            if s < geometry::V_MIN {
                return Vec2::repeat(f64::NAN);
            }
            out += (v / s) * h.eval(s * (-f).exp()) * f.exp();
        }
        out
    })
    .requiring_frame(frame_needed)
    .claiming_normality(true)
}

pub fn disc_invariant(radius: f64, g: Profile) -> Result<ForceField> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParams(format!("disc radius must be positive, got {radius}")));
    }
    let inner = from_scalar_ansatz(&ScalarFieldA::disc_invariant(radius, g));
    let r2 = radius * radius;
    let inside = move |r: Vec2| r2 - r.norm_squared() > 1e-6 * r2;
    let (ev, js, jv) = (inner.clone(), inner.clone(), inner);
    Ok(ForceField::new("disc_invariant", move |r, v| {
        if inside(r) { ev.eval(r, v) } else { Vec2::repeat(f64::NAN) }
    })
    .with_jacobians(
        move |r, v| if inside(r) { js.spatial_jacobian(r, v) } else { Mat2::repeat(f64::NAN) },
        move |r, v| if inside(r) { jv.velocity_jacobian(r, v) } else { Mat2::repeat(f64::NAN) },
    )
    .requiring_frame(true)
    .claiming_normality(true))
}
