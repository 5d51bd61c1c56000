//! Residuals of the normality equations in their weak (αβ and Cartesian),
//! reduced (polar) and complex forms, plus the symmetry-reduced equation for
//! `b = A_θ/A`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_float;
use crate::forces::{ab_decompose, ForceField, ScalarFieldA};
use crate::geometry::{self, check_speed, frame, Vec2, V_MIN};
use crate::ode::{self, IntegratorConfig};

// --- probes ----------------------------------------------------------------------

/// A point of the phase space in polar velocity coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub theta: f64,
}

impl Probe {
    pub fn r(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn velocity(&self) -> Vec2 {
        self.v * Vec2::new(self.theta.cos(), self.theta.sin())
    }
}

/// Box the seeded probes are drawn from; θ covers (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeBox {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub v: (f64, f64),
}

impl Default for ProbeBox {
    fn default() -> Self {
        Self { x: (-2.0, 2.0), y: (-2.0, 2.0), v: (0.5, 3.0) }
    }
}

impl ProbeBox {
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Probe> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |(lo, hi): (f64, f64)| if lo < hi { rng.gen_range(lo..hi) } else { lo };
        (0..n)
            .map(|_| {
                let x = draw(self.x);
                let y = draw(self.y);
                let v = draw(self.v);
                // (−π, π]: reflect the half-open draw
                let theta = -draw((-PI, PI));
                Probe { x, y, v, theta }
            })
            .collect()
    }
}

// --- αβ coefficients -------------------------------------------------------------

/// Frame components of the spatial and velocity gradients of A and B:
/// `∇A = α₁N + α₂M`, `∇̃A = α₃N + α₄M`, `∇B = β₁N + β₂M`, `∇̃B = β₃N + β₄M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ABGradients {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
}

/// Gradients of A and B assembled from the Jacobians of F and the
/// derivatives of the frame, `∂N/∂v = M Mᵀ/|v|`, `∂M/∂v = −N Mᵀ/|v|`.
pub fn ab_gradients(field: &ForceField, r: Vec2, v: Vec2) -> Result<ABGradients> {
    let s = check_speed(v)?;
    let fr = frame(v)?;
    let ab = ab_decompose(field, r, v)?;
    let jx = field.spatial_jacobian(r, v).transpose();
    let jv = field.velocity_jacobian(r, v).transpose();
    let grad_a = jx * fr.n;
    let vgrad_a = jv * fr.n + (ab.b / s) * fr.m;
    let grad_b = jx * fr.m;
    let vgrad_b = jv * fr.m - (ab.a / s) * fr.m;
    Ok(ABGradients {
        alpha1: grad_a.dot(&fr.n),
        alpha2: grad_a.dot(&fr.m),
        alpha3: vgrad_a.dot(&fr.n),
        alpha4: vgrad_a.dot(&fr.m),
        beta1: grad_b.dot(&fr.n),
        beta2: grad_b.dot(&fr.m),
        beta3: vgrad_b.dot(&fr.n),
        beta4: vgrad_b.dot(&fr.m),
    })
}

fn a_of(field: &ForceField, r: Vec2, v: Vec2) -> f64 {
    field.eval(r, v).dot(&(v / v.norm()))
}

fn b_of(field: &ForceField, r: Vec2, v: Vec2) -> f64 {
    field.eval(r, v).dot(&geometry::rot90(v / v.norm()))
}

/// Largest difference between the gradients rebuilt from [`ABGradients`] and
/// direct finite-difference gradients of A(r, v) and B(r, v).
pub fn ab_gradient_mismatch(field: &ForceField, r: Vec2, v: Vec2) -> Result<f64> {
    let g = ab_gradients(field, r, v)?;
    let fr = frame(v)?;
    let pairs = [
        (g.alpha1 * fr.n + g.alpha2 * fr.m, geometry::gradient(|p| a_of(field, p, v), r)),
        (g.alpha3 * fr.n + g.alpha4 * fr.m, geometry::gradient(|w| a_of(field, r, w), v)),
        (g.beta1 * fr.n + g.beta2 * fr.m, geometry::gradient(|p| b_of(field, p, v), r)),
        (g.beta3 * fr.n + g.beta4 * fr.m, geometry::gradient(|w| b_of(field, r, w), v)),
    ];
    Ok(pairs.iter().map(|(a, b)| (a - b).amax()).fold(0.0, f64::max))
}

// --- weak equations --------------------------------------------------------------

/// Both weak residuals, from the αβ coefficients and from the Cartesian
/// vector equations contracted with M (with r2's sign aligned).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakResiduals {
    pub r1: f64,
    pub r2: f64,
    pub r1_cartesian: f64,
    pub r2_cartesian: f64,
}

impl WeakResiduals {
    /// Disagreement between the two evaluations.
    pub fn cartesian_gap(&self) -> f64 {
        (self.r1 - self.r1_cartesian).abs().max((self.r2 - self.r2_cartesian).abs())
    }
}

/// `r1 = α₄ + B/|v|`, `r2 = BA/|v|² − β₁ − β₃A/|v| − β₄B/|v| − α₂ + α₃B/|v|`.
pub fn weak_residuals(field: &ForceField, r: Vec2, v: Vec2) -> Result<WeakResiduals> {
    let s = check_speed(v)?;
    let fr = frame(v)?;
    let ab = ab_decompose(field, r, v)?;
    let g = ab_gradients(field, r, v)?;
    let (a, b) = (ab.a, ab.b);
    let r1 = g.alpha4 + b / s;
    let r2 = b * a / (s * s) - g.beta1 - g.beta3 * a / s - g.beta4 * b / s - g.alpha2 + g.alpha3 * b / s;

    // Cartesian forms, from finite-difference Jacobians only
    let f = field.eval(r, v);
    let (jx, jv) = field.coarse_jacobians(r, v);
    let vgrad_nf = geometry::gradient(|w| a_of(field, r, w), v);
    let r1_cartesian = (f / s + vgrad_nf).dot(&fr.m);
    let (n, m) = (fr.n, fr.m);
    let mut sym = 0.0;
    let mut transport = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            sym += (jx[(j, i)] + jx[(i, j)] - 2.0 * f[i] * f[j] / (s * s)) * n[j] * m[i];
            transport += f[j] * jv[(i, j)] / s * m[i];
            for k in 0..2 {
                transport -= n[k] * n[j] * jv[(k, j)] * f[i] / s * m[i];
            }
        }
    }
    Ok(WeakResiduals { r1, r2, r1_cartesian, r2_cartesian: -(sym + transport) })
}

// --- reduced equation ------------------------------------------------------------

/// Polar form of the reduced equation for the scalar ansatz, with the fixed
/// frame m = (1, 0):
/// `(A_y − A_θx)cosθ − (A_x + A_θy)sinθ + AA_θ/v² + A_θA_θθ/v² + A_θA_v/v − AA_θv/v`.
pub fn reduced_residual(a: &ScalarFieldA, x: f64, y: f64, v: f64, theta: f64) -> Result<f64> {
    if !(v >= V_MIN) {
        return Err(Error::DegenerateVelocity { speed: v });
    }
    let p = a.partials(x, y, v, theta);
    p.check_finite()?;
    let (c, s) = (theta.cos(), theta.sin());
    Ok((p.a_y - p.a_thx) * c - (p.a_x + p.a_thy) * s
        + p.a * p.a_th / (v * v)
        + p.a_th * p.a_thth / (v * v)
        + p.a_th * p.a_v / v
        - p.a * p.a_thv / v)
}

/// Residual for the family `A = a(v, θ − γ)/ρ`:
/// `aa_θ/v² + a_θa_θθ/v² + a_θa_v/v + (a + a_θθ) sinθ − aa_θv/v`.
/// The x, y arguments of `a` are ignored. The reduced residual of the
/// family at polar position (ρ, γ) equals this at (v, θ − γ), divided by ρ².
pub fn angular_reduced_residual(a: &ScalarFieldA, v: f64, theta: f64) -> Result<f64> {
    if !(v >= V_MIN) {
        return Err(Error::DegenerateVelocity { speed: v });
    }
    let p = a.partials(0.0, 0.0, v, theta);
    p.check_finite()?;
    Ok(p.a * p.a_th / (v * v) + p.a_th * p.a_thth / (v * v) + p.a_th * p.a_v / v
        + (p.a + p.a_thth) * theta.sin()
        - p.a * p.a_thv / v)
}

/// Complex form of the reduced equation in `z = x + iy`, `w = v e^{iθ}`:
/// `D⁻A (D⁻D⁻ − D⁺)A − |w| D⁻_z A + A (D⁺ − 1) D⁻A + |w| D⁺_z D⁻A`
/// with `D^± = w∂_w ± w̄∂_w̄` and `D^±_z = w∂_z ± w̄∂_z̄`.
///
/// It equals `i v²` times [`reduced_residual`].
pub fn complex_residual(a: &ScalarFieldA, z: Complex64, w: Complex64) -> Result<Complex64> {
    let s = w.norm();
    if !(s >= V_MIN) {
        return Err(Error::DegenerateVelocity { speed: s });
    }
    let th = w.arg();
    let p = a.partials(z.re, z.im, s, th);
    p.check_finite()?;
    let i = Complex64::i();
    let (c, sn) = (th.cos(), th.sin());
    // D⁻ = −i∂_θ, D⁺ = v∂_v
    let dm = -i * p.a_th;
    let dmdm_minus_dp = Complex64::from(-p.a_thth - s * p.a_v);
    let dz_minus = i * s * (sn * p.a_x - c * p.a_y);
    let dp_minus_one_dm = -i * (s * p.a_thv - p.a_th);
    let dz_plus_dm = -i * s * (c * p.a_thx + sn * p.a_thy);
    Ok(dm * dmdm_minus_dp - s * dz_minus + p.a * dp_minus_one_dm + s * dz_plus_dm)
}

/// The scalar `A(x, y, v, θ) = ⟨F, N⟩` read off a force field. For fields of
/// the scalar ansatz this recovers the generating function.
pub fn scalar_of_field(field: &ForceField) -> ScalarFieldA {
    let f = field.clone();
    ScalarFieldA::new(format!("scalar:{}", field.label()), move |x, y, v, th| {
        let u = Vec2::new(th.cos(), th.sin());
        f.eval(Vec2::new(x, y), v * u).dot(&u)
    })
}

// --- symmetry-reduced equation for b = A_θ/A -----------------------------------------

/// `b b_θ − v b_v + b³ + b` from given values.
pub fn reduction_b_residual(b: f64, b_v: f64, b_theta: f64, v: f64) -> f64 {
    b * b_theta - v * b_v + b * b * b + b
}

/// Same, with the partials of `b(v, θ)` taken by finite differences.
pub fn reduction_b_residual_fd(b: impl Fn(f64, f64) -> f64, v: f64, theta: f64) -> f64 {
    let bv = geometry::derivative(|s| b(s, theta), v);
    let bt = geometry::derivative(|t| b(v, t), theta);
    reduction_b_residual(b(v, theta), bv, bt, v)
}

/// `I₁ = θ + arctan b`, `I₂ = u b/(v √(1 + b²))`.
pub fn first_integrals(v: f64, theta: f64, b: f64, u: f64) -> (f64, f64) {
    (theta + b.atan(), u * b / (v * (1.0 + b * b).sqrt()))
}

/// Value and partials `(b, b_v, b_θ)` of the explicit solution
/// `b = (v² sin2θ + 2vu cosθ + v S)/(4uv sinθ + 2u² − v² cos2θ)` with
/// `S = √(v² + 4uv sinθ + 2u²)`.
pub fn b_closed_form_partials(v: f64, theta: f64, u: f64) -> Result<(f64, f64, f64)> {
    if !(v >= V_MIN) {
        return Err(Error::DegenerateVelocity { speed: v });
    }
    let (s1, c1) = theta.sin_cos();
    let (s2, c2) = (2.0 * theta).sin_cos();
    let root_arg = v * v + 4.0 * u * v * s1 + 2.0 * u * u;
    let den = 4.0 * u * v * s1 + 2.0 * u * u - v * v * c2;
    if !(root_arg > 0.0) || !(den.abs() > 1e-12 * (1.0 + v * v + u * u)) {
        return Err(Error::SingularDenominator { v, theta });
    }
    let sq = root_arg.sqrt();
    let num = v * v * s2 + 2.0 * v * u * c1 + v * sq;
    let num_v = 2.0 * v * s2 + 2.0 * u * c1 + sq + v * (v + 2.0 * u * s1) / sq;
    let num_t = 2.0 * v * v * c2 - 2.0 * v * u * s1 + v * (2.0 * u * v * c1) / sq;
    let den_v = 4.0 * u * s1 - 2.0 * v * c2;
    let den_t = 4.0 * u * v * c1 + 2.0 * v * v * s2;
    let b = num / den;
    Ok((b, (num_v - b * den_v) / den, (num_t - b * den_t) / den))
}

pub fn b_closed_form(v: f64, theta: f64, u: f64) -> Result<f64> {
    b_closed_form_partials(v, theta, u).map(|p| p.0)
}

/// Characteristics of the b-equation, `v̇ = −v`, `θ̇ = b`, `ḃ = −b³ − b`,
/// sampled at `times` (starting from t = 0).
pub fn integrate_characteristics(start: [f64; 3], times: &[f64], cfg: &IntegratorConfig) -> Result<Vec<[f64; 3]>> {
    let rhs = |_: f64, y: &[f64; 3]| Ok([-y[0], y[2], -y[2] * y[2] * y[2] - y[2]]);
    let sol = ode::solve(rhs, 0.0, start, times, cfg)?;
    Ok(sol.at_stops().map(|(_, y)| *y).collect())
}

// --- sweeps ---------------------------------------------------------------------

/// Residuals at one probe. `r_reduced` uses the supplied scalar function when
/// there is one; `r_polar` always uses the scalar read off the force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    pub probe: Probe,
    pub r1: f64,
    pub r2: f64,
    pub r_reduced: f64,
    pub r_polar: f64,
    pub r_complex: Option<(f64, f64)>,
}

pub fn residual_report(field: &ForceField, scalar: Option<&ScalarFieldA>, probe: Probe) -> Result<ResidualReport> {
    let weak = weak_residuals(field, probe.r(), probe.velocity())?;
    let from_field = scalar_of_field(field);
    let r_polar = reduced_residual(&from_field, probe.x, probe.y, probe.v, probe.theta)?;
    let (r_reduced, r_complex) = match scalar {
        Some(a) => {
            let z = Complex64::new(probe.x, probe.y);
            let w = Complex64::from_polar(probe.v, probe.theta);
            let c = complex_residual(a, z, w)?;
            (reduced_residual(a, probe.x, probe.y, probe.v, probe.theta)?, Some((c.re, c.im)))
        }
        None => (r_polar, None),
    };
    Ok(ResidualReport { probe, r1: weak.r1, r2: weak.r2, r_reduced, r_polar, r_complex })
}

/// Evaluates every probe in parallel; the output keeps the probe order.
pub fn residual_sweep(field: &ForceField, scalar: Option<&ScalarFieldA>, probes: &[Probe]) -> Result<Vec<ResidualReport>> {
    probes.par_iter().map(|p| residual_report(field, scalar, *p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Norms {
    pub max: f64,
    pub mean: f64,
}

fn norms(xs: impl Iterator<Item = f64>) -> Norms {
    let (mut max, mut sum, mut n) = (0.0f64, 0.0, 0usize);
    for x in xs {
        max = max.max(x.abs());
        sum += x.abs();
        n += 1;
    }
    Norms { max, mean: if n == 0 { 0.0 } else { sum / n as f64 } }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub probes: usize,
    pub r1: Norms,
    pub r2: Norms,
    pub r_reduced: Norms,
    pub r_polar: Norms,
    pub r_complex: Option<Norms>,
}

pub fn summarize(reports: &[ResidualReport]) -> SweepSummary {
    let has_complex = reports.iter().all(|r| r.r_complex.is_some()) && !reports.is_empty();
    SweepSummary {
        probes: reports.len(),
        r1: norms(reports.iter().map(|r| r.r1)),
        r2: norms(reports.iter().map(|r| r.r2)),
        r_reduced: norms(reports.iter().map(|r| r.r_reduced)),
        r_polar: norms(reports.iter().map(|r| r.r_polar)),
        r_complex: has_complex.then(|| norms(reports.iter().filter_map(|r| r.r_complex.map(|(a, b)| a.hypot(b))))),
    }
}

/// CSV `x,y,v,theta,r1,r2,r_reduced[,re_rc,im_rc]`.
pub fn write_sweep_csv<W: Write>(reports: &[ResidualReport], out: W) -> csv::Result<()> {
    let complex = reports.iter().all(|r| r.r_complex.is_some()) && !reports.is_empty();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x", "y", "v", "theta", "r1", "r2", "r_reduced"];
    if complex {
        header.extend(["re_rc", "im_rc"]);
    }
    w.write_record(&header)?;
    for r in reports {
        let p = r.probe;
        let mut row: Vec<String> =
            [p.x, p.y, p.v, p.theta, r.r1, r.r2, r.r_reduced].iter().map(|x| fmt_float(*x)).collect();
        if let (true, Some((re, im))) = (complex, r.r_complex) {
            row.push(fmt_float(re));
            row.push(fmt_float(im));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
