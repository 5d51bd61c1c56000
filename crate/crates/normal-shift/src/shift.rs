//! Shifting a curve along the trajectories launched from it with initial
//! velocity `ν(s) n(s)`, and measuring how far the shift is from normal.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_with_deviation, DeviationState, PhaseState};
use crate::error::{Error, Result};
use crate::fmt_float;
use crate::forces::{ab_decompose, ForceField};
use crate::geometry::{frame, rot90, rot_minus90, ConformalMetric, Vec2};
use crate::ode::{self, IntegratorConfig};

/// Which side of the tangent the launch normal points to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// n is the unit tangent rotated by −90°, so M(0) = +T.
    #[default]
    Right,
    /// n is the unit tangent rotated by +90°.
    Left,
}

pub type CurveFn = Arc<dyn Fn(f64) -> Vec2 + Send + Sync>;

/// Regular parametrized curve with first and second derivatives.
#[derive(Clone)]
pub struct Curve {
    r: CurveFn,
    dr: CurveFn,
    ddr: CurveFn,
    pub s_range: (f64, f64),
    pub orientation: Orientation,
}

impl fmt::Debug for Curve {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.debug_struct("Curve")
            .field("s_range", &self.s_range)
            .field("orientation", &self.orientation)
            .finish()
    }
}

impl Curve {
    pub fn new(
        r: impl Fn(f64) -> Vec2 + Send + Sync + 'static,
        dr: impl Fn(f64) -> Vec2 + Send + Sync + 'static,
        ddr: impl Fn(f64) -> Vec2 + Send + Sync + 'static,
        s_range: (f64, f64),
        orientation: Orientation,
    ) -> Self {
        Self { r: Arc::new(r), dr: Arc::new(dr), ddr: Arc::new(ddr), s_range, orientation }
    }

    /// `r(s) = p0 + s·dir`.
    pub fn line(p0: Vec2, dir: Vec2, s_range: (f64, f64), orientation: Orientation) -> Self {
        Self::new(move |s| p0 + s * dir, move |_| dir, |_| Vec2::zeros(), s_range, orientation)
    }

    /// Counter-clockwise circle parametrized by arclength.
    pub fn circle(center: Vec2, radius: f64, s_range: (f64, f64), orientation: Orientation) -> Self {
        Self::new(
            move |s| center + radius * Vec2::new((s / radius).cos(), (s / radius).sin()),
            move |s| Vec2::new(-(s / radius).sin(), (s / radius).cos()),
            move |s| -Vec2::new((s / radius).cos(), (s / radius).sin()) / radius,
            s_range,
            orientation,
        )
    }

    /// Natural cubic spline through `points` at uniform parameter values in [0, 1].
    pub fn spline(points: &[Vec2], orientation: Orientation) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidParams("a spline needs at least three points".into()));
        }
        let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
        let sx = Arc::new(CubicSpline::natural(&xs));
        let sy = Arc::new(CubicSpline::natural(&ys));
        let (ax, ay) = (sx.clone(), sy.clone());
        let (bx, by) = (sx.clone(), sy.clone());
        Ok(Self::new(
            move |s| Vec2::new(ax.eval(s).0, ay.eval(s).0),
            move |s| Vec2::new(bx.eval(s).1, by.eval(s).1),
            move |s| Vec2::new(sx.eval(s).2, sy.eval(s).2),
            (0.0, 1.0),
            orientation,
        ))
    }

    pub fn restrict(&self, s_lo: f64, s_hi: f64) -> Self {
        Self { s_range: (s_lo, s_hi), ..self.clone() }
    }

    pub fn point(&self, s: f64) -> Vec2 {
        (self.r)(s)
    }

    pub fn derivative(&self, s: f64) -> Vec2 {
        (self.dr)(s)
    }

    pub fn second_derivative(&self, s: f64) -> Vec2 {
        (self.ddr)(s)
    }

    /// Launch normal for a given unit tangent.
    pub fn normal_for(&self, tangent: Vec2) -> Vec2 {
        match self.orientation {
            Orientation::Right => rot_minus90(tangent),
            Orientation::Left => rot90(tangent),
        }
    }
}

/// Natural cubic spline on uniform knots `k/(n−1)`.
#[derive(Debug, Clone)]
struct CubicSpline {
    y: Vec<f64>,
    m: Vec<f64>,
    h: f64,
}

impl CubicSpline {
    fn natural(y: &[f64]) -> Self {
        let n = y.len();
        let h = 1.0 / (n - 1) as f64;
        // tridiagonal system for the interior second derivatives
        let mut m = vec![0.0; n];
        let k = n - 2;
        let mut diag = vec![4.0; k];
        let mut rhs: Vec<f64> = (1..n - 1).map(|i| 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h)).collect();
        for i in 1..k {
            let w = 1.0 / diag[i - 1];
            diag[i] -= w;
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (0..k).rev() {
            let upper = if i + 1 < k { m[i + 2] } else { 0.0 };
            m[i + 1] = (rhs[i] - upper) / diag[i];
        }
        Self { y: y.to_vec(), m, h }
    }

    /// Value, first and second derivative.
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        let n = self.y.len();
        let i = ((s / self.h).floor() as isize).clamp(0, n as isize - 2) as usize;
        let h = self.h;
        let a = (i as f64 + 1.0) * h - s;
        let b = s - i as f64 * h;
        let (m0, m1, y0, y1) = (self.m[i], self.m[i + 1], self.y[i], self.y[i + 1]);
        let val = m0 * a.powi(3) / (6.0 * h) + m1 * b.powi(3) / (6.0 * h)
            + (y0 / h - m0 * h / 6.0) * a
            + (y1 / h - m1 * h / 6.0) * b;
        let d1 = -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) - (y0 / h - m0 * h / 6.0)
            + (y1 / h - m1 * h / 6.0);
        let d2 = (m0 * a + m1 * b) / h;
        (val, d1, d2)
    }
}

/// Unit tangent, launch normal and signed curvature `k = ⟨r″, n⟩/|r′|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frenet {
    pub tangent: Vec2,
    pub normal: Vec2,
    pub curvature: f64,
    pub speed: f64,
}

pub fn frenet(curve: &Curve, s: f64) -> Result<Frenet> {
    let d = curve.derivative(s);
    let speed = d.norm();
    if !(speed >= 1e-12) {
        return Err(Error::SingularCurve { s });
    }
    let tangent = d / speed;
    let normal = curve.normal_for(tangent);
    let curvature = curve.second_derivative(s).dot(&normal) / (speed * speed);
    Ok(Frenet { tangent, normal, curvature, speed })
}

// --- modulus of the launch velocity ------------------------------------------------

/// ν(s) and its derivative.
pub trait NuFunction: Send + Sync {
    fn value(&self, s: f64) -> f64;
    fn derivative(&self, s: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantNu(pub f64);

impl NuFunction for ConstantNu {
    fn value(&self, _: f64) -> f64 {
        self.0
    }
    fn derivative(&self, _: f64) -> f64 {
        0.0
    }
}

/// `ν(s) = a + b s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearNu {
    pub a: f64,
    pub b: f64,
}

impl NuFunction for LinearNu {
    fn value(&self, s: f64) -> f64 {
        self.a + self.b * s
    }
    fn derivative(&self, _: f64) -> f64 {
        self.b
    }
}

/// `dν/ds = −⟨r′, rot90(n)⟩ B(r, ν n)/|ν|`, which makes φ̇ vanish at t = 0.
/// For an arclength curve with right orientation this is `−B/ν`.
pub fn nu_rhs(curve: &Curve, field: &ForceField, s: f64, nu: f64) -> Result<f64> {
    let fr = frenet(curve, s)?;
    let r = curve.point(s);
    let ab = ab_decompose(field, r, nu * fr.normal)?;
    let psi0 = curve.derivative(s).dot(&rot90(fr.normal));
    Ok(-psi0 * ab.b / nu.abs())
}

/// Numerical solution of the modulus equation, Hermite-interpolated between
/// nodes; its derivative is the right-hand side itself.
#[derive(Clone)]
pub struct NuProfile {
    curve: Curve,
    field: ForceField,
    nodes: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl fmt::Debug for NuProfile {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.debug_struct("NuProfile").field("s_range", &self.s_range()).field("nodes", &self.nodes.len()).finish()
    }
}

impl NuProfile {
    pub fn s_range(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

impl NuFunction for NuProfile {
    fn value(&self, s: f64) -> f64 {
        let Some(i) = ode::locate(&self.nodes, s) else { return f64::NAN };
        if s == self.nodes[i] {
            return self.values[i];
        }
        ode::hermite(
            self.nodes[i],
            &[self.values[i]],
            &[self.slopes[i]],
            self.nodes[i + 1],
            &[self.values[i + 1]],
            &[self.slopes[i + 1]],
            s,
        )[0]
    }

    fn derivative(&self, s: f64) -> f64 {
        nu_rhs(&self.curve, &self.field, s, self.value(s)).unwrap_or(f64::NAN)
    }
}

/// Number of pieces used on each side of `s0` when solving for ν.
const NU_PIECES: usize = 256;

/// Solves the modulus equation from `ν(s0) = nu0` over `s_range`.
///
/// Fails with [`Error::NuBlowup`] carrying the largest interval around `s0`
/// on which the solution was obtained.
pub fn solve_nu(curve: &Curve, field: &ForceField, s0: f64, nu0: f64, s_range: (f64, f64)) -> Result<NuProfile> {
    if nu0 == 0.0 || !nu0.is_finite() {
        return Err(Error::InvalidParams("nu0 must be finite and non-zero".into()));
    }
    let (lo, hi) = s_range;
    if !(lo <= s0 && s0 <= hi) {
        return Err(Error::InvalidParams(format!("s0 = {s0} lies outside [{lo}, {hi}]")));
    }
    let cfg = IntegratorConfig::dopri(1e-12, 1e-12);
    let sweep = |end: f64| -> (Vec<(f64, f64)>, Option<String>) {
        let mut out = vec![(s0, nu0)];
        if end == s0 {
            return (out, None);
        }
        let mut cur = (s0, nu0);
        for k in 1..=NU_PIECES {
            let s_next = if k == NU_PIECES { end } else { s0 + (end - s0) * k as f64 / NU_PIECES as f64 };
            let rhs = |s: f64, y: &[f64; 1]| {
                if y[0].abs() < 1e-9 || y[0].signum() != nu0.signum() {
                    return Err(Error::StepFailure { t: s, reason: "nu reached zero".into() });
                }
                Ok([nu_rhs(curve, field, s, y[0])?])
            };
            match ode::solve(rhs, cur.0, [cur.1], &[s_next], &cfg) {
                Ok(sol) => {
                    let y = sol.y[sol.y.len() - 1][0];
                    cur = (s_next, y);
                    out.push(cur);
                }
                Err(e) => return (out, Some(e.to_string())),
            }
        }
        (out, None)
    };
    let (mut left, left_err) = sweep(lo);
    let (right, right_err) = sweep(hi);
    if left_err.is_some() || right_err.is_some() {
        return Err(Error::NuBlowup {
            s_lo: left[left.len() - 1].0,
            s_hi: right[right.len() - 1].0,
            reason: left_err.or(right_err).unwrap_or_default(),
        });
    }
    left.reverse();
    left.pop();
    left.extend(right);
    let nodes: Vec<f64> = left.iter().map(|p| p.0).collect();
    let values: Vec<f64> = left.iter().map(|p| p.1).collect();
    let slopes = nodes
        .iter()
        .zip(&values)
        .map(|(&s, &v)| nu_rhs(curve, field, s, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(NuProfile { curve: curve.clone(), field: field.clone(), nodes, values, slopes })
}

// --- the shift grid ------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_s: usize,
    pub n_t: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_s: 64, n_t: 100 }
    }
}

fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
}

/// Trajectories of the shift sampled on a (t, s) grid; matrices are indexed `[t][s]`.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftGrid {
    pub s_nodes: Vec<f64>,
    pub t_nodes: Vec<f64>,
    pub nu: Vec<f64>,
    pub nu_dot: Vec<f64>,
    pub states: Vec<Vec<PhaseState>>,
    pub tau: Vec<Vec<Vec2>>,
    pub tau_dot: Vec<Vec<Vec2>>,
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
}

/// Cauchy data at one s-node: `r(s)`, `v = ν n_g` with n_g the metric-unit
/// normal, `τ₀ = r′` and `τ̇₀ = d(ν n_g)/ds`.
pub fn launch_data(
    curve: &Curve,
    metric: &ConformalMetric,
    nu: &dyn NuFunction,
    s: f64,
) -> Result<(PhaseState, Vec2, Vec2)> {
    let fr = frenet(curve, s)?;
    let r = curve.point(s);
    let dr = curve.derivative(s);
    let (nu_s, dnu) = (nu.value(s), nu.derivative(s));
    let (scale, dscale) = if metric.is_flat() {
        (1.0, 0.0)
    } else {
        let e = metric.f(r).exp();
        (e, e * metric.grad_f(r).dot(&dr))
    };
    // n′ = −k |r′| T
    let dn = -fr.curvature * fr.speed * fr.tangent;
    let v0 = nu_s * scale * fr.normal;
    let tau_dot = (dnu * scale + nu_s * dscale) * fr.normal + nu_s * scale * dn;
    Ok((PhaseState::new(r, v0), dr, tau_dot))
}

/// Integrates the shift of `curve` on a uniform grid over its s-range.
pub fn normal_shift(
    curve: &Curve,
    field: &ForceField,
    metric: &ConformalMetric,
    nu: &dyn NuFunction,
    t_span: (f64, f64),
    grid: GridSpec,
    cfg: &IntegratorConfig,
) -> Result<ShiftGrid> {
    if grid.n_s == 0 || grid.n_t < 2 {
        return Err(Error::InvalidParams("grid needs n_s >= 1 and n_t >= 2".into()));
    }
    let s_nodes = uniform(curve.s_range.0, curve.s_range.1, grid.n_s);
    let t_nodes = uniform(t_span.0, t_span.1, grid.n_t);
    let columns: Vec<Result<(Vec<PhaseState>, Vec<DeviationState>)>> = s_nodes
        .par_iter()
        .map(|&s| {
            let run = || {
                let (init, tau0, tau_dot0) = launch_data(curve, metric, nu, s)?;
                integrate_with_deviation(field, metric, init, tau0, tau_dot0, &t_nodes, cfg)
            };
            run().map_err(|e| Error::ShiftFailure { s, source: Box::new(e) })
        })
        .collect();
    let nt = t_nodes.len();
    let ns = s_nodes.len();
    let mut out = ShiftGrid {
        nu: s_nodes.iter().map(|&s| nu.value(s)).collect(),
        nu_dot: s_nodes.iter().map(|&s| nu.derivative(s)).collect(),
        states: vec![Vec::with_capacity(ns); nt],
        tau: vec![Vec::with_capacity(ns); nt],
        tau_dot: vec![Vec::with_capacity(ns); nt],
        phi: vec![Vec::with_capacity(ns); nt],
        psi: vec![Vec::with_capacity(ns); nt],
        s_nodes,
        t_nodes,
    };
    for col in columns {
        let (states, devs) = col?;
        for (k, (st, d)) in states.into_iter().zip(devs).enumerate() {
            out.states[k].push(st);
            out.tau[k].push(d.tau);
            out.tau_dot[k].push(d.tau_dot);
            out.phi[k].push(d.phi);
            out.psi[k].push(d.psi);
        }
    }
    Ok(out)
}

impl ShiftGrid {
    pub fn max_abs_phi(&self) -> f64 {
        self.phi.iter().flatten().fold(0.0, |m: f64, x| m.max(x.abs()))
    }

    pub fn max_abs_phi_at(&self, t_index: usize) -> f64 {
        self.phi[t_index].iter().fold(0.0, |m: f64, x| m.max(x.abs()))
    }

    /// `(φ̇, ψ̇)` at t = 0 for each s-node, from `τ̇ = (φ̇ − (B/v)ψ) N + (ψ̇ + (B/v)φ) M`
    /// (flat metric).
    pub fn initial_rates(&self, field: &ForceField) -> Result<Vec<(f64, f64)>> {
        (0..self.s_nodes.len())
            .map(|j| {
                let st = self.states[0][j];
                let fr = frame(st.v)?;
                let bv = ab_decompose(field, st.r, st.v)?.b / st.v.norm();
                let td = self.tau_dot[0][j];
                Ok((td.dot(&fr.n) + bv * self.psi[0][j], td.dot(&fr.m) - bv * self.phi[0][j]))
            })
            .collect()
    }

    /// Long-format CSV `t,s,x,y,vx,vy,phi,psi,nu`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "s", "x", "y", "vx", "vy", "phi", "psi", "nu"])?;
        for (k, &t) in self.t_nodes.iter().enumerate() {
            for (j, &s) in self.s_nodes.iter().enumerate() {
                let st = &self.states[k][j];
                w.write_record([
                    fmt_float(t),
                    fmt_float(s),
                    fmt_float(st.r.x),
                    fmt_float(st.r.y),
                    fmt_float(st.v.x),
                    fmt_float(st.v.y),
                    fmt_float(self.phi[k][j]),
                    fmt_float(self.psi[k][j]),
                    fmt_float(self.nu[j]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Summary of a shift grid. The verdict is "normal" iff `max|φ| < phi_tol`
/// with `phi_tol = 1e-6 (1 + max|τ|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub max_abs_phi: f64,
    pub max_abs_phi_final: f64,
    pub max_angle_deviation_deg: f64,
    pub max_tau: f64,
    pub phi_tol: f64,
    pub nu: Vec<f64>,
    pub normal: bool,
}

pub fn normality_report(grid: &ShiftGrid) -> NormalityReport {
    let max_tau = grid.tau.iter().flatten().fold(0.0, |m: f64, t| m.max(t.norm()));
    let mut angle: f64 = 0.0;
    for (row_s, row_t) in grid.states.iter().zip(&grid.tau) {
        for (st, tau) in row_s.iter().zip(row_t) {
            let (a, b) = (tau.norm(), st.v.norm());
            if a > 1e-12 && b > 1e-12 {
                let c = (tau.dot(&st.v) / (a * b)).abs().min(1.0);
                angle = angle.max(c.asin().to_degrees());
            }
        }
    }
    let max_abs_phi = grid.max_abs_phi();
    let phi_tol = 1e-6 * (1.0 + max_tau);
    NormalityReport {
        max_abs_phi,
        max_abs_phi_final: grid.max_abs_phi_at(grid.t_nodes.len() - 1),
        max_angle_deviation_deg: angle,
        max_tau,
        phi_tol,
        nu: grid.nu.clone(),
        normal: max_abs_phi < phi_tol,
    }
}
