//! Reference solutions: gravity shifts, the oscillator deviation, the
//! cycloids of the homogeneous anisotropic field and the quadratures of the
//! marked-point field.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::PhaseState;
use crate::error::{Error, Result};
use crate::fmt_float;
use crate::forces::Profile;
use crate::geometry::Vec2;
use crate::shift::NuFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuVariant {
    /// ν ≡ 1.
    ConstantNu,
    /// ν(s) = (3 − s)/4.
    LinearNu,
}

impl NuVariant {
    pub fn nu(self, s: f64) -> f64 {
        match self {
            NuVariant::ConstantNu => 1.0,
            NuVariant::LinearNu => (3.0 - s) / 4.0,
        }
    }
}

/// Unit gravity shift of the horizontal axis launched downward:
/// `(s, −t²/2 − ν(s) t)`.
pub fn gravity_shift(s: f64, t: f64, variant: NuVariant) -> Vec2 {
    Vec2::new(s, -t * t / 2.0 - variant.nu(s) * t)
}

/// Deviation of the oscillator shift of the tilted line,
/// `νν′t + (νν′/ω − sω) cos ωt sin ωt + (ν + sν′) cos²ωt − (ν + sν′)`.
///
/// This is `2⟨τ, ṙ⟩`, twice the speed times the normal component φ.
pub fn oscillator_phi(nu: &dyn NuFunction, omega: f64, s: f64, t: f64) -> f64 {
    let (n, dn) = (nu.value(s), nu.derivative(s));
    let (sn, cs) = (omega * t).sin_cos();
    n * dn * t + (n * dn / omega - s * omega) * cs * sn + (n + s * dn) * cs * cs - (n + s * dn)
}

// --- cycloids ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycloidParams {
    pub x0: f64,
    pub y0: f64,
    pub theta0: f64,
    pub v0: f64,
    pub a0: f64,
    pub omega: f64,
}

impl CycloidParams {
    pub fn new(x0: f64, y0: f64, theta0: f64, v0: f64, a0: f64) -> Result<Self> {
        if !(theta0 > 0.0 && theta0 < std::f64::consts::PI) {
            return Err(Error::InvalidParams(format!("theta0 = {theta0} must lie in (0, pi)")));
        }
        if !(v0 > 0.0 && a0 > 0.0) || !x0.is_finite() || !y0.is_finite() {
            return Err(Error::InvalidParams("v0 and A0 must be positive, x0 and y0 finite".into()));
        }
        Ok(Self { x0, y0, theta0, v0, a0, omega: a0 * theta0.sin() / v0 })
    }

    /// `[−θ₀/ω, (π − θ₀)/ω]`, where the speed stays non-negative.
    pub fn interval(&self) -> (f64, f64) {
        (-self.theta0 / self.omega, (std::f64::consts::PI - self.theta0) / self.omega)
    }
}

/// State at time t on the cycloid `θ = θ₀ + ωt`, `v = (A₀/ω) sin θ`.
pub fn cycloid(p: &CycloidParams, t: f64) -> Result<PhaseState> {
    let (lo, hi) = p.interval();
    if !(t >= lo && t <= hi) {
        return Err(Error::OutOfInterval { t, lo, hi });
    }
    let w = p.omega;
    let th = p.theta0 + w * t;
    let k = p.a0 / (4.0 * w * w);
    let x = p.x0 - k * ((2.0 * th).cos() - (2.0 * p.theta0).cos());
    let y = p.y0 + p.a0 * t / (2.0 * w) - k * ((2.0 * th).sin() - (2.0 * p.theta0).sin());
    let v = p.a0 / w * th.sin();
    Ok(PhaseState::new(Vec2::new(x, y), v * Vec2::new(th.cos(), th.sin())))
}

// --- marked-point quadratures ------------------------------------------------------------

/// Adaptive Simpson rule with Richardson correction.
pub fn adaptive_simpson(f: &mut dyn FnMut(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (fa, fb) = (f(a)?, f(b)?);
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::SingularQuadrature { theta: m, reason: "non-finite integrand".into() });
    }
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

const QUAD_TOL: f64 = 1e-10;

/// Initial data in polar coordinates about the marked point: position
/// `center + ρ₀(cos γ₀, sin γ₀)`, speed v₀, velocity angle θ₀ measured from e_ρ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkedInit {
    pub rho0: f64,
    pub gamma0: f64,
    pub v0: f64,
    pub theta0: f64,
    #[serde(default)]
    pub center: [f64; 2],
}

impl MarkedInit {
    pub fn state(&self) -> PhaseState {
        let c = Vec2::new(self.center[0], self.center[1]);
        let dir = |a: f64| Vec2::new(a.cos(), a.sin());
        PhaseState::new(c + self.rho0 * dir(self.gamma0), self.v0 * dir(self.gamma0 + self.theta0))
    }
}

/// Cumulative quadratures on a θ-grid: v(θ), ρ(θ), t(θ), γ(θ).
#[derive(Debug, Clone, Serialize)]
pub struct QuadratureTable {
    #[serde(skip)]
    a: Profile,
    pub init: MarkedInit,
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    pub rho: Vec<f64>,
    pub t: Vec<f64>,
    pub gamma: Vec<f64>,
}

fn singular(theta: f64, reason: &str) -> Error {
    Error::SingularQuadrature { theta, reason: reason.into() }
}

/// `(A − u²)/(u A)`, the integrand of the speed relation.
fn speed_integrand(a: &Profile, u: f64) -> Result<f64> {
    let av = a.eval(u);
    if av == 0.0 || !av.is_finite() {
        return Err(singular(f64::NAN, "A(v) vanishes"));
    }
    Ok((av - u * u) / (u * av))
}

fn denominator(a: &Profile, v: f64, theta: f64) -> Result<f64> {
    let d = a.eval(v) - v * v;
    if !(d.abs() > 1e-12) {
        return Err(singular(theta, "A(v) - v^2 vanishes"));
    }
    Ok(d)
}

/// Solves `∫_{va}^{v} (A − u²)/(uA) du = ln|sin θ| − ln|sin θa|` for v.
fn speed_at(a: &Profile, theta_a: f64, va: f64, theta: f64) -> Result<f64> {
    let target = (theta.sin() / theta_a.sin()).abs().ln();
    if target == 0.0 {
        return Ok(va);
    }
    let g0 = speed_integrand(a, va).map_err(|_| singular(theta, "A(v) vanishes"))?;
    if g0 == 0.0 {
        return Err(singular(theta, "A(v) - v^2 vanishes"));
    }
    let h = |v: f64| adaptive_simpson(&mut |u| speed_integrand(a, u), va, v, QUAD_TOL * 1e-2);
    let up = target.signum() == g0.signum();
    // grow a bracket, refusing to step over a root of A − v²
    let mut step = 0.05 * va;
    let far = loop {
        let cand = if up { va + step } else { va * (1.0 - (step / va).min(0.999_999)) };
        let g = speed_integrand(a, cand).map_err(|_| singular(theta, "A(v) vanishes"))?;
        if g.signum() != g0.signum() {
            return Err(singular(theta, "A(v) - v^2 vanishes before the speed relation is met"));
        }
        if h(cand)?.abs() >= target.abs() {
            break cand;
        }
        if step > 1e6 * va || (!up && cand < 1e-12) {
            return Err(singular(theta, "speed relation has no solution"));
        }
        step *= 2.0;
    };
    let (mut lo, mut hi) = if va < far { (va, far) } else { (far, va) };
    let mut v = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = h(v)? - target;
        // H is monotone with the sign of g0
        if (r > 0.0) == (g0 > 0.0) {
            hi = v;
        } else {
            lo = v;
        }
        let newton = v - r / speed_integrand(a, v)?;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - v).abs() <= 1e-15 * v || hi - lo <= 1e-15 * v {
            return Ok(next);
        }
        v = next;
    }
    Ok(v)
}

impl QuadratureTable {
    /// Index of the grid node to anchor at for a given θ.
    fn anchor(&self, theta: f64) -> usize {
        let dir = (self.theta[self.theta.len() - 1] - self.theta[0]).signum();
        let mut k = 0;
        while k + 1 < self.theta.len() && dir * (theta - self.theta[k + 1]) > 0.0 {
            k += 1;
        }
        k
    }

    fn ln_rho_from(&self, k: usize, theta: f64) -> Result<f64> {
        let (ta, va) = (self.theta[k], self.v[k]);
        let a = &self.a;
        let inc = adaptive_simpson(
            &mut |th| {
                let v = speed_at(a, ta, va, th)?;
                Ok(v * v * th.cos() / th.sin() / denominator(a, v, th)?)
            },
            ta,
            theta,
            QUAD_TOL,
        )?;
        Ok(self.rho[k].ln() + inc)
    }

    /// `(v, ρ, t, γ)` at any θ in the grid range.
    pub fn at_theta(&self, theta: f64) -> Result<(f64, f64, f64, f64)> {
        let (lo, hi) = minmax(self.theta[0], self.theta[self.theta.len() - 1]);
        if !(theta >= lo && theta <= hi) {
            return Err(Error::OutOfInterval { t: theta, lo, hi });
        }
        let k = self.anchor(theta);
        let a = &self.a;
        let (ta, va) = (self.theta[k], self.v[k]);
        let v = speed_at(a, ta, va, theta)?;
        let rho = self.ln_rho_from(k, theta)?.exp();
        let t = self.t[k]
            + adaptive_simpson(
                &mut |th| {
                    let v = speed_at(a, ta, va, th)?;
                    let rho = self.ln_rho_from(k, th)?.exp();
                    Ok(rho * v / (denominator(a, v, th)? * th.sin()))
                },
                ta,
                theta,
                QUAD_TOL,
            )?;
        let gamma = self.gamma[k]
            + adaptive_simpson(
                &mut |th| {
                    let v = speed_at(a, ta, va, th)?;
                    Ok(v * v / denominator(a, v, th)?)
                },
                ta,
                theta,
                QUAD_TOL,
            )?;
        Ok((v, rho, t, gamma))
    }

    /// Range of t covered by the table, in increasing order.
    pub fn t_range(&self) -> (f64, f64) {
        minmax(self.t[0], self.t[self.t.len() - 1])
    }

    /// Inverts t(θ) by bisection; t(θ) is monotone on a sign-definite window.
    pub fn theta_at(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.t_range();
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfInterval { t, lo, hi });
        }
        let n = self.t.len();
        let incr = self.t[n - 1] > self.t[0];
        let mut k = 0;
        while k + 2 < n && ((incr && t > self.t[k + 1]) || (!incr && t < self.t[k + 1])) {
            k += 1;
        }
        let (mut a, mut b) = (self.theta[k], self.theta[k + 1]);
        let (ta, tb) = (self.t[k], self.t[k + 1]);
        if t == ta {
            return Ok(a);
        }
        if t == tb {
            return Ok(b);
        }
        let rising = tb > ta;
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            let tm = self.at_theta(m)?.2;
            if (tm < t) == rising {
                a = m;
            } else {
                b = m;
            }
            if (b - a).abs() < 1e-15 {
                break;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Phase state at time t, rebuilt from ρ, γ, v and θ.
    pub fn state_at(&self, t: f64) -> Result<PhaseState> {
        let th = self.theta_at(t)?;
        let (v, rho, _, gamma) = self.at_theta(th)?;
        let c = Vec2::new(self.init.center[0], self.init.center[1]);
        let dir = |a: f64| Vec2::new(a.cos(), a.sin());
        Ok(PhaseState::new(c + rho * dir(gamma), v * dir(gamma + th)))
    }

    /// CSV `theta,v,rho,t,gamma`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta", "v", "rho", "t", "gamma"])?;
        for k in 0..self.theta.len() {
            w.write_record(
                [self.theta[k], self.v[k], self.rho[k], self.t[k], self.gamma[k]].iter().map(|x| fmt_float(*x)),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn minmax(a: f64, b: f64) -> (f64, f64) {
    if a <= b { (a, b) } else { (b, a) }
}

/// Builds the quadrature table for `F = A(v)(2⟨N, r⟩N − r)/|r|²`.
///
/// The grid must start at θ₀, be strictly monotone and stay inside one
/// interval where sin θ has a fixed sign.
pub fn marked_point_quadrature(a: &Profile, init: MarkedInit, theta_grid: &[f64]) -> Result<QuadratureTable> {
    if theta_grid.len() < 2 || theta_grid[0] != init.theta0 {
        return Err(Error::InvalidParams("theta grid needs two or more nodes and must start at theta0".into()));
    }
    if !(init.rho0 > 0.0 && init.v0 > 0.0) {
        return Err(Error::InvalidParams("rho0 and v0 must be positive".into()));
    }
    let dir = (theta_grid[1] - theta_grid[0]).signum();
    for w in theta_grid.windows(2) {
        if !(dir * (w[1] - w[0]) > 0.0) {
            return Err(Error::InvalidParams("theta grid must be strictly monotone".into()));
        }
    }
    let branch = (init.theta0 / std::f64::consts::PI).floor();
    for &th in theta_grid {
        if th.sin() == 0.0 || (th / std::f64::consts::PI).floor() != branch {
            return Err(singular(th, "sin(theta) changes sign or vanishes on the grid"));
        }
    }
    denominator(a, init.v0, init.theta0)?;

    let mut table = QuadratureTable {
        a: a.clone(),
        init,
        theta: vec![init.theta0],
        v: vec![init.v0],
        rho: vec![init.rho0],
        t: vec![0.0],
        gamma: vec![init.gamma0],
    };
    for &th in &theta_grid[1..] {
        let (v, rho, t, gamma) = table.at_theta_extending(th)?;
        table.theta.push(th);
        table.v.push(v);
        table.rho.push(rho);
        table.t.push(t);
        table.gamma.push(gamma);
    }
    Ok(table)
}

impl QuadratureTable {
    /// `at_theta` anchored at the last node, for θ just beyond the table.
    fn at_theta_extending(&self, theta: f64) -> Result<(f64, f64, f64, f64)> {
        let mut grown = self.clone();
        grown.theta.push(theta);
        // placeholders so that range checks pass; the anchor is the old last node
        grown.v.push(f64::NAN);
        grown.rho.push(f64::NAN);
        grown.t.push(f64::NAN);
        grown.gamma.push(f64::NAN);
        grown.at_theta(theta)
    }
}
