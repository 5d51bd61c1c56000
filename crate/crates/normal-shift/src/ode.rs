//! Explicit Runge-Kutta integration of `y' = f(t, y)` for small fixed-size
//! states: the Dormand-Prince 5(4) pair with step-size control and the
//! classical fixed-step RK4.
//!
//! Output is requested through a list of stop times that the stepper lands
//! on exactly. Integration may run backwards in time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Rk4 { step: f64 },
    Dopri { abs_tol: f64, rel_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_max_steps() -> usize {
    1_000_000
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::dopri(1e-10, 1e-10)
    }
}

impl IntegratorConfig {
    pub fn dopri(abs_tol: f64, rel_tol: f64) -> Self {
        Self { method: Method::Dopri { abs_tol, rel_tol }, max_steps: default_max_steps() }
    }

    pub fn rk4(step: f64) -> Self {
        Self { method: Method::Rk4 { step }, max_steps: default_max_steps() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4 { step } => step > 0.0 && step.is_finite(),
            Method::Dopri { abs_tol, rel_tol } => abs_tol > 0.0 && rel_tol > 0.0,
        };
        if ok && self.max_steps > 0 {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("bad integrator settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Accepted nodes of a solve, with the derivative at each node for Hermite
/// interpolation. `stops[k]` is the node index of the k-th requested time.
#[derive(Debug, Clone)]
pub struct OdeSolution<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub dy: Vec<[f64; N]>,
    pub stops: Vec<usize>,
    pub stats: IntegrationStats,
}

impl<const N: usize> OdeSolution<N> {
    /// Cubic Hermite interpolation; exact at the nodes.
    pub fn interpolate(&self, t: f64) -> Option<[f64; N]> {
        let i = locate(&self.t, t)?;
        if t == self.t[i] {
            return Some(self.y[i]);
        }
        let j = i + 1;
        Some(hermite(self.t[i], &self.y[i], &self.dy[i], self.t[j], &self.y[j], &self.dy[j], t))
    }

    pub fn at_stops(&self) -> impl Iterator<Item = (f64, &[f64; N])> + '_ {
        self.stops.iter().map(move |&k| (self.t[k], &self.y[k]))
    }
}

/// Index i with t between nodes i and i+1 (or equal to node i), for nodes
/// monotone in either direction.
pub(crate) fn locate(ts: &[f64], t: f64) -> Option<usize> {
    let n = ts.len();
    if n == 0 {
        return None;
    }
    if n == 1 {
        return (t == ts[0]).then_some(0);
    }
    let sign = if ts[n - 1] >= ts[0] { 1.0 } else { -1.0 };
    let key = sign * t;
    if key < sign * ts[0] || key > sign * ts[n - 1] {
        return None;
    }
    let idx = ts.partition_point(|&x| sign * x <= key);
    Some(idx.saturating_sub(1).min(n - 2))
}

pub(crate) fn hermite<const N: usize>(
    t0: f64,
    y0: &[f64; N],
    d0: &[f64; N],
    t1: f64,
    y1: &[f64; N],
    d1: &[f64; N],
    t: f64,
) -> [f64; N] {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    let mut out = [0.0; N];
    for k in 0..N {
        out[k] = h00 * y0[k] + h10 * h * d0[k] + h01 * y1[k] + h11 * h * d1[k];
    }
    out
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c != 0.0 {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

fn finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|x| x.is_finite())
}

/// Integrates from `(t0, y0)` through every time in `stops`, which must be
/// strictly monotone and on one side of `t0`.
pub fn solve<const N: usize, F>(
    mut rhs: F,
    t0: f64,
    y0: [f64; N],
    stops: &[f64],
    cfg: &IntegratorConfig,
) -> Result<OdeSolution<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    cfg.validate()?;
    if !finite(&y0) || !t0.is_finite() {
        return Err(Error::StepFailure { t: t0, reason: "non-finite initial data".into() });
    }
    let dir = match stops.last() {
        Some(&end) if end > t0 => 1.0,
        Some(&end) if end < t0 => -1.0,
        _ => 0.0,
    };
    let mut prev = t0;
    for &s in stops {
        if !s.is_finite() || (dir != 0.0 && dir * (s - prev) <= 0.0 && s != t0) {
            return Err(Error::InvalidParams("stop times must be finite and strictly monotone".into()));
        }
        prev = s;
    }

    let stats = IntegrationStats { evaluations: 1, ..Default::default() };
    let d0 = rhs(t0, &y0)?;
    let mut sol = OdeSolution { t: vec![t0], y: vec![y0], dy: vec![d0], stops: Vec::new(), stats };
    let mut stop_iter = stops.iter().copied().peekable();
    while stop_iter.peek() == Some(&t0) {
        sol.stops.push(0);
        stop_iter.next();
    }
    let targets: Vec<f64> = stop_iter.collect();
    if targets.is_empty() {
        return Ok(sol);
    }

    match cfg.method {
        Method::Rk4 { step } => rk4_run(&mut rhs, &mut sol, &targets, step, cfg.max_steps)?,
        Method::Dopri { abs_tol, rel_tol } => {
            dopri_run(&mut rhs, &mut sol, &targets, dir, abs_tol, rel_tol, cfg.max_steps)?
        }
    }
    Ok(sol)
}

fn rk4_run<const N: usize, F>(
    rhs: &mut F,
    sol: &mut OdeSolution<N>,
    targets: &[f64],
    step: f64,
    max_steps: usize,
) -> Result<()>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let mut t = sol.t[0];
    let mut y = sol.y[0];
    let mut k1 = sol.dy[0];
    for &target in targets {
        let span = target - t;
        let n = ((span.abs() / step) - 1e-9).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for i in 0..n {
            let k2 = rhs(t + 0.5 * h, &axpy(&y, h, &[(0.5, &k1)]))?;
            let k3 = rhs(t + 0.5 * h, &axpy(&y, h, &[(0.5, &k2)]))?;
            let k4 = rhs(t + h, &axpy(&y, h, &[(1.0, &k3)]))?;
            y = axpy(&y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]);
            t = if i + 1 == n { target } else { t + h };
            if !finite(&y) {
                return Err(Error::StepFailure { t, reason: "state became non-finite".into() });
            }
            k1 = rhs(t, &y)?;
            sol.stats.evaluations += 4;
            sol.stats.accepted += 1;
            if sol.stats.accepted > max_steps {
                return Err(Error::StepFailure { t, reason: "maximum number of steps exceeded".into() });
            }
            sol.t.push(t);
            sol.y.push(y);
            sol.dy.push(k1);
        }
        sol.stops.push(sol.t.len() - 1);
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn error_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], atol: f64, rtol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

#[allow(clippy::too_many_arguments)]
fn dopri_run<const N: usize, F>(
    rhs: &mut F,
    sol: &mut OdeSolution<N>,
    targets: &[f64],
    dir: f64,
    atol: f64,
    rtol: f64,
    max_steps: usize,
) -> Result<()>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let mut t = sol.t[0];
    let mut y = sol.y[0];
    let mut k1 = sol.dy[0];
    let total = (targets[targets.len() - 1] - t).abs();
    let mut h = dir * initial_step(rhs, t, &y, &k1, dir, atol, rtol, total, &mut sol.stats)?;

    for &target in targets {
        loop {
            let remaining = target - t;
            if remaining == 0.0 {
                break;
            }
            let last = h.abs() >= remaining.abs();
            let hs = if last { remaining } else { h };
            if hs.abs() < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepFailure { t, reason: format!("step size underflow (h = {hs:e})") });
            }
            if sol.stats.accepted + sol.stats.rejected > max_steps {
                return Err(Error::StepFailure { t, reason: "maximum number of steps exceeded".into() });
            }

            let k2 = rhs(t + C[1] * hs, &axpy(&y, hs, &[(A2[0], &k1)]))?;
            let k3 = rhs(t + C[2] * hs, &axpy(&y, hs, &[(A3[0], &k1), (A3[1], &k2)]))?;
            let k4 = rhs(t + C[3] * hs, &axpy(&y, hs, &[(A4[0], &k1), (A4[1], &k2), (A4[2], &k3)]))?;
            let k5 = rhs(
                t + C[4] * hs,
                &axpy(&y, hs, &[(A5[0], &k1), (A5[1], &k2), (A5[2], &k3), (A5[3], &k4)]),
            )?;
            let k6 = rhs(
                t + hs,
                &axpy(&y, hs, &[(A6[0], &k1), (A6[1], &k2), (A6[2], &k3), (A6[3], &k4), (A6[4], &k5)]),
            )?;
            let y1 = axpy(&y, hs, &[(B[0], &k1), (B[2], &k3), (B[3], &k4), (B[4], &k5), (B[5], &k6)]);
            let t1 = if last { target } else { t + hs };
            let k7 = if finite(&y1) { rhs(t1, &y1)? } else { [f64::NAN; N] };
            sol.stats.evaluations += 6;

            let mut err = [0.0; N];
            for i in 0..N {
                err[i] = hs
                    * (E[0] * k1[i] + E[2] * k3[i] + E[3] * k4[i] + E[4] * k5[i] + E[5] * k6[i] + E[6] * k7[i]);
            }
            let en = error_norm(&err, &y, &y1, atol, rtol);
            if !en.is_finite() || !finite(&k7) {
                sol.stats.rejected += 1;
                h = 0.25 * hs;
                continue;
            }
            if en <= 1.0 {
                t = t1;
                y = y1;
                k1 = k7;
                sol.stats.accepted += 1;
                sol.t.push(t);
                sol.y.push(y);
                sol.dy.push(k1);
                let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                // a step shortened to hit a stop says little about the natural step size
                if !last || hs.abs() >= h.abs() * 0.5 {
                    h = hs * fac;
                }
            } else {
                sol.stats.rejected += 1;
                h = hs * (0.9 * en.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        sol.stops.push(sol.t.len() - 1);
    }
    Ok(())
}

/// Starting step following Hairer, Nørsett & Wanner.
#[allow(clippy::too_many_arguments)]
fn initial_step<const N: usize, F>(
    rhs: &mut F,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    dir: f64,
    atol: f64,
    rtol: f64,
    span: f64,
    stats: &mut IntegrationStats,
) -> Result<f64>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let scale = |i: usize| atol + rtol * y[i].abs();
    let norm = |v: &[f64; N]| {
        ((0..N).map(|i| (v[i] / scale(i)).powi(2)).sum::<f64>() / N as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1 = axpy(y, dir * h0, &[(1.0, f0)]);
    let f1 = rhs(t + dir * h0, &y1)?;
    stats.evaluations += 1;
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span).max(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn decay(_: f64, y: &[f64; 1]) -> Result<[f64; 1]> {
        Ok([-y[0]])
    }

    #[test]
    fn dopri_exponential_decay() {
        let sol = solve(decay, 0.0, [1.0], &[0.5, 1.0, 2.0], &IntegratorConfig::default()).unwrap();
        let got: Vec<_> = sol.at_stops().map(|(t, y)| (t, y[0])).collect();
        assert_eq!(got.len(), 3);
        for (t, y) in got {
            assert_abs_diff_eq!(y, (-t as f64).exp(), epsilon = 1e-9);
        }
        assert_eq!(sol.t[sol.stops[2]], 2.0);
    }

    #[test]
    fn backward_integration() {
        let sol = solve(decay, 1.0, [(-1.0f64).exp()], &[0.0, -1.0], &IntegratorConfig::default()).unwrap();
        let (t, y) = sol.at_stops().last().unwrap();
        assert_eq!(t, -1.0);
        assert_abs_diff_eq!(y[0], 1f64.exp(), epsilon = 1e-8);
        assert!(sol.t.windows(2).all(|w| w[1] < w[0]));
        let mid = sol.interpolate(0.5).unwrap()[0];
        assert_abs_diff_eq!(mid, (-0.5f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn rk4_lands_on_stops() {
        let sol = solve(decay, 0.0, [1.0], &[0.3, 1.0], &IntegratorConfig::rk4(0.1)).unwrap();
        assert_eq!(sol.t[sol.stops[0]], 0.3);
        assert_eq!(sol.t[sol.stops[1]], 1.0);
        assert_eq!(sol.stats.accepted, 10);
        assert_abs_diff_eq!(sol.y[sol.stops[1]][0], (-1.0f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn interpolation_is_exact_at_nodes() {
        let sol = solve(decay, 0.0, [1.0], &[3.0], &IntegratorConfig::default()).unwrap();
        for (t, y) in sol.t.iter().zip(&sol.y) {
            assert_eq!(sol.interpolate(*t).unwrap(), *y);
        }
        assert!(sol.interpolate(3.5).is_none());
    }

    #[test]
    fn non_finite_right_hand_side_fails() {
        let blow = |_: f64, y: &[f64; 1]| Ok([y[0] * y[0]]);
        let err = solve(blow, 0.0, [1.0], &[2.0], &IntegratorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::StepFailure { .. }));
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(IntegratorConfig::dopri(0.0, 1e-8).validate().is_err());
        assert!(IntegratorConfig::rk4(-1.0).validate().is_err());
        assert!(solve(decay, 0.0, [1.0], &[1.0, 0.5], &IntegratorConfig::default()).is_err());
    }
}
