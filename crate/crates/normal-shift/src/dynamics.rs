//! Phase flow of `ṙ = v, v̇ = F(r, v) − Γ(v, v)`, its variational equation
//! and the projected deviation functions φ = ⟨τ, N⟩, ψ = ⟨τ, M⟩.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forces::{ab_decompose, ForceField};
use crate::geometry::{self, check_speed, frame, ConformalMetric, Mat2, Vec2};
use crate::normality::ab_gradients;
use crate::ode::{self, IntegrationStats, IntegratorConfig};
use crate::fmt_float;

/// Position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub r: Vec2,
    pub v: Vec2,
}

impl PhaseState {
    pub fn new(r: Vec2, v: Vec2) -> Self {
        Self { r, v }
    }

    pub fn is_finite(&self) -> bool {
        self.r.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }

    fn pack(&self) -> [f64; 4] {
        [self.r.x, self.r.y, self.v.x, self.v.y]
    }

    fn unpack(y: &[f64]) -> Self {
        Self { r: Vec2::new(y[0], y[1]), v: Vec2::new(y[2], y[3]) }
    }
}

/// Accepted integrator nodes with cubic Hermite dense output.
///
/// Times are strictly monotone in the direction of integration, so they
/// decrease for a backward run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    accels: Vec<Vec2>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    fn from_solution(sol: &ode::OdeSolution<4>) -> Self {
        Self {
            times: sol.t.clone(),
            states: sol.y.iter().map(|y| PhaseState::unpack(y)).collect(),
            accels: sol.dy.iter().map(|d| Vec2::new(d[2], d[3])).collect(),
            stats: sol.stats,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> PhaseState {
        self.states[0]
    }

    pub fn last(&self) -> PhaseState {
        self.states[self.states.len() - 1]
    }

    /// Dense output; `None` outside the covered time range.
    pub fn at(&self, t: f64) -> Option<PhaseState> {
        let i = ode::locate(&self.times, t)?;
        if t == self.times[i] {
            return Some(self.states[i]);
        }
        let j = i + 1;
        let (a, b) = (&self.states[i], &self.states[j]);
        let y = ode::hermite(
            self.times[i],
            &a.pack(),
            &[a.v.x, a.v.y, self.accels[i].x, self.accels[i].y],
            self.times[j],
            &b.pack(),
            &[b.v.x, b.v.y, self.accels[j].x, self.accels[j].y],
            t,
        );
        Some(PhaseState::unpack(&y))
    }

    /// Node whose time equals `t` exactly.
    pub fn node(&self, t: f64) -> Option<&PhaseState> {
        self.times.iter().position(|&s| s == t).map(|i| &self.states[i])
    }

    /// CSV with header `t,x,y,vx,vy` (plus `phi,psi` when deviations aligned
    /// with the nodes are supplied).
    pub fn write_csv<W: Write>(&self, out: W, deviations: Option<&[DeviationState]>) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t", "x", "y", "vx", "vy"];
        if deviations.is_some() {
            header.extend(["phi", "psi"]);
        }
        w.write_record(&header)?;
        for (i, (t, s)) in self.times.iter().zip(&self.states).enumerate() {
            let mut row = vec![fmt_float(*t), fmt_float(s.r.x), fmt_float(s.r.y), fmt_float(s.v.x), fmt_float(s.v.y)];
            if let Some(d) = deviations {
                row.push(fmt_float(d[i].phi));
                row.push(fmt_float(d[i].psi));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Effective acceleration `F − Γ(v, v)` (just F for the flat metric).
pub fn acceleration(field: &ForceField, metric: &ConformalMetric, r: Vec2, v: Vec2) -> Result<Vec2> {
    if field.requires_frame() {
        check_speed(v)?;
    }
    let f = field.eval(r, v);
    if metric.is_flat() {
        Ok(f)
    } else {
        Ok(f - metric.christoffel(r).contract(v))
    }
}

/// Jacobians of the effective acceleration with respect to r and v.
fn acceleration_jacobians(field: &ForceField, metric: &ConformalMetric, r: Vec2, v: Vec2) -> (Mat2, Mat2) {
    let mut jx = field.spatial_jacobian(r, v);
    let mut jv = field.velocity_jacobian(r, v);
    if !metric.is_flat() {
        // Γ(v, v) = |v|² ∇f − 2⟨∇f, v⟩ v
        jx -= geometry::jacobian(|q| metric.christoffel(q).contract(v), r);
        let df = metric.grad_f(r);
        jv -= 2.0 * df * v.transpose() - 2.0 * (v * df.transpose() + df.dot(&v) * Mat2::identity());
    }
    (jx, jv)
}

fn ordered_stops(t0: f64, times: &[f64]) -> Result<Vec<f64>> {
    if times.is_empty() || times[0] != t0 {
        return Err(Error::InvalidParams("output times must start at the initial time".into()));
    }
    Ok(times[1..].to_vec())
}

/// Integrates from `init` at `t_span.0` to `t_span.1`; the span may run backwards.
pub fn integrate(
    field: &ForceField,
    metric: &ConformalMetric,
    init: PhaseState,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    integrate_at(field, metric, init, &[t_span.0, t_span.1], cfg)
}

/// Like [`integrate`], with every entry of `times` (starting at the initial
/// time) guaranteed to be a node of the trajectory.
pub fn integrate_at(
    field: &ForceField,
    metric: &ConformalMetric,
    init: PhaseState,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let stops = ordered_stops(times[0], times)?;
    let rhs = |_: f64, y: &[f64; 4]| {
        let s = PhaseState::unpack(y);
        let a = acceleration(field, metric, s.r, s.v)?;
        Ok([s.v.x, s.v.y, a.x, a.y])
    };
    let sol = ode::solve(rhs, times[0], init.pack(), &stops, cfg)?;
    Ok(Trajectory::from_solution(&sol))
}

/// Variation vector τ with its derivative and projections on the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationState {
    pub t: f64,
    pub tau: Vec2,
    pub tau_dot: Vec2,
    pub phi: f64,
    pub psi: f64,
}

/// Projections of τ on the metric-orthonormal frame `e^{f}(N, M)`:
/// `φ = e^{-f}⟨τ, N⟩`, `ψ = e^{-f}⟨τ, M⟩` (Euclidean products).
pub fn project(metric: &ConformalMetric, r: Vec2, v: Vec2, tau: Vec2) -> Result<(f64, f64)> {
    let fr = frame(v)?;
    let s = if metric.is_flat() { 1.0 } else { (-metric.f(r)).exp() };
    Ok((s * tau.dot(&fr.n), s * tau.dot(&fr.m)))
}

/// Inverse of [`project`].
pub fn reconstruct(metric: &ConformalMetric, r: Vec2, v: Vec2, phi: f64, psi: f64) -> Result<Vec2> {
    let fr = frame(v)?;
    let s = if metric.is_flat() { 1.0 } else { metric.f(r).exp() };
    Ok(s * (phi * fr.n + psi * fr.m))
}

/// Base flow and `τ̈ = ∇F τ + ∇̃F τ̇` integrated together from `init`,
/// reporting states at exactly the given times.
pub fn integrate_with_deviation(
    field: &ForceField,
    metric: &ConformalMetric,
    init: PhaseState,
    tau0: Vec2,
    tau_dot0: Vec2,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Vec<PhaseState>, Vec<DeviationState>)> {
    ordered_stops(times[0], times)?;
    let rhs = |_: f64, y: &[f64; 8]| {
        let s = PhaseState::unpack(&y[..4]);
        let tau = Vec2::new(y[4], y[5]);
        let tau_dot = Vec2::new(y[6], y[7]);
        let a = acceleration(field, metric, s.r, s.v)?;
        let (jx, jv) = acceleration_jacobians(field, metric, s.r, s.v);
        let tau_dd = jx * tau + jv * tau_dot;
        Ok([s.v.x, s.v.y, a.x, a.y, tau_dot.x, tau_dot.y, tau_dd.x, tau_dd.y])
    };
    let y0 = [init.r.x, init.r.y, init.v.x, init.v.y, tau0.x, tau0.y, tau_dot0.x, tau_dot0.y];
    let sol = ode::solve(rhs, times[0], y0, times, cfg)?;
    let mut states = Vec::with_capacity(times.len());
    let mut devs = Vec::with_capacity(times.len());
    for (t, y) in sol.at_stops() {
        let s = PhaseState::unpack(&y[..4]);
        let tau = Vec2::new(y[4], y[5]);
        let (phi, psi) = project(metric, s.r, s.v, tau)?;
        states.push(s);
        devs.push(DeviationState { t, tau, tau_dot: Vec2::new(y[6], y[7]), phi, psi });
    }
    Ok((states, devs))
}

/// Deviation along `base`, aligned with its nodes. The base flow is
/// re-integrated jointly with τ so that no interpolation error enters.
pub fn integrate_variational(
    field: &ForceField,
    metric: &ConformalMetric,
    base: &Trajectory,
    tau0: Vec2,
    tau_dot0: Vec2,
    cfg: &IntegratorConfig,
) -> Result<Vec<DeviationState>> {
    let (_, devs) = integrate_with_deviation(field, metric, base.initial(), tau0, tau_dot0, &base.times, cfg)?;
    Ok(devs)
}

/// φ, ψ and their time derivatives at the base nodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhiPsiSeries {
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_dot: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_dot: Vec<f64>,
}

/// Right-hand side of the projected deviation equations (Euclidean case).
///
/// With `a = φ̇ − (B/v)ψ`, `b = ψ̇ + (B/v)φ` and `D = d(B/v)/dt`:
/// `φ̈ = α₁φ + α₂ψ + α₃a + (α₄ − B/v)b + 2(B/v)ψ̇ + (B/v)²φ + Dψ`,
/// `ψ̈ = β₁φ + β₂ψ + β₃a + (β₄ + A/v)b − 2(B/v)φ̇ + (B/v)²ψ − Dφ`.
pub fn phi_psi_accel(field: &ForceField, r: Vec2, v: Vec2, d: [f64; 4]) -> Result<(f64, f64)> {
    let [phi, phi_dot, psi, psi_dot] = d;
    let s = check_speed(v)?;
    let ab = ab_decompose(field, r, v)?;
    let g = ab_gradients(field, r, v)?;
    let bv = ab.b / s;
    let a = phi_dot - bv * psi;
    let b = psi_dot + bv * phi;
    let dd = (g.beta1 * s + g.beta3 * ab.a + g.beta4 * ab.b) / s - ab.b * ab.a / (s * s);
    let phi_dd = g.alpha1 * phi + g.alpha2 * psi + g.alpha3 * a + (g.alpha4 - bv) * b
        + 2.0 * bv * psi_dot
        + bv * bv * phi
        + dd * psi;
    let psi_dd = g.beta1 * phi + g.beta2 * psi + g.beta3 * a + (g.beta4 + ab.a / s) * b
        - 2.0 * bv * phi_dot
        + bv * bv * psi
        - dd * phi;
    Ok((phi_dd, psi_dd))
}

/// Integrates the φ/ψ equations jointly with the base flow (flat metric).
pub fn integrate_phi_psi(
    field: &ForceField,
    base: &Trajectory,
    phi0: f64,
    phi_dot0: f64,
    psi0: f64,
    psi_dot0: f64,
    cfg: &IntegratorConfig,
) -> Result<PhiPsiSeries> {
    let metric = ConformalMetric::euclidean();
    let stops = ordered_stops(base.times[0], &base.times)?;
    let rhs = |_: f64, y: &[f64; 8]| {
        let s = PhaseState::unpack(&y[..4]);
        let acc = acceleration(field, &metric, s.r, s.v)?;
        let (pdd, qdd) = phi_psi_accel(field, s.r, s.v, [y[4], y[5], y[6], y[7]])?;
        Ok([s.v.x, s.v.y, acc.x, acc.y, y[5], pdd, y[7], qdd])
    };
    let init = base.initial();
    let y0 = [init.r.x, init.r.y, init.v.x, init.v.y, phi0, phi_dot0, psi0, psi_dot0];
    let sol = ode::solve(rhs, base.times[0], y0, &stops, cfg)?;
    let mut out = PhiPsiSeries::default();
    for (t, y) in sol.at_stops() {
        out.times.push(t);
        out.phi.push(y[4]);
        out.phi_dot.push(y[5]);
        out.psi.push(y[6]);
        out.psi_dot.push(y[7]);
    }
    Ok(out)
}

/// `d|v|/dt = A`.
pub fn speed_derivative(field: &ForceField, state: &PhaseState) -> Result<f64> {
    Ok(ab_decompose(field, state.r, state.v)?.a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forces::{self, MetricSpec, Profile};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn flat() -> ConformalMetric {
        ConformalMetric::euclidean()
    }

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn free_motion() {
        let tr = integrate(
            &ForceField::zero(),
            &flat(),
            PhaseState::new(Vec2::zeros(), Vec2::new(1.0, 2.0)),
            (0.0, 1.0),
            &cfg(),
        )
        .unwrap();
        let end = tr.last();
        assert_abs_diff_eq!(end.r, Vec2::new(1.0, 2.0), epsilon = 1e-14);
        assert_abs_diff_eq!(end.v, Vec2::new(1.0, 2.0), epsilon = 1e-14);
    }

    #[test]
    fn gravity_fall_matches_closed_form() {
        for s in [-1.0, 0.25] {
            let tr = integrate(
                &forces::gravity(1.0),
                &flat(),
                PhaseState::new(Vec2::new(s, 0.0), Vec2::new(0.0, -1.0)),
                (0.0, 1.5),
                &cfg(),
            )
            .unwrap();
            for (t, st) in tr.times.iter().zip(&tr.states) {
                assert_abs_diff_eq!(st.r, Vec2::new(s, -t * t / 2.0 - t), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn oscillator_matches_sine() {
        let w = 2.0;
        let tr = integrate(
            &forces::oscillator(w),
            &flat(),
            PhaseState::new(Vec2::new(0.5, 0.0), Vec2::new(0.0, 1.0)),
            (0.0, 3.0),
            &cfg(),
        )
        .unwrap();
        for (t, st) in tr.times.iter().zip(&tr.states) {
            assert_abs_diff_eq!(st.r.y, (w * t).sin() / w, epsilon = 1e-9);
            assert_eq!(st.r.x, 0.5);
        }
        // dense output between nodes
        let t = 0.5 * (tr.times[3] + tr.times[4]);
        assert_abs_diff_eq!(tr.at(t).unwrap().r.y, (w * t).sin() / w, epsilon = 1e-6);
    }

    #[test]
    fn backward_run_retraces() {
        let f = forces::oscillator(1.0);
        let init = PhaseState::new(Vec2::new(0.0, 0.3), Vec2::new(0.2, 1.0));
        let fwd = integrate(&f, &flat(), init, (0.0, 2.0), &cfg()).unwrap();
        let back = integrate(&f, &flat(), fwd.last(), (2.0, 0.0), &cfg()).unwrap();
        assert_abs_diff_eq!(back.last().r, init.r, epsilon = 1e-9);
        assert!(back.times.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rest_point_with_directional_field_is_degenerate() {
        let f = forces::anisotropic(Profile::Constant(1.0));
        let err = integrate(&f, &flat(), PhaseState::new(Vec2::zeros(), Vec2::zeros()), (0.0, 1.0), &cfg());
        assert!(matches!(err, Err(Error::DegenerateVelocity { .. })));
    }

    #[test]
    fn variational_of_constant_fields_is_linear() {
        for f in [ForceField::zero(), forces::gravity(1.0)] {
            let base = integrate_at(
                &f,
                &flat(),
                PhaseState::new(Vec2::new(0.1, 0.0), Vec2::new(0.3, -1.0)),
                &[0.0, 0.5, 1.0, 2.0],
                &cfg(),
            )
            .unwrap();
            let (t0, td0) = (Vec2::new(1.0, -0.5), Vec2::new(0.25, 2.0));
            let devs = integrate_variational(&f, &flat(), &base, t0, td0, &cfg()).unwrap();
            assert_eq!(devs.len(), base.len());
            for d in devs {
                assert_abs_diff_eq!(d.tau, t0 + td0 * d.t, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn phi_psi_of_free_motion_are_linear() {
        let base = integrate_at(
            &ForceField::zero(),
            &flat(),
            PhaseState::new(Vec2::zeros(), Vec2::new(1.0, 1.0)),
            &[0.0, 1.0, 2.0],
            &cfg(),
        )
        .unwrap();
        let pp = integrate_phi_psi(&ForceField::zero(), &base, 0.1, 0.2, -0.3, 0.4, &cfg()).unwrap();
        for i in 0..pp.times.len() {
            let t = pp.times[i];
            assert_abs_diff_eq!(pp.phi[i], 0.1 + 0.2 * t, epsilon = 1e-12);
            assert_abs_diff_eq!(pp.psi[i], -0.3 + 0.4 * t, epsilon = 1e-12);
        }
    }

    #[test]
    fn speed_derivative_examples() {
        let s = PhaseState::new(Vec2::zeros(), Vec2::new(0.0, -1.0));
        assert_eq!(speed_derivative(&ForceField::zero(), &s).unwrap(), 0.0);
        assert_abs_diff_eq!(speed_derivative(&forces::gravity(1.0), &s).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn variational_matches_difference_of_neighbouring_flows() {
        let fields = [
            forces::oscillator(1.3),
            forces::anisotropic(Profile::Polynomial(vec![0.5, 0.3])),
            forces::marked_point(Profile::Constant(1.0), Vec2::new(-2.0, -1.0)),
            forces::metrizable(MetricSpec::SinCos { amp: 0.3, kx: 1.0, ky: 1.0, px: 0.0, py: 0.0 }, Some(Profile::Polynomial(vec![0.0, 1.0]))),
        ];
        let r = |s: f64| Vec2::new(s, 0.2 * s * s);
        let v = |s: f64| Vec2::new(-0.4 * s, 1.0 + 0.3 * s);
        let (s, delta) = (0.3, 1e-4);
        let times = [0.0, 0.25, 0.5, 0.75, 1.0];
        for f in &fields {
            let base = integrate_at(f, &flat(), PhaseState::new(r(s), v(s)), &times, &cfg()).unwrap();
            let tau0 = Vec2::new(1.0, 0.4 * s);
            let devs = integrate_variational(f, &flat(), &base, tau0, Vec2::new(-0.4, 0.3), &cfg()).unwrap();
            let plus = integrate_at(f, &flat(), PhaseState::new(r(s + delta), v(s + delta)), &times, &cfg()).unwrap();
            let minus = integrate_at(f, &flat(), PhaseState::new(r(s - delta), v(s - delta)), &times, &cfg()).unwrap();
            for (k, &t) in times.iter().enumerate() {
                let fd = (plus.node(t).unwrap().r - minus.node(t).unwrap().r) / (2.0 * delta);
                let d = devs.iter().find(|d| d.t == t).unwrap();
                assert!((d.tau - fd).norm() < 1e-5, "{} at t={t}: {:?} vs {:?}", f.label(), d.tau, fd);
                let back = reconstruct(&flat(), base.node(t).unwrap().r, base.node(t).unwrap().v, d.phi, d.psi).unwrap();
                assert!((back - d.tau).norm() < 1e-10, "{k}");
            }
        }
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let tr = integrate(
            &ForceField::zero(),
            &flat(),
            PhaseState::new(Vec2::zeros(), Vec2::new(1.0 / 3.0, 0.0)),
            (0.0, 1.0),
            &cfg(),
        )
        .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x,y,vx,vy");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[3], "3.3333333333333331e-1");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn variational_superposition(
            a in prop::array::uniform4(-1.0..1.0f64),
            b in prop::array::uniform4(-1.0..1.0f64),
            c1 in -2.0..2.0f64, c2 in -2.0..2.0f64,
        ) {
            let f = forces::anisotropic(Profile::Polynomial(vec![0.5, 0.3]));
            let base = integrate_at(&f, &flat(), PhaseState::new(Vec2::new(0.2, 0.1), Vec2::new(0.7, 0.9)), &[0.0, 0.5, 1.0], &cfg()).unwrap();
            let run = |t: Vec2, td: Vec2| integrate_variational(&f, &flat(), &base, t, td, &cfg()).unwrap();
            let (ta, tda) = (Vec2::new(a[0], a[1]), Vec2::new(a[2], a[3]));
            let (tb, tdb) = (Vec2::new(b[0], b[1]), Vec2::new(b[2], b[3]));
            let da = run(ta, tda);
            let db = run(tb, tdb);
            let dc = run(c1 * ta + c2 * tb, c1 * tda + c2 * tdb);
            for i in 0..dc.len() {
                let lin = c1 * da[i].tau + c2 * db[i].tau;
                prop_assert!((dc[i].tau - lin).norm() < 1e-9 * (1.0 + lin.norm()));
            }
        }
    }
}
