//! Acceptance criteria 1 to 10. Each test prints one PASS/FAIL line with the
//! measured quantity, the tolerance and the runtime, then asserts the verdict.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_3, PI};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use normal_shift::closedform::{
    cycloid, gravity_shift, marked_point_quadrature, oscillator_phi, CycloidParams, MarkedInit, NuVariant,
};
use normal_shift::dynamics::{
    integrate, integrate_at, integrate_variational, integrate_with_deviation, reconstruct, speed_derivative,
    PhaseState,
};
use normal_shift::forces::{
    self, from_scalar_ansatz, metric_scalar_ansatz, ForceField, MDTypeParams, MetricSpec, Profile, ScalarFieldA,
};
use normal_shift::geometry::{frame, projector, ConformalMetric, Vec2};
use normal_shift::normality::{
    b_closed_form, first_integrals, integrate_characteristics, reduced_residual, reduction_b_residual_fd,
    weak_residuals, complex_residual, ProbeBox,
};
use normal_shift::ode::IntegratorConfig;
use normal_shift::shift::{
    normal_shift, solve_nu, ConstantNu, Curve, GridSpec, LinearNu, NuFunction, Orientation, ShiftGrid,
};

fn verdict(id: u32, what: &str, numbers_ok: bool, detail: String, elapsed: Duration, limit_s: f64) -> bool {
    let in_time = elapsed.as_secs_f64() < limit_s;
    let pass = numbers_ok && in_time;
    println!(
        "criterion {id:>2} [{}] {what}: {detail}; runtime {:.3} s (limit {limit_s} s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    pass
}

fn dopri() -> IntegratorConfig {
    IntegratorConfig::default()
}

fn horizontal_segment() -> Curve {
    // launched downward: right-hand normal of (1, 0)
    Curve::line(Vec2::zeros(), Vec2::new(1.0, 0.0), (-1.0, 1.0), Orientation::Right)
}

fn gravity_grid(nu: &dyn NuFunction) -> ShiftGrid {
    normal_shift(
        &horizontal_segment(),
        &forces::gravity(1.0),
        &ConformalMetric::euclidean(),
        nu,
        (0.0, 1.0),
        GridSpec::default(),
        &dopri(),
    )
    .unwrap()
}

#[test]
fn criterion_01_gravity_normal_shift() {
    let start = Instant::now();
    let grid = gravity_grid(&ConstantNu(1.0));
    let mut pos_err: f64 = 0.0;
    for (k, &t) in grid.t_nodes.iter().enumerate() {
        for (j, &s) in grid.s_nodes.iter().enumerate() {
            let exact = gravity_shift(s, t, NuVariant::ConstantNu);
            pos_err = pos_err.max((grid.states[k][j].r - exact).amax());
        }
    }
    let phi = grid.max_abs_phi();
    let ok = pos_err < 1e-8 && phi < 1e-8;
    let pass = verdict(
        1,
        "gravity shift with nu = 1",
        ok,
        format!("max position error {pos_err:.2e} (< 1e-8), max|phi| {phi:.2e} (< 1e-8)"),
        start.elapsed(),
        1.0,
    );
    assert!(pass);
}

#[test]
fn criterion_02_gravity_non_normal_shift() {
    let start = Instant::now();
    let nu = LinearNu { a: 0.75, b: -0.25 };
    let grid = gravity_grid(&nu);
    let last = grid.t_nodes.len() - 1;
    let phi_end = grid.max_abs_phi_at(last);
    let mut pos_err: f64 = 0.0;
    for (j, &s) in grid.s_nodes.iter().enumerate() {
        pos_err = pos_err.max((grid.states[last][j].r - gravity_shift(s, 1.0, NuVariant::LinearNu)).amax());
    }
    let report = normal_shift::shift::normality_report(&grid);
    let ok = phi_end > 1e-2 && !report.normal && pos_err < 1e-8;
    let pass = verdict(
        2,
        "gravity shift with nu = (3 - s)/4",
        ok,
        format!("max|phi(t=1)| {phi_end:.3e} (> 1e-2), verdict normal = {}, closed-form error {pos_err:.1e}", report.normal),
        start.elapsed(),
        1.0,
    );
    assert!(pass);
}

fn tilted_line() -> Curve {
    let d = Vec2::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
    Curve::line(Vec2::zeros(), d, (-1.0, 1.0), Orientation::Left)
}

#[test]
fn criterion_03_oscillator_impossibility() {
    let start = Instant::now();
    let omega = 1.0;
    let field = forces::oscillator(omega);
    let curve = tilted_line();
    let metric = ConformalMetric::euclidean();
    let mut min_phi = f64::INFINITY;
    for nu0 in [0.5, 1.0, 2.0] {
        let nu = solve_nu(&curve, &field, 0.0, nu0, curve.s_range).unwrap();
        let grid = normal_shift(&curve, &field, &metric, &nu, (0.0, 1.0), GridSpec::default(), &dopri()).unwrap();
        min_phi = min_phi.min(grid.max_abs_phi());
    }

    // constant-ν sub-case against the closed form 2⟨τ, ṙ⟩
    let mut formula_err: f64 = 0.0;
    let nu = ConstantNu(1.0);
    let times: Vec<f64> = (0..=50).map(|k| k as f64 / 50.0).collect();
    for s in [-1.0, -0.3, 0.0, 0.6, 1.0] {
        let (init, tau0, tau_dot0) = normal_shift::shift::launch_data(&curve, &metric, &nu, s).unwrap();
        let base = integrate_at(&field, &metric, init, &times, &dopri()).unwrap();
        let devs = integrate_variational(&field, &metric, &base, tau0, tau_dot0, &dopri()).unwrap();
        for (st, d) in base.states.iter().zip(&devs) {
            let numeric = 2.0 * st.v.norm() * d.phi;
            formula_err = formula_err.max((numeric - oscillator_phi(&nu, omega, s, d.t)).abs());
        }
    }
    let ok = min_phi > 1e-3 && formula_err < 1e-8;
    let pass = verdict(
        3,
        "oscillator on the tilted line",
        ok,
        format!(
            "smallest max|phi| over nu0 in {{0.5, 1, 2}} {min_phi:.3e} (> 1e-3), deviation formula error {formula_err:.2e} (< 1e-8)"
        ),
        start.elapsed(),
        2.0,
    );
    assert!(pass);
}

fn random_spline(seed: u64) -> Curve {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vec2> = (0..5)
        .map(|k| Vec2::new(-1.0 + 0.5 * k as f64 + rng.gen_range(-0.1..0.1), rng.gen_range(-0.5..0.5)))
        .collect();
    Curve::spline(&pts, if rng.gen_bool(0.5) { Orientation::Left } else { Orientation::Right }).unwrap()
}

#[test]
fn criterion_04_multidimensional_type_fields() {
    let start = Instant::now();
    let mut worst_residual: f64 = 0.0;
    let mut worst_phi: f64 = 0.0;
    let mut details = Vec::new();
    for seed in 1..=5u64 {
        let params = MDTypeParams::random(seed);
        params.check_domain(200, seed).expect("W_v bounded away from zero");
        let field = forces::mdtype_field(&params);
        for p in ProbeBox::default().sample(200, 100 + seed) {
            let w = weak_residuals(&field, p.r(), p.velocity()).unwrap();
            worst_residual = worst_residual.max(w.r1.abs()).max(w.r2.abs());
        }
        let curve = random_spline(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let nu0 = rng.gen_range(0.5..1.5);
        let nu = solve_nu(&curve, &field, 0.5, nu0, curve.s_range).unwrap();
        let grid = normal_shift(
            &curve,
            &field,
            &ConformalMetric::euclidean(),
            &nu,
            (0.0, 0.5),
            GridSpec::default(),
            &dopri(),
        )
        .unwrap();
        let phi = grid.max_abs_phi();
        worst_phi = worst_phi.max(phi);
        details.push(format!("{phi:.1e}"));
    }
    let ok = worst_residual < 1e-5 && worst_phi < 1e-6;
    let pass = verdict(
        4,
        "random multidimensional-type fields",
        ok,
        format!(
            "max weak residual {worst_residual:.2e} (< 1e-5), max|phi| per field [{}] (< 1e-6)",
            details.join(", ")
        ),
        start.elapsed(),
        30.0,
    );
    assert!(pass);
}

#[test]
fn criterion_05_cycloids() {
    let start = Instant::now();
    let sets = [
        CycloidParams::new(0.0, 0.0, std::f64::consts::FRAC_PI_2, 1.0, 1.0).unwrap(),
        CycloidParams::new(0.5, -1.0, 0.7, 1.5, 2.0).unwrap(),
        CycloidParams::new(-1.0, 2.0, 2.3, 0.6, 0.8).unwrap(),
    ];
    let mut err: f64 = 0.0;
    for p in &sets {
        let field = forces::anisotropic(Profile::Constant(p.a0));
        let init = cycloid(p, 0.0).unwrap();
        let (lo, hi) = p.interval();
        // the speed vanishes at the end points, where the frame is undefined
        let margin = 0.01 * (hi - lo);
        for end in [hi - margin, lo + margin] {
            let times: Vec<f64> = (0..=40).map(|k| end * k as f64 / 40.0).collect();
            let traj = integrate_at(&field, &ConformalMetric::euclidean(), init, &times, &dopri()).unwrap();
            for &t in &times {
                let num = traj.node(t).unwrap();
                let exact = cycloid(p, t).unwrap();
                err = err.max((num.r - exact.r).amax()).max((num.v - exact.v).amax());
            }
        }
    }
    let pass = verdict(
        5,
        "cycloid reproduction",
        err < 1e-6,
        format!("max state error over 3 parameter sets {err:.2e} (< 1e-6)"),
        start.elapsed(),
        2.0,
    );
    assert!(pass);
}

#[test]
fn criterion_06_marked_point_quadrature() {
    let start = Instant::now();
    let a = Profile::Constant(2.0);
    let init = MarkedInit { rho0: 1.0, gamma0: 0.0, v0: 0.8, theta0: FRAC_PI_3, center: [0.0, 0.0] };
    let grid: Vec<f64> = (0..=12).map(|k| FRAC_PI_3 + (2.5 - FRAC_PI_3) * k as f64 / 12.0).collect();
    let table = marked_point_quadrature(&a, init, &grid).unwrap();
    let (t0, t1) = table.t_range();
    let times: Vec<f64> = (0..=10).map(|k| t0 + (t1 - t0) * k as f64 / 10.0).collect();
    let field = forces::marked_point(a, Vec2::zeros());
    let traj = integrate_at(&field, &ConformalMetric::euclidean(), init.state(), &times, &dopri()).unwrap();
    let mut err: f64 = 0.0;
    for &t in &times {
        let q = table.state_at(t).unwrap();
        let d = traj.node(t).unwrap();
        err = err.max((q.r - d.r).amax()).max((q.v - d.v).amax());
    }
    let pass = verdict(
        6,
        "marked-point quadratures",
        err < 1e-5,
        format!("max state error on theta in [pi/3, 2.5], t in [0, {t1:.3}]: {err:.2e} (< 1e-5)"),
        start.elapsed(),
        5.0,
    );
    assert!(pass);
}

fn random_non_solution(rng: &mut ChaCha8Rng) -> ScalarFieldA {
    let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ScalarFieldA::new("random", move |x, y, v, th| {
        c[0] * v * v * th + c[1] * x * th.sin() + c[2] * (y + th).cos() * v + c[3] * x * y * (2.0 * th).cos() + 0.5
    })
}

#[test]
fn criterion_07_residual_concordance() {
    let start = Instant::now();
    let threshold = 1e-5;
    let classify = |a: &ScalarFieldA, p: normal_shift::normality::Probe| -> (bool, bool, bool, bool) {
        let red = reduced_residual(a, p.x, p.y, p.v, p.theta).unwrap();
        let w = weak_residuals(&from_scalar_ansatz(a), p.r(), p.velocity()).unwrap();
        let z = Complex64::new(p.x, p.y);
        let c = complex_residual(a, z, Complex64::from_polar(p.v, p.theta)).unwrap();
        (red.abs() < threshold, w.r2.abs() < threshold, c.norm() < threshold, w.r1.abs() < threshold)
    };
    let solutions = [
        ScalarFieldA::speed_only(Profile::Polynomial(vec![0.3, -0.5, 0.2])),
        ScalarFieldA::anisotropic(Profile::Polynomial(vec![1.0, 0.4, -0.1])),
        ScalarFieldA::disc_invariant(4.0, Profile::Polynomial(vec![0.5, 1.0, 0.3])),
    ];
    let mut disagreements = 0;
    let mut false_nonzero = 0;
    let mut r1_failures = 0;
    for (i, a) in solutions.iter().enumerate() {
        for p in ProbeBox::default().sample(50, 70 + i as u64) {
            let (r, w, c, r1) = classify(a, p);
            disagreements += usize::from(!(r == w && w == c));
            false_nonzero += usize::from(!r);
            r1_failures += usize::from(!r1);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let probes = ProbeBox::default().sample(100, 78);
    let mut nonzero = 0;
    for p in probes {
        let a = random_non_solution(&mut rng);
        let (r, w, c, r1) = classify(&a, p);
        disagreements += usize::from(!(r == w && w == c));
        nonzero += usize::from(!r);
        r1_failures += usize::from(!r1);
    }
    let ok = disagreements == 0 && false_nonzero == 0 && r1_failures == 0;
    let pass = verdict(
        7,
        "residual formulation concordance",
        ok,
        format!(
            "classification disagreements {disagreements}/250, solutions flagged nonzero {false_nonzero}/150, \
             non-solutions flagged nonzero {nonzero}/100, r1 not identically zero {r1_failures}"
        ),
        start.elapsed(),
        10.0,
    );
    assert!(pass);
}

#[test]
fn criterion_08_conformal_equivalence() {
    let start = Instant::now();
    let spec = MetricSpec::SinCos { amp: 0.3, kx: 1.0, ky: 1.0, px: 0.0, py: 0.0 };
    let metric = spec.build();
    let force = metric_scalar_ansatz(&ScalarFieldA::anisotropic(Profile::Polynomial(vec![0.5, 0.2])), &metric);
    // Γ(v, v) for the conformal factor, written out: |v|²∇f − 2⟨∇f, v⟩v
    let f2 = force.clone();
    let transported = ForceField::new("transported", move |r, v| {
        let (_, df) = spec.eval(r);
        f2.eval(r, v) - (v.norm_squared() * df - 2.0 * df.dot(&v) * v)
    })
    .requiring_frame(true);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let times: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    let mut err: f64 = 0.0;
    for _ in 0..10 {
        let r = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let ang: f64 = rng.gen_range(-PI..PI);
        let v = rng.gen_range(0.5..1.5) * Vec2::new(ang.cos(), ang.sin());
        let init = PhaseState::new(r, v);
        let cov = integrate_at(&force, &metric, init, &times, &dopri()).unwrap();
        let euc = integrate_at(&transported, &ConformalMetric::euclidean(), init, &times, &dopri()).unwrap();
        for &t in &times {
            let (a, b) = (cov.node(t).unwrap(), euc.node(t).unwrap());
            err = err.max((a.r - b.r).amax()).max((a.v - b.v).amax());
        }
    }
    let pass = verdict(
        8,
        "conformal equivalence, f = 0.3 sin x cos y",
        err < 1e-8,
        format!("max state difference over 10 initial states {err:.2e} (< 1e-8)"),
        start.elapsed(),
        5.0,
    );
    assert!(pass);
}

#[test]
fn criterion_09_symmetry_reduction() {
    let start = Instant::now();
    let u = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let (mut used, mut skipped) = (0, 0);
    while used < 50 {
        let v = rng.gen_range(0.5..3.0);
        let th = rng.gen_range(-PI..PI);
        // stay clear of the singular set of the closed form
        match normal_shift::normality::b_closed_form_partials(v, th, u) {
            Ok(_) if b_closed_form(v, th + 0.01, u).is_ok() && b_closed_form(v, th - 0.01, u).is_ok() => {
                let r = reduction_b_residual_fd(|s, t| b_closed_form(s, t, u).unwrap_or(f64::NAN), v, th);
                worst = worst.max(r.abs());
                used += 1;
            }
            _ => skipped += 1,
        }
    }
    let times: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    let cfg = IntegratorConfig::dopri(1e-12, 1e-12);
    let mut drift: f64 = 0.0;
    for start_pt in [[1.0, 0.5, 0.7], [2.0, -1.0, -0.3], [0.7, 2.0, 1.5]] {
        let path = integrate_characteristics(start_pt, &times, &cfg).unwrap();
        let (i1, i2) = first_integrals(start_pt[0], start_pt[1], start_pt[2], u);
        for y in path {
            let (j1, j2) = first_integrals(y[0], y[1], y[2], u);
            drift = drift.max((j1 - i1).abs()).max((j2 - i2).abs());
        }
    }
    let ok = worst.is_finite() && worst < 1e-4 && drift < 1e-8;
    let pass = verdict(
        9,
        "symmetry-reduced equation",
        ok,
        format!(
            "max b-equation residual (FD partials) {worst:.2e} (< 1e-4) at 50 probes ({skipped} singular draws skipped), \
             first-integral drift {drift:.2e} (< 1e-8)"
        ),
        start.elapsed(),
        5.0,
    );
    assert!(pass);
}

#[test]
fn criterion_10_structural_invariants() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, value: f64, tol: f64| {
        if !(value < tol) {
            failures.push(format!("{name}: {value:.2e} >= {tol:.0e}"));
        }
        value
    };

    // frames and projectors
    let mut frame_err: f64 = 0.0;
    for _ in 0..100 {
        let v = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let fr = frame(v).unwrap();
        let p = projector(v).unwrap();
        frame_err = frame_err
            .max(fr.n.dot(&fr.m).abs())
            .max((fr.det() - 1.0).abs())
            .max((fr.n.norm() - 1.0).abs())
            .max((p * p - p).amax())
            .max((p * fr.n).amax())
            .max((p * fr.m - fr.m).amax())
            .max((p - fr.m * fr.m.transpose()).amax());
    }
    let frame_err = check("frame/projector", frame_err, 1e-14);

    // τ = φN + ψM along a shifted curve, flat and conformal
    let field = forces::from_scalar_ansatz(&ScalarFieldA::anisotropic(Profile::Polynomial(vec![0.6, 0.3])));
    let circle = Curve::circle(Vec2::zeros(), 1.5, (0.0, 2.0), Orientation::Right);
    let mut recon: f64 = 0.0;
    for metric in [ConformalMetric::euclidean(), MetricSpec::SinCos { amp: 0.3, kx: 1.0, ky: 1.0, px: 0.0, py: 0.0 }.build()] {
        let times: Vec<f64> = (0..=10).map(|k| 0.05 * k as f64).collect();
        let (init, tau0, td0) = normal_shift::shift::launch_data(&circle, &metric, &ConstantNu(1.0), 0.7).unwrap();
        let (states, devs) = integrate_with_deviation(&field, &metric, init, tau0, td0, &times, &dopri()).unwrap();
        for (s, d) in states.iter().zip(&devs) {
            recon = recon.max((reconstruct(&metric, s.r, s.v, d.phi, d.psi).unwrap() - d.tau).amax());
        }
    }
    let recon = check("phi N + psi M = tau", recon, 1e-12);

    // d|v|/dt = A
    let init = PhaseState::new(Vec2::new(0.2, -0.4), Vec2::new(0.8, 0.5));
    let traj = integrate(&field, &ConformalMetric::euclidean(), init, (0.0, 1.0), &dopri()).unwrap();
    let mut speed_err: f64 = 0.0;
    for t in [0.2, 0.5, 0.8] {
        let dv = normal_shift::geometry::derivative(|u| traj.at(u).unwrap().v.norm(), t);
        let st = traj.at(t).unwrap();
        speed_err = speed_err.max((dv - speed_derivative(&field, &st).unwrap()).abs());
    }
    let speed_err = check("d|v|/dt = A", speed_err, 1e-6);

    // ψ̇(0) = ±k on an arclength circle with ν = 1
    let mut curv_err: f64 = 0.0;
    for (orientation, sign) in [(Orientation::Right, -1.0), (Orientation::Left, 1.0)] {
        let c = Curve::circle(Vec2::zeros(), 1.5, (0.0, 2.0), orientation);
        let grid = normal_shift(
            &c,
            &field,
            &ConformalMetric::euclidean(),
            &ConstantNu(1.0),
            (0.0, 0.1),
            GridSpec { n_s: 9, n_t: 3 },
            &dopri(),
        )
        .unwrap();
        for (j, (_, psi_dot)) in grid.initial_rates(&field).unwrap().into_iter().enumerate() {
            let k = normal_shift::shift::frenet(&c, grid.s_nodes[j]).unwrap().curvature;
            curv_err = curv_err.max((psi_dot - sign * k).abs());
            curv_err = curv_err.max((grid.psi[0][j] + sign).abs());
        }
    }
    let curv_err = check("psi_dot(0) = +-k", curv_err, 1e-12);

    // linearity of the variational equation
    let base = integrate(&field, &ConformalMetric::euclidean(), init, (0.0, 1.0), &dopri()).unwrap();
    let (t1, t2) = ((Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.5)), (Vec2::new(-0.3, 0.7), Vec2::new(0.2, 0.1)));
    let (a, b) = (1.7, -0.6);
    let flat = ConformalMetric::euclidean();
    let d1 = integrate_variational(&field, &flat, &base, t1.0, t1.1, &dopri()).unwrap();
    let d2 = integrate_variational(&field, &flat, &base, t2.0, t2.1, &dopri()).unwrap();
    let d3 = integrate_variational(&field, &flat, &base, a * t1.0 + b * t2.0, a * t1.1 + b * t2.1, &dopri()).unwrap();
    let mut lin: f64 = 0.0;
    for ((x, y), z) in d1.iter().zip(&d2).zip(&d3) {
        lin = lin.max((a * x.tau + b * y.tau - z.tau).amax());
    }
    let lin = check("variational linearity", lin, 1e-8);

    // rk4 order on the oscillator (the gravity closed form is reproduced exactly by rk4)
    let osc = forces::oscillator(2.0);
    let init = PhaseState::new(Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0));
    let exact = |t: f64| Vec2::new(t, (2.0 * t).cos());
    let err_at = |field: &ForceField, h: f64, exact: &dyn Fn(f64) -> Vec2, init: PhaseState| {
        let tr = integrate(field, &ConformalMetric::euclidean(), init, (0.0, 2.0), &IntegratorConfig::rk4(h)).unwrap();
        (tr.last().r - exact(2.0)).norm()
    };
    let (e1, e2) = (err_at(&osc, 0.1, &exact, init), err_at(&osc, 0.05, &exact, init));
    let ratio = e1 / e2;
    if !(ratio >= 14.0) {
        failures.push(format!("rk4 order ratio {ratio:.2} < 14"));
    }
    let grav_init = PhaseState::new(Vec2::zeros(), Vec2::new(0.0, -1.0));
    let grav_exact = |t: f64| Vec2::new(0.0, -t * t / 2.0 - t);
    let g1 = err_at(&forces::gravity(1.0), 0.1, &grav_exact, grav_init);

    let ok = failures.is_empty();
    let pass = verdict(
        10,
        "structural invariants",
        ok,
        format!(
            "frame {frame_err:.1e}, reconstruction {recon:.1e}, speed law {speed_err:.1e}, psi_dot(0) {curv_err:.1e}, \
             linearity {lin:.1e}, rk4 halving ratio {ratio:.2} on the oscillator (gravity rk4 error {g1:.1e}){}",
            if ok { String::new() } else { format!("; failed: {}", failures.join("; ")) }
        ),
        start.elapsed(),
        10.0,
    );
    assert!(pass);
}
