use std::fs;
use std::io::Write;
use std::path::PathBuf;

use normal_shift::closedform::{cycloid, CycloidParams};
use normal_shift::dynamics::{integrate_at, PhaseState};
use normal_shift::forces::{self, MetricSpec, Profile};
use normal_shift::geometry::Vec2;
use normal_shift::normality::{residual_sweep, summarize, write_sweep_csv};
use normal_shift::shift::{normal_shift, normality_report};
use normal_shift::fmt_float;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, NuSpec};
use crate::{CliError, GlobalOpts};

/// Largest allowed state error for `--check-oracle`.
const ORACLE_TOL: f64 = 1e-6;

struct Run {
    cfg: ExperimentConfig,
    seed: u64,
    out: PathBuf,
    files: Vec<String>,
}

impl Run {
    fn open(opts: &GlobalOpts) -> Result<Self, CliError> {
        let path = opts.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
        let cfg = ExperimentConfig::load(path)?;
        let seed = opts.seed.unwrap_or(cfg.seed);
        let out = opts.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("nshift-out"));
        fs::create_dir_all(&out)?;
        Ok(Self { cfg, seed, out, files: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<fs::File, CliError> {
        self.files.push(name.to_string());
        Ok(fs::File::create(self.out.join(name))?)
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        let mut f = self.create(name)?;
        writeln!(f, "{text}")?;
        Ok(())
    }

    /// Writes `manifest.json` and prints the summary.
    fn finish(mut self, command: &str, summary: Value, opts: &GlobalOpts) -> Result<(), CliError> {
        let mut files = self.files.clone();
        files.push("manifest.json".into());
        let manifest = json!({
            "command": command,
            "seed": self.seed,
            "config": self.cfg,
            "outputs": files,
            "summary": summary,
        });
        self.write_json("manifest.json", &manifest)?;
        if opts.json {
            println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| CliError::Config(e.to_string()))?);
        } else {
            println!("{command}: wrote {} files to {}", self.files.len(), self.out.display());
            if let Value::Object(map) = &summary {
                for (k, v) in map {
                    println!("  {k}: {v}");
                }
            }
        }
        Ok(())
    }
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("io: {e}"))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 }).collect()
}

pub fn simulate(opts: &GlobalOpts) -> Result<(), CliError> {
    let mut run = Run::open(opts)?;
    let cfg = run.cfg.clone();
    let cfg = &cfg;
    let init = cfg.initial.ok_or_else(|| CliError::Config("simulate needs `initial`".into()))?;
    if cfg.samples < 2 {
        return Err(CliError::Config("samples must be at least 2".into()));
    }
    let built = cfg.build_field()?;
    let metric = cfg.metric.build();
    let start = PhaseState::new(Vec2::from(init.r), Vec2::from(init.v));
    let times = linspace(cfg.t_span[0], cfg.t_span[1], cfg.samples);
    let oracle = if opts.check_oracle { Some(oracle_for(cfg, start)?) } else { None };
    let traj = integrate_at(&built.field, &metric, start, &times, &cfg.integrator)?;

    let rows: Vec<(f64, PhaseState)> = times
        .iter()
        .map(|&t| traj.node(t).map(|s| (t, *s)).ok_or_else(|| CliError::Numeric(format!("no node at t = {t}"))))
        .collect::<Result<_, _>>()?;
    let mut worst: f64 = 0.0;
    if let Some(exact) = &oracle {
        for (t, s) in &rows {
            let e = exact(*t)?;
            worst = worst.max((s.r - e.r).amax()).max((s.v - e.v).amax());
        }
    }

    let mut f = run.create("trajectory.csv")?;
    writeln!(f, "t,x,y,vx,vy")?;
    for (t, s) in &rows {
        writeln!(f, "{},{},{},{},{}", fmt_float(*t), fmt_float(s.r.x), fmt_float(s.r.y), fmt_float(s.v.x), fmt_float(s.v.y))?;
    }
    if opts.emit_plotdata {
        let mut f = run.create("trajectory.dat")?;
        writeln!(f, "# t x y vx vy")?;
        for (t, s) in &rows {
            writeln!(f, "{t} {} {} {} {}", s.r.x, s.r.y, s.v.x, s.v.y)?;
        }
    }

    let last = rows[rows.len() - 1].1;
    let mut summary = json!({
        "field": built.field.label(),
        "samples": rows.len(),
        "final_state": [last.r.x, last.r.y, last.v.x, last.v.y],
        "integrator_stats": traj.stats,
    });
    if oracle.is_some() {
        summary["oracle_max_error"] = json!(worst);
        summary["oracle_tolerance"] = json!(ORACLE_TOL);
        summary["oracle_pass"] = json!(worst < ORACLE_TOL);
    }
    run.finish("simulate", summary, opts)?;
    if oracle.is_some() && !(worst < ORACLE_TOL) {
        return Err(CliError::Numeric(format!("trajectory differs from the closed form by {worst:e}")));
    }
    Ok(())
}

type Oracle = Box<dyn Fn(f64) -> Result<PhaseState, CliError>>;

/// Closed-form trajectory for the catalogue fields that have one.
fn oracle_for(cfg: &ExperimentConfig, init: PhaseState) -> Result<Oracle, CliError> {
    if cfg.metric != MetricSpec::Flat {
        return Err(CliError::Config("closed forms are only available in the flat metric".into()));
    }
    let name = cfg.field.name.as_deref().ok_or_else(|| CliError::Config("closed forms need a catalogue field".into()))?;
    let param = |key: &str, default: f64| -> Result<f64, CliError> {
        match cfg.field.params.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| CliError::Config(format!("parameter `{key}` must be a number"))),
        }
    };
    let (r0, v0) = (init.r, init.v);
    let t0 = cfg.t_span[0];
    Ok(match name {
        "zero" => Box::new(move |t| Ok(PhaseState::new(r0 + v0 * (t - t0), v0))),
        "gravity" => {
            let g = param("g", 1.0)?;
            Box::new(move |t| {
                let dt = t - t0;
                let r = r0 + v0 * dt - Vec2::new(0.0, 0.5 * g * dt * dt);
                Ok(PhaseState::new(r, v0 - Vec2::new(0.0, g * dt)))
            })
        }
        "oscillator" => {
            let w = param("omega", 1.0)?;
            Box::new(move |t| {
                let (s, c) = (w * (t - t0)).sin_cos();
                let r = Vec2::new(r0.x + v0.x * (t - t0), r0.y * c + v0.y / w * s);
                Ok(PhaseState::new(r, Vec2::new(v0.x, -r0.y * w * s + v0.y * c)))
            })
        }
        "anisotropic" => {
            let a0 = match cfg.field.params.get("a") {
                None => 1.0,
                Some(v) => match serde_json::from_value::<Profile>(v.clone()) {
                    Ok(Profile::Constant(c)) => c,
                    _ => return Err(CliError::Config("the cycloid closed form needs a constant `a`".into())),
                },
            };
            let p = CycloidParams::new(r0.x, r0.y, v0.y.atan2(v0.x), v0.norm(), a0)?;
            let (lo, hi) = p.interval();
            for t in cfg.t_span {
                if !(t - t0 > lo && t - t0 < hi) {
                    return Err(CliError::Config(format!("t_span leaves the cycloid interval ({lo}, {hi})")));
                }
            }
            Box::new(move |t| Ok(cycloid(&p, t - t0)?))
        }
        other => return Err(CliError::Config(format!("no closed form for field `{other}`"))),
    })
}

pub fn shift(opts: &GlobalOpts) -> Result<(), CliError> {
    let mut run = Run::open(opts)?;
    let cfg = run.cfg.clone();
    let cfg = &cfg;
    let curve_spec = cfg.curve.as_ref().ok_or_else(|| CliError::Config("shift needs `curve`".into()))?;
    let curve = curve_spec.build(run.seed)?;
    let built = cfg.build_field()?;
    let metric = cfg.metric.build();
    let nu = cfg.nu.unwrap_or_default().build(&curve, &built.field)?;
    let grid = normal_shift(
        &curve,
        &built.field,
        &metric,
        nu.as_ref(),
        (cfg.t_span[0], cfg.t_span[1]),
        cfg.grid,
        &cfg.integrator,
    )?;
    let report = normality_report(&grid);

    grid.write_csv(run.create("shift.csv")?).map_err(csv_err)?;
    run.write_json("normality.json", &report)?;
    if opts.emit_plotdata {
        let mut f = run.create("shift_curves.dat")?;
        for (t, row) in grid.t_nodes.iter().zip(&grid.states) {
            writeln!(f, "# t = {t}")?;
            for s in row {
                writeln!(f, "{} {}", s.r.x, s.r.y)?;
            }
            writeln!(f)?;
        }
        let mut f = run.create("phi.dat")?;
        writeln!(f, "# t s phi")?;
        for (t, row) in grid.t_nodes.iter().zip(&grid.phi) {
            for (s, phi) in grid.s_nodes.iter().zip(row) {
                writeln!(f, "{t} {s} {phi}")?;
            }
            writeln!(f)?;
        }
    }
    let nu_kind = match cfg.nu.unwrap_or_default() {
        NuSpec::Constant { .. } => "constant",
        NuSpec::Linear { .. } => "linear",
        NuSpec::Solve { .. } => "solved",
    };
    let summary = json!({
        "field": built.field.label(),
        "nu": nu_kind,
        "normal": report.normal,
        "max_abs_phi": report.max_abs_phi,
        "max_abs_phi_final": report.max_abs_phi_final,
        "max_angle_deviation_deg": report.max_angle_deviation_deg,
        "phi_tol": report.phi_tol,
    });
    if !opts.json {
        println!("shift is {}", if report.normal { "normal" } else { "not normal" });
    }
    run.finish("shift", summary, opts)
}

pub fn check(opts: &GlobalOpts) -> Result<(), CliError> {
    let mut run = Run::open(opts)?;
    let cfg = run.cfg.clone();
    let cfg = &cfg;
    let built = cfg.build_field()?;
    let probes = cfg.probes.region.sample(cfg.probes.count, run.seed);
    let reports = residual_sweep(&built.field, built.scalar.as_ref(), &probes)?;
    let summary = summarize(&reports);
    let non_finite = reports.iter().filter(|r| !(r.r1.is_finite() && r.r2.is_finite())).count();

    write_sweep_csv(&reports, run.create("residuals.csv")?).map_err(csv_err)?;
    run.write_json("summary.json", &summary)?;
    if opts.emit_plotdata {
        let mut f = run.create("residuals.dat")?;
        writeln!(f, "# v theta |r1| |r2|")?;
        for r in &reports {
            writeln!(f, "{} {} {} {}", r.probe.v, r.probe.theta, r.r1.abs(), r.r2.abs())?;
        }
    }
    let mut value = serde_json::to_value(&summary).map_err(|e| CliError::Config(e.to_string()))?;
    value["field"] = json!(built.field.label());
    value["non_finite"] = json!(non_finite);
    run.finish("check", value, opts)
}

pub fn catalogue(opts: &GlobalOpts) -> Result<(), CliError> {
    let entries = forces::catalogue_entries();
    if opts.json {
        println!("{}", serde_json::to_string_pretty(&entries).map_err(|e| CliError::Config(e.to_string()))?);
        return Ok(());
    }
    for e in &entries {
        let tag = if e.claims_normality { "normal" } else { "      " };
        println!("{:<16} {tag}  {}", e.name, e.description);
        println!("{:<16}         params: {}", "", e.example_params);
    }
    Ok(())
}
