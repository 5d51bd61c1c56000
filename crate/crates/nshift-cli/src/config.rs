//! Experiment configuration: a single JSON document.

use std::path::{Path, PathBuf};

use normal_shift::forces::{self, ForceField, MetricSpec, Profile, ScalarFieldA};
use normal_shift::geometry::Vec2;
use normal_shift::normality::ProbeBox;
use normal_shift::ode::IntegratorConfig;
use normal_shift::shift::{ConstantNu, Curve, GridSpec, LinearNu, NuFunction, Orientation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub field: FieldSpec,
    #[serde(default)]
    pub metric: MetricSpec,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub curve: Option<CurveSpec>,
    #[serde(default)]
    pub nu: Option<NuSpec>,
    #[serde(default = "default_span")]
    pub t_span: [f64; 2],
    #[serde(default)]
    pub grid: GridSpec,
    /// Number of equally spaced output times for `simulate`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub probes: ProbeSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

fn default_span() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_samples() -> usize {
    101
}

/// Either a catalogue entry (`name` with optional `params`) or a scalar
/// ansatz (`scalar`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub scalar: Option<ScalarSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarSpec {
    SpeedOnly { a: Profile },
    Anisotropic { a: Profile },
    DiscInvariant { radius: f64, g: Profile },
    /// `A = v² θ`, which does not solve the reduced equation.
    VSquaredTheta,
    /// `A = a(v, θ − γ)/ρ` built from another scalar.
    GammaShifted { inner: Box<ScalarSpec> },
}

impl ScalarSpec {
    pub fn build(&self) -> ScalarFieldA {
        match self {
            ScalarSpec::SpeedOnly { a } => ScalarFieldA::speed_only(a.clone()),
            ScalarSpec::Anisotropic { a } => ScalarFieldA::anisotropic(a.clone()),
            ScalarSpec::DiscInvariant { radius, g } => ScalarFieldA::disc_invariant(*radius, g.clone()),
            ScalarSpec::VSquaredTheta => ScalarFieldA::new("v_squared_theta", |_, _, v, th| v * v * th),
            ScalarSpec::GammaShifted { inner } => ScalarFieldA::gamma_shifted(&inner.build()),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub r: [f64; 2],
    pub v: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Line {
        p0: [f64; 2],
        dir: [f64; 2],
        s_range: [f64; 2],
        #[serde(default)]
        orientation: Orientation,
    },
    Circle {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
        s_range: [f64; 2],
        #[serde(default)]
        orientation: Orientation,
    },
    Spline {
        points: Vec<[f64; 2]>,
        #[serde(default)]
        orientation: Orientation,
    },
    /// Spline through `points` random nodes drawn from the run seed.
    RandomSpline {
        #[serde(default = "five")]
        points: usize,
        #[serde(default)]
        orientation: Orientation,
    },
}

fn five() -> usize {
    5
}

impl CurveSpec {
    pub fn build(&self, seed: u64) -> Result<Curve, CliError> {
        let v = |p: [f64; 2]| Vec2::new(p[0], p[1]);
        let curve = match self {
            CurveSpec::Line { p0, dir, s_range, orientation } => {
                Curve::line(v(*p0), v(*dir), (s_range[0], s_range[1]), *orientation)
            }
            CurveSpec::Circle { center, radius, s_range, orientation } => {
                if !(*radius > 0.0) {
                    return Err(CliError::Config("circle radius must be positive".into()));
                }
                Curve::circle(v(*center), *radius, (s_range[0], s_range[1]), *orientation)
            }
            CurveSpec::Spline { points, orientation } => {
                let pts: Vec<Vec2> = points.iter().map(|p| v(*p)).collect();
                Curve::spline(&pts, *orientation)?
            }
            CurveSpec::RandomSpline { points, orientation } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = (*points).max(3);
                let pts: Vec<Vec2> = (0..n)
                    .map(|k| {
                        let x = -1.0 + 2.0 * k as f64 / (n - 1) as f64 + rng.gen_range(-0.1..0.1);
                        Vec2::new(x, rng.gen_range(-0.5..0.5))
                    })
                    .collect();
                Curve::spline(&pts, *orientation)?
            }
        };
        Ok(curve)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuSpec {
    Constant { value: f64 },
    /// ν(s) = a + b s.
    Linear { a: f64, b: f64 },
    /// Solve the modulus equation from ν(s0) = nu0.
    Solve { s0: f64, nu0: f64 },
}

impl Default for NuSpec {
    fn default() -> Self {
        NuSpec::Constant { value: 1.0 }
    }
}

impl NuSpec {
    pub fn build(&self, curve: &Curve, field: &ForceField) -> Result<Box<dyn NuFunction>, CliError> {
        Ok(match *self {
            NuSpec::Constant { value } => Box::new(ConstantNu(value)),
            NuSpec::Linear { a, b } => Box::new(LinearNu { a, b }),
            NuSpec::Solve { s0, nu0 } => Box::new(normal_shift::shift::solve_nu(curve, field, s0, nu0, curve.s_range)?),
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default = "default_probe_count")]
    pub count: usize,
    #[serde(default)]
    pub region: ProbeBox,
}

fn default_probe_count() -> usize {
    200
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self { count: default_probe_count(), region: ProbeBox::default() }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// The force field and, for a scalar ansatz, its generating function.
pub struct BuiltField {
    pub field: ForceField,
    pub scalar: Option<ScalarFieldA>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.integrator.validate()?;
        if !(cfg.t_span[0].is_finite() && cfg.t_span[1].is_finite()) {
            return Err(CliError::Config("t_span must be finite".into()));
        }
        Ok(cfg)
    }

    pub fn build_field(&self) -> Result<BuiltField, CliError> {
        match (&self.field.name, &self.field.scalar) {
            (Some(name), None) => Ok(BuiltField { field: forces::catalogue(name, &self.field.params)?, scalar: None }),
            (None, Some(spec)) => {
                let a = spec.build();
                let field = match self.metric {
                    MetricSpec::Flat => forces::from_scalar_ansatz(&a),
                    m => forces::metric_scalar_ansatz(&a, &m.build()),
                };
                Ok(BuiltField { field, scalar: Some(a) })
            }
            _ => Err(CliError::Config("field needs exactly one of `name` or `scalar`".into())),
        }
    }
}
