//! Time integration of synthesized fields.
//!
//! Two methods are provided: classical RK4 with a fixed step, and the
//! Dormand-Prince 5(4) embedded pair with PI step control. Either can be
//! followed by a projection back onto the level set of the first integrals
//! after every accepted step.

mod projection;
mod stepper;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr, Program};
use crate::field::{DeformationSpec, FieldError, Invariants, VectorField};

pub use projection::{
    project_onto_invariants, project_with, ProjectionError, PROJECTION_MAX_ITERATIONS,
    PROJECTION_TOLERANCE, RANK_THRESHOLD,
};
use stepper::{error_norm, rk4_step, DopriWork, Fault, PiController};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FixedRk4,
    AdaptiveEmbedded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for RK4; initial step for the adaptive method (0 picks one).
    pub step: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub t0: f64,
    pub t1: f64,
    /// Project onto the initial level set after each accepted step.
    pub project: bool,
    pub max_steps: usize,
    /// Terminate when the state comes this close to a declared pole.
    pub guard_radius: f64,
    /// Smallest admissible adaptive step, relative to `max(1, |t|)`.
    pub min_step: f64,
    /// Times the stepper must land on exactly (in addition to `t1`).
    pub checkpoints: Vec<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::AdaptiveEmbedded,
            step: 0.0,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            t0: 0.0,
            t1: 1.0,
            project: false,
            max_steps: 1_000_000,
            guard_radius: 1e-6,
            min_step: 1e-14,
            checkpoints: Vec::new(),
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64, t0: f64, t1: f64) -> Self {
        IntegratorConfig {
            method: Method::FixedRk4,
            step,
            t0,
            t1,
            ..Default::default()
        }
    }

    pub fn adaptive(tol: f64, t0: f64, t1: f64) -> Self {
        IntegratorConfig {
            method: Method::AdaptiveEmbedded,
            abs_tol: tol,
            rel_tol: tol,
            t0,
            t1,
            ..Default::default()
        }
    }

    pub fn with_projection(mut self, on: bool) -> Self {
        self.project = on;
        self
    }

    pub fn with_checkpoints(mut self, mut times: Vec<f64>) -> Self {
        times.sort_by(f64::total_cmp);
        self.checkpoints = times;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |m: &str| Err(IntegrateError::Config(m.to_string()));
        if !(self.t1 > self.t0) || !self.t0.is_finite() || !self.t1.is_finite() {
            return bad("need finite t1 > t0");
        }
        match self.method {
            Method::FixedRk4 if !(self.step > 0.0) => return bad("fixed-rk4 needs step > 0"),
            Method::AdaptiveEmbedded if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) => {
                return bad("tolerances must be positive")
            }
            _ => {}
        }
        if self.step < 0.0 || !self.step.is_finite() {
            return bad("step must be a finite nonnegative number");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if !(self.guard_radius >= 0.0) || !(self.min_step > 0.0) {
            return bad("guard_radius must be >= 0 and min_step > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    SingularityGuard,
    StepFloor,
    MaxSteps,
    /// The time-reparametrization factor vanished or changed sign.
    ReparametrizationVanished,
    ProjectionFailure,
}

impl Termination {
    pub fn is_completed(self) -> bool {
        self == Termination::Completed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// Reparametrized clock; equals `t` for plain integration.
    pub s: f64,
    pub x: Vec<f64>,
    /// `I_1..I_{n-1}` at `x` (empty when integrated without a spec). A
    /// sample where an integral cannot be evaluated holds NaN.
    pub invariants: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub termination: Termination,
    /// Human-readable cause when the run did not complete.
    pub detail: Option<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("trajectory has the initial sample")
    }

    pub fn dimension(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    /// The sample recorded exactly at `t`, if any.
    pub fn at(&self, t: f64) -> Option<&Sample> {
        self.samples.iter().find(|s| s.t == t)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("invalid integrator config: {0}")]
    Config(String),
    #[error("initial state has {got} coordinates, field has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("initial state is singular: {0}")]
    SingularStart(String),
    #[error("projection requires a deformation spec")]
    ProjectionNeedsSpec,
    #[error("reparametrization factor is zero at the initial state")]
    ZeroReparametrization,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

struct Guarded<'a> {
    field: &'a VectorField,
    radius: f64,
    n: usize,
}

impl Guarded<'_> {
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), Fault> {
        let margin = self.field.poles().margin(x);
        if margin < self.radius {
            return Err(Fault::Singular(format!(
                "pole margin {margin:e} below guard radius {:e}",
                self.radius
            )));
        }
        self.field
            .eval_into(x, out)
            .map_err(|e| Fault::Singular(e.to_string()))?;
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Fault::Singular(format!(
                "component {} is not finite",
                i + 1
            )));
        }
        Ok(())
    }
}

/// Reparametrization factor `f`, required to keep the sign it has at `x0`.
struct Clock {
    program: Program,
    sign: f64,
}

impl Clock {
    fn eval(&self, x: &[f64]) -> Result<f64, Fault> {
        let f = self
            .program
            .eval(x)
            .map_err(|e| Fault::Reparametrization(e.to_string()))?;
        if !(f * self.sign > 0.0) || !f.is_finite() {
            return Err(Fault::Reparametrization(format!(
                "reparametrization factor reached {f:e}"
            )));
        }
        Ok(f)
    }
}

struct Run<'a> {
    guarded: Guarded<'a>,
    clock: Option<Clock>,
    invariants: Option<Invariants>,
    targets: Vec<f64>,
    cfg: &'a IntegratorConfig,
}

impl Run<'_> {
    /// Augmented state `[x, s]`; `ds/dt = f` (or 1) keeps the clock at the
    /// same order as the state.
    fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<(), Fault> {
        let n = self.guarded.n;
        let (x, s) = y.split_at(n);
        debug_assert_eq!(s.len(), 1);
        self.guarded.eval(x, &mut dy[..n])?;
        let f = match &self.clock {
            Some(c) => c.eval(x)?,
            None => 1.0,
        };
        if self.clock.is_some() {
            for d in &mut dy[..n] {
                *d *= f;
            }
        }
        dy[n] = f;
        Ok(())
    }

    fn sample(&self, t: f64, y: &[f64]) -> Sample {
        let n = self.guarded.n;
        let x = y[..n].to_vec();
        let invariants = match &self.invariants {
            Some(inv) => inv
                .values(&x)
                .unwrap_or_else(|_| vec![f64::NAN; inv.count()]),
            None => Vec::new(),
        };
        Sample {
            t,
            s: if self.clock.is_some() { y[n] } else { t },
            x,
            invariants,
        }
    }

    fn project(&self, y: &mut [f64]) -> Result<(), String> {
        if !self.cfg.project {
            return Ok(());
        }
        let inv = self.invariants.as_ref().expect("checked at setup");
        let n = self.guarded.n;
        let x = project_with(inv, &y[..n], &self.targets).map_err(|e| e.to_string())?;
        y[..n].copy_from_slice(&x);
        Ok(())
    }

    fn next_stop(&self, t: f64) -> f64 {
        self.cfg
            .checkpoints
            .iter()
            .copied()
            .find(|&c| c > t && c < self.cfg.t1)
            .unwrap_or(self.cfg.t1)
    }

    fn finish(
        samples: Vec<Sample>,
        termination: Termination,
        detail: Option<String>,
    ) -> Trajectory {
        Trajectory {
            samples,
            termination,
            detail,
        }
    }

    fn fault(samples: Vec<Sample>, fault: Fault) -> Trajectory {
        match fault {
            Fault::Singular(m) => Self::finish(samples, Termination::SingularityGuard, Some(m)),
            Fault::Reparametrization(m) => {
                Self::finish(samples, Termination::ReparametrizationVanished, Some(m))
            }
        }
    }

    fn fixed(&self, mut y: Vec<f64>) -> Trajectory {
        let cfg = self.cfg;
        let h = cfg.step;
        let mut samples = vec![self.sample(cfg.t0, &y)];
        let mut out = vec![0.0; y.len()];
        let mut t = cfg.t0;
        let mut k: u64 = 0;
        let mut rhs = |y: &[f64], dy: &mut [f64]| self.rhs(y, dy);
        for _ in 0..cfg.max_steps {
            let grid = cfg.t0 + (k + 1) as f64 * h;
            let stop = self.next_stop(t);
            // absorb a final sliver shorter than a rounding error
            let target = if grid >= stop - 1e-9 * h { stop } else { grid };
            if let Err(f) = rk4_step(&mut rhs, &y, target - t, &mut out) {
                return Self::fault(samples, f);
            }
            std::mem::swap(&mut y, &mut out);
            if let Err(m) = self.project(&mut y) {
                return Self::finish(samples, Termination::ProjectionFailure, Some(m));
            }
            if target >= grid - 1e-9 * h {
                k += 1;
            }
            t = target;
            samples.push(self.sample(t, &y));
            if t >= cfg.t1 {
                return Self::finish(samples, Termination::Completed, None);
            }
        }
        Self::finish(
            samples,
            Termination::MaxSteps,
            Some(format!("{} steps", cfg.max_steps)),
        )
    }

    fn initial_step(&self, y: &[f64], f0: &[f64]) -> f64 {
        let cfg = self.cfg;
        let span = cfg.t1 - cfg.t0;
        if cfg.step > 0.0 {
            return cfg.step.min(span);
        }
        let sc: Vec<f64> = y
            .iter()
            .map(|v| cfg.abs_tol + cfg.rel_tol * v.abs())
            .collect();
        let rms = |v: &[f64]| {
            (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let d0 = rms(y);
        let d1 = rms(f0);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
        let mut f1 = vec![0.0; y.len()];
        let d2 = match self.rhs(&y1, &mut f1) {
            Ok(()) => rms(&f1.iter().zip(f0).map(|(a, b)| a - b).collect::<Vec<_>>()) / h0,
            Err(_) => return h0.min(span),
        };
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }

    fn adaptive(&self, mut y: Vec<f64>) -> Trajectory {
        let cfg = self.cfg;
        let mut samples = vec![self.sample(cfg.t0, &y)];
        let mut work = DopriWork::new(y.len());
        if let Err(f) = self.rhs(&y, work.k1_mut()) {
            return Self::fault(samples, f);
        }
        let mut h = self.initial_step(&y, &work.k1_mut().clone());
        let mut t = cfg.t0;
        let mut ctl = PiController::new();
        let mut rhs = |y: &[f64], dy: &mut [f64]| self.rhs(y, dy);
        for _ in 0..cfg.max_steps {
            let stop = self.next_stop(t);
            let floor = cfg.min_step * t.abs().max(1.0);
            if h < floor {
                return Self::finish(
                    samples,
                    Termination::StepFloor,
                    Some(format!("step {h:e} at t = {t}")),
                );
            }
            let landing = t + h >= stop - floor;
            let h_try = if landing { stop - t } else { h };
            if let Err(f) = work.step(&mut rhs, &y, h_try) {
                return Self::fault(samples, f);
            }
            let err = error_norm(&work.err, &y, &work.y_new, cfg.abs_tol, cfg.rel_tol);
            if !err.is_finite() {
                h = h_try * PiController::MIN_FACTOR;
                continue;
            }
            let accepted = err <= 1.0;
            let fac = ctl.factor(err, accepted);
            if !accepted {
                h = h_try * fac;
                continue;
            }
            ctl.record(err);
            t = if landing { stop } else { t + h_try };
            y.copy_from_slice(&work.y_new);
            work.accept_fsal();
            if cfg.project {
                if let Err(m) = self.project(&mut y) {
                    return Self::finish(samples, Termination::ProjectionFailure, Some(m));
                }
                if let Err(f) = self.rhs(&y, work.k1_mut()) {
                    samples.push(self.sample(t, &y));
                    return Self::fault(samples, f);
                }
            }
            samples.push(self.sample(t, &y));
            if t >= cfg.t1 {
                return Self::finish(samples, Termination::Completed, None);
            }
            // a landing step may have been shortened; grow from the step the controller chose
            h = h_try.max(if landing { h } else { 0.0 }) * fac;
        }
        Self::finish(
            samples,
            Termination::MaxSteps,
            Some(format!("{} steps", cfg.max_steps)),
        )
    }
}

fn run(
    field: &VectorField,
    clock: Option<&Expr>,
    spec: Option<&DeformationSpec>,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    cfg.validate()?;
    let n = field.dimension();
    if x0.len() != n {
        return Err(IntegrateError::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    if let Some(s) = spec {
        if s.dimension() != n {
            return Err(IntegrateError::Dimension {
                expected: n,
                got: s.dimension(),
            });
        }
    }
    if cfg.project && spec.is_none() {
        return Err(IntegrateError::ProjectionNeedsSpec);
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::SingularStart(
            "non-finite initial state".into(),
        ));
    }
    let clock = match clock {
        Some(f) => {
            let program = Program::compile(f, field.bindings())?;
            let f0 = program.eval(x0)?;
            if f0 == 0.0 || !f0.is_finite() {
                return Err(IntegrateError::ZeroReparametrization);
            }
            Some(Clock {
                program,
                sign: f0.signum(),
            })
        }
        None => None,
    };
    let invariants = spec.map(DeformationSpec::invariants).transpose()?;
    let targets = match &invariants {
        Some(inv) => inv.values(x0)?,
        None => Vec::new(),
    };
    let run = Run {
        guarded: Guarded {
            field,
            radius: cfg.guard_radius,
            n,
        },
        clock,
        invariants,
        targets,
        cfg,
    };
    let mut y = x0.to_vec();
    y.push(cfg.t0);
    let mut probe = vec![0.0; n + 1];
    if let Err(f) = run.rhs(&y, &mut probe) {
        return Err(match f {
            Fault::Singular(m) => IntegrateError::SingularStart(m),
            Fault::Reparametrization(_) => IntegrateError::ZeroReparametrization,
        });
    }
    Ok(match cfg.method {
        Method::FixedRk4 => run.fixed(y),
        Method::AdaptiveEmbedded => run.adaptive(y),
    })
}

/// Integrate `dx/dt = V(x)` from `x0`. When `spec` is given, every sample
/// carries the values of its first integrals, and projection may be enabled.
pub fn integrate(
    field: &VectorField,
    spec: Option<&DeformationSpec>,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    run(field, None, spec, x0, cfg)
}

/// Integrate `dx/dt = f(x) V(x)` and accumulate `s(t) = int_0^t f` as an
/// extra state, so that `x(t)` follows the orbit of `V` with clock `s`.
///
/// The run stops with [`Termination::ReparametrizationVanished`] if `f`
/// vanishes or changes sign.
pub fn integrate_reparametrized(
    field: &VectorField,
    f: &Expr,
    spec: Option<&DeformationSpec>,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    run(field, Some(f), spec, x0, cfg)
}
