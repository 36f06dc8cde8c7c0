//! The four verbs. Each returns a typed outcome and writes its files; the
//! binary only prints and maps outcomes to exit codes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use eulertop::diagnose::{
    drift_report_with, field_identity_suite_with, InvariantReport, SampleDomain,
};
use eulertop::expr::Expr;
use eulertop::field::{builtin, synthesize, Provenance, VectorField};
use eulertop::{integrate, integrate_reparametrized, IntegratorConfig, Termination, Trajectory};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{check_sweep, Loaded, ResolvedSystem, SweepConfig};
use crate::output::{num, trajectory_csv, write_atomic, write_json};
use crate::CliError;

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";
pub const VERIFY_REPORT: &str = "verify.json";
pub const SWEEP_SUMMARY: &str = "summary.csv";

fn run_error(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Run(format!("{context}: {e}"))
}

/// Integrate `system` from `x0`, through the reparametrized clock when `f`
/// is given.
pub fn run_system(
    system: &ResolvedSystem,
    f: Option<&Expr>,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CliError> {
    let spec = Some(&system.spec);
    match f {
        Some(f) => integrate_reparametrized(&system.field, f, spec, x0, cfg),
        None => integrate(&system.field, spec, x0, cfg),
    }
    .map_err(|e| run_error("integration", e))
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub system: String,
    pub dimension: usize,
    pub parameters: Vec<(String, f64)>,
    pub termination: Termination,
    pub detail: Option<String>,
    pub samples: usize,
    pub t_final: f64,
    pub drift: InvariantReport,
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub trajectory: Trajectory,
    pub report: SimulationReport,
    pub dir: PathBuf,
}

impl SimulateOutcome {
    pub fn completed(&self) -> bool {
        self.trajectory.termination.is_completed()
    }
}

fn simulate_into(
    loaded: &Loaded,
    system: &ResolvedSystem,
    dir: &Path,
) -> Result<SimulateOutcome, CliError> {
    let cfg = &loaded.config;
    let traj = run_system(
        system,
        loaded.reparametrization.as_ref(),
        &cfg.x0,
        &cfg.integrator,
    )?;
    let drift = drift_report_with(&traj, &system.spec, cfg.verify.thresholds)
        .map_err(|e| run_error("drift", e))?;
    let report = SimulationReport {
        system: system.name.clone(),
        dimension: system.dimension(),
        parameters: system
            .spec
            .bindings()
            .iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        termination: traj.termination,
        detail: traj.detail.clone(),
        samples: traj.len(),
        t_final: traj.last().t,
        drift,
    };
    write_atomic(
        &dir.join(&cfg.output.trajectory),
        trajectory_csv(&traj, system.dimension()).as_bytes(),
    )?;
    write_json(&dir.join(&cfg.output.report), &report)?;
    Ok(SimulateOutcome {
        trajectory: traj,
        report,
        dir: dir.to_path_buf(),
    })
}

fn write_effective_config(loaded: &Loaded, dir: &Path) -> Result<(), CliError> {
    write_atomic(
        &dir.join(EFFECTIVE_CONFIG),
        loaded.config.to_toml().as_bytes(),
    )
}

/// Integrate the configured system; writes the trajectory CSV, the report
/// and the effective config into the output directory.
pub fn simulate(loaded: &Loaded) -> Result<SimulateOutcome, CliError> {
    let dir = loaded.config.output.dir.clone();
    let out = simulate_into(loaded, &loaded.system, &dir)?;
    write_effective_config(loaded, &dir)?;
    Ok(out)
}

/// Max over points of `max_i |a_i - b_i| / max_i |b_i|`, skipping points
/// where either field cannot be evaluated. Returns the deviation and the
/// number of points used.
pub fn max_relative_deviation(
    a: &VectorField,
    b: &VectorField,
    points: &[Vec<f64>],
) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut used = 0;
    for x in points {
        let (Ok(va), Ok(vb)) = (a.eval(x), b.eval(x)) else {
            continue;
        };
        if va.iter().chain(&vb).any(|v| !v.is_finite()) {
            continue;
        }
        used += 1;
        let diff = va
            .iter()
            .zip(&vb)
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        if diff > 0.0 {
            let size = vb.iter().fold(0.0f64, |m, q| m.max(q.abs()));
            worst = worst.max(diff / size);
        }
    }
    (worst, used)
}

fn sample_points(loaded: &Loaded) -> Result<Vec<Vec<f64>>, CliError> {
    let v = &loaded.config.verify;
    SampleDomain::cube(loaded.system.dimension(), v.half_width)
        .guarding(loaded.system.poles(), v.guard)
        .sample(v.samples, loaded.config.seed)
        .map_err(|e| run_error("sampling", e))
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedFormCheck {
    pub provenance: Provenance,
    pub max_relative_deviation: f64,
    pub points_compared: usize,
    pub tolerance: f64,
    pub identities: InvariantReport,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunCheck {
    pub termination: Termination,
    pub detail: Option<String>,
    pub drift: InvariantReport,
}

/// Undeformed systems only: a trajectory started at `(2, 0, ..., 0)` must
/// not move and must show exactly zero drift.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumCheck {
    pub x0: Vec<f64>,
    pub max_displacement: f64,
    pub max_drift: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub system: String,
    pub seed: u64,
    pub points: usize,
    pub synthesized: InvariantReport,
    pub closed_form: Option<ClosedFormCheck>,
    pub run: RunCheck,
    pub equilibrium: Option<EquilibriumCheck>,
    pub passed: bool,
}

impl VerifyReport {
    /// Plain-text residual table.
    pub fn table(&self) -> String {
        let mut t = String::new();
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let opt = |v: Option<bool>| v.map_or("-", verdict);
        let s = &self.synthesized;
        writeln!(
            t,
            "system {} (seed {}, {} points)",
            self.system, self.seed, self.points
        )
        .unwrap();
        writeln!(
            t,
            "{:<34} {:>12} {:>12}  {}",
            "check", "residual", "threshold", "verdict"
        )
        .unwrap();
        let mut row = |name: &str, value: f64, threshold: f64, ok: &str| {
            writeln!(t, "{name:<34} {value:>12.3e} {threshold:>12.3e}  {ok}").unwrap();
        };
        row(
            "field orthogonality (scaled)",
            s.worst_orthogonality_scaled(),
            s.thresholds.orthogonality,
            opt(s.verdict.orthogonal),
        );
        row(
            "field divergence",
            s.max_divergence.unwrap_or(f64::NAN),
            s.thresholds.divergence,
            opt(s.verdict.divergence_free),
        );
        row(
            "field sigma_min",
            s.min_singular_value.unwrap_or(f64::NAN),
            s.thresholds.independence,
            opt(s.verdict.independent),
        );
        if let Some(c) = &self.closed_form {
            let i = &c.identities;
            row(
                "closed form deviation",
                c.max_relative_deviation,
                c.tolerance,
                verdict(c.max_relative_deviation <= c.tolerance),
            );
            row(
                "closed form orthogonality (scaled)",
                i.worst_orthogonality_scaled(),
                i.thresholds.orthogonality,
                opt(i.verdict.orthogonal),
            );
            row(
                "closed form divergence",
                i.max_divergence.unwrap_or(f64::NAN),
                i.thresholds.divergence,
                opt(i.verdict.divergence_free),
            );
        }
        let d = &self.run.drift;
        row(
            "run drift",
            d.worst_drift(),
            d.thresholds.drift,
            opt(d.verdict.conserved),
        );
        if let Some(e) = &self.equilibrium {
            row("equilibrium drift", e.max_drift, 0.0, verdict(e.passed));
            row(
                "equilibrium displacement",
                e.max_displacement,
                0.0,
                verdict(e.passed),
            );
        }
        if !self.run.termination.is_completed() {
            writeln!(t, "note: run stopped early ({:?})", self.run.termination).unwrap();
        }
        writeln!(t, "{}", verdict(self.passed)).unwrap();
        t
    }
}

fn equilibrium_check(loaded: &Loaded) -> Result<Option<EquilibriumCheck>, CliError> {
    let system = &loaded.system;
    if system.spec.deformations().iter().any(|a| !a.is_zero()) {
        return Ok(None);
    }
    let mut x0 = vec![0.0; system.dimension()];
    x0[0] = 2.0;
    let traj = run_system(system, None, &x0, &loaded.config.integrator)?;
    let drift = drift_report_with(&traj, &system.spec, loaded.config.verify.thresholds)
        .map_err(|e| run_error("equilibrium drift", e))?;
    let max_displacement = traj
        .samples
        .iter()
        .flat_map(|s| s.x.iter().zip(&x0).map(|(a, b)| (a - b).abs()))
        .fold(0.0f64, f64::max);
    let max_drift = drift.worst_drift();
    let passed = traj.termination.is_completed() && max_drift == 0.0 && max_displacement == 0.0;
    Ok(Some(EquilibriumCheck {
        x0,
        max_displacement,
        max_drift,
        passed,
    }))
}

/// Identity suite on the synthesized field and on the closed form (when
/// there is one), drift of the configured run, and the equilibrium check
/// for undeformed systems. Writes `verify.json`.
pub fn verify(loaded: &Loaded) -> Result<VerifyReport, CliError> {
    let system = &loaded.system;
    let thresholds = loaded.config.verify.thresholds;
    let points = sample_points(loaded)?;
    let synthesized = field_identity_suite_with(&system.field, &system.spec, &points, thresholds)
        .map_err(|e| run_error("identity suite", e))?;
    let closed_form = match &system.closed_form {
        None => None,
        Some(cf) => {
            let identities = field_identity_suite_with(cf, &system.spec, &points, thresholds)
                .map_err(|e| run_error("closed-form identity suite", e))?;
            let (dev, used) = max_relative_deviation(&system.field, cf, &points);
            let tolerance = loaded.config.verify.closed_form_tolerance;
            let passed = used > 0 && dev <= tolerance && identities.passed();
            Some(ClosedFormCheck {
                provenance: cf.provenance(),
                max_relative_deviation: dev,
                points_compared: used,
                tolerance,
                identities,
                passed,
            })
        }
    };
    let traj = run_system(
        system,
        loaded.reparametrization.as_ref(),
        &loaded.config.x0,
        &loaded.config.integrator,
    )?;
    let drift =
        drift_report_with(&traj, &system.spec, thresholds).map_err(|e| run_error("drift", e))?;
    let run = RunCheck {
        termination: traj.termination,
        detail: traj.detail,
        drift,
    };
    let equilibrium = equilibrium_check(loaded)?;
    let passed = synthesized.passed()
        && closed_form.as_ref().is_none_or(|c| c.passed)
        && run.drift.passed()
        && equilibrium.as_ref().is_none_or(|e| e.passed);
    let report = VerifyReport {
        system: system.name.clone(),
        seed: loaded.config.seed,
        points: points.len(),
        synthesized,
        closed_form,
        run,
        equilibrium,
        passed,
    };
    let dir = &loaded.config.output.dir;
    write_json(&dir.join(VERIFY_REPORT), &report)?;
    write_effective_config(loaded, dir)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct Derivation {
    /// `dxi/dt = <expr>` per component.
    pub lines: Vec<String>,
    /// Sampled deviation from the closed form and the number of points.
    pub closed_form_deviation: Option<(f64, usize)>,
}

impl Derivation {
    pub fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        if let Some((dev, used)) = self.closed_form_deviation {
            writeln!(
                s,
                "max relative deviation from closed form: {dev:.3e} ({used} points)"
            )
            .unwrap();
        }
        s
    }
}

/// The synthesized right-hand sides as canonical expression text.
pub fn derive(loaded: &Loaded) -> Result<Derivation, CliError> {
    let system = &loaded.system;
    let n = system.dimension();
    let lines = match system.field.components() {
        Some(comps) => comps
            .iter()
            .enumerate()
            .map(|(i, e)| format!("dx{}/dt = {e}", i + 1))
            .collect(),
        // Above the symbolic cutoff the field is evaluated from gradients.
        None => (1..=n)
            .map(|i| {
                format!(
                    "dx{i}/dt = {:e} * cofactor_{i}(grad I1, ..., grad I{})",
                    eulertop::field::nd_normalization(n),
                    n - 1
                )
            })
            .collect(),
    };
    let closed_form_deviation = match &system.closed_form {
        Some(cf) => Some(max_relative_deviation(
            &system.field,
            cf,
            &sample_points(loaded)?,
        )),
        None => None,
    };
    Ok(Derivation {
        lines,
        closed_form_deviation,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub termination: Termination,
    pub max_drift: f64,
    /// Max `|x_g(t) - x_0(t)|` over the checkpoints and `t1`, against the
    /// undeformed run from the same state; NaN when neither was reached.
    pub deviation: f64,
    pub flagged: bool,
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
    /// Deviation strictly decreases as `|value|` decreases (unflagged rows),
    /// and is exactly zero at a zero value.
    pub monotone: bool,
    pub summary: PathBuf,
}

impl SweepOutcome {
    pub fn passed(&self) -> bool {
        self.monotone && self.rows.iter().all(|r| !r.flagged)
    }
}

fn rebind(
    system: &ResolvedSystem,
    parameter: &str,
    value: f64,
) -> Result<ResolvedSystem, CliError> {
    if let Some(b) = system.builtin {
        let sys =
            builtin(b.name(), system.dimension(), value).map_err(|e| run_error("sweep", e))?;
        let field = synthesize(&sys.spec).map_err(|e| run_error("sweep", e))?;
        return Ok(ResolvedSystem {
            field,
            spec: sys.spec,
            closed_form: sys.closed_form,
            ..system.clone()
        });
    }
    let mut bindings = system.spec.bindings().clone();
    bindings.set(parameter, value);
    let spec = system
        .spec
        .clone()
        .with_bindings(bindings)
        .map_err(|e| run_error("sweep", e))?;
    let field = synthesize(&spec).map_err(|e| run_error("sweep", e))?;
    Ok(ResolvedSystem {
        spec,
        field,
        closed_form: None,
        ..system.clone()
    })
}

fn deviation(traj: &Trajectory, reference: &Trajectory, times: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    let mut compared = 0;
    for &t in times {
        if let (Some(a), Some(b)) = (traj.at(t), reference.at(t)) {
            compared += 1;
            for (p, q) in a.x.iter().zip(&b.x) {
                let d = (p - q).abs();
                worst = if d.is_nan() {
                    f64::INFINITY
                } else {
                    worst.max(d)
                };
            }
        }
    }
    if compared == 0 {
        f64::NAN
    } else {
        worst
    }
}

fn is_monotone(rows: &[SweepRow]) -> bool {
    let mut ok: Vec<&SweepRow> = rows.iter().filter(|r| !r.flagged).collect();
    ok.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()));
    let zero_exact = ok
        .iter()
        .filter(|r| r.value == 0.0)
        .all(|r| r.deviation == 0.0);
    let decreasing = ok
        .windows(2)
        .all(|w| w[0].value.abs() == w[1].value.abs() || w[1].deviation < w[0].deviation);
    zero_exact && decreasing
}

/// Simulate once per value of `sweep.parameter`, up to `sweep.workers` runs
/// at a time. Each run writes into its own subdirectory; the summary CSV
/// goes at the top of the output directory.
pub fn sweep(loaded: &Loaded, sweep: &SweepConfig) -> Result<SweepOutcome, CliError> {
    check_sweep(sweep, &loaded.system).map_err(CliError::Run)?;
    let cfg = &loaded.config;
    let out = cfg.output.dir.clone();
    let mut times = cfg.integrator.checkpoints.clone();
    times.push(cfg.integrator.t1);
    let reference_system = loaded.system.undeformed().map_err(CliError::Run)?;
    let reference = run_system(
        &reference_system,
        loaded.reparametrization.as_ref(),
        &cfg.x0,
        &cfg.integrator,
    )?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep.workers)
        .build()
        .map_err(|e| run_error("thread pool", e))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        sweep
            .values
            .par_iter()
            .enumerate()
            .map(|(k, &value)| {
                let system = rebind(&loaded.system, &sweep.parameter, value)?;
                let dir = out.join(format!("{k:02}_{}={value}", sweep.parameter));
                let sim = simulate_into(loaded, &system, &dir)?;
                let flagged = !sim.completed() || !reference.termination.is_completed();
                Ok(SweepRow {
                    value,
                    termination: sim.trajectory.termination,
                    max_drift: sim.report.drift.worst_drift(),
                    deviation: deviation(&sim.trajectory, &reference, &times),
                    flagged,
                    dir,
                })
            })
            .collect::<Result<_, CliError>>()
    })?;
    let mut csv = String::from("value,termination,max_drift,deviation_from_euler3,flag\n");
    for r in &rows {
        let term = serde_json::to_value(r.termination).expect("serializes");
        let flag = if r.flagged { "guarded" } else { "" };
        writeln!(
            csv,
            "{},{},{},{},{flag}",
            num(r.value),
            term.as_str().unwrap_or("?"),
            num(r.max_drift),
            num(r.deviation)
        )
        .unwrap();
    }
    let summary = out.join(SWEEP_SUMMARY);
    write_atomic(&summary, csv.as_bytes())?;
    write_effective_config(loaded, &out)?;
    let monotone = is_monotone(&rows);
    Ok(SweepOutcome {
        parameter: sweep.parameter.clone(),
        rows,
        monotone,
        summary,
    })
}
