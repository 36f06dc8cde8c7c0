//! Residual measurements for the promises the construction makes:
//! conservation along trajectories, orthogonality of the field to every
//! integral gradient, zero divergence and independence of the integrals.

mod mutate;
mod sample;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Program};
use crate::field::{DeformationSpec, FieldError, Invariants, VectorField};
use crate::integrate::Trajectory;

pub use mutate::{flip_term, mutate_component, top_level_terms};
pub use sample::SampleDomain;

/// Default independence threshold on the smallest singular value of the raw
/// gradient matrix.
pub const INDEPENDENCE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnoseError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("dimension mismatch: spec has {spec}, input has {input}")]
    Dimension { spec: usize, input: usize },
    #[error("integrals cannot be evaluated at the initial sample: {0}")]
    InitialSample(EvalError),
    #[error("no sample point could be evaluated ({skipped} skipped)")]
    NoUsableSamples { skipped: usize },
    #[error("rejection sampler accepted {accepted} of {wanted} points after {attempts} draws")]
    SamplerExhausted {
        wanted: usize,
        accepted: usize,
        attempts: usize,
    },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Pass limits applied when a report is judged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Max absolute drift `|I_k(t) - C_k|`.
    pub drift: f64,
    /// Max scaled orthogonality residual (see [`InvariantReport`]).
    pub orthogonality: f64,
    /// Max absolute divergence.
    pub divergence: f64,
    /// Min singular value of the gradient matrix.
    pub independence: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            drift: 1e-8,
            orthogonality: 1e-12,
            divergence: 1e-10,
            independence: INDEPENDENCE_THRESHOLD,
        }
    }
}

/// `None` means the quantity was not measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub conserved: Option<bool>,
    pub orthogonal: Option<bool>,
    pub divergence_free: Option<bool>,
    pub independent: Option<bool>,
}

impl Verdict {
    /// True when every measured check passed.
    pub fn passed(&self) -> bool {
        [
            self.conserved,
            self.orthogonal,
            self.divergence_free,
            self.independent,
        ]
        .into_iter()
        .all(|v| v != Some(false))
    }
}

/// Measured residuals. Empty vectors and `None` mean "not measured".
///
/// The scaled orthogonality residual is `|V . grad I_k| / (|V| |grad I_k| + 1)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub dimension: usize,
    /// `C_k = I_k` at the first sample.
    pub initial_values: Vec<f64>,
    /// Max `|I_k(t) - C_k|` per integral.
    pub max_drift: Vec<f64>,
    /// Max `|V . grad I_k|` per integral.
    pub max_orthogonality: Vec<f64>,
    pub max_orthogonality_scaled: Vec<f64>,
    pub max_divergence: Option<f64>,
    /// Smallest `sigma_min` of the gradient matrix over the evaluated points.
    pub min_singular_value: Option<f64>,
    pub points_evaluated: usize,
    /// Points (or samples) where an evaluation raised a domain error.
    pub points_skipped: usize,
    pub thresholds: Thresholds,
    pub verdict: Verdict,
}

impl InvariantReport {
    pub fn worst_drift(&self) -> f64 {
        self.max_drift.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn worst_orthogonality(&self) -> f64 {
        self.max_orthogonality.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn worst_orthogonality_scaled(&self) -> f64 {
        self.max_orthogonality_scaled
            .iter()
            .fold(0.0, |m, v| m.max(*v))
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }

    /// Re-judge the measured values against `thresholds`.
    pub fn judge(mut self, thresholds: Thresholds) -> Self {
        self.thresholds = thresholds;
        let measured = |v: &[f64]| !v.is_empty();
        self.verdict = Verdict {
            conserved: measured(&self.max_drift).then(|| self.worst_drift() <= thresholds.drift),
            orthogonal: measured(&self.max_orthogonality_scaled)
                .then(|| self.worst_orthogonality_scaled() <= thresholds.orthogonality),
            divergence_free: self.max_divergence.map(|d| d <= thresholds.divergence),
            independent: self.min_singular_value.map(|s| s > thresholds.independence),
        };
        self
    }
}

fn sigma_min(m: &DMatrix<f64>) -> f64 {
    m.singular_values().min()
}

/// Smallest singular value of the `(n-1) x n` gradient matrix at `x`.
/// The integrals are judged independent there if it exceeds
/// [`INDEPENDENCE_THRESHOLD`].
pub fn independence_check(spec: &DeformationSpec, x: &[f64]) -> Result<f64, DiagnoseError> {
    check_dim(spec.dimension(), x.len())?;
    let inv = spec.invariants()?;
    Ok(sigma_min(&inv.gradient_matrix(x)?))
}

fn check_dim(spec: usize, input: usize) -> Result<(), DiagnoseError> {
    if spec == input {
        Ok(())
    } else {
        Err(DiagnoseError::Dimension { spec, input })
    }
}

/// Drift of every integral along `traj`, measured against its value at the
/// first sample. The integrals are re-evaluated from `spec`; values stored
/// in the trajectory are not trusted. Independence is not judged here: an
/// equilibrium on a rank-deficient set is still a valid conserving run.
pub fn drift_report(
    traj: &Trajectory,
    spec: &DeformationSpec,
) -> Result<InvariantReport, DiagnoseError> {
    drift_report_with(traj, spec, Thresholds::default())
}

pub fn drift_report_with(
    traj: &Trajectory,
    spec: &DeformationSpec,
    thresholds: Thresholds,
) -> Result<InvariantReport, DiagnoseError> {
    let first = traj.samples.first().ok_or(DiagnoseError::EmptyTrajectory)?;
    check_dim(spec.dimension(), first.x.len())?;
    let inv = spec.invariants()?;
    let c = inv.values(&first.x).map_err(DiagnoseError::InitialSample)?;
    let mut drift = vec![0.0f64; c.len()];
    let mut skipped = 0;
    for s in &traj.samples {
        let Ok(vals) = inv.values(&s.x) else {
            skipped += 1;
            continue;
        };
        for (d, (v, c0)) in drift.iter_mut().zip(vals.iter().zip(&c)) {
            // NaN must not hide behind max()
            let e = (v - c0).abs();
            *d = if e.is_nan() { f64::INFINITY } else { d.max(e) };
        }
    }
    let report = InvariantReport {
        dimension: spec.dimension(),
        initial_values: c,
        max_drift: drift,
        points_evaluated: traj.samples.len() - skipped,
        points_skipped: skipped,
        ..Default::default()
    };
    Ok(report.judge(thresholds))
}

/// Symbolic divergence when the field has symbolic components; `None` for
/// fields evaluated through numeric cofactors.
fn divergence_program(v: &VectorField) -> Result<Option<Program>, DiagnoseError> {
    match v.divergence() {
        Some(d) => Ok(Some(Program::compile(&d, v.bindings())?)),
        None => Ok(None),
    }
}

/// Central-difference divergence with step `h * max(1, |x_i|)`.
pub fn fd_divergence(v: &VectorField, x: &[f64], h: f64) -> Result<f64, EvalError> {
    let mut xp = x.to_vec();
    let mut sum = 0.0;
    for i in 0..x.len() {
        let hi = h * x[i].abs().max(1.0);
        xp[i] = x[i] + hi;
        let fp = v.eval(&xp)?[i];
        xp[i] = x[i] - hi;
        let fm = v.eval(&xp)?[i];
        xp[i] = x[i];
        sum += (fp - fm) / (2.0 * hi);
    }
    Ok(sum)
}

struct PointResidual {
    orth: Vec<f64>,
    orth_scaled: Vec<f64>,
    div: f64,
    sigma: f64,
}

fn point_residual(
    v: &VectorField,
    inv: &Invariants,
    div: Option<&Program>,
    x: &[f64],
) -> Option<PointResidual> {
    let field = v.eval(x).ok()?;
    let grads = inv.gradient_matrix(x).ok()?;
    let mut orth = Vec::with_capacity(grads.nrows());
    let mut orth_scaled = Vec::with_capacity(grads.nrows());
    let vnorm = field.iter().map(|v| v * v).sum::<f64>().sqrt();
    for k in 0..grads.nrows() {
        let row = grads.row(k);
        let dot: f64 = field.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
        if !dot.is_finite() {
            return None;
        }
        orth.push(dot.abs());
        orth_scaled.push(dot.abs() / (vnorm * row.norm() + 1.0));
    }
    let div = match div {
        Some(p) => p.eval(x).ok()?,
        None => fd_divergence(v, x, 1e-5).ok()?,
    };
    Some(PointResidual {
        orth,
        orth_scaled,
        div: div.abs(),
        sigma: sigma_min(&grads),
    })
}

/// Orthogonality, divergence and independence residuals of `v` against the
/// integrals of `spec` at every point of `samples`. Points where anything
/// fails to evaluate are skipped and counted.
pub fn field_identity_suite(
    v: &VectorField,
    spec: &DeformationSpec,
    samples: &[Vec<f64>],
) -> Result<InvariantReport, DiagnoseError> {
    field_identity_suite_with(v, spec, samples, Thresholds::default())
}

pub fn field_identity_suite_with(
    v: &VectorField,
    spec: &DeformationSpec,
    samples: &[Vec<f64>],
    thresholds: Thresholds,
) -> Result<InvariantReport, DiagnoseError> {
    check_dim(spec.dimension(), v.dimension())?;
    let inv = spec.invariants()?;
    let div = divergence_program(v)?;
    let m = inv.count();
    let (mut orth, mut orth_scaled) = (vec![0.0f64; m], vec![0.0f64; m]);
    let (mut div_max, mut smin) = (0.0f64, f64::INFINITY);
    let (mut used, mut skipped) = (0, 0);
    for x in samples {
        check_dim(spec.dimension(), x.len())?;
        let Some(r) = point_residual(v, &inv, div.as_ref(), x) else {
            skipped += 1;
            continue;
        };
        used += 1;
        for k in 0..m {
            orth[k] = orth[k].max(r.orth[k]);
            orth_scaled[k] = orth_scaled[k].max(r.orth_scaled[k]);
        }
        div_max = if r.div.is_nan() {
            f64::INFINITY
        } else {
            div_max.max(r.div)
        };
        smin = smin.min(r.sigma);
    }
    if used == 0 {
        return Err(DiagnoseError::NoUsableSamples { skipped });
    }
    let report = InvariantReport {
        dimension: spec.dimension(),
        max_orthogonality: orth,
        max_orthogonality_scaled: orth_scaled,
        max_divergence: Some(div_max),
        min_singular_value: Some(smin),
        points_evaluated: used,
        points_skipped: skipped,
        ..Default::default()
    };
    Ok(report.judge(thresholds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{builtin, synthesize};
    use crate::integrate::{integrate, IntegratorConfig, Sample, Termination};

    fn euler3() -> (VectorField, DeformationSpec) {
        let sys = builtin("euler3", 3, 0.0).unwrap();
        (synthesize(&sys.spec).unwrap(), sys.spec)
    }

    #[test]
    fn constant_trajectory_has_zero_drift() {
        let (v, spec) = euler3();
        let traj = integrate(
            &v,
            Some(&spec),
            &[2.0, 0.0, 0.0],
            &IntegratorConfig::rk4(0.1, 0.0, 1.0),
        )
        .unwrap();
        let r = drift_report(&traj, &spec).unwrap();
        assert_eq!(r.max_drift, vec![0.0, 0.0]);
        assert_eq!(r.initial_values, vec![4.0, 4.0]);
        assert_eq!(r.verdict.conserved, Some(true));
    }

    #[test]
    fn rk4_drift_before_blowup() {
        let (v, spec) = euler3();
        let traj = integrate(
            &v,
            Some(&spec),
            &[1.0, 2.0, 3.0],
            &IntegratorConfig::rk4(1e-3, 0.0, 0.2),
        )
        .unwrap();
        let r = drift_report(&traj, &spec).unwrap();
        assert!(r.worst_drift() <= 1e-10, "{r:?}");
        assert_eq!(r.initial_values, vec![-3.0, -8.0]);
    }

    #[test]
    fn corrupted_sample_is_flagged() {
        let (v, spec) = euler3();
        let mut traj = integrate(
            &v,
            Some(&spec),
            &[1.0, 2.0, 3.0],
            &IntegratorConfig::rk4(1e-3, 0.0, 0.2),
        )
        .unwrap();
        traj.samples[50].x[1] += 1e-3;
        let r = drift_report(&traj, &spec).unwrap();
        assert!(r.worst_drift() >= 1e-4);
        assert_eq!(r.verdict.conserved, Some(false));
        assert!(!r.passed());
    }

    #[test]
    fn drift_errors() {
        let (_, spec) = euler3();
        let empty = Trajectory {
            samples: vec![],
            termination: Termination::Completed,
            detail: None,
        };
        assert_eq!(
            drift_report(&empty, &spec),
            Err(DiagnoseError::EmptyTrajectory)
        );
        let sys = builtin("cube_root_deform", 3, 1.0).unwrap();
        let bad = Trajectory {
            samples: vec![Sample {
                t: 0.0,
                s: 0.0,
                x: vec![0.0, 1.0, 1.0],
                invariants: vec![],
            }],
            termination: Termination::Completed,
            detail: None,
        };
        assert!(matches!(
            drift_report(&bad, &sys.spec),
            Err(DiagnoseError::InitialSample(_))
        ));
    }

    #[test]
    fn independence_examples() {
        let (_, spec) = euler3();
        let s = independence_check(&spec, &[1.0, 2.0, 3.0]).unwrap();
        assert!(s > INDEPENDENCE_THRESHOLD);
        assert_eq!(independence_check(&spec, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    /// One-sided Jacobi SVD on the columns of `a` (rows x cols, rows >= cols
    /// after transposition by the caller).
    fn jacobi_singular_values(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let cols = a[0].len();
        for _ in 0..60 {
            let mut off = 0.0f64;
            for p in 0..cols {
                for q in p + 1..cols {
                    let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                    for row in &a {
                        alpha += row[p] * row[p];
                        beta += row[q] * row[q];
                        gamma += row[p] * row[q];
                    }
                    if gamma == 0.0 {
                        continue;
                    }
                    off = off.max(gamma.abs() / (alpha * beta).sqrt());
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for row in &mut a {
                        let (u, w) = (row[p], row[q]);
                        row[p] = c * u - s * w;
                        row[q] = s * u + c * w;
                    }
                }
            }
            if off < 1e-15 {
                break;
            }
        }
        (0..cols)
            .map(|j| a.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt())
            .collect()
    }

    #[test]
    fn sigma_min_matches_fd_jacobi_oracle() {
        let sys = builtin("cube_root_deform", 3, 1.0).unwrap();
        let x = [1.0, 2.0, 3.0];
        let s = independence_check(&sys.spec, &x).unwrap();
        let inv = sys.spec.invariants().unwrap();
        // columns = integrals, rows = coordinates (3 x 2)
        let h = 1e-5;
        let mut a = vec![vec![0.0; 2]; 3];
        for j in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (inv.values(&xp).unwrap(), inv.values(&xm).unwrap());
            for k in 0..2 {
                a[j][k] = (fp[k] - fm[k]) / (2.0 * h);
            }
        }
        let oracle = jacobi_singular_values(a)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert!((s - oracle).abs() <= 1e-8, "{s} vs {oracle}");
    }

    #[test]
    fn euler_identities_at_random_points() {
        let (v, spec) = euler3();
        let pts = SampleDomain::cube(3, 2.0).sample(1000, 7).unwrap();
        let r = field_identity_suite(&v, &spec, &pts).unwrap();
        assert!(r.worst_orthogonality() <= 1e-12, "{r:?}");
        assert!(r.max_divergence.unwrap() <= 1e-12);
        assert_eq!(r.points_evaluated, 1000);
        assert!(r.passed());
    }

    #[test]
    fn quartic_identities_away_from_coincidences() {
        let sys = builtin("quartic_deform", 3, 1.0).unwrap();
        let v = synthesize(&sys.spec).unwrap();
        let pts = SampleDomain::cube(3, 2.0)
            .with_coincidence_guard(0.1)
            .sample(1000, 11)
            .unwrap();
        let r = field_identity_suite(&v, &sys.spec, &pts).unwrap();
        assert!(r.worst_orthogonality_scaled() <= 1e-9, "{r:?}");
        let closed = sys.closed_form.unwrap();
        let r = field_identity_suite(&closed, &sys.spec, &pts).unwrap();
        assert!(r.worst_orthogonality_scaled() <= 1e-9, "{r:?}");
    }

    #[test]
    fn sign_flip_is_caught() {
        let sys = builtin("cube_root_deform", 3, 1.0).unwrap();
        let closed = sys.closed_form.unwrap();
        let bad = mutate_component(&closed, 0, 1).unwrap();
        let pts = SampleDomain::cube(3, 2.0)
            .with_coordinate_guard(0.1)
            .sample(200, 3)
            .unwrap();
        let r = field_identity_suite(&bad, &sys.spec, &pts).unwrap();
        assert!(r.worst_orthogonality() > 1e-2);
        assert!(!r.passed());
    }

    fn fd_error_ratio(v: &VectorField, x: &[f64], h: f64) -> f64 {
        let exact = crate::expr::evaluate(&v.divergence().unwrap(), x, v.bindings()).unwrap();
        let e1 = (fd_divergence(v, x, h).unwrap() - exact).abs();
        let e2 = (fd_divergence(v, x, h / 2.0).unwrap() - exact).abs();
        e1 / e2
    }

    #[test]
    fn fd_divergence_is_second_order() {
        use crate::expr::parse;
        use crate::field::Provenance;
        let comps = ["x1^3", "sin(x2)", "exp(x3)"]
            .iter()
            .map(|s| parse(s, 3, &[]).unwrap())
            .collect();
        let v = VectorField::from_components(comps, Default::default(), Provenance::UserClosedForm)
            .unwrap();
        let ratio = fd_error_ratio(&v, &[0.7, -1.3, 0.4], 1e-4);
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
        // synthesized deformed field, where V_i depends on x_i
        let sys = builtin("quartic_deform", 3, 1.0).unwrap();
        let v = synthesize(&sys.spec).unwrap();
        let ratio = fd_error_ratio(&v, &[0.9, 1.7, -1.2], 1e-4);
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn judging_unmeasured_fields() {
        let r = InvariantReport {
            dimension: 3,
            max_drift: vec![1e-3],
            ..Default::default()
        }
        .judge(Thresholds::default());
        assert_eq!(r.verdict.conserved, Some(false));
        assert_eq!(r.verdict.orthogonal, None);
        assert!(!r.passed());
    }
}
