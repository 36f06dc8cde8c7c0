use nalgebra::DVector;
use thiserror::Error;

use crate::expr::EvalError;
use crate::field::{DeformationSpec, FieldError, Invariants};

/// Residual target of the projection, relative to `max(1, |C_k|)`.
pub const PROJECTION_TOLERANCE: f64 = 1e-13;
pub const PROJECTION_MAX_ITERATIONS: usize = 10;
/// Gradients with smallest singular value at or below this are treated as
/// dependent.
pub const RANK_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectionError {
    #[error("integral gradients are dependent (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },
    #[error("projection did not converge (residual {residual:e} after {iterations} iterations)")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("expected {expected} target values, got {got}")]
    TargetCount { expected: usize, got: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn residual(inv: &Invariants, x: &[f64], targets: &[f64]) -> Result<(Vec<f64>, f64), EvalError> {
    let r: Vec<f64> = inv
        .values(x)?
        .iter()
        .zip(targets)
        .map(|(v, c)| v - c)
        .collect();
    let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((r, worst))
}

/// Minimum-norm Gauss-Newton correction onto `{I_k(x) = targets_k}`.
///
/// Each iteration solves `J dx = -r` in the least-norm sense,
/// `dx = -J^T (J J^T)^{-1} r`. A state already on the level set is
/// returned untouched.
pub fn project_with(
    inv: &Invariants,
    x: &[f64],
    targets: &[f64],
) -> Result<Vec<f64>, ProjectionError> {
    if targets.len() != inv.count() {
        return Err(ProjectionError::TargetCount {
            expected: inv.count(),
            got: targets.len(),
        });
    }
    let scale = targets.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let tol = PROJECTION_TOLERANCE * scale;
    let mut x = x.to_vec();
    let (mut r, mut worst) = residual(inv, &x, targets)?;
    let mut iterations = 0;
    while worst > tol {
        if iterations == PROJECTION_MAX_ITERATIONS {
            return Err(ProjectionError::NonConvergence {
                residual: worst,
                iterations,
            });
        }
        let jac = inv.gradient_matrix(&x)?;
        let sigma_min = jac.singular_values().min();
        if sigma_min <= RANK_THRESHOLD {
            return Err(ProjectionError::RankDeficient { sigma_min });
        }
        let gram = &jac * jac.transpose();
        let y = gram
            .lu()
            .solve(&DVector::from_column_slice(&r))
            .ok_or(ProjectionError::RankDeficient { sigma_min })?;
        let dx = jac.transpose() * y;
        for (xi, d) in x.iter_mut().zip(dx.iter()) {
            *xi -= d;
        }
        (r, worst) = residual(inv, &x, targets)?;
        iterations += 1;
    }
    Ok(x)
}

/// [`project_with`] for a spec, compiling its invariants first.
pub fn project_onto_invariants(
    x: &[f64],
    spec: &DeformationSpec,
    targets: &[f64],
) -> Result<Vec<f64>, ProjectionError> {
    project_with(&spec.invariants()?, x, targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_on_level_set() {
        let spec = DeformationSpec::undeformed(3).unwrap();
        let x = [1.0, 2.0, 3.0];
        assert_eq!(
            project_onto_invariants(&x, &spec, &[-3.0, -8.0]).unwrap(),
            x.to_vec()
        );
    }

    #[test]
    fn perturbed_state_returns_to_level_set() {
        let spec = DeformationSpec::undeformed(3).unwrap();
        let y = project_onto_invariants(&[1.001, 2.0, 3.0], &spec, &[-3.0, -8.0]).unwrap();
        let inv = spec.invariants().unwrap().values(&y).unwrap();
        assert!((inv[0] + 3.0).abs() <= 1e-13, "{inv:?}");
        assert!((inv[1] + 8.0).abs() <= 1e-13, "{inv:?}");
        assert!((y[0] - 1.001).abs() < 1e-3);
    }

    #[test]
    fn parallel_gradients_are_rank_deficient() {
        // grad I1 = (2,0,0) = grad I2 at (1,0,0).
        let spec = DeformationSpec::undeformed(3).unwrap();
        let err = project_onto_invariants(&[1.0, 0.0, 0.0], &spec, &[0.5, 0.5]).unwrap_err();
        assert!(
            matches!(err, ProjectionError::RankDeficient { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn deformed_level_set() {
        let b = crate::expr::ParameterBinding::new().with("g", 1.0);
        let spec = DeformationSpec::parse(3, &["g/x1 - g/x2", "g/x1 - g/x3"], b).unwrap();
        let inv = spec.invariants().unwrap();
        let targets = inv.values(&[1.0, 2.0, 3.0]).unwrap();
        let y = project_with(&inv, &[1.01, 1.98, 3.02], &targets).unwrap();
        let vals = inv.values(&y).unwrap();
        for k in 0..2 {
            assert!((vals[k] - targets[k]).abs() <= 1e-13 * targets[k].abs().max(1.0));
        }
    }
}
