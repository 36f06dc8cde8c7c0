use nalgebra::{DMatrix, DVector};

use super::VectorField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Grid points per axis (at least 2).
    pub resolution: usize,
    /// A refined point is reported only if `|V| <=` this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            resolution: 9,
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn jacobian(field: &VectorField, x: &[f64], f0: &[f64]) -> Option<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for j in 0..n {
        let h = 1e-7 * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        match (field.eval(&xp), field.eval(&xm)) {
            (Ok(fp), Ok(fm)) => {
                for i in 0..n {
                    jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
                }
            }
            // one-sided fallback next to a pole
            (Ok(fp), Err(_)) => {
                for i in 0..n {
                    jac[(i, j)] = (fp[i] - f0[i]) / h;
                }
            }
            _ => return None,
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Some(jac)
}

/// Levenberg-Marquardt on `V(x) = 0`; handles the rank-deficient Jacobians
/// found on lines of equilibria.
fn refine(field: &VectorField, start: &[f64], opts: &ScanOptions) -> Option<Vec<f64>> {
    let n = start.len();
    let mut x = start.to_vec();
    let mut f = field.eval(&x).ok()?;
    let mut r = norm(&f);
    let mut lambda = 1e-3;
    for _ in 0..opts.max_iterations {
        if r <= opts.tolerance * 1e-3 {
            break;
        }
        let jac = jacobian(field, &x, &f)?;
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let rhs = -(&jt * DVector::from_column_slice(&f));
        let mut improved = false;
        for _ in 0..30 {
            let scale = jtj.diagonal().max().max(1e-300);
            let damped = &jtj + DMatrix::identity(n, n) * (lambda * scale);
            let Some(step) = damped.lu().solve(&rhs) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
            match field.eval(&trial) {
                Ok(ft) if norm(&ft) < r => {
                    x = trial;
                    f = ft;
                    r = norm(&f);
                    lambda = (lambda / 3.0).max(1e-15);
                    improved = true;
                    break;
                }
                _ => lambda *= 4.0,
            }
        }
        if !improved {
            break;
        }
    }
    (r <= opts.tolerance).then_some(x)
}

/// Grid-seeded search for zeros of `field` inside the box `bounds`.
///
/// Seeds are the grid points whose `|V|` does not exceed that of any axis
/// neighbour; each seed is refined and kept if its residual is at most
/// `opts.tolerance`. Near-duplicates are merged.
pub fn equilibria_scan(
    field: &VectorField,
    bounds: &[(f64, f64)],
    opts: ScanOptions,
) -> Vec<Vec<f64>> {
    let n = field.dimension();
    assert_eq!(bounds.len(), n, "one bound pair per coordinate");
    assert!(bounds.iter().all(|(lo, hi)| hi > lo), "degenerate box");
    let res = opts.resolution.max(2);
    let total = res.pow(n as u32);
    let point = |mut idx: usize| -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (xi, (lo, hi)) in x.iter_mut().zip(bounds) {
            let k = idx % res;
            idx /= res;
            *xi = lo + (hi - lo) * k as f64 / (res - 1) as f64;
        }
        x
    };
    let norms: Vec<Option<f64>> = (0..total)
        .map(|i| field.eval(&point(i)).ok().map(|v| norm(&v)))
        .collect();

    let diameter = norm(&bounds.iter().map(|(lo, hi)| hi - lo).collect::<Vec<_>>());
    let slack = 1e-9 * diameter;
    let mut found: Vec<Vec<f64>> = Vec::new();
    for idx in 0..total {
        let Some(here) = norms[idx] else { continue };
        let mut stride = 1;
        let mut is_min = true;
        for _ in 0..n {
            let k = (idx / stride) % res;
            let neighbours = [
                (k > 0).then(|| idx - stride),
                (k + 1 < res).then(|| idx + stride),
            ];
            for nb in neighbours.into_iter().flatten() {
                if norms[nb].is_some_and(|v| v < here) {
                    is_min = false;
                }
            }
            stride *= res;
        }
        if !is_min {
            continue;
        }
        let Some(x) = refine(field, &point(idx), &opts) else {
            continue;
        };
        let inside = x
            .iter()
            .zip(bounds)
            .all(|(v, (lo, hi))| *v >= lo - slack && *v <= hi + slack);
        if inside
            && !found.iter().any(|p| {
                norm(&p.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-6 * diameter
            })
        {
            found.push(x);
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::super::builtin;
    use super::*;

    #[test]
    fn euler_top_equilibria_lie_on_axes() {
        let v = builtin("euler3", 3, 0.0).unwrap().closed_form.unwrap();
        assert_eq!(v.eval(&[2.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        let zeros = equilibria_scan(
            &v,
            &[(-2.0, 2.0); 3],
            ScanOptions {
                resolution: 5,
                ..Default::default()
            },
        );
        assert!(zeros.iter().any(|p| p == &vec![1.0, 0.0, 0.0]));
        for axis in 0..3 {
            assert!(zeros
                .iter()
                .any(|p| p[axis].abs() > 0.5
                    && (0..3).filter(|&i| i != axis).all(|i| p[i].abs() < 1e-5)));
        }
        for p in &zeros {
            assert!(norm(&v.eval(p).unwrap()) <= 1e-10);
        }
    }

    #[test]
    fn cube_root_deformation_has_diagonal_equilibrium() {
        let sys = builtin("cube_root_deform", 3, 1.0).unwrap();
        let v = crate::field::synthesize(&sys.spec).unwrap();
        let zeros = equilibria_scan(
            &v,
            &[(0.3, 2.0); 3],
            ScanOptions {
                resolution: 6,
                ..Default::default()
            },
        );
        assert!(!zeros.is_empty());
        assert!(zeros
            .iter()
            .any(|p| p.iter().all(|c| (c - 1.0).abs() < 1e-4)));
        for p in &zeros {
            assert!(norm(&v.eval(p).unwrap()) <= 1e-10);
        }
    }
}
