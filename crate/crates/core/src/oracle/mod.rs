//! Reference solutions of the undeformed three-dimensional top by quadrature.
//!
//! With `C1 = x1^2 - x2^2` and `C2 = x1^2 - x3^2` fixed, the first equation
//! becomes the scalar ODE `dx1/dt = +-sqrt((x1^2 - C1)(x1^2 - C2))`, and
//! `t(x1)` is a single integral. Two regimes occur:
//!
//! * `max(C1, C2) < 0`: neither `x2` nor `x3` can vanish, `x1` is monotone
//!   and `t` is integrated directly in `x1`.
//! * `max(C1, C2) > 0`: the coordinate with the larger constant passes
//!   through zero where `x1` turns around. The substitution
//!   `x1 = x_tp + sign(x_tp) u^2` removes the square-root singularity there
//!   and makes `u` a smooth, monotone clock through the turning point.
//!
//! Every non-equilibrium orbit escapes to infinity in finite time in both
//! directions; [`escape_time`] reports how long that takes.

mod quadrature;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Target absolute accuracy of the time integral.
pub const TIME_TOLERANCE: f64 = 1e-15;
/// Relative floor on the time accuracy. The K15 - G7 estimate stalls at a
/// few tens of ulps of the integral when the weight is sharply peaked.
const RELATIVE_TOLERANCE: f64 = 1e-14;
/// Constants closer than this (relative to `max(1, |C1|, |C2|)`) to zero or
/// to each other make the turning-point structure unresolvable.
pub const CLUSTER_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("state {0:?} is not admissible (non-finite)")]
    Inadmissible([f64; 3]),
    #[error("turning points cluster below resolution (C1 = {c1}, C2 = {c2})")]
    Clustered { c1: f64, c2: f64 },
    #[error("time {t} is beyond the escape time {escape} of this orbit")]
    BlowUp { t: f64, escape: f64 },
    #[error("quadrature did not reach the target accuracy near t = {t}")]
    NonConvergence { t: f64 },
}

/// How the orbit is parametrized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Branch {
    /// `dx/dt = 0` at `x0`.
    Equilibrium,
    /// `x1` monotone; `dx1/dt` has the sign `sign`.
    Monotone { sign: f64 },
    /// `x1` turns at `x_tp`; coordinate `vanishing` (2 or 3) changes sign
    /// there, the other one keeps the sign `other_sign`.
    Turning {
        x_tp: f64,
        vanishing: usize,
        other_sign: f64,
    },
    /// Turning points too close to resolve.
    Clustered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureReduction {
    pub x0: [f64; 3],
    pub c1: f64,
    pub c2: f64,
    /// Signs of `x2(0)`, `x3(0)`; zero for a coordinate starting at zero.
    pub branch_signs: [f64; 2],
    /// Roots of the radicand that bound the admissible `x1` range (empty if
    /// the range is all of the real line).
    pub turning_points: Vec<f64>,
    pub branch: Branch,
}

fn sign0(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum()
    }
}

/// Reduce the top at `x0` to a single quadrature.
pub fn reduce(x0: [f64; 3]) -> Result<QuadratureReduction, OracleError> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::Inadmissible(x0));
    }
    let [x1, x2, x3] = x0;
    let c1 = x1 * x1 - x2 * x2;
    let c2 = x1 * x1 - x3 * x3;
    let cmax = c1.max(c2);
    let turning_points = if cmax > 0.0 {
        vec![-cmax.sqrt(), cmax.sqrt()]
    } else {
        Vec::new()
    };
    let scale = c1.abs().max(c2.abs()).max(1.0);
    let equilibrium = x2 * x3 == 0.0 && x1 * x3 == 0.0 && x1 * x2 == 0.0;
    let branch = if equilibrium {
        Branch::Equilibrium
    } else if cmax.abs() <= CLUSTER_TOLERANCE * scale
        || (cmax > 0.0 && (c1 - c2).abs() <= CLUSTER_TOLERANCE * scale)
    {
        Branch::Clustered
    } else if cmax < 0.0 {
        Branch::Monotone {
            sign: (x2 * x3).signum(),
        }
    } else {
        let (vanishing, other) = if c1 > c2 { (2, x3) } else { (3, x2) };
        Branch::Turning {
            x_tp: x1.signum() * cmax.sqrt(),
            vanishing,
            other_sign: other.signum(),
        }
    };
    Ok(QuadratureReduction {
        x0,
        c1,
        c2,
        branch_signs: [sign0(x2), sign0(x3)],
        turning_points,
        branch,
    })
}

impl QuadratureReduction {
    /// `r(x1) = s2 s3 sqrt((x1^2 - C1)(x1^2 - C2))` with the initial branch
    /// signs; `NaN` outside the admissible range.
    pub fn r(&self, x1: f64) -> f64 {
        let rad = (x1 * x1 - self.c1) * (x1 * x1 - self.c2);
        self.branch_signs[0] * self.branch_signs[1] * rad.sqrt()
    }

    pub fn invariants(&self) -> [f64; 2] {
        [self.c1, self.c2]
    }

    /// Clock `q` (increasing with `t`), its value at `x0`, the weight
    /// `dt/dq > 0` and the state at `q`.
    fn clock(&self) -> Option<Clock<'_>> {
        match self.branch {
            Branch::Monotone { sign } => Some(Clock {
                red: self,
                kind: ClockKind::Direct { sign },
                q0: sign * self.x0[0],
            }),
            Branch::Turning {
                x_tp,
                vanishing,
                other_sign,
            } => {
                let sigma = x_tp.signum();
                let xv = self.x0[vanishing - 1];
                let u0 = xv / (self.x0[0].abs() + x_tp.abs()).sqrt();
                let orient = sigma * other_sign;
                Some(Clock {
                    red: self,
                    kind: ClockKind::Turning {
                        x_tp,
                        sigma,
                        vanishing,
                        other_sign,
                        orient,
                    },
                    q0: orient * u0,
                })
            }
            Branch::Equilibrium | Branch::Clustered => None,
        }
    }
}

#[derive(Clone, Copy)]
enum ClockKind {
    Direct {
        sign: f64,
    },
    Turning {
        x_tp: f64,
        sigma: f64,
        vanishing: usize,
        other_sign: f64,
        orient: f64,
    },
}

struct Clock<'a> {
    red: &'a QuadratureReduction,
    kind: ClockKind,
    q0: f64,
}

impl Clock<'_> {
    fn weight(&self, q: f64) -> f64 {
        let (c1, c2) = (self.red.c1, self.red.c2);
        match self.kind {
            ClockKind::Direct { .. } => {
                let x1 = q.abs();
                1.0 / ((x1 * x1 - c1) * (x1 * x1 - c2)).sqrt()
            }
            ClockKind::Turning { x_tp, .. } => {
                let cmin = c1.min(c2);
                let xi = x_tp.abs() + q * q;
                2.0 / ((xi * xi - cmin).sqrt() * (xi + x_tp.abs()).sqrt())
            }
        }
    }

    fn state(&self, q: f64) -> [f64; 3] {
        let [s2, s3] = self.red.branch_signs;
        let (c1, c2) = (self.red.c1, self.red.c2);
        match self.kind {
            ClockKind::Direct { sign } => {
                let x1 = sign * q;
                [x1, s2 * (x1 * x1 - c1).sqrt(), s3 * (x1 * x1 - c2).sqrt()]
            }
            ClockKind::Turning {
                x_tp,
                sigma,
                vanishing,
                other_sign,
                orient,
            } => {
                let u = orient * q;
                let xi = x_tp + sigma * u * u;
                let xv = u * (xi.abs() + x_tp.abs()).sqrt();
                let xo = other_sign * (xi * xi - c1.min(c2)).sqrt();
                if vanishing == 2 {
                    [xi, xv, xo]
                } else {
                    [xi, xo, xv]
                }
            }
        }
    }

    /// `int_a^b w(q) dq`.
    fn span(&self, a: f64, b: f64, t: f64) -> Result<f64, OracleError> {
        let q = quadrature::integrate(|q| self.weight(q), a, b, TIME_TOLERANCE, RELATIVE_TOLERANCE);
        if q.converged && q.value.is_finite() {
            Ok(q.value)
        } else {
            Err(OracleError::NonConvergence { t })
        }
    }

    /// `int_{q0}^{+-inf} w`, via `q = q0 +- z/(1-z)`.
    fn escape(&self, dir: f64) -> Result<f64, OracleError> {
        let q0 = self.q0;
        let f = |z: f64| {
            let one = 1.0 - z;
            self.weight(q0 + dir * z / one) / (one * one)
        };
        let q = quadrature::integrate(f, 0.0, 1.0, TIME_TOLERANCE, RELATIVE_TOLERANCE);
        if q.converged {
            Ok(q.value)
        } else {
            Err(OracleError::NonConvergence {
                t: dir * f64::INFINITY,
            })
        }
    }

    /// Solve `T(q) = t` given the anchor `T(qa) = ta`.
    fn invert(&self, qa: f64, ta: f64, t: f64) -> Result<f64, OracleError> {
        let dir = (t - ta).signum();
        if dir == 0.0 {
            return Ok(qa);
        }
        // bracket: T(lo) on the near side of t, T(hi) on the far side
        let (mut lo, mut t_lo) = (qa, ta);
        let mut step = (t - ta).abs() / self.weight(qa);
        let (mut hi, mut t_hi);
        let mut tries = 0;
        loop {
            hi = lo + dir * step;
            t_hi = t_lo + dir * self.span(lo.min(hi), lo.max(hi), t)?;
            if dir * (t_hi - t) >= 0.0 {
                break;
            }
            (lo, t_lo) = (hi, t_hi);
            step *= 2.0;
            tries += 1;
            if tries > 200 || !hi.is_finite() {
                return Err(OracleError::NonConvergence { t });
            }
        }
        // safeguarded Newton, anchored at lo
        let mut q = lo + (t - t_lo) / self.weight(lo);
        if !(dir * (q - lo) > 0.0 && dir * (hi - q) > 0.0) {
            q = 0.5 * (lo + hi);
        }
        for _ in 0..100 {
            let tq = t_lo + dir * self.span(lo.min(q), lo.max(q), t)?;
            let res = tq - t;
            if res == 0.0 {
                return Ok(q);
            }
            if dir * res < 0.0 {
                (lo, t_lo) = (q, tq);
            } else {
                hi = q;
            }
            let mut next = q - res / self.weight(q);
            if !(dir * (next - lo) > 0.0 && dir * (hi - next) > 0.0) {
                next = 0.5 * (lo + hi);
            }
            if (next - q).abs() <= 4.0 * f64::EPSILON * q.abs().max(1.0) {
                return Ok(next);
            }
            q = next;
        }
        Err(OracleError::NonConvergence { t })
    }
}

/// Time to blow-up forward and backward from `x0`; infinite for an
/// equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeTimes {
    pub forward: f64,
    pub backward: f64,
}

pub fn escape_time(red: &QuadratureReduction) -> Result<EscapeTimes, OracleError> {
    match red.clock() {
        Some(c) => Ok(EscapeTimes {
            forward: c.escape(1.0)?,
            backward: c.escape(-1.0)?,
        }),
        None if red.branch == Branch::Equilibrium => Ok(EscapeTimes {
            forward: f64::INFINITY,
            backward: f64::INFINITY,
        }),
        None => Err(OracleError::Clustered {
            c1: red.c1,
            c2: red.c2,
        }),
    }
}

/// States at the times `t_grid` (with `x(0) = x0`), in grid order.
pub fn reference_solution(
    red: &QuadratureReduction,
    t_grid: &[f64],
) -> Result<Vec<[f64; 3]>, OracleError> {
    if red.branch == Branch::Equilibrium {
        return Ok(vec![red.x0; t_grid.len()]);
    }
    let clock = red.clock().ok_or(OracleError::Clustered {
        c1: red.c1,
        c2: red.c2,
    })?;
    let esc = escape_time(red)?;
    if let Some(&t) = t_grid
        .iter()
        .find(|&&t| t >= esc.forward || -t >= esc.backward || !t.is_finite())
    {
        let escape = if t >= 0.0 { esc.forward } else { -esc.backward };
        return Err(OracleError::BlowUp { t, escape });
    }
    let mut order: Vec<usize> = (0..t_grid.len()).collect();
    order.sort_by(|&a, &b| t_grid[a].total_cmp(&t_grid[b]));
    let mut out = vec![red.x0; t_grid.len()];
    // forward from 0 through positive times, backward through negative ones
    let (neg, pos): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| t_grid[i] < 0.0);
    for run in [pos, neg.into_iter().rev().collect()] {
        let (mut qa, mut ta) = (clock.q0, 0.0);
        for i in run {
            let t = t_grid[i];
            if t == 0.0 {
                continue;
            }
            let q = clock.invert(qa, ta, t)?;
            out[i] = clock.state(q);
            (qa, ta) = (q, t);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_examples() {
        let red = reduce([1.0, 2.0, 3.0]).unwrap();
        assert_eq!((red.c1, red.c2), (-3.0, -8.0));
        assert!(red.turning_points.is_empty());
        assert_eq!(red.r(1.0), 6.0);
        assert_eq!(red.branch, Branch::Monotone { sign: 1.0 });

        let red = reduce([3.0, 1.0, 2.0]).unwrap();
        assert_eq!((red.c1, red.c2), (8.0, 5.0));
        assert_eq!(red.turning_points, vec![-(8f64.sqrt()), 8f64.sqrt()]);
        assert!(matches!(red.branch, Branch::Turning { vanishing: 2, .. }));
        assert!(reduce([f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn initial_condition_is_returned_exactly() {
        let red = reduce([1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            reference_solution(&red, &[0.0]).unwrap(),
            vec![[1.0, 2.0, 3.0]]
        );
    }

    #[test]
    fn escape_time_of_reference_orbit() {
        let esc = escape_time(&reduce([1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert!((esc.forward - 0.50864).abs() < 1e-5, "{esc:?}");
        let err = reference_solution(&reduce([1.0, 2.0, 3.0]).unwrap(), &[0.1, 0.6]).unwrap_err();
        assert!(matches!(err, OracleError::BlowUp { t, .. } if t == 0.6));
    }

    #[test]
    fn states_satisfy_integrals_and_equations() {
        for x0 in [
            [1.0, 2.0, 3.0],
            [3.0, 1.0, 2.0],
            [-0.4, 0.3, -0.9],
            [0.8, -0.2, 0.5],
            [-0.7, 0.1, 0.6],
        ] {
            let red = reduce(x0).unwrap();
            let esc = escape_time(&red).unwrap();
            let tmax = (0.4 * esc.forward).min(1.0);
            let grid: Vec<f64> = (1..=10)
                .map(|k| tmax * k as f64 / 10.0)
                .chain([-0.3 * esc.backward.min(1.0)])
                .collect();
            let xs = reference_solution(&red, &grid).unwrap();
            for (x, &t) in xs.iter().zip(&grid) {
                let scale = x.iter().fold(1.0f64, |m, v| m.max(v * v));
                assert!(
                    (x[0] * x[0] - x[1] * x[1] - red.c1).abs() <= 1e-14 * scale,
                    "{x:?}"
                );
                assert!(
                    (x[0] * x[0] - x[2] * x[2] - red.c2).abs() <= 1e-14 * scale,
                    "{x:?}"
                );
                // dx1/dt = x2 x3 by a five-point stencil
                let h = 1e-3;
                let s =
                    reference_solution(&red, &[t - 2.0 * h, t - h, t + h, t + 2.0 * h]).unwrap();
                let d = (s[0][0] - 8.0 * s[1][0] + 8.0 * s[2][0] - s[3][0]) / (12.0 * h);
                assert!(
                    (d - x[1] * x[2]).abs() <= 1e-9 * (x[1] * x[2]).abs().max(1.0),
                    "{x0:?} t={t}: {d} vs {}",
                    x[1] * x[2]
                );
            }
        }
    }

    #[test]
    fn turning_point_passage() {
        // x2 starts at zero; x1 = 3 is the turning point itself.
        let red = reduce([3.0, 0.0, 2.0]).unwrap();
        let xs = reference_solution(&red, &[-0.05, 0.05]).unwrap();
        assert!(xs[0][1] < 0.0 && xs[1][1] > 0.0);
        assert!(xs[0][0] > 3.0 && xs[1][0] > 3.0);
        assert!((xs[0][0] - xs[1][0]).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_and_clustering() {
        let red = reduce([2.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            reference_solution(&red, &[0.5, 7.0]).unwrap(),
            vec![[2.0, 0.0, 0.0]; 2]
        );
        let red = reduce([1.0, 1.0, 2.0]).unwrap();
        assert_eq!(red.branch, Branch::Clustered);
        assert!(matches!(
            reference_solution(&red, &[0.1]),
            Err(OracleError::Clustered { .. })
        ));
    }
}
