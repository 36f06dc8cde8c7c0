use std::cmp::Ordering;
use std::collections::BinaryHeap;

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1] (nonnegative half).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

pub(crate) const MAX_SUBDIVISIONS: usize = 4000;

/// Kronrod estimate and `|K - G|` on `[a, b]`.
fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Globally adaptive G7/K15: bisect the interval with the largest error
/// estimate until the summed estimate is below `max(abs_tol, rel_tol |I|)`.
pub(crate) fn integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Quadrature {
    if a == b {
        return Quadrature {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
    }
    let (value, err) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, err });
    let (mut total, mut total_err) = (value, err);
    for _ in 0..MAX_SUBDIVISIONS {
        if !total.is_finite() || !total_err.is_finite() {
            break;
        }
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return Quadrature {
                value: total,
                error: total_err,
                converged: true,
            };
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a.min(worst.b) || m >= worst.a.max(worst.b) {
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&mut f, worst.a, m);
        let (v2, e2) = gk15(&mut f, m, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece {
            a: worst.a,
            b: m,
            value: v1,
            err: e1,
        });
        heap.push(Piece {
            a: m,
            b: worst.b,
            value: v2,
            err: e2,
        });
    }
    // resum to shed the drift of the running totals
    let value = heap.iter().map(|p| p.value).sum::<f64>();
    let error = heap.iter().map(|p| p.err).sum::<f64>();
    Quadrature {
        value,
        error,
        converged: error <= abs_tol.max(rel_tol * value.abs()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact_to_degree_21() {
        let q = integrate(|x| x.powi(20) - 3.0 * x.powi(7), -1.0, 2.0, 1e-14, 0.0);
        let exact = (2f64.powi(21) + 1.0) / 21.0 - 3.0 * (2f64.powi(8) - 1.0) / 8.0;
        assert!((q.value - exact).abs() <= 1e-12 * exact.abs());
    }

    #[test]
    fn endpoint_singularity_needs_subdivision() {
        let q = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-12, 0.0);
        assert!(q.converged);
        assert!((q.value - 2.0).abs() <= 1e-10);
    }

    #[test]
    fn reversed_limits() {
        let q = integrate(f64::exp, 1.0, 0.0, 1e-14, 0.0);
        assert!((q.value + (1f64.exp() - 1.0)).abs() <= 1e-14);
    }
}
