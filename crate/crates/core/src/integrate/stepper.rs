//! Explicit Runge-Kutta steps on a flat state vector.

/// Why a right-hand-side evaluation was refused.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Fault {
    Singular(String),
    Reparametrization(String),
}

pub(crate) trait Rhs {
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<(), Fault>;
}

impl<F: FnMut(&[f64], &mut [f64]) -> Result<(), Fault>> Rhs for F {
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<(), Fault> {
        self(y, dy)
    }
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

/// Classical fourth-order step.
pub(crate) fn rk4_step(
    rhs: &mut impl Rhs,
    y: &[f64],
    h: f64,
    out: &mut [f64],
) -> Result<(), Fault> {
    let n = y.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    rhs.eval(y, &mut k1)?;
    axpy(&mut tmp, y, h, &[(0.5, &k1)]);
    rhs.eval(&tmp, &mut k2)?;
    axpy(&mut tmp, y, h, &[(0.5, &k2)]);
    rhs.eval(&tmp, &mut k3)?;
    axpy(&mut tmp, y, h, &[(1.0, &k3)]);
    rhs.eval(&tmp, &mut k4)?;
    for i in 0..n {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b_hat
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub(crate) struct DopriWork {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    pub(crate) y_new: Vec<f64>,
    pub(crate) err: Vec<f64>,
}

impl DopriWork {
    pub(crate) fn new(n: usize) -> Self {
        DopriWork {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            err: vec![0.0; n],
        }
    }

    /// Derivative at the start of the next step (first-same-as-last).
    pub(crate) fn k1_mut(&mut self) -> &mut Vec<f64> {
        &mut self.k[0]
    }

    /// After an accepted step, promote the last stage to the first.
    pub(crate) fn accept_fsal(&mut self) {
        self.k.swap(0, 6);
    }

    /// One trial step from `y`; `k[0]` must already hold `f(y)`. Fills
    /// `y_new` (fifth order) and `err` (difference to the embedded fourth
    /// order solution).
    pub(crate) fn step(&mut self, rhs: &mut impl Rhs, y: &[f64], h: f64) -> Result<(), Fault> {
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        axpy(&mut self.tmp, y, h, &[(A21, k1)]);
        rhs.eval(&self.tmp, k2)?;
        axpy(&mut self.tmp, y, h, &[(A31, k1), (A32, k2)]);
        rhs.eval(&self.tmp, k3)?;
        axpy(&mut self.tmp, y, h, &[(A41, k1), (A42, k2), (A43, k3)]);
        rhs.eval(&self.tmp, k4)?;
        axpy(
            &mut self.tmp,
            y,
            h,
            &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)],
        );
        rhs.eval(&self.tmp, k5)?;
        axpy(
            &mut self.tmp,
            y,
            h,
            &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)],
        );
        rhs.eval(&self.tmp, k6)?;
        axpy(
            &mut self.y_new,
            y,
            h,
            &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)],
        );
        rhs.eval(&self.y_new, k7)?;
        for i in 0..y.len() {
            self.err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        Ok(())
    }
}

/// RMS of `err_i / (atol + rtol * max(|y_i|, |y_new_i|))`.
pub(crate) fn error_norm(err: &[f64], y: &[f64], y_new: &[f64], atol: f64, rtol: f64) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

/// PI step-size controller with safety factor 0.9 and growth clamped to
/// `[0.2, 5.0]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PiController {
    prev_err: f64,
}

impl PiController {
    pub(crate) const SAFETY: f64 = 0.9;
    pub(crate) const MIN_FACTOR: f64 = 0.2;
    pub(crate) const MAX_FACTOR: f64 = 5.0;
    const BETA: f64 = 0.04;
    const ALPHA: f64 = 0.2 - 0.75 * Self::BETA;

    pub(crate) fn new() -> Self {
        PiController { prev_err: 1e-4 }
    }

    /// Step-size factor for a trial step with scaled error `err`.
    pub(crate) fn factor(&self, err: f64, accepted: bool) -> f64 {
        let fac = if err == 0.0 {
            Self::MAX_FACTOR
        } else if accepted {
            Self::SAFETY * err.powf(-Self::ALPHA) * self.prev_err.powf(Self::BETA)
        } else {
            Self::SAFETY * err.powf(-0.2)
        };
        let fac = fac.clamp(Self::MIN_FACTOR, Self::MAX_FACTOR);
        if accepted {
            fac
        } else {
            fac.min(1.0)
        }
    }

    pub(crate) fn record(&mut self, err: f64) {
        self.prev_err = err.max(1e-4);
    }
}
