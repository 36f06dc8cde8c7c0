use super::FieldError;

/// Coefficients `(a1, a2, a3)` of the substitution `x_i -> a_i x_i` taking
/// `dx_i/dt = k_i x_j x_l` to the normalized top `dx_i/dt = x_j x_l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingCoefficients(pub [f64; 3]);

impl ScalingCoefficients {
    /// Map normalized coordinates back to the original ones.
    pub fn to_original(&self, normalized: &[f64; 3]) -> [f64; 3] {
        [
            self.0[0] * normalized[0],
            self.0[1] * normalized[1],
            self.0[2] * normalized[2],
        ]
    }
}

/// Solve `a_i^2 = 1/(k_j k_l)`. The common sign of the `k_i` is carried by the
/// `a_i`, so an all-negative system is normalized too.
pub fn normalize_rigid_body(k1: f64, k2: f64, k3: f64) -> Result<ScalingCoefficients, FieldError> {
    let k = [k1, k2, k3];
    let mut a = [0.0; 3];
    for i in 0..3 {
        let (j, l) = ((i + 1) % 3, (i + 2) % 3);
        let product = k[j] * k[l];
        if !(product > 0.0) || !product.is_finite() {
            let (j, l) = (j.min(l) + 1, j.max(l) + 1);
            return Err(FieldError::NoRealScaling { j, l, product });
        }
        a[i] = k[i].signum() / product.sqrt();
    }
    Ok(ScalingCoefficients(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Substitute `x = a*y` into the general system and read off `dy_i/dt`.
    fn normalized_rhs(k: [f64; 3], a: &ScalingCoefficients, y: [f64; 3]) -> [f64; 3] {
        let x = a.to_original(&y);
        let xdot = [k[0] * x[1] * x[2], k[1] * x[0] * x[2], k[2] * x[0] * x[1]];
        [xdot[0] / a.0[0], xdot[1] / a.0[1], xdot[2] / a.0[2]]
    }

    #[test]
    fn already_normalized() {
        assert_eq!(
            normalize_rigid_body(1.0, 1.0, 1.0).unwrap(),
            ScalingCoefficients([1.0, 1.0, 1.0])
        );
    }

    #[test]
    fn asymmetric_coefficients() {
        let a = normalize_rigid_body(4.0, 1.0, 1.0).unwrap();
        assert_eq!(a, ScalingCoefficients([1.0, 0.5, 0.5]));
    }

    #[test]
    fn substitution_recovers_normalized_top() {
        for k in [[4.0, 1.0, 1.0], [0.3, 2.5, 7.0], [-1.0, -2.0, -0.5]] {
            let a = normalize_rigid_body(k[0], k[1], k[2]).unwrap();
            for y in [[0.3, -1.1, 2.0], [1.7, 0.2, -0.9]] {
                let got = normalized_rhs(k, &a, y);
                let want = [y[1] * y[2], y[0] * y[2], y[0] * y[1]];
                for i in 0..3 {
                    assert!(
                        (got[i] - want[i]).abs() <= 1e-14 * want[i].abs().max(1.0),
                        "k={k:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn mixed_signs_have_no_real_scaling() {
        assert!(matches!(
            normalize_rigid_body(1.0, -1.0, 1.0),
            Err(FieldError::NoRealScaling { .. })
        ));
        assert!(normalize_rigid_body(0.0, 1.0, 1.0).is_err());
    }
}
