use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DiagnoseError;
use crate::field::PoleSet;

/// Axis-aligned box with rejection of points too close to pole sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDomain {
    pub bounds: Vec<(f64, f64)>,
    /// Reject points with some `|x_i|` below this.
    pub coordinate_guard: f64,
    /// Reject points with some `|x_i - x_j|` below this.
    pub coincidence_guard: f64,
}

impl SampleDomain {
    /// `[-half_width, half_width]^n` with no guards.
    pub fn cube(n: usize, half_width: f64) -> Self {
        SampleDomain {
            bounds: vec![(-half_width, half_width); n],
            coordinate_guard: 0.0,
            coincidence_guard: 0.0,
        }
    }

    pub fn with_coordinate_guard(mut self, r: f64) -> Self {
        self.coordinate_guard = r;
        self
    }

    pub fn with_coincidence_guard(mut self, r: f64) -> Self {
        self.coincidence_guard = r;
        self
    }

    /// Guard radius `r` on every pole family in `poles`.
    pub fn guarding(self, poles: PoleSet, r: f64) -> Self {
        let c = if poles.coordinate_planes { r } else { 0.0 };
        let d = if poles.coincidence_planes { r } else { 0.0 };
        self.with_coordinate_guard(c).with_coincidence_guard(d)
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn accepts(&self, x: &[f64]) -> bool {
        let inside = x
            .iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| v >= lo && v <= hi);
        let coord = x
            .iter()
            .all(|v| v.abs() > self.coordinate_guard || self.coordinate_guard == 0.0);
        let coinc = self.coincidence_guard == 0.0
            || (0..x.len())
                .all(|i| (i + 1..x.len()).all(|j| (x[i] - x[j]).abs() > self.coincidence_guard));
        inside && coord && coinc
    }

    /// `count` points drawn uniformly from the box and filtered by the guards.
    /// The same seed always yields the same points.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, DiagnoseError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_attempts = count.saturating_mul(1000).max(1000);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0;
        while out.len() < count {
            if attempts == max_attempts {
                return Err(DiagnoseError::SamplerExhausted {
                    wanted: count,
                    accepted: out.len(),
                    attempts,
                });
            }
            attempts += 1;
            let x: Vec<f64> = self
                .bounds
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect();
            if self.accepts(&x) {
                out.push(x);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guards_are_respected_and_seeded() {
        let d = SampleDomain::cube(3, 1.0)
            .with_coordinate_guard(0.1)
            .with_coincidence_guard(0.1);
        let a = d.sample(500, 42).unwrap();
        assert_eq!(a, d.sample(500, 42).unwrap());
        assert_ne!(a, d.sample(500, 43).unwrap());
        for x in &a {
            assert!(x.iter().all(|v| v.abs() > 0.1 && v.abs() <= 1.0));
            assert!(
                (x[0] - x[1]).abs() > 0.1 && (x[0] - x[2]).abs() > 0.1 && (x[1] - x[2]).abs() > 0.1
            );
        }
    }

    #[test]
    fn impossible_domain_is_reported() {
        let d = SampleDomain::cube(2, 0.05).with_coordinate_guard(0.1);
        assert!(matches!(
            d.sample(3, 1),
            Err(DiagnoseError::SamplerExhausted { accepted: 0, .. })
        ));
    }
}
