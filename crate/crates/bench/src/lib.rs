//! Shared inputs for the benchmarks.

use eulertop::field::{builtin, synthesize, BuiltinSystem, VectorField};

/// A builtin with coupling 1 and its synthesized field.
pub fn system(name: &str, n: usize) -> (BuiltinSystem, VectorField) {
    let sys = builtin(name, n, 1.0).expect("known builtin");
    let v = synthesize(&sys.spec).expect("builtin synthesizes");
    (sys, v)
}

/// A state away from every pole of the builtins, `(1, 2, ..., n)` scaled.
pub fn state(n: usize) -> Vec<f64> {
    (1..=n).map(|i| 0.5 * i as f64).collect()
}
