//! Synthesis of deformed Euler-top vector fields.
//!
//! A [`DeformationSpec`] fixes the first integrals
//! `I_k = x1^2 - x_{k+1}^2 + 2 alpha_k`, `k = 1..n-1`. The vector field whose
//! flow preserves every `I_k` is, up to a scalar factor, the generalized cross
//! product of their gradients. [`build_deformed_3d`] writes the three
//! components out in closed form; [`build_deformed_nd`] builds the cofactor
//! expansion for any `n`. The two routes are independent and are cross-checked
//! in the tests.

mod builtin;
mod scaling;
mod scan;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{
    differentiate, parse, simplify, EvalError, Expr, ParameterBinding, ParseError, Program,
};

pub use builtin::{builtin, Builtin, BuiltinSystem, COUPLING};
pub use scaling::{normalize_rigid_body, ScalingCoefficients};
pub use scan::{equilibria_scan, ScanOptions};

/// Largest dimension for which the cofactor expansion is carried out
/// symbolically. Above it the cofactors are evaluated per point.
pub const SYMBOLIC_COFACTOR_MAX_DIM: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("dimension {got} not supported here (need {need})")]
    Dimension { got: usize, need: &'static str },
    #[error("expected {expected} deformation functions for dimension {dimension}, got {got}")]
    DeformationCount {
        dimension: usize,
        expected: usize,
        got: usize,
    },
    #[error("deformation {index} references x{coordinate}, outside dimension {dimension}")]
    CoordinateOutOfRange {
        index: usize,
        coordinate: usize,
        dimension: usize,
    },
    #[error("deformation {index}: {source}")]
    Parse { index: usize, source: ParseError },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(
        "unknown builtin '{0}' (expected euler3, euler_nd, cube_root_deform or quartic_deform)"
    )]
    UnknownBuiltin(String),
    #[error("no real scaling: k{j}*k{l} = {product} is not positive")]
    NoRealScaling { j: usize, l: usize, product: f64 },
}

/// Known pole locations of a field, used by the integrator's singularity guard
/// and by the rejection sampler.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoleSet {
    /// Poles on `x_i = 0`.
    #[serde(default)]
    pub coordinate_planes: bool,
    /// Poles on `x_i = x_j`.
    #[serde(default)]
    pub coincidence_planes: bool,
}

impl PoleSet {
    pub const NONE: PoleSet = PoleSet {
        coordinate_planes: false,
        coincidence_planes: false,
    };

    /// Distance-like margin of `x` from the pole set; `f64::INFINITY` when
    /// no poles are declared.
    pub fn margin(&self, x: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        if self.coordinate_planes {
            m = x.iter().fold(m, |m, v| m.min(v.abs()));
        }
        if self.coincidence_planes {
            for i in 0..x.len() {
                for j in i + 1..x.len() {
                    m = m.min((x[i] - x[j]).abs());
                }
            }
        }
        m
    }

    pub fn union(self, other: PoleSet) -> PoleSet {
        PoleSet {
            coordinate_planes: self.coordinate_planes || other.coordinate_planes,
            coincidence_planes: self.coincidence_planes || other.coincidence_planes,
        }
    }
}

/// Dimension plus the `n - 1` deformation functions `alpha_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationSpec {
    dimension: usize,
    deformations: Vec<Expr>,
    bindings: ParameterBinding,
    poles: PoleSet,
}

impl DeformationSpec {
    pub fn new(
        dimension: usize,
        deformations: Vec<Expr>,
        bindings: ParameterBinding,
    ) -> Result<Self, FieldError> {
        if dimension < 3 {
            return Err(FieldError::Dimension {
                got: dimension,
                need: ">= 3",
            });
        }
        if deformations.len() != dimension - 1 {
            return Err(FieldError::DeformationCount {
                dimension,
                expected: dimension - 1,
                got: deformations.len(),
            });
        }
        for (k, a) in deformations.iter().enumerate() {
            let c = a.max_coord();
            if c > dimension {
                return Err(FieldError::CoordinateOutOfRange {
                    index: k + 1,
                    coordinate: c,
                    dimension,
                });
            }
            for p in a.params() {
                if bindings.get(&p).is_none() {
                    return Err(EvalError::UnboundParameter(p).into());
                }
            }
        }
        Ok(DeformationSpec {
            dimension,
            deformations,
            bindings,
            poles: PoleSet::NONE,
        })
    }

    /// Parse the deformation functions from source text; every bound
    /// parameter name is accepted as an identifier.
    pub fn parse(
        dimension: usize,
        sources: &[&str],
        bindings: ParameterBinding,
    ) -> Result<Self, FieldError> {
        let names: Vec<&str> = bindings.names().collect();
        let deformations = sources
            .iter()
            .enumerate()
            .map(|(k, s)| {
                parse(s, dimension, &names).map_err(|source| FieldError::Parse {
                    index: k + 1,
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(dimension, deformations, bindings)
    }

    /// All `alpha_k = 0`: the integrals of the undeformed top.
    pub fn undeformed(dimension: usize) -> Result<Self, FieldError> {
        Self::new(
            dimension,
            vec![Expr::zero(); dimension.saturating_sub(1)],
            ParameterBinding::new(),
        )
    }

    pub fn with_poles(mut self, poles: PoleSet) -> Self {
        self.poles = poles;
        self
    }

    pub fn with_bindings(mut self, bindings: ParameterBinding) -> Result<Self, FieldError> {
        self.bindings = bindings;
        let poles = self.poles;
        Ok(Self::new(self.dimension, self.deformations, self.bindings)?.with_poles(poles))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn deformations(&self) -> &[Expr] {
        &self.deformations
    }

    pub fn bindings(&self) -> &ParameterBinding {
        &self.bindings
    }

    pub fn poles(&self) -> PoleSet {
        self.poles
    }

    /// `I_k = x1^2 - x_{k+1}^2 + 2 alpha_k` for `k` in `1..n`.
    pub fn integral(&self, k: usize) -> Expr {
        assert!(
            (1..self.dimension).contains(&k),
            "integral index {k} out of range"
        );
        let base = Expr::coord(1).powi(2) - Expr::coord(k + 1).powi(2);
        simplify(&(base + 2.0 * self.deformations[k - 1].clone()))
    }

    pub fn integrals(&self) -> Vec<Expr> {
        (1..self.dimension).map(|k| self.integral(k)).collect()
    }

    /// Simplified symbolic gradients; row `k - 1` is `grad I_k`.
    pub fn gradient_exprs(&self) -> Vec<Vec<Expr>> {
        self.integrals()
            .iter()
            .map(|ik| {
                (1..=self.dimension)
                    .map(|j| simplify(&differentiate(ik, j)))
                    .collect()
            })
            .collect()
    }

    /// Compile the integrals and their gradients for repeated evaluation.
    pub fn invariants(&self) -> Result<Invariants, FieldError> {
        let values = self
            .integrals()
            .iter()
            .map(|e| Program::compile(e, &self.bindings))
            .collect::<Result<Vec<_>, _>>()?;
        let gradients = self
            .gradient_exprs()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| Program::compile(e, &self.bindings))
                    .collect()
            })
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        Ok(Invariants {
            dimension: self.dimension,
            values,
            gradients,
        })
    }
}

/// Compiled first integrals `I_1..I_{n-1}` and their gradients.
#[derive(Debug, Clone)]
pub struct Invariants {
    dimension: usize,
    values: Vec<Program>,
    gradients: Vec<Vec<Program>>,
}

impl Invariants {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.values.iter().map(|p| p.eval(x)).collect()
    }

    /// The `(n-1) x n` matrix whose rows are the gradients.
    pub fn gradient_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut m = DMatrix::zeros(self.values.len(), self.dimension);
        for (k, row) in self.gradients.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                m[(k, j)] = p.eval(x)?;
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SynthesizedFromSpec,
    BuiltInClosedForm,
    UserClosedForm,
}

#[derive(Debug, Clone)]
enum Repr {
    Symbolic {
        components: Vec<Expr>,
        programs: Vec<Program>,
    },
    /// Gradient rows evaluated per point; components are `scale` times the
    /// signed cofactors.
    Cofactor {
        gradients: Vec<Vec<Program>>,
        scale: f64,
    },
}

/// Right-hand side `V_1..V_n` of a first-order system.
#[derive(Debug, Clone)]
pub struct VectorField {
    dimension: usize,
    repr: Repr,
    provenance: Provenance,
    bindings: ParameterBinding,
    poles: PoleSet,
}

impl VectorField {
    pub fn from_components(
        components: Vec<Expr>,
        bindings: ParameterBinding,
        provenance: Provenance,
    ) -> Result<Self, FieldError> {
        let dimension = components.len();
        if let Some(c) = components
            .iter()
            .map(Expr::max_coord)
            .max()
            .filter(|&c| c > dimension)
        {
            return Err(FieldError::CoordinateOutOfRange {
                index: 0,
                coordinate: c,
                dimension,
            });
        }
        let programs = components
            .iter()
            .map(|e| Program::compile(e, &bindings))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VectorField {
            dimension,
            repr: Repr::Symbolic {
                components,
                programs,
            },
            provenance,
            bindings,
            poles: PoleSet::NONE,
        })
    }

    pub fn with_poles(mut self, poles: PoleSet) -> Self {
        self.poles = poles;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn bindings(&self) -> &ParameterBinding {
        &self.bindings
    }

    pub fn poles(&self) -> PoleSet {
        self.poles
    }

    /// Symbolic components; `None` for per-point cofactor fields (`n > 5`).
    pub fn components(&self) -> Option<&[Expr]> {
        match &self.repr {
            Repr::Symbolic { components, .. } => Some(components),
            Repr::Cofactor { .. } => None,
        }
    }

    /// `sum_i dV_i/dx_i`, simplified, when the components are symbolic.
    pub fn divergence(&self) -> Option<Expr> {
        let comps = self.components()?;
        let sum = comps
            .iter()
            .enumerate()
            .map(|(i, v)| differentiate(v, i + 1))
            .reduce(|a, b| a + b)
            .unwrap_or_else(Expr::zero);
        Some(simplify(&sum))
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.dimension];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        if x.len() != self.dimension {
            return Err(EvalError::StateLength {
                got: x.len(),
                needed: self.dimension,
            });
        }
        match &self.repr {
            Repr::Symbolic { programs, .. } => {
                for (o, p) in out.iter_mut().zip(programs) {
                    *o = p.eval(x)?;
                }
            }
            Repr::Cofactor { gradients, scale } => {
                let n = self.dimension;
                let mut rows = DMatrix::zeros(n - 1, n);
                for (k, row) in gradients.iter().enumerate() {
                    for (j, p) in row.iter().enumerate() {
                        rows[(k, j)] = p.eval(x)?;
                    }
                }
                let g = cofactor_vector(&rows);
                for (o, gi) in out.iter_mut().zip(g) {
                    *o = scale * gi;
                }
            }
        }
        Ok(())
    }
}

/// `G_i = det[e_i; rows]` for an `(n-1) x n` matrix, via LU of each
/// column-deleted minor.
pub(crate) fn cofactor_vector(rows: &DMatrix<f64>) -> Vec<f64> {
    let n = rows.ncols();
    (0..n)
        .map(|i| {
            let minor = rows.clone().remove_column(i);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * minor.determinant()
        })
        .collect()
}

/// `(-1)^(n-1) / 2^(n-1)`: the factor that makes the undeformed cofactor field
/// equal to `dx_i/dt = prod_{j != i} x_j`.
pub fn nd_normalization(n: usize) -> f64 {
    let mag = 0.5f64.powi(n as i32 - 1);
    if (n - 1) % 2 == 0 {
        mag
    } else {
        -mag
    }
}

fn partials(e: &Expr, n: usize) -> Vec<Expr> {
    (1..=n).map(|j| simplify(&differentiate(e, j))).collect()
}

/// The three-dimensional deformed field written out component by component:
///
/// ```text
/// V1 = x2 x3 + a2 b3 - a3 b2 - x3 a2 - x2 b3
/// V2 = x1 x3 + a3 b1 - a1 b3 + x1 d3(alpha - beta) + x3 a1
/// V3 = x1 x2 + a1 b2 - a2 b1 - x1 d2(alpha - beta) + x2 b1
/// ```
///
/// with `a_j = d_j alpha`, `b_j = d_j beta`.
pub fn build_deformed_3d(spec: &DeformationSpec) -> Result<VectorField, FieldError> {
    if spec.dimension() != 3 {
        return Err(FieldError::Dimension {
            got: spec.dimension(),
            need: "3",
        });
    }
    let alpha = &spec.deformations()[0];
    let beta = &spec.deformations()[1];
    let a = partials(alpha, 3);
    let b = partials(beta, 3);
    let diff = alpha.clone() - beta.clone();
    let d = |j: usize| simplify(&differentiate(&diff, j));
    let x = Expr::coord;
    let v1 = x(2) * x(3) + a[1].clone() * b[2].clone()
        - a[2].clone() * b[1].clone()
        - x(3) * a[1].clone()
        - x(2) * b[2].clone();
    let v2 = x(1) * x(3) + a[2].clone() * b[0].clone() - a[0].clone() * b[2].clone()
        + x(1) * d(3)
        + x(3) * a[0].clone();
    let v3 = x(1) * x(2) + a[0].clone() * b[1].clone() - a[1].clone() * b[0].clone() - x(1) * d(2)
        + x(2) * b[0].clone();
    let components = [v1, v2, v3].iter().map(simplify).collect();
    Ok(VectorField::from_components(
        components,
        spec.bindings().clone(),
        Provenance::SynthesizedFromSpec,
    )?
    .with_poles(spec.poles()))
}

/// Symbolic determinant by Laplace expansion along the last column, each
/// term written as `minor * entry`. Products therefore multiply their
/// factors in column order.
fn symbolic_det(rows: &[Vec<Expr>], cols: &[usize]) -> Expr {
    let m = rows.len();
    if m == 1 {
        return rows[0][cols[0]].clone();
    }
    let c = cols[m - 1];
    let rest = &cols[..m - 1];
    let mut acc: Option<Expr> = None;
    for (r, row) in rows.iter().enumerate() {
        let entry = &row[c];
        if entry.is_zero() {
            continue;
        }
        let others: Vec<Vec<Expr>> = rows
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != r)
            .map(|(_, row)| row.clone())
            .collect();
        let minor = symbolic_det(&others, rest);
        if minor.is_zero() {
            continue;
        }
        let term = simplify(&(minor * entry.clone()));
        let negative = (m - 1 + r) % 2 == 1;
        acc = Some(match (acc, negative) {
            (None, false) => term,
            (None, true) => simplify(&-term),
            (Some(a), false) => simplify(&(a + term)),
            (Some(a), true) => simplify(&(a - term)),
        });
    }
    acc.unwrap_or_else(Expr::zero)
}

/// The generalized cross product of `grad I_1 .. grad I_{n-1}`, scaled by
/// [`nd_normalization`]. Component `i` is `det[e_i; grad I_1; ...]` with
/// `epsilon_{12..n} = +1`.
pub fn build_deformed_nd(spec: &DeformationSpec) -> Result<VectorField, FieldError> {
    let n = spec.dimension();
    let scale = nd_normalization(n);
    if n > SYMBOLIC_COFACTOR_MAX_DIM {
        let gradients = spec
            .gradient_exprs()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| Program::compile(e, spec.bindings()))
                    .collect()
            })
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        return Ok(VectorField {
            dimension: n,
            repr: Repr::Cofactor { gradients, scale },
            provenance: Provenance::SynthesizedFromSpec,
            bindings: spec.bindings().clone(),
            poles: spec.poles(),
        });
    }
    let grads = spec.gradient_exprs();
    let components = (0..n)
        .map(|i| {
            let cols: Vec<usize> = (0..n).filter(|&c| c != i).collect();
            let det = symbolic_det(&grads, &cols);
            let coeff = if i % 2 == 0 { scale } else { -scale };
            simplify(&(Expr::Const(coeff) * det))
        })
        .collect();
    Ok(VectorField::from_components(
        components,
        spec.bindings().clone(),
        Provenance::SynthesizedFromSpec,
    )?
    .with_poles(spec.poles()))
}

/// Synthesize the field for `spec`: the closed 3D form when `n = 3`, the
/// cofactor construction otherwise.
pub fn synthesize(spec: &DeformationSpec) -> Result<VectorField, FieldError> {
    if spec.dimension() == 3 {
        build_deformed_3d(spec)
    } else {
        build_deformed_nd(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1() -> ParameterBinding {
        ParameterBinding::new().with("g", 1.0)
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn zero_deformation_reduces_to_euler_top() {
        let spec = DeformationSpec::undeformed(3).unwrap();
        let v = build_deformed_3d(&spec).unwrap();
        let comps: Vec<String> = v
            .components()
            .unwrap()
            .iter()
            .map(ToString::to_string)
            .collect();
        assert_eq!(comps, ["(x2 * x3)", "(x1 * x3)", "(x1 * x2)"]);
        let nd = build_deformed_nd(&spec).unwrap();
        assert_eq!(nd.eval(&[1.0, 2.0, 3.0]).unwrap(), vec![6.0, 3.0, 2.0]);
    }

    #[test]
    fn cube_root_deformation_at_reference_point() {
        let spec = DeformationSpec::parse(3, &["g/x1 - g/x2", "g/x1 - g/x3"], g1()).unwrap();
        let v = build_deformed_3d(&spec)
            .unwrap()
            .eval(&[1.0, 2.0, 3.0])
            .unwrap();
        assert!(close(v[0], 91.0 / 18.0, 1e-15), "{}", v[0]);
        let w = build_deformed_nd(&spec)
            .unwrap()
            .eval(&[1.0, 2.0, 3.0])
            .unwrap();
        for i in 0..3 {
            assert!(close(v[i], w[i], 1e-12));
        }
    }

    #[test]
    fn four_dimensional_undeformed_products() {
        let spec = DeformationSpec::undeformed(4).unwrap();
        let v = build_deformed_nd(&spec).unwrap();
        assert_eq!(
            v.eval(&[1.0, 2.0, 3.0, 4.0]).unwrap(),
            vec![24.0, 12.0, 8.0, 6.0]
        );
        assert_eq!(nd_normalization(4), -0.125);
        assert_eq!(nd_normalization(3), 0.25);
    }

    #[test]
    fn numeric_cofactors_above_symbolic_limit() {
        let spec = DeformationSpec::undeformed(6).unwrap();
        let v = build_deformed_nd(&spec).unwrap();
        assert!(v.components().is_none());
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let got = v.eval(&x).unwrap();
        let prod: f64 = x.iter().product();
        for i in 0..6 {
            assert!(close(got[i], prod / x[i], 1e-13), "{i}: {}", got[i]);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(
            DeformationSpec::new(3, vec![Expr::zero()], ParameterBinding::new()),
            Err(FieldError::DeformationCount {
                expected: 2,
                got: 1,
                ..
            })
        ));
        assert!(matches!(
            DeformationSpec::undeformed(2),
            Err(FieldError::Dimension { .. })
        ));
        assert!(matches!(
            DeformationSpec::parse(3, &["g/x1", "0"], ParameterBinding::new()),
            Err(FieldError::Parse { index: 1, .. })
        ));
        assert!(matches!(
            DeformationSpec::new(
                3,
                vec![Expr::param("g"), Expr::zero()],
                ParameterBinding::new()
            ),
            Err(FieldError::Eval(EvalError::UnboundParameter(_)))
        ));
        assert!(build_deformed_3d(&DeformationSpec::undeformed(4).unwrap()).is_err());
    }

    #[test]
    fn integrals_and_gradients() {
        let spec = DeformationSpec::undeformed(3).unwrap();
        let inv = spec.invariants().unwrap();
        assert_eq!(inv.values(&[1.0, 2.0, 3.0]).unwrap(), vec![-3.0, -8.0]);
        let m = inv.gradient_matrix(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            m.row(0).iter().copied().collect::<Vec<_>>(),
            vec![2.0, -4.0, 0.0]
        );
        assert_eq!(
            m.row(1).iter().copied().collect::<Vec<_>>(),
            vec![2.0, 0.0, -6.0]
        );
    }

    #[test]
    fn pole_margin() {
        let both = PoleSet {
            coordinate_planes: true,
            coincidence_planes: true,
        };
        assert_eq!(both.margin(&[1.0, 2.0, 2.5]), 0.5);
        assert_eq!(PoleSet::NONE.margin(&[0.0, 0.0]), f64::INFINITY);
    }

    #[test]
    fn undeformed_cofactors_are_plain_products() {
        for n in 3..=5 {
            let v = build_deformed_nd(&DeformationSpec::undeformed(n).unwrap()).unwrap();
            let x: Vec<f64> = (0..n).map(|i| 0.1 + 0.37 * i as f64).collect();
            let got = v.eval(&x).unwrap();
            for i in 0..n {
                let product: f64 = (0..n).filter(|&j| j != i).map(|j| x[j]).product();
                assert_eq!(
                    got[i].to_bits(),
                    product.to_bits(),
                    "n = {n}, component {i}"
                );
            }
        }
    }
}
