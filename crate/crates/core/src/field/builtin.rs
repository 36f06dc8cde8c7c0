use std::fmt;
use std::str::FromStr;

use super::{DeformationSpec, FieldError, PoleSet, Provenance, VectorField};
use crate::expr::{parse, Expr, ParameterBinding};

/// Name of the coupling parameter in the built-in deformations.
pub const COUPLING: &str = "g";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    /// `dx1/dt = x2 x3`, cyclic.
    Euler3,
    /// `dx_i/dt = prod_{j != i} x_j`.
    EulerNd,
    /// `alpha_k = g/x1 - g/x_{k+1}`.
    CubeRootDeform,
    /// `2 alpha = g/(x12 x13) - g/(x21 x23)`, `2 beta = g/(x12 x13) - g/(x31 x32)`.
    QuarticDeform,
}

impl Builtin {
    pub const ALL: [Builtin; 4] = [
        Builtin::Euler3,
        Builtin::EulerNd,
        Builtin::CubeRootDeform,
        Builtin::QuarticDeform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Euler3 => "euler3",
            Builtin::EulerNd => "euler_nd",
            Builtin::CubeRootDeform => "cube_root_deform",
            Builtin::QuarticDeform => "quartic_deform",
        }
    }

    pub fn is_deformation(self) -> bool {
        matches!(self, Builtin::CubeRootDeform | Builtin::QuarticDeform)
    }

    pub fn poles(self) -> PoleSet {
        match self {
            Builtin::Euler3 | Builtin::EulerNd => PoleSet::NONE,
            Builtin::CubeRootDeform => PoleSet {
                coordinate_planes: true,
                coincidence_planes: false,
            },
            Builtin::QuarticDeform => PoleSet {
                coordinate_planes: false,
                coincidence_planes: true,
            },
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = FieldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| FieldError::UnknownBuiltin(s.to_string()))
    }
}

/// A built-in system: its deformation spec and, when one is known, the
/// hand-written closed-form field used as an oracle.
#[derive(Debug, Clone)]
pub struct BuiltinSystem {
    pub builtin: Builtin,
    pub spec: DeformationSpec,
    pub closed_form: Option<VectorField>,
}

const CUBE_ROOT_FIELD: [&str; 3] = [
    "x2*x3 - g*(x2^3 + x3^3)/(x2*x3)^2 + g^2/(x2*x3)^2",
    "x1*x3 - g*(x1^3 + x3^3)/(x1*x3)^2 + g^2/(x1*x3)^2",
    "x1*x2 - g*(x1^3 + x2^3)/(x1*x2)^2 + g^2/(x1*x2)^2",
];

const QUARTIC_DEFORMATIONS: [&str; 2] = [
    "g/2*(1/((x1 - x2)*(x1 - x3)) - 1/((x2 - x1)*(x2 - x3)))",
    "g/2*(1/((x1 - x2)*(x1 - x3)) - 1/((x3 - x1)*(x3 - x2)))",
];

const QUARTIC_FIELD: [&str; 3] = [
    "x2*x3 + g*(x1*(x2 + x3) - 2*x2*x3)/(2*(x1 - x2)*(x1 - x3)*(x2 - x3)^2) \
     + g*(x2^2 + x3^2 - x1*(x2 + x3))/((x1 - x2)^2*(x1 - x3)^2) \
     - 3*g^2/(2*(x1 - x2)^2*(x1 - x3)^2*(x2 - x3)^2)",
    "x1*x3 + g*(x2*(x1 + x3) - 2*x1*x3)/(2*(x2 - x1)*(x2 - x3)*(x1 - x3)^2) \
     + g*(x1^2 + x3^2 - x2*(x1 + x3))/((x1 - x2)^2*(x2 - x3)^2) \
     - 3*g^2/(2*(x1 - x2)^2*(x1 - x3)^2*(x2 - x3)^2)",
    "x1*x2 + g*(x3*(x1 + x2) - 2*x1*x2)/(2*(x3 - x2)*(x3 - x1)*(x1 - x2)^2) \
     + g*(x1^2 + x2^2 - x3*(x1 + x2))/((x2 - x3)^2*(x1 - x3)^2) \
     - 3*g^2/(2*(x1 - x2)^2*(x1 - x3)^2*(x2 - x3)^2)",
];

fn closed_form(
    sources: &[&str],
    bindings: &ParameterBinding,
    poles: PoleSet,
) -> Result<VectorField, FieldError> {
    let n = sources.len();
    let comps = sources
        .iter()
        .enumerate()
        .map(|(k, s)| {
            parse(s, n, &[COUPLING]).map_err(|source| FieldError::Parse {
                index: k + 1,
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(
        VectorField::from_components(comps, bindings.clone(), Provenance::BuiltInClosedForm)?
            .with_poles(poles),
    )
}

fn product_field(n: usize) -> Result<VectorField, FieldError> {
    let comps = (1..=n)
        .map(|i| {
            (1..=n)
                .filter(|&j| j != i)
                .map(Expr::coord)
                .reduce(|a, b| a * b)
                .expect("n >= 2")
        })
        .collect();
    VectorField::from_components(
        comps,
        ParameterBinding::new(),
        Provenance::BuiltInClosedForm,
    )
}

/// Look up a built-in system by name.
///
/// `euler3` and `quartic_deform` exist only for `dimension = 3`; the closed
/// form of `cube_root_deform` is only known for `dimension = 3`.
pub fn builtin(name: &str, dimension: usize, coupling: f64) -> Result<BuiltinSystem, FieldError> {
    let which: Builtin = name.parse()?;
    let bindings = ParameterBinding::new().with(COUPLING, coupling);
    let need3 = |d: usize| {
        if d == 3 {
            Ok(())
        } else {
            Err(FieldError::Dimension { got: d, need: "3" })
        }
    };
    let (spec, closed) = match which {
        Builtin::Euler3 => {
            need3(dimension)?;
            (DeformationSpec::undeformed(3)?, Some(product_field(3)?))
        }
        Builtin::EulerNd => (
            DeformationSpec::undeformed(dimension)?,
            Some(product_field(dimension)?),
        ),
        Builtin::CubeRootDeform => {
            let sources: Vec<String> = (2..=dimension).map(|k| format!("g/x1 - g/x{k}")).collect();
            let sources: Vec<&str> = sources.iter().map(String::as_str).collect();
            let spec = DeformationSpec::parse(dimension, &sources, bindings.clone())?;
            let closed = if dimension == 3 {
                Some(closed_form(&CUBE_ROOT_FIELD, &bindings, which.poles())?)
            } else {
                None
            };
            (spec, closed)
        }
        Builtin::QuarticDeform => {
            need3(dimension)?;
            let spec = DeformationSpec::parse(3, &QUARTIC_DEFORMATIONS, bindings.clone())?;
            (
                spec,
                Some(closed_form(&QUARTIC_FIELD, &bindings, which.poles())?),
            )
        }
    };
    Ok(BuiltinSystem {
        builtin: which,
        spec: spec.with_poles(which.poles()),
        closed_form: closed,
    })
}
