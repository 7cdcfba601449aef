//! Built-in `phi` families and expression-defined custom `phi`.

use crate::expr::{Expr, ParseError, Var};
use crate::nfunction::{NFunction, NFunctionError, PhiSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinPhi {
    /// `phi = c`, `Phi(t) = c t^2 / 2`.
    Linear { c: f64 },
    /// `phi(t) = t^(p-2)`, `Phi(t) = t^p / p`.
    Power { p: f64 },
    /// `phi(t) = gamma (sqrt(1+t^2) - 1)^(gamma-1) / sqrt(1+t^2)`,
    /// `Phi(t) = (sqrt(1+t^2) - 1)^gamma`.
    ModelGamma { gamma: f64 },
    /// `phi(t) = p t^(p-2) ln(1+t) + t^(p-1)/(1+t)`, `Phi(t) = t^p ln(1+t)`.
    LogPower { p: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown phi family '{0}'")]
    Unknown(String),
    #[error("missing parameter '{param}' for phi family '{family}'")]
    MissingParameter { family: String, param: &'static str },
    #[error("parameter {param} = {value} out of range for '{family}': {constraint}")]
    BadParameter {
        family: String,
        param: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("expression: {0}")]
    Expression(#[from] ParseError),
}

// sqrt(1 + t^2) - 1 without cancellation for small t.
fn sqrt_shift(t: f64) -> f64 {
    let t2 = t * t;
    t2 / ((1.0 + t2).sqrt() + 1.0)
}

impl BuiltinPhi {
    pub const NAMES: [&'static str; 4] = ["linear", "power", "model-gamma", "log-power"];

    /// Looks up a family by registry name; `param` supplies its one parameter.
    pub fn from_name(name: &str, param: Option<f64>) -> Result<Self, RegistryError> {
        let need = |p: &'static str| {
            param.ok_or(RegistryError::MissingParameter {
                family: name.to_string(),
                param: p,
            })
        };
        match name {
            "linear" => Ok(BuiltinPhi::Linear { c: need("c")? }),
            "power" => Ok(BuiltinPhi::Power { p: need("p")? }),
            "model-gamma" => Ok(BuiltinPhi::ModelGamma { gamma: need("gamma")? }),
            "log-power" => Ok(BuiltinPhi::LogPower { p: need("p")? }),
            other => Err(RegistryError::Unknown(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinPhi::Linear { .. } => "linear",
            BuiltinPhi::Power { .. } => "power",
            BuiltinPhi::ModelGamma { .. } => "model-gamma",
            BuiltinPhi::LogPower { .. } => "log-power",
        }
    }

    /// `(parameter name, value)`.
    pub fn parameter(&self) -> (&'static str, f64) {
        match *self {
            BuiltinPhi::Linear { c } => ("c", c),
            BuiltinPhi::Power { p } => ("p", p),
            BuiltinPhi::ModelGamma { gamma } => ("gamma", gamma),
            BuiltinPhi::LogPower { p } => ("p", p),
        }
    }

    fn check(&self) -> Result<(), RegistryError> {
        let (param, value) = self.parameter();
        let (ok, constraint) = match self {
            BuiltinPhi::Linear { .. } => (value > 0.0, "c > 0"),
            BuiltinPhi::Power { .. } | BuiltinPhi::LogPower { .. } => (value > 1.0, "p > 1"),
            BuiltinPhi::ModelGamma { .. } => (value >= 1.0, "gamma >= 1"),
        };
        if ok && value.is_finite() {
            Ok(())
        } else {
            Err(RegistryError::BadParameter {
                family: self.name().to_string(),
                param,
                value,
                constraint,
            })
        }
    }

    pub fn spec(&self) -> Result<PhiSpec, RegistryError> {
        self.check()?;
        let label = format!("{}({}={})", self.name(), self.parameter().0, self.parameter().1);
        let spec = match *self {
            BuiltinPhi::Linear { c } => PhiSpec::new(label, move |_| c)
                .with_potential(move |t| 0.5 * c * t * t)
                .with_flux_derivative(move |_| c),
            BuiltinPhi::Power { p } => PhiSpec::new(label, move |t: f64| t.powf(p - 2.0))
                .with_potential(move |t: f64| t.powf(p) / p)
                .with_flux_derivative(move |t: f64| (p - 1.0) * t.powf(p - 2.0)),
            BuiltinPhi::ModelGamma { gamma } => PhiSpec::new(label, move |t: f64| {
                let w = sqrt_shift(t);
                gamma * w.powf(gamma - 1.0) / (1.0 + w)
            })
            .with_potential(move |t: f64| sqrt_shift(t).powf(gamma)),
            BuiltinPhi::LogPower { p } => PhiSpec::new(label, move |t: f64| {
                p * t.powf(p - 2.0) * t.ln_1p() + t.powf(p - 1.0) / (t + 1.0)
            })
            .with_potential(move |t: f64| t.powf(p) * t.ln_1p()),
        };
        Ok(spec)
    }

    /// Builds the N-function with the default probe grid and tolerances.
    pub fn build(&self) -> Result<NFunction, BuildError> {
        Ok(NFunction::from_spec(self.spec()?)?)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    NFunction(#[from] NFunctionError),
}

/// A `phi` given as an expression in `t`, with an optional closed-form potential.
pub fn custom_spec(phi: &str, potential: Option<&str>) -> Result<PhiSpec, RegistryError> {
    let phi_expr = Expr::parse(phi, &[Var::T])?;
    let label = format!("custom({})", phi_expr.source());
    let mut spec = PhiSpec::new(label, move |t| phi_expr.eval_t(t));
    if let Some(src) = potential {
        let p = Expr::parse(src, &[Var::T])?;
        spec = spec.with_potential(move |t| p.eval_t(t));
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for name in BuiltinPhi::NAMES {
            let b = BuiltinPhi::from_name(name, Some(2.0)).unwrap();
            assert_eq!(b.name(), name);
        }
        assert!(matches!(BuiltinPhi::from_name("exp", Some(1.0)), Err(RegistryError::Unknown(_))));
        assert!(matches!(
            BuiltinPhi::from_name("power", None),
            Err(RegistryError::MissingParameter { .. })
        ));
    }

    #[test]
    fn parameter_ranges() {
        assert!(BuiltinPhi::Power { p: 1.0 }.spec().is_err());
        assert!(BuiltinPhi::Linear { c: 0.0 }.spec().is_err());
        assert!(BuiltinPhi::ModelGamma { gamma: 0.5 }.spec().is_err());
        assert!(BuiltinPhi::ModelGamma { gamma: 1.0 }.spec().is_ok());
    }

    #[test]
    fn model_gamma_small_t_is_stable() {
        let spec = BuiltinPhi::ModelGamma { gamma: 2.0 }.spec().unwrap();
        let t = 1e-7;
        let phi = (spec.phi)(t);
        // phi ~ gamma (t^2/2)^(gamma-1) for small t.
        assert!((phi / (2.0 * t * t / 2.0) - 1.0).abs() < 1e-12);
        let pot = (spec.potential.unwrap())(t);
        assert!((pot / (t.powi(4) / 4.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn custom_expression_matches_builtin() {
        let custom = NFunction::from_spec(custom_spec("3*t", Some("t^3")).unwrap()).unwrap();
        let builtin = BuiltinPhi::Power { p: 3.0 }.build().unwrap();
        assert!((custom.ell() - builtin.ell()).abs() < 1e-12);
        assert!((custom.potential(2.0).unwrap() - 8.0).abs() < 1e-12);
        assert!(custom_spec("3*x", None).is_err());
    }
}
