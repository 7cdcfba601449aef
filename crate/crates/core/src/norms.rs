//! Modulars and Luxemburg norms of discrete fields.
//!
//! All integrals use the one-point barycentric rule: a field contributes its
//! centroid value on each triangle, weighted by the triangle area.

use thiserror::Error;

use crate::mesh::{DiscreteField, MeshError};
use crate::nfunction::{NFunction, NFunctionError, SandwichReport};

const MAX_ITER: usize = 200;
const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormError {
    #[error("could not bracket the Luxemburg norm (lambda reached {lambda})")]
    BracketFailure { lambda: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    NFunction(#[from] NFunctionError),
}

/// An even convex function usable as a modular integrand.
pub trait YoungFunction {
    fn value(&self, t: f64) -> Result<f64, NFunctionError>;
    /// Right derivative at `|t|`.
    fn derivative(&self, t: f64) -> Result<f64, NFunctionError>;
}

impl YoungFunction for NFunction {
    fn value(&self, t: f64) -> Result<f64, NFunctionError> {
        self.potential(t)
    }

    fn derivative(&self, t: f64) -> Result<f64, NFunctionError> {
        Ok(self.flux(t))
    }
}

/// The complementary function of an N-function as a [`YoungFunction`].
#[derive(Debug, Clone, Copy)]
pub struct Complementary<'a>(pub &'a NFunction);

impl YoungFunction for Complementary<'_> {
    fn value(&self, t: f64) -> Result<f64, NFunctionError> {
        self.0.complementary(t)
    }

    fn derivative(&self, t: f64) -> Result<f64, NFunctionError> {
        if t == 0.0 {
            return Ok(0.0);
        }
        self.0.complementary_maximizer(t)
    }
}

/// `sum_i w_i Y(|v_i|)`.
pub fn modular_weighted<Y: YoungFunction + ?Sized>(y: &Y, values: &[f64], weights: &[f64]) -> Result<f64, NormError> {
    let mut acc = 0.0;
    for (&v, &w) in values.iter().zip(weights) {
        if v != 0.0 {
            acc += w * y.value(v)?;
        }
    }
    Ok(acc)
}

// ln of the modular of values/lambda, and its derivative in ln(lambda).
fn log_modular<Y: YoungFunction + ?Sized>(
    y: &Y,
    values: &[f64],
    weights: &[f64],
    log_lambda: f64,
) -> Result<(f64, f64), NormError> {
    let inv = (-log_lambda).exp();
    let (mut m, mut dm) = (0.0, 0.0);
    for (&v, &w) in values.iter().zip(weights) {
        if v != 0.0 {
            let s = v.abs() * inv;
            m += w * y.value(s)?;
            dm -= w * s * y.derivative(s)?;
        }
    }
    Ok((m.ln(), dm / m))
}

/// The unique `lambda` with `sum_i w_i Y(|v_i| / lambda) = 1`; zero for a zero field.
///
/// Bracketed bisection in `ln(lambda)` with Newton steps taken whenever they
/// stay inside the bracket.
pub fn luxemburg_weighted<Y: YoungFunction + ?Sized>(y: &Y, values: &[f64], weights: &[f64]) -> Result<f64, NormError> {
    if values.iter().zip(weights).all(|(&v, &w)| v == 0.0 || w == 0.0) {
        return Ok(0.0);
    }
    let eval = |mu: f64| log_modular(y, values, weights, mu);
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let (g0, _) = eval(0.0)?;
    if g0 > 0.0 {
        // Modular too large at lambda = 1: grow lambda.
        loop {
            hi += std::f64::consts::LN_2;
            if hi > 690.0 {
                return Err(NormError::BracketFailure { lambda: hi.exp() });
            }
            if eval(hi)?.0 <= 0.0 {
                break;
            }
            lo = hi;
        }
    } else {
        loop {
            lo -= std::f64::consts::LN_2;
            if lo < -690.0 {
                return Err(NormError::BracketFailure { lambda: lo.exp() });
            }
            let g = eval(lo)?.0;
            if g >= 0.0 || g.is_nan() {
                if g.is_nan() {
                    return Err(NormError::BracketFailure { lambda: lo.exp() });
                }
                break;
            }
            hi = lo;
        }
    }
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        let (g, dg) = eval(mu)?;
        if g == 0.0 {
            return Ok(mu.exp());
        }
        if g > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        if hi - lo < REL_TOL * 1e-2 {
            break;
        }
        let newton = mu - g / dg;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - mu).abs() < 1e-16 {
            mu = next;
            break;
        }
        mu = next;
    }
    Ok(mu.exp())
}

/// `int Phi(|u|)`.
pub fn modular(nf: &NFunction, field: &DiscreteField) -> Result<f64, NormError> {
    modular_weighted(nf, &field.element_means(), field.mesh().areas())
}

/// `|u|_Phi`.
pub fn luxemburg_norm(nf: &NFunction, field: &DiscreteField) -> Result<f64, NormError> {
    luxemburg_weighted(nf, &field.element_means(), field.mesh().areas())
}

/// `|u|_{Phi~}`.
pub fn complementary_norm(nf: &NFunction, field: &DiscreteField) -> Result<f64, NormError> {
    luxemburg_weighted(&Complementary(nf), &field.element_means(), field.mesh().areas())
}

/// `| |grad u| |_Phi`.
pub fn gradient_norm(nf: &NFunction, field: &DiscreteField) -> Result<f64, NormError> {
    luxemburg_weighted(nf, &field.gradient_norms(), field.mesh().areas())
}

/// `(int |u|^p)^(1/p)`.
pub fn lebesgue_norm(field: &DiscreteField, p: f64) -> f64 {
    field.integrate(|_, u| u.abs().powf(p)).powf(1.0 / p)
}

/// `(zeta_0(|u|_Phi), int Phi(u), zeta_1(|u|_Phi))`.
pub fn norm_modular_sandwich(nf: &NFunction, field: &DiscreteField) -> Result<SandwichReport, NormError> {
    let norm = luxemburg_norm(nf, field)?;
    Ok(SandwichReport {
        lower: nf.zeta_lower(norm),
        value: modular(nf, field)?,
        upper: nf.zeta_upper(norm),
    })
}

/// `2 |u|_Phi |v|_{Phi~} - int |u v|`; nonnegative by the Orlicz–Hölder inequality.
pub fn holder_check(nf: &NFunction, u: &DiscreteField, v: &DiscreteField) -> Result<f64, NormError> {
    u.same_mesh(v)?;
    let (um, vm) = (u.element_means(), v.element_means());
    let areas = u.mesh().areas();
    let product: f64 = um.iter().zip(&vm).zip(areas).map(|((a, b), w)| w * (a * b).abs()).sum();
    if product == 0.0 {
        return Ok(0.0);
    }
    let nu = luxemburg_weighted(nf, &um, areas)?;
    let nv = luxemburg_weighted(&Complementary(nf), &vm, areas)?;
    Ok(2.0 * nu * nv - product)
}

/// `|u|_Phi / | |grad u| |_Phi`, an empirical discrete Poincaré ratio.
pub fn poincare_ratio(nf: &NFunction, field: &DiscreteField) -> Result<f64, NormError> {
    Ok(luxemburg_norm(nf, field)? / gradient_norm(nf, field)?)
}
