//! N-functions built from a user supplied `phi`.
//!
//! An [`NFunction`] carries the potential `Phi(t) = int_0^t s phi(s) ds`, its
//! growth indices `ell <= t^2 phi(t) / Phi(t) <= em` certified on a log-spaced
//! probe grid, the Delta_2 constant, and the complementary function
//! `Phi~(t) = max_{s >= 0} { s t - Phi(s) }`.
//!
//! `s phi(s)` is treated as odd and `Phi` as even: every routine here works
//! on `|t|`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::quad;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default upper end of the search interval for `s phi(s) = t`.
pub const DEFAULT_DOMAIN_HINT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NFunctionError {
    #[error("phi({t}) = {value} is not a positive finite number")]
    InvalidPhi { t: f64, value: f64 },
    #[error("t*phi(t) is not monotone: it decreases at t = {t}")]
    NonMonotone { t: f64 },
    #[error("t*phi(t) does not grow from the left probe endpoint to the right one ({left} -> {right})")]
    PhiLimits { left: f64, right: f64 },
    #[error("potential is not strictly increasing at t = {t}")]
    NotIncreasing { t: f64 },
    #[error("potential is not convex at t = {t}")]
    NotConvex { t: f64 },
    #[error("growth indices out of range: ell = {ell}, m = {em} ({reason})")]
    IndexOutOfRange { ell: f64, em: f64, reason: String },
    #[error("quadrature did not converge on [{a}, {b}]")]
    QuadratureFailure { a: f64, b: f64 },
    #[error("no root of s*phi(s) = {target} below {limit}")]
    BracketFailure { target: f64, limit: f64 },
    #[error("invalid probe grid: {0}")]
    InvalidGrid(String),
}

impl From<quad::QuadFailure> for NFunctionError {
    fn from(e: quad::QuadFailure) -> Self {
        NFunctionError::QuadratureFailure { a: e.a, b: e.b }
    }
}

/// A user supplied `phi` with optional closed forms.
#[derive(Clone)]
pub struct PhiSpec {
    pub name: String,
    pub phi: ScalarFn,
    /// Closed form of `Phi`; quadrature of `s phi(s)` is used when absent.
    pub potential: Option<ScalarFn>,
    /// Closed form of `d/dt (t phi(t))`, checked for sign on the probe grid.
    pub flux_derivative: Option<ScalarFn>,
    /// Right end of the interval used to invert `s phi(s)`.
    pub domain_hint: f64,
}

impl fmt::Debug for PhiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhiSpec")
            .field("name", &self.name)
            .field("closed_potential", &self.potential.is_some())
            .field("closed_flux_derivative", &self.flux_derivative.is_some())
            .field("domain_hint", &self.domain_hint)
            .finish()
    }
}

impl PhiSpec {
    pub fn new(name: impl Into<String>, phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            phi: Arc::new(phi),
            potential: None,
            flux_derivative: None,
            domain_hint: DEFAULT_DOMAIN_HINT,
        }
    }

    pub fn with_potential(mut self, potential: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.potential = Some(Arc::new(potential));
        self
    }

    pub fn with_flux_derivative(mut self, d: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.flux_derivative = Some(Arc::new(d));
        self
    }

    pub fn with_domain_hint(mut self, t_max: f64) -> Self {
        self.domain_hint = t_max;
        self
    }
}

/// Log-spaced abscissae on which the N-function conditions are certified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        Self {
            t_min: 1e-6,
            t_max: 1e6,
            points: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative widening applied to the grid inf/sup of the index quotient.
    pub index_widening: f64,
    /// `ell` must exceed `1 + index_floor`.
    pub index_floor: f64,
    /// Relative tolerance of the potential quadrature.
    pub quadrature_rel: f64,
    /// Relative slack allowed when checking monotonicity of `t phi(t)`.
    pub monotone_rel: f64,
    /// Relative slack allowed on secant slopes of `Phi`.
    pub convexity_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            index_widening: 1e-7,
            index_floor: 1e-6,
            quadrature_rel: 1e-10,
            monotone_rel: 1e-12,
            convexity_rel: 1e-9,
        }
    }
}

/// Three values expected to satisfy `lower <= value <= upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichReport {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

impl SandwichReport {
    /// Whether the sandwich holds with relative slack `rel`.
    pub fn holds(&self, rel: f64) -> bool {
        self.value >= self.lower * (1.0 - rel) && self.value <= self.upper * (1.0 + rel)
    }

    /// Largest relative violation; nonpositive when the sandwich holds.
    pub fn worst_violation(&self) -> f64 {
        let scale = self.value.abs().max(f64::MIN_POSITIVE);
        ((self.lower - self.value) / scale).max((self.value - self.upper) / scale)
    }
}

#[derive(Clone)]
enum Potential {
    Closed(ScalarFn),
    // Cumulative quadrature values at the probe grid nodes.
    Tabulated(Vec<f64>),
}

/// A validated N-function.
#[derive(Clone)]
pub struct NFunction {
    spec: PhiSpec,
    tolerances: Tolerances,
    grid: Vec<f64>,
    grid_potential: Vec<f64>,
    potential: Potential,
    quotient_range: (f64, f64),
    ell: f64,
    em: f64,
    delta2: f64,
}

impl fmt::Debug for NFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NFunction")
            .field("name", &self.spec.name)
            .field("ell", &self.ell)
            .field("em", &self.em)
            .field("delta2", &self.delta2)
            .finish()
    }
}

impl NFunction {
    /// Validates `spec` on the probe grid and certifies its growth indices.
    pub fn build(spec: PhiSpec, probe: ProbeGrid, tol: Tolerances) -> Result<Self, NFunctionError> {
        if !(probe.t_min > 0.0 && probe.t_max > probe.t_min && probe.points >= 2) {
            return Err(NFunctionError::InvalidGrid(format!("{probe:?}")));
        }
        if !(spec.domain_hint >= probe.t_max) {
            return Err(NFunctionError::InvalidGrid(format!(
                "domain hint {} is below the probe grid end {}",
                spec.domain_hint, probe.t_max
            )));
        }
        let grid = quad::log_space(probe.t_min, probe.t_max, probe.points);

        let mut flux = Vec::with_capacity(grid.len());
        for &t in &grid {
            let value = (spec.phi)(t);
            if !(value.is_finite() && value > 0.0) {
                return Err(NFunctionError::InvalidPhi { t, value });
            }
            flux.push(t * value);
        }
        for (w, &t) in flux.windows(2).zip(&grid[1..]) {
            if w[1] < w[0] * (1.0 - tol.monotone_rel) {
                return Err(NFunctionError::NonMonotone { t });
            }
        }
        if let Some(d) = &spec.flux_derivative {
            if let Some(&t) = grid.iter().find(|&&t| d(t) < 0.0) {
                return Err(NFunctionError::NonMonotone { t });
            }
        }
        // With ell > 1 certified below, t phi(t) is squeezed between multiples of
        // t^(ell - 1) near 0 and above one near infinity, so the limits follow.
        let (left, right) = (flux[0], flux[flux.len() - 1]);
        if !(left < right) {
            return Err(NFunctionError::PhiLimits { left, right });
        }

        let (potential, grid_potential) = match &spec.potential {
            Some(p) => {
                let values: Vec<f64> = grid.iter().map(|&t| p(t)).collect();
                (Potential::Closed(p.clone()), values)
            }
            None => {
                let phi = spec.phi.clone();
                let mut values = Vec::with_capacity(grid.len());
                let mut acc = 0.0;
                let mut a = 0.0;
                for &b in &grid {
                    acc += quad::integrate(|s| s * phi(s), a, b, tol.quadrature_rel, 0.0, 400)?;
                    values.push(acc);
                    a = b;
                }
                (Potential::Tabulated(values.clone()), values)
            }
        };

        for (i, &t) in grid.iter().enumerate() {
            let v = grid_potential[i];
            let prev = if i == 0 { 0.0 } else { grid_potential[i - 1] };
            if !(v.is_finite() && v > prev) {
                return Err(NFunctionError::NotIncreasing { t });
            }
        }
        let slopes: Vec<f64> = grid
            .windows(2)
            .zip(grid_potential.windows(2))
            .map(|(t, p)| (p[1] - p[0]) / (t[1] - t[0]))
            .collect();
        for (w, &t) in slopes.windows(2).zip(&grid[1..]) {
            if w[1] < w[0] * (1.0 - tol.convexity_rel) {
                return Err(NFunctionError::NotConvex { t });
            }
        }

        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for ((&t, &f), &p) in grid.iter().zip(&flux).zip(&grid_potential) {
            let q = t * f / p;
            lo = lo.min(q);
            hi = hi.max(q);
        }
        let ell = lo * (1.0 - tol.index_widening);
        let em = hi * (1.0 + tol.index_widening);
        if !(ell > 1.0 + tol.index_floor) || !em.is_finite() {
            return Err(NFunctionError::IndexOutOfRange {
                ell,
                em,
                reason: "ell must exceed 1 for the complementary function to satisfy Delta_2".into(),
            });
        }

        let mut nf = Self {
            spec,
            tolerances: tol,
            grid,
            grid_potential,
            potential,
            quotient_range: (lo, hi),
            ell,
            em,
            delta2: 1.0,
        };
        let mut k: f64 = 1.0;
        for (&t, &p) in nf.grid.iter().zip(&nf.grid_potential) {
            k = k.max(nf.potential(2.0 * t)? / p);
        }
        nf.delta2 = k;
        Ok(nf)
    }

    /// Builds with the default probe grid and tolerances.
    pub fn from_spec(spec: PhiSpec) -> Result<Self, NFunctionError> {
        Self::build(spec, ProbeGrid::default(), Tolerances::default())
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn spec(&self) -> &PhiSpec {
        &self.spec
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tolerances
    }

    pub fn probe_grid(&self) -> &[f64] {
        &self.grid
    }

    /// Certified lower index (grid infimum, widened).
    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// Certified upper index (grid supremum, widened).
    pub fn em(&self) -> f64 {
        self.em
    }

    /// Unwidened grid infimum and supremum of `t^2 phi(t) / Phi(t)`.
    pub fn quotient_range(&self) -> (f64, f64) {
        self.quotient_range
    }

    /// `sup Phi(2t) / Phi(t)` over the probe grid.
    pub fn delta2_constant(&self) -> f64 {
        self.delta2
    }

    pub fn phi(&self, t: f64) -> f64 {
        (self.spec.phi)(t.abs())
    }

    /// `|t| phi(|t|)`, with the limit value 0 at the origin.
    pub fn flux(&self, t: f64) -> f64 {
        let t = t.abs();
        if t == 0.0 {
            0.0
        } else {
            t * (self.spec.phi)(t)
        }
    }

    /// `t^2 phi(t) / Phi(t)`.
    pub fn quotient(&self, t: f64) -> Result<f64, NFunctionError> {
        let t = t.abs();
        Ok(t * self.flux(t) / self.potential(t)?)
    }

    /// `Phi(|t|)`.
    pub fn potential(&self, t: f64) -> Result<f64, NFunctionError> {
        let t = t.abs();
        if t == 0.0 {
            return Ok(0.0);
        }
        match &self.potential {
            Potential::Closed(p) => Ok(p(t)),
            Potential::Tabulated(values) => {
                let i = self.grid.partition_point(|&g| g <= t);
                let (a, base) = if i == 0 { (0.0, 0.0) } else { (self.grid[i - 1], values[i - 1]) };
                let phi = self.spec.phi.clone();
                let rest = quad::integrate(|s| s * phi(s), a, t, self.tolerances.quadrature_rel, 0.0, 400)?;
                Ok(base + rest)
            }
        }
    }

    // NaN on quadrature failure; used inside monotone searches.
    pub(crate) fn potential_or_nan(&self, t: f64) -> f64 {
        self.potential(t).unwrap_or(f64::NAN)
    }

    /// `Phi^{-1}(y)` by bisection on the monotone potential.
    pub fn inverse(&self, y: f64) -> f64 {
        let y = y.abs();
        let start = *self.grid.last().expect("grid is nonempty");
        quad::invert_nondecreasing(|t| self.potential_or_nan(t), y, start, f64::MAX / 4.0, 80)
            .unwrap_or(f64::INFINITY)
    }

    /// The maximizer `s` of `s t - Phi(s)`, i.e. the root of `s phi(s) = t`.
    pub fn complementary_maximizer(&self, t: f64) -> Result<f64, NFunctionError> {
        let t = t.abs();
        let limit = self.spec.domain_hint;
        quad::invert_nondecreasing(|s| self.flux(s), t, 1.0, limit, 200)
            .ok_or(NFunctionError::BracketFailure { target: t, limit })
    }

    /// The complementary function `Phi~(t)`.
    pub fn complementary(&self, t: f64) -> Result<f64, NFunctionError> {
        let t = t.abs();
        if t == 0.0 {
            return Ok(0.0);
        }
        let s = self.complementary_maximizer(t)?;
        Ok((s * t - self.potential(s)?).max(0.0))
    }

    /// Young's gap `Phi(s) + Phi~(t) - s t`, nonnegative up to rounding.
    pub fn young_gap(&self, s: f64, t: f64) -> Result<f64, NFunctionError> {
        let (s, t) = (s.abs(), t.abs());
        Ok(self.potential(s)? + self.complementary(t)? - s * t)
    }

    /// `min{t^ell, t^m}`.
    pub fn zeta_lower(&self, t: f64) -> f64 {
        t.powf(self.ell).min(t.powf(self.em))
    }

    /// `max{t^ell, t^m}`.
    pub fn zeta_upper(&self, t: f64) -> f64 {
        t.powf(self.ell).max(t.powf(self.em))
    }

    /// `(zeta_0(t) Phi(rho), Phi(rho t), zeta_1(t) Phi(rho))`.
    pub fn zeta_bounds(&self, rho: f64, t: f64) -> Result<SandwichReport, NFunctionError> {
        let base = self.potential(rho)?;
        Ok(SandwichReport {
            lower: self.zeta_lower(t) * base,
            value: self.potential(rho * t)?,
            upper: self.zeta_upper(t) * base,
        })
    }
}
