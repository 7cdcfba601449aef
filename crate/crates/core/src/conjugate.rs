//! The Sobolev conjugate `Phi_*` of an N-function.
//!
//! `Phi_*^{-1}(t) = int_0^t Phi^{-1}(s) / s^((N+1)/N) ds`. Substituting
//! `s = Phi(sigma)` turns this into
//!
//! ```text
//! G(r) := Phi_*^{-1}(Phi(r)) = int_0^r q(sigma) Phi(sigma)^(-1/N) d sigma,
//! q(sigma) = sigma^2 phi(sigma) / Phi(sigma),
//! ```
//!
//! so `Phi_*(G(r)) = Phi(r)` and no inverse of `Phi` is needed inside the
//! integral. `G` is tabulated on log-spaced nodes and integrated in
//! `x = ln(sigma)`, where the endpoint singularity at `sigma = 0` becomes an
//! exponentially decaying tail with rate `1 - q/N > 0`.

use thiserror::Error;

use crate::nfunction::{NFunction, NFunctionError, SandwichReport};
use crate::quad;

const TABLE_DECADES_BEYOND_GRID: f64 = 2.0;
const TABLE_STEP: f64 = 0.1;
const PANEL_REL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConjugateError {
    #[error("dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("Sobolev conjugate needs 1 < ell <= m < N; got ell = {ell}, m = {em}, N = {dimension}")]
    IndexOutOfRange { ell: f64, em: f64, dimension: usize },
    #[error("quadrature failed near the origin (sigma = {sigma})")]
    QuadratureFailure { sigma: f64 },
    #[error("conjugate table is not strictly increasing at r = {r}")]
    NotIncreasing { r: f64 },
    #[error(transparent)]
    NFunction(#[from] NFunctionError),
}

/// `Phi_*` with its indices `ell* = N ell/(N - ell)`, `m* = N m/(N - m)`.
#[derive(Debug, Clone)]
pub struct SobolevConjugate {
    nf: NFunction,
    dimension: usize,
    inv_n: f64,
    ell_star: f64,
    em_star: f64,
    // ln(r) at table nodes and G at those nodes.
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SobolevConjugate {
    pub fn new(nf: &NFunction, dimension: usize) -> Result<Self, ConjugateError> {
        if dimension < 2 {
            return Err(ConjugateError::Dimension(dimension));
        }
        let n = dimension as f64;
        let (ell, em) = (nf.ell(), nf.em());
        if !(1.0 < ell && ell <= em && em < n) {
            return Err(ConjugateError::IndexOutOfRange { ell, em, dimension });
        }
        let grid = nf.probe_grid();
        let widen = TABLE_DECADES_BEYOND_GRID * std::f64::consts::LN_10;
        let x_lo = grid[0].ln() - widen;
        let x_hi = grid[grid.len() - 1].ln() + widen;
        let steps = ((x_hi - x_lo) / TABLE_STEP).ceil() as usize;
        let mut sc = Self {
            nf: nf.clone(),
            dimension,
            inv_n: 1.0 / n,
            ell_star: n * ell / (n - ell),
            em_star: n * em / (n - em),
            nodes: Vec::with_capacity(steps + 1),
            cumulative: Vec::with_capacity(steps + 1),
        };
        let mut acc = sc.head(x_lo)?;
        sc.nodes.push(x_lo);
        sc.cumulative.push(acc);
        for i in 1..=steps {
            let a = x_lo + (x_hi - x_lo) * (i - 1) as f64 / steps as f64;
            let b = x_lo + (x_hi - x_lo) * i as f64 / steps as f64;
            let piece = quad::integrate(|x| sc.integrand(x), a, b, PANEL_REL_TOL, 0.0, 64)
                .map_err(|_| ConjugateError::QuadratureFailure { sigma: a.exp() })?;
            if !(piece > 0.0) {
                return Err(ConjugateError::NotIncreasing { r: b.exp() });
            }
            acc += piece;
            sc.nodes.push(b);
            sc.cumulative.push(acc);
        }
        Ok(sc)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn ell_star(&self) -> f64 {
        self.ell_star
    }

    pub fn em_star(&self) -> f64 {
        self.em_star
    }

    pub fn nfunction(&self) -> &NFunction {
        &self.nf
    }

    // d G / d x at x = ln(sigma): sigma^3 phi(sigma) / Phi(sigma)^(1 + 1/N).
    fn integrand(&self, x: f64) -> f64 {
        let sigma = x.exp();
        let pot = self.nf.potential_or_nan(sigma);
        if !(pot > 0.0) || !pot.is_finite() {
            return 0.0;
        }
        let log = 3.0 * x + self.nf.phi(sigma).ln() - (1.0 + self.inv_n) * pot.ln();
        log.exp()
    }

    // Local decay rate 1 - q/N of the integrand as x -> -infinity.
    fn decay_rate(&self, x: f64) -> f64 {
        let q = self.nf.quotient(x.exp()).unwrap_or(self.nf.em());
        1.0 - q * self.inv_n
    }

    // int_{-inf}^{x} of the integrand: chunks of width 2 walking left until
    // negligible, then the power-law tail h(x_c) / (1 - q(x_c)/N).
    fn head(&self, x: f64) -> Result<f64, ConjugateError> {
        let mut total = 0.0;
        let mut right = x;
        for _ in 0..2000 {
            let left = right - 2.0;
            let h_left = self.integrand(left);
            if h_left == 0.0 || !h_left.is_finite() {
                // Potential underflowed: the remaining tail is a power law in sigma.
                let h_right = self.integrand(right);
                let rate = self.decay_rate(right);
                return Ok(total + h_right / rate);
            }
            let piece = quad::integrate(|y| self.integrand(y), left, right, PANEL_REL_TOL, 0.0, 64)
                .map_err(|_| ConjugateError::QuadratureFailure { sigma: left.exp() })?;
            total += piece;
            let rate = self.decay_rate(left);
            let tail = h_left / rate;
            // Once the index quotient has settled the integrand is a pure
            // exponential in x and the tail is exact.
            let settled = (rate - self.decay_rate(right)).abs() < 1e-13 * rate;
            if tail < 1e-17 * total || settled {
                return Ok(total + tail);
            }
            right = left;
        }
        Err(ConjugateError::QuadratureFailure { sigma: right.exp() })
    }

    /// `G(r) = Phi_*^{-1}(Phi(r))`.
    pub fn g(&self, r: f64) -> Result<f64, ConjugateError> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        let x = r.ln();
        let first = self.nodes[0];
        let last = *self.nodes.last().expect("table is nonempty");
        if x < first {
            return self.head(x);
        }
        if x >= last {
            let rest = quad::integrate(|y| self.integrand(y), last, x, PANEL_REL_TOL, 0.0, 400)
                .map_err(|_| ConjugateError::QuadratureFailure { sigma: r })?;
            return Ok(self.cumulative[self.cumulative.len() - 1] + rest);
        }
        let k = (self.nodes.partition_point(|&n| n <= x) - 1).min(self.nodes.len() - 2);
        let (piece, _) = quad::gk15(&|y| self.integrand(y), self.nodes[k], x);
        Ok(self.cumulative[k] + piece)
    }

    /// `Phi_*^{-1}(t)`.
    pub fn inverse(&self, t: f64) -> Result<f64, ConjugateError> {
        let t = t.abs();
        if t == 0.0 {
            return Ok(0.0);
        }
        self.g(self.nf.inverse(t))
    }

    /// The `r` with `G(r) = y`, so that `Phi_*(y) = Phi(r)`.
    pub fn preimage(&self, y: f64) -> Result<f64, ConjugateError> {
        let y = y.abs();
        if y == 0.0 {
            return Ok(0.0);
        }
        // Bracket in x = ln r.
        let (mut lo, mut hi);
        let n = self.cumulative.len();
        if y < self.cumulative[0] {
            hi = self.nodes[0];
            lo = hi - 1.0;
            while self.g(lo.exp())? > y {
                hi = lo;
                lo -= 1.0;
                if lo < -700.0 {
                    return Ok(0.0);
                }
            }
        } else if y >= self.cumulative[n - 1] {
            lo = self.nodes[n - 1];
            hi = lo + 1.0;
            while self.g(hi.exp())? < y {
                lo = hi;
                hi += 1.0;
                if hi > 700.0 {
                    return Ok(f64::INFINITY);
                }
            }
        } else {
            let k = self.cumulative.partition_point(|&c| c <= y) - 1;
            lo = self.nodes[k];
            hi = self.nodes[k + 1];
        }
        // Safeguarded Newton on G(e^x) - y with derivative integrand(x).
        let mut x = 0.5 * (lo + hi);
        for _ in 0..100 {
            let gx = self.g(x.exp())?;
            let resid = gx - y;
            if resid == 0.0 {
                break;
            }
            if resid < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.integrand(x);
            let mut next = x - resid / d;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) || hi - lo <= f64::EPSILON {
                x = next;
                break;
            }
            x = next;
        }
        Ok(x.exp())
    }

    /// `Phi_*(y)`.
    pub fn eval(&self, y: f64) -> Result<f64, ConjugateError> {
        let r = self.preimage(y)?;
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok(self.nf.potential(r)?)
    }

    /// `y Phi_*'(y) / Phi_*(y)` by a central difference in `ln y`.
    pub fn index_fd(&self, y: f64, h: f64) -> Result<f64, ConjugateError> {
        let up = self.eval(y * h.exp())?;
        let down = self.eval(y * (-h).exp())?;
        Ok((up.ln() - down.ln()) / (2.0 * h))
    }

    /// The same index in closed form along the parametrisation:
    /// `G(r) Phi(r)^(1/N) / r`.
    pub fn index_at_preimage(&self, r: f64) -> Result<f64, ConjugateError> {
        Ok(self.g(r)? * self.nf.potential(r)?.powf(self.inv_n) / r)
    }

    pub fn zeta_lower(&self, t: f64) -> f64 {
        t.powf(self.ell_star).min(t.powf(self.em_star))
    }

    pub fn zeta_upper(&self, t: f64) -> f64 {
        t.powf(self.ell_star).max(t.powf(self.em_star))
    }

    /// `(zeta_2(t) Phi_*(rho), Phi_*(rho t), zeta_3(t) Phi_*(rho))`.
    pub fn zeta_bounds(&self, rho: f64, t: f64) -> Result<SandwichReport, ConjugateError> {
        let base = self.eval(rho)?;
        Ok(SandwichReport {
            lower: self.zeta_lower(t) * base,
            value: self.eval(rho * t)?,
            upper: self.zeta_upper(t) * base,
        })
    }

    /// Arguments of `Phi_*` whose preimages lie in `[r_lo, r_hi]`.
    pub fn argument_range(&self, r_lo: f64, r_hi: f64) -> Result<(f64, f64), ConjugateError> {
        Ok((self.g(r_lo)?, self.g(r_hi)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::BuiltinPhi;

    fn square() -> NFunction {
        BuiltinPhi::Linear { c: 2.0 }.build().unwrap()
    }

    #[test]
    fn square_in_three_dimensions() {
        // Phi(t) = t^2, N = 3: Phi_*^{-1}(t) = 6 t^(1/6), Phi_*(y) = (y/6)^6.
        let sc = SobolevConjugate::new(&square(), 3).unwrap();
        assert!((sc.ell_star() - 6.0).abs() < 1e-5);
        assert!((sc.em_star() - 6.0).abs() < 1e-5);
        for t in [1e-20f64, 1e-9, 0.3, 1.0, 50.0, 1e12, 1e30] {
            let exact = 6.0 * t.powf(1.0 / 6.0);
            let got = sc.inverse(t).unwrap();
            assert!((got - exact).abs() < 1e-10 * exact, "t={t}: {got} vs {exact}");
        }
        for y in [1e-3, 0.7, 6.0, 10.0, 1e3] {
            let exact = (y / 6.0f64).powi(6);
            let got = sc.eval(y).unwrap();
            assert!((got - exact).abs() < 1e-10 * exact, "y={y}: {got} vs {exact}");
        }
    }

    #[test]
    fn forward_inverse_identity() {
        let nf = BuiltinPhi::ModelGamma { gamma: 2.0 }.build().unwrap();
        let sc = SobolevConjugate::new(&nf, 5).unwrap();
        for t in [1e-9, 1e-3, 0.5, 2.0, 1e4, 1e9] {
            let y = sc.inverse(t).unwrap();
            let back = sc.eval(y).unwrap();
            assert!((back - t).abs() < 1e-9 * t, "t={t}: {back}");
        }
    }

    #[test]
    fn rejects_m_at_least_n() {
        let nf = BuiltinPhi::ModelGamma { gamma: 2.0 }.build().unwrap();
        assert!(matches!(
            SobolevConjugate::new(&nf, 3),
            Err(ConjugateError::IndexOutOfRange { .. })
        ));
        let sc = SobolevConjugate::new(&nf, 5).unwrap();
        assert!((sc.ell_star() - 10.0 / 3.0).abs() < 1e-5);
        assert!((sc.em_star() - 20.0).abs() < 1e-4);
        assert!(matches!(SobolevConjugate::new(&nf, 1), Err(ConjugateError::Dimension(1))));
    }

    #[test]
    fn finite_difference_index_matches_parametric_index() {
        let nf = BuiltinPhi::LogPower { p: 2.0 }.build().unwrap();
        let sc = SobolevConjugate::new(&nf, 4).unwrap();
        for r in [1e-3, 0.1, 1.0, 10.0, 1e3] {
            let y = sc.g(r).unwrap();
            let fd = sc.index_fd(y, 1e-4).unwrap();
            let exact = sc.index_at_preimage(r).unwrap();
            assert!((fd - exact).abs() < 1e-6 * exact, "r={r}: {fd} vs {exact}");
            assert!(exact >= sc.ell_star() && exact <= sc.em_star());
        }
    }
}
