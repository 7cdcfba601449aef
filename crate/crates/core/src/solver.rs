//! Discrete energy minimization for `-div(phi(|grad u|) grad u) = f(x, u) + h`
//! with `u = 0` on the boundary.
//!
//! The energy `I(u) = int Phi(|grad u|) - int F(x, u) - int h u` is assembled
//! over P1 fields: the gradient term is exact per triangle, the lower-order
//! terms use the centroid rule. [`weak_gradient`] is the exact gradient of
//! that discrete energy, so a minimizer is a discrete weak solution.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::conjugate::SobolevConjugate;
use crate::mesh::{DiscreteField, Mesh, MeshError};
use crate::nfunction::{NFunction, NFunctionError};
use crate::norms::{self, NormError};
use crate::quad;

pub type PointFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type ReactionFn = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    NFunction(#[from] NFunctionError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error("field is nonzero ({value}) at boundary vertex {vertex}")]
    NotTraceZero { vertex: usize, value: f64 },
    #[error("coercivity estimate needs A_infinity")]
    MissingAInfinity,
    #[error("{what} evaluated to a non-finite value")]
    NonFinite { what: &'static str },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReactionError {
    #[error("F(x, 0) = {value} at x = {x:?}; F must vanish at s = 0")]
    NonzeroAtOrigin { x: [f64; 2], value: f64 },
    #[error("dF/ds = {derivative} but f = {f} at x = {x:?}, s = {s}")]
    Inconsistent { x: [f64; 2], s: f64, derivative: f64, f: f64 },
}

/// Which form of the critical growth bound is declared for `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CriticalForm {
    /// `|f(x,s)| <= a Phi_*(s) + b(x)`.
    Strong,
    /// `|f(x,s) s| <= a Phi_*(s) + b(x) |s|`.
    Weak,
}

#[derive(Clone)]
pub struct CriticalBound {
    pub a: f64,
    pub b: PointFn,
    pub form: CriticalForm,
}

/// `F(x,s) <= A |s|^ell + B(x)`.
#[derive(Clone)]
pub struct PotentialBound {
    pub a: f64,
    pub b: PointFn,
}

/// The nonlinearity `f`, its potential `F` and declared growth data.
#[derive(Clone)]
pub struct Reaction {
    pub f: ReactionFn,
    pub potential: ReactionFn,
    pub potential_bound: Option<PotentialBound>,
    pub critical_bound: Option<CriticalBound>,
    pub a_infinity: Option<PointFn>,
}

impl fmt::Debug for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reaction")
            .field("potential_bound", &self.potential_bound.as_ref().map(|b| b.a))
            .field("critical_bound", &self.critical_bound.as_ref().map(|b| (b.a, b.form)))
            .field("a_infinity", &self.a_infinity.is_some())
            .finish()
    }
}

pub fn constant(c: f64) -> PointFn {
    Arc::new(move |_| c)
}

impl Reaction {
    /// `f = 0`.
    pub fn zero() -> Self {
        Self::new(|_, _| 0.0, |_, _| 0.0).with_a_infinity(constant(0.0))
    }

    pub fn new(
        f: impl Fn([f64; 2], f64) -> f64 + Send + Sync + 'static,
        potential: impl Fn([f64; 2], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            potential: Arc::new(potential),
            potential_bound: None,
            critical_bound: None,
            a_infinity: None,
        }
    }

    /// `F` obtained by adaptive quadrature of `f` in `s`.
    pub fn from_f(f: impl Fn([f64; 2], f64) -> f64 + Send + Sync + 'static) -> Self {
        let f: ReactionFn = Arc::new(f);
        let g = f.clone();
        let potential = move |x: [f64; 2], s: f64| {
            quad::integrate(|r| g(x, r), 0.0, s, 1e-12, 1e-300, 400).unwrap_or(f64::NAN)
        };
        Self {
            f,
            potential: Arc::new(potential),
            potential_bound: None,
            critical_bound: None,
            a_infinity: None,
        }
    }

    pub fn with_a_infinity(mut self, a_inf: PointFn) -> Self {
        self.a_infinity = Some(a_inf);
        self
    }

    pub fn with_potential_bound(mut self, a: f64, b: PointFn) -> Self {
        self.potential_bound = Some(PotentialBound { a, b });
        self
    }

    pub fn with_critical_bound(mut self, a: f64, b: PointFn, form: CriticalForm) -> Self {
        self.critical_bound = Some(CriticalBound { a, b, form });
        self
    }

    /// Checks `F(x,0) = 0` and `dF/ds = f` by central differences at the given points.
    pub fn validate(&self, points: &[[f64; 2]]) -> Result<(), ReactionError> {
        for &x in points {
            let value = (self.potential)(x, 0.0);
            if value.abs() > 1e-12 {
                return Err(ReactionError::NonzeroAtOrigin { x, value });
            }
            for s in [-1.7, -0.45, 0.3, 1.1, 2.6] {
                let h = 1e-5;
                let derivative = ((self.potential)(x, s + h) - (self.potential)(x, s - h)) / (2.0 * h);
                let f = (self.f)(x, s);
                if (derivative - f).abs() > 1e-5 * f.abs().max(1.0) {
                    return Err(ReactionError::Inconsistent { x, s, derivative, f });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Init {
    Zero,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Stop when the sup-norm of the weak residual drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// L-BFGS memory; 0 gives plain steepest descent.
    pub memory: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Energies below this flag a possibly non-coercive functional.
    pub energy_floor: f64,
    /// Iterates with sup-norm above this flag a possibly non-coercive functional.
    pub blowup_norm: f64,
    pub init: Init,
    /// Replaces `Phi(|g|)` by `Phi(sqrt(|g|^2 + eps^2)) - Phi(eps)`.
    pub epsilon_shift: f64,
    pub coercivity_samples: usize,
    pub coercivity_steps: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            memory: 8,
            c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            energy_floor: -1e12,
            blowup_norm: 1e12,
            init: Init::Zero,
            epsilon_shift: 0.0,
            coercivity_samples: 0,
            coercivity_steps: 200,
        }
    }
}

/// One instance of the Dirichlet problem on a mesh.
#[derive(Clone)]
pub struct ProblemSpec {
    pub nfunction: NFunction,
    pub reaction: Reaction,
    pub source: PointFn,
    pub mesh: Arc<Mesh>,
    pub params: SolverParams,
    pub seed: u64,
    /// Exponent of the `A_infinity |v|^ell` term; defaults to the grid infimum
    /// of the index quotient.
    pub ell: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("nfunction", &self.nfunction)
            .field("reaction", &self.reaction)
            .field("vertices", &self.mesh.vertex_count())
            .field("params", &self.params)
            .field("seed", &self.seed)
            .field("ell", &self.ell)
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(nfunction: NFunction, reaction: Reaction, source: PointFn, mesh: Arc<Mesh>) -> Self {
        let ell = nfunction.quotient_range().0;
        Self {
            nfunction,
            reaction,
            source,
            mesh,
            params: SolverParams::default(),
            seed: 0,
            ell,
        }
    }

    pub fn with_params(mut self, params: SolverParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn check_field(&self, field: &DiscreteField) -> Result<(), SolverError> {
        field.on_mesh(&self.mesh)?;
        if !field.is_trace_zero() {
            for (v, &b) in self.mesh.boundary_mask().iter().enumerate() {
                let value = field.values()[v];
                if b && value != 0.0 {
                    return Err(SolverError::NotTraceZero { vertex: v, value });
                }
            }
        }
        Ok(())
    }

    fn source_at_centroids(&self) -> Vec<f64> {
        self.mesh.centroids().iter().map(|&c| (self.source)(c)).collect()
    }
}

// int Phi(|grad u|) + sum_T |T| lower(T, c_T, u(c_T)); `lower` returns the
// integrand and its derivative in u. Element terms are computed in parallel
// and reduced in element order, so results do not depend on thread count.
fn assemble(
    nf: &NFunction,
    mesh: &Mesh,
    eps: f64,
    values: &[f64],
    grad: Option<&mut [f64]>,
    lower: impl Fn(usize, [f64; 2], f64) -> (f64, f64) + Sync,
) -> Result<f64, SolverError> {
    let shift = if eps > 0.0 { nf.potential(eps)? } else { 0.0 };
    let want_grad = grad.is_some();
    let terms: Vec<(f64, [f64; 3])> = (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| -> Result<(f64, [f64; 3]), SolverError> {
            let area = mesh.areas()[t];
            let gu = mesh.element_gradient(t, values);
            let norm = (gu[0] * gu[0] + gu[1] * gu[1] + eps * eps).sqrt();
            let (pot, coef) = if norm == 0.0 {
                // s phi(s) -> 0 as s -> 0: no flux on flat elements.
                (0.0, 0.0)
            } else {
                (nf.potential(norm)? - shift, nf.phi(norm))
            };
            let (lv, ld) = lower(t, mesh.centroids()[t], mesh.element_mean(t, values));
            let mut local = [0.0; 3];
            if want_grad {
                let op = mesh.gradient_operator(t);
                for (k, g) in local.iter_mut().enumerate() {
                    *g = area * (coef * (gu[0] * op[0][k] + gu[1] * op[1][k]) + ld / 3.0);
                }
            }
            Ok((area * (pot + lv), local))
        })
        .collect::<Result<_, _>>()?;
    let total: f64 = terms.iter().map(|(e, _)| e).sum();
    if let Some(g) = grad {
        g.fill(0.0);
        for (tri, (_, local)) in mesh.triangles().iter().zip(&terms) {
            for k in 0..3 {
                g[tri[k]] += local[k];
            }
        }
    }
    if !total.is_finite() {
        return Err(SolverError::NonFinite { what: "energy" });
    }
    Ok(total)
}

struct EnergyAssembler<'a> {
    spec: &'a ProblemSpec,
    source: Vec<f64>,
}

impl<'a> EnergyAssembler<'a> {
    fn new(spec: &'a ProblemSpec) -> Self {
        Self {
            spec,
            source: spec.source_at_centroids(),
        }
    }

    fn eval(&self, values: &[f64], grad: Option<&mut [f64]>) -> Result<f64, SolverError> {
        let r = &self.spec.reaction;
        assemble(
            &self.spec.nfunction,
            &self.spec.mesh,
            self.spec.params.epsilon_shift,
            values,
            grad,
            |t, x, u| {
                let h = self.source[t];
                (-(r.potential)(x, u) - h * u, -(r.f)(x, u) - h)
            },
        )
    }
}

/// `I(u)` for a trace-zero field on the problem mesh.
pub fn energy(spec: &ProblemSpec, field: &DiscreteField) -> Result<f64, SolverError> {
    spec.check_field(field)?;
    EnergyAssembler::new(spec).eval(field.values(), None)
}

/// The weak residual `int phi(|grad u|) grad u . grad v_j - int f(x,u) v_j - int h v_j`
/// at each interior vertex `j`, in [`Mesh::interior`] order.
pub fn weak_gradient(spec: &ProblemSpec, field: &DiscreteField) -> Result<Vec<f64>, SolverError> {
    spec.check_field(field)?;
    let mut full = vec![0.0; spec.mesh.vertex_count()];
    EnergyAssembler::new(spec).eval(field.values(), Some(&mut full))?;
    Ok(spec.mesh.interior().iter().map(|&v| full[v]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// Energy fell below the floor or the iterate blew up: the functional may
    /// not be coercive for this problem.
    NonCoercive,
    LineSearchStall,
}

impl SolveStatus {
    pub fn exit_code(self) -> u8 {
        match self {
            SolveStatus::Converged => 0,
            SolveStatus::MaxIterations => 1,
            SolveStatus::NonCoercive => 2,
            SolveStatus::LineSearchStall => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum GrowthCondition {
    /// `F(x,s) <= A |s|^ell + B(x)`.
    Potential,
    /// `|f(x,s)| <= a Phi_*(s) + b(x)`.
    Critical,
    /// `|f(x,s) s| <= a Phi_*(s) + b(x) |s|`.
    WeakCritical,
    /// `F(x,s) / |s|^ell` at large `|s|` disagrees with the declared `A_infinity(x)`.
    AInfinity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthViolation {
    pub condition: GrowthCondition,
    pub x: [f64; 2],
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub minimizer: DiscreteField,
    pub energy_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub coercivity_estimate: Option<f64>,
    pub growth_violations: Vec<GrowthViolation>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    status: SolveStatus,
    iterations: usize,
    residual_norm: f64,
    final_energy: Option<f64>,
    coercivity_estimate: Option<f64>,
    energy_trace: &'a [f64],
    growth_violation_count: usize,
    growth_violations: &'a [GrowthViolation],
}

const REPORTED_VIOLATIONS: usize = 100;

impl SolveReport {
    pub fn final_energy(&self) -> Option<f64> {
        self.energy_trace.last().copied()
    }

    /// Pretty JSON; at most the first 100 growth violations are listed.
    pub fn to_json(&self) -> String {
        let view = ReportJson {
            status: self.status,
            iterations: self.iterations,
            residual_norm: self.residual_norm,
            final_energy: self.final_energy(),
            coercivity_estimate: self.coercivity_estimate,
            energy_trace: &self.energy_trace,
            growth_violation_count: self.growth_violations.len(),
            growth_violations: &self.growth_violations[..self.growth_violations.len().min(REPORTED_VIOLATIONS)],
        };
        serde_json::to_string_pretty(&view).expect("report serializes")
    }

    /// `iter,energy,residual` rows.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iter,energy,residual")?;
        for (i, (e, r)) in self.energy_trace.iter().zip(&self.residual_trace).enumerate() {
            writeln!(out, "{i},{e},{r}")?;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn random_interior(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

// Two-loop recursion: returns -H g.
fn lbfgs_direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes the discrete energy over trace-zero fields.
///
/// Descent directions come from L-BFGS (steepest descent when the memory is
/// zero or a direction fails to descend); steps satisfy the Armijo condition,
/// so the energy trace is nonincreasing.
pub fn minimize(spec: &ProblemSpec) -> Result<SolveReport, SolverError> {
    let p = &spec.params;
    let mesh = &spec.mesh;
    let interior = mesh.interior();
    let n = interior.len();
    let assembler = EnergyAssembler::new(spec);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = match p.init {
        Init::Zero => vec![0.0; n],
        Init::Random => random_interior(&mut rng, n),
    };
    let mut full = vec![0.0; mesh.vertex_count()];
    let mut full_grad = vec![0.0; mesh.vertex_count()];
    let scatter = |x: &[f64], full: &mut Vec<f64>| {
        for (&v, &u) in interior.iter().zip(x) {
            full[v] = u;
        }
    };
    let gather = |full: &[f64]| -> Vec<f64> { interior.iter().map(|&v| full[v]).collect() };

    scatter(&x, &mut full);
    let mut e = assembler.eval(&full, Some(&mut full_grad))?;
    let mut g = gather(&full_grad);
    let mut energy_trace = vec![e];
    let mut residual_trace = vec![sup_norm(&g)];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut step_hint = 1.0 / sup_norm(&g).max(f64::MIN_POSITIVE);

    for it in 0..p.max_iter {
        if sup_norm(&g) < p.tol {
            status = SolveStatus::Converged;
            break;
        }
        let mut direction = if p.memory > 0 && !pairs.is_empty() {
            lbfgs_direction(&g, &pairs)
        } else {
            g.iter().map(|v| -v).collect()
        };
        let mut slope = dot(&g, &direction);
        if !(slope < 0.0) {
            pairs.clear();
            direction = g.iter().map(|v| -v).collect();
            slope = dot(&g, &direction);
        }
        let mut alpha = if pairs.is_empty() { step_hint } else { 1.0 };
        let mut accepted = None;
        for attempt in 0..2 {
            for _ in 0..p.max_backtracks {
                let trial: Vec<f64> = x.iter().zip(&direction).map(|(a, d)| a + alpha * d).collect();
                scatter(&trial, &mut full);
                match assembler.eval(&full, Some(&mut full_grad)) {
                    Ok(e_new) if e_new <= e + p.c1 * alpha * slope => {
                        accepted = Some((trial, e_new, gather(&full_grad)));
                        break;
                    }
                    Ok(_) | Err(SolverError::NonFinite { .. }) => alpha *= p.backtrack,
                    Err(err) => return Err(err),
                }
            }
            if accepted.is_some() || attempt == 1 || pairs.is_empty() {
                break;
            }
            // Quasi-Newton direction failed: retry along the negative gradient.
            pairs.clear();
            direction = g.iter().map(|v| -v).collect();
            slope = dot(&g, &direction);
            alpha = step_hint;
        }
        let Some((x_new, e_new, g_new)) = accepted else {
            status = SolveStatus::LineSearchStall;
            break;
        };
        iterations = it + 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            step_hint = dot(&s, &s) / sy;
            if p.memory > 0 {
                if pairs.len() == p.memory {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, 1.0 / sy));
            }
        } else {
            step_hint *= 2.0;
        }
        x = x_new;
        e = e_new;
        g = g_new;
        energy_trace.push(e);
        residual_trace.push(sup_norm(&g));
        if e < p.energy_floor || sup_norm(&x) > p.blowup_norm {
            status = SolveStatus::NonCoercive;
            break;
        }
    }
    if status == SolveStatus::MaxIterations && sup_norm(&g) < p.tol {
        status = SolveStatus::Converged;
    }

    let minimizer = DiscreteField::from_interior(mesh.clone(), &x)?;
    let coercivity = if p.coercivity_samples > 0 && spec.reaction.a_infinity.is_some() {
        Some(coercivity_estimate(spec, p.coercivity_samples, p.coercivity_steps)?)
    } else {
        None
    };
    Ok(SolveReport {
        status,
        minimizer,
        residual_norm: sup_norm(&g),
        energy_trace,
        residual_trace,
        iterations,
        coercivity_estimate: coercivity,
        growth_violations: Vec::new(),
    })
}

struct SphereFunctional<'a> {
    spec: &'a ProblemSpec,
    a_inf: Vec<f64>,
}

impl SphereFunctional<'_> {
    // Q(v) = int Phi(|grad v|) - int A_inf |v|^ell, with gradient on the full vertex set.
    fn eval(&self, values: &[f64], grad: Option<&mut [f64]>) -> Result<f64, SolverError> {
        let ell = self.spec.ell;
        assemble(
            &self.spec.nfunction,
            &self.spec.mesh,
            self.spec.params.epsilon_shift,
            values,
            grad,
            |t, _, v| {
                let a = self.a_inf[t];
                let m = v.abs();
                if m == 0.0 {
                    (0.0, 0.0)
                } else {
                    (-a * m.powf(ell), -a * ell * m.powf(ell - 1.0) * v.signum())
                }
            },
        )
    }

    fn project(&self, values: &mut [f64]) -> Result<bool, SolverError> {
        let mesh = &self.spec.mesh;
        let means: Vec<f64> = (0..mesh.triangle_count()).map(|t| mesh.element_mean(t, values)).collect();
        let norm = norms::luxemburg_weighted(&self.spec.nfunction, &means, mesh.areas())?;
        if norm == 0.0 {
            return Ok(false);
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(true)
    }
}

/// Smallest value found of `Q(v) = int Phi(|grad v|) - int A_inf |v|^ell` on the
/// discrete unit Luxemburg sphere, by projected gradient descent from `samples`
/// seeded random starts.
///
/// This is an upper bound on the discrete infimum: a negative value shows the
/// coercivity condition fails on this mesh; a positive value is only evidence.
pub fn coercivity_estimate(spec: &ProblemSpec, samples: usize, descent_steps: usize) -> Result<f64, SolverError> {
    let a_inf = spec.reaction.a_infinity.as_ref().ok_or(SolverError::MissingAInfinity)?;
    let mesh = &spec.mesh;
    let functional = SphereFunctional {
        spec,
        a_inf: mesh.centroids().iter().map(|&c| a_inf(c)).collect(),
    };
    let interior = mesh.interior();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut best = f64::INFINITY;
    let nv = mesh.vertex_count();

    for _ in 0..samples.max(1) {
        let mut v = vec![0.0; nv];
        for (&i, r) in interior.iter().zip(random_interior(&mut rng, interior.len())) {
            v[i] = r;
        }
        if !functional.project(&mut v)? {
            continue;
        }
        let mut grad = vec![0.0; nv];
        let mut q = functional.eval(&v, Some(&mut grad))?;
        let mut alpha = 1.0 / sup_norm(&grad).max(f64::MIN_POSITIVE);
        for _ in 0..descent_steps {
            let mut improved = false;
            for _ in 0..60 {
                let mut w: Vec<f64> = v.iter().zip(&grad).map(|(a, g)| a - alpha * g).collect();
                for (i, &b) in mesh.boundary_mask().iter().enumerate() {
                    if b {
                        w[i] = 0.0;
                    }
                }
                if !functional.project(&mut w)? {
                    alpha *= 0.5;
                    continue;
                }
                let mut grad_w = vec![0.0; nv];
                let qw = functional.eval(&w, Some(&mut grad_w))?;
                if qw < q {
                    let s: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = grad_w.iter().zip(&grad).map(|(a, b)| a - b).collect();
                    let sy = dot(&s, &y);
                    alpha = if sy > 0.0 { dot(&s, &s) / sy } else { 2.0 * alpha };
                    v = w;
                    grad = grad_w;
                    q = qw;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        best = best.min(q);
    }
    Ok(best)
}

/// The reference growth function in the critical bounds.
pub trait CriticalGrowth {
    fn value(&self, s: f64) -> f64;
}

impl CriticalGrowth for SobolevConjugate {
    fn value(&self, s: f64) -> f64 {
        self.eval(s).unwrap_or(f64::INFINITY)
    }
}

/// `|s|^exponent`, e.g. the critical power `gamma*` of a power-type `Phi`.
#[derive(Debug, Clone, Copy)]
pub struct PowerGrowth {
    pub exponent: f64,
}

impl CriticalGrowth for PowerGrowth {
    fn value(&self, s: f64) -> f64 {
        s.abs().powf(self.exponent)
    }
}

#[derive(Debug, Clone)]
pub struct AuditConfig {
    /// Magnitudes of `s` are log-uniform in `[s_min, s_max]`, signs random.
    pub s_min: f64,
    pub s_max: f64,
    pub samples: usize,
    /// Points `x` cycled through by the samples.
    pub points: Vec<[f64; 2]>,
    pub seed: u64,
    /// Relative slack before a sample counts as a violation.
    pub rel_tol: f64,
    /// Exponent `ell` in the potential bound and the `A_infinity` quotient.
    pub ell: f64,
}

impl AuditConfig {
    pub fn new(points: Vec<[f64; 2]>, ell: f64) -> Self {
        Self {
            s_min: 1e-3,
            s_max: 1e3,
            samples: 10_000,
            points,
            seed: 0,
            rel_tol: 1e-10,
            ell,
        }
    }
}

fn exceeds(lhs: f64, rhs: f64, rel: f64) -> bool {
    !(lhs <= rhs + rel * lhs.abs().max(rhs.abs()))
}

/// Samples `(x, s)` and records every declared growth inequality that fails.
/// An empty list means consistency at the sampled points, never a proof.
pub fn growth_audit(reaction: &Reaction, config: &AuditConfig, critical: &dyn CriticalGrowth) -> Vec<GrowthViolation> {
    let mut out = Vec::new();
    if config.points.is_empty() {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = (config.s_min.ln(), config.s_max.ln());
    for i in 0..config.samples {
        let x = config.points[i % config.points.len()];
        let mag = rng.gen_range(lo..=hi).exp();
        let s = if rng.gen_bool(0.5) { mag } else { -mag };
        if let Some(pb) = &reaction.potential_bound {
            let lhs = (reaction.potential)(x, s);
            let rhs = pb.a * mag.powf(config.ell) + (pb.b)(x);
            if exceeds(lhs, rhs, config.rel_tol) {
                out.push(GrowthViolation { condition: GrowthCondition::Potential, x, s, lhs, rhs });
            }
        }
        if let Some(cb) = &reaction.critical_bound {
            let f = (reaction.f)(x, s);
            let psi = critical.value(s);
            let (condition, lhs, rhs) = match cb.form {
                CriticalForm::Strong => (GrowthCondition::Critical, f.abs(), cb.a * psi + (cb.b)(x)),
                CriticalForm::Weak => (GrowthCondition::WeakCritical, (f * s).abs(), cb.a * psi + (cb.b)(x) * mag),
            };
            if exceeds(lhs, rhs, config.rel_tol) {
                out.push(GrowthViolation { condition, x, s, lhs, rhs });
            }
        }
    }
    if let Some(a_inf) = &reaction.a_infinity {
        for &x in &config.points {
            let declared = a_inf(x);
            let slack = 0.05 * declared.abs().max(1.0);
            let observed: Vec<(f64, f64)> = [1e3, 1e4]
                .iter()
                .flat_map(|&m| [m, -m])
                .map(|s| (s, (reaction.potential)(x, s) / s.abs().powf(config.ell)))
                .collect();
            let (s_max, q_max) = observed
                .iter()
                .copied()
                .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            let too_high = observed.iter().any(|&(s, q)| s.abs() == 1e4 && q > declared + slack);
            let too_low = q_max < declared - slack;
            if too_high || too_low {
                out.push(GrowthViolation {
                    condition: GrowthCondition::AInfinity,
                    x,
                    s: s_max,
                    lhs: q_max,
                    rhs: declared,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::BuiltinPhi;

    fn unit(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::rectangle(n, n, 1.0, 1.0).unwrap())
    }

    fn laplace_problem(n: usize, h: f64) -> ProblemSpec {
        let nf = BuiltinPhi::Linear { c: 2.0 }.build().unwrap();
        ProblemSpec::new(nf, Reaction::zero(), constant(h), unit(n))
    }

    #[test]
    fn zero_field_has_zero_energy_and_gradient() {
        let spec = laplace_problem(6, 0.0);
        let z = DiscreteField::zero(spec.mesh.clone());
        assert_eq!(energy(&spec, &z).unwrap(), 0.0);
        assert!(weak_gradient(&spec, &z).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn boundary_violation_rejected() {
        let spec = laplace_problem(6, 0.0);
        let u = DiscreteField::interpolate(spec.mesh.clone(), |p| p[0]);
        assert!(matches!(energy(&spec, &u), Err(SolverError::NotTraceZero { .. })));
        let other = DiscreteField::zero(unit(5));
        assert!(matches!(energy(&spec, &other), Err(SolverError::Mesh(MeshError::MeshMismatch))));
    }

    #[test]
    fn laplacian_stiffness_on_two_by_two() {
        // phi = 1: the flux term is the P1 Laplacian stiffness action.
        let nf = BuiltinPhi::Linear { c: 1.0 }.build().unwrap();
        let mesh = unit(2);
        let spec = ProblemSpec::new(nf, Reaction::zero(), constant(0.0), mesh.clone());
        // Hand assembly: K_jj = sum over triangles of |T| |grad l_j|^2.
        let centre = mesh.interior()[0];
        let mut kjj = 0.0;
        for (t, tri) in mesh.triangles().iter().enumerate() {
            if let Some(k) = tri.iter().position(|&v| v == centre) {
                let op = mesh.gradient_operator(t);
                kjj += mesh.areas()[t] * (op[0][k].powi(2) + op[1][k].powi(2));
            }
        }
        assert!((kjj - 4.0).abs() < 1e-12);
        let u = DiscreteField::from_interior(mesh, &[0.7]).unwrap();
        let g = weak_gradient(&spec, &u).unwrap();
        assert!((g[0] - kjj * 0.7).abs() < 1e-12);
        // Energy is (1/2) u^T K u for Phi(t) = t^2 / 2.
        assert!((energy(&spec, &u).unwrap() - 0.5 * kjj * 0.49).abs() < 1e-12);
    }

    #[test]
    fn power_scaling_law() {
        let nf = BuiltinPhi::Power { p: 3.0 }.build().unwrap();
        let mesh = unit(8);
        let spec = ProblemSpec::new(nf, Reaction::zero(), constant(0.0), mesh.clone());
        let u = DiscreteField::interpolate_trace_zero(mesh, |p| (3.0 * p[0]).sin() * p[1]);
        let base = energy(&spec, &u).unwrap();
        for alpha in [0.5, 2.0, 7.0] {
            let scaled = energy(&spec, &u.scaled(alpha)).unwrap();
            assert!((scaled - alpha.powi(3) * base).abs() < 1e-12 * scaled.abs());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let nf = BuiltinPhi::ModelGamma { gamma: 2.0 }.build().unwrap();
        let mesh = unit(6);
        let reaction = Reaction::new(|x, s| (1.0 + x[0]) * s * s.abs(), |x, s| (1.0 + x[0]) * s.abs().powi(3) / 3.0);
        let spec = ProblemSpec::new(nf, reaction, Arc::new(|x: [f64; 2]| x[1] - 0.3), mesh.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = mesh.interior().len();
        let u = DiscreteField::from_interior(mesh.clone(), &random_interior(&mut rng, n)).unwrap();
        let v = DiscreteField::from_interior(mesh.clone(), &random_interior(&mut rng, n)).unwrap();
        let g = weak_gradient(&spec, &u).unwrap();
        let exact = dot(&g, &v.interior_values());
        let t = 1e-6;
        let fd = (energy(&spec, &u.add(&v.scaled(t)).unwrap()).unwrap() - energy(&spec, &u).unwrap()) / t;
        assert!((fd - exact).abs() < 1e-4 * exact.abs(), "{fd} vs {exact}");
    }

    #[test]
    fn epsilon_shift_keeps_gradient_exact() {
        let nf = BuiltinPhi::Power { p: 3.0 }.build().unwrap();
        let mesh = unit(5);
        let mut spec = ProblemSpec::new(nf, Reaction::zero(), constant(1.0), mesh.clone());
        spec.params.epsilon_shift = 1e-2;
        let z = DiscreteField::zero(mesh.clone());
        assert!(energy(&spec, &z).unwrap().abs() < 1e-15);
        let u = DiscreteField::interpolate_trace_zero(mesh, |p| p[0] * p[1]);
        let v = u.scaled(-0.5);
        let g = weak_gradient(&spec, &u).unwrap();
        let exact = dot(&g, &v.interior_values());
        let t = 1e-7;
        let fd = (energy(&spec, &u.add(&v.scaled(t)).unwrap()).unwrap() - energy(&spec, &u).unwrap()) / t;
        assert!((fd - exact).abs() < 1e-5 * exact.abs());
    }

    #[test]
    fn minimize_small_poisson() {
        let spec = laplace_problem(8, 1.0);
        let report = minimize(&spec).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(report.residual_norm < 1e-8);
        assert!(report.energy_trace.windows(2).all(|w| w[1] <= w[0]));
        // Discrete weak form: energy at minimizer = -(1/2) int h u for quadratic I.
        let u = &report.minimizer;
        let work = u.integrate(|_, v| v);
        assert!((report.final_energy().unwrap() + 0.5 * work).abs() < 1e-9);
    }

    #[test]
    fn steepest_descent_only() {
        let mut spec = laplace_problem(6, 1.0);
        spec.params.memory = 0;
        spec.params.tol = 1e-7;
        let report = minimize(&spec).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(report.energy_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn random_start_is_seeded() {
        let mut spec = laplace_problem(6, 1.0);
        spec.params.init = Init::Random;
        spec.params.max_iter = 5;
        let a = minimize(&spec.clone().with_seed(11)).unwrap();
        let b = minimize(&spec.clone().with_seed(11)).unwrap();
        let c = minimize(&spec.with_seed(12)).unwrap();
        assert_eq!(a.minimizer.values(), b.minimizer.values());
        assert_ne!(a.minimizer.values(), c.minimizer.values());
    }

    #[test]
    fn supercritical_reaction_flagged() {
        // I(u) = int |grad u|^2 - mu int u^2 with mu far above lambda_1 = 2 pi^2.
        let nf = BuiltinPhi::Linear { c: 2.0 }.build().unwrap();
        let mu = 200.0;
        let reaction = Reaction::new(move |_, s| 2.0 * mu * s, move |_, s| mu * s * s);
        let mut spec = ProblemSpec::new(nf, reaction, constant(0.0), unit(8));
        spec.params.init = Init::Random;
        spec.params.energy_floor = -1e8;
        let report = minimize(&spec).unwrap();
        assert_eq!(report.status, SolveStatus::NonCoercive);
        assert!(report.energy_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn coercivity_needs_a_infinity() {
        let nf = BuiltinPhi::Linear { c: 2.0 }.build().unwrap();
        let spec = ProblemSpec::new(nf, Reaction::new(|_, _| 0.0, |_, _| 0.0), constant(0.0), unit(4));
        assert!(matches!(coercivity_estimate(&spec, 1, 10), Err(SolverError::MissingAInfinity)));
    }

    #[test]
    fn coercivity_positive_without_reaction() {
        for phi in [BuiltinPhi::Linear { c: 2.0 }, BuiltinPhi::ModelGamma { gamma: 2.0 }] {
            let spec = ProblemSpec::new(phi.build().unwrap(), Reaction::zero(), constant(0.0), unit(8));
            let q = coercivity_estimate(&spec, 2, 50).unwrap();
            assert!(q > 0.0, "{phi:?}: {q}");
        }
    }

    #[test]
    fn reaction_validation() {
        let good = Reaction::new(|_, s| s * s, |_, s| s * s * s / 3.0);
        assert!(good.validate(&[[0.5, 0.5]]).is_ok());
        let bad = Reaction::new(|_, s| s, |_, s| s * s);
        assert!(matches!(bad.validate(&[[0.5, 0.5]]), Err(ReactionError::Inconsistent { .. })));
        let shifted = Reaction::new(|_, _| 0.0, |_, _| 1.0);
        assert!(matches!(shifted.validate(&[[0.0, 0.0]]), Err(ReactionError::NonzeroAtOrigin { .. })));
        let quad = Reaction::from_f(|x, s| x[0] * s.cos());
        assert!(quad.validate(&[[0.3, 0.1], [2.0, 1.0]]).is_ok());
        assert!(((quad.potential)([2.0, 0.0], 1.0) - 2.0 * 1f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn audit_examples() {
        let points = vec![[0.5, 0.5], [0.1, 0.9]];
        let cfg = AuditConfig { samples: 500, ..AuditConfig::new(points, 2.0) };
        let zero = Reaction::zero()
            .with_critical_bound(0.0, constant(0.0), CriticalForm::Strong)
            .with_potential_bound(0.0, constant(0.0));
        assert!(growth_audit(&zero, &cfg, &PowerGrowth { exponent: 6.0 }).is_empty());

        let quadratic = Reaction::new(|_, s| s * s, |_, s| s * s * s / 3.0)
            .with_critical_bound(0.0, constant(1.0), CriticalForm::Strong);
        let v = growth_audit(&quadratic, &cfg, &PowerGrowth { exponent: 6.0 });
        assert!(!v.is_empty());
        assert!(v.iter().all(|w| w.s.abs() > 1.0 && w.condition == GrowthCondition::Critical));
    }

    #[test]
    fn audit_checks_a_infinity() {
        let cfg = AuditConfig { samples: 10, ..AuditConfig::new(vec![[0.5, 0.5]], 2.0) };
        let r = Reaction::new(|_, s| 3.0 * s, |_, s| 1.5 * s * s).with_a_infinity(constant(1.5));
        assert!(growth_audit(&r, &cfg, &PowerGrowth { exponent: 6.0 }).is_empty());
        let r = r.with_a_infinity(constant(0.2));
        let v = growth_audit(&r, &cfg, &PowerGrowth { exponent: 6.0 });
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].condition, GrowthCondition::AInfinity);
    }

    #[test]
    fn report_serialization() {
        let spec = laplace_problem(4, 1.0);
        let report = minimize(&spec).unwrap();
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["status"], "Converged");
        assert_eq!(json["energy_trace"].as_array().unwrap().len(), report.energy_trace.len());
        assert!(json["residual_norm"].as_f64().unwrap() < 1e-8);
        assert!(json["coercivity_estimate"].is_null());
        let mut buf = Vec::new();
        report.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,energy,residual\n0,"));
        assert_eq!(SolveStatus::NonCoercive.exit_code(), 2);
    }
}
