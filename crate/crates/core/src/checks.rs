//! Seeded numerical checks of the inequalities an N-function and its norms
//! must satisfy. Each check reports its worst observed case so near misses
//! are visible even when it passes.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conjugate::SobolevConjugate;
use crate::mesh::{DiscreteField, Mesh};
use crate::nfunction::NFunction;
use crate::norms;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub samples: usize,
    /// Largest violation, in the check's own units; nonpositive means slack.
    pub worst: f64,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: &'static str, samples: usize, worst: f64, tol: f64, failures: usize, detail: String) -> Self {
        Self {
            name,
            passed: failures == 0 && worst <= tol,
            samples,
            worst,
            detail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub samples: usize,
    pub field_samples: usize,
    pub seed: u64,
    pub mesh_cells: usize,
    /// Relative slack in the sandwich inequalities.
    pub sandwich_slack: f64,
    /// When set, also check `|u|_Phi <= |u|_p` for this `p`.
    pub embedding_exponent: Option<f64>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            field_samples: 100,
            seed: 0,
            mesh_cells: 8,
            sandwich_slack: 1e-8,
            embedding_exponent: None,
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..=hi.ln()).exp()
}

/// `Phi(s) + Phi~(t) - s t >= -tol max(1, s t)` for log-uniform `s, t` in `[1e-3, 1e3]`.
pub fn young(nf: &NFunction, samples: usize, seed: u64, tol: f64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut failures) = (f64::NEG_INFINITY, 0);
    for _ in 0..samples {
        let (s, t) = (log_uniform(&mut rng, 1e-3, 1e3), log_uniform(&mut rng, 1e-3, 1e3));
        match nf.young_gap(s, t) {
            Ok(gap) => worst = worst.max(-gap / (s * t).max(1.0)),
            Err(_) => failures += 1,
        }
    }
    PropertyResult::new("young", samples, worst, tol, failures, format!("{failures} evaluation failures"))
}

// sup_s (s t - Phi~(s)) from Phi~ values only: log-grid scan, then golden section.
fn double_complementary(nf: &NFunction, t: f64) -> Option<f64> {
    let objective = |ln_s: f64| {
        let s = ln_s.exp();
        nf.complementary(s).map(|v| s * t - v).unwrap_or(f64::NEG_INFINITY)
    };
    let (lo, hi, n) = ((1e-20f64).ln(), (1e20f64).ln(), 800);
    let step = (hi - lo) / n as f64;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..=n {
        let v = objective(lo + step * i as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    if !best.is_finite() {
        return None;
    }
    let (mut a, mut b) = (lo + step * (best_i as f64 - 1.0), lo + step * (best_i as f64 + 1.0));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut fc, mut fd) = (objective(c), objective(d));
    while b - a > 1e-10 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = objective(d);
        }
    }
    Some(best.max(fc).max(fd))
}

/// `Phi~~ = Phi` at the given points, as a relative error.
pub fn involution(nf: &NFunction, points: &[f64], tol: f64) -> PropertyResult {
    let (mut worst, mut failures) = (0.0f64, 0);
    for &t in points {
        match (double_complementary(nf, t), nf.potential(t)) {
            (Some(dd), Ok(p)) => worst = worst.max((dd - p).abs() / p),
            _ => failures += 1,
        }
    }
    PropertyResult::new("involution", points.len(), worst, tol, failures, format!("{failures} evaluation failures"))
}

/// `Phi~(t phi(t)) <= Phi(2t)` at the given points, as a relative excess.
pub fn fukagai(nf: &NFunction, points: &[f64]) -> PropertyResult {
    let (mut worst, mut failures) = (f64::NEG_INFINITY, 0);
    for &t in points {
        match (nf.complementary(nf.flux(t)), nf.potential(2.0 * t)) {
            (Ok(lhs), Ok(rhs)) => worst = worst.max((lhs - rhs) / rhs),
            _ => failures += 1,
        }
    }
    PropertyResult::new("fukagai", points.len(), worst, 1e-12, failures, format!("{failures} evaluation failures"))
}

/// Midpoint convexity of `Phi` on log-uniform pairs.
pub fn convexity(nf: &NFunction, samples: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut failures) = (f64::NEG_INFINITY, 0);
    for _ in 0..samples {
        let (a, b) = (log_uniform(&mut rng, 1e-6, 1e6), log_uniform(&mut rng, 1e-6, 1e6));
        match (nf.potential(0.5 * (a + b)), nf.potential(a), nf.potential(b)) {
            (Ok(mid), Ok(pa), Ok(pb)) => {
                let chord = 0.5 * (pa + pb);
                worst = worst.max((mid - chord) / chord);
            }
            _ => failures += 1,
        }
    }
    PropertyResult::new("convexity", samples, worst, 1e-12, failures, format!("{failures} evaluation failures"))
}

/// `zeta_0(t) Phi(rho) <= Phi(rho t) <= zeta_1(t) Phi(rho)`, `rho, t` log-uniform in `[1e-3, 1e3]`.
pub fn zeta_nfunction(nf: &NFunction, samples: usize, seed: u64, slack: f64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut failures) = (f64::NEG_INFINITY, 0);
    for _ in 0..samples {
        let (rho, t) = (log_uniform(&mut rng, 1e-3, 1e3), log_uniform(&mut rng, 1e-3, 1e3));
        match nf.zeta_bounds(rho, t) {
            Ok(r) => {
                worst = worst.max(r.worst_violation());
                if !r.holds(slack) {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    PropertyResult::new("zeta-sandwich", samples, worst, slack, failures, format!("{failures} violations"))
}

/// The same sandwich for `Phi_*` with `ell*, m*`, sampling `rho` and `rho t`
/// among arguments whose preimages lie in `[1e-3, 1e3]`.
pub fn zeta_conjugate(sc: &SobolevConjugate, samples: usize, seed: u64, slack: f64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Ok((lo, hi)) = sc.argument_range(1e-3, 1e3) else {
        return PropertyResult::new("conjugate-zeta-sandwich", 0, f64::INFINITY, slack, 1, "no argument range".into());
    };
    let (mut worst, mut failures) = (f64::NEG_INFINITY, 0);
    for _ in 0..samples {
        let (rho, target) = (log_uniform(&mut rng, lo, hi), log_uniform(&mut rng, lo, hi));
        match sc.zeta_bounds(rho, target / rho) {
            Ok(r) => {
                worst = worst.max(r.worst_violation());
                if !r.holds(slack) {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    PropertyResult::new("conjugate-zeta-sandwich", samples, worst, slack, failures, format!("{failures} violations"))
}

/// `Phi(Phi^{-1}(y)) = y` for log-uniform `y` in `[1e-6, 1e6]`.
pub fn inversion(nf: &NFunction, samples: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut failures) = (0.0f64, 0);
    for _ in 0..samples {
        let y = log_uniform(&mut rng, 1e-6, 1e6);
        match nf.potential(nf.inverse(y)) {
            Ok(v) => worst = worst.max((v - y).abs() / y),
            Err(_) => failures += 1,
        }
    }
    PropertyResult::new("inversion", samples, worst, 1e-10, failures, format!("{failures} evaluation failures"))
}

/// `Phi_*(Phi_*^{-1}(y)) = y` over the certified argument range.
pub fn conjugate_inversion(sc: &SobolevConjugate, samples: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut failures) = (0.0f64, 0);
    for _ in 0..samples {
        let r = log_uniform(&mut rng, 1e-3, 1e3);
        let y = match sc.nfunction().potential(r) {
            Ok(y) => y,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        match sc.inverse(y).and_then(|x| sc.eval(x)) {
            Ok(v) => worst = worst.max((v - y).abs() / y),
            Err(_) => failures += 1,
        }
    }
    PropertyResult::new("conjugate-inversion", samples, worst, 1e-8, failures, format!("{failures} evaluation failures"))
}

/// Random P1 fields with values spread over several decades.
pub struct FieldSampler {
    mesh: Arc<Mesh>,
    rng: ChaCha8Rng,
}

impl FieldSampler {
    pub fn new(mesh: Arc<Mesh>, seed: u64) -> Self {
        Self {
            mesh,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_field(&mut self) -> DiscreteField {
        let scale = log_uniform(&mut self.rng, 1e-2, 1e2);
        let values = (0..self.mesh.vertex_count()).map(|_| scale * self.rng.gen_range(-1.0..=1.0)).collect();
        DiscreteField::new(self.mesh.clone(), values).expect("length matches mesh")
    }
}

/// Norm–modular sandwich `zeta_0(|u|) <= int Phi(u) <= zeta_1(|u|)` on random fields.
pub fn norm_modular(nf: &NFunction, fields: &mut FieldSampler, samples: usize, slack: f64) -> PropertyResult {
    let (mut worst, mut failures) = (f64::NEG_INFINITY, 0);
    for _ in 0..samples {
        match norms::norm_modular_sandwich(nf, &fields.next_field()) {
            Ok(r) => {
                worst = worst.max(r.worst_violation());
                if !r.holds(slack) {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    PropertyResult::new("norm-modular-sandwich", samples, worst, slack, failures, format!("{failures} violations"))
}

/// `int |u v| <= 2 |u|_Phi |v|_{Phi~}` on random pairs, as a relative excess.
pub fn holder(nf: &NFunction, fields: &mut FieldSampler, samples: usize) -> PropertyResult {
    let (mut worst, mut failures) = (f64::NEG_INFINITY, 0);
    for _ in 0..samples {
        let (u, v) = (fields.next_field(), fields.next_field());
        let product: f64 = u
            .element_means()
            .iter()
            .zip(v.element_means())
            .zip(u.mesh().areas())
            .map(|((a, b), w)| w * (a * b).abs())
            .sum();
        match norms::holder_check(nf, &u, &v) {
            Ok(gap) if product > 0.0 => worst = worst.max(-gap / product),
            Ok(_) => {}
            Err(_) => failures += 1,
        }
    }
    PropertyResult::new("holder", samples, worst, 1e-10, failures, format!("{failures} evaluation failures"))
}

/// Unit modular at the normalised field, homogeneity and the triangle inequality.
pub fn luxemburg(nf: &NFunction, fields: &mut FieldSampler, samples: usize) -> Vec<PropertyResult> {
    let (mut unit, mut homog, mut tri) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut failures = 0;
    for i in 0..samples {
        let (u, v) = (fields.next_field(), fields.next_field());
        let alpha = if i % 2 == 0 { -3.7 } else { 0.125 };
        let result = (|| -> Result<(), norms::NormError> {
            let nu = norms::luxemburg_norm(nf, &u)?;
            let m = norms::modular(nf, &u.scaled(1.0 / nu))?;
            unit = unit.max((m - 1.0).abs());
            let na = norms::luxemburg_norm(nf, &u.scaled(alpha))?;
            homog = homog.max((na - alpha.abs() * nu).abs() / (alpha.abs() * nu));
            let nv = norms::luxemburg_norm(nf, &v)?;
            let nsum = norms::luxemburg_norm(nf, &u.add(&v)?)?;
            tri = tri.max((nsum - nu - nv) / (nu + nv));
            Ok(())
        })();
        if result.is_err() {
            failures += 1;
        }
    }
    let note = format!("{failures} evaluation failures");
    vec![
        PropertyResult::new("luxemburg-unit-modular", samples, unit, 1e-10, failures, note.clone()),
        PropertyResult::new("luxemburg-homogeneity", samples, homog, 1e-9, failures, note.clone()),
        PropertyResult::new("luxemburg-triangle", samples, tri, 1e-9, failures, note),
    ]
}

/// `|u|_Phi <= |u|_p`, as a relative excess.
pub fn embedding(nf: &NFunction, fields: &mut FieldSampler, samples: usize, p: f64) -> PropertyResult {
    let (mut worst, mut failures) = (f64::NEG_INFINITY, 0);
    for _ in 0..samples {
        let u = fields.next_field();
        let lp = norms::lebesgue_norm(&u, p);
        match norms::luxemburg_norm(nf, &u) {
            Ok(n) => worst = worst.max((n - lp) / lp),
            Err(_) => failures += 1,
        }
    }
    PropertyResult::new("embedding", samples, worst, 1e-12, failures, format!("p = {p}"))
}

/// Every check above, with the Sobolev-conjugate checks when `sc` is given.
pub fn run_all(nf: &NFunction, sc: Option<&SobolevConjugate>, cfg: &CheckConfig) -> Vec<PropertyResult> {
    let seed = cfg.seed;
    let grid = nf.probe_grid().to_vec();
    let mut out = vec![
        young(nf, cfg.samples, seed, 1e-9),
        involution(nf, &grid, 1e-6),
        fukagai(nf, &grid),
        convexity(nf, cfg.samples, seed.wrapping_add(1)),
        zeta_nfunction(nf, cfg.samples, seed.wrapping_add(2), cfg.sandwich_slack),
        inversion(nf, cfg.samples, seed.wrapping_add(3)),
    ];
    if let Some(sc) = sc {
        out.push(zeta_conjugate(sc, cfg.samples, seed.wrapping_add(4), cfg.sandwich_slack));
        out.push(conjugate_inversion(sc, cfg.samples.min(1000), seed.wrapping_add(5)));
    }
    let mesh = Arc::new(Mesh::rectangle(cfg.mesh_cells, cfg.mesh_cells, 1.0, 1.0).expect("positive mesh size"));
    let mut fields = FieldSampler::new(mesh, seed.wrapping_add(6));
    out.push(norm_modular(nf, &mut fields, cfg.field_samples, cfg.sandwich_slack));
    out.push(holder(nf, &mut fields, cfg.field_samples));
    out.extend(luxemburg(nf, &mut fields, cfg.field_samples));
    if let Some(p) = cfg.embedding_exponent {
        out.push(embedding(nf, &mut fields, cfg.field_samples, p));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::BuiltinPhi;

    #[test]
    fn square_passes_quick_suite() {
        let nf = BuiltinPhi::Linear { c: 2.0 }.build().unwrap();
        let sc = SobolevConjugate::new(&nf, 3).unwrap();
        let cfg = CheckConfig { samples: 200, field_samples: 10, ..CheckConfig::default() };
        for r in run_all(&nf, Some(&sc), &cfg) {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn double_complementary_of_power() {
        let nf = BuiltinPhi::Power { p: 3.0 }.build().unwrap();
        for t in [1e-3, 0.7, 40.0] {
            let dd = double_complementary(&nf, t).unwrap();
            assert!((dd / (t * t * t / 3.0) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn wrong_exponent_fails_embedding() {
        // With Phi(t) = t^2 the Luxemburg norm is |u|_2, which exceeds |u|_1.5 on the unit square.
        let nf = BuiltinPhi::Linear { c: 2.0 }.build().unwrap();
        let mesh = Arc::new(Mesh::rectangle(4, 4, 1.0, 1.0).unwrap());
        let mut fields = FieldSampler::new(mesh, 1);
        assert!(!embedding(&nf, &mut fields, 20, 1.5).passed);
    }
}
