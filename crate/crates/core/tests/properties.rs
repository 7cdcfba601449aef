use std::f64::consts::PI;
use std::sync::Arc;

use orlicz_core::expr::{Expr, Var};
use orlicz_core::mesh::{DiscreteField, Mesh};
use orlicz_core::norms;
use orlicz_core::registry::BuiltinPhi;
use orlicz_core::solver::{self, constant, ProblemSpec, Reaction};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = BuiltinPhi> {
    prop_oneof![
        (0.5f64..5.0).prop_map(|c| BuiltinPhi::Linear { c }),
        (1.2f64..4.0).prop_map(|p| BuiltinPhi::Power { p }),
        (1.0f64..3.5).prop_map(|gamma| BuiltinPhi::ModelGamma { gamma }),
        (1.2f64..4.0).prop_map(|p| BuiltinPhi::LogPower { p }),
    ]
}

fn log_scale(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn indices_bracket_the_quotient(phi in family(), t in log_scale(1e-6, 1e6)) {
        let nf = phi.build().unwrap();
        let q = nf.quotient(t).unwrap();
        prop_assert!(nf.ell() <= q * (1.0 + 1e-12) && q <= nf.em() * (1.0 + 1e-12));
        prop_assert!(nf.ell() > 1.0);
    }

    #[test]
    fn young_gap_is_nonnegative(phi in family(), s in log_scale(1e-3, 1e3), t in log_scale(1e-3, 1e3)) {
        let nf = phi.build().unwrap();
        let gap = nf.young_gap(s, t).unwrap();
        prop_assert!(gap >= -1e-9 * (s * t).max(1.0), "gap {}", gap);
    }

    #[test]
    fn young_equality_along_the_flux(phi in family(), s in log_scale(1e-2, 1e2)) {
        // Phi(s) + Phi~(s phi(s)) = s * s phi(s).
        let nf = phi.build().unwrap();
        let t = nf.flux(s);
        let gap = nf.young_gap(s, t).unwrap();
        prop_assert!(gap.abs() <= 1e-8 * s * t, "gap {} at s {}", gap, s);
    }

    #[test]
    fn zeta_sandwich(phi in family(), rho in log_scale(1e-3, 1e3), t in log_scale(1e-3, 1e3)) {
        let nf = phi.build().unwrap();
        prop_assert!(nf.zeta_bounds(rho, t).unwrap().holds(1e-8));
    }

    #[test]
    fn luxemburg_is_absolutely_homogeneous(
        phi in family(),
        alpha in prop_oneof![log_scale(1e-3, 1e3), log_scale(1e-3, 1e3).prop_map(|a| -a)],
        seed in 0u64..1000,
    ) {
        let nf = phi.build().unwrap();
        let mesh = Arc::new(Mesh::rectangle(4, 4, 1.0, 1.0).unwrap());
        let u = DiscreteField::interpolate(mesh, |p| ((seed as f64 + 1.0) * p[0]).sin() + p[1] * p[1]);
        let n = norms::luxemburg_norm(&nf, &u).unwrap();
        let na = norms::luxemburg_norm(&nf, &u.scaled(alpha)).unwrap();
        prop_assert!((na - alpha.abs() * n).abs() <= 1e-10 * alpha.abs() * n);
    }

    #[test]
    fn polynomial_expressions_evaluate(a in -5.0f64..5.0, b in -5.0f64..5.0, t in -3.0f64..3.0) {
        let e = Expr::parse(&format!("({a}) * t^2 - ({b})*t + 1"), &[Var::T]).unwrap();
        let expected = a * t * t - b * t + 1.0;
        prop_assert!((e.eval_t(t) - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }
}

#[test]
fn dirichlet_energy_matches_grid_oracle() {
    // Phi(t) = t^2 (phi = 2): I(u) = int |grad u|^2 for f = h = 0. The oracle
    // sums squared forward differences of the same nodal values over grid cells.
    let n = 64;
    let mesh = Arc::new(Mesh::rectangle(n, n, 1.0, 1.0).unwrap());
    let mode = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let u = DiscreteField::interpolate_trace_zero(mesh.clone(), |p| mode(p[0], p[1]));
    let nf = BuiltinPhi::Linear { c: 2.0 }.build().unwrap();
    let spec = ProblemSpec::new(nf, Reaction::zero(), constant(0.0), mesh);
    let energy = solver::energy(&spec, &u).unwrap();

    let h = 1.0 / n as f64;
    let mut oracle = 0.0;
    for j in 0..n {
        for i in 0..n {
            let (x, y) = (i as f64 * h, j as f64 * h);
            let dx = (mode(x + h, y) - mode(x, y)) / h;
            let dy = (mode(x, y + h) - mode(x, y)) / h;
            oracle += (dx * dx + dy * dy) * h * h;
        }
    }
    assert!((energy / oracle - 1.0).abs() < 0.01, "{energy} vs {oracle}");
    assert!((energy / (PI * PI / 2.0) - 1.0).abs() < 0.01);
}

#[test]
fn forward_difference_converges_linearly() {
    let mesh = Arc::new(Mesh::rectangle(6, 6, 1.0, 1.0).unwrap());
    let nf = BuiltinPhi::LogPower { p: 2.0 }.build().unwrap();
    let reaction = Reaction::new(|_, s| s.sin(), |_, s| 1.0 - s.cos());
    let spec = ProblemSpec::new(nf, reaction, constant(0.5), mesh.clone());
    let u = DiscreteField::interpolate_trace_zero(mesh.clone(), |p| p[0] * (1.0 - p[0]) * (2.0 + p[1]));
    let v = DiscreteField::interpolate_trace_zero(mesh, |p| (3.0 * p[0] * p[1]).cos());
    let g = solver::weak_gradient(&spec, &u).unwrap();
    let exact: f64 = g.iter().zip(v.interior_values()).map(|(a, b)| a * b).sum();
    let e0 = solver::energy(&spec, &u).unwrap();
    let err = |t: f64| ((solver::energy(&spec, &u.add(&v.scaled(t)).unwrap()).unwrap() - e0) / t - exact).abs();
    let ratio = err(1e-4) / err(1e-5);
    assert!((ratio - 10.0).abs() < 0.5, "ratio {ratio}");
    assert!(err(1e-6) < 1e-4 * exact.abs());
}
