//! Property tests over randomly drawn profiles, pressures and points.

use proptest::prelude::*;

use roughwall::analysis::{norm, NormKind, NormRegion, NormRequest};
use roughwall::discretization::{assemble, build_space, Constraints, Sample};
use roughwall::fields::{effective, poiseuille, wall_shear, AnalyticField, FieldKind};
use roughwall::geometry::{build_channel_mesh, make_profile, ChannelMeshOptions, ProfileSpec};
use roughwall::steady::{solve_steady, FlowCase, FlowMode, MeshPolicy, SolverOptions};

fn epsilon() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.25, 0.125])
}

fn small_policy() -> MeshPolicy {
    MeshPolicy { cells_per_period: 8, ny: 24, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Mean of -a(1 - cos 2πy)/2 over a period is -a/2.
    #[test]
    fn mesh_area_matches_profile_integral(a in 0.0f64..0.9, phase in 0.0f64..1.0, eps in epsilon()) {
        let p = make_profile(&ProfileSpec::cosine(a).with_phase(phase)).unwrap();
        let periods = (1.0 / eps).round() as usize;
        let mesh = build_channel_mesh(&p, eps, &ChannelMeshOptions::new(16 * periods, 24)).unwrap();
        let exact = 1.0 + eps * a / 2.0;
        prop_assert!((mesh.area() - exact).abs() / exact <= 1e-10, "{} vs {exact}", mesh.area());
    }

    #[test]
    fn phase_shift_translates_profile(a in 0.0f64..0.9, s in 0.0f64..1.0, y in 0.0f64..1.0) {
        let base = make_profile(&ProfileSpec::cosine(a)).unwrap();
        let shifted = make_profile(&ProfileSpec::cosine(a).with_phase(s)).unwrap();
        prop_assert!((shifted.eval(y + s) - base.eval(y)).abs() <= 1e-14);
        prop_assert!((base.mirrored().eval(y) - base.eval(1.0 - y)).abs() <= 1e-14);
    }

    #[test]
    fn wall_law_identity(
        p0 in -2.0f64..2.0,
        drop in 0.1f64..3.0,
        eps in 0.01f64..0.5,
        alpha in 0.0f64..0.5,
        x in 0.0f64..1.0,
        y in 0.0f64..1.0,
    ) {
        let p1 = p0 - drop;
        let eff = effective(p0, p1, eps, alpha).unwrap();
        let u0 = poiseuille(p0, p1);
        let lhs = eff.eval([x, y]).u[0] - u0.eval([x, y]).u[0] - eps * alpha * (1.0 - y) * wall_shear(p0, p1);
        let rhs = 0.5 * (p1 - p0) * eps * eps * alpha * alpha * (1.0 - y) / (1.0 + eps * alpha);
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn stiffness_symmetric(a in 0.0f64..0.9, eps in epsilon()) {
        let p = make_profile(&ProfileSpec::cosine(a)).unwrap();
        let mesh = std::sync::Arc::new(small_policy().build(&p, eps).unwrap());
        let space = build_space(mesh, &Constraints::channel()).unwrap();
        let sys = assemble(&space, None, true).unwrap();
        prop_assert!(sys.stiffness.asymmetry() <= 1e-12);
        prop_assert!(sys.mass.unwrap().asymmetry() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn norms_monotone_and_additive(a in 0.05f64..0.9, k in 1.0f64..4.0, eps in epsilon()) {
        let p = make_profile(&ProfileSpec::cosine(a)).unwrap();
        let mesh = small_policy().build(&p, eps).unwrap();
        let f = AnalyticField::new(FieldKind::Composite, move |x| Sample {
            u: [(k * x[0]).sin() * x[1], (k * x[1]).cos()],
            grad: [[k * (k * x[0]).cos() * x[1], (k * x[0]).sin()], [0.0, -k * (k * x[1]).sin()]],
            p: 0.0,
        });
        let n = |r, kind| norm(&mesh, &f, NormRequest::new(r, kind)).unwrap();
        prop_assert!(n(NormRegion::Omega0, NormKind::L1) <= n(NormRegion::Omega0, NormKind::L2) * (1.0 + 1e-12));
        let total = n(NormRegion::OmegaEps, NormKind::L2).powi(2);
        let split = n(NormRegion::Omega0, NormKind::L2).powi(2) + n(NormRegion::RoughLayer, NormKind::L2).powi(2);
        prop_assert!((total - split).abs() <= 1e-12 * total);
    }

    #[test]
    fn stokes_is_linear_in_pressures(a in 0.0f64..0.5, lambda in -3.0f64..3.0) {
        prop_assume!(lambda.abs() > 0.1);
        let p = make_profile(&ProfileSpec::cosine(a)).unwrap();
        let solve = |p0: f64, p1: f64| {
            solve_steady(&FlowCase::new(p.clone(), 0.25, p0, p1, FlowMode::Stokes), &small_policy(), &SolverOptions::default())
                .unwrap()
        };
        let s1 = solve(0.2, -1.0);
        let s2 = solve(0.2 * lambda, -lambda);
        let scale = s1.field.u.iter().fold(0.0f64, |m, v| m.max(v.abs())) * lambda.abs();
        let worst = s1.field.u.iter().zip(&s2.field.u).fold(0.0f64, |m, (x, y)| m.max((lambda * x - y).abs()));
        prop_assert!(worst <= 1e-9 * scale, "{worst:e}");
        let pscale = s1.field.p.iter().fold(0.0f64, |m, v| m.max(v.abs())) * lambda.abs();
        let pworst = s1.field.p.iter().zip(&s2.field.p).fold(0.0f64, |m, (x, y)| m.max((lambda * x - y).abs()));
        prop_assert!(pworst <= 1e-9 * pscale, "{pworst:e}");
    }
}
