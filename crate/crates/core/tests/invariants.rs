//! Property-based checks of the numerical and logical invariants.

use lyocert::classical::{certify_classical, ClassicalKind, ClassicalParams};
use lyocert::comparison::{
    build_partition, invert_monotone, kl_majorant, sampled_oscillation, sontag_factorize, verify_class, verify_kl,
    FunctionClass, KLFunction, Mesh, ScalarFunction, SontagFamilies, SontagFit, Tabulated,
};
use lyocert::inference::{assume, infer_closure, PropertyId};
use lyocert::integral::{
    certify_integral, finite_integral, integral_transform, IntegralKind, IntegralPlan, IntegralPolicy, Weights,
};
use lyocert::lyapunov::{construct_nclf, default_rho, LyapunovEvaluator, LyapunovKind, NclfPolicy};
use lyocert::system::{
    build_ensemble, DisturbanceBox, DisturbanceSignal, EnsembleSpec, IntegratorSettings, SystemDef,
};
use lyocert::Status;
use proptest::prelude::*;
use std::collections::BTreeSet;

fn sys(name: &str) -> SystemDef {
    SystemDef::named(name).unwrap()
}

fn cheap() -> ProptestConfig {
    ProptestConfig::with_cases(12)
}

const K_EXPRS: [(&str, FunctionClass); 5] = [
    ("r", FunctionClass::Kinf),
    ("r^3 + r", FunctionClass::Kinf),
    ("r/(1+r)", FunctionClass::K),
    ("exp(r) - 1", FunctionClass::Kinf),
    ("r/(1+r^2)", FunctionClass::PositiveDefinite),
];

fn grid_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..20.0, 2..40)
}

// comparison functions

proptest! {
    #[test]
    fn verify_class_ignores_grid_order(
        which in 0usize..K_EXPRS.len(),
        (grid, shuffled) in grid_strategy().prop_flat_map(|g| (Just(g.clone()), Just(g).prop_shuffle())),
    ) {
        let (src, class) = K_EXPRS[which];
        let f = ScalarFunction::expr(src, class).unwrap();
        let a = verify_class(&f, &grid, 1e-12).unwrap();
        let b = verify_class(&f, &shuffled, 1e-12).unwrap();
        let again = verify_class(&f, &grid, 1e-12).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.margin.map(f64::to_bits), b.margin.map(f64::to_bits));
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn inverse_round_trips_for_kinf(which in prop::sample::select(vec![0usize, 1, 3]), y in 0.0f64..200.0, e in 3i32..11) {
        let (src, class) = K_EXPRS[which];
        let f = ScalarFunction::expr(src, class).unwrap();
        let tol = 10f64.powi(-e);
        let r = invert_monotone(&f, y, tol).unwrap();
        prop_assert!((f.eval(r) - y).abs() <= 2.0 * tol, "f({r}) = {} vs {y}", f.eval(r));
    }

    #[test]
    fn majorant_dominates_on_nodes(a in 0.2f64..5.0, p in 0.5f64..2.5, c in 0.1f64..3.0) {
        let psi = move |r: f64, t: f64| a * r.powf(p) * (-c * t).exp();
        let rm = Mesh::dyadic(-4, 4).unwrap();
        let tm = Mesh::from_points((0..=16).map(|k| 0.5 * k as f64).collect()).unwrap();
        let beta = kl_majorant(&psi, &KLFunction::default_omega(), &rm, &tm).unwrap();
        for &r in rm.points() {
            for &t in tm.points() {
                prop_assert!(beta.eval(r, t) >= psi(r, t), "β({r}, {t}) below ψ");
            }
        }
        for &t in tm.points() {
            prop_assert_eq!(beta.eval(0.0, t), 0.0);
        }
        prop_assert!(verify_kl(&beta, rm.points(), tm.points(), 0.0).unwrap().is_supported());
    }

    #[test]
    fn partition_cells_meet_oscillation_bound(amp in 0.1f64..3.0, freq in 0.2f64..4.0, eps in 0.05f64..0.5) {
        let z = move |r: f64| r + amp * (freq * r).sin();
        let mesh = build_partition(&z, eps, 0.25, 8.0, 17).unwrap();
        for (lo, hi) in mesh.cells() {
            let osc = sampled_oscillation(&z, lo, hi, 170);
            prop_assert!(osc < eps, "cell [{lo}, {hi}] oscillates {osc} ≥ {eps}");
        }
    }

    #[test]
    fn sontag_fit_is_sound(a in 0.2f64..4.0, p in 0.5f64..3.0, c in 0.2f64..2.0) {
        let src = format!("{a}*r^{p}*exp(-{c}*t)");
        let beta = KLFunction::expr(&src).unwrap();
        let rg: Vec<f64> = (0..12).map(|k| 2f64.powf(-4.0 + 8.0 * k as f64 / 11.0)).collect();
        let tg: Vec<f64> = (0..12).map(|k| k as f64 * 0.75).collect();
        if let SontagFit::Supported { alpha1, alpha2, margin, .. } =
            sontag_factorize(&beta, &SontagFamilies::default(), &rg, &tg).unwrap()
        {
            prop_assert!(margin >= 0.0);
            for &r in &rg {
                for &t in &tg {
                    let rhs = alpha2.eval(alpha1.eval(r) * (-t).exp());
                    prop_assert!(beta.eval(r, t) <= rhs, "β({r}, {t}) = {} > {rhs}", beta.eval(r, t));
                }
            }
        }
    }
}

// disturbances and flows

fn signal_strategy() -> impl Strategy<Value = DisturbanceSignal> {
    prop::collection::vec((0.01f64..2.0, -1.0f64..1.0), 1..6).prop_map(|pieces| {
        let mut t = 0.0;
        let mut bps = Vec::new();
        let mut vals = Vec::new();
        for (dt, v) in pieces {
            bps.push(t);
            vals.push(vec![v]);
            t += dt;
        }
        DisturbanceSignal::new(bps, vals).unwrap()
    })
}

proptest! {
    #[test]
    fn shift_and_concatenate_stay_in_box(d in signal_strategy(), e in signal_strategy(), tau in 0.0f64..5.0, cut in 0.0f64..5.0) {
        let bx = DisturbanceBox::new(vec![[-1.0, 1.0]]).unwrap();
        prop_assert!(d.shift(tau).inside(&bx));
        let joined = d.concatenate(&e, cut).unwrap();
        prop_assert!(joined.inside(&bx));
        for s in [0.0, cut * 0.5, cut + 0.1, cut + 3.0] {
            let want = if s < cut { d.value_at(s) } else { e.value_at(s - cut) };
            prop_assert_eq!(joined.value_at(s), want);
        }
    }

    #[test]
    fn analytic_cocycle_is_exact(x in -3.0f64..3.0, d in signal_strategy(), t in 0.0f64..3.0, s in 0.0f64..3.0) {
        let b = sys("bilinear");
        let whole = b.flow(t + s, &[x], &d).unwrap();
        let mid = b.flow(t, &[x], &d).unwrap();
        let split = b.flow(s, &mid, &d.shift(t)).unwrap();
        prop_assert!((whole[0] - split[0]).abs() <= 1e-12 * (1.0 + whole[0].abs()));
    }
}

fn cocycle_residual(rtol: f64) -> f64 {
    let settings = IntegratorSettings::with_tolerance(rtol, rtol * 1e-3);
    let bx = DisturbanceBox::new(vec![[-1.0, 1.0]]).unwrap();
    let s = SystemDef::ode("damped", &["-x1/(1+x1^2) + 0.5*d1*x1 - x2", "x1 - x2"], bx, settings).unwrap();
    let d = DisturbanceSignal::new(vec![0.0, 0.7, 1.9], vec![vec![1.0], vec![-1.0], vec![0.3]]).unwrap();
    let x = [1.5, -0.5];
    let mut worst: f64 = 0.0;
    for (t, h) in [(0.5, 2.0), (1.3, 1.1), (2.0, 3.0)] {
        let whole = s.flow(t + h, &x, &d).unwrap();
        let mid = s.flow(t, &x, &d).unwrap();
        let split = s.flow(h, &mid, &d.shift(t)).unwrap();
        worst = worst.max(whole.iter().zip(&split).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    worst
}

#[test]
fn tighter_tolerance_shrinks_cocycle_residual() {
    let r: Vec<f64> = [1e-4, 1e-6, 1e-8, 1e-10].iter().map(|&t| cocycle_residual(t)).collect();
    assert!(r.windows(2).all(|w| w[1] <= w[0]), "{r:?}");
    assert!(r[3] < r[0] * 1e-3, "{r:?}");
}

// integral transforms

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn integral_is_additive(x in 0.05f64..3.0, cut in 0.05f64..9.9, seed in 0u64..4, pick in 0usize..9) {
        let s = sys("bilinear");
        let ds = build_ensemble(s.disturbance(), &EnsembleSpec::small(seed));
        let d = &ds[pick % ds.len()];
        let a = ScalarFunction::identity();
        let p = IntegralPolicy::default();
        let whole = finite_integral(&s, &a, &[x], d, 0.0, 10.0, &p).unwrap();
        let left = finite_integral(&s, &a, &[x], d, 0.0, cut, &p).unwrap();
        let right = finite_integral(&s, &a, &[x], d, cut, 10.0, &p).unwrap();
        let tol = 2.0 * (whole.quad_error + left.quad_error + right.quad_error) + 1e-10;
        prop_assert!((whole.value - left.value - right.value).abs() <= tol);
    }

    #[test]
    fn integral_is_monotone_in_weight(x in 0.05f64..3.0, c in 0.0f64..2.0, name in prop::sample::select(vec!["scalar_stable", "saturating", "bilinear"])) {
        let s = sys(name);
        let d = build_ensemble(s.disturbance(), &EnsembleSpec::small(0)).swap_remove(0);
        let lo = ScalarFunction::expr("r/(1+r)", FunctionClass::K).unwrap();
        let hi = ScalarFunction::expr(&format!("r + {c}*r^2"), FunctionClass::Kinf).unwrap();
        let p = IntegralPolicy::default();
        let a = finite_integral(&s, &lo, &[x], &d, 0.0, 20.0, &p).unwrap();
        let b = finite_integral(&s, &hi, &[x], &d, 0.0, 20.0, &p).unwrap();
        prop_assert!(a.value <= b.value + a.quad_error + b.quad_error + 1e-10);
    }

    #[test]
    fn integral_transform_is_nonnegative(x in -3.0f64..3.0, which in 0usize..K_EXPRS.len()) {
        let (src, class) = K_EXPRS[which];
        let f = ScalarFunction::expr(src, class).unwrap();
        let t = integral_transform(&sys("scalar_stable"), &f, &[x], &DisturbanceSignal::empty(), 0.0, &IntegralPolicy::default()).unwrap();
        prop_assert!(t.value >= 0.0 && t.tail_bound >= 0.0 && t.quad_error >= 0.0);
    }

    #[test]
    fn iugas_implies_iugs_with_initial_bound(k in 1.0f64..3.0, c in 0.2f64..2.0, name in prop::sample::select(vec!["scalar_stable", "saturating", "bilinear"])) {
        let s = sys(name);
        let beta = KLFunction::expr(&format!("{k}*r*exp(-{c}*t)")).unwrap();
        let plan = IntegralPlan { radii: vec![0.5, 1.0, 2.0], ..IntegralPlan::default() };
        let id = ScalarFunction::identity();
        let iugas = certify_integral(IntegralKind::IUgas, &s, &Weights::alpha(id.clone()).with_beta(beta), &plan).unwrap();
        let psi = ScalarFunction::expr(&format!("{k}*r"), FunctionClass::Kinf).unwrap();
        let iugs = certify_integral(IntegralKind::IUgs, &s, &Weights::alpha(id).with_psi(psi), &plan).unwrap();
        prop_assert!(iugas.status != Status::Supported || iugs.status == Status::Supported);
    }

    #[test]
    fn rep_implies_irep(e in 0.1f64..1.0, h in 0.25f64..2.0, name in prop::sample::select(vec!["scalar_stable", "bilinear", "saturating", "scalar_unstable"])) {
        let s = sys(name);
        let ep = e / h;
        let cp = ClassicalParams { eps: vec![ep], horizons: vec![h], ..ClassicalParams::default() };
        let rep = certify_classical(ClassicalKind::Rep, &s, &cp).unwrap();
        let mut grid = IntegralPlan::default().delta_grid;
        grid.push(ep);
        let ip = IntegralPlan { eps: vec![e], horizons: vec![h], delta_grid: grid, ..IntegralPlan::default() };
        let irep = certify_integral(IntegralKind::IRep, &s, &Weights::alpha(ScalarFunction::identity()), &ip).unwrap();
        prop_assert!(rep.status != Status::Supported || irep.status == Status::Supported);
    }
}

// classical chains

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn classical_chains_hold(seed in 0u64..1000, name in prop::sample::select(vec!["scalar_stable", "saturating", "bilinear", "scalar_unstable", "switched_2d"])) {
        let s = sys(name);
        let params = ClassicalParams {
            beta: Some(KLFunction::expr("2*r*exp(-t/2)").unwrap()),
            ensemble: EnsembleSpec::small(seed),
            ..ClassicalParams::default()
        };
        let v = |k| certify_classical(k, &s, &params).unwrap().status == Status::Supported;
        let (ugas, ugatt, ugwa, ult) = (v(ClassicalKind::Ugas), v(ClassicalKind::Ugatt), v(ClassicalKind::Ugwa), v(ClassicalKind::UltUls));
        prop_assert!(!ugas || ugatt);
        prop_assert!(!ugatt || (ugwa && ult));
    }
}

// Lyapunov construction

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn constructed_v_is_positive_off_origin(x in prop::num::f64::NORMAL.prop_filter("range", |v| v.abs() > 1e-3 && v.abs() < 10.0), name in prop::sample::select(vec!["scalar_stable", "saturating", "bilinear"])) {
        let s = sys(name);
        let v = construct_nclf(&s, &default_rho(), &NclfPolicy::default()).unwrap();
        prop_assert!(v.eval(&[x]).unwrap() > 0.0);
        prop_assert_eq!(v.eval(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn larger_ensemble_never_lowers_v(x in -3.0f64..3.0, extra_seed in 1u64..100) {
        let s = sys("bilinear");
        let policy = NclfPolicy::default();
        let base = build_ensemble(s.disturbance(), &policy.ensemble);
        let mut larger = base.clone();
        larger.extend(build_ensemble(s.disturbance(), &EnsembleSpec::small(extra_seed)));
        let make = |ensemble| LyapunovEvaluator::new(LyapunovKind::TrajectoryIntegral {
            sys: s.clone(), rho: default_rho(), ensemble, policy: policy.clone(),
        });
        let small = make(base).eval(&[x]).unwrap();
        let big = make(larger).eval(&[x]).unwrap();
        prop_assert!(big >= small, "{big} < {small}");
    }

    #[test]
    fn v_along_flow_matches_shifted_integral(x in 0.1f64..4.0, h in 0.0f64..3.0, name in prop::sample::select(vec!["scalar_stable", "saturating"])) {
        let s = sys(name);
        let v = construct_nclf(&s, &default_rho(), &NclfPolicy::default()).unwrap();
        let d = DisturbanceSignal::empty();
        let direct = v.eval(&s.flow(h, &[x], &d).unwrap()).unwrap();
        let shifted = integral_transform(&s, &default_rho(), &[x], &d, h, &NclfPolicy::default().quadrature).unwrap();
        let tol = 1e-8 * (1.0 + direct.abs()) + shifted.quad_error + shifted.tail_bound;
        prop_assert!((direct - shifted.total()).abs() <= tol, "{direct} vs {}", shifted.total());
    }
}

// inference

fn subset(bits: u32) -> Vec<PropertyId> {
    PropertyId::ALL.iter().copied().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, p)| p).collect()
}

fn closure_of(props: &[PropertyId]) -> BTreeSet<PropertyId> {
    infer_closure(&assume(props)).properties
}

proptest! {
    #[test]
    fn closure_is_extensive_idempotent_monotone(a in 0u32..(1 << 17), extra in 0u32..(1 << 17)) {
        let sa = subset(a);
        let ca = closure_of(&sa);
        prop_assert!(sa.iter().all(|p| ca.contains(p)));
        let cca = closure_of(&ca.iter().copied().collect::<Vec<_>>());
        prop_assert_eq!(&cca, &ca);
        let cb = closure_of(&subset(a | extra));
        prop_assert!(ca.is_subset(&cb));
    }
}

#[test]
fn integral_characterizations_share_a_closure() {
    let one = closure_of(&[PropertyId::IUgs]);
    assert_eq!(one, closure_of(&[PropertyId::IUgas]));
    assert_eq!(one, closure_of(&[PropertyId::IUgatt, PropertyId::IRep]));
}

#[test]
fn weight_table_round_trip_keeps_transform() {
    // tabulating the weight on a fine grid changes the transform only by the interpolation error
    let grid: Vec<f64> = (0..=800).map(|k| k as f64 * 0.005).collect();
    let t = Tabulated::from_fn(&grid, |r| r / (1.0 + r)).unwrap();
    let tab = ScalarFunction::tabulated(t, FunctionClass::K);
    let exact = ScalarFunction::expr("r/(1+r)", FunctionClass::K).unwrap();
    let s = sys("scalar_stable");
    let p = IntegralPolicy::default();
    let d = DisturbanceSignal::empty();
    let a = integral_transform(&s, &tab, &[2.0], &d, 0.0, &p).unwrap();
    let b = integral_transform(&s, &exact, &[2.0], &d, 0.0, &p).unwrap();
    assert!((a.total() - b.total()).abs() < 1e-4, "{} vs {}", a.total(), b.total());
}
