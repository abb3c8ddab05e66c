use densilim::aplimits::{ap_liminf, ap_limsup, dens_interval, ess_inf_near, ess_sup_near};
use densilim::clarke::{self, gen_gradient};
use densilim::density::{cone_density, density_at_point, LimitEstimate};
use densilim::exprcli::expr::{parse, Atan2Range};
use densilim::exprcli::registry::FIELDS;
use densilim::measure::{count_in_window, BoxN, DeltaSchedule, NullSet, QuadratureConfig, Region};
use densilim::representative::{detect_jump, mean_limit};
use densilim::{EstimatorConfig, ExtendedReal, ScalarField};
use proptest::prelude::*;

fn cfg() -> EstimatorConfig {
    EstimatorConfig::default().with_resolution(48)
}

fn sched() -> DeltaSchedule {
    DeltaSchedule::new(0.5, 0.5, 8, 4).unwrap()
}

fn window() -> BoxN {
    BoxN::cube(&[0.0, 0.0], 1.0)
}

fn field(src: &str) -> ScalarField {
    ScalarField::parse(src, 2, Atan2Range::Pmpi).unwrap()
}

fn unit(theta: f64) -> Vec<f64> {
    vec![theta.cos(), theta.sin()]
}

fn half_plane(theta: f64, offset: f64) -> Region {
    Region::half_space(unit(theta), offset, window()).unwrap()
}

fn disk() -> impl Strategy<Value = Region> {
    (-0.5..0.5f64, -0.5..0.5f64, 0.05..0.8f64)
        .prop_map(|(a, b, r)| Region::ball(vec![a, b], r).unwrap())
}

fn plane() -> Region {
    Region::whole(window())
}

fn lipschitz_fields() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec![
        "abs(x1)",
        "max(x1, x2)",
        "min(x1, x2)",
        "abs(x1 - x2) + 0.5*x2",
        "sqrt(x1^2 + x2^2)",
        "x1 - 2*abs(x2)",
    ])
}

fn bounded_fields() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec![
        "if(x1 > 0, 1, 0)",
        "if(x1 + x2 > 0, 3, -1) + x1",
        "sin(5*x1) * cos(3*x2)",
        "x1^2 - x2",
        "abs(x1) + if(x2 > 0, 0.5, 0)",
        "atan2(x2, x1)",
    ])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn lattice_measure_is_additive_and_monotone(a in disk(), b in disk(), t in 0.0..6.3f64) {
        let q = QuadratureConfig::default().with_resolution(64);
        let w = window();
        let count = |r: &Region| count_in_window(r, &w, &q).0;
        let union = Region::union(vec![a.clone(), b.clone()]).unwrap();
        let inter = Region::intersection(vec![a.clone(), b.clone()]).unwrap();
        prop_assert_eq!(count(&union) + count(&inter), count(&a) + count(&b));
        let cut = Region::intersection(vec![a.clone(), half_plane(t, 0.0)]).unwrap();
        prop_assert!(count(&cut) <= count(&a));
    }

    #[test]
    fn neighbourhoods_are_nested(d1 in 0.01..0.3f64, extra in 0.001..0.3f64, px in -1.0..1.0f64, py in -1.0..1.0f64) {
        let c = Region::null_set(NullSet::Circle { center: vec![0.0, 0.0], radius: 0.5 }).unwrap();
        let q = QuadratureConfig::default();
        let small = densilim::measure::neighborhood(&c, d1, &q).unwrap();
        let large = densilim::measure::neighborhood(&c, d1 + extra, &q).unwrap();
        prop_assert!(!small.contains(&[px, py]) || large.contains(&[px, py]));
    }

    #[test]
    fn densities_complement_and_sandwich(t in 0.0..6.3f64, off in -0.2..0.2f64) {
        let a = half_plane(t, off);
        let ac = Region::complement(a.clone());
        let da = density_at_point(&a, &plane(), &[0.0, 0.0], &sched(), &cfg()).unwrap();
        let dc = density_at_point(&ac, &plane(), &[0.0, 0.0], &sched(), &cfg()).unwrap();
        for (p, q) in da.values.iter().zip(&dc.values) {
            prop_assert!((p + q - 1.0).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(p));
        }
        for e in [&da, &dc] {
            prop_assert!(e.liminf_est <= e.point_value && e.point_value <= e.limsup_est);
        }
    }

    #[test]
    fn disjoint_densities_add(t in 0.0..6.3f64, s in 0.3..2.8f64) {
        // two disjoint sectors {angle ∈ (t, t+s)} and {angle ∈ (t+s, t+π)} share one edge
        let a = Region::intersection(vec![half_plane(t + std::f64::consts::FRAC_PI_2, 0.0), Region::complement(half_plane(t + s + std::f64::consts::FRAC_PI_2, 0.0))]).unwrap();
        let b = Region::intersection(vec![half_plane(t + std::f64::consts::FRAC_PI_2, 0.0), half_plane(t + s + std::f64::consts::FRAC_PI_2, 0.0)]).unwrap();
        let u = Region::union(vec![a.clone(), b.clone()]).unwrap();
        let x = [0.0, 0.0];
        let (da, db, du) = (
            density_at_point(&a, &plane(), &x, &sched(), &cfg()).unwrap(),
            density_at_point(&b, &plane(), &x, &sched(), &cfg()).unwrap(),
            density_at_point(&u, &plane(), &x, &sched(), &cfg()).unwrap(),
        );
        for k in 0..du.values.len() {
            prop_assert!((da.values[k] + db.values[k] - du.values[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn cone_density_grows_with_angle(t in 0.0..6.3f64, a1 in 0.1..1.4f64, extra in 0.0..1.5f64) {
        let omega = half_plane(0.3, -0.05);
        let v = unit(t);
        let small = cone_density(&omega, &[0.0, 0.0], &v, a1, &sched(), &cfg()).unwrap();
        let large = cone_density(&omega, &[0.0, 0.0], &v, a1 + extra, &sched(), &cfg()).unwrap();
        for (p, q) in small.values.iter().zip(&large.values) {
            prop_assert!(p <= q);
        }
    }

    #[test]
    fn limit_estimate_contract(values in prop::collection::vec(0.0..1.0f64, 4..12), tol in 1e-4..1e-1f64) {
        let n = values.len();
        let deltas: Vec<f64> = (0..n).map(|k| 0.5f64.powi(k as i32)).collect();
        let e = LimitEstimate::from_values(deltas, values, 3, tol);
        prop_assert!(e.liminf_est <= e.point_value && e.point_value <= e.limsup_est);
        prop_assert!(!e.converged || e.limsup_est - e.liminf_est < 2.0 * tol);
    }

    #[test]
    fn approximate_limits_translate_scale_and_negate(src in bounded_fields(), c in -3.0..3.0f64, s in 0.1..4.0f64) {
        let f = field(src);
        let x = [0.0, 0.0];
        let (cf, sc) = (cfg(), sched());
        let up = ap_limsup(&f, &plane(), &x, &sc, &cf).unwrap().to_f64();
        let shifted = ap_limsup(&f.shifted(c), &plane(), &x, &sc, &cf).unwrap().to_f64();
        prop_assert_eq!(shifted, up + c);
        let scaled = ap_limsup(&f.scaled(s), &plane(), &x, &sc, &cf).unwrap().to_f64();
        prop_assert!((scaled - s * up).abs() <= 1e-12 * (1.0 + up.abs()) * s);
        let low = ap_liminf(&f, &plane(), &x, &sc, &cf).unwrap();
        prop_assert_eq!(low, ap_limsup(&f.negated(), &plane(), &x, &sc, &cf).unwrap().neg());
        prop_assert!(low.to_f64() <= up);
    }

    #[test]
    fn essential_bounds_enclose_limits_and_interval(src in bounded_fields(), px in -0.3..0.3f64) {
        let f = field(src);
        let x = [px, 0.0];
        let c = Region::point(&x);
        let (cf, sc) = (cfg(), sched());
        let sup = ess_sup_near(&f, &plane(), &c, &sc, &cf).unwrap();
        let inf = ess_inf_near(&f, &plane(), &c, &sc, &cf).unwrap();
        let up = ap_limsup(&f, &plane(), &x, &sc, &cf).unwrap();
        let low = ap_liminf(&f, &plane(), &x, &sc, &cf).unwrap();
        prop_assert!(inf <= low && low <= up && up <= sup);
        let mean = mean_limit(&f, &plane(), &x, &sc, &cf).unwrap().estimate.point_value;
        prop_assert!(inf.to_f64() <= mean && mean <= sup.to_f64());
        let i = dens_interval(&f, &plane(), &c, &sc, &cf).unwrap();
        prop_assert_eq!(i.lo, inf);
        prop_assert_eq!(i.hi, sup);
    }

    #[test]
    fn clarke_derivative_is_sublinear_and_bounded(src in lipschitz_fields(), t1 in 0.0..6.3f64, t2 in 0.0..6.3f64, lam in 0.2..3.0f64) {
        let f = field(src);
        let x = [0.0, 0.0];
        let mut cf = EstimatorConfig::default();
        cf.clarke.n_samples = 128;
        let sc = clarke::default_schedule();
        let tol = 2.0 * cf.tol.estimator_tol;
        let (v, w) = (unit(t1), unit(t2));
        let vw = vec![v[0] + w[0], v[1] + w[1]];
        let d = |u: &[f64]| clarke::dir_derivative_gradsup(&f, &x, u, &sc, &cf).unwrap();
        let (dv, dw, dvw) = (d(&v), d(&w), d(&vw));
        prop_assert!(dvw.value <= dv.value + dw.value + tol);
        let lv: Vec<f64> = v.iter().map(|c| lam * c).collect();
        prop_assert!((d(&lv).value - lam * dv.value).abs() <= tol * lam.max(1.0));
        prop_assert!(dv.value.abs() <= dv.lipschitz + tol);
        let h = gen_gradient(&f, &x, &sc, &cf, 128).unwrap();
        for row in &h.support_table {
            prop_assert_eq!(h.vertex_support(&row.direction), h.support(&row.direction));
        }
        for vert in &h.hull_vertices {
            prop_assert!(h.points.contains(vert));
        }
    }

    #[test]
    fn jump_normal_reflects(t in 0.0..6.3f64, a in -2.0..2.0f64, gap in 0.5..3.0f64) {
        let b = a + gap;
        let w = unit(t);
        let src = format!("if({}*x1 + {}*x2 > 0, {b}, {a})", w[0], w[1]);
        let reflected = format!("if({}*x1 + {}*x2 > 0, {b}, {a})", w[0], -w[1]);
        let (cf, sc) = (cfg(), sched());
        let j = detect_jump(&field(&src), &plane(), &[0.0, 0.0], &sc, &cf, 64).unwrap();
        let r = detect_jump(&field(&reflected), &plane(), &[0.0, 0.0], &sc, &cf, 64).unwrap();
        prop_assert!(j.is_jump && r.is_jump);
        prop_assert!((j.nu[0] - r.nu[0]).abs() < 2e-2 && (j.nu[1] + r.nu[1]).abs() < 2e-2);
        prop_assert!((j.f_minus - r.f_minus).abs() < 1e-2 * gap && (j.f_plus - r.f_plus).abs() < 1e-2 * gap, "{:?} {:?}", (j.f_minus, j.f_plus), (r.f_minus, r.f_plus));
        prop_assert_eq!(j.tilde_f, 0.5 * (j.f_minus + j.f_plus));
        let m = mean_limit(&field(&src), &plane(), &[0.0, 0.0], &sc, &cf).unwrap().estimate.point_value;
        prop_assert!(j.f_minus - 1e-9 <= m && m <= j.f_plus + 1e-9);
    }

    #[test]
    fn expressions_round_trip(e in expr_source(3)) {
        let a = parse(&e, 2).unwrap();
        let b = parse(&a.to_string(), 2).unwrap();
        prop_assert_eq!(&a, &b);
        let x = [0.37, -1.21];
        let v1 = a.eval_tree(&x, Atan2Range::Pmpi);
        let v2 = a.compile(2, Atan2Range::Pmpi).eval(&x);
        prop_assert!(v1.to_bits() == v2.to_bits() || (v1.is_nan() && v2.is_nan()));
    }
}

fn expr_source(depth: u32) -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x1".to_string()),
        Just("x2".to_string()),
        (-5.0..5.0f64).prop_map(|c| format!("{c:.3}")),
    ];
    leaf.prop_recursive(depth, 24, 2, |inner| {
        prop_oneof![
            (
                inner.clone(),
                inner.clone(),
                prop::sample::select(vec!["+", "-", "*", "/", "^"])
            )
                .prop_map(|(a, b, op)| format!("({a}) {op} ({b})")),
            (
                inner.clone(),
                prop::sample::select(vec!["abs", "sqrt", "exp", "log", "sin", "cos", "-"])
            )
                .prop_map(|(a, f)| format!("{f}({a})")),
            (
                inner.clone(),
                inner.clone(),
                prop::sample::select(vec!["min", "max", "atan2"])
            )
                .prop_map(|(a, b, f)| format!("{f}({a}, {b})")),
            (inner.clone(), inner.clone(), inner)
                .prop_map(|(a, b, c)| format!("if({a} < {b} and not ({b} >= 1), {c}, {a})")),
        ]
    })
}

#[test]
fn registry_expressions_round_trip() {
    for e in FIELDS {
        let a = parse(e.src, e.dim).unwrap();
        assert_eq!(parse(&a.to_string(), e.dim).unwrap(), a);
    }
}

#[test]
fn extended_reals_serialize_as_tokens() {
    assert_eq!(
        serde_json::to_string(&ExtendedReal::PosInf).unwrap(),
        "\"+inf\""
    );
    assert_eq!(
        serde_json::to_string(&ExtendedReal::NegInf).unwrap(),
        "\"-inf\""
    );
}
