use cayley_core::bvp::{
    apply_d, assemble_bvp, dstar_d_product, AnalyticField, BCSpec, FlatCayleyDomain, ModeField, NodeField, NormalField,
    RowKind,
};
use cayley_core::forms::e;
use cayley_core::nonlinear::*;
use cayley_core::sampling::cell_rng;
use cayley_core::{Error, Vec8};
use nalgebra::Vector4;
use rand::Rng;

fn sup(v: &[[f64; 4]]) -> f64 {
    v.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

fn sub(a: &[[f64; 4]], b: &[[f64; 4]]) -> Vec<[f64; 4]> {
    a.iter().zip(b).map(|(x, y)| std::array::from_fn(|c| x[c] - y[c])).collect()
}

fn scaled(s: &NormalField, t: f64) -> NormalField {
    NodeField { values: s.values.iter().map(|v| v.map(|x| x * t)).collect() }
}

fn random_direction(dom: &FlatCayleyDomain, seed: u64) -> NormalField {
    let mut rng = cell_rng(seed, 0);
    let mut out = NodeField::zeros(dom);
    for _ in 0..3 {
        let amp: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let m = [rng.gen_range(-1..=1), rng.gen_range(-1..=1), rng.gen_range(0..=1)];
        let f = ModeField::new(dom, amp, m, rng.gen_range(0.0..6.0), rng.gen_range(0.5..3.0), rng.gen_range(0.0..6.0));
        for (o, v) in out.values.iter_mut().zip(f.sample(dom).values) {
            for c in 0..4 {
                o[c] += 0.3 * v[c];
            }
        }
    }
    out
}

fn graph(dom: &FlatCayleyDomain, s: NormalField) -> GraphField {
    GraphField::new(dom, s).unwrap()
}

#[test]
fn residuals_vanish_on_flat_and_translated_planes() {
    let dom = FlatCayleyDomain::cube(5).unwrap();
    let zero = graph(&dom, NodeField::zeros(&dom));
    assert_eq!(sup(&cayley_residual(&zero).values), 0.0);
    assert_eq!(sup(&second_order_residual(&zero).values), 0.0);
    let c = NodeField::from_fn(&dom, |_| [0.3, -0.2, 0.1, 0.7]);
    assert!(sup(&cayley_residual(&graph(&dom, c)).values) < 1e-14);
}

#[test]
fn translation_equivariance() {
    let dom = FlatCayleyDomain::cube(6).unwrap();
    let s = scaled(&random_direction(&dom, 3), 0.1);
    let shifted = NodeField { values: s.values.iter().map(|v| [v[0] + 0.4, v[1] - 0.1, v[2], v[3] + 0.2]).collect() };
    let a = cayley_residual(&graph(&dom, s)).values;
    let b = cayley_residual(&graph(&dom, shifted)).values;
    assert!(sup(&sub(&a, &b)) < 1e-13);
}

#[test]
fn slope_bound_is_enforced() {
    let dom = FlatCayleyDomain::cube(6).unwrap();
    let steep = NodeField::from_fn(&dom, |x| [2.0 * x[3], 0.0, 0.0, 0.0]);
    assert!(matches!(GraphField::new(&dom, steep), Err(Error::Precondition(_))));
}

#[test]
fn df_matches_d() {
    let dom = FlatCayleyDomain::cube(6).unwrap();
    let eps = 1e-5;
    for seed in 0..20 {
        let s = random_direction(&dom, seed);
        let plus = cayley_residual(&graph(&dom, scaled(&s, eps))).values;
        let minus = cayley_residual(&graph(&dom, scaled(&s, -eps))).values;
        let fd: Vec<[f64; 4]> = plus.iter().zip(&minus).map(|(p, m)| std::array::from_fn(|c| (p[c] - m[c]) / (2.0 * eps))).collect();
        let ds = apply_d(&dom, &s).values;
        let rel = sup(&sub(&fd, &ds)) / sup(&ds);
        assert!(rel < 1e-6, "seed {seed}: {rel:e}");
    }
}

#[test]
fn dg_matches_dstar_d_product() {
    let dom = FlatCayleyDomain::cube(6).unwrap();
    let prod = dstar_d_product(&dom).unwrap();
    let eps = 1e-5;
    for seed in 0..20 {
        let s = random_direction(&dom, 100 + seed);
        let plus = second_order_residual(&graph(&dom, scaled(&s, eps))).values;
        let minus = second_order_residual(&graph(&dom, scaled(&s, -eps))).values;
        let fd: Vec<[f64; 4]> = plus.iter().zip(&minus).map(|(p, m)| std::array::from_fn(|c| (p[c] - m[c]) / (2.0 * eps))).collect();
        let exact = NodeField::from_flat(&dom, &prod.apply(&s)).unwrap().values;
        let rel = sup(&sub(&fd, &exact)) / sup(&exact);
        assert!(rel < 1e-6, "seed {seed}: {rel:e}");
    }
}

/// Zero the K components on both faces so the trace stays on the scaffold.
fn onto_scaffold(dom: &FlatCayleyDomain, bc: &BCSpec, s: &mut NormalField) {
    let pk = bc.pi_k();
    for n in boundary_nodes(dom) {
        let v = Vector4::from(s.values[n]);
        let w = v - pk * v;
        s.values[n] = [w[0], w[1], w[2], w[3]];
    }
}

#[test]
fn h_vanishes_on_flat_and_nu_translated_traces() {
    let dom = FlatCayleyDomain::cube(5).unwrap();
    let bc = BCSpec::new(2).unwrap();
    let zero = graph(&dom, NodeField::zeros(&dom));
    assert_eq!(sup(&nonlinear_h(&zero, &bc).unwrap()), 0.0);
    assert_eq!(sup(&nonlinear_b(&zero, &bc).unwrap()), 0.0);
    let c = graph(&dom, NodeField::from_fn(&dom, |_| [0.2, -0.3, 0.0, 0.0]));
    assert!(sup(&nonlinear_h(&c, &bc).unwrap()) < 1e-15);
}

#[test]
fn h_rejects_traces_off_the_scaffold() {
    let dom = FlatCayleyDomain::cube(5).unwrap();
    let bc = BCSpec::new(2).unwrap();
    let g = graph(&dom, NodeField::from_fn(&dom, |_| [0.0, 0.0, 0.1, 0.0]));
    assert!(matches!(nonlinear_h(&g, &bc), Err(Error::Precondition(_))));
    assert!(matches!(nonlinear_b(&g, &bc), Err(Error::Precondition(_))));
}

fn db_relative_error(dom: &FlatCayleyDomain, bc: &BCSpec, seed: u64) -> f64 {
    let eps = 1e-5;
    let mut s = random_direction(dom, seed);
    onto_scaffold(dom, bc, &mut s);
    let plus = nonlinear_b(&graph(dom, scaled(&s, eps)), bc).unwrap();
    let minus = nonlinear_b(&graph(dom, scaled(&s, -eps)), bc).unwrap();
    let sys = assemble_bvp(dom, bc).unwrap();
    let rows = sys.apply(&s);
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for (idx, n) in boundary_nodes(dom).into_iter().enumerate() {
        for c in 0..bc.k {
            assert_eq!(sys.row_kinds[4 * n + c], RowKind::Robin);
            let fd = (plus[idx][c] - minus[idx][c]) / (2.0 * eps);
            err = err.max((fd - rows[4 * n + c]).abs());
            scale = scale.max(rows[4 * n + c].abs());
        }
    }
    err / scale
}

#[test]
fn db_matches_robin_rows() {
    let dom = FlatCayleyDomain::cube(5).unwrap();
    for k in 1..=4 {
        let bc = BCSpec::new(k).unwrap();
        for seed in 0..5 {
            let rel = db_relative_error(&dom, &bc, 200 + seed);
            assert!(rel < 1e-6, "k={k} seed {seed}: {rel:e}");
        }
    }
}

#[test]
fn db_matches_robin_rows_under_rotated_splitting() {
    let dom = FlatCayleyDomain::cube(5).unwrap();
    let mut rng = cell_rng(11, 0);
    let r = cayley_core::sampling::rotation4(&mut rng);
    let bc = BCSpec::rotated(2, Some(r)).unwrap();
    let rel = db_relative_error(&dom, &bc, 300);
    assert!(rel < 1e-6, "{rel:e}");
}

fn random_poly(seed: u64, quadratic: bool) -> PolyVectorField {
    let mut rng = cell_rng(seed, 1);
    let mut v = PolyVectorField::linear(
        Vec8::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
        Matrix8::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
    );
    if quadratic {
        for q in v.quad.iter_mut() {
            *q = Matrix8::from_fn(|_, _| rng.gen_range(-0.5..0.5));
        }
    }
    v
}

#[test]
fn lie_variation_identities() {
    let dom = FlatCayleyDomain::cube(16).unwrap();
    for k in [0, 2, 4] {
        let bc = BCSpec::new(k).unwrap();
        for (seed, quad) in [(1, false), (2, true)] {
            let r = lie_variation_check(&dom, &bc, &random_poly(seed, quad), 1e-4).unwrap();
            assert!(r.f_tilde < 1e-5 && r.b_tilde < 1e-5, "k={k} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn lie_rotation_in_tangent_plane_is_invisible() {
    let dom = FlatCayleyDomain::cube(16).unwrap();
    let mut lin = Matrix8::zeros();
    lin[(1, 0)] = 1.0;
    lin[(0, 1)] = -1.0;
    let v = PolyVectorField::linear(Vec8::zeros(), lin);
    let r = lie_variation_check(&dom, &BCSpec::new(3).unwrap(), &v, 1e-4).unwrap();
    assert!(r.f_tilde < 1e-6 && r.b_tilde < 1e-6, "{r:?}");
    let c = PolyVectorField::linear(e(6) + e(2), Matrix8::zeros());
    let r = lie_variation_check(&dom, &BCSpec::new(3).unwrap(), &c, 1e-4).unwrap();
    assert!(r.f_tilde < 1e-12 && r.b_tilde < 1e-12, "{r:?}");
}

fn wavy_perturbation(dom: &FlatCayleyDomain, bc: &BCSpec, face: Face, with_base: bool) -> ScaffoldPerturbation {
    let u = e(4);
    let nu_k: Vec<Vec8> = (bc.k..4).map(|c| e(5 + c)).collect();
    let base = (0..dom.num_sites())
        .map(|s| {
            if !with_base {
                return Vec8::zeros();
            }
            let x = dom.coords(dom.node(s, 0));
            let ph = 2.0 * std::f64::consts::PI * x[0];
            nu_k.iter().fold(u * (0.3 * ph.sin()), |acc, w| acc + w * (0.2 * ph.cos()))
        })
        .collect();
    let slope = (0..dom.num_sites())
        .map(|s| {
            let x = dom.coords(dom.node(s, 0));
            let a = (2.0 * std::f64::consts::PI * x[1]).cos();
            std::array::from_fn(|i| if i < bc.k { u * (0.5 + a * (i as f64 + 1.0) * 0.1) } else { Vec8::zeros() })
        })
        .collect();
    ScaffoldPerturbation::new(dom, bc, face, base, slope, 0.25).unwrap()
}

#[test]
fn extension_properties() {
    let dom = FlatCayleyDomain::cube(8).unwrap();
    let bc = BCSpec::new(2).unwrap();
    let t = wavy_perturbation(&dom, &bc, Face::Bottom, true);
    let site = 13;
    // restriction to W
    let on_w = extend_scaffold_field(&dom, &bc, &t, site, &(e(5) * 0.3 - e(6) * 0.1)).unwrap();
    let expect = t.base[site] + t.nu_slope[site][0] * 0.3 - t.nu_slope[site][1] * 0.1;
    assert!((on_w - expect).norm() < 1e-15);
    // normal derivatives across the collar at ∂X
    for r in [e(4), e(7), e(8)] {
        let h = 1e-4;
        let fd = (extend_scaffold_field(&dom, &bc, &t, site, &(r * h)).unwrap()
            - extend_scaffold_field(&dom, &bc, &t, site, &(r * -h)).unwrap())
            / (2.0 * h);
        assert!(fd.norm() < 1e-10);
    }
    // support inside the collar
    assert_eq!(extend_scaffold_field(&dom, &bc, &t, site, &(e(4) * 0.25)).unwrap().norm(), 0.0);
    // vanishing on ∂X gives zero along X
    let t0 = wavy_perturbation(&dom, &bc, Face::Bottom, false);
    for z in [0.0, 0.05, 0.15, 0.2] {
        assert_eq!(extend_scaffold_field(&dom, &bc, &t0, site, &(e(4) * z)).unwrap().norm(), 0.0);
    }
    let zero = ScaffoldPerturbation::zero(&dom, Face::Top, 0.1);
    assert_eq!(extend_scaffold_field(&dom, &bc, &zero, 3, &(e(5) * 0.2)).unwrap().norm(), 0.0);
}

#[test]
fn extension_rejects_bad_input() {
    let dom = FlatCayleyDomain::cube(4).unwrap();
    let bc = BCSpec::new(1).unwrap();
    let ns = dom.num_sites();
    let zeros = vec![Vec8::zeros(); ns];
    let slopes = vec![[Vec8::zeros(); 4]; ns];
    assert!(ScaffoldPerturbation::new(&dom, &bc, Face::Bottom, zeros.clone(), slopes.clone(), 0.6).is_err());
    assert!(ScaffoldPerturbation::new(&dom, &bc, Face::Bottom, zeros.clone(), slopes.clone(), 0.0).is_err());
    let tangent = vec![e(5); ns];
    assert!(ScaffoldPerturbation::new(&dom, &bc, Face::Bottom, tangent, slopes, 0.3).is_err());
    let t = ScaffoldPerturbation::zero(&dom, Face::Bottom, 0.3);
    assert!(extend_scaffold_field(&dom, &bc, &t, 0, &e(1)).is_err());
}

#[test]
fn scaffold_variation_matches_formula() {
    let dom = FlatCayleyDomain::cube(8).unwrap();
    for k in 1..=4 {
        let bc = BCSpec::new(k).unwrap();
        for face in [Face::Bottom, Face::Top] {
            let t = wavy_perturbation(&dom, &bc, face, true);
            let r = scaffold_variation_linearization(&dom, &bc, &t, 1e-4).unwrap();
            assert!(r < 1e-5, "k={k} {face:?}: {r:e}");
        }
    }
    let bc = BCSpec::new(2).unwrap();
    let rigid = ScaffoldPerturbation::new(&dom, &bc, Face::Bottom, vec![e(4) * 0.3 + e(8); dom.num_sites()], vec![[Vec8::zeros(); 4]; dom.num_sites()], 0.3).unwrap();
    assert!(scaffold_variation_linearization(&dom, &bc, &rigid, 1e-4).unwrap() < 1e-12);
}

fn translated_solution_error(s: &NormalField, d: [f64; 4]) -> f64 {
    s.values.iter().flat_map(|v| (0..4).map(move |c| (v[c] - d[c]).abs())).fold(0.0, f64::max)
}

#[test]
fn newton_recovers_translated_plane() {
    let dom = FlatCayleyDomain::cube(6).unwrap();
    let bc = BCSpec::new(0).unwrap();
    let d = [1e-2, 0.0, 0.0, 0.0];
    let res = newton_solve(&dom, &bc, &ScaffoldTranslation::uniform(d), None, &NewtonOptions::default()).unwrap();
    assert!(res.trace.len() <= 7, "{:?}", res.trace);
    assert!(*res.trace.last().unwrap() < 1e-10);
    assert!(translated_solution_error(&res.solution, d) < 1e-8);
}

#[test]
fn newton_trace_is_quadratic_from_a_perturbed_guess() {
    let dom = FlatCayleyDomain::cube(6).unwrap();
    let bc = BCSpec::new(0).unwrap();
    let d = [0.0, 1e-2, -5e-3, 0.0];
    let bump = |x: [f64; 4]| {
        let pi = std::f64::consts::PI;
        let (p, q) = ((pi * x[3]).sin(), (2.0 * pi * x[0]).cos());
        let b = (2.0 * pi * x[3]).sin() * (2.0 * pi * x[1]).sin();
        [0.03 * p * q, -0.025 * b, 0.015 * p, 0.04 * q * p + 0.02 * b]
    };
    let init = NodeField::from_fn(&dom, |x| {
        let b = bump(x);
        std::array::from_fn(|c| d[c] + b[c])
    });
    let res = newton_solve(&dom, &bc, &ScaffoldTranslation::uniform(d), Some(init), &NewtonOptions::default()).unwrap();
    let tr = &res.trace;
    assert!(tr.len() >= 3 && tr.len() <= 7, "{tr:?}");
    for w in tr.windows(2) {
        if w[1] > 1e-13 {
            assert!(w[1] <= 10.0 * w[0] * w[0], "{tr:?}");
        }
    }
    assert!(translated_solution_error(&res.solution, d) < 1e-8);
}

#[test]
fn newton_zero_perturbation_is_immediate() {
    let dom = FlatCayleyDomain::cube(4).unwrap();
    let res = newton_solve(&dom, &BCSpec::new(0).unwrap(), &ScaffoldTranslation::uniform([0.0; 4]), None, &NewtonOptions::default()).unwrap();
    assert_eq!(res.trace, vec![0.0]);
    assert_eq!(res.solution.max_abs(), 0.0);
}

#[test]
fn newton_reports_failures() {
    let dom = FlatCayleyDomain::cube(4).unwrap();
    let shift = ScaffoldTranslation::uniform([1e-2, 0.0, 0.0, 0.0]);
    let opts = NewtonOptions::default();
    assert!(matches!(newton_solve(&dom, &BCSpec::new(2).unwrap(), &shift, None, &opts), Err(Error::NonGeneric(_))));
    let steep = NodeField::from_fn(&dom, |x| [3.0 * x[3], 0.0, 0.0, 0.0]);
    assert!(matches!(newton_solve(&dom, &BCSpec::new(0).unwrap(), &shift, Some(steep), &opts), Err(Error::Diverged { .. })));
}

fn random_bump(dom: &FlatCayleyDomain, seed: u64) -> NormalField {
    let mut rng = cell_rng(seed, 2);
    let center: [f64; 4] = std::array::from_fn(|i| if i < 3 { rng.gen_range(0.0..1.0) } else { rng.gen_range(0.4..0.6) });
    let radius = rng.gen_range(0.25..0.35);
    let amp: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-0.03..0.03));
    NodeField::from_fn(dom, |x| {
        let r2: f64 = (0..4)
            .map(|i| {
                let mut d = x[i] - center[i];
                if i < 3 {
                    d -= d.round();
                }
                d * d
            })
            .sum::<f64>()
            / (radius * radius);
        let b = if r2 < 1.0 { (1.0 - 1.0 / (1.0 - r2)).exp() } else { 0.0 };
        amp.map(|a| a * b)
    })
}

#[test]
fn flat_volume_equals_flux() {
    let dom = FlatCayleyDomain::cube(6).unwrap();
    let r = volume_and_flux(&graph(&dom, NodeField::zeros(&dom)));
    assert!((r.volume - 1.0).abs() < 1e-12 && (r.flux - 1.0).abs() < 1e-12);
    assert!(r.min_margin().abs() < 1e-14);
}

#[test]
fn bumps_preserve_flux_and_increase_volume() {
    let dom = FlatCayleyDomain::cube(12).unwrap();
    let (mut gaps, mut energies) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let g = graph(&dom, random_bump(&dom, seed));
        let r = volume_and_flux(&g);
        assert!((r.flux - 1.0).abs() < 1e-6, "seed {seed}: flux {}", r.flux);
        assert!(r.volume > 1.0);
        assert!(r.min_margin() >= -1e-12);
        gaps.push(r.volume - r.flux);
        let f = cayley_residual(&g);
        energies.push(f.values.iter().enumerate().map(|(n, v)| dom.weight(n) * v.iter().map(|x| x * x).sum::<f64>()).sum());
    }
    let rho = cayley_core::experiments::spearman(&gaps, &energies);
    assert!(rho > 0.9, "{rho}");
}

#[test]
fn solution_records_round_trip() {
    let dom = FlatCayleyDomain::cube(4).unwrap();
    let res = newton_solve(&dom, &BCSpec::new(0).unwrap(), &ScaffoldTranslation::uniform([0.0, 0.0, 1e-2, 0.0]), None, &NewtonOptions::default()).unwrap();
    let mut buf = Vec::new();
    res.solution.write_records(&dom, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), dom.num_nodes());
    for (n, r) in rows.iter().enumerate() {
        assert_eq!(r[0] as usize, n);
        assert_eq!(&r[1..5], &dom.coords(n));
        assert_eq!(&r[5..9], &res.solution.values[n]);
    }
}
