use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, PI, TAU};
use std::sync::Arc;

use kk_core::fields::QuadraticMatrix;
use kk_core::geometry::{BaseChart, DerivativeMode, GaugePotential, KKLocalModel};
use kk_core::hopf::{clifford_domain, perturbed_clifford, sample_s3xs3, spherical_domain, twisted_grid_map, HopfBundle, Pole, TwistFamily, TwistedImmersion};
use kk_core::liealg::{AlgebraMetric, StructureConstants};
use kk_core::tension::{
    bundle_tension, dirichlet_energy, heat_flow, lorentz_charge_density, tension_field, vertical_residual, AnalyticBundleMap,
    AnalyticMap, BundleJet, Domain, DomainGrid, DomainSample, FlowSettings, GridMap, MapJet, Target, TargetKind,
};
use kk_core::wong::{covariant_acceleration, integrate, Method, WongState};
use kk_core::KkError;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn torus(n: usize, l: f64) -> DomainGrid {
    DomainGrid::flat_torus(&[n, n], &[l, l]).unwrap()
}

fn sup(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Affine map `y ↦ M y + c` of the unit torus, with its winding shifts.
fn affine_torus_map(n: usize, m: [[f64; 2]; 2], c: [f64; 2]) -> GridMap {
    let grid = torus(n, 1.0);
    let mut vals = vec![];
    for p in 0..grid.len() {
        let y = grid.coords(p);
        for r in 0..2 {
            vals.push(m[r][0] * y[0] + m[r][1] * y[1] + c[r]);
        }
    }
    GridMap::from_values(grid, TargetKind::Chart { dim: 2 }, vals)
        .unwrap()
        .with_periodic_shift(0, vec![m[0][0], m[1][0]])
        .with_periodic_shift(1, vec![m[0][1], m[1][1]])
}

#[test]
fn constant_map_has_zero_energy_and_tension() {
    let grid = torus(8, 1.0);
    let vals = vec![0.3, -0.7].repeat(grid.len());
    let map = GridMap::from_values(grid, TargetKind::Chart { dim: 2 }, vals).unwrap();
    let chart = BaseChart::stereographic_sphere(2, 4.0);
    let rep = tension_field(&map, Target::Chart(&chart)).unwrap();
    assert_eq!(rep.energy, 0.0);
    assert_eq!(rep.sup_tension, 0.0);
}

#[test]
fn identity_of_unit_torus_has_unit_energy() {
    let map = affine_torus_map(16, [[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0]);
    let e = dirichlet_energy(&map, Target::Chart(&BaseChart::euclidean(2))).unwrap();
    assert!((e - 1.0).abs() < 1e-14);
}

#[test]
fn affine_maps_between_flat_tori_are_harmonic() {
    let map = affine_torus_map(12, [[2.0, 1.0], [0.0, 3.0]], [0.1, -0.4]);
    let rep = tension_field(&map, Target::Chart(&BaseChart::euclidean(2))).unwrap();
    assert!(rep.sup_tension < 1e-10);
    // ½ (4 + 1 + 9)
    assert!((rep.energy - 7.0).abs() < 1e-12);
    let total: f64 = (0..rep.points).map(|p| map.domain.weight(p) * rep.energy_density[p]).sum();
    assert_eq!(total, rep.energy);
}

/// Quadrature of `½(|∂₁Φ|² + |∂₂Φ|²)` with hand-written derivatives of the twisted torus.
fn clifford_energy_oracle(alpha: f64, n: usize) -> f64 {
    let h = TAU / n as f64;
    let (ca, sa) = (alpha.cos(), alpha.sin());
    let mut e = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (t1, t2) = (i as f64 * h, j as f64 * h);
            let d1 = [-ca * t1.sin(), ca * t1.cos(), 0.0, 0.0];
            let d2 = [0.0, 0.0, -sa * t2.sin(), sa * t2.cos()];
            let s: f64 = d1.iter().chain(&d2).map(|v| v * v).sum();
            e += 0.5 * s * h * h;
        }
    }
    e
}

#[test]
fn clifford_energy_matches_quadrature_oracle() {
    const FROZEN: f64 = 19.739208802178716;
    let oracle = clifford_energy_oracle(FRAC_PI_4, 256);
    assert!((oracle - FROZEN).abs() < 1e-11);
    assert!((FROZEN - 2.0 * PI * PI).abs() < 1e-12);
    let map = twisted_grid_map(TwistedImmersion::new(FRAC_PI_4, TwistFamily::Clifford), clifford_domain(256));
    let e = dirichlet_energy(&map, Target::Sphere).unwrap();
    assert!((e - FROZEN).abs() < 1e-10);

    // sampled values converge at O(h²)
    let err = |n: usize| {
        let m = twisted_grid_map(TwistedImmersion::new(FRAC_PI_4, TwistFamily::Clifford), clifford_domain(n)).sampled().unwrap();
        (dirichlet_energy(&m, Target::Sphere).unwrap() - FROZEN).abs()
    };
    let e: Vec<f64> = [32, 64, 128].iter().map(|&n| err(n)).collect();
    for w in e.windows(2) {
        let r = w[0] / w[1];
        assert!((3.7..=4.3).contains(&r), "energy error ratio {r}");
    }
}

#[test]
fn finite_differences_converge_to_analytic_jets() {
    let gap = |n: usize| {
        let analytic = twisted_grid_map(TwistedImmersion::new(FRAC_PI_6, TwistFamily::Clifford), clifford_domain(n));
        let a = analytic.jets().unwrap();
        let f = analytic.sampled().unwrap().jets().unwrap();
        let mut g1 = 0.0f64;
        let mut g2 = 0.0f64;
        for (x, y) in a.iter().zip(&f) {
            for i in 0..2 {
                for l in 0..4 {
                    g1 = g1.max((x.d1[i][l] - y.d1[i][l]).abs());
                    for j in 0..2 {
                        g2 = g2.max((x.d2[i][j][l] - y.d2[i][j][l]).abs());
                    }
                }
            }
        }
        (g1, g2)
    };
    let (a, b, c) = (gap(32), gap(64), gap(128));
    for (p, q) in [(a, b), (b, c)] {
        assert!((3.7..=4.3).contains(&(p.0 / q.0)), "first-derivative ratio {}", p.0 / q.0);
        assert!((3.7..=4.3).contains(&(p.1 / q.1)), "second-derivative ratio {}", p.1 / q.1);
    }
}

#[test]
fn great_circle_is_harmonic() {
    // the equator of the unit sphere, |x| = 1 in stereographic coordinates, at unit speed
    let n = 6283;
    let grid = DomainGrid::flat_torus(&[n], &[TAU]).unwrap();
    assert!((grid.h_min() - 1e-3).abs() < 1e-6);
    let vals: Vec<f64> = (0..n).flat_map(|p| {
        let t = grid.coords(p)[0];
        [t.cos(), t.sin()]
    }).collect();
    let map = GridMap::from_values(grid, TargetKind::Chart { dim: 2 }, vals).unwrap();
    let rep = tension_field(&map, Target::Chart(&BaseChart::stereographic_sphere(2, 4.0))).unwrap();
    assert!(rep.sup_tension < 1e-6, "sup tension {:e}", rep.sup_tension);
}

struct Latitude(f64);

impl AnalyticMap for Latitude {
    fn target_dim(&self) -> usize {
        3
    }
    fn jet(&self, y: &[f64]) -> MapJet {
        let (s, c) = (self.0.sin(), self.0.cos());
        let (sp, cp) = (y[0].sin(), y[0].cos());
        MapJet {
            value: vec![s * cp, s * sp, c],
            d1: vec![vec![-s * sp, s * cp, 0.0]],
            d2: vec![vec![vec![-s * cp, -s * sp, 0.0]]],
        }
    }
}

#[test]
fn latitude_circles_have_closed_form_tension() {
    let grid = DomainGrid::flat_torus(&[400], &[TAU]).unwrap();
    for theta0 in [0.3, 1.0, PI / 2.0, 2.5] {
        let map = GridMap::from_analytic(Domain::Grid(grid.clone()), TargetKind::Sphere { ambient_dim: 3 }, Arc::new(Latitude(theta0)));
        let rep = tension_field(&map, Target::Sphere).unwrap();
        let want = (theta0.sin() * theta0.cos()).abs();
        for t in &rep.tau {
            let nrm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nrm - want).abs() < 1e-14);
        }
        // sampled values: the same up to O(h²)
        let fd = tension_field(&map.sampled().unwrap(), Target::Sphere).unwrap();
        assert!((fd.sup_tension - want).abs() < 1e-3 * want.max(1e-3));
    }
}

struct ChartCurve;

impl AnalyticMap for ChartCurve {
    fn target_dim(&self) -> usize {
        2
    }
    fn jet(&self, y: &[f64]) -> MapJet {
        let t = y[0];
        MapJet {
            value: vec![0.3 + 0.5 * t, 0.2 * t * t - 0.1],
            d1: vec![vec![0.5, 0.4 * t]],
            d2: vec![vec![vec![0.0, 0.4]]],
        }
    }
}

#[test]
fn one_dimensional_tension_is_covariant_acceleration() {
    let chart = BaseChart::stereographic_sphere(2, 4.0);
    let grid = DomainGrid::interval(101, -1.0, 1.0).unwrap();
    let map = GridMap::from_analytic(Domain::Grid(grid.clone()), TargetKind::Chart { dim: 2 }, Arc::new(ChartCurve));
    let rep = tension_field(&map, Target::Chart(&chart)).unwrap();
    for p in 0..grid.len() {
        let j = ChartCurve.jet(&grid.coords(p));
        let acc = covariant_acceleration(&chart, &j.value, &j.d1[0], &j.d2[0][0]).unwrap();
        for r in 0..2 {
            assert!((rep.tau[p][r] - acc[r]).abs() < 1e-9);
        }
    }
}

#[test]
fn map_leaving_the_chart_is_a_domain_error() {
    let g = QuadraticMatrix::linear(DMatrix::identity(1, 1), vec![DMatrix::from_element(1, 1, -1.0)]);
    let chart = BaseChart::new(Arc::new(g), DerivativeMode::Analytic).unwrap();
    let grid = DomainGrid::interval(11, 0.0, 2.0).unwrap();
    let vals: Vec<f64> = (0..11).map(|p| grid.coords(p)[0]).collect();
    let map = GridMap::from_values(grid, TargetKind::Chart { dim: 1 }, vals).unwrap();
    match tension_field(&map, Target::Chart(&chart)) {
        Err(KkError::Domain(msg)) => assert!(msg.contains("point")),
        other => panic!("expected a domain error, got {other:?}"),
    }
}

#[test]
fn non_unit_sphere_values_are_rejected() {
    let grid = DomainGrid::interval(3, 0.0, 1.0).unwrap();
    let err = GridMap::from_values(grid, TargetKind::Sphere { ambient_dim: 2 }, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap_err();
    assert!(matches!(err, KkError::Input(_)));
}

/// Horizontal lift with `v ≡ 0` of the equator of the radius-½ sphere, at unit speed.
struct EquatorLift;

impl AnalyticBundleMap for EquatorLift {
    fn base_dim(&self) -> usize {
        2
    }
    fn algebra_dim(&self) -> usize {
        1
    }
    fn bundle_jet(&self, y: &[f64]) -> BundleJet {
        let t = 2.0 * y[0];
        BundleJet {
            base: MapJet {
                value: vec![t.cos(), t.sin()],
                d1: vec![vec![-2.0 * t.sin(), 2.0 * t.cos()]],
                d2: vec![vec![vec![-4.0 * t.cos(), -4.0 * t.sin()]]],
            },
            v: vec![vec![0.0]],
            dv: vec![vec![vec![0.0]]],
        }
    }
}

#[test]
fn horizontal_lift_of_a_geodesic_is_harmonic() {
    let bundle = HopfBundle::complex();
    let model = bundle.as_local_model(Pole::North);
    let grid = DomainGrid::flat_torus(&[2000], &[PI]).unwrap();
    let map = GridMap::from_analytic_bundle(Domain::Grid(grid), Arc::new(EquatorLift));
    let rep = bundle_tension(&map, Target::Bundle(model)).unwrap();
    assert!(rep.sup_horizontal.unwrap() < 1e-12);
    assert!(rep.sup_vertical.unwrap() < 1e-12);
    let fd = bundle_tension(&map.sampled().unwrap(), Target::Bundle(model)).unwrap();
    assert!(fd.sup_horizontal.unwrap() < 1e-6 && fd.sup_vertical.unwrap() < 1e-6);
    assert_eq!(sup(&vertical_residual(&map, Target::Bundle(model)).unwrap()), 0.0);
    assert_eq!(lorentz_charge_density(&map, Target::Bundle(model)).unwrap().sup, 0.0);
}

#[test]
fn wong_trajectory_lifted_to_a_grid_has_small_residual() {
    let model = KKLocalModel::new(
        BaseChart::euclidean(2),
        GaugePotential::symmetric_planar(1.0),
        AlgebraMetric::identity(1),
        StructureConstants::abelian(1),
    )
    .unwrap();
    // one Larmor period, sampled at the integrator steps
    let n = 6283;
    let h = TAU / n as f64;
    let tr = integrate(&model, &WongState::new(0.0, vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0]), TAU, Method::Rk4 { h }).unwrap();
    assert_eq!(tr.len(), n + 1);
    let vals: Vec<f64> = tr.samples[..n].iter().flat_map(|s| [s.x[0], s.x[1], s.v[0]]).collect();
    let grid = DomainGrid::flat_torus(&[n], &[TAU]).unwrap();
    let map = GridMap::from_values(grid, TargetKind::Bundle { m: 2, d: 1 }, vals).unwrap();
    let rep = bundle_tension(&map, Target::Bundle(&model)).unwrap();
    assert!(rep.sup_horizontal.unwrap() < 1e-6, "horizontal {:e}", rep.sup_horizontal.unwrap());
    assert!(rep.sup_vertical.unwrap() < 1e-12);
    // and the Lorentz density is the charge force, |κB u| = 1
    let dens = lorentz_charge_density(&map, Target::Bundle(&model)).unwrap();
    assert!((dens.sup - 1.0).abs() < 1e-5);
}

fn random_su2_model(seed: u64) -> KKLocalModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sym = |rng: &mut ChaCha8Rng, n: usize, s: f64| {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-s..s));
        (&a + a.transpose()) * 0.5
    };
    let mut g = QuadraticMatrix::constant(DMatrix::identity(2, 2) * 2.0 + sym(&mut rng, 2, 0.3), 2);
    let mut b = QuadraticMatrix::constant(DMatrix::identity(3, 3) * 2.0 + sym(&mut rng, 3, 0.3), 2);
    let mut a = QuadraticMatrix::constant(DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0)), 2);
    for k in 0..2 {
        g.c1[k] = sym(&mut rng, 2, 0.4);
        b.c1[k] = sym(&mut rng, 3, 0.4);
        a.c1[k] = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        for l in 0..2 {
            b.c2[k][l] = sym(&mut rng, 3, 0.2);
            a.c2[k][l] = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-0.5..0.5));
        }
    }
    KKLocalModel::new(
        BaseChart::new(Arc::new(g), DerivativeMode::Analytic).unwrap(),
        GaugePotential::new(Arc::new(a), DerivativeMode::Analytic).unwrap(),
        AlgebraMetric::field(Arc::new(b), &[vec![0.0, 0.0]]).unwrap(),
        StructureConstants::su2(),
    )
    .unwrap()
}

/// Quadratic base part and affine vertical part, with random coefficients.
struct PolyBundleMap {
    c: [[f64; 6]; 2],
    w: [[[f64; 3]; 3]; 2],
}

impl PolyBundleMap {
    fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = [[0.0; 6]; 2];
        let mut w = [[[0.0; 3]; 3]; 2];
        for r in c.iter_mut() {
            for v in r.iter_mut() {
                *v = rng.gen_range(-0.2..0.2);
            }
        }
        for j in w.iter_mut() {
            for a in j.iter_mut() {
                for v in a.iter_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
        }
        Self { c, w }
    }
}

impl AnalyticBundleMap for PolyBundleMap {
    fn base_dim(&self) -> usize {
        2
    }
    fn algebra_dim(&self) -> usize {
        3
    }
    fn bundle_jet(&self, y: &[f64]) -> BundleJet {
        let (s, t) = (y[0], y[1]);
        let mut value = vec![];
        let mut d1 = vec![vec![0.0; 2]; 2];
        let mut d2 = vec![vec![vec![0.0; 2]; 2]; 2];
        for (r, c) in self.c.iter().enumerate() {
            value.push(c[0] + c[1] * s + c[2] * t + c[3] * s * s + c[4] * s * t + c[5] * t * t);
            d1[0][r] = c[1] + 2.0 * c[3] * s + c[4] * t;
            d1[1][r] = c[2] + c[4] * s + 2.0 * c[5] * t;
            d2[0][0][r] = 2.0 * c[3];
            d2[0][1][r] = c[4];
            d2[1][0][r] = c[4];
            d2[1][1][r] = 2.0 * c[5];
        }
        let v = (0..2).map(|j| (0..3).map(|a| self.w[j][a][0] + self.w[j][a][1] * s + self.w[j][a][2] * t).collect()).collect();
        let dv = (0..2)
            .map(|i| (0..2).map(|j| (0..3).map(|a| self.w[j][a][1 + i]).collect()).collect())
            .collect();
        BundleJet { base: MapJet { value, d1, d2 }, v, dv }
    }
}

#[test]
fn vertical_trace_formula_agrees_with_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..20 {
        let model = random_su2_model(seed);
        let points: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]).collect();
        // a curved domain metric exercises the domain Christoffel terms
        let domain = Domain::Sample(DomainSample { points, metric: BaseChart::stereographic_sphere(2, 4.0) });
        let map = GridMap::from_analytic_bundle(domain, Arc::new(PolyBundleMap::random(1000 + seed)));
        let closed = bundle_tension(&map, Target::Bundle(&model)).unwrap();
        let trace = vertical_residual(&map, Target::Bundle(&model)).unwrap();
        let cv = closed.vertical.unwrap();
        let mut worst = 0.0f64;
        for (a, b) in cv.iter().zip(&trace) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        assert!(worst < 1e-10, "trace vs closed form {worst:e}");
        assert!(sup(&cv) > 1e-3);
    }
}

#[test]
fn twisted_clifford_tori_are_harmonic_into_the_bundle() {
    let bundle = HopfBundle::complex();
    for alpha in [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3] {
        let map = twisted_grid_map(TwistedImmersion::new(alpha, TwistFamily::Clifford), clifford_domain(64));
        let rep = bundle_tension(&map, Target::Embedded(&bundle)).unwrap();
        assert!(rep.sup_horizontal.unwrap() < 1e-6 && rep.sup_vertical.unwrap() < 1e-6);
        let sphere = tension_field(&map, Target::Sphere).unwrap();
        assert!(sphere.sup_tension < 1e-12);
    }
    let map = twisted_grid_map(TwistedImmersion::new(FRAC_PI_4, TwistFamily::Clifford), clifford_domain(64));
    assert!(sup(&vertical_residual(&map, Target::Embedded(&bundle)).unwrap()) < 1e-6);
    assert!(lorentz_charge_density(&map, Target::Embedded(&bundle)).unwrap().sup < 1e-8);
    let charged = twisted_grid_map(TwistedImmersion::new(FRAC_PI_6, TwistFamily::Clifford), clifford_domain(64));
    assert!(lorentz_charge_density(&charged, Target::Embedded(&bundle)).unwrap().sup > 0.1);
}

#[test]
fn twisted_spherical_immersion_is_harmonic_into_the_bundle() {
    let bundle = HopfBundle::quaternionic();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let domain = spherical_domain(sample_s3xs3(&mut rng, 500));
    for alpha in [FRAC_PI_6, FRAC_PI_3] {
        let map = twisted_grid_map(TwistedImmersion::new(alpha, TwistFamily::Spherical), domain.clone());
        let rep = bundle_tension(&map, Target::Embedded(&bundle)).unwrap();
        assert!(rep.sup_horizontal.unwrap() < 1e-5 && rep.sup_vertical.unwrap() < 1e-5);
    }
}

#[test]
fn heat_flow_leaves_a_harmonic_map_fixed() {
    let map = twisted_grid_map(TwistedImmersion::new(FRAC_PI_4, TwistFamily::Clifford), clifford_domain(32)).sampled().unwrap();
    let Domain::Grid(grid) = &map.domain else { unreachable!() };
    let dt = 0.1 * grid.h_min().powi(2);
    let start = map.values().unwrap();
    let mut cur = map.clone();
    for _ in 0..10 {
        let res = heat_flow(&cur, Target::Sphere, FlowSettings { dt, steps: 1, ..Default::default() }).unwrap();
        let next = res.map.values().unwrap();
        let prev = cur.values().unwrap();
        assert!(next.iter().zip(&prev).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!((res.energy[1] - res.energy[0]).abs() < 1e-12);
        cur = res.map;
    }
    let end = cur.values().unwrap();
    assert!(end.iter().zip(&start).all(|(a, b)| (a - b).abs() < 1e-10));
}

#[test]
fn flat_torus_perturbation_decays() {
    let grid = torus(16, 1.0);
    let mut vals = vec![];
    for p in 0..grid.len() {
        let y = grid.coords(p);
        vals.push(y[0] + 0.1 * (TAU * y[1]).sin());
        vals.push(y[1]);
    }
    let map = GridMap::from_values(grid.clone(), TargetKind::Chart { dim: 2 }, vals)
        .unwrap()
        .with_periodic_shift(0, vec![1.0, 0.0])
        .with_periodic_shift(1, vec![0.0, 1.0]);
    let chart = BaseChart::euclidean(2);
    let dt = 0.1 * grid.h_min().powi(2);
    let res = heat_flow(&map, Target::Chart(&chart), FlowSettings { dt, steps: 1500, ..Default::default() }).unwrap();
    assert!(res.energy.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    let last = *res.sup_tension.last().unwrap();
    assert!(last < 1e-5, "final tension {last:e}");
    assert!((res.energy.last().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(res.csv().lines().next().unwrap(), "step,energy,sup_tension");
    assert_eq!(res.csv().lines().count(), 1502);
}

#[test]
fn heat_flow_rejects_large_steps_and_detects_blow_up() {
    let grid = torus(16, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vals: Vec<f64> = (0..grid.len())
        .flat_map(|p| {
            let y = grid.coords(p);
            [y[0] + 0.01 * rng.gen_range(-1.0..1.0), y[1]]
        })
        .collect();
    let map = GridMap::from_values(grid.clone(), TargetKind::Chart { dim: 2 }, vals)
        .unwrap()
        .with_periodic_shift(0, vec![1.0, 0.0])
        .with_periodic_shift(1, vec![0.0, 1.0]);
    let chart = BaseChart::euclidean(2);
    let h2 = grid.h_min().powi(2);
    let err = heat_flow(&map, Target::Chart(&chart), FlowSettings { dt: 0.5 * h2, steps: 10, ..Default::default() }).unwrap_err();
    assert!(matches!(err, KkError::Input(_)));
    let err = heat_flow(&map, Target::Chart(&chart), FlowSettings { dt: 3.0 * h2, steps: 200, cfl: 10.0, ..Default::default() }).unwrap_err();
    assert!(matches!(err, KkError::Instability { .. }), "got {err:?}");
    let model = HopfBundle::complex().as_local_model(Pole::North).clone();
    let err = heat_flow(&map, Target::Bundle(&model), FlowSettings { dt: 0.1 * h2, steps: 1, ..Default::default() }).unwrap_err();
    assert!(matches!(err, KkError::Unsupported(_)));
}

#[test]
fn perturbed_clifford_torus_flows_toward_harmonic() {
    let bundle = HopfBundle::complex();
    let map = perturbed_clifford(16, FRAC_PI_4, 0.05).unwrap();
    let before = bundle_tension(&map, Target::Embedded(&bundle)).unwrap();
    let Domain::Grid(grid) = &map.domain else { unreachable!() };
    let dt = 0.1 * grid.h_min().powi(2);
    let res = heat_flow(&map, Target::Sphere, FlowSettings { dt, steps: 2000, ..Default::default() }).unwrap();
    assert!(res.energy.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    let after = bundle_tension(&res.map, Target::Embedded(&bundle)).unwrap();
    assert!(after.sup_tension < 1e-2 * before.sup_tension);
}

#[test]
fn report_csv_has_one_row_per_point() {
    let map = twisted_grid_map(TwistedImmersion::new(FRAC_PI_6, TwistFamily::Clifford), clifford_domain(8));
    let rep = bundle_tension(&map, Target::Embedded(&HopfBundle::complex())).unwrap();
    let csv = rep.csv(&map.domain);
    assert_eq!(csv.lines().next().unwrap(), "y1,y2,tau1,tau2,tau3,h1,h2,w1,energy_density");
    assert_eq!(csv.lines().count(), 65);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_is_the_weighted_sum_of_densities(alpha in 0.1f64..1.4, n in 6usize..20) {
        let map = twisted_grid_map(TwistedImmersion::new(alpha, TwistFamily::Clifford), clifford_domain(n));
        let rep = tension_field(&map, Target::Sphere).unwrap();
        let total: f64 = (0..rep.points).map(|p| map.domain.weight(p) * rep.energy_density[p]).sum();
        prop_assert!((total - rep.energy).abs() < 1e-12);
        prop_assert!((rep.energy - 2.0 * PI * PI).abs() < 1e-10);
    }

    #[test]
    fn affine_maps_stay_harmonic(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in -2.0f64..2.0) {
        let map = affine_torus_map(8, [[a.round(), b.round()], [c.round(), d.round()]], [a, d]);
        let rep = tension_field(&map, Target::Chart(&BaseChart::euclidean(2))).unwrap();
        prop_assert!(rep.sup_tension < 1e-10);
    }
}
