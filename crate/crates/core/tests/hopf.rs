use std::f64::consts::{FRAC_PI_4, PI, TAU};

use kk_core::hopf::*;
use kk_core::tension::{bundle_tension, dot, Target};
use kk_core::wong::WongState;
use kk_core::KkError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn projection_of_one_and_j() {
    let b = HopfBundle::complex();
    assert_eq!(b.project(&[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    let pj = b.project(&[0.0, 0.0, 1.0, 0.0]).unwrap();
    assert!(max_abs_diff(&pj, &[-1.0, 0.0, 0.0]) < 1e-15);
}

#[test]
fn projection_rejects_non_unit() {
    let b = HopfBundle::complex();
    assert!(matches!(b.project(&[1.1, 0.0, 0.0, 0.0]), Err(KkError::Input(_))));
}

#[test]
fn frames_are_orthonormal_and_projection_is_fiber_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for kind in [HopfKind::Complex, HopfKind::Quaternionic] {
        let b = HopfBundle::new(kind);
        for _ in 0..1000 {
            let p = random_unit_vector(&mut rng, kind.ambient_dim());
            let f = b.frame(&p);
            for i in 0..f.len() {
                assert!(dot(&f[i], &p).abs() < 1e-13);
                for j in 0..f.len() {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((dot(&f[i], &f[j]) - e).abs() < 1e-13);
                }
            }
            let pr = b.project(&p).unwrap();
            assert!((dot(&pr, &pr).sqrt() - 1.0).abs() < 1e-12);
            // right action by a random fiber element
            let g = random_unit_vector(&mut rng, 4);
            let g = match kind {
                HopfKind::Complex => {
                    let r = (g[0] * g[0] + g[1] * g[1]).sqrt();
                    kk_core::liealg::Quaternion::new(g[0] / r, g[1] / r, 0.0, 0.0)
                }
                HopfKind::Quaternionic => kk_core::liealg::Quaternion::from_array([g[0], g[1], g[2], g[3]]),
            };
            let mut pg = vec![];
            for k in 0..kind.ambient_dim() / 4 {
                let q = kk_core::liealg::Quaternion::new(p[4 * k], p[4 * k + 1], p[4 * k + 2], p[4 * k + 3]);
                pg.extend_from_slice(&(q * g).to_array());
            }
            assert!(max_abs_diff(&b.project(&pg).unwrap(), &pr) < 1e-13);
        }
    }
}

#[test]
fn connection_form_examples() {
    let b = HopfBundle::quaternionic();
    let mut p = vec![0.0; 8];
    p[0] = 1.0;
    let s = 0.5f64.sqrt();
    let x = [0.0, s, 0.0, 0.0, s, 0.0, 0.0, 0.0];
    let w = b.connection_form(&p, &x).unwrap();
    assert!(max_abs_diff(&w, &[s, 0.0, 0.0]) < 1e-15);
    let f = b.frame(&p);
    assert!(max_abs_diff(&b.connection_form(&p, &f[0]).unwrap(), &[1.0, 0.0, 0.0]) < 1e-15);
    for h in &f[3..] {
        assert!(max_abs_diff(&b.connection_form(&p, h).unwrap(), &[0.0; 3]) < 1e-15);
    }
    assert!(matches!(b.connection_form(&p, &p), Err(KkError::Input(_))));
}

#[test]
fn vertical_frame_closes_on_su2() {
    let sc = HopfBundle::quaternionic().vertical_structure_constants();
    assert_eq!(sc.bracket(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), vec![0.0, 0.0, 2.0]);
    assert!(HopfBundle::complex().vertical_structure_constants().is_abelian());
}

#[test]
fn complex_curvature_and_lorentz_examples() {
    let b = HopfBundle::complex();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let p = random_unit_vector(&mut rng, 4);
        let om = b.curvature_numeric(&p, 2, 3).unwrap();
        assert!((om[0] + 2.0).abs() < 1e-12);
        let f = b.frame(&p);
        let l = b.lorentz_endomorphism(&p, &f[0], &f[1]).unwrap();
        let expect: Vec<f64> = f[2].iter().map(|x| -2.0 * x).collect();
        assert!(max_abs_diff(&l, &expect) < 1e-12);
    }
    assert!(matches!(b.curvature_numeric(&[1.0, 0.0, 0.0, 0.0], 1, 2), Err(KkError::Input(_))));
}

#[test]
fn quaternionic_curvature_matches_frame_table() {
    let b = HopfBundle::quaternionic();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let p = random_unit_vector(&mut rng, 8);
        for a in 4..=7 {
            for c in 4..=7 {
                let om = b.curvature_numeric(&p, a, c).unwrap();
                assert!(max_abs_diff(&om, &frame_curvature(HopfKind::Quaternionic, a, c)) < 1e-12, "{a}{c} {om:?}");
                let back = b.curvature_numeric(&p, c, a).unwrap();
                assert!(om.iter().zip(&back).all(|(x, y)| (x + y).abs() < 1e-13));
            }
        }
    }
    let om = b.curvature_numeric(&random_unit_vector(&mut rng, 8), 4, 5).unwrap();
    assert!(max_abs_diff(&om, &[-2.0, 0.0, 0.0]) < 1e-12);
}

#[test]
fn chart_field_strength_matches_curvature() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for kind in [HopfKind::Complex, HopfKind::Quaternionic] {
        let b = HopfBundle::new(kind);
        for pole in [Pole::North, Pole::South] {
            let model = b.as_local_model(pole);
            for _ in 0..50 {
                let x: Vec<f64> = (0..kind.base_dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let f = model.field_strength(&x).unwrap();
                let s = b.section(pole, &x);
                // ds/dx_mu by central differences of the section
                let h = 1e-5;
                let ds: Vec<Vec<f64>> = (0..x.len())
                    .map(|mu| {
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[mu] += h;
                        xm[mu] -= h;
                        let (sp, sm) = (b.section(pole, &xp), b.section(pole, &xm));
                        sp.iter().zip(&sm).map(|(a, c)| (a - c) / (2.0 * h)).collect()
                    })
                    .collect();
                let frame = b.frame(&s);
                let d = kind.algebra_dim();
                let horiz = |v: &[f64]| -> Vec<f64> {
                    let mut out = vec![0.0; v.len()];
                    for fb in &frame[d..] {
                        let c = dot(fb, v);
                        for (o, y) in out.iter_mut().zip(fb) {
                            *o += c * y;
                        }
                    }
                    out
                };
                for mu in 0..x.len() {
                    for nu in 0..x.len() {
                        let om = b.curvature_form(&horiz(&ds[mu]), &horiz(&ds[nu]));
                        for a in 0..d {
                            assert!((f[(a, mu, nu)] - om[a]).abs() < 1e-8, "{kind:?} {pole:?} {a}{mu}{nu}: {} vs {}", f[(a, mu, nu)], om[a]);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn great_circle_projects_to_wong_trajectory() {
    let b = HopfBundle::complex();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let p0 = random_unit_vector(&mut rng, 4);
    let mut w = random_unit_vector(&mut rng, 4);
    let c = dot(&w, &p0);
    for (wi, pi) in w.iter_mut().zip(&p0) {
        *wi -= c * pi;
    }
    let r = dot(&w, &w).sqrt();
    let w: Vec<f64> = w.iter().map(|x| x / r).collect();
    let pole = b.preferred_pole(&b.project(&p0).unwrap());
    let s0 = b.ambient_to_state(pole, 0.0, &p0, &w).unwrap();
    let path = b.integrate_across_charts(pole, &s0, TAU, 1e-3).unwrap();
    let mut sup: f64 = 0.0;
    for (pl, s) in &path {
        let p: Vec<f64> = p0.iter().zip(&w).map(|(a, c)| a * s.t.cos() + c * s.t.sin()).collect();
        let exact = b.project(&p).unwrap();
        sup = sup.max(max_abs_diff(&b.chart_point(*pl, &s.x), &exact));
    }
    assert!(sup < 1e-6, "sup distance {sup}");
}

#[test]
fn clifford_torus_is_harmonic_into_the_bundle() {
    let b = HopfBundle::complex();
    for alpha in [PI / 6.0, FRAC_PI_4, PI / 3.0] {
        let map = twisted_grid_map(twisted_map(alpha, TwistFamily::Clifford), clifford_domain(32));
        let rep = bundle_tension(&map, Target::Embedded(&b)).unwrap();
        assert!(rep.sup_horizontal.unwrap() < 1e-6, "{alpha}: {:?}", rep.sup_horizontal);
        assert!(rep.sup_vertical.unwrap() < 1e-6, "{alpha}: {:?}", rep.sup_vertical);
    }
}

#[test]
fn charge_vanishes_only_at_quarter_pi() {
    let alphas: Vec<f64> = (0..=147).map(|k| 0.05 + 0.01 * k as f64).collect();
    let prof = charge_profile(TwistFamily::Clifford, &alphas, &clifford_domain(8)).unwrap();
    assert_eq!(prof.zeros.len(), 1);
    assert!((prof.zeros[0] - FRAC_PI_4).abs() < 1e-6);
}


/// Midpoint polar quadrature of `F¹₁₂` over the unit disc of one chart.
fn flux_through_unit_disc(b: &HopfBundle, pole: Pole) -> f64 {
    let model = b.as_local_model(pole);
    let (nr, nt) = (1500, 64);
    let (hr, ht) = (1.0 / nr as f64, TAU / nt as f64);
    let mut total = 0.0;
    for i in 0..nr {
        let r = (i as f64 + 0.5) * hr;
        for k in 0..nt {
            let t = k as f64 * ht;
            let f = model.field_strength(&[r * t.cos(), r * t.sin()]).unwrap();
            total += f[(0, 0, 1)] * r * hr * ht;
        }
    }
    total
}

#[test]
fn total_flux_of_the_complex_bundle() {
    let b = HopfBundle::complex();
    let north = flux_through_unit_disc(&b, Pole::North);
    let south = flux_through_unit_disc(&b, Pole::South);
    assert!((north + PI).abs() < 1e-6, "north {north}");
    // the inversion between charts reverses orientation
    assert!((south - PI).abs() < 1e-6, "south {south}");
    assert!((north - south + TAU).abs() < 1e-6);
}

fn tangent_pair(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let p = random_unit_vector(rng, n);
    let mut w = random_unit_vector(rng, n);
    let c = dot(&w, &p);
    for (wi, pi) in w.iter_mut().zip(&p) {
        *wi -= c * pi;
    }
    let r = dot(&w, &w).sqrt();
    (p, w.iter().map(|x| x / r).collect())
}

#[test]
fn chart_switch_agrees_with_direct_lift() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for kind in [HopfKind::Complex, HopfKind::Quaternionic] {
        let b = HopfBundle::new(kind);
        let mut checked = 0;
        while checked < 100 {
            let (p, w) = tangent_pair(&mut rng, kind.ambient_dim());
            if b.project(&p).unwrap()[0].abs() > 0.8 {
                continue;
            }
            checked += 1;
            let n = b.ambient_to_state(Pole::North, 0.0, &p, &w).unwrap();
            let s = b.ambient_to_state(Pole::South, 0.0, &p, &w).unwrap();
            let moved: WongState = b.switch_chart(Pole::North, &n);
            assert!(max_abs_diff(&moved.x, &s.x) < 1e-12);
            assert!(max_abs_diff(&moved.u, &s.u) < 1e-12);
            assert!(max_abs_diff(&moved.v, &s.v) < 1e-12, "{kind:?}: {:?} vs {:?}", moved.v, s.v);
            let back = b.switch_chart(Pole::South, &moved);
            assert!(max_abs_diff(&back.x, &n.x) < 1e-12 && max_abs_diff(&back.v, &n.v) < 1e-12);
        }
    }
}

#[test]
fn quaternionic_great_circle_projects_to_wong_trajectory() {
    let b = HopfBundle::quaternionic();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..3 {
        let (p0, w) = tangent_pair(&mut rng, 8);
        let pole = b.preferred_pole(&b.project(&p0).unwrap());
        let s0 = b.ambient_to_state(pole, 0.0, &p0, &w).unwrap();
        let path = b.integrate_across_charts(pole, &s0, TAU, 1e-3).unwrap();
        let mut sup: f64 = 0.0;
        for (pl, s) in &path {
            let p: Vec<f64> = p0.iter().zip(&w).map(|(a, c)| a * s.t.cos() + c * s.t.sin()).collect();
            sup = sup.max(max_abs_diff(&b.chart_point(*pl, &s.x), &b.project(&p).unwrap()));
        }
        assert!(sup < 1e-6, "sup distance {sup}");
    }
}

#[test]
fn charge_norms_follow_closed_forms() {
    let complex = HopfBundle::complex();
    let quaternionic = HopfBundle::quaternionic();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let sphere = spherical_domain(sample_s3xs3(&mut rng, 200));
    for alpha in [0.2, 0.5, FRAC_PI_4, 1.0, 1.3] {
        let c = charge_sample(&complex, TwistFamily::Clifford, alpha, &clifford_domain(16)).unwrap();
        assert!((c.norm - 0.5 * (4.0 * alpha).sin().abs()).abs() < 1e-9, "{alpha}: {}", c.norm);
        let q = charge_sample(&quaternionic, TwistFamily::Spherical, alpha, &sphere).unwrap();
        assert!((q.norm - 1.5 * (4.0 * alpha).sin().abs()).abs() < 1e-9, "{alpha}: {}", q.norm);
    }
}

#[test]
fn verify_bundle_separates_the_two_tables() {
    let c = verify_bundle(&HopfBundle::complex(), 200, 5).unwrap();
    assert!(c.passed(), "{c:?}");
    let q = verify_bundle(&HopfBundle::quaternionic(), 200, 5).unwrap();
    assert!(q.frame_table < 1e-12 && q.lorentz_pairing < 1e-12);
    // the printed quaternionic table disagrees with the bundle it describes
    assert!(q.curvature_table > 1.0);
    assert!(!q.passed());
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = vec![];
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn parity(p: &[usize]) -> i32 {
    let mut inv = 0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            inv += i32::from(p[i] > p[j]);
        }
    }
    if inv % 2 == 0 { 1 } else { -1 }
}

/// Signed relabelings of the horizontal and vertical frames that carry the
/// frame curvature onto the displayed quaternionic table.
#[test]
fn displayed_quaternionic_table_needs_reversed_vertical_orientation() {
    let k = HopfKind::Quaternionic;
    let mut matches = 0;
    for ph in permutations(4) {
        for sh in 0..16u32 {
            for pv in permutations(3) {
                for sv in 0..8u32 {
                    let sign = |bits: u32, i: usize| if bits >> i & 1 == 1 { -1.0 } else { 1.0 };
                    let mut err = 0.0f64;
                    for a in 0..4 {
                        for c in 0..4 {
                            let f = frame_curvature(k, 4 + ph[a], 4 + ph[c]);
                            let d = displayed_curvature(k, 4 + a, 4 + c);
                            for v in 0..3 {
                                err = err.max((sign(sh, a) * sign(sh, c) * sign(sv, v) * f[pv[v]] - d[v]).abs());
                            }
                        }
                    }
                    if err < 1e-12 {
                        matches += 1;
                        let vertical_det = parity(&pv) * if sv.count_ones() % 2 == 0 { 1 } else { -1 };
                        // reversing the vertical orientation reverses the su(2) bracket
                        assert_eq!(vertical_det, -1);
                    }
                }
            }
        }
    }
    assert_eq!(matches, 192);
}
