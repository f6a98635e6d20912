use std::sync::Arc;

use volac_core::domain::{GridDomain, Shape};
use volac_core::fieldsolver::*;
use volac_core::multiplicity::*;
use volac_core::radial::support_radius;
use volac_core::{certify, quartic};

fn disk(h: f64, r: f64) -> Arc<GridDomain> {
    Arc::new(GridDomain::new(Shape::Disk { radius: 1.0 }, h, Some(r)).unwrap())
}

#[test]
fn admissible_box_on_the_perturbed_annulus() {
    let p = quartic(1.0, 2.0).unwrap();
    let c = certify(&p).unwrap();
    let d = GridDomain::new(
        Shape::PerturbedAnnulus {
            r_in: 0.3,
            r_out: 1.0,
            offset: 0.15,
        },
        0.025,
        None,
    )
    .unwrap();
    assert!((d.r_deform - 0.22).abs() < 1e-12);
    let (v, eps) = (0.04, 0.025);
    let prof = radial_for(&p, &c, 2, v, eps, 0.02).unwrap();
    let a = admissible(&d, &c, 64.0, &prof, v, eps).unwrap();
    // (0.22 / 1.0839)² and (0.04 / 64)^{1/2}.
    assert!((a.v1 - 0.041197).abs() < 1e-5);
    assert!((a.eps1 - 0.025).abs() < 1e-12);
    assert!((a.gamma - 64.0).abs() < 1e-9);
    assert!(a.admissible);
    assert!(a.c_level < 0.0);
    assert!((a.c_level - eps * eps * prof.energy).abs() < 1e-15);
    let b = admissible(&d, &c, 64.0, &prof, 0.05, eps);
    assert!(matches!(b, Err(MultiplicityError::MissingRadialData(_))));
    let prof5 = radial_for(&p, &c, 2, 0.05, eps, 0.02).unwrap();
    assert!(!admissible(&d, &c, 64.0, &prof5, 0.05, eps).unwrap().admissible);
}

#[test]
fn photography_identities_converge_at_order_two() {
    let p = quartic(1.0, 2.0).unwrap();
    let c = certify(&p).unwrap();
    let eps = 0.05;
    let v = 200.0 * eps * eps;
    let prof = radial_for(&p, &c, 2, v, eps, 0.02).unwrap();
    let m = sublevel_m(&prof, eps);
    assert!(m < 0.0);
    let x0 = (0.0731, -0.0417);
    let mut errs = Vec::new();
    for k in [5.0, 10.0] {
        let d = disk(eps / k, 0.1);
        let f = photography(&d, &prof, x0, eps).unwrap();
        assert!((f.volume() - v).abs() < 1e-12 * v);
        let b = barycenter(&f).unwrap();
        assert!((b.0 - x0.0).hypot(b.1 - x0.1) <= d.h);
        errs.push(((energy(&f, &p, eps) - m) / m).abs());
    }
    assert!(errs[1] <= 1e-3, "{errs:?}");
    assert!((errs[0] / errs[1]).log2() > 1.8, "{errs:?}");
}

#[test]
fn photography_rejects_bad_centres() {
    let p = quartic(1.0, 2.0).unwrap();
    let c = certify(&p).unwrap();
    let eps = 0.05;
    let prof = radial_for(&p, &c, 2, 200.0 * eps * eps, eps, 0.02).unwrap();
    let d = disk(0.025, 0.1);
    assert!(matches!(
        photography(&d, &prof, (0.95, 0.0), eps),
        Err(MultiplicityError::OutsideInnerRegion { .. })
    ));
    // Inside Ω_r^- but the bump (radius ≈ 0.4) reaches the boundary.
    assert!(matches!(
        photography(&d, &prof, (0.7, 0.0), eps),
        Err(MultiplicityError::BumpOverflowsDomain { .. })
    ));
    assert!(matches!(barycenter(&Field::zeros(d)), Err(MultiplicityError::ZeroField)));
}

#[test]
fn m_star_exceeds_m() {
    let p = quartic(1.0, 2.0).unwrap();
    let c = certify(&p).unwrap();
    for (v, eps) in [(0.04, 0.01), (0.1, 0.0125), (0.04, 0.025)] {
        let prof = radial_for(&p, &c, 2, v, eps, 0.02).unwrap();
        let m = sublevel_m(&prof, eps);
        for rho in [0.0, 0.05, 0.2] {
            let s = sublevel_m_star(&p, &c, 2, rho, eps, v, 0.02).unwrap();
            assert!(s.value > m, "V={v} ε={eps} ρ={rho}: {} ≤ {m}", s.value);
            assert!(s.offset >= rho);
        }
    }
}

#[test]
fn two_bump_witness_matches_its_quadrature() {
    // m* witness assembled on a grid: two half-mass photographs at ±offset.
    let p = quartic(1.0, 2.0).unwrap();
    let c = certify(&p).unwrap();
    let (v, eps, rho) = (0.1, 0.0125, 0.05);
    let s = sublevel_m_star(&p, &c, 2, rho, eps, v, 0.02).unwrap();
    let half = radial_for(&p, &c, 2, 0.5 * v, eps, 0.02).unwrap();
    let d = Arc::new(
        GridDomain::new(
            Shape::KHoledRectangle {
                width: 1.0,
                height: 0.6,
                holes: 0,
                hole_radius: 0.0,
            },
            eps / 10.0,
            Some(0.12),
        )
        .unwrap(),
    );
    let f = multi_photography(&d, &half, &[(-s.offset, 0.0), (s.offset, 0.0)], eps).unwrap();
    assert!((f.volume() - v).abs() < 1e-12);
    let b = barycenter(&f).unwrap();
    assert!(b.0.abs() < 1e-9 && b.1.abs() < 1e-9);
    // Support outside B_ρ(0).
    let r = eps * support_radius(&half, 1e-8).radius;
    assert!(s.offset - r >= rho - 1e-12);
    let e = energy(&f, &p, eps);
    assert!(((e - s.value) / s.value).abs() < 5e-3, "{e} vs {}", s.value);
}

fn solved(d: &Arc<GridDomain>, c: (f64, f64)) -> SolutionRecord {
    let p = quartic(1.0, 2.0).unwrap();
    let mut f = Field::from_fn(d.clone(), |x, y| (1.0 - ((x - c.0).powi(2) + (y - c.1).powi(2)) / 0.09).max(0.0));
    f.scale_to_volume(0.8).unwrap();
    gradient_flow(&f, &p, 0.8, 0.1, &FlowOptions::default()).unwrap()
}

#[test]
fn dedup_soundness() {
    let d = disk(0.1 / 3.0, 0.4);
    let a = solved(&d, (0.0, 0.0));
    let (l2, bary) = (1e-3 * 0.8f64.sqrt(), 2.0 * d.h);
    assert!(same_solution(&a, &a.clone(), l2, bary));
    let mut b = a.clone();
    b.field = a.field.translate_cells(5, 0);
    b.barycenter = b.field.barycenter();
    assert!((b.barycenter.unwrap().0 - a.barycenter.unwrap().0) > 4.0 * d.h * 0.5);
    assert!(!same_solution(&a, &b, l2, bary));
    // The translate is the same bump: peak profile agrees exactly.
    assert!(bump_translate_defect(&a.field, &b.field, 0.2) < 1e-12);
}

#[test]
fn enumerate_on_a_small_disk() {
    let p = quartic(1.0, 2.0).unwrap();
    let c = certify(&p).unwrap();
    let (v, eps) = (0.8, 0.1);
    let d = disk(eps / 3.0, 0.4);
    let prof = radial_for(&p, &c, 2, v, eps, 0.02).unwrap();
    let params = admissible(&d, &c, 64.0, &prof, v, eps).unwrap();
    assert!(!params.admissible);
    let seeds = SeedSpec {
        points: Some(vec![(0.0, 0.0), (0.0, 0.0), (0.05, 0.0), (0.9, 0.0)]),
        ..SeedSpec::default()
    };
    let opts = EnumerateOptions {
        spectrum_k: 4,
        ..EnumerateOptions::default()
    };
    let cat = enumerate(&d, &p, &c, &params, &prof, &seeds, &opts).unwrap();
    assert_eq!(cat.seeds.len(), 4);
    // Identical seeds collapse; the outside seed is recorded as a failure.
    // The centred bump sits on a soft translation mode, so the seed at
    // (0.05, 0) may drift for a long time and is allowed to fail.
    assert_eq!(cat.seeds[0].record, cat.seeds[1].record);
    assert!(cat.seeds[3].error.is_some() && cat.seeds[3].record.is_none());
    assert!(cat.distinct_total >= 1 && cat.distinct_total <= 2);
    assert!(cat.records.windows(2).all(|w| w[0].energy <= w[1].energy));
    assert_eq!(cat.distinct_below_c, cat.records.iter().filter(|r| r.energy <= cat.c_level).count());
    for (r, s) in cat.records.iter().zip(&cat.spectra) {
        assert!(r.residual_inf < 1e-10);
        let s = s.as_ref().unwrap();
        assert_eq!(r.morse_index, Some(s.morse_index));
        // Exact inertia also counts eigenvalues inside the degeneracy band.
        if s.degenerate_flag {
            assert!(s.inertia_index.unwrap() >= s.morse_index);
        } else {
            assert_eq!(s.inertia_index, Some(s.morse_index));
        }
    }
}

#[test]
fn seed_lattice_stays_in_the_inner_region() {
    let d = disk(0.02, 0.3);
    let pts = seed_lattice(&d, 0.25, 0.1);
    assert!(!pts.is_empty());
    for &(x, y) in &pts {
        assert!(d.in_inner(x, y) && d.signed_distance(x, y) > 0.1);
    }
    assert!(pts.contains(&(0.0, 0.0)));
}
