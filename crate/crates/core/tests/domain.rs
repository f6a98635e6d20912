use volac_core::domain::*;

fn annulus(h: f64) -> GridDomain {
    GridDomain::new(Shape::Annulus { r_in: 0.5, r_out: 1.0 }, h, None).unwrap()
}

#[test]
fn disk_is_one_component_without_holes() {
    let d = GridDomain::new(Shape::Disk { radius: 1.0 }, 0.02, None).unwrap();
    assert_eq!(d.count_components_and_holes(), (1, 0));
    let t = d.topology().unwrap();
    assert_eq!((t.cat, t.p1, t.betti.clone()), (1, 1, vec![1]));
    // Node count approximates π.
    assert!((d.area() - std::f64::consts::PI).abs() < 0.02);
}

#[test]
fn annulus_families_have_one_hole() {
    let d = annulus(0.02);
    assert_eq!(d.count_components_and_holes(), (1, 1));
    let t = d.topology().unwrap();
    assert_eq!((t.cat, t.p1, t.morse_lower), (2, 2, 3));
    let p = GridDomain::from_spec("family=perturbed_annulus r_in=0.5 r_out=1.0 offset=0.2 h=0.02").unwrap();
    assert_eq!(p.count_components_and_holes(), (1, 1));
    assert_eq!(p.topology().unwrap(), t);
}

#[test]
fn holed_rectangle_invariants() {
    let d = GridDomain::from_spec("family=k_holed_rectangle width=3 height=1 holes=3 hole_radius=0.2 h=0.02").unwrap();
    assert_eq!(d.count_components_and_holes(), (1, 3));
    let t = d.topology().unwrap();
    assert_eq!((t.betti.clone(), t.p1, t.morse_lower, t.cat), (vec![1, 3], 4, 7, 2));
    let plain = GridDomain::from_spec("family=k_holed_rectangle width=2 height=1 holes=0 h=0.05").unwrap();
    assert_eq!(plain.topology().unwrap().cat, 1);
}

#[test]
fn hole_count_stable_under_refinement() {
    for h in [0.05, 0.025, 0.0125, 0.00625] {
        assert_eq!(annulus(h).count_components_and_holes(), (1, 1), "h={h}");
        let r = GridDomain::new(
            Shape::KHoledRectangle {
                width: 3.0,
                height: 1.2,
                holes: 2,
                hole_radius: 0.25,
            },
            h,
            None,
        )
        .unwrap();
        assert_eq!(r.count_components_and_holes(), (1, 2), "h={h}");
    }
}

#[test]
fn coarse_grids_are_rejected() {
    let e = GridDomain::new(Shape::Annulus { r_in: 0.1, r_out: 1.0 }, 0.05, None).unwrap_err();
    assert!(matches!(e, DomainError::ResolutionTooCoarse { .. }), "{e}");
    assert!(matches!(
        GridDomain::new(Shape::Annulus { r_in: 1.0, r_out: 0.5 }, 0.01, None),
        Err(DomainError::InvalidParameters(_))
    ));
}

#[test]
fn neighbourhoods_nest_and_keep_topology() {
    for d in [
        annulus(0.02),
        GridDomain::from_spec("family=perturbed_annulus r_in=0.3 r_out=1.0 offset=0.2 h=0.01").unwrap(),
        GridDomain::from_spec("family=k_holed_rectangle width=3 height=1 holes=3 hole_radius=0.2 h=0.02").unwrap(),
    ] {
        let r = d.r_deform;
        let (inner, outer) = (d.inner_mask(r), d.outer_mask(r));
        for k in 0..inner.len() {
            assert!(!inner[k] || d.mask()[k]);
            assert!(!d.mask()[k] || outer[k]);
        }
        let holes = d.topology().unwrap().betti[1];
        assert_eq!(count_components_and_holes(&inner, d.nx, d.ny), (1, holes));
        assert_eq!(count_components_and_holes(&outer, d.nx, d.ny), (1, holes));
        // Every node of Ω_r^+ lies within r of a node of Ω, up to a cell diagonal.
        let pts: Vec<(f64, f64)> = (0..outer.len()).filter(|&k| d.mask()[k]).map(|k| d.node(k)).collect();
        for k in (0..outer.len()).filter(|&k| outer[k] && !d.mask()[k]).step_by(7) {
            let (x, y) = d.node(k);
            assert!(pts.iter().any(|p| (p.0 - x).hypot(p.1 - y) <= r + 1.5 * d.h));
        }
    }
}

#[test]
fn default_r_stays_below_half_feature() {
    let d = GridDomain::from_spec("family=perturbed_annulus r_in=0.3 r_out=1.0 offset=0.2 h=0.01").unwrap();
    assert!((d.r_deform - 0.4 * 0.5).abs() < 1e-15);
    let o = GridDomain::from_spec("family=annulus r_in=0.5 r_out=1.0 h=0.02 r_deform=0.1").unwrap();
    assert_eq!(o.r_deform, 0.1);
}

#[test]
fn custom_masks_have_no_tabulated_topology() {
    let d = annulus(0.05);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mask.csv");
    d.write_mask_csv(&path).unwrap();
    let c = GridDomain::read_mask_csv(&path, d.h, d.r_deform).unwrap();
    assert_eq!(c.mask(), d.mask());
    assert_eq!(c.count_components_and_holes(), (1, 1));
    assert!(matches!(c.topology(), Err(DomainError::UnknownFamily)));
    // Brute-force neighbourhoods of the custom copy only differ from the
    // analytic ones within a cell of the level set.
    let (a, b) = (c.inner_mask(d.r_deform), d.inner_mask(d.r_deform));
    for k in 0..a.len() {
        assert!(a[k] == b[k] || (d.distance()[k] - d.r_deform).abs() < 1.5 * d.h);
    }
}

#[test]
fn interval_is_one_dimensional() {
    let d = GridDomain::from_spec("family=interval length=1 h=0.0625").unwrap();
    assert_eq!((d.dim(), d.nx, d.ny, d.n_interior()), (1, 17, 1, 15));
    assert_eq!(d.neighbours(0).collect::<Vec<_>>(), vec![None, Some(1)]);
    assert_eq!(d.topology().unwrap().cat, 1);
}

#[test]
fn spec_errors_name_the_field() {
    let e = GridDomain::from_spec("family=annulus r_in=0.5 h=0.02").unwrap_err();
    assert!(e.to_string().contains("r_out"), "{e}");
    let e = GridDomain::from_spec("family=annulus r_in=0.5 r_out=1 h=0.02 colour=red").unwrap_err();
    assert!(e.to_string().contains("colour"), "{e}");
}
