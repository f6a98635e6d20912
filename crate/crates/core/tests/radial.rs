use std::f64::consts::PI;

use proptest::prelude::*;
use volac_core::radial::*;
use volac_core::{certify, quartic, tilt, Potential, PotentialCertificate};

fn setup() -> (Potential, PotentialCertificate) {
    let p = quartic(1.0, 2.0).unwrap();
    let c = certify(&p).unwrap();
    (p, c)
}

fn solve(dim: usize, gamma: f64, h: f64) -> (Potential, PotentialCertificate, RadialProfile) {
    let (p, c) = setup();
    let grid = RadialGrid::for_gamma(&c, dim, gamma, h).unwrap();
    let prof = minimize_radial(&p, &c, gamma, &grid, &RadialOptions::default()).unwrap();
    (p, c, prof)
}

#[test]
fn ball_volumes_and_weights() {
    assert!((unit_ball_volume(1) - 2.0).abs() < 1e-15);
    assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
    assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
    assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-14);
    for dim in 1..=3 {
        let g = RadialGrid::new(dim, 3.0, 60).unwrap();
        let total: f64 = g.weights().iter().sum();
        let exact = unit_ball_volume(dim) * 3f64.powi(dim as i32);
        assert!((total - exact).abs() < 1e-12 * exact, "N={dim}");
        // Origin stencil: s_{1/2} / (w_0 h) = 2N / h².
        let (w, s, h) = (g.weights(), g.face_areas(), g.h());
        assert!((s[0] / (w[0] * h) - 2.0 * dim as f64 / (h * h)).abs() < 1e-9 / (h * h));
    }
    assert!(RadialGrid::new(0, 1.0, 10).is_err());
    assert!(RadialGrid::new(2, -1.0, 10).is_err());
}

#[test]
fn radius_bound_constants() {
    let (_, c) = setup();
    let s0 = (9.0 + 17f64.sqrt()) / 8.0;
    let s1 = (9.0 - 17f64.sqrt()) / 8.0;
    let b2 = radius_bounds(&c, 2);
    assert!((b2.c_minus - (1.0 / (s0 * PI)).sqrt()).abs() < 1e-10);
    assert!((b2.c_plus - 1.5 * (1.0 / (s1 * PI)).sqrt()).abs() < 1e-10);
    assert!((b2.c_minus - 0.4405).abs() < 5e-5 && (b2.c_plus - 1.0839).abs() < 5e-5);
    let b1 = radius_bounds(&c, 1);
    assert!((b1.c_minus - 1.0 / (2.0 * s0)).abs() < 1e-10);
    assert!((b1.c_plus - 1.5 / (2.0 * s1)).abs() < 1e-10);
    for dim in 1..=3 {
        let b = radius_bounds(&c, dim);
        assert!(b.c_minus < b.c_plus);
    }
}

/// Independent oracle: the shift by bisection on the monotone mass function.
fn project_by_bisection(y: &[f64], w: &[f64], gamma: f64, exact: bool) -> Vec<f64> {
    let mass = |t: f64| -> f64 { y.iter().zip(w).map(|(a, b)| (a - t).max(0.0) * b).sum() };
    if !exact && mass(0.0) <= gamma {
        return y.iter().map(|v| v.max(0.0)).collect();
    }
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    y.iter().map(|v| (v - t).max(0.0)).collect()
}

proptest! {
    #[test]
    fn projection_matches_bisection(
        y in prop::collection::vec(-3.0f64..3.0, 1..40),
        wseed in prop::collection::vec(0.1f64..2.0, 40),
        gamma in 0.1f64..10.0,
        exact in any::<bool>(),
    ) {
        let w = &wseed[..y.len()];
        let u = if exact { project_mass_exact(&y, w, gamma) } else { project_mass(&y, w, gamma) };
        let oracle = project_by_bisection(&y, w, gamma, exact);
        let m: f64 = u.iter().zip(w).map(|(a, b)| a * b).sum();
        prop_assert!(u.iter().all(|v| *v >= 0.0));
        prop_assert!(m <= gamma * (1.0 + 1e-12));
        if exact {
            prop_assert!((m - gamma).abs() <= 1e-9 * gamma);
        }
        for (a, b) in u.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn ground_state_two_dimensions() {
    // h = 0.04 puts more than 200 cells inside the support.
    let t = std::time::Instant::now();
    let (p, c, prof) = solve(2, 200.0, 0.04);
    assert!(t.elapsed().as_secs_f64() < 60.0);
    let sr = support_radius(&prof, 1e-8);
    assert!(sr.index >= 200, "support spans {} cells", sr.index);
    assert!(prof.energy < 0.0);
    assert!((prof.mass - 200.0).abs() <= 1e-6 * 200.0);
    let mult = extract_multiplier(&prof, &p).unwrap();
    assert!(mult.lambda < 0.0 && mult.lambda >= c.w_minus, "λ = {}", mult.lambda);
    assert!((mult.lambda - prof.lambda).abs() < 1e-12);
    assert!(mult.spread < 1e-8);
    assert!(sr.outward_derivative.abs() <= 10.0 * prof.grid.h());
    assert!(prof.values.iter().all(|&u| (0.0..=c.s0 + 1e-8).contains(&u)));
    assert!(prof.values.windows(2).all(|w| w[1] <= w[0]), "profile not nonincreasing");
    let b = radius_bounds(&c, 2);
    assert!(b.lower(200.0, 2) <= prof.support_radius && prof.support_radius <= b.upper(200.0, 2));
    assert!(prof.energy <= comparison_energy(&c, 200.0, 2));
}

#[test]
fn energy_history_is_monotone() {
    let (p, c) = setup();
    let grid = RadialGrid::for_gamma(&c, 2, 100.0, 0.05).unwrap();
    let opts = RadialOptions {
        record_history: true,
        ..Default::default()
    };
    let prof = minimize_radial(&p, &c, 100.0, &grid, &opts).unwrap();
    let hist = &prof.diagnostics.energy_history;
    assert!(hist.len() > 10);
    assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
    assert!((hist.last().unwrap() - prof.energy).abs() < 1e-9 * prof.energy.abs());
}

#[test]
fn below_threshold_minimiser_is_zero() {
    let (p, c) = setup();
    for gamma in [1e-3, 1.0, 20.0] {
        let grid = RadialGrid::for_gamma(&c, 2, gamma, 0.05).unwrap();
        let prof = minimize_radial(&p, &c, gamma, &grid, &RadialOptions::default()).unwrap();
        assert!(prof.energy <= 0.0);
        assert_eq!(prof.max_value(), 0.0);
        assert_eq!(support_radius(&prof, 1e-8).radius, 0.0);
        let po = pohozaev_residual(&prof, &p);
        assert_eq!((po.lhs, po.rhs, po.residual), (0.0, 0.0, 0.0));
        assert!(matches!(extract_multiplier(&prof, &p), Err(RadialError::EmptySupport { .. })));
    }
}

#[test]
fn grid_too_short_is_rejected() {
    let (p, c) = setup();
    let grid = RadialGrid::with_spacing(2, 10.0, 0.05).unwrap();
    assert!(matches!(
        minimize_radial(&p, &c, 200.0, &grid, &RadialOptions::default()),
        Err(RadialError::DomainTooSmall { .. })
    ));
}

#[test]
fn one_dimensional_refinement_is_second_order() {
    let es: Vec<f64> = [0.05, 0.025, 0.0125].iter().map(|&h| solve(1, 50.0, h).2.energy).collect();
    let (d1, d2) = ((es[0] - es[1]).abs(), (es[1] - es[2]).abs());
    assert!(d1 / d2 > 3.0, "successive differences {d1:e}, {d2:e}");
    assert!(d1 < 0.1 * 0.05f64.powi(2));
}

#[test]
fn two_dimensional_refinement_orders() {
    let profs: Vec<RadialProfile> = [0.04, 0.02, 0.01].iter().map(|&h| solve(2, 200.0, h).2).collect();
    let order = |f: &dyn Fn(&RadialProfile) -> f64| {
        let (a, b, c) = (f(&profs[0]), f(&profs[1]), f(&profs[2]));
        ((a - b).abs() / (b - c).abs()).log2()
    };
    assert!(order(&|p| p.energy) >= 1.0);
    assert!(order(&|p| p.lambda) >= 1.0);
    // The support radius is a multiple of h; it converges to within a cell.
    for p in &profs {
        assert!((p.support_radius - profs[2].support_radius).abs() <= 2.0 * p.grid.h() + 1e-12);
    }
}

#[test]
fn pohozaev_identity_and_signs() {
    let profs: Vec<(Potential, RadialProfile)> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&h| {
            let (p, _, pr) = solve(2, 200.0, h);
            (p, pr)
        })
        .collect();
    let reps: Vec<PohozaevReport> = profs.iter().map(|(p, pr)| pohozaev_residual(pr, p)).collect();
    for r in &reps {
        assert!(r.relative() <= 0.05, "{r:?}");
        assert!(r.sign_ok && r.b_negative);
        assert!(r.sign_quantity < 0.0 && r.b < 0.0);
    }
    assert!(reps[1].residual <= 0.5 * reps[0].residual);
    assert!(reps[2].residual <= 0.5 * reps[1].residual);
}

#[test]
fn pohozaev_other_dimensions() {
    for (dim, gamma) in [(1, 50.0), (3, 2000.0)] {
        let (p, _, pr) = solve(dim, gamma, 0.05);
        let r = pohozaev_residual(&pr, &p);
        assert!(r.relative() <= 0.05, "N={dim}: {r:?}");
        assert!(r.sign_ok && r.b_negative, "N={dim}");
    }
}

#[test]
fn dilation_law_by_interpolation() {
    let (p, _, prof) = solve(2, 200.0, 0.02);
    let (a, b) = prof.energy_parts(&p);
    for rho in [0.5, 2.0] {
        // ψ_ρ(r) = U(r/ρ), sampled on a grid with the same spacing.
        let grid = RadialGrid::with_spacing(2, prof.grid.r_max * rho, prof.grid.h()).unwrap();
        let vals: Vec<f64> = (0..=grid.n_cells).map(|i| prof.value_at(grid.node(i) / rho)).collect();
        let e = radial_energy(&grid, &vals, &p);
        let law = a + b * rho * rho;
        assert!((e - law).abs() < 2e-3 * law.abs(), "ρ={rho}: {e} vs {law}");
    }
}

#[test]
fn comparison_bound() {
    let (_, c) = setup();
    assert!(comparison_energy(&c, 1e4, 2) < 0.0);
    assert!(comparison_energy(&c, 1e5, 2) < comparison_energy(&c, 1e4, 2));
    // E* ~ -c₂γ: the ratio settles for large γ.
    let ratio = |g: f64| comparison_energy(&c, g, 2) / g;
    assert!((ratio(1e7) - ratio(1e8)).abs() < 0.01 * ratio(1e8).abs());
    // Direct quadrature of the ansatz on a fine grid stays below the bound.
    for (dim, gamma) in [(1, 50.0), (2, 200.0), (2, 5000.0), (3, 2000.0)] {
        let t0 = comparison_t0(&c, gamma, dim);
        assert!(t0 >= 1.0);
        let grid = RadialGrid::with_spacing(dim, t0 + 3.0, 1e-3).unwrap();
        let v = plateau_ansatz(&grid, c.s0, t0);
        let (p, _) = setup();
        let e = radial_energy(&grid, &v, &p);
        assert!(e <= comparison_energy(&c, gamma, dim), "N={dim} γ={gamma}");
        let m = radial_mass(&grid, &v);
        assert!(m >= 0.5 * gamma * (1.0 - 1e-3) && m <= gamma * (1.0 + 1e-3), "mass {m}");
    }
}

#[test]
fn sweep_threshold_and_monotonicity() {
    let (p, c) = setup();
    let sweep = SweepOptions {
        gamma_min: 16.0,
        ratio: 2.0,
        count: 6,
        h: 0.05,
        solver: RadialOptions::default(),
    };
    let rep = gamma_threshold(&p, &c, 2, &sweep).unwrap();
    let thr = rep.gamma_threshold;
    assert!(thr.is_finite() && thr >= 16.0);
    for e in &rep.entries {
        assert_eq!(e.qualifies, e.gamma >= thr, "γ = {}", e.gamma);
        assert!(e.energy <= 1e-12);
    }
    assert!(rep.entries.windows(2).all(|w| w[1].energy <= w[0].energy + 1e-9));
    let all_fail = [SweepEntry {
        gamma: 1.0,
        energy: 0.0,
        lambda: 0.0,
        support_radius: 0.0,
        lower_bound: 0.0,
        upper_bound: 0.0,
        pohozaev_residual: 0.0,
        mass: 0.0,
        qualifies: false,
        error: None,
    }];
    assert!(matches!(threshold_from_entries(&all_fail), Err(RadialError::SweepExhausted)));
}

#[test]
fn tilt_shifts_multiplier_on_fixed_profile() {
    let (p, _, prof) = solve(2, 200.0, 0.05);
    let base = extract_multiplier(&prof, &p).unwrap().lambda;
    for a in [0.1, 1.0] {
        let shifted = extract_multiplier(&prof, &tilt(&p, a)).unwrap().lambda;
        assert!((shifted - base - a).abs() < 1e-12, "A={a}");
    }
}

#[test]
fn tilted_solve_reproduces_profile_with_exact_mass() {
    let (p, c) = setup();
    let grid = RadialGrid::for_gamma(&c, 2, 200.0, 0.05).unwrap();
    let opts = RadialOptions {
        exact_mass: true,
        ..Default::default()
    };
    let base = minimize_radial(&p, &c, 200.0, &grid, &opts).unwrap();
    for a in [0.1, 1.0] {
        let t = minimize_radial(&tilt(&p, a), &c, 200.0, &grid, &opts).unwrap();
        let diff = base.values.iter().zip(&t.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "A={a}: field differs by {diff:e}");
        assert!((t.lambda - base.lambda - a).abs() < 1e-8, "A={a}");
    }
}

#[test]
fn profile_round_trip() {
    let (_, _, prof) = solve(2, 100.0, 0.05);
    let dir = tempfile::tempdir().unwrap();
    let (csv, json) = (dir.path().join("u.csv"), dir.path().join("u.json"));
    prof.save(&csv, &json).unwrap();
    let back = RadialProfile::load(&csv, &json).unwrap();
    assert_eq!(back.values, prof.values);
    assert_eq!(back.lambda, prof.lambda);
    assert_eq!(back.grid, prof.grid);
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    for key in ["gamma", "lambda", "energy", "support_radius", "dim", "h", "diagnostics"] {
        assert!(side.get(key).is_some(), "{key}");
    }
}
