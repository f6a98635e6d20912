use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use volac_core::domain::{GridDomain, Shape};
use volac_core::fieldsolver::*;
use volac_core::potential::Potential;
use volac_core::quartic;
use volac_core::spectral::*;

/// `P J P + c·11ᵀ/n` assembled from the domain's neighbour lists; the mean
/// direction is pushed to `c` so the rest is the constrained spectrum.
fn dense_constrained(f: &Field, p: &Potential, eps: f64) -> Vec<f64> {
    let d = f.domain();
    let n = d.n_interior();
    let h2 = d.h * d.h;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for s in 0..n {
        let nb: Vec<_> = d.neighbours(s).collect();
        j[(s, s)] = eps * eps * nb.len() as f64 / h2 + p.deriv2(f.values()[s]);
        for t in nb.into_iter().flatten() {
            j[(s, t)] = -eps * eps / h2;
        }
    }
    let pm = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let big = 1e6;
    let m = &pm * j * &pm + DMatrix::from_element(n, n, big / n as f64);
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().filter(|&x| x < 0.5 * big).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn coarse_disk() -> Arc<GridDomain> {
    Arc::new(GridDomain::new(Shape::Disk { radius: 1.0 }, 0.2, Some(0.3)).unwrap())
}

#[test]
fn lanczos_matches_dense_eigensolver() {
    let p = quartic(1.0, 2.0).unwrap();
    let eps = 0.3;
    // Values near 0.5, where W'' < 0, give several negative directions.
    let f = Field::from_fn(coarse_disk(), |x, y| 0.5 + 0.3 * x - 0.2 * y * y);
    let rec = SolutionRecord::from_field(f.clone(), &p, eps);
    let dense = dense_constrained(&f, &p, eps);
    let k = 8;
    let rep = linearized_spectrum(&rec, &p, eps, k).unwrap();
    assert_eq!(rep.eigenvalues.len(), k);
    for (a, b) in rep.eigenvalues.iter().zip(&dense) {
        assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} vs {b}");
    }
    assert!(rep.residuals.iter().all(|&r| r <= 1e-8));
    assert!(rep.max_mean < 1e-10);
    let neg = dense.iter().filter(|&&x| x < -rep.tol_eig).count();
    assert!(neg > 0 && neg < k, "neg = {neg}, dense = {:?}", &dense[..k.min(dense.len())]);
    assert_eq!(rep.morse_index, neg);
    assert_eq!(rep.inertia_index, Some(neg));
    assert_eq!(constrained_inertia(&rec, &p, eps), Some(neg));
}

#[test]
fn inertia_counts_many_negative_directions() {
    let p = quartic(1.0, 2.0).unwrap();
    let eps = 0.05;
    let f = Field::from_fn(coarse_disk(), |x, _| 0.55 + 0.05 * x);
    let rec = SolutionRecord::from_field(f.clone(), &p, eps);
    let dense = dense_constrained(&f, &p, eps);
    let neg = dense.iter().filter(|&&x| x < 0.0).count();
    assert!(neg > 10);
    assert_eq!(constrained_inertia(&rec, &p, eps), Some(neg));
}

#[test]
fn one_dimensional_spectrum_interlaces() {
    // W = s²/2: J = ε²(-Δ_h) + 1 with eigenvalues 1 + (4ε²/h²) sin²(kπh/2).
    let p = Potential::quadratic(1.0);
    let n = 100;
    let h = 1.0 / n as f64;
    let eps = 0.1;
    let d = Arc::new(GridDomain::new(Shape::Interval { length: 1.0 }, h, None).unwrap());
    let rec = SolutionRecord::from_field(Field::zeros(d), &p, eps);
    let mu = |k: usize| 1.0 + 4.0 * eps * eps / (h * h) * (k as f64 * std::f64::consts::PI * h / 2.0).sin().powi(2);
    let rep = linearized_spectrum(&rec, &p, eps, 5).unwrap();
    for (i, &nu) in rep.eigenvalues.iter().enumerate() {
        assert!(nu >= mu(i + 1) - 1e-9 && nu <= mu(i + 2) + 1e-9, "ν_{i} = {nu}");
    }
    // Odd modes about x = 1/2 have zero mean and survive the constraint.
    assert!((rep.eigenvalues[0] - mu(2)).abs() < 1e-9);
    assert!((rep.eigenvalues[2] - mu(4)).abs() < 1e-9);
    assert_eq!(rep.morse_index, 0);
    assert_eq!(rep.inertia_index, Some(0));
}

#[test]
fn annotate_records_index_and_degeneracy() {
    let p = Potential::quadratic(1.0);
    let d = Arc::new(GridDomain::new(Shape::Interval { length: 1.0 }, 0.02, None).unwrap());
    let mut rec = SolutionRecord::from_field(Field::zeros(d), &p, 0.1);
    let rep = linearized_spectrum(&rec, &p, 0.1, 3).unwrap();
    annotate(&mut rec, &rep);
    assert_eq!(rec.morse_index, Some(0));
    assert_eq!(rec.nondegenerate, Some(true));
}

#[test]
fn morse_relation_on_synthetic_multisets() {
    let annulus = GridDomain::new(Shape::Annulus { r_in: 0.5, r_out: 1.0 }, 0.05, None)
        .unwrap()
        .topology()
        .unwrap();
    assert_eq!((annulus.cat, annulus.p1), (2, 2));
    let v = morse_relation_check(&[0, 1, 2], &annulus);
    assert!(v.consistent && v.q.iter().all(|&c| c == 0));
    let v = morse_relation_check(&[0, 0, 1, 1, 2], &annulus);
    assert!(v.consistent);
    assert_eq!(v.q, vec![1]);
    // 2 + t - (1 + t) - t² = (1 + t)(1 - t).
    let v = morse_relation_check(&[0, 0, 1], &annulus);
    assert!(!v.consistent);
    assert_eq!(v.q, vec![1, -1]);
    assert_eq!(v.negative_at, Some(1));
    let c = morse_count_check(2, 1, &annulus);
    assert!(c.below_ok && c.above_ok);
    assert!(!morse_count_check(1, 0, &annulus).below_ok);
}
