//! Morse index and nondegeneracy from the constrained second variation
//! `ε²(-Δ_h) + W''(u)` on zero-mean interior fields, and the Morse
//! polynomial bookkeeping against the domain's Poincaré polynomial.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::TopologyInfo;
use crate::fieldsolver::{SolutionRecord, Stencil};
use crate::potential::Potential;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("eigensolver stalled after {steps} Lanczos steps (worst residual {residual:e})")]
    EigSolverStall { steps: usize, residual: f64 },
    #[error("record {index} is degenerate; Morse relations need nondegenerate critical points")]
    DegenerateInput { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Smallest eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// `‖(PJP - θ)v‖` per pair.
    pub residuals: Vec<f64>,
    /// Eigenvalues below `-tol_eig`.
    pub morse_index: usize,
    /// Some `|θ| ≤ tol_eig`.
    pub degenerate_flag: bool,
    pub tol_eig: f64,
    /// Negative eigenvalues counted by Sylvester inertia, when the unpivoted
    /// factorisation of the Hessian succeeds.
    pub inertia_index: Option<usize>,
    /// Largest `|mean(v)|` over the reported eigenvectors.
    pub max_mean: f64,
    pub shift: f64,
    pub lanczos_steps: usize,
}

#[derive(Debug, Clone)]
pub struct SpectrumOptions {
    /// Residual required of every reported pair.
    pub tol_residual: f64,
    /// Degeneracy threshold; `None` means `1e-6·ε²/h²`.
    pub tol_eig: Option<f64>,
    pub max_steps: Option<usize>,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-8,
            tol_eig: None,
            max_steps: None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// The `k` smallest eigenvalues of the second variation restricted to
/// `{Σv = 0}`, by shift-invert Lanczos with full reorthogonalisation.
pub fn linearized_spectrum(record: &SolutionRecord, p: &Potential, eps: f64, k: usize) -> Result<SpectrumReport, SpectralError> {
    linearized_spectrum_with(record, p, eps, k, &SpectrumOptions::default())
}

pub fn linearized_spectrum_with(
    record: &SolutionRecord,
    p: &Potential,
    eps: f64,
    k: usize,
    opts: &SpectrumOptions,
) -> Result<SpectrumReport, SpectralError> {
    let domain = record.field.domain();
    let u = record.field.values();
    let n = u.len();
    if k == 0 || n < 2 {
        return Err(SpectralError::InvalidInput("need k ≥ 1 and at least two unknowns".into()));
    }
    let dim = n - 1;
    let k = k.min(dim);
    let st = Stencil::new(domain);
    let tol_eig = opts.tol_eig.unwrap_or(1e-6 * eps * eps / (domain.h * domain.h));
    // J ≥ min W'' on any vector, so J - σ is positive definite.
    let wmin = u.iter().map(|&x| p.deriv2(x)).fold(f64::INFINITY, f64::min);
    let shift = wmin - 1.0;
    let fac = st
        .hessian(u, p, eps, -shift)
        .factor_ldlt(1e-14)
        .map_err(|e| SpectralError::InvalidInput(format!("shifted Hessian not factorisable: {e}")))?;
    let ones = vec![1.0; n];
    let w1 = fac.solve(&ones);
    let s1: f64 = w1.iter().sum();
    // (P(J - σ)P)⁻¹ on zero-mean vectors.
    let apply = |b: &[f64]| {
        let x = fac.solve(b);
        let mu = x.iter().sum::<f64>() / s1;
        let mut y: Vec<f64> = x.iter().zip(&w1).map(|(a, c)| a - mu * c).collect();
        remove_mean(&mut y);
        y
    };
    let op = |v: &[f64]| {
        let mut y = st.hessian_apply(u, p, eps, v);
        remove_mean(&mut y);
        y
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    remove_mean(&mut q0);
    let nq = dot(&q0, &q0).sqrt();
    q0.iter_mut().for_each(|x| *x /= nq);
    let max_steps = opts.max_steps.unwrap_or(dim).min(dim);
    let mut basis = vec![q0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut check_at = (2 * k + 20).min(max_steps);
    let mut worst = f64::INFINITY;
    loop {
        let j = basis.len() - 1;
        let mut w = apply(&basis[j]);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        // Two passes of classical Gram–Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dot(&w, &w).sqrt();
        let steps = alpha.len();
        let exhausted = steps >= max_steps || b <= 1e-14 * a.abs().max(1e-300);
        if steps >= check_at || exhausted {
            let m = steps;
            let t = nalgebra::DMatrix::from_fn(m, m, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let eig = nalgebra::SymmetricEigen::new(t);
            // Largest θ of the inverse are the smallest eigenvalues.
            let mut order: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let take = order.len().min(k);
            let mut vals = Vec::with_capacity(take);
            let mut res = Vec::with_capacity(take);
            let mut max_mean = 0.0f64;
            for &i in &order[..take] {
                let theta = eig.eigenvalues[i];
                let mut y = vec![0.0; n];
                for (c, q) in basis.iter().take(m).enumerate() {
                    let s = eig.eigenvectors[(c, i)];
                    y.iter_mut().zip(q).for_each(|(a, b)| *a += s * b);
                }
                let ny = dot(&y, &y).sqrt();
                y.iter_mut().for_each(|a| *a /= ny);
                max_mean = max_mean.max((y.iter().sum::<f64>() / n as f64).abs());
                let lam = shift + 1.0 / theta;
                let r = op(&y);
                let rr = r.iter().zip(&y).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
                vals.push(lam);
                res.push(rr);
            }
            worst = res.iter().copied().fold(0.0, f64::max);
            if take == k && worst <= opts.tol_residual {
                let pairs: Vec<(f64, f64)> = vals.into_iter().zip(res).collect();
                let mut pairs = pairs;
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let eigenvalues: Vec<f64> = pairs.iter().map(|x| x.0).collect();
                let residuals = pairs.iter().map(|x| x.1).collect();
                return Ok(SpectrumReport {
                    morse_index: eigenvalues.iter().filter(|&&l| l < -tol_eig).count(),
                    degenerate_flag: eigenvalues.iter().any(|l| l.abs() <= tol_eig),
                    eigenvalues,
                    residuals,
                    tol_eig,
                    inertia_index: constrained_inertia(record, p, eps),
                    max_mean,
                    shift,
                    lanczos_steps: m,
                });
            }
            if exhausted {
                return Err(SpectralError::EigSolverStall { steps, residual: worst });
            }
            check_at = (check_at + 20).min(max_steps);
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        basis.push(w);
        if basis.len() > max_steps + 1 {
            return Err(SpectralError::EigSolverStall { steps, residual: worst });
        }
    }
}

/// Number of negative eigenvalues of the constrained Hessian by inertia:
/// with `s = 1ᵀJ⁻¹1`, the bordered matrix gives
/// `neg(PJP) = neg(J) + [s > 0] - 1`. `None` if `J` is (nearly) singular or
/// the unpivoted factorisation breaks down.
pub fn constrained_inertia(record: &SolutionRecord, p: &Potential, eps: f64) -> Option<usize> {
    let st = Stencil::new(record.field.domain());
    let u = record.field.values();
    let fac = st.hessian(u, p, eps, 0.0).factor_ldlt(1e-12).ok()?;
    let ones = vec![1.0; u.len()];
    let s: f64 = fac.solve(&ones).iter().sum();
    if !s.is_finite() || s == 0.0 {
        return None;
    }
    (fac.negative_count() + usize::from(s > 0.0)).checked_sub(1)
}

/// Result of matching `Σ t^{μᵢ}` against `P_t + t(P_t - 1) + (1 + t)Q(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseVerdict {
    pub consistent: bool,
    /// Coefficients of `Σ t^{μᵢ}`.
    pub morse_polynomial: Vec<i64>,
    /// Quotient `Q` (coefficients may be negative when inconsistent).
    pub q: Vec<i64>,
    /// Nonzero when `(1 + t)` does not divide the difference.
    pub remainder: i64,
    /// First negative coefficient of `Q`.
    pub negative_at: Option<usize>,
}

/// Polynomial bookkeeping of the Morse relation for a multiset of indices.
pub fn morse_relation_check(indices: &[usize], topo: &TopologyInfo) -> MorseVerdict {
    let pt: Vec<i64> = topo.poincare().iter().map(|&b| b as i64).collect();
    let deg = indices.iter().copied().max().unwrap_or(0).max(pt.len());
    let mut r = vec![0i64; deg + 2];
    let mut m = vec![0i64; deg + 1];
    for &i in indices {
        m[i] += 1;
        r[i] += 1;
    }
    // R = M - P_t - t(P_t - 1).
    for (j, &b) in pt.iter().enumerate() {
        r[j] -= b;
        r[j + 1] -= b;
    }
    r[1] += 1;
    while r.len() > 1 && *r.last().unwrap() == 0 {
        r.pop();
    }
    let d = r.len() - 1;
    let mut q = vec![0i64; d.max(1)];
    let remainder = if d == 0 {
        r[0]
    } else {
        q[0] = r[0];
        for j in 1..d {
            q[j] = r[j] - q[j - 1];
        }
        r[d] - q[d - 1]
    };
    while m.len() > 1 && *m.last().unwrap() == 0 {
        m.pop();
    }
    let negative_at = q.iter().position(|&c| c < 0);
    MorseVerdict {
        consistent: remainder == 0 && negative_at.is_none(),
        morse_polynomial: m,
        q,
        remainder,
        negative_at,
    }
}

/// Morse relation over solution records; refuses degenerate records.
pub fn morse_relation_check_records(records: &[SolutionRecord], topo: &TopologyInfo) -> Result<MorseVerdict, SpectralError> {
    let mut idx = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        match (r.morse_index, r.nondegenerate) {
            (Some(m), Some(true)) => idx.push(m),
            _ => return Err(SpectralError::DegenerateInput { index: i }),
        }
    }
    Ok(morse_relation_check(&idx, topo))
}

/// Counting bounds: at least `P₁` critical points below the level and
/// `P₁ - 1` above it in the nondegenerate case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountVerdict {
    pub below: usize,
    pub above: usize,
    pub below_ok: bool,
    pub above_ok: bool,
}

pub fn morse_count_check(below: usize, above: usize, topo: &TopologyInfo) -> CountVerdict {
    CountVerdict {
        below,
        above,
        below_ok: below >= topo.p1,
        above_ok: above + 1 >= topo.p1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRangeVerdict {
    pub passed: bool,
    pub max_index: usize,
    /// `(position, index)` of records above the bound.
    pub offenders: Vec<(usize, usize)>,
    /// Positions of records without a computed index.
    pub missing: Vec<usize>,
}

/// Every record below the level must have Morse index at most `dim`.
pub fn index_range_check(records: &[SolutionRecord], dim: usize) -> IndexRangeVerdict {
    let mut offenders = Vec::new();
    let mut missing = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match r.morse_index {
            Some(m) if m > dim => offenders.push((i, m)),
            Some(_) => {}
            None => missing.push(i),
        }
    }
    IndexRangeVerdict {
        passed: offenders.is_empty() && missing.is_empty(),
        max_index: dim,
        offenders,
        missing,
    }
}

/// Attaches `morse_index` and `nondegenerate` from a spectrum.
pub fn annotate(record: &mut SolutionRecord, report: &SpectrumReport) {
    record.morse_index = Some(report.morse_index);
    record.nondegenerate = Some(!report.degenerate_flag);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn annulus() -> TopologyInfo {
        TopologyInfo {
            cat: 2,
            betti: vec![1, 1],
            p1: 2,
            morse_lower: 3,
        }
    }

    #[test]
    fn morse_relation_examples() {
        let v = morse_relation_check(&[0, 1, 2], &annulus());
        assert!(v.consistent);
        assert!(v.q.iter().all(|&c| c == 0));
        let v = morse_relation_check(&[0, 0, 1], &annulus());
        assert!(!v.consistent);
        assert_eq!((v.q.clone(), v.remainder), (vec![1, -1], 0));
        let v = morse_relation_check(&[0, 0, 1, 1, 2], &annulus());
        assert!(v.consistent);
        assert_eq!(v.q, vec![1]);
        // A contractible domain with a single minimum.
        let disk = TopologyInfo {
            cat: 1,
            betti: vec![1],
            p1: 1,
            morse_lower: 1,
        };
        assert!(morse_relation_check(&[0], &disk).consistent);
        assert!(!morse_relation_check(&[0, 0], &disk).consistent);
    }
}
