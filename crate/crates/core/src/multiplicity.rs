//! Photography seeding, barycentres, sublevel energies and enumeration of
//! distinct low-energy solutions on a grid domain.
//!
//! A radial profile `U_γ` with `γ = V/ε^N` is transplanted to `x₀` as
//! `Φ(x) = U_γ(|x - x₀|/ε)`, which has energy `ε^N E(U_γ)` and barycentre
//! `x₀`. Flows started from such seeds populate the catalogue.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::GridDomain;
use crate::fieldsolver::{
    gradient_flow, newton_refine, Field, FieldError, FlowOptions, NewtonOptions, SolutionRecord,
};
use crate::potential::{Potential, PotentialCertificate};
use crate::radial::{
    minimize_radial, radius_bounds, support_radius, RadialError, RadialGrid, RadialOptions, RadialProfile,
};
use crate::spectral::{annotate, linearized_spectrum, SpectrumReport};

#[derive(Debug, thiserror::Error)]
pub enum MultiplicityError {
    #[error("radial data missing: {0}")]
    MissingRadialData(String),
    #[error("bump of radius {bump:.4} at ({x:.4}, {y:.4}) overflows the domain (boundary distance {distance:.4})")]
    BumpOverflowsDomain { x: f64, y: f64, bump: f64, distance: f64 },
    #[error("seed ({x:.4}, {y:.4}) is not in the inner region Ω_r^-")]
    OutsideInnerRegion { x: f64, y: f64 },
    #[error("field is identically zero")]
    ZeroField,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Parameters of the counting theorem for a given `(V, ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleParams {
    #[serde(rename = "V")]
    pub volume: f64,
    pub eps: f64,
    /// `V₁ = (r / C⁺)^N`.
    pub v1: f64,
    /// `ε₁(V) = (V / γ̃₀)^{1/N}`.
    pub eps1: f64,
    /// `γ = V / ε^N`.
    pub gamma: f64,
    pub gamma0: f64,
    /// `c = ε^N E(U_γ)`.
    pub c_level: f64,
    pub r_deform: f64,
    pub c_plus: f64,
    /// `V ≤ V₁` and `ε ≤ ε₁(V)`.
    pub admissible: bool,
}

/// Admissible box and sublevel for `(V, ε)` on `domain`. `profile` must be
/// the radial minimiser at `γ = V/ε^N` in dimension 2.
pub fn admissible(
    domain: &GridDomain,
    cert: &PotentialCertificate,
    gamma0: f64,
    profile: &RadialProfile,
    volume: f64,
    eps: f64,
) -> Result<AdmissibleParams, MultiplicityError> {
    if !(volume > 0.0 && eps > 0.0) {
        return Err(MultiplicityError::InvalidInput("V and eps must be positive".into()));
    }
    let n = domain.dim();
    let gamma = volume / eps.powi(n as i32);
    if profile.grid.dim != n || (profile.gamma - gamma).abs() > 1e-9 * gamma {
        return Err(MultiplicityError::MissingRadialData(format!(
            "need a profile at γ = {gamma} in dimension {n}, got γ = {} in dimension {}",
            profile.gamma, profile.grid.dim
        )));
    }
    let c_plus = radius_bounds(cert, n).c_plus;
    let v1 = (domain.r_deform / c_plus).powi(n as i32);
    let eps1 = (volume / gamma0).powf(1.0 / n as f64);
    Ok(AdmissibleParams {
        volume,
        eps,
        v1,
        eps1,
        gamma,
        gamma0,
        c_level: eps.powi(n as i32) * profile.energy,
        r_deform: domain.r_deform,
        c_plus,
        admissible: volume <= v1 && eps <= eps1 * (1.0 + 1e-12),
    })
}

/// Radial minimiser at `γ = V/ε^N` on a grid of spacing `h`.
pub fn radial_for(
    p: &Potential,
    cert: &PotentialCertificate,
    dim: usize,
    volume: f64,
    eps: f64,
    h: f64,
) -> Result<RadialProfile, MultiplicityError> {
    let gamma = volume / eps.powi(dim as i32);
    let grid = RadialGrid::for_gamma(cert, dim, gamma, h)?;
    Ok(minimize_radial(p, cert, gamma, &grid, &RadialOptions::default())?)
}

/// `Φ(x) = U_γ(|x - x₀|/ε)` sampled by linear interpolation and rescaled to
/// the profile's mass `ε^N γ` exactly.
pub fn photography(
    domain: &Arc<GridDomain>,
    profile: &RadialProfile,
    x0: (f64, f64),
    eps: f64,
) -> Result<Field, MultiplicityError> {
    if !domain.in_inner(x0.0, x0.1) {
        return Err(MultiplicityError::OutsideInnerRegion { x: x0.0, y: x0.1 });
    }
    let bump = eps * support_radius(profile, 1e-8).radius;
    let distance = domain.signed_distance(x0.0, x0.1);
    if !(bump < distance) {
        return Err(MultiplicityError::BumpOverflowsDomain {
            x: x0.0,
            y: x0.1,
            bump,
            distance,
        });
    }
    let mut f = Field::from_fn(domain.clone(), |x, y| profile.value_at((x - x0.0).hypot(y - x0.1) / eps));
    f.scale_to_volume(eps.powi(domain.dim() as i32) * profile.gamma)?;
    Ok(f)
}

/// Sum of photographs at several centres (each of the profile's mass).
pub fn multi_photography(
    domain: &Arc<GridDomain>,
    profile: &RadialProfile,
    centres: &[(f64, f64)],
    eps: f64,
) -> Result<Field, MultiplicityError> {
    let mut acc = vec![0.0; domain.n_interior()];
    for &c in centres {
        let f = photography(domain, profile, c, eps)?;
        acc.iter_mut().zip(f.values()).for_each(|(a, b)| *a += b);
    }
    Ok(Field::new(domain.clone(), acc)?)
}

/// `β(u) = Σ x|u| / Σ|u|`.
pub fn barycenter(field: &Field) -> Result<(f64, f64), MultiplicityError> {
    field.barycenter().ok_or(MultiplicityError::ZeroField)
}

/// `m(ε, εR_γ, V) = ε^N E(U_γ)` from the radial minimiser.
pub fn sublevel_m(profile: &RadialProfile, eps: f64) -> f64 {
    eps.powi(profile.grid.dim as i32) * profile.energy
}

/// Upper estimate of `m*(ε, ρ, V)`, the infimum over fields supported
/// outside `B_ρ(0)` with barycentre at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MStarEstimate {
    pub value: f64,
    /// How the witness is built.
    pub construction: String,
    pub rho: f64,
    /// Mass of each half, `γ/2`.
    pub half_gamma: f64,
    /// Distance of each bump centre from the origin.
    pub offset: f64,
}

/// Witness: two mirrored radial minimisers of mass `γ/2` centred at
/// `±(ρ + εR_{γ/2}, 0)`. Their barycentre is the origin and their supports
/// avoid `B_ρ`, so `2ε^N E(U_{γ/2})` bounds `m*` from above.
pub fn sublevel_m_star(
    p: &Potential,
    cert: &PotentialCertificate,
    dim: usize,
    rho: f64,
    eps: f64,
    volume: f64,
    h: f64,
) -> Result<MStarEstimate, MultiplicityError> {
    let half = radial_for(p, cert, dim, 0.5 * volume, eps, h)?;
    let r = support_radius(&half, 1e-8).radius;
    Ok(MStarEstimate {
        value: 2.0 * eps.powi(dim as i32) * half.energy,
        construction: "two mirrored radial minimisers of mass γ/2".into(),
        rho,
        half_gamma: half.gamma,
        offset: rho + eps * r,
    })
}

/// Seeds for [`enumerate`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedSpec {
    /// Lattice pitch; `None` means `2εR_γ`.
    pub pitch: Option<f64>,
    /// Explicit centres, used instead of the lattice when present.
    pub points: Option<Vec<(f64, f64)>>,
    /// Also try Newton from symmetric pairs of half-mass bumps.
    pub two_bump: bool,
}

#[derive(Debug, Clone)]
pub struct EnumerateOptions {
    pub flow: FlowOptions,
    /// Polish converged flows with Newton.
    pub newton: Option<NewtonOptions>,
    /// Eigenvalues to compute per record (0 to skip).
    pub spectrum_k: usize,
    /// Relative `L²` tolerance (times `√V`) and barycentre tolerance (times
    /// `h`) for deduplication.
    pub dedup_l2: f64,
    pub dedup_bary: f64,
    pub workers: usize,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self {
            // Newton finishes the job from a loose flow residual.
            flow: FlowOptions {
                tol: Some(1e-5),
                max_iter: 5000,
                ..FlowOptions::default()
            },
            newton: Some(NewtonOptions::default()),
            spectrum_k: 6,
            dedup_l2: 1e-3,
            dedup_bary: 2.0,
            workers: 1,
        }
    }
}

/// Outcome of one seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: Vec<(f64, f64)>,
    /// Position of the resulting record in the catalogue, after dedup.
    pub record: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SolutionCatalog {
    pub records: Vec<SolutionRecord>,
    pub spectra: Vec<Option<SpectrumReport>>,
    pub seeds: Vec<SeedOutcome>,
    /// `(L², barycentre)` tolerances actually used.
    pub dedup_tolerance: (f64, f64),
    pub c_level: f64,
    pub distinct_below_c: usize,
    pub distinct_total: usize,
}

impl SolutionCatalog {
    pub fn below_c(&self) -> impl Iterator<Item = &SolutionRecord> {
        self.records.iter().filter(move |r| r.energy <= self.c_level)
    }
}

/// Lattice points of pitch `pitch` in `Ω_r^-` where a bump of radius
/// `bump` fits.
pub fn seed_lattice(domain: &GridDomain, pitch: f64, bump: f64) -> Vec<(f64, f64)> {
    let (x0, y0) = domain.origin;
    let (x1, y1) = (x0 + (domain.nx - 1) as f64 * domain.h, y0 + (domain.ny - 1) as f64 * domain.h);
    let (i0, i1) = ((x0 / pitch).ceil() as i64, (x1 / pitch).floor() as i64);
    let (j0, j1) = ((y0 / pitch).ceil() as i64, (y1 / pitch).floor() as i64);
    let mut out = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let (x, y) = (i as f64 * pitch, j as f64 * pitch);
            if domain.in_inner(x, y) && domain.signed_distance(x, y) > bump {
                out.push((x, y));
            }
        }
    }
    out
}

fn solve_seed(
    domain: &Arc<GridDomain>,
    p: &Potential,
    profile: &RadialProfile,
    half: Option<&RadialProfile>,
    seed: &[(f64, f64)],
    params: &AdmissibleParams,
    opts: &EnumerateOptions,
) -> Result<(SolutionRecord, Option<SpectrumReport>), MultiplicityError> {
    let eps = params.eps;
    let rec = if seed.len() == 1 {
        let init = photography(domain, profile, seed[0], eps)?;
        let flow = gradient_flow(&init, p, params.volume, eps, &opts.flow);
        match (&opts.newton, flow) {
            (None, flow) => flow?,
            (Some(n), Ok(flow)) => newton_refine(&flow, p, eps, n)?,
            // Slow drift along soft modes: Newton decides from the last iterate.
            (Some(n), Err(FieldError::NonConvergence(last))) => {
                let mut rec = newton_refine(&last, p, eps, n)?;
                rec.diagnostics.warnings.push(format!(
                    "flow stopped at residual {:e} after {} iterations; refined by Newton",
                    last.residual_inf, last.iterations
                ));
                rec
            }
            (Some(_), Err(e)) => return Err(e.into()),
        }
    } else {
        // Saddle candidates: Newton directly from a symmetric pair.
        let half = half.ok_or_else(|| MultiplicityError::MissingRadialData("half-mass profile".into()))?;
        let mut init = multi_photography(domain, half, seed, eps)?;
        init.scale_to_volume(params.volume)?;
        let start = SolutionRecord::from_field(init, p, eps);
        let n = opts.newton.clone().unwrap_or_default();
        newton_refine(&start, p, eps, &n)?
    };
    let mut rec = rec;
    let spec = if opts.spectrum_k > 0 {
        match linearized_spectrum(&rec, p, eps, opts.spectrum_k) {
            Ok(s) => {
                annotate(&mut rec, &s);
                Some(s)
            }
            Err(e) => {
                rec.diagnostics.warnings.push(format!("spectrum: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok((rec, spec))
}

/// Flows from photography seeds (and optional two-bump Newton seeds),
/// deduplicated and sorted by `(energy, barycentre)`.
pub fn enumerate(
    domain: &Arc<GridDomain>,
    p: &Potential,
    cert: &PotentialCertificate,
    params: &AdmissibleParams,
    profile: &RadialProfile,
    seeds: &SeedSpec,
    opts: &EnumerateOptions,
) -> Result<SolutionCatalog, MultiplicityError> {
    let eps = params.eps;
    let bump = eps * support_radius(profile, 1e-8).radius;
    let mut jobs: Vec<Vec<(f64, f64)>> = match &seeds.points {
        Some(pts) => pts.iter().map(|&x| vec![x]).collect(),
        None => seed_lattice(domain, seeds.pitch.unwrap_or(2.0 * bump), bump)
            .into_iter()
            .map(|x| vec![x])
            .collect(),
    };
    let half = if seeds.two_bump {
        let dh = profile.grid.h();
        let half = radial_for(p, cert, domain.dim(), 0.5 * params.volume, eps, dh)?;
        let hb = eps * support_radius(&half, 1e-8).radius;
        // Mirror pairs of lattice points through the barycentre of Ω_r^-.
        let singles: Vec<(f64, f64)> = seed_lattice(domain, seeds.pitch.unwrap_or(2.0 * bump), hb);
        let mut pairs = Vec::new();
        for (i, a) in singles.iter().enumerate() {
            for b in &singles[i + 1..] {
                let d = (a.0 - b.0).hypot(a.1 - b.1);
                if d > 2.0 * hb + 2.0 * domain.h && (a.0 + b.0).abs() < 1e-9 && (a.1 + b.1).abs() < 1e-9 {
                    pairs.push(vec![*a, *b]);
                }
            }
        }
        jobs.extend(pairs);
        Some(half)
    } else {
        None
    };
    let run = |job: &Vec<(f64, f64)>| solve_seed(domain, p, profile, half.as_ref(), job, params, opts);
    let results: Vec<_> = if opts.workers > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| MultiplicityError::InvalidInput(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    } else {
        jobs.iter().map(run).collect()
    };
    let l2_tol = opts.dedup_l2 * params.volume.sqrt();
    let bary_tol = opts.dedup_bary * domain.h;
    let mut records: Vec<(SolutionRecord, Option<SpectrumReport>)> = Vec::new();
    let mut outcomes = Vec::with_capacity(jobs.len());
    let mut owner: Vec<Option<usize>> = Vec::with_capacity(jobs.len());
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok((rec, spec)) => {
                let dup = records.iter().position(|(r, _)| same_solution(r, &rec, l2_tol, bary_tol));
                let k = match dup {
                    Some(k) => k,
                    None => {
                        records.push((rec, spec));
                        records.len() - 1
                    }
                };
                owner.push(Some(k));
                outcomes.push(SeedOutcome {
                    seed: job.clone(),
                    record: None,
                    error: None,
                });
            }
            Err(e) => {
                owner.push(None);
                outcomes.push(SeedOutcome {
                    seed: job.clone(),
                    record: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    // Sort by (energy, barycentre) and remap seed owners.
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&records[a].0, &records[b].0);
        let ba = ra.barycenter.unwrap_or((0.0, 0.0));
        let bb = rb.barycenter.unwrap_or((0.0, 0.0));
        ra.energy
            .total_cmp(&rb.energy)
            .then(ba.0.total_cmp(&bb.0))
            .then(ba.1.total_cmp(&bb.1))
    });
    let mut rank = vec![0; records.len()];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos;
    }
    for (o, w) in outcomes.iter_mut().zip(owner) {
        o.record = w.map(|k| rank[k]);
    }
    let mut slots: Vec<Option<(SolutionRecord, Option<SpectrumReport>)>> = records.into_iter().map(Some).collect();
    let (records, spectra): (Vec<_>, Vec<_>) = order.iter().map(|&i| slots[i].take().expect("each once")).unzip();
    let c = params.c_level;
    Ok(SolutionCatalog {
        distinct_below_c: records.iter().filter(|r| r.energy <= c).count(),
        distinct_total: records.len(),
        records,
        spectra,
        seeds: outcomes,
        dedup_tolerance: (l2_tol, bary_tol),
        c_level: c,
    })
}

/// Duplicate test used by [`enumerate`].
pub fn same_solution(a: &SolutionRecord, b: &SolutionRecord, l2_tol: f64, bary_tol: f64) -> bool {
    let close_bary = match (a.barycenter, b.barycenter) {
        (Some(x), Some(y)) => (x.0 - y.0).hypot(x.1 - y.1) <= bary_tol,
        (None, None) => true,
        _ => false,
    };
    close_bary && a.field.l2_distance(&b.field) <= l2_tol
}

/// Largest difference between `a` and `b` over the nodes within `radius` of
/// the peak of `a`, after shifting `b` so that the two peaks coincide. Small
/// values mean the bumps are lattice translates of each other.
pub fn bump_translate_defect(a: &Field, b: &Field, radius: f64) -> f64 {
    let d = a.domain();
    let (ba, bb) = (a.to_box(), b.to_box());
    let peak = |v: &[f64]| (0..v.len()).max_by(|&x, &y| v[x].total_cmp(&v[y])).unwrap_or(0);
    let (ka, kb) = (peak(&ba), peak(&bb));
    let (ia, ja) = ((ka % d.nx) as isize, (ka / d.nx) as isize);
    let (di, dj) = ((kb % d.nx) as isize - ia, (kb / d.nx) as isize - ja);
    let reach = (radius / d.h).ceil() as isize;
    let mut worst = 0.0f64;
    for j in ja - reach..=ja + reach {
        for i in ia - reach..=ia + reach {
            if ((i - ia).pow(2) + (j - ja).pow(2)) as f64 * d.h * d.h > radius * radius {
                continue;
            }
            let (i2, j2) = (i + di, j + dj);
            let inside = |i: isize, j: isize| i >= 0 && j >= 0 && (i as usize) < d.nx && (j as usize) < d.ny;
            if !inside(i, j) || !inside(i2, j2) {
                return f64::INFINITY;
            }
            let x = ba[j as usize * d.nx + i as usize];
            let y = bb[j2 as usize * d.nx + i2 as usize];
            worst = worst.max((x - y).abs());
        }
    }
    worst
}
