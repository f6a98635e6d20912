//! Volume-constrained Allen–Cahn problem on a grid domain:
//! `-ε²Δu + W'(u) = λ` in `Ω`, `u = 0` on `∂Ω`, `∫u = V`.
//!
//! Five-point (three-point in 1-D) Laplacian with zero exterior nodes. The
//! energy is `(ε²/2) Σ_edges (Δu)² h^{N-2} + h^N Σ W(u)`, whose gradient per
//! unit cell volume is `g = ε²(-Δ_h u) + W'(u)`.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::banded::SymBandMatrix;
use crate::domain::{GridDomain, Shape};
use crate::potential::{Potential, PotentialCertificate};

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no convergence after {} iterations (residual {:e}, tol {:e})", .0.iterations, .0.residual_inf, .0.diagnostics.tol)]
    NonConvergence(Box<SolutionRecord>),
    #[error("singular Jacobian at Newton step {step} (pivot {pivot:e})")]
    SingularJacobian { step: usize, pivot: f64 },
    #[error("Newton iteration diverged (residual {residual:e} after {step} steps)")]
    Diverged { step: usize, residual: f64 },
    #[error("residual {residual:e} is outside the Newton basin ({basin:e})")]
    OutsideBasin { residual: f64, basin: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("field file: {0}")]
    Format(String),
}

/// Values at the interior nodes of a domain; zero elsewhere.
#[derive(Debug, Clone)]
pub struct Field {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(domain: Arc<GridDomain>, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != domain.n_interior() {
            return Err(FieldError::InvalidInput(format!(
                "{} values for {} interior nodes",
                values.len(),
                domain.n_interior()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::InvalidInput("non-finite value".into()));
        }
        Ok(Self { domain, values })
    }

    pub fn zeros(domain: Arc<GridDomain>) -> Self {
        let n = domain.n_interior();
        Self {
            domain,
            values: vec![0.0; n],
        }
    }

    /// Samples `f(x, y)` at the interior nodes.
    pub fn from_fn(domain: Arc<GridDomain>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = domain
            .cells()
            .iter()
            .map(|&k| {
                let (x, y) = domain.node(k);
                f(x, y)
            })
            .collect();
        Self { domain, values }
    }

    /// Takes the interior entries of a full box array (row-major).
    pub fn from_box(domain: Arc<GridDomain>, values: &[f64]) -> Result<Self, FieldError> {
        if values.len() != domain.nx * domain.ny {
            return Err(FieldError::InvalidInput("box array does not match the domain".into()));
        }
        let v = domain.cells().iter().map(|&k| values[k]).collect();
        Self::new(domain, v)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Full box array with zeros outside `Ω`.
    pub fn to_box(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.domain.nx * self.domain.ny];
        for (&k, &v) in self.domain.cells().iter().zip(&self.values) {
            out[k] = v;
        }
        out
    }

    /// `∫u`.
    pub fn volume(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.domain.cell_volume()
    }

    /// Multiplies by a constant so that `∫u = v`.
    pub fn scale_to_volume(&mut self, v: f64) -> Result<(), FieldError> {
        let cur = self.volume();
        if !(cur > 0.0) {
            return Err(FieldError::InvalidInput(format!("cannot rescale a field of volume {cur:e}")));
        }
        let s = v / cur;
        self.values.iter_mut().for_each(|x| *x *= s);
        Ok(())
    }

    /// Adds a constant so that `∫u = v`.
    pub fn shift_to_volume(&mut self, v: f64) {
        let c = (v - self.volume()) / self.domain.area();
        self.values.iter_mut().for_each(|x| *x += c);
    }

    /// `‖u - w‖_{L²}`.
    pub fn l2_distance(&self, other: &Field) -> f64 {
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum();
        (s * self.domain.cell_volume()).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|a| a * a).sum::<f64>() * self.domain.cell_volume()).sqrt()
    }

    /// `Σ x|u| / Σ |u|`, or `None` for the zero field.
    pub fn barycenter(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
        for (&k, &v) in self.domain.cells().iter().zip(&self.values) {
            let (x, y) = self.domain.node(k);
            let a = v.abs();
            sx += a * x;
            sy += a * y;
            s += a;
        }
        (s > 0.0).then(|| (sx / s, sy / s))
    }

    /// Shifts by whole cells; values pushed outside `Ω` are dropped and
    /// vacated nodes are zero.
    pub fn translate_cells(&self, di: isize, dj: isize) -> Field {
        let d = &self.domain;
        let src = self.to_box();
        let mut out = vec![0.0; src.len()];
        for j in 0..d.ny as isize {
            for i in 0..d.nx as isize {
                let (a, b) = (i - di, j - dj);
                if a >= 0 && b >= 0 && (a as usize) < d.nx && (b as usize) < d.ny {
                    out[j as usize * d.nx + i as usize] = src[b as usize * d.nx + a as usize];
                }
            }
        }
        Field::from_box(d.clone(), &out).expect("same domain")
    }

    /// Reflection `i -> nx - 1 - i` of the box.
    pub fn mirror_x(&self) -> Field {
        let d = &self.domain;
        let src = self.to_box();
        let out: Vec<f64> = (0..src.len())
            .map(|k| {
                let (i, j) = (k % d.nx, k / d.nx);
                src[j * d.nx + d.nx - 1 - i]
            })
            .collect();
        Field::from_box(d.clone(), &out).expect("same domain")
    }

    /// Writes the box array as rows, top row first.
    pub fn write_csv(&self, path: &Path) -> Result<(), FieldError> {
        let d = &self.domain;
        let b = self.to_box();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for j in (0..d.ny).rev() {
            let row: Vec<String> = (0..d.nx).map(|i| format!("{:?}", b[j * d.nx + i])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(domain: Arc<GridDomain>, path: &Path) -> Result<Self, FieldError> {
        let text = std::fs::read_to_string(path)?;
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|c| c.trim().parse::<f64>().map_err(|_| FieldError::Format(format!("bad number `{c}`"))))
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        if rows.len() != domain.ny || rows.iter().any(|r| r.len() != domain.nx) {
            return Err(FieldError::Format(format!("expected {} rows of {} values", domain.ny, domain.nx)));
        }
        let b: Vec<f64> = rows.into_iter().rev().flatten().collect();
        Self::from_box(domain, &b)
    }
}

/// Neighbour tables for the discrete Laplacian.
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    /// Neighbours per unknown, `u32::MAX` for a Dirichlet node.
    nbr: Vec<[u32; 4]>,
    deg: usize,
    inv_h2: f64,
    /// `h^N`.
    pub(crate) hv: f64,
    /// `h^{N-2}`.
    edge_w: f64,
    pub(crate) bandwidth: usize,
}

const NONE: u32 = u32::MAX;

impl Stencil {
    pub(crate) fn new(d: &GridDomain) -> Self {
        let deg = 2 * d.dim();
        let nbr = (0..d.n_interior())
            .map(|s| {
                let mut a = [NONE; 4];
                for (slot, t) in a.iter_mut().zip(d.neighbours(s)) {
                    *slot = t.map_or(NONE, |t| t as u32);
                }
                a
            })
            .collect();
        Self {
            nbr,
            deg,
            inv_h2: 1.0 / (d.h * d.h),
            hv: d.cell_volume(),
            edge_w: d.h.powi(d.dim() as i32 - 2),
            bandwidth: d.bandwidth(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.nbr.len()
    }

    /// `-Δ_h u`.
    pub(crate) fn neg_laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.nbr
            .iter()
            .enumerate()
            .map(|(s, nb)| {
                let mut acc = self.deg as f64 * u[s];
                for &t in &nb[..self.deg] {
                    if t != NONE {
                        acc -= u[t as usize];
                    }
                }
                acc * self.inv_h2
            })
            .collect()
    }

    pub(crate) fn gradient(&self, u: &[f64], p: &Potential, eps: f64) -> Vec<f64> {
        let e2 = eps * eps;
        let mut g = self.neg_laplacian(u);
        for (gi, &ui) in g.iter_mut().zip(u) {
            *gi = e2 * *gi + p.deriv(ui);
        }
        g
    }

    /// `Σ_edges (Δu)²`, counting edges to Dirichlet nodes once.
    fn dirichlet_sum(&self, u: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, nb) in self.nbr.iter().enumerate() {
            for &t in &nb[..self.deg] {
                if t == NONE {
                    s += u[i] * u[i];
                } else if t as usize > i {
                    let d = u[i] - u[t as usize];
                    s += d * d;
                }
            }
        }
        s
    }

    pub(crate) fn energy(&self, u: &[f64], p: &Potential, eps: f64) -> f64 {
        0.5 * eps * eps * self.edge_w * self.dirichlet_sum(u) + self.hv * u.iter().map(|&v| p.eval(v)).sum::<f64>()
    }

    /// `E(v) - E(u)` summed term by term, so that tiny steps are not lost to
    /// cancellation. The potential part uses Simpson's rule on `W'`, exact
    /// for polynomials up to degree four.
    pub(crate) fn energy_change(&self, u: &[f64], v: &[f64], p: &Potential, eps: f64) -> f64 {
        let mut grad = 0.0;
        let mut pot = 0.0;
        for (i, nb) in self.nbr.iter().enumerate() {
            let (a, b) = (u[i], v[i]);
            for &t in &nb[..self.deg] {
                if t == NONE {
                    grad += (b - a) * (b + a);
                } else if t as usize > i {
                    let t = t as usize;
                    let (da, db) = (a - u[t], b - v[t]);
                    grad += (db - da) * (db + da);
                }
            }
            let delta = b - a;
            if delta != 0.0 {
                pot += delta * (p.deriv(a) + 4.0 * p.deriv(0.5 * (a + b)) + p.deriv(b)) / 6.0;
            }
        }
        0.5 * eps * eps * self.edge_w * grad + self.hv * pot
    }

    /// `ε²(-Δ_h) + diag(W''(u)) + shift` in band form.
    pub(crate) fn hessian(&self, u: &[f64], p: &Potential, eps: f64, shift: f64) -> SymBandMatrix {
        let e2 = eps * eps * self.inv_h2;
        let mut m = SymBandMatrix::zeros(self.len(), self.bandwidth);
        for (s, nb) in self.nbr.iter().enumerate() {
            m.add(s, s, e2 * self.deg as f64 + p.deriv2(u[s]) + shift);
            for &t in &nb[..self.deg] {
                if t != NONE && (t as usize) < s {
                    m.add(s, t as usize, -e2);
                }
            }
        }
        m
    }

    /// `(ε²(-Δ_h) + diag(W''(u))) v`.
    pub(crate) fn hessian_apply(&self, u: &[f64], p: &Potential, eps: f64, v: &[f64]) -> Vec<f64> {
        let mut y = self.neg_laplacian(v);
        for ((yi, &vi), &ui) in y.iter_mut().zip(v).zip(u) {
            *yi = eps * eps * *yi + p.deriv2(ui) * vi;
        }
        y
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max_abs_dev(v: &[f64], c: f64) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max((x - c).abs()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub tol: f64,
    /// Volume re-projections triggered by accumulated drift.
    pub reprojections: usize,
    pub energy_history: Vec<f64>,
    pub newton_residuals: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SolutionRecord {
    pub field: Field,
    pub eps: f64,
    /// Target volume `V`.
    pub volume: f64,
    pub lambda: f64,
    pub energy: f64,
    /// `max |ε²(-Δu) + W'(u) - λ|` over the interior.
    pub residual_inf: f64,
    pub barycenter: Option<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    pub morse_index: Option<usize>,
    pub nondegenerate: Option<bool>,
    pub diagnostics: SolveDiagnostics,
}

impl SolutionRecord {
    /// Evaluates `λ` (interior mean of the gradient), residual and energy of
    /// an arbitrary field.
    pub fn from_field(field: Field, p: &Potential, eps: f64) -> Self {
        let st = Stencil::new(field.domain());
        let g = st.gradient(field.values(), p, eps);
        let lambda = mean(&g);
        Self {
            volume: field.volume(),
            energy: st.energy(field.values(), p, eps),
            residual_inf: max_abs_dev(&g, lambda),
            barycenter: field.barycenter(),
            lambda,
            eps,
            field,
            iterations: 0,
            converged: false,
            morse_index: None,
            nondegenerate: None,
            diagnostics: SolveDiagnostics::default(),
        }
    }

    pub fn sidecar(&self) -> RecordSidecar {
        let d = self.field.domain();
        RecordSidecar {
            volume: self.volume,
            eps: self.eps,
            lambda: self.lambda,
            energy: self.energy,
            residual_inf: self.residual_inf,
            barycenter: self.barycenter,
            iterations: self.iterations,
            converged: self.converged,
            morse_index: self.morse_index,
            nondegenerate: self.nondegenerate,
            shape: d.shape.clone(),
            h: d.h,
            r_deform: d.r_deform,
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Writes the field as a CSV grid and the scalars as a JSON sidecar.
    pub fn save(&self, csv: &Path, json: &Path) -> Result<(), FieldError> {
        self.field.write_csv(csv)?;
        std::fs::write(json, serde_json::to_string_pretty(&self.sidecar())?)?;
        Ok(())
    }

    /// Reads a record written by [`SolutionRecord::save`] on `domain`.
    pub fn load(domain: Arc<GridDomain>, csv: &Path, json: &Path) -> Result<Self, FieldError> {
        let s: RecordSidecar = serde_json::from_str(&std::fs::read_to_string(json)?)?;
        if s.shape != domain.shape || s.h != domain.h {
            return Err(FieldError::Format("sidecar describes a different domain".into()));
        }
        Ok(Self {
            field: Field::read_csv(domain, csv)?,
            eps: s.eps,
            volume: s.volume,
            lambda: s.lambda,
            energy: s.energy,
            residual_inf: s.residual_inf,
            barycenter: s.barycenter,
            iterations: s.iterations,
            converged: s.converged,
            morse_index: s.morse_index,
            nondegenerate: s.nondegenerate,
            diagnostics: s.diagnostics,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSidecar {
    #[serde(rename = "V")]
    pub volume: f64,
    pub eps: f64,
    pub lambda: f64,
    pub energy: f64,
    pub residual_inf: f64,
    pub barycenter: Option<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    pub morse_index: Option<usize>,
    pub nondegenerate: Option<bool>,
    pub shape: Shape,
    pub h: f64,
    pub r_deform: f64,
    pub diagnostics: SolveDiagnostics,
}

/// `(ε²/2) Σ|∇u|² h² + Σ W(u) h²` (with `h` in place of `h²` in 1-D).
pub fn energy(field: &Field, p: &Potential, eps: f64) -> f64 {
    Stencil::new(field.domain()).energy(field.values(), p, eps)
}

/// `ε²(-Δ_h u) + W'(u)` at the interior nodes.
pub fn euler_lagrange(field: &Field, p: &Potential, eps: f64) -> Vec<f64> {
    Stencil::new(field.domain()).gradient(field.values(), p, eps)
}

#[derive(Debug, Clone)]
pub struct FlowOptions {
    /// Residual target; `None` means `1e-8·max(1, |E|)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub record_history: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 500_000,
            record_history: false,
        }
    }
}

/// Mean-projected gradient flow with Barzilai–Borwein steps and monotone
/// backtracking on the energy. Volume is preserved by construction; drift
/// beyond `1e-8·V` is removed by a uniform shift and reported.
pub fn gradient_flow(
    init: &Field,
    p: &Potential,
    volume: f64,
    eps: f64,
    opts: &FlowOptions,
) -> Result<SolutionRecord, FieldError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(FieldError::InvalidInput("eps must be positive".into()));
    }
    let v0 = init.volume();
    if !((v0 - volume).abs() <= 1e-10 * volume.abs().max(f64::MIN_POSITIVE)) {
        return Err(FieldError::InvalidInput(format!(
            "initial volume {v0:e} differs from V = {volume:e}"
        )));
    }
    let domain = init.domain().clone();
    let st = Stencil::new(&domain);
    let mut diag = SolveDiagnostics::default();
    if volume > s_top(p) * domain.area() {
        diag.warnings.push("V exceeds s0·|Ω|; outside the small-volume regime".into());
    }
    let mut u = init.values().to_vec();
    let mut e = st.energy(&u, p, eps);
    let mut g = st.gradient(&u, p, eps);
    let mut lambda = mean(&g);
    let mut d: Vec<f64> = g.iter().map(|x| x - lambda).collect();
    let mut res = max_abs_dev(&g, lambda);
    let tol_of = |e: f64| opts.tol.unwrap_or(1e-8 * e.abs().max(1.0));
    // A stable explicit step as the first guess.
    let wmax = u.iter().map(|&x| p.deriv2(x).abs()).fold(1.0f64, f64::max);
    let alpha0 = 1.0 / (2.0 * st.deg as f64 * eps * eps * st.inv_h2 + wmax);
    let mut alpha = alpha0;
    let mut iterations = 0;
    let mut converged = res <= tol_of(e);
    if opts.record_history {
        diag.energy_history.push(e);
    }
    let mut v = vec![0.0; u.len()];
    while !converged && iterations < opts.max_iter {
        let dd: f64 = d.iter().map(|x| x * x).sum();
        let mut accepted = false;
        let mut trial = alpha;
        for _ in 0..60 {
            for ((vi, ui), di) in v.iter_mut().zip(&u).zip(&d) {
                *vi = ui - trial * di;
            }
            let de = st.energy_change(&u, &v, p, eps);
            if de <= -1e-4 * trial * st.hv * dd {
                e += de;
                accepted = true;
                break;
            }
            trial *= 0.5;
        }
        if !accepted {
            diag.warnings.push(format!("line search stalled at residual {res:e}"));
            break;
        }
        iterations += 1;
        let vol = v.iter().sum::<f64>() * st.hv;
        if (vol - volume).abs() > 1e-8 * volume.abs() {
            let c = (volume - vol) / (st.hv * v.len() as f64);
            v.iter_mut().for_each(|x| *x += c);
            diag.reprojections += 1;
            diag.warnings.push(format!("volume drift {:e} removed at iteration {iterations}", vol - volume));
            e = st.energy(&v, p, eps);
        }
        let gn = st.gradient(&v, p, eps);
        let ln = mean(&gn);
        let mut sy = 0.0;
        let mut ss = 0.0;
        for i in 0..u.len() {
            let s = v[i] - u[i];
            let y = (gn[i] - ln) - d[i];
            ss += s * s;
            sy += s * y;
            d[i] = gn[i] - ln;
        }
        std::mem::swap(&mut u, &mut v);
        g = gn;
        lambda = ln;
        res = max_abs_dev(&g, lambda);
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-3 * alpha0, 1e6 * alpha0) } else { 4.0 * trial };
        if opts.record_history {
            diag.energy_history.push(e);
        }
        converged = res <= tol_of(e);
    }
    diag.tol = tol_of(e);
    let field = Field::new(domain, u)?;
    let rec = SolutionRecord {
        volume,
        energy: st.energy(field.values(), p, eps),
        residual_inf: res,
        barycenter: field.barycenter(),
        field,
        lambda,
        eps,
        iterations,
        converged,
        morse_index: None,
        nondegenerate: None,
        diagnostics: diag,
    };
    if converged {
        Ok(rec)
    } else {
        Err(FieldError::NonConvergence(Box::new(rec)))
    }
}

/// Coarse location of the global minimum of `W` on `[0, sample max]`.
fn s_top(p: &Potential) -> f64 {
    let hi = p.sample_range().1.max(0.0);
    (0..=2000)
        .map(|i| hi * i as f64 / 2000.0)
        .min_by(|a, b| p.eval(*a).total_cmp(&p.eval(*b)))
        .unwrap_or(0.0)
}

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    /// Largest starting residual accepted.
    pub basin: f64,
    /// Residual target.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            basin: 1.0,
            tol: 1e-12,
            max_iter: 30,
        }
    }
}

/// Newton's method on `(ε²(-Δu) + W'(u) - λ, ∫u - V) = 0` in `(u, λ)`.
///
/// The bordered system is reduced with two solves against the band `LDLᵀ`
/// of the Hessian; a singular Hessian is reported as `SingularJacobian`.
pub fn newton_refine(
    record: &SolutionRecord,
    p: &Potential,
    eps: f64,
    opts: &NewtonOptions,
) -> Result<SolutionRecord, FieldError> {
    let domain = record.field.domain().clone();
    let st = Stencil::new(&domain);
    let volume = record.volume;
    let mut u = record.field.values().to_vec();
    let g = st.gradient(&u, p, eps);
    let mut lambda = mean(&g);
    let res0 = max_abs_dev(&g, lambda);
    if !(res0 <= opts.basin) {
        return Err(FieldError::OutsideBasin {
            residual: res0,
            basin: opts.basin,
        });
    }
    let mut diag = record.diagnostics.clone();
    diag.newton_residuals.clear();
    let ones = vec![1.0; u.len()];
    let mut prev = f64::INFINITY;
    let mut steps = 0;
    loop {
        let g = st.gradient(&u, p, eps);
        let f: Vec<f64> = g.iter().map(|x| x - lambda).collect();
        let res = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        diag.newton_residuals.push(res);
        if !res.is_finite() || res > 1e3 * res0.max(1e-8) {
            return Err(FieldError::Diverged { step: steps, residual: res });
        }
        let c = u.iter().sum::<f64>() * st.hv - volume;
        let small_c = c.abs() <= 1e-13 * volume.abs().max(1e-300);
        if (res <= opts.tol && small_c) || (steps > 0 && res < 1e-9 && res > 0.5 * prev && small_c) {
            break;
        }
        if steps == opts.max_iter {
            if res <= 1e3 * opts.tol {
                diag.warnings.push(format!("Newton stopped at residual {res:e}"));
                break;
            }
            return Err(FieldError::Diverged { step: steps, residual: res });
        }
        prev = res;
        let fac = st
            .hessian(&u, p, eps, 0.0)
            .factor_ldlt(1e-13)
            .map_err(|e| FieldError::SingularJacobian {
                step: steps,
                pivot: e.pivot,
            })?;
        let a = fac.solve(&f);
        let b = fac.solve(&ones);
        let sb: f64 = b.iter().sum();
        if !(sb.abs() > 1e-14 * b.iter().map(|x| x.abs()).sum::<f64>()) {
            return Err(FieldError::SingularJacobian { step: steps, pivot: sb });
        }
        let dl = (a.iter().sum::<f64>() - c / st.hv) / sb;
        for i in 0..u.len() {
            u[i] += -a[i] + dl * b[i];
        }
        lambda += dl;
        steps += 1;
    }
    let g = st.gradient(&u, p, eps);
    let lam = mean(&g);
    let field = Field::new(domain, u)?;
    Ok(SolutionRecord {
        volume,
        energy: st.energy(field.values(), p, eps),
        residual_inf: max_abs_dev(&g, lam),
        barycenter: field.barycenter(),
        field,
        lambda: lam,
        eps,
        iterations: record.iterations + steps,
        converged: true,
        morse_index: None,
        nondegenerate: None,
        diagnostics: diag,
    })
}

/// Outcome of the a priori bound checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub min_u: f64,
    pub max_u: f64,
    pub lambda: f64,
    /// Leftmost root of `W'(s) - λ`: solutions satisfy `u ≥ s_minus`.
    pub s_minus: Option<f64>,
    /// Rightmost root of `W'(s) - λ`: solutions satisfy `u ≤ s_plus`.
    pub s_plus: Option<f64>,
    pub lower_ok: Option<bool>,
    pub upper_ok: Option<bool>,
    /// `0 ≤ u ≤ s₀` within 1e-6.
    pub within_zero_s0: bool,
    /// `λ ≥ w⁻ - 1e-6`; `None` when `∫u ≤ 0`.
    pub lambda_ok: Option<bool>,
    pub notes: Vec<String>,
}

/// Checks `s₋ ≤ u ≤ s₊` (roots of `G' = W' - λ`), the box `[0, s₀]` and
/// `λ ≥ w⁻`.
pub fn box_bounds_check(record: &SolutionRecord, p: &Potential, cert: &PotentialCertificate) -> BoundsReport {
    let vals = record.field.values();
    let min_u = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max_u = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lambda = record.lambda;
    let (lo, hi) = p.sample_range();
    let (lo, hi) = (lo.min(min_u - 1.0), hi.max(max_u + 1.0));
    let gp = |s: f64| p.deriv(s) - lambda;
    let n = 20_000;
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let mut roots = Vec::new();
    for w in xs.windows(2) {
        let (a, b) = (gp(w[0]), gp(w[1]));
        if a == 0.0 {
            roots.push(w[0]);
        } else if a * b < 0.0 {
            roots.push(crate::potential::bisect(|s| gp(s) * a > 0.0, w[0], w[1]));
        }
    }
    let s_minus = (gp(lo) < 0.0).then(|| roots.first().copied()).flatten();
    let s_plus = (gp(hi) > 0.0).then(|| roots.last().copied()).flatten();
    let mut notes = Vec::new();
    let volume = record.field.volume();
    let lambda_ok = if volume > 0.0 {
        Some(lambda >= cert.w_minus - 1e-6)
    } else {
        notes.push("∫u ≤ 0: the multiplier bound does not apply".into());
        None
    };
    let within_zero_s0 = min_u >= -1e-6 && max_u <= cert.s0 + 1e-6;
    if min_u < -1e-6 {
        notes.push(format!("u takes negative values (min {min_u:e}); the box [0, s0] applies to the sign-constrained radial problem"));
    }
    BoundsReport {
        min_u,
        max_u,
        lambda,
        s_minus,
        s_plus,
        lower_ok: s_minus.map(|s| min_u >= s - 1e-6),
        upper_ok: s_plus.map(|s| max_u <= s + 1e-6),
        within_zero_s0,
        lambda_ok,
        notes,
    }
}
