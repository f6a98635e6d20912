//! Auxiliary radial problem: minimise `E(u) = ½∫|∇u|² + ∫W(u)` over radial
//! `u ≥ 0` with `∫u ≤ γ` in `ℝᴺ`.
//!
//! Discretisation: nodes `rᵢ = i·h`, `u_n = 0` at `r_max`. Node `i` owns the
//! shell `[rᵢ - h/2, rᵢ + h/2]` (a ball of radius `h/2` at the origin), and the
//! flux between nodes `i` and `i+1` crosses the sphere of radius `r_{i+1/2}`.
//! With these weights the discrete Laplacian at the origin is `2N(u₁-u₀)/h²`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::potential::{Potential, PotentialCertificate};

#[derive(Debug, thiserror::Error)]
pub enum RadialError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e}, tol {tol:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error("support reaches the end of the grid (R = {support_radius}, r_max = {r_max})")]
    DomainTooSmall { support_radius: f64, r_max: f64 },
    #[error("support has {nodes} interior nodes, need at least {needed}")]
    EmptySupport { nodes: usize, needed: usize },
    #[error("no γ on the sweep qualifies")]
    SweepExhausted,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Volume of the unit ball in `ℝᴺ`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        0 => 1.0,
        1 => 2.0,
        n => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// Surface area of the unit sphere in `ℝᴺ` (`N·ω_N`).
pub fn unit_sphere_area(dim: usize) -> f64 {
    dim as f64 * unit_ball_volume(dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub dim: usize,
    pub r_max: f64,
    pub n_cells: usize,
}

impl RadialGrid {
    pub fn new(dim: usize, r_max: f64, n_cells: usize) -> Result<Self, RadialError> {
        if dim == 0 {
            return Err(RadialError::InvalidInput("dimension must be at least 1".into()));
        }
        if !(r_max > 0.0 && r_max.is_finite()) || n_cells < 2 {
            return Err(RadialError::InvalidInput(format!(
                "need r_max > 0 and at least 2 cells (r_max = {r_max}, n_cells = {n_cells})"
            )));
        }
        Ok(Self { dim, r_max, n_cells })
    }

    /// Grid with spacing exactly `h` reaching at least `r_max`.
    pub fn with_spacing(dim: usize, r_max: f64, h: f64) -> Result<Self, RadialError> {
        if !(h > 0.0) {
            return Err(RadialError::InvalidInput(format!("spacing must be positive, got {h}")));
        }
        let n = (r_max / h - 1e-9).ceil().max(2.0) as usize;
        Self::new(dim, n as f64 * h, n)
    }

    /// Grid long enough for the predicted support at mass `gamma`.
    pub fn for_gamma(cert: &PotentialCertificate, dim: usize, gamma: f64, h: f64) -> Result<Self, RadialError> {
        let upper = radius_bounds(cert, dim).c_plus * gamma.powf(1.0 / dim as f64);
        Self::with_spacing(dim, (2.0 * upper).max(upper + 8.0), h)
    }

    pub fn h(&self) -> f64 {
        self.r_max / self.n_cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    /// Quadrature weight (shell volume) of every node, `n_cells + 1` entries.
    pub fn weights(&self) -> Vec<f64> {
        let (n, h, w) = (self.dim as i32, self.h(), unit_ball_volume(self.dim));
        (0..=self.n_cells)
            .map(|i| {
                let r = self.node(i);
                let lo = (r - 0.5 * h).max(0.0);
                let hi = if i == self.n_cells { r } else { r + 0.5 * h };
                w * (hi.powi(n) - lo.powi(n))
            })
            .collect()
    }

    /// Area of the sphere between nodes `i` and `i+1`, `n_cells` entries.
    pub fn face_areas(&self) -> Vec<f64> {
        let (a, h) = (unit_sphere_area(self.dim), self.h());
        (0..self.n_cells)
            .map(|i| a * ((i as f64 + 0.5) * h).powi(self.dim as i32 - 1))
            .collect()
    }
}

/// Precomputed operator data for one grid.
struct Disc {
    n: usize,
    h: f64,
    w: Vec<f64>,
    s: Vec<f64>,
}

impl Disc {
    fn new(grid: &RadialGrid) -> Self {
        Self {
            n: grid.n_cells,
            h: grid.h(),
            w: grid.weights(),
            s: grid.face_areas(),
        }
    }

    fn mass(&self, u: &[f64]) -> f64 {
        (0..self.n).map(|i| self.w[i] * u[i]).sum()
    }

    /// `∫|∇u|²` and `∫W(u)`.
    fn parts(&self, u: &[f64], p: &Potential) -> (f64, f64) {
        let mut grad = 0.0;
        let mut pot = 0.0;
        for i in 0..self.n {
            let d = u[i + 1] - u[i];
            grad += self.s[i] * d * d / self.h;
            pot += self.w[i] * p.eval(u[i]);
        }
        (grad, pot)
    }

    fn energy(&self, u: &[f64], p: &Potential) -> f64 {
        let (g, b) = self.parts(u, p);
        0.5 * g + b
    }

    /// `-Δ_r u` at node `i < n`.
    fn neg_laplacian(&self, u: &[f64], i: usize) -> f64 {
        let mut flux = self.s[i] * (u[i] - u[i + 1]);
        if i > 0 {
            flux += self.s[i - 1] * (u[i] - u[i - 1]);
        }
        flux / (self.w[i] * self.h)
    }

    /// Gradient in the weighted inner product: `-Δ_r u + W'(u)` at free nodes.
    fn gradient(&self, u: &[f64], p: &Potential) -> Vec<f64> {
        (0..self.n).map(|i| self.neg_laplacian(u, i) + p.deriv(u[i])).collect()
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        (0..self.n).map(|i| self.w[i] * a[i] * b[i]).sum()
    }

    /// `E(v) - E(u)` summed term by term, free of the cancellation in `E(v) - E(u)`.
    fn energy_change(&self, u: &[f64], v: &[f64], p: &Potential) -> f64 {
        let mut de = 0.0;
        for i in 0..self.n {
            let (a, b) = (u[i + 1] - u[i], v[i + 1] - v[i]);
            de += 0.5 * self.s[i] * (b - a) * (b + a) / self.h;
            if u[i] != v[i] {
                de += self.w[i] * (p.eval(v[i]) - p.eval(u[i]));
            }
        }
        de
    }

    /// `<g, v - u>` with the multiplier-like mean of `g` removed when both
    /// points carry the full mass, where `Σ w(v - u)` vanishes exactly.
    fn descent_slope(&self, g: &[f64], u: &[f64], v: &[f64], gamma: f64) -> f64 {
        let full = |x: &[f64]| (self.mass(x) - gamma).abs() <= 1e-12 * gamma;
        let shift = if full(u) && full(v) {
            let (mut sg, mut sw) = (0.0, 0.0);
            for i in 0..self.n {
                if u[i] > 0.0 {
                    sg += self.w[i] * g[i];
                    sw += self.w[i];
                }
            }
            if sw > 0.0 { sg / sw } else { 0.0 }
        } else {
            0.0
        };
        (0..self.n).map(|i| self.w[i] * (g[i] - shift) * (v[i] - u[i])).sum()
    }
}

/// Weighted projection onto `{u ≥ 0, Σ wᵢuᵢ ≤ γ}`: `uᵢ = max(yᵢ - θ, 0)` with
/// the smallest admissible shift `θ ≥ 0`.
pub fn project_mass(y: &[f64], w: &[f64], gamma: f64) -> Vec<f64> {
    project(y, w, gamma, false)
}

/// Weighted projection onto `{u ≥ 0, Σ wᵢuᵢ = γ}`; the shift may be negative.
pub fn project_mass_exact(y: &[f64], w: &[f64], gamma: f64) -> Vec<f64> {
    project(y, w, gamma, true)
}

fn project(y: &[f64], w: &[f64], gamma: f64, exact: bool) -> Vec<f64> {
    let mut u: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    let mass: f64 = u.iter().zip(w).map(|(a, b)| a * b).sum();
    if mass <= gamma && !exact {
        return u;
    }
    let mut order: Vec<usize> = match mass > gamma {
        true => (0..y.len()).filter(|&i| y[i] > 0.0).collect(),
        false => (0..y.len()).collect(),
    };
    order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    let (mut sw, mut swy) = (0.0, 0.0);
    let mut theta = 0.0;
    for (k, &i) in order.iter().enumerate() {
        sw += w[i];
        swy += w[i] * y[i];
        let t = (swy - gamma) / sw;
        let next = match order.get(k + 1) {
            Some(&j) => y[j],
            None if mass > gamma => 0.0,
            None => f64::NEG_INFINITY,
        };
        if t >= next {
            theta = t;
            break;
        }
    }
    for (ui, yi) in u.iter_mut().zip(y) {
        *ui = (yi - theta).max(0.0);
    }
    let mass: f64 = u.iter().zip(w).map(|(a, b)| a * b).sum();
    if mass > gamma || (exact && mass > 0.0) {
        let f = gamma / mass;
        u.iter_mut().for_each(|v| *v *= f);
    }
    u
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialOptions {
    /// Absolute tolerance on the projected-gradient residual; `None` uses
    /// `1e-8·max(1, |E|)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Relative threshold for the support radius.
    pub tau: f64,
    /// Active-set Newton polish after the projected-gradient phase.
    pub polish: bool,
    pub record_history: bool,
    /// Impose `∫u = γ` instead of `∫u ≤ γ`.
    pub exact_mass: bool,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 200_000,
            tau: 1e-8,
            polish: true,
            record_history: false,
            exact_mass: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RadialDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub tol: f64,
    pub polished: bool,
    /// Standard deviation of `-Δ_r u + W'(u)` over the support.
    pub lambda_spread: f64,
    pub outward_derivative: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub energy_history: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialProfile {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
    pub gamma: f64,
    pub lambda: f64,
    pub energy: f64,
    pub support_radius: f64,
    pub mass: f64,
    pub diagnostics: RadialDiagnostics,
}

impl RadialProfile {
    /// Linear interpolation of the profile at radius `r` (zero beyond the grid).
    pub fn value_at(&self, r: f64) -> f64 {
        let h = self.grid.h();
        let x = r.abs() / h;
        let i = x.floor() as usize;
        if i >= self.grid.n_cells {
            return 0.0;
        }
        let t = x - i as f64;
        (1.0 - t) * self.values[i] + t * self.values[i + 1]
    }

    /// `(A, B) = (½∫|∇u|², ∫W(u))`, so that `E = A + B`.
    pub fn energy_parts(&self, p: &Potential) -> (f64, f64) {
        let (g, b) = Disc::new(&self.grid).parts(&self.values, p);
        (0.5 * g, b)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Writes `(r, u)` rows to `csv_path` and everything else to `json_path`.
    pub fn save(&self, csv_path: &Path, json_path: &Path) -> Result<(), RadialError> {
        let mut wr = csv::Writer::from_path(csv_path)?;
        wr.write_record(["r", "u"])?;
        for (i, u) in self.values.iter().enumerate() {
            wr.write_record([format!("{:.17e}", self.grid.node(i)), format!("{u:.17e}")])?;
        }
        wr.flush()?;
        let side = Sidecar {
            dim: self.grid.dim,
            h: self.grid.h(),
            r_max: self.grid.r_max,
            n_cells: self.grid.n_cells,
            gamma: self.gamma,
            lambda: self.lambda,
            energy: self.energy,
            support_radius: self.support_radius,
            mass: self.mass,
            diagnostics: self.diagnostics.clone(),
        };
        fs::write(json_path, serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(())
    }

    pub fn load(csv_path: &Path, json_path: &Path) -> Result<Self, RadialError> {
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(json_path)?)?;
        let mut rd = csv::Reader::from_path(csv_path)?;
        let mut values = Vec::new();
        for rec in rd.deserialize() {
            let (_r, u): (f64, f64) = rec?;
            values.push(u);
        }
        let grid = RadialGrid::new(side.dim, side.r_max, side.n_cells)?;
        if values.len() != grid.n_cells + 1 {
            return Err(RadialError::InvalidInput(format!(
                "profile has {} rows, sidecar expects {}",
                values.len(),
                grid.n_cells + 1
            )));
        }
        Ok(Self {
            grid,
            values,
            gamma: side.gamma,
            lambda: side.lambda,
            energy: side.energy,
            support_radius: side.support_radius,
            mass: side.mass,
            diagnostics: side.diagnostics,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dim: usize,
    h: f64,
    r_max: f64,
    n_cells: usize,
    gamma: f64,
    lambda: f64,
    energy: f64,
    support_radius: f64,
    mass: f64,
    diagnostics: RadialDiagnostics,
}

/// Energy of arbitrary node values on `grid` (`u_n` is ignored and treated as 0).
pub fn radial_energy(grid: &RadialGrid, values: &[f64], p: &Potential) -> f64 {
    let mut u = values.to_vec();
    u[grid.n_cells] = 0.0;
    Disc::new(grid).energy(&u, p)
}

/// `∫u` with the shell weights.
pub fn radial_mass(grid: &RadialGrid, values: &[f64]) -> f64 {
    Disc::new(grid).mass(values)
}

/// Plateau-and-ramp ansatz: `s0` on `[0, t]`, linear to zero on `[t, t+1]`.
pub fn plateau_ansatz(grid: &RadialGrid, s0: f64, t: f64) -> Vec<f64> {
    (0..=grid.n_cells)
        .map(|i| {
            let r = grid.node(i);
            if i == grid.n_cells {
                0.0
            } else if r <= t {
                s0
            } else {
                (s0 * (t + 1.0 - r)).max(0.0)
            }
        })
        .collect()
}

/// Ansatz scaled to mass `gamma`: the plateau length is fitted when possible,
/// otherwise the bare ramp is scaled down.
fn initial_guess(grid: &RadialGrid, s0: f64, gamma: f64) -> Vec<f64> {
    let d = Disc::new(grid);
    let mass = |t: f64| d.mass(&plateau_ansatz(grid, s0, t));
    let cone = mass(0.0);
    if cone >= gamma {
        let f = gamma / cone;
        return plateau_ansatz(grid, s0, 0.0).into_iter().map(|v| v * f).collect();
    }
    let top = (grid.r_max - 1.0).max(0.0);
    if mass(top) <= gamma {
        return plateau_ansatz(grid, s0, top);
    }
    let t = crate::potential::bisect(|t| mass(t) < gamma, 0.0, top);
    plateau_ansatz(grid, s0, t)
}

/// Minimises the discrete radial energy over `{u ≥ 0, ∫u ≤ γ}` by spectral
/// projected gradient with monotone backtracking, then polishes the KKT system
/// on the detected support with Newton's method.
pub fn minimize_radial(
    p: &Potential,
    cert: &PotentialCertificate,
    gamma: f64,
    grid: &RadialGrid,
    opts: &RadialOptions,
) -> Result<RadialProfile, RadialError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(RadialError::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    let need = 2.0 * radius_bounds(cert, grid.dim).c_plus * gamma.powf(1.0 / grid.dim as f64);
    if grid.r_max < need {
        return Err(RadialError::DomainTooSmall {
            support_radius: need / 2.0,
            r_max: grid.r_max,
        });
    }
    let init = initial_guess(grid, cert.s0, gamma);
    minimize_radial_from(p, gamma, grid, init, opts)
}

/// As [`minimize_radial`] but from a caller-supplied starting point.
pub fn minimize_radial_from(
    p: &Potential,
    gamma: f64,
    grid: &RadialGrid,
    init: Vec<f64>,
    opts: &RadialOptions,
) -> Result<RadialProfile, RadialError> {
    let d = Disc::new(grid);
    let n = d.n;
    if init.len() != n + 1 {
        return Err(RadialError::InvalidInput(format!(
            "initial profile has {} values, grid has {}",
            init.len(),
            n + 1
        )));
    }
    let proj = |y: &[f64], w: &[f64], g: f64| project(y, w, g, opts.exact_mass);
    let mut u = proj(&init[..n], &d.w[..n], gamma);
    u.push(0.0);
    let mut e = d.energy(&u, p);
    let mut g = d.gradient(&u, p);
    let tol_of = |e: f64| opts.tol.unwrap_or(1e-8 * e.abs().max(1.0));
    let mut history = Vec::new();
    if opts.record_history {
        history.push(e);
    }

    let residual = |u: &[f64], g: &[f64]| {
        let y: Vec<f64> = (0..n).map(|i| u[i] - g[i]).collect();
        let pr = proj(&y, &d.w[..n], gamma);
        (0..n).map(|i| (pr[i] - u[i]).abs()).fold(0.0, f64::max)
    };

    let h = d.h;
    let mut alpha = h * h / (4.0 * grid.dim as f64);
    let (alpha_min, alpha_max) = (1e-12, 1e12);
    let mut iterations = 0;
    let mut res = residual(&u, &g);
    let mut polished = false;
    // With polishing, the gradient phase only needs to locate the support; it
    // is resumed at tighter tolerances if the Newton phase is rejected.
    let mut stage_tol = if opts.polish { tol_of(e).max(1e-3) } else { 0.0 };
    loop {
        let mut stalled = false;
        while res >= tol_of(e).max(stage_tol) && iterations < opts.max_iter {
            iterations += 1;
            let y: Vec<f64> = (0..n).map(|i| u[i] - alpha * g[i]).collect();
            let target = proj(&y, &d.w[..n], gamma);
            let dir: Vec<f64> = (0..n).map(|i| target[i] - u[i]).collect();
            let slope = d.descent_slope(&g, &u, &target, gamma);
            if !(slope < 0.0) {
                // Not a descent direction at this step length; shrink and retry.
                alpha = (alpha * 0.1).max(alpha_min);
                if alpha == alpha_min {
                    stalled = true;
                    break;
                }
                continue;
            }
            let mut t = 1.0;
            let accepted = loop {
                let mut trial: Vec<f64> = (0..n).map(|i| (u[i] + t * dir[i]).max(0.0)).collect();
                trial.push(0.0);
                let de = d.energy_change(&u, &trial, p);
                if de <= 1e-4 * t * slope {
                    break Some((trial, de));
                }
                t *= 0.5;
                if t < 1e-20 {
                    break None;
                }
            };
            let Some((un, de)) = accepted else {
                stalled = true;
                break;
            };
            let en = e + de;
            let gn = d.gradient(&un, p);
            let sv: Vec<f64> = (0..n).map(|i| un[i] - u[i]).collect();
            let yv: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
            let sy = d.dot(&sv, &yv);
            let ss = d.dot(&sv, &sv);
            alpha = if sy > 0.0 {
                (ss / sy).clamp(alpha_min, alpha_max)
            } else {
                (alpha * 4.0).min(alpha_max)
            };
            u = un;
            e = en;
            g = gn;
            if opts.record_history {
                history.push(e);
            }
            res = residual(&u, &g);
        }
        if opts.polish && res >= 1e-14 * e.abs().max(1.0) {
            if let Some(v) = polish(&d, p, gamma, &u, opts.exact_mass) {
                let de = d.energy_change(&u, &v, p);
                let gv = d.gradient(&v, p);
                let rv = residual(&v, &gv);
                if de <= 1e-12 * e.abs().max(1.0) && rv < res {
                    u = v;
                    e += de;
                    g = gv;
                    res = rv;
                    polished = true;
                    if opts.record_history {
                        history.push(e);
                    }
                }
            }
        }
        if res < tol_of(e) || stalled || iterations >= opts.max_iter || stage_tol <= tol_of(e) {
            break;
        }
        stage_tol *= 1e-2;
    }
    let _ = g;
    if e >= -1e-8 && !opts.exact_mass && u.iter().any(|&v| v != 0.0) {
        // The zero function is feasible, critical and no worse up to the
        // solver tolerance.
        u.iter_mut().for_each(|v| *v = 0.0);
        e = 0.0;
        res = 0.0;
    }
    let tol = tol_of(e);
    if res >= tol {
        return Err(RadialError::NonConvergence {
            iterations,
            residual: res,
            tol,
        });
    }

    let mut prof = RadialProfile {
        grid: grid.clone(),
        mass: d.mass(&u),
        values: u,
        gamma,
        lambda: 0.0,
        energy: e,
        support_radius: 0.0,
        diagnostics: RadialDiagnostics {
            iterations,
            residual: res,
            tol,
            polished,
            energy_history: history,
            ..Default::default()
        },
    };
    let sr = support_radius(&prof, opts.tau);
    prof.support_radius = sr.radius;
    prof.diagnostics.outward_derivative = sr.outward_derivative;
    if sr.index + 1 >= n {
        return Err(RadialError::DomainTooSmall {
            support_radius: sr.radius,
            r_max: grid.r_max,
        });
    }
    match multiplier_stats(&prof, p, opts.tau) {
        Some((lambda, spread, _)) => {
            prof.lambda = lambda;
            prof.diagnostics.lambda_spread = spread;
        }
        None => prof.lambda = 0.0,
    }
    Ok(prof)
}

/// Newton on `(-Δ_r u + W'(u) = λ on S, u = 0 off S, ∫u = γ)` with a primal-dual
/// active-set update of `S`. Returns `None` if the iteration does not settle.
fn polish(d: &Disc, p: &Potential, gamma: f64, u0: &[f64], exact: bool) -> Option<Vec<f64>> {
    let n = d.n;
    let mut u = u0.to_vec();
    let mut active: Vec<bool> = (0..n).map(|i| u[i] > 0.0).collect();
    if !active.iter().any(|&a| a) {
        return None;
    }
    let saturated = exact || d.mass(&u) >= gamma * (1.0 - 1e-9);
    let support_mean = |u: &[f64], act: &[bool]| {
        let g = d.gradient(u, p);
        let (mut s, mut c) = (0.0, 0.0);
        for i in 0..n {
            if act[i] {
                s += d.w[i] * g[i];
                c += d.w[i];
            }
        }
        s / c
    };
    let mut lambda = if saturated { support_mean(&u, &active) } else { 0.0 };
    for _round in 0..20 {
        let mut ok = false;
        let mut prev = f64::INFINITY;
        for _it in 0..40 {
            let g = d.gradient(&u, p);
            let mut f = vec![0.0; n];
            let mut fmax: f64 = 0.0;
            for i in 0..n {
                if active[i] {
                    f[i] = g[i] - lambda;
                    fmax = fmax.max(f[i].abs());
                }
            }
            let mass_err = if saturated { gamma - d.mass(&u) } else { 0.0 };
            let scale = lambda.abs().max(1.0);
            // Stop at round-off: tiny residual, or a small one that no longer
            // improves.
            let small = fmax < 1e-9 * scale && mass_err.abs() < 1e-12 * gamma;
            if small && (fmax < 1e-14 * scale || fmax > 0.5 * prev) {
                ok = true;
                break;
            }
            prev = fmax;
            let mut jac = BandMatrix::zeros(n, 1, 1);
            for i in 0..n {
                if !active[i] {
                    jac.add(i, i, 1.0);
                    continue;
                }
                let c = 1.0 / (d.w[i] * d.h);
                let mut diag = c * d.s[i] + p.deriv2(u[i]);
                if i > 0 {
                    diag += c * d.s[i - 1];
                    jac.add(i, i - 1, -c * d.s[i - 1]);
                }
                if i + 1 < n {
                    jac.add(i, i + 1, -c * d.s[i]);
                }
                jac.add(i, i, diag);
            }
            let lu = jac.factor(1e-15).ok()?;
            let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
            let a = lu.solve(&rhs);
            let (du, dl) = if saturated {
                let ones: Vec<f64> = (0..n).map(|i| if active[i] { 1.0 } else { 0.0 }).collect();
                let b = lu.solve(&ones);
                let wb = d.dot(&b, &vec![1.0; n]);
                if wb == 0.0 {
                    return None;
                }
                let dl = (mass_err - d.dot(&a, &vec![1.0; n])) / wb;
                ((0..n).map(|i| a[i] + dl * b[i]).collect::<Vec<_>>(), dl)
            } else {
                (a, 0.0)
            };
            for i in 0..n {
                u[i] += du[i];
            }
            lambda += dl;
            if !u.iter().all(|v| v.is_finite()) {
                return None;
            }
        }
        if !ok {
            return None;
        }
        // Active-set update: drop negative nodes, add nodes violating
        // complementarity.
        let g = d.gradient(&u, p);
        let tol = 1e-10 * lambda.abs().max(1.0);
        let mut changed = false;
        for i in 0..n {
            if active[i] && u[i] < 0.0 {
                active[i] = false;
                u[i] = 0.0;
                changed = true;
            } else if !active[i] && g[i] < lambda - tol {
                active[i] = true;
                changed = true;
            }
        }
        if !changed {
            return Some(u);
        }
        if !active.iter().any(|&a| a) {
            return None;
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportRadius {
    pub radius: f64,
    /// Index of the last node above the threshold.
    pub index: usize,
    /// One-sided difference `(u_{k+1} - u_k)/h` at the last support node.
    pub outward_derivative: f64,
}

/// `R = h·max{i : uᵢ > τ·max u}`; zero for the zero profile.
pub fn support_radius(profile: &RadialProfile, tau: f64) -> SupportRadius {
    let top = profile.max_value();
    let h = profile.grid.h();
    if top <= 0.0 {
        return SupportRadius {
            radius: 0.0,
            index: 0,
            outward_derivative: 0.0,
        };
    }
    let k = profile.values.iter().rposition(|&v| v > tau * top).unwrap_or(0);
    let next = profile.values.get(k + 1).copied().unwrap_or(0.0);
    SupportRadius {
        radius: k as f64 * h,
        index: k,
        outward_derivative: (next - profile.values[k]) / h,
    }
}

/// Mean, standard deviation and count of `-Δ_r u + W'(u)` over the nodes
/// strictly inside the support.
fn multiplier_stats(profile: &RadialProfile, p: &Potential, tau: f64) -> Option<(f64, f64, usize)> {
    let sr = support_radius(profile, tau);
    if profile.max_value() <= 0.0 || sr.index == 0 {
        return None;
    }
    let d = Disc::new(&profile.grid);
    let vals: Vec<f64> = (0..sr.index).map(|i| d.neg_laplacian(&profile.values, i) + p.deriv(profile.values[i])).collect();
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    Some((mean, var.sqrt(), vals.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub lambda: f64,
    pub spread: f64,
    pub nodes: usize,
}

/// `λ_γ` as the mean of `-Δ_r u + W'(u)` over interior support nodes.
pub fn extract_multiplier(profile: &RadialProfile, p: &Potential) -> Result<Multiplier, RadialError> {
    const NEEDED: usize = 10;
    match multiplier_stats(profile, p, 1e-8) {
        Some((lambda, spread, nodes)) if nodes >= NEEDED => Ok(Multiplier { lambda, spread, nodes }),
        Some((_, _, nodes)) => Err(RadialError::EmptySupport { nodes, needed: NEEDED }),
        None => Err(RadialError::EmptySupport { nodes: 0, needed: NEEDED }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusBounds {
    pub c_minus: f64,
    pub c_plus: f64,
}

impl RadiusBounds {
    pub fn lower(&self, gamma: f64, dim: usize) -> f64 {
        self.c_minus * gamma.powf(1.0 / dim as f64)
    }

    pub fn upper(&self, gamma: f64, dim: usize) -> f64 {
        self.c_plus * gamma.powf(1.0 / dim as f64)
    }
}

pub fn radius_bounds(cert: &PotentialCertificate, dim: usize) -> RadiusBounds {
    let (w, e) = (unit_ball_volume(dim), 1.0 / dim as f64);
    RadiusBounds {
        c_minus: (1.0 / (cert.s0 * w)).powf(e),
        c_plus: 1.5 * (1.0 / (cert.s1crit * w)).powf(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PohozaevReport {
    /// `∫(-λu + W(u))`.
    pub lhs: f64,
    /// `(1/N - 1/2)∫|∇u|² - ½|S^{N-1}| R^N u'(R)²`.
    pub rhs: f64,
    pub residual: f64,
    /// Largest magnitude among the individual terms of the identity.
    pub scale: f64,
    pub contact_radius: f64,
    pub boundary_derivative: f64,
    /// `(N-2)E + 2B`, negative for the minimiser.
    pub sign_quantity: f64,
    pub b: f64,
    pub sign_ok: bool,
    pub b_negative: bool,
}

impl PohozaevReport {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.residual / self.scale
        }
    }
}

/// Free-boundary position and the normal derivative there, from the last
/// three support nodes: near the contact `u ≈ κ/2·(R - r)²`, with `κ` the
/// discrete second difference. Falls back to the grid radius and the one-sided
/// difference when the support is too short or not convex at its edge.
pub fn contact_estimate(profile: &RadialProfile, tau: f64) -> (f64, f64) {
    let sr = support_radius(profile, tau);
    let (u, h, k) = (&profile.values, profile.grid.h(), sr.index);
    if profile.max_value() <= 0.0 {
        return (0.0, 0.0);
    }
    if k < 2 {
        return (sr.radius, sr.outward_derivative);
    }
    let d_in = (u[k - 1] - u[k - 2]) / h;
    let d_out = (u[k] - u[k - 1]) / h;
    let kappa = (d_out - d_in) / h;
    if !(kappa > 0.0) {
        return (sr.radius, sr.outward_derivative);
    }
    let delta = (2.0 * u[k] / kappa).sqrt().min(h);
    (sr.radius + delta, d_out + kappa * (delta + 0.5 * h))
}

pub fn pohozaev_residual(profile: &RadialProfile, p: &Potential) -> PohozaevReport {
    let n = profile.grid.dim as f64;
    let (a, b) = profile.energy_parts(p);
    let grad = 2.0 * a;
    let (radius, slope) = contact_estimate(profile, 1e-8);
    let boundary = 0.5 * unit_sphere_area(profile.grid.dim) * radius.powf(n) * slope * slope;
    let lam_term = -profile.lambda * profile.mass;
    let grad_term = (1.0 / n - 0.5) * grad;
    let lhs = lam_term + b;
    let rhs = grad_term - boundary;
    let sign_quantity = (n - 2.0) * (a + b) + 2.0 * b;
    let zero = profile.max_value() <= 0.0;
    PohozaevReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        scale: lam_term.abs().max(b.abs()).max(grad_term.abs()).max(boundary),
        contact_radius: radius,
        boundary_derivative: slope,
        sign_quantity,
        b,
        sign_ok: zero || sign_quantity < 0.0,
        b_negative: zero || b < 0.0,
    }
}

/// Plateau length of the comparison ansatz.
pub fn comparison_t0(cert: &PotentialCertificate, gamma: f64, dim: usize) -> f64 {
    let nf = dim as f64;
    (4.0 * unit_ball_volume(dim) * cert.s0 / 3.0).powf(-1.0 / nf) * gamma.powf(1.0 / nf)
}

/// Closed-form upper bound for the energy of the plateau ansatz; meaningful
/// once `t₀(γ) ≥ 1`.
pub fn comparison_energy(cert: &PotentialCertificate, gamma: f64, dim: usize) -> f64 {
    let n = dim as i32;
    let nf = dim as f64;
    let t0 = comparison_t0(cert, gamma, dim);
    let ring = t0.powi(n) * ((1.0 + 1.0 / t0).powi(n) - 1.0);
    unit_sphere_area(dim) * ((cert.s0 * cert.s0 / (2.0 * nf) + cert.w_hat) * ring - cert.m / nf * t0.powi(n))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub gamma: f64,
    pub energy: f64,
    pub lambda: f64,
    pub support_radius: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub pohozaev_residual: f64,
    pub mass: f64,
    pub qualifies: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOptions {
    pub gamma_min: f64,
    pub ratio: f64,
    pub count: usize,
    pub h: f64,
    pub solver: RadialOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            gamma_min: 1.0,
            ratio: 2.0,
            count: 11,
            h: 0.05,
            solver: RadialOptions::default(),
        }
    }
}

impl SweepOptions {
    pub fn gammas(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.gamma_min * self.ratio.powi(k as i32)).collect()
    }
}

/// Solves at one `γ` and summarises it as a sweep row. Solver failures are
/// recorded in the row rather than returned.
pub fn sweep_entry(
    p: &Potential,
    cert: &PotentialCertificate,
    dim: usize,
    gamma: f64,
    h: f64,
    opts: &RadialOptions,
) -> (SweepEntry, Option<RadialProfile>) {
    let bounds = radius_bounds(cert, dim);
    let mut entry = SweepEntry {
        gamma,
        energy: f64::NAN,
        lambda: f64::NAN,
        support_radius: f64::NAN,
        lower_bound: bounds.lower(gamma, dim),
        upper_bound: bounds.upper(gamma, dim),
        pohozaev_residual: f64::NAN,
        mass: f64::NAN,
        qualifies: false,
        error: None,
    };
    let prof = RadialGrid::for_gamma(cert, dim, gamma, h).and_then(|g| minimize_radial(p, cert, gamma, &g, opts));
    match prof {
        Ok(prof) => {
            entry.energy = prof.energy;
            entry.lambda = prof.lambda;
            entry.support_radius = prof.support_radius;
            entry.mass = prof.mass;
            entry.pohozaev_residual = pohozaev_residual(&prof, p).residual;
            let sr = support_radius(&prof, opts.tau);
            entry.qualifies = prof.energy < 0.0
                && (prof.mass - gamma).abs() <= 1e-6 * gamma
                && sr.index + 1 < prof.grid.n_cells;
            (entry, Some(prof))
        }
        Err(e) => {
            entry.error = Some(e.to_string());
            (entry, None)
        }
    }
}

/// Smallest `γ` such that it and every larger `γ` in `entries` qualify.
pub fn threshold_from_entries(entries: &[SweepEntry]) -> Result<f64, RadialError> {
    let mut sorted: Vec<&SweepEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    let mut best = None;
    for e in sorted.iter().rev() {
        if !e.qualifies {
            break;
        }
        best = Some(e.gamma);
    }
    best.ok_or(RadialError::SweepExhausted)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub gamma_threshold: f64,
    pub entries: Vec<SweepEntry>,
}

/// Empirical `γ̃₀` from a geometric sweep.
pub fn gamma_threshold(
    p: &Potential,
    cert: &PotentialCertificate,
    dim: usize,
    sweep: &SweepOptions,
) -> Result<ThresholdReport, RadialError> {
    let entries: Vec<SweepEntry> = sweep
        .gammas()
        .into_iter()
        .map(|g| sweep_entry(p, cert, dim, g, sweep.h, &sweep.solver).0)
        .collect();
    let gamma_threshold = threshold_from_entries(&entries)?;
    Ok(ThresholdReport { gamma_threshold, entries })
}

/// Sweep rows as CSV: `gamma,energy,lambda,R,lower_bound,upper_bound,pohozaev_residual`.
pub fn write_sweep_csv(entries: &[SweepEntry], path: &Path) -> Result<(), RadialError> {
    let mut wr = csv::Writer::from_path(path)?;
    wr.write_record(["gamma", "energy", "lambda", "R", "lower_bound", "upper_bound", "pohozaev_residual"])?;
    for e in entries {
        wr.write_record(
            [e.gamma, e.energy, e.lambda, e.support_radius, e.lower_bound, e.upper_bound, e.pohozaev_residual]
                .iter()
                .map(|v| format!("{v:.12e}")),
        )?;
    }
    wr.flush()?;
    Ok(())
}
