//! Double-well potentials and their numerical certification.
//!
//! A [`Potential`] is an energy density `W` together with its first two
//! derivatives. [`certify`] checks the structural axioms on a sampled range
//! and extracts the landmark constants used by every solver:
//!
//! * `s0`, the smallest positive location of the (negative) global minimum,
//!   with `m = -W(s0)`;
//! * `s1crit`, the first positive zero of `W'`;
//! * `a_plateau`, the supremum of `t` such that `W' >= 0` on `[0, t]`;
//! * `w_minus`, the minimum of `W'` on `[0, s0]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kv::{KvError, KvList};
use crate::spline::CubicSpline;

#[derive(Debug, thiserror::Error)]
pub enum PotentialError {
    #[error("invalid potential parameters: {0}")]
    InvalidParameters(String),
    #[error("W(0) = {value:e}, W'(0) = {deriv:e}: the origin must be a critical point at level 0")]
    OriginNotCritical { value: f64, deriv: f64 },
    #[error("no negative global minimum on the sample range (min W = {min:e} at s = {at})")]
    NoNegativeMinimum { min: f64, at: f64 },
    #[error("global minimum sits at s = {0} <= 0")]
    MinimumNotPositive(f64),
    #[error("sample range [{0}, {1}] must contain 0 in its interior")]
    BadRange(f64, f64),
    #[error(transparent)]
    Spec(#[from] KvError),
    #[error("potential table: {0}")]
    Table(String),
}

/// Growth constants `|W'(s)| <= A + B|s|^(p-1)`, carried as metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthBound {
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

#[derive(Debug, Clone)]
enum Shape {
    /// `s^2 (s - a1)(s - a2)`.
    Quartic { a1: f64, a2: f64 },
    /// Coefficients in increasing degree.
    Polynomial(Vec<f64>),
    Table(CubicSpline),
}

#[derive(Debug, Clone)]
pub struct Potential {
    shape: Shape,
    /// Coefficient of the linear perturbation `W(s) + tilt * s`.
    tilt: f64,
    sample_range: (f64, f64),
    growth: Option<GrowthBound>,
}

impl Potential {
    /// The asymmetric quartic `W(s) = s^2 (s - a1)(s - a2)` with `0 < a1 < a2`.
    pub fn quartic(a1: f64, a2: f64) -> Result<Self, PotentialError> {
        if !(a1 > 0.0 && a2 > a1 && a2.is_finite()) {
            return Err(PotentialError::InvalidParameters(format!(
                "quartic needs 0 < a1 < a2, got a1 = {a1}, a2 = {a2}"
            )));
        }
        Ok(Self {
            shape: Shape::Quartic { a1, a2 },
            tilt: 0.0,
            sample_range: (-0.5 * a2, 2.0 * a2),
            growth: Some(GrowthBound {
                a: 0.0,
                b: 4.0 + 3.0 * (a1 + a2) + 2.0 * a1 * a2,
                p: 4.0,
            }),
        })
    }

    /// `W(s) = sum_k coeffs[k] s^k` certified on `range`.
    pub fn polynomial(coeffs: Vec<f64>, range: (f64, f64)) -> Result<Self, PotentialError> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(PotentialError::InvalidParameters("empty or non-finite coefficients".into()));
        }
        check_range(range)?;
        Ok(Self {
            shape: Shape::Polynomial(coeffs),
            tilt: 0.0,
            sample_range: range,
            growth: None,
        })
    }

    /// `W(s) = k s^2 / 2`, the linear-response potential.
    pub fn quadratic(k: f64) -> Self {
        Self {
            shape: Shape::Polynomial(vec![0.0, 0.0, 0.5 * k]),
            tilt: 0.0,
            sample_range: (-4.0, 4.0),
            growth: Some(GrowthBound { a: 0.0, b: k.abs(), p: 2.0 }),
        }
    }

    /// Cubic-spline interpolant through `(s, W(s))` samples.
    pub fn table(s: Vec<f64>, w: Vec<f64>) -> Result<Self, PotentialError> {
        let spline = CubicSpline::natural(s, w)
            .ok_or_else(|| PotentialError::Table("need >= 3 strictly increasing finite samples".into()))?;
        let range = spline.domain();
        check_range(range)?;
        Ok(Self {
            shape: Shape::Table(spline),
            tilt: 0.0,
            sample_range: range,
            growth: None,
        })
    }

    /// Reads a two-column `s,W` CSV (header optional).
    pub fn table_from_csv(path: &Path) -> Result<Self, PotentialError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| PotentialError::Table(format!("{}: {e}", path.display())))?;
        let (mut s, mut w) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| PotentialError::Table(e.to_string()))?;
            let parsed: Option<(f64, f64)> = match (rec.get(0), rec.get(1)) {
                (Some(a), Some(b)) => a.parse().ok().zip(b.parse().ok()),
                _ => None,
            };
            match parsed {
                Some((a, b)) => {
                    s.push(a);
                    w.push(b);
                }
                None if line == 0 => continue,
                None => {
                    return Err(PotentialError::Table(format!(
                        "{}: line {} is not a numeric s,W pair",
                        path.display(),
                        line + 1
                    )))
                }
            }
        }
        Self::table(s, w)
    }

    /// Parses `kind=quartic a1=.. a2=..`, `kind=quadratic k=..` or
    /// `kind=table file=..` (relative paths resolve against `base`).
    pub fn from_spec(text: &str, base: Option<&Path>) -> Result<Self, PotentialError> {
        let kv = KvList::parse(text)?;
        let p = match kv.str("kind")? {
            "quartic" => {
                kv.only(&["kind", "a1", "a2", "tilt"])?;
                Self::quartic(kv.num("a1")?, kv.num("a2")?)?
            }
            "quadratic" => {
                kv.only(&["kind", "k", "tilt"])?;
                Self::quadratic(kv.num("k")?)
            }
            "table" => {
                kv.only(&["kind", "file", "tilt"])?;
                let file = Path::new(kv.str("file")?);
                let path = match base {
                    Some(b) if file.is_relative() => b.join(file),
                    _ => file.to_path_buf(),
                };
                Self::table_from_csv(&path)?
            }
            other => {
                return Err(PotentialError::InvalidParameters(format!("unknown potential kind `{other}`")))
            }
        };
        Ok(match kv.opt_num("tilt")? {
            Some(a) => p.tilted(a),
            None => p,
        })
    }

    fn base(&self, s: f64) -> (f64, f64, f64) {
        match &self.shape {
            Shape::Quartic { a1, a2 } => {
                let (sum, prod) = (a1 + a2, a1 * a2);
                let s2 = s * s;
                (
                    s2 * (s - a1) * (s - a2),
                    s * (4.0 * s2 - 3.0 * sum * s + 2.0 * prod),
                    12.0 * s2 - 6.0 * sum * s + 2.0 * prod,
                )
            }
            Shape::Polynomial(c) => {
                // Horner for the value and both derivatives.
                let (mut v, mut d, mut dd) = (0.0, 0.0, 0.0);
                for &ck in c.iter().rev() {
                    dd = dd * s + 2.0 * d;
                    d = d * s + v;
                    v = v * s + ck;
                }
                (v, d, dd)
            }
            Shape::Table(sp) => sp.eval_all(s),
        }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        self.base(s).0 + self.tilt * s
    }

    #[inline]
    pub fn deriv(&self, s: f64) -> f64 {
        self.base(s).1 + self.tilt
    }

    #[inline]
    pub fn deriv2(&self, s: f64) -> f64 {
        self.base(s).2
    }

    pub fn sample_range(&self) -> (f64, f64) {
        self.sample_range
    }

    pub fn with_sample_range(mut self, range: (f64, f64)) -> Result<Self, PotentialError> {
        check_range(range)?;
        self.sample_range = range;
        Ok(self)
    }

    pub fn growth(&self) -> Option<GrowthBound> {
        self.growth
    }

    pub fn tilt_coefficient(&self) -> f64 {
        self.tilt
    }

    /// `s -> W(s) + a s`. A pair `(u, lambda)` solves the constrained problem
    /// for `W` iff `(u, lambda + a)` solves it for the tilted potential.
    pub fn tilted(&self, a: f64) -> Self {
        let mut p = self.clone();
        p.tilt += a;
        p
    }

    pub fn describe(&self) -> String {
        let base = match &self.shape {
            Shape::Quartic { a1, a2 } => format!("kind=quartic a1={a1} a2={a2}"),
            Shape::Polynomial(c) => format!("kind=polynomial coeffs={c:?}"),
            Shape::Table(sp) => {
                let (lo, hi) = sp.domain();
                format!("kind=table range=[{lo},{hi}]")
            }
        };
        match self.tilt {
            t if t == 0.0 => base,
            t => format!("{base} tilt={t}"),
        }
    }
}

/// Free-function form of [`Potential::quartic`].
pub fn quartic(a1: f64, a2: f64) -> Result<Potential, PotentialError> {
    Potential::quartic(a1, a2)
}

/// Free-function form of [`Potential::tilted`].
pub fn tilt(p: &Potential, a: f64) -> Potential {
    p.tilted(a)
}

fn check_range((lo, hi): (f64, f64)) -> Result<(), PotentialError> {
    if lo < 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite() {
        Ok(())
    } else {
        Err(PotentialError::BadRange(lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    /// `W(0) = 0`.
    ZeroValue,
    /// `W'(0) = 0`.
    ZeroSlope,
    /// `W''(0) > 0`.
    OriginConvex,
    /// Negative global minimum at some `s0 > 0`.
    NegativeMinimum,
    /// `W' > 0` on `]s0, s0 + delta]`.
    UpperBarrier,
    /// `W''(s0) > 0`.
    MinimumConvex,
    /// Subcritical growth; recorded, never checked.
    Growth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomFlag {
    pub axiom: Axiom,
    /// `None` for metadata-only axioms.
    pub passed: Option<bool>,
    pub violation_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialCertificate {
    pub s0: f64,
    pub m: f64,
    pub s1crit: f64,
    pub a_plateau: f64,
    pub w_minus: f64,
    /// `max |W|` on `[0, s0]`.
    pub w_hat: f64,
    pub axiom_flags: Vec<AxiomFlag>,
}

impl PotentialCertificate {
    pub fn flag(&self, axiom: Axiom) -> Option<&AxiomFlag> {
        self.axiom_flags.iter().find(|f| f.axiom == axiom)
    }

    /// True when every checkable axiom passed.
    pub fn all_passed(&self) -> bool {
        self.axiom_flags.iter().all(|f| f.passed != Some(false))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    pub samples: usize,
    /// Tolerance on `|W(0)|` and `|W'(0)|`, relative to `max(1, max|W|)`.
    pub origin_tol: f64,
    /// The barrier is checked on `]s0, s0 (1 + barrier_frac)]`.
    pub barrier_frac: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            samples: 100_000,
            origin_tol: 1e-12,
            barrier_frac: 0.05,
        }
    }
}

pub fn certify(p: &Potential) -> Result<PotentialCertificate, PotentialError> {
    certify_with(p, &CertifyOptions::default())
}

pub fn certify_with(p: &Potential, opts: &CertifyOptions) -> Result<PotentialCertificate, PotentialError> {
    let (lo, hi) = p.sample_range;
    let n = opts.samples.max(16);
    let step = (hi - lo) / n as f64;
    let grid: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    let values: Vec<f64> = grid.iter().map(|&s| p.eval(s)).collect();
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));

    let (w0, d0) = (p.eval(0.0), p.deriv(0.0));
    let tol0 = opts.origin_tol * scale;
    if w0.abs() > tol0 || d0.abs() > tol0 {
        return Err(PotentialError::OriginNotCritical { value: w0, deriv: d0 });
    }
    let mut flags = vec![
        AxiomFlag { axiom: Axiom::ZeroValue, passed: Some(true), violation_at: None },
        AxiomFlag { axiom: Axiom::ZeroSlope, passed: Some(true), violation_at: None },
    ];
    let convex0 = p.deriv2(0.0) > 0.0;
    flags.push(AxiomFlag {
        axiom: Axiom::OriginConvex,
        passed: Some(convex0),
        violation_at: (!convex0).then_some(0.0),
    });

    // Global minimum; the first index wins ties so s0 is the smallest minimiser.
    let kmin = (0..grid.len()).fold(0, |best, k| if values[k] < values[best] { k } else { best });
    if values[kmin] >= 0.0 {
        return Err(PotentialError::NoNegativeMinimum { min: values[kmin], at: grid[kmin] });
    }
    if grid[kmin] <= 0.0 {
        return Err(PotentialError::MinimumNotPositive(grid[kmin]));
    }
    let s0 = refine_minimum(p, grid[kmin.saturating_sub(1)], grid[(kmin + 1).min(n)]);
    let m = -p.eval(s0);
    flags.push(AxiomFlag { axiom: Axiom::NegativeMinimum, passed: Some(true), violation_at: None });

    // First sample strictly to the right of the origin.
    let k0 = grid.partition_point(|&s| s <= 0.0);
    let first = |pred: &dyn Fn(f64) -> bool| (k0..grid.len()).find(|&k| pred(p.deriv(grid[k])));
    let s1crit = match first(&|d| d <= 0.0) {
        Some(k) => bisect(|s| p.deriv(s) > 0.0, grid[k - 1].max(0.0), grid[k]),
        None => s0,
    };
    let a_plateau = match first(&|d| d < 0.0) {
        Some(k) => bisect(|s| p.deriv(s) >= 0.0, grid[k - 1].max(0.0), grid[k]),
        None => s0,
    };

    // Minimum of W' on [0, s0], refined by golden section.
    let kend = grid.partition_point(|&s| s <= s0);
    let kw = (k0.saturating_sub(1)..kend).fold(k0.saturating_sub(1), |best, k| {
        if p.deriv(grid[k]) < p.deriv(grid[best]) { k } else { best }
    });
    let (wa, wb) = (grid[kw.saturating_sub(1)].max(0.0), grid[(kw + 1).min(n)].min(s0));
    let w_minus = golden_min(|s| p.deriv(s), wa, wb).min(0.0).min(p.deriv(s0));

    let w_hat = grid[k0.saturating_sub(1)..kend]
        .iter()
        .map(|&s| p.eval(s).abs())
        .fold(m, f64::max);

    let barrier_end = s0 * (1.0 + opts.barrier_frac);
    let barrier_violation = (1..=1000)
        .map(|j| s0 + (barrier_end - s0) * j as f64 / 1000.0)
        .find(|&s| p.deriv(s) <= 0.0);
    flags.push(AxiomFlag {
        axiom: Axiom::UpperBarrier,
        passed: Some(barrier_violation.is_none()),
        violation_at: barrier_violation,
    });
    let convex_min = p.deriv2(s0) > 0.0;
    flags.push(AxiomFlag {
        axiom: Axiom::MinimumConvex,
        passed: Some(convex_min),
        violation_at: (!convex_min).then_some(s0),
    });
    flags.push(AxiomFlag { axiom: Axiom::Growth, passed: None, violation_at: None });

    Ok(PotentialCertificate {
        s0,
        m,
        s1crit,
        a_plateau,
        w_minus,
        w_hat,
        axiom_flags: flags,
    })
}

/// Bisection for the boundary of `{s : keep(s)}` between `a` (keep) and `b`
/// (not keep), to relative tolerance 1e-12 or until the bracket stops shrinking.
pub(crate) fn bisect(keep: impl Fn(f64) -> bool, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b || (b - a) <= 1e-12 * b.abs().max(a.abs()) * 0.5 {
            break;
        }
        if keep(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

fn refine_minimum(p: &Potential, a: f64, b: f64) -> f64 {
    // W' < 0 left of the minimum and > 0 right of it.
    if p.deriv(a) < 0.0 && p.deriv(b) > 0.0 {
        bisect(|s| p.deriv(s) < 0.0, a, b)
    } else {
        golden_min(|s| p.eval(s), a, b)
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b)).min(fc).min(fd)
}
