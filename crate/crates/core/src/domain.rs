//! Computational domains on uniform node grids.
//!
//! Every domain lives on a box of nodes `(x0 + i·h, y0 + j·h)`, padded so that
//! the outer neighbourhood `Ω_r^+` fits. Nodes strictly inside `Ω` carry
//! unknowns; all other nodes hold the Dirichlet value zero. The interval
//! family is the one-dimensional case (`ny = 1`).

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kv::{KvError, KvList};

/// Smallest number of cells a hole or a neck may span.
pub const MIN_FEATURE_CELLS: f64 = 5.0;

/// Fraction of the minimal feature size used as the default `r`.
///
/// At exactly one half, `Ω_r^-` pinches at the thinnest neck and holes of
/// `Ω_r^+` close, so the default stays strictly below that.
pub const R_DEFORM_FRACTION: f64 = 0.4;

#[derive(Debug, thiserror::Error)]
pub enum DomainError {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("resolution too coarse: {feature} spans {cells:.2} cells (need at least {MIN_FEATURE_CELLS})")]
    ResolutionTooCoarse { feature: String, cells: f64 },
    #[error("generated mask has {components} components and {holes} holes, expected 1 and {expected_holes}")]
    TopologyMismatch {
        components: usize,
        holes: usize,
        expected_holes: usize,
    },
    #[error("domain was not generated from a tabulated family")]
    UnknownFamily,
    #[error(transparent)]
    Spec(#[from] KvError),
    #[error("mask file: {0}")]
    Mask(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Interval,
    Disk,
    Annulus,
    PerturbedAnnulus,
    KHoledRectangle,
    Custom,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Interval => "interval",
            Family::Disk => "disk",
            Family::Annulus => "annulus",
            Family::PerturbedAnnulus => "perturbed_annulus",
            Family::KHoledRectangle => "k_holed_rectangle",
            Family::Custom => "custom",
        })
    }
}

/// Analytic region description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Shape {
    /// `(0, length)`.
    Interval { length: f64 },
    /// Centred at the origin.
    Disk { radius: f64 },
    Annulus { r_in: f64, r_out: f64 },
    /// Outer disk centred at the origin; the hole is centred at `(offset, 0)`.
    PerturbedAnnulus { r_in: f64, r_out: f64, offset: f64 },
    /// `[-w/2, w/2] × [-h/2, h/2]` with `holes` discs of radius `hole_radius`
    /// evenly spaced along the x axis.
    KHoledRectangle {
        width: f64,
        height: f64,
        holes: usize,
        hole_radius: f64,
    },
    /// Mask read from a file; no analytic description.
    Custom,
}

impl Shape {
    pub fn family(&self) -> Family {
        match self {
            Shape::Interval { .. } => Family::Interval,
            Shape::Disk { .. } => Family::Disk,
            Shape::Annulus { .. } => Family::Annulus,
            Shape::PerturbedAnnulus { .. } => Family::PerturbedAnnulus,
            Shape::KHoledRectangle { .. } => Family::KHoledRectangle,
            Shape::Custom => Family::Custom,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Shape::Interval { .. } => 1,
            _ => 2,
        }
    }

    fn validate(&self) -> Result<(), DomainError> {
        let bad = |m: &str| Err(DomainError::InvalidParameters(m.to_string()));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Shape::Interval { length } if !pos(length) => bad("interval length must be positive"),
            Shape::Disk { radius } if !pos(radius) => bad("disk radius must be positive"),
            Shape::Annulus { r_in, r_out } if !(pos(r_in) && r_in < r_out && r_out.is_finite()) => {
                bad("annulus needs 0 < r_in < r_out")
            }
            Shape::PerturbedAnnulus { r_in, r_out, offset } => {
                if !(pos(r_in) && offset.is_finite() && offset >= 0.0 && r_in + offset < r_out && r_out.is_finite()) {
                    bad("perturbed annulus needs r_in > 0, offset ≥ 0 and r_in + offset < r_out")
                } else {
                    Ok(())
                }
            }
            Shape::KHoledRectangle {
                width,
                height,
                holes,
                hole_radius,
            } => {
                if !(pos(width) && pos(height)) {
                    return bad("rectangle sides must be positive");
                }
                if holes > 0 {
                    let pitch = width / holes as f64;
                    if !(pos(hole_radius) && 2.0 * hole_radius < pitch.min(height)) {
                        return bad("holes must have positive radius and fit inside the rectangle without touching");
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn hole_centers(&self) -> Vec<(f64, f64)> {
        match *self {
            Shape::Annulus { .. } => vec![(0.0, 0.0)],
            Shape::PerturbedAnnulus { offset, .. } => vec![(offset, 0.0)],
            Shape::KHoledRectangle { width, holes, .. } => (0..holes)
                .map(|k| (-width / 2.0 + width * (k as f64 + 0.5) / holes as f64, 0.0))
                .collect(),
            _ => Vec::new(),
        }
    }

    fn hole_radius(&self) -> f64 {
        match *self {
            Shape::Annulus { r_in, .. } | Shape::PerturbedAnnulus { r_in, .. } => r_in,
            Shape::KHoledRectangle { hole_radius, .. } => hole_radius,
            _ => 0.0,
        }
    }

    /// Named feature widths: hole diameters and necks between boundary parts.
    pub fn features(&self) -> Vec<(String, f64)> {
        match *self {
            Shape::Interval { length } => vec![("interval".into(), length)],
            Shape::Disk { radius } => vec![("disk radius".into(), radius)],
            Shape::Annulus { r_in, r_out } => {
                vec![("hole diameter".into(), 2.0 * r_in), ("annulus width".into(), r_out - r_in)]
            }
            Shape::PerturbedAnnulus { r_in, r_out, offset } => vec![
                ("hole diameter".into(), 2.0 * r_in),
                ("thinnest neck".into(), r_out - r_in - offset),
            ],
            Shape::KHoledRectangle {
                width,
                height,
                holes,
                hole_radius,
            } => {
                let mut f = vec![("rectangle height".into(), height), ("rectangle width".into(), width)];
                if holes > 0 {
                    let pitch = width / holes as f64;
                    f.push(("hole diameter".into(), 2.0 * hole_radius));
                    f.push(("hole to edge".into(), (height / 2.0 - hole_radius).min(pitch / 2.0 - hole_radius)));
                    if holes > 1 {
                        f.push(("hole spacing".into(), pitch - 2.0 * hole_radius));
                    }
                }
                f
            }
            Shape::Custom => Vec::new(),
        }
    }

    /// Default `r` for `Ω_r^±`.
    pub fn default_r_deform(&self) -> f64 {
        R_DEFORM_FRACTION * self.features().iter().map(|f| f.1).fold(f64::INFINITY, f64::min)
    }

    /// Signed distance to `∂Ω`, positive inside. Exact for every family.
    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        match *self {
            Shape::Interval { length } => x.min(length - x),
            Shape::Disk { radius } => radius - x.hypot(y),
            Shape::Annulus { r_out, .. } | Shape::PerturbedAnnulus { r_out, .. } => {
                let outer = r_out - x.hypot(y);
                if outer < 0.0 {
                    return outer;
                }
                outer.min(self.hole_distance(x, y))
            }
            Shape::KHoledRectangle { width, height, .. } => {
                let (dx, dy) = (x.abs() - width / 2.0, y.abs() - height / 2.0);
                if dx > 0.0 || dy > 0.0 {
                    return -dx.max(0.0).hypot(dy.max(0.0));
                }
                (-dx).min(-dy).min(self.hole_distance(x, y))
            }
            Shape::Custom => f64::NAN,
        }
    }

    /// Distance to the nearest hole boundary, negative inside a hole.
    fn hole_distance(&self, x: f64, y: f64) -> f64 {
        let rho = self.hole_radius();
        self.hole_centers()
            .iter()
            .map(|&(cx, cy)| (x - cx).hypot(y - cy) - rho)
            .fold(f64::INFINITY, f64::min)
    }

    fn bounding_box(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Interval { length } => (0.0, length, 0.0, 0.0),
            Shape::Disk { radius: r } | Shape::Annulus { r_out: r, .. } | Shape::PerturbedAnnulus { r_out: r, .. } => {
                (-r, r, -r, r)
            }
            Shape::KHoledRectangle { width, height, .. } => (-width / 2.0, width / 2.0, -height / 2.0, height / 2.0),
            Shape::Custom => (0.0, 0.0, 0.0, 0.0),
        }
    }

    /// Parses `family=annulus r_in=0.5 r_out=1.0 h=0.02`. Returns the shape,
    /// the spacing and an optional `r_deform` override.
    pub fn parse_spec(text: &str) -> Result<(Shape, f64, Option<f64>), DomainError> {
        let kv = KvList::parse(text)?;
        let common = ["family", "h", "r_deform"];
        let allow = |extra: &[&str]| {
            let all: Vec<&str> = common.iter().chain(extra).copied().collect();
            kv.only(&all)
        };
        let shape = match kv.str("family")? {
            "interval" => {
                allow(&["length"])?;
                Shape::Interval {
                    length: kv.opt_num("length")?.unwrap_or(1.0),
                }
            }
            "disk" => {
                allow(&["radius"])?;
                Shape::Disk {
                    radius: kv.opt_num("radius")?.unwrap_or(1.0),
                }
            }
            "annulus" => {
                allow(&["r_in", "r_out"])?;
                Shape::Annulus {
                    r_in: kv.num("r_in")?,
                    r_out: kv.num("r_out")?,
                }
            }
            "perturbed_annulus" => {
                allow(&["r_in", "r_out", "offset"])?;
                Shape::PerturbedAnnulus {
                    r_in: kv.num("r_in")?,
                    r_out: kv.num("r_out")?,
                    offset: kv.opt_num("offset")?.unwrap_or(0.2),
                }
            }
            "k_holed_rectangle" => {
                allow(&["width", "height", "holes", "hole_radius"])?;
                let holes = kv.num("holes")?;
                if holes < 0.0 || holes.fract() != 0.0 {
                    return Err(DomainError::InvalidParameters("holes must be a nonnegative integer".into()));
                }
                Shape::KHoledRectangle {
                    width: kv.num("width")?,
                    height: kv.num("height")?,
                    holes: holes as usize,
                    hole_radius: kv.opt_num("hole_radius")?.unwrap_or(0.0),
                }
            }
            other => return Err(DomainError::InvalidParameters(format!("unknown family `{other}`"))),
        };
        Ok((shape, kv.num("h")?, kv.opt_num("r_deform")?))
    }
}

/// Tabulated topological invariants of a generated family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyInfo {
    /// Lusternik–Schnirelmann category.
    pub cat: usize,
    pub betti: Vec<usize>,
    /// `P₁(Ω) = Σ β_k`.
    pub p1: usize,
    /// `2·P₁ − 1`.
    pub morse_lower: usize,
}

impl TopologyInfo {
    fn from_betti(cat: usize, betti: Vec<usize>) -> Self {
        let p1 = betti.iter().sum();
        Self {
            cat,
            betti,
            p1,
            morse_lower: 2 * p1 - 1,
        }
    }

    /// Coefficients of the Poincaré polynomial `P_t = Σ β_k t^k`.
    pub fn poincare(&self) -> &[usize] {
        &self.betti
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridDomain {
    pub shape: Shape,
    pub h: f64,
    /// Coordinates of node `(0, 0)`.
    pub origin: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub r_deform: f64,
    mask: Vec<bool>,
    /// Signed distance to `∂Ω` per node (NaN for custom masks).
    distance: Vec<f64>,
    /// Box index of every unknown, row-major order.
    cells: Vec<usize>,
    /// Unknown number of a box node, `u32::MAX` outside.
    slot: Vec<u32>,
}

const OUTSIDE: u32 = u32::MAX;

impl GridDomain {
    /// Generates the mask of `shape` at spacing `h` and checks that it has the
    /// family's topology.
    pub fn new(shape: Shape, h: f64, r_deform: Option<f64>) -> Result<Self, DomainError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(DomainError::InvalidParameters("h must be positive".into()));
        }
        if shape == Shape::Custom {
            return Err(DomainError::InvalidParameters("custom domains come from a mask file".into()));
        }
        shape.validate()?;
        for (name, width) in shape.features() {
            if width / h < MIN_FEATURE_CELLS {
                return Err(DomainError::ResolutionTooCoarse {
                    feature: name,
                    cells: width / h,
                });
            }
        }
        let r = r_deform.unwrap_or_else(|| shape.default_r_deform());
        if !(r.is_finite() && r > 0.0) {
            return Err(DomainError::InvalidParameters("r_deform must be positive".into()));
        }
        let (x0, x1, y0, y1) = shape.bounding_box();
        let pad = if shape.dim() == 1 { 0 } else { ((r / h).ceil() as usize) + 2 };
        let along = |a: f64, b: f64| ((b - a) / h).round() as usize + 1 + 2 * pad;
        let nx = along(x0, x1);
        let ny = if shape.dim() == 1 { 1 } else { along(y0, y1) };
        // Centre the box on the shape so symmetric shapes give symmetric masks.
        let cx = 0.5 * (x0 + x1) - 0.5 * (nx - 1) as f64 * h;
        let cy = 0.5 * (y0 + y1) - 0.5 * (ny - 1) as f64 * h;
        let origin = if shape.dim() == 1 { (0.0, 0.0) } else { (cx, cy) };
        let distance: Vec<f64> = (0..nx * ny)
            .map(|k| {
                let (x, y) = (origin.0 + (k % nx) as f64 * h, origin.1 + (k / nx) as f64 * h);
                shape.signed_distance(x, y)
            })
            .collect();
        // Half a rounding error keeps boundary nodes on the Dirichlet side.
        let mask: Vec<bool> = distance.iter().map(|d| *d > 1e-9 * h).collect();
        let d = Self::assemble(shape, h, origin, nx, ny, r, mask, distance);
        let expected = d.topology()?.betti.get(1).copied().unwrap_or(0);
        let (components, holes) = d.count_components_and_holes();
        if components != 1 || holes != expected {
            return Err(DomainError::TopologyMismatch {
                components,
                holes,
                expected_holes: expected,
            });
        }
        Ok(d)
    }

    pub fn from_spec(text: &str) -> Result<Self, DomainError> {
        let (shape, h, r) = Shape::parse_spec(text)?;
        Self::new(shape, h, r)
    }

    /// Domain from an explicit mask (row-major, `nx × ny`). Its topology is
    /// not tabulated.
    pub fn from_mask(mask: Vec<bool>, nx: usize, ny: usize, h: f64, r_deform: f64) -> Result<Self, DomainError> {
        if mask.len() != nx * ny || !mask.iter().any(|m| *m) {
            return Err(DomainError::Mask("mask must be nonempty and match nx·ny".into()));
        }
        let frame = |k: usize| {
            let (i, j) = (k % nx, k / nx);
            i == 0 || i + 1 == nx || (ny > 1 && (j == 0 || j + 1 == ny))
        };
        if (0..nx * ny).any(|k| mask[k] && frame(k)) {
            return Err(DomainError::Mask("mask must vanish on the frame".into()));
        }
        Ok(Self::assemble(Shape::Custom, h, (0.0, 0.0), nx, ny, r_deform, mask, vec![f64::NAN; nx * ny]))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        shape: Shape,
        h: f64,
        origin: (f64, f64),
        nx: usize,
        ny: usize,
        r_deform: f64,
        mask: Vec<bool>,
        distance: Vec<f64>,
    ) -> Self {
        let cells: Vec<usize> = (0..nx * ny).filter(|&k| mask[k]).collect();
        let mut slot = vec![OUTSIDE; nx * ny];
        for (s, &k) in cells.iter().enumerate() {
            slot[k] = s as u32;
        }
        Self {
            shape,
            h,
            origin,
            nx,
            ny,
            r_deform,
            mask,
            distance,
            cells,
            slot,
        }
    }

    pub fn family(&self) -> Family {
        self.shape.family()
    }

    pub fn dim(&self) -> usize {
        if self.ny == 1 {
            1
        } else {
            2
        }
    }

    /// `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    /// Number of unknowns.
    pub fn n_interior(&self) -> usize {
        self.cells.len()
    }

    /// `|Ω|` as counted on the grid.
    pub fn area(&self) -> f64 {
        self.n_interior() as f64 * self.cell_volume()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn distance(&self) -> &[f64] {
        &self.distance
    }

    /// Box indices of the unknowns.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Unknown number of box node `k`.
    pub fn slot(&self, k: usize) -> Option<usize> {
        match self.slot[k] {
            OUTSIDE => None,
            s => Some(s as usize),
        }
    }

    pub fn node(&self, k: usize) -> (f64, f64) {
        (
            self.origin.0 + (k % self.nx) as f64 * self.h,
            self.origin.1 + (k / self.nx) as f64 * self.h,
        )
    }

    /// Neighbour unknowns of unknown `s`: up to 2 (1-D) or 4 (2-D) entries,
    /// `None` for a Dirichlet neighbour.
    pub fn neighbours(&self, s: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        let k = self.cells[s];
        let (i, j) = (k % self.nx, k / self.nx);
        let two_d = self.ny > 1;
        let cand = [
            (i > 0).then(|| k - 1),
            (i + 1 < self.nx).then(|| k + 1),
            (two_d && j > 0).then(|| k - self.nx),
            (two_d && j + 1 < self.ny).then(|| k + self.nx),
        ];
        let count = if two_d { 4 } else { 2 };
        cand.into_iter().take(count).map(move |c| c.and_then(|k| self.slot(k)))
    }

    /// Largest `|s - t|` between neighbouring unknowns (half-bandwidth of the
    /// five-point operator in unknown ordering).
    pub fn bandwidth(&self) -> usize {
        (0..self.n_interior())
            .flat_map(|s| self.neighbours(s).flatten().map(move |t| s.abs_diff(t)))
            .max()
            .unwrap_or(0)
    }

    /// Signed distance at an arbitrary point (exact for generated families).
    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        self.shape.signed_distance(x, y)
    }

    /// `Ω_r^- = {x ∈ Ω : dist(x, ∂Ω) > r}` on the nodes.
    pub fn inner_mask(&self, r: f64) -> Vec<bool> {
        match self.shape {
            Shape::Custom => self.mask_distance(r, true),
            _ => self.distance.iter().map(|d| *d > r).collect(),
        }
    }

    /// `Ω_r^+ = {x : dist(x, Ω) < r}` on the nodes.
    pub fn outer_mask(&self, r: f64) -> Vec<bool> {
        match self.shape {
            Shape::Custom => self.mask_distance(r, false),
            _ => self.distance.iter().map(|d| *d > -r).collect(),
        }
    }

    /// Brute-force node distances for custom masks.
    fn mask_distance(&self, r: f64, inner: bool) -> Vec<bool> {
        let reach = (r / self.h).ceil() as isize;
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        (0..self.nx * self.ny)
            .map(|k| {
                let (i, j) = ((k % self.nx) as isize, (k / self.nx) as isize);
                if inner && !self.mask[k] {
                    return false;
                }
                if !inner && self.mask[k] {
                    return true;
                }
                // Inner: no exterior node within r. Outer: some interior node within r.
                let mut hit = false;
                'scan: for dj in -reach..=reach {
                    for di in -reach..=reach {
                        let (a, b) = (i + di, j + dj);
                        if (di * di + dj * dj) as f64 * self.h * self.h > r * r {
                            continue;
                        }
                        let inside = a >= 0 && b >= 0 && a < nx && b < ny && self.mask[(b * nx + a) as usize];
                        if inside != inner {
                            hit = true;
                            break 'scan;
                        }
                    }
                }
                if inner {
                    !hit
                } else {
                    hit
                }
            })
            .collect()
    }

    /// Whether the point lies in `Ω_r^+` (exact for generated families).
    pub fn in_outer(&self, x: f64, y: f64) -> bool {
        match self.shape {
            Shape::Custom => {
                let k = self.nearest_node(x, y);
                k.is_some_and(|k| self.outer_mask(self.r_deform)[k])
            }
            _ => self.signed_distance(x, y) > -self.r_deform,
        }
    }

    /// Whether the point lies in `Ω_r^-`.
    pub fn in_inner(&self, x: f64, y: f64) -> bool {
        match self.shape {
            Shape::Custom => {
                let k = self.nearest_node(x, y);
                k.is_some_and(|k| self.inner_mask(self.r_deform)[k])
            }
            _ => self.signed_distance(x, y) > self.r_deform,
        }
    }

    pub fn nearest_node(&self, x: f64, y: f64) -> Option<usize> {
        let i = ((x - self.origin.0) / self.h).round();
        let j = if self.ny == 1 { 0.0 } else { ((y - self.origin.1) / self.h).round() };
        (i >= 0.0 && j >= 0.0 && (i as usize) < self.nx && (j as usize) < self.ny)
            .then(|| j as usize * self.nx + i as usize)
    }

    /// Tabulated invariants of the generating family.
    pub fn topology(&self) -> Result<TopologyInfo, DomainError> {
        Ok(match self.shape {
            Shape::Interval { .. } | Shape::Disk { .. } => TopologyInfo::from_betti(1, vec![1]),
            Shape::Annulus { .. } | Shape::PerturbedAnnulus { .. } => TopologyInfo::from_betti(2, vec![1, 1]),
            Shape::KHoledRectangle { holes: 0, .. } => TopologyInfo::from_betti(1, vec![1]),
            Shape::KHoledRectangle { holes, .. } => TopologyInfo::from_betti(2, vec![1, holes]),
            Shape::Custom => return Err(DomainError::UnknownFamily),
        })
    }

    /// 4-connected components of the interior mask and holes (8-connected
    /// components of the complement not reaching the frame).
    pub fn count_components_and_holes(&self) -> (usize, usize) {
        count_components_and_holes(&self.mask, self.nx, self.ny)
    }

    /// Writes the interior mask as rows of 0/1, top row first.
    pub fn write_mask_csv(&self, path: &Path) -> Result<(), DomainError> {
        write_mask(&self.mask, self.nx, self.ny, path)
    }

    /// Reads a 0/1 mask written by [`GridDomain::write_mask_csv`].
    pub fn read_mask_csv(path: &Path, h: f64, r_deform: f64) -> Result<Self, DomainError> {
        let text = std::fs::read_to_string(path)?;
        let rows: Vec<Vec<bool>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|c| match c.trim() {
                        "0" => Ok(false),
                        "1" => Ok(true),
                        other => Err(DomainError::Mask(format!("unexpected cell `{other}`"))),
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        let ny = rows.len();
        let nx = rows.first().map_or(0, Vec::len);
        if ny == 0 || rows.iter().any(|r| r.len() != nx) {
            return Err(DomainError::Mask("rows must be nonempty and of equal length".into()));
        }
        let mask = rows.into_iter().rev().flatten().collect();
        Self::from_mask(mask, nx, ny, h, r_deform)
    }
}

/// Writes any node mask as rows of 0/1, top row first.
pub fn write_mask(mask: &[bool], nx: usize, ny: usize, path: &Path) -> Result<(), DomainError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for j in (0..ny).rev() {
        let row: Vec<&str> = (0..nx).map(|i| if mask[j * nx + i] { "1" } else { "0" }).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn count_components_and_holes(mask: &[bool], nx: usize, ny: usize) -> (usize, usize) {
    let components = flood(mask, nx, ny, true, false).len();
    let holes = flood(mask, nx, ny, false, true)
        .into_iter()
        .filter(|touches_frame| !touches_frame)
        .count();
    (components, holes)
}

/// Labels the components of `{mask == value}`; returns, per component,
/// whether it reaches the frame.
fn flood(mask: &[bool], nx: usize, ny: usize, value: bool, diagonal: bool) -> Vec<bool> {
    let mut seen = vec![false; nx * ny];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..nx * ny {
        if seen[start] || mask[start] != value {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut frame = false;
        while let Some(k) = queue.pop_front() {
            let (i, j) = ((k % nx) as isize, (k / nx) as isize);
            frame |= i == 0 || j == 0 || i as usize + 1 == nx || j as usize + 1 == ny;
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    if (di == 0 && dj == 0) || (!diagonal && di != 0 && dj != 0) {
                        continue;
                    }
                    let (a, b) = (i + di, j + dj);
                    if a < 0 || b < 0 || a as usize >= nx || b as usize >= ny {
                        continue;
                    }
                    let q = b as usize * nx + a as usize;
                    if !seen[q] && mask[q] == value {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        out.push(frame);
    }
    out
}
