//! Grids, per-point solution records and the warm-started grid sweep.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::numerics::{self, NumericsError, SolverConfig};

/// Outcome of the root search at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointStatus {
    Resolved,
    NoRoot,
    MultiRoot,
    DomainFail,
}

impl PointStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PointStatus::Resolved => "resolved",
            PointStatus::NoRoot => "no_root",
            PointStatus::MultiRoot => "multi_root",
            PointStatus::DomainFail => "domain_fail",
        }
    }

    /// Resolved and multi-root points carry a root and a solution value.
    pub fn has_value(self) -> bool {
        matches!(self, PointStatus::Resolved | PointStatus::MultiRoot)
    }
}

impl fmt::Display for PointStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PointStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "resolved" => Ok(PointStatus::Resolved),
            "no_root" => Ok(PointStatus::NoRoot),
            "multi_root" => Ok(PointStatus::MultiRoot),
            "domain_fail" => Ok(PointStatus::DomainFail),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

/// Root selected at a point, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOutcome {
    pub q: Option<f64>,
    pub status: PointStatus,
}

impl RootOutcome {
    pub(crate) fn fail(status: PointStatus) -> RootOutcome {
        RootOutcome { q: None, status }
    }
}

/// Checks that an axis is non-empty, finite and strictly increasing.
pub fn check_axis(name: &str, axis: &[f64]) -> Result<(), String> {
    if axis.is_empty() {
        return Err(format!("{name} axis is empty"));
    }
    if let Some(v) = axis.iter().find(|v| !v.is_finite()) {
        return Err(format!("{name} axis contains non-finite value {v}"));
    }
    if let Some(w) = axis.windows(2).find(|w| w[0] >= w[1]) {
        return Err(format!(
            "{name} axis is not strictly increasing ({} then {})",
            w[0], w[1]
        ));
    }
    Ok(())
}

/// `count` equispaced points from `min` to `max` inclusive.
pub fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![min],
        n => {
            let step = (max - min) / (n - 1) as f64;
            (0..n)
                .map(|k| {
                    if k == n - 1 {
                        max
                    } else {
                        min + step * k as f64
                    }
                })
                .collect()
        }
    }
}

/// Solves `g(q) = 0` on `[lo, hi]` with continuation semantics.
///
/// One root gives `Resolved`. Several roots give `MultiRoot` with the root
/// nearest `warm` (the lowest root when cold). A constraint that vanishes at
/// every sample is degenerate: `MultiRoot` at `warm`, or the range midpoint.
pub(crate) fn select_root<G>(
    g: G,
    lo: f64,
    hi: f64,
    cfg: &SolverConfig,
    warm: Option<f64>,
) -> RootOutcome
where
    G: Fn(f64) -> Option<f64>,
{
    if !(lo < hi) {
        return RootOutcome::fail(PointStatus::DomainFail);
    }
    let scan = numerics::scan(&g, lo, hi, cfg.scan_points);
    if scan.valid == 0 {
        return RootOutcome::fail(PointStatus::DomainFail);
    }
    if scan.valid >= 2 && scan.max_abs <= cfg.resid_tol {
        let q = warm.map(|w| w.clamp(lo, hi)).unwrap_or(0.5 * (lo + hi));
        return RootOutcome {
            q: Some(q),
            status: PointStatus::MultiRoot,
        };
    }
    if scan.brackets.is_empty() {
        return RootOutcome::fail(PointStatus::NoRoot);
    }
    let mut roots = Vec::with_capacity(scan.brackets.len());
    let mut domain_trouble = false;
    for br in &scan.brackets {
        match numerics::solve_bracketed(|q| g(q).unwrap_or(f64::NAN), *br, cfg) {
            Ok(q) => roots.push(q),
            Err(NumericsError::NonFinite { .. }) => domain_trouble = true,
            Err(_) => {}
        }
    }
    match roots.len() {
        0 if domain_trouble => RootOutcome::fail(PointStatus::DomainFail),
        0 => RootOutcome::fail(PointStatus::NoRoot),
        1 => RootOutcome {
            q: Some(roots[0]),
            status: PointStatus::Resolved,
        },
        _ => {
            let q = match warm {
                Some(w) => roots
                    .iter()
                    .copied()
                    .fold(None, |best: Option<f64>, r| match best {
                        Some(b) if (b - w).abs() <= (r - w).abs() => Some(b),
                        _ => Some(r),
                    })
                    .expect("non-empty"),
                None => roots[0],
            };
            RootOutcome {
                q: Some(q),
                status: PointStatus::MultiRoot,
            }
        }
    }
}

/// Row-major sweep over an `nx` by `ny` grid with warm-start continuation.
///
/// The first column is solved bottom to top, each point seeded by the one
/// below. Every row is then swept left to right, each point seeded by its
/// left neighbour. Rows run in parallel after the first column, so the
/// result does not depend on the number of worker threads. `point` returns
/// its record plus the root to hand on; `None` keeps the incoming seed.
pub(crate) fn sweep<T, F>(nx: usize, ny: usize, point: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize, Option<f64>) -> (T, Option<f64>) + Sync,
{
    if nx == 0 || ny == 0 {
        return Vec::new();
    }
    let mut first_column = Vec::with_capacity(ny);
    let mut warm = None;
    for j in 0..ny {
        let (rec, root) = point(0, j, warm);
        warm = root.or(warm);
        first_column.push((rec, warm));
    }
    let rows: Vec<Vec<T>> = first_column
        .into_par_iter()
        .enumerate()
        .map(|(j, (rec, seed))| {
            let mut row = Vec::with_capacity(nx);
            row.push(rec);
            let mut warm = seed;
            for i in 1..nx {
                let (rec, root) = point(i, j, warm);
                warm = root.or(warm);
                row.push(rec);
            }
            row
        })
        .collect();
    rows.into_iter().flatten().collect()
}

/// One grid point of a `pq` solution: root `q` (or `p` for the `y`-scaled
/// kind) and solution value `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub status: PointStatus,
    pub q: Option<f64>,
    pub value: Option<f64>,
}

/// Solution values on a rectangular grid, stored row-major (`j * nx + i`,
/// `i` along `axis1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub points: Vec<FieldPoint>,
}

/// One grid point of a Hamilton-Jacobi solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionPoint {
    pub status: PointStatus,
    pub q: Option<f64>,
    pub action: Option<f64>,
    pub momentum: Option<f64>,
}

/// Action `S(x, t)` on a rectangular grid, row-major like [`SolutionField`].
#[derive(Debug, Clone, PartialEq)]
pub struct ActionField {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub points: Vec<ActionPoint>,
}

/// Read access shared by both field kinds.
pub trait GridField {
    fn axis1(&self) -> &[f64];
    fn axis2(&self) -> &[f64];
    fn status(&self, i: usize, j: usize) -> PointStatus;
    fn q(&self, i: usize, j: usize) -> Option<f64>;
    fn value(&self, i: usize, j: usize) -> Option<f64>;

    fn index(&self, i: usize, j: usize) -> usize {
        j * self.axis1().len() + i
    }

    fn len(&self) -> usize {
        self.axis1().len() * self.axis2().len()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn count_status(&self, status: PointStatus) -> usize {
        let (nx, ny) = (self.axis1().len(), self.axis2().len());
        (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .filter(|&(i, j)| self.status(i, j) == status)
            .count()
    }
}

impl GridField for SolutionField {
    fn axis1(&self) -> &[f64] {
        &self.axis1
    }
    fn axis2(&self) -> &[f64] {
        &self.axis2
    }
    fn status(&self, i: usize, j: usize) -> PointStatus {
        self.points[self.index(i, j)].status
    }
    fn q(&self, i: usize, j: usize) -> Option<f64> {
        self.points[self.index(i, j)].q
    }
    fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.points[self.index(i, j)].value
    }
}

impl GridField for ActionField {
    fn axis1(&self) -> &[f64] {
        &self.x
    }
    fn axis2(&self) -> &[f64] {
        &self.t
    }
    fn status(&self, i: usize, j: usize) -> PointStatus {
        self.points[self.index(i, j)].status
    }
    fn q(&self, i: usize, j: usize) -> Option<f64> {
        self.points[self.index(i, j)].q
    }
    fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.points[self.index(i, j)].action
    }
}
