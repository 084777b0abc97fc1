//! General solutions of `F(p, q) = 0`, `F(f(x) p, q) = 0` and
//! `F(p, h(y) q) = 0` with an explicit branch.
//!
//! For the explicit kind `p = f(q)` the solution family is
//!
//! ```text
//! u = x f(q) + y q - phi(q),        x f'(q) + y = phi'(q)
//! ```
//!
//! where `phi` is arbitrary and the second relation fixes `q(x, y)`. The
//! constraint is exactly `du/dq = 0`, so `u_x = f(q)` and `u_y = q`.
//!
//! For `p = G(q) / f(x)` the coefficient of `G(q)` is
//!
//! ```text
//! K(x) = x / f(x) + ∫_{x_b}^{x} s f'(s) / f(s)^2 ds
//! ```
//!
//! which reduces to `x / f(x)` when `f` is constant and in general satisfies
//! `K'(x) = 1 / f(x)`, the condition for `u_x = G(q) / f(x)`. The base point
//! `x_b` selects one member of the family. The `h(y)` kind mirrors this with
//! the roles of `(x, p)` and `(y, q)` exchanged.

use thiserror::Error;

use crate::expr::{CompiledExpr, EvalError, Expression};
use crate::field::{self, FieldPoint, PointStatus, RootOutcome, SolutionField};
use crate::numerics::{integrate_adaptive, NumericsError, SolverConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PqError {
    #[error("`{name}` may only use variable `{allowed}`: {source}")]
    Variables {
        name: &'static str,
        allowed: &'static str,
        source: EvalError,
    },
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("scale function vanishes at {at}")]
    ZeroScale { at: f64 },
    #[error("scale integral failed: {0}")]
    Quadrature(#[from] NumericsError),
    #[error("{0}")]
    Grid(String),
}

/// Which explicit branch the problem supplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PqKind {
    /// `p = f(q)`.
    Explicit,
    /// `p = G(q) / f(x)`.
    ScaledX,
    /// `q = G(p) / h(y)`.
    ScaledY,
}

impl PqKind {
    /// The variable the arbitrary function is written in.
    pub fn root_var(self) -> &'static str {
        match self {
            PqKind::Explicit | PqKind::ScaledX => "q",
            PqKind::ScaledY => "p",
        }
    }
}

#[derive(Debug, Clone)]
struct Fun {
    value: CompiledExpr,
    slope: CompiledExpr,
}

impl Fun {
    fn new(name: &'static str, e: &Expression, var: &'static str) -> Result<Fun, PqError> {
        let wrap = |source| PqError::Variables {
            name,
            allowed: var,
            source,
        };
        Ok(Fun {
            value: e.compile(&[var]).map_err(wrap)?,
            slope: e.differentiate(var).compile(&[var]).map_err(wrap)?,
        })
    }

    fn at(&self, v: f64) -> Result<f64, EvalError> {
        self.value.eval(&[v])
    }

    fn slope(&self, v: f64) -> Result<f64, EvalError> {
        self.slope.eval(&[v])
    }
}

#[derive(Debug, Clone)]
enum Branch {
    Explicit { f: Fun },
    Scaled { scale: Fun, g: Fun, base: f64 },
}

/// A first-order PDE with an explicit branch plus the arbitrary function.
#[derive(Debug, Clone)]
pub struct PqProblem {
    kind: PqKind,
    branch: Branch,
    phi: Fun,
    sources: Vec<(&'static str, Expression)>,
}

impl PqProblem {
    /// `p = f(q)` with arbitrary `phi(q)`.
    pub fn explicit(f: Expression, phi: Expression) -> Result<PqProblem, PqError> {
        Ok(PqProblem {
            kind: PqKind::Explicit,
            branch: Branch::Explicit {
                f: Fun::new("f", &f, "q")?,
            },
            phi: Fun::new("phi", &phi, "q")?,
            sources: vec![("f", f), ("phi", phi)],
        })
    }

    /// `p = G(q) / f(x)` with arbitrary `phi(q)`.
    pub fn scaled_x(
        scale: Expression,
        g: Expression,
        phi: Expression,
    ) -> Result<PqProblem, PqError> {
        Ok(PqProblem {
            kind: PqKind::ScaledX,
            branch: Branch::Scaled {
                scale: Fun::new("scale", &scale, "x")?,
                g: Fun::new("G", &g, "q")?,
                base: 0.0,
            },
            phi: Fun::new("phi", &phi, "q")?,
            sources: vec![("scale", scale), ("G", g), ("phi", phi)],
        })
    }

    /// `q = G(p) / h(y)` with arbitrary `phi(p)`.
    pub fn scaled_y(
        scale: Expression,
        g: Expression,
        phi: Expression,
    ) -> Result<PqProblem, PqError> {
        Ok(PqProblem {
            kind: PqKind::ScaledY,
            branch: Branch::Scaled {
                scale: Fun::new("scale", &scale, "y")?,
                g: Fun::new("G", &g, "p")?,
                base: 0.0,
            },
            phi: Fun::new("phi", &phi, "p")?,
            sources: vec![("scale", scale), ("G", g), ("phi", phi)],
        })
    }

    /// Base point of the scale integral (ignored for the explicit kind).
    pub fn with_scale_base(mut self, at: f64) -> PqProblem {
        if let Branch::Scaled { base, .. } = &mut self.branch {
            *base = at;
        }
        self
    }

    pub fn kind(&self) -> PqKind {
        self.kind
    }

    /// The defining expressions by role name.
    pub fn expression(&self, role: &str) -> Option<&Expression> {
        self.sources
            .iter()
            .find(|(n, _)| *n == role)
            .map(|(_, e)| e)
    }

    /// Coefficient `K` of `G` at the scaled coordinate `c` (`x` or `y`).
    fn scale_coefficient(&self, c: f64, cfg: &SolverConfig) -> Result<f64, PqError> {
        let Branch::Scaled { scale, base, .. } = &self.branch else {
            return Ok(0.0);
        };
        let s = scale.at(c)?;
        if s == 0.0 {
            return Err(PqError::ZeroScale { at: c });
        }
        let mut k = c / s;
        if !scale.slope.is_zero() {
            if scale.at(*base)? == 0.0 {
                return Err(PqError::ZeroScale { at: *base });
            }
            let integrand = |z: f64| match (scale.at(z), scale.slope(z)) {
                (Ok(s), Ok(ds)) if s != 0.0 => z * ds / (s * s),
                _ => f64::NAN,
            };
            k += integrate_adaptive(integrand, *base, c, cfg.quad_tol).map_err(|e| match e {
                NumericsError::NonFinite { x } => PqError::ZeroScale { at: x },
                other => other.into(),
            })?;
        }
        Ok(k)
    }

    fn point(&self, x: f64, y: f64, cfg: &SolverConfig) -> Result<PointContext<'_>, PqError> {
        let k = match self.kind {
            PqKind::Explicit => 0.0,
            PqKind::ScaledX => self.scale_coefficient(x, cfg)?,
            PqKind::ScaledY => self.scale_coefficient(y, cfg)?,
        };
        Ok(PointContext {
            prob: self,
            x,
            y,
            k,
        })
    }

    /// Integrability residual at `(x, y)` for root candidate `w` (`q`, or
    /// `p` for the `y`-scaled kind). Zero exactly when `du/dw = 0`.
    pub fn constraint(&self, x: f64, y: f64, w: f64, cfg: &SolverConfig) -> Result<f64, PqError> {
        self.point(x, y, cfg)?.constraint(w)
    }

    /// Solution value `u(x, y)` once `w` solves the constraint.
    pub fn evaluate_u(&self, x: f64, y: f64, w: f64, cfg: &SolverConfig) -> Result<f64, PqError> {
        self.point(x, y, cfg)?.value(w)
    }

    /// Derivative of `u` along the scaled axis implied by the branch:
    /// `p` for the explicit and `x`-scaled kinds, `q` for the `y`-scaled kind.
    pub fn branch_slope(&self, x: f64, y: f64, w: f64) -> Result<f64, PqError> {
        match &self.branch {
            Branch::Explicit { f } => Ok(f.at(w)?),
            Branch::Scaled { scale, g, .. } => {
                let at = if self.kind == PqKind::ScaledX { x } else { y };
                let s = scale.at(at)?;
                if s == 0.0 {
                    return Err(PqError::ZeroScale { at });
                }
                Ok(g.at(w)? / s)
            }
        }
    }

    /// Root of the constraint in `[lo, hi]` with continuation from `warm`.
    pub fn solve_q(
        &self,
        x: f64,
        y: f64,
        lo: f64,
        hi: f64,
        cfg: &SolverConfig,
        warm: Option<f64>,
    ) -> RootOutcome {
        match self.point(x, y, cfg) {
            Ok(ctx) => field::select_root(|w| ctx.constraint(w).ok(), lo, hi, cfg, warm),
            Err(_) => RootOutcome::fail(PointStatus::DomainFail),
        }
    }

    /// Solves every point of the `x` by `y` grid.
    pub fn solve_grid(
        &self,
        xs: &[f64],
        ys: &[f64],
        range: (f64, f64),
        cfg: &SolverConfig,
    ) -> Result<SolutionField, PqError> {
        field::check_axis("x", xs).map_err(PqError::Grid)?;
        field::check_axis("y", ys).map_err(PqError::Grid)?;
        let points = field::sweep(xs.len(), ys.len(), |i, j, warm| {
            let (x, y) = (xs[i], ys[j]);
            let root = self.solve_q(x, y, range.0, range.1, cfg, warm);
            let rec = match root.q {
                Some(w) => match self.evaluate_u(x, y, w, cfg) {
                    Ok(u) => FieldPoint {
                        status: root.status,
                        q: Some(w),
                        value: Some(u),
                    },
                    Err(_) => FieldPoint {
                        status: PointStatus::DomainFail,
                        q: None,
                        value: None,
                    },
                },
                None => FieldPoint {
                    status: root.status,
                    q: None,
                    value: None,
                },
            };
            (rec, rec.q)
        });
        Ok(SolutionField {
            axis1: xs.to_vec(),
            axis2: ys.to_vec(),
            points,
        })
    }
}

struct PointContext<'a> {
    prob: &'a PqProblem,
    x: f64,
    y: f64,
    k: f64,
}

impl PointContext<'_> {
    fn constraint(&self, w: f64) -> Result<f64, PqError> {
        let phi_slope = self.prob.phi.slope(w)?;
        let g = match (&self.prob.branch, self.prob.kind) {
            (Branch::Explicit { f }, _) => self.x * f.slope(w)? + self.y - phi_slope,
            (Branch::Scaled { g, .. }, PqKind::ScaledX) => {
                self.k * g.slope(w)? + self.y - phi_slope
            }
            (Branch::Scaled { g, .. }, _) => g.slope(w)? * self.k + self.x - phi_slope,
        };
        Ok(g)
    }

    fn value(&self, w: f64) -> Result<f64, PqError> {
        let phi = self.prob.phi.at(w)?;
        let u = match (&self.prob.branch, self.prob.kind) {
            (Branch::Explicit { f }, _) => self.x * f.at(w)? + self.y * w - phi,
            (Branch::Scaled { g, .. }, PqKind::ScaledX) => self.k * g.at(w)? + self.y * w - phi,
            (Branch::Scaled { g, .. }, _) => self.x * w + g.at(w)? * self.k - phi,
        };
        Ok(u)
    }
}
