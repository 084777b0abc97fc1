//! Scalar root-finding and adaptive quadrature.
//!
//! The solvers reduce every grid point to a one-dimensional root problem in
//! `q` whose residual may itself contain an integral over `x`. Both pieces
//! live here: [`integrate_adaptive`] (adaptive Simpson with Richardson
//! correction), [`scan_brackets`] for locating sign changes and
//! [`solve_bracketed`], a Brent-style bisection/secant/inverse-quadratic
//! hybrid that never leaves its bracket.

use std::cell::Cell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("no convergence after {iterations} iterations; last bracket [{lo}, {hi}]")]
    NoConvergence { iterations: usize, lo: f64, hi: f64 },
    #[error("quadrature over [{lo}, {hi}] exceeded {evaluations} integrand evaluations")]
    Budget {
        evaluations: usize,
        lo: f64,
        hi: f64,
    },
    #[error("invalid bracket [{lo}, {hi}]")]
    InvalidBracket { lo: f64, hi: f64 },
}

/// Sign-change interval of a scalar function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub g_lo: f64,
    pub g_hi: f64,
}

impl Bracket {
    pub fn is_valid(&self) -> bool {
        self.lo < self.hi && self.g_lo * self.g_hi <= 0.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Tolerances shared by the root finders and the quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Absolute tolerance on the root abscissa.
    pub root_tol: f64,
    /// Tolerance on `|g|` at the returned root.
    pub resid_tol: f64,
    pub max_iter: usize,
    /// Absolute quadrature tolerance.
    pub quad_tol: f64,
    /// Number of intervals in the bracket scan.
    pub scan_points: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            root_tol: 1e-12,
            resid_tol: 1e-14,
            max_iter: 200,
            quad_tol: 1e-10,
            scan_points: 64,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("root_tol", self.root_tol),
            ("resid_tol", self.resid_tol),
            ("quad_tol", self.quad_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be a positive finite number, got {v}"));
            }
        }
        if self.max_iter < 1 {
            return Err("max_iter must be at least 1".into());
        }
        if self.scan_points < 2 {
            return Err("scan_points must be at least 2".into());
        }
        Ok(())
    }
}

const MIN_DEPTH: u32 = 3;
const MAX_DEPTH: u32 = 48;
/// Integrand evaluations allowed per call. Halving the tolerance at every
/// level makes the recursion near an endpoint singularity grow without this.
const MAX_EVALS: usize = 100_000;

struct Simpson<'a, F> {
    f: &'a F,
    evals: Cell<usize>,
    lo: f64,
    hi: f64,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    fn eval(&self, x: f64) -> Result<f64, NumericsError> {
        let n = self.evals.get() + 1;
        if n > MAX_EVALS {
            return Err(NumericsError::Budget {
                evaluations: MAX_EVALS,
                lo: self.lo,
                hi: self.hi,
            });
        }
        self.evals.set(n);
        let v = (self.f)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(NumericsError::NonFinite { x })
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &self,
        a: f64,
        fa: f64,
        m: f64,
        fm: f64,
        b: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64, NumericsError> {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(lm)?;
        let frm = self.eval(rm)?;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth >= MAX_DEPTH || (depth >= MIN_DEPTH && delta.abs() <= 15.0 * tol) {
            return Ok(left + right + delta / 15.0);
        }
        Ok(
            self.refine(a, fa, lm, flm, m, fm, left, 0.5 * tol, depth + 1)?
                + self.refine(m, fm, rm, frm, b, fb, right, 0.5 * tol, depth + 1)?,
        )
    }
}

/// Adaptive Simpson estimate of `∫_{x0}^{x1} h(x) dx`.
///
/// Reversed limits give the negated integral. A non-finite integrand value
/// at any node aborts with the offending abscissa; an integrand that needs
/// more than 100 000 evaluations aborts with [`NumericsError::Budget`].
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    h: F,
    x0: f64,
    x1: f64,
    tol: f64,
) -> Result<f64, NumericsError> {
    if x0 == x1 {
        return Ok(0.0);
    }
    if x1 < x0 {
        return integrate_adaptive(h, x1, x0, tol).map(|v| -v);
    }
    let s = Simpson {
        f: &h,
        evals: Cell::new(0),
        lo: x0,
        hi: x1,
    };
    let fa = s.eval(x0)?;
    let fb = s.eval(x1)?;
    let m = 0.5 * (x0 + x1);
    let fm = s.eval(m)?;
    let whole = (x1 - x0) / 6.0 * (fa + 4.0 * fm + fb);
    s.refine(x0, fa, m, fm, x1, fb, whole, tol, 1)
}

/// Samples `g` at `n + 1` equispaced points of `[lo, hi]` and returns every
/// adjacent pair of valid samples across which `g` changes sign.
///
/// Samples where `g` returns `None` (a domain failure) are skipped; pairs
/// touching a skipped sample are not reported. A sample that is exactly zero
/// is reported once.
pub fn scan_brackets<G: Fn(f64) -> Option<f64>>(g: G, lo: f64, hi: f64, n: usize) -> Vec<Bracket> {
    scan(&g, lo, hi, n).brackets
}

/// Raw outcome of a bracket scan.
#[derive(Debug, Clone)]
pub(crate) struct Scan {
    pub brackets: Vec<Bracket>,
    /// Number of samples where `g` evaluated.
    pub valid: usize,
    /// Largest `|g|` over the valid samples.
    pub max_abs: f64,
}

pub(crate) fn scan<G: Fn(f64) -> Option<f64>>(g: &G, lo: f64, hi: f64, n: usize) -> Scan {
    let n = n.max(1);
    let step = (hi - lo) / n as f64;
    let samples: Vec<(f64, Option<f64>)> = (0..=n)
        .map(|k| {
            let x = if k == n { hi } else { lo + step * k as f64 };
            (x, g(x).filter(|v| v.is_finite()))
        })
        .collect();
    let mut brackets = Vec::new();
    let mut valid = 0;
    let mut max_abs: f64 = 0.0;
    for (_, v) in &samples {
        if let Some(v) = v {
            valid += 1;
            max_abs = max_abs.max(v.abs());
        }
    }
    for k in 0..n {
        let ((a, ga), (b, gb)) = (samples[k], samples[k + 1]);
        let (Some(ga), Some(gb)) = (ga, gb) else {
            continue;
        };
        let starts_at_unreported_zero = ga == 0.0 && (k == 0 || samples[k - 1].1.is_none());
        if (ga * gb < 0.0) || gb == 0.0 || starts_at_unreported_zero {
            // Zero at both ends: the left one was already reported.
            if ga == 0.0 && gb == 0.0 && !starts_at_unreported_zero {
                continue;
            }
            brackets.push(Bracket {
                lo: a,
                hi: b,
                g_lo: ga,
                g_hi: gb,
            });
        }
    }
    Scan {
        brackets,
        valid,
        max_abs,
    }
}

/// Finds a root of `g` inside `br`.
///
/// Terminates once `|g| <= resid_tol` or the bracket has shrunk below
/// `root_tol`. The returned abscissa is always inside the initial bracket.
pub fn solve_bracketed<G: Fn(f64) -> f64>(
    g: G,
    br: Bracket,
    cfg: &SolverConfig,
) -> Result<f64, NumericsError> {
    if !br.is_valid() {
        return Err(NumericsError::InvalidBracket {
            lo: br.lo,
            hi: br.hi,
        });
    }
    if br.g_lo == 0.0 {
        return Ok(br.lo);
    }
    if br.g_hi == 0.0 {
        return Ok(br.hi);
    }
    // Brent's method: `b` is the current best estimate, `a` the previous one
    // and `c` the contrapoint keeping the root bracketed between b and c.
    let (mut a, mut fa) = (br.lo, br.g_lo);
    let (mut b, mut fb) = (br.hi, br.g_hi);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..cfg.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * cfg.root_tol;
        let xm = 0.5 * (c - b);
        if fb == 0.0 || fb.abs() <= cfg.resid_tol || xm.abs() <= tol1 {
            return Ok(b.clamp(br.lo, br.hi));
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = g(b);
        if !fb.is_finite() {
            return Err(NumericsError::NonFinite { x: b });
        }
    }
    Err(NumericsError::NoConvergence {
        iterations: cfg.max_iter,
        lo: b.min(c),
        hi: b.max(c),
    })
}
