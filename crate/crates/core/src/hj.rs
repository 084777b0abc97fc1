//! General solution of the one-dimensional Hamilton-Jacobi equation
//! `a(x) p^2 + V(x) - q = 0`, with `p = S_x` and `q = S_t`.
//!
//! Solving for the momentum on a fixed branch `sigma`,
//! `p(x, q) = sigma sqrt((q - V) / a)`, the action is
//!
//! ```text
//! S(x, t) = x p(x, q) + q t - F(x, q)
//! F(x, q) = ∫_{x0}^{x} H(s, q) ds + G(q),    H(x, q) = x p_x(x, q)
//! ```
//!
//! with `G` arbitrary and `q(x, t)` fixed by `dS/dq = 0`. Integrating the
//! `q`-derivative of `H` by parts gives the form the solver evaluates:
//!
//! ```text
//! G'(q) - t - ∫_{x0}^{x} p_q(s, q) ds - x0 p_q(x0, q) = 0
//! ```
//!
//! Points closer than the admissibility margin to a turning point `q = V`
//! are rejected rather than glued across branches.

use thiserror::Error;

use crate::expr::{CompiledExpr, EvalError, Expression};
use crate::field::{self, ActionField, ActionPoint, PointStatus, RootOutcome};
use crate::numerics::{integrate_adaptive, NumericsError, SolverConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HjError {
    #[error("`{name}` may only use variable `{allowed}`: {source}")]
    Variables {
        name: &'static str,
        allowed: &'static str,
        source: EvalError,
    },
    #[error("evaluation failed at x = {x}: {source}")]
    Eval { x: f64, source: EvalError },
    #[error("inadmissible point x = {x}, q = {q}: q - V(x) is below the margin")]
    Turning { x: f64, q: f64 },
    #[error("kinetic coefficient a({x}) = {a} is not positive")]
    Kinetic { x: f64, a: f64 },
    #[error("quadrature failed at x = {x}")]
    Quadrature { x: f64 },
    #[error("{0}")]
    Grid(String),
}

#[derive(Debug, Clone)]
struct Compiled {
    a: CompiledExpr,
    da: CompiledExpr,
    v: CompiledExpr,
    dv: CompiledExpr,
    g: CompiledExpr,
    dg: CompiledExpr,
}

/// Problem definition for `a(x) p^2 + V(x) - q = 0`.
#[derive(Debug, Clone)]
pub struct HjProblem {
    a: Expression,
    v: Expression,
    g: Expression,
    sigma: f64,
    x0: f64,
    eps_adm: f64,
    c: Compiled,
}

/// Local coefficients at `(x, q)`.
#[derive(Debug, Clone, Copy)]
struct Local {
    a: f64,
    da: f64,
    v: f64,
    dv: f64,
    gap: f64,
}

pub const DEFAULT_EPS_ADM: f64 = 1e-9;

impl HjProblem {
    /// Positive branch, base point `x0 = 0`, default admissibility margin.
    pub fn new(a: Expression, v: Expression, g: Expression) -> Result<HjProblem, HjError> {
        let compile = |name: &'static str, e: &Expression, var: &'static str| {
            e.compile(&[var]).map_err(|source| HjError::Variables {
                name,
                allowed: var,
                source,
            })
        };
        let c = Compiled {
            a: compile("a", &a, "x")?,
            da: compile("a", &a.differentiate("x"), "x")?,
            v: compile("V", &v, "x")?,
            dv: compile("V", &v.differentiate("x"), "x")?,
            g: compile("G", &g, "q")?,
            dg: compile("G", &g.differentiate("q"), "q")?,
        };
        Ok(HjProblem {
            a,
            v,
            g,
            sigma: 1.0,
            x0: 0.0,
            eps_adm: DEFAULT_EPS_ADM,
            c,
        })
    }

    /// Momentum branch; only the sign of `sigma` is used.
    pub fn with_branch(mut self, sigma: f64) -> HjProblem {
        self.sigma = if sigma < 0.0 { -1.0 } else { 1.0 };
        self
    }

    pub fn with_base_point(mut self, x0: f64) -> HjProblem {
        self.x0 = x0;
        self
    }

    /// Relative margin: a point is admissible when
    /// `q - V(x) >= eps_adm (1 + |q|)` and `a(x) >= eps_adm`.
    pub fn with_margin(mut self, eps_adm: f64) -> HjProblem {
        self.eps_adm = eps_adm;
        self
    }

    pub fn a(&self) -> &Expression {
        &self.a
    }

    pub fn potential(&self) -> &Expression {
        &self.v
    }

    pub fn generator(&self) -> &Expression {
        &self.g
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn eps_adm(&self) -> f64 {
        self.eps_adm
    }

    fn margin(&self, q: f64) -> f64 {
        self.eps_adm * (1.0 + q.abs())
    }

    /// `a'` and `V'` vanish identically, so `H == 0` and `p_q` is constant in `x`.
    fn is_homogeneous(&self) -> bool {
        self.c.da.is_zero() && self.c.dv.is_zero()
    }

    fn eval(&self, e: &CompiledExpr, x: f64) -> Result<f64, HjError> {
        e.eval(&[x]).map_err(|source| HjError::Eval { x, source })
    }

    fn kinetic(&self, x: f64) -> Result<f64, HjError> {
        let a = self.eval(&self.c.a, x)?;
        if !(a >= self.eps_adm) {
            return Err(HjError::Kinetic { x, a });
        }
        Ok(a)
    }

    pub(crate) fn potential_at(&self, x: f64) -> Result<f64, HjError> {
        self.eval(&self.c.v, x)
    }

    /// `a(x) p^2 + V(x) - q` for the verification residual.
    pub fn hamiltonian_residual(&self, x: f64, p: f64, q: f64) -> Result<f64, HjError> {
        Ok(self.eval(&self.c.a, x)? * p * p + self.potential_at(x)? - q)
    }

    fn local(&self, x: f64, q: f64) -> Result<Local, HjError> {
        let a = self.kinetic(x)?;
        let v = self.potential_at(x)?;
        let gap = q - v;
        if !(gap >= self.margin(q)) {
            return Err(HjError::Turning { x, q });
        }
        Ok(Local {
            a,
            da: self.eval(&self.c.da, x)?,
            v,
            dv: self.eval(&self.c.dv, x)?,
            gap,
        })
    }

    /// `p = sigma sqrt((q - V(x)) / a(x))`.
    pub fn momentum(&self, x: f64, q: f64) -> Result<f64, HjError> {
        let l = self.local(x, q)?;
        Ok(self.sigma * (l.gap / l.a).sqrt())
    }

    /// `(p_x, p_q)`, the partials of [`Self::momentum`].
    pub fn momentum_partials(&self, x: f64, q: f64) -> Result<(f64, f64), HjError> {
        let l = self.local(x, q)?;
        let root = (l.a * l.gap).sqrt();
        let p_q = self.sigma / (2.0 * root);
        let p_x = self.sigma * (l.da * l.v - l.a * l.dv - q * l.da) / (2.0 * l.a * root);
        Ok((p_x, p_q))
    }

    /// `H(x, q) = x p_x(x, q)`.
    pub fn hamiltonian_h(&self, x: f64, q: f64) -> Result<f64, HjError> {
        Ok(x * self.momentum_partials(x, q)?.0)
    }

    fn p_q(&self, x: f64, q: f64) -> Result<f64, HjError> {
        Ok(self.momentum_partials(x, q)?.1)
    }

    /// Integrates `f(s)` over `[x0, x]`, mapping non-finite nodes back to the
    /// admissibility error at that node.
    ///
    /// The integrands behave like `1 / sqrt(q - V)`, which is singular at an
    /// endpoint sitting near a turning point. The map
    /// `s = x0 + (x - x0) (3u^2 - 2u^3)` has a vanishing Jacobian at both ends
    /// that cancels such singularities, so the integral is taken in `u`.
    fn integrate<F>(&self, f: F, x: f64, cfg: &SolverConfig) -> Result<f64, HjError>
    where
        F: Fn(f64) -> Result<f64, HjError>,
    {
        let len = x - self.x0;
        let map = |u: f64| self.x0 + len * u * u * (3.0 - 2.0 * u);
        let integrand = |u: f64| {
            let jac = 6.0 * len * u * (1.0 - u);
            f(map(u)).map(|v| v * jac).unwrap_or(f64::NAN)
        };
        integrate_adaptive(integrand, 0.0, 1.0, cfg.quad_tol).map_err(|e| match e {
            NumericsError::NonFinite { x: u } => match f(map(u)) {
                Err(inner) => inner,
                Ok(_) => HjError::Quadrature { x: map(u) },
            },
            _ => HjError::Quadrature { x },
        })
    }

    /// Endpoints are checked explicitly for the homogeneous shortcut, where
    /// admissibility cannot change between them.
    fn check_segment(&self, x: f64, q: f64) -> Result<(), HjError> {
        self.local(self.x0, q)?;
        self.local(x, q)?;
        Ok(())
    }

    /// `F(x, q) = ∫_{x0}^{x} H(s, q) ds + G(q)`.
    pub fn accumulated_f(&self, x: f64, q: f64, cfg: &SolverConfig) -> Result<f64, HjError> {
        let g = self
            .c
            .g
            .eval(&[q])
            .map_err(|source| HjError::Eval { x, source })?;
        if self.is_homogeneous() {
            self.check_segment(x, q)?;
            return Ok(g);
        }
        Ok(self.integrate(|s| self.hamiltonian_h(s, q), x, cfg)? + g)
    }

    /// `∫_{x0}^{x} p_q(s, q) ds`.
    fn integral_p_q(&self, x: f64, q: f64, cfg: &SolverConfig) -> Result<f64, HjError> {
        if self.is_homogeneous() {
            self.check_segment(x, q)?;
            return Ok((x - self.x0) * self.p_q(x, q)?);
        }
        self.integrate(|s| self.p_q(s, q), x, cfg)
    }

    fn g_slope(&self, x: f64, q: f64) -> Result<f64, HjError> {
        self.c
            .dg
            .eval(&[q])
            .map_err(|source| HjError::Eval { x, source })
    }

    /// Integrability residual `F_q - t - x p_q`; its root in `q` is `q(x, t)`.
    /// Equal to `-dS/dq`.
    pub fn constraint(&self, x: f64, t: f64, q: f64, cfg: &SolverConfig) -> Result<f64, HjError> {
        let boundary = self.x0 * self.p_q(self.x0, q)?;
        Ok(self.g_slope(x, q)? - t - self.integral_p_q(x, q, cfg)? - boundary)
    }

    /// The same residual evaluated without integrating by parts: `∂H/∂q` is
    /// taken by a five-point central difference in `q` and integrated
    /// directly. Used to cross-check [`Self::constraint`].
    pub fn constraint_direct(
        &self,
        x: f64,
        t: f64,
        q: f64,
        cfg: &SolverConfig,
    ) -> Result<f64, HjError> {
        let dh_dq = |s: f64| -> Result<f64, HjError> {
            let gap = q - self.potential_at(s)?;
            let d = 1e-3 * gap;
            let h = |w: f64| self.hamiltonian_h(s, w);
            Ok(
                (h(q - 2.0 * d)? - 8.0 * h(q - d)? + 8.0 * h(q + d)? - h(q + 2.0 * d)?)
                    / (12.0 * d),
            )
        };
        let integral = self.integrate(dh_dq, x, cfg)?;
        Ok(integral + self.g_slope(x, q)? - t - x * self.p_q(x, q)?)
    }

    /// `S = x p(x, q) + q t - F(x, q)`.
    pub fn action(&self, x: f64, t: f64, q: f64, cfg: &SolverConfig) -> Result<f64, HjError> {
        Ok(x * self.momentum(x, q)? + q * t - self.accumulated_f(x, q, cfg)?)
    }

    /// Lower end of the admissible `q` range along `[x0, x]`, from the
    /// largest sampled potential.
    fn admissible_floor(&self, x: f64) -> Result<f64, HjError> {
        const SAMPLES: usize = 64;
        let mut v_max = f64::NEG_INFINITY;
        for k in 0..=SAMPLES {
            let s = self.x0 + (x - self.x0) * k as f64 / SAMPLES as f64;
            v_max = v_max.max(self.potential_at(s)?);
        }
        Ok(v_max + 2.0 * self.eps_adm * (1.0 + v_max.abs()))
    }

    /// Root of [`Self::constraint`] in `range`, clipped to the admissible
    /// region, with continuation from `warm`.
    pub fn solve_q(
        &self,
        x: f64,
        t: f64,
        range: (f64, f64),
        cfg: &SolverConfig,
        warm: Option<f64>,
    ) -> RootOutcome {
        let Ok(floor) = self.admissible_floor(x) else {
            return RootOutcome::fail(PointStatus::DomainFail);
        };
        let lo = range.0.max(floor);
        field::select_root(
            |q| self.constraint(x, t, q, cfg).ok(),
            lo,
            range.1,
            cfg,
            warm,
        )
    }

    /// Solves every point of the `x` by `t` grid.
    pub fn solve_field(
        &self,
        xs: &[f64],
        ts: &[f64],
        range: (f64, f64),
        cfg: &SolverConfig,
    ) -> Result<ActionField, HjError> {
        field::check_axis("x", xs).map_err(HjError::Grid)?;
        field::check_axis("t", ts).map_err(HjError::Grid)?;
        let points = field::sweep(xs.len(), ts.len(), |i, j, warm| {
            let (x, t) = (xs[i], ts[j]);
            let root = self.solve_q(x, t, range, cfg, warm);
            let rec = match root.q {
                Some(q) => match (self.action(x, t, q, cfg), self.momentum(x, q)) {
                    (Ok(s), Ok(p)) => ActionPoint {
                        status: root.status,
                        q: Some(q),
                        action: Some(s),
                        momentum: Some(p),
                    },
                    _ => ActionPoint {
                        status: PointStatus::DomainFail,
                        q: None,
                        action: None,
                        momentum: None,
                    },
                },
                None => ActionPoint {
                    status: root.status,
                    q: None,
                    action: None,
                    momentum: None,
                },
            };
            (rec, rec.q)
        });
        Ok(ActionField {
            x: xs.to_vec(),
            t: ts.to_vec(),
            points,
        })
    }

    /// Complete integral with constant `q = c`:
    /// `S = sigma ∫_{x0}^{x} sqrt((c - V) / a) ds + c t`.
    pub fn separation_action(
        &self,
        c: f64,
        x: f64,
        t: f64,
        cfg: &SolverConfig,
    ) -> Result<f64, HjError> {
        let w = if self.is_homogeneous() {
            self.check_segment(x, c)?;
            (x - self.x0) * self.momentum(x, c)?
        } else {
            self.integrate(|s| self.momentum(s, c), x, cfg)?
        };
        Ok(w + c * t)
    }

    /// [`Self::separation_action`] sampled on a grid; every admissible point
    /// is resolved with `q = c`.
    pub fn separation_field(
        &self,
        c: f64,
        xs: &[f64],
        ts: &[f64],
        cfg: &SolverConfig,
    ) -> Result<ActionField, HjError> {
        field::check_axis("x", xs).map_err(HjError::Grid)?;
        field::check_axis("t", ts).map_err(HjError::Grid)?;
        let mut points = Vec::with_capacity(xs.len() * ts.len());
        for &t in ts {
            for &x in xs {
                points.push(
                    match (self.separation_action(c, x, t, cfg), self.momentum(x, c)) {
                        (Ok(s), Ok(p)) => ActionPoint {
                            status: PointStatus::Resolved,
                            q: Some(c),
                            action: Some(s),
                            momentum: Some(p),
                        },
                        _ => ActionPoint {
                            status: PointStatus::DomainFail,
                            q: None,
                            action: None,
                            momentum: None,
                        },
                    },
                );
            }
        }
        Ok(ActionField {
            x: xs.to_vec(),
            t: ts.to_vec(),
            points,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> Expression {
        Expression::parse(s).unwrap()
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn free(c: &str) -> HjProblem {
        HjProblem::new(e("1"), e("0"), e(c)).unwrap()
    }

    fn oscillator(g: &str) -> HjProblem {
        HjProblem::new(e("1"), e("x^2"), e(g)).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn momentum_examples() {
        assert_eq!(free("q").momentum(0.3, 4.0).unwrap(), 2.0);
        assert!(close(
            oscillator("0").momentum(1.0, 4.0).unwrap(),
            3f64.sqrt(),
            1e-15
        ));
        assert_eq!(
            free("q").with_branch(-1.0).momentum(0.3, 4.0).unwrap(),
            -2.0
        );
        assert!(matches!(
            oscillator("0").momentum(2.0, 4.0),
            Err(HjError::Turning { .. })
        ));
        let bad = HjProblem::new(e("x"), e("0"), e("q")).unwrap();
        assert!(matches!(
            bad.momentum(-1.0, 1.0),
            Err(HjError::Kinetic { .. })
        ));
    }

    #[test]
    fn partials_examples() {
        assert_eq!(free("q").momentum_partials(7.0, 4.0).unwrap(), (0.0, 0.25));
        let (px, pq) = oscillator("0").momentum_partials(1.0, 4.0).unwrap();
        // Oracle: central differences of the momentum itself.
        let p = oscillator("0");
        let h = 1e-6;
        let fd_x =
            (p.momentum(1.0 + h, 4.0).unwrap() - p.momentum(1.0 - h, 4.0).unwrap()) / (2.0 * h);
        let fd_q =
            (p.momentum(1.0, 4.0 + h).unwrap() - p.momentum(1.0, 4.0 - h).unwrap()) / (2.0 * h);
        assert!(close(px, fd_x, 1e-8) && close(pq, fd_q, 1e-8));
        assert!(close(px, -0.5773503, 1e-7) && close(pq, 0.2886751, 1e-7));
        let (nx, nq) = oscillator("0")
            .with_branch(-1.0)
            .momentum_partials(1.0, 4.0)
            .unwrap();
        assert_eq!((nx, nq), (-px, -pq));
    }

    #[test]
    fn hamiltonian_examples() {
        assert_eq!(free("q").hamiltonian_h(1.3, 2.0).unwrap(), 0.0);
        assert!(close(
            oscillator("0").hamiltonian_h(1.0, 4.0).unwrap(),
            -1.0 / 3f64.sqrt(),
            1e-15
        ));
        assert_eq!(oscillator("0").hamiltonian_h(0.0, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn non_constant_kinetic_coefficient_keeps_s_x_equal_to_p() {
        // With a(x) = 1 + x^2 the x-derivative of S at fixed q must be p.
        let prob = HjProblem::new(e("1 + x^2"), e("x"), e("q^2")).unwrap();
        let c = SolverConfig {
            quad_tol: 1e-13,
            ..cfg()
        };
        let (x, t, q) = (0.7, 0.2, 3.0);
        let h = 1e-4;
        let s_x = (prob.action(x + h, t, q, &c).unwrap() - prob.action(x - h, t, q, &c).unwrap())
            / (2.0 * h);
        assert!(close(s_x, prob.momentum(x, q).unwrap(), 1e-7));
    }

    #[test]
    fn accumulated_f_examples() {
        let c = cfg();
        assert_eq!(free("q^3").accumulated_f(1.5, 2.0, &c).unwrap(), 8.0);
        let f = oscillator("0").accumulated_f(1.0, 4.0, &c).unwrap();
        let closed = 0.5 * 3f64.sqrt() - 2.0 * 0.5f64.asin();
        assert!(close(f, closed, 1e-10));
        assert!(close(f, -0.1811722, 1e-7));
        let g = oscillator("q^2/2").with_base_point(0.4);
        assert_eq!(g.accumulated_f(0.4, 2.0, &c).unwrap(), 2.0);
    }

    #[test]
    fn constraint_examples() {
        let c = cfg();
        assert!(close(
            free("q").constraint(2.0, 0.0, 1.0, &c).unwrap(),
            0.0,
            1e-15
        ));
        // Oscillator: g = G'(q) - t - asin(x / sqrt q) / 2.
        let prob = oscillator("q^2/2");
        for (x, t, q) in [(1.0, 0.5, 2.0), (0.3, 0.1, 1.5), (0.9, 0.0, 5.0)] {
            let want = q - t - 0.5 * (x / f64::sqrt(q)).asin();
            assert!(close(prob.constraint(x, t, q, &c).unwrap(), want, 1e-10));
        }
        // Root oracle: bisection on q - 0.5 - asin(1/sqrt q)/2 at (x, t) = (1, 0.5).
        let h = |q: f64| q - 0.5 - 0.5 * (1.0 / q.sqrt()).asin();
        let (mut lo, mut hi) = (1.0f64, 6.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let q = 0.5 * (lo + hi);
        let r = prob.solve_q(1.0, 0.5, (1.1, 6.0), &c, None);
        assert_eq!(r.status, PointStatus::Resolved);
        assert!(close(r.q.unwrap(), q, 1e-9), "{:?} vs {q}", r.q);
        assert_eq!(
            free("q^2").constraint(0.0, 0.3, 2.0, &c).unwrap(),
            4.0 - 0.3
        );
    }

    #[test]
    fn free_particle_roots() {
        let c = cfg();
        let prob = free("q");
        let r = prob.solve_q(2.0, 0.0, (0.01, 20.0), &c, None);
        assert_eq!(r.status, PointStatus::Resolved);
        assert!(close(r.q.unwrap(), 1.0, 1e-12));
        let r = prob.solve_q(1.0, 0.5, (0.01, 20.0), &c, None);
        assert!(close(r.q.unwrap(), 1.0, 1e-12));
        assert_eq!(
            prob.solve_q(0.0, 0.5, (0.01, 20.0), &c, None).status,
            PointStatus::NoRoot
        );
        assert_eq!(
            prob.solve_q(0.0, 1.0, (0.01, 20.0), &c, None).status,
            PointStatus::MultiRoot
        );
    }

    #[test]
    fn action_examples() {
        let c = cfg();
        let prob = free("q");
        assert!(close(prob.action(2.0, 0.0, 1.0, &c).unwrap(), 1.0, 1e-15));
        assert!(close(prob.action(1.0, 0.5, 1.0, &c).unwrap(), 0.5, 1e-15));
        let osc = oscillator("0");
        for t in [0.0, 0.25, 1.0] {
            let s = osc.action(1.0, t, 4.0, &c).unwrap();
            let closed = 0.5 * 3f64.sqrt() + 2.0 * 0.5f64.asin() + 4.0 * t;
            assert!(close(s, closed, 1e-10));
            assert!(close(s, 1.9132230 + 4.0 * t, 1e-7));
        }
    }

    #[test]
    fn separation_examples() {
        let c = cfg();
        assert_eq!(free("q").separation_action(1.0, 2.0, 3.0, &c).unwrap(), 5.0);
        let s = oscillator("0")
            .separation_action(1.0, 0.5, 0.0, &c)
            .unwrap();
        assert!(close(s, 0.4783058, 1e-7));
        assert_eq!(
            oscillator("0")
                .separation_action(1.0, 0.0, 0.0, &c)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn range_below_potential_is_domain_fail() {
        let prob = oscillator("q^2/2");
        let r = prob.solve_q(0.8, 0.1, (0.1, 0.5), &cfg(), None);
        assert_eq!(r.status, PointStatus::DomainFail);
        let field = prob
            .solve_field(&[0.8, 0.9], &[0.0, 0.1], (0.1, 0.5), &cfg())
            .unwrap();
        assert!(field
            .points
            .iter()
            .all(|p| p.status == PointStatus::DomainFail));
    }

    #[test]
    fn wrong_variables_are_rejected() {
        assert!(HjProblem::new(e("1"), e("t"), e("q")).is_err());
        assert!(HjProblem::new(e("1"), e("x"), e("x*q")).is_err());
    }
}
