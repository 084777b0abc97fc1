//! Finite-difference residuals of solution fields and oracle comparisons.

use thiserror::Error;

use crate::field::{GridField, PointStatus};
use crate::hj::HjProblem;
use crate::pq::{PqKind, PqProblem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("no usable interior point (resolved fraction {resolved_fraction})")]
    Empty { resolved_fraction: f64 },
    #[error("field needs at least 3 points per axis, got {nx} x {ny}")]
    TooSmall { nx: usize, ny: usize },
}

/// Why [`finite_diff_partials`] could not produce an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Skip {
    Boundary,
    Unresolved,
}

/// Residual statistics over the interior resolved points of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub worst_point: (usize, usize),
    pub resolved_fraction: f64,
    /// Largest grid spacing on either axis.
    pub h_used: f64,
    /// Interior points that entered the statistics.
    pub points: usize,
}

/// The PDE a field is checked against.
#[derive(Debug, Clone, Copy)]
pub enum Model<'a> {
    Hj(&'a HjProblem),
    Pq(&'a PqProblem),
}

/// Three-point derivative at `mid` on a possibly nonuniform axis.
fn three_point(axis: &[f64], k: usize, left: f64, mid: f64, right: f64) -> f64 {
    let h1 = axis[k] - axis[k - 1];
    let h2 = axis[k + 1] - axis[k];
    if h1 == h2 {
        return (right - left) / (2.0 * h1);
    }
    -h2 / (h1 * (h1 + h2)) * left + (h2 - h1) / (h1 * h2) * mid + h1 / (h2 * (h1 + h2)) * right
}

/// Central-difference partials `(d/d axis1, d/d axis2)` of the value field
/// at interior point `(i, j)`. The point and its four axis neighbours must
/// all be resolved.
pub fn finite_diff_partials<F: GridField + ?Sized>(
    field: &F,
    i: usize,
    j: usize,
) -> Result<(f64, f64), Skip> {
    let (nx, ny) = (field.axis1().len(), field.axis2().len());
    if i == 0 || j == 0 || i + 1 >= nx || j + 1 >= ny {
        return Err(Skip::Boundary);
    }
    let at = |i: usize, j: usize| -> Result<f64, Skip> {
        if field.status(i, j) != PointStatus::Resolved {
            return Err(Skip::Unresolved);
        }
        field.value(i, j).ok_or(Skip::Unresolved)
    };
    let mid = at(i, j)?;
    let d1 = three_point(field.axis1(), i, at(i - 1, j)?, mid, at(i + 1, j)?);
    let d2 = three_point(field.axis2(), j, at(i, j - 1)?, mid, at(i, j + 1)?);
    Ok((d1, d2))
}

fn max_spacing(axis: &[f64]) -> f64 {
    axis.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

fn resolved_fraction<F: GridField + ?Sized>(field: &F) -> f64 {
    if field.is_empty() {
        return 0.0;
    }
    field.count_status(PointStatus::Resolved) as f64 / field.len() as f64
}

/// Aggregates `residual(i, j, d1, d2)` over every interior point whose
/// stencil is resolved. Points where `residual` fails are left out.
pub fn aggregate<F, R>(field: &F, residual: R) -> Result<ResidualReport, VerifyError>
where
    F: GridField + ?Sized,
    R: Fn(usize, usize, f64, f64) -> Option<f64>,
{
    let (nx, ny) = (field.axis1().len(), field.axis2().len());
    let resolved_fraction = resolved_fraction(field);
    if nx < 3 || ny < 3 {
        return Err(VerifyError::TooSmall { nx, ny });
    }
    let mut max_abs = 0.0;
    let mut sum = 0.0;
    let mut worst = None;
    let mut points = 0usize;
    for j in 1..ny - 1 {
        for i in 1..nx - 1 {
            let Ok((d1, d2)) = finite_diff_partials(field, i, j) else {
                continue;
            };
            let Some(r) = residual(i, j, d1, d2).map(f64::abs) else {
                continue;
            };
            let r = if r.is_nan() { f64::INFINITY } else { r };
            points += 1;
            sum += r;
            if worst.is_none() || r > max_abs {
                max_abs = r;
                worst = Some((i, j));
            }
        }
    }
    let Some(worst_point) = worst else {
        return Err(VerifyError::Empty { resolved_fraction });
    };
    Ok(ResidualReport {
        max_abs,
        mean_abs: sum / points as f64,
        worst_point,
        resolved_fraction,
        h_used: max_spacing(field.axis1()).max(max_spacing(field.axis2())),
        points,
    })
}

/// PDE residual of `field` from central differences `d1 = u_x`, `d2 = u_y`
/// (or `S_x`, `S_t`):
///
/// * Hamilton-Jacobi: `a(x) d1^2 + V(x) - d2`
/// * explicit: `d1 - f(d2)`
/// * `x`-scaled: `f(x) d1 - G(d2)`
/// * `y`-scaled: `h(y) d2 - G(d1)`
pub fn residual_report<F: GridField + ?Sized>(
    model: Model<'_>,
    field: &F,
) -> Result<ResidualReport, VerifyError> {
    let xs = field.axis1();
    let ys = field.axis2();
    match model {
        Model::Hj(prob) => aggregate(field, |i, _, d1, d2| {
            prob.hamiltonian_residual(xs[i], d1, d2).ok()
        }),
        Model::Pq(prob) => {
            let compiled =
                |role: &str, var: &str| prob.expression(role).and_then(|e| e.compile(&[var]).ok());
            match prob.kind() {
                PqKind::Explicit => {
                    let f = compiled("f", "q");
                    aggregate(field, |_, _, d1, d2| {
                        Some(d1 - f.as_ref()?.eval(&[d2]).ok()?)
                    })
                }
                PqKind::ScaledX => {
                    let (scale, g) = (compiled("scale", "x"), compiled("G", "q"));
                    aggregate(field, |i, _, d1, d2| {
                        Some(
                            scale.as_ref()?.eval(&[xs[i]]).ok()? * d1
                                - g.as_ref()?.eval(&[d2]).ok()?,
                        )
                    })
                }
                PqKind::ScaledY => {
                    let (scale, g) = (compiled("scale", "y"), compiled("G", "p"));
                    aggregate(field, |_, j, d1, d2| {
                        Some(
                            scale.as_ref()?.eval(&[ys[j]]).ok()? * d2
                                - g.as_ref()?.eval(&[d1]).ok()?,
                        )
                    })
                }
            }
        }
    }
}

/// Largest deviations of the finite-difference partials from the values the
/// stored roots imply (`(p, q)` at each point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consistency {
    pub max_d1: f64,
    pub max_d2: f64,
    pub points: usize,
}

/// Compares `(û_x, û_y)` with the slopes implied by the stored root:
/// `(p(q), q)` for the explicit and `x`-scaled kinds, `(p, G(p)/h(y))` for
/// the `y`-scaled kind, and `(momentum(x, q), q)` for Hamilton-Jacobi.
pub fn consistency<F: GridField + ?Sized>(model: Model<'_>, field: &F) -> Consistency {
    let xs = field.axis1();
    let ys = field.axis2();
    let mut out = Consistency {
        max_d1: 0.0,
        max_d2: 0.0,
        points: 0,
    };
    for (j, &y) in ys.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            let Ok((d1, d2)) = finite_diff_partials(field, i, j) else {
                continue;
            };
            let Some(w) = field.q(i, j) else {
                continue;
            };
            let implied = match model {
                Model::Hj(prob) => prob.momentum(x, w).ok().map(|p| (p, w)),
                Model::Pq(prob) => match prob.kind() {
                    PqKind::ScaledY => prob.branch_slope(x, y, w).ok().map(|q| (w, q)),
                    _ => prob.branch_slope(x, y, w).ok().map(|p| (p, w)),
                },
            };
            let Some((e1, e2)) = implied else {
                continue;
            };
            out.points += 1;
            out.max_d1 = out.max_d1.max((d1 - e1).abs());
            out.max_d2 = out.max_d2.max((d2 - e2).abs());
        }
    }
    out
}

/// `(max, mean)` of `|value - oracle(x, y, q)|` over resolved points.
pub fn compare_oracle_with<F, O>(field: &F, oracle: O) -> (f64, f64)
where
    F: GridField + ?Sized,
    O: Fn(f64, f64, f64) -> f64,
{
    let (xs, ys) = (field.axis1(), field.axis2());
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (j, &y) in ys.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            if field.status(i, j) != PointStatus::Resolved {
                continue;
            }
            let (Some(v), Some(q)) = (field.value(i, j), field.q(i, j)) else {
                continue;
            };
            let err = (v - oracle(x, y, q)).abs();
            let err = if err.is_nan() { f64::INFINITY } else { err };
            max = max.max(err);
            sum += err;
            n += 1;
        }
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    (max, sum / n as f64)
}

/// `(max, mean)` of `|value - oracle(x, y)|` over resolved points.
pub fn compare_oracle<F, O>(field: &F, oracle: O) -> (f64, f64)
where
    F: GridField + ?Sized,
    O: Fn(f64, f64) -> f64,
{
    compare_oracle_with(field, |x, y, _| oracle(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;
    use crate::field::{linspace, FieldPoint, SolutionField};

    fn sampled(xs: &[f64], ys: &[f64], f: impl Fn(f64, f64) -> f64) -> SolutionField {
        let mut points = Vec::new();
        for &y in ys {
            for &x in xs {
                points.push(FieldPoint {
                    status: PointStatus::Resolved,
                    q: Some(2.0 * x + y),
                    value: Some(f(x, y)),
                });
            }
        }
        SolutionField {
            axis1: xs.to_vec(),
            axis2: ys.to_vec(),
            points,
        }
    }

    #[test]
    fn partials_are_exact_for_quadratics() {
        let xs = linspace(0.0, 2.0, 21);
        let ys = linspace(0.0, 1.0, 5);
        let lin = sampled(&xs, &ys, |x, _| x);
        let (d1, d2) = finite_diff_partials(&lin, 3, 2).unwrap();
        assert!((d1 - 1.0).abs() < 1e-12 && d2.abs() < 1e-12);
        let quad = sampled(&xs, &ys, |x, _| x * x);
        let (d1, _) = finite_diff_partials(&quad, 10, 2).unwrap();
        assert!((d1 - 2.0).abs() < 1e-12);
        // Nonuniform spacing.
        let xs = [0.0, 0.1, 0.35, 0.4, 1.0];
        let quad = sampled(&xs, &ys, |x, y| x * x + 3.0 * y * y);
        let (d1, d2) = finite_diff_partials(&quad, 2, 2).unwrap();
        assert!((d1 - 0.7).abs() < 1e-12 && (d2 - 3.0).abs() < 1e-12);
        assert_eq!(finite_diff_partials(&quad, 0, 2), Err(Skip::Boundary));
    }

    #[test]
    fn exact_linear_field_has_tiny_residual() {
        // u = s^2/2 - x with s = 2x + y solves p = 2q - 1.
        let prob = PqProblem::explicit(
            Expression::parse("2*q - 1").unwrap(),
            Expression::parse("q^2/2").unwrap(),
        )
        .unwrap();
        let xs = linspace(0.0, 1.0, 11);
        let field = sampled(&xs, &xs, |x, y| (2.0 * x + y).powi(2) / 2.0 - x);
        let r = residual_report(Model::Pq(&prob), &field).unwrap();
        assert!(r.max_abs <= 1e-10, "{r:?}");
        assert_eq!(r.resolved_fraction, 1.0);
        assert_eq!(r.points, 81);
        assert!(r.max_abs >= r.mean_abs);
    }

    #[test]
    fn unresolved_field_is_an_empty_report() {
        let xs = linspace(0.0, 1.0, 4);
        let mut field = sampled(&xs, &xs, |x, _| x);
        for p in &mut field.points {
            p.status = PointStatus::NoRoot;
            p.q = None;
            p.value = None;
        }
        let prob = PqProblem::explicit(
            Expression::parse("q").unwrap(),
            Expression::parse("q").unwrap(),
        )
        .unwrap();
        assert_eq!(
            residual_report(Model::Pq(&prob), &field),
            Err(VerifyError::Empty {
                resolved_fraction: 0.0
            })
        );
        let tiny = sampled(&[0.0, 1.0], &xs, |x, _| x);
        assert!(matches!(
            residual_report(Model::Pq(&prob), &tiny),
            Err(VerifyError::TooSmall { .. })
        ));
    }

    #[test]
    fn oracle_statistics() {
        let xs = linspace(0.0, 1.0, 5);
        let f = |x: f64, y: f64| x * y;
        let field = sampled(&xs, &xs, f);
        assert_eq!(compare_oracle(&field, f), (0.0, 0.0));
        let shifted = sampled(&xs, &xs, |x, y| f(x, y) + 1.0);
        let (max, mean) = compare_oracle(&shifted, f);
        assert!((max - 1.0).abs() < 1e-15 && (mean - 1.0).abs() < 1e-15);
    }
}
