//! Central finite-difference gradient checking.

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter index, flat entry index)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
    /// Entries whose analytic and numeric values are both below the roundoff
    /// of the central difference, i.e. indistinguishable from zero (scored as zero error).
    pub within_roundoff: usize,
}

/// Roundoff bound on a central difference of a loss of magnitude `loss` with `step`.
pub fn central_difference_roundoff(loss: f64, step: f64) -> f64 {
    16.0 * f64::EPSILON * loss.abs().max(1.0) / step
}

fn loss_value<F>(build: &F, params: &[Matrix]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let (rows, cols) = tape.value(loss).shape();
    if (rows, cols) != (1, 1) {
        return Err(Error::NotScalar { rows, cols });
    }
    Ok(tape.value(loss).scalar())
}

/// Compares reverse-mode gradients of the loss built by `build` against
/// central differences with the given `step`.
///
/// The relative error of an entry is
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`, except that an
/// entry where both values lie below [`central_difference_roundoff`] counts
/// as zero: the numeric side cannot resolve it, and it occurs for gradients
/// that vanish identically (e.g. a bias feeding a column standardization).
pub fn finite_difference_check<F>(build: F, params: &[Matrix], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let roundoff = central_difference_roundoff(tape.value(loss).scalar(), step);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
        within_roundoff: 0,
    };
    let mut work: Vec<Matrix> = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, &params[pi]);
        for e in 0..params[pi].len() {
            let orig = params[pi].as_slice()[e];
            work[pi].as_mut_slice()[e] = orig + step;
            let plus = loss_value(&build, &work)?;
            work[pi].as_mut_slice()[e] = orig - step;
            let minus = loss_value(&build, &work)?;
            work[pi].as_mut_slice()[e] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.as_slice()[e];
            let scale = a.abs().max(numeric.abs());
            let rel = if scale <= roundoff {
                report.within_roundoff += 1;
                0.0
            } else {
                (a - numeric).abs() / scale.max(1e-8)
            };
            report.entries_checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst = (pi, e);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let w = Matrix::from_rows(&[[0.3, -1.1, 2.0], [0.7, 0.05, -0.4]]);
        let r = finite_difference_check(|t, p| t.frobenius_sq(p[0]), &[w], 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.entries_checked, 6);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        // sum(sigmoid(w)) evaluated through a detached copy has zero analytic gradient.
        let w = Matrix::from_rows(&[[0.3, -1.1]]);
        let r = finite_difference_check(
            |t, p| {
                let c = t.constant(t.value(p[0]).clone());
                let s = t.sigmoid(c)?;
                let zero = t.scale(p[0], 0.0)?;
                let y = t.add(s, zero)?;
                t.sum_all(y)
            },
            &[w],
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error > 0.5, "{r:?}");
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let w = Matrix::zeros(2, 2);
        let r = finite_difference_check(|t, p| t.sigmoid(p[0]), &[w], 1e-6);
        assert!(matches!(r, Err(Error::NotScalar { .. })));
    }
}
