//! Canonical-correlation loss, its decomposition oracles, and the supervised
//! reconstruction head.

use serde::{Deserialize, Serialize};

use crate::diffmath::{column_standardize, Matrix, Tape, Var};
use crate::encoders::HeadParams;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcaConfig {
    pub lambda: f64,
}

impl Default for CcaConfig {
    fn default() -> Self {
        Self { lambda: 1e-4 }
    }
}

impl CcaConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid(format!(
                "lambda must be a finite non-negative number, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }
}

/// Two column-standardized views of the same nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewPair<T = Matrix> {
    pub a: T,
    pub b: T,
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// `‖Z_A − Z_B‖_F²`.
pub fn invariance_term(v: &ViewPair) -> Result<f64> {
    same_shape("invariance_term", &v.a, &v.b)?;
    Ok(v.a
        .as_slice()
        .iter()
        .zip(v.b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// `‖ZᵀZ − I‖_F²`.
pub fn decorrelation_term(z: &Matrix) -> f64 {
    let gram = z.t_matmul(z).expect("ZᵀZ is always conformable");
    let d = gram.rows();
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            let e = gram[(i, j)] - if i == j { 1.0 } else { 0.0 };
            total += e * e;
        }
    }
    total
}

/// Sum of squared off-diagonal Pearson correlations, computed column pair by
/// column pair from the raw data.
pub fn pearson_offdiag_oracle(z_raw: &Matrix) -> Result<f64> {
    let n = z_raw.rows() as f64;
    let cols: Vec<Vec<f64>> = (0..z_raw.cols()).map(|c| z_raw.column(c)).collect();
    let mut centred = Vec::with_capacity(cols.len());
    for (c, col) in cols.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n;
        let dev: Vec<f64> = col.iter().map(|x| x - mean).collect();
        let var = dev.iter().map(|d| d * d).sum::<f64>() / n;
        if var <= 1e-24 * (1.0 + mean * mean) {
            return Err(invalid(format!("column {c} has zero variance")));
        }
        centred.push((dev, var.sqrt()));
    }
    let mut total = 0.0;
    for (i, (di, si)) in centred.iter().enumerate() {
        for (j, (dj, sj)) in centred.iter().enumerate() {
            if i != j {
                let cov = di.iter().zip(dj).map(|(x, y)| x * y).sum::<f64>() / n;
                let r = cov / (si * sj);
                total += r * r;
            }
        }
    }
    Ok(total)
}

/// Plain-value loss: `invariance + λ·(decorrelation(Z_A) + decorrelation(Z_B))`.
pub fn cca_loss_value(v: &ViewPair, cfg: &CcaConfig) -> Result<f64> {
    Ok(invariance_term(v)? + cfg.lambda * (decorrelation_term(&v.a) + decorrelation_term(&v.b)))
}

/// Loss nodes recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct CcaLossVars {
    pub total: Var,
    pub invariance: Var,
    pub decorrelation: Var,
}

fn decorrelation_on_tape(tape: &mut Tape, z: Var) -> Result<Var> {
    let d = tape.value(z).cols();
    let eye = tape.constant(Matrix::identity(d));
    let gram = {
        let zt = tape.transpose(z)?;
        tape.matmul(zt, z)?
    };
    let diff = tape.sub(gram, eye)?;
    tape.frobenius_sq(diff)
}

/// Records the CCA loss on `tape`; `decorrelation` is the un-weighted sum over both views.
pub fn cca_loss(tape: &mut Tape, v: ViewPair<Var>, cfg: &CcaConfig) -> Result<CcaLossVars> {
    let diff = tape.sub(v.a, v.b)?;
    let invariance = tape.frobenius_sq(diff)?;
    let da = decorrelation_on_tape(tape, v.a)?;
    let db = decorrelation_on_tape(tape, v.b)?;
    let decorrelation = tape.add(da, db)?;
    let weighted = tape.scale(decorrelation, cfg.lambda)?;
    let total = tape.add(invariance, weighted)?;
    Ok(CcaLossVars {
        total,
        invariance,
        decorrelation,
    })
}

/// `[Z_a, Z_v]·W + b`.
pub fn reconstruct(z_a: &Matrix, z_v: &Matrix, p: &HeadParams) -> Result<Matrix> {
    z_a.concat_cols(z_v)?.matmul(&p.weight)?.add_row(&p.bias)
}

pub fn reconstruct_on_tape(tape: &mut Tape, z_a: Var, z_v: Var, p: &HeadParams<Var>) -> Result<Var> {
    let z = tape.concat_cols(z_a, z_v)?;
    let lin = tape.matmul(z, p.weight)?;
    tape.add_row_bias(lin, p.bias)
}

/// Mean over all entries of the squared difference.
pub fn mse(pred: &Matrix, target: &Matrix) -> Result<f64> {
    same_shape("mse", pred, target)?;
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

pub fn mse_on_tape(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let n = tape.value(pred).len() as f64;
    let diff = tape.sub(pred, target)?;
    let sq = tape.frobenius_sq(diff)?;
    tape.scale(sq, 1.0 / n)
}

/// Standardizes raw views and evaluates the loss.
pub fn cca_loss_from_raw(a: &Matrix, b: &Matrix, cfg: &CcaConfig) -> Result<f64> {
    let v = ViewPair {
        a: column_standardize(a).value,
        b: column_standardize(b).value,
    };
    cca_loss_value(&v, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariance_examples() {
        let z = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]);
        assert_eq!(
            invariance_term(&ViewPair {
                a: z.clone(),
                b: z.clone()
            })
            .unwrap(),
            0.0
        );
        let neg = z.scale(-1.0);
        assert_eq!(
            invariance_term(&ViewPair { a: z.clone(), b: neg }).unwrap(),
            4.0 * z.frobenius_sq()
        );
        let b = Matrix::from_rows(&[[0.0, 4.0], [1.0, 1.0]]);
        // (1)² + (−2)² + (2)² + (−2)²
        assert_eq!(invariance_term(&ViewPair { a: z, b }).unwrap(), 13.0);
    }

    #[test]
    fn decorrelation_examples() {
        assert!(decorrelation_term(&Matrix::identity(3)) < 1e-15);
        let col = column_standardize(&Matrix::from_rows(&[[1.0], [4.0], [2.0], [0.5]])).value;
        assert!(decorrelation_term(&col) < 1e-14);
        let twin = col.concat_cols(&col).unwrap();
        assert!((decorrelation_term(&twin) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_oracle_examples() {
        let z = Matrix::from_rows(&[[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]]);
        assert!(pearson_offdiag_oracle(&z).unwrap().abs() < 1e-15);
        let affine = Matrix::from_rows(&[[1.0, 5.0], [2.0, 7.0], [4.0, 11.0]]);
        assert!((pearson_offdiag_oracle(&affine).unwrap() - 2.0).abs() < 1e-12);
        let constant = Matrix::from_rows(&[[1.0, 3.0], [2.0, 3.0]]);
        assert!(pearson_offdiag_oracle(&constant).is_err());
    }

    #[test]
    fn loss_composite() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
        let b = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]]);
        let v = ViewPair { a, b };
        // invariance 4, both Gram matrices are I
        assert!((cca_loss_value(&v, &CcaConfig::default()).unwrap() - 4.0).abs() < 1e-15);
        let c = Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]]);
        let v = ViewPair { a: c.clone(), b: c };
        // Gram [[1,1],[1,1]] per view → 2 each, weighted by 1e-4
        assert!((cca_loss_value(&v, &CcaConfig::default()).unwrap() - 4e-4).abs() < 1e-15);
        assert!(CcaConfig::new(-1.0).is_err());
    }

    #[test]
    fn tape_loss_matches_values() {
        let a = column_standardize(&Matrix::from_rows(&[[1.0, 2.0], [0.0, 5.0], [3.0, 1.0], [2.0, 2.0]])).value;
        let b = column_standardize(&Matrix::from_rows(&[[0.0, 1.0], [1.0, 3.0], [2.0, 2.0], [5.0, 1.0]])).value;
        let cfg = CcaConfig { lambda: 0.3 };
        let mut tape = Tape::new();
        let va = tape.constant(a.clone());
        let vb = tape.constant(b.clone());
        let l = cca_loss(&mut tape, ViewPair { a: va, b: vb }, &cfg).unwrap();
        let want = cca_loss_value(&ViewPair { a, b }, &cfg).unwrap();
        assert!((tape.value(l.total).scalar() - want).abs() < 1e-12);
    }

    #[test]
    fn mse_examples() {
        let t = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
        assert_eq!(mse(&Matrix::zeros(2, 2), &t).unwrap(), 7.5);
        assert_eq!(mse(&t.map(|v| v + 1.0), &t).unwrap(), 1.0);
        assert!(mse(&t, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        let p = HeadParams {
            weight: Matrix::zeros(3, 22),
            bias: Matrix::from_fn(1, 22, |_, c| c as f64),
        };
        let out = reconstruct(&Matrix::ones(2, 1), &Matrix::ones(2, 2), &p).unwrap();
        assert_eq!(out.shape(), (2, 22));
        assert_eq!(out.row(1)[5], 5.0);
        let p = HeadParams {
            weight: Matrix::from_fn(2, 22, |r, c| if r == c { 1.0 } else { 0.0 }),
            bias: Matrix::zeros(1, 22),
        };
        let out = reconstruct(&Matrix::from_rows(&[[3.0]]), &Matrix::from_rows(&[[-2.0]]), &p).unwrap();
        assert_eq!(&out.row(0)[..3], &[3.0, -2.0, 0.0]);
        assert!(reconstruct(&Matrix::ones(2, 2), &Matrix::ones(2, 2), &p).is_err());
    }
}
