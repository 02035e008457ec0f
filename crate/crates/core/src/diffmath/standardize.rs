use super::matrix::Matrix;

/// Raised when column standardisation met zero-variance columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StandardizeWarning {
    /// Tape node that produced the warning.
    pub node: usize,
    pub columns: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Standardized {
    pub value: Matrix,
    /// Euclidean norm of each centred column, 0 for degenerate columns.
    pub column_norms: Vec<f64>,
    pub zero_columns: Vec<usize>,
}

/// Centres every column and scales it to unit Euclidean norm, so `ZᵀZ` is the
/// Pearson correlation matrix of the input columns.
///
/// Equivalent to `(x - mean) / (σ·√N)` with the population standard deviation.
/// Zero-variance columns (including every column of a single-row input) come
/// back as zeros and are listed in `zero_columns`.
pub fn column_standardize(m: &Matrix) -> Standardized {
    let (n, d) = m.shape();
    let mut value = Matrix::zeros(n, d);
    let mut column_norms = vec![0.0; d];
    let mut zero_columns = Vec::new();
    for (c, slot) in column_norms.iter_mut().enumerate() {
        let col = m.column(c);
        let mean = col.iter().sum::<f64>() / n as f64;
        let centred: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let norm = centred.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < 2 || norm <= 1e-12 * (1.0 + scale) {
            zero_columns.push(c);
            continue;
        }
        *slot = norm;
        let out: Vec<f64> = centred.iter().map(|v| v / norm).collect();
        value.set_column(c, &out);
    }
    Standardized {
        value,
        column_norms,
        zero_columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_two_three() {
        let s = column_standardize(&Matrix::from_rows(&[[1.0], [2.0], [3.0]]));
        let h = 0.5_f64.sqrt();
        for (got, want) in s.value.as_slice().iter().zip([-h, 0.0, h]) {
            assert!((got - want).abs() < 1e-4);
        }
        assert!(s.zero_columns.is_empty());
    }

    #[test]
    fn idempotent() {
        let once = column_standardize(&Matrix::from_rows(&[[1.0, 4.0], [2.0, -1.0], [7.0, 0.5], [3.0, 3.0]]));
        let twice = column_standardize(&once.value);
        for (a, b) in once.value.as_slice().iter().zip(twice.value.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_becomes_zero_with_warning() {
        let s = column_standardize(&Matrix::from_rows(&[[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]));
        assert_eq!(s.value.column(0), vec![0.0; 3]);
        assert_eq!(s.zero_columns, vec![0]);
    }

    #[test]
    fn single_row_is_degenerate() {
        let s = column_standardize(&Matrix::from_rows(&[[1.0, 2.0]]));
        assert_eq!(s.zero_columns, vec![0, 1]);
    }
}
