//! Small dense LU factorization used for the simplex kernel matrix.

/// `P A = L U` with partial (row) pivoting, stored in place.
#[derive(Clone, Debug, Default)]
pub(crate) struct Lu {
    dim: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factor a row-major `dim x dim` matrix. Returns `None` when a pivot
    /// falls below `tol` times the largest entry.
    pub(crate) fn factor(dim: usize, mut a: Vec<f64>, tol: f64) -> Option<Self> {
        debug_assert_eq!(a.len(), dim * dim);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut perm: Vec<usize> = (0..dim).collect();
        for col in 0..dim {
            let mut piv = col;
            let mut best = a[col * dim + col].abs();
            for row in col + 1..dim {
                let v = a[row * dim + col].abs();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            if best <= tol * scale {
                return None;
            }
            if piv != col {
                for c in 0..dim {
                    a.swap(col * dim + c, piv * dim + c);
                }
                perm.swap(col, piv);
            }
            let d = a[col * dim + col];
            for row in col + 1..dim {
                let f = a[row * dim + col] / d;
                if f != 0.0 {
                    a[row * dim + col] = f;
                    for c in col + 1..dim {
                        a[row * dim + c] -= f * a[col * dim + c];
                    }
                } else {
                    a[row * dim + col] = 0.0;
                }
            }
        }
        Some(Self { dim, lu: a, perm })
    }

    /// Solve `A x = b`.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    /// Solve `A^T y = c`.
    pub(crate) fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let n = self.dim;
        // A^T = U^T L^T P, so solve U^T w = c, L^T v = w, y = P^T v.
        let mut w = c.to_vec();
        for i in 0..n {
            let mut s = w[i];
            for j in 0..i {
                s -= self.lu[j * n + i] * w[j];
            }
            w[i] = s / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = w[i];
            for j in i + 1..n {
                s -= self.lu[j * n + i] * w[j];
            }
            w[i] = s;
        }
        let mut y = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            y[p] = w[i];
        }
        y
    }
}

/// Rank-revealing elimination with complete pivoting on a row-major
/// `rows x cols` matrix. Returns the (row, col) pivots that form a
/// well-conditioned square submatrix, in pivot order.
pub(crate) fn independent_subset(rows: usize, cols: usize, mut a: Vec<f64>, tol: f64) -> Vec<(usize, usize)> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut pivots = Vec::new();
    for _ in 0..rows.min(cols) {
        let mut best = tol * scale;
        let mut at = None;
        for r in (0..rows).filter(|&r| !row_used[r]) {
            for c in (0..cols).filter(|&c| !col_used[c]) {
                let v = a[r * cols + c].abs();
                if v > best {
                    best = v;
                    at = Some((r, c));
                }
            }
        }
        let Some((pr, pc)) = at else { break };
        row_used[pr] = true;
        col_used[pc] = true;
        pivots.push((pr, pc));
        let d = a[pr * cols + pc];
        for r in (0..rows).filter(|&r| !row_used[r]) {
            let f = a[r * cols + pc] / d;
            if f != 0.0 {
                for c in 0..cols {
                    a[r * cols + c] -= f * a[pr * cols + c];
                }
            }
        }
    }
    pivots
}
