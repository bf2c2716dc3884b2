//! Small dense LU solvers with partial pivoting.
//!
//! The networks here have at most a couple of dozen buses, so dense
//! factorization is both the fastest and the simplest option, and rolling our
//! own lets solver errors report exactly which pivot collapsed.

use num_complex::Complex64;

/// Row index of a pivot whose magnitude fell below the singularity threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularPivot {
    pub row: usize,
}

const PIVOT_EPS: f64 = 1e-12;

/// Solves the real system `a x = b` in place; `a` is row-major `n`×`n` and is
/// destroyed. On success `b` holds the solution.
pub fn solve_real(a: &mut [f64], b: &mut [f64], n: usize) -> Result<(), SingularPivot> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = a[col * n + col].abs();
        for row in col + 1..n {
            let mag = a[row * n + col].abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if pivot_mag < PIVOT_EPS {
            return Err(SingularPivot { row: col });
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for k in col + 1..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut sum = b[row];
        for k in row + 1..n {
            sum -= a[row * n + k] * b[k];
        }
        b[row] = sum / a[row * n + row];
    }
    Ok(())
}

/// LU factors of a complex matrix, reusable across many right-hand sides.
#[derive(Debug, Clone)]
pub struct ComplexLu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
}

impl ComplexLu {
    /// Factors a row-major `n`×`n` complex matrix.
    pub fn factor(mut a: Vec<Complex64>, n: usize) -> Result<ComplexLu, SingularPivot> {
        debug_assert_eq!(a.len(), n * n);
        let mut perm = Vec::with_capacity(n);
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_mag = a[col * n + col].norm_sqr();
            for row in col + 1..n {
                let mag = a[row * n + col].norm_sqr();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = row;
                }
            }
            if pivot_mag < PIVOT_EPS * PIVOT_EPS {
                return Err(SingularPivot { row: col });
            }
            if pivot_row != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot_row * n + k);
                }
            }
            perm.push(pivot_row);
            let pivot = a[col * n + col];
            for row in col + 1..n {
                let factor = a[row * n + col] / pivot;
                a[row * n + col] = factor;
                if factor == Complex64::default() {
                    continue;
                }
                for k in col + 1..n {
                    let upper = a[col * n + k];
                    a[row * n + k] -= factor * upper;
                }
            }
        }
        Ok(ComplexLu { n, lu: a, perm })
    }

    /// Solves `A x = b`, writing the solution over `b`.
    pub fn solve(&self, b: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for col in 0..n {
            b.swap(col, self.perm[col]);
        }
        for row in 1..n {
            let mut sum = b[row];
            for k in 0..row {
                sum -= self.lu[row * n + k] * b[k];
            }
            b[row] = sum;
        }
        for row in (0..n).rev() {
            let mut sum = b[row];
            for k in row + 1..n {
                sum -= self.lu[row * n + k] * b[k];
            }
            b[row] = sum / self.lu[row * n + row];
        }
    }
}
