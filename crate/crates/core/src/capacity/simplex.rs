//! Dense tableau simplex for `max c^T y  s.t.  A y <= b, y >= 0` with `b >= 0`.
//!
//! The slack basis is feasible from the start, so no phase one is needed.
//! Pivoting uses Bland's rule (lowest eligible index for both the entering
//! and the leaving variable), which cannot cycle.

pub(crate) const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Outcome {
    Optimal {
        /// Optimal `y`.
        primal: Vec<f64>,
        /// Shadow prices of the `A y <= b` rows.
        duals: Vec<f64>,
        value: f64,
    },
    Unbounded,
}

/// `a` is row-major with `b.len()` rows and `c.len()` columns.
pub(crate) fn maximize(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Outcome {
    let rows = b.len();
    let vars = c.len();
    let width = vars + rows;
    debug_assert!(b.iter().all(|&x| x >= 0.0));

    // tableau[r] = [coefficients (vars + slacks) | rhs]
    let mut tableau: Vec<Vec<f64>> = (0..rows)
        .map(|r| {
            let mut row = vec![0.0; width + 1];
            row[..vars].copy_from_slice(&a[r]);
            row[vars + r] = 1.0;
            row[width] = b[r];
            row
        })
        .collect();
    // reduced costs c_k - c_B^T B^-1 a_k; last entry is -objective
    let mut cost = vec![0.0; width + 1];
    cost[..vars].copy_from_slice(c);
    let mut basis: Vec<usize> = (vars..width).collect();

    while let Some(enter) = (0..width).find(|&k| cost[k] > TOL) {

        let mut leave: Option<(usize, f64)> = None;
        for r in 0..rows {
            let coef = tableau[r][enter];
            if coef > TOL {
                let ratio = tableau[r][width] / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((best, best_ratio)) => {
                        if ratio < best_ratio - TOL
                            || (ratio <= best_ratio + TOL && basis[r] < basis[best])
                        {
                            Some((r, ratio))
                        } else {
                            Some((best, best_ratio))
                        }
                    }
                };
            }
        }
        let Some((pivot_row, _)) = leave else {
            return Outcome::Unbounded;
        };

        let pivot = tableau[pivot_row][enter];
        for x in tableau[pivot_row].iter_mut() {
            *x /= pivot;
        }
        let pivot_vals = tableau[pivot_row].clone();
        for (r, row) in tableau.iter_mut().enumerate() {
            if r == pivot_row {
                continue;
            }
            let factor = row[enter];
            if factor != 0.0 {
                for (x, p) in row.iter_mut().zip(&pivot_vals) {
                    *x -= factor * p;
                }
                row[enter] = 0.0;
            }
        }
        let factor = cost[enter];
        for (x, p) in cost.iter_mut().zip(&pivot_vals) {
            *x -= factor * p;
        }
        cost[enter] = 0.0;
        basis[pivot_row] = enter;
    }

    let mut primal = vec![0.0; vars];
    for (r, &var) in basis.iter().enumerate() {
        if var < vars {
            primal[var] = tableau[r][width].max(0.0);
        }
    }
    let duals = (0..rows).map(|r| (-cost[vars + r]).max(0.0)).collect();
    Outcome::Optimal { primal, duals, value: -cost[width] }
}
