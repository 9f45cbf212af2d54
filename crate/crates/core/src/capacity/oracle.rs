//! Exhaustive reference solver for the covering LP.
//!
//! Enumerates every basic solution of `{beta >= 0, sum_j beta_j I^(j) >= rho}`
//! (every choice of `J` tight constraints among the `N + J`), keeps the
//! feasible ones and returns the cheapest. Exponential, and meant only to
//! cross-check [`super::utilization_factor`] on small instances.

use crate::error::{Error, Result};
use crate::model::Schedule;

use super::CapacityResult;

pub const MAX_DIM: usize = 12;
const TOL: f64 = 1e-9;

pub fn lp_oracle(rho: &[f64], schedules: &[Schedule]) -> Result<CapacityResult> {
    let n = rho.len();
    let j = schedules.len();
    if n > MAX_DIM || j > MAX_DIM {
        return Err(Error::TooLarge(format!(
            "oracle handles at most {MAX_DIM} queues and {MAX_DIM} schedules (got {n}, {j})"
        )));
    }
    if let Some(s) = schedules.iter().find(|s| s.members().iter().any(|&q| q >= n)) {
        return Err(Error::Dimension { expected: n, found: s.members()[s.len() - 1] + 1 });
    }

    // constraint rows g . beta >= h: coverage rows first, then beta_j >= 0
    let mut rows: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|q| {
            let g = schedules.iter().map(|s| if s.contains(q) { 1.0 } else { 0.0 }).collect();
            (g, rho[q])
        })
        .collect();
    for col in 0..j {
        let mut g = vec![0.0; j];
        g[col] = 1.0;
        rows.push((g, 0.0));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut chosen = Vec::with_capacity(j);
    for_each_combination(rows.len(), j, &mut chosen, &mut |subset| {
        let Some(beta) = solve_square(subset.iter().map(|&r| &rows[r])) else {
            return;
        };
        let feasible = rows.iter().all(|(g, h)| {
            let lhs: f64 = g.iter().zip(&beta).map(|(a, b)| a * b).sum();
            lhs >= h - TOL
        });
        if feasible {
            let value: f64 = beta.iter().sum();
            if best.as_ref().is_none_or(|(v, _)| value < *v) {
                best = Some((value, beta));
            }
        }
    });

    Ok(match best {
        Some((value, weights)) => {
            let weights: Vec<f64> = weights.into_iter().map(|w| w.max(0.0)).collect();
            CapacityResult::feasible(value.max(0.0), weights)
        }
        None => CapacityResult::infeasible(j),
    })
}

fn for_each_combination(
    n: usize,
    k: usize,
    chosen: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize]),
) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    let start = chosen.last().map_or(0, |&x| x + 1);
    let remaining = k - chosen.len();
    for i in start..=n.saturating_sub(remaining) {
        chosen.push(i);
        for_each_combination(n, k, chosen, f);
        chosen.pop();
    }
}

/// Solves the square system given by `rows` (each `g . x = h`) with partial
/// pivoting; `None` if singular.
fn solve_square<'a>(rows: impl Iterator<Item = &'a (Vec<f64>, f64)>) -> Option<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = rows
        .map(|(g, h)| {
            let mut r = g.clone();
            r.push(*h);
            r
        })
        .collect();
    let size = m.len();
    for col in 0..size {
        let pivot = (col..size).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        let p = m[col][col];
        for x in m[col].iter_mut() {
            *x /= p;
        }
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != col && row[col] != 0.0 {
                let f = row[col];
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[size]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::singleton_schedules;

    #[test]
    fn singletons_sum_loads() {
        let rho = [0.1, 0.5, 0.3, 0.05];
        let r = lp_oracle(&rho, &singleton_schedules(4)).unwrap();
        assert!(r.feasible);
        assert!((r.beta_star - 0.95).abs() < 1e-12);
    }

    #[test]
    fn uncovered_positive_load_is_infeasible() {
        let rho = [0.1, 0.2, 0.3];
        let s = vec![Schedule::singleton(0), Schedule::singleton(1)];
        assert!(!lp_oracle(&rho, &s).unwrap().feasible);
        // zero load on the uncovered queue is fine
        assert!(lp_oracle(&[0.1, 0.2, 0.0], &s).unwrap().feasible);
    }

    #[test]
    fn size_guard() {
        let rho = vec![0.01; 13];
        assert!(matches!(lp_oracle(&rho, &singleton_schedules(13)), Err(Error::TooLarge(_))));
    }
}
