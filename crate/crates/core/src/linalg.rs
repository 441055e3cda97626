//! Tiny dense solvers for the d ≤ 4 systems that arise from basis regressions.

use crate::error::{Error, Result};

/// Solve A·x = b in place by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot collapses (singular to working precision).
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    debug_assert!(a.len() == d && a.iter().all(|r| r.len() == d));
    for col in 0..d {
        let pivot =
            (col..d).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-12 * (1.0 + max_abs(&a)) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..d {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..d {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; d];
    for col in (0..d).rev() {
        let mut acc = b[col];
        for k in col + 1..d {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

fn max_abs(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Weighted least squares through the normal equations XᵀWX θ = XᵀWy.
/// `rows` holds the basis expansion of each observation.
pub fn weighted_least_squares(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let d = rows.first().map_or(0, |r| r.len());
    let mut xtwx = vec![vec![0.0; d]; d];
    let mut xtwy = vec![0.0; d];
    for ((row, &yi), &wi) in rows.iter().zip(y).zip(w) {
        for j in 0..d {
            let rw = wi * row[j];
            xtwy[j] += rw * yi;
            for k in j..d {
                xtwx[j][k] += rw * row[k];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            xtwx[j][k] = xtwx[k][j];
        }
    }
    solve(xtwx, xtwy).ok_or_else(|| {
        Error::RankDeficient(format!(
            "normal equations are singular for a {d}-column design; \
             the data admits fewer distinct covariate values than coefficients"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_known_system() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve(a, vec![5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve(a, vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn wls_recovers_exact_line() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64 / 5.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 0.7 - 1.2 * r[1]).collect();
        let w = vec![1.0; 6];
        let theta = weighted_least_squares(&rows, &y, &w).unwrap();
        assert!((theta[0] - 0.7).abs() < 1e-12 && (theta[1] + 1.2).abs() < 1e-12);
    }

    #[test]
    fn wls_flags_rank_deficiency() {
        let rows = vec![vec![1.0, 0.5], vec![1.0, 0.5], vec![1.0, 0.5]];
        let y = vec![1.0, 2.0, 3.0];
        let w = vec![1.0; 3];
        assert!(matches!(
            weighted_least_squares(&rows, &y, &w),
            Err(Error::RankDeficient(_))
        ));
    }
}
