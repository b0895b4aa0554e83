//! Dense solves for the small (p x p) systems that show up in estimation.

use crate::error::{Error, Result};

/// Row-major p x p matrix paired with a right-hand side; solved in place by
/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let p = b.len();
    assert_eq!(a.len(), p * p);
    for col in 0..p {
        let mut pivot = col;
        for row in col + 1..p {
            if a[row * p + col].abs() > a[pivot * p + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * p + col].abs() < 1e-12 {
            return Err(Error::Numerical(format!(
                "singular system (pivot {:.3e} in column {col})",
                a[pivot * p + col]
            )));
        }
        if pivot != col {
            for k in 0..p {
                a.swap(col * p + k, pivot * p + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..p {
            let factor = a[row * p + col] / a[col * p + col];
            if factor == 0.0 {
                continue;
            }
            for k in col..p {
                a[row * p + k] -= factor * a[col * p + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..p).rev() {
        let mut sum = b[col];
        for k in col + 1..p {
            sum -= a[col * p + k] * b[k];
        }
        b[col] = sum / a[col * p + col];
    }
    Ok(b)
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_2x2() {
        let x = solve(vec![2.0, 1.0, 1.0, 3.0], vec![5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_singular() {
        assert!(solve(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0]).is_err());
    }
}
