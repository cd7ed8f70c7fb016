//! Variance of the mean of a uniformly drawn `b`-subset (without replacement).

use itertools::Itertools;

use super::TheoryError;
use crate::linalg::dist_sq;

/// Largest number of subsets the brute-force oracle will enumerate.
pub const ORACLE_LIMIT: f64 = 1e6;

fn check_inputs(values: &[Vec<f64>], b: usize) -> Result<usize, TheoryError> {
    let n = values.len();
    if n < 2 {
        return Err(TheoryError::InvalidInput(format!("need at least 2 values, got {n}")));
    }
    if b == 0 || b > n {
        return Err(TheoryError::InvalidInput(format!("subset size b={b} must lie in [1, {n}]")));
    }
    let d = values[0].len();
    if values.iter().any(|v| v.len() != d) {
        return Err(TheoryError::InvalidInput("values have different dimensions".into()));
    }
    Ok(d)
}

fn mean(values: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for v in values {
        crate::linalg::axpy(1.0, v, &mut m);
    }
    m.iter_mut().for_each(|x| *x /= values.len() as f64);
    m
}

/// `(N − b)/((N − 1)b) · (1/N)Σ‖aᵢ − ā‖²`.
pub fn subset_variance(values: &[Vec<f64>], b: usize) -> Result<f64, TheoryError> {
    let d = check_inputs(values, b)?;
    let n = values.len() as f64;
    let bar = mean(values, d);
    let spread = values.iter().map(|v| dist_sq(v, &bar)).sum::<f64>() / n;
    Ok((n - b as f64) / ((n - 1.0) * b as f64) * spread)
}

/// `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact variance of the subset mean by enumerating every `b`-subset.
pub fn subset_variance_oracle(values: &[Vec<f64>], b: usize) -> Result<f64, TheoryError> {
    let d = check_inputs(values, b)?;
    let count = binomial(values.len(), b);
    if count > ORACLE_LIMIT {
        return Err(TheoryError::SizeLimit {
            combinations: count,
            limit: ORACLE_LIMIT,
        });
    }
    let bar = mean(values, d);
    let mut total = 0.0;
    let mut m = vec![0.0; d];
    let mut k = 0usize;
    for subset in (0..values.len()).combinations(b) {
        m.fill(0.0);
        for &i in &subset {
            crate::linalg::axpy(1.0 / b as f64, &values[i], &mut m);
        }
        total += dist_sq(&m, &bar);
        k += 1;
    }
    Ok(total / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn one_two_three() {
        let v = scalars(&[1.0, 2.0, 3.0]);
        assert!((subset_variance(&v, 2).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((subset_variance_oracle(&v, 2).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(subset_variance(&v, 3).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_sets() {
        let v = vec![vec![1.5, -2.0]; 2];
        assert_eq!(subset_variance(&v, 1).unwrap(), 0.0);
        assert_eq!(subset_variance_oracle(&scalars(&[0.0; 4]), 2).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(subset_variance(&scalars(&[1.0]), 1).is_err());
        assert!(subset_variance(&scalars(&[1.0, 2.0]), 3).is_err());
        assert!(subset_variance(&scalars(&[1.0, 2.0]), 0).is_err());
        let big = scalars(&(0..40).map(|i| i as f64).collect::<Vec<_>>());
        assert!(matches!(
            subset_variance_oracle(&big, 20),
            Err(TheoryError::SizeLimit { .. })
        ));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(6, 0), 1.0);
        assert_eq!(binomial(6, 6), 1.0);
    }
}
