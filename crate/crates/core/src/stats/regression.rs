//! Least squares with heteroskedasticity-robust Wald tests.
//!
//! Rows are produced by a callback so large pooled designs never need to be
//! materialised; the callback is invoked twice per row.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, PartialEq)]
pub struct WaldTest {
    pub coefficients: Vec<f64>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegressionIssue {
    TooFewRows { n: usize, k: usize },
    ConstantColumn(usize),
    Singular,
}

impl std::fmt::Display for RegressionIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegressionIssue::TooFewRows { n, k } => {
                write!(f, "{n} observations for {k} regressors")
            }
            RegressionIssue::ConstantColumn(c) => write!(f, "regressor {c} is constant"),
            RegressionIssue::Singular => write!(f, "design matrix is singular"),
        }
    }
}

/// Regress y on the `k` columns produced by `row` (column 0 is expected to be
/// the intercept) and test that the coefficients listed in `tested` are
/// jointly zero using the HC1 sandwich covariance.
pub fn robust_wald<F>(
    n: usize,
    k: usize,
    mut row: F,
    tested: &[usize],
) -> Result<WaldTest, RegressionIssue>
where
    F: FnMut(usize, &mut [f64]) -> f64,
{
    if n <= k {
        return Err(RegressionIssue::TooFewRows { n, k });
    }
    let mut x = vec![0.0; k];
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    let mut first = vec![0.0; k];
    let mut varies = vec![false; k];
    let mut y_all_zero = true;
    for i in 0..n {
        let y = row(i, &mut x);
        y_all_zero &= y == 0.0;
        if i == 0 {
            first.copy_from_slice(&x);
        } else {
            for c in 0..k {
                varies[c] |= x[c] != first[c];
            }
        }
        for a in 0..k {
            xty[a] += x[a] * y;
            for b in 0..=a {
                xtx[(a, b)] += x[a] * x[b];
            }
        }
    }
    if let Some(c) = (1..k).find(|&c| !varies[c]) {
        return Err(RegressionIssue::ConstantColumn(c));
    }
    if y_all_zero {
        return Ok(WaldTest {
            coefficients: vec![0.0; k],
            statistic: 0.0,
            df: tested.len(),
            p_value: 1.0,
            n,
        });
    }
    for a in 0..k {
        for b in a + 1..k {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    let chol = xtx.clone().cholesky().ok_or(RegressionIssue::Singular)?;
    let beta = chol.solve(&xty);
    let bread = chol.inverse();

    let mut meat = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let y = row(i, &mut x);
        let fitted: f64 = x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        let e2 = (y - fitted) * (y - fitted);
        for a in 0..k {
            for b in 0..=a {
                meat[(a, b)] += e2 * x[a] * x[b];
            }
        }
    }
    for a in 0..k {
        for b in a + 1..k {
            meat[(a, b)] = meat[(b, a)];
        }
    }
    let scale = n as f64 / (n - k) as f64;
    let cov = &bread * meat * &bread * scale;

    let r = tested.len();
    let sub_beta = DVector::from_iterator(r, tested.iter().map(|&i| beta[i]));
    let sub_cov = DMatrix::from_fn(r, r, |a, b| cov[(tested[a], tested[b])]);
    let statistic = match sub_cov.clone().cholesky() {
        Some(c) => sub_beta.dot(&c.solve(&sub_beta)),
        None if sub_beta.iter().all(|b| b.abs() < 1e-300) => 0.0,
        None => return Err(RegressionIssue::Singular),
    };
    let p_value = ChiSquared::new(r as f64)
        .map(|d| d.sf(statistic))
        .unwrap_or(f64::NAN);
    Ok(WaldTest {
        coefficients: beta.iter().copied().collect(),
        statistic,
        df: r,
        p_value,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_relation() {
        // y = 1 + 2x exactly; coefficients exact, residual variance zero.
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let res = robust_wald(
            xs.len(),
            2,
            |i, row| {
                row[0] = 1.0;
                row[1] = xs[i];
                1.0 + 2.0 * xs[i] + if i % 2 == 0 { 1e-3 } else { -1e-3 }
            },
            &[1],
        )
        .unwrap();
        assert!((res.coefficients[0] - 1.0).abs() < 1e-3);
        assert!((res.coefficients[1] - 2.0).abs() < 1e-3);
        assert!(res.p_value < 1e-10);
    }

    #[test]
    fn constant_regressor_is_reported() {
        let res = robust_wald(
            10,
            2,
            |i, row| {
                row[0] = 1.0;
                row[1] = 3.0;
                i as f64
            },
            &[0, 1],
        );
        assert_eq!(res, Err(RegressionIssue::ConstantColumn(1)));
    }

    #[test]
    fn zero_response_gives_zero_statistic() {
        let res = robust_wald(
            10,
            2,
            |i, row| {
                row[0] = 1.0;
                row[1] = i as f64;
                0.0
            },
            &[0, 1],
        )
        .unwrap();
        assert_eq!(res.statistic, 0.0);
        assert_eq!(res.p_value, 1.0);
    }
}
