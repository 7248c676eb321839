//! Numerical and statistical building blocks shared by the engine modules.

pub mod kendall;
pub mod ks;
#[allow(clippy::excessive_precision)]
pub mod normal;
pub mod quadrature;
pub mod regression;

/// Sum in a fixed binary-tree order.
///
/// The result depends only on the slice contents and length, never on how the
/// slice was produced, which keeps Monte Carlo averages bitwise reproducible.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sample mean and standard error of the mean (n − 1 denominator).
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&squares) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Lower and upper counts of the central `coverage` band of Binomial(n, p).
pub fn binomial_band(n: u64, p: f64, coverage: f64) -> (u64, u64) {
    use statrs::distribution::{Binomial, DiscreteCDF};
    let dist = Binomial::new(p, n).expect("valid binomial parameters");
    let tail = (1.0 - coverage) / 2.0;
    (dist.inverse_cdf(tail), dist.inverse_cdf(1.0 - tail))
}
