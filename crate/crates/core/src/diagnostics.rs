//! Statistical tests on simulated path sets.
//!
//! The Granger test is a conditional-mean proxy: it regresses an asset's
//! increment on its own history and checks that lags of another asset add
//! nothing. The full distributional statement is only checked exactly, on
//! lattices, by the oracle.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GimpError, Result};
use crate::marginal::{Measure, NormalLaw};
use crate::pathset::PathSet;
use crate::process::{Assets, GimpModel};
use crate::stats::{kendall, ks, regression};

/// Minimum observations per stability bin before it is merged with a neighbour.
pub const MIN_BIN_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub test: String,
    pub label: String,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Normal approximation (W - df) / sqrt(2 df) of a chi-square statistic.
    pub z_score: f64,
    /// Per-report rejection threshold after any multiplicity correction.
    pub threshold: f64,
    pub reject: bool,
    pub skipped: bool,
    pub n: usize,
    pub notes: Vec<String>,
}

impl TestReport {
    fn skipped(test: &str, label: String, threshold: f64, n: usize, note: String) -> Self {
        TestReport {
            test: test.into(),
            label,
            statistic: 0.0,
            df: 0,
            p_value: 1.0,
            z_score: 0.0,
            threshold,
            reject: false,
            skipped: true,
            n,
            notes: vec![note],
        }
    }

    fn from_wald(
        test: &str,
        label: String,
        threshold: f64,
        w: regression::WaldTest,
        notes: Vec<String>,
    ) -> Self {
        let p_value = w.p_value.clamp(0.0, 1.0);
        TestReport {
            test: test.into(),
            label,
            statistic: w.statistic,
            df: w.df,
            p_value,
            z_score: (w.statistic - w.df as f64) / (2.0 * w.df as f64).sqrt(),
            threshold,
            reject: p_value < threshold,
            skipped: false,
            n: w.n,
            notes,
        }
    }
}

/// Number of rejections and number of non-skipped reports.
pub fn rejection_count(reports: &[TestReport]) -> (usize, usize) {
    let tested = reports.iter().filter(|r| !r.skipped).count();
    let rejected = reports.iter().filter(|r| r.reject).count();
    (rejected, tested)
}

/// Render reports as a fixed-width table.
pub fn table(reports: &[TestReport]) -> String {
    let mut out = format!(
        "{:<22} {:<16} {:>12} {:>4} {:>10} {:>10} {:>8} {:>7}\n",
        "test", "cell", "statistic", "df", "p-value", "threshold", "n", "result"
    );
    for r in reports {
        let result = if r.skipped {
            "skipped"
        } else if r.reject {
            "REJECT"
        } else {
            "ok"
        };
        out.push_str(&format!(
            "{:<22} {:<16} {:>12.4} {:>4} {:>10.4} {:>10.2e} {:>8} {:>7}\n",
            r.test, r.label, r.statistic, r.df, r.p_value, r.threshold, r.n, result
        ));
    }
    out
}

fn check_significance(significance: f64) -> Result<()> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(GimpError::input(format!(
            "significance must lie in (0, 1), got {significance}"
        )));
    }
    Ok(())
}

fn column_varies(n: usize, mut value: impl FnMut(usize) -> f64) -> bool {
    if n == 0 {
        return false;
    }
    let first = value(0);
    (1..n).any(|p| value(p) != first)
}

/// Martingale regression test for discounted prices. See
/// [`martingale_test_with_rate`].
pub fn martingale_test(paths: &PathSet, significance: f64) -> Result<Vec<TestReport>> {
    martingale_test_with_rate(paths, 0.0, significance)
}

/// For every asset j and step t, regress `e^{-r} S^j_{t+1}/S^j_t - 1` on an
/// intercept, all time-t prices and (for time-changed paths) all time-t
/// clock values, and test that every coefficient is zero.
///
/// Cells whose price regressors are constant across paths are skipped.
/// Constant clock columns are dropped.
pub fn martingale_test_with_rate(
    paths: &PathSet,
    rate: f64,
    significance: f64,
) -> Result<Vec<TestReport>> {
    check_significance(significance)?;
    let (m, n) = (paths.dim, paths.n_paths);
    let cells: Vec<(usize, usize)> = (0..paths.horizon)
        .flat_map(|t| (0..m).map(move |j| (j, t)))
        .collect();
    let discount = (-rate).exp();
    let reports = cells
        .par_iter()
        .map(|&(j, t)| {
            let label = format!("asset {j}, t={t}");
            let constant_price = (0..m).find(|&i| !column_varies(n, |p| paths.log_price(p, t, i)));
            if let Some(i) = constant_price {
                return TestReport::skipped(
                    "martingale",
                    label,
                    significance,
                    n,
                    format!("price of asset {i} is constant at t={t}"),
                );
            }
            let mut notes = Vec::new();
            let mut clocks: Vec<usize> = Vec::new();
            if paths.clock.is_some() {
                let clock = |p: usize, i: usize| paths.clock_value(p, t, i).unwrap_or(0);
                for i in 0..m {
                    if !column_varies(n, |p| clock(p, i) as f64) {
                        notes.push(format!("clock {i} constant at t={t}, dropped"));
                    } else if let Some(&k) = clocks
                        .iter()
                        .find(|&&k| (0..n).all(|p| clock(p, k) == clock(p, i)))
                    {
                        notes.push(format!("clock {i} equals clock {k} at t={t}, dropped"));
                    } else {
                        clocks.push(i);
                    }
                }
            }
            let k = 1 + m + clocks.len();
            let tested: Vec<usize> = (0..k).collect();
            let row = |p: usize, x: &mut [f64]| {
                x[0] = 1.0;
                for i in 0..m {
                    x[1 + i] = paths.log_price(p, t, i).exp();
                }
                for (c, &i) in clocks.iter().enumerate() {
                    x[1 + m + c] = paths.clock_value(p, t, i).unwrap_or(0) as f64;
                }
                discount * (paths.log_price(p, t + 1, j) - paths.log_price(p, t, j)).exp() - 1.0
            };
            match regression::robust_wald(n, k, row, &tested) {
                Ok(w) => TestReport::from_wald("martingale", label, significance, w, notes),
                Err(issue) => {
                    TestReport::skipped("martingale", label, significance, n, issue.to_string())
                }
            }
        })
        .collect();
    Ok(reports)
}

/// Cross-lag Granger test in conditional-mean form, one report per ordered
/// pair (k, j) asking whether asset k helps predict asset j.
///
/// The increment `X^j_{t+1} - X^j_t` is regressed on an intercept, `lags` own
/// lagged increments, the own level, the own conditional variance (when
/// recorded and not constant), then `lags` lagged increments of asset k and
/// its level. The last `lags + 1` coefficients are tested jointly. Rows are
/// pooled over paths and over t in `lags..horizon`. The threshold is
/// Bonferroni-corrected over the m(m-1) pairs.
pub fn granger_test(paths: &PathSet, lags: usize, significance: f64) -> Result<Vec<TestReport>> {
    check_significance(significance)?;
    let m = paths.dim;
    if m < 2 {
        return Ok(vec![TestReport::skipped(
            "granger",
            "all".into(),
            significance,
            0,
            "m ≥ 2 required".into(),
        )]);
    }
    if lags == 0 {
        return Err(GimpError::input("granger test needs at least one lag"));
    }
    if paths.horizon <= lags {
        return Err(GimpError::input(format!(
            "granger test with {lags} lags needs horizon > {lags}, got {}",
            paths.horizon
        )));
    }
    let per_path = paths.horizon - lags;
    let n = paths.n_paths * per_path;
    let with_variance = paths.variances.is_some();
    let k_max = 1 + lags + 2 + lags + 1;
    if n <= k_max {
        return Err(GimpError::input(format!(
            "{n} observations are too few for {k_max} regressors"
        )));
    }
    let threshold = significance / (m * (m - 1)) as f64;
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|k| (0..m).filter(move |&j| j != k).map(move |j| (k, j)))
        .collect();
    let dx = |p: usize, t: usize, a: usize| paths.log_price(p, t + 1, a) - paths.log_price(p, t, a);
    let reports = pairs
        .par_iter()
        .map(|&(k, j)| {
            let label = format!("{k} -> {j}");
            let mut notes = vec!["conditional-mean proxy for Granger non-causality".to_string()];
            let use_variance = with_variance && {
                let first = paths.variance(0, lags, j);
                let varies = (0..paths.n_paths)
                    .any(|p| (lags..paths.horizon).any(|t| paths.variance(p, t, j) != first));
                if !varies {
                    notes.push(format!("variance of asset {j} is constant, dropped"));
                }
                varies
            };
            let own = 1 + lags + 1 + use_variance as usize;
            let cols = own + lags + 1;
            let tested: Vec<usize> = (own..cols).collect();
            let row = |i: usize, x: &mut [f64]| {
                let (p, t) = (i / per_path, lags + i % per_path);
                x[0] = 1.0;
                for l in 1..=lags {
                    x[l] = dx(p, t - l, j);
                    x[own + l - 1] = dx(p, t - l, k);
                }
                x[1 + lags] = paths.log_price(p, t, j);
                if use_variance {
                    x[2 + lags] = paths.variance(p, t, j).unwrap_or(0.0);
                }
                x[own + lags] = paths.log_price(p, t, k);
                dx(p, t, j)
            };
            match regression::robust_wald(n, cols, row, &tested) {
                Ok(w) => TestReport::from_wald("granger", label, threshold, w, notes),
                Err(issue) => {
                    TestReport::skipped("granger", label, threshold, n, issue.to_string())
                }
            }
        })
        .collect();
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityBin {
    /// Inclusive upper edge of the conditioning feature.
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTau {
    pub i: usize,
    pub j: usize,
    /// Kendall's tau between the two assets' increments, per bin.
    pub per_bin: Vec<f64>,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub reports: Vec<TestReport>,
    pub bins: Vec<StabilityBin>,
    pub kendall: Vec<PairTau>,
    /// Largest per-pair spread of binned Kendall's tau.
    pub tau_spread: f64,
    pub notes: Vec<String>,
}

impl StabilityReport {
    pub fn any_rejection(&self) -> bool {
        self.reports.iter().any(|r| r.reject)
    }
}

/// Cross-sectional spread of log-moneyness, the conditioning feature used
/// by [`increment_stability_test`].
pub fn moneyness_spread(paths: &PathSet, p: usize, t: usize) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for j in 0..paths.dim {
        let v = paths.log_price(p, t, j) - paths.log_price(p, 0, j);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

/// Bin observations by quantiles of `features` and merge bins smaller than
/// [`MIN_BIN_SIZE`]. Returns the bin index of every observation and the bins.
fn quantile_bins(
    features: &[f64],
    bins: usize,
    notes: &mut Vec<String>,
) -> (Vec<usize>, Vec<StabilityBin>) {
    let mut sorted = features.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut uppers: Vec<f64> = (1..bins)
        .map(|b| sorted[(b * n / bins).saturating_sub(1).min(n - 1)])
        .collect();
    uppers.push(f64::INFINITY);
    uppers.dedup();
    let locate = |uppers: &[f64], f: f64| uppers.partition_point(|&u| u < f);
    let mut counts = vec![0usize; uppers.len()];
    for &f in features {
        counts[locate(&uppers, f)] += 1;
    }
    // Merge undersized bins into the following bin (the last one merges
    // backwards).
    let mut b = 0;
    while b < uppers.len() && uppers.len() > 1 {
        if counts[b] >= MIN_BIN_SIZE {
            b += 1;
            continue;
        }
        let into = if b + 1 < uppers.len() { b + 1 } else { b - 1 };
        notes.push(format!(
            "bin with {} observations merged with a neighbour",
            counts[b]
        ));
        counts[into] += counts[b];
        if into > b {
            uppers.remove(b);
            counts.remove(b);
        } else {
            uppers[into] = uppers[b];
            uppers.remove(b);
            counts.remove(b);
            b = b.saturating_sub(1);
        }
    }
    let assignment = features.iter().map(|&f| locate(&uppers, f)).collect();
    let bins = uppers
        .into_iter()
        .zip(counts)
        .map(|(upper, count)| StabilityBin { upper, count })
        .collect();
    (assignment, bins)
}

/// Distribution-form stability test for each asset's increments.
///
/// Observations are the one-step increments at every (path, t) with
/// t < horizon. They are binned by quantiles of the cross-sectional
/// log-moneyness spread at time t, and each bin's increments are compared to
/// those of the remaining bins with a two-sample KS test. The threshold is
/// Bonferroni-corrected over bins and assets. Alongside, Kendall's tau
/// between every pair of assets is computed within each bin.
pub fn increment_stability_test(
    paths: &PathSet,
    bins: usize,
    significance: f64,
) -> Result<StabilityReport> {
    check_significance(significance)?;
    if bins < 2 {
        return Err(GimpError::input(format!(
            "stability test needs at least 2 bins, got {bins}"
        )));
    }
    let (m, h) = (paths.dim, paths.horizon);
    let n = paths.n_paths * h;
    if n < 2 * MIN_BIN_SIZE {
        return Err(GimpError::input(format!(
            "stability test needs at least {} observations, got {n}",
            2 * MIN_BIN_SIZE
        )));
    }
    let obs = |i: usize| (i / h, i % h);
    let features: Vec<f64> = (0..n)
        .map(|i| {
            let (p, t) = obs(i);
            moneyness_spread(paths, p, t)
        })
        .collect();
    let mut notes = Vec::new();
    let (assignment, bin_info) = quantile_bins(&features, bins, &mut notes);
    let nb = bin_info.len();
    if nb < 2 {
        notes.push("conditioning feature takes a single value; no split possible".into());
    }
    let increments: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            (0..n)
                .map(|i| {
                    let (p, t) = obs(i);
                    paths.log_price(p, t + 1, j) - paths.log_price(p, t, j)
                })
                .collect()
        })
        .collect();
    let threshold = significance / (nb.max(1) * m) as f64;

    let reports = (0..m)
        .into_par_iter()
        .map(|j| {
            let label = format!("asset {j}");
            if nb < 2 {
                return TestReport::skipped(
                    "increment_stability",
                    label,
                    threshold,
                    n,
                    "single bin".into(),
                );
            }
            let mut worst_d: f64 = 0.0;
            let mut min_p: f64 = 1.0;
            let mut bin_notes = Vec::new();
            for b in 0..nb {
                let (inside, outside): (Vec<(usize, f64)>, Vec<(usize, f64)>) = increments[j]
                    .iter()
                    .copied()
                    .enumerate()
                    .partition(|(i, _)| assignment[*i] == b);
                let inside: Vec<f64> = inside.into_iter().map(|(_, v)| v).collect();
                let outside: Vec<f64> = outside.into_iter().map(|(_, v)| v).collect();
                let (d, p) = ks::two_sample_test(&inside, &outside);
                bin_notes.push(format!("bin {b}: D={d:.5}, p={p:.4}"));
                worst_d = worst_d.max(d);
                min_p = min_p.min(p);
            }
            TestReport {
                test: "increment_stability".into(),
                label,
                statistic: worst_d,
                df: nb,
                p_value: min_p,
                z_score: 0.0,
                threshold,
                reject: min_p < threshold,
                skipped: false,
                n,
                notes: bin_notes,
            }
        })
        .collect();

    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .collect();
    let kendall: Vec<PairTau> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let per_bin: Vec<f64> = (0..nb)
                .map(|b| {
                    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n)
                        .filter(|&o| assignment[o] == b)
                        .map(|o| (increments[i][o], increments[j][o]))
                        .unzip();
                    kendall::tau_b(&xs, &ys)
                })
                .collect();
            let finite = per_bin.iter().copied().filter(|v| v.is_finite());
            let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            let spread = if hi >= lo { hi - lo } else { 0.0 };
            PairTau {
                i,
                j,
                per_bin,
                spread,
            }
        })
        .collect();
    let tau_spread = kendall.iter().map(|k| k.spread).fold(0.0, f64::max);
    Ok(StabilityReport {
        reports,
        bins: bin_info,
        kendall,
        tau_spread,
        notes,
    })
}

/// Law of the sum of `steps` increments of a stationary i.i.d. asset.
pub fn stationary_increment_law(model: &GimpModel, asset: usize, steps: u64) -> Option<NormalLaw> {
    let Assets::IidStationary(assets) = model.assets() else {
        return None;
    };
    let sigma = assets.get(asset)?.sigma;
    let drift = match model.measure() {
        Measure::Q => model.rate(),
        Measure::P => 0.0,
    };
    let u = steps as f64;
    Some(NormalLaw {
        mean: u * (drift - 0.5 * sigma * sigma),
        var: u * sigma * sigma,
    })
}

/// Mixture identity check on time-changed paths: conditionally on its clock
/// increment u, each increment `X^j_{T_{s+1}} - X^j_{T_s}` must follow the
/// u-step base law. Increments with u >= 1 are mapped through `cdf(j, u, x)`
/// and tested for uniformity with a one-sample KS test per asset (Bonferroni
/// over assets). Increments with u = 0 must be exactly zero.
pub fn mixture_test<F>(paths: &PathSet, cdf: F, significance: f64) -> Result<Vec<TestReport>>
where
    F: Fn(usize, u64, f64) -> f64 + Sync,
{
    check_significance(significance)?;
    if paths.clock.is_none() {
        return Err(GimpError::input(
            "mixture test needs time-changed paths with a clock column",
        ));
    }
    let m = paths.dim;
    let threshold = significance / m as f64;
    let reports = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut pit = Vec::with_capacity(paths.n_paths * paths.horizon);
            let mut flat_nonzero = 0usize;
            let mut flat = 0usize;
            for p in 0..paths.n_paths {
                for s in 0..paths.horizon {
                    let du = paths.clock_value(p, s + 1, j).unwrap_or(0)
                        - paths.clock_value(p, s, j).unwrap_or(0);
                    let dx = paths.log_price(p, s + 1, j) - paths.log_price(p, s, j);
                    if du == 0 {
                        flat += 1;
                        flat_nonzero += (dx != 0.0) as usize;
                    } else {
                        pit.push(cdf(j, du, dx));
                    }
                }
            }
            let label = format!("asset {j}");
            let mut notes = vec![format!("{flat} zero clock increments")];
            if flat_nonzero > 0 {
                notes.push(format!(
                    "{flat_nonzero} zero clock increments moved the price"
                ));
            }
            if pit.len() < 2 {
                return TestReport::skipped(
                    "mixture",
                    label,
                    threshold,
                    pit.len(),
                    "no clock increments".into(),
                );
            }
            let (d, p) = ks::uniform_test(&pit);
            TestReport {
                test: "mixture".into(),
                label,
                statistic: d,
                df: 0,
                p_value: p,
                z_score: 0.0,
                threshold,
                reject: p < threshold || flat_nonzero > 0,
                skipped: false,
                n: pit.len(),
                notes,
            }
        })
        .collect();
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{ClockSpec, TimeChangedModel};
    use crate::copula::{CopulaSpec, StateMap};
    use crate::process::IidMarginal;
    use crate::rng::{Domain, RngStream};

    fn constant_paths(n: usize, horizon: usize, m: usize) -> PathSet {
        PathSet::from_log_prices(n, horizon, m, vec![0.0; n * (horizon + 1) * m]).unwrap()
    }

    fn two_asset_garch() -> GimpModel {
        use crate::marginal::{GarchParams, InitialVariance};
        let p = GarchParams::new(1e-5, 0.85, 0.1, 0.0, InitialVariance::Stationary).unwrap();
        let a = crate::process::GarchAsset { params: p, s0: 1.0 };
        GimpModel::garch(vec![a, a], CopulaSpec::clayton(2, 2.0).unwrap()).unwrap()
    }

    fn normal(stream: &mut RngStream) -> f64 {
        crate::stats::normal::quantile(stream.uniform())
    }

    #[test]
    fn constant_paths_give_zero_statistic() {
        let paths = constant_paths(200, 3, 2);
        let reports = martingale_test(&paths, 0.01).unwrap();
        assert_eq!(reports.len(), 6);
        for r in &reports {
            assert_eq!(r.statistic, 0.0);
            assert!(!r.reject);
        }
    }

    #[test]
    fn first_step_is_skipped_with_note() {
        let paths = two_asset_garch().simulate(500, 3, 1).unwrap();
        let reports = martingale_test(&paths, 0.01).unwrap();
        let first: Vec<_> = reports
            .iter()
            .filter(|r| r.label.ends_with("t=0"))
            .collect();
        assert_eq!(first.len(), 2);
        assert!(first
            .iter()
            .all(|r| r.skipped && r.notes[0].contains("constant")));
        assert!(reports
            .iter()
            .filter(|r| !r.label.ends_with("t=0"))
            .all(|r| !r.skipped));
    }

    #[test]
    fn martingale_test_has_power_under_drift() {
        use crate::marginal::{GarchParams, InitialVariance};
        let p = GarchParams::new(1e-5, 0.85, 0.1, 0.01, InitialVariance::Stationary).unwrap();
        let a = crate::process::GarchAsset { params: p, s0: 1.0 };
        let model = GimpModel::garch(vec![a, a], CopulaSpec::clayton(2, 2.0).unwrap())
            .unwrap()
            .with_measure(Measure::P);
        let paths = model.simulate(100_000, 4, 5).unwrap();
        let (rejected, tested) = rejection_count(&martingale_test(&paths, 0.01).unwrap());
        assert_eq!(tested, 6);
        assert_eq!(rejected, tested);
    }

    #[test]
    fn garch_paths_pass_granger_test() {
        let paths = two_asset_garch().simulate(20_000, 6, 3).unwrap();
        let reports = granger_test(&paths, 2, 0.01).unwrap();
        assert_eq!(reports.len(), 2);
        assert!(reports.iter().all(|r| !r.skipped && r.df == 3));
        assert!(reports.iter().all(|r| !r.reject), "{}", table(&reports));
    }

    #[test]
    fn contamination_is_detected() {
        // Asset 1's increment mean shifts by 0.5 when asset 0 sits above its
        // median level.
        let (n, h) = (100_000usize, 4usize);
        let mut logs = vec![0.0; n * (h + 1) * 2];
        let idx = |p: usize, t: usize, j: usize| (p * (h + 1) + t) * 2 + j;
        for p in 0..n {
            let mut s = RngStream::sequential(11, Domain::Auxiliary, p as u64);
            for t in 0..h {
                let above = logs[idx(p, t, 0)] > 0.0;
                logs[idx(p, t + 1, 0)] = logs[idx(p, t, 0)] + 0.1 * normal(&mut s);
                let shift = if above { 0.5 * 0.1 } else { 0.0 };
                logs[idx(p, t + 1, 1)] = logs[idx(p, t, 1)] + shift + 0.1 * normal(&mut s);
            }
        }
        let paths = PathSet::from_log_prices(n, h, 2, logs).unwrap();
        let reports = granger_test(&paths, 1, 0.01).unwrap();
        let forward = reports.iter().find(|r| r.label == "0 -> 1").unwrap();
        let backward = reports.iter().find(|r| r.label == "1 -> 0").unwrap();
        assert!(forward.reject, "{}", table(&reports));
        assert!(!backward.reject, "{}", table(&reports));
    }

    #[test]
    fn granger_refuses_single_asset_and_short_horizon() {
        let one = constant_paths(50, 3, 1);
        let r = granger_test(&one, 1, 0.01).unwrap();
        assert!(r[0].skipped && r[0].notes[0].contains("m ≥ 2 required"));
        let short = constant_paths(50, 2, 2);
        assert!(matches!(
            granger_test(&short, 2, 0.01),
            Err(GimpError::Input(_))
        ));
    }

    #[test]
    fn identical_increments_give_zero_ks() {
        let (n, h) = (400usize, 3usize);
        let logs: Vec<f64> = (0..n)
            .flat_map(|p| {
                (0..=h).flat_map(move |t| [0.125 * t as f64 * (1 + p % 3) as f64, 0.25 * t as f64])
            })
            .collect();
        // Every asset-1 increment is 0.25 regardless of the bin.
        let paths = PathSet::from_log_prices(n, h, 2, logs).unwrap();
        let report = increment_stability_test(&paths, 4, 0.01).unwrap();
        assert_eq!(report.reports[1].statistic, 0.0);
        assert!(!report.reports[1].reject);
    }

    #[test]
    fn small_bins_are_merged() {
        let mut notes = Vec::new();
        let features: Vec<f64> = (0..450)
            .map(|i| if i < 350 { 0.0 } else { i as f64 })
            .collect();
        let (assign, bins) = quantile_bins(&features, 10, &mut notes);
        assert!(bins.iter().all(|b| b.count >= MIN_BIN_SIZE));
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 450);
        assert!(!notes.is_empty());
        assert!(assign.iter().all(|&b| b < bins.len()));
    }

    #[test]
    fn stability_rejects_garch_paths() {
        use crate::marginal::{GarchParams, InitialVariance};
        let p = GarchParams::new(1e-5, 0.6, 0.35, 0.0, InitialVariance::Stationary).unwrap();
        let a = crate::process::GarchAsset { params: p, s0: 1.0 };
        let model = GimpModel::garch(vec![a, a], CopulaSpec::clayton(2, 2.0).unwrap()).unwrap();
        let paths = model.simulate(50_000, 10, 4).unwrap();
        // Variance clustering makes the increment law depend on the state;
        // the spread feature sees large past moves.
        let report = increment_stability_test(&paths, 5, 0.01).unwrap();
        assert!(report.any_rejection(), "{:?}", report.reports);
    }

    fn iid_state_dependent() -> GimpModel {
        let copula = CopulaSpec::clayton(2, 1.0)
            .unwrap()
            .with_state_map(StateMap { a: 0.2, b: 40.0 })
            .unwrap();
        GimpModel::iid(vec![IidMarginal::new(0.1, 1.0).unwrap(); 2], copula).unwrap()
    }

    #[test]
    fn iid_state_dependent_coupling_is_stable_but_varies_in_tau() {
        let paths = iid_state_dependent().simulate(20_000, 5, 8).unwrap();
        let report = increment_stability_test(&paths, 5, 0.01).unwrap();
        assert!(!report.any_rejection(), "{:?}", report.reports);
        assert!(report.tau_spread > 0.1, "{:?}", report.kendall);
    }

    #[test]
    fn mixture_identity_holds_for_poisson_clock() {
        let base = iid_state_dependent();
        let clock = ClockSpec::poisson(vec![1.0, 1.0]).unwrap();
        let model = TimeChangedModel::new(base.clone(), clock).unwrap();
        let paths = model.simulate(20_000, 5, 2).unwrap();
        let reports = mixture_test(
            &paths,
            |j, u, x| stationary_increment_law(&base, j, u).unwrap().cdf(x),
            0.01,
        )
        .unwrap();
        assert!(
            reports.iter().all(|r| !r.reject && !r.skipped),
            "{}",
            table(&reports)
        );
        // A wrong variance is detected.
        let wrong = mixture_test(
            &paths,
            |j, u, x| {
                let law = stationary_increment_law(&base, j, u).unwrap();
                NormalLaw {
                    var: law.var * 1.2,
                    ..law
                }
                .cdf(x)
            },
            0.01,
        )
        .unwrap();
        assert!(wrong.iter().all(|r| r.reject));
    }

    #[test]
    fn reports_are_deterministic() {
        let paths = two_asset_garch().simulate(2_000, 4, 9).unwrap();
        assert_eq!(
            martingale_test(&paths, 0.05).unwrap(),
            martingale_test(&paths, 0.05).unwrap()
        );
        assert_eq!(
            granger_test(&paths, 1, 0.05).unwrap(),
            granger_test(&paths, 1, 0.05).unwrap()
        );
    }
}
