use gimp_core::oracle::{self, fixtures, TOLERANCE};
use gimp_core::pathset::{self, with_workers};
use gimp_core::stats::mean_and_stderr;

type Statistic = (&'static str, fn(&[f64]) -> f64);

#[test]
fn fixtures_pass_their_required_checks() {
    for spec in [
        fixtures::two_asset(0.0),
        fixtures::two_asset(0.6),
        fixtures::two_asset(1.0),
        fixtures::level_dependent_coupling(),
    ] {
        for report in oracle::enumerate_all(&spec, true).unwrap() {
            assert!(report.ok(), "{}", report.table());
        }
    }
}

#[test]
fn contamination_breaks_granger_but_not_the_martingale() {
    let spec = fixtures::contaminated();
    let mart = oracle::enumerate_and_check_martingale(&spec).unwrap();
    assert!(mart.check("martingale").unwrap().max_violation < TOLERANCE);
    let granger = oracle::enumerate_and_check_granger(&spec).unwrap();
    let c = granger.check("no_granger_causality").unwrap();
    assert!(
        c.max_violation > 1e-3 && c.witness.is_some(),
        "{}",
        granger.table()
    );
}

#[test]
fn broken_normalisation_is_measured_not_hidden() {
    let spec = fixtures::broken_normalisation();
    assert!(oracle::enumerate_and_check_martingale(&spec).is_err());
    let report = oracle::enumerate_martingale_unchecked(&spec).unwrap();
    let c = report.check("martingale").unwrap();
    assert!(!report.ok());
    assert!(
        (c.max_violation - 0.02).abs() < 1e-12,
        "{}",
        c.max_violation
    );
}

#[test]
fn asynchronous_clock_loses_the_guarantees() {
    let report = oracle::enumerate_and_check_timechange(&fixtures::coupled_asynchronous()).unwrap();
    assert!(report.ok(), "{}", report.table());
    let own = report.check("own_history_sufficient").unwrap();
    assert!(!own.required && own.max_violation > 1e-6);
}

#[test]
fn random_suites_are_exact_and_reproducible() {
    let a = oracle::lattice_suite(3, 20).unwrap();
    let b = with_workers(Some(1), || oracle::lattice_suite(3, 20))
        .unwrap()
        .unwrap();
    for ((spec_a, rep_a), (spec_b, rep_b)) in a.iter().zip(&b) {
        assert_eq!(spec_a, spec_b);
        for (x, y) in rep_a.iter().zip(rep_b) {
            assert!(x.ok(), "{}", x.table());
            assert_eq!(x.checks, y.checks);
        }
    }
    for (_, report) in oracle::timechange_suite(3, 10).unwrap() {
        assert!(report.ok(), "{}", report.table());
    }
}

#[test]
fn simulated_lattice_matches_exact_expectations() {
    let spec = fixtures::contaminated();
    let n = 200_000;
    let paths = pathset::simulate(&spec, n, spec.horizon, 17).unwrap();
    let t = spec.horizon;
    let funcs: [Statistic; 3] = [
        ("first price", |s| s[0]),
        ("product", |s| s[0] * s[1]),
        ("worst of", |s| s[0].min(s[1])),
    ];
    for (name, f) in funcs {
        let exact = spec.exact_expectation(t, f).unwrap();
        let values: Vec<f64> = (0..n)
            .map(|p| {
                f(&[
                    paths.log_price(p, t, 0).exp(),
                    paths.log_price(p, t, 1).exp(),
                ])
            })
            .collect();
        let (mean, se) = mean_and_stderr(&values);
        assert!(
            (mean - exact).abs() < 4.0 * se,
            "{name}: {mean} vs {exact} ± {se}"
        );
    }
}
