//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 3 9`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gimp_core::clock::{ClockFamily, ClockSpec, TimeChangedModel};
use gimp_core::copula::{CopulaSpec, StateMap, UnitPoint};
use gimp_core::diagnostics::{increment_stability_test, martingale_test, rejection_count};
use gimp_core::marginal::{self, GarchParams, InitialVariance, MarginalState, Measure};
use gimp_core::oracle::{self, fixtures, TOLERANCE};
use gimp_core::pathset::PathSet;
use gimp_core::pricing::{price_many, PayoffKind, PayoffSpec};
use gimp_core::process::{GarchAsset, GimpModel, IidMarginal};
use gimp_core::rng::{Domain, RngStream};
use gimp_core::stats::{binomial_band, kendall, ks, mean_and_stderr};

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    title: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn garch_assets() -> Vec<GarchAsset> {
    let a = GarchParams::new(1e-5, 0.85, 0.1, 0.0, InitialVariance::Stationary).unwrap();
    let b = GarchParams::new(2e-5, 0.8, 0.12, 0.0, InitialVariance::Stationary).unwrap();
    vec![
        GarchAsset { params: a, s0: 1.0 },
        GarchAsset { params: b, s0: 1.0 },
    ]
}

fn clayton_garch(theta: f64) -> GimpModel {
    GimpModel::garch(garch_assets(), CopulaSpec::clayton(2, theta).unwrap()).unwrap()
}

/// Largest |mean - s0| / stderr over all assets and times t >= 1.
fn worst_mean_deviation(paths: &PathSet, s0: &[f64]) -> (f64, String) {
    let mut worst = (0.0, String::new());
    let mut prices = vec![0.0; paths.n_paths];
    for t in 1..=paths.horizon {
        for (j, &s) in s0.iter().enumerate() {
            for (p, v) in prices.iter_mut().enumerate() {
                *v = paths.log_price(p, t, j).exp();
            }
            let (mean, se) = mean_and_stderr(&prices);
            let z = (mean - s).abs() / se;
            if z > worst.0 {
                worst = (z, format!("asset {j} t={t} mean {mean:.6}"));
            }
        }
    }
    worst
}

fn oracle_exactness() -> Outcome {
    let suite = oracle::lattice_suite(7, 100).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (i, (_, reports)) in suite.iter().enumerate() {
        for r in reports {
            for c in &r.checks {
                let applies =
                    c.name == "martingale" || c.name == "no_granger_causality" || c.required;
                if !applies {
                    continue;
                }
                worst = worst.max(c.max_violation);
                if !(c.required && c.max_violation < TOLERANCE) {
                    failures.push(format!("lattice {i} {}: {:.3e}", c.name, c.max_violation));
                }
            }
            if r.histories_visited != r.histories_expected {
                failures.push(format!("lattice {i} {}: incomplete enumeration", r.suite));
            }
        }
    }
    ensure(
        failures.is_empty(),
        format!("100 lattices, max violation {worst:.2e}{}", list(&failures)),
    )
}

fn list(items: &[String]) -> String {
    if items.is_empty() {
        String::new()
    } else {
        format!(
            "; failing: {}",
            items.iter().take(5).cloned().collect::<Vec<_>>().join(", ")
        )
    }
}

fn timechange_exactness() -> Outcome {
    const CHECKS: [&str; 5] = [
        "own_history_sufficient",
        "clock_history_sufficient",
        "time_changed_martingale",
        "stationary_increments",
        "mixture_identity",
    ];
    let suite = oracle::timechange_suite(7, 50).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (i, (_, report)) in suite.iter().enumerate() {
        for name in CHECKS {
            match report.check(name) {
                Some(c) if c.required && c.max_violation < TOLERANCE => {
                    worst = worst.max(c.max_violation)
                }
                Some(c) => failures.push(format!(
                    "lattice {i} {name}: {:.3e} (required {})",
                    c.max_violation, c.required
                )),
                None => failures.push(format!("lattice {i} {name}: missing")),
            }
        }
        if !report.ok() {
            failures.push(format!("lattice {i}: report not ok"));
        }
    }
    let counter = oracle::enumerate_and_check_timechange(&fixtures::nonstationary_with_clock())
        .map_err(|e| e.to_string())?;
    let stationary = counter
        .check("stationary_increments")
        .ok_or("counterexample has no stationary_increments check")?;
    if !(stationary.max_violation > 0.0 && stationary.witness.is_some()) {
        failures.push(format!(
            "counterexample violation {:.3e} without witness",
            stationary.max_violation
        ));
    }
    ensure(
        failures.is_empty(),
        format!(
            "50 clock lattices, max violation {worst:.2e}; non-stationary fixture violation {:.3e} with witness{}",
            stationary.max_violation,
            list(&failures)
        ),
    )
}

fn martingale_normalisation() -> Outcome {
    let mut stream = RngStream::sequential(2024, Domain::Auxiliary, 0);
    let mut states = Vec::new();
    let mut inexact = 0;
    for _ in 0..1000 {
        let omega0 = 1e-7 + stream.uniform() * 1e-4;
        let omega1 = stream.uniform() * 0.9;
        let omega2 = stream.uniform() * (0.99 - omega1);
        let params =
            GarchParams::new(omega0, omega1, omega2, 0.0, InitialVariance::Stationary).unwrap();
        let state = MarginalState {
            x: stream.uniform() - 0.5,
            h2: 1e-6 + stream.uniform() * 1e-2,
            y_prev: 0.2 * (stream.uniform() - 0.5),
        };
        if marginal::martingale_factor(Measure::Q, &params, &state) != 1.0 {
            inexact += 1;
        }
        states.push((params, state));
    }
    let mut worst: f64 = 0.0;
    let draws = 1_000_000;
    for (k, (params, state)) in states.iter().take(10).enumerate() {
        let law = marginal::conditional_law(Measure::Q, params, state, 0.0);
        let mut s = RngStream::sequential(99, Domain::Auxiliary, k as u64);
        let values: Vec<f64> = (0..draws)
            .map(|_| law.quantile(s.uniform()).exp())
            .collect();
        let (mean, se) = mean_and_stderr(&values);
        worst = worst.max((mean - 1.0).abs() / se);
    }
    ensure(
        inexact == 0 && worst < 4.0,
        format!("{inexact} of 1000 factors differ from 1; worst Monte Carlo deviation {worst:.2} stderr over 10 states"),
    )
}

fn multivariate_martingale() -> Outcome {
    let model = clayton_garch(2.0);
    let (n, horizon, reps) = (100_000, 20, 200u64);
    let first = model.simulate(n, horizon, 1).map_err(|e| e.to_string())?;
    let (z, where_) = worst_mean_deviation(&first, &[1.0, 1.0]);
    drop(first);
    let (mut rejected, mut tested) = (0usize, 0usize);
    for rep in 0..reps {
        let paths = model
            .simulate(n, horizon, 1_000 + rep)
            .map_err(|e| e.to_string())?;
        let (r, t) = rejection_count(&martingale_test(&paths, 0.01).map_err(|e| e.to_string())?);
        rejected += r;
        tested += t;
    }
    let (lo, hi) = binomial_band(tested as u64, 0.01, 0.99);
    let in_band = (lo..=hi).contains(&(rejected as u64));
    ensure(
        z < 4.0 && in_band,
        format!(
            "worst mean deviation {z:.2} stderr ({where_}); {rejected}/{tested} rejections = {:.4}, 99% band [{lo}, {hi}]",
            rejected as f64 / tested as f64
        ),
    )
}

fn time_changed_martingale() -> Outcome {
    let model = TimeChangedModel::new(
        clayton_garch(2.0),
        ClockSpec::poisson(vec![1.0, 1.0]).unwrap(),
    )
    .unwrap();
    let paths = model.simulate(100_000, 10, 5).map_err(|e| e.to_string())?;
    let (z, where_) = worst_mean_deviation(&paths, &[1.0, 1.0]);
    ensure(
        z < 4.0,
        format!("worst mean deviation {z:.2} stderr ({where_}) over s = 1..10"),
    )
}

fn stationary_increments() -> Outcome {
    let copula = CopulaSpec::clayton(2, 1.0)
        .unwrap()
        .with_state_map(StateMap { a: 0.2, b: 40.0 })
        .unwrap();
    let base = GimpModel::iid(vec![IidMarginal::new(0.1, 1.0).unwrap(); 2], copula).unwrap();
    // Synchronous clock: both components share one Poisson(1) draw per step.
    let clock = ClockSpec::new(
        ClockFamily::Poisson(vec![1.0, 1.0]),
        CopulaSpec::comonotone(2).unwrap(),
        false,
    )
    .unwrap();
    let model = TimeChangedModel::new(base, clock).unwrap();
    let paths = model.simulate(100_000, 10, 6).map_err(|e| e.to_string())?;
    let report = increment_stability_test(&paths, 10, 0.01).map_err(|e| e.to_string())?;
    let min_p = report.reports.iter().map(|r| r.p_value).fold(1.0, f64::min);
    let threshold = report.reports[0].threshold;
    ensure(
        !report.any_rejection() && report.tau_spread > 0.1,
        format!(
            "smallest KS p-value {min_p:.4} vs corrected threshold {threshold:.1e}; Kendall tau spread {:.3} across {} bins",
            report.tau_spread,
            report.bins.len()
        ),
    )
}

fn pricing_sanity() -> Outcome {
    let (n, seed, maturity) = (100_000, 11, 20);
    let model = clayton_garch(2.0);
    let spec = |kind| PayoffSpec::new(kind, maturity);
    let mut payoffs = vec![
        spec(PayoffKind::Identity { asset: 0 }),
        spec(PayoffKind::Identity { asset: 1 }),
        spec(PayoffKind::Altiplano {
            thresholds: vec![0.0, 0.0],
            coupon: 1.0,
        }),
    ];
    for k in [0.9, 1.0, 1.1] {
        payoffs.push(spec(PayoffKind::BestOfCall { strike: k }));
        payoffs.push(spec(PayoffKind::BasketCall {
            weights: vec![0.5, 0.5],
            strike: k,
        }));
        payoffs.push(spec(PayoffKind::WorstOfCall { strike: k }));
    }
    let est = price_many(&model, &payoffs, n, seed).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    for e in &est[..2] {
        if (e.value - 1.0).abs() > 4.0 * e.stderr {
            problems.push(format!("identity {:.5} ± {:.5}", e.value, e.stderr));
        }
    }
    if !(est[2].value == 1.0 && est[2].stderr == 0.0) {
        problems.push(format!(
            "constant payoff {} ± {}",
            est[2].value, est[2].stderr
        ));
    }
    for (i, k) in [0.9, 1.0, 1.1].iter().enumerate() {
        let (best, basket, worst) = (
            est[3 + 3 * i].value,
            est[4 + 3 * i].value,
            est[5 + 3 * i].value,
        );
        if !(best >= basket && basket >= worst) {
            problems.push(format!(
                "K={k}: best {best:.5} basket {basket:.5} worst {worst:.5}"
            ));
        }
    }
    let everest = spec(PayoffKind::Everest { notional: 1.0 });
    let mut everest_values = Vec::new();
    for theta in [0.1, 1.0, 5.0] {
        let v = price_many(
            &clayton_garch(theta),
            std::slice::from_ref(&everest),
            n,
            seed,
        )
        .map_err(|e| e.to_string())?;
        everest_values.push(v[0].value);
    }
    if !everest_values.windows(2).all(|w| w[1] > w[0]) {
        problems.push(format!("everest not increasing: {everest_values:?}"));
    }
    ensure(
        problems.is_empty(),
        format!(
            "identity {:.5}/{:.5}, constant {}, ordering holds at K = 0.9, 1.0, 1.1, everest {:.5} < {:.5} < {:.5}{}",
            est[0].value,
            est[1].value,
            est[2].value,
            everest_values[0],
            everest_values[1],
            everest_values[2],
            list(&problems)
        ),
    )
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_in(dir: &Path, workers: &str, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gimp"))
        .args(args)
        .args(["--workers", workers])
        .current_dir(dir)
        .env_remove("GIMP_WORKERS")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let two = configs().join("two_asset.json");
    let clock = configs().join("poisson_clock.json");
    let iid = configs().join("iid_state_dependent.json");
    let (two, clock, iid) = (
        two.to_str().unwrap(),
        clock.to_str().unwrap(),
        iid.to_str().unwrap(),
    );
    let commands: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        (
            "simulate",
            vec![
                "simulate",
                "--config",
                two,
                "--n-paths",
                "5000",
                "--out",
                "paths.csv",
            ],
            vec!["paths.csv", "paths.json"],
        ),
        (
            "simulate clock",
            vec![
                "simulate",
                "--config",
                clock,
                "--n-paths",
                "5000",
                "--out",
                "paths.csv",
            ],
            vec!["paths.csv", "paths.json"],
        ),
        (
            "price",
            vec!["price", "--config", two, "--results-csv", "results.csv"],
            vec!["results.csv"],
        ),
        ("price clock", vec!["price", "--config", clock], vec![]),
        (
            "verify",
            vec!["verify", "all", "--seed", "7", "--json"],
            vec![],
        ),
        (
            "diagnose",
            vec![
                "diagnose",
                "--config",
                iid,
                "--tests",
                "martingale,granger,stability,mixture",
                "--json",
            ],
            vec![],
        ),
    ];
    let mut mismatches = Vec::new();
    for (name, args, files) in &commands {
        let mut outputs = Vec::new();
        for workers in ["1", "8"] {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let mut bytes = run_in(dir.path(), workers, args)?;
            for f in files {
                bytes.extend(
                    std::fs::read(dir.path().join(f)).map_err(|e| format!("{name}: {f}: {e}"))?,
                );
            }
            outputs.push(bytes);
        }
        if outputs[0] != outputs[1] {
            mismatches.push(name.to_string());
        }
    }
    ensure(
        mismatches.is_empty(),
        format!(
            "{} commands byte-identical at 1 and 8 workers{}",
            commands.len(),
            list(&mismatches)
        ),
    )
}

fn copula_correctness() -> Outcome {
    let gauss2 = |r: f64| CopulaSpec::gaussian(&[vec![1.0, r], vec![r, 1.0]]).unwrap();
    let settings: Vec<(&str, CopulaSpec)> = vec![
        ("independence m=2", CopulaSpec::independence(2).unwrap()),
        ("independence m=3", CopulaSpec::independence(3).unwrap()),
        ("gaussian rho=0.5", gauss2(0.5)),
        ("gaussian rho=-0.7", gauss2(-0.7)),
        (
            "gaussian m=3 equi 0.3",
            CopulaSpec::gaussian(&[
                vec![1.0, 0.3, 0.3],
                vec![0.3, 1.0, 0.3],
                vec![0.3, 0.3, 1.0],
            ])
            .unwrap(),
        ),
        (
            "gaussian m=3 mixed",
            CopulaSpec::gaussian(&[
                vec![1.0, 0.6, -0.2],
                vec![0.6, 1.0, 0.1],
                vec![-0.2, 0.1, 1.0],
            ])
            .unwrap(),
        ),
        ("clayton theta=0.5", CopulaSpec::clayton(2, 0.5).unwrap()),
        ("clayton theta=2", CopulaSpec::clayton(2, 2.0).unwrap()),
        ("clayton theta=10", CopulaSpec::clayton(2, 10.0).unwrap()),
        ("clayton m=3 theta=3", CopulaSpec::clayton(3, 3.0).unwrap()),
    ];
    let draws = 20_000;
    let mut failures = Vec::new();
    let mut min_p: f64 = 1.0;
    for (k, (name, spec)) in settings.iter().enumerate() {
        let mut stream = RngStream::sequential(31, Domain::Auxiliary, k as u64);
        let mut pooled = Vec::with_capacity(draws * spec.dim());
        for _ in 0..draws {
            let u = spec.sample(&mut stream);
            let w = spec
                .rosenblatt_forward(&UnitPoint::new(u.into_inner()).unwrap())
                .map_err(|e| e.to_string())?;
            pooled.extend_from_slice(w.coords());
        }
        let (_, p) = ks::uniform_test(&pooled);
        min_p = min_p.min(p);
        if p < 0.01 {
            failures.push(format!("{name}: p = {p:.4}"));
        }
    }
    let clayton = CopulaSpec::clayton(2, 2.0).unwrap();
    let mut stream = RngStream::sequential(32, Domain::Auxiliary, 0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..100_000)
        .map(|_| {
            let u = clayton.sample(&mut stream);
            (u.coords()[0], u.coords()[1])
        })
        .unzip();
    let tau = kendall::tau_b(&xs, &ys);
    if (tau - 0.5).abs() > 0.01 {
        failures.push(format!("clayton tau {tau:.4}"));
    }
    ensure(
        failures.is_empty(),
        format!("10 settings, smallest Rosenblatt KS p-value {min_p:.4}; Clayton(2) tau {tau:.4} vs 0.5{}", list(&failures)),
    )
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            title: "oracle exactness, martingale and Granger",
            budget: Duration::from_secs(60),
            run: oracle_exactness,
        },
        Criterion {
            id: 2,
            title: "oracle exactness, time change",
            budget: Duration::from_secs(120),
            run: timechange_exactness,
        },
        Criterion {
            id: 3,
            title: "martingale normalisation",
            budget: Duration::from_secs(30),
            run: martingale_normalisation,
        },
        Criterion {
            id: 4,
            title: "multivariate martingale",
            budget: Duration::from_secs(600),
            run: multivariate_martingale,
        },
        Criterion {
            id: 5,
            title: "time-changed martingale",
            budget: Duration::from_secs(300),
            run: time_changed_martingale,
        },
        Criterion {
            id: 6,
            title: "time-changed stationary increments",
            budget: Duration::from_secs(300),
            run: stationary_increments,
        },
        Criterion {
            id: 7,
            title: "pricing sanity",
            budget: Duration::from_secs(300),
            run: pricing_sanity,
        },
        Criterion {
            id: 8,
            title: "determinism across worker counts",
            budget: Duration::from_secs(600),
            run: determinism,
        },
        Criterion {
            id: 9,
            title: "copula correctness",
            budget: Duration::from_secs(300),
            run: copula_correctness,
        },
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let over_budget = elapsed > c.budget;
        let (pass, detail) = match outcome {
            Ok(d) if !over_budget => (true, d),
            Ok(d) => (
                false,
                format!("{d}; over the {}s budget", c.budget.as_secs()),
            ),
            Err(d) => (false, d),
        };
        failed += !pass as usize;
        println!(
            "criterion {} [{}] {}: {} ({:.1}s)",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.title,
            detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
