use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gimp_core::diagnostics::{self, StabilityReport, TestReport};
use gimp_core::marginal::Measure;
use gimp_core::pathset::{self, with_workers, PathSet};
use gimp_core::pricing::{price_many, PriceEstimate};
use serde::Serialize;

use crate::config::{Engine, EngineConfig, Overrides};
use crate::{resolve_workers, DiagnosticTest, Failure, RunArgs, ENGINE_VERSION};

struct Prepared {
    config: EngineConfig,
    engine: Engine,
    hash: String,
}

fn prepare(args: &RunArgs) -> Result<Prepared, Failure> {
    let mut config = EngineConfig::load(&args.config)?;
    let workers = resolve_workers(args.workers)?.or(config.run.workers);
    config.apply(&Overrides {
        seed: args.seed,
        horizon: args.horizon,
        n_paths: args.n_paths,
        workers,
        out: args.out.clone(),
    });
    let engine = config
        .engine()
        .map_err(|e| Failure::usage(format!("{}: {e}", args.config.display())))?;
    let hash = config.hash();
    Ok(Prepared {
        config,
        engine,
        hash,
    })
}

fn simulate_paths(p: &Prepared) -> Result<PathSet, Failure> {
    let run = &p.config.run;
    Ok(with_workers(run.workers, || {
        pathset::simulate(p.engine.model(), run.n_paths, run.horizon, run.seed)
    })??)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config_hash: &'a str,
    seed: u64,
    scheme: &'a str,
    engine_version: &'a str,
    n_paths: usize,
    horizon: usize,
    dim: usize,
    measure: String,
    time_changed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<&'a str>,
}

fn sidecar_path(out: &str) -> PathBuf {
    Path::new(out).with_extension("json")
}

pub fn simulate(args: &RunArgs) -> Result<(), Failure> {
    let p = prepare(args)?;
    let paths = simulate_paths(&p)?;
    let out = p.config.run.out.as_deref();
    let sidecar = Sidecar {
        config_hash: &p.hash,
        seed: paths.seed,
        scheme: &paths.scheme,
        engine_version: ENGINE_VERSION,
        n_paths: paths.n_paths,
        horizon: paths.horizon,
        dim: paths.dim,
        measure: p.engine.model().measure().to_string(),
        time_changed: paths.clock.is_some(),
        csv: out,
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes") + "\n";
    match out {
        Some(path) => {
            let mut w = BufWriter::new(std::fs::File::create(path)?);
            paths.write_csv(&mut w)?;
            w.flush()?;
            std::fs::write(sidecar_path(path), &json)?;
            print!("{json}");
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            paths.write_csv(&mut w)?;
            w.flush()?;
            eprint!("{json}");
        }
    }
    Ok(())
}

pub fn price(
    args: &RunArgs,
    selector: Option<&str>,
    results_csv: Option<&str>,
) -> Result<(), Failure> {
    let p = prepare(args)?;
    if p.engine.model().measure() != Measure::Q {
        return Err(Failure::usage("pricing requires Q measure"));
    }
    let payoffs: Vec<_> = match selector {
        Some(name) => {
            let found: Vec<_> = p
                .config
                .payoffs
                .iter()
                .filter(|s| s.label() == name)
                .cloned()
                .collect();
            if found.is_empty() {
                let known: Vec<String> = p.config.payoffs.iter().map(|s| s.label()).collect();
                return Err(Failure::usage(format!(
                    "unknown payoff `{name}`; configured: {}",
                    known.join(", ")
                )));
            }
            found
        }
        None if p.config.payoffs.is_empty() => {
            return Err(Failure::usage("config lists no payoffs"))
        }
        None => p.config.payoffs.clone(),
    };
    let run = &p.config.run;
    let estimates: Vec<PriceEstimate> = with_workers(run.workers, || {
        price_many(p.engine.model(), &payoffs, run.n_paths, run.seed)
    })??
    .into_iter()
    .map(|e| e.with_config_hash(p.hash.clone()))
    .collect();
    let json = if selector.is_some() {
        serde_json::to_string_pretty(&estimates[0])
    } else {
        serde_json::to_string_pretty(&estimates)
    }
    .expect("estimates serialize");
    println!("{json}");
    if let Some(path) = results_csv.or(run.results_csv.as_deref()) {
        append_results(path, &estimates)?;
    }
    Ok(())
}

fn append_results(path: &str, estimates: &[PriceEstimate]) -> Result<(), Failure> {
    let fresh = std::fs::metadata(path)
        .map(|m| m.len() == 0)
        .unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "payoff,value,stderr,ci_low,ci_high,n,seed")?;
    }
    for e in estimates {
        writeln!(
            f,
            "{},{:?},{:?},{:?},{:?},{},{}",
            e.payoff, e.value, e.stderr, e.ci95.0, e.ci95.1, e.n_paths, e.seed
        )?;
    }
    Ok(())
}

#[derive(Serialize, Default)]
struct DiagnosticsOutput {
    config_hash: String,
    seed: u64,
    engine_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    martingale: Option<Vec<TestReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    granger: Option<Vec<TestReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stability: Option<StabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mixture: Option<Vec<TestReport>>,
}

pub fn diagnose(
    args: &RunArgs,
    paths_csv: Option<&Path>,
    tests: &[DiagnosticTest],
    significance: f64,
    lags: usize,
    bins: usize,
) -> Result<(), Failure> {
    let p = prepare(args)?;
    let paths = match paths_csv {
        Some(file) => {
            let f = std::fs::File::open(file)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", file.display())))?;
            PathSet::read_csv(std::io::BufReader::new(f))?
        }
        None => simulate_paths(&p)?,
    };
    let base = p.engine.base();
    let mut out = DiagnosticsOutput {
        config_hash: p.hash.clone(),
        seed: paths.seed,
        engine_version: ENGINE_VERSION,
        ..Default::default()
    };
    let workers = p.config.run.workers;
    for test in tests {
        match test {
            DiagnosticTest::Martingale => {
                out.martingale = Some(with_workers(workers, || {
                    diagnostics::martingale_test_with_rate(&paths, base.rate(), significance)
                })??)
            }
            DiagnosticTest::Granger => {
                out.granger = Some(with_workers(workers, || {
                    diagnostics::granger_test(&paths, lags, significance)
                })??)
            }
            DiagnosticTest::Stability => {
                out.stability = Some(with_workers(workers, || {
                    diagnostics::increment_stability_test(&paths, bins, significance)
                })??)
            }
            DiagnosticTest::Mixture => {
                if diagnostics::stationary_increment_law(base, 0, 1).is_none() {
                    return Err(Failure::usage("the mixture test needs `iid_assets`"));
                }
                let cdf = |j: usize, u: u64, x: f64| {
                    diagnostics::stationary_increment_law(base, j, u)
                        .map_or(f64::NAN, |law| law.cdf(x))
                };
                out.mixture = Some(with_workers(workers, || {
                    diagnostics::mixture_test(&paths, cdf, significance)
                })??)
            }
        }
    }
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&out).expect("reports serialize")
        );
        return Ok(());
    }
    let mut all: Vec<TestReport> = Vec::new();
    for group in [&out.martingale, &out.granger, &out.mixture]
        .into_iter()
        .flatten()
    {
        all.extend(group.iter().cloned());
    }
    if let Some(s) = &out.stability {
        all.extend(s.reports.iter().cloned());
    }
    print!("{}", diagnostics::table(&all));
    if let Some(s) = &out.stability {
        for k in &s.kendall {
            let taus: Vec<String> = k.per_bin.iter().map(|t| format!("{t:.3}")).collect();
            println!(
                "kendall tau {}-{} by bin: [{}], spread {:.3}",
                k.i,
                k.j,
                taus.join(", "),
                k.spread
            );
        }
        for note in &s.notes {
            println!("note: {note}");
        }
    }
    let (rejected, tested) = diagnostics::rejection_count(&all);
    println!(
        "{rejected} of {tested} tests rejected (config {}, seed {})",
        p.hash, paths.seed
    );
    Ok(())
}
