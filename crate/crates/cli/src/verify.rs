use std::path::Path;

use gimp_core::error::GimpError;
use gimp_core::oracle::{self, fixtures, EnumerationReport, LatticeSpec};
use gimp_core::pathset::with_workers;
use serde::Serialize;

use crate::{Failure, Suite, ENGINE_VERSION};

#[derive(Serialize)]
struct Case {
    name: String,
    lattice: LatticeSpec,
    reports: Vec<EnumerationReport>,
}

impl Case {
    fn ok(&self) -> bool {
        self.reports.iter().all(EnumerationReport::ok)
    }

    fn max_required_violation(&self) -> f64 {
        self.reports
            .iter()
            .flat_map(|r| &r.checks)
            .filter(|c| c.required)
            .map(|c| c.max_violation)
            .fold(0.0, f64::max)
    }

    fn summary(&self) -> String {
        format!(
            "{:<28} m={} N={} clock={:<3} max required violation {:.3e}  {}",
            self.name,
            self.lattice.dim(),
            self.lattice.horizon,
            if self.lattice.clock.is_some() {
                "yes"
            } else {
                "no"
            },
            self.max_required_violation(),
            if self.ok() { "pass" } else { "FAIL" }
        )
    }
}

#[derive(Serialize)]
struct VerifyOutput {
    seed: u64,
    engine_version: &'static str,
    cases: Vec<Case>,
    failures: usize,
}

fn fixture_cases(suite: Suite) -> gimp_core::Result<Vec<Case>> {
    let mut named: Vec<(&str, LatticeSpec)> = Vec::new();
    if matches!(suite, Suite::Lattice | Suite::All) {
        named.extend([
            ("two_asset_independent", fixtures::two_asset(0.0)),
            ("two_asset_coupled", fixtures::two_asset(0.6)),
            ("two_asset_comonotone", fixtures::two_asset(1.0)),
            (
                "level_dependent_coupling",
                fixtures::level_dependent_coupling(),
            ),
            ("contaminated", fixtures::contaminated()),
        ]);
    }
    if matches!(suite, Suite::Timechange | Suite::All) {
        named.extend([
            ("iid_with_clock", fixtures::iid_with_clock()),
            (
                "nonstationary_with_clock",
                fixtures::nonstationary_with_clock(),
            ),
            ("coupled_asynchronous", fixtures::coupled_asynchronous()),
        ]);
    }
    named
        .into_iter()
        .map(|(name, lattice)| {
            let reports = oracle::enumerate_all(&lattice, true)?;
            Ok(Case {
                name: name.into(),
                lattice,
                reports,
            })
        })
        .collect()
}

fn random_cases(suite: Suite, seed: u64, count: Option<u64>) -> gimp_core::Result<Vec<Case>> {
    let mut cases = Vec::new();
    if matches!(suite, Suite::Lattice | Suite::All) {
        for (i, (lattice, reports)) in oracle::lattice_suite(seed, count.unwrap_or(100))?
            .into_iter()
            .enumerate()
        {
            cases.push(Case {
                name: format!("random_lattice_{i}"),
                lattice,
                reports,
            });
        }
    }
    if matches!(suite, Suite::Timechange | Suite::All) {
        for (i, (lattice, report)) in oracle::timechange_suite(seed, count.unwrap_or(50))?
            .into_iter()
            .enumerate()
        {
            cases.push(Case {
                name: format!("random_clock_lattice_{i}"),
                lattice,
                reports: vec![report],
            });
        }
    }
    Ok(cases)
}

fn custom_case(path: &Path) -> Result<Case, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read lattice {}: {e}", path.display())))?;
    let lattice: LatticeSpec = serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        let bare = msg.split(" at line ").next().unwrap_or(&msg).to_string();
        Failure::usage(format!(
            "{}:{}:{}: {bare}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    lattice.validate()?;
    // A custom lattice is checked as given, so a broken normalisation shows
    // up as a failed martingale check rather than a refusal.
    let reports = oracle::enumerate_all(&lattice, false).map_err(|e| match e {
        GimpError::Resource(m) => Failure::usage(format!("lattice too large to enumerate: {m}")),
        other => other.into(),
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Case {
        name,
        lattice,
        reports,
    })
}

pub fn verify(
    suite: Suite,
    seed: u64,
    lattice: Option<&Path>,
    count: Option<u64>,
    workers: Option<usize>,
    json: bool,
) -> Result<(), Failure> {
    let cases = match lattice {
        Some(path) => vec![custom_case(path)?],
        None => with_workers(workers, || -> gimp_core::Result<Vec<Case>> {
            let mut cases = fixture_cases(suite)?;
            cases.extend(random_cases(suite, seed, count)?);
            Ok(cases)
        })??,
    };
    let failures = cases.iter().filter(|c| !c.ok()).count();
    if json {
        let out = VerifyOutput {
            seed,
            engine_version: ENGINE_VERSION,
            cases,
            failures,
        };
        println!(
            "{}",
            serde_json::to_string_pretty(&out).expect("reports serialize")
        );
    } else {
        for case in &cases {
            let detailed = lattice.is_some() || !case.name.starts_with("random_") || !case.ok();
            if detailed {
                println!("== {}", case.name);
                for r in &case.reports {
                    print!("{}", r.table());
                }
            } else {
                println!("{}", case.summary());
            }
        }
        println!(
            "{} lattices checked, {failures} failed (seed {seed})",
            cases.len()
        );
    }
    if failures > 0 {
        return Err(Failure::runtime(format!(
            "{failures} lattice(s) violate a required property"
        )));
    }
    Ok(())
}
