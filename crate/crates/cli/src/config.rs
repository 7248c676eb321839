//! Engine configuration file: schema, validation and canonical hashing.

use std::path::Path;

use gimp_core::clock::{ClockFamily, ClockSpec, TimeChangedModel};
use gimp_core::copula::{CopulaSpec, StateMap};
use gimp_core::error::GimpError;
use gimp_core::marginal::{GarchParams, InitialVariance, Measure};
use gimp_core::pricing::{PayoffSpec, PricingModel};
use gimp_core::process::{GarchAsset, GimpModel, IidMarginal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default)]
    pub measure: MeasureName,
    #[serde(default)]
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assets: Vec<GarchBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iid_assets: Vec<IidBlock>,
    pub copula: CopulaBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<ClockBlock>,
    #[serde(default)]
    pub payoffs: Vec<PayoffSpec>,
    pub run: RunBlock,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub enum MeasureName {
    #[default]
    Q,
    P,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarchBlock {
    pub omega0: f64,
    pub omega1: f64,
    pub omega2: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub h2_init: H2Init,
    pub s0: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawH2", into = "RawH2")]
pub enum H2Init {
    #[default]
    Stationary,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawH2 {
    Word(String),
    Value(f64),
}

impl TryFrom<RawH2> for H2Init {
    type Error = String;

    fn try_from(raw: RawH2) -> Result<Self, String> {
        match raw {
            RawH2::Word(w) if w == "stationary" => Ok(H2Init::Stationary),
            RawH2::Word(w) => Err(format!(
                "h2_init must be \"stationary\" or a number, got \"{w}\""
            )),
            RawH2::Value(v) => Ok(H2Init::Value(v)),
        }
    }
}

impl From<H2Init> for RawH2 {
    fn from(h: H2Init) -> Self {
        match h {
            H2Init::Stationary => RawH2::Word("stationary".into()),
            H2Init::Value(v) => RawH2::Value(v),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IidBlock {
    pub sigma: f64,
    pub s0: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateMapBlock {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum CopulaBlock {
    Independence,
    Comonotone,
    Gaussian {
        corr: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        state_map: Option<StateMapBlock>,
    },
    Clayton {
        theta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        state_map: Option<StateMapBlock>,
    },
}

impl CopulaBlock {
    fn build(&self, dim: usize) -> gimp_core::Result<CopulaSpec> {
        let (spec, map) = match self {
            CopulaBlock::Independence => (CopulaSpec::independence(dim)?, None),
            CopulaBlock::Comonotone => (CopulaSpec::comonotone(dim)?, None),
            CopulaBlock::Gaussian { corr, state_map } => {
                if corr.len() != dim {
                    return Err(GimpError::config(format!(
                        "gaussian copula is {}-dimensional but there are {dim} assets",
                        corr.len()
                    )));
                }
                (CopulaSpec::gaussian(corr)?, *state_map)
            }
            CopulaBlock::Clayton { theta, state_map } => {
                (CopulaSpec::clayton(dim, *theta)?, *state_map)
            }
        };
        match map {
            Some(m) => spec.with_state_map(StateMap { a: m.a, b: m.b }),
            None => Ok(spec),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClockBlock {
    Poisson {
        lambda: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coupling: Option<CopulaBlock>,
        #[serde(default)]
        state_dependent: bool,
    },
    Geometric {
        p: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coupling: Option<CopulaBlock>,
        #[serde(default)]
        state_dependent: bool,
    },
    Deterministic {
        k: Vec<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coupling: Option<CopulaBlock>,
        #[serde(default)]
        state_dependent: bool,
    },
}

impl ClockBlock {
    fn build(&self) -> gimp_core::Result<ClockSpec> {
        let (family, coupling, state_dependent) = match self {
            ClockBlock::Poisson {
                lambda,
                coupling,
                state_dependent,
            } => (
                ClockFamily::Poisson(lambda.clone()),
                coupling,
                *state_dependent,
            ),
            ClockBlock::Geometric {
                p,
                coupling,
                state_dependent,
            } => (
                ClockFamily::Geometric(p.clone()),
                coupling,
                *state_dependent,
            ),
            ClockBlock::Deterministic {
                k,
                coupling,
                state_dependent,
            } => (
                ClockFamily::Deterministic(k.clone()),
                coupling,
                *state_dependent,
            ),
        };
        let dim = family.dim();
        let coupling = coupling
            .as_ref()
            .unwrap_or(&CopulaBlock::Independence)
            .build(dim)?;
        ClockSpec::new(family, coupling, state_dependent)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub n_paths: usize,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results_csv: Option<String>,
}

/// Command-line values that take precedence over the run block.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub n_paths: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<String>,
}

/// A model ready to simulate and price, with or without a clock.
pub enum Engine {
    Plain(GimpModel),
    Clocked(TimeChangedModel),
}

impl Engine {
    pub fn model(&self) -> &dyn PricingModel {
        match self {
            Engine::Plain(m) => m,
            Engine::Clocked(m) => m,
        }
    }

    pub fn base(&self) -> &GimpModel {
        match self {
            Engine::Plain(m) => m,
            Engine::Clocked(m) => m.base(),
        }
    }
}

impl EngineConfig {
    /// Read and parse a config file. Parse errors carry line and column.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Failure::usage(format!("{}:{e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let bare = msg.split(" at line ").next().unwrap_or(&msg).to_string();
            format!("{}:{}: {bare}", e.line(), e.column())
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(h) = o.horizon {
            self.run.horizon = h;
        }
        if let Some(n) = o.n_paths {
            self.run.n_paths = n;
        }
        if o.workers.is_some() {
            self.run.workers = o.workers;
        }
        if o.out.is_some() {
            self.run.out = o.out.clone();
        }
    }

    pub fn measure(&self) -> Measure {
        match self.measure {
            MeasureName::Q => Measure::Q,
            MeasureName::P => Measure::P,
        }
    }

    /// Build the model, checking every semantic constraint.
    pub fn engine(&self) -> gimp_core::Result<Engine> {
        let base = match (self.assets.is_empty(), self.iid_assets.is_empty()) {
            (false, true) => {
                let assets = self
                    .assets
                    .iter()
                    .enumerate()
                    .map(|(j, a)| {
                        let h2 = match a.h2_init {
                            H2Init::Stationary => InitialVariance::Stationary,
                            H2Init::Value(v) => InitialVariance::Value(v),
                        };
                        let params = GarchParams::new(a.omega0, a.omega1, a.omega2, a.mu, h2)
                            .map_err(|e| GimpError::config(format!("assets[{j}]: {}", bare(&e))))?;
                        if !(a.s0 > 0.0 && a.s0.is_finite()) {
                            return Err(GimpError::config(format!(
                                "assets[{j}]: s0 must be positive, got {}",
                                a.s0
                            )));
                        }
                        Ok(GarchAsset { params, s0: a.s0 })
                    })
                    .collect::<gimp_core::Result<Vec<_>>>()?;
                GimpModel::garch(assets, self.copula.build(self.assets.len())?)?
            }
            (true, false) => {
                let assets = self
                    .iid_assets
                    .iter()
                    .enumerate()
                    .map(|(j, a)| {
                        IidMarginal::new(a.sigma, a.s0).map_err(|e| {
                            GimpError::config(format!("iid_assets[{j}]: {}", bare(&e)))
                        })
                    })
                    .collect::<gimp_core::Result<Vec<_>>>()?;
                GimpModel::iid(assets, self.copula.build(self.iid_assets.len())?)?
            }
            (true, true) => {
                return Err(GimpError::config(
                    "config needs either `assets` or `iid_assets`",
                ))
            }
            (false, false) => {
                return Err(GimpError::config(
                    "`assets` and `iid_assets` cannot both be given",
                ))
            }
        };
        let base = base.with_measure(self.measure()).with_rate(self.rate)?;
        for p in &self.payoffs {
            p.validate()?;
        }
        match &self.clock {
            None => Ok(Engine::Plain(base)),
            Some(c) => Ok(Engine::Clocked(TimeChangedModel::new(base, c.build()?)?)),
        }
    }

    /// 64-bit hash of the canonical serialization, ignoring the worker
    /// count and output locations.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.run.workers = None;
        canonical.run.out = None;
        canonical.run.results_csv = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn bare(e: &GimpError) -> String {
    match e {
        GimpError::Input(m)
        | GimpError::Config(m)
        | GimpError::Computation(m)
        | GimpError::Resource(m) => m.clone(),
    }
}
