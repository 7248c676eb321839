//! The multivariate process: per-asset conditional laws coupled through a
//! (possibly state-dependent) conditional copula.
//!
//! At each step the copula parameter is resolved from a scalar state
//! feature, a copula point `U` is drawn, and asset `j` maps `U_j` through its
//! own conditional quantile. Only the coupling ever reads the joint state; the
//! marginal law of asset `j` depends on asset `j`'s state alone.

use crate::copula::{CopulaSpec, UnitPoint};
use crate::error::{GimpError, Result};
use crate::marginal::{self, conditional_law, GarchParams, MarginalState, Measure, NormalLaw};
use crate::pathset::{self, PathBuffer, PathModel, PathSet};
use crate::rng::{Domain, RngStream};

/// A GARCH asset: dynamics and initial price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchAsset {
    pub params: GarchParams,
    pub s0: f64,
}

/// An asset with i.i.d. N(−σ²/2, σ²) log-increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IidMarginal {
    pub sigma: f64,
    pub s0: f64,
}

impl IidMarginal {
    pub fn new(sigma: f64, s0: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(GimpError::config(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        check_s0(s0)?;
        Ok(Self { sigma, s0 })
    }
}

fn check_s0(s0: f64) -> Result<()> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(GimpError::config(format!("s0 must be positive, got {s0}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Assets {
    Garch(Vec<GarchAsset>),
    IidStationary(Vec<IidMarginal>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncrementMode {
    Garch,
    IidStationary,
}

/// Markov state of the multivariate process.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessState {
    pub t: u64,
    pub assets: Vec<MarginalState>,
}

impl ProcessState {
    pub fn log_prices(&self) -> Vec<f64> {
        self.assets.iter().map(|a| a.x).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GimpModel {
    assets: Assets,
    copula: CopulaSpec,
    measure: Measure,
    rate: f64,
    log_s0: Vec<f64>,
}

impl GimpModel {
    pub fn new(assets: Assets, copula: CopulaSpec) -> Result<Self> {
        let log_s0: Vec<f64> = match &assets {
            Assets::Garch(a) => {
                for asset in a {
                    check_s0(asset.s0)?;
                }
                a.iter().map(|x| x.s0.ln()).collect()
            }
            Assets::IidStationary(a) => {
                for asset in a {
                    IidMarginal::new(asset.sigma, asset.s0)?;
                }
                a.iter().map(|x| x.s0.ln()).collect()
            }
        };
        if log_s0.len() < 2 {
            return Err(GimpError::config(format!(
                "a model needs at least 2 assets, got {}",
                log_s0.len()
            )));
        }
        if copula.dim() != log_s0.len() {
            return Err(GimpError::config(format!(
                "copula dimension {} does not match {} assets",
                copula.dim(),
                log_s0.len()
            )));
        }
        Ok(Self {
            assets,
            copula,
            measure: Measure::Q,
            rate: 0.0,
            log_s0,
        })
    }

    pub fn garch(assets: Vec<GarchAsset>, copula: CopulaSpec) -> Result<Self> {
        Self::new(Assets::Garch(assets), copula)
    }

    pub fn iid(assets: Vec<IidMarginal>, copula: CopulaSpec) -> Result<Self> {
        Self::new(Assets::IidStationary(assets), copula)
    }

    /// Simulate under P instead of Q (diagnostics only; pricing refuses it).
    pub fn with_measure(mut self, measure: Measure) -> Self {
        self.measure = measure;
        self
    }

    /// Constant per-step risk-free rate added to the Q drift.
    pub fn with_rate(mut self, rate: f64) -> Result<Self> {
        if !rate.is_finite() {
            return Err(GimpError::config("rate must be finite"));
        }
        self.rate = rate;
        Ok(self)
    }

    pub fn assets(&self) -> &Assets {
        &self.assets
    }

    pub fn copula(&self) -> &CopulaSpec {
        &self.copula
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn increment_mode(&self) -> IncrementMode {
        match self.assets {
            Assets::Garch(_) => IncrementMode::Garch,
            Assets::IidStationary(_) => IncrementMode::IidStationary,
        }
    }

    pub fn s0(&self) -> Vec<f64> {
        self.log_s0.iter().map(|x| x.exp()).collect()
    }

    pub fn initial_state(&self) -> ProcessState {
        let assets = match &self.assets {
            Assets::Garch(a) => a
                .iter()
                .zip(&self.log_s0)
                .map(|(g, &x)| g.params.initial_state(x))
                .collect(),
            Assets::IidStationary(a) => a
                .iter()
                .zip(&self.log_s0)
                .map(|(m, &x)| MarginalState {
                    x,
                    h2: m.sigma * m.sigma,
                    y_prev: 0.0,
                })
                .collect(),
        };
        ProcessState { t: 0, assets }
    }

    /// Scalar feature driving a state-dependent copula.
    ///
    /// Garch mode: mean of the current conditional variances. IidStationary
    /// mode: spread of the log-moneyness levels, max_j − min_j of
    /// `X^j_t − X^j_0`.
    pub fn state_feature(&self, state: &ProcessState) -> f64 {
        match self.assets {
            Assets::Garch(_) => {
                state.assets.iter().map(|a| a.h2).sum::<f64>() / state.assets.len() as f64
            }
            Assets::IidStationary(_) => {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for (a, x0) in state.assets.iter().zip(&self.log_s0) {
                    let m = a.x - x0;
                    lo = lo.min(m);
                    hi = hi.max(m);
                }
                hi - lo
            }
        }
    }

    /// Conditional law of asset `j`'s next increment given its own state.
    pub fn asset_law(&self, j: usize, state: &MarginalState) -> NormalLaw {
        match &self.assets {
            Assets::Garch(a) => conditional_law(self.measure, &a[j].params, state, self.rate),
            Assets::IidStationary(_) => match self.measure {
                Measure::Q => NormalLaw::risk_neutral(state.h2, self.rate),
                Measure::P => NormalLaw::risk_neutral(state.h2, 0.0),
            },
        }
    }

    fn advance_asset(&self, j: usize, state: &MarginalState, y: f64) -> MarginalState {
        match &self.assets {
            Assets::Garch(a) => marginal::advance(&a[j].params, state, y),
            Assets::IidStationary(_) => MarginalState {
                x: state.x + y,
                h2: state.h2,
                y_prev: y,
            },
        }
    }

    /// Copula in force at `state`.
    pub fn coupling_at(&self, state: &ProcessState) -> std::borrow::Cow<'_, CopulaSpec> {
        if self.copula.is_state_dependent() {
            std::borrow::Cow::Owned(self.copula.resolve_state_param(self.state_feature(state)))
        } else {
            std::borrow::Cow::Borrowed(&self.copula)
        }
    }

    /// Step with a given copula point; returns the new state and `Y_t`.
    pub fn step_with_uniforms(
        &self,
        state: &ProcessState,
        u: &UnitPoint,
    ) -> Result<(ProcessState, Vec<f64>)> {
        let m = self.dim();
        if u.dim() != m || state.assets.len() != m {
            return Err(GimpError::input(format!(
                "expected {m} coordinates and asset states, got {} and {}",
                u.dim(),
                state.assets.len()
            )));
        }
        let mut next = state.clone();
        let mut y = vec![0.0; m];
        self.apply_uniforms(&mut next, u.coords(), &mut y)?;
        Ok((next, y))
    }

    /// One step driven by `stream`.
    pub fn step(
        &self,
        state: &ProcessState,
        stream: &mut RngStream,
    ) -> Result<(ProcessState, Vec<f64>)> {
        let mut u = vec![0.0; self.dim()];
        self.coupling_at(state).sample_into(stream, &mut u);
        self.step_with_uniforms(state, &UnitPoint::new(u)?)
    }

    fn apply_uniforms(&self, state: &mut ProcessState, u: &[f64], y: &mut [f64]) -> Result<()> {
        for (j, (s, &uj)) in state.assets.iter_mut().zip(u).enumerate() {
            let law = self.asset_law(j, s);
            let yj = law.quantile(uj);
            if !yj.is_finite() {
                return Err(GimpError::computation(format!(
                    "increment of asset {j} is not finite at t={} (u={uj})",
                    state.t
                )));
            }
            y[j] = yj;
            *s = self.advance_asset(j, s, yj);
        }
        state.t += 1;
        Ok(())
    }

    /// In-place step used by the simulation loops.
    pub(crate) fn advance_in_place(
        &self,
        state: &mut ProcessState,
        stream: &mut RngStream,
        u: &mut [f64],
        y: &mut [f64],
    ) -> Result<()> {
        if self.copula.is_state_dependent() {
            self.copula
                .resolve_state_param(self.state_feature(state))
                .sample_into(stream, u);
        } else {
            self.copula.sample_into(stream, u);
        }
        self.apply_uniforms(state, u, y)
    }

    /// Simulate `n_paths` paths; path `p` at step `t` draws from substream
    /// `(seed, Base, p, t)`.
    pub fn simulate(&self, n_paths: usize, horizon: usize, seed: u64) -> Result<PathSet> {
        pathset::simulate(self, n_paths, horizon, seed)
    }
}

impl PathModel for GimpModel {
    fn dim(&self) -> usize {
        self.log_s0.len()
    }

    fn initial_log_prices(&self) -> Vec<f64> {
        self.log_s0.clone()
    }

    fn records_variance(&self) -> bool {
        true
    }

    fn simulate_path(
        &self,
        seed: u64,
        path: u64,
        horizon: usize,
        out: &mut PathBuffer,
    ) -> Result<()> {
        let m = self.dim();
        let mut state = self.initial_state();
        let mut u = vec![0.0; m];
        let mut y = vec![0.0; m];
        record(&state, 0, m, out);
        for t in 0..horizon {
            let mut stream = RngStream::at(seed, Domain::Base, path, t as u64);
            self.advance_in_place(&mut state, &mut stream, &mut u, &mut y)?;
            record(&state, t + 1, m, out);
        }
        Ok(())
    }
}

/// Store `state` as row `t` of `out`.
pub(crate) fn record(state: &ProcessState, t: usize, m: usize, out: &mut PathBuffer) {
    for (j, a) in state.assets.iter().enumerate() {
        out.log_prices[t * m + j] = a.x;
        if !out.variances.is_empty() {
            out.variances[t * m + j] = a.h2;
        }
    }
}
