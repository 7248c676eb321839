//! Multidimensional integer clocks and the time change `X_T`.
//!
//! A clock starts at `T_0 = 0` and adds a vector of nonnegative integer
//! increments at each external step. Increments have Poisson, geometric or
//! deterministic marginals, coupled across components by pushing a copula
//! point through the discrete inverse CDFs. Clock draws use the `Clock`
//! substream domain, so a clock is independent of the base process.

use crate::copula::CopulaSpec;
use crate::error::{GimpError, Result};
use crate::pathset::{self, PathBuffer, PathModel, PathSet};
use crate::process::GimpModel;
use crate::rng::{Domain, RngStream};

/// Default bound on the internal time a clock may reach.
pub const DEFAULT_INTERNAL_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum ClockFamily {
    /// Poisson(λ_j) increments.
    Poisson(Vec<f64>),
    /// Geometric(p_j) increments on {0, 1, 2, …}: P(k) = p (1 − p)^k.
    Geometric(Vec<f64>),
    /// Constant increments k_j.
    Deterministic(Vec<u64>),
}

impl ClockFamily {
    pub fn dim(&self) -> usize {
        match self {
            ClockFamily::Poisson(v) | ClockFamily::Geometric(v) => v.len(),
            ClockFamily::Deterministic(v) => v.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClockFamily::Poisson(_) => "poisson",
            ClockFamily::Geometric(_) => "geometric",
            ClockFamily::Deterministic(_) => "deterministic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClockSpec {
    family: ClockFamily,
    coupling: CopulaSpec,
    state_dependent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClockState {
    pub s: u64,
    pub t_values: Vec<u64>,
}

impl ClockState {
    pub fn zero(dim: usize) -> Self {
        Self {
            s: 0,
            t_values: vec![0; dim],
        }
    }
}

impl ClockSpec {
    /// A clock whose components are coupled by `coupling`. With
    /// `state_dependent` the coupling parameter follows the copula's state map
    /// applied to the clock spread `max_j T^j − min_j T^j`.
    pub fn new(family: ClockFamily, coupling: CopulaSpec, state_dependent: bool) -> Result<Self> {
        match &family {
            ClockFamily::Poisson(l) => {
                if let Some(bad) = l
                    .iter()
                    .find(|x| !(**x > 0.0 && x.is_finite() && **x <= 1e6))
                {
                    return Err(GimpError::config(format!(
                        "Poisson rate must be in (0, 1e6], got {bad}"
                    )));
                }
            }
            ClockFamily::Geometric(p) => {
                if let Some(bad) = p.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
                    return Err(GimpError::config(format!(
                        "geometric p must be in (0, 1], got {bad}"
                    )));
                }
            }
            ClockFamily::Deterministic(_) => {}
        }
        if family.dim() == 0 {
            return Err(GimpError::config("a clock needs at least one component"));
        }
        if coupling.dim() != family.dim() {
            return Err(GimpError::config(format!(
                "clock coupling has dimension {} but the clock has {} components",
                coupling.dim(),
                family.dim()
            )));
        }
        if state_dependent && !coupling.is_state_dependent() {
            return Err(GimpError::config(
                "a state-dependent clock needs a coupling with a non-constant state_map",
            ));
        }
        if !state_dependent && coupling.is_state_dependent() {
            return Err(GimpError::config(
                "clock coupling has a state_map but state_dependent is false",
            ));
        }
        Ok(Self {
            family,
            coupling,
            state_dependent,
        })
    }

    /// Independent components.
    pub fn independent(family: ClockFamily) -> Result<Self> {
        let coupling = CopulaSpec::independence(family.dim())?;
        Self::new(family, coupling, false)
    }

    pub fn deterministic(k: Vec<u64>) -> Result<Self> {
        Self::independent(ClockFamily::Deterministic(k))
    }

    pub fn poisson(lambda: Vec<f64>) -> Result<Self> {
        Self::independent(ClockFamily::Poisson(lambda))
    }

    pub fn geometric(p: Vec<f64>) -> Result<Self> {
        Self::independent(ClockFamily::Geometric(p))
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn family(&self) -> &ClockFamily {
        &self.family
    }

    pub fn coupling(&self) -> &CopulaSpec {
        &self.coupling
    }

    pub fn is_state_dependent(&self) -> bool {
        self.state_dependent
    }

    /// P(ΔT^j ≤ k).
    pub fn increment_cdf(&self, j: usize, k: u64) -> f64 {
        match &self.family {
            ClockFamily::Poisson(l) => poisson_cdf(l[j], k),
            ClockFamily::Geometric(p) => 1.0 - (1.0 - p[j]).powf(k as f64 + 1.0),
            ClockFamily::Deterministic(d) => (k >= d[j]) as u8 as f64,
        }
    }

    /// P(ΔT^j = k).
    pub fn increment_pmf(&self, j: usize, k: u64) -> f64 {
        match &self.family {
            ClockFamily::Poisson(l) => (k as f64 * l[j].ln() - l[j] - ln_factorial(k)).exp(),
            ClockFamily::Geometric(p) => p[j] * (1.0 - p[j]).powf(k as f64),
            ClockFamily::Deterministic(d) => (k == d[j]) as u8 as f64,
        }
    }

    /// E[ΔT^j].
    pub fn mean_increment(&self, j: usize) -> f64 {
        match &self.family {
            ClockFamily::Poisson(l) => l[j],
            ClockFamily::Geometric(p) => (1.0 - p[j]) / p[j],
            ClockFamily::Deterministic(d) => d[j] as f64,
        }
    }

    /// Smallest k with P(ΔT^j ≤ k) ≥ u.
    pub fn increment_quantile(&self, j: usize, u: f64) -> u64 {
        match &self.family {
            ClockFamily::Poisson(l) => poisson_quantile(l[j], u),
            ClockFamily::Geometric(p) => {
                if p[j] >= 1.0 {
                    return 0;
                }
                let r = (-u).ln_1p() / (-p[j]).ln_1p();
                let mut k = (r.ceil() - 1.0).max(0.0) as u64;
                while k > 0 && self.increment_cdf(j, k - 1) >= u {
                    k -= 1;
                }
                while self.increment_cdf(j, k) < u {
                    k += 1;
                }
                k
            }
            ClockFamily::Deterministic(d) => d[j],
        }
    }

    /// Advance the clock by one external step.
    pub fn step(&self, state: &ClockState, stream: &mut RngStream) -> ClockState {
        let mut next = state.clone();
        let mut u = vec![0.0; self.dim()];
        self.step_in_place(&mut next, stream, &mut u);
        next
    }

    pub(crate) fn step_in_place(
        &self,
        state: &mut ClockState,
        stream: &mut RngStream,
        u: &mut [f64],
    ) {
        if let ClockFamily::Deterministic(d) = &self.family {
            for (t, k) in state.t_values.iter_mut().zip(d) {
                *t += k;
            }
        } else {
            if self.state_dependent {
                let lo = state.t_values.iter().min().copied().unwrap_or(0);
                let hi = state.t_values.iter().max().copied().unwrap_or(0);
                self.coupling
                    .resolve_state_param((hi - lo) as f64)
                    .sample_into(stream, u);
            } else {
                self.coupling.sample_into(stream, u);
            }
            for (j, t) in state.t_values.iter_mut().enumerate() {
                *t += self.increment_quantile(j, u[j]);
            }
        }
        state.s += 1;
    }

    /// Clock trajectory of `path` on external times `0..=horizon`, row-major.
    pub fn trajectory(&self, seed: u64, path: u64, horizon: usize, out: &mut Vec<u64>) {
        let m = self.dim();
        out.clear();
        out.resize((horizon + 1) * m, 0);
        let mut state = ClockState::zero(m);
        let mut u = vec![0.0; m];
        for s in 0..horizon {
            let mut stream = RngStream::at(seed, Domain::Clock, path, s as u64);
            self.step_in_place(&mut state, &mut stream, &mut u);
            out[(s + 1) * m..(s + 2) * m].copy_from_slice(&state.t_values);
        }
    }
}

/// One step of [`ClockSpec::step`].
pub fn clock_step(spec: &ClockSpec, state: &ClockState, stream: &mut RngStream) -> ClockState {
    spec.step(state, stream)
}

fn ln_factorial(k: u64) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

fn poisson_cdf(lambda: f64, k: u64) -> f64 {
    let mut term = (-lambda).exp();
    let mut sum = term;
    for i in 1..=k {
        term *= lambda / i as f64;
        sum += term;
    }
    sum.min(1.0)
}

/// Inverse CDF by upward search from the mode region; exact for the rates a
/// clock uses (the search starts below the mean so the tail sum stays
/// accurate).
fn poisson_quantile(lambda: f64, u: f64) -> u64 {
    if lambda > 50.0 {
        // Start near the quantile of the normal approximation and correct.
        let guess = lambda + lambda.sqrt() * crate::stats::normal::quantile(u);
        let mut k = guess.max(0.0).floor() as u64;
        while k > 0 && poisson_cdf_stable(lambda, k - 1) >= u {
            k -= 1;
        }
        while poisson_cdf_stable(lambda, k) < u {
            k += 1;
        }
        return k;
    }
    let mut term = (-lambda).exp();
    let mut sum = term;
    let mut k = 0u64;
    while sum < u && k < 10_000 {
        k += 1;
        term *= lambda / k as f64;
        if term == 0.0 && sum < u {
            break;
        }
        sum += term;
    }
    k
}

fn poisson_cdf_stable(lambda: f64, k: u64) -> f64 {
    (0..=k)
        .map(|i| (i as f64 * lambda.ln() - lambda - ln_factorial(i)).exp())
        .sum::<f64>()
        .min(1.0)
}

/// External path `[p][s][j] = base[p][T^j_s][j]` for an already simulated
/// base; clock draws use substream domain `Clock`.
pub fn time_change(
    base: &PathSet,
    clock: &ClockSpec,
    horizon: usize,
    seed: u64,
) -> Result<PathSet> {
    if clock.dim() != base.dim {
        return Err(GimpError::input(format!(
            "clock has {} components but the base has {} assets",
            clock.dim(),
            base.dim
        )));
    }
    let m = base.dim;
    let mut out = PathSet {
        n_paths: base.n_paths,
        horizon,
        dim: m,
        log_prices: Vec::with_capacity(base.n_paths * (horizon + 1) * m),
        variances: base.variances.as_ref().map(|_| Vec::new()),
        clock: Some(Vec::with_capacity(base.n_paths * (horizon + 1) * m)),
        seed,
        scheme: base.scheme.clone(),
    };
    let mut traj = Vec::new();
    for p in 0..base.n_paths {
        clock.trajectory(seed, p as u64, horizon, &mut traj);
        if let Some(&t) = traj.iter().find(|&&t| t as usize > base.horizon) {
            return Err(GimpError::resource(format!(
                "path {p}: clock reaches internal time {t} beyond the base horizon {}",
                base.horizon
            )));
        }
        for (idx, &t) in traj.iter().enumerate() {
            let j = idx % m;
            out.log_prices.push(base.log_price(p, t as usize, j));
            if let Some(v) = out.variances.as_mut() {
                v.push(base.variance(p, t as usize, j).unwrap_or_default());
            }
        }
        out.clock
            .as_mut()
            .expect("clock column")
            .extend_from_slice(&traj);
    }
    Ok(out)
}

/// A GIMP observed through an independent clock. The base is extended lazily
/// per path up to the largest clock value that path needs.
#[derive(Debug, Clone)]
pub struct TimeChangedModel {
    base: GimpModel,
    clock: ClockSpec,
    cap: u64,
}

impl TimeChangedModel {
    pub fn new(base: GimpModel, clock: ClockSpec) -> Result<Self> {
        if clock.dim() != base.dim() {
            return Err(GimpError::config(format!(
                "clock has {} components but the model has {} assets",
                clock.dim(),
                base.dim()
            )));
        }
        if base.rate() != 0.0 {
            return Err(GimpError::config(
                "a nonzero rate is not supported together with a clock",
            ));
        }
        Ok(Self {
            base,
            clock,
            cap: DEFAULT_INTERNAL_CAP,
        })
    }

    pub fn with_internal_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn base(&self) -> &GimpModel {
        &self.base
    }

    pub fn clock(&self) -> &ClockSpec {
        &self.clock
    }

    pub fn simulate(&self, n_paths: usize, horizon: usize, seed: u64) -> Result<PathSet> {
        pathset::simulate(self, n_paths, horizon, seed)
    }
}

impl PathModel for TimeChangedModel {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn initial_log_prices(&self) -> Vec<f64> {
        self.base.initial_log_prices()
    }

    fn records_variance(&self) -> bool {
        true
    }

    fn records_clock(&self) -> bool {
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
        let mut traj = Vec::new();
        self.clock.trajectory(seed, path, horizon, &mut traj);
        let needed = traj.iter().copied().max().unwrap_or(0);
        if needed > self.cap {
            return Err(GimpError::resource(format!(
                "path {path}: clock reaches internal time {needed}, above the cap {}",
                self.cap
            )));
        }
        let internal = needed as usize;
        let mut base = PathBuffer::default();
        base.reset(internal, m, true, false);
        self.base.simulate_path(seed, path, internal, &mut base)?;
        for (idx, &t) in traj.iter().enumerate() {
            let j = idx % m;
            out.log_prices[idx] = base.log_prices[t as usize * m + j];
            out.variances[idx] = base.variances[t as usize * m + j];
        }
        out.clock.copy_from_slice(&traj);
        Ok(())
    }
}
