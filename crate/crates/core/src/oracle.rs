//! Exact verification on a discrete analogue of the process.
//!
//! Each asset moves by one of two log-returns per step, the joint law of the
//! moves is a 2^m table built from the marginals and a dependence parameter
//! κ, and an optional clock adds increments in {0, 1, 2}. Every conditional
//! law is computed by exhaustive enumeration of the histories.
//!
//! Levels are tracked as exact move counts per asset, so two histories are
//! identified exactly when they are the same event.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GimpError, Result};
use crate::pathset::{PathBuffer, PathModel};
use crate::rng::{Domain, RngStream};

/// Largest violation still counted as exact.
pub const TOLERANCE: f64 = 1e-12;
pub const MAX_HORIZON: usize = 5;
pub const MAX_ASSETS: usize = 3;
/// Guard on (base path, clock path) atoms in a time-change enumeration.
pub const ATOM_LIMIT: u64 = 10_000_000;
/// Atom budget for randomly generated clock lattices.
const RANDOM_ATOM_BUDGET: u64 = 1_000_000;
/// Values closer than this are the same point of a distribution.
const TIE: f64 = 1e-12;

/// Two-point law: `up` with probability `p`, else `down`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPoint {
    pub up: f64,
    pub down: f64,
    pub p: f64,
}

impl TwoPoint {
    /// The law with `p·e^up + (1 − p)·e^down = 1`.
    pub fn martingale(up: f64, down: f64) -> Result<Self> {
        if !(up > 0.0 && down < 0.0 && up.is_finite() && down.is_finite()) {
            return Err(GimpError::config(format!(
                "a martingale two-point law needs up > 0 > down, got {up}, {down}"
            )));
        }
        Ok(Self {
            up,
            down,
            p: -down.exp_m1() / (up.exp() - down.exp()),
        })
    }

    /// E[e^ΔX].
    pub fn exp_mean(&self) -> f64 {
        self.p * self.up.exp() + (1.0 - self.p) * self.down.exp()
    }
}

/// Law switch: asset uses `law` instead of its base law while the driver's
/// log-level is above its start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Switch {
    pub driver: usize,
    pub law: TwoPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalRule {
    pub law: TwoPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch: Option<Switch>,
}

impl MarginalRule {
    pub fn fixed(law: TwoPoint) -> Self {
        Self { law, switch: None }
    }
}

/// Dependence parameter κ ∈ [−1, 1], scaled to the Fréchet bounds: 0 is
/// independence, 1 the upper bound, −1 the lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coupling {
    Constant {
        kappa: f64,
    },
    /// κ = clamp(base + slope·(X¹ − X²)).
    LevelDependent {
        base: f64,
        slope: f64,
    },
}

impl Coupling {
    fn is_independence(&self) -> bool {
        match *self {
            Coupling::Constant { kappa } => kappa == 0.0,
            Coupling::LevelDependent { base, slope } => base == 0.0 && slope == 0.0,
        }
    }
}

/// Joint law of the clock increments over {0, 1, 2}^m. A table has 3^m
/// entries; cell index Σ_j d_j·3^j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatticeClock {
    Iid {
        joint: Vec<f64>,
    },
    /// `excited` is used while T¹ > T², `calm` otherwise.
    Switching {
        calm: Vec<f64>,
        excited: Vec<f64>,
    },
}

impl LatticeClock {
    fn tables(&self) -> Vec<&[f64]> {
        match self {
            LatticeClock::Iid { joint } => vec![joint],
            LatticeClock::Switching { calm, excited } => vec![calm, excited],
        }
    }

    fn table(&self, t: &[u8; MAX_ASSETS]) -> &[f64] {
        match self {
            LatticeClock::Iid { joint } => joint,
            LatticeClock::Switching { calm, excited } => {
                if t[0] > t[1] {
                    excited
                } else {
                    calm
                }
            }
        }
    }
}

fn clock_digits(cell: usize, m: usize) -> [u8; MAX_ASSETS] {
    let mut d = [0u8; MAX_ASSETS];
    let mut c = cell;
    for digit in d.iter_mut().take(m) {
        *digit = (c % 3) as u8;
        c /= 3;
    }
    d
}

fn marginal_of(table: &[f64], m: usize, j: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (cell, p) in table.iter().enumerate() {
        out[clock_digits(cell, m)[j] as usize] += p;
    }
    out
}

type Counts = [u8; 4];
type Levels = [Counts; MAX_ASSETS];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub assets: Vec<MarginalRule>,
    pub coupling: Coupling,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<LatticeClock>,
}

/// One named check of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Whether the lattice's structure guarantees the property.
    pub required: bool,
    pub max_violation: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnumerationReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub observations: Vec<Observation>,
    pub histories_visited: u64,
    pub histories_expected: u64,
}

impl EnumerationReport {
    /// Every required check passed and the enumeration was exhaustive.
    pub fn ok(&self) -> bool {
        self.histories_visited == self.histories_expected
            && self.checks.iter().all(|c| c.passed || !c.required)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn observation(&self, name: &str) -> Option<f64> {
        self.observations
            .iter()
            .find(|o| o.name == name)
            .map(|o| o.value)
    }

    /// Fixed-width table, one line per check.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{}: {} histories (expected {})",
            self.suite, self.histories_visited, self.histories_expected
        );
        for c in &self.checks {
            let status = match (c.passed, c.required) {
                (true, _) => "pass",
                (false, true) => "FAIL",
                (false, false) => "fail (not guaranteed)",
            };
            let _ = writeln!(
                out,
                "  {:<28} {:>12.3e}  {}",
                c.name, c.max_violation, status
            );
            if let (false, Some(w)) = (c.passed, &c.witness) {
                let _ = writeln!(out, "      witness: {w}");
            }
        }
        for o in &self.observations {
            let _ = writeln!(out, "  {:<28} {:>12.6}  (observed)", o.name, o.value);
        }
        out
    }
}

/// Tracks the largest violation and where it happened.
struct Worst {
    value: f64,
    witness: Option<String>,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: 0.0,
            witness: None,
        }
    }

    fn offer(&mut self, value: f64, witness: impl FnOnce() -> String) {
        if value > self.value || value.is_nan() {
            self.value = value;
            self.witness = Some(witness());
        }
    }

    fn into_check(self, name: &str, required: bool) -> Check {
        let passed = self.value < TOLERANCE;
        Check {
            name: name.to_string(),
            required,
            max_violation: self.value,
            passed,
            witness: if passed { None } else { self.witness },
        }
    }
}

/// Kolmogorov distance between two finite distributions given as
/// (value, probability) lists, each summing to one.
fn cdf_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut events: Vec<(f64, f64)> = a
        .iter()
        .copied()
        .chain(b.iter().map(|&(v, p)| (v, -p)))
        .collect();
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut acc, mut worst) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < events.len() {
        let start = events[i].0;
        while i < events.len() && events[i].0 - start <= TIE {
            acc += events[i].1;
            i += 1;
        }
        worst = worst.max(acc.abs());
    }
    worst
}

/// Unnormalised law keyed by an exact outcome code.
#[derive(Debug, Clone, Default)]
struct Law {
    total: f64,
    entries: Vec<(u64, f64)>,
}

impl Law {
    fn add(&mut self, outcome: u64, prob: f64) {
        self.total += prob;
        match self.entries.iter_mut().find(|e| e.0 == outcome) {
            Some(e) => e.1 += prob,
            None => self.entries.push((outcome, prob)),
        }
    }

    fn normalised(&self, value: impl Fn(u64) -> f64) -> Vec<(f64, f64)> {
        self.entries
            .iter()
            .map(|&(o, p)| (value(o), p / self.total))
            .collect()
    }
}

fn pair_cells(p1: f64, p2: f64, kappa: f64) -> [f64; 4] {
    let ind = p1 * p2;
    let p11 = if kappa >= 0.0 {
        ind + kappa * (p1.min(p2) - ind)
    } else {
        ind + kappa * (ind - (p1 + p2 - 1.0).max(0.0))
    };
    [
        (1.0 - p1 - p2 + p11).max(0.0),
        (p1 - p11).max(0.0),
        (p2 - p11).max(0.0),
        p11.max(0.0),
    ]
}

/// Mixed-radix counter used to key own histories: two bits per step.
fn push_move(code: u64, law: usize, up: bool) -> u64 {
    code * 4 + (law as u64) * 2 + up as u64
}

impl LatticeSpec {
    pub fn dim(&self) -> usize {
        self.assets.len()
    }

    /// Structural validation (everything except the martingale normalisation).
    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        if !(2..=MAX_ASSETS).contains(&m) {
            return Err(GimpError::config(format!(
                "a lattice needs 2 or 3 assets, got {m}"
            )));
        }
        if !(1..=MAX_HORIZON).contains(&self.horizon) {
            return Err(GimpError::config(format!(
                "lattice horizon must be in 1..={MAX_HORIZON}, got {}",
                self.horizon
            )));
        }
        for (j, rule) in self.assets.iter().enumerate() {
            let mut laws = vec![rule.law];
            if let Some(sw) = rule.switch {
                if sw.driver >= m {
                    return Err(GimpError::config(format!(
                        "asset {j}: switch driver {} does not exist",
                        sw.driver
                    )));
                }
                laws.push(sw.law);
            }
            for law in laws {
                if !(law.up.is_finite() && law.down.is_finite() && law.up != law.down) {
                    return Err(GimpError::config(format!(
                        "asset {j}: two-point values must be finite and distinct"
                    )));
                }
                if !(0.0..=1.0).contains(&law.p) {
                    return Err(GimpError::config(format!(
                        "asset {j}: probability {} is outside [0, 1]",
                        law.p
                    )));
                }
            }
        }
        match self.coupling {
            Coupling::Constant { kappa } if !(-1.0..=1.0).contains(&kappa) => {
                return Err(GimpError::config(format!(
                    "kappa must be in [-1, 1], got {kappa}"
                )));
            }
            Coupling::LevelDependent { base, slope }
                if !(base.is_finite() && slope.is_finite()) =>
            {
                return Err(GimpError::config(
                    "level-dependent coupling needs finite base and slope",
                ));
            }
            _ => {}
        }
        if let Some(clock) = &self.clock {
            let cells = 3usize.pow(m as u32);
            for table in clock.tables() {
                if table.len() != cells {
                    return Err(GimpError::config(format!(
                        "clock table needs {cells} entries for {m} assets, got {}",
                        table.len()
                    )));
                }
                if table.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                    return Err(GimpError::config("clock table entries must be nonnegative"));
                }
                let sum: f64 = table.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(GimpError::config(format!(
                        "clock table sums to {sum}, not 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Assets whose laws fail `p·e^a + (1 − p)·e^b = 1`.
    pub fn normalisation_errors(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (j, rule) in self.assets.iter().enumerate() {
            for law in std::iter::once(rule.law).chain(rule.switch.map(|s| s.law)) {
                let err = law.exp_mean() - 1.0;
                if err.abs() > TOLERANCE {
                    out.push(format!(
                        "asset {j}: p·e^up + (1 − p)·e^down − 1 = {err:.3e}"
                    ));
                }
            }
        }
        out
    }

    fn require_normalised(&self) -> Result<()> {
        let errors = self.normalisation_errors();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(GimpError::config(format!(
                "martingale normalisation violated: {}",
                errors.join("; ")
            )))
        }
    }

    fn no_cross_switch(&self) -> bool {
        self.assets
            .iter()
            .enumerate()
            .all(|(j, r)| r.switch.is_none_or(|s| s.driver == j))
    }

    fn history_free(&self) -> bool {
        self.assets.iter().all(|r| r.switch.is_none())
    }

    fn values(&self, j: usize) -> [f64; 4] {
        let rule = &self.assets[j];
        let alt = rule.switch.map_or(rule.law, |s| s.law);
        [rule.law.up, rule.law.down, alt.up, alt.down]
    }

    fn count_value(&self, j: usize, c: &Counts) -> f64 {
        let v = self.values(j);
        (0..4).map(|i| c[i] as f64 * v[i]).sum()
    }

    fn law_index(&self, j: usize, lv: &Levels) -> usize {
        match self.assets[j].switch {
            Some(sw) if self.count_value(sw.driver, &lv[sw.driver]) > 0.0 => 1,
            _ => 0,
        }
    }

    fn law(&self, j: usize, index: usize) -> TwoPoint {
        let rule = &self.assets[j];
        if index == 1 {
            rule.switch.map_or(rule.law, |s| s.law)
        } else {
            rule.law
        }
    }

    fn kappa(&self, lv: &Levels) -> f64 {
        match self.coupling {
            Coupling::Constant { kappa } => kappa,
            Coupling::LevelDependent { base, slope } => (base
                + slope * (self.count_value(0, &lv[0]) - self.count_value(1, &lv[1])))
            .clamp(-1.0, 1.0),
        }
    }

    /// Joint one-step pmf at `lv`; bit j of the cell index is asset j's up move.
    fn cells(&self, lv: &Levels) -> ([f64; 8], [usize; MAX_ASSETS]) {
        let m = self.dim();
        let mut idx = [0usize; MAX_ASSETS];
        let mut p = [0.0; MAX_ASSETS];
        for j in 0..m {
            idx[j] = self.law_index(j, lv);
            p[j] = self.law(j, idx[j]).p;
        }
        let kappa = self.kappa(lv);
        let mut cells = [0.0; 8];
        let p12 = pair_cells(p[0], p[1], kappa);
        if m == 2 {
            cells[..4].copy_from_slice(&p12);
        } else {
            let p13 = pair_cells(p[0], p[2], kappa);
            for (c, cell) in cells.iter_mut().enumerate() {
                let (i1, i2, i3) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
                let p1 = if i1 == 1 { p[0] } else { 1.0 - p[0] };
                if p1 > 0.0 {
                    *cell = p12[i1 | (i2 << 1)] * p13[i1 | (i3 << 1)] / p1;
                }
            }
        }
        (cells, idx)
    }

    fn advance(&self, lv: &Levels, cell: usize, idx: &[usize; MAX_ASSETS]) -> Levels {
        let mut next = *lv;
        for j in 0..self.dim() {
            let up = (cell >> j) & 1 == 1;
            next[j][2 * idx[j] + usize::from(!up)] += 1;
        }
        next
    }

    fn move_value(&self, j: usize, law: usize, up: bool) -> f64 {
        let l = self.law(j, law);
        if up {
            l.up
        } else {
            l.down
        }
    }

    fn render_cells(&self, path: &[u8]) -> String {
        let steps: Vec<String> = path
            .iter()
            .map(|&c| {
                let moves: Vec<&str> = (0..self.dim())
                    .map(|j| if (c >> j) & 1 == 1 { "up" } else { "down" })
                    .collect();
                format!("({})", moves.join(","))
            })
            .collect();
        format!("[{}]", steps.join(" "))
    }

    /// All base nodes up to the horizon, in depth-first order.
    fn nodes(&self, depth: usize) -> Vec<Node> {
        let mut out = Vec::new();
        let root = Node {
            t: 0,
            prob: 1.0,
            levels: [[0; 4]; MAX_ASSETS],
            own: [0; MAX_ASSETS],
            path: Vec::new(),
        };
        self.grow(root, depth, &mut out);
        out
    }

    fn grow(&self, node: Node, depth: usize, out: &mut Vec<Node>) {
        if node.t < depth {
            let (cells, idx) = self.cells(&node.levels);
            for cell in 0..(1usize << self.dim()) {
                let mut own = node.own;
                for (j, code) in own.iter_mut().enumerate().take(self.dim()) {
                    *code = push_move(*code, idx[j], (cell >> j) & 1 == 1);
                }
                let mut path = node.path.clone();
                path.push(cell as u8);
                let child = Node {
                    t: node.t + 1,
                    prob: node.prob * cells[cell],
                    levels: self.advance(&node.levels, cell, &idx),
                    own,
                    path,
                };
                self.grow(child, depth, out);
            }
        }
        out.push(node);
    }

    fn count_per_depth(nodes: &[Node], depth: usize) -> Vec<u64> {
        let mut counts = vec![0u64; depth + 1];
        for n in nodes {
            counts[n.t] += 1;
        }
        counts
    }

    fn base_histories(&self, nodes: &[Node]) -> (u64, u64) {
        let per_depth = Self::count_per_depth(nodes, self.horizon);
        let cells = 1u64 << self.dim();
        let expected: u64 = (0..=self.horizon as u32).map(|t| cells.pow(t)).sum();
        assert!(per_depth
            .iter()
            .enumerate()
            .all(|(t, &c)| c == cells.pow(t as u32)));
        (per_depth.iter().sum(), expected)
    }

    /// Exact expectation of `f(S_t)` at time `t ≤ horizon`, with `S_0 = 1`.
    pub fn exact_expectation(&self, t: usize, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
        self.validate()?;
        if t > self.horizon {
            return Err(GimpError::input(format!(
                "time {t} is beyond the lattice horizon {}",
                self.horizon
            )));
        }
        let m = self.dim();
        let mut prices = vec![0.0; m];
        let mut acc = 0.0;
        for node in self.nodes(t).iter().filter(|n| n.t == t) {
            for (j, s) in prices.iter_mut().enumerate() {
                *s = self.count_value(j, &node.levels[j]).exp();
            }
            acc += node.prob * f(&prices);
        }
        Ok(acc)
    }

    /// Exact conditional one-step cell pmf after the given cell path.
    pub fn conditional_cells(&self, path: &[u8]) -> Vec<f64> {
        let mut lv = [[0u8; 4]; MAX_ASSETS];
        for &c in path {
            let (_, idx) = self.cells(&lv);
            lv = self.advance(&lv, c as usize, &idx);
        }
        self.cells(&lv).0[..1 << self.dim()].to_vec()
    }
}

#[derive(Debug, Clone)]
struct Node {
    t: usize,
    prob: f64,
    levels: Levels,
    own: [u64; MAX_ASSETS],
    path: Vec<u8>,
}

/// Martingale check: for every history and asset, |E[S_{t+1}/S_t | h] − 1|.
///
/// Fails with a config error when a law is not normalised; use
/// [`enumerate_martingale_unchecked`] to measure the violation instead.
pub fn enumerate_and_check_martingale(lattice: &LatticeSpec) -> Result<EnumerationReport> {
    lattice.validate()?;
    lattice.require_normalised()?;
    enumerate_martingale_unchecked(lattice)
}

/// [`enumerate_and_check_martingale`] without the normalisation precondition.
pub fn enumerate_martingale_unchecked(lattice: &LatticeSpec) -> Result<EnumerationReport> {
    lattice.validate()?;
    let m = lattice.dim();
    let nodes = lattice.nodes(lattice.horizon);
    let mut worst = Worst::new();
    for node in nodes
        .iter()
        .filter(|n| n.t < lattice.horizon && n.prob > 0.0)
    {
        let (cells, idx) = lattice.cells(&node.levels);
        for j in 0..m {
            let ratio: f64 = (0..1usize << m)
                .map(|c| cells[c] * lattice.move_value(j, idx[j], (c >> j) & 1 == 1).exp())
                .sum();
            worst.offer((ratio - 1.0).abs(), || {
                format!(
                    "t={} asset={j} history={} E[S_t+1/S_t]={ratio:.15}",
                    node.t,
                    lattice.render_cells(&node.path)
                )
            });
        }
    }
    let (visited, expected) = lattice.base_histories(&nodes);
    Ok(EnumerationReport {
        suite: "martingale".into(),
        checks: vec![worst.into_check("martingale", true)],
        observations: Vec::new(),
        histories_visited: visited,
        histories_expected: expected,
    })
}

/// Non-causality (conditional law given the full history equals the law
/// given the own history) and Granger independence (equals the
/// unconditional law) of every asset's next move.
pub fn enumerate_and_check_granger(lattice: &LatticeSpec) -> Result<EnumerationReport> {
    lattice.validate()?;
    let m = lattice.dim();
    let n = lattice.horizon;
    let nodes = lattice.nodes(n);
    let live: Vec<&Node> = nodes.iter().filter(|x| x.t < n && x.prob > 0.0).collect();

    // Outcome code = move value bits; exact because values come from the lattice.
    let node_law = |node: &Node, j: usize| -> [(u64, f64); 2] {
        let (cells, idx) = lattice.cells(&node.levels);
        let up: f64 = (0..1usize << m)
            .filter(|c| (c >> j) & 1 == 1)
            .map(|c| cells[c])
            .sum();
        let total: f64 = cells.iter().sum();
        [
            (lattice.move_value(j, idx[j], true).to_bits(), up / total),
            (
                lattice.move_value(j, idx[j], false).to_bits(),
                (total - up) / total,
            ),
        ]
    };

    let mut own: BTreeMap<(usize, usize, u64), Law> = BTreeMap::new();
    let mut uncond: BTreeMap<(usize, usize), Law> = BTreeMap::new();
    let mut uncond_cells: BTreeMap<usize, [f64; 8]> = BTreeMap::new();
    for node in &live {
        for j in 0..m {
            for (o, p) in node_law(node, j) {
                own.entry((node.t, j, node.own[j]))
                    .or_default()
                    .add(o, node.prob * p);
                uncond.entry((node.t, j)).or_default().add(o, node.prob * p);
            }
        }
        let (cells, _) = lattice.cells(&node.levels);
        let acc = uncond_cells.entry(node.t).or_insert([0.0; 8]);
        for c in 0..8 {
            acc[c] += node.prob * cells[c];
        }
    }

    let value = |o: u64| f64::from_bits(o);
    let mut no_cross = Worst::new();
    let mut history_free = Worst::new();
    let mut coupling_spread = 0.0f64;
    for node in &live {
        for j in 0..m {
            let here: Vec<(f64, f64)> = node_law(node, j)
                .iter()
                .map(|&(o, p)| (value(o), p))
                .collect();
            let given_own = own[&(node.t, j, node.own[j])].normalised(value);
            let witness = || {
                format!(
                    "t={} asset={j} history={}",
                    node.t,
                    lattice.render_cells(&node.path)
                )
            };
            no_cross.offer(cdf_distance(&here, &given_own), witness);
            let marginal = uncond[&(node.t, j)].normalised(value);
            history_free.offer(cdf_distance(&here, &marginal), witness);
        }
        let (cells, _) = lattice.cells(&node.levels);
        let total_t: f64 = live.iter().filter(|x| x.t == node.t).map(|x| x.prob).sum();
        let acc = uncond_cells[&node.t];
        for c in 0..1usize << m {
            coupling_spread = coupling_spread.max((cells[c] - acc[c] / total_t).abs());
        }
    }
    let (visited, expected) = lattice.base_histories(&nodes);
    Ok(EnumerationReport {
        suite: "granger".into(),
        checks: vec![
            no_cross.into_check("no_granger_causality", lattice.no_cross_switch()),
            history_free.into_check("granger_independent_increments", lattice.history_free()),
        ],
        observations: vec![Observation {
            name: "joint_pmf_spread".into(),
            value: coupling_spread,
        }],
        histories_visited: visited,
        histories_expected: expected,
    })
}

/// Packed observation of one asset at one external time: clock value in the
/// low byte, the four move counts above it.
fn pack(t: u8, c: &Counts) -> u64 {
    t as u64 | (c[0] as u64) << 8 | (c[1] as u64) << 16 | (c[2] as u64) << 24 | (c[3] as u64) << 32
}

fn unpack_counts(code: u64) -> Counts {
    [
        (code >> 8) as u8,
        (code >> 16) as u8,
        (code >> 24) as u8,
        (code >> 32) as u8,
    ]
}

fn count_diff(after: u64, before: u64) -> u64 {
    let (a, b) = (unpack_counts(after), unpack_counts(before));
    (0..4).fold(0u64, |acc, i| acc | ((a[i] - b[i]) as u64) << (8 * i))
}

fn diff_value(values: &[f64; 4], diff: u64) -> f64 {
    (0..4)
        .map(|i| ((diff >> (8 * i)) & 0xFF) as f64 * values[i])
        .sum()
}

/// Clock states reachable at each external time with (probability, number
/// of positive-probability clock paths).
fn clock_states(
    lattice: &LatticeSpec,
    clock: &LatticeClock,
) -> Vec<BTreeMap<[u8; MAX_ASSETS], (f64, u64)>> {
    let m = lattice.dim();
    let mut layers = vec![BTreeMap::from([([0u8; MAX_ASSETS], (1.0, 1u64))])];
    for _ in 0..lattice.horizon {
        let mut next: BTreeMap<[u8; MAX_ASSETS], (f64, u64)> = BTreeMap::new();
        let mut current: Vec<_> = layers
            .last()
            .expect("layer")
            .iter()
            .map(|(k, v)| (*k, *v))
            .collect();
        current.sort_by_key(|a| a.0);
        for (t, (p, paths)) in current {
            for (cell, q) in clock.table(&t).iter().enumerate() {
                if *q > 0.0 {
                    let d = clock_digits(cell, m);
                    let mut t2 = t;
                    for j in 0..m {
                        t2[j] += d[j];
                    }
                    let e = next.entry(t2).or_insert((0.0, 0));
                    e.0 += p * q;
                    e.1 += paths;
                }
            }
        }
        layers.push(next);
    }
    layers
}

/// Closed-form atom count: Σ over clock end states of paths × (2^m)^{max T}.
pub fn timechange_atom_count(lattice: &LatticeSpec) -> Result<u64> {
    lattice.validate()?;
    let clock = lattice
        .clock
        .as_ref()
        .ok_or_else(|| GimpError::config("lattice has no clock"))?;
    let cells = 1u64 << lattice.dim();
    let last = clock_states(lattice, clock).pop().expect("final layer");
    let mut total = 0u64;
    for (t, (_, paths)) in last {
        let max_t = *t.iter().max().expect("nonempty") as u32;
        total = total.saturating_add(paths.saturating_mul(cells.saturating_pow(max_t)));
    }
    Ok(total)
}

/// Time-change checks on a lattice with a clock, by enumeration of the
/// product of clock paths and base paths.
pub fn enumerate_and_check_timechange(lattice: &LatticeSpec) -> Result<EnumerationReport> {
    lattice.validate()?;
    let clock = lattice
        .clock
        .as_ref()
        .ok_or_else(|| GimpError::config("the time-change checks need a clock"))?;
    let expected = timechange_atom_count(lattice)?;
    if expected > ATOM_LIMIT {
        return Err(GimpError::resource(format!(
            "time-change enumeration needs {expected} atoms, above the limit of {ATOM_LIMIT}"
        )));
    }
    let m = lattice.dim();
    let n = lattice.horizon;

    // Clock paths with their probabilities.
    let mut clock_paths: Vec<(Vec<[u8; MAX_ASSETS]>, f64)> = Vec::new();
    let mut stack = vec![(vec![[0u8; MAX_ASSETS]], 1.0)];
    while let Some((path, q)) = stack.pop() {
        if path.len() == n + 1 {
            clock_paths.push((path, q));
            continue;
        }
        let t = *path.last().expect("nonempty");
        for (cell, p) in clock.table(&t).iter().enumerate().rev() {
            if *p > 0.0 {
                let d = clock_digits(cell, m);
                let mut t2 = t;
                for j in 0..m {
                    t2[j] += d[j];
                }
                let mut next = path.clone();
                next.push(t2);
                stack.push((next, q * p));
            }
        }
    }

    let per_path: Vec<(BTreeMap<Vec<u64>, f64>, u64)> = clock_paths
        .par_iter()
        .map(|(cpath, q)| {
            let horizon = cpath[n][..m].iter().copied().max().unwrap_or(0) as usize;
            let mut leaves = BTreeMap::new();
            let mut atoms = 0u64;
            let mut stack: Vec<Levels> = vec![[[0; 4]; MAX_ASSETS]; horizon + 1];
            lattice.base_walk(0, horizon, *q, &mut stack, &mut |lv_stack, prob| {
                atoms += 1;
                if prob > 0.0 {
                    let mut key = Vec::with_capacity((n + 1) * m);
                    for t in cpath.iter() {
                        for j in 0..m {
                            key.push(pack(t[j], &lv_stack[t[j] as usize][j]));
                        }
                    }
                    *leaves.entry(key).or_insert(0.0) += prob;
                }
            });
            (leaves, atoms)
        })
        .collect();
    let mut leaves: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    let mut visited = 0u64;
    for (local, atoms) in per_path {
        visited += atoms;
        let mut entries: Vec<_> = local.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for (k, p) in entries {
            *leaves.entry(k).or_insert(0.0) += p;
        }
    }
    let mut leaves: Vec<(Vec<u64>, f64)> = leaves.into_iter().collect();
    leaves.sort_by(|a, b| a.0.cmp(&b.0));

    let layers = clock_states(lattice, clock);
    let increment_pmf = |s: usize, j: usize| -> [f64; 3] {
        let mut out = [0.0; 3];
        for (t, (p, _)) in &layers[s] {
            let marg = marginal_of(clock.table(t), m, j);
            for d in 0..3 {
                out[d] += p * marg[d];
            }
        }
        out
    };

    let mut own_only = Worst::new();
    let mut clock_only = Worst::new();
    let mut mart_joint = Worst::new();
    let mut mart_natural = Worst::new();
    let mut stationary = Worst::new();
    let mut mixture = Worst::new();
    let t_mask = |k: &[u64]| -> Vec<u64> { k.iter().map(|c| c & 0xFF).collect() };
    let x_mask = |k: &[u64]| -> Vec<u64> { k.iter().map(|c| c >> 8).collect() };

    for s in 0..n {
        let width = (s + 1) * m;
        for j in 0..m {
            let values = lattice.values(j);
            let value = |o: u64| diff_value(&values, o);
            let outcome = |k: &[u64]| count_diff(k[(s + 1) * m + j], k[s * m + j]);
            let own_key = |k: &[u64]| -> Vec<u64> {
                k[..width]
                    .iter()
                    .enumerate()
                    .map(|(i, c)| if i % m == j { *c } else { c & 0xFF })
                    .collect()
            };
            let mut full: BTreeMap<&[u64], Law> = BTreeMap::new();
            let mut own: BTreeMap<Vec<u64>, Law> = BTreeMap::new();
            let mut tonly: BTreeMap<Vec<u64>, Law> = BTreeMap::new();
            let mut xonly: BTreeMap<Vec<u64>, Law> = BTreeMap::new();
            let mut uncond = Law::default();
            for (k, p) in &leaves {
                let o = outcome(k);
                full.entry(&k[..width]).or_default().add(o, *p);
                own.entry(own_key(k)).or_default().add(o, *p);
                tonly.entry(t_mask(&k[..width])).or_default().add(o, *p);
                xonly.entry(x_mask(&k[..width])).or_default().add(o, *p);
                uncond.add(o, *p);
            }
            let uncond_law = uncond.normalised(value);
            let mix = mixture_law(lattice, j, &increment_pmf(s, j));
            let witness = |k: &[u64]| lattice.render_observations(k, s);
            mixture.offer(cdf_distance(&uncond_law, &mix), || {
                format!("s={s} asset={j} unconditional")
            });

            let mut full_keys: Vec<&&[u64]> = full.keys().collect();
            full_keys.sort();
            for k in full_keys {
                let law = &full[*k];
                let here = law.normalised(value);
                let w = || format!("s={s} asset={j} history={}", witness(k));
                own_only.offer(cdf_distance(&here, &own[&own_key(k)].normalised(value)), w);
                clock_only.offer(cdf_distance(&here, &tonly[&t_mask(k)].normalised(value)), w);
                let growth: f64 = here.iter().map(|(v, p)| p * v.exp()).sum();
                mart_joint.offer((growth - 1.0).abs(), w);
            }
            let mut x_keys: Vec<&Vec<u64>> = xonly.keys().collect();
            x_keys.sort();
            for k in x_keys {
                let here = xonly[k].normalised(value);
                let growth: f64 = here.iter().map(|(v, p)| p * v.exp()).sum();
                let w = || format!("s={s} asset={j} levels={}", lattice.render_levels(k, s));
                mart_natural.offer((growth - 1.0).abs(), w);
                stationary.offer(cdf_distance(&here, &uncond_law), w);
            }
            let mut t_keys: Vec<&Vec<u64>> = tonly.keys().collect();
            t_keys.sort();
            for k in t_keys {
                let here = tonly[k].normalised(value);
                mixture.offer(cdf_distance(&here, &mix), || {
                    format!("s={s} asset={j} clock history={k:?}")
                });
            }
        }
    }

    let synchronous = clock.tables().iter().all(|t| {
        t.iter()
            .enumerate()
            .all(|(c, p)| *p == 0.0 || clock_digits(c, m)[..m].windows(2).all(|w| w[0] == w[1]))
    });
    let cross_ok = synchronous || lattice.coupling.is_independence();
    let clock_gi = match clock {
        LatticeClock::Iid { .. } => true,
        LatticeClock::Switching { calm, excited } => (0..m).all(|j| {
            marginal_of(calm, m, j)
                .iter()
                .zip(marginal_of(excited, m, j))
                .all(|(a, b)| (a - b).abs() < 1e-15)
        }),
    };
    let no_cross = lattice.no_cross_switch();
    let history_free = lattice.history_free();
    let normalised = lattice.normalisation_errors().is_empty();
    Ok(EnumerationReport {
        suite: "timechange".into(),
        checks: vec![
            own_only.into_check("own_history_sufficient", no_cross && cross_ok),
            clock_only.into_check("clock_history_sufficient", history_free && cross_ok),
            mart_joint.into_check("martingale_given_clock", no_cross && cross_ok && normalised),
            mart_natural.into_check(
                "time_changed_martingale",
                no_cross && cross_ok && normalised,
            ),
            stationary.into_check(
                "stationary_increments",
                history_free && cross_ok && clock_gi,
            ),
            mixture.into_check("mixture_identity", history_free && clock_gi),
        ],
        observations: vec![
            Observation {
                name: "synchronous_clock".into(),
                value: synchronous as u8 as f64,
            },
            Observation {
                name: "granger_independent_clock".into(),
                value: clock_gi as u8 as f64,
            },
        ],
        histories_visited: visited,
        histories_expected: expected,
    })
}

/// Law of X^j_u − X^j_0 mixed over u ~ `pmf` (u ∈ {0, 1, 2}).
fn mixture_law(lattice: &LatticeSpec, j: usize, pmf: &[f64; 3]) -> Vec<(f64, f64)> {
    let values = lattice.values(j);
    let mut out: Vec<(f64, f64)> = Vec::new();
    // Exact marginal law of the first u steps of asset j, by dynamic
    // programming over the joint levels.
    let mut layer: BTreeMap<Levels, f64> = BTreeMap::from([([[0u8; 4]; MAX_ASSETS], 1.0)]);
    for (u, w) in pmf.iter().enumerate() {
        if u > 0 {
            let mut next: BTreeMap<Levels, f64> = BTreeMap::new();
            let mut current: Vec<_> = layer.into_iter().collect();
            current.sort_by_key(|a| a.0);
            for (lv, p) in current {
                let (cells, idx) = lattice.cells(&lv);
                for (c, q) in cells.iter().enumerate().take(1 << lattice.dim()) {
                    *next.entry(lattice.advance(&lv, c, &idx)).or_insert(0.0) += p * q;
                }
            }
            layer = next;
        }
        if *w > 0.0 {
            let mut entries: Vec<_> = layer.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            for (lv, p) in entries {
                let x: f64 = (0..4).map(|i| lv[j][i] as f64 * values[i]).sum();
                out.push((x, w * p));
            }
        }
    }
    out
}

impl LatticeSpec {
    fn base_walk<F: FnMut(&[Levels], f64)>(
        &self,
        t: usize,
        horizon: usize,
        prob: f64,
        stack: &mut Vec<Levels>,
        visit: &mut F,
    ) {
        if t == horizon {
            visit(stack, prob);
            return;
        }
        let (cells, idx) = self.cells(&stack[t]);
        for (c, q) in cells.iter().enumerate().take(1 << self.dim()) {
            stack[t + 1] = self.advance(&stack[t], c, &idx);
            self.base_walk(t + 1, horizon, prob * q, stack, visit);
        }
    }

    fn render_observations(&self, key: &[u64], s: usize) -> String {
        let m = self.dim();
        (0..=s)
            .map(|r| {
                let t: Vec<String> = (0..m)
                    .map(|j| (key[r * m + j] & 0xFF).to_string())
                    .collect();
                let x: Vec<String> = (0..m)
                    .map(|j| format!("{:.6}", self.count_value(j, &unpack_counts(key[r * m + j]))))
                    .collect();
                format!("[T=({}) X=({})]", t.join(","), x.join(","))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn render_levels(&self, key: &[u64], s: usize) -> String {
        let m = self.dim();
        (0..=s)
            .map(|r| {
                let x: Vec<String> = (0..m)
                    .map(|j| {
                        format!(
                            "{:.6}",
                            self.count_value(j, &unpack_counts(key[r * m + j] << 8))
                        )
                    })
                    .collect();
                format!("({})", x.join(","))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Every check that applies to the lattice.
pub fn enumerate_all(
    lattice: &LatticeSpec,
    check_normalisation: bool,
) -> Result<Vec<EnumerationReport>> {
    let mut out = vec![
        if check_normalisation {
            enumerate_and_check_martingale(lattice)?
        } else {
            enumerate_martingale_unchecked(lattice)?
        },
        enumerate_and_check_granger(lattice)?,
    ];
    if lattice.clock.is_some() {
        out.push(enumerate_and_check_timechange(lattice)?);
    }
    Ok(out)
}

/// Named fixtures exercising each check.
pub mod fixtures {
    use super::*;

    pub fn symmetric_law() -> TwoPoint {
        TwoPoint::martingale(1.1f64.ln(), 0.9f64.ln()).expect("valid")
    }

    /// Two assets, moves ln 1.1 / ln 0.9 with p = 1/2, constant κ, horizon 3.
    pub fn two_asset(kappa: f64) -> LatticeSpec {
        LatticeSpec {
            assets: vec![MarginalRule::fixed(symmetric_law()); 2],
            coupling: Coupling::Constant { kappa },
            horizon: 3,
            clock: None,
        }
    }

    /// Same moves with p = 0.6: E[e^ΔX] = 1.02.
    pub fn broken_normalisation() -> LatticeSpec {
        let mut spec = two_asset(0.0);
        spec.assets[0].law.p = 0.6;
        spec
    }

    /// κ moves with X¹ − X²: Granger independent, not vector independent.
    pub fn level_dependent_coupling() -> LatticeSpec {
        LatticeSpec {
            coupling: Coupling::LevelDependent {
                base: 0.0,
                slope: 5.0,
            },
            ..two_asset(0.0)
        }
    }

    /// Asset 2's law depends on asset 1's level.
    pub fn contaminated() -> LatticeSpec {
        let mut spec = two_asset(0.3);
        spec.assets[1].switch = Some(Switch {
            driver: 0,
            law: TwoPoint::martingale(1.3f64.ln(), 0.8f64.ln()).expect("valid"),
        });
        spec
    }

    /// Independent clock components, each uniform on {0, 1}.
    pub fn uniform01_clock(m: usize) -> LatticeClock {
        let cells = 3usize.pow(m as u32);
        let weight = 0.5f64.powi(m as i32);
        let joint = (0..cells)
            .map(|c| {
                if clock_digits(c, m)[..m].iter().all(|d| *d <= 1) {
                    weight
                } else {
                    0.0
                }
            })
            .collect();
        LatticeClock::Iid { joint }
    }

    /// Calendar clock: every component advances by one.
    pub fn unit_clock(m: usize) -> LatticeClock {
        let cells = 3usize.pow(m as u32);
        let one = (0..m).map(|j| 3usize.pow(j as u32)).sum::<usize>();
        LatticeClock::Iid {
            joint: (0..cells)
                .map(|c| if c == one { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Independent i.i.d. base under a {0, 1} clock, horizon 3.
    pub fn iid_with_clock() -> LatticeSpec {
        LatticeSpec {
            clock: Some(uniform01_clock(2)),
            ..two_asset(0.0)
        }
    }

    /// Level-dependent own law (non-stationary increments) under the same clock.
    pub fn nonstationary_with_clock() -> LatticeSpec {
        let mut spec = iid_with_clock();
        spec.assets[0].switch = Some(Switch {
            driver: 0,
            law: TwoPoint::martingale(1.3f64.ln(), 0.8f64.ln()).expect("valid"),
        });
        spec
    }

    /// Comonotone base observed through an asynchronous clock.
    pub fn coupled_asynchronous() -> LatticeSpec {
        LatticeSpec {
            clock: Some(uniform01_clock(2)),
            horizon: 2,
            ..two_asset(1.0)
        }
    }
}

fn random_law(rng: &mut ChaCha8Rng) -> TwoPoint {
    let up = rng.random_range(0.01..0.35);
    let down = -rng.random_range(0.01..0.35);
    TwoPoint::martingale(up, down).expect("up > 0 > down")
}

fn random_coupling(rng: &mut ChaCha8Rng) -> Coupling {
    match rng.random_range(0..3) {
        0 => Coupling::Constant { kappa: 0.0 },
        1 => Coupling::Constant {
            kappa: rng.random_range(-1.0..=1.0),
        },
        _ => Coupling::LevelDependent {
            base: rng.random_range(-0.5..0.5),
            slope: rng.random_range(-8.0..8.0),
        },
    }
}

/// Random admissible lattice without a clock: martingale laws, any
/// coupling, optional own-level law switches.
pub fn random_lattice(seed: u64, index: u64) -> LatticeSpec {
    let mut rng = ChaCha8Rng::from_rng(&mut RngStream::sequential(seed, Domain::Lattice, index));
    let m = rng.random_range(2..=3usize);
    let horizon = rng.random_range(2..=MAX_HORIZON);
    let assets = (0..m)
        .map(|j| MarginalRule {
            law: random_law(&mut rng),
            switch: rng.random_bool(0.3).then(|| Switch {
                driver: j,
                law: random_law(&mut rng),
            }),
        })
        .collect();
    LatticeSpec {
        assets,
        coupling: random_coupling(&mut rng),
        horizon,
        clock: None,
    }
}

/// Discrete comonotone coupling of per-component pmfs on {0, 1, 2}.
fn comonotone_table(marginals: &[[f64; 3]]) -> Vec<f64> {
    let m = marginals.len();
    let mut table = vec![0.0; 3usize.pow(m as u32)];
    let cdfs: Vec<[f64; 3]> = marginals.iter().map(|p| [p[0], p[0] + p[1], 1.0]).collect();
    let mut cuts: Vec<f64> = cdfs
        .iter()
        .flat_map(|c| c.iter().copied())
        .chain([0.0])
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi - lo <= 0.0 {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let cell: usize = cdfs
            .iter()
            .enumerate()
            .map(|(j, c)| c.iter().position(|x| mid < *x).unwrap_or(2) * 3usize.pow(j as u32))
            .sum();
        table[cell] += hi - lo;
    }
    table
}

fn random_pmf3(rng: &mut ChaCha8Rng, allow_two: bool) -> [f64; 3] {
    let w: Vec<f64> = (0..3)
        .map(|d| {
            if d == 2 && !allow_two {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    let s: f64 = w.iter().sum();
    [w[0] / s, w[1] / s, w[2] / s]
}

/// Random lattice with a clock satisfying the hypotheses under which every
/// time-change check is guaranteed: history-free martingale laws, and either
/// a synchronous clock (any coupling) or independent assets (any Granger
/// independent clock).
pub fn random_clock_lattice(seed: u64, index: u64) -> LatticeSpec {
    let mut rng = ChaCha8Rng::from_rng(&mut RngStream::sequential(seed, Domain::Clock, index));
    loop {
        let m = if rng.random_bool(0.7) { 2 } else { 3 };
        let horizon = rng.random_range(2..=if m == 2 { 4 } else { 3 });
        let assets = (0..m)
            .map(|_| MarginalRule::fixed(random_law(&mut rng)))
            .collect();
        let cells = 3usize.pow(m as u32);
        let synchronous = rng.random_bool(0.5);
        let allow_two = rng.random_bool(0.4);
        let (coupling, clock) = if synchronous {
            let pmf = random_pmf3(&mut rng, allow_two);
            let mut joint = vec![0.0; cells];
            for d in 0..3 {
                let cell: usize = (0..m).map(|j| d * 3usize.pow(j as u32)).sum();
                joint[cell] = pmf[d];
            }
            (random_coupling(&mut rng), LatticeClock::Iid { joint })
        } else {
            let marginals: Vec<[f64; 3]> =
                (0..m).map(|_| random_pmf3(&mut rng, allow_two)).collect();
            let product: Vec<f64> = (0..cells)
                .map(|c| {
                    let d = clock_digits(c, m);
                    (0..m).map(|j| marginals[j][d[j] as usize]).product()
                })
                .collect();
            let comonotone = comonotone_table(&marginals);
            let mix = |w: f64| -> Vec<f64> {
                product
                    .iter()
                    .zip(&comonotone)
                    .map(|(a, b)| w * a + (1.0 - w) * b)
                    .collect()
            };
            let clock = match rng.random_range(0..3) {
                0 => LatticeClock::Iid {
                    joint: product.clone(),
                },
                1 => LatticeClock::Iid {
                    joint: mix(rng.random_range(0.0..1.0)),
                },
                _ => LatticeClock::Switching {
                    calm: mix(rng.random_range(0.0..0.5)),
                    excited: mix(rng.random_range(0.5..1.0)),
                },
            };
            (Coupling::Constant { kappa: 0.0 }, clock)
        };
        let spec = LatticeSpec {
            assets,
            coupling,
            horizon,
            clock: Some(clock),
        };
        if timechange_atom_count(&spec).is_ok_and(|a| a <= RANDOM_ATOM_BUDGET) {
            return spec;
        }
    }
}

/// Martingale and Granger reports for `count` random lattices.
pub fn lattice_suite(seed: u64, count: u64) -> Result<Vec<(LatticeSpec, Vec<EnumerationReport>)>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let spec = random_lattice(seed, i);
            let reports = vec![
                enumerate_and_check_martingale(&spec)?,
                enumerate_and_check_granger(&spec)?,
            ];
            Ok((spec, reports))
        })
        .collect()
}

/// Time-change reports for `count` random clock lattices.
pub fn timechange_suite(seed: u64, count: u64) -> Result<Vec<(LatticeSpec, EnumerationReport)>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let spec = random_clock_lattice(seed, i);
            let report = enumerate_and_check_timechange(&spec)?;
            Ok((spec, report))
        })
        .collect()
}

impl PathModel for LatticeSpec {
    fn dim(&self) -> usize {
        self.assets.len()
    }

    fn initial_log_prices(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    /// Draws the cell of each step by inverting the cell CDF at one uniform.
    fn simulate_path(
        &self,
        seed: u64,
        path: u64,
        horizon: usize,
        out: &mut PathBuffer,
    ) -> Result<()> {
        let m = self.dim();
        let mut lv = [[0u8; 4]; MAX_ASSETS];
        for t in 0..horizon {
            let (cells, idx) = self.cells(&lv);
            let u = RngStream::at(seed, Domain::Base, path, t as u64).uniform();
            let mut acc = 0.0;
            let mut chosen = (1 << m) - 1;
            for (c, p) in cells.iter().enumerate().take(1 << m) {
                acc += p;
                if u < acc {
                    chosen = c;
                    break;
                }
            }
            lv = self.advance(&lv, chosen, &idx);
            for j in 0..m {
                out.log_prices[(t + 1) * m + j] = self.count_value(j, &lv[j]);
            }
        }
        Ok(())
    }
}
