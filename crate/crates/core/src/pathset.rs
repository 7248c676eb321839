//! Simulated trajectories and the path-parallel simulation driver.
//!
//! A [`PathModel`] produces one trajectory at a time from `(seed, path)`;
//! [`simulate`] runs it over all paths in parallel and assembles a
//! [`PathSet`] in path order, so the output never depends on the number of
//! worker threads.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{GimpError, Result};
use crate::rng::SUBSTREAM_SCHEME;

/// Upper bound on the memory a single [`PathSet`] may allocate.
pub const MAX_PATHSET_BYTES: usize = 8 << 30;

/// Scratch trajectory for one path: `(horizon + 1) × dim` entries per field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathBuffer {
    pub log_prices: Vec<f64>,
    pub variances: Vec<f64>,
    pub clock: Vec<u64>,
}

impl PathBuffer {
    pub fn reset(&mut self, horizon: usize, dim: usize, variances: bool, clock: bool) {
        let len = (horizon + 1) * dim;
        self.log_prices.clear();
        self.log_prices.resize(len, 0.0);
        self.variances.clear();
        if variances {
            self.variances.resize(len, 0.0);
        }
        self.clock.clear();
        if clock {
            self.clock.resize(len, 0);
        }
    }

    /// Terminal log-prices (last row).
    pub fn terminal(&self, dim: usize) -> &[f64] {
        &self.log_prices[self.log_prices.len() - dim..]
    }

    pub fn row(&self, t: usize, dim: usize) -> &[f64] {
        &self.log_prices[t * dim..(t + 1) * dim]
    }
}

/// A source of seed-reproducible multivariate log-price trajectories.
pub trait PathModel: Sync {
    fn dim(&self) -> usize;

    fn initial_log_prices(&self) -> Vec<f64>;

    /// Whether trajectories carry conditional variances.
    fn records_variance(&self) -> bool {
        false
    }

    /// Whether trajectories carry clock values.
    fn records_clock(&self) -> bool {
        false
    }

    /// Write path `path` on times `0..=horizon` into `out` (already sized).
    fn simulate_path(
        &self,
        seed: u64,
        path: u64,
        horizon: usize,
        out: &mut PathBuffer,
    ) -> Result<()>;
}

/// Run `f` on the global pool, or on a dedicated pool with `workers` threads.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| GimpError::resource(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Apply `f` to every simulated path and collect the results in path order.
pub fn map_paths<M, T, F>(
    model: &M,
    n_paths: usize,
    horizon: usize,
    seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    M: PathModel + ?Sized,
    T: Send,
    F: Fn(u64, &PathBuffer) -> T + Sync,
{
    let (dim, var, clock) = (model.dim(), model.records_variance(), model.records_clock());
    (0..n_paths as u64)
        .into_par_iter()
        .map_init(PathBuffer::default, |buf, path| {
            buf.reset(horizon, dim, var, clock);
            model.simulate_path(seed, path, horizon, buf)?;
            Ok(f(path, buf))
        })
        .collect()
}

/// Simulate `n_paths` trajectories of length `horizon`.
pub fn simulate<M: PathModel + ?Sized>(
    model: &M,
    n_paths: usize,
    horizon: usize,
    seed: u64,
) -> Result<PathSet> {
    if n_paths == 0 {
        return Err(GimpError::input("n_paths must be at least 1"));
    }
    let dim = model.dim();
    let per_path = (horizon + 1) * dim;
    let fields = 1 + model.records_variance() as usize + model.records_clock() as usize;
    let bytes = n_paths
        .checked_mul(per_path)
        .and_then(|n| n.checked_mul(8 * fields));
    if bytes.is_none_or(|b| b > MAX_PATHSET_BYTES) {
        return Err(GimpError::resource(format!(
            "{n_paths} paths of horizon {horizon} in dimension {dim} exceed the {MAX_PATHSET_BYTES}-byte path budget"
        )));
    }
    let buffers = map_paths(model, n_paths, horizon, seed, |_, buf| buf.clone())?;
    let mut set = PathSet {
        n_paths,
        horizon,
        dim,
        log_prices: Vec::new(),
        variances: model.records_variance().then(Vec::new),
        clock: model.records_clock().then(Vec::new),
        seed,
        scheme: SUBSTREAM_SCHEME.to_string(),
    };
    let total = n_paths * per_path;
    set.log_prices
        .try_reserve_exact(total)
        .map_err(|e| GimpError::resource(format!("cannot allocate path storage: {e}")))?;
    for buf in &buffers {
        set.log_prices.extend_from_slice(&buf.log_prices);
        if let Some(v) = set.variances.as_mut() {
            v.extend_from_slice(&buf.variances);
        }
        if let Some(c) = set.clock.as_mut() {
            c.extend_from_slice(&buf.clock);
        }
    }
    Ok(set)
}

/// A collection of trajectories on an integer grid, stored `[path][time][asset]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub n_paths: usize,
    pub horizon: usize,
    pub dim: usize,
    pub log_prices: Vec<f64>,
    pub variances: Option<Vec<f64>>,
    pub clock: Option<Vec<u64>>,
    pub seed: u64,
    pub scheme: String,
}

impl PathSet {
    /// Build from raw `[path][time][asset]` log-prices (used by tests and
    /// loaders).
    pub fn from_log_prices(
        n_paths: usize,
        horizon: usize,
        dim: usize,
        log_prices: Vec<f64>,
    ) -> Result<Self> {
        if log_prices.len() != n_paths * (horizon + 1) * dim {
            return Err(GimpError::input(format!(
                "expected {} log-prices, got {}",
                n_paths * (horizon + 1) * dim,
                log_prices.len()
            )));
        }
        Ok(Self {
            n_paths,
            horizon,
            dim,
            log_prices,
            variances: None,
            clock: None,
            seed: 0,
            scheme: "external".to_string(),
        })
    }

    #[inline]
    fn index(&self, path: usize, t: usize, asset: usize) -> usize {
        (path * (self.horizon + 1) + t) * self.dim + asset
    }

    #[inline]
    pub fn log_price(&self, path: usize, t: usize, asset: usize) -> f64 {
        self.log_prices[self.index(path, t, asset)]
    }

    pub fn variance(&self, path: usize, t: usize, asset: usize) -> Option<f64> {
        self.variances
            .as_ref()
            .map(|v| v[self.index(path, t, asset)])
    }

    pub fn clock_value(&self, path: usize, t: usize, asset: usize) -> Option<u64> {
        self.clock.as_ref().map(|c| c[self.index(path, t, asset)])
    }

    /// Log-prices of one path at one time.
    pub fn row(&self, path: usize, t: usize) -> &[f64] {
        let start = self.index(path, t, 0);
        &self.log_prices[start..start + self.dim]
    }

    /// Elementwise exponential of the log-prices, same layout.
    pub fn prices(&self) -> Vec<f64> {
        prices_from_logs(&self.log_prices)
    }

    /// CSV with header `path,time,asset,logprice,variance[,clock]`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let clock = self.clock.is_some();
        if clock {
            writeln!(out, "path,time,asset,logprice,variance,clock")?;
        } else {
            writeln!(out, "path,time,asset,logprice,variance")?;
        }
        for p in 0..self.n_paths {
            for t in 0..=self.horizon {
                for j in 0..self.dim {
                    write!(out, "{p},{t},{j},{:?},", self.log_price(p, t, j))?;
                    if let Some(v) = self.variance(p, t, j) {
                        write!(out, "{v:?}")?;
                    }
                    if let Some(c) = self.clock_value(p, t, j) {
                        write!(out, ",{c}")?;
                    }
                    writeln!(out)?;
                }
            }
        }
        Ok(())
    }

    /// Parse the CSV written by [`PathSet::write_csv`]. Rows must be in
    /// `[path][time][asset]` order.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| GimpError::input("empty path file"))?
            .map_err(|e| GimpError::input(e.to_string()))?;
        let has_clock = match header.trim() {
            "path,time,asset,logprice,variance" => false,
            "path,time,asset,logprice,variance,clock" => true,
            other => {
                return Err(GimpError::input(format!(
                    "unexpected path file header `{other}`"
                )))
            }
        };
        let mut rows: Vec<(usize, usize, usize, f64, Option<f64>, Option<u64>)> = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| GimpError::input(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let bad = || GimpError::input(format!("line {}: malformed row `{line}`", i + 2));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 + has_clock as usize {
                return Err(bad());
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
            let variance = if fields[4].is_empty() {
                None
            } else {
                Some(fields[4].parse::<f64>().map_err(|_| bad())?)
            };
            let clock = if has_clock {
                Some(fields[5].parse::<u64>().map_err(|_| bad())?)
            } else {
                None
            };
            rows.push((
                int(fields[0])?,
                int(fields[1])?,
                int(fields[2])?,
                fields[3].parse::<f64>().map_err(|_| bad())?,
                variance,
                clock,
            ));
        }
        let n_paths = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
        let horizon = rows.iter().map(|r| r.1).max().unwrap_or(0);
        let dim = rows.iter().map(|r| r.2).max().map_or(0, |m| m + 1);
        if n_paths == 0 || rows.len() != n_paths * (horizon + 1) * dim {
            return Err(GimpError::input(
                "path file does not form a complete path × time × asset grid",
            ));
        }
        let mut set =
            Self::from_log_prices(n_paths, horizon, dim, rows.iter().map(|r| r.3).collect())?;
        for (k, r) in rows.iter().enumerate() {
            if set.index(r.0, r.1, r.2) != k {
                return Err(GimpError::input(format!(
                    "row {} is out of path/time/asset order",
                    k + 2
                )));
            }
        }
        if rows.iter().all(|r| r.4.is_some()) {
            set.variances = Some(rows.iter().map(|r| r.4.unwrap_or_default()).collect());
        }
        if has_clock {
            set.clock = Some(rows.iter().map(|r| r.5.unwrap_or_default()).collect());
        }
        Ok(set)
    }
}

/// S = e^X elementwise.
pub fn prices_from_logs(log_prices: &[f64]) -> Vec<f64> {
    log_prices.iter().map(|x| x.exp()).collect()
}
