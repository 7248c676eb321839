//! Parametric copulas: evaluation, density, Rosenblatt transforms and sampling.
//!
//! Three families are supported, all with a strictly positive density on the
//! open unit cube: independence, Gaussian and Clayton. A copula may carry an
//! affine state map that turns a nonnegative scalar feature of the market
//! state into the family parameter, which is how the process module makes
//! the dependence structure vary with the filtration.
//!
//! Clayton quantities are evaluated in the log domain through
//! `ln(1 + Σ (u_j^{-θ} − 1))`, which stays accurate both for θ near zero
//! (where the family approaches independence) and at the θ = 50 cap where
//! `u^{-θ}` overflows.

use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{GimpError, Result};
use crate::rng::{Domain, RngStream};
use crate::stats::{normal, quadrature};

/// Largest admissible Clayton parameter; larger values are clamped.
pub const THETA_MAX: f64 = 50.0;
/// Smallest Clayton parameter reachable through clamping.
pub const THETA_MIN: f64 = 1e-10;
/// Unit-cube points are clamped into `[UNIT_EPS, 1 − UNIT_EPS]`.
pub const UNIT_EPS: f64 = 1e-12;
/// Draws used by the Monte Carlo Gaussian CDF in dimension > 3.
pub const GAUSSIAN_CDF_DRAWS: usize = 100_000;

const QUAD_TOL: f64 = 1e-14;

/// A point of the open unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitPoint(Vec<f64>);

impl UnitPoint {
    /// Accepts coordinates in `[0, 1]` and clamps them into the interior.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = coords
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(GimpError::input(format!(
                "coordinate {i} = {v} is outside [0, 1]"
            )));
        }
        Ok(Self(coords.into_iter().map(clamp_unit).collect()))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[inline]
pub fn clamp_unit(u: f64) -> f64 {
    u.clamp(UNIT_EPS, 1.0 - UNIT_EPS)
}

/// `parameter = clamp(a + b · feature)` into the family's valid range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMap {
    pub a: f64,
    pub b: f64,
}

impl StateMap {
    pub fn is_constant(&self) -> bool {
        self.b == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Independence,
    /// Correlation matrix (row-major) and its lower Cholesky factor.
    Gaussian {
        corr: Vec<f64>,
        chol: Vec<f64>,
    },
    Clayton {
        theta: f64,
    },
    /// Upper Fréchet bound: every coordinate equals one uniform.
    Comonotone,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Independence => "independence",
            Family::Gaussian { .. } => "gaussian",
            Family::Clayton { .. } => "clayton",
            Family::Comonotone => "comonotone",
        }
    }
}

/// Value of a copula CDF, with the Monte Carlo standard error when the value
/// was estimated by simulation (zero for deterministic evaluation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfValue {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CopulaSpec {
    dim: usize,
    family: Family,
    state_map: Option<StateMap>,
}

fn cholesky(corr: &[f64], m: usize) -> Option<Vec<f64>> {
    let mat = nalgebra::DMatrix::from_row_slice(m, m, corr);
    let l = mat.cholesky()?.unpack();
    Some((0..m * m).map(|idx| l[(idx / m, idx % m)]).collect())
}

fn equicorrelation(m: usize, rho: f64) -> Vec<f64> {
    (0..m * m)
        .map(|idx| if idx / m == idx % m { 1.0 } else { rho })
        .collect()
}

fn equicorrelation_range(m: usize) -> (f64, f64) {
    (-1.0 / (m as f64 - 1.0) + 1e-6, 1.0 - 1e-6)
}

/// ln(1 + Σ_j (e^{a_j} − 1)) for a_j ≥ 0, without overflow.
fn log1p_sum_expm1(a: &[f64]) -> f64 {
    let amax = a.iter().copied().fold(0.0, f64::max);
    if amax < 700.0 {
        a.iter().map(|x| x.exp_m1()).sum::<f64>().ln_1p()
    } else {
        let shifted: f64 = a.iter().map(|x| (x - amax).exp()).sum();
        amax + (shifted - (a.len() as f64 - 1.0) * (-amax).exp()).ln()
    }
}

/// ln(1 + e^x).
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bivariate standard normal CDF with correlation `rho`, by quadrature of
/// Sheppard's formula in the arcsine parameterisation.
pub fn bivariate_normal_cdf(h: f64, k: f64, rho: f64) -> f64 {
    let base = normal::cdf(h) * normal::cdf(k);
    if rho == 0.0 {
        return base;
    }
    let upper = rho.clamp(-1.0, 1.0).asin();
    let integrand = |t: f64| {
        let c = t.cos();
        if c <= 0.0 {
            return 0.0;
        }
        (-(h * h + k * k - 2.0 * h * k * t.sin()) / (2.0 * c * c)).exp()
    };
    let extra =
        quadrature::integrate(integrand, 0.0, upper, QUAD_TOL) / (2.0 * std::f64::consts::PI);
    (base + extra).clamp(0.0, 1.0)
}

fn trivariate_normal_cdf(z: &[f64], corr: &[f64]) -> f64 {
    let (r12, r13, r23) = (corr[1], corr[2], corr[5]);
    let s2 = (1.0 - r12 * r12).sqrt();
    let s3 = (1.0 - r13 * r13).sqrt();
    let conditional = ((r23 - r12 * r13) / (s2 * s3)).clamp(-1.0, 1.0);
    let lower = -10.0;
    if z[0] <= lower {
        return 0.0;
    }
    let integrand = |x: f64| {
        normal::pdf(x)
            * bivariate_normal_cdf((z[1] - r12 * x) / s2, (z[2] - r13 * x) / s3, conditional)
    };
    quadrature::integrate(integrand, lower, z[0], 1e-13).clamp(0.0, 1.0)
}

impl CopulaSpec {
    pub fn independence(dim: usize) -> Result<Self> {
        Self::check_dim(dim)?;
        Ok(Self {
            dim,
            family: Family::Independence,
            state_map: None,
        })
    }

    /// Gaussian copula from a correlation matrix given as rows.
    pub fn gaussian(corr: &[Vec<f64>]) -> Result<Self> {
        let dim = corr.len();
        Self::check_dim(dim)?;
        if corr.iter().any(|row| row.len() != dim) {
            return Err(GimpError::config("correlation matrix must be square"));
        }
        for i in 0..dim {
            if (corr[i][i] - 1.0).abs() > 1e-12 {
                return Err(GimpError::config(format!(
                    "correlation diagonal entry {i} is {}",
                    corr[i][i]
                )));
            }
            for j in 0..i {
                if (corr[i][j] - corr[j][i]).abs() > 1e-12 {
                    return Err(GimpError::config(format!(
                        "correlation matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let flat: Vec<f64> = corr.iter().flatten().copied().collect();
        let chol = cholesky(&flat, dim)
            .ok_or_else(|| GimpError::config("correlation matrix is not positive definite"))?;
        Ok(Self {
            dim,
            family: Family::Gaussian { corr: flat, chol },
            state_map: None,
        })
    }

    /// Clayton copula. θ above [`THETA_MAX`] is clamped; θ ≤ 0 is rejected.
    pub fn clayton(dim: usize, theta: f64) -> Result<Self> {
        Self::check_dim(dim)?;
        if !(theta > 0.0) {
            return Err(GimpError::config(format!(
                "clayton theta must be positive, got {theta}"
            )));
        }
        Ok(Self {
            dim,
            family: Family::Clayton {
                theta: theta.clamp(THETA_MIN, THETA_MAX),
            },
            state_map: None,
        })
    }

    /// Comonotone copula. It is singular: no density and no forward
    /// Rosenblatt transform.
    pub fn comonotone(dim: usize) -> Result<Self> {
        Self::check_dim(dim)?;
        Ok(Self {
            dim,
            family: Family::Comonotone,
            state_map: None,
        })
    }

    /// Attach a state map. Independence and comonotone copulas have no
    /// parameter to map.
    pub fn with_state_map(mut self, map: StateMap) -> Result<Self> {
        if matches!(self.family, Family::Independence | Family::Comonotone) {
            return Err(GimpError::config(format!(
                "the {} copula has no parameter for a state map",
                self.family.name()
            )));
        }
        if !map.a.is_finite() || !map.b.is_finite() {
            return Err(GimpError::config("state map coefficients must be finite"));
        }
        self.state_map = Some(map);
        Ok(self)
    }

    fn check_dim(dim: usize) -> Result<()> {
        if dim < 2 {
            return Err(GimpError::config(format!(
                "copula dimension must be at least 2, got {dim}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn state_map(&self) -> Option<StateMap> {
        self.state_map
    }

    /// True when the coupling reads the state (a map with nonzero slope).
    pub fn is_state_dependent(&self) -> bool {
        self.state_map.is_some_and(|m| !m.is_constant())
    }

    /// Concrete-parameter copy for a given state feature. Without a state map
    /// the copula is returned unchanged.
    pub fn resolve_state_param(&self, feature: f64) -> CopulaSpec {
        let Some(map) = self.state_map else {
            return self.clone();
        };
        let raw = map.a + map.b * feature;
        let family = match &self.family {
            Family::Independence => Family::Independence,
            Family::Comonotone => Family::Comonotone,
            Family::Clayton { .. } => {
                let theta = if raw.is_nan() {
                    THETA_MIN
                } else {
                    raw.clamp(THETA_MIN, THETA_MAX)
                };
                Family::Clayton { theta }
            }
            Family::Gaussian { .. } => {
                let (lo, hi) = equicorrelation_range(self.dim);
                let rho = if raw.is_nan() { 0.0 } else { raw.clamp(lo, hi) };
                let corr = equicorrelation(self.dim, rho);
                let chol = cholesky(&corr, self.dim)
                    .expect("clamped equicorrelation is positive definite");
                Family::Gaussian { corr, chol }
            }
        };
        CopulaSpec {
            dim: self.dim,
            family,
            state_map: None,
        }
    }

    fn check_point(&self, u: &UnitPoint) -> Result<()> {
        if u.dim() != self.dim {
            return Err(GimpError::input(format!(
                "point has dimension {} but the copula has dimension {}",
                u.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// C(u).
    pub fn cdf(&self, u: &UnitPoint) -> Result<CdfValue> {
        self.check_point(u)?;
        let u = u.coords();
        let exact = |value: f64| {
            Ok(CdfValue {
                value,
                std_error: 0.0,
            })
        };
        match &self.family {
            Family::Independence => exact(u.iter().product()),
            Family::Comonotone => exact(u.iter().copied().fold(1.0, f64::min)),
            Family::Clayton { theta } => {
                let a: Vec<f64> = u.iter().map(|x| -theta * x.ln()).collect();
                exact((-log1p_sum_expm1(&a) / theta).exp())
            }
            Family::Gaussian { corr, .. } => {
                let z: Vec<f64> = u.iter().map(|&x| normal::quantile(x)).collect();
                match self.dim {
                    2 => exact(bivariate_normal_cdf(z[0], z[1], corr[1])),
                    3 => exact(trivariate_normal_cdf(&z, corr)),
                    _ => Ok(self.gaussian_cdf_monte_carlo(&z)),
                }
            }
        }
    }

    fn gaussian_cdf_monte_carlo(&self, z: &[f64]) -> CdfValue {
        let Family::Gaussian { chol, .. } = &self.family else {
            unreachable!("monte carlo cdf is only used for the gaussian family")
        };
        let m = self.dim;
        let mut stream = RngStream::sequential(0x6364_665f_6d63, Domain::Auxiliary, 0);
        let mut normals = vec![0.0; m];
        let mut hits = 0usize;
        for _ in 0..GAUSSIAN_CDF_DRAWS {
            for n in normals.iter_mut() {
                *n = StandardNormal.sample(&mut stream);
            }
            let inside = (0..m).all(|i| {
                let zi: f64 = (0..=i).map(|k| chol[i * m + k] * normals[k]).sum();
                zi <= z[i]
            });
            hits += inside as usize;
        }
        let n = GAUSSIAN_CDF_DRAWS as f64;
        let p = hits as f64 / n;
        CdfValue {
            value: p,
            std_error: (p * (1.0 - p) / n).sqrt(),
        }
    }

    /// c(u) = ∂^m C / ∂u_1 … ∂u_m.
    pub fn density(&self, u: &UnitPoint) -> Result<f64> {
        self.check_point(u)?;
        let u = u.coords();
        match &self.family {
            Family::Independence => Ok(1.0),
            Family::Comonotone => Err(GimpError::input(
                "the comonotone copula is singular and has no density",
            )),
            Family::Clayton { theta } => {
                let theta = *theta;
                let m = self.dim as f64;
                let a: Vec<f64> = u.iter().map(|x| -theta * x.ln()).collect();
                let log_norm: f64 = (0..self.dim).map(|k| (k as f64 * theta).ln_1p()).sum();
                let log_u: f64 = u.iter().map(|x| x.ln()).sum();
                let log_c =
                    log_norm - (theta + 1.0) * log_u - (1.0 / theta + m) * log1p_sum_expm1(&a);
                Ok(log_c.exp())
            }
            Family::Gaussian { chol, .. } => {
                let z: Vec<f64> = u.iter().map(|&x| normal::quantile(x)).collect();
                let e = self.forward_solve(chol, &z);
                let log_det_half: f64 = (0..self.dim).map(|i| chol[i * self.dim + i].ln()).sum();
                let quad: f64 =
                    e.iter().map(|v| v * v).sum::<f64>() - z.iter().map(|v| v * v).sum::<f64>();
                Ok((-log_det_half - 0.5 * quad).exp())
            }
        }
    }

    fn forward_solve(&self, chol: &[f64], z: &[f64]) -> Vec<f64> {
        let m = self.dim;
        let mut e = vec![0.0; m];
        for k in 0..m {
            let partial: f64 = (0..k).map(|i| chol[k * m + i] * e[i]).sum();
            e[k] = (z[k] - partial) / chol[k * m + k];
        }
        e
    }

    /// w_1 = u_1, w_k = C(u_k | u_1, …, u_{k−1}).
    pub fn rosenblatt_forward(&self, u: &UnitPoint) -> Result<UnitPoint> {
        self.check_point(u)?;
        let coords = u.coords();
        let w: Vec<f64> = match &self.family {
            Family::Independence => coords.to_vec(),
            Family::Comonotone => {
                return Err(GimpError::input(
                    "the comonotone copula has no forward Rosenblatt transform",
                ))
            }
            Family::Gaussian { chol, .. } => {
                let z: Vec<f64> = coords.iter().map(|&x| normal::quantile(x)).collect();
                self.forward_solve(chol, &z)
                    .into_iter()
                    .map(normal::cdf)
                    .collect()
            }
            Family::Clayton { theta } => {
                let theta = *theta;
                let mut w = Vec::with_capacity(self.dim);
                let mut log_prev = 0.0;
                let mut a = Vec::with_capacity(self.dim);
                for (k, &uk) in coords.iter().enumerate() {
                    let ak = -theta * uk.ln();
                    a.push(ak);
                    if k == 0 {
                        w.push(uk);
                        log_prev = log1p_sum_expm1(&a);
                        continue;
                    }
                    let log_cur = log1p_sum_expm1(&a);
                    let step = if ak < 700.0 {
                        (ak.exp_m1() * (-log_prev).exp()).ln_1p()
                    } else {
                        log_cur - log_prev
                    };
                    let exponent = 1.0 / theta + k as f64;
                    w.push((-exponent * step).exp());
                    log_prev = log_cur;
                }
                w
            }
        };
        if let Some((k, v)) = w.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GimpError::computation(format!(
                "conditional cdf at coordinate {k} is {v} for u = {coords:?}"
            )));
        }
        UnitPoint::new(w.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    /// Inverse Rosenblatt transform: maps independent uniforms to a point
    /// distributed according to the copula.
    pub fn rosenblatt_inverse(&self, w: &UnitPoint) -> Result<UnitPoint> {
        self.check_point(w)?;
        let mut out = vec![0.0; self.dim];
        self.inverse_into(w.coords(), &mut out);
        if let Some((k, v)) = out.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GimpError::computation(format!(
                "inverse conditional cdf at coordinate {k} is {v}"
            )));
        }
        UnitPoint::new(out)
    }

    fn inverse_into(&self, w: &[f64], out: &mut [f64]) {
        match &self.family {
            Family::Independence => out.copy_from_slice(w),
            Family::Comonotone => out.fill(clamp_unit(w[0])),
            Family::Gaussian { chol, .. } => {
                let m = self.dim;
                let e: Vec<f64> = w.iter().map(|&x| normal::quantile(clamp_unit(x))).collect();
                for k in 0..m {
                    let z: f64 = (0..=k).map(|i| chol[k * m + i] * e[i]).sum();
                    out[k] = clamp_unit(normal::cdf(z));
                }
            }
            Family::Clayton { theta } => {
                let theta = *theta;
                let mut a = Vec::with_capacity(self.dim);
                for (k, &wk) in w.iter().enumerate() {
                    let uk = if k == 0 {
                        clamp_unit(wk)
                    } else {
                        let log_prev = log1p_sum_expm1(&a);
                        let exponent = 1.0 / theta + k as f64;
                        // ln φ_k where φ_k = u_k^{-θ} − 1
                        let log_phi = log_prev + (-clamp_unit(wk).ln() / exponent).exp_m1().ln();
                        clamp_unit((-softplus(log_phi) / theta).exp())
                    };
                    a.push(-theta * uk.ln());
                    out[k] = uk;
                }
            }
        }
    }

    /// One draw from the copula.
    pub fn sample(&self, stream: &mut RngStream) -> UnitPoint {
        let mut out = vec![0.0; self.dim];
        self.sample_into(stream, &mut out);
        UnitPoint(out)
    }

    /// Allocation-free draw into `out` (length = dimension).
    pub fn sample_into(&self, stream: &mut RngStream, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match &self.family {
            Family::Independence => {
                for u in out.iter_mut() {
                    *u = clamp_unit(stream.uniform());
                }
            }
            Family::Comonotone => out.fill(clamp_unit(stream.uniform())),
            Family::Gaussian { chol, .. } => {
                let m = self.dim;
                let mut normals = [0.0f64; 16];
                let mut heap;
                let normals: &mut [f64] = if m <= 16 {
                    &mut normals[..m]
                } else {
                    heap = vec![0.0; m];
                    &mut heap
                };
                for n in normals.iter_mut() {
                    *n = StandardNormal.sample(stream);
                }
                for k in 0..m {
                    let z: f64 = (0..=k).map(|i| chol[k * m + i] * normals[i]).sum();
                    out[k] = clamp_unit(normal::cdf(z));
                }
            }
            Family::Clayton { theta } => {
                let theta = *theta;
                let frailty =
                    Gamma::new(1.0 / theta, 1.0).expect("clamped theta gives a valid gamma shape");
                let w: f64 = frailty.sample(stream);
                for u in out.iter_mut() {
                    let e = -stream.uniform().ln();
                    let value = if w > 0.0 {
                        (-(e / w).ln_1p() / theta).exp()
                    } else {
                        0.0
                    };
                    *u = clamp_unit(value);
                }
            }
        }
    }

    /// Population Kendall's tau between coordinates `i` and `j`.
    pub fn kendall_tau(&self, i: usize, j: usize) -> f64 {
        match &self.family {
            Family::Independence => 0.0,
            Family::Comonotone => 1.0,
            Family::Clayton { theta } => theta / (theta + 2.0),
            Family::Gaussian { corr, .. } => {
                2.0 / std::f64::consts::PI * corr[i * self.dim + j].asin()
            }
        }
    }
}
