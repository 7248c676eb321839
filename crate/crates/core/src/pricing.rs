//! Multivariate payoffs and Monte Carlo pricing under the risk-neutral
//! dynamics.

use serde::{Deserialize, Serialize};

use crate::clock::TimeChangedModel;
use crate::error::{GimpError, Result};
use crate::marginal::Measure;
use crate::oracle::LatticeSpec;
use crate::pathset::{map_paths, PathModel};
use crate::process::GimpModel;
use crate::stats::mean_and_stderr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffKind {
    /// max(Σ w_j S^j − K, 0).
    BasketCall { weights: Vec<f64>, strike: f64 },
    /// notional · min_j S^j.
    Everest { notional: f64 },
    /// coupon if S^j ≥ threshold_j for every j.
    Altiplano { thresholds: Vec<f64>, coupon: f64 },
    /// max(max_j S^j − K, 0).
    BestOfCall { strike: f64 },
    /// max(min_j S^j − K, 0).
    WorstOfCall { strike: f64 },
    /// S^j.
    Identity { asset: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPayoff")]
pub struct PayoffSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: PayoffKind,
    pub maturity: usize,
}

/// Flat wire form of [`PayoffSpec`], so unknown keys can be rejected.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPayoff {
    name: Option<String>,
    kind: String,
    maturity: usize,
    weights: Option<Vec<f64>>,
    strike: Option<f64>,
    notional: Option<f64>,
    thresholds: Option<Vec<f64>>,
    coupon: Option<f64>,
    asset: Option<usize>,
}

impl TryFrom<RawPayoff> for PayoffSpec {
    type Error = String;

    fn try_from(raw: RawPayoff) -> std::result::Result<Self, String> {
        let kind_name = raw.kind.clone();
        let mut used: Vec<&str> = Vec::new();
        let mut need = |field: &'static str, present: bool| {
            used.push(field);
            if present {
                Ok(())
            } else {
                Err(format!(
                    "payoff kind `{kind_name}` requires field `{field}`"
                ))
            }
        };
        let kind = match raw.kind.as_str() {
            "basket_call" => {
                need("weights", raw.weights.is_some())?;
                need("strike", raw.strike.is_some())?;
                PayoffKind::BasketCall { weights: raw.weights.clone().unwrap_or_default(), strike: raw.strike.unwrap_or_default() }
            }
            "everest" => {
                need("notional", raw.notional.is_some())?;
                PayoffKind::Everest { notional: raw.notional.unwrap_or_default() }
            }
            "altiplano" => {
                need("thresholds", raw.thresholds.is_some())?;
                need("coupon", raw.coupon.is_some())?;
                PayoffKind::Altiplano {
                    thresholds: raw.thresholds.clone().unwrap_or_default(),
                    coupon: raw.coupon.unwrap_or_default(),
                }
            }
            "best_of_call" | "worst_of_call" => {
                need("strike", raw.strike.is_some())?;
                let strike = raw.strike.unwrap_or_default();
                if raw.kind == "best_of_call" {
                    PayoffKind::BestOfCall { strike }
                } else {
                    PayoffKind::WorstOfCall { strike }
                }
            }
            "identity" => {
                need("asset", raw.asset.is_some())?;
                PayoffKind::Identity { asset: raw.asset.unwrap_or_default() }
            }
            other => {
                return Err(format!(
                    "unknown payoff kind `{other}`, expected one of basket_call, everest, altiplano, best_of_call, worst_of_call, identity"
                ))
            }
        };
        let present = [
            ("weights", raw.weights.is_some()),
            ("strike", raw.strike.is_some()),
            ("notional", raw.notional.is_some()),
            ("thresholds", raw.thresholds.is_some()),
            ("coupon", raw.coupon.is_some()),
            ("asset", raw.asset.is_some()),
        ];
        if let Some((field, _)) = present.iter().find(|(f, p)| *p && !used.contains(f)) {
            return Err(format!(
                "field `{field}` does not apply to payoff kind `{}`",
                raw.kind
            ));
        }
        Ok(Self {
            name: raw.name,
            kind,
            maturity: raw.maturity,
        })
    }
}

impl PayoffSpec {
    pub fn new(kind: PayoffKind, maturity: usize) -> Self {
        Self {
            name: None,
            kind,
            maturity,
        }
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.kind.name().to_string())
    }

    /// Parameter checks that do not need the model.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GimpError::config(format!("payoff {}: {msg}", self.label())));
        match &self.kind {
            PayoffKind::BasketCall { weights, strike } => {
                if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                    return bad("basket weights must be nonnegative".into());
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return bad(format!("basket weights sum to {sum}, not 1"));
                }
                check_strike(*strike).or_else(bad)
            }
            PayoffKind::BestOfCall { strike } | PayoffKind::WorstOfCall { strike } => {
                check_strike(*strike).or_else(bad)
            }
            PayoffKind::Everest { notional } if !notional.is_finite() => {
                bad("notional must be finite".into())
            }
            PayoffKind::Altiplano { thresholds, coupon } => {
                if !coupon.is_finite() || thresholds.iter().any(|t| !t.is_finite()) {
                    return bad("coupon and thresholds must be finite".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn check_dim(&self, m: usize) -> Result<()> {
        let need = match &self.kind {
            PayoffKind::BasketCall { weights, .. } => Some(weights.len()),
            PayoffKind::Altiplano { thresholds, .. } => Some(thresholds.len()),
            PayoffKind::Identity { asset } if *asset >= m => {
                return Err(GimpError::input(format!(
                    "payoff refers to asset {asset} but there are {m} assets"
                )));
            }
            _ => None,
        };
        match need {
            Some(n) if n != m => Err(GimpError::input(format!(
                "payoff {} expects {n} assets, the model has {m}",
                self.label()
            ))),
            _ => Ok(()),
        }
    }
}

fn check_strike(strike: f64) -> std::result::Result<(), String> {
    if strike >= 0.0 && strike.is_finite() {
        Ok(())
    } else {
        Err(format!("strike must be nonnegative, got {strike}"))
    }
}

impl PayoffKind {
    pub fn name(&self) -> &'static str {
        match self {
            PayoffKind::BasketCall { .. } => "basket_call",
            PayoffKind::Everest { .. } => "everest",
            PayoffKind::Altiplano { .. } => "altiplano",
            PayoffKind::BestOfCall { .. } => "best_of_call",
            PayoffKind::WorstOfCall { .. } => "worst_of_call",
            PayoffKind::Identity { .. } => "identity",
        }
    }
}

fn min_max(prices: &[f64]) -> (f64, f64) {
    prices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        })
}

/// Payoff of `spec` at terminal prices `prices`.
pub fn payoff_eval(spec: &PayoffSpec, prices: &[f64]) -> Result<f64> {
    spec.check_dim(prices.len())?;
    Ok(eval_unchecked(&spec.kind, prices))
}

fn eval_unchecked(kind: &PayoffKind, s: &[f64]) -> f64 {
    match kind {
        PayoffKind::BasketCall { weights, strike } => {
            let basket: f64 = weights.iter().zip(s).map(|(w, x)| w * x).sum();
            (basket - strike).max(0.0)
        }
        PayoffKind::Everest { notional } => notional * min_max(s).0,
        PayoffKind::Altiplano { thresholds, coupon } => {
            if s.iter().zip(thresholds).all(|(x, t)| x >= t) {
                *coupon
            } else {
                0.0
            }
        }
        PayoffKind::BestOfCall { strike } => (min_max(s).1 - strike).max(0.0),
        PayoffKind::WorstOfCall { strike } => (min_max(s).0 - strike).max(0.0),
        PayoffKind::Identity { asset } => s[*asset],
    }
}

/// Monte Carlo price with its sampling error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceEstimate {
    pub payoff: String,
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub ci95: (f64, f64),
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    /// Per-step risk-free rate; nonzero values are an extension of the
    /// zero-rate setting.
    pub rate: f64,
    pub nonstandard_rate: bool,
}

impl PriceEstimate {
    fn from_samples(payoff: String, samples: &[f64], discount: f64, seed: u64, rate: f64) -> Self {
        let (mean, se) = mean_and_stderr(samples);
        let (value, stderr) = (discount * mean, discount * se);
        Self {
            payoff,
            value,
            stderr,
            n_paths: samples.len(),
            ci95: (value - 1.96 * stderr, value + 1.96 * stderr),
            seed,
            config_hash: None,
            rate,
            nonstandard_rate: rate != 0.0,
        }
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.config_hash = Some(hash.into());
        self
    }
}

/// A path model that can be priced: risk-neutral, with a known rate.
pub trait PricingModel: PathModel {
    fn measure(&self) -> Measure;

    fn rate(&self) -> f64 {
        0.0
    }
}

impl PricingModel for GimpModel {
    fn measure(&self) -> Measure {
        GimpModel::measure(self)
    }

    fn rate(&self) -> f64 {
        GimpModel::rate(self)
    }
}

impl PricingModel for TimeChangedModel {
    fn measure(&self) -> Measure {
        self.base().measure()
    }
}

impl PricingModel for LatticeSpec {
    fn measure(&self) -> Measure {
        if self.normalisation_errors().is_empty() {
            Measure::Q
        } else {
            Measure::P
        }
    }
}

fn check_model<M: PricingModel + ?Sized>(model: &M, payoffs: &[PayoffSpec]) -> Result<()> {
    if model.measure() != Measure::Q {
        return Err(GimpError::config(
            "pricing requires Q measure: the model is not a martingale model",
        ));
    }
    for p in payoffs {
        p.validate()?;
        p.check_dim(model.dim())?;
    }
    Ok(())
}

/// Price one payoff on `n_paths` paths.
pub fn price<M: PricingModel + ?Sized>(
    model: &M,
    payoff: &PayoffSpec,
    n_paths: usize,
    seed: u64,
) -> Result<PriceEstimate> {
    Ok(price_many(model, std::slice::from_ref(payoff), n_paths, seed)?.remove(0))
}

/// Price several payoffs on one common set of paths.
pub fn price_many<M: PricingModel + ?Sized>(
    model: &M,
    payoffs: &[PayoffSpec],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PriceEstimate>> {
    check_model(model, payoffs)?;
    if n_paths == 0 {
        return Err(GimpError::input("n_paths must be at least 1"));
    }
    if payoffs.is_empty() {
        return Ok(Vec::new());
    }
    let horizon = payoffs.iter().map(|p| p.maturity).max().unwrap_or(0);
    let m = model.dim();
    let rows = map_paths(model, n_paths, horizon, seed, |_, buf| {
        let mut prices = vec![0.0; m];
        payoffs
            .iter()
            .map(|p| {
                for (s, x) in prices.iter_mut().zip(buf.row(p.maturity, m)) {
                    *s = x.exp();
                }
                eval_unchecked(&p.kind, &prices)
            })
            .collect::<Vec<f64>>()
    })?;
    let rate = model.rate();
    Ok(payoffs
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let samples: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let discount = (-rate * p.maturity as f64).exp();
            PriceEstimate::from_samples(p.label(), &samples, discount, seed, rate)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ClockSpec;
    use crate::copula::CopulaSpec;
    use crate::marginal::{GarchParams, InitialVariance};
    use crate::oracle::fixtures;
    use crate::process::GarchAsset;

    fn model(theta: f64) -> GimpModel {
        let params = GarchParams::new(2e-5, 0.85, 0.1, 0.0, InitialVariance::Stationary).unwrap();
        GimpModel::garch(
            vec![GarchAsset { params, s0: 1.0 }; 2],
            CopulaSpec::clayton(2, theta).unwrap(),
        )
        .unwrap()
    }

    fn spec(kind: PayoffKind) -> PayoffSpec {
        PayoffSpec::new(kind, 10)
    }

    #[test]
    fn payoff_examples() {
        let basket = spec(PayoffKind::BasketCall {
            weights: vec![0.5, 0.5],
            strike: 1.0,
        });
        assert_eq!(payoff_eval(&basket, &[1.2, 0.8]).unwrap(), 0.0);
        assert_eq!(
            payoff_eval(
                &spec(PayoffKind::Everest { notional: 1.0 }),
                &[1.3, 0.7, 1.1]
            )
            .unwrap(),
            0.7
        );
        let alti = spec(PayoffKind::Altiplano {
            thresholds: vec![1.0, 1.0],
            coupon: 5.0,
        });
        assert_eq!(payoff_eval(&alti, &[1.01, 0.99]).unwrap(), 0.0);
        assert_eq!(payoff_eval(&alti, &[1.01, 1.0]).unwrap(), 5.0);
        assert_eq!(
            payoff_eval(&spec(PayoffKind::BestOfCall { strike: 1.0 }), &[1.3, 0.7]).unwrap(),
            0.30000000000000004
        );
        assert_eq!(
            payoff_eval(&spec(PayoffKind::WorstOfCall { strike: 0.5 }), &[1.3, 0.7]).unwrap(),
            0.19999999999999996
        );
        assert_eq!(
            payoff_eval(&spec(PayoffKind::Identity { asset: 1 }), &[1.3, 0.7]).unwrap(),
            0.7
        );
        assert!(payoff_eval(&basket, &[1.0, 1.0, 1.0]).is_err());
        assert!(payoff_eval(&spec(PayoffKind::Identity { asset: 2 }), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn payoff_validation() {
        assert!(spec(PayoffKind::BasketCall {
            weights: vec![0.7, 0.7],
            strike: 1.0
        })
        .validate()
        .is_err());
        assert!(spec(PayoffKind::BasketCall {
            weights: vec![1.5, -0.5],
            strike: 1.0
        })
        .validate()
        .is_err());
        assert!(spec(PayoffKind::BestOfCall { strike: -1.0 })
            .validate()
            .is_err());
    }

    #[test]
    fn payoff_json_shape() {
        let p: PayoffSpec =
            serde_json::from_str(r#"{"kind": "everest", "notional": 1.0, "maturity": 10}"#)
                .unwrap();
        assert_eq!(p, spec(PayoffKind::Everest { notional: 1.0 }));
        assert!(serde_json::from_str::<PayoffSpec>(
            r#"{"kind": "everest", "notional": 1.0, "maturity": 10, "x": 1}"#
        )
        .is_err());
        assert!(serde_json::from_str::<PayoffSpec>(
            r#"{"kind": "everest", "strike": 1.0, "notional": 1.0, "maturity": 1}"#
        )
        .is_err());
        assert!(serde_json::from_str::<PayoffSpec>(
            r#"{"kind": "basket_call", "strike": 1.0, "maturity": 1}"#
        )
        .is_err());
        let named = PayoffSpec {
            name: Some("b".into()),
            ..spec(PayoffKind::BasketCall {
                weights: vec![0.5, 0.5],
                strike: 1.0,
            })
        };
        let text = serde_json::to_string(&named).unwrap();
        assert_eq!(serde_json::from_str::<PayoffSpec>(&text).unwrap(), named);
    }

    #[test]
    fn constant_payoff_prices_exactly() {
        let constant = spec(PayoffKind::Altiplano {
            thresholds: vec![0.0, 0.0],
            coupon: 1.0,
        });
        let est = price(&model(2.0), &constant, 10_000, 3).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.ci95, (1.0, 1.0));
    }

    #[test]
    fn identity_prices_to_s0() {
        let est = price(
            &model(2.0),
            &spec(PayoffKind::Identity { asset: 0 }),
            50_000,
            4,
        )
        .unwrap();
        assert!((est.value - 1.0).abs() < 4.0 * est.stderr, "{est:?}");
        let tc =
            TimeChangedModel::new(model(2.0), ClockSpec::poisson(vec![1.0, 1.0]).unwrap()).unwrap();
        let est = price(&tc, &spec(PayoffKind::Identity { asset: 1 }), 50_000, 4).unwrap();
        assert!((est.value - 1.0).abs() < 4.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn p_measure_is_refused() {
        let m = model(2.0).with_measure(Measure::P);
        let err = price(&m, &spec(PayoffKind::Identity { asset: 0 }), 10, 1).unwrap_err();
        assert!(err.to_string().contains("Q measure"));
    }

    #[test]
    fn rate_discounts_and_is_flagged() {
        let m = model(2.0).with_rate(0.001).unwrap();
        let est = price(&m, &spec(PayoffKind::Identity { asset: 0 }), 50_000, 5).unwrap();
        assert!(est.nonstandard_rate);
        assert!((est.value - 1.0).abs() < 4.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn static_bounds_with_common_numbers() {
        let m = model(1.0);
        for k in [0.9, 1.0, 1.1] {
            let est = price_many(
                &m,
                &[
                    spec(PayoffKind::BestOfCall { strike: k }),
                    spec(PayoffKind::BasketCall {
                        weights: vec![0.5, 0.5],
                        strike: k,
                    }),
                    spec(PayoffKind::WorstOfCall { strike: k }),
                ],
                20_000,
                6,
            )
            .unwrap();
            assert!(est[0].value >= est[1].value && est[1].value >= est[2].value);
        }
        let basket: Vec<f64> = [0.8, 0.9, 1.0, 1.1, 1.2]
            .iter()
            .map(|k| {
                price(
                    &m,
                    &spec(PayoffKind::BasketCall {
                        weights: vec![0.5, 0.5],
                        strike: *k,
                    }),
                    20_000,
                    6,
                )
                .unwrap()
                .value
            })
            .collect();
        assert!(basket.windows(2).all(|w| w[0] >= w[1]), "{basket:?}");
    }

    #[test]
    fn everest_grows_with_dependence() {
        let everest = spec(PayoffKind::Everest { notional: 1.0 });
        let prices: Vec<PriceEstimate> = [0.1, 1.0, 5.0]
            .iter()
            .map(|t| price(&model(*t), &everest, 20_000, 8).unwrap())
            .collect();
        assert!(
            prices.windows(2).all(|w| w[0].value < w[1].value),
            "{prices:?}"
        );
        assert!(prices[2].value <= 1.0 + 4.0 * prices[2].stderr);
    }

    #[test]
    fn lattice_monte_carlo_matches_enumeration() {
        for kappa in [-0.5, 0.0, 1.0] {
            let lattice = fixtures::two_asset(kappa);
            let everest = PayoffSpec::new(PayoffKind::Everest { notional: 1.0 }, 3);
            let exact = lattice.exact_expectation(3, |s| s[0].min(s[1])).unwrap();
            let est = price(&lattice, &everest, 100_000, 9).unwrap();
            assert!(
                (est.value - exact).abs() < 4.0 * est.stderr,
                "kappa {kappa}: {} vs {exact}",
                est.value
            );
        }
    }

    #[test]
    fn worker_count_does_not_change_prices() {
        let m = model(2.0);
        let everest = spec(PayoffKind::Everest { notional: 1.0 });
        let a = crate::pathset::with_workers(Some(1), || price(&m, &everest, 5_000, 2))
            .unwrap()
            .unwrap();
        let b = crate::pathset::with_workers(Some(8), || price(&m, &everest, 5_000, 2))
            .unwrap()
            .unwrap();
        assert_eq!(a, b);
    }
}
