//! Univariate GARCH(1,1) log-return dynamics under the objective measure P
//! and the risk-neutral measure Q.
//!
//! The increment over `(t − 1, t]` is conditionally normal,
//!
//! ```text
//! P:  Y_t = μ − H_t²/2 + H_t Z_t
//! Q:  Y_t =   − H_t²/2 + H_t Z_t
//! H_t² = ω₀ + ω₁ H_{t−1}² + ω₂ Y_{t−1}²
//! ```
//!
//! so `e^{Y_t}` has conditional mean `e^μ` under P and exactly one under Q.
//! [`MarginalState::h2`] always holds the variance of the *next* increment.

use crate::error::{GimpError, Result};
use crate::stats::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    P,
    Q,
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Measure::P => f.write_str("P"),
            Measure::Q => f.write_str("Q"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialVariance {
    Stationary,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    pub omega0: f64,
    pub omega1: f64,
    pub omega2: f64,
    /// Per-step drift under P.
    pub mu: f64,
    pub h2_init: InitialVariance,
}

impl GarchParams {
    pub fn new(
        omega0: f64,
        omega1: f64,
        omega2: f64,
        mu: f64,
        h2_init: InitialVariance,
    ) -> Result<Self> {
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(GimpError::config(format!(
                "omega0 must be positive, got {omega0}"
            )));
        }
        if !(omega1 >= 0.0 && omega2 >= 0.0) {
            return Err(GimpError::config(format!(
                "omega1 and omega2 must be nonnegative, got {omega1}, {omega2}"
            )));
        }
        if !(omega1 + omega2 < 1.0) {
            return Err(GimpError::config(format!(
                "omega1 + omega2 must be below 1 for a stationary variance, got {}",
                omega1 + omega2
            )));
        }
        if !mu.is_finite() {
            return Err(GimpError::config("mu must be finite"));
        }
        if let InitialVariance::Value(v) = h2_init {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GimpError::config(format!(
                    "h2_init must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            omega0,
            omega1,
            omega2,
            mu,
            h2_init,
        })
    }

    /// ω₀ / (1 − ω₁ − ω₂).
    pub fn stationary_variance(&self) -> f64 {
        self.omega0 / (1.0 - self.omega1 - self.omega2)
    }

    pub fn initial_variance(&self) -> f64 {
        match self.h2_init {
            InitialVariance::Stationary => self.stationary_variance(),
            InitialVariance::Value(v) => v,
        }
    }

    pub fn initial_state(&self, log_price: f64) -> MarginalState {
        MarginalState {
            x: log_price,
            h2: self.initial_variance(),
            y_prev: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalState {
    /// Log-price X_t.
    pub x: f64,
    /// Conditional variance of the next increment.
    pub h2: f64,
    /// Last realised increment.
    pub y_prev: f64,
}

/// ω₀ + ω₁·h2 + ω₂·y_prev².
pub fn variance_update(params: &GarchParams, state: &MarginalState) -> f64 {
    params.omega0 + params.omega1 * state.h2 + params.omega2 * state.y_prev * state.y_prev
}

/// Normal law of one increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalLaw {
    pub mean: f64,
    pub var: f64,
}

impl NormalLaw {
    /// Risk-neutral law with variance `h2` and drift `rate`: N(rate − h2/2, h2).
    pub fn risk_neutral(h2: f64, rate: f64) -> Self {
        Self {
            mean: rate - 0.5 * h2,
            var: h2,
        }
    }

    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        normal::cdf((y - self.mean) / self.sd())
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.mean + self.sd() * normal::quantile(p)
    }

    /// E[e^Y] = exp(mean + var/2); exactly one for the zero-rate Q law.
    pub fn exp_mean(&self) -> f64 {
        (self.mean + 0.5 * self.var).exp()
    }
}

/// Conditional law of the next increment. `rate` is the constant risk-free
/// rate added to the Q drift (zero in the standard setting); it is ignored
/// under P.
pub fn conditional_law(
    measure: Measure,
    params: &GarchParams,
    state: &MarginalState,
    rate: f64,
) -> NormalLaw {
    match measure {
        Measure::P => NormalLaw {
            mean: params.mu - 0.5 * state.h2,
            var: state.h2,
        },
        Measure::Q => NormalLaw::risk_neutral(state.h2, rate),
    }
}

/// F(y) under P or G(y) under Q.
pub fn conditional_cdf(
    measure: Measure,
    params: &GarchParams,
    state: &MarginalState,
    y: f64,
) -> f64 {
    conditional_law(measure, params, state, 0.0).cdf(y)
}

/// Inverse of [`conditional_cdf`] for p in (0, 1).
pub fn conditional_quantile(
    measure: Measure,
    params: &GarchParams,
    state: &MarginalState,
    p: f64,
) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(GimpError::input(format!(
            "probability {p} is outside (0, 1)"
        )));
    }
    Ok(conditional_law(measure, params, state, 0.0).quantile(p))
}

/// E[e^{Y_t} | state]: one under Q, e^μ under P.
pub fn martingale_factor(measure: Measure, params: &GarchParams, state: &MarginalState) -> f64 {
    conditional_law(measure, params, state, 0.0).exp_mean()
}

/// State after observing increment `y`.
pub fn advance(params: &GarchParams, state: &MarginalState, y: f64) -> MarginalState {
    let realised = MarginalState {
        x: state.x + y,
        h2: state.h2,
        y_prev: y,
    };
    MarginalState {
        h2: variance_update(params, &realised),
        ..realised
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Domain, RngStream};
    use crate::stats::mean_and_stderr;
    use proptest::prelude::*;

    fn params(o0: f64, o1: f64, o2: f64, mu: f64) -> GarchParams {
        GarchParams::new(o0, o1, o2, mu, InitialVariance::Stationary).unwrap()
    }

    fn state(h2: f64) -> MarginalState {
        MarginalState {
            x: 0.0,
            h2,
            y_prev: 0.0,
        }
    }

    #[test]
    fn variance_update_examples() {
        let p = params(1e-6, 0.9, 0.05, 0.0);
        let v = variance_update(
            &p,
            &MarginalState {
                x: 0.0,
                h2: 1e-4,
                y_prev: 0.01,
            },
        );
        assert!((v - 9.6e-5).abs() < 1e-18);

        let flat = params(1e-6, 0.0, 0.0, 0.0);
        assert_eq!(
            variance_update(
                &flat,
                &MarginalState {
                    x: 3.0,
                    h2: 0.7,
                    y_prev: -0.4
                }
            ),
            1e-6
        );

        let p = params(0.04, 0.85, 0.10, 0.0);
        let stationary = p.stationary_variance();
        assert!((stationary - 0.8).abs() < 1e-15);
        let fixed = variance_update(
            &p,
            &MarginalState {
                x: 0.0,
                h2: 0.8,
                y_prev: 0.8f64.sqrt(),
            },
        );
        assert!((fixed - 0.8).abs() < 1e-15);
    }

    #[test]
    fn conditional_cdf_examples() {
        let p = params(1e-6, 0.9, 0.05, 0.0);
        for h2 in [1e-4, 0.01, 0.3] {
            assert!((conditional_cdf(Measure::Q, &p, &state(h2), -h2 / 2.0) - 0.5).abs() < 1e-15);
            assert!((conditional_cdf(Measure::P, &p, &state(h2), -h2 / 2.0) - 0.5).abs() < 1e-15);
        }
        let v = conditional_cdf(Measure::Q, &p, &state(0.01), 0.095);
        assert!((v - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn conditional_quantile_examples() {
        let p = params(1e-6, 0.9, 0.05, 0.0);
        let s = state(0.01);
        assert!((conditional_quantile(Measure::Q, &p, &s, 0.5).unwrap() + 0.005).abs() < 1e-15);
        let y = conditional_quantile(Measure::Q, &p, &s, 0.841_345).unwrap();
        assert!((y - 0.095).abs() < 1e-5);
        // 30-digit reference: 0.1·Φ⁻¹(0.841345) − 0.005
        assert!((y - 0.095_000_104_943_104_5).abs() < 1e-12);
        let drift = params(1e-6, 0.9, 0.05, 0.001);
        let y = conditional_quantile(Measure::P, &drift, &s, 0.5).unwrap();
        assert!((y + 0.004).abs() < 1e-15);
        assert!(conditional_quantile(Measure::Q, &p, &s, 1.0).is_err());
        assert!(conditional_quantile(Measure::Q, &p, &s, 0.0).is_err());
    }

    #[test]
    fn martingale_factor_examples() {
        let p = params(1e-6, 0.9, 0.05, 0.0);
        for h2 in [1e-8, 1e-4, 0.04, 2.5] {
            assert_eq!(martingale_factor(Measure::Q, &p, &state(h2)), 1.0);
            assert_eq!(martingale_factor(Measure::P, &p, &state(h2)), 1.0);
        }
        let drift = params(1e-6, 0.9, 0.05, 0.002);
        let f = martingale_factor(Measure::P, &drift, &state(0.01));
        assert!((f - 0.002f64.exp()).abs() < 1e-15);
        assert!((f - 1.002_002).abs() < 1e-6);
    }

    #[test]
    fn parameter_validation() {
        assert!(GarchParams::new(0.0, 0.1, 0.1, 0.0, InitialVariance::Stationary).is_err());
        assert!(GarchParams::new(1e-6, -0.1, 0.1, 0.0, InitialVariance::Stationary).is_err());
        assert!(GarchParams::new(1e-6, 0.5, 0.5, 0.0, InitialVariance::Stationary).is_err());
        assert!(GarchParams::new(1e-6, 0.5, 0.4, 0.0, InitialVariance::Value(-1.0)).is_err());
        let p = GarchParams::new(1e-6, 0.5, 0.4, 0.0, InitialVariance::Value(3e-4)).unwrap();
        assert_eq!(
            p.initial_state(0.1),
            MarginalState {
                x: 0.1,
                h2: 3e-4,
                y_prev: 0.0
            }
        );
    }

    #[test]
    fn variance_iteration_converges_to_stationary_level() {
        let p = params(2e-6, 0.9, 0.08, 0.0);
        let mut h2 = 1e-2;
        let mut iterations = 0;
        while (h2 - p.stationary_variance()).abs() >= 1e-10 {
            // y_prev² replaced by its conditional mean h2
            h2 = p.omega0 + (p.omega1 + p.omega2) * h2;
            iterations += 1;
            assert!(iterations <= 10_000);
        }
    }

    #[test]
    fn exp_increment_mean_is_one_by_simulation() {
        let p = params(1e-5, 0.85, 0.1, 0.0);
        let mut stream = RngStream::sequential(17, Domain::Auxiliary, 0);
        for h2 in [1e-4, 0.04] {
            let s = state(h2);
            let draws: Vec<f64> = (0..1_000_000)
                .map(|_| {
                    conditional_quantile(Measure::Q, &p, &s, stream.uniform())
                        .unwrap()
                        .exp()
                })
                .collect();
            let (mean, se) = mean_and_stderr(&draws);
            assert!((mean - 1.0).abs() < 4.0 * se, "h2={h2}: {mean} ± {se}");
        }
    }

    #[test]
    fn univariate_price_is_a_martingale() {
        let p = params(2e-5, 0.88, 0.09, 0.0);
        let terminal: Vec<f64> = (0..100_000u64)
            .map(|path| {
                let mut s = p.initial_state(0.0);
                for step in 0..50 {
                    let u = RngStream::at(23, Domain::Auxiliary, path, step).uniform();
                    let y = conditional_quantile(Measure::Q, &p, &s, u).unwrap();
                    s = advance(&p, &s, y);
                }
                s.x.exp()
            })
            .collect();
        let (mean, se) = mean_and_stderr(&terminal);
        assert!((mean - 1.0).abs() < 4.0 * se, "{mean} ± {se}");
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(h2 in 1e-6f64..1.0, mu in -0.01f64..0.01, y in -3.0f64..3.0, q in any::<bool>()) {
            let p = params(1e-6, 0.5, 0.2, mu);
            let s = state(h2);
            let measure = if q { Measure::Q } else { Measure::P };
            let law = conditional_law(measure, &p, &s, 0.0);
            // beyond |z| = 5 the upper tail of a double cannot resolve 1e-8 in y
            prop_assume!(((y - law.mean) / law.sd()).abs() <= 5.0);
            let prob = conditional_cdf(measure, &p, &s, y);
            let back = conditional_quantile(measure, &p, &s, prob).unwrap();
            prop_assert!((back - y).abs() < 1e-8,
                "y={} back={}", y, back);
        }

        #[test]
        fn variance_never_below_intercept(
            o0 in 1e-8f64..1e-2, o1 in 0.0f64..0.6, o2 in 0.0f64..0.39,
            h2 in 1e-8f64..1.0, y in -1.0f64..1.0,
        ) {
            let p = params(o0, o1, o2, 0.0);
            let next = advance(&p, &state(h2), y);
            prop_assert!(next.h2 >= o0);
        }
    }
}
