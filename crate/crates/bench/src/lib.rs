//! Models shared by the benchmarks.

use gimp_core::copula::CopulaSpec;
use gimp_core::marginal::{GarchParams, InitialVariance};
use gimp_core::process::{GarchAsset, GimpModel};

/// m identical GARCH assets coupled by a Clayton copula.
pub fn garch_clayton(m: usize, theta: f64) -> GimpModel {
    let params = GarchParams::new(1e-5, 0.85, 0.1, 0.0, InitialVariance::Stationary)
        .expect("valid parameters");
    let asset = GarchAsset { params, s0: 1.0 };
    GimpModel::garch(
        vec![asset; m],
        CopulaSpec::clayton(m, theta).expect("valid copula"),
    )
    .expect("valid model")
}
