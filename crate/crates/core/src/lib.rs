//! Simulation, time change, pricing and exact verification for
//! copula-coupled GARCH martingale models.

#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity
)]
pub mod clock;
pub mod copula;
pub mod diagnostics;
pub mod error;
pub mod marginal;
pub mod oracle;
pub mod pathset;
pub mod pricing;
pub mod process;
pub mod rng;
pub mod stats;

pub use clock::{ClockFamily, ClockSpec, TimeChangedModel};
pub use copula::{CopulaSpec, StateMap, UnitPoint};
pub use diagnostics::TestReport;
pub use error::{GimpError, Result};
pub use marginal::{GarchParams, InitialVariance, MarginalState, Measure};
pub use oracle::{EnumerationReport, LatticeSpec};
pub use pathset::{PathModel, PathSet};
pub use pricing::{PayoffKind, PayoffSpec, PriceEstimate};
pub use process::{GarchAsset, GimpModel, IidMarginal};
