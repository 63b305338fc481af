//! Robust market equilibria for linear Fisher and quasi-Fisher markets.
//!
//! Buyers' valuations are known only up to an uncertainty set; each buyer
//! evaluates a bundle by its worst case over that set. The crate computes
//! equilibria of the resulting Eisenberg-Gale program, certifies them through
//! the dual program, and measures envy, regret, welfare and revenue.

pub mod certify;
pub mod eg;
pub mod error;
pub mod market;
pub mod metrics;
pub mod projection;
pub mod sweep;
pub mod uncertainty;
mod vecops;

pub use error::{Error, Result};
pub use market::{
    generate_low_rank_market, load_market, parse_market, GeneratorConfig, Market, MarketKind,
    NominalValuations, ValidationReport,
};
pub use certify::{check_equilibrium, make_certificate, Certificate, Report, Tolerances};
pub use eg::{demand, eg_objective, solve, EquilibriumSolution, SolverMethod, SolverParams};
pub use metrics::{MetricsReport, RegretMode, WelfareMode};
pub use projection::Norm;
pub use sweep::{run_sweep, Grid, SweepConfig, SweepResult};
pub use uncertainty::{RobustUtilityResult, UncertaintyModel, UncertaintySpec};
