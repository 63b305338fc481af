//! Equilibrium computation through the Eisenberg-Gale program
//!
//! ```text
//! max  Σ_i b_i log(t_i) − Q·r_i
//! s.t. t_i <= u_i(x_i) + Q·r_i,  Σ_i x_ij <= 1,  x >= 0,  r >= 0
//! ```
//!
//! with robust utilities `u_i`, plus the robust demand correspondence at
//! fixed prices.

mod demand;
mod saddle;
mod subgradient;

use serde::{Deserialize, Serialize};

use crate::certify::dual_objective;
use crate::error::{Error, Result};
use crate::market::{Market, MarketKind};
use crate::projection::project_capped_simplex;
use crate::uncertainty::{RobustUtilityResult, UncertaintyModel, DEFAULT_TOL};
use crate::vecops::dot;

pub use demand::{demand, DemandResult};

/// Floor applied to `t_i` inside logarithms.
pub const T_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Restarted primal-dual hybrid gradient on the saddle function.
    PrimalDual,
    /// Projected supergradient ascent on `(X, r)` with `c/√k` steps.
    ProjectedSupergradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub max_iters: usize,
    /// Step constant `c` of the supergradient method; scaled by the
    /// initial supergradient norm.
    pub step: f64,
    /// Robust-utility bracket tolerance used inside the iterations.
    pub utility_tol: f64,
    /// Relative duality gap at which the solver stops.
    pub stop_gap: f64,
    pub seed: u64,
    /// Average iterates of the supergradient method.
    pub averaging: bool,
    pub method: SolverMethod,
    /// Iterations between duality-gap checks.
    pub check_every: usize,
    /// Pick the least-norm equilibrium prices after the primal-dual method
    /// converges.
    #[serde(default = "default_true")]
    pub select_prices: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            max_iters: 20_000,
            step: 1.0,
            utility_tol: 1e-9,
            stop_gap: 1e-7,
            seed: 0,
            averaging: false,
            method: SolverMethod::PrimalDual,
            check_every: 128,
            select_prices: true,
        }
    }
}

impl SolverParams {
    pub fn check(&self) -> Result<()> {
        if self.max_iters == 0 || self.check_every == 0 {
            return Err(Error::InvalidParameter(
                "max_iters and check_every must be at least 1".into(),
            ));
        }
        for (name, value) in [
            ("step", self.step),
            ("utility_tol", self.utility_tol),
            ("stop_gap", self.stop_gap),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

/// Candidate equilibrium with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub kind: MarketKind,
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub beta: Vec<f64>,
    pub worst_v: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    pub t: Vec<f64>,
    /// Per buyer a vector `y_i` whose dual value `D_i(y_i)` at `x_i` bounds
    /// `u_i(x_i)` from below; empty when the method produces none.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub utility_duals: Vec<Vec<f64>>,
    pub objective: f64,
    /// Certified relative duality gap, once certified.
    pub gap: Option<f64>,
    pub converged: bool,
    pub iters: usize,
}

impl EquilibriumSolution {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn m(&self) -> usize {
        self.p.len()
    }

    pub fn spend(&self, buyer: usize) -> f64 {
        dot(&self.p, &self.x[buyer])
    }

    pub fn column_sum(&self, good: usize) -> f64 {
        self.x.iter().map(|row| row[good]).sum()
    }
}

pub fn solve(
    market: &Market,
    model: &UncertaintyModel,
    kind: MarketKind,
    params: &SolverParams,
) -> Result<EquilibriumSolution> {
    params.check()?;
    if model.n() != market.n() || model.m() != market.m() {
        return Err(Error::Dimension(format!(
            "model is {} x {}, market is {} x {}",
            model.n(),
            model.m(),
            market.n(),
            market.m()
        )));
    }
    match params.method {
        SolverMethod::PrimalDual => saddle::solve(market, model, kind, params),
        SolverMethod::ProjectedSupergradient => subgradient::solve(market, model, kind, params),
    }
}

/// `Σ b_i log(u_i(x_i) + Q r_i) − Q Σ r_i` with bracket midpoints.
pub fn eg_objective(
    market: &Market,
    x: &[Vec<f64>],
    r: &[f64],
    kind: MarketKind,
    model: &UncertaintyModel,
) -> Result<f64> {
    check_shape(market, x, r)?;
    let q = kind.q();
    let mut total = 0.0;
    for (i, (row, &ri)) in x.iter().zip(r).enumerate() {
        let u = model.robust_utility(i, row, DEFAULT_TOL)?.value;
        let arg = u + q * ri;
        if !(arg > 0.0) {
            return Err(Error::Domain { buyer: i, value: arg });
        }
        total += market.budgets()[i] * arg.ln() - q * ri;
    }
    Ok(total)
}

pub(crate) fn check_shape(market: &Market, x: &[Vec<f64>], r: &[f64]) -> Result<()> {
    if x.len() != market.n() || r.len() != market.n() || x.iter().any(|row| row.len() != market.m())
    {
        return Err(Error::Dimension(format!(
            "allocation must be {} x {} with {} retained budgets",
            market.n(),
            market.m(),
            market.n()
        )));
    }
    Ok(())
}

/// Euclidean projection of one good's allocation column onto
/// `{y >= 0, Σ y <= cap}`.
pub fn project_column_capped_simplex(y: &[f64], cap: f64) -> Vec<f64> {
    project_capped_simplex(y, cap)
}

/// Dual point implied by primal utilities and witnesses: `β_i = b_i/t_i`
/// (at most one in quasi markets) and `p_j = max_i β_i v_ij`.
pub(crate) fn recover_prices(
    budgets: &[f64],
    t: &[f64],
    witnesses: &[Vec<f64>],
    kind: MarketKind,
) -> (Vec<f64>, Vec<f64>) {
    let beta: Vec<f64> = budgets
        .iter()
        .zip(t)
        .map(|(b, ti)| {
            let beta = b / ti.max(T_FLOOR);
            if kind.is_quasi() {
                beta.min(1.0)
            } else {
                beta
            }
        })
        .collect();
    let m = witnesses.first().map_or(0, Vec::len);
    let p = (0..m)
        .map(|j| {
            witnesses
                .iter()
                .zip(&beta)
                .map(|(v, bi)| bi * v[j])
                .fold(0.0, f64::max)
        })
        .collect();
    (beta, p)
}

pub(crate) struct Snapshot {
    pub gap: f64,
    pub solution: EquilibriumSolution,
}

/// Primal point, recovered dual point and their relative gap.
pub(crate) fn snapshot(
    market: &Market,
    kind: MarketKind,
    x: &[Vec<f64>],
    r: Vec<f64>,
    evals: &[RobustUtilityResult],
    utility_duals: Vec<Vec<f64>>,
    iters: usize,
) -> Snapshot {
    let budgets = market.budgets();
    let q = kind.q();
    let t: Vec<f64> = evals
        .iter()
        .zip(&r)
        .map(|(e, ri)| (e.lower_bound + q * ri).max(T_FLOOR))
        .collect();
    let witnesses: Vec<Vec<f64>> = evals.iter().map(|e| e.worst_v.clone()).collect();
    let (beta, p) = recover_prices(budgets, &t, &witnesses, kind);
    let objective: f64 = budgets
        .iter()
        .zip(&t)
        .zip(&r)
        .map(|((b, ti), ri)| b * ti.ln() - q * ri)
        .sum();
    let dual = dual_objective(&p, &beta, budgets).unwrap_or(f64::INFINITY);
    let gap = (dual - objective) / objective.abs().max(1.0);
    Snapshot {
        gap,
        solution: EquilibriumSolution {
            kind,
            x: x.to_vec(),
            p,
            beta,
            worst_v: witnesses,
            r,
            t,
            utility_duals,
            objective,
            gap: None,
            converged: false,
            iters,
        },
    }
}
