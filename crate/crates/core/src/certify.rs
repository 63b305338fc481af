//! Certification of candidate equilibria through the dual program
//!
//! ```text
//! min  p·1 − Σ_i (b_i + b_i log(β_i / b_i))
//! s.t. p >= β_i v_i,  v_i ∈ V_i,  (β_i <= 1 when Q = 1)
//! ```
//!
//! Any feasible dual point bounds the Eisenberg-Gale optimum from above, so
//! `dual − primal` is a certified optimality gap.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::eg::{check_shape, EquilibriumSolution};
use crate::error::{Error, Result};
use crate::market::{Market, MarketKind};
use crate::uncertainty::UncertaintyModel;
use crate::vecops::dot;

/// Bracket tolerance for the utility evaluations done while certifying.
pub const CERTIFY_UTILITY_TOL: f64 = 1e-10;

/// Thresholds for the equilibrium report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative duality gap.
    pub gap: f64,
    /// `|Σ_i x_ij − 1|` for goods priced above `price`.
    pub clearing: f64,
    /// Relative spread of `v_ij / p_j` over purchased goods.
    pub bang_per_buck: f64,
    /// `β_i <= 1 + pacing` and no pacing below one when money is left over.
    pub pacing: f64,
    /// Relative budget exhaustion `|p·x_i − b_i| / b_i` (Fisher) and
    /// retained-budget consistency (quasi).
    pub budget: f64,
    /// Allocations at or below this are treated as unpurchased.
    pub allocation: f64,
    /// Prices at or below this are treated as zero.
    pub price: f64,
    /// Primal feasibility of `X` and witness membership.
    pub feasibility: f64,
    /// Violation of `p >= β_i v_i`.
    pub dual_feasibility: f64,
    /// Witness optimality and utility consistency, relative to the utility.
    pub utility: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gap: 1e-3,
            clearing: 1e-4,
            bang_per_buck: 1e-3,
            pacing: 1e-4,
            budget: 1e-4,
            allocation: 1e-4,
            price: 1e-6,
            feasibility: 1e-8,
            dual_feasibility: 1e-6,
            utility: 1e-4,
        }
    }
}

impl Tolerances {
    /// Every equilibrium-condition threshold set to `tol`; the support
    /// cut-offs (allocation, price) and feasibility keep their defaults.
    pub fn uniform(tol: f64) -> Self {
        Tolerances {
            gap: tol,
            clearing: tol,
            bang_per_buck: tol,
            pacing: tol,
            budget: tol,
            dual_feasibility: tol,
            utility: tol,
            ..Tolerances::default()
        }
    }
}

/// One named condition with its measured magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub magnitude: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckLine {
    fn new(name: &str, magnitude: f64, threshold: f64) -> Self {
        CheckLine {
            name: name.to_string(),
            magnitude,
            threshold,
            passed: magnitude <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub lines: Vec<CheckLine>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn line(&self, name: &str) -> Option<&CheckLine> {
        self.lines.iter().find(|l| l.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckLine> {
        self.lines.iter().filter(|l| !l.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.lines.iter().map(|l| l.name.len()).max().unwrap_or(0);
        for l in &self.lines {
            writeln!(
                f,
                "{:<width$}  {:>12.4e}  <= {:<10.1e} {}",
                l.name,
                l.magnitude,
                l.threshold,
                if l.passed { "pass" } else { "FAIL" },
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub dual_objective: f64,
    pub primal_objective: f64,
    pub relative_gap: f64,
    /// Per buyer `max_j (β_i v_ij − p_j)_+` before repair.
    pub dual_feasibility_residuals: Vec<f64>,
    /// `max_i (β_i − 1)_+` in quasi markets, zero otherwise.
    pub quasi_residual: f64,
    /// Uniform amount added to every price to restore dual feasibility.
    pub price_lift: f64,
    /// Per buyer `b_i/β_i − (u_i(x_i) + Q r_i)`.
    pub headroom: Vec<f64>,
    pub report: Report,
}

/// `p·1 − Σ_i (b_i + b_i log(β_i / b_i))`.
pub fn dual_objective(p: &[f64], beta: &[f64], budgets: &[f64]) -> Result<f64> {
    if beta.len() != budgets.len() {
        return Err(Error::Dimension(format!(
            "{} multipliers for {} buyers",
            beta.len(),
            budgets.len()
        )));
    }
    let mut total: f64 = p.iter().sum();
    for (i, (&bi, &b)) in beta.iter().zip(budgets).enumerate() {
        if !(bi > 0.0) {
            return Err(Error::Domain { buyer: i, value: bi });
        }
        total -= b + b * (bi / b).ln();
    }
    Ok(total)
}

pub fn relative_gap(dual: f64, primal: f64) -> f64 {
    (dual - primal) / primal.abs().max(1.0)
}

/// Robust utility lower bounds and witness values at the allocation.
struct Evaluated {
    lower: Vec<f64>,
    witness_value: Vec<f64>,
}

fn evaluate(sol: &EquilibriumSolution, model: &UncertaintyModel) -> Result<Evaluated> {
    let mut lower = Vec::with_capacity(sol.n());
    let mut witness_value = Vec::with_capacity(sol.n());
    for (i, row) in sol.x.iter().enumerate() {
        let value = dot(&sol.worst_v[i], row);
        // A dual vector shipped with the solution bounds the utility from
        // below on its own; evaluate only when that bound is not tight.
        let shipped = match sol.utility_duals.get(i) {
            Some(y) if y.len() == row.len() => Some(model.dual_value(i, row, y)?),
            _ => None,
        };
        let bound = match shipped {
            Some(b) if value - b <= CERTIFY_UTILITY_TOL * value.abs().max(1.0) => b,
            _ => {
                let res = model.robust_utility(i, row, CERTIFY_UTILITY_TOL)?;
                res.lower_bound.max(shipped.unwrap_or(f64::NEG_INFINITY))
            }
        };
        lower.push(bound);
        witness_value.push(value);
    }
    Ok(Evaluated {
        lower,
        witness_value,
    })
}

fn check_solution_shape(sol: &EquilibriumSolution, market: &Market) -> Result<()> {
    check_shape(market, &sol.x, &sol.r)?;
    if sol.worst_v.len() != market.n() || sol.worst_v.iter().any(|v| v.len() != market.m()) {
        return Err(Error::MissingWitnesses);
    }
    if sol.p.len() != market.m() || sol.beta.len() != market.n() || sol.t.len() != market.n() {
        return Err(Error::Dimension("solution vectors do not match the market".into()));
    }
    Ok(())
}

fn dual_residuals(sol: &EquilibriumSolution, beta: &[f64]) -> Vec<f64> {
    sol.worst_v
        .iter()
        .zip(beta)
        .map(|(v, b)| {
            v.iter()
                .zip(&sol.p)
                .map(|(vij, pj)| b * vij - pj)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Builds the dual point from the solution's prices, multipliers and
/// witnesses, repairs dual infeasibility by a uniform price lift, and
/// reports the certified gap together with the equilibrium conditions.
pub fn make_certificate(
    sol: &EquilibriumSolution,
    market: &Market,
    model: &UncertaintyModel,
    kind: MarketKind,
) -> Result<Certificate> {
    make_certificate_with(sol, market, model, kind, &Tolerances::default())
}

pub fn make_certificate_with(
    sol: &EquilibriumSolution,
    market: &Market,
    model: &UncertaintyModel,
    kind: MarketKind,
    tol: &Tolerances,
) -> Result<Certificate> {
    check_solution_shape(sol, market)?;
    let budgets = market.budgets();
    let q = kind.q();
    let eval = evaluate(sol, model)?;

    let primal: f64 = (0..sol.n())
        .map(|i| {
            let arg = eval.lower[i] + q * sol.r[i].max(0.0);
            if arg > 0.0 {
                Ok(budgets[i] * arg.ln() - q * sol.r[i].max(0.0))
            } else {
                Err(Error::Domain { buyer: i, value: arg })
            }
        })
        .sum::<Result<f64>>()?;

    let quasi_residual = if kind.is_quasi() {
        sol.beta.iter().map(|b| b - 1.0).fold(0.0, f64::max)
    } else {
        0.0
    };
    let beta: Vec<f64> = if kind.is_quasi() {
        sol.beta.iter().map(|b| b.min(1.0)).collect()
    } else {
        sol.beta.clone()
    };
    let residuals = dual_residuals(sol, &beta);
    let price_lift = residuals.iter().copied().fold(0.0, f64::max);
    let lifted: Vec<f64> = sol.p.iter().map(|p| p + price_lift).collect();
    let dual = dual_objective(&lifted, &beta, budgets)?;
    let gap = relative_gap(dual, primal);

    let headroom: Vec<f64> = (0..sol.n())
        .map(|i| budgets[i] / beta[i] - (eval.lower[i] + q * sol.r[i]))
        .collect();

    let mut report = conditions(sol, market, model, kind, tol, &eval)?;
    report.lines.insert(0, CheckLine::new("duality gap", gap.max(0.0), tol.gap));
    // Weak duality: a clearly negative gap means an invalid dual point.
    report.lines.insert(1, CheckLine::new("weak duality", (-gap).max(0.0), 1e-9));
    Ok(Certificate {
        dual_objective: dual,
        primal_objective: primal,
        relative_gap: gap,
        dual_feasibility_residuals: residuals,
        quasi_residual,
        price_lift,
        headroom,
        report,
    })
}

/// The equilibrium conditions alone, without dual repair. Deterministic and
/// free of side effects.
pub fn check_equilibrium(
    sol: &EquilibriumSolution,
    market: &Market,
    model: &UncertaintyModel,
    kind: MarketKind,
    tol: &Tolerances,
) -> Result<Report> {
    check_solution_shape(sol, market)?;
    let eval = evaluate(sol, model)?;
    conditions(sol, market, model, kind, tol, &eval)
}

fn conditions(
    sol: &EquilibriumSolution,
    market: &Market,
    model: &UncertaintyModel,
    kind: MarketKind,
    tol: &Tolerances,
    eval: &Evaluated,
) -> Result<Report> {
    let n = sol.n();
    let m = sol.m();
    let budgets = market.budgets();
    let q = kind.q();
    let mut lines = Vec::new();

    let negative = sol.x.iter().flatten().fold(0.0, |acc: f64, &x| acc.max(-x));
    let over = (0..m).map(|j| sol.column_sum(j) - 1.0).fold(0.0, f64::max);
    lines.push(CheckLine::new("allocation feasibility", negative.max(over), tol.feasibility));

    let clearing = (0..m)
        .filter(|&j| sol.p[j] > tol.price)
        .map(|j| (sol.column_sum(j) - 1.0).abs())
        .fold(0.0, f64::max);
    lines.push(CheckLine::new("market clearing", clearing, tol.clearing));

    let residual = dual_residuals(sol, &sol.beta)
        .into_iter()
        .fold(0.0, f64::max);
    let price_scale = sol.p.iter().copied().fold(0.0, f64::max).max(1e-300);
    lines.push(CheckLine::new(
        "dual feasibility",
        residual / price_scale,
        tol.dual_feasibility,
    ));

    let mut spread: f64 = 0.0;
    for i in 0..n {
        let ratios: Vec<f64> = (0..m)
            .filter(|&j| sol.x[i][j] > tol.allocation && sol.p[j] > tol.price)
            .map(|j| sol.worst_v[i][j] / sol.p[j])
            .collect();
        if let (Some(hi), Some(lo)) = (
            ratios.iter().copied().reduce(f64::max),
            ratios.iter().copied().reduce(f64::min),
        ) {
            if hi > 0.0 {
                spread = spread.max((hi - lo) / hi);
            }
        }
    }
    lines.push(CheckLine::new("bang-per-buck spread", spread, tol.bang_per_buck));

    let spend: Vec<f64> = (0..n).map(|i| sol.spend(i)).collect();
    if kind.is_quasi() {
        let above = sol.beta.iter().map(|b| b - 1.0).fold(0.0, f64::max);
        lines.push(CheckLine::new("pacing bound", above, tol.pacing));
        let unnecessary = (0..n)
            .filter(|&i| spend[i] < budgets[i] - tol.pacing)
            .map(|i| 1.0 - sol.beta[i])
            .fold(0.0, f64::max);
        lines.push(CheckLine::new("no unnecessary pacing", unnecessary, tol.pacing));
        let retained = (0..n)
            .map(|i| ((sol.r[i] - (budgets[i] - spend[i])).abs()).max(-sol.r[i]) / budgets[i])
            .fold(0.0, f64::max);
        lines.push(CheckLine::new("retained budget", retained, tol.budget));
    } else {
        let exhaustion = (0..n)
            .map(|i| (spend[i] - budgets[i]).abs() / budgets[i])
            .fold(0.0, f64::max);
        lines.push(CheckLine::new("budget exhaustion", exhaustion, tol.budget));
    }

    let consistency = (0..n)
        .map(|i| {
            let t = eval.lower[i] + q * sol.r[i];
            (sol.t[i] - t).abs() / t.abs().max(1.0)
        })
        .fold(0.0, f64::max);
    lines.push(CheckLine::new("utility consistency", consistency, tol.utility));

    let optimality = (0..n)
        .map(|i| (eval.witness_value[i] - eval.lower[i]) / eval.lower[i].abs().max(1.0))
        .fold(0.0, f64::max);
    lines.push(CheckLine::new("witness optimality", optimality, tol.utility));

    let mut membership: f64 = 0.0;
    for (i, v) in sol.worst_v.iter().enumerate() {
        membership = membership.max(model.direct_violation(i, v)?);
    }
    lines.push(CheckLine::new("witness membership", membership, tol.feasibility));

    let headroom = (0..n)
        .map(|i| {
            let beta = if kind.is_quasi() { sol.beta[i].min(1.0) } else { sol.beta[i] };
            let attained = eval.lower[i] + q * sol.r[i];
            (budgets[i] / beta - attained).abs() / budgets[i]
        })
        .fold(0.0, f64::max);
    lines.push(CheckLine::new("demand headroom", headroom, tol.budget));

    Ok(Report { lines })
}
