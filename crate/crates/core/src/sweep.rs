//! Sweeps of the uncertainty radius over a grid, producing the welfare,
//! envy, price and revenue tables.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::make_certificate;
use crate::eg::{solve, EquilibriumSolution, SolverParams};
use crate::error::{Error, Result};
use crate::market::{Market, MarketKind};
use crate::metrics::{demands_at, nash_welfare, revenue, robust_envy, WelfareMode};
use crate::uncertainty::{UncertaintyModel, UncertaintySpec};

/// `start:stop:step`, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if ![start, stop, step].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("grid values must be finite".into()));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidParameter(format!("grid step must be positive, got {step}")));
        }
        if start < 0.0 || stop < start {
            return Err(Error::InvalidParameter(format!(
                "grid needs 0 <= start <= stop, got {start}:{stop}"
            )));
        }
        Ok(Grid { start, stop, step })
    }

    /// Grid points, rounded to 12 decimals so that `0:0.3:0.1` yields `0.3`
    /// and not `0.30000000000000004`.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=count)
            .map(|k| ((self.start + k as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidParameter(format!("grid must look like start:stop:step, got {s:?}")));
        }
        let mut values = [0.0; 3];
        for (v, part) in values.iter_mut().zip(&parts) {
            *v = part
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad grid value {part:?}")))?;
        }
        Grid::new(values[0], values[1], values[2])
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Model family; its radii are replaced by each grid point.
    pub model: UncertaintySpec,
    pub grid: Grid,
    pub kind: MarketKind,
    pub params: SolverParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareRow {
    pub eps: f64,
    pub nom_nsw_at_nom: f64,
    pub nom_nsw_at_rob: f64,
    pub rob_nsw_at_nom: f64,
    pub rob_nsw_at_rob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvyRow {
    pub eps: f64,
    pub buyer: usize,
    pub solution: String,
    pub envy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub eps: f64,
    pub good: usize,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevenueRow {
    pub eps: f64,
    pub nominal_price_revenue: f64,
    pub robust_price_revenue: f64,
}

/// Solver outcome per grid point; failures leave the other tables without
/// rows for that point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusRow {
    pub eps: f64,
    pub converged: bool,
    pub gap: f64,
    pub iters: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub welfare: Vec<WelfareRow>,
    pub envy: Vec<EnvyRow>,
    pub prices: Vec<PriceRow>,
    pub revenue: Vec<RevenueRow>,
    pub status: Vec<StatusRow>,
}

struct Point {
    welfare: WelfareRow,
    envy: Vec<EnvyRow>,
    prices: Vec<PriceRow>,
    revenue: RevenueRow,
}

/// A buyer left with zero utility puts the geometric mean at its limit 0.
fn welfare_cell(value: Result<f64>) -> Result<f64> {
    match value {
        Err(Error::Domain { value, .. }) if value == 0.0 => Ok(0.0),
        other => other,
    }
}

fn evaluate_point(
    market: &Market,
    config: &SweepConfig,
    eps: f64,
    nominal: &EquilibriumSolution,
    robust: &EquilibriumSolution,
) -> Result<Point> {
    let model = UncertaintyModel::new(config.model.with_eps(eps), market)?;
    let nominal_model = UncertaintyModel::new(config.model.with_eps(0.0), market)?;
    let nsw = |sol: &EquilibriumSolution, mode| welfare_cell(nash_welfare(market, &model, &sol.x, &sol.r, mode));
    let welfare = WelfareRow {
        eps,
        nom_nsw_at_nom: welfare_cell(nash_welfare(
            market,
            &nominal_model,
            &nominal.x,
            &nominal.r,
            WelfareMode::Nominal,
        ))?,
        nom_nsw_at_rob: nsw(robust, WelfareMode::Nominal)?,
        rob_nsw_at_nom: nsw(nominal, WelfareMode::Robust)?,
        rob_nsw_at_rob: nsw(robust, WelfareMode::Robust)?,
    };
    let mut envy = Vec::with_capacity(2 * market.n());
    for (label, sol) in [("nominal", nominal), ("robust", robust)] {
        for i in 0..market.n() {
            envy.push(EnvyRow {
                eps,
                buyer: i,
                solution: label.to_string(),
                envy: robust_envy(&model, i, &sol.x, &sol.r)?,
            });
        }
    }
    let prices = robust
        .p
        .iter()
        .enumerate()
        .map(|(good, &price)| PriceRow { eps, good, price })
        .collect();
    let at_nominal = demands_at(market, &model, &nominal.p, config.kind)?;
    let at_robust = demands_at(market, &model, &robust.p, config.kind)?;
    Ok(Point {
        welfare,
        envy,
        prices,
        revenue: RevenueRow {
            eps,
            nominal_price_revenue: revenue(&nominal.p, &at_nominal),
            robust_price_revenue: revenue(&robust.p, &at_robust),
        },
    })
}

/// Solves the nominal problem once and the robust problem at every grid
/// point (in parallel), then tabulates the results in grid order.
pub fn run_sweep(market: &Market, config: &SweepConfig) -> Result<SweepResult> {
    let params = SolverParams { seed: config.seed, ..config.params.clone() };
    let nominal_model = UncertaintyModel::new(config.model.with_eps(0.0), market)?;
    let nominal = solve(market, &nominal_model, config.kind, &params)?;

    let outcomes: Vec<(StatusRow, Option<Point>)> = config
        .grid
        .points()
        .into_par_iter()
        .map(|eps| {
            let attempt = || -> Result<(EquilibriumSolution, Point)> {
                let model = UncertaintyModel::new(config.model.with_eps(eps), market)?;
                let mut robust = if eps == 0.0 {
                    nominal.clone()
                } else {
                    solve(market, &model, config.kind, &params)?
                };
                robust.gap = Some(make_certificate(&robust, market, &model, config.kind)?.relative_gap);
                let point = evaluate_point(market, config, eps, &nominal, &robust)?;
                Ok((robust, point))
            };
            match attempt() {
                Ok((sol, point)) => (
                    StatusRow {
                        eps,
                        converged: sol.converged,
                        gap: sol.gap.unwrap_or(f64::NAN),
                        iters: sol.iters,
                        error: String::new(),
                    },
                    Some(point),
                ),
                Err(e) => (
                    StatusRow { eps, converged: false, gap: f64::NAN, iters: 0, error: e.to_string() },
                    None,
                ),
            }
        })
        .collect();

    let mut result = SweepResult::default();
    for (status, point) in outcomes {
        result.status.push(status);
        if let Some(point) = point {
            result.welfare.push(point.welfare);
            result.envy.extend(point.envy);
            result.prices.extend(point.prices);
            result.revenue.push(point.revenue);
        }
    }
    Ok(result)
}

fn write_table<T: Serialize>(dir: &Path, name: &str, rows: &[T], header: &[&str]) -> Result<()> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

impl SweepResult {
    /// Writes `welfare.csv`, `envy.csv`, `prices.csv`, `revenue.csv` and
    /// `status.csv` into `dir`, creating it if needed.
    pub fn write_csvs(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_table(
            dir,
            "welfare.csv",
            &self.welfare,
            &["eps", "nom_nsw_at_nom", "nom_nsw_at_rob", "rob_nsw_at_nom", "rob_nsw_at_rob"],
        )?;
        write_table(dir, "envy.csv", &self.envy, &["eps", "buyer", "solution", "envy"])?;
        write_table(dir, "prices.csv", &self.prices, &["eps", "good", "price"])?;
        write_table(
            dir,
            "revenue.csv",
            &self.revenue,
            &["eps", "nominal_price_revenue", "robust_price_revenue"],
        )?;
        write_table(dir, "status.csv", &self.status, &["eps", "converged", "gap", "iters", "error"])
    }

    /// Max minus min price at grid point `eps`.
    pub fn price_spread(&self, eps: f64) -> Option<f64> {
        let prices: Vec<f64> = self.prices.iter().filter(|r| r.eps == eps).map(|r| r.price).collect();
        let hi = prices.iter().copied().reduce(f64::max)?;
        let lo = prices.iter().copied().reduce(f64::min)?;
        Some(hi - lo)
    }

    pub fn all_converged(&self) -> bool {
        self.status.iter().all(|s| s.converged)
    }
}
