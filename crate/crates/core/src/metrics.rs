//! Envy, regret, welfare and revenue of an allocation.
//!
//! Robust envy of buyer `i` is `max_{i'} r_{i'} − r_i − u_i(x_i − x_{i'})`.
//! Robust regret at prices `p` is `max_{z ∈ Z_i(p)} Q p·(x_i − z) − u_i(x_i − z)`
//! over `Z_i(p) = {0 <= z <= 1, p·z <= b_i}`; the objective is convex in `z`,
//! so the maximum sits at a vertex of `Z_i(p)`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eg::{demand, EquilibriumSolution};
use crate::error::{Error, Result};
use crate::market::{Market, MarketKind};
use crate::uncertainty::{UncertaintyModel, DEFAULT_TOL};
use crate::vecops::dot;

/// Largest `m` for which exact regret enumerates every vertex of `Z_i(p)`.
pub const MAX_ENUMERATED_GOODS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WelfareMode {
    /// `U_i = v_hat_i·x_i + r_i`
    Nominal,
    /// `U_i = u_i(x_i) + r_i`
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegretMode {
    Exact,
    /// Best of `k` random vertices, drawn by greedy fills of random good
    /// orders.
    Sampled { k: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    Exact,
    LowerBound,
}

impl Exactness {
    pub fn as_str(self) -> &'static str {
        match self {
            Exactness::Exact => "exact",
            Exactness::LowerBound => "lower-bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// `2w` with `w` the largest `l_1` width over buyers.
    pub envy_bound: f64,
    pub regret_bound: f64,
    /// `2Rm/n` with `R` the largest elementwise range over buyers.
    pub avg_regret_bound: f64,
    /// The envy bound assumes equal budgets.
    pub envy_bound_applicable: bool,
}

fn check_buyer(model: &UncertaintyModel, buyer: usize) -> Result<()> {
    if buyer >= model.n() {
        return Err(Error::BuyerIndex { index: buyer, n: model.n() });
    }
    Ok(())
}

fn check_rows(model: &UncertaintyModel, x: &[Vec<f64>], r: &[f64]) -> Result<()> {
    if x.len() != model.n() || r.len() != model.n() || x.iter().any(|row| row.len() != model.m()) {
        return Err(Error::Dimension(format!(
            "allocation must be {} x {} with one retained budget per buyer",
            model.n(),
            model.m()
        )));
    }
    Ok(())
}

fn difference(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(s, t)| s - t).collect()
}

/// Worst-case envy of `buyer` towards the other bundles; never negative
/// because the buyer's own bundle contributes zero.
pub fn robust_envy(model: &UncertaintyModel, buyer: usize, x: &[Vec<f64>], r: &[f64]) -> Result<f64> {
    check_buyer(model, buyer)?;
    check_rows(model, x, r)?;
    let mut envy: f64 = 0.0;
    for other in (0..x.len()).filter(|&k| k != buyer) {
        let u = model.robust_utility(buyer, &difference(&x[buyer], &x[other]), DEFAULT_TOL)?;
        envy = envy.max(r[other] - r[buyer] - u.value);
    }
    Ok(envy)
}

/// Envy when the valuation realizes at its nominal value.
pub fn nominal_envy(market: &Market, buyer: usize, x: &[Vec<f64>], r: &[f64]) -> Result<f64> {
    if buyer >= market.n() {
        return Err(Error::BuyerIndex { index: buyer, n: market.n() });
    }
    let v = market.nominal_row(buyer);
    let own = dot(&v, &x[buyer]) + r[buyer];
    Ok((0..x.len())
        .map(|k| dot(&v, &x[k]) + r[k] - own)
        .fold(0.0, f64::max))
}

/// Whether exact regret can enumerate the vertices of `Z_i(p)`.
pub fn regret_enumerable(budget: f64, p: &[f64]) -> bool {
    p.len() <= MAX_ENUMERATED_GOODS || p.iter().all(|&pj| budget <= pj)
}

/// Vertices of `{0 <= z <= 1, p·z <= b}`: box corners inside the budget,
/// and points on the budget plane with one fractional coordinate.
pub fn budget_box_vertices(budget: f64, p: &[f64]) -> Result<Vec<Vec<f64>>> {
    let m = p.len();
    if p.iter().all(|&pj| pj > 0.0 && budget <= pj) {
        let mut out = vec![vec![0.0; m]];
        for j in 0..m {
            let mut z = vec![0.0; m];
            z[j] = budget / p[j];
            out.push(z);
        }
        return Ok(out);
    }
    if m > MAX_ENUMERATED_GOODS {
        return Err(Error::NotEnumerable { m, max_goods: MAX_ENUMERATED_GOODS });
    }
    let mut out = Vec::new();
    for mask in 0u32..(1 << m) {
        let cost: f64 = (0..m).filter(|&j| mask >> j & 1 == 1).map(|j| p[j]).sum();
        let corner: Vec<f64> = (0..m).map(|j| f64::from(mask >> j & 1)).collect();
        if cost <= budget {
            out.push(corner);
            continue;
        }
        // Cross the budget plane along one edge leaving the corner.
        for j in (0..m).filter(|&j| mask >> j & 1 == 1 && p[j] > 0.0) {
            let t = (budget - (cost - p[j])) / p[j];
            if t > 0.0 && t < 1.0 {
                let mut z = corner.clone();
                z[j] = t;
                out.push(z);
            }
        }
    }
    Ok(out)
}

fn sampled_vertices(budget: f64, p: &[f64], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let m = p.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..m).collect();
    (0..k)
        .map(|_| {
            order.shuffle(&mut rng);
            let mut z = vec![0.0; m];
            let mut left = budget;
            for &j in &order {
                if p[j] <= 0.0 {
                    z[j] = 1.0;
                    continue;
                }
                if left <= 0.0 {
                    break;
                }
                z[j] = (left / p[j]).min(1.0);
                left -= z[j] * p[j];
            }
            z
        })
        .collect()
}

/// Robust regret of holding `x_i` at prices `p`.
pub fn robust_regret(
    model: &UncertaintyModel,
    buyer: usize,
    x_i: &[f64],
    p: &[f64],
    budget: f64,
    kind: MarketKind,
    mode: RegretMode,
) -> Result<(f64, Exactness)> {
    check_buyer(model, buyer)?;
    if x_i.len() != model.m() || p.len() != model.m() {
        return Err(Error::Dimension(format!("bundle and prices must have {} goods", model.m())));
    }
    let (vertices, flag) = match mode {
        RegretMode::Exact => (budget_box_vertices(budget, p)?, Exactness::Exact),
        RegretMode::Sampled { k, seed } => (sampled_vertices(budget, p, k, seed), Exactness::LowerBound),
    };
    let q = kind.q();
    let values = vertices
        .par_iter()
        .map(|z| {
            let d = difference(x_i, z);
            let u = model.robust_utility(buyer, &d, DEFAULT_TOL)?;
            Ok(q * dot(p, &d) - u.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((values.into_iter().fold(f64::NEG_INFINITY, f64::max), flag))
}

/// Budget-weighted geometric mean of `U_i`.
pub fn nash_welfare(
    market: &Market,
    model: &UncertaintyModel,
    x: &[Vec<f64>],
    r: &[f64],
    mode: WelfareMode,
) -> Result<f64> {
    check_rows(model, x, r)?;
    let budgets = market.budgets();
    let mut total = 0.0;
    for i in 0..x.len() {
        let u = match mode {
            WelfareMode::Nominal => dot(&market.nominal_row(i), &x[i]),
            WelfareMode::Robust => model.robust_utility(i, &x[i], DEFAULT_TOL)?.value,
        };
        let value = u + r[i];
        if !(value > 0.0) {
            return Err(Error::Domain { buyer: i, value });
        }
        total += budgets[i] * value.ln();
    }
    Ok((total / budgets.iter().sum::<f64>()).exp())
}

pub fn bounds(model: &UncertaintyModel, market: &Market) -> Result<Bounds> {
    let mut w: f64 = 0.0;
    let mut range: f64 = 0.0;
    for i in 0..model.n() {
        w = w.max(model.l1_width_upper_bound(i)?);
        range = range.max(model.elementwise_range_bound(i)?);
    }
    Ok(Bounds {
        envy_bound: 2.0 * w,
        regret_bound: 2.0 * w,
        avg_regret_bound: 2.0 * range * model.m() as f64 / model.n() as f64,
        envy_bound_applicable: market.has_equal_budgets(),
    })
}

/// `Σ_i p·z_i`.
pub fn revenue(p: &[f64], demands: &[Vec<f64>]) -> f64 {
    demands.iter().map(|z| dot(p, z)).sum()
}

/// Every buyer's robust demand at prices `p`.
pub fn demands_at(
    market: &Market,
    model: &UncertaintyModel,
    p: &[f64],
    kind: MarketKind,
) -> Result<Vec<Vec<f64>>> {
    (0..market.n())
        .into_par_iter()
        .map(|i| Ok(demand(model, i, market.budgets()[i], p, kind, DEFAULT_TOL)?.bundle))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuyerMetrics {
    pub buyer: usize,
    pub envy: f64,
    pub regret: f64,
    pub regret_flag: Exactness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub buyers: Vec<BuyerMetrics>,
    pub nominal_nsw: f64,
    pub robust_nsw: f64,
    pub bounds: Bounds,
    /// Revenue when every buyer buys its robust demand at the solution's
    /// prices.
    pub revenue: f64,
}

/// Metrics of a solution. Regret is exact when the vertices can be
/// enumerated and sampled with `k = 10m` otherwise.
pub fn metrics_report(
    sol: &EquilibriumSolution,
    market: &Market,
    model: &UncertaintyModel,
    kind: MarketKind,
    seed: u64,
) -> Result<MetricsReport> {
    check_rows(model, &sol.x, &sol.r)?;
    let budgets = market.budgets();
    let buyers = (0..market.n())
        .into_par_iter()
        .map(|i| {
            let mode = if regret_enumerable(budgets[i], &sol.p) {
                RegretMode::Exact
            } else {
                RegretMode::Sampled { k: 10 * market.m(), seed: seed.wrapping_add(i as u64) }
            };
            let (regret, regret_flag) = robust_regret(model, i, &sol.x[i], &sol.p, budgets[i], kind, mode)?;
            Ok(BuyerMetrics {
                buyer: i,
                envy: robust_envy(model, i, &sol.x, &sol.r)?,
                regret,
                regret_flag,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let demands = demands_at(market, model, &sol.p, kind)?;
    Ok(MetricsReport {
        buyers,
        nominal_nsw: nash_welfare(market, model, &sol.x, &sol.r, WelfareMode::Nominal)?,
        robust_nsw: nash_welfare(market, model, &sol.x, &sol.r, WelfareMode::Robust)?,
        bounds: bounds(model, market)?,
        revenue: revenue(&sol.p, &demands),
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    buyer: usize,
    envy: f64,
    regret: f64,
    regret_flag: &'a str,
    envy_bound: f64,
    regret_bound: f64,
    avg_regret_bound: f64,
}

impl MetricsReport {
    /// One row per buyer with the bound columns repeated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for b in &self.buyers {
            writer.serialize(CsvRow {
                buyer: b.buyer,
                envy: b.envy,
                regret: b.regret,
                regret_flag: b.regret_flag.as_str(),
                envy_bound: self.bounds.envy_bound,
                regret_bound: self.bounds.regret_bound,
                avg_regret_bound: self.bounds.avg_regret_bound,
            })?;
        }
        writer.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn mean_regret(&self) -> f64 {
        self.buyers.iter().map(|b| b.regret).sum::<f64>() / self.buyers.len().max(1) as f64
    }
}
