//! Projected supergradient ascent on `F(X, r) = Σ b_i log(u_i(x_i) + Q r_i) − Q r_i`.
//!
//! The worst-case witness of buyer `i` is a supergradient of `u_i` at `x_i`.
//! Steps are `c/√k` scaled by the first supergradient norm; columns of `X`
//! are projected onto `{y >= 0, Σ y <= 1}` and `r` onto the orthant.

use rayon::prelude::*;

use super::{project_column_capped_simplex, snapshot, EquilibriumSolution, Snapshot, SolverParams, T_FLOOR};
use crate::error::Result;
use crate::market::{Market, MarketKind};
use crate::uncertainty::{RobustUtilityResult, UncertaintyModel, WarmStart};

pub(super) fn solve(
    market: &Market,
    model: &UncertaintyModel,
    kind: MarketKind,
    params: &SolverParams,
) -> Result<EquilibriumSolution> {
    let n = market.n();
    let m = market.m();
    let budgets = market.budgets();
    let q = kind.q();

    let mut x = vec![vec![1.0 / n as f64; m]; n];
    let mut r = vec![0.0; n];
    let mut warm = vec![WarmStart::default(); n];
    let mut avg_warm = vec![WarmStart::default(); n];
    let mut avg_x = x.clone();
    let mut avg_r = r.clone();
    let mut avg_count = 0usize;
    let mut scale = None;
    let mut best: Option<Snapshot> = None;
    let mut iters = 0;

    let evaluate = |x: &[Vec<f64>], warm: &mut [WarmStart]| -> Result<Vec<RobustUtilityResult>> {
        warm.par_iter_mut()
            .enumerate()
            .map(|(i, w)| model.robust_utility_warm(i, &x[i], params.utility_tol, w))
            .collect()
    };

    while iters < params.max_iters {
        iters += 1;
        let evals = evaluate(&x, &mut warm)?;
        let weights: Vec<f64> = evals
            .iter()
            .zip(budgets.iter().zip(&r))
            .map(|(e, (b, ri))| b / (e.value + q * ri).max(T_FLOOR))
            .collect();
        let grad_norm = evals
            .iter()
            .zip(&weights)
            .map(|(e, w)| w * w * e.worst_v.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            + weights.iter().map(|w| (q * (w - 1.0)).powi(2)).sum::<f64>();
        let g0 = *scale.get_or_insert(grad_norm.sqrt().max(T_FLOOR));
        let step = params.step * (m as f64).sqrt() / (g0 * (iters as f64).sqrt());

        for i in 0..n {
            for j in 0..m {
                x[i][j] += step * weights[i] * evals[i].worst_v[j];
            }
            r[i] = (r[i] + step * q * (weights[i] - 1.0)).max(0.0);
        }
        for j in 0..m {
            let column: Vec<f64> = x.iter().map(|row| row[j]).collect();
            for (row, y) in x.iter_mut().zip(project_column_capped_simplex(&column, 1.0)) {
                row[j] = y;
            }
        }

        // Restarting the running mean at powers of two keeps it over
        // (roughly) the last half of the iterates.
        if params.averaging {
            if iters.is_power_of_two() {
                avg_count = 0;
            }
            avg_count += 1;
            let w = 1.0 / avg_count as f64;
            for i in 0..n {
                for j in 0..m {
                    avg_x[i][j] += w * (x[i][j] - avg_x[i][j]);
                }
                avg_r[i] += w * (r[i] - avg_r[i]);
            }
        } else {
            avg_x.clone_from(&x);
            avg_r.clone_from(&r);
        }

        if iters % params.check_every == 0 || iters == params.max_iters {
            let avg_evals = evaluate(&avg_x, &mut avg_warm)?;
            let snap = snapshot(market, kind, &avg_x, avg_r.clone(), &avg_evals, Vec::new(), iters);
            let done = snap.gap <= params.stop_gap;
            if best.as_ref().is_none_or(|b| snap.gap < b.gap) {
                best = Some(snap);
            }
            if done {
                break;
            }
        }
    }

    let Snapshot { gap, mut solution } = best.expect("at least one snapshot is taken");
    solution.converged = gap <= params.stop_gap;
    solution.iters = iters;
    Ok(solution)
}
