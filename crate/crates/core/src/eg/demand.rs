//! Robust demand: maximize `u_i(z) + Q(b − p·z)` over
//! `Z(p) = {0 <= z <= 1, p·z <= b}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketKind;
use crate::projection::project_box_budget;
use crate::uncertainty::UncertaintyModel;
use crate::vecops::{dot, norm2};

const ASCENT_STEPS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandResult {
    pub bundle: Vec<f64>,
    pub objective: f64,
    /// Supergradient steps taken over all restarts.
    pub iterations: usize,
}

/// Greedy vertex of `Z(p)`: buy goods in decreasing `score_j / p_j` order
/// while the ratio is at least `floor`, until the budget or the caps bind.
/// Free goods with a positive score are taken whole first.
pub(crate) fn greedy_fill(score: &[f64], prices: &[f64], budget: f64, floor: f64) -> Vec<f64> {
    let m = score.len();
    let mut order: Vec<usize> = (0..m).collect();
    let ratio = |j: usize| {
        if prices[j] > 0.0 {
            score[j] / prices[j]
        } else if score[j] > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    order.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)).then(a.cmp(&b)));
    let mut z = vec![0.0; m];
    let mut left = budget;
    for j in order {
        if ratio(j) < floor || score[j] <= 0.0 {
            break;
        }
        if prices[j] <= 0.0 {
            z[j] = 1.0;
            continue;
        }
        if left <= 0.0 {
            break;
        }
        let amount = (left / prices[j]).min(1.0);
        z[j] = amount;
        left -= amount * prices[j];
    }
    z
}

/// Approximately maximizes the buyer's robust payoff at prices `p` by
/// projected supergradient ascent from several starts. Among candidates
/// within `tol` of the best payoff the one spending the most is returned,
/// so indifferent buyers purchase.
pub fn demand(
    model: &UncertaintyModel,
    buyer: usize,
    budget: f64,
    p: &[f64],
    kind: MarketKind,
    tol: f64,
) -> Result<DemandResult> {
    if !(budget > 0.0) {
        return Err(Error::InvalidParameter(format!("budget must be positive, got {budget}")));
    }
    if p.len() != model.m() || p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter("prices must be finite, nonnegative, one per good".into()));
    }
    let m = p.len();
    let q = kind.q();
    let eval_tol = (0.1 * tol).max(1e-12);
    let payoff = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
        let res = model.robust_utility(buyer, z, eval_tol)?;
        Ok((res.lower_bound + q * (budget - dot(p, z)), res.worst_v))
    };

    let nominal = model.nominal(buyer)?.to_vec();
    let floor = if q > 0.0 { 1.0 } else { 0.0 };
    let mut starts = vec![
        vec![0.0; m],
        greedy_fill(&nominal, p, budget, floor),
        project_box_budget(&vec![0.5; m], p, budget),
    ];
    if q > 0.0 {
        starts.push(greedy_fill(&nominal, p, budget, 0.0));
    }

    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut iterations = 0;
    for start in starts {
        let mut z = start;
        let (mut best_val, mut witness) = payoff(&z)?;
        let mut best_z = z.clone();
        let mut scale = None;
        for k in 1..=ASCENT_STEPS {
            let grad: Vec<f64> = witness.iter().zip(p).map(|(v, pj)| v - q * pj).collect();
            let g = norm2(&grad);
            if g == 0.0 {
                break;
            }
            let g0 = *scale.get_or_insert(g);
            let step = (m as f64).sqrt() / (g0 * (k as f64).sqrt());
            let moved: Vec<f64> = z.iter().zip(&grad).map(|(a, d)| a + step * d).collect();
            z = project_box_budget(&moved, p, budget);
            let (val, w) = payoff(&z)?;
            witness = w;
            iterations += 1;
            if val > best_val {
                best_val = val;
                best_z.clone_from(&z);
            }
        }
        // The witness at the best point also prices goods for one more vertex.
        let (_, w) = payoff(&best_z)?;
        let vertex = greedy_fill(&w, p, budget, floor);
        let (vertex_val, _) = payoff(&vertex)?;
        candidates.push((best_val, best_z));
        candidates.push((vertex_val, vertex));
    }

    let top = candidates.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let (objective, bundle) = candidates
        .into_iter()
        .filter(|c| c.0 >= top - tol)
        .max_by(|a, b| dot(p, &a.1).total_cmp(&dot(p, &b.1)))
        .expect("at least one candidate");
    Ok(DemandResult {
        bundle,
        objective,
        iterations,
    })
}
