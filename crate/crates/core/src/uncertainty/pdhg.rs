//! Primal-dual hybrid gradient evaluator for any block structure.
//!
//! Solves `min z·v` over `v ∈ {v >= 0, v·1 = s}`, `θ_k ∈ B_k`, subject to the
//! coupling `v = v_hat + Σ_k A_k θ_k`, with multiplier `y` on the coupling.
//! The bracket comes from a repaired primal point (upper) and the dual value
//! at the current `y` (lower).

use super::{BlockMap, BuyerSet, RobustUtilityResult, UncertaintyModel};
use crate::projection::{project_ball, simplex_threshold};
use crate::vecops::{dot, norm2};

pub(super) const MAX_ITERS: usize = 50_000;
const CHECK_EVERY: usize = 10;

/// Iterative state carried between evaluations for the same buyer.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    v: Vec<f64>,
    theta: Vec<f64>,
    y: Vec<f64>,
}

impl WarmStart {
    pub fn clear(&mut self) {
        *self = WarmStart::default();
    }
}

pub(super) struct Layout {
    pub offsets: Vec<usize>,
    pub dims: Vec<usize>,
    pub total: usize,
}

pub(super) fn layout(model: &UncertaintyModel, set: &BuyerSet) -> Layout {
    let dims: Vec<usize> = set.blocks.iter().map(|b| model.block_dim(b)).collect();
    let mut offsets = Vec::with_capacity(dims.len());
    let mut total = 0;
    for &d in &dims {
        offsets.push(total);
        total += d;
    }
    Layout {
        offsets,
        dims,
        total,
    }
}

/// `out = Σ_k A_k θ_k`.
pub(super) fn apply(model: &UncertaintyModel, set: &BuyerSet, lay: &Layout, theta: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (k, block) in set.blocks.iter().enumerate() {
        let part = &theta[lay.offsets[k]..lay.offsets[k] + lay.dims[k]];
        match block.map {
            BlockMap::Identity => out.iter_mut().zip(part).for_each(|(o, t)| *o += t),
            BlockMap::Factor => model.add_phi(part, 1.0, out),
        }
    }
}

/// `out_k = A_kᵀ w` for every block.
pub(super) fn apply_t(model: &UncertaintyModel, set: &BuyerSet, lay: &Layout, w: &[f64], out: &mut [f64]) {
    for (k, block) in set.blocks.iter().enumerate() {
        let part = &mut out[lay.offsets[k]..lay.offsets[k] + lay.dims[k]];
        match block.map {
            BlockMap::Identity => part.copy_from_slice(w),
            BlockMap::Factor => model.phi_t(w, part),
        }
    }
}

fn simplex_into(point: &[f64], total: f64, out: &mut [f64]) {
    let tau = simplex_threshold(point, total);
    out.iter_mut().zip(point).for_each(|(o, &x)| *o = (x - tau).max(0.0));
}

pub(super) fn solve(
    model: &UncertaintyModel,
    set: &BuyerSet,
    z: &[f64],
    tol: f64,
    warm: &mut WarmStart,
    max_iters: usize,
) -> RobustUtilityResult {
    let m = z.len();
    let lay = layout(model, set);
    let c = &set.center;
    let s = set.total;

    if warm.v.len() != m || warm.theta.len() != lay.total || warm.y.len() != m {
        warm.v = c.clone();
        warm.theta = vec![0.0; lay.total];
        warm.y = vec![0.0; m];
    }

    let ones_t = conservation_direction(model, set, &lay);

    let op_norm_sq = 1.0
        + set
            .blocks
            .iter()
            .map(|b| match b.map {
                BlockMap::Identity => 1.0,
                BlockMap::Factor => model.sigma_max * model.sigma_max,
            })
            .sum::<f64>();
    let eta = 0.95 / op_norm_sq.sqrt();
    let omega = (norm2(z) / norm2(c).max(f64::MIN_POSITIVE)).max(1e-12);
    let tau = eta / omega;
    let sigma = eta * omega;

    let mut best_v = c.clone();
    let mut best_upper = dot(c, z);
    let zeros = vec![0.0; m];
    let mut best_lower = model.dual_value_of(set, z, &zeros);
    let warm_lower = model.dual_value_of(set, z, &warm.y);
    best_lower = best_lower.max(warm_lower);

    let WarmStart { v, theta, y } = warm;
    let mut grad_v = vec![0.0; m];
    let mut v_new = vec![0.0; m];
    let mut at_y = vec![0.0; lay.total];
    let mut theta_new = vec![0.0; lay.total];
    let mut coupling = vec![0.0; m];
    let mut theta_bar = vec![0.0; lay.total];
    let mut iterations = 0;

    while iterations < max_iters && best_upper - best_lower > tol {
        iterations += 1;
        for j in 0..m {
            grad_v[j] = v[j] - tau * (z[j] - y[j]);
        }
        simplex_into(&grad_v, s, &mut v_new);
        apply_t(model, set, &lay, y, &mut at_y);
        for (k, block) in set.blocks.iter().enumerate() {
            let range = lay.offsets[k]..lay.offsets[k] + lay.dims[k];
            let step: Vec<f64> = theta[range.clone()]
                .iter()
                .zip(&at_y[range.clone()])
                .map(|(t, g)| t - tau * g)
                .collect();
            let origin = vec![0.0; step.len()];
            theta_new[range].copy_from_slice(&project_ball(&step, &origin, block.radius, block.norm));
        }
        for q in 0..lay.total {
            theta_bar[q] = 2.0 * theta_new[q] - theta[q];
        }
        apply(model, set, &lay, &theta_bar, &mut coupling);
        for j in 0..m {
            let v_bar = 2.0 * v_new[j] - v[j];
            y[j] += sigma * (c[j] + coupling[j] - v_bar);
        }
        v.copy_from_slice(&v_new);
        theta.copy_from_slice(&theta_new);

        if iterations % CHECK_EVERY == 0 || iterations == max_iters {
            let lower = model.dual_value_of(set, z, y);
            if lower > best_lower {
                best_lower = lower;
            }
            if let Some(candidate) = repair(model, set, &lay, theta, &ones_t) {
                let upper = dot(&candidate, z);
                if upper < best_upper {
                    best_upper = upper;
                    best_v = candidate;
                }
            }
        }
    }

    let converged = best_upper - best_lower <= tol;
    let lower = best_lower.min(best_upper);
    RobustUtilityResult {
        value: 0.5 * (lower + best_upper),
        worst_v: best_v,
        lower_bound: lower,
        upper_bound: best_upper,
        iterations,
        converged,
    }
}

/// Direction of the conservation constraint in parameter space; blocks
/// with zero radius are pinned at the origin.
pub(super) fn conservation_direction(model: &UncertaintyModel, set: &BuyerSet, lay: &Layout) -> Vec<f64> {
    let mut ones_t = vec![0.0; lay.total];
    apply_t(model, set, lay, &vec![1.0; set.center.len()], &mut ones_t);
    for (k, block) in set.blocks.iter().enumerate() {
        if block.radius == 0.0 {
            ones_t[lay.offsets[k]..lay.offsets[k] + lay.dims[k]].fill(0.0);
        }
    }
    ones_t
}

/// Turns parameters that sit in the balls into an exactly feasible valuation:
/// remove the drift off the conservation hyperplane, then shrink toward the
/// center until the balls and the orthant hold.
pub(super) fn repair(
    model: &UncertaintyModel,
    set: &BuyerSet,
    lay: &Layout,
    theta: &[f64],
    ones_t: &[f64],
) -> Option<Vec<f64>> {
    let mut fixed = theta.to_vec();
    let aa = dot(ones_t, ones_t);
    if aa > 0.0 {
        let shift = dot(ones_t, theta) / aa;
        fixed.iter_mut().zip(ones_t).for_each(|(t, a)| *t -= shift * a);
    }
    let mut alpha: f64 = 1.0;
    for (k, block) in set.blocks.iter().enumerate() {
        let part = &fixed[lay.offsets[k]..lay.offsets[k] + lay.dims[k]];
        let len = block.norm.of(part);
        if len > block.radius {
            alpha = alpha.min(block.radius / len);
        }
    }
    let mut w = vec![0.0; set.center.len()];
    apply(model, set, lay, &fixed, &mut w);
    for (&cj, &wj) in set.center.iter().zip(&w) {
        if wj < 0.0 {
            alpha = alpha.min(cj / -wj);
        }
    }
    if alpha <= 0.0 {
        return None;
    }
    Some(
        set.center
            .iter()
            .zip(&w)
            .map(|(c, wj)| (c + alpha * wj).max(0.0))
            .collect(),
    )
}
