//! Exact evaluators for the direct model.
//!
//! `l_2`: the minimizer lies on the path `v(t) = Π(v_hat − t z)` (Euclidean
//! projection onto `{v >= 0, v·1 = s}`) at the `t` where the ball becomes
//! tight, or at the path's limit when the ball never binds.
//! `l_1`: moving mass `r/2` from the most valuable goods onto the least
//! valuable one is optimal (fractional knapsack).

use super::{BuyerSet, RobustUtilityResult, UncertaintyModel};
use crate::projection::project_simplex;
use crate::vecops::{dist2, dot, min_value};

const BISECTION_STEPS: usize = 200;

pub(super) fn l2(model: &UncertaintyModel, set: &BuyerSet, z: &[f64]) -> RobustUtilityResult {
    let c = &set.center;
    let s = set.total;
    let r = set.blocks[0].radius;
    let zmin = min_value(z);

    // Limit of the path: projection of the center onto the optimal face.
    let mut v_inf = vec![0.0; c.len()];
    let face: Vec<usize> = (0..z.len()).filter(|&j| z[j] == zmin).collect();
    let face_center: Vec<f64> = face.iter().map(|&j| c[j]).collect();
    for (&j, x) in face.iter().zip(project_simplex(&face_center, s)) {
        v_inf[j] = x;
    }
    if dist2(&v_inf, c) <= r {
        let zero = vec![0.0; z.len()];
        let lower = model.dual_value_of(set, z, &zero);
        return finish(z, v_inf, lower, 0);
    }

    // Shifting z by a constant leaves the projection unchanged; measuring
    // from the minimum keeps `t·z` small when z is nearly constant.
    let path = |t: f64| -> Vec<f64> {
        let shifted: Vec<f64> = c.iter().zip(z).map(|(ci, zi)| ci - t * (zi - zmin)).collect();
        project_simplex(&shifted, s)
    };
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let spread = z.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>().sqrt();
    // Without orthant clipping the path moves at speed `spread`, so this
    // step never overshoots the ball.
    let mut lo = r / spread;
    let mut v_lo = path(lo);
    let mut iterations = 1;
    if dist2(&v_lo, c) < r {
        let mut hi = 2.0 * lo;
        let mut v_hi = path(hi);
        while dist2(&v_hi, c) < r {
            lo = hi;
            v_lo = v_hi;
            hi *= 2.0;
            v_hi = path(hi);
            iterations += 1;
        }
        for _ in 0..BISECTION_STEPS {
            // On a piece of constant support the path is affine in t and the
            // crossing solves a quadratic.
            if same_support(&v_lo, &v_hi) {
                if let Some((t, v)) = affine_crossing(c, r, lo, &v_lo, hi, &v_hi, &path) {
                    let lower = path_dual(model, set, z, &v, t);
                    return finish(z, v, lower, iterations + 1);
                }
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v_mid = path(mid);
            iterations += 1;
            if dist2(&v_mid, c) < r {
                lo = mid;
                v_lo = v_mid;
            } else {
                hi = mid;
                v_hi = v_mid;
            }
        }
        let lower_hi = path_dual(model, set, z, &v_hi, hi);
        let lower_lo = path_dual(model, set, z, &v_lo, lo);
        finish(z, v_lo, lower_hi.max(lower_lo), iterations)
    } else {
        let lower = path_dual(model, set, z, &v_lo, lo);
        finish(z, v_lo, lower, iterations)
    }
}

fn same_support(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (*x > 0.0) == (*y > 0.0))
}

/// Solves `‖v(t) − c‖ = r` on the affine piece through `(lo, v_lo)` and
/// `(hi, v_hi)`, and accepts the root only if the exact path agrees.
fn affine_crossing(
    c: &[f64],
    r: f64,
    lo: f64,
    v_lo: &[f64],
    hi: f64,
    v_hi: &[f64],
    path: &impl Fn(f64) -> Vec<f64>,
) -> Option<(f64, Vec<f64>)> {
    let h = hi - lo;
    let e: Vec<f64> = v_hi.iter().zip(v_lo).map(|(b, a)| (b - a) / h).collect();
    let w: Vec<f64> = v_lo.iter().zip(c).map(|(a, ci)| a - ci).collect();
    // ‖w + s e‖² = r², s = t − lo
    let qa = dot(&e, &e);
    let qb = 2.0 * dot(&w, &e);
    let qc = dot(&w, &w) - r * r;
    if qa <= 0.0 {
        return None;
    }
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
    let s = (-qb + disc.sqrt()) / (2.0 * qa);
    let t = lo + s.clamp(0.0, h);
    let mut v = path(t);
    let dist = dist2(&v, c);
    if (dist - r).abs() > 1e-12 * r.max(f64::MIN_POSITIVE) {
        return None;
    }
    if dist > r {
        // Pull back onto the ball along the segment to the center.
        let shrink = r / dist;
        v.iter_mut().zip(c).for_each(|(x, ci)| *x = ci + shrink * (*x - ci));
    }
    Some((t, v))
}

/// Dual value at the multiplier `y = (v_hat − v(t)) / t` read off the path.
fn path_dual(model: &UncertaintyModel, set: &BuyerSet, z: &[f64], v: &[f64], t: f64) -> f64 {
    let y: Vec<f64> = set.center.iter().zip(v).map(|(c, x)| (c - x) / t).collect();
    model.dual_value_of(set, z, &y)
}

pub(super) fn l1(model: &UncertaintyModel, set: &BuyerSet, z: &[f64]) -> RobustUtilityResult {
    let c = &set.center;
    let budget = 0.5 * set.blocks[0].radius;
    let zmin = min_value(z);
    let sink = z.iter().position(|&x| x == zmin).unwrap_or(0);

    let mut donors: Vec<usize> = (0..z.len()).filter(|&j| z[j] > zmin).collect();
    donors.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
    let mut v = c.clone();
    let mut remaining = budget;
    for &j in &donors {
        if remaining <= 0.0 {
            break;
        }
        let take = c[j].min(remaining);
        v[j] -= take;
        v[sink] += take;
        remaining -= take;
    }

    // D is concave piecewise linear in the cut level; its maximum sits at
    // one of the values of z.
    let cut_value = |level: f64| -> f64 {
        c.iter().zip(z).map(|(ci, zi)| ci * zi.min(level)).sum::<f64>() - budget * (level - zmin)
    };
    let best = z
        .iter()
        .copied()
        .max_by(|&a, &b| cut_value(a).total_cmp(&cut_value(b)))
        .unwrap_or(zmin);
    let center = 0.5 * (zmin + best);
    let half = 0.5 * (best - zmin);
    let y: Vec<f64> = z.iter().map(|x| (x - center).clamp(-half, half)).collect();
    let lower = model.dual_value_of(set, z, &y);
    finish(z, v, lower, donors.len())
}

fn finish(z: &[f64], worst_v: Vec<f64>, lower: f64, iterations: usize) -> RobustUtilityResult {
    let upper = dot(&worst_v, z);
    // Both ends are exact up to rounding; never report an inverted bracket.
    let lower = lower.min(upper);
    RobustUtilityResult {
        value: 0.5 * (lower + upper),
        worst_v,
        lower_bound: lower,
        upper_bound: upper,
        iterations,
        converged: true,
    }
}
