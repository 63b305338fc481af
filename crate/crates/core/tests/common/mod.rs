//! Independent oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls the evaluators under test.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rme_core::*;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(p: Norm, x: &[f64]) -> f64 {
    match p {
        Norm::L1 => x.iter().map(|v| v.abs()).sum(),
        Norm::L2 => dot(x, x).sqrt(),
    }
}

/// Orthonormal basis of the subspace orthogonal to `c` in `R^k`.
pub fn complement_basis(c: &[f64]) -> Vec<Vec<f64>> {
    let k = c.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let cn = dot(c, c).sqrt();
    let mut against: Vec<Vec<f64>> = if cn > 0.0 { vec![c.iter().map(|v| v / cn).collect()] } else { Vec::new() };
    for e in 0..k {
        let mut v = vec![0.0; k];
        v[e] = 1.0;
        for b in &against {
            let s = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= s * y);
        }
        let len = dot(&v, &v).sqrt();
        if len > 1e-8 {
            v.iter_mut().for_each(|x| *x /= len);
            against.push(v.clone());
            basis.push(v);
        }
        if basis.len() + usize::from(cn > 0.0) == k {
            break;
        }
    }
    basis
}

/// Unit vector in `R^k` from `k − 1` hyperspherical angles.
fn direction(angles: &[f64]) -> Vec<f64> {
    let k = angles.len() + 1;
    let mut u = vec![1.0; k];
    for (a, &phi) in angles.iter().enumerate() {
        for x in u.iter_mut().skip(a + 1) {
            *x *= phi.sin();
        }
        u[a] *= phi.cos();
    }
    u
}

/// Distance from 0 to the boundary of a convex set along `u`, by bisection.
fn radial_extent(u: &[f64], limit: f64, feasible: &impl Fn(&[f64]) -> bool) -> f64 {
    let (mut lo, mut hi) = (0.0, limit);
    let at = |r: f64| u.iter().map(|x| r * x).collect::<Vec<f64>>();
    if feasible(&at(hi)) {
        return hi;
    }
    while hi - lo > 1e-13 * limit {
        let mid = 0.5 * (lo + hi);
        if feasible(&at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Minimum of a linear function `g·t` over a compact convex set in `R^k`
/// that contains `0` in its interior, given only its membership test.
/// The minimum lies on the boundary, reached along some direction `u` at
/// radius `ρ(u)`; a grid over the angles of `u` is refined around the
/// incumbent until the angular step is at most `final_step`. The sublevel
/// sets of `ρ(u)·g·u` on the sphere are connected, so refinement does not
/// get trapped.
pub fn boundary_min(g: &[f64], limit: f64, final_step: f64, feasible: impl Fn(&[f64]) -> bool) -> f64 {
    const POINTS: usize = 15;
    let k = g.len();
    let value = |angles: &[f64]| {
        let u = direction(angles);
        radial_extent(&u, limit, &feasible) * dot(g, &u)
    };
    match k {
        0 => return 0.0,
        1 => return value(&[]).min(radial_extent(&[-1.0], limit, &feasible) * -g[0]),
        _ => {}
    }
    let dims = k - 1;
    let mut center: Vec<f64> = (0..dims).map(|a| if a + 1 == dims { std::f64::consts::PI } else { 0.5 * std::f64::consts::PI }).collect();
    let mut hw: Vec<f64> = center.clone();
    let mut best = value(&center).min(0.0);
    let mut angles = vec![0.0; dims];
    loop {
        let step: Vec<f64> = hw.iter().map(|h| 2.0 * h / (POINTS - 1) as f64).collect();
        let mut idx = vec![0usize; dims];
        let mut best_at = center.clone();
        'grid: loop {
            for a in 0..dims {
                angles[a] = center[a] - hw[a] + step[a] * idx[a] as f64;
            }
            let v = value(&angles);
            if v < best {
                best = v;
                best_at.copy_from_slice(&angles);
            }
            for a in 0..dims {
                idx[a] += 1;
                if idx[a] < POINTS {
                    continue 'grid;
                }
                idx[a] = 0;
            }
            break;
        }
        center = best_at;
        if step.iter().all(|&s| s <= final_step) {
            return best;
        }
        hw.iter_mut().for_each(|h| *h *= 0.5);
    }
}

/// Structure of one buyer's uncertainty set, rebuilt from the market.
pub struct SetGeometry {
    pub center: Vec<f64>,
    /// `m x d`, absent for the direct model.
    pub phi: Option<DMatrix<f64>>,
    pub spec: UncertaintySpec,
    pub radii: Vec<f64>,
}

impl SetGeometry {
    pub fn new(market: &Market, model: &UncertaintyModel, buyer: usize) -> Self {
        let spec = model.spec();
        let phi = match spec {
            UncertaintySpec::Direct { .. } => None,
            _ => Some(market.factors().expect("factored").1.clone()),
        };
        SetGeometry {
            center: market.nominal_row(buyer),
            phi,
            spec,
            radii: model.radii(buyer).unwrap(),
        }
    }

    fn phi_times(&self, delta: &[f64]) -> Vec<f64> {
        let phi = self.phi.as_ref().unwrap();
        (0..phi.nrows())
            .map(|j| (0..phi.ncols()).map(|l| phi[(j, l)] * delta[l]).sum())
            .collect()
    }

    /// Free coordinates and the member they describe, if any.
    fn parametrize(&self) -> (Vec<Vec<f64>>, f64) {
        let m = self.center.len();
        match self.spec {
            UncertaintySpec::Direct { .. } => (complement_basis(&vec![1.0; m]), self.radii[0]),
            UncertaintySpec::Buyerside { .. } => {
                let ones = vec![1.0; m];
                let phi = self.phi.as_ref().unwrap();
                let c: Vec<f64> = (0..phi.ncols()).map(|l| (0..m).map(|j| phi[(j, l)] * ones[j]).sum()).collect();
                (complement_basis(&c), self.radii[0])
            }
            UncertaintySpec::JointOuter { .. } => {
                let phi = self.phi.as_ref().unwrap();
                let mut c: Vec<f64> = (0..phi.ncols()).map(|l| (0..m).map(|j| phi[(j, l)]).sum()).collect();
                c.extend(std::iter::repeat_n(1.0, m));
                (complement_basis(&c), (self.radii[0].powi(2) + self.radii[1].powi(2)).sqrt())
            }
        }
    }

    /// `v − v_hat` at free coordinates `t`, ignoring every constraint.
    fn member_unchecked(&self, basis: &[Vec<f64>], t: &[f64]) -> Vec<f64> {
        let dim = basis.first().map_or(0, Vec::len);
        let mut delta = vec![0.0; dim];
        for (b, &tk) in basis.iter().zip(t) {
            delta.iter_mut().zip(b).for_each(|(d, x)| *d += tk * x);
        }
        match self.spec {
            UncertaintySpec::Direct { .. } => delta,
            UncertaintySpec::Buyerside { .. } => self.phi_times(&delta),
            UncertaintySpec::JointOuter { .. } => {
                let d = self.phi.as_ref().unwrap().ncols();
                let mut s = self.phi_times(&delta[..d]);
                s.iter_mut().zip(&delta[d..]).for_each(|(a, b)| *a += b);
                s
            }
        }
    }

    /// The member at free coordinates `t`, or `None` outside the set.
    fn member(&self, basis: &[Vec<f64>], t: &[f64]) -> Option<Vec<f64>> {
        let dim = basis.first().map_or(0, Vec::len);
        let mut delta = vec![0.0; dim];
        for (b, &tk) in basis.iter().zip(t) {
            delta.iter_mut().zip(b).for_each(|(d, x)| *d += tk * x);
        }
        let shift = match self.spec {
            UncertaintySpec::Direct { p, .. } => {
                if norm(p, &delta) > self.radii[0] {
                    return None;
                }
                delta
            }
            UncertaintySpec::Buyerside { p, .. } => {
                if norm(p, &delta) > self.radii[0] {
                    return None;
                }
                self.phi_times(&delta)
            }
            UncertaintySpec::JointOuter { .. } => {
                let d = self.phi.as_ref().unwrap().ncols();
                let (d1, d2) = delta.split_at(d);
                if norm(Norm::L2, d1) > self.radii[0] || norm(Norm::L2, d2) > self.radii[1] {
                    return None;
                }
                let mut s = self.phi_times(d1);
                s.iter_mut().zip(d2).for_each(|(a, b)| *a += b);
                s
            }
        };
        let v: Vec<f64> = self.center.iter().zip(&shift).map(|(c, s)| c + s).collect();
        v.iter().all(|&x| x >= 0.0).then_some(v)
    }

    /// Brute-force robust utility: boundary search over the set's free
    /// coordinates.
    pub fn grid_utility(&self, z: &[f64], final_step: f64) -> f64 {
        let (basis, hw) = self.parametrize();
        let base = dot(&self.center, z);
        if basis.is_empty() || hw == 0.0 {
            return base;
        }
        // v·z = v_hat·z + g·t is affine in the free coordinates t.
        let zero = vec![0.0; basis.len()];
        let g: Vec<f64> = (0..basis.len())
            .map(|a| {
                let mut e = zero.clone();
                e[a] = 1.0;
                dot(&self.member_unchecked(&basis, &e), z)
            })
            .collect();
        // Every ball norm used here bounds ‖t‖_2 within a factor √dim.
        let limit = 1.01 * hw * (basis[0].len() as f64).sqrt();
        base + boundary_min(&g, limit, final_step, |t| self.member(&basis, t).is_some())
    }
}

/// Argmax of `f` over `[lo, hi]` on a uniform grid.
pub fn grid_argmax_1d(lo: f64, hi: f64, step: f64, f: impl Fn(f64) -> f64) -> f64 {
    let count = ((hi - lo) / step).round() as usize;
    (0..=count)
        .map(|k| lo + k as f64 * step)
        .map(|x| (x, f(x)))
        .fold((lo, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
        .0
}

/// Argmax of `f` over `[lo0, hi0] x [lo1, hi1]` on a uniform grid.
pub fn grid_argmax_2d(a: (f64, f64), b: (f64, f64), step: f64, f: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let na = ((a.1 - a.0) / step).round() as usize;
    let nb = ((b.1 - b.0) / step).round() as usize;
    let mut best = ((a.0, b.0), f64::NEG_INFINITY);
    for i in 0..=na {
        for k in 0..=nb {
            let (x, y) = (a.0 + i as f64 * step, b.0 + k as f64 * step);
            let v = f(x, y);
            if v > best.1 {
                best = ((x, y), v);
            }
        }
    }
    best.0
}

pub fn gaussian<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.sample(StandardNormal)).collect()
}

/// Uniform draw from the `l_2` ball of radius `r` in `R^k`.
pub fn in_l2_ball<R: Rng>(rng: &mut R, k: usize, r: f64) -> Vec<f64> {
    let g = gaussian(rng, k);
    let len = dot(&g, &g).sqrt().max(f64::MIN_POSITIVE);
    let scale = r * rng.random::<f64>().powf(1.0 / k as f64) / len;
    g.iter().map(|x| x * scale).collect()
}

/// A member `(θ + δ)(Φ + Δ)ᵀ` of the exact joint set of one buyer, by
/// rejection: perturb both factors inside their balls, restore the total
/// with a rank-one change of `Δ`, and keep the draw if the ball and the
/// orthant still hold.
pub fn sample_joint_member<R: Rng>(
    rng: &mut R,
    theta: &[f64],
    phi: &DMatrix<f64>,
    eps1: f64,
    eps2: f64,
    max_tries: usize,
) -> Option<Vec<f64>> {
    let (m, d) = (phi.nrows(), phi.ncols());
    let total: f64 = (0..m).map(|j| (0..d).map(|l| phi[(j, l)] * theta[l]).sum::<f64>()).sum();
    let r1 = eps1 * dot(theta, theta).sqrt();
    let r2 = eps2 * phi.norm();
    for _ in 0..max_tries {
        let delta = in_l2_ball(rng, d, r1);
        let th: Vec<f64> = theta.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let flat = in_l2_ball(rng, m * d, r2);
        let mut big_delta = DMatrix::from_row_slice(m, d, &flat);
        let current: f64 = (0..m)
            .map(|j| (0..d).map(|l| (phi[(j, l)] + big_delta[(j, l)]) * th[l]).sum::<f64>())
            .sum();
        let tt = dot(&th, &th);
        if tt == 0.0 {
            continue;
        }
        let alpha = (total - current) / m as f64;
        for j in 0..m {
            for l in 0..d {
                big_delta[(j, l)] += alpha * th[l] / tt;
            }
        }
        if big_delta.norm() > r2 {
            continue;
        }
        let v: Vec<f64> = (0..m)
            .map(|j| (0..d).map(|l| (phi[(j, l)] + big_delta[(j, l)]) * th[l]).sum())
            .collect();
        if v.iter().all(|&x| x >= 0.0) {
            return Some(v);
        }
    }
    None
}
