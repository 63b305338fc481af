//! Exact Euclidean projections onto the simple sets that uncertainty sets and
//! allocation constraints are built from, and Dykstra's method for their
//! intersections.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::vecops::{dot, norm1, norm2};

/// Reference norm of an uncertainty ball. Serialized as the integer 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    pub fn of(self, x: &[f64]) -> f64 {
        match self {
            Norm::L1 => norm1(x),
            Norm::L2 => norm2(x),
        }
    }

    /// Evaluates the dual norm (`l_inf` for `l_1`, `l_2` for `l_2`).
    pub fn dual_of(self, x: &[f64]) -> f64 {
        match self {
            Norm::L1 => crate::vecops::norm_inf(x),
            Norm::L2 => norm2(x),
        }
    }
}

impl TryFrom<u8> for Norm {
    type Error = String;

    fn try_from(p: u8) -> Result<Self, Self::Error> {
        match p {
            1 => Ok(Norm::L1),
            2 => Ok(Norm::L2),
            other => Err(format!("unsupported norm p = {other}; only 1 and 2 are allowed")),
        }
    }
}

impl From<Norm> for u8 {
    fn from(n: Norm) -> u8 {
        match n {
            Norm::L1 => 1,
            Norm::L2 => 2,
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

pub fn project_orthant(point: &[f64]) -> Vec<f64> {
    point.iter().map(|&x| x.max(0.0)).collect()
}

/// Projection onto `{x : normal·x = offset}`.
pub fn project_hyperplane(point: &[f64], normal: &[f64], offset: f64) -> Vec<f64> {
    let nn = dot(normal, normal);
    if nn == 0.0 {
        return point.to_vec();
    }
    let shift = (dot(normal, point) - offset) / nn;
    point.iter().zip(normal).map(|(x, a)| x - shift * a).collect()
}

/// Projection onto `{x : normal·x <= offset}`.
pub fn project_halfspace(point: &[f64], normal: &[f64], offset: f64) -> Vec<f64> {
    if dot(normal, point) <= offset {
        point.to_vec()
    } else {
        project_hyperplane(point, normal, offset)
    }
}

pub fn project_l2_ball(point: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    let diff: Vec<f64> = point.iter().zip(center).map(|(x, c)| x - c).collect();
    let dist = norm2(&diff);
    if dist <= radius {
        return point.to_vec();
    }
    let scale = radius / dist;
    center.iter().zip(&diff).map(|(c, d)| c + scale * d).collect()
}

/// Projection onto `{x >= 0, sum(x) = total}` by the sorted-threshold rule.
pub fn project_simplex(point: &[f64], total: f64) -> Vec<f64> {
    let tau = simplex_threshold(point, total);
    point.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// The shift `tau` such that `sum(max(point - tau, 0)) = total`.
pub(crate) fn simplex_threshold(point: &[f64], total: f64) -> f64 {
    let mut sorted = point.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = sorted[0] - total;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - total) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    tau
}

pub fn project_l1_ball(point: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    let diff: Vec<f64> = point.iter().zip(center).map(|(x, c)| x - c).collect();
    if norm1(&diff) <= radius {
        return point.to_vec();
    }
    if radius <= 0.0 {
        return center.to_vec();
    }
    let abs: Vec<f64> = diff.iter().map(|d| d.abs()).collect();
    let shrunk = project_simplex(&abs, radius);
    center
        .iter()
        .zip(diff.iter().zip(&shrunk))
        .map(|(c, (d, w))| c + d.signum() * w)
        .collect()
}

pub fn project_ball(point: &[f64], center: &[f64], radius: f64, norm: Norm) -> Vec<f64> {
    match norm {
        Norm::L1 => project_l1_ball(point, center, radius),
        Norm::L2 => project_l2_ball(point, center, radius),
    }
}

/// Projection onto `{y >= 0, sum(y) <= cap}`.
pub fn project_capped_simplex(point: &[f64], cap: f64) -> Vec<f64> {
    let clipped = project_orthant(point);
    if clipped.iter().sum::<f64>() <= cap {
        clipped
    } else {
        project_simplex(point, cap)
    }
}

/// Projection onto `{0 <= z <= 1, prices·z <= budget}` for nonnegative
/// prices and a positive budget.
pub fn project_box_budget(point: &[f64], prices: &[f64], budget: f64) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        point
            .iter()
            .zip(prices)
            .map(|(&y, &p)| (y - lambda * p).clamp(0.0, 1.0))
            .collect()
    };
    let z0 = at(0.0);
    if dot(&z0, prices) <= budget {
        return z0;
    }
    // Above this multiplier every priced coordinate is clipped to zero.
    let mut hi = point
        .iter()
        .zip(prices)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&y, &p)| y / p)
        .fold(0.0, f64::max);
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dot(&at(mid), prices) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

/// One closed convex set participating in a Dykstra cycle.
#[derive(Debug, Clone, Copy)]
pub enum SetComponent<'a> {
    Ball {
        center: &'a [f64],
        radius: f64,
        norm: Norm,
    },
    /// `normal·x = offset`
    Hyperplane { normal: &'a [f64], offset: f64 },
    /// `normal·x <= offset`
    Halfspace { normal: &'a [f64], offset: f64 },
    Orthant,
    /// Origin-centered ball acting on the coordinates `start..start + len`.
    BlockBall {
        start: usize,
        len: usize,
        radius: f64,
        norm: Norm,
    },
}

impl SetComponent<'_> {
    pub fn project(&self, point: &[f64]) -> Vec<f64> {
        project_onto_set_component(self, point)
    }

    /// Distance-like violation of membership; zero inside the set.
    pub fn violation(&self, point: &[f64]) -> f64 {
        match *self {
            SetComponent::Ball {
                center,
                radius,
                norm,
            } => {
                let diff: Vec<f64> = point.iter().zip(center).map(|(x, c)| x - c).collect();
                (norm.of(&diff) - radius).max(0.0)
            }
            SetComponent::Hyperplane { normal, offset } => {
                (dot(normal, point) - offset).abs() / norm2(normal).max(f64::MIN_POSITIVE)
            }
            SetComponent::Halfspace { normal, offset } => {
                (dot(normal, point) - offset).max(0.0) / norm2(normal).max(f64::MIN_POSITIVE)
            }
            SetComponent::Orthant => point.iter().fold(0.0, |acc: f64, &x| acc.max(-x)),
            SetComponent::BlockBall {
                start,
                len,
                radius,
                norm,
            } => (norm.of(&point[start..start + len]) - radius).max(0.0),
        }
    }
}

pub fn project_onto_set_component(component: &SetComponent<'_>, point: &[f64]) -> Vec<f64> {
    match *component {
        SetComponent::Ball {
            center,
            radius,
            norm,
        } => project_ball(point, center, radius, norm),
        SetComponent::Hyperplane { normal, offset } => project_hyperplane(point, normal, offset),
        SetComponent::Halfspace { normal, offset } => project_halfspace(point, normal, offset),
        SetComponent::Orthant => project_orthant(point),
        SetComponent::BlockBall {
            start,
            len,
            radius,
            norm,
        } => {
            let mut out = point.to_vec();
            let block = &point[start..start + len];
            let projected = project_ball(block, &vec![0.0; len], radius, norm);
            out[start..start + len].copy_from_slice(&projected);
            out
        }
    }
}

pub const DYKSTRA_MAX_ITERS: usize = 10_000;
pub const DYKSTRA_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DykstraResult {
    pub point: Vec<f64>,
    pub cycles: usize,
    /// Largest component violation at the returned point.
    pub residual: f64,
    pub converged: bool,
}

/// Dykstra's alternating projections onto the intersection of `components`,
/// cycled in the given order.
pub fn dykstra(
    point: &[f64],
    components: &[SetComponent<'_>],
    max_cycles: usize,
    tol: f64,
) -> DykstraResult {
    let dim = point.len();
    let mut x = point.to_vec();
    let mut increments = vec![vec![0.0; dim]; components.len()];
    let mut cycles = 0;
    let mut residual = max_violation(components, &x);
    while cycles < max_cycles {
        cycles += 1;
        let mut moved: f64 = 0.0;
        for (component, inc) in components.iter().zip(increments.iter_mut()) {
            let y: Vec<f64> = x.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
            let next = component.project(&y);
            for k in 0..dim {
                inc[k] = y[k] - next[k];
                moved = moved.max((next[k] - x[k]).abs());
            }
            x = next;
        }
        residual = max_violation(components, &x);
        if residual <= tol && moved <= tol {
            return DykstraResult {
                point: x,
                cycles,
                residual,
                converged: true,
            };
        }
    }
    DykstraResult {
        point: x,
        cycles,
        residual,
        converged: residual <= tol,
    }
}

pub fn max_violation(components: &[SetComponent<'_>], point: &[f64]) -> f64 {
    components
        .iter()
        .map(|c| c.violation(point))
        .fold(0.0, f64::max)
}
