//! Valuation uncertainty sets and robust utilities.
//!
//! Every set handled here has the shape
//!
//! ```text
//! V_i = { v >= 0, v·1 = v_hat_i·1 } ∩ ( v_hat_i + A_1 B_1 + ... + A_K B_K )
//! ```
//!
//! where each `B_k` is an origin-centered `l_1` or `l_2` ball and `A_k` is
//! either the identity or the good-embedding matrix `phi`. The direct model
//! is one identity block, the buyerside model one `phi` block, and the
//! joint outer approximation one `phi` block plus one identity block.
//!
//! A robust utility `u_i(z) = min { v·z : v ∈ V_i }` is returned as a
//! certified bracket: the upper end is `v·z` at a feasible witness `v`, the
//! lower end is the dual value
//!
//! ```text
//! D(y) = v_hat·y + s·min_j (z_j - y_j) - S(y),   S(y) = Σ_k r_k ‖A_kᵀ y‖_*
//! ```
//!
//! which is a lower bound for every `y`.

mod direct;
mod pdhg;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::Market;
use crate::projection::Norm;
use crate::vecops::{dot, min_value, norm2};

pub use pdhg::WarmStart;

/// Default absolute tolerance on the width of a robust-utility bracket.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Witness feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// User-facing description of an uncertainty model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum UncertaintySpec {
    /// Ball of radius `eps·‖v_hat_i‖_p` around the nominal valuation.
    Direct { p: Norm, eps: f64 },
    /// Ball of radius `eps·‖theta_i‖_p` around the buyer embedding.
    Buyerside { p: Norm, eps: f64 },
    /// Outer approximation of joint `l_2` / Frobenius perturbations of both
    /// embeddings.
    JointOuter { eps1: f64, eps2: f64 },
}

impl UncertaintySpec {
    /// The zero-radius model: every set collapses to `{v_hat_i}`.
    pub fn nominal() -> Self {
        UncertaintySpec::Direct {
            p: Norm::L2,
            eps: 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UncertaintySpec::Direct { .. } => "direct",
            UncertaintySpec::Buyerside { .. } => "buyerside",
            UncertaintySpec::JointOuter { .. } => "joint_outer",
        }
    }

    /// Same family with every radius replaced by `eps`.
    pub fn with_eps(self, eps: f64) -> Self {
        match self {
            UncertaintySpec::Direct { p, .. } => UncertaintySpec::Direct { p, eps },
            UncertaintySpec::Buyerside { p, .. } => UncertaintySpec::Buyerside { p, eps },
            UncertaintySpec::JointOuter { .. } => UncertaintySpec::JointOuter {
                eps1: eps,
                eps2: eps,
            },
        }
    }

    fn radii(&self) -> Vec<f64> {
        match *self {
            UncertaintySpec::Direct { eps, .. } | UncertaintySpec::Buyerside { eps, .. } => {
                vec![eps]
            }
            UncertaintySpec::JointOuter { eps1, eps2 } => vec![eps1, eps2],
        }
    }

    /// Rejects negative or non-finite radii.
    pub fn check(&self) -> Result<()> {
        for eps in self.radii() {
            if !eps.is_finite() || eps < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "radius must be finite and nonnegative, got {eps}"
                )));
            }
        }
        Ok(())
    }

    /// Radii of one or more are accepted but outside the intended regime.
    pub fn has_large_radius(&self) -> bool {
        self.radii().iter().any(|&e| e >= 1.0)
    }

    pub fn is_nominal(&self) -> bool {
        self.radii().iter().all(|&e| e == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BlockMap {
    Identity,
    Factor,
}

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub map: BlockMap,
    pub norm: Norm,
    pub radius: f64,
}

/// Shape and radius of one block, as seen by the equilibrium solver.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ParamBlock {
    pub map: BlockMap,
    pub norm: Norm,
    pub radius: f64,
    pub offset: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
struct BuyerSet {
    center: Vec<f64>,
    total: f64,
    blocks: Vec<Block>,
    theta: Option<Vec<f64>>,
}

/// Result of one robust-utility evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustUtilityResult {
    /// Midpoint of the bracket.
    pub value: f64,
    /// Feasible minimizer candidate; `worst_v·z == upper_bound`.
    pub worst_v: Vec<f64>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before the bracket closed.
    pub converged: bool,
}

impl RobustUtilityResult {
    pub fn width(&self) -> f64 {
        self.upper_bound - self.lower_bound
    }
}

/// Uncertainty sets of every buyer of one market.
#[derive(Debug, Clone)]
pub struct UncertaintyModel {
    spec: UncertaintySpec,
    m: usize,
    d: usize,
    /// `phi` in row-major order (`m x d`), empty for the direct model.
    phi: Vec<f64>,
    sigma_max: f64,
    phi_fro: f64,
    /// `phi` row norms in the dual norm of the factor block.
    phi_row_dual_max: f64,
    buyers: Vec<BuyerSet>,
}

impl UncertaintyModel {
    pub fn new(spec: UncertaintySpec, market: &Market) -> Result<Self> {
        spec.check()?;
        let m = market.m();
        let factors = market.factors();
        if !matches!(spec, UncertaintySpec::Direct { .. }) && factors.is_none() {
            return Err(Error::InvalidModel(format!(
                "{} requires factored valuations",
                spec.name()
            )));
        }
        let (d, phi, sigma_max, phi_fro) = match factors {
            Some((_, phi)) if !matches!(spec, UncertaintySpec::Direct { .. }) => {
                let d = phi.ncols();
                let rm: Vec<f64> = (0..m)
                    .flat_map(|j| (0..d).map(move |l| phi[(j, l)]))
                    .collect();
                (d, rm, spectral_norm(phi), phi.norm())
            }
            _ => (0, Vec::new(), 0.0, 0.0),
        };
        let factor_norm = match spec {
            UncertaintySpec::Buyerside { p, .. } => Some(p),
            UncertaintySpec::JointOuter { .. } => Some(Norm::L2),
            UncertaintySpec::Direct { .. } => None,
        };
        let phi_row_dual_max = match factor_norm {
            Some(norm) => (0..m)
                .map(|j| match norm {
                    Norm::L1 => crate::vecops::norm_inf(&phi[j * d..(j + 1) * d]),
                    Norm::L2 => norm2(&phi[j * d..(j + 1) * d]),
                })
                .fold(0.0, f64::max),
            None => 0.0,
        };

        let buyers = (0..market.n())
            .map(|i| {
                let center = market.nominal_row(i);
                let total = center.iter().sum();
                let theta = factors.map(|(t, _)| t.row(i).iter().copied().collect::<Vec<f64>>());
                let blocks = match spec {
                    UncertaintySpec::Direct { p, eps } => vec![Block {
                        map: BlockMap::Identity,
                        norm: p,
                        radius: eps * p.of(&center),
                    }],
                    UncertaintySpec::Buyerside { p, eps } => vec![Block {
                        map: BlockMap::Factor,
                        norm: p,
                        radius: eps * p.of(theta.as_deref().unwrap_or(&[])),
                    }],
                    UncertaintySpec::JointOuter { eps1, eps2 } => {
                        let t = norm2(theta.as_deref().unwrap_or(&[]));
                        vec![
                            Block {
                                map: BlockMap::Factor,
                                norm: Norm::L2,
                                radius: eps1 * t,
                            },
                            Block {
                                map: BlockMap::Identity,
                                norm: Norm::L2,
                                radius: (eps2 + eps1 * eps2) * t * phi_fro,
                            },
                        ]
                    }
                };
                BuyerSet {
                    center,
                    total,
                    blocks,
                    theta,
                }
            })
            .collect();

        Ok(UncertaintyModel {
            spec,
            m,
            d,
            phi,
            sigma_max,
            phi_fro,
            phi_row_dual_max,
            buyers,
        })
    }

    pub fn spec(&self) -> UncertaintySpec {
        self.spec
    }

    pub fn n(&self) -> usize {
        self.buyers.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Largest singular value of `phi` (zero for the direct model).
    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn phi_frobenius(&self) -> f64 {
        self.phi_fro
    }

    pub fn nominal(&self, buyer: usize) -> Result<&[f64]> {
        Ok(&self.buyer(buyer)?.center)
    }

    /// Radii `r_k` of the perturbation blocks of one buyer.
    pub fn radii(&self, buyer: usize) -> Result<Vec<f64>> {
        Ok(self.buyer(buyer)?.blocks.iter().map(|b| b.radius).collect())
    }

    fn buyer(&self, buyer: usize) -> Result<&BuyerSet> {
        self.buyers.get(buyer).ok_or(Error::BuyerIndex {
            index: buyer,
            n: self.buyers.len(),
        })
    }

    fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.m {
            return Err(Error::Dimension(format!(
                "bundle has {} entries, market has {} goods",
                z.len(),
                self.m
            )));
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("bundle must be finite".into()));
        }
        Ok(())
    }

    pub(crate) fn phi_row(&self, j: usize) -> &[f64] {
        &self.phi[j * self.d..(j + 1) * self.d]
    }

    /// `phi·delta`, accumulated into `out`.
    pub(crate) fn add_phi(&self, delta: &[f64], scale: f64, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o += scale * dot(self.phi_row(j), delta);
        }
    }

    /// `phiᵀ·w` written into `out`.
    pub(crate) fn phi_t(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                for (o, &f) in out.iter_mut().zip(self.phi_row(j)) {
                    *o += wj * f;
                }
            }
        }
    }

    pub(crate) fn block_dim(&self, block: &Block) -> usize {
        match block.map {
            BlockMap::Identity => self.m,
            BlockMap::Factor => self.d,
        }
    }

    /// Support function `S(w) = max { e·w : e ∈ Σ_k A_k B_k }` of the
    /// centered perturbation set.
    pub fn support(&self, buyer: usize, w: &[f64]) -> Result<f64> {
        let set = self.buyer(buyer)?;
        self.check_len(w)?;
        Ok(self.support_of(set, w))
    }

    fn support_of(&self, set: &BuyerSet, w: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.d];
        set.blocks
            .iter()
            .map(|b| {
                if b.radius == 0.0 {
                    return 0.0;
                }
                match b.map {
                    BlockMap::Identity => b.radius * b.norm.dual_of(w),
                    BlockMap::Factor => {
                        self.phi_t(w, &mut scratch);
                        b.radius * b.norm.dual_of(&scratch)
                    }
                }
            })
            .sum()
    }

    /// `D(y) = v_hat·y + s·min(z − y) − S(y)`, a lower bound on `u(z)`
    /// for every `y`.
    pub fn dual_value(&self, buyer: usize, z: &[f64], y: &[f64]) -> Result<f64> {
        let set = self.buyer(buyer)?;
        self.check_len(z)?;
        self.check_len(y)?;
        Ok(self.dual_value_of(set, z, y))
    }

    fn dual_value_of(&self, set: &BuyerSet, z: &[f64], y: &[f64]) -> f64 {
        let gap = z
            .iter()
            .zip(y)
            .map(|(a, b)| a - b)
            .fold(f64::INFINITY, f64::min);
        dot(&set.center, y) + set.total * gap - self.support_of(set, y)
    }

    /// The Lagrangian lower bound `v_hat·(z − λ) − S(z − λ + μ1)`, valid for
    /// every `λ >= 0` and every real `μ`.
    pub fn dual_lower_bound(&self, buyer: usize, z: &[f64], lambda: &[f64], mu: f64) -> Result<f64> {
        let set = self.buyer(buyer)?;
        self.check_len(z)?;
        self.check_len(lambda)?;
        if lambda.iter().any(|&l| l < 0.0) {
            return Err(Error::InvalidParameter("lambda must be nonnegative".into()));
        }
        let shifted: Vec<f64> = z.iter().zip(lambda).map(|(a, l)| a - l).collect();
        let w: Vec<f64> = shifted.iter().map(|x| x + mu).collect();
        Ok(dot(&set.center, &shifted) - self.support_of(set, &w))
    }

    pub fn robust_utility(&self, buyer: usize, z: &[f64], tol: f64) -> Result<RobustUtilityResult> {
        let mut warm = WarmStart::default();
        self.robust_utility_warm(buyer, z, tol, &mut warm)
    }

    /// Same as [`robust_utility`](Self::robust_utility), reusing and updating
    /// iterative state from an earlier call for the same buyer.
    pub fn robust_utility_warm(
        &self,
        buyer: usize,
        z: &[f64],
        tol: f64,
        warm: &mut WarmStart,
    ) -> Result<RobustUtilityResult> {
        let set = self.buyer(buyer)?;
        self.check_len(z)?;
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
        }
        if let Some(result) = self.trivial(set, z) {
            return Ok(result);
        }
        Ok(match (set.blocks.as_slice(), self.spec) {
            ([block], UncertaintySpec::Direct { .. }) => match block.norm {
                Norm::L2 => direct::l2(self, set, z),
                Norm::L1 => direct::l1(self, set, z),
            },
            _ => pdhg::solve(self, set, z, tol, warm, pdhg::MAX_ITERS),
        })
    }

    /// True when [`robust_utility`](Self::robust_utility) is a closed-form
    /// computation rather than an iteration.
    pub fn has_exact_evaluator(&self) -> bool {
        matches!(self.spec, UncertaintySpec::Direct { .. })
    }

    /// Evaluates with the generic primal-dual method even where an exact
    /// path exists. Used to cross-check the exact paths.
    pub fn robust_utility_iterative(
        &self,
        buyer: usize,
        z: &[f64],
        tol: f64,
        max_iters: usize,
    ) -> Result<RobustUtilityResult> {
        let set = self.buyer(buyer)?;
        self.check_len(z)?;
        if let Some(result) = self.trivial(set, z) {
            return Ok(result);
        }
        Ok(pdhg::solve(self, set, z, tol, &mut WarmStart::default(), max_iters))
    }

    /// Blocks of buyer `buyer` with their offsets in the stacked parameter
    /// vector. Block shapes are shared by all buyers; radii are not.
    pub(crate) fn param_blocks(&self, buyer: usize) -> Result<Vec<ParamBlock>> {
        let set = self.buyer(buyer)?;
        let lay = pdhg::layout(self, set);
        Ok(set
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| ParamBlock {
                map: b.map,
                norm: b.norm,
                radius: b.radius,
                offset: lay.offsets[k],
                dim: lay.dims[k],
            })
            .collect())
    }

    /// Exactly feasible valuation `v_hat + Σ_k A_k θ_k` after removing the
    /// conservation drift and shrinking into the balls and the orthant.
    pub(crate) fn valuation_from_params(&self, buyer: usize, theta: &[f64]) -> Option<Vec<f64>> {
        let set = &self.buyers[buyer];
        let lay = pdhg::layout(self, set);
        let ones_t = pdhg::conservation_direction(self, set, &lay);
        pdhg::repair(self, set, &lay, theta, &ones_t)
    }

    /// Largest column sum of `|phi|`, the row sum of `|phi|` for good `j`.
    pub(crate) fn phi_abs_sums(&self) -> (f64, Vec<f64>) {
        let d = self.d;
        let col_max = (0..d)
            .map(|l| (0..self.m).map(|j| self.phi[j * d + l].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let rows = (0..self.m)
            .map(|j| self.phi_row(j).iter().map(|f| f.abs()).sum())
            .collect();
        (col_max, rows)
    }

    /// Singleton sets and constant bundles need no iteration.
    fn trivial(&self, set: &BuyerSet, z: &[f64]) -> Option<RobustUtilityResult> {
        let zmin = min_value(z);
        let constant = z.iter().all(|&x| x == zmin);
        let singleton = set.blocks.iter().all(|b| b.radius == 0.0);
        if !(constant || singleton) {
            return None;
        }
        let value = dot(&set.center, z);
        Some(RobustUtilityResult {
            value,
            worst_v: set.center.clone(),
            lower_bound: value,
            upper_bound: value,
            iterations: 0,
            converged: true,
        })
    }

    /// Largest violation of membership of `v` in the outer description:
    /// orthant, conservation, and (for the direct model) the ball.
    /// Factor blocks are checked through [`contains_with`](Self::contains_with).
    pub fn direct_violation(&self, buyer: usize, v: &[f64]) -> Result<f64> {
        let set = self.buyer(buyer)?;
        self.check_len(v)?;
        let mut viol = simplex_violation(v, set.total);
        if let ([block], UncertaintySpec::Direct { .. }) = (set.blocks.as_slice(), self.spec) {
            let diff: Vec<f64> = v.iter().zip(&set.center).map(|(a, c)| a - c).collect();
            viol = viol.max(block.norm.of(&diff) - block.radius);
        }
        Ok(viol.max(0.0))
    }

    /// Upper bound on the `l_1` diameter `max ‖v − v'‖_1` over `V_i`.
    pub fn l1_width_upper_bound(&self, buyer: usize) -> Result<f64> {
        let set = self.buyer(buyer)?;
        let root_m = (self.m as f64).sqrt();
        Ok(match self.spec {
            UncertaintySpec::Direct { p, .. } => {
                let r = set.blocks[0].radius;
                match p {
                    Norm::L1 => 2.0 * r,
                    Norm::L2 => 2.0 * r * root_m,
                }
            }
            UncertaintySpec::Buyerside { .. } => {
                // ‖phi δ‖_1 <= √m σ_max ‖δ‖_2 <= √m σ_max ‖δ‖_p
                2.0 * set.blocks[0].radius * self.sigma_max * root_m
            }
            UncertaintySpec::JointOuter { .. } => {
                2.0 * root_m * (set.blocks[0].radius * self.sigma_max + set.blocks[1].radius)
            }
        })
    }

    /// Upper bound on `max |v_j − v'_j|` over `V_i` and goods `j`.
    pub fn elementwise_range_bound(&self, buyer: usize) -> Result<f64> {
        let set = self.buyer(buyer)?;
        Ok(match self.spec {
            UncertaintySpec::Direct { .. } => 2.0 * set.blocks[0].radius,
            UncertaintySpec::Buyerside { .. } => 2.0 * set.blocks[0].radius * self.phi_row_dual_max,
            UncertaintySpec::JointOuter { .. } => {
                2.0 * (set.blocks[0].radius * self.phi_row_dual_max + set.blocks[1].radius)
            }
        })
    }

    /// Draws a member of the outer description `v_hat + Σ A_k B_k` restricted
    /// to the conservation hyperplane and the orthant, by rejection. Each
    /// block's draw is projected onto its part of the conservation
    /// constraint and kept only if it is still in its ball.
    /// Returns `None` when `max_tries` proposals all fail.
    pub fn sample_member<R: Rng + ?Sized>(
        &self,
        buyer: usize,
        rng: &mut R,
        max_tries: usize,
    ) -> Result<Option<Vec<f64>>> {
        let set = self.buyer(buyer)?;
        let ones = vec![1.0; self.m];
        let mut phi_ones = vec![0.0; self.d];
        self.phi_t(&ones, &mut phi_ones);
        'draw: for _ in 0..max_tries {
            let mut v = set.center.clone();
            for block in &set.blocks {
                let mut delta = sample_in_ball(rng, self.block_dim(block), block.radius, block.norm);
                let normal = match block.map {
                    BlockMap::Identity => &ones,
                    BlockMap::Factor => &phi_ones,
                };
                let nn = dot(normal, normal);
                if nn > 0.0 {
                    let shift = dot(normal, &delta) / nn;
                    delta.iter_mut().zip(normal).for_each(|(x, a)| *x -= shift * a);
                }
                if block.norm.of(&delta) > block.radius {
                    continue 'draw;
                }
                match block.map {
                    BlockMap::Identity => v.iter_mut().zip(&delta).for_each(|(a, x)| *a += x),
                    BlockMap::Factor => self.add_phi(&delta, 1.0, &mut v),
                }
            }
            if v.iter().all(|&x| x >= 0.0) {
                return Ok(Some(v));
            }
        }
        Ok(None)
    }

    pub fn theta(&self, buyer: usize) -> Result<Option<&[f64]>> {
        Ok(self.buyer(buyer)?.theta.as_deref())
    }

    /// Membership of `v` in the outer description given explicit block
    /// coefficients `deltas` (one vector per block); returns the largest
    /// residual.
    pub fn contains_with(&self, buyer: usize, v: &[f64], deltas: &[Vec<f64>]) -> Result<f64> {
        let set = self.buyer(buyer)?;
        self.check_len(v)?;
        if deltas.len() != set.blocks.len() {
            return Err(Error::Dimension("one coefficient vector per block".into()));
        }
        let mut recon = set.center.clone();
        let mut viol: f64 = 0.0;
        for (block, delta) in set.blocks.iter().zip(deltas) {
            if delta.len() != self.block_dim(block) {
                return Err(Error::Dimension("block coefficient length".into()));
            }
            viol = viol.max(block.norm.of(delta) - block.radius);
            match block.map {
                BlockMap::Identity => recon.iter_mut().zip(delta).for_each(|(r, x)| *r += x),
                BlockMap::Factor => self.add_phi(delta, 1.0, &mut recon),
            }
        }
        let recon_err = recon
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(viol.max(recon_err).max(simplex_violation(v, set.total)).max(0.0))
    }
}

fn simplex_violation(v: &[f64], total: f64) -> f64 {
    let neg = v.iter().fold(0.0, |acc: f64, &x| acc.max(-x));
    neg.max((v.iter().sum::<f64>() - total).abs())
}

/// Largest singular value of `a`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = a.transpose() * a;
    gram.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .max(0.0)
        .sqrt()
}

/// Uniform-direction, uniform-radius draw from a centered ball.
fn sample_in_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64, norm: Norm) -> Vec<f64> {
    if dim == 0 || radius == 0.0 {
        return vec![0.0; dim];
    }
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let len = norm.of(&dir);
    if len == 0.0 {
        return vec![0.0; dim];
    }
    let scale = radius * rng.random::<f64>() / len;
    dir.iter().map(|x| x * scale).collect()
}
