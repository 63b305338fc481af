//! Restarted primal-dual hybrid gradient on the saddle function of the
//! Eisenberg-Gale program.
//!
//! The minimizing side holds prices `p >= 0` and, per buyer, a pacing
//! multiplier `β_i`, a scaled valuation `w_i ∈ β_i·{v >= 0, v·1 = s_i}` and
//! block parameters `κ_ik ∈ β_i r_k B_k`, with objective
//! `Σ p_j − Σ b_i log β_i` (and `β_i <= 1` in quasi markets). The maximizing
//! side holds the allocation `x_ij >= 0`, paired with `w_ij <= p_j`, and
//! `y_i`, paired with `w_i = β_i v_hat_i + Σ_k A_k κ_ik`. At a saddle point
//! `v_hat_i + Σ_k A_k κ_ik / β_i` is a worst-case witness for `x_i`.
//!
//! Steps are diagonally scaled. Every few iterations the better of the
//! current point and the running average (by fixed-point residual) becomes
//! the candidate; the method restarts from it once the residual has dropped
//! enough, rebalancing the primal weight.

use super::{project_column_capped_simplex, snapshot, EquilibriumSolution, Snapshot, SolverParams};
use crate::certify::dual_objective;
use crate::error::Result;
use crate::market::{Market, MarketKind};
use crate::projection::{project_capped_simplex, Norm};
use crate::uncertainty::{BlockMap, ParamBlock, RobustUtilityResult, UncertaintyModel, WarmStart};
use crate::vecops::{dot, norm2};

const RESTART_CHECK: usize = 64;
const SUFFICIENT_DECAY: f64 = 0.2;
const NECESSARY_DECAY: f64 = 0.8;
const ARTIFICIAL_FRACTION: f64 = 0.36;
const PROX_STEPS: usize = 100;
const SELECT_ITERS: usize = 5000;
const SELECT_CHECK: usize = 64;
const SELECT_PATIENCE: usize = 16;

#[derive(Debug, Clone)]
struct Point {
    p: Vec<f64>,
    beta: Vec<f64>,
    /// `n x m`, row-major.
    w: Vec<f64>,
    /// `n x pd`, row-major.
    kappa: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Point {
    fn average_in(&mut self, other: &Point, weight: f64) {
        let mix = |a: &mut Vec<f64>, b: &Vec<f64>| {
            a.iter_mut().zip(b).for_each(|(s, t)| *s += weight * (t - *s));
        };
        mix(&mut self.p, &other.p);
        mix(&mut self.beta, &other.beta);
        mix(&mut self.w, &other.w);
        mix(&mut self.kappa, &other.kappa);
        mix(&mut self.x, &other.x);
        mix(&mut self.y, &other.y);
    }
}

/// Values sorted in decreasing order with prefix sums, for repeated
/// threshold queries at different totals.
#[derive(Debug, Default)]
struct Sorted {
    vals: Vec<f64>,
    cum: Vec<f64>,
}

impl Sorted {
    fn load(&mut self, values: impl Iterator<Item = f64>) {
        self.vals.clear();
        self.vals.extend(values);
        self.vals.sort_unstable_by(|a, b| b.total_cmp(a));
        self.cum.clear();
        let mut acc = 0.0;
        for &v in &self.vals {
            acc += v;
            self.cum.push(acc);
        }
    }

    /// `(λ, k)` with `Σ max(u − λ, 0) = total` and `k` entries above `λ`.
    fn threshold(&self, total: f64) -> (f64, usize) {
        let mut lam = self.vals[0] - total;
        let mut k = 1;
        for (idx, (&u, &c)) in self.vals.iter().zip(&self.cum).enumerate() {
            let candidate = (c - total) / (idx + 1) as f64;
            if u > candidate {
                lam = candidate;
                k = idx + 1;
            } else {
                break;
            }
        }
        (lam, k)
    }
}

#[derive(Debug, Default)]
struct Scratch {
    w0: Vec<f64>,
    kappa0: Vec<f64>,
    aty: Vec<f64>,
    kbar: Vec<f64>,
    akbar: Vec<f64>,
    w_sorted: Sorted,
    k_sorted: Vec<Sorted>,
    k_norm: Vec<f64>,
}

struct Problem<'a> {
    model: &'a UncertaintyModel,
    n: usize,
    m: usize,
    pd: usize,
    budgets: &'a [f64],
    centers: Vec<f64>,
    totals: Vec<f64>,
    blocks: Vec<Vec<ParamBlock>>,
    quasi: bool,
    tau_p: f64,
    tau_w: f64,
    tau_beta: Vec<f64>,
    tau_kappa: Vec<f64>,
    sigma_x: f64,
    sigma_y: Vec<f64>,
    /// Price selection: `β` stays fixed, the price objective becomes
    /// `½‖p‖²` and `Σ p` is capped at this value.
    price_cap: Option<f64>,
}

impl<'a> Problem<'a> {
    fn new(market: &'a Market, model: &'a UncertaintyModel, kind: MarketKind) -> Result<Self> {
        let n = market.n();
        let m = market.m();
        let blocks = (0..n).map(|i| model.param_blocks(i)).collect::<Result<Vec<_>>>()?;
        let pd = blocks[0].iter().map(|b| b.dim).sum();
        let mut centers = Vec::with_capacity(n * m);
        for i in 0..n {
            centers.extend_from_slice(model.nominal(i)?);
        }
        let totals: Vec<f64> = centers.chunks(m).map(|c| c.iter().sum()).collect();
        let (phi_col_max, phi_rows) = model.phi_abs_sums();

        // Column and row sums of |K| give a convergent diagonal scaling.
        let tau_kappa = blocks[0]
            .iter()
            .map(|b| match b.map {
                BlockMap::Identity => 1.0,
                BlockMap::Factor => 1.0 / phi_col_max.max(f64::MIN_POSITIVE),
            })
            .collect();
        let mut sigma_y = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                let blocks_row: f64 = blocks[i]
                    .iter()
                    .map(|b| match b.map {
                        BlockMap::Identity => 1.0,
                        BlockMap::Factor => phi_rows[j],
                    })
                    .sum();
                sigma_y.push(1.0 / (1.0 + centers[i * m + j] + blocks_row));
            }
        }
        Ok(Problem {
            model,
            n,
            m,
            pd,
            budgets: market.budgets(),
            tau_beta: totals.iter().map(|s| 1.0 / s.max(f64::MIN_POSITIVE)).collect(),
            centers,
            totals,
            blocks,
            quasi: kind.is_quasi(),
            tau_p: 1.0 / n as f64,
            tau_w: 0.5,
            tau_kappa,
            sigma_x: 0.5,
            sigma_y,
            price_cap: None,
        })
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            w0: vec![0.0; self.m],
            kappa0: vec![0.0; self.pd],
            aty: vec![0.0; self.pd],
            kbar: vec![0.0; self.pd],
            akbar: vec![0.0; self.m],
            k_sorted: self.blocks[0].iter().map(|_| Sorted::default()).collect(),
            k_norm: vec![0.0; self.blocks[0].len()],
            ..Scratch::default()
        }
    }

    /// Dual point of the uniform allocation under nominal valuations.
    fn start(&self) -> Point {
        let (n, m) = (self.n, self.m);
        let beta: Vec<f64> = (0..n)
            .map(|i| {
                let beta = self.budgets[i] * n as f64 / self.totals[i].max(f64::MIN_POSITIVE);
                if self.quasi {
                    beta.min(1.0)
                } else {
                    beta
                }
            })
            .collect();
        let w: Vec<f64> = (0..n * m).map(|q| beta[q / m] * self.centers[q]).collect();
        let p = (0..m)
            .map(|j| (0..n).map(|i| w[i * m + j]).fold(0.0, f64::max))
            .collect();
        Point {
            p,
            beta,
            w,
            kappa: vec![0.0; n * self.pd],
            x: vec![1.0 / n as f64; n * m],
            y: vec![0.0; n * m],
        }
    }

    /// `out = Σ_k A_k θ_k`.
    fn apply(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for b in &self.blocks[i] {
            let part = &theta[b.offset..b.offset + b.dim];
            match b.map {
                BlockMap::Identity => out.iter_mut().zip(part).for_each(|(o, t)| *o += t),
                BlockMap::Factor => self.model.add_phi(part, 1.0, out),
            }
        }
    }

    /// `out_k = A_kᵀ w`.
    fn apply_t(&self, i: usize, w: &[f64], out: &mut [f64]) {
        for b in &self.blocks[i] {
            let part = &mut out[b.offset..b.offset + b.dim];
            match b.map {
                BlockMap::Identity => part.copy_from_slice(w),
                BlockMap::Factor => self.model.phi_t(w, part),
            }
        }
    }

    /// One iteration from `cur` into `out`.
    fn step(&self, cur: &Point, omega: f64, out: &mut Point, s: &mut Scratch) {
        let (n, m, pd) = (self.n, self.m, self.pd);
        let tw = self.tau_w / omega;
        for i in 0..n {
            let row = i * m..(i + 1) * m;
            let prow = i * pd..(i + 1) * pd;
            let c = &self.centers[row.clone()];
            let x = &cur.x[row.clone()];
            let y = &cur.y[row.clone()];
            let tb = self.tau_beta[i] / omega;
            let beta0 = cur.beta[i] + tb * dot(y, c);
            for j in 0..m {
                s.w0[j] = cur.w[i * m + j] - tw * (x[j] + y[j]);
            }
            self.apply_t(i, y, &mut s.aty);
            for (k, b) in self.blocks[i].iter().enumerate() {
                let tk = self.tau_kappa[k] / omega;
                for q in b.offset..b.offset + b.dim {
                    s.kappa0[q] = cur.kappa[prow.start + q] + tk * s.aty[q];
                }
            }

            let beta = if self.price_cap.is_some() {
                self.load(i, s);
                cur.beta[i]
            } else {
                self.prox_beta(i, beta0, tb, omega, cur.beta[i], s)
            };
            out.beta[i] = beta;
            let (lam, _) = s.w_sorted.threshold(beta * self.totals[i]);
            for j in 0..m {
                out.w[i * m + j] = (s.w0[j] - lam).max(0.0);
            }
            let kappa = &mut out.kappa[prow];
            for (k, b) in self.blocks[i].iter().enumerate() {
                let rho = beta * b.radius;
                let src = &s.kappa0[b.offset..b.offset + b.dim];
                let dst = &mut kappa[b.offset..b.offset + b.dim];
                if s.k_norm[k] <= rho {
                    dst.copy_from_slice(src);
                    continue;
                }
                match b.norm {
                    Norm::L2 => {
                        let shrink = rho / s.k_norm[k];
                        dst.iter_mut().zip(src).for_each(|(d, v)| *d = shrink * v);
                    }
                    Norm::L1 => {
                        let (mu, _) = s.k_sorted[k].threshold(rho);
                        dst.iter_mut()
                            .zip(src)
                            .for_each(|(d, v)| *d = v.signum() * (v.abs() - mu).max(0.0));
                    }
                }
            }
        }

        let tp = self.tau_p / omega;
        for j in 0..m {
            let sold: f64 = (0..n).map(|i| cur.x[i * m + j]).sum();
            out.p[j] = match self.price_cap {
                None => (cur.p[j] - tp * (1.0 - sold)).max(0.0),
                Some(_) => (cur.p[j] + tp * sold) / (1.0 + tp),
            };
        }
        if let Some(cap) = self.price_cap {
            out.p = project_capped_simplex(&out.p, cap);
        }

        let sx = self.sigma_x * omega;
        for i in 0..n {
            for q in 0..pd {
                s.kbar[q] = 2.0 * out.kappa[i * pd + q] - cur.kappa[i * pd + q];
            }
            self.apply(i, &s.kbar, &mut s.akbar);
            let beta_bar = 2.0 * out.beta[i] - cur.beta[i];
            for j in 0..m {
                let q = i * m + j;
                let w_bar = 2.0 * out.w[q] - cur.w[q];
                let p_bar = 2.0 * out.p[j] - cur.p[j];
                out.x[q] = (cur.x[q] + sx * (w_bar - p_bar)).max(0.0);
                let residual = w_bar - beta_bar * self.centers[q] - s.akbar[j];
                out.y[q] = cur.y[q] + self.sigma_y[q] * omega * residual;
            }
        }
    }

    /// Sorts the proximal points of the buyer's valuation and block
    /// parameters for the projections that follow.
    fn load(&self, i: usize, s: &mut Scratch) {
        s.w_sorted.load(s.w0.iter().copied());
        for (k, blk) in self.blocks[i].iter().enumerate() {
            let part = &s.kappa0[blk.offset..blk.offset + blk.dim];
            match blk.norm {
                Norm::L2 => s.k_norm[k] = norm2(part),
                Norm::L1 => {
                    s.k_sorted[k].load(part.iter().map(|v| v.abs()));
                    s.k_norm[k] = s.k_sorted[k].cum.last().copied().unwrap_or(0.0);
                }
            }
        }
    }

    /// Minimizes the buyer's proximal objective over `β`: the scaled
    /// valuation and the block parameters follow from `β` by projection,
    /// which leaves a convex function of one variable.
    fn prox_beta(&self, i: usize, beta0: f64, tb: f64, omega: f64, start: f64, s: &mut Scratch) -> f64 {
        let b = self.budgets[i];
        let total = self.totals[i];
        let tw = self.tau_w / omega;
        self.load(i, s);


        let derivs = |beta: f64| -> (f64, f64) {
            let (lam, kw) = s.w_sorted.threshold(beta * total);
            let mut g = (beta - beta0) / tb - b / beta - total * lam / tw;
            let mut h = 1.0 / tb + b / (beta * beta) + total * total / (kw as f64 * tw);
            for (k, blk) in self.blocks[i].iter().enumerate() {
                let r = blk.radius;
                let rho = beta * r;
                if r == 0.0 || s.k_norm[k] <= rho {
                    continue;
                }
                let tk = self.tau_kappa[k] / omega;
                match blk.norm {
                    Norm::L2 => {
                        g -= r * (s.k_norm[k] - rho) / tk;
                        h += r * r / tk;
                    }
                    Norm::L1 => {
                        let (mu, kk) = s.k_sorted[k].threshold(rho);
                        g -= r * mu / tk;
                        h += r * r / (kk as f64 * tk);
                    }
                }
            }
            (g, h)
        };

        let mut lo = 0.0;
        let mut hi = f64::INFINITY;
        if self.quasi {
            if derivs(1.0).0 <= 0.0 {
                return 1.0;
            }
            hi = 1.0;
        }
        let mut beta = if start > 0.0 && start < hi { start } else { 0.5 * hi.min(1.0) };
        for _ in 0..PROX_STEPS {
            let (g, h) = derivs(beta);
            if g == 0.0 {
                break;
            }
            if g > 0.0 {
                hi = beta;
            } else {
                lo = beta;
            }
            let mut next = beta - g / h;
            if !(next > lo && next < hi) {
                next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * beta };
            }
            let done = (next - beta).abs() <= 1e-15 * beta;
            beta = next;
            if done {
                break;
            }
        }
        beta
    }

    /// Scaled distance between two points; `a − step(a)` measures how far
    /// `a` is from a saddle point.
    fn distance(&self, a: &Point, b: &Point, omega: f64) -> f64 {
        let sq = |u: &[f64], v: &[f64], weight: &dyn Fn(usize) -> f64| -> f64 {
            u.iter()
                .zip(v)
                .enumerate()
                .map(|(q, (s, t))| weight(q) * (s - t) * (s - t))
                .sum()
        };
        let pd = self.pd;
        let kappa_weight = |q: usize| {
            let local = q % pd.max(1);
            let k = self.blocks[0]
                .iter()
                .position(|b| local < b.offset + b.dim)
                .unwrap_or(0);
            omega / self.tau_kappa[k]
        };
        let primal = sq(&a.p, &b.p, &|_| omega / self.tau_p)
            + sq(&a.beta, &b.beta, &|i| omega / self.tau_beta[i])
            + sq(&a.w, &b.w, &|_| omega / self.tau_w)
            + sq(&a.kappa, &b.kappa, &kappa_weight);
        let dual = sq(&a.x, &b.x, &|_| 1.0 / (omega * self.sigma_x))
            + sq(&a.y, &b.y, &|q| 1.0 / (omega * self.sigma_y[q]));
        (primal + dual).sqrt()
    }

    fn residual(&self, a: &Point, omega: f64, tmp: &mut Point, s: &mut Scratch) -> f64 {
        self.step(a, omega, tmp, s);
        self.distance(a, tmp, omega)
    }

    /// Allocation, witnesses and certified gap at a point.
    fn extract(
        &self,
        market: &Market,
        kind: MarketKind,
        pt: &Point,
        params: &SolverParams,
        warm: &mut [WarmStart],
        iters: usize,
        final_pass: bool,
    ) -> Result<Snapshot> {
        let (n, m, pd) = (self.n, self.m, self.pd);
        let mut x: Vec<Vec<f64>> = pt.x.chunks(m).map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect();
        for j in 0..m {
            let column: Vec<f64> = x.iter().map(|row| row[j]).collect();
            for (row, v) in x.iter_mut().zip(project_column_capped_simplex(&column, 1.0)) {
                row[j] = v;
            }
        }
        let q = kind.q();
        let mut evals = Vec::with_capacity(n);
        let mut duals = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        for i in 0..n {
            let row = &x[i];
            let dual: Vec<f64> = pt.y[i * m..(i + 1) * m].iter().map(|v| -v).collect();
            let dual_lower = self.model.dual_value(i, row, &dual)?;
            let beta = pt.beta[i];
            let witness = if beta > 0.0 {
                let theta: Vec<f64> = pt.kappa[i * pd..(i + 1) * pd].iter().map(|k| k / beta).collect();
                self.model.valuation_from_params(i, &theta)
            } else {
                None
            };
            // The exact evaluators are cheap; the iterative one is only
            // needed when the saddle point's own bracket is loose.
            let mut e = match &witness {
                Some(v) if !self.model.has_exact_evaluator() => {
                    let upper = dot(v, row);
                    RobustUtilityResult {
                        value: 0.5 * (dual_lower.min(upper) + upper),
                        worst_v: v.clone(),
                        lower_bound: dual_lower.min(upper),
                        upper_bound: upper,
                        iterations: 0,
                        converged: upper - dual_lower <= params.utility_tol,
                    }
                }
                _ => self.model.robust_utility_warm(i, row, params.utility_tol, &mut warm[i])?,
            };
            if !e.converged && final_pass {
                e = self.model.robust_utility_warm(i, row, params.utility_tol, &mut warm[i])?;
            }
            e.lower_bound = e.lower_bound.max(dual_lower.min(e.upper_bound));
            if let Some(v) = witness {
                e.worst_v = v;
            }
            r.push(q * (self.budgets[i] - e.lower_bound).max(0.0));
            evals.push(e);
            duals.push(dual);
        }
        Ok(snapshot(market, kind, &x, r, &evals, duals, iters))
    }
}

pub(super) fn solve(
    market: &Market,
    model: &UncertaintyModel,
    kind: MarketKind,
    params: &SolverParams,
) -> Result<EquilibriumSolution> {
    let mut prob = Problem::new(market, model, kind)?;
    let mut s = prob.scratch();
    let mut warm = vec![WarmStart::default(); prob.n];

    let mut cur = prob.start();
    let mut next = cur.clone();
    let mut tmp = cur.clone();
    let mut avg = cur.clone();
    let mut avg_count = 0usize;
    let mut omega = 1.0;
    let mut anchor = cur.clone();
    let mut anchor_res = prob.residual(&cur, omega, &mut tmp, &mut s);
    let mut last_candidate_res = f64::INFINITY;
    let mut since_restart = 0usize;
    let mut best: Option<(f64, Point)> = None;
    let mut iters = 0;

    while iters < params.max_iters {
        iters += 1;
        since_restart += 1;
        prob.step(&cur, omega, &mut next, &mut s);
        std::mem::swap(&mut cur, &mut next);
        avg_count += 1;
        avg.average_in(&cur, 1.0 / avg_count as f64);

        let restart_check = since_restart % RESTART_CHECK == 0;
        let gap_check = iters % params.check_every == 0 || iters == params.max_iters;
        if !(restart_check || gap_check) {
            continue;
        }
        let res_cur = prob.residual(&cur, omega, &mut tmp, &mut s);
        let res_avg = prob.residual(&avg, omega, &mut tmp, &mut s);
        let (candidate, res) = if res_avg < res_cur { (&avg, res_avg) } else { (&cur, res_cur) };

        if gap_check {
            let snap = prob.extract(market, kind, candidate, params, &mut warm, iters, false)?;
            let done = snap.gap <= params.stop_gap;
            if best.as_ref().is_none_or(|(g, _)| snap.gap < *g) {
                best = Some((snap.gap, candidate.clone()));
            }
            if done {
                break;
            }
        }

        if restart_check {
            let restart = res <= SUFFICIENT_DECAY * anchor_res
                || (res <= NECESSARY_DECAY * anchor_res && res > last_candidate_res)
                || since_restart as f64 >= ARTIFICIAL_FRACTION * iters as f64;
            last_candidate_res = res;
            if restart {
                let candidate = candidate.clone();
                let moved_primal = norm2(&diff(&candidate.p, &anchor.p))
                    + norm2(&diff(&candidate.beta, &anchor.beta))
                    + norm2(&diff(&candidate.w, &anchor.w))
                    + norm2(&diff(&candidate.kappa, &anchor.kappa));
                let moved_dual =
                    norm2(&diff(&candidate.x, &anchor.x)) + norm2(&diff(&candidate.y, &anchor.y));
                if moved_primal > 1e-10 && moved_dual > 1e-10 {
                    omega = (0.5 * (moved_dual / moved_primal).ln() + 0.5 * omega.ln()).exp();
                }
                cur = candidate;
                avg = cur.clone();
                avg_count = 0;
                anchor = cur.clone();
                anchor_res = prob.residual(&cur, omega, &mut tmp, &mut s);
                last_candidate_res = f64::INFINITY;
                since_restart = 0;
            }
        }
    }

    // Close loose utility brackets before the solution leaves the solver.
    let final_point = best.map_or(cur, |(_, point)| point);
    let Snapshot { gap, mut solution } =
        prob.extract(market, kind, &final_point, params, &mut warm, iters, true)?;
    solution.converged = gap <= params.stop_gap;
    solution.iters = iters;
    if params.select_prices {
        solution = select_prices(&mut prob, &final_point, solution, params)?;
    }
    Ok(solution)
}

/// Equilibrium prices are not unique when a buyer's worst case is attained
/// on a whole face of its set. Keeping `β` fixed and `Σ p` capped so that the
/// certified gap stays within `stop_gap`, this moves towards the least-norm
/// dual point; `Σ p` is constant on the optimal face, so that is the one with
/// the flattest prices.
fn select_prices(
    prob: &mut Problem<'_>,
    start: &Point,
    mut solution: EquilibriumSolution,
    params: &SolverParams,
) -> Result<EquilibriumSolution> {
    let (n, m, pd) = (prob.n, prob.m, prob.pd);
    let scale = solution.objective.abs().max(1.0);
    let dual = dual_objective(&solution.p, &solution.beta, prob.budgets)?;
    let slack = (params.stop_gap * scale - (dual - solution.objective)).max(0.0);
    let cap = solution.p.iter().sum::<f64>() + slack;

    let mut cur = start.clone();
    for i in 0..n {
        let ratio = if start.beta[i] > 0.0 { solution.beta[i] / start.beta[i] } else { 0.0 };
        cur.kappa[i * pd..(i + 1) * pd].iter_mut().for_each(|k| *k *= ratio);
        for j in 0..m {
            cur.w[i * m + j] = solution.beta[i] * solution.worst_v[i][j];
        }
    }
    cur.beta.clone_from(&solution.beta);
    cur.p.clone_from(&solution.p);
    let mut next = cur.clone();
    let mut s = prob.scratch();
    prob.price_cap = Some(cap);

    let mut best = dot(&solution.p, &solution.p);
    let mut stale = 0;
    for it in 1..=SELECT_ITERS {
        prob.step(&cur, 1.0, &mut next, &mut s);
        std::mem::swap(&mut cur, &mut next);
        if it % SELECT_CHECK != 0 {
            continue;
        }
        let witnesses: Option<Vec<Vec<f64>>> = (0..n)
            .map(|i| {
                let beta = cur.beta[i];
                if !(beta > 0.0) {
                    return Some(solution.worst_v[i].clone());
                }
                let theta: Vec<f64> = cur.kappa[i * pd..(i + 1) * pd].iter().map(|k| k / beta).collect();
                prob.model.valuation_from_params(i, &theta)
            })
            .collect();
        let improved = witnesses.is_some_and(|witnesses| {
            let p: Vec<f64> = (0..m)
                .map(|j| (0..n).map(|i| cur.beta[i] * witnesses[i][j]).fold(0.0, f64::max))
                .collect();
            let value = dot(&p, &p);
            let accept = p.iter().sum::<f64>() <= cap && value < best * (1.0 - 1e-9);
            if accept {
                best = value;
                solution.p = p;
                solution.worst_v = witnesses;
            }
            accept
        });
        stale = if improved { 0 } else { stale + 1 };
        if stale >= SELECT_PATIENCE {
            break;
        }
    }
    prob.price_cap = None;
    Ok(solution)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(s, t)| s - t).collect()
}
