//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned.
//! Run with `cargo test -p rme-core --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rme_core::metrics::{bounds, robust_envy, robust_regret};
use rme_core::*;

use common::*;

const ANALYTIC_TOL: f64 = 1e-4;
const GAP_TOL: f64 = 1e-3;
const ORACLE_TOL: f64 = 2e-3;
const ORACLE_STEP: f64 = 1e-4;
const PROPERTY_TOL: f64 = 1e-6;
const CONSERVATION_TOL: f64 = 1e-8;
const CLEARING_TOL: f64 = 1e-4;
const BANG_PER_BUCK_TOL: f64 = 1e-3;
const PACING_TOL: f64 = 1e-4;
const BUDGET_TOL: f64 = 1e-4;
const BOUND_SLACK: f64 = 1e-6;
const CONTAINMENT_SLACK: f64 = 1e-6;
const EVAL_TOL: f64 = 1e-9;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed.as_secs_f64() < limit_secs as f64
}

// 1

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn analytic_case(
    market: Market,
    kind: MarketKind,
    x: &[Vec<f64>],
    p: &[f64],
    beta: &[f64],
) -> (f64, Duration) {
    let start = Instant::now();
    let model = UncertaintyModel::new(UncertaintySpec::nominal(), &market).unwrap();
    let sol = solve(&market, &model, kind, &SolverParams::default()).unwrap();
    let elapsed = start.elapsed();
    let err = x
        .iter()
        .zip(&sol.x)
        .map(|(a, b)| max_diff(a, b))
        .fold(max_diff(p, &sol.p), f64::max)
        .max(max_diff(beta, &sol.beta));
    (err, elapsed)
}

fn analytic_equilibria() -> Outcome {
    // Grid oracles confirm the closed forms before the solver is compared.
    let share = grid_argmax_1d(1e-4, 1.0 - 1e-4, 1e-4, |x| x.ln() + (1.0 - x).ln());
    let (xq, rq) = grid_argmax_2d((0.0, 1.0), (0.0, 2.0), 1e-3, |x, r| (0.5 * x + r).ln() - r);
    let oracle_ok = (share - 0.5).abs() <= 1e-4 && (xq - 1.0).abs() <= 1e-3 && (rq - 0.5).abs() <= 1e-3;

    let cases = [
        analytic_case(
            Market::from_rows(&[1.0, 1.0], &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap(),
            MarketKind::Fisher,
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[1.0, 1.0],
            &[1.0, 1.0],
        ),
        analytic_case(
            Market::from_rows(&[1.0, 1.0], &[&[1.0], &[1.0]]).unwrap(),
            MarketKind::Fisher,
            &[vec![0.5], vec![0.5]],
            &[2.0],
            &[2.0, 2.0],
        ),
        analytic_case(
            Market::from_rows(&[1.0], &[&[0.5]]).unwrap(),
            MarketKind::Quasi,
            &[vec![1.0]],
            &[0.5],
            &[1.0],
        ),
    ];
    let worst = cases.iter().map(|c| c.0).fold(0.0, f64::max);
    let slowest = cases.iter().map(|c| c.1).max().unwrap();
    outcome(
        oracle_ok && worst <= ANALYTIC_TOL && within(slowest, 1),
        format!("max error {worst:.1e}, slowest {slowest:.2?}, grid oracles agree: {oracle_ok}"),
    )
}

// 2 and 4

struct Certified {
    kind: MarketKind,
    label: String,
    gap: f64,
    report: Report,
}

fn random_models(k: usize, eps: f64) -> Vec<UncertaintySpec> {
    let buyerside_norm = if k % 2 == 0 { Norm::L2 } else { Norm::L1 };
    vec![
        UncertaintySpec::Direct { p: Norm::L1, eps },
        UncertaintySpec::Direct { p: Norm::L2, eps },
        UncertaintySpec::Buyerside { p: buyerside_norm, eps },
        UncertaintySpec::JointOuter { eps1: eps, eps2: eps },
    ]
}

fn certify_random_markets() -> Vec<Certified> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240);
    let mut jobs = Vec::new();
    for k in 0..50 {
        let n = rng.random_range(2..=20);
        let m = rng.random_range(2..=10);
        let d = rng.random_range(1..=n.min(m).min(4));
        let eps = rng.random_range(0.0..=0.3);
        for spec in random_models(k, eps) {
            for kind in [MarketKind::Fisher, MarketKind::Quasi] {
                jobs.push((k as u64, n, m, d, spec, kind));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(seed, n, m, d, spec, kind)| {
            let market = generate_low_rank_market(n, m, d, seed, &GeneratorConfig::default()).unwrap();
            let model = UncertaintyModel::new(spec, &market).unwrap();
            let sol = solve(&market, &model, kind, &SolverParams::default()).unwrap();
            let cert = make_certificate(&sol, &market, &model, kind).unwrap();
            Certified {
                kind,
                label: format!("seed {seed} {n}x{m} d={d} {spec:?} {kind}"),
                gap: cert.relative_gap,
                report: cert.report,
            }
        })
        .collect()
}

fn certified_gaps(runs: &[Certified], elapsed: Duration) -> Outcome {
    let worst = runs.iter().max_by(|a, b| a.gap.total_cmp(&b.gap)).unwrap();
    let failures = runs.iter().filter(|r| !(r.gap <= GAP_TOL)).count();
    outcome(
        failures == 0 && within(elapsed, 600),
        format!(
            "{} solves, {failures} above {GAP_TOL:.0e}, worst {:.1e} ({}), {elapsed:.1?}",
            runs.len(),
            worst.gap,
            worst.label
        ),
    )
}

fn equilibrium_conditions(runs: &[Certified]) -> Outcome {
    let mut worst: Vec<(&str, f64, f64)> = vec![
        ("market clearing", 0.0, CLEARING_TOL),
        ("bang-per-buck spread", 0.0, BANG_PER_BUCK_TOL),
        ("budget exhaustion", 0.0, BUDGET_TOL),
        ("pacing bound", 0.0, PACING_TOL),
        ("no unnecessary pacing", 0.0, PACING_TOL),
    ];
    let mut missing = 0;
    for run in runs {
        for (name, value, _) in worst.iter_mut() {
            let applies = match *name {
                "budget exhaustion" => run.kind == MarketKind::Fisher,
                "pacing bound" | "no unnecessary pacing" => run.kind == MarketKind::Quasi,
                _ => true,
            };
            if !applies {
                continue;
            }
            match run.report.line(name) {
                Some(line) => *value = value.max(line.magnitude),
                None => missing += 1,
            }
        }
    }
    let passed = missing == 0 && worst.iter().all(|(_, v, t)| v <= t);
    let detail = worst
        .iter()
        .map(|(name, v, _)| format!("{name} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(passed, detail)
}

// 3

fn oracle_instance(rng: &mut ChaCha8Rng, family: usize, seed: u64) -> (Market, UncertaintyModel) {
    let m = rng.random_range(2..=4);
    let d = match family {
        0 | 1 => rng.random_range(1..=2),
        2 => rng.random_range(2..=m.min(3)),
        _ if m == 4 => 1,
        _ => rng.random_range(1..=2),
    };
    let eps = rng.random_range(0.0..=0.5);
    let p = if rng.random_bool(0.5) { Norm::L1 } else { Norm::L2 };
    let spec = match family {
        0 => UncertaintySpec::Direct { p: Norm::L1, eps },
        1 => UncertaintySpec::Direct { p: Norm::L2, eps },
        2 => UncertaintySpec::Buyerside { p, eps },
        _ => UncertaintySpec::JointOuter { eps1: eps, eps2: rng.random_range(0.0..=0.5) },
    };
    let market = generate_low_rank_market(3.max(d), m, d, seed, &GeneratorConfig::default()).unwrap();
    let model = UncertaintyModel::new(spec, &market).unwrap();
    (market, model)
}

fn uniform_z(rng: &mut ChaCha8Rng, m: usize, lo: f64) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(lo..=1.0)).collect()
}

fn grid_oracle_agreement() -> (bool, String) {
    let names = ["direct l1", "direct l2", "buyerside", "joint outer"];
    let mut parts = Vec::new();
    let mut ok = true;
    for (family, name) in names.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + family as u64);
        let instances: Vec<(Market, UncertaintyModel, Vec<f64>)> = (0..100)
            .map(|k| {
                let (market, model) = oracle_instance(&mut rng, family, 1000 * family as u64 + k);
                let z = uniform_z(&mut rng, market.m(), -1.0);
                (market, model, z)
            })
            .collect();
        let worst = instances
            .par_iter()
            .map(|(market, model, z)| {
                let got = model.robust_utility(0, z, EVAL_TOL).unwrap().value;
                let want = SetGeometry::new(market, model, 0).grid_utility(z, ORACLE_STEP);
                (got - want).abs()
            })
            .reduce(|| 0.0, f64::max);
        ok &= worst <= ORACLE_TOL;
        parts.push(format!("{name} {worst:.1e}"));
    }
    (ok, format!("grid oracle: {}", parts.join(", ")))
}

fn property_instance(rng: &mut ChaCha8Rng, eps: Option<f64>) -> (Market, UncertaintyModel) {
    let m = rng.random_range(2..=6);
    let d = rng.random_range(1..=m.min(3));
    let n = rng.random_range(d..=4);
    let eps = eps.unwrap_or_else(|| rng.random_range(0.0..=0.5));
    let spec = random_models(rng.random_range(0..2), eps)[rng.random_range(0..4)];
    let market = generate_low_rank_market(n, m, d, rng.random(), &GeneratorConfig::default()).unwrap();
    let model = UncertaintyModel::new(spec, &market).unwrap();
    (market, model)
}

fn property_suites() -> (bool, String) {
    const DRAWS: u64 = 1000;
    let u = |model: &UncertaintyModel, i: usize, z: &[f64]| model.robust_utility(i, z, EVAL_TOL).unwrap().value;
    let scale = |v: f64| v.abs().max(1.0);

    let homogeneity = (0..DRAWS)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(k);
            let (market, model) = property_instance(&mut rng, None);
            let i = rng.random_range(0..market.n());
            let z = uniform_z(&mut rng, market.m(), -1.0);
            let alpha = rng.random_range(0.01..=5.0);
            let scaled: Vec<f64> = z.iter().map(|v| alpha * v).collect();
            let base = alpha * u(&model, i, &z);
            (u(&model, i, &scaled) - base).abs() / scale(base)
        })
        .reduce(|| 0.0, f64::max);

    let superadditivity = (0..DRAWS)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(10_000 + k);
            let (market, model) = property_instance(&mut rng, None);
            let i = rng.random_range(0..market.n());
            let a = uniform_z(&mut rng, market.m(), -1.0);
            let b = uniform_z(&mut rng, market.m(), -1.0);
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            (u(&model, i, &a) + u(&model, i, &b) - u(&model, i, &sum)).max(0.0)
        })
        .reduce(|| 0.0, f64::max);

    let conservation = (0..DRAWS)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(20_000 + k);
            let (market, model) = property_instance(&mut rng, None);
            let i = rng.random_range(0..market.n());
            let total: f64 = market.nominal_row(i).iter().sum();
            (u(&model, i, &vec![1.0; market.m()]) - total).abs() / scale(total)
        })
        .reduce(|| 0.0, f64::max);

    let monotonicity = (0..DRAWS)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(30_000 + k);
            let small = rng.random_range(0.0..=0.4);
            let large = small + rng.random_range(0.0..=0.2);
            let mut twin = rng.clone();
            let (market, model) = property_instance(&mut rng, Some(small));
            let (_, wider) = property_instance(&mut twin, Some(large));
            let i = rng.random_range(0..market.n());
            let z = uniform_z(&mut rng, market.m(), -1.0);
            (u(&wider, i, &z) - u(&model, i, &z)).max(0.0)
        })
        .reduce(|| 0.0, f64::max);

    let ok = homogeneity <= PROPERTY_TOL
        && superadditivity <= PROPERTY_TOL
        && conservation <= CONSERVATION_TOL
        && monotonicity <= PROPERTY_TOL;
    (
        ok,
        format!(
            "homogeneity {homogeneity:.1e}, superadditivity {superadditivity:.1e}, \
             conservation {conservation:.1e}, monotonicity {monotonicity:.1e}"
        ),
    )
}

fn robust_utility_correctness() -> Outcome {
    let (grid_ok, grid) = grid_oracle_agreement();
    let (prop_ok, props) = property_suites();
    outcome(grid_ok && prop_ok, format!("{grid}; {props}"))
}

// 5

fn bound_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut jobs = Vec::new();
    for k in 0..12 {
        let n = rng.random_range(3..=8);
        let m = rng.random_range(2..=6);
        let d = rng.random_range(1..=n.min(m).min(3));
        let eps = rng.random_range(0.05..=0.3);
        for spec in random_models(k, eps) {
            for kind in [MarketKind::Fisher, MarketKind::Quasi] {
                jobs.push((500 + k as u64, n, m, d, spec, kind));
            }
        }
    }
    // (envy excess, regret excess, mean regret excess)
    let excess = jobs
        .into_par_iter()
        .map(|(seed, n, m, d, spec, kind)| {
            let market = generate_low_rank_market(n, m, d, seed, &GeneratorConfig::default()).unwrap();
            assert!(market.has_equal_budgets());
            let model = UncertaintyModel::new(spec, &market).unwrap();
            let sol = solve(&market, &model, kind, &SolverParams::default()).unwrap();
            let b = bounds(&model, &market).unwrap();
            let mut envy: f64 = f64::NEG_INFINITY;
            let mut regret: f64 = f64::NEG_INFINITY;
            let mut total_regret = 0.0;
            for i in 0..n {
                envy = envy.max(robust_envy(&model, i, &sol.x, &sol.r).unwrap() - b.envy_bound);
                let (r, _) = robust_regret(
                    &model,
                    i,
                    &sol.x[i],
                    &sol.p,
                    market.budgets()[i],
                    kind,
                    RegretMode::Exact,
                )
                .unwrap();
                regret = regret.max(r - b.regret_bound);
                total_regret += r;
            }
            (envy, regret, total_regret / n as f64 - b.avg_regret_bound)
        })
        .reduce(
            || (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.max(b.0), a.1.max(b.1), a.2.max(b.2)),
        );

    // Sandwich: v·z − w <= u(z) <= v·z for members v and ‖z‖_inf <= 1.
    let (violations, closest, pairs) = (0..100u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(5_000 + k);
            let (market, model) = property_instance(&mut rng, None);
            let mut violations = 0usize;
            let mut closest = f64::INFINITY;
            let mut pairs = 0;
            let mut misses = 0;
            while pairs < 100 && misses < 100 {
                let i = rng.random_range(0..market.n());
                let Some(v) = model.sample_member(i, &mut rng, 10_000).unwrap() else {
                    misses += 1;
                    continue;
                };
                pairs += 1;
                let z = uniform_z(&mut rng, market.m(), -1.0);
                let w = model.l1_width_upper_bound(i).unwrap();
                let u = model.robust_utility(i, &z, EVAL_TOL).unwrap().value;
                let vz = dot(&v, &z);
                let margin = (vz - u).min(u - (vz - w));
                closest = closest.min(margin);
                if margin < -BOUND_SLACK {
                    violations += 1;
                }
            }
            (violations, closest, pairs)
        })
        .reduce(|| (0, f64::INFINITY, 0), |a, b| (a.0 + b.0, a.1.min(b.1), a.2 + b.2));

    let passed = excess.0 <= BOUND_SLACK && excess.1 <= BOUND_SLACK && excess.2 <= BOUND_SLACK && violations == 0 && pairs == 10_000;
    outcome(
        passed,
        format!(
            "envy − 2w max {:.2e}, regret − 2w max {:.2e}, mean regret − 2Rm/n max {:.2e}; \
             sandwich: {violations} violations in {pairs} pairs, smallest margin {closest:.1e}",
            excess.0, excess.1, excess.2
        ),
    )
}

// 6 and 7

fn scarce_sweep() -> (SweepResult, Duration) {
    let start = Instant::now();
    let market = generate_low_rank_market(40, 10, 5, 0, &GeneratorConfig::default()).unwrap();
    let config = SweepConfig {
        model: UncertaintySpec::Direct { p: Norm::L2, eps: 0.0 },
        grid: "0:0.3:0.05".parse().unwrap(),
        kind: MarketKind::Quasi,
        params: SolverParams::default(),
        seed: 0,
    };
    let result = run_sweep(&market, &config).unwrap();
    (result, start.elapsed())
}

fn welfare_decay(sweep: &SweepResult, elapsed: Duration) -> Outcome {
    let first = &sweep.welfare[0];
    let mut worst = f64::NEG_INFINITY;
    for row in &sweep.welfare {
        let rob_at_nom = row.rob_nsw_at_nom / first.rob_nsw_at_nom;
        let nom_at_rob = row.nom_nsw_at_rob / first.nom_nsw_at_rob;
        worst = worst.max(rob_at_nom - nom_at_rob);
    }
    let points = sweep.welfare.len();
    outcome(
        sweep.all_converged() && points == 7 && worst <= 1e-12 && within(elapsed, 300),
        format!(
            "{points} grid points, max (rob_at_nom − nom_at_rob) relative to eps 0: {worst:.2e}, {elapsed:.1?}"
        ),
    )
}

fn prices_and_revenue(sweep: &SweepResult) -> Outcome {
    let spread0 = sweep.price_spread(0.0).unwrap_or(f64::NAN);
    let spread3 = sweep.price_spread(0.3).unwrap_or(f64::NAN);
    let shortfall = sweep
        .revenue
        .iter()
        .filter(|r| r.eps >= 0.1 - 1e-12)
        .map(|r| r.nominal_price_revenue - r.robust_price_revenue)
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        spread3 < spread0 && shortfall <= 1e-9,
        format!(
            "spread {spread0:.4} at eps 0, {spread3:.4} at eps 0.3; \
             max (nominal − robust price revenue) over eps >= 0.1: {shortfall:.3e}"
        ),
    )
}

// 8

fn containment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let mut members = 0;
    let mut violations = 0;
    let mut closest = f64::INFINITY;
    for k in 0..20 {
        let m = rng.random_range(2..=5);
        let d = rng.random_range(1..=m.min(3));
        let eps1 = rng.random_range(0.05..=0.3);
        let eps2 = rng.random_range(0.05..=0.3);
        let market = generate_low_rank_market(d.max(2), m, d, 800 + k, &GeneratorConfig::default()).unwrap();
        let model = UncertaintyModel::new(UncertaintySpec::JointOuter { eps1, eps2 }, &market).unwrap();
        let (theta, phi) = market.factors().unwrap();
        let i = rng.random_range(0..market.n());
        let theta_i: Vec<f64> = theta.row(i).iter().copied().collect();
        let zs: Vec<Vec<f64>> = (0..10).map(|_| uniform_z(&mut rng, m, -1.0)).collect();
        let outer: Vec<f64> = zs
            .iter()
            .map(|z| model.robust_utility(i, z, EVAL_TOL).unwrap().upper_bound)
            .collect();
        let mut drawn = 0;
        while drawn < 500 {
            let Some(v) = sample_joint_member(&mut rng, &theta_i, phi, eps1, eps2, 1000) else {
                continue;
            };
            drawn += 1;
            for (z, u) in zs.iter().zip(&outer) {
                let margin = dot(&v, z) - u;
                closest = closest.min(margin);
                if margin < -CONTAINMENT_SLACK {
                    violations += 1;
                }
            }
        }
        members += drawn;
    }
    outcome(
        violations == 0 && members == 10_000,
        format!("{members} members x 10 bundles, {violations} violations, smallest margin {closest:.1e}"),
    )
}

// 9

fn product_ball() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_construction: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.random_range(1..=5);
        let m = rng.random_range(1..=5);
        let eps1 = rng.random_range(0.01..=1.0);
        let eps2 = rng.random_range(0.01..=1.0);

        // Random point of S, often on the boundary of both balls.
        let on_sphere = rng.random_bool(0.5);
        let theta = DVector::from_vec(in_l2_ball(&mut rng, d, eps1));
        let phi = DMatrix::from_row_slice(m, d, &in_l2_ball(&mut rng, m * d, eps2));
        let (theta, phi) = if on_sphere {
            (theta.normalize() * eps1, phi.normalize() * eps2)
        } else {
            (theta, phi)
        };
        let x = &phi * &theta;
        worst_ratio = worst_ratio.max(x.norm() / (eps1 * eps2));

        // Rank-one preimage of a point on the boundary of T.
        let target = DVector::from_vec(gaussian(&mut rng, m)).normalize() * (eps1 * eps2);
        let mut e1 = DVector::zeros(d);
        e1[0] = eps1;
        let mut phi_t = DMatrix::zeros(d, m);
        phi_t.set_row(0, &(target.transpose() * (eps2 / target.norm())));
        let built = phi_t.transpose() * &e1;
        let err = (&built - &target).norm() + (phi_t.norm() - eps2).abs() + (built.norm() - eps1 * eps2).abs();
        worst_construction = worst_construction.max(err);
    }
    outcome(
        worst_ratio <= 1.0 + 1e-12 && worst_construction <= 1e-12,
        format!(
            "max ‖θΦᵀ‖/(ε1ε2) {worst_ratio:.12}, rank-one construction error {worst_construction:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        println!(
            "{} {id} {name}: {} [{elapsed:.1?}]",
            if out.passed { "PASS" } else { "FAIL" },
            out.detail
        );
        results.push((id, name, out, elapsed));
    };

    run(1, "analytic equilibria", &mut analytic_equilibria);
    let start = Instant::now();
    let runs = certify_random_markets();
    let certify_time = start.elapsed();
    run(2, "certified gaps", &mut || certified_gaps(&runs, certify_time));
    run(3, "robust-utility correctness", &mut robust_utility_correctness);
    run(4, "equilibrium conditions", &mut || equilibrium_conditions(&runs));
    run(5, "bound suites", &mut bound_suites);
    let (sweep, sweep_time) = scarce_sweep();
    run(6, "welfare decay", &mut || welfare_decay(&sweep, sweep_time));
    run(7, "prices and revenue", &mut || prices_and_revenue(&sweep));
    run(8, "outer-approximation containment", &mut containment);
    run(9, "product of balls", &mut product_ball);

    let failed = results.iter().filter(|r| !r.2.passed).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
