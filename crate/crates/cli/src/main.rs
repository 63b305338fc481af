//! `rme`: generate markets, solve and certify robust equilibria, verify
//! stored solutions and sweep the uncertainty radius.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rme_core::certify::make_certificate_with;
use rme_core::metrics::metrics_report;
use rme_core::*;

#[derive(Parser)]
#[command(name = "rme", version, about = "Robust market equilibria for Fisher and quasi-Fisher markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic low-rank market.
    Generate(GenerateArgs),
    /// Solve for an equilibrium and certify it.
    Solve(SolveArgs),
    /// Re-check a stored solution against its market.
    Verify(VerifyArgs),
    /// Solve over a grid of radii and write plot-ready CSV tables.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Family {
    Direct,
    Buyerside,
    JointOuter,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    PrimalDual,
    Supergradient,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "direct")]
    model: Family,
    /// Norm of the uncertainty ball, 1 or 2.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    p: u8,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true, value_parser = radius)]
    eps: f64,
    /// Radius of the embedding block (joint_outer); defaults to --eps.
    #[arg(long, allow_negative_numbers = true, value_parser = radius)]
    eps1: Option<f64>,
    /// Radius of the factor block (joint_outer); defaults to --eps.
    #[arg(long, allow_negative_numbers = true, value_parser = radius)]
    eps2: Option<f64>,
}

#[derive(Args)]
struct SolverArgs {
    /// Quasi-Fisher market: unspent budget keeps its value.
    #[arg(long)]
    quasi: bool,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "primal-dual")]
    method: Method,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    market: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Target certified relative duality gap.
    #[arg(long, default_value_t = 1e-3, value_parser = positive)]
    tol: f64,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-buyer envy and regret as CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    market: PathBuf,
    /// Equilibrium document written by `solve`.
    solution: PathBuf,
    /// Sets every condition threshold; the defaults apply when absent.
    #[arg(long, value_parser = positive)]
    tol: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    market: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "0:0.5:0.05")]
    grid: Grid,
    #[arg(long)]
    outdir: PathBuf,
}

fn radius(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("radius must be finite and nonnegative, got {v}"))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

impl ModelArgs {
    fn spec(&self) -> UncertaintySpec {
        let p = if self.p == 1 { Norm::L1 } else { Norm::L2 };
        match self.model {
            Family::Direct => UncertaintySpec::Direct { p, eps: self.eps },
            Family::Buyerside => UncertaintySpec::Buyerside { p, eps: self.eps },
            Family::JointOuter => UncertaintySpec::JointOuter {
                eps1: self.eps1.unwrap_or(self.eps),
                eps2: self.eps2.unwrap_or(self.eps),
            },
        }
    }
}

impl SolverArgs {
    fn kind(&self) -> MarketKind {
        if self.quasi {
            MarketKind::Quasi
        } else {
            MarketKind::Fisher
        }
    }

    fn params(&self, stop_gap: f64) -> SolverParams {
        let defaults = SolverParams::default();
        let method = match self.method {
            Method::PrimalDual => SolverMethod::PrimalDual,
            Method::Supergradient => SolverMethod::ProjectedSupergradient,
        };
        SolverParams {
            max_iters: self.max_iters.unwrap_or(defaults.max_iters),
            stop_gap,
            seed: self.seed,
            averaging: method == SolverMethod::ProjectedSupergradient,
            method,
            ..defaults
        }
    }
}

/// What `solve` writes and `verify` reads.
#[derive(Serialize, Deserialize)]
struct EquilibriumDocument {
    model: UncertaintySpec,
    #[serde(flatten)]
    solution: EquilibriumSolution,
    certificate: Certificate,
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn warn_large(spec: &UncertaintySpec) {
    if spec.has_large_radius() {
        eprintln!("warning: radius of 1 or more is outside the intended regime");
    }
}

fn generate(args: &GenerateArgs) -> Result<bool> {
    let market = generate_low_rank_market(args.n, args.m, args.d, args.seed, &GeneratorConfig::default())?;
    write_output(args.out.as_deref(), &(market.to_json() + "\n"))?;
    if let Some(path) = &args.out {
        println!("{}", path.display());
    }
    Ok(true)
}

fn solve_cmd(args: &SolveArgs) -> Result<bool> {
    let market = load_market(&args.market)?;
    let spec = args.model.spec();
    warn_large(&spec);
    let model = UncertaintyModel::new(spec, &market)?;
    let kind = args.solver.kind();
    // Stopping well inside the target keeps the certificate below it.
    let mut solution = solve(&market, &model, kind, &args.solver.params(1e-2 * args.tol))?;
    let tol = Tolerances { gap: args.tol, ..Tolerances::default() };
    let certificate = make_certificate_with(&solution, &market, &model, kind, &tol)?;
    solution.gap = Some(certificate.relative_gap);
    let ok = solution.converged && certificate.relative_gap <= args.tol;

    if let Some(path) = &args.metrics {
        let report = metrics_report(&solution, &market, &model, kind, args.solver.seed)?;
        let file = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        report.write_csv(file)?;
    }
    eprintln!(
        "{} after {} iterations, certified gap {:.3e}",
        if solution.converged { "converged" } else { "not converged" },
        solution.iters,
        certificate.relative_gap
    );
    let doc = EquilibriumDocument { model: spec, solution, certificate };
    write_output(args.out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    Ok(ok)
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let market = load_market(&args.market)?;
    let text = fs::read_to_string(&args.solution)
        .with_context(|| format!("cannot read {}", args.solution.display()))?;
    let doc: EquilibriumDocument = serde_json::from_str(&text)
        .with_context(|| format!("{} is not an equilibrium document", args.solution.display()))?;
    let model = UncertaintyModel::new(doc.model, &market)?;
    let tol = args.tol.map_or_else(Tolerances::default, Tolerances::uniform);
    let cert = make_certificate_with(&doc.solution, &market, &model, doc.solution.kind, &tol)?;
    print!("{}", cert.report);
    println!("price lift {:.3e}", cert.price_lift);
    Ok(cert.report.all_passed())
}

fn sweep(args: &SweepArgs) -> Result<bool> {
    let market = load_market(&args.market)?;
    let spec = args.model.spec();
    if args.grid.stop >= 1.0 {
        warn_large(&spec.with_eps(args.grid.stop));
    }
    let config = SweepConfig {
        model: spec,
        grid: args.grid,
        kind: args.solver.kind(),
        params: args.solver.params(SolverParams::default().stop_gap),
        seed: args.solver.seed,
    };
    let result = run_sweep(&market, &config)?;
    result.write_csvs(&args.outdir)?;
    for s in result.status.iter().filter(|s| !s.converged) {
        eprintln!("eps {}: not converged {}", s.eps, s.error);
    }
    println!("{}", args.outdir.display());
    Ok(result.all_converged())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Verify(a) => verify(a),
        Command::Sweep(a) => sweep(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(2)
        }
    }
}
