use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde_json::{json, Value};
use wsrm::dpc_dual::{outer_subgradient_solve, DualSolution, SubgradientOptions};
use wsrm::dpc_newton::{newton_solve, NewtonOptions};
use wsrm::zf_core::zf_geometry;
use wsrm::zf_gradient::{gradient_iterate, gradient_solve, GradientOptions};
use wsrm::zf_twostep::{twostep_with_geometry, TwoStepOptions};
use wsrm::{io, zf_rates, ConvergenceTrace, Instance, RateReport};

use crate::manifest::{content_hash, write_csv, write_json, RunManifest};
use crate::{bits, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    /// Primal-dual Newton on the dual-MAC min-max problem (DPC).
    DpcNewton,
    /// Inner-outer Lagrangian with subgradient multiplier updates (DPC).
    DpcSubgrad,
    /// Barrier gradient ascent on the convex ZF relaxation.
    ZfGradient,
    /// Alternating power and steering steps over generalized inverses (ZF).
    ZfTwostep,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Instance JSON file.
    pub instance: PathBuf,
    #[arg(long, value_enum)]
    pub solver: SolverKind,
    /// dpc-newton: stop once the KKT residual norm and the gap bound fall below this.
    #[arg(long)]
    pub delta: Option<f64>,
    /// dpc-newton: barrier growth factor.
    #[arg(long)]
    pub nu: Option<f64>,
    /// dpc-subgrad: complementary-slackness tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// zf-gradient: stop once the barrier gap bound falls below this.
    #[arg(long)]
    pub gap: Option<f64>,
    /// Iteration cap of the chosen solver (outer steps for dpc-subgrad, rounds for zf-twostep).
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// zf-twostep: start from the extraction after this many gradient iterations (0 = cold start).
    #[arg(long, default_value_t = 0)]
    pub warmstart_gradient_iters: usize,
    /// Directory for `<stem>.<solver>.json` and `<stem>.<solver>.trace.csv`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

struct Outcome {
    report: RateReport,
    trace: ConvergenceTrace,
    details: Value,
}

fn dpc_details(sol: &DualSolution, trace: &ConvergenceTrace) -> Value {
    json!({
        "dual_powers": sol.p,
        "lambda": sol.lambda,
        "mu": sol.mu,
        "encoding_order": sol.encoding_order,
        "mac_rates_bits": sol.mac_rates.iter().map(|r| bits(*r)).collect::<Vec<_>>(),
        "iterations": trace.len(),
        "matmuls": trace.matmuls,
    })
}

fn solve(instance: &Instance, args: &SolveArgs) -> Result<(Outcome, Value), Failure> {
    let cap = args.max_iterations;
    Ok(match args.solver {
        SolverKind::DpcNewton => {
            let d = NewtonOptions::default();
            let opts = NewtonOptions {
                delta: args.delta.unwrap_or(d.delta),
                nu: args.nu.unwrap_or(d.nu),
                max_iterations: cap.unwrap_or(d.max_iterations),
                ..d
            };
            let (sol, trace) = newton_solve(instance, &opts)?;
            let settings = json!({ "delta": opts.delta, "nu": opts.nu, "max_iterations": opts.max_iterations });
            (Outcome { report: sol.report.clone(), details: dpc_details(&sol, &trace), trace }, settings)
        }
        SolverKind::DpcSubgrad => {
            let d = SubgradientOptions::default();
            let opts =
                SubgradientOptions { tol: args.tol.unwrap_or(d.tol), max_outer: cap.unwrap_or(d.max_outer), ..d };
            let (sol, trace) = outer_subgradient_solve(instance, &opts)?;
            let settings = json!({ "tol": opts.tol, "max_outer": opts.max_outer });
            (Outcome { report: sol.report.clone(), details: dpc_details(&sol, &trace), trace }, settings)
        }
        SolverKind::ZfGradient => {
            let d = GradientOptions::default();
            let opts =
                GradientOptions { gap: args.gap.unwrap_or(d.gap), max_iterations: cap.unwrap_or(d.max_iterations), ..d };
            let (sol, pre, trace) = gradient_solve(instance, &opts)?;
            let details = json!({
                "relaxation_bits": bits(sol.objective),
                "barrier_t": sol.t,
                "iterations": sol.iterations,
            });
            let settings = json!({ "gap": opts.gap, "max_iterations": opts.max_iterations });
            (Outcome { report: zf_rates(instance, &pre), trace, details }, settings)
        }
        SolverKind::ZfTwostep => {
            let d = TwoStepOptions::default();
            let opts = TwoStepOptions { max_rounds: cap.unwrap_or(d.max_rounds), ..d };
            let geometry = zf_geometry(instance)?;
            let warm = match args.warmstart_gradient_iters {
                0 => None,
                n => Some(gradient_iterate(instance, &geometry, &GradientOptions::default(), n)?.0),
            };
            let (sol, trace) = twostep_with_geometry(instance, &geometry, &opts, warm.as_ref())?;
            let details = json!({
                "q": sol.q,
                "lambda": sol.lambda,
                "eta": sol.eta,
                "rounds": sol.rounds,
                "warmstart_gradient_iters": args.warmstart_gradient_iters,
            });
            let settings = json!({
                "tol": opts.tol,
                "max_rounds": opts.max_rounds,
                "warmstart_gradient_iters": args.warmstart_gradient_iters,
            });
            (Outcome { report: sol.report, trace, details }, settings)
        }
    })
}

pub fn run(args: &SolveArgs) -> Result<(), Failure> {
    let path = args.instance.display().to_string();
    let bytes = fs::read(&args.instance).map_err(|e| Failure::Input(format!("{path}: {e}")))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Failure::Input(format!("{path}: {e}")))?;
    let instance = io::parse_instance(text).map_err(|e| Failure::Input(format!("{path}: {e}")))?;

    let start = Instant::now();
    let (outcome, settings) = solve(&instance, args)?;
    let elapsed = start.elapsed();

    let stem = args.instance.file_stem().map_or("instance".into(), |s| s.to_string_lossy().into_owned());
    let solver = args.solver.to_possible_value().expect("no skipped variants").get_name().to_string();
    let json_path = args.out_dir.join(format!("{stem}.{solver}.json"));
    let csv_path = args.out_dir.join(format!("{stem}.{solver}.trace.csv"));

    let mut manifest = RunManifest::new(
        "solve",
        json!({ "instance": path, "solver": solver, "settings": settings }),
        Vec::new(),
    );
    manifest.instance_hash = Some(content_hash(&bytes));
    manifest.outputs = vec![json_path.display().to_string(), csv_path.display().to_string()];

    let r = &outcome.report;
    let body = json!({
        "solver": solver,
        "weighted_sum_bits": bits(r.weighted_sum),
        "rates_bits": r.rates.iter().map(|v| bits(*v)).collect::<Vec<_>>(),
        "usage": r.usage,
        "budgets": instance.budgets(),
        "details": outcome.details,
        "report_nats": r,
    });
    write_json(&json_path, &manifest, body)?;
    write_csv(&csv_path, &manifest, &outcome.trace.to_csv())?;

    println!("{solver} on {path}: weighted sum rate {:.6} bits/channel use", bits(r.weighted_sum));
    let usage: Vec<String> =
        r.usage.iter().zip(instance.budgets()).map(|(u, g)| format!("{u:.4}/{g}")).collect();
    println!("  usage {}", usage.join(" "));
    println!("  wrote {} and {}", json_path.display(), csv_path.display());
    eprintln!("  solved in {elapsed:.2?}");
    Ok(())
}
