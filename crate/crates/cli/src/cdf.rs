use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde_json::json;
use wsrm::zf_core::zf_geometry;
use wsrm::zf_gradient::{gradient_iterate, gradient_solve, GradientOptions};
use wsrm::zf_twostep::{twostep_with_geometry, TwoStepOptions};
use wsrm::{zf_rates, Instance};

use crate::manifest::{write_csv, RunManifest};
use crate::{bits, pool, Failure};

#[derive(Args, Debug)]
pub struct CdfArgs {
    /// Number of random instances; seeds run from `--seed` upwards.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Transmit antennas M.
    #[arg(short = 'm', long, default_value_t = 4)]
    pub antennas: usize,
    /// Users K.
    #[arg(short = 'k', long, default_value_t = 3)]
    pub users: usize,
    /// Random rank-1 interference constraints.
    #[arg(long, default_value_t = 2)]
    pub constraints: usize,
    /// Sum-power budget P.
    #[arg(short = 'p', long, default_value_t = 10.0)]
    pub power: f64,
    /// Budget of every interference constraint.
    #[arg(long, default_value_t = 5.0)]
    pub gamma: f64,
    /// Gradient iterations before the warm-started two-step run.
    #[arg(long, default_value_t = 10)]
    pub warmstart_iters: usize,
    /// Normalized value below which a run counts as poor in the summary.
    #[arg(long, default_value_t = 0.95)]
    pub threshold: f64,
    /// Worker threads.
    #[arg(long, env = "WSRM_JOBS")]
    pub jobs: Option<usize>,
    /// Output CSV.
    #[arg(long, default_value = "cdf.csv")]
    pub out: PathBuf,
}

struct Trial {
    seed: u64,
    values: Result<[f64; 3], String>,
}

fn trial(args: &CdfArgs, seed: u64) -> Trial {
    let values = (|| -> wsrm::Result<[f64; 3]> {
        let inst = Instance::random(seed, args.antennas, args.users, args.constraints, args.power, args.gamma)?;
        let (_, pre, _) = gradient_solve(&inst, &GradientOptions::default())?;
        let opt = zf_rates(&inst, &pre).weighted_sum;
        let geometry = zf_geometry(&inst)?;
        let (cold, _) = twostep_with_geometry(&inst, &geometry, &TwoStepOptions::default(), None)?;
        let (relax, _) = gradient_iterate(&inst, &geometry, &GradientOptions::default(), args.warmstart_iters)?;
        let (warm, _) = twostep_with_geometry(&inst, &geometry, &TwoStepOptions::default(), Some(&relax))?;
        Ok([opt, cold.report.weighted_sum, warm.report.weighted_sum])
    })();
    Trial { seed, values: values.map_err(|e| e.to_string()) }
}

pub fn run(args: &CdfArgs) -> Result<(), Failure> {
    if args.trials == 0 || args.users == 0 || args.antennas < args.users {
        return Err(Failure::Input("need trials ≥ 1 and 1 ≤ users ≤ antennas".into()));
    }
    if !(args.power > 0.0 && args.gamma > 0.0) {
        return Err(Failure::Input("power and gamma must be positive".into()));
    }
    let seeds: Vec<u64> = (0..args.trials as u64).map(|i| args.seed + i).collect();
    let trials: Vec<Trial> = pool(args.jobs)?.install(|| seeds.par_iter().map(|&s| trial(args, s)).collect());

    let mut body = String::from("seed,gradient_bits,twostep_cold_bits,twostep_warm_bits,cold_ratio,warm_ratio,status\n");
    let (mut cold_low, mut warm_low, mut failed) = (0, 0, 0);
    for t in &trials {
        match &t.values {
            Ok([opt, cold, warm]) => {
                let (rc, rw) = (cold / opt, warm / opt);
                cold_low += usize::from(rc < args.threshold);
                warm_low += usize::from(rw < args.threshold);
                let _ = writeln!(body, "{},{},{},{},{},{},ok", t.seed, bits(*opt), bits(*cold), bits(*warm), rc, rw);
            }
            Err(e) => {
                failed += 1;
                let _ = writeln!(body, "{},,,,,,{}", t.seed, e.replace(',', ";"));
            }
        }
    }

    let config = json!({
        "trials": args.trials,
        "antennas": args.antennas,
        "users": args.users,
        "constraints": args.constraints,
        "power": args.power,
        "gamma": args.gamma,
        "warmstart_iters": args.warmstart_iters,
        "threshold": args.threshold,
    });
    let mut manifest = RunManifest::new("cdf", config, seeds);
    manifest.outputs = vec![args.out.display().to_string()];
    write_csv(&args.out, &manifest, &body)?;

    let n = (trials.len() - failed).max(1) as f64;
    println!(
        "{} instances, {failed} failed; below {}: cold {:.3}, warm (N={}) {:.3}",
        trials.len(),
        args.threshold,
        cold_low as f64 / n,
        args.warmstart_iters,
        warm_low as f64 / n
    );
    println!("  wrote {}", args.out.display());
    Ok(())
}
