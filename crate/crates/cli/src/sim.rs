use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use wsrm::cellsim::{run_simulation, PrecoderKind, Scheduler, Scheme, SimConfig, SimResult};

use crate::manifest::{write_csv, write_json, RunManifest};
use crate::{bits, pool, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    /// Full reuse with a per-slot interference constraint towards the neighbour's edge user.
    Coordinated,
    /// Full reuse, no coordination.
    Reuse1,
    /// Fractional frequency reuse with power split `--rho` (0 is reuse-2).
    Ffr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchedulerArg {
    /// Proportional fair.
    Pfs,
    /// Hard fair (max-min).
    Hfs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecoderArg {
    Dpc,
    Zf,
}

/// Flags override fields of `--config`, which override the defaults.
#[derive(Args, Debug)]
pub struct CellsimArgs {
    /// JSON file with any subset of the simulation fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// FFR power split ρ ∈ [0, 1].
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub scheduler: Option<SchedulerArg>,
    #[arg(long, value_enum)]
    pub precoder: Option<PrecoderArg>,
    /// Time slots per run.
    #[arg(long)]
    pub slots: Option<usize>,
    /// Seed of the first run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Interference threshold at the neighbour's edge user, in noise units.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Transmit power over noise, dB.
    #[arg(long)]
    pub power_db: Option<f64>,
    /// Users per cell.
    #[arg(long)]
    pub users: Option<usize>,
    /// Antennas per base station.
    #[arg(long)]
    pub antennas: Option<usize>,
    /// Cell radius, km.
    #[arg(long)]
    pub radius_km: Option<f64>,
    /// Draw user positions uniformly instead of the equispaced grid.
    #[arg(long)]
    pub random_positions: bool,
    /// Independent runs with consecutive seeds.
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,
    /// Worker threads.
    #[arg(long, env = "WSRM_JOBS")]
    pub jobs: Option<usize>,
    /// Output directory for `<prefix>.csv` and `<prefix>.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "cellsim")]
    pub prefix: String,
}

pub fn resolve(args: &CellsimArgs) -> Result<SimConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
        }
        None => SimConfig::default(),
    };
    let current_rho = match cfg.scheme {
        Scheme::Ffr { rho } => Some(rho),
        _ => None,
    };
    cfg.scheme = match (args.scheme, args.rho) {
        (Some(SchemeArg::Ffr), rho) => Scheme::Ffr { rho: rho.or(current_rho).unwrap_or(0.0) },
        (Some(_), Some(_)) => return Err(Failure::Input("--rho only applies to --scheme ffr".into())),
        (Some(SchemeArg::Coordinated), None) => Scheme::Coordinated,
        (Some(SchemeArg::Reuse1), None) => Scheme::Reuse1,
        (None, Some(rho)) if current_rho.is_some() => Scheme::Ffr { rho },
        (None, Some(_)) => return Err(Failure::Input("--rho only applies to --scheme ffr".into())),
        (None, None) => cfg.scheme,
    };
    if let Some(s) = args.scheduler {
        cfg.scheduler = match s {
            SchedulerArg::Pfs => Scheduler::Pfs,
            SchedulerArg::Hfs => Scheduler::Hfs,
        };
    }
    if let Some(p) = args.precoder {
        cfg.precoder = match p {
            PrecoderArg::Dpc => PrecoderKind::Dpc,
            PrecoderArg::Zf => PrecoderKind::Zf,
        };
    }
    cfg.slots = args.slots.unwrap_or(cfg.slots);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.epsilon = args.epsilon.unwrap_or(cfg.epsilon);
    cfg.power_db = args.power_db.unwrap_or(cfg.power_db);
    cfg.users = args.users.unwrap_or(cfg.users);
    cfg.antennas = args.antennas.unwrap_or(cfg.antennas);
    cfg.radius_km = args.radius_km.unwrap_or(cfg.radius_km);
    cfg.random_positions |= args.random_positions;
    cfg.validate()?;
    if args.replicas == 0 {
        return Err(Failure::Input("--replicas must be at least 1".into()));
    }
    Ok(cfg)
}

pub fn run(args: &CellsimArgs) -> Result<(), Failure> {
    let cfg = resolve(args)?;
    let seeds: Vec<u64> = (0..args.replicas as u64).map(|i| cfg.seed + i).collect();
    let results: Vec<SimResult> = pool(args.jobs)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| run_simulation(&SimConfig { seed, ..cfg.clone() }))
            .collect::<wsrm::Result<Vec<_>>>()
    })?;

    let csv_path = args.out_dir.join(format!("{}.csv", args.prefix));
    let json_path = args.out_dir.join(format!("{}.json", args.prefix));
    let mut manifest = RunManifest::new("cellsim", serde_json::to_value(&cfg).expect("config serializes"), seeds);
    manifest.outputs = vec![csv_path.display().to_string(), json_path.display().to_string()];

    let mut body = String::from("seed,user_index,position_km,cell,long_term_rate,long_term_rate_bits,service_rate_bits\n");
    for r in &results {
        for u in &r.users {
            let _ = writeln!(
                body,
                "{},{},{},{},{},{},{}",
                r.config.seed,
                u.user_index,
                u.position_km,
                u.cell,
                u.long_term_rate,
                bits(u.long_term_rate),
                bits(u.service_rate)
            );
        }
    }
    write_csv(&csv_path, &manifest, &body)?;
    let runs: Vec<_> = results
        .iter()
        .map(|r| {
            json!({
                "seed": r.config.seed,
                "slots": r.slots,
                "skipped_slots": r.skipped_slots,
                "max_ici": r.max_ici,
                "max_power_ratio": r.max_power_ratio,
                "mean_weighted_sum": r.mean_weighted_sum,
                "max_min_ratio": r.max_min_ratio(),
                "users": r.users,
            })
        })
        .collect();
    write_json(&json_path, &manifest, json!({ "runs": runs }))?;

    let k = cfg.users;
    for r in &results {
        println!(
            "seed {}: center {:.3} / edge {:.3} bits/channel use, max/min {:.3}, {} skipped slots{}",
            r.config.seed,
            bits(r.rate(0, 1)),
            bits(r.rate(0, k)),
            r.max_min_ratio(),
            r.skipped_slots,
            r.max_ici.map_or(String::new(), |v| format!(", max ICI {v:.4}")),
        );
    }
    println!("  wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}
