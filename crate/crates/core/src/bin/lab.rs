//! Experiment runner CLI: builds the weight family, runs the requested
//! experiment, prints one line per verification check and writes
//! results.csv / summary.json / plotdata.csv.

use a2lab::experiment::{self, apply_kv, parse_config, Delta0Rule, Evaluator, ExperimentSpec, NmaxRule};
use clap::Parser;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "lab", about = "matrix-A2 counterexample laboratory", version)]
struct Args {
    /// Experiment name; see --list.
    #[arg(long)]
    experiment: Option<String>,

    /// Flat key=value configuration file (CLI flags override it).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Comma-separated Q grid, e.g. "8,16,32,64".
    #[arg(long)]
    q_grid: Option<String>,

    /// Initial rotation parameter, a number or "auto".
    #[arg(long)]
    delta0: Option<String>,

    /// Stopping generations, a number or "auto" (= ceil(16 Q)).
    #[arg(long)]
    nmax: Option<String>,

    /// Witness vector: "a0" or "a0b0".
    #[arg(long)]
    witness: Option<String>,

    /// Quadratic-form evaluator: "fast" or "brute".
    #[arg(long)]
    evaluator: Option<String>,

    /// Comma-separated periodization frequencies, e.g. "3,5,7".
    #[arg(long)]
    n_family: Option<String>,

    /// Output directory for results.csv / summary.json / plotdata.csv.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    tol: Option<f64>,

    /// Working depth for remodeling experiments.
    #[arg(long)]
    depth: Option<u32>,

    /// Repair rounds for remodeling experiments.
    #[arg(long)]
    iterations: Option<usize>,

    /// List available experiments and exit.
    #[arg(long)]
    list: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list {
        for name in experiment::EXPERIMENTS {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    let mut spec = match (&args.config, &args.experiment) {
        (Some(path), _) => match std::fs::read_to_string(path).map_err(|e| e.to_string()).and_then(|t| parse_config(&t).map_err(|e| e.to_string())) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        (None, Some(name)) => ExperimentSpec::named(name),
        (None, None) => {
            eprintln!("error: need --experiment or --config; try --list");
            return ExitCode::from(2);
        }
    };
    if let Some(name) = &args.experiment {
        spec.experiment = name.clone();
    }
    let mut overrides: BTreeMap<String, String> = BTreeMap::new();
    if let Some(v) = &args.q_grid {
        overrides.insert("q_grid".into(), v.clone());
    }
    if let Some(v) = &args.delta0 {
        overrides.insert("delta0".into(), v.clone());
    }
    if let Some(v) = &args.nmax {
        overrides.insert("nmax".into(), v.clone());
    }
    if let Some(v) = &args.witness {
        overrides.insert("witness".into(), v.clone());
    }
    if let Some(v) = &args.evaluator {
        overrides.insert("evaluator".into(), v.clone());
    }
    if let Some(v) = &args.n_family {
        overrides.insert("n_family".into(), v.clone());
    }
    if let Err(e) = apply_kv(&mut spec, &overrides) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if let Some(out) = args.out {
        spec.out_dir = Some(out);
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(tol) = args.tol {
        spec.tol = tol;
    }
    if let Some(depth) = args.depth {
        spec.depth = depth;
    }
    if let Some(iters) = args.iterations {
        spec.iterations = iters;
    }
    // keep rule echoes for the log line
    let delta0_desc = match spec.delta0 {
        Delta0Rule::Auto => "auto".to_string(),
        Delta0Rule::Fixed(d) => format!("{d}"),
    };
    let nmax_desc = match spec.n_max {
        NmaxRule::Auto => "auto".to_string(),
        NmaxRule::Fixed(n) => format!("{n}"),
    };
    eprintln!(
        "running {} on Q={:?} (delta0={delta0_desc}, nmax={nmax_desc}, evaluator={:?}, seed={})",
        spec.experiment, spec.q_grid, spec.evaluator, spec.seed
    );
    match experiment::run(&spec) {
        Ok(result) => {
            for c in &result.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                if c.detail.is_empty() {
                    println!("[{status}] {}", c.name);
                } else {
                    println!("[{status}] {} ({})", c.name, c.detail);
                }
            }
            if let Some(fit) = &result.fit {
                println!(
                    "fit: slope {:.4} +/- {:.4} (95% CI, {} points)",
                    fit.slope, fit.ci95, fit.points
                );
            }
            println!("runtime: {:.0} ms", result.runtime_ms);
            if matches!(spec.evaluator, Evaluator::Brute) && spec.experiment == "pi-exponent" {
                eprintln!("note: brute-force evaluator caps n_max; prefer --evaluator fast for deep runs");
            }
            if result.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
