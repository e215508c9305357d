//! Command-line frontend: run scenarios, evaluate closed forms, and work
//! with chain files.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zeroblock::analytics::{
    event4_max_probability, fork_report, poisson_pmf, revenue_shares, selfish_threshold_lower,
    withholding_violations,
};
use zeroblock::chain::PowCheck;
use zeroblock::chainfile;
use zeroblock::churn::{
    homogeneous_probability, join_majority_probability, retry_success_probability, ChurnParams,
};
use zeroblock::scenario;
use zeroblock::simnet::run;

#[derive(Parser)]
#[command(name = "zeroblock", about = "Block-withholding countermeasure simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write trace + revenue reports.
    Simulate(SimulateArgs),
    /// Print closed-form values.
    Analytics {
        #[command(subcommand)]
        formula: Formula,
    },
    /// Validate or compact a chain file.
    Chain {
        #[command(subcommand)]
        action: ChainAction,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (flat key = value).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's repetition count.
    #[arg(long)]
    reps: Option<u32>,
    /// Report format.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Subcommand)]
enum Formula {
    /// Profitability threshold of withholding vs. tie-winning fraction.
    Threshold {
        #[arg(long)]
        gamma: f64,
    },
    /// Probability of exactly rho events at the given mean.
    Poisson {
        #[arg(long)]
        rho: u64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
    /// Worst-case two-consecutive-blocks probability for a withholding pool.
    Event4 {
        #[arg(long)]
        sp: f64,
    },
    /// Hypergeometric honest-majority probabilities as CSV.
    ChurnTable {
        /// Extra rows as n:sigma:eta (repeatable).
        #[arg(long = "row")]
        rows: Vec<String>,
    },
    /// Probability of m inhomogeneous draws then an all-honest one.
    Retry {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        sigma: u64,
        #[arg(long)]
        eta: u64,
        #[arg(long)]
        m: u32,
    },
}

#[derive(Subcommand)]
enum ChainAction {
    Validate {
        #[arg(long)]
        file: PathBuf,
    },
    Compact {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn log_enabled() -> bool {
    std::env::var("ZEROBLOCK_LOG").map(|v| !v.is_empty()).unwrap_or(false)
}

fn logln(msg: &str) {
    if log_enabled() {
        eprintln!("[zeroblock] {msg}");
    }
}

/// Six significant digits, plain decimal notation.
fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let digits = (6 - 1 - v.abs().log10().floor() as i64).max(0) as usize;
    format!("{v:.digits$}")
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), (u8, String)> {
    if args.format != "csv" {
        return Err((EXIT_VALIDATION, format!("unsupported format {:?}", args.format)));
    }
    let text = fs::read_to_string(&args.scenario)
        .map_err(|e| (EXIT_VALIDATION, format!("{}: {e}", args.scenario.display())))?;
    let mut sc = scenario::parse(&text)
        .map_err(|e| (EXIT_VALIDATION, format!("{}: {e}", args.scenario.display())))?;
    if let Some(seed) = args.seed {
        sc.config.seed = seed;
    }
    if let Some(reps) = args.reps {
        if reps == 0 {
            return Err((EXIT_VALIDATION, "--reps must be at least 1".into()));
        }
        sc.repetitions = reps;
    }
    fs::create_dir_all(&args.out)
        .map_err(|e| (EXIT_RUNTIME, format!("{}: {e}", args.out.display())))?;

    let mut shares = Vec::new();
    let mut accidental = Vec::new();
    let mut total_forks = Vec::new();
    let mut violations = 0u64;
    for rep in 0..sc.repetitions {
        let cfg = sc.rep_config(rep);
        logln(&format!("{} rep {rep} seed {}", sc.name, cfg.seed));
        let trace = run(cfg).map_err(|e| (EXIT_VALIDATION, e.to_string()))?;
        let revenue = revenue_shares(&trace);
        let forks = fork_report(&trace);
        violations += withholding_violations(&trace);
        shares.push(revenue.selfish_share());
        accidental.push(forks.accidental_rate());
        total_forks.push(forks.total_rate());

        let stem = format!("{}-rep{rep}", sc.name);
        write_file(&args.out.join(format!("{stem}.trace")), &trace.serialize_records())?;
        write_file(&args.out.join(format!("{stem}-revenue.csv")), &revenue.to_csv())?;
    }

    let (share_m, share_s) = mean_std(&shares);
    let (acc_m, acc_s) = mean_std(&accidental);
    let (tot_m, tot_s) = mean_std(&total_forks);
    let mut agg = String::from("metric,mean,stddev\n");
    let _ = writeln!(agg, "selfish_share,{share_m:.6},{share_s:.6}");
    let _ = writeln!(agg, "accidental_fork_rate,{acc_m:.6},{acc_s:.6}");
    let _ = writeln!(agg, "total_fork_rate,{tot_m:.6},{tot_s:.6}");
    let _ = writeln!(agg, "withholding_violations,{violations},0");
    write_file(&args.out.join(format!("{}-aggregate.csv", sc.name)), &agg)?;
    print!("{agg}");
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), (u8, String)> {
    fs::write(path, contents).map_err(|e| (EXIT_RUNTIME, format!("{}: {e}", path.display())))
}

fn churn_params(n: u64, sigma: u64, eta: u64) -> Result<ChurnParams, (u8, String)> {
    ChurnParams::new(n, sigma, eta).map_err(|e| (EXIT_VALIDATION, e.to_string()))
}

fn cmd_analytics(formula: &Formula) -> Result<(), (u8, String)> {
    match formula {
        Formula::Threshold { gamma } => {
            if !(0.0..=1.0).contains(gamma) {
                return Err((EXIT_VALIDATION, format!("gamma {gamma} outside [0, 1]")));
            }
            println!("{}", sig6(selfish_threshold_lower(*gamma)));
        }
        Formula::Poisson { rho, lambda } => {
            if *lambda <= 0.0 {
                return Err((EXIT_VALIDATION, format!("lambda {lambda} must be positive")));
            }
            println!("{}", sig6(poisson_pmf(*rho, *lambda)));
        }
        Formula::Event4 { sp } => {
            if !(0.0..=0.5).contains(sp) {
                return Err((EXIT_VALIDATION, format!("sp {sp} outside [0, 0.5]")));
            }
            println!("{}", sig6(event4_max_probability(*sp)));
        }
        Formula::ChurnTable { rows } => {
            let mut table: Vec<(u64, u64, u64)> = vec![
                (5000, 8, 4750),
                (5000, 8, 4250),
                (5000, 8, 3750),
                (5000, 8, 3250),
            ];
            for r in rows {
                let parts: Vec<&str> = r.split(':').collect();
                let parsed: Option<(u64, u64, u64)> = match parts.as_slice() {
                    [n, s, e] => match (n.parse(), s.parse(), e.parse()) {
                        (Ok(n), Ok(s), Ok(e)) => Some((n, s, e)),
                        _ => None,
                    },
                    _ => None,
                };
                let row =
                    parsed.ok_or((EXIT_VALIDATION, format!("bad --row {r:?}, want n:sigma:eta")))?;
                table.push(row);
            }
            println!("n,sigma,eta,psi,p_honest_majority");
            for (n, sigma, eta) in table {
                let p = churn_params(n, sigma, eta)?;
                println!(
                    "{n},{sigma},{eta},{},{}",
                    p.psi,
                    sig6(join_majority_probability(p))
                );
            }
        }
        Formula::Retry { n, sigma, eta, m } => {
            let p = churn_params(*n, *sigma, *eta)?;
            let (hom, hcorr, hnotc) = homogeneous_probability(p);
            println!("p_hom={}", sig6(hom));
            println!("p_hcorr={}", sig6(hcorr));
            println!("p_hnotc={}", sig6(hnotc));
            println!("p_retry_m={}", sig6(retry_success_probability(p, *m)));
        }
    }
    Ok(())
}

fn cmd_chain(action: &ChainAction) -> Result<(), (u8, String)> {
    match action {
        ChainAction::Validate { file } => {
            let text = fs::read_to_string(file)
                .map_err(|e| (EXIT_RUNTIME, format!("{}: {e}", file.display())))?;
            let chain = chainfile::parse(&text)
                .map_err(|e| (EXIT_VALIDATION, format!("{}: {e}", file.display())))?;
            chain
                .validate(&PowCheck::Assumed)
                .map_err(|e| (EXIT_VALIDATION, format!("{}: {e}", file.display())))?;
            println!(
                "valid: {} blocks, {} standard",
                chain.len(),
                chain.standard_height()
            );
        }
        ChainAction::Compact { file, out } => {
            let text = fs::read_to_string(file)
                .map_err(|e| (EXIT_RUNTIME, format!("{}: {e}", file.display())))?;
            let chain = chainfile::parse(&text)
                .map_err(|e| (EXIT_VALIDATION, format!("{}: {e}", file.display())))?;
            let compacted = zeroblock::chain::compact(&chain);
            write_file(out, &chainfile::serialize(&compacted))?;
            println!(
                "compacted: {} -> {} blocks",
                chain.len(),
                compacted.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Analytics { formula } => cmd_analytics(formula),
        Command::Chain { action } => cmd_chain(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
