use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use interbank::analytics::Compounding;
use interbank::config::{apply_entries, read_config_file, RatioToggles, SimConfig};
use interbank::data::{
    calibrate_banks, generate_synthetic, load_banks, reference_banks, write_banks, write_curve_csv,
    write_sweep_csv, write_trace_csv, BankRecord, SyntheticSpec,
};
use interbank::engine::{run_realization, INITIAL_PRICE};
use interbank::harness::{
    analytic_curves, config_comment, default_sigma_grid, oracle_check, run_figure_suite, run_sweep,
    Execution, OracleRegime, ANALYTIC_NO_MARKETS_FILE, ANALYTIC_SECURITIES_FILE,
};
use interbank::Bank;

/// Daily overnight interbank market simulator.
#[derive(Debug, Parser)]
#[command(name = "interbank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one realization and write its daily trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Realization stream to run.
        #[arg(long, default_value_t = 0)]
        realization: u64,
    },
    /// Ensemble sweep over a sigma grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        /// Run realizations on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// All curves of the three figures plus the closed-form baselines.
    Figures {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        sequential: bool,
    },
    /// Closed-form default fractions without markets and with a frictionless
    /// bond market.
    Analytic {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        /// Use `1 - Φ(-k/σ)^T` instead of `1 - (1 - Φ(-k/σ))^T`.
        #[arg(long)]
        printed: bool,
    },
    /// Write a synthetic banks CSV.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 31)]
        n_banks: usize,
    },
    /// Compare Monte Carlo against the closed forms.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Band width in standard errors.
        #[arg(long, default_value_t = 4.0)]
        k: f64,
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` file using the flag names; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    days: Option<u32>,
    #[arg(long)]
    realizations: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_interbank: bool,
    #[arg(long)]
    no_securities: bool,
    #[arg(long, conflicts_with = "no_trust")]
    trust: bool,
    #[arg(long)]
    no_trust: bool,
    #[arg(long)]
    trust_fraction: Option<f64>,
    /// reserve,liquidity[,leverage][,car][,large-exposure]
    #[arg(long)]
    ratios: Option<String>,
    /// Banks CSV; the built-in reference system when absent.
    #[arg(long)]
    banks: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// `start:stop:step` or a comma list; 0:8:0.25 by default.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Debug)]
enum Failure {
    /// Bad configuration, data or output path.
    Invalid(String),
    /// The model itself failed.
    Runtime(String),
    /// A self-test comparison failed.
    Validation,
}

impl Failure {
    fn invalid(e: impl fmt::Display) -> Failure {
        Failure::Invalid(e.to_string())
    }
}

struct Setup {
    config: SimConfig,
    banks_path: Option<PathBuf>,
    out: PathBuf,
    /// Seed set by flag or file; also picks the generator seed for gen-data.
    explicit_seed: Option<u64>,
}

fn setup(common: &Common) -> Result<Setup, Failure> {
    let mut config = SimConfig::default();
    let mut entries = BTreeMap::new();
    if let Some(path) = &common.config {
        entries = read_config_file(path).map_err(Failure::invalid)?;
        apply_entries(&mut config, &entries).map_err(Failure::invalid)?;
    }
    if let Some(v) = common.sigma {
        config.sigma = v;
    }
    if let Some(v) = common.eta {
        config.eta = v;
    }
    if let Some(v) = common.days {
        config.days = v;
    }
    if let Some(v) = common.realizations {
        config.realizations = v;
    }
    if let Some(v) = common.seed {
        config.seed = v;
    }
    if common.no_interbank {
        config.interbank = false;
    }
    if common.no_securities {
        config.securities_market = false;
    }
    if common.trust {
        config.trust_effect = true;
    }
    if common.no_trust {
        config.trust_effect = false;
    }
    if let Some(v) = common.trust_fraction {
        config.trust_fraction = v;
    }
    if let Some(v) = &common.ratios {
        config.ratios = RatioToggles::parse(v).map_err(Failure::invalid)?;
    }
    config.validate().map_err(Failure::invalid)?;

    let banks_path = common
        .banks
        .clone()
        .or_else(|| entries.get("banks").map(PathBuf::from));
    let out = common
        .out
        .clone()
        .or_else(|| entries.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let explicit_seed = match common.seed {
        Some(s) => Some(s),
        None => entries.get("seed").and_then(|s| s.parse().ok()),
    };
    Ok(Setup {
        config,
        banks_path,
        out,
        explicit_seed,
    })
}

impl Setup {
    fn records(&self) -> Result<Vec<BankRecord>, Failure> {
        match &self.banks_path {
            Some(path) => load_banks(path).map_err(Failure::invalid),
            None => Ok(reference_banks()),
        }
    }

    fn banks(&self) -> Result<Vec<Bank>, Failure> {
        let records = self.records()?;
        if records.is_empty() {
            return Err(Failure::Invalid("banks file has no banks".into()));
        }
        calibrate_banks(&records, INITIAL_PRICE).map_err(Failure::invalid)
    }

    fn out_dir(&self) -> Result<&Path, Failure> {
        fs::create_dir_all(&self.out)
            .map_err(|e| Failure::Invalid(format!("{}: {e}", self.out.display())))?;
        Ok(&self.out)
    }
}

fn parse_grid(arg: Option<&str>) -> Result<Vec<f64>, Failure> {
    let Some(text) = arg else {
        return Ok(default_sigma_grid());
    };
    let bad = |msg: &str| Failure::Invalid(format!("grid `{text}`: {msg}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let grid: Vec<f64> = if let [start, stop, step] = text.split(':').collect::<Vec<_>>()[..] {
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0 && stop >= start) {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| start + i as f64 * step).collect()
    } else {
        text.split(',').map(num).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(bad("sigmas must be finite and >= 0"));
    }
    Ok(grid)
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn simulate(common: &Common, realization: u64) -> Result<(), Failure> {
    let s = setup(common)?;
    let banks = s.banks()?;
    let result = run_realization(banks, &s.config, realization)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let path = s
        .out_dir()?
        .join(format!("trace-{}-r{realization}.csv", s.config.fingerprint()));
    let comment = format!("{} realization={realization}", config_comment("trace", &s.config));
    write_trace_csv(&result.reports, &comment, &path).map_err(Failure::invalid)?;
    println!(
        "{} of {} banks defaulted; trace written to {}",
        result.defaulted(),
        result.n_banks,
        path.display()
    );
    Ok(())
}

fn sweep(common: &Common, grid: &GridArgs, sequential: bool) -> Result<(), Failure> {
    let s = setup(common)?;
    let grid = parse_grid(grid.grid.as_deref())?;
    let banks = s.banks()?;
    let report = run_sweep(&banks, &grid, &s.config, execution(sequential)).map_err(Failure::invalid)?;
    let path = s.out_dir()?.join(format!("{}.csv", report.config_id));
    write_sweep_csv(&report.points, &config_comment("sweep", &s.config), &path)
        .map_err(Failure::invalid)?;
    println!(
        "{} sigmas x {} realizations in {:.2?}; {} failed realizations; written to {}",
        grid.len(),
        s.config.realizations,
        report.elapsed,
        report.failures.len(),
        path.display()
    );
    if !report.lost_sigmas.is_empty() {
        return Err(Failure::Runtime(format!(
            "every realization failed at sigma {:?}",
            report.lost_sigmas
        )));
    }
    Ok(())
}

fn figures(common: &Common, grid: &GridArgs, sequential: bool) -> Result<(), Failure> {
    let s = setup(common)?;
    let grid = parse_grid(grid.grid.as_deref())?;
    let banks = s.banks()?;
    let out = s.out_dir()?;
    let start = std::time::Instant::now();
    let suite = run_figure_suite(&banks, out, &s.config, &grid, execution(sequential))
        .map_err(Failure::invalid)?;
    for (figure, curve, file) in &suite.manifest {
        println!("{figure}\t{curve}\t{file}");
    }
    println!(
        "{} files in {} ({:.2?}, {} failed realizations)",
        suite.files.len(),
        out.display(),
        start.elapsed(),
        suite.failures()
    );
    let lost: Vec<&str> = suite
        .curves
        .iter()
        .filter(|c| !c.report.lost_sigmas.is_empty())
        .map(|c| c.curve.label.as_str())
        .collect();
    if !lost.is_empty() {
        return Err(Failure::Runtime(format!(
            "every realization failed at some sigma of: {}",
            lost.join(", ")
        )));
    }
    Ok(())
}

fn analytic(common: &Common, grid: &GridArgs, printed: bool) -> Result<(), Failure> {
    let s = setup(common)?;
    let grid = parse_grid(grid.grid.as_deref())?;
    let banks = s.banks()?;
    let form = if printed {
        Compounding::Printed
    } else {
        Compounding::Corrected
    };
    let (no_markets, securities) =
        analytic_curves(&banks, &grid, s.config.days, form).map_err(Failure::invalid)?;
    let out = s.out_dir()?;
    let form_name = if printed { "printed" } else { "corrected" };
    for (label, file, rows) in [
        ("analytic no markets", ANALYTIC_NO_MARKETS_FILE, &no_markets),
        ("analytic securities eta=0", ANALYTIC_SECURITIES_FILE, &securities),
    ] {
        let path = out.join(file);
        let comment = format!(
            "{label} form={form_name} days={} banks={}",
            s.config.days,
            banks.len()
        );
        write_curve_csv("expected_default_fraction", rows, &comment, &path)
            .map_err(Failure::invalid)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn gen_data(common: &Common, n_banks: usize) -> Result<(), Failure> {
    let s = setup(common)?;
    let defaults = SyntheticSpec::default();
    let spec = SyntheticSpec {
        n_banks,
        seed: s.explicit_seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let records = generate_synthetic(&spec).map_err(Failure::invalid)?;
    let path = s.out_dir()?.join("banks.csv");
    write_banks(&records, &path).map_err(Failure::invalid)?;
    println!("{} banks written to {}", records.len(), path.display());
    Ok(())
}

fn validate(common: &Common, k: f64, sequential: bool) -> Result<(), Failure> {
    let s = setup(common)?;
    let banks = s.banks()?;
    let sigmas = [0.5, 1.0, 2.0, 4.0, 8.0];
    println!("# {}", config_comment("validate", &s.config));
    let mut all_pass = true;
    for regime in [OracleRegime::NoMarkets, OracleRegime::FrictionlessSecurities] {
        let check = oracle_check(&banks, regime, &s.config, &sigmas, k, execution(sequential))
            .map_err(Failure::invalid)?;
        for a in &check.agreements {
            println!(
                "{} {regime:?} sigma={} observed={:.6} expected={:.6} se={:.3e} band={:.3e}",
                if a.pass { "PASS" } else { "FAIL" },
                a.sigma,
                a.observed,
                a.expected,
                a.std_error,
                a.tolerance
            );
        }
        println!("{regime:?}: {:.2?}", check.elapsed);
        all_pass &= check.pass();
    }
    if all_pass {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate {
            common,
            realization,
        } => simulate(common, *realization),
        Command::Sweep {
            common,
            grid,
            sequential,
        } => sweep(common, grid, *sequential),
        Command::Figures {
            common,
            grid,
            sequential,
        } => figures(common, grid, *sequential),
        Command::Analytic {
            common,
            grid,
            printed,
        } => analytic(common, grid, *printed),
        Command::GenData { common, n_banks } => gen_data(common, *n_banks),
        Command::Validate {
            common,
            k,
            sequential,
        } => validate(common, *k, *sequential),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("model error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Validation) => {
            eprintln!("validation failed");
            ExitCode::from(1)
        }
    }
}
