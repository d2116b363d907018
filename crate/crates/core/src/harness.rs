//! Sigma sweeps over Monte Carlo ensembles, the figure suites and the
//! oracle self-test.
//!
//! One task is one realization. With the `parallel` feature the tasks of a
//! sweep go to the rayon pool; either way results are folded in
//! (sigma, realization) order, so both execution modes give identical
//! output.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::analytics::{
    aggregate_sweep, analytic_no_market_fraction, check_agreement, default_fraction,
    securities_default_probabilities, Agreement, AnalyticsError, Compounding, SweepPoint,
};
use crate::balance::Bank;
use crate::config::{ConfigError, RatioToggles, SimConfig};
use crate::data::{format_number, write_curve_csv, write_sweep_csv, DataError};
use crate::engine::{run_realization, SimError, INITIAL_PRICE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Realizations on the rayon pool. Runs sequentially when the crate is
    /// built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Execution {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("empty sigma grid")]
    EmptyGrid,
    #[error("no banks")]
    NoBanks,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// 0 to 8 in steps of 0.25.
pub fn default_sigma_grid() -> Vec<f64> {
    (0..=32).map(|i| f64::from(i) * 0.25).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationFailure {
    pub sigma: f64,
    pub realization: u64,
    pub error: SimError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// `template_fingerprint` of the swept configuration.
    pub config_id: String,
    /// One point per sigma that had at least one completed realization,
    /// in grid order.
    pub points: Vec<SweepPoint>,
    pub failures: Vec<RealizationFailure>,
    /// Sigmas at which every realization failed.
    pub lost_sigmas: Vec<f64>,
    pub elapsed: Duration,
}

impl SweepReport {
    pub fn point(&self, sigma: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.sigma == sigma)
    }
}

fn run_tasks<T, F>(tasks: &[T], execution: Execution, f: F) -> Vec<Result<f64, SimError>>
where
    T: Sync,
    F: Fn(&T) -> Result<f64, SimError> + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            tasks.par_iter().map(f).collect()
        }
        _ => tasks.iter().map(f).collect(),
    }
}

/// Runs `template.realizations` realizations at every sigma of `grid` and
/// aggregates default fractions. Realization `r` uses stream `r` of
/// `template.seed` at every sigma, so curves share their random numbers.
pub fn run_sweep(
    banks: &[Bank],
    grid: &[f64],
    template: &SimConfig,
    execution: Execution,
) -> Result<SweepReport, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    if banks.is_empty() {
        return Err(HarnessError::NoBanks);
    }
    let configs: Vec<SimConfig> = grid.iter().map(|&s| template.with_sigma(s)).collect();
    for c in &configs {
        c.validate()?;
    }
    let start = Instant::now();
    let realizations = u64::from(template.realizations);
    let tasks: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|g| (0..realizations).map(move |r| (g, r)))
        .collect();
    let outcomes = run_tasks(&tasks, execution, |&(g, r)| {
        run_realization(banks.to_vec(), &configs[g], r).map(|res| default_fraction(&res))
    });

    let config_id = template.template_fingerprint();
    let mut points = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    let mut lost_sigmas = Vec::new();
    for (g, chunk) in outcomes.chunks(realizations as usize).enumerate() {
        let sigma = grid[g];
        let mut fractions = Vec::with_capacity(chunk.len());
        let mut failed = 0;
        for (r, outcome) in chunk.iter().enumerate() {
            match outcome {
                Ok(f) => fractions.push(*f),
                Err(error) => {
                    failed += 1;
                    failures.push(RealizationFailure {
                        sigma,
                        realization: r as u64,
                        error: error.clone(),
                    });
                }
            }
        }
        match aggregate_sweep(sigma, &config_id, &fractions, failed) {
            Some(p) => points.push(p),
            None => lost_sigmas.push(sigma),
        }
    }
    let elapsed = start.elapsed();
    log::info!(
        "swept {config_id}: {} sigmas x {realizations} realizations in {:.2?}",
        grid.len(),
        elapsed
    );
    for f in &failures {
        log::warn!("sigma {} realization {}: {}", f.sigma, f.realization, f.error);
    }
    Ok(SweepReport {
        config_id,
        points,
        failures,
        lost_sigmas,
        elapsed,
    })
}

/// One-line description of a configuration for output headers.
pub fn config_comment(kind: &str, config: &SimConfig) -> String {
    let pairs: Vec<String> = config
        .to_pairs()
        .into_iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    format!(
        "{kind} fingerprint={} seed={} {}",
        config.template_fingerprint(),
        config.seed,
        pairs.join(" ")
    )
}

/// A simulated curve of one of the figures.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub figure: &'static str,
    pub label: String,
    pub config: SimConfig,
}

fn eta_label(eta: f64) -> String {
    format!("eta={}", format_number(eta))
}

/// The simulated curves of the three figures. `template` supplies the seed,
/// horizon, ensemble size, trust fraction and the positive market depth;
/// the figures fix the channel toggles.
pub fn figure_curves(template: &SimConfig) -> Vec<Curve> {
    let base = SimConfig {
        interbank: true,
        securities_market: true,
        trust_effect: false,
        ratios: RatioToggles::two_ratios(),
        ..template.clone()
    };
    let etas = [0.0, template.eta];
    let mut curves = vec![Curve {
        figure: "fig1",
        label: "no markets".to_string(),
        config: SimConfig {
            interbank: false,
            securities_market: false,
            ..base.clone()
        },
    }];
    for eta in etas {
        for interbank in [true, false] {
            curves.push(Curve {
                figure: "fig1",
                label: format!(
                    "{} {}",
                    eta_label(eta),
                    if interbank { "interbank" } else { "no interbank" }
                ),
                config: SimConfig {
                    eta,
                    interbank,
                    ..base.clone()
                },
            });
        }
    }
    for eta in etas {
        for trust in [true, false] {
            curves.push(Curve {
                figure: "fig2",
                label: format!("{} trust {}", eta_label(eta), if trust { "on" } else { "off" }),
                config: SimConfig {
                    eta,
                    trust_effect: trust,
                    ..base.clone()
                },
            });
        }
    }
    for eta in etas {
        for ratios in [RatioToggles::two_ratios(), RatioToggles::all()] {
            curves.push(Curve {
                figure: "fig3",
                label: format!("{} ratios {}", eta_label(eta), ratios),
                config: SimConfig {
                    eta,
                    trust_effect: true,
                    ratios,
                    ..base.clone()
                },
            });
        }
    }
    curves
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveResult {
    pub curve: Curve,
    pub report: SweepReport,
}

/// Sweeps every curve, running each distinct configuration once.
pub fn run_curves(
    banks: &[Bank],
    curves: &[Curve],
    grid: &[f64],
    execution: Execution,
) -> Result<Vec<CurveResult>, HarnessError> {
    let mut done: HashMap<String, SweepReport> = HashMap::new();
    let mut results = Vec::with_capacity(curves.len());
    for curve in curves {
        let id = curve.config.template_fingerprint();
        let report = match done.get(&id) {
            Some(r) => r.clone(),
            None => {
                let r = run_sweep(banks, grid, &curve.config, execution)?;
                done.insert(id, r.clone());
                r
            }
        };
        results.push(CurveResult {
            curve: curve.clone(),
            report,
        });
    }
    Ok(results)
}

/// Closed-form curves over `grid`: without markets, and with a
/// frictionless bond market and no interbank lending.
pub fn analytic_curves(
    banks: &[Bank],
    grid: &[f64],
    days: u32,
    form: Compounding,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>), HarnessError> {
    if banks.is_empty() {
        return Err(HarnessError::NoBanks);
    }
    let no_markets = grid
        .iter()
        .map(|&s| (s, analytic_no_market_fraction(s, days, form)))
        .collect();
    let securities = grid
        .iter()
        .map(|&s| {
            let p = securities_default_probabilities(banks, INITIAL_PRICE, s, days, form)?;
            Ok((s, p.iter().sum::<f64>() / p.len() as f64))
        })
        .collect::<Result<_, AnalyticsError>>()?;
    Ok((no_markets, securities))
}

pub const ANALYTIC_NO_MARKETS_FILE: &str = "analytic-no-markets.csv";
pub const ANALYTIC_SECURITIES_FILE: &str = "analytic-securities.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";
const ANALYTIC_COLUMN: &str = "expected_default_fraction";

#[derive(Debug, Clone, PartialEq)]
pub struct FigureSuite {
    pub curves: Vec<CurveResult>,
    /// (figure, curve label, file name) as listed in the manifest.
    pub manifest: Vec<(String, String, String)>,
    pub files: Vec<PathBuf>,
}

impl FigureSuite {
    pub fn failures(&self) -> usize {
        self.curves.iter().map(|c| c.report.failures.len()).sum()
    }
}

/// Sweeps every figure curve over `grid` and writes one sweep CSV per
/// distinct configuration (named after its fingerprint), the two analytic
/// curves and `manifest.csv` into `out_dir`.
pub fn run_figure_suite(
    banks: &[Bank],
    out_dir: &Path,
    template: &SimConfig,
    grid: &[f64],
    execution: Execution,
) -> Result<FigureSuite, HarnessError> {
    template.validate()?;
    fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let curves = run_curves(banks, &figure_curves(template), grid, execution)?;

    let mut manifest = Vec::new();
    let mut files = Vec::new();
    for result in &curves {
        let name = format!("{}.csv", result.report.config_id);
        let path = out_dir.join(&name);
        if !files.contains(&path) {
            write_sweep_csv(
                &result.report.points,
                &config_comment("sweep", &result.curve.config),
                &path,
            )?;
            files.push(path);
        }
        manifest.push((
            result.curve.figure.to_string(),
            result.curve.label.clone(),
            name,
        ));
    }

    let (no_markets, securities) = analytic_curves(banks, grid, template.days, Compounding::Corrected)?;
    for (label, file, rows) in [
        ("analytic no markets", ANALYTIC_NO_MARKETS_FILE, &no_markets),
        ("analytic securities eta=0", ANALYTIC_SECURITIES_FILE, &securities),
    ] {
        let path = out_dir.join(file);
        write_curve_csv(
            ANALYTIC_COLUMN,
            rows,
            &format!("{label} days={} banks={}", template.days, banks.len()),
            &path,
        )?;
        files.push(path);
        manifest.push(("fig1".to_string(), label.to_string(), file.to_string()));
    }

    let manifest_path = out_dir.join(MANIFEST_FILE);
    write_manifest(&manifest, &manifest_path)?;
    files.push(manifest_path);
    Ok(FigureSuite {
        curves,
        manifest,
        files,
    })
}

fn write_manifest(rows: &[(String, String, String)], path: &Path) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut wtr = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    wtr.write_record(["figure", "curve", "file"]).map_err(|e| io(e.into()))?;
    for (figure, curve, file) in rows {
        wtr.write_record([figure, curve, file]).map_err(|e| io(e.into()))?;
    }
    wtr.flush().map_err(io)
}

/// Which closed form a self-test compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleRegime {
    /// Both markets closed.
    NoMarkets,
    /// Bond market at η = 0, no interbank lending.
    FrictionlessSecurities,
}

impl OracleRegime {
    pub fn config(self, template: &SimConfig) -> SimConfig {
        let securities = self == OracleRegime::FrictionlessSecurities;
        SimConfig {
            interbank: false,
            securities_market: securities,
            eta: if securities { 0.0 } else { template.eta },
            ..template.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub regime: OracleRegime,
    pub agreements: Vec<Agreement>,
    pub elapsed: Duration,
}

impl OracleCheck {
    pub fn pass(&self) -> bool {
        self.agreements.iter().all(|a| a.pass) && !self.agreements.is_empty()
    }
}

/// Monte Carlo against closed form at every sigma of `sigmas`, with a band
/// of `k` standard errors. A sigma whose realizations all failed counts as
/// a failed comparison.
pub fn oracle_check(
    banks: &[Bank],
    regime: OracleRegime,
    template: &SimConfig,
    sigmas: &[f64],
    k: f64,
    execution: Execution,
) -> Result<OracleCheck, HarnessError> {
    let config = regime.config(template);
    let report = run_sweep(banks, sigmas, &config, execution)?;
    let mut agreements = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let probs = match regime {
            OracleRegime::NoMarkets => vec![analytic_no_market_fraction(sigma, config.days, Compounding::Corrected); banks.len()],
            OracleRegime::FrictionlessSecurities => {
                securities_default_probabilities(banks, INITIAL_PRICE, sigma, config.days, Compounding::Corrected)?
            }
        };
        let expected = probs.iter().sum::<f64>() / probs.len() as f64;
        let agreement = match report.point(sigma) {
            Some(point) => check_agreement(point, expected, &probs, k),
            None => Agreement {
                sigma,
                observed: f64::NAN,
                expected,
                std_error: f64::NAN,
                tolerance: 0.0,
                pass: false,
            },
        };
        agreements.push(agreement);
    }
    Ok(OracleCheck {
        regime,
        agreements,
        elapsed: report.elapsed,
    })
}
