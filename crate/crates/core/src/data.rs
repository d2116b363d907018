//! Bank data files, the synthetic balance-sheet generator and result writers.
//!
//! File formats (UTF-8, comma separated, `.` decimal separator):
//!
//! * banks: `id,name,loans,cash,securities_units,deposits`
//! * sweep: `sigma,config_id,mean_default_fraction,std_error,n_realizations`
//! * trace: `day,defaults_cum,loan_volume,bond_price,total_cash,trust_broken`
//!
//! Sweep and trace files start with one `#` comment line carrying the
//! configuration they were produced with. Numbers are written with 12
//! significant digits, see [`format_number`].

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::SweepPoint;
use crate::balance::{calibrate_floors, Bank, BankId, CalibrationError};
use crate::engine::DayReport;
use crate::stochastics::RngStream;

pub const BANKS_HEADER: [&str; 6] = ["id", "name", "loans", "cash", "securities_units", "deposits"];
pub const SWEEP_HEADER: [&str; 5] = [
    "sigma",
    "config_id",
    "mean_default_fraction",
    "std_error",
    "n_realizations",
];
pub const TRACE_HEADER: [&str; 6] = [
    "day",
    "defaults_cum",
    "loan_volume",
    "bond_price",
    "total_cash",
    "trust_broken",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("header must be `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: field `{field}` must be a non-negative number (got {value})")]
    Negative {
        line: u64,
        field: &'static str,
        value: f64,
    },
    #[error("line {line}: duplicate bank id {id}")]
    DuplicateId { line: u64, id: u32 },
    #[error("line {line}: bank {id} has non-positive equity (assets {assets} <= deposits {deposits})")]
    NonPositiveEquity {
        line: u64,
        id: u32,
        assets: f64,
        deposits: f64,
    },
    #[error("line {line}: {source}")]
    Calibration {
        line: u64,
        #[source]
        source: CalibrationError,
    },
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_error(path: &Path, err: csv::Error) -> DataError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io {
            path: path.display().to_string(),
            source,
        },
        kind => DataError::Malformed {
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// One row of a banks file. Day-0 interbank positions are implicitly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankRecord {
    pub id: u32,
    pub name: String,
    pub loans: f64,
    pub cash: f64,
    pub securities_units: f64,
    pub deposits: f64,
}

impl BankRecord {
    pub fn to_bank(&self) -> Bank {
        Bank::new(
            BankId(self.id),
            self.loans,
            self.cash,
            self.securities_units,
            self.deposits,
        )
    }

    pub fn total_assets(&self, price0: f64) -> f64 {
        self.loans + self.cash + self.securities_units * price0
    }

    fn validate(&self, line: u64, price0: f64) -> Result<(), DataError> {
        for (field, value) in [
            ("loans", self.loans),
            ("cash", self.cash),
            ("securities_units", self.securities_units),
            ("deposits", self.deposits),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(DataError::Negative { line, field, value });
            }
        }
        let assets = self.total_assets(price0);
        if !(assets > self.deposits) {
            return Err(DataError::NonPositiveEquity {
                line,
                id: self.id,
                assets,
                deposits: self.deposits,
            });
        }
        calibrate_floors(&self.to_bank(), price0)
            .map(|_| ())
            .map_err(|source| DataError::Calibration { line, source })
    }
}

/// Reads and validates bank records priced at `price0`.
pub fn read_banks<R: Read>(reader: R, price0: f64) -> Result<Vec<BankRecord>, DataError> {
    let path = Path::new("<banks>");
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().ne(BANKS_HEADER.iter().copied()) {
        return Err(DataError::Header {
            expected: BANKS_HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let record: BankRecord = row.deserialize(Some(&headers)).map_err(|e| DataError::Malformed {
            line,
            message: e.to_string(),
        })?;
        record.validate(line, price0)?;
        if !seen.insert(record.id) {
            return Err(DataError::DuplicateId {
                line,
                id: record.id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_banks(path: &Path) -> Result<Vec<BankRecord>, DataError> {
    let file = File::open(path).map_err(io_error(path))?;
    read_banks(file, crate::engine::INITIAL_PRICE).map_err(|e| match e {
        DataError::Io { source, .. } => DataError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn write_banks(records: &[BankRecord], path: &Path) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut wtr = csv::Writer::from_writer(BufWriter::new(file));
    wtr.write_record(BANKS_HEADER).map_err(|e| csv_error(path, e))?;
    for r in records {
        wtr.write_record([
            r.id.to_string(),
            r.name.clone(),
            format_number(r.loans),
            format_number(r.cash),
            format_number(r.securities_units),
            format_number(r.deposits),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(io_error(path))
}

/// The checked-in reference system: [`generate_synthetic`] with the
/// default [`SyntheticSpec`], written by [`write_banks`].
pub const REFERENCE_BANKS_CSV: &str = include_str!("../data/reference_banks.csv");

pub fn reference_banks() -> Vec<BankRecord> {
    read_banks(REFERENCE_BANKS_CSV.as_bytes(), crate::engine::INITIAL_PRICE)
        .expect("reference dataset is valid")
}

/// Day-0 banks with calibrated floors.
pub fn calibrate_banks(records: &[BankRecord], price0: f64) -> Result<Vec<Bank>, CalibrationError> {
    records
        .iter()
        .map(|r| {
            let mut bank = r.to_bank();
            bank.floors = calibrate_floors(&bank, price0)?;
            Ok(bank)
        })
        .collect()
}

/// Renders `x` with 12 significant digits: plain decimal notation for
/// magnitudes in `[1e-5, 1e12)`, scientific notation otherwise, trailing
/// zeros dropped.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exponent) = sci.split_once('e').expect("scientific format");
    let exponent: i32 = exponent.parse().expect("exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if negative { "-" } else { "" };

    if !(-5..12).contains(&exponent) {
        let mut m = mantissa.trim_end_matches('0').to_string();
        if m.ends_with('.') {
            m.pop();
        }
        return format!("{m}e{exponent}");
    }
    let (int_part, frac_part) = if exponent >= 0 {
        let split = exponent as usize + 1;
        (digits[..split].to_string(), digits[split..].to_string())
    } else {
        let zeros = "0".repeat((-exponent - 1) as usize);
        ("0".to_string(), format!("{zeros}{digits}"))
    };
    let frac = frac_part.trim_end_matches('0');
    if frac.is_empty() {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac}")
    }
}

fn create_with_comment(path: &Path, comment: &str) -> Result<BufWriter<File>, DataError> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut out = BufWriter::new(file);
    let comment = comment.replace(['\n', '\r'], " ");
    writeln!(out, "# {comment}").map_err(io_error(path))?;
    Ok(out)
}

/// One row per sweep point. `comment` becomes the first line, after `# `.
pub fn write_sweep_csv(points: &[SweepPoint], comment: &str, path: &Path) -> Result<(), DataError> {
    let mut out = create_with_comment(path, comment)?;
    for p in points.iter().filter(|p| p.failed > 0) {
        writeln!(
            out,
            "# failed realizations at sigma={}: {}",
            format_number(p.sigma),
            p.failed
        )
        .map_err(io_error(path))?;
    }
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(SWEEP_HEADER).map_err(|e| csv_error(path, e))?;
    for p in points {
        wtr.write_record([
            format_number(p.sigma),
            p.config_id.clone(),
            format_number(p.mean_default_fraction),
            format_number(p.std_error),
            p.realizations.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(io_error(path))
}

/// Reads a sweep file back. Failure counts are not part of the schema and
/// come back as 0.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepPoint>, DataError> {
    let file = File::open(path).map_err(io_error(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().ne(SWEEP_HEADER.iter().copied()) {
        return Err(DataError::Header {
            expected: SWEEP_HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut points = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| -> Result<f64, DataError> {
            row[i].parse::<f64>().map_err(|e| DataError::Malformed {
                line,
                message: format!("{}: {e}", SWEEP_HEADER[i]),
            })
        };
        points.push(SweepPoint {
            sigma: num(0)?,
            config_id: row[1].to_string(),
            mean_default_fraction: num(2)?,
            std_error: num(3)?,
            realizations: row[4].parse().map_err(|e| DataError::Malformed {
                line,
                message: format!("n_realizations: {e}"),
            })?,
            failed: 0,
        });
    }
    Ok(points)
}

/// One row per simulated day.
pub fn write_trace_csv(reports: &[DayReport], comment: &str, path: &Path) -> Result<(), DataError> {
    let out = create_with_comment(path, comment)?;
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(TRACE_HEADER).map_err(|e| csv_error(path, e))?;
    for r in reports {
        wtr.write_record([
            r.day.to_string(),
            r.defaults_cum.to_string(),
            format_number(r.loan_volume),
            format_number(r.bond_price),
            format_number(r.total_cash),
            u8::from(r.trust_broken).to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(io_error(path))
}

/// `sigma,<column>` rows for a closed-form curve.
pub fn write_curve_csv(
    column: &str,
    rows: &[(f64, f64)],
    comment: &str,
    path: &Path,
) -> Result<(), DataError> {
    let out = create_with_comment(path, comment)?;
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["sigma", column]).map_err(|e| csv_error(path, e))?;
    for &(sigma, value) in rows {
        wtr.write_record([format_number(sigma), format_number(value)])
            .map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(io_error(path))
}

/// Parameters of the synthetic banking system. Shares are fractions of each
/// bank's total assets; equity is whatever deposits leave over.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_banks: usize,
    /// Location of log total assets before rescaling.
    pub size_log_mean: f64,
    /// Spread of log total assets.
    pub size_log_sd: f64,
    /// Accepted share of total assets held by the five largest banks.
    pub top5_share: (f64, f64),
    pub cash_share: (f64, f64),
    pub securities_share: (f64, f64),
    pub deposit_share: (f64, f64),
    /// System-wide bond holding the sizes are scaled to.
    pub total_securities: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> SyntheticSpec {
        SyntheticSpec {
            n_banks: 31,
            size_log_mean: 0.0,
            size_log_sd: 1.1,
            top5_share: (0.5, 0.75),
            cash_share: (0.028, 0.042),
            securities_share: (0.08, 0.42),
            deposit_share: (0.90, 0.95),
            total_securities: 3.0e5,
            seed: 2013,
        }
    }
}

impl SyntheticSpec {
    fn check(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InfeasibleSpec(msg));
        if self.n_banks == 0 {
            return bad("bank count must be positive".into());
        }
        for (name, (lo, hi)) in [
            ("top5_share", self.top5_share),
            ("cash_share", self.cash_share),
            ("securities_share", self.securities_share),
            ("deposit_share", self.deposit_share),
        ] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return bad(format!("{name} range ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 1"));
            }
        }
        if !(self.cash_share.0 > 0.0) {
            return bad("cash share must be positive".into());
        }
        if !(self.securities_share.1 > 0.0) {
            return bad("securities share must allow a positive holding".into());
        }
        if !(self.deposit_share.1 < 1.0) {
            return bad("deposit share must stay below 1 to leave positive equity".into());
        }
        if !(self.cash_share.1 + self.securities_share.1 < self.deposit_share.0) {
            return bad(format!(
                "cash + securities shares (up to {}) must stay below the deposit share ({}) \
                 for a liquidity floor under 1",
                self.cash_share.1 + self.securities_share.1,
                self.deposit_share.0
            ));
        }
        if self.n_banks > 5 && 5.0 / self.n_banks as f64 > self.top5_share.1 {
            return bad(format!(
                "{} banks cannot give the top five a share below {}",
                self.n_banks, self.top5_share.1
            ));
        }
        if !(self.total_securities > 0.0 && self.size_log_sd >= 0.0) {
            return bad("total securities must be positive and size spread non-negative".into());
        }
        Ok(())
    }
}

fn top5_share(sizes_desc: &[f64], power: f64) -> f64 {
    let weights = sizes_desc.iter().map(|s| libm::pow(*s, power));
    let total: f64 = weights.clone().sum();
    weights.take(5).sum::<f64>() / total
}

/// Generates a banking system from `spec`. Sizes are drawn log-normal and
/// raised to the power that brings the top-five share into its band
/// (order preserving); each bank then draws its balance-sheet shares.
/// Finally everything is scaled so bond holdings sum to
/// `spec.total_securities`. Ids run 1..=n from the largest bank down.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<BankRecord>, DataError> {
    spec.check()?;
    let mut rng = RngStream::new(spec.seed);
    let mut sizes: Vec<f64> = (0..spec.n_banks)
        .map(|_| libm::exp(spec.size_log_mean + spec.size_log_sd * rng.standard_normal()))
        .collect();
    sizes.sort_by(|a, b| b.total_cmp(a));

    if spec.n_banks > 5 {
        let (lo, hi) = spec.top5_share;
        let share = top5_share(&sizes, 1.0);
        if share < lo || share > hi {
            // aim just inside the violated edge
            let width = hi - lo;
            let target = if share < lo { lo + 0.01 * width } else { hi - 0.01 * width };
            let (mut a, mut b) = if share < lo { (1.0, 64.0) } else { (0.0, 1.0) };
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if top5_share(&sizes, mid) < target {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let power = 0.5 * (a + b);
            for s in &mut sizes {
                *s = libm::pow(*s, power);
            }
            let reached = top5_share(&sizes, 1.0);
            if !(lo..=hi).contains(&reached) {
                return Err(DataError::InfeasibleSpec(format!(
                    "size spread too small to reach a top-five share of {lo}..{hi} (got {reached})"
                )));
            }
        }
    }

    let uniform = |rng: &mut RngStream, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.uniform();
    let shares: Vec<(f64, f64, f64)> = sizes
        .iter()
        .map(|_| {
            let cash = uniform(&mut rng, spec.cash_share);
            let securities = uniform(&mut rng, spec.securities_share);
            let deposits = uniform(&mut rng, spec.deposit_share);
            (cash, securities, deposits)
        })
        .collect();
    let raw_securities: f64 = sizes.iter().zip(&shares).map(|(s, (_, sec, _))| s * sec).sum();
    let scale = spec.total_securities / raw_securities;

    let width = (spec.n_banks as f64).log10().floor() as usize + 1;
    let records = sizes
        .iter()
        .zip(&shares)
        .enumerate()
        .map(|(i, (size, &(cash, securities, deposits)))| {
            let total = size * scale;
            BankRecord {
                id: i as u32 + 1,
                name: format!("Bank {:0width$}", i + 1),
                loans: total * (1.0 - cash - securities),
                cash: total * cash,
                securities_units: total * securities,
                deposits: total * deposits,
            }
        })
        .collect();
    Ok(records)
}
