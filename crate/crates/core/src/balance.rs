//! Bank balance sheets, the five prudential ratios and per-bank floor
//! calibration.
//!
//! A bank's state is a handful of money amounts plus a bond holding in
//! units. Equity is never stored: it is always recomputed from the
//! balance-sheet identity at the current bond price, so write-offs and
//! revaluations flow through without bookkeeping.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Risk weight applied to customer loans in risk-weighted assets.
pub const LOAN_RISK_WEIGHT: f64 = 0.9;
/// Risk weight applied to interbank assets in risk-weighted assets.
pub const INTERBANK_RISK_WEIGHT: f64 = 0.2;
/// Aggregate cap on interbank assets as a fraction of equity.
pub const LARGE_EXPOSURE_CAP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BankId(pub u32);

impl fmt::Display for BankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A dimensionless ratio that may be undefined because its denominator is
/// zero. An undefined ratio never satisfies a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Value(f64),
    Undefined,
}

impl Ratio {
    fn of(numerator: f64, denominator: f64) -> Ratio {
        if denominator == 0.0 {
            Ratio::Undefined
        } else {
            Ratio::Value(numerator / denominator)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(v),
            Ratio::Undefined => None,
        }
    }

    /// `self >= floor`; false when undefined.
    pub fn meets_floor(self, floor: f64) -> bool {
        matches!(self, Ratio::Value(v) if v >= floor)
    }

    /// `self <= cap`; false when undefined.
    pub fn within_cap(self, cap: f64) -> bool {
        matches!(self, Ratio::Value(v) if v <= cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSet {
    pub reserve: Ratio,
    pub liquidity: Ratio,
    pub leverage: Ratio,
    pub car: Ratio,
    pub large_exposure: Ratio,
}

/// Regulatory floors each bank tries to maintain, taken from its own day-0
/// ratios. The large-exposure cap is the only fixed constant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RatioFloors {
    pub reserve_floor: f64,
    pub liquidity_floor: f64,
    pub leverage_floor: f64,
    pub car_floor: f64,
    pub large_exposure_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("bank {0}: deposits must be positive at day 0")]
    NonPositiveDeposits(BankId),
    #[error("bank {id}: equity must be positive at day 0 (got {equity})")]
    NonPositiveEquity { id: BankId, equity: f64 },
    #[error("bank {0}: loans must be positive so that risk-weighted assets are defined")]
    ZeroRiskWeightedAssets(BankId),
    #[error("bank {0}: interbank positions must be zero at day 0")]
    OpenInterbankPositions(BankId),
    #[error("bank {id}: {which} floor {value} must lie in (0, 1)")]
    FloorOutOfRange {
        id: BankId,
        which: &'static str,
        value: f64,
    },
    #[error("bond price must be positive (got {0})")]
    NonPositivePrice(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bank {
    pub id: BankId,
    /// Customer and public-sector loans; constant over a run.
    pub loans: f64,
    /// Cash and central-bank balances. May dip below zero intraday.
    pub cash: f64,
    /// Government bond holding in units.
    pub securities: f64,
    pub interbank_assets: f64,
    /// Customer deposits plus redeemable own bonds.
    pub deposits: f64,
    pub interbank_liabilities: f64,
    /// Day-0 cash; scales the daily shock.
    pub initial_cash: f64,
    pub floors: RatioFloors,
    /// Day of default, if the bank has defaulted.
    pub defaulted: Option<u32>,
}

impl Bank {
    /// A day-0 bank with no interbank positions and uncalibrated floors.
    pub fn new(id: BankId, loans: f64, cash: f64, securities: f64, deposits: f64) -> Bank {
        Bank {
            id,
            loans,
            cash,
            securities,
            interbank_assets: 0.0,
            deposits,
            interbank_liabilities: 0.0,
            initial_cash: cash,
            floors: RatioFloors::default(),
            defaulted: None,
        }
    }

    /// Builds a day-0 bank and calibrates its floors at `price0`.
    pub fn calibrated(
        id: BankId,
        loans: f64,
        cash: f64,
        securities: f64,
        deposits: f64,
        price0: f64,
    ) -> Result<Bank, CalibrationError> {
        let mut bank = Bank::new(id, loans, cash, securities, deposits);
        bank.floors = calibrate_floors(&bank, price0)?;
        Ok(bank)
    }

    pub fn is_alive(&self) -> bool {
        self.defaulted.is_none()
    }

    pub fn total_assets(&self, price: f64) -> f64 {
        total_assets(self, price)
    }

    pub fn equity(&self, price: f64) -> f64 {
        equity(self, price)
    }

    pub fn ratios(&self, price: f64) -> RatioSet {
        compute_ratios(self, price)
    }

    pub fn meets_reserve_floor(&self) -> bool {
        Ratio::of(self.cash, self.deposits).meets_floor(self.floors.reserve_floor)
    }

    pub fn meets_liquidity_floor(&self, price: f64) -> bool {
        Ratio::of(self.cash + price * self.securities, self.deposits)
            .meets_floor(self.floors.liquidity_floor)
    }

    /// Cash needed to sit exactly on the reserve floor.
    pub fn reserve_target(&self) -> f64 {
        self.floors.reserve_floor * self.deposits
    }

    // The five actions a bank can take within one day. None of them touches
    // equity at a constant price.

    pub fn grant_interbank_loan(&mut self, amount: f64) {
        self.cash -= amount;
        self.interbank_assets += amount;
    }

    pub fn receive_interbank_loan(&mut self, amount: f64) {
        self.cash += amount;
        self.interbank_liabilities += amount;
    }

    pub fn buy_securities(&mut self, units: f64, price: f64) {
        self.securities += units;
        self.cash -= units * price;
    }

    pub fn sell_securities(&mut self, units: f64, price: f64) {
        self.securities -= units;
        self.cash += units * price;
    }

    /// Redeems own bonds counted in deposits, paying out of cash.
    pub fn repurchase_deposits(&mut self, amount: f64) {
        self.cash -= amount;
        self.deposits -= amount;
    }
}

pub fn total_assets(bank: &Bank, price: f64) -> f64 {
    bank.loans + bank.cash + price * bank.securities + bank.interbank_assets
}

/// Total assets less deposits and interbank liabilities. May be negative.
pub fn equity(bank: &Bank, price: f64) -> f64 {
    total_assets(bank, price) - (bank.deposits + bank.interbank_liabilities)
}

pub fn risk_weighted_assets(bank: &Bank) -> f64 {
    LOAN_RISK_WEIGHT * bank.loans + INTERBANK_RISK_WEIGHT * bank.interbank_assets
}

pub fn compute_ratios(bank: &Bank, price: f64) -> RatioSet {
    let equity = equity(bank, price);
    RatioSet {
        reserve: Ratio::of(bank.cash, bank.deposits),
        liquidity: Ratio::of(bank.cash + price * bank.securities, bank.deposits),
        leverage: Ratio::of(equity, total_assets(bank, price)),
        car: Ratio::of(equity, risk_weighted_assets(bank)),
        large_exposure: Ratio::of(bank.interbank_assets, equity),
    }
}

/// Takes the bank's day-0 ratios as its regulatory floors.
pub fn calibrate_floors(bank: &Bank, price0: f64) -> Result<RatioFloors, CalibrationError> {
    let id = bank.id;
    if !(price0 > 0.0) {
        return Err(CalibrationError::NonPositivePrice(price0));
    }
    if !(bank.deposits > 0.0) {
        return Err(CalibrationError::NonPositiveDeposits(id));
    }
    if bank.interbank_assets != 0.0 || bank.interbank_liabilities != 0.0 {
        return Err(CalibrationError::OpenInterbankPositions(id));
    }
    let equity = equity(bank, price0);
    if !(equity > 0.0) {
        return Err(CalibrationError::NonPositiveEquity { id, equity });
    }
    if !(bank.loans > 0.0) {
        return Err(CalibrationError::ZeroRiskWeightedAssets(id));
    }

    let ratios = compute_ratios(bank, price0);
    let floor = |which: &'static str, ratio: Ratio| -> Result<f64, CalibrationError> {
        match ratio {
            Ratio::Value(v) if v > 0.0 && v < 1.0 => Ok(v),
            Ratio::Value(value) => Err(CalibrationError::FloorOutOfRange { id, which, value }),
            Ratio::Undefined => Err(CalibrationError::FloorOutOfRange {
                id,
                which,
                value: f64::NAN,
            }),
        }
    };
    Ok(RatioFloors {
        reserve_floor: floor("reserve", ratios.reserve)?,
        liquidity_floor: floor("liquidity", ratios.liquidity)?,
        leverage_floor: floor("leverage", ratios.leverage)?,
        // Capital adequacy may legitimately exceed 1, only positivity matters.
        car_floor: match ratios.car {
            Ratio::Value(v) if v > 0.0 => v,
            other => {
                return Err(CalibrationError::FloorOutOfRange {
                    id,
                    which: "capital adequacy",
                    value: other.value().unwrap_or(f64::NAN),
                })
            }
        },
        large_exposure_cap: LARGE_EXPOSURE_CAP,
    })
}
