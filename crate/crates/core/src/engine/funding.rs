//! Morning funding decisions: leverage-driven bond repurchase and the
//! per-bank interbank cash plan.

use crate::balance::{Bank, INTERBANK_RISK_WEIGHT, LARGE_EXPOSURE_CAP, LOAN_RISK_WEIGHT};
use crate::config::SimConfig;

/// Amount of own bonds (counted in deposits) a surplus bank redeems to lift
/// its leverage ratio back to the floor, without breaching its reserve or
/// liquidity floor. Returns 0 when leverage is already at or above the floor.
///
/// Callers only invoke this for banks that meet both reserve and liquidity
/// floors; the amount is not applied here.
pub fn leverage_repurchase(bank: &Bank, price: f64) -> f64 {
    let floors = &bank.floors;
    let total_assets = bank.total_assets(price);
    let equity = bank.equity(price);
    if total_assets > 0.0 && equity / total_assets >= floors.leverage_floor {
        return 0.0;
    }
    let lack = total_assets - equity / floors.leverage_floor;
    let max_by_reserve =
        ((bank.cash - floors.reserve_floor * bank.deposits) / (1.0 - floors.reserve_floor)).max(0.0);
    let max_by_liquidity = ((bank.cash + price * bank.securities
        - floors.liquidity_floor * bank.deposits)
        / (1.0 - floors.liquidity_floor))
        .max(0.0);
    lack.min(max_by_reserve)
        .min(max_by_liquidity)
        .min(bank.deposits)
        .max(0.0)
}

/// Signed cash position of every bank for the interbank market: negative
/// entries are amounts offered, positive entries are amounts sought.
/// Defaulted banks carry 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CashPlan {
    positions: Vec<f64>,
}

impl CashPlan {
    pub fn from_positions(positions: Vec<f64>) -> CashPlan {
        CashPlan { positions }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn supply(&self, i: usize) -> f64 {
        (-self.positions[i]).max(0.0)
    }

    pub fn demand(&self, i: usize) -> f64 {
        self.positions[i].max(0.0)
    }

    pub fn total_supply(&self) -> f64 {
        (0..self.len()).map(|i| self.supply(i)).sum()
    }

    pub fn total_demand(&self) -> f64 {
        (0..self.len()).map(|i| self.demand(i)).sum()
    }
}

/// Lending capacity of a bank that meets both reserve and liquidity floors.
pub fn surplus_supply(bank: &Bank, price: f64, config: &SimConfig, trust_broken: bool) -> f64 {
    let floors = &bank.floors;
    let excess = bank.cash - floors.reserve_floor * bank.deposits;
    let mut supply = if trust_broken && config.trust_effect {
        config.trust_fraction * excess
    } else {
        excess
    };
    // The liquidity ratio is always enforced.
    let liquidity_cap =
        (bank.cash + price * bank.securities - floors.liquidity_floor * bank.deposits).max(0.0);
    supply = supply.min(liquidity_cap);

    let equity = bank.equity(price);
    if config.ratios.large_exposure {
        let cap = (LARGE_EXPOSURE_CAP * equity - bank.interbank_assets).max(0.0);
        supply = supply.min(cap);
    }
    if config.ratios.car {
        let cap = ((equity / floors.car_floor - LOAN_RISK_WEIGHT * bank.loans)
            / INTERBANK_RISK_WEIGHT)
            .max(0.0);
        supply = supply.min(cap);
    }
    supply.max(0.0)
}

/// Shortfall against the reserve and liquidity floors. Other ratios are
/// ignored by a bank in deficit.
pub fn deficit_demand(bank: &Bank, price: f64) -> f64 {
    let floors = &bank.floors;
    let reserve_gap = floors.reserve_floor * bank.deposits - bank.cash;
    let liquidity_gap =
        floors.liquidity_floor * bank.deposits - bank.cash - price * bank.securities;
    reserve_gap.max(liquidity_gap).max(0.0)
}

pub fn compute_cash_plan(
    banks: &[Bank],
    price: f64,
    config: &SimConfig,
    trust_broken: bool,
) -> CashPlan {
    let positions = banks
        .iter()
        .map(|bank| {
            if !bank.is_alive() {
                0.0
            } else if bank.meets_reserve_floor() && bank.meets_liquidity_floor(price) {
                -surplus_supply(bank, price, config, trust_broken)
            } else {
                deficit_demand(bank, price)
            }
        })
        .collect();
    CashPlan { positions }
}
