//! Bond orders and price-impact clearing.

use crate::balance::Bank;

/// Units a bank wants to trade to bring cash back to its reserve target.
/// Positive buys with surplus cash, negative sells; a bank cannot sell more
/// than it holds.
pub fn compute_securities_demand(bank: &Bank, price: f64) -> f64 {
    ((bank.cash - bank.reserve_target()) / price).max(-bank.securities)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClearingReport {
    /// Net units demanded by all banks.
    pub excess_demand: f64,
    pub old_price: f64,
    pub new_price: f64,
    /// Units executed per bank, indexed like the bank slice.
    pub executed: Vec<f64>,
}

/// The price move would take the bond price to zero or below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceCollapse {
    pub excess_demand: f64,
    pub factor: f64,
}

/// Moves the price by `old * (1 + eta * ED)` and fills every order in full
/// at the new price.
pub fn clear_securities_market(
    banks: &mut [Bank],
    demands: &[f64],
    price: f64,
    eta: f64,
) -> Result<ClearingReport, PriceCollapse> {
    debug_assert_eq!(banks.len(), demands.len());
    let excess_demand: f64 = demands.iter().sum();
    let factor = 1.0 + eta * excess_demand;
    if !(factor > 0.0) {
        return Err(PriceCollapse {
            excess_demand,
            factor,
        });
    }
    let new_price = price * factor;
    for (bank, &units) in banks.iter_mut().zip(demands) {
        if units != 0.0 {
            bank.buy_securities(units, new_price);
        }
    }
    Ok(ClearingReport {
        excess_demand,
        old_price: price,
        new_price,
        executed: demands.to_vec(),
    })
}
