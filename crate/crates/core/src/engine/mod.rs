//! The daily market cycle.
//!
//! Each simulated day runs, in order:
//!
//! 1. repayment of yesterday's overnight loans (not on day 1); loans to
//!    defaulted debtors are written off in full,
//! 2. cash shocks, reverting yesterday's shock first,
//! 3. leverage-driven bond repurchase (leverage ratio switched on only),
//! 4. the interbank cash plan,
//! 5. proportional interbank matching (interbank market switched on only),
//! 6. bond orders towards the reserve target,
//! 7. price-impact clearing (securities market switched on only),
//! 8. every live bank with negative cash defaults; the first default breaks
//!    trust for the rest of the run.

pub mod funding;
pub mod interbank;
pub mod securities;

use std::collections::HashSet;

use thiserror::Error;

use crate::balance::{Bank, BankId};
use crate::config::{SimConfig, MAX_RECOMMENDED_DAYS};
use crate::stochastics::{apply_fluctuations, RngStream, ShockLedger};

pub use funding::{compute_cash_plan, leverage_repurchase, CashPlan};
pub use interbank::{match_interbank, settle_loan_book, Loan, LoanBook};
pub use securities::{clear_securities_market, compute_securities_demand, ClearingReport};

/// Bond price every run starts from.
pub const INITIAL_PRICE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("no banks to simulate")]
    NoBanks,
    #[error("duplicate bank id {0}")]
    DuplicateId(BankId),
    #[error("day {day}: bond price collapsed (excess demand {excess_demand}, price factor {factor})")]
    PriceCollapse {
        day: u32,
        excess_demand: f64,
        factor: f64,
    },
    #[error("horizon of {0} days already simulated")]
    HorizonExceeded(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// Sorted by ascending id; loan-book entries index into this slice.
    pub banks: Vec<Bank>,
    pub loan_book: LoanBook,
    pub price: f64,
    pub trust_broken: bool,
    /// Last simulated day; 0 before the first.
    pub day: u32,
}

impl SystemState {
    pub fn new(mut banks: Vec<Bank>) -> Result<SystemState, SimError> {
        if banks.is_empty() {
            return Err(SimError::NoBanks);
        }
        banks.sort_by_key(|b| b.id);
        if let Some(w) = banks.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(SimError::DuplicateId(w[0].id));
        }
        Ok(SystemState {
            banks,
            loan_book: LoanBook::new(),
            price: INITIAL_PRICE,
            trust_broken: false,
            day: 0,
        })
    }

    pub fn total_cash(&self) -> f64 {
        self.banks.iter().map(|b| b.cash).sum()
    }

    pub fn defaults(&self) -> usize {
        self.banks.iter().filter(|b| !b.is_alive()).count()
    }
}

/// Settles yesterday's loans and clears the book. Returns the amount written
/// off on loans to defaulted debtors.
pub fn repay_overnight_loans(state: &mut SystemState) -> f64 {
    let mut written_off = 0.0;
    for loan in state.loan_book.loans() {
        if state.banks[loan.debtor].is_alive() {
            state.banks[loan.debtor].cash -= loan.amount;
            state.banks[loan.creditor].cash += loan.amount;
        } else {
            written_off += loan.amount;
        }
    }
    state.loan_book.clear();
    for bank in &mut state.banks {
        bank.interbank_assets = 0.0;
        bank.interbank_liabilities = 0.0;
    }
    written_off
}

/// Marks every live bank with negative cash as defaulted on `state.day`.
pub fn mark_defaults(state: &mut SystemState) -> Vec<BankId> {
    let day = state.day;
    let mut newly = Vec::new();
    for bank in state.banks.iter_mut().filter(|b| b.is_alive()) {
        if bank.cash < 0.0 {
            bank.defaulted = Some(day);
            newly.push(bank.id);
        }
    }
    if !newly.is_empty() {
        state.trust_broken = true;
    }
    newly
}

/// Diagnostics of one simulated day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayReport {
    pub day: u32,
    pub new_defaults: Vec<BankId>,
    pub defaults_cum: usize,
    /// Total lent on the interbank market today.
    pub loan_volume: f64,
    /// Bond price after clearing.
    pub bond_price: f64,
    /// Cash summed over all banks, defaulted ones included.
    pub total_cash: f64,
    pub trust_broken: bool,
    pub written_off: f64,
    pub repurchased: f64,
    /// Net bond units demanded by banks (0 with the market closed).
    pub excess_demand: f64,
}

/// Advances the system by one day.
pub fn simulate_day(
    state: &mut SystemState,
    ledger: &mut ShockLedger,
    rng: &mut RngStream,
    config: &SimConfig,
) -> Result<DayReport, SimError> {
    state.day += 1;
    let day = state.day;

    let written_off = if day > 1 {
        repay_overnight_loans(state)
    } else {
        0.0
    };

    apply_fluctuations(&mut state.banks, ledger, rng, config.sigma);

    let mut repurchased = 0.0;
    if config.ratios.leverage {
        let price = state.price;
        for bank in state.banks.iter_mut().filter(|b| b.is_alive()) {
            if bank.meets_reserve_floor() && bank.meets_liquidity_floor(price) {
                let amount = leverage_repurchase(bank, price);
                if amount > 0.0 {
                    bank.repurchase_deposits(amount);
                    repurchased += amount;
                }
            }
        }
    }

    if config.interbank {
        let plan = compute_cash_plan(&state.banks, state.price, config, state.trust_broken);
        interbank::match_into(&plan, &mut state.loan_book);
        settle_loan_book(&mut state.banks, &state.loan_book);
    }
    let loan_volume = state.loan_book.total();

    let mut excess_demand = 0.0;
    if config.securities_market {
        let price = state.price;
        let demands: Vec<f64> = state
            .banks
            .iter()
            .map(|b| {
                if b.is_alive() {
                    compute_securities_demand(b, price)
                } else {
                    0.0
                }
            })
            .collect();
        let report = clear_securities_market(&mut state.banks, &demands, price, config.eta)
            .map_err(|c| SimError::PriceCollapse {
                day,
                excess_demand: c.excess_demand,
                factor: c.factor,
            })?;
        state.price = report.new_price;
        excess_demand = report.excess_demand;
    }

    let new_defaults = mark_defaults(state);
    Ok(DayReport {
        day,
        new_defaults,
        defaults_cum: state.defaults(),
        loan_volume,
        bond_price: state.price,
        total_cash: state.total_cash(),
        trust_broken: state.trust_broken,
        written_off,
        repurchased,
        excess_demand,
    })
}

/// A single run in progress: the system, its shock ledger and its stream.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    config: &'a SimConfig,
    state: SystemState,
    ledger: ShockLedger,
    rng: RngStream,
}

impl<'a> Simulation<'a> {
    pub fn new(
        banks: Vec<Bank>,
        config: &'a SimConfig,
        rng: RngStream,
    ) -> Result<Simulation<'a>, SimError> {
        let state = SystemState::new(banks)?;
        let ledger = ShockLedger::new(state.banks.len());
        Ok(Simulation {
            config,
            state,
            ledger,
            rng,
        })
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SystemState {
        &mut self.state
    }

    pub fn ledger(&self) -> &ShockLedger {
        &self.ledger
    }

    pub fn step(&mut self) -> Result<DayReport, SimError> {
        if self.state.day >= self.config.days {
            return Err(SimError::HorizonExceeded(self.config.days));
        }
        simulate_day(&mut self.state, &mut self.ledger, &mut self.rng, self.config)
    }

    pub fn finish(self, reports: Vec<DayReport>) -> SimulationResult {
        SimulationResult {
            n_banks: self.state.banks.len(),
            horizon: self.config.days,
            reports,
            banks: self.state.banks,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub n_banks: usize,
    pub horizon: u32,
    pub reports: Vec<DayReport>,
    /// Final bank states, ascending id.
    pub banks: Vec<Bank>,
}

impl SimulationResult {
    pub fn defaulted(&self) -> usize {
        self.banks.iter().filter(|b| !b.is_alive()).count()
    }

    /// Number of defaults on each day, index 0 being day 1.
    pub fn default_day_histogram(&self) -> Vec<u32> {
        let mut histogram = vec![0; self.horizon as usize];
        for day in self.banks.iter().filter_map(|b| b.defaulted) {
            histogram[day as usize - 1] += 1;
        }
        histogram
    }

    pub fn defaulted_ids(&self) -> HashSet<BankId> {
        self.banks
            .iter()
            .filter(|b| !b.is_alive())
            .map(|b| b.id)
            .collect()
    }
}

/// Runs `config.days` days on realization stream `index` of `config.seed`.
pub fn run_realization(
    banks: Vec<Bank>,
    config: &SimConfig,
    index: u64,
) -> Result<SimulationResult, SimError> {
    if config.days > MAX_RECOMMENDED_DAYS {
        log::warn!(
            "horizon of {} days exceeds the {}-day range the daily model is meant for",
            config.days,
            MAX_RECOMMENDED_DAYS
        );
    }
    let mut sim = Simulation::new(banks, config, RngStream::for_realization(config.seed, index))?;
    let mut reports = Vec::with_capacity(config.days as usize);
    for _ in 0..config.days {
        reports.push(sim.step()?);
    }
    Ok(sim.finish(reports))
}

/// Runs realization 0 of `config.seed`.
pub fn run_simulation(banks: Vec<Bank>, config: &SimConfig) -> Result<SimulationResult, SimError> {
    run_realization(banks, config, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::BankId;

    fn calibrated(id: u32, loans: f64, cash: f64, securities: f64, deposits: f64) -> Bank {
        Bank::calibrated(BankId(id), loans, cash, securities, deposits, 1.0).unwrap()
    }

    fn three_banks() -> Vec<Bank> {
        vec![
            calibrated(0, 600.0, 35.0, 300.0, 850.0),
            calibrated(1, 300.0, 20.0, 100.0, 380.0),
            calibrated(2, 100.0, 8.0, 10.0, 105.0),
        ]
    }

    #[test]
    fn state_sorts_and_rejects_duplicates() {
        let mut banks = three_banks();
        banks.reverse();
        let state = SystemState::new(banks).unwrap();
        let ids: Vec<u32> = state.banks.iter().map(|b| b.id.0).collect();
        assert_eq!(ids, [0, 1, 2]);
        let mut dup = three_banks();
        dup[2].id = BankId(1);
        assert_eq!(SystemState::new(dup), Err(SimError::DuplicateId(BankId(1))));
        assert_eq!(SystemState::new(vec![]), Err(SimError::NoBanks));
    }

    #[test]
    fn repay_empty_book() {
        let mut state = SystemState::new(three_banks()).unwrap();
        let cash = state.total_cash();
        assert_eq!(repay_overnight_loans(&mut state), 0.0);
        assert_eq!(state.total_cash(), cash);
    }

    #[test]
    fn repay_live_debtor_conserves_cash() {
        let mut state = SystemState::new(three_banks()).unwrap();
        let book = match_interbank(&CashPlan::from_positions(vec![-10.0, 10.0, 0.0]));
        settle_loan_book(&mut state.banks, &book);
        state.loan_book = book;
        let (a, b) = (state.banks[0].cash, state.banks[1].cash);
        let total = state.total_cash();
        assert_eq!(repay_overnight_loans(&mut state), 0.0);
        assert_eq!(state.banks[0].cash, a + 10.0);
        assert_eq!(state.banks[1].cash, b - 10.0);
        assert_eq!(state.total_cash(), total);
        assert!(state.loan_book.is_empty());
        assert_eq!(state.banks[0].interbank_assets, 0.0);
        assert_eq!(state.banks[1].interbank_liabilities, 0.0);
    }

    #[test]
    fn repay_defaulted_debtor_writes_off() {
        let mut state = SystemState::new(three_banks()).unwrap();
        let book = match_interbank(&CashPlan::from_positions(vec![-10.0, 10.0, 0.0]));
        settle_loan_book(&mut state.banks, &book);
        state.loan_book = book;
        state.banks[1].defaulted = Some(1);
        let equity_before = state.banks[0].equity(1.0);
        let cash_before = state.banks[0].cash;
        assert_eq!(repay_overnight_loans(&mut state), 10.0);
        assert_eq!(state.banks[0].cash, cash_before);
        assert!((state.banks[0].equity(1.0) - (equity_before - 10.0)).abs() < 1e-12);
    }

    #[test]
    fn default_threshold_is_strict() {
        let mut state = SystemState::new(three_banks()).unwrap();
        state.day = 4;
        assert!(mark_defaults(&mut state).is_empty());
        assert!(!state.trust_broken);
        state.banks[0].cash = 0.0;
        state.banks[2].cash = -0.01;
        assert_eq!(mark_defaults(&mut state), vec![BankId(2)]);
        assert_eq!(state.banks[2].defaulted, Some(4));
        assert!(state.banks[0].is_alive());
        assert!(state.trust_broken);
        // trust stays broken and defaults stay marked
        state.banks[2].cash = 100.0;
        assert!(mark_defaults(&mut state).is_empty());
        assert!(state.trust_broken);
        assert_eq!(state.banks[2].defaulted, Some(4));
    }

    #[test]
    fn zero_sigma_is_a_fixed_point() {
        let cfg = SimConfig::default().with_sigma(0.0);
        let result = run_simulation(three_banks(), &cfg).unwrap();
        assert_eq!(result.defaulted(), 0);
        for r in &result.reports {
            assert_eq!(r.loan_volume, 0.0);
            assert_eq!(r.bond_price, 1.0);
        }
    }

    #[test]
    fn horizon_is_enforced() {
        let cfg = SimConfig {
            days: 2,
            ..SimConfig::default()
        };
        let mut sim = Simulation::new(three_banks(), &cfg, RngStream::new(1)).unwrap();
        sim.step().unwrap();
        sim.step().unwrap();
        assert_eq!(sim.step(), Err(SimError::HorizonExceeded(2)));
    }

    #[test]
    fn histogram_counts_defaults_by_day() {
        let cfg = SimConfig::no_markets().with_sigma(8.0);
        let result = run_simulation(three_banks(), &cfg).unwrap();
        let hist = result.default_day_histogram();
        assert_eq!(hist.len(), 60);
        assert_eq!(hist.iter().sum::<u32>() as usize, result.defaulted());
    }

    #[test]
    fn repeated_runs_are_identical() {
        let cfg = SimConfig::default().with_sigma(3.0);
        let a = run_simulation(three_banks(), &cfg).unwrap();
        let b = run_simulation(three_banks(), &cfg).unwrap();
        assert_eq!(a, b);
    }
}
