//! Strategies and property checks shared by the property suite and the
//! acceptance binary.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use interbank::balance::{calibrate_floors, compute_ratios, Bank, BankId, Ratio, RatioSet};
use interbank::config::{RatioToggles, SimConfig};
use interbank::engine::{
    clear_securities_market, compute_cash_plan, compute_securities_demand, leverage_repurchase,
    match_interbank, repay_overnight_loans, settle_loan_book, simulate_day, run_realization,
    CashPlan, SystemState,
};
use interbank::stochastics::{RngStream, ShockLedger};

pub const CASES: u32 = 1000;

/// Relative comparison for sums of a few dozen terms.
pub fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.abs().max(1.0)
}

// ---------------------------------------------------------------- actions

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Grant(f64),
    Receive(f64),
    Buy(f64),
    Sell(f64),
    Repurchase(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Move {
    Down,
    Zero,
    Up,
}

/// Expected move of (reserve, liquidity, leverage, car, large exposure).
pub fn expected_moves(action: Action) -> [Move; 5] {
    use Move::*;
    match action {
        Action::Grant(_) => [Down, Down, Zero, Down, Up],
        Action::Receive(_) => [Up, Up, Down, Zero, Zero],
        Action::Buy(_) => [Down, Zero, Zero, Zero, Zero],
        Action::Sell(_) => [Up, Zero, Zero, Zero, Zero],
        Action::Repurchase(_) => [Down, Down, Up, Zero, Zero],
    }
}

pub fn apply(bank: &mut Bank, action: Action, price: f64) {
    match action {
        Action::Grant(a) => bank.grant_interbank_loan(a),
        Action::Receive(a) => bank.receive_interbank_loan(a),
        Action::Buy(u) => bank.buy_securities(u, price),
        Action::Sell(u) => bank.sell_securities(u, price),
        Action::Repurchase(a) => bank.repurchase_deposits(a),
    }
}

/// A live bank with integer balances, a dyadic price and an integer action
/// size, so every sum in the ratios is exact and "unchanged" can be checked
/// bit for bit. Cash and deposits are kept large enough that no ratio
/// touches 1 and no balance goes negative.
pub fn action_case() -> impl Strategy<Value = (Bank, f64, Action)> {
    (
        1u32..100_000,
        1u32..20_000,
        0u32..50_000,
        0u32..10_000,
        0u32..10_000,
        1u32..50_000,
        16u32..=128,
        1u32..1_000,
        0usize..5,
    )
        .prop_map(|(loans, cash, sec, ia, il, equity, price64, amount, kind)| {
            let price = f64::from(price64) / 64.0;
            let loans = f64::from(loans);
            // cash always covers the action and deposits exceed all liquid assets
            let cash = f64::from(cash) + 2_000.0;
            let securities = f64::from(sec) + 1_000.0;
            let ia = f64::from(ia);
            let il = f64::from(il);
            let total = loans + cash + price * securities + ia;
            let equity = f64::from(equity).min(total - il - (cash + 2.0 * securities + 2_000.0));
            let deposits = total - il - equity;
            let mut bank = Bank::new(BankId(0), loans, cash, securities, deposits);
            bank.interbank_assets = ia;
            bank.interbank_liabilities = il;
            let amount = f64::from(amount);
            let action = match kind {
                0 => Action::Grant(amount),
                1 => Action::Receive(amount),
                2 => Action::Buy(amount),
                3 => Action::Sell(amount),
                _ => Action::Repurchase(amount),
            };
            (bank, price, action)
        })
        .prop_filter("positive equity and room for the action", |(bank, price, action)| {
            let e = bank.equity(*price);
            let enough = match action {
                Action::Sell(u) => bank.securities >= *u,
                _ => true,
            };
            e > 0.0 && enough && bank.deposits > bank.cash + price * bank.securities + 1_000.0
        })
}

fn ratio_values(r: &RatioSet) -> [Ratio; 5] {
    [r.reserve, r.liquidity, r.leverage, r.car, r.large_exposure]
}

pub fn check_action_matrix((bank, price, action): (Bank, f64, Action)) -> Result<(), TestCaseError> {
    let before = compute_ratios(&bank, price);
    let equity_before = bank.equity(price);
    let mut after_bank = bank.clone();
    apply(&mut after_bank, action, price);
    let after = compute_ratios(&after_bank, price);
    prop_assert_eq!(after_bank.equity(price).to_bits(), equity_before.to_bits());
    let names = ["reserve", "liquidity", "leverage", "car", "large_exposure"];
    for (k, ((b, a), m)) in ratio_values(&before)
        .iter()
        .zip(ratio_values(&after).iter())
        .zip(expected_moves(action))
        .enumerate()
    {
        let (Some(b), Some(a)) = (b.value(), a.value()) else {
            return Err(TestCaseError::fail(format!("{} undefined", names[k])));
        };
        match m {
            Move::Down => prop_assert!(a < b, "{:?}: {} {} -> {}", action, names[k], b, a),
            Move::Up => prop_assert!(a > b, "{:?}: {} {} -> {}", action, names[k], b, a),
            Move::Zero => prop_assert_eq!(a.to_bits(), b.to_bits(), "{:?}: {}", action, names[k]),
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- systems

/// A day-0 system of 2 to 6 calibrated banks.
pub fn day0_system() -> impl Strategy<Value = Vec<Bank>> {
    prop::collection::vec(
        (300.0..1000.0f64, 1.0..60.0f64, 0.0..150.0f64, 0.03..0.3f64),
        2..=6,
    )
    .prop_map(|sheets| {
        sheets
            .into_iter()
            .enumerate()
            .map(|(i, (loans, cash, securities, leverage))| {
                let total = loans + cash + securities;
                let deposits = total * (1.0 - leverage);
                let mut bank = Bank::new(BankId(i as u32), loans, cash, securities, deposits);
                bank.floors = calibrate_floors(&bank, 1.0).expect("well-formed bank");
                bank
            })
            .collect()
    })
}

/// A mid-run state: day-0 banks with cash moved by up to three shock
/// multiples, a price near 1 and the trust flag.
#[derive(Debug, Clone)]
pub struct Perturbed {
    pub banks: Vec<Bank>,
    pub price: f64,
    pub trust_broken: bool,
    pub config: SimConfig,
}

pub fn ratio_toggles() -> impl Strategy<Value = RatioToggles> {
    (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(leverage, car, large_exposure)| RatioToggles {
        leverage,
        car,
        large_exposure,
    })
}

pub fn perturbed_system() -> impl Strategy<Value = Perturbed> {
    (
        day0_system(),
        prop::collection::vec(-3.0..3.0f64, 6),
        0.0..3.0f64,
        0.8..1.2f64,
        any::<bool>(),
        any::<bool>(),
        ratio_toggles(),
    )
        .prop_map(|(mut banks, z, sigma, price, trust_broken, trust_effect, ratios)| {
            for (bank, z) in banks.iter_mut().zip(z) {
                bank.cash += bank.initial_cash * sigma * z;
            }
            let config = SimConfig {
                trust_effect,
                ratios,
                ..SimConfig::default()
            };
            Perturbed {
                banks,
                price,
                trust_broken,
                config,
            }
        })
}

fn total_cash(banks: &[Bank]) -> f64 {
    banks.iter().map(|b| b.cash).sum()
}

fn cash_scale(banks: &[Bank]) -> f64 {
    banks.iter().map(|b| b.cash.abs() + b.deposits).sum()
}

/// Matching, settlement and repayment move cash between banks only; loans
/// to defaulted debtors are written off in full.
pub fn check_cash_conservation(p: Perturbed) -> Result<(), TestCaseError> {
    let mut state = SystemState::new(p.banks).unwrap();
    state.price = p.price;
    let scale = cash_scale(&state.banks);
    let before = total_cash(&state.banks);
    let plan = compute_cash_plan(&state.banks, state.price, &p.config, p.trust_broken);
    let book = match_interbank(&plan);
    settle_loan_book(&mut state.banks, &book);
    prop_assert!(close(total_cash(&state.banks), before, scale));

    // default the first borrower, if any, before repayment
    let victim = book.loans().first().map(|l| l.debtor);
    if let Some(v) = victim {
        state.banks[v].defaulted = Some(1);
    }
    let owed_by_victim: f64 = book
        .loans()
        .iter()
        .filter(|l| Some(l.debtor) == victim)
        .map(|l| l.amount)
        .sum();
    state.loan_book = book;
    let mid = total_cash(&state.banks);
    let written_off = repay_overnight_loans(&mut state);
    prop_assert!(close(written_off, owed_by_victim, scale));
    prop_assert!(close(total_cash(&state.banks), mid, scale));
    for b in &state.banks {
        prop_assert_eq!(b.interbank_assets, 0.0);
        prop_assert_eq!(b.interbank_liabilities, 0.0);
    }
    Ok(())
}

/// With the bond market and leverage repurchases off, a whole day changes
/// system cash by exactly the net shocks of banks alive that morning.
pub fn check_day_cash_budget((banks, sigma, seed, days): (Vec<Bank>, f64, u64, u32)) -> Result<(), TestCaseError> {
    let config = SimConfig {
        sigma,
        securities_market: false,
        days,
        seed,
        ..SimConfig::default()
    };
    let mut state = SystemState::new(banks).unwrap();
    let mut ledger = ShockLedger::new(state.banks.len());
    let mut rng = RngStream::new(seed);
    for _ in 0..days {
        let alive: Vec<bool> = state.banks.iter().map(|b| b.is_alive()).collect();
        let shocks_before = ledger.current().to_vec();
        let before = total_cash(&state.banks);
        simulate_day(&mut state, &mut ledger, &mut rng, &config).unwrap();
        let net: f64 = (0..alive.len())
            .filter(|&i| alive[i])
            .map(|i| ledger.current()[i] - shocks_before[i])
            .sum();
        prop_assert!(close(total_cash(&state.banks) - before, net, cash_scale(&state.banks)));
    }
    Ok(())
}

/// Row and column sums of the loan book reproduce the proportional rule,
/// and settled positions equal them.
pub fn check_marginals(p: Perturbed) -> Result<(), TestCaseError> {
    let mut banks = p.banks;
    let plan = compute_cash_plan(&banks, p.price, &p.config, p.trust_broken);
    let book = match_interbank(&plan);
    let (s, d) = (plan.total_supply(), plan.total_demand());
    let scale = cash_scale(&banks);
    let lent = if s > 0.0 && d > 0.0 { s.min(d) } else { 0.0 };
    prop_assert!(close(book.total(), lent, scale));
    settle_loan_book(&mut banks, &book);
    for i in 0..plan.len() {
        let row = if s > 0.0 { plan.supply(i) * lent / s } else { 0.0 };
        let col = if d > 0.0 { plan.demand(i) * lent / d } else { 0.0 };
        prop_assert!(close(book.row_sum(i), row, scale));
        prop_assert!(close(book.column_sum(i), col, scale));
        prop_assert!(close(banks[i].interbank_assets, book.row_sum(i), scale));
        prop_assert!(close(banks[i].interbank_liabilities, book.column_sum(i), scale));
        prop_assert!(plan.supply(i) == 0.0 || plan.demand(i) == 0.0);
    }
    prop_assert!(book.loans().iter().all(|l| l.amount > 0.0 && l.creditor != l.debtor));
    Ok(())
}

/// At η = 0 the within-day trading steps leave every bank's equity where it
/// was (no write-offs, no shocks).
pub fn check_equity_neutrality(p: Perturbed) -> Result<(), TestCaseError> {
    let mut banks = p.banks;
    let price = p.price;
    let mut config = p.config;
    config.eta = 0.0;
    let equity: Vec<f64> = banks.iter().map(|b| b.equity(price)).collect();
    if config.ratios.leverage {
        for b in banks.iter_mut() {
            if b.meets_reserve_floor() && b.meets_liquidity_floor(price) {
                let amount = leverage_repurchase(b, price);
                b.repurchase_deposits(amount);
            }
        }
    }
    let plan = compute_cash_plan(&banks, price, &config, p.trust_broken);
    settle_loan_book(&mut banks, &match_interbank(&plan));
    let demands: Vec<f64> = banks.iter().map(|b| compute_securities_demand(b, price)).collect();
    let report = clear_securities_market(&mut banks, &demands, price, 0.0).unwrap();
    prop_assert_eq!(report.new_price, price);
    for (b, e) in banks.iter().zip(equity) {
        prop_assert!(close(b.equity(price), e, b.total_assets(price)), "{} vs {}", b.equity(price), e);
    }
    Ok(())
}

/// Lenders never lend themselves below their reserve or liquidity floor,
/// nor past the optional large-exposure and capital limits.
pub fn check_no_lending_into_breach(p: Perturbed) -> Result<(), TestCaseError> {
    let mut banks = p.banks;
    let price = p.price;
    let plan = compute_cash_plan(&banks, price, &p.config, p.trust_broken);
    settle_loan_book(&mut banks, &match_interbank(&plan));
    for (i, b) in banks.iter().enumerate() {
        if plan.supply(i) == 0.0 {
            continue;
        }
        let tol = 1e-9 * (b.deposits + b.total_assets(price));
        let f = &b.floors;
        prop_assert!(b.cash >= f.reserve_floor * b.deposits - tol);
        prop_assert!(b.cash + price * b.securities >= f.liquidity_floor * b.deposits - tol);
        let e = b.equity(price);
        if p.config.ratios.large_exposure {
            prop_assert!(b.interbank_assets <= f.large_exposure_cap * e + tol);
        }
        if p.config.ratios.car {
            let rwa = 0.9 * b.loans + 0.2 * b.interbank_assets;
            prop_assert!(e >= f.car_floor * rwa - tol);
        }
    }
    Ok(())
}

/// Random configuration for whole runs.
pub fn run_case() -> impl Strategy<Value = (Vec<Bank>, SimConfig)> {
    (
        day0_system(),
        0.0..6.0f64,
        prop_oneof![Just(0.0), Just(1e-6), 1e-5..1e-3f64],
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
        ratio_toggles(),
        any::<u64>(),
    )
        .prop_map(|(banks, sigma, eta, interbank, securities_market, trust_effect, ratios, seed)| {
            let config = SimConfig {
                sigma,
                eta,
                days: 10,
                seed,
                interbank,
                securities_market,
                trust_effect,
                ratios,
                ..SimConfig::default()
            };
            (banks, config)
        })
}

/// Defaults are permanent, trust breaks with the first default and never
/// recovers, and the cumulative count only grows.
pub fn check_default_monotonicity((banks, config): (Vec<Bank>, SimConfig)) -> Result<(), TestCaseError> {
    let mut state = SystemState::new(banks).unwrap();
    let mut ledger = ShockLedger::new(state.banks.len());
    let mut rng = RngStream::new(config.seed);
    let mut defaulted: Vec<Option<u32>> = vec![None; state.banks.len()];
    let mut trust = false;
    let mut count = 0;
    for _ in 0..config.days {
        let report = match simulate_day(&mut state, &mut ledger, &mut rng, &config) {
            Ok(r) => r,
            Err(_) => return Ok(()),
        };
        for (i, b) in state.banks.iter().enumerate() {
            if let Some(day) = defaulted[i] {
                prop_assert_eq!(b.defaulted, Some(day));
            }
            defaulted[i] = b.defaulted;
        }
        prop_assert!(report.defaults_cum >= count);
        prop_assert_eq!(report.defaults_cum, count + report.new_defaults.len());
        count = report.defaults_cum;
        prop_assert!(!trust || report.trust_broken);
        prop_assert_eq!(report.trust_broken, count > 0);
        trust = report.trust_broken;
    }
    Ok(())
}

/// At η = 0 a bank only defaults once its whole bond holding is sold.
pub fn check_deficit_priority((banks, mut config): (Vec<Bank>, SimConfig)) -> Result<(), TestCaseError> {
    config.eta = 0.0;
    config.securities_market = true;
    let result = run_realization(banks, &config, 0).unwrap();
    for b in result.banks.iter().filter(|b| !b.is_alive()) {
        prop_assert_eq!(b.securities, 0.0, "bank {:?} defaulted holding bonds", b.id);
    }
    Ok(())
}

/// Same seed, data and configuration give the same run.
pub fn check_determinism((banks, config): (Vec<Bank>, SimConfig)) -> Result<(), TestCaseError> {
    let a = run_realization(banks.clone(), &config, 3);
    let b = run_realization(banks, &config, 3);
    prop_assert_eq!(a, b);
    Ok(())
}

/// Scaling every money field by k leaves every ratio unchanged.
pub fn check_scale_invariance((p, k): (Perturbed, f64)) -> Result<(), TestCaseError> {
    for b in &p.banks {
        let mut s = b.clone();
        s.loans *= k;
        s.cash *= k;
        s.securities *= k;
        s.deposits *= k;
        s.interbank_assets *= k;
        s.interbank_liabilities *= k;
        let (x, y) = (compute_ratios(b, p.price), compute_ratios(&s, p.price));
        for (u, v) in ratio_values(&x).iter().zip(ratio_values(&y).iter()) {
            match (u.value(), v.value()) {
                (Some(u), Some(v)) => prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0)),
                (None, None) => {}
                _ => return Err(TestCaseError::fail("definedness changed under scaling")),
            }
        }
    }
    Ok(())
}

/// With both markets closed, a live bank's cash at the end of any day is
/// its initial cash plus that day's shock.
pub fn check_shock_reversal((banks, sigma, seed): (Vec<Bank>, f64, u64)) -> Result<(), TestCaseError> {
    let config = SimConfig {
        sigma,
        seed,
        days: 10,
        ..SimConfig::no_markets()
    };
    let mut state = SystemState::new(banks).unwrap();
    let mut ledger = ShockLedger::new(state.banks.len());
    let mut rng = RngStream::new(seed);
    for _ in 0..config.days {
        simulate_day(&mut state, &mut ledger, &mut rng, &config).unwrap();
        for (i, b) in state.banks.iter().enumerate().filter(|(_, b)| b.is_alive()) {
            let want = b.initial_cash + ledger.current()[i];
            prop_assert!(close(b.cash, want, b.initial_cash * (1.0 + sigma * 10.0)));
        }
    }
    Ok(())
}

pub fn day_budget_case() -> impl Strategy<Value = (Vec<Bank>, f64, u64, u32)> {
    (day0_system(), 0.0..4.0f64, any::<u64>(), 1u32..8)
}

pub fn reversal_case() -> impl Strategy<Value = (Vec<Bank>, f64, u64)> {
    (day0_system(), 0.0..4.0f64, any::<u64>())
}

pub fn scale_case() -> impl Strategy<Value = (Perturbed, f64)> {
    (perturbed_system(), prop_oneof![Just(2.0), Just(0.5), 1e-3..1e3f64])
}

/// Plan positions are signed consistently: defaulted banks sit out.
pub fn plan_of(p: &Perturbed) -> CashPlan {
    compute_cash_plan(&p.banks, p.price, &p.config, p.trust_broken)
}
