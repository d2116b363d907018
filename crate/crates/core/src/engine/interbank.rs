//! Overnight loan book and proportional matching of lenders to borrowers.

use crate::balance::Bank;
use crate::engine::funding::CashPlan;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loan {
    /// Index of the lending bank in the system's bank slice.
    pub creditor: usize,
    /// Index of the borrowing bank.
    pub debtor: usize,
    pub amount: f64,
}

/// One day's overnight loans, at most one per ordered (creditor, debtor)
/// pair, every amount strictly positive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoanBook {
    loans: Vec<Loan>,
}

impl LoanBook {
    pub fn new() -> LoanBook {
        LoanBook::default()
    }

    pub fn loans(&self) -> &[Loan] {
        &self.loans
    }

    pub fn is_empty(&self) -> bool {
        self.loans.is_empty()
    }

    pub fn len(&self) -> usize {
        self.loans.len()
    }

    pub fn total(&self) -> f64 {
        self.loans.iter().map(|l| l.amount).sum()
    }

    pub fn clear(&mut self) {
        self.loans.clear();
    }

    /// Amount lent by `creditor` across the book.
    pub fn row_sum(&self, creditor: usize) -> f64 {
        self.loans
            .iter()
            .filter(|l| l.creditor == creditor)
            .map(|l| l.amount)
            .sum()
    }

    /// Amount borrowed by `debtor` across the book.
    pub fn column_sum(&self, debtor: usize) -> f64 {
        self.loans
            .iter()
            .filter(|l| l.debtor == debtor)
            .map(|l| l.amount)
            .sum()
    }

    fn push(&mut self, loan: Loan) {
        debug_assert!(loan.amount > 0.0);
        self.loans.push(loan);
    }
}

/// Every lender lends to every borrower. With `S` the total offered and `D`
/// the total sought, `min(S, D)` is lent and lender `i` pays borrower `j`
/// `min(S, D) * (s_i / S) * (d_j / D)`.
pub fn match_interbank(plan: &CashPlan) -> LoanBook {
    let mut book = LoanBook::new();
    match_into(plan, &mut book);
    book
}

/// As [`match_interbank`], reusing `book`'s allocation.
pub fn match_into(plan: &CashPlan, book: &mut LoanBook) {
    book.clear();
    let total_supply = plan.total_supply();
    let total_demand = plan.total_demand();
    if !(total_supply > 0.0 && total_demand > 0.0) {
        return;
    }
    let total = total_supply.min(total_demand);
    for creditor in 0..plan.len() {
        let supply = plan.supply(creditor);
        if supply <= 0.0 {
            continue;
        }
        let lender_share = total * (supply / total_supply);
        for debtor in 0..plan.len() {
            let demand = plan.demand(debtor);
            if demand <= 0.0 {
                continue;
            }
            let amount = lender_share * (demand / total_demand);
            if amount > 0.0 {
                book.push(Loan {
                    creditor,
                    debtor,
                    amount,
                });
            }
        }
    }
}

/// Moves the cash of every loan and books the interbank positions.
pub fn settle_loan_book(banks: &mut [Bank], book: &LoanBook) {
    for loan in book.loans() {
        banks[loan.creditor].grant_interbank_loan(loan.amount);
        banks[loan.debtor].receive_interbank_loan(loan.amount);
    }
}
