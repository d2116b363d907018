//! Daily overnight interbank market simulator.
//!
//! Banks hold loans, cash, bonds and overnight interbank claims against
//! deposits and interbank debt. Every day cash is hit by a Gaussian shock,
//! banks with surplus cash lend to banks short of their reserve or
//! liquidity floor, and bond trades move the price in proportion to excess
//! demand. A bank whose cash goes negative defaults. Losses spread through
//! written-off loans, the bond price and a collapse of lending once trust
//! is broken.
//!
//! [`engine::run_realization`] runs one path, [`harness::run_sweep`] an
//! ensemble over a sigma grid, and [`analytics`] holds the closed forms for
//! the regimes where banks stay independent.

pub mod analytics;
pub mod balance;
pub mod config;
pub mod data;
pub mod engine;
pub mod harness;
pub mod stochastics;

pub use balance::{Bank, BankId};
pub use config::{RatioToggles, SimConfig};
pub use engine::{run_realization, run_simulation, SimError, SimulationResult};
pub use harness::{run_sweep, Execution};
