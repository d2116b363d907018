//! Seeded random streams and the daily cash-shock process.
//!
//! Generator: ChaCha8 (`rand_chacha`), keyed with `seed_from_u64(seed)`.
//! Realization `r` of a seed uses ChaCha stream id `r`, so realizations never
//! share keystream and any one of them can be replayed on its own.
//!
//! Normal draws: Marsaglia's polar method on 53-bit uniforms
//! `(next_u64 >> 11) * 2^-53`, with the second variate of each accepted pair
//! cached for the next call. `ln` comes from `libm` (a pure-Rust port of
//! musl), so the bit pattern of every draw is the same on every platform.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::balance::Bank;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> RngStream {
        RngStream::for_realization(seed, 0)
    }

    /// The independent sub-stream used by realization `index` of `seed`.
    pub fn for_realization(seed: u64, index: u64) -> RngStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        RngStream {
            seed,
            stream: index,
            rng,
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let scale = libm::sqrt(-2.0 * libm::log(s) / s);
                self.spare = Some(v * scale);
                return u * scale;
            }
        }
    }
}

/// One day's shock: `initial_cash * sigma * z`, consuming exactly one normal.
pub fn draw_shock(rng: &mut RngStream, initial_cash: f64, sigma: f64) -> f64 {
    let z = rng.standard_normal();
    initial_cash * sigma * z
}

/// Per-bank shocks of the previous and the current day, indexed like the
/// bank slice they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockLedger {
    previous: Vec<f64>,
    current: Vec<f64>,
}

impl ShockLedger {
    pub fn new(n_banks: usize) -> ShockLedger {
        ShockLedger {
            previous: vec![0.0; n_banks],
            current: vec![0.0; n_banks],
        }
    }

    pub fn previous(&self) -> &[f64] {
        &self.previous
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }
}

/// Reverts yesterday's shock and applies today's for every live bank, in
/// slice order (callers keep banks sorted by ascending id). Defaulted banks
/// draw nothing and their entries stay frozen.
pub fn apply_fluctuations(
    banks: &mut [Bank],
    ledger: &mut ShockLedger,
    rng: &mut RngStream,
    sigma: f64,
) {
    debug_assert_eq!(banks.len(), ledger.current.len());
    for (i, bank) in banks.iter_mut().enumerate() {
        if !bank.is_alive() {
            continue;
        }
        let previous = ledger.current[i];
        let shock = draw_shock(rng, bank.initial_cash, sigma);
        bank.cash = bank.cash - previous + shock;
        ledger.previous[i] = previous;
        ledger.current[i] = shock;
    }
}
