//! 8-bit maximal-period LFSR and the comparator-style proportional bit
//! generator that together produce one Bernoulli-like bit per block per cycle.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Period of the 8-bit maximal LFSR: all nonzero states, visited once each.
pub const LFSR_PERIOD: usize = 255;

/// State of the per-column 8-bit Fibonacci LFSR.
///
/// The feedback polynomial is x^8 + x^6 + x^5 + x^4 + 1 (taps 8,6,5,4), a
/// single project-wide constant. It is maximal: every nonzero seed cycles
/// through all 255 nonzero states before repeating. The all-zero state is
/// absorbing and cannot be constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LfsrState(u8);

impl LfsrState {
    /// Wraps a register value. The zero state is rejected.
    pub fn new(state: u8) -> Result<Self> {
        if state == 0 {
            return Err(Error::ZeroLfsrState);
        }
        Ok(LfsrState(state))
    }

    /// Current register value, always in `1..=255`.
    pub fn get(self) -> u8 {
        self.0
    }

    /// Advances the register by one clock: shift left, feedback from
    /// bit positions 8, 6, 5 and 4.
    #[inline]
    pub fn step(self) -> Self {
        let s = self.0;
        let feedback = ((s >> 7) ^ (s >> 5) ^ (s >> 4) ^ (s >> 3)) & 1;
        LfsrState((s << 1) | feedback)
    }

    /// The 255 states visited over one full period, starting with
    /// `self.step()` and ending back at `self`.
    pub fn period_states(self) -> impl Iterator<Item = LfsrState> {
        let mut s = self;
        std::iter::repeat_with(move || {
            s = s.step();
            s
        })
        .take(LFSR_PERIOD)
    }
}

/// 8-bit quantized probability. The stored value `v` encodes the nominal
/// probability `(v + 1) / 256`: 0x00 encodes 1/256 and 0xFF encodes 256/256.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProbByte(u8);

impl ProbByte {
    pub fn new(v: u8) -> Self {
        ProbByte(v)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Nominal encoded probability `(v + 1) / 256`.
    pub fn nominal(self) -> f64 {
        (self.0 as f64 + 1.0) / 256.0
    }

    /// Probability realized over one full LFSR period:
    /// `min(v + 1, 255) / 255`.
    ///
    /// Because the LFSR never emits zero, only 255 comparison outcomes exist
    /// per period: v = 0xFE and v = 0xFF both realize probability 1. This
    /// quantization artifact at the top of the range is accepted.
    pub fn full_period(self) -> f64 {
        (self.0 as f64 + 1.0).min(255.0) / 255.0
    }
}

/// Comparator rule of the proportional bit-stream generator: emits 1 iff
/// `r <= v + 1`.
///
/// Over one full LFSR period the stream contains exactly `min(v + 1, 255)`
/// ones, independent of the seed, so the realized frequency best matches
/// the nominal `(v + 1) / 256` encoding.
#[inline]
pub fn gupta_bit(v: ProbByte, r: LfsrState) -> bool {
    (r.get() as u16) <= (v.value() as u16) + 1
}

/// Validates one initial LFSR state per column. Rejects a wrong count or a
/// zero seed.
pub fn seed_load(seeds: &[u8], n_columns: usize) -> Result<Vec<LfsrState>> {
    if seeds.len() != n_columns {
        return Err(Error::Config(format!(
            "expected {} seeds, got {}",
            n_columns,
            seeds.len()
        )));
    }
    seeds.iter().map(|&s| LfsrState::new(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn zero_state_rejected() {
        assert!(matches!(LfsrState::new(0), Err(Error::ZeroLfsrState)));
    }

    #[test]
    fn period_is_255_from_seed_one() {
        let mut s = LfsrState::new(0x01).unwrap();
        for _ in 0..LFSR_PERIOD {
            s = s.step();
        }
        assert_eq!(s.get(), 0x01);
    }

    #[test]
    fn orbit_visits_all_nonzero_states() {
        let states: HashSet<u8> = LfsrState::new(0x01)
            .unwrap()
            .period_states()
            .map(|s| s.get())
            .collect();
        assert_eq!(states.len(), 255);
        assert!(!states.contains(&0));
    }

    #[test]
    fn polynomial_is_maximal_for_every_seed() {
        // Exhaustive: every nonzero seed returns to itself after exactly 255
        // steps and not before.
        for seed in 1..=255u8 {
            let start = LfsrState::new(seed).unwrap();
            let mut s = start;
            let mut first_return = 0usize;
            for i in 1..=LFSR_PERIOD {
                s = s.step();
                if s == start {
                    first_return = i;
                    break;
                }
            }
            assert_eq!(first_return, LFSR_PERIOD, "seed {seed:#04x}");
        }
    }

    fn full_period_count(v: u8, seed: u8) -> u32 {
        let s = LfsrState::new(seed).unwrap();
        s.period_states()
            .filter(|&r| gupta_bit(ProbByte::new(v), r))
            .count() as u32
    }

    #[test]
    fn gupta_always_one_at_max_byte() {
        let s = LfsrState::new(0x5A).unwrap();
        for r in s.period_states() {
            assert!(gupta_bit(ProbByte::new(255), r));
        }
        assert_eq!(full_period_count(255, 0x5A), 255);
    }

    #[test]
    fn gupta_full_period_counts() {
        // Oracle: count r in [1,255] with r <= v+1, i.e. min(v+1, 255).
        assert_eq!(full_period_count(0, 0x01), 1);
        assert_eq!(full_period_count(127, 0x01), 128);
        assert_eq!(full_period_count(254, 0x01), 255);
    }

    #[test]
    fn gupta_count_is_seed_independent_and_exact() {
        for &seed in &[0x01u8, 0x3A, 0x7F, 0xB2, 0xEE] {
            for v in 0..=255u16 {
                let expected = (v + 1).min(255) as u32;
                assert_eq!(full_period_count(v as u8, seed), expected);
            }
        }
    }

    #[test]
    fn gupta_count_monotone_in_byte() {
        let counts: Vec<u32> = (0..=255u16).map(|v| full_period_count(v as u8, 0x11)).collect();
        for w in counts.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn seed_load_validates() {
        assert!(seed_load(&[0x01, 0x3A, 0x7F, 0xB2, 0x11, 0xEE], 6).is_ok());
        assert!(seed_load(&[0x00, 0x01], 2).is_err());
        assert!(seed_load(&[0x01, 0x02, 0x03, 0x04, 0x05], 6).is_err());
    }

    #[test]
    fn deterministic_sequences() {
        let a: Vec<u8> = LfsrState::new(0x42).unwrap().period_states().map(|s| s.get()).collect();
        let b: Vec<u8> = LfsrState::new(0x42).unwrap().period_states().map(|s| s.get()).collect();
        assert_eq!(a, b);
    }
}
