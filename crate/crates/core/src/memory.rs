//! Likelihood memory arrays: complementary 2T2R single-level-cell memristor
//! pairs with differential readout and a parametric fault model.

use crate::error::{Error, Result};
use crate::rng::ProbByte;
use crate::trace::InferenceTrace;
use crate::util::mix_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

/// Resistance state of a single memristor after SET / RESET.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    Lrs,
    Hrs,
}

/// One memristor. The resistance is realized at read time by sampling the
/// fault model's lognormal distribution for the device's level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceState {
    pub level: Level,
}

impl DeviceState {
    pub fn sample_resistance<R: Rng>(&self, fm: &FaultModel, rng: &mut R) -> f64 {
        let (median, sigma) = match self.level {
            Level::Lrs => (fm.lrs_median_ohm, fm.lrs_sigma),
            Level::Hrs => (fm.hrs_median_ohm, fm.hrs_sigma),
        };
        if sigma == 0.0 {
            return median;
        }
        // LogNormal takes the underlying normal's mean; exp(mu) is the median.
        LogNormal::new(median.ln(), sigma).expect("validated parameters").sample(rng)
    }
}

/// 2T2R bit cell: two memristors programmed in opposition and compared by a
/// differential sense amplifier. A stored one is (left=LRS, right=HRS), a
/// stored zero is (left=HRS, right=LRS).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplementaryCell {
    pub left: DeviceState,
    pub right: DeviceState,
}

impl ComplementaryCell {
    fn stores(bit: bool) -> Self {
        let (l, r) = if bit { (Level::Lrs, Level::Hrs) } else { (Level::Hrs, Level::Lrs) };
        ComplementaryCell { left: DeviceState { level: l }, right: DeviceState { level: r } }
    }
}

/// Device-variability and transient-error parameters.
///
/// Defaults are representative HfOx values (5 kOhm / 100 kOhm medians,
/// lognormal sigma 0.3), not measured ones; all four are knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultModel {
    pub lrs_median_ohm: f64,
    pub hrs_median_ohm: f64,
    pub lrs_sigma: f64,
    pub hrs_sigma: f64,
    /// Per-read, per-bit probability of a transient output flip.
    pub transient_flip_prob: f64,
    pub rng_seed: u64,
}

impl FaultModel {
    pub fn new(
        lrs_median_ohm: f64,
        hrs_median_ohm: f64,
        lrs_sigma: f64,
        hrs_sigma: f64,
        transient_flip_prob: f64,
        rng_seed: u64,
    ) -> Result<Self> {
        if !(lrs_median_ohm > 0.0 && hrs_median_ohm > 0.0) {
            return Err(Error::Range("medians must be positive".into()));
        }
        if lrs_median_ohm >= hrs_median_ohm {
            return Err(Error::Range("LRS median must lie below HRS median".into()));
        }
        if lrs_sigma < 0.0 || hrs_sigma < 0.0 {
            return Err(Error::Range("sigmas must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&transient_flip_prob) {
            return Err(Error::Range("transient_flip_prob must be in [0,1]".into()));
        }
        Ok(FaultModel {
            lrs_median_ohm,
            hrs_median_ohm,
            lrs_sigma,
            hrs_sigma,
            transient_flip_prob,
            rng_seed,
        })
    }

    /// Zero-width distributions, zero flips: readback is exact.
    pub fn noiseless(rng_seed: u64) -> Self {
        FaultModel {
            lrs_median_ohm: 5_000.0,
            hrs_median_ohm: 100_000.0,
            lrs_sigma: 0.0,
            hrs_sigma: 0.0,
            transient_flip_prob: 0.0,
            rng_seed,
        }
    }
}

impl Default for FaultModel {
    fn default() -> Self {
        FaultModel {
            lrs_median_ohm: 5_000.0,
            hrs_median_ohm: 100_000.0,
            lrs_sigma: 0.3,
            hrs_sigma: 0.3,
            transient_flip_prob: 0.0,
            rng_seed: 0,
        }
    }
}

const BITS_PER_ENTRY: usize = 8;

/// One likelihood memory array: `n_entries` bytes stored as complementary
/// cells, addressed by the observation value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LikelihoodArray {
    n_entries: usize,
    /// `cells[entry][i]` holds bit 7-i of the byte (MSB first).
    cells: Vec<Vec<ComplementaryCell>>,
    formed: bool,
}

impl LikelihoodArray {
    /// A formed array with every cell holding a zero bit.
    pub fn formed(n_entries: usize) -> Self {
        let cells = vec![vec![ComplementaryCell::stores(false); BITS_PER_ENTRY]; n_entries];
        LikelihoodArray { n_entries, cells, formed: true }
    }

    /// An array whose memristors have never been formed: cell states are
    /// undefined and reads return seeded-random bytes.
    pub fn unformed(n_entries: usize) -> Self {
        let cells = vec![vec![ComplementaryCell::stores(false); BITS_PER_ENTRY]; n_entries];
        LikelihoodArray { n_entries, cells, formed: false }
    }

    pub fn n_entries(&self) -> usize {
        self.n_entries
    }

    pub fn is_formed(&self) -> bool {
        self.formed
    }

    fn check_entry(&self, entry: usize) -> Result<()> {
        if entry >= self.n_entries {
            return Err(Error::Bounds(format!(
                "entry {} out of range for array of {} entries",
                entry, self.n_entries
            )));
        }
        Ok(())
    }

    /// Stores a byte complementarily, bit by bit. No program-and-verify.
    pub fn program_byte(&mut self, entry: usize, value: ProbByte) -> Result<()> {
        if !self.formed {
            return Err(Error::State("cannot program an unformed array".into()));
        }
        self.check_entry(entry)?;
        let v = value.value();
        for (i, cell) in self.cells[entry].iter_mut().enumerate() {
            let bit = (v >> (7 - i)) & 1 == 1;
            *cell = ComplementaryCell::stores(bit);
        }
        Ok(())
    }

    /// Differential read with a fresh RNG derived from `(fm.rng_seed, entry)`.
    pub fn read_byte(&self, entry: usize, fm: &FaultModel) -> Result<ProbByte> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(fm.rng_seed, entry as u64));
        self.read_byte_with(entry, fm, &mut rng)
    }

    /// Differential read using the caller's RNG stream.
    ///
    /// For each bit both device resistances are sampled and the bit reads 1
    /// iff the left resistance is below the right one; independent transient
    /// flips are applied afterwards. With a noiseless model this returns the
    /// programmed byte exactly.
    pub fn read_byte_with<R: Rng>(
        &self,
        entry: usize,
        fm: &FaultModel,
        rng: &mut R,
    ) -> Result<ProbByte> {
        self.check_entry(entry)?;
        if !self.formed {
            // Unformed bit cells compare two unformed devices; the outcome
            // is arbitrary, modeled as a seeded-random byte.
            return Ok(ProbByte::new(rng.random::<u8>()));
        }
        let mut v = 0u8;
        for (i, cell) in self.cells[entry].iter().enumerate() {
            let left = cell.left.sample_resistance(fm, rng);
            let right = cell.right.sample_resistance(fm, rng);
            let mut bit = left < right;
            if fm.transient_flip_prob > 0.0 && rng.random_bool(fm.transient_flip_prob) {
                bit = !bit;
            }
            if bit {
                v |= 1 << (7 - i);
            }
        }
        Ok(ProbByte::new(v))
    }

    /// Logical content as programmed, without the fault model. Errors on an
    /// unformed array, whose content is undefined.
    pub fn programmed_byte(&self, entry: usize) -> Result<ProbByte> {
        if !self.formed {
            return Err(Error::State("unformed array holds no programmed byte".into()));
        }
        self.check_entry(entry)?;
        let mut v = 0u8;
        for (i, cell) in self.cells[entry].iter().enumerate() {
            if cell.left.level == Level::Lrs {
                v |= 1 << (7 - i);
            }
        }
        Ok(ProbByte::new(v))
    }
}

/// Flips exactly `k` distinct uniformly chosen (row, cycle) output bits and
/// recomputes counts. Models soft errors averaged out by the computation.
pub fn inject_faults(trace: &InferenceTrace, k: usize, rng_seed: u64) -> Result<InferenceTrace> {
    trace.check_flip_budget(k)?;
    let mut out = trace.clone();
    let total = trace.total_bits();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    // Floyd's algorithm: k distinct positions out of `total`.
    let mut chosen = std::collections::HashSet::with_capacity(k);
    for j in (total - k)..total {
        let t = rng.random_range(0..=j);
        let pos = if chosen.contains(&t) { j } else { t };
        chosen.insert(pos);
    }
    let cycles = trace.cycles_run();
    for pos in chosen {
        out.flip(pos / cycles, pos % cycles);
    }
    Ok(out)
}

/// Monte-Carlo bit-error rate of differential readout: probability that a
/// stored bit reads back wrong because the LRS sample exceeds the HRS sample.
pub fn differential_error_rate(fm: &FaultModel, n_samples: usize, rng_seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let lrs = DeviceState { level: Level::Lrs };
    let hrs = DeviceState { level: Level::Hrs };
    let mut errors = 0usize;
    for _ in 0..n_samples {
        let l = lrs.sample_resistance(fm, &mut rng);
        let h = hrs.sample_resistance(fm, &mut rng);
        if l >= h {
            errors += 1;
        }
    }
    errors as f64 / n_samples as f64
}

/// Monte-Carlo bit-error rate of a single-device read against the best fixed
/// resistance threshold, chosen by sweeping a log-spaced grid between the
/// two medians over the same sampled sets.
pub fn single_device_error_rate(fm: &FaultModel, n_samples: usize, rng_seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let lrs = DeviceState { level: Level::Lrs };
    let hrs = DeviceState { level: Level::Hrs };
    let lrs_samples: Vec<f64> = (0..n_samples).map(|_| lrs.sample_resistance(fm, &mut rng)).collect();
    let hrs_samples: Vec<f64> = (0..n_samples).map(|_| hrs.sample_resistance(fm, &mut rng)).collect();
    let (lo, hi) = (fm.lrs_median_ohm.ln(), fm.hrs_median_ohm.ln());
    let mut best = 1.0f64;
    const GRID: usize = 512;
    for i in 0..=GRID {
        let thr = (lo + (hi - lo) * i as f64 / GRID as f64).exp();
        // A device reads as LRS when its resistance falls below the threshold.
        let miss_lrs = lrs_samples.iter().filter(|&&r| r >= thr).count();
        let miss_hrs = hrs_samples.iter().filter(|&&r| r < thr).count();
        let rate = (miss_lrs + miss_hrs) as f64 / (2 * n_samples) as f64;
        best = best.min(rate);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::InferenceTrace;

    #[test]
    fn program_patterns() {
        let mut a = LikelihoodArray::formed(4);
        a.program_byte(0, ProbByte::new(0xFF)).unwrap();
        a.program_byte(1, ProbByte::new(0x00)).unwrap();
        a.program_byte(2, ProbByte::new(0xA5)).unwrap();
        for i in 0..8 {
            assert_eq!(a.cells[0][i], ComplementaryCell::stores(true));
            assert_eq!(a.cells[1][i], ComplementaryCell::stores(false));
        }
        // 0xA5 = 10100101, MSB first.
        let expect = [true, false, true, false, false, true, false, true];
        for (i, &bit) in expect.iter().enumerate() {
            assert_eq!(a.cells[2][i], ComplementaryCell::stores(bit));
        }
    }

    #[test]
    fn noiseless_roundtrip_all_values() {
        let fm = FaultModel::noiseless(7);
        let mut a = LikelihoodArray::formed(256);
        for v in 0..=255u8 {
            a.program_byte(v as usize, ProbByte::new(v)).unwrap();
        }
        for v in 0..=255u8 {
            assert_eq!(a.read_byte(v as usize, &fm).unwrap().value(), v);
        }
    }

    #[test]
    fn default_sigma_readback_exact_in_practice() {
        // Well-separated medians with sigma 0.3: misread probability ~1e-12.
        let fm = FaultModel::default();
        let mut a = LikelihoodArray::formed(1);
        a.program_byte(0, ProbByte::new(0x80)).unwrap();
        assert_eq!(a.read_byte(0, &fm).unwrap().value(), 0x80);
    }

    #[test]
    fn unformed_reads_are_random_but_reproducible() {
        let a = LikelihoodArray::unformed(8);
        let fm = FaultModel::noiseless(1234);
        let first: Vec<u8> = (0..8).map(|e| a.read_byte(e, &fm).unwrap().value()).collect();
        let again: Vec<u8> = (0..8).map(|e| a.read_byte(e, &fm).unwrap().value()).collect();
        assert_eq!(first, again);
        // Not all identical: the pattern should look random.
        assert!(first.iter().any(|&v| v != first[0]));
        let other_seed = FaultModel::noiseless(99);
        let different: Vec<u8> = (0..8).map(|e| a.read_byte(e, &other_seed).unwrap().value()).collect();
        assert_ne!(first, different);
    }

    #[test]
    fn unformed_program_rejected() {
        let mut a = LikelihoodArray::unformed(4);
        assert!(matches!(a.program_byte(0, ProbByte::new(1)), Err(Error::State(_))));
    }

    #[test]
    fn entry_bounds_checked() {
        let a = LikelihoodArray::formed(8);
        assert!(matches!(a.read_byte(8, &FaultModel::noiseless(0)), Err(Error::Bounds(_))));
    }

    #[test]
    fn fault_model_validation() {
        assert!(FaultModel::new(5e3, 1e5, 0.3, 0.3, 0.0, 0).is_ok());
        assert!(FaultModel::new(1e5, 5e3, 0.3, 0.3, 0.0, 0).is_err());
        assert!(FaultModel::new(5e3, 1e5, -0.1, 0.3, 0.0, 0).is_err());
        assert!(FaultModel::new(5e3, 1e5, 0.3, 0.3, 1.5, 0).is_err());
    }

    #[test]
    fn transient_flips_occur_at_unit_probability() {
        let fm = FaultModel { transient_flip_prob: 1.0, ..FaultModel::noiseless(0) };
        let mut a = LikelihoodArray::formed(1);
        a.program_byte(0, ProbByte::new(0xF0)).unwrap();
        assert_eq!(a.read_byte(0, &fm).unwrap().value(), 0x0F);
    }

    fn trace_of(bits: &[&[u8]]) -> InferenceTrace {
        InferenceTrace::from_bits(
            bits.iter().map(|r| r.iter().map(|&b| b != 0).collect()).collect(),
        )
    }

    #[test]
    fn inject_zero_is_identity() {
        let tr = trace_of(&[&[1, 0, 1], &[0, 1, 0]]);
        assert_eq!(inject_faults(&tr, 0, 5).unwrap(), tr);
    }

    #[test]
    fn inject_flips_exactly_k_bits() {
        let tr = trace_of(&[&[1, 0, 1, 0, 1], &[0, 1, 0, 1, 0]]);
        for k in 1..=5 {
            let out = inject_faults(&tr, k, 42).unwrap();
            let mut flipped = 0;
            for row in 0..2 {
                for c in 0..5 {
                    if out.bit(row, c) != tr.bit(row, c) {
                        flipped += 1;
                    }
                }
            }
            assert_eq!(flipped, k);
            let delta: u32 = (0..2)
                .map(|r| out.counts()[r].abs_diff(tr.counts()[r]))
                .sum();
            assert!(delta <= k as u32);
        }
    }

    #[test]
    fn inject_too_many_rejected() {
        let tr = trace_of(&[&[1, 0]]);
        assert!(inject_faults(&tr, 3, 0).is_err());
    }

    #[test]
    fn differential_beats_single_device_at_wide_sigma() {
        let fm = FaultModel::new(5e3, 1e5, 1.2, 1.2, 0.0, 0).unwrap();
        let diff = differential_error_rate(&fm, 100_000, 11);
        let single = single_device_error_rate(&fm, 100_000, 12);
        assert!(diff > 0.0, "wide sigma should produce measurable errors");
        assert!(diff <= single, "differential {diff} vs single {single}");
    }
}
