//! Raw result of an inference run: per-cycle row output bits and counts.

use crate::error::{Error, Result};
use std::io::Write;

/// Per-cycle output bits of every row plus cumulative counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceTrace {
    bits: Vec<Vec<bool>>,
    counts: Vec<u32>,
    cycles_run: usize,
}

impl InferenceTrace {
    /// Builds a trace from raw row-major bits; counts are derived.
    pub fn from_bits(bits: Vec<Vec<bool>>) -> Self {
        let cycles_run = bits.first().map_or(0, Vec::len);
        debug_assert!(bits.iter().all(|row| row.len() == cycles_run));
        let counts = bits
            .iter()
            .map(|row| row.iter().filter(|&&b| b).count() as u32)
            .collect();
        InferenceTrace { bits, counts, cycles_run }
    }

    pub fn n_rows(&self) -> usize {
        self.bits.len()
    }

    pub fn cycles_run(&self) -> usize {
        self.cycles_run
    }

    /// Cumulative count of ones per row over the whole run.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn bit(&self, row: usize, cycle: usize) -> bool {
        self.bits[row][cycle]
    }

    pub fn total_bits(&self) -> usize {
        self.n_rows() * self.cycles_run
    }

    /// Counts over the first `cycles` cycles only. A trace truncated to a
    /// smaller budget is a prefix of the full run, so one full-length run
    /// serves every smaller budget.
    pub fn counts_at(&self, cycles: usize) -> Vec<u32> {
        let c = cycles.min(self.cycles_run);
        self.bits
            .iter()
            .map(|row| row[..c].iter().filter(|&&b| b).count() as u32)
            .collect()
    }

    /// Earliest cycle (1-based) in which any row emitted a one, searching the
    /// first `max_cycles` cycles; lowest row index wins within a cycle.
    pub fn first_fire(&self, max_cycles: usize) -> Option<(usize, usize)> {
        let limit = max_cycles.min(self.cycles_run);
        for cycle in 0..limit {
            for row in 0..self.n_rows() {
                if self.bits[row][cycle] {
                    return Some((row, cycle + 1));
                }
            }
        }
        None
    }

    /// Flips a single output bit, keeping counts consistent.
    pub(crate) fn flip(&mut self, row: usize, cycle: usize) {
        let b = &mut self.bits[row][cycle];
        *b = !*b;
        if *b {
            self.counts[row] += 1;
        } else {
            self.counts[row] -= 1;
        }
    }

    /// Writes the trace as CSV with columns `cycle,row,bit`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "cycle,row,bit")?;
        for cycle in 0..self.cycles_run {
            for row in 0..self.n_rows() {
                writeln!(w, "{},{},{}", cycle, row, self.bits[row][cycle] as u8)?;
            }
        }
        Ok(())
    }

    pub(crate) fn check_flip_budget(&self, k: usize) -> Result<()> {
        if k > self.total_bits() {
            return Err(Error::Bounds(format!(
                "cannot flip {} bits in a trace holding {}",
                k,
                self.total_bits()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(bits: &[&[u8]]) -> InferenceTrace {
        InferenceTrace::from_bits(
            bits.iter().map(|r| r.iter().map(|&b| b != 0).collect()).collect(),
        )
    }

    #[test]
    fn counts_derived_from_bits() {
        let tr = t(&[&[1, 0, 1, 1], &[0, 0, 0, 1]]);
        assert_eq!(tr.counts(), &[3, 1]);
        assert_eq!(tr.cycles_run(), 4);
        assert_eq!(tr.counts_at(2), vec![1, 0]);
    }

    #[test]
    fn first_fire_breaks_ties_by_row() {
        let tr = t(&[&[0, 1], &[1, 1]]);
        assert_eq!(tr.first_fire(2), Some((1, 1)));
        let tied = t(&[&[1, 0], &[1, 0]]);
        assert_eq!(tied.first_fire(2), Some((0, 1)));
        let none = t(&[&[0, 0], &[0, 0]]);
        assert_eq!(none.first_fire(2), None);
    }

    #[test]
    fn csv_layout() {
        let tr = t(&[&[1, 0]]);
        let mut out = Vec::new();
        tr.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "cycle,row,bit\n0,0,1\n1,0,0\n");
    }
}
