//! The cycle-accurate grid simulator: per-column LFSRs feed proportional
//! bit generators, row bits are the AND of all column bits, counts
//! accumulate at the row outputs.

use crate::error::{Error, Result};
use crate::memory::{FaultModel, LikelihoodArray};
use crate::rng::{gupta_bit, LfsrState, ProbByte};
use crate::trace::InferenceTrace;
use crate::util::mix_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Grid geometry. Rows are hypothesis values, columns are observation
/// groups; every block stores `entries_per_array` likelihood bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub n_rows: usize,
    pub n_columns: usize,
    pub entries_per_array: usize,
    pub has_prior_column: bool,
}

impl MachineConfig {
    pub fn new(
        n_rows: usize,
        n_columns: usize,
        entries_per_array: usize,
        has_prior_column: bool,
    ) -> Result<Self> {
        if n_rows < 1 || n_columns < 1 {
            return Err(Error::Config("need at least one row and one column".into()));
        }
        if entries_per_array == 0 || !entries_per_array.is_power_of_two() {
            return Err(Error::Config(format!(
                "entries_per_array must be a power of two, got {entries_per_array}"
            )));
        }
        Ok(MachineConfig { n_rows, n_columns, entries_per_array, has_prior_column })
    }

    /// Fabricated test-chip profile: 4x4 grid of 8-entry arrays.
    pub fn test_chip() -> Self {
        MachineConfig { n_rows: 4, n_columns: 4, entries_per_array: 8, has_prior_column: false }
    }

    /// Scaled design: 6 columns x 4 rows of 512-entry (4-kilobit) arrays.
    pub fn scaled() -> Self {
        MachineConfig { n_rows: 4, n_columns: 6, entries_per_array: 512, has_prior_column: false }
    }

    /// Number of LFSRs: one per observation column, plus one shared by the
    /// prior column when present. Seed lists must have this length.
    pub fn n_lfsrs(&self) -> usize {
        self.n_columns + usize::from(self.has_prior_column)
    }

    /// Likelihood blocks in the grid (prior column included).
    pub fn n_blocks(&self) -> usize {
        self.n_rows * self.n_lfsrs()
    }
}

/// Observation: one entry index per column, addressing the likelihood byte
/// each block feeds to its bit generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation(pub Vec<usize>);

/// The programmed chip: geometry plus all likelihood arrays, immutable
/// after programming. Concurrent readers are safe.
#[derive(Debug, Clone)]
pub struct MachineImage {
    config: MachineConfig,
    arrays: Vec<Vec<LikelihoodArray>>,
    prior: Option<Vec<ProbByte>>,
}

impl MachineImage {
    /// Programs formed arrays from raw bytes laid out `[row][col][entry]`.
    pub fn from_bytes(
        config: MachineConfig,
        bytes: &[Vec<Vec<u8>>],
        prior: Option<Vec<u8>>,
    ) -> Result<Self> {
        if bytes.len() != config.n_rows
            || bytes.iter().any(|r| r.len() != config.n_columns)
            || bytes
                .iter()
                .any(|r| r.iter().any(|c| c.len() != config.entries_per_array))
        {
            return Err(Error::Config("byte grid does not match machine geometry".into()));
        }
        match (&prior, config.has_prior_column) {
            (Some(p), true) if p.len() != config.n_rows => {
                return Err(Error::Config("prior length must equal n_rows".into()))
            }
            (Some(_), false) => {
                return Err(Error::Config("prior bytes given but config has no prior column".into()))
            }
            (None, true) => {
                return Err(Error::Config("config has a prior column but no prior bytes given".into()))
            }
            _ => {}
        }
        let mut arrays = Vec::with_capacity(config.n_rows);
        for row in bytes {
            let mut row_arrays = Vec::with_capacity(config.n_columns);
            for col in row {
                let mut a = LikelihoodArray::formed(config.entries_per_array);
                for (e, &v) in col.iter().enumerate() {
                    a.program_byte(e, ProbByte::new(v))?;
                }
                row_arrays.push(a);
            }
            arrays.push(row_arrays);
        }
        Ok(MachineImage {
            config,
            arrays,
            prior: prior.map(|p| p.into_iter().map(ProbByte::new).collect()),
        })
    }

    /// Programs uniformly random bytes from a seeded generator; used for the
    /// artificial test patterns that exercise the whole output range.
    pub fn with_random_bytes(config: MachineConfig, rng_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let bytes: Vec<Vec<Vec<u8>>> = (0..config.n_rows)
            .map(|_| {
                (0..config.n_columns)
                    .map(|_| (0..config.entries_per_array).map(|_| rng.random()).collect())
                    .collect()
            })
            .collect();
        let prior = config
            .has_prior_column
            .then(|| (0..config.n_rows).map(|_| rng.random()).collect());
        MachineImage::from_bytes(config, &bytes, prior).expect("generated grid matches geometry")
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    pub fn array(&self, row: usize, col: usize) -> &LikelihoodArray {
        &self.arrays[row][col]
    }

    pub fn prior(&self) -> Option<&[ProbByte]> {
        self.prior.as_deref()
    }

    /// Programmed byte at `[row][col][entry]`, bypassing the fault model.
    pub fn byte(&self, row: usize, col: usize, entry: usize) -> Result<ProbByte> {
        self.arrays[row][col].programmed_byte(entry)
    }

    pub fn validate_observation(&self, obs: &Observation) -> Result<()> {
        if obs.0.len() != self.config.n_columns {
            return Err(Error::Config(format!(
                "observation has {} indices, machine has {} columns",
                obs.0.len(),
                self.config.n_columns
            )));
        }
        for (col, &e) in obs.0.iter().enumerate() {
            if e >= self.config.entries_per_array {
                return Err(Error::Bounds(format!(
                    "observation index {} out of range for column {} ({} entries)",
                    e, col, self.config.entries_per_array
                )));
            }
        }
        Ok(())
    }

    /// Reads every block's addressed byte once, through the fault model.
    /// Bytes are latched for the whole run, matching the separate
    /// memory-read phase that precedes inference.
    fn latch(&self, obs: &Observation, fm: &FaultModel) -> Result<Vec<Vec<ProbByte>>> {
        let mut latched = Vec::with_capacity(self.config.n_rows);
        for row in 0..self.config.n_rows {
            let mut row_bytes = Vec::with_capacity(self.config.n_columns);
            for col in 0..self.config.n_columns {
                let salt = (row as u64) << 32 | col as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(fm.rng_seed, salt));
                row_bytes.push(self.arrays[row][col].read_byte_with(obs.0[col], fm, &mut rng)?);
            }
            latched.push(row_bytes);
        }
        Ok(latched)
    }

    /// Writes the image in the documented text format: a geometry line, a
    /// CSV header, then one `row,col,entry,value` line per entry with the
    /// byte in hexadecimal.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let prior = match &self.prior {
            None => "none".to_string(),
            Some(p) => p.iter().map(|b| format!("{:02x}", b.value())).collect::<Vec<_>>().join(";"),
        };
        writeln!(
            w,
            "geometry rows={} cols={} entries={} prior={}",
            self.config.n_rows, self.config.n_columns, self.config.entries_per_array, prior
        )?;
        writeln!(w, "row,col,entry,value")?;
        for row in 0..self.config.n_rows {
            for col in 0..self.config.n_columns {
                for entry in 0..self.config.entries_per_array {
                    let b = self.byte(row, col, entry)?;
                    writeln!(w, "{},{},{},{:02x}", row, col, entry, b.value())?;
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)
    }

    /// Parses the text format written by [`MachineImage::write_to`].
    /// Every entry must appear exactly once; errors name the line.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, geometry) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty image file".into() })?;
        let geometry = geometry?;
        let (config, prior) = parse_geometry_line(&geometry)?;

        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 2, msg: "missing header".into() })?;
        if header?.trim() != "row,col,entry,value" {
            return Err(Error::Parse { line: 2, msg: "expected header row,col,entry,value".into() });
        }

        let mut bytes =
            vec![vec![vec![None::<u8>; config.entries_per_array]; config.n_columns]; config.n_rows];
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let parse_idx = |s: &str, what: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad {what} '{s}'"),
                })
            };
            let row = parse_idx(fields[0], "row")?;
            let col = parse_idx(fields[1], "col")?;
            let entry = parse_idx(fields[2], "entry")?;
            let value = u8::from_str_radix(fields[3], 16).map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad hex byte '{}'", fields[3]),
            })?;
            if row >= config.n_rows || col >= config.n_columns || entry >= config.entries_per_array
            {
                return Err(Error::Parse { line: lineno, msg: "index outside geometry".into() });
            }
            if bytes[row][col][entry].replace(value).is_some() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("duplicate entry ({row},{col},{entry})"),
                });
            }
        }
        let mut grid = Vec::with_capacity(config.n_rows);
        for (row, row_bytes) in bytes.into_iter().enumerate() {
            let mut cols = Vec::with_capacity(config.n_columns);
            for (col, col_bytes) in row_bytes.into_iter().enumerate() {
                let mut out = Vec::with_capacity(config.entries_per_array);
                for (entry, b) in col_bytes.into_iter().enumerate() {
                    out.push(b.ok_or_else(|| Error::Config(format!(
                        "missing entry ({row},{col},{entry})"
                    )))?);
                }
                cols.push(out);
            }
            grid.push(cols);
        }
        MachineImage::from_bytes(config, &grid, prior)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(f)
    }
}

fn parse_geometry_line(line: &str) -> Result<(MachineConfig, Option<Vec<u8>>)> {
    let err = |msg: String| Error::Parse { line: 1, msg };
    let rest = line
        .strip_prefix("geometry ")
        .ok_or_else(|| err("expected 'geometry rows=.. cols=.. entries=.. prior=..'".into()))?;
    let mut rows = None;
    let mut cols = None;
    let mut entries = None;
    let mut prior_field = None;
    for part in rest.split_whitespace() {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| err(format!("bad geometry field '{part}'")))?;
        match key {
            "rows" => rows = Some(value.parse::<usize>().map_err(|_| err(format!("bad rows '{value}'")))?),
            "cols" => cols = Some(value.parse::<usize>().map_err(|_| err(format!("bad cols '{value}'")))?),
            "entries" => {
                entries = Some(value.parse::<usize>().map_err(|_| err(format!("bad entries '{value}'")))?)
            }
            "prior" => prior_field = Some(value.to_string()),
            other => return Err(err(format!("unknown geometry key '{other}'"))),
        }
    }
    let (rows, cols, entries) = match (rows, cols, entries) {
        (Some(r), Some(c), Some(e)) => (r, c, e),
        _ => return Err(err("geometry line must set rows, cols and entries".into())),
    };
    let prior = match prior_field.as_deref() {
        None | Some("none") => None,
        Some(hexes) => Some(
            hexes
                .split(';')
                .map(|h| u8::from_str_radix(h, 16).map_err(|_| err(format!("bad prior byte '{h}'"))))
                .collect::<Result<Vec<u8>>>()?,
        ),
    };
    let config = MachineConfig::new(rows, cols, entries, prior.is_some())?;
    Ok((config, prior))
}

/// Runs the machine for `n_cycles` cycles. Each cycle every LFSR steps once,
/// each block compares its latched byte against its column's register, and
/// each row outputs the AND of its blocks (prior block included when
/// present).
pub fn run_inference(
    image: &MachineImage,
    obs: &Observation,
    seeds: &[LfsrState],
    n_cycles: usize,
    fm: &FaultModel,
) -> Result<InferenceTrace> {
    image.validate_observation(obs)?;
    let cfg = image.config();
    if seeds.len() != cfg.n_lfsrs() {
        return Err(Error::Config(format!(
            "expected {} seeds (one per LFSR), got {}",
            cfg.n_lfsrs(),
            seeds.len()
        )));
    }
    if n_cycles == 0 {
        return Err(Error::Config("n_cycles must be at least 1".into()));
    }
    let latched = image.latch(obs, fm)?;
    let mut states = seeds.to_vec();
    let mut bits = vec![Vec::with_capacity(n_cycles); cfg.n_rows];
    for _ in 0..n_cycles {
        for s in &mut states {
            *s = s.step();
        }
        for (row, row_bits) in bits.iter_mut().enumerate() {
            let mut bit = (0..cfg.n_columns).all(|col| gupta_bit(latched[row][col], states[col]));
            if let Some(prior) = image.prior() {
                bit = bit && gupta_bit(prior[row], states[cfg.n_columns]);
            }
            row_bits.push(bit);
        }
    }
    Ok(InferenceTrace::from_bits(bits))
}

/// Same machine, but the per-column LFSRs are replaced by an ideal uniform
/// source drawing in [1, 256], so each stream's one-density is exactly the
/// nominal `(v + 1) / 256`. Supports cycle counts beyond the LFSR period.
pub fn run_inference_ideal(
    image: &MachineImage,
    obs: &Observation,
    rng_seed: u64,
    n_cycles: usize,
    fm: &FaultModel,
) -> Result<InferenceTrace> {
    image.validate_observation(obs)?;
    let cfg = image.config();
    if n_cycles == 0 {
        return Err(Error::Config("n_cycles must be at least 1".into()));
    }
    let latched = image.latch(obs, fm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n_sources = cfg.n_lfsrs();
    let mut bits = vec![Vec::with_capacity(n_cycles); cfg.n_rows];
    for _ in 0..n_cycles {
        let draws: Vec<u16> = (0..n_sources).map(|_| rng.random_range(1..=256)).collect();
        for (row, row_bits) in bits.iter_mut().enumerate() {
            let mut bit =
                (0..cfg.n_columns).all(|col| draws[col] <= latched[row][col].value() as u16 + 1);
            if let Some(prior) = image.prior() {
                bit = bit && draws[cfg.n_columns] <= prior[row].value() as u16 + 1;
            }
            row_bits.push(bit);
        }
    }
    Ok(InferenceTrace::from_bits(bits))
}

/// Outcome of the fixed-cycle decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub row: usize,
    /// Set when every row counted zero and the argmax is meaningless.
    pub low_confidence: bool,
}

/// Picks the row with the highest count; ties break to the lowest row index.
pub fn decide_max_count(trace: &InferenceTrace) -> Decision {
    let counts = trace.counts();
    let row = counts
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Decision { row, low_confidence: counts.iter().all(|&c| c == 0) }
}

/// Outcome of the power-conscious rule: stop at the first output one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyDecision {
    pub row: usize,
    pub cycles_used: usize,
    /// False when no row fired within the budget and the result fell back
    /// to max-count over the partial trace.
    pub fired: bool,
    pub low_confidence: bool,
}

/// Runs cycles until any row outputs a one and returns that row and the
/// cycle count; the lowest row index wins when several fire together. If
/// nothing fires within `max_cycles`, falls back to max-count over the
/// partial trace with a low-confidence flag.
pub fn decide_first_one(
    image: &MachineImage,
    obs: &Observation,
    seeds: &[LfsrState],
    max_cycles: usize,
    fm: &FaultModel,
) -> Result<EarlyDecision> {
    image.validate_observation(obs)?;
    let cfg = image.config();
    if seeds.len() != cfg.n_lfsrs() {
        return Err(Error::Config(format!(
            "expected {} seeds (one per LFSR), got {}",
            cfg.n_lfsrs(),
            seeds.len()
        )));
    }
    if max_cycles == 0 {
        return Err(Error::Config("max_cycles must be at least 1".into()));
    }
    let latched = image.latch(obs, fm)?;
    let mut states = seeds.to_vec();
    let mut bits = vec![Vec::new(); cfg.n_rows];
    for cycle in 1..=max_cycles {
        for s in &mut states {
            *s = s.step();
        }
        let mut fired: Option<usize> = None;
        for row in 0..cfg.n_rows {
            let mut bit = (0..cfg.n_columns).all(|col| gupta_bit(latched[row][col], states[col]));
            if let Some(prior) = image.prior() {
                bit = bit && gupta_bit(prior[row], states[cfg.n_columns]);
            }
            bits[row].push(bit);
            if bit && fired.is_none() {
                fired = Some(row);
            }
        }
        if let Some(row) = fired {
            return Ok(EarlyDecision { row, cycles_used: cycle, fired: true, low_confidence: false });
        }
    }
    let fallback = decide_max_count(&InferenceTrace::from_bits(bits));
    Ok(EarlyDecision {
        row: fallback.row,
        cycles_used: max_cycles,
        fired: false,
        low_confidence: true,
    })
}

/// Fixed-cycle versus power-conscious decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionStrategy {
    MaxCount,
    FirstOne,
}

/// Assignment of raw observations to machine columns. Observations that are
/// not conditionally independent are pooled into one column whose arrays
/// store joint likelihoods, addressed by a mixed-radix index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PooledLayout {
    /// Raw observation indices per machine column, in digit order
    /// (first listed index is the most significant digit).
    pub groups: Vec<Vec<usize>>,
    pub cardinalities: Vec<usize>,
    pub config: MachineConfig,
}

/// Builds the machine geometry for a model whose raw observations have the
/// given cardinalities, pooling each listed group into a single column.
pub fn pool_columns(
    cardinalities: &[usize],
    groups: &[Vec<usize>],
    n_rows: usize,
    entries_per_array: usize,
    has_prior_column: bool,
) -> Result<PooledLayout> {
    let mut seen = vec![false; cardinalities.len()];
    for group in groups {
        if group.is_empty() {
            return Err(Error::Config("empty observation group".into()));
        }
        let mut capacity = 1usize;
        for &idx in group {
            if idx >= cardinalities.len() {
                return Err(Error::Bounds(format!("observation index {idx} out of range")));
            }
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::Config(format!("observation {idx} listed twice")));
            }
            capacity = capacity
                .checked_mul(cardinalities[idx])
                .ok_or_else(|| Error::Config("pooled cardinality overflow".into()))?;
        }
        if capacity > entries_per_array {
            return Err(Error::Config(format!(
                "pooled group needs {capacity} entries, arrays hold {entries_per_array}"
            )));
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::Config("every raw observation must belong to a group".into()));
    }
    let config = MachineConfig::new(n_rows, groups.len(), entries_per_array, has_prior_column)?;
    Ok(PooledLayout { groups: groups.to_vec(), cardinalities: cardinalities.to_vec(), config })
}

impl PooledLayout {
    /// Encodes raw observation values into per-column entry indices. Within
    /// a group the index is the mixed-radix number whose first digit is the
    /// first listed observation.
    pub fn encode(&self, raw_values: &[usize]) -> Result<Observation> {
        if raw_values.len() != self.cardinalities.len() {
            return Err(Error::Config(format!(
                "expected {} raw values, got {}",
                self.cardinalities.len(),
                raw_values.len()
            )));
        }
        for (i, (&v, &card)) in raw_values.iter().zip(&self.cardinalities).enumerate() {
            if v >= card {
                return Err(Error::Bounds(format!("raw value {v} out of range for observation {i}")));
            }
        }
        let indices = self
            .groups
            .iter()
            .map(|group| {
                group.iter().fold(0usize, |acc, &idx| acc * self.cardinalities[idx] + raw_values[idx])
            })
            .collect();
        Ok(Observation(indices))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::LFSR_PERIOD;

    fn one_row_image(bytes: &[u8]) -> MachineImage {
        // One row, one entry per column holding the given byte.
        let config = MachineConfig::new(1, bytes.len(), 1, false).unwrap();
        let grid = vec![bytes.iter().map(|&b| vec![b]).collect::<Vec<_>>()];
        MachineImage::from_bytes(config, &grid, None).unwrap()
    }

    fn seeds(vals: &[u8]) -> Vec<LfsrState> {
        vals.iter().map(|&v| LfsrState::new(v).unwrap()).collect()
    }

    #[test]
    fn and_of_always_one_streams() {
        let image = one_row_image(&[0xFF, 0xFF]);
        let tr = run_inference(
            &image,
            &Observation(vec![0, 0]),
            &seeds(&[0x01, 0x8E]),
            LFSR_PERIOD,
            &FaultModel::noiseless(0),
        )
        .unwrap();
        assert_eq!(tr.counts(), &[255]);
    }

    #[test]
    fn always_one_column_passes_partner_through() {
        let image = one_row_image(&[0xFF, 127]);
        for &s in &[[0x01u8, 0x02], [0x77, 0xC3]] {
            let tr = run_inference(
                &image,
                &Observation(vec![0, 0]),
                &seeds(&s),
                LFSR_PERIOD,
                &FaultModel::noiseless(0),
            )
            .unwrap();
            assert_eq!(tr.counts(), &[128]);
        }
    }

    #[test]
    fn single_column_count_is_seed_independent() {
        for v in [0u8, 1, 5, 100, 200, 254, 255] {
            let image = one_row_image(&[v]);
            for &s in &[0x01u8, 0x42, 0xFE] {
                let tr = run_inference(
                    &image,
                    &Observation(vec![0]),
                    &seeds(&[s]),
                    LFSR_PERIOD,
                    &FaultModel::noiseless(0),
                )
                .unwrap();
                assert_eq!(tr.counts()[0], (v as u32 + 1).min(255));
            }
        }
    }

    #[test]
    fn and_chain_bounded_by_weakest_column() {
        let image = one_row_image(&[60, 200, 140]);
        let tr = run_inference(
            &image,
            &Observation(vec![0, 0, 0]),
            &seeds(&[0x11, 0x22, 0x33]),
            LFSR_PERIOD,
            &FaultModel::noiseless(0),
        )
        .unwrap();
        assert!(tr.counts()[0] <= 61);
    }

    #[test]
    fn appending_always_one_column_keeps_counts() {
        let base = one_row_image(&[100, 180]);
        let extended = one_row_image(&[100, 180, 0xFF]);
        let s2 = seeds(&[0x13, 0xB7]);
        let s3 = seeds(&[0x13, 0xB7, 0x59]);
        let fm = FaultModel::noiseless(0);
        let t2 =
            run_inference(&base, &Observation(vec![0, 0]), &s2, LFSR_PERIOD, &fm).unwrap();
        let t3 =
            run_inference(&extended, &Observation(vec![0, 0, 0]), &s3, LFSR_PERIOD, &fm).unwrap();
        assert_eq!(t2.counts(), t3.counts());
    }

    #[test]
    fn prior_column_is_an_extra_and_stage() {
        let config = MachineConfig::new(1, 1, 1, true).unwrap();
        let image =
            MachineImage::from_bytes(config, &[vec![vec![0xFF]]], Some(vec![127])).unwrap();
        let tr = run_inference(
            &image,
            &Observation(vec![0]),
            &seeds(&[0x01, 0x55]),
            LFSR_PERIOD,
            &FaultModel::noiseless(0),
        )
        .unwrap();
        // Always-one likelihood ANDed with the prior stream: the prior's
        // full-period count comes through.
        assert_eq!(tr.counts(), &[128]);
    }

    #[test]
    fn run_is_deterministic() {
        let image = MachineImage::with_random_bytes(MachineConfig::test_chip(), 9);
        let s = seeds(&[0x2F, 0x91, 0x4C, 0xD3]);
        let fm = FaultModel::default();
        let obs = Observation(vec![3, 1, 4, 7]);
        let a = run_inference(&image, &obs, &s, LFSR_PERIOD, &fm).unwrap();
        let b = run_inference(&image, &obs, &s, LFSR_PERIOD, &fm).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seed_count_must_match() {
        let image = MachineImage::with_random_bytes(MachineConfig::test_chip(), 9);
        let err = run_inference(
            &image,
            &Observation(vec![0, 0, 0, 0]),
            &seeds(&[0x01, 0x02]),
            10,
            &FaultModel::noiseless(0),
        );
        assert!(err.is_err());
    }

    #[test]
    fn observation_bounds_checked() {
        let image = MachineImage::with_random_bytes(MachineConfig::test_chip(), 9);
        let err = run_inference(
            &image,
            &Observation(vec![0, 0, 0, 8]),
            &seeds(&[1, 2, 3, 4]),
            10,
            &FaultModel::noiseless(0),
        );
        assert!(matches!(err, Err(Error::Bounds(_))));
    }

    #[test]
    fn max_count_decision_rules() {
        let t = |counts: &[u32]| {
            InferenceTrace::from_bits(
                counts
                    .iter()
                    .map(|&c| (0..20).map(|i| (i as u32) < c).collect())
                    .collect(),
            )
        };
        assert_eq!(decide_max_count(&t(&[3, 17, 5, 2])), Decision { row: 1, low_confidence: false });
        assert_eq!(decide_max_count(&t(&[0, 0, 0, 0])), Decision { row: 0, low_confidence: true });
        assert_eq!(decide_max_count(&t(&[9, 9, 2, 1])), Decision { row: 0, low_confidence: false });
    }

    #[test]
    fn first_one_fires_immediately_on_certain_stream() {
        let config = MachineConfig::new(4, 1, 1, false).unwrap();
        let grid = vec![vec![vec![0xFF]], vec![vec![25]], vec![vec![25]], vec![vec![25]]];
        let image = MachineImage::from_bytes(config, &grid, None).unwrap();
        let d = decide_first_one(
            &image,
            &Observation(vec![0]),
            &seeds(&[0x01]),
            255,
            &FaultModel::noiseless(0),
        )
        .unwrap();
        assert_eq!((d.row, d.cycles_used, d.fired), (0, 1, true));
    }

    #[test]
    fn first_one_falls_back_when_nothing_fires() {
        // All-zero products: byte 0 in one column makes ones rare; byte 0 in
        // two ANDed columns with equal seeds still fires only when r = 1.
        // Use two columns whose single pass cycles never coincide.
        let config = MachineConfig::new(1, 2, 1, false).unwrap();
        let image = MachineImage::from_bytes(config, &[vec![vec![0], vec![0]]], None).unwrap();
        // Different seeds: the unique r=1 cycle of each column differs.
        let d = decide_first_one(
            &image,
            &Observation(vec![0, 0]),
            &seeds(&[0x01, 0x02]),
            255,
            &FaultModel::noiseless(0),
        )
        .unwrap();
        assert!(!d.fired);
        assert_eq!(d.cycles_used, 255);
        assert!(d.low_confidence);
    }

    #[test]
    fn first_one_matches_trace_scan() {
        let image = MachineImage::with_random_bytes(MachineConfig::test_chip(), 31);
        let s = seeds(&[0x2F, 0x91, 0x4C, 0xD3]);
        let fm = FaultModel::noiseless(0);
        for obs_idx in 0..8 {
            let obs = Observation(vec![obs_idx % 8, (obs_idx + 3) % 8, 1, 6]);
            let d = decide_first_one(&image, &obs, &s, 255, &fm).unwrap();
            let tr = run_inference(&image, &obs, &s, 255, &fm).unwrap();
            match tr.first_fire(255) {
                Some((row, cycle)) => {
                    assert!(d.fired);
                    assert_eq!((d.row, d.cycles_used), (row, cycle));
                }
                None => assert!(!d.fired),
            }
        }
    }

    #[test]
    fn image_roundtrip_through_text_format() {
        let image = MachineImage::with_random_bytes(MachineConfig::test_chip(), 77);
        let mut buf = Vec::new();
        image.write_to(&mut buf).unwrap();
        let back = MachineImage::read_from(&buf[..]).unwrap();
        for row in 0..4 {
            for col in 0..4 {
                for e in 0..8 {
                    assert_eq!(
                        image.byte(row, col, e).unwrap(),
                        back.byte(row, col, e).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn image_parse_errors_name_lines() {
        let text = "geometry rows=1 cols=1 entries=1 prior=none\nrow,col,entry,value\n0,0,zz,ff\n";
        match MachineImage::read_from(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn prior_roundtrip() {
        let config = MachineConfig::new(2, 1, 2, true).unwrap();
        let image = MachineImage::from_bytes(
            config,
            &[vec![vec![1, 2]], vec![vec![3, 4]]],
            Some(vec![0xFF, 0x80]),
        )
        .unwrap();
        let mut buf = Vec::new();
        image.write_to(&mut buf).unwrap();
        let back = MachineImage::read_from(&buf[..]).unwrap();
        assert_eq!(back.prior().unwrap()[1].value(), 0x80);
    }

    #[test]
    fn pooling_mixed_radix() {
        let layout = pool_columns(&[8, 8, 8], &[vec![0], vec![1, 2]], 4, 64, false).unwrap();
        assert_eq!(layout.config.n_columns, 2);
        let obs = layout.encode(&[5, 3, 7]).unwrap();
        assert_eq!(obs.0, vec![5, 8 * 3 + 7]);
    }

    #[test]
    fn pooling_capacity_checked() {
        assert!(pool_columns(&[16, 16], &[vec![0, 1]], 4, 64, false).is_err());
        assert!(pool_columns(&[8, 8], &[vec![0, 1]], 4, 64, false).is_ok());
    }

    #[test]
    fn pooling_requires_partition() {
        assert!(pool_columns(&[8, 8], &[vec![0]], 4, 64, false).is_err());
        assert!(pool_columns(&[8, 8], &[vec![0, 0], vec![1]], 4, 64, false).is_err());
    }

    #[test]
    fn ideal_source_converges_to_nominal_product() {
        let image = one_row_image(&[127, 63]);
        let n = 100_000usize;
        let tr = run_inference_ideal(
            &image,
            &Observation(vec![0, 0]),
            1234,
            n,
            &FaultModel::noiseless(0),
        )
        .unwrap();
        let p = (128.0 / 256.0) * (64.0 / 256.0);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let measured = tr.counts()[0] as f64 / n as f64;
        assert!((measured - p).abs() <= 3.0 * se, "measured {measured}, expected {p} +- {se}");
    }

    #[test]
    fn config_validation() {
        assert!(MachineConfig::new(0, 4, 8, false).is_err());
        assert!(MachineConfig::new(4, 4, 7, false).is_err());
        assert!(MachineConfig::new(4, 4, 8, false).is_ok());
        assert_eq!(MachineConfig::test_chip().n_blocks(), 16);
        assert_eq!(MachineConfig::scaled().n_blocks(), 24);
    }
}
