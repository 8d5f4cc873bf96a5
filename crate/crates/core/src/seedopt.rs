//! LFSR seed-tuple search: minimizes the deviation between the machine's
//! full-period AND-counts and the ideal products, reproducing the
//! random-versus-optimal seed contrast of the chip measurements.

use crate::error::{Error, Result};
use crate::machine::MachineImage;
use crate::rng::{LfsrState, ProbByte, LFSR_PERIOD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One initial LFSR state per column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTuple(pub Vec<LfsrState>);

impl SeedTuple {
    pub fn hex(&self) -> Vec<String> {
        self.0.iter().map(|s| format!("{:02x}", s.get())).collect()
    }
}

/// Aggregation of per-probe deviations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviationMetric {
    MaxAbs,
    Rms,
}

/// What the AND-count is compared against.
///
/// `FullPeriod` uses the exactly realizable per-stream densities
/// `min(v+1,255)/255`; `Nominal` uses the encoded `(v+1)/256`, the quantity
/// Bayes law predicts. The default is `FullPeriod`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviationTarget {
    FullPeriod,
    Nominal,
}

/// Probe set plus aggregation rule; the objective the search minimizes.
/// The selection criterion is ours and is stated in reports.
#[derive(Debug, Clone)]
pub struct SeedObjective {
    probes: Vec<Vec<ProbByte>>,
    /// Ideal probability per probe, precomputed (seed-independent).
    ideal_probs: Vec<f64>,
    pub metric: DeviationMetric,
    pub target: DeviationTarget,
    /// Extra cycle budgets the deviation is also scored at (the full period
    /// is always included). Reduced-cycle operation needs streams whose
    /// coincidences spread evenly, which full-period counts alone do not
    /// constrain; the combined score is the mean over budgets.
    prefix_cycles: Vec<usize>,
}

impl SeedObjective {
    pub fn new(probes: Vec<Vec<ProbByte>>, metric: DeviationMetric) -> Result<Self> {
        Self::with_target(probes, metric, DeviationTarget::FullPeriod)
    }

    pub fn with_target(
        probes: Vec<Vec<ProbByte>>,
        metric: DeviationMetric,
        target: DeviationTarget,
    ) -> Result<Self> {
        if probes.is_empty() {
            return Err(Error::Config("probe set must be non-empty".into()));
        }
        let n = probes[0].len();
        if n == 0 || probes.iter().any(|p| p.len() != n) {
            return Err(Error::Config("probes must share a nonzero column count".into()));
        }
        let ideal_probs = probes
            .iter()
            .map(|tuple| {
                tuple
                    .iter()
                    .map(|v| match target {
                        DeviationTarget::FullPeriod => v.full_period(),
                        DeviationTarget::Nominal => v.nominal(),
                    })
                    .product()
            })
            .collect();
        Ok(SeedObjective { probes, ideal_probs, metric, target, prefix_cycles: Vec::new() })
    }

    /// Also scores the deviation at the given cycle budgets (each in
    /// `1..255`), averaging with the full-period score.
    pub fn with_prefix_cycles(mut self, prefix_cycles: Vec<usize>) -> Result<Self> {
        if prefix_cycles.iter().any(|&c| c == 0 || c >= LFSR_PERIOD) {
            return Err(Error::Config("prefix budgets must lie in 1..255".into()));
        }
        self.prefix_cycles = prefix_cycles;
        Ok(self)
    }

    /// Uniform random byte tuples from a seeded generator.
    pub fn random_probes(
        n_columns: usize,
        n_probes: usize,
        rng_seed: u64,
        metric: DeviationMetric,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let probes = (0..n_probes)
            .map(|_| (0..n_columns).map(|_| ProbByte::new(rng.random())).collect())
            .collect();
        Self::new(probes, metric)
    }

    /// Probes drawn from a programmed image: the byte tuples of every
    /// (row, observation) pair when that set fits `max_image_probes`, or
    /// sampled pairs otherwise, plus `n_random_extra` uniform tuples.
    pub fn for_image(
        image: &MachineImage,
        n_random_extra: usize,
        rng_seed: u64,
        max_image_probes: usize,
        metric: DeviationMetric,
    ) -> Result<Self> {
        let cfg = image.config();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let total_obs = (cfg.entries_per_array as f64).powi(cfg.n_columns as i32);
        let exhaustive = total_obs * cfg.n_rows as f64 <= max_image_probes as f64;
        let mut probes = Vec::new();
        if exhaustive {
            let mut obs = vec![0usize; cfg.n_columns];
            loop {
                for row in 0..cfg.n_rows {
                    let tuple = obs
                        .iter()
                        .enumerate()
                        .map(|(col, &e)| image.byte(row, col, e))
                        .collect::<Result<Vec<_>>>()?;
                    probes.push(tuple);
                }
                if !next_observation(&mut obs, cfg.entries_per_array) {
                    break;
                }
            }
        } else {
            for _ in 0..max_image_probes {
                let row = rng.random_range(0..cfg.n_rows);
                let tuple = (0..cfg.n_columns)
                    .map(|col| image.byte(row, col, rng.random_range(0..cfg.entries_per_array)))
                    .collect::<Result<Vec<_>>>()?;
                probes.push(tuple);
            }
        }
        for _ in 0..n_random_extra {
            probes.push((0..cfg.n_columns).map(|_| ProbByte::new(rng.random())).collect());
        }
        Self::new(probes, metric)
    }

    /// Uses the caller's byte tuples directly.
    pub fn from_tuples(probes: Vec<Vec<ProbByte>>, metric: DeviationMetric) -> Result<Self> {
        Self::new(probes, metric)
    }

    pub fn n_columns(&self) -> usize {
        self.probes[0].len()
    }

    pub fn n_probes(&self) -> usize {
        self.probes.len()
    }

    /// Human-readable description embedded in reports.
    pub fn describe(&self) -> String {
        let budgets = if self.prefix_cycles.is_empty() {
            "full period".to_string()
        } else {
            format!("full period + prefixes {:?}", self.prefix_cycles)
        };
        format!(
            "{} probes, metric {:?}, target {:?}, scored at {} (AND-count deviation, probability units)",
            self.n_probes(),
            self.metric,
            self.target,
            budgets
        )
    }
}

fn next_observation(obs: &mut [usize], entries: usize) -> bool {
    for slot in obs.iter_mut().rev() {
        *slot += 1;
        if *slot < entries {
            return true;
        }
        *slot = 0;
    }
    false
}

/// 255 cycle bits packed into four words; bit t is cycle t.
type Mask = [u64; 4];

const FULL_MASK: Mask = [u64::MAX, u64::MAX, u64::MAX, (1u64 << 63) - 1];

#[inline]
fn and_popcount(masks: &[&Mask]) -> u32 {
    let mut acc = FULL_MASK;
    for m in masks {
        for (a, b) in acc.iter_mut().zip(m.iter()) {
            *a &= b;
        }
    }
    acc.iter().map(|w| w.count_ones()).sum()
}

/// Per-seed cumulative threshold masks: `cum[k]` has cycle bit t set iff the
/// register value at cycle t is at most k. A probe byte v selects
/// `cum[min(v+1, 255)]`.
struct ColumnMasks {
    cum: Vec<Mask>,
}

impl ColumnMasks {
    fn build(seed: LfsrState) -> Self {
        let mut cum = vec![[0u64; 4]; 256];
        for (t, state) in seed.period_states().enumerate() {
            cum[state.get() as usize][t / 64] |= 1u64 << (t % 64);
        }
        for k in 1..256 {
            let (lo, hi) = cum.split_at_mut(k);
            for (a, b) in hi[0].iter_mut().zip(lo[k - 1].iter()) {
                *a |= b;
            }
        }
        ColumnMasks { cum }
    }

    #[inline]
    fn mask(&self, v: ProbByte) -> &Mask {
        &self.cum[(v.value() as usize + 1).min(255)]
    }
}

/// Exact number of ones the AND of the columns' streams emits over one full
/// period, for one byte per column.
pub fn full_period_count(seeds: &[LfsrState], bytes: &[ProbByte]) -> u32 {
    assert_eq!(seeds.len(), bytes.len());
    let masks: Vec<ColumnMasks> = seeds.iter().map(|&s| ColumnMasks::build(s)).collect();
    let selected: Vec<&Mask> = masks.iter().zip(bytes).map(|(m, &v)| m.mask(v)).collect();
    and_popcount(&selected)
}

fn prefix_mask(cycles: usize) -> Mask {
    let mut m = [0u64; 4];
    for (w, word) in m.iter_mut().enumerate() {
        let lo = w * 64;
        if cycles >= lo + 64 {
            *word = u64::MAX;
        } else if cycles > lo {
            *word = (1u64 << (cycles - lo)) - 1;
        }
    }
    m
}

struct BudgetAccumulator {
    cycles: f64,
    mask: Option<Mask>,
    max_abs: f64,
    sq_sum: f64,
}

fn evaluate_with_masks(masks: &[&ColumnMasks], obj: &SeedObjective) -> f64 {
    let mut budgets: Vec<BudgetAccumulator> = Vec::with_capacity(1 + obj.prefix_cycles.len());
    budgets.push(BudgetAccumulator {
        cycles: LFSR_PERIOD as f64,
        mask: None,
        max_abs: 0.0,
        sq_sum: 0.0,
    });
    for &c in &obj.prefix_cycles {
        budgets.push(BudgetAccumulator {
            cycles: c as f64,
            mask: Some(prefix_mask(c)),
            max_abs: 0.0,
            sq_sum: 0.0,
        });
    }
    for (tuple, &p) in obj.probes.iter().zip(&obj.ideal_probs) {
        let mut acc = FULL_MASK;
        for (m, &v) in masks.iter().zip(tuple) {
            for (a, b) in acc.iter_mut().zip(m.mask(v).iter()) {
                *a &= b;
            }
        }
        for b in &mut budgets {
            let count: u32 = match &b.mask {
                None => acc.iter().map(|w| w.count_ones()).sum(),
                Some(pm) => acc.iter().zip(pm).map(|(w, m)| (w & m).count_ones()).sum(),
            };
            let dev = (count as f64 - b.cycles * p).abs() / b.cycles;
            b.max_abs = b.max_abs.max(dev);
            b.sq_sum += dev * dev;
        }
    }
    let n = obj.probes.len() as f64;
    let scores = budgets.iter().map(|b| match obj.metric {
        DeviationMetric::MaxAbs => b.max_abs,
        DeviationMetric::Rms => (b.sq_sum / n).sqrt(),
    });
    let k = budgets.len() as f64;
    scores.sum::<f64>() / k
}

/// Deviation of the exact full-period AND-counts from the ideal counts under
/// these seeds, aggregated per the objective, in probability units.
pub fn evaluate_seeds(tuple: &SeedTuple, obj: &SeedObjective) -> Result<f64> {
    if tuple.0.len() != obj.n_columns() {
        return Err(Error::Config(format!(
            "seed tuple has {} entries, probes have {} columns",
            tuple.0.len(),
            obj.n_columns()
        )));
    }
    let masks: Vec<ColumnMasks> = tuple.0.iter().map(|&s| ColumnMasks::build(s)).collect();
    let refs: Vec<&ColumnMasks> = masks.iter().collect();
    Ok(evaluate_with_masks(&refs, obj))
}

/// Default number of coordinate-descent restarts.
pub const DEFAULT_RESTARTS: usize = 8;

const MAX_SWEEPS: usize = 8;

/// Search outcome plus enough metadata to audit it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub seeds: SeedTuple,
    pub score: f64,
    pub evaluations: usize,
    pub restarts_run: usize,
    /// Score of each restart's random initial tuple.
    pub initial_scores: Vec<f64>,
    pub exhaustive: bool,
}

/// Searches for the seed tuple minimizing the objective.
///
/// Exhaustive when `255^n_columns` fits the budget; otherwise greedy
/// coordinate descent (full 255-value sweep per coordinate, repeated until
/// no improvement) restarted from [`DEFAULT_RESTARTS`] random tuples, each
/// restart holding an equal share of the budget. Deterministic given
/// `rng_seed`.
pub fn search_seeds(
    obj: &SeedObjective,
    n_columns: usize,
    budget: usize,
    rng_seed: u64,
) -> Result<SearchResult> {
    search_seeds_with(obj, n_columns, budget, DEFAULT_RESTARTS, rng_seed)
}

/// [`search_seeds`] with an explicit restart count.
pub fn search_seeds_with(
    obj: &SeedObjective,
    n_columns: usize,
    budget: usize,
    restarts: usize,
    rng_seed: u64,
) -> Result<SearchResult> {
    if n_columns != obj.n_columns() {
        return Err(Error::Config(format!(
            "objective probes have {} columns, search asked for {n_columns}",
            obj.n_columns()
        )));
    }
    if budget < n_columns * 254 {
        return Err(Error::Config(format!(
            "budget {budget} below one coordinate pass ({} evaluations)",
            n_columns * 254
        )));
    }
    if restarts == 0 {
        return Err(Error::Config("need at least one restart".into()));
    }

    let exhaustive_cost = 255f64.powi(n_columns as i32);
    if exhaustive_cost <= budget as f64 {
        return Ok(exhaustive_search(obj, n_columns));
    }

    let share = (budget / restarts).max(n_columns * 255 + 1);
    let outcomes: Vec<(SeedTuple, f64, usize, f64)> = (0..restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(crate::util::mix_seed(rng_seed, restart as u64));
            let start: Vec<LfsrState> = (0..n_columns)
                .map(|_| LfsrState::new(rng.random_range(1..=255)).expect("nonzero"))
                .collect();
            coordinate_descent(obj, start, share)
        })
        .collect();

    let evaluations = outcomes.iter().map(|o| o.2).sum();
    let initial_scores: Vec<f64> = outcomes.iter().map(|o| o.3).collect();
    let best = outcomes
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.1.partial_cmp(&b.1).unwrap().then(ia.cmp(ib)))
        .map(|(_, o)| o)
        .expect("at least one restart");
    Ok(SearchResult {
        seeds: best.0,
        score: best.1,
        evaluations,
        restarts_run: restarts,
        initial_scores,
        exhaustive: false,
    })
}

fn exhaustive_search(obj: &SeedObjective, n_columns: usize) -> SearchResult {
    let results: Vec<(Vec<u8>, f64, usize)> = (1..=255u8)
        .into_par_iter()
        .map(|first| {
            let mut masks = vec![ColumnMasks::build(LfsrState::new(first).unwrap())];
            let mut current = vec![first];
            let mut best: (Vec<u8>, f64) = (Vec::new(), f64::INFINITY);
            let mut evals = 0usize;
            enumerate_rest(obj, n_columns, &mut current, &mut masks, &mut best, &mut evals);
            (best.0, best.1, evals)
        })
        .collect();
    let evaluations = results.iter().map(|r| r.2).sum();
    let (tuple, score, _) = results
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
        .expect("nonempty");
    SearchResult {
        seeds: SeedTuple(tuple.iter().map(|&v| LfsrState::new(v).unwrap()).collect()),
        score,
        evaluations,
        restarts_run: 0,
        initial_scores: Vec::new(),
        exhaustive: true,
    }
}

fn enumerate_rest(
    obj: &SeedObjective,
    n_columns: usize,
    current: &mut Vec<u8>,
    masks: &mut Vec<ColumnMasks>,
    best: &mut (Vec<u8>, f64),
    evals: &mut usize,
) {
    if current.len() == n_columns {
        let refs: Vec<&ColumnMasks> = masks.iter().collect();
        let score = evaluate_with_masks(&refs, obj);
        *evals += 1;
        if score < best.1 {
            *best = (current.clone(), score);
        }
        return;
    }
    for v in 1..=255u8 {
        current.push(v);
        masks.push(ColumnMasks::build(LfsrState::new(v).unwrap()));
        enumerate_rest(obj, n_columns, current, masks, best, evals);
        masks.pop();
        current.pop();
    }
}

fn coordinate_descent(
    obj: &SeedObjective,
    start: Vec<LfsrState>,
    eval_budget: usize,
) -> (SeedTuple, f64, usize, f64) {
    let n = start.len();
    let mut masks: Vec<ColumnMasks> = start.iter().map(|&s| ColumnMasks::build(s)).collect();
    let mut current = start;
    let refs: Vec<&ColumnMasks> = masks.iter().collect();
    let mut score = evaluate_with_masks(&refs, obj);
    let initial_score = score;
    let mut evals = 1usize;

    for _ in 0..MAX_SWEEPS {
        let mut improved = false;
        for col in 0..n {
            if evals + 254 > eval_budget {
                return (SeedTuple(current), score, evals, initial_score);
            }
            // All candidate seeds for this coordinate, other columns fixed;
            // ties break to the smallest register value.
            let candidates: Vec<(u8, f64)> = (1..=255u8)
                .into_par_iter()
                .filter(|&v| v != current[col].get())
                .map(|v| {
                    let m = ColumnMasks::build(LfsrState::new(v).unwrap());
                    let trial: Vec<&ColumnMasks> = masks
                        .iter()
                        .enumerate()
                        .map(|(i, mk)| if i == col { &m } else { mk })
                        .collect();
                    (v, evaluate_with_masks(&trial, obj))
                })
                .collect();
            evals += candidates.len();
            let (best_v, best_s) = candidates
                .into_iter()
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
                .expect("254 candidates");
            if best_s + 1e-15 < score {
                score = best_s;
                current[col] = LfsrState::new(best_v).unwrap();
                masks[col] = ColumnMasks::build(current[col]);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    (SeedTuple(current), score, evals, initial_score)
}

/// Summary of a machine-versus-Bayes scatter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeviationStats {
    pub max_abs: f64,
    pub rms: f64,
    pub n_points: usize,
}

/// One point of the scatter: a row's measured full-period probability
/// against the Bayes-law product of its encoded likelihoods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub observation: Vec<usize>,
    pub row: usize,
    pub expected: f64,
    pub measured: f64,
}

/// Exhaustive machine-versus-Bayes scatter over every observation and row,
/// at full period. `expected` is the product of the nominal encoded
/// probabilities (v+1)/256; `measured` is count/255.
pub fn image_scatter(image: &MachineImage, seeds: &SeedTuple) -> Result<Vec<ScatterPoint>> {
    let cfg = image.config();
    if cfg.has_prior_column {
        return Err(Error::Config("scatter assumes a uniform prior (no prior column)".into()));
    }
    if seeds.0.len() != cfg.n_columns {
        return Err(Error::Config(format!(
            "expected {} seeds, got {}",
            cfg.n_columns,
            seeds.0.len()
        )));
    }
    let total = (cfg.entries_per_array as f64).powi(cfg.n_columns as i32) * cfg.n_rows as f64;
    if total > 5e6 {
        return Err(Error::Config(format!(
            "observation space too large for exhaustive scatter ({total:.0} points)"
        )));
    }
    let masks: Vec<ColumnMasks> = seeds.0.iter().map(|&s| ColumnMasks::build(s)).collect();
    let mut points = Vec::with_capacity(total as usize);
    let mut obs = vec![0usize; cfg.n_columns];
    loop {
        for row in 0..cfg.n_rows {
            let bytes = obs
                .iter()
                .enumerate()
                .map(|(col, &e)| image.byte(row, col, e))
                .collect::<Result<Vec<_>>>()?;
            let selected: Vec<&Mask> = masks.iter().zip(&bytes).map(|(m, &v)| m.mask(v)).collect();
            let count = and_popcount(&selected);
            let expected: f64 = bytes.iter().map(|v| v.nominal()).product();
            points.push(ScatterPoint {
                observation: obs.clone(),
                row,
                expected,
                measured: count as f64 / LFSR_PERIOD as f64,
            });
        }
        if !next_observation(&mut obs, cfg.entries_per_array) {
            break;
        }
    }
    Ok(points)
}

/// Deviation statistics of [`image_scatter`].
pub fn image_deviation(image: &MachineImage, seeds: &SeedTuple) -> Result<DeviationStats> {
    let points = image_scatter(image, seeds)?;
    let mut max_abs = 0.0f64;
    let mut sq = 0.0f64;
    for p in &points {
        let d = (p.measured - p.expected).abs();
        max_abs = max_abs.max(d);
        sq += d * d;
    }
    Ok(DeviationStats { max_abs, rms: (sq / points.len() as f64).sqrt(), n_points: points.len() })
}
