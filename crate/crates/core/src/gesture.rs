//! End-to-end gesture recognition: synthetic IMU dataset generation,
//! feature extraction, Gaussian likelihood fitting with broadening,
//! discretization to machine observations, and train/test evaluation.

use crate::error::{Error, Result};
use crate::machine::{
    decide_first_one, decide_max_count, run_inference, DecisionStrategy, MachineImage, Observation,
};
use crate::memory::FaultModel;
use crate::oracle::{exact_posterior, LikelihoodTable};
use crate::rng::LfsrState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

pub const SAMPLE_RATE_HZ: f64 = 100.0;
pub const N_CLASSES: usize = 4;
pub const N_FEATURES: usize = 10;
/// Features kept for the machine; the others are dropped to save columns.
pub const DEFAULT_SELECTED_FEATURES: [usize; 6] = [1, 4, 5, 6, 7, 9];
pub const DEFAULT_BROADENING: f64 = 1.3;
/// Recordings per (subject, class) pair used for training; the rest test.
pub const TRAIN_REPS: usize = 20;

/// One recorded gesture: gravity-free accelerations at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuTrace {
    pub samples: Vec<[f64; 3]>,
    pub sample_rate_hz: f64,
    pub label: usize,
    pub subject: usize,
    pub rep: usize,
}

/// Sum-of-sinusoids motif table: per class, per axis, (frequency Hz,
/// amplitude m/s^2) pairs. Classes share the overall energy scale and differ
/// in how amplitude and frequency are allocated across axes, which keeps the
/// per-feature spreads comparable across classes.
const MOTIFS: [[&[(f64, f64)]; 3]; N_CLASSES] = [
    [&[(1.0, 2.5), (1.8, 0.9)], &[(1.3, 1.6), (2.0, 0.6)], &[(1.1, 1.3), (1.7, 0.5)]],
    [&[(1.4, 1.6), (2.2, 0.6)], &[(1.1, 2.5), (1.9, 0.9)], &[(1.3, 1.4), (2.1, 0.5)]],
    [&[(1.2, 1.4), (2.0, 0.5)], &[(1.5, 1.5), (0.9, 0.7)], &[(1.4, 2.4), (2.2, 0.9)]],
    [&[(2.0, 2.0), (1.1, 0.7)], &[(2.2, 1.9), (1.2, 0.6)], &[(1.9, 1.9), (1.0, 0.7)]],
];

/// Per-subject additive amplitude offset range (uniform, m/s^2).
const SUBJECT_SPREAD: f64 = 0.15;
/// Per-repetition additive amplitude jitter (normal sigma, m/s^2).
const REP_JITTER: f64 = 0.10;
/// Per-sample measurement noise (normal sigma, m/s^2).
const NOISE_SIGMA: f64 = 0.25;
const MIN_DURATION_S: f64 = 1.3;
const MAX_DURATION_S: f64 = 3.0;

/// Generates the labeled synthetic dataset. Deterministic given `rng_seed`:
/// subject offsets are drawn first, then per (subject, class, rep) the
/// duration, per-motif jitter and phases, then the sample noise.
pub fn generate_dataset(n_subjects: usize, reps_per_class: usize, rng_seed: u64) -> Vec<ImuTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let subject_offsets: Vec<[f64; 3]> = (0..n_subjects)
        .map(|_| {
            [
                rng.random_range(-SUBJECT_SPREAD..SUBJECT_SPREAD),
                rng.random_range(-SUBJECT_SPREAD..SUBJECT_SPREAD),
                rng.random_range(-SUBJECT_SPREAD..SUBJECT_SPREAD),
            ]
        })
        .collect();
    let mut traces = Vec::with_capacity(n_subjects * N_CLASSES * reps_per_class);
    for subject in 0..n_subjects {
        for label in 0..N_CLASSES {
            for rep in 0..reps_per_class {
                let duration = rng.random_range(MIN_DURATION_S..MAX_DURATION_S);
                let n = (duration * SAMPLE_RATE_HZ) as usize;
                let mut samples = vec![[0.0f64; 3]; n];
                for axis in 0..3 {
                    for &(freq, amp) in MOTIFS[label][axis] {
                        let jitter = std_normal.sample(&mut rng) * REP_JITTER;
                        let amplitude =
                            (amp + subject_offsets[subject][axis] + jitter).max(0.05);
                        let phase = rng.random_range(0.0..std::f64::consts::TAU);
                        for (t, s) in samples.iter_mut().enumerate() {
                            let time = t as f64 / SAMPLE_RATE_HZ;
                            s[axis] +=
                                amplitude * (std::f64::consts::TAU * freq * time + phase).sin();
                        }
                    }
                }
                for s in &mut samples {
                    for axis in 0..3 {
                        s[axis] += std_normal.sample(&mut rng) * NOISE_SIGMA;
                    }
                }
                traces.push(ImuTrace {
                    samples,
                    sample_rate_hz: SAMPLE_RATE_HZ,
                    label,
                    subject,
                    rep,
                });
            }
        }
    }
    traces
}

/// Ten features per trace:
/// F0 mean acceleration norm; F1..F3 max absolute acceleration per axis;
/// F4..F6 acceleration variance per axis; F7 mean jerk norm; F8, F9 max
/// absolute jerk on x and y. Jerk is the finite difference of acceleration
/// times the sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

pub fn extract_features(trace: &ImuTrace) -> Result<FeatureVector> {
    let n = trace.samples.len();
    if n < 2 {
        return Err(Error::Config("trace needs at least 2 samples (jerk undefined)".into()));
    }
    let mut f = [0.0f64; N_FEATURES];
    let nf = n as f64;
    let mut mean = [0.0f64; 3];
    for s in &trace.samples {
        f[0] += (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
        for axis in 0..3 {
            f[1 + axis] = f[1 + axis].max(s[axis].abs());
            mean[axis] += s[axis];
        }
    }
    f[0] /= nf;
    for axis in 0..3 {
        mean[axis] /= nf;
    }
    for s in &trace.samples {
        for axis in 0..3 {
            let d = s[axis] - mean[axis];
            f[4 + axis] += d * d;
        }
    }
    for axis in 0..3 {
        f[4 + axis] /= nf;
    }
    for w in trace.samples.windows(2) {
        let jerk = [
            (w[1][0] - w[0][0]) * trace.sample_rate_hz,
            (w[1][1] - w[0][1]) * trace.sample_rate_hz,
            (w[1][2] - w[0][2]) * trace.sample_rate_hz,
        ];
        f[7] += (jerk[0] * jerk[0] + jerk[1] * jerk[1] + jerk[2] * jerk[2]).sqrt();
        f[8] = f[8].max(jerk[0].abs());
        f[9] = f[9].max(jerk[1].abs());
    }
    f[7] /= (n - 1) as f64;
    Ok(FeatureVector(f))
}

/// Gaussian fit per (class, feature) with broadened standard deviations,
/// plus the per-feature discretization range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub means: Vec<[f64; N_FEATURES]>,
    pub stds: Vec<[f64; N_FEATURES]>,
    pub bin_min: [f64; N_FEATURES],
    pub bin_max: [f64; N_FEATURES],
    pub broadening: f64,
}

impl GaussianModel {
    pub fn n_classes(&self) -> usize {
        self.means.len()
    }

    pub fn to_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)
            .map_err(|e| Error::Config(format!("model serialization failed: {e}")))
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        serde_json::from_reader(r).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })
    }

    /// Bin index of a feature value: linear in `[bin_min, bin_max)`,
    /// clamped to the edge bins outside the range.
    pub fn bin(&self, feature: usize, value: f64, n_bins: usize) -> usize {
        let lo = self.bin_min[feature];
        let hi = self.bin_max[feature];
        let x = (value - lo) / (hi - lo) * n_bins as f64;
        (x.floor().max(0.0) as usize).min(n_bins - 1)
    }

    /// Machine observation for a feature vector over the selected features.
    pub fn observation(
        &self,
        features: &FeatureVector,
        selected: &[usize],
        n_bins: usize,
    ) -> Observation {
        Observation(selected.iter().map(|&f| self.bin(f, features.0[f], n_bins)).collect())
    }
}

/// Train/test split: the first [`TRAIN_REPS`] repetitions of every
/// (subject, class) pair train the model, the rest test it.
pub fn split_train_test(data: &[ImuTrace]) -> (Vec<&ImuTrace>, Vec<&ImuTrace>) {
    data.iter().partition(|t| t.rep < TRAIN_REPS)
}

/// Fits per-(class, feature) sample mean and standard deviation, multiplies
/// every std by `broadening`, and records per-feature bin ranges as the
/// training min/max widened by a 5% margin. Degenerate stds are floored at
/// 1e-6 of the bin range.
pub fn train(train_set: &[&ImuTrace], broadening: f64) -> Result<GaussianModel> {
    if broadening <= 0.0 {
        return Err(Error::Range("broadening must be positive".into()));
    }
    let n_classes = train_set.iter().map(|t| t.label + 1).max().unwrap_or(0);
    if n_classes == 0 {
        return Err(Error::Config("empty training set".into()));
    }
    let features: Vec<(usize, FeatureVector)> = train_set
        .iter()
        .map(|t| extract_features(t).map(|f| (t.label, f)))
        .collect::<Result<Vec<_>>>()?;
    for class in 0..n_classes {
        let count = features.iter().filter(|(l, _)| *l == class).count();
        if count < 2 {
            return Err(Error::Config(format!("class {class} has {count} training samples, need 2")));
        }
    }

    let mut bin_min = [f64::INFINITY; N_FEATURES];
    let mut bin_max = [f64::NEG_INFINITY; N_FEATURES];
    for (_, f) in &features {
        for i in 0..N_FEATURES {
            bin_min[i] = bin_min[i].min(f.0[i]);
            bin_max[i] = bin_max[i].max(f.0[i]);
        }
    }
    for i in 0..N_FEATURES {
        let margin = 0.05 * (bin_max[i] - bin_min[i]);
        bin_min[i] -= margin;
        bin_max[i] += margin;
        if bin_max[i] <= bin_min[i] {
            // Constant feature: open a token range around it.
            bin_min[i] -= 0.5;
            bin_max[i] += 0.5;
        }
    }

    let mut means = vec![[0.0f64; N_FEATURES]; n_classes];
    let mut stds = vec![[0.0f64; N_FEATURES]; n_classes];
    for class in 0..n_classes {
        let class_features: Vec<&FeatureVector> =
            features.iter().filter(|(l, _)| *l == class).map(|(_, f)| f).collect();
        let m = class_features.len() as f64;
        for i in 0..N_FEATURES {
            let mean = class_features.iter().map(|f| f.0[i]).sum::<f64>() / m;
            let var = class_features.iter().map(|f| (f.0[i] - mean).powi(2)).sum::<f64>()
                / (m - 1.0);
            let floor = 1e-6 * (bin_max[i] - bin_min[i]);
            means[class][i] = mean;
            stds[class][i] = (var.sqrt() * broadening).max(floor);
        }
    }
    Ok(GaussianModel { means, stds, bin_min, bin_max, broadening })
}

/// Evaluates each class's Gaussian pdf at every bin center for the selected
/// features, producing a likelihood table ready for the compiler.
pub fn discretize(
    model: &GaussianModel,
    selected: &[usize],
    n_bins: usize,
) -> Result<LikelihoodTable> {
    if selected.is_empty() {
        return Err(Error::Config("feature selection must be non-empty".into()));
    }
    if let Some(&bad) = selected.iter().find(|&&f| f >= N_FEATURES) {
        return Err(Error::Bounds(format!("feature index {bad} out of range")));
    }
    let values = (0..model.n_classes())
        .map(|class| {
            selected
                .iter()
                .map(|&feature| {
                    let lo = model.bin_min[feature];
                    let width = (model.bin_max[feature] - lo) / n_bins as f64;
                    let mean = model.means[class][feature];
                    let std = model.stds[class][feature];
                    (0..n_bins)
                        .map(|b| {
                            let center = lo + (b as f64 + 0.5) * width;
                            let z = (center - mean) / std;
                            (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    LikelihoodTable::new(values, None)
}

/// Accuracy report over a test set, machine and exact-Bayes oracle side by
/// side on identical (discretized) observations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: DecisionStrategy,
    pub cycles: usize,
    pub n_samples: usize,
    pub accuracy: f64,
    pub oracle_accuracy: f64,
    /// `confusion[true_label][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub low_confidence_count: usize,
    pub mean_cycles_used: f64,
}

/// Labeled machine observations for a set of traces.
pub fn observations(
    model: &GaussianModel,
    selected: &[usize],
    n_bins: usize,
    set: &[&ImuTrace],
) -> Result<Vec<(Observation, usize)>> {
    set.iter()
        .map(|t| {
            extract_features(t).map(|f| (model.observation(&f, selected, n_bins), t.label))
        })
        .collect()
}

/// Runs the machine on every test sample and scores against the labels;
/// the exact-Bayes oracle (same table, same binned observations) is scored
/// alongside.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    image: &MachineImage,
    table: &LikelihoodTable,
    samples: &[(Observation, usize)],
    seeds: &[LfsrState],
    strategy: DecisionStrategy,
    cycles: usize,
    fm: &FaultModel,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Config("empty test set".into()));
    }
    let n_classes = image.config().n_rows;
    let outcomes: Vec<(usize, bool, usize)> = samples
        .par_iter()
        .map(|(obs, _)| match strategy {
            DecisionStrategy::MaxCount => {
                let trace = run_inference(image, obs, seeds, cycles, fm)?;
                let d = decide_max_count(&trace);
                Ok((d.row, d.low_confidence, cycles))
            }
            DecisionStrategy::FirstOne => {
                let d = decide_first_one(image, obs, seeds, cycles, fm)?;
                Ok((d.row, d.low_confidence, d.cycles_used))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    let mut correct = 0usize;
    let mut low_confidence = 0usize;
    let mut cycles_sum = 0f64;
    for ((_, label), (pred, low, used)) in samples.iter().zip(&outcomes) {
        confusion[*label][*pred] += 1;
        if pred == label {
            correct += 1;
        }
        if *low {
            low_confidence += 1;
        }
        cycles_sum += *used as f64;
    }

    let mut oracle_correct = 0usize;
    for (obs, label) in samples {
        let posterior = exact_posterior(table, obs)?;
        let pred = posterior
            .probs
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if pred == *label {
            oracle_correct += 1;
        }
    }

    Ok(EvalReport {
        strategy,
        cycles,
        n_samples: samples.len(),
        accuracy: correct as f64 / samples.len() as f64,
        oracle_accuracy: oracle_correct as f64 / samples.len() as f64,
        confusion,
        low_confidence_count: low_confidence,
        mean_cycles_used: cycles_sum / samples.len() as f64,
    })
}

/// Writes traces as CSV: `subject,class,rep,t,ax,ay,az` with `t` a sample
/// index at the fixed 100 Hz rate.
pub fn write_dataset_csv<W: Write>(traces: &[ImuTrace], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["subject", "class", "rep", "t", "ax", "ay", "az"])
        .map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
    for tr in traces {
        for (t, s) in tr.samples.iter().enumerate() {
            wtr.write_record([
                tr.subject.to_string(),
                tr.label.to_string(),
                tr.rep.to_string(),
                t.to_string(),
                format!("{}", s[0]),
                format!("{}", s[1]),
                format!("{}", s[2]),
            ])
            .map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads the CSV written by [`write_dataset_csv`]. Samples must be grouped
/// by (subject, class, rep) and ordered by `t` within each group.
pub fn read_dataset_csv<R: Read>(r: R) -> Result<Vec<ImuTrace>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let mut traces: Vec<ImuTrace> = Vec::new();
    let mut current: Option<(usize, usize, usize)> = None;
    for (i, record) in rdr.records().enumerate() {
        let lineno = i + 2;
        let record = record.map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        if record.len() != 7 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 7 fields, got {}", record.len()),
            });
        }
        let p_usize = |s: &str, what: &str| {
            s.trim().parse::<usize>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad {what} '{s}'"),
            })
        };
        let p_f64 = |s: &str, what: &str| {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad {what} '{s}'"),
            })
        };
        let key = (p_usize(&record[0], "subject")?, p_usize(&record[1], "class")?, p_usize(&record[2], "rep")?);
        let sample = [p_f64(&record[4], "ax")?, p_f64(&record[5], "ay")?, p_f64(&record[6], "az")?];
        if current != Some(key) {
            current = Some(key);
            traces.push(ImuTrace {
                samples: Vec::new(),
                sample_rate_hz: SAMPLE_RATE_HZ,
                label: key.1,
                subject: key.0,
                rep: key.2,
            });
        }
        traces.last_mut().expect("pushed above").samples.push(sample);
    }
    if traces.is_empty() {
        return Err(Error::Parse { line: 2, msg: "no data rows".into() });
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_counts_and_determinism() {
        let a = generate_dataset(10, 26, 42);
        assert_eq!(a.len(), 1040);
        for class in 0..N_CLASSES {
            assert_eq!(a.iter().filter(|t| t.label == class).count(), 260);
        }
        let b = generate_dataset(10, 26, 42);
        assert_eq!(a, b);
        let c = generate_dataset(10, 26, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn durations_in_range() {
        let data = generate_dataset(2, 3, 7);
        for t in &data {
            let secs = t.samples.len() as f64 / SAMPLE_RATE_HZ;
            assert!((1.2..=3.0).contains(&secs), "duration {secs}");
        }
    }

    #[test]
    fn features_of_null_signal_are_zero() {
        let tr = ImuTrace {
            samples: vec![[0.0; 3]; 100],
            sample_rate_hz: SAMPLE_RATE_HZ,
            label: 0,
            subject: 0,
            rep: 0,
        };
        let f = extract_features(&tr).unwrap();
        for v in f.0 {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn features_of_pure_x_sine() {
        let n = 200;
        let samples: Vec<[f64; 3]> = (0..n)
            .map(|t| {
                let x = (std::f64::consts::TAU * 2.0 * t as f64 / SAMPLE_RATE_HZ).sin();
                [x, 0.0, 0.0]
            })
            .collect();
        let tr = ImuTrace { samples, sample_rate_hz: SAMPLE_RATE_HZ, label: 0, subject: 0, rep: 0 };
        let f = extract_features(&tr).unwrap();
        assert!((f.0[1] - 1.0).abs() < 0.02, "F1 = {}", f.0[1]);
        assert_eq!(f.0[2], 0.0);
        assert_eq!(f.0[3], 0.0);
    }

    #[test]
    fn feature_homogeneity_under_scaling() {
        let data = generate_dataset(1, 1, 3);
        let tr = &data[0];
        let doubled = ImuTrace {
            samples: tr.samples.iter().map(|s| [2.0 * s[0], 2.0 * s[1], 2.0 * s[2]]).collect(),
            ..tr.clone()
        };
        let f1 = extract_features(tr).unwrap();
        let f2 = extract_features(&doubled).unwrap();
        for i in [0, 1, 2, 3, 7, 8, 9] {
            assert!((f2.0[i] - 2.0 * f1.0[i]).abs() < 1e-9, "feature {i}");
        }
        for i in 4..7 {
            assert!((f2.0[i] - 4.0 * f1.0[i]).abs() < 1e-9, "feature {i}");
        }
    }

    #[test]
    fn jerk_needs_two_samples() {
        let tr = ImuTrace {
            samples: vec![[1.0; 3]],
            sample_rate_hz: SAMPLE_RATE_HZ,
            label: 0,
            subject: 0,
            rep: 0,
        };
        assert!(extract_features(&tr).is_err());
    }

    #[test]
    fn broadening_scales_stds_exactly() {
        let data = generate_dataset(3, 22, 11);
        let (train_set, _) = split_train_test(&data);
        let plain = train(&train_set, 1.0).unwrap();
        let broad = train(&train_set, 1.3).unwrap();
        for class in 0..N_CLASSES {
            for i in 0..N_FEATURES {
                assert!((broad.stds[class][i] - 1.3 * plain.stds[class][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn split_is_twenty_per_pair() {
        let data = generate_dataset(10, 26, 42);
        let (train_set, test_set) = split_train_test(&data);
        assert_eq!(train_set.len(), 10 * N_CLASSES * 20);
        assert_eq!(test_set.len(), 10 * N_CLASSES * 6);
    }

    #[test]
    fn gaussian_recovery_on_training_data() {
        // With broadening 1.0 the fitted means must sit within 3 standard
        // errors of the class sample distribution.
        let data = generate_dataset(10, 26, 42);
        let (train_set, _) = split_train_test(&data);
        let model = train(&train_set, 1.0).unwrap();
        for class in 0..N_CLASSES {
            let class_feats: Vec<FeatureVector> = train_set
                .iter()
                .filter(|t| t.label == class)
                .map(|t| extract_features(t).unwrap())
                .collect();
            let m = class_feats.len() as f64;
            for i in 0..N_FEATURES {
                let mean = class_feats.iter().map(|f| f.0[i]).sum::<f64>() / m;
                let se = model.stds[class][i] / m.sqrt();
                assert!(
                    (model.means[class][i] - mean).abs() <= 3.0 * se + 1e-12,
                    "class {class} feature {i}"
                );
            }
        }
    }

    #[test]
    fn discretize_peaks_at_class_mean() {
        let data = generate_dataset(5, 22, 9);
        let (train_set, _) = split_train_test(&data);
        let model = train(&train_set, DEFAULT_BROADENING).unwrap();
        let table = discretize(&model, &DEFAULT_SELECTED_FEATURES, 512).unwrap();
        assert_eq!(table.n_rows(), N_CLASSES);
        assert_eq!(table.n_columns(), 6);
        assert_eq!(table.n_entries(), 512);
        for class in 0..N_CLASSES {
            for (col, &feature) in DEFAULT_SELECTED_FEATURES.iter().enumerate() {
                let mean_bin = model.bin(feature, model.means[class][feature], 512);
                let col_values = &table.values[class][col];
                let peak = col_values
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                    .unwrap()
                    .0;
                assert!(
                    (peak as i64 - mean_bin as i64).abs() <= 1,
                    "class {class} col {col}: peak {peak} vs mean bin {mean_bin}"
                );
            }
        }
    }

    #[test]
    fn out_of_range_observations_clamp() {
        let data = generate_dataset(2, 4, 1);
        let (train_set, _) = split_train_test(&data);
        let model = train(&train_set, DEFAULT_BROADENING).unwrap();
        assert_eq!(model.bin(0, model.bin_min[0] - 100.0, 512), 0);
        assert_eq!(model.bin(0, model.bin_max[0] + 100.0, 512), 511);
    }

    #[test]
    fn dataset_csv_roundtrip() {
        let data = generate_dataset(2, 2, 5);
        let mut buf = Vec::new();
        write_dataset_csv(&data, &mut buf).unwrap();
        let back = read_dataset_csv(&buf[..]).unwrap();
        assert_eq!(data.len(), back.len());
        for (a, b) in data.iter().zip(&back) {
            assert_eq!(a.subject, b.subject);
            assert_eq!(a.label, b.label);
            assert_eq!(a.rep, b.rep);
            assert_eq!(a.samples.len(), b.samples.len());
            for (sa, sb) in a.samples.iter().zip(&b.samples) {
                for axis in 0..3 {
                    assert!((sa[axis] - sb[axis]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let data = generate_dataset(3, 22, 13);
        let (train_set, test_set) = split_train_test(&data);
        let model = train(&train_set, DEFAULT_BROADENING).unwrap();
        let table = discretize(&model, &DEFAULT_SELECTED_FEATURES, 512).unwrap();
        let image = crate::oracle::compile(&table).unwrap();
        let samples = observations(&model, &DEFAULT_SELECTED_FEATURES, 512, &test_set).unwrap();
        let seeds = crate::rng::seed_load(&[0x2F, 0x91, 0x4C, 0xD3, 0x38, 0x7A], 6).unwrap();
        let report = evaluate(
            &image,
            &table,
            &samples,
            &seeds,
            DecisionStrategy::MaxCount,
            255,
            &FaultModel::noiseless(0),
        )
        .unwrap();
        for class in 0..N_CLASSES {
            let row_sum: usize = report.confusion[class].iter().sum();
            let class_count = test_set.iter().filter(|t| t.label == class).count();
            assert_eq!(row_sum, class_count);
        }
        assert!(report.accuracy > 0.5);
    }
}
