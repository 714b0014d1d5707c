//! Synthetic duplicate-detection tasks with known ground-truth attributions.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::engine::AttributionReport;
use crate::error::{OsvError, Result};
use crate::interventions::OrderMode;
use crate::reference_models::Rule;
use crate::rng::StreamKey;
use crate::vocab::Symbol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    BeginsWithDuplicate = 1,
    AdjacentDuplicate = 2,
    AnyDuplicate = 3,
}

impl Task {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Task::BeginsWithDuplicate),
            2 => Ok(Task::AdjacentDuplicate),
            3 => Ok(Task::AnyDuplicate),
            _ => Err(OsvError::Config(format!("unknown synthetic task {id}"))),
        }
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn rule(self) -> Rule {
        match self {
            Task::BeginsWithDuplicate => Rule::BeginsWithDuplicate,
            Task::AdjacentDuplicate => Rule::AdjacentDuplicate,
            Task::AnyDuplicate => Rule::AnyDuplicate,
        }
    }

    pub fn holds(self, tokens: &[u32]) -> bool {
        let syms: Vec<Symbol> = tokens.iter().copied().map(Symbol).collect();
        self.rule().label(&syms)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDatasetSpec {
    pub task: Task,
    pub vocab_size: usize,
    /// Sequence length `k`.
    pub length: usize,
    pub count: usize,
    /// Fraction of records in the training split.
    pub train_fraction: f64,
    pub positive_fraction: f64,
    pub seed: u64,
}

impl SyntheticDatasetSpec {
    pub fn new(task: Task, seed: u64) -> Self {
        Self {
            task,
            vocab_size: 200,
            length: 8,
            count: 10_000,
            train_fraction: 0.99,
            positive_fraction: 0.5,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSequence {
    pub label: u8,
    pub tokens: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<LabeledSequence>,
    pub test: Vec<LabeledSequence>,
}

/// Domain separator for dataset streams.
const DATASET_STREAM: u64 = 0x5359_4e54;

fn positive<R: Rng + ?Sized>(task: Task, vocab: u32, k: usize, rng: &mut R) -> Vec<u32> {
    let mut t: Vec<u32> = (0..k).map(|_| rng.random_range(0..vocab)).collect();
    match task {
        Task::BeginsWithDuplicate => t[1] = t[0],
        Task::AdjacentDuplicate => {
            let i = rng.random_range(0..k - 1);
            t[i + 1] = t[i];
        }
        Task::AnyDuplicate => {
            let i = rng.random_range(0..k);
            let mut j = rng.random_range(0..k - 1);
            if j >= i {
                j += 1;
            }
            t[j] = t[i];
        }
    }
    t
}

fn negative<R: Rng + ?Sized>(task: Task, vocab: u32, k: usize, rng: &mut R) -> Vec<u32> {
    // Rejection keeps the draw uniform over negatives; fall back to distinct
    // symbols (always negative) when the rule is nearly always satisfied.
    if task != Task::AnyDuplicate {
        for _ in 0..64 {
            let t: Vec<u32> = (0..k).map(|_| rng.random_range(0..vocab)).collect();
            if !task.holds(&t) {
                return t;
            }
        }
    }
    let symbols: Vec<u32> = (0..vocab).collect();
    let mut t: Vec<u32> = symbols.choose_multiple(rng, k).copied().collect();
    t.shuffle(rng);
    t
}

/// Generates a label-balanced dataset: positives are constructed directly,
/// negatives are sampled against the task rule. Deterministic per seed.
pub fn generate_dataset(spec: &SyntheticDatasetSpec) -> Result<Dataset> {
    let k = spec.length;
    if k < 2 {
        return Err(OsvError::Config("sequence length must be at least 2".into()));
    }
    if spec.vocab_size < k {
        return Err(OsvError::Config(format!(
            "vocab_size {} < length {k}: duplicate-free negatives cannot exist",
            spec.vocab_size
        )));
    }
    if !(0.0..=1.0).contains(&spec.train_fraction) || !(0.0..=1.0).contains(&spec.positive_fraction) {
        return Err(OsvError::Config("fractions must lie in [0, 1]".into()));
    }
    let vocab = u32::try_from(spec.vocab_size).map_err(|_| OsvError::Config("vocab_size too large".into()))?;
    let positives = (spec.count as f64 * spec.positive_fraction).round() as usize;

    let mut labels: Vec<u8> = (0..spec.count).map(|i| u8::from(i < positives)).collect();
    labels.shuffle(&mut StreamKey::new(spec.seed, DATASET_STREAM, u64::MAX, 0).rng());

    let records: Vec<LabeledSequence> = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let mut rng = StreamKey::new(spec.seed, DATASET_STREAM, i as u64, 1).rng();
            let tokens = if label == 1 {
                positive(spec.task, vocab, k, &mut rng)
            } else {
                negative(spec.task, vocab, k, &mut rng)
            };
            LabeledSequence { label, tokens }
        })
        .collect();

    let train_len = (spec.count as f64 * spec.train_fraction).floor() as usize;
    let mut train = records;
    let test = train.split_off(train_len.min(train.len()));
    Ok(Dataset { train, test })
}

/// One record per line: `label<TAB>space-separated token ids`.
pub fn write_records(records: &[LabeledSequence]) -> String {
    let mut out = String::new();
    for r in records {
        let tokens: Vec<String> = r.tokens.iter().map(u32::to_string).collect();
        let _ = writeln!(out, "{}\t{}", r.label, tokens.join(" "));
    }
    out
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<LabeledSequence>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || OsvError::Config(format!("malformed dataset line {}: {line:?}", lineno + 1));
        let (label, tokens) = line.split_once('\t').ok_or_else(bad)?;
        let label: u8 = label.parse().map_err(|_| bad())?;
        let tokens = tokens
            .split_whitespace()
            .map(|t| t.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        out.push(LabeledSequence { label, tokens });
    }
    Ok(out)
}

/// The first `count` sequences that begin with a duplicate.
pub fn select_w1(records: &[LabeledSequence], count: usize) -> Result<Vec<Vec<u32>>> {
    let selected: Vec<Vec<u32>> = records
        .iter()
        .filter(|r| Task::BeginsWithDuplicate.holds(&r.tokens))
        .take(count)
        .map(|r| r.tokens.clone())
        .collect();
    if selected.len() < count {
        return Err(OsvError::Insufficient(format!(
            "requested {count} sequences beginning with a duplicate, found {} (short by {})",
            selected.len(),
            count - selected.len()
        )));
    }
    Ok(selected)
}

/// Indicator attribution vectors for sequences that begin with a duplicate.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub occurrence_truth: Vec<f64>,
    pub order_truth: Vec<f64>,
    pub task: Task,
    pub mode: OrderMode,
}

impl GroundTruth {
    /// `x_0, x_1` always matter. `z_0, z_1` matter for the order-sensitive
    /// tasks 1 and 2 under either order mode; task 3 ignores order.
    pub fn for_w1(task: Task, n: usize, mode: OrderMode) -> Self {
        let mut occurrence_truth = vec![0.0; n];
        let mut order_truth = vec![0.0; n];
        for i in 0..n.min(2) {
            occurrence_truth[i] = 1.0;
            if task != Task::AnyDuplicate {
                order_truth[i] = 1.0;
            }
        }
        Self {
            occurrence_truth,
            order_truth,
            task,
            mode,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.occurrence_truth
            .iter()
            .chain(&self.order_truth)
            .copied()
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrelationScope {
    /// `p_a`: all `2n` features.
    All,
    /// `p`: the `n` occurrence features.
    OccurrenceOnly,
}

pub fn pearson_coefficient(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(OsvError::Contract(format!(
            "cannot correlate vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(OsvError::UndefinedCorrelation("zero-variance vector".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation of an explanation with ground truth. Order attributions of a
/// plain SV report are zero, which is what `p_a` expects.
pub fn pearson(explanation: &AttributionReport, truth: &GroundTruth, scope: CorrelationScope) -> Result<f64> {
    let n = explanation.len();
    if truth.occurrence_truth.len() != n {
        return Err(OsvError::Contract(format!(
            "explanation has {n} slots, ground truth {}",
            truth.occurrence_truth.len()
        )));
    }
    match scope {
        CorrelationScope::All => pearson_coefficient(&explanation.values(), &truth.values()),
        CorrelationScope::OccurrenceOnly => {
            pearson_coefficient(&explanation.occurrence_values, &truth.occurrence_truth)
        }
    }
}
