//! Permutation-sampling estimators.
//!
//! Each sample walks one uniformly random ordering of the players and records
//! every player's marginal contribution to its predecessors, with coalition
//! values estimated from `q_samples × g_samples` intervened sequences.
//! Samples are generated in fixed-size blocks (in parallel when enabled) and
//! reduced on one thread in sample order, with the stopping rule checked after
//! every full pass over the instances. The result is therefore identical for
//! any worker count.

use crate::engine::{AttributionReport, Diagnostics, ModelContext};
use crate::error::{contract, ModelError, OsvError, Result};
use crate::exec::Execution;
use crate::interventions::{order_support_size, realize, sample_occurrence, sample_order, InterventionSpec, OrderMode};
use crate::rng::StreamKey;
use crate::sequence::{Coalition, Sequence};
use crate::vocab::Symbol;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    /// Order-intervention draws per coalition.
    pub q_samples: usize,
    /// Occurrence-intervention draws per order draw.
    pub g_samples: usize,
    /// Convergence factor `t`: stop once every standard error is at most
    /// `t × (max φ̂ - min φ̂)`.
    pub convergence: f64,
    /// Marginal samples per feature (passes times instances) required before
    /// the stopping rule is consulted.
    pub min_samples: usize,
    /// Passes over the instances after which the run stops unconverged.
    pub max_permutations: usize,
    /// Rows per model call.
    pub batch_size: usize,
    /// Samples scheduled per parallel block.
    pub block_size: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            q_samples: 4,
            g_samples: 5,
            convergence: 0.005,
            min_samples: 8,
            max_permutations: 100_000,
            batch_size: 64,
            block_size: 32,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(OsvError::Config(msg.to_owned()));
        if self.q_samples == 0 || self.g_samples == 0 {
            return bad("q_samples and g_samples must be at least 1");
        }
        if !(self.convergence > 0.0 && self.convergence < 1.0) {
            return bad("convergence factor must lie in (0, 1)");
        }
        if self.max_permutations == 0 || self.min_samples < 2 {
            return bad("need max_permutations >= 1 and min_samples >= 2");
        }
        if self.batch_size == 0 || self.block_size == 0 {
            return bad("batch_size and block_size must be at least 1");
        }
        Ok(())
    }
}

/// Draws the intervened sequences used to value one coalition. An
/// intervention with a single-point support is drawn once instead of
/// `q_samples` or `g_samples` times.
fn draw_coalition<R: Rng + ?Sized>(
    seq: &Sequence,
    coalition: &Coalition,
    intervention: &InterventionSpec,
    cfg: &EstimatorConfig,
    rng: &mut R,
    out: &mut Vec<Vec<Symbol>>,
) -> Result<usize> {
    let n = seq.len();
    let occ = coalition.occurrence_mask();
    let ord = if intervention.order == OrderMode::Identity {
        vec![true; n]
    } else {
        coalition.order_mask()
    };
    let q_draws = if order_support_size(intervention.order, n, &ord) == 1 {
        1
    } else {
        cfg.q_samples
    };
    let g_draws = if (0..n).all(|i| occ[i] || intervention.occurrence.is_deterministic_at(i)) {
        1
    } else {
        cfg.g_samples
    };
    for _ in 0..q_draws {
        let z = sample_order(intervention.order, n, &ord, rng)?;
        for _ in 0..g_draws {
            let x = sample_occurrence(&intervention.occurrence, seq.tokens(), &occ, rng)?;
            out.push(realize(&x, &z)?);
        }
    }
    Ok(q_draws * g_draws)
}

/// Scores `rows`, attributing a failed batch to the coalition owning its
/// first row.
fn evaluate_owned(
    ctx: &ModelContext<'_>,
    rows: &[Vec<Symbol>],
    owners: &[Coalition],
    owner_of_row: &[usize],
) -> Result<Vec<f64>> {
    let chunk = ctx.batch_size.min(ctx.model.max_batch()).max(1);
    let mut out = Vec::with_capacity(rows.len());
    for (k, batch) in rows.chunks(chunk).enumerate() {
        let refs: Vec<&[Symbol]> = batch.iter().map(Vec::as_slice).collect();
        let values = ctx.values(&refs).map_err(|source| OsvError::Evaluation {
            coalition: owners[owner_of_row[k * chunk]].id(),
            source,
        })?;
        out.extend(values);
    }
    Ok(out)
}

/// Monte-Carlo estimate of `E_{z~q} E_{x~g} f^y(π_z(x))` for one coalition.
pub fn estimate_value<R: Rng + ?Sized>(
    ctx: &ModelContext<'_>,
    seq: &Sequence,
    coalition: &Coalition,
    intervention: &InterventionSpec,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    contract!(coalition.n() == seq.len(), "coalition is over {} slots, sequence has {}", coalition.n(), seq.len());
    let mut rows = Vec::new();
    draw_coalition(seq, coalition, intervention, cfg, rng, &mut rows)?;
    let owner = vec![0; rows.len()];
    let values = evaluate_owned(&ModelContext { batch_size: cfg.batch_size, ..*ctx }, &rows, std::slice::from_ref(coalition), &owner)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

struct Sample {
    marginals: Vec<f64>,
    empty: f64,
    evaluations: u64,
    coalitions: u64,
}

struct Sampler<'a> {
    ctx: ModelContext<'a>,
    intervention: &'a InterventionSpec,
    cfg: &'a EstimatorConfig,
}

impl Sampler<'_> {
    fn sample(&self, instance: usize, seq: &Sequence, full_value: f64, permutation: usize) -> Result<Sample> {
        let n = seq.len();
        let players = if self.intervention.order == OrderMode::Identity { n } else { 2 * n };
        let seed = self.cfg.seed;
        let key = |step: usize| StreamKey::new(seed, instance as u64, permutation as u64, step as u64);

        let mut sigma: Vec<usize> = (0..players).collect();
        sigma.shuffle(&mut key(0).rng());

        let mut coalitions = Vec::with_capacity(players);
        let mut current = Coalition::empty(n);
        for &p in &sigma[..players - 1] {
            coalitions.push(current.clone());
            current.insert(p)?;
        }
        coalitions.push(current);

        let mut rows = Vec::new();
        let mut owner_of_row = Vec::new();
        let mut spans = Vec::with_capacity(coalitions.len());
        for (j, c) in coalitions.iter().enumerate() {
            let start = rows.len();
            draw_coalition(seq, c, self.intervention, self.cfg, &mut key(j + 1).rng(), &mut rows)?;
            owner_of_row.resize(rows.len(), j);
            spans.push(start..rows.len());
        }
        // The model is deterministic, so each distinct sequence is scored
        // once per permutation and the original reuses `full_value`.
        let mut slot_of: HashMap<&[Symbol], usize> = HashMap::new();
        let mut unique: Vec<Vec<Symbol>> = Vec::new();
        let mut unique_owner = Vec::new();
        let row_slot: Vec<Option<usize>> = rows
            .iter()
            .zip(&owner_of_row)
            .map(|(row, &owner)| {
                if row.as_slice() == seq.tokens() {
                    return None;
                }
                Some(*slot_of.entry(row.as_slice()).or_insert_with(|| {
                    unique.push(row.clone());
                    unique_owner.push(owner);
                    unique.len() - 1
                }))
            })
            .collect();
        let unique_values = evaluate_owned(&self.ctx, &unique, &coalitions, &unique_owner)?;
        let scored: Vec<f64> = row_slot
            .iter()
            .map(|slot| slot.map_or(full_value, |u| unique_values[u]))
            .collect();

        let mut values: Vec<f64> = spans
            .into_iter()
            .map(|r| {
                let len = r.len() as f64;
                scored[r].iter().sum::<f64>() / len
            })
            .collect();
        values.push(full_value);

        let mut marginals = vec![0.0; 2 * n];
        for (j, &p) in sigma.iter().enumerate() {
            marginals[p] = values[j + 1] - values[j];
        }
        Ok(Sample {
            marginals,
            empty: values[0],
            evaluations: unique.len() as u64,
            coalitions: coalitions.len() as u64,
        })
    }
}

/// Streaming mean and variance.
#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn stderr(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
    }
}

const ROUNDING_FLOOR: f64 = 1e-12;

fn has_converged(stats: &[Welford], t: f64) -> bool {
    let means = stats.iter().map(|w| w.mean);
    let max = means.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = means.fold(f64::INFINITY, f64::min);
    // The floor absorbs rounding when every marginal is zero in exact arithmetic.
    let limit = (t * (max - min)).max(ROUNDING_FLOOR);
    stats.iter().all(|w| w.stderr() <= limit)
}

fn run(
    ctx: ModelContext<'_>,
    instances: &[Sequence],
    intervention: &InterventionSpec,
    cfg: &EstimatorConfig,
) -> Result<AttributionReport> {
    cfg.validate()?;
    let first = instances
        .first()
        .ok_or_else(|| OsvError::Config("no instances to explain".into()))?;
    let n = first.len();
    if let Some(bad) = instances.iter().position(|s| s.len() != n) {
        return Err(OsvError::Config(format!(
            "instance {bad} has length {}, expected {n} (instances must be slot-aligned)",
            instances[bad].len()
        )));
    }
    intervention.occurrence.validate(n)?;
    let ctx = ModelContext {
        batch_size: cfg.batch_size,
        ..ctx
    };
    let exec = cfg.execution;

    exec.install(|| {
        let originals: Vec<&[Symbol]> = instances.iter().map(Sequence::tokens).collect();
        let full_values = ctx.values(&originals).map_err(|source: ModelError| OsvError::Evaluation {
            coalition: Coalition::full(n).id(),
            source,
        })?;

        let sampler = Sampler {
            ctx,
            intervention,
            cfg,
        };
        let count = instances.len();
        let mut stats = vec![Welford::default(); 2 * n];
        let mut empty = Welford::default();
        let mut evaluations = count as u64;
        let mut coalitions = 0u64;
        let mut cycles = 0usize;
        let mut converged = false;
        let mut next_unit = 0usize;
        let last_unit = cfg.max_permutations * count;

        'outer: while next_unit < last_unit {
            let block = cfg.block_size.min(last_unit - next_unit);
            let start = next_unit;
            let samples = exec.map_range(0..block, |k| {
                let unit = start + k;
                let inst = unit % count;
                sampler.sample(inst, &instances[inst], full_values[inst], unit / count)
            });
            next_unit += block;
            for (k, sample) in samples.into_iter().enumerate() {
                let sample = sample?;
                for (w, m) in stats.iter_mut().zip(&sample.marginals) {
                    w.push(*m);
                }
                empty.push(sample.empty);
                evaluations += sample.evaluations;
                coalitions += sample.coalitions;
                if (start + k) % count == count - 1 {
                    cycles += 1;
                    if cycles * count >= cfg.min_samples && has_converged(&stats, cfg.convergence) {
                        converged = true;
                        break 'outer;
                    }
                }
            }
        }

        let stderr: Vec<f64> = stats.iter().map(Welford::stderr).collect();
        let means: Vec<f64> = stats.iter().map(|w| w.mean).collect();
        Ok(AttributionReport {
            occurrence_values: means[..n].to_vec(),
            order_values: means[n..].to_vec(),
            mode: intervention.order,
            diagnostics: Diagnostics {
                evaluation_count: evaluations,
                coalition_count: coalitions,
                permutations: cycles as u64,
                stderr_occurrence: stderr[..n].to_vec(),
                stderr_order: stderr[n..].to_vec(),
                seed: Some(cfg.seed),
                converged,
                exact: false,
                full_value: full_values.iter().sum::<f64>() / count as f64,
                empty_value: empty.mean,
            },
        })
    })?
}

/// Sampled OSV for one sequence. A run that hits `max_permutations` is
/// returned with `diagnostics.converged == false`.
pub fn osv_sampled(
    ctx: ModelContext<'_>,
    seq: &Sequence,
    intervention: &InterventionSpec,
    cfg: &EstimatorConfig,
) -> Result<AttributionReport> {
    run(ctx, std::slice::from_ref(seq), intervention, cfg)
}

/// Slot-aligned instances explained together.
pub struct GlobalExplanationJob<'a> {
    pub ctx: ModelContext<'a>,
    pub instances: Vec<Sequence>,
    pub intervention: InterventionSpec,
    pub config: EstimatorConfig,
}

impl GlobalExplanationJob<'_> {
    pub fn slot_count(&self) -> usize {
        self.instances.first().map_or(0, Sequence::len)
    }
}

/// Slot-level mean of per-instance marginal contributions, cycling over the
/// instances until the stopping rule holds on the slot-level running means.
/// Evaluation counts in the report are totals; divide by the instance count
/// for a per-instance figure.
pub fn global_explain(job: &GlobalExplanationJob<'_>) -> Result<AttributionReport> {
    run(job.ctx, &job.instances, &job.intervention, &job.config)
}
