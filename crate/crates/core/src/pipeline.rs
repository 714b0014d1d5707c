//! The synthetic evaluation pipeline: generate a task dataset, collect
//! sequences that begin with a duplicate, explain them with plain SV and
//! both order-sensitive variants, and score each explanation against the
//! ground truth.

use crate::engine::{osv_exact, sv_exact, AttributionReport, Diagnostics, Evaluator, ModelContext};
use crate::error::{OsvError, Result};
use crate::estimators::{global_explain, EstimatorConfig, GlobalExplanationJob};
use crate::interventions::{InterventionSpec, OccurrenceIntervention, OrderMode};
use crate::model::SequenceModel;
use crate::reference_models::RuleModel;
use crate::sequence::Sequence;
use crate::synthetic::{
    generate_dataset, pearson, select_w1, CorrelationScope, Dataset, GroundTruth, SyntheticDatasetSpec, Task,
};
use crate::value_fn::ValueFunctionSpec;
use crate::vocab::{Symbol, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Plain Shapley values over occurrences.
    Sv,
    Absolute,
    Relative,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sv, Method::Absolute, Method::Relative];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sv => "phi",
            Method::Absolute => "phi_a",
            Method::Relative => "phi_r",
        }
    }

    pub fn order_mode(self) -> OrderMode {
        match self {
            Method::Sv => OrderMode::Identity,
            Method::Absolute => OrderMode::Absolute,
            Method::Relative => OrderMode::Relative,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    /// Which rule model is explained.
    pub task: Task,
    pub dataset: SyntheticDatasetSpec,
    /// Size of the explained set.
    pub explain_count: usize,
    pub exact: bool,
    pub estimator: EstimatorConfig,
}

impl SynthConfig {
    pub fn new(task: Task, seed: u64) -> Self {
        Self {
            task,
            dataset: SyntheticDatasetSpec::new(task, seed),
            explain_count: 1000,
            exact: false,
            estimator: EstimatorConfig {
                seed,
                ..EstimatorConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct MethodResult {
    pub method: Method,
    pub report: AttributionReport,
    pub p_a: f64,
    pub p: f64,
    pub evaluations_per_instance: f64,
}

#[derive(Clone, Debug)]
pub struct SynthOutcome {
    pub dataset: Dataset,
    pub explained: Vec<Vec<u32>>,
    pub results: Vec<MethodResult>,
}

/// Sequences beginning with a duplicate, drawn from a task-1 dataset of the
/// same size and seed as `spec`.
pub fn w1_sequences(spec: &SyntheticDatasetSpec, count: usize) -> Result<Vec<Vec<u32>>> {
    let task1 = SyntheticDatasetSpec {
        task: Task::BeginsWithDuplicate,
        ..spec.clone()
    };
    let data = generate_dataset(&task1)?;
    let all: Vec<_> = data.train.into_iter().chain(data.test).collect();
    select_w1(&all, count)
}

fn to_sequences(tokens: &[Vec<u32>]) -> Result<Vec<Sequence>> {
    tokens
        .iter()
        .map(|t| Sequence::new(t.iter().copied().map(Symbol).collect()))
        .collect()
}

/// Slot-wise mean of per-instance reports; diagnostics are summed except
/// the standard errors, which combine as the error of a mean.
pub fn mean_report(reports: &[AttributionReport]) -> Result<AttributionReport> {
    let first = reports
        .first()
        .ok_or_else(|| OsvError::Insufficient("no reports to average".into()))?;
    let n = first.len();
    let m = reports.len() as f64;
    let mut out = AttributionReport {
        occurrence_values: vec![0.0; n],
        order_values: vec![0.0; n],
        mode: first.mode,
        diagnostics: Diagnostics {
            stderr_occurrence: vec![0.0; n],
            stderr_order: vec![0.0; n],
            seed: first.diagnostics.seed,
            converged: true,
            exact: true,
            ..Diagnostics::default()
        },
    };
    for r in reports {
        if r.len() != n {
            return Err(OsvError::Contract("reports cover different slot counts".into()));
        }
        let d = &mut out.diagnostics;
        for i in 0..n {
            out.occurrence_values[i] += r.occurrence_values[i] / m;
            out.order_values[i] += r.order_values[i] / m;
            d.stderr_occurrence[i] += (r.diagnostics.stderr_occurrence[i] / m).powi(2);
            d.stderr_order[i] += (r.diagnostics.stderr_order[i] / m).powi(2);
        }
        d.evaluation_count += r.diagnostics.evaluation_count;
        d.coalition_count += r.diagnostics.coalition_count;
        d.permutations = d.permutations.max(r.diagnostics.permutations);
        d.converged &= r.diagnostics.converged;
        d.exact &= r.diagnostics.exact;
        d.full_value += r.diagnostics.full_value / m;
        d.empty_value += r.diagnostics.empty_value / m;
    }
    let d = &mut out.diagnostics;
    d.stderr_occurrence.iter_mut().chain(d.stderr_order.iter_mut()).for_each(|v| *v = v.sqrt());
    Ok(out)
}

/// Explains `sequences` with one method and scores it against the truth for
/// `task`. Exact runs average per-instance exact values.
pub fn explain_method(
    ctx: ModelContext<'_>,
    task: Task,
    sequences: &[Sequence],
    g: &OccurrenceIntervention,
    method: Method,
    exact: bool,
    estimator: &EstimatorConfig,
) -> Result<MethodResult> {
    let count = sequences.len();
    if count == 0 {
        return Err(OsvError::Insufficient("nothing to explain".into()));
    }
    let mode = method.order_mode();
    let report = if exact {
        let exec = estimator.execution;
        let reports = sequences
            .iter()
            .map(|s| match method {
                Method::Sv => sv_exact(s, Evaluator::Model(ctx), g, exec),
                _ => osv_exact(s, Evaluator::Model(ctx), &InterventionSpec::new(g.clone(), mode), exec),
            })
            .collect::<Result<Vec<_>>>()?;
        mean_report(&reports)?
    } else {
        global_explain(&GlobalExplanationJob {
            ctx,
            instances: sequences.to_vec(),
            intervention: InterventionSpec::new(g.clone(), mode),
            config: estimator.clone(),
        })?
    };
    let truth = GroundTruth::for_w1(task, report.len(), mode);
    Ok(MethodResult {
        method,
        p_a: pearson(&report, &truth, CorrelationScope::All)?,
        p: pearson(&report, &truth, CorrelationScope::OccurrenceOnly)?,
        evaluations_per_instance: report.diagnostics.evaluation_count as f64 / count as f64,
        report,
    })
}

/// Runs the whole pipeline for the task's rule model with `g` uniform over
/// the task vocabulary.
pub fn run_synthetic(cfg: &SynthConfig) -> Result<SynthOutcome> {
    let dataset = generate_dataset(&SyntheticDatasetSpec {
        task: cfg.task,
        ..cfg.dataset.clone()
    })?;
    let explained = w1_sequences(&cfg.dataset, cfg.explain_count)?;
    let sequences = to_sequences(&explained)?;

    let vocab = Vocabulary::integers(cfg.dataset.vocab_size);
    let model = RuleModel::new(cfg.task.rule());
    let labels = model.class_labels();
    let value_fn = ValueFunctionSpec::default_for(labels)?.resolve(labels)?;
    let ctx = ModelContext {
        batch_size: cfg.estimator.batch_size,
        ..ModelContext::new(&model, &vocab, &value_fn)
    };
    let g = OccurrenceIntervention::UniformVocab((0..cfg.dataset.vocab_size as u32).map(Symbol).collect());

    let results = Method::ALL
        .iter()
        .map(|&m| explain_method(ctx, cfg.task, &sequences, &g, m, cfg.exact, &cfg.estimator))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthOutcome {
        dataset,
        explained,
        results,
    })
}
