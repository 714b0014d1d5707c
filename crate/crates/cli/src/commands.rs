use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use osv_core::bridge::ModelEndpoint;
use osv_core::engine::{osv_exact, sv_exact, Evaluator, ModelContext};
use osv_core::estimators::{global_explain, osv_sampled, EstimatorConfig, GlobalExplanationJob};
use osv_core::pipeline::{mean_report, run_synthetic, SynthConfig};
use osv_core::report::{parse_slot_groups, ReportDocument};
use osv_core::synthetic::{write_records, LabeledSequence, SyntheticDatasetSpec, Task};
use osv_core::transforms::{append_phrase, hans_star, prepend_symbol, PhrasePosition, ENTAILMENT};
use osv_core::{
    AttributionReport, Execution, InterventionSpec, OccurrenceIntervention, OrderMode, Sequence, SequenceModel,
    Symbol, ValueFunctionSpec, Vocabulary,
};

use crate::args::{EstimatorArgs, ExplainArgs, OrderModeArg, SynthArgs, TransformArgs};
use crate::error::{exit, CliError};

pub const SEED_ENV: &str = "OSV_SEED";

type CliResult<T> = Result<T, CliError>;

/// Outcome of a command that produced reports.
pub struct Written {
    pub converged: bool,
}

impl Written {
    pub fn exit_status(&self) -> u8 {
        if self.converged {
            exit::OK
        } else {
            exit::NOT_CONVERGED
        }
    }
}

fn seed(args: &EstimatorArgs) -> CliResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(args.seed),
    }
}

fn estimator_config(args: &EstimatorArgs) -> CliResult<EstimatorConfig> {
    let execution = match args.workers {
        Some(0) => return Err(CliError::Usage("--workers must be at least 1".into())),
        Some(1) => Execution::Sequential,
        Some(w) => Execution::with_workers(w),
        None => Execution::default(),
    };
    let cfg = EstimatorConfig {
        q_samples: args.q_samples,
        g_samples: args.g_samples,
        convergence: args.tolerance,
        max_permutations: args.max_permutations,
        batch_size: args.batch_size,
        seed: seed(args)?,
        execution,
        ..EstimatorConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.to_owned(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.to_owned(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_owned(),
        source,
    })
}

fn parse_value_fn(spec: Option<&str>, labels: &[String]) -> CliResult<ValueFunctionSpec> {
    Ok(match spec {
        None => ValueFunctionSpec::default_for(labels)?,
        Some(s) => match s.split_once(',') {
            Some((target, contrast)) => ValueFunctionSpec::prob_diff(target.trim(), contrast.trim()),
            None => ValueFunctionSpec::ClassProb {
                target: s.trim().to_owned(),
            },
        },
    })
}

/// Parses `--g`; `corpus` supplies the default token pool.
fn parse_g(spec: Option<&str>, vocab: &mut Vocabulary, corpus: &[Vec<Symbol>]) -> CliResult<OccurrenceIntervention> {
    let Some(spec) = spec else {
        let mut pool: Vec<Symbol> = corpus.iter().flatten().copied().collect();
        pool.sort();
        pool.dedup();
        return Ok(OccurrenceIntervention::UniformVocab(pool));
    };
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("bad --g {spec:?}; expected kind:argument")))?;
    let list = |arg: &str, vocab: &mut Vocabulary| -> Vec<Symbol> {
        arg.split(',').filter(|t| !t.is_empty()).map(|t| vocab.intern(t)).collect()
    };
    let g = match kind {
        "uniform-int" => {
            let size: u32 = arg
                .parse()
                .map_err(|_| CliError::Usage(format!("bad vocabulary size in --g {spec:?}")))?;
            OccurrenceIntervention::UniformVocab((0..size).map(|i| vocab.intern(&i.to_string())).collect())
        }
        "uniform" => OccurrenceIntervention::UniformVocab(list(arg, vocab)),
        "mask" => OccurrenceIntervention::FixedToken(vocab.intern(arg)),
        "slots" => {
            let text = read_text(Path::new(arg))?;
            OccurrenceIntervention::SlotDistribution(text.lines().map(|l| vocab.intern_words(l)).collect())
        }
        _ => return Err(CliError::Usage(format!("unknown --g kind {kind:?}"))),
    };
    Ok(g)
}

fn order_mode(arg: OrderModeArg) -> OrderMode {
    match arg {
        OrderModeArg::Absolute => OrderMode::Absolute,
        OrderModeArg::Relative => OrderMode::Relative,
        OrderModeArg::None => OrderMode::Identity,
    }
}

/// Everything `explain` and `global` share after flag parsing.
struct Session {
    vocab: Vocabulary,
    model: Box<dyn SequenceModel>,
    value_fn: osv_core::ValueFunction,
    sequences: Vec<Sequence>,
    intervention: InterventionSpec,
    config: EstimatorConfig,
    exact: bool,
}

impl Session {
    fn open(args: &ExplainArgs) -> CliResult<Self> {
        let config = estimator_config(&args.estimator)?;
        let endpoint = ModelEndpoint::parse(&args.model)?;
        let mut vocab = Vocabulary::new();
        let model = endpoint.connect(&mut vocab, Duration::from_millis(args.timeout_ms))?;
        let text = read_text(&args.input)?;
        let tokenized: Vec<Vec<Symbol>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| vocab.intern_words(l))
            .collect();
        if tokenized.is_empty() {
            return Err(CliError::Data(format!("{} contains no sequences", args.input.display())));
        }
        let g = parse_g(args.g.as_deref(), &mut vocab, &tokenized)?;
        let labels = model.class_labels().to_vec();
        let value_fn = parse_value_fn(args.value_fn.as_deref(), &labels)?.resolve(&labels)?;
        let sequences = tokenized
            .into_iter()
            .map(Sequence::new)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            vocab,
            model,
            value_fn,
            sequences,
            intervention: InterventionSpec::new(g, order_mode(args.order_mode)),
            config,
            exact: args.estimator.exact,
        })
    }

    fn ctx(&self) -> ModelContext<'_> {
        ModelContext {
            batch_size: self.config.batch_size,
            ..ModelContext::new(self.model.as_ref(), &self.vocab, &self.value_fn)
        }
    }

    fn explain_one(&self, seq: &Sequence) -> CliResult<AttributionReport> {
        let exec = self.config.execution;
        let report = match (self.exact, self.intervention.order) {
            (true, OrderMode::Identity) => {
                sv_exact(seq, Evaluator::Model(self.ctx()), &self.intervention.occurrence, exec)?
            }
            (true, _) => osv_exact(seq, Evaluator::Model(self.ctx()), &self.intervention, exec)?,
            (false, _) => osv_sampled(self.ctx(), seq, &self.intervention, &self.config)?,
        };
        Ok(report)
    }

    fn tokens(&self, seq: &Sequence) -> Vec<String> {
        self.vocab.names(seq.tokens()).map(str::to_owned).collect()
    }
}

fn write_report(out_dir: &Path, stem: &str, doc: &ReportDocument) -> CliResult<()> {
    write_file(&out_dir.join(format!("{stem}.tsv")), &doc.to_tsv())?;
    write_file(&out_dir.join(format!("{stem}.html")), &doc.to_html())
}

fn finish_doc(doc: ReportDocument, merge: Option<&str>) -> CliResult<ReportDocument> {
    match merge {
        Some(spec) => Ok(doc.merge_slots(&parse_slot_groups(spec)?)?),
        None => Ok(doc),
    }
}

pub fn explain(args: &ExplainArgs) -> CliResult<Written> {
    let session = Session::open(args)?;
    ensure_dir(&args.out_dir)?;
    let mut converged = true;
    for (i, seq) in session.sequences.iter().enumerate() {
        let report = session.explain_one(seq)?;
        converged &= report.diagnostics.converged;
        let doc = ReportDocument::new(format!("explanation {i}"), &session.tokens(seq), &report)?;
        write_report(&args.out_dir, &format!("explain-{i}"), &finish_doc(doc, args.merge_slots.as_deref())?)?;
    }
    Ok(Written { converged })
}

/// The shared token of each slot, or `*` where instances differ.
fn template_tokens(vocab: &Vocabulary, sequences: &[Sequence]) -> Vec<String> {
    let first = sequences[0].tokens();
    (0..first.len())
        .map(|i| {
            if sequences.iter().all(|s| s.tokens()[i] == first[i]) {
                vocab.name(first[i]).to_owned()
            } else {
                "*".to_owned()
            }
        })
        .collect()
}

pub fn global(args: &ExplainArgs) -> CliResult<Written> {
    let session = Session::open(args)?;
    let n = session.sequences[0].len();
    if let Some(i) = session.sequences.iter().position(|s| s.len() != n) {
        return Err(CliError::Data(format!(
            "line {} has {} tokens, expected {n}: global explanations need slot-aligned input",
            i + 1,
            session.sequences[i].len()
        )));
    }
    let report = if session.exact {
        let reports = session
            .sequences
            .iter()
            .map(|s| session.explain_one(s))
            .collect::<CliResult<Vec<_>>>()?;
        mean_report(&reports)?
    } else {
        global_explain(&GlobalExplanationJob {
            ctx: session.ctx(),
            instances: session.sequences.clone(),
            intervention: session.intervention.clone(),
            config: session.config.clone(),
        })?
    };
    ensure_dir(&args.out_dir)?;
    let tokens = template_tokens(&session.vocab, &session.sequences);
    let doc = ReportDocument::new("global explanation", &tokens, &report)?;
    write_report(&args.out_dir, "global", &finish_doc(doc, args.merge_slots.as_deref())?)?;
    Ok(Written {
        converged: report.diagnostics.converged,
    })
}

pub const METRICS_HEADER: &str = "task\tmethod\tp_a\tp\tevaluations_per_instance\tpermutations\tconverged";

pub fn synth(args: &SynthArgs) -> CliResult<Written> {
    let estimator = estimator_config(&args.estimator)?;
    let task = Task::from_id(args.task)?;
    let cfg = SynthConfig {
        task,
        dataset: SyntheticDatasetSpec {
            task,
            vocab_size: args.vocab,
            length: args.k,
            count: args.count,
            train_fraction: args.train_fraction,
            positive_fraction: args.positive_fraction,
            seed: estimator.seed,
        },
        explain_count: args.explain_count,
        exact: args.estimator.exact,
        estimator,
    };
    let outcome = run_synthetic(&cfg)?;

    ensure_dir(&args.out_dir)?;
    let dir = &args.out_dir;
    write_file(&dir.join("dataset-train.tsv"), &write_records(&outcome.dataset.train))?;
    write_file(&dir.join("dataset-test.tsv"), &write_records(&outcome.dataset.test))?;
    let explained: Vec<LabeledSequence> = outcome
        .explained
        .iter()
        .map(|t| LabeledSequence {
            label: u8::from(task.holds(t)),
            tokens: t.clone(),
        })
        .collect();
    write_file(&dir.join("explained.tsv"), &write_records(&explained))?;

    let mut metrics = String::from(METRICS_HEADER);
    metrics.push('\n');
    let mut converged = true;
    let slot_names: Vec<String> = (0..args.k).map(|i| format!("w{i}")).collect();
    for r in &outcome.results {
        let d = &r.report.diagnostics;
        converged &= d.converged;
        let _ = writeln!(
            metrics,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            task.id(),
            r.method.name(),
            r.p_a,
            r.p,
            r.evaluations_per_instance,
            d.permutations,
            d.converged
        );
        let doc = ReportDocument::new(format!("task {} {}", task.id(), r.method.name()), &slot_names, &r.report)?;
        write_report(dir, r.method.name(), &doc)?;
    }
    write_file(&dir.join("metrics.tsv"), &metrics)?;
    print!("{metrics}");
    Ok(Written { converged })
}

fn transform_line(args: &TransformArgs, line: &str, position: Option<PhrasePosition>) -> CliResult<String> {
    Ok(match args.name.as_str() {
        "hans_star" => {
            let mut fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 {
                return Err(CliError::Data(format!("expected premise<TAB>hypothesis, got {line:?}")));
            }
            let (premise, hypothesis) =
                hans_star(fields[0], fields[1]).map_err(|e| CliError::Data(e.to_string()))?;
            let mut out = vec![premise, hypothesis];
            if fields.len() > 2 {
                fields[2] = ENTAILMENT;
                out.extend(fields[2..].iter().map(|f| (*f).to_owned()));
            }
            out.join("\t")
        }
        "append_phrase" => append_phrase(line, args.phrase_id, position.expect("parsed for append_phrase"))?,
        "prepend_symbol" => prepend_symbol(line, &args.symbol)?,
        other => return Err(CliError::Usage(format!("unknown transform {other:?}"))),
    })
}

pub fn transform(args: &TransformArgs) -> CliResult<()> {
    if !matches!(args.name.as_str(), "hans_star" | "append_phrase" | "prepend_symbol") {
        return Err(CliError::Usage(format!(
            "unknown transform {:?}; expected hans_star, append_phrase or prepend_symbol",
            args.name
        )));
    }
    let position = (args.name == "append_phrase")
        .then(|| args.position.parse::<PhrasePosition>())
        .transpose()?;
    let text = read_text(&args.input)?;
    let mut out = String::with_capacity(text.len() * 2);
    for (i, line) in text.lines().enumerate() {
        let transformed = transform_line(args, line, position).map_err(|e| match e {
            CliError::Data(m) => CliError::Data(format!("line {}: {m}", i + 1)),
            other => other,
        })?;
        out.push_str(&transformed);
        out.push('\n');
    }
    match &args.output {
        Some(path) => write_file(path, &out),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(out.as_bytes())
                .and_then(|()| lock.flush())
                .map_err(|source| CliError::Output {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}
