//! Deterministic reference classifiers.
//!
//! Rule models label the synthetic tasks perfectly and stand in for trained
//! networks when ground-truth attributions are needed. The stub model is the
//! token-fraction scorer shared with the bridge conformance tests.

use std::collections::HashSet;

use crate::error::{ModelError, OsvError, Result};
use crate::model::SequenceModel;
use crate::vocab::{Symbol, Vocabulary};

#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    /// Task 1: `tokens[0] == tokens[1]`.
    BeginsWithDuplicate,
    /// Task 2: some `tokens[i] == tokens[i + 1]`.
    AdjacentDuplicate,
    /// Task 3: some token value repeats.
    AnyDuplicate,
    /// Class 1 iff any target token occurs; blind to order.
    BagOfWords(Vec<Symbol>),
    /// `p(class 1) = c` regardless of input.
    Constant(f64),
    /// Class 1 iff the input equals the reference exactly.
    ExactSequence(Vec<Symbol>),
}

impl Rule {
    pub fn label(&self, tokens: &[Symbol]) -> bool {
        match self {
            Rule::BeginsWithDuplicate => tokens.len() >= 2 && tokens[0] == tokens[1],
            Rule::AdjacentDuplicate => tokens.windows(2).any(|w| w[0] == w[1]),
            Rule::AnyDuplicate => {
                let mut seen = HashSet::with_capacity(tokens.len());
                !tokens.iter().all(|t| seen.insert(*t))
            }
            Rule::BagOfWords(targets) => tokens.iter().any(|t| targets.contains(t)),
            Rule::Constant(c) => *c >= 0.5,
            Rule::ExactSequence(reference) => tokens == reference.as_slice(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RuleModel {
    rule: Rule,
    smoothing: f64,
    labels: Vec<String>,
}

impl RuleModel {
    pub fn new(rule: Rule) -> Self {
        Self {
            rule,
            smoothing: 0.0,
            labels: vec!["0".into(), "1".into()],
        }
    }

    /// Hard decisions map to `(ε, 1-ε)`; requires `ε ∈ [0, 0.5)`.
    pub fn with_smoothing(mut self, eps: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&eps) {
            return Err(OsvError::Config(format!("smoothing {eps} outside [0, 0.5)")));
        }
        self.smoothing = eps;
        Ok(self)
    }

    pub fn task(task: u8) -> Result<Self> {
        let rule = match task {
            1 => Rule::BeginsWithDuplicate,
            2 => Rule::AdjacentDuplicate,
            3 => Rule::AnyDuplicate,
            _ => return Err(OsvError::Config(format!("unknown synthetic task {task}"))),
        };
        Ok(Self::new(rule))
    }

    pub fn rule(&self) -> &Rule {
        &self.rule
    }

    pub fn predict(&self, tokens: &[Symbol]) -> [f64; 2] {
        if let Rule::Constant(c) = self.rule {
            return [1.0 - c, c];
        }
        let eps = self.smoothing;
        if self.rule.label(tokens) {
            [eps, 1.0 - eps]
        } else {
            [1.0 - eps, eps]
        }
    }
}

impl SequenceModel for RuleModel {
    fn class_labels(&self) -> &[String] {
        &self.labels
    }

    fn max_batch(&self) -> usize {
        usize::MAX
    }

    fn score_batch(&self, _vocab: &Vocabulary, batch: &[&[Symbol]]) -> Result<Vec<Vec<f64>>, ModelError> {
        Ok(batch.iter().map(|s| self.predict(s).to_vec()).collect())
    }
}

/// Scores `s = fraction of tokens equal to "good"` as `[1 - s, s]` over the
/// classes `neg`, `pos`.
#[derive(Clone, Debug)]
pub struct StubModel {
    labels: Vec<String>,
}

pub const STUB_TARGET: &str = "good";

impl Default for StubModel {
    fn default() -> Self {
        Self {
            labels: vec!["neg".into(), "pos".into()],
        }
    }
}

impl StubModel {
    pub fn score_words<S: AsRef<str>>(words: &[S]) -> Vec<f64> {
        let hits = words.iter().filter(|w| w.as_ref() == STUB_TARGET).count();
        let s = if words.is_empty() {
            0.0
        } else {
            hits as f64 / words.len() as f64
        };
        vec![1.0 - s, s]
    }
}

impl SequenceModel for StubModel {
    fn class_labels(&self) -> &[String] {
        &self.labels
    }

    fn score_batch(&self, vocab: &Vocabulary, batch: &[&[Symbol]]) -> Result<Vec<Vec<f64>>, ModelError> {
        Ok(batch
            .iter()
            .map(|s| Self::score_words(&vocab.names(s).collect::<Vec<_>>()))
            .collect())
    }
}

/// Builds an in-process model from its registry name:
///
/// * `stub`
/// * `rule:task1`, `rule:task2`, `rule:task3`
/// * `rule:bow:<tok>,<tok>,...`
/// * `rule:const:<p>`
/// * `rule:exact:<tok>,<tok>,...`
///
/// A rule name may end in `@<eps>` to set the smoothing margin. Tokens named
/// by the rule are interned into `vocab`.
pub fn in_process_model(name: &str, vocab: &mut Vocabulary) -> Result<Box<dyn SequenceModel>> {
    if name == "stub" {
        return Ok(Box::new(StubModel::default()));
    }
    let rest = name
        .strip_prefix("rule:")
        .ok_or_else(|| OsvError::Config(format!("unknown model {name:?}")))?;
    let (body, eps) = match rest.rsplit_once('@') {
        Some((b, e)) => (
            b,
            e.parse::<f64>()
                .map_err(|_| OsvError::Config(format!("bad smoothing in {name:?}")))?,
        ),
        None => (rest, 0.0),
    };
    let tokens = |list: &str, vocab: &mut Vocabulary| -> Vec<Symbol> {
        list.split(',').filter(|t| !t.is_empty()).map(|t| vocab.intern(t)).collect()
    };
    let rule = match body.split_once(':') {
        None => match body {
            "task1" => Rule::BeginsWithDuplicate,
            "task2" => Rule::AdjacentDuplicate,
            "task3" => Rule::AnyDuplicate,
            _ => return Err(OsvError::Config(format!("unknown rule {body:?}"))),
        },
        Some(("bow", list)) => Rule::BagOfWords(tokens(list, vocab)),
        Some(("exact", list)) => Rule::ExactSequence(tokens(list, vocab)),
        Some(("const", c)) => {
            let c: f64 = c
                .parse()
                .map_err(|_| OsvError::Config(format!("bad constant in {name:?}")))?;
            if !(0.0..=1.0).contains(&c) {
                return Err(OsvError::Config(format!("constant {c} is not a probability")));
            }
            Rule::Constant(c)
        }
        Some(_) => return Err(OsvError::Config(format!("unknown rule {body:?}"))),
    };
    Ok(Box::new(RuleModel::new(rule).with_smoothing(eps)?))
}
