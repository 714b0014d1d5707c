use crate::error::ModelError;
use crate::value_fn::ValueFunction;
use crate::vocab::{Symbol, Vocabulary};

/// A black-box sequence classifier.
///
/// Implementations must be deterministic and callable from several threads.
pub trait SequenceModel: Send + Sync {
    fn class_labels(&self) -> &[String];

    /// Largest batch accepted by [`SequenceModel::score_batch`].
    fn max_batch(&self) -> usize {
        64
    }

    /// One score vector per input row, in input order.
    fn score_batch(&self, vocab: &Vocabulary, batch: &[&[Symbol]]) -> Result<Vec<Vec<f64>>, ModelError>;
}

/// Scores `sequences` in chunks of at most `batch_size` and maps each row
/// through `value_fn`.
pub fn evaluate_values(
    model: &dyn SequenceModel,
    vocab: &Vocabulary,
    value_fn: &ValueFunction,
    sequences: &[&[Symbol]],
    batch_size: usize,
) -> Result<Vec<f64>, ModelError> {
    let chunk = batch_size.min(model.max_batch()).max(1);
    let mut out = Vec::with_capacity(sequences.len());
    for batch in sequences.chunks(chunk) {
        let scores = model.score_batch(vocab, batch)?;
        if scores.len() != batch.len() {
            return Err(ModelError::BadScores(format!(
                "batch of {} produced {} score rows",
                batch.len(),
                scores.len()
            )));
        }
        for row in &scores {
            out.push(value_fn.eval(row)?);
        }
    }
    Ok(out)
}
