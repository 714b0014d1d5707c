//! Adversarial text transforms. All are pure string operations and injective
//! in the sentence argument for fixed parameters.

use crate::error::{OsvError, Result};

/// Replaces the hypothesis by the premise. The resulting pair is labeled
/// entailment by construction.
pub fn hans_star(premise: &str, _hypothesis: &str) -> Result<(String, String)> {
    if premise.is_empty() {
        return Err(OsvError::Contract("premise must be non-empty".into()));
    }
    Ok((premise.to_owned(), premise.to_owned()))
}

pub const ENTAILMENT: &str = "entailment";

pub const NEGATION_PHRASES: [&str; 5] = [
    "not as expected",
    "not like the other",
    "not gonna lie",
    "never gonna lie",
    "never as expected",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhrasePosition {
    End,
    EndWithComma,
    Begin,
}

impl std::str::FromStr for PhrasePosition {
    type Err = OsvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "end" => Ok(Self::End),
            "end_with_comma" => Ok(Self::EndWithComma),
            "begin" => Ok(Self::Begin),
            _ => Err(OsvError::Config(format!("unknown phrase position {s:?}"))),
        }
    }
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Inserts one of the negation phrases. Terminal punctuation of the original
/// sentence stays at the very end.
pub fn append_phrase(sentence: &str, phrase_id: usize, position: PhrasePosition) -> Result<String> {
    let phrase = NEGATION_PHRASES.get(phrase_id).ok_or_else(|| {
        OsvError::Config(format!(
            "phrase id {phrase_id} out of range 0..{}",
            NEGATION_PHRASES.len()
        ))
    })?;
    let body_len = sentence.trim_end_matches(is_terminal).len();
    let (body, terminal) = sentence.split_at(body_len);
    Ok(match position {
        PhrasePosition::Begin => format!("{phrase} {sentence}"),
        PhrasePosition::End => format!("{body} {phrase}{terminal}"),
        PhrasePosition::EndWithComma => format!("{body}, {phrase}{terminal}"),
    })
}

/// Punctuation and symbols accepted by [`prepend_symbol`].
pub const PREPEND_SYMBOLS: [&str; 23] = [
    "!", "\"", "#", "&", "'", "*", "+", ",", "-", ".", "/", ":", ";", "<", "=", ">", "?", "@", "^", "_", "|", "~",
    "<unk>",
];

pub fn prepend_symbol(sentence: &str, symbol: &str) -> Result<String> {
    if !PREPEND_SYMBOLS.contains(&symbol) {
        return Err(OsvError::Config(format!("symbol {symbol:?} is not in the prepend list")));
    }
    Ok(format!("{symbol} {sentence}"))
}
