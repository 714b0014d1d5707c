//! Token interning.
//!
//! Sequences carry compact [`Symbol`] ids; the [`Vocabulary`] maps them back
//! to the strings that cross the bridge wire.

use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(pub u32);

#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    names: Vec<String>,
    index: HashMap<String, Symbol>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Vocabulary of integer symbols `"0" .. "size-1"`, where symbol `i`
    /// spells the integer `i`.
    pub fn integers(size: usize) -> Self {
        let mut vocab = Self::new();
        for i in 0..size {
            vocab.intern(&i.to_string());
        }
        vocab
    }

    pub fn intern(&mut self, token: &str) -> Symbol {
        if let Some(&sym) = self.index.get(token) {
            return sym;
        }
        let sym = Symbol(self.names.len() as u32);
        self.names.push(token.to_owned());
        self.index.insert(token.to_owned(), sym);
        sym
    }

    pub fn intern_words(&mut self, line: &str) -> Vec<Symbol> {
        line.split_whitespace().map(|w| self.intern(w)).collect()
    }

    pub fn lookup(&self, token: &str) -> Option<Symbol> {
        self.index.get(token).copied()
    }

    /// Panics if `sym` was not produced by this vocabulary.
    pub fn name(&self, sym: Symbol) -> &str {
        &self.names[sym.0 as usize]
    }

    pub fn names<'a>(&'a self, symbols: &'a [Symbol]) -> impl Iterator<Item = &'a str> + 'a {
        symbols.iter().map(move |&s| self.name(s))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}
