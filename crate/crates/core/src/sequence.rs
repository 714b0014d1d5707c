//! Set representation of a sequence.
//!
//! A sequence of length `n` is a game over `2n` players: occurrence features
//! `x_0 .. x_{n-1}` take indices `0 .. n` and order features `z_0 .. z_{n-1}`
//! take indices `n .. 2n`. Players are positional, so repeated token values
//! are still distinct occurrence features.

use std::fmt;

use crate::error::{contract, CoalitionId, Result};
use crate::vocab::{Symbol, Vocabulary};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sequence {
    tokens: Vec<Symbol>,
}

impl Sequence {
    pub fn new(tokens: Vec<Symbol>) -> Result<Self> {
        contract!(!tokens.is_empty(), "empty sequences cannot be explained");
        Ok(Self { tokens })
    }

    pub fn from_words(vocab: &mut Vocabulary, line: &str) -> Result<Self> {
        Self::new(vocab.intern_words(line))
    }

    pub fn tokens(&self) -> &[Symbol] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of players in the order-sensitive game.
    pub fn player_count(&self) -> usize {
        2 * self.tokens.len()
    }
}

/// A player of the order-sensitive game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Feature {
    Occurrence(usize),
    Order(usize),
}

impl Feature {
    pub fn from_index(n: usize, index: usize) -> Result<Self> {
        contract!(index < 2 * n, "feature index {index} out of range for n = {n}");
        Ok(if index < n {
            Feature::Occurrence(index)
        } else {
            Feature::Order(index - n)
        })
    }

    pub fn index(self, n: usize) -> usize {
        match self {
            Feature::Occurrence(i) => i,
            Feature::Order(i) => n + i,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Occurrence(i) => write!(f, "x{i}"),
            Feature::Order(i) => write!(f, "z{i}"),
        }
    }
}

/// Subset of the `2n` players, stored as a bit set.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Coalition {
    n: usize,
    words: Vec<u64>,
}

impl Coalition {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            words: vec![0; (2 * n).div_ceil(64).max(1)],
        }
    }

    pub fn full(n: usize) -> Self {
        let mut c = Self::empty(n);
        for i in 0..2 * n {
            c.set(i);
        }
        c
    }

    /// Builds a coalition from a bit mask; only valid while `2n <= 64`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        debug_assert!(2 * n <= 64);
        let mut c = Self::empty(n);
        c.words[0] = mask;
        c
    }

    pub fn from_indices(n: usize, members: &[usize]) -> Result<Self> {
        let mut c = Self::empty(n);
        for &i in members {
            contract!(i < 2 * n, "feature index {i} out of range for n = {n}");
            c.set(i);
        }
        Ok(c)
    }

    /// Occurrence members taken from `occurrence`, order members from `order`.
    pub fn from_parts(occurrence: &[bool], order: &[bool]) -> Result<Self> {
        contract!(
            occurrence.len() == order.len(),
            "occurrence and order masks differ in length"
        );
        let n = occurrence.len();
        let mut c = Self::empty(n);
        for i in 0..n {
            if occurrence[i] {
                c.set(i);
            }
            if order[i] {
                c.set(n + i);
            }
        }
        Ok(c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn player_count(&self) -> usize {
        2 * self.n
    }

    pub fn contains(&self, i: usize) -> bool {
        i < 2 * self.n && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn insert(&mut self, i: usize) -> Result<()> {
        contract!(i < 2 * self.n, "feature index {i} out of range for n = {}", self.n);
        self.set(i);
        Ok(())
    }

    pub fn remove(&mut self, i: usize) {
        if i < 2 * self.n {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn with(&self, i: usize) -> Result<Self> {
        let mut c = self.clone();
        c.insert(i)?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..2 * self.n).filter(move |&i| self.contains(i))
    }

    /// `S_x` as a membership mask over slots.
    pub fn occurrence_mask(&self) -> Vec<bool> {
        (0..self.n).map(|i| self.contains(i)).collect()
    }

    /// `S_z` as a membership mask over slots.
    pub fn order_mask(&self) -> Vec<bool> {
        (0..self.n).map(|i| self.contains(self.n + i)).collect()
    }

    pub fn occurrence_members(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.contains(i)).collect()
    }

    pub fn order_members(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.contains(self.n + i)).collect()
    }

    pub fn is_full(&self) -> bool {
        self.len() == 2 * self.n
    }

    pub fn has_all_order(&self) -> bool {
        (0..self.n).all(|i| self.contains(self.n + i))
    }

    pub fn id(&self) -> CoalitionId {
        CoalitionId {
            occurrence: self.occurrence_members(),
            order: self.order_members(),
        }
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coalition({})", self.id())
    }
}
