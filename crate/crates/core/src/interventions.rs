//! Interventions on removed features.
//!
//! Occurrence interventions (`g`) replace the tokens of removed occurrence
//! features in the sequence's canonical frame. Order interventions (`q`)
//! produce an assignment `z` where `z[i]` is the output position of slot `i`;
//! every assignment is a permutation of `0..n`.
//!
//! The relative-order intervention translates the retained order features by
//! one common offset, drawn uniformly from the offsets that keep all of them
//! in bounds, then scatters the removed ones uniformly over the free slots.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, OsvError, Result};
use crate::vocab::Symbol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderMode {
    Absolute,
    Relative,
    /// Order features are omnipresent; recovers the classic Shapley value.
    Identity,
}

impl OrderMode {
    pub fn name(self) -> &'static str {
        match self {
            OrderMode::Absolute => "absolute",
            OrderMode::Relative => "relative",
            OrderMode::Identity => "identity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OccurrenceIntervention {
    /// Independent uniform draw from a token list.
    UniformVocab(Vec<Symbol>),
    /// Every removed token becomes the same placeholder, e.g. `[MASK]`.
    FixedToken(Symbol),
    /// Per-slot token lists, e.g. the fillers of a template position.
    SlotDistribution(Vec<Vec<Symbol>>),
}

impl OccurrenceIntervention {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            Self::UniformVocab(v) if v.is_empty() => {
                Err(OsvError::Config("occurrence vocabulary is empty".into()))
            }
            Self::SlotDistribution(slots) if slots.len() != n => Err(OsvError::Config(format!(
                "slot distribution covers {} positions, sequence has {n}",
                slots.len()
            ))),
            Self::SlotDistribution(slots) if slots.iter().any(Vec::is_empty) => {
                Err(OsvError::Config("slot distribution has an empty slot".into()))
            }
            _ => Ok(()),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, slot: usize, rng: &mut R) -> Symbol {
        match self {
            Self::UniformVocab(v) => v[rng.random_range(0..v.len())],
            Self::FixedToken(t) => *t,
            Self::SlotDistribution(slots) => {
                let s = &slots[slot];
                s[rng.random_range(0..s.len())]
            }
        }
    }

    fn slot_support(&self, slot: usize) -> Vec<(Symbol, f64)> {
        let list: &[Symbol] = match self {
            Self::UniformVocab(v) => v,
            Self::FixedToken(t) => std::slice::from_ref(t),
            Self::SlotDistribution(slots) => &slots[slot],
        };
        let mut counts: BTreeMap<Symbol, usize> = BTreeMap::new();
        for &s in list {
            *counts.entry(s).or_default() += 1;
        }
        let total = list.len() as f64;
        counts.into_iter().map(|(s, c)| (s, c as f64 / total)).collect()
    }

    /// True when a removed slot can only ever receive one token.
    pub fn is_deterministic_at(&self, slot: usize) -> bool {
        self.slot_support(slot).len() == 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterventionSpec {
    pub occurrence: OccurrenceIntervention,
    pub order: OrderMode,
}

impl InterventionSpec {
    pub fn new(occurrence: OccurrenceIntervention, order: OrderMode) -> Self {
        Self { occurrence, order }
    }
}

fn check_mask(n: usize, retained: &[bool]) -> Result<()> {
    contract!(
        retained.len() == n,
        "retained mask has length {}, expected {n}",
        retained.len()
    );
    Ok(())
}

/// Removed slots are permuted among their own positions; retained slots stay.
pub fn sample_order_absolute<R: Rng + ?Sized>(n: usize, retained: &[bool], rng: &mut R) -> Result<Vec<usize>> {
    check_mask(n, retained)?;
    let mut z: Vec<usize> = (0..n).collect();
    let free: Vec<usize> = (0..n).filter(|&i| !retained[i]).collect();
    let mut slots = free.clone();
    slots.shuffle(rng);
    for (&i, &p) in free.iter().zip(&slots) {
        z[i] = p;
    }
    Ok(z)
}

/// Offsets `d` such that every retained slot `i` lands on `i + d` in bounds.
fn relative_offsets(n: usize, retained: &[bool]) -> Vec<isize> {
    let lo = retained.iter().position(|&r| r);
    let hi = retained.iter().rposition(|&r| r);
    match (lo, hi) {
        (Some(lo), Some(hi)) => (-(lo as isize)..=(n - 1 - hi) as isize).collect(),
        _ => vec![0],
    }
}

fn place_relative(n: usize, retained: &[bool], offset: isize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut z = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for i in (0..n).filter(|&i| retained[i]) {
        let p = (i as isize + offset) as usize;
        z[i] = p;
        taken[p] = true;
    }
    let free_slots: Vec<usize> = (0..n).filter(|&i| !retained[i]).collect();
    let free_positions: Vec<usize> = (0..n).filter(|&p| !taken[p]).collect();
    (z, free_slots, free_positions)
}

/// Retained slots keep their pairwise gaps under a common in-bounds shift;
/// removed slots fill the remaining positions uniformly.
pub fn sample_order_relative<R: Rng + ?Sized>(n: usize, retained: &[bool], rng: &mut R) -> Result<Vec<usize>> {
    check_mask(n, retained)?;
    let offsets = relative_offsets(n, retained);
    let offset = offsets[rng.random_range(0..offsets.len())];
    let (mut z, free_slots, mut positions) = place_relative(n, retained, offset);
    positions.shuffle(rng);
    for (&i, &p) in free_slots.iter().zip(&positions) {
        z[i] = p;
    }
    Ok(z)
}

pub fn sample_order<R: Rng + ?Sized>(mode: OrderMode, n: usize, retained: &[bool], rng: &mut R) -> Result<Vec<usize>> {
    match mode {
        OrderMode::Absolute => sample_order_absolute(n, retained, rng),
        OrderMode::Relative => sample_order_relative(n, retained, rng),
        OrderMode::Identity => {
            check_mask(n, retained)?;
            Ok((0..n).collect())
        }
    }
}

/// Retained slots keep their tokens; every other slot gets an independent
/// draw from `g`.
pub fn sample_occurrence<R: Rng + ?Sized>(
    g: &OccurrenceIntervention,
    tokens: &[Symbol],
    retained: &[bool],
    rng: &mut R,
) -> Result<Vec<Symbol>> {
    let n = tokens.len();
    check_mask(n, retained)?;
    g.validate(n)?;
    Ok((0..n)
        .map(|i| if retained[i] { tokens[i] } else { g.draw(i, rng) })
        .collect())
}

/// `π_z(x)`: output position `z[i]` holds `x[i]`.
pub fn realize<T: Copy>(x: &[T], z: &[usize]) -> Result<Vec<T>> {
    contract!(
        x.len() == z.len(),
        "assignment has {} tokens but permutation has {} entries",
        x.len(),
        z.len()
    );
    contract!(is_permutation(z), "{z:?} is not a permutation");
    let mut out = x.to_vec();
    for (i, &p) in z.iter().enumerate() {
        out[p] = x[i];
    }
    Ok(out)
}

pub fn is_permutation(z: &[usize]) -> bool {
    let mut seen = vec![false; z.len()];
    z.iter().all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
}

/// Rearranges `v` into its next lexicographic permutation; false after the last.
pub(crate) fn next_permutation<T: Ord>(v: &mut [T]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn factorial(m: usize) -> u128 {
    (1..=m as u128).product()
}

/// Number of assignments in the support of `q(· | z_{S_z})`.
pub fn order_support_size(mode: OrderMode, n: usize, retained: &[bool]) -> u128 {
    let free = retained.iter().filter(|&&r| !r).count();
    match mode {
        OrderMode::Identity => 1,
        OrderMode::Absolute => factorial(free),
        OrderMode::Relative => relative_offsets(n, retained).len() as u128 * factorial(free),
    }
}

/// The support of `q(· | z_{S_z})` with probabilities, in a fixed order.
pub fn order_support(mode: OrderMode, n: usize, retained: &[bool]) -> Result<Vec<(Vec<usize>, f64)>> {
    check_mask(n, retained)?;
    let offsets = match mode {
        OrderMode::Identity => return Ok(vec![((0..n).collect(), 1.0)]),
        OrderMode::Absolute => None,
        OrderMode::Relative => Some(relative_offsets(n, retained)),
    };
    let mut out = Vec::new();
    let offset_list = offsets.clone().unwrap_or_else(|| vec![0]);
    let free = retained.iter().filter(|&&r| !r).count();
    let weight = 1.0 / (offset_list.len() as f64 * factorial(free) as f64);
    for &d in &offset_list {
        let (base, free_slots, mut positions) = if offsets.is_some() {
            place_relative(n, retained, d)
        } else {
            let slots: Vec<usize> = (0..n).filter(|&i| !retained[i]).collect();
            ((0..n).collect(), slots.clone(), slots)
        };
        loop {
            let mut z = base.clone();
            for (&i, &p) in free_slots.iter().zip(&positions) {
                z[i] = p;
            }
            out.push((z, weight));
            if !next_permutation(&mut positions) {
                break;
            }
        }
    }
    Ok(out)
}

/// Per-slot support of `g(· | x_{S_x})`: retained slots are point masses.
pub fn occurrence_support(
    g: &OccurrenceIntervention,
    tokens: &[Symbol],
    retained: &[bool],
) -> Result<Vec<Vec<(Symbol, f64)>>> {
    let n = tokens.len();
    check_mask(n, retained)?;
    g.validate(n)?;
    Ok((0..n)
        .map(|i| {
            if retained[i] {
                vec![(tokens[i], 1.0)]
            } else {
                g.slot_support(i)
            }
        })
        .collect())
}
