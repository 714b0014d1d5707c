//! Test-side oracles, coded independently of the engine.
#![allow(dead_code)]

use itertools::Itertools;
use osv_core::{Coalition, Symbol};
use rand::Rng;

pub fn mask_of(c: &Coalition) -> usize {
    c.members().fold(0, |m, i| m | 1 << i)
}

/// Shapley values by averaging marginal contributions over every ordering
/// of the players. Exponential; meant for `players <= 8`.
pub fn brute_force_shapley(players: usize, v: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut phi = vec![0.0; players];
    let mut count = 0usize;
    for order in (0..players).permutations(players) {
        let mut mask = 0usize;
        for p in order {
            let before = v(mask);
            mask |= 1 << p;
            phi[p] += v(mask) - before;
        }
        count += 1;
    }
    phi.iter().map(|x| x / count as f64).collect()
}

/// A game over `2n` players given by a full value table.
#[derive(Clone, Debug)]
pub struct TableGame {
    pub n: usize,
    pub values: Vec<f64>,
}

impl TableGame {
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        Self {
            n,
            values: (0..1usize << (2 * n)).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    /// Depends only on the occurrence members.
    pub fn occurrence_only<R: Rng>(n: usize, rng: &mut R) -> Self {
        let inner: Vec<f64> = (0..1usize << n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let low = (1usize << n) - 1;
        Self {
            n,
            values: (0..1usize << (2 * n)).map(|m| inner[m & low]).collect(),
        }
    }

    pub fn value(&self, c: &Coalition) -> f64 {
        self.values[mask_of(c)]
    }

    pub fn at(&self, mask: usize) -> f64 {
        self.values[mask]
    }
}

/// The completely order-sensitive oracle: `y_empty` unless every order
/// feature is present, then `inner(S_x)`.
pub fn order_sensitive(n: usize, y_empty: f64, inner: impl Fn(usize) -> f64) -> impl Fn(usize) -> f64 {
    let low = (1usize << n) - 1;
    move |mask| {
        if mask >> n == low {
            inner(mask & low)
        } else {
            y_empty
        }
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn syms(v: &[u32]) -> Vec<Symbol> {
    v.iter().copied().map(Symbol).collect()
}
