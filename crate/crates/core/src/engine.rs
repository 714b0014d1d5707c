//! Exact order-sensitive Shapley values.
//!
//! The value of a coalition `S` is the expectation of `f^y(π_z(x))` with `z`
//! drawn from the order intervention given `z_{S_z}` and `x` drawn from the
//! occurrence intervention given `x_{S_x}`. For short sequences both supports
//! are enumerated, every coalition of the `2n` players is valued, and the
//! Shapley sum is taken over the full table.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{contract, OsvError, Result};
use crate::exec::Execution;
use crate::interventions::{
    is_permutation, occurrence_support, order_support, InterventionSpec, OccurrenceIntervention, OrderMode,
};
use crate::model::{evaluate_values, SequenceModel};
use crate::sequence::{Coalition, Sequence};
use crate::value_fn::ValueFunction;
use crate::vocab::{Symbol, Vocabulary};

/// Longest sequence accepted by the exact routines (`2n <= 12` players).
pub const MAX_EXACT_LEN: usize = 6;

/// Upper bound on distinct sequences scored by one exact run.
pub const MAX_EXACT_TABLE: u128 = 1 << 22;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Model (or oracle) evaluations spent on this report.
    pub evaluation_count: u64,
    /// Coalitions valued; for sampled runs, coalitions visited.
    pub coalition_count: u64,
    /// Permutations drawn per instance (0 for exact runs).
    pub permutations: u64,
    pub stderr_occurrence: Vec<f64>,
    pub stderr_order: Vec<f64>,
    pub seed: Option<u64>,
    pub converged: bool,
    pub exact: bool,
    /// `f^y(w)`.
    pub full_value: f64,
    /// `f^y(w_∅)`, exact or estimated.
    pub empty_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub occurrence_values: Vec<f64>,
    pub order_values: Vec<f64>,
    pub mode: OrderMode,
    pub diagnostics: Diagnostics,
}

impl AttributionReport {
    pub fn len(&self) -> usize {
        self.occurrence_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occurrence_values.is_empty()
    }

    /// All `2n` attributions, occurrence features first.
    pub fn values(&self) -> Vec<f64> {
        self.occurrence_values
            .iter()
            .chain(&self.order_values)
            .copied()
            .collect()
    }

    pub fn stderrs(&self) -> Vec<f64> {
        let d = &self.diagnostics;
        d.stderr_occurrence.iter().chain(&d.stderr_order).copied().collect()
    }

    pub fn total(&self) -> f64 {
        self.values().iter().sum()
    }

    /// `Σφ - (f(w) - f(w_∅))`; zero up to rounding for exact reports.
    pub fn completeness_gap(&self) -> f64 {
        self.total() - (self.diagnostics.full_value - self.diagnostics.empty_value)
    }
}

/// A value defined directly on coalitions, bypassing any model.
pub trait CoalitionValueOracle: Sync {
    fn value(&self, coalition: &Coalition) -> f64;
}

impl<F> CoalitionValueOracle for F
where
    F: Fn(&Coalition) -> f64 + Sync,
{
    fn value(&self, coalition: &Coalition) -> f64 {
        self(coalition)
    }
}

/// A model bound to the vocabulary and value functional used to query it.
#[derive(Clone, Copy)]
pub struct ModelContext<'a> {
    pub model: &'a dyn SequenceModel,
    pub vocab: &'a Vocabulary,
    pub value_fn: &'a ValueFunction,
    pub batch_size: usize,
}

impl<'a> ModelContext<'a> {
    pub fn new(model: &'a dyn SequenceModel, vocab: &'a Vocabulary, value_fn: &'a ValueFunction) -> Self {
        Self {
            model,
            vocab,
            value_fn,
            batch_size: 64,
        }
    }

    pub(crate) fn values(&self, sequences: &[&[Symbol]]) -> Result<Vec<f64>, crate::error::ModelError> {
        evaluate_values(self.model, self.vocab, self.value_fn, sequences, self.batch_size)
    }
}

/// Where coalition values come from.
#[derive(Clone, Copy)]
pub enum Evaluator<'a> {
    Oracle(&'a dyn CoalitionValueOracle),
    Model(ModelContext<'a>),
}

/// `v(S ∪ {i}) - v(S)`.
pub fn marginal_contribution(value_of: &dyn Fn(&Coalition) -> f64, s: &Coalition, i: usize) -> Result<f64> {
    contract!(
        i < s.player_count(),
        "feature index {i} out of range for {} players",
        s.player_count()
    );
    contract!(!s.contains(i), "feature {i} already belongs to the coalition");
    Ok(value_of(&s.with(i)?) - value_of(s))
}

/// Marginal contribution of every player to its predecessors in `sigma`,
/// indexed by player. The entries telescope to `v(N') - v(∅)`.
pub fn permutation_marginals(sigma: &[usize], value_of: &dyn Fn(&Coalition) -> f64) -> Result<Vec<f64>> {
    contract!(sigma.len().is_multiple_of(2), "permutation of {} players is not over 2n features", sigma.len());
    contract!(is_permutation(sigma), "{sigma:?} is not a bijection");
    let n = sigma.len() / 2;
    let mut marginals = vec![0.0; sigma.len()];
    let mut s = Coalition::empty(n);
    let mut prev = value_of(&s);
    for &i in sigma {
        s.insert(i)?;
        let next = value_of(&s);
        marginals[i] = next - prev;
        prev = next;
    }
    Ok(marginals)
}

/// `|S|! (N - |S| - 1)! / N!` for every coalition size `|S| < N`.
pub fn shapley_weights(players: usize) -> Vec<f64> {
    let fact = |m: usize| (1..=m as u128).product::<u128>() as f64;
    let total = fact(players);
    (0..players)
        .map(|s| fact(s) * fact(players - s - 1) / total)
        .collect()
}

/// Shapley values of a game tabulated over bit masks (`table[mask]`).
pub fn shapley_from_table(players: usize, table: &[f64]) -> Vec<f64> {
    assert_eq!(table.len(), 1usize << players, "table size mismatch");
    let weights = shapley_weights(players);
    (0..players)
        .map(|i| {
            let bit = 1usize << i;
            let mut phi = 0.0;
            for mask in 0..table.len() {
                if mask & bit == 0 {
                    let size = mask.count_ones() as usize;
                    phi += weights[size] * (table[mask | bit] - table[mask]);
                }
            }
            phi
        })
        .collect()
}

fn check_exact_len(n: usize) -> Result<()> {
    if n > MAX_EXACT_LEN {
        return Err(OsvError::Capacity(format!(
            "exact enumeration supports sequences of length <= {MAX_EXACT_LEN}, got {n}"
        )));
    }
    Ok(())
}

/// `f^y` of every sequence over a small alphabet, indexed by mixed-radix code
/// (digit at position `p` has weight `radix^p`).
struct ValueTable {
    alphabet: Vec<Symbol>,
    radix: usize,
    values: Vec<f64>,
}

impl ValueTable {
    fn build(ctx: &ModelContext<'_>, seq: &Sequence, g: &OccurrenceIntervention, exec: Execution) -> Result<Self> {
        let n = seq.len();
        let nothing = vec![false; n];
        let mut symbols: BTreeSet<Symbol> = seq.tokens().iter().copied().collect();
        for slot in occurrence_support(g, seq.tokens(), &nothing)? {
            symbols.extend(slot.into_iter().map(|(s, _)| s));
        }
        let alphabet: Vec<Symbol> = symbols.into_iter().collect();
        let radix = alphabet.len();
        let size = (radix as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if size > MAX_EXACT_TABLE {
            return Err(OsvError::Capacity(format!(
                "exact enumeration would score {size} sequences (alphabet {radix}, length {n}); limit is {MAX_EXACT_TABLE}"
            )));
        }
        let size = size as usize;
        let chunk = ctx.batch_size.min(ctx.model.max_batch()).max(1);
        let decode = |code: usize| -> Vec<Symbol> {
            let mut c = code;
            (0..n)
                .map(|_| {
                    let s = alphabet[c % radix];
                    c /= radix;
                    s
                })
                .collect()
        };
        let chunks = exec.map_range(0..size.div_ceil(chunk), |k| {
            let rows: Vec<Vec<Symbol>> = (k * chunk..((k + 1) * chunk).min(size)).map(decode).collect();
            let refs: Vec<&[Symbol]> = rows.iter().map(Vec::as_slice).collect();
            ctx.values(&refs)
        });
        let mut values = Vec::with_capacity(size);
        for c in chunks {
            values.extend(c?);
        }
        Ok(Self {
            alphabet,
            radix,
            values,
        })
    }

    fn digit(&self, s: Symbol) -> usize {
        self.alphabet.binary_search(&s).expect("symbol outside exact alphabet")
    }

    /// `E_{z~q} E_{x~g} f(π_z(x))` by full enumeration.
    fn expectation(
        &self,
        orders: &[(Vec<usize>, f64)],
        slots: &[Vec<(Symbol, f64)>],
    ) -> f64 {
        let n = slots.len();
        let powers: Vec<usize> = (0..n).map(|p| self.radix.pow(p as u32)).collect();
        let digits: Vec<Vec<(usize, f64)>> = slots
            .iter()
            .map(|s| s.iter().map(|&(sym, w)| (self.digit(sym), w)).collect())
            .collect();
        let mut total = 0.0;
        for (z, wz) in orders {
            let terms: Vec<Vec<(usize, f64)>> = digits
                .iter()
                .enumerate()
                .map(|(i, d)| d.iter().map(|&(dig, w)| (dig * powers[z[i]], w)).collect())
                .collect();
            total += wz * self.sum_products(&terms, 0, 0, 1.0);
        }
        total
    }

    fn sum_products(&self, terms: &[Vec<(usize, f64)>], slot: usize, code: usize, weight: f64) -> f64 {
        if slot == terms.len() {
            return weight * self.values[code];
        }
        terms[slot]
            .iter()
            .map(|&(c, w)| self.sum_products(terms, slot + 1, code + c, weight * w))
            .sum()
    }
}

fn mask_bits(mask: usize, offset: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> (offset + i) & 1 == 1).collect()
}

/// Exact OSV by enumerating all `2^{2n}` coalitions and, for model-backed
/// evaluators, the full supports of both interventions.
pub fn osv_exact(
    seq: &Sequence,
    evaluator: Evaluator<'_>,
    intervention: &InterventionSpec,
    exec: Execution,
) -> Result<AttributionReport> {
    let n = seq.len();
    check_exact_len(n)?;
    let players = 2 * n;
    let coalitions = 1usize << players;
    let mode = intervention.order;
    let full_order = (1usize << n) - 1;
    let project = |mask: usize| {
        if mode == OrderMode::Identity {
            mask | (full_order << n)
        } else {
            mask
        }
    };

    let (table, evaluations) = exec.install(|| -> Result<(Vec<f64>, u64)> {
        match evaluator {
            Evaluator::Oracle(oracle) => {
                let table = exec.map_range(0..coalitions, |mask| {
                    oracle.value(&Coalition::from_mask(n, project(mask) as u64))
                });
                Ok((table, coalitions as u64))
            }
            Evaluator::Model(ctx) => {
                let values = ValueTable::build(&ctx, seq, &intervention.occurrence, exec)?;
                let orders = (0..=full_order)
                    .map(|m| order_support(mode, n, &mask_bits(m, 0, n)))
                    .collect::<Result<Vec<_>>>()?;
                let slots = (0..=full_order)
                    .map(|m| occurrence_support(&intervention.occurrence, seq.tokens(), &mask_bits(m, 0, n)))
                    .collect::<Result<Vec<_>>>()?;
                let table = exec.map_range(0..coalitions, |mask| {
                    let mask = project(mask);
                    values.expectation(&orders[mask >> n], &slots[mask & full_order])
                });
                Ok((table, values.values.len() as u64))
            }
        }
    })??;

    let phi = exec.install(|| shapley_from_table(players, &table))?;
    Ok(AttributionReport {
        occurrence_values: phi[..n].to_vec(),
        order_values: phi[n..].to_vec(),
        mode,
        diagnostics: Diagnostics {
            evaluation_count: evaluations,
            coalition_count: coalitions as u64,
            permutations: 0,
            stderr_occurrence: vec![0.0; n],
            stderr_order: vec![0.0; n],
            seed: None,
            converged: true,
            exact: true,
            full_value: table[coalitions - 1],
            empty_value: table[0],
        },
    })
}

/// Classic Shapley values over the `n` occurrence features, with order left
/// untouched. Order attributions are reported as zero.
pub fn sv_exact(
    seq: &Sequence,
    evaluator: Evaluator<'_>,
    g: &OccurrenceIntervention,
    exec: Execution,
) -> Result<AttributionReport> {
    let n = seq.len();
    check_exact_len(n)?;
    let coalitions = 1usize << n;
    let full_order = coalitions - 1;
    let (table, evaluations) = exec.install(|| -> Result<(Vec<f64>, u64)> {
        match evaluator {
            Evaluator::Oracle(oracle) => {
                let table = exec.map_range(0..coalitions, |mask| {
                    oracle.value(&Coalition::from_mask(n, (mask | full_order << n) as u64))
                });
                Ok((table, coalitions as u64))
            }
            Evaluator::Model(ctx) => {
                let values = ValueTable::build(&ctx, seq, g, exec)?;
                let identity = vec![((0..n).collect::<Vec<_>>(), 1.0)];
                let table = exec
                    .map_range(0..coalitions, |mask| {
                        occurrence_support(g, seq.tokens(), &mask_bits(mask, 0, n))
                            .map(|slots| values.expectation(&identity, &slots))
                    })
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?;
                Ok((table, values.values.len() as u64))
            }
        }
    })??;
    let phi = shapley_from_table(n, &table);
    Ok(AttributionReport {
        occurrence_values: phi,
        order_values: vec![0.0; n],
        mode: OrderMode::Identity,
        diagnostics: Diagnostics {
            evaluation_count: evaluations,
            coalition_count: coalitions as u64,
            permutations: 0,
            stderr_occurrence: vec![0.0; n],
            stderr_order: vec![0.0; n],
            seed: None,
            converged: true,
            exact: true,
            full_value: table[coalitions - 1],
            empty_value: table[0],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn seq(n: usize) -> Sequence {
        Sequence::new((0..n as u32).map(Symbol).collect()).unwrap()
    }

    fn dummy_g() -> InterventionSpec {
        InterventionSpec::new(OccurrenceIntervention::FixedToken(Symbol(0)), OrderMode::Absolute)
    }

    #[test]
    fn marginal_of_linear_game() {
        let n = 2;
        let v = |c: &Coalition| c.len() as f64 / (2 * n) as f64;
        let m = marginal_contribution(&v, &Coalition::empty(n), 0).unwrap();
        assert_eq!(m, 0.25);
    }

    #[test]
    fn marginal_of_grand_coalition_indicator() {
        let v = |c: &Coalition| if c.is_full() { 1.0 } else { 0.0 };
        let s = Coalition::from_indices(2, &[0, 1, 2]).unwrap();
        assert_eq!(marginal_contribution(&v, &s, 3).unwrap(), 1.0);
    }

    #[test]
    fn marginal_contract_errors() {
        let v = |_: &Coalition| 0.0;
        let s = Coalition::from_indices(2, &[0]).unwrap();
        assert!(matches!(marginal_contribution(&v, &s, 4), Err(OsvError::Contract(_))));
        assert!(matches!(marginal_contribution(&v, &s, 0), Err(OsvError::Contract(_))));
    }

    #[test]
    fn permutation_marginals_additive_game() {
        let v = |c: &Coalition| c.len() as f64;
        let m = permutation_marginals(&[0, 1, 2, 3, 4, 5], &v).unwrap();
        assert_eq!(m, vec![1.0; 6]);
        assert!(permutation_marginals(&[0, 0, 1, 2], &v).is_err());
        assert!(permutation_marginals(&[0, 1, 2], &v).is_err());
    }

    #[test]
    fn linear_oracle_splits_evenly() {
        let v = |c: &Coalition| c.len() as f64 / 4.0;
        let r = osv_exact(&seq(2), Evaluator::Oracle(&v), &dummy_g(), Execution::Sequential).unwrap();
        for phi in r.values() {
            assert_abs_diff_eq!(phi, 0.25, epsilon = 1e-12);
        }
        assert_eq!(r.diagnostics.coalition_count, 16);
    }

    #[test]
    fn sv_dummy_and_linear() {
        let g = OccurrenceIntervention::FixedToken(Symbol(0));
        let v = |c: &Coalition| c.occurrence_members().len() as f64 / 4.0;
        let r = sv_exact(&seq(4), Evaluator::Oracle(&v), &g, Execution::Sequential).unwrap();
        for phi in &r.occurrence_values {
            assert_abs_diff_eq!(*phi, 0.25, epsilon = 1e-12);
        }
        let first = |c: &Coalition| if c.contains(0) { 1.0 } else { 0.0 };
        let r = sv_exact(&seq(3), Evaluator::Oracle(&first), &g, Execution::Sequential).unwrap();
        assert_eq!(r.occurrence_values, vec![1.0, 0.0, 0.0]);
        assert_eq!(r.order_values, vec![0.0; 3]);
    }

    #[test]
    fn sv_matches_hand_enumeration() {
        // v over subsets of {0,1,2}, indexed by mask.
        let v = [0.0, 0.3, -0.2, 0.9, 0.5, 0.4, 1.1, 2.0];
        let oracle = |c: &Coalition| {
            let m: usize = c.occurrence_members().iter().map(|i| 1 << i).sum();
            v[m]
        };
        let g = OccurrenceIntervention::FixedToken(Symbol(0));
        let r = sv_exact(&seq(3), Evaluator::Oracle(&oracle), &g, Execution::Sequential).unwrap();
        // Player 0: weights 1/3 (|S|=0), 1/6 (|S|=1), 1/3 (|S|=2).
        let phi0 = (v[1] - v[0]) / 3.0 + (v[3] - v[2]) / 6.0 + (v[5] - v[4]) / 6.0 + (v[7] - v[6]) / 3.0;
        let phi1 = (v[2] - v[0]) / 3.0 + (v[3] - v[1]) / 6.0 + (v[6] - v[4]) / 6.0 + (v[7] - v[5]) / 3.0;
        let phi2 = (v[4] - v[0]) / 3.0 + (v[5] - v[1]) / 6.0 + (v[6] - v[2]) / 6.0 + (v[7] - v[3]) / 3.0;
        assert_abs_diff_eq!(r.occurrence_values[0], phi0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.occurrence_values[1], phi1, epsilon = 1e-12);
        assert_abs_diff_eq!(r.occurrence_values[2], phi2, epsilon = 1e-12);
    }

    #[test]
    fn capacity_errors() {
        let v = |_: &Coalition| 0.0;
        let err = osv_exact(&seq(7), Evaluator::Oracle(&v), &dummy_g(), Execution::Sequential).unwrap_err();
        assert!(matches!(err, OsvError::Capacity(_)));
    }

    #[test]
    fn single_token_order_is_dummy() {
        let v = |c: &Coalition| if c.contains(0) { 0.7 } else { 0.1 };
        let r = osv_exact(&seq(1), Evaluator::Oracle(&v), &dummy_g(), Execution::Sequential).unwrap();
        assert_eq!(r.order_values, vec![0.0]);
        assert_abs_diff_eq!(r.occurrence_values[0], 0.6, epsilon = 1e-12);
    }
}
