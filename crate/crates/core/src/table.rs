//! Dense state-action tables.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};

/// Row-major `|S| x |A|` table of reals; serializes as a nested `[s][a]` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SaTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl SaTable {
    pub fn filled(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, 0.0)
    }

    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                values.push(f(s, a));
            }
        }
        Self {
            num_states,
            num_actions,
            values,
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(OpeError::invalid("table", "no rows"));
        }
        let num_actions = rows[0].len();
        if num_actions == 0 {
            return Err(OpeError::invalid("table[0]", "empty row"));
        }
        let num_states = rows.len();
        let mut values = Vec::with_capacity(num_states * num_actions);
        for (s, row) in rows.into_iter().enumerate() {
            if row.len() != num_actions {
                return Err(OpeError::invalid(
                    format!("table[{s}]"),
                    format!("expected {num_actions} entries, found {}", row.len()),
                ));
            }
            values.extend(row);
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.num_actions)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + r * (other - self)`, entrywise.
    pub fn lerp(&self, other: &Self, r: f64) -> Self {
        assert_eq!(self.values.len(), other.values.len());
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + r * (b - a))
                .collect(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}

impl Index<(usize, usize)> for SaTable {
    type Output = f64;

    fn index(&self, (s, a): (usize, usize)) -> &f64 {
        &self.values[s * self.num_actions + a]
    }
}

impl IndexMut<(usize, usize)> for SaTable {
    fn index_mut(&mut self, (s, a): (usize, usize)) -> &mut f64 {
        &mut self.values[s * self.num_actions + a]
    }
}

impl TryFrom<Vec<Vec<f64>>> for SaTable {
    type Error = OpeError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<SaTable> for Vec<Vec<f64>> {
    fn from(t: SaTable) -> Self {
        t.to_rows()
    }
}

/// Next-state distributions `P(s' | s, a)`, stored as `[s][a][s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TransitionTable {
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_states as f64;
        Self {
            num_states,
            num_actions,
            probs: vec![p; num_states * num_actions * num_states],
        }
    }

    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut probs = Vec::with_capacity(num_states * num_actions * num_states);
        for s in 0..num_states {
            for a in 0..num_actions {
                for next in 0..num_states {
                    probs.push(f(s, a, next));
                }
            }
        }
        Self {
            num_states,
            num_actions,
            probs,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    pub fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &mut self.probs[start..start + self.num_states]
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.num_states)
            .map(|s| {
                (0..self.num_actions)
                    .map(|a| self.row(s, a).to_vec())
                    .collect()
            })
            .collect()
    }
}

/// Checks that `probs` is a probability vector: finite, nonnegative, summing to 1 within `1e-12`.
pub(crate) fn check_distribution(path: &str, probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(OpeError::invalid(path, "empty distribution"));
    }
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(OpeError::invalid(
                format!("{path}[{i}]"),
                format!("probability {p} is not a finite nonnegative number"),
            ));
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(OpeError::invalid(
            path,
            format!("probabilities sum to {total}, expected 1"),
        ));
    }
    Ok(())
}
