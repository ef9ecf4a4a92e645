use crate::real::Real;
use crate::sampling::NoiseSequence;

/// A `T × m` matrix of commands, row-major by time step.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSequence<S: Real> {
    horizon: usize,
    dim: usize,
    values: Vec<S>,
}

impl<S: Real> ControlSequence<S> {
    pub fn zeros(horizon: usize, dim: usize) -> Self {
        Self {
            horizon,
            dim,
            values: vec![S::zero(); horizon * dim],
        }
    }

    /// Builds from per-step rows; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<S>]) -> Option<Self> {
        let dim = rows.first()?.len();
        if rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        Some(Self {
            horizon: rows.len(),
            dim,
            values: rows.concat(),
        })
    }

    pub fn constant(horizon: usize, row: &[S]) -> Self {
        Self {
            horizon,
            dim: row.len(),
            values: row.repeat(horizon),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, t: usize, j: usize) -> S {
        self.values[t * self.dim + j]
    }

    pub fn row(&self, t: usize) -> &[S] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.values
    }

    /// `self + ε` entrywise.
    pub fn plus(&self, noise: &NoiseSequence<S>) -> Self {
        debug_assert_eq!((noise.horizon(), noise.dim()), (self.horizon, self.dim));
        let values = self
            .values
            .iter()
            .zip(noise.as_slice())
            .map(|(a, b)| *a + *b)
            .collect();
        Self {
            horizon: self.horizon,
            dim: self.dim,
            values,
        }
    }

    /// Clamps channel `j` of every row into `limits[j]`.
    pub fn clamp(&mut self, limits: &[[S; 2]]) {
        for row in self.values.chunks_mut(self.dim) {
            for (x, [lo, hi]) in row.iter_mut().zip(limits) {
                *x = x.max(*lo).min(*hi);
            }
        }
    }
}
