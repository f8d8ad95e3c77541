//! Named parameter storage shared by the encoders and the denoiser.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Adds a matrix drawn uniformly from `±sqrt(6 / (fan_in + fan_out))`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> usize {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        self.push(name, Matrix::from_vec(rows, cols, data))
    }

    /// Adds a weight matrix with fans taken from its shape.
    pub fn add_weight<R: Rng + ?Sized>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> usize {
        self.add_uniform(name, rows, cols, rows, cols, rng)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        self.push(name, Matrix::zeros(rows, cols))
    }

    pub fn push(&mut self, name: &str, value: Matrix) -> usize {
        assert!(!self.names.iter().any(|n| n == name), "duplicate parameter {name}");
        self.names.push(name.to_string());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: usize) -> &Matrix {
        &self.values[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Matrix {
        &mut self.values[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Matrix::is_finite)
    }

    /// Places every parameter on the tape; `vars[id]` is parameter `id`.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().enumerate().map(|(id, v)| tape.param(id, v)).collect()
    }

    /// Same names and shapes in the same order.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.names == other.names && self.values.iter().zip(&other.values).all(|(a, b)| a.shape() == b.shape())
    }

    pub fn set_all_zero(&mut self) {
        for v in &mut self.values {
            v.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}
