use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampled values of a function on strictly increasing nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "grid function has {} nodes but {} values",
                nodes.len(),
                values.len()
            )));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("grid nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes, values })
    }

    pub fn from_fn(nodes: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = nodes.iter().map(|&x| f(x)).collect();
        Self::new(nodes, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.values.iter().copied())
    }

    /// Largest `|f(x) − f(−x)|` over mirrored node pairs, assuming the nodes
    /// are symmetric about the origin.
    pub fn reflection_defect(&self) -> f64 {
        let n = self.values.len();
        (0..n / 2)
            .map(|i| (self.values[i] - self.values[n - 1 - i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
