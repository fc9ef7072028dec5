//! Block-partitioned vectors and diagonal block metrics.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Partition of a flat vector into `N` consecutive blocks of sizes `n_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStructure {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockStructure {
    pub fn new(dims: Vec<usize>) -> Result<Arc<Self>> {
        if dims.is_empty() {
            return Err(Error::InvalidStructure("at least one block is required".into()));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidStructure(format!("block {i} has zero dimension")));
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        offsets.push(0);
        for d in &dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        Ok(Arc::new(Self { dims, offsets }))
    }

    /// `n_blocks` blocks, all of dimension `dim`.
    pub fn uniform(n_blocks: usize, dim: usize) -> Result<Arc<Self>> {
        Self::new(vec![dim; n_blocks])
    }

    pub fn n_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, block: usize) -> usize {
        self.dims[block]
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn range(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    /// Common block dimension, if every block has the same size.
    pub fn common_dim(&self) -> Option<usize> {
        let d = self.dims[0];
        self.dims.iter().all(|&x| x == d).then_some(d)
    }
}

/// A vector `x = (x_1, ..., x_N)` stored flat, with views onto each block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    structure: Arc<BlockStructure>,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(structure: &Arc<BlockStructure>) -> Self {
        Self {
            structure: Arc::clone(structure),
            data: vec![0.0; structure.total_dim()],
        }
    }

    pub fn from_vec(structure: &Arc<BlockStructure>, data: Vec<f64>) -> Result<Self> {
        if data.len() != structure.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: structure.total_dim(),
                actual: data.len(),
            });
        }
        let v = Self {
            structure: Arc::clone(structure),
            data,
        };
        v.check_finite()?;
        Ok(v)
    }

    /// Builds a vector (and its structure) from per-block slices.
    pub fn from_blocks<B: AsRef<[f64]>>(blocks: &[B]) -> Result<Self> {
        let structure = BlockStructure::new(blocks.iter().map(|b| b.as_ref().len()).collect())?;
        let data = blocks.iter().flat_map(|b| b.as_ref().iter().copied()).collect();
        Self::from_vec(&structure, data)
    }

    /// Every block equal to `block`.
    pub fn repeated(structure: &Arc<BlockStructure>, block: &[f64]) -> Result<Self> {
        let mut v = Self::zeros(structure);
        for i in 0..structure.n_blocks() {
            if structure.dim(i) != block.len() {
                return Err(Error::DimensionMismatch {
                    expected: structure.dim(i),
                    actual: block.len(),
                });
            }
            v.block_mut(i).copy_from_slice(block);
        }
        v.check_finite()?;
        Ok(v)
    }

    pub fn structure(&self) -> &Arc<BlockStructure> {
        &self.structure
    }

    pub fn n_blocks(&self) -> usize {
        self.structure.n_blocks()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[self.structure.range(i)]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.structure.range(i);
        &mut self.data[r]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_blocks()).map(move |i| self.block(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Fails unless `self` has exactly the block layout `structure`.
    pub fn ensure_conforms(&self, structure: &BlockStructure) -> Result<()> {
        if std::ptr::eq(&*self.structure, structure) || *self.structure == *structure {
            return Ok(());
        }
        Err(Error::DimensionMismatch {
            expected: structure.total_dim(),
            actual: self.data.len(),
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        for i in 0..self.n_blocks() {
            if self.block(i).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    block: i,
                    what: "vector entry",
                });
            }
        }
        Ok(())
    }

    /// Copies the blocks listed in `indices` from `other`.
    pub fn copy_blocks_from(&mut self, other: &BlockVector, indices: &[usize]) {
        for &i in indices {
            let r = self.structure.range(i);
            self.data[r.clone()].copy_from_slice(&other.data[r]);
        }
    }

    pub fn sub(&self, other: &BlockVector) -> BlockVector {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        BlockVector {
            structure: Arc::clone(&self.structure),
            data,
        }
    }

    pub fn dot(&self, other: &BlockVector) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Largest absolute componentwise difference.
    pub fn max_abs_diff(&self, other: &BlockVector) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Squared block norm `sum_i w_i ||v_i||^2`.
pub fn norm_sq_in_metric(v: &BlockVector, weights: &[f64]) -> Result<f64> {
    if weights.len() != v.n_blocks() {
        return Err(Error::DimensionMismatch {
            expected: v.n_blocks(),
            actual: weights.len(),
        });
    }
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if w < 0.0 || w.is_nan() {
            return Err(Error::Contract(format!("metric weight {w} of block {i} is negative")));
        }
        acc += w * v.block(i).iter().map(|x| x * x).sum::<f64>();
    }
    Ok(acc)
}

/// Block-weighted norm `sqrt(sum_i w_i ||v_i||^2)`.
pub fn norm_in_metric(v: &BlockVector, weights: &[f64]) -> Result<f64> {
    norm_sq_in_metric(v, weights).map(f64::sqrt)
}
