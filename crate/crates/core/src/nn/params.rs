use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::nn::LayerLayout;
use crate::scalar::Scalar;

/// Flat parameter vector of a network together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    values: Vec<T>,
    layout: Arc<LayerLayout>,
}

impl<T: Scalar> ParamVector<T> {
    pub fn new(layout: Arc<LayerLayout>, values: Vec<T>) -> Result<Self> {
        Error::check_len("parameter vector", layout.total_params(), values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("parameter {i} is not finite")));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: Arc<LayerLayout>) -> Self {
        let values = vec![T::zero(); layout.total_params()];
        Self { values, layout }
    }

    pub(crate) fn from_parts_unchecked(layout: Arc<LayerLayout>, values: Vec<T>) -> Self {
        debug_assert_eq!(layout.total_params(), values.len());
        Self { values, layout }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn layout(&self) -> &Arc<LayerLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self ⊙ mask`.
    pub fn masked(&self, mask: &Mask) -> Result<Self> {
        Error::check_len("mask", self.len(), mask.len())?;
        let values = self
            .values
            .iter()
            .zip(mask.bits())
            .map(|(&v, &on)| if on { v } else { T::zero() })
            .collect();
        Ok(Self::from_parts_unchecked(self.layout.clone(), values))
    }

    pub fn same_layout(&self, other: &LayerLayout) -> bool {
        *self.layout == *other
    }

    /// Converts to another scalar precision.
    pub fn cast<U: Scalar>(&self) -> ParamVector<U> {
        ParamVector {
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
            layout: self.layout.clone(),
        }
    }
}

/// Gradient of the loss with respect to every entry of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    values: Vec<T>,
    layout: Arc<LayerLayout>,
}

impl<T: Scalar> Gradient<T> {
    pub(crate) fn from_parts_unchecked(layout: Arc<LayerLayout>, values: Vec<T>) -> Self {
        debug_assert_eq!(layout.total_params(), values.len());
        Self { values, layout }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn layout(&self) -> &Arc<LayerLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Error::check_len("matrix data", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    /// Index of the largest entry in each row (first one on ties).
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// A minibatch of labelled examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    features: Matrix<T>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Scalar> Batch<T> {
    pub fn new(features: Matrix<T>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("batch"));
        }
        Error::check_len("batch labels", features.rows(), labels.len())?;
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
