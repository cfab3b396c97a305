//! Forward pass, softmax cross-entropy and analytic backpropagation for a
//! fully connected ReLU network stored as one flat parameter vector.
//!
//! The architecture is read off the [`LayerLayout`]: each (weight, bias) pair
//! is one dense layer, every layer but the last is followed by a ReLU, and the
//! last layer produces logits.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::nn::{Batch, Gradient, LayerLayout, LayerSlice, Matrix, ParamVector};
use crate::scalar::{axpy, dot, Scalar};

type DenseLayer<'a> = (&'a LayerSlice, &'a LayerSlice);

fn effective<'a, T: Scalar>(params: &'a ParamVector<T>, mask: Option<&Mask>) -> Result<Cow<'a, [T]>> {
    match mask {
        None => Ok(Cow::Borrowed(params.values())),
        Some(m) => Ok(Cow::Owned(params.masked(m)?.into_values())),
    }
}

fn check_input<T: Scalar>(layout: &LayerLayout, features: &Matrix<T>) -> Result<()> {
    Error::check_len("feature dimension", layout.input_dim(), features.cols())
}

/// `out[s] = in[s] · W + b` for every row `s`.
fn affine<T: Scalar>(values: &[T], (w, b): DenseLayer<'_>, input: &[T], rows: usize) -> Vec<T> {
    let (fan_in, fan_out) = (w.fan_in, w.fan_out);
    let weights = &values[w.range()];
    let bias = &values[b.range()];
    let mut out = Vec::with_capacity(rows * fan_out);
    for s in 0..rows {
        out.extend_from_slice(bias);
        let out_row = &mut out[s * fan_out..(s + 1) * fan_out];
        let in_row = &input[s * fan_in..(s + 1) * fan_in];
        for (i, &x) in in_row.iter().enumerate() {
            if x != T::zero() {
                axpy(out_row, x, &weights[i * fan_out..(i + 1) * fan_out]);
            }
        }
    }
    out
}

fn relu_in_place<T: Scalar>(xs: &mut [T]) {
    for x in xs {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Runs the network and returns the activations entering every layer followed
/// by the logits.
fn trace<T: Scalar>(values: &[T], layers: &[DenseLayer<'_>], features: &Matrix<T>) -> Vec<Vec<T>> {
    let rows = features.rows();
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(features.as_slice().to_vec());
    for (l, &layer) in layers.iter().enumerate() {
        let mut z = affine(values, layer, &acts[l], rows);
        if l + 1 < layers.len() {
            relu_in_place(&mut z);
        }
        acts.push(z);
    }
    acts
}

/// Logits (`B x N`) of the network `params ⊙ mask` on the batch features.
/// `mask = None` behaves as all-ones.
pub fn forward<T: Scalar>(params: &ParamVector<T>, mask: Option<&Mask>, batch: &Batch<T>) -> Result<Matrix<T>> {
    logits(params, mask, batch.features())
}

/// Forward pass on a bare feature matrix.
pub fn logits<T: Scalar>(params: &ParamVector<T>, mask: Option<&Mask>, features: &Matrix<T>) -> Result<Matrix<T>> {
    let layout = params.layout();
    check_input(layout, features)?;
    let layers = layout.dense_layers()?;
    let values = effective(params, mask)?;
    let mut acts = trace(&values, &layers, features);
    let out = acts.pop().expect("trace yields logits");
    Matrix::new(features.rows(), layout.output_dim(), out)
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Mean softmax cross-entropy over the rows of `logits`.
pub fn loss_ce<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<T> {
    Error::check_len("labels", logits.rows(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let mut total = T::zero();
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        if y >= row.len() {
            return Err(Error::invalid(format!("label {y} out of range")));
        }
        total += log_sum_exp(row) - row[y];
    }
    Ok(total / T::lit(labels.len() as f64))
}

/// Mean cross-entropy of `params ⊙ mask` on `batch`.
pub fn batch_loss<T: Scalar>(params: &ParamVector<T>, mask: Option<&Mask>, batch: &Batch<T>) -> Result<T> {
    loss_ce(&forward(params, mask, batch)?, batch.labels())
}

/// Gradient of the mean cross-entropy of `params ⊙ mask` with respect to
/// `params`. Coordinates outside the mask are exactly zero.
pub fn backward<T: Scalar>(params: &ParamVector<T>, mask: Option<&Mask>, batch: &Batch<T>) -> Result<Gradient<T>> {
    Ok(loss_and_backward(params, mask, batch)?.1)
}

/// Loss and gradient from a single forward/backward sweep.
pub fn loss_and_backward<T: Scalar>(
    params: &ParamVector<T>,
    mask: Option<&Mask>,
    batch: &Batch<T>,
) -> Result<(T, Gradient<T>)> {
    let layout = params.layout();
    check_input(layout, batch.features())?;
    Error::check_len("number of classes", layout.output_dim(), batch.num_classes())?;
    let layers = layout.dense_layers()?;
    let values = effective(params, mask)?;
    let rows = batch.len();
    let scale = T::one() / T::lit(rows as f64);

    let acts = trace(&values, &layers, batch.features());
    let n = layout.output_dim();

    // dL/dlogits = (softmax - onehot) / B
    let mut loss = T::zero();
    let mut delta = acts[layers.len()].clone();
    for (s, &y) in batch.labels().iter().enumerate() {
        let row = &mut delta[s * n..(s + 1) * n];
        let lse = log_sum_exp(row);
        loss += lse - row[y];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() * scale;
        }
        row[y] -= scale;
    }
    loss *= scale;

    let mut grad = vec![T::zero(); layout.total_params()];
    for l in (0..layers.len()).rev() {
        let (w, b) = layers[l];
        let (fan_in, fan_out) = (w.fan_in, w.fan_out);
        let input = &acts[l];
        {
            let gw = &mut grad[w.range()];
            for s in 0..rows {
                let d_row = &delta[s * fan_out..(s + 1) * fan_out];
                for (i, &a) in input[s * fan_in..(s + 1) * fan_in].iter().enumerate() {
                    if a != T::zero() {
                        axpy(&mut gw[i * fan_out..(i + 1) * fan_out], a, d_row);
                    }
                }
            }
        }
        {
            let gb = &mut grad[b.range()];
            for s in 0..rows {
                for (g, &d) in gb.iter_mut().zip(&delta[s * fan_out..(s + 1) * fan_out]) {
                    *g += d;
                }
            }
        }
        if l == 0 {
            break;
        }
        // Propagate through W and the ReLU that produced `input`.
        let weights = &values[w.range()];
        let mut prev = vec![T::zero(); rows * fan_in];
        for s in 0..rows {
            let d_row = &delta[s * fan_out..(s + 1) * fan_out];
            for i in 0..fan_in {
                if input[s * fan_in + i] > T::zero() {
                    prev[s * fan_in + i] = dot(&weights[i * fan_out..(i + 1) * fan_out], d_row);
                }
            }
        }
        delta = prev;
    }

    if let Some(m) = mask {
        for (g, &on) in grad.iter_mut().zip(m.bits()) {
            if !on {
                *g = T::zero();
            }
        }
    }
    Ok((loss, Gradient::from_parts_unchecked(layout.clone(), grad)))
}

/// Predicted class per row of `features`.
pub fn predict<T: Scalar>(params: &ParamVector<T>, mask: Option<&Mask>, features: &Matrix<T>) -> Result<Vec<usize>> {
    Ok(logits(params, mask, features)?.argmax_rows())
}
