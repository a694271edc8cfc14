//! Symmetric InfoNCE over a batch of (clip, caption) pairs.
//!
//! With `S[i][j] = cos(v_i, c_j)` and logits `L = S / tau`:
//!
//! ```text
//! loss = 1/(2B) * sum_i [ (lse_j L[i][j] - L[i][i]) + (lse_j L[j][i] - L[i][i]) ]
//! dloss/dS[i][j] = 1/(2B tau) * (row_softmax[i][j] + col_softmax[i][j] - 2 [i == j])
//! ```
//!
//! The gradient is pushed back through the L2 normalisation and the affine
//! projections by hand.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, Scalar};

use super::Params;

/// Gradients with the same layout as [`Params`] (temperature excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub w_v: Matrix<T>,
    pub b_v: Vec<T>,
    pub w_c: Matrix<T>,
    pub b_c: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    fn zeros_like(p: &Params<T>) -> Self {
        Self {
            w_v: Matrix::zeros(p.w_v.rows(), p.w_v.cols()),
            b_v: vec![T::zero(); p.b_v.len()],
            w_c: Matrix::zeros(p.w_c.rows(), p.w_c.cols()),
            b_c: vec![T::zero(); p.b_c.len()],
        }
    }

    pub fn blocks(&self) -> [&[T]; 4] {
        [self.w_v.as_slice(), &self.b_v, self.w_c.as_slice(), &self.b_c]
    }
}

/// Forward state kept for the backward pass of one branch.
struct Branch<T> {
    input: Vec<T>,
    unit: Vec<T>,
    norm: T,
}

fn forward<T: Scalar>(w: &Matrix<T>, b: &[T], input: Vec<T>) -> Result<Branch<T>> {
    let mut z = w.matvec(&input);
    for (zi, &bi) in z.iter_mut().zip(b) {
        *zi = *zi + bi;
    }
    let norm = dot(&z, &z).sqrt();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(Error::DegenerateEmbedding);
    }
    let unit = z.iter().map(|&x| x / norm).collect();
    Ok(Branch { input, unit, norm })
}

/// Push `d_unit` back through `unit = z / |z|` and `z = W x + b`.
fn backward<T: Scalar>(branch: &Branch<T>, d_unit: &[T], dw: &mut Matrix<T>, db: &mut [T]) {
    let proj = dot(&branch.unit, d_unit);
    let dz: Vec<T> = d_unit
        .iter()
        .zip(&branch.unit)
        .map(|(&g, &u)| (g - u * proj) / branch.norm)
        .collect();
    dw.add_outer(T::one(), &dz, &branch.input);
    for (b, &g) in db.iter_mut().zip(&dz) {
        *b = *b + g;
    }
}

fn log_sum_exp<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> T {
    let max = xs.clone().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<T>().ln()
}

/// Loss and analytic gradients for one batch.
///
/// `clips[i]` holds the segment features of the clip paired with `captions[i]`.
/// A non-finite loss is reported as [`Error::NonFiniteLoss`] with batch 0;
/// callers iterating over batches substitute their own index.
pub fn info_nce<T: Scalar, C: AsRef<[T]>>(
    p: &Params<T>,
    clips: &[Matrix<T>],
    captions: &[C],
) -> Result<(T, Gradients<T>)> {
    let b = clips.len();
    if b == 0 || b != captions.len() {
        return Err(Error::Config(format!(
            "batch needs equal, non-zero clip and caption counts (got {} and {})",
            b,
            captions.len()
        )));
    }
    let mut clip_branches = Vec::with_capacity(b);
    for m in clips {
        let pooled = m.mean_row().ok_or(Error::Empty("segment features"))?;
        clip_branches.push(forward(&p.w_v, &p.b_v, pooled)?);
    }
    let mut cap_branches = Vec::with_capacity(b);
    for c in captions {
        cap_branches.push(forward(&p.w_c, &p.b_c, c.as_ref().to_vec())?);
    }

    let inv_tau = T::from_f64(1.0 / p.temperature);
    let mut logits = Matrix::zeros(b, b);
    for (i, v) in clip_branches.iter().enumerate() {
        for (j, c) in cap_branches.iter().enumerate() {
            logits[(i, j)] = dot(&v.unit, &c.unit) * inv_tau;
        }
    }
    let row_lse: Vec<T> = (0..b).map(|i| log_sum_exp(logits.row(i).iter().copied())).collect();
    let col_lse: Vec<T> = (0..b).map(|j| log_sum_exp((0..b).map(|i| logits[(i, j)]))).collect();

    let mut total = T::zero();
    for i in 0..b {
        total = total + (row_lse[i] - logits[(i, i)]) + (col_lse[i] - logits[(i, i)]);
    }
    let two_b = T::from_f64(2.0 * b as f64);
    let loss = total / two_b;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { batch: 0 });
    }

    // dloss/dS
    let scale = inv_tau / two_b;
    let mut g = Matrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            let l = logits[(i, j)];
            let mut v = (l - row_lse[i]).exp() + (l - col_lse[j]).exp();
            if i == j {
                v = v - T::from_f64(2.0);
            }
            g[(i, j)] = v * scale;
        }
    }

    let mut grads = Gradients::zeros_like(p);
    let d_out = p.output_dim();
    for (i, branch) in clip_branches.iter().enumerate() {
        let mut d_unit = vec![T::zero(); d_out];
        for (j, c) in cap_branches.iter().enumerate() {
            let gij = g[(i, j)];
            for (d, &x) in d_unit.iter_mut().zip(&c.unit) {
                *d = *d + gij * x;
            }
        }
        backward(branch, &d_unit, &mut grads.w_v, &mut grads.b_v);
    }
    for (j, branch) in cap_branches.iter().enumerate() {
        let mut d_unit = vec![T::zero(); d_out];
        for (i, v) in clip_branches.iter().enumerate() {
            let gij = g[(i, j)];
            for (d, &x) in d_unit.iter_mut().zip(&v.unit) {
                *d = *d + gij * x;
            }
        }
        backward(branch, &d_unit, &mut grads.w_c, &mut grads.b_c);
    }
    Ok((loss, grads))
}
