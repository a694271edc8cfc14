//! Dual encoder: one affine projection per modality followed by L2
//! normalisation, scored by cosine similarity.
//!
//! The same parameter type plays warm-up model, student and teacher.
//! Parameters are generic over the float type so that gradient checks can
//! run the whole forward/backward pass in `f64`; training uses `f32`.

mod checkpoint;
mod loss;
mod train;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, normalized, Matrix, Scalar};
use crate::timeline::Interval;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use loss::{info_nce, Gradients};
pub use train::{OptimizerKind, TrainConfig, Trainer};

/// Default softmax temperature; fixed, not learned.
pub const DEFAULT_TEMPERATURE: f64 = 0.07;

#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// Clip projection, `d_out × d`.
    pub w_v: Matrix<T>,
    pub b_v: Vec<T>,
    /// Caption projection, `d_out × d`.
    pub w_c: Matrix<T>,
    pub b_c: Vec<T>,
    pub temperature: f64,
}

/// Single-precision parameters used for training and checkpoints.
pub type EncoderParams = Params<f32>;

impl<T: Scalar> Params<T> {
    /// Weights uniform in `[-1/sqrt(d), 1/sqrt(d)]`, zero biases.
    pub fn init(d: usize, d_out: usize, temperature: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (d as f64).sqrt();
        let mut draw = |n: usize| -> Vec<T> { (0..n).map(|_| T::from_f64(rng.random_range(-bound..=bound))).collect() };
        let w_v = Matrix::from_vec(d_out, d, draw(d_out * d));
        let w_c = Matrix::from_vec(d_out, d, draw(d_out * d));
        Self {
            w_v,
            b_v: vec![T::zero(); d_out],
            w_c,
            b_c: vec![T::zero(); d_out],
            temperature,
        }
    }

    /// Identity projections with zero biases (`d_out = d`).
    pub fn identity(d: usize, temperature: f64) -> Self {
        Self {
            w_v: Matrix::identity(d),
            b_v: vec![T::zero(); d],
            w_c: Matrix::identity(d),
            b_c: vec![T::zero(); d],
            temperature,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_v.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w_v.rows()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        let cast_vec = |v: &[T]| v.iter().map(|&x| U::from_f64(x.to_f64())).collect();
        Params {
            w_v: self.w_v.cast(),
            b_v: cast_vec(&self.b_v),
            w_c: self.w_c.cast(),
            b_c: cast_vec(&self.b_c),
            temperature: self.temperature,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w_v.is_finite()
            && self.w_c.is_finite()
            && self.b_v.iter().chain(&self.b_c).all(|x| x.is_finite())
            && self.temperature.is_finite()
            && self.temperature > 0.0
    }

    /// Parameter blocks in checkpoint order: `w_v, b_v, w_c, b_c`.
    pub fn blocks(&self) -> [&[T]; 4] {
        [self.w_v.as_slice(), &self.b_v, self.w_c.as_slice(), &self.b_c]
    }

    pub fn blocks_mut(&mut self) -> [&mut [T]; 4] {
        [
            self.w_v.as_mut_slice(),
            &mut self.b_v,
            self.w_c.as_mut_slice(),
            &mut self.b_c,
        ]
    }

    /// Unit clip embedding from the mean of the segment rows.
    pub fn embed_clip(&self, seg_feats: &Matrix<T>) -> Result<Vec<T>> {
        let pooled = seg_feats.mean_row().ok_or(Error::Empty("segment features"))?;
        self.embed_pooled_clip(&pooled)
    }

    pub fn embed_pooled_clip(&self, pooled: &[T]) -> Result<Vec<T>> {
        project(&self.w_v, &self.b_v, pooled)
    }

    pub fn embed_caption(&self, cap_feat: &[T]) -> Result<Vec<T>> {
        project(&self.w_c, &self.b_c, cap_feat)
    }
}

fn project<T: Scalar>(w: &Matrix<T>, b: &[T], x: &[T]) -> Result<Vec<T>> {
    if x.len() != w.cols() {
        return Err(Error::Config(format!(
            "feature dimension {} does not match encoder input {}",
            x.len(),
            w.cols()
        )));
    }
    let mut z = w.matvec(x);
    for (zi, &bi) in z.iter_mut().zip(b) {
        *zi = *zi + bi;
    }
    normalized(&z).ok_or(Error::DegenerateEmbedding)
}

/// Cosine similarity of two unit vectors.
pub fn similarity<T: Scalar>(u: &[T], v: &[T]) -> T {
    dot(u, v)
}

/// The clip currently paired with a caption.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRef {
    pub video_id: String,
    pub interval: Interval,
}

/// Caption id → training clip, iterated in caption-id order.
pub type ClipAssignment = BTreeMap<String, ClipRef>;
