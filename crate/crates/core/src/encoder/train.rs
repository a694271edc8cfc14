use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{info_nce, ClipAssignment, EncoderParams};
use crate::corpus::FeatureStore;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::timeline::{segment_grid, DEFAULT_SEG_LEN_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-3,
            epochs: 40,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("bad learning_rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("adam decay rates must lie in [0, 1) and eps > 0".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, one buffer per parameter block.
#[derive(Debug, Clone)]
struct Moments {
    m: [Vec<f32>; 4],
    v: [Vec<f32>; 4],
}

/// Owns the parameters being trained together with the optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    params: EncoderParams,
    moments: Moments,
    steps: u64,
}

impl Trainer {
    pub fn new(params: EncoderParams) -> Self {
        let zeros = |p: &EncoderParams| p.blocks().map(|b| vec![0.0f32; b.len()]);
        let moments = Moments {
            m: zeros(&params),
            v: zeros(&params),
        };
        Self {
            params,
            moments,
            steps: 0,
        }
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn into_params(self) -> EncoderParams {
        self.params
    }

    /// One pass over `clips` in an `rng`-shuffled order. Batches smaller than
    /// two pairs are skipped. Returns the mean batch loss.
    pub fn train_epoch<R: Rng + ?Sized>(
        &mut self,
        store: &FeatureStore,
        clips: &ClipAssignment,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<f32> {
        cfg.validate()?;
        let mut ids: Vec<&String> = clips.keys().collect();
        ids.shuffle(rng);

        let mut total = 0.0f64;
        let mut n_batches = 0usize;
        for (batch_idx, chunk) in ids.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let mut seg_feats: Vec<Matrix<f32>> = Vec::with_capacity(chunk.len());
            let mut caps: Vec<&[f32]> = Vec::with_capacity(chunk.len());
            for id in chunk {
                let clip = &clips[*id];
                let grid = segment_grid(&clip.interval, DEFAULT_SEG_LEN_S)?;
                seg_feats.push(
                    store
                        .segment_features(&clip.video_id, &grid)
                        .map_err(|e| Error::for_caption(id, e))?,
                );
                caps.push(store.caption_feature(id)?);
            }
            let (loss, grads) = info_nce(&self.params, &seg_feats, &caps).map_err(|e| match e {
                Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { batch: batch_idx },
                other => other,
            })?;
            self.step(&grads.blocks(), cfg);
            total += loss as f64;
            n_batches += 1;
        }
        if n_batches == 0 {
            return Err(Error::Empty("training set (need at least two clips per batch)"));
        }
        Ok((total / n_batches as f64) as f32)
    }

    fn step(&mut self, grads: &[&[f32]; 4], cfg: &TrainConfig) {
        self.steps += 1;
        let lr = cfg.learning_rate as f32;
        match cfg.optimizer {
            OptimizerKind::Sgd => {
                for (p, g) in self.params.blocks_mut().into_iter().zip(grads) {
                    for (x, &gx) in p.iter_mut().zip(g.iter()) {
                        *x -= lr * gx;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (cfg.beta1, cfg.beta2);
                let t = self.steps as i32;
                let c1 = (1.0 - b1.powi(t)) as f32;
                let c2 = (1.0 - b2.powi(t)) as f32;
                let (b1, b2, eps) = (b1 as f32, b2 as f32, cfg.eps as f32);
                let Moments { m, v } = &mut self.moments;
                for (((p, g), m), v) in self
                    .params
                    .blocks_mut()
                    .into_iter()
                    .zip(grads)
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    for i in 0..p.len() {
                        let gi = g[i];
                        m[i] = b1 * m[i] + (1.0 - b1) * gi;
                        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}
