//! Seeded synthetic corpus with known caption-to-interval alignment.
//!
//! Each caption owns a random unit direction. Feature rows inside its
//! ground-truth interval point along that direction (plus noise); every
//! other row is isotropic noise. Ground-truth intervals start and end on
//! whole seconds so that they line up with the one-row-per-second features.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{sample_timestamp, CaptionAnnotation, FeatureStore, Split, VideoRecord};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::timeline::Interval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_train_videos: usize,
    pub n_test_videos: usize,
    pub captions_per_video: usize,
    pub video_len_s: f64,
    /// Ground-truth lengths are whole seconds drawn uniformly from this range.
    pub gt_len_range: (f64, f64),
    pub dim: usize,
    pub noise_sigma: f64,
    pub caption_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train_videos: 200,
            n_test_videos: 50,
            captions_per_video: 5,
            video_len_s: 120.0,
            gt_len_range: (4.0, 12.0),
            dim: 32,
            noise_sigma: 0.3,
            caption_noise_sigma: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn len_bounds(&self) -> (usize, usize) {
        (
            self.gt_len_range.0.ceil().max(1.0) as usize,
            self.gt_len_range.1.floor() as usize,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.captions_per_video == 0 {
            return Err(Error::Config("dim and captions_per_video must be positive".into()));
        }
        if !(self.video_len_s > 0.0) || !self.video_len_s.is_finite() {
            return Err(Error::Config(format!("bad video_len_s {}", self.video_len_s)));
        }
        if !(self.noise_sigma >= 0.0) || !(self.caption_noise_sigma >= 0.0) {
            return Err(Error::Config("noise sigmas must be non-negative".into()));
        }
        let (lo, hi) = self.len_bounds();
        if lo > hi {
            return Err(Error::Placement(format!(
                "gt_len_range {:?} contains no whole-second length",
                self.gt_len_range
            )));
        }
        if self.captions_per_video as f64 * self.gt_len_range.1 > self.video_len_s {
            return Err(Error::Placement(format!(
                "{} captions x max gt length {}s exceed video length {}s",
                self.captions_per_video, self.gt_len_range.1, self.video_len_s
            )));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit_f32(v: &[f64]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

fn perturbed(rng: &mut ChaCha8Rng, u: &[f64], sigma: f64) -> Vec<f32> {
    if sigma == 0.0 {
        return unit_f32(u);
    }
    let g = gaussian(rng, u.len());
    let v: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a + sigma * b).collect();
    unit_f32(&v)
}

/// Generate a corpus. Deterministic for a given config.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<(FeatureStore, Vec<CaptionAnnotation>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let n_rows = cfg.video_len_s.ceil() as usize;
    let whole_secs = cfg.video_len_s.floor() as usize;
    let (lo, hi) = cfg.len_bounds();
    let k = cfg.captions_per_video;

    let mut videos = Vec::new();
    let mut captions = BTreeMap::new();
    let mut annotations = Vec::new();

    let splits = std::iter::repeat_n(Split::Train, cfg.n_train_videos)
        .enumerate()
        .chain(std::iter::repeat_n(Split::Test, cfg.n_test_videos).enumerate());
    for (vi, split) in splits {
        let video_id = match split {
            Split::Train => format!("train_v{vi:04}"),
            Split::Test => format!("test_v{vi:04}"),
        };
        let lens: Vec<usize> = (0..k).map(|_| rng.random_range(lo..=hi)).collect();
        let slack = whole_secs - lens.iter().sum::<usize>();
        // Stars and bars: sorted cut points give the gaps before each caption.
        let mut cuts: Vec<usize> = (0..k).map(|_| rng.random_range(0..=slack)).collect();
        cuts.sort_unstable();

        let mut rows: Vec<Option<usize>> = vec![None; n_rows];
        let mut spans = Vec::with_capacity(k);
        let mut used = 0;
        for (j, (&len, &cut)) in lens.iter().zip(&cuts).enumerate() {
            let start = cut + used;
            used += len;
            rows[start..start + len].iter_mut().for_each(|r| *r = Some(j));
            spans.push(Interval::new(start as f64, (start + len) as f64)?);
        }

        let dirs: Vec<Vec<f64>> = (0..k)
            .map(|_| unit_f32(&gaussian(&mut rng, d)).iter().map(|&x| x as f64).collect())
            .collect();
        let mut data = Vec::with_capacity(n_rows * d);
        for owner in &rows {
            let row = match owner {
                Some(j) => perturbed(&mut rng, &dirs[*j], cfg.noise_sigma),
                None => unit_f32(&gaussian(&mut rng, d)),
            };
            data.extend(row);
        }
        for (j, gt) in spans.into_iter().enumerate() {
            let caption_id = format!("{video_id}_c{j}");
            captions.insert(
                caption_id.clone(),
                perturbed(&mut rng, &dirs[j], cfg.caption_noise_sigma),
            );
            annotations.push(CaptionAnnotation {
                caption_id,
                video_id: video_id.clone(),
                timestamp_s: sample_timestamp(&gt, &mut rng),
                gt_interval: Some(gt),
                split,
                text: None,
            });
        }
        videos.push(VideoRecord {
            video_id,
            duration_s: cfg.video_len_s,
            features: Matrix::from_vec(n_rows, d, data),
        });
    }
    let store = FeatureStore::new(videos, captions)?;
    super::sort_annotations(&mut annotations);
    Ok((store, annotations))
}
