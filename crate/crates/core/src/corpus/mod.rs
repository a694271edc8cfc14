//! Annotations, per-second video features, and caption features.

mod io;
mod synth;

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::timeline::{Interval, SegmentGrid};

pub use io::{
    load_annotations, load_features, read_annotations, read_feature_file, write_annotations, write_feature_file,
    write_features, CAPTIONS_FEAT, CAPTIONS_IDX, FEATURE_MAGIC,
};
pub use synth::{synth_corpus, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One caption with its single timestamp; `gt_interval` is only known for
/// synthetic or fully labelled data.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionAnnotation {
    pub caption_id: String,
    pub video_id: String,
    pub timestamp_s: f64,
    pub gt_interval: Option<Interval>,
    pub split: Split,
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    pub duration_s: f64,
    /// One row per second of video.
    pub features: Matrix<f32>,
}

impl VideoRecord {
    pub fn span(&self) -> Interval {
        Interval::new(0.0, self.duration_s).expect("video duration validated at construction")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    videos: BTreeMap<String, VideoRecord>,
    caption_features: BTreeMap<String, Vec<f32>>,
}

impl FeatureStore {
    pub fn new(
        videos: impl IntoIterator<Item = VideoRecord>,
        caption_features: BTreeMap<String, Vec<f32>>,
    ) -> Result<Self> {
        let mut dim: Option<(usize, String)> = None;
        let mut check = |name: &str, d: usize| match &dim {
            None => {
                dim = Some((d, name.to_string()));
                Ok(())
            }
            Some((d0, first)) if *d0 != d => Err(Error::DimensionMismatch {
                first: first.clone(),
                first_dim: *d0,
                second: name.to_string(),
                second_dim: d,
            }),
            _ => Ok(()),
        };
        let mut map = BTreeMap::new();
        for v in videos {
            check(&v.video_id, v.features.cols())?;
            if !(v.duration_s > 0.0) || !v.duration_s.is_finite() {
                return Err(Error::Config(format!(
                    "video {} has invalid duration {}",
                    v.video_id, v.duration_s
                )));
            }
            if v.features.rows() != v.duration_s.ceil() as usize {
                return Err(Error::Config(format!(
                    "video {} has {} feature rows for duration {}s",
                    v.video_id,
                    v.features.rows(),
                    v.duration_s
                )));
            }
            if !v.features.is_finite() {
                return Err(Error::Config(format!("video {} has non-finite features", v.video_id)));
            }
            map.insert(v.video_id.clone(), v);
        }
        for (id, f) in &caption_features {
            check(&format!("caption {id}"), f.len())?;
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("caption {id} has non-finite features")));
            }
        }
        let dim = dim.map(|(d, _)| d).ok_or(Error::Empty("feature store"))?;
        Ok(Self {
            dim,
            videos: map,
            caption_features,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn videos(&self) -> impl Iterator<Item = &VideoRecord> {
        self.videos.values()
    }

    pub fn video(&self, video_id: &str) -> Result<&VideoRecord> {
        self.videos
            .get(video_id)
            .ok_or_else(|| Error::UnknownVideo(video_id.to_string()))
    }

    pub fn caption_feature(&self, caption_id: &str) -> Result<&[f32]> {
        self.caption_features
            .get(caption_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownCaption(caption_id.to_string()))
    }

    pub fn caption_features(&self) -> &BTreeMap<String, Vec<f32>> {
        &self.caption_features
    }

    /// Pool per-second rows into one row per grid segment.
    ///
    /// A feature row contributes to a segment when at least half of its
    /// one-second span falls inside the segment; a segment that no row
    /// qualifies for takes the row containing its midpoint.
    pub fn segment_features(&self, video_id: &str, grid: &SegmentGrid) -> Result<Matrix<f32>> {
        let video = self.video(video_id)?;
        let n_rows = video.features.rows();
        let d = self.dim;
        let mut out = Matrix::zeros(grid.n_segments(), d);
        for (i, seg) in grid.segments().enumerate() {
            let first = seg.start().floor().max(0.0) as usize;
            let last = (seg.end().ceil() as usize).min(n_rows);
            let mut acc = vec![0.0f64; d];
            let mut count = 0usize;
            for r in first..last {
                let row_span = Interval::new(r as f64, r as f64 + 1.0).expect("unit row");
                if seg.overlap(&row_span) >= 0.5 - 1e-9 {
                    for (a, &x) in acc.iter_mut().zip(video.features.row(r)) {
                        *a += x as f64;
                    }
                    count += 1;
                }
            }
            let dst = out.row_mut(i);
            if count == 0 {
                let r = (seg.midpoint().floor().max(0.0) as usize).min(n_rows - 1);
                dst.copy_from_slice(video.features.row(r));
            } else {
                let n = count as f64;
                for (o, a) in dst.iter_mut().zip(&acc) {
                    *o = (a / n) as f32;
                }
            }
        }
        Ok(out)
    }
}

/// Uniform draw strictly inside `gt`.
pub fn sample_timestamp<R: Rng + ?Sized>(gt: &Interval, rng: &mut R) -> f64 {
    loop {
        let t = rng.random_range(gt.start()..gt.end());
        if t > gt.start() {
            return t;
        }
    }
}

/// Features plus annotations sorted by `(video_id, timestamp_s)`.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub store: FeatureStore,
    annotations: Vec<CaptionAnnotation>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(store: FeatureStore, mut annotations: Vec<CaptionAnnotation>) -> Result<Self> {
        sort_annotations(&mut annotations);
        let mut by_id = HashMap::with_capacity(annotations.len());
        for (i, a) in annotations.iter().enumerate() {
            validate_against_store(a, &store)?;
            if by_id.insert(a.caption_id.clone(), i).is_some() {
                return Err(Error::Annotation {
                    caption_id: a.caption_id.clone(),
                    reason: "duplicate caption id".into(),
                });
            }
        }
        Ok(Self {
            store,
            annotations,
            by_id,
        })
    }

    pub fn annotations(&self) -> &[CaptionAnnotation] {
        &self.annotations
    }

    pub fn annotation(&self, caption_id: &str) -> Result<&CaptionAnnotation> {
        self.by_id
            .get(caption_id)
            .map(|&i| &self.annotations[i])
            .ok_or_else(|| Error::UnknownCaption(caption_id.to_string()))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &CaptionAnnotation> {
        self.annotations.iter().filter(move |a| a.split == split)
    }

    /// Caption ids of a split, sorted.
    pub fn ids(&self, split: Split) -> Vec<String> {
        let mut ids: Vec<String> = self.split(split).map(|a| a.caption_id.clone()).collect();
        ids.sort();
        ids
    }

    /// Annotations grouped per video, each group in timestamp order.
    pub fn by_video(&self) -> impl Iterator<Item = &[CaptionAnnotation]> {
        self.annotations.chunk_by(|a, b| a.video_id == b.video_id)
    }
}

pub(crate) fn sort_annotations(annotations: &mut [CaptionAnnotation]) {
    annotations.sort_by(|a, b| {
        a.video_id
            .cmp(&b.video_id)
            .then(a.timestamp_s.total_cmp(&b.timestamp_s))
            .then_with(|| a.caption_id.cmp(&b.caption_id))
    });
}

pub(crate) fn validate_against_store(a: &CaptionAnnotation, store: &FeatureStore) -> Result<()> {
    let err = |reason: String| Error::Annotation {
        caption_id: a.caption_id.clone(),
        reason,
    };
    let video = store
        .video(&a.video_id)
        .map_err(|_| err(format!("unknown video {}", a.video_id)))?;
    if !video.span().contains_time(a.timestamp_s) {
        return Err(err(format!(
            "timestamp {} outside video {} (duration {}s)",
            a.timestamp_s, a.video_id, video.duration_s
        )));
    }
    store
        .caption_feature(&a.caption_id)
        .map_err(|_| err("no caption feature".into()))?;
    if let Some(gt) = &a.gt_interval {
        if !gt.contains_time(a.timestamp_s) {
            log::warn!(
                "caption {}: timestamp {} outside ground truth {}",
                a.caption_id,
                a.timestamp_s,
                gt
            );
        }
    }
    Ok(())
}
