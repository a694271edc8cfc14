//! Caption-to-clip retrieval metrics and IoU histograms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureStore;
use crate::encoder::{similarity, ClipAssignment, EncoderParams};
use crate::error::{Error, Result};
use crate::timeline::{iou, segment_grid, Interval, DEFAULT_SEG_LEN_S};

/// 1-based rank of `true_index` when the gallery is ordered by similarity
/// (descending), ties broken by gallery index (ascending).
pub fn rank_of(sim_row: &[f64], true_index: usize) -> usize {
    let s = sim_row[true_index];
    1 + sim_row
        .iter()
        .enumerate()
        .filter(|&(j, &x)| x > s || (x == s && j < true_index))
        .count()
}

pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Empty("rank list"));
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

pub fn median_rank(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Empty("rank list"));
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub medr: f64,
    pub n_queries: usize,
}

impl RetrievalMetrics {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        Ok(Self {
            r1: recall_at_k(ranks, 1)?,
            r5: recall_at_k(ranks, 5)?,
            r10: recall_at_k(ranks, 10)?,
            medr: median_rank(ranks)?,
            n_queries: ranks.len(),
        })
    }
}

/// Which boundaries the evaluation gallery was cut with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GalleryMode {
    GroundTruth,
    Initial,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub medr: f64,
    pub n_queries: usize,
    pub gallery_mode: GalleryMode,
}

impl MetricsReport {
    pub fn new(m: RetrievalMetrics, gallery_mode: GalleryMode) -> Self {
        Self {
            r1: m.r1,
            r5: m.r5,
            r10: m.r10,
            medr: m.medr,
            n_queries: m.n_queries,
            gallery_mode,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let report: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        let ok = [report.r1, report.r5, report.r10]
            .iter()
            .all(|r| (0.0..=1.0).contains(r))
            && report.r1 <= report.r5
            && report.r5 <= report.r10
            && report.medr >= 1.0
            && report.medr <= report.n_queries as f64;
        if !ok {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: "metrics out of range".into(),
            });
        }
        Ok(report)
    }
}

/// Embed every gallery clip (in caption-id order) with `p`.
pub fn embed_gallery(p: &EncoderParams, store: &FeatureStore, gallery: &ClipAssignment) -> Result<Vec<Vec<f32>>> {
    gallery
        .par_iter()
        .map(|(id, clip)| {
            let grid = segment_grid(&clip.interval, DEFAULT_SEG_LEN_S)?;
            let feats = store.segment_features(&clip.video_id, &grid)?;
            p.embed_clip(&feats).map_err(|e| Error::for_caption(id, e))
        })
        .collect()
}

/// Rank of each query's own clip among the whole gallery.
pub fn query_ranks(
    p: &EncoderParams,
    store: &FeatureStore,
    queries: &[String],
    gallery: &ClipAssignment,
) -> Result<Vec<usize>> {
    let clip_emb = embed_gallery(p, store, gallery)?;
    let index: std::collections::HashMap<&str, usize> =
        gallery.keys().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    queries
        .par_iter()
        .map(|q| {
            let t = *index
                .get(q.as_str())
                .ok_or_else(|| Error::for_caption(q, Error::UnknownCaption(format!("{q} not in gallery"))))?;
            let c = p.embed_caption(store.caption_feature(q)?)?;
            let row: Vec<f64> = clip_emb.iter().map(|v| similarity(v, &c) as f64).collect();
            Ok(rank_of(&row, t))
        })
        .collect()
}

pub fn evaluate_retrieval(
    p: &EncoderParams,
    store: &FeatureStore,
    queries: &[String],
    gallery: &ClipAssignment,
) -> Result<RetrievalMetrics> {
    RetrievalMetrics::from_ranks(&query_ranks(p, store, queries, gallery)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoUHistogram {
    pub bin_edges: [f64; 11],
    pub counts: [usize; 10],
    pub mean_iou: f64,
}

pub fn iou_histogram(pairs: &[(Interval, Interval)]) -> Result<IoUHistogram> {
    if pairs.is_empty() {
        return Err(Error::Empty("interval pairs"));
    }
    let mut counts = [0usize; 10];
    let mut sum = 0.0;
    for (a, b) in pairs {
        let x = iou(a, b);
        sum += x;
        counts[((x * 10.0).floor() as usize).min(9)] += 1;
    }
    let bin_edges = std::array::from_fn(|i| i as f64 / 10.0);
    Ok(IoUHistogram {
        bin_edges,
        counts,
        mean_iou: sum / pairs.len() as f64,
    })
}

impl IoUHistogram {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(s, "{:.1},{:.1},{}", self.bin_edges[i], self.bin_edges[i + 1], c).unwrap();
        }
        writeln!(s, "mean,,{}", self.mean_iou).unwrap();
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let bad = |line: usize, reason: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: reason.to_string(),
        };
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() != 12 || lines[0] != "bin_lo,bin_hi,count" {
            return Err(bad(1, "expected header, 10 bins and a mean row"));
        }
        let mut counts = [0usize; 10];
        for (i, line) in lines[1..11].iter().enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(bad(i + 2, "expected 3 fields"));
            }
            counts[i] = fields[2].parse().map_err(|_| bad(i + 2, "bad count"))?;
        }
        let mean_iou: f64 = lines[11]
            .strip_prefix("mean,,")
            .and_then(|m| m.parse().ok())
            .ok_or_else(|| bad(12, "bad mean row"))?;
        if !(0.0..=1.0).contains(&mean_iou) {
            return Err(bad(12, "mean out of range"));
        }
        Ok(Self {
            bin_edges: std::array::from_fn(|i| i as f64 / 10.0),
            counts,
            mean_iou,
        })
    }
}
