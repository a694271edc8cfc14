//! Clip boundary editing by Top-K segment consensus.
//!
//! A clip is cut into segments and each segment is scored against the
//! caption with the teacher. The K best segments propose candidate
//! boundaries (every pair `a < b` spans segment `a` start to segment `b`
//! end); the candidate with the largest summed IoU against all candidates
//! wins. The edit is kept only if it overlaps the initial clip by at least
//! the configured IoU gate.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureStore;
use crate::encoder::{similarity, ClipAssignment, ClipRef, EncoderParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::timeline::{iou, segment_grid, Interval, SegmentGrid, DEFAULT_SEG_LEN_S};

/// Scores within this distance are treated as tied in the consensus argmax.
pub const CONSENSUS_TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditConfig {
    pub k: usize,
    pub seg_len_s: f64,
    pub iou_gate: f64,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            k: 10,
            seg_len_s: DEFAULT_SEG_LEN_S,
            iou_gate: 0.0,
        }
    }
}

impl EditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iou_gate) {
            return Err(Error::Config(format!(
                "iou_gate must lie in [0, 1], got {}",
                self.iou_gate
            )));
        }
        if !(self.seg_len_s > 0.0) || !self.seg_len_s.is_finite() {
            return Err(Error::Config(format!(
                "seg_len_s must be positive, got {}",
                self.seg_len_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditResult {
    pub caption_id: String,
    pub initial: Interval,
    pub edited: Interval,
    pub applied: bool,
    pub n_segments: usize,
    pub topk_indices: Vec<usize>,
    pub winner_pair: Option<(usize, usize)>,
}

/// Indices of the `k` largest values, ties to the lower index, ascending.
pub fn top_k_segments<T: PartialOrd + Copy>(sims: &[T], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sims.len()).collect();
    order.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order.truncate(k.min(sims.len()));
    order.sort_unstable();
    order
}

/// Every pair `a < b` of `indices` as the grid span from segment `a` to
/// segment `b`, in lexicographic `(a, b)` order.
pub fn enumerate_candidates(indices: &[usize], grid: &SegmentGrid) -> Vec<((usize, usize), Interval)> {
    let mut out = Vec::with_capacity(indices.len() * indices.len().saturating_sub(1) / 2);
    for (i, &a) in indices.iter().enumerate() {
        for &b in &indices[i + 1..] {
            out.push(((a, b), grid.span(a, b)));
        }
    }
    out
}

/// Index of the candidate with the largest summed IoU against all
/// candidates (itself included). Ties go to the longer interval, then the
/// earlier start.
pub fn consensus_index(candidates: &[Interval]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, cj) in candidates.iter().enumerate() {
        let score: f64 = candidates.iter().map(|ck| iou(cj, ck)).sum();
        let better = match best {
            None => true,
            Some((b, bs)) => {
                if score > bs + CONSENSUS_TIE_EPS {
                    true
                } else if score >= bs - CONSENSUS_TIE_EPS {
                    let (lj, lb) = (cj.len(), candidates[b].len());
                    lj > lb + CONSENSUS_TIE_EPS
                        || ((lj - lb).abs() <= CONSENSUS_TIE_EPS && cj.start() < candidates[b].start())
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

pub fn consensus_select(candidates: &[Interval]) -> Result<Interval> {
    consensus_index(candidates)
        .map(|j| candidates[j])
        .ok_or(Error::Empty("candidate list"))
}

/// The editing decision for one clip given its per-segment similarities.
pub fn edit_from_similarities(caption_id: &str, grid: &SegmentGrid, sims: &[f64], cfg: &EditConfig) -> EditResult {
    debug_assert_eq!(sims.len(), grid.n_segments());
    let initial = grid.clip();
    let topk_indices = top_k_segments(sims, cfg.k);
    let mut result = EditResult {
        caption_id: caption_id.to_string(),
        initial,
        edited: initial,
        applied: false,
        n_segments: grid.n_segments(),
        topk_indices,
        winner_pair: None,
    };
    if grid.n_segments() < 2 || result.topk_indices.len() < 2 {
        return result;
    }
    let candidates = enumerate_candidates(&result.topk_indices, grid);
    let spans: Vec<Interval> = candidates.iter().map(|(_, iv)| *iv).collect();
    let winner = consensus_index(&spans).expect("at least one candidate");
    let (pair, edited) = candidates[winner];
    result.winner_pair = Some(pair);
    if iou(&initial, &edited) >= cfg.iou_gate {
        result.edited = edited;
        result.applied = true;
    }
    result
}

/// Teacher similarity of every grid segment to the caption, each segment
/// embedded on its own through the clip branch.
pub fn segment_similarities(
    teacher: &EncoderParams,
    store: &FeatureStore,
    video_id: &str,
    caption_id: &str,
    grid: &SegmentGrid,
) -> Result<Vec<f64>> {
    let caption = teacher.embed_caption(store.caption_feature(caption_id)?)?;
    let seg_feats: Matrix<f32> = store.segment_features(video_id, grid)?;
    seg_feats
        .iter_rows()
        .map(|row| {
            let v = teacher.embed_pooled_clip(row)?;
            Ok(similarity(&v, &caption) as f64)
        })
        .collect()
}

pub fn edit_clip(
    teacher: &EncoderParams,
    store: &FeatureStore,
    caption_id: &str,
    initial: &ClipRef,
    cfg: &EditConfig,
) -> Result<EditResult> {
    let video = store.video(&initial.video_id)?;
    if !video.span().contains(&initial.interval) {
        return Err(Error::Annotation {
            caption_id: caption_id.to_string(),
            reason: format!("clip {} outside video {}", initial.interval, initial.video_id),
        });
    }
    let grid = segment_grid(&initial.interval, cfg.seg_len_s)?;
    let sims = segment_similarities(teacher, store, &initial.video_id, caption_id, &grid)?;
    Ok(edit_from_similarities(caption_id, &grid, &sims, cfg))
}

/// Edit every clip in `clips`. Work is spread over the current rayon pool;
/// results come back in caption-id order regardless of scheduling.
pub fn edit_all(
    teacher: &EncoderParams,
    store: &FeatureStore,
    clips: &ClipAssignment,
    cfg: &EditConfig,
) -> Result<(ClipAssignment, Vec<EditResult>)> {
    cfg.validate()?;
    let entries: Vec<(&String, &ClipRef)> = clips.iter().collect();
    let results: Vec<EditResult> = entries
        .par_iter()
        .map(|(id, clip)| edit_clip(teacher, store, id, clip, cfg).map_err(|e| Error::for_caption(id, e)))
        .collect::<Result<_>>()?;
    let edited = entries
        .iter()
        .zip(&results)
        .map(|((id, clip), r)| {
            (
                (*id).clone(),
                ClipRef {
                    video_id: clip.video_id.clone(),
                    interval: r.edited,
                },
            )
        })
        .collect();
    Ok((edited, results))
}

pub fn write_edits(path: &Path, results: &[EditResult]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_edits(path: &Path) -> Result<Vec<EditResult>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: EditResult = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if !r.initial.contains(&r.edited) || (!r.applied && r.edited != r.initial) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: "edited clip violates containment/applied contract".into(),
            });
        }
        out.push(r);
    }
    Ok(out)
}
