//! On-disk formats.
//!
//! Feature files (`*.feat`): `b"CFV1"`, `u32` d, `u32` n_rows, then
//! `n_rows * d` little-endian `f32` values, row-major. Caption features live
//! in `captions.feat` with `captions.idx` (JSON Lines, `caption_id` → `row`).
//! Annotations are JSON Lines, one caption per line.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sort_annotations, validate_against_store, CaptionAnnotation, FeatureStore, Split, VideoRecord};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::timeline::Interval;

pub const FEATURE_MAGIC: &[u8; 4] = b"CFV1";
pub const CAPTIONS_FEAT: &str = "captions.feat";
pub const CAPTIONS_IDX: &str = "captions.idx";

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_feature_file(path: &Path, m: &Matrix<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&(m.cols() as u32).to_le_bytes())?;
    w.write_all(&(m.rows() as u32).to_le_bytes())?;
    for x in m.as_slice() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<Matrix<f32>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != FEATURE_MAGIC {
        return Err(format_err(path, "bad magic bytes (expected CFV1)"));
    }
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != n * d * 4 {
        return Err(format_err(
            path,
            format!("expected {} bytes of data for {n}x{d}, found {}", n * d * 4, body.len()),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Matrix::from_vec(n, d, data))
}

#[derive(Serialize, Deserialize)]
struct IdxRecord {
    caption_id: String,
    row: usize,
}

/// Write `store` into `dir` as `<video_id>.feat` files plus caption files.
pub fn write_features(dir: &Path, store: &FeatureStore) -> Result<()> {
    fs::create_dir_all(dir)?;
    for v in store.videos() {
        write_feature_file(&dir.join(format!("{}.feat", v.video_id)), &v.features)?;
    }
    let caps = store.caption_features();
    let mut data = Vec::with_capacity(caps.len() * store.dim());
    let mut idx = BufWriter::new(File::create(dir.join(CAPTIONS_IDX))?);
    for (row, (id, f)) in caps.iter().enumerate() {
        data.extend_from_slice(f);
        serde_json::to_writer(
            &mut idx,
            &IdxRecord {
                caption_id: id.clone(),
                row,
            },
        )?;
        idx.write_all(b"\n")?;
    }
    idx.flush()?;
    write_feature_file(
        &dir.join(CAPTIONS_FEAT),
        &Matrix::from_vec(caps.len(), store.dim(), data),
    )
}

/// Load every `*.feat` file in `dir`. Video durations are taken as the
/// number of feature rows (one row per second).
pub fn load_features(dir: &Path) -> Result<FeatureStore> {
    let mut video_files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "feat") && path.file_name().is_some_and(|n| n != CAPTIONS_FEAT) {
            video_files.push(path);
        }
    }
    video_files.sort();
    let captions_path = dir.join(CAPTIONS_FEAT);
    if video_files.is_empty() && !captions_path.exists() {
        return Err(Error::NoFeatureFiles(dir.to_path_buf()));
    }

    let mut first: Option<(usize, String)> = None;
    let mut check_dim = |path: &Path, d: usize| -> Result<()> {
        let name = path.display().to_string();
        match &first {
            None => first = Some((d, name)),
            Some((d0, f)) if *d0 != d => {
                return Err(Error::DimensionMismatch {
                    first: f.clone(),
                    first_dim: *d0,
                    second: name,
                    second_dim: d,
                })
            }
            _ => {}
        }
        Ok(())
    };

    let mut videos = Vec::with_capacity(video_files.len());
    for path in &video_files {
        let m = read_feature_file(path)?;
        check_dim(path, m.cols())?;
        if m.rows() == 0 {
            return Err(format_err(path, "video has no feature rows"));
        }
        let video_id = path.file_stem().unwrap().to_string_lossy().into_owned();
        videos.push(VideoRecord {
            video_id,
            duration_s: m.rows() as f64,
            features: m,
        });
    }

    if !captions_path.exists() {
        return Err(format_err(&captions_path, "caption feature file missing"));
    }
    let caps = read_feature_file(&captions_path)?;
    check_dim(&captions_path, caps.cols())?;
    let idx_path = dir.join(CAPTIONS_IDX);
    let reader = BufReader::new(File::open(&idx_path)?);
    let mut caption_features = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: IdxRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: idx_path.clone(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if rec.row >= caps.rows() {
            return Err(Error::Parse {
                path: idx_path.clone(),
                line: i + 1,
                reason: format!("row {} out of range ({} rows)", rec.row, caps.rows()),
            });
        }
        caption_features.insert(rec.caption_id, caps.row(rec.row).to_vec());
    }
    FeatureStore::new(videos, caption_features)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    caption_id: String,
    video_id: String,
    timestamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_end: Option<f64>,
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

impl From<&CaptionAnnotation> for AnnotationRecord {
    fn from(a: &CaptionAnnotation) -> Self {
        Self {
            caption_id: a.caption_id.clone(),
            video_id: a.video_id.clone(),
            timestamp: a.timestamp_s,
            gt_start: a.gt_interval.map(|g| g.start()),
            gt_end: a.gt_interval.map(|g| g.end()),
            split: a.split,
            text: a.text.clone(),
        }
    }
}

pub fn write_annotations(path: &Path, annotations: &[CaptionAnnotation]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for a in annotations {
        serde_json::to_writer(&mut w, &AnnotationRecord::from(a))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Parse an annotation file, sorted by `(video_id, timestamp)`. No checks
/// against video spans; see [`load_annotations`].
pub fn read_annotations(path: &Path) -> Result<Vec<CaptionAnnotation>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let rec: AnnotationRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if !rec.timestamp.is_finite() {
            return Err(parse_err("non-finite timestamp".into()));
        }
        let gt_interval = match (rec.gt_start, rec.gt_end) {
            (Some(s), Some(e)) => Some(Interval::new(s, e).map_err(|e| parse_err(e.to_string()))?),
            (None, None) => None,
            _ => return Err(parse_err("gt_start and gt_end must appear together".into())),
        };
        out.push(CaptionAnnotation {
            caption_id: rec.caption_id,
            video_id: rec.video_id,
            timestamp_s: rec.timestamp,
            gt_interval,
            split: rec.split,
            text: rec.text,
        });
    }
    sort_annotations(&mut out);
    Ok(out)
}

/// [`read_annotations`] plus validation of every timestamp against its video.
pub fn load_annotations(path: &Path, store: &FeatureStore) -> Result<Vec<CaptionAnnotation>> {
    let annotations = read_annotations(path)?;
    for a in &annotations {
        validate_against_store(a, store)?;
    }
    Ok(annotations)
}
