//! Warm-up on initial clips, control-set selection, and the
//! student/teacher co-training loop.
//!
//! Every epoch the teacher re-edits the *initial* clips, the student trains
//! one epoch on the edited clips, and the student's R@1 on the control set
//! decides whether the teacher is overwritten with the student's weights.
//! The loop stops after `patience` epochs without strict improvement.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FeatureStore, Split};
use crate::editor::{edit_all, EditConfig, EditResult};
use crate::encoder::{similarity, ClipAssignment, ClipRef, EncoderParams, TrainConfig, Trainer, DEFAULT_TEMPERATURE};
use crate::error::{Error, Result};
use crate::evalrep::{query_ranks, recall_at_k};
use crate::timeline::{initial_clip, segment_grid, InitStrategy, DEFAULT_SEG_LEN_S};

/// Which network edits the clips during co-training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherMode {
    /// Starts from warm-up weights; overwritten by the student on improvement.
    Update,
    /// Warm-up weights, never updated.
    Frozen,
    /// Freshly initialised weights, never updated.
    Random,
    /// The current student edits its own clips.
    #[serde(rename = "self")]
    SelfTeacher,
}

impl std::str::FromStr for TeacherMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "update" => Ok(TeacherMode::Update),
            "frozen" => Ok(TeacherMode::Frozen),
            "random" => Ok(TeacherMode::Random),
            "self" => Ok(TeacherMode::SelfTeacher),
            other => Err(Error::Config(format!("unknown teacher mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoTrainConfig {
    /// Control-set threshold on the warm-up diagonal similarity.
    pub gamma: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub teacher_mode: TeacherMode,
    /// Student optimisation; `epochs` is ignored (one epoch per round).
    pub train: TrainConfig,
    pub edit: EditConfig,
}

impl Default for CoTrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.3,
            patience: 5,
            max_epochs: 50,
            teacher_mode: TeacherMode::Update,
            train: TrainConfig::default(),
            edit: EditConfig::default(),
        }
    }
}

impl CoTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [-1, 1], got {}", self.gamma)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        self.train.validate()?;
        self.edit.validate()
    }
}

/// Initial clips for every caption of `split`, cut around each timestamp
/// from its neighbours in the same video.
pub fn initial_assignment(corpus: &Corpus, strategy: InitStrategy, split: Split) -> Result<ClipAssignment> {
    strategy.validate()?;
    let mut out = ClipAssignment::new();
    for group in corpus.by_video() {
        if group[0].split != split {
            continue;
        }
        let span = corpus.store.video(&group[0].video_id)?.span();
        for (i, a) in group.iter().enumerate() {
            let prev = i.checked_sub(1).map(|j| group[j].timestamp_s);
            let next = group.get(i + 1).map(|n| n.timestamp_s);
            let interval = initial_clip(&a.caption_id, prev, a.timestamp_s, next, &span, strategy)?;
            out.insert(
                a.caption_id.clone(),
                ClipRef {
                    video_id: a.video_id.clone(),
                    interval,
                },
            );
        }
    }
    Ok(out)
}

/// Ground-truth clips for `split`; `None` if any caption lacks one.
pub fn ground_truth_assignment(corpus: &Corpus, split: Split) -> Option<ClipAssignment> {
    corpus
        .split(split)
        .map(|a| {
            a.gt_interval.map(|gt| {
                (
                    a.caption_id.clone(),
                    ClipRef {
                        video_id: a.video_id.clone(),
                        interval: gt,
                    },
                )
            })
        })
        .collect()
}

/// Train freshly initialised params on `clips` for `cfg.epochs` epochs.
pub fn warmup_on(store: &FeatureStore, clips: &ClipAssignment, cfg: &TrainConfig) -> Result<(EncoderParams, Vec<f32>)> {
    cfg.validate()?;
    let d = store.dim();
    let mut trainer = Trainer::new(EncoderParams::init(d, d, DEFAULT_TEMPERATURE, cfg.seed));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let loss = trainer.train_epoch(store, clips, cfg, &mut rng)?;
        log::debug!("warm-up epoch {}: loss {loss:.4}", epoch + 1);
        losses.push(loss);
    }
    Ok((trainer.into_params(), losses))
}

/// Build initial clips for the train split and warm a model up on them.
pub fn warmup(corpus: &Corpus, strategy: InitStrategy, cfg: &TrainConfig) -> Result<(EncoderParams, ClipAssignment)> {
    let clips = initial_assignment(corpus, strategy, Split::Train)?;
    if clips.is_empty() {
        return Err(Error::Empty("train split"));
    }
    let (params, _) = warmup_on(&corpus.store, &clips, cfg)?;
    Ok((params, clips))
}

/// Training pairs the warm-up model already matches well, with their clips
/// frozen for the rest of training.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    caption_ids: Vec<String>,
    frozen_clips: ClipAssignment,
}

impl ControlSet {
    pub fn caption_ids(&self) -> &[String] {
        &self.caption_ids
    }

    pub fn frozen_clips(&self) -> &ClipAssignment {
        &self.frozen_clips
    }

    pub fn len(&self) -> usize {
        self.caption_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caption_ids.is_empty()
    }
}

/// Cosine between each clip and its own caption.
pub fn diagonal_similarities(
    p: &EncoderParams,
    store: &FeatureStore,
    clips: &ClipAssignment,
) -> Result<Vec<(String, f64)>> {
    clips
        .iter()
        .map(|(id, clip)| {
            let grid = segment_grid(&clip.interval, DEFAULT_SEG_LEN_S)?;
            let v = p.embed_clip(&store.segment_features(&clip.video_id, &grid)?)?;
            let c = p.embed_caption(store.caption_feature(id)?)?;
            Ok((id.clone(), similarity(&v, &c) as f64))
        })
        .collect::<Result<_>>()
}

pub fn control_from_similarities(sims: &[(String, f64)], clips: &ClipAssignment, gamma: f64) -> Result<ControlSet> {
    let frozen_clips: ClipAssignment = sims
        .iter()
        .filter(|(_, s)| *s > gamma)
        .map(|(id, _)| (id.clone(), clips[id].clone()))
        .collect();
    if frozen_clips.is_empty() {
        return Err(Error::EmptyControlSet);
    }
    Ok(ControlSet {
        caption_ids: frozen_clips.keys().cloned().collect(),
        frozen_clips,
    })
}

pub fn select_control_set(
    p: &EncoderParams,
    store: &FeatureStore,
    clips: &ClipAssignment,
    gamma: f64,
) -> Result<ControlSet> {
    let sims = diagonal_similarities(p, store, clips)?;
    control_from_similarities(&sims, clips, gamma)
}

/// Caption-to-clip R@1 over the control set's frozen clips.
pub fn monitor_metric(student: &EncoderParams, store: &FeatureStore, control: &ControlSet) -> Result<f64> {
    let ranks = query_ranks(student, store, &control.caption_ids, &control.frozen_clips)?;
    recall_at_k(&ranks, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub monitor: f64,
    pub n_applied_edits: usize,
    pub teacher_updated: bool,
}

/// Per-epoch view handed to observers, after the teacher decision.
pub struct EpochView<'a> {
    pub record: &'a EpochRecord,
    pub student: &'a EncoderParams,
    pub teacher: &'a EncoderParams,
}

#[derive(Debug, Clone)]
pub struct CoTrainOutcome {
    /// Student at the epoch of best control-set R@1 (warm-up params if none improved).
    pub best_student: EncoderParams,
    pub best_epoch: Option<usize>,
    pub final_student: EncoderParams,
    pub final_teacher: EncoderParams,
    /// Clips from the last editing round (the initial clips if no epoch ran).
    pub assignment: ClipAssignment,
    pub edits: Vec<EditResult>,
    pub control: ControlSet,
    pub warmup_monitor: f64,
    pub log: Vec<EpochRecord>,
}

#[derive(Debug, thiserror::Error)]
#[error("co-training failed after {} epochs: {source}", log.len())]
pub struct CoTrainError {
    #[source]
    pub source: Error,
    pub log: Vec<EpochRecord>,
}

pub fn cotrain(
    warm: &EncoderParams,
    initial: &ClipAssignment,
    store: &FeatureStore,
    cfg: &CoTrainConfig,
) -> std::result::Result<CoTrainOutcome, CoTrainError> {
    cotrain_observed(warm, initial, store, cfg, |_| {})
}

pub fn cotrain_observed(
    warm: &EncoderParams,
    initial: &ClipAssignment,
    store: &FeatureStore,
    cfg: &CoTrainConfig,
    mut on_epoch: impl FnMut(&EpochView<'_>),
) -> std::result::Result<CoTrainOutcome, CoTrainError> {
    let mut log = Vec::new();
    let fail = |source: Error, log: Vec<EpochRecord>| CoTrainError { source, log };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, log));
    }
    let control = match select_control_set(warm, store, initial, cfg.gamma) {
        Ok(c) => c,
        Err(e) => return Err(fail(e, log)),
    };
    let warmup_monitor = match monitor_metric(warm, store, &control) {
        Ok(m) => m,
        Err(e) => return Err(fail(e, log)),
    };
    log::info!(
        "control set: {} of {} captions, warm-up R@1 {:.3}",
        control.len(),
        initial.len(),
        warmup_monitor
    );

    let mut student = Trainer::new(warm.clone());
    let mut teacher = match cfg.teacher_mode {
        TeacherMode::Random => {
            let d = warm.input_dim();
            EncoderParams::init(
                d,
                warm.output_dim(),
                warm.temperature,
                cfg.train.seed.wrapping_add(0x7ea_c4e2),
            )
        }
        _ => warm.clone(),
    };
    let mut best_monitor = warmup_monitor;
    let mut best_student = warm.clone();
    let mut best_epoch = None;
    let mut since_improve = 0usize;
    let mut assignment = initial.clone();
    let mut edits = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);

    for epoch in 1..=cfg.max_epochs {
        let step = (|| -> Result<(f32, f64, ClipAssignment, Vec<EditResult>)> {
            let editor = match cfg.teacher_mode {
                TeacherMode::SelfTeacher => student.params(),
                _ => &teacher,
            };
            let (edited, results) = edit_all(editor, store, initial, &cfg.edit)?;
            let loss = student.train_epoch(store, &edited, &cfg.train, &mut rng)?;
            let monitor = monitor_metric(student.params(), store, &control)?;
            Ok((loss, monitor, edited, results))
        })();
        let (loss, monitor, edited, results) = match step {
            Ok(s) => s,
            Err(e) => return Err(fail(e, log)),
        };

        let improved = monitor > best_monitor;
        let mut teacher_updated = false;
        if improved {
            best_monitor = monitor;
            best_student = student.params().clone();
            best_epoch = Some(epoch);
            since_improve = 0;
            if cfg.teacher_mode == TeacherMode::Update {
                teacher = student.params().clone();
                teacher_updated = true;
            }
        } else {
            since_improve += 1;
        }
        if cfg.teacher_mode == TeacherMode::SelfTeacher {
            teacher = student.params().clone();
        }

        let record = EpochRecord {
            epoch,
            train_loss: loss as f64,
            monitor,
            n_applied_edits: results.iter().filter(|r| r.applied).count(),
            teacher_updated,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} control R@1 {:.3} applied {} teacher_updated {}",
            record.train_loss,
            record.monitor,
            record.n_applied_edits,
            teacher_updated
        );
        on_epoch(&EpochView {
            record: &record,
            student: student.params(),
            teacher: &teacher,
        });
        log.push(record);
        assignment = edited;
        edits = results;

        if since_improve >= cfg.patience {
            break;
        }
    }

    Ok(CoTrainOutcome {
        best_student,
        best_epoch,
        final_student: student.into_params(),
        final_teacher: teacher,
        assignment,
        edits,
        control,
        warmup_monitor,
        log,
    })
}

pub fn write_log(path: &Path, log: &[EpochRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in log {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}
