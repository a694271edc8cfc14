//! One function per subcommand. Each writes its outputs under the run's
//! output directory and, with `check`, re-reads them to validate.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use clipedit::corpus::{
    load_annotations, load_features, read_annotations, synth_corpus, write_annotations, write_features, Corpus, Split,
};
use clipedit::cotrain::{
    cotrain, ground_truth_assignment, initial_assignment, read_log, warmup_on, write_log, CoTrainOutcome,
};
use clipedit::editor::{read_edits, write_edits};
use clipedit::encoder::{read_checkpoint, write_checkpoint, ClipAssignment, EncoderParams};
use clipedit::evalrep::{evaluate_retrieval, iou_histogram, GalleryMode, IoUHistogram, MetricsReport};
use clipedit::timeline::{jitter, Interval};

use crate::config::{parse_value, set_path, RunConfig};
use crate::Failure;

const JITTER_SALT: u64 = 0x6a17_7e55;

pub const FEATURES_DIR: &str = "features";
pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const WARMUP_CKPT: &str = "warmup.cfp";
pub const STUDENT_CKPT: &str = "student.cfp";
pub const TEACHER_CKPT: &str = "teacher.cfp";
pub const LOG: &str = "cotrain_log.jsonl";
pub const EDITS: &str = "edits.jsonl";
pub const METRICS: &str = "metrics.json";
pub const IOU_HIST: &str = "iou_hist.csv";
pub const IOU_HIST_INITIAL: &str = "iou_hist_initial.csv";
pub const SWEEP: &str = "sweep.csv";

fn prepare_out(cfg: &RunConfig) -> Result<&Path, Failure> {
    let out = cfg.out_dir()?;
    fs::create_dir_all(out).map_err(|e| Failure::Config(format!("{}: {e}", out.display())))?;
    let resolved = serde_json::to_string_pretty(cfg).expect("config serializes");
    fs::write(out.join("config.json"), resolved + "\n")?;
    Ok(out)
}

fn mismatch(what: &str) -> Failure {
    Failure::Config(format!("--check: {what} does not match what was written"))
}

pub fn load_corpus(cfg: &RunConfig) -> Result<Corpus, Failure> {
    let corpus = match &cfg.synth {
        Some(s) => {
            let (store, anns) = synth_corpus(s)?;
            Corpus::new(store, anns)?
        }
        None => {
            let dir = cfg.paths.features_dir.as_deref().expect("validated");
            let store = load_features(dir)?;
            let anns = load_annotations(cfg.paths.annotations.as_deref().expect("validated"), &store)?;
            Corpus::new(store, anns)?
        }
    };
    info!(
        "corpus: {} videos, {} train / {} test captions, d = {}",
        corpus.store.videos().count(),
        corpus.split(Split::Train).count(),
        corpus.split(Split::Test).count(),
        corpus.store.dim()
    );
    Ok(corpus)
}

/// Initial train clips, with the configured fraction jittered.
pub fn training_clips(cfg: &RunConfig, corpus: &Corpus) -> Result<ClipAssignment, Failure> {
    let mut clips = initial_assignment(corpus, cfg.init_strategy, Split::Train)?;
    if clips.is_empty() {
        return Err(Failure::Config("train split is empty".into()));
    }
    let n = (cfg.jitter.fraction * clips.len() as f64).round() as usize;
    if n > 0 && cfg.jitter.max_s > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ JITTER_SALT);
        let mut ids: Vec<String> = clips.keys().cloned().collect();
        ids.shuffle(&mut rng);
        for id in &ids[..n] {
            let clip = clips.get_mut(id).expect("id from keys");
            let span = corpus.store.video(&clip.video_id)?.span();
            clip.interval = jitter(&clip.interval, &span, cfg.jitter.max_s, &mut rng);
        }
        info!(
            "jittered {n} of {} initial clips by up to {}s",
            clips.len(),
            cfg.jitter.max_s
        );
    }
    Ok(clips)
}

/// Test queries and their gallery: ground-truth clips if every test caption
/// has one, initial clips otherwise.
fn test_gallery(
    cfg: &RunConfig,
    corpus: &Corpus,
) -> Result<Option<(Vec<String>, ClipAssignment, GalleryMode)>, Failure> {
    let queries = corpus.ids(Split::Test);
    if queries.is_empty() {
        return Ok(None);
    }
    Ok(Some(match ground_truth_assignment(corpus, Split::Test) {
        Some(gt) => (queries, gt, GalleryMode::GroundTruth),
        None => (
            queries,
            initial_assignment(corpus, cfg.init_strategy, Split::Test)?,
            GalleryMode::Initial,
        ),
    }))
}

fn write_metrics(
    cfg: &RunConfig,
    corpus: &Corpus,
    p: &EncoderParams,
    out: &Path,
    check: bool,
) -> Result<Option<MetricsReport>, Failure> {
    let Some((queries, gallery, mode)) = test_gallery(cfg, corpus)? else {
        warn!("test split is empty; no {METRICS} written");
        return Ok(None);
    };
    let report = MetricsReport::new(evaluate_retrieval(p, &corpus.store, &queries, &gallery)?, mode);
    report.write(&out.join(METRICS))?;
    info!(
        "test retrieval over {} queries: R@1 {:.3} R@5 {:.3} R@10 {:.3} MedR {}",
        report.n_queries, report.r1, report.r5, report.r10, report.medr
    );
    if check && MetricsReport::read(&out.join(METRICS))? != report {
        return Err(mismatch(METRICS));
    }
    Ok(Some(report))
}

fn write_params(p: &EncoderParams, path: &Path, check: bool) -> Result<(), Failure> {
    write_checkpoint(path, p)?;
    if check && read_checkpoint(path)? != *p {
        return Err(mismatch(&path.display().to_string()));
    }
    Ok(())
}

fn write_hist(pairs: &[(Interval, Interval)], path: &Path, check: bool) -> Result<IoUHistogram, Failure> {
    let h = iou_histogram(pairs)?;
    h.write_csv(path)?;
    if check && IoUHistogram::read_csv(path)?.counts != h.counts {
        return Err(mismatch(&path.display().to_string()));
    }
    Ok(h)
}

pub fn synth(cfg: &RunConfig, check: bool) -> Result<(), Failure> {
    let s = cfg
        .synth
        .as_ref()
        .ok_or_else(|| Failure::Config("synth command needs a synth section".into()))?;
    let out = prepare_out(cfg)?;
    let (store, anns) = synth_corpus(s)?;
    write_features(&out.join(FEATURES_DIR), &store)?;
    write_annotations(&out.join(ANNOTATIONS), &anns)?;
    info!(
        "wrote {} videos and {} captions to {}",
        store.videos().count(),
        anns.len(),
        out.display()
    );
    if check {
        let back = load_features(&out.join(FEATURES_DIR))?;
        if back != store {
            return Err(mismatch(FEATURES_DIR));
        }
        if read_annotations(&out.join(ANNOTATIONS))? != anns {
            return Err(mismatch(ANNOTATIONS));
        }
        load_annotations(&out.join(ANNOTATIONS), &back)?;
    }
    Ok(())
}

fn run_warmup(cfg: &RunConfig, corpus: &Corpus) -> Result<(EncoderParams, ClipAssignment), Failure> {
    let clips = training_clips(cfg, corpus)?;
    let (params, losses) = warmup_on(&corpus.store, &clips, &cfg.train_config())?;
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        info!("warm-up: {} epochs, loss {first:.4} -> {last:.4}", losses.len());
    }
    Ok((params, clips))
}

pub fn warmup(cfg: &RunConfig, check: bool) -> Result<(), Failure> {
    let out = prepare_out(cfg)?;
    let corpus = load_corpus(cfg)?;
    let (params, _) = run_warmup(cfg, &corpus)?;
    write_params(&params, &out.join(WARMUP_CKPT), check)?;
    write_metrics(cfg, &corpus, &params, out, check)?;
    Ok(())
}

/// Full pipeline into `out`; returns the test metrics of the best student.
fn run_cotrain(cfg: &RunConfig, corpus: &Corpus, out: &Path, check: bool) -> Result<Option<MetricsReport>, Failure> {
    let (warm, initial) = run_warmup(cfg, corpus)?;
    write_params(&warm, &out.join(WARMUP_CKPT), check)?;
    let outcome: CoTrainOutcome = match cotrain(&warm, &initial, &corpus.store, &cfg.cotrain_config()) {
        Ok(o) => o,
        Err(e) => {
            if !e.log.is_empty() {
                write_log(&out.join(LOG), &e.log)?;
            }
            return Err(e.source.into());
        }
    };
    info!(
        "co-training: {} epochs, control set {} pairs, monitor {:.3} -> best epoch {:?}",
        outcome.log.len(),
        outcome.control.len(),
        outcome.warmup_monitor,
        outcome.best_epoch
    );
    write_params(&outcome.best_student, &out.join(STUDENT_CKPT), check)?;
    write_params(&outcome.final_teacher, &out.join(TEACHER_CKPT), check)?;
    write_log(&out.join(LOG), &outcome.log)?;
    write_edits(&out.join(EDITS), &outcome.edits)?;
    if check {
        if read_log(&out.join(LOG))? != outcome.log {
            return Err(mismatch(LOG));
        }
        if read_edits(&out.join(EDITS))? != outcome.edits {
            return Err(mismatch(EDITS));
        }
    }

    let moved: Vec<(Interval, Interval)> = initial
        .iter()
        .map(|(id, c)| (c.interval, outcome.assignment[id].interval))
        .collect();
    let h = write_hist(&moved, &out.join(IOU_HIST_INITIAL), check)?;
    info!("mean IoU(initial, edited) {:.3}", h.mean_iou);
    match ground_truth_assignment(corpus, Split::Train) {
        Some(gt) => {
            let pairs: Vec<(Interval, Interval)> = gt
                .iter()
                .map(|(id, g)| (outcome.assignment[id].interval, g.interval))
                .collect();
            let before: Vec<(Interval, Interval)> =
                gt.iter().map(|(id, g)| (initial[id].interval, g.interval)).collect();
            let h = write_hist(&pairs, &out.join(IOU_HIST), check)?;
            info!(
                "mean IoU with ground truth: initial {:.3}, edited {:.3}",
                iou_histogram(&before)?.mean_iou,
                h.mean_iou
            );
        }
        None => {
            write_hist(&moved, &out.join(IOU_HIST), check)?;
        }
    }
    write_metrics(cfg, corpus, &outcome.best_student, out, check)
}

pub fn cotrain_cmd(cfg: &RunConfig, check: bool) -> Result<(), Failure> {
    let out = prepare_out(cfg)?;
    let corpus = load_corpus(cfg)?;
    run_cotrain(cfg, &corpus, out, check)?;
    Ok(())
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path, check: bool) -> Result<(), Failure> {
    let out = prepare_out(cfg)?;
    let corpus = load_corpus(cfg)?;
    let p = read_checkpoint(checkpoint)?;
    if p.input_dim() != corpus.store.dim() {
        return Err(Failure::Config(format!(
            "checkpoint expects {}-dim features, corpus has {}",
            p.input_dim(),
            corpus.store.dim()
        )));
    }
    if write_metrics(cfg, &corpus, &p, out, check)?.is_none() {
        return Err(Failure::Config("nothing to evaluate: test split is empty".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Axis {
    Topk,
    IouGate,
    Gamma,
    Jitter,
    InitStrategy,
    TeacherMode,
}

impl Axis {
    fn config_path(self) -> &'static str {
        match self {
            Axis::Topk => "edit.k",
            Axis::IouGate => "edit.iou_gate",
            Axis::Gamma => "cotrain.gamma",
            Axis::Jitter => "jitter.fraction",
            Axis::InitStrategy => "init_strategy",
            Axis::TeacherMode => "cotrain.teacher_mode",
        }
    }
}

fn with_value(base: &RunConfig, axis: Axis, raw: &str, out: &Path) -> Result<RunConfig, Failure> {
    let mut doc = serde_json::to_value(base).expect("config serializes");
    set_path(&mut doc, axis.config_path(), parse_value(raw))?;
    let mut cfg: RunConfig = serde_json::from_value(doc)
        .map_err(|e| Failure::Config(format!("bad value {raw:?} for {}: {e}", axis.config_path())))?;
    cfg.paths.out_dir = Some(out.to_path_buf());
    cfg.validate()?;
    Ok(cfg)
}

pub fn ablate(cfg: &RunConfig, axis: Axis, values: &[String], check: bool) -> Result<(), Failure> {
    if values.is_empty() {
        return Err(Failure::Config("--values is empty".into()));
    }
    let out = prepare_out(cfg)?;
    // Validate every value before spending time on any run.
    let runs: Vec<(String, RunConfig)> = values
        .iter()
        .map(|v| {
            let dir = out.join(v.replace(['/', '\\'], "_"));
            with_value(cfg, axis, v, &dir).map(|c| (v.clone(), c))
        })
        .collect::<Result<_, _>>()?;
    let corpus = load_corpus(cfg)?;
    let mut sweep = String::from("value,r1,r5,r10,medr\n");
    for (value, run) in &runs {
        info!("ablation {} = {value}", axis.config_path());
        let dir = prepare_out(run)?;
        let m = run_cotrain(run, &corpus, dir, check)?
            .ok_or_else(|| Failure::Config("ablation needs a non-empty test split".into()))?;
        writeln!(sweep, "{value},{},{},{},{}", m.r1, m.r5, m.r10, m.medr).unwrap();
    }
    fs::write(out.join(SWEEP), &sweep)?;
    if check && fs::read_to_string(out.join(SWEEP))?.lines().count() != runs.len() + 1 {
        return Err(mismatch(SWEEP));
    }
    Ok(())
}
