//! Interval arithmetic on the video time axis.
//!
//! Times are real-valued seconds. An [`Interval`] is half-open in spirit
//! (segments tile a clip without overlap) but IoU only depends on lengths,
//! so endpoints are treated uniformly.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default segment length used by the editor and for clip pooling.
pub const DEFAULT_SEG_LEN_S: f64 = 1.0;

/// A non-empty time span `[start_s, end_s]` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    start_s: f64,
    end_s: f64,
}

impl Interval {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self> {
        if !start_s.is_finite() || !end_s.is_finite() || start_s >= end_s {
            return Err(Error::InvalidInterval {
                start: start_s,
                end: end_s,
            });
        }
        Ok(Self { start_s, end_s })
    }

    #[inline]
    pub fn start(&self) -> f64 {
        self.start_s
    }

    #[inline]
    pub fn end(&self) -> f64 {
        self.end_s
    }

    #[inline]
    pub fn len(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start_s + self.end_s)
    }

    /// `t` lies in the closed span.
    pub fn contains_time(&self, t: f64) -> bool {
        self.start_s <= t && t <= self.end_s
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.start_s <= other.start_s && other.end_s <= self.end_s
    }

    /// Length of the overlap, zero when disjoint.
    pub fn overlap(&self, other: &Interval) -> f64 {
        (self.end_s.min(other.end_s) - self.start_s.max(other.start_s)).max(0.0)
    }

    /// Clamp into `bounds`; `None` when nothing non-degenerate is left.
    pub fn clamp_to(&self, bounds: &Interval) -> Option<Interval> {
        Interval::new(self.start_s.max(bounds.start_s), self.end_s.min(bounds.end_s)).ok()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start_s, self.end_s)
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        [self.start_s, self.end_s].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [start, end] = <[f64; 2]>::deserialize(deserializer)?;
        Interval::new(start, end).map_err(serde::de::Error::custom)
    }
}

/// Temporal intersection-over-union.
pub fn iou(a: &Interval, b: &Interval) -> f64 {
    let inter = a.overlap(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.end_s.max(b.end_s) - a.start_s.min(b.start_s);
    (inter / union).clamp(0.0, 1.0)
}

/// A clip cut into equal segments, the last one absorbing any remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentGrid {
    origin_s: f64,
    seg_len_s: f64,
    n_segments: usize,
    clip_end_s: f64,
}

impl SegmentGrid {
    pub fn origin(&self) -> f64 {
        self.origin_s
    }

    pub fn seg_len(&self) -> f64 {
        self.seg_len_s
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn clip_end(&self) -> f64 {
        self.clip_end_s
    }

    pub fn clip(&self) -> Interval {
        Interval {
            start_s: self.origin_s,
            end_s: self.clip_end_s,
        }
    }

    pub fn segment_start(&self, i: usize) -> f64 {
        debug_assert!(i < self.n_segments);
        self.origin_s + i as f64 * self.seg_len_s
    }

    pub fn segment_end(&self, i: usize) -> f64 {
        debug_assert!(i < self.n_segments);
        if i + 1 == self.n_segments {
            self.clip_end_s
        } else {
            self.segment_start(i + 1)
        }
    }

    pub fn segment(&self, i: usize) -> Interval {
        Interval {
            start_s: self.segment_start(i),
            end_s: self.segment_end(i),
        }
    }

    pub fn segments(&self) -> impl Iterator<Item = Interval> + '_ {
        (0..self.n_segments).map(move |i| self.segment(i))
    }

    /// `[start of segment a, end of segment b]`.
    pub fn span(&self, a: usize, b: usize) -> Interval {
        debug_assert!(a <= b);
        Interval {
            start_s: self.segment_start(a),
            end_s: self.segment_end(b),
        }
    }
}

pub fn segment_grid(clip: &Interval, seg_len_s: f64) -> Result<SegmentGrid> {
    if !(seg_len_s > 0.0) || !seg_len_s.is_finite() {
        return Err(Error::Config(format!(
            "segment length must be positive, got {seg_len_s}"
        )));
    }
    let whole = (clip.len() / seg_len_s).floor();
    let mut n = if whole >= 1.0 { whole as usize } else { 1 };
    // Guard against rounding placing a segment start at or past the clip end.
    while n > 1 && clip.start_s + (n - 1) as f64 * seg_len_s >= clip.end_s {
        n -= 1;
    }
    Ok(SegmentGrid {
        origin_s: clip.start_s,
        seg_len_s,
        n_segments: n,
        clip_end_s: clip.end_s,
    })
}

/// How an initial clip is cut around a caption timestamp.
///
/// Serialized in its string form, e.g. `"midpoint_neighbors"` or
/// `"fixed_half_width:10"`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum InitStrategy {
    /// `[(t_prev + t) / 2, (t + t_next) / 2]`
    #[default]
    MidpointNeighbors,
    /// `[t, t_next]`
    NextGap,
    /// `[t_prev, t]`
    PrevGap,
    /// `[t_prev, t_next]`
    FullNeighbors,
    /// `[t - w, t + w]`
    FixedHalfWidth(f64),
}

impl InitStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitStrategy::FixedHalfWidth(w) if !(w > 0.0 && w.is_finite()) => {
                Err(Error::Config(format!("fixed half width must be positive, got {w}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitStrategy::MidpointNeighbors => f.write_str("midpoint_neighbors"),
            InitStrategy::NextGap => f.write_str("next_gap"),
            InitStrategy::PrevGap => f.write_str("prev_gap"),
            InitStrategy::FullNeighbors => f.write_str("full_neighbors"),
            InitStrategy::FixedHalfWidth(w) => write!(f, "fixed_half_width:{w}"),
        }
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let strategy = match s {
            "midpoint" | "midpoint_neighbors" => InitStrategy::MidpointNeighbors,
            "next_gap" => InitStrategy::NextGap,
            "prev_gap" => InitStrategy::PrevGap,
            "full" | "full_neighbors" => InitStrategy::FullNeighbors,
            other => {
                let width = other
                    .strip_prefix("fixed_half_width:")
                    .or_else(|| other.strip_prefix("fixed:"))
                    .ok_or_else(|| Error::Config(format!("unknown init strategy {other:?}")))?;
                let w: f64 = width
                    .parse()
                    .map_err(|_| Error::Config(format!("bad fixed half width {width:?}")))?;
                InitStrategy::FixedHalfWidth(w)
            }
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

impl From<InitStrategy> for String {
    fn from(s: InitStrategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for InitStrategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Initial clip for the caption at `t`, given its neighbors' timestamps.
///
/// A missing neighbor is replaced by the corresponding end of `video_span`.
pub fn initial_clip(
    caption_id: &str,
    prev_t: Option<f64>,
    t: f64,
    next_t: Option<f64>,
    video_span: &Interval,
    strategy: InitStrategy,
) -> Result<Interval> {
    let annotation = |reason: String| Error::Annotation {
        caption_id: caption_id.to_string(),
        reason,
    };
    if !video_span.contains_time(t) {
        return Err(annotation(format!("timestamp {t} outside video {video_span}")));
    }
    if prev_t.is_some_and(|p| !(p < t)) || next_t.is_some_and(|n| !(t < n)) {
        return Err(annotation(format!(
            "neighbors {prev_t:?} / {next_t:?} not ordered around {t}"
        )));
    }
    let prev = prev_t.unwrap_or(video_span.start_s);
    let next = next_t.unwrap_or(video_span.end_s);
    let (start, end) = match strategy {
        InitStrategy::MidpointNeighbors => {
            let start = prev_t.map_or(video_span.start_s, |p| 0.5 * (p + t));
            let end = next_t.map_or(video_span.end_s, |n| 0.5 * (t + n));
            (start, end)
        }
        InitStrategy::NextGap => (t, next),
        InitStrategy::PrevGap => (prev, t),
        InitStrategy::FullNeighbors => (prev, next),
        InitStrategy::FixedHalfWidth(w) => (t - w, t + w),
    };
    let start = start.max(video_span.start_s);
    let end = end.min(video_span.end_s);
    Interval::new(start, end)
        .map_err(|_| annotation(format!("degenerate initial clip [{start}, {end}] under {strategy}")))
}

/// Shift both ends by independent uniform draws in `[-max_jitter_s, max_jitter_s]`.
pub fn jitter<R: Rng + ?Sized>(clip: &Interval, video_span: &Interval, max_jitter_s: f64, rng: &mut R) -> Interval {
    if !(max_jitter_s > 0.0) {
        return *clip;
    }
    let ds = rng.random_range(-max_jitter_s..=max_jitter_s);
    let de = rng.random_range(-max_jitter_s..=max_jitter_s);
    jitter_by(clip, video_span, ds, de)
}

/// Deterministic core of [`jitter`]: apply the given offsets, clamp, and
/// fall back to the original clip if the result is degenerate.
pub fn jitter_by(clip: &Interval, video_span: &Interval, start_shift: f64, end_shift: f64) -> Interval {
    let start = (clip.start_s + start_shift).max(video_span.start_s);
    let end = (clip.end_s + end_shift).min(video_span.end_s);
    Interval::new(start, end).unwrap_or(*clip)
}
