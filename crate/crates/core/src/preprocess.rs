//! Trailing-average smoothing and extraction of the two-segment windows.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{
    select_event_anchors, ChannelId, Session, SessionError, SignalSeries, WindowPolicy,
    CHANNEL_COUNT, SEGMENT_S,
};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("smoothing window {0} s is not in the grid {{0, 5, 10, 15, 20, 25, 30}}")]
    InvalidSmoothing(usize),
    #[error("anchor {anchor_s} s leaves no room for two {SEGMENT_S} s segments in a {duration_s} s session")]
    OutOfBounds { anchor_s: f64, duration_s: f64 },
    #[error("channel `{channel}` has missing data in the window anchored at {anchor_s} s")]
    MissingDataInWindow { channel: ChannelId, anchor_s: f64 },
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// Width of the trailing moving average, in seconds (0 = no smoothing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SmoothingSpec(usize);

impl SmoothingSpec {
    pub const GRID: [usize; 7] = [0, 5, 10, 15, 20, 25, 30];
    pub const NONE: SmoothingSpec = SmoothingSpec(0);

    /// A smoothing width from the experimental grid.
    pub fn new(window_s: usize) -> Result<Self, PreprocessError> {
        if Self::GRID.contains(&window_s) {
            Ok(SmoothingSpec(window_s))
        } else {
            Err(PreprocessError::InvalidSmoothing(window_s))
        }
    }

    /// Any width, bypassing the grid check.
    pub fn custom(window_s: usize) -> Self {
        SmoothingSpec(window_s)
    }

    pub fn window_s(self) -> usize {
        self.0
    }
}

impl fmt::Display for SmoothingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `out[t] = mean(x[max(0, t-N+1) ..= t])`. A window touching a missing
/// sample yields a missing output.
pub fn smooth(series: &SignalSeries, spec: SmoothingSpec) -> SignalSeries {
    let n = spec.window_s();
    if n <= 1 {
        return series.clone();
    }
    let len = series.len();
    let mut values = Vec::with_capacity(len);
    let mut missing = Vec::with_capacity(len);
    for t in 0..len {
        let lo = (t + 1).saturating_sub(n);
        if series.missing[lo..=t].iter().any(|&m| m) {
            values.push(f64::NAN);
            missing.push(true);
        } else {
            let window = &series.values[lo..=t];
            values.push(window.iter().sum::<f64>() / window.len() as f64);
            missing.push(false);
        }
    }
    SignalSeries {
        channel: series.channel,
        rate_hz: series.rate_hz,
        t0_s: series.t0_s,
        values,
        missing,
    }
}

/// Smooths every channel of a session over the whole stream.
pub fn smooth_session(session: &Session, spec: SmoothingSpec) -> Session {
    let mut out = session.clone();
    if spec.window_s() > 1 {
        for series in out.channels.values_mut() {
            *series = smooth(series, spec);
        }
    }
    out
}

pub type Segment = [f64; SEGMENT_S];

/// One 40 s window: `segment_a` precedes the anchor, `segment_b` starts at it.
/// Segments are indexed by [`ChannelId::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub participant_id: String,
    pub gender: u8,
    pub label: u8,
    pub segment_a: [Segment; CHANNEL_COUNT],
    pub segment_b: [Segment; CHANNEL_COUNT],
    pub anchor_s: f64,
    pub smoothing: SmoothingSpec,
}

/// Slices `[anchor-20, anchor)` and `[anchor, anchor+20)` from an already
/// smoothed session. Fractional anchors are floored to the containing second.
pub fn extract_window(
    session: &Session,
    anchor_s: f64,
    spec: SmoothingSpec,
) -> Result<WindowSample, PreprocessError> {
    let seg = SEGMENT_S as f64;
    let start = anchor_s.floor();
    if !(start >= seg && start + seg <= session.duration_s) {
        return Err(PreprocessError::OutOfBounds {
            anchor_s,
            duration_s: session.duration_s,
        });
    }
    let at = start as usize;
    let mut segment_a = [[0.0; SEGMENT_S]; CHANNEL_COUNT];
    let mut segment_b = [[0.0; SEGMENT_S]; CHANNEL_COUNT];
    for id in ChannelId::ALL {
        let series = session.channel(id);
        let range = at - SEGMENT_S..at + SEGMENT_S;
        if series.len() < range.end || series.missing[range.clone()].iter().any(|&m| m) {
            return Err(PreprocessError::MissingDataInWindow {
                channel: id,
                anchor_s,
            });
        }
        segment_a[id.index()].copy_from_slice(&series.values[at - SEGMENT_S..at]);
        segment_b[id.index()].copy_from_slice(&series.values[at..at + SEGMENT_S]);
    }
    Ok(WindowSample {
        participant_id: session.participant_id.clone(),
        gender: session.gender,
        label: session.group.label(),
        segment_a,
        segment_b,
        anchor_s,
        smoothing: spec,
    })
}

/// Both windows of one session: smooth, anchor, slice.
pub fn session_windows(
    session: &Session,
    policy: &WindowPolicy,
    spec: SmoothingSpec,
) -> Result<[WindowSample; 2], PreprocessError> {
    let anchors = select_event_anchors(session, policy)?;
    let smoothed = smooth_session(session, spec);
    Ok([
        extract_window(&smoothed, anchors[0], spec)?,
        extract_window(&smoothed, anchors[1], spec)?,
    ])
}

/// Windows for a whole cohort plus the participants that had to be dropped.
#[derive(Debug, Clone, Default)]
pub struct WindowSet {
    pub samples: Vec<WindowSample>,
    pub rejected: Vec<(String, String)>,
}

/// Extracts two windows per session. A participant is dropped as a whole
/// when either of their windows cannot be extracted, so every retained
/// participant contributes exactly two samples.
pub fn build_windows(
    sessions: &[Session],
    policy: &WindowPolicy,
    spec: SmoothingSpec,
) -> WindowSet {
    let results: Vec<_> = sessions
        .par_iter()
        .map(|s| (s.participant_id.clone(), session_windows(s, policy, spec)))
        .collect();
    let mut set = WindowSet::default();
    for (id, r) in results {
        match r {
            Ok(pair) => set.samples.extend(pair),
            Err(e) => set.rejected.push((id, e.to_string())),
        }
    }
    set
}

/// Debug dump: one row per (sample, channel, segment).
pub fn write_windows_csv<W: Write>(samples: &[WindowSample], mut out: W) -> std::io::Result<()> {
    write!(out, "participant_id,label,anchor_s,smoothing,channel,segment")?;
    for i in 0..SEGMENT_S {
        write!(out, ",v{i}")?;
    }
    writeln!(out)?;
    for s in samples {
        for id in ChannelId::ALL {
            for (name, seg) in [("a", &s.segment_a), ("b", &s.segment_b)] {
                write!(
                    out,
                    "{},{},{},{},{},{}",
                    s.participant_id, s.label, s.anchor_s, s.smoothing, id, name
                )?;
                for v in &seg[id.index()] {
                    write!(out, ",{v}")?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}
