//! On-disk session format, loading and validation.
//!
//! A session directory looks like this:
//!
//! ```text
//! <session>/
//!   participant.json      {"id": "...", "gender": 0|1, "group": "phone"|"nophone"}
//!   events.csv            start_s,end_s,kind,activity
//!   signals/<channel>.csv t_s,value   (value may be empty = missing)
//! ```
//!
//! Every channel is resampled to 1 Hz on load (per-second mean), short gaps
//! are linearly interpolated and sessions losing too much data are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of input signals.
pub const CHANNEL_COUNT: usize = 11;

/// Length in seconds (= samples at 1 Hz) of each of the two window segments.
pub const SEGMENT_S: usize = 20;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("missing channel `{0}`")]
    MissingChannel(String),
    #[error("{file}:{line}: malformed row: {reason}")]
    MalformedRow {
        file: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("channel `{channel}` has {fraction:.3} of its samples missing (limit {limit:.3})")]
    ExcessiveDataLoss {
        channel: ChannelId,
        fraction: f64,
        limit: f64,
    },
    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),
    #[error("timestamps are not sorted (sample {index})")]
    UnsortedInput { index: usize },
    #[error("not enough usable anchors: {0}")]
    NotEnoughEvents(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SessionError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        SessionError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One of the eleven biometric input signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelId {
    Attention,
    Meditation,
    Alpha,
    Beta,
    Gamma,
    Delta,
    Theta,
    HeartRate,
    Roll,
    Yaw,
    Pitch,
}

impl ChannelId {
    pub const ALL: [ChannelId; CHANNEL_COUNT] = [
        ChannelId::Attention,
        ChannelId::Meditation,
        ChannelId::Alpha,
        ChannelId::Beta,
        ChannelId::Gamma,
        ChannelId::Delta,
        ChannelId::Theta,
        ChannelId::HeartRate,
        ChannelId::Roll,
        ChannelId::Yaw,
        ChannelId::Pitch,
    ];

    /// Signals recorded by the EEG headband (two vendor indices + five bands).
    pub const EEG: [ChannelId; 7] = [
        ChannelId::Attention,
        ChannelId::Meditation,
        ChannelId::Alpha,
        ChannelId::Beta,
        ChannelId::Gamma,
        ChannelId::Delta,
        ChannelId::Theta,
    ];

    pub const HEAD_POSE: [ChannelId; 3] = [ChannelId::Roll, ChannelId::Yaw, ChannelId::Pitch];

    /// Position in [`ChannelId::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelId::Attention => "attention",
            ChannelId::Meditation => "meditation",
            ChannelId::Alpha => "alpha",
            ChannelId::Beta => "beta",
            ChannelId::Gamma => "gamma",
            ChannelId::Delta => "delta",
            ChannelId::Theta => "theta",
            ChannelId::HeartRate => "heart_rate",
            ChannelId::Roll => "roll",
            ChannelId::Yaw => "yaw",
            ChannelId::Pitch => "pitch",
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChannelId::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown channel `{s}`"))
    }
}

/// Experimental condition of a participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Phone,
    Nophone,
}

impl Group {
    pub fn label(self) -> u8 {
        match self {
            Group::Phone => 1,
            Group::Nophone => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Phone,
    Activity,
}

impl EventKind {
    fn as_str(self) -> &'static str {
        match self {
            EventKind::Phone => "phone",
            EventKind::Activity => "activity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpan {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: EventKind,
    pub activity_label: String,
}

impl EventSpan {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// A uniformly sampled channel. `values[i]` is NaN wherever `missing[i]` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSeries {
    pub channel: ChannelId,
    pub rate_hz: f64,
    pub t0_s: f64,
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl SignalSeries {
    /// A complete 1 Hz series starting at t = 0.
    pub fn from_values(channel: ChannelId, values: Vec<f64>) -> Self {
        let missing = values.iter().map(|v| v.is_nan()).collect();
        SignalSeries {
            channel,
            rate_hz: 1.0,
            t0_s: 0.0,
            values,
            missing,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.missing.is_empty() {
            return 0.0;
        }
        self.missing.iter().filter(|&&m| m).count() as f64 / self.missing.len() as f64
    }

    fn pad_to(&mut self, len: usize) {
        while self.values.len() < len {
            self.values.push(f64::NAN);
            self.missing.push(true);
        }
    }
}

/// A timestamped raw reading; `value == None` is an explicit dropout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSample {
    pub t_s: f64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    /// Per-channel limit on the fraction of missing seconds.
    pub max_missing_fraction: f64,
    /// Longest run of empty seconds that is linearly interpolated.
    pub gap_fill_s: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            max_missing_fraction: 0.20,
            gap_fill_s: 3,
        }
    }
}

/// Participant metadata, channels and event timeline of one learning session.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub participant_id: String,
    pub gender: u8,
    pub group: Group,
    pub channels: BTreeMap<ChannelId, SignalSeries>,
    pub events: Vec<EventSpan>,
    pub duration_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParticipantFile {
    id: String,
    gender: u8,
    group: Group,
}

impl Session {
    pub fn channel(&self, id: ChannelId) -> &SignalSeries {
        // Presence of all channels is a load-time invariant.
        &self.channels[&id]
    }

    /// Phone events ordered by start time.
    pub fn phone_events(&self) -> Vec<&EventSpan> {
        let mut ev: Vec<&EventSpan> = self
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Phone)
            .collect();
        ev.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        ev
    }

    /// Checks the structural invariants of a session.
    pub fn validate(&self, opts: &LoadOptions) -> Result<(), SessionError> {
        if self.participant_id.trim().is_empty() {
            return Err(SessionError::InvalidMetadata("empty participant id".into()));
        }
        if self.gender > 1 {
            return Err(SessionError::InvalidMetadata(format!(
                "gender must be 0 or 1, got {}",
                self.gender
            )));
        }
        for id in ChannelId::ALL {
            let series = self
                .channels
                .get(&id)
                .ok_or_else(|| SessionError::MissingChannel(id.as_str().to_string()))?;
            if series.values.len() != series.missing.len() {
                return Err(SessionError::InvalidMetadata(format!(
                    "channel `{id}` has mismatched value/mask lengths"
                )));
            }
            if series.rate_hz != 1.0 {
                return Err(SessionError::InvalidMetadata(format!(
                    "channel `{id}` is not at 1 Hz"
                )));
            }
            let fraction = series.missing_fraction();
            if fraction > opts.max_missing_fraction {
                return Err(SessionError::ExcessiveDataLoss {
                    channel: id,
                    fraction,
                    limit: opts.max_missing_fraction,
                });
            }
        }
        for e in &self.events {
            if !(e.start_s >= 0.0 && e.end_s > e.start_s && e.end_s <= self.duration_s) {
                return Err(SessionError::InvalidMetadata(format!(
                    "event [{}, {}) lies outside [0, {}] or is empty",
                    e.start_s, e.end_s, self.duration_s
                )));
            }
        }
        let phone = self.phone_events();
        for pair in phone.windows(2) {
            if pair[1].start_s < pair[0].end_s {
                return Err(SessionError::InvalidMetadata(format!(
                    "phone events at {} and {} overlap",
                    pair[0].start_s, pair[1].start_s
                )));
            }
        }
        if self.group == Group::Phone && phone.len() < 2 {
            return Err(SessionError::InvalidMetadata(format!(
                "phone-group participant `{}` has {} phone events, expected at least 2",
                self.participant_id,
                phone.len()
            )));
        }
        Ok(())
    }
}

/// Bins raw samples into whole seconds (mean of `[t, t+1)`), then fills
/// runs of at most `gap_fill_s` empty seconds by linear interpolation.
/// Longer runs, and runs without a neighbour on both sides, stay missing.
pub fn resample_1hz(
    channel: ChannelId,
    raw: &[RawSample],
    gap_fill_s: usize,
) -> Result<SignalSeries, SessionError> {
    for (i, pair) in raw.windows(2).enumerate() {
        if !(pair[1].t_s >= pair[0].t_s) {
            return Err(SessionError::UnsortedInput { index: i + 1 });
        }
    }
    let Some(last) = raw.last() else {
        return Ok(SignalSeries {
            channel,
            rate_hz: 1.0,
            t0_s: 0.0,
            values: Vec::new(),
            missing: Vec::new(),
        });
    };
    let n = last.t_s.floor() as usize + 1;
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for s in raw {
        if let Some(v) = s.value {
            let sec = s.t_s.floor() as usize;
            sums[sec] += v;
            counts[sec] += 1;
        }
    }
    let mut values: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();
    let mut missing: Vec<bool> = counts.iter().map(|&c| c == 0).collect();

    let mut i = 0;
    while i < n {
        if !missing[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && missing[i] {
            i += 1;
        }
        let run = i - start;
        if start == 0 || i == n || run > gap_fill_s {
            continue;
        }
        let left = values[start - 1];
        let right = values[i];
        for k in 0..run {
            let frac = (k + 1) as f64 / (run + 1) as f64;
            values[start + k] = left + (right - left) * frac;
            missing[start + k] = false;
        }
    }

    Ok(SignalSeries {
        channel,
        rate_hz: 1.0,
        t0_s: 0.0,
        values,
        missing,
    })
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>, SessionError> {
    let file = fs::File::open(path).map_err(|e| SessionError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(
    reader: &mut csv::Reader<fs::File>,
    path: &Path,
    expected: &[&str],
) -> Result<(), SessionError> {
    let header = reader.headers().map_err(|e| SessionError::MalformedRow {
        file: path.to_path_buf(),
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(SessionError::MalformedRow {
            file: path.to_path_buf(),
            line: 1,
            reason: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(())
}

fn parse_real(field: &str, path: &Path, line: u64, what: &str) -> Result<f64, SessionError> {
    let v: f64 = field.parse().map_err(|_| SessionError::MalformedRow {
        file: path.to_path_buf(),
        line,
        reason: format!("{what} `{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(SessionError::MalformedRow {
            file: path.to_path_buf(),
            line,
            reason: format!("{what} `{field}` is not finite"),
        });
    }
    Ok(v)
}

/// Reads one `t_s,value` channel file.
pub fn read_channel_csv(path: &Path) -> Result<Vec<RawSample>, SessionError> {
    let mut reader = csv_reader(path)?;
    check_header(&mut reader, path, &["t_s", "value"])?;
    let mut out = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for record in reader.records() {
        let record = record.map_err(|e| SessionError::MalformedRow {
            file: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(SessionError::MalformedRow {
                file: path.to_path_buf(),
                line,
                reason: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let t_s = parse_real(&record[0], path, line, "timestamp")?;
        if t_s < 0.0 {
            return Err(SessionError::MalformedRow {
                file: path.to_path_buf(),
                line,
                reason: "negative timestamp".into(),
            });
        }
        if t_s < prev {
            return Err(SessionError::MalformedRow {
                file: path.to_path_buf(),
                line,
                reason: "timestamps must be non-decreasing".into(),
            });
        }
        prev = t_s;
        let value = if record[1].is_empty() {
            None
        } else {
            Some(parse_real(&record[1], path, line, "value")?)
        };
        out.push(RawSample { t_s, value });
    }
    Ok(out)
}

fn read_events(path: &Path) -> Result<Vec<EventSpan>, SessionError> {
    let mut reader = csv_reader(path)?;
    check_header(&mut reader, path, &["start_s", "end_s", "kind", "activity"])?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| SessionError::MalformedRow {
            file: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(SessionError::MalformedRow {
                file: path.to_path_buf(),
                line,
                reason: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let start_s = parse_real(&record[0], path, line, "start_s")?;
        let end_s = parse_real(&record[1], path, line, "end_s")?;
        let kind = match &record[2] {
            "phone" => EventKind::Phone,
            "activity" => EventKind::Activity,
            other => {
                return Err(SessionError::MalformedRow {
                    file: path.to_path_buf(),
                    line,
                    reason: format!("unknown event kind `{other}`"),
                })
            }
        };
        if end_s <= start_s {
            return Err(SessionError::MalformedRow {
                file: path.to_path_buf(),
                line,
                reason: "end_s must exceed start_s".into(),
            });
        }
        out.push(EventSpan {
            start_s,
            end_s,
            kind,
            activity_label: record[3].to_string(),
        });
    }
    Ok(out)
}

/// Loads and validates a session directory with default options.
pub fn load_session(dir: &Path) -> Result<Session, SessionError> {
    load_session_with(dir, &LoadOptions::default())
}

pub fn load_session_with(dir: &Path, opts: &LoadOptions) -> Result<Session, SessionError> {
    let meta_path = dir.join("participant.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| SessionError::io(&meta_path, e))?;
    let meta: ParticipantFile = serde_json::from_str(&meta_text)
        .map_err(|e| SessionError::InvalidMetadata(format!("{}: {e}", meta_path.display())))?;

    let events = read_events(&dir.join("events.csv"))?;

    let mut channels = BTreeMap::new();
    for id in ChannelId::ALL {
        let path = dir.join("signals").join(format!("{}.csv", id.as_str()));
        if !path.is_file() {
            return Err(SessionError::MissingChannel(id.as_str().to_string()));
        }
        let raw = read_channel_csv(&path)?;
        channels.insert(id, resample_1hz(id, &raw, opts.gap_fill_s)?);
    }
    let n = channels.values().map(SignalSeries::len).max().unwrap_or(0);
    for series in channels.values_mut() {
        series.pad_to(n);
    }

    let session = Session {
        participant_id: meta.id,
        gender: meta.gender,
        group: meta.group,
        channels,
        events,
        duration_s: n as f64,
    };
    session.validate(opts)?;
    Ok(session)
}

/// Writes a session in the on-disk format. Missing samples are written as
/// empty values.
pub fn write_session(session: &Session, dir: &Path) -> Result<(), SessionError> {
    let signals = dir.join("signals");
    fs::create_dir_all(&signals).map_err(|e| SessionError::io(&signals, e))?;

    let meta = ParticipantFile {
        id: session.participant_id.clone(),
        gender: session.gender,
        group: session.group,
    };
    let meta_path = dir.join("participant.json");
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    fs::write(&meta_path, text).map_err(|e| SessionError::io(&meta_path, e))?;

    let mut events = String::from("start_s,end_s,kind,activity\n");
    for e in &session.events {
        events.push_str(&format!(
            "{},{},{},{}\n",
            e.start_s,
            e.end_s,
            e.kind.as_str(),
            e.activity_label
        ));
    }
    let events_path = dir.join("events.csv");
    fs::write(&events_path, events).map_err(|e| SessionError::io(&events_path, e))?;

    for (id, series) in &session.channels {
        let path = signals.join(format!("{}.csv", id.as_str()));
        fs::write(&path, channel_csv(series)).map_err(|e| SessionError::io(&path, e))?;
    }
    Ok(())
}

fn channel_csv(series: &SignalSeries) -> String {
    let mut out = String::with_capacity(series.len() * 12 + 16);
    out.push_str("t_s,value\n");
    for (i, (&v, &m)) in series.values.iter().zip(&series.missing).enumerate() {
        let t = series.t0_s + i as f64 / series.rate_hz;
        if m {
            out.push_str(&format!("{t},\n"));
        } else {
            out.push_str(&format!("{t},{v}\n"));
        }
    }
    out
}

/// How the two analysis windows of a session are anchored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    /// Activities in which no-phone windows are placed.
    pub match_activities: Vec<String>,
    pub seed: u64,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy {
            match_activities: vec!["video2".to_string(), "reading_code".to_string()],
            seed: 42,
        }
    }
}

/// FNV-1a, used to derive per-participant RNG streams that do not depend
/// on load order.
pub(crate) fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Picks the two anchor times (start of the event segment) for a session.
///
/// Phone participants are anchored at the start of their first two phone
/// events. No-phone participants get one anchor in each of the first two
/// matching activities long enough to hold a whole window; the anchor is a
/// whole second drawn uniformly so that both segments stay inside the
/// activity.
pub fn select_event_anchors(
    session: &Session,
    policy: &WindowPolicy,
) -> Result<[f64; 2], SessionError> {
    match session.group {
        Group::Phone => {
            let phone = session.phone_events();
            if phone.len() < 2 {
                return Err(SessionError::NotEnoughEvents(format!(
                    "`{}` has {} phone events",
                    session.participant_id,
                    phone.len()
                )));
            }
            Ok([phone[0].start_s, phone[1].start_s])
        }
        Group::Nophone => {
            let seg = SEGMENT_S as f64;
            let mut acts: Vec<&EventSpan> = session
                .events
                .iter()
                .filter(|e| {
                    e.kind == EventKind::Activity
                        && policy.match_activities.iter().any(|a| *a == e.activity_label)
                })
                .collect();
            acts.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
            let mut rng =
                ChaCha8Rng::seed_from_u64(policy.seed ^ stable_hash(&session.participant_id));
            let mut anchors = Vec::with_capacity(2);
            for act in acts {
                let lo = act.start_s.ceil() + seg;
                let hi = act.end_s.floor() - seg;
                if lo > hi {
                    continue;
                }
                let offset = rng.random_range(0..=(hi - lo) as u64);
                anchors.push(lo + offset as f64);
                if anchors.len() == 2 {
                    return Ok([anchors[0], anchors[1]]);
                }
            }
            Err(SessionError::NotEnoughEvents(format!(
                "`{}` has {} matching activities of at least {} s",
                session.participant_id,
                anchors.len(),
                2 * SEGMENT_S
            )))
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// A complete session whose channels are simple deterministic ramps.
    pub fn session(group: Group, duration: usize, events: Vec<EventSpan>) -> Session {
        let channels = ChannelId::ALL
            .iter()
            .map(|&id| {
                let values = (0..duration)
                    .map(|t| id.index() as f64 * 10.0 + ((t * 7 + id.index()) % 13) as f64 * 0.5)
                    .collect();
                (id, SignalSeries::from_values(id, values))
            })
            .collect();
        Session {
            participant_id: format!("{group:?}-fixture").to_lowercase(),
            gender: 1,
            group,
            channels,
            events,
            duration_s: duration as f64,
        }
    }

    pub fn span(start_s: f64, end_s: f64, kind: EventKind, label: &str) -> EventSpan {
        EventSpan {
            start_s,
            end_s,
            kind,
            activity_label: label.to_string(),
        }
    }

    pub fn phone_session() -> Session {
        session(
            Group::Phone,
            1800,
            vec![
                span(200.0, 600.0, EventKind::Activity, "video2"),
                span(300.0, 330.0, EventKind::Phone, "video2"),
                span(800.0, 1200.0, EventKind::Activity, "reading_code"),
                span(900.0, 912.0, EventKind::Phone, "reading_code"),
            ],
        )
    }
}
