//! Synthetic learning sessions with labelled phone events.
//!
//! Every channel is an AR(1) process around a per-participant level. Both
//! groups share one activity timeline generator; phone sessions additionally
//! get one phone event inside `video2` and one inside `reading_code`. While an
//! event lasts, each channel group independently responds with a fixed
//! probability, and a responding group receives its effect:
//!
//! | group      | channels        | effect                                |
//! |------------|-----------------|---------------------------------------|
//! | head       | pitch, yaw      | pitch drops, extra yaw noise          |
//! | heart      | heart_rate      | linear ramp over the first 10 s       |
//! | eeg        | beta, gamma     | additive shift in dB                  |
//! | attention  | attention       | drop in points                        |
//!
//! Effects never leak outside event spans, so away from events the two
//! groups follow identical distributions.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{
    resample_1hz, write_session, ChannelId, EventKind, EventSpan, Group, RawSample, Session,
    SessionError, CHANNEL_COUNT, SEGMENT_S,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("at least one participant per group is required")]
    EmptyGroup,
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Strong,
    Weak,
    Null,
}

impl std::str::FromStr for PresetName {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strong" => Ok(PresetName::Strong),
            "weak" => Ok(PresetName::Weak),
            "null" => Ok(PresetName::Null),
            _ => Err(SynthError::UnknownPreset(s.to_string())),
        }
    }
}

impl std::fmt::Display for PresetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PresetName::Strong => "strong",
            PresetName::Weak => "weak",
            PresetName::Null => "null",
        })
    }
}

/// Stationary AR(1) baseline of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelNoise {
    pub mean: f64,
    /// Stationary standard deviation.
    pub std: f64,
    pub phi: f64,
    /// Spread of the per-participant level around `mean`.
    pub participant_sd: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSizes {
    pub pitch_drop_deg: f64,
    /// Standard deviation of extra white noise on yaw.
    pub yaw_noise_deg: f64,
    pub hr_ramp_bpm: f64,
    pub eeg_shift_db: f64,
    pub attention_drop: f64,
}

/// Probability that a channel group reacts to a given phone event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseRates {
    pub head: f64,
    pub heart: f64,
    pub eeg: f64,
    pub attention: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorPreset {
    pub name: PresetName,
    pub seed: u64,
    pub effects: EffectSizes,
    pub response: ResponseRates,
    /// Indexed by [`ChannelId::index`].
    pub noise: [ChannelNoise; CHANNEL_COUNT],
    /// Probability that a second of an EEG-derived channel starts a dropout.
    pub dropout_rate: f64,
}

const fn ch(mean: f64, std: f64, phi: f64, participant_sd: f64, lo: f64, hi: f64) -> ChannelNoise {
    ChannelNoise {
        mean,
        std,
        phi,
        participant_sd,
        lo,
        hi,
    }
}

const NOISE: [ChannelNoise; CHANNEL_COUNT] = [
    ch(50.0, 10.0, 0.9, 8.0, 0.0, 100.0),                    // attention
    ch(55.0, 10.0, 0.9, 8.0, 0.0, 100.0),                    // meditation
    ch(62.0, 3.0, 0.8, 3.0, 0.0, 200.0), // alpha
    ch(55.0, 3.0, 0.8, 3.0, 0.0, 200.0), // beta
    ch(46.0, 3.0, 0.8, 3.0, 0.0, 200.0), // gamma
    ch(70.0, 3.0, 0.8, 3.0, 0.0, 200.0), // delta
    ch(64.0, 3.0, 0.8, 3.0, 0.0, 200.0), // theta
    ch(75.0, 3.0, 0.95, 7.0, 40.0, 180.0),                   // heart_rate
    ch(0.0, 3.0, 0.95, 3.0, -90.0, 90.0),                    // roll
    ch(0.0, 4.0, 0.95, 5.0, -90.0, 90.0),                    // yaw
    ch(0.0, 3.0, 0.95, 4.0, -90.0, 90.0),                    // pitch
];

const STRONG_EFFECTS: EffectSizes = EffectSizes {
    pitch_drop_deg: 15.0,
    yaw_noise_deg: 12.0,
    hr_ramp_bpm: 9.0,
    eeg_shift_db: 9.0,
    attention_drop: 30.0,
};

const RESPONSE: ResponseRates = ResponseRates {
    head: 0.8,
    heart: 0.3,
    eeg: 0.3,
    attention: 0.3,
};

impl GeneratorPreset {
    pub fn new(name: PresetName, seed: u64) -> Self {
        let effects = match name {
            PresetName::Strong => STRONG_EFFECTS,
            PresetName::Weak => EffectSizes {
                pitch_drop_deg: STRONG_EFFECTS.pitch_drop_deg / 2.0,
                yaw_noise_deg: STRONG_EFFECTS.yaw_noise_deg / 2.0,
                hr_ramp_bpm: STRONG_EFFECTS.hr_ramp_bpm / 2.0,
                eeg_shift_db: STRONG_EFFECTS.eeg_shift_db / 2.0,
                attention_drop: STRONG_EFFECTS.attention_drop / 2.0,
            },
            PresetName::Null => EffectSizes {
                pitch_drop_deg: 0.0,
                yaw_noise_deg: 0.0,
                hr_ramp_bpm: 0.0,
                eeg_shift_db: 0.0,
                attention_drop: 0.0,
            },
        };
        GeneratorPreset {
            name,
            seed,
            effects,
            response: RESPONSE,
            noise: NOISE,
            dropout_rate: 0.002,
        }
    }

    pub fn strong(seed: u64) -> Self {
        Self::new(PresetName::Strong, seed)
    }

    pub fn null(seed: u64) -> Self {
        Self::new(PresetName::Null, seed)
    }

    fn noise(&self, c: ChannelId) -> &ChannelNoise {
        &self.noise[c.index()]
    }
}

/// Which channel groups reacted to one phone event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTruth {
    pub start_s: f64,
    pub end_s: f64,
    pub head: bool,
    pub heart: bool,
    pub eeg: bool,
    pub attention: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSession {
    pub session: Session,
    pub truth: Vec<EventTruth>,
}

pub fn participant_id(group: Group, index: usize) -> String {
    match group {
        Group::Phone => format!("phone_{:03}", index + 1),
        Group::Nophone => format!("nophone_{:03}", index + 1),
    }
}

/// Activity names in timeline order with their duration ranges in seconds.
const TIMELINE: [(&str, u32, u32); 5] = [
    ("intro", 60, 120),
    ("video1", 250, 350),
    ("video2", 300, 400),
    ("reading_code", 300, 400),
    ("quiz", 500, 700),
];

fn rng_for(preset: &GeneratorPreset, index: usize, group: Group) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(preset.seed);
    let g = match group {
        Group::Phone => 0,
        Group::Nophone => 1,
    };
    rng.set_stream(2 * index as u64 + g);
    rng
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Places a phone event of integer duration inside an activity, leaving at
/// least one segment of room before it and after its window.
fn place_event(rng: &mut ChaCha8Rng, act: &EventSpan) -> EventSpan {
    let seg = SEGMENT_S as f64;
    let duration = rng.random_range(8..=60) as f64;
    let lo = act.start_s + seg + 5.0;
    let hi = act.end_s - duration.max(seg) - 5.0;
    let start = (lo + rng.random_range(0.0..1.0) * (hi - lo)).floor() + rng.random_range(0..10) as f64 / 10.0;
    EventSpan {
        start_s: start,
        end_s: start + duration,
        kind: EventKind::Phone,
        activity_label: act.activity_label.clone(),
    }
}

/// One session, deterministic in `(preset.seed, participant_index, group)`.
pub fn generate_session_with_truth(
    preset: &GeneratorPreset,
    participant_index: usize,
    group: Group,
) -> GeneratedSession {
    let mut rng = rng_for(preset, participant_index, group);

    let mut events = Vec::new();
    let mut t = 0.0;
    for (name, lo, hi) in TIMELINE {
        let d = rng.random_range(lo..=hi) as f64;
        events.push(EventSpan {
            start_s: t,
            end_s: t + d,
            kind: EventKind::Activity,
            activity_label: name.to_string(),
        });
        t += d;
    }
    let duration = t as usize;

    // Drawn for both groups so the two share the same random stream layout.
    let mut truth = Vec::new();
    let mut phone_spans = Vec::new();
    for act in events.clone().iter().filter(|e| e.activity_label == "video2" || e.activity_label == "reading_code") {
        let span = place_event(&mut rng, act);
        let r = &preset.response;
        truth.push(EventTruth {
            start_s: span.start_s,
            end_s: span.end_s,
            head: rng.random_bool(r.head),
            heart: rng.random_bool(r.heart),
            eeg: rng.random_bool(r.eeg),
            attention: rng.random_bool(r.attention),
        });
        phone_spans.push(span);
    }
    if group == Group::Phone {
        events.extend(phone_spans);
    } else {
        truth.clear();
    }

    let mut values: Vec<Vec<f64>> = Vec::with_capacity(CHANNEL_COUNT);
    for c in ChannelId::ALL {
        let n = preset.noise(c);
        let level = n.mean + n.participant_sd * rng.sample::<f64, _>(StandardNormal);
        let innov = n.std * (1.0 - n.phi * n.phi).sqrt();
        let mut x = n.std * rng.sample::<f64, _>(StandardNormal);
        let mut series = Vec::with_capacity(duration);
        for _ in 0..duration {
            x = n.phi * x + innov * rng.sample::<f64, _>(StandardNormal);
            series.push(level + x);
        }
        values.push(series);
    }

    let e = &preset.effects;
    let yaw_noise = Normal::new(0.0, e.yaw_noise_deg).expect("finite std");
    for ev in &truth {
        let start = ev.start_s.ceil() as usize;
        let end = (ev.end_s.ceil() as usize).min(duration);
        for s in start..end {
            let elapsed = s as f64 - ev.start_s;
            if ev.head {
                values[ChannelId::Pitch.index()][s] -= e.pitch_drop_deg;
                values[ChannelId::Yaw.index()][s] += yaw_noise.sample(&mut rng);
            }
            if ev.heart {
                values[ChannelId::HeartRate.index()][s] += e.hr_ramp_bpm * (elapsed / 10.0).min(1.0);
            }
            if ev.eeg {
                values[ChannelId::Beta.index()][s] += e.eeg_shift_db;
                values[ChannelId::Gamma.index()][s] += e.eeg_shift_db;
            }
            if ev.attention {
                values[ChannelId::Attention.index()][s] -= e.attention_drop;
            }
        }
    }

    let mut channels = std::collections::BTreeMap::new();
    for c in ChannelId::ALL {
        let n = preset.noise(c);
        let eeg_like = ChannelId::EEG.contains(&c);
        let mut raw = Vec::with_capacity(duration);
        let mut gap = 0usize;
        let mut prev_present = false;
        for (s, &v) in values[c.index()].iter().enumerate() {
            // A dropout always follows a present sample, so runs never merge.
            if eeg_like && gap == 0 && prev_present && s + 4 < duration && rng.random_bool(preset.dropout_rate) {
                gap = rng.random_range(1..=3);
            }
            prev_present = gap == 0;
            let value = if gap > 0 {
                gap -= 1;
                None
            } else {
                Some(round4(v.clamp(n.lo, n.hi)))
            };
            raw.push(RawSample {
                t_s: s as f64,
                value,
            });
        }
        let series = resample_1hz(c, &raw, 3).expect("sorted timestamps");
        channels.insert(c, series);
    }

    let session = Session {
        participant_id: participant_id(group, participant_index),
        gender: (participant_index % 2) as u8,
        group,
        channels,
        events,
        duration_s: duration as f64,
    };
    GeneratedSession { session, truth }
}

pub fn generate_session(preset: &GeneratorPreset, participant_index: usize, group: Group) -> Session {
    generate_session_with_truth(preset, participant_index, group).session
}

/// Phone participants first, then no-phone participants.
pub fn generate_sessions(preset: &GeneratorPreset, n_phone: usize, n_nophone: usize) -> Vec<Session> {
    let jobs: Vec<(usize, Group)> = (0..n_phone)
        .map(|i| (i, Group::Phone))
        .chain((0..n_nophone).map(|i| (i, Group::Nophone)))
        .collect();
    jobs.par_iter()
        .map(|&(i, g)| generate_session(preset, i, g))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub participant_id: String,
    pub group: Group,
    /// Relative to the dataset directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub preset: GeneratorPreset,
    pub sessions: Vec<ManifestEntry>,
    pub expected_window_samples: usize,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes one directory per session plus `manifest.json` into `out_dir`.
pub fn generate_dataset(
    preset: &GeneratorPreset,
    n_phone: usize,
    n_nophone: usize,
    out_dir: &Path,
) -> Result<Manifest, SynthError> {
    if n_phone == 0 || n_nophone == 0 {
        return Err(SynthError::EmptyGroup);
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let sessions = generate_sessions(preset, n_phone, n_nophone);
    sessions
        .par_iter()
        .try_for_each(|s| write_session(s, &out_dir.join(&s.participant_id)))?;
    let manifest = Manifest {
        seed: preset.seed,
        preset: preset.clone(),
        sessions: sessions
            .iter()
            .map(|s| ManifestEntry {
                participant_id: s.participant_id.clone(),
                group: s.group,
                path: s.participant_id.clone(),
            })
            .collect(),
        expected_window_samples: 2 * sessions.len(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io(&path))?;
    Ok(manifest)
}
