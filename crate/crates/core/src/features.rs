//! Global features of a 20 s segment, early fusion and z-score normalisation.
//!
//! Each segment is summarised by 33 values (`g1..g33`):
//!
//! | #  | feature                          | #  | feature                              |
//! |----|----------------------------------|----|--------------------------------------|
//! | 1  | Σ v, v > 0                       | 18 | max j                                |
//! | 2  | Σ v, v < 0                       | 19 | RMS(j)                               |
//! | 3-5| positions of the 3 largest maxima| 20 | position of max \|j\|                |
//! | 6  | mean(v) / max\|v\|               | 21 | position of max j                    |
//! | 7  | mean(v) / max v                  | 22 | sign changes of v                    |
//! | 8  | RMS(v) / max\|v\|                | 23 | Σ\|v\| (v>0) / Σ\|v\| (v<0)          |
//! | 9  | mean(x)                          | 24 | #(v>0) / #(v<0)                      |
//! | 10 | std(x)                           | 25 | max x - min x                        |
//! | 11 | RMS(a) / max\|a\|                | 26 | mean(v) / (max x - min x)            |
//! | 12 | median(x)                        | 27 | number of local maxima               |
//! | 13 | std(v)                           | 28 | mean\|a\|                            |
//! | 14 | std(a)                           | 29 | max x                                |
//! | 15 | mean\|j\|                        | 30 | min x                                |
//! | 16 | mean(j)                          | 31 | skewness                             |
//! | 17 | max\|j\|                         | 32 | excess kurtosis                      |
//! |    |                                  | 33 | gender                               |
//!
//! `v`, `a`, `j` are the first, second and third differences of `x`.
//! Positions are normalised to `[0, 1]` by `index / (len - 1)`. Ratios whose
//! denominator is below 1e-12 in magnitude are 0. Moments are population
//! moments.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::FoldId;
use crate::preprocess::WindowSample;
use crate::session::{ChannelId, SEGMENT_S};

pub const FEATURE_COUNT: usize = 33;
/// Features per segment excluding gender.
pub const SIGNAL_FEATURES: usize = 32;

const EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("need at least 4 samples for third differences, got {0}")]
    TooShort(usize),
    #[error("segment has {0} samples, expected {SEGMENT_S}")]
    WrongLength(usize),
    #[error("unknown channel or signal set `{0}`")]
    UnknownChannel(String),
    #[error("signal set must be non-empty and free of duplicates")]
    InvalidSignalSet,
    #[error("cannot fit normalisation on an empty training set")]
    EmptyTrainingSet,
    #[error("vector has {got} values, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature table line {line}: {reason}")]
    Table { line: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Velocity, acceleration and jerk as successive first differences.
pub fn derivatives(x: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), FeatureError> {
    if x.len() < 4 {
        return Err(FeatureError::TooShort(x.len()));
    }
    let v = diff(x);
    let a = diff(&v);
    let j = diff(&a);
    Ok((v, a, j))
}

/// The 33 global features of one segment, `values[k]` holding `g(k+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalFeatureVector {
    pub values: [f64; FEATURE_COUNT],
}

impl GlobalFeatureVector {
    /// 1-based accessor matching the `g1..g33` numbering.
    pub fn g(&self, n: usize) -> f64 {
        self.values[n - 1]
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den.abs() < EPS {
        0.0
    } else {
        num / den
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn std_pop(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn max(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// First index of the largest value of `key(x)`, normalised by `len - 1`.
fn argmax_position(x: &[f64], key: impl Fn(f64) -> f64) -> f64 {
    let mut best = 0;
    for i in 1..x.len() {
        if key(x[i]) > key(x[best]) {
            best = i;
        }
    }
    best as f64 / (x.len() - 1) as f64
}

fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Indices of interior strict local maxima.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    (1..x.len() - 1)
        .filter(|&i| x[i] > x[i - 1] && x[i] > x[i + 1])
        .collect()
}

fn sign_changes(v: &[f64]) -> usize {
    let mut changes = 0;
    let mut last = 0.0_f64;
    for &s in v.iter().filter(|s| **s != 0.0) {
        if last != 0.0 && s.signum() != last.signum() {
            changes += 1;
        }
        last = s;
    }
    changes
}

/// Computes `g1..g33` for a 20-sample segment.
pub fn compute_features(segment: &[f64], gender: u8) -> Result<GlobalFeatureVector, FeatureError> {
    if segment.len() != SEGMENT_S {
        return Err(FeatureError::WrongLength(segment.len()));
    }
    let x = segment;
    let (v, a, j) = derivatives(x)?;
    let n = x.len() as f64;
    let last = (x.len() - 1) as f64;

    let pos_sum: f64 = v.iter().filter(|&&s| s > 0.0).sum();
    let neg_sum: f64 = v.iter().filter(|&&s| s < 0.0).sum();
    let pos_count = v.iter().filter(|&&s| s > 0.0).count() as f64;
    let neg_count = v.iter().filter(|&&s| s < 0.0).count() as f64;

    let maxima = local_maxima(x);
    let mut peak_pos = [0.0; 3];
    if maxima.len() < 3 {
        peak_pos[0] = argmax_position(x, |s| s);
    } else {
        let mut ranked = maxima.clone();
        // Largest value first; the stable sort keeps earlier indices ahead on ties.
        ranked.sort_by(|&p, &q| x[q].total_cmp(&x[p]));
        for (slot, &i) in peak_pos.iter_mut().zip(&ranked) {
            *slot = i as f64 / last;
        }
    }

    let x_mean = mean(x);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &s in x {
        let d = s - x_mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let skew = ratio(m3, m2.powf(1.5));
    let kurt = if (m2 * m2).abs() < EPS {
        0.0
    } else {
        m4 / (m2 * m2) - 3.0
    };

    let x_max = max(x);
    let x_min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let range = x_max - x_min;
    let v_mean = mean(&v);
    let v_max_abs = max_abs(&v);

    let values = [
        pos_sum,
        neg_sum,
        peak_pos[0],
        peak_pos[1],
        peak_pos[2],
        ratio(v_mean, v_max_abs),
        ratio(v_mean, max(&v)),
        ratio(rms(&v), v_max_abs),
        x_mean,
        m2.sqrt(),
        ratio(rms(&a), max_abs(&a)),
        median(x),
        std_pop(&v),
        std_pop(&a),
        j.iter().map(|s| s.abs()).sum::<f64>() / j.len() as f64,
        mean(&j),
        max_abs(&j),
        max(&j),
        rms(&j),
        argmax_position(&j, f64::abs),
        argmax_position(&j, |s| s),
        sign_changes(&v) as f64,
        ratio(pos_sum, -neg_sum),
        ratio(pos_count, neg_count),
        range,
        ratio(v_mean, range),
        maxima.len() as f64,
        a.iter().map(|s| s.abs()).sum::<f64>() / a.len() as f64,
        x_max,
        x_min,
        skew,
        kurt,
        gender as f64,
    ];
    Ok(GlobalFeatureVector { values })
}

/// Resolves a signal-set name: `all`, `eeg_hr`, `head_pose`, a single
/// channel name, or a comma-separated list of channel names.
pub fn resolve_signal_set(name: &str) -> Result<Vec<ChannelId>, FeatureError> {
    let set = match name {
        "all" => ChannelId::ALL.to_vec(),
        "eeg" => ChannelId::EEG.to_vec(),
        "eeg_hr" => {
            let mut v = ChannelId::EEG.to_vec();
            v.push(ChannelId::HeartRate);
            v
        }
        "head_pose" => ChannelId::HEAD_POSE.to_vec(),
        other => other
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<ChannelId>()
                    .map_err(|_| FeatureError::UnknownChannel(c.trim().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    check_signal_set(&set)?;
    Ok(set)
}

fn check_signal_set(set: &[ChannelId]) -> Result<(), FeatureError> {
    let mut seen = [false; crate::session::CHANNEL_COUNT];
    if set.is_empty() {
        return Err(FeatureError::InvalidSignalSet);
    }
    for c in set {
        if std::mem::replace(&mut seen[c.index()], true) {
            return Err(FeatureError::InvalidSignalSet);
        }
    }
    Ok(())
}

/// Length of a fused vector for `signals` channels.
pub fn fused_dim(signals: usize) -> usize {
    2 * SIGNAL_FEATURES * signals + 1
}

/// Early-fused feature vector of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedVector {
    pub participant_id: String,
    pub label: u8,
    pub values: Vec<f64>,
    pub signal_set: Vec<ChannelId>,
}

/// Concatenates, per channel in the given order, `g1..g32` of segment A and
/// then of segment B; gender is appended once at the end.
pub fn fuse(sample: &WindowSample, signal_set: &[ChannelId]) -> Result<FusedVector, FeatureError> {
    check_signal_set(signal_set)?;
    let mut values = Vec::with_capacity(fused_dim(signal_set.len()));
    for &c in signal_set {
        for seg in [&sample.segment_a[c.index()], &sample.segment_b[c.index()]] {
            let g = compute_features(seg, sample.gender)?;
            values.extend_from_slice(&g.values[..SIGNAL_FEATURES]);
        }
    }
    values.push(sample.gender as f64);
    Ok(FusedVector {
        participant_id: sample.participant_id.clone(),
        label: sample.label,
        values,
        signal_set: signal_set.to_vec(),
    })
}

/// Column means and population standard deviations of a training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub fitted_on: FoldId,
}

pub fn zscore_fit<R: AsRef<[f64]>>(train: &[R], fitted_on: FoldId) -> Result<ZScoreParams, FeatureError> {
    let first = train.first().ok_or(FeatureError::EmptyTrainingSet)?;
    let d = first.as_ref().len();
    let n = train.len() as f64;
    let mut means = vec![0.0; d];
    for row in train {
        let row = row.as_ref();
        if row.len() != d {
            return Err(FeatureError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        for (m, x) in means.iter_mut().zip(row) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut stds = vec![0.0; d];
    for row in train {
        for ((s, x), m) in stds.iter_mut().zip(row.as_ref()).zip(&means) {
            *s += (x - m) * (x - m);
        }
    }
    stds.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    Ok(ZScoreParams {
        means,
        stds,
        fitted_on,
    })
}

impl ZScoreParams {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// `(x - mean) / std`, with near-constant columns mapped to 0.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if x.len() != self.dim() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| if *s < EPS { 0.0 } else { (v - m) / s })
            .collect())
    }

    pub fn apply_vector(&self, v: &FusedVector) -> Result<FusedVector, FeatureError> {
        Ok(FusedVector {
            values: self.apply(&v.values)?,
            ..v.clone()
        })
    }
}

/// Writes `participant_id,label,f1..fD`.
pub fn write_feature_csv<W: Write>(vectors: &[FusedVector], mut out: W) -> Result<(), FeatureError> {
    let d = vectors.first().map_or(0, |v| v.values.len());
    write!(out, "participant_id,label")?;
    for i in 1..=d {
        write!(out, ",f{i}")?;
    }
    writeln!(out)?;
    for v in vectors {
        if v.values.len() != d {
            return Err(FeatureError::DimensionMismatch {
                expected: d,
                got: v.values.len(),
            });
        }
        write!(out, "{},{}", v.participant_id, v.label)?;
        for x in &v.values {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads a feature table written by [`write_feature_csv`]. The signal set is
/// recovered from the width when it corresponds to a named set.
pub fn read_feature_csv<R: Read>(input: R) -> Result<Vec<FusedVector>, FeatureError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| FeatureError::Table {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if header.len() < 3 || &header[0] != "participant_id" || &header[1] != "label" {
        return Err(FeatureError::Table {
            line: 1,
            reason: "expected header `participant_id,label,f1..fD`".into(),
        });
    }
    for (i, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{}", i + 1) {
            return Err(FeatureError::Table {
                line: 1,
                reason: format!("column {} should be `f{}`", i + 3, i + 1),
            });
        }
    }
    let d = header.len() - 2;
    let signal_set = match (d - 1) / (2 * SIGNAL_FEATURES) {
        _ if (d - 1) % (2 * SIGNAL_FEATURES) != 0 => Vec::new(),
        11 => ChannelId::ALL.to_vec(),
        8 => resolve_signal_set("eeg_hr")?,
        _ => Vec::new(),
    };
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| FeatureError::Table {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let label: u8 = match &record[1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(FeatureError::Table {
                    line,
                    reason: format!("label `{other}` must be 0 or 1"),
                })
            }
        };
        let values = record
            .iter()
            .skip(2)
            .map(|f| {
                f.parse::<f64>().map_err(|_| FeatureError::Table {
                    line,
                    reason: format!("`{f}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(FusedVector {
            participant_id: record[0].to_string(),
            label,
            values,
            signal_set: signal_set.clone(),
        });
    }
    Ok(out)
}
