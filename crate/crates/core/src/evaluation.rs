//! Participant-level leave-one-out evaluation and the metrics reported for
//! every grid cell: accuracy, ROC/AUC, class score densities, KL divergence
//! and McNemar's test.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::classifiers::{self, ClassifierError, ModelSpec, TrainedModel};
use crate::dimreduce::{fit_reducer, FittedReducer, ReduceError, ReductionSpec};
use crate::features::{zscore_fit, FeatureError, FusedVector, ZScoreParams};
use crate::preprocess::SmoothingSpec;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("participant {participant} has {count} samples, expected 2")]
    UnbalancedParticipant { participant: String, count: usize },
    #[error("training set of fold {fold} contains a single class")]
    SingleClassFold { fold: FoldId },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("both classes are required")]
    SingleClass,
    #[error("reports do not cover the same samples: {0}")]
    SampleMismatch(String),
    #[error("fold {fold}: {detail}")]
    Leakage { fold: FoldId, detail: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Identifies the training set an artifact was fitted on: `loo:<participant>`
/// for a fold that held that participant out, `all` for the full dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FoldId(String);

impl FoldId {
    pub fn holdout(participant: &str) -> Self {
        FoldId(format!("loo:{participant}"))
    }

    pub fn all() -> Self {
        FoldId("all".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The held-out participant, if this is a LOO fold.
    pub fn held_out(&self) -> Option<&str> {
        self.0.strip_prefix("loo:")
    }
}

impl fmt::Display for FoldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test: String,
    pub train: Vec<String>,
}

impl Fold {
    pub fn id(&self) -> FoldId {
        FoldId::holdout(&self.test)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    /// One fold per distinct participant, in sorted id order.
    pub fn leave_one_participant_out<S: AsRef<str>>(participants: &[S]) -> Self {
        let ids: std::collections::BTreeSet<&str> = participants.iter().map(AsRef::as_ref).collect();
        let folds = ids
            .iter()
            .map(|&test| Fold {
                test: test.to_string(),
                train: ids.iter().filter(|&&p| p != test).map(|p| p.to_string()).collect(),
            })
            .collect();
        FoldPlan { folds }
    }
}

/// Everything that distinguishes one grid cell from another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub signal_set: String,
    pub smoothing: SmoothingSpec,
    pub reduction: ReductionSpec,
    pub model: ModelSpec,
}

impl PipelineConfig {
    /// Cell name, e.g. `all__s20__kbest250__rf250`.
    pub fn fingerprint(&self) -> String {
        format!(
            "{}__s{}__{}__{}",
            self.signal_set, self.smoothing, self.reduction, self.model
        )
    }
}

/// Z-score, reducer and model fitted together on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub config: PipelineConfig,
    pub zscore: ZScoreParams,
    pub reducer: FittedReducer,
    pub model: TrainedModel,
    /// False when the SVM solver stopped before reaching its tolerance.
    pub converged: bool,
}

impl FittedPipeline {
    pub fn fit(
        config: &PipelineConfig,
        x: &[Vec<f64>],
        y: &[u8],
        fold: FoldId,
    ) -> Result<Self, EvalError> {
        let zscore = zscore_fit(x, fold.clone())?;
        let z: Vec<Vec<f64>> = x.iter().map(|r| zscore.apply(r)).collect::<Result<_, _>>()?;
        let reducer = fit_reducer(config.reduction, &z, y, fold.clone())?;
        let r: Vec<Vec<f64>> = z.iter().map(|row| reducer.transform(row)).collect::<Result<_, _>>()?;
        let (model, converged) = match classifiers::train(&config.model, &r, y, fold) {
            Ok(m) => (m, true),
            Err(ClassifierError::NoConvergence { model, .. }) => (*model, false),
            Err(e) => return Err(e.into()),
        };
        Ok(FittedPipeline {
            config: config.clone(),
            zscore,
            reducer,
            model,
            converged,
        })
    }

    pub fn score(&self, x: &[f64]) -> Result<f64, EvalError> {
        let z = self.zscore.apply(x)?;
        let r = self.reducer.transform(&z)?;
        Ok(self.model.predict_score(&r)?)
    }

    fn fitted_on(&self) -> [&FoldId; 3] {
        [&self.zscore.fitted_on, &self.reducer.fitted_on, &self.model.fitted_on]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub participant_id: String,
    pub label: u8,
    pub score: f64,
    pub correct: bool,
}

/// Provenance of one fold, kept in the report so that the separation of
/// training and test data can be audited afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTrace {
    pub fold: FoldId,
    pub test_participant: String,
    pub train_participants: usize,
    pub train_samples: usize,
    pub zscore_fitted_on: FoldId,
    pub reducer_fitted_on: FoldId,
    pub model_fitted_on: FoldId,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

pub const DENSITY_BINS: usize = 20;
pub const KL_EPSILON: f64 = 1e-10;

/// Per-class score histograms over 20 equal bins on `[0, 1]`, as fractions
/// of each class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDensities {
    pub phone: Vec<f64>,
    pub nophone: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlDivergence {
    /// KL(phone ‖ nophone).
    pub forward: f64,
    pub reverse: f64,
    pub symmetric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub fingerprint: String,
    pub config: PipelineConfig,
    pub accuracy: f64,
    pub auc: f64,
    pub kl: KlDivergence,
    pub records: Vec<SampleRecord>,
    pub roc_points: Vec<RocPoint>,
    pub score_densities: ScoreDensities,
    pub folds: Vec<FoldTrace>,
}

impl EvaluationReport {
    pub fn correctness(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.correct).collect()
    }

    pub fn nonconverged_folds(&self) -> usize {
        self.folds.iter().filter(|f| !f.converged).count()
    }
}

fn bin_of(score: f64) -> usize {
    ((score * DENSITY_BINS as f64).floor().max(0.0) as usize).min(DENSITY_BINS - 1)
}

fn histogram(scores: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; DENSITY_BINS];
    for &s in scores {
        h[bin_of(s)] += 1.0;
    }
    h
}

pub fn score_densities(labels: &[u8], scores: &[f64]) -> ScoreDensities {
    let split = |want: u8| -> Vec<f64> {
        let s: Vec<f64> = labels
            .iter()
            .zip(scores)
            .filter(|(&l, _)| l == want)
            .map(|(_, &s)| s)
            .collect();
        let n = s.len().max(1) as f64;
        histogram(&s).into_iter().map(|c| c / n).collect()
    };
    ScoreDensities {
        phone: split(1),
        nophone: split(0),
    }
}

/// Divergence between the binned score distributions of the two classes.
pub fn kl_divergence(scores_pos: &[f64], scores_neg: &[f64]) -> Result<KlDivergence, EvalError> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let smooth = |s: &[f64]| -> Vec<f64> {
        let h: Vec<f64> = histogram(s).into_iter().map(|c| c + KL_EPSILON).collect();
        let total: f64 = h.iter().sum();
        h.into_iter().map(|c| c / total).collect()
    };
    let (p, q) = (smooth(scores_pos), smooth(scores_neg));
    let kl = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * (x / y).ln()).sum::<f64>();
    let forward = kl(&p, &q);
    let reverse = kl(&q, &p);
    Ok(KlDivergence {
        forward,
        reverse,
        symmetric: (forward + reverse) / 2.0,
    })
}

/// ROC curve with one point per distinct score (a sample is positive when
/// its score is at least the threshold) plus a leading point above every
/// score; AUC by the trapezoidal rule.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<(Vec<RocPoint>, f64), EvalError> {
    if labels.len() != scores.len() {
        return Err(EvalError::LengthMismatch(labels.len(), scores.len()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let top = scores[order[0]];
    let mut points = vec![RocPoint {
        threshold: top + 1.0,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let prev = *points.last().unwrap();
        let p = RocPoint {
            threshold,
            fpr: fp / neg,
            tpr: tp / pos,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok((points, auc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// A correct, B wrong.
    pub b: usize,
    /// A wrong, B correct.
    pub c: usize,
    pub chi2: f64,
    pub p: f64,
}

/// Continuity-corrected McNemar test on paired per-sample correctness.
pub fn mcnemar(correct_a: &[bool], correct_b: &[bool]) -> Result<McNemar, EvalError> {
    if correct_a.len() != correct_b.len() {
        return Err(EvalError::LengthMismatch(correct_a.len(), correct_b.len()));
    }
    let b = correct_a.iter().zip(correct_b).filter(|(&a, &b)| a && !b).count();
    let c = correct_a.iter().zip(correct_b).filter(|(&a, &b)| !a && b).count();
    if b + c == 0 {
        return Ok(McNemar { b, c, chi2: 0.0, p: 1.0 });
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let chi2 = diff * diff / (b + c) as f64;
    // Upper tail of χ²(1) = 2(1 - Φ(√χ²)) = erfc(√(χ²/2)).
    let p = erfc((chi2 / 2.0).sqrt());
    Ok(McNemar { b, c, chi2, p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    /// `(acc_b - acc_a) / acc_a` in percent.
    pub improvement_pct: f64,
    pub mcnemar: McNemar,
}

pub fn relative_improvement_pct(acc_a: f64, acc_b: f64) -> f64 {
    if acc_a == 0.0 {
        return 0.0;
    }
    (acc_b - acc_a) / acc_a * 100.0
}

pub fn compare_reports(a: &EvaluationReport, b: &EvaluationReport) -> Result<Comparison, EvalError> {
    if a.records.len() != b.records.len() {
        return Err(EvalError::SampleMismatch(format!(
            "{} vs {} samples",
            a.records.len(),
            b.records.len()
        )));
    }
    for (i, (ra, rb)) in a.records.iter().zip(&b.records).enumerate() {
        if ra.participant_id != rb.participant_id || ra.label != rb.label {
            return Err(EvalError::SampleMismatch(format!(
                "sample {i}: {} vs {}",
                ra.participant_id, rb.participant_id
            )));
        }
    }
    Ok(Comparison {
        accuracy_a: a.accuracy,
        accuracy_b: b.accuracy,
        improvement_pct: relative_improvement_pct(a.accuracy, b.accuracy),
        mcnemar: mcnemar(&a.correctness(), &b.correctness())?,
    })
}

/// Result of fitting on one training fold and scoring its held-out rows.
pub(crate) struct FoldOutcome {
    pub scores: Vec<f64>,
    pub fitted_on: [FoldId; 3],
    pub converged: bool,
}

/// Leave-one-participant-out over `dataset`, where `fit_score` receives the
/// training rows, their labels, the test rows and the fold id.
pub(crate) fn loo_with<F>(
    dataset: &[FusedVector],
    config: &PipelineConfig,
    fit_score: F,
) -> Result<EvaluationReport, EvalError>
where
    F: Fn(&[Vec<f64>], &[u8], &[Vec<f64>], FoldId) -> Result<FoldOutcome, EvalError> + Sync,
{
    let mut by_participant: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, v) in dataset.iter().enumerate() {
        by_participant.entry(v.participant_id.as_str()).or_default().push(i);
    }
    if by_participant.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    for (p, rows) in &by_participant {
        if rows.len() != 2 {
            return Err(EvalError::UnbalancedParticipant {
                participant: p.to_string(),
                count: rows.len(),
            });
        }
    }
    let ids: Vec<&str> = by_participant.keys().copied().collect();
    let plan = FoldPlan::leave_one_participant_out(&ids);

    let outcomes: Vec<Result<(FoldTrace, Vec<SampleRecord>), EvalError>> = plan
        .folds
        .par_iter()
        .map(|fold| {
            let id = fold.id();
            let train_rows: Vec<usize> = fold
                .train
                .iter()
                .flat_map(|p| by_participant[p.as_str()].iter().copied())
                .collect();
            let test_rows = &by_participant[fold.test.as_str()];
            if train_rows.iter().any(|&r| dataset[r].participant_id == fold.test) {
                return Err(EvalError::Leakage {
                    fold: id,
                    detail: "test participant present in training rows".into(),
                });
            }
            let x: Vec<Vec<f64>> = train_rows.iter().map(|&r| dataset[r].values.clone()).collect();
            let y: Vec<u8> = train_rows.iter().map(|&r| dataset[r].label).collect();
            if y.iter().all(|&l| l == y[0]) {
                return Err(EvalError::SingleClassFold { fold: id });
            }
            let tx: Vec<Vec<f64>> = test_rows.iter().map(|&r| dataset[r].values.clone()).collect();
            let out = fit_score(&x, &y, &tx, id.clone())?;
            if let Some(bad) = out.fitted_on.iter().find(|f| **f != id) {
                return Err(EvalError::Leakage {
                    fold: id,
                    detail: format!("artifact fitted on {bad}"),
                });
            }
            let records = test_rows
                .iter()
                .zip(&out.scores)
                .map(|(&r, &score)| {
                    let label = dataset[r].label;
                    SampleRecord {
                        participant_id: dataset[r].participant_id.clone(),
                        label,
                        score,
                        correct: ((score >= 0.5) as u8) == label,
                    }
                })
                .collect();
            let [z, r, m] = out.fitted_on;
            let trace = FoldTrace {
                fold: id,
                test_participant: fold.test.clone(),
                train_participants: fold.train.len(),
                train_samples: train_rows.len(),
                zscore_fitted_on: z,
                reducer_fitted_on: r,
                model_fitted_on: m,
                converged: out.converged,
            };
            Ok((trace, records))
        })
        .collect();

    let mut folds = Vec::with_capacity(outcomes.len());
    let mut records = Vec::with_capacity(dataset.len());
    for o in outcomes {
        let (trace, recs) = o?;
        folds.push(trace);
        records.extend(recs);
    }
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    let accuracy = records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64;
    let (roc_points, auc) = roc_auc(&labels, &scores)?;
    let pos: Vec<f64> = records.iter().filter(|r| r.label == 1).map(|r| r.score).collect();
    let neg: Vec<f64> = records.iter().filter(|r| r.label == 0).map(|r| r.score).collect();
    let kl = kl_divergence(&pos, &neg)?;
    Ok(EvaluationReport {
        fingerprint: config.fingerprint(),
        config: config.clone(),
        accuracy,
        auc,
        kl,
        records,
        roc_points,
        score_densities: score_densities(&labels, &scores),
        folds,
    })
}

/// Participant-level leave-one-out: per fold, z-score, reducer and model are
/// fitted on the other participants only and the two held-out samples are
/// scored. Records are ordered by participant id.
pub fn run_loo(dataset: &[FusedVector], config: &PipelineConfig) -> Result<EvaluationReport, EvalError> {
    loo_with(dataset, config, |x, y, test, fold| {
        let p = FittedPipeline::fit(config, x, y, fold)?;
        let scores = test.iter().map(|r| p.score(r)).collect::<Result<_, _>>()?;
        Ok(FoldOutcome {
            scores,
            fitted_on: p.fitted_on().map(Clone::clone),
            converged: p.converged,
        })
    })
}

pub fn write_roc_csv<W: Write>(points: &[RocPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "threshold,fpr,tpr")?;
    for p in points {
        writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    Ok(())
}

pub fn write_densities_csv<W: Write>(d: &ScoreDensities, mut out: W) -> std::io::Result<()> {
    writeln!(out, "bin_lo,bin_hi,p_phone,p_nophone")?;
    let w = 1.0 / DENSITY_BINS as f64;
    for i in 0..DENSITY_BINS {
        writeln!(
            out,
            "{},{},{},{}",
            i as f64 * w,
            (i + 1) as f64 * w,
            d.phone[i],
            d.nophone[i]
        )?;
    }
    Ok(())
}

pub fn write_predictions_csv<W: Write>(records: &[SampleRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "participant_id,label,score,correct")?;
    for r in records {
        writeln!(out, "{},{},{},{}", r.participant_id, r.label, r.score, r.correct)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::Kernel;
    use proptest::prelude::*;

    fn concordance(labels: &[u8], scores: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn fold_ids() {
        assert_eq!(FoldId::holdout("p3").as_str(), "loo:p3");
        assert_eq!(FoldId::holdout("p3").held_out(), Some("p3"));
        assert_eq!(FoldId::all().held_out(), None);
        assert_eq!(serde_json::to_string(&FoldId::all()).unwrap(), "\"all\"");
    }

    #[test]
    fn fold_plan_covers_each_participant_once() {
        let plan = FoldPlan::leave_one_participant_out(&["c", "a", "b", "a"]);
        let tests: Vec<&str> = plan.folds.iter().map(|f| f.test.as_str()).collect();
        assert_eq!(tests, ["a", "b", "c"]);
        for f in &plan.folds {
            assert_eq!(f.train.len(), 2);
            assert!(!f.train.contains(&f.test));
        }
    }

    #[test]
    fn auc_examples() {
        let (_, auc) = roc_auc(&[1, 0, 1, 0], &[0.9, 0.8, 0.7, 0.1]).unwrap();
        assert!((auc - 0.75).abs() < 1e-15);
        let (_, auc) = roc_auc(&[1, 1, 0, 0], &[0.9, 0.8, 0.2, 0.1]).unwrap();
        assert_eq!(auc, 1.0);
        let (pts, auc) = roc_auc(&[1, 0, 1, 0], &[0.5; 4]).unwrap();
        assert_eq!(auc, 0.5);
        assert_eq!(pts.len(), 2);
        assert!(matches!(roc_auc(&[1, 1], &[0.1, 0.2]), Err(EvalError::SingleClass)));
    }

    proptest! {
        #[test]
        fn auc_matches_concordance(
            data in prop::collection::vec((0u8..2, 0u8..10), 2..60)
        ) {
            let labels: Vec<u8> = data.iter().map(|d| d.0).collect();
            let scores: Vec<f64> = data.iter().map(|d| d.1 as f64 / 10.0).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let (pts, auc) = roc_auc(&labels, &scores).unwrap();
            prop_assert!((auc - concordance(&labels, &scores)).abs() < 1e-12);
            for w in pts.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
                prop_assert!(w[1].threshold < w[0].threshold);
            }
            let last = pts.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        }

        #[test]
        fn mcnemar_is_symmetric(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 0..80)) {
            let a: Vec<bool> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let ab = mcnemar(&a, &b).unwrap();
            let ba = mcnemar(&b, &a).unwrap();
            prop_assert_eq!(ab.chi2, ba.chi2);
            prop_assert_eq!(ab.p, ba.p);
            prop_assert!(ab.p >= 0.0 && ab.p <= 1.0);
        }
    }

    fn discordant(b: usize, c: usize) -> (Vec<bool>, Vec<bool>) {
        let mut x = vec![true; b];
        let mut y = vec![false; b];
        x.extend(vec![false; c]);
        y.extend(vec![true; c]);
        x.extend([true, false]);
        y.extend([true, false]);
        (x, y)
    }

    #[test]
    fn mcnemar_examples() {
        let (a, b) = discordant(2, 12);
        let m = mcnemar(&a, &b).unwrap();
        assert_eq!((m.b, m.c), (2, 12));
        assert!((m.chi2 - 81.0 / 14.0).abs() < 1e-12);
        assert!((m.p - 0.0161).abs() < 5e-4);
        let (a, b) = discordant(0, 25);
        let m = mcnemar(&a, &b).unwrap();
        assert!((m.chi2 - 23.04).abs() < 1e-12);
        assert!(m.p < 0.001);
        let same = mcnemar(&a, &a).unwrap();
        assert_eq!((same.chi2, same.p), (0.0, 1.0));
        assert!(matches!(mcnemar(&a, &b[1..]), Err(EvalError::LengthMismatch(..))));
    }

    #[test]
    fn relative_improvements() {
        assert!((relative_improvement_pct(0.70, 0.76) - 8.571428).abs() < 1e-4);
        assert!((relative_improvement_pct(0.87, 0.91) - 4.597701).abs() < 1e-4);
    }

    #[test]
    fn kl_examples() {
        let s = [0.1, 0.4, 0.4, 0.95];
        let k = kl_divergence(&s, &s).unwrap();
        assert!(k.forward.abs() < 1e-9 && k.reverse.abs() < 1e-9 && k.symmetric.abs() < 1e-9);

        let n = 40;
        let mut p = vec![0.1; n];
        p.extend(vec![0.9; n]);
        let mut q = vec![0.1; 3 * n / 2];
        q.extend(vec![0.9; n / 2]);
        let k = kl_divergence(&p, &q).unwrap();
        let hand = 0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln();
        assert!((k.forward - hand).abs() < 1e-6);
        assert!((k.forward - 0.1438).abs() < 1e-3);
        assert!((k.symmetric - (k.forward + k.reverse) / 2.0).abs() < 1e-15);

        let far = kl_divergence(&[0.01], &[0.99]).unwrap();
        assert!(far.forward.is_finite() && far.forward > 20.0);
        assert!(matches!(kl_divergence(&[], &[0.5]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn densities_sum_to_one_and_edge_scores_land_in_range() {
        let d = score_densities(&[1, 1, 0, 0], &[0.0, 1.0, 0.5, 0.05]);
        assert_eq!(d.phone[0], 0.5);
        assert_eq!(d.phone[19], 0.5);
        assert_eq!(d.nophone[10], 0.5);
        assert_eq!(d.nophone[1], 0.5);
        assert!((d.phone.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn toy_dataset(n_per_class: usize, signal: f64) -> Vec<FusedVector> {
        let mut out = Vec::new();
        for i in 0..2 * n_per_class {
            let label = (i < n_per_class) as u8;
            for k in 0..2 {
                let noise = ((i * 7 + k * 3) % 11) as f64 / 11.0 - 0.5;
                out.push(FusedVector {
                    participant_id: format!("p{i:03}"),
                    label,
                    values: vec![label as f64 * signal + noise, noise * 0.3 + k as f64],
                    signal_set: vec![],
                });
            }
        }
        out
    }

    fn config(model: ModelSpec, reduction: ReductionSpec) -> PipelineConfig {
        PipelineConfig {
            signal_set: "toy".into(),
            smoothing: SmoothingSpec::NONE,
            reduction,
            model,
        }
    }

    #[test]
    fn constant_classifier_scores_half() {
        let data = toy_dataset(5, 1.0);
        let cfg = config(ModelSpec::rf(1, 0), ReductionSpec::None);
        let report = loo_with(&data, &cfg, |_, _, test, fold| {
            Ok(FoldOutcome {
                scores: vec![1.0; test.len()],
                fitted_on: [fold.clone(), fold.clone(), fold],
                converged: true,
            })
        })
        .unwrap();
        assert_eq!(report.records.len(), 20);
        assert_eq!(report.accuracy, 0.5);
        assert_eq!(report.auc, 0.5);
    }

    #[test]
    fn artifacts_fitted_elsewhere_are_rejected() {
        let data = toy_dataset(3, 1.0);
        let cfg = config(ModelSpec::rf(1, 0), ReductionSpec::None);
        let r = loo_with(&data, &cfg, |_, _, test, fold| {
            Ok(FoldOutcome {
                scores: vec![0.0; test.len()],
                fitted_on: [fold.clone(), FoldId::all(), fold],
                converged: true,
            })
        });
        assert!(matches!(r, Err(EvalError::Leakage { .. })));
    }

    #[test]
    fn loo_on_separable_toy_data() {
        let data = toy_dataset(6, 5.0);
        for model in [ModelSpec::rf(25, 1), ModelSpec::svm(Kernel::Linear, 1.0)] {
            for red in [ReductionSpec::None, ReductionSpec::Kbest { k: 1 }, ReductionSpec::pca()] {
                let cfg = config(model, red);
                let r = run_loo(&data, &cfg).unwrap();
                assert_eq!(r.records.len(), 24);
                assert_eq!(r.folds.len(), 12);
                assert_eq!(r.accuracy, 1.0, "{}", cfg.fingerprint());
                for f in &r.folds {
                    assert_eq!(f.train_samples, 22);
                    assert_eq!(f.model_fitted_on, FoldId::holdout(&f.test_participant));
                }
                let ids: Vec<&str> = r.records.iter().map(|x| x.participant_id.as_str()).collect();
                let mut sorted = ids.clone();
                sorted.sort();
                assert_eq!(ids, sorted);
                let again = run_loo(&data, &cfg).unwrap();
                assert_eq!(
                    serde_json::to_string(&r).unwrap(),
                    serde_json::to_string(&again).unwrap()
                );
            }
        }
    }

    #[test]
    fn unbalanced_participants_are_rejected() {
        let mut data = toy_dataset(3, 1.0);
        data.pop();
        let cfg = config(ModelSpec::rf(5, 0), ReductionSpec::None);
        assert!(matches!(
            run_loo(&data, &cfg),
            Err(EvalError::UnbalancedParticipant { count: 1, .. })
        ));
    }

    #[test]
    fn single_class_fold_is_reported() {
        let mut data = toy_dataset(2, 1.0);
        data.truncate(6);
        for v in &mut data[..4] {
            v.label = 1;
        }
        for v in &mut data[4..] {
            v.label = 0;
        }
        // Holding out the only label-0 participant leaves one class.
        let cfg = config(ModelSpec::rf(5, 0), ReductionSpec::None);
        assert!(matches!(run_loo(&data, &cfg), Err(EvalError::SingleClassFold { .. })));
    }

    #[test]
    fn comparison_of_report_with_itself() {
        let data = toy_dataset(4, 0.5);
        let r = run_loo(&data, &config(ModelSpec::rf(15, 3), ReductionSpec::None)).unwrap();
        let c = compare_reports(&r, &r).unwrap();
        assert_eq!(c.improvement_pct, 0.0);
        assert_eq!((c.mcnemar.chi2, c.mcnemar.p), (0.0, 1.0));
        let mut other = r.clone();
        other.records.swap(0, 2);
        assert!(matches!(compare_reports(&r, &other), Err(EvalError::SampleMismatch(_))));
    }

    #[test]
    fn csv_layouts() {
        let mut buf = Vec::new();
        write_roc_csv(&[RocPoint { threshold: 2.0, fpr: 0.0, tpr: 0.0 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "threshold,fpr,tpr\n2,0,0\n");
        let mut buf = Vec::new();
        let d = score_densities(&[1, 0], &[0.9, 0.1]);
        write_densities_csv(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 21);
        assert_eq!(text.lines().nth(1).unwrap(), "0,0.05,0,0");
        let mut buf = Vec::new();
        let rec = SampleRecord {
            participant_id: "p1".into(),
            label: 1,
            score: 0.75,
            correct: true,
        };
        write_predictions_csv(&[rec], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "participant_id,label,score,correct\np1,1,0.75,true\n"
        );
    }
}
