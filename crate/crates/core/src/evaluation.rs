//! Evaluation metrics and experiment suites.
//!
//! A 5×5 confusion matrix feeds per-level precision, recall, and
//! one-vs-rest accuracy, with zero-denominator cases defined as 0 and
//! flagged rather than NaN. Macro (unweighted) averages give the headline
//! numbers. On top sit the experiment drivers: a train-and-evaluate run,
//! per-perspective ablation over a shared split, the confidence-vs-epochs
//! curve, and the wall-clock training benchmark with its linear fit.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{split, Dataset, Perspective};
use crate::error::{Error, Result};
use crate::model::{
    build_network, LabeledSet, NetworkParameters, TrainConfig, Trainer, TrustLevel, TRUST_LEVELS,
};

/// 5×5 confusion counts: rows are actual levels, columns detected levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[usize; TRUST_LEVELS]; TRUST_LEVELS],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, actual: TrustLevel, detected: TrustLevel) {
        self.counts[actual.index()][detected.index()] += 1;
    }

    pub fn count(&self, actual: TrustLevel, detected: TrustLevel) -> usize {
        self.counts[actual.index()][detected.index()]
    }

    pub fn counts(&self) -> &[[usize; TRUST_LEVELS]; TRUST_LEVELS] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Samples whose actual level is `l` (row total).
    pub fn actual_total(&self, l: TrustLevel) -> usize {
        self.counts[l.index()].iter().sum()
    }

    /// Samples detected as `l` (column total).
    pub fn detected_total(&self, l: TrustLevel) -> usize {
        self.counts.iter().map(|row| row[l.index()]).sum()
    }

    /// Samples correctly detected as `l` (diagonal entry).
    pub fn correct(&self, l: TrustLevel) -> usize {
        self.counts[l.index()][l.index()]
    }

    /// All correctly detected samples (diagonal sum).
    pub fn correct_total(&self) -> usize {
        TrustLevel::ALL.iter().map(|&l| self.correct(l)).sum()
    }
}

/// A metric value plus whether its denominator was nonzero; undefined
/// values are reported as 0 rather than NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub defined: bool,
}

impl MetricValue {
    fn ratio(numerator: usize, denominator: usize) -> Self {
        if denominator == 0 {
            MetricValue {
                value: 0.0,
                defined: false,
            }
        } else {
            MetricValue {
                value: numerator as f64 / denominator as f64,
                defined: true,
            }
        }
    }
}

/// precision_l = correct_l / detected_l; 0 (flagged) when nothing was
/// detected as `l`.
pub fn precision_level(cm: &ConfusionMatrix, l: TrustLevel) -> MetricValue {
    MetricValue::ratio(cm.correct(l), cm.detected_total(l))
}

/// recall_l = correct_l / actual_l; 0 (flagged) when no sample has actual
/// level `l`.
pub fn recall_level(cm: &ConfusionMatrix, l: TrustLevel) -> MetricValue {
    MetricValue::ratio(cm.correct(l), cm.actual_total(l))
}

/// One-vs-rest accuracy for `l`: samples correctly detected as `l` plus
/// samples correctly detected as not-`l`, over all samples.
pub fn accuracy_level(cm: &ConfusionMatrix, l: TrustLevel) -> MetricValue {
    let total = cm.total();
    if total == 0 {
        return MetricValue {
            value: 0.0,
            defined: false,
        };
    }
    let tp = cm.correct(l);
    let fn_ = cm.actual_total(l) - tp;
    let fp = cm.detected_total(l) - tp;
    let tn = total - tp - fn_ - fp;
    MetricValue::ratio(tp + tn, total)
}

/// Per-level metric row of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level: TrustLevel,
    pub precision: MetricValue,
    pub recall: MetricValue,
    pub accuracy: MetricValue,
    /// Samples whose actual level this is.
    pub support: usize,
    /// Samples detected as this level.
    pub detected: usize,
}

/// Full evaluation report over one confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_level: Vec<LevelMetrics>,
    /// Unweighted mean over the five levels, undefined terms counted as 0.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_accuracy: f64,
    /// Overall fraction correct (confusion diagonal over total).
    pub micro_accuracy: f64,
    pub samples: usize,
    pub confusion: ConfusionMatrix,
    /// How the headline numbers aggregate the per-level values.
    pub averaging: String,
}

impl MetricsReport {
    /// Pure function of the confusion matrix; recomputation is
    /// bit-identical.
    pub fn from_confusion(cm: ConfusionMatrix) -> Self {
        let per_level: Vec<LevelMetrics> = TrustLevel::ALL
            .iter()
            .map(|&level| LevelMetrics {
                level,
                precision: precision_level(&cm, level),
                recall: recall_level(&cm, level),
                accuracy: accuracy_level(&cm, level),
                support: cm.actual_total(level),
                detected: cm.detected_total(level),
            })
            .collect();
        let n = TRUST_LEVELS as f64;
        let macro_precision = per_level.iter().map(|m| m.precision.value).sum::<f64>() / n;
        let macro_recall = per_level.iter().map(|m| m.recall.value).sum::<f64>() / n;
        let macro_accuracy = per_level.iter().map(|m| m.accuracy.value).sum::<f64>() / n;
        let total = cm.total();
        let micro_accuracy = if total == 0 {
            0.0
        } else {
            cm.correct_total() as f64 / total as f64
        };
        MetricsReport {
            per_level,
            macro_precision,
            macro_recall,
            macro_accuracy,
            micro_accuracy,
            samples: total,
            confusion: cm,
            averaging: "macro: unweighted mean over 5 levels; undefined terms counted as 0"
                .to_string(),
        }
    }

    /// Writes the per-level rows as CSV (the JSON form carries the full
    /// report including the matrix).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        writer.write_record([
            "level",
            "precision",
            "precision_defined",
            "recall",
            "recall_defined",
            "accuracy",
            "support",
            "detected",
        ])?;
        for m in &self.per_level {
            writer.write_record([
                m.level.to_string(),
                m.precision.value.to_string(),
                m.precision.defined.to_string(),
                m.recall.value.to_string(),
                m.recall.defined.to_string(),
                m.accuracy.value.to_string(),
                m.support.to_string(),
                m.detected.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Assesses every sample of a labeled set and tallies the confusion
/// matrix.
pub fn confusion(net: &NetworkParameters<f64>, set: &LabeledSet<f64>) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new();
    for (x, &y) in set.inputs().iter().zip(set.labels()) {
        let assessment = net.assess(x)?;
        cm.observe(TrustLevel::from_index(y)?, assessment.level);
    }
    Ok(cm)
}

/// Evaluates a model over a labeled set into a full metrics report.
pub fn evaluate_model(
    net: &NetworkParameters<f64>,
    set: &LabeledSet<f64>,
) -> Result<MetricsReport> {
    Ok(MetricsReport::from_confusion(confusion(net, set)?))
}

/// Configuration shared by the experiment drivers: network shape,
/// training hyperparameters, and the train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Hidden layer widths (the input and 5-neuron output are implied).
    pub hidden_layers: Vec<usize>,
    pub train: TrainConfig,
    pub split_fraction: f64,
    pub split_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            hidden_layers: vec![32, 32],
            train: TrainConfig::default(),
            split_fraction: 0.7,
            split_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(Error::domain(
                "hidden_layers must be non-empty with positive widths".to_string(),
            ));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::domain(format!(
                "split_fraction must lie in (0,1); got {}",
                self.split_fraction
            )));
        }
        self.train.validate()
    }

    fn layer_sizes(&self, input: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(TRUST_LEVELS);
        sizes
    }
}

/// Outcome of a full train-and-evaluate run.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub network: NetworkParameters<f64>,
    pub loss_history: Vec<f64>,
    pub epochs_run: usize,
    pub final_cost: f64,
    pub train_metrics: MetricsReport,
    pub test_metrics: MetricsReport,
    pub train_size: usize,
    pub test_size: usize,
}

/// Splits the dataset, trains a fresh network on the train partition, and
/// evaluates both partitions.
pub fn run_experiment(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (train_ds, test_ds) = split(dataset, cfg.split_fraction, cfg.split_seed)?;
    let train_set = train_ds.to_labeled()?;
    let test_set = test_ds.to_labeled()?;

    let net = build_network(&cfg.layer_sizes(train_set.arity()), cfg.train.seed)?;
    let outcome = crate::model::train(net, &train_set, &cfg.train)?;
    let train_metrics = evaluate_model(&outcome.network, &train_set)?;
    let test_metrics = evaluate_model(&outcome.network, &test_set)?;
    Ok(ExperimentResult {
        network: outcome.network,
        loss_history: outcome.loss_history,
        epochs_run: outcome.epochs_run,
        final_cost: outcome.final_cost,
        train_metrics,
        test_metrics,
        train_size: train_set.len(),
        test_size: test_set.len(),
    })
}

/// One ablation run: which columns were kept and how the model scored.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRun {
    /// "full" or the perspective name.
    pub label: String,
    pub perspective: Option<Perspective>,
    pub feature_indices: Vec<usize>,
    pub metrics: MetricsReport,
}

/// Full-model and per-perspective results over one shared split.
#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
    pub train_size: usize,
    pub test_size: usize,
}

impl AblationReport {
    pub fn run(&self, label: &str) -> Option<&AblationRun> {
        self.runs.iter().find(|r| r.label == label)
    }
}

/// Retrains the model per perspective, keeping only that perspective's
/// feature columns, over the same split as the full model. Perspectives
/// with no attributes in the dataset are skipped with a warning.
pub fn ablate_by_perspective(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<AblationReport> {
    cfg.validate()?;
    let (train_ds, test_ds) = split(dataset, cfg.split_fraction, cfg.split_seed)?;

    let mut selections: Vec<(String, Option<Perspective>, Vec<usize>)> = Vec::new();
    selections.push((
        "full".to_string(),
        None,
        (0..dataset.feature_names().len()).collect(),
    ));
    for perspective in Perspective::ALL {
        let indices: Vec<usize> = dataset
            .feature_names()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.perspective == perspective)
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            log::warn!("ablation: no {perspective} attributes in the dataset; skipping");
            continue;
        }
        selections.push((perspective.to_string(), Some(perspective), indices));
    }

    let mut runs = Vec::new();
    let mut train_size = 0;
    let mut test_size = 0;
    for (label, perspective, indices) in selections {
        let train_set = train_ds.project(&indices)?.to_labeled()?;
        let test_set = test_ds.project(&indices)?.to_labeled()?;
        train_size = train_set.len();
        test_size = test_set.len();
        let net = build_network(&cfg.layer_sizes(indices.len()), cfg.train.seed)?;
        let outcome = crate::model::train(net, &train_set, &cfg.train)?;
        let metrics = evaluate_model(&outcome.network, &test_set)?;
        runs.push(AblationRun {
            label,
            perspective,
            feature_indices: indices,
            metrics,
        });
    }
    Ok(AblationReport {
        runs,
        train_size,
        test_size,
    })
}

fn validate_checkpoints(checkpoints: &[usize], min_points: usize) -> Result<()> {
    if checkpoints.len() < min_points {
        return Err(Error::contract(format!(
            "need at least {min_points} epoch checkpoints, got {}",
            checkpoints.len()
        )));
    }
    if checkpoints[0] == 0 {
        return Err(Error::contract("epoch checkpoints must be ≥ 1".to_string()));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::contract(
            "epoch checkpoints must be strictly increasing".to_string(),
        ));
    }
    Ok(())
}

/// One point of the confidence curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidencePoint {
    pub epochs: usize,
    /// Mean softmax confidence of the selected level over the test set.
    pub mean_confidence: f64,
    pub test_accuracy: f64,
}

/// Trains one network incrementally and snapshots the mean assessment
/// confidence over the test partition at each checkpoint. The cost
/// threshold is ignored here: the curve always extends to the last
/// checkpoint.
pub fn confidence_curve(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    checkpoints: &[usize],
) -> Result<Vec<ConfidencePoint>> {
    cfg.validate()?;
    validate_checkpoints(checkpoints, 1)?;

    let (train_ds, test_ds) = split(dataset, cfg.split_fraction, cfg.split_seed)?;
    let train_set = train_ds.to_labeled()?;
    let test_set = test_ds.to_labeled()?;

    let net = build_network(&cfg.layer_sizes(train_set.arity()), cfg.train.seed)?;
    let mut trainer = Trainer::new(net, cfg.train.clone())?;
    let mut points = Vec::with_capacity(checkpoints.len());
    for &checkpoint in checkpoints {
        while trainer.epochs_run() < checkpoint {
            trainer.run_epoch(&train_set)?;
        }
        let mut confidence_sum = 0.0;
        let mut correct = 0usize;
        for (x, &y) in test_set.inputs().iter().zip(test_set.labels()) {
            let assessment = trainer.network().assess(x)?;
            confidence_sum += assessment.confidence;
            if assessment.level.index() == y {
                correct += 1;
            }
        }
        points.push(ConfidencePoint {
            epochs: checkpoint,
            mean_confidence: confidence_sum / test_set.len() as f64,
            test_accuracy: correct as f64 / test_set.len() as f64,
        });
    }
    Ok(points)
}

/// Writes a confidence curve as CSV ready for external plotting.
pub fn write_confidence_csv(points: &[ConfidencePoint], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["epochs", "mean_confidence", "test_accuracy"])?;
    for p in points {
        writer.write_record([
            p.epochs.to_string(),
            p.mean_confidence.to_string(),
            p.test_accuracy.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// One wall-clock measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingPoint {
    pub epochs: usize,
    pub seconds: f64,
}

/// Timing measurements plus their least-squares line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub points: Vec<TimingPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Trains a fresh network for each epoch count (cost threshold disabled so
/// exactly that many epochs run) and fits seconds against epochs. Runs
/// serially; wall-clock numbers are machine-dependent, only the linearity
/// is meaningful.
pub fn timing_benchmark(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    checkpoints: &[usize],
) -> Result<TimingReport> {
    cfg.validate()?;
    validate_checkpoints(checkpoints, 3)?;

    let (train_ds, _) = split(dataset, cfg.split_fraction, cfg.split_seed)?;
    let train_set = train_ds.to_labeled()?;

    let mut points = Vec::with_capacity(checkpoints.len());
    for &epochs in checkpoints {
        let train_cfg = TrainConfig {
            tau: 0.0,
            max_epochs: epochs,
            ..cfg.train.clone()
        };
        let net = build_network(&cfg.layer_sizes(train_set.arity()), cfg.train.seed)?;
        let start = Instant::now();
        let outcome = crate::model::train(net, &train_set, &train_cfg)?;
        let seconds = start.elapsed().as_secs_f64();
        debug_assert_eq!(outcome.epochs_run, epochs);
        points.push(TimingPoint { epochs, seconds });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.epochs as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(TimingReport {
        points,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
    })
}

/// Writes timing points as CSV ready for external plotting.
pub fn write_timing_csv(report: &TimingReport, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["epochs", "seconds"])?;
    for p in &report.points {
        writer.write_record([p.epochs.to_string(), p.seconds.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// A least-squares line and its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of y on x. Needs ≥ 2 points and non-constant x;
/// a perfectly flat, perfectly fit y gives R² = 1.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::contract(format!(
            "{} x values vs {} y values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::domain(
            "linear fit needs at least 2 points".to_string(),
        ));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain(
            "linear fit needs non-constant x values".to_string(),
        ));
    }
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;

    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Average ranks (1-based), ties sharing the mean of their rank range.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j share the average rank.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (average ranks for ties). Errors on length
/// mismatch, fewer than 2 points, or a constant sequence.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::contract(format!(
            "{} x values vs {} y values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::domain(
            "rank correlation needs at least 2 points".to_string(),
        ));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mean) * (b - mean);
        var_x += (a - mean).powi(2);
        var_y += (b - mean).powi(2);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::domain(
            "rank correlation is undefined for a constant sequence".to_string(),
        ));
    }
    Ok(cov / (var_x * var_y).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureName, Provenance, Sample};
    use crate::model::ModelMetadata;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// The worked matrix used throughout: rows are actual, columns
    /// detected; only levels 0..3 occur.
    fn worked_matrix() -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::new();
        let fills = [
            (0, 0, 3),
            (0, 1, 1),
            (1, 0, 1),
            (1, 1, 2),
            (1, 2, 1),
            (2, 2, 4),
        ];
        for (a, d, n) in fills {
            for _ in 0..n {
                cm.observe(
                    TrustLevel::from_index(a).unwrap(),
                    TrustLevel::from_index(d).unwrap(),
                );
            }
        }
        cm
    }

    #[test]
    fn level_metrics_match_hand_computation() {
        let cm = worked_matrix();
        assert_eq!(cm.total(), 12);
        assert_eq!(cm.correct_total(), 9);

        let l0 = TrustLevel::NotTrusted;
        assert_abs_diff_eq!(precision_level(&cm, l0).value, 3.0 / 4.0);
        assert_abs_diff_eq!(recall_level(&cm, l0).value, 3.0 / 4.0);
        // TP 3, FN 1, FP 1, TN 7.
        assert_abs_diff_eq!(accuracy_level(&cm, l0).value, 10.0 / 12.0);

        let l1 = TrustLevel::LowlyTrusted;
        assert_abs_diff_eq!(precision_level(&cm, l1).value, 2.0 / 3.0);
        assert_abs_diff_eq!(recall_level(&cm, l1).value, 2.0 / 4.0);

        let l2 = TrustLevel::Neutral;
        assert_abs_diff_eq!(precision_level(&cm, l2).value, 4.0 / 5.0);
        assert_abs_diff_eq!(recall_level(&cm, l2).value, 1.0);

        // Level 3 was never detected nor actual: flagged zeros, and its
        // one-vs-rest accuracy is perfect.
        let l3 = TrustLevel::Trusted;
        let p = precision_level(&cm, l3);
        assert_eq!((p.value, p.defined), (0.0, false));
        let r = recall_level(&cm, l3);
        assert_eq!((r.value, r.defined), (0.0, false));
        assert_abs_diff_eq!(accuracy_level(&cm, l3).value, 1.0);
    }

    #[test]
    fn trivial_metric_examples_hold() {
        // precision 8/10, recall 8/16, accuracy (8+70)/100.
        let mut cm = ConfusionMatrix::new();
        let l = TrustLevel::Neutral;
        let other = TrustLevel::Trusted;
        for _ in 0..8 {
            cm.observe(l, l);
        }
        for _ in 0..2 {
            cm.observe(other, l); // false positives → detected 10
        }
        for _ in 0..8 {
            cm.observe(l, other); // false negatives → actual 16
        }
        for _ in 0..70 {
            cm.observe(other, other);
        }
        for _ in 0..12 {
            cm.observe(TrustLevel::NotTrusted, TrustLevel::HighlyTrusted);
        }
        assert_eq!(cm.total(), 100);
        assert_abs_diff_eq!(precision_level(&cm, l).value, 0.8);
        assert_abs_diff_eq!(recall_level(&cm, l).value, 0.5);
        // correct_l = 8; correct_not_l = samples detected correctly as
        // not-l plus those misdetected among non-l levels: TN = 100-8-8-2.
        assert_abs_diff_eq!(accuracy_level(&cm, l).value, (8.0 + 82.0) / 100.0);
    }

    #[test]
    fn report_is_a_pure_function_of_the_matrix() {
        let cm = worked_matrix();
        let a = MetricsReport::from_confusion(cm);
        let b = MetricsReport::from_confusion(cm);
        assert_eq!(a, b);
        assert_abs_diff_eq!(a.micro_accuracy, 9.0 / 12.0);
        let expected_macro = (0.75 + 2.0 / 3.0 + 0.8) / 5.0;
        assert_abs_diff_eq!(a.macro_precision, expected_macro, epsilon = 1e-12);
        assert_eq!(a.samples, 12);
    }

    #[test]
    fn report_csv_has_five_level_rows() {
        let report = MetricsReport::from_confusion(worked_matrix());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        report.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("level,precision"));
        assert!(lines[1].starts_with("NotTrusted,0.75"));
    }

    fn constant_net(level: usize) -> NetworkParameters<f64> {
        let mut net = NetworkParameters::from_parts(
            vec![2, 2, TRUST_LEVELS],
            vec![
                crate::model::Matrix::zeros(2, 2),
                crate::model::Matrix::zeros(2, TRUST_LEVELS),
            ],
            vec![vec![0.0; 2], vec![0.0; TRUST_LEVELS]],
            ModelMetadata::default(),
        )
        .unwrap();
        net.set_bias(1, level, 5.0);
        net
    }

    #[test]
    fn confusion_of_a_constant_model_is_a_single_column() {
        let net = constant_net(2);
        let inputs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0, 0.5]).collect();
        let labels: Vec<usize> = (0..10).map(|i| i % 5).collect();
        let set = LabeledSet::new(inputs, labels).unwrap();
        let cm = confusion(&net, &set).unwrap();
        assert_eq!(cm.total(), 10);
        assert_eq!(cm.detected_total(TrustLevel::Neutral), 10);
        for l in TrustLevel::ALL {
            if l != TrustLevel::Neutral {
                assert_eq!(cm.detected_total(l), 0);
            }
        }
        let report = evaluate_model(&net, &set).unwrap();
        assert_abs_diff_eq!(report.micro_accuracy, 0.2);
    }

    /// A dataset whose label is a separable function of one feature.
    fn separable_dataset(n: usize, informative: usize, arity: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let names: Vec<FeatureName> = (0..arity)
            .map(|i| {
                let perspective = match i {
                    0 => Perspective::Owner,
                    1 => Perspective::Device,
                    _ => Perspective::Service,
                };
                FeatureName::new(perspective, format!("f{i}"))
            })
            .collect();
        let samples = (0..n)
            .map(|_| {
                let features: Vec<f64> = (0..arity).map(|_| rng.random_range(0.0..1.0)).collect();
                let level = ((features[informative] * 5.0) as usize).min(4);
                Sample {
                    features,
                    level: TrustLevel::from_index(level).unwrap(),
                    provenance: Provenance::Original,
                }
            })
            .collect();
        Dataset::new(names, samples).unwrap()
    }

    fn fast_config(epochs: usize) -> ExperimentConfig {
        ExperimentConfig {
            hidden_layers: vec![16],
            train: TrainConfig {
                tau: 0.0,
                max_epochs: epochs,
                dropout_p: 0.0,
                learning_rate: 3e-3,
                seed: 5,
                ..TrainConfig::default()
            },
            split_fraction: 0.7,
            split_seed: 5,
        }
    }

    #[test]
    fn run_experiment_learns_separable_data() {
        let ds = separable_dataset(400, 0, 3, 1);
        let result = run_experiment(&ds, &fast_config(150)).unwrap();
        assert_eq!(result.train_size, 280);
        assert_eq!(result.test_size, 120);
        assert_eq!(result.epochs_run, 150);
        assert!(
            result.test_metrics.micro_accuracy >= 0.8,
            "test accuracy {}",
            result.test_metrics.micro_accuracy
        );
        assert!(result.train_metrics.micro_accuracy >= result.test_metrics.micro_accuracy - 0.1);

        let again = run_experiment(&ds, &fast_config(150)).unwrap();
        assert_eq!(result.test_metrics, again.test_metrics, "deterministic");
    }

    #[test]
    fn ablation_separates_informative_perspectives() {
        // Label depends only on the owner feature; the device and service
        // columns are pure noise.
        let ds = separable_dataset(400, 0, 3, 2);
        let report = ablate_by_perspective(&ds, &fast_config(120)).unwrap();
        let labels: Vec<&str> = report.runs.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, vec!["full", "owner", "device", "service"]);

        let owner = report.run("owner").unwrap().metrics.micro_accuracy;
        let device = report.run("device").unwrap().metrics.micro_accuracy;
        let full = report.run("full").unwrap().metrics.micro_accuracy;
        assert!(
            owner > device + 0.2,
            "owner-only {owner} should beat noise-only {device}"
        );
        assert!(owner >= 0.8, "owner-only accuracy {owner}");
        assert!(full >= 0.7, "full accuracy {full}");
        assert_eq!(report.run("owner").unwrap().feature_indices, vec![0]);
        assert_eq!(report.test_size, 120);
    }

    #[test]
    fn ablation_skips_absent_perspectives() {
        let ds = separable_dataset(200, 0, 2, 3); // owner + device only
        let report = ablate_by_perspective(&ds, &fast_config(30)).unwrap();
        let labels: Vec<&str> = report.runs.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, vec!["full", "owner", "device"]);
    }

    #[test]
    fn confidence_curve_rises_on_separable_data() {
        let ds = separable_dataset(300, 0, 3, 4);
        let checkpoints = [1, 5, 20, 60];
        let points = confidence_curve(&ds, &fast_config(60), &checkpoints).unwrap();
        assert_eq!(points.len(), checkpoints.len());
        for (p, &c) in points.iter().zip(&checkpoints) {
            assert_eq!(p.epochs, c);
            assert!(p.mean_confidence > 0.15 && p.mean_confidence <= 1.0);
        }
        let xs: Vec<f64> = points.iter().map(|p| p.epochs as f64).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.mean_confidence).collect();
        assert!(
            spearman(&xs, &ys).unwrap() > 0.0,
            "confidence should rise with epochs: {ys:?}"
        );

        assert!(confidence_curve(&ds, &fast_config(10), &[]).is_err());
        assert!(confidence_curve(&ds, &fast_config(10), &[5, 5]).is_err());
        assert!(confidence_curve(&ds, &fast_config(10), &[0, 5]).is_err());
    }

    #[test]
    fn timing_benchmark_reports_a_fit() {
        let ds = separable_dataset(120, 0, 3, 6);
        let report = timing_benchmark(&ds, &fast_config(10), &[1, 2, 4]).unwrap();
        assert_eq!(report.points.len(), 3);
        assert!(report.points.iter().all(|p| p.seconds > 0.0));
        assert!(report.slope.is_finite());
        assert!((0.0..=1.0 + 1e-12).contains(&report.r_squared));

        assert!(
            timing_benchmark(&ds, &fast_config(10), &[1, 2]).is_err(),
            "needs ≥ 3 points"
        );
    }

    #[test]
    fn curve_csvs_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let cpath = dir.path().join("confidence.csv");
        write_confidence_csv(
            &[ConfidencePoint {
                epochs: 10,
                mean_confidence: 0.5,
                test_accuracy: 0.4,
            }],
            &cpath,
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(&cpath).unwrap(),
            "epochs,mean_confidence,test_accuracy\n10,0.5,0.4\n"
        );

        let tpath = dir.path().join("timing.csv");
        write_timing_csv(
            &TimingReport {
                points: vec![TimingPoint {
                    epochs: 10,
                    seconds: 1.25,
                }],
                slope: 0.1,
                intercept: 0.0,
                r_squared: 1.0,
            },
            &tpath,
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(&tpath).unwrap(),
            "epochs,seconds\n10,1.25\n"
        );
    }

    #[test]
    fn linear_fit_recovers_exact_lines() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert_abs_diff_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);

        let noisy = [3.1, 4.9, 7.2, 8.8];
        let fit = linear_fit(&xs, &noisy).unwrap();
        assert!(fit.r_squared < 1.0 && fit.r_squared > 0.9);

        assert!(linear_fit(&[1.0], &[1.0]).is_err());
        assert!(linear_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(linear_fit(&xs, &ys[..3]).is_err());
    }

    #[test]
    fn spearman_handles_monotone_and_tied_data() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(spearman(&xs, &[2.0, 4.0, 9.0, 100.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(spearman(&xs, &[10.0, 8.0, 3.0, 1.0]).unwrap(), -1.0);
        // Ties: ranks (1.5, 1.5, 3, 4) against (1, 2, 3, 4) → 3/√10.
        assert_abs_diff_eq!(
            spearman(&xs, &[10.0, 10.0, 20.0, 30.0]).unwrap(),
            3.0 / 10.0_f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(spearman(&xs, &[5.0, 5.0, 5.0, 5.0]).is_err(), "constant");
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    proptest! {
        /// Micro accuracy always equals diagonal over total.
        #[test]
        fn micro_accuracy_is_the_diagonal_fraction(
            cells in proptest::collection::vec(0usize..20, 25),
        ) {
            let mut cm = ConfusionMatrix::new();
            for (i, &n) in cells.iter().enumerate() {
                let (a, d) = (i / 5, i % 5);
                for _ in 0..n {
                    cm.observe(
                        TrustLevel::from_index(a).unwrap(),
                        TrustLevel::from_index(d).unwrap(),
                    );
                }
            }
            prop_assume!(cm.total() > 0);
            let report = MetricsReport::from_confusion(cm);
            let diag: usize = (0..5)
                .map(|i| cm.count(TrustLevel::from_index(i).unwrap(), TrustLevel::from_index(i).unwrap()))
                .sum();
            prop_assert!((report.micro_accuracy - diag as f64 / cm.total() as f64).abs() < 1e-12);
            for m in &report.per_level {
                for v in [m.precision.value, m.recall.value, m.accuracy.value] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        /// One-vs-rest accuracy for level l is unchanged when the other
        /// classes are permuted among themselves.
        #[test]
        fn accuracy_level_ignores_non_l_permutations(
            cells in proptest::collection::vec(0usize..20, 25),
            l in 0usize..5,
            swap in proptest::sample::subsequence(vec![0usize, 1, 2, 3, 4], 2),
        ) {
            prop_assume!(!swap.contains(&l));
            let counts = |cells: &[usize]| {
                let mut cm = ConfusionMatrix::new();
                for (i, &n) in cells.iter().enumerate() {
                    let (a, d) = (i / 5, i % 5);
                    for _ in 0..n {
                        cm.observe(
                            TrustLevel::from_index(a).unwrap(),
                            TrustLevel::from_index(d).unwrap(),
                        );
                    }
                }
                cm
            };
            let cm = counts(&cells);
            prop_assume!(cm.total() > 0);

            // Swap the two non-l classes in both rows and columns.
            let (p, q) = (swap[0], swap[1]);
            let mut permuted = cells.clone();
            let map = |i: usize| if i == p { q } else if i == q { p } else { i };
            for a in 0..5 {
                for d in 0..5 {
                    permuted[map(a) * 5 + map(d)] = cells[a * 5 + d];
                }
            }
            let cm2 = counts(&permuted);
            let level = TrustLevel::from_index(l).unwrap();
            prop_assert_eq!(accuracy_level(&cm, level), accuracy_level(&cm2, level));
        }
    }
}
