//! Day-wise cross validation and feature-subset ablation.
//!
//! Two fold plans are supported. `Standard` is leave-one-day-out: each fold
//! trains on every other day and tests on one. `Paper` is the literal
//! reverse: each fold trains on a single day and tests on all the others.
//! Accuracy is per slot sample, reported as a percentage, and the mean is
//! the unweighted mean over folds.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::{Dataset, Feature, FeatureSet, Occupancy, SlotSample};
use crate::id3::{fit_samples, Id3Error, LearnerConfig};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("fold error: {0}")]
    Fold(String),
    #[error("train/test leakage in fold {fold}: {reason}")]
    Leakage { fold: usize, reason: String },
    #[error(transparent)]
    Id3(#[from] Id3Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CvMode {
    /// Train on all days but one, test on the held-out day.
    #[default]
    Standard,
    /// Train on one day, test on all the others.
    Paper,
}

impl CvMode {
    pub fn describe(self) -> &'static str {
        match self {
            CvMode::Standard => "standard (train on n-1 days, test on 1)",
            CvMode::Paper => "paper (train on 1 day, test on n-1)",
        }
    }
}

impl FromStr for CvMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "std" | "standard" => Ok(CvMode::Standard),
            "paper" => Ok(CvMode::Paper),
            _ => Err(format!("unknown cv mode `{s}` (expected std or paper)")),
        }
    }
}

impl fmt::Display for CvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CvMode::Standard => "std",
            CvMode::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train_days: BTreeSet<u32>,
    pub test_days: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub mode: CvMode,
    pub folds: Vec<Fold>,
}

/// Plan over days `0..days`.
pub fn make_folds(days: u32, mode: CvMode) -> Result<FoldPlan> {
    FoldPlan::for_days(&(0..days).collect::<Vec<_>>(), mode)
}

impl FoldPlan {
    /// Plan over an arbitrary set of day indices (one fold per day).
    pub fn for_days(days: &[u32], mode: CvMode) -> Result<Self> {
        let all: BTreeSet<u32> = days.iter().copied().collect();
        if all.len() < 2 {
            return Err(EvalError::Fold(format!(
                "need at least 2 days for cross validation, got {}",
                all.len()
            )));
        }
        let folds = all
            .iter()
            .map(|&d| {
                let one = BTreeSet::from([d]);
                let rest: BTreeSet<u32> = all.iter().copied().filter(|&x| x != d).collect();
                match mode {
                    CvMode::Standard => Fold {
                        train_days: rest,
                        test_days: one,
                    },
                    CvMode::Paper => Fold {
                        train_days: one,
                        test_days: rest,
                    },
                }
            })
            .collect();
        Ok(Self { mode, folds })
    }

    pub fn days(&self) -> BTreeSet<u32> {
        self.folds
            .iter()
            .flat_map(|f| f.train_days.iter().chain(&f.test_days).copied())
            .collect()
    }

    /// Structural checks: train and test are disjoint in every fold, and in
    /// standard mode the test sets partition the days.
    pub fn check(&self) -> Result<()> {
        for (i, f) in self.folds.iter().enumerate() {
            if let Some(d) = f.train_days.intersection(&f.test_days).next() {
                return Err(EvalError::Leakage {
                    fold: i,
                    reason: format!("day {d} is in both train and test"),
                });
            }
        }
        if self.mode == CvMode::Standard {
            let mut seen = BTreeSet::new();
            for f in &self.folds {
                for d in &f.test_days {
                    if !seen.insert(*d) {
                        return Err(EvalError::Fold(format!("day {d} tested twice")));
                    }
                }
            }
            if seen != self.days() {
                return Err(EvalError::Fold("test sets do not cover every day".into()));
            }
        }
        Ok(())
    }
}

/// Binary confusion counts; "positive" is occupied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl ConfusionMatrix {
    pub fn record(&mut self, actual: Occupancy, predicted: Occupancy) {
        match (actual, predicted) {
            (Occupancy::Occupied, Occupancy::Occupied) => self.true_pos += 1,
            (Occupancy::Unoccupied, Occupancy::Unoccupied) => self.true_neg += 1,
            (Occupancy::Unoccupied, Occupancy::Occupied) => self.false_pos += 1,
            (Occupancy::Occupied, Occupancy::Unoccupied) => self.false_neg += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    /// Fraction correct in [0, 1]; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.true_pos + self.true_neg) as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub train_days: BTreeSet<u32>,
    pub test_days: BTreeSet<u32>,
    pub confusion: ConfusionMatrix,
    /// Percentage.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub features: FeatureSet,
    /// Whether this subset appears in the published ablation table.
    pub published: bool,
    pub mean_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: CvMode,
    pub features: FeatureSet,
    pub k_min_points: usize,
    pub max_depth: Option<usize>,
    /// Seed of the generator that produced the data, when there was one.
    pub seed: Option<u64>,
    pub folds: Vec<FoldResult>,
    /// Percentage, unweighted mean over folds.
    pub mean_accuracy: f64,
    pub ablation: Vec<AblationRow>,
}

fn select(samples: &[SlotSample], days: &BTreeSet<u32>) -> Vec<SlotSample> {
    samples
        .iter()
        .filter(|s| days.contains(&s.day_index))
        .cloned()
        .collect::<Vec<_>>()
}

fn run_fold(
    i: usize,
    fold: &Fold,
    samples: &[SlotSample],
    config: &LearnerConfig,
) -> Result<FoldResult> {
    let train = select(samples, &fold.train_days);
    let test = select(samples, &fold.test_days);
    if train.is_empty() {
        return Err(EvalError::Fold(format!(
            "fold {i} has an empty training partition"
        )));
    }
    if test.is_empty() {
        return Err(EvalError::Fold(format!(
            "fold {i} has an empty test partition"
        )));
    }
    if let Some(s) = train.iter().find(|s| fold.test_days.contains(&s.day_index)) {
        return Err(EvalError::Leakage {
            fold: i,
            reason: format!("training sample {} belongs to a test day", s.slot_id()),
        });
    }
    let tree = fit_samples(&train, config)?;
    let mut confusion = ConfusionMatrix::default();
    for s in &test {
        let actual = s.label.ok_or(Id3Error::UnlabeledSample(s.slot_id()))?;
        confusion.record(actual, tree.predict_sample(s)?);
    }
    debug_assert_eq!(confusion.total(), test.len());
    Ok(FoldResult {
        fold: i,
        train_days: fold.train_days.clone(),
        test_days: fold.test_days.clone(),
        confusion,
        accuracy: 100.0 * confusion.accuracy(),
    })
}

/// Fits and scores one tree per fold.
pub fn cross_validate(
    dataset: &Dataset,
    config: &LearnerConfig,
    plan: &FoldPlan,
) -> Result<EvalReport> {
    config.validate()?;
    plan.check()?;
    if plan.folds.is_empty() {
        return Err(EvalError::Fold("plan has no folds".into()));
    }
    let have: BTreeSet<u32> = dataset.days().into_iter().collect();
    if let Some(d) = plan.days().iter().find(|d| !have.contains(d)) {
        return Err(EvalError::Fold(format!("day {d} has no samples")));
    }
    let folds = plan
        .folds
        .iter()
        .enumerate()
        .map(|(i, f)| run_fold(i, f, dataset.samples(), config))
        .collect::<Result<Vec<_>>>()?;
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
    Ok(EvalReport {
        mode: plan.mode,
        features: config.features,
        k_min_points: config.k_min_points,
        max_depth: config.max_depth,
        seed: None,
        folds,
        mean_accuracy,
        ablation: Vec::new(),
    })
}

/// Subsets in the published table's row order, followed by CO2 alone,
/// which the table leaves out.
pub fn ablation_subsets() -> [(FeatureSet, bool); 7] {
    use Feature::{Co2, ReverberationTime as Rt, Temperature as Temp};
    let set = |fs: &[Feature]| fs.iter().copied().collect::<FeatureSet>();
    [
        (set(&[Co2, Rt]), true),
        (set(&[Co2, Temp]), true),
        (set(&[Co2, Temp, Rt]), true),
        (set(&[Temp, Rt]), true),
        (set(&[Rt]), true),
        (set(&[Temp]), true),
        (set(&[Co2]), false),
    ]
}

/// Cross-validates once per non-empty feature subset.
pub fn ablation(
    dataset: &Dataset,
    config: &LearnerConfig,
    plan: &FoldPlan,
) -> Result<Vec<AblationRow>> {
    ablation_subsets()
        .into_iter()
        .map(|(features, published)| {
            let cfg = LearnerConfig {
                features,
                ..config.clone()
            };
            let r = cross_validate(dataset, &cfg, plan)?;
            Ok(AblationRow {
                features,
                published,
                mean_accuracy: r.mean_accuracy,
                fold_accuracies: r.folds.iter().map(|f| f.accuracy).collect(),
            })
        })
        .collect()
}

fn fmt_days(days: &BTreeSet<u32>) -> String {
    days.iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

fn inclusion(fs: FeatureSet, f: Feature) -> &'static str {
    if fs.contains(f) {
        "Included"
    } else {
        "Not Included"
    }
}

/// Human-readable per-fold table.
pub fn render_folds(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "cv mode: {}", report.mode.describe());
    let _ = writeln!(
        s,
        "features: {}  k_min_points: {}  max_depth: {}  seed: {}",
        report.features,
        report.k_min_points,
        report
            .max_depth
            .map_or("unlimited".to_string(), |d| d.to_string()),
        report.seed.map_or("n/a".to_string(), |d| d.to_string()),
    );
    let _ = writeln!(
        s,
        "{:>4}  {:<20} {:<20} {:>4} {:>4} {:>4} {:>4} {:>9}",
        "fold", "train days", "test days", "tp", "tn", "fp", "fn", "accuracy"
    );
    for f in &report.folds {
        let c = f.confusion;
        let _ = writeln!(
            s,
            "{:>4}  {:<20} {:<20} {:>4} {:>4} {:>4} {:>4} {:>9.3}",
            f.fold,
            fmt_days(&f.train_days),
            fmt_days(&f.test_days),
            c.true_pos,
            c.true_neg,
            c.false_pos,
            c.false_neg,
            f.accuracy
        );
    }
    let _ = writeln!(s, "mean accuracy: {:.3}", report.mean_accuracy);
    s
}

/// Human-readable ablation table (CO2 | Temperature | Reverberation time | Accuracy).
pub fn render_ablation(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:<14} {:<20} {:>9}",
        "CO2", "Temperature", "Reverberation time", "Accuracy"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<14} {:<14} {:<20} {:>9.3}{}",
            inclusion(r.features, Feature::Co2),
            inclusion(r.features, Feature::Temperature),
            inclusion(r.features, Feature::ReverberationTime),
            r.mean_accuracy,
            if r.published { "" } else { "  *" }
        );
    }
    if rows.iter().any(|r| !r.published) {
        let _ = writeln!(s, "* subset not present in the published table");
    }
    s
}

/// `co2,temperature,reverberation,accuracy_mean,accuracy_fold_0,...`
pub fn write_ablation_csv(mut out: impl Write, rows: &[AblationRow]) -> io::Result<()> {
    let n_folds = rows
        .iter()
        .map(|r| r.fold_accuracies.len())
        .max()
        .unwrap_or(0);
    let mut header = String::from("co2,temperature,reverberation,accuracy_mean");
    for i in 0..n_folds {
        let _ = write!(header, ",accuracy_fold_{i}");
    }
    writeln!(out, "{header}")?;
    for r in rows {
        let flag = |f| u8::from(r.features.contains(f));
        write!(
            out,
            "{},{},{},{:.3}",
            flag(Feature::Co2),
            flag(Feature::Temperature),
            flag(Feature::ReverberationTime),
            r.mean_accuracy
        )?;
        for a in &r.fold_accuracies {
            write!(out, ",{a:.3}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// `fold,train_days,test_days,tp,tn,fp,fn,accuracy`
pub fn write_folds_csv(mut out: impl Write, report: &EvalReport) -> io::Result<()> {
    writeln!(out, "fold,train_days,test_days,tp,tn,fp,fn,accuracy")?;
    for f in &report.folds {
        let c = f.confusion;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.3}",
            f.fold,
            fmt_days(&f.train_days),
            fmt_days(&f.test_days),
            c.true_pos,
            c.true_neg,
            c.false_pos,
            c.false_neg,
            f.accuracy
        )?;
    }
    writeln!(out, "mean,,,,,,,{:.3}", report.mean_accuracy)
}
