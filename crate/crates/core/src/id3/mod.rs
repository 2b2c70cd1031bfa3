//! Inductive decision tree over continuous sensor features.
//!
//! Splits are binary thresholds (`value ≤ t` goes left) chosen by maximum
//! information gain; candidate thresholds are midpoints between consecutive
//! distinct values. A node only splits if it holds at least `k_min_points`
//! samples. Features may be reused along a path. There is no post-pruning.

mod model;
mod split;

use thiserror::Error;

use crate::dataset::{Dataset, Feature, FeatureSet, Occupancy, SlotId, SlotSample};

pub use model::{deserialize, serialize, to_document, MODEL_FORMAT};
pub use split::{
    best_split, best_split_min_child, entropy, information_gain, Split, GAIN_TIE_TOLERANCE,
};

#[derive(Debug, Error, PartialEq)]
pub enum Id3Error {
    #[error("cannot compute entropy of an empty partition")]
    EmptyPartition,
    #[error("cannot fit a tree on an empty dataset")]
    EmptyDataset,
    #[error("sample {0} has no label")]
    UnlabeledSample(SlotId),
    #[error("missing feature `{0}`")]
    MissingFeature(Feature),
    #[error("invalid learner config: {0}")]
    InvalidConfig(String),
    #[error("model format error at {path}: {reason}")]
    ModelFormat { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Id3Error>;

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// Minimum samples per node: smaller nodes are leaves, and a split is
    /// only made if both children keep at least this many samples.
    pub k_min_points: usize,
    pub max_depth: Option<usize>,
    pub features: FeatureSet,
    /// Leaf class when the majority vote is tied.
    pub tie_class: Occupancy,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            k_min_points: 4,
            max_depth: None,
            features: FeatureSet::ALL,
            tie_class: Occupancy::Unoccupied,
        }
    }
}

impl LearnerConfig {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k_min_points = k;
        self
    }

    pub fn with_features(mut self, features: FeatureSet) -> Self {
        self.features = features;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min_points == 0 {
            return Err(Id3Error::InvalidConfig("k_min_points must be >= 1".into()));
        }
        if self.features.is_empty() {
            return Err(Id3Error::InvalidConfig("no features enabled".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        feature: Feature,
        threshold: f64,
        /// `value ≤ threshold`
        left: Box<TreeNode>,
        /// `value > threshold`
        right: Box<TreeNode>,
    },
    Leaf {
        class: Occupancy,
        support: usize,
        /// Majority fraction of the training subset, in [0.5, 1].
        purity: f64,
    },
}

impl TreeNode {
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    fn collect_features(&self, acc: &mut FeatureSet) {
        if let TreeNode::Internal {
            feature,
            left,
            right,
            ..
        } = self
        {
            *acc = acc.with(*feature);
            left.collect_features(acc);
            right.collect_features(acc);
        }
    }
}

/// A feature vector whose entries may be absent.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FeatureVector {
    pub temperature: Option<f64>,
    pub co2: Option<f64>,
    pub reverberation_time: Option<f64>,
}

impl FeatureVector {
    pub fn new(temperature: f64, co2: f64, reverberation_time: f64) -> Self {
        Self {
            temperature: Some(temperature),
            co2: Some(co2),
            reverberation_time: Some(reverberation_time),
        }
    }

    /// The value of `f`, if present and finite.
    pub fn get(&self, f: Feature) -> Option<f64> {
        match f {
            Feature::Temperature => self.temperature,
            Feature::Co2 => self.co2,
            Feature::ReverberationTime => self.reverberation_time,
        }
        .filter(|v| v.is_finite())
    }
}

impl From<&SlotSample> for FeatureVector {
    fn from(s: &SlotSample) -> Self {
        Self::new(s.temperature, s.co2, s.reverberation_time)
    }
}

/// A fitted classifier. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub k_min_points: usize,
    pub max_depth: Option<usize>,
    /// Features the tree was allowed to use; queries must supply all of them.
    pub features: FeatureSet,
}

impl DecisionTree {
    /// Longest root-to-leaf path in edges.
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaves()
    }

    /// Features actually tested by some internal node.
    pub fn referenced_features(&self) -> FeatureSet {
        let mut acc = FeatureSet::EMPTY;
        self.root.collect_features(&mut acc);
        acc
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Occupancy> {
        if let Some(f) = self.features.iter().find(|f| x.get(*f).is_none()) {
            return Err(Id3Error::MissingFeature(f));
        }
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { class, .. } => return Ok(*class),
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = x.get(*feature).ok_or(Id3Error::MissingFeature(*feature))?;
                    node = if v <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict_sample(&self, s: &SlotSample) -> Result<Occupancy> {
        self.predict(&FeatureVector::from(s))
    }
}

/// Classifies one sample.
pub fn predict(tree: &DecisionTree, sample: &FeatureVector) -> Result<Occupancy> {
    tree.predict(sample)
}

fn leaf(rows: &[(&SlotSample, Occupancy)], tie_class: Occupancy) -> TreeNode {
    let c = split::counts(rows.iter().map(|(_, l)| l));
    let class = match c[0].cmp(&c[1]) {
        std::cmp::Ordering::Greater => Occupancy::Unoccupied,
        std::cmp::Ordering::Less => Occupancy::Occupied,
        std::cmp::Ordering::Equal => tie_class,
    };
    TreeNode::Leaf {
        class,
        support: rows.len(),
        purity: c[0].max(c[1]) as f64 / rows.len() as f64,
    }
}

fn grow(rows: Vec<(&SlotSample, Occupancy)>, depth: usize, config: &LearnerConfig) -> TreeNode {
    let c = split::counts(rows.iter().map(|(_, l)| l));
    let pure = c[0] == 0 || c[1] == 0;
    let too_small = rows.len() < config.k_min_points;
    let too_deep = config.max_depth.is_some_and(|d| depth >= d);
    if pure || too_small || too_deep {
        return leaf(&rows, config.tie_class);
    }
    let Some(s) = split::best_split_rows(&rows, config.features, config.k_min_points) else {
        return leaf(&rows, config.tie_class);
    };
    let (left, right): (Vec<_>, Vec<_>) = rows
        .into_iter()
        .partition(|(x, _)| x.feature(s.feature) <= s.threshold);
    TreeNode::Internal {
        feature: s.feature,
        threshold: s.threshold,
        left: Box::new(grow(left, depth + 1, config)),
        right: Box::new(grow(right, depth + 1, config)),
    }
}

/// Fits a tree on labeled samples.
pub fn fit_samples(samples: &[SlotSample], config: &LearnerConfig) -> Result<DecisionTree> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Id3Error::EmptyDataset);
    }
    let rows = samples
        .iter()
        .map(|s| {
            s.label
                .map(|l| (s, l))
                .ok_or(Id3Error::UnlabeledSample(s.slot_id()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecisionTree {
        root: grow(rows, 0, config),
        k_min_points: config.k_min_points,
        max_depth: config.max_depth,
        features: config.features,
    })
}

pub fn fit(dataset: &Dataset, config: &LearnerConfig) -> Result<DecisionTree> {
    fit_samples(dataset.samples(), config)
}
