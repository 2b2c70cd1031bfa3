//! Versioned JSON model document.
//!
//! ```json
//! { "format": "occusense-tree/1", "k_min_points": 4,
//!   "features": ["temperature", "reverberation_time"],
//!   "root": { "feature": "reverberation_time", "threshold": 0.985,
//!             "left":  { "leaf": 1, "support": 5, "purity": 1.0 },
//!             "right": { "leaf": 0, "support": 4, "purity": 1.0 } } }
//! ```

use serde_json::{json, Map, Value};

use super::{DecisionTree, Id3Error, Result, TreeNode};
use crate::dataset::{Feature, FeatureSet, Occupancy};

pub const MODEL_FORMAT: &str = "occusense-tree/1";

fn node_doc(node: &TreeNode) -> Value {
    match node {
        TreeNode::Leaf {
            class,
            support,
            purity,
        } => json!({ "leaf": class.as_u8(), "support": support, "purity": purity }),
        TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } => json!({
            "feature": feature.name(),
            "threshold": threshold,
            "left": node_doc(left),
            "right": node_doc(right),
        }),
    }
}

pub fn to_document(tree: &DecisionTree) -> Value {
    let mut doc = Map::new();
    doc.insert("format".into(), MODEL_FORMAT.into());
    doc.insert("k_min_points".into(), tree.k_min_points.into());
    if let Some(d) = tree.max_depth {
        doc.insert("max_depth".into(), d.into());
    }
    doc.insert(
        "features".into(),
        tree.features
            .columns()
            .map(Feature::name)
            .collect::<Vec<_>>()
            .into(),
    );
    doc.insert("root".into(), node_doc(&tree.root));
    Value::Object(doc)
}

/// Pretty-printed model document. Floats are written in shortest
/// round-trip form.
pub fn serialize(tree: &DecisionTree) -> String {
    serde_json::to_string_pretty(&to_document(tree)).expect("tree documents always serialize")
}

fn bad(path: &str, reason: impl Into<String>) -> Id3Error {
    Id3Error::ModelFormat {
        path: path.to_string(),
        reason: reason.into(),
    }
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| bad(path, format!("missing `{key}`")))
}

fn as_usize(v: &Value, path: &str, key: &str) -> Result<usize> {
    v.as_u64()
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| bad(path, format!("`{key}` must be a non-negative integer")))
}

fn as_finite(v: &Value, path: &str, key: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| bad(path, format!("`{key}` must be a finite number")))
}

fn parse_feature(v: &Value, path: &str) -> Result<Feature> {
    v.as_str()
        .ok_or_else(|| bad(path, "feature must be a string"))?
        .parse()
        .map_err(|e: String| bad(path, e))
}

fn parse_node(v: &Value, path: &str, features: FeatureSet) -> Result<TreeNode> {
    let obj = v
        .as_object()
        .ok_or_else(|| bad(path, "node must be an object"))?;
    if let Some(class) = obj.get("leaf") {
        let class = match class.as_u64() {
            Some(0) => Occupancy::Unoccupied,
            Some(1) => Occupancy::Occupied,
            _ => return Err(bad(path, "`leaf` must be 0 or 1")),
        };
        let support = as_usize(get(obj, "support", path)?, path, "support")?;
        let purity = as_finite(get(obj, "purity", path)?, path, "purity")?;
        if !(0.5..=1.0).contains(&purity) {
            return Err(bad(path, format!("purity {purity} not in [0.5, 1]")));
        }
        return Ok(TreeNode::Leaf {
            class,
            support,
            purity,
        });
    }
    let feature = parse_feature(get(obj, "feature", path)?, path)?;
    if !features.contains(feature) {
        return Err(bad(path, format!("feature `{feature}` is not enabled")));
    }
    let threshold = as_finite(get(obj, "threshold", path)?, path, "threshold")?;
    let left_path = format!("{path}.left");
    let right_path = format!("{path}.right");
    Ok(TreeNode::Internal {
        feature,
        threshold,
        left: Box::new(parse_node(get(obj, "left", path)?, &left_path, features)?),
        right: Box::new(parse_node(get(obj, "right", path)?, &right_path, features)?),
    })
}

/// Parses a model document, reporting the path of the first bad node.
pub fn deserialize(text: &str) -> Result<DecisionTree> {
    let doc: Value = serde_json::from_str(text).map_err(|e| bad("$", e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| bad("$", "document must be an object"))?;
    match get(obj, "format", "$")?.as_str() {
        Some(MODEL_FORMAT) => {}
        other => {
            return Err(bad(
                "$.format",
                format!("unsupported format {other:?}, expected `{MODEL_FORMAT}`"),
            ))
        }
    }
    let k_min_points = as_usize(get(obj, "k_min_points", "$")?, "$", "k_min_points")?;
    let max_depth = match obj.get("max_depth") {
        None | Some(Value::Null) => None,
        Some(v) => Some(as_usize(v, "$", "max_depth")?),
    };
    let features = get(obj, "features", "$")?
        .as_array()
        .ok_or_else(|| bad("$.features", "must be an array"))?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_feature(v, &format!("$.features[{i}]")))
        .collect::<Result<FeatureSet>>()?;
    if features.is_empty() {
        return Err(bad("$.features", "no features listed"));
    }
    let root = parse_node(get(obj, "root", "$")?, "root", features)?;
    Ok(DecisionTree {
        root,
        k_min_points,
        max_depth,
        features,
    })
}
