//! Decision-label handling: OCR sidecar tokens, ja/nee filtering and
//! distance-based assignment of labels to traced edges.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::edgetrace::TracedEdge;
use crate::geometry::polyline_midpoint;
use crate::nodedetect::{DetectedNode, NodeClass};
use crate::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcrToken {
    pub text: String,
    pub center: Point,
    pub bbox: BoundingBox,
}

/// Recognized text tokens for one image, in reading order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcrSidecar {
    pub tokens: Vec<OcrToken>,
}

#[derive(Debug, thiserror::Error)]
pub enum SidecarError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid sidecar: {0}")]
    Invalid(String),
}

impl OcrSidecar {
    pub fn parse(text: &str) -> Result<Self, SidecarError> {
        let s: OcrSidecar = serde_json::from_str(text).map_err(|e| SidecarError::Invalid(e.to_string()))?;
        for (i, t) in s.tokens.iter().enumerate() {
            if !t.bbox.to_rect::<f64>().contains(t.center) {
                return Err(SidecarError::Invalid(format!("token {i} ({:?}) has its center outside its bbox", t.text)));
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SidecarError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SidecarError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sidecar serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelValue {
    Ja,
    Nee,
}

impl LabelValue {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelValue::Ja => "ja",
            LabelValue::Nee => "nee",
        }
    }
}

impl fmt::Display for LabelValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionLabel {
    pub value: LabelValue,
    pub position: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelParams {
    pub max_dist: f64,
    /// Extra spellings accepted as labels, e.g. `yes -> ja`.
    pub aliases: BTreeMap<String, LabelValue>,
}

impl Default for LabelParams {
    fn default() -> Self {
        LabelParams { max_dist: 40.0, aliases: BTreeMap::new() }
    }
}

fn normalize(text: &str, aliases: &BTreeMap<String, LabelValue>) -> Option<LabelValue> {
    let t = text.trim().to_lowercase();
    match t.as_str() {
        "ja" => Some(LabelValue::Ja),
        "nee" => Some(LabelValue::Nee),
        _ => aliases.get(&t).copied(),
    }
}

/// Tokens reading exactly "ja"/"nee" (after trim and lowercase) that sit
/// outside every node box.
pub fn extract_labels(ocr: &OcrSidecar, nodes: &[DetectedNode], params: &LabelParams) -> Vec<DecisionLabel> {
    ocr.tokens
        .iter()
        .filter(|t| !nodes.iter().any(|n| n.bbox.to_rect::<f64>().contains(t.center)))
        .filter_map(|t| normalize(&t.text, &params.aliases).map(|value| DecisionLabel { value, position: t.center }))
        .collect()
}

/// Outcome of [`assign_labels`]: the edges with labels filled in, plus the
/// indices of labels that found no edge.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelAssignment {
    pub edges: Vec<TracedEdge>,
    /// `(label index, edge index)` pairs in the order they were made.
    pub pairs: Vec<(usize, usize)>,
    pub unassigned: Vec<usize>,
}

/// Candidate `(distance, label, edge)` triples: decision-sourced edges only,
/// distance from label to the arc-length midpoint of the edge path.
pub fn label_candidates(
    edges: &[TracedEdge],
    labels: &[DecisionLabel],
    nodes: &[DetectedNode],
    max_dist: f64,
) -> Vec<(f64, usize, usize)> {
    let class_of: HashMap<&str, NodeClass> = nodes.iter().map(|n| (n.id.as_str(), n.class)).collect();
    let mut out = Vec::new();
    for (ei, e) in edges.iter().enumerate() {
        if class_of.get(e.source.as_str()) != Some(&NodeClass::Decision) {
            continue;
        }
        let Some(mid) = polyline_midpoint(&e.path) else { continue };
        for (li, l) in labels.iter().enumerate() {
            let d = l.position.distance(mid);
            if d <= max_dist {
                out.push((d, li, ei));
            }
        }
    }
    out
}

/// Greedy matching in ascending distance order; each label and each edge
/// is used at most once. Ties break on (label index, edge index).
pub fn assign_labels(
    edges: &[TracedEdge],
    labels: &[DecisionLabel],
    nodes: &[DetectedNode],
    max_dist: f64,
) -> LabelAssignment {
    let mut cands = label_candidates(edges, labels, nodes, max_dist);
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut label_used = vec![false; labels.len()];
    let mut edge_used = vec![false; edges.len()];
    let mut out = edges.to_vec();
    let mut pairs = Vec::new();
    for (_, li, ei) in cands {
        if label_used[li] || edge_used[ei] {
            continue;
        }
        label_used[li] = true;
        edge_used[ei] = true;
        out[ei].label = Some(labels[li].value);
        pairs.push((li, ei));
    }
    let unassigned = (0..labels.len()).filter(|&i| !label_used[i]).collect();
    LabelAssignment { edges: out, pairs, unassigned }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str, class: NodeClass, b: [u32; 4]) -> DetectedNode {
        DetectedNode {
            id: id.into(),
            class,
            bbox: BoundingBox::new(b[0], b[1], b[2], b[3]).unwrap(),
            confidence: 1.0,
            text: String::new(),
        }
    }

    fn token(text: &str, x: f64, y: f64) -> OcrToken {
        OcrToken {
            text: text.into(),
            center: Point::new(x, y),
            bbox: BoundingBox::new(x as u32 - 5, y as u32 - 4, 10, 9).unwrap(),
        }
    }

    fn edge(source: &str, target: &str, arrow: &str, path: &[(f64, f64)]) -> TracedEdge {
        TracedEdge {
            source: source.into(),
            target: target.into(),
            arrowhead: arrow.into(),
            path: path.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            label: None,
        }
    }

    #[test]
    fn extraction_rules() {
        let d = node("n001", NodeClass::Decision, [100, 100, 110, 80]);
        let ocr = OcrSidecar {
            tokens: vec![token("Ja", 200.0, 250.0), token("ja", 150.0, 140.0), token("jaar", 300.0, 300.0), token(" NEE ", 20.0, 20.0)],
        };
        let labels = extract_labels(&ocr, &[d], &LabelParams::default());
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[0], DecisionLabel { value: LabelValue::Ja, position: Point::new(200.0, 250.0) });
        assert_eq!(labels[1].value, LabelValue::Nee);
    }

    #[test]
    fn aliases_extend_vocabulary() {
        let mut p = LabelParams::default();
        p.aliases.insert("yes".into(), LabelValue::Ja);
        let ocr = OcrSidecar { tokens: vec![token("Yes", 50.0, 50.0)] };
        assert_eq!(extract_labels(&ocr, &[], &p)[0].value, LabelValue::Ja);
    }

    #[test]
    fn left_and_right_branches_get_their_labels() {
        let nodes = vec![
            node("n001", NodeClass::Decision, [200, 100, 110, 80]),
            node("n002", NodeClass::Process, [50, 300, 120, 60]),
            node("n003", NodeClass::Process, [350, 300, 120, 60]),
        ];
        let edges = vec![
            edge("n001", "n002", "a001", &[(200.0, 140.0), (110.0, 140.0), (110.0, 299.0)]),
            edge("n001", "n003", "a002", &[(310.0, 140.0), (410.0, 140.0), (410.0, 299.0)]),
        ];
        let labels = vec![
            DecisionLabel { value: LabelValue::Nee, position: Point::new(420.0, 180.0) },
            DecisionLabel { value: LabelValue::Ja, position: Point::new(100.0, 180.0) },
        ];
        let out = assign_labels(&edges, &labels, &nodes, 40.0);
        assert_eq!(out.edges[0].label, Some(LabelValue::Ja));
        assert_eq!(out.edges[1].label, Some(LabelValue::Nee));
        assert!(out.unassigned.is_empty());
    }

    #[test]
    fn distant_label_is_reported() {
        let nodes = vec![node("n001", NodeClass::Decision, [0, 0, 50, 50]), node("n002", NodeClass::Process, [0, 200, 50, 50])];
        let edges = vec![edge("n001", "n002", "a001", &[(25.0, 55.0), (25.0, 199.0)])];
        let labels = vec![DecisionLabel { value: LabelValue::Ja, position: Point::new(225.0, 127.0) }];
        let out = assign_labels(&edges, &labels, &nodes, 40.0);
        assert_eq!(out.edges[0].label, None);
        assert_eq!(out.unassigned, vec![0]);
    }

    #[test]
    fn process_sourced_edges_are_ineligible() {
        let nodes = vec![node("n001", NodeClass::Process, [0, 0, 50, 50]), node("n002", NodeClass::Process, [0, 200, 50, 50])];
        let edges = vec![edge("n001", "n002", "a001", &[(25.0, 55.0), (25.0, 199.0)])];
        let labels = vec![DecisionLabel { value: LabelValue::Ja, position: Point::new(35.0, 127.0) }];
        let out = assign_labels(&edges, &labels, &nodes, 40.0);
        assert_eq!(out.edges[0].label, None);
        assert_eq!(out.unassigned, vec![0]);
    }

    #[test]
    fn sidecar_center_must_lie_in_bbox() {
        let bad = r#"{"tokens": [{"text": "ja", "center": [100, 100], "bbox": [0, 0, 10, 10]}]}"#;
        assert!(OcrSidecar::parse(bad).is_err());
        let good = r#"{"tokens": [{"text": "ja", "center": [5, 5], "bbox": [0, 0, 10, 10]}]}"#;
        assert_eq!(OcrSidecar::parse(good).unwrap().tokens.len(), 1);
    }
}
