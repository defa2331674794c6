//! Output graph document: assembly, canonical serialization and validation.
//!
//! Key order is fixed by the struct definitions below. Optional keys are
//! omitted when empty, so a plain extraction carries only `nodes`, `edges`
//! and `diagnostics`:
//!
//! ```text
//! {
//!   "@context": {...},          (only with JSON-LD enabled)
//!   "ground_truth": true,       (truth files only)
//!   "nodes": [{"id", "type", "bbox", "text"}],
//!   "edges": [{"source", "target", "type", "label"?, "arrowhead"?, "path"?}],
//!   "arrowheads": [{"id", "bbox", "tip", "blunt", "occluded"?}],
//!   "diagnostics": [{"arrowhead"?, "position"?, "reason", "text"?}]
//! }
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::arrowhead::Arrowhead;
use crate::bbox::BoundingBox;
use crate::edgetrace::TracedEdge;
use crate::labels::LabelValue;
use crate::nodedetect::{DetectedNode, NodeClass};
use crate::Point;

pub const VOCAB: &str = "urn:flowextract:vocab#";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonLdContext {
    #[serde(rename = "@vocab")]
    pub vocab: String,
    pub nodes: String,
    pub edges: String,
    pub source: String,
    pub target: String,
}

impl Default for JsonLdContext {
    fn default() -> Self {
        JsonLdContext {
            vocab: VOCAB.to_string(),
            nodes: format!("{VOCAB}nodes"),
            edges: format!("{VOCAB}edges"),
            source: format!("{VOCAB}source"),
            target: format!("{VOCAB}target"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphNode {
    pub id: String,
    #[serde(rename = "type")]
    pub class: NodeClass,
    pub bbox: BoundingBox,
    pub text: String,
}

impl From<&DetectedNode> for GraphNode {
    fn from(n: &DetectedNode) -> Self {
        GraphNode { id: n.id.clone(), class: n.class, bbox: n.bbox, text: n.text.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeType {
    #[default]
    Flow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEdge {
    pub source: String,
    pub target: String,
    #[serde(rename = "type")]
    pub kind: EdgeType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrowhead: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<Point>,
}

impl GraphEdge {
    pub fn new(source: impl Into<String>, target: impl Into<String>, label: Option<LabelValue>) -> Self {
        GraphEdge { source: source.into(), target: target.into(), kind: EdgeType::Flow, label, arrowhead: None, path: Vec::new() }
    }
}

impl From<&TracedEdge> for GraphEdge {
    fn from(e: &TracedEdge) -> Self {
        GraphEdge {
            source: e.source.clone(),
            target: e.target.clone(),
            kind: EdgeType::Flow,
            label: e.label,
            arrowhead: Some(e.arrowhead.clone()),
            path: e.path.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrowheadRecord {
    pub id: String,
    pub bbox: BoundingBox,
    pub tip: Point,
    pub blunt: Point,
    #[serde(default, skip_serializing_if = "is_false")]
    pub occluded: bool,
}

impl From<&Arrowhead> for ArrowheadRecord {
    fn from(a: &Arrowhead) -> Self {
        ArrowheadRecord { id: a.id.clone(), bbox: a.bbox, tip: a.tip, blunt: a.blunt, occluded: false }
    }
}

/// Something the pipeline could not resolve: an arrowhead without an edge
/// or a label without an edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostic {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrowhead: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Point>,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Diagnostic {
    pub fn arrowhead(id: impl Into<String>, reason: impl Into<String>) -> Self {
        Diagnostic { arrowhead: Some(id.into()), position: None, reason: reason.into(), text: None }
    }

    pub fn label(position: Point, text: impl Into<String>, reason: impl Into<String>) -> Self {
        Diagnostic { arrowhead: None, position: Some(position), reason: reason.into(), text: Some(text.into()) }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowGraph {
    #[serde(rename = "@context", default, skip_serializing_if = "Option::is_none")]
    pub context: Option<JsonLdContext>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub ground_truth: bool,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arrowheads: Vec<ArrowheadRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("edge {source_id} -> {target} references missing node `{missing}`")]
    DanglingEdge { source_id: String, target: String, missing: String },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("duplicate arrowhead id `{0}`")]
    DuplicateArrowhead(String),
    #[error("invalid graph JSON: {0}")]
    Syntax(String),
}

fn edge_key(e: &GraphEdge) -> (&str, &str, Option<LabelValue>, Option<&str>) {
    (e.source.as_str(), e.target.as_str(), e.label, e.arrowhead.as_deref())
}

fn diag_key(d: &Diagnostic) -> (u8, String, [u64; 2], &str) {
    let pos = d.position.map(|p| [p.y.to_bits(), p.x.to_bits()]).unwrap_or([0, 0]);
    match &d.arrowhead {
        Some(a) => (0, a.clone(), pos, d.reason.as_str()),
        None => (1, String::new(), pos, d.reason.as_str()),
    }
}

impl FlowGraph {
    /// Checks unique node ids, unique arrowhead ids and that every edge
    /// endpoint is a node.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return Err(GraphError::DuplicateNode(n.id.clone()));
            }
        }
        for e in &self.edges {
            for end in [&e.source, &e.target] {
                if !ids.contains(end.as_str()) {
                    return Err(GraphError::DanglingEdge { source_id: e.source.clone(), target: e.target.clone(), missing: end.clone() });
                }
            }
        }
        let mut arrows = HashSet::new();
        for a in &self.arrowheads {
            if !arrows.insert(a.id.as_str()) {
                return Err(GraphError::DuplicateArrowhead(a.id.clone()));
            }
        }
        Ok(())
    }

    /// Sorts nodes by id, edges by (source, target, label), arrowheads by
    /// id and diagnostics by subject.
    pub fn canonicalize(&mut self) {
        self.nodes.sort_by(|a, b| a.id.cmp(&b.id));
        self.edges.sort_by(|a, b| {
            edge_key(a)
                .cmp(&edge_key(b))
                .then_with(|| serde_json::to_string(&a.path).unwrap().cmp(&serde_json::to_string(&b.path).unwrap()))
        });
        self.arrowheads.sort_by(|a, b| a.id.cmp(&b.id));
        self.diagnostics.sort_by(|a, b| diag_key(a).cmp(&diag_key(b)));
    }

    pub fn with_jsonld(mut self, on: bool) -> Self {
        self.context = on.then(JsonLdContext::default);
        self
    }

    /// Canonical bytes: fixed key order, sorted lists, two-space indent,
    /// trailing newline.
    pub fn serialize(&self) -> Vec<u8> {
        let mut g = self.clone();
        g.canonicalize();
        let mut out = serde_json::to_vec_pretty(&g).expect("graph serializes");
        out.push(b'\n');
        out
    }

    pub fn to_json_string(&self) -> String {
        String::from_utf8(self.serialize()).expect("serde_json emits UTF-8")
    }

    /// Parses and validates a graph document.
    pub fn parse(bytes: &[u8]) -> Result<Self, GraphError> {
        let g: FlowGraph = serde_json::from_slice(bytes).map_err(|e| GraphError::Syntax(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    /// Edges as `(source, target) -> count`, ignoring labels.
    pub fn edge_counts(&self) -> BTreeMap<(String, String), usize> {
        let mut m = BTreeMap::new();
        for e in &self.edges {
            *m.entry((e.source.clone(), e.target.clone())).or_insert(0) += 1;
        }
        m
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

/// Builds the output graph from pipeline results.
pub fn assemble(
    nodes: &[DetectedNode],
    edges: &[TracedEdge],
    arrowheads: &[Arrowhead],
    diagnostics: Vec<Diagnostic>,
) -> Result<FlowGraph, GraphError> {
    let mut g = FlowGraph {
        context: None,
        ground_truth: false,
        nodes: nodes.iter().map(GraphNode::from).collect(),
        edges: edges.iter().map(GraphEdge::from).collect(),
        arrowheads: arrowheads.iter().map(ArrowheadRecord::from).collect(),
        diagnostics,
    };
    g.validate()?;
    g.canonicalize();
    Ok(g)
}

/// Node id to class lookup.
pub fn class_map(g: &FlowGraph) -> HashMap<&str, NodeClass> {
    g.nodes.iter().map(|n| (n.id.as_str(), n.class)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const EMPTY_DOCUMENT: &str = "{\n  \"nodes\": [],\n  \"edges\": [],\n  \"diagnostics\": []\n}\n";

    fn gnode(id: &str) -> GraphNode {
        GraphNode { id: id.into(), class: NodeClass::Process, bbox: BoundingBox::new(0, 0, 10, 10).unwrap(), text: String::new() }
    }

    #[test]
    fn empty_document_bytes() {
        assert_eq!(FlowGraph::default().to_json_string(), EMPTY_DOCUMENT);
        assert_eq!(assemble(&[], &[], &[], vec![]).unwrap().to_json_string(), EMPTY_DOCUMENT);
    }

    #[test]
    fn dangling_edge_rejected() {
        let g = FlowGraph { nodes: vec![gnode("n001")], edges: vec![GraphEdge::new("n001", "n999", None)], ..Default::default() };
        assert!(matches!(g.validate(), Err(GraphError::DanglingEdge { missing, .. }) if missing == "n999"));
    }

    #[test]
    fn construction_order_does_not_matter() {
        let a = FlowGraph {
            nodes: vec![gnode("n002"), gnode("n001")],
            edges: vec![GraphEdge::new("n002", "n001", None), GraphEdge::new("n001", "n002", Some(LabelValue::Ja))],
            ..Default::default()
        };
        let mut b = a.clone();
        b.nodes.reverse();
        b.edges.reverse();
        assert_eq!(a.serialize(), b.serialize());
        let text = a.to_json_string();
        assert!(text.find("\"n001\"").unwrap() < text.find("\"n002\"").unwrap());
    }

    #[test]
    fn jsonld_context_comes_first() {
        let g = FlowGraph::default().with_jsonld(true);
        let text = g.to_json_string();
        assert!(text.starts_with("{\n  \"@context\": {\n    \"@vocab\""));
        assert_eq!(FlowGraph::parse(text.as_bytes()).unwrap().serialize(), g.serialize());
    }

    #[test]
    fn unknown_keys_and_bad_labels_rejected() {
        assert!(FlowGraph::parse(br#"{"nodes": [], "edges": [], "diagnostics": [], "extra": 1}"#).is_err());
        let bad_label = r#"{"nodes": [{"id": "a", "type": "process", "bbox": [0,0,1,1], "text": ""}],
            "edges": [{"source": "a", "target": "a", "type": "flow", "label": "maybe"}], "diagnostics": []}"#;
        assert!(FlowGraph::parse(bad_label.as_bytes()).is_err());
        let bad_type = bad_label.replace("\"maybe\"", "\"ja\"").replace("\"flow\"", "\"reference\"");
        assert!(FlowGraph::parse(bad_type.as_bytes()).is_err());
        let ok = bad_label.replace("\"maybe\"", "\"ja\"");
        assert_eq!(FlowGraph::parse(ok.as_bytes()).unwrap().edges[0].label, Some(LabelValue::Ja));
    }

    #[test]
    fn self_loops_and_cycles_are_kept() {
        let g = FlowGraph {
            nodes: vec![gnode("n001"), gnode("n002")],
            edges: vec![GraphEdge::new("n001", "n002", None), GraphEdge::new("n002", "n001", None), GraphEdge::new("n001", "n001", None)],
            ..Default::default()
        };
        let back = FlowGraph::parse(&g.serialize()).unwrap();
        assert_eq!(back.edges.len(), 3);
    }
}
