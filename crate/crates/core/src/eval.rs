//! Evaluation: IoU box matching and precision/recall/F1 for nodes, edges,
//! labels and arrowheads.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::graph::{ArrowheadRecord, FlowGraph, GraphNode};

/// Intersection over union of the areas covered by two pixel boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.to_rect::<f64>().iou(&b.to_rect())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// `(pred index, gt index, iou)` in the order they were matched.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
}

impl MatchResult {
    /// Predicted index to ground-truth index.
    pub fn pred_to_gt(&self) -> HashMap<usize, usize> {
        self.pairs.iter().map(|&(p, g, _)| (p, g)).collect()
    }
}

fn greedy(n_pred: usize, n_gt: usize, mut cands: Vec<(f64, usize, usize)>, order: impl Fn(&(f64, usize, usize), &(f64, usize, usize)) -> std::cmp::Ordering) -> MatchResult {
    cands.sort_by(order);
    let mut used_p = vec![false; n_pred];
    let mut used_g = vec![false; n_gt];
    let mut pairs = Vec::new();
    for (s, p, g) in cands {
        if used_p[p] || used_g[g] {
            continue;
        }
        used_p[p] = true;
        used_g[g] = true;
        pairs.push((p, g, s));
    }
    MatchResult {
        pairs,
        unmatched_pred: (0..n_pred).filter(|&i| !used_p[i]).collect(),
        unmatched_gt: (0..n_gt).filter(|&i| !used_g[i]).collect(),
    }
}

/// Greedy one-to-one matching in descending IoU order over pairs with
/// IoU strictly above `threshold`. Equal IoUs are ordered by the boxes
/// themselves, then by index, so the matched box pairs do not depend on
/// the order of either list.
pub fn match_boxes(pred: &[BoundingBox], gt: &[BoundingBox], threshold: f64) -> MatchResult {
    let mut cands = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let v = iou(p, g);
            if v > threshold {
                cands.push((v, i, j));
            }
        }
    }
    greedy(pred.len(), gt.len(), cands, |a, b| {
        b.0.total_cmp(&a.0)
            .then(pred[a.1].cmp(&pred[b.1]))
            .then(gt[a.2].cmp(&gt[b.2]))
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    })
}

/// Greedy one-to-one matching of arrowheads by tip distance (ascending),
/// accepting pairs with tips at most `tol` apart.
pub fn match_tips(pred: &[ArrowheadRecord], gt: &[ArrowheadRecord], tol: f64) -> MatchResult {
    let mut cands = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let d = p.tip.distance(g.tip);
            if d <= tol {
                cands.push((d, i, j));
            }
        }
    }
    greedy(pred.len(), gt.len(), cands, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
}

/// Raw counts behind a precision/recall pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub predicted: usize,
    pub truth: usize,
    pub matched: usize,
}

impl Counts {
    /// `matched / predicted`, 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.matched, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.matched, self.truth)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    fn add(&mut self, o: &Counts) {
        self.predicted += o.predicted;
        self.truth += o.truth;
        self.matched += o.matched;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Counts accumulated over one or more documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalCounts {
    pub nodes: Counts,
    pub class_correct: usize,
    pub edges: Counts,
    pub label_correct: usize,
    pub arrowheads: Counts,
}

impl EvalCounts {
    pub fn add(&mut self, o: &EvalCounts) {
        self.nodes.add(&o.nodes);
        self.class_correct += o.class_correct;
        self.edges.add(&o.edges);
        self.label_correct += o.label_correct;
        self.arrowheads.add(&o.arrowheads);
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport {
            node: NodeMetrics {
                precision: self.nodes.precision(),
                recall: self.nodes.recall(),
                f1: self.nodes.f1(),
                classification_accuracy: ratio(self.class_correct, self.nodes.matched),
            },
            edge: EdgeMetrics {
                precision: self.edges.precision(),
                recall: self.edges.recall(),
                f1: self.edges.f1(),
                label_accuracy: ratio(self.label_correct, self.edges.matched),
            },
            arrowhead: ArrowheadMetrics { recall: self.arrowheads.recall() },
            counts: *self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub classification_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub label_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrowheadMetrics {
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub node: NodeMetrics,
    pub edge: EdgeMetrics,
    pub arrowhead: ArrowheadMetrics,
    pub counts: EvalCounts,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.counts;
        writeln!(f, "{:<10} {:>9} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7}", "task", "precision", "recall", "f1", "accuracy", "pred", "truth", "match")?;
        writeln!(
            f,
            "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>7} {:>7} {:>7}",
            "node", self.node.precision, self.node.recall, self.node.f1, self.node.classification_accuracy, c.nodes.predicted, c.nodes.truth, c.nodes.matched
        )?;
        writeln!(
            f,
            "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>7} {:>7} {:>7}",
            "edge", self.edge.precision, self.edge.recall, self.edge.f1, self.edge.label_accuracy, c.edges.predicted, c.edges.truth, c.edges.matched
        )?;
        writeln!(
            f,
            "{:<10} {:>9} {:>9.4} {:>9} {:>9} {:>7} {:>7} {:>7}",
            "arrowhead", "-", self.arrowhead.recall, "-", "-", c.arrowheads.predicted, c.arrowheads.truth, c.arrowheads.matched
        )
    }
}

/// Node matching plus class agreement.
pub fn score_nodes(pred: &[GraphNode], gt: &[GraphNode], threshold: f64) -> (MatchResult, Counts, usize) {
    let pb: Vec<BoundingBox> = pred.iter().map(|n| n.bbox).collect();
    let gb: Vec<BoundingBox> = gt.iter().map(|n| n.bbox).collect();
    let m = match_boxes(&pb, &gb, threshold);
    let class_ok = m.pairs.iter().filter(|&&(p, g, _)| pred[p].class == gt[g].class).count();
    let counts = Counts { predicted: pred.len(), truth: gt.len(), matched: m.pairs.len() };
    (m, counts, class_ok)
}

/// A predicted edge is correct when its endpoints map (through the node
/// matching) onto a ground-truth edge with the same direction. Each
/// ground-truth edge is used once. Returns the counts and the number of
/// correct edges whose label (ja, nee or none) also agrees.
pub fn score_edges(pred: &FlowGraph, gt: &FlowGraph, node_match: &MatchResult) -> (Counts, usize) {
    let p2g = node_match.pred_to_gt();
    let pred_idx: HashMap<&str, usize> = pred.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut used = vec![false; gt.edges.len()];
    let mut matched = 0;
    let mut labels_ok = 0;
    for e in &pred.edges {
        let map = |id: &str| pred_idx.get(id).and_then(|i| p2g.get(i)).map(|&g| gt.nodes[g].id.as_str());
        let (Some(s), Some(t)) = (map(&e.source), map(&e.target)) else { continue };
        let candidates: Vec<usize> =
            (0..gt.edges.len()).filter(|&k| !used[k] && gt.edges[k].source == s && gt.edges[k].target == t).collect();
        let pick = candidates.iter().copied().find(|&k| gt.edges[k].label == e.label).or(candidates.first().copied());
        if let Some(k) = pick {
            used[k] = true;
            matched += 1;
            if gt.edges[k].label == e.label {
                labels_ok += 1;
            }
        }
    }
    (Counts { predicted: pred.edges.len(), truth: gt.edges.len(), matched }, labels_ok)
}

/// Tip distance (px) within which a predicted arrowhead counts as found.
pub const ARROW_TIP_TOL: f64 = 5.0;

/// Scores one document.
pub fn evaluate(pred: &FlowGraph, gt: &FlowGraph, threshold: f64) -> EvalCounts {
    let (m, nodes, class_correct) = score_nodes(&pred.nodes, &gt.nodes, threshold);
    let (edges, label_correct) = score_edges(pred, gt, &m);
    let am = match_tips(&pred.arrowheads, &gt.arrowheads, ARROW_TIP_TOL);
    EvalCounts {
        nodes,
        class_correct,
        edges,
        label_correct,
        arrowheads: Counts { predicted: pred.arrowheads.len(), truth: gt.arrowheads.len(), matched: am.pairs.len() },
    }
}

/// Micro-averaged report over `(prediction, truth)` pairs.
pub fn evaluate_corpus<'a>(docs: impl IntoIterator<Item = (&'a FlowGraph, &'a FlowGraph)>, threshold: f64) -> MetricsReport {
    let mut total = EvalCounts::default();
    for (p, g) in docs {
        total.add(&evaluate(p, g, threshold));
    }
    total.report()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphEdge;
    use crate::labels::LabelValue;
    use crate::nodedetect::NodeClass;

    fn b(x: u32, y: u32, w: u32, h: u32) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn gn(id: &str, class: NodeClass, bb: BoundingBox) -> GraphNode {
        GraphNode { id: id.into(), class, bbox: bb, text: String::new() }
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&b(0, 0, 10, 10), &b(0, 0, 10, 10)), 1.0);
        assert_eq!(iou(&b(0, 0, 10, 10), &b(20, 0, 10, 10)), 0.0);
        assert!((iou(&b(0, 0, 10, 10), &b(5, 0, 10, 10)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_prefers_higher_iou() {
        let pred = [b(0, 0, 100, 100)];
        let gt = [b(0, 0, 100, 90), b(0, 0, 100, 60)];
        let m = match_boxes(&pred, &gt, 0.5);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].1, 0);
        assert_eq!(m.unmatched_gt, vec![1]);
    }

    #[test]
    fn strict_threshold() {
        // IoU exactly 0.5.
        let m = match_boxes(&[b(0, 0, 10, 10)], &[b(0, 0, 10, 5)], 0.5);
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_pred, vec![0]);
    }

    #[test]
    fn node_scores() {
        let gt: Vec<GraphNode> = (0..5).map(|i| gn(&format!("g{i}"), NodeClass::Process, b(i * 200, 0, 100, 50))).collect();
        let mut pred: Vec<GraphNode> = gt[..4].to_vec();
        pred[0].class = NodeClass::Decision;
        let (_, c, ok) = score_nodes(&pred, &gt, 0.5);
        assert_eq!(c.recall(), 0.8);
        assert_eq!(ok as f64 / c.matched as f64, 0.75);
        let (_, empty, _) = score_nodes(&[], &gt, 0.5);
        assert_eq!((empty.precision(), empty.recall(), empty.f1()), (0.0, 0.0, 0.0));
    }

    fn graph(edges: &[(&str, &str, Option<LabelValue>)]) -> FlowGraph {
        FlowGraph {
            nodes: (0..4).map(|i| gn(&format!("n{i}"), NodeClass::Process, b(i * 200, 0, 100, 50))).collect(),
            edges: edges.iter().map(|&(s, t, l)| GraphEdge::new(s, t, l)).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn edge_scores() {
        let gt = graph(&[("n0", "n1", Some(LabelValue::Ja)), ("n0", "n2", Some(LabelValue::Nee)), ("n2", "n3", None)]);
        let same = evaluate(&gt, &gt, 0.5).report();
        assert_eq!((same.edge.precision, same.edge.recall, same.edge.label_accuracy), (1.0, 1.0, 1.0));

        let reversed = graph(&[("n1", "n0", Some(LabelValue::Ja))]);
        assert_eq!(evaluate(&reversed, &gt, 0.5).edges.matched, 0);

        let partial = graph(&[("n0", "n1", Some(LabelValue::Ja)), ("n0", "n2", Some(LabelValue::Ja))]);
        let r = evaluate(&partial, &gt, 0.5).report();
        assert_eq!(r.edge.precision, 1.0);
        assert!((r.edge.recall - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.edge.label_accuracy, 0.5);
    }

    #[test]
    fn swapping_swaps_precision_and_recall() {
        let a = graph(&[("n0", "n1", None), ("n1", "n2", None), ("n2", "n3", None)]);
        let mut bg = graph(&[("n0", "n1", None)]);
        bg.nodes.pop();
        let ab = evaluate(&a, &bg, 0.5).report();
        let ba = evaluate(&bg, &a, 0.5).report();
        assert_eq!(ab.edge.precision, ba.edge.recall);
        assert_eq!(ab.node.recall, ba.node.precision);
    }

    #[test]
    fn table_has_three_rows() {
        let r = EvalCounts::default().report();
        assert_eq!(r.to_string().lines().count(), 4);
    }
}
