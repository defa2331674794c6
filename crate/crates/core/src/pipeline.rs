//! End-to-end extraction: raster to graph.

use std::fmt;

use crate::arrowhead::{detect_arrowheads, orient_in_bbox, Arrowhead};
use crate::config::{Denoise, PipelineConfig};
use crate::edgetrace::{build_segment_graph, trace_all, SegmentGraph, TraceReport};
use crate::graph::{assemble, Diagnostic, FlowGraph};
use crate::labels::{assign_labels, extract_labels, OcrSidecar};
use crate::lines::detect_segments;
use crate::nodedetect::{attach_text, detect_nodes_geometric, DetectedNode, Detections};
use crate::raster::{binarize, mask_node_regions, BinaryImage, GrayImage};
use crate::Segment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Raster,
    NodeDetect,
    Arrowhead,
    Lines,
    EdgeTrace,
    Labels,
    Graph,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Raster => "raster",
            Stage::NodeDetect => "nodedetect",
            Stage::Arrowhead => "arrowhead",
            Stage::Lines => "lines",
            Stage::EdgeTrace => "edgetrace",
            Stage::Labels => "labels",
            Stage::Graph => "graph",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("[{stage}] {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

/// Everything the pipeline produced, intermediate results included.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub graph: FlowGraph,
    pub binary: BinaryImage,
    pub nodes: Vec<DetectedNode>,
    pub arrowheads: Vec<Arrowhead>,
    pub segments: Vec<Segment>,
    /// Segment adjacency with capped ends marked, as used for tracing.
    pub segment_graph: SegmentGraph,
    pub trace: TraceReport,
}

/// Binarization, node detection (or ingestion) and arrowhead detection.
#[derive(Debug, Clone)]
pub struct Front {
    pub binary: BinaryImage,
    pub nodes: Vec<DetectedNode>,
    pub arrowheads: Vec<Arrowhead>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn front(img: &GrayImage, cfg: &PipelineConfig, detections: Option<&Detections>, ocr: Option<&OcrSidecar>) -> Front {
    let src = if cfg.invert { img.inverted() } else { img.clone() };
    let raw = binarize(&src, cfg.binarization()).image;
    let binary = match cfg.denoise {
        Denoise::None => raw,
        Denoise::Despeckle => raw.despeckle(),
        Denoise::Median => raw.majority(),
    };
    let mut diagnostics = Vec::new();
    let ap = cfg.arrow_params();
    let (nodes, arrowheads) = match detections {
        Some(d) => {
            let nodes = d.nodes.clone();
            let mut heads = Vec::new();
            for h in &d.arrowheads {
                match orient_in_bbox(&binary, &nodes, &h.id, h.bbox, &ap) {
                    Some(a) => heads.push(a),
                    None => diagnostics.push(Diagnostic::arrowhead(h.id.clone(), "unoriented")),
                }
            }
            (nodes, heads)
        }
        None => {
            let nodes = detect_nodes_geometric(&binary, &cfg.node_params());
            let heads = detect_arrowheads(&binary, &nodes, &ap);
            (nodes, heads)
        }
    };
    let nodes = match ocr {
        Some(o) => attach_text(&nodes, o),
        None => nodes,
    };
    Front { binary, nodes, arrowheads, diagnostics }
}

/// Line detection, tracing, labels and assembly given the front half.
pub fn back(front: Front, cfg: &PipelineConfig, ocr: Option<&OcrSidecar>) -> Result<Extraction, PipelineError> {
    let Front { binary, nodes, arrowheads, mut diagnostics } = front;
    let boxes: Vec<_> = nodes.iter().map(|n| n.bbox).collect();
    let masked = mask_node_regions(&binary, &boxes, cfg.mask_dilation as u32);
    let segments = detect_segments(&masked, &cfg.hough_params());
    let tp = cfg.trace_params();
    let mut sg = build_segment_graph(&segments, tp.join_eps);
    sg.mark_capped_ends(&masked, tp.cap_width);
    let mut trace = trace_all(&arrowheads, &sg, &nodes, &tp);
    for (id, reason) in &trace.failures {
        diagnostics.push(Diagnostic::arrowhead(id.clone(), reason.as_str()));
    }
    if let Some(o) = ocr {
        let lp = cfg.label_params();
        let labels = extract_labels(o, &nodes, &lp);
        let assigned = assign_labels(&trace.edges, &labels, &nodes, lp.max_dist);
        for &i in &assigned.unassigned {
            let l = &labels[i];
            diagnostics.push(Diagnostic::label(l.position, l.value.as_str(), "unassigned_label"));
        }
        trace.edges = assigned.edges;
    }
    let graph = assemble(&nodes, &trace.edges, &arrowheads, diagnostics)
        .map_err(|e| PipelineError { stage: Stage::Graph, message: e.to_string() })?;
    Ok(Extraction { graph, binary, nodes, arrowheads, segments, segment_graph: sg, trace })
}

pub fn extract(
    img: &GrayImage,
    cfg: &PipelineConfig,
    detections: Option<&Detections>,
    ocr: Option<&OcrSidecar>,
) -> Result<Extraction, PipelineError> {
    cfg.validate().map_err(|e| PipelineError { stage: Stage::Raster, message: e.to_string() })?;
    back(front(img, cfg, detections, ocr), cfg, ocr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate;
    use crate::synthgen::{generate, GenParams};

    #[test]
    fn blank_image_gives_empty_graph() {
        let img = GrayImage::filled(400, 400, 255);
        let x = extract(&img, &PipelineConfig::default(), None, None).unwrap();
        assert!(x.graph.nodes.is_empty() && x.graph.edges.is_empty());
    }

    #[test]
    fn clean_synthetic_diagram_round_trips() {
        let b = generate(&GenParams { seed: 11, node_count: 10, ..Default::default() }).unwrap();
        let x = extract(&b.image, &PipelineConfig::default(), None, Some(&b.sidecar)).unwrap();
        let c = evaluate(&x.graph, &b.graph, 0.5).report();
        assert_eq!(c.node.f1, 1.0, "{c}");
        assert_eq!(c.edge.precision, 1.0, "{c}");
        assert_eq!(c.edge.recall, 1.0, "{c}");
    }
}
