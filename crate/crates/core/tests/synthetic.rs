//! Pipeline stages checked against synthgen ground truth on noise-free input.

use std::collections::HashMap;

use flowextract::arrowhead::{assign_target, detect_arrowheads};
use flowextract::config::PipelineConfig;
use flowextract::edgetrace::NotTraced;
use flowextract::eval::{evaluate, match_boxes, match_tips};
use flowextract::geometry::{point_at_arc_length, polyline_length, polyline_midpoint};
use flowextract::graph::ArrowheadRecord;
use flowextract::nodedetect::detect_nodes_geometric;
use flowextract::pipeline::{extract, front};
use flowextract::synthgen::{generate, GenParams, GroundTruthBundle, OcclusionMode, ARROW_LENGTH};
use flowextract::{Point, Segment};

fn bundle(seed: u64) -> GroundTruthBundle {
    generate(&GenParams { seed, node_count: 8 + (seed % 8) as usize, ..Default::default() }).unwrap()
}

const SEEDS: std::ops::Range<u64> = 100..112;

#[test]
fn node_detection_recovers_every_node() {
    let cfg = PipelineConfig::default();
    for seed in SEEDS {
        let b = bundle(seed);
        let f = front(&b.image, &cfg, None, None);
        let boxes: Vec<_> = f.nodes.iter().map(|n| n.bbox).collect();
        let m = match_boxes(&boxes, &b.node_boxes(), 0.5);
        assert_eq!(m.pairs.len(), b.graph.nodes.len(), "seed {seed}");
        for &(p, g, _) in &m.pairs {
            assert_eq!(f.nodes[p].class, b.graph.nodes[g].class, "seed {seed}");
        }
        for n in &f.nodes {
            assert!(n.bbox.right() <= b.image.width() && n.bbox.bottom() <= b.image.height());
            assert!(n.bbox.area() >= 400);
        }
        assert_eq!(detect_nodes_geometric(&f.binary, &cfg.node_params()), detect_nodes_geometric(&f.binary, &cfg.node_params()));
    }
}

#[test]
fn arrowheads_found_and_pointing_at_their_targets() {
    let cfg = PipelineConfig::default();
    let (mut truth, mut found) = (0, 0);
    for seed in SEEDS {
        let b = bundle(seed);
        let f = front(&b.image, &cfg, None, None);
        let pred: Vec<ArrowheadRecord> = f.arrowheads.iter().map(ArrowheadRecord::from).collect();
        let m = match_tips(&pred, b.arrowheads(), 3.0);
        truth += b.arrowheads().len();
        found += m.pairs.len();
        let target_of: HashMap<&str, &str> =
            b.graph.edges.iter().map(|e| (e.arrowhead.as_deref().unwrap(), e.target.as_str())).collect();
        for &(p, g, _) in &m.pairs {
            let want = target_of[b.arrowheads()[g].id.as_str()];
            let got = assign_target(&f.arrowheads[p], &f.nodes, cfg.trace_params().target_tol).unwrap();
            let got_box = f.nodes.iter().find(|n| n.id == got).unwrap().bbox;
            let want_box = b.graph.node(want).unwrap().bbox;
            assert!(flowextract::eval::iou(&got_box, &want_box) > 0.5, "seed {seed}");
        }
        for a in &f.arrowheads {
            for n in &f.nodes {
                let r = n.bbox.to_rect::<f64>().grow(-1.0);
                let ar = a.bbox.to_rect::<f64>();
                assert!(r.intersection(&ar).is_none(), "seed {seed}: {} inside {}", a.id, n.id);
            }
        }
    }
    assert!(found as f64 >= 0.95 * truth as f64, "{found}/{truth}");
}

#[test]
fn six_arrowhead_diagram() {
    let cfg = PipelineConfig::default();
    let b = (0..200)
        .map(|seed| generate(&GenParams { seed, node_count: 7, ..Default::default() }).unwrap())
        .find(|b| b.arrowheads().len() == 6)
        .unwrap();
    let f = front(&b.image, &cfg, None, None);
    assert_eq!(f.arrowheads.len(), 6);
    let pred: Vec<ArrowheadRecord> = f.arrowheads.iter().map(ArrowheadRecord::from).collect();
    assert_eq!(match_tips(&pred, b.arrowheads(), 3.0).pairs.len(), 6);
}

fn near_segment(p: Point, segs: &[Segment], tol: f64) -> bool {
    segs.iter().any(|s| s.distance_to_point(p) <= tol)
}

#[test]
fn segments_cover_connectors_and_paths_follow_segments() {
    let cfg = PipelineConfig::default();
    let eps = cfg.trace_params().join_eps;
    for seed in SEEDS {
        let b = bundle(seed);
        let x = extract(&b.image, &cfg, None, Some(&b.sidecar)).unwrap();
        for e in &b.graph.edges {
            // Stroke only: the arrowhead itself is not a line.
            let len = polyline_length(&e.path) - ARROW_LENGTH as f64;
            let steps = len.floor() as usize;
            let covered = (0..=steps)
                .filter(|&i| near_segment(point_at_arc_length(&e.path, i as f64).unwrap(), &x.segments, 2.0))
                .count();
            let frac = covered as f64 / (steps + 1) as f64;
            // Ends inside the node masks are invisible to line detection.
            let hidden = 2.0 * (cfg.mask_dilation as f64 + 2.0) / len;
            assert!(frac + hidden >= 0.95, "seed {seed}: {} -> {} covered {frac:.3}", e.source, e.target);
        }
        for e in &x.trace.edges {
            let (_, body) = e.path.split_last().unwrap();
            for &p in body {
                assert!(near_segment(p, &x.segments, eps), "seed {seed}: vertex {p:?} off the segment graph");
            }
            assert_ne!(e.source, e.target, "seed {seed}");
        }
    }
}

#[test]
fn every_label_token_is_solvable() {
    let max = PipelineConfig::default().label_max_dist;
    for seed in SEEDS {
        let b = generate(&GenParams { seed, node_count: 12, branch_prob: 1.0, ..Default::default() }).unwrap();
        let tokens: Vec<Point> = b
            .sidecar
            .tokens
            .iter()
            .filter(|t| matches!(t.text.to_lowercase().as_str(), "ja" | "nee"))
            .map(|t| t.center)
            .collect();
        let labeled: Vec<_> = b.graph.edges.iter().filter(|e| e.label.is_some()).collect();
        assert_eq!(tokens.len(), labeled.len());
        for e in labeled {
            let mid = polyline_midpoint(&e.path).unwrap();
            assert!(tokens.iter().any(|t| t.distance(mid) <= max), "seed {seed}");
        }
    }
}

#[test]
fn erased_connector_loses_only_its_own_edge() {
    let cfg = PipelineConfig::default();
    let p = GenParams { seed: 5, node_count: 10, occlusion_prob: 0.3, occlusion_modes: vec![OcclusionMode::ConnectorGap], ..Default::default() };
    let b = generate(&p).unwrap();
    let occluded = b.arrowheads().iter().filter(|h| h.occluded).count();
    assert!(occluded > 0);
    let x = extract(&b.image, &cfg, None, Some(&b.sidecar)).unwrap();
    assert_eq!(x.trace.failures.len(), occluded);
    assert!(x.trace.failures.iter().all(|(_, r)| *r == NotTraced::NoSourceReached));
    let c = evaluate(&x.graph, &b.graph, 0.5);
    assert_eq!(c.edges.matched, c.edges.predicted);
    assert_eq!(c.edges.matched + occluded, c.edges.truth);
}

#[test]
fn far_blob_does_not_disturb_detections() {
    let cfg = PipelineConfig::default();
    let b = bundle(3);
    let before = front(&b.image, &cfg, None, None);
    let mut img = b.image.clone();
    // Irregular blob in the bottom-right corner margin, away from every line.
    let (w, h) = (img.width(), img.height());
    for (dx, dy) in [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (5, 1), (0, 2), (4, 2), (5, 2), (3, 3), (4, 3)] {
        for k in 0..4 {
            img.set(w - 30 + dx * 2 + k % 2, h - 30 + dy * 2 + k / 2, 0);
        }
    }
    let after = front(&img, &cfg, None, None);
    assert_eq!(before.nodes, after.nodes);
    assert_eq!(before.arrowheads, after.arrowheads);
    assert_eq!(detect_arrowheads(&after.binary, &after.nodes, &cfg.arrow_params()), after.arrowheads);
}

#[test]
fn generation_and_extraction_are_deterministic() {
    let p = GenParams { seed: 77, node_count: 12, noise: 0.01, occlusion_prob: 0.3, ..Default::default() };
    let (a, b) = (generate(&p).unwrap(), generate(&p).unwrap());
    assert_eq!(a.image.to_png_bytes().unwrap(), b.image.to_png_bytes().unwrap());
    assert_eq!(a.graph.serialize(), b.graph.serialize());
    assert_eq!(a.sidecar.to_json(), b.sidecar.to_json());
    let cfg = PipelineConfig::default();
    let x = extract(&a.image, &cfg, None, Some(&a.sidecar)).unwrap();
    let y = extract(&b.image, &cfg, None, Some(&b.sidecar)).unwrap();
    assert_eq!(x.graph.serialize(), y.graph.serialize());
    assert_eq!(x.segments, y.segments);
}
