//! The published JSON schemas accept what the tools write and reject what
//! the parsers reject.

use std::path::{Path, PathBuf};

use jsonschema::{Registry, Validator};
use serde_json::{json, Value};

use flowextract::config::PipelineConfig;
use flowextract::synthgen::{generate_corpus, GenParams, Tier};

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn load(name: &str) -> Value {
    let p = schema_dir().join(name);
    serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn validator(name: &str) -> Validator {
    let graph = load("flowgraph.schema.json");
    let registry = Registry::new().add("urn:flowextract:schema:flowgraph", graph).unwrap().prepare().unwrap();
    jsonschema::options().with_registry(&registry).build(&load(name)).unwrap()
}

fn check(v: &Validator, doc: &Value, what: &str) {
    let errs: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errs.is_empty(), "{what}: {errs:?}");
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn generated_and_extracted_documents_conform() {
    let tmp = tempfile::tempdir().unwrap();
    let tiers = [
        Tier::new("clean", GenParams { branch_prob: 1.0, ..Default::default() }).with_node_range(6, 10),
        Tier::new("noisy", GenParams { noise: 0.02, occlusion_prob: 0.5, ..Default::default() }).with_node_range(6, 10),
    ];
    let m = generate_corpus(tmp.path(), 9, 3, &tiers).unwrap();
    let (graph, ocr, manifest) = (validator("flowgraph.schema.json"), validator("ocr.schema.json"), validator("manifest.schema.json"));
    check(&manifest, &read(&tmp.path().join("manifest.json")), "manifest");
    let cfg = PipelineConfig::default();
    for e in &m.instances {
        check(&graph, &read(&tmp.path().join(&e.truth)), &e.truth);
        check(&ocr, &read(&tmp.path().join(&e.ocr)), &e.ocr);
        let img = flowextract::raster::load_image(&tmp.path().join(&e.image)).unwrap();
        let sidecar = flowextract::labels::OcrSidecar::load(&tmp.path().join(&e.ocr)).unwrap();
        let mut x = flowextract::pipeline::extract(&img, &cfg, None, Some(&sidecar)).unwrap().graph;
        check(&graph, &serde_json::from_slice(&x.serialize()).unwrap(), &e.image);
        x.context = Some(Default::default());
        check(&graph, &serde_json::from_slice(&x.serialize()).unwrap(), "json-ld");
    }
}

#[test]
fn config_schema_lists_exactly_the_known_keys() {
    let schema = load("config.schema.json");
    let mut listed: Vec<&String> = schema["properties"].as_object().unwrap().keys().collect();
    let defaults = serde_json::to_value(PipelineConfig::default()).unwrap();
    let mut known: Vec<&String> = defaults.as_object().unwrap().keys().collect();
    listed.sort();
    known.sort();
    assert_eq!(listed, known);

    let v = validator("config.schema.json");
    check(&v, &defaults, "defaults");
    check(&v, &json!({}), "empty");
    for bad in [json!({"theta_align_deg": 400}), json!({"no_such_key": 1}), json!({"denoise": "blur"}), json!({"iou_threshold": 1})] {
        assert!(!v.is_valid(&bad), "{bad}");
        assert!(PipelineConfig::from_json(&bad.to_string()).is_err(), "{bad}");
    }
}

#[test]
fn detections_schema_agrees_with_the_parser() {
    let v = validator("detections.schema.json");
    let good = json!({"detections": [
        {"id": "n1", "class": "decision", "bbox": [0, 0, 10, 10], "confidence": 0.5},
        {"id": "a1", "class": "arrowhead", "bbox": [3, 4, 5, 6], "confidence": 1.0}
    ]});
    check(&v, &good, "good");
    assert!(flowextract::nodedetect::parse_detections(&good.to_string()).is_ok());
    for bad in [
        json!({"detections": [{"id": "n1", "class": "database", "bbox": [0, 0, 10, 10], "confidence": 0.5}]}),
        json!({"detections": [{"id": "n1", "class": "process", "bbox": [0, 0, -1, 10], "confidence": 0.5}]}),
        json!({"detections": [{"id": "n1", "class": "process", "bbox": [0, 0, 10, 10]}]}),
        json!({"detections": [{"id": "n1", "class": "process", "bbox": [0, 0, 10, 10], "confidence": 2}]}),
        json!({}),
    ] {
        assert!(!v.is_valid(&bad), "{bad}");
        assert!(flowextract::nodedetect::parse_detections(&bad.to_string()).is_err(), "{bad}");
    }
}

#[test]
fn graph_schema_rejects_what_the_parser_rejects() {
    let v = validator("flowgraph.schema.json");
    let golden: Value = serde_json::from_str(include_str!("../../core/tests/golden/empty_document.json")).unwrap();
    check(&v, &golden, "golden");
    let node = json!({"id": "n001", "type": "process", "bbox": [0, 0, 4, 4], "text": ""});
    for bad in [
        json!({"nodes": [], "edges": []}),
        json!({"nodes": [node], "edges": [], "diagnostics": [], "extra": true}),
        json!({"nodes": [{"id": "n001", "type": "hexagon", "bbox": [0, 0, 4, 4], "text": ""}], "edges": [], "diagnostics": []}),
        json!({"nodes": [node], "edges": [{"source": "n001", "target": "n001", "type": "jump"}], "diagnostics": []}),
        json!({"nodes": [node], "edges": [{"source": "n001", "target": "n001", "type": "flow", "label": "yes"}], "diagnostics": []}),
        json!({"nodes": [{"id": "n001", "type": "process", "bbox": [0, 0, 0, 4], "text": ""}], "edges": [], "diagnostics": []}),
    ] {
        assert!(!v.is_valid(&bad), "{bad}");
        assert!(flowextract::graph::FlowGraph::parse(bad.to_string().as_bytes()).is_err(), "{bad}");
    }
}
