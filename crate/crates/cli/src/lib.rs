//! The `flowextract` command line: extract, eval, synth and serve.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Map;

use flowextract::config::{ConfigError, PipelineConfig};
use flowextract::eval::{evaluate, EvalCounts};
use flowextract::graph::FlowGraph;
use flowextract::labels::OcrSidecar;
use flowextract::nodedetect::ingest_detections;
use flowextract::pipeline::extract;
use flowextract::raster::load_image;
use flowextract::synthgen::{generate_corpus, GenError, GenParams, Tier};

pub mod serve;

pub const CONFIG_ENV: &str = "FLOWEXTRACT_CONFIG";

/// Exit status: 0 success, 1 internal error, 2 input error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: u8,
    pub stage: &'static str,
    pub message: String,
}

impl Failure {
    pub fn input(stage: &'static str, message: impl Into<String>) -> Self {
        Failure { code: 2, stage, message: message.into() }
    }

    pub fn internal(stage: &'static str, message: impl Into<String>) -> Self {
        Failure { code: 1, stage, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error [{}]: {}", self.stage, self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "flowextract", version, about = "Flowchart images to directed graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract a graph from one image (or every PNG in a directory with --batch).
    Extract(ExtractArgs),
    /// Score predicted graphs against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic corpus.
    Synth(SynthArgs),
    /// Serve extraction bundles to the review UI.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON config file; falls back to $FLOWEXTRACT_CONFIG.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set theta_align_deg=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Image file, or a directory of PNGs with --batch.
    pub image: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// External detector output used instead of geometric node detection.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// OCR sidecar with node text and decision labels.
    #[arg(long)]
    pub ocr: Option<PathBuf>,
    /// Output file (directory with --batch); stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Print node, edge and diagnostic counts to stderr.
    #[arg(long)]
    pub summary: bool,
    /// Add the JSON-LD context.
    #[arg(long)]
    pub jsonld: bool,
    /// Treat IMAGE as a directory; `<id>.ocr.json` and `<id>.detections.json`
    /// next to each `<id>.png` are picked up and `<id>.graph.json` written.
    #[arg(long)]
    pub batch: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted graph file, or a directory of `<id>.graph.json`.
    pub pred: PathBuf,
    /// Truth graph file, or a directory of `<id>.truth.json`.
    pub truth: PathBuf,
    /// Node IoU threshold (strictly greater counts as a match).
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Also write the JSON report here.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(short, long)]
    pub out: PathBuf,
    /// Base seed; instance i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Fixed node count per diagram (overrides --node-min/--node-max).
    #[arg(long)]
    pub node_count: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub node_min: usize,
    #[arg(long, default_value_t = 15)]
    pub node_max: usize,
    #[arg(long, default_value_t = 0.6)]
    pub branch_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub occlusion_prob: f64,
    #[arg(long, default_value_t = 1200)]
    pub width: u32,
    #[arg(long, default_value_t = 1600)]
    pub height: u32,
    #[arg(long, default_value_t = 2)]
    pub line_thickness: u32,
    #[arg(long, default_value = "default")]
    pub tier_name: String,
    /// JSON list of tiers (`{"name", "params", "node_count": [lo, hi]}`),
    /// replacing the single tier described by the other flags.
    #[arg(long)]
    pub tiers: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory of `<id>.png` + `<id>.graph.json` (or `<id>.json`) pairs.
    pub dir: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Built review UI assets served at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Extract(a) => cmd_extract(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Serve(a) => serve::cmd_serve(&a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{f}");
            f.code
        }
    }
}

fn config_failure(e: ConfigError) -> Failure {
    Failure::input("config", e.to_string())
}

/// Flags over file over defaults. The file comes from `--config`, else
/// from the environment.
pub fn load_config(args: &ConfigArgs) -> Result<PipelineConfig, Failure> {
    let path = args.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut layers = Vec::new();
    if let Some(p) = path {
        layers.push(PipelineConfig::load_layer(&p).map_err(config_failure)?);
    }
    let mut flags = Map::new();
    for s in &args.set {
        let (k, v) = PipelineConfig::parse_override(s).map_err(config_failure)?;
        flags.insert(k, v);
    }
    layers.push(flags);
    PipelineConfig::from_layers(&layers).map_err(config_failure)
}

/// Runs the pipeline on one image file.
pub fn extract_file(
    image: &Path,
    cfg: &PipelineConfig,
    detections: Option<&Path>,
    ocr: Option<&Path>,
    jsonld: bool,
) -> Result<FlowGraph, Failure> {
    let img = load_image(image).map_err(|e| Failure::input("raster", format!("cannot read image {}: {e}", image.display())))?;
    let dets = detections
        .map(|p| ingest_detections(p).map_err(|e| Failure::input("nodedetect", format!("{}: {e}", p.display()))))
        .transpose()?;
    let sidecar = ocr
        .map(|p| OcrSidecar::load(p).map_err(|e| Failure::input("labels", format!("{}: {e}", p.display()))))
        .transpose()?;
    let x = extract(&img, cfg, dets.as_ref(), sidecar.as_ref()).map_err(|e| Failure::internal("pipeline", e.to_string()))?;
    Ok(x.graph.with_jsonld(jsonld))
}

fn write_file(path: &Path, bytes: &[u8], stage: &'static str) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::internal(stage, format!("cannot write {}: {e}", path.display())))
}

fn summary_line(name: &str, g: &FlowGraph) -> String {
    format!("{name}: {} nodes, {} edges, {} diagnostics", g.nodes.len(), g.edges.len(), g.diagnostics.len())
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let rd = std::fs::read_dir(dir).map_err(|e| Failure::input("raster", format!("cannot list {}: {e}", dir.display())))?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn cmd_extract(a: &ExtractArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config)?;
    if !a.batch {
        let g = extract_file(&a.image, &cfg, a.detections.as_deref(), a.ocr.as_deref(), a.jsonld)?;
        let bytes = g.serialize();
        match &a.output {
            Some(p) => write_file(p, &bytes, "graph")?,
            None => {
                use std::io::Write;
                std::io::stdout().write_all(&bytes).map_err(|e| Failure::internal("graph", e.to_string()))?;
            }
        }
        if a.summary {
            eprintln!("{}", summary_line(&a.image.display().to_string(), &g));
        }
        return Ok(());
    }
    if a.detections.is_some() || a.ocr.is_some() {
        return Err(Failure::input("config", "--detections/--ocr cannot be combined with --batch; place <id>.detections.json / <id>.ocr.json next to each image"));
    }
    let out_dir = a.output.clone().unwrap_or_else(|| a.image.clone());
    std::fs::create_dir_all(&out_dir).map_err(|e| Failure::internal("graph", format!("cannot create {}: {e}", out_dir.display())))?;
    let mut worst: Option<Failure> = None;
    let images = png_files(&a.image)?;
    let mut failed = 0;
    for img in &images {
        let id = stem(&img);
        let side = |suffix: &str| {
            let p = a.image.join(format!("{id}.{suffix}.json"));
            p.exists().then_some(p)
        };
        let (dets, ocr) = (side("detections"), side("ocr"));
        match extract_file(img, &cfg, dets.as_deref(), ocr.as_deref(), a.jsonld) {
            Ok(g) => {
                write_file(&out_dir.join(format!("{id}.graph.json")), &g.serialize(), "graph")?;
                if a.summary {
                    eprintln!("{}", summary_line(&id, &g));
                }
            }
            Err(f) => {
                eprintln!("{id}: {f}");
                failed += 1;
                if worst.as_ref().is_none_or(|w| f.code > w.code) {
                    worst = Some(f);
                }
            }
        }
    }
    match worst {
        Some(f) => Err(Failure { message: format!("{failed} of {} images failed", images.len()), ..f }),
        None => Ok(()),
    }
}

fn load_graph(path: &Path) -> Result<FlowGraph, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::input("eval", format!("cannot read {}: {e}", path.display())))?;
    FlowGraph::parse(&bytes).map_err(|e| Failure::input("eval", format!("schema violation in {}: {e}", path.display())))
}

/// `<id>` to path for files named `<id><suffix>` in `dir`.
fn ids_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<(String, PathBuf)>, Failure> {
    let rd = std::fs::read_dir(dir).map_err(|e| Failure::input("eval", format!("cannot list {}: {e}", dir.display())))?;
    let mut out: Vec<(String, PathBuf)> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?.to_string();
            name.strip_suffix(suffix).map(|id| (id.to_string(), p.clone()))
        })
        .collect();
    out.sort();
    Ok(out)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), Failure> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(Failure::input("eval", format!("threshold {} is outside (0, 1)", a.threshold)));
    }
    let pairs: Vec<(PathBuf, PathBuf)> = match (a.pred.is_dir(), a.truth.is_dir()) {
        (false, false) => vec![(a.pred.clone(), a.truth.clone())],
        (true, true) => {
            let pred = ids_with_suffix(&a.pred, ".graph.json")?;
            let truth = ids_with_suffix(&a.truth, ".truth.json")?;
            let pid: Vec<&String> = pred.iter().map(|p| &p.0).collect();
            let tid: Vec<&String> = truth.iter().map(|p| &p.0).collect();
            if pid != tid {
                return Err(Failure::input(
                    "eval",
                    format!("mismatched corpora: {} predictions vs {} truth files (ids must match)", pid.len(), tid.len()),
                ));
            }
            pred.into_iter().zip(truth).map(|(p, t)| (p.1, t.1)).collect()
        }
        _ => return Err(Failure::input("eval", "pred and truth must both be files or both be directories")),
    };
    let mut total = EvalCounts::default();
    for (p, t) in &pairs {
        let (pg, tg) = (load_graph(p)?, load_graph(t)?);
        total.add(&evaluate(&pg, &tg, a.threshold));
    }
    let report = total.report();
    println!("{report}");
    print!("{}", report.to_json());
    if let Some(o) = &a.output {
        write_file(o, report.to_json().as_bytes(), "eval")?;
    }
    Ok(())
}

fn gen_failure(e: GenError) -> Failure {
    match e {
        GenError::Io { .. } => Failure::internal("synthgen", e.to_string()),
        _ => Failure::input("synthgen", e.to_string()),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), Failure> {
    let tiers = match &a.tiers {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::input("synthgen", format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<Vec<Tier>>(&text).map_err(|e| Failure::input("synthgen", format!("{}: {e}", p.display())))?
        }
        None => {
            let (lo, hi) = match a.node_count {
                Some(n) => (n, n),
                None => (a.node_min, a.node_max),
            };
            let params = GenParams {
                node_count: lo,
                branch_prob: a.branch_prob,
                noise: a.noise,
                occlusion_prob: a.occlusion_prob,
                width: a.width,
                height: a.height,
                line_thickness: a.line_thickness,
                ..GenParams::default()
            };
            vec![Tier::new(a.tier_name.clone(), params).with_node_range(lo, hi)]
        }
    };
    let m = generate_corpus(&a.out, a.seed, a.count, &tiers).map_err(gen_failure)?;
    eprintln!("wrote {} diagrams to {}", m.instances.len(), a.out.display());
    Ok(())
}
