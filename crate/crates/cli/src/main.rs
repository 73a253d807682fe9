//! `csp`: build, inspect, query and serve a conceptual-shift index.
//!
//! Exit codes: 0 success, 2 data error, 3 degenerate input sketch, 64 usage.
//! Failures print one `Code: message` line to standard error.

use std::fmt;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csp_core::cluster::{
    build_index, category_seed, corpus_vectors, elbow_curve, load_index, save_index, DEFAULT_K,
    FORMAT_VERSION,
};
use csp_core::engine::Novelty;
use csp_core::features::import_vectors;
use csp_core::ingest::{parse_sketch_line, scan_corpus, Corpus};
use csp_core::{fixture, load_embeddings, Error, Label};
use csp_service::{load_engine, request_id, serve, AppState, ArtifactPaths, ShiftReply};

const EXIT_DATA: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;
const EXIT_USAGE: u8 = 64;
const ELBOW_MAX_K: usize = 15;

#[derive(Parser)]
#[command(name = "csp", version, about = "Cross-category sketch retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a corpus and write an index file.
    BuildIndex(BuildArgs),
    /// Answer one query from the command line.
    Query(QueryArgs),
    /// Print index metadata, optionally with an elbow table.
    Inspect(InspectArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write the synthetic planted corpus with vectors and embeddings.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    limit_per_category: Option<usize>,
    /// Precomputed feature vectors; replaces the built-in extractor.
    #[arg(long)]
    vectors: Option<PathBuf>,
}

#[derive(Args)]
struct ArtifactArgs {
    #[arg(long, env = "CSP_INDEX")]
    index: PathBuf,
    #[arg(long, env = "CSP_EMBEDDINGS")]
    embeddings: PathBuf,
    #[arg(long, env = "CSP_CORPUS")]
    corpus: PathBuf,
}

impl ArtifactArgs {
    fn paths(&self) -> ArtifactPaths {
        ArtifactPaths {
            index: self.index.clone(),
            embeddings: self.embeddings.clone(),
            corpus: self.corpus.clone(),
        }
    }
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    artifacts: ArtifactArgs,
    /// File holding one corpus-format line.
    #[arg(long)]
    sketch: PathBuf,
    #[arg(long)]
    label: String,
    #[arg(long, value_parser = parse_novelty)]
    novelty: Novelty,
    #[arg(long)]
    json: bool,
}

fn parse_novelty(s: &str) -> Result<Novelty, String> {
    s.parse()
        .map_err(|_| "expected low, intermediate or high".to_string())
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    index: PathBuf,
    /// Recompute WCSS for k = 1..15 on this category's stored vectors.
    #[arg(long)]
    elbow: Option<String>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    artifacts: ArtifactArgs,
    #[arg(long, env = "CSP_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "CSP_HOST", default_value = "127.0.0.1")]
    host: std::net::IpAddr,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = fixture::SKETCHES_PER_CATEGORY)]
    per_category: usize,
}

/// A failure ready for printing.
struct Failure {
    code: String,
    message: String,
    exit: u8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match e {
            Error::DegenerateSketch | Error::EmptySketch | Error::InvalidSketch(_) => {
                EXIT_DEGENERATE
            }
            _ => EXIT_DATA,
        };
        Failure {
            code: e.code().to_string(),
            message: e.to_string(),
            exit,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

fn io_failure(context: impl fmt::Display, e: std::io::Error) -> Failure {
    Failure {
        code: "IoError".into(),
        message: format!("{context}: {e}"),
        exit: EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();

    let result = match cli.command {
        Command::BuildIndex(a) => build(a),
        Command::Query(a) => query(a),
        Command::Inspect(a) => inspect(a),
        Command::Serve(a) => run_server(a),
        Command::Fixture(a) => write_fixture(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit)
        }
    }
}

fn build(a: BuildArgs) -> Result<(), Failure> {
    let manifest = scan_corpus(&a.corpus)?;
    // Fail on missing label vectors before spending time on clustering.
    load_embeddings(&a.embeddings, manifest.labels())?;
    let corpus = Corpus::load(&manifest, a.limit_per_category)?;
    let imported = a
        .vectors
        .as_deref()
        .map(|p| import_vectors(p, &manifest))
        .transpose()?;
    let (spec, categories) = corpus_vectors(&corpus, imported.as_ref())?;
    let limit = a.limit_per_category.map(|l| l as u64);
    let index = build_index(categories, a.k, a.seed, spec, limit)?;
    save_index(&index, &a.out)?;

    println!(
        "extractor {} {} ({} dims), k={}, seed={}",
        index.extractor.kind,
        index.extractor.version,
        index.dimension(),
        index.k(),
        index.seed
    );
    for cat in &index.model.categories {
        let total: f64 = cat.wcss.iter().sum();
        println!(
            "{:<24} sketches={:<6} wcss={total:.6}",
            cat.label.as_str(),
            cat.members.len()
        );
    }
    println!("matrix {} x {}", index.matrix.len(), index.matrix.len());
    println!("wrote {}", a.out.display());
    Ok(())
}

fn read_sketch_line(path: &Path) -> Result<String, Failure> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Failure::from(Error::FileNotFound(path.to_path_buf())),
        _ => io_failure(path.display(), e),
    })?;
    text.lines()
        .find(|l| !l.trim().is_empty())
        .map(str::to_owned)
        .ok_or_else(|| {
            Error::InvalidSketch(format!("{} holds no sketch line", path.display())).into()
        })
}

fn query(a: QueryArgs) -> Result<(), Failure> {
    let engine = load_engine(&a.artifacts.paths())?;
    let label = Label::new(&a.label).map_err(|_| Error::UnknownCategory(a.label.clone()))?;
    if !engine.index().contains(&label) {
        return Err(Error::UnknownCategory(label.to_string()).into());
    }
    let sketch =
        parse_sketch_line(&read_sketch_line(&a.sketch)?, "query")?.with_label(label.clone());
    let response = engine.conceptual_shift(&sketch, a.novelty)?;

    let strokes: Vec<Vec<Vec<f64>>> = sketch
        .to_drawing()
        .into_iter()
        .map(|[xs, ys]| vec![to_f64(&xs), to_f64(&ys)])
        .collect();
    let reply = ShiftReply::new(
        &response,
        a.novelty,
        request_id(&label, a.novelty, &strokes),
    );
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&reply).expect("reply serializes")
        );
    } else {
        println!("target_label           {}", reply.target_label);
        println!("novelty                {}", reply.novelty);
        println!("visual_similarity      {:.6}", reply.visual_similarity);
        println!("conceptual_similarity  {:.6}", reply.conceptual_similarity);
        println!("composite              {:.6}", reply.composite);
        println!("fallback_used          {}", reply.fallback_used);
        println!("source_cluster         {}", response.source_cluster);
        println!("target_cluster         {}", response.candidate.target);
        println!(
            "sketch                 {} ({} strokes)",
            response.sketch.source_id(),
            reply.sketch.len()
        );
    }
    Ok(())
}

fn to_f64(v: &[i32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

fn inspect(a: InspectArgs) -> Result<(), Failure> {
    let index = load_index(&a.index)?;
    println!("format_version  {FORMAT_VERSION}");
    println!(
        "extractor       {} {} ({} dims)",
        index.extractor.kind,
        index.extractor.version,
        index.dimension()
    );
    println!("k               {}", index.k());
    println!("seed            {}", index.seed);
    match index.limit_per_category {
        Some(l) => println!("limit           {l}"),
        None => println!("limit           none"),
    }
    println!("categories      {}", index.model.categories.len());
    println!(
        "matrix          {} x {}",
        index.matrix.len(),
        index.matrix.len()
    );
    for cat in &index.model.categories {
        let total: f64 = cat.wcss.iter().sum();
        println!(
            "  {:<24} members={:<6} wcss={total:.6} iterations={}",
            cat.label.as_str(),
            cat.members.len(),
            cat.history.len()
        );
    }

    if let Some(name) = a.elbow {
        let label = Label::new(&name).map_err(|_| Error::UnknownCategory(name.clone()))?;
        let cat = index
            .model
            .category(&label)
            .ok_or_else(|| Error::UnknownCategory(name.clone()))?;
        let points = cat.member_vectors();
        let max_k = ELBOW_MAX_K.min(points.len());
        let curve = elbow_curve(&points, 1..=max_k, category_seed(index.seed, &label))?;
        println!("elbow {label}");
        println!("  {:>3}  {:>14}", "k", "wcss");
        for (k, w) in &curve.points {
            println!("  {k:>3}  {w:>14.6}");
        }
        if curve.defined {
            println!("  elbow at k={}", curve.elbow);
        } else {
            println!("  elbow undefined (fewer than 3 values of k)");
        }
    }
    Ok(())
}

fn run_server(a: ServeArgs) -> Result<(), Failure> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| io_failure("starting runtime", e))?;
    let addr = SocketAddr::new(a.host, a.port);
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure {
                code: "PortUnavailable".into(),
                message: format!("cannot bind {addr}: {e}"),
                exit: EXIT_DATA,
            })?;
        let local = listener
            .local_addr()
            .map_err(|e| io_failure("listener", e))?;
        eprintln!("listening on {local}");

        let state = AppState::empty();
        let loader_state = state.clone();
        let paths = a.artifacts.paths();
        let (fail_tx, fail_rx) = tokio::sync::oneshot::channel::<Failure>();
        tokio::task::spawn_blocking(move || match load_engine(&paths) {
            Ok(engine) => {
                eprintln!(
                    "loaded index with {} categories",
                    engine.index().model.categories.len()
                );
                loader_state.install(engine);
            }
            Err(e) => {
                let _ = fail_tx.send(e.into());
            }
        });

        tokio::select! {
            served = serve(listener, state) => served.map_err(|e| io_failure("serving", e)),
            Ok(failure) = fail_rx => Err(failure),
        }
    })
}

fn write_fixture(a: FixtureArgs) -> Result<(), Failure> {
    if a.per_category < fixture::BLOBS {
        return Err(Error::InvalidArgument(format!(
            "--per-category must be at least {}",
            fixture::BLOBS
        ))
        .into());
    }
    fixture::generate(a.seed, a.per_category).write(&a.out)?;
    println!(
        "wrote {} categories x {} sketches to {}",
        fixture::labels().len(),
        a.per_category,
        a.out.display()
    );
    Ok(())
}
