use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use amlgraph::config::PipelineConfig;
use amlgraph::export::{read_assignment, write_assignment, write_dot, write_weighted_edges};
use amlgraph::graph::GraphSnapshot;
use amlgraph::ingest::TimeWindow;
use amlgraph::louvain::Mode;
use amlgraph::pipeline::{self, Funnel, Input};
use amlgraph::synth::{generate, SynthConfig};
use amlgraph::thresholds::suggest_thresholds;
use amlgraph::{Error, Result};

#[derive(Parser)]
#[command(name = "amlgraph", version, about = "Transaction-graph community detection and laundering risk scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse transactions and write a pruned graph snapshot.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Filter, weight and partition a snapshot into communities.
    Detect {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score the communities of an assignment.
    Score {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Flat CSV copy of the report.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run every stage and write the report plus optional artifacts.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Weighted edge list of the filtered graph.
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long)]
        assignment: Option<PathBuf>,
        #[arg(long)]
        dot: Option<PathBuf>,
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Stage counts as JSON.
        #[arg(long)]
        run_log: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate a synthetic dataset with injected gangs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// JSON synthesis config; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        background_nodes: Option<usize>,
        #[arg(long)]
        background_txn_rate: Option<f64>,
    },
    /// Sweep filter thresholds and suggest values where the curves flatten.
    SuggestThresholds {
        #[arg(long)]
        graph: PathBuf,
        /// Curves as long-format CSV.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON pipeline config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "AMLGRAPH_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    window_start: Option<i64>,
    #[arg(long)]
    window_end: Option<i64>,
    #[arg(long)]
    v_min: Option<usize>,
    #[arg(long)]
    v_max: Option<usize>,
    #[arg(long)]
    d_hub: Option<u32>,
    #[arg(long)]
    n_hub_min: Option<usize>,
    #[arg(long)]
    iterate_prune: bool,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    entropy_bins: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        cfg.worker_count = self.workers.or(cfg.worker_count);
        match (self.window_start, self.window_end) {
            (Some(start), Some(end)) => cfg.window = Some(TimeWindow::new(start, end)?),
            (None, None) => {}
            _ => return Err(Error::Config("--window-start and --window-end go together".into())),
        }
        let f = &mut cfg.filter;
        f.v_min = self.v_min.unwrap_or(f.v_min);
        f.v_max = self.v_max.unwrap_or(f.v_max);
        f.d_hub = self.d_hub.unwrap_or(f.d_hub);
        f.n_hub_min = self.n_hub_min.unwrap_or(f.n_hub_min);
        cfg.iterate_prune |= self.iterate_prune;
        cfg.louvain.mode = self.mode.unwrap_or(cfg.louvain.mode);
        cfg.entropy_bins = self.entropy_bins.unwrap_or(cfg.entropy_bins);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { input, out, cfg } => {
            let cfg = cfg.resolve()?;
            pipeline::with_workers(cfg.worker_count, || -> Result<()> {
                let mut funnel = Funnel::default();
                let input = pipeline::load_input(&input, cfg.window, &mut funnel)?;
                pipeline::ingest_records(&input, &cfg, &mut funnel)?.write(&out)
            })?
            .map_err(|e| e.in_stage("ingest"))
        }
        Command::Detect { graph, out, cfg } => {
            let cfg = cfg.resolve()?;
            pipeline::with_workers(cfg.worker_count, || -> Result<()> {
                let snapshot = GraphSnapshot::read(&graph)?;
                let mut funnel = Funnel::default();
                let prepared = pipeline::prepare(&snapshot, &cfg, &mut funnel)?;
                let result = pipeline::detect(&prepared, &cfg, &mut funnel)?;
                let mut w = create(&out)?;
                write_assignment(&mut w, &prepared.filtered.graph, &result)?;
                w.flush().map_err(|e| Error::Io { path: out.clone(), source: e })
            })?
            .map_err(|e| e.in_stage("detect"))
        }
        Command::Score {
            graph,
            input,
            assignment,
            out,
            csv,
            cfg,
        } => {
            let cfg = cfg.resolve()?;
            pipeline::with_workers(cfg.worker_count, || -> Result<()> {
                let snapshot = GraphSnapshot::read(&graph)?;
                let mut funnel = Funnel::default();
                let records = pipeline::load_input(&input, Some(snapshot.graph.window), &mut funnel)?.records;
                let input = Input {
                    records,
                    window: snapshot.graph.window,
                };
                let prepared = pipeline::prepare(&snapshot, &cfg, &mut funnel)?;
                let file = File::open(&assignment).map_err(|e| Error::Io {
                    path: assignment.clone(),
                    source: e,
                })?;
                let labels = read_assignment(std::io::BufReader::new(file), &prepared.filtered.graph)?;
                let q = pipeline::assignment_modularity(&prepared, &labels)?;
                let report = pipeline::score(&prepared, &labels, q, &input, &cfg)?;
                write_text(&out, &report.to_json()?)?;
                if let Some(path) = csv {
                    report.write_csv(create(&path)?)?;
                }
                Ok(())
            })?
            .map_err(|e| e.in_stage("score"))
        }
        Command::Pipeline {
            input,
            out,
            csv,
            edges,
            assignment,
            dot,
            snapshot,
            run_log,
            cfg,
        } => {
            let cfg = cfg.resolve()?;
            let output = pipeline::with_workers(cfg.worker_count, || pipeline::run_pipeline(&input, &cfg))??;
            write_text(&out, &output.report.to_json()?)?;
            let g = &output.prepared.filtered.graph;
            if let Some(path) = csv {
                output.report.write_csv(create(&path)?)?;
            }
            if let Some(path) = edges {
                write_weighted_edges(create(&path)?, g)?;
            }
            if let Some(path) = assignment {
                write_assignment(create(&path)?, g, &output.louvain)?;
            }
            if let Some(path) = dot {
                write_dot(create(&path)?, g, &output.louvain.assignment)?;
            }
            if let Some(path) = snapshot {
                output.snapshot.write(&path)?;
            }
            if let Some(path) = run_log {
                write_text(&path, &(serde_json::to_string_pretty(&output.funnel)? + "\n"))?;
            }
            info!("funnel: {:?}", output.funnel);
            Ok(())
        }
        Command::Synth {
            out,
            labels,
            config,
            seed,
            background_nodes,
            background_txn_rate,
        } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    serde_json::from_str::<SynthConfig>(&text)
                        .map_err(|e| Error::Config(format!("invalid synth config: {e}")))?
                }
                None => SynthConfig::default(),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.background_nodes = background_nodes.unwrap_or(cfg.background_nodes);
            cfg.background_txn_rate = background_txn_rate.unwrap_or(cfg.background_txn_rate);
            let data = generate(&cfg)?;
            data.write_transactions(&out)?;
            data.write_labels(&labels)?;
            info!("wrote {} transactions over {} accounts", data.records.len(), data.labels.len());
            Ok(())
        }
        Command::SuggestThresholds { graph, out, cfg } => {
            let cfg = cfg.resolve()?;
            let snapshot = GraphSnapshot::read(&graph)?;
            let curves = suggest_thresholds(&snapshot.graph, &snapshot.components, &cfg.sweep)
                .map_err(|e| e.in_stage("suggest-thresholds"))?;
            curves.write_csv(create(&out)?)?;
            println!("{}", serde_json::to_string_pretty(&curves.suggested)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
