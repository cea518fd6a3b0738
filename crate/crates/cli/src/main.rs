//! `iod`: ingest, index, search, research and evaluate a private corpus.
//!
//! Exit status: 0 on success (a clarification request included), 1 on a
//! usage error, 2 on a runtime error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use iod_core::agents::{run_research, ReportMode, ResearchEnv, SessionRecord};
use iod_core::bench::{gen_synthetic, run_task, SynthSpec};
use iod_core::digest::sha256_hex;
use iod_core::hetero_index::GraphRef;
use iod_core::llm_gateway::Gateway;
use iod_core::retrieval::{Filters, RetrievalQuery, Strategy, Tier};
use iod_core::workspace::Workspace;
use iod_server::{AppState, HttpOptions, ToolServer};

use config::{FileConfig, DEFAULT_WORKSPACE};

#[derive(Debug, Parser)]
#[command(
    name = "iod",
    version,
    about = "Deep research over private digital objects",
    arg_required_else_help = true
)]
struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Workspace directory [default: config `workspace`, else .iod].
    #[arg(long, short = 'w', global = true, env = "IOD_WORKSPACE")]
    workspace: Option<PathBuf>,
    /// Use the deterministic offline model gateway (same as IOD_MOCK=1).
    #[arg(long, global = true)]
    mock: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TierArg {
    Object,
    Chunk,
    Fine,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Keyword,
    Vector,
    Graph,
    Hybrid,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest every supported file under a directory into one domain.
    Ingest {
        dir: PathBuf,
        #[arg(long)]
        domain: String,
    },
    /// Refine ingested objects and build the index.
    Index,
    /// Search one tier; prints `pid<TAB>score` per hit.
    Search {
        text: String,
        #[arg(long, value_enum, default_value = "chunk")]
        tier: TierArg,
        #[arg(long, value_enum, default_value = "hybrid")]
        strategy: StrategyArg,
        #[arg(long, short = 'k', default_value_t = 10)]
        k: usize,
        #[arg(long)]
        domain: Option<String>,
        /// Print the full result records as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Answer a question from the corpus.
    Ask {
        question: String,
        #[arg(long)]
        json: bool,
    },
    /// Write a cited research report on a topic.
    Report {
        topic: String,
        #[arg(long)]
        json: bool,
    },
    /// Score a benchmark task (1, 2 or 3) on a JSONL dataset.
    Bench {
        task: u8,
        dataset: PathBuf,
        /// Write `{out}.json` and `{out}.md`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, short = 'k')]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve the HTTP API (`--http`) and/or the JSON-RPC tools (`--tools`;
    /// stdio alone, `POST /rpc` with `--http`).
    Serve {
        #[arg(long, value_name = "ADDR")]
        http: Option<String>,
        #[arg(long)]
        tools: bool,
        /// Static files (the web UI) served for other paths.
        #[arg(long = "static", value_name = "DIR")]
        static_dir: Option<PathBuf>,
    },
    /// Generate the seeded synthetic corpus and its task datasets.
    GenSynthetic {
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        domains: usize,
        #[arg(long, default_value_t = 10)]
        docs: usize,
        #[arg(long, default_value_t = 20)]
        questions: usize,
    },
}

struct Ctx {
    cfg: FileConfig,
    root: PathBuf,
}

impl Ctx {
    fn workspace(&self) -> anyhow::Result<Workspace> {
        let wc = self.cfg.workspace_config();
        let gateway = Arc::new(Gateway::new(&wc.gateway).context("configuring the model gateway")?);
        Workspace::open(&self.root, gateway, wc).with_context(|| format!("opening workspace {}", self.root.display()))
    }

    fn env(&self) -> anyhow::Result<ResearchEnv> {
        let ws = self.workspace()?;
        let retriever = ws.retriever().context("loading the index (run `iod index` first)")?;
        Ok(ResearchEnv {
            retriever: Arc::new(retriever),
            store: ws.registry().clone(),
            config: self.cfg.agents.clone(),
        })
    }

    fn log_dir(&self) -> PathBuf {
        self.cfg.log_dir.clone().unwrap_or_else(|| self.root.join("sessions"))
    }
}

fn print_session(rec: &SessionRecord, json: bool) -> anyhow::Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(rec)?);
        return Ok(());
    }
    if let Some(c) = &rec.clarification {
        println!("Clarification needed: {}", c.question);
        for m in &c.missing {
            println!("- {m}");
        }
        return Ok(());
    }
    match &rec.report {
        Some(r) => print!("{}", r.to_markdown()),
        None => bail!("session ended in state {} without a report", rec.state),
    }
    Ok(())
}

fn research(ctx: &Ctx, query: &str, mode: ReportMode, json: bool) -> anyhow::Result<()> {
    let env = ctx.env()?;
    let id = format!("{}-{}", mode.as_str(), &sha256_hex(query.as_bytes())[..12]);
    let rec = run_research(query, &env, &id, Some(&ctx.log_dir()), Some(mode))?;
    print_session(&rec, json)
}

fn hit_id(r: &GraphRef) -> String {
    match r.pid() {
        Some(p) => p.to_string(),
        None => r.to_string(),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = FileConfig::load(cli.config.as_deref())?;
    cfg.gateway.mock |= cli.mock;
    let root = cli
        .workspace
        .or_else(|| cfg.workspace.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_WORKSPACE));
    let ctx = Ctx { cfg, root };
    match cli.command {
        Command::Ingest { dir, domain } => {
            let s = ctx.workspace()?.ingest_dir(&dir, &domain)?;
            println!("ingested {} objects, {} chunks into {domain}", s.objects, s.chunks);
        }
        Command::Index => {
            let m = ctx.workspace()?.build_index()?;
            println!(
                "indexed {} objects, {} chunks, {} nodes, {} edges, {} facts, {} vectors (dim {})",
                m.objects, m.chunks, m.nodes, m.edges, m.facts, m.embeddings, m.dim
            );
        }
        Command::Search {
            text,
            tier,
            strategy,
            k,
            domain,
            json,
        } => {
            let env = ctx.env()?;
            let tier = match tier {
                TierArg::Object => Tier::Object,
                TierArg::Chunk => Tier::Chunk,
                TierArg::Fine => Tier::Fine,
            };
            let strategy = match strategy {
                StrategyArg::Keyword => Strategy::Keyword,
                StrategyArg::Vector => Strategy::Vector,
                StrategyArg::Graph => Strategy::Graph,
                StrategyArg::Hybrid => Strategy::Hybrid,
            };
            let mut q = RetrievalQuery::new(&text, tier, strategy).with_top_k(k);
            q.filters = Filters {
                domain,
                ..Filters::default()
            };
            let hits = env.retriever.search(&q)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&hits)?);
            } else {
                for h in hits {
                    println!("{}\t{:.6}", hit_id(&h.item_ref), h.score);
                }
            }
        }
        Command::Ask { question, json } => research(&ctx, &question, ReportMode::DirectAnswer, json)?,
        Command::Report { topic, json } => research(&ctx, &topic, ReportMode::Report, json)?,
        Command::Bench {
            task,
            dataset,
            out,
            k,
            seed,
        } => {
            let env = ctx.env()?;
            let mut bc = ctx.cfg.bench.clone();
            if let Some(k) = k {
                bc.k = k;
            }
            bc.seed = seed.or(bc.seed);
            let report = run_task(task, &dataset, &env, &bc)?;
            print!("{}", report.render_table());
            if let Some(stem) = out {
                if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                report.write(&stem)?;
            }
        }
        Command::Serve {
            http,
            tools,
            static_dir,
        } => serve(&ctx, http, tools, static_dir)?,
        Command::GenSynthetic {
            out,
            seed,
            domains,
            docs,
            questions,
        } => {
            let spec = SynthSpec {
                domains,
                docs_per_domain: docs,
                questions,
            };
            let m = gen_synthetic(seed, spec, &out)?;
            println!(
                "generated {} documents in {} domains under {}",
                m.docs.len(),
                m.domains.len(),
                out.display()
            );
            for d in &m.domains {
                println!("{d}\t{}", m.corpus_dir(Path::new(&out), d).display());
            }
        }
    }
    Ok(())
}

fn serve(ctx: &Ctx, http: Option<String>, tools: bool, static_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let env = ctx.env()?;
    match http {
        None if tools => {
            ToolServer::new(env.retriever.clone()).serve_stdio()?;
            Ok(())
        }
        None => bail!("serve needs --http <ADDR>, --tools, or both"),
        Some(addr) => {
            let options = HttpOptions {
                tools,
                log_dir: Some(ctx.log_dir()),
                static_dir,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(iod_server::serve(&addr, AppState::new(env, options)))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("IOD_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
