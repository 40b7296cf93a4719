use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pubsuggest_cli::pipeline::{self, default_workers, RunConfig, StageOptions};
use pubsuggest_cli::server::{self, Suggester, DEFAULT_PORT, MAX_LIMIT};
use pubsuggest_core::fpm::MiningParams;

#[derive(Parser)]
#[command(name = "pubsuggest", version, about = "Publisher place/name association rules from MARC records")]
struct Cli {
    /// Worker threads for every stage [default: logical cores]
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Log debug output
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MiningArgs {
    #[arg(long, default_value_t = MiningParams::DEFAULT_MIN_SUPPORT)]
    min_support: f64,
    #[arg(long, default_value_t = MiningParams::DEFAULT_MIN_CONFIDENCE)]
    min_confidence: f64,
}

#[derive(Args)]
struct RuleSource {
    /// Rule database (CSV, or line-delimited JSON when named *.jsonl)
    #[arg(long)]
    rules: PathBuf,
    /// Cluster table used to canonicalize query values; may be repeated
    #[arg(long)]
    clusters: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract place/publisher pairs from MARC files or directories
    Extract {
        #[arg(long)]
        out: PathBuf,
        /// Also read RDA 264 publication statements
        #[arg(long)]
        include_264: bool,
        #[arg(long)]
        resume: bool,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Clean and cluster pairs into canonical transactions
    Cluster {
        #[arg(long)]
        out: PathBuf,
        /// Prefix items with place: / name:
        #[arg(long)]
        role_prefix: bool,
        #[arg(long)]
        resume: bool,
        pairs: PathBuf,
    },
    /// Mine frequent itemsets, association rules and predictions
    Mine {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        mining: MiningArgs,
        #[arg(long)]
        resume: bool,
        transactions: PathBuf,
    },
    /// Run extract, cluster and mine into one directory
    Run {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        include_264: bool,
        #[arg(long)]
        role_prefix: bool,
        #[command(flatten)]
        mining: MiningArgs,
        /// Skip stages whose inputs and outputs are unchanged
        #[arg(long)]
        resume: bool,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Serve suggestions over HTTP
    Serve {
        #[command(flatten)]
        source: RuleSource,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        /// Origin allowed to call the service from a browser ("*" for any)
        #[arg(long)]
        cors_origin: Option<String>,
    },
    /// Answer one query without starting the service
    Predict {
        #[command(flatten)]
        source: RuleSource,
        #[arg(long, default_value_t = 10)]
        limit: usize,
        #[arg(required = true)]
        items: Vec<String>,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let workers = cli.workers.unwrap_or_else(default_workers).max(1);
    let opts = |resume| StageOptions { workers, resume };

    let manifest = match cli.command {
        Command::Extract { out, include_264, resume, inputs } => pipeline::extract(&inputs, &out, include_264, opts(resume))?,
        Command::Cluster { out, role_prefix, resume, pairs } => pipeline::cluster(&pairs, &out, role_prefix, opts(resume))?,
        Command::Mine { out, mining, resume, transactions } => {
            let params = MiningParams::new(mining.min_support, mining.min_confidence)?;
            pipeline::mine(&transactions, &out, params, opts(resume))?
        }
        Command::Run { out, include_264, role_prefix, mining, resume, inputs } => {
            let params = MiningParams::new(mining.min_support, mining.min_confidence)?;
            pipeline::run(&inputs, &out, RunConfig { include_264, role_prefix, params }, opts(resume))?
        }
        Command::Serve { source, host, port, cors_origin } => {
            let suggester = Arc::new(Suggester::load(&source.rules, &source.clusters)?);
            let app = server::router(suggester, cors_origin.as_deref())?;
            let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
            let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(workers).enable_all().build()?;
            return runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
                server::serve(listener, app).await
            });
        }
        Command::Predict { source, limit, items } => {
            anyhow::ensure!((1..=MAX_LIMIT).contains(&limit), "--limit must be between 1 and {MAX_LIMIT}");
            let suggester = Suggester::load(&source.rules, &source.clusters)?;
            println!("{}", serde_json::to_string_pretty(&suggester.query(&items, limit))?);
            return Ok(());
        }
    };
    println!("{}", serde_json::to_string_pretty(&manifest.counters)?);
    Ok(())
}
