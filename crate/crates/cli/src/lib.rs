//! `hexembed` command line: a staged pipeline over a file-based workspace.

pub mod config;
pub mod error;
pub mod export;
pub mod stages;
pub mod tables;
pub mod workspace;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{Config, Overrides};
pub use error::CliError;
use stages::ArithRequest;
use workspace::Workspace;

#[derive(Debug, Parser)]
#[command(name = "hexembed", version, about = "Road-infrastructure embeddings for hexagonal microregions")]
pub struct Cli {
    /// Directory holding the manifest and every stage artifact.
    #[arg(long, global = true, default_value = ".")]
    pub workspace: PathBuf,
    /// JSON config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Hexagon resolution [default: 9]
    #[arg(long, global = true)]
    pub resolution: Option<u8>,
    /// Feature schema JSON [default: built-in 88 columns]
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    /// Clusters in the flat cut [default: 8]
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// t-SNE perplexity [default: 100]
    #[arg(long, global = true)]
    pub perplexity: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse per-city GeoJSON into roads.jsonl
    Ingest(InputArgs),
    /// One-hot encode segment tags
    Featurize,
    /// Assign segments to hexagonal cells
    Index,
    /// Train the autoencoder
    Train,
    /// Encode every segment
    Embed,
    /// Average segment embeddings per cell
    Aggregate,
    /// Ward clustering, flat cut and cluster profiles
    Cluster,
    /// PCA, RGB colours and t-SNE
    Project(ProjectArgs),
    /// Resolve a signed sum of region embeddings to the nearest region
    Arith(ArithArgs),
    /// Write map-ready GeoJSON
    Export,
    /// Every stage from ingest to export
    Run(InputArgs),
    /// Write the synthetic gridville corpus
    Fixture(FixtureArgs),
    /// Print the effective configuration
    Config,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// GeoJSON FeatureCollection; pair each with a --city
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long = "city", required = true)]
    pub cities: Vec<String>,
}

impl InputArgs {
    fn pairs(&self) -> Result<Vec<(PathBuf, String)>, CliError> {
        if self.inputs.len() != self.cities.len() {
            return Err(CliError::Usage(format!(
                "{} --input files but {} --city names",
                self.inputs.len(),
                self.cities.len()
            )));
        }
        Ok(self.inputs.iter().cloned().zip(self.cities.iter().cloned()).collect())
    }
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Restrict t-SNE to one city's regions
    #[arg(long)]
    pub city: Option<String>,
}

#[derive(Debug, Args)]
pub struct ArithArgs {
    #[arg(long)]
    pub plus: Vec<String>,
    #[arg(long)]
    pub minus: Vec<String>,
    /// Only consider regions of this city
    #[arg(long)]
    pub within: Option<String>,
    /// Allow an operand to be the answer
    #[arg(long)]
    pub keep_operands: bool,
    /// Divide the sum by the number of terms
    #[arg(long)]
    pub average: bool,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
}

impl Cli {
    pub fn config(&self) -> Result<Config, CliError> {
        let flags = Overrides {
            seed: self.seed,
            resolution: self.resolution,
            schema: self.schema.clone(),
            k: self.k,
            perplexity: self.perplexity,
        };
        let mut cfg = Config::load(self.config.as_deref(), &flags)?;
        if let Command::Project(ProjectArgs { city: Some(city) }) = &self.command {
            cfg.tsne.city = Some(city.clone());
        }
        Ok(cfg)
    }
}

/// Runs one parsed command; user-facing results go to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = cli.config()?;
    if let Command::Config = cli.command {
        out.write_all(cfg.to_pretty_json().as_bytes())?;
        return Ok(());
    }
    if let Command::Fixture(args) = &cli.command {
        for (path, city) in stages::write_fixture(&args.out, cfg.seed)? {
            writeln!(out, "{city}\t{}", path.display())?;
        }
        return Ok(());
    }
    let ws = Workspace::open(&cli.workspace)?;
    match &cli.command {
        Command::Ingest(args) => stages::ingest(&ws, &cfg, &args.pairs()?),
        Command::Featurize => stages::featurize(&ws, &cfg),
        Command::Index => stages::index(&ws, &cfg),
        Command::Train => stages::train_model(&ws, &cfg),
        Command::Embed => stages::embed(&ws, &cfg),
        Command::Aggregate => stages::aggregate(&ws, &cfg),
        Command::Cluster => stages::cluster(&ws, &cfg),
        Command::Project(_) => stages::project(&ws, &cfg),
        Command::Export => stages::export(&ws, &cfg),
        Command::Run(args) => stages::run_all(&ws, &cfg, &args.pairs()?),
        Command::Arith(a) => {
            let req = ArithRequest {
                plus: a.plus.clone(),
                minus: a.minus.clone(),
                within: a.within.clone(),
                keep_operands: a.keep_operands,
                average: a.average,
            };
            let answer = stages::arith(&ws, &cfg, &req)?;
            writeln!(out, "{}\t{}", answer.cell, answer.distance)?;
            Ok(())
        }
        Command::Config | Command::Fixture(_) => unreachable!("handled above"),
    }
}

/// Sizes the global rayon pool from `HEXEMBED_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("HEXEMBED_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("HEXEMBED_THREADS=`{raw}` is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}
