use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dimaudit::pipeline::{run_config, Config};
use dimaudit::report::AuditReport;
use dimaudit::synth::{self, PlantedSpec};
use dimaudit::Result;

#[derive(Parser)]
#[command(
    name = "dimaudit",
    version,
    about = "Dimensionality audit of multi-attribute rating tables",
    after_help = Config::defaults_help()
)]
struct Cli {
    /// TOML config file; missing keys take the defaults listed below
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input CSV (overrides `input`)
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Worker threads, 0 = one per core (overrides `workers`)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every enabled stage
    Run,
    /// Descriptive statistics only
    Describe,
    /// Cronbach's alpha only
    Alpha,
    /// PCA on the correlation matrix only
    Pca,
    /// Parallel analysis only
    Parallel,
    /// Bootstrap stability of PC1 only
    Bootstrap,
    /// PC1-only and ridge cross-validation only
    Predict,
    /// K-means on residual components only
    Cluster,
    /// Random-forest benchmark only
    Forest,
    /// Write a planted-factor CSV plus a config that analyses it
    Synth(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// CSV to write; the config goes next to it with a .toml extension
    #[arg(long, default_value = "synthetic.csv")]
    output: PathBuf,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 28)]
    p: usize,
    /// Planted factors, one disjoint attribute block each
    #[arg(long, default_value_t = 4)]
    factors: usize,
    #[arg(long, default_value_t = 0.8)]
    loading: f64,
    #[arg(long, default_value_t = 0.6)]
    noise_sd: f64,
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn summary(report: &AuditReport, out: &Path) {
    let m = &report.metadata;
    println!("n = {}, p = {}", m.n, m.p);
    if let Some(a) = &report.alpha {
        println!("alpha = {:.4} (standardized {:.4})", a.alpha, a.standardized_alpha);
    }
    if let Some(p) = &report.pca {
        println!("PC1 eigenvalue = {:.4}, share = {:.4}", p.eigenvalues[0], p.variance_shares[0]);
    }
    if let Some(p) = &report.parallel {
        println!("parallel analysis retains {}", p.retained);
    }
    if let Some(b) = &report.bootstrap {
        let (lo, hi) = b.report.pc1_share_ci;
        println!("bootstrap PC1 share CI = [{lo:.4}, {hi:.4}], cosine mean = {:.5}", b.report.cosine_mean);
    }
    if let Some(p) = &report.prediction {
        println!("PC1-only R2 = {:.4}, ridge R2 = {:.4}", p.pc1.mean_r2, p.ridge.mean_r2);
    }
    if let Some(c) = &report.clustering {
        println!("clusters {:?}, silhouette = {:.4}, ARI mean = {:.4}", c.sizes, c.silhouette, c.ari.ari_mean);
    }
    if let Some(f) = &report.forest {
        println!("forest R2 = {:.4}", f.mean_r2);
    }
    println!("wrote {}", out.display());
}

fn synth_command(args: &SynthArgs, seed: u64) -> Result<()> {
    let data = PlantedSpec::blocks(args.n, args.p, args.factors, args.loading, args.noise_sd, seed).generate()?;
    synth::write_csv(&data.matrix, &args.output)?;
    let schema = synth::csv_schema(args.p);
    let file_name = args.output.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let config = Config {
        input: file_name,
        seed,
        id_column: schema.id_column,
        season_column: schema.season_column.unwrap_or_default(),
        rating_column: schema.rating_column,
        attributes: schema.attributes,
        cluster_to: args.p.min(Config::default().cluster_to),
        ..Config::default()
    };
    let config_path = args.output.with_extension("toml");
    std::fs::write(&config_path, config.to_toml()?)
        .map_err(|e| dimaudit::Error::Io { path: config_path.clone(), source: e })?;
    println!("wrote {} and {}", args.output.display(), config_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (mut config, base) = match &cli.config {
        Some(path) => (
            Config::load(path)?,
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (Config::default(), PathBuf::from(".")),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = absolute(out).to_string_lossy().into_owned();
    }
    if let Some(input) = &cli.input {
        config.input = absolute(input).to_string_lossy().into_owned();
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }

    let stage = match &cli.command {
        Command::Synth(args) => return synth_command(args, config.seed),
        Command::Run => None,
        Command::Describe => Some("describe"),
        Command::Alpha => Some("alpha"),
        Command::Pca => Some("pca"),
        Command::Parallel => Some("parallel"),
        Command::Bootstrap => Some("bootstrap"),
        Command::Predict => Some("predict"),
        Command::Cluster => Some("cluster"),
        Command::Forest => Some("forest"),
    };
    if let Some(s) = stage {
        config.only_stage(s).expect("known stage");
    }
    let report = run_config(&config, &base)?;
    summary(&report, &base.join(&config.out));
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dimaudit: {e}");
            ExitCode::FAILURE
        }
    }
}
