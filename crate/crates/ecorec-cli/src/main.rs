//! Benchmark driver. Every subcommand assembles one [`ExperimentConfig`]
//! from an optional TOML file plus flag overrides, so a flag always means
//! the same thing no matter which step it feeds.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ecorec_core::data::{
    make_ctr_samples, make_matching_samples, write_ctr_shard, write_matching_shard, ShardFormat,
};
use ecorec_core::experiment::{
    build_or_load_table, load_bundle, load_config, persist, reference_table, render_leaderboard,
    results_path, run_experiment, table_path, verify_dataset, verify_stats, AccountingMode,
    ExperimentConfig, Selector,
};
use ecorec_core::green::preset;
use ecorec_core::train::{PretrainArch, TableProvenance};

#[derive(Parser)]
#[command(name = "ecorec", version, about = "News-recommendation benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the dataset and write matching and CTR sample shards.
    Prepare(ConfigArgs),
    /// Recompute corpus statistics and compare against known releases.
    Verify(ConfigArgs),
    /// Build (or reuse) the cached table from a pretrained content encoder.
    Pretrain(ConfigArgs),
    /// Build (or reuse) the cached table of frozen language-model vectors.
    Encode(ConfigArgs),
    /// Train the configured variants and persist one result per cell.
    Train(ConfigArgs),
    /// Train the full 30-variant grid, ignoring the config's selection.
    Grid(ConfigArgs),
    /// Render the result store as a ranked markdown table.
    Leaderboard(LeaderboardArgs),
}

/// Flag overrides for every experiment-config field. Flags win over the
/// `--config` file, which wins over the defaults. Only the two path flags
/// read environment variables.
#[derive(Args)]
struct ConfigArgs {
    /// TOML config file to start from.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Dataset directory, or `synth` for the built-in generated corpus.
    #[arg(long, env = "ECOREC_DATA_DIR")]
    dataset: Option<String>,

    /// Where shards, cached tables, and results land.
    #[arg(long, env = "ECOREC_OUT_DIR")]
    out_dir: Option<PathBuf>,

    /// Comma-separated variant labels such as NRMS-PREC, or `grid` for all 30.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,

    /// Comma-separated per-run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Hardware and carbon-intensity preset for emission estimates.
    #[arg(long)]
    emissions_preset: Option<String>,

    /// Which grams the leaderboard reports: train_only or total.
    #[arg(long)]
    accounting: Option<String>,

    /// Shard encoding: ndjson or binary.
    #[arg(long)]
    shard_format: Option<String>,

    /// Recommender learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,

    #[arg(long)]
    batch_size: Option<usize>,

    /// Negatives per positive in matching groups.
    #[arg(long)]
    k_neg: Option<usize>,

    /// History clicks kept (most recent).
    #[arg(long)]
    l_max: Option<usize>,

    #[arg(long)]
    max_epochs: Option<usize>,

    /// Epochs without a validation-AUC improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,

    /// Seeds model init, negative sampling, and batch order.
    #[arg(long)]
    train_seed: Option<u64>,

    /// Cap on training samples per epoch, for desk-scale runs.
    #[arg(long)]
    max_train_samples: Option<usize>,

    /// Cap on validation impressions scored per epoch.
    #[arg(long)]
    max_val_impressions: Option<usize>,

    #[arg(long)]
    embed_dim: Option<usize>,

    #[arg(long)]
    word_embed_dim: Option<usize>,

    #[arg(long)]
    attn_dim: Option<usize>,

    #[arg(long)]
    n_heads: Option<usize>,

    #[arg(long)]
    conv_kernel: Option<usize>,

    #[arg(long)]
    cross_depth: Option<usize>,

    /// Width of the frozen language-model vectors.
    #[arg(long)]
    plm_dim: Option<usize>,

    #[arg(long)]
    plm_seed: Option<u64>,

    /// Artificial per-call encoder latency, to make paradigm timing visible
    /// at desk scale.
    #[arg(long)]
    plm_sleep_micros: Option<u64>,

    #[arg(long)]
    max_positions: Option<usize>,

    /// Pretraining text architecture: cnn, self_attention, or pooling.
    #[arg(long)]
    pretrain_arch: Option<String>,

    #[arg(long)]
    pretrain_epochs: Option<usize>,

    #[arg(long)]
    pretrain_batch_size: Option<usize>,

    #[arg(long)]
    pretrain_lr: Option<f64>,

    #[arg(long)]
    pretrain_seed: Option<u64>,

    /// Weight of the category-agreement term in the pretraining loss.
    #[arg(long)]
    category_weight: Option<f64>,

    #[arg(long)]
    pretrain_embed_dim: Option<usize>,

    #[arg(long)]
    pretrain_word_embed_dim: Option<usize>,

    #[arg(long)]
    pretrain_attn_dim: Option<usize>,

    #[arg(long)]
    pretrain_n_heads: Option<usize>,

    #[arg(long)]
    pretrain_conv_kernel: Option<usize>,
}

#[derive(Args)]
struct LeaderboardArgs {
    #[command(flatten)]
    config: ConfigArgs,

    /// Result store to read, defaulting to <out_dir>/results.ndjson.
    #[arg(long, value_name = "PATH")]
    store: Option<PathBuf>,

    /// Seed the store with the published reference rows before rendering,
    /// so the table renders without training anything.
    #[arg(long)]
    inject_paper_table: bool,

    /// Write the table here instead of stdout.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                load_config(path).with_context(|| format!("loading {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };

        if let Some(v) = &self.dataset {
            cfg.dataset = v.clone();
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = &self.variants {
            cfg.variants = if v.len() == 1 && v[0] == "grid" {
                Selector::Keyword("grid".to_string())
            } else {
                Selector::Labels(v.clone())
            };
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = &self.emissions_preset {
            cfg.emissions_preset = v.clone();
        }
        if let Some(v) = &self.accounting {
            cfg.accounting = parse_accounting(v)?;
        }
        if let Some(v) = &self.shard_format {
            cfg.shard_format = v.parse::<ShardFormat>()?;
        }

        if let Some(v) = self.learning_rate {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.k_neg {
            cfg.train.k_neg = v;
        }
        if let Some(v) = self.l_max {
            cfg.train.l_max = v;
        }
        if let Some(v) = self.max_epochs {
            cfg.train.max_epochs = v;
        }
        if let Some(v) = self.patience {
            cfg.train.patience = v;
        }
        if let Some(v) = self.train_seed {
            cfg.train.seed = v;
        }
        if let Some(v) = self.max_train_samples {
            cfg.train.max_train_samples = Some(v);
        }
        if let Some(v) = self.max_val_impressions {
            cfg.train.max_val_impressions = Some(v);
        }

        if let Some(v) = self.embed_dim {
            cfg.model.embed_dim = v;
        }
        if let Some(v) = self.word_embed_dim {
            cfg.model.word_embed_dim = v;
        }
        if let Some(v) = self.attn_dim {
            cfg.model.attn_dim = v;
        }
        if let Some(v) = self.n_heads {
            cfg.model.n_heads = v;
        }
        if let Some(v) = self.conv_kernel {
            cfg.model.conv_kernel = v;
        }
        if let Some(v) = self.cross_depth {
            cfg.model.cross_depth = v;
        }
        if let Some(v) = self.plm_dim {
            cfg.model.plm_dim = v;
        }
        if let Some(v) = self.plm_seed {
            cfg.model.plm_seed = v;
        }
        if let Some(v) = self.plm_sleep_micros {
            cfg.model.plm_sleep_micros = v;
        }
        if let Some(v) = self.max_positions {
            cfg.model.max_positions = v;
        }

        if let Some(v) = &self.pretrain_arch {
            cfg.pretrain.arch = parse_arch(v)?;
        }
        if let Some(v) = self.pretrain_epochs {
            cfg.pretrain.epochs = v;
        }
        if let Some(v) = self.pretrain_batch_size {
            cfg.pretrain.batch_size = v;
        }
        if let Some(v) = self.pretrain_lr {
            cfg.pretrain.learning_rate = v;
        }
        if let Some(v) = self.pretrain_seed {
            cfg.pretrain.seed = v;
        }
        if let Some(v) = self.category_weight {
            cfg.pretrain.category_weight = v;
        }
        if let Some(v) = self.pretrain_embed_dim {
            cfg.pretrain.embed_dim = v;
        }
        if let Some(v) = self.pretrain_word_embed_dim {
            cfg.pretrain.word_embed_dim = v;
        }
        if let Some(v) = self.pretrain_attn_dim {
            cfg.pretrain.attn_dim = v;
        }
        if let Some(v) = self.pretrain_n_heads {
            cfg.pretrain.n_heads = v;
        }
        if let Some(v) = self.pretrain_conv_kernel {
            cfg.pretrain.conv_kernel = v;
        }

        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_accounting(s: &str) -> anyhow::Result<AccountingMode> {
    match s {
        "train_only" => Ok(AccountingMode::TrainOnly),
        "total" => Ok(AccountingMode::Total),
        other => bail!("unknown accounting mode {other:?} (expected train_only or total)"),
    }
}

fn parse_arch(s: &str) -> anyhow::Result<PretrainArch> {
    match s {
        "cnn" => Ok(PretrainArch::Cnn),
        "self_attention" => Ok(PretrainArch::SelfAttention),
        "pooling" => Ok(PretrainArch::Pooling),
        other => bail!(
            "unknown pretraining architecture {other:?} (expected cnn, self_attention, or pooling)"
        ),
    }
}

fn cmd_prepare(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let bundle = load_bundle(&cfg.dataset)?;
    println!(
        "parsed {} articles, {} users, {} train / {} val / {} test impressions",
        bundle.stats.n_news,
        bundle.stats.n_users,
        bundle.train.len(),
        bundle.val.len(),
        bundle.test.len()
    );

    let matching =
        make_matching_samples(&bundle.train, cfg.train.k_neg, cfg.train.l_max, cfg.train.seed)?;
    let ctr = make_ctr_samples(&bundle.train, cfg.train.l_max);

    let dir = cfg.out_dir.join("shards");
    fs::create_dir_all(&dir)?;
    let ext = match cfg.shard_format {
        ShardFormat::Ndjson => "ndjson",
        ShardFormat::Binary => "bin",
    };

    let matching_path = dir.join(format!("matching.{ext}"));
    let mut w = std::io::BufWriter::new(fs::File::create(&matching_path)?);
    write_matching_shard(&mut w, &matching, cfg.shard_format)?;
    w.flush()?;
    println!("wrote {} matching samples to {}", matching.len(), matching_path.display());

    let ctr_path = dir.join(format!("ctr.{ext}"));
    let mut w = std::io::BufWriter::new(fs::File::create(&ctr_path)?);
    write_ctr_shard(&mut w, &ctr, cfg.shard_format)?;
    w.flush()?;
    println!("wrote {} ctr samples to {}", ctr.len(), ctr_path.display());
    Ok(())
}

fn cmd_verify(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    // The generated corpus only exists in memory, so it goes through the
    // full preparation path; directories get the cheaper raw parse.
    let report = if cfg.dataset == "synth" {
        let bundle = load_bundle(&cfg.dataset)?;
        verify_stats(bundle.stats)
    } else {
        verify_dataset(Path::new(&cfg.dataset))?
    };
    print!("{}", report.render());
    if !report.mismatches.is_empty() {
        bail!(
            "statistics do not match {}",
            report.identified_as.unwrap_or("any known release")
        );
    }
    Ok(())
}

fn cmd_table(cfg: &ExperimentConfig, provenance: TableProvenance) -> anyhow::Result<()> {
    let bundle = load_bundle(&cfg.dataset)?;
    let (profile, intensity) = preset(&cfg.emissions_preset)?;
    let (table, records, reloaded) =
        build_or_load_table(cfg, provenance, &bundle, &profile, &intensity)?;
    let path = table_path(cfg, provenance);
    if reloaded {
        println!("reusing {} ({} rows, dim {})", path.display(), table.len(), table.dim);
    } else {
        let grams: f64 = records.iter().map(|r| r.co2e_grams).sum();
        println!(
            "built {} ({} rows, dim {}, {:.3} g CO2e)",
            path.display(),
            table.len(),
            table.dim,
            grams
        );
    }
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let outcome = run_experiment(cfg)?;
    println!("{}", outcome.summary());
    println!("results stored in {}", results_path(&cfg.out_dir).display());
    if !outcome.all_succeeded() {
        bail!("{} of the requested variants failed", outcome.failures.len());
    }
    Ok(())
}

fn cmd_leaderboard(args: &LeaderboardArgs) -> anyhow::Result<()> {
    let cfg = args.config.resolve()?;
    let store = args.store.clone().unwrap_or_else(|| results_path(&cfg.out_dir));
    if args.inject_paper_table {
        for row in reference_table() {
            persist(&row, &store)?;
        }
    }
    let text = render_leaderboard(&store, cfg.accounting)?;
    match &args.output {
        Some(path) => {
            fs::write(path, &text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Prepare(args) => cmd_prepare(&args.resolve()?),
        Command::Verify(args) => cmd_verify(&args.resolve()?),
        Command::Pretrain(args) => cmd_table(&args.resolve()?, TableProvenance::PretrainedEncoder),
        Command::Encode(args) => cmd_table(&args.resolve()?, TableProvenance::PlmDirect),
        Command::Train(args) => cmd_train(&args.resolve()?),
        Command::Grid(args) => {
            let mut cfg = args.resolve()?;
            cfg.variants = Selector::Keyword("grid".to_string());
            cmd_train(&cfg)
        }
        Command::Leaderboard(args) => cmd_leaderboard(args),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(&Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
