use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use msaug::metrics::diversity::{DiversityParams, PcaFit};
use msaug::metrics::embedding::{export_embedding_matrix, write_embedding_csv};
use msaug::metrics::risk::{read_labels, read_logits};
use msaug::metrics::{cross_entropy_risk, dataset_diversity, PredictionSet};
use msaug::pipeline::{
    self, load_cifar100, load_image_folder, output::write_png, preview_grid, stream_batches,
    subsample_balanced, Dataset, EngineConfig, OutputFormat,
};
use msaug::rng::{tags, RngStream};
use msaug::{Augmenter, Error, Result};

#[derive(Parser)]
#[command(name = "msaug", version, about = "Deterministic mixed-sample image augmentation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Augment a dataset into an archive of images, labels and plans.
    Augment(AugmentArgs),
    /// Write a grid PNG of augmented samples.
    Preview(PreviewArgs),
    /// Measure PCA diversity of augmentation clouds.
    Diversity(DiversityArgs),
    /// Score external model logits against archived soft labels.
    CeRisk(CeRiskArgs),
    /// Write one augmented copy of every sample for external scoring.
    ExportVal(ExportValArgs),
    /// Print the resolved engine configuration.
    DumpConfig(DumpConfigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DataFormat {
    Auto,
    Cifar100,
    Folder,
}

#[derive(Args)]
struct DataArgs {
    /// CIFAR-100 binary file or class-per-directory image folder.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    format: DataFormat,
    /// Split tag recorded in the manifest (CIFAR input).
    #[arg(long, default_value = "train")]
    split: String,
    /// Keep this many samples per class, chosen with the run seed.
    #[arg(long)]
    per_class: Option<usize>,
}

impl DataArgs {
    fn load(&self, seed: u64) -> Result<Dataset> {
        let is_dir = self.data.is_dir();
        let data = match (self.format, is_dir) {
            (DataFormat::Cifar100, _) | (DataFormat::Auto, false) => load_cifar100(&self.data, &self.split)?,
            (DataFormat::Folder, _) | (DataFormat::Auto, true) => load_image_folder(&self.data)?,
        };
        log::info!(
            "loaded {} samples, {} classes, dims {:?}",
            data.len(),
            data.manifest.num_classes,
            data.manifest.dims
        );
        match self.per_class {
            Some(n) => subsample_balanced(&data, n, seed),
            None => Ok(data),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Png,
    Packed,
}

/// Flags that override fields of the engine configuration.
#[derive(Args)]
struct EngineArgs {
    /// TOML or JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    aug: Option<Augmenter>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    iterations: Option<u64>,
    /// Run Basic for this many iterations before switching to --aug (default cutmix).
    #[arg(long)]
    warmup_iters: Option<u64>,
    /// Archive directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    output_format: Option<FormatArg>,
}

impl EngineArgs {
    fn resolve(&self) -> Result<EngineConfig> {
        let mut cfg = match &self.config {
            Some(path) => EngineConfig::load(path)?,
            None => EngineConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.aug {
            cfg.augmenter = v;
        }
        if let Some(v) = self.alpha {
            cfg.combinator.alpha = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.warmup_iters {
            let mut schedule = cfg.schedule.take().unwrap_or_default();
            schedule.warmup_iters = v;
            if let Some(aug) = self.aug {
                schedule.main_aug = aug;
            }
            cfg.schedule = Some(schedule);
        }
        if let Some(v) = &self.out {
            cfg.output.dir = v.clone();
        }
        if let Some(v) = self.output_format {
            cfg.output.format = match v {
                FormatArg::Png => OutputFormat::Png,
                FormatArg::Packed => OutputFormat::Packed,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct PreviewArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Number of samples in the grid.
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    cols: usize,
    /// Output PNG path.
    #[arg(long, default_value = "preview.png")]
    png: PathBuf,
}

#[derive(Args)]
struct DiversityArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Augmenters to measure (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    aug: Vec<Augmenter>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    alpha: Option<f64>,
    /// Cloud size per anchor.
    #[arg(long, default_value_t = 1000)]
    k: usize,
    /// Number of anchors drawn from the dataset.
    #[arg(long, default_value_t = 100)]
    anchors: usize,
    #[arg(long, default_value_t = 100)]
    components: usize,
    /// Append the soft label to every cloud point.
    #[arg(long)]
    include_labels: bool,
    /// Fit one set of axes on all clouds instead of one per cloud.
    #[arg(long)]
    global_fit: bool,
    /// Directory for `<aug>.csv` and `<aug>.json`; rows go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the 2-D embedding of the first anchor's cloud to `<out>/<aug>_embedding.csv`.
    #[arg(long, requires = "out")]
    embedding: bool,
}

#[derive(Args)]
struct CeRiskArgs {
    /// Logits as CSV (`sample_id,z0,...`) or JSONL (`{"sample_id","logits"}`).
    #[arg(long)]
    predictions: PathBuf,
    /// `labels.jsonl` file, or an archive directory containing one.
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Args)]
struct ExportValArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct DumpConfigArgs {
    #[command(flatten)]
    engine: EngineArgs,
    /// Print JSON instead of TOML.
    #[arg(long)]
    json: bool,
}

fn augment(args: &AugmentArgs) -> Result<()> {
    let cfg = args.engine.resolve()?;
    let data = args.data.load(cfg.seed)?;
    let summary = pipeline::run_augment(&cfg, &data)?;
    println!("samples {}", summary.samples);
    println!("archive {}", summary.dir.display());
    println!("digest {}", summary.digest);
    Ok(())
}

fn preview(args: &PreviewArgs) -> Result<()> {
    let mut cfg = args.engine.resolve()?;
    cfg.batch_size = args.n;
    cfg.iterations = 1;
    let data = args.data.load(cfg.seed)?;
    let batch = stream_batches(&cfg, &data)?
        .next()
        .expect("one iteration")?;
    let images: Vec<_> = batch.records.into_iter().map(|r| r.sample.image).collect();
    write_png(&args.png, &preview_grid(&images, args.cols, 2)?)?;
    println!("{}", args.png.display());
    Ok(())
}

fn diversity(args: &DiversityArgs) -> Result<()> {
    let data = args.data.load(args.seed)?;
    if args.anchors == 0 || args.anchors > data.len() {
        return Err(Error::Argument(format!(
            "--anchors must be in 1..={}, got {}",
            data.len(),
            args.anchors
        )));
    }
    let mut picks = RngStream::derive(args.seed, &[tags::DIVERSITY]).choose_k(data.len(), args.anchors)?;
    picks.sort_unstable();
    let anchors: Vec<_> = picks.iter().map(|&i| data.samples[i].clone()).collect();

    let mut combinator = msaug::CombinatorConfig::default();
    if let Some(a) = args.alpha {
        combinator.alpha = a;
    }
    combinator.validate()?;
    let policy = msaug::TransformPolicy::default();
    let params = DiversityParams {
        k: args.k,
        max_components: args.components,
        seed: args.seed,
        include_labels: args.include_labels,
        fit: if args.global_fit { PcaFit::Global } else { PcaFit::PerCloud },
        ..DiversityParams::default()
    };
    for &aug in &args.aug {
        let report = dataset_diversity(&anchors, &data.samples, aug, &params, &combinator, &policy, args.workers)?;
        match &args.out {
            Some(dir) => {
                report.write(dir, aug.name())?;
                if args.embedding {
                    write_first_embedding(dir, aug, &anchors[0], &data, &params, &combinator, &policy)?;
                }
            }
            None => print!("{}", report.to_csv()),
        }
        println!("{}\t{}", aug.name(), report.mean_variance);
    }
    Ok(())
}

fn write_first_embedding(
    dir: &Path,
    aug: Augmenter,
    anchor: &msaug::Sample,
    data: &Dataset,
    params: &DiversityParams,
    combinator: &msaug::CombinatorConfig,
    policy: &msaug::TransformPolicy,
) -> Result<()> {
    let rng = RngStream::derive(params.seed, &[tags::DIVERSITY, anchor.source_id]);
    let cloud = msaug::metrics::diversity::generate_cloud(
        anchor,
        &data.samples,
        aug,
        params.k,
        params.include_labels,
        &rng,
        combinator,
        policy,
    )?;
    let ids: Vec<String> = (0..params.k).map(|i| format!("{}_{i}", anchor.source_id)).collect();
    let rows = export_embedding_matrix(&cloud, &ids)?;
    write_embedding_csv(&dir.join(format!("{}_embedding.csv", aug.name())), &rows)
}

fn ce_risk(args: &CeRiskArgs) -> Result<()> {
    let labels_path = if args.labels.is_dir() {
        args.labels.join("labels.jsonl")
    } else {
        args.labels.clone()
    };
    let set = PredictionSet::join(read_logits(&args.predictions)?, read_labels(&labels_path)?)?;
    println!("{}", cross_entropy_risk(&set)?);
    Ok(())
}

fn export_val(args: &ExportValArgs) -> Result<()> {
    let cfg = args.engine.resolve()?;
    let data = args.data.load(cfg.seed)?;
    let summary = pipeline::export_validation(&cfg, cfg.augmenter, &data)?;
    println!("samples {}", summary.samples);
    println!("archive {}", summary.dir.display());
    println!("digest {}", summary.digest);
    Ok(())
}

fn dump_config(args: &DumpConfigArgs) -> Result<()> {
    let cfg = args.engine.resolve()?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&cfg.echo()).expect("config serializes"));
    } else {
        print!("{}", cfg.to_toml_string()?);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Augment(a) => augment(a),
        Command::Preview(a) => preview(a),
        Command::Diversity(a) => diversity(a),
        Command::CeRisk(a) => ce_risk(a),
        Command::ExportVal(a) => export_val(a),
        Command::DumpConfig(a) => dump_config(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
