//! `iqtex`: train filter-set models, score image quality, and run texture
//! retrieval from the command line.
//!
//! Exit codes: 0 on success, 1 for command-line usage errors, 2 for data
//! errors (unreadable files, malformed inputs, failed computations).
//! Results go to stdout as tab-separated values; diagnostics go to stderr
//! through the logger (`RUST_LOG` controls verbosity).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use iqtex_core::decoder::TrainingConfig;
use iqtex_core::image::{load_image, save_image, Image};
use iqtex_core::iqa::{
    evaluate, msunique_from_model, msunique_to_model, train_msunique, train_unique,
    unique_from_model, unique_to_model, MsUniqueConfig, QualityEstimator, UniqueConfig,
};
use iqtex_core::model_io::{
    filterset_to_model, Encoding, ModelFile, ModelKind,
};
use iqtex_core::patches::{sample_random_patches, PatchMatrix};
use iqtex_core::synth::{
    derive_seed, natural_like_image, write_texture_corpus,
};
use iqtex_core::texture::{
    build_index, evaluate_retrieval, index_from_model, index_to_model, query_image,
    robustness_sweep, texture_from_model, texture_to_model, train_texture_model, QueryConfig,
    TextureConfig,
};
use iqtex_core::whitening::{iterated_whiten, Epsilon, WhiteningProtocol};

#[derive(Parser)]
#[command(
    name = "iqtex",
    version,
    about = "Learned filter sets for image quality assessment and texture retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it as a JSON model file
    TrainFilters(TrainArgs),
    /// Score distorted images against a reference image
    IqaScore(ScoreArgs),
    /// Compare estimator scores with subjective ratings
    IqaEval(EvalArgs),
    /// Extract descriptors for a labelled corpus and write an index
    TextureIndex(IndexArgs),
    /// Rank index entries against a query image
    TextureQuery(QueryArgs),
    /// Leave-one-out retrieval quality of an index
    TextureEval(TextureEvalArgs),
    /// Retrieval quality as the corpus degrades with noise
    Robustness(RobustnessArgs),
    /// Generate synthetic images
    Synth(SynthArgs),
    /// Select and normalize a photographic texture corpus
    CuretPrepare(CuretArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrainKind {
    /// Bare filter set trained on whitened patches
    Filterset,
    /// Single-filter-set quality estimator
    Unique,
    /// Multi-resolution ensemble quality estimator
    Msunique,
    /// Texture feature hierarchy
    Texture,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EpsilonMode {
    /// Epsilon scales with the mean eigenvalue of the data
    Relative,
    /// Epsilon is used verbatim
    Absolute,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WhiteningArg {
    /// Fit a fresh whitening transform on each scored image
    Refit,
    /// Reuse the whitening chain fit during training
    Training,
    /// Skip whitening (texture models only)
    None,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EncodingArg {
    Base64,
    Decimal,
}

impl From<EncodingArg> for Encoding {
    fn from(e: EncodingArg) -> Encoding {
        match e {
            EncodingArg::Base64 => Encoding::Base64,
            EncodingArg::Decimal => Encoding::Decimal,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// What to train
    #[arg(long, value_enum)]
    kind: TrainKind,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    /// Directory of training images (.ppm/.png/.bmp, recursive, sorted)
    #[arg(long)]
    images_dir: Option<PathBuf>,
    /// Manifest TSV (`path<TAB>class`) naming the training images
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Train on this many generated photograph-like images instead of files
    #[arg(long)]
    synthetic: Option<usize>,
    /// Random patches sampled per image (patch-trained kinds)
    #[arg(long, default_value_t = 100)]
    patches_per_image: usize,
    /// Patch side in pixels
    #[arg(long, default_value_t = 8)]
    side: usize,
    /// Hidden units (final layer for the texture kind)
    #[arg(long, default_value_t = 400)]
    h: usize,
    /// Whitening iterations
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Whitening regularizer value (default depends on k)
    #[arg(long)]
    epsilon: Option<f64>,
    /// Whitening regularizer mode (default depends on k)
    #[arg(long, value_enum)]
    epsilon_mode: Option<EpsilonMode>,
    /// L-BFGS iteration cap
    #[arg(long, default_value_t = 400)]
    iters: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = EncodingArg::Base64)]
    encoding: EncodingArg,
    /// Ensemble hidden sizes (msunique)
    #[arg(long, value_delimiter = ',', default_values_t = vec![81, 121, 169, 400, 625])]
    hidden_sizes: Vec<usize>,
    /// Multiplier on edge-filter activations (msunique)
    #[arg(long, default_value_t = 2.0)]
    edge_weight: f64,
    /// Zero feature activations below this value (unique/msunique)
    #[arg(long)]
    activation_threshold: Option<f64>,
    /// How patches are whitened when the trained model is applied
    /// (unique/msunique/texture)
    #[arg(long, value_enum, default_value_t = WhiteningArg::Refit)]
    test_whitening: WhiteningArg,
    /// Color-pathway hidden units (texture)
    #[arg(long, default_value_t = 400)]
    h_color: usize,
    /// Patch-layer hidden units (texture)
    #[arg(long, default_value_t = 64)]
    h2: usize,
    /// Tile-layer hidden units (texture)
    #[arg(long, default_value_t = 192)]
    h3: usize,
    /// Activations kept per tile by pooling (texture)
    #[arg(long, default_value_t = 64)]
    pool_k: usize,
    /// Crops harvested per training image (texture)
    #[arg(long, default_value_t = 4)]
    crops_per_image: usize,
}

#[derive(Args)]
struct ScoreArgs {
    /// Estimator model file (unique or msunique)
    #[arg(long)]
    model: PathBuf,
    /// Reference image
    reference: PathBuf,
    /// Distorted images to score against the reference
    #[arg(required = true)]
    distorted: Vec<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Estimator model file (unique or msunique)
    #[arg(long)]
    model: PathBuf,
    /// TSV with `reference<TAB>distorted<TAB>rating[<TAB>std]` rows;
    /// image paths are relative to this file
    #[arg(long)]
    pairs: PathBuf,
    /// Also write per-pair predictions to this TSV
    #[arg(long)]
    scores_out: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    /// Texture model file
    #[arg(long)]
    model: PathBuf,
    /// Corpus manifest TSV (`path<TAB>class`), paths relative to it
    #[arg(long)]
    manifest: PathBuf,
    /// Output index file
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = EncodingArg::Base64)]
    encoding: EncodingArg,
}

#[derive(Args)]
struct QueryArgs {
    /// Texture model file
    #[arg(long)]
    model: PathBuf,
    /// Index file to search
    #[arg(long)]
    index: PathBuf,
    /// Query image
    query: PathBuf,
    /// Print only the first N results
    #[arg(long)]
    top: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    color_fraction: f64,
    #[arg(long, default_value_t = 3)]
    samples_per_class: usize,
}

#[derive(Args)]
struct TextureEvalArgs {
    /// Index file to evaluate
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    color_fraction: f64,
    #[arg(long, default_value_t = 3)]
    samples_per_class: usize,
}

#[derive(Args)]
struct RobustnessArgs {
    /// Texture model file
    #[arg(long)]
    model: PathBuf,
    /// Corpus manifest TSV (`path<TAB>class`), paths relative to it
    #[arg(long)]
    manifest: PathBuf,
    /// Noise levels on the 0-255 scale, e.g. 0,50,100
    #[arg(long, value_delimiter = ',', required = true)]
    sigmas: Vec<f64>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    color_fraction: f64,
    #[arg(long, default_value_t = 3)]
    samples_per_class: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    /// The 12-class procedural texture corpus plus manifest.tsv
    Corpus,
    /// Photograph-like random images
    Natural,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = SynthKind::Corpus)]
    kind: SynthKind,
    /// Image side in pixels
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Images per texture class (corpus)
    #[arg(long, default_value_t = 3)]
    samples_per_class: usize,
    /// Number of images (natural)
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct CuretArgs {
    /// Directory of the raw photographic corpus
    #[arg(long)]
    src: PathBuf,
    /// Output directory for normalized images and manifest.tsv
    #[arg(long)]
    out: PathBuf,
    /// Viewing-condition number to select (trailing `-N` in file stems)
    #[arg(long, default_value_t = 55)]
    condition: u32,
    #[arg(long, default_value_t = 3)]
    samples_per_class: usize,
    /// Output image side in pixels (center-cropped square, box-resized)
    #[arg(long, default_value_t = 128)]
    size: usize,
}

enum CliError {
    Usage(String),
    Data(iqtex_core::Error),
}

impl From<iqtex_core::Error> for CliError {
    fn from(e: iqtex_core::Error) -> Self {
        CliError::Data(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(iqtex_core::Error::Format(msg.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::TrainFilters(a) => cmd_train(a),
        Command::IqaScore(a) => cmd_score(a),
        Command::IqaEval(a) => cmd_eval(a),
        Command::TextureIndex(a) => cmd_index(a),
        Command::TextureQuery(a) => cmd_query(a),
        Command::TextureEval(a) => cmd_texture_eval(a),
        Command::Robustness(a) => cmd_robustness(a),
        Command::Synth(a) => cmd_synth(a),
        Command::CuretPrepare(a) => cmd_curet(a),
    }
}

/// Reads `path<TAB>class` lines; returned paths are joined onto the
/// manifest's directory.
fn read_manifest(path: &Path) -> Result<Vec<(String, String, PathBuf)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(iqtex_core::Error::from)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (rel, class) = line
            .split_once('\t')
            .ok_or_else(|| data(format!("{}:{}: expected path<TAB>class", path.display(), ln + 1)))?;
        out.push((rel.to_string(), class.to_string(), base.join(rel)));
    }
    if out.is_empty() {
        return Err(data(format!("manifest {} is empty", path.display())));
    }
    Ok(out)
}

fn image_files_under(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("ppm") | Some("png") | Some("bmp")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(data(format!("no images under {}", dir.display())));
    }
    Ok(files)
}

fn epsilon_from_flags(k: usize, value: Option<f64>, mode: Option<EpsilonMode>) -> Epsilon {
    match (value, mode) {
        (None, None) => Epsilon::default_for_k(k),
        (Some(v), Some(EpsilonMode::Relative)) => Epsilon::Relative(v),
        (Some(v), Some(EpsilonMode::Absolute)) => Epsilon::Absolute(v),
        (Some(v), None) => match Epsilon::default_for_k(k) {
            Epsilon::Relative(_) => Epsilon::Relative(v),
            Epsilon::Absolute(_) => Epsilon::Absolute(v),
        },
        (None, Some(m)) => {
            let v = Epsilon::default_for_k(k).value();
            match m {
                EpsilonMode::Relative => Epsilon::Relative(v),
                EpsilonMode::Absolute => Epsilon::Absolute(v),
            }
        }
    }
}

fn load_training_images(a: &TrainArgs) -> Result<Vec<Image>, CliError> {
    let sources =
        usize::from(a.images_dir.is_some()) + usize::from(a.manifest.is_some()) + usize::from(a.synthetic.is_some());
    if sources != 1 {
        return Err(usage(
            "choose exactly one training source: --images-dir, --manifest, or --synthetic",
        ));
    }
    if let Some(n) = a.synthetic {
        if n == 0 {
            return Err(usage("--synthetic needs at least one image"));
        }
        return (0..n)
            .map(|i| Ok(natural_like_image(128, 128, derive_seed(a.seed, &[900, i as u64]))?))
            .collect();
    }
    let paths: Vec<PathBuf> = if let Some(dir) = &a.images_dir {
        image_files_under(dir)?
    } else {
        read_manifest(a.manifest.as_ref().unwrap())?
            .into_iter()
            .map(|(_, _, p)| p)
            .collect()
    };
    paths.iter().map(|p| Ok(load_image(p)?)).collect()
}

fn sample_training_patches(
    images: &[Image],
    per_image: usize,
    side: usize,
    seed: u64,
) -> Result<PatchMatrix, CliError> {
    use rand::SeedableRng;
    let mut columns = Vec::with_capacity(images.len() * per_image);
    for (i, img) in images.iter().enumerate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, &[901, i as u64]));
        let batch = sample_random_patches(img, per_image, side, &mut rng)?;
        for j in 0..batch.n() {
            columns.push(batch.column(j));
        }
    }
    Ok(PatchMatrix::from_columns(&columns)?)
}

fn whitening_protocol(arg: WhiteningArg, allow_none: bool) -> Result<WhiteningProtocol, CliError> {
    match arg {
        WhiteningArg::Refit => Ok(WhiteningProtocol::RefitPerImage),
        WhiteningArg::Training => Ok(WhiteningProtocol::TrainingChain),
        WhiteningArg::None if allow_none => Ok(WhiteningProtocol::None),
        WhiteningArg::None => Err(usage("--test-whitening none is only valid for --kind texture")),
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let epsilon = epsilon_from_flags(a.k, a.epsilon, a.epsilon_mode);
    let training = TrainingConfig {
        max_iterations: a.iters,
        ..TrainingConfig::default()
    };
    let images = load_training_images(&a)?;
    log::info!("training {} model on {} images", kind_name(a.kind), images.len());

    let file = match a.kind {
        TrainKind::Filterset => {
            let patches = sample_training_patches(&images, a.patches_per_image, a.side, a.seed)?;
            let (white, _) = iterated_whiten(&patches, a.k, epsilon)?;
            let filters =
                iqtex_core::decoder::train(&white, a.h, &training, a.seed, a.k, epsilon)?;
            filterset_to_model(&filters, a.encoding.into())?
        }
        TrainKind::Unique => {
            let patches = sample_training_patches(&images, a.patches_per_image, a.side, a.seed)?;
            let cfg = UniqueConfig {
                hidden: a.h,
                k: a.k,
                epsilon,
                side: a.side,
                protocol: whitening_protocol(a.test_whitening, false)?,
                activation_threshold: a.activation_threshold,
                training,
                seed: a.seed,
            };
            unique_to_model(&train_unique(&patches, &cfg)?, a.encoding.into())?
        }
        TrainKind::Msunique => {
            let patches = sample_training_patches(&images, a.patches_per_image, a.side, a.seed)?;
            let cfg = MsUniqueConfig {
                hidden_sizes: a.hidden_sizes.clone(),
                k: a.k,
                epsilon,
                side: a.side,
                edge_weight: a.edge_weight,
                protocol: whitening_protocol(a.test_whitening, false)?,
                activation_threshold: a.activation_threshold,
                training,
                seed: a.seed,
            };
            msunique_to_model(&train_msunique(&patches, &cfg)?, a.encoding.into())?
        }
        TrainKind::Texture => {
            let cfg = TextureConfig {
                h_color: a.h_color,
                h2: a.h2,
                h3: a.h3,
                h_final: a.h,
                side: a.side,
                pool_k: a.pool_k,
                k: a.k,
                epsilon,
                structure_whitening: whitening_protocol(a.test_whitening, true)?,
                crops_per_image: a.crops_per_image,
                training,
                seed: a.seed,
                ..TextureConfig::default()
            };
            texture_to_model(&train_texture_model(&images, &cfg)?, a.encoding.into())?
        }
    };
    file.save(&a.out)?;
    log::info!("wrote {}", a.out.display());
    Ok(())
}

fn kind_name(k: TrainKind) -> &'static str {
    match k {
        TrainKind::Filterset => "filterset",
        TrainKind::Unique => "unique",
        TrainKind::Msunique => "msunique",
        TrainKind::Texture => "texture",
    }
}

fn load_estimator(path: &Path) -> Result<QualityEstimator, CliError> {
    let file = ModelFile::load(path)?;
    match file.kind {
        ModelKind::Unique => Ok(QualityEstimator::Unique(unique_from_model(&file)?)),
        ModelKind::Msunique => Ok(QualityEstimator::MsUnique(msunique_from_model(&file)?)),
        other => Err(data(format!(
            "{} is a {} model, not a quality estimator",
            path.display(),
            other.as_str()
        ))),
    }
}

fn cmd_score(a: ScoreArgs) -> Result<(), CliError> {
    let estimator = load_estimator(&a.model)?;
    let reference = load_image(&a.reference)?;
    for dist_path in &a.distorted {
        let distorted = load_image(dist_path)?;
        let score = estimator.score(&reference, &distorted)?;
        println!(
            "{}\t{}\t{score}",
            a.reference.display(),
            dist_path.display()
        );
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let estimator = load_estimator(&a.model)?;
    let text = std::fs::read_to_string(&a.pairs).map_err(iqtex_core::Error::from)?;
    let base = a.pairs.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    let mut ratings = Vec::new();
    let mut stds: Vec<f64> = Vec::new();
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(data(format!(
                "{}:{}: expected reference<TAB>distorted<TAB>rating[<TAB>std]",
                a.pairs.display(),
                ln + 1
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| data(format!("{}:{}: bad {what} {s:?}", a.pairs.display(), ln + 1)))
        };
        let rating = parse(fields[2], "rating")?;
        if fields.len() == 4 {
            stds.push(parse(fields[3], "std")?);
        }
        let reference = load_image(base.join(fields[0]))?;
        let distorted = load_image(base.join(fields[1]))?;
        pairs.push((reference, distorted));
        ratings.push(rating);
        rows.push((fields[0].to_string(), fields[1].to_string()));
    }
    if !stds.is_empty() && stds.len() != ratings.len() {
        return Err(data(format!(
            "{}: either every row or no row may carry a std column",
            a.pairs.display()
        )));
    }
    let std_arg = if stds.is_empty() { None } else { Some(stds.as_slice()) };
    let eval = evaluate(&estimator, &pairs, &ratings, std_arg)?;
    if let Some(out) = &a.scores_out {
        let mut text = String::new();
        for ((reference, distorted), (rating, score)) in
            rows.iter().zip(ratings.iter().zip(&eval.scores))
        {
            text.push_str(&format!("{reference}\t{distorted}\t{rating}\t{score}\n"));
        }
        std::fs::write(out, text).map_err(iqtex_core::Error::from)?;
    }
    println!("spearman\t{}", eval.spearman);
    println!("pearson\t{}", eval.pearson);
    println!("rmse\t{}", eval.rmse);
    println!("outlier_ratio\t{}", eval.outlier_ratio);
    Ok(())
}

fn load_corpus(manifest: &Path) -> Result<Vec<(String, String, Image)>, CliError> {
    read_manifest(manifest)?
        .into_iter()
        .map(|(id, class, path)| Ok((id, class, load_image(&path)?)))
        .collect()
}

fn cmd_index(a: IndexArgs) -> Result<(), CliError> {
    let model = texture_from_model(&ModelFile::load(&a.model)?)?;
    let items = load_corpus(&a.manifest)?;
    log::info!("indexing {} images", items.len());
    let index = build_index(&model, &items)?;
    index_to_model(&index, a.encoding.into())?.save(&a.out)?;
    log::info!("wrote {}", a.out.display());
    Ok(())
}

fn query_config(color_fraction: f64, samples_per_class: usize) -> QueryConfig {
    QueryConfig {
        color_fraction,
        samples_per_class,
    }
}

fn cmd_query(a: QueryArgs) -> Result<(), CliError> {
    let model = texture_from_model(&ModelFile::load(&a.model)?)?;
    let index = index_from_model(&ModelFile::load(&a.index)?)?;
    let img = load_image(&a.query)?;
    let cfg = query_config(a.color_fraction, a.samples_per_class);
    let ranked = query_image(&model, &index, &img, &cfg)?;
    let shown = a.top.unwrap_or(ranked.len());
    for (rank, r) in ranked.iter().take(shown).enumerate() {
        println!(
            "{}\t{}\t{}\t{}\t{}",
            rank + 1,
            r.id,
            r.class,
            r.correlation,
            u8::from(r.survived_prefilter)
        );
    }
    Ok(())
}

fn cmd_texture_eval(a: TextureEvalArgs) -> Result<(), CliError> {
    let index = index_from_model(&ModelFile::load(&a.index)?)?;
    let cfg = query_config(a.color_fraction, a.samples_per_class);
    let eval = evaluate_retrieval(&index, &cfg)?;
    println!("precision_at_1\t{}", eval.precision_at_1);
    println!("mrr\t{}", eval.mean_reciprocal_rank);
    println!("map\t{}", eval.mean_average_precision);
    Ok(())
}

fn cmd_robustness(a: RobustnessArgs) -> Result<(), CliError> {
    let model = texture_from_model(&ModelFile::load(&a.model)?)?;
    let items = load_corpus(&a.manifest)?;
    let cfg = query_config(a.color_fraction, a.samples_per_class);
    let points = robustness_sweep(&model, &items, &a.sigmas, &cfg, a.seed)?;
    for p in points {
        println!(
            "{}\t{}\t{}\t{}",
            p.sigma, p.precision_at_1, p.mean_reciprocal_rank, p.mean_average_precision
        );
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    match a.kind {
        SynthKind::Corpus => {
            let entries = write_texture_corpus(&a.out, a.size, a.samples_per_class, a.seed)?;
            log::info!("wrote {} corpus images to {}", entries.len(), a.out.display());
        }
        SynthKind::Natural => {
            if a.count == 0 {
                return Err(usage("--count needs at least one image"));
            }
            std::fs::create_dir_all(&a.out).map_err(iqtex_core::Error::from)?;
            for i in 0..a.count {
                let img = natural_like_image(a.size, a.size, derive_seed(a.seed, &[i as u64]))?;
                save_image(&img, a.out.join(format!("natural_{i:03}.ppm")))?;
            }
            log::info!("wrote {} images to {}", a.count, a.out.display());
        }
    }
    Ok(())
}

fn cmd_curet(a: CuretArgs) -> Result<(), CliError> {
    if a.size == 0 {
        return Err(usage("--size must be >= 1"));
    }
    // Group candidate files by class, keeping lexicographic order.
    let files = image_files_under(&a.src)?;
    let mut by_class: Vec<(String, Vec<PathBuf>)> = Vec::new();
    for path in files {
        let stem = match path.file_stem().and_then(|s| s.to_str()) {
            Some(s) => s,
            None => continue,
        };
        // The viewing condition is the trailing `-N` number of the stem.
        let condition: Option<u32> = stem
            .rsplit_once('-')
            .and_then(|(_, tail)| tail.parse().ok());
        if condition != Some(a.condition) {
            continue;
        }
        let class = path
            .parent()
            .filter(|p| *p != a.src)
            .and_then(|p| p.file_name())
            .and_then(|n| n.to_str())
            .map(str::to_string)
            .unwrap_or_else(|| stem.rsplit_once('-').unwrap().0.to_string());
        match by_class.iter_mut().find(|(c, _)| *c == class) {
            Some((_, list)) => list.push(path),
            None => by_class.push((class, vec![path])),
        }
    }
    if by_class.is_empty() {
        return Err(data(format!(
            "no images matching condition {} under {}",
            a.condition,
            a.src.display()
        )));
    }
    by_class.sort_by(|a, b| a.0.cmp(&b.0));

    std::fs::create_dir_all(&a.out).map_err(iqtex_core::Error::from)?;
    let mut manifest = String::new();
    let mut written = 0usize;
    for (class, paths) in &by_class {
        for (i, path) in paths.iter().take(a.samples_per_class).enumerate() {
            let img = load_image(path)?;
            let square = img.width().min(img.height());
            let x0 = (img.width() - square) / 2;
            let y0 = (img.height() - square) / 2;
            let cropped = img.window(x0, y0, square, square)?;
            let resized = iqtex_core::image::resize_box(&cropped, a.size, a.size)?;
            let name = format!("{class}_{i:02}.ppm");
            save_image(&resized, a.out.join(&name))?;
            manifest.push_str(&format!("{name}\t{class}\n"));
            written += 1;
        }
    }
    std::fs::write(a.out.join("manifest.tsv"), manifest).map_err(iqtex_core::Error::from)?;
    log::info!(
        "prepared {written} images across {} classes in {}",
        by_class.len(),
        a.out.display()
    );
    Ok(())
}
