use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rtnet::config::{train_from_corpus, ConfigError, PipelineError, RunConfig};
use rtnet::corpus::{generate_synthetic_corpus, read_corpus, write_corpus, Corpus, CorpusError};
use rtnet::dataset::{build_dataset_with_vocab, PairExample};
use rtnet::evaluation::{
    act_summaries, evaluate, group_by_act, histograms_csv, offset_dump, offsets_of, sample_from_latent,
    sample_offsets, OffsetHistogram, OffsetSample, RStart,
};
use rtnet::model::{ModelError, TrainedModel};
use rtnet::vae::{fit_latent_spec, LatentError, LatentMode, LatentSpec};
use rtnet::verify::gradcheck_suite;

/// Response-timing networks: corpus synthesis, training, evaluation and
/// offset sampling.
#[derive(Parser)]
#[command(name = "rtnet", version, about)]
struct Cli {
    /// Directory that relative input and output paths are resolved against.
    #[arg(long, global = true, env = "RTNET_DATA_DIR", default_value = ".")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with known per-act offset distributions.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint and loss log.
    Train(TrainArgs),
    /// Test-set losses, MAE, baselines and per-act histograms as JSON.
    Evaluate(EvaluateArgs),
    /// Sample response offsets and write an offset dump and histograms.
    Sample(SampleArgs),
    /// Fit per-act latent Gaussians from a VAE checkpoint.
    FitLatent(FitLatentArgs),
    /// Sample offsets from latent vectors interpolated between two acts.
    Interpolate(InterpolateArgs),
    /// Finite-difference gradient checks of every trainable block.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Run configuration; its [synth] section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output corpus (JSONL; acoustic sidecar written next to it).
    #[arg(long)]
    out: PathBuf,
    /// Override the number of turn pairs.
    #[arg(long)]
    pairs: Option<usize>,
    /// Generator seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus to train on; defaults to [paths].corpus of the config.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Loss log (TSV); defaults to the checkpoint path with `.loss.tsv`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Override the number of iterations.
    #[arg(long)]
    iterations: Option<u64>,
    /// Training seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DataArgs {
    /// Checkpoint to load.
    #[arg(long)]
    ckpt: PathBuf,
    /// Corpus whose split is used (same split as training).
    #[arg(long)]
    corpus: PathBuf,
    /// Which side of the split to use: train, test or all.
    #[arg(long, default_value = "test")]
    split: Split,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Split {
    Train,
    Test,
    All,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Report (JSON); printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-act histogram CSV of the sampled offsets.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Sampling passes (defaults to the training config's value).
    #[arg(long)]
    runs: Option<u32>,
    /// Sampling seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Offset dump (TSV).
    #[arg(long)]
    out: PathBuf,
    /// Per-act histogram CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Samples per pair.
    #[arg(long, default_value_t = 1)]
    runs: u32,
    /// R_START policy: uniform over span R or fixed at its start (bound).
    #[arg(long, default_value = "uniform")]
    r_start: RStart,
    /// Sampling seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct FitLatentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Latent spec output (TSV).
    #[arg(long)]
    out: PathBuf,
    /// Also write every labelled latent mean (pair id, act, z) as TSV.
    #[arg(long)]
    export_z: Option<PathBuf>,
    /// Recorded in the output; fitting itself is deterministic.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct InterpolateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Latent spec from `fit-latent`.
    #[arg(long)]
    spec: PathBuf,
    /// Act at α = 0.
    #[arg(long)]
    from: String,
    /// Act at α = 1.
    #[arg(long)]
    to: String,
    /// Comma-separated α values in [0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    alphas: Vec<f64>,
    /// Offsets per α (defaults to the training config's value).
    #[arg(long)]
    samples: Option<usize>,
    /// Use the interpolated mean (mean) or draw around it (sample).
    #[arg(long, default_value = "mean")]
    latent: LatentMode,
    /// R_START policy: uniform over span R or fixed at its start (bound).
    #[arg(long, default_value = "uniform")]
    r_start: RStart,
    /// Offset dump (TSV).
    #[arg(long)]
    out: PathBuf,
    /// Histogram CSV with one column per α.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Sampling seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Seed for the random test points.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// User errors exit with 1, internal failures with 2.
enum Failure {
    User(String),
    Internal(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::User(e.to_string())
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(_) => Failure::Internal(e.to_string()),
            _ => Failure::User(e.to_string()),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Nn(_) => Failure::Internal(e.to_string()),
            _ => Failure::User(e.to_string()),
        }
    }
}

impl From<LatentError> for Failure {
    fn from(e: LatentError) -> Self {
        Failure::User(e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Corpus(e) => e.into(),
            PipelineError::Model(e) => e.into(),
            PipelineError::Train(e) => Failure::Internal(e.to_string()),
        }
    }
}

impl From<rtnet::substrate::NnError> for Failure {
    fn from(e: rtnet::substrate::NnError) -> Self {
        Failure::Internal(e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

struct Ctx {
    data_dir: PathBuf,
}

impl Ctx {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        }
    }

    /// Resolves an input path that must already exist.
    fn input(&self, p: &Path) -> Result<PathBuf> {
        let r = self.resolve(p);
        if r.exists() {
            Ok(r)
        } else {
            Err(Failure::User(format!("no such file: {}", r.display())))
        }
    }

    fn write(&self, p: &Path, text: &str) -> Result<()> {
        let r = self.resolve(p);
        std::fs::write(&r, text).map_err(|e| Failure::Internal(format!("cannot write {}: {e}", r.display())))?;
        log::info!("wrote {}", r.display());
        Ok(())
    }
}

fn load_config(ctx: &Ctx, path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(&ctx.input(p)?)?),
        None => Ok(RunConfig::default()),
    }
}

fn provenance(what: &str, seed: u64, config: &serde_json::Value) -> Vec<String> {
    vec![
        format!("rtnet {} {what}", env!("CARGO_PKG_VERSION")),
        format!("seed {seed}"),
        format!("config {config}"),
    ]
}

fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let mut run = load_config(ctx, a.config.as_deref())?;
    if let Some(s) = a.seed {
        run.synth.seed = s;
    }
    if let Some(n) = a.pairs {
        run.synth.pairs = n;
    }
    let corpus = generate_synthetic_corpus(&run.synth)?;
    let out = ctx.resolve(&a.out);
    write_corpus(&corpus, &out)?;
    log::info!("wrote {} conversations to {}", corpus.conversations.len(), out.display());
    Ok(())
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let mut run = load_config(ctx, a.config.as_deref())?;
    if let Some(s) = a.seed {
        run.seed = s;
    }
    if let Some(n) = a.iterations {
        run.train.iterations = n;
    }
    run.validate()?;
    let corpus_path = a
        .corpus
        .or_else(|| run.paths.corpus.clone())
        .ok_or_else(|| Failure::User("no corpus given (use --corpus or [paths].corpus)".into()))?;
    let corpus = read_corpus(&ctx.input(&corpus_path)?)?;
    let result = train_from_corpus(&corpus, &run)?;
    let out = ctx.resolve(&a.out);
    result.model.save(&out)?;
    log::info!("wrote {}", out.display());
    let log_path = a.log.unwrap_or_else(|| a.out.with_extension("loss.tsv"));
    let comments = provenance("loss log", run.seed, &run.to_json());
    ctx.write(&log_path, &result.log.to_tsv(&comments))?;
    if let Some(last) = result.log.records.last() {
        println!("iteration {}: bce {:.6} kl {:.6}", last.iteration, last.bce, last.kl);
    }
    Ok(())
}

struct Loaded {
    model: TrainedModel,
    pairs: Vec<PairExample>,
}

fn load_data(ctx: &Ctx, a: &DataArgs) -> Result<Loaded> {
    let model = TrainedModel::load(&ctx.input(&a.ckpt)?)?;
    let corpus: Corpus = read_corpus(&ctx.input(&a.corpus)?)?;
    if corpus.meta.acoustic_dim != model.meta.model.acoustic_dim {
        return Err(Failure::User(format!(
            "corpus acoustic_dim {} does not match the checkpoint's {}",
            corpus.meta.acoustic_dim, model.meta.model.acoustic_dim
        )));
    }
    let ds = build_dataset_with_vocab(&corpus, &model.meta.dataset, model.meta.vocab.clone())?;
    let pairs = match a.split {
        Split::Train => ds.train,
        Split::Test => ds.test,
        Split::All => ds.train.into_iter().chain(ds.test).collect(),
    };
    if pairs.is_empty() {
        return Err(Failure::User("the selected split holds no usable turn pairs".into()));
    }
    Ok(Loaded { model, pairs })
}

fn checkpoint_run(m: &TrainedModel) -> serde_json::Value {
    m.meta.run.clone()
}

fn act_csv(samples: &[OffsetSample], comments: &[String]) -> Result<String> {
    let groups = group_by_act(samples);
    let mut hists = Vec::new();
    for (act, group) in &groups {
        hists.push((act.clone(), OffsetHistogram::with_defaults(&offsets_of(group)).expect("group is nonempty")));
    }
    let all: Vec<f64> = samples.iter().map(|s| s.offset_ms).collect();
    hists.push(("all".into(), OffsetHistogram::with_defaults(&all).expect("samples are nonempty")));
    let cols: Vec<(String, &OffsetHistogram)> = hists.iter().map(|(n, h)| (n.clone(), h)).collect();
    histograms_csv(&cols, comments).map_err(|e| Failure::Internal(e.to_string()))
}

fn evaluate_cmd(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    let d = load_data(ctx, &a.data)?;
    let runs = a.runs.unwrap_or_else(|| {
        d.model.meta.run["evaluate"]["runs"]
            .as_u64()
            .map(|r| r as u32)
            .unwrap_or(3)
    });
    if runs == 0 {
        return Err(Failure::User("--runs must be at least 1".into()));
    }
    let (report, samples) = evaluate(&d.model.model, &d.pairs, runs, a.seed)?;
    let doc = serde_json::json!({
        "checkpoint": {
            "path": a.data.ckpt,
            "seed": d.model.meta.seed,
            "config": checkpoint_run(&d.model),
        },
        "corpus": a.data.corpus,
        "report": report,
    });
    let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
    match &a.out {
        Some(p) => ctx.write(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = &a.csv {
        let comments = provenance("evaluation histograms (uniform R_START)", a.seed, &checkpoint_run(&d.model));
        ctx.write(p, &act_csv(&samples, &comments)?)?;
    }
    if a.out.is_some() {
        println!(
            "bce {:.6} (baseline {:.6})  mae {:.4} s (baseline {:.4} s)",
            report.losses.bce, report.baseline.bce, report.mae.mae_s, report.baseline_mae.mae_s
        );
    }
    Ok(())
}

fn sample_cmd(ctx: &Ctx, a: SampleArgs) -> Result<()> {
    let d = load_data(ctx, &a.data)?;
    if a.runs == 0 {
        return Err(Failure::User("--runs must be at least 1".into()));
    }
    let samples = sample_offsets(&d.model.model, &d.pairs, a.r_start, a.seed, a.runs)?;
    let comments = provenance(
        &format!("offset samples (runs {}, r_start {:?})", a.runs, a.r_start),
        a.seed,
        &checkpoint_run(&d.model),
    );
    ctx.write(&a.out, &offset_dump(&samples, &comments))?;
    if let Some(p) = &a.csv {
        ctx.write(p, &act_csv(&samples, &comments)?)?;
    }
    for s in act_summaries(&samples).map_err(|e| Failure::Internal(e.to_string()))? {
        println!(
            "{}\tn={}\tmean={:.1} ms\tmode={} ms\tcensored={}",
            s.act, s.samples, s.mean_ms, s.mode_ms, s.censored
        );
    }
    Ok(())
}

fn fit_latent(ctx: &Ctx, a: FitLatentArgs) -> Result<()> {
    let d = load_data(ctx, &a.data)?;
    if !d.model.model.is_vae() {
        return Err(Failure::User("fit-latent needs an rtnet-vae checkpoint".into()));
    }
    let mut labelled = Vec::new();
    let mut rows = Vec::new();
    for ex in &d.pairs {
        let Some(mu) = d.model.model.latent_mean(&ex.response)? else {
            return Err(Failure::User("the checkpoint's encoder is disabled; it has no latent space".into()));
        };
        let z: Vec<f64> = mu.iter().map(|&v| v as f64).collect();
        if let Some(act) = &ex.act {
            labelled.push((act.clone(), z.clone()));
        }
        rows.push((ex.id.clone(), ex.act.clone(), z));
    }
    let spec = fit_latent_spec(&labelled)?;
    let comments = provenance("latent spec", a.seed, &checkpoint_run(&d.model));
    ctx.write(&a.out, &spec.to_text(&comments))?;
    if let Some(p) = &a.export_z {
        let mut text: String = comments.iter().map(|c| format!("# {c}\n")).collect();
        text.push_str("pair_id\tact\tz\n");
        for (id, act, z) in rows {
            let z: Vec<String> = z.iter().map(|v| format!("{v:?}")).collect();
            text.push_str(&format!("{id}\t{}\t{}\n", act.as_deref().unwrap_or("-"), z.join(",")));
        }
        ctx.write(p, &text)?;
    }
    for (act, g) in &spec.acts {
        println!("{act}\tn={}\tmu={:?}", g.n, g.mu);
    }
    Ok(())
}

fn interpolate(ctx: &Ctx, a: InterpolateArgs) -> Result<()> {
    let d = load_data(ctx, &a.data)?;
    let spec_path = ctx.input(&a.spec)?;
    let text = std::fs::read_to_string(&spec_path)
        .map_err(|e| Failure::Internal(format!("cannot read {}: {e}", spec_path.display())))?;
    let spec = LatentSpec::from_text(&text)?;
    let n = a.samples.unwrap_or_else(|| {
        d.model.meta.run["evaluate"]["samples"]
            .as_u64()
            .map(|v| v as usize)
            .unwrap_or(1000)
    });
    if n == 0 || a.alphas.is_empty() {
        return Err(Failure::User("need at least one α and one sample".into()));
    }
    let mut all = Vec::new();
    let mut hists = Vec::new();
    for &alpha in &a.alphas {
        let g = spec.interpolate(&a.from, &a.to, alpha)?;
        let mut samples = sample_from_latent(&d.model.model, &d.pairs, &g, a.latent, a.r_start, a.seed, n)?;
        let label = format!("{}~{}@{alpha}", a.from, a.to);
        for s in &mut samples {
            s.act = Some(label.clone());
        }
        let offsets: Vec<f64> = samples.iter().map(|s| s.offset_ms).collect();
        println!(
            "alpha {alpha}\tmean={:.1} ms\tcensored={}",
            offsets.iter().sum::<f64>() / n as f64,
            samples.iter().filter(|s| s.censored).count()
        );
        hists.push((format!("alpha={alpha}"), OffsetHistogram::with_defaults(&offsets).expect("n > 0")));
        all.extend(samples);
    }
    let comments = provenance(
        &format!("interpolated offsets {} -> {} ({:?} latent)", a.from, a.to, a.latent),
        a.seed,
        &checkpoint_run(&d.model),
    );
    ctx.write(&a.out, &offset_dump(&all, &comments))?;
    if let Some(p) = &a.csv {
        let cols: Vec<(String, &OffsetHistogram)> = hists.iter().map(|(n, h)| (n.clone(), h)).collect();
        ctx.write(p, &histograms_csv(&cols, &comments).map_err(|e| Failure::Internal(e.to_string()))?)?;
    }
    Ok(())
}

fn gradcheck(ctx: &Ctx, a: GradcheckArgs) -> Result<()> {
    let reports = gradcheck_suite(a.seed);
    for r in &reports {
        println!(
            "{:<28} max rel. error {:.3e}  {}",
            r.target,
            r.max_rel_error(),
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    if let Some(p) = &a.out {
        let doc = serde_json::json!({ "seed": a.seed, "reports": reports });
        ctx.write(p, &(serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"))?;
    }
    if reports.iter().all(|r| r.passed()) {
        Ok(())
    } else {
        Err(Failure::Internal("gradient check failed".into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let ctx = Ctx { data_dir: cli.data_dir };
    let result = match cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Sample(a) => sample_cmd(&ctx, a),
        Command::FitLatent(a) => fit_latent(&ctx, a),
        Command::Interpolate(a) => interpolate(&ctx, a),
        Command::Gradcheck(a) => gradcheck(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(2)
        }
    }
}
