use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use latefuse::optimizers::Method;
use latefuse::pipeline::{compare, run, PipelineError, RunManifest};
use latefuse::synth::{generate, LabelRule, SynthSpec};

#[derive(Parser)]
#[command(name = "latefuse", version, about = "Weighted late fusion of inducer scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize fusion weights on dev and evaluate MAP@k on test.
    Run(RunArgs),
    /// Run several methods on the same data and tabulate them.
    Compare(CompareArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Dev inducer files or directories of them.
    #[arg(long, num_args = 1..)]
    dev: Vec<PathBuf>,
    /// Test inducer files or directories, named like the dev files.
    #[arg(long, num_args = 1..)]
    test: Vec<PathBuf>,
    /// Ground-truth files covering dev and test.
    #[arg(long, num_args = 1..)]
    truth: Vec<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Optimizer override, e.g. `--set pso.swarm_size=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Also write the per-iteration best objective as CSV.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    method: Option<Method>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Start from a manifest file; other flags override its fields.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Member run manifests.
    #[arg(long = "manifest")]
    manifests: Vec<PathBuf>,
    /// Methods to run on the data flags; `all` for the seven in table order.
    #[arg(long = "method", value_delimiter = ',')]
    methods: Vec<String>,
    #[command(flatten)]
    data: DataArgs,
    /// Summary directory; member runs go to `<out>/<method>` unless a manifest says otherwise.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelRuleArg {
    Threshold,
    RandomBalanced,
}

#[derive(Args)]
struct SynthArgs {
    /// Read the full spec from JSON instead of flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1877)]
    samples: usize,
    #[arg(long, default_value_t = 558)]
    test_samples: usize,
    #[arg(long, default_value_t = 29)]
    inducers: usize,
    #[arg(long, default_value_t = 60)]
    videos: usize,
    /// Comma-separated hidden weights; drawn at random when omitted.
    #[arg(long, value_delimiter = ',')]
    planted: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value_t = LabelRuleArg::Threshold)]
    label_rule: LabelRuleArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_overrides(pairs: &[String]) -> Result<BTreeMap<String, String>, PipelineError> {
    pairs
        .iter()
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| PipelineError::Usage(format!("`--set {p}` is not KEY=VALUE")))
        })
        .collect()
}

fn apply_data(m: &mut RunManifest, data: &DataArgs) -> Result<(), PipelineError> {
    if !data.dev.is_empty() {
        m.dev.clone_from(&data.dev);
    }
    if !data.test.is_empty() {
        m.test.clone_from(&data.test);
    }
    if !data.truth.is_empty() {
        m.truth.clone_from(&data.truth);
    }
    if let Some(k) = data.k {
        m.k = k;
    }
    if let Some(seed) = data.seed {
        m.seed = seed;
    }
    m.overrides.extend(parse_overrides(&data.overrides)?);
    m.trace |= data.trace;
    Ok(())
}

fn run_command(args: RunArgs) -> Result<(), PipelineError> {
    let mut manifest = match &args.manifest {
        Some(path) => RunManifest::load(path)?,
        None => {
            let method = args
                .method
                .ok_or_else(|| PipelineError::Usage("--method or --manifest is required".into()))?;
            let out = args
                .out
                .clone()
                .ok_or_else(|| PipelineError::Usage("--out or --manifest is required".into()))?;
            RunManifest::new(method, vec![], vec![], vec![], out)
        }
    };
    if let Some(method) = args.method {
        manifest.method = method;
    }
    if let Some(out) = args.out {
        manifest.out = out;
    }
    apply_data(&mut manifest, &args.data)?;
    let outcome = run(&manifest)?;
    println!(
        "{}: dev_mse={} test_map_at_{}={} evaluations={} out={}",
        outcome.manifest.method,
        outcome.report.best_objective,
        outcome.manifest.k,
        outcome.eval.map_at_k,
        outcome.report.function_evaluations,
        outcome.manifest.out.display()
    );
    Ok(())
}

fn compare_command(args: CompareArgs) -> Result<(), PipelineError> {
    let mut manifests = Vec::new();
    for path in &args.manifests {
        let mut m = RunManifest::load(path)?;
        apply_data(&mut m, &args.data)?;
        manifests.push(m);
    }
    let mut methods = Vec::new();
    for name in &args.methods {
        if name == "all" {
            methods.extend(Method::ALL);
        } else {
            methods.push(name.parse::<Method>().map_err(PipelineError::Usage)?);
        }
    }
    for method in methods {
        let mut m = RunManifest::new(method, vec![], vec![], vec![], args.out.join(method.name()));
        apply_data(&mut m, &args.data)?;
        manifests.push(m);
    }
    let summary = compare(&manifests, &args.out)?;
    print!("{}", summary.to_csv());
    Ok(())
}

fn synth_command(args: SynthArgs) -> Result<(), PipelineError> {
    let spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|e| PipelineError::Usage(format!("bad synth spec: {e}")))?
        }
        None => SynthSpec {
            n_samples: args.samples,
            m_inducers: args.inducers,
            n_videos: args.videos,
            planted_weights: args.planted,
            noise_sigma: args.noise,
            label_rule: match args.label_rule {
                LabelRuleArg::Threshold => LabelRule::ThresholdOnPlantedFusion,
                LabelRuleArg::RandomBalanced => LabelRule::RandomBalanced,
            },
            seed: args.seed,
            test_samples: args.test_samples,
            score_ranges: None,
        },
    };
    let data = generate(&spec).map_err(|e| PipelineError::Usage(e.to_string()))?;
    let layout = data.write_to(&args.out).map_err(|e| PipelineError::Io {
        path: args.out.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;
    println!(
        "wrote {} dev and {} test inducer files, truth {}",
        layout.dev.len(),
        layout.test.len(),
        layout.truth.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_command(args),
        Command::Compare(args) => compare_command(args),
        Command::Synth(args) => synth_command(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("latefuse: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
