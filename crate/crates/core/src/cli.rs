//! The `fmeffects` command line.
//!
//! Every flag of `fme`, `came` and `fit` can also be given in a JSON file
//! passed with `--config`; keys are the long flag names with `-` replaced by
//! `_`. Flags win over the file.

use std::ffi::OsString;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::data::{load_csv, load_schema, Dataset, Schema, Step, StepVector};
use crate::effects::{fme_batch, EffectTable};
use crate::error::{Error, Result};
use crate::extrapolation::{DetectorConfig, DetectorKind, FittedDetector};
use crate::nonlinearity::{attach_nlm, DEFAULT_SUBINTERVALS};
use crate::predictors::{fit_model, ExternalPredictor, FittedModel, ModelSpec, Predictor, DEFAULT_TIMEOUT};
use crate::scenarios::{emit_plot_data, run_scenarios, ScenarioName, ScenarioSpec};
use crate::subspace::{fit_effect_tree, TreeParams};

/// Seconds to wait for each response of an external predictor.
pub const TIMEOUT_ENV: &str = "FMEFFECTS_PREDICTOR_TIMEOUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "fmeffects", version, about = "Forward marginal effects for regression models")]
struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute forward marginal effects, optionally with NLMs.
    Fme(EffectArgs),
    /// Fit an effect tree and report conditional average effects per leaf.
    Came(CameArgs),
    /// Run a simulation scenario and write plot data.
    Simulate(SimulateArgs),
    /// Fit a built-in model and store it as JSON.
    Fit(FitArgs),
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// JSON file with default values for any of the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training data (CSV with header).
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON column declarations, {"col": "continuous" | "categorical"}.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Target column; dropped from the features.
    #[arg(long)]
    target: Option<String>,
    /// Built-in model fitted on the data: linear, cart, bagged or krr.
    #[arg(long)]
    model: Option<String>,
    /// Previously fitted model (see `fit`).
    #[arg(long)]
    model_file: Option<PathBuf>,
    /// Command of an external predictor, split on whitespace.
    #[arg(long)]
    external: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct EffectArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Observations to explain; defaults to the training data.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// `name=value` shifts a numeric feature, `name->category` replaces a
    /// categorical one. Repeat for multivariate steps.
    #[arg(long = "step")]
    steps: Vec<String>,
    /// envelope, mcec, cert or none.
    #[arg(long)]
    detector: Option<String>,
    #[arg(long)]
    uniform_budget: Option<usize>,
    /// Attach non-linearity measures.
    #[arg(long)]
    nlm: bool,
    #[arg(long)]
    subintervals: Option<usize>,
    /// Drop rows whose forward point extrapolates instead of flagging them.
    #[arg(long)]
    exclude_forward_ep: bool,
    #[arg(long, value_enum)]
    out: Option<OutFormat>,
}

#[derive(Args, Debug, Default)]
struct CameArgs {
    #[command(flatten)]
    effect: EffectArgs,
    /// Significance level of the split test.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    min_node: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    permutations: Option<usize>,
    /// Level of the leaf confidence intervals.
    #[arg(long)]
    ci_alpha: Option<f64>,
    /// Write tree.json and leaves.csv here instead of printing to stdout.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario name, or `all`.
    name: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Grid points per axis.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Output file; stdout when absent.
    #[arg(long)]
    save: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ModelChoice {
    Name(String),
    Spec(ModelSpec),
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    schema: Option<PathBuf>,
    target: Option<String>,
    model: Option<ModelChoice>,
    model_file: Option<PathBuf>,
    external: Option<Vec<String>>,
    seed: Option<u64>,
    eval: Option<PathBuf>,
    step: Option<StepVector>,
    detector: Option<String>,
    uniform_budget: Option<usize>,
    nlm: Option<bool>,
    subintervals: Option<usize>,
    exclude_forward_ep: Option<bool>,
    out: Option<OutFormat>,
    alpha: Option<f64>,
    min_node: Option<usize>,
    max_depth: Option<usize>,
    permutations: Option<usize>,
    ci_alpha: Option<f64>,
    out_dir: Option<PathBuf>,
    threads: Option<usize>,
    save: Option<PathBuf>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))
}

/// Parses `name=value` or `name->category`.
pub fn parse_step(arg: &str) -> Result<(String, Step)> {
    if let Some((name, cat)) = arg.split_once("->") {
        let (name, cat) = (name.trim(), cat.trim());
        if name.is_empty() || cat.is_empty() {
            return Err(Error::InvalidStep(format!("malformed step {arg:?}")));
        }
        return Ok((name.into(), Step::Category(cat.into())));
    }
    let (name, value) = arg
        .rsplit_once('=')
        .ok_or_else(|| Error::InvalidStep(format!("malformed step {arg:?}; use name=value or name->category")))?;
    let h: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidStep(format!("step value {value:?} for {name:?} is not a number")))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(Error::InvalidStep(format!("malformed step {arg:?}")));
    }
    Ok((name.into(), Step::Shift(h)))
}

pub fn parse_steps(args: &[String]) -> Result<StepVector> {
    StepVector::new(args.iter().map(|a| parse_step(a)).collect::<Result<Vec<_>>>()?)
}

fn external_timeout() -> Result<Duration> {
    match std::env::var(TIMEOUT_ENV) {
        Err(_) => Ok(DEFAULT_TIMEOUT),
        Ok(v) => {
            v.trim().parse::<f64>().ok().filter(|s| *s > 0.0 && s.is_finite()).map(Duration::from_secs_f64).ok_or_else(
                || Error::InvalidArgument(format!("{TIMEOUT_ENV}={v:?} is not a positive number of seconds")),
            )
        }
    }
}

enum Source {
    Fit(ModelSpec),
    File(PathBuf),
    External(Vec<String>),
}

struct Inputs {
    data: PathBuf,
    schema: Option<Schema>,
    target: Option<String>,
    source: Source,
    seed: u64,
}

fn resolve_inputs(flags: &ModelArgs, file: &mut FileConfig) -> Result<Inputs> {
    let data =
        flags.data.clone().or(file.data.take()).ok_or_else(|| Error::InvalidArgument("--data is required".into()))?;
    let schema = match flags.schema.clone().or(file.schema.take()) {
        Some(p) => Some(load_schema(p)?),
        None => None,
    };
    let seed = flags.seed.or(file.seed).unwrap_or(0);

    let model = match &flags.model {
        Some(name) => Some(ModelSpec::from_name(name)?),
        None => match file.model.take() {
            Some(ModelChoice::Name(n)) => Some(ModelSpec::from_name(&n)?),
            Some(ModelChoice::Spec(s)) => Some(s),
            None => None,
        },
    };
    let model_file = flags.model_file.clone().or(file.model_file.take());
    let external = match &flags.external {
        Some(cmd) => Some(cmd.split_whitespace().map(String::from).collect()),
        None => file.external.take(),
    };
    // Flags of one kind replace config entries of every kind.
    let flagged =
        flags.model.is_some() as usize + flags.model_file.is_some() as usize + flags.external.is_some() as usize;
    let (model, model_file, external) = if flagged > 0 {
        (
            model.filter(|_| flags.model.is_some()),
            model_file.filter(|_| flags.model_file.is_some()),
            external.filter(|_| flags.external.is_some()),
        )
    } else {
        (model, model_file, external)
    };
    let source = match (model, model_file, external) {
        (Some(mut spec), None, None) => {
            if let ModelSpec::Bagged { seed: s, .. } = &mut spec {
                if flags.seed.is_some() || file.seed.is_some() {
                    *s = seed;
                }
            }
            Source::Fit(spec)
        }
        (None, Some(p), None) => Source::File(p),
        (None, None, Some(cmd)) => Source::External(cmd),
        (None, None, None) => {
            return Err(Error::InvalidArgument("no model: give one of --model, --model-file or --external".into()))
        }
        _ => return Err(Error::InvalidArgument("give exactly one of --model, --model-file or --external".into())),
    };
    let target = flags.target.clone().or(file.target.take());
    if matches!(source, Source::Fit(_)) && target.is_none() {
        return Err(Error::InvalidArgument("--target is required to fit a model".into()));
    }
    Ok(Inputs { data, schema, target, source, seed })
}

/// Loaded training features and the model explaining them.
struct Loaded {
    train: Dataset,
    model: Box<dyn Predictor>,
}

fn drop_target(d: &Dataset, target: Option<&str>) -> Result<Dataset> {
    match target {
        Some(t) if d.feature_index(t).is_ok() => Ok(d.split_target(t)?.0),
        Some(t) => Err(Error::UnknownFeature(t.to_string())),
        None => Ok(d.clone()),
    }
}

fn load(inputs: &Inputs) -> Result<Loaded> {
    let raw = load_csv(&inputs.data, inputs.schema.as_ref())?;
    let (train, model): (Dataset, Box<dyn Predictor>) = match &inputs.source {
        Source::Fit(spec) => {
            let target = inputs.target.as_deref().expect("checked");
            let model = fit_model(spec, &raw, target)?;
            (raw.split_target(target)?.0, Box::new(model))
        }
        Source::File(path) => {
            let model = FittedModel::load(path)?;
            let x = drop_target(&raw, inputs.target.as_deref())?;
            let names: Vec<&str> = model.features().iter().map(|f| f.name.as_str()).collect();
            (x.select_columns(&names)?, Box::new(model))
        }
        Source::External(cmd) => {
            let x = drop_target(&raw, inputs.target.as_deref())?;
            let model = ExternalPredictor::spawn(cmd, x.features().to_vec(), external_timeout()?)?;
            (x, Box::new(model))
        }
    };
    Ok(Loaded { train, model })
}

fn eval_data(path: Option<PathBuf>, loaded: &Loaded, target: Option<&str>) -> Result<Dataset> {
    let Some(path) = path else {
        return Ok(loaded.train.clone());
    };
    let schema = loaded.train.schema();
    let raw = load_csv(&path, Some(&schema))?;
    let x = match target {
        Some(t) if raw.feature_index(t).is_ok() => raw.split_target(t)?.0,
        _ => raw,
    };
    x.select_columns(&loaded.train.names())
}

fn detector(name: Option<String>, budget: Option<usize>, seed: u64, train: &Dataset) -> Result<Option<FittedDetector>> {
    let name = name.unwrap_or_else(|| "envelope".into());
    if name == "none" {
        return Ok(None);
    }
    let kind: DetectorKind = name.parse()?;
    let config = DetectorConfig { detector: kind, uniform_budget: budget, seed };
    Ok(Some(config.fit(train)?))
}

struct EffectRun {
    table: EffectTable,
    data: Dataset,
    out: OutFormat,
    seed: u64,
}

fn effects(args: EffectArgs, file: &mut FileConfig) -> Result<EffectRun> {
    let inputs = resolve_inputs(&args.model, file)?;
    let step = if args.steps.is_empty() {
        file.step.take().ok_or_else(|| Error::InvalidStep("no --step given".into()))?
    } else {
        parse_steps(&args.steps)?
    };
    let subintervals = args.subintervals.or(file.subintervals).unwrap_or(DEFAULT_SUBINTERVALS);
    let nlm = args.nlm || file.nlm.unwrap_or(false);
    let exclude = args.exclude_forward_ep || file.exclude_forward_ep.unwrap_or(false);
    let out = args.out.or(file.out).unwrap_or(OutFormat::Json);

    let loaded = load(&inputs)?;
    step.bind(loaded.train.features())?;
    let data = eval_data(args.eval.or(file.eval.take()), &loaded, inputs.target.as_deref())?;
    let det = detector(
        args.detector.or(file.detector.take()),
        args.uniform_budget.or(file.uniform_budget),
        inputs.seed,
        &loaded.train,
    )?;
    let mut table = fme_batch(&*loaded.model, &data, &step, det.as_ref().map(|d| d as _))?;
    if exclude {
        table.exclude_forward_ep();
    }
    if table.records.is_empty() {
        return Err(Error::NoEvaluableObservations);
    }
    if nlm {
        attach_nlm(&*loaded.model, &mut table, subintervals)?;
    }
    Ok(EffectRun { table, data, out, seed: inputs.seed })
}

fn cmd_fme(args: EffectArgs, mut file: FileConfig) -> Result<()> {
    let run = effects(args, &mut file)?;
    let mut out = BufWriter::new(io::stdout().lock());
    match run.out {
        OutFormat::Json => run.table.write_json(&mut out)?,
        OutFormat::Csv => run.table.write_csv(&mut out)?,
    }
    out.flush().map_err(|e| Error::io("<stdout>", e))
}

fn cmd_came(args: CameArgs, mut file: FileConfig) -> Result<()> {
    let defaults = TreeParams::default();
    let alpha = args.alpha.or(file.alpha);
    let min_node = args.min_node.or(file.min_node);
    let max_depth = args.max_depth.or(file.max_depth);
    let permutations = args.permutations.or(file.permutations);
    let ci_alpha = args.ci_alpha.or(file.ci_alpha);
    let out_dir = args.out_dir.or(file.out_dir.take());
    for (name, a) in [("alpha", alpha), ("ci-alpha", ci_alpha)] {
        if let Some(a) = a {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidArgument(format!("--{name} must lie in (0, 1), got {a}")));
            }
        }
    }
    let run = effects(args.effect, &mut file)?;
    let params = TreeParams {
        alpha: alpha.unwrap_or(defaults.alpha),
        min_node_size: min_node.unwrap_or(defaults.min_node_size),
        max_depth: max_depth.unwrap_or(defaults.max_depth),
        permutations: permutations.unwrap_or(defaults.permutations),
        seed: run.seed,
        ci_alpha: ci_alpha.unwrap_or(defaults.ci_alpha),
    };
    let tree = fit_effect_tree(&run.data, &run.table, &params)?;
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let path = dir.join("tree.json");
            tree.write_json(BufWriter::new(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?))?;
            let path = dir.join("leaves.csv");
            tree.write_leaves_csv(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?)?;
            Ok(())
        }
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            match run.out {
                OutFormat::Json => tree.write_json(&mut out)?,
                OutFormat::Csv => tree.write_leaves_csv(&mut out)?,
            }
            out.flush().map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let names: Vec<ScenarioName> =
        if args.name == "all" { ScenarioName::ALL.to_vec() } else { vec![args.name.parse()?] };
    let specs: Vec<ScenarioSpec> = names
        .into_iter()
        .map(|n| {
            let mut spec = ScenarioSpec::new(n).with_seed(args.seed);
            if let Some(g) = args.grid {
                spec.grid = g;
            }
            spec
        })
        .collect();
    let mut out = BufWriter::new(io::stdout().lock());
    for result in run_scenarios(&specs) {
        for path in emit_plot_data(&result?, &args.out_dir)? {
            writeln!(out, "{}", path.display()).map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    out.flush().map_err(|e| Error::io("<stdout>", e))
}

fn cmd_fit(args: FitArgs, mut file: FileConfig) -> Result<()> {
    let inputs = resolve_inputs(&args.model, &mut file)?;
    let Source::Fit(spec) = &inputs.source else {
        return Err(Error::InvalidArgument("fit needs --model".into()));
    };
    let raw = load_csv(&inputs.data, inputs.schema.as_ref())?;
    let model = fit_model(spec, &raw, inputs.target.as_deref().expect("checked"))?;
    match args.save.or(file.save.take()) {
        Some(path) => model.save(path),
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            serde_json::to_writer(&mut out, &model)?;
            writeln!(out).map_err(|e| Error::io("<stdout>", e))?;
            out.flush().map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn config_path(command: &Command) -> Option<&Path> {
    match command {
        Command::Fme(a) => a.model.config.as_deref(),
        Command::Came(a) => a.effect.model.config.as_deref(),
        Command::Fit(a) => a.model.config.as_deref(),
        Command::Simulate(_) => None,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = read_config(config_path(&cli.command))?;
    let threads = cli.threads.or(file.threads);
    let run = move || match cli.command {
        Command::Fme(a) => cmd_fme(a, file),
        Command::Came(a) => cmd_came(a, file),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a, file),
    };
    match threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(run),
        None => run(),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_DATA
    }
}

/// Runs the command line given by `args` and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}
