use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use smci::estimators::{
    gsmci_estimate, ksmci_estimate, mci_estimate, s2_mean, s2_pair, s2_region, smci1_mean, smci1_pair,
    spin_product, spin_value,
};
use smci::exact::exact_moments;
use smci::experiments::{
    generate_model, run_inference_experiment, run_learning_experiment, GraphSpec, InferenceConfig, InferenceMethod,
    LearningExperimentConfig, LearningScenario, ParamRanges, ResultTable,
};
use smci::io::{read_graph, read_model, read_samples, samples_to_csv, write_model};
use smci::learning::{exact_mle, learn, LearnConfig, LearnMethod, MLE_MAX_ITERATIONS, MLE_TOLERANCE};
use smci::model::DEFAULT_REGION_CAP;
use smci::sampling::{draw_sample_set, AnnealSchedule};
use smci::{EstimatorKind, Model, Region};

#[derive(Debug, Parser)]
#[command(name = "smci", version, about = "Spatial Monte Carlo integration for pairwise Boltzmann machines")]
struct Cli {
    /// JSON object of flag values (keys are long flag names); flags given on
    /// the command line take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw random biases and couplings on a graph
    GenModel(GenModelArgs),
    /// Draw a sample set by simulated annealing
    Sample(SampleArgs),
    /// Estimate one expectation from a sample set
    Estimate(EstimateArgs),
    /// Exact means and edge moments by enumeration
    Exact(ExactArgs),
    /// Learn parameters from data
    Learn(LearnArgs),
    /// Batch experiments
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// Covariance accuracy of the estimators over random models
    Inference(InferenceArgs),
    /// Coupling accuracy of the learners against the exact MLE
    Learning(LearningArgs),
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

fn parse_graph(s: &str) -> Result<GraphSpec, String> {
    s.parse().map_err(|e: smci::Error| e.to_string())
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct RangeArgs {
    #[arg(long, value_parser = parse_range, default_value = "-0.2,0.2", allow_hyphen_values = true)]
    bias_range: (f64, f64),
    #[arg(long, value_parser = parse_range, default_value = "-0.3,0.3", allow_hyphen_values = true)]
    coupling_range: (f64, f64),
}

impl RangeArgs {
    fn ranges(&self) -> ParamRanges {
        ParamRanges { bias: self.bias_range, coupling: self.coupling_range }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct ScheduleArgs {
    /// Sweeps of the linear annealing ramp from β = 0 to 1
    #[arg(long, default_value_t = 1000)]
    anneal_sweeps: usize,
    /// Sweeps at β = 1 after the ramp
    #[arg(long, default_value_t = 100)]
    equilibration_sweeps: usize,
}

impl ScheduleArgs {
    fn schedule(&self) -> AnnealSchedule {
        AnnealSchedule::linear(self.anneal_sweeps, self.equilibration_sweeps)
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct GenModelArgs {
    #[arg(long, value_parser = parse_graph)]
    graph: GraphSpec,
    #[command(flatten)]
    ranges: RangeArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model JSON path (stdout if absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    /// Number of sample points
    #[arg(long)]
    num: usize,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    samples: PathBuf,
    /// mci, smci1, smci-s2, smciK (K ≥ 1) or gsmci
    #[arg(long)]
    method: String,
    /// Target vertex `i` or vertex pair `i,j`
    #[arg(long)]
    target: String,
    /// Sum region for gsmci, comma separated
    #[arg(long)]
    region: Option<String>,
    #[arg(long, default_value_t = DEFAULT_REGION_CAP)]
    region_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct ExactArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct LearnArgs {
    /// Learner graph: a spec such as grid:4x5, or a graph JSON file
    #[arg(long)]
    graph: String,
    /// Training data (sample-set CSV)
    #[arg(long)]
    data: PathBuf,
    /// exact, fixed-KIND or pcd-KIND with KIND one of smci1, s2, smci-s2, smciK, mci
    #[arg(long)]
    method: String,
    /// Data extension rate of the persistent chains
    #[arg(long, default_value_t = 1)]
    e: usize,
    #[arg(long, default_value_t = 1)]
    kappa: usize,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `exact` for the exact MLE, or a model JSON file
    #[arg(long, default_value = "exact")]
    r#ref: String,
    /// Trace CSV with columns step,mae,grad_norm (stdout if neither this nor --out is given)
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Learned model JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct InferenceArgs {
    #[arg(long, value_parser = parse_graph, default_value = "grid:4x5")]
    graph: GraphSpec,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Sample sizes M
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    sizes: Vec<usize>,
    /// Subset of mci, smci1, smci-s2, smciK, ais
    #[arg(long, value_delimiter = ',', default_value = "mci,smci1,smci-s2,smci2,ais")]
    methods: Vec<String>,
    #[command(flatten)]
    ranges: RangeArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// AIS chain count (defaults to each sample size M)
    #[arg(long)]
    ais_chains: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    ais_step: f64,
    #[arg(long, default_value_t = DEFAULT_REGION_CAP)]
    region_cap: usize,
    /// Run trials on all cores; output is identical to a serial run
    #[arg(long)]
    parallel: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Raw rows CSV (stdout if absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary with per-method means and standard errors
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct LearningArgs {
    /// matched (grid generator) or mismatched (complete-graph generator)
    #[arg(long, default_value = "matched")]
    scenario: String,
    /// Generator graph (default depends on the scenario)
    #[arg(long, value_parser = parse_graph)]
    generator: Option<GraphSpec>,
    #[arg(long, value_parser = parse_graph, default_value = "grid:4x5")]
    learner: GraphSpec,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Training set size N
    #[arg(long, default_value_t = 50)]
    data_size: usize,
    /// Learners as in `learn --method`, with `-eE` and `-kK` suffixes for PCD
    /// (e.g. pcd-smci1-e2-k1); default depends on the scenario
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    #[arg(long, default_value_t = 50)]
    trace_stride: usize,
    #[command(flatten)]
    ranges: RangeArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    parallel: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn gen_model(a: &GenModelArgs) -> Result<()> {
    let graph = a.graph.build(a.seed);
    let model = generate_model(&graph, &a.ranges.ranges(), a.seed)?;
    match &a.out {
        Some(p) => write_model(p, &model)?,
        None => println!("{}", smci::io::model_to_json(&model)?),
    }
    Ok(())
}

fn sample(a: &SampleArgs) -> Result<()> {
    let model = read_model(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let s = draw_sample_set(&model, a.num, &a.schedule.schedule(), a.seed)?;
    write_output(a.out.as_deref(), &samples_to_csv(&s, a.seed))
}

fn parse_vertices(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| v.trim().parse::<usize>().with_context(|| format!("bad vertex `{v}`")))
        .collect()
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let model = read_model(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let s = read_samples(&a.samples).with_context(|| format!("reading {}", a.samples.display()))?;
    let target = parse_vertices(&a.target)?;
    let t = Region::new(target.iter().copied());
    if t.len() != target.len() || !(1..=2).contains(&t.len()) {
        bail!("target must be one vertex or two distinct vertices");
    }
    model.graph().check_region(&t)?;
    let pair = t.len() == 2;
    let f = if pair { spin_product::<f64> } else { spin_value::<f64> };
    let (i, j) = (t.members()[0], *t.members().last().unwrap());
    let is_edge = pair && model.graph().has_edge(i, j);
    let value = match a.method.as_str() {
        "mci" => mci_estimate(f, &t, &s)?.value,
        "smci1" if !pair => smci1_mean(&model, i, &s)?.value,
        "smci1" if is_edge => smci1_pair(&model, i, j, &s)?.value,
        "smci-s2" if !pair => s2_mean(&model, i, &s2_region(&model, &t), &s)?.value,
        "smci-s2" => s2_pair(&model, i, j, &s2_region(&model, &t), &s)?.value,
        "gsmci" => {
            let region = a.region.as_deref().context("gsmci needs --region")?;
            let region = Region::new(parse_vertices(region)?);
            gsmci_estimate(&model, f, &t, &region, &s, a.region_cap)?.value
        }
        other => match other.parse::<EstimatorKind>()? {
            EstimatorKind::Smci1 => ksmci_estimate(&model, f, &t, 1, &s, a.region_cap)?.value,
            EstimatorKind::Ksmci(k) => ksmci_estimate(&model, f, &t, k, &s, a.region_cap)?.value,
            _ => bail!("unsupported estimator `{other}`"),
        },
    };
    let target = t.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
    let text = format!("target,method,M,estimate\n{target},{},{},{value}\n", a.method, s.len());
    write_output(a.out.as_deref(), &text)
}

fn exact(a: &ExactArgs) -> Result<()> {
    let model = read_model(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let m = exact_moments(&model)?;
    let mut text = String::from("i,j,value\n");
    for (i, v) in m.means.iter().enumerate() {
        text.push_str(&format!("{i},,{v}\n"));
    }
    for (&(i, j), v) in model.graph().edges().iter().zip(&m.pairs) {
        text.push_str(&format!("{i},{j},{v}\n"));
    }
    write_output(a.out.as_deref(), &text)
}

/// `exact`, `fixed-KIND` or `pcd-KIND[-eE][-kK]`; `e` and `kappa` fill in
/// whatever the label leaves out.
fn parse_learn_method(label: &str, e: usize, kappa: usize) -> Result<LearnMethod> {
    if label == "exact" {
        return Ok(LearnMethod::ExactMle);
    }
    if let Some(kind) = label.strip_prefix("fixed-") {
        return Ok(LearnMethod::Fixed(kind.parse()?));
    }
    let Some(rest) = label.strip_prefix("pcd-") else {
        bail!("unknown learning method `{label}`");
    };
    let (mut e, mut kappa) = (e, kappa);
    let mut parts: Vec<&str> = rest.split('-').collect();
    while parts.len() > 1 {
        let last = parts[parts.len() - 1];
        if let Some(v) = last.strip_prefix('e').and_then(|v| v.parse().ok()) {
            e = v;
        } else if let Some(v) = last.strip_prefix('k').and_then(|v| v.parse().ok()) {
            kappa = v;
        } else {
            break;
        }
        parts.pop();
    }
    Ok(LearnMethod::Pcd { kind: parts.join("-").parse()?, e, kappa })
}

fn learn_cmd(a: &LearnArgs) -> Result<()> {
    let graph = match a.graph.parse::<GraphSpec>() {
        Ok(spec) => spec.build(a.seed),
        Err(_) => read_graph(&a.graph).with_context(|| format!("reading graph {}", a.graph))?,
    };
    let data = read_samples(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let reference: Model = if a.r#ref == "exact" {
        exact_mle(&graph, &data, MLE_TOLERANCE, MLE_MAX_ITERATIONS)?
    } else {
        read_model(&a.r#ref).with_context(|| format!("reading {}", a.r#ref))?
    };
    let cfg = LearnConfig {
        method: parse_learn_method(&a.method, a.e, a.kappa)?,
        learning_rate: a.lr,
        steps: a.steps,
        seed: a.seed,
    };
    let trace = learn(&graph, &data, &cfg, &reference)?;
    let mut text = String::from("step,mae,grad_norm\n");
    for r in &trace.rows {
        text.push_str(&format!("{},{},{}\n", r.step, r.mae, r.grad_norm));
    }
    if let Some(p) = &a.out {
        write_model(p, &trace.params)?;
    }
    if a.trace.is_some() || a.out.is_none() {
        write_output(a.trace.as_deref(), &text)?;
    }
    Ok(())
}

fn report(table: &ResultTable, out: Option<&Path>, summary: Option<&Path>) -> Result<()> {
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    write_output(out, std::str::from_utf8(&csv)?)?;
    if let Some(p) = summary {
        fs::write(p, table.summary_json()? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    for note in &table.notes {
        eprintln!("note: {note}");
    }
    Ok(())
}

fn inference(a: &InferenceArgs) -> Result<()> {
    let mut cfg = InferenceConfig::new(a.graph.clone());
    cfg.trials = a.trials;
    cfg.sample_sizes = a.sizes.clone();
    cfg.methods = a.methods.iter().map(|m| m.parse::<InferenceMethod>()).collect::<smci::Result<_>>()?;
    cfg.ranges = a.ranges.ranges();
    cfg.seed = a.seed;
    cfg.schedule = a.schedule.schedule();
    cfg.ais_chains = a.ais_chains;
    cfg.ais_step = a.ais_step;
    cfg.region_cap = a.region_cap;
    cfg.parallel = a.parallel;
    let table = run_inference_experiment(&cfg)?;
    report(&table, a.out.as_deref(), a.summary.as_deref())
}

fn learning(a: &LearningArgs) -> Result<()> {
    let scenario: LearningScenario = a.scenario.parse()?;
    let mut cfg = LearningExperimentConfig::new(scenario);
    if let Some(g) = &a.generator {
        cfg.generator = g.clone();
    }
    cfg.learner = a.learner.clone();
    cfg.trials = a.trials;
    cfg.data_size = a.data_size;
    if !a.methods.is_empty() {
        cfg.methods = a.methods.iter().map(|m| parse_learn_method(m, 1, 1)).collect::<Result<_>>()?;
    }
    cfg.learning_rate = a.lr;
    cfg.steps = a.steps;
    cfg.trace_stride = a.trace_stride;
    cfg.ranges = a.ranges.ranges();
    cfg.schedule = a.schedule.schedule();
    cfg.parallel = a.parallel;
    cfg.seed = a.seed;
    let table = run_learning_experiment(&cfg)?;
    report(&table, a.out.as_deref(), a.summary.as_deref())
}

/// Expands `--config FILE` into flags placed right after the subcommand
/// name, so that flags typed on the command line override them.
fn expand_config(mut args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = if let Some(p) = args[pos].strip_prefix("--config=") {
        let p = p.to_string();
        args.remove(pos);
        p
    } else {
        if pos + 1 >= args.len() {
            bail!("--config needs a file argument");
        }
        let p = args.remove(pos + 1);
        args.remove(pos);
        p
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let json: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing config {path}"))?;
    let Some(obj) = json.as_object() else {
        bail!("config {path} must be a JSON object");
    };
    let mut flags = Vec::new();
    for (key, value) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            other => Err(anyhow::anyhow!("config key `{key}`: unsupported value {other}")),
        };
        match value {
            serde_json::Value::Null | serde_json::Value::Bool(false) => {}
            serde_json::Value::Bool(true) => flags.push(flag),
            serde_json::Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<Result<Vec<_>>>()?.join(",");
                flags.push(format!("{flag}={joined}"));
            }
            v => flags.push(format!("{flag}={}", scalar(v)?)),
        }
    }
    let mut at = 1;
    while at < args.len() && !args[at].starts_with('-') {
        at += 1;
        if args[at - 1] != "experiment" {
            break;
        }
    }
    args.splice(at..at, flags);
    Ok(args)
}

fn run() -> Result<()> {
    let args = expand_config(std::env::args().collect())?;
    let cli = Cli::parse_from(args);
    match &cli.command {
        Command::GenModel(a) => gen_model(a),
        Command::Sample(a) => sample(a),
        Command::Estimate(a) => estimate(a),
        Command::Exact(a) => exact(a),
        Command::Learn(a) => learn_cmd(a),
        Command::Experiment(ExperimentCommand::Inference(a)) => inference(a),
        Command::Experiment(ExperimentCommand::Learning(a)) => learning(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
