//! Batch experiments: covariance accuracy of the estimators on random
//! models, and coupling accuracy of the learners against the exact maximum
//! likelihood fit.
//!
//! Every trial draws its randomness from [`derive_seed`]`(master, trial,
//! stage)`, so a raw row depends only on the master seed, the trial index
//! and the configuration of that row's method.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::estimators::{covariance_table_with_cap, s2_region, EstimatorKind};
use crate::exact::exact_moments;
use crate::graph::{closed_region, PairwiseGraph, Region};
use crate::learning::{exact_mle, learn, LearnConfig, LearnMethod, MLE_MAX_ITERATIONS, MLE_TOLERANCE};
use crate::model::{PbmParams, SampleSet, DEFAULT_REGION_CAP};
use crate::sampling::{ais_estimate, chain_rng, draw_sample_set, AnnealSchedule};

/// Mixes `(master, trial, stage)` into an independent 64-bit seed
/// (SplitMix64 finalizer over an FNV-1a hash of the stage label).
pub fn derive_seed(master: u64, trial: u64, stage: &str) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let label = stage
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    mix(mix(mix(master) ^ trial) ^ label)
}

/// Graph family of an experiment, written `grid:4x5`, `random:20:0.2`,
/// `complete:20` or `edgeless:20`.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphSpec {
    Grid { rows: usize, cols: usize },
    Random { n: usize, p: f64 },
    Complete { n: usize },
    Edgeless { n: usize },
}

impl GraphSpec {
    /// Instantiates the graph; only `Random` consumes the seed.
    pub fn build(&self, seed: u64) -> PairwiseGraph {
        match *self {
            GraphSpec::Grid { rows, cols } => PairwiseGraph::grid(rows, cols),
            GraphSpec::Random { n, p } => PairwiseGraph::random(n, p, &mut chain_rng(seed, 0)),
            GraphSpec::Complete { n } => PairwiseGraph::complete(n),
            GraphSpec::Edgeless { n } => PairwiseGraph::edgeless(n),
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            GraphSpec::Grid { rows, cols } => rows * cols,
            GraphSpec::Random { n, .. } | GraphSpec::Complete { n } | GraphSpec::Edgeless { n } => n,
        }
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Grid { rows, cols } => write!(f, "grid:{rows}x{cols}"),
            GraphSpec::Random { n, p } => write!(f, "random:{n}:{p}"),
            GraphSpec::Complete { n } => write!(f, "complete:{n}"),
            GraphSpec::Edgeless { n } => write!(f, "edgeless:{n}"),
        }
    }
}

impl FromStr for GraphSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || argument(format!("bad graph spec `{s}` (expected grid:RxC, random:N:P, complete:N or edgeless:N)"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let spec = match kind {
            "grid" => {
                let (r, c) = rest.split_once('x').ok_or_else(bad)?;
                GraphSpec::Grid {
                    rows: r.parse().map_err(|_| bad())?,
                    cols: c.parse().map_err(|_| bad())?,
                }
            }
            "random" => {
                let (n, p) = rest.split_once(':').ok_or_else(bad)?;
                let p: f64 = p.parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(bad());
                }
                GraphSpec::Random { n: n.parse().map_err(|_| bad())?, p }
            }
            "complete" => GraphSpec::Complete { n: rest.parse().map_err(|_| bad())? },
            "edgeless" => GraphSpec::Edgeless { n: rest.parse().map_err(|_| bad())? },
            _ => return Err(bad()),
        };
        Ok(spec)
    }
}

impl Serialize for GraphSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GraphSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Intervals of the uniform parameter distributions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub bias: (f64, f64),
    pub coupling: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self { bias: (-0.2, 0.2), coupling: (-0.3, 0.3) }
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("bias", self.bias), ("coupling", self.coupling)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(argument(format!("{name} range [{lo}, {hi}] is not a valid interval")));
            }
        }
        Ok(())
    }
}

/// Biases and couplings drawn independently and uniformly from `ranges`.
pub fn generate_model(graph: &PairwiseGraph, ranges: &ParamRanges, seed: u64) -> Result<PbmParams<f64>> {
    ranges.validate()?;
    let mut rng = chain_rng(seed, 0);
    let mut draw = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
    let bias = (0..graph.n()).map(|_| draw(ranges.bias)).collect();
    let coupling = (0..graph.num_edges()).map(|_| draw(ranges.coupling)).collect();
    PbmParams::new(graph.clone(), bias, coupling)
}

/// Mean absolute componentwise difference between two keyed tables.
pub fn mae<K: Ord + fmt::Debug>(reference: &BTreeMap<K, f64>, estimate: &BTreeMap<K, f64>) -> Result<f64> {
    if reference.len() != estimate.len() || reference.keys().zip(estimate.keys()).any(|(a, b)| a != b) {
        return Err(argument("reference and estimate have different keys"));
    }
    Ok(mae_slices(
        &reference.values().copied().collect::<Vec<_>>(),
        &estimate.values().copied().collect::<Vec<_>>(),
    ))
}

/// [`mae`] for two slices in the same order; zero for empty input.
pub fn mae_slices(reference: &[f64], estimate: &[f64]) -> f64 {
    assert_eq!(reference.len(), estimate.len(), "length mismatch");
    if reference.is_empty() {
        return 0.0;
    }
    reference.iter().zip(estimate).map(|(a, b)| (a - b).abs()).sum::<f64>() / reference.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub trial: usize,
    pub method: String,
    /// Sample size `M` (inference) or update step (learning).
    pub m_or_step: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub scenario: String,
    pub method: String,
    pub m_or_step: usize,
    pub count: usize,
    pub mean: f64,
    /// Standard error of the mean; absent with fewer than two trials.
    pub std_err: Option<f64>,
}

/// Raw long-format rows plus free-form notes (skipped methods or trials).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub notes: Vec<String>,
}

impl ResultTable {
    /// Mean and standard error per `(scenario, method, m_or_step)`, in order
    /// of first appearance.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut order: Vec<(String, String, usize)> = Vec::new();
        let mut groups: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            let key = (r.scenario.clone(), r.method.clone(), r.m_or_step);
            groups
                .entry(key.clone())
                .or_insert_with(|| {
                    order.push(key);
                    Vec::new()
                })
                .push(r.value);
        }
        order
            .into_iter()
            .map(|key| {
                let vals = &groups[&key];
                let count = vals.len();
                let mean = vals.iter().sum::<f64>() / count as f64;
                let std_err = (count > 1).then(|| {
                    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
                    (var / count as f64).sqrt()
                });
                Aggregate { scenario: key.0, method: key.1, m_or_step: key.2, count, mean, std_err }
            })
            .collect()
    }

    pub fn aggregate(&self, method: &str, m_or_step: usize) -> Option<Aggregate> {
        self.aggregates()
            .into_iter()
            .find(|a| a.method == method && a.m_or_step == m_or_step)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "scenario,trial,method,m_or_step,value")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.scenario, r.trial, r.method, r.m_or_step, r.value)?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            notes: &'a [String],
            aggregates: Vec<Aggregate>,
        }
        Ok(serde_json::to_string_pretty(&Summary { notes: &self.notes, aggregates: self.aggregates() })?)
    }

    fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
        self.notes.extend(other.notes);
    }
}

/// Method compared in the inference experiment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InferenceMethod {
    Estimator(EstimatorKind),
    /// Self-normalized importance weights from annealed importance sampling.
    Ais,
}

impl InferenceMethod {
    pub fn label(&self) -> String {
        match self {
            InferenceMethod::Estimator(k) => k.label(),
            InferenceMethod::Ais => "ais".into(),
        }
    }

    /// MCI, 1-SMCI, s2-SMCI, 2-SMCI and AIS.
    pub fn all() -> Vec<Self> {
        vec![
            InferenceMethod::Estimator(EstimatorKind::Mci),
            InferenceMethod::Estimator(EstimatorKind::Smci1),
            InferenceMethod::Estimator(EstimatorKind::S2Smci),
            InferenceMethod::Estimator(EstimatorKind::Ksmci(2)),
            InferenceMethod::Ais,
        ]
    }
}

impl fmt::Display for InferenceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for InferenceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ais" {
            Ok(InferenceMethod::Ais)
        } else {
            s.parse().map(InferenceMethod::Estimator)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceConfig {
    pub graph: GraphSpec,
    pub trials: usize,
    pub sample_sizes: Vec<usize>,
    pub methods: Vec<InferenceMethod>,
    pub ranges: ParamRanges,
    pub seed: u64,
    pub schedule: AnnealSchedule,
    /// AIS chain count; `None` uses the sample size `M` being evaluated.
    pub ais_chains: Option<usize>,
    pub ais_step: f64,
    /// Largest sum region enumerated by `k`-th order SMCI.
    pub region_cap: usize,
    pub parallel: bool,
}

impl InferenceConfig {
    pub fn new(graph: GraphSpec) -> Self {
        Self {
            graph,
            trials: 200,
            sample_sizes: vec![10, 100, 1000],
            methods: InferenceMethod::all(),
            ranges: ParamRanges::default(),
            seed: 0,
            schedule: AnnealSchedule::default(),
            ais_chains: None,
            ais_step: 1e-4,
            region_cap: DEFAULT_REGION_CAP,
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        if self.trials == 0 {
            return Err(argument("trial count must be positive"));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(argument("sample sizes must be a nonempty list of positive integers"));
        }
        if self.methods.is_empty() {
            return Err(argument("no methods configured"));
        }
        if self.graph.n() > crate::exact::DEFAULT_EXACT_CAP {
            return Err(Error::Capacity { what: "model", size: self.graph.n(), cap: crate::exact::DEFAULT_EXACT_CAP });
        }
        Ok(())
    }

    pub fn scenario(&self) -> String {
        format!("inference:{}", self.graph)
    }
}

fn for_trials<T, F>(trials: usize, parallel: bool, run: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if parallel {
        (0..trials).into_par_iter().map(run).collect()
    } else {
        (0..trials).map(run).collect()
    }
}

/// Covariance MAE of every configured method at every sample size, over
/// independently generated models.
pub fn run_inference_experiment(cfg: &InferenceConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let tables = for_trials(cfg.trials, cfg.parallel, |t| inference_trial(cfg, t));
    let mut out = ResultTable::default();
    for table in tables {
        out.extend(table?);
    }
    Ok(out)
}

fn largest_ksmci_region(model: &PbmParams<f64>, k: usize) -> usize {
    let g = model.graph();
    let means = (0..g.n()).map(|i| closed_region(g, &Region::singleton(i), k - 1).len());
    let pairs = g.edges().iter().map(|&(i, j)| closed_region(g, &Region::pair(i, j), k - 1).len());
    means.chain(pairs).max().unwrap_or(0)
}

fn inference_trial(cfg: &InferenceConfig, trial: usize) -> Result<ResultTable> {
    let t = trial as u64;
    let scenario = cfg.scenario();
    let graph = cfg.graph.build(derive_seed(cfg.seed, t, "graph"));
    let model = generate_model(&graph, &cfg.ranges, derive_seed(cfg.seed, t, "model"))?;
    let exact = exact_moments(&model)?.covariances(&graph);
    let max_m = *cfg.sample_sizes.iter().max().expect("validated");
    let needs_gibbs = cfg.methods.iter().any(|m| matches!(m, InferenceMethod::Estimator(_)));
    let pool = if needs_gibbs {
        draw_sample_set(&model, max_m, &cfg.schedule, derive_seed(cfg.seed, t, "samples"))?
    } else {
        SampleSet::new(graph.n())
    };
    let mut out = ResultTable::default();
    for method in &cfg.methods {
        if let InferenceMethod::Estimator(EstimatorKind::Ksmci(k)) = method {
            let size = largest_ksmci_region(&model, *k);
            if size > cfg.region_cap {
                out.notes.push(format!(
                    "{scenario} trial {trial}: {method} skipped, sum region of {size} variables exceeds cap {}",
                    cfg.region_cap
                ));
                continue;
            }
        }
        for &m in &cfg.sample_sizes {
            let estimate = match method {
                InferenceMethod::Estimator(kind) => {
                    covariance_table_with_cap(&model, kind, &pool.truncated(m), cfg.region_cap)?
                }
                InferenceMethod::Ais => {
                    let chains = cfg.ais_chains.unwrap_or(m);
                    let seed = derive_seed(cfg.seed, t, &format!("ais:{m}"));
                    let ais = ais_estimate(&model, chains, cfg.ais_step, seed)?;
                    covariance_table_with_cap(&model, &EstimatorKind::Mci, &ais.samples, cfg.region_cap)?
                }
            };
            out.rows.push(ResultRow {
                scenario: scenario.clone(),
                trial,
                method: method.label(),
                m_or_step: m,
                value: mae_slices(&exact, &estimate),
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearningScenario {
    /// Data generated on the learner's own graph.
    Matched,
    /// Data generated on a denser graph than the learner's.
    Mismatched,
}

impl fmt::Display for LearningScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearningScenario::Matched => "learn-matched",
            LearningScenario::Mismatched => "learn-mismatched",
        })
    }
}

impl FromStr for LearningScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matched" | "learn-matched" => Ok(LearningScenario::Matched),
            "mismatched" | "learn-mismatched" => Ok(LearningScenario::Mismatched),
            _ => Err(argument(format!("unknown learning scenario `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearningExperimentConfig {
    pub scenario: LearningScenario,
    pub generator: GraphSpec,
    pub learner: GraphSpec,
    pub trials: usize,
    pub data_size: usize,
    pub methods: Vec<LearnMethod>,
    pub learning_rate: f64,
    pub steps: usize,
    /// Raw rows are written every `trace_stride` steps and at the last step.
    pub trace_stride: usize,
    pub ranges: ParamRanges,
    pub seed: u64,
    pub schedule: AnnealSchedule,
    pub parallel: bool,
}

impl LearningExperimentConfig {
    /// Grid 4×5 learner; the generator is the same grid (matched) or the
    /// complete graph on 20 vertices (mismatched).
    pub fn new(scenario: LearningScenario) -> Self {
        let grid = GraphSpec::Grid { rows: 4, cols: 5 };
        let (generator, methods) = match scenario {
            LearningScenario::Matched => (grid.clone(), vec![fixed_smci1(), pcd_smci1(1)]),
            LearningScenario::Mismatched => (
                GraphSpec::Complete { n: 20 },
                vec![fixed_smci1(), pcd_smci1(1), pcd_smci1(2), pcd_smci1(4)],
            ),
        };
        Self {
            scenario,
            generator,
            learner: grid,
            trials: 50,
            data_size: 50,
            methods,
            learning_rate: 0.02,
            steps: 5000,
            trace_stride: 50,
            ranges: ParamRanges::default(),
            seed: 0,
            schedule: AnnealSchedule::default(),
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        if self.trials == 0 || self.data_size == 0 || self.steps == 0 || self.trace_stride == 0 {
            return Err(argument("trials, data size, steps and trace stride must be positive"));
        }
        if self.generator.n() != self.learner.n() {
            return Err(argument("generator and learner graphs have different vertex counts"));
        }
        if self.methods.is_empty() {
            return Err(argument("no methods configured"));
        }
        for m in &self.methods {
            self.learn_config(m, 0).validate()?;
        }
        Ok(())
    }

    fn learn_config(&self, method: &LearnMethod, seed: u64) -> LearnConfig {
        LearnConfig { method: method.clone(), learning_rate: self.learning_rate, steps: self.steps, seed }
    }
}

fn fixed_smci1() -> LearnMethod {
    LearnMethod::Fixed(EstimatorKind::Smci1)
}

fn pcd_smci1(e: usize) -> LearnMethod {
    LearnMethod::Pcd { kind: EstimatorKind::Smci1, e, kappa: 1 }
}

/// Coupling MAE against the exact MLE, traced over update steps, for every
/// configured learner.
pub fn run_learning_experiment(cfg: &LearningExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let tables = for_trials(cfg.trials, cfg.parallel, |t| learning_trial(cfg, t));
    let mut out = ResultTable::default();
    for table in tables {
        out.extend(table?);
    }
    Ok(out)
}

fn learning_trial(cfg: &LearningExperimentConfig, trial: usize) -> Result<ResultTable> {
    let t = trial as u64;
    let scenario = cfg.scenario.to_string();
    let gen_graph = cfg.generator.build(derive_seed(cfg.seed, t, "generator-graph"));
    let learner = cfg.learner.build(derive_seed(cfg.seed, t, "learner-graph"));
    let truth = generate_model(&gen_graph, &cfg.ranges, derive_seed(cfg.seed, t, "model"))?;
    let data = draw_sample_set(&truth, cfg.data_size, &cfg.schedule, derive_seed(cfg.seed, t, "data"))?;
    let mut out = ResultTable::default();
    let reference = match exact_mle::<f64>(&learner, &data, MLE_TOLERANCE, MLE_MAX_ITERATIONS) {
        Ok(r) => r,
        Err(Error::NoConvergence { grad_max, .. }) => {
            out.notes.push(format!(
                "{scenario} trial {trial}: skipped, reference MLE did not converge (max gradient {grad_max:e})"
            ));
            return Ok(out);
        }
        Err(Error::Unbounded(why)) => {
            out.notes.push(format!("{scenario} trial {trial}: skipped, reference MLE does not exist ({why})"));
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    for method in &cfg.methods {
        let label = method.to_string();
        let lc = cfg.learn_config(method, derive_seed(cfg.seed, t, &format!("learn:{label}")));
        let trace = learn(&learner, &data, &lc, &reference)?;
        for row in &trace.rows {
            if row.step % cfg.trace_stride == 0 || row.step == cfg.steps {
                out.rows.push(ResultRow {
                    scenario: scenario.clone(),
                    trial,
                    method: label.clone(),
                    m_or_step: row.step,
                    value: row.mae,
                });
            }
        }
    }
    Ok(out)
}

/// Sum region sizes used by the s2 estimator on every vertex and edge of
/// `model`; a diagnostic for dense graphs.
pub fn s2_region_sizes(model: &PbmParams<f64>) -> Vec<usize> {
    let g = model.graph();
    (0..g.n())
        .map(|i| s2_region(model, &Region::singleton(i)).len())
        .chain(g.edges().iter().map(|&(i, j)| s2_region(model, &Region::pair(i, j)).len()))
        .collect()
}
