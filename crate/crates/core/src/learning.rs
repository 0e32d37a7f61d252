//! Maximum likelihood learning of pairwise Boltzmann machines.
//!
//! The log likelihood gradient is a data term minus a model term,
//!
//! ```text
//! g_i  = (1/N) Σ_μ x_i^(μ)         - ⟨x_i⟩
//! g_ij = (1/N) Σ_μ x_i^(μ) x_j^(μ) - ⟨x_i x_j⟩,
//! ```
//!
//! and the learners here differ only in how the model term is obtained:
//! exactly ([`exact_gradient`], [`exact_mle`]), from SMCI estimates with the
//! sample set pinned to the data ([`fixed_sample_learning`]), or from SMCI
//! estimates over persistent Gibbs chains started at `e` replicas of the data
//! ([`pcd_smci_learning`]).

use std::fmt;

use crate::error::{argument, Error, Result};
use crate::estimators::{estimate_moments, EstimatorKind};
use crate::exact::{exact_moments_with_cap, log_partition, Moments, DEFAULT_EXACT_CAP};
use crate::graph::PairwiseGraph;
use crate::model::{PbmParams, SampleSet, DEFAULT_REGION_CAP};
use crate::sampling::{persistent_update, ChainState};
use crate::scalar::Scalar;

/// Default iteration cap of [`exact_mle`].
pub const MLE_MAX_ITERATIONS: usize = 100_000;
/// Default gradient tolerance of [`exact_mle`].
pub const MLE_TOLERANCE: f64 = 1e-8;

/// Gradient with respect to the biases and the edge couplings (edge order).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient<F> {
    pub bias: Vec<F>,
    pub coupling: Vec<F>,
}

impl<F: Scalar> Gradient<F> {
    fn from_moments(data: &Moments<F>, model: &Moments<F>) -> Self {
        let diff = |a: &[F], b: &[F]| a.iter().zip(b).map(|(&x, &y)| x - y).collect();
        Self {
            bias: diff(&data.means, &model.means),
            coupling: diff(&data.pairs, &model.pairs),
        }
    }

    fn components(&self) -> impl Iterator<Item = F> + '_ {
        self.bias.iter().chain(&self.coupling).copied()
    }

    /// Euclidean norm over all components.
    pub fn norm(&self) -> F {
        self.components().map(|g| g * g).sum::<F>().sqrt()
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> F {
        self.components().fold(F::zero(), |m, g| m.max(g.abs()))
    }

    fn dot(&self, other: &Self) -> F {
        self.components().zip(other.components()).map(|(a, b)| a * b).sum()
    }
}

/// Moves `params` by `rate · grad`.
pub fn ascend<F: Scalar>(params: &mut PbmParams<F>, grad: &Gradient<F>, rate: F) {
    for (w, &g) in params.biases_mut().iter_mut().zip(&grad.bias) {
        *w += rate * g;
    }
    for (w, &g) in params.couplings_mut().iter_mut().zip(&grad.coupling) {
        *w += rate * g;
    }
}

fn check_data(graph: &PairwiseGraph, d: &SampleSet) -> Result<()> {
    if d.is_empty() {
        return Err(argument("dataset is empty"));
    }
    if d.n() != graph.n() {
        return Err(argument(format!(
            "dataset has {} variables, graph has {}",
            d.n(),
            graph.n()
        )));
    }
    Ok(())
}

/// Empirical means of every vertex and of `x_i x_j` on every edge.
pub fn data_moments<F: Scalar>(graph: &PairwiseGraph, d: &SampleSet) -> Result<Moments<F>> {
    check_data(graph, d)?;
    Ok(Moments {
        means: (0..graph.n()).map(|i| d.average(|x| F::spin(x[i]))).collect(),
        pairs: graph.edges().iter().map(|&(i, j)| d.average(|x| F::spin(x[i] * x[j]))).collect(),
    })
}

/// `(1/N) Σ_μ ln P(x^(μ) | θ)`.
pub fn log_likelihood<F: Scalar>(params: &PbmParams<F>, d: &SampleSet) -> Result<F> {
    check_data(params.graph(), d)?;
    let log_z = log_partition(params)?;
    Ok(d.average(|x| params.exponent(x)) - log_z)
}

pub fn exact_gradient<F: Scalar>(params: &PbmParams<F>, d: &SampleSet) -> Result<Gradient<F>> {
    let data = data_moments(params.graph(), d)?;
    let (model, _) = exact_moments_with_cap(params, DEFAULT_EXACT_CAP)?;
    Ok(Gradient::from_moments(&data, &model))
}

/// Gradient whose model term is estimated by `kind` over the sample set `s`.
pub fn approx_gradient<F: Scalar>(
    params: &PbmParams<F>,
    d: &SampleSet,
    s: &SampleSet,
    kind: &EstimatorKind,
) -> Result<Gradient<F>> {
    let data = data_moments(params.graph(), d)?;
    approx_gradient_from(params, &data, s, kind)
}

fn approx_gradient_from<F: Scalar>(
    params: &PbmParams<F>,
    data: &Moments<F>,
    s: &SampleSet,
    kind: &EstimatorKind,
) -> Result<Gradient<F>> {
    let model = estimate_moments(params, kind, s, DEFAULT_REGION_CAP)?;
    Ok(Gradient::from_moments(data, &model))
}

/// Exact maximum likelihood parameters on `graph`, by gradient ascent from
/// zero with Barzilai–Borwein step lengths and a nonmonotone Armijo
/// backtracking test on the exact log-likelihood. Stops once every gradient
/// component is below `tol` in magnitude.
pub fn exact_mle<F: Scalar>(graph: &PairwiseGraph, d: &SampleSet, tol: f64, max_iterations: usize) -> Result<PbmParams<F>> {
    const MEMORY: usize = 10;
    const MAX_HALVINGS: usize = 20;
    let data = data_moments::<F>(graph, d)?;
    check_interior(graph, d)?;
    let eval = |p: &PbmParams<F>| -> Result<(Gradient<F>, F)> {
        let (model, log_z) = exact_moments_with_cap(p, DEFAULT_EXACT_CAP)?;
        let fit: F = p
            .biases()
            .iter()
            .zip(&data.means)
            .chain(p.couplings().iter().zip(&data.pairs))
            .map(|(&w, &m)| w * m)
            .sum();
        Ok((Gradient::from_moments(&data, &model), fit - log_z))
    };
    let (min_step, max_step) = (F::lit(1e-3), F::lit(1e3));
    let mut params = PbmParams::zeros(graph.clone());
    let (mut grad, mut ll) = eval(&params)?;
    let mut history = vec![ll];
    let mut step = F::one();
    for _ in 0..max_iterations {
        if grad.max_abs().as_f64() < tol {
            return Ok(params);
        }
        let reference = history.iter().copied().fold(ll, |a, b| a.max(b));
        let slack = F::lit(1e-11) * (F::one() + reference.abs());
        let g2 = grad.dot(&grad);
        let mut t = step;
        let (next_params, next, next_ll) = {
            let mut halvings = 0;
            loop {
                let mut candidate = params.clone();
                ascend(&mut candidate, &grad, t);
                let (g, l) = eval(&candidate)?;
                let finite = l.is_finite() && g.components().all(|v| v.is_finite());
                if finite && (l >= reference + F::lit(1e-4) * t * g2 - slack || halvings == MAX_HALVINGS) {
                    break (candidate, g, l);
                }
                t = t * F::lit(0.5);
                halvings += 1;
            }
        };
        // s = t·g, y = g' - g; ascent on a concave objective gives s·y < 0.
        let y = Gradient {
            bias: next.bias.iter().zip(&grad.bias).map(|(&a, &b)| a - b).collect(),
            coupling: next.coupling.iter().zip(&grad.coupling).map(|(&a, &b)| a - b).collect(),
        };
        let sy = t * grad.dot(&y);
        step = if sy < F::zero() { (t * t * g2 / -sy).max(min_step).min(max_step) } else { max_step };
        params = next_params;
        grad = next;
        ll = next_ll;
        history.push(ll);
        if history.len() > MEMORY {
            history.remove(0);
        }
    }
    if grad.max_abs().as_f64() < tol {
        return Ok(params);
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        grad_max: grad.max_abs().as_f64(),
    })
}

/// Every vertex must take both signs and every edge all four sign patterns
/// somewhere in `d`; otherwise some parameter diverges at the optimum.
fn check_interior(graph: &PairwiseGraph, d: &SampleSet) -> Result<()> {
    for i in 0..graph.n() {
        if d.points().all(|x| x[i] == d.point(0)[i]) {
            return Err(Error::Unbounded(format!("vertex {i} is constant in the data")));
        }
    }
    for &(i, j) in graph.edges() {
        let mut seen = [false; 4];
        for x in d.points() {
            seen[usize::from(x[i] > 0) * 2 + usize::from(x[j] > 0)] = true;
        }
        if let Some(k) = seen.iter().position(|&s| !s) {
            let sign = |b: bool| if b { "+1" } else { "-1" };
            return Err(Error::Unbounded(format!(
                "edge ({i}, {j}) never takes ({}, {}) in the data",
                sign(k >= 2),
                sign(k % 2 == 1)
            )));
        }
    }
    Ok(())
}

/// How the learner obtains the model term of the gradient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LearnMethod {
    /// Exact model term (plain gradient ascent on the true likelihood).
    ExactMle,
    /// Estimator evaluated on the dataset itself at every step.
    Fixed(EstimatorKind),
    /// Estimator evaluated on persistent chains started from `e` replicas
    /// of the dataset and advanced by `kappa` sweeps after every update.
    Pcd { kind: EstimatorKind, e: usize, kappa: usize },
}

impl fmt::Display for LearnMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnMethod::ExactMle => write!(f, "exact"),
            LearnMethod::Fixed(k) => write!(f, "fixed-{k}"),
            LearnMethod::Pcd { kind, e, kappa } => write!(f, "pcd-{kind}-e{e}-k{kappa}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnConfig {
    pub method: LearnMethod,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(argument(format!("learning rate {} must be nonnegative", self.learning_rate)));
        }
        if self.steps == 0 {
            return Err(argument("step count must be positive"));
        }
        if let LearnMethod::Pcd { e, kappa, .. } = self.method {
            if e == 0 {
                return Err(argument("data extension rate e must be at least 1"));
            }
            if kappa == 0 {
                return Err(argument("kappa must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Summary of one update step: `mae` is measured after the update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub mae: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct LearnTrace<F> {
    pub rows: Vec<TraceRow>,
    pub params: PbmParams<F>,
}

impl<F> LearnTrace<F> {
    pub fn final_mae(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.mae)
    }
}

/// Mean absolute difference between the couplings of two models on the
/// same graph.
pub fn coupling_mae<F: Scalar>(a: &PbmParams<F>, b: &PbmParams<F>) -> f64 {
    let m = a.couplings().len();
    if m == 0 {
        return 0.0;
    }
    let total: f64 = a
        .couplings()
        .iter()
        .zip(b.couplings())
        .map(|(&x, &y)| (x - y).abs().as_f64())
        .sum();
    total / m as f64
}

fn check_reference<F: Scalar>(graph: &PairwiseGraph, reference: &PbmParams<F>) -> Result<()> {
    if reference.graph() != graph {
        return Err(argument("reference parameters live on a different graph"));
    }
    Ok(())
}

/// Gradient ascent with the model term estimated on the dataset itself.
/// `LearnMethod::ExactMle` uses the exact model term instead.
pub fn fixed_sample_learning<F: Scalar>(
    graph: &PairwiseGraph,
    d: &SampleSet,
    cfg: &LearnConfig,
    reference: &PbmParams<F>,
) -> Result<LearnTrace<F>> {
    cfg.validate()?;
    check_reference(graph, reference)?;
    let kind = match &cfg.method {
        LearnMethod::Fixed(kind) => kind.clone(),
        LearnMethod::ExactMle => EstimatorKind::Exact,
        other => return Err(argument(format!("fixed-sample learning cannot run method {other}"))),
    };
    let data = data_moments(graph, d)?;
    let mut params = PbmParams::zeros(graph.clone());
    let rate = F::lit(cfg.learning_rate);
    let mut rows = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let grad = approx_gradient_from(&params, &data, d, &kind)?;
        ascend(&mut params, &grad, rate);
        rows.push(TraceRow {
            step,
            mae: coupling_mae(&params, reference),
            grad_norm: grad.norm().as_f64(),
        });
    }
    Ok(LearnTrace { rows, params })
}

/// Persistent-chain learning: the sample set starts as `e` concatenated
/// copies of the dataset; each step updates the parameters with the
/// estimated gradient on the current chains, then advances every chain by
/// `kappa` Gibbs sweeps under the updated parameters.
pub fn pcd_smci_learning<F: Scalar>(
    graph: &PairwiseGraph,
    d: &SampleSet,
    cfg: &LearnConfig,
    reference: &PbmParams<F>,
) -> Result<LearnTrace<F>> {
    cfg.validate()?;
    check_reference(graph, reference)?;
    let LearnMethod::Pcd { kind, e, kappa } = &cfg.method else {
        return Err(argument(format!("PCD learning cannot run method {}", cfg.method)));
    };
    let data = data_moments(graph, d)?;
    let mut chains = ChainState::new(d.replicate(*e), cfg.seed)?;
    let mut params = PbmParams::zeros(graph.clone());
    let rate = F::lit(cfg.learning_rate);
    let mut rows = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let grad = approx_gradient_from(&params, &data, chains.configs(), kind)?;
        ascend(&mut params, &grad, rate);
        persistent_update(&params, &mut chains, *kappa)?;
        rows.push(TraceRow {
            step,
            mae: coupling_mae(&params, reference),
            grad_norm: grad.norm().as_f64(),
        });
    }
    Ok(LearnTrace { rows, params })
}

/// Runs whichever learner `cfg.method` names.
pub fn learn<F: Scalar>(
    graph: &PairwiseGraph,
    d: &SampleSet,
    cfg: &LearnConfig,
    reference: &PbmParams<F>,
) -> Result<LearnTrace<F>> {
    match cfg.method {
        LearnMethod::Pcd { .. } => pcd_smci_learning(graph, d, cfg, reference),
        _ => fixed_sample_learning(graph, d, cfg, reference),
    }
}
