//! Monte Carlo estimators of expectations on a pairwise Boltzmann machine.
//!
//! All spatial estimators share one template: for a target region `T` and a
//! sum region `A ⊇ T`, each sample point contributes the conditional
//! expectation of `f(x_T)` given the sample's values on the boundary `∂A`,
//!
//! ```text
//! m_T(A; S) = (1/M) Σ_l Σ_{x_A} f(x_T) P(x_A | s_∂A^(l)).
//! ```
//!
//! * plain Monte Carlo is the degenerate case that reads `f` off each sample;
//! * `k`-th order SMCI uses `A = R_{k-1}(T)`;
//! * the general form ([`gsmci_estimate`]) accepts any `A` and enumerates
//!   `2^|A|` states per sample;
//! * closed forms exist for first order means and edge moments
//!   ([`smci1_mean`], [`smci1_pair`]) and for the semi-second-order region
//!   `A = T ∪ I1(T)`, where `I1(T)` is an independent subset of the first
//!   neighbours that can be summed out analytically ([`s2_mean`], [`s2_pair`]).
//!
//! For a fixed target the asymptotic variance never increases when the sum
//! region grows; [`asymptotic_variance`] evaluates it exactly on small models.

use std::fmt;

use crate::error::{argument, Error, Result};
use crate::exact::{self, exact_moments, gibbs_table, Moments};
use crate::graph::{boundary, closed_region, greedy_independent_set, neighborhood, Region, Vertex};
use crate::model::{fill_spins, PbmParams, RegionConditional, SampleSet, Scratch, DEFAULT_REGION_CAP};
use crate::scalar::{atanh_tanh_product, ln_one_minus_tanh2_product, Scalar};

/// Default cap on `n` for [`asymptotic_variance`].
pub const VARIANCE_MODEL_CAP: usize = 20;

/// How the sum region of an estimator is chosen.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Standard Monte Carlo integration: plain sample average.
    Mci,
    /// `k`-th order SMCI, sum region `R_{k-1}(T)`.
    Ksmci(usize),
    /// Semi-second-order SMCI, sum region `T ∪ I1(T)`.
    S2Smci,
    /// SMCI with an explicit sum region.
    Gsmci(Region),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Mci => write!(f, "mci"),
            Method::Ksmci(k) => write!(f, "smci{k}"),
            Method::S2Smci => write!(f, "smci-s2"),
            Method::Gsmci(a) => write!(f, "gsmci{a}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EstimatorSpec {
    pub method: Method,
    pub target: Region,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimate<F> {
    pub value: F,
    pub spec: EstimatorSpec,
    pub sample_count: usize,
}

impl<F> MomentEstimate<F> {
    fn new(value: F, method: Method, target: Region, s: &SampleSet) -> Self {
        Self {
            value,
            spec: EstimatorSpec { method, target },
            sample_count: s.len(),
        }
    }
}

fn nonempty(s: &SampleSet) -> Result<()> {
    if s.is_empty() {
        Err(argument("sample set is empty"))
    } else {
        Ok(())
    }
}

fn check_samples<F: Scalar>(model: &PbmParams<F>, s: &SampleSet) -> Result<()> {
    nonempty(s)?;
    if s.n() != model.n() {
        return Err(argument(format!(
            "sample set has {} variables, model has {}",
            s.n(),
            model.n()
        )));
    }
    Ok(())
}

/// `f` tabulated over the `2^|T|` target states (bit `b` ↔ `t.members()[b]`).
fn tabulate<F: Scalar>(k: usize, f: impl Fn(&[i8]) -> F) -> Vec<F> {
    let mut buf = vec![0i8; k];
    (0..1u64 << k)
        .map(|s| {
            fill_spins(s, &mut buf);
            f(&buf)
        })
        .collect()
}

/// Standard Monte Carlo: `(1/M) Σ_l f(s_T^(l))`.
pub fn mci_estimate<F: Scalar>(f: impl Fn(&[i8]) -> F, t: &Region, s: &SampleSet) -> Result<MomentEstimate<F>> {
    nonempty(s)?;
    if t.iter().any(|v| v >= s.n()) {
        return Err(Error::Region(format!("target {t} is outside the sample space")));
    }
    let mut buf = vec![0i8; t.len()];
    let value = s.average(|x| {
        for (b, v) in t.iter().enumerate() {
            buf[b] = x[v];
        }
        f(&buf)
    });
    Ok(MomentEstimate::new(value, Method::Mci, t.clone(), s))
}

/// SMCI with an explicit sum region `a ⊇ t`, evaluated by enumerating the
/// conditional distribution on `a` for every sample point.
pub fn gsmci_estimate<F: Scalar>(
    model: &PbmParams<F>,
    f: impl Fn(&[i8]) -> F,
    t: &Region,
    a: &Region,
    s: &SampleSet,
    cap: usize,
) -> Result<MomentEstimate<F>> {
    let value = region_expectation(model, &f, t, a, s, cap)?;
    Ok(MomentEstimate::new(value, Method::Gsmci(a.clone()), t.clone(), s))
}

fn region_expectation<F: Scalar>(
    model: &PbmParams<F>,
    f: &impl Fn(&[i8]) -> F,
    t: &Region,
    a: &Region,
    s: &SampleSet,
    cap: usize,
) -> Result<F> {
    check_samples(model, s)?;
    if !t.is_subset(a) {
        return Err(Error::Region(format!("target {t} is not contained in sum region {a}")));
    }
    let cond = target_first_conditional(model, t, a, cap)?;
    let f_table = tabulate(t.len(), f);
    let mut scratch = Scratch::default();
    Ok(s.average(|x| cond.expectation(x, &f_table, &mut scratch)))
}

fn target_first_conditional<'m, F: Scalar>(
    model: &'m PbmParams<F>,
    t: &Region,
    a: &Region,
    cap: usize,
) -> Result<RegionConditional<'m, F>> {
    let order: Vec<Vertex> = t.iter().chain(a.difference(t).iter()).collect();
    RegionConditional::new(model, order, cap)
}

/// `k`-th order SMCI: the general estimator with `A = R_{k-1}(t)`.
pub fn ksmci_estimate<F: Scalar>(
    model: &PbmParams<F>,
    f: impl Fn(&[i8]) -> F,
    t: &Region,
    k: usize,
    s: &SampleSet,
    cap: usize,
) -> Result<MomentEstimate<F>> {
    if k == 0 {
        return Err(argument("SMCI order k must be at least 1"));
    }
    model.graph().check_region(t)?;
    let a = closed_region(model.graph(), t, k - 1);
    let value = region_expectation(model, &f, t, &a, s, cap)?;
    Ok(MomentEstimate::new(value, Method::Ksmci(k), t.clone(), s))
}

/// First-order SMCI of `⟨x_i⟩`: `(1/M) Σ_l tanh γ_i(s^(l))`.
pub fn smci1_mean<F: Scalar>(model: &PbmParams<F>, i: Vertex, s: &SampleSet) -> Result<MomentEstimate<F>> {
    check_samples(model, s)?;
    check_vertex(model, i)?;
    let value = s.average(|x| model.local_field(i, x).tanh());
    Ok(MomentEstimate::new(value, Method::Ksmci(1), Region::singleton(i), s))
}

/// First-order SMCI of `⟨x_i x_j⟩` for an edge `{i, j}`:
/// `(1/M) Σ_l tanh[atanh(tanh γ_{i:j} tanh γ_{j:i}) + w_ij]`.
pub fn smci1_pair<F: Scalar>(model: &PbmParams<F>, i: Vertex, j: Vertex, s: &SampleSet) -> Result<MomentEstimate<F>> {
    check_samples(model, s)?;
    let w = edge_weight(model, i, j)?;
    let value = s.average(|x| {
        let gi = model.cavity_field(i, j, x);
        let gj = model.cavity_field(j, i, x);
        (atanh_tanh_product(gi, gj) + w).tanh()
    });
    Ok(MomentEstimate::new(value, Method::Ksmci(1), Region::pair(i, j), s))
}

fn check_vertex<F: Scalar>(model: &PbmParams<F>, i: Vertex) -> Result<()> {
    if i >= model.n() {
        Err(Error::Region(format!("vertex {i} is outside the graph (n = {})", model.n())))
    } else {
        Ok(())
    }
}

fn edge_weight<F: Scalar>(model: &PbmParams<F>, i: Vertex, j: Vertex) -> Result<F> {
    model
        .graph()
        .edge_id(i, j)
        .map(|e| model.edge_coupling(e))
        .ok_or_else(|| argument(format!("{{{i},{j}}} is not an edge")))
}

/// `I1(t)`: a greedy independent subset of the first neighbours of `t`,
/// preferring, among tied minimum-degree candidates, the vertex `j` with the
/// largest `W_j = Σ_{i ∈ t, i ~ j} |w_ij|`.
pub fn independent_neighbors<F: Scalar>(model: &PbmParams<F>, t: &Region) -> Region {
    let g = model.graph();
    let candidates = neighborhood(g, t, 1);
    greedy_independent_set(g, &candidates, |j| {
        t.iter().map(|i| model.coupling(i, j).abs()).fold(F::zero(), |a, b| a + b)
    })
}

/// Sum region of the semi-second-order estimator, `t ∪ I1(t)`.
pub fn s2_region<F: Scalar>(model: &PbmParams<F>, t: &Region) -> Region {
    t.union(&independent_neighbors(model, t))
}

/// `a \ t`, checked to be an independent set disjoint from `t`.
fn s2_extension<F: Scalar>(model: &PbmParams<F>, t: &Region, a: &Region) -> Result<Region> {
    model.graph().check_region(a)?;
    if !t.is_subset(a) {
        return Err(Error::Region(format!("target {t} is not contained in sum region {a}")));
    }
    let ext = a.difference(t);
    let g = model.graph();
    for (p, &u) in ext.members().iter().enumerate() {
        if let Some(&v) = ext.members()[p + 1..].iter().find(|&&v| g.has_edge(u, v)) {
            return Err(Error::Region(format!(
                "sum region {a} is not of the form T ∪ I with I independent: {{{u},{v}}} is an edge"
            )));
        }
    }
    Ok(ext)
}

/// Semi-second-order SMCI of `⟨x_i⟩` with `a = {i} ∪ I1`:
/// `(1/M) Σ_l tanh ξ_i`, `ξ_i = β_i + Σ_{k ∈ I1} atanh(tanh β_k tanh w_ik)`.
pub fn s2_mean<F: Scalar>(model: &PbmParams<F>, i: Vertex, a: &Region, s: &SampleSet) -> Result<MomentEstimate<F>> {
    check_samples(model, s)?;
    check_vertex(model, i)?;
    let t = Region::singleton(i);
    let ext = s2_extension(model, &t, a)?;
    let w_ik: Vec<F> = ext.iter().map(|k| model.coupling(i, k)).collect();
    let value = s.average(|x| {
        let mut xi = model.boundary_field(i, a, x);
        for (k, &w) in ext.iter().zip(&w_ik) {
            xi += atanh_tanh_product(model.boundary_field(k, a, x), w);
        }
        xi.tanh()
    });
    Ok(MomentEstimate::new(value, Method::S2Smci, t, s))
}

/// Semi-second-order SMCI of `⟨x_i x_j⟩` for an edge, with
/// `a = {i, j} ∪ I1`. Each summarized neighbour `k` shifts the two effective
/// fields and the effective coupling of the pair:
///
/// ```text
/// ξ_{i:j} = β_i + Σ_k [ atanh(tanh β_k tanh w_ik)
///                       + ¼ ln (1 - tanh²(β_k + w_ik) tanh² w_jk) / (1 - tanh²(β_k - w_ik) tanh² w_jk) ]
/// ω_ij    = w_ij + Σ_k [ atanh(tanh w_ik tanh w_jk)
///                       + ¼ ln (1 - tanh²(w_ik + w_jk) tanh² β_k) / (1 - tanh²(w_ik - w_jk) tanh² β_k) ]
/// ```
///
/// and the estimate is `(1/M) Σ_l tanh[atanh(tanh ξ_{i:j} tanh ξ_{j:i}) + ω_ij]`.
pub fn s2_pair<F: Scalar>(
    model: &PbmParams<F>,
    i: Vertex,
    j: Vertex,
    a: &Region,
    s: &SampleSet,
) -> Result<MomentEstimate<F>> {
    check_samples(model, s)?;
    let w_ij = edge_weight(model, i, j)?;
    let t = Region::pair(i, j);
    let ext = s2_extension(model, &t, a)?;
    let ws: Vec<(Vertex, F, F)> = ext
        .iter()
        .map(|k| (k, model.coupling(i, k), model.coupling(j, k)))
        .collect();
    let quarter = F::lit(0.25);
    let value = s.average(|x| {
        let mut xi_i = model.boundary_field(i, a, x);
        let mut xi_j = model.boundary_field(j, a, x);
        let mut omega = w_ij;
        for &(k, wik, wjk) in &ws {
            let bk = model.boundary_field(k, a, x);
            xi_i += atanh_tanh_product(bk, wik)
                + quarter * (ln_one_minus_tanh2_product(bk + wik, wjk) - ln_one_minus_tanh2_product(bk - wik, wjk));
            xi_j += atanh_tanh_product(bk, wjk)
                + quarter * (ln_one_minus_tanh2_product(bk + wjk, wik) - ln_one_minus_tanh2_product(bk - wjk, wik));
            omega += atanh_tanh_product(wik, wjk)
                + quarter * (ln_one_minus_tanh2_product(wik + wjk, bk) - ln_one_minus_tanh2_product(wik - wjk, bk));
        }
        (atanh_tanh_product(xi_i, xi_j) + omega).tanh()
    });
    Ok(MomentEstimate::new(value, Method::S2Smci, t, s))
}

/// Exact asymptotic variance of the estimator with sum region `a`, scaled
/// by `M`: `Σ_{x_∂A} ρ(x_∂A)² P(x_∂A) - ⟨f⟩²` with
/// `ρ(x_∂A) = Σ_{x_A} f(x_T) P(x_A | x_∂A)`. Requires full enumeration.
pub fn asymptotic_variance<F: Scalar>(
    model: &PbmParams<F>,
    f: impl Fn(&[i8]) -> F,
    t: &Region,
    a: &Region,
) -> Result<F> {
    if !t.is_subset(a) {
        return Err(Error::Region(format!("target {t} is not contained in sum region {a}")));
    }
    let table = gibbs_table(model, VARIANCE_MODEL_CAP)?;
    let cond = target_first_conditional(model, t, a, VARIANCE_MODEL_CAP)?;
    let f_table = tabulate(t.len(), &f);
    let mean = exact::expectation_from_marginal(&table.marginal(t), t.len(), &f);
    let bnd = boundary(model.graph(), a);
    let marginal = table.marginal(&bnd);
    let mut x = vec![1i8; model.n()];
    let mut bvals = vec![0i8; bnd.len()];
    let mut scratch = Scratch::default();
    let mut second = F::zero();
    for (st, &p) in marginal.iter().enumerate() {
        fill_spins(st as u64, &mut bvals);
        for (v, &b) in bnd.iter().zip(&bvals) {
            x[v] = b;
        }
        let rho = cond.expectation(&x, &f_table, &mut scratch);
        second += rho * rho * p;
    }
    Ok(second - mean * mean)
}

/// Asymptotic variance (times `M`) of plain Monte Carlo:
/// `Σ f(x_T)² P(x_T) - ⟨f⟩²`.
pub fn mci_asymptotic_variance<F: Scalar>(model: &PbmParams<F>, f: impl Fn(&[i8]) -> F, t: &Region) -> Result<F> {
    model.graph().check_region(t)?;
    let table = gibbs_table(model, VARIANCE_MODEL_CAP)?;
    let marginal = table.marginal(t);
    let mean = exact::expectation_from_marginal(&marginal, t.len(), &f);
    let second = exact::expectation_from_marginal(&marginal, t.len(), |x| {
        let v = f(x);
        v * v
    });
    Ok(second - mean * mean)
}

/// Estimator used for all vertex means and edge moments at once.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Mci,
    /// First order, closed forms.
    Smci1,
    /// Semi-second order, closed forms.
    S2Smci,
    /// `k`-th order by enumeration of `R_{k-1}(T)`.
    Ksmci(usize),
    /// Exact expectations by full enumeration; ignores the samples.
    Exact,
}

impl EstimatorKind {
    pub fn label(&self) -> String {
        match self {
            EstimatorKind::Mci => "mci".into(),
            EstimatorKind::Smci1 => "smci1".into(),
            EstimatorKind::S2Smci => "smci-s2".into(),
            EstimatorKind::Ksmci(k) => format!("smci{k}"),
            EstimatorKind::Exact => "exact".into(),
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mci" => EstimatorKind::Mci,
            "smci1" => EstimatorKind::Smci1,
            "smci-s2" | "s2" => EstimatorKind::S2Smci,
            "exact" => EstimatorKind::Exact,
            other => match other.strip_prefix("smci").and_then(|k| k.parse().ok()) {
                Some(k) if k >= 1 => EstimatorKind::Ksmci(k),
                _ => return Err(argument(format!("unknown estimator `{other}`"))),
            },
        })
    }
}

/// Estimates `⟨x_i⟩` for every vertex and `⟨x_i x_j⟩` for every edge.
pub fn estimate_moments<F: Scalar>(
    model: &PbmParams<F>,
    kind: &EstimatorKind,
    s: &SampleSet,
    cap: usize,
) -> Result<Moments<F>> {
    let g = model.graph();
    match kind {
        EstimatorKind::Exact => exact_moments(model),
        EstimatorKind::Mci => {
            nonempty(s)?;
            Ok(Moments {
                means: (0..g.n()).map(|i| s.average(|x| F::spin(x[i]))).collect(),
                pairs: g.edges().iter().map(|&(i, j)| s.average(|x| F::spin(x[i] * x[j]))).collect(),
            })
        }
        EstimatorKind::Smci1 => Ok(Moments {
            means: (0..g.n()).map(|i| smci1_mean(model, i, s).map(|e| e.value)).collect::<Result<_>>()?,
            pairs: g
                .edges()
                .iter()
                .map(|&(i, j)| smci1_pair(model, i, j, s).map(|e| e.value))
                .collect::<Result<_>>()?,
        }),
        EstimatorKind::S2Smci => Ok(Moments {
            means: (0..g.n())
                .map(|i| {
                    let a = s2_region(model, &Region::singleton(i));
                    s2_mean(model, i, &a, s).map(|e| e.value)
                })
                .collect::<Result<_>>()?,
            pairs: g
                .edges()
                .iter()
                .map(|&(i, j)| {
                    let a = s2_region(model, &Region::pair(i, j));
                    s2_pair(model, i, j, &a, s).map(|e| e.value)
                })
                .collect::<Result<_>>()?,
        }),
        EstimatorKind::Ksmci(k) => Ok(Moments {
            means: (0..g.n())
                .map(|i| ksmci_estimate(model, spin_value, &Region::singleton(i), *k, s, cap).map(|e| e.value))
                .collect::<Result<_>>()?,
            pairs: g
                .edges()
                .iter()
                .map(|&(i, j)| ksmci_estimate(model, spin_product, &Region::pair(i, j), *k, s, cap).map(|e| e.value))
                .collect::<Result<_>>()?,
        }),
    }
}

/// `x_i` as a function of the target configuration `(x_i)`.
pub fn spin_value<F: Scalar>(x: &[i8]) -> F {
    F::spin(x[0])
}

/// `x_i x_j` as a function of the target configuration `(x_i, x_j)`.
pub fn spin_product<F: Scalar>(x: &[i8]) -> F {
    F::spin(x[0] * x[1])
}

/// Estimated covariances `⟨x_i x_j⟩ - ⟨x_i⟩⟨x_j⟩` on every edge, with the
/// same estimator used for the pair moment and both means.
pub fn covariance_table<F: Scalar>(model: &PbmParams<F>, kind: &EstimatorKind, s: &SampleSet) -> Result<Vec<F>> {
    covariance_table_with_cap(model, kind, s, DEFAULT_REGION_CAP)
}

pub fn covariance_table_with_cap<F: Scalar>(
    model: &PbmParams<F>,
    kind: &EstimatorKind,
    s: &SampleSet,
    cap: usize,
) -> Result<Vec<F>> {
    Ok(estimate_moments(model, kind, s, cap)?.covariances(model.graph()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{exact_expectation, exact_sample_set};
    use crate::graph::PairwiseGraph;
    use crate::sampling::chain_rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_model(g: PairwiseGraph, seed: u64) -> PbmParams<f64> {
        let mut rng = chain_rng(seed, 1000);
        let bias = (0..g.n()).map(|_| rng.random_range(-0.2..0.2)).collect();
        let c = (0..g.num_edges()).map(|_| rng.random_range(-0.3..0.3)).collect();
        PbmParams::new(g, bias, c).unwrap()
    }

    fn random_samples(n: usize, m: usize, seed: u64) -> SampleSet {
        let mut rng = chain_rng(seed, 2000);
        let pts: Vec<Vec<i8>> = (0..m)
            .map(|_| (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
            .collect();
        SampleSet::from_points(n, pts).unwrap()
    }

    fn xm(x: &[i8]) -> f64 {
        x[0] as f64
    }
    fn xp(x: &[i8]) -> f64 {
        (x[0] * x[1]) as f64
    }

    #[test]
    fn mci_trivial_cases() {
        let s = SampleSet::from_points(3, vec![[1i8, -1, 1]; 5]).unwrap();
        let t = Region::pair(0, 1);
        assert_eq!(mci_estimate(xp, &t, &s).unwrap().value, -1.0);
        assert_eq!(mci_estimate(|_| 1.0, &t, &s).unwrap().value, 1.0);
        assert!(mci_estimate(xp, &t, &SampleSet::new(3)).is_err());
    }

    #[test]
    fn isolated_vertex_first_order_mean() {
        let m = PbmParams::new(PairwiseGraph::edgeless(3), vec![0.5, 0.0, 0.0], vec![]).unwrap();
        let s = random_samples(3, 7, 1);
        assert_abs_diff_eq!(smci1_mean(&m, 0, &s).unwrap().value, 0.5f64.tanh(), epsilon = 1e-15);
        let z = PbmParams::<f64>::zeros(PairwiseGraph::grid(2, 2));
        assert_eq!(smci1_mean(&z, 1, &random_samples(4, 3, 2)).unwrap().value, 0.0);
    }

    #[test]
    fn two_node_first_order_pair_is_exact() {
        let g = PairwiseGraph::new(2, [(0, 1)]).unwrap();
        let m = PbmParams::new(g, vec![0.0, 0.0], vec![0.45]).unwrap();
        let s = random_samples(2, 4, 3);
        assert_abs_diff_eq!(smci1_pair(&m, 0, 1, &s).unwrap().value, 0.45f64.tanh(), epsilon = 1e-15);
    }

    #[test]
    fn first_order_pair_rejects_non_edge() {
        let m = random_model(PairwiseGraph::grid(3, 3), 1);
        assert!(smci1_pair(&m, 0, 4, &random_samples(9, 2, 1)).is_err());
    }

    #[test]
    fn closed_forms_match_enumeration_on_grid() {
        let m = random_model(PairwiseGraph::grid(4, 5), 7);
        let s = random_samples(20, 30, 7);
        for i in 0..20 {
            let t = Region::singleton(i);
            let e = gsmci_estimate(&m, xm, &t, &t, &s, 20).unwrap().value;
            assert_abs_diff_eq!(smci1_mean(&m, i, &s).unwrap().value, e, epsilon = 1e-12);
            let a = s2_region(&m, &t);
            let e = gsmci_estimate(&m, xm, &t, &a, &s, 20).unwrap().value;
            assert_abs_diff_eq!(s2_mean(&m, i, &a, &s).unwrap().value, e, epsilon = 1e-12);
        }
        for &(i, j) in m.graph().edges() {
            let t = Region::pair(i, j);
            let e = gsmci_estimate(&m, xp, &t, &t, &s, 20).unwrap().value;
            assert_abs_diff_eq!(smci1_pair(&m, i, j, &s).unwrap().value, e, epsilon = 1e-12);
            let a = s2_region(&m, &t);
            let e = gsmci_estimate(&m, xp, &t, &a, &s, 20).unwrap().value;
            assert_abs_diff_eq!(s2_pair(&m, i, j, &a, &s).unwrap().value, e, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_coupling_edge_first_order_pair() {
        let g = PairwiseGraph::grid(2, 3);
        let mut m = random_model(g, 9);
        m.couplings_mut()[0] = 0.0;
        let (i, j) = m.graph().edges()[0];
        let s = random_samples(6, 10, 9);
        let t = Region::pair(i, j);
        let e = gsmci_estimate(&m, xp, &t, &t, &s, 20).unwrap().value;
        assert_abs_diff_eq!(smci1_pair(&m, i, j, &s).unwrap().value, e, epsilon = 1e-14);
    }

    #[test]
    fn s2_reductions() {
        let m = random_model(PairwiseGraph::grid(3, 4), 3);
        let s = random_samples(12, 15, 3);
        // empty I1 reduces to first order
        let t = Region::singleton(5);
        assert_abs_diff_eq!(
            s2_mean(&m, 5, &t, &s).unwrap().value,
            smci1_mean(&m, 5, &s).unwrap().value,
            epsilon = 1e-15
        );
        let (i, j) = m.graph().edges()[4];
        let t = Region::pair(i, j);
        assert_abs_diff_eq!(
            s2_pair(&m, i, j, &t, &s).unwrap().value,
            smci1_pair(&m, i, j, &s).unwrap().value,
            epsilon = 1e-15
        );
        // grid vertex: I1 is all of N1, so s2 coincides with second order
        let t = Region::singleton(5);
        let a = s2_region(&m, &t);
        assert_eq!(a, closed_region(m.graph(), &t, 1));
        assert_abs_diff_eq!(
            s2_mean(&m, 5, &a, &s).unwrap().value,
            ksmci_estimate(&m, xm, &t, 2, &s, 20).unwrap().value,
            epsilon = 1e-12
        );
    }

    #[test]
    fn s2_pair_with_decoupled_extension_is_first_order() {
        // k is adjacent to neither i nor j, so every correction vanishes
        let g = PairwiseGraph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let m = PbmParams::new(g, vec![0.1, -0.1, 0.2, 0.05], vec![0.3, 0.0, -0.2]).unwrap();
        let s = random_samples(4, 8, 4);
        let a = Region::new([0, 1, 2]);
        assert_abs_diff_eq!(
            s2_pair(&m, 0, 1, &a, &s).unwrap().value,
            smci1_pair(&m, 0, 1, &s).unwrap().value,
            epsilon = 1e-15
        );
    }

    #[test]
    fn s2_regions_on_small_graphs() {
        let m = random_model(PairwiseGraph::grid(5, 5), 2);
        assert_eq!(s2_region(&m, &Region::singleton(12)), Region::new([7, 11, 12, 13, 17]));
        let e = PbmParams::<f64>::zeros(PairwiseGraph::edgeless(5));
        assert_eq!(s2_region(&e, &Region::singleton(2)), Region::singleton(2));
        let k4 = PbmParams::new(PairwiseGraph::complete(4), vec![0.0; 4], vec![0.1, -0.4, 0.2, 0.3, 0.3, 0.3]).unwrap();
        // edges (0,1),(0,2),(0,3): |w| = 0.1, 0.4, 0.2
        assert_eq!(independent_neighbors(&k4, &Region::singleton(0)), Region::singleton(2));
    }

    #[test]
    fn s2_rejects_dependent_extension() {
        let m = random_model(PairwiseGraph::complete(4), 2);
        let s = random_samples(4, 3, 1);
        assert!(matches!(s2_mean(&m, 0, &Region::new([0, 1, 2]), &s), Err(Error::Region(_))));
    }

    #[test]
    fn gsmci_full_region_is_exact() {
        let m = random_model(PairwiseGraph::grid(3, 3), 5);
        let s = random_samples(9, 4, 5);
        let t = Region::pair(0, 1);
        let v = gsmci_estimate(&m, xp, &t, &m.graph().all(), &s, 20).unwrap().value;
        assert_abs_diff_eq!(v, exact_expectation(&m, xp, &t).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn gsmci_errors() {
        let m = random_model(PairwiseGraph::grid(3, 3), 5);
        let s = random_samples(9, 4, 5);
        let t = Region::pair(0, 1);
        assert!(matches!(
            gsmci_estimate(&m, xp, &t, &Region::singleton(0), &s, 20),
            Err(Error::Region(_))
        ));
        assert!(matches!(
            gsmci_estimate(&m, xp, &t, &m.graph().all(), &s, 4),
            Err(Error::Capacity { size: 9, cap: 4, .. })
        ));
    }

    #[test]
    fn ksmci_single_point_matches_gsmci() {
        let m = random_model(PairwiseGraph::grid(4, 5), 8);
        let s = random_samples(20, 1, 8);
        let t = Region::pair(6, 7);
        for k in 1..4 {
            let a = closed_region(m.graph(), &t, k - 1);
            let g = gsmci_estimate(&m, xp, &t, &a, &s, 20).unwrap().value;
            let kk = ksmci_estimate(&m, xp, &t, k, &s, 20).unwrap().value;
            assert_eq!(g, kk);
        }
    }

    #[test]
    fn ksmci_matches_naive_double_implementation() {
        // Independent implementation: direct summation over the region's
        // states using the model exponent restricted to cliques touching A.
        let m = random_model(PairwiseGraph::grid(4, 5), 10);
        let s = random_samples(20, 6, 10);
        let t = Region::pair(6, 7);
        let a = closed_region(m.graph(), &t, 1);
        let mut total = 0.0;
        for x in s.points() {
            let mut y = x.to_vec();
            let (mut num, mut den) = (0.0, 0.0);
            for st in 0..1u64 << a.len() {
                for (b, v) in a.iter().enumerate() {
                    y[v] = if st >> b & 1 == 1 { 1 } else { -1 };
                }
                let mut e = 0.0;
                for v in a.iter() {
                    e += m.bias(v) * y[v] as f64;
                }
                for (&(i, j), &w) in m.graph().edges().iter().zip(m.couplings()) {
                    if a.contains(i) || a.contains(j) {
                        e += w * (y[i] * y[j]) as f64;
                    }
                }
                num += e.exp() * (y[6] * y[7]) as f64;
                den += e.exp();
            }
            total += num / den;
        }
        let naive = total / s.len() as f64;
        assert_abs_diff_eq!(ksmci_estimate(&m, xp, &t, 2, &s, 20).unwrap().value, naive, epsilon = 1e-12);
    }

    #[test]
    fn exact_weighted_samples_give_exact_values() {
        let m = random_model(PairwiseGraph::grid(2, 4), 12);
        let s = exact_sample_set(&m, 24).unwrap();
        let exact = exact_moments(&m).unwrap();
        for kind in [
            EstimatorKind::Mci,
            EstimatorKind::Smci1,
            EstimatorKind::S2Smci,
            EstimatorKind::Ksmci(2),
            EstimatorKind::Ksmci(3),
        ] {
            let est = estimate_moments(&m, &kind, &s, 20).unwrap();
            for (a, b) in est.means.iter().zip(&exact.means).chain(est.pairs.iter().zip(&exact.pairs)) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn variance_trivial_cases() {
        let m = random_model(PairwiseGraph::grid(2, 3), 13);
        let t = Region::singleton(1);
        let v = asymptotic_variance(&m, xm, &t, &m.graph().all()).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
        let v = asymptotic_variance(&m, |_| 1.0, &t, &Region::new([0, 1])).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn variance_nested_chain_is_monotone() {
        let m = random_model(PairwiseGraph::random(8, 0.4, &mut chain_rng(3, 3)), 14);
        let t = Region::pair(0, 1);
        let chain = [
            Region::new([0, 1]),
            Region::new([0, 1, 2, 3]),
            Region::new([0, 1, 2, 3, 4, 5]),
            m.graph().all(),
        ];
        let vs: Vec<f64> = chain.iter().map(|a| asymptotic_variance(&m, xp, &t, a).unwrap()).collect();
        for w in vs.windows(2) {
            assert!(w[0] >= w[1] - 1e-12, "{vs:?}");
        }
        let mci = mci_asymptotic_variance(&m, xp, &t).unwrap();
        assert!(mci >= vs[0] - 1e-12);
    }

    #[test]
    fn covariance_table_exact_kind() {
        let m = random_model(PairwiseGraph::grid(2, 3), 15);
        let s = random_samples(6, 2, 1);
        let c = covariance_table(&m, &EstimatorKind::Exact, &s).unwrap();
        let ex = exact_moments(&m).unwrap().covariances(m.graph());
        assert_eq!(c, ex);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("smci1".parse::<EstimatorKind>().unwrap(), EstimatorKind::Smci1);
        assert_eq!("smci2".parse::<EstimatorKind>().unwrap(), EstimatorKind::Ksmci(2));
        assert_eq!("smci-s2".parse::<EstimatorKind>().unwrap(), EstimatorKind::S2Smci);
        assert!("smci0".parse::<EstimatorKind>().is_err());
        assert!("foo".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn closed_forms_in_single_precision() {
        let m: PbmParams<f32> = random_model(PairwiseGraph::grid(3, 3), 16).cast();
        let s = random_samples(9, 5, 16);
        let t = Region::pair(0, 1);
        let a = s2_region(&m, &t);
        let e = gsmci_estimate(&m, |x| (x[0] * x[1]) as f32, &t, &a, &s, 20).unwrap().value;
        assert!((s2_pair(&m, 0, 1, &a, &s).unwrap().value - e).abs() < 1e-5);
    }
}
