//! Pairwise Boltzmann machine parameters, spin configurations, sample sets,
//! local fields and conditional distributions on vertex regions.
//!
//! The model is
//!
//! ```text
//! P(x) ∝ exp( Σ_i w_i x_i + Σ_{ {i,j} ∈ E } w_ij x_i x_j ),   x_i ∈ {-1, +1}
//! ```
//!
//! Couplings live on the edges of the underlying [`PairwiseGraph`]; a
//! coupling queried on a non-edge is zero.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::graph::{boundary, EdgeId, PairwiseGraph, Region, Vertex};
use crate::scalar::Scalar;

/// Default cap on the number of variables summed over explicitly in a
/// conditional distribution.
pub const DEFAULT_REGION_CAP: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct PbmParams<F> {
    graph: PairwiseGraph,
    bias: Vec<F>,
    coupling: Vec<F>,
}

impl<F: Scalar> PbmParams<F> {
    /// `coupling[e]` is the weight of edge `e` in `graph.edges()` order.
    pub fn new(graph: PairwiseGraph, bias: Vec<F>, coupling: Vec<F>) -> Result<Self> {
        if bias.len() != graph.n() {
            return Err(argument(format!(
                "expected {} biases, got {}",
                graph.n(),
                bias.len()
            )));
        }
        if coupling.len() != graph.num_edges() {
            return Err(argument(format!(
                "expected {} couplings, got {}",
                graph.num_edges(),
                coupling.len()
            )));
        }
        Ok(Self { graph, bias, coupling })
    }

    pub fn zeros(graph: PairwiseGraph) -> Self {
        let bias = vec![F::zero(); graph.n()];
        let coupling = vec![F::zero(); graph.num_edges()];
        Self { graph, bias, coupling }
    }

    #[inline]
    pub fn graph(&self) -> &PairwiseGraph {
        &self.graph
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    #[inline]
    pub fn bias(&self, i: Vertex) -> F {
        self.bias[i]
    }

    #[inline]
    pub fn biases(&self) -> &[F] {
        &self.bias
    }

    #[inline]
    pub fn biases_mut(&mut self) -> &mut [F] {
        &mut self.bias
    }

    #[inline]
    pub fn couplings(&self) -> &[F] {
        &self.coupling
    }

    #[inline]
    pub fn couplings_mut(&mut self) -> &mut [F] {
        &mut self.coupling
    }

    /// `w_ij`, zero when `{i, j}` is not an edge.
    pub fn coupling(&self, i: Vertex, j: Vertex) -> F {
        self.graph
            .edge_id(i, j)
            .map_or(F::zero(), |e| self.coupling[e])
    }

    #[inline]
    pub fn edge_coupling(&self, e: EdgeId) -> F {
        self.coupling[e]
    }

    /// Exponent of the unnormalized probability, `Σ w_i x_i + Σ w_ij x_i x_j`.
    pub fn exponent(&self, x: &[i8]) -> F {
        let mut acc = F::zero();
        for (i, &w) in self.bias.iter().enumerate() {
            acc += w * F::spin(x[i]);
        }
        for (&(i, j), &w) in self.graph.edges().iter().zip(&self.coupling) {
            acc += w * F::spin(x[i] * x[j]);
        }
        acc
    }

    /// `w_i + Σ_{j ∈ N(i)} w_ij x_j`.
    #[inline]
    pub fn local_field(&self, i: Vertex, x: &[i8]) -> F {
        let mut h = self.bias[i];
        for &(j, e) in self.graph.adjacent(i) {
            h += self.coupling[e] * F::spin(x[j]);
        }
        h
    }

    /// Local field of `i` with the contribution of `j` removed; it does not
    /// depend on `x_j`.
    #[inline]
    pub fn cavity_field(&self, i: Vertex, j: Vertex, x: &[i8]) -> F {
        let mut h = self.bias[i];
        for &(k, e) in self.graph.adjacent(i) {
            if k != j {
                h += self.coupling[e] * F::spin(x[k]);
            }
        }
        h
    }

    /// Bias of `i` plus couplings to those neighbours of `i` that lie outside
    /// the region `a` (i.e. in its boundary).
    pub fn boundary_field(&self, i: Vertex, a: &Region, x: &[i8]) -> F {
        let mut h = self.bias[i];
        for &(k, e) in self.graph.adjacent(i) {
            if !a.contains(k) {
                h += self.coupling[e] * F::spin(x[k]);
            }
        }
        h
    }

    /// Converts the parameters to another scalar type.
    pub fn cast<G: Scalar>(&self) -> PbmParams<G> {
        let c = |v: &F| G::lit(v.as_f64());
        PbmParams {
            graph: self.graph.clone(),
            bias: self.bias.iter().map(c).collect(),
            coupling: self.coupling.iter().map(c).collect(),
        }
    }

    /// Relabels vertices: old vertex `i` becomes `perm[i]`.
    pub fn relabel(&self, perm: &[Vertex]) -> Self {
        let graph = self.graph.relabel(perm);
        let mut bias = vec![F::zero(); self.n()];
        for (i, &w) in self.bias.iter().enumerate() {
            bias[perm[i]] = w;
        }
        let mut coupling = vec![F::zero(); graph.num_edges()];
        for (&(i, j), &w) in self.graph.edges().iter().zip(&self.coupling) {
            coupling[graph.edge_id(perm[i], perm[j]).expect("edge survives relabeling")] = w;
        }
        Self { graph, bias, coupling }
    }
}

/// On-disk model format: `{"n": …, "bias": […], "edges": [[i, j, w], …]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelJson {
    pub n: usize,
    pub bias: Vec<f64>,
    pub edges: Vec<(Vertex, Vertex, f64)>,
}

impl<F: Scalar> From<&PbmParams<F>> for ModelJson {
    fn from(m: &PbmParams<F>) -> Self {
        ModelJson {
            n: m.n(),
            bias: m.bias.iter().map(|w| w.as_f64()).collect(),
            edges: m
                .graph
                .edges()
                .iter()
                .zip(&m.coupling)
                .map(|(&(i, j), w)| (i, j, w.as_f64()))
                .collect(),
        }
    }
}

impl<F: Scalar> TryFrom<ModelJson> for PbmParams<F> {
    type Error = Error;

    fn try_from(m: ModelJson) -> Result<Self> {
        let graph = PairwiseGraph::new(m.n, m.edges.iter().map(|&(i, j, _)| (i, j)))?;
        let mut coupling = vec![F::zero(); graph.num_edges()];
        for &(i, j, w) in &m.edges {
            coupling[graph.edge_id(i, j).expect("edge just inserted")] = F::lit(w);
        }
        PbmParams::new(graph, m.bias.into_iter().map(F::lit).collect(), coupling)
    }
}

/// A `±1` assignment to every vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|&&v| v != 1 && v != -1) {
            return Err(argument(format!("spin value {bad} is not ±1")));
        }
        Ok(SpinConfig(values))
    }

    pub fn all_up(n: usize) -> Self {
        SpinConfig(vec![1; n])
    }

    /// Spins from the low `n` bits of `state`: bit `i` set means `x_i = +1`.
    pub fn from_bits(state: u64, n: usize) -> Self {
        SpinConfig((0..n).map(|i| if state >> i & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn into_inner(self) -> Vec<i8> {
        self.0
    }
}

impl Deref for SpinConfig {
    type Target = [i8];

    fn deref(&self) -> &[i8] {
        &self.0
    }
}

/// A sequence of spin configurations over `n` vertices, optionally carrying
/// importance weights. Without weights every point counts equally.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    n: usize,
    data: Vec<i8>,
    weights: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn new(n: usize) -> Self {
        Self { n, data: Vec::new(), weights: None }
    }

    pub fn from_points<I, P>(n: usize, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[i8]>,
    {
        let mut s = Self::new(n);
        for p in points {
            s.push(p.as_ref())?;
        }
        Ok(s)
    }

    pub fn push(&mut self, x: &[i8]) -> Result<()> {
        if x.len() != self.n {
            return Err(argument(format!(
                "sample point has {} entries, expected {}",
                x.len(),
                self.n
            )));
        }
        if x.iter().any(|&v| v != 1 && v != -1) {
            return Err(argument("sample point contains a value other than ±1"));
        }
        if self.weights.is_some() {
            return Err(argument("cannot push an unweighted point onto a weighted sample set"));
        }
        self.data.extend_from_slice(x);
        Ok(())
    }

    /// Attaches nonnegative importance weights, one per point.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(argument(format!(
                "{} weights for {} sample points",
                weights.len(),
                self.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(argument("weights must be finite and nonnegative"));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(argument("weights sum to zero"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of sample points `M`.
    #[inline]
    pub fn len(&self) -> usize {
        if self.n == 0 {
            self.weights.as_ref().map_or(0, Vec::len)
        } else {
            self.data.len() / self.n
        }
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn point(&self, l: usize) -> &[i8] {
        &self.data[l * self.n..(l + 1) * self.n]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[i8]> + '_ {
        self.data.chunks_exact(self.n.max(1))
    }

    pub(crate) fn data_mut(&mut self) -> &mut [i8] {
        &mut self.data
    }

    pub(crate) fn points_mut(&mut self) -> impl Iterator<Item = &mut [i8]> + '_ {
        self.data.chunks_exact_mut(self.n.max(1))
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    /// `e` concatenated copies of this set.
    pub fn replicate(&self, e: usize) -> Self {
        Self {
            n: self.n,
            data: self.data.repeat(e),
            weights: self.weights.as_ref().map(|w| w.repeat(e)),
        }
    }

    /// Prefix of the first `m` points.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.len());
        Self {
            n: self.n,
            data: self.data[..m * self.n].to_vec(),
            weights: self.weights.as_ref().map(|w| w[..m].to_vec()),
        }
    }

    /// Sample average of `f`, weighted when the set carries weights.
    pub fn average<F: Scalar>(&self, mut f: impl FnMut(&[i8]) -> F) -> F {
        match &self.weights {
            None => {
                let total: F = self.points().map(&mut f).sum();
                total / F::lit(self.len() as f64)
            }
            Some(w) => {
                let mut num = F::zero();
                let mut den = F::zero();
                for (x, &wl) in self.points().zip(w) {
                    let wl = F::lit(wl);
                    num += wl * f(x);
                    den += wl;
                }
                num / den
            }
        }
    }

    /// Applies a vertex relabeling (`perm[i]` is the new id of vertex `i`).
    pub fn relabel(&self, perm: &[Vertex]) -> Self {
        let mut out = self.clone();
        for (src, dst) in self.points().zip(out.points_mut()) {
            for (i, &v) in src.iter().enumerate() {
                dst[perm[i]] = v;
            }
        }
        out
    }
}

/// Explicit conditional distribution over the variables of a region.
///
/// `probs[s]` is the probability of the assignment whose bit `b` (set means
/// `+1`) is the spin of `region.members()[b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionDistribution<F> {
    pub region: Region,
    pub probs: Vec<F>,
}

impl<F: Scalar> RegionDistribution<F> {
    /// Expectation of `f` evaluated on the region's spins (ascending order).
    pub fn expectation(&self, f: impl Fn(&[i8]) -> F) -> F {
        let k = self.region.len();
        let mut buf = vec![0i8; k];
        let mut acc = F::zero();
        for (s, &p) in self.probs.iter().enumerate() {
            fill_spins(s as u64, &mut buf);
            acc += p * f(&buf);
        }
        acc
    }
}

#[inline]
pub(crate) fn fill_spins(state: u64, out: &mut [i8]) {
    for (b, v) in out.iter_mut().enumerate() {
        *v = if state >> b & 1 == 1 { 1 } else { -1 };
    }
}

/// Conditional distribution `P(x_A | x_∂A)` for a fixed region `A`, prepared
/// once and evaluated for many boundary configurations.
///
/// Variables are indexed locally in the order passed to [`Self::new`]; state
/// `s` assigns `+1` to local variable `b` when bit `b` of `s` is set.
#[derive(Clone, Debug)]
pub struct RegionConditional<'m, F> {
    model: &'m PbmParams<F>,
    order: Vec<Vertex>,
    internal: Vec<Vec<(usize, F)>>,
    external: Vec<Vec<(Vertex, F)>>,
    boundary: Region,
}

impl<'m, F: Scalar> RegionConditional<'m, F> {
    /// `order` lists the region's vertices in the desired local order.
    pub fn new(model: &'m PbmParams<F>, order: Vec<Vertex>, cap: usize) -> Result<Self> {
        let region = Region::new(order.iter().copied());
        if region.len() != order.len() {
            return Err(Error::Region("duplicate vertex in region".into()));
        }
        model.graph().check_region(&region)?;
        if order.len() > cap {
            return Err(Error::Capacity {
                what: "sum region",
                size: order.len(),
                cap,
            });
        }
        let g = model.graph();
        let mut internal = vec![Vec::new(); order.len()];
        let mut external = vec![Vec::new(); order.len()];
        for (b, &v) in order.iter().enumerate() {
            for &(u, e) in g.adjacent(v) {
                let w = model.edge_coupling(e);
                match order.iter().position(|&o| o == u) {
                    Some(c) => internal[b].push((c, w)),
                    None => external[b].push((u, w)),
                }
            }
        }
        let boundary = boundary(g, &region);
        Ok(Self { model, order, internal, external, boundary })
    }

    pub fn order(&self) -> &[Vertex] {
        &self.order
    }

    pub fn boundary(&self) -> &Region {
        &self.boundary
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Boundary fields `w_a + Σ_{b ∈ ∂A} w_ab x_b` of the region's variables.
    /// Only boundary coordinates of `x` are read.
    pub fn fields(&self, x: &[i8], out: &mut Vec<F>) {
        out.clear();
        for (b, ext) in self.external.iter().enumerate() {
            let mut h = self.model.bias(self.order[b]);
            for &(u, w) in ext {
                h += w * F::spin(x[u]);
            }
            out.push(h);
        }
    }

    /// Fills `out` with the log-weights of all `2^|A|` local states given the
    /// boundary fields, using a Gray-code walk.
    pub fn log_weights(&self, fields: &[F], out: &mut Vec<F>) {
        let k = self.order.len();
        let size = 1usize << k;
        out.clear();
        out.resize(size, F::zero());
        let mut spins = vec![-F::one(); k];
        let mut lw = F::zero();
        for (b, h) in fields.iter().enumerate() {
            lw -= *h;
            for &(c, w) in &self.internal[b] {
                if c > b {
                    lw += w;
                }
            }
        }
        let mut state = 0usize;
        out[0] = lw;
        for step in 1..size {
            let b = step.trailing_zeros() as usize;
            let mut h = fields[b];
            for &(c, w) in &self.internal[b] {
                h += w * spins[c];
            }
            lw -= F::lit(2.0) * spins[b] * h;
            spins[b] = -spins[b];
            state ^= 1 << b;
            out[state] = lw;
        }
    }

    /// Normalizes log-weights in place into probabilities.
    pub fn normalize(buf: &mut [F]) {
        let max = buf.iter().copied().fold(F::neg_infinity(), F::max);
        let mut z = F::zero();
        for v in buf.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in buf.iter_mut() {
            *v /= z;
        }
    }

    /// Full probability table for the boundary values in `x`.
    pub fn distribution(&self, x: &[i8]) -> Vec<F> {
        let mut fields = Vec::new();
        let mut table = Vec::new();
        self.fields(x, &mut fields);
        self.log_weights(&fields, &mut table);
        Self::normalize(&mut table);
        table
    }

    /// `Σ_{x_A} f(x_T) P(x_A | x_∂A)` where the target `T` is the first
    /// `f_table.len().trailing_zeros()` local variables and `f_table[t]` is
    /// `f` at target state `t`. `scratch` buffers are reused across calls.
    pub fn expectation(&self, x: &[i8], f_table: &[F], scratch: &mut Scratch<F>) -> F {
        debug_assert!(f_table.len().is_power_of_two());
        let mask = f_table.len() - 1;
        self.fields(x, &mut scratch.fields);
        self.log_weights(&scratch.fields, &mut scratch.table);
        let max = scratch.table.iter().copied().fold(F::neg_infinity(), F::max);
        let mut num = F::zero();
        let mut den = F::zero();
        for (s, &lw) in scratch.table.iter().enumerate() {
            let p = (lw - max).exp();
            num += p * f_table[s & mask];
            den += p;
        }
        num / den
    }
}

/// Reusable buffers for [`RegionConditional::expectation`].
#[derive(Clone, Debug, Default)]
pub struct Scratch<F> {
    fields: Vec<F>,
    table: Vec<F>,
}

/// `P(x_A | x_∂A)` as an explicit table; only boundary coordinates of `x`
/// are read.
pub fn conditional_on_region<F: Scalar>(
    model: &PbmParams<F>,
    a: &Region,
    x: &[i8],
    cap: usize,
) -> Result<RegionDistribution<F>> {
    if x.len() != model.n() {
        return Err(argument(format!(
            "configuration has {} entries, expected {}",
            x.len(),
            model.n()
        )));
    }
    let cond = RegionConditional::new(model, a.members().to_vec(), cap)?;
    Ok(RegionDistribution {
        region: a.clone(),
        probs: cond.distribution(x),
    })
}
