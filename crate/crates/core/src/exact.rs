//! Brute-force inference by enumerating all `2^n` configurations.
//!
//! Used as the reference oracle for estimators, for the exact maximum
//! likelihood reference in learning experiments, and for exact asymptotic
//! variances. State `s` assigns `+1` to vertex `i` when bit `i` is set.

use crate::error::{Error, Result};
use crate::graph::Region;
use crate::model::{fill_spins, PbmParams, SampleSet};
use crate::scalar::Scalar;

/// Default cap on `n` for full enumeration.
pub const DEFAULT_EXACT_CAP: usize = 24;

/// Normalized Gibbs distribution over all configurations.
#[derive(Clone, Debug)]
pub struct GibbsTable<F> {
    pub n: usize,
    pub probs: Vec<F>,
    pub log_z: F,
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::Capacity { what: "model", size: n, cap })
    } else {
        Ok(())
    }
}

/// Exponents `Σ w_i x_i + Σ w_ij x_i x_j` of every state.
pub fn log_weights<F: Scalar>(model: &PbmParams<F>, cap: usize) -> Result<Vec<F>> {
    let n = model.n();
    check_cap(n, cap)?;
    let size = 1usize << n;
    let mut out = vec![F::zero(); size];
    let mut spins = vec![-F::one(); n];
    let mut lw = -model.biases().iter().copied().sum::<F>() + model.couplings().iter().copied().sum::<F>();
    out[0] = lw;
    let g = model.graph();
    let mut state = 0usize;
    for step in 1..size {
        let i = step.trailing_zeros() as usize;
        let mut h = model.bias(i);
        for &(j, e) in g.adjacent(i) {
            h += model.edge_coupling(e) * spins[j];
        }
        lw -= F::lit(2.0) * spins[i] * h;
        spins[i] = -spins[i];
        state ^= 1 << i;
        out[state] = lw;
    }
    Ok(out)
}

/// The full normalized distribution and `ln Z`.
pub fn gibbs_table<F: Scalar>(model: &PbmParams<F>, cap: usize) -> Result<GibbsTable<F>> {
    let mut probs = log_weights(model, cap)?;
    let max = probs.iter().copied().fold(F::neg_infinity(), F::max);
    let mut z = F::zero();
    for p in probs.iter_mut() {
        *p = (*p - max).exp();
        z += *p;
    }
    for p in probs.iter_mut() {
        *p /= z;
    }
    Ok(GibbsTable {
        n: model.n(),
        probs,
        log_z: max + z.ln(),
    })
}

pub fn log_partition<F: Scalar>(model: &PbmParams<F>) -> Result<F> {
    Ok(gibbs_table(model, DEFAULT_EXACT_CAP)?.log_z)
}

impl<F: Scalar> GibbsTable<F> {
    /// Marginal table over `region`; entry `t` has bit `b` set when
    /// `region.members()[b]` is `+1`.
    pub fn marginal(&self, region: &Region) -> Vec<F> {
        let bits: Vec<usize> = region.members().to_vec();
        let mut out = vec![F::zero(); 1 << bits.len()];
        for (s, &p) in self.probs.iter().enumerate() {
            let mut t = 0usize;
            for (b, &i) in bits.iter().enumerate() {
                t |= (s >> i & 1) << b;
            }
            out[t] += p;
        }
        out
    }

    /// `⟨x_i⟩` for every vertex.
    pub fn means(&self) -> Vec<F> {
        (0..self.n)
            .map(|i| {
                let mut up = F::zero();
                for (s, &p) in self.probs.iter().enumerate() {
                    if s >> i & 1 == 1 {
                        up += p;
                    }
                }
                // Σ p x_i = P(+1) - P(-1)
                F::lit(2.0) * up - F::one()
            })
            .collect()
    }

    /// `⟨x_i x_j⟩` for an arbitrary pair.
    pub fn pair_moment(&self, i: usize, j: usize) -> F {
        let mut agree = F::zero();
        for (s, &p) in self.probs.iter().enumerate() {
            if (s >> i ^ s >> j) & 1 == 0 {
                agree += p;
            }
        }
        F::lit(2.0) * agree - F::one()
    }
}

/// Exact moments: `⟨x_i⟩` per vertex and `⟨x_i x_j⟩` per edge (edge order).
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<F> {
    pub means: Vec<F>,
    pub pairs: Vec<F>,
}

impl<F: Scalar> Moments<F> {
    /// Covariances `⟨x_i x_j⟩ - ⟨x_i⟩⟨x_j⟩` on the edges of `graph`.
    pub fn covariances(&self, graph: &crate::graph::PairwiseGraph) -> Vec<F> {
        graph
            .edges()
            .iter()
            .zip(&self.pairs)
            .map(|(&(i, j), &c)| c - self.means[i] * self.means[j])
            .collect()
    }
}

pub fn exact_moments<F: Scalar>(model: &PbmParams<F>) -> Result<Moments<F>> {
    exact_moments_with_cap(model, DEFAULT_EXACT_CAP).map(|(m, _)| m)
}

/// Moments together with `ln Z`, from one enumeration.
pub fn exact_moments_with_cap<F: Scalar>(model: &PbmParams<F>, cap: usize) -> Result<(Moments<F>, F)> {
    let table = gibbs_table(model, cap)?;
    let means = table.means();
    let pairs = model
        .graph()
        .edges()
        .iter()
        .map(|&(i, j)| table.pair_moment(i, j))
        .collect();
    Ok((Moments { means, pairs }, table.log_z))
}

/// `⟨f(x_T)⟩` where `f` receives the spins of `t` in ascending vertex order.
pub fn exact_expectation<F: Scalar>(
    model: &PbmParams<F>,
    f: impl Fn(&[i8]) -> F,
    t: &Region,
) -> Result<F> {
    model.graph().check_region(t)?;
    let table = gibbs_table(model, DEFAULT_EXACT_CAP)?;
    Ok(expectation_from_marginal(&table.marginal(t), t.len(), f))
}

pub(crate) fn expectation_from_marginal<F: Scalar>(marginal: &[F], k: usize, f: impl Fn(&[i8]) -> F) -> F {
    let mut buf = vec![0i8; k];
    let mut acc = F::zero();
    for (s, &p) in marginal.iter().enumerate() {
        fill_spins(s as u64, &mut buf);
        acc += p * f(&buf);
    }
    acc
}

/// Every configuration, weighted by its exact probability. Estimators fed
/// with this set return exact expectations.
pub fn exact_sample_set<F: Scalar>(model: &PbmParams<F>, cap: usize) -> Result<SampleSet> {
    let table = gibbs_table(model, cap)?;
    let n = model.n();
    let mut s = SampleSet::new(n);
    let mut buf = vec![0i8; n];
    for st in 0..table.probs.len() {
        fill_spins(st as u64, &mut buf);
        s.push(&buf)?;
    }
    s.with_weights(table.probs.iter().map(|p| p.as_f64()).collect())
}
