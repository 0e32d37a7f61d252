//! Gibbs sampling, annealed sample generation, persistent chains and
//! annealed importance sampling.
//!
//! Every chain owns its own random stream. Chain `c` under master seed `s`
//! uses `ChaCha8Rng::seed_from_u64(s)` switched to stream `c`, so adding or
//! removing chains never perturbs the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{argument, Result};
use crate::model::{PbmParams, SampleSet};
use crate::scalar::Scalar;

/// Random stream of chain `chain` under master seed `seed`.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Inverse-temperature ladder for simulated annealing.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnealSchedule {
    betas: Vec<f64>,
    sweeps_per_beta: usize,
}

impl AnnealSchedule {
    pub fn new(betas: Vec<f64>, sweeps_per_beta: usize) -> Result<Self> {
        if sweeps_per_beta == 0 {
            return Err(argument("sweeps_per_beta must be positive"));
        }
        match (betas.first(), betas.last()) {
            (Some(&first), Some(&last)) if first >= 0.0 && last == 1.0 => {}
            _ => return Err(argument("betas must start at a value >= 0 and end at 1.0")),
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(argument("betas must be nondecreasing"));
        }
        Ok(Self { betas, sweeps_per_beta })
    }

    /// `anneal_sweeps` sweeps with β rising linearly to 1 (β = k / anneal_sweeps
    /// for k = 1..=anneal_sweeps), then `equilibration_sweeps` sweeps at β = 1.
    pub fn linear(anneal_sweeps: usize, equilibration_sweeps: usize) -> Self {
        let mut betas: Vec<f64> = (1..=anneal_sweeps)
            .map(|k| k as f64 / anneal_sweeps as f64)
            .collect();
        betas.extend(std::iter::repeat_n(1.0, equilibration_sweeps));
        if betas.is_empty() {
            betas.push(1.0);
        }
        Self { betas, sweeps_per_beta: 1 }
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn sweeps_per_beta(&self) -> usize {
        self.sweeps_per_beta
    }

    pub fn total_sweeps(&self) -> usize {
        self.betas.len() * self.sweeps_per_beta
    }
}

impl Default for AnnealSchedule {
    /// 1000 annealing sweeps followed by 100 sweeps at β = 1.
    fn default() -> Self {
        Self::linear(1000, 100)
    }
}

#[inline]
fn random_spin<R: Rng + ?Sized>(rng: &mut R) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

/// One systematic-scan sweep at inverse temperature `beta`, visiting vertices
/// in ascending order and resampling each from its conditional
/// `P(x_i = +1) = 1 / (1 + exp(-2 β h_i))`. Returns the change in the model
/// exponent caused by the sweep.
pub fn gibbs_sweep<F: Scalar, R: Rng + ?Sized>(model: &PbmParams<F>, x: &mut [i8], beta: F, rng: &mut R) -> F {
    let two = F::lit(2.0);
    let mut delta = F::zero();
    for i in 0..model.n() {
        let h = model.local_field(i, x);
        let p_up = F::one() / (F::one() + (-two * beta * h).exp());
        let u: f64 = rng.random();
        let new = if u < p_up.as_f64() { 1 } else { -1 };
        if new != x[i] {
            // flipping x_i changes the exponent by 2 x_new h_i
            delta += two * F::spin(new) * h;
            x[i] = new;
        }
    }
    delta
}

/// Flattened copy of the model used by the inner sampling loops; performs
/// exactly the arithmetic of [`gibbs_sweep`].
struct Sweeper<F> {
    bias: Vec<F>,
    offsets: Vec<usize>,
    neighbors: Vec<(usize, F)>,
}

impl<F: Scalar> Sweeper<F> {
    fn new(model: &PbmParams<F>) -> Self {
        let g = model.graph();
        let mut offsets = Vec::with_capacity(g.n() + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for i in 0..g.n() {
            neighbors.extend(g.adjacent(i).iter().map(|&(j, e)| (j, model.edge_coupling(e))));
            offsets.push(neighbors.len());
        }
        Self { bias: model.biases().to_vec(), offsets, neighbors }
    }

    #[inline]
    fn field(&self, i: usize, x: &[i8]) -> F {
        let mut h = self.bias[i];
        for &(j, w) in &self.neighbors[self.offsets[i]..self.offsets[i + 1]] {
            h += w * F::spin(x[j]);
        }
        h
    }

    #[inline]
    fn update<R: Rng + ?Sized>(&self, i: usize, x: &mut [i8], two_beta: F, rng: &mut R) -> F {
        let h = self.field(i, x);
        let p_up = F::one() / (F::one() + (-two_beta * h).exp());
        let u: f64 = rng.random();
        let new: i8 = if u < p_up.as_f64() { 1 } else { -1 };
        let delta = F::lit((new - x[i]) as f64) * h;
        x[i] = new;
        delta
    }

    #[cfg(test)]
    fn sweep<R: Rng + ?Sized>(&self, x: &mut [i8], beta: F, rng: &mut R) -> F {
        let two_beta = F::lit(2.0) * beta;
        let mut delta = F::zero();
        for i in 0..self.bias.len() {
            delta += self.update(i, x, two_beta, rng);
        }
        delta
    }

    /// One sweep of each chain in `xs` (flat, `n` spins per chain), with the
    /// chains interleaved site by site. Per chain the result is identical to
    /// sweeping it alone. Exponent changes are added to `deltas`.
    fn sweep_block<R: Rng>(&self, xs: &mut [i8], rngs: &mut [R], beta: F, deltas: &mut [F]) {
        let n = self.bias.len();
        let two_beta = F::lit(2.0) * beta;
        for i in 0..n {
            for ((x, rng), d) in xs.chunks_exact_mut(n).zip(rngs.iter_mut()).zip(deltas.iter_mut()) {
                *d += self.update(i, x, two_beta, rng);
            }
        }
    }
}

/// Chains sharing one interleaved sweep.
const BLOCK: usize = 8;

/// `m` independent annealed chains, each started uniformly at random; the
/// final configuration of every chain forms the sample set.
pub fn draw_sample_set<F: Scalar>(
    model: &PbmParams<F>,
    m: usize,
    schedule: &AnnealSchedule,
    seed: u64,
) -> Result<SampleSet> {
    if m == 0 {
        return Err(argument("sample count must be positive"));
    }
    let n = model.n();
    let sweeper = Sweeper::new(model);
    let mut rngs: Vec<ChaCha8Rng> = (0..m as u64).map(|c| chain_rng(seed, c)).collect();
    let mut data = vec![0i8; m * n];
    for (x, rng) in data.chunks_exact_mut(n.max(1)).zip(rngs.iter_mut()) {
        x.iter_mut().for_each(|v| *v = random_spin(rng));
    }
    let mut deltas = [F::zero(); BLOCK];
    for (xs, rs) in data.chunks_mut(BLOCK * n.max(1)).zip(rngs.chunks_mut(BLOCK)) {
        for &beta in schedule.betas() {
            let beta = F::lit(beta);
            for _ in 0..schedule.sweeps_per_beta() {
                sweeper.sweep_block(xs, rs, beta, &mut deltas);
            }
        }
    }
    let mut out = SampleSet::new(n);
    for c in 0..m {
        out.push(&data[c * n..(c + 1) * n])?;
    }
    Ok(out)
}

/// Persistent Gibbs chains: a configuration and a random stream per chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    configs: SampleSet,
    rngs: Vec<ChaCha8Rng>,
}

impl ChainState {
    /// Chains starting from the points of `configs`.
    pub fn new(configs: SampleSet, seed: u64) -> Result<Self> {
        if configs.is_weighted() {
            return Err(argument("persistent chains cannot start from a weighted sample set"));
        }
        let rngs = (0..configs.len() as u64).map(|c| chain_rng(seed, c)).collect();
        Ok(Self { configs, rngs })
    }

    pub fn configs(&self) -> &SampleSet {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.rngs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rngs.is_empty()
    }
}

/// Advances every chain by `kappa` sweeps at β = 1 from its current state.
pub fn persistent_update<F: Scalar>(model: &PbmParams<F>, state: &mut ChainState, kappa: usize) -> Result<()> {
    if kappa == 0 {
        return Err(argument("kappa must be at least 1"));
    }
    let sweeper = Sweeper::new(model);
    let n = state.configs.n().max(1);
    let mut deltas = [F::zero(); BLOCK];
    let data = state.configs.data_mut();
    for (xs, rs) in data.chunks_mut(BLOCK * n).zip(state.rngs.chunks_mut(BLOCK)) {
        for _ in 0..kappa {
            sweeper.sweep_block(xs, rs, F::one(), &mut deltas);
        }
    }
    Ok(())
}

/// Output of annealed importance sampling.
#[derive(Clone, Debug)]
pub struct AisResult<F> {
    /// Estimate of `ln Z`.
    pub log_z: F,
    /// Final chain states with self-normalizable importance weights.
    pub samples: SampleSet,
    /// Unnormalized log importance weight of each chain.
    pub log_weights: Vec<F>,
}

/// Annealed importance sampling from the uniform distribution (β = 0) to the
/// model (β = 1) on the ladder `0, step, 2·step, …, 1`, with one Gibbs sweep
/// per rung and chain.
pub fn ais_estimate<F: Scalar>(model: &PbmParams<F>, m: usize, step: f64, seed: u64) -> Result<AisResult<F>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(argument(format!("AIS step {step} must lie in (0, 1]")));
    }
    if m == 0 {
        return Err(argument("AIS chain count must be positive"));
    }
    let rungs = (1.0 / step - 1e-9).ceil() as usize;
    let betas: Vec<f64> = (0..=rungs).map(|k| (k as f64 * step).min(1.0)).collect();
    let n = model.n();
    let sweeper = Sweeper::new(model);
    let mut rngs: Vec<ChaCha8Rng> = (0..m as u64).map(|c| chain_rng(seed, c)).collect();
    let mut data = vec![0i8; m * n];
    for (x, rng) in data.chunks_exact_mut(n.max(1)).zip(rngs.iter_mut()) {
        x.iter_mut().for_each(|v| *v = random_spin(rng));
    }
    let mut log_weights = Vec::with_capacity(m);
    for (xs, rs) in data.chunks_mut(BLOCK * n.max(1)).zip(rngs.chunks_mut(BLOCK)) {
        let mut exponents: Vec<F> = xs.chunks_exact(n.max(1)).map(|x| model.exponent(x)).collect();
        let mut lw = vec![F::zero(); rs.len()];
        for k in 1..betas.len() {
            let beta = F::lit(betas[k]);
            let gap = beta - F::lit(betas[k - 1]);
            for (l, &e) in lw.iter_mut().zip(&exponents) {
                *l += gap * e;
            }
            sweeper.sweep_block(xs, rs, beta, &mut exponents);
        }
        log_weights.extend(lw);
    }
    let mut samples = SampleSet::new(n);
    for c in 0..m {
        samples.push(&data[c * n..(c + 1) * n])?;
    }
    let max = log_weights.iter().copied().fold(F::neg_infinity(), F::max);
    let rel: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp().as_f64()).collect();
    let mean_rel = rel.iter().sum::<f64>() / m as f64;
    let log_z = F::lit(n as f64) * F::LN_2() + max + F::lit(mean_rel.ln());
    let samples = samples.with_weights(rel)?;
    Ok(AisResult { log_z, samples, log_weights })
}
