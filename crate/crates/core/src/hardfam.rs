//! The hard function family: subset families, wave-of-subset-sum functions,
//! their exact one-hidden-layer networks, and weight perturbations.

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activation::{make_bump, ActivationKind};
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::seed::stream_rng;
use crate::wave::{choose_truncation, make_wave, WaveSpec};

pub use crate::linalg::condition_number;

/// Default overlap margin `c`.
pub const DEFAULT_C: f64 = 0.1;
/// Rejection draws allowed per requested set.
const DRAWS_PER_SET: usize = 10_000;
/// Probes used to measure output drift after perturbation.
const DRIFT_PROBES: usize = 256;

/// A subset of `{0, …, n−1}` stored as a bitmask.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "SubsetRepr", try_from = "SubsetRepr")]
pub struct Subset {
    n: usize,
    words: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct SubsetRepr {
    n: usize,
    indices: Vec<usize>,
}

impl From<Subset> for SubsetRepr {
    fn from(s: Subset) -> Self {
        SubsetRepr { n: s.n, indices: s.indices() }
    }
}

impl TryFrom<SubsetRepr> for Subset {
    type Error = Error;

    fn try_from(r: SubsetRepr) -> Result<Self> {
        Subset::from_indices(r.n, &r.indices)
    }
}

impl Subset {
    pub fn empty(n: usize) -> Self {
        Subset { n, words: vec![0; n.div_ceil(64)] }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut s = Self::empty(n);
        for &i in indices {
            if i >= n {
                return Err(invalid(format!("index {i} out of range for n = {n}")));
            }
            s.words[i / 64] |= 1 << (i % 64);
        }
        Ok(s)
    }

    /// The first `k` coordinates.
    pub fn prefix(n: usize, k: usize) -> Result<Self> {
        Self::from_indices(n, &(0..k).collect::<Vec<_>>())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        i < self.n && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.contains(i)).collect()
    }

    pub fn intersection_len(&self, other: &Subset) -> usize {
        self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }

    /// `Σ_{i∈S} x_i`.
    #[inline]
    pub fn sum(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (w, &bits) in self.words.iter().enumerate() {
            let mut b = bits;
            while b != 0 {
                let i = w * 64 + b.trailing_zeros() as usize;
                acc += x[i];
                b &= b - 1;
            }
        }
        acc
    }
}

/// Subsets of size `⌊n/2⌋` whose pairwise overlaps stay below `(1/2 − c)n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetFamily {
    pub n: usize,
    pub c: f64,
    pub sets: Vec<Subset>,
}

impl SubsetFamily {
    /// Strict overlap bound `(1/2 − c)n`.
    pub fn overlap_bound(&self) -> f64 {
        (0.5 - self.c) * self.n as f64
    }

    /// Checks set sizes and every pair exhaustively.
    pub fn verify(&self) -> Result<()> {
        let half = self.n / 2;
        let bound = self.overlap_bound();
        for (i, s) in self.sets.iter().enumerate() {
            if s.len() != half || s.n() != self.n {
                return Err(invalid(format!("set {i} has size {} instead of {half}", s.len())));
            }
            for (j, t) in self.sets.iter().enumerate().skip(i + 1) {
                let k = s.intersection_len(t);
                if k as f64 >= bound {
                    return Err(invalid(format!("sets {i} and {j} overlap in {k} ≥ {bound} coordinates")));
                }
            }
        }
        Ok(())
    }
}

/// Rejection sampling of uniform `⌊n/2⌋`-subsets, keeping a draw only if it
/// meets the overlap bound against every kept set.
pub fn build_subset_family(n: usize, count: usize, c: f64, seed: u64) -> Result<SubsetFamily> {
    if n < 4 {
        return Err(invalid(format!("subset family needs n ≥ 4, got {n}")));
    }
    if !(c > 0.0 && c < 0.5) {
        return Err(invalid(format!("overlap margin c must lie in (0, 1/2), got {c}")));
    }
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let mut fam = SubsetFamily { n, c, sets: Vec::with_capacity(count) };
    let bound = fam.overlap_bound();
    let mut rng = stream_rng(seed, 0);
    let budget = count.saturating_mul(DRAWS_PER_SET);
    for _ in 0..budget {
        let idx = index::sample(&mut rng, n, n / 2).into_vec();
        let s = Subset::from_indices(n, &idx)?;
        if fam.sets.iter().all(|t| (s.intersection_len(t) as f64) < bound) {
            fam.sets.push(s);
            if fam.sets.len() == count {
                return Ok(fam);
            }
        }
    }
    Err(Error::ResourceLimit(format!(
        "rejection budget of {budget} draws exhausted with {} of {count} sets",
        fam.sets.len()
    )))
}

/// How the wave period is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum PeriodRule {
    /// `θ = 4/s`, matching the sigmoid construction with centres at `4k/s`.
    Lattice,
    /// `θ = 4 · essential_radius`.
    Essential,
    Fixed(f64),
}

/// Parameters of a hard function's wave.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub activation: ActivationKind,
    pub period: PeriodRule,
    /// Explicit truncation; otherwise chosen from `delta` and `range_sigmas`.
    pub m: Option<usize>,
    pub delta: f64,
    /// The wave must be quasiperiodic over this many standard deviations of
    /// the subset sum.
    pub range_sigmas: f64,
}

impl WaveParams {
    pub fn new(activation: ActivationKind) -> Self {
        WaveParams { activation, period: PeriodRule::Lattice, m: None, delta: 1e-3, range_sigmas: 6.0 }
    }

    /// Builds the wave for a subset sum of `active` coordinates with
    /// per-coordinate standard deviation `input_std`.
    pub fn build(&self, active: usize, input_std: f64) -> Result<WaveSpec> {
        let psi = make_bump(self.activation)?;
        let theta = match self.period {
            PeriodRule::Lattice => 4.0 / self.activation.sharpness,
            PeriodRule::Essential => 4.0 * psi.essential_radius,
            PeriodRule::Fixed(t) => t,
        };
        let m = match self.m {
            Some(m) => m,
            None => {
                let big_m = (self.range_sigmas * input_std * (active as f64).sqrt()).max(theta / 2.0);
                choose_truncation(&psi, theta, big_m, self.delta)?
            }
        };
        make_wave(&psi, theta, m)
    }
}

/// `f(x) = φ(Σ_{i∈S} x_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardFunction {
    pub wave: WaveSpec,
    pub subset: Subset,
    pub n: usize,
}

impl HardFunction {
    pub fn new(wave: WaveSpec, subset: Subset) -> Result<Self> {
        if subset.is_empty() {
            return Err(invalid("hard function needs a nonempty subset"));
        }
        Ok(HardFunction { n: subset.n(), wave, subset })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(invalid(format!("input has {} coordinates, expected {}", x.len(), self.n)));
        }
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.wave.eval(self.subset.sum(x))
    }
}

/// One-hidden-layer network `out = output_scale · ⟨w, σ(Wx + b)⟩ + output_bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkRep {
    pub hidden_weights: Matrix,
    pub hidden_biases: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
    pub activation: ActivationKind,
    pub output_scale: f64,
}

impl NetworkRep {
    pub fn n(&self) -> usize {
        self.hidden_weights.cols
    }

    pub fn hidden(&self) -> usize {
        self.hidden_weights.rows
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if self.hidden_biases.len() != h || self.output_weights.len() != h {
            return Err(invalid(format!(
                "network has {h} hidden rows but {} biases and {} output weights",
                self.hidden_biases.len(),
                self.output_weights.len()
            )));
        }
        Ok(())
    }
}

/// The exact network for `f`: for every `k ∈ [−m, m]` and every gate term
/// `(coeff, sign, shift)` of the bump, one unit with row `sign · 1_S`, bias
/// `shift − sign·kθ` and output weight `coeff`.
pub fn to_network(f: &HardFunction) -> NetworkRep {
    let w = &f.wave;
    let n = f.n;
    let m = w.m as i64;
    let terms = &w.psi.terms;
    let units = terms.len() * (2 * w.m + 1);
    let mut weights = Matrix::zeros(units, n);
    let mut biases = Vec::with_capacity(units);
    let mut out = Vec::with_capacity(units);
    let idx = f.subset.indices();
    let mut row = 0;
    for k in -m..=m {
        let center = k as f64 * w.theta;
        for t in terms {
            let r = weights.row_mut(row);
            for &i in &idx {
                r[i] = t.sign;
            }
            biases.push(t.shift - t.sign * center);
            out.push(t.coeff);
            row += 1;
        }
    }
    NetworkRep {
        hidden_weights: weights,
        hidden_biases: biases,
        output_weights: out,
        output_bias: w.scale * (2 * w.m + 1) as f64 * w.psi.constant_offset + w.offset,
        activation: w.psi.kind,
        output_scale: w.scale,
    }
}

/// Single forward pass.
pub fn network_forward(net: &NetworkRep, x: &[f64]) -> Result<f64> {
    net.validate()?;
    if x.len() != net.n() {
        return Err(invalid(format!("input has {} coordinates, network expects {}", x.len(), net.n())));
    }
    Ok(forward_unchecked(net, x))
}

fn forward_unchecked(net: &NetworkRep, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..net.hidden() {
        let pre: f64 = net.hidden_weights.row(j).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + net.hidden_biases[j];
        acc += net.output_weights[j] * net.activation.eval(pre);
    }
    net.output_scale * acc + net.output_bias
}

/// A perturbed network and its measured output drift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbed {
    pub net: NetworkRep,
    /// `max |f̃(x) − f(x)|` over Gaussian probes.
    pub drift: f64,
}

/// Adds i.i.d. `N(0, delta)` noise to every hidden weight and measures the
/// sup-norm output drift over standard Gaussian probes.
pub fn perturb_network(net: &NetworkRep, delta: f64, seed: u64) -> Result<Perturbed> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("perturbation variance must be positive, got {delta}")));
    }
    net.validate()?;
    let sd = delta.sqrt();
    let mut rng = stream_rng(seed, 0);
    let mut noisy = net.clone();
    for v in noisy.hidden_weights.data.iter_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += sd * e;
    }
    let mut probe_rng = stream_rng(seed, 1);
    let n = net.n();
    let mut x = vec![0.0; n];
    let mut drift: f64 = 0.0;
    for _ in 0..DRIFT_PROBES {
        for v in x.iter_mut() {
            *v = StandardNormal.sample(&mut probe_rng);
        }
        drift = drift.max((forward_unchecked(&noisy, &x) - forward_unchecked(net, &x)).abs());
    }
    Ok(Perturbed { net: noisy, drift })
}
