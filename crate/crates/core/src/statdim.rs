//! Monte Carlo covariances and correlations of hard functions, the
//! soft-indicator covariances built on them, and their decay in `n`.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::dist::{sample_rows, InputDist1D, InputDistN};
use crate::error::{invalid, Result};
use crate::hardfam::{build_subset_family, HardFunction, WaveParams, DEFAULT_C};
use crate::seed::{chunks, derive_seed, stream_rng};
use crate::sqoracle::SoftIndicator;

/// Smallest accepted Monte Carlo sample.
pub const MIN_MC: usize = 10_000;
/// Variances below this make a correlation undefined; it is reported as 0.
pub const VAR_FLOOR: f64 = 1e-10;
/// Families up to this size use every pair in order instead of sampling.
pub const ENUMERATE_PAIRS_UP_TO: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Indices of the two functions within their family.
    pub pair: (usize, usize),
    pub rho: f64,
    pub var_f: f64,
    pub var_g: f64,
}

impl CovEstimate {
    /// Standard error of `rho`, ignoring the error in the variances.
    pub fn rho_std_error(&self) -> f64 {
        if self.var_f > VAR_FLOOR && self.var_g > VAR_FLOOR {
            self.std_error / (self.var_f * self.var_g).sqrt()
        } else {
            0.0
        }
    }
}

/// Values of every function on one shared sample of `n_mc` inputs.
pub fn function_values(fs: &[HardFunction], dist: &InputDistN, n_mc: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if fs.is_empty() {
        return Err(invalid("no functions to evaluate"));
    }
    let n = dist.dim();
    if fs.iter().any(|f| f.n != n) {
        return Err(invalid(format!("every function must take {n} inputs")));
    }
    let parts: Vec<Vec<Vec<f64>>> = chunks(n_mc)
        .into_par_iter()
        .map(|(_, range)| {
            let x = sample_rows(dist, range.start, range.len(), seed);
            fs.iter().map(|f| x.chunks(n).map(|r| f.eval_unchecked(r)).collect()).collect()
        })
        .collect();
    let mut out: Vec<Vec<f64>> = fs.iter().map(|_| Vec::with_capacity(n_mc)).collect();
    for part in parts {
        for (o, p) in out.iter_mut().zip(part) {
            o.extend(p);
        }
    }
    Ok(out)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Two-pass unbiased covariance of stored samples.
pub fn covariance_of(a: &[f64], b: &[f64], pair: (usize, usize)) -> Result<CovEstimate> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid("covariance needs two equal-length samples of at least 2 values"));
    }
    let nf = a.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb, mut sp2) = (0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        let p = dx * dy;
        sab += p;
        saa += dx * dx;
        sbb += dy * dy;
        sp2 += p * p;
    }
    let value = sab / (nf - 1.0);
    let (var_f, var_g) = (saa / (nf - 1.0), sbb / (nf - 1.0));
    let mp = sab / nf;
    let sd = ((sp2 - nf * mp * mp) / (nf - 1.0)).max(0.0).sqrt();
    let rho = if var_f > VAR_FLOOR && var_g > VAR_FLOOR { (value / (var_f * var_g).sqrt()).clamp(-1.0, 1.0) } else { 0.0 };
    Ok(CovEstimate { value, std_error: sd / nf.sqrt(), n_samples: a.len(), pair, rho, var_f, var_g })
}

/// Covariance and correlation of `f` and `g` on a shared sample.
pub fn mc_covariance(f: &HardFunction, g: &HardFunction, dist: &InputDistN, n_mc: usize, seed: u64) -> Result<CovEstimate> {
    if n_mc < MIN_MC {
        return Err(invalid(format!("n_mc must be at least {MIN_MC}, got {n_mc}")));
    }
    if f.n != g.n {
        return Err(invalid(format!("functions take {} and {} inputs", f.n, g.n)));
    }
    let v = function_values(&[f.clone(), g.clone()], dist, n_mc, seed)?;
    covariance_of(&v[0], &v[1], (0, 1))
}

/// Unordered off-diagonal pairs `(i, j)`, `i < j`. Small families list pairs
/// in lexicographic order; larger ones sample distinct pairs.
pub fn family_pairs(size: usize, n_pairs: usize, seed: u64) -> Vec<(usize, usize)> {
    if size < 2 || n_pairs == 0 {
        return Vec::new();
    }
    let total = size * (size - 1) / 2;
    if size <= ENUMERATE_PAIRS_UP_TO || n_pairs >= total {
        return (0..size).flat_map(|i| (i + 1..size).map(move |j| (i, j))).take(n_pairs).collect();
    }
    let mut rng = stream_rng(seed, 0);
    let mut picks: Vec<(usize, usize)> = index::sample(&mut rng, total, n_pairs)
        .into_iter()
        .map(|k| {
            // Row i holds size-1-i pairs.
            let mut i = 0;
            let mut k = k;
            while k >= size - 1 - i {
                k -= size - 1 - i;
                i += 1;
            }
            (i, i + 1 + k)
        })
        .collect();
    picks.sort_unstable();
    picks
}

/// Average correlation over a family, diagonal included with weight `1/|C|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvgCorrelation {
    pub value: f64,
    pub std_error: f64,
    pub off_diagonal_mean: f64,
    pub median_abs_rho: f64,
    pub pairs: Vec<CovEstimate>,
}

pub fn avg_correlation(fam: &[HardFunction], dist: &InputDistN, n_pairs: usize, n_mc: usize, seed: u64) -> Result<AvgCorrelation> {
    if fam.is_empty() {
        return Err(invalid("empty family"));
    }
    if fam.len() == 1 {
        return Ok(AvgCorrelation { value: 1.0, std_error: 0.0, off_diagonal_mean: 0.0, median_abs_rho: 0.0, pairs: Vec::new() });
    }
    if n_mc < MIN_MC {
        return Err(invalid(format!("n_mc must be at least {MIN_MC}, got {n_mc}")));
    }
    if n_pairs == 0 {
        return Err(invalid("n_pairs must be at least 1"));
    }
    let values = function_values(fam, dist, n_mc, seed)?;
    let pairs = pair_estimates(&values, &family_pairs(fam.len(), n_pairs, derive_seed(seed, "pairs")))?;
    let k = fam.len() as f64;
    let off = pairs.iter().map(|c| c.rho).sum::<f64>() / pairs.len() as f64;
    let se = pairs.iter().map(|c| c.rho_std_error()).sum::<f64>() / pairs.len() as f64;
    Ok(AvgCorrelation {
        value: 1.0 / k + (1.0 - 1.0 / k) * off,
        std_error: (1.0 - 1.0 / k) * se,
        off_diagonal_mean: off,
        median_abs_rho: median(pairs.iter().map(|c| c.rho.abs()).collect()),
        pairs,
    })
}

fn pair_estimates(values: &[Vec<f64>], pairs: &[(usize, usize)]) -> Result<Vec<CovEstimate>> {
    pairs.par_iter().map(|&(i, j)| covariance_of(&values[i], &values[j], (i, j))).collect()
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorCov {
    /// Mean covariance of `χ_y ∘ f` over the sampled pairs.
    pub cov: f64,
    /// Mean of `χ_y ∘ f` over the family.
    pub mu: f64,
    pub bound_ratio: f64,
    /// Standard error of `cov`, from the per-sample pair-averaged products.
    pub std_error: f64,
    pub pairs: usize,
}

impl IndicatorCov {
    pub fn bound_ratio_std_error(&self, eps: f64) -> f64 {
        let d = eps.max(self.mu);
        self.std_error / (d * d)
    }
}

fn indicator_from_values(values: &[Vec<f64>], y: f64, eps: f64, pairs: &[(usize, usize)]) -> Result<IndicatorCov> {
    let chi = SoftIndicator::new(y, eps)?;
    let ind: Vec<Vec<f64>> = values.par_iter().map(|v| v.iter().map(|&u| chi.eval(u)).collect()).collect();
    let means: Vec<f64> = ind.iter().map(|v| mean(v)).collect();
    let mu = mean(&means);
    let n_mc = values[0].len();
    let nf = n_mc as f64;
    let kp = pairs.len() as f64;
    let (mut sz, mut sz2) = (0.0, 0.0);
    for r in 0..n_mc {
        let z = pairs.iter().map(|&(i, j)| (ind[i][r] - means[i]) * (ind[j][r] - means[j])).sum::<f64>() / kp;
        sz += z;
        sz2 += z * z;
    }
    let mz = sz / nf;
    let cov = sz / (nf - 1.0);
    let sd = ((sz2 - nf * mz * mz) / (nf - 1.0)).max(0.0).sqrt();
    let d = eps.max(mu);
    Ok(IndicatorCov { cov, mu, bound_ratio: cov / (d * d), std_error: sd / nf.sqrt(), pairs: pairs.len() })
}

/// Average pairwise covariance of the soft indicators `χ_y^(ε) ∘ f`.
pub fn indicator_covariance(
    fam: &[HardFunction],
    y: f64,
    eps: f64,
    dist: &InputDistN,
    n_pairs: usize,
    n_mc: usize,
    seed: u64,
) -> Result<IndicatorCov> {
    if fam.len() < 2 {
        return Err(invalid("indicator covariance needs at least two functions"));
    }
    if n_mc < MIN_MC {
        return Err(invalid(format!("n_mc must be at least {MIN_MC}, got {n_mc}")));
    }
    let values = function_values(fam, dist, n_mc, seed)?;
    indicator_from_values(&values, y, eps, &family_pairs(fam.len(), n_pairs.max(1), derive_seed(seed, "pairs")))
}

/// Median of all family values on the shared sample.
fn pooled_median(values: &[Vec<f64>]) -> f64 {
    let mut all: Vec<f64> = values.iter().flatten().copied().collect();
    let k = all.len() / 2;
    let (_, m, _) = all.select_nth_unstable_by(k, f64::total_cmp);
    *m
}

/// Canonical sigmoid family of period `theta` on `n` coordinates.
pub fn canonical_family(n: usize, theta: f64, size: usize, c: f64, input: InputDist1D, seed: u64) -> Result<Vec<HardFunction>> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid(format!("period must be positive, got {theta}")));
    }
    let wave = WaveParams::new(ActivationKind::sigmoid(4.0 / theta)?).build(n / 2, input.std_dev())?;
    build_subset_family(n, size, c, seed)?.sets.into_iter().map(|s| HardFunction::new(wave.clone(), s)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub n_values: Vec<usize>,
    pub theta: f64,
    #[serde(default = "default_family_size")]
    pub family_size: usize,
    #[serde(default = "default_n_pairs")]
    pub n_pairs: usize,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "InputDist1D::gaussian")]
    pub input: InputDist1D,
}

fn default_family_size() -> usize {
    7
}
fn default_n_pairs() -> usize {
    20
}
fn default_n_mc() -> usize {
    200_000
}
fn default_eps() -> f64 {
    0.05
}
fn default_c() -> f64 {
    DEFAULT_C
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            n_values: vec![64, 128, 256],
            theta: 30.0,
            family_size: default_family_size(),
            n_pairs: default_n_pairs(),
            n_mc: default_n_mc(),
            eps: default_eps(),
            c: default_c(),
            input: InputDist1D::gaussian(),
        }
    }
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<()> {
        let mut ns = self.n_values.clone();
        ns.sort_unstable();
        ns.dedup();
        if ns.len() < 2 {
            return Err(invalid("scaling report needs at least two distinct n values"));
        }
        if self.family_size < 2 || self.n_pairs == 0 {
            return Err(invalid("family needs at least two functions and one pair"));
        }
        if self.n_mc < MIN_MC {
            return Err(invalid(format!("n_mc must be at least {MIN_MC}, got {}", self.n_mc)));
        }
        if !(self.eps > 0.0) {
            return Err(invalid("eps must be positive"));
        }
        Ok(())
    }
}

/// One CSV row: a pair at one `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub theta: f64,
    pub s: f64,
    pub pair_id: String,
    pub cov: f64,
    pub rho: f64,
    pub std_err: f64,
    pub mu_y: f64,
    pub bound_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub n: usize,
    pub theta: f64,
    pub s: f64,
    pub m: usize,
    pub median_abs_rho: f64,
    /// Median over pairs of the correlation standard error.
    pub rho_std_error: f64,
    pub y: f64,
    pub mu_y: f64,
    pub indicator_cov: f64,
    pub bound_ratio: f64,
    pub bound_ratio_std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub config: ScalingConfig,
    pub seed: u64,
    pub summaries: Vec<ScalingSummary>,
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `ln median|ρ̂|` against `ln n`.
    pub slope: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("slope fit needs at least two points"));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("slope fit needs distinct x values"));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx)
}

/// Correlation and indicator statistics of the canonical family for each
/// `n`, with the period held fixed.
pub fn scaling_report(cfg: &ScalingConfig, seed: u64) -> Result<ScalingReport> {
    cfg.validate()?;
    let s = 4.0 / cfg.theta;
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    for &n in &cfg.n_values {
        let fam = canonical_family(n, cfg.theta, cfg.family_size, cfg.c, cfg.input, derive_seed(seed, &format!("family/{n}")))?;
        let dist = InputDistN::product(cfg.input, n);
        let values = function_values(&fam, &dist, cfg.n_mc, derive_seed(seed, &format!("sample/{n}")))?;
        let pairs = family_pairs(fam.len(), cfg.n_pairs, derive_seed(seed, &format!("pairs/{n}")));
        let est = pair_estimates(&values, &pairs)?;
        let y = pooled_median(&values);
        let ind = indicator_from_values(&values, y, cfg.eps, &pairs)?;
        for e in &est {
            rows.push(ScalingRow {
                n,
                theta: cfg.theta,
                s,
                pair_id: format!("{}-{}", e.pair.0, e.pair.1),
                cov: e.value,
                rho: e.rho,
                std_err: e.std_error,
                mu_y: ind.mu,
                bound_ratio: ind.bound_ratio,
            });
        }
        summaries.push(ScalingSummary {
            n,
            theta: cfg.theta,
            s,
            m: fam[0].wave.m,
            median_abs_rho: median(est.iter().map(|e| e.rho.abs()).collect()),
            rho_std_error: median(est.iter().map(|e| e.rho_std_error()).collect()),
            y,
            mu_y: ind.mu,
            indicator_cov: ind.cov,
            bound_ratio: ind.bound_ratio,
            bound_ratio_std_error: ind.bound_ratio_std_error(cfg.eps),
        });
    }
    let lx: Vec<f64> = summaries.iter().map(|r| (r.n as f64).ln()).collect();
    let ly: Vec<f64> = summaries.iter().map(|r| r.median_abs_rho.max(f64::MIN_POSITIVE).ln()).collect();
    let slope = fit_slope(&lx, &ly)?;
    Ok(ScalingReport { config: cfg.clone(), seed, summaries, rows, slope })
}
