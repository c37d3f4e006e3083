//! Input distributions, labeled datasets and label statistics.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hardfam::HardFunction;
use crate::seed::stream_rng;

/// One-dimensional logconcave marginal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist1DKind {
    StdGaussian,
    Laplace,
    UniformInterval,
}

/// A one-dimensional marginal, by default calibrated to unit variance.
///
/// Without calibration the Laplace marginal is `exp(−|x|)/2` (variance 2)
/// and the uniform marginal is `U(−1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDist1D {
    pub kind: Dist1DKind,
    #[serde(default = "default_true")]
    pub unit_variance: bool,
}

fn default_true() -> bool {
    true
}

impl InputDist1D {
    pub fn new(kind: Dist1DKind) -> Self {
        InputDist1D { kind, unit_variance: true }
    }

    pub fn gaussian() -> Self {
        Self::new(Dist1DKind::StdGaussian)
    }

    pub fn laplace() -> Self {
        Self::new(Dist1DKind::Laplace)
    }

    pub fn uniform() -> Self {
        Self::new(Dist1DKind::UniformInterval)
    }

    pub fn raw(kind: Dist1DKind) -> Self {
        InputDist1D { kind, unit_variance: false }
    }

    /// Laplace scale `b` or uniform half-width `a`; 1 for the Gaussian.
    fn scale(&self) -> f64 {
        match (self.kind, self.unit_variance) {
            (Dist1DKind::StdGaussian, _) => 1.0,
            (Dist1DKind::Laplace, true) => std::f64::consts::FRAC_1_SQRT_2,
            (Dist1DKind::Laplace, false) => 1.0,
            (Dist1DKind::UniformInterval, true) => 3f64.sqrt(),
            (Dist1DKind::UniformInterval, false) => 1.0,
        }
    }

    pub fn variance(&self) -> f64 {
        let b = self.scale();
        match self.kind {
            Dist1DKind::StdGaussian => 1.0,
            Dist1DKind::Laplace => 2.0 * b * b,
            Dist1DKind::UniformInterval => b * b / 3.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Density at `x`.
    pub fn density(&self, x: f64) -> f64 {
        let b = self.scale();
        match self.kind {
            Dist1DKind::StdGaussian => (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Dist1DKind::Laplace => (-x.abs() / b).exp() / (2.0 * b),
            Dist1DKind::UniformInterval => {
                if x.abs() <= b {
                    0.5 / b
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let b = self.scale();
        match self.kind {
            Dist1DKind::StdGaussian => StandardNormal.sample(rng),
            Dist1DKind::Laplace => {
                let e: f64 = Exp1.sample(rng);
                if rng.gen::<bool>() {
                    b * e
                } else {
                    -b * e
                }
            }
            Dist1DKind::UniformInterval => rng.gen_range(-b..b),
        }
    }
}

/// Distribution over `ℝⁿ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InputDistN {
    /// i.i.d. coordinates.
    Product { marginal: InputDist1D, n: usize },
    /// Uniform on `{x : Σ|x_i| ≤ radius}`. Not a product distribution.
    L1Ball { n: usize, radius: f64 },
}

impl InputDistN {
    pub fn product(marginal: InputDist1D, n: usize) -> Self {
        InputDistN::Product { marginal, n }
    }

    pub fn gaussian(n: usize) -> Self {
        Self::product(InputDist1D::gaussian(), n)
    }

    /// The ball of radius `n`.
    pub fn l1_ball(n: usize) -> Self {
        InputDistN::L1Ball { n, radius: n as f64 }
    }

    pub fn dim(&self) -> usize {
        match *self {
            InputDistN::Product { n, .. } | InputDistN::L1Ball { n, .. } => n,
        }
    }

    /// Standard deviation of a single coordinate.
    pub fn coordinate_std(&self) -> f64 {
        match *self {
            InputDistN::Product { marginal, .. } => marginal.std_dev(),
            InputDistN::L1Ball { n, radius } => {
                let n = n as f64;
                radius * (2.0 / ((n + 1.0) * (n + 2.0))).sqrt()
            }
        }
    }

    /// Fills `out` (length `dim()`) with one draw.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            InputDistN::Product { marginal, .. } => {
                for v in out.iter_mut() {
                    *v = marginal.sample(rng);
                }
            }
            InputDistN::L1Ball { n, radius } => {
                // Signed exponentials normalised by their l1 norm follow the
                // cone measure of the sphere; U^{1/n} fills the ball.
                let mut norm = 0.0;
                for v in out.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    *v = if rng.gen::<bool>() { e } else { -e };
                    norm += e;
                }
                let u: f64 = rng.gen();
                let r = radius * u.powf(1.0 / n as f64) / norm;
                for v in out.iter_mut() {
                    *v *= r;
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            InputDistN::Product { n: 0, .. } => Err(invalid("dimension must be positive")),
            InputDistN::L1Ball { n, radius } if n == 0 || !(radius > 0.0) => {
                Err(invalid("l1 ball needs positive dimension and radius"))
            }
            _ => Ok(()),
        }
    }
}

/// `count × n` row-major sample matrix. Row `i` is drawn from stream `i` of
/// `seed`, so the result does not depend on the thread count.
pub fn sample_input(dist: &InputDistN, count: usize, seed: u64) -> Result<Vec<f64>> {
    dist.validate()?;
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    Ok(sample_rows(dist, 0, count, seed))
}

/// Rows `start..start + len` of the sample that `sample_input` would draw.
pub fn sample_rows(dist: &InputDistN, start: usize, len: usize, seed: u64) -> Vec<f64> {
    let n = dist.dim();
    let mut out = vec![0.0; len * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let mut rng = stream_rng(seed, (start + i) as u64);
        dist.sample_into(&mut rng, row);
    });
    out
}

/// Uniform grid of `levels` points on `[−1, 1]` used to round labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rounding {
    pub levels: usize,
}

impl Rounding {
    pub fn new(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(invalid(format!("rounding grid needs at least 2 levels, got {levels}")));
        }
        Ok(Rounding { levels })
    }

    /// Nearest grid point, ties to the even grid index.
    pub fn round(&self, y: f64) -> f64 {
        let steps = (self.levels - 1) as f64;
        let idx = ((y.clamp(-1.0, 1.0) + 1.0) * 0.5 * steps).round_ties_even();
        -1.0 + 2.0 * idx / steps
    }
}

/// Provenance recorded alongside every dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub dist: InputDistN,
    pub function: HardFunction,
    pub rounding: Option<Rounding>,
}

/// Inputs and labels, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSampleSet {
    pub inputs: Vec<f64>,
    pub labels: Vec<f64>,
    pub meta: DatasetMeta,
}

impl LabeledSampleSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.meta.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.meta.n;
        &self.inputs[i * n..(i + 1) * n]
    }
}

/// Labels a fresh sample from `dist` with `f`, optionally rounding labels.
pub fn make_dataset(
    f: &HardFunction,
    dist: &InputDistN,
    count: usize,
    seed: u64,
    rounding: Option<Rounding>,
) -> Result<LabeledSampleSet> {
    if dist.dim() != f.n {
        return Err(invalid(format!("distribution dimension {} does not match function dimension {}", dist.dim(), f.n)));
    }
    let inputs = sample_input(dist, count, seed)?;
    let labels = label_rows(f, &inputs, rounding);
    Ok(LabeledSampleSet {
        inputs,
        labels,
        meta: DatasetMeta { n: f.n, count, seed, dist: *dist, function: f.clone(), rounding },
    })
}

/// Labels for row-major `inputs`.
pub fn label_rows(f: &HardFunction, inputs: &[f64], rounding: Option<Rounding>) -> Vec<f64> {
    inputs
        .par_chunks(f.n)
        .map(|row| {
            let y = f.eval_unchecked(row);
            match rounding {
                Some(r) => r.round(y),
                None => y,
            }
        })
        .collect()
}

/// Sample mean and unbiased variance of the labels. The variance is the
/// mean squared error of the best constant predictor.
pub fn label_stats(ds: &LabeledSampleSet) -> Result<(f64, f64)> {
    mean_var(&ds.labels)
}

pub(crate) fn mean_var(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(invalid("statistics of an empty set"));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((mean, ss / (n - 1.0)))
}

/// Empirical distribution of labels, used as the decoy oracle's reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    sorted: Vec<f64>,
}

impl Marginal {
    pub fn from_samples(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("empty marginal"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("marginal samples must be finite"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Marginal { sorted: values })
    }

    /// Label marginal of `f` under `dist`, from `count` draws.
    pub fn of_function(f: &HardFunction, dist: &InputDistN, count: usize, seed: u64) -> Result<Self> {
        let ds = make_dataset(f, dist, count, seed, None)?;
        Self::from_samples(ds.labels)
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sorted[rng.gen_range(0..self.sorted.len())]
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= y) as f64 / self.sorted.len() as f64
    }

    pub fn median(&self) -> f64 {
        let n = self.sorted.len();
        if n % 2 == 1 {
            self.sorted[n / 2]
        } else {
            0.5 * (self.sorted[n / 2 - 1] + self.sorted[n / 2])
        }
    }

    /// Two-sample Kolmogorov distance `sup_y |F(y) − G(y)|`.
    pub fn ks_distance(&self, other: &Marginal) -> f64 {
        ks_distance(&self.sorted, &other.sorted)
    }
}

/// Kolmogorov distance between two sorted samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut worst: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let y = a[i].min(b[j]);
        while i < a.len() && a[i] <= y {
            i += 1;
        }
        while j < b.len() && b[j] <= y {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let k = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n / (v * v) - 3.0;
        (m, v, k)
    }

    #[test]
    fn gaussian_moments() {
        let xs = sample_input(&InputDistN::gaussian(1), 1_000_000, 11).unwrap();
        let (m, v, _) = moments(&xs);
        assert!(m.abs() <= 0.005, "{m}");
        assert!((0.99..=1.01).contains(&v), "{v}");
    }

    #[test]
    fn unit_variance_calibration() {
        for d in [InputDist1D::laplace(), InputDist1D::uniform(), InputDist1D::gaussian()] {
            assert!((d.variance() - 1.0).abs() < 1e-12);
            let xs = sample_input(&InputDistN::product(d, 1), 1_000_000, 5).unwrap();
            let (_, v, _) = moments(&xs);
            assert!((v - 1.0).abs() < 0.01, "{d:?}: {v}");
        }
        assert!((InputDist1D::raw(Dist1DKind::Laplace).variance() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn laplace_excess_kurtosis_is_three() {
        let xs = sample_input(&InputDistN::product(InputDist1D::laplace(), 1), 1_000_000, 3).unwrap();
        let (_, _, k) = moments(&xs);
        assert!((k - 3.0).abs() < 0.2, "{k}");
    }

    #[test]
    fn l1_ball_coordinate_std() {
        let d = InputDistN::l1_ball(6);
        let x = sample_input(&d, 200_000, 4).unwrap();
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        // About four standard errors of the estimate.
        assert!((var.sqrt() / d.coordinate_std() - 1.0).abs() <= 0.01, "{} vs {}", var.sqrt(), d.coordinate_std());
    }

    #[test]
    fn l1_ball_volume_fraction() {
        let dist = InputDistN::L1Ball { n: 2, radius: 2.0 };
        let xs = sample_input(&dist, 100_000, 9).unwrap();
        let inner = xs.chunks(2).filter(|r| r[0].abs() + r[1].abs() <= 1.0).count() as f64 / 1e5;
        assert!((inner - 0.25).abs() < 0.01, "{inner}");
        assert!(xs.chunks(2).all(|r| r[0].abs() + r[1].abs() <= 2.0));
    }

    #[test]
    fn product_coordinates_uncorrelated() {
        let xs = sample_input(&InputDistN::product(InputDist1D::laplace(), 2), 1_000_000, 21).unwrap();
        let c = xs.chunks(2).map(|r| r[0] * r[1]).sum::<f64>() / 1e6;
        assert!(c.abs() <= 0.01, "{c}");
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let d = InputDistN::l1_ball(5);
        assert_eq!(sample_input(&d, 100, 4).unwrap(), sample_input(&d, 100, 4).unwrap());
        assert_ne!(sample_input(&d, 100, 4).unwrap(), sample_input(&d, 100, 5).unwrap());
    }

    #[test]
    fn rounding_to_grid() {
        let r = Rounding::new(3).unwrap();
        assert_eq!(r.round(0.4), 0.0);
        assert_eq!(r.round(0.6), 1.0);
        // Ties go to the even grid index.
        assert_eq!(r.round(-0.5), -1.0);
        assert_eq!(r.round(0.5), 1.0);
        assert_eq!(Rounding::new(5).unwrap().round(0.25), 0.0);
    }

    #[test]
    fn label_stats_edge_cases() {
        let (m, v) = mean_var(&[0.3; 10]).unwrap();
        assert!((m - 0.3).abs() < 1e-15 && v.abs() < 1e-30);
        let two: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (m, v) = mean_var(&two).unwrap();
        assert!(m.abs() < 1e-15);
        assert!((v - 1000.0 / 999.0).abs() < 1e-12);
        assert!(mean_var(&[]).is_err());
    }

    #[test]
    fn ks_distance_basics() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_distance(&a, &a), 0.0);
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 1000.0).collect();
        assert_eq!(ks_distance(&a, &b), 1.0);
    }
}
