//! Dense multilayer perceptron with hand-written backpropagation, MSE loss
//! and SGD with momentum.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activation::logistic;
use crate::error::{invalid, Error, Result};
use crate::seed::stream_rng;

/// Training loss above which a run is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;
const FD_STEP: f64 = 1e-5;
const GRAD_CHECK_PROBES: usize = 200;
/// Denominator floor of the relative gradient error.
const GRAD_CHECK_FLOOR: f64 = 1e-7;
/// Minimum `|pre-activation|` for ReLU gradient-check inputs.
const KINK_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    Relu,
    /// Logistic sigmoid with sharpness 1.
    Sigmoid,
}

impl HiddenActivation {
    #[inline]
    fn eval(self, z: f64) -> f64 {
        match self {
            HiddenActivation::Relu => z.max(0.0),
            HiddenActivation::Sigmoid => logistic(z),
        }
    }

    /// Derivative expressed through the pre-activation `z`; the ReLU
    /// subgradient at 0 is 0.
    #[inline]
    fn deriv(self, z: f64) -> f64 {
        match self {
            HiddenActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            HiddenActivation::Sigmoid => {
                let p = logistic(z);
                p * (1.0 - p)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HiddenActivation::Relu => "relu",
            HiddenActivation::Sigmoid => "sigmoid",
        }
    }
}

impl std::str::FromStr for HiddenActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(HiddenActivation::Relu),
            "sigmoid" => Ok(HiddenActivation::Sigmoid),
            other => Err(invalid(format!("unknown hidden activation '{other}'"))),
        }
    }
}

/// Layer sizes `[n, h₁, …, h_L, 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
}

impl MlpSpec {
    pub fn new(n: usize, hidden: &[usize], act: HiddenActivation) -> Result<Self> {
        let mut layer_sizes = vec![n];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(1);
        let spec = MlpSpec { layer_sizes, hidden_activation: act };
        spec.validate()?;
        Ok(spec)
    }

    /// `depth` hidden layers of equal `width`.
    pub fn uniform(n: usize, depth: usize, width: usize, act: HiddenActivation) -> Result<Self> {
        Self::new(n, &vec![width; depth], act)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 3 {
            return Err(invalid("network needs at least one hidden layer"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(invalid("layer sizes must be positive"));
        }
        if *self.layer_sizes.last().expect("nonempty") != 1 {
            return Err(invalid("output layer must have width 1"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(weight offset, bias offset, fan_in, fan_out)` of layer `l`.
    fn layer(&self, l: usize) -> (usize, usize, usize, usize) {
        let off: usize = self.layer_sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        (off, off + i * o, i, o)
    }
}

/// A network with its parameters and the affine map applied to its raw
/// output (`prediction = target_scale · out + target_mean`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
}

/// Per-batch buffers reused across steps.
#[derive(Default)]
pub struct Workspace {
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

/// `c (m×n) = alpha · a (m×k, strides rsa/csa) · b (k×n, strides rsb/csb) + beta · c`, `c` row-major.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, beta: f64, c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the callers pass slices whose extents cover the strided
    // m×k, k×n and m×n views.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Fan-in scaled Gaussian weights and zero biases.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Result<Mlp> {
    spec.validate()?;
    let mut params = vec![0.0; spec.param_count()];
    for l in 0..spec.layers() {
        let (w_off, _, fan_in, fan_out) = spec.layer(l);
        let gain = match (spec.hidden_activation, l + 1 == spec.layers()) {
            (HiddenActivation::Relu, false) => 2.0,
            _ => 1.0,
        };
        let sd = (gain / fan_in as f64).sqrt();
        let mut rng = stream_rng(seed, l as u64);
        for w in &mut params[w_off..w_off + fan_in * fan_out] {
            let e: f64 = StandardNormal.sample(&mut rng);
            *w = sd * e;
        }
    }
    Ok(Mlp { spec: spec.clone(), params, target_mean: 0.0, target_scale: 1.0 })
}

impl Mlp {
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_batch(&self, x: &[f64], rows: usize) -> Result<()> {
        if x.len() != rows * self.spec.input_dim() {
            return Err(invalid(format!(
                "batch of {rows} rows needs {} inputs, got {}",
                rows * self.spec.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Raw network outputs for `rows` examples, written into `ws`.
    fn forward_raw(&self, x: &[f64], rows: usize, ws: &mut Workspace) {
        let layers = self.spec.layers();
        ws.z.resize_with(layers, Vec::new);
        ws.a.resize_with(layers, Vec::new);
        for l in 0..layers {
            let (w_off, b_off, fan_in, fan_out) = self.spec.layer(l);
            let mut z = std::mem::take(&mut ws.z[l]);
            z.resize(rows * fan_out, 0.0);
            {
                let input: &[f64] = if l == 0 { x } else { &ws.a[l - 1] };
                let w = &self.params[w_off..w_off + fan_in * fan_out];
                gemm(rows, fan_in, fan_out, input, fan_in, 1, w, 1, fan_in, 0.0, &mut z);
            }
            let b = &self.params[b_off..b_off + fan_out];
            for row in z.chunks_mut(fan_out) {
                for (v, bj) in row.iter_mut().zip(b) {
                    *v += bj;
                }
            }
            let mut a = std::mem::take(&mut ws.a[l]);
            a.clear();
            if l + 1 < layers {
                let act = self.spec.hidden_activation;
                a.extend(z.iter().map(|&v| act.eval(v)));
            } else {
                a.extend_from_slice(&z);
            }
            ws.z[l] = z;
            ws.a[l] = a;
        }
    }

    /// Predictions for `rows` examples in row-major `x`.
    pub fn predict(&self, x: &[f64], rows: usize) -> Result<Vec<f64>> {
        self.check_batch(x, rows)?;
        let mut ws = Workspace::default();
        let mut out = Vec::with_capacity(rows);
        let n = self.spec.input_dim();
        for chunk in x.chunks(1024 * n) {
            let r = chunk.len() / n;
            self.forward_raw(chunk, r, &mut ws);
            out.extend(ws.a[self.spec.layers() - 1].iter().map(|v| self.target_scale * v + self.target_mean));
        }
        Ok(out)
    }

    /// Mean squared error of predictions against `y`.
    pub fn mse(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let pred = self.predict(x, y.len())?;
        Ok(pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len().max(1) as f64)
    }

    /// Loss `(1/B) Σ (out − t)²` in raw output units and its gradient, with
    /// targets `t` already mapped through the inverse output transform.
    fn loss_grad_raw(&self, x: &[f64], t: &[f64], ws: &mut Workspace, grad: &mut [f64]) -> f64 {
        let rows = t.len();
        self.forward_raw(x, rows, ws);
        let layers = self.spec.layers();
        let out = &ws.a[layers - 1];
        let inv = 1.0 / rows as f64;
        let mut loss = 0.0;
        ws.delta.clear();
        for (o, ti) in out.iter().zip(t) {
            let r = o - ti;
            loss += r * r;
            ws.delta.push(2.0 * r * inv);
        }
        self.backward_from_delta(x, rows, ws, grad);
        loss * inv
    }

    /// Propagates `ws.delta` (gradient w.r.t. the output pre-activations)
    /// through the network, overwriting `grad`.
    fn backward_from_delta(&self, x: &[f64], rows: usize, ws: &mut Workspace, grad: &mut [f64]) {
        let act = self.spec.hidden_activation;
        for l in (0..self.spec.layers()).rev() {
            let (w_off, b_off, fan_in, fan_out) = self.spec.layer(l);
            let input: &[f64] = if l == 0 { x } else { &ws.a[l - 1] };
            // dW = δᵀ · input
            gemm(fan_out, rows, fan_in, &ws.delta, 1, fan_out, input, fan_in, 1, 0.0, &mut grad[w_off..b_off]);
            let gb = &mut grad[b_off..b_off + fan_out];
            gb.iter_mut().for_each(|g| *g = 0.0);
            for row in ws.delta.chunks(fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            // δ_prev = (δ · W) ⊙ σ'(z_prev)
            ws.delta_prev.resize(rows * fan_in, 0.0);
            let w = &self.params[w_off..w_off + fan_in * fan_out];
            gemm(rows, fan_out, fan_in, &ws.delta, fan_out, 1, w, fan_in, 1, 0.0, &mut ws.delta_prev);
            for (d, &z) in ws.delta_prev.iter_mut().zip(&ws.z[l - 1]) {
                *d *= act.deriv(z);
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }

    /// Exact gradient of the batch MSE `(1/B) Σ (prediction − y)²` with
    /// respect to the parameters.
    pub fn backward(&self, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_batch(x, y.len())?;
        if y.is_empty() {
            return Err(invalid("empty batch"));
        }
        let (t, s2) = self.raw_targets(y);
        let mut grad = vec![0.0; self.param_count()];
        let mut ws = Workspace::default();
        let loss = self.loss_grad_raw(x, &t, &mut ws, &mut grad);
        grad.iter_mut().for_each(|g| *g *= s2);
        Ok((loss * s2, grad))
    }

    /// Targets in raw output units and the factor `target_scale²` relating
    /// raw and prediction-space losses.
    fn raw_targets(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let inv = 1.0 / self.target_scale;
        (y.iter().map(|v| (v - self.target_mean) * inv).collect(), self.target_scale * self.target_scale)
    }

    /// Per-example gradients of `(prediction − y)²`, row-major `rows × P`.
    pub fn per_example_grads(&self, x: &[f64], y: &[f64], ws: &mut Workspace, out: &mut Vec<f64>) -> Result<()> {
        self.check_batch(x, y.len())?;
        let p = self.param_count();
        let n = self.spec.input_dim();
        out.resize(y.len() * p, 0.0);
        let s2 = self.target_scale * self.target_scale;
        let inv = 1.0 / self.target_scale;
        for (i, (xi, g)) in x.chunks(n).zip(out.chunks_mut(p)).enumerate() {
            let t = [(y[i] - self.target_mean) * inv];
            self.loss_grad_raw(xi, &t, ws, g);
            g.iter_mut().for_each(|v| *v *= s2);
        }
        Ok(())
    }
}

/// Optimiser settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Stop after this many epochs without a lower training loss; 0 disables.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub weight_decay: f64,
    /// Fit standardized targets and map predictions back.
    #[serde(default = "default_true")]
    pub standardize_targets: bool,
    pub seed: u64,
}

fn default_momentum() -> f64 {
    0.9
}
fn default_epochs() -> usize {
    30
}
fn default_patience() -> usize {
    5
}
fn default_true() -> bool {
    true
}

impl TrainConfig {
    pub fn new(lr: f64, batch_size: usize, seed: u64) -> Self {
        TrainConfig {
            lr,
            momentum: default_momentum(),
            batch_size,
            epochs: default_epochs(),
            patience: default_patience(),
            weight_decay: 0.0,
            standardize_targets: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate must be nonnegative, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(invalid("weight decay must be nonnegative"));
        }
        Ok(())
    }
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_train_mse: Vec<f64>,
    pub final_train_mse: f64,
    pub test_mse: f64,
    /// Variance of the test labels: the error of the best constant.
    pub baseline_mse: f64,
    pub initial_test_mse: f64,
    pub diverged: bool,
    pub wall_time_s: f64,
    pub config: TrainConfig,
}

impl TrainReport {
    pub fn ratio(&self) -> f64 {
        self.test_mse / self.baseline_mse
    }
}

/// A row-major input matrix with its labels.
#[derive(Clone, Copy, Debug)]
pub struct DataView<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
}

impl<'a> DataView<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64]) -> Self {
        DataView { x, y }
    }

    pub fn from_set(ds: &'a crate::dist::LabeledSampleSet) -> Self {
        DataView { x: &ds.inputs, y: &ds.labels }
    }
}

/// Mini-batch SGD with classic momentum `v ← μv − lr·g, w ← w + v`.
pub fn sgd_train(model: &mut Mlp, train: DataView, test: DataView, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let n = model.spec.input_dim();
    let rows = train.y.len();
    model.check_batch(train.x, rows)?;
    model.check_batch(test.x, test.y.len())?;
    if rows < cfg.batch_size {
        return Err(invalid(format!("training set of {rows} rows is smaller than one batch of {}", cfg.batch_size)));
    }
    if test.y.len() < 2 {
        return Err(invalid("test set needs at least two rows"));
    }
    let start = Instant::now();
    if cfg.standardize_targets {
        let (mean, var) = crate::dist::mean_var(train.y)?;
        model.target_mean = mean;
        model.target_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let (_, baseline_mse) = crate::dist::mean_var(test.y)?;
    let initial_test_mse = model.mse(test.x, test.y)?;
    let (targets, s2) = model.raw_targets(train.y);

    let p = model.param_count();
    let mut grad = vec![0.0; p];
    let mut vel = vec![0.0; p];
    let mut ws = Workspace::default();
    let mut order: Vec<usize> = (0..rows).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size * n);
    let mut by = Vec::with_capacity(cfg.batch_size);
    let mut epoch_train_mse = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut diverged = false;

    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &i in batch {
                bx.extend_from_slice(&train.x[i * n..(i + 1) * n]);
                by.push(targets[i]);
            }
            let loss = model.loss_grad_raw(&bx, &by, &mut ws, &mut grad);
            total += loss * batch.len() as f64;
            if !loss.is_finite() || loss * s2 > DIVERGENCE_LOSS {
                diverged = true;
                break;
            }
            for ((w, v), g) in model.params.iter_mut().zip(vel.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - cfg.lr * (g + cfg.weight_decay * *w);
                *w += *v;
            }
        }
        if diverged {
            break;
        }
        let epoch_mse = total / rows as f64 * s2;
        epoch_train_mse.push(epoch_mse);
        if epoch_mse < best {
            best = epoch_mse;
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                break;
            }
        }
    }

    let final_train_mse = if diverged { f64::INFINITY } else { model.mse(train.x, train.y)? };
    let test_mse = if diverged { f64::INFINITY } else { model.mse(test.x, test.y)? };
    Ok(TrainReport {
        epoch_train_mse,
        final_train_mse,
        test_mse,
        baseline_mse,
        initial_test_mse,
        diverged,
        wall_time_s: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    })
}

/// Largest relative error between backpropagated and central-difference
/// gradients at 200 random parameter coordinates. ReLU networks are probed
/// on inputs whose pre-activations all stay away from the kink.
pub fn grad_check(spec: &MlpSpec, seed: u64) -> Result<f64> {
    let mut model = init_params(spec, seed)?;
    let n = spec.input_dim();
    let rows = 8;
    let mut rng = stream_rng(seed, u64::MAX);
    // Nonzero biases so that the check also exercises them.
    for l in 0..spec.layers() {
        let (_, b_off, _, fan_out) = spec.layer(l);
        for b in &mut model.params[b_off..b_off + fan_out] {
            let e: f64 = StandardNormal.sample(&mut rng);
            *b = 0.1 * e;
        }
    }
    let mut x = Vec::with_capacity(rows * n);
    let mut ws = Workspace::default();
    let mut row = vec![0.0; n];
    let mut attempts = 0;
    while x.len() < rows * n {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::NumericFailure("no kink-free probe inputs found".into()));
        }
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        if spec.hidden_activation == HiddenActivation::Relu {
            model.forward_raw(&row, 1, &mut ws);
            let hidden = &ws.z[..spec.layers() - 1];
            if hidden.iter().flatten().any(|z| z.abs() < KINK_MARGIN) {
                continue;
            }
        }
        x.extend_from_slice(&row);
    }
    let y: Vec<f64> = (0..rows)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            e
        })
        .collect();
    let (_, grad) = model.backward(&x, &y)?;
    let loss_at = |m: &Mlp| -> Result<f64> {
        let pred = m.predict(&x, rows)?;
        Ok(pred.iter().zip(&y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / rows as f64)
    };
    let p = model.param_count();
    let mut worst: f64 = 0.0;
    for _ in 0..GRAD_CHECK_PROBES.min(p) {
        let j = rand::Rng::gen_range(&mut rng, 0..p);
        let orig = model.params[j];
        model.params[j] = orig + FD_STEP;
        let up = loss_at(&model)?;
        model.params[j] = orig - FD_STEP;
        let down = loss_at(&model)?;
        model.params[j] = orig;
        let fd = (up - down) / (2.0 * FD_STEP);
        let err = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}
