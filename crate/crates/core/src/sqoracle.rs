//! VSTAT oracles, soft indicators and a learner that sees data only through
//! statistical queries.

use std::fmt;
use std::io::Write;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::dist::{label_rows, mean_var, sample_rows, InputDistN, Marginal};
use crate::error::{invalid, Error, Result};
use crate::hardfam::HardFunction;
use crate::mlp::{DataView, Mlp, Workspace};
use crate::seed::{chunks, derive_seed, stream_rng};

/// Default number of transcript entries kept in memory.
pub const DEFAULT_TRANSCRIPT_LIMIT: usize = 100_000;
/// Fresh rows used to report the training error of an SQ-trained model.
const SQ_TRAIN_EVAL_ROWS: usize = 2000;

/// VSTAT(t) tolerance `max{1/t, √(p(1−p)/t)}`.
pub fn tolerance(p: f64, t: usize) -> f64 {
    let t = t as f64;
    let p = p.clamp(0.0, 1.0);
    (1.0 / t).max((p * (1.0 - p) / t).sqrt())
}

/// A vector of `[0, 1]`-valued queries evaluated together on a batch of
/// labeled rows. Each coordinate counts as one query.
pub trait BatchQuery: Sync {
    fn dim(&self) -> usize;
    /// Writes `rows × dim()` values for row-major inputs `x` and labels `y`.
    fn eval_rows(&self, x: &[f64], y: &[f64], out: &mut Vec<f64>) -> Result<()>;
}

pub type QueryFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;

/// A scalar query `q(x, y)` with its Lipschitz constant in `y`.
#[derive(Clone)]
pub struct QuerySpec {
    pub name: String,
    pub evaluator: Arc<QueryFn>,
    pub lipschitz_y: f64,
}

impl fmt::Debug for QuerySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuerySpec").field("name", &self.name).field("lipschitz_y", &self.lipschitz_y).finish()
    }
}

impl QuerySpec {
    pub fn new(name: impl Into<String>, lipschitz_y: f64, f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        QuerySpec { name: name.into(), evaluator: Arc::new(f), lipschitz_y }
    }

    pub fn eval(&self, x: &[f64], y: f64) -> f64 {
        (self.evaluator)(x, y)
    }
}

/// A scalar query paired with the input dimension it expects.
struct Scalar<'a> {
    q: &'a QuerySpec,
    n: usize,
}

impl BatchQuery for Scalar<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn eval_rows(&self, x: &[f64], y: &[f64], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        out.extend(x.chunks(self.n).zip(y).map(|(r, &v)| self.q.eval(r, v)));
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    /// Mean over `t` fresh samples.
    Empirical,
    /// The label-independent expectation, clamped into the tolerance band.
    Decoy,
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMode::Empirical => "empirical",
            OracleMode::Decoy => "decoy",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub t: usize,
    pub mode: OracleMode,
    #[serde(default)]
    pub query_budget: Option<u64>,
    #[serde(default = "default_transcript_limit")]
    pub transcript_limit: usize,
}

fn default_transcript_limit() -> usize {
    DEFAULT_TRANSCRIPT_LIMIT
}

impl OracleConfig {
    pub fn new(t: usize, mode: OracleMode) -> Self {
        OracleConfig { t, mode, query_budget: None, transcript_limit: DEFAULT_TRANSCRIPT_LIMIT }
    }
}

/// One oracle answer, as logged in the transcript.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub query_id: u64,
    pub mode: OracleMode,
    pub t: usize,
    pub p_est: f64,
    pub v: f64,
    pub tolerance: f64,
}

#[derive(Default)]
struct OracleState {
    used: u64,
    violations: u64,
    transcript: Vec<TranscriptEntry>,
}

/// A VSTAT(t) oracle for labeled examples `(x, f(x))`, `x ~ dist`.
pub struct VstatOracle {
    config: OracleConfig,
    truth: HardFunction,
    dist: InputDistN,
    reference: Option<Marginal>,
    state: Mutex<OracleState>,
}

impl VstatOracle {
    /// The decoy reference defaults to the empirical label marginal of
    /// `truth` from `100·t` draws.
    pub fn new(config: OracleConfig, truth: HardFunction, dist: InputDistN, seed: u64) -> Result<Self> {
        if config.t == 0 {
            return Err(invalid("VSTAT sample size t must be at least 1"));
        }
        if dist.dim() != truth.n {
            return Err(invalid("distribution dimension does not match the target function"));
        }
        let reference = match config.mode {
            OracleMode::Decoy => Some(Marginal::of_function(&truth, &dist, (100 * config.t).max(10_000), derive_seed(seed, "decoy-reference"))?),
            OracleMode::Empirical => None,
        };
        Ok(VstatOracle { config, truth, dist, reference, state: Mutex::new(OracleState::default()) })
    }

    /// Replaces the decoy reference marginal.
    pub fn with_reference(mut self, reference: Marginal) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn reference(&self) -> Option<&Marginal> {
        self.reference.as_ref()
    }

    pub fn queries_used(&self) -> u64 {
        self.state.lock().expect("oracle state poisoned").used
    }

    /// Query values outside `[0, 1]` that were clamped.
    pub fn range_violations(&self) -> u64 {
        self.state.lock().expect("oracle state poisoned").violations
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.state.lock().expect("oracle state poisoned").transcript.clone()
    }

    /// Writes the transcript as JSON lines.
    pub fn write_transcript(&self, w: &mut impl Write) -> Result<()> {
        for e in self.state.lock().expect("oracle state poisoned").transcript.iter() {
            crate::io::append_jsonl(w, e)?;
        }
        Ok(())
    }

    /// Reserves `k` query ids, or fails when the budget would be exceeded.
    fn reserve(&self, k: usize) -> Result<u64> {
        let mut st = self.state.lock().expect("oracle state poisoned");
        if let Some(b) = self.config.query_budget {
            if st.used + k as u64 > b {
                return Err(Error::BudgetExhausted { used: st.used });
            }
        }
        let first = st.used;
        st.used += k as u64;
        Ok(first)
    }

    /// Fresh labeled rows drawn from the truth distribution.
    fn labeled(&self, count: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let x = sample_rows(&self.dist, 0, count, seed);
        let y = label_rows(&self.truth, &x, None);
        (x, y)
    }

    /// Column means of `q` over the rows, clamping values into `[0, 1]`.
    fn column_means(&self, q: &dyn BatchQuery, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let d = q.dim();
        let n = self.truth.n;
        let mut sums = vec![0.0; d];
        let mut buf = Vec::new();
        let mut violations = 0u64;
        for (_, range) in chunks(y.len()) {
            q.eval_rows(&x[range.start * n..range.end * n], &y[range.clone()], &mut buf)?;
            for row in buf.chunks(d) {
                for (s, &v) in sums.iter_mut().zip(row) {
                    let c = if v.is_nan() { 0.5 } else { v.clamp(0.0, 1.0) };
                    if c != v {
                        violations += 1;
                    }
                    *s += c;
                }
            }
        }
        if violations > 0 {
            self.state.lock().expect("oracle state poisoned").violations += violations;
        }
        let inv = 1.0 / y.len() as f64;
        Ok(sums.into_iter().map(|s| s * inv).collect())
    }

    /// Answers every coordinate of `q` as a separate VSTAT query. The
    /// coordinates share one sample; each answer is valid on its own.
    pub fn answer_batch(&self, q: &dyn BatchQuery, seed: u64) -> Result<Vec<TranscriptEntry>> {
        let d = q.dim();
        let t = self.config.t;
        let first = self.reserve(d)?;
        let answers: Vec<(f64, f64, f64)> = match self.config.mode {
            OracleMode::Empirical => {
                let (x, y) = self.labeled(t, seed);
                self.column_means(q, &x, &y)?.into_iter().map(|v| (v, v, tolerance(v, t))).collect()
            }
            OracleMode::Decoy => {
                let reference = self.reference.as_ref().ok_or_else(|| invalid("decoy oracle has no reference marginal"))?;
                let big = 10 * t;
                let (x, y) = self.labeled(big, seed);
                let p = self.column_means(q, &x, &y)?;
                let mut rng = stream_rng(derive_seed(seed, "decoy-labels"), 0);
                let y_indep: Vec<f64> = (0..big).map(|_| reference.sample(&mut rng)).collect();
                let v_star = self.column_means(q, &x, &y_indep)?;
                let mut out = Vec::with_capacity(d);
                for (&pj, &vj) in p.iter().zip(&v_star) {
                    let tol = tolerance(pj, t);
                    let v = vj.clamp(pj - tol, pj + tol);
                    if !((v - pj).abs() <= tol) {
                        return Err(Error::NumericFailure(format!("decoy answer {v} left the band around {pj}")));
                    }
                    out.push((pj, v, tol));
                }
                out
            }
        };
        let entries: Vec<TranscriptEntry> = answers
            .into_iter()
            .enumerate()
            .map(|(j, (p_est, v, tolerance))| TranscriptEntry {
                query_id: first + j as u64,
                mode: self.config.mode,
                t,
                p_est,
                v,
                tolerance,
            })
            .collect();
        let mut st = self.state.lock().expect("oracle state poisoned");
        let room = self.config.transcript_limit.saturating_sub(st.transcript.len());
        st.transcript.extend(entries.iter().take(room).copied());
        Ok(entries)
    }

    /// Answers a single scalar query.
    pub fn answer(&self, q: &QuerySpec, seed: u64) -> Result<TranscriptEntry> {
        let e = self.answer_batch(&Scalar { q, n: self.truth.n }, seed)?;
        Ok(e[0])
    }
}

/// `χ(x) = max{0, 1/ε − |x − y|/ε²}`: a triangle of unit mass on `(y − ε, y + ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftIndicator {
    pub y: f64,
    pub eps: f64,
}

impl SoftIndicator {
    pub fn new(y: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) || !y.is_finite() {
            return Err(invalid(format!("soft indicator needs finite centre and positive width, got y={y}, eps={eps}")));
        }
        Ok(SoftIndicator { y, eps })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (1.0 / self.eps - (x - self.y).abs() / (self.eps * self.eps)).max(0.0)
    }

    pub fn lipschitz(&self) -> f64 {
        1.0 / (self.eps * self.eps)
    }
}

/// Measured gap between a query's expectation and its soft-indicator
/// decomposition, with the `(5/3)λε` bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionDefect {
    pub defect: f64,
    pub bound: f64,
    pub std_error: f64,
}

/// Estimates `|E q(x, f(x)) − ∫ E[q(x, y) χ_y(f(x))] dy|` with the `y`
/// integral taken on a grid of pitch `ε/8`.
pub fn indicator_decomposition_defect(
    q: &QuerySpec,
    f: &HardFunction,
    dist: &InputDistN,
    eps: f64,
    n_mc: usize,
    seed: u64,
) -> Result<DecompositionDefect> {
    if !q.lipschitz_y.is_finite() || q.lipschitz_y < 0.0 {
        return Err(invalid("query needs a finite Lipschitz constant in y"));
    }
    if !(eps > 0.0) || n_mc < 2 {
        return Err(invalid("eps must be positive and n_mc at least 2"));
    }
    let h = eps / 8.0;
    let n = f.n;
    let parts: Vec<(f64, f64)> = {
        use rayon::prelude::*;
        chunks(n_mc)
            .into_par_iter()
            .map(|(_, range)| {
                let x = sample_rows(dist, range.start, range.len(), seed);
                let (mut s, mut s2) = (0.0, 0.0);
                for row in x.chunks(n) {
                    let y0 = f.eval_unchecked(row);
                    // χ_y(y0) as a function of y is the same triangle centred at y0.
                    let chi = SoftIndicator { y: y0, eps };
                    let lo = ((y0 - eps) / h).floor() as i64;
                    let hi = ((y0 + eps) / h).ceil() as i64;
                    let mut integral = 0.0;
                    for j in lo..=hi {
                        let yj = j as f64 * h;
                        let w = chi.eval(yj);
                        if w > 0.0 {
                            integral += q.eval(row, yj) * w * h;
                        }
                    }
                    let d = q.eval(row, y0) - integral;
                    s += d;
                    s2 += d * d;
                }
                (s, s2)
            })
            .collect()
    };
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let nf = n_mc as f64;
    let mean = s / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(DecompositionDefect { defect: mean.abs(), bound: 5.0 / 3.0 * q.lipschitz_y * eps, std_error: (var / nf).sqrt() })
}

/// Per-example gradient coordinates, clipped to `[−B, B]` and mapped to `[0, 1]`.
struct GradientQuery<'a> {
    model: &'a Mlp,
    bound: f64,
}

impl BatchQuery for GradientQuery<'_> {
    fn dim(&self) -> usize {
        self.model.param_count()
    }

    fn eval_rows(&self, x: &[f64], y: &[f64], out: &mut Vec<f64>) -> Result<()> {
        let mut ws = Workspace::default();
        self.model.per_example_grads(x, y, &mut ws, out)?;
        let b = self.bound;
        for g in out.iter_mut() {
            *g = (g.clamp(-b, b) + b) / (2.0 * b);
        }
        Ok(())
    }
}

/// Outcome of SQ-mediated training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqTrainReport {
    pub mode: OracleMode,
    pub steps_requested: usize,
    pub steps_run: usize,
    pub queries: u64,
    pub truncated: bool,
    pub train_mse: f64,
    pub test_mse: f64,
    pub initial_test_mse: f64,
    pub baseline_mse: f64,
    pub range_violations: u64,
}

impl SqTrainReport {
    pub fn ratio(&self) -> f64 {
        self.test_mse / self.baseline_mse
    }
}

/// Gradient descent where every gradient coordinate is fetched as its own
/// VSTAT query of `(clip(g_j, −B, B) + B)/(2B)`.
pub fn sq_sgd_train(
    model: &mut Mlp,
    oracle: &VstatOracle,
    grad_bound: f64,
    steps: usize,
    lr: f64,
    seed: u64,
    test: DataView,
) -> Result<SqTrainReport> {
    if !(grad_bound > 0.0 && grad_bound.is_finite()) {
        return Err(invalid(format!("gradient bound must be positive, got {grad_bound}")));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(invalid(format!("learning rate must be nonnegative, got {lr}")));
    }
    if model.spec.input_dim() != oracle.truth.n {
        return Err(invalid("model input dimension does not match the oracle"));
    }
    let (_, baseline_mse) = mean_var(test.y)?;
    let initial_test_mse = model.mse(test.x, test.y)?;
    let used_before = oracle.queries_used();
    let mut steps_run = 0;
    let mut truncated = false;
    for step in 0..steps {
        let answers = {
            let q = GradientQuery { model, bound: grad_bound };
            match oracle.answer_batch(&q, derive_seed(seed, &format!("sq-step/{step}"))) {
                Ok(a) => a,
                Err(Error::BudgetExhausted { .. }) => {
                    truncated = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        };
        for (w, a) in model.params.iter_mut().zip(&answers) {
            let g = 2.0 * grad_bound * a.v - grad_bound;
            *w -= lr * g;
        }
        steps_run += 1;
    }
    let (tx, ty) = oracle.labeled(SQ_TRAIN_EVAL_ROWS, derive_seed(seed, "sq-train-eval"));
    Ok(SqTrainReport {
        mode: oracle.config.mode,
        steps_requested: steps,
        steps_run,
        queries: oracle.queries_used() - used_before,
        truncated,
        train_mse: model.mse(&tx, &ty)?,
        test_mse: model.mse(test.x, test.y)?,
        initial_test_mse,
        baseline_mse,
        range_violations: oracle.range_violations(),
    })
}
