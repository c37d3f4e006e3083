//! Grid sweeps, phase tables, correlation reports and oracle demonstrations.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activation::ActivationKind;
use crate::dist::{make_dataset, InputDist1D, InputDistN, LabeledSampleSet};
use crate::error::{invalid, Error, Result};
use crate::hardfam::{HardFunction, Subset, WaveParams};
use crate::io::{append_jsonl, write_json};
use crate::mlp::{init_params, sgd_train, DataView, HiddenActivation, MlpSpec, TrainConfig};
use crate::seed::{derive_seed, stream_rng};
use crate::sqoracle::{sq_sgd_train, OracleConfig, OracleMode, SqTrainReport, VstatOracle};
use crate::statdim::{scaling_report, ScalingConfig, ScalingReport};

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// The hard function used for grid cell `(n, s)`: a sigmoid wave of period
/// `4/s` composed with a random half-size subset.
pub fn cell_function(n: usize, s: f64, input: InputDist1D, seed: u64) -> Result<HardFunction> {
    hard_instance(ActivationKind::sigmoid(s)?, &InputDistN::product(input, n), seed)
}

/// A wave built from `act` on a random half-size subset, truncated for the
/// spread of the subset sum under `dist`.
pub fn hard_instance(act: ActivationKind, dist: &InputDistN, seed: u64) -> Result<HardFunction> {
    let n = dist.dim();
    if n < 2 {
        return Err(invalid("hard instance needs n ≥ 2"));
    }
    let wave = WaveParams::new(act).build(n / 2, dist.coordinate_std())?;
    let mut rng = stream_rng(derive_seed(seed, &format!("subset/n={n}/s={}", act.sharpness)), 0);
    let idx = rand::seq::index::sample(&mut rng, n, n / 2).into_vec();
    HardFunction::new(wave, Subset::from_indices(n, &idx)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub n_list: Vec<usize>,
    pub s_list: Vec<f64>,
    pub input: InputDist1D,
    pub train_count: usize,
    pub test_count: usize,
    pub depths: Vec<usize>,
    /// Hidden widths as multiples of `n`.
    pub width_factors: Vec<usize>,
    pub lrs: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub momentum: f64,
    pub epochs: usize,
    pub patience: usize,
    pub restarts: usize,
    pub activation: HiddenActivation,
    pub standardize_targets: bool,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_list: vec![16, 64],
            s_list: vec![0.05, 0.2, 1.0, 4.0],
            input: InputDist1D::gaussian(),
            train_count: 20_000,
            test_count: 2_000,
            depths: vec![1, 2, 4],
            width_factors: vec![4, 8],
            lrs: vec![0.1, 0.01, 0.001],
            batch_sizes: vec![64, 128, 256],
            momentum: 0.9,
            epochs: 30,
            patience: 5,
            restarts: 1,
            activation: HiddenActivation::Relu,
            standardize_targets: true,
            seed: 0,
        }
    }
}

impl SweepConfig {
    /// The full grid at the original dimensions and sample sizes.
    pub fn full_scale() -> Self {
        SweepConfig {
            n_list: vec![50, 100, 200],
            s_list: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0],
            train_count: 50_000,
            test_count: 1_000,
            ..SweepConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let grids = [
            ("n_list", self.n_list.is_empty()),
            ("s_list", self.s_list.is_empty()),
            ("depths", self.depths.is_empty()),
            ("width_factors", self.width_factors.is_empty()),
            ("lrs", self.lrs.is_empty()),
            ("batch_sizes", self.batch_sizes.is_empty()),
        ];
        if let Some((name, _)) = grids.iter().find(|g| g.1) {
            return Err(config_error(format!("grid {name} is empty")));
        }
        if self.n_list.iter().any(|&n| n < 2) {
            return Err(config_error("every n must be at least 2"));
        }
        if self.s_list.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(config_error("every s must be positive"));
        }
        if self.depths.contains(&0) || self.width_factors.contains(&0) {
            return Err(config_error("depths and width factors must be positive"));
        }
        if self.lrs.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(config_error("learning rates must be nonnegative"));
        }
        let max_batch = *self.batch_sizes.iter().max().unwrap_or(&0);
        if self.batch_sizes.contains(&0) || self.train_count < max_batch {
            return Err(config_error(format!("train_count {} must be at least every batch size", self.train_count)));
        }
        if self.test_count < 2 {
            return Err(config_error("test_count must be at least 2"));
        }
        if self.restarts == 0 {
            return Err(config_error("restarts must be at least 1"));
        }
        Ok(())
    }

    /// Hash of the config and crate version naming the journal.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.update(serde_json::to_vec(self).expect("config serializes"));
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// All tasks in canonical order.
    pub fn tasks(&self) -> Vec<SweepTask> {
        let mut out = Vec::new();
        for &n in &self.n_list {
            for &s in &self.s_list {
                for &depth in &self.depths {
                    for &wf in &self.width_factors {
                        for &lr in &self.lrs {
                            for &batch in &self.batch_sizes {
                                for restart in 0..self.restarts {
                                    out.push(SweepTask { n, s, depth, width: wf * n, lr, batch, restart });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTask {
    pub n: usize,
    pub s: f64,
    pub depth: usize,
    pub width: usize,
    pub lr: f64,
    pub batch: usize,
    pub restart: usize,
}

impl SweepTask {
    pub fn arch_id(&self) -> String {
        format!("d{}w{}", self.depth, self.width)
    }

    pub fn id(&self) -> String {
        format!("n={}/s={}/{}/lr={}/b={}/r={}", self.n, self.s, self.arch_id(), self.lr, self.batch, self.restart)
    }
}

/// One trained grid point. `wall_time_s` is kept out of the main CSV so that
/// reruns produce identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub task_id: String,
    pub n: usize,
    pub s: f64,
    pub s_sqrt_n: f64,
    pub arch_id: String,
    pub depth: usize,
    pub width: usize,
    pub params: usize,
    pub lr: f64,
    pub batch: usize,
    pub restart: usize,
    pub epochs_run: usize,
    #[serde(deserialize_with = "null_as_infinity")]
    pub train_mse: f64,
    #[serde(deserialize_with = "null_as_infinity")]
    pub test_mse: f64,
    #[serde(deserialize_with = "null_as_infinity")]
    pub initial_test_mse: f64,
    pub baseline_mse: f64,
    pub diverged: bool,
    pub seed: u64,
    pub best: bool,
    pub wall_time_s: f64,
}

/// JSON has no infinity; diverged runs come back as `null`.
fn null_as_infinity<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Serialize)]
struct CsvRow<'a> {
    n: usize,
    s: f64,
    s_sqrt_n: f64,
    arch_id: &'a str,
    lr: f64,
    batch: usize,
    restart: usize,
    epochs_run: usize,
    train_mse: f64,
    test_mse: f64,
    baseline_mse: f64,
    initial_test_mse: f64,
    diverged: bool,
    seed: u64,
    best: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(CsvRow {
                n: r.n,
                s: r.s,
                s_sqrt_n: r.s_sqrt_n,
                arch_id: &r.arch_id,
                lr: r.lr,
                batch: r.batch,
                restart: r.restart,
                epochs_run: r.epochs_run,
                train_mse: r.train_mse,
                test_mse: r.test_mse,
                baseline_mse: r.baseline_mse,
                initial_test_mse: r.initial_test_mse,
                diverged: r.diverged,
                seed: r.seed,
                best: r.best,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_timing_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["task_id", "wall_time_s"])?;
        for r in &self.rows {
            out.write_record([r.task_id.as_str(), &format!("{:.3}", r.wall_time_s)])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn task_seed(master: u64, t: &SweepTask) -> u64 {
    derive_seed(master, &format!("train/{}", t.id()))
}

/// Order key for best-row ties: test MSE, then parameter count, then lr.
fn best_key(r: &SweepRow) -> (f64, usize, f64) {
    let mse = if r.test_mse.is_nan() { f64::INFINITY } else { r.test_mse };
    (mse, r.params, r.lr)
}

/// Marks the best row of every `(n, s)` cell.
pub fn flag_best(rows: &mut [SweepRow]) {
    let mut best: BTreeMap<(usize, u64), usize> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let key = (r.n, r.s.to_bits());
        match best.get(&key) {
            Some(&j) => {
                let (a, b) = (best_key(r), best_key(&rows[j]));
                if a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)).is_lt() {
                    best.insert(key, i);
                }
            }
            None => {
                best.insert(key, i);
            }
        }
    }
    for r in rows.iter_mut() {
        r.best = false;
    }
    for &i in best.values() {
        rows[i].best = true;
    }
}

fn run_task(cfg: &SweepConfig, t: &SweepTask, train: &LabeledSampleSet, test: &LabeledSampleSet) -> Result<SweepRow> {
    let spec = MlpSpec::uniform(t.n, t.depth, t.width, cfg.activation)?;
    let seed = task_seed(cfg.seed, t);
    let mut model = init_params(&spec, seed)?;
    let mut tc = TrainConfig::new(t.lr, t.batch, seed);
    tc.momentum = cfg.momentum;
    tc.epochs = cfg.epochs;
    tc.patience = cfg.patience;
    tc.standardize_targets = cfg.standardize_targets;
    let rep = sgd_train(&mut model, DataView::from_set(train), DataView::from_set(test), &tc)?;
    Ok(SweepRow {
        task_id: t.id(),
        n: t.n,
        s: t.s,
        s_sqrt_n: t.s * (t.n as f64).sqrt(),
        arch_id: t.arch_id(),
        depth: t.depth,
        width: t.width,
        params: spec.param_count(),
        lr: t.lr,
        batch: t.batch,
        restart: t.restart,
        epochs_run: rep.epoch_train_mse.len(),
        train_mse: rep.final_train_mse,
        test_mse: rep.test_mse,
        initial_test_mse: rep.initial_test_mse,
        baseline_mse: rep.baseline_mse,
        diverged: rep.diverged,
        seed,
        best: false,
        wall_time_s: rep.wall_time_s,
    })
}

/// Path of the resumable journal for `cfg` inside `dir`.
pub fn journal_path(dir: &Path, cfg: &SweepConfig) -> PathBuf {
    dir.join(format!("journal-{}.jsonl", cfg.fingerprint()))
}

fn read_journal(path: &Path) -> Result<Vec<SweepRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rows = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        // A torn final line from an interrupted run is dropped.
        match serde_json::from_str::<SweepRow>(&line) {
            Ok(r) => rows.push(r),
            Err(_) => continue,
        }
    }
    Ok(rows)
}

/// Trains every grid point. With a journal directory, finished tasks are
/// appended as they complete and skipped on the next run.
pub fn run_sweep(cfg: &SweepConfig, journal_dir: Option<&Path>) -> Result<SweepResult> {
    run_sweep_with(cfg, journal_dir, |_, _, _| {})
}

/// As [`run_sweep`], calling `progress(done, total, row)` after each task.
pub fn run_sweep_with(
    cfg: &SweepConfig,
    journal_dir: Option<&Path>,
    progress: impl Fn(usize, usize, &SweepRow) + Sync,
) -> Result<SweepResult> {
    cfg.validate()?;
    let tasks = cfg.tasks();
    let mut done: BTreeMap<String, SweepRow> = BTreeMap::new();
    let journal = match journal_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = journal_path(dir, cfg);
            let ids: HashSet<String> = tasks.iter().map(|t| t.id()).collect();
            for r in read_journal(&path)? {
                if ids.contains(&r.task_id) {
                    done.insert(r.task_id.clone(), r);
                }
            }
            Some(Mutex::new(BufWriter::new(OpenOptions::new().create(true).append(true).open(&path)?)))
        }
        None => None,
    };
    let total = tasks.len();
    let finished = std::sync::atomic::AtomicUsize::new(done.len());
    let dist_seed = |n: usize, s: f64, part: &str| derive_seed(cfg.seed, &format!("data/n={n}/s={s}/{part}"));

    for &n in &cfg.n_list {
        for &s in &cfg.s_list {
            let pending: Vec<&SweepTask> = tasks.iter().filter(|t| t.n == n && t.s == s && !done.contains_key(&t.id())).collect();
            if pending.is_empty() {
                continue;
            }
            let f = cell_function(n, s, cfg.input, cfg.seed)?;
            let dist = InputDistN::product(cfg.input, n);
            let train = make_dataset(&f, &dist, cfg.train_count, dist_seed(n, s, "train"), None)?;
            let test = make_dataset(&f, &dist, cfg.test_count, dist_seed(n, s, "test"), None)?;
            let rows: Vec<SweepRow> = pending
                .par_iter()
                .map(|t| {
                    let row = run_task(cfg, t, &train, &test)?;
                    if let Some(j) = &journal {
                        let mut w = j.lock().expect("journal lock poisoned");
                        append_jsonl(&mut *w, &row)?;
                        w.flush()?;
                    }
                    let k = finished.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
                    progress(k, total, &row);
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            for r in rows {
                done.insert(r.task_id.clone(), r);
            }
        }
    }
    let mut rows: Vec<SweepRow> = tasks.iter().map(|t| done.remove(&t.id()).expect("every task has a row")).collect();
    flag_best(&mut rows);
    Ok(SweepResult { config: cfg.clone(), rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub n: usize,
    pub s: f64,
    pub s_sqrt_n: f64,
    pub best_test_mse: f64,
    pub baseline_mse: f64,
    pub ratio: f64,
    /// The constant-predictor reference line, always 1.
    pub baseline_ratio: f64,
    pub arch_id: String,
    pub lr: f64,
    pub batch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub cells: Vec<PhaseCell>,
    /// Spearman rank correlation between `s√n` and the ratio.
    pub spearman: f64,
}

impl PhaseReport {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for c in &self.cells {
            out.serialize(c)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Average ranks, ties sharing the mean of their positions.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman correlation, the Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("spearman correlation needs two equal-length samples of at least 2"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let m = (x.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - m) * (b - m);
        sxx += (a - m) * (a - m);
        syy += (b - m) * (b - m);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Best row per `(n, s)`, sorted by `s√n`.
pub fn phase_report(result: &SweepResult) -> Result<PhaseReport> {
    let mut rows = result.rows.clone();
    flag_best(&mut rows);
    let mut cells: Vec<PhaseCell> = rows
        .iter()
        .filter(|r| r.best)
        .map(|r| PhaseCell {
            n: r.n,
            s: r.s,
            s_sqrt_n: r.s_sqrt_n,
            best_test_mse: r.test_mse,
            baseline_mse: r.baseline_mse,
            ratio: r.test_mse / r.baseline_mse,
            baseline_ratio: 1.0,
            arch_id: r.arch_id.clone(),
            lr: r.lr,
            batch: r.batch,
        })
        .collect();
    cells.sort_by(|a, b| a.s_sqrt_n.total_cmp(&b.s_sqrt_n).then(a.n.cmp(&b.n)));
    let mut distinct: Vec<f64> = cells.iter().map(|c| c.s_sqrt_n).collect();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(config_error("phase report needs at least two distinct s·√n values"));
    }
    let x: Vec<f64> = cells.iter().map(|c| c.s_sqrt_n).collect();
    let y: Vec<f64> = cells.iter().map(|c| c.ratio).collect();
    Ok(PhaseReport { spearman: spearman(&x, &y)?, cells })
}

/// Runs the scaling report and writes `statdim.csv` and `statdim_summary.json`.
pub fn statdim_report(cfg: &ScalingConfig, seed: u64, out_dir: &Path) -> Result<ScalingReport> {
    if cfg.n_values.is_empty() {
        return Err(config_error("statdim n grid is empty"));
    }
    cfg.validate().map_err(|e| config_error(e.to_string()))?;
    fs::create_dir_all(out_dir)?;
    let report = scaling_report(cfg, seed)?;
    let mut w = csv::Writer::from_path(out_dir.join("statdim.csv"))?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Summary<'a> {
        config: &'a ScalingConfig,
        seed: u64,
        slope: f64,
        per_n: &'a [crate::statdim::ScalingSummary],
    }
    write_json(&out_dir.join("statdim_summary.json"), &Summary { config: cfg, seed, slope: report.slope, per_n: &report.summaries })?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoRun {
    pub name: String,
    pub n: usize,
    pub s: f64,
    pub mode: OracleMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleDemoConfig {
    pub runs: Vec<DemoRun>,
    pub hidden: Vec<usize>,
    pub activation: HiddenActivation,
    pub t: usize,
    pub grad_bound: f64,
    pub steps: usize,
    pub lr: f64,
    pub test_count: usize,
    pub transcript_limit: usize,
}

impl Default for OracleDemoConfig {
    fn default() -> Self {
        OracleDemoConfig {
            runs: vec![
                DemoRun { name: "hard-decoy".into(), n: 32, s: 4.0, mode: OracleMode::Decoy },
                DemoRun { name: "hard-empirical".into(), n: 32, s: 4.0, mode: OracleMode::Empirical },
                DemoRun { name: "easy-empirical".into(), n: 16, s: 0.2, mode: OracleMode::Empirical },
            ],
            hidden: vec![16],
            activation: HiddenActivation::Relu,
            t: 100,
            grad_bound: 1.0,
            steps: 20_000,
            lr: 0.5,
            test_count: 2_000,
            transcript_limit: crate::sqoracle::DEFAULT_TRANSCRIPT_LIMIT,
        }
    }
}

impl OracleDemoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs.is_empty() {
            return Err(config_error("oracle demo needs at least one run"));
        }
        let mut names = HashSet::new();
        if !self.runs.iter().all(|r| names.insert(r.name.as_str())) {
            return Err(config_error("oracle demo run names must be distinct"));
        }
        if self.t == 0 || self.test_count < 2 || !(self.grad_bound > 0.0) || !(self.lr >= 0.0) {
            return Err(config_error("oracle demo needs t ≥ 1, test_count ≥ 2, positive gradient bound and nonnegative lr"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoOutcome {
    pub run: DemoRun,
    pub param_count: usize,
    pub report: SqTrainReport,
    pub transcript_entries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleDemoReport {
    pub config: OracleDemoConfig,
    pub seed: u64,
    pub outcomes: Vec<DemoOutcome>,
}

impl OracleDemoReport {
    pub fn outcome(&self, name: &str) -> Option<&DemoOutcome> {
        self.outcomes.iter().find(|o| o.run.name == name)
    }
}

/// Trains one model per configured run through its own oracle. With an
/// output directory, writes `<name>.jsonl` transcripts and `oracle_summary.json`.
pub fn oracle_demo(cfg: &OracleDemoConfig, seed: u64, out_dir: Option<&Path>) -> Result<OracleDemoReport> {
    cfg.validate()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let mut outcomes = Vec::new();
    for run in &cfg.runs {
        let input = InputDist1D::gaussian();
        let f = cell_function(run.n, run.s, input, seed)?;
        let dist = InputDistN::product(input, run.n);
        let test = make_dataset(&f, &dist, cfg.test_count, derive_seed(seed, &format!("demo/{}/test", run.name)), None)?;
        let mut oc = OracleConfig::new(cfg.t, run.mode);
        oc.transcript_limit = cfg.transcript_limit;
        let oracle = VstatOracle::new(oc, f, dist, derive_seed(seed, &format!("demo/{}/oracle", run.name)))?;
        let spec = MlpSpec::new(run.n, &cfg.hidden, cfg.activation)?;
        let mut model = init_params(&spec, derive_seed(seed, &format!("demo/{}/init", run.name)))?;
        let report = sq_sgd_train(
            &mut model,
            &oracle,
            cfg.grad_bound,
            cfg.steps,
            cfg.lr,
            derive_seed(seed, &format!("demo/{}/steps", run.name)),
            DataView::from_set(&test),
        )?;
        if let Some(dir) = out_dir {
            let mut w = BufWriter::new(File::create(dir.join(format!("{}.jsonl", run.name)))?);
            oracle.write_transcript(&mut w)?;
            w.flush()?;
        }
        outcomes.push(DemoOutcome {
            run: run.clone(),
            param_count: spec.param_count(),
            transcript_entries: oracle.transcript().len(),
            report,
        });
    }
    let rep = OracleDemoReport { config: cfg.clone(), seed, outcomes };
    if let Some(dir) = out_dir {
        write_json(&dir.join("oracle_summary.json"), &rep)?;
    }
    Ok(rep)
}
