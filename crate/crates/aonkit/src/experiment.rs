//! Ablation harness: builds networks per normalisation mode, runs seeded
//! repetitions (optionally on parallel threads, capped by the
//! `AONKIT_THREADS` environment variable), sweeps the Taylor order on
//! synthetic spectra, compares modes, and finite-difference-checks every
//! backward pass.
//!
//! Everything here is pinned to `f64`, the experiment precision.

use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::aon::{AonMode, AonParam};
use crate::data::{gen_blobs, gen_spirals, load_idx_images, load_idx_labels, Dataset, Split, Standardizer};
use crate::error::{AonError, Result};
use crate::linalg::Matrix;
use crate::metrics::MetricRecord;
use crate::nn::{
    softmax_cross_entropy_batch, BatchNormLayer, ConvLayer, DenseLayer, ForwardMode, Layer,
    Sequential, Value,
};
use crate::orthopoly::approximation_error;
use crate::regularize::PenaltyConfig;
use crate::train::{
    evaluate, save_checkpoint, train_epoch, OptimizerState, TrainConfig,
};

/// Normalisation mode of a whole network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetMode {
    /// Raw weights (batch norm only).
    Plain,
    /// Spectral normalisation (the q = 0 transform).
    Sn,
    /// The full transform at a configured Taylor order.
    Aon,
    /// Raw weights plus the orthonormal penalty.
    OrthReg,
}

impl NetMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(NetMode::Plain),
            "sn" => Ok(NetMode::Sn),
            "aon" => Ok(NetMode::Aon),
            "orthreg" => Ok(NetMode::OrthReg),
            other => Err(AonError::Config(format!(
                "unknown mode '{other}' (expected plain, sn, aon or orthreg)"
            ))),
        }
    }

    pub fn label(&self, q: usize) -> String {
        match self {
            NetMode::Plain => "plain".into(),
            NetMode::Sn => "sn".into(),
            NetMode::Aon => format!("aon_q{q}"),
            NetMode::OrthReg => "orthreg".into(),
        }
    }
}

/// Which dataset a run trains on.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Blobs {
        classes: usize,
        per_class: usize,
        spread: f64,
    },
    Spirals {
        classes: usize,
        per_class: usize,
        noise: f64,
        /// Angular noise of the validation draw; defaults to the
        /// training noise. Zero validates against the clean manifold.
        val_noise: f64,
    },
    /// Directory holding `train-images.idx`, `train-labels.idx`,
    /// `val-images.idx`, `val-labels.idx`.
    Idx { dir: PathBuf },
}

impl DatasetSpec {
    /// Parses `blobs`, `spirals` (each optionally followed by
    /// `:key=value,...` overriding `classes`, `per-class` and
    /// `spread`/`noise`), or `idx:PATH`.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(path) = s.strip_prefix("idx:") {
            return Ok(DatasetSpec::Idx { dir: path.into() });
        }
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let mut classes = 2usize;
        let mut per_class = 200usize;
        let mut val_noise: Option<f64> = None;
        let mut shape = match name {
            "blobs" => 0.25,
            "spirals" => 0.18,
            other => {
                return Err(AonError::Config(format!(
                    "unknown dataset '{other}' (expected blobs, spirals or idx:PATH)"
                )))
            }
        };
        if let Some(params) = params {
            for part in params.split(',') {
                let (key, value) = part.split_once('=').ok_or_else(|| {
                    AonError::Config(format!("bad dataset parameter '{part}'"))
                })?;
                match key.trim() {
                    "classes" => {
                        classes = value.trim().parse().map_err(|_| {
                            AonError::Config(format!("bad classes '{value}'"))
                        })?
                    }
                    "per-class" => {
                        per_class = value.trim().parse().map_err(|_| {
                            AonError::Config(format!("bad per-class '{value}'"))
                        })?
                    }
                    "spread" | "noise" => {
                        shape = value.trim().parse().map_err(|_| {
                            AonError::Config(format!("bad {key} '{value}'"))
                        })?
                    }
                    "val-noise" => {
                        val_noise = Some(value.trim().parse().map_err(|_| {
                            AonError::Config(format!("bad val-noise '{value}'"))
                        })?)
                    }
                    other => {
                        return Err(AonError::Config(format!(
                            "unknown dataset parameter '{other}'"
                        )))
                    }
                }
            }
        }
        Ok(match name {
            "blobs" => DatasetSpec::Blobs {
                classes,
                per_class,
                spread: shape,
            },
            _ => DatasetSpec::Spirals {
                classes,
                per_class,
                noise: shape,
                val_noise: val_noise.unwrap_or(shape),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: NetMode,
    pub q: usize,
    pub beta: f64,
    pub pre_sn: bool,
    pub dataset: DatasetSpec,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Power-iteration rounds per training step for normalised weights.
    pub power_iterations: usize,
    pub seed: u64,
    pub reps: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: NetMode::Aon,
            q: 2,
            beta: 10.0,
            pre_sn: false,
            dataset: DatasetSpec::Spirals {
                classes: 2,
                per_class: 200,
                noise: 0.18,
                val_noise: 0.18,
            },
            hidden: vec![32, 32],
            epochs: 30,
            batch_size: 32,
            lr0: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            power_iterations: 1,
            seed: 1,
            reps: 1,
            out_dir: None,
        }
    }
}

fn val_per_class(train_per_class: usize) -> usize {
    train_per_class.max(500)
}

/// splitmix64 step, used to derive independent seed streams.
fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loads / generates the train and validation splits for one repetition.
pub fn load_dataset(spec: &DatasetSpec, rep_seed: u64) -> Result<(Dataset<f64>, Dataset<f64>)> {
    match spec {
        DatasetSpec::Blobs {
            classes,
            per_class,
            spread,
        } => {
            let mut train = gen_blobs(*classes, *per_class, *spread, derive_seed(rep_seed, 1));
            // validation draws more points so accuracy estimates carry
            // little sampling noise
            let mut val = gen_blobs(
                *classes,
                val_per_class(*per_class),
                *spread,
                derive_seed(rep_seed, 2),
            );
            val.split = Split::Validation;
            let standardizer = Standardizer::fit(&train);
            train = standardizer.apply(&train);
            val = standardizer.apply(&val);
            Ok((train, val))
        }
        DatasetSpec::Spirals {
            classes,
            per_class,
            noise,
            val_noise,
        } => {
            let mut train = gen_spirals(*classes, *per_class, *noise, derive_seed(rep_seed, 1));
            let mut val = gen_spirals(
                *classes,
                val_per_class(*per_class),
                *val_noise,
                derive_seed(rep_seed, 2),
            );
            val.split = Split::Validation;
            let standardizer = Standardizer::fit(&train);
            train = standardizer.apply(&train);
            val = standardizer.apply(&val);
            Ok((train, val))
        }
        DatasetSpec::Idx { dir } => {
            let images = load_idx_images::<f64>(dir.join("train-images.idx"))?;
            let labels = load_idx_labels(dir.join("train-labels.idx"))?;
            let classes = labels.iter().copied().max().map_or(1, |m| m + 1);
            let [n, c, h, w] = images.dims();
            let flat = Matrix::new(n, c * h * w, images.data().to_vec())
                .map_err(|e| AonError::Io(e.to_string()))?;
            let train = Dataset::flat(flat, labels, classes, Split::Train)?;

            let vimages = load_idx_images::<f64>(dir.join("val-images.idx"))?;
            let vlabels = load_idx_labels(dir.join("val-labels.idx"))?;
            let [vn, vc, vh, vw] = vimages.dims();
            let vflat = Matrix::new(vn, vc * vh * vw, vimages.data().to_vec())
                .map_err(|e| AonError::Io(e.to_string()))?;
            let mut val = Dataset::flat(vflat, vlabels, classes, Split::Train)?;
            val.split = Split::Validation;

            let standardizer = Standardizer::fit(&train);
            Ok((standardizer.apply(&train), standardizer.apply(&val)))
        }
    }
}

fn he_normal(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Matrix<f64> {
    let scale = (2.0 / cols as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect();
    Matrix::new(rows, cols, data).expect("finite init")
}

/// Random matrix with exactly orthonormal rows (or columns when
/// rows > cols): Gram-Schmidt on a Gaussian draw. Every layer then
/// starts with its Gram spectrum at the identity — the expansion point
/// of the Taylor approximation — and the batch-norm blocks absorb the
/// unit scale for the plain modes, keeping initialisation comparable
/// across modes.
fn orthonormal_init(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Matrix<f64> {
    let tall = rows >= cols;
    let (n, k) = if tall { (rows, cols) } else { (cols, rows) };
    // n x k Gaussian, orthonormalised column by column (one
    // re-orthogonalisation pass keeps it stable at these sizes)
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut col: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for _pass in 0..2 {
            for prev in &columns {
                let dot: f64 = col.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (c, p) in col.iter_mut().zip(prev) {
                    *c -= dot * p;
                }
            }
        }
        let norm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        for c in col.iter_mut() {
            *c /= norm;
        }
        columns.push(col);
    }
    Matrix::from_fn(rows, cols, |i, j| {
        if tall {
            columns[j][i]
        } else {
            columns[i][j]
        }
    })
}

fn dense_for_mode(
    cfg: &ExperimentConfig,
    weight: Matrix<f64>,
    state_seed: u64,
) -> DenseLayer<f64> {
    let rounds = cfg.power_iterations.max(1);
    let mut layer = match cfg.mode {
        NetMode::Plain | NetMode::OrthReg => DenseLayer::plain(weight),
        NetMode::Sn => DenseLayer::normalized(weight, 0, state_seed, AonMode::Standard),
        NetMode::Aon => {
            let mode = if cfg.pre_sn {
                AonMode::PreSn
            } else {
                AonMode::Standard
            };
            DenseLayer::normalized(weight, cfg.q, state_seed, mode)
        }
    };
    if let crate::nn::DenseKind::Normalized(p) = &mut layer.kind {
        p.state.iterations_per_step = rounds;
    }
    layer
}

/// MLP with one dense(+BN+ReLU) block per hidden width and a final dense
/// classifier, all dense layers sharing the experiment's weight mode.
pub fn build_network(
    cfg: &ExperimentConfig,
    rep_seed: u64,
    in_dim: usize,
    classes: usize,
) -> Sequential<f64> {
    let mut init_rng = ChaCha12Rng::seed_from_u64(derive_seed(rep_seed, 3));
    let mut layers = Vec::new();
    let mut prev = in_dim;
    for (i, &width) in cfg.hidden.iter().enumerate() {
        let w = orthonormal_init(&mut init_rng, width, prev);
        layers.push(Layer::Dense(dense_for_mode(
            cfg,
            w,
            derive_seed(rep_seed, 10 + i as u64),
        )));
        layers.push(Layer::BatchNorm(BatchNormLayer::new(width)));
        layers.push(Layer::Relu);
        prev = width;
    }
    // the classifier head stays plain in every mode (the usual
    // convention: normalisation wraps the feature layers, and logit
    // scale should not be constrained)
    let w_out = orthonormal_init(&mut init_rng, classes, prev);
    layers.push(Layer::Dense(DenseLayer::plain(w_out)));
    Sequential::new(layers)
}

fn train_config(cfg: &ExperimentConfig) -> TrainConfig {
    let penalty = match cfg.mode {
        NetMode::OrthReg => PenaltyConfig::orthonormal(cfg.beta),
        _ => PenaltyConfig::none(),
    };
    TrainConfig {
        lr0: cfg.lr0,
        momentum: cfg.momentum,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        penalty,
        weight_decay: cfg.weight_decay,
        q: cfg.q,
        norm_mode: match cfg.mode {
            NetMode::Plain | NetMode::OrthReg => crate::nn::NormMode::Plain,
            NetMode::Sn => crate::nn::NormMode::SnOnly,
            NetMode::Aon => crate::nn::NormMode::Aon,
        },
        ..TrainConfig::default()
    }
}

/// Outcome of one seeded repetition.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_id: String,
    pub seed: u64,
    pub records: Vec<MetricRecord>,
    pub best_val_acc: f64,
    pub best_epoch: usize,
    pub mean_epoch_wall: f64,
    pub checkpoint: Option<PathBuf>,
}

/// Trains one repetition. `rep` indexes the repetition; the effective
/// seed is `cfg.seed + rep`.
pub fn run_single(cfg: &ExperimentConfig, rep: usize) -> Result<RunResult> {
    let seed = cfg.seed + rep as u64;
    let run_id = format!("{}_s{}", cfg.mode.label(cfg.q), seed);
    let (train_ds, val_ds) = load_dataset(&cfg.dataset, seed)?;
    let mut model = build_network(cfg, seed, train_ds.feature_count(), train_ds.class_count);
    let tcfg = TrainConfig {
        seed,
        ..train_config(cfg)
    };
    tcfg.validate()?;

    let mut opt = OptimizerState::new(&model);
    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 4));

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best_val_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_model: Option<Sequential<f64>> = None;
    let mut wall_sum = 0.0;

    for epoch in 0..cfg.epochs {
        let stats = train_epoch(&mut model, &train_ds, &tcfg, &mut opt, epoch, &mut shuffle_rng)?;
        let (val_loss, val_acc) = evaluate(&mut model, &val_ds)?;
        wall_sum += stats.wall_seconds;
        if val_acc > best_val_acc {
            best_val_acc = val_acc;
            best_epoch = epoch;
            best_model = Some(model.clone());
        }
        records.push(MetricRecord {
            run_id: run_id.clone(),
            seed,
            epoch,
            train_loss: stats.train_loss,
            train_acc: stats.train_acc,
            val_loss,
            val_acc,
            mean_orth_dev: stats.mean_orth_dev,
            mean_sigma: stats.mean_sigma,
            epoch_wall_seconds: stats.wall_seconds,
        });
    }

    let checkpoint = match (&cfg.out_dir, best_model) {
        (Some(dir), Some(best)) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{run_id}.ckpt"));
            save_checkpoint(&best, &path)?;
            Some(path)
        }
        _ => None,
    };

    Ok(RunResult {
        run_id,
        seed,
        records,
        best_val_acc,
        best_epoch,
        mean_epoch_wall: wall_sum / cfg.epochs.max(1) as f64,
        checkpoint,
    })
}

/// Parallelism cap: `AONKIT_THREADS` when set, otherwise the machine's
/// available parallelism.
pub fn thread_cap() -> usize {
    if let Ok(v) = std::env::var("AONKIT_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Runs `cfg.reps` seeded repetitions, in waves of at most
/// [`thread_cap`] parallel threads, and returns them in seed order.
pub fn run_repetitions(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    let cap = thread_cap().max(1);
    let mut results: Vec<Option<Result<RunResult>>> = (0..cfg.reps).map(|_| None).collect();
    let mut next = 0usize;
    while next < cfg.reps {
        let wave_end = (next + cap).min(cfg.reps);
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for rep in next..wave_end {
                let cfg_ref = &*cfg;
                handles.push((rep, scope.spawn(move || run_single(cfg_ref, rep))));
            }
            for (rep, handle) in handles {
                results[rep] = Some(handle.join().expect("repetition thread panicked"));
            }
        });
        next = wave_end;
    }
    results
        .into_iter()
        .map(|r| r.expect("every repetition ran"))
        .collect()
}

/// All records of a repetition batch, flattened in `(seed, epoch)` order.
pub fn collect_records(results: &[RunResult]) -> Vec<MetricRecord> {
    let mut records: Vec<MetricRecord> = results.iter().flat_map(|r| r.records.clone()).collect();
    records.sort_by(|a, b| (a.seed, a.epoch).cmp(&(b.seed, b.epoch)));
    records
}

/// Dense random orthogonal matrix from seeded Givens rotations.
pub fn random_orthogonal(rng: &mut ChaCha12Rng, n: usize) -> Matrix<f64> {
    let mut q = Matrix::identity(n);
    if n < 2 {
        return q;
    }
    for _ in 0..(3 * n * n) {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n);
        if i == j {
            j = (j + 1) % n;
        }
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        for r in 0..n {
            let qi = q.get(r, i);
            let qj = q.get(r, j);
            q.set(r, i, c * qi - s * qj);
            q.set(r, j, s * qi + c * qj);
        }
    }
    q
}

/// `rows x cols` (rows <= cols) matrix whose Gram spectrum equals `eigs`.
pub fn matrix_with_gram_spectrum(
    rng: &mut ChaCha12Rng,
    rows: usize,
    cols: usize,
    eigs: &[f64],
) -> Matrix<f64> {
    assert_eq!(eigs.len(), rows, "one eigenvalue per row");
    assert!(rows <= cols, "gram spectrum prescribes rows <= cols");
    let q = random_orthogonal(rng, rows);
    let p = random_orthogonal(rng, cols);
    let mut core = Matrix::zeros(rows, cols);
    for (i, &e) in eigs.iter().enumerate() {
        assert!(e >= 0.0, "gram eigenvalues are non-negative");
        core.set(i, i, e.sqrt());
    }
    q.matmul(&core)
        .expect("shape by construction")
        .matmul(&p.transpose())
        .expect("shape by construction")
}

/// One row of the order-sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub q: usize,
    pub mean_err: f64,
    pub max_err: f64,
}

/// Approximation error of `P_q` over random matrices whose Gram spectra
/// are sampled uniformly from `[lo, hi]`.
pub fn ortho_sweep(
    qs: &[usize],
    lo: f64,
    hi: f64,
    trials: usize,
    seed: u64,
    rows: usize,
    cols: usize,
) -> Result<Vec<SweepRow>> {
    if qs.is_empty() {
        return Err(AonError::Config("q list must be non-empty".into()));
    }
    if !(lo <= hi && lo > 0.0) {
        return Err(AonError::Config(format!(
            "spectrum range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut mats = Vec::with_capacity(trials);
    for _ in 0..trials {
        let eigs: Vec<f64> = (0..rows)
            .map(|_| {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            })
            .collect();
        mats.push(matrix_with_gram_spectrum(&mut rng, rows, cols, &eigs));
    }
    let mut out = Vec::with_capacity(qs.len());
    for &q in qs {
        let mut sum = 0.0;
        let mut max = 0.0f64;
        for w in &mats {
            let e = approximation_error(w, q)?;
            sum += e;
            max = max.max(e);
        }
        out.push(SweepRow {
            q,
            mean_err: sum / trials.max(1) as f64,
            max_err: max,
        });
    }
    Ok(out)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("q,mean_err,max_err\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{}\n",
            r.q,
            crate::metrics::format_sig6(r.mean_err),
            crate::metrics::format_sig6(r.max_err)
        ));
    }
    s
}

/// One mode column of a comparison summary.
#[derive(Debug, Clone)]
pub struct CompareEntry {
    pub label: String,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub time_mean: f64,
    pub best_accs: Vec<f64>,
}

/// A mode to compare, e.g. `aon:2`, `aon:4`, `sn`, `plain`, `orthreg`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpec {
    pub mode: NetMode,
    pub q: usize,
}

impl ModeSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (mode_str, q) = match s.split_once(':') {
            Some((m, qs)) => {
                let q: usize = qs
                    .parse()
                    .map_err(|_| AonError::Config(format!("bad q in mode spec '{s}'")))?;
                (m, q)
            }
            None => (s, 2),
        };
        Ok(Self {
            mode: NetMode::parse(mode_str)?,
            q,
        })
    }
}

/// Runs every mode with the shared base configuration and summarises
/// best validation accuracy (mean ± std over seeds) and mean epoch time.
pub fn compare(base: &ExperimentConfig, modes: &[ModeSpec]) -> Result<Vec<CompareEntry>> {
    let mut entries = Vec::with_capacity(modes.len());
    for spec in modes {
        let cfg = ExperimentConfig {
            mode: spec.mode,
            q: spec.q,
            out_dir: None,
            ..base.clone()
        };
        let results = run_repetitions(&cfg)?;
        let accs: Vec<f64> = results.iter().map(|r| r.best_val_acc).collect();
        let n = accs.len() as f64;
        let mean = accs.iter().sum::<f64>() / n;
        let std = if accs.len() > 1 {
            (accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let time_mean =
            results.iter().map(|r| r.mean_epoch_wall).sum::<f64>() / results.len().max(1) as f64;
        entries.push(CompareEntry {
            label: spec.mode.label(spec.q),
            acc_mean: mean,
            acc_std: std,
            time_mean,
            best_accs: accs,
        });
    }
    Ok(entries)
}

/// Median of a non-empty sample.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Table-shaped CSV: a header of mode labels, an accuracy row
/// (`mean±std`), a median-accuracy row, and an epoch-time row.
pub fn compare_to_csv(entries: &[CompareEntry]) -> String {
    use crate::metrics::format_sig6;
    let mut header = String::from("metric");
    let mut acc_row = String::from("best_val_acc");
    let mut med_row = String::from("best_val_acc_median");
    let mut time_row = String::from("epoch_time_s");
    for e in entries {
        header.push_str(&format!(",{}", e.label));
        acc_row.push_str(&format!(
            ",{}±{}",
            format_sig6(e.acc_mean),
            format_sig6(e.acc_std)
        ));
        med_row.push_str(&format!(",{}", format_sig6(median(&e.best_accs))));
        time_row.push_str(&format!(",{}", format_sig6(e.time_mean)));
    }
    format!("{header}\n{acc_row}\n{med_row}\n{time_row}\n")
}

/// One named gradient check. `rel_err` is a norm-based relative error
/// between the analytic gradient and central finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub name: String,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub threshold: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.rel_err < self.threshold)
    }
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-10)
}

const FD_STEP: f64 = 1e-5;

fn fd_gradient(mut loss: impl FnMut(&mut [f64]) -> f64, x: &mut [f64]) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let plus = loss(x);
        x[i] = orig - FD_STEP;
        let minus = loss(x);
        x[i] = orig;
        grad[i] = (plus - minus) / (2.0 * FD_STEP);
    }
    grad
}

fn check_aon(q: usize, rows: usize, cols: usize, seed: u64, mode: AonMode, corrupt: bool) -> Result<GradCheckEntry> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.6 * z
        })
        .collect();
    let w = Matrix::new(rows, cols, data)?;
    let target_data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let target = Matrix::new(rows, cols, target_data)?;
    let mut param = AonParam::with_mode(w, q, derive_seed(seed, 7), mode);
    for _ in 0..50 {
        let _ = param.forward()?;
    }
    let (_, cache) = param.forward_fixed_with_cache()?;
    let mut analytic = param.backward(&cache, &target)?.data().to_vec();
    if corrupt {
        analytic[0] += 1e-3;
    }
    let mut probe = param.clone();
    let mut w_data = probe.w.data().to_vec();
    let numeric = fd_gradient(
        |x: &mut [f64]| {
            probe.w.data_mut().copy_from_slice(x);
            let h = probe.forward_fixed().expect("probe forward");
            h.frobenius_dot(&target).expect("same shape")
        },
        &mut w_data,
    );
    let label = match mode {
        AonMode::Standard => format!("aon_backward q={q} {rows}x{cols}"),
        AonMode::PreSn => format!("aon_backward_pre_sn q={q} {rows}x{cols}"),
    };
    Ok(GradCheckEntry {
        name: label,
        rel_err: rel_err(&analytic, &numeric),
    })
}

/// Max relative error over every parameter tensor of a model under the
/// batched cross-entropy loss, holding all state fixed (Probe mode).
fn check_model(model: &mut Sequential<f64>, x: &Value<f64>, labels: &[usize]) -> Result<f64> {
    let (out, caches) = model.forward(x, ForwardMode::Probe)?;
    let (_, grad_logits) = softmax_cross_entropy_batch(out.as_flat()?, labels)?;
    let grads = model.backward(Value::Flat(grad_logits), &caches)?;

    let mut worst = 0.0f64;
    let layer_count = model.layers.len();
    for li in 0..layer_count {
        for slot in 0..grads.layers[li].len() {
            let mut values = model.param_slices()[li][slot].to_vec();
            let numeric = fd_gradient(
                |vals: &mut [f64]| {
                    model.param_slices_mut()[li][slot].copy_from_slice(vals);
                    let (out, _) = model.forward(x, ForwardMode::Probe).expect("probe");
                    let (loss, _) =
                        softmax_cross_entropy_batch(out.as_flat().expect("flat"), labels)
                            .expect("loss");
                    loss
                },
                &mut values,
            );
            model.param_slices_mut()[li][slot].copy_from_slice(&values);
            worst = worst.max(rel_err(&grads.layers[li][slot], &numeric));
        }
    }
    Ok(worst)
}

/// Finite-difference report covering the transform backward (both modes),
/// each layer backward, the loss, and the reference two-layer network.
pub fn grad_check_report(
    q: usize,
    rows: usize,
    cols: usize,
    seed: u64,
    corrupt: bool,
) -> Result<GradCheckReport> {
    let mut entries = Vec::new();

    entries.push(check_aon(q, rows, cols, seed, AonMode::Standard, corrupt)?);
    entries.push(check_aon(q, rows, cols, derive_seed(seed, 11), AonMode::PreSn, false)?);

    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 13));

    // dense layer with bias under the CE loss
    {
        let w = he_normal(&mut rng, 3, 4);
        let mut model = Sequential::new(vec![Layer::Dense(
            DenseLayer::normalized(w, q, derive_seed(seed, 17), AonMode::Standard).with_bias(),
        )]);
        let x = Value::Flat(he_normal(&mut rng, 4, 4));
        let labels = [0usize, 1, 2, 0];
        for _ in 0..20 {
            let _ = model.forward(&x, ForwardMode::Train)?;
        }
        entries.push(GradCheckEntry {
            name: "dense_layer".into(),
            rel_err: check_model(&mut model, &x, &labels)?,
        });
    }

    // convolutional layer feeding a dense head
    {
        let kernel_flat = he_normal(&mut rng, 3, 8);
        let kernel = crate::tensor::conv_unreshape(&kernel_flat, [3, 2, 2, 2])
            .map_err(|e| AonError::Checkpoint(e.to_string()))?;
        let head = he_normal(&mut rng, 2, 27);
        let mut model = Sequential::new(vec![
            Layer::Conv(ConvLayer::normalized(
                kernel,
                q,
                derive_seed(seed, 19),
                AonMode::Standard,
                1,
                0,
            )),
            Layer::Relu,
            Layer::Flatten,
            Layer::Dense(DenseLayer::plain(head)),
        ]);
        let data: Vec<f64> = (0..2 * 2 * 4 * 4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x = Value::Image(crate::tensor::Tensor4::new([2, 2, 4, 4], data)?);
        let labels = [0usize, 1];
        for _ in 0..20 {
            let _ = model.forward(&x, ForwardMode::Train)?;
        }
        entries.push(GradCheckEntry {
            name: "conv_layer".into(),
            rel_err: check_model(&mut model, &x, &labels)?,
        });
    }

    // batch norm between two plain dense layers
    {
        let w1 = he_normal(&mut rng, 5, 3);
        let w2 = he_normal(&mut rng, 2, 5);
        let mut model = Sequential::new(vec![
            Layer::Dense(DenseLayer::plain(w1)),
            Layer::BatchNorm(BatchNormLayer::new(5)),
            Layer::Relu,
            Layer::Dense(DenseLayer::plain(w2)),
        ]);
        let x = Value::Flat(he_normal(&mut rng, 4, 3));
        let labels = [0usize, 1, 1, 0];
        entries.push(GradCheckEntry {
            name: "batchnorm_relu".into(),
            rel_err: check_model(&mut model, &x, &labels)?,
        });
    }

    // softmax cross-entropy against finite differences of the loss value
    {
        let logits = he_normal(&mut rng, 1, 5);
        let (_, analytic) = softmax_cross_entropy_batch(&logits, &[3])?;
        let mut values = logits.data().to_vec();
        let numeric = fd_gradient(
            |vals: &mut [f64]| {
                let m = Matrix::new(1, 5, vals.to_vec()).expect("finite");
                let (loss, _) = softmax_cross_entropy_batch(&m, &[3]).expect("loss");
                loss
            },
            &mut values,
        );
        entries.push(GradCheckEntry {
            name: "softmax_cross_entropy".into(),
            rel_err: rel_err(analytic.data(), &numeric),
        });
    }

    // the reference two-layer normalised network
    {
        let w1 = he_normal(&mut rng, 6, 4);
        let w2 = he_normal(&mut rng, 2, 6);
        let mut model = Sequential::new(vec![
            Layer::Dense(DenseLayer::normalized(
                w1,
                q,
                derive_seed(seed, 23),
                AonMode::Standard,
            )),
            Layer::BatchNorm(BatchNormLayer::new(6)),
            Layer::Relu,
            Layer::Dense(DenseLayer::normalized(
                w2,
                q,
                derive_seed(seed, 29),
                AonMode::Standard,
            )),
        ]);
        let x = Value::Flat(he_normal(&mut rng, 4, 4));
        let labels = [0usize, 1, 0, 1];
        for _ in 0..20 {
            let _ = model.forward(&x, ForwardMode::Train)?;
        }
        entries.push(GradCheckEntry {
            name: "end_to_end_aon_bn_relu_ce".into(),
            rel_err: check_model(&mut model, &x, &labels)?,
        });
    }

    Ok(GradCheckReport {
        entries,
        threshold: 1e-4,
    })
}
