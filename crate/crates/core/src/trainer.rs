//! Negative-sampling SGD with linear learning-rate decay.
//!
//! Workers share the parameter matrices without synchronization (HogWild):
//! every worker reads and writes rows of the same matrices and lost updates
//! are tolerated. The only synchronized datum is the progress counter that
//! drives the learning-rate schedule. With one thread the whole run is
//! deterministic for a fixed seed.

use std::cell::UnsafeCell;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::corpus::{discard_table, keep, EncodedCorpus, Vocab};
use crate::error::{Error, Result};
use crate::init::{init_model, InitScheme};
use crate::matrix::{add_scaled, dot, Real};
use crate::model::{sigmoid, softplus, ContextSlot, Dims, ModelKind, ModelParams};
use crate::subword::{SubwordIndex, SubwordTable};

/// Exponent of the unigram distribution negatives are drawn from.
pub const NEGATIVE_POWER: f64 = 0.75;

/// Redraws allowed when a negative collides with the target word.
pub const MAX_NEGATIVE_RETRIES: usize = 32;

/// Number of progress buckets in a [`TrainingLog`].
pub const LOG_BUCKETS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Every position `±1..=±c`.
    Fixed,
    /// Effective half-width drawn uniformly from `1..=c` per target.
    UniformShrink,
}

impl WindowMode {
    pub fn default_for(kind: ModelKind) -> Self {
        if kind.is_positional() {
            WindowMode::Fixed
        } else {
            WindowMode::UniformShrink
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    /// Context half-width `c`.
    pub window: usize,
    pub dim: usize,
    pub epochs: usize,
    /// Initial learning rate.
    pub lr: f64,
    pub negatives: usize,
    pub min_count: u64,
    /// Low-pass subsampling threshold `r`.
    pub sample: f64,
    pub buckets: usize,
    pub minn: usize,
    pub maxn: usize,
    pub threads: usize,
    pub seed: u64,
    pub window_mode: WindowMode,
    pub init: InitScheme,
    /// Serialize updates of the positional vectors across workers.
    pub positional_lock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_kind(ModelKind::Subword)
    }
}

impl TrainConfig {
    /// Defaults for a model kind: `c = 5` for the subword model and `c = 15`
    /// for the positional ones, every other value shared.
    pub fn for_kind(kind: ModelKind) -> Self {
        TrainConfig {
            kind,
            window: if kind.is_positional() { 15 } else { 5 },
            dim: 300,
            epochs: 1,
            lr: 0.05,
            negatives: 10,
            min_count: 5,
            sample: 1e-5,
            buckets: 2_000_000,
            minn: 3,
            maxn: 6,
            threads: 1,
            seed: 0,
            window_mode: WindowMode::default_for(kind),
            init: InitScheme::default(),
            positional_lock: false,
        }
    }

    /// Constrained positional model with `positional_dim` position-dependent features.
    pub fn constrained(positional_dim: usize) -> Self {
        Self::for_kind(ModelKind::Constrained { positional_dim })
    }

    pub fn subword_index(&self) -> SubwordIndex {
        SubwordIndex {
            minn: self.minn,
            maxn: self.maxn,
            buckets: self.buckets,
            include_word: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window", self.window),
            ("dim", self.dim),
            ("epochs", self.epochs),
            ("negatives", self.negatives),
            ("threads", self.threads),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("{name} must be positive")));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if self.sample.is_nan() || self.sample <= 0.0 {
            return Err(Error::InvalidInput("subsampling threshold must be positive".into()));
        }
        if self.min_count == 0 {
            return Err(Error::InvalidInput("min_count must be positive".into()));
        }
        if let ModelKind::Constrained { positional_dim } = self.kind {
            if positional_dim == 0 || positional_dim >= self.dim {
                return Err(Error::Dimension(format!(
                    "constrained model needs 0 < D' < D, got D'={positional_dim}, D={}",
                    self.dim
                )));
            }
        }
        self.subword_index().validate()
    }
}

/// Unigram distribution raised to [`NEGATIVE_POWER`].
#[derive(Clone, Debug)]
pub struct NegativeTable {
    probs: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl NegativeTable {
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.alias.sample(rng) as u32
    }
}

pub fn build_negative_table(vocab: &Vocab) -> Result<NegativeTable> {
    if vocab.is_empty() {
        return Err(Error::EmptyVocab);
    }
    let weights: Vec<f64> = vocab
        .entries()
        .iter()
        .map(|e| (e.count as f64).powf(NEGATIVE_POWER))
        .collect();
    let total: f64 = weights.iter().sum();
    let probs = weights.iter().map(|w| w / total).collect();
    let alias = WeightedAliasIndex::new(weights)
        .map_err(|e| Error::InvalidInput(format!("negative table: {e}")))?;
    Ok(NegativeTable { probs, alias })
}

/// Linearly decayed learning rate after `t` of `total` tokens.
pub fn lr_at(t: u64, total: u64, lr0: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    lr0 * (1.0 - t as f64 / total as f64).max(0.0)
}

/// Reusable buffers for [`train_step_with`].
#[derive(Clone, Debug, Default)]
pub struct StepScratch<F> {
    hidden: Vec<F>,
    grad: Vec<F>,
    heads: Vec<F>,
    head_update: Vec<F>,
    tail_update: Vec<F>,
    alphas: Vec<F>,
}

/// One SGD step on `−ln Pr(target | context)`; returns the loss before the
/// update.
pub fn train_step<F: Real>(
    params: &mut ModelParams<F>,
    slots: &[ContextSlot],
    target: u32,
    negatives: &[u32],
    lr: F,
) -> Result<F> {
    params.check_window(slots)?;
    params.check_word(target)?;
    for &n in negatives {
        params.check_word(n)?;
        if n == target {
            return Err(Error::InvalidInput("target word among negatives".into()));
        }
    }
    train_step_with(params, slots, target, negatives, lr, &mut StepScratch::default(), None)
}

/// Unchecked [`train_step`] with caller-provided buffers.
///
/// Every update is computed from parameter values read before the step, so
/// the change of each parameter equals `−lr` times its gradient even when a
/// row is shared by several context words.
pub fn train_step_with<F: Real>(
    params: &mut ModelParams<F>,
    slots: &[ContextSlot],
    target: u32,
    negatives: &[u32],
    lr: F,
    scratch: &mut StepScratch<F>,
    positional_lock: Option<&Mutex<()>>,
) -> Result<F> {
    let dim = params.dim();
    let dp = params.positional_dim();
    let m = slots.len();
    scratch.hidden.resize(dim, F::zero());
    scratch.grad.resize(dim, F::zero());
    scratch.heads.resize(m * dp, F::zero());
    scratch.head_update.resize(dp, F::zero());
    scratch.tail_update.resize(dim - dp, F::zero());

    params.context_vector_into(slots, &mut scratch.hidden, &mut scratch.heads);
    let h = &scratch.hidden;
    let e = &mut scratch.grad;
    e.fill(F::zero());

    let mut loss = F::zero();
    let outputs = std::iter::once((target, true)).chain(negatives.iter().map(|&n| (n, false)));
    scratch.alphas.clear();
    for (word, positive) in outputs {
        let v = params.output.row(word as usize);
        let s = dot(h, v);
        // g = −∂loss/∂s
        let g = if positive {
            loss = loss + softplus(-s);
            F::one() - sigmoid(s)
        } else {
            loss = loss + softplus(s);
            -sigmoid(s)
        };
        let alpha = lr * g;
        add_scaled(e, v, alpha);
        scratch.alphas.push(alpha);
    }
    // a negative drawn twice must not see its own first update
    for (&word, &alpha) in std::iter::once(&target).chain(negatives).zip(&scratch.alphas) {
        add_scaled(params.output.row_mut(word as usize), h, alpha);
    }
    if !loss.is_finite() || !e.iter().all(|x| x.is_finite()) {
        return Err(Error::NumericFailure(format!(
            "non-finite loss or gradient (loss = {:?})",
            loss
        )));
    }

    let scale = F::one() / F::from_f64(m as f64);
    scratch
        .tail_update
        .iter_mut()
        .zip(&e[dp..])
        .for_each(|(t, &x)| *t = x * scale);
    for (i, slot) in slots.iter().enumerate() {
        if dp > 0 {
            let row = params.position_row(slot.position).expect("valid position");
            let head = &scratch.heads[i * dp..(i + 1) * dp];
            let positional = params.positional.as_mut().expect("positional model");
            let d = positional.row_mut(row);
            scratch
                .head_update
                .iter_mut()
                .zip(e[..dp].iter().zip(d.iter()))
                .for_each(|(out, (&x, &w))| *out = x * w * scale);
            let _guard = positional_lock.map(|l| l.lock().unwrap_or_else(|p| p.into_inner()));
            d.iter_mut()
                .zip(e[..dp].iter().zip(head))
                .for_each(|(w, (&x, &u))| *w = *w + x * u * scale);
        }
        for &g in slot.rows {
            let row = params.input.row_mut(g as usize);
            let (row_head, row_tail) = row.split_at_mut(dp);
            crate::matrix::add_assign(row_head, &scratch.head_update);
            crate::matrix::add_assign(row_tail, &scratch.tail_update);
        }
    }
    Ok(loss)
}

/// Mean training loss per percent of progress, plus timing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub kind: ModelKind,
    pub threads: usize,
    pub epochs: usize,
    /// Raw corpus tokens per epoch.
    pub corpus_tokens: u64,
    pub steps: u64,
    pub mean_loss: f64,
    /// Mean loss of the steps falling into each percent of progress.
    pub progress_loss: Vec<Option<f64>>,
    pub wall_clock_seconds: f64,
    /// Time spent initializing the parameters, not included above.
    pub init_seconds: f64,
}

impl TrainingLog {
    /// Mean loss over one tenth of the run (`decile` in `0..10`), weighting
    /// buckets by their step counts.
    pub fn decile_mean(&self, decile: usize) -> Option<f64> {
        let per = LOG_BUCKETS / 10;
        let buckets = &self.progress_loss[decile * per..(decile + 1) * per];
        let vals: Vec<f64> = buckets.iter().flatten().copied().collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Output of [`train`].
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub params: ModelParams<f32>,
    pub vocab: Vocab,
    pub subwords: SubwordIndex,
    pub config: TrainConfig,
    /// Raw corpus tokens per epoch.
    pub corpus_tokens: u64,
    pub log: TrainingLog,
}

struct Hogwild<T>(UnsafeCell<T>);

// SAFETY: workers deliberately race on the wrapped parameters; see module docs.
unsafe impl<T: Send> Sync for Hogwild<T> {}

impl<T> Hogwild<T> {
    /// # Safety
    /// Callers accept unsynchronized concurrent mutation of the value.
    #[allow(clippy::mut_from_ref)]
    unsafe fn get(&self) -> &mut T {
        &mut *self.0.get()
    }
}

#[derive(Clone)]
struct LossBuckets {
    sum: Vec<f64>,
    count: Vec<u64>,
}

impl LossBuckets {
    fn new() -> Self {
        LossBuckets {
            sum: vec![0.0; LOG_BUCKETS],
            count: vec![0; LOG_BUCKETS],
        }
    }

    fn merge(&mut self, other: &LossBuckets) {
        for i in 0..LOG_BUCKETS {
            self.sum[i] += other.sum[i];
            self.count[i] += other.count[i];
        }
    }
}

/// Trains a model of `config.kind` on an encoded corpus.
pub fn train(corpus: &EncodedCorpus, vocab: Vocab, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if vocab.is_empty() {
        return Err(Error::EmptyVocab);
    }
    let subwords = config.subword_index();
    let table = SubwordTable::new(&vocab, &subwords)?;
    let negatives = build_negative_table(&vocab)?;
    let discard = discard_table(&vocab, config.sample);

    let init_start = Instant::now();
    let dims = Dims {
        vocab_size: vocab.len(),
        buckets: config.buckets,
        dim: config.dim,
        window: config.window,
    };
    let params = init_model(config.kind, config.init, dims, config.seed)?;
    let init_seconds = init_start.elapsed().as_secs_f64();

    let total = corpus.raw_tokens() * config.epochs as u64;
    let progress = AtomicU64::new(0);
    let abort = AtomicBool::new(false);
    let lock = Mutex::new(());
    let shared = Hogwild(UnsafeCell::new(params));
    let shards = corpus.shards(config.threads);

    let start = Instant::now();
    let worker = |id: usize| -> Result<(LossBuckets, u64)> {
        // SAFETY: HogWild contract, see module docs.
        let params = unsafe { shared.get() };
        let mut ctx = Worker {
            params,
            table: &table,
            negatives: &negatives,
            discard: &discard,
            config,
            rng: {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(id as u64 + 1);
                rng
            },
            lock: config.positional_lock.then_some(&lock),
            total,
            buckets: LossBuckets::new(),
            steps: 0,
            scratch: StepScratch::default(),
            kept: Vec::new(),
            negs: Vec::with_capacity(config.negatives),
        };
        for _ in 0..config.epochs {
            for (doc, raw) in corpus.documents_in(shards[id].clone()) {
                if abort.load(Ordering::Relaxed) {
                    return Ok((ctx.buckets, ctx.steps));
                }
                let base = progress.load(Ordering::Relaxed);
                if let Err(e) = ctx.document(doc, raw, base) {
                    abort.store(true, Ordering::Relaxed);
                    return Err(e);
                }
                progress.fetch_add(raw, Ordering::Relaxed);
            }
        }
        Ok((ctx.buckets, ctx.steps))
    };

    let results: Vec<Result<(LossBuckets, u64)>> = if config.threads == 1 {
        vec![worker(0)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..config.threads)
                .map(|id| {
                    let worker = &worker;
                    s.spawn(move || worker(id))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training worker panicked"))
                .collect()
        })
    };
    let wall_clock_seconds = start.elapsed().as_secs_f64();

    let mut buckets = LossBuckets::new();
    let mut steps = 0;
    for r in results {
        let (b, n) = r?;
        buckets.merge(&b);
        steps += n;
    }
    let params = shared.0.into_inner();
    if !params.is_finite() {
        return Err(Error::NumericFailure("parameters became non-finite".into()));
    }
    let loss_sum: f64 = buckets.sum.iter().sum();
    let log = TrainingLog {
        kind: config.kind,
        threads: config.threads,
        epochs: config.epochs,
        corpus_tokens: corpus.raw_tokens(),
        steps,
        mean_loss: if steps > 0 { loss_sum / steps as f64 } else { f64::NAN },
        progress_loss: buckets
            .sum
            .iter()
            .zip(&buckets.count)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect(),
        wall_clock_seconds,
        init_seconds,
    };
    Ok(TrainedModel {
        params,
        vocab,
        subwords,
        config: config.clone(),
        corpus_tokens: corpus.raw_tokens(),
        log,
    })
}

/// Builds the vocabulary from `text` (one document per line) and trains.
pub fn train_text(text: &str, config: &TrainConfig) -> Result<TrainedModel> {
    let vocab = crate::corpus::build_vocab(
        text.lines().flat_map(crate::corpus::tokenize),
        config.min_count,
    )?;
    let corpus = EncodedCorpus::from_text(text, &vocab);
    train(&corpus, vocab, config)
}

/// Streams a text file twice, once for the vocabulary and once to encode it.
pub fn train_file(path: &std::path::Path, config: &TrainConfig) -> Result<TrainedModel> {
    let vocab = crate::corpus::build_vocab_from_file(path, config.min_count)?;
    let corpus = EncodedCorpus::from_file(path, &vocab)?;
    train(&corpus, vocab, config)
}

struct Worker<'a> {
    params: &'a mut ModelParams<f32>,
    table: &'a SubwordTable,
    negatives: &'a NegativeTable,
    discard: &'a [f64],
    config: &'a TrainConfig,
    rng: ChaCha8Rng,
    lock: Option<&'a Mutex<()>>,
    total: u64,
    buckets: LossBuckets,
    steps: u64,
    scratch: StepScratch<f32>,
    kept: Vec<u32>,
    negs: Vec<u32>,
}

impl Worker<'_> {
    fn document(&mut self, doc: &[u32], raw: u64, base: u64) -> Result<()> {
        self.kept.clear();
        for &id in doc {
            if keep(self.discard, id, &mut self.rng) {
                self.kept.push(id);
            }
        }
        let c = self.config.window;
        let len = self.kept.len();
        let mut slots: Vec<ContextSlot> = Vec::with_capacity(2 * c);
        for t in 0..len {
            let done = base + raw * t as u64 / len as u64;
            let lr = lr_at(done, self.total, self.config.lr) as f32;
            let half = match self.config.window_mode {
                WindowMode::Fixed => c,
                WindowMode::UniformShrink => self.rng.random_range(1..=c),
            };
            slots.clear();
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(len - 1);
            for i in lo..=hi {
                if i != t {
                    slots.push(ContextSlot {
                        position: i as i32 - t as i32,
                        rows: self.table.rows(self.kept[i]),
                    });
                }
            }
            if slots.is_empty() {
                continue;
            }
            let target = self.kept[t];
            self.negs.clear();
            for _ in 0..self.config.negatives {
                for _ in 0..MAX_NEGATIVE_RETRIES {
                    let n = self.negatives.sample(&mut self.rng);
                    if n != target {
                        self.negs.push(n);
                        break;
                    }
                }
            }
            let loss = train_step_with(
                self.params,
                &slots,
                target,
                &self.negs,
                lr,
                &mut self.scratch,
                self.lock,
            )?;
            let bucket = ((done as u128 * LOG_BUCKETS as u128 / self.total.max(1) as u128) as usize)
                .min(LOG_BUCKETS - 1);
            self.buckets.sum[bucket] += loss as f64;
            self.buckets.count[bucket] += 1;
            self.steps += 1;
        }
        Ok(())
    }
}
