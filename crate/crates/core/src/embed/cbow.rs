//! Continuous bag-of-words training with negative sampling.
//!
//! For a target word with context `C`, the hidden vector is the mean of the
//! context input vectors, `h = (1/|C|) Σ v_c`, and the per-example loss is
//!
//! ```text
//! L = -log σ(u_t·h) - Σ_j log σ(-u_j·h)
//! ```
//!
//! over the target output vector `u_t` and `k` sampled noise output vectors
//! `u_j`. Updates are the exact stochastic gradient of `L`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::corpus::{build_vocabulary, Vocabulary};
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// CBOW hyperparameters. Defaults follow the word2vec package: negative
/// sampling with 5 noise words, 5 epochs, learning rate 0.025 decayed
/// linearly to `0.025e-4`, subsampling threshold `1e-3`, noise power 0.75.
/// Dimension 300, window 10 and min count 2 are the triple-scoring settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbowConfig {
    pub dim: usize,
    pub window: usize,
    pub min_count: u64,
    pub negatives: usize,
    pub epochs: usize,
    pub alpha: f64,
    pub sample: f64,
    pub noise_power: f64,
    pub seed: u64,
    /// Shrink the window uniformly in `1..=window` per position.
    pub dynamic_window: bool,
    /// More than one thread enables lock-free parallel updates (non-deterministic).
    pub threads: usize,
}

impl Default for CbowConfig {
    fn default() -> Self {
        Self {
            dim: 300,
            window: 10,
            min_count: 2,
            negatives: 5,
            epochs: 5,
            alpha: 0.025,
            sample: 1e-3,
            noise_power: 0.75,
            seed: 1,
            dynamic_window: false,
            threads: 1,
        }
    }
}

impl CbowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 || self.epochs == 0 || self.min_count == 0 {
            return Err(Error::invalid("dim, window, negatives, epochs and min_count must be >= 1"));
        }
        if !(self.alpha > 0.0) || !(self.sample >= 0.0) || !self.noise_power.is_finite() {
            return Err(Error::invalid("alpha must be > 0, sample >= 0, noise_power finite"));
        }
        Ok(())
    }
}

/// Noise distribution `P(i) ∝ count_i^power`, stored as a cumulative table.
#[derive(Debug, Clone)]
pub struct NoiseDistribution {
    cumulative: Vec<f64>,
}

impl NoiseDistribution {
    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn probability(&self, i: usize) -> f64 {
        let prev = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        self.cumulative[i] - prev
    }

    /// Index drawn for a uniform variate `u ∈ [0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.cumulative.len() - 1)
    }
}

pub fn build_noise_distribution(vocab: &Vocabulary, power: f64) -> Result<NoiseDistribution> {
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let weights: Vec<f64> = vocab.counts().iter().map(|&c| (c as f64).powf(power)).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut cumulative: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect();
    *cumulative.last_mut().expect("non-empty") = 1.0;
    Ok(NoiseDistribution { cumulative })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub context: Vec<usize>,
    pub target: usize,
}

/// CBOW examples for one sentence. Out-of-vocabulary tokens are removed first;
/// each position takes up to `window` tokens on either side as context.
pub fn generate_training_examples<S: AsRef<str>>(
    sentence: &[S],
    window: usize,
    vocab: &Vocabulary,
) -> Vec<TrainingExample> {
    let ids = vocab.encode(sentence);
    (0..ids.len())
        .filter_map(|pos| {
            let context = context_of(&ids, pos, window);
            (!context.is_empty()).then(|| TrainingExample { context, target: ids[pos] })
        })
        .collect()
}

fn context_of(ids: &[usize], pos: usize, window: usize) -> Vec<usize> {
    let lo = pos.saturating_sub(window);
    let hi = (pos + window + 1).min(ids.len());
    ids[lo..pos].iter().chain(&ids[pos + 1..hi]).copied().collect()
}

/// `-log σ(x)`, computed without overflow.
fn neg_log_sigmoid<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn mean_of<T: Scalar>(vectors: &[&[T]]) -> Vec<T> {
    let d = vectors[0].len();
    let mut h = vec![T::zero(); d];
    for v in vectors {
        for (a, &x) in h.iter_mut().zip(*v) {
            *a += x;
        }
    }
    let n = T::from_usize_lossy(vectors.len());
    h.iter_mut().for_each(|a| *a /= n);
    h
}

pub fn cbow_loss<T: Scalar>(context: &[&[T]], target: &[T], negatives: &[&[T]]) -> T {
    let h = mean_of(context);
    let mut loss = neg_log_sigmoid(dot(target, &h));
    for u in negatives {
        loss += neg_log_sigmoid(-dot(u, &h));
    }
    loss
}

/// Gradients of [`cbow_loss`]. Every context vector receives the same gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct CbowGradients<T> {
    pub context: Vec<T>,
    pub target: Vec<T>,
    pub negatives: Vec<Vec<T>>,
}

pub fn cbow_loss_and_gradients<T: Scalar>(
    context: &[&[T]],
    target: &[T],
    negatives: &[&[T]],
) -> (T, CbowGradients<T>) {
    let h = mean_of(context);
    let d = h.len();
    let inv_c = T::one() / T::from_usize_lossy(context.len());

    let st = dot(target, &h);
    let mut loss = neg_log_sigmoid(st);
    let coef_t = sigmoid(st) - T::one();
    let mut grad_h: Vec<T> = target.iter().map(|&u| coef_t * u).collect();
    let grad_target: Vec<T> = h.iter().map(|&x| coef_t * x).collect();

    let mut grad_negs = Vec::with_capacity(negatives.len());
    for u in negatives {
        let s = dot(u, &h);
        loss += neg_log_sigmoid(-s);
        let coef = sigmoid(s);
        for (g, &x) in grad_h.iter_mut().zip(*u) {
            *g += coef * x;
        }
        grad_negs.push(h.iter().map(|&x| coef * x).collect());
    }
    debug_assert_eq!(grad_h.len(), d);
    let grad_ctx = grad_h.into_iter().map(|g| g * inv_c).collect();
    (loss, CbowGradients { context: grad_ctx, target: grad_target, negatives: grad_negs })
}

/// Input and output vector storage touched by an SGD step.
trait Params<T> {
    fn dim(&self) -> usize;
    fn read_input(&self, i: usize, out: &mut [T]);
    fn read_output(&self, i: usize, out: &mut [T]);
    fn add_input(&mut self, i: usize, scale: T, delta: &[T]);
    fn add_output(&mut self, i: usize, scale: T, delta: &[T]);
}

/// Input and output matrices of a CBOW model, row-major `V×d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CbowModel<T> {
    pub dim: usize,
    pub input: Vec<T>,
    pub output: Vec<T>,
}

impl<T: Scalar> CbowModel<T> {
    /// Inputs uniform in `[-0.5/d, 0.5/d]`, outputs zero.
    pub fn init(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 0.5 / dim as f64;
        let input = (0..vocab_size * dim)
            .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
            .collect();
        Self { dim, input, output: vec![T::zero(); vocab_size * dim] }
    }

    pub fn input_row(&self, i: usize) -> &[T] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_row(&self, i: usize) -> &[T] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    pub fn loss(&self, context: &[usize], target: usize, negatives: &[usize]) -> T {
        let ctx: Vec<&[T]> = context.iter().map(|&c| self.input_row(c)).collect();
        let negs: Vec<&[T]> = negatives.iter().map(|&n| self.output_row(n)).collect();
        cbow_loss(&ctx, self.output_row(target), &negs)
    }

    /// One SGD step on one example with learning rate `lr`; returns the loss
    /// before the update.
    pub fn step(&mut self, context: &[usize], target: usize, negatives: &[usize], lr: T) -> T {
        let mut scratch = Scratch::new(self.dim);
        sgd_step(self, context, target, negatives, lr, &mut scratch)
    }
}

impl<T: Scalar> Params<T> for CbowModel<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn read_input(&self, i: usize, out: &mut [T]) {
        out.copy_from_slice(self.input_row(i));
    }
    fn read_output(&self, i: usize, out: &mut [T]) {
        out.copy_from_slice(self.output_row(i));
    }
    fn add_input(&mut self, i: usize, scale: T, delta: &[T]) {
        let d = self.dim;
        for (a, &x) in self.input[i * d..(i + 1) * d].iter_mut().zip(delta) {
            *a += scale * x;
        }
    }
    fn add_output(&mut self, i: usize, scale: T, delta: &[T]) {
        let d = self.dim;
        for (a, &x) in self.output[i * d..(i + 1) * d].iter_mut().zip(delta) {
            *a += scale * x;
        }
    }
}

/// Shared parameters for lock-free parallel training. Values are stored as
/// `f64` bit patterns; reads and writes are relaxed atomics, so concurrent
/// updates may overwrite each other.
struct AtomicParams {
    dim: usize,
    input: Vec<AtomicU64>,
    output: Vec<AtomicU64>,
}

impl AtomicParams {
    fn from_model<T: Scalar>(m: &CbowModel<T>) -> Self {
        let pack = |v: &[T]| v.iter().map(|x| AtomicU64::new(x.to_f64_lossless().to_bits())).collect();
        Self { dim: m.dim, input: pack(&m.input), output: pack(&m.output) }
    }

    fn into_model<T: Scalar>(self) -> CbowModel<T> {
        let unpack = |v: Vec<AtomicU64>| {
            v.into_iter().map(|a| T::from_f64_lossy(f64::from_bits(a.into_inner()))).collect()
        };
        CbowModel { dim: self.dim, input: unpack(self.input), output: unpack(self.output) }
    }
}

struct AtomicView<'a>(&'a AtomicParams);

fn atomic_read<T: Scalar>(cells: &[AtomicU64], out: &mut [T]) {
    for (o, c) in out.iter_mut().zip(cells) {
        *o = T::from_f64_lossy(f64::from_bits(c.load(Ordering::Relaxed)));
    }
}

fn atomic_add<T: Scalar>(cells: &[AtomicU64], scale: T, delta: &[T]) {
    let scale = scale.to_f64_lossless();
    for (c, &x) in cells.iter().zip(delta) {
        let cur = f64::from_bits(c.load(Ordering::Relaxed));
        c.store((cur + scale * x.to_f64_lossless()).to_bits(), Ordering::Relaxed);
    }
}

impl<T: Scalar> Params<T> for AtomicView<'_> {
    fn dim(&self) -> usize {
        self.0.dim
    }
    fn read_input(&self, i: usize, out: &mut [T]) {
        let d = self.0.dim;
        atomic_read(&self.0.input[i * d..(i + 1) * d], out);
    }
    fn read_output(&self, i: usize, out: &mut [T]) {
        let d = self.0.dim;
        atomic_read(&self.0.output[i * d..(i + 1) * d], out);
    }
    fn add_input(&mut self, i: usize, scale: T, delta: &[T]) {
        let d = self.0.dim;
        atomic_add(&self.0.input[i * d..(i + 1) * d], scale, delta);
    }
    fn add_output(&mut self, i: usize, scale: T, delta: &[T]) {
        let d = self.0.dim;
        atomic_add(&self.0.output[i * d..(i + 1) * d], scale, delta);
    }
}

struct Scratch<T> {
    ctx: Vec<Vec<T>>,
    target: Vec<T>,
    negs: Vec<Vec<T>>,
}

impl<T: Scalar> Scratch<T> {
    fn new(dim: usize) -> Self {
        Self { ctx: Vec::new(), target: vec![T::zero(); dim], negs: Vec::new() }
    }

    fn fill(rows: &mut Vec<Vec<T>>, n: usize, dim: usize) {
        rows.resize_with(n.max(rows.len()), || vec![T::zero(); dim]);
    }
}

fn sgd_step<T: Scalar, P: Params<T>>(
    params: &mut P,
    context: &[usize],
    target: usize,
    negatives: &[usize],
    lr: T,
    scratch: &mut Scratch<T>,
) -> T {
    let d = params.dim();
    Scratch::fill(&mut scratch.ctx, context.len(), d);
    Scratch::fill(&mut scratch.negs, negatives.len(), d);
    for (buf, &c) in scratch.ctx.iter_mut().zip(context) {
        params.read_input(c, buf);
    }
    params.read_output(target, &mut scratch.target);
    for (buf, &n) in scratch.negs.iter_mut().zip(negatives) {
        params.read_output(n, buf);
    }
    let ctx: Vec<&[T]> = scratch.ctx[..context.len()].iter().map(Vec::as_slice).collect();
    let negs: Vec<&[T]> = scratch.negs[..negatives.len()].iter().map(Vec::as_slice).collect();
    let (loss, g) = cbow_loss_and_gradients(&ctx, &scratch.target, &negs);
    params.add_output(target, -lr, &g.target);
    for (&n, gn) in negatives.iter().zip(&g.negatives) {
        params.add_output(n, -lr, gn);
    }
    for &c in context {
        params.add_input(c, -lr, &g.context);
    }
    loss
}

struct Schedule {
    alpha: f64,
    total_words: f64,
}

impl Schedule {
    fn rate(&self, processed: u64) -> f64 {
        let frac = 1.0 - processed as f64 / (self.total_words + 1.0);
        self.alpha * frac.max(1e-4)
    }
}

/// Per-sentence training shared by the sequential and parallel paths.
struct SentenceTrainer<'a> {
    vocab: &'a Vocabulary,
    noise: &'a NoiseDistribution,
    config: &'a CbowConfig,
    keep_prob: Vec<f64>,
}

impl<'a> SentenceTrainer<'a> {
    fn new(vocab: &'a Vocabulary, noise: &'a NoiseDistribution, config: &'a CbowConfig) -> Self {
        let total = vocab.total_tokens() as f64;
        let keep_prob = vocab
            .counts()
            .iter()
            .map(|&c| {
                let f = c as f64 / total;
                if config.sample > 0.0 && f > config.sample {
                    (config.sample / f).sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { vocab, noise, config, keep_prob }
    }

    /// Trains on one sentence; returns the number of in-vocabulary words read.
    fn train<T: Scalar, P: Params<T>, S: AsRef<str>>(
        &self,
        params: &mut P,
        sentence: &[S],
        rng: &mut ChaCha8Rng,
        lr: f64,
        scratch: &mut Scratch<T>,
    ) -> u64 {
        let ids = self.vocab.encode(sentence);
        let read = ids.len() as u64;
        let kept: Vec<usize> = ids
            .into_iter()
            .filter(|&w| {
                let p = self.keep_prob[w];
                p >= 1.0 || rng.gen::<f64>() < p
            })
            .collect();
        let lr = T::from_f64_lossy(lr);
        let mut negs = Vec::with_capacity(self.config.negatives);
        for pos in 0..kept.len() {
            let window = if self.config.dynamic_window {
                rng.gen_range(1..=self.config.window)
            } else {
                self.config.window
            };
            let context = context_of(&kept, pos, window);
            if context.is_empty() {
                continue;
            }
            let target = kept[pos];
            negs.clear();
            for _ in 0..self.config.negatives {
                let n = self.noise.sample_with(rng.gen::<f64>());
                if n != target {
                    negs.push(n);
                }
            }
            sgd_step(params, &context, target, &negs, lr, scratch);
        }
        read
    }
}

/// Builds the vocabulary with `config.min_count` and trains CBOW vectors.
///
/// `corpus` is called once for the vocabulary and once per epoch, so the
/// corpus can be streamed from disk. Returns the input-vector table.
pub fn train_cbow<T, F, I, S>(corpus: F, config: &CbowConfig) -> Result<EmbeddingTable<T>>
where
    T: Scalar,
    F: Fn() -> I,
    I: IntoIterator,
    I::Item: AsRef<[S]> + Send + Sync,
    S: AsRef<str> + Sync,
{
    config.validate()?;
    let vocab = build_vocabulary(corpus(), config.min_count)?;
    train_cbow_vocab(corpus, &vocab, config)
}

/// Trains CBOW vectors over a fixed vocabulary.
pub fn train_cbow_vocab<T, F, I, S>(corpus: F, vocab: &Vocabulary, config: &CbowConfig) -> Result<EmbeddingTable<T>>
where
    T: Scalar,
    F: Fn() -> I,
    I: IntoIterator,
    I::Item: AsRef<[S]> + Send + Sync,
    S: AsRef<str> + Sync,
{
    config.validate()?;
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let noise = build_noise_distribution(vocab, config.noise_power)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = CbowModel::<T>::init(vocab.len(), config.dim, &mut rng);
    let schedule = Schedule {
        alpha: config.alpha,
        total_words: (vocab.total_tokens() * config.epochs as u64) as f64,
    };
    let trainer = SentenceTrainer::new(vocab, &noise, config);

    let model = if config.threads <= 1 {
        let mut model = model;
        let mut scratch = Scratch::new(config.dim);
        let mut processed = 0u64;
        for _ in 0..config.epochs {
            for sentence in corpus() {
                let lr = schedule.rate(processed);
                processed += trainer.train(&mut model, sentence.as_ref(), &mut rng, lr, &mut scratch);
            }
        }
        model
    } else {
        train_parallel(corpus, &trainer, &schedule, AtomicParams::from_model(&model), config)
    };

    let mut data = model.input;
    data.truncate(vocab.len() * config.dim);
    EmbeddingTable::from_rows(vocab.tokens().to_vec(), config.dim, data)
}

const PARALLEL_BLOCK: usize = 4096;

fn train_parallel<T, F, I, S>(
    corpus: F,
    trainer: &SentenceTrainer<'_>,
    schedule: &Schedule,
    params: AtomicParams,
    config: &CbowConfig,
) -> CbowModel<T>
where
    T: Scalar,
    F: Fn() -> I,
    I: IntoIterator,
    I::Item: AsRef<[S]> + Send + Sync,
    S: AsRef<str> + Sync,
{
    let processed = AtomicU64::new(0);
    let mut block_id = 0u64;
    for _ in 0..config.epochs {
        let mut iter = corpus().into_iter();
        loop {
            let block: Vec<I::Item> = iter.by_ref().take(PARALLEL_BLOCK).collect();
            if block.is_empty() {
                break;
            }
            let per_thread = block.len().div_ceil(config.threads);
            std::thread::scope(|scope| {
                for (t, shard) in block.chunks(per_thread).enumerate() {
                    let params = &params;
                    let processed = &processed;
                    let seed = config.seed ^ (block_id << 16) ^ (t as u64 + 1);
                    scope.spawn(move || {
                        let mut view = AtomicView(params);
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        let mut scratch = Scratch::<T>::new(config.dim);
                        for sentence in shard {
                            let lr = schedule.rate(processed.load(Ordering::Relaxed));
                            let n = trainer.train(&mut view, sentence.as_ref(), &mut rng, lr, &mut scratch);
                            processed.fetch_add(n, Ordering::Relaxed);
                        }
                    });
                }
            });
            block_id += 1;
        }
    }
    params.into_model()
}
