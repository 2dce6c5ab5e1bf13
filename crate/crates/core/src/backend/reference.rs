//! Self-contained trainable backend.
//!
//! Text is mapped to hashed word and character-trigram features, then
//! linearly projected to a `dim`-dimensional embedding shared by every head:
//!
//! * class head: linear layer over the embedding, softmax over classes;
//! * pair head: linear layer over `[u; v; |u − v|; u ⊙ v]`, softmax over
//!   (entail, contradict);
//! * embedding: the projection itself, compared by cosine;
//! * decoder: `h_t = tanh(A·z + b + E[prev] + P[t])`, softmax over the
//!   closed vocabulary, where `z` is the pair feature vector of the input
//!   (a single text is paired with itself).
//!
//! All parameters are `f64` and every gradient is derived by hand.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureHasher, SparseFeatures};
use super::optim::OptState;
use super::optim::Optimizer;
use super::{
    Backend, Capabilities, Embedding, Generation, LossPoint, LossTrace, PairScores, TextInput,
    TrainConfig, Trainable, Vocabulary,
};
use crate::corpus::{tokenize, PatternClass};
use crate::math::{self, argmax, dot, softmax};
use crate::strategies::{InstanceKind, NliLabel, Target, TrainingInstance};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceConfig {
    pub feature_bits: u32,
    pub dim: usize,
    pub hidden: usize,
    /// Half-width of the uniform initialization of the projection.
    pub init_scale: f64,
    /// Multipliers applied to profile learning rates, per optimizer.
    /// Profiles are tuned for fine-tuning pretrained encoders; this model
    /// starts from scratch.
    pub adamw_lr_scale: f64,
    pub adafactor_lr_scale: f64,
}

impl ReferenceConfig {
    pub fn lr_scale(&self, optimizer: Optimizer) -> f64 {
        match optimizer {
            Optimizer::AdamW => self.adamw_lr_scale,
            Optimizer::Adafactor => self.adafactor_lr_scale,
        }
    }
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            feature_bits: 15,
            dim: 64,
            hidden: 64,
            init_scale: 0.5,
            adamw_lr_scale: 100.0,
            adafactor_lr_scale: 5.0,
        }
    }
}

const CLS_W: usize = 0;
const CLS_B: usize = 1;
const PAIR_W: usize = 2;
const PAIR_B: usize = 3;
const DEC_IN: usize = 4;
const DEC_B: usize = 5;
const DEC_TOK: usize = 6;
const DEC_POS: usize = 7;
const DEC_OUT: usize = 8;
const DEC_OUT_B: usize = 9;

/// Names of the dense parameter blocks, in storage order.
pub const DENSE_BLOCKS: [&str; 10] = [
    "cls_w",
    "cls_b",
    "pair_w",
    "pair_b",
    "dec_in",
    "dec_b",
    "dec_tok",
    "dec_pos",
    "dec_out",
    "dec_out_b",
];

/// Analytic gradient of one instance's loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// Same layout as [`DENSE_BLOCKS`].
    pub dense: Vec<Vec<f64>>,
    /// Projection columns touched by the instance.
    pub projection: BTreeMap<u32, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ReferenceBackend {
    config: ReferenceConfig,
    hasher: FeatureHasher,
    patterns: Vec<String>,
    vocab: Vocabulary,
    max_len: usize,
    /// Column-major `dim × 2^feature_bits`.
    proj: Vec<f64>,
    dense: Vec<Vec<f64>>,
    /// Sorted feature indices seen in training. Once non-empty, other
    /// features are dropped before projection, so unseen n-grams add no
    /// untrained noise to the embedding.
    known: Vec<u32>,
}

enum Encoded {
    Classify {
        x: usize,
        label: usize,
    },
    Pair {
        a: usize,
        b: usize,
        label: usize,
    },
    Similarity {
        a: usize,
        b: usize,
        target: f64,
    },
    Sequence {
        a: usize,
        b: Option<usize>,
        target: Vec<usize>,
    },
}

struct FeatureTable {
    rows: Vec<SparseFeatures>,
    index: BTreeMap<String, usize>,
}

impl FeatureTable {
    fn new() -> Self {
        FeatureTable {
            rows: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    fn intern(&mut self, featurize: &dyn Fn(&str) -> SparseFeatures, text: &str) -> usize {
        if let Some(&i) = self.index.get(text) {
            return i;
        }
        self.rows.push(featurize(text));
        self.index.insert(text.to_string(), self.rows.len() - 1);
        self.rows.len() - 1
    }
}

impl ReferenceBackend {
    /// A freshly initialized backend. Output heads start at zero, so class
    /// and pair outputs are uniform and the decoder is uniform over the
    /// vocabulary until trained.
    pub fn new(config: ReferenceConfig, classes: &[PatternClass], init_seed: u64) -> Result<Self> {
        let mut backend = Self::empty(config, classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let s = backend.config.init_scale;
        for w in &mut backend.proj {
            *w = rng.random_range(-s..s);
        }
        let a = 1.0 / math::sqrt((4 * backend.config.dim) as f64);
        for w in &mut backend.dense[DEC_IN] {
            *w = rng.random_range(-a..a);
        }
        for block in [DEC_TOK, DEC_POS] {
            for w in &mut backend.dense[block] {
                *w = rng.random_range(-0.1..0.1);
            }
        }
        Ok(backend)
    }

    /// Rebuilds a backend from stored parameters.
    pub fn from_parameters(
        config: ReferenceConfig,
        classes: &[PatternClass],
        projection: Vec<f64>,
        dense: Vec<Vec<f64>>,
        known: Vec<u32>,
    ) -> Result<Self> {
        let mut backend = Self::empty(config, classes)?;
        if projection.len() != backend.proj.len() {
            return Err(Error::Backend(format!(
                "projection has {} values, expected {}",
                projection.len(),
                backend.proj.len()
            )));
        }
        if dense.len() != backend.dense.len() {
            return Err(Error::Backend(format!(
                "expected {} dense blocks, got {}",
                backend.dense.len(),
                dense.len()
            )));
        }
        for (i, (have, want)) in dense.iter().zip(&backend.dense).enumerate() {
            if have.len() != want.len() {
                return Err(Error::Backend(format!(
                    "block {} has {} values, expected {}",
                    DENSE_BLOCKS[i],
                    have.len(),
                    want.len()
                )));
            }
        }
        if known.windows(2).any(|w| w[0] >= w[1])
            || known
                .last()
                .is_some_and(|&i| i as usize >= backend.hasher.dim())
        {
            return Err(Error::Backend(
                "known features must be sorted, unique and in range".into(),
            ));
        }
        backend.proj = projection;
        backend.dense = dense;
        backend.known = known;
        Ok(backend)
    }

    fn empty(config: ReferenceConfig, classes: &[PatternClass]) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidPatterns("no classes".into()));
        }
        if config.dim == 0 || config.hidden == 0 || !(1..=24).contains(&config.feature_bits) {
            return Err(Error::Backend(format!(
                "invalid reference config {config:?}"
            )));
        }
        let patterns: Vec<String> = classes.iter().map(|c| c.text.clone()).collect();
        let vocab = Vocabulary::from_patterns(&patterns);
        let max_len = patterns
            .iter()
            .map(|p| tokenize(p).len())
            .max()
            .unwrap_or(0)
            + 2;
        let hasher = FeatureHasher::new(config.feature_bits);
        let (d, h, v, c) = (config.dim, config.hidden, vocab.len(), classes.len());
        let sizes = [
            c * d,
            c,
            2 * 4 * d,
            2,
            h * 4 * d,
            h,
            v * h,
            max_len * h,
            v * h,
            v,
        ];
        Ok(ReferenceBackend {
            proj: vec![0.0; hasher.dim() * d],
            dense: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            config,
            hasher,
            patterns,
            vocab,
            max_len,
            known: Vec::new(),
        })
    }

    pub fn config(&self) -> &ReferenceConfig {
        &self.config
    }

    /// Decoding budget: longest pattern length plus two.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn projection(&self) -> &[f64] {
        &self.proj
    }

    pub fn dense_blocks(&self) -> &[Vec<f64>] {
        &self.dense
    }

    pub fn dense_block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let i = DENSE_BLOCKS.iter().position(|&n| n == name)?;
        Some(&mut self.dense[i])
    }

    pub fn projection_column_mut(&mut self, column: u32) -> &mut [f64] {
        let d = self.config.dim;
        &mut self.proj[column as usize * d..(column as usize + 1) * d]
    }

    /// Hashed features of `text`, restricted to known features once trained
    /// and rescaled to unit length.
    pub fn features(&self, text: &str) -> SparseFeatures {
        let mut x = self.hasher.features(text);
        if self.known.is_empty() {
            return x;
        }
        x.retain(|(i, _)| self.known.binary_search(i).is_ok());
        let norm = math::sqrt(x.iter().map(|(_, v)| v * v).sum());
        for (_, v) in &mut x {
            *v /= norm;
        }
        x
    }

    pub fn known_features(&self) -> &[u32] {
        &self.known
    }

    fn project(&self, x: &SparseFeatures) -> Vec<f64> {
        let d = self.config.dim;
        let mut e = vec![0.0; d];
        for &(j, xj) in x {
            let col = &self.proj[j as usize * d..(j as usize + 1) * d];
            for (ei, w) in e.iter_mut().zip(col) {
                *ei += w * xj;
            }
        }
        e
    }

    fn class_logits_of(&self, e: &[f64]) -> Vec<f64> {
        let d = self.config.dim;
        let (w, b) = (&self.dense[CLS_W], &self.dense[CLS_B]);
        (0..b.len())
            .map(|c| dot(&w[c * d..(c + 1) * d], e) + b[c])
            .collect()
    }

    fn pair_logits_of(&self, f: &[f64]) -> Vec<f64> {
        let n = f.len();
        let (w, b) = (&self.dense[PAIR_W], &self.dense[PAIR_B]);
        (0..2)
            .map(|k| dot(&w[k * n..(k + 1) * n], f) + b[k])
            .collect()
    }

    /// `A·z + b` for the decoder.
    fn decoder_base(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len();
        let (a, b) = (&self.dense[DEC_IN], &self.dense[DEC_B]);
        (0..self.config.hidden)
            .map(|i| dot(&a[i * n..(i + 1) * n], z) + b[i])
            .collect()
    }

    /// Hidden state and output distribution at one decoding step.
    fn decoder_step(&self, base: &[f64], prev: usize, step: usize) -> (Vec<f64>, Vec<f64>) {
        let h = self.config.hidden;
        let pos = step.min(self.max_len - 1);
        let tok = &self.dense[DEC_TOK][prev * h..(prev + 1) * h];
        let p = &self.dense[DEC_POS][pos * h..(pos + 1) * h];
        let hidden: Vec<f64> = (0..h)
            .map(|i| math::tanh(base[i] + tok[i] + p[i]))
            .collect();
        let (o, ob) = (&self.dense[DEC_OUT], &self.dense[DEC_OUT_B]);
        let logits: Vec<f64> = (0..self.vocab.len())
            .map(|v| dot(&o[v * h..(v + 1) * h], &hidden) + ob[v])
            .collect();
        (hidden, softmax(&logits))
    }

    fn input_context(&self, input: TextInput<'_>) -> Vec<f64> {
        match input {
            TextInput::Single(text) => {
                let e = self.project(&self.features(text));
                pair_features(&e, &e)
            }
            TextInput::Pair(a, b) => {
                let u = self.project(&self.features(a));
                let v = self.project(&self.features(b));
                pair_features(&u, &v)
            }
        }
    }

    fn encode(
        &self,
        table: &mut FeatureTable,
        featurize: &dyn Fn(&str) -> SparseFeatures,
        inst: &TrainingInstance,
    ) -> Result<Encoded> {
        let mismatch = || {
            Error::Backend(format!(
                "target {:?} does not fit instance kind {:?}",
                inst.target, inst.kind
            ))
        };
        let a = table.intern(featurize, &inst.input_a);
        Ok(match (inst.kind, &inst.target) {
            (InstanceKind::Classify, Target::Class(label)) => {
                if *label >= self.num_classes() {
                    return Err(Error::InvalidClass {
                        label: *label,
                        classes: self.num_classes(),
                    });
                }
                Encoded::Classify {
                    x: a,
                    label: *label,
                }
            }
            (InstanceKind::PairNli, Target::Nli(label)) => Encoded::Pair {
                a,
                b: table.intern(featurize, &inst.input_b),
                label: match label {
                    NliLabel::Entailment => 0,
                    NliLabel::Contradiction => 1,
                },
            },
            (InstanceKind::PairSim, Target::Similarity(bit)) => Encoded::Similarity {
                a,
                b: table.intern(featurize, &inst.input_b),
                target: f64::from(*bit),
            },
            (InstanceKind::Seq2SeqSim, Target::Token(token)) => Encoded::Sequence {
                a,
                b: Some(table.intern(featurize, &inst.input_b)),
                target: self.vocab.encode_target(token)?,
            },
            (InstanceKind::Seq2SeqGen, Target::Sequence(tokens)) => Encoded::Sequence {
                a,
                b: None,
                target: self.vocab.encode_target(&tokens.join(" "))?,
            },
            _ => return Err(mismatch()),
        })
    }

    /// Loss of a single instance under the current parameters.
    pub fn loss(&self, inst: &TrainingInstance) -> Result<f64> {
        let mut table = FeatureTable::new();
        let enc = self.encode(&mut table, &|t| self.features(t), inst)?;
        Ok(self.loss_grad(&table.rows, &enc, None, 1.0))
    }

    /// Analytic gradient of [`ReferenceBackend::loss`].
    pub fn gradient(&self, inst: &TrainingInstance) -> Result<Gradient> {
        let mut table = FeatureTable::new();
        let enc = self.encode(&mut table, &|t| self.features(t), inst)?;
        let mut grad = self.zero_gradient();
        self.loss_grad(&table.rows, &enc, Some(&mut grad), 1.0);
        Ok(grad)
    }

    fn zero_gradient(&self) -> Gradient {
        Gradient {
            dense: self.dense.iter().map(|b| vec![0.0; b.len()]).collect(),
            projection: BTreeMap::new(),
        }
    }

    fn backprop_projection(&self, grad: &mut Gradient, x: &SparseFeatures, de: &[f64]) {
        for &(j, xj) in x {
            let col = grad
                .projection
                .entry(j)
                .or_insert_with(|| vec![0.0; de.len()]);
            for (c, g) in col.iter_mut().zip(de) {
                *c += g * xj;
            }
        }
    }

    /// Loss of one encoded instance; when `grad` is given, adds
    /// `scale × ∂loss/∂θ` into it.
    fn loss_grad(
        &self,
        rows: &[SparseFeatures],
        enc: &Encoded,
        grad: Option<&mut Gradient>,
        scale: f64,
    ) -> f64 {
        let d = self.config.dim;
        match enc {
            Encoded::Classify { x, label } => {
                let e = self.project(&rows[*x]);
                let p = softmax(&self.class_logits_of(&e));
                let loss = -math::ln(p[*label]);
                if let Some(grad) = grad {
                    let mut de = vec![0.0; d];
                    for (c, pc) in p.iter().enumerate() {
                        let dl = scale * (pc - if c == *label { 1.0 } else { 0.0 });
                        let w = &self.dense[CLS_W][c * d..(c + 1) * d];
                        for i in 0..d {
                            grad.dense[CLS_W][c * d + i] += dl * e[i];
                            de[i] += dl * w[i];
                        }
                        grad.dense[CLS_B][c] += dl;
                    }
                    self.backprop_projection(grad, &rows[*x], &de);
                }
                loss
            }
            Encoded::Pair { a, b, label } => {
                let u = self.project(&rows[*a]);
                let v = self.project(&rows[*b]);
                let f = pair_features(&u, &v);
                let p = softmax(&self.pair_logits_of(&f));
                let loss = -math::ln(p[*label]);
                if let Some(grad) = grad {
                    let n = f.len();
                    let mut df = vec![0.0; n];
                    for (k, pk) in p.iter().enumerate() {
                        let dl = scale * (pk - if k == *label { 1.0 } else { 0.0 });
                        let w = &self.dense[PAIR_W][k * n..(k + 1) * n];
                        for i in 0..n {
                            grad.dense[PAIR_W][k * n + i] += dl * f[i];
                            df[i] += dl * w[i];
                        }
                        grad.dense[PAIR_B][k] += dl;
                    }
                    let (du, dv) = pair_features_backward(&u, &v, &df);
                    self.backprop_projection(grad, &rows[*a], &du);
                    self.backprop_projection(grad, &rows[*b], &dv);
                }
                loss
            }
            Encoded::Similarity { a, b, target } => {
                let u = self.project(&rows[*a]);
                let v = self.project(&rows[*b]);
                let (nu, nv) = (math::norm(&u), math::norm(&v));
                if nu == 0.0 || nv == 0.0 {
                    // Degenerate pair: cosine treated as 0 with no gradient.
                    return target * target;
                }
                let cos = dot(&u, &v) / (nu * nv);
                let loss = (cos - target) * (cos - target);
                if let Some(grad) = grad {
                    let dc = scale * 2.0 * (cos - target);
                    let du: Vec<f64> = (0..d)
                        .map(|i| dc * (v[i] / (nu * nv) - cos * u[i] / (nu * nu)))
                        .collect();
                    let dv: Vec<f64> = (0..d)
                        .map(|i| dc * (u[i] / (nu * nv) - cos * v[i] / (nv * nv)))
                        .collect();
                    self.backprop_projection(grad, &rows[*a], &du);
                    self.backprop_projection(grad, &rows[*b], &dv);
                }
                loss
            }
            Encoded::Sequence { a, b, target } => {
                let u = self.project(&rows[*a]);
                let v = match b {
                    Some(b) => self.project(&rows[*b]),
                    None => u.clone(),
                };
                let z = pair_features(&u, &v);
                let base = self.decoder_base(&z);
                let h = self.config.hidden;
                let steps = target.len() as f64;
                let mut loss = 0.0;
                let mut grad = grad;
                let mut dbase = vec![0.0; h];
                let mut prev = self.vocab.bos();
                for (t, &want) in target.iter().enumerate() {
                    let (hidden, p) = self.decoder_step(&base, prev, t);
                    loss -= math::ln(p[want]) / steps;
                    if let Some(grad) = grad.as_deref_mut() {
                        let mut dh = vec![0.0; h];
                        for (k, pk) in p.iter().enumerate() {
                            let dl = scale * (pk - if k == want { 1.0 } else { 0.0 }) / steps;
                            let o = &self.dense[DEC_OUT][k * h..(k + 1) * h];
                            for i in 0..h {
                                grad.dense[DEC_OUT][k * h + i] += dl * hidden[i];
                                dh[i] += dl * o[i];
                            }
                            grad.dense[DEC_OUT_B][k] += dl;
                        }
                        let pos = t.min(self.max_len - 1);
                        for i in 0..h {
                            let dpre = dh[i] * (1.0 - hidden[i] * hidden[i]);
                            grad.dense[DEC_TOK][prev * h + i] += dpre;
                            grad.dense[DEC_POS][pos * h + i] += dpre;
                            dbase[i] += dpre;
                        }
                    }
                    prev = want;
                }
                if let Some(grad) = grad {
                    let n = z.len();
                    let mut dz = vec![0.0; n];
                    for (i, &d) in dbase.iter().enumerate() {
                        grad.dense[DEC_B][i] += d;
                        let row = &self.dense[DEC_IN][i * n..(i + 1) * n];
                        for j in 0..n {
                            grad.dense[DEC_IN][i * n + j] += d * z[j];
                            dz[j] += d * row[j];
                        }
                    }
                    let (du, dv) = pair_features_backward(&u, &v, &dz);
                    match b {
                        Some(b) => {
                            self.backprop_projection(grad, &rows[*a], &du);
                            self.backprop_projection(grad, &rows[*b], &dv);
                        }
                        None => {
                            let de: Vec<f64> = du.iter().zip(&dv).map(|(x, y)| x + y).collect();
                            self.backprop_projection(grad, &rows[*a], &de);
                        }
                    }
                }
                loss
            }
        }
    }
}

/// `[u; v; |u − v|; u ⊙ v]`.
fn pair_features(u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut f = Vec::with_capacity(4 * u.len());
    f.extend_from_slice(u);
    f.extend_from_slice(v);
    f.extend(u.iter().zip(v).map(|(a, b)| math::abs(a - b)));
    f.extend(u.iter().zip(v).map(|(a, b)| a * b));
    f
}

fn pair_features_backward(u: &[f64], v: &[f64], df: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = u.len();
    let mut du = vec![0.0; d];
    let mut dv = vec![0.0; d];
    for i in 0..d {
        let diff = u[i] - v[i];
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        du[i] = df[i] + sign * df[2 * d + i] + v[i] * df[3 * d + i];
        dv[i] = df[d + i] - sign * df[2 * d + i] + u[i] * df[3 * d + i];
    }
    (du, dv)
}

impl Backend for ReferenceBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn num_classes(&self) -> usize {
        self.patterns.len()
    }

    fn vocabulary(&self) -> Option<&Vocabulary> {
        Some(&self.vocab)
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        Embedding::new(self.project(&self.features(text)))
    }

    fn class_logits(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.class_logits_of(&self.project(&self.features(text))))
    }

    fn pair_scores(&self, premise: &str, hypothesis: &str) -> Result<PairScores> {
        let u = self.project(&self.features(premise));
        let v = self.project(&self.features(hypothesis));
        let p = softmax(&self.pair_logits_of(&pair_features(&u, &v)));
        Ok(PairScores {
            entail: p[0],
            contradict: p[1],
        })
    }

    fn generate_greedy(&self, input: TextInput<'_>, max_len: usize) -> Result<Generation> {
        if max_len == 0 {
            return Err(Error::InvalidMaxLen);
        }
        let base = self.decoder_base(&self.input_context(input));
        let mut out = Generation {
            tokens: Vec::new(),
            step_probs: Vec::new(),
        };
        let mut prev = self.vocab.bos();
        for step in 0..max_len {
            let (_, p) = self.decoder_step(&base, prev, step);
            let next = argmax(&p);
            out.step_probs.push(p);
            if next == self.vocab.eos() {
                break;
            }
            out.tokens.push(self.vocab.token(next).to_string());
            prev = next;
        }
        Ok(out)
    }
}

impl Trainable for ReferenceBackend {
    /// Mini-batch training in an order shuffled per epoch by a generator
    /// seeded with `cfg.init_seed`. Each trace point is the mean loss of one
    /// batch and the learning rate actually applied.
    fn train(&mut self, instances: &[TrainingInstance], cfg: &TrainConfig) -> Result<LossTrace> {
        cfg.validate()?;
        if instances.is_empty() {
            return Err(Error::EmptyInstances);
        }
        for inst in instances {
            let capability = inst.kind.capability();
            if !self.capabilities().supports(capability) {
                return Err(Error::MissingCapability {
                    strategy: inst.kind.strategy().to_string(),
                    capability,
                });
            }
        }
        let mut table = FeatureTable::new();
        let hasher = self.hasher;
        let raw = |t: &str| hasher.features(t);
        let encoded = instances
            .iter()
            .map(|i| self.encode(&mut table, &raw, i))
            .collect::<Result<Vec<_>>>()?;
        self.known
            .extend(table.rows.iter().flatten().map(|&(i, _)| i));
        self.known.sort_unstable();
        self.known.dedup();

        let per_epoch = cfg.steps_per_epoch(encoded.len());
        let total = per_epoch * cfg.epochs;
        let sizes: Vec<usize> = self.dense.iter().map(Vec::len).collect();
        let mut opt = OptState::new(cfg.optimizer, &sizes, self.proj.len(), self.config.dim);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        let mut trace = LossTrace::default();
        let mut step = 0;

        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let mut grad = self.zero_gradient();
                let scale = 1.0 / batch.len() as f64;
                let mut loss = 0.0;
                for &i in batch {
                    loss +=
                        scale * self.loss_grad(&table.rows, &encoded[i], Some(&mut grad), scale);
                }
                let lr = cfg.lr_at(step, total) * self.config.lr_scale(cfg.optimizer);
                opt.begin_step();
                for (block, (params, g)) in self.dense.iter_mut().zip(&grad.dense).enumerate() {
                    opt.update_dense(block, params, g, lr);
                }
                opt.update_proj(&mut self.proj, &grad.projection, self.config.dim, lr);
                trace.points.push(LossPoint {
                    step,
                    epoch,
                    lr,
                    loss,
                });
                step += 1;
            }
        }
        Ok(trace)
    }
}
