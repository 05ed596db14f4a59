//! A deliberately small encoder-decoder with hand-written backpropagation.
//!
//! Encoder: token + position embeddings followed by one residual dot-product
//! self-attention layer. Decoder: at step `t` it embeds the previous target
//! token (or BOS) plus position `t`, attends over the encoder states, mixes
//! both through a tanh layer and projects to vocabulary logits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Positions at or beyond this share the last position embedding.
    pub max_len: usize,
    /// Standard deviation of embedding initialization.
    pub init_scale: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 32,
            max_len: 64,
            init_scale: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: &str, rows: usize, cols: usize) -> Self {
        Self {
            name: name.to_string(),
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x`
    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ · y`, accumulated into `out`.
    fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                axpy(yr, self.row(r), out);
            }
        }
    }

    /// `self += a ⊗ b`
    fn outer_acc(&mut self, a: &[f64], b: &[f64]) {
        for (r, &ar) in a.iter().enumerate() {
            if ar != 0.0 {
                axpy(ar, b, self.row_mut(r));
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Parameter slots, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Param {
    EncTok,
    EncPos,
    Wq,
    Wk,
    Wv,
    DecTok,
    DecPos,
    CrossQ,
    CrossK,
    MixW,
    MixB,
    OutW,
    OutB,
}

pub(crate) const PARAM_COUNT: usize = 13;

/// Gradient buffers mirroring the model's parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub tensors: Vec<Tensor>,
}

impl Grads {
    pub fn zeros_like(model: &ToySeq2Seq) -> Self {
        Self {
            tensors: model
                .params
                .iter()
                .map(|t| Tensor::zeros(&t.name, t.rows, t.cols))
                .collect(),
        }
    }

    fn get(&mut self, p: Param) -> &mut Tensor {
        &mut self.tensors[p as usize]
    }

    pub fn add(&mut self, other: &Grads) {
        for (t, o) in self.tensors.iter_mut().zip(&other.tensors) {
            axpy(1.0, &o.data, &mut t.data);
        }
    }

    pub fn scale(&mut self, a: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= a);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySeq2Seq {
    pub config: ModelConfig,
    pub params: Vec<Tensor>,
}

/// Forward state of one encoded sequence.
#[derive(Debug, Clone)]
pub struct Encoded {
    tokens: Vec<usize>,
    e: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    attn: Vec<Vec<f64>>,
    /// Per-token output states.
    pub states: Vec<Vec<f64>>,
}

impl Encoded {
    /// Mean of the per-token states.
    pub fn pooled(&self) -> Vec<f64> {
        let n = self.states.len() as f64;
        let mut out = vec![0.0; self.states[0].len()];
        for h in &self.states {
            axpy(1.0 / n, h, &mut out);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Step {
    prev: usize,
    pos: usize,
    s: Vec<f64>,
    qc: Vec<f64>,
    beta: Vec<f64>,
    u: Vec<f64>,
    o: Vec<f64>,
    probs: Vec<f64>,
}

/// Forward state of one teacher-forced decoding pass.
#[derive(Debug, Clone)]
pub struct Decoded {
    kc: Vec<Vec<f64>>,
    steps: Vec<Step>,
    target: Vec<usize>,
    /// Pre-softmax scores, one row per target position.
    pub logits: Vec<Vec<f64>>,
}

impl Decoded {
    /// `log p(target[t] | target[..t], source)` for every position.
    pub fn token_logprobs(&self) -> Vec<f64> {
        self.logits
            .iter()
            .zip(&self.target)
            .map(|(z, &y)| z[y] - log_sum_exp(z))
            .collect()
    }

    pub fn distributions(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(|s| s.probs.as_slice())
    }
}

impl ToySeq2Seq {
    pub fn new(config: ModelConfig) -> Self {
        let v = config.vocab_size;
        let d = config.embed_dim;
        let p = config.max_len.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let emb = Normal::new(0.0, config.init_scale).expect("valid init scale");
        let mut init = |name: &str, rows: usize, cols: usize, dist: Option<Normal<f64>>| {
            let mut t = Tensor::zeros(name, rows, cols);
            if let Some(dist) = dist {
                t.data.iter_mut().for_each(|x| *x = dist.sample(&mut rng));
            }
            t
        };
        let lin = |fan_in: usize| Some(Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("valid"));
        let params = vec![
            init("enc_tok", v, d, Some(emb)),
            init("enc_pos", p, d, Some(emb)),
            init("attn_q", d, d, lin(d)),
            init("attn_k", d, d, lin(d)),
            init("attn_v", d, d, lin(d)),
            // one extra row for BOS
            init("dec_tok", v + 1, d, Some(emb)),
            init("dec_pos", p, d, Some(emb)),
            init("cross_q", d, d, lin(d)),
            init("cross_k", d, d, lin(d)),
            init("mix_w", d, 2 * d, lin(2 * d)),
            init("mix_b", d, 1, None),
            init("out_w", v, d, lin(d)),
            init("out_b", v, 1, None),
        ];
        debug_assert_eq!(params.len(), PARAM_COUNT);
        Self { config, params }
    }

    fn p(&self, p: Param) -> &Tensor {
        &self.params[p as usize]
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|t| t.data.len()).sum()
    }

    pub fn bos(&self) -> usize {
        self.config.vocab_size
    }

    fn pos(&self, i: usize) -> usize {
        i.min(self.config.max_len.max(1) - 1)
    }

    fn scale(&self) -> f64 {
        1.0 / (self.config.embed_dim as f64).sqrt()
    }

    /// Mutable view of one scalar parameter by flat index.
    pub fn param_mut(&mut self, mut flat: usize) -> &mut f64 {
        for t in &mut self.params {
            if flat < t.data.len() {
                return &mut t.data[flat];
            }
            flat -= t.data.len();
        }
        panic!("parameter index out of range");
    }

    /// `params -= lr * grads`
    pub fn apply(&mut self, grads: &Grads, lr: f64) {
        for (p, g) in self.params.iter_mut().zip(&grads.tensors) {
            axpy(-lr, &g.data, &mut p.data);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// # Panics
    /// Panics on an empty sequence or an out-of-vocabulary id.
    pub fn encode(&self, tokens: &[usize]) -> Encoded {
        assert!(!tokens.is_empty(), "cannot encode an empty sequence");
        let scale = self.scale();
        let e: Vec<Vec<f64>> = tokens
            .iter()
            .enumerate()
            .map(|(i, &t)| add(self.p(Param::EncTok).row(t), self.p(Param::EncPos).row(self.pos(i))))
            .collect();
        let q: Vec<Vec<f64>> = e.iter().map(|x| self.p(Param::Wq).matvec(x)).collect();
        let k: Vec<Vec<f64>> = e.iter().map(|x| self.p(Param::Wk).matvec(x)).collect();
        let v: Vec<Vec<f64>> = e.iter().map(|x| self.p(Param::Wv).matvec(x)).collect();
        let mut attn = Vec::with_capacity(tokens.len());
        let mut states = Vec::with_capacity(tokens.len());
        for (i, qi) in q.iter().enumerate() {
            let scores: Vec<f64> = k.iter().map(|kj| scale * dot(qi, kj)).collect();
            let a = softmax(&scores);
            let mut h = e[i].clone();
            for (aj, vj) in a.iter().zip(&v) {
                axpy(*aj, vj, &mut h);
            }
            attn.push(a);
            states.push(h);
        }
        Encoded {
            tokens: tokens.to_vec(),
            e,
            q,
            k,
            v,
            attn,
            states,
        }
    }

    /// Teacher-forced pass over `target` conditioned on `enc`.
    pub fn decode(&self, enc: &Encoded, target: &[usize]) -> Decoded {
        let scale = self.scale();
        let d = self.config.embed_dim;
        let kc: Vec<Vec<f64>> = enc.states.iter().map(|h| self.p(Param::CrossK).matvec(h)).collect();
        let mut steps = Vec::with_capacity(target.len());
        let mut logits = Vec::with_capacity(target.len());
        for t in 0..target.len() {
            let prev = if t == 0 { self.bos() } else { target[t - 1] };
            let pos = self.pos(t);
            let s = add(self.p(Param::DecTok).row(prev), self.p(Param::DecPos).row(pos));
            let qc = self.p(Param::CrossQ).matvec(&s);
            let beta = softmax(&kc.iter().map(|kj| scale * dot(&qc, kj)).collect::<Vec<_>>());
            let mut c = vec![0.0; d];
            for (b, h) in beta.iter().zip(&enc.states) {
                axpy(*b, h, &mut c);
            }
            let mut u = s.clone();
            u.extend_from_slice(&c);
            let pre = add(&self.p(Param::MixW).matvec(&u), &self.p(Param::MixB).data);
            let o: Vec<f64> = pre.iter().map(|x| x.tanh()).collect();
            let z = add(&self.p(Param::OutW).matvec(&o), &self.p(Param::OutB).data);
            let probs = softmax(&z);
            logits.push(z);
            steps.push(Step {
                prev,
                pos,
                s,
                qc,
                beta,
                u,
                o,
                probs,
            });
        }
        Decoded {
            kc,
            steps,
            target: target.to_vec(),
            logits,
        }
    }

    /// Backpropagates logit gradients through the decoder; encoder-state
    /// gradients are added to `d_states`.
    pub fn backward_decoder(
        &self,
        enc: &Encoded,
        dec: &Decoded,
        d_logits: &[Vec<f64>],
        grads: &mut Grads,
        d_states: &mut [Vec<f64>],
    ) {
        let scale = self.scale();
        let d = self.config.embed_dim;
        let mut d_kc = vec![vec![0.0; d]; enc.len()];
        for (step, dz) in dec.steps.iter().zip(d_logits) {
            if dz.iter().all(|&g| g == 0.0) {
                continue;
            }
            grads.get(Param::OutW).outer_acc(dz, &step.o);
            axpy(1.0, dz, &mut grads.get(Param::OutB).data);
            let mut d_o = vec![0.0; d];
            self.p(Param::OutW).matvec_t_acc(dz, &mut d_o);
            let d_pre: Vec<f64> = d_o.iter().zip(&step.o).map(|(g, o)| g * (1.0 - o * o)).collect();
            grads.get(Param::MixW).outer_acc(&d_pre, &step.u);
            axpy(1.0, &d_pre, &mut grads.get(Param::MixB).data);
            let mut d_u = vec![0.0; 2 * d];
            self.p(Param::MixW).matvec_t_acc(&d_pre, &mut d_u);
            let (d_s_part, d_c) = d_u.split_at(d);
            let mut d_s = d_s_part.to_vec();

            let mut d_beta = Vec::with_capacity(enc.len());
            for (j, h) in enc.states.iter().enumerate() {
                axpy(step.beta[j], d_c, &mut d_states[j]);
                d_beta.push(dot(d_c, h));
            }
            let mean: f64 = step.beta.iter().zip(&d_beta).map(|(b, g)| b * g).sum();
            let mut d_qc = vec![0.0; d];
            for j in 0..enc.len() {
                let d_score = step.beta[j] * (d_beta[j] - mean) * scale;
                if d_score != 0.0 {
                    axpy(d_score, &dec.kc[j], &mut d_qc);
                    axpy(d_score, &step.qc, &mut d_kc[j]);
                }
            }
            grads.get(Param::CrossQ).outer_acc(&d_qc, &step.s);
            self.p(Param::CrossQ).matvec_t_acc(&d_qc, &mut d_s);
            axpy(1.0, &d_s, grads.get(Param::DecTok).row_mut(step.prev));
            axpy(1.0, &d_s, grads.get(Param::DecPos).row_mut(step.pos));
        }
        for (j, dk) in d_kc.iter().enumerate() {
            grads.get(Param::CrossK).outer_acc(dk, &enc.states[j]);
            self.p(Param::CrossK).matvec_t_acc(dk, &mut d_states[j]);
        }
    }

    /// Backpropagates encoder-state gradients into the parameters.
    pub fn backward_encoder(&self, enc: &Encoded, d_states: &[Vec<f64>], grads: &mut Grads) {
        let scale = self.scale();
        let d = self.config.embed_dim;
        let n = enc.len();
        let mut d_e: Vec<Vec<f64>> = d_states.to_vec();
        let mut d_q = vec![vec![0.0; d]; n];
        let mut d_k = vec![vec![0.0; d]; n];
        let mut d_v = vec![vec![0.0; d]; n];
        for i in 0..n {
            let dh = &d_states[i];
            if dh.iter().all(|&g| g == 0.0) {
                continue;
            }
            let a = &enc.attn[i];
            let d_a: Vec<f64> = enc.v.iter().map(|vj| dot(dh, vj)).collect();
            let mean: f64 = a.iter().zip(&d_a).map(|(x, g)| x * g).sum();
            for j in 0..n {
                axpy(a[j], dh, &mut d_v[j]);
                let d_score = a[j] * (d_a[j] - mean) * scale;
                if d_score != 0.0 {
                    axpy(d_score, &enc.k[j], &mut d_q[i]);
                    axpy(d_score, &enc.q[i], &mut d_k[j]);
                }
            }
        }
        for i in 0..n {
            grads.get(Param::Wq).outer_acc(&d_q[i], &enc.e[i]);
            grads.get(Param::Wk).outer_acc(&d_k[i], &enc.e[i]);
            grads.get(Param::Wv).outer_acc(&d_v[i], &enc.e[i]);
            self.p(Param::Wq).matvec_t_acc(&d_q[i], &mut d_e[i]);
            self.p(Param::Wk).matvec_t_acc(&d_k[i], &mut d_e[i]);
            self.p(Param::Wv).matvec_t_acc(&d_v[i], &mut d_e[i]);
            axpy(1.0, &d_e[i], grads.get(Param::EncTok).row_mut(enc.tokens[i]));
            let pos = self.pos(i);
            axpy(1.0, &d_e[i], grads.get(Param::EncPos).row_mut(pos));
        }
    }

    /// Average-pooled encoder output.
    pub fn encode_pooled(&self, tokens: &[usize]) -> Vec<f64> {
        self.encode(tokens).pooled()
    }
}
