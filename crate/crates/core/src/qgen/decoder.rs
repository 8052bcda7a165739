//! Gated recurrent decoder trained by backpropagation through time.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::vocab::{Vocabulary, END, PAD, START};
use super::Decoding;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub hidden: usize,
    pub embed_dim: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub init_range: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            embed_dim: 32,
            steps: 2000,
            batch_size: 32,
            lr: 0.1,
            clip_norm: 5.0,
            init_range: 0.08,
            max_len: 20,
            seed: 0,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("embed_dim", self.embed_dim),
            ("steps", self.steps),
            ("batch_size", self.batch_size),
            ("max_len", self.max_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("lr", self.lr), ("clip_norm", self.clip_norm), ("init_range", self.init_range)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Decoder weights. Matrices are stored input-major, so a batch of row
/// vectors `X` maps to `X · W`. Gate blocks are ordered input, forget,
/// output, candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    /// `V × E` token embeddings.
    pub emb: Array2<f64>,
    /// `(E + Dw) × 4H`.
    pub w_x: Array2<f64>,
    /// `H × 4H`.
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
    /// `(F + Dw) × H`, initial hidden state from `[f; σ(v)]`.
    pub p_h: Array2<f64>,
    pub b_ph: Array1<f64>,
    /// `(F + Dw) × H`, initial cell state.
    pub p_c: Array2<f64>,
    pub b_pc: Array1<f64>,
    /// `H × V`.
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

/// One training pair: encoded features, target-word vector and question ids
/// (without start or end markers).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub features: Vec<f64>,
    pub word: Vec<f64>,
    pub tokens: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    logits.mapv(|x| x - lse)
}

struct Step {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    o: Array2<f64>,
    g: Array2<f64>,
    tc: Array2<f64>,
    h: Array2<f64>,
    probs: Array2<f64>,
    inputs: Vec<usize>,
    targets: Vec<usize>,
    mask: Vec<bool>,
}

/// Forward activations kept for backpropagation.
pub struct DecoderCache {
    z: Array2<f64>,
    h0: Array2<f64>,
    c0: Array2<f64>,
    steps: Vec<Step>,
    nll: f64,
    tokens: usize,
}

impl DecoderCache {
    /// Summed negative log-likelihood over the batch.
    pub fn nll(&self) -> f64 {
        self.nll
    }

    /// Predicted tokens including end markers.
    pub fn tokens(&self) -> usize {
        self.tokens
    }
}

impl DecoderParams {
    pub fn zeros(vocab: usize, embed: usize, hidden: usize, features: usize, word: usize) -> Self {
        Self {
            emb: Array2::zeros((vocab, embed)),
            w_x: Array2::zeros((embed + word, 4 * hidden)),
            w_h: Array2::zeros((hidden, 4 * hidden)),
            b: Array1::zeros(4 * hidden),
            p_h: Array2::zeros((features + word, hidden)),
            b_ph: Array1::zeros(hidden),
            p_c: Array2::zeros((features + word, hidden)),
            b_pc: Array1::zeros(hidden),
            w_out: Array2::zeros((hidden, vocab)),
            b_out: Array1::zeros(vocab),
        }
    }

    /// Uniform `±init_range` weights with the forget-gate bias at 1.
    pub fn random(
        vocab: usize,
        embed: usize,
        hidden: usize,
        features: usize,
        word: usize,
        init_range: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut p = Self::zeros(vocab, embed, hidden, features, word);
        for (name, t) in p.tensors_mut() {
            if name.starts_with('b') {
                continue;
            }
            t.iter_mut().for_each(|x| *x = rng.random_range(-init_range..=init_range));
        }
        p.b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(
            self.vocab_size(),
            self.embed_dim(),
            self.hidden(),
            self.feature_dim(),
            self.word_dim(),
        )
    }

    pub fn vocab_size(&self) -> usize {
        self.emb.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.emb.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w_h.nrows()
    }

    pub fn word_dim(&self) -> usize {
        self.w_x.nrows() - self.embed_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.p_h.nrows() - self.word_dim()
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("emb", self.emb.as_slice().expect("standard layout")),
            ("w_x", self.w_x.as_slice().expect("standard layout")),
            ("w_h", self.w_h.as_slice().expect("standard layout")),
            ("b", self.b.as_slice().expect("standard layout")),
            ("p_h", self.p_h.as_slice().expect("standard layout")),
            ("b_ph", self.b_ph.as_slice().expect("standard layout")),
            ("p_c", self.p_c.as_slice().expect("standard layout")),
            ("b_pc", self.b_pc.as_slice().expect("standard layout")),
            ("w_out", self.w_out.as_slice().expect("standard layout")),
            ("b_out", self.b_out.as_slice().expect("standard layout")),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("emb", self.emb.as_slice_mut().expect("standard layout")),
            ("w_x", self.w_x.as_slice_mut().expect("standard layout")),
            ("w_h", self.w_h.as_slice_mut().expect("standard layout")),
            ("b", self.b.as_slice_mut().expect("standard layout")),
            ("p_h", self.p_h.as_slice_mut().expect("standard layout")),
            ("b_ph", self.b_ph.as_slice_mut().expect("standard layout")),
            ("p_c", self.p_c.as_slice_mut().expect("standard layout")),
            ("b_pc", self.b_pc.as_slice_mut().expect("standard layout")),
            ("w_out", self.w_out.as_slice_mut().expect("standard layout")),
            ("b_out", self.b_out.as_slice_mut().expect("standard layout")),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (v, e, h, dw) = (self.vocab_size(), self.embed_dim(), self.hidden(), self.word_dim());
        let zdim = self.p_h.nrows();
        let ok = self.w_x.ncols() == 4 * h
            && self.w_h.ncols() == 4 * h
            && self.b.len() == 4 * h
            && self.w_x.nrows() >= e
            && zdim >= dw
            && self.p_h.ncols() == h
            && self.b_ph.len() == h
            && self.p_c.dim() == (zdim, h)
            && self.b_pc.len() == h
            && self.w_out.dim() == (h, v)
            && self.b_out.len() == v
            && v > END;
        if !ok {
            return Err(Error::Data("decoder parameter shapes are inconsistent".into()));
        }
        if self.tensors().iter().any(|(_, t)| t.iter().any(|x| !x.is_finite())) {
            return Err(Error::Data("decoder parameters contain non-finite values".into()));
        }
        Ok(())
    }

    fn check_inputs(&self, features: &[f64], word: &[f64]) -> Result<()> {
        if features.len() != self.feature_dim() || word.len() != self.word_dim() {
            return Err(Error::InvalidInput(format!(
                "decoder expects {} feature and {} word dims, got {} and {}",
                self.feature_dim(),
                self.word_dim(),
                features.len(),
                word.len()
            )));
        }
        Ok(())
    }

    /// State before the first token: `tanh(P [f; σ] + b)`.
    pub fn initial_state(&self, features: &[f64], word: &[f64]) -> DecoderState {
        let z: Array1<f64> = features.iter().chain(word).copied().collect();
        DecoderState {
            h: (z.dot(&self.p_h) + &self.b_ph).mapv(f64::tanh),
            c: (z.dot(&self.p_c) + &self.b_pc).mapv(f64::tanh),
        }
    }

    /// One recurrent step on `token`; returns the next state and the logits
    /// for the following token.
    pub fn step(&self, state: &DecoderState, token: usize, word: &[f64]) -> (DecoderState, Array1<f64>) {
        let h = self.hidden();
        let x: Array1<f64> = self.emb.row(token).iter().chain(word).copied().collect();
        let a = x.dot(&self.w_x) + state.h.dot(&self.w_h) + &self.b;
        let i = a.slice(s![0..h]).mapv(sigmoid);
        let f = a.slice(s![h..2 * h]).mapv(sigmoid);
        let o = a.slice(s![2 * h..3 * h]).mapv(sigmoid);
        let g = a.slice(s![3 * h..]).mapv(f64::tanh);
        let c = &f * &state.c + &i * &g;
        let hn = &o * &c.mapv(f64::tanh);
        let logits = hn.dot(&self.w_out) + &self.b_out;
        (DecoderState { h: hn, c }, logits)
    }

    /// Log-probabilities over the next token with `<pad>` and `<s>` ruled out.
    fn next_log_probs(&self, state: &DecoderState, token: usize, word: &[f64]) -> (DecoderState, Array1<f64>) {
        let (next, mut logits) = self.step(state, token, word);
        logits[PAD] = f64::NEG_INFINITY;
        logits[START] = f64::NEG_INFINITY;
        (next, log_softmax(logits.view()))
    }

    /// Teacher-forced forward pass over a batch.
    pub fn forward(&self, batch: &[&TrainingExample]) -> DecoderCache {
        let nb = batch.len();
        let (e, h, dw) = (self.embed_dim(), self.hidden(), self.word_dim());
        let mut z = Array2::zeros((nb, self.p_h.nrows()));
        for (r, ex) in batch.iter().enumerate() {
            for (k, v) in ex.features.iter().chain(&ex.word).enumerate() {
                z[[r, k]] = *v;
            }
        }
        let h0 = (z.dot(&self.p_h) + &self.b_ph).mapv(f64::tanh);
        let c0 = (z.dot(&self.p_c) + &self.b_pc).mapv(f64::tanh);
        let t_max = batch.iter().map(|ex| ex.tokens.len() + 1).max().unwrap_or(0);

        let mut steps = Vec::with_capacity(t_max);
        let (mut hs, mut cs) = (h0.clone(), c0.clone());
        let (mut nll, mut count) = (0.0, 0);
        for t in 0..t_max {
            let mut x = Array2::zeros((nb, e + dw));
            let mut inputs = vec![PAD; nb];
            let mut targets = vec![PAD; nb];
            let mut mask = vec![false; nb];
            for (r, ex) in batch.iter().enumerate() {
                let toks = &ex.tokens;
                inputs[r] = match t {
                    0 => START,
                    _ if t <= toks.len() => toks[t - 1],
                    _ => PAD,
                };
                mask[r] = t <= toks.len();
                targets[r] = if t < toks.len() { toks[t] } else { END };
                x.slice_mut(s![r, ..e]).assign(&self.emb.row(inputs[r]));
                for (k, v) in ex.word.iter().enumerate() {
                    x[[r, e + k]] = *v;
                }
            }
            let a = x.dot(&self.w_x) + hs.dot(&self.w_h) + &self.b;
            let i = a.slice(s![.., 0..h]).mapv(sigmoid);
            let f = a.slice(s![.., h..2 * h]).mapv(sigmoid);
            let o = a.slice(s![.., 2 * h..3 * h]).mapv(sigmoid);
            let g = a.slice(s![.., 3 * h..]).mapv(f64::tanh);
            let c = &f * &cs + &i * &g;
            let tc = c.mapv(f64::tanh);
            let hn = &o * &tc;
            let mut probs = hn.dot(&self.w_out) + &self.b_out;
            for (r, mut row) in probs.axis_iter_mut(Axis(0)).enumerate() {
                let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                row.mapv_inplace(|v| (v - m).exp());
                let total = row.sum();
                row /= total;
                if mask[r] {
                    nll -= row[targets[r]].ln();
                    count += 1;
                }
            }
            steps.push(Step {
                x,
                h_prev: hs,
                c_prev: cs,
                i,
                f,
                o,
                g,
                tc,
                h: hn.clone(),
                probs,
                inputs,
                targets,
                mask,
            });
            hs = hn;
            cs = c;
        }
        DecoderCache {
            z,
            h0,
            c0,
            steps,
            nll,
            tokens: count,
        }
    }

    /// Mean over the batch of each question's summed negative log-likelihood.
    pub fn loss(&self, batch: &[&TrainingExample]) -> f64 {
        self.forward(batch).nll / batch.len() as f64
    }

    /// Gradient of [`Self::loss`] with respect to every parameter.
    pub fn backward(&self, cache: &DecoderCache) -> DecoderParams {
        let mut grad = self.zeros_like();
        let (e, h) = (self.embed_dim(), self.hidden());
        let nb = cache.z.nrows();
        let scale = 1.0 / nb as f64;
        let mut dh_next = Array2::<f64>::zeros((nb, h));
        let mut dc_next = Array2::<f64>::zeros((nb, h));
        for st in cache.steps.iter().rev() {
            let mut dlogits = st.probs.clone();
            for (r, mut row) in dlogits.axis_iter_mut(Axis(0)).enumerate() {
                if st.mask[r] {
                    row[st.targets[r]] -= 1.0;
                    row *= scale;
                } else {
                    row.fill(0.0);
                }
            }
            grad.w_out += &st.h.t().dot(&dlogits);
            grad.b_out += &dlogits.sum_axis(Axis(0));
            let dh = dlogits.dot(&self.w_out.t()) + &dh_next;
            let d_o = &dh * &st.tc;
            let dc = &dh * &st.o * &st.tc.mapv(|v| 1.0 - v * v) + &dc_next;
            let di = &dc * &st.g;
            let dg = &dc * &st.i;
            let df = &dc * &st.c_prev;
            dc_next = &dc * &st.f;

            let mut da = Array2::<f64>::zeros((nb, 4 * h));
            da.slice_mut(s![.., 0..h])
                .assign(&(&di * &st.i.mapv(|v| v * (1.0 - v))));
            da.slice_mut(s![.., h..2 * h])
                .assign(&(&df * &st.f.mapv(|v| v * (1.0 - v))));
            da.slice_mut(s![.., 2 * h..3 * h])
                .assign(&(&d_o * &st.o.mapv(|v| v * (1.0 - v))));
            da.slice_mut(s![.., 3 * h..])
                .assign(&(&dg * &st.g.mapv(|v| 1.0 - v * v)));

            grad.w_x += &st.x.t().dot(&da);
            grad.w_h += &st.h_prev.t().dot(&da);
            grad.b += &da.sum_axis(Axis(0));
            let dx = da.dot(&self.w_x.t());
            for (r, &tok) in st.inputs.iter().enumerate() {
                if st.mask[r] {
                    let mut row = grad.emb.row_mut(tok);
                    row += &dx.slice(s![r, ..e]);
                }
            }
            dh_next = da.dot(&self.w_h.t());
        }
        let du_h = &dh_next * &cache.h0.mapv(|v| 1.0 - v * v);
        let du_c = &dc_next * &cache.c0.mapv(|v| 1.0 - v * v);
        grad.p_h += &cache.z.t().dot(&du_h);
        grad.b_ph += &du_h.sum_axis(Axis(0));
        grad.p_c += &cache.z.t().dot(&du_c);
        grad.b_pc += &du_c.sum_axis(Axis(0));
        grad
    }

    pub fn loss_and_gradient(&self, batch: &[&TrainingExample]) -> (f64, DecoderParams) {
        let cache = self.forward(batch);
        let grad = self.backward(&cache);
        (cache.nll / batch.len() as f64, grad)
    }

    fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn apply(&mut self, grad: &DecoderParams, step: f64) {
        for ((_, p), (_, g)) in self.tensors_mut().into_iter().zip(grad.tensors()) {
            p.iter_mut().zip(g).for_each(|(a, b)| *a -= step * b);
        }
    }

    /// Token ids of the decoded question, without the end marker.
    pub fn generate(&self, features: &[f64], word: &[f64], decoding: Decoding, max_len: usize) -> Result<Vec<usize>> {
        self.check_inputs(features, word)?;
        Ok(match decoding {
            Decoding::Greedy => self.greedy(features, word, max_len),
            Decoding::Beam(width) => self.beam(features, word, width.max(1), max_len),
        })
    }

    fn greedy(&self, features: &[f64], word: &[f64], max_len: usize) -> Vec<usize> {
        let mut state = self.initial_state(features, word);
        let mut out = Vec::new();
        let mut token = START;
        for _ in 0..max_len {
            let (next, lp) = self.next_log_probs(&state, token, word);
            let best = first_argmax(lp.view());
            if best == END {
                break;
            }
            out.push(best);
            token = best;
            state = next;
        }
        out
    }

    fn beam(&self, features: &[f64], word: &[f64], width: usize, max_len: usize) -> Vec<usize> {
        struct Hyp {
            tokens: Vec<usize>,
            logp: f64,
            last: f64,
            state: DecoderState,
            done: bool,
        }
        struct Cand {
            logp: f64,
            last: f64,
            token: usize,
            parent: usize,
            extend: bool,
        }
        let mut beams = vec![Hyp {
            tokens: Vec::new(),
            logp: 0.0,
            last: 0.0,
            state: self.initial_state(features, word),
            done: false,
        }];
        for _ in 0..max_len {
            if beams.iter().all(|b| b.done) {
                break;
            }
            let mut cands = Vec::new();
            let mut next_states = Vec::with_capacity(beams.len());
            for (pi, hyp) in beams.iter().enumerate() {
                if hyp.done {
                    cands.push(Cand {
                        logp: hyp.logp,
                        last: hyp.last,
                        token: END,
                        parent: pi,
                        extend: false,
                    });
                    next_states.push(None);
                    continue;
                }
                let input = hyp.tokens.last().copied().unwrap_or(START);
                let (next, lp) = self.next_log_probs(&hyp.state, input, word);
                for (tok, &l) in lp.iter().enumerate() {
                    if l.is_finite() {
                        cands.push(Cand {
                            logp: hyp.logp + l,
                            last: l,
                            token: tok,
                            parent: pi,
                            extend: true,
                        });
                    }
                }
                next_states.push(Some(next));
            }
            cands.sort_by(|a, b| {
                b.logp
                    .total_cmp(&a.logp)
                    .then(b.last.total_cmp(&a.last))
                    .then(a.token.cmp(&b.token))
            });
            cands.truncate(width);
            beams = cands
                .into_iter()
                .map(|c| {
                    let parent = &beams[c.parent];
                    if !c.extend {
                        return Hyp {
                            tokens: parent.tokens.clone(),
                            logp: parent.logp,
                            last: parent.last,
                            state: parent.state.clone(),
                            done: true,
                        };
                    }
                    let mut tokens = parent.tokens.clone();
                    let done = c.token == END;
                    if !done {
                        tokens.push(c.token);
                    }
                    Hyp {
                        tokens,
                        logp: c.logp,
                        last: c.last,
                        state: next_states[c.parent].clone().expect("extended hypotheses have a state"),
                        done,
                    }
                })
                .collect();
        }
        let score = |h: &Hyp| {
            let n = h.tokens.len() + usize::from(h.done);
            if n == 0 {
                0.0
            } else {
                h.logp / n as f64
            }
        };
        let mut best = 0;
        for (i, h) in beams.iter().enumerate() {
            if score(h) > score(&beams[best]) {
                best = i;
            }
        }
        beams.swap_remove(best).tokens
    }
}

fn first_argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Loss trace of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Minibatch loss (mean summed NLL per question) at every step.
    pub step_losses: Vec<f64>,
    /// Per-token cross-entropy over the whole corpus before training.
    pub initial_token_ce: f64,
    /// Per-token cross-entropy over the whole corpus after training.
    pub final_token_ce: f64,
}

/// Per-token cross-entropy of `params` over `examples`, in nats.
pub fn token_cross_entropy(params: &DecoderParams, examples: &[TrainingExample]) -> f64 {
    let (mut nll, mut n) = (0.0, 0);
    for chunk in examples.chunks(64) {
        let refs: Vec<&TrainingExample> = chunk.iter().collect();
        let cache = params.forward(&refs);
        nll += cache.nll;
        n += cache.tokens;
    }
    nll / n.max(1) as f64
}

/// Minibatch gradient descent on teacher-forced NLL with global-norm
/// clipping. Batches walk a seeded permutation that is redrawn each pass.
pub fn train_decoder(
    examples: &[TrainingExample],
    vocab_size: usize,
    config: &DecoderConfig,
) -> Result<(DecoderParams, TrainReport)> {
    config.validate()?;
    let first = examples
        .first()
        .ok_or_else(|| Error::Data("empty training corpus".into()))?;
    let (fd, wd) = (first.features.len(), first.word.len());
    for (n, ex) in examples.iter().enumerate() {
        if ex.features.len() != fd || ex.word.len() != wd {
            return Err(Error::Data(format!("example {n} has inconsistent input dimensions")));
        }
        if let Some(&t) = ex.tokens.iter().find(|&&t| t >= vocab_size || t == PAD || t == START) {
            return Err(Error::Data(format!("example {n} has invalid token id {t}")));
        }
        if ex.features.iter().chain(&ex.word).any(|x| !x.is_finite()) {
            return Err(Error::Data(format!("example {n} has non-finite inputs")));
        }
    }
    if vocab_size <= END {
        return Err(Error::Data("vocabulary has no room for words".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = DecoderParams::random(
        vocab_size,
        config.embed_dim,
        config.hidden,
        fd,
        wd,
        config.init_range,
        &mut rng,
    );
    let initial_token_ce = token_cross_entropy(&params, examples);

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();
    let bs = config.batch_size.min(examples.len());
    let mut step_losses = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let mut batch = Vec::with_capacity(bs);
        while batch.len() < bs {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&examples[order[cursor]]);
            cursor += 1;
        }
        let (loss, mut grad) = params.loss_and_gradient(&batch);
        let norm = grad.norm();
        if norm > config.clip_norm {
            let s = config.clip_norm / norm;
            grad.tensors_mut()
                .into_iter()
                .for_each(|(_, t)| t.iter_mut().for_each(|x| *x *= s));
        }
        params.apply(&grad, config.lr);
        step_losses.push(loss);
    }
    if params.tensors().iter().any(|(_, t)| t.iter().any(|x| !x.is_finite())) {
        return Err(Error::Data("training diverged to non-finite parameters".into()));
    }
    let final_token_ce = token_cross_entropy(&params, examples);
    Ok((
        params,
        TrainReport {
            step_losses,
            initial_token_ce,
            final_token_ce,
        },
    ))
}

/// Trained decoder with its vocabulary, ready to generate text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderModel {
    pub version: String,
    pub vocab: Vocabulary,
    pub config: DecoderConfig,
    pub params: DecoderParams,
}

impl DecoderModel {
    /// Bundle trained parameters; the version is `qgen-` plus a digest of
    /// the vocabulary, config and weights.
    pub fn new(vocab: Vocabulary, config: DecoderConfig, params: DecoderParams) -> Result<Self> {
        let mut model = Self {
            version: String::new(),
            vocab,
            config,
            params,
        };
        model.validate()?;
        let digest = Sha256::digest(serde_json::to_vec(&model)?);
        model.version = format!("qgen-{}", hex::encode(&digest[..6]));
        Ok(model)
    }

    pub fn feature_dim(&self) -> usize {
        self.params.feature_dim()
    }

    pub fn word_dim(&self) -> usize {
        self.params.word_dim()
    }

    pub fn generate(&self, features: &[f64], word: &[f64], decoding: Decoding) -> Result<Vec<String>> {
        let ids = self.params.generate(features, word, decoding, self.config.max_len)?;
        Ok(self.vocab.decode(&ids))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.params.vocab_size() != self.vocab.len() {
            return Err(Error::Data(format!(
                "decoder has {} output tokens but the vocabulary has {}",
                self.params.vocab_size(),
                self.vocab.len()
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }
}
