use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::checkpoint::{read_checkpoint, write_checkpoint};
use super::decode::{greedy_search, TransducerScorer};
use super::lattice::RnntLattice;
use super::vocab::Vocab;
use crate::error::{ensure, Error, Result};
use crate::nnet::{
    BiLstm, BiLstmCache, GradBuffer, Init, InitKind, Linear, LstmCell, LstmState, ParamId,
    ParamStore, Rng, SequenceTensor, StepCache,
};

/// Layer sizes of the transducer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub input_dim: usize,
    pub encoder_layers: usize,
    pub encoder_hidden: usize,
    pub embed_dim: usize,
    pub predictor_hidden: usize,
    pub joint_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            input_dim: 16,
            encoder_layers: 2,
            encoder_hidden: 32,
            embed_dim: 32,
            predictor_hidden: 32,
            joint_hidden: 32,
        }
    }
}

/// Stack of bidirectional LSTM layers, parameters under `encoder.<layer>.`.
#[derive(Clone, Debug)]
pub struct Encoder {
    layers: Vec<BiLstm>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, init: &mut Init<'_>, dims: &ModelDims) -> Result<Self> {
        ensure!(dims.encoder_layers >= 1, "encoder needs at least one layer");
        let mut layers = Vec::with_capacity(dims.encoder_layers);
        let mut width = dims.input_dim;
        for i in 0..dims.encoder_layers {
            let layer = BiLstm::new(store, init, &format!("encoder.{i}"), width, dims.encoder_hidden)?;
            width = layer.output_dim();
            layers.push(layer);
        }
        Ok(Encoder { layers })
    }

    pub fn layers(&self) -> &[BiLstm] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(BiLstm::output_dim).unwrap_or(0)
    }

    pub fn forward(&self, store: &ParamStore, x: &SequenceTensor) -> (SequenceTensor, Vec<BiLstmCache>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (out, cache) = layer.forward(store, &h);
            caches.push(cache);
            h = out;
        }
        (h, caches)
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        caches: &[BiLstmCache],
        dout: SequenceTensor,
        grads: &mut GradBuffer,
    ) -> SequenceTensor {
        let mut d = dout;
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            d = layer.backward(store, cache, &d, grads);
        }
        d
    }
}

/// Label-conditioned recurrent network over previously emitted tokens.
/// Position 0 consumes the blank id as a start symbol.
#[derive(Clone, Debug)]
pub struct Predictor {
    embed: ParamId,
    lstm: LstmCell,
    embed_dim: usize,
}

pub(crate) struct PredictorCache {
    tokens: Vec<usize>,
    steps: Vec<StepCache>,
}

impl Predictor {
    fn new(store: &mut ParamStore, init: &mut Init<'_>, dims: &ModelDims, vocab: usize) -> Result<Self> {
        let embed = init.param(store, "predictor.embed", &[vocab, dims.embed_dim], InitKind::Glorot)?;
        let lstm = LstmCell::new(store, init, "predictor.lstm", dims.embed_dim, dims.predictor_hidden)?;
        Ok(Predictor {
            embed,
            lstm,
            embed_dim: dims.embed_dim,
        })
    }

    fn embedding<'s>(&self, store: &'s ParamStore, token: usize) -> &'s [f64] {
        &store.values(self.embed)[token * self.embed_dim..(token + 1) * self.embed_dim]
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState::zeros(self.lstm.hidden())
    }

    pub fn step(&self, store: &ParamStore, state: &LstmState, token: usize) -> LstmState {
        self.lstm.step(store, self.embedding(store, token), state).0
    }

    /// Outputs for every prefix of `tokens` (which starts with the start symbol).
    fn forward(&self, store: &ParamStore, tokens: &[usize]) -> (SequenceTensor, PredictorCache) {
        let mut out = SequenceTensor::zeros(tokens.len(), self.lstm.hidden());
        let mut steps = Vec::with_capacity(tokens.len());
        let mut state = self.initial_state();
        for (u, &tok) in tokens.iter().enumerate() {
            let (next, cache) = self.lstm.step(store, self.embedding(store, tok), &state);
            out.frame_mut(u).copy_from_slice(&next.h);
            steps.push(cache);
            state = next;
        }
        (
            out,
            PredictorCache {
                tokens: tokens.to_vec(),
                steps,
            },
        )
    }

    fn backward(&self, store: &ParamStore, cache: &PredictorCache, dout: &SequenceTensor, grads: &mut GradBuffer) {
        let hd = self.lstm.hidden();
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        for u in (0..cache.steps.len()).rev() {
            let dh: Vec<f64> = dout.frame(u).iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let (dx, dh_prev, dc_prev) = self.lstm.step_backward(store, &cache.steps[u], &dh, &dc_next, grads);
            let tok = cache.tokens[u];
            let row = &mut grads.get_mut(self.embed)[tok * self.embed_dim..(tok + 1) * self.embed_dim];
            for (g, d) in row.iter_mut().zip(&dx) {
                *g += d;
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
    }
}

/// `out(tanh(enc(e) + pred(p)))`; the bias of the inner sum lives on `joint.enc`.
#[derive(Clone, Debug)]
pub struct Joint {
    enc: Linear,
    pred: Linear,
    out: Linear,
}

impl Joint {
    fn new(store: &mut ParamStore, init: &mut Init<'_>, dims: &ModelDims, vocab: usize) -> Result<Self> {
        Ok(Joint {
            enc: Linear::new(store, init, "joint.enc", 2 * dims.encoder_hidden, dims.joint_hidden, true)?,
            pred: Linear::new(store, init, "joint.pred", dims.predictor_hidden, dims.joint_hidden, false)?,
            out: Linear::new(store, init, "joint.out", dims.joint_hidden, vocab, true)?,
        })
    }

    fn hidden(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| (x + y).tanh()).collect()
    }
}

/// Recurrent neural network transducer: bidirectional encoder, unidirectional
/// prediction network, and a joint network scoring `|vocab|` outputs.
#[derive(Debug)]
pub struct RnntModel {
    dims: ModelDims,
    vocab: Vocab,
    params: ParamStore,
    encoder: Encoder,
    predictor: Predictor,
    joint: Joint,
    encode_calls: AtomicUsize,
}

impl Clone for RnntModel {
    fn clone(&self) -> Self {
        RnntModel {
            dims: self.dims.clone(),
            vocab: self.vocab.clone(),
            params: self.params.clone(),
            encoder: self.encoder.clone(),
            predictor: self.predictor.clone(),
            joint: self.joint.clone(),
            encode_calls: AtomicUsize::new(self.encode_count()),
        }
    }
}

/// Forward activations kept for the backward pass.
struct ForwardPass {
    enc: SequenceTensor,
    enc_caches: Vec<BiLstmCache>,
    pred_out: SequenceTensor,
    pred_cache: PredictorCache,
    /// `T × (U+1) × J` joint hidden activations.
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl RnntModel {
    pub fn new(dims: ModelDims, vocab: Vocab, seed: u64) -> Result<Self> {
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        Self::assemble(dims, vocab, &mut store, &mut Init::Random(&mut rng)).map(|mut m| {
            m.params = store;
            m
        })
    }

    /// Binds a model to an existing parameter store (e.g. from a checkpoint).
    pub fn from_parts(dims: ModelDims, vocab: Vocab, mut params: ParamStore) -> Result<Self> {
        let mut m = Self::assemble(dims, vocab, &mut params, &mut Init::Bind)?;
        m.params = params;
        Ok(m)
    }

    fn assemble(dims: ModelDims, vocab: Vocab, store: &mut ParamStore, init: &mut Init<'_>) -> Result<Self> {
        ensure!(dims.input_dim >= 1, "input dim must be positive");
        let encoder = Encoder::new(store, init, &dims)?;
        let predictor = Predictor::new(store, init, &dims, vocab.len())?;
        let joint = Joint::new(store, init, &dims, vocab.len())?;
        Ok(RnntModel {
            dims,
            vocab,
            params: ParamStore::new(),
            encoder,
            predictor,
            joint,
            encode_calls: AtomicUsize::new(0),
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Number of [`RnntModel::encode`] calls since construction.
    pub fn encode_count(&self) -> usize {
        self.encode_calls.load(Ordering::Relaxed)
    }

    /// Frame-level encoder embeddings, reusable by the joint network and the
    /// language-ID head.
    pub fn encode(&self, features: &SequenceTensor) -> Result<SequenceTensor> {
        self.check_features(features)?;
        self.encode_calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.encoder.forward(&self.params, features).0)
    }

    fn check_features(&self, features: &SequenceTensor) -> Result<()> {
        ensure!(
            features.width() == self.dims.input_dim,
            "feature width {} does not match model input {}",
            features.width(),
            self.dims.input_dim
        );
        Ok(())
    }

    fn check_target(&self, target: &[usize]) -> Result<()> {
        for &y in target {
            ensure!(y < self.vocab.len(), "target id {y} outside vocab");
            ensure!(y != self.vocab.blank_id(), "target contains the blank id");
        }
        Ok(())
    }

    fn run_forward(&self, features: &SequenceTensor, target: &[usize]) -> ForwardPass {
        let (enc, enc_caches) = self.encoder.forward(&self.params, features);
        let mut tokens = Vec::with_capacity(target.len() + 1);
        tokens.push(self.vocab.blank_id());
        tokens.extend_from_slice(target);
        let (pred_out, pred_cache) = self.predictor.forward(&self.params, &tokens);

        let p = &self.params;
        let a: Vec<Vec<f64>> = (0..enc.frames()).map(|t| self.joint.enc.forward(p, enc.frame(t))).collect();
        let b: Vec<Vec<f64>> = (0..pred_out.frames()).map(|u| self.joint.pred.forward(p, pred_out.frame(u))).collect();
        let jh = self.dims.joint_hidden;
        let v = self.vocab.len();
        let nodes = a.len() * b.len();
        let mut hidden = Vec::with_capacity(nodes * jh);
        let mut logits = Vec::with_capacity(nodes * v);
        for at in &a {
            for bu in &b {
                let z = self.joint.hidden(at, bu);
                logits.extend(self.joint.out.forward(p, &z));
                hidden.extend(z);
            }
        }
        ForwardPass {
            enc,
            enc_caches,
            pred_out,
            pred_cache,
            hidden,
            logits,
        }
    }

    /// Joint logits over the whole lattice, laid out `[t][u][k]`.
    pub fn lattice_logits(&self, features: &SequenceTensor, target: &[usize]) -> Result<Vec<f64>> {
        self.check_features(features)?;
        self.check_target(target)?;
        Ok(self.run_forward(features, target).logits)
    }

    /// Transducer loss `-log P(target | features)` and its gradient w.r.t.
    /// the joint logits.
    pub fn rnnt_loss(&self, features: &SequenceTensor, target: &[usize]) -> Result<(f64, Vec<f64>)> {
        let logits = self.lattice_logits(features, target)?;
        let lat = RnntLattice::new(&logits, features.frames(), target, self.vocab.len(), self.vocab.blank_id())?;
        Ok((lat.loss(), lat.logit_grads()))
    }

    pub fn loss(&self, features: &SequenceTensor, target: &[usize]) -> Result<f64> {
        self.rnnt_loss(features, target).map(|(l, _)| l)
    }

    fn encoder_trainable(&self) -> bool {
        self.params
            .iter()
            .any(|(_, p)| !p.frozen && p.name.starts_with("encoder."))
    }

    /// Loss with full backpropagation into `grads`. The encoder backward pass
    /// is skipped when every encoder entry is frozen.
    pub fn loss_and_grad(&self, features: &SequenceTensor, target: &[usize], grads: &mut GradBuffer) -> Result<f64> {
        self.check_features(features)?;
        self.check_target(target)?;
        let fp = self.run_forward(features, target);
        let (tn, un1) = (fp.enc.frames(), target.len() + 1);
        let lat = RnntLattice::new(&fp.logits, tn, target, self.vocab.len(), self.vocab.blank_id())?;
        let dlogits = lat.logit_grads();

        let p = &self.params;
        let jh = self.dims.joint_hidden;
        let v = self.vocab.len();
        let mut da = vec![vec![0.0; jh]; tn];
        let mut db = vec![vec![0.0; jh]; un1];
        let mut dz = vec![0.0; jh];
        for t in 0..tn {
            for u in 0..un1 {
                let node = t * un1 + u;
                let z = &fp.hidden[node * jh..(node + 1) * jh];
                dz.fill(0.0);
                self.joint.out.backward(p, z, &dlogits[node * v..(node + 1) * v], grads, Some(&mut dz));
                for j in 0..jh {
                    let pre = dz[j] * (1.0 - z[j] * z[j]);
                    da[t][j] += pre;
                    db[u][j] += pre;
                }
            }
        }

        let train_encoder = self.encoder_trainable();
        let mut denc = SequenceTensor::zeros(tn, self.encoder.output_dim());
        for t in 0..tn {
            let dx = train_encoder.then(|| denc.frame_mut(t));
            self.joint.enc.backward(p, fp.enc.frame(t), &da[t], grads, dx);
        }
        let mut dpred = SequenceTensor::zeros(un1, self.dims.predictor_hidden);
        for u in 0..un1 {
            self.joint.pred.backward(p, fp.pred_out.frame(u), &db[u], grads, Some(dpred.frame_mut(u)));
        }
        self.predictor.backward(p, &fp.pred_cache, &dpred, grads);
        if train_encoder {
            self.encoder.backward(p, &fp.enc_caches, denc, grads);
        }
        Ok(lat.loss())
    }

    /// Greedy transducer decoding over precomputed encoder output.
    pub fn greedy_decode(&self, enc: &SequenceTensor, max_symbols_per_frame: usize) -> Result<Vec<usize>> {
        ensure!(
            enc.width() == self.encoder.output_dim(),
            "encoder output width {} does not match joint input {}",
            enc.width(),
            self.encoder.output_dim()
        );
        let scorer = ModelScorer::new(self, enc);
        greedy_search(&scorer, max_symbols_per_frame)
    }

    /// Grows the output layer and token embedding to a vocabulary that
    /// extends the current one (same blank, old symbols as a prefix). Rows for
    /// new symbols are freshly initialized; existing rows are kept bit-exact.
    pub fn extend_vocab(&mut self, vocab: Vocab, seed: u64) -> Result<()> {
        let old = self.vocab.len();
        ensure!(
            vocab.len() >= old && vocab.symbols()[..old] == *self.vocab.symbols() && vocab.blank_id() == self.vocab.blank_id(),
            "new vocab must extend the model's vocab"
        );
        let added = vocab.len() - old;
        let mut rng = Rng::new(seed);
        let mut grow = |store: &mut ParamStore, name: &str, cols: usize, glorot: bool| -> Result<()> {
            let id = store.id(name).expect("bound parameter");
            let mut values = store.values(id).to_vec();
            let a = (6.0 / (vocab.len() + cols) as f64).sqrt();
            for _ in 0..added * cols {
                values.push(if glorot { rng.uniform_range(-a, a) } else { 0.0 });
            }
            let shape: Vec<usize> = if cols == 1 { vec![vocab.len()] } else { vec![vocab.len(), cols] };
            store.replace(id, &shape, values)
        };
        grow(&mut self.params, "predictor.embed", self.dims.embed_dim, true)?;
        grow(&mut self.params, "joint.out.weight", self.dims.joint_hidden, true)?;
        grow(&mut self.params, "joint.out.bias", 1, false)?;
        let params = std::mem::take(&mut self.params);
        *self = RnntModel::from_parts(self.dims.clone(), vocab, params)?;
        Ok(())
    }
}

pub const RNNT_CHECKPOINT_KIND: &str = "rnnt";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RnntPayload {
    dims: ModelDims,
    vocab: Vocab,
}

impl RnntModel {
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let payload = serde_json::to_value(RnntPayload {
            dims: self.dims.clone(),
            vocab: self.vocab.clone(),
        })?;
        write_checkpoint(w, &self.params, RNNT_CHECKPOINT_KIND, payload)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let (store, kind, payload) = read_checkpoint(r)?;
        if kind != RNNT_CHECKPOINT_KIND {
            return Err(Error::Format {
                kind: "checkpoint",
                reason: format!("expected a {RNNT_CHECKPOINT_KIND} checkpoint, found {kind}"),
            });
        }
        let p: RnntPayload = serde_json::from_value(payload)?;
        RnntModel::from_parts(p.dims, p.vocab, store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Adapter exposing a model plus one utterance's encoder output to the
/// generic greedy search.
struct ModelScorer<'a> {
    model: &'a RnntModel,
    enc_proj: Vec<Vec<f64>>,
}

impl<'a> ModelScorer<'a> {
    fn new(model: &'a RnntModel, enc: &SequenceTensor) -> Self {
        let enc_proj = (0..enc.frames())
            .map(|t| model.joint.enc.forward(&model.params, enc.frame(t)))
            .collect();
        ModelScorer { model, enc_proj }
    }
}

#[derive(Clone)]
struct PredState {
    lstm: LstmState,
    proj: Vec<f64>,
}

impl TransducerScorer for ModelScorer<'_> {
    type State = PredState;

    fn frames(&self) -> usize {
        self.enc_proj.len()
    }

    fn blank_id(&self) -> usize {
        self.model.vocab.blank_id()
    }

    fn initial_state(&self) -> PredState {
        let m = self.model;
        self.advance(
            &PredState {
                lstm: m.predictor.initial_state(),
                proj: Vec::new(),
            },
            m.vocab.blank_id(),
        )
    }

    fn advance(&self, state: &PredState, token: usize) -> PredState {
        let m = self.model;
        let lstm = m.predictor.step(&m.params, &state.lstm, token);
        let proj = m.joint.pred.forward(&m.params, &lstm.h);
        PredState { lstm, proj }
    }

    fn logits(&self, frame: usize, state: &PredState) -> Vec<f64> {
        let m = self.model;
        let z = m.joint.hidden(&self.enc_proj[frame], &state.proj);
        m.joint.out.forward(&m.params, &z)
    }
}
