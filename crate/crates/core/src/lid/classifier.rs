use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pooling::{PoolCache, PoolingHead};
use crate::error::{ensure, Error, Result};
use crate::nnet::{softmax, BiLstm, BiLstmCache, GradBuffer, Init, Linear, ParamStore, Rng, SequenceTensor};
use crate::transducer::{read_checkpoint, write_checkpoint, Encoder, ModelDims, RnntModel};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidDims {
    pub bilstm_hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
}

impl Default for LidDims {
    fn default() -> Self {
        LidDims {
            bilstm_hidden: 16,
            heads: 4,
            head_dim: 8,
        }
    }
}

pub const LID_CHECKPOINT_KIND: &str = "lid";
pub const ENCODER_PREFIX: &str = "encoder.";

/// Language classifier on top of a transducer encoder: BiLSTM, multi-head
/// pooling, then a linear layer with softmax. Holds its own copy of the
/// encoder parameters so it can score raw features or, when the encoder is
/// frozen, reuse the transducer's encoder output directly.
#[derive(Clone, Debug)]
pub struct LidClassifier {
    params: ParamStore,
    model_dims: ModelDims,
    dims: LidDims,
    languages: Vec<String>,
    encoder_finetune: bool,
    encoder: Encoder,
    bilstm: BiLstm,
    pooling: PoolingHead,
    out: Linear,
}

/// Forward activations of the classifier part (after the encoder).
pub struct LidPass {
    pub probs: Vec<f64>,
    hidden: SequenceTensor,
    bilstm_cache: BiLstmCache,
    pooled: Vec<f64>,
    pool_cache: PoolCache,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LidPayload {
    model_dims: ModelDims,
    dims: LidDims,
    languages: Vec<String>,
    encoder_finetune: bool,
}

impl LidClassifier {
    /// Copies the encoder of `model` and initializes the classifier layers from `seed`.
    pub fn new(model: &RnntModel, languages: Vec<String>, dims: LidDims, encoder_finetune: bool, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        params.copy_prefix_from(model.params(), ENCODER_PREFIX)?;
        let mut rng = Rng::new(seed);
        Self::assemble(params, model.dims().clone(), dims, languages, encoder_finetune, &mut Init::Random(&mut rng))
    }

    fn assemble(
        mut params: ParamStore,
        model_dims: ModelDims,
        dims: LidDims,
        languages: Vec<String>,
        encoder_finetune: bool,
        init: &mut Init<'_>,
    ) -> Result<Self> {
        ensure!(languages.len() >= 2, "a language classifier needs at least 2 languages");
        let mut seen = std::collections::HashSet::new();
        ensure!(languages.iter().all(|l| seen.insert(l)), "duplicate language name");
        let encoder = Encoder::new(&mut params, &mut Init::Bind, &model_dims)?;
        let bilstm = BiLstm::new(&mut params, init, "lid.bilstm", encoder.output_dim(), dims.bilstm_hidden)?;
        let pooling = PoolingHead::new(&mut params, init, "lid.pool", bilstm.output_dim(), dims.heads, dims.head_dim)?;
        let out = Linear::new(&mut params, init, "lid.out", pooling.output_dim(), languages.len(), true)?;
        let mut clf = LidClassifier {
            params,
            model_dims,
            dims,
            languages,
            encoder_finetune,
            encoder,
            bilstm,
            pooling,
            out,
        };
        clf.apply_encoder_freeze()?;
        Ok(clf)
    }

    fn apply_encoder_freeze(&mut self) -> Result<()> {
        let patterns = if self.encoder_finetune {
            vec![]
        } else {
            vec![format!("{ENCODER_PREFIX}*")]
        };
        self.params.apply_freeze(&patterns)?;
        Ok(())
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn language_id(&self, name: &str) -> Option<usize> {
        self.languages.iter().position(|l| l == name)
    }

    pub fn dims(&self) -> &LidDims {
        &self.dims
    }

    pub fn model_dims(&self) -> &ModelDims {
        &self.model_dims
    }

    pub fn encoder_finetune(&self) -> bool {
        self.encoder_finetune
    }

    pub fn pooling(&self) -> &PoolingHead {
        &self.pooling
    }

    pub fn bilstm(&self) -> &BiLstm {
        &self.bilstm
    }

    pub fn out(&self) -> &Linear {
        &self.out
    }

    /// Whether this classifier's encoder copy is bit-identical to `model`'s.
    pub fn shares_encoder_with(&self, model: &RnntModel) -> bool {
        self.params.checksum(ENCODER_PREFIX) == model.params().checksum(ENCODER_PREFIX)
    }

    /// Runs the classifier's own encoder copy.
    pub fn encode(&self, features: &SequenceTensor) -> Result<SequenceTensor> {
        ensure!(
            features.width() == self.encoder.input_dim(),
            "features have width {}, encoder expects {}",
            features.width(),
            self.encoder.input_dim()
        );
        Ok(self.encoder.forward(&self.params, features).0)
    }

    /// Language probabilities for encoder output.
    pub fn lid_forward(&self, enc: &SequenceTensor) -> Result<Vec<f64>> {
        Ok(self.forward_pass(enc)?.probs)
    }

    pub fn forward_pass(&self, enc: &SequenceTensor) -> Result<LidPass> {
        ensure!(
            enc.width() == self.bilstm.input_dim(),
            "encoder output has width {}, classifier expects {}",
            enc.width(),
            self.bilstm.input_dim()
        );
        let (hidden, bilstm_cache) = self.bilstm.forward(&self.params, enc);
        let (pooled, pool_cache) = self.pooling.forward(&self.params, &hidden);
        let logits = self.out.forward(&self.params, &pooled);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("language logits"));
        }
        Ok(LidPass {
            probs: softmax(&logits),
            hidden,
            bilstm_cache,
            pooled,
            pool_cache,
        })
    }

    /// Cross-entropy on encoder output; accumulates classifier gradients and
    /// returns (loss, d enc).
    pub fn loss_and_grad_from_enc(&self, enc: &SequenceTensor, language: usize, grads: &mut GradBuffer) -> Result<(f64, SequenceTensor)> {
        ensure!(language < self.languages.len(), "language id {language} out of range");
        let pass = self.forward_pass(enc)?;
        let loss = -pass.probs[language].max(f64::MIN_POSITIVE).ln();
        let mut dlogits = pass.probs.clone();
        dlogits[language] -= 1.0;
        let p = &self.params;
        let mut dpooled = vec![0.0; pass.pooled.len()];
        self.out.backward(p, &pass.pooled, &dlogits, grads, Some(&mut dpooled));
        let dhidden = self.pooling.backward(p, &pass.hidden, &pass.pool_cache, &dpooled, grads);
        let denc = self.bilstm.backward(p, &pass.bilstm_cache, &dhidden, grads);
        Ok((loss, denc))
    }

    /// Cross-entropy from raw features, backpropagating into the encoder copy
    /// when it is being fine-tuned.
    pub fn loss_and_grad(&self, features: &SequenceTensor, language: usize, grads: &mut GradBuffer) -> Result<f64> {
        ensure!(
            features.width() == self.encoder.input_dim(),
            "features have width {}, encoder expects {}",
            features.width(),
            self.encoder.input_dim()
        );
        let (enc, caches) = self.encoder.forward(&self.params, features);
        let (loss, denc) = self.loss_and_grad_from_enc(&enc, language, grads)?;
        if self.encoder_finetune {
            self.encoder.backward(&self.params, &caches, denc, grads);
        }
        Ok(loss)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let payload = LidPayload {
            model_dims: self.model_dims.clone(),
            dims: self.dims.clone(),
            languages: self.languages.clone(),
            encoder_finetune: self.encoder_finetune,
        };
        write_checkpoint(w, &self.params, LID_CHECKPOINT_KIND, serde_json::to_value(payload)?)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let (params, kind, payload) = read_checkpoint(r)?;
        if kind != LID_CHECKPOINT_KIND {
            return Err(Error::Format {
                kind: "checkpoint",
                reason: format!("expected a {LID_CHECKPOINT_KIND} checkpoint, found {kind}"),
            });
        }
        let p: LidPayload = serde_json::from_value(payload)?;
        Self::assemble(params, p.model_dims, p.dims, p.languages, p.encoder_finetune, &mut Init::Bind)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
