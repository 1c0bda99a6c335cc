//! Frame-synchronous autoregressive acoustic model with a style-adversarial
//! branch on the decoder's PreNet latent.

use candle_core::{DType, Device, Tensor, D};
use rand_chacha::ChaCha8Rng;

use crate::config::AcousticConfig;
use crate::corpus::Style;
use crate::features::AmFrameRow;
use crate::nn::{
    masked_mean, pad_frames, pad_ids, sequence_mask, Cbhg, Dense, Embedding, GradientReversal, Gru,
    ParamStore, Prenet,
};
use crate::{Error, Result};

pub const N_STYLES: usize = 2;

/// How the style classifier is attached to the latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversarialMode {
    /// Gradient reversal between latent and classifier.
    Reversed,
    /// Plain connection; only used to compare gradients against `Reversed`.
    Identity,
}

/// Padded model inputs for a batch of utterances.
#[derive(Clone)]
pub struct AmBatch {
    pub phoneme: Tensor,
    pub frame_pos: Tensor,
    pub speaker: Tensor,
    pub style: Tensor,
    pub lf0: Tensor,
    pub mask: Tensor,
    pub lengths: Vec<usize>,
}

impl AmBatch {
    pub fn from_rows(seqs: &[&[AmFrameRow]], dtype: DType, device: &Device) -> Result<Self> {
        if seqs.is_empty() || seqs.iter().any(|s| s.is_empty()) {
            return Err(Error::Shape("acoustic batch needs at least one non-empty sequence".into()));
        }
        let lengths: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let t = *lengths.iter().max().unwrap_or(&0);
        let ids = |f: &dyn Fn(&AmFrameRow) -> u32| -> Vec<Vec<u32>> {
            seqs.iter().map(|s| s.iter().map(f).collect()).collect()
        };
        let frame_pos: Vec<Vec<f32>> = seqs.iter().map(|s| s.iter().map(|r| r.frame_pos).collect()).collect();
        let lf0: Vec<Vec<f32>> = seqs.iter().map(|s| s.iter().map(|r| r.lf0).collect()).collect();
        fn as_slices(v: &[Vec<f32>]) -> Vec<&[f32]> {
            v.iter().map(|x| x.as_slice()).collect()
        }
        Ok(Self {
            phoneme: pad_ids(&ids(&|r| r.phoneme_id), t, 0, device)?,
            frame_pos: pad_frames(&as_slices(&frame_pos), t, 1, dtype, device)?,
            speaker: pad_ids(&ids(&|r| r.speaker_id), t, 0, device)?,
            style: pad_ids(&ids(&|r| r.style.id()), t, 0, device)?,
            lf0: pad_frames(&as_slices(&lf0), t, 1, dtype, device)?,
            mask: sequence_mask(&lengths, t, dtype, device)?,
            lengths,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn frames(&self) -> usize {
        self.mask.dim(1).unwrap_or(0)
    }

    /// Replaces every frame's style tag.
    pub fn with_style(&self, style: Style) -> Result<Self> {
        let mut out = self.clone();
        out.style = Tensor::full(style.id(), self.style.shape(), self.style.device())?;
        Ok(out)
    }
}

/// Teacher-forced outputs, all `(B, T, ...)`.
pub struct AmOutputs {
    pub mel_pre: Tensor,
    pub mel_post: Tensor,
    pub style_logits: Tensor,
    /// Output of the adversarial recurrent layer, before the reversal.
    pub latent: Tensor,
}

/// Loss terms as scalar tensors; `total` carries the graph.
pub struct AmLossBreakdown {
    pub recon_mse_pre: Tensor,
    pub recon_mse_post: Tensor,
    pub l2_reg: Tensor,
    pub adv_ce: Tensor,
    pub total: Tensor,
}

/// Plain-float view of [`AmLossBreakdown`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AmLossValues {
    pub recon_mse_pre: f64,
    pub recon_mse_post: f64,
    pub l2_reg: f64,
    pub adv_ce: f64,
    pub total: f64,
}

impl AmLossBreakdown {
    pub fn values(&self) -> Result<AmLossValues> {
        let f = |t: &Tensor| -> Result<f64> { Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?) };
        Ok(AmLossValues {
            recon_mse_pre: f(&self.recon_mse_pre)?,
            recon_mse_post: f(&self.recon_mse_post)?,
            l2_reg: f(&self.l2_reg)?,
            adv_ce: f(&self.adv_ce)?,
            total: f(&self.total)?,
        })
    }
}

pub struct AcousticNet {
    pub ps: ParamStore,
    pub cfg: AcousticConfig,
    pub n_mels: usize,
    pub vocab_size: usize,
    pub adversarial: AdversarialMode,
    pub grl: GradientReversal,
    phoneme: Embedding,
    frame_pos: Dense,
    speaker: Embedding,
    encoder: Cbhg,
    style: Embedding,
    lf0: Dense,
    prenet: Prenet,
    dat: Gru,
    classifier: (Dense, Dense),
    decoder: Vec<Gru>,
    mel_out: Dense,
    postnet: Cbhg,
    postnet_out: Dense,
}

impl AcousticNet {
    pub fn new(cfg: &AcousticConfig, vocab_size: usize, n_mels: usize, dtype: DType, seed: u64) -> Result<Self> {
        if cfg.decoder_layers == 0 || cfg.prenet.is_empty() {
            return Err(Error::Config("acoustic model needs a decoder layer and a PreNet layer".into()));
        }
        let mut ps = ParamStore::new(dtype, seed);
        let ps_ = &mut ps;
        let phoneme = Embedding::new(ps_, "phoneme", vocab_size, cfg.phoneme_embed)?;
        let frame_pos = Dense::new(ps_, "frame_pos", 1, cfg.frame_pos_dim)?;
        let speaker = Embedding::new(ps_, "speaker", cfg.n_speakers, cfg.speaker_embed)?;
        let enc_in = cfg.phoneme_embed + cfg.frame_pos_dim + cfg.speaker_embed;
        let encoder = Cbhg::new(ps_, "encoder", enc_in, &cfg.encoder)?;
        let style = Embedding::new(ps_, "style", N_STYLES, cfg.style_embed)?;
        let lf0 = Dense::new(ps_, "lf0", 1, cfg.lf0_dim)?;
        let prenet = Prenet::new(ps_, "prenet", n_mels, &cfg.prenet, cfg.prenet_dropout)?;
        let dat = Gru::new(ps_, "dat", prenet.out_dim(), cfg.dat_width)?;
        let classifier = (
            Dense::new(ps_, "classifier.0", cfg.dat_width, cfg.classifier_hidden)?,
            Dense::new(ps_, "classifier.1", cfg.classifier_hidden, N_STYLES)?,
        );
        let dec_in = encoder.out_dim() + cfg.style_embed + cfg.lf0_dim + cfg.dat_width;
        let mut decoder = Vec::with_capacity(cfg.decoder_layers);
        for i in 0..cfg.decoder_layers {
            let input = if i == 0 { dec_in } else { cfg.decoder_width };
            decoder.push(Gru::new(ps_, &format!("decoder.{i}"), input, cfg.decoder_width)?);
        }
        let mel_out = Dense::new(ps_, "mel_out", cfg.decoder_width, n_mels)?;
        let postnet = Cbhg::new(ps_, "postnet", n_mels, &cfg.postnet)?;
        let postnet_out = Dense::new(ps_, "postnet_out", postnet.out_dim(), n_mels)?;
        Ok(Self {
            ps,
            cfg: cfg.clone(),
            n_mels,
            vocab_size,
            adversarial: AdversarialMode::Reversed,
            grl: GradientReversal::default(),
            phoneme,
            frame_pos,
            speaker,
            encoder,
            style,
            lf0,
            prenet,
            dat,
            classifier,
            decoder,
            mel_out,
            postnet,
            postnet_out,
        })
    }

    pub fn dtype(&self) -> DType {
        self.ps.dtype()
    }

    /// Encoder output joined with the style and LF0 encodings: `(B, T, C)`.
    fn conditioning(&self, batch: &AmBatch) -> Result<Tensor> {
        let enc_in = Tensor::cat(
            &[
                self.phoneme.forward(&batch.phoneme)?,
                self.frame_pos.forward(&batch.frame_pos)?.tanh()?,
                self.speaker.forward(&batch.speaker)?,
            ],
            2,
        )?;
        let enc = self.encoder.forward(&enc_in, &batch.mask)?;
        let style = self.style.forward(&batch.style)?;
        let lf0 = self.lf0.forward(&batch.lf0)?.tanh()?;
        Ok(Tensor::cat(&[enc, style, lf0], 2)?)
    }

    fn classify(&self, latent: &Tensor) -> Result<Tensor> {
        let attached = match self.adversarial {
            AdversarialMode::Reversed => self.grl.apply(latent)?,
            AdversarialMode::Identity => latent.clone(),
        };
        let h = self.classifier.0.forward(&attached)?.relu()?;
        self.classifier.1.forward(&h)
    }

    fn refine(&self, mel_pre: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let residual = self.postnet_out.forward(&self.postnet.forward(mel_pre, mask)?)?;
        Ok((mel_pre + residual)?)
    }

    /// `target_mel` is `(B, T, n_mels)`; it is shifted right by one frame
    /// with a zero go-frame to form the decoder feedback.
    pub fn forward_teacher_forced(
        &self,
        batch: &AmBatch,
        target_mel: &Tensor,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<AmOutputs> {
        let (b, t, m) = target_mel.dims3()?;
        if b != batch.batch_size() || t != batch.frames() || m != self.n_mels {
            return Err(Error::Shape(format!(
                "mel targets {:?} do not match batch ({}, {}, {})",
                target_mel.dims(),
                batch.batch_size(),
                batch.frames(),
                self.n_mels
            )));
        }
        let cond = self.conditioning(batch)?;
        let prev = target_mel.pad_with_zeros(1, 1, 0)?.narrow(1, 0, t)?;
        let z = self.prenet.forward(&prev, dropout_rng)?;
        let latent = self.dat.forward(&z, Some(&batch.mask), false)?;
        let style_logits = self.classify(&latent)?;
        let mut x = Tensor::cat(&[cond, latent.clone()], 2)?;
        for (i, gru) in self.decoder.iter().enumerate() {
            let h = gru.forward(&x, Some(&batch.mask), false)?;
            x = if i == 0 { h } else { (x + h)? };
        }
        let mel_pre = self.mel_out.forward(&x)?;
        let mel_post = self.refine(&mel_pre, &batch.mask)?;
        Ok(AmOutputs { mel_pre, mel_post, style_logits, latent })
    }

    /// Free-running generation: each step consumes the previous generated
    /// pre-PostNet frame. Returns the post-PostNet mel `(B, T, n_mels)`.
    pub fn infer(&self, batch: &AmBatch, mut dropout_rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let b = batch.batch_size();
        let t = batch.frames();
        let dtype = self.dtype();
        let dev = batch.mask.device().clone();
        let cond = self.conditioning(batch)?.detach();
        let mut prev = Tensor::zeros((b, self.n_mels), dtype, &dev)?;
        let mut dat_h = Tensor::zeros((b, self.cfg.dat_width), dtype, &dev)?;
        let mut dec_h: Vec<Tensor> = self
            .decoder
            .iter()
            .map(|g| Tensor::zeros((b, g.hidden), dtype, &dev))
            .collect::<candle_core::Result<_>>()?;
        let mut frames = Vec::with_capacity(t);
        for i in 0..t {
            let mask_t = batch.mask.narrow(1, i, 1)?;
            let hold = |next: Tensor, old: &Tensor| -> Result<Tensor> {
                Ok((old + (next - old)?.broadcast_mul(&mask_t)?)?)
            };
            let z = self.prenet.forward(&prev, dropout_rng.as_deref_mut())?;
            dat_h = hold(self.dat.cell(&self.dat.project(&z)?, &dat_h)?, &dat_h)?.detach();
            let mut x = Tensor::cat(&[cond.narrow(1, i, 1)?.squeeze(1)?, dat_h.clone()], D::Minus1)?;
            for (j, gru) in self.decoder.iter().enumerate() {
                let h = hold(gru.cell(&gru.project(&x)?, &dec_h[j])?, &dec_h[j])?.detach();
                dec_h[j] = h.clone();
                x = if j == 0 { h } else { (x + h)? };
            }
            let frame = self.mel_out.forward(&x)?.detach();
            frames.push(frame.clone());
            prev = frame;
        }
        let mel_pre = Tensor::stack(&frames, 1)?;
        let mel_post = self.refine(&mel_pre, &batch.mask)?;
        Ok(crate::nn::apply_mask(&mel_post.detach(), &batch.mask)?)
    }
}

/// Reconstruction, regularization and adversarial terms combined as
/// `pre + post + l2 + lambda * adv`.
pub fn am_loss(
    net: &AcousticNet,
    out: &AmOutputs,
    target_mel: &Tensor,
    batch: &AmBatch,
    lambda: f64,
    l2_weight: f64,
) -> Result<AmLossBreakdown> {
    let mask = &batch.mask;
    let recon_mse_pre = masked_mean(&(&out.mel_pre - target_mel)?.sqr()?, mask)?;
    let recon_mse_post = masked_mean(&(&out.mel_post - target_mel)?.sqr()?, mask)?;
    let l2_reg = (net.ps.l2_sum()? * l2_weight)?;
    let adv_ce = style_cross_entropy(&out.style_logits, &batch.style, mask)?;
    let mut total = ((&recon_mse_pre + &recon_mse_post)? + &l2_reg)?;
    if lambda != 0.0 {
        total = (total + (&adv_ce * lambda)?)?;
    }
    Ok(AmLossBreakdown { recon_mse_pre, recon_mse_post, l2_reg, adv_ce, total })
}

/// Mean cross-entropy over valid frames; `labels` is `(B, T)` u32.
pub fn style_cross_entropy(logits: &Tensor, labels: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let classes = logits.dim(D::Minus1)?;
    let log_probs = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    let range = Tensor::arange(0u32, classes as u32, logits.device())?.reshape((1, 1, classes))?;
    let one_hot = labels.unsqueeze(2)?.broadcast_eq(&range)?.to_dtype(logits.dtype())?;
    let per_frame = (log_probs * one_hot)?.sum(D::Minus1)?.neg()?;
    masked_mean(&per_frame, mask)
}

/// Latent frames of every valid position, one row per frame.
pub fn extract_latents(net: &AcousticNet, batch: &AmBatch, target_mel: &Tensor) -> Result<Vec<Vec<f32>>> {
    let out = net.forward_teacher_forced(batch, target_mel, None)?;
    let lat = out.latent.to_dtype(DType::F32)?.to_vec3::<f32>()?;
    let mut rows = Vec::new();
    for (b, seq) in lat.into_iter().enumerate() {
        rows.extend(seq.into_iter().take(batch.lengths[b]));
    }
    Ok(rows)
}
