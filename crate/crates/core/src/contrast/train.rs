use std::io::{self, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::losses::{CodecMode, DenominatorMode};
use super::model::{ToySeq2Seq, PARAM_COUNT};
use super::objective::{batch_loss, Weights};
use super::{ContrastError, Example, Vocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Contrastive temperature.
    pub gamma: f64,
    /// Negatives used per example.
    pub k: usize,
    /// Hinge margin, in nats.
    pub eta: f64,
    pub lambda_enc: f64,
    pub lambda_dec: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub denominator_mode: DenominatorMode,
    pub codec_mode: CodecMode,
    /// Rescale the batch gradient to at most this norm.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            k: 1,
            eta: 1.0,
            lambda_enc: 2.0,
            lambda_dec: 2.0,
            learning_rate: 0.1,
            steps: 1000,
            batch_size: 8,
            seed: 0,
            denominator_mode: DenominatorMode::Standard,
            codec_mode: CodecMode::Pm,
            max_grad_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ContrastError> {
        let bad = |f: &str| Err(ContrastError::InvalidConfig(f.to_string()));
        if !(self.gamma > 0.0) {
            return bad("gamma");
        }
        if self.k < 1 {
            return bad("k");
        }
        if !(self.eta >= 0.0) {
            return bad("eta");
        }
        if !(self.lambda_enc >= 0.0) {
            return bad("lambda_enc");
        }
        if !(self.lambda_dec >= 0.0) {
            return bad("lambda_dec");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate");
        }
        if self.batch_size < 1 {
            return bad("batch_size");
        }
        if matches!(self.max_grad_norm, Some(c) if !(c > 0.0)) {
            return bad("max_grad_norm");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: u64,
    pub ce: f64,
    pub enc: f64,
    pub dec: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionLog {
    pub step: usize,
    pub epoch: u64,
    pub gold_lp: f64,
    pub neg_lp: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub positions: Vec<PositionLog>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Contrast(#[from] ContrastError),
    /// The model is left at its last finite parameters.
    #[error("non-finite loss or gradient at step {step}")]
    NonFinite { step: usize, log: TrainLog },
}

/// Minibatch gradient descent over a fixed dataset.
pub fn train(model: &mut ToySeq2Seq, data: &[Example], cfg: &TrainConfig) -> Result<TrainLog, TrainError> {
    train_dynamic(model, cfg, |_| data.to_vec())
}

/// Like [`train`], but asks `data_for_epoch` for the examples of each epoch,
/// which lets negatives be rebuilt between epochs.
pub fn train_dynamic<F>(
    model: &mut ToySeq2Seq,
    cfg: &TrainConfig,
    mut data_for_epoch: F,
) -> Result<TrainLog, TrainError>
where
    F: FnMut(u64) -> Vec<Example>,
{
    cfg.validate()?;
    let weights = Weights::from_config(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainLog::default();
    let mut step = 0;
    let mut epoch = 0u64;
    while step < cfg.steps {
        let data = data_for_epoch(epoch);
        if data.is_empty() {
            return Err(ContrastError::EmptyDataset.into());
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if step == cfg.steps {
                break;
            }
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            let (b, mut grads) = batch_loss(model, &batch, cfg, weights)?;
            if !b.total.is_finite() || !grads.is_finite() {
                log::warn!("aborting at step {step}: non-finite loss {}", b.total);
                return Err(TrainError::NonFinite { step, log });
            }
            if let Some(clip) = cfg.max_grad_norm {
                let norm = grads.norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            let before = model.clone();
            model.apply(&grads, cfg.learning_rate);
            if !model.is_finite() {
                *model = before;
                return Err(TrainError::NonFinite { step, log });
            }
            log.positions.extend(b.positions.iter().map(|p| PositionLog {
                step,
                epoch,
                gold_lp: p.gold_lp,
                neg_lp: p.neg_lp,
            }));
            log.steps.push(StepRecord {
                step,
                epoch,
                ce: b.ce,
                enc: b.enc,
                dec: b.dec,
                total: b.total,
            });
            if step % 100 == 0 {
                log::debug!("step {step} epoch {epoch}: total {:.4} ce {:.4}", b.total, b.ce);
            }
            step += 1;
        }
        epoch += 1;
    }
    Ok(log)
}

/// Loss curve as CSV.
pub fn write_loss_csv<W: Write>(mut w: W, log: &TrainLog) -> io::Result<()> {
    writeln!(w, "step,epoch,ce,enc,dec,total")?;
    for r in &log.steps {
        writeln!(w, "{},{},{},{},{},{}", r.step, r.epoch, r.ce, r.enc, r.dec, r.total)?;
    }
    Ok(())
}

/// Everything needed to reload a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub vocab: Vocab,
    pub train: TrainConfig,
    pub model: ToySeq2Seq,
}

pub fn write_checkpoint<W: Write>(w: W, ckpt: &Checkpoint) -> io::Result<()> {
    serde_json::to_writer(w, ckpt).map_err(io::Error::from)
}

pub fn read_checkpoint<R: Read>(r: R) -> io::Result<Checkpoint> {
    let mut ckpt: Checkpoint = serde_json::from_reader(r).map_err(io::Error::from)?;
    ckpt.vocab.reindex();
    let m = &ckpt.model;
    let shapes_ok = m.params.len() == PARAM_COUNT && m.params.iter().all(|t| t.data.len() == t.rows * t.cols);
    if !shapes_ok || m.config.vocab_size != ckpt.vocab.len() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "checkpoint shapes are inconsistent",
        ));
    }
    Ok(ckpt)
}
