use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bafe::{frame_features, BafeConfig};
use crate::codec_features::{BoundingBox, Gop};
use crate::mini_encoder::GroundTruth;

use super::loss::{loss_grad, LossConfig, LossParts, SeqTargets};
use super::network::{backward_seq, forward_seq};
use super::params::ModelParams;
use super::{ModelError, Result};

/// One real proposal of a training GOP.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalTrack {
    /// Flattened features per P-frame.
    pub feats: Vec<Vec<f64>>,
    pub align: Vec<BoundingBox>,
    pub target: Vec<Option<BoundingBox>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub frames: usize,
    pub proposals: Vec<ProposalTrack>,
}

/// Teacher-forced sample: frame `n` is aligned at the ground-truth box of
/// frame `n - 1` (or the last box seen before the object left).
///
/// `gt[n][j]` is object `j` in frame `n`; objects absent from frame 0 are
/// not proposals.
pub fn build_sample(gop: &Gop, gt: &GroundTruth, cfg: &BafeConfig) -> Result<TrainSample> {
    let frames = gop.gop_size() - 1;
    if gt.len() != gop.gop_size() {
        return Err(ModelError::Shape(format!("ground truth has {} frames, GOP has {}", gt.len(), gop.gop_size())));
    }
    let objects = gt[0].len();
    if let Some(n) = gt.iter().position(|f| f.len() != objects) {
        return Err(ModelError::Shape(format!("ground-truth frame {n} lists {} objects, frame 0 lists {objects}", gt[n].len())));
    }
    let proposals = (0..objects)
        .filter_map(|j| {
            let mut last = gt[0][j]?;
            let mut t = ProposalTrack {
                feats: Vec::with_capacity(frames),
                align: Vec::with_capacity(frames),
                target: Vec::with_capacity(frames),
            };
            for (i, pf) in gop.pframes().iter().enumerate() {
                t.feats.push(frame_features(pf.mv(), pf.residual_y(), &last, cfg).to_vec());
                t.align.push(last);
                let y = gt[i + 1][j];
                t.target.push(y);
                if let Some(b) = y {
                    last = b;
                }
            }
            Some(t)
        })
        .collect();
    Ok(TrainSample { frames, proposals })
}

fn check_sample(params: &ModelParams, s: &TrainSample) -> Result<()> {
    let want = params.dims.input_dim();
    for (j, p) in s.proposals.iter().enumerate() {
        if p.feats.len() != s.frames {
            return Err(ModelError::Shape(format!("proposal {j} has {} frames, expected {}", p.feats.len(), s.frames)));
        }
        if let Some(f) = p.feats.iter().find(|f| f.len() != want) {
            return Err(ModelError::Shape(format!("proposal {j}: feature length {}, model expects {want}", f.len())));
        }
    }
    Ok(())
}

fn run(params: &ModelParams, s: &TrainSample, cfg: &LossConfig, grad: Option<&mut [f64]>) -> Result<LossParts> {
    check_sample(params, s)?;
    let l = params.layout();
    let caches: Vec<_> = s
        .proposals
        .iter()
        .map(|p| forward_seq(params, &l, &p.feats.iter().map(Vec::as_slice).collect::<Vec<_>>()))
        .collect();
    let zero = vec![0.0; params.dims.input_dim()];
    let pad = forward_seq(params, &l, &vec![zero.as_slice(); s.frames]);
    let seqs: Vec<SeqTargets> = caches
        .iter()
        .zip(&s.proposals)
        .map(|(c, p)| SeqTargets {
            out: &c.out,
            align: &p.align,
            target: &p.target,
        })
        .collect();
    let lg = loss_grad(&seqs, &pad.out, cfg)?;
    if let Some(grad) = grad {
        for (c, d) in caches.iter().zip(&lg.d_real) {
            backward_seq(params, &l, c, d, grad);
        }
        if cfg.slots > s.proposals.len() {
            backward_seq(params, &l, &pad, &lg.d_pad, grad);
        }
    }
    Ok(lg.parts)
}

pub fn sample_loss(params: &ModelParams, s: &TrainSample, cfg: &LossConfig) -> Result<LossParts> {
    run(params, s, cfg, None)
}

/// Loss of one GOP and its exact gradient with respect to every parameter.
pub fn loss_and_grad(params: &ModelParams, s: &TrainSample, cfg: &LossConfig) -> Result<(LossParts, Vec<f64>)> {
    let mut grad = vec![0.0; params.param_count()];
    let parts = run(params, s, cfg, Some(&mut grad))?;
    Ok((parts, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 2,
            seed: 0,
            loss: LossConfig::default(),
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn update(&mut self, values: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for i in 0..values.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            values[i] -= cfg.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Adam over shuffled mini-batches. Returns the trained parameters and the
/// mean per-GOP loss of every epoch (measured while training).
pub fn train(params: ModelParams, data: &[TrainSample], cfg: &TrainConfig) -> Result<(ModelParams, Vec<f64>)> {
    if cfg.batch_size == 0 || !(cfg.lr.is_finite() && cfg.lr > 0.0) {
        return Err(ModelError::InvalidDims(format!(
            "batch size {} and learning rate {} must be positive",
            cfg.batch_size, cfg.lr
        )));
    }
    for s in data {
        check_sample(&params, s)?;
    }
    let mut params = params;
    let n = params.param_count();
    let mut adam = Adam {
        m: vec![0.0; n],
        v: vec![0.0; n],
        step: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(LossParts, Vec<f64>)>> =
                batch.par_iter().map(|&i| loss_and_grad(&params, &data[i], &cfg.loss)).collect();
            let mut grad = vec![0.0; n];
            for (&i, r) in batch.iter().zip(results) {
                let (parts, g) = r?;
                if !parts.total.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    return Err(ModelError::NonFinite { epoch, sample: i });
                }
                epoch_loss += parts.total;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.update(&mut params.values, &grad, cfg);
        }
        let mean = if data.is_empty() { 0.0 } else { epoch_loss / data.len() as f64 };
        log::debug!("epoch {epoch}: loss {mean:.5}");
        log.push(mean);
    }
    Ok((params, log))
}
