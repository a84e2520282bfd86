//! Box embedding, fusion, bidirectional LSTM and refinement head, with the
//! training loss, analytic gradients and an Adam trainer.

mod loss;
mod network;
mod params;
mod train;

use thiserror::Error;

use crate::bafe::AFeatures;

pub use loss::{focal_loss, giou, loss_total, LossConfig, LossParts};
pub use params::{init_params, ModelDims, ModelParams, Variant, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, OUTPUT_DIM};
pub use train::{build_sample, loss_and_grad, sample_loss, train, ProposalTrack, TrainConfig, TrainSample};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidDims(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{count} proposals exceed the {slots} available slots")]
    TooManyProposals { count: usize, slots: usize },
    #[error("non-finite loss in epoch {epoch} (sample {sample})")]
    NonFinite { epoch: usize, sample: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Refinement of one box in one frame, in normalized units, plus the
/// objectness logit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Delta {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
    pub logit: f64,
}

impl Delta {
    pub fn from_array(a: [f64; OUTPUT_DIM]) -> Self {
        Self {
            dx: a[0],
            dy: a[1],
            dw: a[2],
            dh: a[3],
            logit: a[4],
        }
    }

    pub fn to_array(&self) -> [f64; OUTPUT_DIM] {
        [self.dx, self.dy, self.dw, self.dh, self.logit]
    }

    pub fn objectness(&self) -> f64 {
        1.0 / (1.0 + (-self.logit).exp())
    }
}

/// Runs every proposal's feature sequence through the model.
pub fn forward_gop(params: &ModelParams, feats: &[Vec<AFeatures>]) -> Result<Vec<Vec<Delta>>> {
    let d = &params.dims;
    let l = params.layout();
    let t_len = feats.first().map_or(0, Vec::len);
    feats
        .iter()
        .enumerate()
        .map(|(j, seq)| {
            if seq.is_empty() || seq.len() != t_len {
                return Err(ModelError::Shape(format!(
                    "proposal {j} has {} frames, expected {t_len} (non-empty)",
                    seq.len()
                )));
            }
            if let Some(f) = seq.iter().find(|f| f.mv_feat.len() != d.mv_len || f.dct_feat.len() != d.dct_len) {
                return Err(ModelError::Shape(format!(
                    "proposal {j}: features ({} mv, {} dct) do not match the model ({} mv, {} dct)",
                    f.mv_feat.len(),
                    f.dct_feat.len(),
                    d.mv_len,
                    d.dct_len
                )));
            }
            let flat: Vec<Vec<f64>> = seq.iter().map(AFeatures::to_vec).collect();
            let cache = network::forward_seq(params, &l, &flat.iter().map(Vec::as_slice).collect::<Vec<_>>());
            Ok(cache.out.into_iter().map(Delta::from_array).collect())
        })
        .collect()
}
