//! The flattening model: sub-networks, objectives, training, inference and
//! seam extraction.

pub mod losses;
pub mod network;
pub mod seams;
pub mod train;

use rayon::prelude::*;

pub use losses::{
    eigen_gap, loss_conformal, loss_cycle, loss_unwrap, loss_wrap, total_loss, CycleTerms, LossParts, LossWeights,
    Reduction,
};
pub use network::{make_grid, Architecture, EmbedHead, FlattenModel, ModelVars, Net, WrapOut, Wrapped};
pub use seams::{extract_seams, match_uv_by_nn, SeamSet};
pub use train::{
    evaluate_step, forward_branch_a, forward_branch_b, train, train_with_progress, AblationMode, Batch, BranchA,
    BranchB, BranchOutputs, EarlyStop, HistoryRow, LossHistory, StepEval, Thresholds, TrainConfig, TrainOutcome,
    TrainSource, Trainer,
};

use crate::error::Result;
use crate::geometry::{Vec2, Vec3};

const CHUNK: usize = 4096;

/// UV of arbitrary surface points: `Unwrap(Cut(points))`, or `Unwrap(points)`
/// when the Cut-Net is disabled.
pub fn parameterize(model: &FlattenModel, points: &[Vec3], use_cut: bool) -> Result<Vec<Vec2>> {
    let chunks: Vec<Result<Vec<Vec2>>> = points
        .par_chunks(CHUNK)
        .map(|chunk| {
            let x = network::matrix3(chunk);
            let x = if use_cut { model.cut_net(&x)? } else { x };
            Ok(network::rows2(&model.unwrap_net(&x)?))
        })
        .collect();
    let mut out = Vec::with_capacity(points.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}
