use super::{ModelConfig, ModelError};

/// Exact number of learnable scalars of `config`.
///
/// Counts the input embedding (`input_dim·H + H`), per layer one `H × H`
/// weight and an `H` bias for every linear map plus `2H` batch-norm affine
/// parameters when enabled, and the readout (`H·C + C`). Inner iterations
/// share weights, so `T` does not enter.
pub fn count_params(config: &ModelConfig) -> usize {
    let h = config.hidden;
    let embed = config.input_dim * h + h;
    let norm = if config.batch_norm { 2 * h } else { 0 };
    let layer = config.arch.linear_maps() * (h * h + h) + norm;
    let readout = h * config.n_classes + config.n_classes;
    embed + config.layers * layer + readout
}

/// Largest hidden width whose parameter count stays within `budget`.
///
/// The `hidden` field of `template` is ignored.
pub fn solve_hidden_for_budget(template: &ModelConfig, budget: usize) -> Result<usize, ModelError> {
    let count = |h: usize| count_params(&ModelConfig { hidden: h, ..template.clone() });
    let minimum = count(1);
    if minimum > budget {
        return Err(ModelError::Infeasible { budget, minimum });
    }
    // count is strictly increasing in h
    let mut hi = 2;
    while count(hi) <= budget {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if count(mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
