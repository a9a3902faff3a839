use serde::{Deserialize, Serialize};

pub const LR_WINDOW: usize = 100;
pub const LR_FACTOR: f64 = 1.25;
/// Iterations that must pass after a decay (or the start) before the next
/// comparison may fire.
pub const LR_MIN_GAP: usize = 200;
pub const LR_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrDecay {
    /// Number of iterations completed when the decay fired.
    pub iteration: usize,
    pub lr: f64,
}

/// Divides the learning rate by 1.25 when the mean loss of a 100-iteration
/// block is not strictly below the previous block's mean.
#[derive(Clone, Debug)]
pub struct LrScheduler {
    lr: f64,
    window_sum: f64,
    window_len: usize,
    previous_mean: Option<f64>,
    last_decay: usize,
    decays: Vec<LrDecay>,
}

impl LrScheduler {
    pub fn new(lr: f64) -> Self {
        LrScheduler {
            lr,
            window_sum: 0.0,
            window_len: 0,
            previous_mean: None,
            last_decay: 0,
            decays: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn decays(&self) -> &[LrDecay] {
        &self.decays
    }

    /// Feeds the loss of iteration `iteration` (0-based, consecutive) and
    /// returns the learning rate to use next.
    pub fn observe(&mut self, iteration: usize, loss: f64) -> f64 {
        self.window_sum += loss;
        self.window_len += 1;
        if self.window_len < LR_WINDOW {
            return self.lr;
        }
        let done = iteration + 1;
        let mean = self.window_sum / LR_WINDOW as f64;
        self.window_sum = 0.0;
        self.window_len = 0;
        if let Some(prev) = self.previous_mean {
            // NaN counts as stalled
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            let stalled = !(mean < prev);
            if stalled && done - self.last_decay >= LR_MIN_GAP && self.lr > LR_FLOOR {
                self.lr = (self.lr / LR_FACTOR).max(LR_FLOOR);
                self.last_decay = done;
                self.decays.push(LrDecay {
                    iteration: done,
                    lr: self.lr,
                });
            }
        }
        self.previous_mean = Some(mean);
        self.lr
    }
}
