/// Acceptance bookkeeping and Robbins-Monro scale adaptation for one
/// proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTuner {
    pub scale: f64,
    window_tries: u32,
    window_accepts: u32,
    tries: u64,
    accepts: u64,
}

impl StepTuner {
    pub fn new(scale: f64) -> Self {
        Self {
            scale,
            window_tries: 0,
            window_accepts: 0,
            tries: 0,
            accepts: 0,
        }
    }

    #[inline]
    pub fn record(&mut self, accepted: bool) {
        self.window_tries += 1;
        self.tries += 1;
        if accepted {
            self.window_accepts += 1;
            self.accepts += 1;
        }
    }

    /// Acceptance rate since construction or the last [`reset_totals`](Self::reset_totals).
    pub fn acceptance_rate(&self) -> f64 {
        if self.tries == 0 {
            0.0
        } else {
            self.accepts as f64 / self.tries as f64
        }
    }

    pub fn reset_totals(&mut self) {
        self.tries = 0;
        self.accepts = 0;
        self.window_tries = 0;
        self.window_accepts = 0;
    }

    /// Moves `ln(scale)` by `gain * (rate - target)` using the window since the
    /// last call. With `inverse` the scale is a precision-like quantity (larger
    /// means smaller moves) and the sign flips.
    pub fn adapt(&mut self, target: f64, gain: f64, inverse: bool) {
        if self.window_tries == 0 {
            return;
        }
        let rate = self.window_accepts as f64 / self.window_tries as f64;
        let step = gain * (rate - target);
        let step = if inverse { -step } else { step };
        self.scale *= libm::exp(step);
        self.window_tries = 0;
        self.window_accepts = 0;
    }
}

/// Gain for the `b`-th adaptation (1-based): `1 / sqrt(b)`.
pub fn adaptation_gain(batch: usize) -> f64 {
    1.0 / libm::sqrt(batch.max(1) as f64)
}
