/// Smallest step a random-walk proposal may use.
pub const MIN_STEP: f64 = 1e-8;

/// Robbins-Monro tuning of a random-walk step size toward a target
/// acceptance probability. `log s += t^{-0.6} (alpha - target)` after every
/// proposal until [`Scaler::freeze`] is called.
#[derive(Debug, Clone)]
pub struct Scaler {
    log_step: f64,
    target: f64,
    updates: u64,
    frozen: bool,
    proposed: u64,
    accepted: u64,
}

impl Scaler {
    pub fn new(step: f64, target: f64, adapt: bool) -> Self {
        Scaler {
            log_step: step.max(MIN_STEP).ln(),
            target,
            updates: 0,
            frozen: !adapt,
            proposed: 0,
            accepted: 0,
        }
    }

    pub fn step(&self) -> f64 {
        self.log_step.exp().max(MIN_STEP)
    }

    /// Records one proposal with acceptance probability `alpha`.
    pub fn observe(&mut self, alpha: f64, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
        if !self.frozen {
            self.updates += 1;
            let gain = (self.updates as f64).powf(-0.6);
            let alpha = if alpha.is_nan() { 0.0 } else { alpha.min(1.0) };
            self.log_step = (self.log_step + gain * (alpha - self.target)).clamp(MIN_STEP.ln(), 50.0);
        }
    }

    /// Stops adaptation and resets the acceptance counters.
    pub fn freeze(&mut self) {
        self.frozen = true;
        self.proposed = 0;
        self.accepted = 0;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn proposed(&self) -> u64 {
        self.proposed
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}
