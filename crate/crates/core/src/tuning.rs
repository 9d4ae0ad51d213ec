//! Burn-in tuning of random-walk proposal scales.

/// Robbins-Monro adaptation of a log proposal scale toward a target
/// acceptance rate; frozen after burn-in so the kept-sample kernel is fixed.
pub(crate) struct ProposalTuner {
    log_sd: f64,
    step: usize,
    accepted: usize,
    proposed: usize,
    tuning: bool,
}

const TARGET_ACCEPT: f64 = 0.35;

impl ProposalTuner {
    pub fn new(sd: f64) -> Self {
        Self { log_sd: sd.ln(), step: 0, accepted: 0, proposed: 0, tuning: true }
    }

    pub fn sd(&self) -> f64 {
        self.log_sd.exp()
    }

    pub fn record(&mut self, accepted: bool) {
        if self.tuning {
            self.step += 1;
            let gain = 2.0 * (self.step as f64).powf(-0.6);
            let indicator = if accepted { 1.0 } else { 0.0 };
            self.log_sd += gain * (indicator - TARGET_ACCEPT);
            self.log_sd = self.log_sd.clamp(-10.0, 5.0);
        } else {
            self.proposed += 1;
            if accepted {
                self.accepted += 1;
            }
        }
    }

    pub fn freeze(&mut self) {
        self.tuning = false;
    }

    /// Acceptance rate over post-freeze proposals.
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}
