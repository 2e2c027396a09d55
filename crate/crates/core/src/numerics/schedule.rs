use std::f64::consts::PI;

use super::NumericsError;

/// Linear warmup from 0 to `base_lr`, then cosine decay to 0 on the final
/// step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub steps_per_epoch: usize,
}

impl LrSchedule {
    pub fn new(
        base_lr: f64,
        warmup_epochs: usize,
        total_epochs: usize,
        steps_per_epoch: usize,
    ) -> Result<Self, NumericsError> {
        if !(base_lr.is_finite() && base_lr >= 0.0) {
            return Err(NumericsError::InvalidLearningRate(base_lr));
        }
        if total_epochs == 0 || steps_per_epoch == 0 || warmup_epochs >= total_epochs {
            return Err(NumericsError::InvalidSchedule(format!(
                "warmup {warmup_epochs} / total {total_epochs} epochs, {steps_per_epoch} steps per epoch"
            )));
        }
        Ok(Self {
            base_lr,
            warmup_epochs,
            total_epochs,
            steps_per_epoch,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.total_epochs * self.steps_per_epoch
    }

    pub fn warmup_steps(&self) -> usize {
        self.warmup_epochs * self.steps_per_epoch
    }

    pub fn lr_at(&self, step: usize) -> Result<f64, NumericsError> {
        let total = self.total_steps();
        if step >= total {
            return Err(NumericsError::StepOutOfRange { step, total });
        }
        let warm = self.warmup_steps();
        if step < warm {
            return Ok(self.base_lr * step as f64 / warm as f64);
        }
        let span = total - 1 - warm;
        let progress = if span == 0 {
            0.0
        } else {
            (step - warm) as f64 / span as f64
        };
        Ok(self.base_lr * 0.5 * (1.0 + (PI * progress).cos()))
    }
}
