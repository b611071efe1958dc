use crate::{Error, Result};

/// Easy-to-hard schedule: `beta = min(beta_max, beta_start + beta_step * floor(epoch / beta_period))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumState {
    pub m_outer: usize,
    pub beta: f64,
    pub beta_start: f64,
    pub beta_step: f64,
    pub beta_period: usize,
    pub beta_max: f64,
}

impl Default for CurriculumState {
    fn default() -> Self {
        Self {
            m_outer: 1000,
            beta: 0.6,
            beta_start: 0.6,
            beta_step: 0.1,
            beta_period: 100,
            beta_max: 1.0,
        }
    }
}

impl CurriculumState {
    pub fn validate(&self) -> Result<()> {
        if self.m_outer == 0 {
            return Err(Error::Config("m_outer must be at least 1".into()));
        }
        for (name, v) in [
            ("beta", self.beta),
            ("beta_start", self.beta_start),
            ("beta_max", self.beta_max),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} = {v} outside (0, 1]")));
            }
        }
        if !(self.beta_step >= 0.0 && self.beta_step.is_finite()) {
            return Err(Error::Config("beta_step must be finite and >= 0".into()));
        }
        if self.beta_period == 0 {
            return Err(Error::Config("beta_period must be at least 1".into()));
        }
        Ok(())
    }

    pub fn beta_at(&self, epoch: usize) -> f64 {
        let steps = (epoch / self.beta_period) as f64;
        let raw = (self.beta_start + self.beta_step * steps).min(self.beta_max);
        // snap to a 1e-12 grid so 0.6 + 0.1 * 2 reads back as 0.8
        (raw * 1e12).round() / 1e12
    }
}

/// State for `epoch`. Idempotent: only the schedule fields and `epoch` matter.
pub fn advance_curriculum(state: &CurriculumState, epoch: usize) -> CurriculumState {
    CurriculumState {
        beta: state.beta_at(epoch),
        ..*state
    }
}
