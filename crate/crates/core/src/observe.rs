//! Per-epoch progress reporting shared by the training loops.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub stage: &'static str,
    pub epoch: usize,
    pub loss: f64,
    /// Items skipped this epoch (documents without in-vocabulary tokens).
    #[serde(skip_serializing_if = "is_zero")]
    pub skipped: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

pub trait Observer {
    fn epoch(&mut self, log: &EpochLog);
}

/// Discards everything.
impl Observer for () {
    fn epoch(&mut self, _log: &EpochLog) {}
}

impl<F: FnMut(&EpochLog)> Observer for F {
    fn epoch(&mut self, log: &EpochLog) {
        self(log)
    }
}

/// Collects the losses, mostly for tests.
#[derive(Debug, Default)]
pub struct LossHistory(pub Vec<EpochLog>);

impl LossHistory {
    pub fn losses(&self, stage: &str) -> Vec<f64> {
        self.0
            .iter()
            .filter(|l| l.stage == stage)
            .map(|l| l.loss)
            .collect()
    }
}

impl Observer for LossHistory {
    fn epoch(&mut self, log: &EpochLog) {
        self.0.push(log.clone());
    }
}
