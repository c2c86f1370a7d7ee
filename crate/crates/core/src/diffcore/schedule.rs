use serde::{Deserialize, Serialize};

/// Reduce-on-plateau learning-rate policy driven by a higher-is-better metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub initial_lr: f64,
    pub factor: f64,
    /// Consecutive non-improving evaluations that trigger a decay.
    pub patience: usize,
    pub min_lr: f64,
}

impl PlateauConfig {
    /// Halve after 1,000 steps without improvement, floor 5e-5.
    pub fn small_data(eval_interval: usize) -> Self {
        Self {
            initial_lr: 1e-3,
            factor: 0.5,
            patience: steps_to_evals(1000, eval_interval),
            min_lr: 5e-5,
        }
    }

    /// Multiply by 0.8 after 500 steps without improvement, floor 2e-5.
    pub fn large_data(eval_interval: usize) -> Self {
        Self {
            initial_lr: 1e-3,
            factor: 0.8,
            patience: steps_to_evals(500, eval_interval),
            min_lr: 2e-5,
        }
    }
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self::small_data(1000)
    }
}

fn steps_to_evals(steps: usize, eval_interval: usize) -> usize {
    steps.div_ceil(eval_interval.max(1)).max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlateauSchedule {
    cfg: PlateauConfig,
    lr: f64,
    best: Option<f64>,
    stale: usize,
}

impl PlateauSchedule {
    pub fn new(cfg: PlateauConfig) -> Self {
        Self {
            cfg,
            lr: cfg.initial_lr,
            best: None,
            stale: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one evaluation and returns the learning rate to use next.
    pub fn observe(&mut self, metric: f64) -> f64 {
        match self.best {
            Some(best) if metric <= best => {
                self.stale += 1;
                if self.stale >= self.cfg.patience {
                    self.lr = (self.lr * self.cfg.factor).max(self.cfg.min_lr);
                    self.stale = 0;
                }
            }
            _ => {
                self.best = Some(metric);
                self.stale = 0;
            }
        }
        self.lr
    }
}

/// Learning rate after replaying `history` through a fresh schedule.
pub fn plateau_lr(history: &[f64], cfg: PlateauConfig) -> f64 {
    let mut s = PlateauSchedule::new(cfg);
    for &m in history {
        s.observe(m);
    }
    s.lr()
}
