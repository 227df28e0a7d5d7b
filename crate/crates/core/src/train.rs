//! The stage-1 training loop: draw a task, build a batch, take a step.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{train_step, Model, OptimConfig, OptimizerState, StepStats};
use crate::sampler::{make_batch, BatchParams, SamplingSchedule, Task, TaskData};
use crate::tokenizer::Vocabulary;
use crate::util::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch: BatchParams,
    pub optim: OptimConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch: BatchParams {
                batch_tokens: 1024,
                max_len: 40,
                ..BatchParams::default()
            },
            optim: OptimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub task: Task,
    pub stats: StepStats,
}

/// Train for `steps` steps, calling `on_step` after each one.
pub fn train_loop(
    model: &mut Model<f32>,
    opt: &mut OptimizerState,
    schedule: &SamplingSchedule,
    data: &TaskData,
    vocab: &Vocabulary,
    batch: &BatchParams,
    steps: u64,
    rng: &mut Rng,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<()> {
    for _ in 0..steps {
        let task = schedule.next_task(rng)?;
        let b = make_batch(&task, data, batch, rng, vocab)?;
        let stats = train_step(model, opt, &b, rng)?;
        on_step(&StepRecord {
            step: opt.step,
            task,
            stats,
        });
    }
    Ok(())
}
