//! Optimizer, schedule, pretraining and latent fine-tuning.

pub mod finetune;
pub mod lion;
pub mod pretrain;
pub mod schedule;

pub use finetune::{
    decoded_dbce, finetune, init_latent, posterior_latent, reference_rows, FinetuneConfig, FinetuneHistory, FinetuneRecord,
    LatentMatrix,
};
pub use lion::{lion_step, LionConfig, LionState};
pub use pretrain::{epoch_noise, pretrain, PretrainHistory, PretrainRecord, TrainConfig};
pub use schedule::{lr_schedule, Schedule};
