//! Answer masks over the encoder state, and their training.

pub mod heads;
pub mod reinforce;

pub use heads::{apply_mask, mask_pretrain_loss, rl_mask, sl_mask};
pub use reinforce::{rl_sample_action, Ablations, RlConfig};
