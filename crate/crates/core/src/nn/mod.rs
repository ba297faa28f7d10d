//! Tensors, sequential conv/dense Q-networks with a recorded forward pass,
//! reverse-mode gradients, gradient clipping, Adam and checkpoints.

mod checkpoint;
mod error;
mod network;
mod optim;
mod spec;
mod tensor;

pub use checkpoint::{
    checkpoint_records, decode_records, encode_records, load_checkpoint, parse_checkpoint, read_checkpoint,
    record_text, save_checkpoint, save_checkpoint_with, text_record, Checkpoint, MAGIC, VERSION,
};
pub use error::{NnError, Result};
pub use network::{
    backward, dueling_combine, forward, init_network, predict, ComputationRecord, Gradients, NetworkParams,
};
pub use optim::{adam_step, clip_gradients, AdamState};
pub use spec::{ActShape, Layer, NetworkSpec};
pub use tensor::Tensor;

/// Index of the largest value; the lowest index wins exact ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
