//! Learned pilot matrix and covariance-feature decoder.
//!
//! The encoder reproduces `Y = AX + Z` with two real weight matrices
//! (`Re(A)`, `Im(A)`); the decoder reads the sample covariance `YY^H / M`
//! through `2L^2` real features and outputs one sigmoid score per device.
//! Both are trained jointly on binary cross-entropy.

mod adam;
mod checkpoint;
mod decoder;
mod encoder;
mod eq4;
mod features;
mod network;
mod train;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use checkpoint::{load_model, read_model, save_model, write_model, CheckpointHeader, CHECKPOINT_VERSION};
pub use decoder::{decoder_forward, decoder_forward_values, DecoderCache, DecoderConfig, DecoderWeights, DenseLayer, CLAMP};
pub use encoder::{encoder_forward, extract_sensing_matrix, EncoderWeights, DEGENERATE_COLUMN_NORM, EXTRACT_TOLERANCE};
pub use eq4::{
    asymptotic_covariance_check, eq4_decompose, khatri_rao_conj, row_powers, vec_column, CovarianceReport,
    Eq4Decomposition,
};
pub use features::{covariance_features, sample_covariance, CovFeatures, FeatureKind};
pub use network::{
    backward, batch_loss_value, bce_loss, forward_batch, loss_and_gradients, loss_of, parameter_tensors,
    ForwardCache, Gradients, Model,
};
pub use train::{evaluate_loss, score_samples, train, write_log_csv, EpochLog, NoisePolicy, TrainConfig, TrainOutcome};
