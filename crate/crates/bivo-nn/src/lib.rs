//! Dense-layer neural substrate for the BiVO models: row-major tensors,
//! feed-forward MLPs with reverse-mode gradients over a static layer list,
//! Adam, Gaussian and Gumbel-softmax reparameterization, KL divergences,
//! finite-difference checking, and a versioned binary checkpoint format.
//!
//! No general autodiff graph: both models are feed-forward stacks, so
//! gradients are hand-chained through [`Mlp::backward`] and the closed-form
//! loss-term derivatives in `ops`.

pub mod adam;
pub mod checkpoint;
pub mod fd;
pub mod mlp;
pub mod ops;
pub mod tensor;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use fd::{central_diff_grad, max_rel_error};
pub use mlp::{mlp_forward, Activation, Mlp, MlpCache, MlpSpec};
pub use ops::{
    argmax_one_hot, bce_with_logits, bce_with_logits_grad, entropy, gaussian_reparam,
    gumbel_softmax_sample, kl_categorical, kl_gaussian_standard, kl_gaussian_to_gaussian,
    log_softmax, sample_standard_normal, sigmoid, softmax, softplus, LOG_VAR_MAX, LOG_VAR_MIN,
};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid probability input: {0}")]
    Prob(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}
