//! Dense sine network that carries exact input derivatives forward and
//! returns parameter gradients of losses built from them.

pub mod checkpoint;
pub mod jet;
pub mod mlp;
pub mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use jet::{hess_index, Jet2, JetOrder, HESS_LEN, HESS_PAIRS, NUM_INPUTS};
pub use mlp::{
    infer_config, linear_jet, loss_param_grad, modified_mlp_jet, sine_jet, JetBatch, CHUNK_POINTS,
};
pub use params::{GradAccumulator, MlpConfig, ParamStore, TensorRecord, TensorRole};
