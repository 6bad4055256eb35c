//! UGMCS-Net forward computation, parameters and differentiation.

mod config;
mod filters;
mod gemm;
mod net;
mod state;
mod tape;
mod tensor;

pub use config::{BranchToggles, FilterAssignment, FilterKind, NetConfig};
pub use filters::{depthwise_replicate, histogram_bin, otsu_threshold, BetweenClass, GaborConfig};
pub use net::{
    faab_forward, fem_forward, gabor_filter, iucm_forward, net_forward, uam_forward, Branch,
    ForwardOutputs, IucmOutputs, UamOutputs,
};
pub use state::{Checkpoint, Gradients, NetState, Param, ParamBlob, CHECKPOINT_FORMAT_VERSION};
pub use tape::{cosine_similarity, logistic, softmax_attention};
pub use tensor::Tensor;

pub(crate) use net::{build_graph, Graph};
pub(crate) use tape::{Tape, Var};
