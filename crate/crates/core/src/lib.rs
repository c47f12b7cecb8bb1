//! Context-sensitive node embeddings by attentive pooling over first-order
//! neighborhoods, with the training loop and the link-prediction and
//! clustering evaluations around it.
//!
//! A pair `(s, t)` is represented by the embeddings of the neighbors of `s`
//! and of `t`. A bilinear alignment `tanh(S P T^T)` between the two sets is
//! max-pooled along each axis and softmax-normalized into attention weights,
//! and each endpoint's representation is the attention-weighted sum of its
//! neighbors' embeddings. Training ranks observed edges above sampled
//! negatives with a unit-margin hinge loss.

pub mod checkpoint;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod neighborhood;
pub mod rng;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use cluster::{spectral_clustering, ClusterAssignment};
pub use error::{GapError, Result};
pub use eval::{eval_clustering, eval_link_prediction, EvalReport};
pub use graph::{parse_edge_list, sample_negative, sample_nonedges, split_edges, EdgeSplit, Graph, IdMap};
pub use metrics::{ami, auc, mutual_information, nmi};
pub use model::{forward, mlp_forward, pair_embed, score, static_embedding, ForwardState, MlpParams, ModelParams};
pub use neighborhood::{first_order_neighbors, materialize, NeighborhoodSeq};
pub use trainer::{adam_step, backward, grad_check, hinge_loss, train, train_mlp, GradientSet, TrainConfig};
