//! Learning deterministic probabilistic circuits from binary data.
//!
//! Cutset networks with Chow-Liu-tree leaves are grown greedily, each cut
//! accepted only if it improves an exact Bayesian-Dirichlet score or a BIC
//! score whose parameter count includes the leaf trees. Learned networks
//! support likelihood evaluation, sampling and MPE, can be mixed by
//! structural EM, and compile to explicit smooth, decomposable and
//! deterministic circuits.

pub mod circuit;
pub mod clt;
pub mod cnet;
pub mod data;
pub mod error;
pub mod mixture;
pub mod numerics;
pub mod par;
pub mod scores;

pub use clt::{learn_clt, mutual_information, ChowLiuTree};
pub use data::WeightedDataset;
pub use error::{Error, Result};
pub use cnet::{learn_cnet, learn_cnet_traced, CutsetNetwork, LearnerConfig, Node};
pub use scores::{bd_cnet, bic_cnet, ScoreConfig, ScoreKind};
pub use circuit::{compile, Circuit, CircuitNode, CircuitSize};
pub use mixture::{e_step, kmeans_init, learn_sem, m_step, Mixture, Responsibilities, SemConfig, SemResult};
