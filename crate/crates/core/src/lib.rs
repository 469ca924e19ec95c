//! Preference-pair datasets for web-action prediction.
//!
//! Annotated interaction steps are turned into `(prompt, chosen, rejected)`
//! records: the page is cleaned and pruned around its candidate elements,
//! negatives are drawn from elements structurally close to the target in the
//! DOM, and their operations are perturbed toward CLICK. A small hashed-feature
//! policy trains on those records with the DPO objective (or plain likelihood)
//! so the objective, its gradient and the metrics can be checked end to end.

pub mod action;
pub mod cli;
pub mod dom;
pub mod eval;
pub mod manifest;
pub mod pairgen;
pub mod policy;
pub mod pruner;
pub mod sampler;
pub mod stats;
pub mod synthetic;

pub use action::{Action, OpKind};
pub use dom::{CandidateId, DomTree, NodeId};
