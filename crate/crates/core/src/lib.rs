//! Document-level event causality identification over a heterogeneous
//! phrase/sentence/statement/pair graph, with GATv2 message passing and
//! code-switched contrastive training.

pub mod checkpoint;
pub mod contrastive;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gat;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod optim;
pub mod phrase;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{GimcError, Result};
