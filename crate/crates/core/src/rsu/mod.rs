//! RSU grid groups and their BFT aggregation of cluster blocks.

mod bft;
mod group;
mod node;
pub mod schedule;
mod statement;
mod validate;

pub use bft::{confirm_message, BftInstance, BftOutput};
pub use group::{group_rsus, GroupError, GroupId, RsuGroup};
pub use node::{BftMsg, RoundOutcome, RsuNode};
pub use statement::{
    verify_quorum_cert, AggregatedStatement, QcFault, QcSignature, RevocationCandidate,
    StatementBody,
};
pub use validate::{validate_cluster_block, BlockFault, Linkage, RsuChainView};
