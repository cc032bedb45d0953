//! Public proof-of-work ledger kept by the misbehavior authorities:
//! participant introductions, certified revocation decisions and a full
//! audit of the chain from its genesis.

mod block;
mod chain;
mod genesis;
mod state;
mod tx;

pub use block::{header_hash, mine_block, tx_root, GlobalBlock};
pub use chain::{
    compare_chains, encode_chain, export_jsonl, fork_choice, split_frames, total_work,
    verify_chain, ChainFailure, ChainVerdict, FrameError, Ledger,
};
pub use genesis::{GenesisConfig, GenesisError};
pub use state::{
    apply_revocations, BlockRejection, ChainState, Participant, RevocationEffect, TxRejection,
};
pub use tx::{Approval, IntroductionTx, ParticipantRef, RevocationTx, Subject, Tx};
