use std::cmp::Ordering;

use serde_json::json;

use super::block::{mine_block, GlobalBlock};
use super::genesis::GenesisConfig;
use super::state::{BlockRejection, ChainState};
use super::tx::{Subject, Tx};
use crate::codec::{self, Hash32};

/// A verified chain held by one node.
#[derive(Debug, Clone)]
pub struct Ledger {
    blocks: Vec<GlobalBlock>,
    state: ChainState,
}

impl Ledger {
    pub fn new(genesis: &GenesisConfig) -> Self {
        Ledger {
            blocks: Vec::new(),
            state: ChainState::new(genesis),
        }
    }

    pub fn blocks(&self) -> &[GlobalBlock] {
        &self.blocks
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn append(&mut self, block: GlobalBlock) -> Result<(), BlockRejection> {
        self.state.apply_block(&block)?;
        self.blocks.push(block);
        Ok(())
    }

    /// Mines the next block from the valid subset of `candidates`.
    pub fn mine(&self, candidates: Vec<Tx>) -> GlobalBlock {
        let txs = self.state.select_txs(candidates);
        mine_block(
            txs,
            self.state.next_height(),
            self.state.tip(),
            self.state.difficulty_bits(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_chain(&self.blocks)
    }
}

/// Chain file layout: each block as a 4-byte big-endian length followed by
/// its canonical encoding.
pub fn encode_chain(blocks: &[GlobalBlock]) -> Vec<u8> {
    let mut out = Vec::new();
    for b in blocks {
        let bytes = b.encoded();
        let len = u32::try_from(bytes.len()).expect("block under 4 GiB");
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("chain file malformed at byte {offset}: {reason}")]
pub struct FrameError {
    pub offset: usize,
    pub reason: String,
}

/// Splits a chain file into per-block byte slices.
pub fn split_frames(bytes: &[u8]) -> Result<Vec<&[u8]>, FrameError> {
    let mut frames = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let header = bytes.get(at..at + 4).ok_or_else(|| FrameError {
            offset: at,
            reason: "truncated length prefix".into(),
        })?;
        let len = u32::from_be_bytes(header.try_into().expect("4 bytes")) as usize;
        let body = bytes.get(at + 4..at + 4 + len).ok_or_else(|| FrameError {
            offset: at,
            reason: format!("block of {len} bytes runs past end of file"),
        })?;
        frames.push(body);
        at += 4 + len;
    }
    Ok(frames)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainFailure {
    /// Position of the first failing block in the file.
    pub height: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainVerdict {
    pub blocks: u64,
    pub failure: Option<ChainFailure>,
}

impl ChainVerdict {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }
}

/// Full audit of a chain file against its genesis: framing, canonical
/// encoding, stored hashes, proof of work, linkage, introduction
/// thresholds, reference resolution, quorum certificates and re-execution
/// of every piece of evidence. A pure function of its inputs.
pub fn verify_chain(bytes: &[u8], genesis: &GenesisConfig) -> Result<ChainVerdict, FrameError> {
    let frames = split_frames(bytes)?;
    let mut state = ChainState::new(genesis);
    let fail = |height: usize, reason: String| ChainVerdict {
        blocks: frames.len() as u64,
        failure: Some(ChainFailure {
            height: height as u64,
            reason,
        }),
    };
    if frames.is_empty() {
        return Ok(fail(0, "chain has no blocks".into()));
    }
    for (i, frame) in frames.iter().enumerate() {
        let block: GlobalBlock = match codec::decode(frame) {
            Ok(b) => b,
            Err(e) => return Ok(fail(i, e.to_string())),
        };
        if codec::encode(&block) != *frame {
            return Ok(fail(i, "non-canonical block encoding".into()));
        }
        if let Err(e) = state.apply_block(&block) {
            return Ok(fail(i, e.to_string()));
        }
    }
    Ok(ChainVerdict {
        blocks: frames.len() as u64,
        failure: None,
    })
}

/// Total work of a chain at fixed difficulty.
pub fn total_work(chain: &[GlobalBlock], difficulty_bits: u32) -> u128 {
    chain.len() as u128 * (1u128 << difficulty_bits.min(127))
}

/// Compares two verified competing chains: greater total work wins, ties
/// go to the lower tip hash. `Ordering::Greater` means `a` is preferred.
pub fn compare_chains(a: &[GlobalBlock], b: &[GlobalBlock], difficulty_bits: u32) -> Ordering {
    let tip = |c: &[GlobalBlock]| c.last().map(|b| b.pow_hash).unwrap_or(Hash32::ZERO);
    total_work(a, difficulty_bits)
        .cmp(&total_work(b, difficulty_bits))
        .then_with(|| tip(b).cmp(&tip(a)))
}

/// Index of the preferred chain among verified candidates.
pub fn fork_choice(chains: &[&[GlobalBlock]], difficulty_bits: u32) -> Option<usize> {
    (0..chains.len()).reduce(|best, i| {
        if compare_chains(chains[i], chains[best], difficulty_bits) == Ordering::Greater {
            i
        } else {
            best
        }
    })
}

/// One JSON object per block, summarizing its transactions.
pub fn export_jsonl(blocks: &[GlobalBlock]) -> String {
    let mut out = String::new();
    for b in blocks {
        let txs: Vec<serde_json::Value> = b
            .txs
            .iter()
            .map(|tx| match tx {
                Tx::Introduction(t) => {
                    let (kind, group) = match &t.subject {
                        Subject::Ma { .. } => ("ma", None),
                        Subject::Rsu { group, .. } => ("rsu", Some(group.0)),
                    };
                    json!({
                        "type": "introduction",
                        "tx_hash": t.tx_hash.to_hex(),
                        "subject": t.subject.node().to_string(),
                        "subject_kind": kind,
                        "group": group,
                        "key": t.subject.key().to_hex(),
                        "approvals": t.approvals.iter().map(|a| a.signer.to_string()).collect::<Vec<_>>(),
                    })
                }
                Tx::Revocation(t) => json!({
                    "type": "revocation",
                    "tx_hash": t.tx_hash.to_hex(),
                    "statement": t.statement.hash().to_hex(),
                    "group": t.statement.body.group_id.0,
                    "rsu_height": t.statement.body.height,
                    "reports": t.statement.body.evidence_bundle.len(),
                    "signers": t.statement.quorum_cert.iter().map(|s| s.signer.to_string()).collect::<Vec<_>>(),
                    "references": t.references.iter().map(|r| json!({"signer": r.signer.to_string(), "intro_tx": r.intro_tx.to_hex()})).collect::<Vec<_>>(),
                    "decided_suspects": t.decided_suspects.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
                }),
            })
            .collect();
        let line = json!({
            "height": b.height,
            "hash": b.pow_hash.to_hex(),
            "prev_hash": b.prev_hash.to_hex(),
            "nonce": b.nonce,
            "txs": txs,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}
