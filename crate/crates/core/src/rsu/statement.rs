use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::bft::confirm_message;
use super::group::{fault_bound, GroupId};
use crate::cluster::ClusterBlock;
use crate::codec::{self, Hash32};
use crate::crypto::{PublicKey, Signature};
use crate::scms::PseudonymId;
use crate::sim::NodeId;
use crate::vehicle::MisbehaviorReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationCandidate {
    pub suspect: PseudonymId,
    /// Hashes of the bundled reports naming the suspect.
    pub reports: Vec<Hash32>,
}

/// The part of an aggregated statement the quorum signs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementBody {
    pub group_id: GroupId,
    pub height: u64,
    pub included_blocks: Vec<Hash32>,
    pub revocation_candidates: Vec<RevocationCandidate>,
    /// Reports of all included blocks, deduplicated by hash.
    pub evidence_bundle: Vec<MisbehaviorReport>,
}

impl StatementBody {
    /// Deterministic aggregate of `blocks`: any member holding the same
    /// blocks builds the identical body.
    pub fn build(group_id: GroupId, height: u64, blocks: &[&ClusterBlock]) -> StatementBody {
        let included: BTreeSet<Hash32> = blocks.iter().map(|b| b.hash()).collect();
        let mut bundle: BTreeMap<Hash32, &MisbehaviorReport> = BTreeMap::new();
        for b in blocks {
            for r in &b.reports {
                bundle.entry(r.hash()).or_insert(r);
            }
        }
        let mut candidates: BTreeMap<PseudonymId, BTreeSet<Hash32>> = BTreeMap::new();
        for (h, r) in &bundle {
            for s in &r.suspects {
                candidates.entry(*s).or_default().insert(*h);
            }
        }
        StatementBody {
            group_id,
            height,
            included_blocks: included.into_iter().collect(),
            revocation_candidates: candidates
                .into_iter()
                .map(|(suspect, reports)| RevocationCandidate {
                    suspect,
                    reports: reports.into_iter().collect(),
                })
                .collect(),
            evidence_bundle: bundle.into_values().cloned().collect(),
        }
    }

    pub fn hash(&self) -> Hash32 {
        Hash32::of("statement", self)
    }

    /// Every candidate's supporting hashes resolve inside the bundle and
    /// name the suspect.
    pub fn evidence_closed(&self) -> bool {
        let bundle: BTreeMap<Hash32, &MisbehaviorReport> =
            self.evidence_bundle.iter().map(|r| (r.hash(), r)).collect();
        self.revocation_candidates.iter().all(|c| {
            !c.reports.is_empty()
                && c.reports.iter().all(|h| {
                    bundle
                        .get(h)
                        .is_some_and(|r| r.suspects.contains(&c.suspect))
                })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcSignature {
    pub signer: NodeId,
    pub signature: Signature,
}

/// A statement carrying 2f+1 member signatures over its body hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedStatement {
    pub body: StatementBody,
    pub quorum_cert: Vec<QcSignature>,
}

impl AggregatedStatement {
    pub fn hash(&self) -> Hash32 {
        self.body.hash()
    }

    pub fn encoded_len(&self) -> usize {
        codec::encode(self).len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QcFault {
    #[error("{signer} is not a group member")]
    NotMember { signer: NodeId },
    #[error("{signer} signed more than once")]
    Duplicate { signer: NodeId },
    #[error("signature by {signer} does not verify")]
    BadSignature { signer: NodeId },
    #[error("{have} signatures, {need} required")]
    TooFew { have: usize, need: usize },
}

/// Checks the certificate against the group's member keys: at least 2f+1
/// distinct members, every signature over the exact statement hash.
pub fn verify_quorum_cert(
    stmt: &AggregatedStatement,
    members: &BTreeMap<NodeId, PublicKey>,
) -> Result<(), QcFault> {
    let msg = confirm_message(&stmt.hash());
    let mut seen = BTreeSet::new();
    for s in &stmt.quorum_cert {
        let key = members
            .get(&s.signer)
            .ok_or(QcFault::NotMember { signer: s.signer })?;
        if !seen.insert(s.signer) {
            return Err(QcFault::Duplicate { signer: s.signer });
        }
        if !key.verify(&msg, &s.signature) {
            return Err(QcFault::BadSignature { signer: s.signer });
        }
    }
    let need = 2 * fault_bound(members.len()) + 1;
    if seen.len() < need {
        return Err(QcFault::TooFew {
            have: seen.len(),
            need,
        });
    }
    Ok(())
}
