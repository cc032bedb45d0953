//! Vehicle clusters and their permissioned chains.
//!
//! Clusters are formed greedily from advertised positions; the head (the
//! smallest member pseudonym) proposes one block per epoch carrying the
//! validated reports of the epoch and the members' revocation votes.
//! A block commits with endorsements from a majority of distinct member
//! pseudonyms and is then forwarded to the nearest RSU.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::codec::{self, Hash32};
use crate::crypto::Signature;
use crate::scms::{Pseudonym, PseudonymCert, PseudonymId};
use crate::sim::{NodeId, Position, RadioModel, Tick};
use crate::vehicle::{verify_report, MisbehaviorReport, ReportFault, VerifyContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterId(pub Hash32);

impl ClusterId {
    /// Includes the formation tick, so a re-formed cluster with the same
    /// members starts a fresh chain.
    pub fn derive(formed_at: Tick, members: &BTreeSet<PseudonymId>) -> ClusterId {
        ClusterId(Hash32::of("cluster", &(formed_at, members)))
    }

    /// Placeholder for reports raised outside any cluster.
    pub const NONE: ClusterId = ClusterId(Hash32::ZERO);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub id: ClusterId,
    pub members: BTreeSet<PseudonymId>,
    pub head: PseudonymId,
    pub formed_at: Tick,
}

impl Cluster {
    /// Endorsements needed to commit: a strict majority of members.
    pub fn quorum(&self) -> usize {
        quorum(self.members.len())
    }
}

pub fn quorum(members: usize) -> usize {
    members / 2 + 1
}

/// Greedy clique cover in pseudonym order: seed with the smallest
/// unassigned pseudonym, then add every unassigned one within range of all
/// current members. The head is the smallest member.
pub fn form_clusters(
    positions: &BTreeMap<PseudonymId, Position>,
    radio: &RadioModel,
    formed_at: Tick,
) -> Vec<Cluster> {
    let mut unassigned: Vec<(PseudonymId, Position)> =
        positions.iter().map(|(p, pos)| (*p, *pos)).collect();
    let mut clusters = Vec::new();
    while !unassigned.is_empty() {
        let seed = unassigned.remove(0);
        let mut members = vec![seed];
        unassigned.retain(|(p, pos)| {
            if members.iter().all(|(_, m)| radio.in_range(m, pos)) {
                members.push((*p, *pos));
                false
            } else {
                true
            }
        });
        let ids: BTreeSet<PseudonymId> = members.iter().map(|(p, _)| *p).collect();
        clusters.push(Cluster {
            id: ClusterId::derive(formed_at, &ids),
            head: seed.0,
            members: ids,
            formed_at,
        });
    }
    clusters
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationVote {
    pub suspect: PseudonymId,
    pub voters: Vec<PseudonymId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement {
    pub signer: PseudonymId,
    pub signature: Signature,
}

/// One block of a cluster's permissioned chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterBlock {
    pub cluster_id: ClusterId,
    pub height: u64,
    pub prev_hash: Hash32,
    pub tick: Tick,
    pub head: PseudonymId,
    /// Member certificates, ordered by pseudonym.
    pub members: Vec<PseudonymCert>,
    pub reports: Vec<MisbehaviorReport>,
    pub revocation_votes: Vec<RevocationVote>,
    pub endorsements: Vec<Endorsement>,
}

#[derive(Serialize)]
struct BlockHeader<'a> {
    cluster_id: &'a ClusterId,
    height: u64,
    prev_hash: &'a Hash32,
    tick: Tick,
    head: &'a PseudonymId,
    members: &'a [PseudonymCert],
    reports: &'a [MisbehaviorReport],
    revocation_votes: &'a [RevocationVote],
}

impl ClusterBlock {
    /// Hash of everything but the endorsements; this is what members sign
    /// and what the next block links to.
    pub fn hash(&self) -> Hash32 {
        Hash32::of(
            "cluster-block",
            &BlockHeader {
                cluster_id: &self.cluster_id,
                height: self.height,
                prev_hash: &self.prev_hash,
                tick: self.tick,
                head: &self.head,
                members: &self.members,
                reports: &self.reports,
                revocation_votes: &self.revocation_votes,
            },
        )
    }

    pub fn member_ids(&self) -> BTreeSet<PseudonymId> {
        self.members.iter().map(|c| c.p_id).collect()
    }

    pub fn quorum(&self) -> usize {
        quorum(self.members.len())
    }

    pub fn encoded(&self) -> Vec<u8> {
        codec::encode(self)
    }

    /// Distinct members with a valid endorsement signature.
    pub fn valid_endorsers(&self) -> BTreeSet<PseudonymId> {
        let msg = endorsement_message(&self.hash());
        let certs: BTreeMap<PseudonymId, &PseudonymCert> =
            self.members.iter().map(|c| (c.p_id, c)).collect();
        self.endorsements
            .iter()
            .filter(|e| {
                certs
                    .get(&e.signer)
                    .is_some_and(|c| c.public_key.verify(&msg, &e.signature))
            })
            .map(|e| e.signer)
            .collect()
    }

    pub fn is_committed(&self) -> bool {
        self.valid_endorsers().len() >= self.quorum()
    }

    pub fn votes_for(&self, suspect: &PseudonymId) -> Option<&RevocationVote> {
        self.revocation_votes.iter().find(|v| &v.suspect == suspect)
    }
}

fn endorsement_message(block_hash: &Hash32) -> Vec<u8> {
    codec::encode(&("endorse", block_hash))
}

/// Tally of revocation votes: each member reporter votes once per suspect
/// it reported.
pub fn tally_votes(
    reports: &[MisbehaviorReport],
    members: &BTreeSet<PseudonymId>,
) -> Vec<RevocationVote> {
    let mut tally: BTreeMap<PseudonymId, BTreeSet<PseudonymId>> = BTreeMap::new();
    for r in reports {
        let voter = r.reporter_p_id();
        if !members.contains(&voter) {
            continue;
        }
        for s in &r.suspects {
            tally.entry(*s).or_default().insert(voter);
        }
    }
    tally
        .into_iter()
        .map(|(suspect, voters)| RevocationVote {
            suspect,
            voters: voters.into_iter().collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClusterError {
    #[error("{0} is not the head of this cluster")]
    NotHead(PseudonymId),
    #[error("member certificates do not match the cluster")]
    MemberCertificates,
}

/// Position of a cluster chain: the next height and the hash it links to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainTip {
    pub next_height: u64,
    pub prev_hash: Hash32,
}

impl ChainTip {
    pub const GENESIS: ChainTip = ChainTip {
        next_height: 0,
        prev_hash: Hash32::ZERO,
    };

    pub fn after(block: &ClusterBlock) -> ChainTip {
        ChainTip {
            next_height: block.height + 1,
            prev_hash: block.hash(),
        }
    }
}

/// Candidate built by the head: deduplicated valid reports and the vote
/// tally. Reports that fail validation are returned with their fault.
pub fn propose_block(
    cluster: &Cluster,
    member_certs: &[PseudonymCert],
    proposer: &Pseudonym,
    tip: ChainTip,
    pending: Vec<MisbehaviorReport>,
    ctx: &VerifyContext,
    tick: Tick,
) -> Result<(ClusterBlock, Vec<(Hash32, ReportFault)>), ClusterError> {
    if proposer.id() != cluster.head {
        return Err(ClusterError::NotHead(proposer.id()));
    }
    let mut members: Vec<PseudonymCert> = member_certs.to_vec();
    members.sort_by_key(|c| c.p_id);
    members.dedup_by_key(|c| c.p_id);
    if members.iter().map(|c| c.p_id).collect::<BTreeSet<_>>() != cluster.members {
        return Err(ClusterError::MemberCertificates);
    }
    let mut unique: BTreeMap<Hash32, MisbehaviorReport> = BTreeMap::new();
    for r in pending {
        unique.entry(r.hash()).or_insert(r);
    }
    let mut rejected = Vec::new();
    let mut reports = Vec::new();
    for (h, r) in unique {
        match verify_report(&r, ctx) {
            Ok(()) => reports.push(r),
            Err(fault) => rejected.push((h, fault)),
        }
    }
    Ok((
        unsigned_block(cluster, members, proposer.id(), tip, reports, tick),
        rejected,
    ))
}

/// Assembles a candidate without validating its reports. Honest heads go
/// through [`propose_block`]; this is the raw constructor.
pub fn unsigned_block(
    cluster: &Cluster,
    members: Vec<PseudonymCert>,
    head: PseudonymId,
    tip: ChainTip,
    reports: Vec<MisbehaviorReport>,
    tick: Tick,
) -> ClusterBlock {
    let revocation_votes = tally_votes(&reports, &cluster.members);
    ClusterBlock {
        cluster_id: cluster.id,
        height: tip.next_height,
        prev_hash: tip.prev_hash,
        tick,
        head,
        members,
        reports,
        revocation_votes,
        endorsements: Vec::new(),
    }
}

/// A member's view of its cluster chain and the heights it has endorsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberView {
    pub cluster_id: ClusterId,
    pub tip: ChainTip,
    endorsed: BTreeMap<u64, Hash32>,
}

impl MemberView {
    pub fn new(cluster_id: ClusterId) -> Self {
        MemberView {
            cluster_id,
            tip: ChainTip::GENESIS,
            endorsed: BTreeMap::new(),
        }
    }

    pub fn on_commit(&mut self, block: &ClusterBlock) {
        if block.cluster_id == self.cluster_id && block.height >= self.tip.next_height {
            self.tip = ChainTip::after(block);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VoteRejection {
    #[error("not a member of the cluster")]
    NotMember,
    #[error("proposer is not the cluster head")]
    WrongHead,
    #[error("member list differs from the cluster")]
    Membership,
    #[error("candidate does not extend the member's chain view")]
    StaleView,
    #[error("already endorsed another block at this height")]
    AlreadyEndorsed,
    #[error("pseudonym not valid at the block tick")]
    PseudonymExpired,
    #[error("report {0} fails validation: {1}")]
    InvalidReport(Hash32, ReportFault),
    #[error("revocation votes do not match the reports")]
    VoteTally,
}

/// A member independently re-validates the candidate and endorses it, or
/// says why not. Members endorse at most one block per height.
pub fn vote_block(
    member: &Pseudonym,
    view: &mut MemberView,
    cluster: &Cluster,
    candidate: &ClusterBlock,
    ctx: &VerifyContext,
) -> Result<Endorsement, VoteRejection> {
    if !cluster.members.contains(&member.id()) {
        return Err(VoteRejection::NotMember);
    }
    if candidate.cluster_id != cluster.id || candidate.head != cluster.head {
        return Err(VoteRejection::WrongHead);
    }
    if candidate.member_ids() != cluster.members {
        return Err(VoteRejection::Membership);
    }
    if view.cluster_id != cluster.id
        || candidate.height != view.tip.next_height
        || candidate.prev_hash != view.tip.prev_hash
    {
        return Err(VoteRejection::StaleView);
    }
    if !member.cert.is_valid_at(candidate.tick) {
        return Err(VoteRejection::PseudonymExpired);
    }
    let hash = candidate.hash();
    if let Some(prev) = view.endorsed.get(&candidate.height) {
        if *prev != hash {
            return Err(VoteRejection::AlreadyEndorsed);
        }
    }
    for r in &candidate.reports {
        verify_report(r, ctx).map_err(|f| VoteRejection::InvalidReport(r.hash(), f))?;
    }
    if candidate.revocation_votes != tally_votes(&candidate.reports, &cluster.members) {
        return Err(VoteRejection::VoteTally);
    }
    view.endorsed.insert(candidate.height, hash);
    Ok(endorse(member, candidate))
}

/// Signs a candidate unconditionally. Honest members go through
/// [`vote_block`].
pub fn endorse(member: &Pseudonym, candidate: &ClusterBlock) -> Endorsement {
    Endorsement {
        signer: member.id(),
        signature: member.key.sign(&endorsement_message(&candidate.hash())),
    }
}

/// Local revocation: a majority of the other members voted against the
/// suspect. The suspect's own vote never counts.
pub fn local_revocation_decision(block: &ClusterBlock, suspect: &PseudonymId) -> bool {
    let members = block.member_ids();
    let Some(votes) = block.votes_for(suspect) else {
        return false;
    };
    let counted = votes
        .voters
        .iter()
        .filter(|v| *v != suspect && members.contains(v))
        .collect::<BTreeSet<_>>()
        .len();
    let threshold = members.len().saturating_sub(1) / 2 + 1;
    counted >= threshold
}

/// Committed blocks waiting for an RSU in range, in commit order.
#[derive(Debug, Clone, Default)]
pub struct ForwardBuffer {
    queue: VecDeque<ClusterBlock>,
}

impl ForwardBuffer {
    pub fn push(&mut self, block: ClusterBlock) {
        self.queue.push_back(block);
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Hands every buffered block, in order, to the nearest RSU in range of
    /// `head_pos`; keeps them if there is none.
    pub fn flush(
        &mut self,
        head_pos: &Position,
        rsus: &[(NodeId, Position)],
        radio: &RadioModel,
    ) -> Option<(NodeId, Vec<ClusterBlock>)> {
        if self.queue.is_empty() {
            return None;
        }
        let target = nearest_rsu(head_pos, rsus, radio)?;
        Some((target, self.queue.drain(..).collect()))
    }
}

/// Nearest RSU within range; ties go to the lower `NodeId`.
pub fn nearest_rsu(pos: &Position, rsus: &[(NodeId, Position)], radio: &RadioModel) -> Option<NodeId> {
    rsus.iter()
        .filter(|(_, p)| radio.in_range(pos, p))
        .min_by(|(a, pa), (b, pb)| {
            pos.distance(pa)
                .total_cmp(&pos.distance(pb))
                .then(a.cmp(b))
        })
        .map(|(id, _)| *id)
}
