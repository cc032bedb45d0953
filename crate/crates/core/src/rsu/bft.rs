//! One height of the rotating-leader three-phase commit: the leader
//! proposes, members echo the first valid proposal, a member confirms once
//! it sees 2f+1 matching echoes, and a statement is decided with 2f+1
//! matching confirms, which form its quorum certificate.

use std::collections::{BTreeMap, BTreeSet};

use crate::codec::{self, Hash32};
use crate::crypto::{Signature, SigningKey};
use crate::sim::NodeId;

use super::group::fault_bound;
use super::statement::QcSignature;

pub fn confirm_message(statement_hash: &Hash32) -> Vec<u8> {
    codec::encode(&("confirm", statement_hash))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BftOutput {
    /// Broadcast an echo for this hash to the other members.
    Echo(Hash32),
    /// Broadcast a signed confirm to the other members.
    Confirm(Hash32, Signature),
    /// Decided, with the collected certificate.
    Decide(Hash32, Vec<QcSignature>),
}

/// Per-(group, height) protocol state of one honest member. Messages are
/// assumed authenticated by the caller; the instance only counts distinct
/// members. A node's own echo and confirm are recorded when emitted.
#[derive(Debug, Clone)]
pub struct BftInstance {
    me: NodeId,
    members: Vec<NodeId>,
    leader: NodeId,
    key: Option<SigningKey>,
    accepted: Option<Hash32>,
    echoes: BTreeMap<Hash32, BTreeSet<NodeId>>,
    confirms: BTreeMap<Hash32, BTreeMap<NodeId, Signature>>,
    confirmed: Option<Hash32>,
    decided: Option<Hash32>,
}

impl BftInstance {
    /// `key` signs confirms; without one the instance emits placeholder
    /// signatures (used by the schedule explorer).
    pub fn new(me: NodeId, members: Vec<NodeId>, leader: NodeId, key: Option<SigningKey>) -> Self {
        BftInstance {
            me,
            members,
            leader,
            key,
            accepted: None,
            echoes: BTreeMap::new(),
            confirms: BTreeMap::new(),
            confirmed: None,
            decided: None,
        }
    }

    pub fn quorum(&self) -> usize {
        2 * fault_bound(self.members.len()) + 1
    }

    pub fn leader(&self) -> NodeId {
        self.leader
    }

    pub fn accepted(&self) -> Option<Hash32> {
        self.accepted
    }

    pub fn confirmed(&self) -> Option<Hash32> {
        self.confirmed
    }

    pub fn decided(&self) -> Option<Hash32> {
        self.decided
    }

    fn is_member(&self, n: &NodeId) -> bool {
        self.members.contains(n)
    }

    /// `valid` is the caller's verdict on the proposed statement.
    pub fn on_proposal(&mut self, from: NodeId, hash: Hash32, valid: bool) -> Vec<BftOutput> {
        if from != self.leader || self.accepted.is_some() || !valid {
            return Vec::new();
        }
        self.accepted = Some(hash);
        let mut out = vec![BftOutput::Echo(hash)];
        out.extend(self.record_echo(self.me, hash));
        out
    }

    pub fn on_echo(&mut self, from: NodeId, hash: Hash32) -> Vec<BftOutput> {
        if !self.is_member(&from) || from == self.me {
            return Vec::new();
        }
        self.record_echo(from, hash)
    }

    pub fn on_confirm(&mut self, from: NodeId, hash: Hash32, signature: Signature) -> Vec<BftOutput> {
        if !self.is_member(&from) || from == self.me {
            return Vec::new();
        }
        self.record_confirm(from, hash, signature)
    }

    fn record_echo(&mut self, from: NodeId, hash: Hash32) -> Vec<BftOutput> {
        let quorum = self.quorum();
        let echoes = self.echoes.entry(hash).or_default();
        echoes.insert(from);
        if self.confirmed.is_some() || echoes.len() < quorum {
            return Vec::new();
        }
        self.confirmed = Some(hash);
        let signature = match &self.key {
            Some(k) => k.sign(&confirm_message(&hash)),
            None => Signature::garbage(0),
        };
        let mut out = vec![BftOutput::Confirm(hash, signature)];
        out.extend(self.record_confirm(self.me, hash, signature));
        out
    }

    fn record_confirm(&mut self, from: NodeId, hash: Hash32, signature: Signature) -> Vec<BftOutput> {
        let quorum = self.quorum();
        let confirms = self.confirms.entry(hash).or_default();
        confirms.entry(from).or_insert(signature);
        if self.decided.is_some() || confirms.len() < quorum {
            return Vec::new();
        }
        self.decided = Some(hash);
        let cert = confirms
            .iter()
            .map(|(signer, signature)| QcSignature {
                signer: *signer,
                signature: *signature,
            })
            .collect();
        vec![BftOutput::Decide(hash, cert)]
    }

    /// Compact description of the protocol-relevant state, for state-space
    /// deduplication.
    pub fn fingerprint(&self) -> (Option<Hash32>, Vec<(Hash32, Vec<NodeId>)>, Vec<(Hash32, Vec<NodeId>)>, Option<Hash32>, Option<Hash32>) {
        (
            self.accepted,
            self.echoes
                .iter()
                .map(|(h, s)| (*h, s.iter().copied().collect()))
                .collect(),
            self.confirms
                .iter()
                .map(|(h, s)| (*h, s.keys().copied().collect()))
                .collect(),
            self.confirmed,
            self.decided,
        )
    }
}
