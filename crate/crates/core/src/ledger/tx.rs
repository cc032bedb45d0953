use serde::{Deserialize, Serialize};

use crate::codec::{self, Hash32};
use crate::crypto::{PublicKey, Signature, SigningKey};
use crate::rsu::{AggregatedStatement, GroupId};
use crate::scms::PseudonymId;
use crate::sim::NodeId;

/// A public identity joining the ledger's participant set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subject {
    Ma { node: NodeId, key: PublicKey },
    Rsu { node: NodeId, key: PublicKey, group: GroupId },
}

impl Subject {
    pub fn node(&self) -> NodeId {
        match self {
            Subject::Ma { node, .. } | Subject::Rsu { node, .. } => *node,
        }
    }

    pub fn key(&self) -> PublicKey {
        match self {
            Subject::Ma { key, .. } | Subject::Rsu { key, .. } => *key,
        }
    }

    pub fn group(&self) -> Option<GroupId> {
        match self {
            Subject::Ma { .. } => None,
            Subject::Rsu { group, .. } => Some(*group),
        }
    }

    pub fn approval_message(&self) -> Vec<u8> {
        codec::encode(&("introduce", self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approval {
    pub signer: NodeId,
    pub signature: Signature,
}

impl Approval {
    pub fn sign(signer: NodeId, key: &SigningKey, subject: &Subject) -> Approval {
        Approval {
            signer,
            signature: key.sign(&subject.approval_message()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntroductionTx {
    pub subject: Subject,
    pub approvals: Vec<Approval>,
    pub tx_hash: Hash32,
}

impl IntroductionTx {
    pub fn compute_hash(&self) -> Hash32 {
        Hash32::of("intro", &(&self.subject, &self.approvals))
    }
}

/// Links one quorum-certificate signer to its introduction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantRef {
    pub signer: NodeId,
    pub intro_tx: Hash32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevocationTx {
    /// The certified statement: reports, evidence and the group signature.
    pub statement: AggregatedStatement,
    pub references: Vec<ParticipantRef>,
    /// Candidates of the statement not decided by an earlier transaction.
    pub decided_suspects: Vec<PseudonymId>,
    pub tx_hash: Hash32,
}

impl RevocationTx {
    pub fn compute_hash(&self) -> Hash32 {
        Hash32::of(
            "revocation",
            &(&self.statement, &self.references, &self.decided_suspects),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Tx {
    Introduction(IntroductionTx),
    Revocation(RevocationTx),
}

impl Tx {
    /// The stored hash; verification checks it against [`Tx::compute_hash`].
    pub fn hash(&self) -> Hash32 {
        match self {
            Tx::Introduction(t) => t.tx_hash,
            Tx::Revocation(t) => t.tx_hash,
        }
    }

    pub fn compute_hash(&self) -> Hash32 {
        match self {
            Tx::Introduction(t) => t.compute_hash(),
            Tx::Revocation(t) => t.compute_hash(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::ChainState;
    use crate::testkit::Fixture;

    #[test]
    fn approvals_bind_the_subject() {
        let fx = Fixture::new(1);
        let (ma, key) = &fx.mas[0];
        let subject = Subject::Rsu {
            node: fx.rsus[0].0,
            key: fx.rsus[0].1.public(),
            group: fx.group.id,
        };
        let a = Approval::sign(*ma, key, &subject);
        assert!(key.public().verify(&subject.approval_message(), &a.signature));
        let other = Subject::Ma {
            node: fx.rsus[0].0,
            key: fx.rsus[0].1.public(),
        };
        assert!(!key.public().verify(&other.approval_message(), &a.signature));
        assert_eq!(subject.group(), Some(fx.group.id));
        assert_eq!(other.group(), None);
    }

    #[test]
    fn stored_hash_matches_content() {
        let fx = Fixture::new(1);
        for tx in fx.rsu_intros(&ChainState::new(&fx.genesis)) {
            assert_eq!(tx.hash(), tx.compute_hash());
            let Tx::Introduction(mut intro) = tx else { panic!("intro expected") };
            intro.approvals.pop();
            assert_ne!(intro.tx_hash, intro.compute_hash());
        }
    }
}
