use std::collections::{BTreeMap, BTreeSet};

use super::block::GlobalBlock;
use super::genesis::GenesisConfig;
use super::tx::{Approval, IntroductionTx, ParticipantRef, RevocationTx, Subject, Tx};
use crate::codec::Hash32;
use crate::crypto::PublicKey;
use crate::rsu::{verify_quorum_cert, AggregatedStatement, GroupId, QcFault};
use crate::scms::{DecisionRegistry, LtId, PseudonymId, Scms, ScmsError};
use crate::sim::{NodeId, Tick};
use crate::vehicle::{verify_report, ReportFault, VerifyContext};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Participant {
    pub key: PublicKey,
    pub group: Option<GroupId>,
    /// Introducing transaction; `None` for genesis participants.
    pub intro_tx: Option<Hash32>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TxRejection {
    #[error("{0} is already a participant")]
    AlreadyIntroduced(NodeId),
    #[error("approval by {0}, who is not a participant")]
    UnknownApprover(NodeId),
    #[error("{0} approved twice")]
    DuplicateApproval(NodeId),
    #[error("approval signature by {0} does not verify")]
    BadApproval(NodeId),
    #[error("{have} approvals, {need} required")]
    TooFewApprovals { have: usize, need: usize },
    #[error("{signer} has no committed introduction")]
    NotIntroduced { signer: NodeId },
    #[error("references do not match the certificate signers")]
    ReferenceMismatch,
    #[error("reference for {signer} points to {tx}, not its introduction")]
    DanglingReference { signer: NodeId, tx: Hash32 },
    #[error("group {0:?} has no introduced members")]
    UnknownGroup(GroupId),
    #[error("quorum certificate: {0}")]
    QuorumCert(QcFault),
    #[error("candidates do not match the evidence bundle")]
    Candidates,
    #[error("report {0}: {1}")]
    Evidence(Hash32, ReportFault),
    #[error("decided suspects do not match the undecided candidates")]
    DecidedMismatch,
    #[error("statement decides nothing new")]
    NothingToDecide,
    #[error("stored transaction hash does not match its contents")]
    TxHash,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BlockRejection {
    #[error("expected height {expected}, found {found}")]
    Height { expected: u64, found: u64 },
    #[error("previous hash does not link to the tip")]
    PrevHash,
    #[error("stored proof-of-work hash does not match the header")]
    PowHash,
    #[error("proof of work has {have} leading zero bits, {need} required")]
    Difficulty { have: u32, need: u32 },
    #[error("transactions are not in canonical order")]
    TxOrder,
    #[error("transaction {tx}: {reason}")]
    Tx { tx: Hash32, reason: TxRejection },
}

/// Participant set and revocation decisions after a verified prefix.
#[derive(Debug, Clone)]
pub struct ChainState {
    difficulty_bits: u32,
    verify: VerifyContext,
    participants: BTreeMap<NodeId, Participant>,
    decided: BTreeMap<PseudonymId, Hash32>,
    next_height: u64,
    tip: Hash32,
}

impl DecisionRegistry for ChainState {
    fn authorizes(&self, tx: &Hash32, p_id: &PseudonymId) -> bool {
        self.decided.get(p_id) == Some(tx)
    }
}

impl ChainState {
    pub fn new(genesis: &GenesisConfig) -> Self {
        ChainState {
            difficulty_bits: genesis.difficulty_bits,
            verify: genesis.verify.clone(),
            participants: genesis
                .participants
                .iter()
                .map(|(node, key)| {
                    (
                        *node,
                        Participant {
                            key: *key,
                            group: None,
                            intro_tx: None,
                        },
                    )
                })
                .collect(),
            decided: BTreeMap::new(),
            next_height: 0,
            tip: genesis.hash(),
        }
    }

    pub fn next_height(&self) -> u64 {
        self.next_height
    }

    pub fn tip(&self) -> Hash32 {
        self.tip
    }

    pub fn difficulty_bits(&self) -> u32 {
        self.difficulty_bits
    }

    pub fn verify_context(&self) -> &VerifyContext {
        &self.verify
    }

    pub fn participants(&self) -> &BTreeMap<NodeId, Participant> {
        &self.participants
    }

    pub fn participant(&self, node: &NodeId) -> Option<&Participant> {
        self.participants.get(node)
    }

    pub fn decided_by(&self, p_id: &PseudonymId) -> Option<Hash32> {
        self.decided.get(p_id).copied()
    }

    pub fn decisions(&self) -> &BTreeMap<PseudonymId, Hash32> {
        &self.decided
    }

    /// Approvals needed to introduce a participant: a strict majority of
    /// the current participant set.
    pub fn intro_threshold(&self) -> usize {
        self.participants.len() / 2 + 1
    }

    pub fn group_keys(&self, group: GroupId) -> BTreeMap<NodeId, PublicKey> {
        self.participants
            .iter()
            .filter(|(_, p)| p.group == Some(group))
            .map(|(n, p)| (*n, p.key))
            .collect()
    }

    /// Builds an introduction carrying `approvals`, refusing it unless it
    /// would be valid in the next block.
    pub fn introduce_participant(
        &self,
        subject: Subject,
        approvals: Vec<Approval>,
    ) -> Result<IntroductionTx, TxRejection> {
        let mut tx = IntroductionTx {
            subject,
            approvals,
            tx_hash: Hash32::ZERO,
        };
        tx.tx_hash = tx.compute_hash();
        self.check_intro(&tx, &BTreeSet::new())?;
        Ok(tx)
    }

    fn check_intro(&self, tx: &IntroductionTx, in_block: &BTreeSet<NodeId>) -> Result<(), TxRejection> {
        if tx.tx_hash != tx.compute_hash() {
            return Err(TxRejection::TxHash);
        }
        let node = tx.subject.node();
        if self.participants.contains_key(&node) || in_block.contains(&node) {
            return Err(TxRejection::AlreadyIntroduced(node));
        }
        let msg = tx.subject.approval_message();
        let mut seen = BTreeSet::new();
        for a in &tx.approvals {
            let p = self
                .participants
                .get(&a.signer)
                .ok_or(TxRejection::UnknownApprover(a.signer))?;
            if !seen.insert(a.signer) {
                return Err(TxRejection::DuplicateApproval(a.signer));
            }
            if !p.key.verify(&msg, &a.signature) {
                return Err(TxRejection::BadApproval(a.signer));
            }
        }
        let need = self.intro_threshold();
        if seen.len() < need {
            return Err(TxRejection::TooFewApprovals {
                have: seen.len(),
                need,
            });
        }
        Ok(())
    }

    /// Undecided candidates of `stmt`, after checking its certificate and
    /// re-executing all of its evidence. Returns the signer references.
    fn check_statement(
        &self,
        stmt: &AggregatedStatement,
        decided: &BTreeMap<PseudonymId, Hash32>,
    ) -> Result<(Vec<ParticipantRef>, Vec<PseudonymId>), TxRejection> {
        let body = &stmt.body;
        let members = self.group_keys(body.group_id);
        if members.is_empty() {
            return Err(TxRejection::UnknownGroup(body.group_id));
        }
        let mut references = Vec::with_capacity(stmt.quorum_cert.len());
        for s in &stmt.quorum_cert {
            let p = self
                .participants
                .get(&s.signer)
                .filter(|p| p.group == Some(body.group_id))
                .ok_or(TxRejection::NotIntroduced { signer: s.signer })?;
            let intro_tx = p.intro_tx.ok_or(TxRejection::NotIntroduced { signer: s.signer })?;
            references.push(ParticipantRef {
                signer: s.signer,
                intro_tx,
            });
        }
        verify_quorum_cert(stmt, &members).map_err(TxRejection::QuorumCert)?;
        let rebuilt = {
            let mut c: BTreeMap<PseudonymId, BTreeSet<Hash32>> = BTreeMap::new();
            for r in &body.evidence_bundle {
                for s in &r.suspects {
                    c.entry(*s).or_default().insert(r.hash());
                }
            }
            c
        };
        let hashes: Vec<Hash32> = body.evidence_bundle.iter().map(|r| r.hash()).collect();
        let candidates_match = body.revocation_candidates.len() == rebuilt.len()
            && body
                .revocation_candidates
                .iter()
                .zip(&rebuilt)
                .all(|(c, (s, rs))| c.suspect == *s && c.reports.iter().eq(rs.iter()));
        if !candidates_match || !hashes.windows(2).all(|w| w[0] < w[1]) {
            return Err(TxRejection::Candidates);
        }
        for (r, h) in body.evidence_bundle.iter().zip(&hashes) {
            verify_report(r, &self.verify).map_err(|f| TxRejection::Evidence(*h, f))?;
        }
        let undecided = rebuilt
            .keys()
            .filter(|s| !decided.contains_key(s))
            .copied()
            .collect();
        Ok((references, undecided))
    }

    /// Builds the revocation transaction for a certified statement, or
    /// refuses it if any signer is not introduced, any evidence fails, or
    /// every candidate is already decided.
    pub fn build_revocation_tx(&self, stmt: AggregatedStatement) -> Result<RevocationTx, TxRejection> {
        let (references, decided_suspects) = self.check_statement(&stmt, &self.decided)?;
        if decided_suspects.is_empty() {
            return Err(TxRejection::NothingToDecide);
        }
        let mut tx = RevocationTx {
            statement: stmt,
            references,
            decided_suspects,
            tx_hash: Hash32::ZERO,
        };
        tx.tx_hash = tx.compute_hash();
        Ok(tx)
    }

    fn check_revocation(
        &self,
        tx: &RevocationTx,
        decided: &BTreeMap<PseudonymId, Hash32>,
    ) -> Result<(), TxRejection> {
        if tx.tx_hash != tx.compute_hash() {
            return Err(TxRejection::TxHash);
        }
        let (references, undecided) = self.check_statement(&tx.statement, decided)?;
        if tx.references.len() != references.len() {
            return Err(TxRejection::ReferenceMismatch);
        }
        for (given, expected) in tx.references.iter().zip(&references) {
            if given.signer != expected.signer {
                return Err(TxRejection::ReferenceMismatch);
            }
            if given.intro_tx != expected.intro_tx {
                return Err(TxRejection::DanglingReference {
                    signer: given.signer,
                    tx: given.intro_tx,
                });
            }
        }
        if undecided.is_empty() {
            return Err(TxRejection::NothingToDecide);
        }
        if tx.decided_suspects != undecided {
            return Err(TxRejection::DecidedMismatch);
        }
        Ok(())
    }

    /// Verifies `block` as the next block and, if valid, applies it.
    pub fn apply_block(&mut self, block: &GlobalBlock) -> Result<(), BlockRejection> {
        if block.height != self.next_height {
            return Err(BlockRejection::Height {
                expected: self.next_height,
                found: block.height,
            });
        }
        if block.prev_hash != self.tip {
            return Err(BlockRejection::PrevHash);
        }
        if block.pow_hash != block.compute_pow_hash() {
            return Err(BlockRejection::PowHash);
        }
        if !block.meets(self.difficulty_bits) {
            return Err(BlockRejection::Difficulty {
                have: block.pow_hash.leading_zero_bits(),
                need: self.difficulty_bits,
            });
        }
        if !block.txs.windows(2).all(|w| w[0].hash() < w[1].hash()) {
            return Err(BlockRejection::TxOrder);
        }
        let mut decided = self.decided.clone();
        let mut introduced: BTreeMap<NodeId, Participant> = BTreeMap::new();
        for tx in &block.txs {
            let reject = |reason| BlockRejection::Tx {
                tx: tx.hash(),
                reason,
            };
            match tx {
                Tx::Introduction(t) => {
                    let pending: BTreeSet<NodeId> = introduced.keys().copied().collect();
                    self.check_intro(t, &pending).map_err(reject)?;
                    introduced.insert(
                        t.subject.node(),
                        Participant {
                            key: t.subject.key(),
                            group: t.subject.group(),
                            intro_tx: Some(t.tx_hash),
                        },
                    );
                }
                Tx::Revocation(t) => {
                    self.check_revocation(t, &decided).map_err(reject)?;
                    for s in &t.decided_suspects {
                        decided.insert(*s, t.tx_hash);
                    }
                }
            }
        }
        self.decided = decided;
        self.participants.extend(introduced);
        self.next_height += 1;
        self.tip = block.pow_hash;
        Ok(())
    }

    /// The subset of `candidates` that forms a valid next block, in
    /// canonical order. Revocations are rebuilt against the decisions of
    /// earlier transactions so overlapping statements do not invalidate
    /// each other.
    pub fn select_txs(&self, candidates: Vec<Tx>) -> Vec<Tx> {
        let mut scratch = self.clone();
        let mut intros = Vec::new();
        let mut seen_intro = BTreeSet::new();
        let mut revocations = Vec::new();
        for tx in candidates {
            match tx {
                Tx::Introduction(t) => {
                    if self.check_intro(&t, &seen_intro).is_ok() {
                        seen_intro.insert(t.subject.node());
                        intros.push(Tx::Introduction(t));
                    }
                }
                Tx::Revocation(t) => revocations.push(t),
            }
        }
        // Decisions from earlier-ordered txs affect later ones, so settle
        // revocations in a fixed order and then re-sort the block.
        revocations.sort_by_key(|t| t.tx_hash);
        let mut chosen: Vec<RevocationTx> = Vec::new();
        for t in revocations {
            if let Ok(tx) = scratch.build_revocation_tx(t.statement) {
                for s in &tx.decided_suspects {
                    scratch.decided.insert(*s, tx.tx_hash);
                }
                chosen.push(tx);
            }
        }
        // Re-check in canonical order; drop any that the reordering broke.
        let mut all: Vec<Tx> = intros
            .into_iter()
            .chain(chosen.into_iter().map(Tx::Revocation))
            .collect();
        all.sort_by_key(Tx::hash);
        let mut decided = self.decided.clone();
        all.retain(|tx| match tx {
            Tx::Introduction(_) => true,
            Tx::Revocation(t) => {
                let ok = self.check_revocation(t, &decided).is_ok();
                if ok {
                    for s in &t.decided_suspects {
                        decided.insert(*s, t.tx_hash);
                    }
                }
                ok
            }
        });
        all
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevocationEffect {
    Revoked {
        p_id: PseudonymId,
        lt_id: LtId,
        tx: Hash32,
    },
    AlreadyRevoked {
        p_id: PseudonymId,
        lt_id: LtId,
        tx: Hash32,
    },
    Failed {
        p_id: PseudonymId,
        tx: Hash32,
        error: ScmsError,
    },
}

/// Executes the decisions of a verified block: the issuing region links
/// each suspect to its owner under the transaction's authority, then every
/// region revokes that owner. Failures are reported, never fatal: the
/// block stays on chain either way.
pub fn apply_revocations(
    block: &GlobalBlock,
    state: &ChainState,
    regions: &mut [Scms],
    now: Tick,
) -> Vec<RevocationEffect> {
    let mut effects = Vec::new();
    for tx in &block.txs {
        let Tx::Revocation(t) = tx else { continue };
        for &p_id in &t.decided_suspects {
            let Some(issuer) = regions.iter_mut().find(|s| s.region() == p_id.region) else {
                effects.push(RevocationEffect::Failed {
                    p_id,
                    tx: t.tx_hash,
                    error: ScmsError::UnknownPseudonym(p_id),
                });
                continue;
            };
            let lt_id = match issuer.resolve_linkage(p_id, t.tx_hash, state, now) {
                Ok(lt) => lt,
                Err(error) => {
                    effects.push(RevocationEffect::Failed {
                        p_id,
                        tx: t.tx_hash,
                        error,
                    });
                    continue;
                }
            };
            let mut changed = false;
            let mut failure = None;
            for scms in regions.iter_mut() {
                match scms.revoke(lt_id, now, t.tx_hash) {
                    Ok(c) => changed |= c,
                    Err(e) => failure = Some(e),
                }
            }
            effects.push(match failure {
                Some(error) => RevocationEffect::Failed {
                    p_id,
                    tx: t.tx_hash,
                    error,
                },
                None if changed => RevocationEffect::Revoked {
                    p_id,
                    lt_id,
                    tx: t.tx_hash,
                },
                None => RevocationEffect::AlreadyRevoked {
                    p_id,
                    lt_id,
                    tx: t.tx_hash,
                },
            });
        }
    }
    effects
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SigningKey;
    use crate::ledger::{mine_block, Ledger};
    use crate::sim::RngStreams;
    use crate::testkit::Fixture;
    use crate::scms::RegionId;

    fn ledger_with_rsus(fx: &Fixture) -> Ledger {
        let mut ledger = Ledger::new(&fx.genesis);
        let intros = fx.rsu_intros(ledger.state());
        let block = ledger.mine(intros);
        assert_eq!(block.txs.len(), 4);
        ledger.append(block).unwrap();
        ledger
    }

    fn certified(fx: &Fixture, signers: &[usize]) -> AggregatedStatement {
        let r = fx.speeding_report(0, 1, 20);
        let block = fx.cluster_block(&[0, 1, 2], vec![r], 21);
        fx.statement(0, &[&block], signers)
    }

    #[test]
    fn majority_threshold_over_prior_participants() {
        let keys: Vec<SigningKey> = (0..4).map(|i| SigningKey::from_seed([40 + i; 32])).collect();
        let fx = Fixture::new(1);
        let mut genesis = fx.genesis.clone();
        genesis.participants = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (NodeId::ma(i as u32), k.public()))
            .collect();
        let state = ChainState::new(&genesis);
        assert_eq!(state.intro_threshold(), 3);
        let subject = Subject::Ma {
            node: NodeId::ma(9),
            key: SigningKey::from_seed([1; 32]).public(),
        };
        let approve = |n: usize| -> Vec<Approval> {
            (0..n)
                .map(|i| Approval::sign(NodeId::ma(i as u32), &keys[i], &subject))
                .collect()
        };
        assert!(state.introduce_participant(subject.clone(), approve(3)).is_ok());
        assert_eq!(
            state.introduce_participant(subject.clone(), approve(2)),
            Err(TxRejection::TooFewApprovals { have: 2, need: 3 })
        );
        let mut dup = approve(2);
        dup.push(dup[0].clone());
        assert_eq!(
            state.introduce_participant(subject.clone(), dup),
            Err(TxRejection::DuplicateApproval(NodeId::ma(0)))
        );
        let mut forged = approve(3);
        forged[2].signature = forged[1].signature;
        assert_eq!(
            state.introduce_participant(subject, forged),
            Err(TxRejection::BadApproval(NodeId::ma(2)))
        );
    }

    #[test]
    fn genesis_participants_need_no_introduction() {
        let fx = Fixture::new(1);
        let state = ChainState::new(&fx.genesis);
        assert_eq!(state.participants().len(), 2);
        assert!(state.participants().values().all(|p| p.intro_tx.is_none()));
    }

    #[test]
    fn revocation_tx_references_every_signer() {
        let fx = Fixture::new(3);
        let ledger = ledger_with_rsus(&fx);
        let tx = ledger
            .state()
            .build_revocation_tx(certified(&fx, &[0, 1, 2]))
            .unwrap();
        assert_eq!(tx.references.len(), 3);
        for r in &tx.references {
            assert_eq!(ledger.state().participant(&r.signer).unwrap().intro_tx, Some(r.intro_tx));
        }
        assert_eq!(tx.decided_suspects, vec![fx.pseudonym(1).id()]);
    }

    #[test]
    fn unintroduced_signer_is_refused() {
        let fx = Fixture::new(3);
        let state = ChainState::new(&fx.genesis);
        assert_eq!(
            state.build_revocation_tx(certified(&fx, &[0, 1, 2])).unwrap_err(),
            TxRejection::UnknownGroup(GroupId(0))
        );
        // Only three RSUs introduced: the fourth signer is not a participant.
        let mut ledger = Ledger::new(&fx.genesis);
        let mut intros = fx.rsu_intros(ledger.state());
        intros.retain(|t| matches!(t, Tx::Introduction(i) if i.subject.node() != NodeId::rsu(3)));
        let block = ledger.mine(intros);
        ledger.append(block).unwrap();
        assert_eq!(
            ledger.state().build_revocation_tx(certified(&fx, &[1, 2, 3])).unwrap_err(),
            TxRejection::NotIntroduced { signer: NodeId::rsu(3) }
        );
    }

    #[test]
    fn tampered_evidence_is_refused() {
        let fx = Fixture::new(3);
        let ledger = ledger_with_rsus(&fx);
        let mut r = fx.speeding_report(0, 1, 20);
        r.evidence[1].state.position.x += 1.0;
        let block = fx.cluster_block(&[0, 1, 2], vec![r], 21);
        let stmt = fx.statement(0, &[&block], &[0, 1, 2]);
        assert!(matches!(
            ledger.state().build_revocation_tx(stmt),
            Err(TxRejection::Evidence(..))
        ));
    }

    #[test]
    fn short_certificate_is_refused() {
        let fx = Fixture::new(3);
        let ledger = ledger_with_rsus(&fx);
        assert_eq!(
            ledger.state().build_revocation_tx(certified(&fx, &[0, 1])).unwrap_err(),
            TxRejection::QuorumCert(QcFault::TooFew { have: 2, need: 3 })
        );
    }

    #[test]
    fn suspects_are_decided_once() {
        let fx = Fixture::new(3);
        let mut ledger = ledger_with_rsus(&fx);
        let stmt = certified(&fx, &[0, 1, 2]);
        let tx = ledger.state().build_revocation_tx(stmt.clone()).unwrap();
        let block = ledger.mine(vec![Tx::Revocation(tx.clone())]);
        assert_eq!(block.txs.len(), 1);
        ledger.append(block).unwrap();
        assert_eq!(ledger.state().decided_by(&fx.pseudonym(1).id()), Some(tx.tx_hash));
        assert!(ledger.state().authorizes(&tx.tx_hash, &fx.pseudonym(1).id()));
        assert!(!ledger.state().authorizes(&tx.tx_hash, &fx.pseudonym(0).id()));
        assert_eq!(
            ledger.state().build_revocation_tx(stmt).unwrap_err(),
            TxRejection::NothingToDecide
        );
        // Replaying the same transaction in a new block is rejected.
        let replay = mine_block(vec![Tx::Revocation(tx)], 2, ledger.state().tip(), 4);
        assert!(matches!(
            ledger.clone().append(replay),
            Err(BlockRejection::Tx { reason: TxRejection::NothingToDecide, .. })
        ));
    }

    #[test]
    fn miner_excludes_invalid_and_overlapping() {
        let fx = Fixture::new(4);
        let ledger = ledger_with_rsus(&fx);
        let b1 = fx.cluster_block(&[0, 1, 2], vec![fx.speeding_report(0, 1, 20)], 21);
        let b2 = fx.cluster_block(
            &[0, 1, 2, 3],
            vec![fx.speeding_report(2, 1, 30), fx.speeding_report(2, 3, 30)],
            31,
        );
        let s1 = ledger.state().build_revocation_tx(fx.statement(0, &[&b1], &[0, 1, 2])).unwrap();
        let s2 = ledger.state().build_revocation_tx(fx.statement(1, &[&b2], &[1, 2, 3])).unwrap();
        let mut bad = s1.clone();
        bad.decided_suspects.clear();
        bad.tx_hash = bad.compute_hash();
        let block = ledger.mine(vec![
            Tx::Revocation(s1),
            Tx::Revocation(s2),
            Tx::Revocation(bad),
        ]);
        let mut check = ledger.clone();
        check.append(block.clone()).unwrap();
        let decided: BTreeSet<PseudonymId> = check.state().decisions().keys().copied().collect();
        assert!(decided.contains(&fx.pseudonym(1).id()) || decided.contains(&fx.pseudonym(3).id()));
        assert!(block.txs.windows(2).all(|w| w[0].hash() < w[1].hash()));
    }

    #[test]
    fn revocation_before_introduction_is_rejected() {
        let fx = Fixture::new(3);
        let good = ledger_with_rsus(&fx);
        let tx = good.state().build_revocation_tx(certified(&fx, &[0, 1, 2])).unwrap();
        // Same block as the introductions: references must be strictly earlier.
        let mut txs = fx.rsu_intros(&ChainState::new(&fx.genesis));
        txs.push(Tx::Revocation(tx.clone()));
        txs.sort_by_key(Tx::hash);
        let mut state = ChainState::new(&fx.genesis);
        let block = mine_block(txs, 0, state.tip(), 4);
        assert!(matches!(state.apply_block(&block), Err(BlockRejection::Tx { .. })));
        // Revocation first, introductions after.
        let mut state = ChainState::new(&fx.genesis);
        let first = mine_block(vec![Tx::Revocation(tx)], 0, state.tip(), 4);
        assert!(matches!(
            state.apply_block(&first),
            Err(BlockRejection::Tx { reason: TxRejection::UnknownGroup(_), .. })
        ));
    }

    #[test]
    fn stored_hashes_must_match() {
        let fx = Fixture::new(3);
        let good = ledger_with_rsus(&fx);
        let mut tx = good.state().build_revocation_tx(certified(&fx, &[0, 1, 2])).unwrap();
        tx.tx_hash = Hash32([7; 32]);
        let block = mine_block(vec![Tx::Revocation(tx)], 1, good.state().tip(), 4);
        assert!(matches!(
            good.clone().append(block),
            Err(BlockRejection::Tx { reason: TxRejection::TxHash, .. })
        ));
        let mut block = mine_block(Vec::new(), 1, good.state().tip(), 4);
        block.nonce += 1;
        assert_eq!(good.clone().append(block), Err(BlockRejection::PowHash));
    }

    #[test]
    fn revocation_reaches_every_region_once() {
        let mut fx = Fixture::new(3);
        let mut ledger = ledger_with_rsus(&fx);
        let tx = ledger.state().build_revocation_tx(certified(&fx, &[0, 1, 2])).unwrap();
        let block = ledger.mine(vec![Tx::Revocation(tx.clone())]);
        ledger.append(block.clone()).unwrap();
        let other = Scms::new(RegionId(1), RngStreams::fresh(8, "other"));
        let home = std::mem::replace(&mut fx.scms, Scms::new(RegionId(0), RngStreams::fresh(9, "x")));
        let mut regions = vec![home, other];
        let suspect = fx.vehicles[1].0;
        let effects = apply_revocations(&block, ledger.state(), &mut regions, 50);
        assert_eq!(
            effects,
            vec![RevocationEffect::Revoked {
                p_id: fx.pseudonym(1).id(),
                lt_id: suspect,
                tx: tx.tx_hash
            }]
        );
        assert!(regions.iter().all(|s| s.is_blacklisted(suspect)));
        assert!(!regions[0].is_blacklisted(fx.vehicles[0].0));
        let again = apply_revocations(&block, ledger.state(), &mut regions, 60);
        assert!(matches!(again[0], RevocationEffect::AlreadyRevoked { .. }));
        assert_eq!(regions[0].revoked_at(suspect), Some(50));
    }

    #[test]
    fn undecided_suspect_cannot_be_linked() {
        let mut fx = Fixture::new(3);
        let ledger = ledger_with_rsus(&fx);
        let p = fx.pseudonym(1).id();
        let res = fx.scms.resolve_linkage(p, Hash32([1; 32]), ledger.state(), 5);
        assert!(matches!(res, Err(ScmsError::Unauthorized { .. })));
    }
}
