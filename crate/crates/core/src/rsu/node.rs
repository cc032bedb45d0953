use std::collections::{BTreeMap, BTreeSet};

use super::bft::{confirm_message, BftInstance, BftOutput};
use super::group::{GroupId, RsuGroup};
use super::statement::{verify_quorum_cert, AggregatedStatement, StatementBody};
use super::validate::{validate_cluster_block, BlockFault, Linkage, RsuChainView};
use crate::cluster::{ClusterBlock, ClusterId};
use crate::codec::Hash32;
use crate::crypto::{PublicKey, Signature, SigningKey};
use crate::scms::PseudonymId;
use crate::sim::{NodeId, Tick};
use crate::vehicle::VerifyContext;

#[derive(Debug, Clone, PartialEq)]
pub enum BftMsg {
    Propose {
        group: GroupId,
        height: u64,
        body: StatementBody,
    },
    Echo {
        group: GroupId,
        height: u64,
        hash: Hash32,
    },
    Confirm {
        group: GroupId,
        height: u64,
        hash: Hash32,
        signature: Signature,
    },
    /// Announces a decided statement so lagging members retire its blocks.
    Decided { statement: AggregatedStatement },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoundOutcome {
    /// Nothing was pending anywhere this node could see.
    Idle,
    Committed(Hash32),
    /// Work was pending but no quorum formed before the timeout.
    NoDecision,
}

struct Round {
    height: u64,
    started: Tick,
    instance: BftInstance,
    bodies: BTreeMap<Hash32, StatementBody>,
    had_work: bool,
}

/// One RSU: validates incoming cluster blocks and runs its group's rounds.
pub struct RsuNode {
    id: NodeId,
    key: SigningKey,
    group: RsuGroup,
    member_keys: BTreeMap<NodeId, PublicKey>,
    view: RsuChainView,
    orphans: BTreeMap<(ClusterId, u64), ClusterBlock>,
    validated: BTreeMap<Hash32, (Tick, ClusterBlock)>,
    retired: BTreeSet<Hash32>,
    round: Option<Round>,
}

impl RsuNode {
    pub fn new(
        id: NodeId,
        key: SigningKey,
        group: RsuGroup,
        member_keys: BTreeMap<NodeId, PublicKey>,
    ) -> Self {
        RsuNode {
            id,
            key,
            group,
            member_keys,
            view: RsuChainView::default(),
            orphans: BTreeMap::new(),
            validated: BTreeMap::new(),
            retired: BTreeSet::new(),
            round: None,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn group(&self) -> &RsuGroup {
        &self.group
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public()
    }

    pub fn pending_blocks(&self) -> usize {
        self.validated.len()
    }

    pub fn knows(&self, hash: &Hash32) -> bool {
        self.validated.contains_key(hash) || self.retired.contains(hash)
    }

    /// Validates a delivered cluster block. Returns the blocks newly
    /// accepted: this one plus any buffered successors it unblocks. A block
    /// whose predecessor has not arrived yet is buffered, not rejected.
    pub fn receive_block(
        &mut self,
        block: ClusterBlock,
        now: Tick,
        ctx: &VerifyContext,
        is_revoked: &dyn Fn(&PseudonymId) -> bool,
    ) -> Result<Vec<ClusterBlock>, BlockFault> {
        if self.knows(&block.hash()) {
            return Ok(Vec::new());
        }
        match validate_cluster_block(&self.view, &block, ctx, is_revoked) {
            Err(BlockFault::Linkage(Linkage::Gap)) => {
                self.orphans.insert((block.cluster_id, block.height), block);
                return Ok(Vec::new());
            }
            Err(e) => return Err(e),
            Ok(_) => {}
        }
        let mut accepted = vec![block];
        loop {
            let last = accepted.last().expect("non-empty");
            self.view.advance(last);
            self.validated
                .insert(last.hash(), (now, last.clone()));
            let key = (last.cluster_id, last.height + 1);
            let Some(next) = self.orphans.remove(&key) else { break };
            if validate_cluster_block(&self.view, &next, ctx, is_revoked).is_err() {
                break;
            }
            accepted.push(next);
        }
        Ok(accepted)
    }

    fn eligible_blocks(&self, before: Tick) -> Vec<&ClusterBlock> {
        self.validated
            .values()
            .filter(|(at, b)| *at < before && !b.reports.is_empty())
            .map(|(_, b)| b)
            .collect()
    }

    /// Starts `height`, closing the previous round. The leader returns its
    /// proposal (and its own echo) for broadcast.
    pub fn begin_round(&mut self, height: u64, now: Tick) -> (Option<RoundOutcome>, Vec<BftMsg>) {
        let previous = self.round.take().map(|r| match r.instance.decided() {
            Some(h) => RoundOutcome::Committed(h),
            None if r.had_work => RoundOutcome::NoDecision,
            None => RoundOutcome::Idle,
        });
        let leader = self.group.leader(height);
        let instance = BftInstance::new(
            self.id,
            self.group.members.clone(),
            leader,
            Some(self.key.clone()),
        );
        let eligible = self.eligible_blocks(now);
        let mut round = Round {
            height,
            started: now,
            instance,
            bodies: BTreeMap::new(),
            had_work: !eligible.is_empty(),
        };
        let mut out = Vec::new();
        if leader == self.id && !eligible.is_empty() {
            let body = StatementBody::build(self.group.id, height, &eligible);
            let hash = body.hash();
            round.bodies.insert(hash, body.clone());
            out.push(BftMsg::Propose {
                group: self.group.id,
                height,
                body,
            });
            let outputs = round.instance.on_proposal(self.id, hash, true);
            self.round = Some(round);
            let (msgs, _) = self.translate(outputs);
            out.extend(msgs);
            return (previous, out);
        }
        self.round = Some(round);
        (previous, out)
    }

    fn check_proposal(&self, round: &Round, body: &StatementBody) -> bool {
        if body.group_id != self.group.id || body.height != round.height {
            return false;
        }
        let mut blocks = Vec::with_capacity(body.included_blocks.len());
        for h in &body.included_blocks {
            match self.validated.get(h) {
                Some((_, b)) if !b.reports.is_empty() => blocks.push(b),
                _ => return false,
            }
        }
        !blocks.is_empty() && StatementBody::build(self.group.id, round.height, &blocks) == *body
    }

    /// Handles a BFT message from a group peer. Returns messages to
    /// broadcast and, on decision, the certified statement.
    pub fn on_bft(&mut self, from: NodeId, msg: BftMsg) -> (Vec<BftMsg>, Option<AggregatedStatement>) {
        if let BftMsg::Decided { statement } = msg {
            if verify_quorum_cert(&statement, &self.member_keys).is_ok()
                && statement.body.group_id == self.group.id
            {
                self.retire(&statement.body.included_blocks);
            }
            return (Vec::new(), None);
        }
        let Some(round) = self.round.as_ref() else {
            return (Vec::new(), None);
        };
        let (group, height) = match &msg {
            BftMsg::Propose { group, height, .. }
            | BftMsg::Echo { group, height, .. }
            | BftMsg::Confirm { group, height, .. } => (*group, *height),
            BftMsg::Decided { .. } => unreachable!(),
        };
        if group != self.group.id || height != round.height {
            return (Vec::new(), None);
        }
        let outputs = match msg {
            BftMsg::Propose { body, .. } => {
                let valid = self.check_proposal(round, &body);
                let hash = body.hash();
                let round = self.round.as_mut().expect("checked");
                if valid {
                    round.bodies.insert(hash, body);
                }
                round.instance.on_proposal(from, hash, valid)
            }
            BftMsg::Echo { hash, .. } => self.round.as_mut().expect("checked").instance.on_echo(from, hash),
            BftMsg::Confirm { hash, signature, .. } => {
                let authentic = self
                    .member_keys
                    .get(&from)
                    .is_some_and(|k| k.verify(&confirm_message(&hash), &signature));
                if !authentic {
                    return (Vec::new(), None);
                }
                self.round
                    .as_mut()
                    .expect("checked")
                    .instance
                    .on_confirm(from, hash, signature)
            }
            BftMsg::Decided { .. } => unreachable!(),
        };
        self.translate(outputs)
    }

    fn translate(&mut self, outputs: Vec<BftOutput>) -> (Vec<BftMsg>, Option<AggregatedStatement>) {
        let round = self.round.as_ref().expect("round in progress");
        let (group, height) = (self.group.id, round.height);
        let mut msgs = Vec::new();
        let mut decided = None;
        for o in outputs {
            match o {
                BftOutput::Echo(hash) => msgs.push(BftMsg::Echo {
                    group,
                    height,
                    hash,
                }),
                BftOutput::Confirm(hash, signature) => msgs.push(BftMsg::Confirm {
                    group,
                    height,
                    hash,
                    signature,
                }),
                BftOutput::Decide(hash, quorum_cert) => {
                    if let Some(body) = round.bodies.get(&hash) {
                        let stmt = AggregatedStatement {
                            body: body.clone(),
                            quorum_cert,
                        };
                        msgs.push(BftMsg::Decided {
                            statement: stmt.clone(),
                        });
                        decided = Some(stmt);
                    }
                }
            }
        }
        if let Some(stmt) = &decided {
            let included = stmt.body.included_blocks.clone();
            self.retire(&included);
        }
        (msgs, decided)
    }

    fn retire(&mut self, blocks: &[Hash32]) {
        for h in blocks {
            self.validated.remove(h);
            self.retired.insert(*h);
        }
    }

    pub fn current_height(&self) -> Option<u64> {
        self.round.as_ref().map(|r| r.height)
    }

    pub fn round_started(&self) -> Option<Tick> {
        self.round.as_ref().map(|r| r.started)
    }
}
