//! Small hand-built worlds for tests: one region, a few vehicles with
//! pseudonyms, a four-RSU group and two authorities.

use std::collections::BTreeMap;

use crate::cluster::{endorse, unsigned_block, ChainTip, Cluster, ClusterBlock, ClusterId};
use crate::crypto::SigningKey;
use crate::ledger::{Approval, ChainState, GenesisConfig, Subject, Tx};
use crate::rsu::{
    confirm_message, AggregatedStatement, GroupId, QcSignature, RsuGroup, StatementBody,
};
use crate::scms::{IssuancePolicy, LtId, Pseudonym, RegionId, Scms};
use crate::sim::{NodeId, Position, RngStreams, Tick};
use crate::vehicle::{
    build_report, evaluate, Beacon, CheckKind, DetectionParams, KinematicState,
    MisbehaviorReport, TrustStatement, Verdict, VerifyContext,
};

pub struct Fixture {
    pub scms: Scms,
    pub ctx: VerifyContext,
    pub vehicles: Vec<(LtId, Pseudonym)>,
    pub rsus: Vec<(NodeId, SigningKey)>,
    pub group: RsuGroup,
    pub mas: Vec<(NodeId, SigningKey)>,
    pub genesis: GenesisConfig,
}

pub fn state_at(x: f64, y: f64) -> KinematicState {
    KinematicState {
        position: Position { x, y },
        speed: 10.0,
        heading: 0.0,
    }
}

impl Fixture {
    pub fn new(vehicles: usize) -> Fixture {
        let mut scms = Scms::new(RegionId(0), RngStreams::fresh(7, "fixture-scms"));
        let mut held = Vec::new();
        for i in 0..vehicles {
            let e = scms.enroll(NodeId::vehicle(i as u32)).expect("fresh node");
            let lt = e.certificate.lt_id;
            let p = scms
                .issue_pseudonyms(lt, 0, 100, IssuancePolicy::default())
                .expect("issuance")
                .remove(0);
            held.push((lt, p));
        }
        let ctx = VerifyContext {
            pca_keys: [(RegionId(0), scms.pca_public())].into(),
            detection: DetectionParams::default(),
        };
        let rsus: Vec<(NodeId, SigningKey)> = (0..4)
            .map(|i| (NodeId::rsu(i), SigningKey::from_seed([10 + i as u8; 32])))
            .collect();
        let group = RsuGroup {
            id: GroupId(0),
            members: rsus.iter().map(|(n, _)| *n).collect(),
            grid_cell: (0, 0),
        };
        let mas: Vec<(NodeId, SigningKey)> = (0..2)
            .map(|i| (NodeId::ma(i), SigningKey::from_seed([20 + i as u8; 32])))
            .collect();
        let genesis = GenesisConfig {
            difficulty_bits: 4,
            participants: mas.iter().map(|(n, k)| (*n, k.public())).collect(),
            verify: ctx.clone(),
        };
        Fixture {
            scms,
            ctx,
            vehicles: held,
            rsus,
            group,
            mas,
            genesis,
        }
    }

    pub fn pseudonym(&self, v: usize) -> &Pseudonym {
        &self.vehicles[v].1
    }

    /// Two beacons of `suspect` 500 m apart one tick apart.
    pub fn jump_beacons(&self, suspect: usize, tick: Tick) -> (Beacon, Beacon) {
        let p = self.pseudonym(suspect);
        (
            Beacon::sign(p, tick - 1, state_at(100.0, 100.0), Vec::new()),
            Beacon::sign(p, tick, state_at(600.0, 100.0), Vec::new()),
        )
    }

    /// A genuine speed-bound report by `reporter` against `suspect`.
    pub fn speeding_report(&self, reporter: usize, suspect: usize, tick: Tick) -> MisbehaviorReport {
        let (a, b) = self.jump_beacons(suspect, tick);
        let f = evaluate(CheckKind::SpeedBound, &[&a, &b], &self.ctx.detection).expect("fits");
        assert!(f.implausible);
        let statement = TrustStatement {
            suspect: a.p_id(),
            check: CheckKind::SpeedBound,
            inputs: vec![a.hash(), b.hash()],
            verdict: Verdict::Implausible,
            computed_value: f.computed_value,
            threshold: f.threshold,
        };
        build_report(vec![statement], self.pseudonym(reporter), ClusterId::NONE, vec![a, b], tick)
            .expect("evidence present")
    }

    pub fn cluster(&self, members: &[usize], formed_at: Tick) -> Cluster {
        let ids: std::collections::BTreeSet<_> =
            members.iter().map(|&m| self.pseudonym(m).id()).collect();
        Cluster {
            id: ClusterId::derive(formed_at, &ids),
            head: *ids.iter().next().expect("non-empty"),
            members: ids,
            formed_at,
        }
    }

    /// A committed genesis block of a cluster of `members`, endorsed by all.
    pub fn cluster_block(&self, members: &[usize], reports: Vec<MisbehaviorReport>, tick: Tick) -> ClusterBlock {
        let cluster = self.cluster(members, 0);
        let mut certs: Vec<_> = members.iter().map(|&m| self.pseudonym(m).cert.clone()).collect();
        certs.sort_by_key(|c| c.p_id);
        let mut block = unsigned_block(&cluster, certs, cluster.head, ChainTip::GENESIS, reports, tick);
        let endorsements: Vec<_> = members.iter().map(|&m| endorse(self.pseudonym(m), &block)).collect();
        block.endorsements = endorsements;
        block
    }

    /// A statement over `blocks` certified by the RSUs at `signers`.
    pub fn statement(&self, height: u64, blocks: &[&ClusterBlock], signers: &[usize]) -> AggregatedStatement {
        let body = StatementBody::build(self.group.id, height, blocks);
        let msg = confirm_message(&body.hash());
        let quorum_cert = signers
            .iter()
            .map(|&i| QcSignature {
                signer: self.rsus[i].0,
                signature: self.rsus[i].1.sign(&msg),
            })
            .collect();
        AggregatedStatement { body, quorum_cert }
    }

    /// Introductions of every RSU, approved by both authorities.
    pub fn rsu_intros(&self, state: &ChainState) -> Vec<Tx> {
        self.rsus
            .iter()
            .map(|(node, key)| {
                let subject = Subject::Rsu {
                    node: *node,
                    key: key.public(),
                    group: self.group.id,
                };
                let approvals = self
                    .mas
                    .iter()
                    .map(|(n, k)| Approval::sign(*n, k, &subject))
                    .collect();
                Tx::Introduction(
                    state
                        .introduce_participant(subject, approvals)
                        .expect("both authorities approve"),
                )
            })
            .collect()
    }

    pub fn rsu_keys(&self) -> BTreeMap<NodeId, crate::crypto::PublicKey> {
        self.rsus.iter().map(|(n, k)| (*n, k.public())).collect()
    }
}
