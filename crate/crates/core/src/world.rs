//! The simulated world: vehicles, clusters, RSUs and authorities driven by
//! one deterministic event loop. Every message takes at least one tick;
//! within a tick, due messages are handled first, then periodic actions in
//! a fixed order.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::rc::Rc;

use rand::Rng;
use serde_json::json;

use crate::adversary::{
    bad_mouth_report, conflicting_body, conflicting_hash, displaced, sybil_endorsements,
    AttackProfile, Strategy,
};
use crate::cluster::{
    form_clusters, propose_block, unsigned_block, vote_block, ChainTip, Cluster, ClusterBlock,
    ClusterId, Endorsement, ForwardBuffer, MemberView,
};
use crate::codec::{self, Hash32};
use crate::config::ScenarioConfig;
use crate::crypto::SigningKey;
use crate::ledger::{
    apply_revocations, Approval, GenesisConfig, GlobalBlock, Ledger, RevocationEffect, Subject,
    Tx, TxRejection,
};
use crate::metrics::{Oracles, RunMetrics};
use crate::rsu::{
    confirm_message, group_rsus, AggregatedStatement, BftMsg, GroupId, RoundOutcome, RsuGroup,
    RsuNode,
};
use crate::scms::{AuditRecord, IssuancePolicy, LtId, Pseudonym, PseudonymId, RegionId, Scms};
use crate::sim::{EventLog, EventQueue, NodeId, Position, RadioModel, RngStreams, Tick};
use crate::vehicle::{
    build_report, select_pseudonym, step_mobility, verify_beacon, verify_beacon_signature, Beacon, Detector,
    KinematicState, MisbehaviorReport, MobilityParams, VerifyContext,
};

enum Event {
    Beacon {
        beacon: Rc<Beacon>,
        sender: usize,
        receivers: Vec<usize>,
    },
    Report {
        to: usize,
        report: MisbehaviorReport,
    },
    Candidate {
        cluster: ClusterId,
        block: Rc<ClusterBlock>,
    },
    Endorse {
        cluster: ClusterId,
        block: Hash32,
        endorsement: Endorsement,
    },
    Commit {
        cluster: ClusterId,
        block: Rc<ClusterBlock>,
    },
    RsuBlock {
        rsu: usize,
        block: ClusterBlock,
        relayed: bool,
    },
    Bft {
        to: usize,
        from: NodeId,
        msg: BftMsg,
    },
    Statement {
        ma: usize,
        statement: AggregatedStatement,
    },
    MaBlock {
        ma: usize,
        block: Rc<GlobalBlock>,
    },
}

struct Vehicle {
    node: NodeId,
    lt: LtId,
    home: usize,
    state: KinematicState,
    pool: Vec<Pseudonym>,
    /// Pseudonyms signing this tick: one, or two for an active Sybil.
    current: Vec<PseudonymId>,
    detector: Detector,
    attack: Option<AttackProfile>,
    silent: bool,
    /// Reports held while this vehicle heads a cluster.
    pending: BTreeMap<Hash32, MisbehaviorReport>,
    forward: ForwardBuffer,
    /// Fabricated reports not yet used.
    fabricated: Vec<MisbehaviorReport>,
    bad_mouthed: BTreeSet<PseudonymId>,
    first_false_beacon: Option<Tick>,
    second_count: u64,
    second_exempt: bool,
}

impl Vehicle {
    fn pseudonym(&self, p: &PseudonymId) -> Option<&Pseudonym> {
        self.pool.iter().find(|x| x.id() == *p)
    }

    fn attacking(&self, t: Tick, strategy: Strategy) -> bool {
        self.attack
            .as_ref()
            .is_some_and(|a| a.strategy == strategy && a.is_active(t))
    }
}

struct InFlight {
    block: ClusterBlock,
    proposer: usize,
    endorsements: BTreeMap<PseudonymId, Endorsement>,
    /// Proposed by a Sybil attacker and carrying a fabricated report.
    sybil: bool,
    /// Proposed by someone other than the real head.
    forged: bool,
}

struct ClusterState {
    cluster: Cluster,
    head_vehicle: usize,
    head_tip: ChainTip,
    views: BTreeMap<PseudonymId, MemberView>,
    inflight: BTreeMap<Hash32, InFlight>,
}

struct Rsu {
    node: RsuNode,
    key: SigningKey,
    byzantine: Option<Strategy>,
}

struct Authority {
    node: NodeId,
    ledger: Ledger,
    mempool: BTreeMap<Hash32, AggregatedStatement>,
}

#[derive(Default)]
struct Counters {
    trust_statements: u64,
    generated: BTreeSet<Hash32>,
    committed: BTreeSet<Hash32>,
    aggregated: BTreeSet<Hash32>,
    statements: BTreeSet<Hash32>,
    naive_edr_bytes: u64,
    /// (group, height) -> (had work, committed) over honest members.
    rounds: BTreeMap<(GroupId, u64), (bool, bool)>,
}

pub struct World {
    cfg: ScenarioConfig,
    now: Tick,
    radio: RadioModel,
    mobility: MobilityParams,
    policy: IssuancePolicy,
    ctx: VerifyContext,
    rng: RngStreams,
    queue: EventQueue<Event>,
    log: EventLog,
    regions: Vec<Scms>,
    vehicles: Vec<Vehicle>,
    owner: HashMap<PseudonymId, usize>,
    clusters: BTreeMap<ClusterId, ClusterState>,
    membership: BTreeMap<PseudonymId, ClusterId>,
    active_set: BTreeSet<PseudonymId>,
    last_recluster: Option<Tick>,
    rsus: Vec<Rsu>,
    rsu_sites: Vec<(NodeId, Position)>,
    groups: Vec<RsuGroup>,
    mas: Vec<Authority>,
    genesis: GenesisConfig,
    applied: BTreeSet<Hash32>,
    counters: Counters,
    /// Pseudonym certificates whose PCA signature has been checked.
    verified_certs: HashSet<Hash32>,
    oracles: Oracles,
    bad_reports: BTreeMap<Hash32, MisbehaviorReport>,
}

/// Everything a finished run produced.
pub struct RunOutcome {
    pub config: ScenarioConfig,
    pub metrics: RunMetrics,
    pub oracles: Oracles,
    pub chain: Vec<u8>,
    pub blocks: Vec<GlobalBlock>,
    pub genesis: GenesisConfig,
    pub audit: Vec<AuditRecord>,
    pub events: Vec<u8>,
    /// Every fabricated report any attacker produced.
    pub bad_reports: Vec<MisbehaviorReport>,
    /// Long-term identity of each vehicle, by index.
    pub vehicle_lts: Vec<LtId>,
}

fn rsu_index(node: NodeId) -> usize {
    node.index as usize
}

impl World {
    /// Builds the world: enrollment, RSU groups and keys, authorities and
    /// the genesis configuration. The config must already be valid.
    pub fn new(cfg: ScenarioConfig) -> World {
        let seed = cfg.seed;
        let mut rng = RngStreams::new(seed);
        let mut regions: Vec<Scms> = (0..cfg.regions)
            .map(|r| Scms::new(RegionId(r), RngStreams::fresh(seed, &format!("scms-{r}"))))
            .collect();
        let ctx = VerifyContext {
            pca_keys: regions.iter().map(|s| (s.region(), s.pca_public())).collect(),
            detection: cfg.detection(),
        };
        let mobility = cfg.mobility();
        let profiles = cfg.attack_profiles();
        let mut vehicles = Vec::with_capacity(cfg.vehicles as usize);
        for i in 0..cfg.vehicles {
            let home = i as usize % regions.len();
            let node = NodeId::vehicle(i);
            let lt = regions[home]
                .enroll(node)
                .expect("fresh vehicle enrolls")
                .certificate
                .lt_id;
            let place = rng.stream("placement");
            let state = KinematicState {
                position: Position::new(place.gen_range(0.0..=cfg.world_w), place.gen_range(0.0..=cfg.world_h)),
                speed: place.gen_range(0.0..=cfg.v_max / 2.0),
                heading: place.gen_range(0.0..std::f64::consts::TAU),
            };
            let attack = profiles
                .iter()
                .find(|a| !a.strategy.targets_rsu() && a.node == i)
                .cloned();
            vehicles.push(Vehicle {
                node,
                lt,
                home,
                state,
                pool: Vec::new(),
                current: Vec::new(),
                detector: Detector::new(ctx.detection),
                attack,
                silent: false,
                pending: BTreeMap::new(),
                forward: ForwardBuffer::default(),
                fabricated: Vec::new(),
                bad_mouthed: BTreeSet::new(),
                first_false_beacon: None,
                second_count: 0,
                second_exempt: false,
            });
        }

        let mas: Vec<(NodeId, SigningKey)> = (0..cfg.regions)
            .map(|r| (NodeId::ma(r as u32), SigningKey::generate(rng.stream("ma-keys"))))
            .collect();
        let genesis = GenesisConfig {
            difficulty_bits: cfg.difficulty_bits,
            participants: mas.iter().map(|(n, k)| (*n, k.public())).collect(),
            verify: ctx.clone(),
        };

        let rsu_sites: Vec<(NodeId, Position)> = cfg
            .rsu_sites()
            .into_iter()
            .enumerate()
            .map(|(i, p)| (NodeId::rsu(i as u32), p))
            .collect();
        let groups = group_rsus(&rsu_sites, cfg.rsu_cell_size_m).expect("validated cell size");
        let keys: Vec<SigningKey> = rsu_sites
            .iter()
            .map(|_| SigningKey::generate(rng.stream("rsu-keys")))
            .collect();
        let rsus = rsu_sites
            .iter()
            .map(|(id, _)| {
                let group = groups
                    .iter()
                    .find(|g| g.contains(id))
                    .expect("every RSU is grouped")
                    .clone();
                let member_keys = group
                    .members
                    .iter()
                    .map(|m| (*m, keys[rsu_index(*m)].public()))
                    .collect();
                let key = keys[rsu_index(*id)].clone();
                let byzantine = profiles
                    .iter()
                    .find(|a| a.strategy.targets_rsu() && a.node == id.index)
                    .map(|a| a.strategy);
                Rsu {
                    node: RsuNode::new(*id, key.clone(), group, member_keys),
                    key,
                    byzantine,
                }
            })
            .collect();

        let authorities = mas
            .iter()
            .map(|(node, _)| Authority {
                node: *node,
                ledger: Ledger::new(&genesis),
                mempool: BTreeMap::new(),
            })
            .collect();

        let mut world = World {
            radio: cfg.radio().expect("validated range"),
            mobility,
            policy: cfg.issuance(),
            log: EventLog::new(cfg.event_log),
            now: 0,
            ctx,
            rng,
            queue: EventQueue::new(),
            regions,
            vehicles,
            owner: HashMap::new(),
            clusters: BTreeMap::new(),
            membership: BTreeMap::new(),
            active_set: BTreeSet::new(),
            last_recluster: None,
            rsus,
            rsu_sites,
            groups,
            mas: authorities,
            genesis,
            applied: BTreeSet::new(),
            counters: Counters::default(),
            verified_certs: HashSet::new(),
            oracles: Oracles::default(),
            bad_reports: BTreeMap::new(),
            cfg,
        };
        world.introduce_rsus(&mas);
        world
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn genesis(&self) -> &GenesisConfig {
        &self.genesis
    }

    // Block 0: every RSU introduced with the approval of all founding
    // authorities, mined by the first authority at tick 0.
    fn introduce_rsus(&mut self, mas: &[(NodeId, SigningKey)]) {
        let state = self.mas[0].ledger.state();
        let mut txs = Vec::new();
        for rsu in &self.rsus {
            let subject = Subject::Rsu {
                node: rsu.node.id(),
                key: rsu.node.public_key(),
                group: rsu.node.group().id,
            };
            let approvals = mas.iter().map(|(n, k)| Approval::sign(*n, k, &subject)).collect();
            let tx = state
                .introduce_participant(subject, approvals)
                .expect("all founders approve");
            txs.push(Tx::Introduction(tx));
        }
        let block = self.mas[0].ledger.mine(txs);
        self.adopt(0, block, 0);
        self.broadcast_block(0);
    }

    fn crl_contains(&self, p: &PseudonymId) -> bool {
        self.regions.iter().any(|s| s.is_pseudonym_revoked(p))
    }

    /// Runs every remaining tick.
    pub fn run_to_end(&mut self) {
        while self.now < self.cfg.ticks {
            self.step();
        }
    }

    pub fn step(&mut self) {
        let t = self.now;
        self.queue.advance_to(t);
        while let Some(ev) = self.queue.pop_due() {
            self.handle(ev, t);
        }
        if t > 0 {
            self.move_vehicles();
        }
        self.update_silence(t);
        self.refill_pools(t);
        self.choose_pseudonyms(t);
        let recluster = self.last_recluster.is_none_or(|last| t - last >= self.cfg.recluster_interval);
        if recluster || self.active_set != self.current_set() {
            self.recluster(t);
        }
        self.emit_beacons(t);
        self.flush_forward(t);
        if t > 0 && t % self.cfg.cluster_epoch == 0 {
            self.cluster_epoch(t);
        }
        if t > 0 && t % self.cfg.bft_round_ticks == 0 {
            self.bft_rounds(t);
        }
        if t > 0 && t % self.cfg.mine_interval == 0 {
            self.mine(t);
        }
        self.close_second(t);
        self.now += 1;
    }

    fn handle(&mut self, ev: Event, t: Tick) {
        match ev {
            Event::Beacon {
                beacon,
                sender,
                receivers,
            } => self.deliver_beacon(beacon, sender, receivers, t),
            Event::Report { to, report } => self.deliver_report(to, report),
            Event::Candidate { cluster, block } => self.deliver_candidate(cluster, &block, t),
            Event::Endorse {
                cluster,
                block,
                endorsement,
            } => {
                let Some(cs) = self.clusters.get_mut(&cluster) else { return };
                let Some(f) = cs.inflight.get_mut(&block) else { return };
                f.endorsements.insert(endorsement.signer, endorsement);
                self.try_commit(cluster, block, t);
            }
            Event::Commit { cluster, block } => {
                if let Some(cs) = self.clusters.get_mut(&cluster) {
                    for view in cs.views.values_mut() {
                        view.on_commit(&block);
                    }
                }
            }
            Event::RsuBlock {
                rsu,
                block,
                relayed,
            } => self.deliver_rsu_block(rsu, block, relayed, t),
            Event::Bft { to, from, msg } => self.deliver_bft(to, from, msg, t),
            Event::Statement { ma, statement } => {
                let h = statement.hash();
                let known = self.mas[ma].ledger.blocks().iter().any(|b| {
                    b.txs.iter().any(|tx| matches!(tx, Tx::Revocation(r) if r.statement.hash() == h))
                });
                if !known {
                    self.mas[ma].mempool.entry(h).or_insert(statement);
                }
            }
            Event::MaBlock { ma, block } => self.adopt(ma, (*block).clone(), t),
        }
    }

    // ---- vehicles ----

    fn move_vehicles(&mut self) {
        let rng = self.rng.stream("mobility");
        for v in &mut self.vehicles {
            v.state = step_mobility(v.state, 1, rng, &self.mobility);
        }
    }

    fn update_silence(&mut self, t: Tick) {
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            if !v.silent && self.regions[v.home].is_blacklisted(v.lt) {
                let v = &mut self.vehicles[i];
                v.silent = true;
                v.pending.clear();
                v.fabricated.clear();
                v.current.clear();
                self.log.record(t, v.node, "silenced", json!({ "lt_id": v.lt.to_string() }));
            }
        }
    }

    fn refill_pools(&mut self, t: Tick) {
        let overlap = self.policy.overlap_ticks;
        for v in self.vehicles.iter_mut().filter(|v| !v.silent) {
            v.pool.retain(|p| p.cert.valid_to >= t);
            if v.pool.last().is_none_or(|p| p.cert.valid_to <= t + overlap) {
                match self.regions[v.home].issue_pseudonyms(v.lt, t, self.policy.window_ticks, self.policy) {
                    Ok(fresh) => {
                        for p in fresh {
                            self.owner.insert(p.id(), v.node.index as usize);
                            v.pool.push(p);
                        }
                    }
                    Err(e) => self.log.record(t, v.node, "issuance_refused", json!({ "error": e.to_string() })),
                }
            }
        }
    }

    fn choose_pseudonyms(&mut self, t: Tick) {
        let mut max_active = self.oracles.max_active_pseudonyms;
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            let active = self.regions[v.home]
                .active_pseudonyms(v.lt, t)
                .map(|a| a.len())
                .unwrap_or(0);
            max_active = max_active.max(active);
            if v.silent {
                continue;
            }
            let chosen: Vec<PseudonymId> = if v.attacking(t, Strategy::SybilVote) {
                v.pool
                    .iter()
                    .filter(|p| p.cert.is_valid_at(t) && !self.crl_contains(&p.id()))
                    .map(|p| p.id())
                    .collect()
            } else {
                select_pseudonym(&v.pool, t, |p| self.crl_contains(p))
                    .map(|p| vec![p.id()])
                    .unwrap_or_default()
            };
            max_active = max_active.max(chosen.len());
            self.vehicles[i].current = chosen;
        }
        self.oracles.max_active_pseudonyms = max_active;
    }

    fn current_set(&self) -> BTreeSet<PseudonymId> {
        self.vehicles.iter().flat_map(|v| v.current.iter().copied()).collect()
    }

    fn recluster(&mut self, t: Tick) {
        let positions: BTreeMap<PseudonymId, Position> = self
            .vehicles
            .iter()
            .flat_map(|v| v.current.iter().map(move |p| (*p, v.state.position)))
            .collect();
        let formed = form_clusters(&positions, &self.radio, t);
        let mut old: BTreeMap<BTreeSet<PseudonymId>, ClusterState> = std::mem::take(&mut self.clusters)
            .into_values()
            .map(|c| (c.cluster.members.clone(), c))
            .collect();
        self.membership.clear();
        for c in formed {
            let state = old.remove(&c.members).unwrap_or_else(|| ClusterState {
                head_vehicle: self.owner[&c.head],
                head_tip: ChainTip::GENESIS,
                views: c.members.iter().map(|p| (*p, MemberView::new(c.id))).collect(),
                inflight: BTreeMap::new(),
                cluster: c,
            });
            for p in &state.cluster.members {
                self.membership.insert(*p, state.cluster.id);
            }
            self.clusters.insert(state.cluster.id, state);
        }
        // Reports held by vehicles that no longer head a cluster move to
        // their new head.
        let heads: BTreeSet<usize> = self.clusters.values().map(|c| c.head_vehicle).collect();
        for i in 0..self.vehicles.len() {
            if heads.contains(&i) || self.vehicles[i].pending.is_empty() {
                continue;
            }
            let pending = std::mem::take(&mut self.vehicles[i].pending);
            if let Some(head) = self.head_of(i) {
                self.vehicles[head].pending.extend(pending);
            }
        }
        self.active_set = self.current_set();
        self.last_recluster = Some(t);
        self.log.record(t, "world", "recluster", json!({ "clusters": self.clusters.len() }));
    }

    fn head_of(&self, vehicle: usize) -> Option<usize> {
        let p = self.vehicles[vehicle].current.first()?;
        let cid = self.membership.get(p)?;
        Some(self.clusters[cid].head_vehicle)
    }

    fn emit_beacons(&mut self, t: Tick) {
        let positions: Vec<(bool, Position)> = self
            .vehicles
            .iter()
            .map(|v| (!v.silent, v.state.position))
            .collect();
        for i in 0..self.vehicles.len() {
            let v = &mut self.vehicles[i];
            if v.silent {
                v.second_exempt = true;
                continue;
            }
            if v.current.len() != 1 {
                v.second_exempt |= v.attack.as_ref().is_some_and(|a| a.strategy == Strategy::SybilVote);
            }
            let claimed = match &v.attack {
                Some(a) if a.strategy == Strategy::FalsePosition && a.is_active(t) => {
                    v.first_false_beacon.get_or_insert(t);
                    displaced(&v.state, a.offset_m)
                }
                _ => v.state,
            };
            let receivers: Vec<usize> = positions
                .iter()
                .enumerate()
                .filter(|(j, (on, pos))| *j != i && *on && self.radio.in_range(&v.state.position, pos))
                .map(|(j, _)| j)
                .collect();
            for p in &v.current {
                let pseudonym = v.pseudonym(p).expect("current pseudonym is held");
                let beacon = Beacon::sign(pseudonym, t, claimed, Vec::new());
                self.counters.naive_edr_bytes += (beacon.encoded_len() * (1 + receivers.len())) as u64;
                v.second_count += 1;
                self.queue.schedule_in(
                    Event::Beacon {
                        beacon: Rc::new(beacon),
                        sender: i,
                        receivers: receivers.clone(),
                    },
                    1,
                );
            }
        }
    }

    fn close_second(&mut self, t: Tick) {
        if t % 10 != 9 {
            return;
        }
        for v in &mut self.vehicles {
            if !v.second_exempt && !v.silent {
                let n = v.second_count;
                self.oracles.beacon_rate_windows += 1;
                if n != 10 {
                    self.oracles.beacon_rate_violations += 1;
                }
                self.oracles.beacon_rate_min = Some(self.oracles.beacon_rate_min.map_or(n, |m| m.min(n)));
                self.oracles.beacon_rate_max = Some(self.oracles.beacon_rate_max.map_or(n, |m| m.max(n)));
            }
            v.second_count = 0;
            v.second_exempt = false;
        }
    }

    fn deliver_beacon(&mut self, beacon: Rc<Beacon>, sender: usize, receivers: Vec<usize>, t: Tick) {
        let cert = Hash32::of("cert", &beacon.cert);
        let verified = if self.verified_certs.contains(&cert) {
            verify_beacon_signature(&beacon)
        } else {
            verify_beacon(&beacon, &self.ctx)
        };
        if verified.is_err() || self.crl_contains(&beacon.p_id()) {
            return;
        }
        self.verified_certs.insert(cert);
        for r in receivers {
            if !self.vehicles[r].silent {
                self.receive_beacon(r, sender, &beacon, t);
            }
        }
    }

    fn receive_beacon(&mut self, r: usize, sender: usize, beacon: &Rc<Beacon>, t: Tick) {
        let p = beacon.p_id();
        let v = &mut self.vehicles[r];
        let fabricates = v.attack.as_ref().is_some_and(|a| {
            matches!(a.strategy, Strategy::BadMouth | Strategy::SybilVote)
                && a.is_active(t)
                && (a.targets.is_empty() || a.targets.contains(&(sender as u32)))
        }) && !v.bad_mouthed.contains(&p);
        let prev = if fabricates { v.detector.last_beacon(&p).cloned() } else { None };
        let findings = v.detector.observe(beacon.clone());
        if !findings.is_empty() {
            self.counters.trust_statements += findings.len() as u64;
            if let Some(reporter) = v.current.first().and_then(|id| v.pseudonym(id)) {
                let cluster = self.membership.get(&reporter.id()).copied().unwrap_or(ClusterId::NONE);
                let mut statements = Vec::new();
                let mut evidence: BTreeMap<Hash32, Beacon> = BTreeMap::new();
                for (s, cited) in findings {
                    for b in cited {
                        evidence.entry(b.hash()).or_insert_with(|| (*b).clone());
                    }
                    statements.push(s);
                }
                let report = build_report(statements, reporter, cluster, evidence.into_values().collect(), t)
                    .expect("detector cites its evidence");
                self.send_report(r, report, t);
            }
        }
        let v = &mut self.vehicles[r];
        if let Some(prev) = prev.filter(|b| b.tick < beacon.tick) {
            let Some(attacker) = v.current.first().and_then(|id| v.pseudonym(id)) else { return };
            let cluster = self.membership.get(&attacker.id()).copied().unwrap_or(ClusterId::NONE);
            let fake = bad_mouth_report(attacker, &prev, beacon, cluster, t, self.ctx.detection.v_max);
            v.bad_mouthed.insert(p);
            self.bad_reports.insert(fake.hash(), fake.clone());
            self.counters.generated.insert(fake.hash());
            self.log.record(t, v.node, "fabricated_report", json!({ "report": fake.hash().to_hex(), "suspect": p.to_string() }));
            if v.attacking(t, Strategy::SybilVote) {
                v.fabricated.push(fake);
            } else {
                self.send_report(r, fake, t);
            }
        }
    }

    fn send_report(&mut self, from: usize, report: MisbehaviorReport, t: Tick) {
        let hash = report.hash();
        self.counters.generated.insert(hash);
        let node = self.vehicles[from].node;
        self.log.record(t, node, "report", json!({
            "report": hash.to_hex(),
            "suspects": report.suspects.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        }));
        let Some(head) = self.head_of(from) else { return };
        let bytes = codec::encode(&report).len() as u64;
        if head == from {
            self.counters.naive_edr_bytes += bytes;
            self.vehicles[from].pending.insert(hash, report);
        } else if self
            .radio
            .in_range(&self.vehicles[from].state.position, &self.vehicles[head].state.position)
        {
            self.counters.naive_edr_bytes += 2 * bytes;
            self.queue.schedule_in(Event::Report { to: head, report }, 1);
        } else {
            self.log.record(t, node, "report_lost", json!({ "report": hash.to_hex() }));
        }
    }

    fn deliver_report(&mut self, to: usize, report: MisbehaviorReport) {
        if self.vehicles[to].silent {
            return;
        }
        let head = self.head_of(to).unwrap_or(to);
        self.vehicles[head].pending.insert(report.hash(), report);
    }

    // ---- clusters ----

    fn member_certs(&self, cluster: &Cluster) -> Vec<crate::scms::PseudonymCert> {
        cluster
            .members
            .iter()
            .filter_map(|p| self.vehicles[self.owner[p]].pseudonym(p).map(|x| x.cert.clone()))
            .collect()
    }

    fn cluster_epoch(&mut self, t: Tick) {
        let ids: Vec<ClusterId> = self.clusters.keys().copied().collect();
        for cid in ids {
            let cs = self.clusters.get_mut(&cid).expect("listed");
            cs.inflight.clear();
            let cluster = cs.cluster.clone();
            let head = cs.head_vehicle;
            let tip = cs.head_tip;
            let certs = self.member_certs(&cluster);
            if certs.len() != cluster.members.len() || self.vehicles[head].silent {
                continue;
            }
            let hv = &self.vehicles[head];
            let head_p = hv.pseudonym(&cluster.head).expect("head holds its pseudonym");
            let malicious = hv.attacking(t, Strategy::BadMouth) || hv.attacking(t, Strategy::SybilVote);
            let mut sybil = false;
            let candidate = if malicious {
                let mut reports: Vec<MisbehaviorReport> = hv.pending.values().cloned().collect();
                if hv.attacking(t, Strategy::SybilVote) {
                    if let Some(fake) = self.vehicles[head].fabricated.pop() {
                        reports.push(fake);
                        sybil = true;
                    }
                }
                let hv = &self.vehicles[head];
                let head_p = hv.pseudonym(&cluster.head).expect("head holds its pseudonym");
                unsigned_block(&cluster, certs.clone(), head_p.id(), tip, reports, t)
            } else {
                let pending = hv.pending.values().cloned().collect();
                let (block, rejected) =
                    propose_block(&cluster, &certs, head_p, tip, pending, &self.ctx, t).expect("head proposes");
                for (h, fault) in rejected {
                    self.vehicles[head].pending.remove(&h);
                    if self.bad_reports.contains_key(&h) {
                        self.oracles.bad_reports_rejected_by_head += 1;
                    }
                    self.log.record(t, self.vehicles[head].node, "report_rejected", json!({ "report": h.to_hex(), "fault": fault.to_string() }));
                }
                block
            };
            self.distribute(cid, candidate, head, sybil, false, t);
            // A Sybil member that is not the head forges a candidate of its own.
            let forgers: BTreeSet<usize> = cluster
                .members
                .iter()
                .map(|p| self.owner[p])
                .filter(|&v| v != head && self.vehicles[v].attacking(t, Strategy::SybilVote))
                .collect();
            for a in forgers {
                let Some(fake) = self.vehicles[a].fabricated.pop() else { continue };
                let own = *cluster
                    .members
                    .iter()
                    .find(|p| self.owner[*p] == a)
                    .expect("forger is a member");
                let block = unsigned_block(&cluster, certs.clone(), own, tip, vec![fake], t);
                self.distribute(cid, block, a, true, true, t);
            }
        }
    }

    fn distribute(&mut self, cid: ClusterId, block: ClusterBlock, proposer: usize, sybil: bool, forged: bool, t: Tick) {
        let hash = block.hash();
        let cs = self.clusters.get_mut(&cid).expect("live cluster");
        let pv = &self.vehicles[proposer];
        let malicious = pv.attacking(t, Strategy::BadMouth) || pv.attacking(t, Strategy::SybilVote);
        let mut endorsements = BTreeMap::new();
        if malicious {
            // The attacker signs its own candidate with every pseudonym it
            // has in the cluster.
            let own: Vec<&Pseudonym> = cs
                .cluster
                .members
                .iter()
                .filter_map(|p| pv.pseudonym(p))
                .collect();
            for e in sybil_endorsements(&own, &block, t) {
                endorsements.insert(e.signer, e);
            }
        }
        if sybil {
            let large = cs.cluster.members.len() >= 5;
            let alone = endorsements.len() >= cs.cluster.quorum();
            match (large, alone) {
                (true, a) => {
                    self.oracles.sybil_attempts_large += 1;
                    self.oracles.sybil_quorum_large += a as u64;
                }
                (false, a) => {
                    self.oracles.sybil_attempts_small += 1;
                    self.oracles.sybil_quorum_small += a as u64;
                }
            }
        }
        let rc = Rc::new(block.clone());
        cs.inflight.insert(
            hash,
            InFlight {
                block,
                proposer,
                endorsements,
                sybil,
                forged,
            },
        );
        self.queue.schedule_in(Event::Candidate { cluster: cid, block: rc }, 1);
        self.try_commit(cid, hash, t);
    }

    fn deliver_candidate(&mut self, cid: ClusterId, block: &ClusterBlock, t: Tick) {
        let Some(cs) = self.clusters.get_mut(&cid) else { return };
        let Some(proposer) = cs.inflight.get(&block.hash()).map(|f| f.proposer) else { return };
        let hash = block.hash();
        for p in cs.cluster.members.iter().copied().collect::<Vec<_>>() {
            let v = &self.vehicles[self.owner[&p]];
            if v.silent || (self.owner[&p] == proposer && cs.inflight[&hash].endorsements.contains_key(&p)) {
                continue;
            }
            let Some(pseudonym) = v.pseudonym(&p) else { continue };
            let view = cs.views.entry(p).or_insert_with(|| MemberView::new(cid));
            match vote_block(pseudonym, view, &cs.cluster, block, &self.ctx) {
                Ok(endorsement) => self.queue.schedule_in(
                    Event::Endorse {
                        cluster: cid,
                        block: hash,
                        endorsement,
                    },
                    1,
                ),
                Err(reason) => self.log.record(t, v.node, "vote_rejected", json!({ "block": hash.to_hex(), "reason": reason.to_string() })),
            }
        }
    }

    fn try_commit(&mut self, cid: ClusterId, hash: Hash32, t: Tick) {
        let cs = self.clusters.get_mut(&cid).expect("live cluster");
        let Some(f) = cs.inflight.get(&hash) else { return };
        let counted = f
            .endorsements
            .keys()
            .filter(|p| cs.cluster.members.contains(p))
            .count();
        if counted < cs.cluster.quorum() {
            return;
        }
        let f = cs.inflight.remove(&hash).expect("present");
        let mut block = f.block;
        block.endorsements = f.endorsements.into_values().collect();
        debug_assert!(block.is_committed());
        if !f.forged {
            cs.head_tip = ChainTip::after(&block);
            cs.inflight.retain(|_, x| x.block.height != block.height);
            self.queue.schedule_in(
                Event::Commit {
                    cluster: cid,
                    block: Rc::new(block.clone()),
                },
                1,
            );
        }
        let mut per_lt: BTreeMap<usize, usize> = BTreeMap::new();
        for e in &block.endorsements {
            *per_lt.entry(self.owner[&e.signer]).or_default() += 1;
        }
        let most = per_lt.values().copied().max().unwrap_or(0);
        self.oracles.max_endorsements_per_lt = self.oracles.max_endorsements_per_lt.max(most);
        for r in &block.reports {
            let h = r.hash();
            self.counters.committed.insert(h);
            if self.bad_reports.contains_key(&h) {
                self.oracles.bad_in_committed_cluster_block += 1;
            }
            self.vehicles[f.proposer].pending.remove(&h);
        }
        self.log.record(t, self.vehicles[f.proposer].node, "cluster_commit", json!({
            "cluster": cid.0.short(),
            "height": block.height,
            "block": hash.to_hex(),
            "reports": block.reports.len(),
            "endorsements": block.endorsements.len(),
            "sybil": f.sybil,
        }));
        self.vehicles[f.proposer].forward.push(block);
    }

    fn flush_forward(&mut self, _t: Tick) {
        for v in self.vehicles.iter_mut().filter(|v| !v.silent && !v.forward.is_empty()) {
            if let Some((rsu, blocks)) = v.forward.flush(&v.state.position, &self.rsu_sites, &self.radio) {
                for block in blocks {
                    self.queue.schedule_in(
                        Event::RsuBlock {
                            rsu: rsu_index(rsu),
                            block,
                            relayed: false,
                        },
                        1,
                    );
                }
            }
        }
    }

    // ---- RSUs ----

    fn deliver_rsu_block(&mut self, i: usize, block: ClusterBlock, relayed: bool, t: Tick) {
        if self.rsus[i].byzantine == Some(Strategy::ByzRsuSilent) {
            return;
        }
        let hash = block.hash();
        let regions = &self.regions;
        let is_revoked = |p: &PseudonymId| regions.iter().any(|s| s.is_pseudonym_revoked(p));
        let id = self.rsus[i].node.id();
        match self.rsus[i].node.receive_block(block, t, &self.ctx, &is_revoked) {
            Ok(accepted) => {
                let peers: Vec<NodeId> = self.rsus[i].node.group().members.iter().copied().filter(|m| *m != id).collect();
                for b in accepted {
                    let bad = b.reports.iter().filter(|r| self.bad_reports.contains_key(&r.hash())).count();
                    self.oracles.bad_accepted_by_rsu += bad as u64;
                    self.log.record(t, id, "rsu_accept", json!({ "block": b.hash().to_hex(), "reports": b.reports.len() }));
                    if !relayed {
                        for peer in &peers {
                            self.queue.schedule_in(
                                Event::RsuBlock {
                                    rsu: rsu_index(*peer),
                                    block: b.clone(),
                                    relayed: true,
                                },
                                1,
                            );
                        }
                    }
                }
            }
            Err(fault) => {
                self.oracles.rsu_rejections += 1;
                self.log.record(t, id, "rsu_reject", json!({ "block": hash.to_hex(), "fault": fault.to_string() }));
            }
        }
    }

    fn bft_rounds(&mut self, t: Tick) {
        let height = t / self.cfg.bft_round_ticks;
        for i in 0..self.rsus.len() {
            let rsu = &mut self.rsus[i];
            if rsu.byzantine == Some(Strategy::ByzRsuSilent) {
                continue;
            }
            let (previous, msgs) = rsu.node.begin_round(height, t);
            if rsu.byzantine.is_none() {
                if let Some(outcome) = previous {
                    let entry = self
                        .counters
                        .rounds
                        .entry((rsu.node.group().id, height - 1))
                        .or_default();
                    entry.0 |= outcome != RoundOutcome::Idle;
                    entry.1 |= matches!(outcome, RoundOutcome::Committed(_));
                }
            }
            self.send_bft(i, msgs);
        }
    }

    fn send_bft(&mut self, i: usize, msgs: Vec<BftMsg>) {
        let rsu = &self.rsus[i];
        let id = rsu.node.id();
        let peers: Vec<NodeId> = rsu.node.group().members.iter().copied().filter(|m| *m != id).collect();
        for msg in msgs {
            match rsu.byzantine {
                Some(Strategy::ByzRsuEquivocate) => {
                    let split = peers.len().div_ceil(2);
                    for (k, peer) in peers.iter().enumerate() {
                        let m = match &msg {
                            BftMsg::Propose { group, height, body } if k >= split => BftMsg::Propose {
                                group: *group,
                                height: *height,
                                body: conflicting_body(body),
                            },
                            BftMsg::Propose { .. } => msg.clone(),
                            BftMsg::Echo { group, height, hash } => BftMsg::Echo {
                                group: *group,
                                height: *height,
                                hash: conflicting_hash(hash),
                            },
                            BftMsg::Confirm { group, height, hash, .. } => {
                                let garbage = conflicting_hash(hash);
                                BftMsg::Confirm {
                                    group: *group,
                                    height: *height,
                                    hash: garbage,
                                    signature: rsu.key.sign(&confirm_message(&garbage)),
                                }
                            }
                            BftMsg::Decided { .. } => continue,
                        };
                        self.queue.schedule_in(Event::Bft { to: rsu_index(*peer), from: id, msg: m }, 1);
                    }
                }
                Some(_) => {}
                None => {
                    for peer in &peers {
                        self.queue.schedule_in(
                            Event::Bft {
                                to: rsu_index(*peer),
                                from: id,
                                msg: msg.clone(),
                            },
                            1,
                        );
                    }
                }
            }
        }
    }

    fn deliver_bft(&mut self, to: usize, from: NodeId, msg: BftMsg, t: Tick) {
        if self.rsus[to].byzantine == Some(Strategy::ByzRsuSilent) {
            return;
        }
        let (out, decided) = self.rsus[to].node.on_bft(from, msg);
        self.send_bft(to, out);
        let Some(statement) = decided else { return };
        if self.rsus[to].byzantine.is_some() {
            return;
        }
        let h = statement.hash();
        let id = self.rsus[to].node.id();
        if self.counters.statements.insert(h) {
            for r in &statement.body.evidence_bundle {
                let rh = r.hash();
                self.counters.aggregated.insert(rh);
                if self.bad_reports.contains_key(&rh) {
                    self.oracles.bad_in_statement += 1;
                }
            }
        }
        self.log.record(t, id, "bft_decide", json!({
            "statement": h.to_hex(),
            "height": statement.body.height,
            "candidates": statement.body.revocation_candidates.len(),
        }));
        for ma in 0..self.mas.len() {
            self.queue.schedule_in(
                Event::Statement {
                    ma,
                    statement: statement.clone(),
                },
                self.cfg.ma_link_delay,
            );
        }
    }

    // ---- authorities ----

    fn mine(&mut self, t: Tick) {
        let miner = ((t / self.cfg.mine_interval) % self.mas.len() as u64) as usize;
        let ma = &mut self.mas[miner];
        let mut candidates = Vec::new();
        let mut drop = Vec::new();
        for (h, s) in &ma.mempool {
            match ma.ledger.state().build_revocation_tx(s.clone()) {
                Ok(tx) => candidates.push(Tx::Revocation(tx)),
                Err(TxRejection::NotIntroduced { .. } | TxRejection::DanglingReference { .. } | TxRejection::UnknownGroup(_)) => {}
                Err(e) => {
                    if e != TxRejection::NothingToDecide {
                        self.log.record(t, ma.node, "statement_dropped", json!({ "statement": h.to_hex(), "reason": e.to_string() }));
                    }
                    drop.push(*h);
                }
            }
        }
        for h in drop {
            ma.mempool.remove(&h);
        }
        if candidates.is_empty() && !self.cfg.heartbeat_mining {
            return;
        }
        let block = ma.ledger.mine(candidates);
        if block.txs.is_empty() && !self.cfg.heartbeat_mining {
            return;
        }
        self.adopt(miner, block, t);
        self.broadcast_block(miner);
    }

    fn broadcast_block(&mut self, from: usize) {
        let block = Rc::new(self.mas[from].ledger.blocks().last().expect("just adopted").clone());
        for ma in (0..self.mas.len()).filter(|m| *m != from) {
            self.queue.schedule_in(
                Event::MaBlock {
                    ma,
                    block: block.clone(),
                },
                self.cfg.ma_link_delay,
            );
        }
    }

    fn adopt(&mut self, i: usize, block: GlobalBlock, t: Tick) {
        let hash = block.hash();
        let node = self.mas[i].node;
        if let Err(e) = self.mas[i].ledger.append(block.clone()) {
            self.log.record(t, node, "block_rejected", json!({ "block": hash.to_hex(), "reason": e.to_string() }));
            return;
        }
        for tx in &block.txs {
            if let Tx::Revocation(r) = tx {
                self.mas[i].mempool.remove(&r.statement.hash());
            }
        }
        if !self.applied.insert(hash) {
            return;
        }
        for tx in &block.txs {
            if let Tx::Revocation(r) = tx {
                for rep in &r.statement.body.evidence_bundle {
                    if self.bad_reports.contains_key(&rep.hash()) {
                        self.oracles.bad_in_ledger += 1;
                    }
                }
            }
        }
        self.log.record(t, node, "block", json!({ "height": block.height, "block": hash.to_hex(), "txs": block.txs.len() }));
        let effects = apply_revocations(&block, self.mas[i].ledger.state(), &mut self.regions, t);
        for e in effects {
            match e {
                RevocationEffect::Revoked { p_id, lt_id, tx } => self.log.record(t, node, "revocation", json!({ "p_id": p_id.to_string(), "lt_id": lt_id.to_string(), "tx": tx.to_hex() })),
                RevocationEffect::AlreadyRevoked { .. } => {}
                RevocationEffect::Failed { p_id, tx, error } => self.log.record(t, node, "revocation_failed", json!({ "p_id": p_id.to_string(), "tx": tx.to_hex(), "error": error.to_string() })),
            }
        }
    }

    // ---- results ----

    pub fn finish(self) -> RunOutcome {
        let World {
            cfg,
            regions,
            vehicles,
            mas,
            genesis,
            counters,
            mut oracles,
            bad_reports,
            log,
            groups,
            ..
        } = self;
        let liars: BTreeSet<LtId> = vehicles
            .iter()
            .filter(|v| v.first_false_beacon.is_some())
            .map(|v| v.lt)
            .collect();
        let revoked: BTreeSet<LtId> = regions.iter().flat_map(|s| s.state().revoked_lt.iter().copied()).collect();
        let everywhere = |lt: LtId| -> Option<Tick> {
            regions.iter().map(|s| s.revoked_at(lt)).collect::<Option<Vec<_>>>()?.into_iter().max()
        };
        let attackers: Vec<&Vehicle> = vehicles.iter().filter(|v| v.attack.is_some()).collect();
        let latencies = attackers
            .iter()
            .filter(|v| v.attack.as_ref().is_some_and(|a| a.strategy == Strategy::FalsePosition))
            .map(|v| Some(everywhere(v.lt)? - v.first_false_beacon?))
            .collect();
        let blocks = mas[0].ledger.blocks().to_vec();
        let chain = mas[0].ledger.to_bytes();
        oracles.ledgers_agree = mas.iter().all(|m| m.ledger.blocks() == blocks.as_slice());
        oracles.bad_reports = bad_reports.len() as u64;
        oracles.revoked = revoked.iter().map(|l| l.to_string()).collect();
        let (committed, failed) = counters
            .rounds
            .values()
            .fold((0, 0), |(c, f), (work, done)| (c + *done as u64, f + (*work && !*done) as u64));
        let ledger_bytes = chain.len() as u64;
        let metrics = RunMetrics {
            seed: cfg.seed,
            ticks: cfg.ticks,
            vehicles: cfg.vehicles,
            attackers: attackers.len() as u32,
            attackers_revoked: attackers.iter().filter(|v| everywhere(v.lt).is_some()).count() as u32,
            revocation_latency_ticks: latencies,
            false_revocations: revoked.difference(&liars).count() as u32,
            trust_statements: counters.trust_statements,
            reports_generated: counters.generated.len() as u64,
            reports_committed: counters.committed.len() as u64,
            reports_aggregated: counters.aggregated.len() as u64,
            statements_decided: counters.statements.len() as u64,
            ledger_blocks: blocks.len() as u64,
            ledger_bytes,
            naive_edr_bytes: counters.naive_edr_bytes,
            dedup_ratio: ledger_bytes as f64 / counters.naive_edr_bytes.max(1) as f64,
            bft_rounds_committed: committed,
            bft_rounds_failed: failed,
            degenerate_groups: groups.iter().filter(|g| g.is_degenerate()).count() as u32,
        };
        let mut audit: Vec<AuditRecord> = regions.iter().flat_map(|s| s.audit_log().iter().cloned()).collect();
        audit.sort_by_key(|r| (r.tick, r.region, r.lt_id));
        RunOutcome {
            config: cfg,
            metrics,
            oracles,
            chain,
            blocks,
            genesis,
            audit,
            events: log.bytes().to_vec(),
            bad_reports: bad_reports.into_values().collect(),
            vehicle_lts: vehicles.iter().map(|v| v.lt).collect(),
        }
    }
}
