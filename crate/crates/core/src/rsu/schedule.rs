//! Exhaustive exploration of adversarial schedules for one BFT height.
//!
//! Byzantine members may, at any point, send any proposal (when leading),
//! echo or confirm for any of three values to any honest member: the honest
//! proposal `A`, a second valid proposal `A2`, and an invalid value `G`.
//! Honest messages may be delivered in any order, or never.
//!
//! Two explorers share one safety check. [`explore_messages`] drives the real
//! [`BftInstance`] message by message and is exact but grows quickly.
//! [`explore`] works on member decisions only: since delivery may be delayed
//! arbitrarily and every honest or Byzantine message stays deliverable once
//! sent, a member can accept any available leader proposal, confirm any
//! value with a quorum of available echoes and decide any value with a
//! quorum of available confirms, each at most once. Tests check that both
//! reach the same decision states wherever the message-level search is
//! tractable.

use std::collections::{BTreeSet, HashSet};

use super::bft::{BftInstance, BftOutput};
use super::group::fault_bound;
use crate::codec::Hash32;
use crate::crypto::Signature;
use crate::sim::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    A,
    A2,
    G,
}

impl Value {
    const ALL: [Value; 3] = [Value::A, Value::A2, Value::G];

    pub fn hash(self) -> Hash32 {
        Hash32([self as u8 + 1; 32])
    }

    pub fn is_valid(self) -> bool {
        self != Value::G
    }

    fn from_hash(h: &Hash32) -> Value {
        match h.0[0] {
            1 => Value::A,
            2 => Value::A2,
            _ => Value::G,
        }
    }
}

/// What one honest member has committed to so far.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemberSummary {
    pub accepted: Option<Value>,
    pub confirmed: Option<Value>,
    pub decided: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Silent,
    Equivocate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Msg {
    Propose(Value),
    Echo(Value),
    Confirm(Value),
}

#[derive(Debug, Clone)]
pub struct ScheduleConfig {
    pub n: usize,
    pub byzantine: Vec<usize>,
    pub leader: usize,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExplorationReport {
    pub states: usize,
    pub transitions: usize,
    /// States where two different values could carry a quorum certificate.
    pub double_certified: usize,
    /// States where two honest members decided different values.
    pub honest_disagreements: usize,
    /// States where an honest member decided the invalid value.
    pub invalid_decisions: usize,
    /// Whether some schedule lets every honest member decide.
    pub all_honest_decide_reachable: bool,
    /// Whether some schedule lets any honest member decide.
    pub any_decision_reachable: bool,
    /// Every reachable combination of honest member summaries.
    pub summaries: BTreeSet<Vec<MemberSummary>>,
}

#[derive(Clone)]
struct State {
    nodes: Vec<BftInstance>,
    pending: BTreeSet<(u8, u8, Msg)>,
}

fn node(i: usize) -> NodeId {
    NodeId::rsu(i as u32)
}

/// Honest senders by identity, Byzantine senders by count only: their
/// messages are always available, so which of them was heard is irrelevant.
fn sender_key(set: impl Iterator<Item = NodeId>, byzantine: &[usize]) -> u8 {
    set.fold(0u8, |k, n| {
        if byzantine.contains(&(n.index as usize)) {
            k + 0x10
        } else {
            k | 1 << n.index
        }
    })
}

impl State {
    /// The pending set is not part of the key: a message is pending exactly
    /// when its honest sender has emitted it and the receiver has not yet
    /// recorded it, which the member states already determine, or it can no
    /// longer affect the receiver.
    fn key(&self, byzantine: &[usize]) -> Vec<u8> {
        let mut k = Vec::with_capacity(self.nodes.len() * 9);
        let opt = |v: Option<Hash32>| v.map_or(0, |h| Value::from_hash(&h) as u8 + 1);
        for inst in &self.nodes {
            let (accepted, echoes, confirms, confirmed, decided) = inst.fingerprint();
            k.push(opt(accepted));
            k.push(opt(confirmed));
            k.push(opt(decided));
            // Once a member has confirmed (decided), further echoes
            // (confirms) have no effect on it.
            let echoes = if confirmed.is_some() { Vec::new() } else { echoes };
            let confirms = if decided.is_some() { Vec::new() } else { confirms };
            for table in [echoes, confirms] {
                let mut masks = [0u8; 3];
                for (h, who) in table {
                    masks[Value::from_hash(&h) as usize] = sender_key(who.into_iter(), byzantine);
                }
                k.extend_from_slice(&masks);
            }
        }
        k
    }

    fn summaries(&self) -> Vec<MemberSummary> {
        let v = |h: Option<Hash32>| h.map(|h| Value::from_hash(&h));
        self.nodes
            .iter()
            .map(|n| MemberSummary {
                accepted: v(n.accepted()),
                confirmed: v(n.confirmed()),
                decided: v(n.decided()),
            })
            .collect()
    }
}

struct Explorer<'a> {
    cfg: &'a ScheduleConfig,
    honest: Vec<usize>,
}

impl Explorer<'_> {
    fn slot(&self, member: usize) -> Option<usize> {
        self.honest.iter().position(|&h| h == member)
    }

    fn emit(&self, state: &mut State, from: usize, outputs: Vec<BftOutput>) {
        for o in outputs {
            let msg = match o {
                BftOutput::Echo(h) => Msg::Echo(Value::from_hash(&h)),
                BftOutput::Confirm(h, _) => Msg::Confirm(Value::from_hash(&h)),
                BftOutput::Decide(..) => continue,
            };
            for &to in &self.honest {
                if to != from {
                    state.pending.insert((from as u8, to as u8, msg));
                }
            }
        }
    }

    fn deliver(&self, state: &mut State, from: usize, to: usize, msg: Msg) {
        let slot = self.slot(to).expect("honest target");
        let inst = &mut state.nodes[slot];
        let outputs = match msg {
            Msg::Propose(v) => inst.on_proposal(node(from), v.hash(), v.is_valid()),
            Msg::Echo(v) => inst.on_echo(node(from), v.hash()),
            Msg::Confirm(v) => inst.on_confirm(node(from), v.hash(), Signature::garbage(0)),
        };
        self.emit(state, to, outputs);
    }

    fn initial(&self) -> State {
        let members: Vec<NodeId> = (0..self.cfg.n).map(node).collect();
        let leader = node(self.cfg.leader);
        let mut state = State {
            nodes: self
                .honest
                .iter()
                .map(|&i| BftInstance::new(node(i), members.clone(), leader, None))
                .collect(),
            pending: BTreeSet::new(),
        };
        if let Some(slot) = self.slot(self.cfg.leader) {
            let outputs = state.nodes[slot].on_proposal(leader, Value::A.hash(), true);
            for &to in &self.honest {
                if to != self.cfg.leader {
                    state
                        .pending
                        .insert((self.cfg.leader as u8, to as u8, Msg::Propose(Value::A)));
                }
            }
            self.emit(&mut state, self.cfg.leader, outputs);
        }
        state
    }

    fn byzantine_moves(&self) -> Vec<(usize, usize, Msg)> {
        if self.cfg.strategy == Strategy::Silent {
            return Vec::new();
        }
        let mut moves = Vec::new();
        for &b in &self.cfg.byzantine {
            for &to in &self.honest {
                for v in Value::ALL {
                    if b == self.cfg.leader {
                        moves.push((b, to, Msg::Propose(v)));
                    }
                    moves.push((b, to, Msg::Echo(v)));
                    moves.push((b, to, Msg::Confirm(v)));
                }
            }
        }
        moves
    }

}

fn byzantine_signers(cfg: &ScheduleConfig) -> usize {
    match cfg.strategy {
        Strategy::Silent => 0,
        Strategy::Equivocate => cfg.byzantine.len(),
    }
}

fn check(cfg: &ScheduleConfig, members: &[MemberSummary], report: &mut ExplorationReport) {
    let quorum = 2 * fault_bound(cfg.n) + 1;
    let byz = byzantine_signers(cfg);
    let certified = Value::ALL
        .iter()
        .filter(|&&v| members.iter().filter(|m| m.confirmed == Some(v)).count() + byz >= quorum)
        .count();
    if certified > 1 {
        report.double_certified += 1;
    }
    let decided: Vec<Value> = members.iter().filter_map(|m| m.decided).collect();
    if decided.iter().any(|v| !v.is_valid()) {
        report.invalid_decisions += 1;
    }
    if decided.windows(2).any(|w| w[0] != w[1]) {
        report.honest_disagreements += 1;
    }
    if !decided.is_empty() {
        report.any_decision_reachable = true;
    }
    if decided.len() == members.len() {
        report.all_honest_decide_reachable = true;
    }
    report.summaries.insert(members.to_vec());
}

/// Decision-level search over every schedule of one height under `cfg`.
pub fn explore(cfg: &ScheduleConfig) -> ExplorationReport {
    let honest: Vec<usize> = (0..cfg.n).filter(|i| !cfg.byzantine.contains(i)).collect();
    let quorum = 2 * fault_bound(cfg.n) + 1;
    let byz = byzantine_signers(cfg);
    let leader_honest = honest.contains(&cfg.leader);
    let proposals: Vec<Value> = if leader_honest {
        vec![Value::A]
    } else {
        match cfg.strategy {
            Strategy::Silent => Vec::new(),
            Strategy::Equivocate => Value::ALL.to_vec(),
        }
    };
    let mut start = vec![MemberSummary::default(); honest.len()];
    if let Some(slot) = honest.iter().position(|&h| h == cfg.leader) {
        start[slot].accepted = Some(Value::A);
    }
    let mut report = ExplorationReport::default();
    let mut seen: HashSet<Vec<MemberSummary>> = HashSet::new();
    seen.insert(start.clone());
    let mut stack = vec![start];
    while let Some(state) = stack.pop() {
        report.states += 1;
        check(cfg, &state, &mut report);
        let echoes = |v: Value| state.iter().filter(|m| m.accepted == Some(v)).count() + byz;
        let confirms = |v: Value| state.iter().filter(|m| m.confirmed == Some(v)).count() + byz;
        for i in 0..state.len() {
            let m = state[i];
            let mut moves = Vec::new();
            if m.accepted.is_none() {
                for &v in proposals.iter().filter(|v| v.is_valid()) {
                    moves.push(MemberSummary { accepted: Some(v), ..m });
                }
            }
            if m.confirmed.is_none() {
                for v in Value::ALL.into_iter().filter(|&v| echoes(v) >= quorum) {
                    moves.push(MemberSummary { confirmed: Some(v), ..m });
                }
            }
            if m.decided.is_none() {
                for v in Value::ALL.into_iter().filter(|&v| confirms(v) >= quorum) {
                    moves.push(MemberSummary { decided: Some(v), ..m });
                }
            }
            for next_member in moves {
                report.transitions += 1;
                let mut next = state.clone();
                next[i] = next_member;
                if seen.insert(next.clone()) {
                    stack.push(next);
                }
            }
        }
    }
    report
}

/// Message-level search driving the real state machine. Returns `None` when
/// more than `max_states` states would be visited.
pub fn explore_messages(cfg: &ScheduleConfig, max_states: usize) -> Option<ExplorationReport> {
    let honest: Vec<usize> = (0..cfg.n).filter(|i| !cfg.byzantine.contains(i)).collect();
    let ex = Explorer {
        cfg,
        honest,
    };
    let byz_moves = ex.byzantine_moves();
    let mut report = ExplorationReport::default();
    let start = ex.initial();
    let mut seen: HashSet<Vec<u8>> = HashSet::new();
    seen.insert(start.key(&cfg.byzantine));
    let mut stack = vec![start];
    while let Some(state) = stack.pop() {
        report.states += 1;
        if report.states > max_states {
            return None;
        }
        check(cfg, &state.summaries(), &mut report);
        let honest_moves = state.pending.iter().map(|&(f, t, m)| (f as usize, t as usize, m, true));
        let moves: Vec<(usize, usize, Msg, bool)> = honest_moves
            .chain(byz_moves.iter().map(|&(f, t, m)| (f, t, m, false)))
            .collect();
        for (from, to, msg, is_pending) in moves {
            let mut next = state.clone();
            if is_pending {
                next.pending.remove(&(from as u8, to as u8, msg));
            }
            ex.deliver(&mut next, from, to, msg);
            report.transitions += 1;
            if seen.insert(next.key(&cfg.byzantine)) {
                stack.push(next);
            }
        }
    }
    Some(report)
}

/// Every combination of Byzantine set (of the given size), leader position
/// and strategy for a group of `n`.
pub fn configurations(n: usize, byzantine: usize) -> Vec<ScheduleConfig> {
    let mut sets: Vec<Vec<usize>> = vec![Vec::new()];
    for i in 0..n {
        let mut grown = Vec::new();
        for s in &sets {
            let mut with = s.clone();
            with.push(i);
            grown.push(with);
        }
        sets.extend(grown);
    }
    sets.retain(|s| s.len() == byzantine);
    sets.sort();
    let mut out = Vec::new();
    for set in sets {
        for leader in 0..n {
            for strategy in [Strategy::Silent, Strategy::Equivocate] {
                out.push(ScheduleConfig {
                    n,
                    byzantine: set.clone(),
                    leader,
                    strategy,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(byzantine: &[usize], leader: usize, strategy: Strategy) -> ScheduleConfig {
        ScheduleConfig {
            n: 4,
            byzantine: byzantine.to_vec(),
            leader,
            strategy,
        }
    }

    #[test]
    fn configurations_enumerate_sets_leaders_strategies() {
        assert_eq!(configurations(4, 1).len(), 4 * 4 * 2);
        assert_eq!(configurations(4, 2).len(), 6 * 4 * 2);
    }

    #[test]
    fn silent_member_still_allows_commit() {
        let r = explore(&cfg(&[3], 0, Strategy::Silent));
        assert_eq!(r.double_certified, 0);
        assert_eq!(r.honest_disagreements, 0);
        assert!(r.all_honest_decide_reachable);
    }

    #[test]
    fn silent_byzantine_leader_blocks_progress() {
        let r = explore(&cfg(&[0], 0, Strategy::Silent));
        assert_eq!(r.states, 1);
        assert!(!r.any_decision_reachable);
    }

    #[test]
    fn two_silent_members_block_progress() {
        let r = explore(&cfg(&[2, 3], 0, Strategy::Silent));
        assert!(!r.any_decision_reachable);
    }

    #[test]
    fn equivocating_pair_can_split_but_never_commit_garbage() {
        let r = explore(&cfg(&[0, 1], 0, Strategy::Equivocate));
        assert_eq!(r.invalid_decisions, 0);
        assert!(r.honest_disagreements > 0);
    }

    fn assert_same_decision_states(c: ScheduleConfig) {
        let exact = explore_messages(&c, 100_000).expect("tractable");
        let abstracted = explore(&c);
        assert_eq!(exact.summaries, abstracted.summaries, "{c:?}");
        assert_eq!(exact.double_certified > 0, abstracted.double_certified > 0);
        assert_eq!(exact.invalid_decisions > 0, abstracted.invalid_decisions > 0);
        assert_eq!(exact.honest_disagreements > 0, abstracted.honest_disagreements > 0);
    }

    #[test]
    fn decision_search_matches_message_search() {
        assert_same_decision_states(cfg(&[3], 0, Strategy::Silent));
        assert_same_decision_states(cfg(&[0], 0, Strategy::Silent));
        assert_same_decision_states(cfg(&[2, 3], 1, Strategy::Silent));
        assert_same_decision_states(cfg(&[1, 2, 3], 0, Strategy::Equivocate));
        assert_same_decision_states(cfg(&[0, 1, 2], 0, Strategy::Equivocate));
        assert_same_decision_states(cfg(&[1, 2, 3], 2, Strategy::Equivocate));
    }
}
