//! Attacker behaviors: false beacons, bad-mouthing, two-pseudonym Sybil
//! voting, and Byzantine RSUs. Every message they produce is well formed
//! and correctly signed; the attacks are semantic.

use serde::{Deserialize, Serialize};

use crate::cluster::{endorse, ClusterBlock, ClusterId, Endorsement};
use crate::codec::Hash32;
use crate::rsu::StatementBody;
use crate::scms::Pseudonym;
use crate::sim::{Position, Tick};
use crate::vehicle::{
    build_report, Beacon, CheckKind, KinematicState, MisbehaviorReport, TrustStatement, Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FalsePosition,
    BadMouth,
    SybilVote,
    ByzRsuSilent,
    ByzRsuEquivocate,
}

impl Strategy {
    pub fn targets_rsu(self) -> bool {
        matches!(self, Strategy::ByzRsuSilent | Strategy::ByzRsuEquivocate)
    }
}

/// One attacker as declared in the scenario. Attackers and victims are
/// named by vehicle (or RSU) index; their pseudonyms are resolved at run
/// time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackProfile {
    pub strategy: Strategy,
    /// Vehicle index, or RSU index for the Byzantine RSU strategies.
    pub node: u32,
    #[serde(default)]
    pub targets: Vec<u32>,
    /// Position displacement for `false_position`, meters.
    #[serde(default = "default_offset")]
    pub offset_m: f64,
    #[serde(default)]
    pub start_tick: Tick,
    #[serde(default)]
    pub end_tick: Option<Tick>,
}

fn default_offset() -> f64 {
    500.0
}

impl AttackProfile {
    pub fn false_position(node: u32, offset_m: f64, start_tick: Tick) -> Self {
        AttackProfile {
            strategy: Strategy::FalsePosition,
            node,
            targets: Vec::new(),
            offset_m,
            start_tick,
            end_tick: None,
        }
    }

    pub fn is_active(&self, t: Tick) -> bool {
        t >= self.start_tick && self.end_tick.is_none_or(|end| t <= end)
    }
}

/// The claimed state: true state displaced along +x.
pub fn displaced(true_state: &KinematicState, offset_m: f64) -> KinematicState {
    KinematicState {
        position: Position {
            x: true_state.position.x + offset_m,
            y: true_state.position.y,
        },
        ..*true_state
    }
}

pub fn false_position_beacon(
    pseudonym: &Pseudonym,
    tick: Tick,
    true_state: &KinematicState,
    offset_m: f64,
) -> Beacon {
    Beacon::sign(pseudonym, tick, displaced(true_state, offset_m), Vec::new())
}

/// A report accusing the sender of two genuine consecutive beacons of a
/// speed violation, with a fabricated computed value. Correctly signed by
/// the attacker; re-execution exposes it.
pub fn bad_mouth_report(
    attacker: &Pseudonym,
    earlier: &Beacon,
    later: &Beacon,
    cluster_id: ClusterId,
    tick: Tick,
    v_max: f64,
) -> MisbehaviorReport {
    let statement = TrustStatement {
        suspect: later.p_id(),
        check: CheckKind::SpeedBound,
        inputs: vec![earlier.hash(), later.hash()],
        verdict: Verdict::Implausible,
        computed_value: 10.0 * v_max,
        threshold: v_max,
    };
    build_report(
        vec![statement],
        attacker,
        cluster_id,
        vec![earlier.clone(), later.clone()],
        tick,
    )
    .expect("evidence is the cited pair")
}

/// Endorsements from every pseudonym the attacker can currently sign with:
/// two inside the overlap window, one outside it.
pub fn sybil_endorsements(pseudonyms: &[&Pseudonym], candidate: &ClusterBlock, t: Tick) -> Vec<Endorsement> {
    pseudonyms
        .iter()
        .filter(|p| p.cert.is_valid_at(t))
        .map(|p| endorse(p, candidate))
        .collect()
}

/// The hash an equivocating RSU echoes and confirms instead of the honest
/// one.
pub fn conflicting_hash(honest: &Hash32) -> Hash32 {
    Hash32::of("equivocation", honest)
}

/// A proposal body that honest members reject: the honest body with its
/// evidence bundle truncated, so it no longer matches the included blocks.
pub fn conflicting_body(honest: &StatementBody) -> StatementBody {
    let mut body = honest.clone();
    if body.evidence_bundle.pop().is_none() {
        body.included_blocks.push(Hash32::of("equivocation", &body.height));
    }
    body
}
