//! Model of one region's credential management authorities: enrollment
//! (ECA), issuance gating (RA), pseudonym certification (PCA), linkage (LA)
//! and the revocation state the misbehavior authority drives.
//!
//! The authorities share one logical service with internal role
//! separation. Linkage tokens are sealed lookups: the LA table is only
//! consulted after the authorization check passes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{self, Hash32};
use crate::crypto::{PublicKey, Signature, SigningKey};
use crate::sim::{NodeId, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionId(pub u8);

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Long-term (enrollment) identity, namespaced by the enrolling region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LtId {
    pub region: RegionId,
    pub serial: u32,
}

impl fmt::Display for LtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-lt{}", self.region, self.serial)
    }
}

/// Pseudonym identifier. The value is random so it carries no linkage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PseudonymId {
    pub region: RegionId,
    pub value: u64,
}

impl fmt::Display for PseudonymId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:016x}", self.region, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkageToken(pub Hash32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LongTermCertificate {
    pub holder: NodeId,
    pub lt_id: LtId,
    pub public_key: PublicKey,
    pub revoked: bool,
}

/// Public half of a pseudonym, certified by the issuing region's PCA and
/// attached to everything signed under it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudonymCert {
    pub p_id: PseudonymId,
    pub public_key: PublicKey,
    pub valid_from: Tick,
    pub valid_to: Tick,
    pub linkage: LinkageToken,
    pub pca_signature: Signature,
}

#[derive(Serialize)]
struct CertBody<'a> {
    p_id: &'a PseudonymId,
    public_key: &'a PublicKey,
    valid_from: Tick,
    valid_to: Tick,
    linkage: &'a LinkageToken,
}

impl PseudonymCert {
    fn body_bytes(&self) -> Vec<u8> {
        codec::encode(&CertBody {
            p_id: &self.p_id,
            public_key: &self.public_key,
            valid_from: self.valid_from,
            valid_to: self.valid_to,
            linkage: &self.linkage,
        })
    }

    pub fn is_valid_at(&self, t: Tick) -> bool {
        self.valid_from <= t && t <= self.valid_to
    }

    pub fn verify(&self, pca_key: &PublicKey) -> bool {
        self.valid_from < self.valid_to && pca_key.verify(&self.body_bytes(), &self.pca_signature)
    }
}

/// A pseudonym as held by its vehicle: certificate plus signing key.
#[derive(Debug, Clone)]
pub struct Pseudonym {
    pub cert: PseudonymCert,
    pub key: SigningKey,
}

impl Pseudonym {
    pub fn id(&self) -> PseudonymId {
        self.cert.p_id
    }
}

/// Issuance record of one vehicle's pseudonyms, in issuance order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudonymPool {
    pub owner: LtId,
    pub pseudonyms: Vec<PseudonymCert>,
}

impl PseudonymPool {
    pub fn valid_at(&self, t: Tick) -> impl Iterator<Item = &PseudonymCert> {
        self.pseudonyms.iter().filter(move |p| p.is_valid_at(t))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RevocationState {
    pub revoked_lt: BTreeSet<LtId>,
    pub revoked_pseudonyms: BTreeSet<PseudonymId>,
    pub ra_blacklist: BTreeSet<LtId>,
}

/// Window layout for a pseudonym batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuancePolicy {
    pub window_ticks: Tick,
    pub overlap_ticks: Tick,
}

impl Default for IssuancePolicy {
    fn default() -> Self {
        IssuancePolicy {
            window_ticks: 600,
            overlap_ticks: 100,
        }
    }
}

impl IssuancePolicy {
    /// Overlap must be positive and short enough that no tick is covered by
    /// three consecutive windows.
    pub fn validate(&self) -> Result<(), ScmsError> {
        if self.overlap_ticks == 0
            || self.overlap_ticks >= self.window_ticks
            || 2 * self.overlap_ticks >= self.window_ticks
        {
            return Err(ScmsError::InvalidWindow {
                window: self.window_ticks,
                overlap: self.overlap_ticks,
            });
        }
        Ok(())
    }

    pub fn step(&self) -> Tick {
        self.window_ticks - self.overlap_ticks
    }
}

/// Lookup of globally committed revocation decisions, used as the
/// authorization for linkage resolution.
pub trait DecisionRegistry {
    /// Whether `tx` is a committed revocation decision naming `p_id`.
    fn authorizes(&self, tx: &Hash32, p_id: &PseudonymId) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditEvent {
    Linkage,
    Revocation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub tick: Tick,
    pub p_id: Option<PseudonymId>,
    pub lt_id: LtId,
    pub cause_tx: Hash32,
    pub region: RegionId,
    pub event: AuditEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScmsError {
    #[error("{0} is already enrolled")]
    AlreadyEnrolled(NodeId),
    #[error("unknown long-term identity {0}")]
    UnknownLongTerm(LtId),
    #[error("unknown pseudonym {0}")]
    UnknownPseudonym(PseudonymId),
    #[error("{0} is blacklisted; no pseudonyms issued")]
    Blacklisted(LtId),
    #[error("invalid window layout: window {window}, overlap {overlap}")]
    InvalidWindow { window: Tick, overlap: Tick },
    #[error("linkage of {p_id} not authorized by {tx}")]
    Unauthorized { p_id: PseudonymId, tx: Hash32 },
}

pub struct Enrollment {
    pub certificate: LongTermCertificate,
    pub key: SigningKey,
}

/// One region's credential management system.
pub struct Scms {
    region: RegionId,
    pca: SigningKey,
    la_secret: [u8; 32],
    rng: ChaCha8Rng,
    enrolled: BTreeMap<LtId, LongTermCertificate>,
    holders: BTreeMap<NodeId, LtId>,
    pools: BTreeMap<LtId, PseudonymPool>,
    // LA side: the only place a token maps back to its owner.
    linkage_table: HashMap<LinkageToken, LtId>,
    pseudonym_tokens: HashMap<PseudonymId, LinkageToken>,
    issued: Vec<(Tick, LtId, PseudonymId)>,
    state: RevocationState,
    revoked_at: BTreeMap<LtId, Tick>,
    audit: Vec<AuditRecord>,
}

impl Scms {
    pub fn new(region: RegionId, mut rng: ChaCha8Rng) -> Self {
        let pca = SigningKey::generate(&mut rng);
        let la_secret = rng.gen();
        Scms {
            region,
            pca,
            la_secret,
            rng,
            enrolled: BTreeMap::new(),
            holders: BTreeMap::new(),
            pools: BTreeMap::new(),
            linkage_table: HashMap::new(),
            pseudonym_tokens: HashMap::new(),
            issued: Vec::new(),
            state: RevocationState::default(),
            revoked_at: BTreeMap::new(),
            audit: Vec::new(),
        }
    }

    pub fn region(&self) -> RegionId {
        self.region
    }

    pub fn pca_public(&self) -> PublicKey {
        self.pca.public()
    }

    pub fn state(&self) -> &RevocationState {
        &self.state
    }

    pub fn audit_log(&self) -> &[AuditRecord] {
        &self.audit
    }

    /// Every pseudonym issued by this region: (tick, owner, pseudonym).
    pub fn issuance_log(&self) -> &[(Tick, LtId, PseudonymId)] {
        &self.issued
    }

    pub fn pool(&self, lt: LtId) -> Option<&PseudonymPool> {
        self.pools.get(&lt)
    }

    pub fn certificate(&self, lt: LtId) -> Option<&LongTermCertificate> {
        self.enrolled.get(&lt)
    }

    pub fn lt_of_holder(&self, node: NodeId) -> Option<LtId> {
        self.holders.get(&node).copied()
    }

    pub fn is_blacklisted(&self, lt: LtId) -> bool {
        self.state.ra_blacklist.contains(&lt)
    }

    pub fn is_pseudonym_revoked(&self, p: &PseudonymId) -> bool {
        self.state.revoked_pseudonyms.contains(p)
    }

    pub fn revoked_at(&self, lt: LtId) -> Option<Tick> {
        self.revoked_at.get(&lt).copied()
    }

    /// ECA: register a long-term identity for `node`.
    pub fn enroll(&mut self, node: NodeId) -> Result<Enrollment, ScmsError> {
        if self.holders.contains_key(&node) {
            return Err(ScmsError::AlreadyEnrolled(node));
        }
        let lt_id = LtId {
            region: self.region,
            serial: self.enrolled.len() as u32,
        };
        let key = SigningKey::generate(&mut self.rng);
        let certificate = LongTermCertificate {
            holder: node,
            lt_id,
            public_key: key.public(),
            revoked: false,
        };
        self.enrolled.insert(lt_id, certificate.clone());
        self.holders.insert(node, lt_id);
        self.pools.insert(
            lt_id,
            PseudonymPool {
                owner: lt_id,
                pseudonyms: Vec::new(),
            },
        );
        Ok(Enrollment { certificate, key })
    }

    /// RA check plus PCA issuance. Extends the owner's pool so it covers
    /// `[now, now + horizon]`; each new window overlaps its predecessor by
    /// exactly `overlap_ticks`.
    pub fn issue_pseudonyms(
        &mut self,
        lt: LtId,
        now: Tick,
        horizon_ticks: Tick,
        policy: IssuancePolicy,
    ) -> Result<Vec<Pseudonym>, ScmsError> {
        policy.validate()?;
        if self.state.ra_blacklist.contains(&lt) {
            return Err(ScmsError::Blacklisted(lt));
        }
        if !self.pools.contains_key(&lt) {
            return Err(ScmsError::UnknownLongTerm(lt));
        }
        let cover_until = now + horizon_ticks;
        let mut out = Vec::new();
        loop {
            let pool = &self.pools[&lt];
            let start = match pool.pseudonyms.last() {
                Some(last) if last.valid_to >= cover_until => break,
                // A lapsed pool restarts at `now` rather than backfilling.
                Some(last) if last.valid_to < now => now,
                Some(last) => last.valid_from + policy.step(),
                None => now,
            };
            let pseudonym = self.certify(lt, start, start + policy.window_ticks);
            self.issued.push((now, lt, pseudonym.id()));
            self.pools
                .get_mut(&lt)
                .expect("checked above")
                .pseudonyms
                .push(pseudonym.cert.clone());
            out.push(pseudonym);
        }
        Ok(out)
    }

    fn certify(&mut self, lt: LtId, valid_from: Tick, valid_to: Tick) -> Pseudonym {
        let key = SigningKey::generate(&mut self.rng);
        let p_id = loop {
            let candidate = PseudonymId {
                region: self.region,
                value: self.rng.gen(),
            };
            if !self.pseudonym_tokens.contains_key(&candidate) {
                break candidate;
            }
        };
        let linkage = LinkageToken(Hash32::of(
            "linkage",
            &(&self.la_secret, lt, p_id.value),
        ));
        self.linkage_table.insert(linkage, lt);
        self.pseudonym_tokens.insert(p_id, linkage);
        let mut cert = PseudonymCert {
            p_id,
            public_key: key.public(),
            valid_from,
            valid_to,
            linkage,
            pca_signature: Signature::garbage(0),
        };
        cert.pca_signature = self.pca.sign(&cert.body_bytes());
        Pseudonym { cert, key }
    }

    /// Non-revoked pseudonyms of `lt` whose window contains `t`.
    pub fn active_pseudonyms(&self, lt: LtId, t: Tick) -> Result<Vec<&PseudonymCert>, ScmsError> {
        let pool = self.pools.get(&lt).ok_or(ScmsError::UnknownLongTerm(lt))?;
        Ok(pool
            .valid_at(t)
            .filter(|p| !self.state.revoked_pseudonyms.contains(&p.p_id))
            .collect())
    }

    /// LA + MA: reveal the owner of `p_id`, only under a committed decision.
    pub fn resolve_linkage(
        &mut self,
        p_id: PseudonymId,
        authorization: Hash32,
        registry: &dyn DecisionRegistry,
        now: Tick,
    ) -> Result<LtId, ScmsError> {
        if !registry.authorizes(&authorization, &p_id) {
            return Err(ScmsError::Unauthorized {
                p_id,
                tx: authorization,
            });
        }
        let token = self
            .pseudonym_tokens
            .get(&p_id)
            .ok_or(ScmsError::UnknownPseudonym(p_id))?;
        let lt = self.linkage_table[token];
        self.audit.push(AuditRecord {
            tick: now,
            p_id: Some(p_id),
            lt_id: lt,
            cause_tx: authorization,
            region: self.region,
            event: AuditEvent::Linkage,
        });
        Ok(lt)
    }

    /// Revoke a vehicle and tell the RA to stop issuing to it. Identities
    /// enrolled in other regions are blacklisted here too. Returns whether
    /// anything changed.
    pub fn revoke(&mut self, lt: LtId, now: Tick, cause: Hash32) -> Result<bool, ScmsError> {
        if lt.region == self.region && !self.enrolled.contains_key(&lt) {
            return Err(ScmsError::UnknownLongTerm(lt));
        }
        if self.state.revoked_lt.contains(&lt) {
            return Ok(false);
        }
        self.state.revoked_lt.insert(lt);
        self.state.ra_blacklist.insert(lt);
        self.revoked_at.insert(lt, now);
        if let Some(cert) = self.enrolled.get_mut(&lt) {
            cert.revoked = true;
        }
        if let Some(pool) = self.pools.get(&lt) {
            for p in pool.pseudonyms.iter().filter(|p| p.valid_to >= now) {
                self.state.revoked_pseudonyms.insert(p.p_id);
            }
        }
        self.audit.push(AuditRecord {
            tick: now,
            p_id: None,
            lt_id: lt,
            cause_tx: cause,
            region: self.region,
            event: AuditEvent::Revocation,
        });
        Ok(true)
    }
}

/// Writes audit records as CSV: `tick,p_id,lt_id,cause_tx,region,event`.
pub fn write_audit_csv<W: std::io::Write>(
    records: &[AuditRecord],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tick", "p_id", "lt_id", "cause_tx", "region", "event"])?;
    for r in records {
        let event = match r.event {
            AuditEvent::Linkage => "linkage",
            AuditEvent::Revocation => "revocation",
        };
        w.write_record([
            r.tick.to_string(),
            r.p_id.map(|p| p.to_string()).unwrap_or_default(),
            r.lt_id.to_string(),
            r.cause_tx.to_hex(),
            r.region.to_string(),
            event.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RngStreams;
    use std::collections::BTreeSet;

    fn scms() -> Scms {
        Scms::new(RegionId(0), RngStreams::fresh(1, "scms"))
    }

    struct Registry(Vec<(Hash32, PseudonymId)>);

    impl DecisionRegistry for Registry {
        fn authorizes(&self, tx: &Hash32, p: &PseudonymId) -> bool {
            self.0.iter().any(|(t, q)| t == tx && q == p)
        }
    }

    fn policy(window: Tick, overlap: Tick) -> IssuancePolicy {
        IssuancePolicy {
            window_ticks: window,
            overlap_ticks: overlap,
        }
    }

    #[test]
    fn enrollment_is_unique() {
        let mut s = scms();
        let e = s.enroll(NodeId::vehicle(7)).unwrap();
        assert_eq!(e.certificate.holder, NodeId::vehicle(7));
        assert_eq!(
            s.enroll(NodeId::vehicle(7)).err(),
            Some(ScmsError::AlreadyEnrolled(NodeId::vehicle(7)))
        );
        let ids: BTreeSet<LtId> = (100..200)
            .map(|i| s.enroll(NodeId::vehicle(i)).unwrap().certificate.lt_id)
            .collect();
        assert_eq!(ids.len(), 100);
    }

    #[test]
    fn windows_overlap_as_requested() {
        let mut s = scms();
        let lt = s.enroll(NodeId::vehicle(0)).unwrap().certificate.lt_id;
        let ps = s.issue_pseudonyms(lt, 0, 1100, policy(600, 100)).unwrap();
        let windows: Vec<(Tick, Tick)> =
            ps.iter().map(|p| (p.cert.valid_from, p.cert.valid_to)).collect();
        assert_eq!(windows, vec![(0, 600), (500, 1100)]);
        assert_eq!(s.active_pseudonyms(lt, 550).unwrap().len(), 2);
        assert_eq!(s.active_pseudonyms(lt, 100).unwrap().len(), 1);
        assert_eq!(s.active_pseudonyms(lt, 1101).unwrap().len(), 0);
        for p in &ps {
            assert!(p.cert.verify(&s.pca_public()));
        }
    }

    #[test]
    fn refill_continues_the_lattice() {
        let mut s = scms();
        let lt = s.enroll(NodeId::vehicle(0)).unwrap().certificate.lt_id;
        s.issue_pseudonyms(lt, 0, 1100, policy(600, 100)).unwrap();
        let more = s.issue_pseudonyms(lt, 900, 1100, policy(600, 100)).unwrap();
        assert_eq!(more[0].cert.valid_from, 1000);
        assert_eq!(more.last().unwrap().cert.valid_to, 2100);
    }

    #[test]
    fn bad_windows_rejected() {
        let mut s = scms();
        let lt = s.enroll(NodeId::vehicle(0)).unwrap().certificate.lt_id;
        for (w, o) in [(600, 0), (600, 600), (600, 300)] {
            assert!(matches!(
                s.issue_pseudonyms(lt, 0, 1000, policy(w, o)),
                Err(ScmsError::InvalidWindow { .. })
            ));
        }
    }

    #[test]
    fn revocation_blocks_issuance_and_is_idempotent() {
        let mut s = scms();
        let lt = s.enroll(NodeId::vehicle(0)).unwrap().certificate.lt_id;
        let ps = s.issue_pseudonyms(lt, 0, 1100, policy(600, 100)).unwrap();
        assert!(s.revoke(lt, 550, Hash32::ZERO).unwrap());
        let snapshot = s.state().clone();
        assert!(!s.revoke(lt, 560, Hash32::ZERO).unwrap());
        assert_eq!(s.state(), &snapshot);
        for p in &ps {
            assert!(s.state().revoked_pseudonyms.contains(&p.id()));
        }
        assert!(s.state().ra_blacklist.contains(&lt));
        assert!(s.certificate(lt).unwrap().revoked);
        assert_eq!(
            s.issue_pseudonyms(lt, 600, 1100, policy(600, 100)).err(),
            Some(ScmsError::Blacklisted(lt))
        );
        assert!(s.active_pseudonyms(lt, 550).unwrap().is_empty());
    }

    #[test]
    fn foreign_identities_can_be_blacklisted() {
        let mut s = scms();
        let foreign = LtId {
            region: RegionId(1),
            serial: 4,
        };
        assert!(s.revoke(foreign, 10, Hash32::ZERO).unwrap());
        assert!(s.is_blacklisted(foreign));
        let unknown_local = LtId {
            region: RegionId(0),
            serial: 99,
        };
        assert_eq!(
            s.revoke(unknown_local, 10, Hash32::ZERO),
            Err(ScmsError::UnknownLongTerm(unknown_local))
        );
    }

    #[test]
    fn linkage_needs_committed_decision() {
        let mut s = scms();
        let lt = s.enroll(NodeId::vehicle(3)).unwrap().certificate.lt_id;
        let p = s.issue_pseudonyms(lt, 0, 600, policy(600, 100)).unwrap()[0].id();
        let tx = Hash32::digest(b"tx");
        let empty = Registry(vec![]);
        assert!(matches!(
            s.resolve_linkage(p, tx, &empty, 5),
            Err(ScmsError::Unauthorized { .. })
        ));
        assert!(s.audit_log().is_empty());
        let reg = Registry(vec![(tx, p)]);
        assert_eq!(s.resolve_linkage(p, tx, &reg, 5).unwrap(), lt);
        assert_eq!(s.audit_log().len(), 1);
        let ghost = PseudonymId {
            region: RegionId(0),
            value: 1,
        };
        let reg = Registry(vec![(tx, ghost)]);
        assert_eq!(
            s.resolve_linkage(ghost, tx, &reg, 5),
            Err(ScmsError::UnknownPseudonym(ghost))
        );
    }

    #[test]
    fn linkage_soundness_over_many_vehicles() {
        let mut s = scms();
        let tx = Hash32::digest(b"all");
        let mut issued = Vec::new();
        for i in 0..30 {
            let lt = s.enroll(NodeId::vehicle(i)).unwrap().certificate.lt_id;
            for p in s.issue_pseudonyms(lt, 0, 2000, policy(600, 100)).unwrap() {
                issued.push((p.id(), lt));
            }
        }
        let reg = Registry(issued.iter().map(|(p, _)| (tx, *p)).collect());
        for (p, lt) in issued {
            assert_eq!(s.resolve_linkage(p, tx, &reg, 0).unwrap(), lt);
        }
    }

    #[test]
    fn audit_csv_columns() {
        let mut s = scms();
        let lt = s.enroll(NodeId::vehicle(0)).unwrap().certificate.lt_id;
        s.revoke(lt, 9, Hash32::ZERO).unwrap();
        let mut out = Vec::new();
        write_audit_csv(s.audit_log(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("tick,p_id,lt_id,cause_tx,region,event"));
        assert!(lines.next().unwrap().starts_with("9,,r0-lt0,0000"));
    }

    proptest::proptest! {
        #[test]
        fn never_more_than_two_active(
            window in 10u64..800,
            overlap_frac in 0.01f64..0.49,
            horizon in 1u64..5000,
            refill_at in 0u64..3000,
        ) {
            let overlap = ((window as f64 * overlap_frac) as u64).max(1);
            let p = policy(window, overlap);
            proptest::prop_assume!(p.validate().is_ok());
            let mut s = scms();
            let lt = s.enroll(NodeId::vehicle(0)).unwrap().certificate.lt_id;
            s.issue_pseudonyms(lt, 0, horizon, p).unwrap();
            s.issue_pseudonyms(lt, refill_at, horizon, p).unwrap();
            let end = s.pool(lt).unwrap().pseudonyms.last().unwrap().valid_to;
            for t in 0..=end + 1 {
                proptest::prop_assert!(s.active_pseudonyms(lt, t).unwrap().len() <= 2);
            }
            let pool = &s.pool(lt).unwrap().pseudonyms;
            for pair in pool.windows(2) {
                // consecutive windows overlap partially, or the pool lapsed and restarted
                let ov = pair[0].valid_to.saturating_sub(pair[1].valid_from);
                proptest::prop_assert!(ov == overlap || pair[1].valid_from > pair[0].valid_to);
            }
        }
    }
}
