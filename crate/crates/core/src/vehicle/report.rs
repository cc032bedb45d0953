use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::beacon::{verify_beacon, Beacon, BeaconFault};
use super::detect::{evaluate, CheckKind, TrustStatement, Verdict};
use super::VerifyContext;
use crate::cluster::ClusterId;
use crate::codec::{self, Hash32};
use crate::crypto::Signature;
use crate::scms::{Pseudonym, PseudonymCert, PseudonymId};
use crate::sim::Tick;

/// A misbehavior report: the suspects, the detected misbehavior, the
/// reporter's pseudonym, the cluster it was raised in, and the signed
/// beacons that back every statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisbehaviorReport {
    pub suspects: Vec<PseudonymId>,
    pub detected: Vec<TrustStatement>,
    pub reporter: PseudonymCert,
    pub cluster_id: ClusterId,
    pub tick: Tick,
    pub evidence: Vec<Beacon>,
    pub signature: Signature,
}

#[derive(Serialize)]
struct SignedPart<'a> {
    suspects: &'a [PseudonymId],
    detected: &'a [TrustStatement],
    reporter: &'a PseudonymCert,
    cluster_id: &'a ClusterId,
    tick: Tick,
    evidence: &'a [Beacon],
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("a report needs at least one statement")]
    NoStatements,
    #[error("statement cites beacon {0} which is not in the evidence")]
    MissingEvidence(Hash32),
}

/// Why a report failed validation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportFault {
    #[error("reporter certificate: {0}")]
    Reporter(BeaconFault),
    #[error("reporter signature does not verify")]
    ReporterSignature,
    #[error("report carries no statements")]
    NoStatements,
    #[error("suspect list does not match the statements")]
    SuspectList,
    #[error("evidence beacon {0}: {1}")]
    Evidence(Hash32, BeaconFault),
    #[error("statement cites missing beacon {0}")]
    MissingEvidence(Hash32),
    #[error("statement about {0} cites another pseudonym's beacons")]
    WrongSuspect(PseudonymId),
    #[error("{0:?} re-execution does not reproduce the claimed result")]
    Reexecution(CheckKind),
}

impl MisbehaviorReport {
    pub fn reporter_p_id(&self) -> PseudonymId {
        self.reporter.p_id
    }

    pub fn hash(&self) -> Hash32 {
        Hash32::of("report", self)
    }

    fn signed_bytes(&self) -> Vec<u8> {
        codec::encode(&SignedPart {
            suspects: &self.suspects,
            detected: &self.detected,
            reporter: &self.reporter,
            cluster_id: &self.cluster_id,
            tick: self.tick,
            evidence: &self.evidence,
        })
    }

    /// Re-signs after the fields were edited. Used by adversaries that
    /// fabricate content under their own valid pseudonym.
    pub fn resign(&mut self, reporter: &Pseudonym) {
        self.reporter = reporter.cert.clone();
        self.signature = reporter.key.sign(&self.signed_bytes());
    }
}

fn canonical_suspects(statements: &[TrustStatement]) -> Vec<PseudonymId> {
    statements
        .iter()
        .map(|s| s.suspect)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn build_report(
    mut statements: Vec<TrustStatement>,
    reporter: &Pseudonym,
    cluster_id: ClusterId,
    evidence: Vec<Beacon>,
    tick: Tick,
) -> Result<MisbehaviorReport, ReportError> {
    if statements.is_empty() {
        return Err(ReportError::NoStatements);
    }
    let mut by_hash: BTreeMap<Hash32, Beacon> =
        evidence.into_iter().map(|b| (b.hash(), b)).collect();
    for s in &statements {
        for h in &s.inputs {
            if !by_hash.contains_key(h) {
                return Err(ReportError::MissingEvidence(*h));
            }
        }
    }
    statements.sort_by(|a, b| {
        (a.suspect, a.check, &a.inputs).cmp(&(b.suspect, b.check, &b.inputs))
    });
    statements.dedup();
    let mut evidence: Vec<Beacon> = std::mem::take(&mut by_hash).into_values().collect();
    evidence.sort_by_key(|b| (b.p_id(), b.tick, b.hash()));
    let mut report = MisbehaviorReport {
        suspects: canonical_suspects(&statements),
        detected: statements,
        reporter: reporter.cert.clone(),
        cluster_id,
        tick,
        evidence,
        signature: Signature::garbage(0),
    };
    report.resign(reporter);
    Ok(report)
}

/// Full independent validation: signatures, evidence closure, and
/// re-execution of every statement. Every layer (cluster member, RSU, MA,
/// public auditor) runs exactly this.
pub fn verify_report(r: &MisbehaviorReport, ctx: &VerifyContext) -> Result<(), ReportFault> {
    let pca = ctx
        .pca_keys
        .get(&r.reporter.p_id.region)
        .ok_or(ReportFault::Reporter(BeaconFault::UnknownIssuer))?;
    if !r.reporter.verify(pca) {
        return Err(ReportFault::Reporter(BeaconFault::Certificate));
    }
    if !r.reporter.is_valid_at(r.tick) {
        return Err(ReportFault::Reporter(BeaconFault::Expired));
    }
    if !r.reporter.public_key.verify(&r.signed_bytes(), &r.signature) {
        return Err(ReportFault::ReporterSignature);
    }
    if r.detected.is_empty() {
        return Err(ReportFault::NoStatements);
    }
    if r.suspects != canonical_suspects(&r.detected) {
        return Err(ReportFault::SuspectList);
    }
    let mut by_hash = BTreeMap::new();
    for b in &r.evidence {
        let h = b.hash();
        verify_beacon(b, ctx).map_err(|f| ReportFault::Evidence(h, f))?;
        by_hash.insert(h, b);
    }
    for s in &r.detected {
        let cited: Vec<&Beacon> = s
            .inputs
            .iter()
            .map(|h| by_hash.get(h).copied().ok_or(ReportFault::MissingEvidence(*h)))
            .collect::<Result<_, _>>()?;
        if cited.iter().any(|b| b.p_id() != s.suspect) {
            return Err(ReportFault::WrongSuspect(s.suspect));
        }
        let finding = evaluate(s.check, &cited, &ctx.detection)
            .ok_or(ReportFault::Reexecution(s.check))?;
        let reproduced = finding.implausible
            && s.verdict == Verdict::Implausible
            && finding.computed_value.to_bits() == s.computed_value.to_bits()
            && finding.threshold.to_bits() == s.threshold.to_bits();
        if !reproduced {
            return Err(ReportFault::Reexecution(s.check));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::Fixture;

    #[test]
    fn genuine_report_verifies() {
        let fx = Fixture::new(3);
        let r = fx.speeding_report(0, 1, 20);
        assert_eq!(verify_report(&r, &fx.ctx), Ok(()));
        assert_eq!(r.suspects, vec![fx.pseudonym(1).id()]);
    }

    #[test]
    fn suspects_are_sorted_and_deduplicated() {
        let fx = Fixture::new(4);
        let a = fx.speeding_report(0, 3, 20);
        let b = fx.speeding_report(0, 2, 20);
        let mut statements = a.detected.clone();
        statements.extend(b.detected.clone());
        statements.extend(a.detected.clone());
        let mut evidence = a.evidence.clone();
        evidence.extend(b.evidence.clone());
        let r = build_report(statements, fx.pseudonym(0), ClusterId::NONE, evidence, 20).unwrap();
        let mut expect = vec![fx.pseudonym(2).id(), fx.pseudonym(3).id()];
        expect.sort();
        assert_eq!(r.suspects, expect);
        assert_eq!(r.detected.len(), 2);
        assert_eq!(verify_report(&r, &fx.ctx), Ok(()));
    }

    #[test]
    fn build_requires_statements_and_evidence_closure() {
        let fx = Fixture::new(2);
        let r = fx.speeding_report(0, 1, 20);
        assert_eq!(
            build_report(Vec::new(), fx.pseudonym(0), ClusterId::NONE, r.evidence.clone(), 20).unwrap_err(),
            ReportError::NoStatements
        );
        let missing = r.detected[0].inputs[1];
        let partial: Vec<_> = r.evidence.iter().filter(|b| b.hash() != missing).cloned().collect();
        assert_eq!(
            build_report(r.detected.clone(), fx.pseudonym(0), ClusterId::NONE, partial, 20).unwrap_err(),
            ReportError::MissingEvidence(missing)
        );
    }

    #[test]
    fn tampering_is_caught() {
        let fx = Fixture::new(3);
        let r = fx.speeding_report(0, 1, 20);

        let mut unsigned = r.clone();
        unsigned.tick += 1;
        assert_eq!(verify_report(&unsigned, &fx.ctx), Err(ReportFault::ReporterSignature));

        let mut inflated = r.clone();
        inflated.detected[0].computed_value += 1.0;
        inflated.resign(fx.pseudonym(0));
        assert_eq!(verify_report(&inflated, &fx.ctx), Err(ReportFault::Reexecution(CheckKind::SpeedBound)));

        let mut framed = r.clone();
        framed.detected[0].suspect = fx.pseudonym(2).id();
        framed.suspects = canonical_suspects(&framed.detected);
        framed.resign(fx.pseudonym(0));
        assert_eq!(
            verify_report(&framed, &fx.ctx),
            Err(ReportFault::WrongSuspect(fx.pseudonym(2).id()))
        );

        let mut dropped = r.clone();
        dropped.evidence.pop();
        dropped.resign(fx.pseudonym(0));
        assert!(matches!(verify_report(&dropped, &fx.ctx), Err(ReportFault::MissingEvidence(_))));

        let mut listed = r;
        listed.suspects.push(fx.pseudonym(2).id());
        listed.resign(fx.pseudonym(0));
        assert_eq!(verify_report(&listed, &fx.ctx), Err(ReportFault::SuspectList));
    }
}
