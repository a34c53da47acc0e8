//! Service-perspective trust attribute: dynamic reliability.
//!
//! Providers broadcast a claim vector (advertised QoS magnitudes); each
//! consumer periodically compares actual against claimed values, yielding
//! per-claim reliability ratios that are folded into an accumulated vector
//! per consumer. A service-level reliability scalar aggregates across
//! consumers weighted by consumption time, with a neutral default of 0.5
//! when nobody has observed the service yet.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Neutral reliability assumed for services nobody has observed.
pub const DEFAULT_RELIABILITY: f64 = 0.5;

/// How the per-consumer accumulated vectors aggregate into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReliabilityMode {
    /// Divide the time-weighted sum by the maximum consumption time, as
    /// written in the source formula, clamping into [0,1].
    #[default]
    PaperVerbatim,
    /// Divide by the total consumption time — a proper weighted mean that
    /// needs no clamping.
    DurationNormalized,
}

impl ReliabilityMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReliabilityMode::PaperVerbatim => "paper_verbatim",
            ReliabilityMode::DurationNormalized => "duration_normalized",
        }
    }
}

impl fmt::Display for ReliabilityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReliabilityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_verbatim" => Ok(ReliabilityMode::PaperVerbatim),
            "duration_normalized" => Ok(ReliabilityMode::DurationNormalized),
            other => Err(Error::schema(format!(
                "unknown reliability mode `{other}` (expected paper_verbatim or duration_normalized)"
            ))),
        }
    }
}

/// One advertised claim: a named magnitude with a unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimEntry<F> {
    pub name: String,
    pub value: F,
    pub unit: String,
}

/// An ordered vector of service claims.
///
/// Values must be finite and non-negative; actual (observed) vectors may
/// legitimately contain zeros for unfulfilled claims, so strict positivity
/// is enforced only on the broadcast side, where the value becomes a
/// divisor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ClaimEntry<F>>", into = "Vec<ClaimEntry<F>>")]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
pub struct ClaimVector<F: Scalar> {
    entries: Vec<ClaimEntry<F>>,
}

impl<F: Scalar> ClaimVector<F> {
    pub fn new(entries: Vec<ClaimEntry<F>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::domain("claim vector must be non-empty"));
        }
        for e in &entries {
            if !e.value.is_finite() || e.value < F::zero() {
                return Err(Error::domain(format!(
                    "claim `{}` has invalid value {}",
                    e.name, e.value
                )));
            }
        }
        Ok(ClaimVector { entries })
    }

    /// Convenience constructor from `(name, value, unit)` triples.
    pub fn from_triples(triples: &[(&str, f64, &str)]) -> Result<Self> {
        Self::new(
            triples
                .iter()
                .map(|&(name, value, unit)| ClaimEntry {
                    name: name.to_string(),
                    value: F::from_f64_lossy(value),
                    unit: unit.to_string(),
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[ClaimEntry<F>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns a copy with every value multiplied by `factor` (clamped at
    /// zero), preserving names and units — used to derive actual
    /// fulfillment from a broadcast.
    pub fn scaled(&self, factor: F) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .map(|e| ClaimEntry {
                name: e.name.clone(),
                value: (e.value * factor).max(F::zero()),
                unit: e.unit.clone(),
            })
            .collect();
        ClaimVector::new(entries)
    }
}

impl<F: Scalar> TryFrom<Vec<ClaimEntry<F>>> for ClaimVector<F> {
    type Error = Error;

    fn try_from(entries: Vec<ClaimEntry<F>>) -> Result<Self> {
        ClaimVector::new(entries)
    }
}

impl<F: Scalar> From<ClaimVector<F>> for Vec<ClaimEntry<F>> {
    fn from(v: ClaimVector<F>) -> Self {
        v.entries
    }
}

/// Per-claim fulfillment ratios in `[0,1]`, same order as the governing
/// claim vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReliabilityVector<F>(Vec<F>);

impl<F: Scalar> ReliabilityVector<F> {
    pub fn new(entries: Vec<F>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::domain("reliability vector must be non-empty"));
        }
        for &v in &entries {
            if !(v >= F::zero() && v <= F::one()) {
                return Err(Error::domain(format!(
                    "reliability entry {v} outside [0,1]"
                )));
            }
        }
        Ok(ReliabilityVector(entries))
    }

    pub fn entries(&self) -> &[F] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Arithmetic mean of the entries.
    pub fn mean(&self) -> F {
        let sum: F = self.0.iter().copied().sum();
        sum / F::from(self.0.len()).unwrap()
    }
}

/// Per-claim reliability of one observation: `1 − (broadcast − actual) ⊘
/// broadcast`, elementwise, clamped into `[0,1]` (over-delivery counts as
/// full fulfillment).
pub fn reliability_vector<F: Scalar>(
    broadcast: &ClaimVector<F>,
    actual: &ClaimVector<F>,
) -> Result<ReliabilityVector<F>> {
    if broadcast.len() != actual.len() {
        return Err(Error::contract(format!(
            "claim arity mismatch: broadcast has {}, actual has {}",
            broadcast.len(),
            actual.len()
        )));
    }
    let mut entries = Vec::with_capacity(broadcast.len());
    for (b, a) in broadcast.entries().iter().zip(actual.entries()) {
        if b.name != a.name {
            return Err(Error::contract(format!(
                "claim name mismatch: `{}` vs `{}`",
                b.name, a.name
            )));
        }
        if b.value <= F::zero() {
            return Err(Error::domain(format!(
                "broadcast claim `{}` must be strictly positive",
                b.name
            )));
        }
        let raw = F::one() - (b.value - a.value) / b.value;
        entries.push(raw.max(F::zero()).min(F::one()));
    }
    ReliabilityVector::new(entries)
}

/// Exponentially weighted fold of reliability observations:
/// `γ·acc + (1−γ)·fresh`, elementwise.
pub fn accumulate<F: Scalar>(
    acc: &ReliabilityVector<F>,
    fresh: &ReliabilityVector<F>,
    gamma: F,
) -> Result<ReliabilityVector<F>> {
    if !(gamma >= F::zero() && gamma <= F::one()) {
        return Err(Error::domain(format!(
            "weighting factor gamma {gamma} outside [0,1]"
        )));
    }
    if acc.len() != fresh.len() {
        return Err(Error::contract(format!(
            "reliability arity mismatch: {} vs {}",
            acc.len(),
            fresh.len()
        )));
    }
    let entries = acc
        .entries()
        .iter()
        .zip(fresh.entries())
        .map(|(&a, &f)| gamma * a + (F::one() - gamma) * f)
        .collect();
    ReliabilityVector::new(entries)
}

/// One consumer's standing in the ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry<F> {
    /// Exponentially weighted fold of this consumer's observations.
    pub accumulated: ReliabilityVector<F>,
    /// Total consumption time in seconds.
    pub t_spent_s: f64,
    /// Unix timestamp of the latest observation.
    pub last_update_unix: f64,
}

/// Reliability bookkeeping for one service across its consumers.
///
/// Consumers call [`ReliabilityLedger::begin_session`] once, then record
/// observations through [`ReliabilityLedger::consumption_step`]; the first
/// observation's duration is measured from the session start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
pub struct ReliabilityLedger<F: Scalar> {
    /// Sessions begun but not yet observed: consumer_id → start time.
    sessions: BTreeMap<String, f64>,
    /// Consumers with at least one observation.
    entries: BTreeMap<String, LedgerEntry<F>>,
    /// Claim arity, fixed by the first observation.
    arity: Option<usize>,
}

impl<F: Scalar> Default for ReliabilityLedger<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ReliabilityLedger<F> {
    pub fn new() -> Self {
        ReliabilityLedger {
            sessions: BTreeMap::new(),
            entries: BTreeMap::new(),
            arity: None,
        }
    }

    /// Opens a consumption session; the first observation's duration is
    /// measured from `start_unix`.
    pub fn begin_session(&mut self, consumer_id: impl Into<String>, start_unix: f64) -> Result<()> {
        let consumer_id = consumer_id.into();
        if self.sessions.contains_key(&consumer_id) || self.entries.contains_key(&consumer_id) {
            return Err(Error::contract(format!(
                "consumer `{consumer_id}` already has a session"
            )));
        }
        if !start_unix.is_finite() {
            return Err(Error::contract("session start must be finite".to_string()));
        }
        self.sessions.insert(consumer_id, start_unix);
        Ok(())
    }

    /// Records one observation: computes the fresh reliability vector,
    /// folds it into the consumer's accumulated vector (first observation
    /// initializes the accumulator), and advances the consumption time.
    pub fn consumption_step(
        &mut self,
        consumer_id: &str,
        broadcast: &ClaimVector<F>,
        actual: &ClaimVector<F>,
        t_unix: f64,
        gamma: F,
    ) -> Result<&LedgerEntry<F>> {
        let fresh = reliability_vector(broadcast, actual)?;
        if let Some(arity) = self.arity {
            if fresh.len() != arity {
                return Err(Error::contract(format!(
                    "observation arity {} does not match the ledger's {}",
                    fresh.len(),
                    arity
                )));
            }
        }

        if let Some(entry) = self.entries.get_mut(consumer_id) {
            if t_unix <= entry.last_update_unix {
                return Err(Error::contract(format!(
                    "timestamp {t_unix} not later than consumer `{consumer_id}`'s last update {}",
                    entry.last_update_unix
                )));
            }
            entry.accumulated = accumulate(&entry.accumulated, &fresh, gamma)?;
            entry.t_spent_s += t_unix - entry.last_update_unix;
            entry.last_update_unix = t_unix;
        } else if let Some(&start) = self.sessions.get(consumer_id) {
            if t_unix <= start {
                return Err(Error::contract(format!(
                    "timestamp {t_unix} not later than consumer `{consumer_id}`'s session start {start}"
                )));
            }
            // Validate gamma even though the first fold is the identity.
            if !(gamma >= F::zero() && gamma <= F::one()) {
                return Err(Error::domain(format!(
                    "weighting factor gamma {gamma} outside [0,1]"
                )));
            }
            self.sessions.remove(consumer_id);
            self.arity.get_or_insert(fresh.len());
            self.entries.insert(
                consumer_id.to_string(),
                LedgerEntry {
                    accumulated: fresh,
                    t_spent_s: t_unix - start,
                    last_update_unix: t_unix,
                },
            );
        } else {
            return Err(Error::contract(format!(
                "consumer `{consumer_id}` has no session; call begin_session first"
            )));
        }
        Ok(&self.entries[consumer_id])
    }

    /// Restores a consumer entry from persisted state (deserialization
    /// path; bypasses the session protocol).
    pub fn restore(
        &mut self,
        consumer_id: impl Into<String>,
        accumulated: ReliabilityVector<F>,
        t_spent_s: f64,
        last_update_unix: f64,
    ) -> Result<()> {
        let consumer_id = consumer_id.into();
        if self.entries.contains_key(&consumer_id) {
            return Err(Error::data(format!(
                "duplicate ledger record for consumer `{consumer_id}`"
            )));
        }
        if !(t_spent_s.is_finite() && t_spent_s >= 0.0) || !last_update_unix.is_finite() {
            return Err(Error::data(format!(
                "invalid times for consumer `{consumer_id}`: t_spent_s={t_spent_s}, last_update_unix={last_update_unix}"
            )));
        }
        if let Some(arity) = self.arity {
            if accumulated.len() != arity {
                return Err(Error::data(format!(
                    "ledger record arity {} does not match the ledger's {}",
                    accumulated.len(),
                    arity
                )));
            }
        }
        self.arity.get_or_insert(accumulated.len());
        self.entries.insert(
            consumer_id,
            LedgerEntry {
                accumulated,
                t_spent_s,
                last_update_unix,
            },
        );
        Ok(())
    }

    /// Number of consumers with at least one observation.
    pub fn observer_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, consumer_id: &str) -> Option<&LedgerEntry<F>> {
        self.entries.get(consumer_id)
    }

    /// Iterates `(consumer_id, entry)` in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &LedgerEntry<F>)> {
        self.entries.iter().map(|(id, e)| (id.as_str(), e))
    }

    /// Aggregates all consumers' accumulated vectors, weighted by
    /// consumption time.
    ///
    /// `paper_verbatim` divides by the maximum consumption time and clamps
    /// (the literal formula); `duration_normalized` divides by the total
    /// time, a weighted mean. Errors with [`Error::NoObservers`] on an
    /// empty ledger — callers wanting the 0.5 default should use
    /// [`service_reliability`].
    pub fn overall_reliability(&self, mode: ReliabilityMode) -> Result<ReliabilityVector<F>> {
        let arity = match (self.entries.is_empty(), self.arity) {
            (false, Some(a)) => a,
            _ => {
                return Err(Error::NoObservers(
                    "ledger has no recorded observations".to_string(),
                ))
            }
        };

        let mut weighted = vec![F::zero(); arity];
        let mut t_max = 0.0_f64;
        let mut t_sum = 0.0_f64;
        for entry in self.entries.values() {
            t_max = t_max.max(entry.t_spent_s);
            t_sum += entry.t_spent_s;
            let t = F::from_f64_lossy(entry.t_spent_s);
            for (w, &v) in weighted.iter_mut().zip(entry.accumulated.entries()) {
                *w = *w + t * v;
            }
        }

        let denominator = match mode {
            ReliabilityMode::PaperVerbatim => t_max,
            ReliabilityMode::DurationNormalized => t_sum,
        };
        debug_assert!(denominator > 0.0, "observed consumers imply t_spent > 0");
        let den = F::from_f64_lossy(denominator);
        let entries = weighted
            .into_iter()
            .map(|w| (w / den).max(F::zero()).min(F::one()))
            .collect();
        ReliabilityVector::new(entries)
    }
}

/// Service reliability scalar: the mean of the aggregated reliability
/// vector, or the neutral 0.5 default when the service has no observers.
pub fn service_reliability<F: Scalar>(ledger: &ReliabilityLedger<F>, mode: ReliabilityMode) -> F {
    match ledger.overall_reliability(mode) {
        Ok(rv) => rv.mean(),
        Err(_) => F::from_f64_lossy(DEFAULT_RELIABILITY),
    }
}

/// One line of the ledger JSONL serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord<F> {
    pub service_id: String,
    pub consumer_id: String,
    pub accumulated: Vec<F>,
    pub t_spent_s: f64,
    pub last_update_unix: f64,
}

/// Ledgers for a whole catalog of services, keyed by service id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
pub struct LedgerStore<F: Scalar> {
    services: BTreeMap<String, ReliabilityLedger<F>>,
}

impl<F: Scalar> LedgerStore<F> {
    pub fn new() -> Self {
        LedgerStore {
            services: BTreeMap::new(),
        }
    }

    pub fn ledger(&self, service_id: &str) -> Option<&ReliabilityLedger<F>> {
        self.services.get(service_id)
    }

    /// Returns the ledger for `service_id`, creating an empty one if absent.
    pub fn ledger_mut(&mut self, service_id: &str) -> &mut ReliabilityLedger<F> {
        self.services.entry(service_id.to_string()).or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ReliabilityLedger<F>)> {
        self.services.iter().map(|(id, l)| (id.as_str(), l))
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    /// Writes one JSON record per (service, observed consumer), sorted, so
    /// output bytes are stable. Sessions without observations are not
    /// persisted in this format.
    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        for (service_id, ledger) in &self.services {
            for (consumer_id, entry) in ledger.iter() {
                let record = LedgerRecord {
                    service_id: service_id.clone(),
                    consumer_id: consumer_id.to_string(),
                    accumulated: entry.accumulated.entries().to_vec(),
                    t_spent_s: entry.t_spent_s,
                    last_update_unix: entry.last_update_unix,
                };
                serde_json::to_writer(&mut file, &record)?;
                file.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    /// Reads a JSONL file written by [`LedgerStore::save_jsonl`].
    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut store = LedgerStore::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: LedgerRecord<F> = serde_json::from_str(&line)?;
            let accumulated = ReliabilityVector::new(record.accumulated)?;
            store.ledger_mut(&record.service_id).restore(
                record.consumer_id,
                accumulated,
                record.t_spent_s,
                record.last_update_unix,
            )?;
        }
        Ok(store)
    }
}
