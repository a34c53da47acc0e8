//! Survey dataset pipeline.
//!
//! Raw survey responses (CSV) flow through validation, an attention filter
//! on completion time, per-survey consolidation of redundant worker
//! answers, and encoding into the canonical seven-feature vector with a
//! five-level trust label. Encoded datasets support same-level convex
//! interpolation (dataset inflation) and seeded stratified train/test
//! splitting.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device::{device_reputation_weighted, DeviceDescriptor, PropertyKind, ReputationTables};
use crate::error::{Error, Result};
use crate::model::{LabeledSet, TrustLevel};
use crate::owner::{common_friends_factor_localized, Locality, OwnerConfig, SocialProfile};
use crate::service::{
    service_reliability, ReliabilityLedger, ReliabilityMode, DEFAULT_RELIABILITY,
};

/// The trust perspectives attributes are grouped under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perspective {
    Owner,
    Device,
    Service,
}

impl Perspective {
    pub const ALL: [Perspective; 3] = [
        Perspective::Owner,
        Perspective::Device,
        Perspective::Service,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Perspective::Owner => "owner",
            Perspective::Device => "device",
            Perspective::Service => "service",
        }
    }
}

impl fmt::Display for Perspective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Perspective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::schema(format!("unknown perspective `{s}`")))
    }
}

/// A named, perspective-tagged feature column.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureName {
    pub perspective: Perspective,
    pub name: String,
}

impl FeatureName {
    pub fn new(perspective: Perspective, name: impl Into<String>) -> Self {
        FeatureName {
            perspective,
            name: name.into(),
        }
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.perspective, self.name)
    }
}

impl FromStr for FeatureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (perspective, name) = s.split_once('.').ok_or_else(|| {
            Error::schema(format!("feature name `{s}` lacks a perspective prefix"))
        })?;
        if name.is_empty() {
            return Err(Error::schema(format!(
                "feature name `{s}` has an empty attribute part"
            )));
        }
        Ok(FeatureName {
            perspective: perspective.parse()?,
            name: name.to_string(),
        })
    }
}

/// Number of canonical features.
pub const FEATURE_COUNT: usize = 7;

/// The canonical feature columns, in encoding order.
pub fn canonical_feature_names() -> Vec<FeatureName> {
    vec![
        FeatureName::new(Perspective::Owner, "social_relation"),
        FeatureName::new(Perspective::Owner, "common_friends"),
        FeatureName::new(Perspective::Owner, "reputation"),
        FeatureName::new(Perspective::Device, "reputation"),
        FeatureName::new(Perspective::Device, "carrier_reputation"),
        FeatureName::new(Perspective::Service, "concurrent_consumers"),
        FeatureName::new(Perspective::Service, "reliability"),
    ]
}

/// Relation answer meaning "no social relation"; always encodes to 0.
pub const RELATION_NONE: &str = "none";

/// Exact column header of a survey CSV.
pub const SURVEY_HEADER: [&str; 11] = [
    "survey_id",
    "worker_id",
    "social_relation",
    "owner_reputation",
    "device_brand",
    "device_model",
    "device_os",
    "concurrent_consumers",
    "carrier_reputation",
    "rating",
    "duration_s",
];

/// One worker's answers for one surveyed provider/service situation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyAnswers {
    pub social_relation: String,
    pub owner_reputation: f64,
    pub device_brand: String,
    pub device_model: String,
    pub device_os: String,
    pub concurrent_consumers: u32,
    pub carrier_reputation: f64,
    /// Trustworthiness rating on the 1–10 scale.
    pub rating: u8,
    /// Time the worker spent completing the survey, in seconds.
    pub duration_s: f64,
}

impl SurveyAnswers {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.social_relation.trim().is_empty() {
            return Err("social_relation is empty".to_string());
        }
        for (field, value) in [
            ("owner_reputation", self.owner_reputation),
            ("carrier_reputation", self.carrier_reputation),
        ] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(format!("{field} {value} outside [0,1]"));
            }
        }
        for (field, value) in [
            ("device_brand", &self.device_brand),
            ("device_model", &self.device_model),
            ("device_os", &self.device_os),
        ] {
            if value.trim().is_empty() {
                return Err(format!("{field} is empty"));
            }
        }
        if !(1..=10).contains(&self.rating) {
            return Err(format!("rating {} outside 1..=10", self.rating));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(format!("duration_s {} is not positive", self.duration_s));
        }
        Ok(())
    }
}

/// A survey response: the redundancy group it belongs to, the worker, and
/// the answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub survey_id: String,
    pub worker_id: String,
    pub answers: SurveyAnswers,
}

/// A row rejected during parsing, with its 1-based file line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

/// Summary of a survey CSV parse.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParseReport {
    pub accepted: usize,
    pub rejected: Vec<RejectedRow>,
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
) -> std::result::Result<T, String> {
    let raw = record.get(idx).unwrap_or("");
    raw.trim()
        .parse::<T>()
        .map_err(|_| format!("{name}: cannot parse `{raw}`"))
}

fn record_to_response(record: &csv::StringRecord) -> std::result::Result<SurveyResponse, String> {
    if record.len() != SURVEY_HEADER.len() {
        return Err(format!(
            "expected {} fields, got {}",
            SURVEY_HEADER.len(),
            record.len()
        ));
    }
    let survey_id = record.get(0).unwrap_or("").trim().to_string();
    if survey_id.is_empty() {
        return Err("survey_id is empty".to_string());
    }
    let worker_id = record.get(1).unwrap_or("").trim().to_string();
    if worker_id.is_empty() {
        return Err("worker_id is empty".to_string());
    }
    let answers = SurveyAnswers {
        social_relation: record.get(2).unwrap_or("").trim().to_string(),
        owner_reputation: parse_field(record, 3, "owner_reputation")?,
        device_brand: record.get(4).unwrap_or("").trim().to_string(),
        device_model: record.get(5).unwrap_or("").trim().to_string(),
        device_os: record.get(6).unwrap_or("").trim().to_string(),
        concurrent_consumers: parse_field(record, 7, "concurrent_consumers")?,
        carrier_reputation: parse_field(record, 8, "carrier_reputation")?,
        rating: parse_field(record, 9, "rating")?,
        duration_s: parse_field(record, 10, "duration_s")?,
    };
    answers.validate()?;
    Ok(SurveyResponse {
        survey_id,
        worker_id,
        answers,
    })
}

/// Parses a survey CSV. The header must match [`SURVEY_HEADER`] exactly
/// (schema error otherwise); malformed rows are collected into the report
/// with line numbers and reasons rather than aborting the parse.
pub fn parse_survey_csv(path: impl AsRef<Path>) -> Result<(Vec<SurveyResponse>, ParseReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path.as_ref())?;

    let headers = reader
        .headers()
        .map_err(|e| Error::schema(format!("cannot read survey header: {e}")))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != SURVEY_HEADER {
        return Err(Error::schema(format!(
            "survey header mismatch: expected `{}`, got `{}`",
            SURVEY_HEADER.join(","),
            got.join(",")
        )));
    }

    let mut responses = Vec::new();
    let mut report = ParseReport::default();
    for (i, row) in reader.records().enumerate() {
        // Data rows start on line 2, after the header.
        let fallback_line = i as u64 + 2;
        match row {
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
                report.rejected.push(RejectedRow {
                    line,
                    reason: format!("unreadable row: {e}"),
                });
            }
            Ok(record) => {
                let line = record.position().map(|p| p.line()).unwrap_or(fallback_line);
                match record_to_response(&record) {
                    Ok(resp) => {
                        responses.push(resp);
                        report.accepted += 1;
                    }
                    Err(reason) => report.rejected.push(RejectedRow { line, reason }),
                }
            }
        }
    }
    Ok((responses, report))
}

/// Writes survey responses in the canonical CSV layout.
pub fn write_survey_csv(responses: &[SurveyResponse], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(SURVEY_HEADER)?;
    for r in responses {
        let a = &r.answers;
        writer.write_record([
            r.survey_id.as_str(),
            r.worker_id.as_str(),
            a.social_relation.as_str(),
            &a.owner_reputation.to_string(),
            a.device_brand.as_str(),
            a.device_model.as_str(),
            a.device_os.as_str(),
            &a.concurrent_consumers.to_string(),
            &a.carrier_reputation.to_string(),
            &a.rating.to_string(),
            &a.duration_s.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Drops responses completed outside `[min_s, max_s]` (inclusive bounds):
/// too fast suggests inattention, too slow suggests distraction. Returns
/// the retained responses and the dropped count.
pub fn filter_by_duration(
    responses: Vec<SurveyResponse>,
    min_s: f64,
    max_s: f64,
) -> Result<(Vec<SurveyResponse>, usize)> {
    if !(min_s.is_finite() && max_s.is_finite() && 0.0 < min_s && min_s <= max_s) {
        return Err(Error::domain(format!(
            "duration window [{min_s}, {max_s}] must satisfy 0 < min ≤ max"
        )));
    }
    let before = responses.len();
    let kept: Vec<SurveyResponse> = responses
        .into_iter()
        .filter(|r| (min_s..=max_s).contains(&r.answers.duration_s))
        .collect();
    let dropped = before - kept.len();
    Ok((kept, dropped))
}

/// Summary of answer consolidation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsolidationReport {
    pub groups_total: usize,
    pub consolidated: usize,
    /// Survey ids whose rating spread exceeded the deviation threshold,
    /// sorted; these groups are dropped.
    pub flagged: Vec<String>,
}

/// Consolidates redundancy groups: responses sharing a `survey_id` form a
/// group of exactly `group_size` distinct workers. A group where any
/// rating deviates from the group mean by more than `deviation_threshold`
/// is flagged and dropped; otherwise one member is chosen uniformly at
/// random (seeded) to represent the group.
pub fn consolidate_answers(
    responses: &[SurveyResponse],
    group_size: usize,
    deviation_threshold: f64,
    seed: u64,
) -> Result<(Vec<SurveyResponse>, ConsolidationReport)> {
    if group_size == 0 {
        return Err(Error::domain("group_size must be ≥ 1".to_string()));
    }
    if !(deviation_threshold.is_finite() && deviation_threshold >= 0.0) {
        return Err(Error::domain(format!(
            "deviation_threshold must be ≥ 0; got {deviation_threshold}"
        )));
    }

    let mut groups: BTreeMap<&str, Vec<&SurveyResponse>> = BTreeMap::new();
    for r in responses {
        groups.entry(&r.survey_id).or_default().push(r);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut consolidated = Vec::new();
    let mut report = ConsolidationReport {
        groups_total: groups.len(),
        ..ConsolidationReport::default()
    };

    for (survey_id, group) in groups {
        if group.len() != group_size {
            return Err(Error::data(format!(
                "survey `{survey_id}` has {} responses, expected exactly {group_size}",
                group.len()
            )));
        }
        let mut workers: Vec<&str> = group.iter().map(|r| r.worker_id.as_str()).collect();
        workers.sort_unstable();
        workers.dedup();
        if workers.len() != group.len() {
            return Err(Error::data(format!(
                "survey `{survey_id}` has duplicate worker ids"
            )));
        }

        let mean = group.iter().map(|r| r.answers.rating as f64).sum::<f64>() / group.len() as f64;
        let outlier = group
            .iter()
            .any(|r| (r.answers.rating as f64 - mean).abs() > deviation_threshold);
        if outlier {
            report.flagged.push(survey_id.to_string());
            continue;
        }
        let pick = rng.random_range(0..group.len());
        consolidated.push(group[pick].clone());
        report.consolidated += 1;
    }
    Ok((consolidated, report))
}

/// Survey-to-feature encoding parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingConfig {
    /// Relation names in ascending strength order; the answer at index i
    /// encodes to (i+1)/len. [`RELATION_NONE`] always encodes to 0.
    pub relation_names: Vec<String>,
    /// Common-friends weighting of the provider side.
    pub mu1: f64,
    /// Common-friends weighting of the consumer side.
    pub mu2: f64,
    /// Concurrent-consumer counts are normalized by this cap (clamped).
    pub max_concurrent_consumers: u32,
    /// Service reliability encoded when no ledger observation exists.
    pub default_reliability: f64,
    pub reliability_mode: ReliabilityMode,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            relation_names: vec![
                "colleague".to_string(),
                "friend".to_string(),
                "family".to_string(),
            ],
            mu1: 0.5,
            mu2: 0.5,
            max_concurrent_consumers: 10,
            default_reliability: DEFAULT_RELIABILITY,
            reliability_mode: ReliabilityMode::default(),
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.relation_names.is_empty() {
            return Err(Error::domain(
                "relation_names must be non-empty".to_string(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &self.relation_names {
            if name.trim().is_empty() {
                return Err(Error::domain(
                    "relation names must be non-empty".to_string(),
                ));
            }
            if name == RELATION_NONE {
                return Err(Error::domain(format!(
                    "`{RELATION_NONE}` is reserved for the absent relation"
                )));
            }
            if !seen.insert(name) {
                return Err(Error::domain(format!("duplicate relation name `{name}`")));
            }
        }
        for (name, mu) in [("mu1", self.mu1), ("mu2", self.mu2)] {
            if !(0.0..=1.0).contains(&mu) {
                return Err(Error::domain(format!("{name} must lie in [0,1]; got {mu}")));
            }
        }
        if (self.mu1 + self.mu2 - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "mu1 + mu2 must equal 1; got {}",
                self.mu1 + self.mu2
            )));
        }
        if self.max_concurrent_consumers == 0 {
            return Err(Error::domain(
                "max_concurrent_consumers must be ≥ 1".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.default_reliability) {
            return Err(Error::domain(format!(
                "default_reliability must lie in [0,1]; got {}",
                self.default_reliability
            )));
        }
        Ok(())
    }

    fn owner_config(&self) -> Result<OwnerConfig<f64>> {
        OwnerConfig::new(self.relation_names.len() as u32, self.mu1, self.mu2)
    }

    /// Encodes a relation answer to its normalized strength.
    pub fn encode_relation(&self, relation: &str) -> Result<f64> {
        if relation == RELATION_NONE {
            return Ok(0.0);
        }
        let idx = self
            .relation_names
            .iter()
            .position(|n| n == relation)
            .ok_or_else(|| Error::Encoding {
                attribute: "social_relation".to_string(),
                reason: format!(
                    "unknown relation `{relation}` (expected `{RELATION_NONE}` or one of {:?})",
                    self.relation_names
                ),
            })?;
        Ok((idx + 1) as f64 / self.relation_names.len() as f64)
    }
}

/// Live observations that replace survey-time defaults when a real
/// provider/consumer pair is being encoded (the simulator path): the
/// social graph supplies the common-friends factor and a reliability
/// ledger supplies the service reliability.
pub struct PairContext<'a> {
    pub provider: &'a SocialProfile<f64>,
    pub consumer: &'a SocialProfile<f64>,
    /// Localities of (at least) all common friends of the pair.
    pub friend_localities: &'a BTreeMap<String, Locality<f64>>,
    pub ledger: Option<&'a ReliabilityLedger<f64>>,
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Interpolated,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::Interpolated => "interpolated",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Provenance::Original),
            "interpolated" => Ok(Provenance::Interpolated),
            other => Err(Error::schema(format!("unknown provenance `{other}`"))),
        }
    }
}

/// One encoded observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub level: TrustLevel,
    pub provenance: Provenance,
}

/// An encoded dataset: named feature columns plus labeled samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    feature_names: Vec<FeatureName>,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(feature_names: Vec<FeatureName>, samples: Vec<Sample>) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::domain(
                "a dataset needs at least one feature".to_string(),
            ));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != feature_names.len() {
                return Err(Error::contract(format!(
                    "sample {i} has {} features, expected {}",
                    s.features.len(),
                    feature_names.len()
                )));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("sample {i} has a non-finite feature")));
            }
        }
        Ok(Dataset {
            feature_names,
            samples,
        })
    }

    pub fn feature_names(&self) -> &[FeatureName] {
        &self.feature_names
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample count per trust level, indexed by level.
    pub fn level_counts(&self) -> [usize; 5] {
        let mut counts = [0usize; 5];
        for s in &self.samples {
            counts[s.level.index()] += 1;
        }
        counts
    }

    /// Converts to the training representation (features + label indices).
    pub fn to_labeled(&self) -> Result<LabeledSet<f64>> {
        LabeledSet::new(
            self.samples.iter().map(|s| s.features.clone()).collect(),
            self.samples.iter().map(|s| s.level.index()).collect(),
        )
    }

    /// Keeps only the feature columns at `indices` (in the given order).
    pub fn project(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::domain(
                "projection needs at least one column".to_string(),
            ));
        }
        for &i in indices {
            if i >= self.feature_names.len() {
                return Err(Error::contract(format!(
                    "column index {i} outside the {} features",
                    self.feature_names.len()
                )));
            }
        }
        let feature_names = indices
            .iter()
            .map(|&i| self.feature_names[i].clone())
            .collect();
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                features: indices.iter().map(|&i| s.features[i]).collect(),
                level: s.level,
                provenance: s.provenance,
            })
            .collect();
        Dataset::new(feature_names, samples)
    }

    /// Stable content hash over feature names, feature bits, levels, and
    /// provenance (first 16 hex chars of SHA-256).
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.feature_names {
            hasher.update(name.to_string().as_bytes());
            hasher.update([0u8]);
        }
        for s in &self.samples {
            for &v in &s.features {
                hasher.update(v.to_bits().to_le_bytes());
            }
            hasher.update([s.level.index() as u8, s.provenance as u8]);
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes the dataset as CSV: one column per feature (dotted names),
    /// then `level` and `provenance`. Floats use shortest round-trip form,
    /// so write→read→write is byte-stable.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        let mut header: Vec<String> = self.feature_names.iter().map(|n| n.to_string()).collect();
        header.push("level".to_string());
        header.push("provenance".to_string());
        writer.write_record(&header)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
            row.push(s.level.to_string());
            row.push(s.provenance.to_string());
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::to_csv`].
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let headers = reader
            .headers()
            .map_err(|e| Error::schema(format!("cannot read dataset header: {e}")))?
            .clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 3 || cols[cols.len() - 2] != "level" || cols[cols.len() - 1] != "provenance"
        {
            return Err(Error::schema(
                "dataset header must end with `level,provenance` after ≥ 1 feature column"
                    .to_string(),
            ));
        }
        let feature_names: Vec<FeatureName> = cols[..cols.len() - 2]
            .iter()
            .map(|c| c.parse())
            .collect::<Result<_>>()?;

        let mut samples = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let record = row?;
            if record.len() != cols.len() {
                return Err(Error::data(format!(
                    "dataset row {} has {} fields, expected {}",
                    i + 2,
                    record.len(),
                    cols.len()
                )));
            }
            let features: Vec<f64> = (0..feature_names.len())
                .map(|j| {
                    record.get(j).unwrap_or("").parse::<f64>().map_err(|_| {
                        Error::data(format!(
                            "dataset row {}: `{}` is not a number",
                            i + 2,
                            record.get(j).unwrap_or("")
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let level: TrustLevel = record.get(feature_names.len()).unwrap_or("").parse()?;
            let provenance: Provenance =
                record.get(feature_names.len() + 1).unwrap_or("").parse()?;
            samples.push(Sample {
                features,
                level,
                provenance,
            });
        }
        Dataset::new(feature_names, samples)
    }
}

/// Maps a 1–10 rating onto the five trust levels in width-2 bins:
/// 1–2 → NotTrusted, 3–4 → LowlyTrusted, 5–6 → Neutral, 7–8 → Trusted,
/// 9–10 → HighlyTrusted.
pub fn map_rating_to_level(rating: u8) -> Result<TrustLevel> {
    if !(1..=10).contains(&rating) {
        return Err(Error::domain(format!("rating {rating} outside 1..=10")));
    }
    TrustLevel::from_index(((rating - 1) / 2) as usize)
}

/// Encodes one response's answers into the canonical seven-feature vector.
///
/// Without a [`PairContext`] the survey defaults apply: the
/// common-friends factor is 0 (the survey instrument cannot observe the
/// workers' social graphs) and service reliability is
/// `config.default_reliability`. With a context, both are computed live
/// from the social graph and the reliability ledger.
pub fn encode_features(
    answers: &SurveyAnswers,
    tables: &ReputationTables<f64>,
    config: &EncodingConfig,
    context: Option<&PairContext<'_>>,
) -> Result<Vec<f64>> {
    config.validate()?;
    answers
        .validate()
        .map_err(|reason| Error::data(format!("invalid answers: {reason}")))?;

    let social_relation = config.encode_relation(&answers.social_relation)?;

    let common_friends = match context {
        None => 0.0,
        Some(ctx) => common_friends_factor_localized(
            ctx.provider,
            ctx.consumer,
            &config.owner_config()?,
            ctx.friend_localities,
        )?,
    };

    let mut device_props = Vec::new();
    for (kind, attribute, value) in [
        (
            PropertyKind::Manufacturer,
            "device_brand",
            &answers.device_brand,
        ),
        (PropertyKind::Model, "device_model", &answers.device_model),
        (
            PropertyKind::OperatingSystem,
            "device_os",
            &answers.device_os,
        ),
    ] {
        let prop = tables
            .property(kind, value)
            .ok_or_else(|| Error::Encoding {
                attribute: attribute.to_string(),
                reason: format!("no reputation table entry for {kind} `{value}`"),
            })?;
        device_props.push(prop);
    }
    let device = DeviceDescriptor::new("encoded", device_props)?;
    let device_reputation = device_reputation_weighted(&device)?;

    let cap = config.max_concurrent_consumers;
    let concurrent = f64::from(answers.concurrent_consumers.min(cap)) / f64::from(cap);

    let reliability = match context {
        Some(ctx) => match ctx.ledger {
            Some(ledger) => service_reliability(ledger, config.reliability_mode),
            None => config.default_reliability,
        },
        None => config.default_reliability,
    };

    Ok(vec![
        social_relation,
        common_friends,
        answers.owner_reputation,
        device_reputation,
        answers.carrier_reputation,
        concurrent,
        reliability,
    ])
}

/// Encodes one response into a labeled sample with `Original` provenance.
pub fn encode_sample(
    response: &SurveyResponse,
    tables: &ReputationTables<f64>,
    config: &EncodingConfig,
    context: Option<&PairContext<'_>>,
) -> Result<Sample> {
    Ok(Sample {
        features: encode_features(&response.answers, tables, config, context)?,
        level: map_rating_to_level(response.answers.rating)?,
        provenance: Provenance::Original,
    })
}

/// Encodes consolidated survey responses into a dataset (survey defaults,
/// no pair context).
pub fn encode_dataset(
    responses: &[SurveyResponse],
    tables: &ReputationTables<f64>,
    config: &EncodingConfig,
) -> Result<Dataset> {
    let samples = responses
        .iter()
        .map(|r| encode_sample(r, tables, config, None))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(canonical_feature_names(), samples)
}

/// Inflates a dataset to `factor ×` its size by convex interpolation
/// between same-level sample pairs: every synthetic sample is
/// `λ·a + (1−λ)·b` with λ ∈ (0,1) and distinct parents a, b drawn
/// (seeded, uniformly) from the same trust level. Originals are retained,
/// so per-level counts scale by exactly `factor`.
pub fn interpolate(dataset: &Dataset, factor: usize, seed: u64) -> Result<Dataset> {
    if factor == 0 {
        return Err(Error::domain(
            "interpolation factor must be ≥ 1".to_string(),
        ));
    }
    if dataset.is_empty() {
        return Err(Error::domain(
            "cannot interpolate an empty dataset".to_string(),
        ));
    }
    let mut samples = dataset.samples.clone();
    if factor == 1 {
        return Dataset::new(dataset.feature_names.clone(), samples);
    }

    let mut strata: [Vec<usize>; 5] = Default::default();
    for (i, s) in dataset.samples.iter().enumerate() {
        strata[s.level.index()].push(i);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for (level_idx, stratum) in strata.iter().enumerate() {
        if stratum.is_empty() {
            continue;
        }
        let level = TrustLevel::from_index(level_idx)?;
        if stratum.len() < 2 {
            return Err(Error::Augmentation {
                level: level.to_string(),
                reason: format!(
                    "level has {} sample(s); interpolation needs at least 2",
                    stratum.len()
                ),
            });
        }
        for _ in 0..(factor - 1) * stratum.len() {
            let i = rng.random_range(0..stratum.len());
            let mut j = rng.random_range(0..stratum.len() - 1);
            if j >= i {
                j += 1;
            }
            let a = &dataset.samples[stratum[i]];
            let b = &dataset.samples[stratum[j]];
            let mut lambda: f64 = rng.random_range(0.0..1.0);
            if lambda == 0.0 {
                lambda = 0.5;
            }
            let features = a
                .features
                .iter()
                .zip(&b.features)
                .map(|(&fa, &fb)| lambda * fa + (1.0 - lambda) * fb)
                .collect();
            samples.push(Sample {
                features,
                level,
                provenance: Provenance::Interpolated,
            });
        }
    }
    Dataset::new(dataset.feature_names.clone(), samples)
}

/// Stratified train/test split. Within each trust level the samples are
/// shuffled (seeded) and allocated by the largest-remainder method, so
/// every stratum's train share is within one sample of proportional and
/// the global train size is exactly `round(train_fraction × n)`.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction.is_finite() && (0.0..=1.0).contains(&train_fraction)) {
        return Err(Error::domain(format!(
            "train_fraction must lie in [0,1]; got {train_fraction}"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::domain("cannot split an empty dataset".to_string()));
    }

    let mut strata: [Vec<usize>; 5] = Default::default();
    for (i, s) in dataset.samples.iter().enumerate() {
        strata[s.level.index()].push(i);
    }

    let train_total = (train_fraction * dataset.len() as f64).round() as usize;
    let mut alloc = [0usize; 5];
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0;
    for (idx, stratum) in strata.iter().enumerate() {
        let target = train_fraction * stratum.len() as f64;
        let base = target.floor() as usize;
        alloc[idx] = base.min(stratum.len());
        assigned += alloc[idx];
        remainders.push((idx, target - alloc[idx] as f64));
    }
    // Hand out the leftover slots by descending remainder (larger stratum,
    // then lower level index, break ties).
    remainders.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| strata[b.0].len().cmp(&strata[a.0].len()))
            .then_with(|| a.0.cmp(&b.0))
    });
    let mut leftover = train_total.saturating_sub(assigned);
    for (idx, _) in remainders {
        if leftover == 0 {
            break;
        }
        if alloc[idx] < strata[idx].len() {
            alloc[idx] += 1;
            leftover -= 1;
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut train_indices = Vec::new();
    let mut test_indices = Vec::new();
    for (idx, stratum) in strata.iter().enumerate() {
        let mut order = stratum.clone();
        order.shuffle(&mut rng);
        train_indices.extend_from_slice(&order[..alloc[idx]]);
        test_indices.extend_from_slice(&order[alloc[idx]..]);
    }
    train_indices.sort_unstable();
    test_indices.sort_unstable();

    let pick = |indices: &[usize]| -> Vec<Sample> {
        indices
            .iter()
            .map(|&i| dataset.samples[i].clone())
            .collect()
    };
    Ok((
        Dataset {
            feature_names: dataset.feature_names.clone(),
            samples: pick(&train_indices),
        },
        Dataset {
            feature_names: dataset.feature_names.clone(),
            samples: pick(&test_indices),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn answers(rating: u8, duration_s: f64) -> SurveyAnswers {
        SurveyAnswers {
            social_relation: "friend".to_string(),
            owner_reputation: 0.8,
            device_brand: "acme".to_string(),
            device_model: "m1".to_string(),
            device_os: "osx".to_string(),
            concurrent_consumers: 5,
            carrier_reputation: 0.6,
            rating,
            duration_s,
        }
    }

    fn response(survey: &str, worker: &str, rating: u8) -> SurveyResponse {
        SurveyResponse {
            survey_id: survey.to_string(),
            worker_id: worker.to_string(),
            answers: answers(rating, 120.0),
        }
    }

    fn tables() -> ReputationTables<f64> {
        let mut t = ReputationTables::new();
        t.insert(PropertyKind::Manufacturer, "acme", 0.9, 100)
            .unwrap();
        t.insert(PropertyKind::Model, "m1", 0.5, 300).unwrap();
        t.insert(PropertyKind::OperatingSystem, "osx", 0.7, 100)
            .unwrap();
        t
    }

    #[test]
    fn rating_bins_are_width_two() {
        let expected = [
            (1, TrustLevel::NotTrusted),
            (2, TrustLevel::NotTrusted),
            (3, TrustLevel::LowlyTrusted),
            (4, TrustLevel::LowlyTrusted),
            (5, TrustLevel::Neutral),
            (6, TrustLevel::Neutral),
            (7, TrustLevel::Trusted),
            (8, TrustLevel::Trusted),
            (9, TrustLevel::HighlyTrusted),
            (10, TrustLevel::HighlyTrusted),
        ];
        for (rating, level) in expected {
            assert_eq!(
                map_rating_to_level(rating).unwrap(),
                level,
                "rating {rating}"
            );
        }
        assert!(map_rating_to_level(0).is_err());
        assert!(map_rating_to_level(11).is_err());
    }

    #[test]
    fn survey_csv_parses_and_reports_rejects() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("survey.csv");
        let text = "\
survey_id,worker_id,social_relation,owner_reputation,device_brand,device_model,device_os,concurrent_consumers,carrier_reputation,rating,duration_s
s1,w1,friend,0.8,acme,m1,osx,5,0.6,7,120
s1,w2,none,0.2,acme,m1,osx,0,0.5,3,95.5
s1,w3,friend,0.8,acme,m1,osx,5,0.6,11,120
s1,w4,friend,1.5,acme,m1,osx,5,0.6,7,120
s1,w5,friend,abc,acme,m1,osx,5,0.6,7,120
s1,w6,friend,0.8,acme,m1,osx,5,0.6,7
";
        std::fs::write(&path, text).unwrap();
        let (responses, report) = parse_survey_csv(&path).unwrap();
        assert_eq!(report.accepted, 2);
        assert_eq!(responses.len(), 2);
        assert_eq!(responses[0].worker_id, "w1");
        assert_eq!(responses[1].answers.duration_s, 95.5);

        let lines: Vec<u64> = report.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![4, 5, 6, 7]);
        assert!(report.rejected[0].reason.contains("rating"));
        assert!(report.rejected[1].reason.contains("owner_reputation"));
        assert!(report.rejected[2].reason.contains("owner_reputation"));
        assert!(report.rejected[3].reason.contains("expected 11 fields"));
    }

    #[test]
    fn survey_header_mismatch_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(matches!(parse_survey_csv(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn survey_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let responses = vec![response("s1", "w1", 7), response("s2", "w2", 9)];
        write_survey_csv(&responses, &path).unwrap();
        let (parsed, report) = parse_survey_csv(&path).unwrap();
        assert_eq!(parsed, responses);
        assert!(report.rejected.is_empty());
    }

    #[test]
    fn duration_filter_keeps_inclusive_bounds() {
        let mut rs = Vec::new();
        for (worker, duration) in [
            ("a", 59.9),
            ("b", 60.0),
            ("c", 120.0),
            ("d", 300.0),
            ("e", 300.1),
        ] {
            let mut r = response("s", worker, 5);
            r.answers.duration_s = duration;
            rs.push(r);
        }
        let (kept, dropped) = filter_by_duration(rs, 60.0, 300.0).unwrap();
        let ids: Vec<&str> = kept.iter().map(|r| r.worker_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "c", "d"]);
        assert_eq!(dropped, 2);

        assert!(filter_by_duration(vec![], 300.0, 60.0).is_err());
        assert!(filter_by_duration(vec![], 0.0, 60.0).is_err());
    }

    #[test]
    fn consolidation_flags_outliers_and_picks_seeded() {
        // Clean group: five 4s and five 8s — every deviation is exactly 2,
        // which does not exceed the threshold.
        let mut rs: Vec<SurveyResponse> = (0..10)
            .map(|i| response("s1", &format!("w{i}"), if i < 5 { 4 } else { 8 }))
            .collect();
        // Outlier group: nine 5s and one 10 (mean 5.5, deviation 4.5).
        rs.extend((0..10).map(|i| response("s2", &format!("v{i}"), if i == 0 { 10 } else { 5 })));

        let (picked, report) = consolidate_answers(&rs, 10, 2.0, 42).unwrap();
        assert_eq!(report.groups_total, 2);
        assert_eq!(report.consolidated, 1);
        assert_eq!(report.flagged, vec!["s2".to_string()]);
        assert_eq!(picked.len(), 1);
        assert_eq!(picked[0].survey_id, "s1");
        assert!(picked[0].worker_id.starts_with('w'));

        let (again, _) = consolidate_answers(&rs, 10, 2.0, 42).unwrap();
        assert_eq!(picked, again, "same seed, same pick");
    }

    #[test]
    fn consolidation_validates_groups() {
        let rs: Vec<SurveyResponse> = (0..9)
            .map(|i| response("s1", &format!("w{i}"), 5))
            .collect();
        assert!(matches!(
            consolidate_answers(&rs, 10, 2.0, 1),
            Err(Error::Data(_))
        ));

        let mut dup: Vec<SurveyResponse> = (0..10)
            .map(|i| response("s1", &format!("w{}", i / 2), 5))
            .collect();
        dup.truncate(10);
        assert!(matches!(
            consolidate_answers(&dup, 10, 2.0, 1),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn relation_encoding_is_ordinal() {
        let cfg = EncodingConfig::default();
        assert_eq!(cfg.encode_relation("none").unwrap(), 0.0);
        assert_abs_diff_eq!(
            cfg.encode_relation("colleague").unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            cfg.encode_relation("friend").unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
        assert_eq!(cfg.encode_relation("family").unwrap(), 1.0);
        assert!(matches!(
            cfg.encode_relation("nemesis"),
            Err(Error::Encoding { attribute, .. }) if attribute == "social_relation"
        ));
    }

    #[test]
    fn encoding_config_is_validated() {
        let cfg = EncodingConfig {
            mu1: 0.9,
            ..EncodingConfig::default()
        };
        assert!(cfg.validate().is_err(), "mu sum");
        let mut cfg = EncodingConfig::default();
        cfg.relation_names.push("friend".to_string());
        assert!(cfg.validate().is_err(), "duplicate relation");
        let cfg = EncodingConfig {
            relation_names: vec!["none".to_string()],
            ..EncodingConfig::default()
        };
        assert!(cfg.validate().is_err(), "reserved name");
        let cfg = EncodingConfig {
            max_concurrent_consumers: 0,
            ..EncodingConfig::default()
        };
        assert!(cfg.validate().is_err(), "zero cap");
        assert!(EncodingConfig::default().validate().is_ok());
    }

    #[test]
    fn features_encode_in_canonical_order() {
        let cfg = EncodingConfig::default();
        let features = encode_features(&answers(7, 120.0), &tables(), &cfg, None).unwrap();
        assert_eq!(features.len(), FEATURE_COUNT);
        assert_abs_diff_eq!(features[0], 2.0 / 3.0, epsilon = 1e-15); // friend
        assert_eq!(features[1], 0.0); // no social graph in the survey path
        assert_eq!(features[2], 0.8); // owner reputation passthrough
                                      // Weighted device reputation: (0.9·100 + 0.5·300 + 0.7·100)/500.
        assert_abs_diff_eq!(features[3], 0.62, epsilon = 1e-12);
        assert_eq!(features[4], 0.6); // carrier passthrough
        assert_eq!(features[5], 0.5); // 5 of max 10
        assert_eq!(features[6], DEFAULT_RELIABILITY);
        assert!(features.iter().all(|f| (0.0..=1.0).contains(f)));

        let names = canonical_feature_names();
        assert_eq!(names.len(), FEATURE_COUNT);
        assert_eq!(names[0].to_string(), "owner.social_relation");
        assert_eq!(names[3].to_string(), "device.reputation");
        assert_eq!(names[6].to_string(), "service.reliability");
    }

    #[test]
    fn concurrent_consumers_clamp_at_the_cap() {
        let cfg = EncodingConfig::default();
        let mut a = answers(7, 120.0);
        a.concurrent_consumers = 0;
        assert_eq!(encode_features(&a, &tables(), &cfg, None).unwrap()[5], 0.0);
        a.concurrent_consumers = 15;
        assert_eq!(encode_features(&a, &tables(), &cfg, None).unwrap()[5], 1.0);
    }

    #[test]
    fn unknown_device_entries_fail_encoding() {
        let cfg = EncodingConfig::default();
        let mut a = answers(7, 120.0);
        a.device_model = "mystery".to_string();
        assert!(matches!(
            encode_features(&a, &tables(), &cfg, None),
            Err(Error::Encoding { attribute, .. }) if attribute == "device_model"
        ));
    }

    #[test]
    fn pair_context_upgrades_graph_and_ledger_features() {
        use crate::service::ReliabilityVector;

        let loc = |x, y| Locality::new(x, y).unwrap();
        let mut provider = SocialProfile::new("p", loc(1.0, 1.0), 3).unwrap();
        let mut consumer = SocialProfile::new("c", loc(0.5, 1.0), 3).unwrap();
        provider.add_friendship("f1", 3).unwrap();
        provider.add_friendship("f2", 1).unwrap();
        consumer.add_friendship("f1", 3).unwrap();
        consumer.add_friendship("f3", 2).unwrap();
        let mut localities = BTreeMap::new();
        // FF(p, f1) = 0.75, FF(c, f1) = 1.0 per the frozen owner example.
        localities.insert("f1".to_string(), loc(0.5, 1.0));

        let mut ledger = ReliabilityLedger::new();
        ledger
            .restore("c1", ReliabilityVector::new(vec![0.8]).unwrap(), 10.0, 10.0)
            .unwrap();
        ledger
            .restore("c2", ReliabilityVector::new(vec![0.6]).unwrap(), 20.0, 20.0)
            .unwrap();

        let ctx = PairContext {
            provider: &provider,
            consumer: &consumer,
            friend_localities: &localities,
            ledger: Some(&ledger),
        };
        let cfg = EncodingConfig::default();
        let features = encode_features(&answers(7, 120.0), &tables(), &cfg, Some(&ctx)).unwrap();
        assert_abs_diff_eq!(features[1], 0.875 / 3.0, epsilon = 1e-12);
        // Verbatim mode: (10·0.8 + 20·0.6)/20 = 1.0.
        assert_abs_diff_eq!(features[6], 1.0, epsilon = 1e-12);

        let cfg = EncodingConfig {
            reliability_mode: ReliabilityMode::DurationNormalized,
            ..EncodingConfig::default()
        };
        let features = encode_features(&answers(7, 120.0), &tables(), &cfg, Some(&ctx)).unwrap();
        assert_abs_diff_eq!(features[6], 2.0 / 3.0, epsilon = 1e-12);

        // A context without a ledger still falls back to the default.
        let ctx = PairContext {
            provider: &provider,
            consumer: &consumer,
            friend_localities: &localities,
            ledger: None,
        };
        let features = encode_features(&answers(7, 120.0), &tables(), &cfg, Some(&ctx)).unwrap();
        assert_eq!(features[6], DEFAULT_RELIABILITY);
    }

    #[test]
    fn encode_sample_carries_level_and_provenance() {
        let cfg = EncodingConfig::default();
        let sample = encode_sample(&response("s", "w", 9), &tables(), &cfg, None).unwrap();
        assert_eq!(sample.level, TrustLevel::HighlyTrusted);
        assert_eq!(sample.provenance, Provenance::Original);

        let ds = encode_dataset(&[response("s", "w", 9)], &tables(), &cfg).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.feature_names(), canonical_feature_names().as_slice());
    }

    fn toy_dataset(per_level: &[usize; 5]) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut samples = Vec::new();
        for (idx, &count) in per_level.iter().enumerate() {
            for _ in 0..count {
                samples.push(Sample {
                    features: (0..3).map(|_| rng.random_range(0.0..1.0)).collect(),
                    level: TrustLevel::from_index(idx).unwrap(),
                    provenance: Provenance::Original,
                });
            }
        }
        let names = vec![
            FeatureName::new(Perspective::Owner, "a"),
            FeatureName::new(Perspective::Device, "b"),
            FeatureName::new(Perspective::Service, "c"),
        ];
        Dataset::new(names, samples).unwrap()
    }

    #[test]
    fn dataset_csv_round_trips_byte_stable() {
        let ds = toy_dataset(&[2, 1, 3, 1, 2]);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        ds.to_csv(&p1).unwrap();
        let back = Dataset::from_csv(&p1).unwrap();
        assert_eq!(back, ds);
        back.to_csv(&p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "write→read→write is byte-stable"
        );
        assert_eq!(back.fingerprint(), ds.fingerprint());
    }

    #[test]
    fn projection_selects_named_columns() {
        let ds = toy_dataset(&[2, 0, 0, 0, 1]);
        let proj = ds.project(&[2, 0]).unwrap();
        assert_eq!(proj.feature_names()[0].to_string(), "service.c");
        assert_eq!(proj.feature_names()[1].to_string(), "owner.a");
        assert_eq!(proj.samples()[0].features[0], ds.samples()[0].features[2]);
        assert_eq!(proj.samples()[0].features[1], ds.samples()[0].features[0]);
        assert!(ds.project(&[]).is_err());
        assert!(ds.project(&[3]).is_err());
    }

    #[test]
    fn to_labeled_maps_levels_to_indices() {
        let ds = toy_dataset(&[1, 1, 1, 1, 1]);
        let set = ds.to_labeled().unwrap();
        assert_eq!(set.labels(), &[0, 1, 2, 3, 4]);
        assert_eq!(set.arity(), 3);
    }

    #[test]
    fn interpolation_scales_each_level_exactly() {
        let ds = toy_dataset(&[4, 0, 2, 6, 3]);
        let inflated = interpolate(&ds, 3, 5).unwrap();
        assert_eq!(inflated.len(), 3 * ds.len());
        let counts = inflated.level_counts();
        assert_eq!(counts, [12, 0, 6, 18, 9]);

        // Originals are retained verbatim as the prefix.
        assert_eq!(&inflated.samples()[..ds.len()], ds.samples());
        let synth = &inflated.samples()[ds.len()..];
        assert!(synth
            .iter()
            .all(|s| s.provenance == Provenance::Interpolated));
        assert!(synth
            .iter()
            .all(|s| s.features.iter().all(|f| (0.0..=1.0).contains(f))));

        assert_eq!(
            interpolate(&ds, 3, 5).unwrap(),
            inflated,
            "same seed, same synthesis"
        );
        assert_eq!(interpolate(&ds, 1, 5).unwrap(), ds);
        assert!(interpolate(&ds, 0, 5).is_err());
    }

    #[test]
    fn interpolation_rejects_singleton_levels() {
        let ds = toy_dataset(&[4, 1, 0, 0, 2]);
        match interpolate(&ds, 2, 5) {
            Err(Error::Augmentation { level, .. }) => assert_eq!(level, "LowlyTrusted"),
            other => panic!("expected an augmentation error, got {other:?}"),
        }
        // Factor 1 needs no synthesis, so singleton levels pass through.
        assert_eq!(interpolate(&ds, 1, 5).unwrap(), ds);
    }

    #[test]
    fn interpolated_samples_stay_in_the_stratum_hull() {
        let ds = toy_dataset(&[8, 0, 0, 0, 0]);
        let inflated = interpolate(&ds, 5, 77).unwrap();
        for dim in 0..3 {
            let values: Vec<f64> = ds.samples().iter().map(|s| s.features[dim]).collect();
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for s in &inflated.samples()[ds.len()..] {
                assert!(s.features[dim] >= min - 1e-12 && s.features[dim] <= max + 1e-12);
            }
        }
    }

    #[test]
    fn split_is_stratified_and_exact() {
        let ds = toy_dataset(&[2, 2, 2, 2, 2]);
        let (train, test) = split(&ds, 0.7, 1).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);
        for idx in 0..5 {
            let t = train.level_counts()[idx];
            assert!(
                (t as f64 - 0.7 * 2.0).abs() <= 1.0,
                "stratum {idx} train count {t} not within 1 of proportional"
            );
        }

        // The split partitions the dataset.
        let mut all: Vec<&Sample> = train.samples().iter().chain(test.samples()).collect();
        let mut orig: Vec<&Sample> = ds.samples().iter().collect();
        let key = |s: &&Sample| format!("{:?}", s);
        all.sort_by_key(key);
        orig.sort_by_key(key);
        assert_eq!(all, orig);

        let (t2, _) = split(&ds, 0.7, 1).unwrap();
        assert_eq!(train, t2, "same seed, same split");
        let (t3, _) = split(&ds, 0.7, 2).unwrap();
        assert_ne!(train, t3, "different seed shuffles differently");

        assert!(split(&ds, -0.1, 1).is_err());
        assert!(split(&ds, 1.1, 1).is_err());

        let (all_train, empty_test) = split(&ds, 1.0, 1).unwrap();
        assert_eq!(all_train.len(), 10);
        assert_eq!(empty_test.len(), 0);
    }

    proptest! {
        #[test]
        fn split_sizes_are_exact_and_stratified(
            counts in proptest::array::uniform5(0usize..40),
            fraction in 0.0f64..=1.0,
            seed in 0u64..1000,
        ) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let ds = toy_dataset(&counts);
            let (train, test) = split(&ds, fraction, seed).unwrap();
            prop_assert_eq!(train.len(), (fraction * ds.len() as f64).round() as usize);
            prop_assert_eq!(train.len() + test.len(), ds.len());
            let train_counts = train.level_counts();
            for (&got, &full) in train_counts.iter().zip(counts.iter()) {
                let target = fraction * full as f64;
                prop_assert!((got as f64 - target).abs() <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn interpolation_multiplies_counts(
            raw in proptest::array::uniform5(0usize..11),
            factor in 1usize..5,
            seed in 0u64..1000,
        ) {
            // Avoid singleton levels, which are a documented error.
            let counts = raw.map(|c| if c == 0 { 0 } else { c + 1 });
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let ds = toy_dataset(&counts);
            let inflated = interpolate(&ds, factor, seed).unwrap();
            prop_assert_eq!(inflated.len(), factor * ds.len());
            let scaled: Vec<usize> = counts.iter().map(|c| c * factor).collect();
            prop_assert_eq!(inflated.level_counts().to_vec(), scaled);
        }
    }
}
