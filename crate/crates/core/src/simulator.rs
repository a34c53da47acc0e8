//! Deterministic synthetic IoT crowdsourcing environments.
//!
//! Generates a seeded social graph with device assignments and service
//! offerings, runs provisioning episodes in which consumers observe how
//! honestly each service fulfills its broadcast claims, and emits labeled
//! datasets whose ground truth follows a configurable latent rule — a
//! stand-in for survey data when none is available.
//!
//! Everything flows through the public constructors of the owner, device,
//! service, and dataset modules, so emitted artifacts obey the same
//! invariants as ingested ones. Three independent RNG streams (population,
//! episodes, emission) keep each phase reproducible on its own.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    canonical_feature_names, encode_features, map_rating_to_level, Dataset, EncodingConfig,
    PairContext, Provenance, Sample, FEATURE_COUNT, RELATION_NONE,
};
use crate::error::{Error, Result};
use crate::model::TrustLevel;
use crate::owner::{normalize_localities, Locality, SocialProfile};
use crate::service::{ClaimEntry, ClaimVector, LedgerStore};

/// One named catalog value with its crowdsourced standing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub reputation: f64,
    pub popularity: u32,
}

impl CatalogEntry {
    pub fn new(name: impl Into<String>, reputation: f64, popularity: u32) -> Self {
        CatalogEntry {
            name: name.into(),
            reputation,
            popularity,
        }
    }
}

/// Device property pools devices are assembled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Catalog {
    pub manufacturers: Vec<CatalogEntry>,
    pub models: Vec<CatalogEntry>,
    pub operating_systems: Vec<CatalogEntry>,
    pub carriers: Vec<CatalogEntry>,
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog {
            manufacturers: vec![
                CatalogEntry::new("aster", 0.9, 400),
                CatalogEntry::new("briar", 0.6, 250),
                CatalogEntry::new("cedar", 0.35, 150),
            ],
            models: vec![
                CatalogEntry::new("a1", 0.8, 300),
                CatalogEntry::new("b2", 0.55, 200),
                CatalogEntry::new("c3", 0.3, 100),
            ],
            operating_systems: vec![
                CatalogEntry::new("helios", 0.85, 500),
                CatalogEntry::new("kronos", 0.5, 200),
            ],
            carriers: vec![
                CatalogEntry::new("north", 0.9, 350),
                CatalogEntry::new("east", 0.6, 300),
                CatalogEntry::new("west", 0.3, 100),
            ],
        }
    }
}

impl Catalog {
    fn pools(&self) -> [(&'static str, &[CatalogEntry]); 4] {
        [
            ("manufacturers", &self.manufacturers),
            ("models", &self.models),
            ("operating_systems", &self.operating_systems),
            ("carriers", &self.carriers),
        ]
    }

    fn validate(&self) -> Result<()> {
        for (pool, entries) in self.pools() {
            if entries.is_empty() {
                return Err(Error::domain(format!("catalog pool `{pool}` is empty")));
            }
            for e in entries {
                if e.name.trim().is_empty() {
                    return Err(Error::domain(format!(
                        "catalog pool `{pool}` has an unnamed entry"
                    )));
                }
                if !(0.0..=1.0).contains(&e.reputation) || !e.reputation.is_finite() {
                    return Err(Error::domain(format!(
                        "catalog entry `{}` reputation {} outside [0,1]",
                        e.name, e.reputation
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The hidden labeling rule: a linear score over the encoded features (in
/// canonical order) mapped through the rating bins, plus adjacent-level
/// label noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentRule {
    /// One weight per canonical feature.
    pub weights: Vec<f64>,
    /// Probability a label flips to a random adjacent level.
    pub noise_rate: f64,
}

impl Default for LatentRule {
    fn default() -> Self {
        LatentRule {
            weights: vec![1.0; FEATURE_COUNT],
            noise_rate: 0.0,
        }
    }
}

/// Full simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    /// Number of owners (each brings one device and one service).
    pub population: usize,
    /// Relation strength ceiling K; must match the encoding's relation
    /// name list.
    pub relation_types: u32,
    /// Probability that any unordered owner pair are friends.
    pub friendship_density: f64,
    pub catalog: Catalog,
    /// Provider honesty is drawn uniformly from this range.
    pub honesty_min: f64,
    pub honesty_max: f64,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub consumers_per_episode: usize,
    /// Reliability accumulation weight (Eq. 12).
    pub gamma: f64,
    /// Amplitude of the per-step fulfillment noise added to honesty.
    pub observation_noise: f64,
    pub latent: LatentRule,
    /// Number of (provider, consumer) samples to emit.
    pub samples: usize,
    pub encoding: EncodingConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            population: 50,
            relation_types: 3,
            friendship_density: 0.1,
            catalog: Catalog::default(),
            honesty_min: 0.1,
            honesty_max: 1.0,
            episodes: 100,
            steps_per_episode: 5,
            consumers_per_episode: 3,
            gamma: 0.5,
            observation_noise: 0.05,
            latent: LatentRule::default(),
            samples: 1000,
            encoding: EncodingConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::domain(
                "population must be ≥ 2 (a provider needs a distinct consumer)".to_string(),
            ));
        }
        if self.relation_types == 0 {
            return Err(Error::domain("relation_types must be ≥ 1".to_string()));
        }
        self.encoding.validate()?;
        if self.encoding.relation_names.len() != self.relation_types as usize {
            return Err(Error::domain(format!(
                "relation_types {} does not match the {} encoding relation names",
                self.relation_types,
                self.encoding.relation_names.len()
            )));
        }
        for (name, p) in [
            ("friendship_density", self.friendship_density),
            ("gamma", self.gamma),
            ("observation_noise", self.observation_noise),
            ("latent.noise_rate", self.latent.noise_rate),
        ] {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::domain(format!("{name} {p} outside [0,1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.honesty_min)
            || !(0.0..=1.0).contains(&self.honesty_max)
            || self.honesty_min > self.honesty_max
        {
            return Err(Error::domain(format!(
                "honesty range [{}, {}] must be an ordered subrange of [0,1]",
                self.honesty_min, self.honesty_max
            )));
        }
        if self.episodes > 0 && (self.steps_per_episode == 0 || self.consumers_per_episode == 0) {
            return Err(Error::domain(
                "episodes need steps_per_episode ≥ 1 and consumers_per_episode ≥ 1".to_string(),
            ));
        }
        if self.samples == 0 {
            return Err(Error::domain("samples must be ≥ 1".to_string()));
        }
        if self.latent.weights.len() != FEATURE_COUNT {
            return Err(Error::domain(format!(
                "latent rule needs {FEATURE_COUNT} weights (canonical feature order), got {}",
                self.latent.weights.len()
            )));
        }
        if self.latent.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::domain("latent weights must be finite".to_string()));
        }
        self.catalog.validate()
    }
}

/// A concrete device: which catalog value each property kind took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceAssignment {
    pub device_id: String,
    pub manufacturer: String,
    pub model: String,
    pub operating_system: String,
    pub carrier: String,
}

/// One provider's advertised service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceOffering {
    pub service_id: String,
    pub provider_id: String,
    pub device_id: String,
    pub claims: ClaimVector<f64>,
    /// Fraction of the broadcast actually delivered, before noise.
    pub honesty: f64,
}

/// A complete generated environment, persistable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub relation_types: u32,
    pub profiles: BTreeMap<String, SocialProfile<f64>>,
    pub owner_reputation: BTreeMap<String, f64>,
    pub devices: BTreeMap<String, DeviceAssignment>,
    pub tables: crate::device::ReputationTables<f64>,
    pub services: BTreeMap<String, ServiceOffering>,
    pub ledgers: LedgerStore<f64>,
    /// Simulation clock; episodes advance it monotonically.
    pub clock_unix: f64,
}

impl Scenario {
    /// Referential integrity: every service points at an existing profile
    /// and device, and every device's property values resolve in the
    /// reputation tables.
    pub fn validate(&self) -> Result<()> {
        use crate::device::PropertyKind;
        for (id, svc) in &self.services {
            if !self.profiles.contains_key(&svc.provider_id) {
                return Err(Error::contract(format!(
                    "service `{id}` references unknown provider `{}`",
                    svc.provider_id
                )));
            }
            if !self.devices.contains_key(&svc.device_id) {
                return Err(Error::contract(format!(
                    "service `{id}` references unknown device `{}`",
                    svc.device_id
                )));
            }
        }
        for (id, d) in &self.devices {
            for (kind, name) in [
                (PropertyKind::Manufacturer, &d.manufacturer),
                (PropertyKind::Model, &d.model),
                (PropertyKind::OperatingSystem, &d.operating_system),
                (PropertyKind::Carrier, &d.carrier),
            ] {
                if self.tables.property(kind, name).is_none() {
                    return Err(Error::contract(format!(
                        "device `{id}` references `{name}` missing from the {kind:?} table"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let scenario: Scenario = serde_json::from_reader(file)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Localities of every owner, keyed by id — the friend-locality table
    /// used for localized common-friend factors.
    pub fn localities(&self) -> BTreeMap<String, Locality<f64>> {
        self.profiles
            .iter()
            .map(|(id, p)| (id.clone(), p.locality().clone()))
            .collect()
    }
}

fn owner_id(i: usize) -> String {
    format!("owner-{i:04}")
}

/// Builds a seeded scenario: normalized localities, a symmetric friendship
/// graph, catalog-backed devices, and one service offering per owner.
pub fn generate_population(cfg: &SimConfig) -> Result<Scenario> {
    use crate::device::PropertyKind;
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let n = cfg.population;

    let raw: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)))
        .collect();
    let localities = normalize_localities(&raw)?;

    let mut profiles: BTreeMap<String, SocialProfile<f64>> = BTreeMap::new();
    for (i, locality) in localities.into_iter().enumerate() {
        profiles.insert(
            owner_id(i),
            SocialProfile::new(owner_id(i), locality, cfg.relation_types)?,
        );
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(cfg.friendship_density) {
                let strength = rng.random_range(1..=cfg.relation_types);
                let (a, b) = (owner_id(i), owner_id(j));
                profiles.get_mut(&a).unwrap().add_friendship(&b, strength)?;
                profiles.get_mut(&b).unwrap().add_friendship(&a, strength)?;
            }
        }
    }

    let owner_reputation: BTreeMap<String, f64> = (0..n)
        .map(|i| (owner_id(i), rng.random_range(0.0..=1.0)))
        .collect();

    let mut tables = crate::device::ReputationTables::new();
    for (kind, pool) in [
        (PropertyKind::Manufacturer, &cfg.catalog.manufacturers),
        (PropertyKind::Model, &cfg.catalog.models),
        (
            PropertyKind::OperatingSystem,
            &cfg.catalog.operating_systems,
        ),
        (PropertyKind::Carrier, &cfg.catalog.carriers),
    ] {
        for e in pool {
            tables.insert(kind, &e.name, e.reputation, e.popularity)?;
        }
    }

    let pick = |rng: &mut ChaCha12Rng, pool: &[CatalogEntry]| -> String {
        pool[rng.random_range(0..pool.len())].name.clone()
    };
    let mut devices = BTreeMap::new();
    let mut services = BTreeMap::new();
    let claims = ClaimVector::new(vec![
        ClaimEntry {
            name: "cores".to_string(),
            value: 4.0,
            unit: "count".to_string(),
        },
        ClaimEntry {
            name: "ram".to_string(),
            value: 8.0,
            unit: "GB".to_string(),
        },
        ClaimEntry {
            name: "bandwidth".to_string(),
            value: 100.0,
            unit: "Mbps".to_string(),
        },
    ])?;
    for i in 0..n {
        let device_id = format!("dev-{i:04}");
        devices.insert(
            device_id.clone(),
            DeviceAssignment {
                device_id: device_id.clone(),
                manufacturer: pick(&mut rng, &cfg.catalog.manufacturers),
                model: pick(&mut rng, &cfg.catalog.models),
                operating_system: pick(&mut rng, &cfg.catalog.operating_systems),
                carrier: pick(&mut rng, &cfg.catalog.carriers),
            },
        );
        let service_id = format!("svc-{i:04}");
        services.insert(
            service_id.clone(),
            ServiceOffering {
                service_id,
                provider_id: owner_id(i),
                device_id,
                claims: claims.clone(),
                honesty: rng.random_range(cfg.honesty_min..=cfg.honesty_max),
            },
        );
    }

    let scenario = Scenario {
        relation_types: cfg.relation_types,
        profiles,
        owner_reputation,
        devices,
        tables,
        services,
        ledgers: LedgerStore::new(),
        clock_unix: 1_700_000_000.0,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Runs one provisioning episode: each consumer observes `steps`
/// consumption steps of the service, with actual fulfillment sampled as
/// `broadcast × clamp(honesty + noise, 0, 1)`, folded into the service's
/// ledger.
pub fn run_episode(
    scenario: &mut Scenario,
    service_id: &str,
    consumer_ids: &[String],
    steps: usize,
    gamma: f64,
    noise: f64,
    rng: &mut ChaCha12Rng,
) -> Result<()> {
    let service = scenario
        .services
        .get(service_id)
        .ok_or_else(|| Error::contract(format!("unknown service `{service_id}`")))?
        .clone();
    if steps == 0 {
        return Err(Error::contract(
            "an episode needs at least one step".to_string(),
        ));
    }
    for consumer in consumer_ids {
        if !scenario.profiles.contains_key(consumer) {
            return Err(Error::contract(format!("unknown consumer `{consumer}`")));
        }
    }

    for consumer in consumer_ids {
        if scenario
            .ledgers
            .ledger_mut(service_id)
            .entry(consumer)
            .is_none()
        {
            let start = scenario.clock_unix;
            scenario
                .ledgers
                .ledger_mut(service_id)
                .begin_session(consumer, start)?;
        }
        for _ in 0..steps {
            scenario.clock_unix += rng.random_range(1.0..30.0);
            let wobble = if noise > 0.0 {
                rng.random_range(-noise..=noise)
            } else {
                0.0
            };
            let factor = (service.honesty + wobble).clamp(0.0, 1.0);
            let actual = service.claims.scaled(factor)?;
            let t = scenario.clock_unix;
            scenario.ledgers.ledger_mut(service_id).consumption_step(
                consumer,
                &service.claims,
                &actual,
                t,
                gamma,
            )?;
        }
    }
    Ok(())
}

/// Drives `cfg.episodes` episodes over a scenario: a uniformly chosen
/// service is consumed by a without-replacement sample of owners.
pub fn run_episodes(scenario: &mut Scenario, cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let service_ids: Vec<String> = scenario.services.keys().cloned().collect();
    let owner_ids: Vec<String> = scenario.profiles.keys().cloned().collect();
    if service_ids.is_empty() {
        return Err(Error::contract("scenario has no services".to_string()));
    }
    let take = cfg.consumers_per_episode.min(owner_ids.len());
    for _ in 0..cfg.episodes {
        let service_id = service_ids[rng.random_range(0..service_ids.len())].clone();
        let consumers: Vec<String> = rand::seq::index::sample(&mut rng, owner_ids.len(), take)
            .iter()
            .map(|i| owner_ids[i].clone())
            .collect();
        run_episode(
            scenario,
            &service_id,
            &consumers,
            cfg.steps_per_episode,
            cfg.gamma,
            cfg.observation_noise,
            &mut rng,
        )?;
    }
    Ok(())
}

/// Applies the latent rule to a feature batch: each sample's weighted sum
/// is min-max stretched over the batch (a constant batch maps to the
/// midpoint), scaled onto the 1–10 rating range, and binned to a level.
///
/// The stretch guarantees both rating extremes occur, so all five levels
/// stay reachable; raising a positively weighted feature never lowers that
/// sample's own level.
pub fn latent_levels(features: &[Vec<f64>], weights: &[f64]) -> Result<Vec<TrustLevel>> {
    if features.is_empty() {
        return Err(Error::domain(
            "latent rule needs at least one sample".to_string(),
        ));
    }
    let scores: Vec<f64> = features
        .iter()
        .map(|x| {
            if x.len() != weights.len() {
                return Err(Error::contract(format!(
                    "sample arity {} does not match {} latent weights",
                    x.len(),
                    weights.len()
                )));
            }
            Ok(x.iter().zip(weights).map(|(a, w)| a * w).sum())
        })
        .collect::<Result<_>>()?;
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .map(|&s| {
            let stretched = if max > min {
                (s - min) / (max - min)
            } else {
                0.5
            };
            let rating = 1 + (9.0 * stretched).round() as u8;
            map_rating_to_level(rating)
        })
        .collect()
}

/// Emits a labeled dataset: sampled (service, consumer) pairs are encoded
/// with live pair context (social graph + ledgers) and labeled by the
/// latent rule, with adjacent-level noise at the configured rate.
pub fn emit_dataset(scenario: &Scenario, cfg: &SimConfig) -> Result<Dataset> {
    use crate::device::PropertyKind;
    cfg.validate()?;
    scenario.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);

    let localities = scenario.localities();
    let service_ids: Vec<&String> = scenario.services.keys().collect();
    let owner_ids: Vec<&String> = scenario.profiles.keys().collect();

    let mut features = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let service = &scenario.services[service_ids[rng.random_range(0..service_ids.len())]];
        let consumer_id = loop {
            let candidate = owner_ids[rng.random_range(0..owner_ids.len())];
            if *candidate != service.provider_id {
                break candidate;
            }
        };
        let device = &scenario.devices[&service.device_id];
        let carrier_rep = scenario
            .tables
            .property(PropertyKind::Carrier, &device.carrier)
            .ok_or_else(|| {
                Error::data(format!("carrier `{}` missing from tables", device.carrier))
            })?
            .reputation;

        let provider = &scenario.profiles[&service.provider_id];
        let consumer = &scenario.profiles[consumer_id.as_str()];
        let relation = match consumer.strength_to(&service.provider_id) {
            Some(s) => cfg.encoding.relation_names[(s - 1) as usize].clone(),
            None => RELATION_NONE.to_string(),
        };
        let answers = crate::dataset::SurveyAnswers {
            social_relation: relation,
            owner_reputation: scenario.owner_reputation[&service.provider_id],
            device_brand: device.manufacturer.clone(),
            device_model: device.model.clone(),
            device_os: device.operating_system.clone(),
            concurrent_consumers: rng.random_range(0..=cfg.encoding.max_concurrent_consumers),
            carrier_reputation: carrier_rep,
            rating: 5,
            duration_s: 120.0,
        };
        let context = PairContext {
            provider,
            consumer,
            friend_localities: &localities,
            ledger: scenario.ledgers.ledger(&service.service_id),
        };
        features.push(encode_features(
            &answers,
            &scenario.tables,
            &cfg.encoding,
            Some(&context),
        )?);
    }

    let mut levels = latent_levels(&features, &cfg.latent.weights)?;
    if cfg.latent.noise_rate > 0.0 {
        for level in &mut levels {
            if rng.random_bool(cfg.latent.noise_rate) {
                let idx = level.index();
                let flipped = match idx {
                    0 => 1,
                    4 => 3,
                    _ => {
                        if rng.random_bool(0.5) {
                            idx + 1
                        } else {
                            idx - 1
                        }
                    }
                };
                *level = TrustLevel::from_index(flipped)?;
            }
        }
    }

    let samples = features
        .into_iter()
        .zip(levels)
        .map(|(features, level)| Sample {
            features,
            level,
            provenance: Provenance::Original,
        })
        .collect();
    Dataset::new(canonical_feature_names(), samples)
}

/// One-shot pipeline: generate a population, run the configured episodes,
/// emit the labeled dataset. Returns both the scenario and the dataset so
/// callers can persist either.
pub fn simulate_dataset(cfg: &SimConfig) -> Result<(Scenario, Dataset)> {
    let mut scenario = generate_population(cfg)?;
    run_episodes(&mut scenario, cfg)?;
    let dataset = emit_dataset(&scenario, cfg)?;
    Ok((scenario, dataset))
}
