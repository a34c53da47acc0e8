//! Trust assessment for crowdsourced IoT services.
//!
//! The crate is organized around three trust perspectives — the service
//! owner's social standing, the device's reputation, and the service's
//! observed reliability — whose attributes feed a from-scratch feedforward
//! neural network that assigns one of five trust levels with a softmax
//! confidence. Around that core sit the survey data pipeline (parsing,
//! quality filters, encoding, interpolation, splitting), evaluation
//! harnesses for the experiment suites, and a deterministic simulator that
//! generates labeled environments end to end.
//!
//! The numeric core (perspectives and model) is generic over the scalar
//! type via [`Scalar`]; the pipeline modules and the aliases below fix it
//! to `f64`.

pub mod dataset;
pub mod device;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod owner;
pub mod scalar;
pub mod service;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Locality over the default `f64` scalar.
pub type Locality = owner::Locality<f64>;
/// Social profile over the default `f64` scalar.
pub type SocialProfile = owner::SocialProfile<f64>;
/// Owner-perspective configuration over the default `f64` scalar.
pub type OwnerConfig = owner::OwnerConfig<f64>;
/// Device descriptor over the default `f64` scalar.
pub type DeviceDescriptor = device::DeviceDescriptor<f64>;
/// Reputation tables over the default `f64` scalar.
pub type ReputationTables = device::ReputationTables<f64>;
/// Claim vector over the default `f64` scalar.
pub type ClaimVector = service::ClaimVector<f64>;
/// Reliability vector over the default `f64` scalar.
pub type ReliabilityVector = service::ReliabilityVector<f64>;
/// Per-service reliability ledger over the default `f64` scalar.
pub type ReliabilityLedger = service::ReliabilityLedger<f64>;
/// Ledger store over the default `f64` scalar.
pub type LedgerStore = service::LedgerStore<f64>;
/// Trust network over the default `f64` scalar.
pub type Network = model::NetworkParameters<f64>;
/// Trust assessment over the default `f64` scalar.
pub type Assessment = model::TrustAssessment<f64>;
/// Labeled training set over the default `f64` scalar.
pub type TrainingSet = model::LabeledSet<f64>;
