//! Device-perspective trust attribute.
//!
//! A device is described by a set of properties (manufacturer, operating
//! system, model, ...), each carrying a reputation in `[0,1]` and a
//! popularity count. The device reputation aggregates property reputations
//! either uniformly or weighted by popularity; reputation/popularity data
//! comes from CSV tables keyed by property kind and value name.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The recognized device property kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    Manufacturer,
    OperatingSystem,
    Model,
    DeviceType,
    Carrier,
}

impl PropertyKind {
    pub const ALL: [PropertyKind; 5] = [
        PropertyKind::Manufacturer,
        PropertyKind::OperatingSystem,
        PropertyKind::Model,
        PropertyKind::DeviceType,
        PropertyKind::Carrier,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PropertyKind::Manufacturer => "manufacturer",
            PropertyKind::OperatingSystem => "operating_system",
            PropertyKind::Model => "model",
            PropertyKind::DeviceType => "device_type",
            PropertyKind::Carrier => "carrier",
        }
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropertyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PropertyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::schema(format!("unknown property kind `{s}`")))
    }
}

/// A single device property with its reputation and popularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceProperty<F> {
    pub kind: PropertyKind,
    /// Reputation of this property value, in `[0,1]`.
    pub reputation: F,
    /// How many devices carry this property value; at least 1.
    pub popularity: u32,
}

impl<F: Scalar> DeviceProperty<F> {
    pub fn new(kind: PropertyKind, reputation: F, popularity: u32) -> Result<Self> {
        if !(reputation >= F::zero() && reputation <= F::one()) {
            return Err(Error::domain(format!(
                "property reputation {reputation} outside [0,1] for kind `{kind}`"
            )));
        }
        if popularity < 1 {
            return Err(Error::domain(format!(
                "property popularity must be ≥ 1 for kind `{kind}`"
            )));
        }
        Ok(DeviceProperty {
            kind,
            reputation,
            popularity,
        })
    }
}

/// A device and the properties its reputation is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDescriptor<F> {
    device_id: String,
    properties: Vec<DeviceProperty<F>>,
}

impl<F: Scalar> DeviceDescriptor<F> {
    /// Validates non-emptiness, per-property ranges, and kind uniqueness.
    pub fn new(device_id: impl Into<String>, properties: Vec<DeviceProperty<F>>) -> Result<Self> {
        let device_id = device_id.into();
        if properties.is_empty() {
            return Err(Error::domain(format!(
                "device `{device_id}` has no properties carrying reputations"
            )));
        }
        let mut seen = Vec::with_capacity(properties.len());
        for p in &properties {
            DeviceProperty::new(p.kind, p.reputation, p.popularity)?;
            if seen.contains(&p.kind) {
                return Err(Error::domain(format!(
                    "device `{device_id}` lists kind `{}` more than once",
                    p.kind
                )));
            }
            seen.push(p.kind);
        }
        Ok(DeviceDescriptor {
            device_id,
            properties,
        })
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    pub fn properties(&self) -> &[DeviceProperty<F>] {
        &self.properties
    }
}

/// Uniform device reputation: the arithmetic mean of property reputations.
pub fn device_reputation_uniform<F: Scalar>(d: &DeviceDescriptor<F>) -> Result<F> {
    if d.properties.is_empty() {
        return Err(Error::domain(format!(
            "device `{}` has an empty property set",
            d.device_id
        )));
    }
    let sum: F = d.properties.iter().map(|p| p.reputation).sum();
    Ok(sum / F::from(d.properties.len()).unwrap())
}

/// Popularity-weighted device reputation: `Σ R_p·Pop_p / Σ Pop_p`.
///
/// This is the variant used by default in feature encoding.
pub fn device_reputation_weighted<F: Scalar>(d: &DeviceDescriptor<F>) -> Result<F> {
    if d.properties.is_empty() {
        return Err(Error::domain(format!(
            "device `{}` has an empty property set",
            d.device_id
        )));
    }
    let mut num = F::zero();
    let mut den = F::zero();
    for p in &d.properties {
        let pop = F::from(p.popularity).unwrap();
        num = num + p.reputation * pop;
        den = den + pop;
    }
    Ok(num / den)
}

/// Reputation and popularity for one property value, as stored in the
/// reputation tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableEntry<F> {
    pub reputation: F,
    pub popularity: u32,
}

/// One row of the reputation table CSV
/// (`kind,value_name,reputation,popularity`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow<F> {
    pub kind: PropertyKind,
    pub value_name: String,
    pub reputation: F,
    pub popularity: u32,
}

/// Reputation/popularity lookup tables keyed by `(kind, value_name)`.
///
/// Values are kept sorted so serialization (CSV or JSON) is byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TableRow<F>>", into = "Vec<TableRow<F>>")]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
pub struct ReputationTables<F: Scalar> {
    rows: BTreeMap<(PropertyKind, String), TableEntry<F>>,
}

impl<F: Scalar> Default for ReputationTables<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ReputationTables<F> {
    pub fn new() -> Self {
        ReputationTables {
            rows: BTreeMap::new(),
        }
    }

    /// Inserts or replaces the entry for `(kind, value_name)`.
    pub fn insert(
        &mut self,
        kind: PropertyKind,
        value_name: impl Into<String>,
        reputation: F,
        popularity: u32,
    ) -> Result<()> {
        // Reuse the property validation for the range checks.
        DeviceProperty::new(kind, reputation, popularity)?;
        self.rows.insert(
            (kind, value_name.into()),
            TableEntry {
                reputation,
                popularity,
            },
        );
        Ok(())
    }

    pub fn get(&self, kind: PropertyKind, value_name: &str) -> Option<&TableEntry<F>> {
        self.rows.get(&(kind, value_name.to_string()))
    }

    /// Resolves a `(kind, value)` pair into a ready-made property.
    pub fn property(&self, kind: PropertyKind, value_name: &str) -> Option<DeviceProperty<F>> {
        self.get(kind, value_name).map(|e| DeviceProperty {
            kind,
            reputation: e.reputation,
            popularity: e.popularity,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = TableRow<F>> + '_ {
        self.rows.iter().map(|((kind, name), entry)| TableRow {
            kind: *kind,
            value_name: name.clone(),
            reputation: entry.reputation,
            popularity: entry.popularity,
        })
    }

    /// Reads tables from the `kind,value_name,reputation,popularity` CSV.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut tables = ReputationTables::new();
        for record in reader.deserialize() {
            let row: TableRow<F> = record?;
            tables.insert(row.kind, row.value_name, row.reputation, row.popularity)?;
        }
        Ok(tables)
    }

    /// Writes tables in the CSV schema, rows sorted by `(kind, value_name)`.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        for row in self.iter() {
            writer.serialize(row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

impl<F: Scalar> TryFrom<Vec<TableRow<F>>> for ReputationTables<F> {
    type Error = Error;

    fn try_from(rows: Vec<TableRow<F>>) -> Result<Self> {
        let mut tables = ReputationTables::new();
        for row in rows {
            tables.insert(row.kind, row.value_name, row.reputation, row.popularity)?;
        }
        Ok(tables)
    }
}

impl<F: Scalar> From<ReputationTables<F>> for Vec<TableRow<F>> {
    fn from(tables: ReputationTables<F>) -> Self {
        tables.iter().collect()
    }
}
