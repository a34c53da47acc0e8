//! Owner-perspective trust attributes.
//!
//! Implements the social side of the trust assessment: the relationship
//! factor between a service provider and consumer, the common-friends
//! factor over their social circles, and the locality-weighted variants of
//! both, where a face-to-face probability derived from normalized
//! coordinates damps ties between users who are unlikely to have met.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower bound of normalized coordinates. Strictly positive so the
/// face-to-face denominators are always defined.
pub const COORD_MIN: f64 = 0.01;
/// Upper bound of normalized coordinates.
pub const COORD_MAX: f64 = 1.0;

/// A user's normalized spatial position.
///
/// Raw coordinates (longitude/latitude, venue grid, ...) are min-max
/// normalized into `[COORD_MIN, COORD_MAX]` at ingestion — see
/// [`normalize_localities`] — which keeps the face-to-face factor bounded
/// in `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Locality<F> {
    x: F,
    y: F,
    /// Optional human-readable place name; carried through serialization
    /// but ignored by all math.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl<F: Scalar> Locality<F> {
    /// Builds a locality, enforcing the normalized-coordinate range.
    pub fn new(x: F, y: F) -> Result<Self> {
        let lo = F::from_f64_lossy(COORD_MIN);
        let hi = F::from_f64_lossy(COORD_MAX);
        if !(x >= lo && x <= hi && y >= lo && y <= hi) {
            return Err(Error::domain(format!(
                "locality ({x}, {y}) outside normalized range [{COORD_MIN}, {COORD_MAX}]"
            )));
        }
        Ok(Locality { x, y, label: None })
    }

    /// Same as [`Locality::new`] with a human-readable label attached.
    pub fn with_label(x: F, y: F, label: impl Into<String>) -> Result<Self> {
        let mut loc = Self::new(x, y)?;
        loc.label = Some(label.into());
        Ok(loc)
    }

    /// Normalized x coordinate.
    pub fn x(&self) -> F {
        self.x
    }

    /// Normalized y coordinate.
    pub fn y(&self) -> F {
        self.y
    }
}

/// Min-max normalizes raw coordinate pairs into the locality range.
///
/// Each axis is normalized independently. A degenerate axis (all raw
/// values identical) maps to the midpoint of the range; the face-to-face
/// factor treats equal coordinates as a zero per-axis term either way, so
/// the choice does not affect any downstream value.
pub fn normalize_localities<F: Scalar>(raw: &[(F, F)]) -> Result<Vec<Locality<F>>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    for (i, (x, y)) in raw.iter().enumerate() {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::data(format!(
                "raw locality #{i} has non-finite coordinates ({x}, {y})"
            )));
        }
    }

    let lo = F::from_f64_lossy(COORD_MIN);
    let hi = F::from_f64_lossy(COORD_MAX);
    let mid = F::from_f64_lossy((COORD_MIN + COORD_MAX) / 2.0);
    let span = hi - lo;

    let axis = |select: fn(&(F, F)) -> F| -> (F, F) {
        let mut min = select(&raw[0]);
        let mut max = min;
        for pair in raw.iter() {
            let v = select(pair);
            min = min.min(v);
            max = max.max(v);
        }
        (min, max)
    };
    let (min_x, max_x) = axis(|p| p.0);
    let (min_y, max_y) = axis(|p| p.1);

    let scale = |v: F, min: F, max: F| -> F {
        if max > min {
            lo + span * (v - min) / (max - min)
        } else {
            mid
        }
    };

    raw.iter()
        .map(|&(x, y)| Locality::new(scale(x, min_x, max_x), scale(y, min_y, max_y)))
        .collect()
}

/// A user's social circle: friendships with relation strengths, plus the
/// user's normalized locality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialProfile<F> {
    user_id: String,
    /// friend_id → relation strength in `[1, relation_types]`.
    friendships: BTreeMap<String, u32>,
    locality: Locality<F>,
    /// The profile's configured number of relation types (`K`).
    relation_types: u32,
}

impl<F: Scalar> SocialProfile<F> {
    /// Creates a friendless profile for `K = relation_types` relation types.
    pub fn new(
        user_id: impl Into<String>,
        locality: Locality<F>,
        relation_types: u32,
    ) -> Result<Self> {
        if relation_types < 1 {
            return Err(Error::domain("relation-type count K must be ≥ 1"));
        }
        Ok(SocialProfile {
            user_id: user_id.into(),
            friendships: BTreeMap::new(),
            locality,
            relation_types,
        })
    }

    /// Records a friendship with the given relation strength.
    ///
    /// Re-adding an existing friend overwrites the stored strength.
    pub fn add_friendship(&mut self, friend_id: impl Into<String>, strength: u32) -> Result<()> {
        let friend_id = friend_id.into();
        if friend_id == self.user_id {
            return Err(Error::contract(format!(
                "user `{}` cannot befriend themselves",
                self.user_id
            )));
        }
        if strength < 1 || strength > self.relation_types {
            return Err(Error::domain(format!(
                "relation strength {strength} outside [1, {}] for friend `{friend_id}`",
                self.relation_types
            )));
        }
        self.friendships.insert(friend_id, strength);
        Ok(())
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn locality(&self) -> &Locality<F> {
        &self.locality
    }

    /// The profile's configured `K`.
    pub fn relation_types(&self) -> u32 {
        self.relation_types
    }

    /// Relation strength toward `friend_id`, if any.
    pub fn strength_to(&self, friend_id: &str) -> Option<u32> {
        self.friendships.get(friend_id).copied()
    }

    /// Iterates over `(friend_id, strength)` pairs in lexicographic order.
    pub fn friendships(&self) -> impl Iterator<Item = (&str, u32)> {
        self.friendships.iter().map(|(id, &s)| (id.as_str(), s))
    }

    pub fn friend_count(&self) -> usize {
        self.friendships.len()
    }
}

/// Parameters of the owner-perspective formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OwnerConfig<F> {
    /// Number of relation types `K` (e.g. 3 for colleague/friend/family).
    relation_types: u32,
    /// Weight of the provider-side term in the common-friends factor.
    mu1: F,
    /// Weight of the consumer-side term; `mu1 + mu2 = 1`.
    mu2: F,
}

impl<F: Scalar> OwnerConfig<F> {
    /// Validates `K ≥ 1`, both weights in `[0,1]`, and `μ₁ + μ₂ = 1`.
    pub fn new(relation_types: u32, mu1: F, mu2: F) -> Result<Self> {
        if relation_types < 1 {
            return Err(Error::domain("relation-type count K must be ≥ 1"));
        }
        let zero = F::zero();
        let one = F::one();
        if !(mu1 >= zero && mu1 <= one && mu2 >= zero && mu2 <= one) {
            return Err(Error::domain(format!(
                "weighting factors must lie in [0,1]; got μ₁={mu1}, μ₂={mu2}"
            )));
        }
        if ((mu1 + mu2) - one).abs() > F::from_f64_lossy(1e-9) {
            return Err(Error::domain(format!(
                "weighting factors must sum to 1; got μ₁+μ₂={}",
                mu1 + mu2
            )));
        }
        Ok(OwnerConfig {
            relation_types,
            mu1,
            mu2,
        })
    }

    /// Equal-weight config (μ₁ = μ₂ = ½).
    pub fn balanced(relation_types: u32) -> Result<Self> {
        let half = F::from_f64_lossy(0.5);
        Self::new(relation_types, half, half)
    }

    pub fn relation_types(&self) -> u32 {
        self.relation_types
    }

    pub fn mu1(&self) -> F {
        self.mu1
    }

    pub fn mu2(&self) -> F {
        self.mu2
    }
}

/// Relationship factor `strn / K` between two users (Eq. 4 shape).
///
/// `strn` ranks the relation type from weakest (1) to strongest (`K`).
pub fn relationship_factor<F: Scalar>(strn: u32, k: u32) -> Result<F> {
    if k < 1 {
        return Err(Error::domain("relation-type count K must be ≥ 1"));
    }
    if strn < 1 || strn > k {
        return Err(Error::domain(format!(
            "relation strength {strn} outside [1, {k}]"
        )));
    }
    Ok(F::from(strn).unwrap() / F::from(k).unwrap())
}

/// Face-to-face factor: the probability two users have met, from the
/// normalized distance between their localities.
///
/// Computes `1 − ½(|uₓ−vₓ|/max(uₓ,vₓ) + |u_y−v_y|/max(u_y,v_y))`; a
/// per-axis term is 0 when both coordinates on that axis are equal.
pub fn face_to_face<F: Scalar>(u: &Locality<F>, v: &Locality<F>) -> F {
    let axis = |a: F, b: F| -> F {
        if a == b {
            F::zero()
        } else {
            (a - b).abs() / a.max(b)
        }
    };
    let half = F::from_f64_lossy(0.5);
    F::one() - half * (axis(u.x, v.x) + axis(u.y, v.y))
}

/// Relationship factor damped by the face-to-face probability of the two
/// endpoints: `(strn/K) · FF(loc_p, loc_c)`.
pub fn relationship_factor_localized<F: Scalar>(
    strn: u32,
    k: u32,
    loc_p: &Locality<F>,
    loc_c: &Locality<F>,
) -> Result<F> {
    Ok(relationship_factor::<F>(strn, k)? * face_to_face(loc_p, loc_c))
}

/// Common friends of `p` and `c` (intersection of their friend sets) and
/// the size of the union, the normalizer of the common-friends factor.
fn common_and_union<'a, F>(
    p: &'a SocialProfile<F>,
    c: &'a SocialProfile<F>,
) -> (Vec<&'a str>, usize) {
    let fp: BTreeSet<&str> = p.friendships.keys().map(String::as_str).collect();
    let fc: BTreeSet<&str> = c.friendships.keys().map(String::as_str).collect();
    let common = fp.intersection(&fc).copied().collect();
    let union = fp.union(&fc).count();
    (common, union)
}

/// Common-friends factor between a provider and a consumer.
///
/// Averages, over the union of both friend sets, the weighted relationship
/// factors both endpoints hold toward each *common* friend:
/// `(1/|F|) Σ_f [μ₁·strn(p,f)/K + μ₂·strn(c,f)/K]`. Returns 0 when the
/// users share no friends (including when both are friendless).
pub fn common_friends_factor<F: Scalar>(
    p: &SocialProfile<F>,
    c: &SocialProfile<F>,
    cfg: &OwnerConfig<F>,
) -> F {
    let (common, union) = common_and_union(p, c);
    if common.is_empty() || union == 0 {
        return F::zero();
    }
    let k = F::from(cfg.relation_types).unwrap();
    let mut sum = F::zero();
    for f in common {
        let sp = F::from(p.friendships[f]).unwrap() / k;
        let sc = F::from(c.friendships[f]).unwrap() / k;
        sum = sum + cfg.mu1 * sp + cfg.mu2 * sc;
    }
    sum / F::from(union).unwrap()
}

/// Locality-aware common-friends factor.
///
/// As [`common_friends_factor`], with each endpoint term additionally
/// weighted by the face-to-face factor between that endpoint and the
/// common friend. Every common friend must have a locality entry.
pub fn common_friends_factor_localized<F: Scalar>(
    p: &SocialProfile<F>,
    c: &SocialProfile<F>,
    cfg: &OwnerConfig<F>,
    localities: &BTreeMap<String, Locality<F>>,
) -> Result<F> {
    let (common, union) = common_and_union(p, c);
    if common.is_empty() || union == 0 {
        return Ok(F::zero());
    }
    let k = F::from(cfg.relation_types).unwrap();
    let mut sum = F::zero();
    for f in common {
        let loc_f = localities
            .get(f)
            .ok_or_else(|| Error::data(format!("no locality recorded for common friend `{f}`")))?;
        let sp = F::from(p.friendships[f]).unwrap() / k;
        let sc = F::from(c.friendships[f]).unwrap() / k;
        sum = sum
            + cfg.mu1 * sp * face_to_face(&p.locality, loc_f)
            + cfg.mu2 * sc * face_to_face(&c.locality, loc_f);
    }
    Ok(sum / F::from(union).unwrap())
}

/// One row of the social edge list CSV (`user_id,friend_id,strength`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialEdge {
    pub user_id: String,
    pub friend_id: String,
    pub strength: u32,
}

/// One row of the locality CSV (`user_id,raw_x,raw_y`), prior to
/// normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLocality {
    pub user_id: String,
    pub raw_x: f64,
    pub raw_y: f64,
}

/// Reads the social edge list CSV.
pub fn load_edges_csv(path: impl AsRef<Path>) -> Result<Vec<SocialEdge>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut edges = Vec::new();
    for record in reader.deserialize() {
        edges.push(record?);
    }
    Ok(edges)
}

/// Reads the raw locality CSV.
pub fn load_localities_csv(path: impl AsRef<Path>) -> Result<Vec<RawLocality>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

/// Builds normalized social profiles from an edge list and raw localities.
///
/// The edge list is treated as undirected: each row records the strength
/// for both directions, and two rows for the same pair must agree. Every
/// user appearing in an edge needs a locality row; users with a locality
/// but no edges become friendless profiles.
pub fn build_profiles(
    edges: &[SocialEdge],
    localities: &[RawLocality],
    relation_types: u32,
) -> Result<BTreeMap<String, SocialProfile<f64>>> {
    let raw: Vec<(f64, f64)> = localities.iter().map(|l| (l.raw_x, l.raw_y)).collect();
    let normalized = normalize_localities(&raw)?;

    let mut profiles: BTreeMap<String, SocialProfile<f64>> = BTreeMap::new();
    for (row, loc) in localities.iter().zip(normalized) {
        if profiles.contains_key(&row.user_id) {
            return Err(Error::data(format!(
                "duplicate locality row for user `{}`",
                row.user_id
            )));
        }
        let profile = SocialProfile::new(&row.user_id, loc, relation_types)?;
        profiles.insert(row.user_id.clone(), profile);
    }

    for edge in edges {
        for (a, b) in [
            (&edge.user_id, &edge.friend_id),
            (&edge.friend_id, &edge.user_id),
        ] {
            let profile = profiles.get_mut(a).ok_or_else(|| {
                Error::data(format!("edge references user `{a}` with no locality row"))
            })?;
            if let Some(existing) = profile.strength_to(b) {
                if existing != edge.strength {
                    return Err(Error::data(format!(
                        "conflicting strengths for pair ({a}, {b}): {existing} vs {}",
                        edge.strength
                    )));
                }
                continue;
            }
            profile.add_friendship(b.clone(), edge.strength)?;
        }
    }
    Ok(profiles)
}
