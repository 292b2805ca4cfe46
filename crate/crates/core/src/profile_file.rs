//! JSON profile files.
//!
//! ```json
//! {"universe": ["A", "B"], "entries": [{"weight": "8/24", "tiers": [["A"], ["B"]]}]}
//! ```
//!
//! Weights are either `"p/q"` strings, parsed exactly, or JSON numbers. Decimal
//! numbers are read through their shortest textual form and renormalized when
//! the total is within tolerance of one.

use serde::{Deserialize, Serialize};

use crate::preference::{
    normalize_decimal_weights, parse_decimal, parse_rational, Alternative, PreferenceSet,
    ProfileEntry, ProfileError, WeightedProfile,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightRepr {
    Exact(String),
    Decimal(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFile {
    pub weight: WeightRepr,
    pub tiers: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub universe: Vec<String>,
    pub entries: Vec<EntryFile>,
}

impl ProfileFile {
    /// Converts to a profile without validating coherence.
    pub fn to_profile(&self) -> Result<WeightedProfile, ProfileError> {
        let any_decimal = self
            .entries
            .iter()
            .any(|e| matches!(e.weight, WeightRepr::Decimal(_)));
        let raw = self
            .entries
            .iter()
            .map(|e| match &e.weight {
                WeightRepr::Exact(s) => parse_rational(s),
                WeightRepr::Decimal(x) => {
                    if !x.is_finite() {
                        return Err(ProfileError::Parse(format!("non-finite weight {x}")));
                    }
                    parse_decimal(&format!("{x:e}"))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let weights = if any_decimal {
            normalize_decimal_weights(raw)
        } else {
            raw
        };

        let universe = self
            .universe
            .iter()
            .map(|s| Alternative::new(s.as_str()))
            .collect();
        let entries = self
            .entries
            .iter()
            .zip(weights)
            .map(|(e, weight)| ProfileEntry {
                set: PreferenceSet::new(
                    e.tiers
                        .iter()
                        .map(|t| t.iter().map(|s| Alternative::new(s.as_str())).collect())
                        .collect(),
                ),
                weight,
            })
            .collect();
        Ok(WeightedProfile::new(universe, entries))
    }

    pub fn from_profile(profile: &WeightedProfile) -> Self {
        ProfileFile {
            universe: profile.universe().iter().map(ToString::to_string).collect(),
            entries: profile
                .entries()
                .iter()
                .map(|e| EntryFile {
                    weight: WeightRepr::Exact(e.weight.to_string()),
                    tiers: e
                        .set
                        .tiers()
                        .iter()
                        .map(|t| t.iter().map(ToString::to_string).collect())
                        .collect(),
                })
                .collect(),
        }
    }
}

impl Serialize for WeightedProfile {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ProfileFile::from_profile(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WeightedProfile {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = ProfileFile::deserialize(deserializer)?;
        file.to_profile().map_err(serde::de::Error::custom)
    }
}

/// Parses a profile document. Coherence is not checked here.
pub fn parse_profile(json: &str) -> Result<WeightedProfile, ProfileError> {
    let file: ProfileFile =
        serde_json::from_str(json).map_err(|e| ProfileError::Parse(e.to_string()))?;
    file.to_profile()
}
