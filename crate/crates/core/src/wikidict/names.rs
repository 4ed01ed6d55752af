use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::WikidictError;
use crate::seed::rng_for;

const BUILTIN_NAMES: &str = include_str!("../../data/person_names.json");

/// Name parts from which person names are assembled.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamePartsTable {
    #[serde(default)]
    pub first: Vec<String>,
    #[serde(default)]
    pub middle: Vec<String>,
    #[serde(default)]
    pub last: Vec<String>,
}

impl NamePartsTable {
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN_NAMES).expect("bundled name table is valid JSON")
    }

    pub fn from_json(text: &str) -> Result<Self, WikidictError> {
        serde_json::from_str(text).map_err(|e| WikidictError::Format(format!("name table: {e}")))
    }

    /// Trimmed, non-empty, first-occurrence-deduplicated lists.
    fn normalized(&self) -> (Vec<&str>, Vec<&str>, Vec<&str>) {
        fn clean(v: &[String]) -> Vec<&str> {
            let mut seen = HashSet::new();
            v.iter().map(|s| s.trim()).filter(|s| !s.is_empty() && seen.insert(*s)).collect()
        }
        (clean(&self.first), clean(&self.middle), clean(&self.last))
    }
}

/// Whether generated names carry a middle name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiddleNames {
    Never,
    /// With probability 1/2 when middle names are available.
    #[default]
    Random,
    Always,
}

impl std::str::FromStr for MiddleNames {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "never" => Ok(MiddleNames::Never),
            "random" => Ok(MiddleNames::Random),
            "always" => Ok(MiddleNames::Always),
            _ => Err(format!("unknown middle-name policy {s:?} (expected never, random or always)")),
        }
    }
}

/// Number of distinct part combinations available.
pub fn combination_count(parts: &NamePartsTable, middle: MiddleNames) -> u128 {
    let (f, m, l) = parts.normalized();
    let (f, m, l) = (f.len() as u128, m.len() as u128, l.len() as u128);
    match middle {
        MiddleNames::Never => f * l,
        MiddleNames::Always => f * m * l,
        MiddleNames::Random => f * l + f * m * l,
    }
}

pub fn generate_person_names(parts: &NamePartsTable, n: usize, seed: u64) -> Result<Vec<String>, WikidictError> {
    generate_person_names_with(parts, n, seed, MiddleNames::Random)
}

// Above this many combinations the enumeration fallback is never needed in
// practice and would be too large to materialize.
const ENUMERATION_LIMIT: u128 = 5_000_000;

/// `n` distinct "First [Middle] Last" names, deterministic for a fixed seed.
pub fn generate_person_names_with(
    parts: &NamePartsTable,
    n: usize,
    seed: u64,
    middle: MiddleNames,
) -> Result<Vec<String>, WikidictError> {
    let (first, middles, last) = parts.normalized();
    if first.is_empty() || last.is_empty() {
        return Err(WikidictError::InvalidArgument("first and last name lists must be non-empty".into()));
    }
    if middle == MiddleNames::Always && middles.is_empty() {
        return Err(WikidictError::InvalidArgument("middle names forced on but none available".into()));
    }
    if n == 0 {
        return Err(WikidictError::InvalidArgument("number of names must be at least 1".into()));
    }
    let available = combination_count(parts, middle);
    if n as u128 > available {
        return Err(WikidictError::Exhausted { requested: n, available });
    }

    let mut rng = rng_for(seed, "person-names", &[]);
    let mut seen = HashSet::with_capacity(n);
    let mut names = Vec::with_capacity(n);
    let budget = 20 * n + 100;
    let mut attempts = 0;
    while names.len() < n && (attempts < budget || available > ENUMERATION_LIMIT) {
        attempts += 1;
        let f = first[rng.gen_range(0..first.len())];
        let with_middle = match middle {
            MiddleNames::Never => false,
            MiddleNames::Always => true,
            MiddleNames::Random => !middles.is_empty() && rng.gen_bool(0.5),
        };
        let name = if with_middle {
            let m = middles[rng.gen_range(0..middles.len())];
            format!("{f} {m} {}", last[rng.gen_range(0..last.len())])
        } else {
            format!("{f} {}", last[rng.gen_range(0..last.len())])
        };
        if seen.insert(name.clone()) {
            names.push(name);
        }
    }
    if names.len() < n {
        // near exhaustion: draw the remainder from the unused combinations
        let mut rest: Vec<String> = all_combinations(&first, &middles, &last, middle)
            .into_iter()
            .filter(|name| !seen.contains(name))
            .collect();
        rest.sort();
        rest.dedup();
        rest.shuffle(&mut rng);
        let need = n - names.len();
        if rest.len() < need {
            return Err(WikidictError::Exhausted { requested: n, available: (names.len() + rest.len()) as u128 });
        }
        names.extend(rest.into_iter().take(need));
    }
    Ok(names)
}

fn all_combinations(first: &[&str], middles: &[&str], last: &[&str], middle: MiddleNames) -> Vec<String> {
    let mut out = Vec::new();
    for f in first {
        for l in last {
            if middle != MiddleNames::Always {
                out.push(format!("{f} {l}"));
            }
            if middle != MiddleNames::Never {
                for m in middles {
                    out.push(format!("{f} {m} {l}"));
                }
            }
        }
    }
    out
}
