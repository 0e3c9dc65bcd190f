//! Attribute-similarity features for (child, candidate parent) pairs, plus the
//! deterministic death-record pre-matching they depend on.
//!
//! Column layout of [`FeatureVector`] (frozen; serialized models depend on it):
//!
//! | # | name | group |
//! |---|------|-------|
//! | 0 | `candidate_age` | age |
//! | 1 | `reported_age_diff` | age |
//! | 2 | `reported_age_missing` | age (flag) |
//! | 3 | `geo_distance_km` | distance |
//! | 4 | `geo_missing` | distance (flag) |
//! | 5 | `first_name_sim` | names |
//! | 6 | `middle_name_sim` | names |
//! | 7 | `middle_name_missing` | names (flag) |
//! | 8 | `last_name_sim` | names |
//! | 9 | `patronym_sim` | names |
//! | 10 | `patronym_missing` | names (flag) |
//! | 11 | `naive_bayes_prob` | naive Bayes |
//! | 12 | `is_mother_link` | gender |
//! | 13 | `child_lat` | location |
//! | 14 | `child_lon` | location |
//! | 15 | `child_location_missing` | location (flag) |
//! | 16 | `child_birth_year` | birth year |
//! | 17 | `candidate_known_dead_before_birth` | death |
//! | 18 | `years_dead_before_birth` | death |
//! | 19 | `candidate_death_unknown` | death (flag) |
//!
//! Missing numeric values are imputed as 0 with their flag set to 1.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::records::{BirthRecord, BirthTable, DeathRecord, LatLon, RecordIx, Role};

pub const N_FEATURES: usize = 20;

pub const CANDIDATE_AGE: usize = 0;
pub const REPORTED_AGE_DIFF: usize = 1;
pub const REPORTED_AGE_MISSING: usize = 2;
pub const GEO_DISTANCE_KM: usize = 3;
pub const GEO_MISSING: usize = 4;
pub const FIRST_NAME_SIM: usize = 5;
pub const MIDDLE_NAME_SIM: usize = 6;
pub const MIDDLE_NAME_MISSING: usize = 7;
pub const LAST_NAME_SIM: usize = 8;
pub const PATRONYM_SIM: usize = 9;
pub const PATRONYM_MISSING: usize = 10;
pub const NAIVE_BAYES_PROB: usize = 11;
pub const IS_MOTHER_LINK: usize = 12;
pub const CHILD_LAT: usize = 13;
pub const CHILD_LON: usize = 14;
pub const CHILD_LOCATION_MISSING: usize = 15;
pub const CHILD_BIRTH_YEAR: usize = 16;
pub const KNOWN_DEAD_BEFORE_BIRTH: usize = 17;
pub const YEARS_DEAD_BEFORE_BIRTH: usize = 18;
pub const DEATH_UNKNOWN: usize = 19;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "candidate_age",
    "reported_age_diff",
    "reported_age_missing",
    "geo_distance_km",
    "geo_missing",
    "first_name_sim",
    "middle_name_sim",
    "middle_name_missing",
    "last_name_sim",
    "patronym_sim",
    "patronym_missing",
    "naive_bayes_prob",
    "is_mother_link",
    "child_lat",
    "child_lon",
    "child_location_missing",
    "child_birth_year",
    "candidate_known_dead_before_birth",
    "years_dead_before_birth",
    "candidate_death_unknown",
];

/// The components the naive Bayes model sees: candidate age, birth-place
/// distance, and first/last/patronym similarity.
pub const NAIVE_BAYES_FEATURES: [usize; 5] = [
    CANDIDATE_AGE,
    GEO_DISTANCE_KM,
    FIRST_NAME_SIM,
    LAST_NAME_SIM,
    PATRONYM_SIM,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl Default for FeatureVector {
    fn default() -> Self {
        FeatureVector([0.0; N_FEATURES])
    }
}

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for FeatureVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

// ---------------------------------------------------------------------------
// String similarity

fn jaro_chars(a: &[char], b: &[char]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_matched = vec![false; a.len()];
    let mut b_matched = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, &ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_matched[j] && b[j] == ca {
                a_matched[i] = true;
                b_matched[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let mut transpositions = 0usize;
    let mut k = 0usize;
    for (i, &ca) in a.iter().enumerate() {
        if !a_matched[i] {
            continue;
        }
        while !b_matched[k] {
            k += 1;
        }
        if ca != b[k] {
            transpositions += 1;
        }
        k += 1;
    }
    let m = matches as f64;
    let t = (transpositions / 2) as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

pub fn jaro(s1: &str, s2: &str) -> f64 {
    let a: Vec<char> = s1.chars().collect();
    let b: Vec<char> = s2.chars().collect();
    jaro_chars(&a, &b)
}

/// Jaro–Winkler similarity with prefix scale 0.1 and a maximum prefix of 4.
pub fn jaro_winkler(s1: &str, s2: &str) -> f64 {
    if s1 == s2 {
        return 1.0;
    }
    let a: Vec<char> = s1.chars().collect();
    let b: Vec<char> = s2.chars().collect();
    let j = jaro_chars(&a, &b);
    let prefix = a.iter().zip(&b).take(4).take_while(|(x, y)| x == y).count();
    (j + prefix as f64 * 0.1 * (1.0 - j)).min(1.0)
}

// ---------------------------------------------------------------------------
// Geography

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance by the haversine formula.
pub fn geo_distance_km(p1: LatLon, p2: LatLon) -> f64 {
    let (lat1, lat2) = (p1.lat.to_radians(), p2.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (p2.lon - p1.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

// ---------------------------------------------------------------------------
// Death records

pub const DEATH_MATCH_MAX_KM: f64 = 60.0;
pub const DEATH_MATCH_YEAR_SLACK: i32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeathLink {
    pub death: usize,
    pub death_year: i32,
}

/// Birth records with an unambiguously matched death record.
#[derive(Clone, Debug, Default)]
pub struct DeathLinkTable {
    links: HashMap<RecordIx, DeathLink>,
    pub stats: DeathMatchStats,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DeathMatchStats {
    pub deaths: usize,
    /// Deaths with exactly one feasible birth record.
    pub unique: usize,
    /// Deaths with two or more feasible birth records.
    pub ambiguous: usize,
    pub no_match: usize,
    /// Unique matches dropped because another death also claimed the birth.
    pub contested: usize,
    pub linked: usize,
}

impl DeathMatchStats {
    pub fn match_rate(&self) -> f64 {
        if self.deaths == 0 {
            0.0
        } else {
            self.linked as f64 / self.deaths as f64
        }
    }
}

impl DeathLinkTable {
    pub fn get(&self, birth: RecordIx) -> Option<DeathLink> {
        self.links.get(&birth).copied()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RecordIx, DeathLink)> + '_ {
        self.links.iter().map(|(&b, &d)| (b, d))
    }
}

/// Whether a birth record is a feasible match for a death record: same
/// normalized first name, last name and patronym, reported age consistent
/// with the birth year within one year, and places at most 60 km apart.
pub fn death_match_feasible(birth: &BirthRecord, death: &DeathRecord) -> bool {
    let Some(age) = death.age_at_death else {
        return false;
    };
    let (Some(bl), Some(dl)) = (birth.location, death.location) else {
        return false;
    };
    birth.norm_first == death.norm_first
        && birth.norm_last == death.norm_last
        && birth.norm_patronym == death.norm_patronym
        && (death.death_date.year - age as i32 - birth.year()).abs() <= DEATH_MATCH_YEAR_SLACK
        && geo_distance_km(bl, dl) <= DEATH_MATCH_MAX_KM
}

pub fn match_death_records(births: &BirthTable, deaths: &[DeathRecord]) -> DeathLinkTable {
    let mut by_name: HashMap<(&str, &str, &str), Vec<RecordIx>> = HashMap::new();
    for (ix, b) in births.iter() {
        if b.norm_first.is_empty() || b.norm_last.is_empty() {
            continue;
        }
        by_name
            .entry((&b.norm_first, &b.norm_last, &b.norm_patronym))
            .or_default()
            .push(ix);
    }
    let mut stats = DeathMatchStats {
        deaths: deaths.len(),
        ..Default::default()
    };
    let mut claims: HashMap<RecordIx, Vec<usize>> = HashMap::new();
    for (di, d) in deaths.iter().enumerate() {
        let feasible: Vec<RecordIx> = by_name
            .get(&(d.norm_first.as_str(), d.norm_last.as_str(), d.norm_patronym.as_str()))
            .map(|list| {
                list.iter()
                    .copied()
                    .filter(|&b| death_match_feasible(births.get(b), d))
                    .collect()
            })
            .unwrap_or_default();
        match feasible.len() {
            0 => stats.no_match += 1,
            1 => {
                stats.unique += 1;
                claims.entry(feasible[0]).or_default().push(di);
            }
            _ => stats.ambiguous += 1,
        }
    }
    let mut links = HashMap::new();
    for (b, ds) in claims {
        if ds.len() == 1 {
            links.insert(
                b,
                DeathLink {
                    death: ds[0],
                    death_year: deaths[ds[0]].death_date.year,
                },
            );
        } else {
            stats.contested += ds.len();
        }
    }
    stats.linked = links.len();
    DeathLinkTable { links, stats }
}

// ---------------------------------------------------------------------------
// Feature construction

fn sim_with_flag(a: &str, b: &str) -> (f64, f64) {
    let missing = if a.is_empty() || b.is_empty() { 1.0 } else { 0.0 };
    (jaro_winkler(a, b), missing)
}

/// Builds the 20-component similarity vector for `child` and a non-null
/// `candidate` in `role`. `naive_bayes_prob` is the naive Bayes posterior of
/// this candidate (0 when the naive Bayes stage has not run yet).
pub fn compute_features(
    births: &BirthTable,
    deaths: &DeathLinkTable,
    child: RecordIx,
    candidate: RecordIx,
    role: Role,
    naive_bayes_prob: f64,
) -> FeatureVector {
    let c = births.get(child);
    let p = births.get(candidate);
    let parent = c.parent(role);
    let mut f = FeatureVector::default();

    let age = (c.year() - p.year()) as f64;
    f[CANDIDATE_AGE] = age;
    match (role, c.mother_reported_age) {
        (Role::Mother, Some(reported)) => f[REPORTED_AGE_DIFF] = (age - reported as f64).abs(),
        _ => f[REPORTED_AGE_MISSING] = 1.0,
    }

    match (c.location, p.location) {
        (Some(a), Some(b)) => f[GEO_DISTANCE_KM] = geo_distance_km(a, b),
        _ => f[GEO_MISSING] = 1.0,
    }

    f[FIRST_NAME_SIM] = jaro_winkler(&parent.first, &p.norm_first);
    (f[MIDDLE_NAME_SIM], f[MIDDLE_NAME_MISSING]) = sim_with_flag(&parent.middle, &p.norm_middle);
    f[LAST_NAME_SIM] = jaro_winkler(&parent.last, &p.norm_last);
    (f[PATRONYM_SIM], f[PATRONYM_MISSING]) = sim_with_flag(&parent.patronym, &p.norm_patronym);

    f[NAIVE_BAYES_PROB] = naive_bayes_prob;
    f[IS_MOTHER_LINK] = if role == Role::Mother { 1.0 } else { 0.0 };

    match c.location {
        Some(l) => {
            f[CHILD_LAT] = l.lat;
            f[CHILD_LON] = l.lon;
        }
        None => f[CHILD_LOCATION_MISSING] = 1.0,
    }
    f[CHILD_BIRTH_YEAR] = c.year() as f64;

    match deaths.get(candidate) {
        Some(d) => {
            if d.death_year < c.year() {
                f[KNOWN_DEAD_BEFORE_BIRTH] = 1.0;
                f[YEARS_DEAD_BEFORE_BIRTH] = (c.year() - d.death_year) as f64;
            }
        }
        None => f[DEATH_UNKNOWN] = 1.0,
    }
    f
}
