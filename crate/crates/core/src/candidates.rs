//! Blocking: parent candidates are records whose normalized first and last
//! name equal the parent name written on the child's record and who were born
//! 10 to 70 years (inclusive) before the child.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::jaro_winkler;
use crate::records::{BirthTable, RecordIx, Role};

pub const MIN_PARENT_AGE: i32 = 10;
pub const MAX_PARENT_AGE: i32 = 70;
pub const DEFAULT_CANDIDATE_CAP: usize = 256;

/// Name buckets over the whole birth table, each sorted by birth year.
#[derive(Clone, Debug, Default)]
pub struct CandidateIndex {
    buckets: HashMap<(String, String), Vec<(i32, RecordIx)>>,
    unindexed: usize,
}

impl CandidateIndex {
    pub fn bucket(&self, first: &str, last: &str) -> &[(i32, RecordIx)] {
        self.buckets
            .get(&(first.to_string(), last.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    /// Number of records in all buckets.
    pub fn indexed(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    /// Records skipped because their first or last name was empty.
    pub fn unindexed(&self) -> usize {
        self.unindexed
    }

    pub fn bucket_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.buckets.values().map(Vec::len)
    }
}

pub fn build_index(births: &BirthTable) -> CandidateIndex {
    let mut index = CandidateIndex::default();
    for (ix, r) in births.iter() {
        if r.norm_first.is_empty() || r.norm_last.is_empty() {
            log::debug!("record {} has an empty first or last name; not indexed", r.id);
            index.unindexed += 1;
            continue;
        }
        index
            .buckets
            .entry((r.norm_first.clone(), r.norm_last.clone()))
            .or_default()
            .push((r.year(), ix));
    }
    for list in index.buckets.values_mut() {
        list.sort_unstable();
    }
    if index.unindexed > 0 {
        log::info!("{} records not indexed (empty first or last name)", index.unindexed);
    }
    index
}

/// Candidates for one child and role. The null option (parent not among the
/// records) is always implicitly available and is not stored in `candidates`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    pub child: RecordIx,
    pub role: Role,
    /// Ascending by record index, i.e. by record id.
    pub candidates: Vec<RecordIx>,
    /// How many window-feasible candidates the cap dropped.
    pub truncated: usize,
}

impl CandidateSet {
    pub const fn includes_null(&self) -> bool {
        true
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn contains(&self, ix: RecordIx) -> bool {
        self.candidates.binary_search(&ix).is_ok()
    }
}

/// Candidate predicate shared by the index path and the brute-force checks.
pub fn is_feasible_parent(births: &BirthTable, child: RecordIx, role: Role, cand: RecordIx) -> bool {
    if child == cand {
        return false;
    }
    let c = births.get(child);
    let p = births.get(cand);
    let parent = c.parent(role);
    if !parent.is_blockable() {
        return false;
    }
    let age = c.year() - p.year();
    (MIN_PARENT_AGE..=MAX_PARENT_AGE).contains(&age) && p.norm_first == parent.first && p.norm_last == parent.last
}

pub fn generate_candidates(
    births: &BirthTable,
    index: &CandidateIndex,
    child: RecordIx,
    role: Role,
    cap: usize,
) -> CandidateSet {
    let rec = births.get(child);
    let parent = rec.parent(role);
    let mut set = CandidateSet {
        child,
        role,
        candidates: Vec::new(),
        truncated: 0,
    };
    if !parent.is_blockable() {
        return set;
    }
    let bucket = index.bucket(&parent.first, &parent.last);
    let lo_year = rec.year() - MAX_PARENT_AGE;
    let hi_year = rec.year() - MIN_PARENT_AGE;
    let start = bucket.partition_point(|&(y, _)| y < lo_year);
    let end = bucket.partition_point(|&(y, _)| y <= hi_year);
    set.candidates = bucket[start..end]
        .iter()
        .map(|&(_, ix)| ix)
        .filter(|&ix| ix != child)
        .collect();
    if set.candidates.len() > cap {
        // Keep the candidates whose patronym and middle name agree best with
        // what the child's record says.
        let mut scored: Vec<(f64, RecordIx)> = set
            .candidates
            .iter()
            .map(|&ix| {
                let p = births.get(ix);
                let s = jaro_winkler(&parent.patronym, &p.norm_patronym) + jaro_winkler(&parent.middle, &p.norm_middle);
                (s, ix)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        set.truncated = scored.len() - cap;
        set.candidates = scored.into_iter().take(cap).map(|(_, ix)| ix).collect();
        log::debug!(
            "child {} ({}): {} candidates truncated to {}",
            rec.id,
            role,
            cap + set.truncated,
            cap
        );
    }
    set.candidates.sort_unstable();
    set
}

/// Mother and father candidate sets for every record, indexed by child.
pub fn generate_all(births: &BirthTable, index: &CandidateIndex, cap: usize) -> Vec<[CandidateSet; 2]> {
    use rayon::prelude::*;
    (0..births.len() as u32)
        .into_par_iter()
        .map(|i| {
            let child = RecordIx(i);
            [
                generate_candidates(births, index, child, Role::Mother, cap),
                generate_candidates(births, index, child, Role::Father, cap),
            ]
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct CandidateStats {
    pub children: usize,
    pub sets: usize,
    pub empty_sets: usize,
    pub total_candidates: usize,
    pub truncated_sets: usize,
}

pub fn candidate_stats(sets: &[[CandidateSet; 2]]) -> CandidateStats {
    let mut st = CandidateStats {
        children: sets.len(),
        ..Default::default()
    };
    for s in sets.iter().flatten() {
        st.sets += 1;
        st.total_candidates += s.len();
        if s.is_empty() {
            st.empty_sets += 1;
        }
        if s.truncated > 0 {
            st.truncated_sets += 1;
        }
    }
    st
}

/// Debug dump: `child_id,role,candidate_id`.
pub fn write_candidates(path: impl AsRef<Path>, births: &BirthTable, sets: &[[CandidateSet; 2]]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["child_id", "role", "candidate_id"])?;
    for s in sets.iter().flatten() {
        for &c in &s.candidates {
            w.write_record([births.id(s.child), s.role.as_str(), births.id(c)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
