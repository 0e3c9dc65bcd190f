//! Vital records: birth and death rows, name and occupation normalization,
//! and CSV ingestion.
//!
//! Birth records are kept in a [`BirthTable`] sorted by record id, so the dense
//! [`RecordIx`] order coincides with the lexicographic id order. Every
//! tie-breaking rule downstream ("smallest id wins") relies on this.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Column layout of the birth CSV.
pub const BIRTH_COLUMNS: [&str; 19] = [
    "id",
    "child_first",
    "child_middle",
    "child_last",
    "child_patronym",
    "birth_year",
    "birth_month",
    "birth_day",
    "parish_id",
    "lat",
    "lon",
    "father_first",
    "father_last",
    "father_patronym",
    "father_occupation",
    "mother_first",
    "mother_last",
    "mother_patronym",
    "mother_age",
];

/// Column layout of the death CSV.
pub const DEATH_COLUMNS: [&str; 10] = [
    "id",
    "first",
    "last",
    "patronym",
    "death_year",
    "death_month",
    "death_day",
    "age_at_death",
    "lat",
    "lon",
];

/// Dense index of a birth record inside a [`BirthTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordIx(pub u32);

impl RecordIx {
    #[inline]
    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for RecordIx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Which parent a link refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Mother,
    Father,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::Mother, Role::Father];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Mother => "mother",
            Role::Father => "father",
        }
    }

    pub fn slot(self) -> usize {
        match self {
            Role::Mother => 0,
            Role::Father => 1,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mother" | "m" => Ok(Role::Mother),
            "father" | "f" => Ok(Role::Father),
            other => Err(Error::InvalidInput(format!("unknown role `{other}`"))),
        }
    }
}

/// A calendar date whose month and day may be unknown.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Date {
    pub year: i32,
    pub month: Option<u8>,
    pub day: Option<u8>,
}

impl Date {
    pub fn year(year: i32) -> Self {
        Date {
            year,
            month: None,
            day: None,
        }
    }

    pub fn ymd(year: i32, month: u8, day: u8) -> Self {
        Date {
            year,
            month: Some(month),
            day: Some(day),
        }
    }

    pub fn is_full(&self) -> bool {
        self.month.is_some() && self.day.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

/// Inclusive range of plausible birth years.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct YearRange {
    pub min: i32,
    pub max: i32,
}

impl Default for YearRange {
    fn default() -> Self {
        YearRange { min: 1600, max: 1920 }
    }
}

impl YearRange {
    pub fn contains(&self, year: i32) -> bool {
        (self.min..=self.max).contains(&year)
    }
}

/// Parent names as written on a child's birth record.
///
/// `first` holds the first given name only; further given names written in the
/// same field become `middle`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParentName {
    pub raw_first: String,
    pub raw_last: String,
    pub raw_patronym: String,
    pub first: String,
    pub middle: String,
    pub last: String,
    pub patronym: String,
}

impl ParentName {
    pub fn new(first: &str, last: &str, patronym: &str, names: &NameDictionary) -> Self {
        let (norm_first, middle) = split_given_names(&normalize_name(first, names), "");
        ParentName {
            raw_first: first.to_string(),
            raw_last: last.to_string(),
            raw_patronym: patronym.to_string(),
            first: norm_first,
            middle,
            last: normalize_name(last, names),
            patronym: normalize_name(patronym, names),
        }
    }

    /// Blocking needs both a first and a last name.
    pub fn is_blockable(&self) -> bool {
        !self.first.is_empty() && !self.last.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirthRecord {
    pub id: String,
    pub child_first: String,
    pub child_middle: String,
    pub child_last: String,
    pub child_patronym: String,
    pub norm_first: String,
    pub norm_middle: String,
    pub norm_last: String,
    pub norm_patronym: String,
    pub birth_date: Date,
    pub parish_id: String,
    pub location: Option<LatLon>,
    pub father: ParentName,
    pub father_occupation_raw: String,
    pub mother: ParentName,
    pub mother_reported_age: Option<u32>,
}

impl BirthRecord {
    pub fn year(&self) -> i32 {
        self.birth_date.year
    }

    pub fn parent(&self, role: Role) -> &ParentName {
        match role {
            Role::Mother => &self.mother,
            Role::Father => &self.father,
        }
    }

    /// Re-derives every normalized field from the raw ones.
    pub fn normalize(&mut self, names: &NameDictionary) {
        let (first, middle) = split_given_names(
            &normalize_name(&self.child_first, names),
            &normalize_name(&self.child_middle, names),
        );
        self.norm_first = first;
        self.norm_middle = middle;
        self.norm_last = normalize_name(&self.child_last, names);
        self.norm_patronym = normalize_name(&self.child_patronym, names);
        self.father = ParentName::new(
            &self.father.raw_first,
            &self.father.raw_last,
            &self.father.raw_patronym,
            names,
        );
        self.mother = ParentName::new(
            &self.mother.raw_first,
            &self.mother.raw_last,
            &self.mother.raw_patronym,
            names,
        );
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeathRecord {
    pub id: String,
    pub raw_first: String,
    pub raw_last: String,
    pub raw_patronym: String,
    pub norm_first: String,
    pub norm_last: String,
    pub norm_patronym: String,
    pub death_date: Date,
    pub age_at_death: Option<u32>,
    pub location: Option<LatLon>,
}

impl DeathRecord {
    pub fn normalize(&mut self, names: &NameDictionary) {
        let (first, _) = split_given_names(&normalize_name(&self.raw_first, names), "");
        self.norm_first = first;
        self.norm_last = normalize_name(&self.raw_last, names);
        self.norm_patronym = normalize_name(&self.raw_patronym, names);
    }
}

/// First token is the given name, the remaining tokens are prepended to `middle`.
fn split_given_names(first: &str, middle: &str) -> (String, String) {
    let mut tokens = first.split(' ').filter(|t| !t.is_empty());
    let head = tokens.next().unwrap_or("").to_string();
    let mut rest: Vec<&str> = tokens.collect();
    rest.extend(middle.split(' ').filter(|t| !t.is_empty()));
    (head, rest.join(" "))
}

// ---------------------------------------------------------------------------
// Normalization

/// Strips diacritics: decomposes, drops combining marks and spells out the
/// few Latin letters that have no decomposition.
pub fn transliterate(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.nfd() {
        if is_combining_mark(c) {
            continue;
        }
        match c {
            'ø' => out.push('o'),
            'Ø' => out.push('O'),
            'æ' => out.push_str("ae"),
            'Æ' => out.push_str("AE"),
            'œ' => out.push_str("oe"),
            'Œ' => out.push_str("OE"),
            'ß' => out.push_str("ss"),
            'đ' | 'ð' => out.push('d'),
            'Đ' | 'Ð' => out.push('D'),
            'ł' => out.push('l'),
            'Ł' => out.push('L'),
            'þ' => out.push_str("th"),
            'Þ' => out.push_str("TH"),
            _ => out.push(c),
        }
    }
    out
}

/// Rule-based part of name normalization: transliterate, lowercase, keep
/// `a-z`, and collapse whitespace into single separators between tokens.
pub fn clean_name(raw: &str) -> String {
    let lowered = transliterate(raw).to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut pending_space = false;
    for c in lowered.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else if c.is_ascii_lowercase() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

/// Rule-based part of occupation normalization. Like [`clean_name`] but keeps
/// digits, since some titles carry regiment or rank numbers.
pub fn clean_title(raw: &str) -> String {
    let lowered = transliterate(raw).to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut pending_space = false;
    for c in lowered.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else if c.is_ascii_lowercase() || c.is_ascii_digit() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

/// Where a dictionary entry came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    File(String),
    Inline,
}

/// Token-level name normalization table (`raw -> canonical`).
///
/// Keys are single cleaned tokens. Canonical values are resolved at build time
/// so that every canonical token is a fixed point of the table.
#[derive(Clone, Debug, Default)]
pub struct NameDictionary {
    entries: HashMap<String, String>,
    provenance: HashMap<String, Provenance>,
}

impl NameDictionary {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        Self::build(
            pairs.into_iter().map(|(r, c)| (r.to_string(), c.to_string())),
            Provenance::Inline,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let pairs = read_two_column(path)?;
        Self::build(pairs, Provenance::File(path.display().to_string()))
    }

    fn build(pairs: impl IntoIterator<Item = (String, String)>, source: Provenance) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut provenance = HashMap::new();
        for (raw, canonical) in pairs {
            let key = clean_name(&raw);
            if key.is_empty() {
                continue;
            }
            if key.contains(' ') {
                return Err(Error::Schema(format!(
                    "name dictionary keys must be single tokens, got `{raw}`"
                )));
            }
            let value = clean_name(&canonical);
            if value.is_empty() {
                return Err(Error::Schema(format!("empty canonical form for `{raw}`")));
            }
            entries.insert(key.clone(), value);
            provenance.insert(key, source.clone());
        }
        let mut dict = NameDictionary { entries, provenance };
        dict.resolve()?;
        Ok(dict)
    }

    /// Follows mapping chains until every canonical token is a fixed point.
    /// A chain that returns to a token already on it is an error.
    fn resolve(&mut self) -> Result<()> {
        fn walk(
            token: &str,
            entries: &HashMap<String, String>,
            done: &mut HashMap<String, String>,
            path: &mut Vec<String>,
        ) -> Result<String> {
            if let Some(v) = done.get(token) {
                return Ok(v.clone());
            }
            let Some(next) = entries.get(token) else {
                return Ok(token.to_string());
            };
            if next == token {
                done.insert(token.to_string(), next.clone());
                return Ok(next.clone());
            }
            if path.iter().any(|p| p == token) {
                return Err(Error::Schema(format!(
                    "name dictionary mappings form a cycle through `{token}`"
                )));
            }
            path.push(token.to_string());
            let mut out = Vec::new();
            for t in next.split(' ') {
                out.push(walk(t, entries, done, path)?);
            }
            path.pop();
            let v = out.join(" ");
            done.insert(token.to_string(), v.clone());
            Ok(v)
        }
        let mut done = HashMap::new();
        let mut keys: Vec<String> = self.entries.keys().cloned().collect();
        keys.sort();
        for k in keys {
            walk(&k, &self.entries, &mut done, &mut Vec::new())?;
        }
        self.entries = done;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, token: &str) -> Option<&str> {
        self.entries.get(token).map(String::as_str)
    }

    pub fn provenance(&self, token: &str) -> Option<&Provenance> {
        self.provenance.get(token)
    }
}

/// Normalizes a raw name: transliteration, lowercasing, removal of
/// non-alphabetic characters, then token-wise dictionary mapping.
/// Idempotent for any dictionary accepted by [`NameDictionary`].
pub fn normalize_name(raw: &str, dict: &NameDictionary) -> String {
    let cleaned = clean_name(raw);
    if dict.is_empty() || cleaned.is_empty() {
        return cleaned;
    }
    cleaned
        .split(' ')
        .map(|t| dict.lookup(t).unwrap_or(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Occupation title table (`cleaned title -> canonical occupation`).
#[derive(Clone, Debug, Default)]
pub struct OccupationDictionary {
    entries: HashMap<String, String>,
    canonical: HashSet<String>,
}

impl OccupationDictionary {
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        Self::build(pairs.into_iter().map(|(r, c)| (r.to_string(), c.to_string())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::build(read_two_column(path.as_ref())?)
    }

    fn build(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut entries = HashMap::new();
        for (raw, canonical) in pairs {
            let key = clean_title(&raw);
            let value = clean_title(&canonical);
            if key.is_empty() {
                continue;
            }
            if value.is_empty() {
                return Err(Error::Schema(format!("empty canonical occupation for `{raw}`")));
            }
            entries.insert(key, value);
        }
        // Resolve chains so canonical titles are fixed points.
        let mut resolved = HashMap::with_capacity(entries.len());
        for key in entries.keys() {
            let mut seen = vec![key.as_str()];
            let mut cur = entries[key].as_str();
            while let Some(next) = entries.get(cur) {
                if next == cur {
                    break;
                }
                if seen.contains(&cur) {
                    return Err(Error::Schema(format!(
                        "occupation dictionary mappings form a cycle through `{cur}`"
                    )));
                }
                seen.push(cur);
                cur = next.as_str();
            }
            resolved.insert(key.clone(), cur.to_string());
        }
        let canonical = resolved.values().cloned().collect();
        Ok(OccupationDictionary {
            entries: resolved,
            canonical,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_canonical(&self, title: &str) -> bool {
        self.canonical.contains(title)
    }
}

/// Cleans a raw occupation title and resolves it through the dictionary.
/// Titles that are already canonical resolve to themselves.
pub fn normalize_occupation(raw: &str, dict: &OccupationDictionary) -> Option<String> {
    let cleaned = clean_title(raw);
    if cleaned.is_empty() {
        return None;
    }
    if let Some(c) = dict.entries.get(&cleaned) {
        return Some(c.clone());
    }
    dict.canonical.contains(&cleaned).then_some(cleaned)
}

/// Resolution statistics over a batch of raw occupation titles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OccupationCoverage {
    pub non_empty: usize,
    pub resolved: usize,
}

impl OccupationCoverage {
    /// `resolved / non_empty`; `None` when no non-empty titles were seen.
    pub fn fraction(&self) -> Option<f64> {
        (self.non_empty > 0).then(|| self.resolved as f64 / self.non_empty as f64)
    }
}

pub fn occupation_coverage<'a>(
    titles: impl IntoIterator<Item = &'a str>,
    dict: &OccupationDictionary,
) -> OccupationCoverage {
    let mut cov = OccupationCoverage::default();
    for t in titles {
        if clean_title(t).is_empty() {
            continue;
        }
        cov.non_empty += 1;
        if normalize_occupation(t, dict).is_some() {
            cov.resolved += 1;
        }
    }
    cov
}

fn read_two_column(path: &Path) -> Result<Vec<(String, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "raw" || &headers[1] != "canonical" {
        return Err(Error::Schema(format!(
            "{}: dictionary header must be `raw,canonical`",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push((
            rec.get(0).unwrap_or("").to_string(),
            rec.get(1).unwrap_or("").to_string(),
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Birth table

/// Birth records sorted by id, with an id lookup.
#[derive(Clone, Debug, Default)]
pub struct BirthTable {
    records: Vec<BirthRecord>,
    by_id: HashMap<String, RecordIx>,
}

impl BirthTable {
    /// Sorts by id; fails on a duplicate id.
    pub fn new(mut records: Vec<BirthRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if by_id.insert(r.id.clone(), RecordIx(i as u32)).is_some() {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(BirthTable { records, by_id })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, ix: RecordIx) -> &BirthRecord {
        &self.records[ix.get()]
    }

    pub fn ix(&self, id: &str) -> Option<RecordIx> {
        self.by_id.get(id).copied()
    }

    pub fn id(&self, ix: RecordIx) -> &str {
        &self.records[ix.get()].id
    }

    pub fn records(&self) -> &[BirthRecord] {
        &self.records
    }

    pub fn iter(&self) -> impl Iterator<Item = (RecordIx, &BirthRecord)> {
        self.records.iter().enumerate().map(|(i, r)| (RecordIx(i as u32), r))
    }
}

// ---------------------------------------------------------------------------
// Ingestion

/// A rejected input row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RowDiagnostic {
    /// 1-based line number in the source file (the header is line 1).
    pub line: u64,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub diagnostics: Vec<RowDiagnostic>,
    pub input_rows: usize,
}

#[derive(Clone, Debug, Default)]
pub struct IngestOptions {
    pub years: YearRange,
}

struct Columns {
    pos: HashMap<&'static str, usize>,
}

impl Columns {
    fn new(headers: &csv::StringRecord, expected: &[&'static str]) -> Result<Self> {
        let mut pos = HashMap::new();
        for name in expected {
            let at = headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
            pos.insert(*name, at);
        }
        Ok(Columns { pos })
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, name: &str) -> &'r str {
        rec.get(self.pos[name]).map(str::trim).unwrap_or("")
    }
}

fn parse_opt<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<Option<T>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<T>()
        .map(Some)
        .map_err(|_| format!("cannot parse {what} `{s}`"))
}

fn parse_date(y: &str, m: &str, d: &str) -> std::result::Result<Date, String> {
    let year: i32 = parse_opt(y, "year")?.ok_or("missing year")?;
    let month: Option<u8> = parse_opt(m, "month")?;
    let day: Option<u8> = parse_opt(d, "day")?;
    if let Some(m) = month {
        if !(1..=12).contains(&m) {
            return Err(format!("month {m} out of range"));
        }
    }
    if let Some(d) = day {
        if !(1..=31).contains(&d) {
            return Err(format!("day {d} out of range"));
        }
        if month.is_none() {
            return Err("day given without month".into());
        }
    }
    Ok(Date { year, month, day })
}

fn parse_location(lat: &str, lon: &str) -> std::result::Result<Option<LatLon>, String> {
    match (parse_opt::<f64>(lat, "lat")?, parse_opt::<f64>(lon, "lon")?) {
        (None, None) => Ok(None),
        (Some(lat), Some(lon)) => {
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                return Err(format!("coordinates ({lat}, {lon}) out of range"));
            }
            Ok(Some(LatLon { lat, lon }))
        }
        _ => Err("latitude and longitude must be given together".into()),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(file))
}

pub fn ingest_birth_records(
    path: impl AsRef<Path>,
    names: &NameDictionary,
    opts: &IngestOptions,
) -> Result<Ingested<BirthRecord>> {
    let mut rdr = open_csv(path.as_ref())?;
    read_birth_records(&mut rdr, names, opts)
}

pub fn read_birth_records<R: Read>(
    rdr: &mut csv::Reader<R>,
    names: &NameDictionary,
    opts: &IngestOptions,
) -> Result<Ingested<BirthRecord>> {
    let headers = rdr.headers()?.clone();
    let cols = Columns::new(&headers, &BIRTH_COLUMNS)?;
    let mut out = Ingested {
        records: Vec::new(),
        diagnostics: Vec::new(),
        input_rows: 0,
    };
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.input_rows += 1;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != headers.len() {
            out.diagnostics.push(RowDiagnostic {
                line,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
            continue;
        }
        match parse_birth_row(&cols, &rec, names, opts) {
            Ok(r) => {
                if !seen.insert(r.id.clone()) {
                    return Err(Error::DuplicateId(r.id));
                }
                out.records.push(r);
            }
            Err(message) => out.diagnostics.push(RowDiagnostic { line, message }),
        }
    }
    Ok(out)
}

fn parse_birth_row(
    cols: &Columns,
    rec: &csv::StringRecord,
    names: &NameDictionary,
    opts: &IngestOptions,
) -> std::result::Result<BirthRecord, String> {
    let id = cols.get(rec, "id");
    if id.is_empty() {
        return Err("empty id".into());
    }
    let birth_date = parse_date(
        cols.get(rec, "birth_year"),
        cols.get(rec, "birth_month"),
        cols.get(rec, "birth_day"),
    )?;
    if !opts.years.contains(birth_date.year) {
        return Err(format!(
            "year out of range: {} not in [{}, {}]",
            birth_date.year, opts.years.min, opts.years.max
        ));
    }
    let location = parse_location(cols.get(rec, "lat"), cols.get(rec, "lon"))?;
    let mother_reported_age: Option<u32> = parse_opt(cols.get(rec, "mother_age"), "mother_age")?;
    if let Some(a) = mother_reported_age {
        if a > 120 {
            return Err(format!("mother_age {a} out of range"));
        }
    }
    let mut r = BirthRecord {
        id: id.to_string(),
        child_first: cols.get(rec, "child_first").to_string(),
        child_middle: cols.get(rec, "child_middle").to_string(),
        child_last: cols.get(rec, "child_last").to_string(),
        child_patronym: cols.get(rec, "child_patronym").to_string(),
        norm_first: String::new(),
        norm_middle: String::new(),
        norm_last: String::new(),
        norm_patronym: String::new(),
        birth_date,
        parish_id: cols.get(rec, "parish_id").to_string(),
        location,
        father: ParentName {
            raw_first: cols.get(rec, "father_first").to_string(),
            raw_last: cols.get(rec, "father_last").to_string(),
            raw_patronym: cols.get(rec, "father_patronym").to_string(),
            ..Default::default()
        },
        father_occupation_raw: cols.get(rec, "father_occupation").to_string(),
        mother: ParentName {
            raw_first: cols.get(rec, "mother_first").to_string(),
            raw_last: cols.get(rec, "mother_last").to_string(),
            raw_patronym: cols.get(rec, "mother_patronym").to_string(),
            ..Default::default()
        },
        mother_reported_age,
    };
    r.normalize(names);
    Ok(r)
}

pub fn ingest_death_records(path: impl AsRef<Path>, names: &NameDictionary) -> Result<Ingested<DeathRecord>> {
    let mut rdr = open_csv(path.as_ref())?;
    read_death_records(&mut rdr, names)
}

pub fn read_death_records<R: Read>(rdr: &mut csv::Reader<R>, names: &NameDictionary) -> Result<Ingested<DeathRecord>> {
    let headers = rdr.headers()?.clone();
    let cols = Columns::new(&headers, &DEATH_COLUMNS)?;
    let mut out = Ingested {
        records: Vec::new(),
        diagnostics: Vec::new(),
        input_rows: 0,
    };
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.input_rows += 1;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != headers.len() {
            out.diagnostics.push(RowDiagnostic {
                line,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
            continue;
        }
        match parse_death_row(&cols, &rec, names) {
            Ok(r) => {
                if !seen.insert(r.id.clone()) {
                    return Err(Error::DuplicateId(r.id));
                }
                out.records.push(r);
            }
            Err(message) => out.diagnostics.push(RowDiagnostic { line, message }),
        }
    }
    Ok(out)
}

fn parse_death_row(
    cols: &Columns,
    rec: &csv::StringRecord,
    names: &NameDictionary,
) -> std::result::Result<DeathRecord, String> {
    let id = cols.get(rec, "id");
    if id.is_empty() {
        return Err("empty id".into());
    }
    let death_date = parse_date(
        cols.get(rec, "death_year"),
        cols.get(rec, "death_month"),
        cols.get(rec, "death_day"),
    )?;
    if death_date.year < 1600 {
        return Err(format!("year out of range: death year {} before 1600", death_date.year));
    }
    let age_at_death: Option<u32> = parse_opt(cols.get(rec, "age_at_death"), "age_at_death")?;
    if let Some(a) = age_at_death {
        if a > 120 {
            return Err(format!("age_at_death {a} out of range [0, 120]"));
        }
    }
    let mut r = DeathRecord {
        id: id.to_string(),
        raw_first: cols.get(rec, "first").to_string(),
        raw_last: cols.get(rec, "last").to_string(),
        raw_patronym: cols.get(rec, "patronym").to_string(),
        norm_first: String::new(),
        norm_last: String::new(),
        norm_patronym: String::new(),
        death_date,
        age_at_death,
        location: parse_location(cols.get(rec, "lat"), cols.get(rec, "lon"))?,
    };
    r.normalize(names);
    Ok(r)
}

// ---------------------------------------------------------------------------
// Writers

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes raw birth columns in the ingestion layout.
pub fn write_birth_records(path: impl AsRef<Path>, records: &[BirthRecord]) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_births_to(&mut w, records)?;
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn write_births_to<W: Write>(w: &mut csv::Writer<W>, records: &[BirthRecord]) -> Result<()> {
    w.write_record(BIRTH_COLUMNS)?;
    for r in records {
        w.write_record([
            r.id.clone(),
            r.child_first.clone(),
            r.child_middle.clone(),
            r.child_last.clone(),
            r.child_patronym.clone(),
            r.birth_date.year.to_string(),
            opt_str(r.birth_date.month),
            opt_str(r.birth_date.day),
            r.parish_id.clone(),
            opt_str(r.location.map(|l| l.lat)),
            opt_str(r.location.map(|l| l.lon)),
            r.father.raw_first.clone(),
            r.father.raw_last.clone(),
            r.father.raw_patronym.clone(),
            r.father_occupation_raw.clone(),
            r.mother.raw_first.clone(),
            r.mother.raw_last.clone(),
            r.mother.raw_patronym.clone(),
            opt_str(r.mother_reported_age),
        ])?;
    }
    Ok(())
}

pub fn write_death_records(path: impl AsRef<Path>, records: &[DeathRecord]) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record(DEATH_COLUMNS)?;
    for r in records {
        w.write_record([
            r.id.clone(),
            r.raw_first.clone(),
            r.raw_last.clone(),
            r.raw_patronym.clone(),
            r.death_date.year.to_string(),
            opt_str(r.death_date.month),
            opt_str(r.death_date.day),
            opt_str(r.age_at_death),
            opt_str(r.location.map(|l| l.lat)),
            opt_str(r.location.map(|l| l.lon)),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Writes the normalized name fields, one row per birth record.
pub fn write_normalized_births(path: impl AsRef<Path>, records: &[BirthRecord]) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record([
        "id",
        "first",
        "middle",
        "last",
        "patronym",
        "birth_year",
        "father_first",
        "father_middle",
        "father_last",
        "father_patronym",
        "mother_first",
        "mother_middle",
        "mother_last",
        "mother_patronym",
    ])?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            &r.norm_first,
            &r.norm_middle,
            &r.norm_last,
            &r.norm_patronym,
            &r.birth_date.year.to_string(),
            &r.father.first,
            &r.father.middle,
            &r.father.last,
            &r.father.patronym,
            &r.mother.first,
            &r.mother.middle,
            &r.mother.last,
            &r.mother.patronym,
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn write_dictionary(path: impl AsRef<Path>, pairs: &[(String, String)]) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record(["raw", "canonical"])?;
    for (r, c) in pairs {
        w.write_record([r, c])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reader(s: &str) -> csv::Reader<&[u8]> {
        csv::ReaderBuilder::new().flexible(true).from_reader(s.as_bytes())
    }

    const HEADER: &str = "id,child_first,child_middle,child_last,child_patronym,birth_year,birth_month,birth_day,parish_id,lat,lon,father_first,father_last,father_patronym,father_occupation,mother_first,mother_last,mother_patronym,mother_age\n";

    #[test]
    fn normalizes_names() {
        let dict = NameDictionary::from_pairs([("catharina", "katariina")]).unwrap();
        assert_eq!(normalize_name("Catharina", &dict), "katariina");
        assert_eq!(normalize_name("anna", &NameDictionary::empty()), "anna");
        assert_eq!(normalize_name("Tihoin!", &NameDictionary::empty()), "tihoin");
        assert_eq!(normalize_name("", &dict), "");
        assert_eq!(normalize_name("Åkerblöm", &dict), "akerblom");
        assert_eq!(normalize_name("  Anna   Helena ", &dict), "anna helena");
    }

    #[test]
    fn dictionary_chains_resolve_to_fixed_points() {
        let dict = NameDictionary::from_pairs([("caisa", "kaisa"), ("kaisa", "katariina")]).unwrap();
        assert_eq!(normalize_name("Caisa", &dict), "katariina");
        assert_eq!(normalize_name("katariina", &dict), "katariina");
        assert!(NameDictionary::from_pairs([("a", "b"), ("b", "a")]).is_err());
        assert!(NameDictionary::from_pairs([("anna liisa", "annaliisa")]).is_err());
    }

    #[test]
    fn normalizes_occupations() {
        let dict = OccupationDictionary::from_pairs([("bd.", "bonden"), ("b.", "bonden"), ("bd:", "bonden")]).unwrap();
        assert_eq!(normalize_occupation("bd:", &dict).as_deref(), Some("bonden"));
        assert_eq!(normalize_occupation("Bd.", &dict).as_deref(), Some("bonden"));
        assert_eq!(normalize_occupation("bonden", &dict).as_deref(), Some("bonden"));
        assert_eq!(normalize_occupation("xyzzy", &dict), None);
        assert_eq!(normalize_occupation("", &dict), None);
        assert!(OccupationDictionary::from_pairs([("a", "b"), ("b", "a")]).is_err());
        let chained = OccupationDictionary::from_pairs([("bd", "bonde"), ("bonde", "bonden")]).unwrap();
        assert_eq!(normalize_occupation("bd", &chained).as_deref(), Some("bonden"));
    }

    #[test]
    fn occupation_coverage_counts_non_empty_titles() {
        let dict = OccupationDictionary::from_pairs([("bd", "bonden"), ("torp.", "torpare")]).unwrap();
        let titles = ["bd:", "", "torpare", "xyzzy", "b.", "  "];
        let cov = occupation_coverage(titles.iter().copied(), &dict);
        assert_eq!(
            cov,
            OccupationCoverage {
                non_empty: 4,
                resolved: 2
            }
        );
        assert_eq!(cov.fraction(), Some(0.5));
        assert_eq!(occupation_coverage([""].iter().copied(), &dict).fraction(), None);
    }

    #[test]
    fn ingests_valid_rows() {
        let data = format!(
            "{HEADER}b1,Anna,,Airaxin,Mattsdotter,1765,3,2,p1,60.1,24.9,Matts,Airaxin,,bd.,Maria,Tihoin,,31\n\
             b2,Maria,Helena,Airaxin,,1740,,,p1,,,,,,,,,,\n\
             b3,Anders,,Tihoin,,1738,1,1,p2,60.4,22.3,,,,,,,,\n"
        );
        let out = read_birth_records(&mut reader(&data), &NameDictionary::empty(), &IngestOptions::default()).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.diagnostics.is_empty());
        let b1 = &out.records[0];
        assert_eq!(b1.mother.first, "maria");
        assert_eq!(b1.mother_reported_age, Some(31));
        assert_eq!(b1.birth_date, Date::ymd(1765, 3, 2));
        let b2 = &out.records[1];
        assert_eq!((b2.norm_first.as_str(), b2.norm_middle.as_str()), ("maria", "helena"));
        assert!(b2.location.is_none());
        assert!(!b2.father.is_blockable());
    }

    #[test]
    fn duplicate_id_is_a_hard_error() {
        let data = format!("{HEADER}b1,Anna,,A,,1765,,,p,,,,,,,,,,\nb1,Eva,,B,,1766,,,p,,,,,,,,,,\n");
        let err =
            read_birth_records(&mut reader(&data), &NameDictionary::empty(), &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(ref id) if id == "b1"), "{err}");
        assert!(err.to_string().contains("b1"));
    }

    #[test]
    fn out_of_range_year_is_diagnosed() {
        let data = format!(
            "{HEADER}b1,Anna,,A,,1492,,,p,,,,,,,,,,\nb2,Eva,,B,,1766,13,,p,,,,,,,,,,\nb3,Eva,,B\nb4,Eva,,B,,1766,,,p,,,,,,,,,,\n"
        );
        let out = read_birth_records(&mut reader(&data), &NameDictionary::empty(), &IngestOptions::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.diagnostics.len(), 3);
        assert!(out.diagnostics[0].message.contains("year out of range"));
        assert_eq!(out.diagnostics[0].line, 2);
        assert_eq!(out.records.len() + out.diagnostics.len(), out.input_rows);
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let data = "id,child_first\nb1,Anna\n";
        let err =
            read_birth_records(&mut reader(data), &NameDictionary::empty(), &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn ingests_death_rows() {
        let data = "id,first,last,patronym,death_year,death_month,death_day,age_at_death,lat,lon\n\
                    d1,Maria,Airaxin,,1800,,,70,60.1,24.9\n\
                    d2,Anna,B,,1500,,,3,,\n\
                    d3,Anna,B,,1700,,,130,,\n";
        let out = read_death_records(&mut reader(data), &NameDictionary::empty()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.diagnostics.len(), 2);
        assert_eq!(out.records[0].norm_last, "airaxin");
    }

    #[test]
    fn birth_table_sorts_by_id() {
        let mk = |id: &str| BirthRecord {
            id: id.into(),
            child_first: String::new(),
            child_middle: String::new(),
            child_last: String::new(),
            child_patronym: String::new(),
            norm_first: String::new(),
            norm_middle: String::new(),
            norm_last: String::new(),
            norm_patronym: String::new(),
            birth_date: Date::year(1700),
            parish_id: String::new(),
            location: None,
            father: ParentName::default(),
            father_occupation_raw: String::new(),
            mother: ParentName::default(),
            mother_reported_age: None,
        };
        let t = BirthTable::new(vec![mk("c"), mk("a"), mk("b")]).unwrap();
        assert_eq!(t.id(RecordIx(0)), "a");
        assert_eq!(t.ix("c"), Some(RecordIx(2)));
        assert!(BirthTable::new(vec![mk("a"), mk("a")]).is_err());
    }

    proptest! {
        #[test]
        fn name_normalization_is_idempotent(raw in "\\PC{0,24}") {
            let dict = NameDictionary::from_pairs([
                ("catharina", "katariina"),
                ("cajsa", "kaisa"),
                ("maja", "maria"),
                ("annaliisa", "anna liisa"),
            ]).unwrap();
            let once = normalize_name(&raw, &dict);
            prop_assert_eq!(normalize_name(&once, &dict), once.clone());
            prop_assert!(once.chars().all(|c| c == ' ' || c.is_ascii_lowercase()));
        }

        #[test]
        fn occupation_normalization_is_idempotent(raw in "[a-zA-Z.:åäö ]{0,12}") {
            let dict = OccupationDictionary::from_pairs([
                ("bd", "bonden"), ("b", "bonden"), ("torp", "torpare"), ("dr", "drang"),
            ]).unwrap();
            if let Some(once) = normalize_occupation(&raw, &dict) {
                prop_assert_eq!(normalize_occupation(&once, &dict), Some(once.clone()));
            }
        }
    }
}
