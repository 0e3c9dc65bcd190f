//! Seeded synthetic populations with known parent links, spouse pairs and
//! death records.
//!
//! The simulation runs year by year over a grid of parishes. Founding couples
//! start a burn-in period without records; from `start_year` on every birth
//! and (most) deaths are written down. Children's records name their parents
//! with historical spelling variants and scribal noise; a fraction of birth
//! records is then lost.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{write_network, ExternalPerson};
use crate::homogamy::Class4;
use crate::records::{
    clean_name, write_birth_records, write_death_records, write_dictionary, BirthRecord, Date, DeathRecord, LatLon,
    NameDictionary, ParentName, Role,
};

pub const FEMALE_NAMES: [&str; 30] = [
    "maria",
    "anna",
    "katariina",
    "liisa",
    "kaisa",
    "helena",
    "margareta",
    "kristiina",
    "briita",
    "valpuri",
    "elisabet",
    "sofia",
    "johanna",
    "eeva",
    "agneta",
    "susanna",
    "karin",
    "beata",
    "juliana",
    "magdalena",
    "sara",
    "ulla",
    "hedvig",
    "justiina",
    "loviisa",
    "aurora",
    "fredrika",
    "gustava",
    "karoliina",
    "albertiina",
];

pub const MALE_NAMES: [&str; 30] = [
    "juho",
    "matti",
    "antti",
    "heikki",
    "erkki",
    "jaakko",
    "olli",
    "pietari",
    "simo",
    "mikko",
    "yrjo",
    "lauri",
    "tuomas",
    "paavo",
    "henrik",
    "kustaa",
    "juhana",
    "abraham",
    "iisakki",
    "jooseppi",
    "tapani",
    "samuel",
    "johannes",
    "kaarle",
    "fredrik",
    "elias",
    "aleksanteri",
    "niilo",
    "martti",
    "sakari",
];

const SURNAME_HEADS: [&str; 24] = [
    "Ai", "Ha", "Ko", "Ke", "Ma", "Pe", "Ru", "Sa", "Ta", "Vi", "Lu", "Ni", "Ra", "Hu", "Jo", "Ly", "Mä", "Pu", "Sy",
    "To", "Va", "Le", "Ki", "Hö",
];
const SURNAME_MIDS: [&str; 16] = [
    "ra", "kki", "lo", "ri", "ppo", "ka", "ti", "mu", "le", "vo", "hta", "ss", "ku", "ne", "lä", "ro",
];
const SURNAME_TAILS: [&str; 12] = [
    "nen", "la", "lä", "inen", "kari", "maa", "oja", "salo", "niemi", "mäki", "lahti", "vaara",
];

struct OccupationDef {
    canonical: &'static str,
    hisco: &'static str,
    class: Class4,
    hiscam: f64,
    weight: f64,
    raw: &'static [&'static str],
}

const OCCUPATIONS: [OccupationDef; 17] = [
    OccupationDef {
        canonical: "kyrkoherde",
        hisco: "14120",
        class: Class4::UpperMiddle,
        hiscam: 85.0,
        weight: 1.0,
        raw: &["kyrkoherde", "kh.", "kyrkoh."],
    },
    OccupationDef {
        canonical: "kapellan",
        hisco: "14130",
        class: Class4::UpperMiddle,
        hiscam: 80.0,
        weight: 1.0,
        raw: &["kapellan", "kap.", "capellan"],
    },
    OccupationDef {
        canonical: "lansman",
        hisco: "58220",
        class: Class4::UpperMiddle,
        hiscam: 70.0,
        weight: 1.0,
        raw: &["länsman", "lsm."],
    },
    OccupationDef {
        canonical: "klockare",
        hisco: "14190",
        class: Class4::UpperMiddle,
        hiscam: 62.0,
        weight: 2.0,
        raw: &["klockare", "kl.", "klock."],
    },
    OccupationDef {
        canonical: "handlande",
        hisco: "41025",
        class: Class4::UpperMiddle,
        hiscam: 66.0,
        weight: 2.0,
        raw: &["handlande", "handl."],
    },
    OccupationDef {
        canonical: "skollarare",
        hisco: "13940",
        class: Class4::UpperMiddle,
        hiscam: 68.0,
        weight: 1.0,
        raw: &["skollärare", "skoll."],
    },
    OccupationDef {
        canonical: "bonde",
        hisco: "61110",
        class: Class4::Peasant,
        hiscam: 55.0,
        weight: 6.0,
        raw: &["bonde", "bd.", "b.", "bd:", "Bonden"],
    },
    OccupationDef {
        canonical: "hemmansagare",
        hisco: "61115",
        class: Class4::Peasant,
        hiscam: 57.0,
        weight: 3.0,
        raw: &["hemmansägare", "hem.äg.", "hmsäg."],
    },
    OccupationDef {
        canonical: "rusthallare",
        hisco: "61112",
        class: Class4::Peasant,
        hiscam: 58.0,
        weight: 1.0,
        raw: &["rusthållare", "rusth."],
    },
    OccupationDef {
        canonical: "torpare",
        hisco: "61220",
        class: Class4::Crofter,
        hiscam: 50.0,
        weight: 6.0,
        raw: &["torpare", "torp.", "t:pare"],
    },
    OccupationDef {
        canonical: "backstugusittare",
        hisco: "62106",
        class: Class4::Crofter,
        hiscam: 46.0,
        weight: 2.0,
        raw: &["backstugusittare", "backst."],
    },
    OccupationDef {
        canonical: "fiskare",
        hisco: "64100",
        class: Class4::Crofter,
        hiscam: 47.0,
        weight: 1.0,
        raw: &["fiskare", "fisk."],
    },
    OccupationDef {
        canonical: "inhyses",
        hisco: "99910",
        class: Class4::Labourer,
        hiscam: 45.0,
        weight: 4.0,
        raw: &["inhyses", "inh.", "inhys."],
    },
    OccupationDef {
        canonical: "drang",
        hisco: "62105",
        class: Class4::Labourer,
        hiscam: 44.0,
        weight: 3.0,
        raw: &["dräng", "dr."],
    },
    OccupationDef {
        canonical: "arbetskarl",
        hisco: "99920",
        class: Class4::Labourer,
        hiscam: 44.0,
        weight: 2.0,
        raw: &["arbetskarl", "arb.karl"],
    },
    OccupationDef {
        canonical: "soldat",
        hisco: "58340",
        class: Class4::Labourer,
        hiscam: 48.0,
        weight: 2.0,
        raw: &["soldat", "sold."],
    },
    OccupationDef {
        canonical: "smed",
        hisco: "83110",
        class: Class4::Labourer,
        hiscam: 52.0,
        weight: 1.0,
        raw: &["smed", "sm."],
    },
];

/// Generations per lineage in the reference network.
const LINEAGE_DEPTH: u32 = 3;

/// Titles that no dictionary resolves.
const JUNK_TITLES: [&str; 5] = ["h.m.", "ej känd", "N.N.", "x", "?"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Couples alive when the burn-in starts.
    pub n_founders: usize,
    /// Living population the fertility regulation steers towards.
    pub population: usize,
    pub n_parishes: usize,
    pub surnames_per_parish: usize,
    /// Given-name pool size per sex (at most 30).
    pub first_name_pool: usize,
    /// Years simulated before records start.
    pub burn_in_years: i32,
    pub start_year: i32,
    pub end_year: i32,
    /// Probability that a parent mention on a child's record carries a
    /// scribal error.
    pub noise: f64,
    /// Probability that a birth record is lost.
    pub record_loss: f64,
    /// Probability that a widowed person below 55 looks for a new spouse.
    pub remarriage: f64,
    /// Class shares of founders and of socially mobile sons.
    pub class_shares: [f64; 4],
    /// Probability that a son's class is redrawn instead of inherited.
    pub mobility: f64,
    /// Same-class odds multiplier in mate choice is `exp(beta)`.
    pub beta: f64,
    /// Probability that a bride comes from a neighbouring parish.
    pub migration: f64,
    pub death_record_rate: f64,
    pub infant_mortality: f64,
    pub mother_age_rate: f64,
    pub middle_name_rate: f64,
    pub middle_mention_rate: f64,
    pub patronym_mention_rate: f64,
    /// Probability that a name is written with a historical spelling variant.
    pub variant_rate: f64,
    pub necronym_rate: f64,
    /// Give every person a distinct surname.
    pub unique_names: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 1,
            n_founders: 900,
            population: 2700,
            n_parishes: 10,
            surnames_per_parish: 15,
            first_name_pool: 30,
            burn_in_years: 60,
            start_year: 1700,
            end_year: 1890,
            noise: 0.1,
            record_loss: 0.1,
            remarriage: 0.1,
            class_shares: [0.1, 0.4, 0.3, 0.2],
            mobility: 0.2,
            beta: 0.0,
            migration: 0.25,
            death_record_rate: 0.8,
            infant_mortality: 0.25,
            mother_age_rate: 0.4,
            middle_name_rate: 0.3,
            middle_mention_rate: 0.7,
            patronym_mention_rate: 0.8,
            variant_rate: 0.3,
            necronym_rate: 0.5,
            unique_names: false,
        }
    }
}

impl GeneratorConfig {
    /// A configuration expected to produce roughly `births` birth records,
    /// with parishes (and hence surnames) growing with the population so that
    /// candidate set sizes stay comparable across scales.
    pub fn with_births(births: usize, seed: u64) -> Self {
        let base = GeneratorConfig::default();
        let population = (births as f64 * 0.165).round().max(30.0) as usize;
        GeneratorConfig {
            seed,
            population,
            n_founders: (population / 3).max(5),
            n_parishes: (population / 270).max(1),
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("noise", self.noise),
            ("record_loss", self.record_loss),
            ("remarriage", self.remarriage),
            ("mobility", self.mobility),
            ("migration", self.migration),
            ("death_record_rate", self.death_record_rate),
            ("infant_mortality", self.infant_mortality),
            ("mother_age_rate", self.mother_age_rate),
            ("middle_name_rate", self.middle_name_rate),
            ("middle_mention_rate", self.middle_mention_rate),
            ("patronym_mention_rate", self.patronym_mention_rate),
            ("variant_rate", self.variant_rate),
            ("necronym_rate", self.necronym_rate),
        ];
        for (name, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if self.n_founders == 0 || self.population == 0 || self.n_parishes == 0 || self.surnames_per_parish == 0 {
            return Err(Error::Config(
                "founders, population, parishes and surnames must be positive".into(),
            ));
        }
        if self.first_name_pool == 0 || self.first_name_pool > FEMALE_NAMES.len() {
            return Err(Error::Config(format!(
                "first_name_pool must be in 1..={}",
                FEMALE_NAMES.len()
            )));
        }
        if self.end_year < self.start_year || self.burn_in_years < 0 {
            return Err(Error::Config("end_year must not precede start_year".into()));
        }
        if self.class_shares.iter().any(|s| !(*s >= 0.0)) || self.class_shares.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(
                "class shares must be non-negative with a positive sum".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Parish {
    pub id: String,
    pub location: LatLon,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TruthLink {
    pub child_id: String,
    /// `None` when the parent has no surviving birth record.
    pub parent_id: Option<String>,
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TruthSpouses {
    pub mother_id: String,
    pub father_id: String,
    pub year: i32,
    pub city: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TruthDeath {
    pub death_id: String,
    pub birth_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MappingRow {
    pub occupation: String,
    pub hisco: String,
    pub class4: Class4,
    pub hiscam: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GeneratorStats {
    pub persons: usize,
    pub births_simulated: usize,
    pub births_recorded: usize,
    pub births_lost: usize,
    pub deaths_recorded: usize,
    pub marriages: usize,
    pub remarriages: usize,
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub config: GeneratorConfig,
    pub parishes: Vec<Parish>,
    /// Sorted by id, normalized with `names`.
    pub births: Vec<BirthRecord>,
    pub deaths: Vec<DeathRecord>,
    pub truth_links: Vec<TruthLink>,
    pub truth_spouses: Vec<TruthSpouses>,
    pub truth_deaths: Vec<TruthDeath>,
    /// The "genealogist's" network over persons born in the record period.
    pub network: Vec<ExternalPerson>,
    /// Spelling variant -> canonical name.
    pub names: Vec<(String, String)>,
    /// Raw title -> canonical occupation.
    pub occupations: Vec<(String, String)>,
    pub mapping: Vec<MappingRow>,
    pub stats: GeneratorStats,
}

impl SyntheticData {
    pub fn name_dictionary(&self) -> NameDictionary {
        NameDictionary::from_pairs(self.names.iter().map(|(a, b)| (a.as_str(), b.as_str())))
            .expect("generated name dictionary is consistent")
    }

    pub fn occupation_dictionary(&self) -> crate::records::OccupationDictionary {
        crate::records::OccupationDictionary::from_pairs(self.occupations.iter().map(|(a, b)| (a.as_str(), b.as_str())))
            .expect("generated occupation dictionary is consistent")
    }

    pub fn occupation_mapping(&self) -> crate::homogamy::OccupationMapping {
        crate::homogamy::OccupationMapping::from_rows(
            self.mapping
                .iter()
                .map(|m| (m.occupation.as_str(), m.hisco.as_str(), m.class4.as_str(), m.hiscam)),
        )
        .expect("generated mapping is valid")
    }

    /// Writes every output file into `dir` (created if missing).
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_birth_records(dir.join(BIRTHS_FILE), &self.births)?;
        write_death_records(dir.join(DEATHS_FILE), &self.deaths)?;
        write_network(dir.join(NETWORK_FILE), &self.network)?;
        write_dictionary(dir.join(NAMES_FILE), &self.names)?;
        write_dictionary(dir.join(OCCUPATIONS_FILE), &self.occupations)?;

        let mut w = csv_writer(&dir.join(MAPPING_FILE))?;
        w.write_record(crate::homogamy::MAPPING_COLUMNS)?;
        for m in &self.mapping {
            w.write_record([
                m.occupation.as_str(),
                m.hisco.as_str(),
                m.class4.as_str(),
                &format!("{}", m.hiscam),
            ])?;
        }
        flush(w, &dir.join(MAPPING_FILE))?;

        let path = dir.join(TRUTH_LINKS_FILE);
        let mut w = csv_writer(&path)?;
        w.write_record(["child_id", "parent_id", "role"])?;
        for l in &self.truth_links {
            w.write_record([&l.child_id, l.parent_id.as_deref().unwrap_or(""), l.role.as_str()])?;
        }
        flush(w, &path)?;

        let path = dir.join(TRUTH_SPOUSES_FILE);
        let mut w = csv_writer(&path)?;
        w.write_record(["mother_id", "father_id", "year", "city"])?;
        for s in &self.truth_spouses {
            w.write_record([&s.mother_id, &s.father_id, &s.year.to_string(), &s.city])?;
        }
        flush(w, &path)?;

        let path = dir.join(TRUTH_DEATHS_FILE);
        let mut w = csv_writer(&path)?;
        w.write_record(["death_id", "birth_id"])?;
        for d in &self.truth_deaths {
            w.write_record([&d.death_id, d.birth_id.as_deref().unwrap_or("")])?;
        }
        flush(w, &path)
    }
}

pub const BIRTHS_FILE: &str = "births.csv";
pub const DEATHS_FILE: &str = "deaths.csv";
pub const NETWORK_FILE: &str = "network.csv";
pub const NAMES_FILE: &str = "names.csv";
pub const OCCUPATIONS_FILE: &str = "occupations.csv";
pub const MAPPING_FILE: &str = "occupation_mapping.csv";
pub const TRUTH_LINKS_FILE: &str = "truth_links.csv";
pub const TRUTH_SPOUSES_FILE: &str = "truth_spouses.csv";
pub const TRUTH_DEATHS_FILE: &str = "truth_deaths.csv";

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn flush<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Simulation state

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Day {
    year: i32,
    month: u8,
    day: u8,
}

impl Day {
    fn random<R: Rng>(year: i32, rng: &mut R) -> Day {
        Day {
            year,
            month: rng.gen_range(1..=12),
            day: rng.gen_range(1..=28),
        }
    }

    /// Completed years at `other`.
    fn age_at(&self, other: Day) -> i32 {
        let mut a = other.year - self.year;
        if (other.month, other.day) < (self.month, self.day) {
            a -= 1;
        }
        a
    }
}

#[derive(Clone, Debug)]
struct Person {
    female: bool,
    first: String,
    middle: Option<String>,
    /// Canonical surname as written (may contain diacritics).
    surname: String,
    patronym: String,
    born: Day,
    birth_parish: usize,
    parish: usize,
    died: Option<Day>,
    mother: Option<usize>,
    father: Option<usize>,
    spouse: Option<usize>,
    ever_married: bool,
    seeking: bool,
    class: Class4,
    occupation: usize,
    children: Vec<usize>,
    record: Option<usize>,
}

struct NamePools {
    female: Vec<&'static str>,
    male: Vec<&'static str>,
    female_w: WeightedIndex<f64>,
    male_w: WeightedIndex<f64>,
    /// canonical -> written variants.
    variants: HashMap<String, Vec<String>>,
}

fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64)).expect("non-empty pool")
}

/// Rule-based historical spellings of a canonical (ASCII) name.
fn spelling_variants(canonical: &str) -> Vec<String> {
    let mut out = Vec::new();
    let rules: [(&str, &str); 9] = [
        ("k", "c"),
        ("ii", "i"),
        ("tt", "t"),
        ("kk", "ck"),
        ("ks", "x"),
        ("j", "i"),
        ("v", "w"),
        ("aa", "a"),
        ("t", "th"),
    ];
    for (from, to) in rules {
        if out.len() >= 2 {
            break;
        }
        if let Some(pos) = canonical.find(from) {
            let mut v = canonical.to_string();
            v.replace_range(pos..pos + from.len(), to);
            if v != canonical && !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

fn capitalize(s: &str) -> String {
    s.split(' ')
        .map(|t| {
            let mut c = t.chars();
            match c.next() {
                Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Letters-only encoding of a number, used to make surnames unique.
fn letter_code(mut n: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (n % 26) as u8);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    String::from_utf8(s).expect("ascii")
}

fn patronym_of(father_first: &str, female: bool) -> String {
    format!("{father_first}n{}", if female { "tytar" } else { "poika" })
}

/// One scribal error: swap two neighbours, drop a letter or double one.
fn scribal_error<R: Rng>(s: &str, rng: &mut R) -> String {
    let mut c: Vec<char> = s.chars().collect();
    if c.len() < 3 {
        return s.to_string();
    }
    let i = rng.gen_range(1..c.len() - 1);
    match rng.gen_range(0..3) {
        0 => c.swap(i, i + 1),
        1 => {
            c.remove(i);
        }
        _ => {
            let ch = c[i];
            c.insert(i, ch);
        }
    }
    c.into_iter().collect()
}

struct Sim<'a> {
    cfg: &'a GeneratorConfig,
    rng: ChaCha8Rng,
    people: Vec<Person>,
    parishes: Vec<Parish>,
    neighbours: Vec<Vec<usize>>,
    surnames: Vec<Vec<String>>,
    names: NamePools,
    class_w: WeightedIndex<f64>,
    occ_by_class: HashMap<Class4, (Vec<usize>, WeightedIndex<f64>)>,
    stats: GeneratorStats,
    unique_counter: usize,
}

fn class_of(i: usize) -> Class4 {
    Class4::ALL[i]
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a GeneratorConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let parishes = make_parishes(cfg.n_parishes, &mut rng);
        let neighbours = (0..parishes.len())
            .map(|i| {
                let mut d: Vec<(f64, usize)> = (0..parishes.len())
                    .filter(|&j| j != i)
                    .map(|j| {
                        (
                            crate::features::geo_distance_km(parishes[i].location, parishes[j].location),
                            j,
                        )
                    })
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.into_iter().take(4).map(|x| x.1).collect()
            })
            .collect();
        let surnames = make_surnames(cfg.n_parishes, cfg.surnames_per_parish, &mut rng);
        let n = cfg.first_name_pool;
        let female: Vec<&'static str> = FEMALE_NAMES[..n].to_vec();
        let male: Vec<&'static str> = MALE_NAMES[..n].to_vec();
        let canon: HashSet<String> = female.iter().chain(&male).map(|s| s.to_string()).collect();
        let mut variants: HashMap<String, Vec<String>> = HashMap::new();
        let mut taken: HashSet<String> = canon.clone();
        for name in female.iter().chain(&male) {
            let vs: Vec<String> = spelling_variants(name)
                .into_iter()
                .filter(|v| taken.insert(v.clone()))
                .collect();
            variants.insert(name.to_string(), vs);
        }
        for pool in &surnames {
            for s in pool {
                let c = clean_name(s);
                let vs: Vec<String> = spelling_variants(&c)
                    .into_iter()
                    .filter(|v| taken.insert(v.clone()))
                    .collect();
                variants.insert(c, vs);
            }
        }
        let mut occ_by_class = HashMap::new();
        for class in Class4::ALL {
            let ix: Vec<usize> = (0..OCCUPATIONS.len())
                .filter(|&i| OCCUPATIONS[i].class == class)
                .collect();
            let w = WeightedIndex::new(ix.iter().map(|&i| OCCUPATIONS[i].weight)).expect("occupations per class");
            occ_by_class.insert(class, (ix, w));
        }
        Sim {
            cfg,
            rng,
            people: Vec::new(),
            parishes,
            neighbours,
            surnames,
            names: NamePools {
                female_w: zipf(female.len()),
                male_w: zipf(male.len()),
                female,
                male,
                variants,
            },
            class_w: WeightedIndex::new(cfg.class_shares).expect("validated shares"),
            occ_by_class,
            stats: GeneratorStats::default(),
            unique_counter: 0,
        }
    }

    fn draw_class(&mut self) -> Class4 {
        class_of(self.class_w.sample(&mut self.rng))
    }

    fn draw_occupation(&mut self, class: Class4) -> usize {
        let (ix, w) = &self.occ_by_class[&class];
        ix[w.sample(&mut self.rng)]
    }

    fn draw_first(&mut self, female: bool) -> String {
        if female {
            self.names.female[self.names.female_w.sample(&mut self.rng)].to_string()
        } else {
            self.names.male[self.names.male_w.sample(&mut self.rng)].to_string()
        }
    }

    fn draw_middle(&mut self, female: bool, first: &str) -> Option<String> {
        if !self.rng.gen_bool(self.cfg.middle_name_rate) {
            return None;
        }
        for _ in 0..5 {
            let m = self.draw_first(female);
            if m != first {
                return Some(m);
            }
        }
        None
    }

    fn unique_surname(&mut self, base: &str) -> String {
        self.unique_counter += 1;
        format!("{base}{}", letter_code(self.unique_counter))
    }

    fn founder_surname(&mut self, parish: usize) -> String {
        let pool = if self.rng.gen_bool(0.2) && !self.neighbours[parish].is_empty() {
            *self.neighbours[parish].choose(&mut self.rng).expect("non-empty")
        } else {
            parish
        };
        let s = self.surnames[pool]
            .choose(&mut self.rng)
            .expect("non-empty pool")
            .clone();
        if self.cfg.unique_names {
            self.unique_surname(&s)
        } else {
            s
        }
    }

    fn add_founder(&mut self, female: bool, year: i32, parish: usize) -> usize {
        let first = self.draw_first(female);
        let middle = self.draw_middle(female, &first);
        let father_first = self.draw_first(false);
        let class = self.draw_class();
        let occupation = self.draw_occupation(class);
        let age = if female {
            self.rng.gen_range(18..=38)
        } else {
            self.rng.gen_range(21..=45)
        };
        let born = Day::random(year - age, &mut self.rng);
        let surname = self.founder_surname(parish);
        self.people.push(Person {
            female,
            first,
            middle,
            surname,
            patronym: patronym_of(&father_first, female),
            born,
            birth_parish: parish,
            parish,
            died: None,
            mother: None,
            father: None,
            spouse: None,
            ever_married: false,
            seeking: false,
            class,
            occupation,
            children: Vec::new(),
            record: None,
        });
        self.people.len() - 1
    }

    fn marry(&mut self, w: usize, h: usize) {
        let remarriage = self.people[w].ever_married || self.people[h].ever_married;
        self.stats.marriages += 1;
        if remarriage {
            self.stats.remarriages += 1;
        }
        for (a, b) in [(w, h), (h, w)] {
            let p = &mut self.people[a];
            p.spouse = Some(b);
            p.ever_married = true;
            p.seeking = false;
        }
        self.people[w].parish = self.people[h].parish;
    }

    fn alive(&self, i: usize) -> bool {
        self.people[i].died.is_none()
    }

    fn hazard(&self, age: i32) -> f64 {
        match age {
            0 => 0.0, // infant deaths are drawn at birth
            1..=14 => 0.008,
            _ => (0.004 * (0.075 * (age - 30) as f64).exp()).min(0.5),
        }
    }

    fn die(&mut self, i: usize, when: Day) {
        self.people[i].died = Some(when);
        if let Some(s) = self.people[i].spouse.take() {
            self.people[s].spouse = None;
            let age = self.people[s].born.age_at(when);
            let remarry = age < 55 && self.rng.gen_bool(self.cfg.remarriage);
            self.people[s].seeking = remarry;
        }
    }

    fn run(&mut self) {
        let cfg = self.cfg;
        let first_year = cfg.start_year - cfg.burn_in_years;
        for k in 0..cfg.n_founders {
            let parish = k % cfg.n_parishes;
            let h = self.add_founder(false, first_year, parish);
            let w = self.add_founder(true, first_year, parish);
            self.marry(w, h);
        }
        self.stats.marriages = 0;
        let target = cfg.population as f64 / cfg.n_parishes as f64;
        for year in first_year..=cfg.end_year {
            self.deaths(year);
            self.singles_enter(year);
            self.marriages(year);
            self.births(year, target);
        }
    }

    fn deaths(&mut self, year: i32) {
        let n = self.people.len();
        for i in 0..n {
            if !self.alive(i) {
                continue;
            }
            let age = year - self.people[i].born.year;
            if age <= 0 {
                continue;
            }
            let h = self.hazard(age);
            if self.rng.gen_bool(h) || age >= 100 {
                let when = Day::random(year, &mut self.rng);
                let when = if when < self.people[i].born {
                    self.people[i].born
                } else {
                    when
                };
                self.die(i, when);
            }
        }
    }

    /// Never-married adults start looking for a spouse.
    fn singles_enter(&mut self, year: i32) {
        for p in self.people.iter_mut() {
            if p.died.is_none() && !p.ever_married && !p.seeking {
                let age = year - p.born.year;
                if (p.female && age >= 18) || (!p.female && age >= 20) {
                    p.seeking = true;
                }
            }
        }
    }

    fn marriages(&mut self, year: i32) {
        let mut women: Vec<Vec<usize>> = vec![Vec::new(); self.parishes.len()];
        let mut men: Vec<Vec<usize>> = vec![Vec::new(); self.parishes.len()];
        for (i, p) in self.people.iter().enumerate() {
            if p.died.is_some() || !p.seeking || p.spouse.is_some() {
                continue;
            }
            let age = year - p.born.year;
            if p.female && age <= 42 {
                women[p.parish].push(i);
            } else if !p.female && age <= 60 {
                men[p.parish].push(i);
            }
        }
        let beta_w = self.cfg.beta.exp();
        for parish in 0..self.parishes.len() {
            for wi in women[parish].clone() {
                if !self.rng.gen_bool(0.3) {
                    continue;
                }
                let market = if self.rng.gen_bool(self.cfg.migration) && !self.neighbours[parish].is_empty() {
                    *self.neighbours[parish].choose(&mut self.rng).expect("non-empty")
                } else {
                    parish
                };
                let w_origin = self.origin_class(wi);
                let w_age = year - self.people[wi].born.year;
                let pool: Vec<usize> = men[market]
                    .iter()
                    .copied()
                    .filter(|&m| self.people[m].spouse.is_none() && year - self.people[m].born.year <= w_age + 15)
                    .collect();
                if pool.is_empty() {
                    continue;
                }
                let weights: Vec<f64> = pool
                    .iter()
                    .map(|&m| if self.origin_class(m) == w_origin { beta_w } else { 1.0 })
                    .collect();
                let pick = pool[WeightedIndex::new(&weights)
                    .expect("positive weights")
                    .sample(&mut self.rng)];
                self.marry(wi, pick);
                men[market].retain(|&m| m != pick);
            }
        }
    }

    /// Class of a person's father (the status measured by the homogamy
    /// analysis); founders carry their own.
    fn origin_class(&self, i: usize) -> Class4 {
        match self.people[i].father {
            Some(f) => self.people[f].class,
            None => self.people[i].class,
        }
    }

    fn births(&mut self, year: i32, target: f64) {
        let mut alive_per_parish = vec![0usize; self.parishes.len()];
        for p in &self.people {
            if p.died.is_none() {
                alive_per_parish[p.parish] += 1;
            }
        }
        let n = self.people.len();
        for w in 0..n {
            let p = &self.people[w];
            if !p.female || p.died.is_some() {
                continue;
            }
            let Some(h) = p.spouse else { continue };
            let age = year - p.born.year;
            if !(17..=45).contains(&age) {
                continue;
            }
            if let Some(&last) = p.children.last() {
                if self.people[last].born.year >= year - 1 && self.rng.gen_bool(0.6) {
                    continue;
                }
            }
            let factor = (2.0 - alive_per_parish[p.parish] as f64 / target).clamp(0.05, 1.8);
            if !self.rng.gen_bool((0.32 * factor).min(0.95)) {
                continue;
            }
            let child = self.bear(w, h, year);
            alive_per_parish[self.people[child].parish] += 1;
        }
    }

    fn bear(&mut self, mother: usize, father: usize, year: i32) -> usize {
        let female = self.rng.gen_bool(0.5);
        let born = Day::random(year, &mut self.rng);
        // Reuse the name of a dead sibling of the same sex, or avoid living ones.
        let siblings: Vec<usize> = self.people[mother]
            .children
            .iter()
            .copied()
            .filter(|&s| self.people[s].female == female && self.people[s].father == Some(father))
            .collect();
        let dead: Vec<usize> = siblings
            .iter()
            .copied()
            .filter(|&s| self.people[s].died.is_some())
            .collect();
        let (first, middle) = if !dead.is_empty() && self.rng.gen_bool(self.cfg.necronym_rate) {
            let s = *dead.last().expect("non-empty");
            (self.people[s].first.clone(), self.people[s].middle.clone())
        } else {
            let living: HashSet<String> = siblings
                .iter()
                .filter(|&&s| self.people[s].died.is_none())
                .map(|&s| self.people[s].first.clone())
                .collect();
            let mut f = self.draw_first(female);
            for _ in 0..10 {
                if !living.contains(&f) {
                    break;
                }
                f = self.draw_first(female);
            }
            let m = self.draw_middle(female, &f);
            (f, m)
        };
        let surname = if self.cfg.unique_names {
            let base = self.people[father].surname.clone();
            self.unique_surname(&base)
        } else {
            self.people[father].surname.clone()
        };
        let father_class = self.people[father].class;
        let class = if self.rng.gen_bool(self.cfg.mobility) {
            self.draw_class()
        } else {
            father_class
        };
        let occupation = self.draw_occupation(class);
        let parish = self.people[father].parish;
        let child = Person {
            female,
            patronym: patronym_of(&self.people[father].first, female),
            first,
            middle,
            surname,
            born,
            birth_parish: parish,
            parish,
            died: None,
            mother: Some(mother),
            father: Some(father),
            spouse: None,
            ever_married: false,
            seeking: false,
            class,
            occupation,
            children: Vec::new(),
            record: None,
        };
        self.people.push(child);
        let id = self.people.len() - 1;
        self.people[mother].children.push(id);
        self.people[father].children.push(id);
        self.stats.births_simulated += 1;
        if self.rng.gen_bool(self.cfg.infant_mortality) {
            let days = self.rng.gen_range(1..=360);
            let when = add_days(born, days);
            self.die(id, when);
        } else if self.rng.gen_bool(0.01) {
            // Death in childbed.
            let when = add_days(born, self.rng.gen_range(0..30));
            self.die(mother, when);
        }
        id
    }
}

fn add_days(d: Day, days: u32) -> Day {
    let mut ordinal = (d.month as u32 - 1) * 28 + d.day as u32 - 1 + days;
    let mut year = d.year;
    while ordinal >= 12 * 28 {
        ordinal -= 12 * 28;
        year += 1;
    }
    Day {
        year,
        month: (ordinal / 28 + 1) as u8,
        day: (ordinal % 28 + 1) as u8,
    }
}

impl PartialOrd for Day {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some((self.year, self.month, self.day).cmp(&(other.year, other.month, other.day)))
    }
}

fn make_parishes<R: Rng>(n: usize, rng: &mut R) -> Vec<Parish> {
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let rows = n.div_ceil(cols);
    // About 35 km between neighbouring parishes.
    let dlat = 0.32;
    let dlon = 0.65;
    let lat0 = 62.5 - dlat * rows as f64 / 2.0;
    let lon0 = 25.5 - dlon * cols as f64 / 2.0;
    (0..n)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            Parish {
                id: format!("P{:03}", i + 1),
                location: LatLon {
                    lat: ((lat0 + r as f64 * dlat + rng.gen_range(-0.05..0.05)) * 1e4).round() / 1e4,
                    lon: ((lon0 + c as f64 * dlon + rng.gen_range(-0.1..0.1)) * 1e4).round() / 1e4,
                },
            }
        })
        .collect()
}

fn make_surnames<R: Rng>(parishes: usize, per_parish: usize, rng: &mut R) -> Vec<Vec<String>> {
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::with_capacity(parishes);
    for _ in 0..parishes {
        let mut pool = Vec::with_capacity(per_parish);
        let mut attempts = 0;
        while pool.len() < per_parish {
            attempts += 1;
            let mut s = SURNAME_HEADS.choose(rng).expect("non-empty").to_string();
            let extra = if attempts > 200 { 2 } else { 1 };
            for _ in 0..extra {
                s.push_str(SURNAME_MIDS.choose(rng).expect("non-empty"));
            }
            s.push_str(SURNAME_TAILS.choose(rng).expect("non-empty"));
            if used.insert(clean_name(&s)) {
                pool.push(s);
            }
        }
        out.push(pool);
    }
    out
}

// ---------------------------------------------------------------------------
// Rendering

struct Renderer<'a> {
    cfg: &'a GeneratorConfig,
    variants: &'a HashMap<String, Vec<String>>,
}

impl Renderer<'_> {
    /// A canonical name as a scribe might write it.
    fn name<R: Rng>(&self, canonical: &str, rng: &mut R) -> String {
        let key = clean_name(canonical);
        match self.variants.get(&key) {
            Some(vs) if !vs.is_empty() && rng.gen_bool(self.cfg.variant_rate) => {
                capitalize(vs.choose(rng).expect("non-empty"))
            }
            _ => capitalize(canonical),
        }
    }

    fn occupation<R: Rng>(&self, occ: usize, rng: &mut R) -> String {
        let r: f64 = rng.gen();
        if r < 0.05 {
            String::new()
        } else if r < 0.15 {
            JUNK_TITLES.choose(rng).expect("non-empty").to_string()
        } else {
            OCCUPATIONS[occ].raw.choose(rng).expect("non-empty").to_string()
        }
    }
}

/// Runs the simulation and renders records.
pub fn generate(cfg: &GeneratorConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut sim = Sim::new(cfg);
    sim.run();
    let Sim {
        mut rng,
        mut people,
        parishes,
        names,
        mut stats,
        ..
    } = sim;
    let render = Renderer {
        cfg,
        variants: &names.variants,
    };

    // Recorded births, chronologically.
    let mut recorded: Vec<usize> = (0..people.len())
        .filter(|&i| {
            people[i].born.year >= cfg.start_year && people[i].born.year <= cfg.end_year && people[i].mother.is_some()
        })
        .collect();
    recorded.sort_by_key(|&i| ((people[i].born.year, people[i].born.month, people[i].born.day), i));
    let mut kept = Vec::with_capacity(recorded.len());
    for &i in &recorded {
        if rng.gen_bool(cfg.record_loss) {
            stats.births_lost += 1;
        } else {
            kept.push(i);
        }
    }
    let width = (kept.len().max(1) as f64).log10().floor() as usize + 2;
    for (k, &i) in kept.iter().enumerate() {
        people[i].record = Some(k);
    }
    let record_id = |k: usize| format!("b{:0width$}", k + 1, width = width);

    let dict = NameDictionary::from_pairs(
        names
            .variants
            .iter()
            .flat_map(|(c, vs)| vs.iter().map(move |v| (v.as_str(), c.as_str()))),
    )?;

    let mut births = Vec::with_capacity(kept.len());
    for &i in &kept {
        let p = &people[i];
        let mother = &people[p.mother.expect("recorded births have parents")];
        let father = &people[p.father.expect("recorded births have parents")];
        let mention = |q: &Person, rng: &mut ChaCha8Rng| -> (String, String, String) {
            let mut first = render.name(&q.first, rng);
            if let Some(m) = &q.middle {
                if rng.gen_bool(cfg.middle_mention_rate) {
                    first = format!("{first} {}", render.name(m, rng));
                }
            }
            let mut last = render.name(&q.surname, rng);
            let mut patronym = if rng.gen_bool(cfg.patronym_mention_rate) {
                render.name(&q.patronym, rng)
            } else {
                String::new()
            };
            if rng.gen_bool(cfg.noise) {
                match rng.gen_range(0..3) {
                    0 => first = scribal_error(&first, rng),
                    1 => last = scribal_error(&last, rng),
                    _ if !patronym.is_empty() => patronym = scribal_error(&patronym, rng),
                    _ => last = scribal_error(&last, rng),
                }
            }
            (first, last, patronym)
        };
        let (ff, fl, fp) = mention(father, &mut rng);
        let (mf, ml, mp) = mention(mother, &mut rng);
        let mother_age = rng.gen_bool(cfg.mother_age_rate).then(|| {
            let a = mother.born.age_at(p.born);
            let jitter = if rng.gen_bool(0.5) { rng.gen_range(-2..=2) } else { 0 };
            (a + jitter).max(0) as u32
        });
        let parish = &parishes[p.birth_parish];
        let mut rec = BirthRecord {
            id: record_id(people[i].record.expect("kept")),
            child_first: render.name(&p.first, &mut rng),
            child_middle: p
                .middle
                .as_deref()
                .map(|m| render.name(m, &mut rng))
                .unwrap_or_default(),
            child_last: render.name(&p.surname, &mut rng),
            child_patronym: render.name(&p.patronym, &mut rng),
            norm_first: String::new(),
            norm_middle: String::new(),
            norm_last: String::new(),
            norm_patronym: String::new(),
            birth_date: Date::ymd(p.born.year, p.born.month, p.born.day),
            parish_id: parish.id.clone(),
            location: Some(parish.location),
            father: ParentName::new(&ff, &fl, &fp, &dict),
            father_occupation_raw: render.occupation(father.occupation, &mut rng),
            mother: ParentName::new(&mf, &ml, &mp, &dict),
            mother_reported_age: mother_age,
        };
        rec.normalize(&dict);
        births.push(rec);
    }
    stats.births_recorded = births.len();

    // Deaths in the record period.
    let mut dying: Vec<usize> = (0..people.len())
        .filter(|&i| {
            people[i]
                .died
                .is_some_and(|d| d.year >= cfg.start_year && d.year <= cfg.end_year)
        })
        .collect();
    dying.sort_by_key(|&i| {
        let d = people[i].died.expect("filtered");
        ((d.year, d.month, d.day), i)
    });
    let mut deaths = Vec::new();
    let mut truth_deaths = Vec::new();
    let mut death_people = Vec::new();
    for &i in &dying {
        if rng.gen_bool(cfg.death_record_rate) {
            death_people.push(i);
        }
    }
    let dwidth = (death_people.len().max(1) as f64).log10().floor() as usize + 2;
    for (k, &i) in death_people.iter().enumerate() {
        let p = &people[i];
        let d = p.died.expect("filtered");
        let id = format!("d{:0dwidth$}", k + 1, dwidth = dwidth);
        let mut rec = DeathRecord {
            id: id.clone(),
            raw_first: render.name(&p.first, &mut rng),
            raw_last: render.name(&p.surname, &mut rng),
            raw_patronym: render.name(&p.patronym, &mut rng),
            norm_first: String::new(),
            norm_last: String::new(),
            norm_patronym: String::new(),
            death_date: Date::ymd(d.year, d.month, d.day),
            age_at_death: Some(p.born.age_at(d).max(0) as u32),
            location: Some(parishes[p.parish].location),
        };
        rec.normalize(&dict);
        deaths.push(rec);
        truth_deaths.push(TruthDeath {
            death_id: id,
            birth_id: p.record.map(record_id),
        });
    }
    stats.deaths_recorded = deaths.len();

    // Truth links for every recorded child.
    let mut truth_links = Vec::with_capacity(2 * kept.len());
    for &i in &kept {
        let p = &people[i];
        let child_id = record_id(p.record.expect("kept"));
        for (role, parent) in [(Role::Mother, p.mother), (Role::Father, p.father)] {
            truth_links.push(TruthLink {
                child_id: child_id.clone(),
                parent_id: parent.and_then(|q| people[q].record).map(record_id),
                role,
            });
        }
    }

    // Spouse pairs with both spouses recorded: year and parish of the
    // earliest recorded child.
    let mut first_child: HashMap<(usize, usize), (Day, usize)> = HashMap::new();
    for &i in &kept {
        let p = &people[i];
        let (m, f) = (p.mother.expect("kept"), p.father.expect("kept"));
        if people[m].record.is_none() || people[f].record.is_none() {
            continue;
        }
        let e = first_child.entry((m, f)).or_insert((p.born, i));
        if (p.born, i) < *e {
            *e = (p.born, i);
        }
    }
    let mut truth_spouses: Vec<TruthSpouses> = first_child
        .into_iter()
        .map(|((m, f), (day, child))| TruthSpouses {
            mother_id: record_id(people[m].record.expect("checked")),
            father_id: record_id(people[f].record.expect("checked")),
            year: day.year,
            city: parishes[people[child].birth_parish].id.clone(),
        })
        .collect();
    truth_spouses.sort_by(|a, b| (&a.mother_id, &a.father_id).cmp(&(&b.mother_id, &b.father_id)));

    // The genealogist's network: everyone born in the record period, with
    // parent edges only inside short lineages. Each person continues the
    // lineage of one parent (picked at random) unless that lineage is already
    // `LINEAGE_DEPTH` generations deep, in which case a new one starts. This
    // keeps connected components small, as in hand-built family trees.
    let pid = |i: usize| format!("p{:07}", i + 1);
    let in_network = |i: usize| people[i].born.year >= cfg.start_year && people[i].born.year <= cfg.end_year;
    let mut lineage_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6c69_6e65_6167_6573);
    let mut lineage: Vec<Option<(usize, u32)>> = vec![None; people.len()];
    let mut kept_parent: Vec<Option<usize>> = vec![None; people.len()];
    let mut n_lineages = 0usize;
    for i in (0..people.len()).filter(|&i| in_network(i)) {
        let p = &people[i];
        let open: Vec<usize> = [p.mother, p.father]
            .into_iter()
            .flatten()
            .filter(|&q| matches!(lineage[q], Some((_, d)) if d < LINEAGE_DEPTH))
            .collect();
        if open.is_empty() {
            lineage[i] = Some((n_lineages, 0));
            n_lineages += 1;
        } else {
            let q = open[lineage_rng.gen_range(0..open.len())];
            let (id, d) = lineage[q].expect("open lineage");
            lineage[i] = Some((id, d + 1));
            kept_parent[i] = Some(q);
        }
    }
    let network: Vec<ExternalPerson> = (0..people.len())
        .filter(|&i| in_network(i))
        .map(|i| {
            let p = &people[i];
            let kept = |q: Option<usize>| q.filter(|&q| kept_parent[i] == Some(q)).map(pid);
            ExternalPerson {
                person_id: pid(i),
                first: capitalize(&p.first),
                last: p.surname.clone(),
                birth_date: Date::ymd(p.born.year, p.born.month, p.born.day),
                mother: kept(p.mother),
                father: kept(p.father),
            }
        })
        .collect();

    let mut name_pairs: Vec<(String, String)> = names
        .variants
        .iter()
        .flat_map(|(c, vs)| vs.iter().map(move |v| (v.clone(), c.clone())))
        .collect();
    name_pairs.sort();
    let mut occupations: Vec<(String, String)> = OCCUPATIONS
        .iter()
        .flat_map(|o| o.raw.iter().map(move |r| (r.to_string(), o.canonical.to_string())))
        .collect();
    occupations.sort();
    let mapping = OCCUPATIONS
        .iter()
        .map(|o| MappingRow {
            occupation: o.canonical.to_string(),
            hisco: o.hisco.to_string(),
            class4: o.class,
            hiscam: o.hiscam,
        })
        .collect();
    stats.persons = people.len();

    Ok(SyntheticData {
        config: cfg.clone(),
        parishes,
        births,
        deaths,
        truth_links,
        truth_spouses,
        truth_deaths,
        network,
        names: name_pairs,
        occupations,
        mapping,
        stats,
    })
}
