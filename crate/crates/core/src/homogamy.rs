//! Assortative mating measures over inferred spouse pairs: occupation and
//! class match rates, HISCAM differences, a city-and-period shuffling null
//! model, moving-window series with bootstrap intervals.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::records::{clean_title, normalize_occupation, BirthTable, OccupationDictionary, RecordIx};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Class4 {
    UpperMiddle,
    Peasant,
    Crofter,
    Labourer,
}

impl Class4 {
    pub const ALL: [Class4; 4] = [Class4::UpperMiddle, Class4::Peasant, Class4::Crofter, Class4::Labourer];

    pub fn as_str(self) -> &'static str {
        match self {
            Class4::UpperMiddle => "upper/middle",
            Class4::Peasant => "peasants",
            Class4::Crofter => "crofters",
            Class4::Labourer => "labourers",
        }
    }
}

impl std::str::FromStr for Class4 {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let k: String = s
            .trim()
            .to_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match k.as_str() {
            "1" | "uppermiddle" | "upper" | "middle" => Ok(Class4::UpperMiddle),
            "2" | "peasants" | "peasant" => Ok(Class4::Peasant),
            "3" | "crofters" | "crofter" => Ok(Class4::Crofter),
            "4" | "labourers" | "labourer" | "laborers" | "laborer" => Ok(Class4::Labourer),
            _ => Err(Error::Schema(format!("unknown class `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupationInfo {
    pub hisco: String,
    pub class4: Class4,
    pub hiscam: f64,
}

/// Canonical occupation -> HISCO code, class and HISCAM score.
#[derive(Clone, Debug, Default)]
pub struct OccupationMapping {
    map: HashMap<String, OccupationInfo>,
}

pub const MAPPING_COLUMNS: [&str; 4] = ["occupation", "hisco", "class4", "hiscam"];

impl OccupationMapping {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, &'a str, f64)>) -> Result<Self> {
        let mut map = HashMap::new();
        for (occ, hisco, class, hiscam) in rows {
            if !(0.0..=100.0).contains(&hiscam) {
                return Err(Error::Schema(format!("HISCAM {hiscam} for `{occ}` outside [0, 100]")));
            }
            let key = clean_title(occ);
            if key.is_empty() {
                return Err(Error::Schema("empty occupation in mapping".into()));
            }
            map.insert(
                key,
                OccupationInfo {
                    hisco: hisco.to_string(),
                    class4: class.parse()?,
                    hiscam,
                },
            );
        }
        Ok(OccupationMapping { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != MAPPING_COLUMNS {
            return Err(Error::Schema(format!(
                "{}: mapping header must be `{}`",
                path.display(),
                MAPPING_COLUMNS.join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let hiscam: f64 = rec[3]
                .trim()
                .parse()
                .map_err(|_| Error::Schema(format!("{} line {}: bad HISCAM `{}`", path.display(), i + 2, &rec[3])))?;
            rows.push((rec[0].to_string(), rec[1].to_string(), rec[2].to_string(), hiscam));
        }
        Self::from_rows(rows.iter().map(|(a, b, c, h)| (a.as_str(), b.as_str(), c.as_str(), *h)))
    }

    pub fn get(&self, occupation: &str) -> Option<&OccupationInfo> {
        self.map.get(occupation)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Status attributes of one spouse, taken from the occupation of that
/// spouse's own father on their birth record.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SpouseSide {
    pub occupation: Option<String>,
    pub class4: Option<Class4>,
    pub hiscam: Option<f64>,
}

impl SpouseSide {
    pub fn from_raw(raw: &str, dict: &OccupationDictionary, mapping: &OccupationMapping) -> Self {
        let occupation = normalize_occupation(raw, dict);
        let info = occupation.as_deref().and_then(|o| mapping.get(o));
        SpouseSide {
            class4: info.map(|i| i.class4),
            hiscam: info.map(|i| i.hiscam),
            occupation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpousePair {
    pub mother: RecordIx,
    pub father: RecordIx,
    /// Birth year of the earliest shared child.
    pub year: i32,
    /// Parish of that child.
    pub city: String,
    pub wife: SpouseSide,
    pub husband: SpouseSide,
    /// Link probabilities of the best qualifying child.
    pub mother_prob: f64,
    pub father_prob: f64,
}

/// A predicted parent with its link probability, if the method gives one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredLink {
    pub parent: RecordIx,
    pub probability: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChildParents {
    pub child: RecordIx,
    pub mother: Option<ScoredLink>,
    pub father: Option<ScoredLink>,
}

/// One pair per distinct (mother, father) with at least one shared child
/// whose two links both reach `p_th`. Year and city come from the earliest
/// shared child regardless of the threshold, so raising `p_th` only removes
/// pairs.
pub fn extract_spouse_pairs(
    births: &BirthTable,
    links: &[ChildParents],
    p_th: f64,
    occupations: &OccupationDictionary,
    mapping: &OccupationMapping,
) -> Vec<SpousePair> {
    struct Acc {
        first: (i32, RecordIx),
        best: Option<(f64, f64)>,
    }
    let mut acc: BTreeMap<(RecordIx, RecordIx), Acc> = BTreeMap::new();
    for l in links {
        let (Some(m), Some(f)) = (l.mother, l.father) else {
            continue;
        };
        let key = (l.child, births.get(l.child).year());
        let e = acc.entry((m.parent, f.parent)).or_insert(Acc {
            first: (key.1, key.0),
            best: None,
        });
        if (key.1, key.0) < e.first {
            e.first = (key.1, key.0);
        }
        if let (Some(pm), Some(pf)) = (m.probability, f.probability) {
            if pm >= p_th && pf >= p_th && e.best.is_none_or(|(a, b)| pm.min(pf) > a.min(b)) {
                e.best = Some((pm, pf));
            }
        }
    }
    acc.into_iter()
        .filter_map(|((mother, father), a)| {
            let (mother_prob, father_prob) = a.best?;
            let side = |ix: RecordIx| SpouseSide::from_raw(&births.get(ix).father_occupation_raw, occupations, mapping);
            Some(SpousePair {
                mother,
                father,
                year: a.first.0,
                city: births.get(a.first.1).parish_id.clone(),
                wife: side(mother),
                husband: side(father),
                mother_prob,
                father_prob,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Measure {
    /// Share of pairs whose fathers have the same occupation (p).
    Occupation,
    /// Share of pairs whose fathers are in the same class (q).
    Class4,
    /// Mean absolute HISCAM difference of the fathers (delta).
    Hiscam,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Occupation, Measure::Class4, Measure::Hiscam];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Occupation => "occupation",
            Measure::Class4 => "class4",
            Measure::Hiscam => "hiscam",
        }
    }

    fn id(self) -> u64 {
        self as u64 + 1
    }

    /// The per-pair value for a wife and a husband side, if both carry the
    /// attribute.
    pub fn value(self, wife: &SpouseSide, husband: &SpouseSide) -> Option<f64> {
        match self {
            Measure::Occupation => Some(eq(wife.occupation.as_ref()?, husband.occupation.as_ref()?)),
            Measure::Class4 => Some(eq(&wife.class4?, &husband.class4?)),
            Measure::Hiscam => Some((wife.hiscam? - husband.hiscam?).abs()),
        }
    }

    fn eligible(self, p: &SpousePair) -> bool {
        self.value(&p.wife, &p.husband).is_some()
    }

    /// Ratio oriented so that values above one mean assortative mating.
    pub fn ratio(self, observed: f64, null: f64) -> Option<f64> {
        let (num, den) = match self {
            Measure::Occupation | Measure::Class4 => (observed, null),
            Measure::Hiscam => (null, observed),
        };
        (den > 0.0).then(|| num / den)
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "occupation" | "p" => Ok(Measure::Occupation),
            "class4" | "q" => Ok(Measure::Class4),
            "hiscam" | "delta" => Ok(Measure::Hiscam),
            other => Err(Error::Config(format!("unknown measure `{other}`"))),
        }
    }
}

fn eq<T: PartialEq>(a: &T, b: &T) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Measure over the eligible pairs; `None` when there are none.
pub fn measure_value(pairs: &[SpousePair], measure: Measure) -> Option<f64> {
    mean(pairs.iter().filter_map(|p| measure.value(&p.wife, &p.husband)))
}

/// p (occupation) or q (class) over pairs with the attribute on both sides.
pub fn match_rate(pairs: &[SpousePair], measure: Measure) -> Option<f64> {
    debug_assert!(measure != Measure::Hiscam);
    measure_value(pairs, measure)
}

/// Mean absolute HISCAM difference (delta).
pub fn hiscam_mean_abs_diff(pairs: &[SpousePair]) -> Option<f64> {
    measure_value(pairs, Measure::Hiscam)
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NullConfig {
    /// Length of the tumbling year windows used as strata.
    pub window_years: i32,
    /// First year of a window.
    pub anchor: i32,
    /// Shuffles averaged per pair.
    pub n_null: usize,
}

impl Default for NullConfig {
    fn default() -> Self {
        NullConfig {
            window_years: 20,
            anchor: 1735,
            n_null: 20,
        }
    }
}

fn stratum(p: &SpousePair, cfg: &NullConfig) -> (String, i32) {
    (
        p.city.clone(),
        (p.year - cfg.anchor).div_euclid(cfg.window_years.max(1)),
    )
}

/// Strata of the pairs eligible for `measure`, ordered by key, each listing
/// pair indices ascending.
pub fn strata(pairs: &[SpousePair], measure: Measure, cfg: &NullConfig) -> Vec<Vec<usize>> {
    let mut map: BTreeMap<(String, i32), Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        if measure.eligible(p) {
            map.entry(stratum(p, cfg)).or_default().push(i);
        }
    }
    map.into_values().collect()
}

/// One null draw: `perm[i]` is the pair whose husband is given to the wife of
/// pair `i`. Husbands move only within their stratum; ineligible pairs and
/// singleton strata keep their own husband.
pub fn shuffle_husbands<R: Rng>(pairs: &[SpousePair], measure: Measure, cfg: &NullConfig, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..pairs.len()).collect();
    for s in strata(pairs, measure, cfg) {
        let mut shuffled = s.clone();
        shuffled.shuffle(rng);
        for (&i, &j) in s.iter().zip(&shuffled) {
            perm[i] = j;
        }
    }
    perm
}

/// The measure after giving wife `i` the husband of pair `perm[i]`.
pub fn measure_under_permutation(pairs: &[SpousePair], measure: Measure, perm: &[usize]) -> Option<f64> {
    mean(
        pairs
            .iter()
            .zip(perm)
            .filter_map(|(p, &j)| measure.value(&p.wife, &pairs[j].husband)),
    )
}

/// Per-pair null values averaged over `cfg.n_null` shuffles.
#[derive(Clone, Debug, PartialEq)]
pub struct NullValues {
    pub measure: Measure,
    /// Observed value per pair (`None` when ineligible).
    pub observed: Vec<Option<f64>>,
    /// Mean value under shuffling per pair.
    pub null: Vec<Option<f64>>,
    pub strata: usize,
    pub singleton_strata: usize,
}

pub fn null_values(pairs: &[SpousePair], measure: Measure, cfg: &NullConfig, seed: u64) -> NullValues {
    let st = strata(pairs, measure, cfg);
    let observed: Vec<Option<f64>> = pairs.iter().map(|p| measure.value(&p.wife, &p.husband)).collect();
    let mut sums = vec![0.0; pairs.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, measure.id(), 0x6e75_6c6c]));
    let draws = cfg.n_null.max(1);
    for _ in 0..draws {
        let perm = shuffle_husbands(pairs, measure, cfg, &mut rng);
        for (i, p) in pairs.iter().enumerate() {
            if observed[i].is_some() {
                sums[i] += measure.value(&p.wife, &pairs[perm[i]].husband).unwrap_or(0.0);
            }
        }
    }
    NullValues {
        measure,
        null: observed
            .iter()
            .zip(&sums)
            .map(|(o, s)| o.map(|_| s / draws as f64))
            .collect(),
        observed,
        singleton_strata: st.iter().filter(|s| s.len() == 1).count(),
        strata: st.len(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NullMeasures {
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub delta: Option<f64>,
}

/// Observed-vs-shuffled measures over all pairs.
pub fn null_model(pairs: &[SpousePair], cfg: &NullConfig, seed: u64) -> NullMeasures {
    let m = |measure| {
        let nv = null_values(pairs, measure, cfg, seed);
        mean(nv.null.iter().flatten().copied())
    };
    NullMeasures {
        p: m(Measure::Occupation),
        q: m(Measure::Class4),
        delta: m(Measure::Hiscam),
    }
}

/// SplitMix64 over a list of words; used to derive independent seeds.
pub fn mix(words: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &w in words {
        h ^= w;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesConfig {
    pub start: i32,
    pub end: i32,
    /// Half-width of the moving window.
    pub delta_t: i32,
    pub n_bootstrap: usize,
    /// Windows with fewer eligible pairs are skipped.
    pub min_pairs: usize,
    pub null: NullConfig,
    pub seed: u64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            start: 1735,
            end: 1885,
            delta_t: 10,
            n_bootstrap: 1000,
            min_pairs: 10,
            null: NullConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub year: i32,
    pub value: f64,
    pub null_value: f64,
    pub ratio: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub n_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatingSeries {
    pub measure: Measure,
    pub delta_t: i32,
    pub p_th: Option<f64>,
    pub points: Vec<SeriesPoint>,
    /// Years skipped for lack of pairs.
    pub gaps: Vec<i32>,
}

impl MatingSeries {
    pub fn point(&self, year: i32) -> Option<&SeriesPoint> {
        self.points.iter().find(|p| p.year == year)
    }

    pub fn ratios(&self) -> Vec<(i32, f64)> {
        self.points.iter().filter_map(|p| Some((p.year, p.ratio?))).collect()
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap of `ratio(mean(x), mean(z))` over resampled pairs.
fn bootstrap_ci(x: &[f64], z: &[f64], measure: Measure, b: usize, seed: u64) -> Option<(f64, f64)> {
    let n = x.len();
    if n == 0 || b == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(b);
    for _ in 0..b {
        let (mut sx, mut sz) = (0.0, 0.0);
        for _ in 0..n {
            let k = rng.gen_range(0..n);
            sx += x[k];
            sz += z[k];
        }
        if let Some(r) = measure.ratio(sx / n as f64, sz / n as f64) {
            stats.push(r);
        }
    }
    if stats.is_empty() {
        return None;
    }
    stats.sort_by(f64::total_cmp);
    Some((quantile(&stats, 0.025), quantile(&stats, 0.975)))
}

/// Moving-window series from precomputed per-pair observed and null values.
pub fn series_from_values(pairs: &[SpousePair], values: &NullValues, cfg: &SeriesConfig) -> MatingSeries {
    let measure = values.measure;
    let mut eligible: Vec<(i32, f64, f64)> = pairs
        .iter()
        .zip(values.observed.iter().zip(&values.null))
        .filter_map(|(p, (o, z))| Some((p.year, (*o)?, (*z)?)))
        .collect();
    eligible.sort_by_key(|e| e.0);
    let years: Vec<i32> = (cfg.start..=cfg.end).collect();
    let computed: Vec<(i32, Option<SeriesPoint>)> = years
        .par_iter()
        .map(|&y| {
            let lo = eligible.partition_point(|e| e.0 < y - cfg.delta_t);
            let hi = eligible.partition_point(|e| e.0 <= y + cfg.delta_t);
            let window = &eligible[lo..hi];
            if window.len() < cfg.min_pairs.max(1) {
                return (y, None);
            }
            let x: Vec<f64> = window.iter().map(|e| e.1).collect();
            let z: Vec<f64> = window.iter().map(|e| e.2).collect();
            let n = x.len() as f64;
            let value = x.iter().sum::<f64>() / n;
            let null_value = z.iter().sum::<f64>() / n;
            let ratio = measure.ratio(value, null_value);
            let ci = ratio.and_then(|r| {
                let seed = mix(&[cfg.seed, measure.id(), y as i64 as u64]);
                bootstrap_ci(&x, &z, measure, cfg.n_bootstrap, seed).map(|(a, b)| (a.min(r), b.max(r)))
            });
            (
                y,
                Some(SeriesPoint {
                    year: y,
                    value,
                    null_value,
                    ratio,
                    ci,
                    n_pairs: window.len(),
                }),
            )
        })
        .collect();
    let mut points = Vec::new();
    let mut gaps = Vec::new();
    for (y, p) in computed {
        match p {
            Some(p) => points.push(p),
            None => gaps.push(y),
        }
    }
    MatingSeries {
        measure,
        delta_t: cfg.delta_t,
        p_th: None,
        points,
        gaps,
    }
}

pub fn assortative_series(pairs: &[SpousePair], measure: Measure, cfg: &SeriesConfig) -> MatingSeries {
    let values = null_values(pairs, measure, &cfg.null, cfg.seed);
    series_from_values(pairs, &values, cfg)
}

/// Series for every (p_th, delta_t) cell and every measure. `pairs_for`
/// extracts the spouse pairs at a given threshold.
pub fn sensitivity_grid<F>(p_ths: &[f64], delta_ts: &[i32], cfg: &SeriesConfig, pairs_for: F) -> Vec<MatingSeries>
where
    F: Fn(f64) -> Vec<SpousePair>,
{
    let mut out = Vec::new();
    for &p_th in p_ths {
        let pairs = pairs_for(p_th);
        for measure in Measure::ALL {
            let values = null_values(&pairs, measure, &cfg.null, cfg.seed);
            for &dt in delta_ts {
                let mut s = series_from_values(&pairs, &values, &SeriesConfig { delta_t: dt, ..*cfg });
                s.p_th = Some(p_th);
                out.push(s);
            }
        }
    }
    out
}

/// Pearson correlation of two ratio series over their common years.
pub fn series_correlation(a: &MatingSeries, b: &MatingSeries) -> Option<f64> {
    let rb: HashMap<i32, f64> = b.ratios().into_iter().collect();
    let common: Vec<(f64, f64)> = a
        .ratios()
        .into_iter()
        .filter_map(|(y, r)| Some((r, *rb.get(&y)?)))
        .collect();
    pearson(&common)
}

pub fn pearson(xy: &[(f64, f64)]) -> Option<f64> {
    if xy.len() < 3 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in xy {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

pub const SERIES_COLUMNS: [&str; 10] = [
    "year",
    "measure",
    "value",
    "null_value",
    "ratio",
    "ci_lo",
    "ci_hi",
    "n_pairs",
    "p_th",
    "delta_t",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_series<W: Write>(out: W, series: &[MatingSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SERIES_COLUMNS)?;
    for s in series {
        for p in &s.points {
            w.write_record([
                p.year.to_string(),
                s.measure.as_str().to_string(),
                format!("{:.6}", p.value),
                format!("{:.6}", p.null_value),
                fmt_opt(p.ratio),
                fmt_opt(p.ci.map(|c| c.0)),
                fmt_opt(p.ci.map(|c| c.1)),
                p.n_pairs.to_string(),
                fmt_opt(s.p_th),
                s.delta_t.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<series output>", e))?;
    Ok(())
}

pub fn write_series_csv(path: impl AsRef<Path>, series: &[MatingSeries]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_series(std::io::BufWriter::new(file), series)
}
