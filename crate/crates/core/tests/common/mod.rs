#![allow(dead_code)]

use genlink::evaluation::{ground_truth_edges, match_ground_truth, split_train_test, GroundTruthLink, Split};
use genlink::homogamy::{ChildParents, ScoredLink};
use genlink::pipeline::Dataset;
use genlink::probmodel::{link_posterior, LinkPosterior, PriorModel};
use genlink::records::{BirthRecord, BirthTable, Date, NameDictionary, ParentName};
use genlink::synthgen::{generate, GeneratorConfig, SyntheticData};
use genlink::RecordIx;

pub struct Bench {
    pub synth: SyntheticData,
    pub data: Dataset,
    pub links: Vec<GroundTruthLink>,
}

impl Bench {
    pub fn new(cfg: &GeneratorConfig) -> Bench {
        let synth = generate(cfg).expect("generator config is valid");
        let data = Dataset::with_default_cap(synth.births.clone(), synth.deaths.clone()).expect("unique ids");
        let matched = match_ground_truth(&synth.network, &data.births, &synth.name_dictionary());
        let links = split_train_test(&ground_truth_edges(&synth.network, &matched), 0.7);
        Bench { synth, data, links }
    }

    pub fn split(&self, split: Split) -> Vec<GroundTruthLink> {
        self.links.iter().copied().filter(|l| l.split == split).collect()
    }
}

/// The generator's true parent links as fully confident links.
pub fn truth_parents(synth: &SyntheticData, births: &BirthTable) -> Vec<ChildParents> {
    let mut by_child: std::collections::BTreeMap<RecordIx, ChildParents> = Default::default();
    for t in &synth.truth_links {
        let (Some(child), Some(parent)) = (
            births.ix(&t.child_id),
            t.parent_id.as_deref().and_then(|p| births.ix(p)),
        ) else {
            continue;
        };
        let e = by_child.entry(child).or_insert(ChildParents {
            child,
            mother: None,
            father: None,
        });
        let link = Some(ScoredLink {
            parent,
            probability: Some(1.0),
        });
        match t.role {
            genlink::Role::Mother => e.mother = link,
            genlink::Role::Father => e.father = link,
        }
    }
    by_child.into_values().collect()
}

/// Small random posterior instances over mothers 0..5 and fathers 10..15.
pub fn random_posteriors(rng: &mut impl rand::Rng, max_children: usize, max_cands: usize) -> Vec<[LinkPosterior; 2]> {
    use rand::seq::SliceRandom;
    let n = rng.gen_range(1..=max_children);
    let prior = PriorModel::new(rng.gen_range(0.05..0.5)).unwrap();
    (0..n)
        .map(|c| {
            let child = RecordIx(100 + c as u32);
            let mut one = |role: genlink::Role, base: u32| -> LinkPosterior {
                let k = rng.gen_range(0..=max_cands);
                let mut cands: Vec<RecordIx> = (0..5).map(|i| RecordIx(base + i)).collect();
                cands.shuffle(rng);
                cands.truncate(k);
                cands.sort();
                let ratios: Vec<f64> = cands.iter().map(|_| rng.gen_range(0.01..20.0)).collect();
                link_posterior(child, role, &cands, &ratios, &prior).unwrap()
            };
            [one(genlink::Role::Mother, 0), one(genlink::Role::Father, 10)]
        })
        .collect()
}

/// A birth record with only the fields blocking looks at.
pub fn birth(id: &str, first: &str, last: &str, year: i32, mother: (&str, &str), father: (&str, &str)) -> BirthRecord {
    let names = NameDictionary::empty();
    let mut r = BirthRecord {
        id: id.into(),
        child_first: first.into(),
        child_middle: String::new(),
        child_last: last.into(),
        child_patronym: String::new(),
        norm_first: String::new(),
        norm_middle: String::new(),
        norm_last: String::new(),
        norm_patronym: String::new(),
        birth_date: Date::year(year),
        parish_id: "p".into(),
        location: None,
        father: ParentName::new(father.0, father.1, "", &names),
        father_occupation_raw: String::new(),
        mother: ParentName::new(mother.0, mother.1, "", &names),
        mother_reported_age: None,
    };
    r.normalize(&names);
    r
}
