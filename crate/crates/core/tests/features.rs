mod common;

use genlink::features::*;
use genlink::records::LatLon;
use genlink::synthgen::GeneratorConfig;
use genlink::Role;
use proptest::prelude::*;

fn name() -> impl Strategy<Value = String> {
    "[a-z]{0,10}"
}

#[test]
fn features_respect_their_domains_on_synthetic_data() {
    let bench = common::Bench::new(&GeneratorConfig::with_births(3000, 21));
    let d = &bench.data;
    let mut checked = 0;
    for (child, sets) in d.candidates.iter().enumerate() {
        for (set, role) in sets.iter().zip([Role::Mother, Role::Father]) {
            for &cand in &set.candidates {
                let f = d.features(genlink::RecordIx(child as u32), cand, role, 0.25);
                checked += 1;
                assert!((10.0..=70.0).contains(&f[CANDIDATE_AGE]));
                for k in [FIRST_NAME_SIM, MIDDLE_NAME_SIM, LAST_NAME_SIM, PATRONYM_SIM] {
                    assert!((0.0..=1.0).contains(&f[k]));
                }
                // Blocking guarantees exact normalized name agreement.
                assert_eq!((f[FIRST_NAME_SIM], f[LAST_NAME_SIM]), (1.0, 1.0));
                for k in [
                    REPORTED_AGE_MISSING,
                    GEO_MISSING,
                    MIDDLE_NAME_MISSING,
                    PATRONYM_MISSING,
                    IS_MOTHER_LINK,
                    CHILD_LOCATION_MISSING,
                    KNOWN_DEAD_BEFORE_BIRTH,
                    DEATH_UNKNOWN,
                ] {
                    assert!(f[k] == 0.0 || f[k] == 1.0);
                }
                assert_eq!(f[IS_MOTHER_LINK] == 1.0, role == Role::Mother);
                assert_eq!(f[NAIVE_BAYES_PROB], 0.25);
                // At most one of "unknown" and "dead before birth".
                assert!(f[KNOWN_DEAD_BEFORE_BIRTH] + f[DEATH_UNKNOWN] <= 1.0);
                assert_eq!(f[YEARS_DEAD_BEFORE_BIRTH] > 0.0, f[KNOWN_DEAD_BEFORE_BIRTH] == 1.0);
                if f[REPORTED_AGE_MISSING] == 1.0 {
                    assert_eq!(f[REPORTED_AGE_DIFF], 0.0);
                }
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn death_links_are_precise_without_noise() {
    let cfg = GeneratorConfig {
        noise: 0.0,
        ..GeneratorConfig::with_births(4000, 22)
    };
    let bench = common::Bench::new(&cfg);
    let truth: std::collections::HashMap<&str, Option<&str>> = bench
        .synth
        .truth_deaths
        .iter()
        .map(|t| (t.death_id.as_str(), t.birth_id.as_deref()))
        .collect();
    let d = &bench.data;
    let (mut n, mut correct) = (0, 0);
    for (birth, link) in d.death_links.iter() {
        n += 1;
        let death_id = d.deaths[link.death].id.as_str();
        correct += (truth.get(death_id).copied().flatten() == Some(d.births.id(birth))) as usize;
    }
    assert!(n > 100, "only {n} death links");
    assert!(correct as f64 / n as f64 >= 0.95, "{correct}/{n}");
    let s = d.death_links.stats;
    assert_eq!(s.unique, s.linked + s.contested);
    assert_eq!(s.deaths, s.unique + s.ambiguous + s.no_match);
}

proptest! {
    #[test]
    fn jaro_winkler_is_a_bounded_symmetric_similarity(a in name(), b in name()) {
        let ab = jaro_winkler(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - jaro_winkler(&b, &a)).abs() < 1e-12);
        prop_assert!(jaro(&a, &b) <= ab + 1e-12);
        if !a.is_empty() {
            prop_assert_eq!(jaro_winkler(&a, &a), 1.0);
        }
    }

    #[test]
    fn haversine_is_a_metric_on_samples(
        p in (59.0f64..66.0, 20.0f64..30.0),
        q in (59.0f64..66.0, 20.0f64..30.0),
        r in (59.0f64..66.0, 20.0f64..30.0),
    ) {
        let [p, q, r] = [p, q, r].map(|(lat, lon)| LatLon { lat, lon });
        let pq = geo_distance_km(p, q);
        prop_assert!(pq >= 0.0);
        prop_assert!((pq - geo_distance_km(q, p)).abs() < 1e-9);
        prop_assert!(geo_distance_km(p, p) < 1e-9);
        prop_assert!(pq <= geo_distance_km(p, r) + geo_distance_km(r, q) + 1e-9);
    }
}
