mod support;

use groundkit::dataset::{load_proposals, load_regions, save_proposals, save_regions};
use groundkit::{AnnotationRecord, BBox, Region};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::random_proposal_set;

#[test]
fn proposals_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let sets: Vec<_> = (0..300)
        .map(|i| random_proposal_set(&mut rng, &format!("img{i}")))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("proposals.jsonl");
    save_proposals(&path, &sets).unwrap();
    let loaded = load_proposals(&path).unwrap();
    assert!(loaded.warnings.is_empty());
    assert_eq!(loaded.records, sets);
}

fn any_box() -> impl Strategy<Value = BBox> {
    (0.0f64..0.99, 0.0f64..0.99, 0.0f64..1.0, 0.0f64..1.0).prop_filter_map("positive area", |(x0, y0, a, b)| {
        let x1 = x0 + a * (1.0 - x0);
        let y1 = y0 + b * (1.0 - y0);
        BBox::new(x0, y0, x1, y1).ok()
    })
}

fn any_region() -> impl Strategy<Value = Region> {
    (any_box(), "[a-zA-Z ,'é]{0,12}[a-z]", proptest::option::of(0.0f64..=1.0))
        .prop_map(|(b, p, c)| Region::new(b, p, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn regions_round_trip(
        records in prop::collection::vec(
            ("[a-z0-9_-]{1,10}", ".{0,30}", prop::collection::vec(any_region(), 0..6), 0u64..50),
            0..8,
        )
    ) {
        let mut seen = std::collections::HashSet::new();
        let records: Vec<AnnotationRecord> = records
            .into_iter()
            .filter(|r| seen.insert(r.0.clone()))
            .map(|(id, caption, regions, version)| {
                let mut r = AnnotationRecord::new(id, caption, regions);
                r.version = version;
                r
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("regions.jsonl");
        save_regions(&path, &records).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = load_regions(&path).unwrap().records;
        prop_assert_eq!(&loaded, &records);
        save_regions(&path, &loaded).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), first);
    }
}
