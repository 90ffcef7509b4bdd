use groundkit::dataset::{clean_caption, keyword_filter, KeywordFilter, ManifestEntry, MockCleaner, RetryPolicy};
use proptest::prelude::*;

const VOCAB: &[&str] = &[
    "woman",
    "women",
    "child",
    "courtesan",
    "temple",
    "Woman",
    "fuji",
    "womanly",
    "CHILD",
];

fn text() -> impl Strategy<Value = Option<String>> {
    proptest::option::of(
        prop::collection::vec(
            (
                prop::sample::select(VOCAB),
                prop::sample::select(&[" ", ", ", ". "][..]),
            ),
            0..6,
        )
        .prop_map(|ws| ws.into_iter().map(|(w, s)| format!("{w}{s}")).collect()),
    )
}

fn keywords() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(&["woman", "child", "courtesan", "temple", "mount fuji"][..]),
        0..4,
    )
    .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn keyword_filter_is_monotone_subset(
        fields in prop::collection::vec((text(), text()), 0..12),
        base in keywords(),
        more in keywords(),
    ) {
        let entries: Vec<ManifestEntry> = fields
            .into_iter()
            .enumerate()
            .map(|(i, (t, d))| ManifestEntry::new(format!("e{i}"), format!("e{i}.jpg")).with_text(t.as_deref(), d.as_deref()))
            .collect();
        let small = keyword_filter(entries.clone(), &KeywordFilter::new(base.clone()));
        let large = keyword_filter(entries.clone(), &KeywordFilter::new(base.into_iter().chain(more)));
        let ids = |v: &[ManifestEntry]| v.iter().map(|e| e.image_id.clone()).collect::<std::collections::BTreeSet<_>>();
        let all = ids(&entries);
        prop_assert!(ids(&small).is_subset(&all));
        prop_assert!(ids(&small).is_subset(&ids(&large)));
    }

    #[test]
    fn mock_cleaning_is_deterministic_and_idempotent(
        parts in prop::collection::vec(prop::sample::select(&[
            "Two women by a temple.", "Good condition.", "Lot 12.", "A child with a fan.",
            "Estimate 300 USD.", "Size 36x24cm.", "Signed Hiroshige.",
        ][..]), 1..6)
    ) {
        let raw = parts.join(" ");
        let m = MockCleaner::default();
        let retry = RetryPolicy::default();
        let once = clean_caption(&raw, &m, &retry).unwrap();
        prop_assert_eq!(&clean_caption(&raw, &m, &retry).unwrap(), &once);
        prop_assert_eq!(clean_caption(&once.text, &m, &retry).unwrap().text, once.text.clone());
        prop_assert!(once.text.chars().count() <= raw.chars().count());
    }
}
