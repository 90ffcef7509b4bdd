//! Dataset statistics: image, region and unique-phrase counts under each
//! normalization variant.
//!
//! ```text
//! cargo run -p groundkit --example dataset_stats
//! ```

use groundkit::dataset::{dataset_stats, ManifestEntry, Split};
use groundkit::{AnnotationRecord, BBox, Region};

fn main() {
    let bx = BBox::new(0.1, 0.1, 0.6, 0.9).unwrap();
    let records = vec![
        AnnotationRecord::new(
            "p01",
            "",
            vec![Region::new(bx, "a boy", None), Region::new(bx, "Two Women", None)],
        ),
        AnnotationRecord::new("p02", "", vec![Region::new(bx, "boy", None)]),
        AnnotationRecord::new(
            "p03",
            "",
            vec![Region::new(bx, "women", None), Region::new(bx, "the  temple", None)],
        ),
    ];
    let manifest: Vec<ManifestEntry> = ["p01", "p02", "p03", "p04"]
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let mut e = ManifestEntry::new(*id, format!("{id}.jpg"));
            e.split = if i < 3 { Split::Train } else { Split::Test };
            e
        })
        .collect();
    let st = dataset_stats(Some(&manifest), &records);
    print!("{}", st.to_text());
}
