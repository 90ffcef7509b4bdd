//! Keyword selection, caption assembly and grouped train/val/test splits,
//! written out as a JSONL manifest.
//!
//! ```text
//! cargo run -p groundkit --example build_dataset
//! ```

use groundkit::dataset::{
    assign_splits, keyword_filter, load_manifest, save_manifest, KeywordFilter, ManifestEntry, SplitSpec,
};

fn main() -> groundkit::Result<()> {
    let raw = [
        (
            "p01",
            "p01.jpg",
            "Courtesan with a fan",
            "Woodblock print. Condition: good.",
        ),
        (
            "p02",
            "p02.jpg",
            "Mount Fuji from the sea",
            "Lot 14, estimate on request.",
        ),
        // a second scan of the same print: must land in the same split
        ("p02b", "p02.jpg", "Mount Fuji from the sea (reprint)", ""),
        ("p03", "p03.jpg", "Bridge at night", "Rain over the river."),
        ("p04", "p04.jpg", "Two women under a maple", ""),
        ("p05", "p05.jpg", "Actor portrait", "Half-length portrait."),
    ];
    let entries: Vec<ManifestEntry> = raw
        .iter()
        .map(|(id, path, title, desc)| {
            let desc = (!desc.is_empty()).then_some(*desc);
            ManifestEntry::new(*id, *path).with_text(Some(title), desc)
        })
        .collect();

    let filter = KeywordFilter::new(["courtesan", "fuji", "women", "bridge"]);
    // also joins title and description into the caption
    let kept = keyword_filter(entries, &filter);

    let spec = SplitSpec {
        train: 0.5,
        val: 0.25,
        test: 0.25,
        seed: 7,
    };
    let kept = assign_splits(kept, &spec)?;
    for e in &kept {
        println!(
            "{:<5} {:<6} {:?}",
            e.image_id,
            e.split.as_str(),
            e.caption.as_deref().unwrap_or("")
        );
    }

    let dir = std::env::temp_dir().join("groundkit-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("manifest.jsonl");
    save_manifest(&path, &kept)?;
    let back = load_manifest(&path)?;
    assert_eq!(back.records, kept);
    println!("wrote {} entries to {}", kept.len(), path.display());
    Ok(())
}
