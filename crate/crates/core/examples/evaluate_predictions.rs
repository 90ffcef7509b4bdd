//! Scoring predicted regions against ground truth with mAP and recall@k.
//!
//! ```text
//! cargo run -p groundkit --example evaluate_predictions
//! ```

use groundkit::{evaluate, AnnotationRecord, BBox, EvalConfig, MatchMode, MatchPolicy, Region};

fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
    BBox::new(x0, y0, x1, y1).unwrap()
}

fn main() -> groundkit::Result<()> {
    let gt = vec![
        AnnotationRecord::new(
            "a",
            "an old man and a boy",
            vec![
                Region::new(b(0.10, 0.10, 0.45, 0.90), "old man", None),
                Region::new(b(0.55, 0.40, 0.80, 0.95), "boy", None),
            ],
        ),
        AnnotationRecord::new(
            "b",
            "a temple",
            vec![Region::new(b(0.0, 0.0, 1.0, 0.6), "temple", None)],
        ),
        // no ground truth: excluded from the averages and listed in the report
        AnnotationRecord::new("c", "", vec![]),
    ];
    let pred = vec![
        AnnotationRecord::new(
            "a",
            "",
            vec![
                Region::new(b(0.12, 0.10, 0.45, 0.88), "man", Some(0.9)),
                Region::new(b(0.55, 0.42, 0.80, 0.95), "a boy", Some(0.8)),
            ],
        ),
        AnnotationRecord::new(
            "b",
            "",
            vec![Region::new(b(0.0, 0.1, 1.0, 0.6), "the temple", Some(0.7))],
        ),
    ];

    for mode in [MatchMode::Exact, MatchMode::Fuzzy] {
        let cfg = EvalConfig {
            match_policy: MatchPolicy::default().with_mode(mode),
            ..EvalConfig::default()
        };
        let report = evaluate(&gt, &pred, &cfg)?;
        println!("{}", report.to_table());
        println!("without ground truth: {:?}\n", report.images_without_gt);
    }
    Ok(())
}
