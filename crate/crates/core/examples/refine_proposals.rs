//! Turning raw grounding proposals into pseudo-ground-truth regions.
//!
//! Two nearly identical boxes over "two women, a boy": one leaks score onto
//! every token, the other is confident only about the boy. The naive
//! reading yields two overlapping, badly labelled regions; refinement keeps
//! a single "boy".
//!
//! ```text
//! cargo run -p groundkit --example refine_proposals
//! ```

use groundkit::refine::raw_regions;
use groundkit::{refine, tokenize, BBox, Proposal, ProposalSet, RefineConfig};

fn main() -> groundkit::Result<()> {
    let prompt = tokenize("two women, a boy")?;
    let set = ProposalSet::new(
        "print-0001",
        prompt,
        vec![
            Proposal {
                bbox: BBox::new(0.30, 0.20, 0.62, 0.95)?,
                token_scores: vec![0.30, 0.25, 0.05, 0.25, 0.22],
            },
            Proposal {
                bbox: BBox::new(0.30, 0.20, 0.62, 0.96)?,
                token_scores: vec![0.08, 0.06, 0.02, 0.34, 0.36],
            },
        ],
    );
    let cfg = RefineConfig::default();

    println!("unrefined:");
    for r in raw_regions(&set, &cfg)? {
        println!(
            "  {:?} {:?} conf {:.2}",
            r.phrase,
            r.bbox.to_array(),
            r.confidence.unwrap()
        );
    }

    let out = refine(&set, &cfg)?;
    println!("refined:");
    for r in &out.regions {
        println!(
            "  {:?} {:?} conf {:.2}",
            r.phrase,
            r.bbox.to_array(),
            r.confidence.unwrap()
        );
    }
    println!("{:#?}", out.counts);
    Ok(())
}
