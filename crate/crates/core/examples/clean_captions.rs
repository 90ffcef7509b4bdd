//! Stripping catalogue boilerplate from captions. The mock cleaner works
//! offline; `HttpCleaner` talks to an OpenAI-compatible chat endpoint with
//! the same interface.
//!
//! ```text
//! cargo run -p groundkit --example clean_captions
//! ```

use groundkit::dataset::clean::DEFAULT_BOILERPLATE;
use groundkit::dataset::{clean_many, MockCleaner, RetryPolicy};

fn main() -> groundkit::Result<()> {
    let raws: Vec<String> = [
        "Courtesan with a fan. Woodblock print. Condition: minor foxing.",
        "Mount Fuji from the sea. Lot 14. Estimate 200-300 USD.",
        "Bridge at night. Size 37.5 x 25 cm.",
        "Auction lot.",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    // the built-in boilerplate list plus one collection-specific pattern
    let mut patterns = DEFAULT_BOILERPLATE.to_vec();
    patterns.push(r"(?i)\bwoodblock print\b");
    let cleaner = MockCleaner::new(&patterns)?;
    for (raw, out) in raws.iter().zip(clean_many(&raws, &cleaner, &RetryPolicy::default(), 4)) {
        let out = out?;
        println!(
            "{raw:?}\n  -> {:?}{}",
            out.text,
            if out.used_fallback { " (fallback)" } else { "" }
        );
        if let Some(w) = out.warning {
            println!("  warning: {w}");
        }
    }
    Ok(())
}
