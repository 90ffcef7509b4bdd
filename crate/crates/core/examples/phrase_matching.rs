//! Phrase normalization and the exact and fuzzy matching policies.
//!
//! ```text
//! cargo run -p groundkit --example phrase_matching
//! ```

use groundkit::matchers::NormalizeOptions;
use groundkit::{normalize_phrase, phrases_match, MatchPolicy};

fn main() {
    let full = NormalizeOptions::default();
    for p in ["The  Boy", "two women", "an old man", "Mount   Fuji"] {
        println!("{p:?} -> {:?}", normalize_phrase(p, &full));
    }

    let exact = MatchPolicy::exact();
    let fuzzy = MatchPolicy::fuzzy(0.5);
    for (a, b) in [
        ("a boy", "boy"),
        ("old man", "man"),
        ("woman", "women"),
        ("temple", "boy"),
    ] {
        println!(
            "{a:?} vs {b:?}: exact={} fuzzy={}",
            phrases_match(a, b, &exact),
            phrases_match(a, b, &fuzzy)
        );
    }
}
