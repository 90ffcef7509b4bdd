//! Building a dot-separated class prompt for open-vocabulary detection and
//! mapping token spans back to class names.
//!
//! ```text
//! cargo run -p groundkit --example class_prompt
//! ```

use groundkit::build_class_prompt;

fn main() -> groundkit::Result<()> {
    let classes = ["woman", "old man", "Mount Fuji", "temple"];
    let cp = build_class_prompt(&classes)?;
    println!("prompt: {:?}", cp.prompt.text());
    for (i, (name, range)) in cp.class_spans.iter().enumerate() {
        println!("  {name:<12} tokens {range:?} -> {:?}", cp.class_text(i));
    }
    Ok(())
}
