//! Tokenizing a caption and working with normalized boxes.
//!
//! ```text
//! cargo run -p groundkit --example boxes_and_tokens
//! ```

use groundkit::{containment, iou, tokenize, BBox};

fn main() -> groundkit::Result<()> {
    let prompt = tokenize("Two women, a boy and the courtesan's fan.")?;
    for (i, t) in prompt.tokens().iter().enumerate() {
        println!("{i:2} {:<10} {:?} chars {}..{}", t.text, t.kind, t.start, t.end);
    }

    let person = BBox::new(0.30, 0.20, 0.62, 0.96)?;
    let face = BBox::new(0.40, 0.22, 0.52, 0.40)?;
    // detector output is often (cx, cy, w, h)
    let other = BBox::from_center(0.46, 0.58, 0.32, 0.74)?;
    println!("other as corners: {:?}", other.to_array());
    println!("iou(person, other)        = {:.4}", iou(&person, &other));
    println!("containment(face, person) = {:.4}", containment(&face, &person));

    // boxes outside [0, 1] or with x_min > x_max are rejected
    assert!(BBox::new(0.5, 0.2, 0.1, 0.9).is_err());
    assert!(BBox::from_center(0.95, 0.5, 0.2, 0.2).is_err());
    Ok(())
}
