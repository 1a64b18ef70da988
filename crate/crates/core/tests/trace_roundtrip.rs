mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use specwands::workload::{emit_trace, parse_trace, validate};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn emit_then_parse_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, _) = common::random_workload(&mut rng, common::Shape::default());
        prop_assert!(validate(&w).is_empty());
        let text = emit_trace(&w);
        let back = parse_trace(&text).unwrap();
        prop_assert_eq!(&back, &w);
        prop_assert_eq!(emit_trace(&back), text);
    }
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let w = parse_trace("# workload: demo\n\nT0: alu   # first\nT1: div lat=3\n").unwrap();
    assert_eq!(w.name, "demo");
    assert_eq!(w.len(), 2);
}
