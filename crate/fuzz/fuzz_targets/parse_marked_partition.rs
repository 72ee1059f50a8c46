#![no_main]

use essf::MarkedPartition;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(x) = s.parse::<MarkedPartition>() {
        // Printing yields the canonical form, which must parse to the same value.
        let back: MarkedPartition = x.to_string().parse().expect("printed partitions parse");
        assert_eq!(back, x);
        for n in 1..=x.level() {
            assert_eq!(x.restrict(n).unwrap().level(), n);
        }
    }
});
