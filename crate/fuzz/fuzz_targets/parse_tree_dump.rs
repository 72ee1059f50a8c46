#![no_main]

use essf::essf_sim::parse_tree_dump;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(dump) = parse_tree_dump(s) {
        for node in &dump.nodes {
            assert!(node.birth <= node.death);
            assert!(!node.members.contains(&0));
        }
    }
});
