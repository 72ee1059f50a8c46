//! Replays the checked-in fuzz corpus through the parsers. Seeds whose names
//! start with `bad_`, `negative_`, `null_` or `empty` must be rejected, all
//! others accepted.

use std::fs;
use std::path::PathBuf;

use essf::essf_sim::parse_tree_dump;
use essf::{Characteristics, MarkedPartition};

fn corpus(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, fs::read_to_string(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

fn should_fail(name: &str) -> bool {
    ["bad_", "negative_", "null_", "empty"].iter().any(|p| name.starts_with(p))
}

#[test]
fn marked_partition_seeds() {
    for (name, text) in corpus("parse_marked_partition") {
        match text.parse::<MarkedPartition>() {
            Ok(x) => {
                assert!(!should_fail(&name), "{name} parsed");
                assert_eq!(x.to_string().parse::<MarkedPartition>().unwrap(), x);
            }
            Err(_) => assert!(should_fail(&name), "{name} was rejected"),
        }
    }
}

#[test]
fn characteristics_seeds() {
    for (name, text) in corpus("parse_characteristics") {
        match Characteristics::from_toml_str(&text) {
            Ok(ch) => {
                assert!(!should_fail(&name), "{name} parsed");
                assert_eq!(ch.to_config().build().unwrap(), ch);
            }
            Err(_) => assert!(should_fail(&name), "{name} was rejected"),
        }
    }
}

#[test]
fn tree_dump_seeds() {
    for (name, text) in corpus("parse_tree_dump") {
        match parse_tree_dump(&text) {
            Ok(dump) => {
                assert!(!should_fail(&name), "{name} parsed");
                assert!(!dump.headers.is_empty() && !dump.nodes.is_empty());
            }
            Err(_) => assert!(should_fail(&name), "{name} was rejected"),
        }
    }
}
