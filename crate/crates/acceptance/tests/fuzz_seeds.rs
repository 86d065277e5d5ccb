//! Every checked-in fuzz seed must parse, and round trip where the target
//! asserts a round trip.

use std::fs;
use std::path::PathBuf;

use oraldx_core::datapipe::{read_counts_csv, Manifest};
use oraldx_core::engine::EngineConfig;
use oraldx_core::evaluation::{PredictionLog, PublishedTable};
use oraldx_core::fusion::bundle::decode;
use oraldx_core::reasoning::DialogueScript;
use oraldx_core::taxonomy::Taxonomy;
use oraldx_service::parse_log;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fuzz", "corpus", target]
        .iter()
        .collect();
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.display().to_string(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn every_target_has_seeds_and_a_source_file() {
    let targets = [
        "taxonomy_parse",
        "bundle_decode",
        "manifest_parse",
        "dialogue_script",
        "counts_csv",
        "event_log",
        "published_table",
        "prediction_log",
        "engine_config",
    ];
    let root: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fuzz"].iter().collect();
    let manifest = fs::read_to_string(root.join("Cargo.toml")).unwrap();
    for t in targets {
        assert!(root.join("fuzz_targets").join(format!("{t}.rs")).exists(), "{t}");
        assert!(manifest.contains(&format!("name = \"{t}\"")), "{t}");
        seeds(t);
    }
}

#[test]
fn seeds_parse() {
    for (name, bytes) in seeds("taxonomy_parse") {
        assert_eq!(Taxonomy::parse(text(&bytes)).unwrap().len(), 118, "{name}");
    }
    for (name, bytes) in seeds("bundle_decode") {
        decode(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, bytes) in seeds("manifest_parse") {
        let m = Manifest::parse(&bytes[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut out = Vec::new();
        m.write(&mut out).unwrap();
        assert_eq!(Manifest::parse(&out[..]).unwrap(), m, "{name}");
    }
    for (name, bytes) in seeds("dialogue_script") {
        let s = DialogueScript::parse(text(&bytes)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(DialogueScript::parse(&s.to_toml()).unwrap(), s);
    }
    for (name, bytes) in seeds("counts_csv") {
        read_counts_csv(&bytes[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, bytes) in seeds("event_log") {
        assert!(!parse_log(text(&bytes))
            .unwrap_or_else(|e| panic!("{name}: {e}"))
            .is_empty());
    }
    for (name, bytes) in seeds("published_table") {
        PublishedTable::read_csv(&bytes[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, bytes) in seeds("prediction_log") {
        let log = PredictionLog::read_csv(&bytes[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(PredictionLog::read_csv(log.to_csv().as_bytes()).unwrap(), log);
    }
    for (name, bytes) in seeds("engine_config") {
        let c: EngineConfig = toml::from_str(text(&bytes)).unwrap_or_else(|e| panic!("{name}: {e}"));
        c.validate().unwrap();
    }
}

#[test]
fn truncated_seeds_fail_cleanly() {
    for (_, bytes) in seeds("bundle_decode") {
        for cut in 0..bytes.len() {
            assert!(decode(&bytes[..cut]).is_err());
        }
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 1;
        assert!(decode(&flipped).is_err());
    }
    for (_, bytes) in seeds("event_log") {
        let s = text(&bytes);
        for cut in (0..s.len()).step_by(97).filter(|c| s.is_char_boundary(*c)) {
            let _ = parse_log(&s[..cut]);
        }
    }
}
