//! Replays the checked-in fuzz seeds through the same round-trip checks the
//! fuzz targets make.

use std::fs;
use std::path::PathBuf;

use cosmargin::dataio::{
    encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, parse_pairs, parse_templates,
    write_pairs, write_templates,
};
use cosmargin::evalkit::FeatureTable;
use cosmargin::netopt::Checkpoint;
use cosmargin_cli::commands::margins_trace;
use cosmargin_cli::{Assignments, RunConfig};

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
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
fn idx_seeds() {
    let mut parsed = 0;
    for (_, b) in seeds("idx_images") {
        if let Ok(images) = parse_idx_images(&b) {
            assert_eq!(encode_idx_images(&images), b);
            parsed += 1;
        }
    }
    for (_, b) in seeds("idx_labels") {
        if let Ok(labels) = parse_idx_labels(&b) {
            assert_eq!(encode_idx_labels(&labels), b);
            parsed += 1;
        }
    }
    assert_eq!(parsed, 3);
}

#[test]
fn list_seeds() {
    for (p, b) in seeds("pairs") {
        let r = parse_pairs(text(&b), None);
        assert_eq!(r.is_ok(), !p.ends_with("short_line.txt"));
        if let Ok(pairs) = r {
            assert_eq!(parse_pairs(&write_pairs(&pairs), None).unwrap(), pairs);
        }
    }
    for (p, b) in seeds("templates") {
        let r = parse_templates(text(&b), None);
        assert_eq!(r.is_ok(), !p.ends_with("duplicate_id.txt"));
        if let Ok(set) = r {
            assert_eq!(parse_templates(&write_templates(&set), None).unwrap(), set);
        }
    }
}

#[test]
fn checkpoint_and_feature_seeds() {
    for (p, b) in seeds("checkpoint") {
        let ck = Checkpoint::decode(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(ck.encode(), b);
    }
    for (p, b) in seeds("features_bin") {
        let t = FeatureTable::from_bytes(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(t.to_bytes(), b);
    }
    for (p, b) in seeds("features_csv") {
        let t = FeatureTable::from_csv(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(t.to_csv(), text(&b));
    }
}

#[test]
fn config_and_log_seeds() {
    for (p, b) in seeds("config") {
        let raw = Assignments::parse(text(&b));
        if p.ends_with("bad_line.cfg") {
            assert!(raw.is_err());
            continue;
        }
        let cfg = RunConfig::from_assignments(&raw.unwrap()).unwrap();
        let again = RunConfig::from_assignments(&Assignments::parse(&cfg.dump()).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }
    for (p, b) in seeds("train_log") {
        assert_eq!(margins_trace(text(&b)).is_ok(), p.ends_with("malmc.csv"));
    }
}
