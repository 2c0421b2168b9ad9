//! Only the providers module may name a concrete external vendor.

use std::fs;
use std::path::{Path, PathBuf};

const VENDORS: &[&str] = &["twilio", "firebase", "fcm", "apns", "google maps", "googleapis", "mapbox", "aws sns", "vonage"];

fn rust_files(dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            if path.file_name().is_some_and(|n| n != "target") {
                rust_files(&path, out);
            }
        } else if path.extension().is_some_and(|e| e == "rs") {
            out.push(path);
        }
    }
}

#[test]
fn vendor_names_stay_inside_providers() {
    let crates = Path::new(env!("CARGO_MANIFEST_DIR")).parent().unwrap();
    let mut files = Vec::new();
    rust_files(crates, &mut files);
    let allowed = Path::new(env!("CARGO_MANIFEST_DIR")).join("src/providers.rs");
    assert!(files.len() > 10, "scan found too few files");
    let mut offenders = Vec::new();
    for f in files {
        if f == allowed || f.ends_with("tests/architecture.rs") {
            continue;
        }
        let text = fs::read_to_string(&f).unwrap().to_lowercase();
        for v in VENDORS {
            if text.contains(v) {
                offenders.push(format!("{} mentions {v}", f.display()));
            }
        }
    }
    assert!(offenders.is_empty(), "{}", offenders.join("\n"));
}

#[test]
fn providers_module_is_the_only_vendor_boundary() {
    let src = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/providers.rs")).unwrap();
    for t in ["pub trait SmsProvider", "pub trait PushProvider", "pub trait Geocoder"] {
        assert!(src.contains(t), "missing {t}");
    }
}
