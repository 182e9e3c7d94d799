//! Checkpoint container: byte-exact round trips and distinct load failures.

use csae::checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
use csae::AppError;
use csae_core::classifier::{build_classifier, ClassifierConfig};
use csae_core::csae::{build_csae, CsaeConfig};
use csae_core::signal::Standardizer;
use csae_core::Tensor;

fn sample() -> Checkpoint {
    let ae = build_csae(&CsaeConfig::default(), 17).unwrap();
    let clf = build_classifier(&ae.encoder(), &ClassifierConfig::default(), 18).unwrap();
    Checkpoint {
        graph: clf.graph,
        standardizer: Standardizer::from_stats([0.125, -3.5e-3], [1.75, 0.0625]),
        class_names: csae_core::signal::CLASS_NAMES[..6]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        seed: 17,
        lambda: 1e-7,
    }
}

/// Header text and payload offset of a serialized checkpoint.
fn split(bytes: &[u8]) -> (String, usize) {
    let s = std::str::from_utf8(&bytes[..200]).unwrap_or("");
    let mut lines = s.splitn(3, '\n');
    assert_eq!(lines.next(), Some(MAGIC));
    let len_line = lines.next().unwrap();
    let hlen: usize = len_line.parse().unwrap();
    let start = MAGIC.len() + 1 + len_line.len() + 1;
    (
        String::from_utf8(bytes[start..start + hlen].to_vec()).unwrap(),
        start + hlen,
    )
}

fn rebuild(header: &str, payload: &[u8]) -> Vec<u8> {
    let mut out = format!("{MAGIC}\n{}\n{header}", header.len()).into_bytes();
    out.extend_from_slice(payload);
    out
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    sample().save(&a).unwrap();
    Checkpoint::load(&a).unwrap().save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn loaded_values_are_f32_widened_exactly() {
    let original = sample();
    let loaded = Checkpoint::from_bytes(&original.to_bytes()).unwrap();
    assert_eq!(loaded.standardizer.mean, original.standardizer.mean);
    assert_eq!(loaded.class_names, original.class_names);
    assert_eq!((loaded.seed, loaded.lambda), (17, 1e-7));
    for (l, o) in loaded.graph.layers.iter().zip(&original.graph.layers) {
        assert_eq!(l.name, o.name);
        assert_eq!(l.spec, o.spec);
        if let (Some(lp), Some(op)) = (&l.params, &o.params) {
            for (x, y) in lp.weight.data().iter().zip(op.weight.data()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
    }
}

#[test]
fn forward_outputs_survive_within_f32_rounding() {
    let original = sample();
    let loaded = Checkpoint::from_bytes(&original.to_bytes()).unwrap();
    let x = Tensor::from_fn(&[1000, 2], |i| ((i * 7919) % 1000) as f64 / 250.0 - 2.0);
    let a = original.graph.forward(&x).unwrap();
    let b = loaded.graph.forward(&x).unwrap();
    for (p, q) in a.data().iter().zip(b.data()) {
        assert!((p - q).abs() <= 1e-6 * p.abs().max(1e-3), "{p} vs {q}");
    }
}

#[test]
fn version_mismatch_is_reported() {
    let bytes = sample().to_bytes();
    let (header, at) = split(&bytes);
    let bumped = header.replace(&format!("format_version = {FORMAT_VERSION}"), "format_version = 99");
    let err = Checkpoint::from_bytes(&rebuild(&bumped, &bytes[at..])).unwrap_err();
    assert!(matches!(err, AppError::VersionMismatch { .. }), "{err}");
}

#[test]
fn corrupted_offset_is_a_manifest_inconsistency() {
    let bytes = sample().to_bytes();
    let (header, at) = split(&bytes);
    let line = header
        .lines()
        .find(|l| l.starts_with("tensor.1 = "))
        .unwrap()
        .to_string();
    let mut f: Vec<&str> = line.split_whitespace().collect();
    let shifted = (f[5].parse::<usize>().unwrap() + 4).to_string();
    f[5] = &shifted;
    let corrupted = header.replace(&line, &f.join(" "));
    let err = Checkpoint::from_bytes(&rebuild(&corrupted, &bytes[at..])).unwrap_err();
    assert!(matches!(err, AppError::ManifestInconsistency(_)), "{err}");
    assert!(err.to_string().starts_with("manifest inconsistency"));
}

#[test]
fn truncated_payload_is_reported() {
    let bytes = sample().to_bytes();
    let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
    assert!(matches!(err, AppError::TruncatedPayload { .. }), "{err}");
}

#[test]
fn trailing_bytes_are_rejected() {
    let mut bytes = sample().to_bytes();
    bytes.extend_from_slice(&[0, 0, 0, 0]);
    assert!(matches!(
        Checkpoint::from_bytes(&bytes),
        Err(AppError::ManifestInconsistency(_))
    ));
}

#[test]
fn missing_magic_is_a_header_error() {
    assert!(matches!(
        Checkpoint::from_bytes(b"not a checkpoint"),
        Err(AppError::Header(_))
    ));
}
