mod common;

use common::random_certified;
use monomlp::{Error, Net};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn json_round_trip_preserves_function_and_text() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let depth = rng.gen_range(2..=5);
        let net = random_certified(&mut rng, depth);
        let text = net.to_json().unwrap();
        let back = Net::from_json(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_json().unwrap(), text);
    }
}

#[test]
fn save_and_load_through_a_file() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let net = random_certified(&mut rng, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    net.save(&path).unwrap();
    assert_eq!(Net::load(&path).unwrap(), net);
}

fn tiny() -> String {
    r#"{
  "version": 1,
  "annotation": ["increasing"],
  "layers": [
    {"kind": "constrained_affine", "sign": "non_negative", "reparam": "abs",
     "activation": null, "in_dim": 1, "out_dim": 1, "W": [-2.0], "b": [0.5]}
  ]
}"#
    .to_string()
}

#[test]
fn hand_written_document_evaluates() {
    let net = Net::from_json(&tiny()).unwrap();
    assert_eq!(net.forward_scalar(&[3.0]).unwrap(), 6.5);
}

#[test]
fn wrong_version_is_rejected() {
    let text = tiny().replace("\"version\": 1", "\"version\": 7");
    assert!(matches!(Net::from_json(&text), Err(Error::Version { found: 7, expected: 1 })));
}

#[test]
fn unknown_fields_and_bad_syntax_report_location() {
    let text = tiny().replace("\"b\": [0.5]", "\"b\": [0.5], \"extra\": 1");
    assert!(matches!(Net::from_json(&text), Err(Error::Parse { line: 6, .. })));
    let text = tiny().replace("[-2.0]", "[-2.0,]");
    match Net::from_json(&text) {
        Err(Error::Parse { line, column, .. }) => assert_eq!((line, column > 0), (6, true)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn shape_mismatch_is_a_dimension_error() {
    let text = tiny().replace("[-2.0]", "[-2.0, 1.0]");
    assert!(matches!(Net::from_json(&text), Err(Error::Dimension { .. })));
}
