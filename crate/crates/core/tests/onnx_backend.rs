#![cfg(feature = "onnx")]

use std::collections::BTreeMap;

use drgrade_core::features::{FeatureExtractor, OnnxExtractor};
use drgrade_core::imgio::RgbImage;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

#[test]
fn tiny_network_matches_reference_forward_pass() {
    let expected: BTreeMap<String, Vec<f64>> =
        serde_json::from_str(&std::fs::read_to_string(format!("{FIXTURES}/tiny_cnn_expected.json")).unwrap()).unwrap();
    let net = OnnxExtractor::load(format!("{FIXTURES}/tiny_cnn.onnx"), 32, 32).unwrap();

    let flat = RgbImage::filled(32, 32, [128, 128, 128]).unwrap();
    let mut ramp = RgbImage::filled(32, 32, [0, 0, 0]).unwrap();
    for y in 0..32 {
        for x in 0..32 {
            ramp.set_pixel(x, y, [(x * 8) as u8, 0, 0]);
        }
    }
    for (name, img) in [("flat128", &flat), ("red_ramp", &ramp)] {
        let got = net.extract(name, Some(img)).unwrap();
        assert_eq!(got.dim(), 5);
        for (g, e) in got.values.iter().zip(&expected[name]) {
            assert!((g - e).abs() < 1e-4, "{name}: {g} vs {e}");
        }
    }
    // Larger inputs are resized to the network's input size.
    let big = RgbImage::filled(64, 48, [128, 128, 128]).unwrap();
    assert_eq!(
        net.extract("big", Some(&big)).unwrap().values,
        net.extract("f", Some(&flat)).unwrap().values
    );
    assert!(net.extract("none", None).is_err());
    assert!(OnnxExtractor::load(format!("{FIXTURES}/absent.onnx"), 32, 32).is_err());
}
