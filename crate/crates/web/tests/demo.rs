use drgrade_web::{kappa_from_table, trust_percent_of, DemoState};

#[test]
fn graded_demo_images_stage_as_generated() {
    let nodr = DemoState::generate(1, 0, 256).unwrap();
    let s = nodr.stage(-1.0, 5).unwrap();
    assert_eq!(s.five_level, "S0");
    assert!(s.lesions.iter().all(|l| l.components == 0));

    let severe = DemoState::generate(1, 2, 256).unwrap();
    let s = severe.stage(-1.0, 5).unwrap();
    assert_eq!(s.five_level, "S3");
    assert_eq!(s.three_level, "Severe-DR");
    // A threshold above every lesion probability clears the maps.
    assert_eq!(severe.stage(1.0, 5).unwrap().five_level, "S0");
    assert!(severe.stage(1.5, 5).is_err());
    assert!(DemoState::generate(1, 3, 256).is_err());
}

#[test]
fn buffers_have_rgba_size() {
    let d = DemoState::generate(4, 1, 192).unwrap();
    let pre = d.preprocess(2.0, 1.0, true).unwrap();
    assert_eq!(pre.to_rgba().len(), 192 * 192 * 4);
    assert_ne!(pre, d.image);
    assert_eq!(d.preprocess(0.0, 0.0, false).unwrap().dims(), (192, 192));
    let over = d.overlay(-1.0).unwrap();
    assert_ne!(over, d.image);
    assert_eq!(d.overlay(1.0).unwrap(), d.image);
}

#[test]
fn calculators() {
    let k = kappa_from_table(173, 27, 27, 173).unwrap();
    assert!((k.kappa - 0.73).abs() < 1e-12);
    assert!(kappa_from_table(0, 0, 0, 0).is_err());
    assert_eq!(trust_percent_of(1.0, 1.0, 1.0, [0.4, 0.3, 0.3]).unwrap(), 100);
    assert_eq!(trust_percent_of(0.5, 0.5, 0.5, [0.4, 0.3, 0.3]).unwrap(), 50);
    assert!(trust_percent_of(0.5, 0.5, 0.5, [0.5, 0.5, 0.5]).is_err());
}
