use stbc_core::analysis::{
    angle_sweep, difference_determinant, min_determinant, min_determinant_single_symbol,
    sweep_argmax, MinDetOptions,
};
use stbc_core::codes::{djabba_angle, golden_angle, CodeKind};
use stbc_core::constellation::make_qam;

#[test]
fn proposed_code_qpsk() {
    let cons = make_qam(4, false).unwrap();
    let r = min_determinant(
        CodeKind::Proposed,
        golden_angle(),
        &cons,
        MinDetOptions::default(),
    )
    .unwrap();
    assert!((r.min_det - 10.24).abs() < 1e-6, "{}", r.min_det);
    assert_eq!(r.candidates_scanned, 9u64.pow(8) - 1);
    let direct = difference_determinant(CodeKind::Proposed, golden_angle(), &r.argmin_delta);
    assert!((direct - r.min_det).abs() < 1e-9);
}

#[test]
fn djabba_code_qpsk() {
    let cons = make_qam(4, false).unwrap();
    let r = min_determinant(
        CodeKind::Djabba,
        djabba_angle(),
        &cons,
        MinDetOptions::default(),
    )
    .unwrap();
    assert!((r.min_det - 0.8304).abs() < 1e-3, "{}", r.min_det);
    assert!(r.argmin_support() > 1);
    let single = min_determinant_single_symbol(CodeKind::Djabba, djabba_angle(), &cons);
    assert!(single.min_det > 7.0);
    let direct = difference_determinant(CodeKind::Djabba, djabba_angle(), &r.argmin_delta);
    assert!((direct - r.min_det).abs() < 1e-9);
}

#[test]
fn result_does_not_depend_on_workers() {
    let cons = make_qam(4, false).unwrap();
    let run = |workers| {
        let opts = MinDetOptions {
            workers: Some(workers),
            ..Default::default()
        };
        min_determinant(CodeKind::Djabba, 0.6, &cons, opts).unwrap()
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.min_det, b.min_det);
    assert_eq!(a.argmin_delta, b.argmin_delta);
}

#[test]
fn sweep_peaks_near_golden_angle() {
    let cons = make_qam(4, false).unwrap();
    let g = golden_angle();
    let angles = [g - 0.1, g, g + 0.1];
    let reports =
        angle_sweep(CodeKind::Proposed, &cons, &angles, MinDetOptions::default()).unwrap();
    assert_eq!(sweep_argmax(&reports), Some(1));
}
