use carbonfl_core::error::{Error, TraceErrorKind};
use carbonfl_core::harness::{format_trace, load_trace, parse_trace, synth_trace, TraceProfile};

fn kind(text: &str) -> (usize, TraceErrorKind) {
    match parse_trace(text) {
        Err(Error::Trace { row, kind }) => (row, kind),
        other => panic!("expected trace error, got {other:?}"),
    }
}

#[test]
fn loads_two_by_two_from_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("t.csv");
    std::fs::write(
        &p,
        "slot,center,intensity_kg_per_kwh\n1,1,0.4\n0,0,0.1\n0,1,0.2\n1,0,0.3\n",
    )
    .unwrap();
    let tr = load_trace(&p).unwrap();
    assert_eq!(tr.rows(), &[vec![0.1, 0.2], vec![0.3, 0.4]]);
}

#[test]
fn each_failure_is_distinct_and_names_its_row() {
    let h = "slot,center,intensity_kg_per_kwh\n";
    assert_eq!(
        kind(&format!("{h}0,0,0.1\n0,0,0.2\n")),
        (3, TraceErrorKind::Duplicate { slot: 0, center: 0 })
    );
    assert_eq!(kind(&format!("{h}0,0,-1\n")), (2, TraceErrorKind::Negative(-1.0)));
    assert!(matches!(
        kind(&format!("{h}0,0,0.1\nx,0,0.2\n")),
        (3, TraceErrorKind::Malformed(_))
    ));
    assert!(matches!(
        kind(&format!("{h}0,0\n")),
        (2, TraceErrorKind::Malformed(_))
    ));
    assert_eq!(kind(&format!("{h}0,0,NaN\n")), (2, TraceErrorKind::NonFinite));
    assert!(matches!(
        kind(&format!("{h}0,0,0.1\n1,1,0.2\n")),
        (_, TraceErrorKind::Missing { .. })
    ));
    assert!(matches!(
        kind("slot,center,beta\n0,0,0.1\n"),
        (1, TraceErrorKind::BadHeader(_))
    ));
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(
        load_trace("/definitely/not/here.csv"),
        Err(Error::Io { .. })
    ));
}

#[test]
fn synthetic_profiles_round_trip_through_csv() {
    for profile in [
        TraceProfile::Constant,
        TraceProfile::Diurnal,
        TraceProfile::RandomWalk,
    ] {
        let tr = synth_trace(5, 50, profile, 9).unwrap();
        assert_eq!(parse_trace(&format_trace(&tr)).unwrap(), tr);
        assert_eq!(synth_trace(5, 50, profile, 9).unwrap(), tr);
        assert_ne!(synth_trace(5, 50, profile, 10).unwrap(), tr);
        assert!(tr.rows().iter().flatten().all(|&b| b >= 0.0));
    }
    let d = synth_trace(3, 72, TraceProfile::Diurnal, 1).unwrap();
    for t in 0..48 {
        assert_eq!(d.rows()[t], d.rows()[t + 24]);
    }
    let c = synth_trace(3, 10, TraceProfile::Constant, 1).unwrap();
    assert!(c.rows().iter().all(|r| *r == c.rows()[0]));
}
