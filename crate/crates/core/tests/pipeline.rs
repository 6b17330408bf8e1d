use quickdrift::calibrate::MortalitySeries;
use quickdrift::pipeline::{emit_plot_data, read_posterior_csv, run_detection, SyntheticTable};
use quickdrift::{Config, Error};

fn strong_change(seed: u64) -> MortalitySeries<f64> {
    SyntheticTable {
        first_year: 0,
        years: 30,
        change_year: Some(12),
        r: [0.09, 0.06],
        ..SyntheticTable::default()
    }
    .generate(seed)
    .unwrap()
}

#[test]
fn injected_change_is_detected_after_it_happens() {
    let runs = 1000;
    let mut early = 0;
    let mut delays = Vec::new();
    for seed in 0..runs {
        let s = strong_change(seed);
        let r = run_detection(&s, &Config::default(), (0, 10), (0, 29)).unwrap();
        match r.alarm_year {
            Some(y) if y < 12 => early += 1,
            Some(y) => delays.push(y - 12),
            None => {}
        }
    }
    assert!((early as f64) < 0.05 * runs as f64, "{early} early alarms");
    delays.sort();
    let median = delays[delays.len() / 2];
    assert!(median <= 4, "median delay {median}");
}

#[test]
fn unreachable_threshold_never_alarms() {
    let s = SyntheticTable::default().generate(3).unwrap();
    let r = run_detection(&s, &Config::default(), (1990, 2000), (1990, 2017)).unwrap();
    assert_eq!(r.first_year_at(1.0 - 1e-9), None);
}

#[test]
fn config_is_echoed() {
    let s = SyntheticTable::default().generate(1).unwrap();
    let config = Config::from_json(r#"{"prior": {"x0": 0.2, "lambda": 0.05}, "cost": {"c": 0.3}}"#).unwrap();
    let r = run_detection(&s, &config, (1990, 2000), (1990, 2017)).unwrap();
    assert_eq!(r.config, config);
    assert_eq!(r.series[0].pi, 0.2);
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("table.csv");
    SyntheticTable::default().generate(9).unwrap().write_csv(&input).unwrap();
    let s = MortalitySeries::from_csv(&input).unwrap();
    let r = run_detection(&s, &Config::default(), (1990, 2000), (1995, 2017)).unwrap();
    assert_eq!(r.series.len(), 23);
    let files = emit_plot_data(&r, dir.path().join("out")).unwrap();
    assert_eq!(read_posterior_csv(&files[2]).unwrap(), r.series);
}

#[test]
fn jumps_are_rejected_for_detection() {
    let s = SyntheticTable::default().generate(1).unwrap();
    let config = Config::from_json(r#"{"jumps": {"mu_inf": 1.0, "w": [0.1, 0.1]}}"#).unwrap();
    assert!(matches!(
        run_detection(&s, &config, (1990, 2000), (1990, 2017)),
        Err(Error::Config(_))
    ));
}
