use std::path::PathBuf;

use ptzgs_core::scenario::{
    csv_header, load_config, paper_sec4, write_csv, write_csv_file, ScenarioConfig,
};
use ptzgs_core::{Error, Variant};

fn preset_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../presets")
        .join(name)
}

#[test]
fn shipped_presets_match_builtin() {
    for (file, v) in [
        ("paper-sec4-ss.toml", Variant::Ss),
        ("paper-sec4-ms.toml", Variant::Ms),
    ] {
        let text = std::fs::read_to_string(preset_path(file)).unwrap();
        let parsed = ScenarioConfig::from_toml(&text).unwrap();
        assert_eq!(parsed, paper_sec4(v), "{file}");
        assert!(load_config(&preset_path(file)).is_ok());
    }
}

#[test]
fn csv_rows_match_samples() {
    let out = paper_sec4(Variant::Ms).validate().unwrap().run().unwrap();
    let mut buf = Vec::new();
    write_csv(&out.trajectory, &mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, csv_header(6, 2));
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), out.trajectory.samples.len());
    assert_eq!(rows.len(), out.report.samples);
    let first_t: f64 = rows[0][0].parse().unwrap();
    let last_t: f64 = rows.last().unwrap()[0].parse().unwrap();
    assert_eq!(first_t, 0.0);
    assert_eq!(last_t, out.trajectory.last().t);
    // values survive the text round trip exactly
    let x11: f64 = rows[7][1].parse().unwrap();
    assert_eq!(x11, out.trajectory.samples[7].state.agents[0].x[0]);
}

#[test]
fn csv_file_written_to_nested_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = paper_sec4(Variant::Ss).validate().unwrap().run().unwrap();
    let path = dir.path().join("a/b/traj.csv");
    write_csv_file(&out.trajectory, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), out.trajectory.samples.len() + 1);
}

#[test]
fn missing_file_is_io_error() {
    let err = load_config(&preset_path("does-not-exist.toml")).unwrap_err();
    assert!(matches!(err, Error::Io(_)));
    assert!(!err.is_validation());
}

#[test]
fn unknown_field_rejected() {
    let text = std::fs::read_to_string(preset_path("paper-sec4-ss.toml")).unwrap();
    let bad = text.replace("seed = 42", "seed = 42\ncolour = \"blue\"");
    assert!(matches!(
        ScenarioConfig::from_toml(&bad),
        Err(Error::Parse(_))
    ));
}
