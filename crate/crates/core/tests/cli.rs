use endotrack::cli::{parse_endo, Report};
use std::path::Path;
use std::process::Command;

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn endotrack(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_endotrack")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn golden(args: &[&str], file: &str) {
    let (code, out) = endotrack(args);
    assert_eq!(code, 0);
    let got = Report::from_json(&out).unwrap();
    let want = Report::from_json(&std::fs::read_to_string(data(file)).unwrap()).unwrap();
    assert_eq!(got, want, "{file}");
}

#[test]
fn certify_goldens() {
    for name in ["sapir", "countereg", "psi"] {
        let input = data(&format!("{name}.endo"));
        golden(&["--format", "json", "certify", &input], &format!("golden/{name}.certify.json"));
        golden(
            &["--sequential", "--format", "json", "certify", &input],
            &format!("golden/{name}.certify.json"),
        );
    }
}

#[test]
fn images_golden() {
    golden(
        &["--format", "json", "images", "--k", "3", &data("countereg.endo")],
        "golden/countereg.images.json",
    );
}

#[test]
fn reports_round_trip() {
    let (_, out) = endotrack(&["--format", "json", "--timing", "certify", &data("countereg.endo")]);
    let r = Report::from_json(&out).unwrap();
    assert!(r.timing_ms.is_some());
    assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
}

#[test]
fn batches_emit_an_array() {
    let (code, out) = endotrack(&["--format", "json", "traintrack", &data("sapir.endo"), &data("psi.endo")]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v.as_array().map(Vec::len), Some(2));
}

#[test]
fn exit_codes() {
    let (code, _) = endotrack(&["invariant", "--gens", "a b", &data("psi.endo")]);
    assert_eq!(code, 3);
    let bad = std::env::temp_dir().join("endotrack-bad.endo");
    std::fs::write(&bad, "gens: a b\na -> a Q\n").unwrap();
    let (code, _) = endotrack(&["fold", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn data_files_parse() {
    for name in ["sapir", "countereg", "psi", "restricted"] {
        let text = std::fs::read_to_string(data(&format!("{name}.endo"))).unwrap();
        assert!(parse_endo(&text).is_ok(), "{name}");
    }
}
