mod common;

use common::*;
use serde_json::json;

#[test]
fn empty_config_exits_with_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "empty.json", "");
    let o = run("tf-solve", &p, dir.path(), &[]);
    assert_eq!(o.code, 2, "{}", o.stderr);
    assert!(o.stderr.contains("line 1"), "{}", o.stderr);
}

#[test]
fn unknown_key_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = "{\n  \"experiment\": \"tf-solve\",\n  \"grid\": { \"d\": 1, \"R\": 12.0, \"n\": 256 },\n  \"colour\": 3\n}\n";
    let p = write_config(dir.path(), "bad.json", text);
    let o = run("tf-solve", &p, dir.path(), &[]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("line 4") && o.stderr.contains("colour"), "{}", o.stderr);
}

#[test]
fn semantic_errors_point_at_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = "{\n  \"experiment\": \"tf-solve\",\n  \"grid\": { \"d\": 1, \"R\": 12.0, \"n\": 256 },\n  \"fields\": {\n    \"V\": { \"id\": \"parabola\" }\n  }\n}\n";
    let p = write_config(dir.path(), "bad.json", text);
    let o = run("tf-solve", &p, dir.path(), &[]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("line 5") && o.stderr.contains("parabola"), "{}", o.stderr);

    let text = "{\n  \"experiment\": \"tf-solve\",\n  \"grid\": { \"d\": 1, \"R\": 12.0, \"n\": 300 }\n}\n";
    let p = write_config(dir.path(), "grid.json", text);
    let o = run("tf-solve", &p, dir.path(), &[]);
    assert_eq!(o.code, 2, "{}", o.stderr);
    assert!(o.stderr.contains("line 3"), "{}", o.stderr);
}

#[test]
fn subcommand_must_match_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("weyl", &config("tf_harmonic.json"), dir.path(), &[]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("line 2"), "{}", o.stderr);
}

#[test]
fn missing_config_file_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("tf-solve", &dir.path().join("nope.json"), dir.path(), &[]);
    assert_eq!(o.code, 2);
}

#[test]
fn tf_solve_harmonic_chemical_potential() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("tf-solve", &config("tf_harmonic.json"), dir.path(), &[]);
    assert_eq!(o.code, 0, "{}{}", o.stdout, o.stderr);
    let sol: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("tf_solution.json")).unwrap()).unwrap();
    assert!((sol["mu"].as_f64().unwrap() - 2.0).abs() < 1e-3);
    let csv = std::fs::read_to_string(dir.path().join("tf_density.csv")).unwrap();
    assert!(csv.starts_with("x1,rho\n"));
    assert_eq!(csv.lines().count(), 2049);
    assert!(!csv.contains('\r'));
}

#[test]
fn failed_check_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let p = edited(dir.path(), "tf_harmonic.json", |v| v["options"]["expected_mu"] = json!(3.0));
    let o = run("tf-solve", &p, dir.path(), &[]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("tf chemical potential"), "{}", o.stderr);
    assert_eq!(failed(&o), vec!["tf chemical potential".to_string()]);
}

#[test]
fn check_identities_on_oscillator_state() {
    let dir = tempfile::tempdir().unwrap();
    let p = edited(dir.path(), "identities_oscillator.json", |v| {
        v["fields"].as_object_mut().unwrap().remove("A");
    });
    let o = run("check-identities", &p, dir.path(), &[]);
    assert_eq!(o.code, 0, "{}{}", o.stdout, o.stderr);
    let rows = checks(&o);
    assert!(rows.len() > 15);
    assert!(rows.iter().all(|r| r["pass"] == json!(true)));
    assert!(rows.iter().any(|r| r["name"] == json!("kinetic identity")));
}

#[test]
fn non_convex_interaction_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = edited(dir.path(), "lieb_oxford.json", |v| v["fields"]["w"]["params"]["amp"] = json!(-1.0));
    let o = run("lieb-oxford", &p, dir.path(), &[]);
    assert_eq!(o.code, 1, "{}", o.stderr);
    assert!(o.stderr.contains("numerical failure"), "{}", o.stderr);
}

#[test]
fn binary_phase_space_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = edited(dir.path(), "wigner_oscillator.json", |v| v["output"]["formats"] = json!(["bin", "csv"]));
    let o = run("wigner", &p, dir.path(), &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.summary.is_none());
    let bytes = std::fs::read(dir.path().join("wigner_N4.bin")).unwrap();
    let m = semiclassics::semiclassic::read_measure_binary(&bytes[..]).unwrap();
    assert_eq!((m.d, m.n_x, m.n_p), (1, 128, 128));
    let csv = std::fs::read_to_string(dir.path().join("wigner_N4.csv")).unwrap();
    let first: f64 = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(first, m.values[0]);
}

#[test]
fn seed_flag_changes_random_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run("lieb-oxford", &config("lieb_oxford.json"), &a, &["--seed", "1"]);
    run("lieb-oxford", &config("lieb_oxford.json"), &b, &["--seed", "2"]);
    let ra = std::fs::read(a.join("lieb_oxford.csv")).unwrap();
    let rb = std::fs::read(b.join("lieb_oxford.csv")).unwrap();
    assert_ne!(ra, rb);
}
