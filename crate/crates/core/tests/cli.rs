use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use modex::algebra::{enumerate_models, project_models, vocabulary_of};
use modex::frontend::{parse_problem, read_structure};
use modex::lattice::PartialStructure;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn modex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modex")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const FIXTURES: [&str; 7] = ["graph2.mx", "unsat.mx", "cdl.mx", "plus.mx", "theta.mx", "negation.mx", "bounds.mx"];

#[test]
fn disconnected_graph_has_twelve_edge_models() {
    let p = fixture("graph2.mx");
    let o = modex(&["solve", "--problem", p.to_str().unwrap(), "--engine", "cdl", "--project-output"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().next(), Some("12 models"));
    assert_eq!(out.lines().count(), 13);
    assert!(out.lines().skip(1).all(|l| l.starts_with("{Edge(a,a)=") && !l.contains("Trans")));
}

#[test]
fn graph_on_three_nodes_matches_the_oracle() {
    let p = fixture("graph3.mx");
    let spec = parse_problem(&fs::read_to_string(&p).unwrap()).unwrap();
    let e = spec.goal_expr().unwrap();
    let voc = vocabulary_of(&e, &spec.interp).unwrap();
    let want = project_models(&enumerate_models(&e, &spec.interp, &PartialStructure::unknown(&spec.sig)).unwrap(), &voc);
    for engine in ["gc", "prop", "learn", "cdl"] {
        let o = modex(&["solve", "--problem", p.to_str().unwrap(), "--engine", engine, "--project-output"]);
        let out = stdout(&o);
        assert_eq!(out.lines().next().unwrap(), format!("{} models", want.len()), "{engine}");
        let got: Vec<&str> = out.lines().skip(1).collect();
        let want: Vec<String> = want.iter().map(|m| m.display_known()).collect();
        assert_eq!(got, want, "{engine}");
    }
}

#[test]
fn unsatisfiable_problem_exits_one() {
    let p = fixture("unsat.mx");
    let o = modex(&["solve", "--problem", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "0 models\n");
}

#[test]
fn usage_and_parse_errors_exit_two() {
    let o = modex(&["solve", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mx");
    fs::write(&bad, "domain a ;\nvocab p/0 ;\nsolve M1 ;\n").unwrap();
    let o = modex(&["solve", "--problem", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.mx:3:7: unknown module or expression `M1`"));

    let input = dir.path().join("in.json");
    fs::write(&input, r#"{"atoms": {"p": "x"}}"#).unwrap();
    let p = fixture("cdl.mx");
    let o = modex(&["solve", "--problem", p.to_str().unwrap(), "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/atoms/p"));

    let o = modex(&["solve", "--problem", p.to_str().unwrap(), "--engine", "walksat"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_passes_on_every_fixture() {
    for f in FIXTURES {
        let p = fixture(f);
        let o = modex(&["check", "--problem", p.to_str().unwrap(), "--oracle"]);
        assert_eq!(o.status.code(), Some(0), "{f}: {}", stdout(&o));
        assert_eq!(stdout(&o).lines().filter(|l| l.ends_with(", ok")).count(), 8, "{f}");
    }
}

#[test]
fn check_reports_a_broken_propagator() {
    let p = fixture("plus.mx");
    let o = modex(&["check", "--problem", p.to_str().unwrap(), "--engines", "prop,cdl", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("MISMATCH"));
    assert!(out.lines().any(|l| l.starts_with("  - {")));
}

#[test]
fn check_refuses_large_signatures() {
    let p = fixture("graph3.mx");
    let o = modex(&["check", "--problem", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
    let p = fixture("graph2.mx");
    let o = modex(&["check", "--problem", p.to_str().unwrap(), "--atom-budget", "7"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn trace_file_has_the_golden_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("trace.txt");
    let p = fixture("cdl.mx");
    let o = modex(&["solve", "--problem", p.to_str().unwrap(), "--trace", t.to_str().unwrap(), "--first", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let trace = fs::read_to_string(&t).unwrap();
    let head: Vec<&str> = trace.lines().take(5).collect();
    assert_eq!(head, ["DECIDE p=t@1", "PROP 0 q=t", "CONFLICT q", "LEARN [-p] backjump=0", "PROP 1 p=f"]);
}

#[test]
fn extended_selection_reports_its_equalities() {
    let p = fixture("theta.mx");
    let o = modex(&["solve", "--problem", p.to_str().unwrap(), "--trace", "--stats"]);
    assert_eq!(o.status.code(), Some(0));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().next(), Some("EQUALITIES [(P==Q & (Q==R | !(P!=R)))] -> [P==Q, P==R, Q==R]"));
    let stats: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(stats["models"], 2);
}

#[test]
fn input_statement_and_json_output() {
    let p = fixture("bounds.mx");
    let o = modex(&["solve", "--problem", p.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let models = doc["models"].as_array().unwrap();
    assert!(!models.is_empty());
    for m in models {
        assert_eq!(m["Qc(1)"], "f");
        assert_eq!(m["Qd(5)"], "t");
    }
    let spec = parse_problem(&fs::read_to_string(&p).unwrap()).unwrap();
    let b = read_structure(&fs::read_to_string(fixture("bounds_input.json")).unwrap(), Some(&spec.sig)).unwrap();
    let want = enumerate_models(&spec.goal_expr().unwrap(), &spec.interp, &b).unwrap();
    assert_eq!(models.len(), want.len());
}

#[test]
fn output_is_deterministic() {
    let p = fixture("negation.mx");
    let args = ["solve", "--problem", p.to_str().unwrap(), "--trace", "--stats", "--restart", "luby:2"];
    let (a, b) = (modex(&args), modex(&args));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
}

#[test]
fn fixtures_round_trip_through_the_printer() {
    for f in FIXTURES.iter().chain(&["graph3.mx"]) {
        let p1 = parse_problem(&fs::read_to_string(fixture(f)).unwrap()).unwrap();
        let p2 = parse_problem(&p1.to_string()).unwrap();
        assert_eq!(p1.exprs, p2.exprs, "{f}");
        assert_eq!(p1.interp.defs, p2.interp.defs, "{f}");
        assert_eq!(p1.goal, p2.goal, "{f}");
        assert_eq!(p1.to_string(), p2.to_string(), "{f}");
    }
}
