use std::path::PathBuf;
use std::process::Command;

use lucas_lehmer::cli::dispatch;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_lucas-lehmer");

const SMALL_CONFIG: &str = "\
identity_limit = 200
wall_limit = 2000
monotone_limit = 2000
inequality_limit = 3000
search_limit = 30
tau_limit = 500
fib_five_limit = 500
";

fn schema(name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    let value: Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&value).unwrap()
}

fn assert_valid(v: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema errors: {errors:?}");
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn with_bin(args: &[&str]) -> Vec<String> {
    std::iter::once("lucas-lehmer").chain(args.iter().copied()).map(String::from).collect()
}

// plain recurrence, independent of the fast-doubling code
fn lucas_iter(n: usize) -> Vec<u128> {
    let mut l = vec![2u128, 1];
    while l.len() <= n {
        let k = l.len();
        l.push(l[k - 1] + l[k - 2]);
    }
    l
}

fn small_config() -> tempfile::NamedTempFile {
    let f = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(f.path(), SMALL_CONFIG).unwrap();
    f
}

#[test]
fn lucas_value_on_stdout() {
    let (code, out, _) = run(&["seq", "--lucas", "10"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "L_10 = 123");
}

#[test]
fn usage_errors_exit_two() {
    let (code, out, err) = run(&["bogus"]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("Usage"));

    let (code, _, err) = run(&["rank", "--prime", "8"]);
    assert_eq!(code, 2);
    assert!(err.contains("not an odd prime"));

    let (code, _, _) = run(&["seq", "--period"]);
    assert_eq!(code, 2);
}

#[test]
fn help_exits_zero() {
    let o = dispatch(with_bin(&["--help"]));
    assert_eq!(o.code, 0);
    assert!(o.stdout.contains("lehmer-search"));
}

#[test]
fn wall_scan_text() {
    let (code, out, _) = run(&["wall-scan", "--limit", "1000"]);
    assert_eq!(code, 0);
    assert!(out.contains("0 exceptions"), "{out}");
}

#[test]
fn period_mod_eight_json() {
    let o = dispatch(with_bin(&["--format", "json", "seq", "--period", "--modulus", "8"]));
    assert_eq!(o.code, 0);
    let doc: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_valid(&schema("report.schema.json"), &doc);
    let text = doc["result"].to_string();
    assert!(text.contains("12"), "{text}");
}

#[test]
fn lehmer_search_verdicts_match_schema_and_recurrence() {
    let (code, out, _) = run(&["--format", "json", "lehmer-search", "--max-index", "30"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 30);
    let verdict = schema("verdict.schema.json");
    let lucas = lucas_iter(30);
    for (i, line) in lines[..29].iter().enumerate() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_valid(&verdict, &v);
        let n = i + 2;
        assert_eq!(v["index"], n as u64);
        assert_eq!(v["value"], lucas[n].to_string());
        assert_eq!(v["is_lehmer"], false);
    }
    let summary: Value = serde_json::from_str(lines[29]).unwrap();
    assert_valid(&schema("report.schema.json"), &summary);
    assert_eq!(summary["result"]["summary"]["verdicts"], 29);
    assert_eq!(summary["result"]["summary"]["lehmer_hits"], 0);
}

#[test]
fn primitive_primes_are_new() {
    let o = dispatch(with_bin(&["--format", "json", "primitive", "--index", "25"]));
    assert_eq!(o.code, 0);
    let doc: Value = serde_json::from_str(&o.stdout).unwrap();
    let lucas = lucas_iter(25);
    let primes: Vec<u128> = doc["result"]["primitive_primes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_str().unwrap().parse().unwrap())
        .collect();
    assert!(!primes.is_empty());
    for p in primes {
        assert_eq!(lucas[25] % p, 0);
        assert!((0..25).all(|k| lucas[k] % p != 0), "{p} divides an earlier term");
    }
}

#[test]
fn config_file_and_env_agree() {
    let cfg = small_config();
    let path = cfg.path().to_str().unwrap();
    let (code, by_flag, _) = run(&["--config", path, "--format", "json", "proof", "--step", "parity"]);
    assert_eq!(code, 0);
    let out = Command::new(BIN)
        .args(["--format", "json", "proof", "--step", "parity"])
        .env("LUCAS_LEHMER_CONFIG", path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), by_flag);

    let doc: Value = serde_json::from_str(&by_flag).unwrap();
    assert_valid(&schema("report.schema.json"), &doc);
    assert_eq!(doc["config"]["proof"]["identity_limit"], 200);
    assert_eq!(doc["result"]["id"], "parity");
    assert_eq!(doc["result"]["status"], "verified");
}

#[test]
fn unknown_config_key_exits_two() {
    let f = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(f.path(), "no_such_key = 1\n").unwrap();
    let (code, _, err) = run(&["--config", f.path().to_str().unwrap(), "seq", "--lucas", "3"]);
    assert_eq!(code, 2);
    assert!(!err.is_empty());
}

#[test]
fn small_full_proof_certificate() {
    let cfg = small_config();
    let path = cfg.path().to_str().unwrap();
    let o = dispatch(with_bin(&["--config", path, "--format", "json", "proof", "--full"]));
    assert_eq!(o.code, 0, "{}", o.stderr);
    let cert: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_valid(&schema("certificate.schema.json"), &cert);
    assert_eq!(cert["status"], "verified_with_assumptions");
    let assumed = ["omega-bound", "primitive-divisors", "imp-bound", "wall-beyond"];
    for step in cert["steps"].as_array().unwrap() {
        let id = step["id"].as_str().unwrap();
        let want = if assumed.contains(&id) { "assumed" } else { "verified" };
        assert_eq!(step["status"], want, "{id}");
        assert_eq!(step.get("citation").is_some(), want == "assumed", "{id}");
    }
    assert!(cert["failed_steps"].as_array().unwrap().is_empty());
}

#[test]
fn sabotaged_constant_reports_findings() {
    let f = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(f.path(), "c1 = \"0\"\n").unwrap();
    let o = dispatch(with_bin(&[
        "--config",
        f.path().to_str().unwrap(),
        "--format",
        "json",
        "proof",
        "--step",
        "final-contradiction",
    ]));
    assert_eq!(o.code, 1);
    let doc: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_valid(&schema("report.schema.json"), &doc);
    assert_eq!(doc["status"], "findings");
    assert_eq!(doc["result"]["status"], "failed");
    assert!(doc["result"]["evidence"]["witness_prime"].as_u64().unwrap() > 1);
}

#[test]
fn check_ineq_final_range() {
    let o = dispatch(with_bin(&["--format", "json", "check-ineq", "--which", "final", "--range", "97..=200"]));
    assert_eq!(o.code, 0);
    let doc: Value = serde_json::from_str(&o.stdout).unwrap();
    let instances = doc["result"]["instances"].as_array().unwrap();
    let oracle = (97u64..=200).filter(|&p| (2..p).take_while(|d| d * d <= p).all(|d| p % d != 0)).count();
    assert_eq!(instances.len(), oracle);
    assert!(instances.iter().all(|i| i["holds"] == true));
}
