use std::path::Path;
use std::process::{Command, Output};

fn caustica(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_caustica"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn orders_prints_the_normal_operator_classes() {
    let dir = tempfile::tempdir().unwrap();
    let o = caustica(dir.path(), &["orders", "--mu", "3/4"]);
    assert_eq!(o.status.code(), Some(0));
    let first = stdout(&o).lines().next().unwrap().to_string();
    assert_eq!(first, "I^{3/2,1/2}(Δ, C̃); Δ-order 2; C̃-order 3/2; gap −1/2");
    let o = caustica(dir.path(), &["orders", "--mu", "3/4", "--mode", "single-source"]);
    assert!(stdout(&o).starts_with("I^{2,0}(Δ, C̃); Δ-order 2; C̃-order 2; gap 0"), "{}", stdout(&o));
    let json = std::fs::read_to_string(dir.path().join("caustica-out/orders.json")).unwrap();
    assert!(json.contains("\"kernel_order\": \"1\""));
}

#[test]
fn classify_normal_forms_and_expectations() {
    let dir = tempfile::tempdir().unwrap();
    let o = caustica(dir.path(), &["classify", "--map", "normal-form:cross-cap"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "CrossCap");
    let o = caustica(dir.path(), &["classify", "--map", "poly:x1; x2^2 + x3^2", "--expect", "EllipticSWF"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = caustica(dir.path(), &["classify", "--map", "normal-form:cusp", "--expect", "Fold"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("classify.expected"));
    let o = caustica(dir.path(), &["classify", "--map", "poly:x1; x2^2", "--at", "0.5,1"]);
    assert_eq!(stdout(&o).trim(), "Regular");
}

#[test]
fn schema_errors_exit_2_with_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| std::fs::write(dir.path().join(name), text).unwrap();
    write("a.toml", "[model_verify]\nsampels = 10\n");
    let o = caustica(dir.path(), &["--config", "a.toml", "model-verify"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sampels"), "{}", stderr(&o));
    write("b.toml", "[soundspeed]\nkind = \"constant\"\nwidth = 1.0\n");
    let o = caustica(dir.path(), &["--config", "b.toml", "trace"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("soundspeed.width"), "{}", stderr(&o));
    write("c.toml", "[model_verify]\nn = 2\n");
    let o = caustica(dir.path(), &["--config", "c.toml", "model-verify"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model_verify.n"), "{}", stderr(&o));
    write("d.toml", "[[compose_verify.member]]\nname = \"m\"\nn = 3\ns5 = { degree = 1, terms = { \"x1*q1\" = 0.1 } }\n");
    let o = caustica(dir.path(), &["--config", "d.toml", "compose-verify"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("compose_verify.member[0].s5.terms"), "{}", stderr(&o));
}

#[test]
fn trace_csv_is_full_precision_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("t.toml"),
        "[soundspeed]\nkind = \"linear-gradient\"\na = 1.0\nb = 0.5\n[trace]\nsource = [0.0, 0.0, 0.0]\nduration = 2.0\ndirections = [[0.5, 0.0, 0.8660254037844386]]\n",
    )
    .unwrap();
    let o = caustica(dir.path(), &["--config", "t.toml", "--out-dir", "one", "trace"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    caustica(dir.path(), &["--config", "t.toml", "--out-dir", "two", "--jobs", "1", "trace"]);
    let a = std::fs::read(dir.path().join("one/trace.csv")).unwrap();
    let b = std::fs::read(dir.path().join("two/trace.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "ray,t,x1,x2,x3,xi1,xi2,xi3");
    let cells: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(cells.len(), 8);
    let mantissa = cells[6].split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{}", cells[6]);
    let j1 = std::fs::read(dir.path().join("one/trace.json")).unwrap();
    let j2 = std::fs::read(dir.path().join("two/trace.json")).unwrap();
    assert_eq!(j1, j2);
}

#[test]
fn reports_embed_hash_and_version_and_track_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let read = |d: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(d).join("model_verify.json")).unwrap()).unwrap()
    };
    let args = |out: &'static str, seed: &'static str| ["--out-dir", out, "--seed", seed, "model-verify", "--samples", "300"];
    assert_eq!(caustica(dir.path(), &args("s0", "0")).status.code(), Some(0));
    assert_eq!(caustica(dir.path(), &args("s1", "1")).status.code(), Some(0));
    let (a, b) = (read("s0"), read("s1"));
    assert_eq!(a["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(a["config_hash"].as_str().unwrap().len(), 64);
    assert_ne!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["pass"], true);
    let keys: Vec<&String> = a.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["tool", "version", "command", "config_hash", "seed", "pass", "failing_checks", "checks", "report"]);
}

#[test]
fn failed_verification_exits_1_naming_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = caustica(dir.path(), &["--tol", "1e-30", "model-verify", "--samples", "200"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("containment.max_residual"), "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("caustica-out/model_verify.json")).unwrap();
    assert!(report.contains("\"pass\": false"));
}
