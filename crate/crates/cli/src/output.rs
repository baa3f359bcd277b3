use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use caustica_core::pipeline::Check;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

/// At least one named verification failed; exits with status 1.
#[derive(Debug)]
pub struct CheckFailure(pub Vec<String>);

impl std::fmt::Display for CheckFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0.join(", "))
    }
}

impl std::error::Error for CheckFailure {}

/// SHA-256 of the effective configuration serialized as JSON.
pub fn config_hash(command: &str, cfg: &Config) -> String {
    let body = serde_json::to_vec(&(command, cfg)).expect("config serializes");
    let digest = Sha256::digest(&body);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    pass: bool,
    failing_checks: Vec<String>,
    checks: &'a [Check],
    report: &'a T,
}

pub struct Output {
    pub dir: PathBuf,
    pub command: String,
    pub hash: String,
    pub seed: u64,
}

impl Output {
    pub fn new(dir: &Path, command: &str, cfg: &Config, seed: u64) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), command: command.into(), hash: config_hash(command, cfg), seed })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    /// Write a JSON report wrapped with version, config hash and checks.
    pub fn report<T: Serialize>(&self, name: &str, checks: &[Check], report: &T) -> anyhow::Result<PathBuf> {
        let env = Envelope {
            tool: "caustica",
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config_hash: &self.hash,
            seed: self.seed,
            pass: checks.iter().all(|c| c.pass),
            failing_checks: caustica_core::pipeline::failing(checks),
            checks,
            report,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn csv(&self, name: &str, table: &Csv) -> anyhow::Result<PathBuf> {
        self.write(name, table.text.as_bytes())
    }
}

/// Comma-separated table written with 17 significant digits.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        let parts: Vec<String> = cells.iter().map(Cell::render).collect();
        self.text.push_str(&parts.join(","));
        self.text.push('\n');
    }
}

pub enum Cell {
    F(f64),
    I(usize),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f64(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

/// 17 significant digits in scientific notation; empty for non-finite values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

/// Exit with a [`CheckFailure`] naming every failing check.
pub fn require(checks: &[Check]) -> anyhow::Result<()> {
    let failing = caustica_core::pipeline::failing(checks);
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CheckFailure(failing).into())
    }
}

pub fn print_checks(checks: &[Check]) {
    for c in checks {
        let status = if c.pass { "pass" } else { "FAIL" };
        let detail = if c.detail.is_empty() { String::new() } else { format!("  {}", c.detail) };
        println!("{status} {:<36} {:>12.4e} (bound {:.4e}){detail}", c.name, c.value, c.bound);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, std::f64::consts::PI] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            let digits = s.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count();
            assert_eq!(digits, 17, "{s}");
        }
        assert_eq!(fmt_f64(f64::NAN), "");
    }

    #[test]
    fn hash_depends_on_settings_not_jobs() {
        let mut a = Config::default();
        let h0 = config_hash("x", &a);
        a.jobs = Some(3);
        a.out_dir = Some("elsewhere".into());
        assert_eq!(config_hash("x", &a), h0);
        a.seed = Some(1);
        assert_ne!(config_hash("x", &a), h0);
        assert_eq!(h0.len(), 64);
    }
}
