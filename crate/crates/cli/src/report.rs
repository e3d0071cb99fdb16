//! In-memory report: checks, notices and output files, written in one pass at the end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::config::Config;

pub const VERSION: &str = concat!("semires ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Informational lines are reported but do not affect the exit status.
    pub gate: bool,
}

#[derive(Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
    pub notices: Vec<String>,
    files: BTreeMap<String, Vec<u8>>,
}

impl Report {
    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into(), gate: true });
    }

    pub fn info(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into(), gate: false });
    }

    pub fn notice(&mut self, text: impl Into<String>) {
        self.notices.push(text.into());
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.gate)
    }

    /// A CSV body, prefixed with `#` lines carrying the version and config hash.
    pub fn csv(&mut self, name: &str, cfg: &Config, body: Vec<u8>) {
        let mut out = format!("# {VERSION}\n# config_sha256 = {}\n", cfg.hash()).into_bytes();
        out.extend(body);
        self.files.insert(name.into(), out);
    }

    /// A key = value text file with the same header.
    pub fn text(&mut self, name: &str, cfg: &Config, body: &str) {
        self.csv(name, cfg, body.as_bytes().to_vec());
    }

    pub fn file_names(&self) -> Vec<&str> {
        self.files.keys().map(String::as_str).collect()
    }

    pub fn summary(&self, command: &str, cfg: &Config) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "version = {VERSION}");
        let _ = writeln!(s, "command = {command}");
        let _ = writeln!(s, "config_sha256 = {}", cfg.hash());
        let _ = writeln!(s, "status = {}", if self.passed() { "pass" } else { "fail" });
        let _ = writeln!(s);
        let _ = writeln!(s, "[checks]");
        for c in &self.checks {
            let verdict = match (c.passed, c.gate) {
                (true, true) => "PASS",
                (false, true) => "FAIL",
                (true, false) => "info-pass",
                (false, false) => "info-fail",
            };
            let _ = writeln!(s, "{verdict} {} : {}", c.name, c.detail);
        }
        if !self.notices.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "[notices]");
            for n in &self.notices {
                let _ = writeln!(s, "{n}");
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[config]");
        s.push_str(&cfg.canonical());
        s
    }

    /// Writes every file plus summary.txt and config.toml into `dir`.
    pub fn write(&self, dir: &Path, command: &str, cfg: &Config) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            fs::write(dir.join(name), body)?;
        }
        fs::write(dir.join("config.toml"), cfg.canonical())?;
        fs::write(dir.join("summary.txt"), self.summary(command, cfg))
    }
}
