use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::Failure;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub target: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, value: f64, target: impl Into<String>) -> Self {
        Check { name: name.into(), pass, value, target: target.into() }
    }

    pub fn line(&self) -> String {
        format!(
            "check {}: {} value={:?} target={}",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.value,
            self.target
        )
    }
}

/// Everything a scenario produced: files in `dir`, measured constants and checks.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub measured: BTreeMap<String, f64>,
    pub info: BTreeMap<String, String>,
    pub checks: Vec<Check>,
}

impl RunOutput {
    pub fn new(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Other(format!("cannot create {}: {e}", dir.display())))?;
        Ok(RunOutput {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            measured: BTreeMap::new(),
            info: BTreeMap::new(),
            checks: Vec::new(),
        })
    }

    pub fn measure(&mut self, key: &str, v: f64) {
        self.measured.insert(key.into(), v);
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let p = self.dir.join(name);
        std::fs::write(&p, contents).map_err(|e| Failure::Other(format!("cannot write {}: {e}", p.display())))?;
        self.files.push(name.into());
        Ok(())
    }

    /// Comma-separated table with a header row.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), Failure> {
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        self.write(name, &s)
    }

    pub fn summary_lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self.info.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        out.extend(self.checks.iter().map(Check::line));
        out
    }

    /// Writes summary.txt and manifest.json and prints the summary.
    pub fn finish(mut self, command: &str, cfg: &ScenarioConfig, extra: Option<serde_json::Value>) -> Result<(), Failure> {
        let lines = self.summary_lines();
        let mut text = String::new();
        for l in &lines {
            println!("{l}");
            writeln!(text, "{l}").unwrap();
        }
        self.write("summary.txt", &text)?;
        let mut files = self.files.clone();
        files.push("manifest.json".into());
        let manifest = Manifest {
            command,
            library_version: growth_euler::VERSION,
            config: cfg,
            measured: &self.measured,
            info: &self.info,
            checks: &self.checks,
            files,
            extra,
        };
        let mut json = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Other(e.to_string()))?;
        json.push('\n');
        let p = self.dir.join("manifest.json");
        std::fs::write(&p, json).map_err(|e| Failure::Other(format!("cannot write {}: {e}", p.display())))?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    library_version: &'a str,
    config: &'a ScenarioConfig,
    measured: &'a BTreeMap<String, f64>,
    info: &'a BTreeMap<String, String>,
    checks: &'a [Check],
    files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
}
