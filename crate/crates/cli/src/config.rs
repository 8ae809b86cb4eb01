//! Flat `key = value` run configuration.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use prfcw::{FieldDistribution, RecoveryMethod, TestId};

#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub type Usage<T> = std::result::Result<T, UsageError>;

fn usage<T>(msg: impl Into<String>) -> Usage<T> {
    Err(UsageError(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Sample,
    Test,
    Recover,
    Power,
    Phase,
    VerifyClt,
    CheckBounds,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Sample => "sample",
            Command::Test => "test",
            Command::Recover => "recover",
            Command::Power => "power",
            Command::Phase => "phase",
            Command::VerifyClt => "verify-clt",
            Command::CheckBounds => "check-bounds",
        }
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [
            Command::Analyze,
            Command::Sample,
            Command::Test,
            Command::Recover,
            Command::Power,
            Command::Phase,
            Command::VerifyClt,
            Command::CheckBounds,
        ]
        .into_iter()
        .find(|c| c.name() == s)
        .ok_or_else(|| format!("unknown command {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Binary,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "binary" => Ok(Format::Binary),
            _ => Err(format!("unknown format {s:?} (csv, json, binary)")),
        }
    }
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Binary => "binary",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hypothesis {
    Alternative,
    Null,
}

impl FromStr for Hypothesis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "alternative" | "alt" => Ok(Hypothesis::Alternative),
            "null" => Ok(Hypothesis::Null),
            _ => Err(format!("unknown hypothesis {s:?} (alternative, null)")),
        }
    }
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Hypothesis::Alternative => "alternative",
            Hypothesis::Null => "null",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub theta1: Option<f64>,
    pub field: FieldDistribution<f64>,
    pub quenched: bool,
    /// 0-based clique indices.
    pub clique: Option<Vec<usize>>,
    pub hypothesis: Hypothesis,
    pub m: Option<usize>,
    pub seed: u64,
    pub test: Option<TestId>,
    pub method: Option<RecoveryMethod>,
    pub threshold: Option<f64>,
    /// Half-width of the agnostic local test.
    pub halfwidth: Option<f64>,
    pub delta: f64,
    pub c1: f64,
    pub rho: Option<f64>,
    pub replicates: usize,
    pub random_clique: bool,
    pub m_grid: Option<Vec<usize>>,
    pub theta_grid: Option<Vec<f64>>,
    pub k_grid: Option<Vec<f64>>,
    pub n_grid: Option<Vec<usize>>,
    pub target: Option<f64>,
    pub max_subsets: u128,
    pub strict_scan: bool,
    pub format: Format,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[cfg(test)]
pub const KEYS: &[&str] = &[
    "command", "n", "k", "theta1", "field", "quenched", "clique", "hypothesis", "m", "seed", "test", "method",
    "threshold", "halfwidth", "delta", "c1", "rho", "replicates", "random_clique", "m_grid", "theta_grid",
    "k_grid", "n_grid", "target", "max_subsets", "strict_scan", "format", "input", "out",
];

fn parse<T: FromStr>(key: &str, v: &str) -> Usage<T>
where
    T::Err: Display,
{
    v.parse().map_err(|e| UsageError(format!("{key}: {e}")))
}

fn parse_opt<T: FromStr>(key: &str, v: &str) -> Usage<Option<T>>
where
    T::Err: Display,
{
    if v == "none" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Usage<Option<Vec<T>>>
where
    T::Err: Display,
{
    if v == "none" {
        return Ok(None);
    }
    v.split(',').map(|t| parse(key, t.trim())).collect::<Usage<Vec<T>>>().map(Some)
}

fn show<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn show_list<T: Display>(v: &Option<Vec<T>>) -> String {
    v.as_ref().map_or_else(
        || "none".to_string(),
        |xs| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
    )
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            n: None,
            k: None,
            theta1: None,
            field: FieldDistribution::PointMass { a: 0.0 },
            quenched: false,
            clique: None,
            hypothesis: Hypothesis::Alternative,
            m: None,
            seed: 0,
            test: None,
            method: None,
            threshold: None,
            halfwidth: None,
            delta: 0.05,
            c1: 1.0,
            rho: None,
            replicates: 1000,
            random_clique: false,
            m_grid: None,
            theta_grid: None,
            k_grid: None,
            n_grid: None,
            target: None,
            max_subsets: prfcw::scan::DEFAULT_MAX_SUBSETS,
            strict_scan: false,
            format: Format::Csv,
            input: None,
            out: None,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Usage<()> {
        let v = value.trim();
        match key {
            "command" => self.command = parse(key, v)?,
            "n" => self.n = parse_opt(key, v)?,
            "k" => self.k = parse_opt(key, v)?,
            "theta1" => self.theta1 = parse_opt(key, v)?,
            "field" => self.field = v.parse().map_err(|e| UsageError(format!("field: {e}")))?,
            "quenched" => self.quenched = parse(key, v)?,
            "clique" => self.clique = parse_list(key, v)?,
            "hypothesis" => self.hypothesis = parse(key, v)?,
            "m" => self.m = parse_opt(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "test" => self.test = parse_opt(key, v)?,
            "method" => self.method = parse_opt(key, v)?,
            "threshold" => self.threshold = parse_opt(key, v)?,
            "halfwidth" => self.halfwidth = parse_opt(key, v)?,
            "delta" => self.delta = parse(key, v)?,
            "c1" => self.c1 = parse(key, v)?,
            "rho" => self.rho = parse_opt(key, v)?,
            "replicates" => self.replicates = parse(key, v)?,
            "random_clique" => self.random_clique = parse(key, v)?,
            "m_grid" => self.m_grid = parse_list(key, v)?,
            "theta_grid" => self.theta_grid = parse_list(key, v)?,
            "k_grid" => self.k_grid = parse_list(key, v)?,
            "n_grid" => self.n_grid = parse_list(key, v)?,
            "target" => self.target = parse_opt(key, v)?,
            "max_subsets" => self.max_subsets = parse(key, v)?,
            "strict_scan" => self.strict_scan = parse(key, v)?,
            "format" => self.format = parse(key, v)?,
            "input" => self.input = parse_opt(key, v)?,
            "out" => self.out = parse_opt(key, v)?,
            _ => return usage(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string());
        vec![
            ("command", self.command.name().to_string()),
            ("n", show(&self.n)),
            ("k", show(&self.k)),
            ("theta1", show(&self.theta1)),
            ("field", self.field.to_string()),
            ("quenched", self.quenched.to_string()),
            ("clique", show_list(&self.clique)),
            ("hypothesis", self.hypothesis.to_string()),
            ("m", show(&self.m)),
            ("seed", self.seed.to_string()),
            ("test", show(&self.test)),
            ("method", show(&self.method)),
            ("threshold", show(&self.threshold)),
            ("halfwidth", show(&self.halfwidth)),
            ("delta", self.delta.to_string()),
            ("c1", self.c1.to_string()),
            ("rho", show(&self.rho)),
            ("replicates", self.replicates.to_string()),
            ("random_clique", self.random_clique.to_string()),
            ("m_grid", show_list(&self.m_grid)),
            ("theta_grid", show_list(&self.theta_grid)),
            ("k_grid", show_list(&self.k_grid)),
            ("n_grid", show_list(&self.n_grid)),
            ("target", show(&self.target)),
            ("max_subsets", self.max_subsets.to_string()),
            ("strict_scan", self.strict_scan.to_string()),
            ("format", self.format.to_string()),
            ("input", path(&self.input)),
            ("out", path(&self.out)),
        ]
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Usage<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), value).map_err(|e| UsageError(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// `# key = value` lines echoing every resolved setting.
    pub fn header(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("# {k} = {v}\n")).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.entries().into_iter().map(|(k, v)| (k.to_string(), serde_json::Value::String(v))).collect(),
        )
    }

    /// Rebuilds a config from the leading `# key = value` block of an output file.
    pub fn from_header(text: &str) -> Usage<RunConfig> {
        let mut body = String::new();
        for line in text.lines() {
            let Some(rest) = line.strip_prefix("# ") else { break };
            if !rest.contains(" = ") {
                break;
            }
            body.push_str(rest);
            body.push('\n');
        }
        RunConfig::from_text(&body)
    }

    pub fn from_text(text: &str) -> Usage<RunConfig> {
        let command = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == "command")
            .ok_or_else(|| UsageError("no command key".into()))?
            .1;
        let mut cfg = RunConfig::new(parse("command", command.trim())?);
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_json(value: &serde_json::Value) -> Usage<RunConfig> {
        let obj = value.as_object().ok_or_else(|| UsageError("config must be an object".into()))?;
        let text: String = obj
            .iter()
            .map(|(k, v)| format!("{k} = {}\n", v.as_str().unwrap_or_default()))
            .collect();
        RunConfig::from_text(&text)
    }

    /// Fills defaults that depend on other settings and checks per-command requirements.
    pub fn resolve(&mut self) -> Usage<()> {
        let needs_model = matches!(
            self.command,
            Command::Sample | Command::Test | Command::Recover | Command::Power | Command::Phase
        );
        if self.theta1.is_some_and(|t| !(t >= 0.0 && t.is_finite())) {
            return usage("theta1 must be a finite non-negative number");
        }
        if self.k == Some(0) {
            self.k = None;
        }
        if needs_model && self.hypothesis == Hypothesis::Alternative && self.theta1.is_some() && self.k.is_none() {
            return usage("an alternative needs --k (or pass --hypothesis null)");
        }
        if let (Some(n), Some(k)) = (self.n, self.k) {
            if k > n {
                return usage(format!("k = {k} exceeds n = {n}"));
            }
        }
        if let Some(k) = self.k {
            if self.clique.is_none() && self.hypothesis == Hypothesis::Alternative && self.input.is_none() {
                self.clique = Some((0..k).collect());
            }
            if let Some(c) = &self.clique {
                if c.len() != k {
                    return usage(format!("clique has {} indices, k = {k}", c.len()));
                }
            }
        }
        if self.out.is_some() && self.out == self.input {
            return usage("--out must differ from --input");
        }
        if self.replicates == 0 {
            return usage("replicates must be positive");
        }
        let require = |ok: bool, what: &str| if ok { Ok(()) } else { usage(format!("{} needs {what}", self.command.name())) };
        match self.command {
            Command::Analyze => require(self.theta1.is_some(), "--theta1")?,
            Command::Sample => {
                require(self.n.is_some(), "--n")?;
                require(self.m.is_some(), "--m")?;
            }
            Command::Test | Command::Recover => {
                require(self.k.is_some(), "--k")?;
                require(self.theta1.is_some(), "--theta1")?;
                if self.input.is_none() {
                    require(self.n.is_some(), "--n or --input")?;
                    require(self.m.is_some(), "--m or --input")?;
                }
            }
            Command::Power => {
                require(self.n.is_some() && self.k.is_some() && self.theta1.is_some(), "--n, --k and --theta1")?;
                require(self.m_grid.is_some(), "--m-grid")?;
            }
            Command::Phase => {
                require(self.n.is_some() && self.k.is_some() && self.m.is_some(), "--n, --k and --m")?;
                require(self.theta_grid.is_some() && self.k_grid.is_some(), "--theta-grid and --k-grid")?;
                if self.theta1.is_none() {
                    self.theta1 = Some(0.0);
                }
            }
            Command::VerifyClt => {
                require(self.theta1.is_some(), "--theta1")?;
                require(self.n_grid.is_some(), "--n-grid")?;
            }
            Command::CheckBounds => require(self.n.is_some() && self.k.is_some(), "--n and --k")?,
        }
        if self.command == Command::Recover && self.method.is_none() {
            self.method = Some(RecoveryMethod::Scan);
        }
        Ok(())
    }
}
