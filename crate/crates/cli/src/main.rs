mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use prfcw::harness::{self, ExperimentPlan, Param, Procedure, SweepAxis, SweepResult};
use prfcw::landscape::analyze;
use prfcw::scan::ScanPolicy;
use prfcw::statistics::{run_test, TestOverrides};
use prfcw::{recovery, sampler, FieldMode, ModelSpec, SpinSample, TestId, TestReport, TestSetting};
use serde_json::json;

use config::{Command, Format, Hypothesis, RunConfig, UsageError};

#[derive(Parser)]
#[command(name = "prfcw", version, about = "Planted-clique detection in random-field Curie–Weiss models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Regime, fixed points and limiting variances as JSON
    Analyze(Flags),
    /// Draw i.i.d. spin configurations
    Sample(Flags),
    /// Run one detection test on a sample file or a fresh draw
    Test(Flags),
    /// Estimate the clique from a sample file or a fresh draw
    Recover(Flags),
    /// Power and Type I error over an m grid
    Power(Flags),
    /// Power over a (theta1 / theta_c, k / n) grid
    Phase(Flags),
    /// Whole-system fluctuation checks over an n grid
    VerifyClt(Flags),
    /// Exact overlap-probability bound check
    CheckBounds(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// Flat `key = value` file or an earlier output (its `out` is dropped); flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    theta1: Option<String>,
    /// e.g. "twopoint(0.5,-0.5,0.5)", "gaussian(mean=0, sd=1)"
    #[arg(long)]
    field: Option<String>,
    /// One shared field realization for all observations
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    quenched: Option<String>,
    /// Comma-separated 0-based indices; defaults to 0..k
    #[arg(long)]
    clique: Option<String>,
    /// alternative | null
    #[arg(long)]
    hypothesis: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Test id, e.g. high_local, low_global, sdp; chosen from the regime when absent
    #[arg(long)]
    test: Option<String>,
    /// scan | screen | rowsum | spectral
    #[arg(long)]
    method: Option<String>,
    /// Threshold override
    #[arg(long)]
    threshold: Option<String>,
    /// Half-width of the agnostic local test
    #[arg(long)]
    halfwidth: Option<String>,
    /// Target error level
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    c1: Option<String>,
    /// Spectral soft-threshold level
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    /// Redraw the clique uniformly per replicate
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    random_clique: Option<String>,
    #[arg(long)]
    m_grid: Option<String>,
    /// theta1 / theta_c values
    #[arg(long)]
    theta_grid: Option<String>,
    /// k / n values
    #[arg(long)]
    k_grid: Option<String>,
    #[arg(long)]
    n_grid: Option<String>,
    /// Power target for the sample-complexity search
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    max_subsets: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    strict_scan: Option<String>,
    /// csv | json | binary
    #[arg(long)]
    format: Option<String>,
    /// Sample file (CSV or binary)
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl Flags {
    fn pairs(&self) -> [(&'static str, &Option<String>); 28] {
        [
            ("n", &self.n),
            ("k", &self.k),
            ("theta1", &self.theta1),
            ("field", &self.field),
            ("quenched", &self.quenched),
            ("clique", &self.clique),
            ("hypothesis", &self.hypothesis),
            ("m", &self.m),
            ("seed", &self.seed),
            ("test", &self.test),
            ("method", &self.method),
            ("threshold", &self.threshold),
            ("halfwidth", &self.halfwidth),
            ("delta", &self.delta),
            ("c1", &self.c1),
            ("rho", &self.rho),
            ("replicates", &self.replicates),
            ("random_clique", &self.random_clique),
            ("m_grid", &self.m_grid),
            ("theta_grid", &self.theta_grid),
            ("k_grid", &self.k_grid),
            ("n_grid", &self.n_grid),
            ("target", &self.target),
            ("max_subsets", &self.max_subsets),
            ("strict_scan", &self.strict_scan),
            ("format", &self.format),
            ("input", &self.input),
            ("out", &self.out),
        ]
    }
}

fn build_config(cmd: Cmd) -> std::result::Result<RunConfig, UsageError> {
    let (command, flags) = match cmd {
        Cmd::Analyze(f) => (Command::Analyze, f),
        Cmd::Sample(f) => (Command::Sample, f),
        Cmd::Test(f) => (Command::Test, f),
        Cmd::Recover(f) => (Command::Recover, f),
        Cmd::Power(f) => (Command::Power, f),
        Cmd::Phase(f) => (Command::Phase, f),
        Cmd::VerifyClt(f) => (Command::VerifyClt, f),
        Cmd::CheckBounds(f) => (Command::CheckBounds, f),
    };
    let mut cfg = RunConfig::new(command);
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        cfg = if text.trim_start().starts_with('{') {
            let doc: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(doc.get("config").unwrap_or(&doc))?
        } else if text.starts_with("# command = ") {
            RunConfig::from_header(&text)?
        } else {
            cfg.apply_text(&text)?;
            cfg
        };
        cfg.command = command;
        cfg.out = None;
    }
    for (key, value) in flags.pairs() {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.resolve()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let cfg = match build_config(cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}\nhint: run `prfcw <command> --help` for the flag list");
            return ExitCode::from(2);
        }
    };
    match dispatch(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cfg: &RunConfig) -> Result<()> {
    match cfg.command {
        Command::Analyze => cmd_analyze(cfg),
        Command::Sample => cmd_sample(cfg),
        Command::Test => cmd_test(cfg),
        Command::Recover => cmd_recover(cfg),
        Command::Power => cmd_power(cfg),
        Command::Phase => cmd_phase(cfg),
        Command::VerifyClt => cmd_verify_clt(cfg),
        Command::CheckBounds => cmd_check_bounds(cfg),
    }
}

fn sink(cfg: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn emit_json(cfg: &RunConfig, key: &str, value: serde_json::Value) -> Result<()> {
    let mut w = sink(cfg)?;
    let mut doc = serde_json::Map::new();
    doc.insert("config".into(), cfg.to_json());
    doc.insert(key.into(), value);
    serde_json::to_writer_pretty(&mut w, &serde_json::Value::Object(doc))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn model_spec(cfg: &RunConfig) -> ModelSpec<f64> {
    let n = cfg.n.unwrap_or(0);
    let spec = match (&cfg.clique, cfg.hypothesis) {
        (Some(c), Hypothesis::Alternative) => ModelSpec::planted(n, c.clone(), cfg.theta1.unwrap_or(0.0), cfg.field.clone()),
        _ => ModelSpec::null(n, cfg.field.clone()),
    };
    if cfg.quenched {
        spec.with_field_mode(FieldMode::Quenched { values: None })
    } else {
        spec
    }
}

fn scan_policy(cfg: &RunConfig) -> ScanPolicy {
    ScanPolicy { max_subsets: cfg.max_subsets, strict: cfg.strict_scan }
}

fn setting(cfg: &RunConfig, n: usize) -> TestSetting<f64> {
    TestSetting { n, k: cfg.k.unwrap_or(0), theta1: cfg.theta1.unwrap_or(0.0), field: cfg.field.clone() }
}

fn overrides(cfg: &RunConfig) -> TestOverrides<f64> {
    TestOverrides { test: cfg.test, threshold: cfg.threshold, delta: cfg.halfwidth, scan: scan_policy(cfg) }
}

/// Sample from `--input`, or a fresh draw together with its planted set.
fn data(cfg: &RunConfig) -> Result<(SpinSample, Option<Vec<usize>>)> {
    match &cfg.input {
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            Ok((SpinSample::read_any(&bytes)?, cfg.clique.clone()))
        }
        None => {
            let spec = model_spec(cfg);
            let s = sampler::sample(&spec, cfg.m.unwrap_or(0), cfg.seed)?;
            Ok((s, spec.clique))
        }
    }
}

fn cmd_analyze(cfg: &RunConfig) -> Result<()> {
    let a = analyze(&cfg.field, cfg.theta1.unwrap_or(0.0))?;
    emit_json(cfg, "analysis", serde_json::to_value(a)?)
}

fn cmd_sample(cfg: &RunConfig) -> Result<()> {
    let spec = model_spec(cfg);
    let s = sampler::sample(&spec, cfg.m.unwrap_or(0), cfg.seed)?;
    log::info!("drew {} x {} spins, spec digest {}", s.m, s.n(), s.digest_hex());
    match cfg.format {
        Format::Csv => {
            let mut w = sink(cfg)?;
            w.write_all(cfg.header().as_bytes())?;
            s.write_csv(&mut w)?;
            w.flush()?;
        }
        Format::Binary => {
            let mut w = sink(cfg)?;
            s.write_binary(&mut w)?;
            w.flush()?;
            if let Some(p) = &cfg.out {
                let mut side = p.clone().into_os_string();
                side.push(".cfg");
                std::fs::write(&side, cfg.header())?;
            }
        }
        Format::Json => {
            let rows: Vec<Vec<i8>> = s.spins.rows().into_iter().map(|r| r.to_vec()).collect();
            emit_json(
                cfg,
                "sample",
                json!({ "n": s.n(), "m": s.m, "seed": s.seed, "digest": s.digest_hex(), "spins": rows }),
            )?;
        }
    }
    Ok(())
}

fn cmd_test(cfg: &RunConfig) -> Result<()> {
    let (s, _) = data(cfg)?;
    let setting = setting(cfg, s.n());
    let report: TestReport<f64> = if cfg.test == Some(TestId::Sdp) {
        recovery::sdp_test(&setting, &s, cfg.c1)?
    } else {
        run_test(&setting, &s, &overrides(cfg))?
    };
    match cfg.format {
        Format::Json => emit_json(cfg, "report", serde_json::to_value(report)?),
        _ => {
            let mut w = sink(cfg)?;
            write!(w, "{}{}\n{}\n", cfg.header(), TestReport::<f64>::CSV_HEADER, report.csv_row())?;
            w.flush()?;
            Ok(())
        }
    }
}

fn cmd_recover(cfg: &RunConfig) -> Result<()> {
    let (s, truth) = data(cfg)?;
    let setting = setting(cfg, s.n());
    let method = cfg.method.unwrap_or(recovery::RecoveryMethod::Scan);
    let mut report = recovery::recover(method, &setting, &s, cfg.rho, scan_policy(cfg))?;
    if let Some(t) = truth {
        report = report.with_truth(&t);
    }
    match cfg.format {
        Format::Json => emit_json(cfg, "report", serde_json::to_value(report)?),
        _ => {
            let mut w = sink(cfg)?;
            write!(w, "{}{}\n{}\n", cfg.header(), recovery::RecoveryReport::CSV_HEADER, report.csv_row())?;
            let est: Vec<String> = report.estimate.iter().map(|i| i.to_string()).collect();
            writeln!(w, "# estimate: {}", est.join(" "))?;
            w.flush()?;
            Ok(())
        }
    }
}

fn plan(cfg: &RunConfig, m: usize, sweep: Vec<SweepAxis>) -> ExperimentPlan<f64> {
    let procedure = if let Some(method) = cfg.method {
        Procedure::Recover { method, rho: cfg.rho, scan: scan_policy(cfg) }
    } else if cfg.test == Some(TestId::Sdp) {
        Procedure::Sdp { c1: cfg.c1 }
    } else {
        Procedure::Test { overrides: overrides(cfg) }
    };
    let mut spec = model_spec(cfg);
    if spec.is_null() {
        spec = ModelSpec::planted(spec.n, (0..cfg.k.unwrap_or(1)).collect(), cfg.theta1.unwrap_or(0.0), cfg.field.clone())
            .with_field_mode(spec.field_mode);
    }
    ExperimentPlan {
        base_spec: spec,
        m,
        procedure,
        sweep,
        replicates: cfg.replicates,
        delta: cfg.delta,
        seed: cfg.seed,
        random_clique: cfg.random_clique,
    }
}

fn run_sweep(p: &ExperimentPlan<f64>) -> Result<SweepResult> {
    let mut result = harness::power_curve(p)?;
    if !matches!(p.procedure, Procedure::Recover { .. }) {
        result.rows.extend(harness::type_i_curve(p)?.rows);
    }
    Ok(result)
}

fn emit_sweep(cfg: &RunConfig, result: &SweepResult, extra: serde_json::Value) -> Result<()> {
    match cfg.format {
        Format::Json => emit_json(cfg, "result", json!({ "rows": result.rows, "summary": extra })),
        _ => {
            let mut w = sink(cfg)?;
            w.write_all(cfg.header().as_bytes())?;
            w.write_all(result.to_csv().as_bytes())?;
            if let Some(obj) = extra.as_object() {
                for (k, v) in obj {
                    writeln!(w, "# {k}: {v}")?;
                }
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn cmd_power(cfg: &RunConfig) -> Result<()> {
    let grid = cfg.m_grid.clone().unwrap_or_default();
    let axis = SweepAxis { param: Param::M, values: grid.iter().map(|&m| m as f64).collect() };
    let p = plan(cfg, grid.first().copied().unwrap_or(1).max(1), vec![axis]);
    let result = run_sweep(&p)?;
    let mut extra = serde_json::Map::new();
    if let Some(target) = cfg.target {
        match harness::sample_complexity(&p, &grid, target) {
            Ok(sc) => {
                extra.insert("m_star".into(), json!(sc.m_star));
            }
            Err(prfcw::Error::NotReached { best, m, .. }) => {
                log::warn!("target {target} not reached; best {best} at m = {m}");
                extra.insert("m_star".into(), json!(null));
            }
            Err(e) => return Err(e.into()),
        }
    }
    emit_sweep(cfg, &result, serde_json::Value::Object(extra))
}

fn cmd_phase(cfg: &RunConfig) -> Result<()> {
    let sweep = vec![
        SweepAxis { param: Param::ThetaRatio, values: cfg.theta_grid.clone().unwrap_or_default() },
        SweepAxis { param: Param::KFraction, values: cfg.k_grid.clone().unwrap_or_default() },
    ];
    let p = plan(cfg, cfg.m.unwrap_or(1), sweep);
    let result = run_sweep(&p)?;
    emit_sweep(cfg, &result, json!({}))
}

fn cmd_verify_clt(cfg: &RunConfig) -> Result<()> {
    let n_grid = cfg.n_grid.clone().unwrap_or_default();
    let report = harness::verify_clt(&cfg.field, cfg.theta1.unwrap_or(0.0), &n_grid, cfg.replicates, cfg.seed)?;
    let summary = json!({
        "regime": report.regime.regime.name(),
        "target": report.target,
        "conditional_target": report.conditional_target,
        "slope": report.slope,
    });
    emit_sweep(cfg, &report.result, summary)
}

fn cmd_check_bounds(cfg: &RunConfig) -> Result<()> {
    let r = harness::overlap_bound_check(cfg.n.unwrap_or(0), cfg.k.unwrap_or(0))?;
    if !r.all_hold {
        log::warn!("the overlap bound fails for n = {}, k = {}", r.n, r.k);
    }
    match cfg.format {
        Format::Json => emit_json(cfg, "report", serde_json::to_value(&r)?),
        _ => {
            let mut w = sink(cfg)?;
            w.write_all(cfg.header().as_bytes())?;
            writeln!(w, "v,exact,bound,holds")?;
            for row in &r.rows {
                writeln!(w, "{},{:e},{:e},{}", row.v, row.exact, row.bound, row.holds)?;
            }
            writeln!(w, "# max_ratio: {}\n# all_hold: {}", r.max_ratio, r.all_hold)?;
            w.flush()?;
            Ok(())
        }
    }
}
