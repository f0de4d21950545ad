mod config;
mod output;
mod scenarios;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use growth_euler::Error;

use config::{Loaded, Scenario};
use output::{Check, RunOutput};

#[derive(Parser)]
#[command(name = "growth-euler", version, about = "Scenario runner for the growth-euler diagnostics")]
struct Cli {
    /// cap on worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// output directory, overriding the config's `out`
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario
    Run { config: PathBuf },
    /// Rerun a scenario with (n, 1/dt) doubled per level
    Convergence {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Hypothesis(String),
    BlowUp(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Hypothesis(_) => 3,
            Failure::BlowUp(_) => 4,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Hypothesis(m) | Failure::BlowUp(m) | Failure::Other(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::BadArgument(_) | Error::InvalidFunction(_) | Error::Parse(_) => Failure::Config(m),
            Error::HypothesisViolation(_)
            | Error::TierRequired { .. }
            | Error::EnvelopeFailure { .. }
            | Error::DivergentIntegral { .. } => Failure::Hypothesis(m),
            Error::BlowUp { .. } => Failure::BlowUp(m),
            Error::Io(_) | Error::SingularPoint | Error::EmptyField => Failure::Other(m),
        }
    }
}

fn run_one(l: &Loaded) -> Result<(), Failure> {
    let mut out = RunOutput::new(&l.cfg.out)?;
    scenarios::run(l, &mut out)?;
    out.finish("run", &l.cfg, None)
}

/// Metrics tracked across levels; `true` marks an error whose observed order is reported.
fn level_metrics(l: &Loaded) -> Vec<(String, bool)> {
    match l.cfg.scenario {
        Scenario::Kirchhoff => vec![("omega_rel_error".into(), true)],
        Scenario::RankineSteady => vec![("centroid_drift".into(), false), ("probe_drift".into(), true)],
        Scenario::SerfatiResidual => l.cfg.lambdas.iter().map(|x| (format!("residual_lambda_{x}"), true)).collect(),
        Scenario::PairShift | Scenario::PairAmplitude => vec![("aT".into(), false), ("M_T".into(), false)],
        Scenario::GrowthboundAudit | Scenario::MorreySweep => vec![],
    }
}

fn convergence(base: &Loaded, levels: usize) -> Result<(), Failure> {
    if levels < 2 {
        return Err(Failure::Config(format!("levels must be at least 2, got {levels}")));
    }
    let metrics = level_metrics(base);
    if metrics.is_empty() {
        return Err(Failure::Config(format!("{} has no resolution to refine", base.cfg.scenario)));
    }
    let mut values: Vec<BTreeMap<String, f64>> = Vec::new();
    let mut rows = Vec::new();
    for k in 0..levels {
        let mut l = base.clone();
        l.cfg.n = base.cfg.n << k;
        l.cfg.dt = base.cfg.dt / (1u64 << k) as f64;
        l.cfg.out = base.cfg.out.join(format!("level_{k}"));
        println!("level {k}: n = {}, dt = {}", l.cfg.n, l.cfg.dt);
        run_one(&l)?;
        let text = std::fs::read_to_string(l.cfg.out.join("manifest.json")).map_err(|e| Failure::Other(e.to_string()))?;
        let m: serde_json::Value = serde_json::from_str(&text).map_err(|e| Failure::Other(e.to_string()))?;
        let mut got = BTreeMap::new();
        for (name, _) in &metrics {
            got.insert(name.clone(), m["measured"][name].as_f64().unwrap_or(f64::NAN));
        }
        rows.push((k, l.cfg.n, l.cfg.dt));
        values.push(got);
    }

    let mut out = RunOutput::new(&base.cfg.out)?;
    let mut csv = String::from("level,n,dt,metric,value,observed_order\n");
    let mut orders: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, &(k, n, dt)) in rows.iter().enumerate() {
        for (name, is_err) in &metrics {
            let v = values[i][name];
            let order = if *is_err && i > 0 { (values[i - 1][name] / v).log2() } else { f64::NAN };
            if order.is_finite() {
                orders.entry(name.clone()).or_default().push(order);
            }
            let ord = if order.is_nan() { String::new() } else { format!("{order:?}") };
            csv.push_str(&format!("{k},{n},{dt:?},{name},{v:?},{ord}\n"));
        }
    }
    out.write("convergence.csv", &csv)?;
    for (name, is_err) in &metrics {
        let series: Vec<f64> = values.iter().map(|v| v[name]).collect();
        out.info.insert(
            format!("levels {name}"),
            series.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" -> "),
        );
        if *is_err {
            let first = series[0];
            let last = *series.last().unwrap();
            let mean_order = (first / last).log2() / (levels - 1) as f64;
            out.measure(&format!("order_{name}"), mean_order);
        }
    }
    match base.cfg.scenario {
        Scenario::SerfatiResidual => {
            for (name, _) in &metrics {
                let s: Vec<f64> = values.iter().map(|v| v[name]).collect();
                let dec = s.windows(2).all(|w| w[1] < w[0]);
                out.check(Check::new(&format!("{name}_decreasing"), dec, *s.last().unwrap(), "strictly decreasing"));
            }
        }
        Scenario::Kirchhoff => {
            let o = out.measured["order_omega_rel_error"];
            out.check(Check::new("omega_error_order", o >= 1.0, o, ">= 1"));
        }
        Scenario::RankineSteady => {
            let worst = values.iter().map(|v| v["centroid_drift"]).fold(0.0, f64::max);
            out.check(Check::new("centroid_drift_every_level", worst <= 1e-8, worst, "<= 1e-8"));
        }
        _ => {}
    }
    let extra = serde_json::json!({ "levels": levels, "orders": orders });
    out.finish("convergence", &base.cfg, Some(extra))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = (|| {
        if let Some(t) = cli.threads {
            if t == 0 {
                return Err(Failure::Config("--threads must be positive".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| Failure::Other(e.to_string()))?;
        }
        let path = match &cli.cmd {
            Cmd::Run { config } | Cmd::Convergence { config, .. } => config,
        };
        let mut l = config::load(path)?;
        if let Some(o) = &cli.out {
            l.cfg.out = o.clone();
        }
        match cli.cmd {
            Cmd::Run { .. } => run_one(&l),
            Cmd::Convergence { levels, .. } => convergence(&l, levels),
        }
    })();
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
