use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use ustat::jackknife::JackknifeMode;
use ustat::simulation::{RunConfig, Table, CSV_HEADER};
use ustat::tdnn::{studentized_ci, tdnn_jackknife, RegressionDataset, TdnnConfig};
use ustat::verify::{run_all, Suite};

#[derive(Parser)]
#[command(
    name = "ustat",
    version,
    about = "Generalized U-statistics, jackknife variance and TDNN inference"
)]
struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an oracle suite: combinatorics, hoeffding, jackknife, tdnn or all.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Run the experiments in a JSON config, writing CSVs and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Config override as a dotted path, e.g. experiments.0.reps=50.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// TDNN estimate, jackknife variance and interval for a CSV dataset.
    Estimate {
        /// CSV with a header row, k feature columns, then the response.
        data: PathBuf,
        /// Query point, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long)]
        s1: usize,
        #[arg(long)]
        s2: usize,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
}

/// Errors in the invocation or the config rather than in the computation.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Verify { suite } => verify(&suite),
        Command::Run {
            config,
            out,
            seed,
            overrides,
        } => run(&config, &out, seed, &overrides),
        Command::Estimate {
            data,
            x,
            s1,
            s2,
            d,
            level,
        } => estimate(&data, x, s1, s2, d, level),
    }
}

fn verify(suite: &str) -> Result<ExitCode> {
    let checks = if suite == "all" {
        run_all()?
    } else {
        suite.parse::<Suite>().map_err(usage)?.run()?
    };
    let failed = checks.iter().filter(|c| !c.pass).count();
    for c in &checks {
        println!("{c}");
    }
    println!("{} checks, {} failed", checks.len(), failed);
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

/// Sets `path` (dot separated, numeric segments index arrays) to `raw`,
/// parsed as JSON when possible and as a string otherwise.
fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| usage(format!("override `{assignment}` is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for seg in path.split('.') {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        node = match node {
            Value::Array(items) => {
                let i: usize = seg
                    .parse()
                    .map_err(|_| usage(format!("`{seg}` in `{path}` is not an index")))?;
                items
                    .get_mut(i)
                    .ok_or_else(|| usage(format!("index {i} out of range in `{path}`")))?
            }
            Value::Object(map) => map.entry(seg).or_insert(Value::Null),
            _ => return Err(usage(format!("cannot descend into `{seg}` in `{path}`"))),
        };
    }
    *node = value;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a RunConfig,
    started: String,
    finished: String,
    outputs: Vec<OutputEntry>,
}

#[derive(Serialize)]
struct OutputEntry {
    experiment: String,
    path: String,
    rows: usize,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))
}

fn csv_bytes(table: &Table) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for row in &table.rows {
        w.write_record(row.record())?;
    }
    w.into_inner().map_err(|e| anyhow!("flushing csv: {e}"))
}

fn load_config(path: &Path, seed: Option<u64>, overrides: &[String]) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("reading config {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("parsing config {}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    if let Some(s) = seed {
        apply_override(&mut value, &format!("seed={s}"))?;
    }
    let cfg: RunConfig = serde_json::from_value(value)
        .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
    cfg.validate()
        .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
    for exp in &cfg.experiments {
        let name = exp.name();
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(usage(format!(
                "experiment name `{name}` may only use letters, digits, `_` and `-`"
            )));
        }
    }
    Ok(cfg)
}

fn run(config: &Path, out: &Path, seed: Option<u64>, overrides: &[String]) -> Result<ExitCode> {
    let cfg = load_config(config, seed, overrides)?;
    let started = chrono::Utc::now().to_rfc3339();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut outputs = Vec::new();
    for exp in &cfg.experiments {
        let name = exp.name();
        log::info!("running {name}");
        let table = cfg
            .run_one(exp)
            .with_context(|| format!("experiment {name}"))?;
        let file = format!("{name}.csv");
        write_atomic(&out.join(&file), &csv_bytes(&table)?)?;
        outputs.push(OutputEntry {
            experiment: name.to_string(),
            path: file,
            rows: table.rows.len(),
        });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: &cfg,
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        outputs,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_atomic(&out.join("manifest.json"), &bytes)?;
    println!(
        "wrote {} experiment(s) to {}",
        cfg.experiments.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn read_dataset(path: &Path) -> Result<RegressionDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| usage(format!("opening {}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| usage(format!("reading header: {e}")))?
        .clone();
    if header.len() < 2 {
        return Err(usage(
            "expected a header with at least one feature column and a response column",
        ));
    }
    if header.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(usage(
            "the first row looks numeric; a header row is required",
        ));
    }
    let k = header.len() - 1;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| usage(format!("line {line}: {e}")))?;
        if record.len() != header.len() {
            return Err(usage(format!(
                "line {line}: expected {} columns, found {}",
                header.len(),
                record.len()
            )));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                usage(format!(
                    "line {line}, column {} (`{}`): `{field}` is not a number",
                    j + 1,
                    &header[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(usage(format!(
                    "line {line}, column {}: value is not finite",
                    j + 1
                )));
            }
            if j < k {
                x.push(v);
            } else {
                y.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(usage("the data file has no rows"));
    }
    RegressionDataset::new(x, k, y).map_err(|e| usage(e.to_string()))
}

#[derive(Serialize)]
struct EstimateOutput {
    estimate: f64,
    variance: f64,
    ci_lo: f64,
    ci_hi: f64,
    level: f64,
    n: usize,
    k: usize,
    s1: usize,
    s2: usize,
    d: usize,
}

fn estimate(
    path: &Path,
    x: Vec<f64>,
    s1: usize,
    s2: usize,
    d: usize,
    level: f64,
) -> Result<ExitCode> {
    let data = read_dataset(path)?;
    if x.len() != data.k() {
        bail!(usage(format!(
            "--x has {} coordinates but the data has {} feature columns",
            x.len(),
            data.k()
        )));
    }
    let config = TdnnConfig::new(s1, s2, x);
    config
        .validate(data.n(), data.k())
        .map_err(|e| usage(e.to_string()))?;
    if !(level > 0.0 && level < 1.0) {
        return Err(usage(format!("--level must lie in (0, 1), got {level}")));
    }
    let report = tdnn_jackknife(&data, &config, d, JackknifeMode::Exact)
        .map_err(|e| usage(e.to_string()))?;
    let ci = studentized_ci(report.estimate, report.variance, level)?;
    let out = EstimateOutput {
        estimate: ci.estimate,
        variance: ci.variance,
        ci_lo: ci.ci_lo,
        ci_hi: ci.ci_hi,
        level,
        n: data.n(),
        k: data.k(),
        s1,
        s2,
        d,
    };
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", serde_json::to_string(&out)?)?;
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_follow_paths() {
        let mut v: Value =
            serde_json::from_str(r#"{"seed": 1, "experiments": [{"reps": 4}]}"#).unwrap();
        apply_override(&mut v, "experiments.0.reps=9").unwrap();
        apply_override(&mut v, "dgp.k=2").unwrap();
        apply_override(&mut v, "experiments.0.name=fast").unwrap();
        assert_eq!(v["experiments"][0]["reps"], 9);
        assert_eq!(v["dgp"]["k"], 2);
        assert_eq!(v["experiments"][0]["name"], "fast");
        assert!(apply_override(&mut v, "experiments.5.reps=1").is_err());
        assert!(apply_override(&mut v, "noequals").is_err());
    }
}
