use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use growthlab::fpp::EdgeEnvironment;
use growthlab::lattice::{LatticeBox, Point};
use growthlab::lawcore::{check_conditions, WeightLaw};
use growthlab::mclab::{self, ExperimentConfig, ExperimentOutput, FitModel, FluctuationReport, Model, ReplicaRecord};
use growthlab::oracle::{run_oracle, OracleModel, POLYMER_REL_TOL};
use growthlab::rng::StreamKey;

mod plot;

/// Exit statuses. 0 is success.
const EXIT_DIAGNOSTIC: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "growthlab", version, about = "Coupled Monte Carlo for planar growth models")]
struct Cli {
    /// Seed; overrides the seed in a config file
    #[arg(long, global = true, env = "GROWTHLAB_SEED")]
    seed: Option<u64>,

    /// Worker threads for replica farms
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Tabular output format; JSON reports are always written
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Also write SVG plots
    #[arg(long, global = true)]
    plot: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a weight law against the model assumptions
    CheckLaw {
        /// Law as inline JSON or a path to a JSON file
        law: String,
    },
    /// Run a coupled experiment from a config file
    Run {
        config: PathBuf,
        /// Refuse to run unless the config is for this model
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
    },
    /// Compare the solvers against brute-force enumeration
    Oracle {
        #[arg(value_enum)]
        model: ModelArg,
        /// Box radius for fpp, path length for lpp and polymer
        #[arg(long)]
        size: u32,
        /// Number of consecutive seeds
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Inverse temperature for the polymer oracle
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
    },
    /// Fit a scaling law across n to a report
    Scaling {
        /// A report.json written by `run` or `report-merge`
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Statistic::Variance)]
        stat: Statistic,
        #[arg(long, value_enum, default_value_t = FitArg::Power)]
        fit: FitArg,
    },
    /// Merge run directories that differ only in seed and replica count
    ReportMerge {
        #[arg(required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
    },
    /// Write one sampled fpp edge field as JSON
    DumpEnv {
        law: String,
        #[arg(long)]
        radius: u32,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Fpp,
    Lpp,
    Polymer,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Statistic {
    Variance,
    Width50,
    Width75,
    Width90,
    MeanDelta,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FitArg {
    Power,
    SqrtLog,
}

/// Embedded in every file the tool writes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct InvocationRecord {
    tool: String,
    version: String,
    command: String,
    config: Value,
    seed: Option<u64>,
    workers: usize,
    wall_time_s: f64,
    outputs: Vec<String>,
}

impl InvocationRecord {
    fn new(command: &str, config: Value, seed: Option<u64>, workers: usize) -> Self {
        InvocationRecord {
            tool: "growthlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            seed,
            workers,
            wall_time_s: 0.0,
            outputs: Vec::new(),
        }
    }
}

struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn config_err(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_CONFIG, err: err.into() }
}

fn diag(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_DIAGNOSTIC, err: err.into() }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        diag(err)
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli) -> CmdResult {
    if cli.workers == Some(0) {
        return Err(config_err(anyhow!("--workers must be >= 1")));
    }
    match &cli.command {
        Command::CheckLaw { law } => cmd_check_law(cli, law),
        Command::Run { config, model } => cmd_run(cli, config, *model),
        Command::Oracle { model, size, seeds, beta } => cmd_oracle(cli, *model, *size, *seeds, *beta),
        Command::Scaling { report, stat, fit } => cmd_scaling(cli, report, *stat, *fit),
        Command::ReportMerge { runs } => cmd_merge(cli, runs),
        Command::DumpEnv { law, radius } => cmd_dump_env(cli, law, *radius),
    }
}

/// Inline JSON if it looks like an object, a file path otherwise.
fn read_json_arg(arg: &str) -> Result<String, Failure> {
    if arg.trim_start().starts_with('{') {
        Ok(arg.to_string())
    } else {
        fs::read_to_string(arg).with_context(|| format!("reading {arg}")).map_err(config_err)
    }
}

fn parse_law(arg: &str) -> Result<WeightLaw, Failure> {
    let text = read_json_arg(arg)?;
    serde_json::from_str(&text).map_err(|e| config_err(anyhow!("law: {e}")))
}

fn out_dir(cli: &Cli) -> Result<Option<PathBuf>, Failure> {
    match &cli.out {
        None => Ok(None),
        Some(d) => {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display())).map_err(diag)?;
            Ok(Some(d.clone()))
        }
    }
}

fn write_file(dir: &Path, name: &str, body: &str, inv: &mut InvocationRecord) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display())).map_err(diag)?;
    inv.outputs.push(name.to_string());
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn csv_with_header<F>(inv: &InvocationRecord, fill: F) -> anyhow::Result<String>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> anyhow::Result<()>,
{
    let mut buf = Vec::new();
    writeln!(buf, "# invocation: {}", serde_json::to_string(inv)?)?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        fill(&mut w)?;
        w.flush()?;
    }
    Ok(String::from_utf8(buf)?)
}

#[derive(Serialize)]
struct Wrapped<'a, T> {
    invocation: &'a InvocationRecord,
    #[serde(flatten)]
    body: &'a T,
}

fn cmd_check_law(cli: &Cli, arg: &str) -> CmdResult {
    let law = parse_law(arg)?;
    let report = check_conditions(&law);
    let inv = InvocationRecord::new("check-law", serde_json::to_value(&law).unwrap(), None, 1);
    match cli.format {
        Format::Json => {
            eprintln!("law: {}", serde_json::to_string(&law).unwrap());
            eprintln!("  nondegenerate          {}", report.nondegenerate);
            eprintln!("  undirected (P(X=s)<1/2) {}", report.passes_undirected);
            eprintln!("  directed bond          {}", report.passes_directed_bond);
            eprintln!("  directed site          {}", report.passes_directed_site);
            print!("{}", to_json(&Wrapped { invocation: &inv, body: &report }));
        }
        Format::Csv => {
            let v = serde_json::to_value(&report).unwrap();
            let text = csv_with_header(&inv, |w| {
                w.write_record(["field", "value"])?;
                for (k, v) in v.as_object().unwrap() {
                    w.write_record([k.as_str(), &v.to_string()])?;
                }
                Ok(())
            })?;
            print!("{text}");
        }
    }
    Ok(0)
}

fn load_config(cli: &Cli, path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(config_err)?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| config_err(anyhow!("{}: {e}", path.display())))?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(w) = cli.workers {
        config.workers = Some(w);
    }
    config.validate().map_err(config_err)?;
    Ok(config)
}

fn model_of(m: ModelArg) -> Model {
    match m {
        ModelArg::Fpp => Model::Fpp,
        ModelArg::Lpp => Model::Lpp,
        ModelArg::Polymer => Model::Polymer,
    }
}

fn write_run(cli: &Cli, dir: &Path, out: &ExperimentOutput, inv: &mut InvocationRecord) -> Result<(), Failure> {
    // file names are fixed up front so that every file can list them all
    let mut names = vec!["report.json".to_string(), "replicas.jsonl".to_string()];
    if cli.format == Format::Csv {
        names.push("summary.csv".into());
        names.push("tail.csv".into());
    }
    if cli.plot {
        names.push("widths.svg".into());
        names.push("tail.svg".into());
    }
    inv.outputs = names;
    let written = inv.clone();
    let mut sink = InvocationRecord { outputs: Vec::new(), ..inv.clone() };

    write_file(dir, "report.json", &to_json(&Wrapped { invocation: &written, body: &out.report }), &mut sink)?;

    let mut lines = serde_json::to_string(&serde_json::json!({ "invocation": &written })).unwrap();
    lines.push('\n');
    for r in &out.records {
        lines.push_str(&serde_json::to_string(r).unwrap());
        lines.push('\n');
    }
    write_file(dir, "replicas.jsonl", &lines, &mut sink)?;

    if cli.format == Format::Csv {
        let summary = csv_with_header(&written, |w| {
            w.write_record([
                "n", "replicas", "alpha", "tv_bound", "mean", "variance", "width50", "width75", "width90",
                "delta_mean", "best_kappa", "best_tail", "pathwise_violations", "boundary_touches",
            ])?;
            for r in &out.report.per_n {
                w.write_record([
                    r.n.to_string(),
                    r.replicas.to_string(),
                    r.calibration.alpha.to_string(),
                    r.calibration.tv_bound.to_string(),
                    r.observable.mean.to_string(),
                    r.observable.variance.to_string(),
                    r.widths[0].width.to_string(),
                    r.widths[1].width.to_string(),
                    r.widths[2].width.to_string(),
                    r.delta.mean.to_string(),
                    r.best_tail.kappa.to_string(),
                    r.best_tail.prob.to_string(),
                    r.pathwise_violations.to_string(),
                    r.boundary_touches.to_string(),
                ])?;
            }
            Ok(())
        })?;
        write_file(dir, "summary.csv", &summary, &mut sink)?;
        let tail = csv_with_header(&written, |w| {
            w.write_record(["n", "kappa", "threshold", "prob", "se"])?;
            for r in &out.report.per_n {
                for t in &r.tail {
                    w.write_record([
                        r.n.to_string(),
                        t.kappa.to_string(),
                        t.threshold.to_string(),
                        t.prob.to_string(),
                        t.se.to_string(),
                    ])?;
                }
            }
            Ok(())
        })?;
        write_file(dir, "tail.csv", &tail, &mut sink)?;
    }
    if cli.plot {
        let meta = serde_json::to_string(&written).unwrap();
        write_file(dir, "widths.svg", &plot::widths(&out.report, &meta), &mut sink)?;
        write_file(dir, "tail.svg", &plot::tails(&out.report, &meta), &mut sink)?;
    }
    Ok(())
}

fn cmd_run(cli: &Cli, path: &Path, model: Option<ModelArg>) -> CmdResult {
    let start = Instant::now();
    let config = load_config(cli, path)?;
    if let Some(m) = model {
        if model_of(m) != config.model {
            return Err(config_err(anyhow!("--model {m:?} does not match the config's model {:?}", config.model)));
        }
    }
    let dir = out_dir(cli)?.ok_or_else(|| config_err(anyhow!("run needs --out")))?;
    let out = mclab::run_coupled_experiment(&config).map_err(diag)?;
    let mut inv = InvocationRecord::new(
        "run",
        serde_json::to_value(config.echo()).unwrap(),
        Some(config.seed),
        config.worker_count(),
    );
    inv.wall_time_s = start.elapsed().as_secs_f64();
    write_run(cli, &dir, &out, &mut inv)?;
    report_status(&out.report)
}

fn report_status(r: &FluctuationReport) -> CmdResult {
    eprintln!(
        "{} replicas, {} pathwise violations, {} interval-cap violations, {} boundary touches",
        r.replicas, r.pathwise_violations, r.cap_violations, r.boundary_touches
    );
    for n in &r.per_n {
        eprintln!(
            "  n={:<6} alpha={:.6} tv<={:.4} width75={:.4} best P(delta >= {:.2} sqrt(log n))={:.3}",
            n.n, n.calibration.alpha, n.calibration.tv_bound, n.widths[1].width, n.best_tail.kappa, n.best_tail.prob
        );
    }
    if r.pathwise_violations + r.cap_violations + r.boundary_touches > 0 {
        Ok(EXIT_DIAGNOSTIC)
    } else {
        Ok(0)
    }
}

fn cmd_oracle(cli: &Cli, model: ModelArg, size: u32, seeds: u64, beta: f64) -> CmdResult {
    let om = match model {
        ModelArg::Fpp => OracleModel::Fpp,
        ModelArg::Lpp => OracleModel::Lpp,
        ModelArg::Polymer => OracleModel::Polymer,
    };
    let first = cli.seed.unwrap_or(0);
    let rows = run_oracle(om, size, beta, first, seeds).map_err(config_err)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    let config = serde_json::json!({ "model": om, "size": size, "seeds": seeds, "beta": beta });
    let inv = InvocationRecord::new("oracle", config, Some(first), 1);
    match cli.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Table<'a> {
                rows: &'a [growthlab::oracle::OracleRow],
                passed: usize,
                failed: usize,
            }
            let t = Table { rows: &rows, passed: rows.len() - failed, failed };
            print!("{}", to_json(&Wrapped { invocation: &inv, body: &t }));
        }
        Format::Csv => {
            let text = csv_with_header(&inv, |w| {
                for r in &rows {
                    w.serialize(r)?;
                }
                Ok(())
            })?;
            print!("{text}");
        }
    }
    let tol = if om == OracleModel::Polymer { format!(" (relative {POLYMER_REL_TOL:e})") } else { " (exact)".into() };
    eprintln!("{} comparisons, {} failed{tol}", rows.len(), failed);
    Ok(if failed == 0 { 0 } else { EXIT_DIAGNOSTIC })
}

#[derive(Deserialize)]
struct ReportFile {
    invocation: InvocationRecord,
    #[serde(flatten)]
    report: FluctuationReport,
}

fn read_report(path: &Path) -> Result<ReportFile, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(config_err)?;
    serde_json::from_str(&text).map_err(|e| config_err(anyhow!("{}: {e}", path.display())))
}

fn cmd_scaling(cli: &Cli, path: &Path, stat: Statistic, fit: FitArg) -> CmdResult {
    let file = read_report(path)?;
    let table: Vec<(f64, f64)> = file
        .report
        .per_n
        .iter()
        .map(|r| {
            let s = match stat {
                Statistic::Variance => r.observable.variance,
                Statistic::Width50 => r.widths[0].width,
                Statistic::Width75 => r.widths[1].width,
                Statistic::Width90 => r.widths[2].width,
                Statistic::MeanDelta => r.delta.mean,
            };
            (f64::from(r.n), s)
        })
        .collect();
    let model = match fit {
        FitArg::Power => FitModel::PowerInN,
        FitArg::SqrtLog => FitModel::SqrtLogN,
    };
    let result = mclab::scaling_fit(&table, model).map_err(diag)?;
    let config = serde_json::json!({
        "report": path.display().to_string(),
        "stat": format!("{stat:?}").to_lowercase(),
        "source": file.invocation.config,
    });
    let inv = InvocationRecord::new("scaling", config, file.invocation.seed, 1);
    #[derive(Serialize)]
    struct Out<'a> {
        table: &'a [(f64, f64)],
        fit: &'a mclab::ScalingFit,
    }
    let body = Out { table: &table, fit: &result };
    match cli.format {
        Format::Json => print!("{}", to_json(&Wrapped { invocation: &inv, body: &body })),
        Format::Csv => {
            let text = csv_with_header(&inv, |w| {
                w.write_record(["n", "statistic"])?;
                for (n, s) in &table {
                    w.write_record([n.to_string(), s.to_string()])?;
                }
                Ok(())
            })?;
            print!("{text}");
        }
    }
    eprintln!("exponent {:.6}, intercept {:.6}, r2 {:.6}", result.exponent, result.intercept, result.r2);
    Ok(0)
}

fn read_run(dir: &Path) -> Result<ExperimentOutput, Failure> {
    let file = read_report(&dir.join("report.json"))?;
    let path = dir.join("replicas.jsonl");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display())).map_err(config_err)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let r: ReplicaRecord =
            serde_json::from_str(line).map_err(|e| config_err(anyhow!("{}:{}: {e}", path.display(), i + 1)))?;
        records.push(r);
    }
    Ok(ExperimentOutput { report: file.report, records })
}

fn cmd_merge(cli: &Cli, runs: &[PathBuf]) -> CmdResult {
    let start = Instant::now();
    let dir = out_dir(cli)?.ok_or_else(|| config_err(anyhow!("report-merge needs --out")))?;
    let outputs = runs.iter().map(|d| read_run(d)).collect::<Result<Vec<_>, _>>()?;
    let merged = mclab::merge_outputs(&outputs).map_err(config_err)?;
    let sources: Vec<String> = runs.iter().map(|p| p.display().to_string()).collect();
    let config = serde_json::json!({ "merged": sources, "config": merged.report.config });
    let mut inv = InvocationRecord::new("report-merge", config, Some(merged.report.config.seed), 1);
    inv.wall_time_s = start.elapsed().as_secs_f64();
    write_run(cli, &dir, &merged, &mut inv)?;
    report_status(&merged.report)
}

fn cmd_dump_env(cli: &Cli, arg: &str, radius: u32) -> CmdResult {
    let law = parse_law(arg)?;
    let seed = cli.seed.unwrap_or(0);
    let env = EdgeEnvironment::sample(&law, StreamKey::new(seed), LatticeBox::new(Point::ORIGIN, radius)).map_err(config_err)?;
    let config = serde_json::json!({ "law": law, "radius": radius });
    let inv = InvocationRecord::new("dump-env", config, Some(seed), 1);
    print!("{}", to_json(&Wrapped { invocation: &inv, body: &env.dump() }));
    Ok(0)
}
