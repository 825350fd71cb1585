//! `kepod`: preliminary orbits from one topocentric position and one attributable.
//!
//! Output is JSON (or CSV for batch rows) on stdout or `-o`; `--pretty` swaps
//! it for a human-readable summary. Exit codes: 0 success, 1 usage or input
//! error, 2 no accepted solution or degenerate geometry (`solve`), 3 a failed
//! identity check (`oracle-check`).

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kepod::harness::{
    generate_case, histogram, linear_edges, log_edges, read_rows_csv, run_batch, summarize, write_rows_csv, BatchConfig,
    HarnessConfig, NoiseModel, StatsTable,
};
use kepod::observations::{load_inputs, to_csv, to_json, InputFormat, LoadOptions, ODInput, C_LIGHT, MU_SUN};
use kepod::oracle::{oracle_check, CheckConfig, CheckRow, DEFAULT_RHO2_MAX, DEFAULT_SCAN_POINTS};
use kepod::polysystem::CoefficientDump;
use kepod::select::{select_no_cov, select_with_cov, Metric, SelectionReport, DEFAULT_CHI3_THRESHOLD};
use kepod::solver::{solve_with, SolveReport, SolverConfig};
use kepod::OdError;

const EXIT_USAGE: u8 = 1;
const EXIT_NO_SOLUTION: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "kepod", version, about = "Preliminary orbits from a topocentric position and an attributable")]
struct Cli {
    /// Human-readable summary instead of machine output.
    #[arg(long, global = true)]
    pretty: bool,
    /// Write output here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one input file (JSON, or CSV with one or more rows).
    Solve(SolveArgs),
    /// Write a synthetic input drawn by the harness.
    Generate(GenerateArgs),
    /// Run the synthetic harness and emit one CSV row per case.
    Batch(BatchArgs),
    /// Cross-check the solver against the independent oracles.
    OracleCheck(OracleArgs),
    /// Summarise batch rows: the six statistics columns, optionally a histogram.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct LoadArgs {
    /// Input file.
    #[arg(short, long)]
    input: PathBuf,
    /// Input format; guessed from the extension when absent.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// μ for inputs that omit it (au³/day²).
    #[arg(long, env = "KEPOD_MU", default_value_t = MU_SUN, value_parser = positive)]
    mu: f64,
    /// Speed of light for inputs that omit it (au/day).
    #[arg(long = "c-light", env = "KEPOD_C", default_value_t = C_LIGHT, value_parser = positive)]
    c_light: f64,
}

#[derive(Args, Debug, Clone)]
struct ToleranceArgs {
    /// Largest |Im| of a root treated as real, relative to its modulus.
    #[arg(long, default_value_t = SolverConfig::default().tol_im, value_parser = positive)]
    tol_im: f64,
    /// Roots closer than this (relative) are merged.
    #[arg(long, default_value_t = SolverConfig::default().tol_dup, value_parser = positive)]
    tol_dup: f64,
    /// Largest normalised residual of an accepted candidate.
    #[arg(long, default_value_t = SolverConfig::default().tol_accept, value_parser = positive)]
    tol_accept: f64,
    /// Largest element mismatch between the two epochs.
    #[arg(long, default_value_t = SolverConfig::default().tol_elem, value_parser = positive)]
    tol_elem: f64,
    #[arg(long, default_value_t = SolverConfig::default().pivot_eps, value_parser = positive)]
    pivot_eps: f64,
    #[arg(long, default_value_t = SolverConfig::default().cluster_rel, value_parser = positive)]
    cluster_rel: f64,
}

impl ToleranceArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tol_im: self.tol_im,
            tol_dup: self.tol_dup,
            tol_accept: self.tol_accept,
            tol_elem: self.tol_elem,
            pivot_eps: self.pivot_eps,
            cluster_rel: self.cluster_rel,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for InputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => InputFormat::Json,
            Format::Csv => InputFormat::Csv,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SelectMode {
    /// With covariance when the input carries one, otherwise without.
    Auto,
    None,
    Distance,
    Chi3,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Paper,
    Weighted,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Paper => Metric::Paper,
            MetricArg::Weighted => Metric::Weighted,
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    load: LoadArgs,
    #[command(flatten)]
    tol: ToleranceArgs,
    #[arg(long, value_enum, default_value_t = SelectMode::Auto)]
    select: SelectMode,
    #[arg(long, value_enum, default_value_t = MetricArg::Paper)]
    metric: MetricArg,
    #[arg(long, default_value_t = DEFAULT_CHI3_THRESHOLD, value_parser = positive)]
    chi3_threshold: f64,
    /// Include every polynomial coefficient in the output.
    #[arg(long)]
    dump_coeffs: bool,
}

#[derive(Args, Debug, Clone)]
struct HarnessArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Arc length t̄₂ - t₁ in days.
    #[arg(long, default_value_t = 20.0, value_parser = positive)]
    span: f64,
    /// Largest velocity rotation at t₁, in degrees; 0 disables the kick.
    #[arg(long, default_value_t = 0.0)]
    kick_deg: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_angle: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_rho: f64,
}

impl HarnessArgs {
    fn config(&self) -> Result<HarnessConfig, String> {
        if self.kick_deg < 0.0 || self.noise_angle < 0.0 || self.noise_rate < 0.0 || self.noise_rho < 0.0 {
            return Err("kick and noise sigmas must be non-negative".into());
        }
        Ok(HarnessConfig {
            seed: self.seed,
            span: self.span,
            kick_max: self.kick_deg.to_radians(),
            noise: NoiseModel { sigma_angle: self.noise_angle, sigma_rate: self.noise_rate, sigma_rho: self.noise_rho },
            ..Default::default()
        })
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    harness: HarnessArgs,
    /// Number of cases; more than one requires CSV.
    #[arg(short = 'n', long, default_value_t = 1)]
    count: u64,
    /// First case index.
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct BatchArgs {
    #[command(flatten)]
    harness: HarnessArgs,
    #[command(flatten)]
    tol: ToleranceArgs,
    #[arg(short = 'n', long, default_value_t = 100)]
    cases: u64,
    /// Worker threads; all cores when absent.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Do not retry unsolved cases with a longer arc.
    #[arg(long)]
    no_retry: bool,
    #[arg(long, default_value_t = 1.1, value_parser = positive)]
    retry_factor: f64,
    /// Also write the statistics table as JSON here.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    load: LoadArgs,
    /// Upper end of the ρ₂ scan (au).
    #[arg(long, default_value_t = DEFAULT_RHO2_MAX, value_parser = positive)]
    rho2_max: f64,
    #[arg(long, default_value_t = DEFAULT_SCAN_POINTS)]
    scan_points: usize,
    /// Multi-start Newton seeds.
    #[arg(long, default_value_t = 40)]
    starts: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// CSV rows written by `batch`.
    #[arg(short, long)]
    input: PathBuf,
    /// Add a histogram of this column.
    #[arg(long)]
    histogram: Option<String>,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    bins: u64,
    /// Logarithmic bins over |value|.
    #[arg(long)]
    log: bool,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(_) => Err(format!("{s} is not a positive finite number")),
        Err(e) => Err(e.to_string()),
    }
}

/// Failure of a subcommand, carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<OdError> for Failure {
    fn from(e: OdError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

/// Text written to the output, and the exit code to finish with.
struct Outcome {
    text: String,
    code: u8,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Outcome { text, code: 0 }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help and version are not errors; every other parse failure is usage
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve_cmd(a, cli.pretty),
        Command::Generate(a) => generate_cmd(a),
        Command::Batch(a) => batch_cmd(a, cli.pretty),
        Command::OracleCheck(a) => oracle_cmd(a, cli.pretty),
        Command::Stats(a) => stats_cmd(a, cli.pretty),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(f) => {
            eprintln!("kepod: {}", f.message);
            return ExitCode::from(f.code);
        }
    };
    let written = match &cli.output {
        Some(path) => fs::write(path, &outcome.text),
        None => std::io::stdout().lock().write_all(outcome.text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("kepod: cannot write output: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    ExitCode::from(outcome.code)
}

fn load(a: &LoadArgs) -> Result<Vec<ODInput>, Failure> {
    let format = a.format.map(InputFormat::from).unwrap_or_else(|| InputFormat::from_path(&a.input));
    let opts = LoadOptions { default_mu: a.mu, default_c: a.c_light };
    let inputs = load_inputs(&a.input, format, &opts).map_err(|e| Failure::usage(format!("{}: {e}", a.input.display())))?;
    if inputs.is_empty() {
        return Err(Failure::usage(format!("{}: no input records", a.input.display())));
    }
    Ok(inputs)
}

#[derive(Serialize)]
struct SolveRecord {
    kepod_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<SolveReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selection: Option<SelectionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coefficients: Option<CoefficientDump>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn solve_one(input: &ODInput, a: &SolveArgs) -> (SolveRecord, bool) {
    let cfg = a.tol.config();
    let mut rec = SolveRecord { kepod_version: env!("CARGO_PKG_VERSION"), report: None, selection: None, coefficients: None, error: None };
    let out = match solve_with(input, &cfg) {
        Ok(o) => o,
        Err(e) => {
            rec.error = Some(e.to_string());
            return (rec, false);
        }
    };
    if a.dump_coeffs {
        rec.coefficients = Some(CoefficientDump::from_set(&out.coefficients));
    }
    let solved = out.candidates.iter().any(|c| c.accepted());
    if solved {
        let metric = Metric::from(a.metric);
        let with_cov = match a.select {
            SelectMode::None => None,
            SelectMode::Distance => Some(false),
            SelectMode::Chi3 => Some(true),
            SelectMode::Auto => Some(input.gamma_d().is_some()),
        };
        let selection = match with_cov {
            None => Ok(None),
            Some(false) => select_no_cov(input, &out.candidates, metric).map(Some),
            Some(true) => select_with_cov(input, &out.candidates, metric, a.chi3_threshold).map(Some),
        };
        match selection {
            Ok(s) => rec.selection = s,
            Err(e) => rec.error = Some(format!("selection: {e}")),
        }
    } else {
        rec.error = Some(OdError::NoAcceptedSolutions.to_string());
    }
    rec.report = Some(SolveReport::new(input, &cfg, &out));
    (rec, solved)
}

fn solve_cmd(a: &SolveArgs, pretty: bool) -> Result<Outcome, Failure> {
    let inputs = load(&a.load)?;
    if a.select == SelectMode::Chi3 && inputs.iter().any(|i| i.gamma_d().is_none()) {
        return Err(Failure::usage("--select chi3 needs gamma_p1 and gamma_a2 in every input"));
    }
    let results: Vec<(SolveRecord, bool)> = inputs.iter().map(|i| solve_one(i, a)).collect();
    let code = if results.iter().all(|(_, ok)| *ok) { 0 } else { EXIT_NO_SOLUTION };
    for (rec, _) in &results {
        if let Some(e) = &rec.error {
            eprintln!("kepod: {e}");
        }
    }
    let text = if pretty {
        results.iter().enumerate().map(|(k, (r, _))| pretty_solve(k, r)).collect::<String>()
    } else if results.len() == 1 {
        serde_json::to_string(&results[0].0)? + "\n"
    } else {
        serde_json::to_string(&results.iter().map(|(r, _)| r).collect::<Vec<_>>())? + "\n"
    };
    Ok(Outcome { text, code })
}

fn pretty_solve(k: usize, r: &SolveRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "input #{k}");
    if let Some(rep) = &r.report {
        let _ = writeln!(s, "  sha256 {}", rep.input_sha256);
        let _ = writeln!(s, "  pivot {:?}, resultant degree {}", rep.pivot, rep.resultant_degree);
        let _ = writeln!(s, "  {:>3} {:>14} {:>10} {:>10} {:>9} {:>8} {:>10}", "#", "rho2 [au]", "residual", "elem gap", "accepted", "a [au]", "e");
        for (i, c) in rep.candidates.iter().enumerate() {
            let (a, e) = c.elements2.as_ref().map(|el| (el.a, el.e)).unwrap_or((f64::NAN, f64::NAN));
            let mark = r.selection.as_ref().filter(|sel| sel.chosen_index == i).map(|_| "*").unwrap_or(" ");
            let _ = writeln!(
                s,
                " {mark}{i:>3} {:>14.9} {:>10.2e} {:>10.2e} {:>9} {:>8.4} {:>10.6}",
                c.rho2, c.residual_full, c.element_gap, c.accepted(), a, e
            );
        }
    }
    if let Some(sel) = &r.selection {
        let _ = write!(s, "  chosen #{} by {} metric", sel.chosen_index, sel.metric);
        if let Some(t) = sel.threshold {
            let chi3 = sel.scores.iter().find(|x| x.index == sel.chosen_index).and_then(|x| x.chi3);
            let _ = write!(s, ", chi3 {:.3} (threshold {t})", chi3.unwrap_or(f64::NAN));
        }
        s.push('\n');
    }
    if let Some(e) = &r.error {
        let _ = writeln!(s, "  error: {e}");
    }
    s
}

fn generate_cmd(a: &GenerateArgs) -> Result<Outcome, Failure> {
    let cfg = a.harness.config().map_err(Failure::usage)?;
    if a.count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    if a.count > 1 && a.format == Format::Json {
        return Err(Failure::usage("JSON holds one input; use --format csv for several"));
    }
    let inputs = (a.index..a.index + a.count).map(|i| generate_case(&cfg, i).map(|c| c.input)).collect::<Result<Vec<_>, _>>()?;
    let text = match a.format {
        Format::Json => to_json(&inputs[0])? + "\n",
        Format::Csv => to_csv(&inputs)?,
    };
    Ok(Outcome::ok(text))
}

fn batch_cmd(a: &BatchArgs, pretty: bool) -> Result<Outcome, Failure> {
    let cfg = BatchConfig {
        harness: a.harness.config().map_err(Failure::usage)?,
        solver: a.tol.config(),
        n_cases: a.cases,
        retry: !a.no_retry,
        retry_factor: a.retry_factor,
        threads: a.threads.map(|n| n as usize),
    };
    let out = run_batch(&cfg)?;
    if let Some(path) = &a.stats {
        write_file(path, &(serde_json::to_string_pretty(&out.stats)? + "\n"))?;
    }
    let text = if pretty {
        pretty_stats(&out.stats)
    } else {
        let mut buf = Vec::new();
        write_rows_csv(&mut buf, &out.rows)?;
        String::from_utf8(buf).map_err(|e| Failure::usage(e.to_string()))?
    };
    Ok(Outcome::ok(text))
}

fn oracle_cmd(a: &OracleArgs, pretty: bool) -> Result<Outcome, Failure> {
    let cfg = CheckConfig { rho2_max: a.rho2_max, scan_points: a.scan_points, starts: a.starts, seed: a.seed };
    let inputs = load(&a.load)?;
    let mut all: Vec<Vec<CheckRow>> = Vec::with_capacity(inputs.len());
    for input in &inputs {
        all.push(oracle_check(input, &cfg)?);
    }
    let pass = all.iter().flatten().all(|r| r.pass);
    let text = if pretty {
        let mut s = String::new();
        for (k, rows) in all.iter().enumerate() {
            let _ = writeln!(s, "input #{k}");
            for r in rows {
                let verdict = if r.pass { "PASS" } else { "FAIL" };
                let _ = writeln!(s, "  [{verdict}] {:<40} {:>10.2e} (tol {:.0e}) {}", r.name, r.value, r.tolerance, r.note);
            }
        }
        s
    } else if all.len() == 1 {
        serde_json::to_string(&all[0])? + "\n"
    } else {
        serde_json::to_string(&all)? + "\n"
    };
    Ok(Outcome { text, code: if pass { 0 } else { EXIT_CHECK_FAILED } })
}

#[derive(Serialize)]
struct StatsOutput {
    stats: StatsTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    histogram: Option<kepod::harness::Histogram>,
}

fn stats_cmd(a: &StatsArgs, pretty: bool) -> Result<Outcome, Failure> {
    let rows = read_rows_csv(fs::File::open(&a.input).map_err(|e| Failure::usage(format!("{}: {e}", a.input.display())))?)?;
    let stats = summarize(&rows);
    let hist = match &a.histogram {
        None => None,
        Some(name) => {
            let mut values = kepod::harness::column(&rows, name);
            if values.is_empty() {
                return Err(Failure::usage(format!("column {name:?} is unknown or has no solved rows")));
            }
            let bins = a.bins as usize;
            let edges = if a.log {
                values.iter_mut().for_each(|v| *v = v.abs());
                let pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
                let lo = pos.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = pos.iter().copied().fold(0.0, f64::max);
                if pos.is_empty() || lo == hi {
                    return Err(Failure::usage(format!("column {name:?} has no spread of positive values for log bins")));
                }
                log_edges(lo, hi, bins)
            } else {
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let pad = if hi > lo { 0.0 } else { 0.5 * lo.abs().max(1.0) };
                linear_edges(lo - pad, hi + pad, bins)
            };
            Some(histogram(name, &values, &edges))
        }
    };
    let text = if pretty {
        let mut s = pretty_stats(&stats);
        if let Some(h) = &hist {
            let _ = writeln!(s, "histogram of {}", h.column);
            let top = h.counts.iter().copied().max().unwrap_or(1).max(1);
            for (k, n) in h.counts.iter().enumerate() {
                let bar = "#".repeat((40 * n).div_ceil(top));
                let _ = writeln!(s, "  [{:>11.3e}, {:>11.3e}) {n:>6} {bar}", h.edges[k], h.edges[k + 1]);
            }
        }
        s
    } else {
        serde_json::to_string(&StatsOutput { stats, histogram: hist })? + "\n"
    };
    Ok(Outcome::ok(text))
}

fn pretty_stats(t: &StatsTable) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} cases, {} solved, {} failed, {} retried ({} recovered)",
        t.n_cases, t.n_solved, t.n_failed, t.n_retried, t.n_recovered_by_retry
    );
    let _ = writeln!(s, "  {:<12} {:>12} {:>12}   {:>12} {:>12}", "column", "mean", "std", "ref mean", "ref std");
    for c in &t.columns {
        let r = t.reference.iter().find(|r| r.name == c.name);
        let _ = writeln!(
            s,
            "  {:<12} {:>12.4e} {:>12.4e}   {:>12.4e} {:>12.4e}",
            c.name,
            c.mean,
            c.std,
            r.map_or(f64::NAN, |r| r.mean),
            r.map_or(f64::NAN, |r| r.std)
        );
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}
