use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use cexplain_core::catalog::load_dir;
use cexplain_core::finder::{find, FindOptions, SolverChoice, Strategy, Verdict};
use cexplain_core::ra::{parse, validate_pair};
use cexplain_core::solver::ExternalSolver;
use cexplain_core::Value;

const EXIT_FOUND: u8 = 0;
const EXIT_AGREE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;

#[derive(Parser)]
#[command(name = "cexplain", version, about = "Find small databases on which two queries disagree")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare two relational-algebra queries on a database.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(clap::Args)]
struct CompareArgs {
    /// Schema file (JSON).
    #[arg(long)]
    schema: PathBuf,
    /// Directory holding one `<Relation>.csv` per relation.
    #[arg(long)]
    data: PathBuf,
    /// Reference query file.
    #[arg(long)]
    q1: PathBuf,
    /// Query under test.
    #[arg(long)]
    q2: PathBuf,
    #[arg(long, default_value = "auto", value_parser = parse_strategy)]
    strategy: Strategy,
    /// Models tried per tuple with --legacy-enumerate.
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    max_trials: u32,
    /// `native`, or a command line for an SMT-LIB optimizer (`{file}` is
    /// replaced by a problem file, otherwise the problem goes to stdin).
    #[arg(long, default_value = "native")]
    solver: String,
    /// Also write the SMT-LIB problem to this path.
    #[arg(long)]
    emit_smt: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Seconds before giving up.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
    /// Let HAVING parameters take other values than the given ones.
    #[arg(long)]
    parameterize: bool,
    /// Parameter value, `NAME=VALUE`; repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, Value)>,
    /// JSON object of parameter values.
    #[arg(long)]
    params_file: Option<PathBuf>,
    /// Largest database brute force will enumerate.
    #[arg(long, default_value_t = 16)]
    brute_cap: usize,
    /// Enumerate models per tuple instead of optimizing (basic only).
    #[arg(long)]
    legacy_enumerate: bool,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

fn parse_param(s: &str) -> Result<(String, Value), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let k = k.trim().trim_start_matches('@');
    if k.is_empty() {
        return Err(format!("empty parameter name in `{s}`"));
    }
    Ok((k.to_string(), Value::from_literal(v.trim())))
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("cexplain: {msg}");
    ExitCode::from(code)
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_params(args: &CompareArgs) -> Result<BTreeMap<String, Value>, String> {
    let mut out = BTreeMap::new();
    if let Some(path) = &args.params_file {
        let json: serde_json::Value =
            serde_json::from_str(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
        let obj = json
            .as_object()
            .ok_or_else(|| format!("{}: expected a JSON object", path.display()))?;
        for (k, v) in obj {
            let v = Value::from_json(v).ok_or_else(|| format!("{}: unsupported value for {k}", path.display()))?;
            out.insert(k.clone(), v);
        }
    }
    out.extend(args.params.iter().cloned());
    Ok(out)
}

fn compare(args: CompareArgs) -> ExitCode {
    let db = match load_dir(&args.schema, &args.data) {
        Ok(db) => db,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let mut parsed = Vec::new();
    for path in [&args.q1, &args.q2] {
        let text = match read(path) {
            Ok(t) => t,
            Err(e) => return fail(EXIT_USAGE, e),
        };
        match parse(&text) {
            Ok(q) => parsed.push(q),
            Err(e) => return fail(EXIT_USAGE, format!("{}: {e}", path.display())),
        }
    }
    let q2 = parsed.pop().unwrap();
    let q1 = parsed.pop().unwrap();
    let (q1, q2) = match validate_pair(q1, q2, &db) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let params = match load_params(&args) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let solver = match args.solver.as_str() {
        "native" => SolverChoice::Native,
        cmd => SolverChoice::External(ExternalSolver::new(cmd)),
    };
    let opts = FindOptions {
        strategy: args.strategy,
        max_trials: args.max_trials as usize,
        legacy_enumerate: args.legacy_enumerate,
        parameterize: args.parameterize,
        brute_cap: args.brute_cap,
        timeout: Some(Duration::from_secs(args.timeout)),
        solver,
        emit_smt: args.emit_smt.is_some(),
        ..FindOptions::default()
    };
    let report = match find(&db, &q1, &q2, &params, &opts) {
        Ok(r) => r,
        Err(e) if e.is_timeout() => return fail(EXIT_TIMEOUT, e),
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if let (Some(path), Some(smt)) = (&args.emit_smt, &report.smt) {
        if let Err(e) = std::fs::write(path, smt) {
            return fail(EXIT_USAGE, format!("{}: {e}", path.display()));
        }
    }
    match args.format {
        Format::Json => println!("{}", report.to_json()),
        Format::Table => print!("{}", report.render_table()),
    }
    match report.verdict {
        Verdict::QueriesAgree => {
            eprintln!("queries agree on the test database");
            ExitCode::from(EXIT_AGREE)
        }
        Verdict::Counterexample => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(EXIT_FOUND)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_FOUND });
        }
    };
    match cli.command {
        Command::Compare(args) => compare(args),
    }
}
